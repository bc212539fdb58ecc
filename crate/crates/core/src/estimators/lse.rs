use crate::dataset::SensorDataset;
use crate::error::{MonolocError, Result};
use crate::isotonic::Direction;

use super::search::{better, lex_less, grid_points, grid_spacing, select_starts, LocalProblem, Resolved};
use super::{LocationEstimate, Method, SearchConfig};

/// Tracks the best evaluated point under (SSE, lexicographic) order.
struct Incumbent {
    sse: f64,
    u: Vec<f64>,
}

impl Incumbent {
    fn offer(&mut self, sse: f64, u: &[f64]) {
        if self.u.is_empty() || better(sse, u, self.sse, &self.u) {
            self.sse = sse;
            self.u = u.to_vec();
        }
    }
}

fn lex_order(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    if lex_less(a, b) {
        std::cmp::Ordering::Less
    } else if lex_less(b, a) {
        std::cmp::Ordering::Greater
    } else {
        std::cmp::Ordering::Equal
    }
}

fn eval_sse(prob: &mut LocalProblem<'_>, u: &[f64]) -> (f64, u64) {
    let cell = prob.eval(u, true);
    prob.record(u, cell.sse, cell);
    (cell.sse, cell.hash)
}

/// Compass search on the piecewise-constant profiled SSE.
///
/// Moves on strict improvement only. The step halves when no axis move helps
/// and the search stops once every neighbour sits in the centre's ranking
/// cell, the step drops below `tol_step`, or the budget runs out.
fn pattern_search(
    prob: &mut LocalProblem<'_>,
    start: &[f64],
    initial_step: &[f64],
    tol_step: f64,
    budget: usize,
    best: &mut Incumbent,
) {
    let bounds = prob.bounds().clone();
    let d = start.len();
    let stop_at = prob.evals + budget;
    let mut centre = start.to_vec();
    bounds.clamp_local(&mut centre);
    let (mut centre_sse, mut centre_hash) = eval_sse(prob, &centre);
    best.offer(centre_sse, &centre);
    let mut step = initial_step.to_vec();

    while prob.evals < stop_at && step.iter().any(|&s| s > tol_step) {
        let mut moved: Option<(f64, u64, Vec<f64>)> = None;
        let mut same_cell = true;
        for k in 0..d {
            for sign in [-1.0, 1.0] {
                let mut p = centre.clone();
                p[k] += sign * step[k];
                bounds.clamp_local(&mut p);
                let (sse, hash) = eval_sse(prob, &p);
                best.offer(sse, &p);
                same_cell &= hash == centre_hash;
                let improves = match &moved {
                    Some((m, _, mp)) => better(sse, &p, *m, mp),
                    None => sse < centre_sse,
                };
                if improves && sse < centre_sse {
                    moved = Some((sse, hash, p));
                }
            }
        }
        match moved {
            Some((sse, hash, p)) => {
                centre = p;
                centre_sse = sse;
                centre_hash = hash;
            }
            None => {
                if same_cell {
                    break;
                }
                step.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
    }
}

/// Profiled least squares estimator: the global minimizer among the
/// evaluated points of `sum (y_i - eta_theta(|theta - x_i|^2))^2`.
///
/// The criterion is piecewise constant in `theta`, so among equal-SSE
/// points the lexicographically smallest (in the box frame) is returned.
pub fn estimate_lse(
    data: &SensorDataset,
    direction: Direction,
    config: &SearchConfig,
) -> Result<LocationEstimate> {
    if data.is_empty() {
        return Err(MonolocError::EmptyInput);
    }
    let res = Resolved::new(config, data);
    let bounds = data.bounds().clone();
    let mut prob = LocalProblem::new(data, direction, config.trace);
    let mut best = Incumbent {
        sse: f64::INFINITY,
        u: Vec::new(),
    };

    let grid = grid_points(&bounds, res.grid);
    let mut scored = Vec::with_capacity(grid.len());
    for u in grid {
        let (sse, _) = eval_sse(&mut prob, &u);
        best.offer(sse, &u);
        scored.push((sse, u));
    }

    let starts = select_starts(&scored, &bounds, res.multistarts, config.seed);
    let step = grid_spacing(&bounds, res.grid);
    let remaining = res.max_evals.saturating_sub(prob.evals);
    let per_start = (remaining / starts.len()).max(4 * data.dim() + 1);
    for start in &starts {
        pattern_search(&mut prob, start, &step, res.tol_step, per_start, &mut best);
    }

    // Plateaus stall compass moves, so keep restarting while it still pays:
    // alternately from the next unused grid point and from a seeded draw.
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| lex_order(&a.1, &b.1)));
    let mut next_grid = res.multistarts.div_ceil(2);
    let mut extra_seed = config.seed;
    let mut stall = 0;
    let mut restart = 0u64;
    while stall < 8 * res.multistarts && prob.evals < res.max_evals {
        let start = if restart % 2 == 0 && next_grid < scored.len() {
            next_grid += 1;
            scored[next_grid - 1].1.clone()
        } else {
            extra_seed = crate::inference::mix64(extra_seed, restart);
            select_starts(&[], &bounds, 1, extra_seed).remove(0)
        };
        restart += 1;
        let before = best.sse;
        let budget = per_start.min(res.max_evals - prob.evals);
        pattern_search(&mut prob, &start, &step, res.tol_step, budget, &mut best);
        stall = if best.sse < before { 0 } else { stall + 1 };
    }

    let theta = bounds.to_world(&best.u);
    let evaluations = prob.evals + 1;
    let trace = prob.trace.take();
    let fit = prob.ws.profile(data, &theta, direction);
    Ok(LocationEstimate {
        objective_at_solution: fit.sse,
        theta,
        eta: fit.eta,
        method: Method::Lse,
        direction,
        evaluations,
        converged: true,
        certified_crossing: false,
        certification_radius: None,
        sse: fit.sse,
        score: fit.score,
        fitted: fit.fitted,
        trace,
    })
}
