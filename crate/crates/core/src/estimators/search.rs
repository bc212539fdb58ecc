//! Search machinery shared by the estimators: the data expressed in the
//! monitoring region's local frame, the coarse grid, a box-clamped
//! Nelder-Mead, and zero-crossing certification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ParameterBox, SensorDataset};
use crate::isotonic::Direction;
use crate::profile::{CellValue, ProfileWorkspace};

use super::{SearchConfig, TracePoint};

/// Search settings with data-dependent defaults filled in.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Resolved {
    pub grid: usize,
    pub multistarts: usize,
    pub max_evals: usize,
    pub tol_objective: f64,
    pub tol_step: f64,
}

impl Resolved {
    pub fn new(config: &SearchConfig, data: &SensorDataset) -> Self {
        let d = data.dim();
        let scale = (data.response_std() * data.location_spread()).max(f64::MIN_POSITIVE);
        let diameter = data.bounds().diameter();
        Self {
            grid: config.grid_points_per_dim.max(1),
            multistarts: config.multistarts.max(1),
            max_evals: config.max_evals.unwrap_or(5000 * d).max(1),
            tol_objective: config.tol_objective.unwrap_or(1e-6 * scale),
            tol_step: config.tol_step.unwrap_or(1e-4 * diameter),
        }
    }
}

/// Sensors in local coordinates of the monitoring region, so the search
/// works on the box `[lower, upper]` directly.
pub(crate) struct LocalProblem<'a> {
    pub data: &'a SensorDataset,
    pub x: Vec<f64>,
    pub dim: usize,
    pub direction: Direction,
    pub ws: ProfileWorkspace,
    pub evals: usize,
    pub trace: Option<Vec<TracePoint>>,
    scratch: Vec<f64>,
}

/// Vector field whose zero the score-type estimators look for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Field {
    Score,
    Smoothed { bandwidth: f64 },
}

impl<'a> LocalProblem<'a> {
    pub fn new(data: &'a SensorDataset, direction: Direction, trace: bool) -> Self {
        let b = data.bounds();
        let x = if b.rotation().is_none() && b.origin().iter().all(|&o| o == 0.0) {
            data.x().to_vec()
        } else {
            data.points().flat_map(|p| b.to_local(p)).collect()
        };
        Self {
            data,
            x,
            dim: data.dim(),
            direction,
            ws: ProfileWorkspace::new(),
            evals: 0,
            trace: trace.then(Vec::new),
            scratch: Vec::new(),
        }
    }

    pub fn bounds(&self) -> &ParameterBox {
        self.data.bounds()
    }

    /// SSE and local-frame score (left in `self.ws.score`) at local point `u`.
    pub fn eval(&mut self, u: &[f64], with_hash: bool) -> CellValue {
        self.evals += 1;
        let with_hash = with_hash || self.trace.is_some();
        self.ws
            .evaluate(&self.x, self.data.y(), self.dim, u, self.direction, with_hash)
    }

    pub fn record(&mut self, u: &[f64], objective: f64, cell: CellValue) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TracePoint {
                theta: self.data.bounds().to_world(u),
                objective,
                sse: cell.sse,
                ordering_hash: cell.hash,
            });
        }
    }

    /// Field value at `u` written to `out`; false when the field degenerates.
    pub fn field(&mut self, u: &[f64], field: Field, out: &mut Vec<f64>) -> bool {
        let cell = self.eval(u, false);
        let live = match field {
            Field::Score => {
                out.clear();
                out.extend_from_slice(&self.ws.score);
                true
            }
            Field::Smoothed { bandwidth } => {
                self.ws
                    .smoothed_field(&self.x, self.data.y(), self.dim, bandwidth, out)
            }
        };
        let f: f64 = out.iter().map(|s| s * s).sum();
        self.record(u, f.sqrt(), cell);
        live
    }

    /// Squared norm of the field at `u`.
    pub fn field_sq(&mut self, u: &[f64], field: Field) -> f64 {
        let mut out = std::mem::take(&mut self.scratch);
        self.field(u, field, &mut out);
        let f = out.iter().map(|s| s * s).sum();
        self.scratch = out;
        f
    }
}

/// Regular grid over the box, endpoints included, in lexicographic order.
pub(crate) fn grid_points(b: &ParameterBox, per_dim: usize) -> Vec<Vec<f64>> {
    let d = b.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (l, u) = (b.lower()[k], b.upper()[k]);
            if per_dim == 1 {
                vec![0.5 * (l + u)]
            } else {
                (0..per_dim)
                    .map(|i| l + (u - l) * i as f64 / (per_dim - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let total = per_dim.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut p = vec![0.0; d];
        for k in (0..d).rev() {
            p[k] = axes[k][idx % per_dim];
            idx /= per_dim;
        }
        out.push(p);
    }
    out
}

pub(crate) fn grid_spacing(b: &ParameterBox, per_dim: usize) -> Vec<f64> {
    b.lower()
        .iter()
        .zip(b.upper())
        .map(|(l, u)| (u - l) / (per_dim.max(2) - 1) as f64)
        .collect()
}

pub(crate) fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Objective first, then lexicographic position.
pub(crate) fn better(fa: f64, a: &[f64], fb: f64, b: &[f64]) -> bool {
    fa < fb || (fa == fb && lex_less(a, b))
}

/// Starting points: the best grid points followed by seeded uniform draws.
pub(crate) fn select_starts(
    scored_grid: &[(f64, Vec<f64>)],
    b: &ParameterBox,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut ranked: Vec<&(f64, Vec<f64>)> = scored_grid.iter().collect();
    ranked.sort_by(|a, c| {
        a.0.total_cmp(&c.0).then_with(|| {
            if lex_less(&a.1, &c.1) {
                std::cmp::Ordering::Less
            } else if lex_less(&c.1, &a.1) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        })
    });
    let from_grid = count.div_ceil(2).min(ranked.len());
    let mut starts: Vec<Vec<f64>> = ranked[..from_grid].iter().map(|p| p.1.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < count {
        let p = b
            .lower()
            .iter()
            .zip(b.upper())
            .map(|(&l, &u)| l + (u - l) * rng.random::<f64>())
            .collect();
        starts.push(p);
    }
    starts
}

#[derive(Debug, Clone)]
pub(crate) struct NmResult {
    pub best: Vec<f64>,
    pub value: f64,
}

/// Nelder-Mead on `f` with trial points clamped into the box.
///
/// Stops when the simplex fits in a `tol_step` cube around its best vertex,
/// when the best value reaches `f_target`, or after `budget` evaluations.
pub(crate) fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    step: &[f64],
    b: &ParameterBox,
    tol_step: f64,
    f_target: f64,
    budget: usize,
) -> NmResult {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let d = start.len();
    let mut used = 0usize;
    let mut eval = |p: &[f64], used: &mut usize| {
        *used += 1;
        f(p)
    };

    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(d + 1);
    let mut x0 = start.to_vec();
    b.clamp_local(&mut x0);
    simplex.push((eval(&x0, &mut used), x0.clone()));
    for k in 0..d {
        let mut p = x0.clone();
        let s = step[k];
        p[k] += if p[k] + s <= b.upper()[k] { s } else { -s };
        b.clamp_local(&mut p);
        simplex.push((eval(&p, &mut used), p));
    }

    let order = |s: &mut Vec<(f64, Vec<f64>)>| {
        s.sort_by(|a, c| {
            a.0.total_cmp(&c.0).then_with(|| {
                if lex_less(&a.1, &c.1) {
                    std::cmp::Ordering::Less
                } else if lex_less(&c.1, &a.1) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            })
        })
    };

    let mut centroid = vec![0.0; d];
    let trial = |base: &[f64], dir: &[f64], coef: f64| -> Vec<f64> {
        let mut p: Vec<f64> = base
            .iter()
            .zip(dir)
            .map(|(c, w)| c + coef * (c - w))
            .collect();
        b.clamp_local(&mut p);
        p
    };

    loop {
        order(&mut simplex);
        let best = &simplex[0];
        let spread = simplex[1..]
            .iter()
            .map(|(_, p)| {
                p.iter()
                    .zip(&best.1)
                    .map(|(a, c)| (a - c).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if best.0 <= f_target || spread <= tol_step || used >= budget {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (_, p) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let xr = trial(&centroid, &worst.1, ALPHA);
        let fr = eval(&xr, &mut used);
        if fr < simplex[0].0 {
            let xe = trial(&centroid, &worst.1, GAMMA);
            let fe = eval(&xe, &mut used);
            simplex[d] = if fe < fr { (fe, xe) } else { (fr, xr) };
            continue;
        }
        if fr < simplex[d - 1].0 {
            simplex[d] = (fr, xr);
            continue;
        }
        // contraction, outside when the reflection improved on the worst
        let (xc, fc) = if fr < worst.0 {
            let xc = trial(&centroid, &worst.1, RHO);
            let fc = eval(&xc, &mut used);
            (xc, fc)
        } else {
            let xc = trial(&centroid, &worst.1, -RHO);
            let fc = eval(&xc, &mut used);
            (xc, fc)
        };
        if fc < worst.0.min(fr) {
            simplex[d] = (fc, xc);
            continue;
        }
        let anchor = simplex[0].1.clone();
        for (fv, p) in simplex[1..].iter_mut() {
            for (v, a) in p.iter_mut().zip(&anchor) {
                *v = a + SIGMA * (*v - a);
            }
            *fv = eval(p, &mut used);
        }
    }
    order(&mut simplex);
    NmResult {
        best: simplex[0].1.clone(),
        value: simplex[0].0,
    }
}

/// Sign-change certification of a vector field at `u`: for every component,
/// the centre and its `2d` axis neighbours at distance `radius` must contain
/// values of both signs (a product `<= 0`).
/// Radii tried by [`certify_at_smallest_radius`], as multiples of `tol_step`.
pub(crate) const CERTIFY_MULTIPLES: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

/// Smallest radius from [`CERTIFY_MULTIPLES`] at which a crossing is seen.
pub(crate) fn certify_at_smallest_radius<F: FnMut(&[f64]) -> Vec<f64>>(
    mut field: F,
    u: &[f64],
    tol_step: f64,
    b: &ParameterBox,
) -> Option<f64> {
    CERTIFY_MULTIPLES
        .iter()
        .map(|m| m * tol_step)
        .find(|&r| certify_crossing(&mut field, u, r, b))
}

pub(crate) fn certify_crossing<F: FnMut(&[f64]) -> Vec<f64>>(
    mut field: F,
    u: &[f64],
    radius: f64,
    b: &ParameterBox,
) -> bool {
    let d = u.len();
    let centre = field(u);
    let mut lo = centre.clone();
    let mut hi = centre;
    for k in 0..d {
        for sign in [-1.0, 1.0] {
            let mut p = u.to_vec();
            p[k] += sign * radius;
            b.clamp_local(&mut p);
            let v = field(&p);
            for j in 0..d {
                lo[j] = lo[j].min(v[j]);
                hi[j] = hi[j].max(v[j]);
            }
        }
    }
    lo.iter().zip(&hi).all(|(l, h)| l * h <= 0.0)
}
