use crate::dataset::SensorDataset;
use crate::error::{MonolocError, Result};
use crate::isotonic::Direction;

use super::search::{
    better, certify_at_smallest_radius, grid_points, grid_spacing, nelder_mead, select_starts, Field,
    LocalProblem, Resolved,
};
use super::{LocationEstimate, Method, SearchConfig};

/// Field-norm search; the flag marks a field with no visible crossing.
pub(crate) fn search(
    data: &SensorDataset,
    direction: Direction,
    config: &SearchConfig,
    field: Field,
) -> Result<(LocationEstimate, bool)> {
    if data.is_empty() {
        return Err(MonolocError::EmptyInput);
    }
    let res = Resolved::new(config, data);
    let bounds = data.bounds().clone();
    let mut prob = LocalProblem::new(data, direction, config.trace);

    let grid = grid_points(&bounds, res.grid);
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(grid.len());
    for u in grid {
        let f = prob.field_sq(&u, field);
        scored.push((f, u));
    }
    let (mut best_f, mut best_u) = scored
        .iter()
        .fold((f64::INFINITY, Vec::new()), |(bf, bu), (f, u)| {
            if bu.is_empty() || better(*f, u, bf, &bu) {
                (*f, u.clone())
            } else {
                (bf, bu)
            }
        });

    let mut grid_norms: Vec<f64> = scored.iter().map(|(f, _)| f.sqrt()).collect();
    grid_norms.sort_by(f64::total_cmp);
    let grid_median = grid_norms[grid_norms.len() / 2];

    let target = res.tol_objective * res.tol_objective;
    let d = data.dim();
    let certify = |prob: &mut LocalProblem<'_>, u: &[f64]| {
        let mut buf = Vec::new();
        if !prob.field(u, field, &mut buf) {
            return None;
        }
        certify_at_smallest_radius(
            |p| {
                let mut out = Vec::new();
                prob.field(p, field, &mut out);
                out
            },
            u,
            res.tol_step,
            &bounds,
        )
    };
    // lowest certified local optimum so far: (value, point, radius)
    let mut best_cert: Option<(f64, Vec<f64>, f64)> = None;
    if best_f > target {
        let mut starts = select_starts(&scored, &bounds, res.multistarts, config.seed);
        let step: Vec<f64> = grid_spacing(&bounds, res.grid)
            .iter()
            .map(|s| 0.5 * s)
            .collect();
        let remaining = res.max_evals.saturating_sub(prob.evals);
        let per_start = (remaining / starts.len()).max(20 * (d + 1));
        // extra restarts only when no crossing has been certified
        let max_starts = 4 * starts.len();
        let mut extra_seed = config.seed;
        let mut i = 0;
        while i < starts.len() {
            let nm = nelder_mead(
                |u| prob.field_sq(u, field),
                &starts[i],
                &step,
                &bounds,
                res.tol_step,
                target,
                per_start,
            );
            i += 1;
            if better(nm.value, &nm.best, best_f, &best_u) {
                best_f = nm.value;
                best_u = nm.best.clone();
            }
            if best_f <= target {
                break;
            }
            let improves_cert = best_cert
                .as_ref()
                .is_none_or(|(f, u, _)| better(nm.value, &nm.best, *f, u));
            if improves_cert {
                if let Some(r) = certify(&mut prob, &nm.best) {
                    best_cert = Some((nm.value, nm.best, r));
                }
            }
            let budget_left = prob.evals + per_start <= res.max_evals;
            if i == starts.len() && best_cert.is_none() && starts.len() < max_starts && budget_left {
                extra_seed = crate::inference::mix64(extra_seed, starts.len() as u64);
                starts.extend(select_starts(&[], &bounds, 1, extra_seed));
            }
        }
    }

    // Near zero but not exactly: for exact data the zero set is the cell
    // holding the source, so short tight passes usually land in it.
    let polish_below = 1e4 * target;
    let spacing = grid_spacing(&bounds, res.grid);
    for scale in [0.02, 0.1, 0.005, 0.3] {
        if best_f == 0.0 || best_f > polish_below || prob.evals >= res.max_evals {
            break;
        }
        let step: Vec<f64> = spacing.iter().map(|s| scale * s).collect();
        let budget = (res.max_evals - prob.evals).min(100 * (d + 1));
        let nm = nelder_mead(
            |u| prob.field_sq(u, field),
            &best_u,
            &step,
            &bounds,
            0.01 * res.tol_step,
            0.0,
            budget,
        );
        if better(nm.value, &nm.best, best_f, &best_u) {
            best_f = nm.value;
            best_u = nm.best;
        }
    }
    // When the profile already all but interpolates, large designs have a
    // zero cell far below tol_step, ringed by shallow local minima. Finer
    // passes, then jittered restarts at shrinking radii.
    let total_ss = {
        let y = data.y();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
    };
    let interpolating = best_f > 0.0 && prob.eval(&best_u, false).sse <= 1e-12 * total_ss;
    let mut jitter_seed = crate::inference::mix64(config.seed, 0x6a17);
    for k in 0..63 {
        if !interpolating || best_f == 0.0 || best_f > polish_below || prob.evals >= res.max_evals {
            break;
        }
        let (start, step, tol) = if k < 3 {
            let scale = [0.1, 0.01, 0.001][k];
            (best_u.clone(), scale * res.tol_step, 1e-4 * scale)
        } else {
            let radius = res.tol_step * [1.0, 0.1, 0.01][k % 3];
            let start = best_u
                .iter()
                .map(|&u| {
                    jitter_seed = crate::inference::mix64(jitter_seed, 1);
                    let unit = (jitter_seed >> 11) as f64 / (1u64 << 53) as f64;
                    u + radius * (2.0 * unit - 1.0)
                })
                .collect();
            (start, 0.05 * radius, 1e-6)
        };
        let budget = (res.max_evals - prob.evals).min(100 * (d + 1));
        let nm = nelder_mead(
            |u| prob.field_sq(u, field),
            &start,
            &vec![step; d],
            &bounds,
            tol * res.tol_step,
            0.0,
            budget,
        );
        if better(nm.value, &nm.best, best_f, &best_u) {
            best_f = nm.value;
            best_u = nm.best;
        }
    }

    let objective_any = best_f.sqrt();
    let certification_radius = if best_f <= target {
        certify(&mut prob, &best_u.clone())
    } else if let Some((f, u, r)) = best_cert.take() {
        best_f = f;
        best_u = u;
        Some(r)
    } else {
        certify(&mut prob, &best_u.clone())
    };
    let objective = best_f.sqrt();
    let live = prob.field(&best_u.clone(), field, &mut Vec::new());
    let certified = certification_radius.is_some();
    let converged = live && (objective <= res.tol_objective || certified);
    let flat =
        !converged && objective_any > 1e3 * res.tol_objective && objective_any >= 0.5 * grid_median;

    let theta = bounds.to_world(&best_u);
    let evaluations = prob.evals;
    let trace = prob.trace.take();
    let fit = prob.ws.profile(data, &theta, direction);
    let (objective_at_solution, method) = match field {
        Field::Score => (fit.score_norm(), Method::Ssce),
        Field::Smoothed { .. } => (objective, Method::SmoothedScore),
    };
    let estimate = LocationEstimate {
        objective_at_solution,
        theta,
        eta: fit.eta,
        method,
        direction,
        evaluations: evaluations + 1,
        converged,
        certified_crossing: certified,
        certification_radius,
        sse: fit.sse,
        score: fit.score,
        fitted: fit.fitted,
        trace,
    };
    Ok((estimate, flat))
}

/// Estimate without the no-crossing error, for callers that compare fits.
pub(crate) fn ssce_raw(
    data: &SensorDataset,
    direction: Direction,
    config: &SearchConfig,
) -> Result<LocationEstimate> {
    search(data, direction, config, Field::Score).map(|(e, _)| e)
}

/// Simple score estimator: minimizer of `|n^-1 M_n(theta)|` over the box.
///
/// A coarse grid seeds `multistarts` Nelder-Mead runs on the squared norm.
/// Each local optimum is checked for a zero crossing: every score component
/// changes sign among its axis neighbours at some radius between `tol_step`
/// and `32 * tol_step`. The lowest certified optimum is returned; if none is
/// certified, up to `3 * multistarts` extra random restarts are tried within
/// `max_evals`. `converged` holds when the norm is below `tol_objective` or
/// the returned point is certified.
pub fn estimate_ssce(
    data: &SensorDataset,
    direction: Direction,
    config: &SearchConfig,
) -> Result<LocationEstimate> {
    let (estimate, flat) = search(data, direction, config, Field::Score)?;
    if flat {
        return Err(MonolocError::NoCrossing {
            objective: estimate.objective_at_solution,
        });
    }
    Ok(estimate)
}
