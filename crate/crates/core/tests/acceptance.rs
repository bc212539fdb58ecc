//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints its own verdict line, even when an earlier one fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::{brute_force_isotonic, norm, rational_dataset, variance};
use monoloc::frames::{locate_in_frame, PipelineOptions, SyntheticScene};
use monoloc::inference::{asymptotic_covariance_oracle, BootstrapMethod};
use monoloc::profile::score;
use monoloc::simulation::{
    generate, replication_seed, run_coverage_study, table2_grid, AttenuationSpec,
    CovariateSpec, CoverageSpec, ErrorSpec, ScenarioConfig,
};
use monoloc::{estimate_lse, estimate_ssce, pava, Direction, SearchConfig, SensorDataset, WeightedSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fit(y: &[f64], w: &[f64], dir: Direction) -> Vec<f64> {
    let positions = (0..y.len()).map(|i| i as f64).collect();
    pava(&WeightedSeries::new(positions, y.to_vec(), w.to_vec()).unwrap(), dir)
        .values()
        .to_vec()
}

fn random_series(rng: &mut ChaCha8Rng, max_len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=max_len);
    // every third series is rounded to halves, which produces ties
    let coarse = rng.random_range(0..3) == 0;
    let y = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-10.0..10.0);
            if coarse {
                (2.0 * v).round() / 2.0
            } else {
                v
            }
        })
        .collect();
    let w = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
    (y, w)
}

fn pava_matches_enumeration() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let (y, w) = random_series(&mut rng, 8);
        let dir = if k % 2 == 0 { Direction::NonIncreasing } else { Direction::NonDecreasing };
        let got = fit(&y, &w, dir);
        let want = brute_force_isotonic(&y, &w, dir);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-10 && secs < 10.0,
        format!("1000 instances, max deviation {worst:.1e}, {secs:.2} s"),
    )
}

fn isotonic_invariants() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let (y, w) = random_series(&mut rng, 200);
        let dir = if rng.random_bool(0.5) { Direction::NonIncreasing } else { Direction::NonDecreasing };
        let f = fit(&y, &w, dir);
        let scale: f64 = y.iter().zip(&w).map(|(a, b)| (a * b).abs()).sum::<f64>().max(1e-300);
        let resid: f64 = (0..y.len()).map(|i| w[i] * (y[i] - f[i])).sum();
        let orth: f64 = (0..y.len()).map(|i| w[i] * (y[i] - f[i]) * f[i]).sum();
        let orth_scale: f64 = (0..y.len()).map(|i| w[i] * (y[i] * f[i]).abs()).sum::<f64>().max(1e-300);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = 1e-9 * lo.abs().max(hi.abs()).max(1e-300);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let dual = fit(&neg, &w, dir.flipped());
        if resid.abs() > 1e-9 * scale {
            violations += 1;
        }
        if orth.abs() > 1e-9 * orth_scale {
            violations += 1;
        }
        if f.iter().any(|&v| v < lo - span || v > hi + span) {
            violations += 1;
        }
        if f.iter().zip(&dual).any(|(a, b)| (a + b).abs() > 1e-9 * a.abs().max(b.abs()).max(1e-300)) {
            violations += 1;
        }
    }
    check(violations == 0, format!("10000 fits, {violations} violations"))
}

/// First coordinates of the estimates over `reps` replications, plus the
/// number of replications whose fit failed or did not converge.
fn first_coordinates(
    scenario: &ScenarioConfig,
    reps: usize,
    lse: bool,
    config: &SearchConfig,
) -> (Vec<f64>, usize) {
    let out: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = generate(&scenario.clone().with_seed(replication_seed(scenario, r))).ok()?;
            let est = if lse {
                estimate_lse(&data, Direction::NonIncreasing, config)
            } else {
                estimate_ssce(&data, Direction::NonIncreasing, config)
            }
            .ok()?;
            est.converged.then(|| est.theta[0] - scenario.theta0[0])
        })
        .collect();
    let dropped = out.iter().filter(|o| o.is_none()).count();
    (out.into_iter().flatten().collect(), dropped)
}

fn ssce_variance_replication() -> Verdict {
    let n = 1000;
    let s = ScenarioConfig::single_example(n).with_seed(3);
    let (theta, dropped) = first_coordinates(&s, 500, false, &SearchConfig::default());
    let scaled = n as f64 * variance(&theta);
    check(
        (0.60..=0.90).contains(&scaled) && dropped <= 50,
        format!("n*var = {scaled:.3} over {} replications ({dropped} dropped), target [0.60, 0.90]", theta.len()),
    )
}

fn ssce_beats_lse() -> Verdict {
    let n = 500;
    let s = ScenarioConfig::single_example(n).with_seed(4);
    let config = SearchConfig::default();
    let (ssce, d1) = first_coordinates(&s, 200, false, &config);
    let (lse, d2) = first_coordinates(&s, 200, true, &config);
    let (vs, vl) = (variance(&ssce), variance(&lse));
    let f = FisherSnedecor::new((lse.len() - 1) as f64, (ssce.len() - 1) as f64).unwrap();
    let p = 1.0 - f.cdf(vl / vs);
    check(
        vl > vs && p < 0.05,
        format!(
            "n*var SSCE {:.3} vs LSE {:.3}, F = {:.2}, one-sided p = {p:.2e} ({} + {} dropped)",
            n as f64 * vs,
            n as f64 * vl,
            vl / vs,
            d1,
            d2
        ),
    )
}

fn limit_covariance_match() -> Verdict {
    let n = 5000;
    let s = ScenarioConfig::single_example(n).with_seed(5);
    let oracle = asymptotic_covariance_oracle(&s.truth(), 200_000, 5).unwrap();
    let limit = oracle.limit[0][0];
    let (theta, dropped) = first_coordinates(&s, 200, false, &SearchConfig::default());
    let scaled = n as f64 * variance(&theta);
    let rel = (scaled - limit).abs() / limit;
    check(
        rel <= 0.2 && dropped <= 20,
        format!(
            "n*var = {scaled:.3}, limit = {limit:.3} (MC se {:.3}), relative gap {:.1}%, {dropped} dropped",
            oracle.limit_se[0][0],
            100.0 * rel
        ),
    )
}

fn bootstrap_coverage() -> Verdict {
    let n = 600;
    let mut s = table2_grid(n)
        .into_iter()
        .find(|s| s.label() == "exp+unif+normal1")
        .expect("exponential cell");
    s.replications = 200;
    s.seed = 6;
    let spec = CoverageSpec::default();
    let table = run_coverage_study(&[s], &[n], &spec, 0.9).unwrap();
    let row = |m: BootstrapMethod| table.rows.iter().find(|r| r.method == m).unwrap();
    let (mn, wild) = (row(BootstrapMethod::MOutOfN), row(BootstrapMethod::Wild));
    let in_band = (0.83..=0.97).contains(&mn.coverage);
    let lower = wild.coverage < mn.coverage;
    check(
        in_band && lower,
        format!(
            "m-of-n (m = {}) coverage {:.3} [{}], wild {:.3} [{}], failures {} / {}",
            mn.m,
            mn.coverage,
            if in_band { "in band" } else { "outside [0.83, 0.97]" },
            wild.coverage,
            if lower { "lower" } else { "not lower" },
            mn.failures,
            wild.failures
        ),
    )
}

fn noiseless_exactness() -> Verdict {
    let n = 1000;
    let config = SearchConfig::default();
    let mut worst = (0.0f64, 0.0f64);
    let mut misses = Vec::new();
    // the truncated linear attenuation is flat beyond its support, so only
    // the strictly decreasing members of the grid qualify
    for att in [AttenuationSpec::poly(), AttenuationSpec::exp()] {
        let mut s = ScenarioConfig::new(
            att.clone(),
            CovariateSpec::UnifBox { lo: -3.0, hi: 3.0, d: 2 },
            ErrorSpec::normal(0.0),
            n,
        );
        s.theta0 = vec![0.4, -0.7];
        for seed in 0..50u64 {
            let data = generate(&s.clone().with_seed(seed)).unwrap();
            let tol = 1e-4 * data.bounds().diameter();
            match estimate_ssce(&data, Direction::NonIncreasing, &config) {
                Ok(est) => {
                    let err = norm(&[est.theta[0] - 0.4, est.theta[1] + 0.7]);
                    worst = (worst.0.max(err / tol), worst.1.max(est.sse));
                    if err > tol || est.sse > 1e-20 {
                        misses.push(format!("{}#{seed}", att.label()));
                    }
                }
                Err(e) => misses.push(format!("{}#{seed}: {e}", att.label())),
            }
        }
    }
    check(
        misses.is_empty(),
        format!(
            "100 fits, worst error {:.2} tol_step, worst SSE {:.1e}, misses {misses:?}",
            worst.0, worst.1
        ),
    )
}

fn rotation(angle: f64) -> [f64; 4] {
    let (s, c) = angle.sin_cos();
    [c, -s, s, c]
}

fn apply(m: &[f64; 4], t: &[f64]) -> [f64; 2] {
    [m[0] * t[0] + m[1] * t[1], m[2] * t[0] + m[3] * t[1]]
}

/// Zero crossing check done from scratch: at some radius `r` in
/// `tol_step * {1, 2, .., 32}`, every score component takes both signs
/// (zero included) over `theta` and its eight compass neighbours.
fn is_zero_crossing(data: &SensorDataset, theta: &[f64]) -> bool {
    let tol_step = 1e-4 * data.bounds().diameter();
    let at = |t: &[f64]| score(data, t, Direction::NonIncreasing).unwrap();
    let centre = at(theta);
    [1.0, 2.0, 4.0, 8.0, 16.0, 32.0].iter().any(|m| {
        let r = m * tol_step;
        let mut lo = centre.clone();
        let mut hi = centre.clone();
        for k in 0..8 {
            let a = k as f64 * std::f64::consts::FRAC_PI_4;
            for (j, v) in at(&[theta[0] + r * a.cos(), theta[1] + r * a.sin()]).into_iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        lo.iter().zip(&hi).all(|(l, h)| *l <= 0.0 && *h >= 0.0)
    })
}

/// Rotation: the returned point maps to within tol_step, or each fit lands
/// on a zero crossing of the other problem once mapped across. Rotated
/// coordinates cannot be rounded identically, so search paths may part.
fn rotation_agrees(data: &SensorDataset, angle: f64, config: &SearchConfig) -> Result<bool, String> {
    let rot = rotation(angle);
    let back = rotation(-angle);
    let turned = data.rotated(&rot).map_err(|e| e.to_string())?;
    let a = estimate_ssce(data, Direction::NonIncreasing, config).map_err(|e| e.to_string())?;
    let b = estimate_ssce(&turned, Direction::NonIncreasing, config).map_err(|e| e.to_string())?;
    let mapped = apply(&rot, &a.theta);
    if norm(&[b.theta[0] - mapped[0], b.theta[1] - mapped[1]]) <= 1e-4 * data.bounds().diameter() {
        return Ok(true);
    }
    if is_zero_crossing(&turned, &mapped) && is_zero_crossing(data, &apply(&back, &b.theta)) {
        Ok(false)
    } else {
        Err(format!("{:?} and {:?} are not crossings of both problems", a.theta, b.theta))
    }
}

/// Sensor coordinates on a `2^-20` lattice: shifts by multiples of `1/8`
/// are then exact, so translated problems round identically.
fn on_lattice(data: &SensorDataset) -> SensorDataset {
    let q = |v: f64| (v * 1_048_576.0).round() / 1_048_576.0;
    let x = data.x().iter().map(|&v| q(v)).collect();
    SensorDataset::new(x, data.y().to_vec(), 2, Some(data.bounds().clone())).unwrap()
}

fn equivariance() -> Verdict {
    let config = SearchConfig::light();
    let results: Vec<Result<bool, String>> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let data = on_lattice(&rational_dataset(80, [0.2, 0.3], 0.1, 1000 + seed));
            let shift = [3.5 - 0.125 * seed as f64, 0.25 * seed as f64];
            let moved = data.translated(&shift);
            for lse in [false, true] {
                let run = |d: &SensorDataset| {
                    if lse {
                        estimate_lse(d, Direction::NonIncreasing, &config)
                    } else {
                        estimate_ssce(d, Direction::NonIncreasing, &config)
                    }
                    .map_err(|e| e.to_string())
                };
                let (a, b) = (run(&data)?, run(&moved)?);
                if (0..2).any(|k| (b.theta[k] - shift[k] - a.theta[k]).abs() > 1e-9) {
                    return Err(format!("seed {seed}: translation (lse {lse})"));
                }
                let scaled = data
                    .with_responses(data.y().iter().map(|v| 4.0 * v).collect())
                    .map_err(|e| e.to_string())?;
                if run(&scaled)?.theta != a.theta {
                    return Err(format!("seed {seed}: response scale (lse {lse})"));
                }
            }
            rotation_agrees(&data, 0.37 * seed as f64 + 0.1, &config).map_err(|e| format!("seed {seed}: rotation, {e}"))
        })
        .collect();
    let errors: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let exact = results.iter().filter(|r| matches!(r, Ok(true))).count();
    check(
        errors.is_empty(),
        format!(
            "100 instances, {} failures {errors:?}; rotation mapped within tol_step on {exact}, onto another shared crossing on the rest",
            errors.len()
        ),
    )
}

fn frame_pipeline() -> Verdict {
    let (center, radius) = ([120.0, 70.0], 15.0);
    let opts = PipelineOptions { grid: 80, seed: 9, bootstrap: None, ..PipelineOptions::default() };
    let mut lines = Vec::new();
    let mut ok = true;
    for (polarity, want) in [(1.0, Direction::NonIncreasing), (-1.0, Direction::NonDecreasing)] {
        let scene = SyntheticScene::three_channel(150, 200, center, radius, polarity);
        let report = locate_in_frame(&scene.target(11), &scene.backgrounds(40, 12), &opts).unwrap();
        for ch in &report.channels {
            let dist = if ch.theta.len() == 2 {
                norm(&[ch.theta[0] - center[0], ch.theta[1] - center[1]])
            } else {
                f64::INFINITY
            };
            let good = ch.error.is_none() && ch.converged && dist < radius && ch.direction == Some(want);
            ok &= good;
            lines.push(format!("{}{:+}: {dist:.2} px{}", ch.label, polarity, if good { "" } else { " (bad)" }));
        }
    }
    check(ok, format!("distance to centre, radius {radius}: {}", lines.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("PAVA matches block enumeration", pava_matches_enumeration),
        ("isotonic invariants", isotonic_invariants),
        ("SSCE scaled variance, n = 1000", ssce_variance_replication),
        ("SSCE variance below LSE, n = 500", ssce_beats_lse),
        ("variance matches limit covariance, n = 5000", limit_covariance_match),
        ("bootstrap coverage, n = 600", bootstrap_coverage),
        ("noiseless exactness", noiseless_exactness),
        ("equivariance suite", equivariance),
        ("frame pipeline", frame_pipeline),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {} PASS ({name}): {d} [{secs:.1} s]", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} FAIL ({name}): {d} [{secs:.1} s]", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
