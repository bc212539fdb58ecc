//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use monoloc::{Direction, SensorDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Weighted isotonic projection by enumerating every split into contiguous
/// blocks and keeping the cheapest monotone block-mean vector. Exponential;
/// only for short series.
pub fn brute_force_isotonic(y: &[f64], w: &[f64], direction: Direction) -> Vec<f64> {
    let n = y.len();
    assert!(n <= 16);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = vec![0.0; n];
        let mut means = Vec::new();
        let mut start = 0;
        for i in 0..n {
            if i == n - 1 || mask >> i & 1 == 1 {
                let sw: f64 = w[start..=i].iter().sum();
                let m = (start..=i).map(|k| w[k] * y[k]).sum::<f64>() / sw;
                fit[start..=i].iter_mut().for_each(|f| *f = m);
                means.push(m);
                start = i + 1;
            }
        }
        let ok = means.windows(2).all(|p| match direction {
            Direction::NonDecreasing => p[0] <= p[1],
            Direction::NonIncreasing => p[0] >= p[1],
        });
        if !ok {
            continue;
        }
        let cost: f64 = (0..n).map(|k| w[k] * (y[k] - fit[k]).powi(2)).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, fit));
        }
    }
    best.unwrap().1
}

/// Weighted isotonic projection by the max-min block-average formula, O(n^3).
pub fn minmax_isotonic(y: &[f64], w: &[f64], direction: Direction) -> Vec<f64> {
    let n = y.len();
    let sign = match direction {
        Direction::NonDecreasing => 1.0,
        Direction::NonIncreasing => -1.0,
    };
    let mut sw = vec![0.0; n + 1];
    let mut swy = vec![0.0; n + 1];
    for k in 0..n {
        sw[k + 1] = sw[k] + w[k];
        swy[k + 1] = swy[k] + w[k] * sign * y[k];
    }
    let avg = |j: usize, k: usize| (swy[k + 1] - swy[j]) / (sw[k + 1] - sw[j]);
    (0..n)
        .map(|i| {
            let v = (0..=i)
                .map(|j| (i..n).map(|k| avg(j, k)).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max);
            sign * v
        })
        .collect()
}

/// Profiled fit at `theta` built from first principles: sort by squared
/// distance, merge exact ties, project with the max-min formula.
pub struct ReferenceProfile {
    pub fitted: Vec<f64>,
    pub sse: f64,
    pub score: Vec<f64>,
}

pub fn reference_profile(data: &SensorDataset, theta: &[f64], direction: Direction) -> ReferenceProfile {
    let n = data.len();
    let d = data.dim();
    let dist: Vec<f64> = (0..n)
        .map(|i| data.point(i).iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if dist[g[0]] == dist[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let gy: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&i| data.y()[i]).sum::<f64>() / g.len() as f64)
        .collect();
    let gw: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let gfit = minmax_isotonic(&gy, &gw, direction);
    let mut fitted = vec![0.0; n];
    for (g, f) in groups.iter().zip(&gfit) {
        for &i in g {
            fitted[i] = *f;
        }
    }
    let mut sse = 0.0;
    let mut score = vec![0.0; d];
    for i in 0..n {
        let r = data.y()[i] - fitted[i];
        sse += r * r;
        for k in 0..d {
            score[k] += r * data.point(i)[k];
        }
    }
    score.iter_mut().for_each(|s| *s /= n as f64);
    ReferenceProfile { fitted, sse, score }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Uniform sensors on `[-3, 3]^2` with `y = 1/(1 + 0.1 |x - theta0|^2) + N(0, sigma^2)`.
pub fn rational_dataset(n: usize, theta0: [f64; 2], sigma: f64, seed: u64) -> SensorDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let u = (p[0] - theta0[0]).powi(2) + (p[1] - theta0[1]).powi(2);
        x.extend_from_slice(&p);
        y.push(1.0 / (1.0 + 0.1 * u) + sigma * rng.sample::<f64, _>(normal));
    }
    let bounds = monoloc::ParameterBox::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
    SensorDataset::new(x, y, 2, Some(bounds)).unwrap()
}

/// Sample variance with the `n - 1` divisor.
pub fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0)
}
