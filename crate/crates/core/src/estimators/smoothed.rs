use crate::dataset::SensorDataset;
use crate::error::{MonolocError, Result};
use crate::isotonic::{Direction, MonotoneStepFunction};
use crate::profile::{smoothing_kernel, ProfileWorkspace};

use super::search::Field;
use super::ssce::search;
use super::{LocationEstimate, SearchConfig};

/// Leading constant of the kernel `140 v^3 (1 - v)^3` on `[0, 1]`.
pub const KERNEL_NORMALIZER: f64 = 140.0;

/// Kernel-smoothed derivative of a step function:
/// `h^-1 sum_j K((u - t_j) / h) * jump_j`.
pub fn smoothed_derivative(eta: &MonotoneStepFunction, u: f64, bandwidth: f64) -> f64 {
    eta.jumps()
        .map(|(t, delta)| smoothing_kernel((u - t) / bandwidth) * delta)
        .sum::<f64>()
        / bandwidth
}

/// Bandwidth `0.5 * range(|x_i - c|^2) * n^(-1/7)`, `c` the box centre.
pub fn default_bandwidth(data: &SensorDataset) -> f64 {
    let c = data.bounds().center();
    let (lo, hi) = data.points().fold((f64::INFINITY, 0.0_f64), |(lo, hi), p| {
        let d2: f64 = p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        (lo.min(d2), hi.max(d2))
    });
    let range = if data.is_empty() { 0.0 } else { hi - lo };
    let h = 0.5 * range * (data.len() as f64).powf(-1.0 / 7.0);
    if h > 0.0 {
        h
    } else {
        1.0
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(MonolocError::InvalidBandwidth(h))
    }
}

/// Smoothed score `n^-1 sum_i (y_i - eta(u_i)) eta'_h(u_i) x_i` at `theta`.
pub fn smoothed_score(
    data: &SensorDataset,
    theta: &[f64],
    direction: Direction,
    bandwidth: f64,
) -> Result<Vec<f64>> {
    check_bandwidth(bandwidth)?;
    if data.is_empty() {
        return Err(MonolocError::EmptyInput);
    }
    if theta.len() != data.dim() {
        return Err(MonolocError::DimensionMismatch {
            expected: data.dim(),
            found: theta.len(),
        });
    }
    let mut ws = ProfileWorkspace::new();
    ws.evaluate(data.x(), data.y(), data.dim(), theta, direction, false);
    let mut out = Vec::new();
    ws.smoothed_field(data.x(), data.y(), data.dim(), bandwidth, &mut out);
    Ok(out)
}

/// Zero of the smoothed score, searched like the simple score estimator.
/// Not converged when the fitted attenuation has no jumps at the solution.
pub fn estimate_smoothed_score(
    data: &SensorDataset,
    direction: Direction,
    bandwidth: f64,
    config: &SearchConfig,
) -> Result<LocationEstimate> {
    check_bandwidth(bandwidth)?;
    let (estimate, _) = search(data, direction, config, Field::Smoothed { bandwidth })?;
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_integrates_to_one() {
        let n = 20_000;
        let s: f64 = (0..n)
            .map(|i| smoothing_kernel((i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        assert!((s - 1.0).abs() < 1e-8);
        assert_eq!(smoothing_kernel(-0.1), 0.0);
        assert_eq!(smoothing_kernel(1.1), 0.0);
    }

    #[test]
    fn derivative_of_single_jump() {
        let f = MonotoneStepFunction::new(
            vec![0.0, 1.0],
            vec![3.0, 1.0],
            Direction::NonIncreasing,
            4.0,
        )
        .unwrap();
        let h = 0.5;
        let v: f64 = 0.3;
        let u = 1.0 + v * h;
        let expected = -2.0 * 140.0 * (v * (1.0 - v)).powi(3) / h;
        assert!((smoothed_derivative(&f, u, h) - expected).abs() < 1e-12);
        assert_eq!(smoothed_derivative(&f, 0.99, h), 0.0);
    }

    #[test]
    fn workspace_field_matches_direct_sum() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.7;
                vec![2.0 * a.cos() * (1.0 + 0.02 * i as f64), 1.5 * a.sin()]
            })
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, p)| (-(p[0] * p[0] + p[1] * p[1]) / 3.0).exp() + 0.05 * ((i * 7 % 5) as f64 - 2.0))
            .collect();
        let ds = SensorDataset::from_rows(&rows, y.clone(), None).unwrap();
        let theta = [0.2, -0.1];
        let h = 0.8;
        let fit = crate::profile::profile_fit(&ds, &theta, Direction::NonIncreasing).unwrap();
        let mut direct = [0.0; 2];
        for (i, p) in rows.iter().enumerate() {
            let u = (p[0] - theta[0]).powi(2) + (p[1] - theta[1]).powi(2);
            let r = y[i] - fit.fitted[i];
            let dv = smoothed_derivative(&fit.eta, u, h);
            direct[0] += r * dv * p[0] / rows.len() as f64;
            direct[1] += r * dv * p[1] / rows.len() as f64;
        }
        let got = smoothed_score(&ds, &theta, Direction::NonIncreasing, h).unwrap();
        assert!((got[0] - direct[0]).abs() < 1e-12 && (got[1] - direct[1]).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_bandwidth() {
        let ds = SensorDataset::from_rows(&[vec![0.0], vec![1.0]], vec![1.0, 0.0], None).unwrap();
        assert!(matches!(
            smoothed_score(&ds, &[0.0], Direction::NonIncreasing, 0.0),
            Err(MonolocError::InvalidBandwidth(_))
        ));
        assert!(matches!(
            estimate_smoothed_score(&ds, Direction::NonIncreasing, -1.0, &SearchConfig::light()),
            Err(MonolocError::InvalidBandwidth(_))
        ));
    }
}
