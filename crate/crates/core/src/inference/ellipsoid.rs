use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `{theta : (theta - center)' shape^+ (theta - center) <= radius^2}`,
/// restricted to the range of `shape` when it is rank deficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub level: f64,
    pub center: Vec<f64>,
    /// Covariance the region is built from, row-major rows.
    pub shape: Vec<Vec<f64>>,
    /// Square root of the chi-square quantile.
    pub radius: f64,
    /// Numerical rank of `shape`.
    pub rank: usize,
    /// Eigenvalues of `shape`, descending, and matching unit eigenvectors.
    pub eigenvalues: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
}

/// Quantile of the chi-square law with `dof` degrees of freedom.
pub fn chi2_quantile(dof: usize, level: f64) -> f64 {
    if level <= 0.0 {
        return 0.0;
    }
    if level >= 1.0 {
        return f64::INFINITY;
    }
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(level)
}

/// Normal-approximation region at `level` for a center and covariance.
/// Directions with eigenvalue below `1e-12 * max eigenvalue` are treated as
/// degenerate: the region has zero extent along them.
pub fn normal_ellipsoid(center: &[f64], covariance: &[Vec<f64>], level: f64) -> Ellipsoid {
    let d = center.len();
    let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (covariance[i][j] + covariance[j][i]));
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order.first().map_or(0.0, |&i| eig.eigenvalues[i].max(0.0));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let axes = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let rank = eigenvalues.iter().filter(|&&l| top > 0.0 && l > 1e-12 * top).count();
    Ellipsoid {
        level,
        center: center.to_vec(),
        shape: (0..d).map(|i| covariance[i][..d].to_vec()).collect(),
        radius: chi2_quantile(d, level).sqrt(),
        rank,
        eigenvalues,
        axes,
    }
}

impl Ellipsoid {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Semi-axis lengths, `radius * sqrt(eigenvalue)`, in eigenvalue order.
    pub fn semi_axes(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .take(self.rank)
            .map(|l| self.radius * l.sqrt())
            .chain(std::iter::repeat_n(0.0, self.dim() - self.rank))
            .collect()
    }

    /// Squared Mahalanobis distance under the pseudo-inverse; infinite when
    /// `theta` leaves the range of the shape matrix.
    pub fn mahalanobis_sq(&self, theta: &[f64]) -> f64 {
        let diff: Vec<f64> = theta.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let scale = diff.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let mut q = 0.0;
        for (k, axis) in self.axes.iter().enumerate() {
            let proj: f64 = axis.iter().zip(&diff).map(|(a, b)| a * b).sum();
            if k < self.rank {
                q += proj * proj / self.eigenvalues[k];
            } else if proj.abs() > 1e-12 * scale {
                return f64::INFINITY;
            }
        }
        q
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.mahalanobis_sq(theta) <= self.radius * self.radius
    }
}
