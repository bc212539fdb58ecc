use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::dataset::{ParameterBox, SensorDataset};
use crate::error::{MonolocError, Result};
use crate::inference::TruthSpec;
use crate::isotonic::Direction;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied attenuation with its derivative.
#[derive(Clone)]
pub struct CustomAttenuation {
    pub name: String,
    pub eta: ScalarFn,
    pub eta_prime: ScalarFn,
}

impl fmt::Debug for CustomAttenuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomAttenuation").field("name", &self.name).finish_non_exhaustive()
    }
}

impl PartialEq for CustomAttenuation {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.eta, &other.eta)
    }
}

/// Attenuation `eta0` as a function of squared distance `t`. All kinds are
/// nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttenuationSpec {
    /// `a + (1 + t/b)^(-p)`
    InversePoly { a: f64, b: f64, p: f64 },
    /// `a + exp(-t/b)`
    ExpDecay { a: f64, b: f64 },
    /// `a + (1 - t/c) 1[0 <= t <= c]`; not differentiable at `t = c`.
    TruncLinear { a: f64, c: f64 },
    /// `1 / (1 + 0.1 t)`
    RationalSimple,
    #[serde(skip)]
    Custom(CustomAttenuation),
}

impl AttenuationSpec {
    pub fn custom(
        name: impl Into<String>,
        eta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        eta_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Custom(CustomAttenuation {
            name: name.into(),
            eta: Arc::new(eta),
            eta_prime: Arc::new(eta_prime),
        })
    }

    pub fn poly() -> Self {
        Self::InversePoly { a: 5.0, b: 5.0, p: 3.0 }
    }

    pub fn exp() -> Self {
        Self::ExpDecay { a: 5.0, b: 4.0 }
    }

    pub fn linear() -> Self {
        Self::TruncLinear { a: 5.0, c: 10.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::InversePoly { a, b, p } => a + (1.0 + t / b).powf(-p),
            Self::ExpDecay { a, b } => a + (-t / b).exp(),
            Self::TruncLinear { a, c } => {
                if (0.0..=*c).contains(&t) {
                    a + 1.0 - t / c
                } else {
                    *a
                }
            }
            Self::RationalSimple => 1.0 / (1.0 + 0.1 * t),
            Self::Custom(c) => (c.eta)(t),
        }
    }

    /// Derivative; for the truncated linear kind the left derivative at the kink.
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Self::InversePoly { b, p, .. } => -(p / b) * (1.0 + t / b).powf(-p - 1.0),
            Self::ExpDecay { b, .. } => -(-t / b).exp() / b,
            Self::TruncLinear { c, .. } => {
                if (0.0..=*c).contains(&t) {
                    -1.0 / c
                } else {
                    0.0
                }
            }
            Self::RationalSimple => -0.1 / (1.0 + 0.1 * t).powi(2),
            Self::Custom(c) => (c.eta_prime)(t),
        }
    }

    pub fn direction(&self) -> Direction {
        Direction::NonIncreasing
    }

    /// False for kinds with a kink, which lie outside the smoothness
    /// assumption of the asymptotic theory.
    pub fn is_differentiable(&self) -> bool {
        !matches!(self, Self::TruncLinear { .. })
    }

    pub fn label(&self) -> String {
        match self {
            Self::InversePoly { .. } => "poly".into(),
            Self::ExpDecay { .. } => "exp".into(),
            Self::TruncLinear { .. } => "linear".into(),
            Self::RationalSimple => "rational".into(),
            Self::Custom(c) => c.name.clone(),
        }
    }
}

/// Sensor location law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    /// Independent `Unif[lo, hi]` coordinates.
    UnifBox { lo: f64, hi: f64, d: usize },
    /// `X1 ~ Unif[-3, 3]`, `X2 = 0.2 X1 + 0.8 U` with `U ~ Unif[-3, 3]`.
    CorrelatedUnif,
    /// Standard normal in `d` dimensions.
    GaussianIso { d: usize },
}

impl CovariateSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::UnifBox { d, .. } | Self::GaussianIso { d } => *d,
            Self::CorrelatedUnif => 2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Self::UnifBox { lo, hi, d } => (0..*d).map(|_| rng.random_range(*lo..*hi)).collect(),
            Self::CorrelatedUnif => {
                let x1 = rng.random_range(-3.0..3.0);
                let u = rng.random_range(-3.0..3.0);
                vec![x1, 0.2 * x1 + 0.8 * u]
            }
            Self::GaussianIso { d } => (0..*d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        }
    }

    /// Bounding box of the support, when bounded.
    pub fn support_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::UnifBox { lo, hi, d } => Some((vec![*lo; *d], vec![*hi; *d])),
            Self::CorrelatedUnif => Some((vec![-3.0; 2], vec![3.0; 2])),
            Self::GaussianIso { .. } => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::UnifBox { .. } => "unif",
            Self::CorrelatedUnif => "corr",
            Self::GaussianIso { .. } => "gauss",
        }
    }
}

/// How to read `(-1)^Ber(1) * Beta(2, 3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSign {
    /// Fair random sign, so the error is centred.
    #[default]
    Fair,
    /// `Ber(1) = 1`: the error is `-Beta(2, 3)`, mean `-0.4`.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorBase {
    Normal {
        sigma: f64,
    },
    SignedBeta {
        #[serde(default)]
        sign: BetaSign,
    },
    StudentT {
        nu: f64,
    },
}

/// Error law, optionally scaled by `log(2 + |theta0 - x|^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub base: ErrorBase,
    #[serde(default)]
    pub hetero: bool,
    /// Moment order assumed of the errors; carried as metadata only.
    #[serde(default)]
    pub moment_order_q: Option<u32>,
}

impl ErrorSpec {
    pub fn normal(sigma: f64) -> Self {
        Self {
            base: ErrorBase::Normal { sigma },
            hetero: false,
            moment_order_q: None,
        }
    }

    pub fn signed_beta(sign: BetaSign) -> Self {
        Self {
            base: ErrorBase::SignedBeta { sign },
            hetero: false,
            moment_order_q: None,
        }
    }

    pub fn student_t(nu: f64) -> Self {
        Self {
            base: ErrorBase::StudentT { nu },
            hetero: false,
            moment_order_q: None,
        }
    }

    pub fn heteroscedastic(mut self) -> Self {
        self.hetero = true;
        self
    }

    fn multiplier(&self, u: f64) -> f64 {
        if self.hetero {
            (2.0 + u).ln()
        } else {
            1.0
        }
    }

    /// Draw an error at squared distance `u` from the source.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, u: f64) -> f64 {
        let e = match &self.base {
            ErrorBase::Normal { sigma } => {
                if *sigma == 0.0 {
                    0.0
                } else {
                    Normal::new(0.0, *sigma).expect("finite sigma").sample(rng)
                }
            }
            ErrorBase::SignedBeta { sign } => {
                let b = Beta::new(2.0, 3.0).expect("valid shape").sample(rng);
                match sign {
                    BetaSign::Fair => {
                        if rng.random::<bool>() {
                            b
                        } else {
                            -b
                        }
                    }
                    BetaSign::Literal => -b,
                }
            }
            ErrorBase::StudentT { nu } => StudentT::new(*nu).expect("positive dof").sample(rng),
        };
        e * self.multiplier(u)
    }

    /// Variance of the unscaled base law; infinite for `t` with `nu <= 2`.
    pub fn base_variance(&self) -> f64 {
        match &self.base {
            ErrorBase::Normal { sigma } => sigma * sigma,
            ErrorBase::SignedBeta { sign } => match sign {
                BetaSign::Fair => 0.2,
                BetaSign::Literal => 0.04,
            },
            ErrorBase::StudentT { nu } => {
                if *nu > 2.0 {
                    nu / (nu - 2.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `Var(eps | |theta0 - X|^2 = u)`.
    pub fn conditional_variance(&self, u: f64) -> f64 {
        let m = self.multiplier(u);
        m * m * self.base_variance()
    }

    pub fn label(&self) -> String {
        let base = match &self.base {
            ErrorBase::Normal { sigma } => format!("normal{sigma}"),
            ErrorBase::SignedBeta { sign: BetaSign::Fair } => "beta".into(),
            ErrorBase::SignedBeta { sign: BetaSign::Literal } => "beta_literal".into(),
            ErrorBase::StudentT { nu } => format!("t{nu}"),
        };
        if self.hetero {
            format!("hetero_{base}")
        } else {
            base
        }
    }
}

fn default_replications() -> usize {
    200
}

/// One simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub attenuation: AttenuationSpec,
    pub covariates: CovariateSpec,
    pub errors: ErrorSpec,
    pub theta0: Vec<f64>,
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Monitoring region; defaults to the covariate support box, or the
    /// padded bounding box of the draws for unbounded laws.
    #[serde(default)]
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
}

impl ScenarioConfig {
    pub fn new(
        attenuation: AttenuationSpec,
        covariates: CovariateSpec,
        errors: ErrorSpec,
        n: usize,
    ) -> Self {
        let d = covariates.dim();
        Self {
            name: None,
            attenuation,
            covariates,
            errors,
            theta0: vec![0.0; d],
            n,
            replications: default_replications(),
            seed: 0,
            bounds: None,
        }
    }

    /// `eta0(t) = 1/(1 + 0.1 t)`, `X ~ Unif[-3, 3]^2`, `eps ~ N(0, 0.1^2)`.
    pub fn single_example(n: usize) -> Self {
        let mut s = Self::new(
            AttenuationSpec::RationalSimple,
            CovariateSpec::UnifBox { lo: -3.0, hi: 3.0, d: 2 },
            ErrorSpec::normal(0.1),
            n,
        );
        s.replications = 500;
        s
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!(
                "{}+{}+{}",
                self.attenuation.label(),
                self.covariates.label(),
                self.errors.label()
            )
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.theta0.len() != d {
            return Err(MonolocError::DimensionMismatch {
                expected: d,
                found: self.theta0.len(),
            });
        }
        if self.n == 0 {
            return Err(MonolocError::EmptyInput);
        }
        if let Some((lo, hi)) = self.bounds.as_ref().or(self.covariates.support_box().as_ref()) {
            if self.theta0.iter().zip(lo.iter().zip(hi)).any(|(t, (l, h))| t <= l || t >= h) {
                return Err(MonolocError::InvalidInput(
                    "theta0 must be interior to the monitoring region".into(),
                ));
            }
        }
        Ok(())
    }

    /// Truth for the asymptotic covariance oracle.
    pub fn truth(&self) -> TruthSpec {
        let (att, att_d) = (self.attenuation.clone(), self.attenuation.clone());
        let errors = self.errors.clone();
        let theta0 = self.theta0.clone();
        let t0 = theta0.clone();
        let cov = self.covariates.clone();
        TruthSpec::new(
            theta0,
            move |t| att.eval(t),
            move |t| att_d.derivative(t),
            move |x| {
                let u: f64 = x.iter().zip(&t0).map(|(a, b)| (a - b) * (a - b)).sum();
                errors.conditional_variance(u)
            },
            move |rng| cov.sample(rng),
        )
    }
}

/// Draw a dataset; the same config always gives the same data.
pub fn generate(config: &ScenarioConfig) -> Result<SensorDataset> {
    config.validate()?;
    let d = config.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = Vec::with_capacity(config.n * d);
    let mut y = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let p = config.covariates.sample(&mut rng);
        let u: f64 = p.iter().zip(&config.theta0).map(|(a, b)| (a - b) * (a - b)).sum();
        y.push(config.attenuation.eval(u) + config.errors.sample(&mut rng, u));
        x.extend_from_slice(&p);
    }
    let bounds = match config.bounds.clone().or_else(|| config.covariates.support_box()) {
        Some((lo, hi)) => Some(ParameterBox::new(lo, hi)?),
        None => None,
    };
    SensorDataset::new(x, y, d, bounds)
}

/// Attenuation, covariate and error choices of the full simulation grid.
pub fn table2_grid(n: usize) -> Vec<ScenarioConfig> {
    let atts = [AttenuationSpec::poly(), AttenuationSpec::exp(), AttenuationSpec::linear()];
    let covs = [
        CovariateSpec::CorrelatedUnif,
        CovariateSpec::UnifBox { lo: -3.0, hi: 3.0, d: 2 },
        CovariateSpec::GaussianIso { d: 2 },
    ];
    let homo = [
        ErrorSpec::normal(1.0),
        ErrorSpec::signed_beta(BetaSign::Fair),
        ErrorSpec::student_t(3.0),
        ErrorSpec::student_t(7.0),
    ];
    let errs: Vec<ErrorSpec> = homo
        .iter()
        .cloned()
        .chain(homo.iter().cloned().map(ErrorSpec::heteroscedastic))
        .collect();
    let mut out = Vec::new();
    for a in &atts {
        for c in &covs {
            for e in &errs {
                out.push(ScenarioConfig::new(a.clone(), c.clone(), e.clone(), n));
            }
        }
    }
    out
}
