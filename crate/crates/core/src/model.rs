//! Markov-modulated perpetuity models.
//!
//! A model is a finite irreducible chain with transition kernel `K(x, y)`,
//! a per-state increment law `gamma(x, xi)` driving the accumulated rate
//! process `S`, and a non-negative per-state reward law `lambda(x, eta)`.
//! The discounted reward at scale `delta` evolves as
//! `D_{n+1} = D_n + lambda_{n+1} * delta * exp(S_{n+1})`.
//!
//! Increment families are closed-form only: tilted sampling and the CGF
//! `chi(x, theta) = ln E exp(theta * gamma(x, xi))` must both be exact, so
//! arbitrary empirical laws are not representable.

use crate::error::{CoreError, Result};
use crate::matrix::SquareMatrix;
use crate::special::ln_gamma;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Per-state law of the additive increment `gamma(x, xi)`.
#[derive(Debug, Clone, PartialEq)]
pub enum IncrementFamily {
    /// `gamma = ln c + ln W` with `W ~ chi-square(1)`. CGF is
    /// `theta ln(2c) + ln Gamma(theta + 1/2) - ln Gamma(1/2)`, finite for
    /// `theta > -1/2`. Exponential tilting at `theta` turns `W` into
    /// `Gamma(theta + 1/2, scale 2)` exactly.
    LogChiSquareShifted { c: f64 },
    /// Gaussian increment; tilting is a pure mean shift.
    Normal { mean: f64, sd: f64 },
}

impl IncrementFamily {
    /// Open interval of `theta` on which the CGF is finite.
    pub fn cgf_domain(&self) -> (f64, f64) {
        match self {
            IncrementFamily::LogChiSquareShifted { .. } => (-0.5, f64::INFINITY),
            IncrementFamily::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `chi(theta) = ln E exp(theta * gamma)`.
    pub fn cgf(&self, theta: f64) -> Result<f64> {
        let (lo, hi) = self.cgf_domain();
        if !(theta > lo && theta < hi) {
            return Err(CoreError::CgfDomain {
                theta,
                lo,
                hi,
                state: String::new(),
            });
        }
        Ok(match self {
            IncrementFamily::LogChiSquareShifted { c } => {
                // Subtracting ln_gamma(0.5) through the same code path keeps
                // chi(0) = 0 exact to the last bit.
                theta * (2.0 * c).ln() + (ln_gamma(theta + 0.5) - ln_gamma(0.5))
            }
            IncrementFamily::Normal { mean, sd } => mean * theta + sd * sd * theta * theta / 2.0,
        })
    }

    /// Draw from the nominal law.
    pub fn sample_nominal<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            IncrementFamily::LogChiSquareShifted { c } => {
                let z: f64 = StandardNormal.sample(rng);
                (c * z * z).ln()
            }
            IncrementFamily::Normal { mean, sd } => {
                if *sd == 0.0 {
                    *mean
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    mean + sd * z
                }
            }
        }
    }

    /// Draw from the exponentially tilted law
    /// `P_theta(dz) = exp(theta z - chi(theta)) P(dz)`.
    pub fn sample_tilted<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        match self {
            IncrementFamily::LogChiSquareShifted { c } => {
                // Tilted density of W is proportional to
                // w^{theta - 1/2} e^{-w/2}, i.e. Gamma(theta + 1/2, scale 2).
                let g = Gamma::new(theta + 0.5, 2.0).expect("theta inside CGF domain");
                let w: f64 = g.sample(rng);
                (c * w).ln()
            }
            IncrementFamily::Normal { mean, sd } => {
                let shifted = mean + theta * sd * sd;
                if *sd == 0.0 {
                    shifted
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    shifted + sd * z
                }
            }
        }
    }

    /// Assumption 4 requires `Var(gamma) > 0`.
    pub fn is_degenerate(&self) -> bool {
        match self {
            IncrementFamily::LogChiSquareShifted { .. } => false,
            IncrementFamily::Normal { sd, .. } => *sd == 0.0,
        }
    }
}

/// Per-state law of the non-negative reward `lambda(x, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardFamily {
    Constant { w: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl RewardFamily {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RewardFamily::Constant { w } => *w,
            RewardFamily::LogNormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
        }
    }

    /// `E lambda^alpha`; finite for every `alpha > 0` for both families.
    pub fn moment(&self, alpha: f64) -> f64 {
        match self {
            RewardFamily::Constant { w } => w.powf(alpha),
            RewardFamily::LogNormal { mu, sigma } => {
                (alpha * mu + alpha * alpha * sigma * sigma / 2.0).exp()
            }
        }
    }

    fn is_negative(&self) -> bool {
        matches!(self, RewardFamily::Constant { w } if *w < 0.0)
    }
}

/// A fully specified Markov-modulated perpetuity model.
///
/// Construction checks only structural sanity (dimensions, finiteness);
/// the statistical assumptions are reported by [`validate`] so that broken
/// kernels remain representable as data. Everything downstream of
/// [`crate::spectral::find_theta_star`] insists on a clean validation.
///
/// Immutable after construction and safe to share across replication
/// workers.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    labels: Vec<String>,
    kernel: SquareMatrix,
    /// Per-row normalized cumulative kernel, for inverse-CDF state draws.
    kernel_cdf: Vec<f64>,
    increments: Vec<IncrementFamily>,
    rewards: Vec<RewardFamily>,
    initial_state: usize,
}

impl ModelSpec {
    pub fn new(
        labels: Vec<String>,
        kernel_rows: Vec<Vec<f64>>,
        increments: Vec<IncrementFamily>,
        rewards: Vec<RewardFamily>,
        initial_state: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(CoreError::InvalidParameter("state space is empty".into()));
        }
        if kernel_rows.len() != n || kernel_rows.iter().any(|r| r.len() != n) {
            return Err(CoreError::InvalidParameter(format!(
                "kernel must be {n}x{n} to match the state labels"
            )));
        }
        if increments.len() != n || rewards.len() != n {
            return Err(CoreError::InvalidParameter(
                "one increment family and one reward family per state required".into(),
            ));
        }
        if initial_state >= n {
            return Err(CoreError::InvalidParameter(format!(
                "initial state {initial_state} out of range for {n} states"
            )));
        }
        if kernel_rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParameter(
                "kernel entries must be finite".into(),
            ));
        }
        let kernel = SquareMatrix::from_rows(&kernel_rows);
        let mut kernel_cdf = vec![0.0; n * n];
        for i in 0..n {
            let total: f64 = kernel.row(i).iter().sum();
            let denom = if total > 0.0 { total } else { 1.0 };
            let mut acc = 0.0;
            for j in 0..n {
                acc += kernel.get(i, j) / denom;
                kernel_cdf[i * n + j] = acc;
            }
            kernel_cdf[i * n + n - 1] = 1.0;
        }
        Ok(ModelSpec {
            labels,
            kernel,
            kernel_cdf,
            increments,
            rewards,
            initial_state,
        })
    }

    /// Single-state model with Gaussian increments and a constant reward.
    pub fn single_state_normal(mean: f64, sd: f64, reward: f64) -> Result<Self> {
        if sd < 0.0 || reward < 0.0 {
            return Err(CoreError::InvalidParameter(
                "sd and reward must be non-negative".into(),
            ));
        }
        ModelSpec::new(
            vec!["s0".into()],
            vec![vec![1.0]],
            vec![IncrementFamily::Normal { mean, sd }],
            vec![RewardFamily::Constant { w: reward }],
            0,
        )
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    pub fn kernel(&self) -> &SquareMatrix {
        &self.kernel
    }

    pub fn increment(&self, x: usize) -> &IncrementFamily {
        &self.increments[x]
    }

    pub fn reward(&self, x: usize) -> &RewardFamily {
        &self.rewards[x]
    }

    /// Intersection of the per-state CGF domains.
    pub fn cgf_domain(&self) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for f in &self.increments {
            let (l, h) = f.cgf_domain();
            lo = lo.max(l);
            hi = hi.min(h);
        }
        (lo, hi)
    }

    /// Inverse-CDF draw of the next modulating state under the nominal kernel.
    #[inline]
    pub fn sample_next_state<R: Rng + ?Sized>(&self, rng: &mut R, x: usize) -> usize {
        let n = self.n_states();
        if n == 1 {
            return 0;
        }
        let row = &self.kernel_cdf[x * n..(x + 1) * n];
        let u: f64 = rng.random();
        row.iter().position(|&c| u < c).unwrap_or(n - 1)
    }
}

/// `chi(x, theta)`, the per-state CGF of the increment at `x`.
pub fn cgf(model: &ModelSpec, x: usize, theta: f64) -> Result<f64> {
    model.increment(x).cgf(theta).map_err(|e| match e {
        CoreError::CgfDomain { theta, lo, hi, .. } => CoreError::CgfDomain {
            theta,
            lo,
            hi,
            state: model.label(x).to_string(),
        },
        other => other,
    })
}

/// Checks the running assumptions and returns one message per violation.
/// An empty list means the model is admissible for every sampler.
pub fn validate(model: &ModelSpec) -> Vec<String> {
    let mut violations = Vec::new();
    let n = model.n_states();
    for i in 0..n {
        let sum: f64 = model.kernel.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            violations.push(format!("row {i} sums to {sum}"));
        }
        for j in 0..n {
            if model.kernel.get(i, j) < 0.0 {
                violations.push(format!("kernel entry ({i},{j}) is negative"));
            }
        }
    }
    if !model.kernel.is_irreducible() {
        violations.push("kernel is not irreducible".to_string());
    }
    for x in 0..n {
        if model.rewards[x].is_negative() {
            violations.push(format!("state {}: negative reward", model.label(x)));
        }
        if model.increments[x].is_degenerate() {
            violations.push(format!("state {}: degenerate increment", model.label(x)));
        }
    }
    violations
}

/// Rejects models with a non-empty violation list.
pub fn validated(model: ModelSpec) -> Result<ModelSpec> {
    let v = validate(&model);
    if v.is_empty() {
        Ok(model)
    } else {
        Err(CoreError::InvalidModel(v))
    }
}

/// ARCH(1) squared process in perpetuity form: constant reward `alpha0`,
/// increment `ln alpha1 + ln chi-square(1)`. The stationary ARCH tail at
/// level `1/delta` equals this perpetuity's tail at level `alpha1/delta`;
/// that level transformation is applied by the run harness, not here.
pub fn make_arch1(alpha0: f64, alpha1: f64) -> Result<ModelSpec> {
    if !(alpha0 > 0.0) || !(alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "parameter out of range: need alpha0 > 0 and 0 < alpha1 < 1, got ({alpha0}, {alpha1})"
        )));
    }
    ModelSpec::new(
        vec!["s0".into()],
        vec![vec![1.0]],
        vec![IncrementFamily::LogChiSquareShifted { c: alpha1 }],
        vec![RewardFamily::Constant { w: alpha0 }],
        0,
    )
}

/// The two-state Markov-modulated demo: kernel [[1/2, 1/2], [1, 0]],
/// constant rewards 1 and 2, increments `ln(2/3) + ln chi2` and
/// `ln(3/4) + ln chi2`.
pub fn make_two_state_demo() -> ModelSpec {
    ModelSpec::new(
        vec!["1".into(), "2".into()],
        vec![vec![0.5, 0.5], vec![1.0, 0.0]],
        vec![
            IncrementFamily::LogChiSquareShifted { c: 2.0 / 3.0 },
            IncrementFamily::LogChiSquareShifted { c: 3.0 / 4.0 },
        ],
        vec![
            RewardFamily::Constant { w: 1.0 },
            RewardFamily::Constant { w: 2.0 },
        ],
        0,
    )
    .expect("demo model is structurally sound")
}
