//! Lyapunov machinery for the state-dependent sampler: the drift-budget
//! constants, the [0,1]-valued function
//!
//! `h(s, d, x) = min{ (c e^s Delta / (1-d)_+)^{2t*-r} u_{t*}(x) u_{t*-r}(x), 1 }`
//!
//! (writing `t*` for theta*, `r` for rho), and the three-region
//! classification in the `(X, Z)` coordinates `Z = (1 - D) e^{-S}`:
//!
//! * `C` (tilt):     `Z > c_Delta * Delta * (u_{t*} u_{t*-r})^{1/(2t*-r)}`
//! * `C'` (nominal): `0 < Z <= threshold`
//! * `B` (stop):     `Z <= 0`, equivalently `D >= 1`.
//!
//! Construction refuses any `Delta` at which the drift-budget inequality
//!
//! `b0 b2 r / B2^{2t*-r} + (1 - r mu + b1 r^2) / (1 - B1 r)^{2t*-r} <= 1`
//!
//! cannot be certified, since that inequality is what guarantees
//! `E[r(w, W1) h(W1)] <= h(w)` on `C` and with it the efficiency bound.
//!
//! The constant `b1` is computed as the smallest value satisfying its
//! defining requirement `exp(psi(t* - delta)) <= 1 - delta mu + b1 delta^2`
//! on a fine grid of `delta in (0, t*)`. The Taylor bound
//! `sup (psi'' + psi'^2)/2` (see [`crate::spectral::psi_second_sup`]) is a
//! valid but far coarser choice for the log-chi-square families: it inflates
//! b1 so much that the budget fails at every desk-scale `Delta` even though
//! the drift inequality itself holds there, so it is kept only as reference
//! metadata.

use crate::error::{CoreError, Result};
use crate::model::{cgf, ModelSpec, RewardFamily};
use crate::spectral::{psi, spectral_solution, TiltEnvelope};
use crate::tilting::nominal_step;

/// Where a `(X, Z)` state falls for the state-dependent sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `C`: apply exponential tilting.
    TiltRegion,
    /// `C'`: run the nominal dynamics.
    NominalRegion,
    /// `B`: the barrier has been crossed; stop and pay out the likelihood.
    Terminal,
}

/// Constants and evaluators for one `(model, Delta)` pair. Immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct LyapunovParams {
    pub delta: f64,
    /// `rho = 1 / ln(1/Delta)`.
    pub rho: f64,
    /// `c_Delta = (B2/B1) rho^{-(1 + 1/(2 theta* - rho))}`.
    pub c_delta: f64,
    pub b0: f64,
    /// Smallest constant with `exp(psi(theta*-d)) <= 1 - d mu + b1 d^2` on
    /// `(0, theta*)`.
    pub b1: f64,
    /// Conservative Taylor value of b1, kept for run metadata.
    pub b1_taylor_reference: f64,
    pub b2: f64,
    pub big_b1: f64,
    pub big_b2: f64,
    pub theta_star: f64,
    pub mu: f64,
    pub u_star: Vec<f64>,
    /// Eigenvector at `theta* - rho`, min-normalized like `u_star`.
    pub u_shift: Vec<f64>,
    /// min over x of `(u_star u_shift)^{1/(2 theta* - rho)}`.
    pub m_min: f64,
    /// max over x of the same.
    pub m_max: f64,
    /// Left-hand side of the certified budget inequality.
    pub budget_lhs: f64,
    /// `2 theta* - rho`.
    exponent: f64,
    /// Per-state `ln` of the region threshold
    /// `c_Delta * Delta * (u_star(x) u_shift(x))^{1/(2 theta* - rho)}`.
    log_thresholds: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn budget_lhs(
    theta_star: f64,
    mu: f64,
    b0: f64,
    b1: f64,
    b2: f64,
    big_b1: f64,
    big_b2: f64,
    rho: f64,
) -> f64 {
    let p = 2.0 * theta_star - rho;
    b0 * b2 * rho / big_b2.powf(p)
        + (1.0 - rho * mu + b1 * rho * rho) / (1.0 - big_b1 * rho).powf(p)
}

/// Minimal `b1` from the defining inequality, maximized over a fine grid
/// with the analytic `delta -> 0` limit `(psi''(theta*) + mu^2)/2` included,
/// then padded by 0.1% against grid undersampling.
fn tight_b1(model: &ModelSpec, env: &TiltEnvelope) -> Result<f64> {
    let ts = env.theta_star;
    let grid = 256;
    let mut sup = (env.psi2_at_star + env.mu * env.mu) / 2.0;
    for k in 1..grid {
        let d = ts * k as f64 / grid as f64;
        let ratio = ((psi(model, ts - d)?).exp() - 1.0 + d * env.mu) / (d * d);
        sup = sup.max(ratio);
    }
    Ok((sup * 1.001).max(1e-12))
}

/// `b2` bounds for the reward-increment cross moment. Constant rewards use
/// `max{sup_x lambda(x)^{2 theta*}, 1} * sup_x E_x e^{chi(X1, theta*)}`;
/// lognormal rewards replace the essential sup with the convex-hull moment
/// bound `max(1, E lambda^{theta*}, E lambda^{2 theta*})` per destination
/// state and bound `e^{chi(y, zeta)}` over `zeta in (0, theta*]` by
/// `max(1, e^{chi(y, theta*)})`.
fn select_b2(model: &ModelSpec, theta_star: f64) -> Result<f64> {
    let n = model.n_states();
    let all_constant = (0..n).all(|x| matches!(model.reward(x), RewardFamily::Constant { .. }));
    let e_chi: Vec<f64> = (0..n)
        .map(|y| cgf(model, y, theta_star).map(f64::exp))
        .collect::<Result<_>>()?;
    if all_constant {
        let lam_max = (0..n)
            .map(|x| match model.reward(x) {
                RewardFamily::Constant { w } => *w,
                _ => unreachable!(),
            })
            .fold(0.0, f64::max);
        let lam_term = lam_max.powf(2.0 * theta_star).max(1.0);
        let mut sup_row = 0.0_f64;
        for x in 0..n {
            let row: f64 = (0..n).map(|y| model.kernel().get(x, y) * e_chi[y]).sum();
            sup_row = sup_row.max(row);
        }
        Ok(lam_term * sup_row)
    } else {
        let mut sup_row = 0.0_f64;
        for x in 0..n {
            let mut row = 0.0;
            for y in 0..n {
                let mom = model
                    .reward(y)
                    .moment(theta_star)
                    .max(model.reward(y).moment(2.0 * theta_star))
                    .max(1.0);
                row += model.kernel().get(x, y) * mom * e_chi[y].max(1.0);
            }
            sup_row = sup_row.max(row);
        }
        Ok(sup_row)
    }
}

/// Internal constructor that reports refusal without searching for the
/// largest admissible `Delta`.
fn try_params(model: &ModelSpec, env: &TiltEnvelope, delta: f64) -> Result<LyapunovParams> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let ts = env.theta_star;
    let mu = env.mu;
    let rho = 1.0 / (1.0 / delta).ln();
    if !(rho > 0.0 && rho < ts) {
        // rho >= theta* leaves no room for the shifted eigenvector.
        return Err(CoreError::LyapunovRefused {
            delta,
            max_admissible: f64::NAN,
        });
    }

    let b0 = 1.0; // min-normalized eigenvectors have inf_x u_theta(x) = 1
    let b1 = tight_b1(model, env)?;
    let b1_taylor_reference = crate::spectral::psi_second_sup(model, ts, 64).unwrap_or(f64::NAN);
    let b2 = select_b2(model, ts)?;

    // Worked-example defaults, then a deterministic fallback sweep over the
    // same one-parameter families if the defaults miss the budget at this
    // Delta (any positive pair satisfying the inequality certifies the bound).
    let mut chosen: Option<(f64, f64, f64)> = None;
    let default_fracs = [0.45, 0.3, 0.2, 0.6, 0.75, 0.1, 0.05, 0.9];
    'outer: for &f1 in &default_fracs {
        let big_b1 = f1 * mu / (2.0 * ts);
        if big_b1 * rho >= 1.0 {
            continue;
        }
        for &f2 in &default_fracs {
            let big_b2 = (b0 * b2 / (f2 * mu)).powf(1.0 / ts).max(1.0);
            let lhs = budget_lhs(ts, mu, b0, b1, b2, big_b1, big_b2, rho);
            if lhs <= 1.0 {
                chosen = Some((big_b1, big_b2, lhs));
                break 'outer;
            }
        }
    }
    let (big_b1, big_b2, lhs) = chosen.ok_or(CoreError::LyapunovRefused {
        delta,
        max_admissible: f64::NAN,
    })?;

    let exponent = 2.0 * ts - rho;
    let c_delta = (big_b2 / big_b1) * rho.powf(-(1.0 + 1.0 / exponent));

    let u_shift = spectral_solution(model, ts - rho)?.eigvec;
    let n = model.n_states();
    let mut m_min = f64::INFINITY;
    let mut m_max = f64::NEG_INFINITY;
    let mut log_thresholds = Vec::with_capacity(n);
    for x in 0..n {
        let pair = (env.u(x) * u_shift[x]).powf(1.0 / exponent);
        m_min = m_min.min(pair);
        m_max = m_max.max(pair);
        log_thresholds.push(c_delta.ln() + delta.ln() + pair.ln());
    }

    Ok(LyapunovParams {
        delta,
        rho,
        c_delta,
        b0,
        b1,
        b1_taylor_reference,
        b2,
        big_b1,
        big_b2,
        theta_star: ts,
        mu,
        u_star: env.u_star.clone(),
        u_shift,
        m_min,
        m_max,
        budget_lhs: lhs,
        exponent,
        log_thresholds,
    })
}

/// Builds the Lyapunov constants for `Delta`, refusing loudly (with the
/// largest admissible `Delta` found by scan-plus-bisection) when the budget
/// inequality cannot be certified.
pub fn select_params(model: &ModelSpec, env: &TiltEnvelope, delta: f64) -> Result<LyapunovParams> {
    match try_params(model, env, delta) {
        Ok(p) => Ok(p),
        Err(CoreError::LyapunovRefused { .. }) => {
            let max_admissible = largest_admissible_delta(model, env).unwrap_or(f64::NAN);
            Err(CoreError::LyapunovRefused {
                delta,
                max_admissible,
            })
        }
        Err(e) => Err(e),
    }
}

/// Largest `Delta` at which construction succeeds, located by a geometric
/// scan refined with bisection. `None` when no scanned `Delta` works.
pub fn largest_admissible_delta(model: &ModelSpec, env: &TiltEnvelope) -> Option<f64> {
    let mut good: Option<f64> = None;
    let mut bad = 1.0_f64;
    let mut d = 0.5_f64;
    for _ in 0..60 {
        if try_params(model, env, d).is_ok() {
            good = Some(d);
            break;
        }
        bad = d;
        d *= 0.5;
    }
    let mut lo = good?;
    let mut hi = bad;
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if try_params(model, env, mid).is_ok() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

impl LyapunovParams {
    /// `2 theta* - rho`.
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Region threshold on `Z` at state `x`.
    pub fn threshold(&self, x: usize) -> f64 {
        self.log_thresholds[x].exp()
    }

    /// The Lyapunov function in the `(s, d, x)` coordinates, computed in log
    /// space and clamped to `[0, 1]`; `d >= 1` forces `h = 1` through the
    /// `(1 - d)_+` convention.
    pub fn h_value(&self, s: f64, d: f64, x: usize) -> f64 {
        if d >= 1.0 {
            return 1.0;
        }
        let zlog = (-d).ln_1p() - s;
        let hlog = self.exponent * (self.log_thresholds[x] - zlog);
        if hlog >= 0.0 {
            1.0
        } else {
            hlog.exp()
        }
    }

    /// Classifies a `(x, z)` pair with `z = (1 - d) e^{-s}` supplied by the
    /// caller. `Terminal` iff `z <= 0`; `TiltRegion` iff `z` exceeds the
    /// state's threshold (equivalently `h < 1`).
    #[inline]
    pub fn classify(&self, x: usize, z: f64) -> Region {
        if z <= 0.0 {
            Region::Terminal
        } else if z.ln() > self.log_thresholds[x] {
            Region::TiltRegion
        } else {
            Region::NominalRegion
        }
    }

    /// One-line metadata summary for reproducibility records.
    pub fn summary(&self) -> String {
        format!(
            "rho={} c_delta={} b0={} b1={} b1_taylor={} b2={} B1={} B2={} m={} M={} budget_lhs={} thresholds={:?}",
            self.rho,
            self.c_delta,
            self.b0,
            self.b1,
            self.b1_taylor_reference,
            self.b2,
            self.big_b1,
            self.big_b2,
            self.m_min,
            self.m_max,
            self.budget_lhs,
            (0..self.u_star.len()).map(|x| self.threshold(x)).collect::<Vec<_>>(),
        )
    }

    /// Test hook: assemble params from raw constants.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw_parts(
        delta: f64,
        rho: f64,
        c_delta: f64,
        theta_star: f64,
        mu: f64,
        u_star: Vec<f64>,
        u_shift: Vec<f64>,
    ) -> Self {
        let exponent = 2.0 * theta_star - rho;
        let n = u_star.len();
        let mut log_thresholds = Vec::with_capacity(n);
        let mut m_min = f64::INFINITY;
        let mut m_max = f64::NEG_INFINITY;
        for x in 0..n {
            let pair = (u_star[x] * u_shift[x]).powf(1.0 / exponent);
            m_min = m_min.min(pair);
            m_max = m_max.max(pair);
            log_thresholds.push(c_delta.ln() + delta.ln() + pair.ln());
        }
        LyapunovParams {
            delta,
            rho,
            c_delta,
            b0: 1.0,
            b1: f64::NAN,
            b1_taylor_reference: f64::NAN,
            b2: f64::NAN,
            big_b1: f64::NAN,
            big_b2: f64::NAN,
            theta_star,
            mu,
            u_star,
            u_shift,
            m_min,
            m_max,
            budget_lhs: f64::NAN,
            exponent,
            log_thresholds,
        }
    }
}

/// Free-function views of the two evaluators, matching the operation names.
pub fn h_value(p: &LyapunovParams, s: f64, d: f64, x: usize) -> f64 {
    p.h_value(s, d, x)
}

pub fn classify(p: &LyapunovParams, x: usize, z: f64) -> Region {
    p.classify(x, z)
}

/// Monte Carlo estimate of `E_w[r(w, W1) h(W1)] / h(w)` for one probe state.
#[derive(Debug, Clone, Copy)]
pub struct DriftCheck {
    pub ratio: f64,
    pub std_err: f64,
    /// `ratio <= 1 + 3 std_err`.
    pub pass: bool,
}

/// Verifies the drift inequality at probe states inside `C` by one-step
/// nominal sampling: `r` is the tilt likelihood
/// `e^{-theta* gamma} u(x)/u(X1)` from the change-of-measure weight. With a
/// certified budget the ratio is at most 1 exactly, so the Monte Carlo
/// estimate should fail only by noise.
pub fn verify_drift<R: rand::Rng + ?Sized>(
    rng: &mut R,
    model: &ModelSpec,
    env: &TiltEnvelope,
    p: &LyapunovParams,
    probes: &[(f64, f64, usize)],
    n: u64,
) -> Result<Vec<DriftCheck>> {
    if n < 100_000 {
        return Err(CoreError::Precondition(format!(
            "verify_drift needs n >= 1e5 samples per probe, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(probes.len());
    for &(s, d, x) in probes {
        if d >= 1.0 {
            return Err(CoreError::Precondition(format!(
                "probe (s={s}, d={d}, x={x}) has d >= 1: outside C"
            )));
        }
        let z = (1.0 - d) * (-s).exp();
        if p.classify(x, z) != Region::TiltRegion {
            return Err(CoreError::Precondition(format!(
                "probe (s={s}, d={d}, x={x}) is not in the tilt region C"
            )));
        }
        let h_w = p.h_value(s, d, x);
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for k in 1..=n {
            let step = nominal_step(rng, model, x);
            let s1 = s + step.gamma;
            let d1 = d + step.reward * p.delta * s1.exp();
            let r = env.log_lr_step(x, step.next_state, step.gamma).exp();
            let v = r * p.h_value(s1, d1, step.next_state);
            let delta_v = v - mean;
            mean += delta_v / k as f64;
            m2 += delta_v * (v - mean);
        }
        let var = m2 / (n - 1) as f64;
        let se = (var / n as f64).sqrt() / h_w;
        let ratio = mean / h_w;
        out.push(DriftCheck {
            ratio,
            std_err: se,
            pass: ratio <= 1.0 + 3.0 * se,
        });
    }
    Ok(out)
}

/// Draws a random probe `(s, d)` strictly inside `C` at state `x`:
/// `d ~ U(0, 0.95)` and `s` placed `U(0.25, 6)` log-units below the region
/// boundary.
pub fn random_probe_in_c<R: rand::Rng + ?Sized>(
    rng: &mut R,
    p: &LyapunovParams,
    x: usize,
) -> (f64, f64) {
    let d: f64 = 0.95 * rng.random::<f64>();
    let log_thr = p.log_thresholds[x];
    let margin = 0.25 + 5.75 * rng.random::<f64>();
    let s = (1.0 - d).ln() - log_thr - margin;
    (s, d)
}
