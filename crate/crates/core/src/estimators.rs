//! Single-replication samplers for the tail probability
//! `phi(Delta) = P(D_inf > 1)` with `D_n = sum lambda_k Delta e^{S_k}`:
//!
//! * [`crude`] - nominal dynamics, indicator of hitting within a step cap
//!   (bias from truncation is downward and documented);
//! * [`naive_is`] - tilt every step until the barrier; exists to demonstrate
//!   the variance blow-up of that strategy, not for production use;
//! * [`state_independent`] - tilt until `D > a`, then freeze the likelihood
//!   and run the nominal dynamics for `n_star` further steps (downward bias
//!   from the finite horizon, documented);
//! * [`state_dependent`] - the Lyapunov-region sampler in the
//!   `Z = (1 - D) e^{-S}` coordinates; unbiased, terminates with
//!   probability one.

use crate::error::{CoreError, Result};
use crate::lyapunov::{LyapunovParams, Region};
use crate::model::ModelSpec;
use crate::spectral::TiltEnvelope;
use crate::tilting::{nominal_step, tilted_step};

/// Why a replication stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationCause {
    /// The discounted process crossed the barrier (`D > 1`, i.e. `Z <= 0`).
    Hit,
    /// The configured horizon ended without a hit (crude cap, SI `n_star`).
    Truncated,
    /// The hard safety cap stopped a sampler that would otherwise continue.
    Capped,
}

/// One draw of an estimator plus path diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct ReplicationResult {
    /// The estimator value: an indicator for crude, `e^{log_lr} * indicator`
    /// for the importance samplers.
    pub value: f64,
    pub steps: u64,
    pub cause: TerminationCause,
    pub log_lr_final: f64,
    /// Running maximum of `S_n`.
    pub max_s: f64,
}

/// Sampler knobs shared by the replication functions.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    /// SI switch-off level in (0, 1): tilting stops once `D > a`.
    pub a: f64,
    /// SI nominal continuation length after the switch-off.
    pub n_star: u64,
    /// Hard safety cap on steps for every sampler.
    pub step_cap: u64,
    /// The tail scale; the barrier for `D` is 1 at this scale.
    pub delta: f64,
}

impl SamplerConfig {
    pub fn new(a: f64, n_star: u64, step_cap: u64, delta: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "switch-off level a must lie in (0,1), got {a}"
            )));
        }
        if n_star < 1 {
            return Err(CoreError::InvalidParameter("n_star must be >= 1".into()));
        }
        if step_cap < n_star {
            return Err(CoreError::InvalidParameter(format!(
                "step_cap {step_cap} must be >= n_star {n_star}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "delta must lie in (0,1), got {delta}"
            )));
        }
        Ok(SamplerConfig {
            a,
            n_star,
            step_cap,
            delta,
        })
    }

    /// Experiment defaults: `a = 9/10`, `n_star = ceil(10 ln(1/Delta))`,
    /// cap 10^6.
    pub fn for_delta(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "delta must lie in (0,1), got {delta}"
            )));
        }
        let n_star = (10.0 * (1.0 / delta).ln()).ceil().max(1.0) as u64;
        SamplerConfig::new(0.9, n_star, 1_000_000, delta)
    }
}

#[inline]
fn parity_check(z: f64, s: f64, d: f64) {
    // The (s, d)-derived state and the Z recursion must track each other to
    // ~1e-9 relative while the exponent is representable; past that the
    // recursion is authoritative.
    if cfg!(debug_assertions) && s.abs() <= 200.0 {
        let z_sd = (1.0 - d) * (-s).exp();
        let tol = 1e-9 * (z.abs() + (1.0 + d.abs()) * (-s).exp()) + 1e-300;
        debug_assert!(
            (z - z_sd).abs() <= tol,
            "Z recursion diverged from (s,d): z={z} vs {z_sd} at s={s}, d={d}"
        );
    }
}

/// Crude Monte Carlo: simulate the nominal dynamics and return the hit
/// indicator. Replications that reach `step_cap` report `Truncated` with
/// value 0; the resulting bias is downward.
pub fn crude<R: rand::Rng + ?Sized>(
    rng: &mut R,
    model: &ModelSpec,
    cfg: &SamplerConfig,
) -> ReplicationResult {
    crude_from(rng, model, cfg, 0.0, 0.0)
}

/// Crude sampler from general initial `(s0, d0)`; test hook for boundary
/// behavior (`d0 >= 1` pays out immediately with zero steps).
#[doc(hidden)]
pub fn crude_from<R: rand::Rng + ?Sized>(
    rng: &mut R,
    model: &ModelSpec,
    cfg: &SamplerConfig,
    s0: f64,
    d0: f64,
) -> ReplicationResult {
    let mut s = s0;
    let mut d = d0;
    let mut max_s = s0;
    let mut x = model.initial_state();
    if d > 1.0 {
        return ReplicationResult {
            value: 1.0,
            steps: 0,
            cause: TerminationCause::Hit,
            log_lr_final: 0.0,
            max_s,
        };
    }
    for n in 1..=cfg.step_cap {
        let step = nominal_step(rng, model, x);
        s += step.gamma;
        if s > max_s {
            max_s = s;
        }
        let d_next = d + step.reward * cfg.delta * s.exp();
        debug_assert!(d_next >= d, "discounted reward must be nondecreasing");
        d = d_next;
        x = step.next_state;
        if d > 1.0 {
            return ReplicationResult {
                value: 1.0,
                steps: n,
                cause: TerminationCause::Hit,
                log_lr_final: 0.0,
                max_s,
            };
        }
    }
    ReplicationResult {
        value: 0.0,
        steps: cfg.step_cap,
        cause: TerminationCause::Truncated,
        log_lr_final: 0.0,
        max_s,
    }
}

/// The cautionary estimator: exponential tilting on every step until the
/// barrier. Unbiased up to capping but with unbounded relative error; its
/// sample CV grows without bound as the replication count rises. Kept for
/// demonstration only.
pub fn naive_is<R: rand::Rng + ?Sized>(
    rng: &mut R,
    model: &ModelSpec,
    env: &TiltEnvelope,
    cfg: &SamplerConfig,
) -> ReplicationResult {
    let mut s = 0.0;
    let mut d = 0.0;
    let mut max_s = 0.0f64;
    let mut log_lr = 0.0;
    let mut x = model.initial_state();
    for n in 1..=cfg.step_cap {
        let step = tilted_step(rng, env, model, x);
        log_lr += step.log_lr;
        s += step.gamma;
        if s > max_s {
            max_s = s;
        }
        d += step.reward * cfg.delta * s.exp();
        x = step.next_state;
        if d > 1.0 {
            return ReplicationResult {
                value: log_lr.exp(),
                steps: n,
                cause: TerminationCause::Hit,
                log_lr_final: log_lr,
                max_s,
            };
        }
    }
    ReplicationResult {
        value: 0.0,
        steps: cfg.step_cap,
        cause: TerminationCause::Capped,
        log_lr_final: log_lr,
        max_s,
    }
}

/// The modified state-independent estimator: tilt until `D > a`, freeze the
/// likelihood ratio
/// `exp(-theta* S_T) u(x0) / u(X_T)`, then run `n_star` nominal steps and
/// pay the frozen likelihood times the indicator `I(D > 1)` at the horizon
/// (valid as an indicator of the horizon-limited event because `D` is
/// nondecreasing). The `n_star` truncation biases the estimate downward.
pub fn state_independent<R: rand::Rng + ?Sized>(
    rng: &mut R,
    model: &ModelSpec,
    env: &TiltEnvelope,
    cfg: &SamplerConfig,
) -> ReplicationResult {
    let mut s = 0.0;
    let mut d = 0.0;
    let mut max_s = 0.0f64;
    let mut log_lr = 0.0;
    let mut x = model.initial_state();
    let mut steps = 0u64;
    // Phase 1: tilted dynamics up to T_{Delta/a} = inf{n : D_n > a}.
    while d <= cfg.a {
        if steps >= cfg.step_cap {
            return ReplicationResult {
                value: 0.0,
                steps,
                cause: TerminationCause::Capped,
                log_lr_final: log_lr,
                max_s,
            };
        }
        let step = tilted_step(rng, env, model, x);
        log_lr += step.log_lr;
        s += step.gamma;
        if s > max_s {
            max_s = s;
        }
        d += step.reward * cfg.delta * s.exp();
        x = step.next_state;
        steps += 1;
    }
    // Phase 2: nominal continuation; D is nondecreasing, so the indicator
    // at the horizon is just D > 1, checked early.
    for _ in 0..cfg.n_star {
        if d > 1.0 {
            break;
        }
        let step = nominal_step(rng, model, x);
        s += step.gamma;
        if s > max_s {
            max_s = s;
        }
        d += step.reward * cfg.delta * s.exp();
        x = step.next_state;
        steps += 1;
    }
    if d > 1.0 {
        ReplicationResult {
            value: log_lr.exp(),
            steps,
            cause: TerminationCause::Hit,
            log_lr_final: log_lr,
            max_s,
        }
    } else {
        ReplicationResult {
            value: 0.0,
            steps,
            cause: TerminationCause::Truncated,
            log_lr_final: log_lr,
            max_s,
        }
    }
}

/// The state-dependent sampler. The authoritative state is
/// `Z_{n+1} = Z_n e^{-gamma_{n+1}} - Delta lambda_{n+1}` (robust to
/// overflow of `e^{-S}`); `(s, d)` ride along for the likelihood-ratio
/// diagnostics and the per-step parity check. Tilt in `C`, run nominal in
/// `C'`, stop and pay `e^{log_lr}` in `B`. Termination happens with
/// probability one; the step cap is a safety net and capped replications
/// are reported separately (value 0).
pub fn state_dependent<R: rand::Rng + ?Sized>(
    rng: &mut R,
    model: &ModelSpec,
    env: &TiltEnvelope,
    lyap: &LyapunovParams,
    cfg: &SamplerConfig,
) -> ReplicationResult {
    let mut x = model.initial_state();
    let mut z = 1.0f64; // (1 - d0) e^{-s0} at s0 = d0 = 0
    let mut s = 0.0f64;
    let mut d = 0.0f64;
    let mut max_s = 0.0f64;
    let mut log_lr = 0.0f64;
    let mut steps = 0u64;
    loop {
        match lyap.classify(x, z) {
            Region::Terminal => {
                return ReplicationResult {
                    value: log_lr.exp(),
                    steps,
                    cause: TerminationCause::Hit,
                    log_lr_final: log_lr,
                    max_s,
                };
            }
            region => {
                if steps >= cfg.step_cap {
                    return ReplicationResult {
                        value: 0.0,
                        steps,
                        cause: TerminationCause::Capped,
                        log_lr_final: log_lr,
                        max_s,
                    };
                }
                let step = match region {
                    Region::TiltRegion => tilted_step(rng, env, model, x),
                    _ => nominal_step(rng, model, x),
                };
                log_lr += step.log_lr;
                z = z * (-step.gamma).exp() - cfg.delta * step.reward;
                s += step.gamma;
                if s > max_s {
                    max_s = s;
                }
                let d_next = d + step.reward * cfg.delta * s.exp();
                debug_assert!(d_next >= d, "discounted reward must be nondecreasing");
                d = d_next;
                parity_check(z, s, d);
                x = step.next_state;
                steps += 1;
            }
        }
    }
}

/// `c* = phi_hat / Delta^{theta*}`, the prefactor of the polynomial tail
/// `phi(Delta) = c* Delta^{theta*} (1 + o(1))`.
pub fn estimate_cstar(phi_hat: f64, delta: f64, theta_star: f64) -> Result<f64> {
    if !(phi_hat > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "phi_hat must be positive to extract c*, got {phi_hat}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    Ok(phi_hat / delta.powf(theta_star))
}
