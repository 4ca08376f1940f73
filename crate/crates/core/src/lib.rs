//! Rare-event simulation for Markov-modulated perpetuities.
//!
//! The target quantity is the tail `phi(Delta) = P(D_inf > 1)` of the
//! scaled discounted reward
//!
//! ```text
//! D_n = sum_{k<=n} lambda(X_k, eta_k) * Delta * exp(S_k),
//! S_k = gamma(X_1, xi_1) + ... + gamma(X_k, xi_k),
//! ```
//!
//! with `X` a finite irreducible modulating chain. Under the Cramer
//! condition (a root `theta* > 0` of the log spectral radius `psi` of the
//! tilted matrix `Q_theta`), `phi(Delta) = c* Delta^{theta*} (1 + o(1))`,
//! so plain Monte Carlo degrades polynomially. The crate provides:
//!
//! * [`model`]: model specification with analytic CGFs per state;
//! * [`spectral`]: the Perron-Frobenius eigenproblem, `psi`, and `theta*`;
//! * [`tilting`]: nominal and exponentially tilted transitions with exact
//!   log-likelihood-ratio bookkeeping, and reproducible per-replication
//!   RNG streams;
//! * [`lyapunov`]: the drift constants, the h function and the
//!   tilt/nominal/stop region classification for the state-dependent
//!   sampler;
//! * [`estimators`]: crude Monte Carlo, the naive full-tilt demonstration,
//!   the state-independent estimator, and the unbiased state-dependent
//!   sampler.
//!
//! ```
//! use perpsim_core::estimators::state_dependent;
//! use perpsim_core::{find_theta_star, make_arch1, select_params, RngStream, SamplerConfig};
//!
//! let model = make_arch1(1.0, 0.75)?;
//! let env = find_theta_star(&model)?; // theta* ~ 1.456, tilted kernel, drift
//! let lyap = select_params(&model, &env, 0.05)?;
//! let cfg = SamplerConfig::for_delta(0.05)?;
//!
//! // One unbiased draw of the estimator per replication stream.
//! let mut total = 0.0;
//! for rep in 0..200u64 {
//!     let mut rng = RngStream::new(42, rep);
//!     total += state_dependent(&mut rng, &model, &env, &lyap, &cfg).value;
//! }
//! assert!(total / 200.0 > 0.0);
//! # Ok::<(), perpsim_core::CoreError>(())
//! ```

pub mod error;
pub mod estimators;
pub mod lyapunov;
pub mod matrix;
pub mod model;
pub mod special;
pub mod spectral;
pub mod tilting;

pub use error::{CoreError, Result};
pub use estimators::{
    crude, estimate_cstar, naive_is, state_dependent, state_independent, ReplicationResult,
    SamplerConfig, TerminationCause,
};
pub use lyapunov::{classify, h_value, select_params, verify_drift, LyapunovParams, Region};
pub use model::{
    cgf, make_arch1, make_two_state_demo, validate, IncrementFamily, ModelSpec, RewardFamily,
};
pub use spectral::{
    find_theta_star, principal_eig, psi, psi_second_sup, tilted_matrix, SpectralSolution,
    TiltEnvelope,
};
pub use tilting::{nominal_step, tilted_increment_mean, tilted_step, RngStream, StepSample};
