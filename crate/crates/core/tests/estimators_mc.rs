//! Cross-estimator consistency and sampler-level Monte Carlo properties at
//! desk-cheap sizes. The table-scale reproductions live in the acceptance
//! suite of the `perpsim` crate.

use perpsim_core::estimators::{
    crude, naive_is, state_dependent, state_independent, SamplerConfig, TerminationCause,
};
use perpsim_core::lyapunov::select_params;
use perpsim_core::tilting::RngStream;
use perpsim_core::{estimate_cstar, find_theta_star, make_arch1};

struct Agg {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Agg {
    fn new() -> Self {
        Agg {
            n: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }
    fn se(&self) -> f64 {
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
    fn ci(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.se(), self.mean + 1.96 * self.se())
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

#[test]
fn crude_si_sd_agree_at_moderate_delta() {
    // All three estimators target the same phi; at delta = 0.1 (perpetuity
    // scale, no ARCH mapping here) their 95% CIs must overlap pairwise.
    let m = make_arch1(1.0, 0.75).unwrap();
    let env = find_theta_star(&m).unwrap();
    let delta = 0.1;
    let lyap = select_params(&m, &env, delta).unwrap();

    let crude_cfg = SamplerConfig::new(0.9, 1, 1000, delta).unwrap();
    let mut a_crude = Agg::new();
    for i in 0..200_000u64 {
        let mut rng = RngStream::new(101, i);
        a_crude.push(crude(&mut rng, &m, &crude_cfg).value);
    }

    let cfg = SamplerConfig::for_delta(delta).unwrap();
    let mut a_si = Agg::new();
    for i in 0..100_000u64 {
        let mut rng = RngStream::new(102, i);
        a_si.push(state_independent(&mut rng, &m, &env, &cfg).value);
    }

    let mut a_sd = Agg::new();
    for i in 0..40_000u64 {
        let mut rng = RngStream::new(103, i);
        a_sd.push(state_dependent(&mut rng, &m, &env, &lyap, &cfg).value);
    }

    assert!(
        overlap(a_crude.ci(), a_si.ci()),
        "crude {:?} vs si {:?}",
        a_crude.ci(),
        a_si.ci()
    );
    assert!(
        overlap(a_crude.ci(), a_sd.ci()),
        "crude {:?} vs sd {:?}",
        a_crude.ci(),
        a_sd.ci()
    );
    assert!(
        overlap(a_si.ci(), a_sd.ci()),
        "si {:?} vs sd {:?}",
        a_si.ci(),
        a_sd.ci()
    );
}

#[test]
fn naive_mean_matches_crude_ci() {
    // The naive full-tilt estimator is unbiased up to capping, so its mean
    // must sit inside a crude confidence band.
    let m = make_arch1(1.0, 0.75).unwrap();
    let env = find_theta_star(&m).unwrap();
    let delta = 0.1;
    let crude_cfg = SamplerConfig::new(0.9, 1, 1000, delta).unwrap();
    let mut a_crude = Agg::new();
    for i in 0..150_000u64 {
        let mut rng = RngStream::new(201, i);
        a_crude.push(crude(&mut rng, &m, &crude_cfg).value);
    }
    let cfg = SamplerConfig::for_delta(delta).unwrap();
    let mut a_naive = Agg::new();
    let mut capped = 0u64;
    for i in 0..150_000u64 {
        let mut rng = RngStream::new(202, i);
        let r = naive_is(&mut rng, &m, &env, &cfg);
        if r.cause == TerminationCause::Capped {
            capped += 1;
        }
        a_naive.push(r.value);
    }
    assert_eq!(capped, 0);
    let combined = (a_crude.se().powi(2) + a_naive.se().powi(2)).sqrt();
    assert!(
        (a_naive.mean - a_crude.mean).abs() <= 4.0 * combined,
        "naive {} vs crude {} (combined se {combined})",
        a_naive.mean,
        a_crude.mean
    );
}

#[test]
fn cstar_stable_across_deltas() {
    // phi(Delta) = c* Delta^{theta*} (1 + o(1)): the prefactor extracted at
    // two deltas two decades apart must agree within 20%.
    let m = make_arch1(1.0, 0.75).unwrap();
    let env = find_theta_star(&m).unwrap();
    let mut cstars = Vec::new();
    for (k, &delta) in [1e-3_f64, 1e-5].iter().enumerate() {
        let cfg = SamplerConfig::for_delta(delta).unwrap();
        let mut agg = Agg::new();
        for i in 0..40_000u64 {
            let mut rng = RngStream::new(300 + k as u64, i);
            agg.push(state_independent(&mut rng, &m, &env, &cfg).value);
        }
        cstars.push(estimate_cstar(agg.mean, delta, env.theta_star).unwrap());
    }
    let ratio = cstars[0] / cstars[1];
    assert!(
        (ratio - 1.0).abs() < 0.2,
        "cstar {} vs {} (ratio {ratio})",
        cstars[0],
        cstars[1]
    );
}

#[test]
fn sd_debug_parity_is_exercised() {
    // The per-step Z vs (s,d) parity assertions are live in debug builds;
    // run enough state-dependent paths that any systematic divergence
    // would trip them.
    let m = make_arch1(1.0, 0.8).unwrap();
    let env = find_theta_star(&m).unwrap();
    let delta = 0.05;
    let lyap = select_params(&m, &env, delta).unwrap();
    let cfg = SamplerConfig::for_delta(delta).unwrap();
    let mut total_steps = 0u64;
    for i in 0..2_000u64 {
        let mut rng = RngStream::new(400, i);
        let r = state_dependent(&mut rng, &m, &env, &lyap, &cfg);
        assert_eq!(r.cause, TerminationCause::Hit);
        total_steps += r.steps;
    }
    assert!(total_steps > 10_000);
}
