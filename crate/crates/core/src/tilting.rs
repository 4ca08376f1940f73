//! Random-variate generation: nominal and exponentially tilted single-step
//! transitions of `(X, gamma, lambda)` with exact log-likelihood-ratio
//! increments, plus the per-replication RNG stream abstraction.

use crate::error::{CoreError, Result};
use crate::model::{cgf, ModelSpec};
use crate::spectral::TiltEnvelope;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One reproducible random stream per replication.
///
/// ChaCha8 keyed from the 64-bit seed with the replication index as the
/// cipher stream id: distinct `stream_id`s give independent sequences, and
/// the same `(seed, stream_id)` pair replays identically regardless of how
/// replications are scheduled across workers.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        // Expand the 64-bit seed into a 256-bit key with splitmix64 so that
        // nearby seeds do not share key bytes.
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_id);
        RngStream {
            rng,
            seed,
            stream_id,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// One sampled transition: destination state, additive increment, reward,
/// and the log likelihood ratio (nominal over sampling law) of the step.
#[derive(Debug, Clone, Copy)]
pub struct StepSample {
    pub next_state: usize,
    pub gamma: f64,
    pub reward: f64,
    /// 0 under nominal sampling; under the theta* tilt this is
    /// `-theta* gamma + ln u(x) - ln u(next_state)`.
    pub log_lr: f64,
}

/// One step under the nominal dynamics from state `x`.
#[inline]
pub fn nominal_step<R: rand::Rng + ?Sized>(rng: &mut R, model: &ModelSpec, x: usize) -> StepSample {
    let y = model.sample_next_state(rng, x);
    let gamma = model.increment(y).sample_nominal(rng);
    let reward = model.reward(y).sample(rng);
    StepSample {
        next_state: y,
        gamma,
        reward,
        log_lr: 0.0,
    }
}

/// One step under the theta*-tilted dynamics from state `x`: the state moves
/// by the tilted kernel `K_{theta*}`, the increment by the exponentially
/// tilted law at the destination state, the reward by its nominal law.
#[inline]
pub fn tilted_step<R: rand::Rng + ?Sized>(
    rng: &mut R,
    env: &TiltEnvelope,
    model: &ModelSpec,
    x: usize,
) -> StepSample {
    let y = env.sample_next_tilted(rng, x);
    let gamma = model.increment(y).sample_tilted(env.theta_star, rng);
    let reward = model.reward(y).sample(rng);
    StepSample {
        next_state: y,
        gamma,
        reward,
        log_lr: env.log_lr_step(x, y, gamma),
    }
}

/// Exact mean of the tilted increment at state `x`, computed as
/// `chi'(x, theta)` by central differences. Diagnostic; equals the nominal
/// mean at `theta = 0`.
pub fn tilted_increment_mean(model: &ModelSpec, x: usize, theta: f64) -> Result<f64> {
    let (lo, hi) = model.increment(x).cgf_domain();
    if !(theta > lo && theta < hi) {
        return Err(CoreError::CgfDomain {
            theta,
            lo,
            hi,
            state: model.label(x).to_string(),
        });
    }
    let h = 1e-5_f64.min((theta - lo) / 4.0).min((hi - theta) / 4.0);
    let d = |h: f64| -> Result<f64> {
        Ok((cgf(model, x, theta + h)? - cgf(model, x, theta - h)?) / (2.0 * h))
    };
    let d1 = d(h)?;
    let d2 = d(h / 2.0)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_arch1, make_two_state_demo, ModelSpec};
    use crate::spectral::find_theta_star;

    #[test]
    fn identical_streams_replay() {
        let mut a = RngStream::new(7, 42);
        let mut b = RngStream::new(7, 42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(7, 1);
        let mut b = RngStream::new(7, 2);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn single_state_always_stays() {
        let m = make_arch1(1.0, 0.75).unwrap();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..32 {
            assert_eq!(nominal_step(&mut rng, &m, 0).next_state, 0);
        }
    }

    #[test]
    fn two_state_row_two_is_deterministic() {
        // Kernel row (1, 0): from state "2" the chain always returns to "1".
        let m = make_two_state_demo();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..32 {
            assert_eq!(nominal_step(&mut rng, &m, 1).next_state, 0);
        }
    }

    #[test]
    fn nominal_log_lr_is_zero() {
        let m = make_two_state_demo();
        let mut rng = RngStream::new(3, 5);
        for _ in 0..16 {
            assert_eq!(nominal_step(&mut rng, &m, 0).log_lr, 0.0);
        }
    }

    #[test]
    fn rewards_are_non_negative() {
        let m = make_two_state_demo();
        let env = find_theta_star(&m).unwrap();
        let mut rng = RngStream::new(11, 0);
        let mut x = 0;
        for _ in 0..200 {
            let s = tilted_step(&mut rng, &env, &m, x);
            assert!(s.reward >= 0.0);
            x = s.next_state;
        }
    }

    #[test]
    fn tilted_mean_normal_closed_form() {
        let m = ModelSpec::single_state_normal(-1.0, 2.0, 1.0).unwrap();
        for theta in [0.0, 0.5, 1.3] {
            let want = -1.0 + theta * 4.0;
            let got = tilted_increment_mean(&m, 0, theta).unwrap();
            assert!((got - want).abs() < 1e-8, "theta={theta}: {got}");
        }
    }

    #[test]
    fn tilted_mean_chi_square_digamma_oracle() {
        // chi'(theta) = ln(2c) + digamma(theta + 1/2); frozen from mpmath at
        // theta = theta*(arch 3/4): equals mu there.
        let m = make_arch1(1.0, 0.75).unwrap();
        let got = tilted_increment_mean(&m, 0, 1.45597516387759).unwrap();
        assert!((got - 0.799457536547529).abs() < 1e-6, "got {got}");
        // theta = 0 recovers the nominal mean ln c + digamma(1/2) + ln 2.
        let nm = tilted_increment_mean(&m, 0, 0.0).unwrap();
        let want = 0.75f64.ln() - 1.2703628454614782;
        assert!((nm - want).abs() < 1e-6, "nominal mean {nm} vs {want}");
    }

    #[test]
    fn tilted_mean_domain_error() {
        let m = make_arch1(1.0, 0.75).unwrap();
        assert!(tilted_increment_mean(&m, 0, -0.5).is_err());
    }
}
