//! Streaming summary statistics over replication results: Welford updates,
//! associative merge, and the derived estimate / CV / confidence-interval
//! columns the tables report.

use perpsim_core::estimators::{ReplicationResult, TerminationCause};

/// Running mean/variance aggregate over estimator values plus step
/// diagnostics. Merging is associative and commutative up to the usual
/// floating-point reordering noise (~1e-12 relative).
#[derive(Debug, Clone, Default)]
pub struct SummaryStats {
    n: u64,
    mean: f64,
    m2: f64,
    steps_mean: f64,
    max_steps: u64,
    capped: u64,
}

impl SummaryStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: &ReplicationResult) {
        self.push_value(r.value, r.steps, r.cause == TerminationCause::Capped);
    }

    pub fn push_value(&mut self, value: f64, steps: u64, capped: bool) {
        self.n += 1;
        let d = value - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (value - self.mean);
        self.steps_mean += (steps as f64 - self.steps_mean) / self.n as f64;
        self.max_steps = self.max_steps.max(steps);
        if capped {
            self.capped += 1;
        }
    }

    /// Chan's pairwise combination of two aggregates.
    pub fn merge(&mut self, other: &SummaryStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let n = n1 + n2;
        let d = other.mean - self.mean;
        self.mean += d * n2 / n;
        self.m2 += other.m2 + d * d * n1 * n2 / n;
        let ds = other.steps_mean - self.steps_mean;
        self.steps_mean += ds * n2 / n;
        self.n += other.n;
        self.max_steps = self.max_steps.max(other.max_steps);
        self.capped += other.capped;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_err(&self) -> f64 {
        if self.n > 0 {
            self.std_dev() / (self.n as f64).sqrt()
        } else {
            0.0
        }
    }

    /// Sample coefficient of variation; `None` when the mean is 0 (the
    /// tables print `N/A` for those rows).
    pub fn cv(&self) -> Option<f64> {
        if self.mean == 0.0 {
            None
        } else {
            Some(self.std_dev() / self.mean)
        }
    }

    /// Normal-approximation 95% interval; the lower bound may be negative
    /// and is reported as-is.
    pub fn ci95(&self) -> (f64, f64) {
        let half = 1.96 * self.std_err();
        (self.mean - half, self.mean + half)
    }

    pub fn mean_steps(&self) -> f64 {
        self.steps_mean
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    pub fn capped_count(&self) -> u64 {
        self.capped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn push_raw(s: &mut SummaryStats, v: f64) {
        s.push_value(v, 1, false);
    }

    #[test]
    fn matches_two_pass_computation() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 2654435761u64 % 1000) as f64) / 997.0)
            .collect();
        let mut s = SummaryStats::new();
        for &x in &xs {
            push_raw(&mut s, x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((s.estimate() - mean).abs() < 1e-12);
        assert!((s.variance() - var).abs() < 1e-12 * var);
    }

    #[test]
    fn cv_is_none_for_zero_mean() {
        let mut s = SummaryStats::new();
        for _ in 0..10 {
            push_raw(&mut s, 0.0);
        }
        assert_eq!(s.cv(), None);
    }

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..5000)
            .map(|i| ((i * 1103515245u64 + 12345) % 100_000) as f64 / 1e5)
            .collect();
        let mut whole = SummaryStats::new();
        for &x in &xs {
            push_raw(&mut whole, x);
        }
        // Random-ish partition into three pieces, merged in order.
        let mut a = SummaryStats::new();
        let mut b = SummaryStats::new();
        let mut c = SummaryStats::new();
        for (i, &x) in xs.iter().enumerate() {
            match i % 3 {
                0 => push_raw(&mut a, x),
                1 => push_raw(&mut b, x),
                _ => push_raw(&mut c, x),
            }
        }
        let mut merged = SummaryStats::new();
        merged.merge(&a);
        merged.merge(&b);
        merged.merge(&c);
        assert_eq!(merged.n(), whole.n());
        assert!((merged.estimate() - whole.estimate()).abs() <= 1e-12 * whole.estimate().abs());
        assert!((merged.variance() - whole.variance()).abs() <= 1e-12 * whole.variance());
    }

    #[test]
    fn merge_is_commutative_within_tolerance() {
        let mut a = SummaryStats::new();
        let mut b = SummaryStats::new();
        for i in 0..100 {
            push_raw(&mut a, (i as f64).sin().abs());
            push_raw(&mut b, (i as f64).cos().powi(2));
        }
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert!((ab.estimate() - ba.estimate()).abs() < 1e-12);
        assert!((ab.variance() - ba.variance()).abs() < 1e-12);
    }
}
