//! Tail-index check: least-squares slope of `ln phi_hat` against `ln delta`
//! over a delta grid. Under the Cramer asymptotics the slope estimates
//! `theta*`, which makes this an end-to-end consistency probe of model,
//! tilt, and estimator together.

use crate::config::{EstimatorKind, Load, Scenario};
use crate::runner::{run_scenario, RunError};

#[derive(Debug, Clone, Copy)]
pub struct SlopePoint {
    pub delta: f64,
    pub estimate: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone)]
pub struct SlopeFit {
    pub slope: f64,
    /// Propagated from the per-point confidence intervals via
    /// `var(ln phi) ~ (se/phi)^2`.
    pub std_err: f64,
    pub points: Vec<SlopePoint>,
}

/// Runs the SI estimator at each delta of the scenario's grid and fits the
/// log-log slope. Preconditions: at least 3 deltas spanning at least two
/// decades; a zero estimate anywhere aborts with "increase reps".
pub fn slope_check(sc: &Scenario, workers: usize) -> Result<SlopeFit, RunError> {
    if sc.estimator != EstimatorKind::Si {
        return Err(RunError::Config(
            "slope uses the state-independent estimator; set estimator=si".into(),
        ));
    }
    let deltas = sc
        .deltas
        .clone()
        .ok_or_else(|| RunError::Config("slope needs a deltas=... grid".into()))?;
    if deltas.len() < 3 {
        return Err(RunError::Config(format!(
            "slope needs at least 3 deltas, got {}",
            deltas.len()
        )));
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
        return Err(RunError::Config("every delta must lie in (0,1)".into()));
    }
    let dmax = deltas.iter().cloned().fold(f64::MIN, f64::max);
    let dmin = deltas.iter().cloned().fold(f64::MAX, f64::min);
    if dmax / dmin < 100.0 {
        return Err(RunError::Config(format!(
            "delta grid must span at least two decades; {dmin}..{dmax} does not"
        )));
    }
    if !matches!(sc.load, Load::Reps(_)) {
        return Err(RunError::Config("slope requires reps mode".into()));
    }

    let mut points = Vec::with_capacity(deltas.len());
    for (i, &delta) in deltas.iter().enumerate() {
        let mut one = sc.clone();
        one.delta = delta;
        one.deltas = None;
        one.name = format!("{}-d{}", sc.name, delta);
        // Decorrelate the per-delta replication streams.
        one.seed = sc
            .seed
            .wrapping_add(0x9E37_79B9u64.wrapping_mul(i as u64 + 1));
        let out = run_scenario(&one, workers)?;
        let estimate = out.stats.estimate();
        if estimate <= 0.0 {
            return Err(RunError::Numeric(format!(
                "estimate is zero at delta={delta}; increase reps"
            )));
        }
        points.push(SlopePoint {
            delta,
            estimate,
            std_err: out.stats.std_err(),
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.delta.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.estimate.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let slope: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * y).sum::<f64>() / sxx;
    let var: f64 = xs
        .iter()
        .zip(&points)
        .map(|(x, p)| {
            let vy = (p.std_err / p.estimate).powi(2);
            (x - xbar) * (x - xbar) * vy
        })
        .sum::<f64>()
        / (sxx * sxx);
    Ok(SlopeFit {
        slope,
        std_err: var.sqrt(),
        points,
    })
}
