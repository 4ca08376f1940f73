//! Perron-Frobenius eigenproblem for the tilted matrix
//! `Q_theta(x, y) = K(x, y) exp(chi(y, theta))`, the log spectral radius
//! `psi(theta)`, and the Cramer root `theta*` with `psi(theta*) = 0`.
//!
//! The matrices involved are tiny, non-negative and irreducible, so power
//! iteration on a diagonally shifted copy (which is primitive even when the
//! kernel is periodic) is all that is needed. For up to eight states the
//! eigenvalue is cross-checked against an independent characteristic-
//! polynomial route; the two-state case uses the closed-form quadratic root.

use crate::error::{CoreError, Result};
use crate::matrix::SquareMatrix;
use crate::model::{cgf, validate, ModelSpec};

/// Convergence tolerance on successive log-eigenvalue estimates.
const LOG_EIG_TOL: f64 = 1e-13;
const MAX_POWER_ITERS: usize = 100_000;

/// Dominant eigenpair of a non-negative irreducible matrix, eigenvector
/// normalized so its minimum entry is exactly 1.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    /// Tilt parameter the matrix was built at (NaN when solved from a raw
    /// matrix without tilt context).
    pub theta: f64,
    /// `psi(theta)`: natural log of the dominant eigenvalue.
    pub log_eig: f64,
    /// Positive right eigenvector with `min_x u(x) = 1`.
    pub eigvec: Vec<f64>,
    /// Sup-norm of `Q u - e^{psi} u`.
    pub residual: f64,
}

/// Everything downstream samplers need about the tilt at `theta*`:
/// the root itself, the drift `mu = psi'(theta*)`, the eigenvector, and the
/// tilted transition kernel
/// `K_{theta*}(x,y) = K(x,y) exp(chi(y,theta*) - psi(theta*)) u(y)/u(x)`.
///
/// Immutable after construction; shared freely across replication workers.
#[derive(Debug, Clone)]
pub struct TiltEnvelope {
    pub theta_star: f64,
    /// `psi'(theta*) > 0`: mean drift of the increments under the tilt.
    pub mu: f64,
    /// `psi''(theta*)`.
    pub psi2_at_star: f64,
    /// Residual value of `psi` at the computed root (|psi| <= 1e-10).
    pub psi_at_star: f64,
    pub u_star: Vec<f64>,
    log_u_star: Vec<f64>,
    tilted_kernel: SquareMatrix,
    tilted_cdf: Vec<f64>,
}

impl TiltEnvelope {
    #[inline]
    pub fn n_states(&self) -> usize {
        self.u_star.len()
    }

    #[inline]
    pub fn u(&self, x: usize) -> f64 {
        self.u_star[x]
    }

    #[inline]
    pub fn log_u(&self, x: usize) -> f64 {
        self.log_u_star[x]
    }

    pub fn tilted_kernel(&self) -> &SquareMatrix {
        &self.tilted_kernel
    }

    /// One-step log likelihood ratio of nominal over tilted dynamics given
    /// the transition `x -> y` with increment `gamma` (the `psi(theta*)`
    /// term vanishes at the Cramer root):
    /// `-theta* gamma + ln u(x) - ln u(y)`.
    #[inline]
    pub fn log_lr_step(&self, x: usize, y: usize, gamma: f64) -> f64 {
        -self.theta_star * gamma + self.log_u_star[x] - self.log_u_star[y]
    }

    /// Inverse-CDF draw of the next state under the tilted kernel.
    #[inline]
    pub fn sample_next_tilted<R: rand::Rng + ?Sized>(&self, rng: &mut R, x: usize) -> usize {
        let n = self.n_states();
        if n == 1 {
            return 0;
        }
        let row = &self.tilted_cdf[x * n..(x + 1) * n];
        let u: f64 = rng.random();
        row.iter().position(|&c| u < c).unwrap_or(n - 1)
    }
}

/// `Q_theta(x, y) = K(x, y) exp(chi(y, theta))`.
pub fn tilted_matrix(model: &ModelSpec, theta: f64) -> Result<SquareMatrix> {
    let n = model.n_states();
    let chis: Vec<f64> = (0..n)
        .map(|y| cgf(model, y, theta))
        .collect::<Result<_>>()?;
    let mut q = SquareMatrix::zeros(n);
    for x in 0..n {
        for y in 0..n {
            q.set(x, y, model.kernel().get(x, y) * chis[y].exp());
        }
    }
    Ok(q)
}

/// Dominant eigenpair by power iteration, with an independent cross-check
/// for small matrices. Fails on reducible input or non-convergence.
pub fn principal_eig(q: &SquareMatrix) -> Result<SpectralSolution> {
    let n = q.n();
    if n == 0 {
        return Err(CoreError::InvalidParameter("empty matrix".into()));
    }
    for i in 0..n {
        for j in 0..n {
            let v = q.get(i, j);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CoreError::InvalidParameter(format!(
                    "matrix entry ({i},{j}) = {v} is not finite and non-negative"
                )));
            }
        }
    }
    if !q.is_irreducible() {
        return Err(CoreError::Reducible);
    }
    if n == 1 {
        let lam = q.get(0, 0);
        return Ok(SpectralSolution {
            theta: f64::NAN,
            log_eig: lam.ln(),
            eigvec: vec![1.0],
            residual: 0.0,
        });
    }

    // Shift by c*I so the iteration matrix is primitive (positive diagonal)
    // even for periodic kernels; the eigenvector is unchanged and the
    // eigenvalue shifts by exactly c.
    let scale = q
        .row_sums()
        .into_iter()
        .fold(f64::MIN, f64::max)
        .max(f64::MIN_POSITIVE);
    let shift = 0.5 * scale;

    let mut v = vec![1.0; n];
    let mut lam_shifted = f64::NAN;
    let mut iters = 0usize;
    let mut gap = f64::INFINITY;
    while iters < MAX_POWER_ITERS {
        iters += 1;
        let mut w = q.mul_vec(&v);
        for i in 0..n {
            w[i] += shift * v[i];
        }
        // Collatz-Wielandt bounds bracket the dominant eigenvalue of the
        // shifted matrix.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = w[i] / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let est = 0.5 * (lo + hi);
        let max_w = w.iter().cloned().fold(f64::MIN, f64::max);
        for x in w.iter_mut() {
            *x /= max_w;
        }
        let done = (est.ln() - lam_shifted.ln()).abs() < LOG_EIG_TOL
            && (hi - lo) <= 1e-12 * est.abs().max(f64::MIN_POSITIVE);
        lam_shifted = est;
        gap = hi - lo;
        v = w;
        if done {
            break;
        }
    }
    if iters >= MAX_POWER_ITERS {
        return Err(CoreError::NonConvergence {
            iters,
            residual: gap,
        });
    }

    let lam = lam_shifted - shift;
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let u: Vec<f64> = v.iter().map(|x| x / vmin).collect();
    let qu = q.mul_vec(&u);
    let residual = qu
        .iter()
        .zip(&u)
        .map(|(a, b)| (a - lam * b).abs())
        .fold(0.0, f64::max);
    let umax = u.iter().cloned().fold(f64::MIN, f64::max);
    if residual > 1e-10 * umax * lam {
        return Err(CoreError::NonConvergence { iters, residual });
    }

    cross_check_eigenvalue(q, lam, scale)?;

    Ok(SpectralSolution {
        theta: f64::NAN,
        log_eig: lam.ln(),
        eigvec: u,
        residual,
    })
}

/// Independent eigenvalue route for small matrices: the closed-form
/// quadratic for n = 2, a characteristic-polynomial Newton polish (on the
/// matrix scaled to unit spectral size) for 3 <= n <= 8.
fn cross_check_eigenvalue(q: &SquareMatrix, lam: f64, scale: f64) -> Result<()> {
    let n = q.n();
    if n == 2 {
        let tr = q.get(0, 0) + q.get(1, 1);
        let det = q.get(0, 0) * q.get(1, 1) - q.get(0, 1) * q.get(1, 0);
        let root = 0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt());
        if (root - lam).abs() > 1e-10 * lam.abs().max(1.0) {
            return Err(CoreError::NonConvergence {
                iters: 0,
                residual: (root - lam).abs(),
            });
        }
        return Ok(());
    }
    if n > 8 {
        return Ok(());
    }
    // Faddeev-LeVerrier characteristic polynomial of B = Q / scale, then a
    // Newton polish of lambda/scale against it.
    let mut b = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            b.set(i, j, q.get(i, j) / scale);
        }
    }
    let coeffs = char_poly(&b);
    let mut x = lam / scale;
    for _ in 0..40 {
        let (p, dp) = horner(&coeffs, x);
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        x -= step;
        if step.abs() < 1e-15 * x.abs().max(1e-300) {
            break;
        }
    }
    let polished = x * scale;
    if (polished - lam).abs() > 1e-8 * lam.abs().max(1.0) {
        return Err(CoreError::NonConvergence {
            iters: 0,
            residual: (polished - lam).abs(),
        });
    }
    Ok(())
}

/// Monic characteristic polynomial coefficients `[1, c1, ..., cn]` via
/// Faddeev-LeVerrier.
fn char_poly(a: &SquareMatrix) -> Vec<f64> {
    let n = a.n();
    let mut coeffs = vec![1.0];
    let mut m = SquareMatrix::zeros(n); // M_0 = 0
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{k-1} I
        let mut am = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += a.get(i, l) * m.get(l, j);
                }
                am.set(i, j, s);
            }
        }
        for i in 0..n {
            am.set(i, i, am.get(i, i) + coeffs[k - 1]);
        }
        // c_k = -tr(A M_k) / k
        let mut tr = 0.0;
        for i in 0..n {
            for l in 0..n {
                tr += a.get(i, l) * am.get(l, i);
            }
        }
        coeffs.push(-tr / k as f64);
        m = am;
    }
    coeffs
}

/// Horner evaluation of the polynomial and its derivative.
fn horner(coeffs: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &c in coeffs {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// Dominant eigenpair of `Q_theta` with the tilt recorded.
pub fn spectral_solution(model: &ModelSpec, theta: f64) -> Result<SpectralSolution> {
    let q = tilted_matrix(model, theta)?;
    let mut s = principal_eig(&q)?;
    s.theta = theta;
    Ok(s)
}

/// `psi(theta)`: log of the dominant eigenvalue of `Q_theta`.
pub fn psi(model: &ModelSpec, theta: f64) -> Result<f64> {
    Ok(spectral_solution(model, theta)?.log_eig)
}

/// Richardson-extrapolated central difference for `psi'`.
pub fn psi_prime(model: &ModelSpec, theta: f64) -> Result<f64> {
    let h = 1e-5;
    let d = |h: f64| -> Result<f64> {
        Ok((psi(model, theta + h)? - psi(model, theta - h)?) / (2.0 * h))
    };
    let d1 = d(h)?;
    let d2 = d(h / 2.0)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Central second difference for `psi''`.
pub fn psi_second(model: &ModelSpec, theta: f64) -> Result<f64> {
    let h = 1e-4;
    Ok((psi(model, theta + h)? - 2.0 * psi(model, theta)? + psi(model, theta - h)?) / (h * h))
}

/// Locates the Cramer root `theta* > 0` with `psi(theta*) = 0` and builds
/// the tilt envelope at it.
///
/// Bracketing scans `theta = 0.01 * 2^k` upward, stopping just short of the
/// CGF domain edge; absence of a sign change means the Cramer condition
/// fails. Bisection then drives `|psi|` below 1e-10 with bracket width at
/// most 1e-12.
pub fn find_theta_star(model: &ModelSpec) -> Result<TiltEnvelope> {
    let violations = validate(model);
    if !violations.is_empty() {
        return Err(CoreError::InvalidModel(violations));
    }
    let (_, dom_hi) = model.cgf_domain();
    let edge = if dom_hi.is_finite() {
        dom_hi - 1e-6
    } else {
        f64::INFINITY
    };

    let mut lo = 0.0_f64; // psi(0) = 0; treat as the negative side anchor
    let mut hi = None;
    let mut seen_negative = false;
    let mut theta = 0.01_f64;
    for _ in 0..40 {
        let t = theta.min(edge);
        let p = psi(model, t)?;
        if p < 0.0 {
            seen_negative = true;
            lo = t;
        } else if p == 0.0 {
            // Degenerate landing exactly on the root.
            seen_negative = true;
            lo = t;
        } else {
            if !seen_negative {
                return Err(CoreError::CramerCondition(format!(
                    "psi({t}) = {p} > 0 with no negative values below; \
                     the nominal drift is not negative"
                )));
            }
            hi = Some(t);
            break;
        }
        if t >= edge {
            break;
        }
        theta *= 2.0;
    }
    let mut hi = hi.ok_or_else(|| {
        CoreError::CramerCondition("psi never becomes positive inside the CGF domain".to_string())
    })?;

    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if psi(model, mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta_star = 0.5 * (lo + hi);
    let psi_at_star = psi(model, theta_star)?;
    if psi_at_star.abs() > 1e-10 {
        return Err(CoreError::NonConvergence {
            iters: 0,
            residual: psi_at_star.abs(),
        });
    }

    let mu = psi_prime(model, theta_star)?;
    if !(mu > 0.0) {
        return Err(CoreError::CramerCondition(format!(
            "psi'(theta*) = {mu} must be positive"
        )));
    }
    let psi2_at_star = psi_second(model, theta_star)?;

    let sol = spectral_solution(model, theta_star)?;
    let u_star = sol.eigvec;
    let log_u_star: Vec<f64> = u_star.iter().map(|u| u.ln()).collect();

    let n = model.n_states();
    let mut tilted_kernel = SquareMatrix::zeros(n);
    for y in 0..n {
        let w = (cgf(model, y, theta_star)? - psi_at_star).exp() * u_star[y];
        for x in 0..n {
            tilted_kernel.set(x, y, model.kernel().get(x, y) * w / u_star[x]);
        }
    }
    let mut tilted_cdf = vec![0.0; n * n];
    for x in 0..n {
        let total: f64 = tilted_kernel.row(x).iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(CoreError::NonConvergence {
                iters: 0,
                residual: (total - 1.0).abs(),
            });
        }
        let mut acc = 0.0;
        for y in 0..n {
            acc += tilted_kernel.get(x, y) / total;
            tilted_cdf[x * n + y] = acc;
        }
        tilted_cdf[x * n + n - 1] = 1.0;
    }

    Ok(TiltEnvelope {
        theta_star,
        mu,
        psi2_at_star,
        psi_at_star,
        u_star,
        log_u_star,
        tilted_kernel,
        tilted_cdf,
    })
}

/// `sup` over an inclusive uniform grid on `[0, theta*]` of
/// `(psi''(z) + psi'(z)^2) / 2`, the conservative Taylor constant used as a
/// reference bound for the Lyapunov drift analysis.
pub fn psi_second_sup(model: &ModelSpec, theta_star: f64, grid_n: usize) -> Result<f64> {
    if grid_n < 32 {
        return Err(CoreError::Precondition(format!(
            "grid too coarse: need grid_n >= 32, got {grid_n}"
        )));
    }
    let h = 1e-4;
    let mut sup = f64::NEG_INFINITY;
    for k in 0..grid_n {
        let z = theta_star * k as f64 / (grid_n - 1) as f64;
        let pm = psi(model, z - h)?;
        let p0 = psi(model, z)?;
        let pp = psi(model, z + h)?;
        let d1 = (pp - pm) / (2.0 * h);
        let d2 = (pp - 2.0 * p0 + pm) / (h * h);
        sup = sup.max((d2 + d1 * d1) / 2.0);
    }
    Ok(sup)
}
