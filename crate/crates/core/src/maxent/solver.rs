//! Newton solver for the dual of the maximum-entropy program.
//!
//! The dual objective is `D(Λ) = ⟨Λ, μ⟩ + log ∫ e^{−⟨Λ, φ(x)⟩} dx`, whose
//! gradient is `μ − E_f[φ]` and Hessian `Cov_f(φ)`. Raw fractional-power
//! features are nearly collinear, so Newton runs on whitened features
//! `ψ = L⁻¹(φ − m)` where `m` and `LLᵀ` are the mean and covariance of `φ`
//! under the uniform law on the support. Multipliers are mapped back at the
//! end.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::GRADIENT_BOUND;
use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const MAX_HALVINGS: usize = 60;
/// Stopping tolerance on the gradient in original feature coordinates.
pub(crate) const GRAD_TOL: f64 = 1e-10;
/// Gradient accepted once Newton steps no longer decrease the objective.
const FLOOR_TOL: f64 = 1e-7;
/// Whitened multipliers beyond this norm are read as divergence.
const DIVERGENCE_NORM: f64 = 1e8;

/// Features evaluated at quadrature nodes, row-major `nodes × n`.
pub(crate) struct Design {
    pub n: usize,
    pub features: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Design {
    fn row(&self, k: usize) -> &[f64] {
        &self.features[k * self.n..(k + 1) * self.n]
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    /// Log-normalizer and the first two moments of `φ` under
    /// `e^{−⟨Λ,φ⟩}` (normalized).
    pub fn moments(&self, lambda: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        moments(self.n, self.len(), |k| self.row(k), &self.weights, lambda)
    }
}

fn moments<'a>(
    n: usize,
    len: usize,
    row: impl Fn(usize) -> &'a [f64],
    weights: &[f64],
    lambda: &[f64],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let expo: Vec<f64> = (0..len)
        .map(|k| -row(k).iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let top = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut mean = DVector::zeros(n);
    let p: Vec<f64> = expo
        .iter()
        .zip(weights)
        .map(|(e, w)| w * (e - top).exp())
        .collect();
    for k in 0..len {
        z += p[k];
        for (j, v) in row(k).iter().enumerate() {
            mean[j] += p[k] * v;
        }
    }
    mean /= z;
    let mut cov = DMatrix::zeros(n, n);
    for k in 0..len {
        let r = row(k);
        for a in 0..n {
            let da = r[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += p[k] * da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov /= z;
    (top + z.ln(), mean, cov)
}

fn log_partition<'a>(
    len: usize,
    row: impl Fn(usize) -> &'a [f64],
    weights: &[f64],
    lambda: &[f64],
) -> f64 {
    let expo: Vec<f64> = (0..len)
        .map(|k| -row(k).iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let top = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = expo
        .iter()
        .zip(weights)
        .map(|(e, w)| w * (e - top).exp())
        .sum();
    top + z.ln()
}

pub(crate) struct DualSolution {
    pub multipliers: Vec<f64>,
    pub log_normalizer: f64,
    /// `‖μ − E_f[φ]‖₂` in original feature coordinates.
    pub gradient_norm: f64,
    pub iterations: usize,
}

fn chol_with_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.trace().abs().max(f64::MIN_POSITIVE) / m.nrows() as f64;
    let mut jitter = 1e-14 * scale;
    for _ in 0..10 {
        let mut j = m.clone();
        for i in 0..m.nrows() {
            j[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(j) {
            return Some(c);
        }
        jitter *= 100.0;
    }
    None
}

/// Minimizes the dual for `targets` over the quadrature `design`, starting
/// from `init` (original coordinates) or from the uniform density.
pub(crate) fn solve_dual(
    design: &Design,
    targets: &[f64],
    init: Option<&[f64]>,
) -> Result<DualSolution> {
    let n = design.n;
    assert_eq!(targets.len(), n);
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Infeasible("non-finite moment target".into()));
    }

    // whitening under the uniform law
    let (_, m, cov0) = design.moments(&vec![0.0; n]);
    let chol = chol_with_jitter(&cov0).ok_or_else(|| {
        Error::Infeasible("features are linearly dependent on the support".into())
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Infeasible("singular feature covariance".into()))?;
    let mut psi = vec![0.0; design.features.len()];
    for k in 0..design.len() {
        let d = DVector::from_iterator(n, design.row(k).iter().zip(m.iter()).map(|(a, b)| a - b));
        let w = &l_inv * d;
        psi[k * n..(k + 1) * n].copy_from_slice(w.as_slice());
    }
    let mu = &l_inv * DVector::from_iterator(n, targets.iter().zip(m.iter()).map(|(a, b)| a - b));
    let row = |k: usize| &psi[k * n..(k + 1) * n];
    let eval = |theta: &DVector<f64>| {
        let (logz, mean, cov) = moments(n, design.len(), row, &design.weights, theta.as_slice());
        (theta.dot(&mu) + logz, logz, mean, cov)
    };
    let objective =
        |theta: &DVector<f64>| theta.dot(&mu) + log_partition(design.len(), row, &design.weights, theta.as_slice());

    // ⟨Λ, φ − m⟩ = ⟨LᵀΛ, ψ⟩
    let mut theta = match init {
        Some(lambda) => l.transpose() * DVector::from_column_slice(lambda),
        None => DVector::zeros(n),
    };
    let (mut obj, mut logz, mut mean, mut cov) = eval(&theta);
    if !obj.is_finite() {
        theta = DVector::zeros(n);
        (obj, logz, mean, cov) = eval(&theta);
    }
    let mut iterations = 0;
    loop {
        let grad = &mu - &mean;
        let grad_orig = &l * &grad;
        if grad_orig.norm() <= GRAD_TOL {
            break;
        }
        if iterations >= MAX_ITER {
            if grad_orig.norm() <= GRADIENT_BOUND {
                break;
            }
            return Err(Error::Infeasible(format!(
                "dual Newton did not converge in {MAX_ITER} iterations (gradient {:e})",
                grad_orig.norm()
            )));
        }
        iterations += 1;
        // dual gradient w.r.t. θ is μ − E[ψ]; descent direction solves Cov·d = −grad
        let step = match chol_with_jitter(&cov) {
            Some(c) => -c.solve(&grad),
            None => -grad.clone(),
        };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = &theta + t * &step;
            let value = objective(&cand);
            if value.is_finite() && value <= obj + 1e-4 * t * slope {
                accepted = Some(eval(&cand)).map(|next| (cand, next));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, next)) => {
                let stalled = obj - next.0 <= 4.0 * f64::EPSILON * obj.abs().max(1.0);
                theta = cand;
                (obj, logz, mean, cov) = next;
                // at the precision floor of the quadrature sums
                if stalled && grad_orig.norm() <= FLOOR_TOL {
                    break;
                }
            }
            None => {
                // no further decrease representable; accept if close enough
                if grad_orig.norm() <= FLOOR_TOL {
                    break;
                }
                return Err(Error::Infeasible(format!(
                    "line search failed at gradient {:e}",
                    grad_orig.norm()
                )));
            }
        }
        if theta.norm() > DIVERGENCE_NORM {
            return Err(Error::Infeasible(format!(
                "multipliers diverge (‖Λ‖ = {:e})",
                theta.norm()
            )));
        }
    }
    let lambda = l_inv.transpose() * &theta;
    let log_normalizer = lambda.dot(&m) - logz;
    let gradient_norm = (&l * (&mu - &mean)).norm();
    Ok(DualSolution {
        multipliers: lambda.iter().copied().collect(),
        log_normalizer,
        gradient_norm,
        iterations,
    })
}

/// Dual objective `⟨Λ, μ⟩ + log ∫ e^{−⟨Λ,φ⟩}` in original coordinates.
pub(crate) fn dual_objective(design: &Design, targets: &[f64], lambda: &[f64]) -> f64 {
    let (logz, _, _) = design.moments(lambda);
    lambda.iter().zip(targets).map(|(a, b)| a * b).sum::<f64>() + logz
}
