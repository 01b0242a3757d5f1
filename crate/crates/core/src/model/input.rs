use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::marginal::Marginal;
use crate::error::{invalid, Result};
use crate::rng::{StreamFactory, StreamId};

/// Joint dependence structure of the inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Dependence {
    Independent,
    /// `X ~ N(ν, Σ)`; every marginal is normal with `scale² = Σ_ii`.
    Gaussian { covariance: DMatrix<f64> },
}

/// Joint input law of the black box.
#[derive(Debug, Clone)]
pub struct InputModel {
    marginals: Vec<Marginal>,
    dependence: Dependence,
    cholesky: Option<DMatrix<f64>>,
    log_det: f64,
}

impl InputModel {
    pub fn independent(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(invalid("inputs.marginals", "at least one input required"));
        }
        for (i, m) in marginals.iter().enumerate() {
            m.validate(&format!("inputs.marginals[{i}]"))?;
        }
        Ok(Self {
            marginals,
            dependence: Dependence::Independent,
            cholesky: None,
            log_det: 0.0,
        })
    }

    /// Multivariate normal with the given means and covariance.
    pub fn gaussian(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(invalid("inputs.marginals", "at least one input required"));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(invalid(
                "inputs.covariance",
                format!("expected {d}x{d}, got {}x{}", covariance.nrows(), covariance.ncols()),
            ));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (covariance[(i, j)], covariance[(j, i)]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(invalid("inputs.covariance", "must be symmetric"));
                }
            }
        }
        let chol = nalgebra::Cholesky::new(covariance.clone())
            .ok_or_else(|| invalid("inputs.covariance", "must be positive definite"))?;
        let l = chol.l();
        let log_det = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        let marginals = (0..d)
            .map(|i| Marginal::normal(mean[i], covariance[(i, i)].sqrt()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            marginals,
            dependence: Dependence::Gaussian { covariance },
            cholesky: Some(l),
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn marginal(&self, i: usize) -> &Marginal {
        &self.marginals[i]
    }

    pub fn dependence(&self) -> &Dependence {
        &self.dependence
    }

    pub fn is_dependent(&self) -> bool {
        matches!(self.dependence, Dependence::Gaussian { .. })
    }

    /// Lower Cholesky factor of `Σ`, when the inputs are jointly Gaussian.
    pub fn cholesky(&self) -> Option<&DMatrix<f64>> {
        self.cholesky.as_ref()
    }

    /// True when the joint law is Gaussian (dependent or independent normals).
    pub fn is_gaussian(&self) -> bool {
        self.cholesky.is_some() || self.marginals.iter().all(Marginal::is_normal)
    }

    /// `(ν, L)` with `X = ν + L·Z`, for Gaussian inputs.
    pub fn gaussian_factor(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        if !self.is_gaussian() {
            return None;
        }
        let nu = DVector::from_iterator(self.dim(), self.marginals.iter().map(|m| m.location));
        let l = match &self.cholesky {
            Some(l) => l.clone(),
            None => DMatrix::from_diagonal(&DVector::from_iterator(
                self.dim(),
                self.marginals.iter().map(|m| m.scale),
            )),
        };
        Some((nu, l))
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.cholesky {
            None => self.marginals.iter().map(|m| m.sample(rng)).collect(),
            Some(l) => {
                let z = DVector::from_iterator(
                    self.dim(),
                    (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)),
                );
                let lz = l * z;
                self.marginals
                    .iter()
                    .zip(lz.iter())
                    .map(|(m, v)| m.location + v)
                    .collect()
            }
        }
    }

    /// Joint log density.
    pub fn ln_density(&self, x: &[f64]) -> f64 {
        match &self.cholesky {
            None => self
                .marginals
                .iter()
                .zip(x)
                .map(|(m, v)| m.ln_pdf(*v))
                .sum(),
            Some(l) => {
                let d = self.dim();
                let r = DVector::from_iterator(
                    d,
                    x.iter().zip(&self.marginals).map(|(v, m)| v - m.location),
                );
                let z = l
                    .solve_lower_triangular(&r)
                    .expect("Cholesky factor is non-singular");
                -0.5 * z.norm_squared()
                    - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
                    - 0.5 * self.log_det
            }
        }
    }

    /// Standard deviation of each input.
    pub fn sds(&self) -> Vec<f64> {
        self.marginals.iter().map(Marginal::sd).collect()
    }
}

/// `n` i.i.d. draws from the input law, deterministic given `seed`.
pub fn sample_input(model: &InputModel, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = StreamFactory::new(seed).stream(StreamId::Initial);
    (0..n).map(|_| model.sample_one(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs_covariance() {
        let cov = DMatrix::from_row_slice(3, 3, &[4.0, 1.2, -0.4, 1.2, 2.0, 0.3, -0.4, 0.3, 1.0]);
        let m = InputModel::gaussian(vec![0.0, 1.0, 2.0], cov.clone()).unwrap();
        let l = m.cholesky().unwrap();
        let back = l * l.transpose();
        assert!((back - cov).abs().max() < 1e-10);
        assert!(m.is_gaussian() && m.is_dependent());
    }

    #[test]
    fn rejects_indefinite_or_asymmetric_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(InputModel::gaussian(vec![0.0, 0.0], cov).is_err());
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0]);
        assert!(InputModel::gaussian(vec![0.0, 0.0], cov).is_err());
    }

    #[test]
    fn gaussian_density_matches_independent_when_diagonal() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 5.0]);
        let dep = InputModel::gaussian(vec![0.0, 0.0], cov).unwrap();
        let ind = InputModel::independent(vec![
            Marginal::normal(0.0, 1.0).unwrap(),
            Marginal::normal(0.0, 5f64.sqrt()).unwrap(),
        ])
        .unwrap();
        for x in [[0.3, -1.0], [2.0, 4.0]] {
            assert!((dep.ln_density(&x) - ind.ln_density(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_have_dimension_d_and_are_seeded() {
        let m = InputModel::independent(vec![Marginal::normal(0.0, 1.0).unwrap(); 4]).unwrap();
        let a = sample_input(&m, 1, 99);
        let b = sample_input(&m, 1, 99);
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 4);
    }
}
