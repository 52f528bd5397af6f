//! Multivariate normal distributions: construction, sampling, densities and
//! exact conditioning through the Schur complement.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

const SYMMETRY_TOL: f64 = 1e-12;

/// Rows per independently seeded sampling block.
pub(crate) const SAMPLE_BLOCK: usize = 8192;

/// Lower-triangular `L` with `L Lᵀ = Σ` and a strictly positive diagonal.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
}

impl CholeskyFactor {
    fn factor(cov: &DMatrix<f64>) -> Option<Self> {
        let lower = Cholesky::new(cov.clone())?.l();
        if lower.diagonal().iter().any(|&d| d.is_nan() || d <= 0.0) {
            return None;
        }
        Some(Self { lower })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct GaussianDistribution {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: CholeskyFactor,
}

impl GaussianDistribution {
    /// Validates dimensions, symmetry (to 1e-12) and positive definiteness.
    /// The covariance is symmetrized before factorization.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::DimensionMismatch {
                expected: cov.nrows(),
                actual: cov.ncols(),
            });
        }
        if mean.len() != cov.nrows() {
            return Err(Error::DimensionMismatch {
                expected: cov.nrows(),
                actual: mean.len(),
            });
        }
        if mean.is_empty() {
            return Err(Error::Empty("mean vector"));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(
                "non-finite mean or covariance entry".into(),
            ));
        }
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let factor = CholeskyFactor::factor(&cov).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { mean, cov, factor })
    }

    pub fn from_rows(mean: &[f64], rows: &[&[f64]]) -> Result<Self> {
        let k = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: bad.len(),
            });
        }
        let cov = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        Self::new(DVector::from_column_slice(mean), cov)
    }

    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cholesky(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// `n` draws as an `n × dim` matrix, one draw per row.
    ///
    /// Rows are generated in blocks of [`SAMPLE_BLOCK`]; block `b` reads its
    /// own stream, so the output does not depend on the worker count.
    pub fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let rows = self.sample_row_major(n, seed, Domain::GaussianSample);
        DMatrix::from_row_slice(n, self.dim(), &rows)
    }

    pub(crate) fn sample_row_major(&self, n: usize, seed: u64, domain: Domain) -> Vec<f64> {
        let k = self.dim();
        let lower = &self.factor.lower;
        let mut out = vec![0.0; n * k];
        out.par_chunks_mut(SAMPLE_BLOCK * k)
            .enumerate()
            .for_each(|(block, chunk)| {
                let mut rng = rng::stream_rng(seed, domain, block as u64);
                let mut z = vec![0.0; k];
                for row in chunk.chunks_exact_mut(k) {
                    for zi in z.iter_mut() {
                        *zi = rng::standard_normal(&mut rng);
                    }
                    for i in 0..k {
                        let mut acc = self.mean[i];
                        for j in 0..=i {
                            acc += lower[(i, j)] * z[j];
                        }
                        row[i] = acc;
                    }
                }
            });
        out
    }

    pub fn log_density(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: point.len(),
            });
        }
        let centered = DVector::from_column_slice(point) - &self.mean;
        let whitened = self
            .factor
            .lower
            .solve_lower_triangular(&centered)
            .expect("cholesky factor has a positive diagonal");
        let k = self.dim() as f64;
        Ok(-0.5
            * (k * (2.0 * std::f64::consts::PI).ln()
                + self.factor.log_det()
                + whitened.norm_squared()))
    }

    pub fn density(&self, point: &[f64]) -> Result<f64> {
        self.log_density(point).map(f64::exp)
    }

    /// Marginal law of the coordinates in `indices` (in the given order).
    pub fn marginal(&self, indices: &[usize]) -> Result<Self> {
        self.check_indices(indices, true)?;
        let mean = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.mean[i]));
        let cov = self.cov.select_rows(indices).select_columns(indices);
        Self::new(mean, cov)
    }

    /// Conditional law of the remaining coordinates (ascending order) given
    /// that `observed_indices` take `observed_values`.
    pub fn condition(&self, observed_indices: &[usize], observed_values: &[f64]) -> Result<Self> {
        self.check_indices(observed_indices, false)?;
        if observed_values.len() != observed_indices.len() {
            return Err(Error::DimensionMismatch {
                expected: observed_indices.len(),
                actual: observed_values.len(),
            });
        }
        let rest: Vec<usize> = (0..self.dim())
            .filter(|i| !observed_indices.contains(i))
            .collect();

        let s_oo = self
            .cov
            .select_rows(observed_indices)
            .select_columns(observed_indices);
        let s_ro = self.cov.select_rows(&rest).select_columns(observed_indices);
        let s_rr = self.cov.select_rows(&rest).select_columns(&rest);
        let chol_oo = Cholesky::new(s_oo).ok_or(Error::SingularObservedBlock)?;

        let delta = DVector::from_iterator(
            observed_indices.len(),
            observed_indices
                .iter()
                .zip(observed_values)
                .map(|(&i, &v)| v - self.mean[i]),
        );
        let mean_r = DVector::from_iterator(rest.len(), rest.iter().map(|&i| self.mean[i]));
        let cond_mean = mean_r + &s_ro * chol_oo.solve(&delta);
        let cond_cov = &s_rr - &s_ro * chol_oo.solve(&s_ro.transpose());
        Self::new(cond_mean, cond_cov)
    }

    fn check_indices(&self, indices: &[usize], allow_all: bool) -> Result<()> {
        if indices.is_empty() {
            return Err(Error::InvalidIndexSet("empty".into()));
        }
        if !allow_all && indices.len() >= self.dim() {
            return Err(Error::InvalidIndexSet("must be a strict subset".into()));
        }
        for (pos, &i) in indices.iter().enumerate() {
            if i >= self.dim() {
                return Err(Error::InvalidIndexSet(format!("index {i} out of range")));
            }
            if indices[..pos].contains(&i) {
                return Err(Error::InvalidIndexSet(format!("index {i} repeated")));
            }
        }
        Ok(())
    }
}
