use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::MixtureModel;
use crate::data::Samples;
use crate::error::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// `ln(sum(exp(x)))` with the maximum factored out. Empty or all `-inf` input
/// gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cholesky-factored Gaussian ready for repeated evaluation.
#[derive(Debug, Clone)]
pub(crate) struct PreparedGaussian {
    dim: usize,
    mean: Vec<f64>,
    /// Row-major lower Cholesky factor.
    lower: Vec<f64>,
    log_norm: f64,
}

impl PreparedGaussian {
    pub(crate) fn new(mean: &[f64], covariance: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: covariance.nrows(),
            });
        }
        for r in 0..d {
            for c in 0..r {
                let (a, b) = (covariance[(r, c)], covariance[(c, r)]);
                if (a - b).abs() > SYMMETRY_TOLERANCE * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let mut lower = vec![0.0; d * d];
        let mut log_det_half = 0.0;
        for r in 0..d {
            for c in 0..=r {
                lower[r * d + c] = l[(r, c)];
            }
            if l[(r, r)] <= 0.0 || !l[(r, r)].is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            log_det_half += l[(r, r)].ln();
        }
        Ok(Self {
            dim: d,
            mean: mean.to_vec(),
            lower,
            log_norm: -0.5 * d as f64 * (2.0 * PI).ln() - log_det_half,
        })
    }

    /// `ln N(x | mean, cov)`; `scratch` is reused across calls.
    pub(crate) fn log_density(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        if self.dim == 1 {
            let z = (x[0] - self.mean[0]) / self.lower[0];
            return self.log_norm - 0.5 * z * z;
        }
        let d = self.dim;
        scratch.clear();
        scratch.resize(d, 0.0);
        let mut maha = 0.0;
        for r in 0..d {
            let mut acc = x[r] - self.mean[r];
            for c in 0..r {
                acc -= self.lower[r * d + c] * scratch[c];
            }
            let z = acc / self.lower[r * d + r];
            scratch[r] = z;
            maha += z * z;
        }
        self.log_norm - 0.5 * maha
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PreparedModel {
    pub(crate) log_weights: Vec<f64>,
    pub(crate) gaussians: Vec<PreparedGaussian>,
    dim: usize,
}

impl PreparedModel {
    pub(crate) fn new(model: &MixtureModel) -> Result<Self> {
        let gaussians = model
            .components
            .iter()
            .map(|c| PreparedGaussian::new(&c.mean, &c.covariance))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            log_weights: model.components.iter().map(|c| c.weight.ln()).collect(),
            gaussians,
            dim: model.dimension,
        })
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: d,
            });
        }
        Ok(())
    }

    /// Fills `out` with `ln pi_j + ln N(x | mu_j, Sigma_j)` and returns their
    /// log-sum-exp, i.e. `ln p(x)`.
    pub(crate) fn weighted_log_densities(
        &self,
        x: &[f64],
        out: &mut [f64],
        scratch: &mut Vec<f64>,
    ) -> f64 {
        for ((o, lw), g) in out.iter_mut().zip(&self.log_weights).zip(&self.gaussians) {
            *o = if *lw == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lw + g.log_density(x, scratch)
            };
        }
        log_sum_exp(out)
    }
}

pub fn gaussian_log_density(x: &[f64], mean: &[f64], covariance: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            actual: x.len(),
        });
    }
    let g = PreparedGaussian::new(mean, covariance)?;
    Ok(g.log_density(x, &mut Vec::new()))
}

/// `p(x) = sum_j pi_j N(x | mu_j, Sigma_j)`, evaluated through log-sum-exp.
pub fn mixture_density(x: &[f64], model: &MixtureModel) -> Result<f64> {
    let prepared = PreparedModel::new(model)?;
    prepared.check_dim(x.len())?;
    let mut buf = vec![0.0; model.k()];
    Ok(prepared
        .weighted_log_densities(x, &mut buf, &mut Vec::new())
        .exp())
}

/// `sum_n ln p(x_n)`.
pub fn log_likelihood(data: &Samples, model: &MixtureModel) -> Result<f64> {
    let prepared = PreparedModel::new(model)?;
    prepared.check_dim(data.dim())?;
    let mut buf = vec![0.0; model.k()];
    let mut scratch = Vec::new();
    Ok(data
        .rows()
        .map(|x| prepared.weighted_log_densities(x, &mut buf, &mut scratch))
        .sum())
}
