use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::density::PreparedModel;
use super::init::{init_with_floor, InitStrategy};
use super::{GaussianComponent, MixtureModel};
use crate::data::Samples;
use crate::error::{Error, Result};

/// Effective counts below this are treated as a collapsed component.
pub const COLLAPSE_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub seed: u64,
    pub max_iterations: usize,
    /// Absolute change in total log-likelihood that counts as converged.
    pub tolerance: f64,
    pub n_restarts: usize,
    /// Relative covariance floor: each dimension's floor is this factor times
    /// the global sample variance of that dimension (or times 1 when that
    /// variance is zero).
    pub covariance_floor: f64,
    pub init: InitStrategy,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iterations: 200,
            tolerance: 1e-6,
            n_restarts: 4,
            covariance_floor: 1e-6,
            init: InitStrategy::Quantile,
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.n_restarts == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations and n_restarts must be >= 1".into(),
            ));
        }
        if !(self.tolerance >= 0.0) || !(self.covariance_floor >= 0.0) {
            return Err(Error::InvalidArgument(
                "tolerance and covariance_floor must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-dimension absolute covariance floor for `data`.
pub fn covariance_floor(data: &Samples, factor: f64) -> Vec<f64> {
    data.variance()
        .into_iter()
        .map(|v| factor * if v > 0.0 { v } else { 1.0 })
        .collect()
}

/// Smallest covariance `C` with `C >= diag(floor)` in the Loewner order that
/// maximises the Gaussian likelihood for scatter `scatter`: the scatter's
/// eigenvalues, measured in floor units, are raised to 1. This keeps each
/// M-step a constrained maximiser, so EM stays monotone.
pub(crate) fn apply_floor(scatter: DMatrix<f64>, floor: &[f64]) -> DMatrix<f64> {
    let d = scatter.nrows();
    let sym = (&scatter + scatter.transpose()) * 0.5;
    if floor.iter().any(|&f| f <= 0.0) {
        return sym;
    }
    if d == 1 {
        return DMatrix::from_element(1, 1, sym[(0, 0)].max(floor[0]));
    }
    let inv_sqrt: Vec<f64> = floor.iter().map(|f| 1.0 / f.sqrt()).collect();
    let scaled = DMatrix::from_fn(d, d, |r, c| sym[(r, c)] * inv_sqrt[r] * inv_sqrt[c]);
    let eigen = scaled.symmetric_eigen();
    if eigen.eigenvalues.iter().all(|&l| l >= 1.0) {
        return sym;
    }
    let clamped = eigen.eigenvalues.map(|l| l.max(1.0));
    let v = &eigen.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    let sqrt_floor: Vec<f64> = floor.iter().map(|f| f.sqrt()).collect();
    let out = DMatrix::from_fn(d, d, |r, c| rebuilt[(r, c)] * sqrt_floor[r] * sqrt_floor[c]);
    (&out + out.transpose()) * 0.5
}

/// Posterior membership probabilities, N x K row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    values: Vec<f64>,
    effective_counts: Vec<f64>,
}

impl Responsibilities {
    /// Builds from explicit rows; column sums become the effective counts.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map(Vec::len).ok_or(Error::Empty("no responsibilities"))?;
        let mut values = Vec::with_capacity(rows.len() * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self::from_flat(k, values))
    }

    fn from_flat(k: usize, values: Vec<f64>) -> Self {
        let mut effective_counts = vec![0.0; k];
        for row in values.chunks_exact(k) {
            for (c, g) in effective_counts.iter_mut().zip(row) {
                *c += g;
            }
        }
        Self {
            k,
            values,
            effective_counts,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.k..(n + 1) * self.k]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.k)
    }

    pub fn effective_counts(&self) -> &[f64] {
        &self.effective_counts
    }
}

/// Returns the responsibilities together with the total log-likelihood of the
/// model that produced them.
fn e_step_with_ll(data: &Samples, model: &MixtureModel) -> Result<(Responsibilities, f64)> {
    if data.is_empty() {
        return Err(Error::Empty("e-step on no samples"));
    }
    let prepared = PreparedModel::new(model)?;
    prepared.check_dim(data.dim())?;
    let k = model.k();
    let mut values = vec![0.0; data.len() * k];
    let mut scratch = Vec::new();
    let mut ll = 0.0;
    for (x, out) in data.rows().zip(values.chunks_exact_mut(k)) {
        let lse = prepared.weighted_log_densities(x, out, &mut scratch);
        ll += lse;
        let mut sum = 0.0;
        for g in out.iter_mut() {
            *g = (*g - lse).exp();
            sum += *g;
        }
        out.iter_mut().for_each(|g| *g /= sum);
    }
    Ok((Responsibilities::from_flat(k, values), ll))
}

pub fn e_step(data: &Samples, model: &MixtureModel) -> Result<Responsibilities> {
    e_step_with_ll(data, model).map(|(r, _)| r)
}

/// Re-estimates weights, means and covariances in that order, each covariance
/// about its freshly updated mean, then applies `floor`.
pub fn m_step(data: &Samples, resp: &Responsibilities, floor: &[f64]) -> Result<MixtureModel> {
    if data.len() != resp.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            actual: resp.len(),
        });
    }
    if floor.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            actual: floor.len(),
        });
    }
    let d = data.dim();
    let counts = resp.effective_counts();
    if let Some((component, &effective_count)) = counts
        .iter()
        .enumerate()
        .find(|(_, &c)| !(c >= COLLAPSE_EPSILON))
    {
        return Err(Error::ComponentCollapse {
            component,
            effective_count,
        });
    }
    let total: f64 = counts.iter().sum();

    let mut components = Vec::with_capacity(resp.k());
    for (j, &nj) in counts.iter().enumerate() {
        let mut mean = vec![0.0; d];
        for (x, g) in data.rows().zip(resp.rows()) {
            for (m, xi) in mean.iter_mut().zip(x) {
                *m += g[j] * xi;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nj);

        let mut scatter = DMatrix::zeros(d, d);
        for (x, g) in data.rows().zip(resp.rows()) {
            let w = g[j];
            if w == 0.0 {
                continue;
            }
            for r in 0..d {
                let dr = x[r] - mean[r];
                for c in 0..=r {
                    scatter[(r, c)] += w * dr * (x[c] - mean[c]);
                }
            }
        }
        for r in 0..d {
            for c in 0..r {
                scatter[(c, r)] = scatter[(r, c)];
            }
        }
        scatter /= nj;
        components.push(GaussianComponent::new(
            nj / total,
            mean,
            apply_floor(scatter, floor),
        ));
    }
    MixtureModel::new(components)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: MixtureModel,
    /// Log-likelihood of the initial model followed by one entry per iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Seed of the winning restart.
    pub seed: u64,
    pub restart: usize,
}

impl FitResult {
    pub fn log_likelihood(&self) -> f64 {
        *self
            .log_likelihood_trace
            .last()
            .expect("trace always holds the initial likelihood")
    }
}

#[derive(Serialize)]
struct FitResultJson<'a> {
    #[serde(flatten)]
    model: &'a MixtureModel,
    iterations: usize,
    converged: bool,
    seed: u64,
    restart: usize,
    log_likelihood: f64,
    log_likelihood_trace: &'a [f64],
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FitResultJson {
            model: &self.model,
            iterations: self.iterations,
            converged: self.converged,
            seed: self.seed,
            restart: self.restart,
            log_likelihood: self.log_likelihood(),
            log_likelihood_trace: &self.log_likelihood_trace,
        }
        .serialize(s)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn restart_seed(base: u64, restart: usize) -> u64 {
    if restart == 0 {
        base
    } else {
        splitmix64(base ^ (restart as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
    }
}

fn run_em(
    data: &Samples,
    init: MixtureModel,
    config: &EmConfig,
    floor: &[f64],
    seed: u64,
    restart: usize,
) -> Result<FitResult> {
    let (mut resp, mut ll) = e_step_with_ll(data, &init)?;
    let mut model = init;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        model = m_step(data, &resp, floor)?;
        let (next_resp, next_ll) = e_step_with_ll(data, &model)?;
        trace.push(next_ll);
        resp = next_resp;
        let delta = next_ll - ll;
        ll = next_ll;
        if delta.abs() < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        model,
        log_likelihood_trace: trace,
        iterations,
        converged,
        seed,
        restart,
    })
}

/// Fits a `k`-component mixture by EM with `config.n_restarts` independent
/// starts and keeps the one with the highest final log-likelihood (ties to the
/// lower restart index). Restart 0 uses `config.init`; later restarts use
/// k-means++ seeding since quantile initialisation has no randomness.
pub fn fit_em(data: &Samples, k: usize, config: &EmConfig) -> Result<FitResult> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > data.len() {
        return Err(Error::TooManyClusters { k, n: data.len() });
    }
    let floor = covariance_floor(data, config.covariance_floor);

    let runs: Vec<Result<FitResult>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|restart| {
            let seed = restart_seed(config.seed, restart);
            let strategy = if restart == 0 {
                config.init
            } else {
                InitStrategy::KmeansPp
            };
            let init = init_with_floor(data, k, strategy, seed, &floor)?;
            run_em(data, init, config, &floor, seed, restart)
        })
        .collect();

    let mut best: Option<FitResult> = None;
    for run in runs {
        match run {
            Ok(fit) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| fit.log_likelihood() > b.log_likelihood());
                if better {
                    best = Some(fit);
                }
            }
            Err(Error::ComponentCollapse { .. } | Error::NotPositiveDefinite) => {}
            Err(other) => return Err(other),
        }
    }
    best.ok_or(Error::AllRestartsCollapsed {
        restarts: config.n_restarts,
    })
}
