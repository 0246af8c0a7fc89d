use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::em::{apply_floor, covariance_floor, EmConfig};
use super::{GaussianComponent, MixtureModel};
use crate::data::{quantile_sorted, squared_distance, Samples};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Means at the sample quantiles `(2j + 1) / 2k`, taken per coordinate.
    #[default]
    Quantile,
    /// k-means++ style D^2-weighted seeding of the means.
    KmeansPp,
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(Self::Quantile),
            "kmeans_pp" | "kmeans++" => Ok(Self::KmeansPp),
            other => Err(Error::InvalidArgument(format!("unknown init strategy `{other}`"))),
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quantile => "quantile",
            Self::KmeansPp => "kmeans_pp",
        })
    }
}

/// Starting model: uniform weights, the global covariance (floored) for every
/// component, and means chosen by `strategy`.
pub fn init_model(
    data: &Samples,
    k: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<MixtureModel> {
    let floor = covariance_floor(data, EmConfig::default().covariance_floor);
    init_with_floor(data, k, strategy, seed, &floor)
}

pub(crate) fn init_with_floor(
    data: &Samples,
    k: usize,
    strategy: InitStrategy,
    seed: u64,
    floor: &[f64],
) -> Result<MixtureModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > data.len() {
        return Err(Error::TooManyClusters { k, n: data.len() });
    }
    let means = match strategy {
        InitStrategy::Quantile => quantile_means(data, k),
        InitStrategy::KmeansPp => kmeans_pp_means(data, k, seed),
    };
    let covariance = apply_floor(global_covariance(data), floor);
    let weight = 1.0 / k as f64;
    MixtureModel::new(
        means
            .into_iter()
            .map(|m| GaussianComponent::new(weight, m, covariance.clone()))
            .collect(),
    )
}

fn global_covariance(data: &Samples) -> DMatrix<f64> {
    let d = data.dim();
    let mean = data.mean();
    let n = data.len() as f64;
    let mut cov = DMatrix::zeros(d, d);
    for x in data.rows() {
        for r in 0..d {
            for c in 0..d {
                cov[(r, c)] += (x[r] - mean[r]) * (x[c] - mean[c]);
            }
        }
    }
    cov / n
}

fn quantile_means(data: &Samples, k: usize) -> Vec<Vec<f64>> {
    let d = data.dim();
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let mut col: Vec<f64> = data.rows().map(|x| x[c]).collect();
            col.sort_by(f64::total_cmp);
            col
        })
        .collect();
    (0..k)
        .map(|j| {
            let q = (2 * j + 1) as f64 / (2 * k) as f64;
            columns.iter().map(|col| quantile_sorted(col, q)).collect()
        })
        .collect()
}

fn kmeans_pp_means(data: &Samples, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    let mut centers = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut nearest: Vec<f64> = data
        .rows()
        .map(|x| squared_distance(x, &centers[0]))
        .collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(&mut rng),
            // every point already coincides with a center
            Err(_) => rng.random_range(0..n),
        };
        let center = data.row(next).to_vec();
        for (d2, x) in nearest.iter_mut().zip(data.rows()) {
            *d2 = d2.min(squared_distance(x, &center));
        }
        centers.push(center);
    }
    centers
}
