//! Gaussian mixture densities and EM fitting.

mod density;
mod em;
mod init;

pub use density::{gaussian_log_density, log_likelihood, log_sum_exp, mixture_density};
pub use em::{
    covariance_floor, e_step, fit_em, m_step, EmConfig, FitResult, Responsibilities,
    COLLAPSE_EPSILON,
};
pub use init::{init_model, InitStrategy};

pub(crate) use density::PreparedModel;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Samples;
use crate::error::{Error, Result};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    #[serde(with = "matrix_rows")]
    pub covariance: DMatrix<f64>,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: Vec<f64>, covariance: DMatrix<f64>) -> Self {
        Self {
            weight,
            mean,
            covariance,
        }
    }

    /// One-dimensional component with variance `variance`.
    pub fn scalar(weight: f64, mean: f64, variance: f64) -> Self {
        Self::new(weight, vec![mean], DMatrix::from_element(1, 1, variance))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A validated mixture: weights in `[0, 1]` summing to one, SPD covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct MixtureModel {
    dimension: usize,
    components: Vec<GaussianComponent>,
}

#[derive(Deserialize)]
struct RawModel {
    #[allow(dead_code)]
    dimension: usize,
    components: Vec<GaussianComponent>,
}

impl TryFrom<RawModel> for MixtureModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        MixtureModel::new(raw.components)
    }
}

impl MixtureModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let dimension = components
            .first()
            .map(GaussianComponent::dim)
            .ok_or(Error::Empty("mixture with no components"))?;
        if dimension == 0 {
            return Err(Error::InvalidArgument("component mean is empty".into()));
        }
        let mut weight_sum = 0.0;
        for c in &components {
            if c.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: c.dim(),
                });
            }
            if c.covariance.nrows() != dimension || c.covariance.ncols() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: c.covariance.nrows(),
                });
            }
            if !(0.0..=1.0).contains(&c.weight) {
                return Err(Error::InvalidArgument(format!(
                    "component weight {} outside [0, 1]",
                    c.weight
                )));
            }
            weight_sum += c.weight;
        }
        if (weight_sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "component weights sum to {weight_sum}, expected 1"
            )));
        }
        let model = Self {
            dimension,
            components,
        };
        // Factorising every covariance is the SPD check.
        PreparedModel::new(&model)?;
        Ok(model)
    }

    /// Builds a 1-D model from `(weight, mean, variance)` triples.
    pub fn scalar(params: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            params
                .iter()
                .map(|&(w, m, v)| GaussianComponent::scalar(w, m, v))
                .collect(),
        )
    }

    /// Moment-matched model of a hard clustering: one component per cluster with
    /// weight equal to its share of samples and the members' mean and population
    /// covariance, raised to `floor` where needed.
    pub fn from_assignment(data: &Samples, assignment: &Assignment, floor: &[f64]) -> Result<Self> {
        check_aligned(data, assignment)?;
        let n = data.len() as f64;
        let d = data.dim();
        let mut components = Vec::with_capacity(assignment.k());
        for cluster in 0..assignment.k() {
            let members: Vec<&[f64]> = assignment
                .members(cluster)
                .map(|i| data.row(i))
                .collect();
            if members.is_empty() {
                return Err(Error::EmptyCluster(cluster));
            }
            let m = members.len() as f64;
            let mut mean = vec![0.0; d];
            for row in &members {
                for (a, x) in mean.iter_mut().zip(*row) {
                    *a += x / m;
                }
            }
            let mut cov = DMatrix::zeros(d, d);
            for row in &members {
                for r in 0..d {
                    for c in 0..d {
                        cov[(r, c)] += (row[r] - mean[r]) * (row[c] - mean[c]) / m;
                    }
                }
            }
            components.push(GaussianComponent::new(
                members.len() as f64 / n,
                mean,
                em::apply_floor(cov, floor),
            ));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        components.iter_mut().for_each(|c| c.weight /= total);
        Self::new(components)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Means of a 1-D model; `None` otherwise.
    pub fn scalar_means(&self) -> Option<Vec<f64>> {
        (self.dimension == 1).then(|| self.components.iter().map(|c| c.mean[0]).collect())
    }

    /// Variances of a 1-D model; `None` otherwise.
    pub fn scalar_variances(&self) -> Option<Vec<f64>> {
        (self.dimension == 1).then(|| {
            self.components
                .iter()
                .map(|c| c.covariance[(0, 0)])
                .collect()
        })
    }

    /// Hard assignment to the component of maximum responsibility. Ties go to the
    /// lower component index.
    pub fn assign(&self, data: &Samples) -> Result<Assignment> {
        assign(data, self)
    }
}

/// Hard cluster membership, one label per sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    labels: Vec<usize>,
    k: usize,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {k} clusters"
            )));
        }
        Ok(Self { labels, k })
    }

    /// Infers `k` as one more than the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == cluster)
            .map(|(i, _)| i)
    }
}

pub fn assign(data: &Samples, model: &MixtureModel) -> Result<Assignment> {
    let resp = e_step(data, model)?;
    let k = model.k();
    let labels = resp
        .rows()
        .map(|row| {
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Assignment::new(labels, k)
}

pub(crate) fn check_aligned(data: &Samples, assignment: &Assignment) -> Result<()> {
    if data.len() != assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            actual: assignment.len(),
        });
    }
    Ok(())
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|r| m.row(r).iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("covariance must be square"));
        }
        Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
    }
}
