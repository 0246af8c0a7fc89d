//! Silhouette, Calinski-Harabasz and Davies-Bouldin indices over a hard
//! clustering.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{distance, squared_distance, Samples};
use crate::error::{Error, Result};
use crate::gmm::{check_aligned, Assignment};

/// How per-sample silhouette widths are reduced to one dataset value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SilhouetteMode {
    /// Mean width over all samples.
    #[default]
    MeanSamples,
    /// Mean of the per-cluster mean widths.
    MeanClusters,
    /// Largest per-cluster mean width.
    MaxClusters,
}

impl FromStr for SilhouetteMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_samples" => Ok(Self::MeanSamples),
            "mean_clusters" => Ok(Self::MeanClusters),
            "max_clusters" => Ok(Self::MaxClusters),
            other => Err(Error::InvalidArgument(format!("unknown silhouette mode `{other}`"))),
        }
    }
}

impl fmt::Display for SilhouetteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MeanSamples => "mean_samples",
            Self::MeanClusters => "mean_clusters",
            Self::MaxClusters => "max_clusters",
        })
    }
}

/// An index value that may be a sentinel standing in for an undefined result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexValue {
    pub value: f64,
    pub degenerate: bool,
}

impl IndexValue {
    fn ok(value: f64) -> Self {
        Self {
            value,
            degenerate: false,
        }
    }

    fn sentinel(value: f64) -> Self {
        Self {
            value,
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGeometry {
    pub centroids: Vec<Vec<f64>>,
    /// Mean member-to-centroid distance per cluster.
    pub within_scatters: Vec<f64>,
    pub sizes: Vec<usize>,
}

pub fn cluster_geometry(data: &Samples, assignment: &Assignment) -> Result<ClusterGeometry> {
    check_aligned(data, assignment)?;
    let k = assignment.k();
    let d = data.dim();
    let sizes = assignment.sizes();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(empty));
    }
    let mut centroids = vec![vec![0.0; d]; k];
    for (x, &l) in data.rows().zip(assignment.labels()) {
        for (c, xi) in centroids[l].iter_mut().zip(x) {
            *c += xi;
        }
    }
    for (c, &m) in centroids.iter_mut().zip(&sizes) {
        c.iter_mut().for_each(|v| *v /= m as f64);
    }
    let mut within_scatters = vec![0.0; k];
    for (x, &l) in data.rows().zip(assignment.labels()) {
        within_scatters[l] += distance(x, &centroids[l]);
    }
    for (s, &m) in within_scatters.iter_mut().zip(&sizes) {
        *s /= m as f64;
    }
    Ok(ClusterGeometry {
        centroids,
        within_scatters,
        sizes,
    })
}

fn require_partition(data: &Samples, assignment: &Assignment) -> Result<Vec<usize>> {
    check_aligned(data, assignment)?;
    if assignment.k() < 2 {
        return Err(Error::TooFewClusters(assignment.k()));
    }
    let sizes = assignment.sizes();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(empty));
    }
    Ok(sizes)
}

fn width_from(own_mean: Option<f64>, other_means: impl Iterator<Item = f64>) -> f64 {
    let Some(a) = own_mean else {
        return 0.0;
    };
    let b = other_means.fold(f64::INFINITY, f64::min);
    let denom = a.max(b);
    if denom > 0.0 {
        (b - a) / denom
    } else {
        0.0
    }
}

/// Silhouette width of sample `i`. A member of a singleton cluster scores 0.
pub fn silhouette_width(i: usize, data: &Samples, assignment: &Assignment) -> Result<f64> {
    check_aligned(data, assignment)?;
    if assignment.k() < 2 {
        return Err(Error::TooFewClusters(assignment.k()));
    }
    if i >= data.len() {
        return Err(Error::InvalidArgument(format!("sample {i} out of range")));
    }
    let k = assignment.k();
    let own = assignment.labels()[i];
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let xi = data.row(i);
    for (j, (x, &l)) in data.rows().zip(assignment.labels()).enumerate() {
        if j != i {
            sums[l] += distance(xi, x);
            counts[l] += 1;
        }
    }
    let own_mean = (counts[own] > 0).then(|| sums[own] / counts[own] as f64);
    Ok(width_from(
        own_mean,
        (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64),
    ))
}

/// Widths for every sample. Scalar data uses per-cluster sorted prefix sums
/// (O(N K log N)); higher dimensions fall back to pairwise distances.
pub fn silhouette_widths(data: &Samples, assignment: &Assignment) -> Result<Vec<f64>> {
    check_aligned(data, assignment)?;
    if assignment.k() < 2 {
        return Err(Error::TooFewClusters(assignment.k()));
    }
    match data.as_scalars() {
        Some(values) => Ok(scalar_widths(values, assignment)),
        None => (0..data.len())
            .into_par_iter()
            .map(|i| silhouette_width(i, data, assignment))
            .collect(),
    }
}

struct SortedCluster {
    values: Vec<f64>,
    prefix: Vec<f64>,
}

impl SortedCluster {
    fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(values.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for v in &values {
            acc += v;
            prefix.push(acc);
        }
        Self { values, prefix }
    }

    /// Sum of |x - v| over the cluster's values.
    fn abs_sum(&self, x: f64) -> f64 {
        let below = self.values.partition_point(|&v| v < x);
        let n = self.values.len();
        let sum_below = self.prefix[below];
        let sum_above = self.prefix[n] - sum_below;
        (x * below as f64 - sum_below) + (sum_above - x * (n - below) as f64)
    }
}

fn scalar_widths(values: &[f64], assignment: &Assignment) -> Vec<f64> {
    let k = assignment.k();
    let mut members = vec![Vec::new(); k];
    for (&v, &l) in values.iter().zip(assignment.labels()) {
        members[l].push(v);
    }
    let clusters: Vec<SortedCluster> = members.into_iter().map(SortedCluster::new).collect();
    values
        .iter()
        .zip(assignment.labels())
        .map(|(&x, &own)| {
            let m = clusters[own].values.len();
            let own_mean = (m > 1).then(|| clusters[own].abs_sum(x) / (m - 1) as f64);
            width_from(
                own_mean,
                clusters
                    .iter()
                    .enumerate()
                    .filter(|(c, cl)| *c != own && !cl.values.is_empty())
                    .map(|(_, cl)| cl.abs_sum(x) / cl.values.len() as f64),
            )
        })
        .collect()
}

pub fn silhouette_index(
    data: &Samples,
    assignment: &Assignment,
    mode: SilhouetteMode,
) -> Result<f64> {
    let sizes = require_partition(data, assignment)?;
    let widths = silhouette_widths(data, assignment)?;
    Ok(reduce_widths(&widths, assignment.labels(), &sizes, mode))
}

fn reduce_widths(widths: &[f64], labels: &[usize], sizes: &[usize], mode: SilhouetteMode) -> f64 {
    if mode == SilhouetteMode::MeanSamples {
        return widths.iter().sum::<f64>() / widths.len() as f64;
    }
    let mut per_cluster = vec![0.0; sizes.len()];
    for (w, &l) in widths.iter().zip(labels) {
        per_cluster[l] += w;
    }
    for (s, &m) in per_cluster.iter_mut().zip(sizes) {
        *s /= m as f64;
    }
    match mode {
        SilhouetteMode::MeanClusters => per_cluster.iter().sum::<f64>() / sizes.len() as f64,
        _ => per_cluster.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// `(BC / WC) * (N - K) / (K - 1)`. Zero within-cluster scatter yields a
/// `+inf` sentinel.
pub fn calinski_harabasz(data: &Samples, assignment: &Assignment) -> Result<IndexValue> {
    let sizes = require_partition(data, assignment)?;
    let (n, k) = (data.len(), assignment.k());
    if n <= k {
        return Err(Error::InvalidArgument(format!(
            "Calinski-Harabasz needs more samples ({n}) than clusters ({k})"
        )));
    }
    let geometry = cluster_geometry(data, assignment)?;
    let overall = data.mean();
    let between: f64 = geometry
        .centroids
        .iter()
        .zip(&sizes)
        .map(|(c, &m)| m as f64 * squared_distance(c, &overall))
        .sum();
    let within: f64 = data
        .rows()
        .zip(assignment.labels())
        .map(|(x, &l)| squared_distance(x, &geometry.centroids[l]))
        .sum();
    if within == 0.0 {
        return Ok(IndexValue::sentinel(f64::INFINITY));
    }
    Ok(IndexValue::ok(
        between / within * (n - k) as f64 / (k - 1) as f64,
    ))
}

/// Mean over clusters of the worst `(d_i + d_j) / |c_i - c_j|`. Coincident
/// centroids yield a `+inf` sentinel.
pub fn davies_bouldin(data: &Samples, assignment: &Assignment) -> Result<IndexValue> {
    require_partition(data, assignment)?;
    let g = cluster_geometry(data, assignment)?;
    let k = assignment.k();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..k).filter(|&j| j != i) {
            let sep = distance(&g.centroids[i], &g.centroids[j]);
            if sep == 0.0 {
                return Ok(IndexValue::sentinel(f64::INFINITY));
            }
            worst = worst.max((g.within_scatters[i] + g.within_scatters[j]) / sep);
        }
        total += worst;
    }
    Ok(IndexValue::ok(total / k as f64))
}

/// Which of a row's indices are sentinels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DegenerateFlags {
    pub silhouette: bool,
    pub calinski_harabasz: bool,
    pub davies_bouldin: bool,
}

impl DegenerateFlags {
    pub fn all() -> Self {
        Self {
            silhouette: true,
            calinski_harabasz: true,
            davies_bouldin: true,
        }
    }

    pub fn any(&self) -> bool {
        self.silhouette || self.calinski_harabasz || self.davies_bouldin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityScores {
    pub k: usize,
    pub silhouette: f64,
    pub calinski_harabasz: f64,
    pub davies_bouldin: f64,
    pub flags: DegenerateFlags,
}

impl ValidityScores {
    /// Row for a clustering that could not be scored at all.
    pub fn sentinel(k: usize) -> Self {
        Self {
            k,
            silhouette: -1.0,
            calinski_harabasz: 0.0,
            davies_bouldin: f64::INFINITY,
            flags: DegenerateFlags::all(),
        }
    }

    /// Scores `assignment` as a `k`-cluster solution. A clustering with an empty
    /// cluster (or with too few samples) does not realise `k` clusters and gets
    /// the all-sentinel row.
    pub fn evaluate(
        data: &Samples,
        assignment: &Assignment,
        mode: SilhouetteMode,
    ) -> Result<Self> {
        check_aligned(data, assignment)?;
        let k = assignment.k();
        if k < 2 || data.len() <= k || assignment.sizes().contains(&0) {
            return Ok(Self::sentinel(k));
        }
        let silhouette = silhouette_index(data, assignment, mode)?;
        let chi = calinski_harabasz(data, assignment)?;
        let dbi = davies_bouldin(data, assignment)?;
        Ok(Self {
            k,
            silhouette,
            calinski_harabasz: chi.value,
            davies_bouldin: dbi.value,
            flags: DegenerateFlags {
                silhouette: false,
                calinski_harabasz: chi.degenerate,
                davies_bouldin: dbi.degenerate,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four() -> (Samples, Assignment) {
        (
            Samples::from_scalars(&[0.0, 1.0, 10.0, 11.0]).unwrap(),
            Assignment::new(vec![0, 0, 1, 1], 2).unwrap(),
        )
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn silhouette_examples() {
        let (data, a) = four();
        let s0 = silhouette_width(0, &data, &a).unwrap();
        assert!(close(s0, 9.5 / 10.5, 1e-15));
        // inner points 1 and 10 have a = 1, b = 9.5
        let widths = silhouette_widths(&data, &a).unwrap();
        let expected = [9.5 / 10.5, 8.5 / 9.5, 8.5 / 9.5, 9.5 / 10.5];
        for (w, e) in widths.iter().zip(expected) {
            assert!(close(*w, e, 1e-15));
        }
        let mean = (9.5 / 10.5 + 8.5 / 9.5) / 2.0;
        for mode in [
            SilhouetteMode::MeanSamples,
            SilhouetteMode::MeanClusters,
            SilhouetteMode::MaxClusters,
        ] {
            assert!(close(silhouette_index(&data, &a, mode).unwrap(), mean, 1e-15));
        }
        assert!(close(mean, 0.899_749_4, 1e-7));

        let single = Samples::from_scalars(&[0.0, 5.0, 6.0]).unwrap();
        let a = Assignment::new(vec![0, 1, 1], 2).unwrap();
        assert_eq!(silhouette_width(0, &single, &a).unwrap(), 0.0);
        assert_eq!(silhouette_widths(&single, &a).unwrap()[0], 0.0);

        let near = Samples::from_scalars(&[0.0, 2.0, -2.0, -2.5]).unwrap();
        let a = Assignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let w = silhouette_width(0, &near, &a).unwrap();
        assert!(close(w, (2.25 - 2.0) / 2.25, 1e-15));
        // a = b = 2
        let eq = Samples::from_scalars(&[0.0, 2.0, -2.0]).unwrap();
        let a = Assignment::new(vec![0, 0, 1], 2).unwrap();
        assert_eq!(silhouette_width(0, &eq, &a).unwrap(), 0.0);
    }

    #[test]
    fn silhouette_limit() {
        let data = Samples::from_scalars(&[0.0, 1.0, 1e6, 1e6 + 1.0]).unwrap();
        let a = Assignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let si = silhouette_index(&data, &a, SilhouetteMode::MeanSamples).unwrap();
        assert!(close(si, 1.0, 1e-3));
    }

    #[test]
    fn chi_and_dbi_examples() {
        let (data, a) = four();
        let chi = calinski_harabasz(&data, &a).unwrap();
        assert!(!chi.degenerate);
        assert!(close(chi.value, 200.0, 1e-12));
        let dbi = davies_bouldin(&data, &a).unwrap();
        assert!(close(dbi.value, 0.1, 1e-15));

        let points = Samples::from_scalars(&[3.0, 3.0, 8.0]).unwrap();
        let a = Assignment::new(vec![0, 0, 1], 2).unwrap();
        assert_eq!(davies_bouldin(&points, &a).unwrap().value, 0.0);
        let chi = calinski_harabasz(&points, &a).unwrap();
        assert!(chi.degenerate && chi.value.is_infinite());

        let coincide = Samples::from_scalars(&[-1.0, 1.0, 0.0]).unwrap();
        let a = Assignment::new(vec![0, 0, 1], 2).unwrap();
        let dbi = davies_bouldin(&coincide, &a).unwrap();
        assert!(dbi.degenerate && dbi.value.is_infinite());
    }

    #[test]
    fn dbi_scales_with_scatter() {
        let wide = Samples::from_scalars(&[-1.0, 1.0, 9.0, 11.0, 29.0, 31.0]).unwrap();
        let tight = Samples::from_scalars(&[-0.1, 0.1, 9.9, 10.1, 29.9, 30.1]).unwrap();
        let a = Assignment::new(vec![0, 0, 1, 1, 2, 2], 3).unwrap();
        let w = davies_bouldin(&wide, &a).unwrap().value;
        let t = davies_bouldin(&tight, &a).unwrap().value;
        assert!(close(w / 10.0, t, 1e-12));
    }

    #[test]
    fn chi_duplicated_samples() {
        let data = [0.0, 1.5, 2.0, 9.0, 10.0, 13.0];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let a = Assignment::new(labels.clone(), 2).unwrap();
        let once = calinski_harabasz(&Samples::from_scalars(&data).unwrap(), &a).unwrap();
        let doubled: Vec<f64> = data.iter().chain(&data).copied().collect();
        let a2 = Assignment::new(labels.iter().chain(&labels).copied().collect(), 2).unwrap();
        let twice = calinski_harabasz(&Samples::from_scalars(&doubled).unwrap(), &a2).unwrap();
        // BC/WC is unchanged, only (N - K)/(K - 1) moves from 4 to 10.
        assert!(close(once.value / 4.0, twice.value / 10.0, 1e-12));
    }

    #[test]
    fn errors() {
        let data = Samples::from_scalars(&[0.0, 1.0]).unwrap();
        let one = Assignment::new(vec![0, 0], 1).unwrap();
        assert!(matches!(
            silhouette_index(&data, &one, SilhouetteMode::MeanSamples),
            Err(Error::TooFewClusters(1))
        ));
        let gap = Assignment::new(vec![0, 2], 3).unwrap();
        assert!(matches!(calinski_harabasz(&data, &gap), Err(Error::EmptyCluster(1))));
        let s = ValidityScores::evaluate(&data, &gap, SilhouetteMode::MeanSamples).unwrap();
        assert!(s.flags.any());
    }

    #[test]
    fn homogeneous_random_labels_score_lower() {
        let uniform: Vec<f64> = (0..40).map(|i| (i as f64 * 0.618).fract() * 10.0).collect();
        let random = Assignment::new((0..40).map(|i| (i * 7 + 3) % 2).collect(), 2).unwrap();
        let separated: Vec<f64> = (0..40)
            .map(|i| if i < 20 { i as f64 * 0.1 } else { 100.0 + i as f64 * 0.1 })
            .collect();
        let truth = Assignment::new((0..40).map(|i| usize::from(i >= 20)).collect(), 2).unwrap();
        let low = calinski_harabasz(&Samples::from_scalars(&uniform).unwrap(), &random).unwrap();
        let high = calinski_harabasz(&Samples::from_scalars(&separated).unwrap(), &truth).unwrap();
        assert!(low.value < high.value);
    }
}
