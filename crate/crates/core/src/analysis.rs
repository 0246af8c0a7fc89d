//! Per-cluster statistics and labels, boxplot outliers, and per-driver /
//! per-route cluster proportions.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{quantile_sorted, sorted_copy};
use crate::error::{Error, Result};
use crate::gmm::Assignment;
use crate::ingest::TripTable;

pub const DEFAULT_DOMINANCE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster_id: usize,
    pub num: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; 0 for a single member.
    pub std: f64,
    pub std_undefined: bool,
}

fn members_by_cluster(values: &[f64], assignment: &Assignment) -> Result<Vec<Vec<f64>>> {
    if values.len() != assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            actual: assignment.len(),
        });
    }
    let mut members = vec![Vec::new(); assignment.k()];
    for (&v, &l) in values.iter().zip(assignment.labels()) {
        members[l].push(v);
    }
    Ok(members)
}

pub fn cluster_stats(values: &[f64], assignment: &Assignment) -> Result<Vec<ClusterStats>> {
    members_by_cluster(values, assignment)?
        .into_iter()
        .enumerate()
        .map(|(cluster_id, members)| {
            if members.is_empty() {
                return Err(Error::EmptyCluster(cluster_id));
            }
            let sorted = sorted_copy(&members);
            let n = sorted.len();
            let mean = sorted.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            Ok(ClusterStats {
                cluster_id,
                num: n,
                min: sorted[0],
                max: sorted[n - 1],
                mean,
                median: quantile_sorted(&sorted, 0.5),
                std,
                std_undefined: n == 1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyLabel {
    ExtremeEfficiency,
    NormalEfficiency,
    LowEfficiency,
    ExtremelyLowEfficiency,
    /// Fallback for cluster counts other than four: position in mean order.
    Ranked(usize),
}

impl fmt::Display for EfficiencyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ExtremeEfficiency => f.write_str("extreme_efficiency"),
            Self::NormalEfficiency => f.write_str("normal_efficiency"),
            Self::LowEfficiency => f.write_str("low_efficiency"),
            Self::ExtremelyLowEfficiency => f.write_str("extremely_low_efficiency"),
            Self::Ranked(i) => write!(f, "cluster_{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabel {
    pub cluster_id: usize,
    pub label: EfficiencyLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    /// One entry per input stats row, ordered by cluster id.
    pub labels: Vec<ClusterLabel>,
    pub warning: Option<String>,
}

impl Labeling {
    pub fn label_of(&self, cluster_id: usize) -> Option<EfficiencyLabel> {
        self.labels
            .iter()
            .find(|l| l.cluster_id == cluster_id)
            .map(|l| l.label)
    }
}

/// Labels clusters by ascending mean consumption (L/100km, so lower is more
/// efficient). Only a four-cluster solution gets the named categories.
pub fn label_clusters(stats: &[ClusterStats]) -> Labeling {
    const NAMED: [EfficiencyLabel; 4] = [
        EfficiencyLabel::ExtremeEfficiency,
        EfficiencyLabel::NormalEfficiency,
        EfficiencyLabel::LowEfficiency,
        EfficiencyLabel::ExtremelyLowEfficiency,
    ];
    let mut by_mean: Vec<&ClusterStats> = stats.iter().collect();
    by_mean.sort_by(|a, b| a.mean.total_cmp(&b.mean).then(a.cluster_id.cmp(&b.cluster_id)));
    let named = stats.len() == 4;
    let warning = (!named).then(|| {
        let msg = format!(
            "{} clusters: efficiency categories need exactly 4, using generic labels",
            stats.len()
        );
        log::warn!("{msg}");
        msg
    });
    let mut labels: Vec<ClusterLabel> = by_mean
        .iter()
        .enumerate()
        .map(|(rank, s)| ClusterLabel {
            cluster_id: s.cluster_id,
            label: if named { NAMED[rank] } else { EfficiencyLabel::Ranked(rank) },
        })
        .collect();
    labels.sort_by_key(|l| l.cluster_id);
    Labeling { labels, warning }
}

/// Stats rows in the order num, min, max, mean, median, std, definition.
pub fn stats_to_csv(stats: &[ClusterStats], labeling: &Labeling) -> String {
    let mut out = String::from("cluster,num,min,max,mean,median,std,definition\n");
    for s in stats {
        let label = labeling
            .label_of(s.cluster_id)
            .map(|l| l.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{}",
            s.cluster_id, s.num, s.min, s.max, s.mean, s.median, s.std, label
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fences {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Tukey fences from linearly interpolated quartiles.
pub fn tukey_fences(values: &[f64]) -> Result<Fences> {
    if values.is_empty() {
        return Err(Error::Empty("fences of no values"));
    }
    let sorted = sorted_copy(values);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(Fences {
        q1,
        median: quantile_sorted(&sorted, 0.5),
        q3,
        lower: q1 - 1.5 * iqr,
        upper: q3 + 1.5 * iqr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub cluster_id: usize,
    pub fences: Fences,
    /// Positions (within the input values) of samples strictly outside the fences.
    pub outlier_positions: Vec<usize>,
    pub outlier_sample_ids: Vec<String>,
}

pub fn boxplot_outliers(values: &[f64]) -> Result<OutlierReport> {
    let fences = tukey_fences(values)?;
    let outlier_positions: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < fences.lower || v > fences.upper)
        .map(|(i, _)| i)
        .collect();
    Ok(OutlierReport {
        cluster_id: 0,
        fences,
        outlier_sample_ids: outlier_positions.iter().map(|i| i.to_string()).collect(),
        outlier_positions,
    })
}

/// Boxplot outliers per cluster, with sample ids taken from `ids`.
pub fn cluster_outliers(
    values: &[f64],
    ids: &[String],
    assignment: &Assignment,
) -> Result<Vec<OutlierReport>> {
    if ids.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            actual: ids.len(),
        });
    }
    let members = members_by_cluster(values, assignment)?;
    let mut index_of = vec![Vec::new(); assignment.k()];
    for (i, &l) in assignment.labels().iter().enumerate() {
        index_of[l].push(i);
    }
    members
        .iter()
        .enumerate()
        .map(|(cluster_id, vals)| {
            if vals.is_empty() {
                return Err(Error::EmptyCluster(cluster_id));
            }
            let mut report = boxplot_outliers(vals)?;
            report.cluster_id = cluster_id;
            report.outlier_sample_ids = report
                .outlier_positions
                .iter()
                .map(|&p| ids[index_of[cluster_id][p]].clone())
                .collect();
            report.outlier_positions = report
                .outlier_positions
                .iter()
                .map(|&p| index_of[cluster_id][p])
                .collect();
            Ok(report)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Driver,
    Route,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Driver => "driver",
            Self::Route => "route",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group_id: String,
    pub trips: usize,
    pub proportions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionTable {
    pub group_key: GroupKey,
    pub k: usize,
    /// Ordered by group id.
    pub rows: Vec<GroupRow>,
    pub overall: Vec<f64>,
}

impl ProportionTable {
    /// Rows are group ids, columns clusters, with a final `overall` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(match self.group_key {
            GroupKey::Driver => "driver_id,trips",
            GroupKey::Route => "route_id,trips",
        });
        for c in 0..self.k {
            let _ = write!(out, ",c{c}");
        }
        out.push('\n');
        let mut line = |id: &str, trips: usize, props: &[f64]| {
            let _ = write!(out, "{id},{trips}");
            for p in props {
                let _ = write!(out, ",{p:.6}");
            }
            out.push('\n');
        };
        for row in &self.rows {
            line(&row.group_id, row.trips, &row.proportions);
        }
        let total = self.rows.iter().map(|r| r.trips).sum();
        line("overall", total, &self.overall);
        out
    }
}

fn fractions(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

pub fn group_proportions(
    table: &TripTable,
    assignment: &Assignment,
    group_key: GroupKey,
) -> Result<ProportionTable> {
    if table.len() != assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: table.len(),
            actual: assignment.len(),
        });
    }
    if table.is_empty() {
        return Err(Error::Empty("proportions of no trips"));
    }
    let k = assignment.k();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (record, &l) in table.records.iter().zip(assignment.labels()) {
        let id = match group_key {
            GroupKey::Driver => record.driver_id.as_str(),
            GroupKey::Route => record.route_id.as_str(),
        };
        groups.entry(id).or_insert_with(|| vec![0; k])[l] += 1;
    }
    Ok(ProportionTable {
        group_key,
        k,
        rows: groups
            .into_iter()
            .map(|(id, counts)| GroupRow {
                group_id: id.to_string(),
                trips: counts.iter().sum(),
                proportions: fractions(&counts),
            })
            .collect(),
        overall: fractions(&assignment.sizes()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDeviation {
    pub group_id: String,
    /// Largest absolute per-cluster difference from the overall proportions.
    pub max_deviation: f64,
    pub exceeds_threshold: bool,
    pub dominant_cluster: usize,
    pub dominant_share: f64,
    pub dominant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub group_key: GroupKey,
    pub threshold: f64,
    pub dominance_threshold: f64,
    pub groups: Vec<GroupDeviation>,
    pub max_deviation: f64,
    pub flagged_count: usize,
    pub dominant_count: usize,
}

impl DeviationReport {
    pub fn flagged(&self) -> impl Iterator<Item = &str> {
        self.groups
            .iter()
            .filter(|g| g.exceeds_threshold)
            .map(|g| g.group_id.as_str())
    }

    pub fn dominated(&self) -> impl Iterator<Item = &str> {
        self.groups
            .iter()
            .filter(|g| g.dominant)
            .map(|g| g.group_id.as_str())
    }
}

/// A group is flagged when its max deviation exceeds `threshold`, and counted
/// as dominated when one cluster holds at least `dominance_threshold` of its
/// trips.
pub fn deviation_report(
    props: &ProportionTable,
    threshold: f64,
    dominance_threshold: f64,
) -> Result<DeviationReport> {
    if !(0.0..=1.0).contains(&threshold) || !(0.0..=1.0).contains(&dominance_threshold) {
        return Err(Error::InvalidArgument("thresholds must lie in [0, 1]".into()));
    }
    let groups: Vec<GroupDeviation> = props
        .rows
        .iter()
        .map(|row| {
            let max_deviation = row
                .proportions
                .iter()
                .zip(&props.overall)
                .map(|(p, o)| (p - o).abs())
                .fold(0.0, f64::max);
            let (dominant_cluster, dominant_share) = row
                .proportions
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, p)| if p > best.1 { (c, p) } else { best });
            GroupDeviation {
                group_id: row.group_id.clone(),
                max_deviation,
                exceeds_threshold: max_deviation > threshold,
                dominant_cluster,
                dominant_share,
                dominant: dominant_share >= dominance_threshold,
            }
        })
        .collect();
    Ok(DeviationReport {
        group_key: props.group_key,
        threshold,
        dominance_threshold,
        max_deviation: groups.iter().map(|g| g.max_deviation).fold(0.0, f64::max),
        flagged_count: groups.iter().filter(|g| g.exceeds_threshold).count(),
        dominant_count: groups.iter().filter(|g| g.dominant).count(),
        groups,
    })
}
