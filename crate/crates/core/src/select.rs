//! Choosing the number of clusters: sweep k, score each fit with the three
//! validity indices, rank per index and pick the lowest average rank.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::gmm::{fit_em, EmConfig};
use crate::validity::{SilhouetteMode, ValidityScores};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub scores: ValidityScores,
    pub seed: u64,
    pub converged: bool,
    /// Set when EM failed for this k; the scores are then all sentinels.
    pub fit_failed: bool,
    pub log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
}

impl ScoreTable {
    /// Rows are sorted by k; duplicate k values are rejected.
    pub fn new(mut rows: Vec<ScoreRow>) -> Result<Self> {
        rows.sort_by_key(|r| r.scores.k);
        if rows.windows(2).any(|w| w[0].scores.k == w[1].scores.k) {
            return Err(Error::InvalidArgument("duplicate k in score table".into()));
        }
        Ok(Self { rows })
    }

    /// Table from bare scores, e.g. computed elsewhere.
    pub fn from_scores(scores: Vec<ValidityScores>) -> Result<Self> {
        Self::new(
            scores
                .into_iter()
                .map(|scores| ScoreRow {
                    scores,
                    seed: 0,
                    converged: true,
                    fit_failed: false,
                    log_likelihood: None,
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| r.fit_failed)
    }

    /// CSV with columns `k,si,chi,dbi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,si,chi,dbi\n");
        for r in &self.rows {
            let s = &r.scores;
            let _ = writeln!(
                out,
                "{},{},{},{}",
                s.k, s.silhouette, s.calinski_harabasz, s.davies_bouldin
            );
        }
        out
    }

    /// One JSON record per k.
    pub fn to_json(&self) -> Result<String> {
        let records: Vec<&ValidityScores> = self.rows.iter().map(|r| &r.scores).collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }
}

/// Fits one mixture per k (in parallel) and scores its hard assignment.
pub fn sweep(
    data: &Samples,
    k_range: RangeInclusive<usize>,
    config: &EmConfig,
    mode: SilhouetteMode,
) -> Result<ScoreTable> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi < lo || hi + 1 > data.len() {
        return Err(Error::InvalidArgument(format!(
            "k range {lo}..{hi} must lie within [2, {}]",
            data.len().saturating_sub(1)
        )));
    }
    let rows = k_range
        .into_par_iter()
        .map(|k| score_k(data, k, config, mode))
        .collect::<Result<Vec<_>>>()?;
    ScoreTable::new(rows)
}

fn score_k(data: &Samples, k: usize, config: &EmConfig, mode: SilhouetteMode) -> Result<ScoreRow> {
    match fit_em(data, k, config) {
        Ok(fit) => {
            let assignment = fit.model.assign(data)?;
            Ok(ScoreRow {
                scores: ValidityScores::evaluate(data, &assignment, mode)?,
                seed: fit.seed,
                converged: fit.converged,
                fit_failed: false,
                log_likelihood: Some(fit.log_likelihood()),
            })
        }
        Err(Error::AllRestartsCollapsed { .. }) => {
            log::warn!("all EM restarts collapsed at k = {k}");
            Ok(ScoreRow {
                scores: ValidityScores::sentinel(k),
                seed: config.seed,
                converged: false,
                fit_failed: true,
                log_likelihood: None,
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub k: usize,
    pub rank_si: f64,
    pub rank_chi: f64,
    pub rank_dbi: f64,
    pub average_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub rows: Vec<RankRow>,
    pub selected_k: usize,
}

impl RankTable {
    /// Aggregates precomputed per-index ranks (1 = best) for the given ks.
    pub fn from_ranks(ks: &[usize], si: &[f64], chi: &[f64], dbi: &[f64]) -> Result<Self> {
        let r = ks.len();
        if r == 0 || si.len() != r || chi.len() != r || dbi.len() != r {
            return Err(Error::InvalidArgument("rank vectors must match k list".into()));
        }
        let rows: Vec<RankRow> = (0..r)
            .map(|i| RankRow {
                k: ks[i],
                rank_si: si[i],
                rank_chi: chi[i],
                rank_dbi: dbi[i],
                average_rank: (si[i] + chi[i] + dbi[i]) / 3.0,
            })
            .collect();
        let selected_k = pick_min_average(&rows);
        Ok(Self { rows, selected_k })
    }

    /// Average ranks rounded to one decimal for display.
    pub fn rounded_averages(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| format!("{:.1}", r.average_rank))
            .collect()
    }

    /// Index-by-k layout: rows SI, CHI, DBI, Avg.; one column per k.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("No. Clusters");
        for r in &self.rows {
            let _ = write!(out, ",{}", r.k);
        }
        out.push('\n');
        let mut line = |name: &str, values: Vec<String>| {
            out.push_str(name);
            for v in values {
                out.push(',');
                out.push_str(&v);
            }
            out.push('\n');
        };
        line("SI", self.rows.iter().map(|r| fmt_rank(r.rank_si)).collect());
        line("CHI", self.rows.iter().map(|r| fmt_rank(r.rank_chi)).collect());
        line("DBI", self.rows.iter().map(|r| fmt_rank(r.rank_dbi)).collect());
        line("Avg.", self.rounded_averages());
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn fmt_rank(r: f64) -> String {
    if r.fract() == 0.0 {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

fn pick_min_average(rows: &[RankRow]) -> usize {
    let mut best = &rows[0];
    for row in &rows[1..] {
        if row.average_rank < best.average_rank
            || (row.average_rank == best.average_rank && row.k < best.k)
        {
            best = row;
        }
    }
    best.k
}

/// Ranks with 1 = best; tied values share the mean of their positions and
/// flagged entries are placed after every unflagged one.
pub fn rank_values(values: &[f64], flagged: &[bool], higher_is_better: bool) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    let key = |i: usize| -> (bool, f64) {
        let v = if higher_is_better { -values[i] } else { values[i] };
        (flagged[i], v)
    };
    order.sort_by(|&a, &b| {
        let (fa, va) = key(a);
        let (fb, vb) = key(b);
        fa.cmp(&fb).then(if fa && fb {
            std::cmp::Ordering::Equal
        } else {
            va.total_cmp(&vb)
        })
    });
    let same = |a: usize, b: usize| {
        let (fa, va) = key(a);
        let (fb, vb) = key(b);
        fa == fb && (fa || va == vb)
    };
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && same(order[start], order[end]) {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}

/// SI and CHI rank descending, DBI ascending; sentinel values rank last.
pub fn rank_scores(table: &ScoreTable) -> Result<RankTable> {
    let rows = table.rows();
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("ranking needs at least two k values".into()));
    }
    let ks: Vec<usize> = rows.iter().map(|r| r.scores.k).collect();
    let column = |f: fn(&ValidityScores) -> (f64, bool)| -> (Vec<f64>, Vec<bool>) {
        rows.iter().map(|r| f(&r.scores)).unzip()
    };
    let (si, si_flag) = column(|s| (s.silhouette, s.flags.silhouette));
    let (chi, chi_flag) = column(|s| (s.calinski_harabasz, s.flags.calinski_harabasz));
    let (dbi, dbi_flag) = column(|s| (s.davies_bouldin, s.flags.davies_bouldin));
    RankTable::from_ranks(
        &ks,
        &rank_values(&si, &si_flag, true),
        &rank_values(&chi, &chi_flag, true),
        &rank_values(&dbi, &dbi_flag, false),
    )
}

pub fn select_k(ranks: &RankTable) -> usize {
    ranks.selected_k
}
