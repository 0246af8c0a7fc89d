//! Splitting clusters whose members occupy disjoint value ranges separated by
//! other clusters. Works on scalar samples only.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::Assignment;

pub const DEFAULT_MIN_RUN_SIZE: usize = 2;
pub const DEFAULT_MAX_ROUNDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub cluster_id: usize,
    /// Member sample indices per segment, lowest values first, each in
    /// value-sorted order.
    pub segments: Vec<Vec<usize>>,
    pub gap_clusters: BTreeSet<usize>,
}

/// Sample indices ordered by value, ties by index.
fn value_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// A cluster is a candidate when, in value-sorted order, it has at least two
/// maximal runs of `min_run_size` or more members. Each such run opens a new
/// segment; shorter stray runs join the segment before them (or the first
/// segment when they precede it).
pub fn detect_split_candidates(
    values: &[f64],
    assignment: &Assignment,
    min_run_size: usize,
) -> Result<Vec<SplitCandidate>> {
    if values.len() != assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            actual: assignment.len(),
        });
    }
    let min_run_size = min_run_size.max(1);
    let order = value_order(values);
    let labels = assignment.labels();

    // (label, start, end) over positions in `order`
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if run.0 == labels[i] => run.2 = pos + 1,
            _ => runs.push((labels[i], pos, pos + 1)),
        }
    }

    let mut candidates = Vec::new();
    for cluster in 0..assignment.k() {
        let own: Vec<(usize, usize)> = runs
            .iter()
            .filter(|r| r.0 == cluster)
            .map(|r| (r.1, r.2))
            .collect();
        let big: Vec<usize> = own
            .iter()
            .enumerate()
            .filter(|(_, (s, e))| e - s >= min_run_size)
            .map(|(i, _)| i)
            .collect();
        if big.len() < 2 {
            continue;
        }
        let mut segments: Vec<Vec<usize>> = vec![Vec::new(); big.len()];
        for (run_idx, &(s, e)) in own.iter().enumerate() {
            let seg = big.iter().rposition(|&b| b <= run_idx).unwrap_or(0);
            segments[seg].extend_from_slice(&order[s..e]);
        }
        let (first, last) = (own[0].0, own[own.len() - 1].1);
        let gap_clusters = order[first..last]
            .iter()
            .map(|&i| labels[i])
            .filter(|&l| l != cluster)
            .collect();
        candidates.push(SplitCandidate {
            cluster_id: cluster,
            segments,
            gap_clusters,
        });
    }
    Ok(candidates)
}

/// Gives every segment after the first a fresh cluster id appended after the
/// existing ones. All other labels are untouched.
pub fn split_cluster(assignment: &Assignment, candidate: &SplitCandidate) -> Result<Assignment> {
    let id = candidate.cluster_id;
    let labels = assignment.labels();
    if candidate.segments.len() < 2 || candidate.segments.iter().any(Vec::is_empty) {
        return Err(Error::StaleCandidate(id));
    }
    let listed: usize = candidate.segments.iter().map(Vec::len).sum();
    let current = labels.iter().filter(|&&l| l == id).count();
    let all_members = candidate
        .segments
        .iter()
        .flatten()
        .all(|&i| labels.get(i) == Some(&id));
    if id >= assignment.k() || listed != current || !all_members {
        return Err(Error::StaleCandidate(id));
    }
    let mut next = labels.to_vec();
    let base = assignment.k();
    for (offset, segment) in candidate.segments.iter().enumerate().skip(1) {
        for &i in segment {
            next[i] = base + offset - 1;
        }
    }
    Assignment::new(next, base + candidate.segments.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLog {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub cluster_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitLogEntry {
    pub round: usize,
    pub cluster_id: usize,
    pub segments: Vec<SegmentLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub assignment: Assignment,
    pub log: Vec<SplitLogEntry>,
    pub rounds: usize,
    /// False when `max_rounds` ran out while candidates remained.
    pub stable: bool,
}

/// Detect-and-split until no candidates remain or `max_rounds` is reached.
/// Each round splits every candidate found at its start, in ascending cluster id.
pub fn refine_until_stable(
    values: &[f64],
    assignment: &Assignment,
    min_run_size: usize,
    max_rounds: usize,
) -> Result<Refinement> {
    let mut current = assignment.clone();
    let mut log = Vec::new();
    for round in 1..=max_rounds.max(1) {
        let candidates = detect_split_candidates(values, &current, min_run_size)?;
        if candidates.is_empty() {
            return Ok(Refinement {
                assignment: current,
                log,
                rounds: round - 1,
                stable: true,
            });
        }
        for candidate in &candidates {
            let base = current.k();
            current = split_cluster(&current, candidate)?;
            let segments = candidate
                .segments
                .iter()
                .enumerate()
                .map(|(s, members)| {
                    let (min, max) = members.iter().fold(
                        (f64::INFINITY, f64::NEG_INFINITY),
                        |(lo, hi), &i| (lo.min(values[i]), hi.max(values[i])),
                    );
                    SegmentLog {
                        min,
                        max,
                        count: members.len(),
                        cluster_id: if s == 0 { candidate.cluster_id } else { base + s - 1 },
                    }
                })
                .collect();
            log.push(SplitLogEntry {
                round,
                cluster_id: candidate.cluster_id,
                segments,
            });
        }
    }
    let stable = detect_split_candidates(values, &current, min_run_size)?.is_empty();
    Ok(Refinement {
        assignment: current,
        log,
        rounds: max_rounds.max(1),
        stable,
    })
}
