#![allow(dead_code)]

pub mod dd;
pub mod oracle;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use fuelclust::ingest::{TripRecord, TripTable};

/// One generating group: count, mean, std, and the closed range draws are kept in.
#[derive(Debug, Clone, Copy)]
pub struct Group {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Per-cluster counts, means, stds and value ranges of the published four-cluster fleet.
pub const TABLE2: [Group; 4] = [
    Group { count: 11, mean: 21.73, std: 6.55, lo: 4.84, hi: 26.35 },
    Group { count: 2857, mean: 46.03, std: 5.02, lo: 29.16, hi: 56.02 },
    Group { count: 908, mean: 63.94, std: 5.61, lo: 56.04, hi: 77.01 },
    Group { count: 230, mean: 95.05, std: 14.79, lo: 77.44, hi: 161.94 },
];

pub fn truncated_normal(rng: &mut ChaCha8Rng, g: &Group) -> f64 {
    if g.lo == g.hi {
        return g.lo;
    }
    let normal = Normal::new(g.mean, g.std).unwrap();
    loop {
        let v: f64 = normal.sample(rng);
        if v >= g.lo && v <= g.hi {
            return v;
        }
    }
}

pub struct Fleet {
    pub table: TripTable,
    /// Generating group of each record.
    pub truth: Vec<usize>,
}

/// Trips drawn from `groups`, shuffled, with drivers and routes assigned uniformly.
pub fn fleet(groups: &[Group], drivers: usize, routes: usize, seed: u64) -> Fleet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<(f64, usize)> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for _ in 0..g.count {
            // round like a logged measurement
            let v = (truncated_normal(&mut rng, g) * 100.0).round() / 100.0;
            draws.push((v.clamp(g.lo, g.hi), gi));
        }
    }
    draws.shuffle(&mut rng);
    let mut records = Vec::with_capacity(draws.len());
    let mut truth = Vec::with_capacity(draws.len());
    for (i, (v, gi)) in draws.into_iter().enumerate() {
        records.push(TripRecord {
            trip_id: format!("T{:05}", i + 1),
            driver_id: format!("D{:03}", rng.random_range(0..drivers)),
            route_id: format!("R{:02}", rng.random_range(0..routes)),
            fuel_efficiency: v,
        });
        truth.push(gi);
    }
    Fleet {
        table: TripTable {
            records,
            source_path: String::new(),
        },
        truth,
    }
}

pub fn table2_fleet(seed: u64) -> Fleet {
    fleet(&TABLE2, 202, 44, seed)
}

/// Fraction of samples whose cluster maps to their generating group under the
/// best one-to-one matching (clusters and groups ordered by mean).
pub fn recovery(values: &[f64], labels: &[usize], truth: &[usize]) -> f64 {
    let order = |ls: &[usize]| {
        let k = ls.iter().max().map_or(0, |m| m + 1);
        let mut sums = vec![(0.0, 0usize); k];
        for (&v, &l) in values.iter().zip(ls) {
            sums[l].0 += v;
            sums[l].1 += 1;
        }
        let mut ids: Vec<usize> = (0..k).collect();
        ids.sort_by(|&a, &b| {
            let m = |c: usize| sums[c].0 / sums[c].1.max(1) as f64;
            m(a).total_cmp(&m(b))
        });
        let mut rank = vec![0; k];
        for (r, &c) in ids.iter().enumerate() {
            rank[c] = r;
        }
        rank
    };
    let (rl, rt) = (order(labels), order(truth));
    let hits = labels
        .iter()
        .zip(truth)
        .filter(|(&l, &t)| rl[l] == rt[t])
        .count();
    hits as f64 / values.len() as f64
}
