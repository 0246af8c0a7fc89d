//! Slow, literal transcriptions used as references in tests.

use super::dd::{Dd, PI};

pub type Point = Vec<f64>;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub struct DdModel {
    pub weights: Vec<Dd>,
    pub means: Vec<Vec<Dd>>,
    /// d x d, d in {1, 2}
    pub covs: Vec<Vec<Vec<Dd>>>,
}

impl DdModel {
    pub fn from_f64(weights: &[f64], means: &[Point], covs: &[Vec<Vec<f64>>]) -> Self {
        let conv = |v: &[f64]| v.iter().map(|&x| Dd::new(x)).collect::<Vec<_>>();
        Self {
            weights: conv(weights),
            means: means.iter().map(|m| conv(m)).collect(),
            covs: covs.iter().map(|c| c.iter().map(|r| conv(r)).collect()).collect(),
        }
    }
}

/// Normal density N(x | mean, cov) written out for d = 1 and d = 2.
fn normal_pdf(x: &[f64], mean: &[Dd], cov: &[Vec<Dd>]) -> Dd {
    let two_pi = PI * Dd::new(2.0);
    match x.len() {
        1 => {
            let dx = Dd::new(x[0]) - mean[0];
            let var = cov[0][0];
            (-(dx * dx) / (Dd::new(2.0) * var)).exp() / (two_pi * var).sqrt()
        }
        2 => {
            let (a, b, c) = (cov[0][0], cov[0][1], cov[1][1]);
            let det = a * c - b * b;
            let d0 = Dd::new(x[0]) - mean[0];
            let d1 = Dd::new(x[1]) - mean[1];
            // quadratic form with the explicit 2x2 inverse
            let q = (c * d0 * d0 - Dd::new(2.0) * b * d0 * d1 + a * d1 * d1) / det;
            (-(q / Dd::new(2.0))).exp() / (two_pi * det.sqrt())
        }
        _ => unimplemented!("oracle covers d <= 2"),
    }
}

/// gamma_j(x_n) = pi_j N(x_n | j) / sum_l pi_l N(x_n | l)
pub fn e_step(data: &[Point], m: &DdModel) -> Vec<Vec<Dd>> {
    data.iter()
        .map(|x| {
            let num: Vec<Dd> = (0..m.weights.len())
                .map(|j| m.weights[j] * normal_pdf(x, &m.means[j], &m.covs[j]))
                .collect();
            let den: Dd = num.iter().copied().sum();
            num.into_iter().map(|v| v / den).collect()
        })
        .collect()
}

/// Effective counts, weights, means, then covariances about the new means.
pub fn m_step(data: &[Point], gamma: &[Vec<Dd>]) -> DdModel {
    let n = data.len();
    let k = gamma[0].len();
    let d = data[0].len();
    let mut out = DdModel { weights: vec![], means: vec![], covs: vec![] };
    for j in 0..k {
        let nj: Dd = gamma.iter().map(|g| g[j]).sum();
        out.weights.push(nj / Dd::new(n as f64));
        let mean: Vec<Dd> = (0..d)
            .map(|r| gamma.iter().zip(data).map(|(g, x)| g[j] * Dd::new(x[r])).sum::<Dd>() / nj)
            .collect();
        let cov: Vec<Vec<Dd>> = (0..d)
            .map(|r| {
                (0..d)
                    .map(|c| {
                        gamma
                            .iter()
                            .zip(data)
                            .map(|(g, x)| {
                                g[j] * (Dd::new(x[r]) - mean[r]) * (Dd::new(x[c]) - mean[c])
                            })
                            .sum::<Dd>()
                            / nj
                    })
                    .collect()
            })
            .collect();
        out.means.push(mean);
        out.covs.push(cov);
    }
    out
}

pub fn log_likelihood(data: &[Point], m: &DdModel) -> Dd {
    data.iter()
        .map(|x| {
            (0..m.weights.len())
                .map(|j| m.weights[j] * normal_pdf(x, &m.means[j], &m.covs[j]))
                .sum::<Dd>()
                .ln()
        })
        .sum()
}

fn members(labels: &[usize], c: usize) -> Vec<usize> {
    (0..labels.len()).filter(|&i| labels[i] == c).collect()
}

fn centroid(data: &[Point], idx: &[usize]) -> Point {
    let d = data[0].len();
    (0..d)
        .map(|r| idx.iter().map(|&i| data[i][r]).sum::<f64>() / idx.len() as f64)
        .collect()
}

/// Silhouette width of every sample; singletons score 0, and 0/0 is 0.
pub fn silhouette_widths(data: &[Point], labels: &[usize], k: usize) -> Vec<f64> {
    (0..data.len())
        .map(|i| {
            let own = members(labels, labels[i]);
            if own.len() == 1 {
                return 0.0;
            }
            let a = own.iter().filter(|&&j| j != i).map(|&j| dist(&data[i], &data[j])).sum::<f64>()
                / (own.len() - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != labels[i])
                .map(|c| {
                    let m = members(labels, c);
                    m.iter().map(|&j| dist(&data[i], &data[j])).sum::<f64>() / m.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let den = a.max(b);
            if den == 0.0 {
                0.0
            } else {
                (b - a) / den
            }
        })
        .collect()
}

/// (mean over samples, mean of cluster means, max of cluster means)
pub fn silhouette_modes(data: &[Point], labels: &[usize], k: usize) -> (f64, f64, f64) {
    let s = silhouette_widths(data, labels, k);
    let overall = s.iter().sum::<f64>() / s.len() as f64;
    let per: Vec<f64> = (0..k)
        .map(|c| {
            let m = members(labels, c);
            m.iter().map(|&i| s[i]).sum::<f64>() / m.len() as f64
        })
        .collect();
    (
        overall,
        per.iter().sum::<f64>() / k as f64,
        per.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

pub fn calinski_harabasz(data: &[Point], labels: &[usize], k: usize) -> f64 {
    let n = data.len();
    let all: Vec<usize> = (0..n).collect();
    let c = centroid(data, &all);
    let mut bc = 0.0;
    let mut wc = 0.0;
    for cl in 0..k {
        let m = members(labels, cl);
        let ck = centroid(data, &m);
        bc += m.len() as f64 * sq(&ck, &c);
        wc += m.iter().map(|&i| sq(&data[i], &ck)).sum::<f64>();
    }
    if wc == 0.0 {
        return f64::INFINITY;
    }
    bc / wc * (n - k) as f64 / (k - 1) as f64
}

pub fn davies_bouldin(data: &[Point], labels: &[usize], k: usize) -> f64 {
    let cents: Vec<Point> = (0..k).map(|c| centroid(data, &members(labels, c))).collect();
    let spread: Vec<f64> = (0..k)
        .map(|c| {
            let m = members(labels, c);
            m.iter().map(|&i| dist(&data[i], &cents[c])).sum::<f64>() / m.len() as f64
        })
        .collect();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..k).filter(|&j| j != i) {
            let sep = dist(&cents[i], &cents[j]);
            if sep == 0.0 {
                return f64::INFINITY;
            }
            worst = worst.max((spread[i] + spread[j]) / sep);
        }
        total += worst;
    }
    total / k as f64
}

/// Positions outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR], quartiles by linear
/// interpolation between order statistics.
pub fn fence_scan(values: &[f64]) -> Vec<usize> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (s.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    let (q1, q3) = (q(0.25), q(0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    (0..values.len()).filter(|&i| values[i] < lo || values[i] > hi).collect()
}
