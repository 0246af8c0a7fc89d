//! Static SVG charts: histogram, mixture curves over assigned samples, stacked
//! proportion bars and per-cluster boxplots. Output depends only on the `ChartSpec`,
//! so identical specs produce identical bytes.

mod svg;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{tukey_fences, ProportionTable};
use crate::error::{Error, Result};
use crate::gmm::{MixtureModel, PreparedModel};
use crate::ingest::Histogram;
use svg::{Scale, Svg, BOTTOM, HEIGHT, LEFT, RIGHT, TOP, WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Histogram,
    MixtureOverlay,
    StackedBars,
    Boxplots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSeries {
    pub cluster_id: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChartPayload {
    Histogram(Histogram),
    /// A 1-D model with the samples and their cluster labels.
    MixtureOverlay {
        model: MixtureModel,
        values: Vec<f64>,
        labels: Vec<usize>,
    },
    StackedBars(ProportionTable),
    Boxplots(Vec<BoxSeries>),
}

impl ChartPayload {
    fn kind(&self) -> ChartKind {
        match self {
            Self::Histogram(_) => ChartKind::Histogram,
            Self::MixtureOverlay { .. } => ChartKind::MixtureOverlay,
            Self::StackedBars(_) => ChartKind::StackedBars,
            Self::Boxplots(_) => ChartKind::Boxplots,
        }
    }

    fn cluster_ids(&self) -> Vec<usize> {
        match self {
            Self::Histogram(_) => Vec::new(),
            Self::MixtureOverlay { model, labels, .. } => {
                let top = labels.iter().copied().max().map_or(0, |m| m + 1);
                (0..model.k().max(top)).collect()
            }
            Self::StackedBars(t) => (0..t.k).collect(),
            Self::Boxplots(series) => series.iter().map(|s| s.cluster_id).collect(),
        }
    }
}

/// Cluster id to color; the same palette is used by every chart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette(pub Vec<String>);

const BASE_COLORS: [&str; 10] = [
    "#ff7f0e", // orange
    "#2ca02c", // green
    "#9467bd", // purple
    "#8c564b", // brown
    "#e6c229", // yellow
    "#1f77b4", // blue
    "#e377c2", // pink
    "#7f7f7f", // grey
    "#17becf", // cyan
    "#bcbd22", // olive
];

impl Default for Palette {
    fn default() -> Self {
        Self(BASE_COLORS.iter().map(|c| c.to_string()).collect())
    }
}

impl Palette {
    /// The base colors repeated until `n` ids are covered.
    pub fn cycled(n: usize) -> Self {
        Self((0..n.max(1)).map(|i| BASE_COLORS[i % BASE_COLORS.len()].to_string()).collect())
    }

    pub fn color(&self, cluster: usize) -> Option<&str> {
        self.0.get(cluster).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub payload: ChartPayload,
    pub palette: Palette,
}

impl ChartSpec {
    /// Spec whose kind follows the payload, with a palette covering its ids.
    pub fn new(title: &str, x_label: &str, y_label: &str, payload: ChartPayload) -> Self {
        let ids = payload.cluster_ids();
        let n = ids.iter().copied().max().map_or(1, |m| m + 1);
        Self {
            kind: payload.kind(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            palette: Palette::cycled(n.max(BASE_COLORS.len())),
            payload,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.payload.kind() != self.kind {
            return Err(Error::PayloadMismatch(self.kind));
        }
        for id in self.payload.cluster_ids() {
            if self.palette.color(id).is_none() {
                return Err(Error::PaletteIncomplete(id));
            }
        }
        if let ChartPayload::MixtureOverlay {
            model,
            values,
            labels,
        } = &self.payload
        {
            if model.dimension() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    actual: model.dimension(),
                });
            }
            if values.len() != labels.len() {
                return Err(Error::DimensionMismatch {
                    expected: values.len(),
                    actual: labels.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub component: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Weighted component densities `pi_j N(x | mu_j, sigma_j^2)` at `points`
/// evenly spaced positions over `range`.
pub fn curve_samples(
    model: &MixtureModel,
    range: (f64, f64),
    points: usize,
) -> Result<Vec<Polyline>> {
    if model.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: model.dimension(),
        });
    }
    if points < 2 {
        return Err(Error::InvalidArgument("curve needs at least two points".into()));
    }
    let (lo, hi) = range;
    let xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let prepared = PreparedModel::new(model)?;
    let k = model.k();
    let mut lines: Vec<Polyline> = (0..k)
        .map(|component| Polyline {
            component,
            xs: xs.clone(),
            ys: Vec::with_capacity(points),
        })
        .collect();
    let mut buf = vec![0.0; k];
    let mut scratch = Vec::new();
    for &x in &xs {
        prepared.weighted_log_densities(&[x], &mut buf, &mut scratch);
        for (line, lw) in lines.iter_mut().zip(&buf) {
            line.ys.push(lw.exp());
        }
    }
    Ok(lines)
}

pub fn render_svg(spec: &ChartSpec) -> Result<String> {
    spec.validate()?;
    let mut svg = Svg::new(&spec.title);
    match &spec.payload {
        ChartPayload::Histogram(h) => histogram(&mut svg, spec, h),
        ChartPayload::MixtureOverlay {
            model,
            values,
            labels,
        } => mixture_overlay(&mut svg, spec, model, values, labels)?,
        ChartPayload::StackedBars(t) => stacked_bars(&mut svg, spec, t),
        ChartPayload::Boxplots(series) => boxplots(&mut svg, spec, series)?,
    }
    Ok(svg.finish())
}

pub fn render(spec: &ChartSpec, out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    let svg = render_svg(spec)?;
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}

fn plot_x(lo: f64, hi: f64) -> Scale {
    Scale::new(lo, hi, LEFT, WIDTH - RIGHT)
}

fn plot_y(lo: f64, hi: f64) -> Scale {
    Scale::new(lo, hi, HEIGHT - BOTTOM, TOP)
}

fn color(spec: &ChartSpec, id: usize) -> &str {
    spec.palette.color(id).unwrap_or("#000000")
}

fn cluster_legend(svg: &mut Svg, spec: &ChartSpec, ids: impl Iterator<Item = usize>) {
    let entries: Vec<(String, String)> = ids
        .map(|id| (format!("C{id}"), color(spec, id).to_string()))
        .collect();
    svg.legend(&entries);
}

fn histogram(svg: &mut Svg, spec: &ChartSpec, h: &Histogram) {
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let x = plot_x(h.bin_edges[0], h.bin_edges[h.bin_edges.len() - 1]);
    let y = plot_y(0.0, max);
    for (i, &count) in h.counts.iter().enumerate() {
        let (x0, x1) = (x.map(h.bin_edges[i]), x.map(h.bin_edges[i + 1]));
        let top = y.map(count as f64);
        svg.raw(format!(
            r##"<rect class="bar" data-count="{count}" x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="#a6cee3" stroke="#4a90c2"/>"##,
            x1 - x0,
            y.map(0.0) - top
        ));
    }
    svg.axes(Some(&x), &y, &spec.x_label, &spec.y_label);
}

/// Fractional part of `i * golden ratio`, a fixed low-discrepancy jitter.
fn jitter(i: usize) -> f64 {
    (i as f64 * 0.618_033_988_749_894_9).fract()
}

fn mixture_overlay(
    svg: &mut Svg,
    spec: &ChartSpec,
    model: &MixtureModel,
    values: &[f64],
    labels: &[usize],
) -> Result<()> {
    let means = model.scalar_means().unwrap_or_default();
    let sds: Vec<f64> = model
        .scalar_variances()
        .unwrap_or_default()
        .iter()
        .map(|v| v.sqrt())
        .collect();
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() {
        lo = means.iter().zip(&sds).map(|(m, s)| m - 3.0 * s).fold(f64::INFINITY, f64::min);
        hi = means.iter().zip(&sds).map(|(m, s)| m + 3.0 * s).fold(f64::NEG_INFINITY, f64::max);
    }
    let pad = ((hi - lo) * 0.05).max(0.5);
    let (lo, hi) = (lo - pad, hi + pad);
    let curves = curve_samples(model, (lo, hi), 400)?;
    let peak = curves
        .iter()
        .flat_map(|c| c.ys.iter().copied())
        .fold(0.0, f64::max);
    let peak = if peak > 0.0 { peak * 1.1 } else { 1.0 };
    let x = plot_x(lo, hi);
    let y = plot_y(0.0, peak);

    // samples sit in a jittered band along the bottom of the plot
    for (i, (&v, &l)) in values.iter().zip(labels).enumerate() {
        let cy = y.map(peak * (0.01 + 0.14 * jitter(i)));
        svg.raw(format!(
            r##"<circle class="point" data-cluster="{l}" cx="{:.2}" cy="{cy:.2}" r="2" fill="{}" fill-opacity="0.6"/>"##,
            x.map(v),
            color(spec, l)
        ));
    }
    for curve in &curves {
        let mut d = String::new();
        for (j, (&cx, &cy)) in curve.xs.iter().zip(&curve.ys).enumerate() {
            d.push_str(&format!(
                "{}{:.2},{:.2}",
                if j == 0 { "M" } else { " L" },
                x.map(cx),
                y.map(cy)
            ));
        }
        svg.raw(format!(
            r##"<path class="curve" data-cluster="{}" d="{d}" fill="none" stroke="{}" stroke-width="2"/>"##,
            curve.component,
            color(spec, curve.component)
        ));
    }
    svg.axes(Some(&x), &y, &spec.x_label, &spec.y_label);
    cluster_legend(svg, spec, 0..model.k());
    Ok(())
}

/// One bar per group, stacked in cluster order to 100%. A dashed line per
/// cluster marks the top of that cluster's segment in the overall average bar.
fn stacked_bars(svg: &mut Svg, spec: &ChartSpec, table: &ProportionTable) {
    let y = plot_y(0.0, 100.0);
    let n = table.rows.len().max(1);
    let slot = (WIDTH - RIGHT - LEFT) / n as f64;
    let bar = slot * 0.8;
    for (g, row) in table.rows.iter().enumerate() {
        let x0 = LEFT + g as f64 * slot + (slot - bar) / 2.0;
        let mut acc = 0.0;
        for (c, &p) in row.proportions.iter().enumerate() {
            let (bottom, top) = (y.map(acc * 100.0), y.map((acc + p) * 100.0));
            acc += p;
            if p <= 0.0 {
                continue;
            }
            svg.raw(format!(
                r##"<rect class="segment" data-group="{}" data-cluster="{c}" data-share="{:.6}" x="{x0:.2}" y="{top:.2}" width="{bar:.2}" height="{:.2}" fill="{}"/>"##,
                svg::escape(&row.group_id),
                p,
                bottom - top,
                color(spec, c)
            ));
        }
        let (lx, ly) = (x0 + bar / 2.0, HEIGHT - BOTTOM + 10.0);
        svg.text(
            lx,
            ly,
            "end",
            &format!(r##" font-size="9" transform="rotate(-60 {lx:.2} {ly:.2})""##),
            &row.group_id,
        );
    }
    let mut acc = 0.0;
    for (c, &p) in table.overall.iter().enumerate() {
        acc += p;
        let py = y.map(acc * 100.0);
        svg.raw(format!(
            r##"<line class="average" data-cluster="{c}" data-level="{:.6}" x1="{LEFT:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="{}" stroke-width="1.5" stroke-dasharray="6,4"/>"##,
            acc * 100.0,
            WIDTH - RIGHT,
            color(spec, c)
        ));
    }
    svg.axes(None, &y, &spec.x_label, &spec.y_label);
    cluster_legend(svg, spec, 0..table.k);
}

fn boxplots(svg: &mut Svg, spec: &ChartSpec, series: &[BoxSeries]) -> Result<()> {
    let (lo, hi) = series
        .iter()
        .flat_map(|s| s.values.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let pad = ((hi - lo) * 0.05).max(0.5);
    let y = plot_y(lo - pad, hi + pad);
    let n = series.len().max(1);
    let slot = (WIDTH - RIGHT - LEFT) / n as f64;
    let half = (slot * 0.25).min(40.0);
    for (i, s) in series.iter().enumerate() {
        if s.values.is_empty() {
            continue;
        }
        let f = tukey_fences(&s.values)?;
        let inside: Vec<f64> = s
            .values
            .iter()
            .copied()
            .filter(|&v| v >= f.lower && v <= f.upper)
            .collect();
        let w_lo = inside.iter().copied().fold(f.q1, f64::min);
        let w_hi = inside.iter().copied().fold(f.q3, f64::max);
        let cx = LEFT + (i as f64 + 0.5) * slot;
        let c = color(spec, s.cluster_id);
        let id = s.cluster_id;
        svg.raw(format!(
            r##"<line class="whisker" data-cluster="{id}" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#000000"/>"##,
            y.map(w_lo),
            y.map(w_hi)
        ));
        for w in [w_lo, w_hi] {
            svg.raw(format!(
                r##"<line class="cap" data-cluster="{id}" x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#000000"/>"##,
                cx - half / 2.0,
                cx + half / 2.0,
                py = y.map(w)
            ));
        }
        svg.raw(format!(
            r##"<rect class="box" data-cluster="{id}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{c}" fill-opacity="0.7" stroke="#000000"/>"##,
            cx - half,
            y.map(f.q3),
            2.0 * half,
            y.map(f.q1) - y.map(f.q3)
        ));
        svg.raw(format!(
            r##"<line class="median" data-cluster="{id}" x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#000000" stroke-width="2"/>"##,
            cx - half,
            cx + half,
            py = y.map(f.median)
        ));
        for &v in s.values.iter().filter(|&&v| v < f.lower || v > f.upper) {
            svg.raw(format!(
                r##"<circle class="outlier" data-cluster="{id}" cx="{cx:.2}" cy="{:.2}" r="3.5" fill="none" stroke="#000000"/>"##,
                y.map(v)
            ));
        }
        svg.text(cx, HEIGHT - BOTTOM + 18.0, "middle", "", &format!("Cluster {id}"));
    }
    svg.axes(None, &y, &spec.x_label, &spec.y_label);
    Ok(())
}
