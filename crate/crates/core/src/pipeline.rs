//! End-to-end runs: k selection, and the full analysis bundle written to an
//! output directory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    cluster_outliers, cluster_stats, deviation_report, group_proportions, label_clusters,
    stats_to_csv, ClusterStats, DeviationReport, GroupKey, Labeling, OutlierReport,
    ProportionTable,
};
use crate::charts::{render, BoxSeries, ChartPayload, ChartSpec};
use crate::config::PipelineConfig;
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::gmm::{covariance_floor, fit_em, Assignment, FitResult, MixtureModel};
use crate::ingest::{histogram, load_trips, validate_trips, Histogram, TripTable, ValidationReport};
use crate::refine::{refine_until_stable, Refinement};
use crate::select::{rank_scores, select_k, sweep, RankTable, ScoreTable};

pub const SUMMARY_FILE: &str = "analysis.json";

#[derive(Debug, Clone)]
pub struct Selection {
    pub scores: ScoreTable,
    pub ranks: RankTable,
    pub selected_k: usize,
}

/// Loads and validates the configured input.
pub fn load_input(config: &PipelineConfig) -> Result<(TripTable, ValidationReport)> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let loaded = load_trips(path, &config.column_map())?;
    let report = validate_trips(&loaded.table);
    Ok((loaded.table, report))
}

pub fn run_selection(data: &Samples, config: &PipelineConfig) -> Result<Selection> {
    let scores = sweep(data, config.k_range(), &config.em_config(), config.si_mode)?;
    // a failed fit or one leaving a cluster empty only has sentinel scores
    if scores.rows().iter().all(|r| r.fit_failed || r.scores.flags.silhouette) {
        return Err(Error::NoUsableFit {
            k_min: config.k_min,
            k_max: config.k_max,
        });
    }
    let ranks = if scores.rows().len() == 1 {
        RankTable::from_ranks(&[config.k_min], &[1.0], &[1.0], &[1.0])?
    } else {
        rank_scores(&scores)?
    };
    let selected_k = select_k(&ranks);
    Ok(Selection {
        scores,
        ranks,
        selected_k,
    })
}

pub fn write_selection(selection: &Selection, out_dir: &Path) -> Result<()> {
    write(out_dir, "scores.csv", selection.scores.to_csv())?;
    write(out_dir, "scores.json", selection.scores.to_json()?)?;
    write(out_dir, "rank_table.csv", selection.ranks.to_csv())?;
    write(out_dir, "rank_table.json", selection.ranks.to_json()?)
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub selection: Option<Selection>,
    pub fit: FitResult,
    /// Hard assignment of the fitted model, empty components removed.
    pub initial: Assignment,
    pub refinement: Option<Refinement>,
    pub assignment: Assignment,
    /// Moment-matched model of the final clusters, used for the final overlay.
    pub final_model: MixtureModel,
    pub stats: Vec<ClusterStats>,
    pub labeling: Labeling,
    pub outliers: Vec<OutlierReport>,
    pub drivers: ProportionTable,
    pub routes: ProportionTable,
    pub driver_deviation: DeviationReport,
    pub route_deviation: DeviationReport,
    pub histogram: Histogram,
}

/// Renumbers labels so that every cluster id in `0..k` has members.
fn compact(assignment: &Assignment) -> Assignment {
    let sizes = assignment.sizes();
    if sizes.iter().all(|&s| s > 0) {
        return assignment.clone();
    }
    let mut map = vec![usize::MAX; sizes.len()];
    let mut next = 0;
    for (c, &s) in sizes.iter().enumerate() {
        if s > 0 {
            map[c] = next;
            next += 1;
        }
    }
    log::warn!(
        "{} fitted component(s) own no samples and were dropped",
        sizes.len() - next
    );
    Assignment::from_labels(assignment.labels().iter().map(|&l| map[l]).collect())
}

/// Fit at the forced or selected k, then assign, refine, describe and group.
pub fn analyze(table: &TripTable, config: &PipelineConfig) -> Result<Analysis> {
    let data = table.samples()?;
    let values = table.efficiencies();
    let selection = match config.k {
        Some(_) => None,
        None => Some(run_selection(&data, config)?),
    };
    let k = config
        .k
        .or(selection.as_ref().map(|s| s.selected_k))
        .expect("k is forced or selected");
    let fit = fit_em(&data, k, &config.em_config())?;
    let initial = compact(&fit.model.assign(&data)?);

    let refinement = if config.refine {
        Some(refine_until_stable(
            &values,
            &initial,
            config.min_run_size,
            config.max_refine_rounds,
        )?)
    } else {
        None
    };
    let assignment = refinement
        .as_ref()
        .map_or_else(|| initial.clone(), |r| r.assignment.clone());
    let final_model = if assignment.k() == fit.model.k() && assignment == initial {
        fit.model.clone()
    } else {
        let floor = covariance_floor(&data, config.covariance_floor);
        MixtureModel::from_assignment(&data, &assignment, &floor)?
    };

    let stats = cluster_stats(&values, &assignment)?;
    let labeling = label_clusters(&stats);
    let ids: Vec<String> = table.records.iter().map(|r| r.trip_id.clone()).collect();
    let outliers = cluster_outliers(&values, &ids, &assignment)?;
    let drivers = group_proportions(table, &assignment, GroupKey::Driver)?;
    let routes = group_proportions(table, &assignment, GroupKey::Route)?;
    let driver_deviation =
        deviation_report(&drivers, config.deviation_threshold, config.dominance_threshold)?;
    let route_deviation =
        deviation_report(&routes, config.deviation_threshold, config.dominance_threshold)?;
    let histogram = histogram(&values, config.histogram_bins)?;

    Ok(Analysis {
        selection,
        fit,
        initial,
        refinement,
        assignment,
        final_model,
        stats,
        labeling,
        outliers,
        drivers,
        routes,
        driver_deviation,
        route_deviation,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub label: String,
    pub num: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub outliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub groups: usize,
    pub flagged: Vec<String>,
    pub dominated: Vec<String>,
    pub max_deviation: f64,
}

impl From<&DeviationReport> for GroupSummary {
    fn from(r: &DeviationReport) -> Self {
        Self {
            groups: r.groups.len(),
            flagged: r.flagged().map(String::from).collect(),
            dominated: r.dominated().map(String::from).collect(),
            max_deviation: r.max_deviation,
        }
    }
}

/// The headline numbers of an analysis run, as stored in `analysis.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trips: usize,
    pub selected_k: Option<usize>,
    pub fitted_k: usize,
    pub final_k: usize,
    pub seed: u64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub refined: bool,
    pub splits: usize,
    pub clusters: Vec<ClusterSummary>,
    pub label_warning: Option<String>,
    pub drivers: GroupSummary,
    pub routes: GroupSummary,
}

impl Analysis {
    pub fn summary(&self) -> Summary {
        Summary {
            trips: self.assignment.len(),
            selected_k: self.selection.as_ref().map(|s| s.selected_k),
            fitted_k: self.fit.model.k(),
            final_k: self.assignment.k(),
            seed: self.fit.seed,
            log_likelihood: self.fit.log_likelihood(),
            converged: self.fit.converged,
            refined: self.refinement.is_some(),
            splits: self.refinement.as_ref().map_or(0, |r| r.log.len()),
            clusters: self
                .stats
                .iter()
                .map(|s| ClusterSummary {
                    cluster_id: s.cluster_id,
                    label: self
                        .labeling
                        .label_of(s.cluster_id)
                        .map(|l| l.to_string())
                        .unwrap_or_default(),
                    num: s.num,
                    min: s.min,
                    max: s.max,
                    mean: s.mean,
                    median: s.median,
                    std: s.std,
                    outliers: self
                        .outliers
                        .iter()
                        .find(|o| o.cluster_id == s.cluster_id)
                        .map_or(0, |o| o.outlier_positions.len()),
                })
                .collect(),
            label_warning: self.labeling.warning.clone(),
            drivers: (&self.driver_deviation).into(),
            routes: (&self.route_deviation).into(),
        }
    }

    fn assignment_csv(&self, table: &TripTable) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Csv {
            path: PathBuf::from("assignment.csv"),
            source: e,
        };
        w.write_record([
            "trip_id",
            "driver_id",
            "route_id",
            "fuel_efficiency",
            "initial_cluster",
            "cluster",
            "label",
        ])
        .map_err(csv_err)?;
        for (i, r) in table.records.iter().enumerate() {
            let c = self.assignment.labels()[i];
            let label = self.labeling.label_of(c).map(|l| l.to_string()).unwrap_or_default();
            w.write_record([
                r.trip_id.clone(),
                r.driver_id.clone(),
                r.route_id.clone(),
                r.fuel_efficiency.to_string(),
                self.initial.labels()[i].to_string(),
                c.to_string(),
                label,
            ])
            .map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn chart_specs(&self, table: &TripTable) -> Vec<(&'static str, ChartSpec)> {
        let values = table.efficiencies();
        let unit = "fuel consumption (L/100km)";
        let mut series: Vec<BoxSeries> = (0..self.assignment.k())
            .map(|cluster_id| BoxSeries {
                cluster_id,
                values: self.assignment.members(cluster_id).map(|i| values[i]).collect(),
            })
            .collect();
        // boxes left to right by ascending mean
        series.sort_by(|a, b| {
            let mean = |s: &BoxSeries| s.values.iter().sum::<f64>() / s.values.len() as f64;
            mean(a).total_cmp(&mean(b)).then(a.cluster_id.cmp(&b.cluster_id))
        });
        vec![
            (
                "histogram.svg",
                ChartSpec::new(
                    "Fuel efficiency distribution",
                    unit,
                    "trips",
                    ChartPayload::Histogram(self.histogram.clone()),
                ),
            ),
            (
                "mixture_initial.svg",
                ChartSpec::new(
                    &format!("Mixture fit, k = {}", self.fit.model.k()),
                    unit,
                    "weighted density",
                    ChartPayload::MixtureOverlay {
                        model: self.fit.model.clone(),
                        values: values.clone(),
                        labels: self.fit.model.assign(&table_samples(&values)).map_or_else(
                            |_| self.initial.labels().to_vec(),
                            |a| a.labels().to_vec(),
                        ),
                    },
                ),
            ),
            (
                "mixture_final.svg",
                ChartSpec::new(
                    &format!("Final clusters, k = {}", self.assignment.k()),
                    unit,
                    "weighted density",
                    ChartPayload::MixtureOverlay {
                        model: self.final_model.clone(),
                        values,
                        labels: self.assignment.labels().to_vec(),
                    },
                ),
            ),
            (
                "proportions_driver.svg",
                ChartSpec::new(
                    "Cluster proportions per driver",
                    "driver",
                    "share of trips (%)",
                    ChartPayload::StackedBars(self.drivers.clone()),
                ),
            ),
            (
                "proportions_route.svg",
                ChartSpec::new(
                    "Cluster proportions per route",
                    "route",
                    "share of trips (%)",
                    ChartPayload::StackedBars(self.routes.clone()),
                ),
            ),
            (
                "boxplots.svg",
                ChartSpec::new(
                    "Fuel efficiency per cluster",
                    "",
                    unit,
                    ChartPayload::Boxplots(series),
                ),
            ),
        ]
    }

    /// Writes every artifact of the run into `out_dir`.
    pub fn write(&self, table: &TripTable, config: &PipelineConfig, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        config.save(out_dir.join("config.toml"))?;
        if let Some(selection) = &self.selection {
            write_selection(selection, out_dir)?;
        }
        write(out_dir, "model.json", serde_json::to_string_pretty(&self.fit)?)?;
        write(out_dir, "assignment.csv", self.assignment_csv(table)?)?;
        write(out_dir, "cluster_stats.csv", stats_to_csv(&self.stats, &self.labeling))?;
        write(out_dir, "labels.json", serde_json::to_string_pretty(&self.labeling)?)?;
        for (name, props, dev) in [
            ("driver", &self.drivers, &self.driver_deviation),
            ("route", &self.routes, &self.route_deviation),
        ] {
            write(out_dir, &format!("proportions_{name}.csv"), props.to_csv())?;
            write(
                out_dir,
                &format!("proportions_{name}.json"),
                serde_json::to_string_pretty(props)?,
            )?;
            write(
                out_dir,
                &format!("deviation_{name}.json"),
                serde_json::to_string_pretty(dev)?,
            )?;
        }
        write(out_dir, "outliers.json", serde_json::to_string_pretty(&self.outliers)?)?;
        if let Some(r) = &self.refinement {
            write(out_dir, "split_log.json", serde_json::to_string_pretty(r)?)?;
        }
        write(out_dir, SUMMARY_FILE, serde_json::to_string_pretty(&self.summary())?)?;
        self.chart_specs(table)
            .par_iter()
            .map(|(name, spec)| render(spec, out_dir.join(name)))
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    }
}

fn table_samples(values: &[f64]) -> Samples {
    Samples::from_scalars(values).expect("validated values are finite")
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_validation(report: &ValidationReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(out_dir, "validation.json", serde_json::to_string_pretty(report)?)
}

pub fn read_summary(out_dir: &Path) -> Result<Summary> {
    let path = out_dir.join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
