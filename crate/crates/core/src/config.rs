//! Flat key/value pipeline configuration. Values come from defaults, then an
//! optional TOML file, then command-line overrides.

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::DEFAULT_DOMINANCE_THRESHOLD;
use crate::error::{Error, Result};
use crate::gmm::{EmConfig, InitStrategy};
use crate::ingest::ColumnMap;
use crate::refine::{DEFAULT_MAX_ROUNDS, DEFAULT_MIN_RUN_SIZE};
use crate::validity::SilhouetteMode;

pub const DEFAULT_DEVIATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub column_trip_id: String,
    pub column_driver_id: String,
    pub column_route_id: String,
    pub column_fuel_efficiency: String,
    pub k_min: usize,
    pub k_max: usize,
    /// Forces the cluster count and skips selection.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub n_restarts: usize,
    pub covariance_floor: f64,
    pub init: InitStrategy,
    pub si_mode: SilhouetteMode,
    pub refine: bool,
    pub min_run_size: usize,
    pub max_refine_rounds: usize,
    pub dominance_threshold: f64,
    pub deviation_threshold: f64,
    pub histogram_bins: usize,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let columns = ColumnMap::default();
        let em = EmConfig::default();
        Self {
            input: None,
            column_trip_id: columns.trip_id,
            column_driver_id: columns.driver_id,
            column_route_id: columns.route_id,
            column_fuel_efficiency: columns.fuel_efficiency,
            k_min: 2,
            k_max: 9,
            k: None,
            seed: em.seed,
            max_iterations: em.max_iterations,
            tolerance: em.tolerance,
            n_restarts: em.n_restarts,
            covariance_floor: em.covariance_floor,
            init: em.init,
            si_mode: SilhouetteMode::default(),
            refine: true,
            min_run_size: DEFAULT_MIN_RUN_SIZE,
            max_refine_rounds: DEFAULT_MAX_ROUNDS,
            dominance_threshold: DEFAULT_DOMINANCE_THRESHOLD,
            deviation_threshold: DEFAULT_DEVIATION_THRESHOLD,
            histogram_bins: 10,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line values; `None` leaves the file or default value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub columns: Option<ColumnMap>,
    pub k_range: Option<(usize, usize)>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub si_mode: Option<SilhouetteMode>,
    pub min_run_size: Option<usize>,
    pub no_refine: bool,
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    /// Defaults, then `file` if given, then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match file {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(input) = &o.input {
            self.input = Some(input.clone());
        }
        if let Some(columns) = &o.columns {
            self.set_column_map(columns);
        }
        if let Some((lo, hi)) = o.k_range {
            self.k_min = lo;
            self.k_max = hi;
        }
        if o.k.is_some() {
            self.k = o.k;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(mode) = o.si_mode {
            self.si_mode = mode;
        }
        if let Some(size) = o.min_run_size {
            self.min_run_size = size;
        }
        if o.no_refine {
            self.refine = false;
        }
        if let Some(dir) = &o.out_dir {
            self.out_dir = dir.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_max < self.k_min {
            return Err(Error::Config(format!(
                "k range {}..{} must satisfy 2 <= k_min <= k_max",
                self.k_min, self.k_max
            )));
        }
        if self.k.is_some_and(|k| k < 1) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.min_run_size < 1 || self.histogram_bins < 1 {
            return Err(Error::Config("min_run_size and histogram_bins must be >= 1".into()));
        }
        for (name, v) in [
            ("dominance_threshold", self.dominance_threshold),
            ("deviation_threshold", self.deviation_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn column_map(&self) -> ColumnMap {
        ColumnMap {
            trip_id: self.column_trip_id.clone(),
            driver_id: self.column_driver_id.clone(),
            route_id: self.column_route_id.clone(),
            fuel_efficiency: self.column_fuel_efficiency.clone(),
        }
    }

    pub fn set_column_map(&mut self, columns: &ColumnMap) {
        self.column_trip_id = columns.trip_id.clone();
        self.column_driver_id = columns.driver_id.clone();
        self.column_route_id = columns.route_id.clone();
        self.column_fuel_efficiency = columns.fuel_efficiency.clone();
    }

    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            seed: self.seed,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            n_restarts: self.n_restarts,
            covariance_floor: self.covariance_floor,
            init: self.init,
        }
    }

    pub fn k_range(&self) -> RangeInclusive<usize> {
        self.k_min..=self.k_max
    }
}

/// Parses `A..B` (also `A..=B` and `A-B`) into an inclusive pair.
pub fn parse_k_range(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("bad k range `{s}`, expected A..B"));
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'))
        .ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok((a, b))
}
