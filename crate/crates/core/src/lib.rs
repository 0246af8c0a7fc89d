//! Clustering of per-trip fuel efficiency with Gaussian mixtures fitted by EM,
//! validity-index model selection, gap-based refinement and per-driver and
//! per-route breakdowns.

pub mod analysis;
pub mod charts;
pub mod config;
pub mod data;
pub mod error;
pub mod gmm;
pub mod ingest;
pub mod pipeline;
pub mod refine;
pub mod select;
pub mod validity;

pub use data::Samples;
pub use error::{Error, Result};
pub use gmm::{assign, fit_em, Assignment, EmConfig, FitResult, MixtureModel};
pub use ingest::{load_trips, validate_trips, ColumnMap, TripRecord, TripTable};
pub use select::{rank_scores, select_k, sweep, RankTable, ScoreTable};
pub use validity::{SilhouetteMode, ValidityScores};
