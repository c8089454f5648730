//! Tile-grid task suite: level model, pipe and reachability constraints,
//! the reachability oracle, dataset synthesis and evaluation metrics.

mod constraints;
mod dataset;
mod level;
mod metrics;
mod phi;
mod reach;

pub use constraints::{
    build_one_hot_constraint, build_pipe_constraint, build_reachability_constraint,
    grid_var_names, reach_var_names, ConstraintError,
};
pub use dataset::{corrupt_dataset, synth_dataset, Dataset, Provenance, Style};
pub use level::{levels_to_text, parse_levels, GridLevel, LevelError, Tile, NUM_TILES};
pub use metrics::{diversity, metrics, metrics_with, Metrics, MetricsError, METRICS_CSV_HEADER};
pub use reach::{is_playable, is_standable, reachable_tiles, start_cell, ReachSpec, Reachability};
pub use phi::{reach_labels, train_phi, PhiConfig, PhiModel};
