//! Experiment configuration, seeded parallel execution, aggregation and
//! persistence.

pub mod bound_check;
pub mod config;
pub mod figures;
pub mod output;
pub mod runner;

pub use bound_check::{run_bound_check, BoundCheckConfig, BoundForm, BoundRow};
pub use config::{load_config, ExperimentConfig, StopRule};
pub use figures::{figure_ids, reproduce_figure, FigureOptions, FigureSpec, VarianceMapConfig};
pub use output::{write_experiment, Manifest, DATA_LAYOUT_VERSION};
pub use runner::{
    final_return, run_bandit, run_experiment, run_gridworld, BanditLearner, BanditRun,
    ExperimentResult, GridRun, Runs, Summary,
};
