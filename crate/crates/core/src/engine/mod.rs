//! Orchestration: scenes, configuration, the pipelined run and outputs.

pub mod config;
pub mod generate;
pub mod output;
pub mod run;
pub mod scene;

pub use config::{FopSpec, SimConfig};
pub use generate::{generate_scene, GenParams, SceneKind};
pub use output::{read_csv, write_csv, write_results, write_stats, CSV_HEADER};
pub use run::{compare_ars, run, run_with_dump, ArsComparison, RunResult, RunStats, Timings};
pub use scene::{load_scene, write_mesh, Scene};
