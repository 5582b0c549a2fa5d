//! Batch orchestration and artefact management.

pub mod config;
pub mod run;
pub mod sweep;

pub use config::{GridConfig, OutputConfig, Profile, RunConfig, SynthesisConfig, SCHEMA_VERSION};
pub use run::{
    in_stage, reconstruct_from_record, run_pipeline, run_pipeline_cached, synthesize, synthesize_clean, PipelineCache,
    PreparedSolver, ReconstructionReport, RunOutput, RunStatus, Timings, ARTIFACTS, INCOMPLETE_MARKER, PGM_ARTIFACTS,
    W_ARTIFACT,
};
pub use sweep::{aggregate, run_sweep, write_rows_csv, write_summary_csv, SweepAxes, SweepFile, SweepRow, SweepSummary};
