//! Orchestration around `tempseg-core`: run configuration, a
//! content-addressed run store with stage reuse, report tables, a
//! synthetic data generator, the consensus benchmark, and the HTTP
//! service.

pub mod bench;
pub mod config;
pub mod report;
pub mod run;
pub mod service;
pub mod store;
pub mod synth;

pub use config::{RunConfig, Stage};
pub use run::{execute, load_artifact, rerun, run_pipeline, submit, RunArtifact};
pub use store::{Manifest, RunStore};
