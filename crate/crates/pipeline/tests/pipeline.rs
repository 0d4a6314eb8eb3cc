//! Run lifecycle against a real store: complete runs, halting on an
//! inconsistent judgment matrix, stage reuse and resumption.

use std::collections::HashMap;

use serde_json::json;
use tempseg::config::{RunConfig, Stage};
use tempseg::run::{execute, load_artifact, output_file, rerun, run_pipeline, submit};
use tempseg::store::{RunState, RunStore, StageState};
use tempseg::synth::{generate_synthetic, SynthConfig};
use tempseg_core::metrics::adjusted_rand_index;
use tempseg_core::Exec;

fn synthetic(n: usize, periods: usize, noise: f64, seed: u64) -> (Vec<u8>, HashMap<String, usize>) {
    let data = generate_synthetic(&SynthConfig { n_customers: n, n_periods: periods, k: 4, noise, seed, ..Default::default() }).unwrap();
    let truth = data.truth.iter().cloned().collect();
    (data.transactions_csv().unwrap(), truth)
}

fn small_config() -> RunConfig {
    RunConfig::default().patched(&json!({"cluster": {"k_range": [3, 4, 5]}})).unwrap()
}

fn inconsistent_rfm() -> RunConfig {
    let c = small_config();
    let mut doc = serde_json::to_value(&c).unwrap();
    doc["weights"]["rfm"]["matrix"] = json!([[1.0, 9.0, 1.0 / 9.0], [1.0 / 9.0, 1.0, 9.0], [9.0, 1.0 / 9.0, 1.0]]);
    serde_json::from_value(doc).unwrap()
}

#[test]
fn twenty_customer_fixture_completes_with_four_segments() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let (bytes, truth) = synthetic(20, 24, 0.05, 3);
    let m = run_pipeline(&store, &bytes, small_config(), Exec::Sequential).unwrap();
    assert_eq!(m.state, RunState::Completed, "{:?}", m.error);
    assert!(m.stages.iter().all(|r| r.state == StageState::Done && r.seconds.is_some()));
    let a = load_artifact(&store, &m.run_id).unwrap();
    let consensus = a.consensus.unwrap();
    assert_eq!(consensus.k, 4);
    let panel = a.features.unwrap().panel;
    let truth: Vec<usize> = panel.customers.iter().map(|c| truth[c]).collect();
    assert!(adjusted_rand_index(&consensus.final_labels, &truth) > 0.6);
    assert!(a.report.is_some() && a.stability.is_some() && a.grid.is_some());
    let labels = String::from_utf8(output_file(&store, &m.run_id, "labels.csv").unwrap()).unwrap();
    assert_eq!(labels.lines().count(), 21);
    assert!(labels.starts_with("customer_id,time_series,stability,final\n"));
}

#[test]
fn noise_free_segments_are_recovered_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let (bytes, truth) = synthetic(60, 12, 0.0, 5);
    let m = run_pipeline(&store, &bytes, small_config(), Exec::Parallel).unwrap();
    assert_eq!(m.state, RunState::Completed, "{:?}", m.error);
    let a = load_artifact(&store, &m.run_id).unwrap();
    let panel = a.features.unwrap().panel;
    let truth: Vec<usize> = panel.customers.iter().map(|c| truth[c]).collect();
    assert_eq!(adjusted_rand_index(&a.consensus.unwrap().final_labels, &truth), 1.0);
}

#[test]
fn inconsistent_judgments_halt_at_the_weights_stage() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let (bytes, _) = synthetic(20, 12, 0.1, 3);
    let m = run_pipeline(&store, &bytes, inconsistent_rfm(), Exec::Sequential).unwrap();
    assert_eq!(m.state, RunState::Failed);
    let err = m.error.clone().unwrap();
    assert_eq!(err.stage, Stage::Weights);
    assert!(err.message.contains("consistency ratio"), "{}", err.message);
    for r in &m.stages {
        let want = match r.stage {
            Stage::Ingest | Stage::Features => StageState::Done,
            Stage::Weights => StageState::Failed,
            _ => StageState::Pending,
        };
        assert_eq!(r.state, want, "{}", r.stage);
    }
    let a = load_artifact(&store, &m.run_id).unwrap();
    assert!(a.ingest.is_some() && a.features.is_some());
    assert!(a.weights.is_none() && a.grid.is_none() && a.consensus.is_none());
    assert!(output_file(&store, &m.run_id, "correlation.csv").is_ok());
    // executing a failed run again reports the same failure
    let again = execute(&store, &m.run_id, Stage::Report, Exec::Sequential).unwrap();
    assert_eq!(again.error, m.error);
}

#[test]
fn identical_submission_is_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let (bytes, _) = synthetic(20, 12, 0.1, 4);
    let a = run_pipeline(&store, &bytes, small_config(), Exec::Sequential).unwrap();
    let labels = output_file(&store, &a.run_id, "final_labels.csv").unwrap();
    let b = run_pipeline(&store, &bytes, small_config(), Exec::Parallel).unwrap();
    assert_eq!(a.run_id, b.run_id);
    assert_eq!(a.config_fingerprint, b.config_fingerprint);
    assert_eq!(output_file(&store, &b.run_id, "final_labels.csv").unwrap(), labels);
}

#[test]
fn changing_a_section_recomputes_exactly_the_later_stages() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let (bytes, _) = synthetic(24, 12, 0.1, 6);
    let parent = run_pipeline(&store, &bytes, small_config(), Exec::Sequential).unwrap();
    for (patch, first_changed) in [
        (json!({"consensus": {"w_t": 0.7, "w_s": 0.3}}), Stage::Consensus),
        (json!({"cluster": {"k_range": [3, 4]}}), Stage::Cluster),
        (json!({"stability": {"score": {"alpha": 0.5, "beta": 0.25, "gamma": 0.25}}}), Stage::Stability),
    ] {
        let child = rerun(&store, &parent.run_id, &patch).unwrap();
        assert_eq!(child.parent.as_deref(), Some(parent.run_id.as_str()));
        let done = execute(&store, &child.run_id, Stage::Report, Exec::Sequential).unwrap();
        assert_eq!(done.state, RunState::Completed, "{patch}: {:?}", done.error);
        for r in &done.stages {
            let want = if r.stage < first_changed { StageState::Reused } else { StageState::Done };
            assert_eq!(r.state, want, "{patch}: {}", r.stage);
            assert_eq!(r.fingerprint == parent.record(r.stage).fingerprint, r.stage < first_changed);
        }
    }
}

#[test]
fn a_run_resumes_from_its_last_completed_stage() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let (bytes, _) = synthetic(20, 12, 0.1, 8);
    let dataset = store.put_dataset(&bytes).unwrap();
    let m = submit(&store, &dataset, small_config(), None).unwrap();
    let partial = execute(&store, &m.run_id, Stage::Cluster, Exec::Sequential).unwrap();
    assert_eq!(partial.state, RunState::Queued);
    assert_eq!(partial.completed_stages(), 5);
    let a = load_artifact(&store, &m.run_id).unwrap();
    assert!(a.grid.is_some() && a.stability.is_none());
    let before = partial.record(Stage::Cluster).seconds;

    // a second store handle on the same directory picks the run up
    let reopened = RunStore::open(dir.path()).unwrap();
    let done = execute(&reopened, &m.run_id, Stage::Report, Exec::Sequential).unwrap();
    assert_eq!(done.state, RunState::Completed);
    assert_eq!(done.record(Stage::Cluster).seconds, before);
    assert_eq!(done.record(Stage::Cluster).state, StageState::Done);
    assert_eq!(done.record(Stage::Consensus).state, StageState::Done);
}
