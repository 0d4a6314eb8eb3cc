//! Stage-by-stage execution against the run store.
//!
//! Every stage reads its inputs back from the store files of the stages
//! before it, so a run that reuses stored stages behaves exactly like one
//! that computed them.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempseg_core::cluster::{grid_search, GridSearchReport};
use tempseg_core::consensus::{consensus, ConsensusPartition};
use tempseg_core::features::{build_panel_with, scale_panel, spearman, CorrelationMatrix, FeaturePanel};
use tempseg_core::ingest::{parse_transactions, CleaningReport, TransactionRecord};
use tempseg_core::stability::{self, PeriodModel, StabilityProfile, Timelines, TransitionMatrix};
use tempseg_core::tsdist::{panel_distance, DistanceConfig, DistanceMatrix, Measure};
use tempseg_core::Exec;

use crate::config::{ResolvedWeights, RunConfig, Stage};
use crate::report::{build_report, Report};
use crate::store::{Manifest, RunFailure, RunState, RunStore, StageState};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestOutput {
    pub records: Vec<TransactionRecord>,
    pub cleaning: CleaningReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturesOutput {
    /// Scaled panel.
    pub panel: FeaturePanel,
    pub correlation: CorrelationMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityOutput {
    pub model: PeriodModel,
    pub timelines: Timelines,
    pub transitions: TransitionMatrix,
    pub profiles: Vec<StabilityProfile>,
}

/// Outputs of a run; a field is present exactly when its stage finished.
#[derive(Debug, Clone, Default)]
pub struct RunArtifact {
    pub ingest: Option<IngestOutput>,
    pub features: Option<FeaturesOutput>,
    pub weights: Option<ResolvedWeights>,
    pub distances: Option<Vec<DistanceMatrix>>,
    pub grid: Option<GridSearchReport>,
    pub stability: Option<StabilityOutput>,
    pub consensus: Option<ConsensusPartition>,
    pub report: Option<Report>,
}

type Files = Vec<(String, Vec<u8>)>;

fn json<T: Serialize>(name: &str, value: &T) -> anyhow::Result<(String, Vec<u8>)> {
    Ok((name.to_string(), serde_json::to_vec_pretty(value)?))
}

fn text(name: &str, value: String) -> (String, Vec<u8>) {
    (name.to_string(), value.into_bytes())
}

fn labels_csv(customers: &[String], labels: &[usize]) -> String {
    let mut s = String::from("customer_id,segment\n");
    for (c, l) in customers.iter().zip(labels) {
        let _ = writeln!(s, "{c},{l}");
    }
    s
}

fn matrix_file(m: Measure) -> String {
    format!("{}.tsdm", m.to_string().to_ascii_lowercase())
}

/// Reads stage outputs of one manifest.
struct Reader<'a> {
    store: &'a RunStore,
    manifest: &'a Manifest,
}

impl Reader<'_> {
    fn bytes(&self, stage: Stage, name: &str) -> anyhow::Result<Vec<u8>> {
        self.store.read_stage_file(stage, &self.manifest.record(stage).fingerprint, name)
    }

    fn json<T: DeserializeOwned>(&self, stage: Stage, name: &str) -> anyhow::Result<T> {
        serde_json::from_slice(&self.bytes(stage, name)?).with_context(|| format!("decoding {stage}/{name}"))
    }

    fn ingest(&self) -> anyhow::Result<IngestOutput> {
        Ok(IngestOutput { records: self.json(Stage::Ingest, "records.json")?, cleaning: self.json(Stage::Ingest, "cleaning.json")? })
    }

    fn features(&self) -> anyhow::Result<FeaturesOutput> {
        Ok(FeaturesOutput {
            panel: self.json(Stage::Features, "panel.json")?,
            correlation: self.json(Stage::Features, "correlation.json")?,
        })
    }

    fn weights(&self) -> anyhow::Result<ResolvedWeights> {
        self.json(Stage::Weights, "weights.json")
    }

    fn distances(&self) -> anyhow::Result<Vec<DistanceMatrix>> {
        self.manifest
            .config
            .distance
            .measures
            .iter()
            .map(|&m| Ok(DistanceMatrix::read_binary(self.bytes(Stage::Distance, &matrix_file(m))?.as_slice())?))
            .collect()
    }

    fn grid(&self) -> anyhow::Result<GridSearchReport> {
        self.json(Stage::Cluster, "grid.json")
    }

    fn stability(&self) -> anyhow::Result<StabilityOutput> {
        Ok(StabilityOutput {
            model: self.json(Stage::Stability, "model.json")?,
            timelines: self.json(Stage::Stability, "timelines.json")?,
            transitions: self.json(Stage::Stability, "transitions.json")?,
            profiles: self.json(Stage::Stability, "profiles.json")?,
        })
    }

    fn consensus(&self) -> anyhow::Result<ConsensusPartition> {
        self.json(Stage::Consensus, "consensus.json")
    }

    fn report(&self) -> anyhow::Result<Report> {
        self.json(Stage::Report, "report.json")
    }
}

fn compute_stage(store: &RunStore, m: &Manifest, stage: Stage, exec: Exec) -> anyhow::Result<Files> {
    let r = Reader { store, manifest: m };
    let cfg = m.config.effective();
    match stage {
        Stage::Ingest => {
            let bytes = store.read_dataset(&m.dataset)?;
            let (records, cleaning) = parse_transactions(bytes.as_slice(), &cfg.ingest.format)?;
            if records.is_empty() {
                bail!("no transaction survived cleaning ({} rows read)", cleaning.rows_read);
            }
            Ok(vec![json("records.json", &records)?, json("cleaning.json", &cleaning)?])
        }
        Stage::Features => {
            let ingest = r.ingest()?;
            let as_of = match cfg.features.as_of {
                Some(d) => d,
                None => ingest.records.iter().map(|t| t.bill_date).max().context("no transactions")?,
            };
            let raw = build_panel_with(&ingest.records, as_of, cfg.features.interval, exec)?;
            let correlation = spearman(&raw.aggregate)?;
            let panel = scale_panel(&raw, cfg.features.scaling);
            let mut panel_csv = Vec::new();
            panel.write_csv(&mut panel_csv)?;
            let mut corr_csv = Vec::new();
            correlation.write_csv(&mut corr_csv)?;
            Ok(vec![
                json("panel.json", &panel)?,
                ("panel.csv".into(), panel_csv),
                json("correlation.json", &correlation)?,
                ("correlation.csv".into(), corr_csv),
            ])
        }
        Stage::Weights => {
            let w = cfg.weights.resolve()?;
            let mut csv = String::from("criterion,weight\n");
            for (c, v) in w.vector.criteria.iter().zip(&w.vector.weights) {
                let _ = writeln!(csv, "{c},{v:.6}");
            }
            Ok(vec![json("weights.json", &w)?, text("weights.csv", csv)])
        }
        Stage::Distance => {
            let panel = r.features()?.panel;
            let w = r.weights()?;
            let dcfg = DistanceConfig { exec, ..cfg.distance.config };
            let mut files = Vec::new();
            for &measure in &cfg.distance.measures {
                let d = panel_distance(&panel, &w.panel, measure, &dcfg)?;
                let mut bytes = Vec::new();
                d.write_binary(&mut bytes)?;
                files.push((matrix_file(measure), bytes));
            }
            Ok(files)
        }
        Stage::Cluster => {
            let panel = r.features()?.panel;
            let grid = grid_search(&r.distances()?, &cfg.cluster, exec)?;
            Ok(vec![
                json("grid.json", &grid)?,
                text("grid.csv", grid.to_csv()),
                text("grid_table.csv", grid.to_table()),
                text("labels_t.csv", labels_csv(&panel.customers, &grid.best().labels)),
            ])
        }
        Stage::Stability => {
            let panel = r.features()?.panel;
            let w = r.weights()?;
            let grid = r.grid()?;
            let best = grid.best();
            let model = PeriodModel {
                method: best.method,
                measure: best.measure,
                k: best.k,
                linkage: cfg.cluster.linkage,
                spectral: cfg.cluster.spectral,
                distance: cfg.distance.config,
            };
            let s = &cfg.stability;
            let timelines = stability::per_period_segmentation(&panel, &w.panel, &model, s.window, Some(&best.labels), exec)?;
            let transitions = stability::transition_model(&timelines.label_rows(), timelines.k);
            let profiles = stability::profiles(&timelines, &transitions, s.score, s.transitions, exec)?;
            let labels_s: Vec<usize> = profiles.iter().map(|p| p.stable_label).collect();
            Ok(vec![
                json("model.json", &model)?,
                json("timelines.json", &timelines)?,
                json("transitions.json", &transitions)?,
                json("profiles.json", &profiles)?,
                text("timelines.csv", stability::timeline_table(&timelines, &profiles)),
                text("labels_s.csv", labels_csv(&panel.customers, &labels_s)),
            ])
        }
        Stage::Consensus => {
            let panel = r.features()?.panel;
            let labels_t = r.grid()?.best().labels.clone();
            let labels_s: Vec<usize> = r.stability()?.profiles.iter().map(|p| p.stable_label).collect();
            let c = consensus(&labels_t, &labels_s, &cfg.consensus, exec)?;
            let mut table = String::from("customer_id,time_series,stability,final\n");
            for (i, id) in panel.customers.iter().enumerate() {
                let _ = writeln!(table, "{id},{},{},{}", labels_t[i], labels_s[i], c.final_labels[i]);
            }
            Ok(vec![
                json("consensus.json", &c)?,
                text("labels.csv", table),
                text("final_labels.csv", labels_csv(&panel.customers, &c.final_labels)),
                text("contingency_t.csv", c.contingency_vs_t.to_csv("time_series")),
                text("contingency_s.csv", c.contingency_vs_s.to_csv("stability")),
                text("pct_change.csv", tempseg_core::consensus::pct_change_csv(&c.pct_change_t, &c.pct_change_s)),
            ])
        }
        Stage::Report => {
            let raw_panel = r.features()?.panel;
            let w = r.weights()?;
            let grid = r.grid()?;
            let c = r.consensus()?;
            let report = build_report(&raw_panel, &w.panel, &grid, &c, &cfg.cluster, &cfg.distance.config, exec);
            let mut files = vec![json("report.json", &report)?];
            files.extend(report.files().into_iter().map(|(n, s)| text(&format!("report_{n}"), s)));
            Ok(files)
        }
    }
}

static ACTIVE: Mutex<Option<HashSet<String>>> = Mutex::new(None);

/// Marks a run as executing in this process for as long as it lives.
struct ActiveGuard(String);

impl ActiveGuard {
    fn acquire(run_id: &str) -> anyhow::Result<ActiveGuard> {
        let mut set = ACTIVE.lock().expect("run registry lock");
        if !set.get_or_insert_with(HashSet::new).insert(run_id.to_string()) {
            bail!("run {run_id} is already executing");
        }
        Ok(ActiveGuard(run_id.to_string()))
    }
}

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        if let Ok(mut set) = ACTIVE.lock() {
            if let Some(s) = set.as_mut() {
                s.remove(&self.0);
            }
        }
    }
}

/// Registers a run for `dataset` under its content-derived id. Submitting
/// the same dataset and configuration again returns the existing run; a
/// failed one is reset so it can be resumed.
pub fn submit(store: &RunStore, dataset: &str, config: RunConfig, parent: Option<String>) -> anyhow::Result<Manifest> {
    config.validate()?;
    if !store.has_dataset(dataset) {
        bail!("unknown dataset {dataset}");
    }
    let fresh = Manifest::new(dataset, config, parent);
    if store.has_run(&fresh.run_id) {
        let mut m = store.manifest(&fresh.run_id)?;
        if m.state == RunState::Failed {
            m.state = RunState::Queued;
            m.error = None;
            for rec in &mut m.stages {
                if !rec.state.finished() {
                    rec.state = StageState::Pending;
                }
            }
            store.save_manifest(&m)?;
        }
        return Ok(m);
    }
    store.save_manifest(&fresh)?;
    Ok(fresh)
}

/// Runs every stage up to and including `until`, reusing stored stages.
/// The manifest is saved after every state change; a failing stage halts
/// the run with the failure recorded.
pub fn execute(store: &RunStore, run_id: &str, until: Stage, exec: Exec) -> anyhow::Result<Manifest> {
    let _guard = ActiveGuard::acquire(run_id)?;
    let mut m = store.manifest(run_id)?;
    if m.state == RunState::Completed || (m.state == RunState::Failed && m.error.is_some()) {
        return Ok(m);
    }
    m.state = RunState::Running;
    store.save_manifest(&m)?;
    for stage in Stage::ALL.into_iter().filter(|&s| s <= until) {
        let fp = m.record(stage).fingerprint.clone();
        if store.has_stage(stage, &fp) {
            let rec = m.record_mut(stage);
            if !rec.state.finished() {
                rec.state = StageState::Reused;
                rec.seconds = store.stage_seconds(stage, &fp);
                store.save_manifest(&m)?;
            }
            continue;
        }
        m.record_mut(stage).state = StageState::Running;
        store.save_manifest(&m)?;
        let start = Instant::now();
        let outcome = compute_stage(store, &m, stage, exec)
            .and_then(|files| {
                let secs = start.elapsed().as_secs_f64();
                store.commit_stage(stage, &fp, secs, &files).map(|_| secs)
            });
        match outcome {
            Ok(secs) => {
                log::info!("{run_id}: {stage} done in {secs:.2}s");
                let rec = m.record_mut(stage);
                rec.state = StageState::Done;
                rec.seconds = Some(secs);
            }
            Err(e) => {
                log::warn!("{run_id}: {stage} failed: {e:#}");
                m.record_mut(stage).state = StageState::Failed;
                m.state = RunState::Failed;
                m.error = Some(RunFailure { stage, message: format!("{e:#}") });
                store.save_manifest(&m)?;
                return Ok(m);
            }
        }
        store.save_manifest(&m)?;
    }
    if until == Stage::Report {
        m.state = RunState::Completed;
    } else {
        m.state = RunState::Queued;
    }
    store.save_manifest(&m)?;
    Ok(m)
}

/// Outputs of every finished stage of a run.
pub fn load_artifact(store: &RunStore, run_id: &str) -> anyhow::Result<RunArtifact> {
    let m = store.manifest(run_id)?;
    let r = Reader { store, manifest: &m };
    let done = |s: Stage| m.record(s).state.finished();
    let mut a = RunArtifact::default();
    if done(Stage::Ingest) {
        a.ingest = Some(r.ingest()?);
    }
    if done(Stage::Features) {
        a.features = Some(r.features()?);
    }
    if done(Stage::Weights) {
        a.weights = Some(r.weights()?);
    }
    if done(Stage::Distance) {
        a.distances = Some(r.distances()?);
    }
    if done(Stage::Cluster) {
        a.grid = Some(r.grid()?);
    }
    if done(Stage::Stability) {
        a.stability = Some(r.stability()?);
    }
    if done(Stage::Consensus) {
        a.consensus = Some(r.consensus()?);
    }
    if done(Stage::Report) {
        a.report = Some(r.report()?);
    }
    Ok(a)
}

/// Stores `data`, submits and executes a full run.
pub fn run_pipeline(store: &RunStore, data: &[u8], config: RunConfig, exec: Exec) -> anyhow::Result<Manifest> {
    let dataset = store.put_dataset(data)?;
    let m = submit(store, &dataset, config, None)?;
    execute(store, &m.run_id, Stage::Report, exec)
}

/// A new run on the same dataset with `patch` merged into the config of
/// `run_id`. Stages whose fingerprints are unchanged are reused on
/// execution.
pub fn rerun(store: &RunStore, run_id: &str, patch: &serde_json::Value) -> anyhow::Result<Manifest> {
    let parent = store.manifest(run_id)?;
    let config = parent.config.patched(patch)?;
    submit(store, &parent.dataset, config, Some(parent.run_id.clone()))
}

/// Finds the stage that produced output file `name` for a run.
pub fn output_file(store: &RunStore, run_id: &str, name: &str) -> anyhow::Result<Vec<u8>> {
    let m = store.manifest(run_id)?;
    for rec in m.stages.iter().filter(|r| r.state.finished()) {
        if store.stage_files(rec.stage, &rec.fingerprint)?.iter().any(|f| f == name) {
            return store.read_stage_file(rec.stage, &rec.fingerprint, name);
        }
    }
    bail!("run {run_id} has no output {name:?}")
}

/// Names of all output files of the finished stages, by stage.
pub fn output_names(store: &RunStore, run_id: &str) -> anyhow::Result<Vec<(Stage, Vec<String>)>> {
    let m = store.manifest(run_id)?;
    m.stages
        .iter()
        .filter(|r| r.state.finished())
        .map(|r| Ok((r.stage, store.stage_files(r.stage, &r.fingerprint)?)))
        .collect()
}
