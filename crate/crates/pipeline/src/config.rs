//! Run configuration: one section per pipeline stage, loaded from TOML or
//! JSON and fingerprinted per stage.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tempseg_core::cluster::GridConfig;
use tempseg_core::consensus::ConsensusConfig;
use tempseg_core::features::{Feature, Interval, ScalingMethod};
use tempseg_core::ingest::FormatConfig;
use tempseg_core::mcdm::{self, Dimension, HierarchicalWeights, PairwiseMatrix, WeightVector};
use tempseg_core::stability::{ScoreWeights, TransitionsTerm, WindowPolicy};
use tempseg_core::tsdist::{DistanceConfig, Measure};

/// Stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Features,
    Weights,
    Distance,
    Cluster,
    Stability,
    Consensus,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Features,
        Stage::Weights,
        Stage::Distance,
        Stage::Cluster,
        Stage::Stability,
        Stage::Consensus,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Weights => "weights",
            Stage::Distance => "distance",
            Stage::Cluster => "cluster",
            Stage::Stability => "stability",
            Stage::Consensus => "consensus",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s).with_context(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub format: FormatConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub interval: Interval,
    /// Reference date for recency, LTM and loyalty; the last bill date in
    /// the data when absent.
    pub as_of: Option<NaiveDate>,
    pub scaling: ScalingMethod,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection { interval: Interval::Month, as_of: None, scaling: ScalingMethod::Zscore }
    }
}

/// Judgment matrices for the three dimensions and for the criteria inside
/// each, or weights given directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightsSection {
    Hierarchy {
        dimensions: PairwiseMatrix,
        rfm: PairwiseMatrix,
        growth: PairwiseMatrix,
        stability: PairwiseMatrix,
        #[serde(default)]
        allow_inconsistent: bool,
    },
    Flat {
        matrix: PairwiseMatrix,
        #[serde(default)]
        allow_inconsistent: bool,
    },
    Literal {
        weights: BTreeMap<String, f64>,
    },
}

/// The case-study weights per criterion, in the order of [`Feature::ALL`].
pub const CASE_STUDY_WEIGHTS: [(Feature, f64); 10] = [
    (Feature::Recency, 0.0280),
    (Feature::Frequency, 0.0444),
    (Feature::LtmFrequency, 0.0472),
    (Feature::Volume, 0.1466),
    (Feature::AvgVolume, 0.0965),
    (Feature::ProductMix, 0.1006),
    (Feature::Loyalty, 0.0681),
    (Feature::Sales, 0.2172),
    (Feature::AvgProfit, 0.1437),
    (Feature::ProfitMargin, 0.1077),
];

/// An RFM-heavy expert configuration. Its printed growth weights sum to
/// 0.2848 while the stated growth total is 0.22, so it is used with
/// [`RFM_HEAVY_TOTALS`] and only the within-dimension proportions kept.
pub const RFM_HEAVY_WEIGHTS: [(Feature, f64); 10] = [
    (Feature::Recency, 0.1382),
    (Feature::Frequency, 0.1890),
    (Feature::Sales, 0.1644),
    (Feature::ProductMix, 0.0746),
    (Feature::Volume, 0.0668),
    (Feature::AvgProfit, 0.0746),
    (Feature::LtmFrequency, 0.0688),
    (Feature::Loyalty, 0.0746),
    (Feature::AvgVolume, 0.0746),
    (Feature::ProfitMargin, 0.1408),
];

/// RFM, growth and stability totals of [`RFM_HEAVY_WEIGHTS`].
pub const RFM_HEAVY_TOTALS: [f64; 3] = [0.49, 0.22, 0.29];

impl WeightsSection {
    /// Consistent judgment matrices whose composed weights equal
    /// `table` with dimension totals `totals` (or the table's own sums).
    pub fn from_table(table: &[(Feature, f64)], totals: Option<[f64; 3]>) -> anyhow::Result<WeightsSection> {
        let totals = totals.unwrap_or_else(|| {
            Dimension::ALL.map(|d| table.iter().filter(|(f, _)| Dimension::of(*f) == d).map(|(_, w)| w).sum())
        });
        let dim_totals: BTreeMap<Dimension, f64> = Dimension::ALL.into_iter().zip(totals).collect();
        let mut within: BTreeMap<Dimension, Vec<(String, f64)>> = BTreeMap::new();
        for d in Dimension::ALL {
            for f in d.features() {
                let w = table.iter().find(|(g, _)| *g == f).map(|(_, w)| *w).with_context(|| format!("no weight for {f}"))?;
                within.entry(d).or_default().push((f.name().to_string(), w));
            }
        }
        let (top, mut subs) = mcdm::consistent_hierarchy(&dim_totals, &within)?;
        let mut take = |d| subs.remove(&d).expect("every dimension present");
        Ok(WeightsSection::Hierarchy {
            rfm: take(Dimension::Rfm),
            growth: take(Dimension::Growth),
            stability: take(Dimension::Stability),
            dimensions: top,
            allow_inconsistent: false,
        })
    }

    /// Composed weights over the ten panel criteria.
    pub fn resolve(&self) -> anyhow::Result<ResolvedWeights> {
        match self {
            WeightsSection::Hierarchy { dimensions, rfm, growth, stability, allow_inconsistent } => {
                let subs = BTreeMap::from([
                    (Dimension::Rfm, rfm.clone()),
                    (Dimension::Growth, growth.clone()),
                    (Dimension::Stability, stability.clone()),
                ]);
                let h = mcdm::hierarchical_compose(dimensions, &subs, *allow_inconsistent)?;
                let panel = h.composed.for_panel()?;
                Ok(ResolvedWeights { vector: h.composed.clone(), hierarchy: Some(h), panel })
            }
            WeightsSection::Flat { matrix, allow_inconsistent } => {
                let w = mcdm::principal_weights(matrix)?;
                if !w.consistent && !allow_inconsistent {
                    return Err(mcdm::McdmError::Inconsistent { matrix: "criteria matrix".into(), cr: w.consistency_ratio }.into());
                }
                let panel = w.for_panel()?;
                Ok(ResolvedWeights { vector: w, hierarchy: None, panel })
            }
            WeightsSection::Literal { weights } => {
                let (names, ws): (Vec<String>, Vec<f64>) = weights.iter().map(|(k, v)| (k.clone(), *v)).unzip();
                let w = WeightVector::literal(names, ws)?;
                let panel = w.for_panel()?;
                Ok(ResolvedWeights { vector: w, hierarchy: None, panel })
            }
        }
    }
}

impl Default for WeightsSection {
    fn default() -> Self {
        WeightsSection::from_table(&CASE_STUDY_WEIGHTS, None).expect("case-study table is complete")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedWeights {
    pub vector: WeightVector,
    pub hierarchy: Option<HierarchicalWeights>,
    /// Weights in panel feature order.
    pub panel: [f64; 10],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSection {
    pub measures: Vec<Measure>,
    pub config: DistanceConfig,
}

impl Default for DistanceSection {
    fn default() -> Self {
        DistanceSection { measures: Measure::ELASTIC.to_vec(), config: DistanceConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub window: WindowPolicy,
    pub score: ScoreWeights,
    pub transitions: TransitionsTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds every randomized component: spectral k-means restarts and
    /// Leiden node orders.
    pub seed: u64,
    pub ingest: IngestSection,
    pub features: FeaturesSection,
    pub weights: WeightsSection,
    pub distance: DistanceSection,
    pub cluster: GridConfig,
    pub stability: StabilitySection,
    pub consensus: ConsensusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            ingest: IngestSection::default(),
            features: FeaturesSection::default(),
            weights: WeightsSection::default(),
            distance: DistanceSection::default(),
            cluster: GridConfig::default(),
            stability: StabilitySection::default(),
            consensus: ConsensusConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<RunConfig> {
        let de = toml::Deserializer::parse(text).context("config is not valid TOML")?;
        serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("config field {}: {}", e.path(), e.inner()))
    }

    pub fn from_json(value: serde_json::Value) -> anyhow::Result<RunConfig> {
        serde_path_to_error::deserialize(value).map_err(|e| anyhow::anyhow!("config field {}: {}", e.path(), e.inner()))
    }

    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => RunConfig::from_json(serde_json::from_str(&text)?),
            _ => RunConfig::from_toml(&text),
        }
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Applies an RFC 7396 merge patch to the JSON form.
    pub fn patched(&self, patch: &serde_json::Value) -> anyhow::Result<RunConfig> {
        let mut doc = serde_json::to_value(self)?;
        json_patch::merge(&mut doc, patch);
        RunConfig::from_json(doc)
    }

    /// The configuration with the master seed pushed into every seeded
    /// component.
    pub fn effective(&self) -> RunConfig {
        let mut c = self.clone();
        c.cluster.spectral.kmeans.seed = self.seed;
        c.consensus.leiden.seed = self.seed;
        c
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.cluster.k_range.is_empty() {
            bail!("cluster.k_range is empty");
        }
        if self.cluster.k_range.iter().any(|&k| k < 2) {
            bail!("cluster.k_range values must be at least 2");
        }
        if self.cluster.methods.is_empty() {
            bail!("cluster.methods is empty");
        }
        if self.distance.measures.is_empty() {
            bail!("distance.measures is empty");
        }
        if let Some(f) = self.distance.config.cid_max_factor {
            if !(f >= 1.0) {
                bail!("distance.cid_max_factor must be at least 1 (got {f})");
            }
        }
        let c = &self.consensus;
        if c.w_t < 0.0 || c.w_s < 0.0 || (c.w_t + c.w_s - 1.0).abs() > 1e-9 {
            bail!("consensus weights must be non-negative and sum to 1 (w_t = {}, w_s = {})", c.w_t, c.w_s);
        }
        if !(c.leiden.resolution > 0.0) {
            bail!("consensus.leiden.resolution must be positive");
        }
        self.stability.score.normalized()?;
        Ok(())
    }

    /// Fingerprint of each stage: the stage's own section chained onto the
    /// fingerprint of the stage before it, starting from the input data
    /// hash. Changing a section therefore changes exactly that stage and
    /// everything after it.
    pub fn stage_fingerprints(&self, data_hash: &str) -> BTreeMap<Stage, String> {
        let c = self.effective();
        let mut out = BTreeMap::new();
        let mut prev = data_hash.to_string();
        for stage in Stage::ALL {
            let section = match stage {
                Stage::Ingest => serde_json::to_value(&c.ingest),
                Stage::Features => serde_json::to_value(&c.features),
                Stage::Weights => serde_json::to_value(&c.weights),
                Stage::Distance => serde_json::to_value(&c.distance),
                Stage::Cluster => serde_json::to_value(&c.cluster),
                Stage::Stability => serde_json::to_value(c.stability),
                Stage::Consensus => serde_json::to_value(c.consensus),
                Stage::Report => Ok(serde_json::Value::Null),
            }
            .expect("config sections serialize");
            let fp = tempseg_core::fingerprint(&(stage.name(), &prev, section));
            out.insert(stage, fp.clone());
            prev = fp;
        }
        out
    }
}
