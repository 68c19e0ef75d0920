//! Run configuration: TOML file, then command-line flags on top.

use std::path::{Path, PathBuf};

use rumorscope_core::active::{ActiveConfig, QueryStrategy};
use rumorscope_core::corpus::DedupKey;
use rumorscope_core::dtm::DtmConfig;
use rumorscope_core::forest::ForestHyperparams;
use rumorscope_core::report::DEFAULT_SPAN;
use rumorscope_core::textfeat::DEFAULT_MIN_DF_FRACTION;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage derives its randomness from it.
    pub seed: u64,
    pub threads: Option<usize>,
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub features: FeatureConfig,
    pub sample: SampleConfig,
    pub split: SplitConfig,
    pub forest: ForestHyperparams,
    pub active: ActiveSettings,
    pub sentiment: SentimentConfig,
    pub dtm: DtmSettings,
}

/// Optional replacements for the bundled data files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub theories: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub domains: Option<PathBuf>,
    pub signed_lexicon: Option<PathBuf>,
    pub emotion_lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Language tag prefix to keep; empty keeps every language.
    pub lang: String,
    pub dedup: DedupKey,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            lang: "en".into(),
            dedup: DedupKey::Id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub min_df_fraction: f64,
    pub bigrams: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            min_df_fraction: DEFAULT_MIN_DF_FRACTION,
            bigrams: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub n: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { n: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub balanced: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 2.0 / 3.0,
            balanced: true,
        }
    }
}

/// Active-learning settings; the forest settings come from `[forest]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveSettings {
    pub k_per_cycle: usize,
    pub n_cycles: usize,
    pub sim_threshold: f64,
    pub strategy: QueryStrategy,
    pub balance: bool,
}

impl Default for ActiveSettings {
    fn default() -> Self {
        let d = ActiveConfig::default();
        ActiveSettings {
            k_per_cycle: d.k_per_cycle,
            n_cycles: d.n_cycles,
            sim_threshold: d.sim_threshold,
            strategy: d.strategy,
            balance: d.balance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentimentConfig {
    pub loess_span: f64,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        SentimentConfig {
            loess_span: DEFAULT_SPAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtmSettings {
    pub topics: Vec<usize>,
    /// Start of slice 0 (RFC 3339).
    pub epoch: String,
    pub slice_days: i64,
    pub min_df_fraction: f64,
    pub heldout_fraction: f64,
    pub top_words: usize,
    pub chain_variance: f64,
    pub init_variance: f64,
    pub obs_variance: f64,
    pub doc_topic_prior: f64,
    pub em_max_passes: usize,
    pub elbo_rel_tol: f64,
    pub init_passes: usize,
}

impl Default for DtmSettings {
    fn default() -> Self {
        let d = DtmConfig::default();
        DtmSettings {
            topics: vec![2, 3, 4, 5],
            epoch: "2020-01-21T00:00:00Z".into(),
            slice_days: 7,
            min_df_fraction: 0.005,
            heldout_fraction: 0.1,
            top_words: 10,
            chain_variance: d.chain_variance,
            init_variance: d.init_variance,
            obs_variance: d.obs_variance,
            doc_topic_prior: d.doc_topic_prior,
            em_max_passes: d.em_max_passes,
            elbo_rel_tol: d.elbo_rel_tol,
            init_passes: d.init_passes,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn forest(&self) -> ForestHyperparams {
        self.forest.with_seed(self.seed)
    }

    pub fn active(&self) -> ActiveConfig {
        let a = &self.active;
        ActiveConfig {
            k_per_cycle: a.k_per_cycle,
            n_cycles: a.n_cycles,
            sim_threshold: a.sim_threshold,
            strategy: a.strategy,
            balance: a.balance,
            seed: self.seed,
            forest: self.forest(),
        }
    }

    pub fn dtm(&self, n_topics: usize) -> DtmConfig {
        let d = &self.dtm;
        DtmConfig {
            n_topics,
            chain_variance: d.chain_variance,
            init_variance: d.init_variance,
            obs_variance: d.obs_variance,
            doc_topic_prior: d.doc_topic_prior,
            em_max_passes: d.em_max_passes,
            elbo_rel_tol: d.elbo_rel_tol,
            seed: self.seed,
            init_passes: d.init_passes,
        }
    }

    /// Checks values the stages would otherwise reject late.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(format!("invalid config: {m}")));
        self.forest().validate().or_else(|e| bad(e.to_string()))?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad(format!(
                "split.train_fraction {} must lie in (0, 1)",
                self.split.train_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.features.min_df_fraction)
            || !(0.0..1.0).contains(&self.dtm.min_df_fraction)
        {
            return bad("min_df_fraction must lie in [0, 1)".into());
        }
        if self.active.k_per_cycle == 0 {
            return bad("active.k_per_cycle must be at least 1".into());
        }
        if self.dtm.topics.is_empty() || self.dtm.topics.contains(&0) {
            return bad("dtm.topics must list positive topic counts".into());
        }
        if self.dtm.slice_days <= 0 {
            return bad("dtm.slice_days must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dtm.heldout_fraction) {
            return bad("dtm.heldout_fraction must lie in [0, 1)".into());
        }
        if self.sample.n == 0 {
            return bad("sample.n must be positive".into());
        }
        if let Some(t) = self.dtm_epoch_err() {
            return bad(t);
        }
        for k in &self.dtm.topics {
            self.dtm(*k).validate().or_else(|e| bad(e.to_string()))?;
        }
        Ok(())
    }

    fn dtm_epoch_err(&self) -> Option<String> {
        chrono::DateTime::parse_from_rfc3339(&self.dtm.epoch)
            .err()
            .map(|e| format!("dtm.epoch {:?}: {e}", self.dtm.epoch))
    }
}
