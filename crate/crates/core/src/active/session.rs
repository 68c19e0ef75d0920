use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Utc};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::entropy::{binary_entropy, select_uncertain, uncertainty_order};
use super::similarity::propagate_labels;
use super::{ActiveError, LabelSource, LabeledExample};
use crate::forest::{evaluate, train_forest, ForestHyperparams, ForestModel, Metrics, TrainingSet};
use crate::label::Label;
use crate::sparse::SparseRow;

/// A tweet available to the session, with normalized text for similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolItem {
    pub id: String,
    pub text: String,
    pub row: SparseRow,
}

/// Held-out labelled rows the model is scored on after every cycle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestSet {
    pub ids: Vec<String>,
    pub rows: Vec<SparseRow>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStrategy {
    #[default]
    Entropy,
    /// Uniform draw from the pool; a baseline for comparison.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActiveConfig {
    pub k_per_cycle: usize,
    pub n_cycles: usize,
    pub sim_threshold: f64,
    pub strategy: QueryStrategy,
    /// Downsample the larger class before each retrain.
    pub balance: bool,
    pub seed: u64,
    pub forest: ForestHyperparams,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            k_per_cycle: 3,
            n_cycles: 9,
            sim_threshold: 0.95,
            strategy: QueryStrategy::Entropy,
            balance: true,
            seed: 0,
            forest: ForestHyperparams::default(),
        }
    }
}

/// Everything needed to rebuild a session from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSeed {
    pub config: ActiveConfig,
    pub vocab_hash: String,
    pub n_features: usize,
    pub items: Vec<PoolItem>,
    pub seed_labels: Vec<LabeledExample>,
    pub test: TestSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub tweet_id: String,
    pub text: String,
    pub proba: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub cycle: usize,
    pub tweet_id: String,
    pub text: String,
    pub proba: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub tweet_id: String,
    pub label: Label,
    pub annotator_id: String,
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct OracleError(pub String);

pub trait LabelOracle {
    fn label(&mut self, request: &OracleRequest) -> Result<OracleResponse, OracleError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub tweet_id: String,
    pub reason: String,
}

/// One line of the append-only label log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// Session revision the event produced.
    pub revision: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub example: LabeledExample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleOutcome {
    pub cycle: usize,
    pub revision: u64,
    pub accepted: Vec<String>,
    pub rejected: Vec<Rejection>,
    pub propagated: Vec<LabeledExample>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub cycle: usize,
    pub n_cycles: usize,
    pub labeled_count: usize,
    pub pool_count: usize,
    pub revision: u64,
    pub complete: bool,
    pub metrics_history: Vec<Metrics>,
}

#[derive(Debug, Clone)]
pub struct ActiveSession {
    seed: SessionSeed,
    index: HashMap<String, usize>,
    labeled: BTreeMap<String, LabeledExample>,
    pool: BTreeSet<String>,
    model: ForestModel,
    cycle: usize,
    revision: u64,
    metrics_history: Vec<Metrics>,
    audit: Vec<AuditRecord>,
    batch: Vec<BatchItem>,
}

fn cycle_seed(seed: u64, cycle: usize) -> u64 {
    seed ^ (cycle as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn balance_rank(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, then a splitmix64 finalizer
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in id.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^ (h >> 31)
}

fn fit(
    seed: &SessionSeed,
    index: &HashMap<String, usize>,
    labeled: &BTreeMap<String, LabeledExample>,
) -> Result<(ForestModel, Metrics), ActiveError> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for ex in labeled.values() {
        match ex.label.as_class() {
            Some(true) => pos.push(&ex.tweet_id),
            Some(false) => neg.push(&ex.tweet_id),
            None => {}
        }
    }
    let cfg = &seed.config;
    if cfg.balance {
        // rank by a seeded hash of the id: a new label displaces at most one
        // kept example instead of reshuffling the whole class
        pos.sort_by_key(|id| (balance_rank(cfg.seed, id), *id));
        neg.sort_by_key(|id| (balance_rank(cfg.seed, id), *id));
        let m = pos.len().min(neg.len());
        pos.truncate(m);
        neg.truncate(m);
    }
    let mut ts = TrainingSet {
        n_features: seed.n_features,
        ..Default::default()
    };
    for (ids, y) in [(pos, true), (neg, false)] {
        for id in ids {
            ts.push(id.clone(), seed.items[index[id]].row.clone(), y);
        }
    }
    let model = train_forest(&ts, &seed.vocab_hash, &cfg.forest)?;
    let test = &seed.test;
    let metrics = evaluate(&model, &test.rows, &test.labels)?;
    Ok((model, metrics))
}

impl ActiveSession {
    pub fn from_seed(seed: SessionSeed) -> Result<Self, ActiveError> {
        let c = &seed.config;
        if c.k_per_cycle == 0 {
            return Err(ActiveError::Config("k_per_cycle must be at least 1".into()));
        }
        if !(c.sim_threshold > 0.0 && c.sim_threshold <= 1.0) {
            return Err(ActiveError::Config(
                "sim_threshold must lie in (0, 1]".into(),
            ));
        }
        if seed.test.rows.is_empty() || seed.test.rows.len() != seed.test.labels.len() {
            return Err(ActiveError::Config(
                "test set must be non-empty with one label per row".into(),
            ));
        }
        let mut index = HashMap::with_capacity(seed.items.len());
        for (i, item) in seed.items.iter().enumerate() {
            if index.insert(item.id.clone(), i).is_some() {
                return Err(ActiveError::DuplicateId(item.id.clone()));
            }
        }
        let mut labeled = BTreeMap::new();
        for ex in &seed.seed_labels {
            if !index.contains_key(&ex.tweet_id) {
                return Err(ActiveError::UnknownId(ex.tweet_id.clone()));
            }
            if labeled.insert(ex.tweet_id.clone(), ex.clone()).is_some() {
                return Err(ActiveError::DuplicateId(ex.tweet_id.clone()));
            }
        }
        let pool = seed
            .items
            .iter()
            .filter(|it| !labeled.contains_key(&it.id))
            .map(|it| it.id.clone())
            .collect();
        let (model, metrics) = fit(&seed, &index, &labeled)?;
        let mut session = Self {
            index,
            labeled,
            pool,
            model,
            seed,
            cycle: 0,
            revision: 0,
            metrics_history: vec![metrics],
            audit: Vec::new(),
            batch: Vec::new(),
        };
        session.batch = session.compute_batch()?;
        Ok(session)
    }

    /// Rebuilds a session by re-applying the human labels in `audit` and
    /// checking that every derived event matches the log.
    pub fn replay(seed: SessionSeed, audit: &[AuditRecord]) -> Result<Self, ActiveError> {
        let mut session = Self::from_seed(seed)?;
        let mut groups: BTreeMap<u64, Vec<&AuditRecord>> = BTreeMap::new();
        for rec in audit {
            groups.entry(rec.revision).or_default().push(rec);
        }
        for (revision, records) in groups {
            let responses: Vec<OracleResponse> = records
                .iter()
                .filter_map(|r| match &r.example.source {
                    LabelSource::Human { annotator_id } => Some(OracleResponse {
                        tweet_id: r.example.tweet_id.clone(),
                        label: r.example.label,
                        annotator_id: annotator_id.clone(),
                    }),
                    _ => None,
                })
                .collect();
            let at = records[0].at;
            session.apply_labels(&responses, at)?;
            let produced =
                &session.audit[session.audit.len() - records.len().min(session.audit.len())..];
            if session.revision != revision
                || produced.len() != records.len()
                || produced.iter().zip(&records).any(|(a, b)| a != *b)
            {
                return Err(ActiveError::ReplayMismatch(revision));
            }
        }
        Ok(session)
    }

    fn compute_batch(&self) -> Result<Vec<BatchItem>, ActiveError> {
        if self.is_complete() {
            return Ok(Vec::new());
        }
        let ids: Vec<&String> = self.pool.iter().collect();
        let probs: Vec<f64> = ids
            .par_iter()
            .map(|id| {
                self.model
                    .predict_proba(&self.seed.items[self.index[*id]].row)
            })
            .collect::<Result<_, _>>()?;
        let k = self.seed.config.k_per_cycle.min(ids.len());
        let chosen: Vec<usize> = match self.seed.config.strategy {
            QueryStrategy::Entropy => {
                let scored: Vec<(&str, f64)> = ids
                    .iter()
                    .map(|s| s.as_str())
                    .zip(probs.iter().copied())
                    .collect();
                select_uncertain(&scored, k)?
            }
            QueryStrategy::Random => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(cycle_seed(self.seed.config.seed, self.cycle));
                let mut picked = sample(&mut rng, ids.len(), k).into_vec();
                let h: Vec<f64> = probs
                    .iter()
                    .map(|&p| binary_entropy(p))
                    .collect::<Result<_, _>>()?;
                picked.sort_by(|&a, &b| {
                    uncertainty_order((ids[a], probs[a], h[a]), (ids[b], probs[b], h[b]))
                });
                picked
            }
        };
        chosen
            .into_iter()
            .map(|i| {
                Ok(BatchItem {
                    tweet_id: ids[i].clone(),
                    text: self.seed.items[self.index[ids[i]]].text.clone(),
                    proba: probs[i],
                    entropy: binary_entropy(probs[i])?,
                })
            })
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.cycle >= self.seed.config.n_cycles || self.pool.is_empty()
    }

    /// The current query batch; stable until the next accepted submission.
    pub fn batch(&self) -> &[BatchItem] {
        &self.batch
    }

    /// Records labels for items of the current batch, propagates them to
    /// near-duplicates in the pool, retrains and scores the model. Entries not
    /// in the batch are rejected individually; on any error the session is
    /// left unchanged.
    pub fn apply_labels(
        &mut self,
        responses: &[OracleResponse],
        at: DateTime<Utc>,
    ) -> Result<CycleOutcome, ActiveError> {
        if self.is_complete() {
            return Err(ActiveError::Complete(self.seed.config.n_cycles));
        }
        let in_batch: HashSet<&str> = self.batch.iter().map(|b| b.tweet_id.as_str()).collect();
        let round = self.cycle + 1;
        let mut seen = HashSet::new();
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for r in responses {
            let reason = if !self.index.contains_key(&r.tweet_id) {
                Some("unknown tweet id")
            } else if !in_batch.contains(r.tweet_id.as_str()) {
                Some("not in the current batch")
            } else if !seen.insert(r.tweet_id.as_str()) {
                Some("labelled twice in one submission")
            } else {
                None
            };
            match reason {
                Some(reason) => rejected.push(Rejection {
                    tweet_id: r.tweet_id.clone(),
                    reason: reason.into(),
                }),
                None => accepted.push(LabeledExample {
                    tweet_id: r.tweet_id.clone(),
                    label: r.label,
                    source: LabelSource::Human {
                        annotator_id: r.annotator_id.clone(),
                    },
                    round,
                }),
            }
        }
        if accepted.is_empty() {
            return Err(ActiveError::NothingAccepted(rejected));
        }

        let mut labeled = self.labeled.clone();
        let mut pool = self.pool.clone();
        for ex in &accepted {
            pool.remove(&ex.tweet_id);
            labeled.insert(ex.tweet_id.clone(), ex.clone());
        }
        let mut propagated = Vec::new();
        for ex in &accepted {
            let candidates: Vec<(&str, &str)> = pool
                .iter()
                .map(|id| (id.as_str(), self.seed.items[self.index[id]].text.as_str()))
                .collect();
            let text = &self.seed.items[self.index[&ex.tweet_id]].text;
            let found = propagate_labels(ex, text, &candidates, self.seed.config.sim_threshold);
            for p in found {
                pool.remove(&p.tweet_id);
                labeled.insert(p.tweet_id.clone(), p.clone());
                propagated.push(p);
            }
        }

        let (model, metrics) = fit(&self.seed, &self.index, &labeled)?;
        self.labeled = labeled;
        self.pool = pool;
        self.model = model;
        self.cycle += 1;
        self.revision += 1;
        self.metrics_history.push(metrics);
        for ex in accepted.iter().chain(&propagated) {
            self.audit.push(AuditRecord {
                revision: self.revision,
                at,
                example: ex.clone(),
            });
        }
        self.batch = self.compute_batch()?;
        Ok(CycleOutcome {
            cycle: self.cycle,
            revision: self.revision,
            accepted: accepted.into_iter().map(|e| e.tweet_id).collect(),
            rejected,
            propagated,
            metrics,
        })
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            cycle: self.cycle,
            n_cycles: self.seed.config.n_cycles,
            labeled_count: self.labeled.len(),
            pool_count: self.pool.len(),
            revision: self.revision,
            complete: self.is_complete(),
            metrics_history: self.metrics_history.clone(),
        }
    }

    pub fn seed(&self) -> &SessionSeed {
        &self.seed
    }

    pub fn config(&self) -> &ActiveConfig {
        &self.seed.config
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn model(&self) -> &ForestModel {
        &self.model
    }

    pub fn labeled(&self) -> &BTreeMap<String, LabeledExample> {
        &self.labeled
    }

    pub fn pool(&self) -> &BTreeSet<String> {
        &self.pool
    }

    pub fn metrics_history(&self) -> &[Metrics] {
        &self.metrics_history
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn item(&self, id: &str) -> Option<&PoolItem> {
        self.index.get(id).map(|&i| &self.seed.items[i])
    }
}

/// Runs one cycle: asks the oracle about every batch item, then applies the
/// answers. An oracle error aborts the cycle with the session untouched.
pub fn run_active_cycle(
    session: &mut ActiveSession,
    oracle: &mut dyn LabelOracle,
) -> Result<CycleOutcome, ActiveError> {
    if session.is_complete() {
        return Err(ActiveError::Complete(session.config().n_cycles));
    }
    let round = session.cycle() + 1;
    let mut responses = Vec::with_capacity(session.batch().len());
    for item in session.batch() {
        responses.push(oracle.label(&OracleRequest {
            cycle: round,
            tweet_id: item.tweet_id.clone(),
            text: item.text.clone(),
            proba: item.proba,
        })?);
    }
    session.apply_labels(&responses, Utc::now())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    /// Feature 0 carries the class signal; texts are unique unless `dups`.
    pub(crate) fn seed_fixture(n_pool: usize) -> (SessionSeed, HashMap<String, Label>) {
        let mut items = Vec::new();
        let mut truth = HashMap::new();
        for i in 0..n_pool {
            let y = i % 2 == 0;
            let id = format!("p{i:04}");
            let strength = (i % 10) as f64;
            let row = SparseRow::from_pairs(vec![
                (0, if y { 5.0 + strength } else { strength }),
                (1 + (i % 5) as u32, 1.0),
            ]);
            items.push(PoolItem {
                id: id.clone(),
                text: format!("tweet number {i} with words {}", i * 7919 % 1000),
                row,
            });
            truth.insert(id, Label::from_class(y));
        }
        let seed_labels = items
            .iter()
            .take(12)
            .map(|it| LabeledExample {
                tweet_id: it.id.clone(),
                label: truth[&it.id],
                source: LabelSource::Human {
                    annotator_id: "seed".into(),
                },
                round: 0,
            })
            .collect();
        let mut test = TestSet::default();
        for i in 0..40 {
            let y = i % 2 == 0;
            test.ids.push(format!("t{i}"));
            test.rows
                .push(SparseRow::from_pairs(vec![(0, if y { 8.0 } else { 2.0 })]));
            test.labels.push(y);
        }
        let config = ActiveConfig {
            forest: ForestHyperparams {
                n_trees: 15,
                features_per_split: 6,
                ..Default::default()
            },
            ..Default::default()
        };
        let seed = SessionSeed {
            config,
            vocab_hash: "h".into(),
            n_features: 6,
            items,
            seed_labels,
            test,
        };
        (seed, truth)
    }

    struct Truth(HashMap<String, Label>);

    impl LabelOracle for Truth {
        fn label(&mut self, req: &OracleRequest) -> Result<OracleResponse, OracleError> {
            Ok(OracleResponse {
                tweet_id: req.tweet_id.clone(),
                label: self.0[&req.tweet_id],
                annotator_id: "sim".into(),
            })
        }
    }

    struct Abort;

    impl LabelOracle for Abort {
        fn label(&mut self, _: &OracleRequest) -> Result<OracleResponse, OracleError> {
            Err(OracleError("closed".into()))
        }
    }

    struct AlwaysUncertain;

    impl LabelOracle for AlwaysUncertain {
        fn label(&mut self, req: &OracleRequest) -> Result<OracleResponse, OracleError> {
            Ok(OracleResponse {
                tweet_id: req.tweet_id.clone(),
                label: Label::Uncertain,
                annotator_id: "u".into(),
            })
        }
    }

    fn at() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 5, 1, 12, 0, 0).unwrap()
    }

    #[test]
    fn nine_cycles_add_at_least_27_labels() {
        let (seed, truth) = seed_fixture(120);
        let total = seed.items.len();
        let mut s = ActiveSession::from_seed(seed).unwrap();
        let mut oracle = Truth(truth);
        assert_eq!(s.status().metrics_history.len(), 1);
        for c in 1..=9 {
            let before = s.labeled().len();
            let out = run_active_cycle(&mut s, &mut oracle).unwrap();
            assert_eq!(out.cycle, c);
            assert_eq!(out.accepted.len(), 3);
            assert!(s.labeled().len() > before);
            assert_eq!(s.labeled().len() + s.pool().len(), total);
            assert!(s.labeled().keys().all(|k| !s.pool().contains(k)));
        }
        let humans = s
            .audit()
            .iter()
            .filter(|r| matches!(r.example.source, LabelSource::Human { .. }))
            .count();
        assert_eq!(humans, 27);
        assert_eq!(s.status().metrics_history.len(), 10);
        assert!(s.is_complete());
        assert!(s.batch().is_empty());
        assert!(matches!(
            run_active_cycle(&mut s, &mut oracle),
            Err(ActiveError::Complete(9))
        ));
    }

    #[test]
    fn oracle_abort_leaves_session_unchanged() {
        let (seed, _) = seed_fixture(60);
        let mut s = ActiveSession::from_seed(seed).unwrap();
        let before = (s.status(), s.batch().to_vec());
        assert!(matches!(
            run_active_cycle(&mut s, &mut Abort),
            Err(ActiveError::Oracle(_))
        ));
        assert_eq!((s.status(), s.batch().to_vec()), before);
    }

    #[test]
    fn all_uncertain_cycle_keeps_metrics() {
        let (seed, _) = seed_fixture(60);
        let mut s = ActiveSession::from_seed(seed).unwrap();
        let model = s.model().clone();
        let out = run_active_cycle(&mut s, &mut AlwaysUncertain).unwrap();
        assert_eq!(s.metrics_history()[0], out.metrics);
        assert_eq!(s.model(), &model);
        assert_eq!(s.audit().len(), 3);
    }

    #[test]
    fn batch_is_entropy_ranked_and_idempotent() {
        let (seed, _) = seed_fixture(60);
        let s = ActiveSession::from_seed(seed).unwrap();
        let b = s.batch();
        assert_eq!(b.len(), 3);
        assert!(b.windows(2).all(|w| w[0].entropy >= w[1].entropy));
        let max_pool_entropy = s
            .pool()
            .iter()
            .map(|id| {
                binary_entropy(s.model().predict_proba(&s.item(id).unwrap().row).unwrap()).unwrap()
            })
            .fold(0.0, f64::max);
        assert_eq!(b[0].entropy, max_pool_entropy);
        assert_eq!(
            s.batch(),
            ActiveSession::from_seed(s.seed().clone()).unwrap().batch()
        );
    }

    #[test]
    fn rejections_are_per_entry() {
        let (seed, truth) = seed_fixture(60);
        let mut s = ActiveSession::from_seed(seed).unwrap();
        let batch = s.batch().to_vec();
        let mut responses: Vec<OracleResponse> = batch[..2]
            .iter()
            .map(|b| OracleResponse {
                tweet_id: b.tweet_id.clone(),
                label: truth[&b.tweet_id],
                annotator_id: "a".into(),
            })
            .collect();
        responses.push(OracleResponse {
            tweet_id: "nope".into(),
            label: Label::Misinfo,
            annotator_id: "a".into(),
        });
        responses.push(responses[0].clone());
        let out = s.apply_labels(&responses, at()).unwrap();
        assert_eq!(out.accepted.len(), 2);
        assert_eq!(out.rejected.len(), 2);
        assert!(s.pool().contains(&batch[2].tweet_id));

        let bad = [OracleResponse {
            tweet_id: "nope".into(),
            label: Label::Misinfo,
            annotator_id: "a".into(),
        }];
        let status = s.status();
        assert!(matches!(
            s.apply_labels(&bad, at()),
            Err(ActiveError::NothingAccepted(_))
        ));
        assert_eq!(s.status(), status);
    }

    #[test]
    fn near_duplicates_are_propagated() {
        let (mut seed, truth) = seed_fixture(60);
        let s = ActiveSession::from_seed(seed.clone()).unwrap();
        let target = s.batch()[0].tweet_id.clone();
        let text = s.item(&target).unwrap().text.clone();
        let mut dup_ids = Vec::new();
        for item in seed.items.iter_mut() {
            if item.id != target
                && dup_ids.len() < 5
                && !seed.seed_labels.iter().any(|l| l.tweet_id == item.id)
            {
                item.text = text.clone();
                dup_ids.push(item.id.clone());
            }
        }
        let mut s = ActiveSession::from_seed(seed).unwrap();
        let target = s.batch()[0].tweet_id.clone();
        let out = s
            .apply_labels(
                &[OracleResponse {
                    tweet_id: target.clone(),
                    label: truth[&target],
                    annotator_id: "a".into(),
                }],
                at(),
            )
            .unwrap();
        let text = s.item(&target).unwrap().text.clone();
        let expected: BTreeSet<String> = s
            .seed()
            .items
            .iter()
            .filter(|it| {
                it.id != target
                    && it.text == text
                    && !s.seed().seed_labels.iter().any(|l| l.tweet_id == it.id)
            })
            .map(|it| it.id.clone())
            .collect();
        let got: BTreeSet<String> = out.propagated.iter().map(|p| p.tweet_id.clone()).collect();
        assert_eq!(got, expected);
        assert!(got.len() >= 4);
    }

    #[test]
    fn replay_reproduces_state() {
        let (seed, truth) = seed_fixture(80);
        let mut s = ActiveSession::from_seed(seed.clone()).unwrap();
        for _ in 0..4 {
            let responses: Vec<OracleResponse> = s
                .batch()
                .iter()
                .map(|b| OracleResponse {
                    tweet_id: b.tweet_id.clone(),
                    label: truth[&b.tweet_id],
                    annotator_id: "a".into(),
                })
                .collect();
            s.apply_labels(&responses, at()).unwrap();
        }
        let replayed = ActiveSession::replay(seed.clone(), s.audit()).unwrap();
        assert_eq!(replayed.status(), s.status());
        assert_eq!(replayed.labeled(), s.labeled());
        assert_eq!(replayed.batch(), s.batch());

        let mut tampered = s.audit().to_vec();
        tampered[0].example.label = Label::Uncertain;
        tampered.truncate(3);
        tampered.push(AuditRecord {
            revision: 1,
            at: at(),
            example: LabeledExample {
                tweet_id: "p0059".into(),
                label: Label::Misinfo,
                source: LabelSource::Propagated {
                    from_id: "x".into(),
                    similarity: 1.0,
                },
                round: 1,
            },
        });
        assert!(ActiveSession::replay(seed, &tampered).is_err());
    }

    #[test]
    fn random_strategy_is_seeded() {
        let (mut seed, _) = seed_fixture(60);
        seed.config.strategy = QueryStrategy::Random;
        let a = ActiveSession::from_seed(seed.clone()).unwrap();
        let b = ActiveSession::from_seed(seed).unwrap();
        assert_eq!(a.batch(), b.batch());
        assert_eq!(a.batch().len(), 3);
    }
}
