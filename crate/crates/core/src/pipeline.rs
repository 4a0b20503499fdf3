//! Per-record scoring: every (method × aggregator × label source) combination.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{clusters_from_equivalence, clusters_from_rouge, ClusterSet};
use crate::divergence::{lca_score, Aggregator, Orientation};
use crate::entropy::{
    fallback_relevance, lnpe, pe_unnormalized, sar_entropy, score_sequence, semantic_entropy,
    token_sar_entropy, EntropyResult, Method, SequenceScore,
};
use crate::error::{Error, Result};
use crate::generation_log::{GenerationRecord, RecordBatch, TokenScoredText};
use crate::labeling::{merged_semantic_entropy, select_label, LabelSource, LabelThresholds, LabeledRecord};
use crate::scalar::Scalar;
use crate::similarity::rouge_l;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig<T> {
    pub methods: Vec<Method>,
    pub aggregators: Vec<Aggregator>,
    pub label_sources: Vec<LabelSource>,
    pub thresholds: LabelThresholds<T>,
    pub tau_cluster: T,
    pub sar_t: T,
    pub seed: u64,
    pub orientation: Orientation,
    /// Worker threads for scoring; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl<T: Scalar> Default for RunConfig<T> {
    fn default() -> Self {
        Self {
            methods: vec![Method::Lnpe, Method::Se, Method::TokenSar, Method::Sar],
            aggregators: Aggregator::ALL.to_vec(),
            label_sources: vec![LabelSource::Greedy],
            thresholds: LabelThresholds::default(),
            tau_cluster: T::lit(0.5),
            sar_t: T::lit(10.0),
            seed: 0,
            orientation: Orientation::HigherIsUncertain,
            jobs: None,
        }
    }
}

impl<T: Scalar> RunConfig<T> {
    /// Sorts and dedups the selection lists into canonical order.
    pub fn canonicalize(mut self) -> Self {
        self.methods.sort_unstable();
        self.methods.dedup();
        self.aggregators.sort_unstable();
        self.aggregators.dedup();
        self.label_sources.sort_unstable();
        self.label_sources.dedup();
        self
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        let join = |v: Vec<&str>| v.join(";");
        BTreeMap::from([
            ("methods".into(), join(self.methods.iter().map(|m| m.as_str()).collect())),
            ("aggregators".into(), join(self.aggregators.iter().map(|a| a.as_str()).collect())),
            ("label_sources".into(), join(self.label_sources.iter().map(|l| l.as_str()).collect())),
            ("rouge_threshold".into(), self.thresholds.tau_rouge.to_string()),
            ("membership_threshold".into(), self.thresholds.tau_mem.to_string()),
            ("cluster_threshold".into(), self.tau_cluster.to_string()),
            ("sar_t".into(), self.sar_t.to_string()),
            ("seed".into(), self.seed.to_string()),
            (
                "orientation".into(),
                match self.orientation {
                    Orientation::HigherIsUncertain => "higher_is_uncertain".into(),
                    Orientation::Flipped => "flipped".into(),
                },
            ),
        ])
    }
}

/// One line of the score file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoreRow<T> {
    pub record_id: String,
    pub method: Method,
    pub aggregator: Aggregator,
    pub label_source: LabelSource,
    pub entropy: T,
    pub gibbs_prob: T,
    pub label_prob: T,
    pub value: T,
    pub in_sample: bool,
    pub correct: bool,
}

/// Cached per-record quantities shared by every configuration.
pub struct RecordContext<'a, T> {
    pub record: &'a GenerationRecord<T>,
    pub scores: Vec<SequenceScore<T>>,
    pub clusters: ClusterSet,
    relevance: Option<(Vec<Vec<T>>, Vec<T>)>,
}

impl<'a, T: Scalar> RecordContext<'a, T> {
    pub fn new(record: &'a GenerationRecord<T>, tau_cluster: T) -> Result<Self> {
        let clusters = match &record.equivalence {
            Some(eq) => clusters_from_equivalence(eq).map_err(|e| match e {
                Error::Validation { field, message, .. } => {
                    Error::validation(record.id.clone(), field, message)
                }
                other => other,
            })?,
            None => clusters_from_rouge(&record.sample_texts(), tau_cluster),
        };
        let relevance = match &record.token_relevance {
            Some(rel) => Some((rel.samples.clone(), rel.greedy.clone())),
            None => record
                .samples
                .iter()
                .map(fallback_relevance)
                .collect::<Option<Vec<_>>>()
                .zip(fallback_relevance(&record.greedy)),
        };
        Ok(Self {
            record,
            scores: record.samples.iter().map(score_sequence).collect(),
            clusters,
            relevance,
        })
    }

    fn relevance(&self, method: Method) -> Result<&(Vec<Vec<T>>, Vec<T>)> {
        self.relevance.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "record {}: {method} needs token_relevance or per-token strings for the fallback",
                self.record.id
            ))
        })
    }

    /// Entropy backbone over the samples alone.
    pub fn entropy(&self, method: Method, sar_t: T) -> Result<EntropyResult<T>> {
        let rec = self.record;
        match method {
            Method::Pe => Ok(pe_unnormalized(&self.scores)),
            Method::Lnpe => Ok(lnpe(&self.scores)),
            Method::Se => semantic_entropy(&self.scores, &self.clusters),
            Method::TokenSar => token_sar_entropy(&rec.samples, &self.relevance(method)?.0),
            Method::Sar => sar_entropy(
                &rec.samples,
                &self.relevance(method)?.0,
                rec.sentence_similarity.as_deref(),
                sar_t,
            )
            .map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("record {}: {msg}", rec.id)),
                other => other,
            }),
        }
    }

    /// Entropy backbone with the greedy answer folded in as one more answer.
    /// For SE it joins its assigned cluster; for SAR its similarities to the
    /// samples are taken as ROUGE-L.
    pub fn merged_entropy(&self, method: Method, sar_t: T) -> Result<EntropyResult<T>> {
        let rec = self.record;
        let with_greedy = || {
            let mut all = self.scores.clone();
            all.push(score_sequence(&rec.greedy));
            all
        };
        let answers = || {
            let mut all: Vec<TokenScoredText<T>> = rec.samples.clone();
            all.push(rec.greedy.clone());
            all
        };
        let mut result = match method {
            Method::Pe => pe_unnormalized(&with_greedy()),
            Method::Lnpe => lnpe(&with_greedy()),
            Method::Se => merged_semantic_entropy(rec, &self.clusters)?,
            Method::TokenSar => {
                let (samples, greedy) = self.relevance(method)?;
                let mut rel = samples.clone();
                rel.push(greedy.clone());
                token_sar_entropy(&answers(), &rel)?
            }
            Method::Sar => {
                let (samples, greedy) = self.relevance(method)?;
                let mut rel = samples.clone();
                rel.push(greedy.clone());
                let sim = rec.sentence_similarity.as_ref().ok_or_else(|| {
                    Error::Config(format!(
                        "record {}: SAR needs a sentence_similarity matrix; use tokensar for records without one",
                        rec.id
                    ))
                })?;
                let to_greedy: Vec<T> = rec
                    .samples
                    .iter()
                    .map(|s| rouge_l::<T>(&s.text, &rec.greedy.text).value())
                    .collect();
                let mut extended: Vec<Vec<T>> = sim
                    .iter()
                    .zip(&to_greedy)
                    .map(|(row, &g)| {
                        let mut row = row.clone();
                        row.push(g);
                        row
                    })
                    .collect();
                let mut last = to_greedy;
                last.push(T::one());
                extended.push(last);
                sar_entropy(&answers(), &rel, Some(&extended), sar_t)?
            }
        };
        result.method = method;
        Ok(result)
    }
}

/// Scores one record under every configuration in `config`, in canonical order.
pub fn score_record<T: Scalar>(
    record: &GenerationRecord<T>,
    config: &RunConfig<T>,
) -> Result<Vec<ScoreRow<T>>> {
    let ctx = RecordContext::new(record, config.tau_cluster)?;
    let labels: Vec<LabeledRecord<T>> = config
        .label_sources
        .iter()
        .map(|&src| select_label(record, src, Some(&ctx.clusters), config.seed, &config.thresholds))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(
        config.methods.len() * config.aggregators.len() * config.label_sources.len(),
    );
    for &method in &config.methods {
        let base = ctx.entropy(method, config.sar_t)?;
        let merged = if config.label_sources.contains(&LabelSource::Merge) {
            Some(ctx.merged_entropy(method, config.sar_t)?)
        } else {
            None
        };
        for &aggregator in &config.aggregators {
            for label in &labels {
                let entropy = match label.label_source {
                    LabelSource::Merge => merged.as_ref().expect("merged entropy computed"),
                    _ => &base,
                };
                let s = lca_score(&record.id, entropy, label.label_prob, aggregator, config.orientation);
                rows.push(ScoreRow {
                    record_id: record.id.clone(),
                    method,
                    aggregator,
                    label_source: label.label_source,
                    entropy: s.entropy,
                    gibbs_prob: s.gibbs_prob,
                    label_prob: s.label_prob,
                    value: s.value,
                    in_sample: label.in_sample,
                    correct: label.correct,
                });
            }
        }
    }
    Ok(rows)
}

/// Scores a batch; rows are ordered by record id, then configuration,
/// whatever the number of worker threads.
pub fn score_batch<T: Scalar>(batch: &RecordBatch<T>, config: &RunConfig<T>) -> Result<Vec<ScoreRow<T>>> {
    let mut order: Vec<&GenerationRecord<T>> = batch.records.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let run = || -> Result<Vec<Vec<ScoreRow<T>>>> {
        order.par_iter().map(|r| score_record(r, config)).collect()
    };
    let nested = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(nested.into_iter().flatten().collect())
}
