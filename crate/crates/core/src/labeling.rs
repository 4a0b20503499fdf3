//! Correctness labels and label-source strategies.
//!
//! By default the greedy answer is the label; the other strategies swap in a
//! sampled answer, or fold the greedy answer into the sample clusters before
//! the entropy is recomputed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::ClusterSet;
use crate::entropy::{score_sequence, semantic_entropy, EntropyResult, SequenceScore};
use crate::error::{Error, Result};
use crate::generation_log::GenerationRecord;
use crate::scalar::Scalar;
use crate::similarity::{assign_label_cluster, membership, rouge_l};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Greedy,
    SampleMax,
    ClusterSampleMax,
    Random,
    Merge,
}

impl LabelSource {
    pub const ALL: [LabelSource; 5] = [
        LabelSource::Greedy,
        LabelSource::SampleMax,
        LabelSource::ClusterSampleMax,
        LabelSource::Random,
        LabelSource::Merge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Greedy => "greedy",
            LabelSource::SampleMax => "sample_max",
            LabelSource::ClusterSampleMax => "cluster_sample_max",
            LabelSource::Random => "random",
            LabelSource::Merge => "merge",
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        LabelSource::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| Error::Config(format!("unknown label source `{s}`")))
    }
}

/// Thresholds used when labelling: ROUGE-L correctness and in-sample membership.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelThresholds<T> {
    pub tau_rouge: T,
    pub tau_mem: T,
}

impl<T: Scalar> Default for LabelThresholds<T> {
    fn default() -> Self {
        Self {
            tau_rouge: T::lit(0.5),
            tau_mem: T::one(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRecord<T> {
    pub record_id: String,
    pub label_source: LabelSource,
    pub label_text: String,
    /// Length-normalised probability of the label answer.
    pub label_prob: T,
    pub correct: bool,
    pub in_sample: bool,
    /// Sample index of the label, `None` for the greedy answer.
    pub sample_index: Option<usize>,
}

/// True iff the best ROUGE-L against any gold answer reaches `tau_rouge`.
pub fn correctness_label<T: Scalar>(label_text: &str, gold_answers: &[String], tau_rouge: T) -> bool {
    gold_answers
        .iter()
        .map(|g| rouge_l::<T>(label_text, g).value())
        .fold(T::neg_infinity(), T::max)
        >= tau_rouge
}

/// First index of the largest value.
fn argmax<T: Scalar>(values: impl IntoIterator<Item = (usize, T)>) -> Option<usize> {
    values
        .into_iter()
        .fold(None::<(usize, T)>, |acc, (i, v)| match acc {
            Some((_, best)) if v <= best => acc,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// Deterministic per-record generator keyed by `(seed, record_id)`.
pub fn record_rng(seed: u64, record_id: &str) -> ChaCha8Rng {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(record_id.as_bytes())
        .finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn pick_index<T: Scalar>(
    record: &GenerationRecord<T>,
    scores: &[SequenceScore<T>],
    strategy: LabelSource,
    clusters: Option<&ClusterSet>,
    seed: u64,
) -> Result<Option<usize>> {
    let probs = || scores.iter().map(|s| s.norm_prob).enumerate();
    let need_clusters = || {
        clusters.ok_or_else(|| {
            Error::Config(format!("label source `{strategy}` requires semantic clusters"))
        })
    };
    Ok(match strategy {
        LabelSource::Greedy => None,
        LabelSource::Merge => {
            need_clusters()?;
            None
        }
        LabelSource::SampleMax => argmax(probs()),
        LabelSource::ClusterSampleMax => {
            let clusters = need_clusters()?;
            if clusters.num_items() != scores.len() {
                return Err(Error::Config(format!(
                    "record {}: clusters cover {} answers, record has {}",
                    record.id,
                    clusters.num_items(),
                    scores.len()
                )));
            }
            let heaviest = argmax(clusters.member_lists().iter().enumerate().map(|(c, members)| {
                (c, members.iter().map(|&i| scores[i].norm_prob).sum::<T>())
            }))
            .expect("at least one cluster");
            argmax(clusters.members(heaviest).iter().map(|&i| (i, scores[i].norm_prob)))
        }
        LabelSource::Random => Some(record_rng(seed, &record.id).random_range(0..scores.len())),
    })
}

/// Chooses the label answer for `record` under `strategy` and labels it.
pub fn select_label<T: Scalar>(
    record: &GenerationRecord<T>,
    strategy: LabelSource,
    clusters: Option<&ClusterSet>,
    seed: u64,
    thresholds: &LabelThresholds<T>,
) -> Result<LabeledRecord<T>> {
    let scores: Vec<SequenceScore<T>> = record.samples.iter().map(score_sequence).collect();
    let index = pick_index(record, &scores, strategy, clusters, seed)?;
    let (label_text, label_prob) = match index {
        Some(i) => (record.samples[i].text.clone(), scores[i].norm_prob),
        None => (record.greedy.text.clone(), score_sequence(&record.greedy).norm_prob),
    };
    let correct = correctness_label(&label_text, &record.gold_answers, thresholds.tau_rouge);
    let in_sample = membership(&record.sample_texts(), &label_text, thresholds.tau_mem);
    Ok(LabeledRecord {
        record_id: record.id.clone(),
        label_source: strategy,
        label_text,
        label_prob,
        correct,
        in_sample,
        sample_index: index,
    })
}

/// Cluster index the greedy answer joins (or `|C|` for a new cluster).
pub fn greedy_cluster<T: Scalar>(record: &GenerationRecord<T>, clusters: &ClusterSet) -> usize {
    assign_label_cluster(&record.sample_texts(), clusters, &record.greedy.text)
}

/// Semantic entropy after folding the greedy answer into its assigned cluster.
pub fn merged_semantic_entropy<T: Scalar>(
    record: &GenerationRecord<T>,
    clusters: &ClusterSet,
) -> Result<EntropyResult<T>> {
    let extended = clusters.with_extra_member(greedy_cluster(record, clusters))?;
    let mut scores: Vec<SequenceScore<T>> = record.samples.iter().map(score_sequence).collect();
    scores.push(score_sequence(&record.greedy));
    semantic_entropy(&scores, &extended)
}
