//! Uncertainty scoring for language-model generation logs.
//!
//! Reads JSON Lines logs of greedy and sampled answers with token
//! log-probabilities, computes entropy-based uncertainty (PE, LNPE, SE,
//! TokenSAR, SAR), combines each entropy's Gibbs probability `exp(-H)` with
//! the label answer's probability into label-confidence-aware divergence
//! scores, and evaluates them with AUROC.
//!
//! All math is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the `f64` instantiation used by the command-line tool.

pub mod cli;
pub mod clustering;
pub mod divergence;
pub mod entropy;
pub mod error;
pub mod evaluation;
pub mod generation_log;
pub mod labeling;
pub mod pipeline;
pub mod scalar;
pub mod similarity;
pub mod synth;

pub use clustering::{clusters_from_equivalence, clusters_from_rouge, ClusterSet};
pub use divergence::{
    differ_kld, differ_rkld, differ_sad, lca_score, mean_pairwise_kl, Aggregator, Orientation,
};
pub use entropy::{
    lnpe, observed_probability, pe_unnormalized, sar_entropy, score_sequence, semantic_entropy,
    token_sar_entropy, Method,
};
pub use error::{Error, Result};
pub use evaluation::{auroc, grouped_eval, Group};
pub use labeling::{correctness_label, select_label, LabelSource};
pub use scalar::Scalar;
pub use similarity::{membership, rouge_l};

pub type TokenScoredText = generation_log::TokenScoredText<f64>;
pub type GenerationRecord = generation_log::GenerationRecord<f64>;
pub type RecordBatch = generation_log::RecordBatch<f64>;
pub type SequenceScore = entropy::SequenceScore<f64>;
pub type EntropyResult = entropy::EntropyResult<f64>;
pub type UncertaintyScore = divergence::UncertaintyScore<f64>;
pub type LabeledRecord = labeling::LabeledRecord<f64>;
pub type RunConfig = pipeline::RunConfig<f64>;
pub type ScoreRow = pipeline::ScoreRow<f64>;
pub type EvalRow = evaluation::EvalRow<f64>;
pub type EvalReport = evaluation::EvalReport<f64>;
pub type SimilarityScore = similarity::SimilarityScore<f64>;
