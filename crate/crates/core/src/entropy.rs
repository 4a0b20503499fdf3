//! Sequence scores, entropy estimators and the Gibbs / observed probabilities.
//!
//! Every estimator is a Monte-Carlo average of per-answer log-probabilities,
//! `H = -(1/N) Σ log p_i`, so its Gibbs probability `exp(-H)` is the geometric
//! mean of the `p_i`. The estimators differ only in what `p_i` is: the raw
//! sequence probability (PE), its per-token geometric mean (LNPE), a summed
//! cluster probability (SE), a relevance-weighted token average (TokenSAR),
//! or that average boosted by similar answers (SAR).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_log_probability, ClusterSet};
use crate::error::{Error, Result};
use crate::generation_log::TokenScoredText;
use crate::scalar::{log_sum_exp, mean, Scalar};
use crate::similarity::{rouge_l, SimilarityScore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pe,
    Lnpe,
    Se,
    TokenSar,
    Sar,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Pe, Method::Lnpe, Method::Se, Method::TokenSar, Method::Sar];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pe => "pe",
            Method::Lnpe => "lnpe",
            Method::Se => "se",
            Method::TokenSar => "tokensar",
            Method::Sar => "sar",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceScore<T> {
    /// Σ log p over the tokens.
    pub total_logprob: T,
    pub length: usize,
    pub norm_logprob: T,
    pub norm_prob: T,
}

pub fn score_logprobs<T: Scalar>(token_logprobs: &[T]) -> SequenceScore<T> {
    let total_logprob: T = token_logprobs.iter().copied().sum();
    let length = token_logprobs.len();
    let norm_logprob = total_logprob / T::from_count(length);
    SequenceScore {
        total_logprob,
        length,
        norm_logprob,
        norm_prob: norm_logprob.exp(),
    }
}

pub fn score_sequence<T: Scalar>(answer: &TokenScoredText<T>) -> SequenceScore<T> {
    score_logprobs(&answer.token_logprobs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyResult<T> {
    pub method: Method,
    pub entropy: T,
    /// `exp(-entropy)`.
    pub gibbs_prob: T,
    pub num_clusters: Option<usize>,
    /// Per-answer log-probabilities the estimate averaged over (cluster
    /// estimators keep the per-sample values).
    pub sample_log_probs: Vec<T>,
}

impl<T: Scalar> EntropyResult<T> {
    fn from_log_probs(method: Method, averaged: &[T], sample_log_probs: Vec<T>) -> Self {
        let entropy = -mean(averaged);
        Self {
            method,
            entropy,
            gibbs_prob: (-entropy).exp(),
            num_clusters: None,
            sample_log_probs,
        }
    }

    /// `ln P̃`, without the round trip through `exp`.
    pub fn log_gibbs(&self) -> T {
        -self.entropy
    }
}

/// Length-normalised predictive entropy, `-(1/M) Σ ℓ̄_i`.
pub fn lnpe<T: Scalar>(samples: &[SequenceScore<T>]) -> EntropyResult<T> {
    let logs: Vec<T> = samples.iter().map(|s| s.norm_logprob).collect();
    EntropyResult::from_log_probs(Method::Lnpe, &logs, logs.clone())
}

/// Predictive entropy over whole-sequence log-probabilities, `-(1/M) Σ ℓ_i`.
pub fn pe_unnormalized<T: Scalar>(samples: &[SequenceScore<T>]) -> EntropyResult<T> {
    let logs: Vec<T> = samples.iter().map(|s| s.total_logprob).collect();
    EntropyResult::from_log_probs(Method::Pe, &logs, logs.clone())
}

/// Semantic entropy, `-(1/|C|) Σ_c ln Σ_{s∈c} p̄_s`. Cluster masses are not renormalised.
pub fn semantic_entropy<T: Scalar>(
    samples: &[SequenceScore<T>],
    clusters: &ClusterSet,
) -> Result<EntropyResult<T>> {
    if clusters.num_items() != samples.len() {
        return Err(Error::Config(format!(
            "cluster set covers {} answers but {} were scored",
            clusters.num_items(),
            samples.len()
        )));
    }
    let cluster_logs: Vec<T> = clusters
        .member_lists()
        .iter()
        .map(|members| cluster_log_probability(members, samples))
        .collect();
    let mut result = EntropyResult::from_log_probs(
        Method::Se,
        &cluster_logs,
        samples.iter().map(|s| s.norm_logprob).collect(),
    );
    result.num_clusters = Some(clusters.num_clusters());
    Ok(result)
}

/// `Σ_t w_t · logprob_t` with `w = relevance / Σ relevance` (uniform if the sum is zero).
pub fn relevance_weighted_logprob<T: Scalar>(token_logprobs: &[T], relevance: &[T]) -> T {
    let total: T = relevance.iter().copied().sum();
    if total > T::zero() {
        token_logprobs
            .iter()
            .zip(relevance)
            .map(|(&lp, &r)| (r / total) * lp)
            .sum()
    } else {
        let len = T::from_count(token_logprobs.len());
        token_logprobs.iter().map(|&lp| lp / len).sum()
    }
}

fn token_sar_logs<T: Scalar>(samples: &[TokenScoredText<T>], relevance: &[Vec<T>]) -> Result<Vec<T>> {
    if relevance.len() != samples.len() {
        return Err(Error::validation(
            "<scoring>",
            "token_relevance",
            format!("{} weight sequences for {} answers", relevance.len(), samples.len()),
        ));
    }
    samples
        .iter()
        .zip(relevance)
        .enumerate()
        .map(|(i, (s, w))| {
            if w.len() != s.token_logprobs.len() {
                return Err(Error::validation(
                    "<scoring>",
                    format!("token_relevance[{i}]"),
                    format!("{} weights for {} tokens", w.len(), s.token_logprobs.len()),
                ));
            }
            if w.iter().any(|&x| x.is_nan() || x < T::zero()) {
                return Err(Error::validation(
                    "<scoring>",
                    format!("token_relevance[{i}]"),
                    "weights must be non-negative",
                ));
            }
            Ok(relevance_weighted_logprob(&s.token_logprobs, w))
        })
        .collect()
}

/// TokenSAR: entropy over relevance-weighted per-token log-probabilities.
pub fn token_sar_entropy<T: Scalar>(
    samples: &[TokenScoredText<T>],
    relevance: &[Vec<T>],
) -> Result<EntropyResult<T>> {
    let logs = token_sar_logs(samples, relevance)?;
    Ok(EntropyResult::from_log_probs(Method::TokenSar, &logs, logs.clone()))
}

/// SAR: each answer's TokenSAR probability is boosted by `(1/t) Σ_{k≠j} sim(j,k) p̃_k`.
pub fn sar_entropy<T: Scalar>(
    samples: &[TokenScoredText<T>],
    relevance: &[Vec<T>],
    sentence_similarity: Option<&[Vec<T>]>,
    t: T,
) -> Result<EntropyResult<T>> {
    let sim = sentence_similarity.ok_or_else(|| {
        Error::Config(
            "SAR needs a sentence_similarity matrix; use tokensar for records without one".into(),
        )
    })?;
    if t.is_nan() || t <= T::zero() {
        return Err(Error::Config(format!("SAR temperature t must be positive, got {t}")));
    }
    let m = samples.len();
    if sim.len() != m || sim.iter().any(|row| row.len() != m) {
        return Err(Error::validation(
            "<scoring>",
            "sentence_similarity",
            format!("must be a {m}x{m} matrix"),
        ));
    }
    let base = token_sar_logs(samples, relevance)?;
    let ln_t = t.ln();
    let boosted: Vec<T> = (0..m)
        .map(|j| {
            let mut terms = vec![base[j]];
            terms.extend(
                (0..m)
                    .filter(|&k| k != j && sim[j][k] > T::zero())
                    .map(|k| sim[j][k].ln() - ln_t + base[k]),
            );
            log_sum_exp(&terms)
        })
        .collect();
    Ok(EntropyResult::from_log_probs(Method::Sar, &boosted, boosted.clone()))
}

/// The label answer's length-normalised probability `P_𝒢`.
pub fn observed_probability<T: Scalar>(greedy: &SequenceScore<T>) -> T {
    greedy.norm_prob
}

/// Token relevance without an upstream model: `1 - ROUGE-L(answer, answer minus token t)`.
///
/// Needs the `tokens` field; the answer text is rebuilt by concatenating tokens.
pub fn fallback_relevance<T: Scalar>(answer: &TokenScoredText<T>) -> Option<Vec<T>> {
    let tokens = answer.tokens.as_ref()?;
    let full: String = tokens.concat();
    let weights = (0..tokens.len())
        .map(|t| {
            let without: String = tokens
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != t)
                .map(|(_, tok)| tok.as_str())
                .collect();
            let sim: SimilarityScore<T> = rouge_l(&full, &without);
            (T::one() - sim.value()).max(T::zero())
        })
        .collect();
    Some(weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln(x: f64) -> f64 {
        x.ln()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn one_token(p: f64) -> SequenceScore<f64> {
        score_logprobs(&[ln(p)])
    }

    #[test]
    fn sequence_scores() {
        let s = score_logprobs(&[0.0_f64]);
        assert_eq!((s.total_logprob, s.length, s.norm_logprob, s.norm_prob), (0.0, 1, 0.0, 1.0));
        let s = score_logprobs(&[ln(0.5), ln(0.5)]);
        assert!(close(s.total_logprob, ln(0.25), 1e-15));
        assert!(close(s.norm_logprob, ln(0.5), 1e-15));
        assert!(close(s.norm_prob, 0.5, 1e-15));
        assert!(close(score_logprobs(&[ln(0.25)]).norm_prob, 0.25, 1e-15));
    }

    #[test]
    fn lnpe_examples() {
        let r = lnpe(&[score_logprobs(&[0.0_f64])]);
        assert_eq!((r.entropy, r.gibbs_prob), (0.0, 1.0));
        let r = lnpe(&[one_token(0.5), one_token(0.25)]);
        assert!(close(r.entropy, 1.0397207708399179, 1e-12));
        assert!(close(r.gibbs_prob, 0.125_f64.sqrt(), 1e-12));
        let q = 0.37;
        let r = lnpe(&[one_token(q), score_logprobs(&[ln(q), ln(q)]), one_token(q)]);
        assert!(close(r.gibbs_prob, q, 1e-12));
    }

    #[test]
    fn pe_examples() {
        assert_eq!(pe_unnormalized(&[score_logprobs(&[0.0_f64])]).entropy, 0.0);
        let s = score_logprobs(&[ln(0.5), ln(0.5)]);
        let r = pe_unnormalized(&[s.clone(), s.clone()]);
        assert!(close(r.entropy, -ln(0.25), 1e-12));
        // With lengths ≥ 1 and log-probs ≤ 0 the unnormalised entropy dominates.
        let fixture = [score_logprobs(&[ln(0.5), ln(0.4), ln(0.9)]), one_token(0.3)];
        let pe = pe_unnormalized(&fixture).entropy;
        let ln_pe = lnpe(&fixture).entropy;
        let by_hand = -(fixture[0].total_logprob + fixture[1].total_logprob) / 2.0;
        assert!(close(pe, by_hand, 1e-15));
        assert!(pe >= ln_pe);
    }

    #[test]
    fn semantic_entropy_examples() {
        let scores = [one_token(0.2), one_token(0.3), one_token(0.5)];
        let singles = semantic_entropy(&scores, &ClusterSet::singletons(3)).unwrap();
        assert_eq!(singles.entropy, lnpe(&scores).entropy);

        let clusters = ClusterSet::from_assignment(vec![0, 0, 1]).unwrap();
        let se = semantic_entropy(&scores, &clusters).unwrap();
        // Independent per-cluster sum: {0.2+0.3, 0.5}.
        let oracle = -((0.2_f64 + 0.3).ln() + 0.5_f64.ln()) / 2.0;
        assert!(close(se.entropy, oracle, 1e-12));
        assert!(close(se.entropy, 2.0_f64.ln(), 1e-12));
        assert_eq!(se.num_clusters, Some(2));

        let whole = [one_token(0.5), one_token(0.5)];
        let one = semantic_entropy(&whole, &ClusterSet::from_assignment(vec![0, 0]).unwrap()).unwrap();
        assert!(close(one.entropy, 0.0, 1e-15));

        assert!(semantic_entropy(&whole, &ClusterSet::singletons(3)).is_err());
    }

    fn answer(lps: &[f64]) -> TokenScoredText<f64> {
        TokenScoredText::new("x", lps.to_vec())
    }

    #[test]
    fn token_sar_examples() {
        let samples = [answer(&[ln(0.5), ln(0.1)]), answer(&[ln(0.7)])];
        let uniform = vec![vec![0.3, 0.3], vec![0.9]];
        let tsar = token_sar_entropy(&samples, &uniform).unwrap();
        let scores: Vec<_> = samples.iter().map(score_sequence).collect();
        assert!(close(tsar.entropy, lnpe(&scores).entropy, 1e-12));

        let delta = vec![vec![0.0, 1.0], vec![1.0]];
        let r = token_sar_entropy(&samples, &delta).unwrap();
        assert!(close(r.entropy, -(ln(0.1) + ln(0.7)) / 2.0, 1e-12));

        let one = [answer(&[ln(0.5), ln(0.1)])];
        let r = token_sar_entropy(&one, &[vec![0.8, 0.2]]).unwrap();
        assert!(close(r.entropy, -(0.8 * ln(0.5) + 0.2 * ln(0.1)), 1e-12));

        let zero = token_sar_entropy(&one, &[vec![0.0, 0.0]]).unwrap();
        assert!(close(zero.entropy, lnpe(&[score_sequence(&one[0])]).entropy, 1e-12));

        assert!(token_sar_entropy(&one, &[vec![1.0]]).is_err());
        assert!(token_sar_entropy(&one, &[]).is_err());
    }

    #[test]
    fn sar_examples() {
        let samples = [answer(&[ln(0.4)]), answer(&[ln(0.4)])];
        let rel = vec![vec![1.0], vec![1.0]];
        let ones = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let r = sar_entropy(&samples, &rel, Some(&ones), 10.0).unwrap();
        assert!(close(r.entropy, -ln(0.44), 1e-12));

        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = sar_entropy(&samples, &rel, Some(&eye), 10.0).unwrap();
        assert_eq!(r.entropy, token_sar_entropy(&samples, &rel).unwrap().entropy);

        // Larger t shrinks the boost towards TokenSAR from below.
        let mixed = [answer(&[ln(0.3), ln(0.6)]), answer(&[ln(0.8)]), answer(&[ln(0.2)])];
        let rel = vec![vec![0.5, 1.0], vec![1.0], vec![0.4]];
        let sim = vec![vec![1.0, 0.7, 0.2], vec![0.7, 1.0, 0.9], vec![0.2, 0.9, 1.0]];
        let base = token_sar_entropy(&mixed, &rel).unwrap().entropy;
        let at10 = sar_entropy(&mixed, &rel, Some(&sim), 10.0).unwrap().entropy;
        let at1e6 = sar_entropy(&mixed, &rel, Some(&sim), 1e6).unwrap().entropy;
        assert!(at10 < at1e6 && at1e6 < base);
        assert!(base - at1e6 < 1e-5);

        let err = sar_entropy(&mixed, &rel, None, 10.0).unwrap_err();
        assert!(err.to_string().contains("tokensar"));
    }

    #[test]
    fn observed_probability_examples() {
        assert_eq!(observed_probability(&score_logprobs(&[0.0_f64])), 1.0);
        assert!(close(observed_probability(&one_token(0.1661)), 0.1661, 1e-12));
        let g = score_logprobs(&[ln(0.5), ln(0.25)]);
        assert!(close(observed_probability(&g), 0.125_f64.sqrt(), 1e-12));
    }

    #[test]
    fn fallback_relevance_weights_content_tokens() {
        let a = answer(&[-0.1, -0.2, -0.3]).with_tokens(vec!["Paris".into(), ",".into(), " France".into()]);
        let w = fallback_relevance(&a).unwrap();
        // Dropping the comma leaves the tokenized text unchanged.
        assert_eq!(w[1], 0.0);
        assert!(w[0] > 0.0 && w[2] > 0.0);
        assert!(fallback_relevance(&answer(&[-0.1])).is_none());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("TokenSAR".parse::<Method>().unwrap(), Method::TokenSar);
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let s = [score_logprobs(&[0.5_f32.ln()]), score_logprobs(&[0.25_f32.ln()])];
        let r = lnpe(&s);
        assert!((r.gibbs_prob - 0.125_f32.sqrt()).abs() < 1e-6);
    }
}
