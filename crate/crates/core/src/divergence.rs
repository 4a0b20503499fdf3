//! Label-confidence-aware scores: how far the label answer's probability sits
//! from the ensemble's Gibbs probability.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entropy::{EntropyResult, Method, SequenceScore};
use crate::error::{Error, Result};
use crate::scalar::{mean, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    /// Plain entropy, no label information.
    None,
    Kld,
    Rkld,
    Sad,
    MeanKl,
}

impl Aggregator {
    pub const ALL: [Aggregator; 5] = [
        Aggregator::None,
        Aggregator::Kld,
        Aggregator::Rkld,
        Aggregator::Sad,
        Aggregator::MeanKl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::None => "none",
            Aggregator::Kld => "kld",
            Aggregator::Rkld => "rkld",
            Aggregator::Sad => "sad",
            Aggregator::MeanKl => "meankl",
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| *c != '-' && *c != '_').collect();
        Aggregator::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| Error::Config(format!("unknown aggregator `{s}`")))
    }
}

/// `p · (ln p − ln q)` from log-space inputs.
#[inline]
pub fn pointwise_kl_log<T: Scalar>(log_p: T, log_q: T) -> T {
    log_p.exp() * (log_p - log_q)
}

/// Pointwise KL of the label probability against the Gibbs probability: `P̃ ln(P̃ / P_𝒢)`.
pub fn differ_kld<T: Scalar>(gibbs: T, label: T) -> T {
    pointwise_kl_log(gibbs.floored_ln(), label.floored_ln())
}

/// Reverse direction: `P_𝒢 ln(P_𝒢 / P̃)`.
pub fn differ_rkld<T: Scalar>(gibbs: T, label: T) -> T {
    differ_kld(label, gibbs)
}

/// Absolute deviation `|P̃ − P_𝒢|`.
pub fn differ_sad<T: Scalar>(gibbs: T, label: T) -> T {
    (gibbs - label).abs()
}

/// Arithmetic-mean counterpart of [`differ_kld`]: `(1/M) Σ p_i (ln p_i − ln P_𝒢)`.
pub fn mean_pairwise_kl_logs<T: Scalar>(sample_log_probs: &[T], label: T) -> T {
    let log_label = label.floored_ln();
    let terms: Vec<T> = sample_log_probs
        .iter()
        .map(|&lp| pointwise_kl_log(lp, log_label))
        .collect();
    mean(&terms)
}

pub fn mean_pairwise_kl<T: Scalar>(samples: &[SequenceScore<T>], label: T) -> T {
    let logs: Vec<T> = samples.iter().map(|s| s.norm_logprob).collect();
    mean_pairwise_kl_logs(&logs, label)
}

/// Larger values always mean "more likely incorrect" unless flipped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    HigherIsUncertain,
    Flipped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct UncertaintyScore<T> {
    pub record_id: String,
    pub method: Method,
    pub aggregator: Aggregator,
    pub entropy: T,
    pub gibbs_prob: T,
    pub label_prob: T,
    pub value: T,
    pub orientation: Orientation,
}

/// Combines an entropy backbone with the label probability under `aggregator`.
pub fn lca_score<T: Scalar>(
    record_id: &str,
    entropy: &EntropyResult<T>,
    label_prob: T,
    aggregator: Aggregator,
    orientation: Orientation,
) -> UncertaintyScore<T> {
    let log_label = label_prob.floored_ln();
    let raw = match aggregator {
        Aggregator::None => entropy.entropy,
        Aggregator::Kld => pointwise_kl_log(entropy.log_gibbs(), log_label),
        Aggregator::Rkld => pointwise_kl_log(log_label, entropy.log_gibbs()),
        Aggregator::Sad => differ_sad(entropy.gibbs_prob, label_prob),
        Aggregator::MeanKl => mean_pairwise_kl_logs(&entropy.sample_log_probs, label_prob),
    };
    let value = match orientation {
        Orientation::HigherIsUncertain => raw,
        Orientation::Flipped => -raw,
    };
    UncertaintyScore {
        record_id: record_id.to_string(),
        method: entropy.method,
        aggregator,
        entropy: entropy.entropy,
        gibbs_prob: entropy.gibbs_prob,
        label_prob,
        value,
        orientation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{lnpe, score_logprobs};
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn kld_examples() {
        assert_eq!(differ_kld(0.5, 0.5), 0.0);
        assert!(close(differ_kld(0.5, 0.25), 0.5 * 2.0_f64.ln()));
        assert!((differ_kld(0.5_f64, 0.25) - 0.346574).abs() < 1e-6);
        assert!(close(differ_kld(0.25, 0.5), 0.25 * 0.5_f64.ln()));
    }

    #[test]
    fn rkld_and_sad_examples() {
        assert_eq!(differ_rkld(0.3, 0.3), 0.0);
        assert!(close(differ_rkld(0.5, 0.25), 0.25 * 0.5_f64.ln()));
        assert_eq!(differ_rkld(0.7, 0.2), differ_kld(0.2, 0.7));
        assert_eq!(differ_sad(0.4, 0.4), 0.0);
        assert_eq!(differ_sad(0.5, 0.25), 0.25);
    }

    #[test]
    fn mean_pairwise_examples() {
        let q = 0.3_f64;
        let one = [score_logprobs(&[q.ln()])];
        assert_eq!(mean_pairwise_kl(&one, q), 0.0);
        let equal = vec![score_logprobs(&[q.ln()]); 4];
        assert!(close(mean_pairwise_kl(&equal, 0.6), differ_kld(q, 0.6)));
        let mixed = [score_logprobs(&[0.5_f64.ln()]), score_logprobs(&[0.25_f64.ln()])];
        assert!(close(mean_pairwise_kl(&mixed, 0.25), 0.5 * 2.0_f64.ln() / 2.0));
    }

    #[test]
    fn lca_dispatch() {
        let scores = [score_logprobs(&[0.5_f64.ln()]), score_logprobs(&[0.25_f64.ln()])];
        let e = lnpe(&scores);
        let none = lca_score("r", &e, 0.2, Aggregator::None, Orientation::default());
        assert_eq!(none.value, e.entropy);
        let same = lca_score("r", &e, e.gibbs_prob, Aggregator::Kld, Orientation::default());
        assert!(same.value.abs() < 1e-15);
        let flipped = lca_score("r", &e, 0.1, Aggregator::Kld, Orientation::Flipped);
        let plain = lca_score("r", &e, 0.1, Aggregator::Kld, Orientation::default());
        assert_eq!(flipped.value, -plain.value);
        let mk = lca_score("r", &e, 0.25, Aggregator::MeanKl, Orientation::default());
        assert!(close(mk.value, mean_pairwise_kl(&scores, 0.25)));
    }

    #[test]
    fn label_below_ensemble_is_flagged() {
        // Ensemble fairly confident, greedy label probability 0.1661.
        let samples = vec![score_logprobs(&[0.6_f64.ln()]); 5];
        let e = lnpe(&samples);
        let s = lca_score("fig", &e, 0.1661, Aggregator::Kld, Orientation::default());
        assert!(s.value > 0.0);
    }

    #[test]
    fn aggregator_parsing() {
        assert_eq!("R-KLD".parse::<Aggregator>().unwrap(), Aggregator::Rkld);
        assert_eq!("mean_kl".parse::<Aggregator>().unwrap(), Aggregator::MeanKl);
        assert!("xyz".parse::<Aggregator>().is_err());
    }

    proptest! {
        #[test]
        fn divergence_algebra(a in 1e-6f64..=1.0, b in 1e-6f64..=1.0) {
            prop_assert_eq!(differ_kld(a, a), 0.0);
            prop_assert_eq!(differ_rkld(a, b), differ_kld(b, a));
            let sad = differ_sad(a, b);
            prop_assert!((0.0..1.0).contains(&sad));
        }

        #[test]
        fn kld_increasing_in_gap(p in 0.01f64..1.0, q1 in 0.01f64..1.0, q2 in 0.01f64..1.0) {
            let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
            prop_assume!(hi - lo > 1e-9);
            // smaller label probability → larger log gap → larger value
            prop_assert!(differ_kld(p, lo) > differ_kld(p, hi));
        }
    }
}
