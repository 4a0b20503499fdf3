//! ROUGE-L similarity, greedy-in-sample membership and greedy-to-cluster assignment.

use crate::clustering::ClusterSet;
use crate::scalar::Scalar;

/// Similarity value in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SimilarityScore<T>(T);

impl<T: Scalar> SimilarityScore<T> {
    pub fn new(value: T) -> Option<Self> {
        (value >= T::zero() && value <= T::one()).then_some(Self(value))
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Lowercases, drops ASCII punctuation, then splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .to_lowercase();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Length of the longest common subsequence, two-row dynamic programme.
pub fn lcs_len<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 (β = 1) over pre-tokenized sequences.
pub fn rouge_l_tokens<T: Scalar, S: PartialEq>(candidate: &[S], reference: &[S]) -> SimilarityScore<T> {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return SimilarityScore(T::zero());
    }
    // 2PR/(P+R) with P = lcs/|c|, R = lcs/|r| simplifies to 2·lcs/(|c|+|r|),
    // which is symmetric in its arguments bit for bit.
    let two_lcs = T::from_count(2 * lcs);
    SimilarityScore(two_lcs / T::from_count(candidate.len() + reference.len()))
}

pub fn rouge_l<T: Scalar>(candidate: &str, reference: &str) -> SimilarityScore<T> {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

/// True iff some sample reaches `tau_mem` ROUGE-L against the label text.
pub fn membership<T: Scalar>(samples: &[&str], label_text: &str, tau_mem: T) -> bool {
    let label = tokenize(label_text);
    samples
        .iter()
        .any(|s| rouge_l_tokens::<T, _>(&tokenize(s), &label).value() >= tau_mem)
}

/// Cluster for a label answer given its similarity to each sample.
///
/// Picks the most similar sample (lowest index on ties); if that similarity
/// is strictly above 0.5 the label joins the sample's cluster, otherwise it
/// opens a new cluster with index `clusters.num_clusters()`.
pub fn assign_by_similarity<T: Scalar>(similarities: &[T], clusters: &ClusterSet) -> usize {
    let best = similarities
        .iter()
        .enumerate()
        .fold(None::<(usize, T)>, |acc, (i, &s)| match acc {
            Some((_, b)) if s <= b => acc,
            _ => Some((i, s)),
        });
    match best {
        Some((i, s)) if s > T::lit(0.5) => clusters.assignment()[i],
        _ => clusters.num_clusters(),
    }
}

/// [`assign_by_similarity`] with ROUGE-L as the similarity.
pub fn assign_label_cluster(samples: &[&str], clusters: &ClusterSet, label_text: &str) -> usize {
    let label = tokenize(label_text);
    let sims: Vec<f64> = samples
        .iter()
        .map(|s| rouge_l_tokens::<f64, _>(&tokenize(s), &label).value())
        .collect();
    assign_by_similarity(&sims, clusters)
}
