//! Semantic clusters over sampled answers.
//!
//! Clusters are connected components of a pairwise equivalence graph, so
//! equivalence is closed transitively. Cluster indices are ordered by the
//! smallest sample index they contain.

use crate::entropy::SequenceScore;
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};
use crate::similarity::{rouge_l_tokens, tokenize};

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Partition of sample indices `0..M` into nonempty clusters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterSet {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClusterSet {
    /// Builds from an explicit assignment; labels must be dense (`0..|C|`, none empty).
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let k = assignment.iter().map(|&c| c + 1).max().unwrap_or(0);
        let mut members = vec![Vec::new(); k];
        for (i, &c) in assignment.iter().enumerate() {
            members[c].push(i);
        }
        if let Some(c) = members.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!("cluster {c} has no members")));
        }
        Ok(Self { assignment, members })
    }

    pub fn singletons(m: usize) -> Self {
        Self {
            assignment: (0..m).collect(),
            members: (0..m).map(|i| vec![i]).collect(),
        }
    }

    fn from_union_find(mut uf: UnionFind, m: usize) -> Self {
        let mut root_label = vec![usize::MAX; m];
        let mut assignment = Vec::with_capacity(m);
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..m {
            let root = uf.find(i);
            if root_label[root] == usize::MAX {
                root_label[root] = members.len();
                members.push(Vec::new());
            }
            let c = root_label[root];
            assignment.push(c);
            members[c].push(i);
        }
        Self { assignment, members }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn num_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn num_items(&self) -> usize {
        self.assignment.len()
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub fn member_lists(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Appends one item (index `M`) to `cluster`, or to a fresh cluster when
    /// `cluster == num_clusters()`.
    pub fn with_extra_member(&self, cluster: usize) -> Result<Self> {
        let k = self.num_clusters();
        if cluster > k {
            return Err(Error::Range(format!(
                "cluster index {cluster} out of range for {k} clusters"
            )));
        }
        let mut assignment = self.assignment.clone();
        assignment.push(cluster);
        Self::from_assignment(assignment)
    }
}

/// Connected components of a symmetric, reflexive equivalence matrix.
pub fn clusters_from_equivalence(eq: &[Vec<bool>]) -> Result<ClusterSet> {
    let m = eq.len();
    let mut uf = UnionFind::new(m);
    for (i, row) in eq.iter().enumerate() {
        if row.len() != m {
            return Err(Error::validation(
                "<matrix>",
                "equivalence",
                format!("row {i} has length {}, expected {m}", row.len()),
            ));
        }
        if !row[i] {
            return Err(Error::validation(
                "<matrix>",
                format!("equivalence[{i}][{i}]"),
                "diagonal must be true",
            ));
        }
        for j in (i + 1)..m {
            if row[j] != eq[j][i] {
                return Err(Error::validation(
                    "<matrix>",
                    format!("equivalence[{i}][{j}]"),
                    "matrix must be symmetric",
                ));
            }
            if row[j] {
                uf.union(i, j);
            }
        }
    }
    Ok(ClusterSet::from_union_find(uf, m))
}

/// Fallback clustering: link two answers when their ROUGE-L reaches `tau_cluster`.
pub fn clusters_from_rouge<T: Scalar>(texts: &[&str], tau_cluster: T) -> ClusterSet {
    let tokens: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let m = texts.len();
    let mut uf = UnionFind::new(m);
    for i in 0..m {
        for j in (i + 1)..m {
            if rouge_l_tokens::<T, _>(&tokens[i], &tokens[j]).value() >= tau_cluster {
                uf.union(i, j);
            }
        }
    }
    ClusterSet::from_union_find(uf, m)
}

/// `ln Σ_{s ∈ cluster} p̄_s`, the log of the summed length-normalised probabilities.
pub fn cluster_log_probability<T: Scalar>(members: &[usize], scores: &[SequenceScore<T>]) -> T {
    let logs: Vec<T> = members.iter().map(|&i| scores[i].norm_logprob).collect();
    log_sum_exp(&logs)
}
