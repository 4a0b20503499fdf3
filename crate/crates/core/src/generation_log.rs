//! Generation-log data model: JSON Lines parsing, validation and subsampling.
//!
//! One line holds one question with its greedy answer, `M` sampled answers,
//! per-token log-probabilities (natural log) and optional pairwise matrices
//! produced upstream by an entailment or similarity model.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_REPORTED_ERRORS: usize = 10;

/// An answer string with its per-token log-probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TokenScoredText<T> {
    pub text: String,
    pub token_logprobs: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

impl<T: Scalar> TokenScoredText<T> {
    pub fn new(text: impl Into<String>, token_logprobs: Vec<T>) -> Self {
        Self {
            text: text.into(),
            token_logprobs,
            tokens: None,
        }
    }

    pub fn with_tokens(mut self, tokens: Vec<String>) -> Self {
        self.tokens = Some(tokens);
        self
    }

    fn validate(&self, record_id: &str, field: &str) -> Result<()> {
        if self.token_logprobs.is_empty() {
            return Err(Error::validation(
                record_id,
                format!("{field}.token_logprobs"),
                "token_logprobs must be nonempty",
            ));
        }
        for (t, &lp) in self.token_logprobs.iter().enumerate() {
            if !lp.is_finite() {
                return Err(Error::validation(
                    record_id,
                    format!("{field}.token_logprobs[{t}]"),
                    "token_logprob must be finite",
                ));
            }
            if lp > T::zero() {
                return Err(Error::validation(
                    record_id,
                    format!("{field}.token_logprobs[{t}]"),
                    "token_logprob must be ≤ 0",
                ));
            }
        }
        if let Some(tokens) = &self.tokens {
            if tokens.len() != self.token_logprobs.len() {
                return Err(Error::validation(
                    record_id,
                    format!("{field}.tokens"),
                    format!(
                        "length {} does not match token_logprobs length {}",
                        tokens.len(),
                        self.token_logprobs.len()
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Upstream token-relevance weights in `[0, 1]`, aligned with each answer's tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TokenRelevance<T> {
    pub greedy: Vec<T>,
    pub samples: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GenerationRecord<T> {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub greedy: TokenScoredText<T>,
    pub samples: Vec<TokenScoredText<T>>,
    /// Symmetric bidirectional-entailment matrix over the samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence: Option<Vec<Vec<bool>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_relevance: Option<TokenRelevance<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_similarity: Option<Vec<Vec<T>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl<T: Scalar> GenerationRecord<T> {
    /// Number of sampled answers (`M`).
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_texts(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.text.as_str()).collect()
    }

    /// Checks every record-level invariant, naming the first offending field.
    #[allow(clippy::needless_range_loop)]
    pub fn validate(&self) -> Result<()> {
        let id = self.id.as_str();
        if self.gold_answers.is_empty() {
            return Err(Error::validation(id, "gold_answers", "must be nonempty"));
        }
        let m = self.samples.len();
        if m == 0 {
            return Err(Error::validation(id, "samples", "at least one sample is required"));
        }
        self.greedy.validate(id, "greedy")?;
        for (i, s) in self.samples.iter().enumerate() {
            s.validate(id, &format!("samples[{i}]"))?;
        }

        if let Some(eq) = &self.equivalence {
            check_square(id, "equivalence", eq, m)?;
            for i in 0..m {
                if !eq[i][i] {
                    return Err(Error::validation(
                        id,
                        format!("equivalence[{i}][{i}]"),
                        "diagonal must be true",
                    ));
                }
                for j in (i + 1)..m {
                    if eq[i][j] != eq[j][i] {
                        return Err(Error::validation(
                            id,
                            format!("equivalence[{i}][{j}]"),
                            "matrix must be symmetric",
                        ));
                    }
                }
            }
        }

        if let Some(rel) = &self.token_relevance {
            check_weights(id, "token_relevance.greedy", &rel.greedy, self.greedy.token_logprobs.len())?;
            if rel.samples.len() != m {
                return Err(Error::validation(
                    id,
                    "token_relevance.samples",
                    format!("expected {m} sequences, found {}", rel.samples.len()),
                ));
            }
            for (i, (w, s)) in rel.samples.iter().zip(&self.samples).enumerate() {
                check_weights(
                    id,
                    &format!("token_relevance.samples[{i}]"),
                    w,
                    s.token_logprobs.len(),
                )?;
            }
        }

        if let Some(sim) = &self.sentence_similarity {
            check_square(id, "sentence_similarity", sim, m)?;
            for i in 0..m {
                if sim[i][i] != T::one() {
                    return Err(Error::validation(
                        id,
                        format!("sentence_similarity[{i}][{i}]"),
                        "diagonal must be 1",
                    ));
                }
                for j in 0..m {
                    let v = sim[i][j];
                    if !(v >= T::zero() && v <= T::one()) {
                        return Err(Error::validation(
                            id,
                            format!("sentence_similarity[{i}][{j}]"),
                            "value must lie in [0, 1]",
                        ));
                    }
                    if j > i && v != sim[j][i] {
                        return Err(Error::validation(
                            id,
                            format!("sentence_similarity[{i}][{j}]"),
                            "matrix must be symmetric",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_square<V>(id: &str, field: &str, rows: &[Vec<V>], m: usize) -> Result<()> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::validation(
            id,
            field,
            format!("must be a {m}x{m} matrix"),
        ));
    }
    Ok(())
}

fn check_weights<T: Scalar>(id: &str, field: &str, weights: &[T], expected: usize) -> Result<()> {
    if weights.len() != expected {
        return Err(Error::validation(
            id,
            field,
            format!("length {} does not match {expected} tokens", weights.len()),
        ));
    }
    if let Some(t) = weights
        .iter()
        .position(|&w| !(w >= T::zero() && w <= T::one()))
    {
        return Err(Error::validation(
            id,
            format!("{field}[{t}]"),
            "relevance must lie in [0, 1]",
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordBatch<T> {
    pub records: Vec<GenerationRecord<T>>,
    pub source_path: String,
}

impl<T: Scalar> RecordBatch<T> {
    pub fn new(records: Vec<GenerationRecord<T>>, source_path: impl Into<String>) -> Self {
        Self {
            records,
            source_path: source_path.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Smallest sample count across the batch, `None` when empty.
    pub fn min_samples(&self) -> Option<usize> {
        self.records.iter().map(|r| r.num_samples()).min()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub total: usize,
    pub valid: usize,
    pub invalid: usize,
    /// The first few error messages, in input order.
    pub errors: Vec<String>,
}

impl ValidationSummary {
    fn push_error(&mut self, message: String) {
        self.invalid += 1;
        if self.errors.len() < MAX_REPORTED_ERRORS {
            self.errors.push(message);
        }
    }

    pub fn all_valid(&self) -> bool {
        self.invalid == 0
    }
}

impl std::fmt::Display for ValidationSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "total: {}  valid: {}  invalid: {}",
            self.total, self.valid, self.invalid
        )?;
        for e in &self.errors {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

/// Parses and validates one JSON line. `line_number` is 1-based and only used in messages.
pub fn parse_record<T: Scalar>(line: &str, line_number: usize) -> Result<GenerationRecord<T>> {
    let record: GenerationRecord<T> = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_number,
        message: e.to_string(),
    })?;
    record.validate()?;
    Ok(record)
}

pub fn to_json_line<T: Scalar>(record: &GenerationRecord<T>) -> Result<String> {
    Ok(serde_json::to_string(record)?)
}

pub fn write_jsonl<T: Scalar, W: Write>(records: &[GenerationRecord<T>], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

/// Parses a whole JSON Lines document. Blank lines are ignored; every other
/// line yields exactly one record or one error. Invalid lines and duplicate
/// ids are excluded from the batch and reported in the summary.
pub fn parse_jsonl<T: Scalar>(text: &str, source: &str) -> Result<(RecordBatch<T>, ValidationSummary)> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    if lines.is_empty() {
        return Err(Error::NoRecords(source.to_string()));
    }

    // par_iter + collect keeps input order
    let parsed: Vec<(usize, Result<GenerationRecord<T>>)> = lines
        .par_iter()
        .map(|&(n, l)| (n, parse_record(l, n)))
        .collect();

    let mut summary = ValidationSummary {
        total: parsed.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(parsed.len());
    for (n, outcome) in parsed {
        match outcome {
            Ok(rec) if !seen.insert(rec.id.clone()) => {
                tracing::warn!(line = n, id = %rec.id, "skipping record with duplicate id");
                summary.push_error(format!("line {n}: record {}: duplicate id", rec.id));
            }
            Ok(rec) => {
                summary.valid += 1;
                records.push(rec);
            }
            Err(e) => {
                tracing::warn!(line = n, error = %e, "skipping invalid record");
                match e {
                    Error::Parse { .. } => summary.push_error(e.to_string()),
                    other => summary.push_error(format!("line {n}: {other}")),
                }
            }
        }
    }
    Ok((RecordBatch::new(records, source), summary))
}

pub fn load_jsonl<T: Scalar>(path: impl AsRef<Path>) -> Result<(RecordBatch<T>, ValidationSummary)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, &path.display().to_string())
}

/// Re-checks an in-memory batch: record invariants plus id uniqueness.
pub fn validate_batch<T: Scalar>(batch: &RecordBatch<T>) -> Result<ValidationSummary> {
    if batch.is_empty() {
        return Err(Error::NoRecords(batch.source_path.clone()));
    }
    let mut summary = ValidationSummary {
        total: batch.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    for (i, rec) in batch.records.iter().enumerate() {
        if let Err(e) = rec.validate() {
            summary.push_error(format!("record #{i}: {e}"));
        } else if !seen.insert(rec.id.as_str()) {
            summary.push_error(format!("record #{i}: record {}: duplicate id", rec.id));
        } else {
            summary.valid += 1;
        }
    }
    Ok(summary)
}

/// Keeps the first `k` samples, restricting every per-sample field to match.
pub fn subsample_generations<T: Scalar>(
    record: &GenerationRecord<T>,
    k: usize,
) -> Result<GenerationRecord<T>> {
    let m = record.num_samples();
    if k == 0 || k > m {
        return Err(Error::Range(format!(
            "record {}: cannot keep {k} of {m} samples (need 1 ≤ k ≤ {m})",
            record.id
        )));
    }
    let mut out = record.clone();
    out.samples.truncate(k);
    if let Some(eq) = out.equivalence.as_mut() {
        eq.truncate(k);
        eq.iter_mut().for_each(|row| row.truncate(k));
    }
    if let Some(sim) = out.sentence_similarity.as_mut() {
        sim.truncate(k);
        sim.iter_mut().for_each(|row| row.truncate(k));
    }
    if let Some(rel) = out.token_relevance.as_mut() {
        rel.samples.truncate(k);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"id":"q1","question":"Capital of France?","gold_answers":["Paris"],"greedy":{"text":"Paris","token_logprobs":[-0.1]},"samples":[{"text":"Paris","token_logprobs":[-0.2]}]}"#;

    fn two_sample(eq: &str) -> String {
        format!(
            r#"{{"id":"q2","question":"?","gold_answers":["a"],"greedy":{{"text":"a","token_logprobs":[-0.1]}},"samples":[{{"text":"a","token_logprobs":[-0.1]}},{{"text":"b","token_logprobs":[-0.5,-0.2]}}],"equivalence":{eq}}}"#
        )
    }

    #[test]
    fn minimal_record_parses() {
        let r: GenerationRecord<f64> = parse_record(MINIMAL, 1).unwrap();
        assert_eq!(r.num_samples(), 1);
        assert_eq!(r.gold_answers, vec!["Paris"]);
        assert!(r.meta.is_empty());
    }

    #[test]
    fn identity_equivalence_is_valid() {
        let r: GenerationRecord<f64> =
            parse_record(&two_sample("[[true,false],[false,true]]"), 1).unwrap();
        assert_eq!(r.equivalence.unwrap().len(), 2);
    }

    #[test]
    fn asymmetric_equivalence_rejected() {
        let err = parse_record::<f64>(&two_sample("[[true,true],[false,true]]"), 1).unwrap_err();
        assert!(err.to_string().contains("symmetric"), "{err}");
    }

    #[test]
    fn positive_logprob_rejected() {
        let line = MINIMAL.replace("[-0.2]", "[0.1]");
        let err = parse_record::<f64>(&line, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("token_logprob must be ≤ 0"), "{msg}");
        assert!(msg.contains("q1") && msg.contains("samples[0]"), "{msg}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_record::<f64>("{not json", 7).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }));
    }

    #[test]
    fn token_length_mismatch_rejected() {
        let line = MINIMAL.replace(
            r#""token_logprobs":[-0.1]}"#,
            r#""token_logprobs":[-0.1],"tokens":["Par","is"]}"#,
        );
        let err = parse_record::<f64>(&line, 1).unwrap_err();
        assert!(err.to_string().contains("greedy.tokens"), "{err}");
    }

    #[test]
    fn relevance_must_align() {
        let line = MINIMAL.replace(
            r#""samples""#,
            r#""token_relevance":{"greedy":[1.0],"samples":[[0.5,0.5]]},"samples""#,
        );
        let err = parse_record::<f64>(&line, 1).unwrap_err();
        assert!(err.to_string().contains("token_relevance.samples[0]"), "{err}");
    }

    #[test]
    fn batch_counts_and_duplicates() {
        let other = MINIMAL.replace("\"q1\"", "\"q3\"");
        let text = format!("{MINIMAL}\n{other}\n{}\n", two_sample("[[true,false],[false,true]]"));
        let (batch, summary) = parse_jsonl::<f64>(&text, "mem").unwrap();
        assert_eq!((summary.valid, summary.invalid), (3, 0));
        assert_eq!(batch.len(), 3);

        let dup = format!("{MINIMAL}\n{other}\n{MINIMAL}\n");
        let (batch, summary) = parse_jsonl::<f64>(&dup, "mem").unwrap();
        assert_eq!((summary.valid, summary.invalid), (2, 1));
        assert_eq!(summary.total, summary.valid + summary.invalid);
        assert!(summary.errors[0].contains("duplicate id"));
        assert_eq!(batch.len(), 2);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_jsonl::<f64>("\n \n", "empty"), Err(Error::NoRecords(_))));
    }

    #[test]
    fn subsample_bounds_and_blocks() {
        let r: GenerationRecord<f64> =
            parse_record(&two_sample("[[true,false],[false,true]]"), 1).unwrap();
        assert_eq!(subsample_generations(&r, 2).unwrap(), r);
        let one = subsample_generations(&r, 1).unwrap();
        assert_eq!(one.equivalence, Some(vec![vec![true]]));
        assert_eq!(one.greedy, r.greedy);
        assert!(matches!(subsample_generations(&r, 3), Err(Error::Range(_))));
        assert!(matches!(subsample_generations(&r, 0), Err(Error::Range(_))));
    }
}
