//! AUROC and the evaluation reports built on it.
//!
//! Convention: "incorrect" is the positive class and uncertainty scores are
//! used as-is, so AUROC is the probability that a random incorrect answer
//! scores strictly higher than a random correct one, ties counting one half.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::divergence::Aggregator;
use crate::entropy::Method;
use crate::error::{Error, Result};
use crate::generation_log::{subsample_generations, RecordBatch};
use crate::labeling::{LabelSource, LabeledRecord};
use crate::pipeline::{score_batch, RunConfig, ScoreRow};
use crate::scalar::Scalar;

pub const CSV_HEADER: [&str; 9] = [
    "method",
    "aggregator",
    "label_source",
    "group",
    "param",
    "param_value",
    "n",
    "auroc",
    "defined",
];

pub const DEFAULT_ROUGE_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const DEFAULT_GENERATION_GRID: [usize; 8] = [1, 3, 5, 7, 9, 11, 13, 15];

/// Mann–Whitney AUROC in `O(n log n)` via average ranks.
pub fn auroc<T: Scalar>(scores: &[T], correct: &[bool]) -> Result<T> {
    if scores.len() != correct.len() {
        return Err(Error::Range(format!(
            "{} scores but {} labels",
            scores.len(),
            correct.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Range("AUROC input contains NaN scores".into()));
    }
    let n_incorrect = correct.iter().filter(|&&c| !c).count();
    let n_correct = correct.len() - n_incorrect;
    if n_incorrect == 0 || n_correct == 0 {
        return Err(Error::UndefinedAuroc {
            correct: n_correct,
            incorrect: n_incorrect,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN excluded"));

    // Doubled rank sums keep everything in exact integer arithmetic.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let doubled_rank = (start + 1 + end) as u128;
        let tied_incorrect = order[start..end].iter().filter(|&&i| !correct[i]).count() as u128;
        doubled_rank_sum += doubled_rank * tied_incorrect;
        start = end;
    }
    let n_inc = n_incorrect as u128;
    let doubled_u = doubled_rank_sum - n_inc * (n_inc + 1);
    let denom = 2 * n_inc * n_correct as u128;
    let to_t = |x: u128| T::from_u128(x).expect("count representable");
    Ok(to_t(doubled_u) / to_t(denom))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    All,
    InSample,
    NotInSample,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::All => "all",
            Group::InSample => "in_sample",
            Group::NotInSample => "not_in_sample",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigKey {
    pub method: Method,
    pub aggregator: Aggregator,
    pub label_source: LabelSource,
}

impl<T> From<&ScoreRow<T>> for ConfigKey {
    fn from(row: &ScoreRow<T>) -> Self {
        Self {
            method: row.method,
            aggregator: row.aggregator,
            label_source: row.label_source,
        }
    }
}

/// One scored answer as seen by the evaluator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation<T> {
    pub score: T,
    pub correct: bool,
    pub in_sample: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalRow<T> {
    pub method: Method,
    pub aggregator: Aggregator,
    pub label_source: LabelSource,
    pub group: Group,
    pub param: String,
    pub param_value: String,
    pub n: usize,
    /// `None` when only one class is present.
    pub auroc: Option<T>,
    pub defined: bool,
    #[serde(skip)]
    pub n_correct: usize,
}

impl<T: Scalar> EvalRow<T> {
    fn new(key: ConfigKey, group: Group, obs: &[Observation<T>]) -> Self {
        let scores: Vec<T> = obs.iter().map(|o| o.score).collect();
        let labels: Vec<bool> = obs.iter().map(|o| o.correct).collect();
        let auroc = auroc(&scores, &labels).ok();
        Self {
            method: key.method,
            aggregator: key.aggregator,
            label_source: key.label_source,
            group,
            param: "none".into(),
            param_value: String::new(),
            n: obs.len(),
            auroc,
            defined: auroc.is_some(),
            n_correct: labels.iter().filter(|&&c| c).count(),
        }
    }

    fn with_param(mut self, param: &str, value: String) -> Self {
        self.param = param.to_string();
        self.param_value = value;
        self
    }

    pub fn key(&self) -> ConfigKey {
        ConfigKey {
            method: self.method,
            aggregator: self.aggregator,
            label_source: self.label_source,
        }
    }
}

/// Overall row plus one row per nonempty in-sample / not-in-sample group.
pub fn grouped_eval<T: Scalar>(key: ConfigKey, observations: &[Observation<T>]) -> Vec<EvalRow<T>> {
    let mut rows = vec![EvalRow::new(key, Group::All, observations)];
    for (group, flag) in [(Group::InSample, true), (Group::NotInSample, false)] {
        let part: Vec<Observation<T>> = observations
            .iter()
            .filter(|o| o.in_sample == flag)
            .copied()
            .collect();
        if !part.is_empty() {
            rows.push(EvalRow::new(key, group, &part));
        }
    }
    rows
}

/// [`grouped_eval`] over labelled records and their uncertainty scores.
pub fn grouped_eval_labeled<T: Scalar>(
    key: ConfigKey,
    labeled: &[LabeledRecord<T>],
    scores: &[T],
) -> Vec<EvalRow<T>> {
    let obs: Vec<Observation<T>> = labeled
        .iter()
        .zip(scores)
        .map(|(l, &score)| Observation {
            score,
            correct: l.correct,
            in_sample: l.in_sample,
        })
        .collect();
    grouped_eval(key, &obs)
}

fn observations_by_key<T: Scalar>(rows: &[ScoreRow<T>]) -> BTreeMap<ConfigKey, Vec<Observation<T>>> {
    let mut by_key: BTreeMap<ConfigKey, Vec<Observation<T>>> = BTreeMap::new();
    for r in rows {
        by_key.entry(r.into()).or_default().push(Observation {
            score: r.value,
            correct: r.correct,
            in_sample: r.in_sample,
        });
    }
    by_key
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub config: BTreeMap<String, String>,
    pub rows: Vec<EvalRow<T>>,
}

impl<T: Scalar> EvalReport<T> {
    /// Grid report with grouped rows for every configuration found in a score file.
    pub fn from_score_rows(rows: &[ScoreRow<T>], config: BTreeMap<String, String>) -> Self {
        let rows = observations_by_key(rows)
            .into_iter()
            .flat_map(|(key, obs)| grouped_eval(key, &obs))
            .collect();
        Self { config, rows }
    }

    pub fn overall(&self) -> impl Iterator<Item = &EvalRow<T>> {
        self.rows.iter().filter(|r| r.group == Group::All)
    }

    pub fn find(&self, method: Method, aggregator: Aggregator, label_source: LabelSource, group: Group) -> Option<&EvalRow<T>> {
        self.rows.iter().find(|r| {
            r.method == method && r.aggregator == aggregator && r.label_source == label_source && r.group == group
        })
    }

    pub fn undefined_count(&self) -> usize {
        self.rows.iter().filter(|r| !r.defined).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.method.to_string(),
                r.aggregator.to_string(),
                r.label_source.to_string(),
                r.group.to_string(),
                r.param.clone(),
                r.param_value.clone(),
                r.n.to_string(),
                r.auroc.map(|a| a.to_string()).unwrap_or_default(),
                r.defined.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// Writes `path` as CSV and a sibling `.json` file with the same rows.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(csv_file))?;
        let json_path = path.with_extension("json");
        let json_file = std::fs::File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let mut w = std::io::BufWriter::new(json_file);
        self.write_json(&mut w)?;
        w.write_all(b"\n").map_err(|e| Error::io(&json_path, e))?;
        Ok(())
    }

    /// Fixed-width table for terminals.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:<9} {:<7} {:<19} {:<14} {:<16} {:>6} {:>8}\n",
            "method", "agg", "label_source", "group", "param", "n", "auroc"
        );
        for r in &self.rows {
            let param = if r.param_value.is_empty() {
                r.param.clone()
            } else {
                format!("{}={}", r.param, r.param_value)
            };
            let auroc = r
                .auroc
                .map(|a| format!("{:.4}", a.to_f64_lossy()))
                .unwrap_or_else(|| "undef".into());
            s.push_str(&format!(
                "{:<9} {:<7} {:<19} {:<14} {:<16} {:>6} {:>8}\n",
                r.method.as_str(),
                r.aggregator.as_str(),
                r.label_source.as_str(),
                r.group.to_string(),
                param,
                r.n,
                auroc
            ));
        }
        s
    }
}

/// Collects per-sweep-point overall rows into canonical order.
fn sweep_report<T: Scalar>(
    param: &str,
    points: Vec<(String, Vec<ScoreRow<T>>)>,
    config: BTreeMap<String, String>,
) -> EvalReport<T> {
    let mut by_key: BTreeMap<ConfigKey, Vec<EvalRow<T>>> = BTreeMap::new();
    for (label, rows) in points {
        for (key, obs) in observations_by_key(&rows) {
            by_key
                .entry(key)
                .or_default()
                .push(EvalRow::new(key, Group::All, &obs).with_param(param, label.clone()));
        }
    }
    EvalReport {
        config,
        rows: by_key.into_values().flatten().collect(),
    }
}

/// Re-labels correctness at each ROUGE-L threshold and re-evaluates.
pub fn sweep_rouge_threshold<T: Scalar>(
    batch: &RecordBatch<T>,
    thresholds: &[T],
    config: &RunConfig<T>,
) -> Result<EvalReport<T>> {
    let mut points = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let mut cfg = config.clone();
        cfg.thresholds.tau_rouge = tau;
        points.push((tau.to_string(), score_batch(batch, &cfg)?));
    }
    Ok(sweep_report("rouge_threshold", points, config.echo()))
}

/// Keeps the first `k` samples of every record for each `k` and re-evaluates.
pub fn sweep_num_generations<T: Scalar>(
    batch: &RecordBatch<T>,
    ks: &[usize],
    config: &RunConfig<T>,
) -> Result<EvalReport<T>> {
    for &k in ks {
        let offending: Vec<&str> = batch
            .records
            .iter()
            .filter(|r| k == 0 || k > r.num_samples())
            .map(|r| r.id.as_str())
            .collect();
        if !offending.is_empty() {
            let shown = offending.iter().take(10).copied().collect::<Vec<_>>().join(", ");
            return Err(Error::Range(format!(
                "k={k} out of range for {} record(s): {shown}{}",
                offending.len(),
                if offending.len() > 10 { ", ..." } else { "" }
            )));
        }
    }
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let records = batch
            .records
            .iter()
            .map(|r| subsample_generations(r, k))
            .collect::<Result<Vec<_>>>()?;
        let sub = RecordBatch::new(records, batch.source_path.clone());
        points.push((k.to_string(), score_batch(&sub, config)?));
    }
    Ok(sweep_report("num_generations", points, config.echo()))
}
