//! Command implementations behind the `uqscore` binary.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::{
    sweep_num_generations, sweep_rouge_threshold, EvalReport, DEFAULT_GENERATION_GRID,
    DEFAULT_ROUGE_GRID,
};
use crate::generation_log::{load_jsonl, write_jsonl, ValidationSummary};
use crate::pipeline::{score_batch, RunConfig, ScoreRow};
use crate::scalar::Scalar;
use crate::synth::{generate_batch, SynthPreset};

pub const SCORE_HEADER: &str =
    "record_id,method,aggregator,label_source,entropy,gibbs_prob,label_prob,value,in_sample,correct";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    RougeThreshold,
    NumGenerations,
}

impl std::str::FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rouge-threshold" => Ok(Sweep::RougeThreshold),
            "num-generations" => Ok(Sweep::NumGenerations),
            other => Err(Error::Config(format!(
                "unknown sweep `{other}` (expected rouge-threshold or num-generations)"
            ))),
        }
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(file))
}

/// Validates a log file and prints the summary; returns the exit status.
pub fn cmd_validate(input: &Path, out: &mut impl Write) -> Result<(ValidationSummary, i32)> {
    let (_, summary) = load_jsonl::<f64>(input)?;
    write!(out, "{summary}").map_err(|e| Error::io("<stdout>", e))?;
    let code = if summary.all_valid() { 0 } else { 1 };
    Ok((summary, code))
}

pub fn write_score_rows<T: Scalar, W: Write>(rows: &[ScoreRow<T>], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(SCORE_HEADER.split(','))?;
    }
    w.flush().map_err(|e| Error::io("<scores>", e))?;
    Ok(())
}

pub fn read_score_rows<T: Scalar>(path: &Path) -> Result<Vec<ScoreRow<T>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        },
        _ => Error::Csv(e),
    })?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != SCORE_HEADER {
        return Err(Error::Config(format!(
            "{}: not a score file (header `{}`)",
            path.display(),
            header.join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Scores every valid record of `input` and writes the score CSV.
pub fn cmd_score(input: &Path, config: &RunConfig<f64>, output: &Path) -> Result<ValidationSummary> {
    let (batch, summary) = load_jsonl::<f64>(input)?;
    if batch.is_empty() {
        return Err(Error::NoRecords(input.display().to_string()));
    }
    let rows = score_batch(&batch, config)?;
    write_score_rows(&rows, create(output)?)?;
    Ok(summary)
}

/// Evaluates a score file into grid and grouped AUROC rows.
pub fn cmd_eval(scores: &Path, output: &Path) -> Result<EvalReport<f64>> {
    let rows = read_score_rows::<f64>(scores)?;
    if rows.is_empty() {
        return Err(Error::NoRecords(scores.display().to_string()));
    }
    let config = [("scores".to_string(), scores.display().to_string())].into();
    let report = EvalReport::from_score_rows(&rows, config);
    report.save(output)?;
    Ok(report)
}

/// Runs a sweep over the log file. Without explicit `values` the figure
/// grids are used (generation counts capped at the smallest `M`).
pub fn cmd_ablate(
    input: &Path,
    config: &RunConfig<f64>,
    sweep: Sweep,
    values: Option<&[f64]>,
    output: &Path,
) -> Result<EvalReport<f64>> {
    let (batch, _) = load_jsonl::<f64>(input)?;
    if batch.is_empty() {
        return Err(Error::NoRecords(input.display().to_string()));
    }
    let mut report = match sweep {
        Sweep::RougeThreshold => {
            let grid = values.map(<[f64]>::to_vec).unwrap_or_else(|| DEFAULT_ROUGE_GRID.to_vec());
            sweep_rouge_threshold(&batch, &grid, config)?
        }
        Sweep::NumGenerations => {
            let ks: Vec<usize> = match values {
                Some(v) => v
                    .iter()
                    .map(|&x| {
                        if x >= 1.0 && x.fract() == 0.0 {
                            Ok(x as usize)
                        } else {
                            Err(Error::Range(format!("generation count {x} is not a positive integer")))
                        }
                    })
                    .collect::<Result<_>>()?,
                None => {
                    let min_m = batch.min_samples().unwrap_or(1);
                    DEFAULT_GENERATION_GRID.iter().copied().filter(|&k| k <= min_m).collect()
                }
            };
            sweep_num_generations(&batch, &ks, config)?
        }
    };
    report.config.insert("input".into(), input.display().to_string());
    report.save(output)?;
    Ok(report)
}

pub fn cmd_synth(preset: &SynthPreset, output: &Path) -> Result<usize> {
    let batch = generate_batch(preset)?;
    let mut w = create(output)?;
    write_jsonl(&batch.records, &mut w)?;
    w.flush().map_err(|e| Error::io(output, e))?;
    Ok(batch.len())
}
