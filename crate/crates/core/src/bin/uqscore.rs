use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uqscore::cli::{cmd_ablate, cmd_eval, cmd_score, cmd_synth, cmd_validate, Sweep};
use uqscore::labeling::LabelThresholds;
use uqscore::synth::{PresetName, SynthPreset};
use uqscore::{Aggregator, Error, LabelSource, Method, Orientation, RunConfig};

/// Label-confidence-aware uncertainty scoring for generation logs
#[derive(Parser, Debug)]
#[command(name = "uqscore", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a JSON Lines log; exits 1 if any line is invalid
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Score every record and write the per-configuration score CSV
    Score {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compute AUROC rows (overall and by in-sample membership) from a score CSV
    Eval {
        /// Score file written by `score`
        #[arg(long)]
        input: PathBuf,
        /// Report CSV; a .json twin is written alongside
        #[arg(long)]
        output: PathBuf,
    },
    /// Sweep the ROUGE-L threshold or the number of generations
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// rouge-threshold or num-generations
        #[arg(long)]
        sweep: Sweep,
        /// Sweep grid (defaults: 0.1,0.3,0.5,0.7,0.9 or 1,3,...,15 up to the smallest M)
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a synthetic log with known answerability
    Synth {
        #[arg(long, default_value = "calibrated")]
        preset: PresetName,
        #[arg(long, default_value_t = 100)]
        n_records: usize,
        #[arg(long, default_value_t = 5)]
        m_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        vocab_size: usize,
        #[arg(long, default_value_t = 3)]
        mean_length: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON Lines generation log
    #[arg(long)]
    input: PathBuf,
    /// Entropy backbone (repeatable): pe, lnpe, se, tokensar, sar
    #[arg(long = "method")]
    methods: Vec<Method>,
    /// Aggregator (repeatable): none, kld, rkld, sad, meankl
    #[arg(long = "aggregator")]
    aggregators: Vec<Aggregator>,
    /// Label source (repeatable): greedy, sample_max, cluster_sample_max, random, merge
    #[arg(long = "label-source")]
    label_sources: Vec<LabelSource>,
    #[arg(long, default_value_t = 0.5)]
    rouge_threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    membership_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    cluster_threshold: f64,
    #[arg(long, default_value_t = 10.0)]
    sar_t: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    /// Negate every score (higher = more confident)
    #[arg(long)]
    flip_orientation: bool,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        let defaults = RunConfig::default();
        RunConfig {
            methods: pick(&self.methods, defaults.methods),
            aggregators: pick(&self.aggregators, defaults.aggregators),
            label_sources: pick(&self.label_sources, defaults.label_sources),
            thresholds: LabelThresholds {
                tau_rouge: self.rouge_threshold,
                tau_mem: self.membership_threshold,
            },
            tau_cluster: self.cluster_threshold,
            sar_t: self.sar_t,
            seed: self.seed,
            orientation: if self.flip_orientation {
                Orientation::Flipped
            } else {
                Orientation::HigherIsUncertain
            },
            jobs: self.jobs,
        }
        .canonicalize()
    }
}

fn pick<V: Clone>(given: &[V], fallback: Vec<V>) -> Vec<V> {
    if given.is_empty() {
        fallback
    } else {
        given.to_vec()
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Validate { input } => {
            let (_, code) = cmd_validate(&input, &mut std::io::stdout().lock())?;
            Ok(code)
        }
        Command::Score { run, output } => {
            let summary = cmd_score(&run.input, &run.config(), &output)?;
            if !summary.all_valid() {
                eprintln!("warning: skipped {} invalid record(s)", summary.invalid);
            }
            eprintln!("scored {} record(s) -> {}", summary.valid, output.display());
            Ok(0)
        }
        Command::Eval { input, output } => {
            let report = cmd_eval(&input, &output)?;
            print!("{}", report.summary());
            if report.undefined_count() > 0 {
                eprintln!(
                    "warning: {} row(s) have a single class and no defined AUROC",
                    report.undefined_count()
                );
            }
            Ok(0)
        }
        Command::Ablate { run, sweep, values, output } => {
            let report = cmd_ablate(&run.input, &run.config(), sweep, values.as_deref(), &output)?;
            print!("{}", report.summary());
            Ok(0)
        }
        Command::Synth {
            preset,
            n_records,
            m_samples,
            seed,
            vocab_size,
            mean_length,
            output,
        } => {
            let spec = SynthPreset {
                name: preset,
                n_records,
                m_samples,
                seed,
                answer_vocab_size: vocab_size,
                mean_length,
            };
            let n = cmd_synth(&spec, &output)?;
            eprintln!("wrote {n} record(s) -> {}", output.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .without_time()
        .init();

    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
