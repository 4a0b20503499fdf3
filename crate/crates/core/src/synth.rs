//! Synthetic generation logs with a known answerability bit per record.
//!
//! Each record's greedy answer is correct (ROUGE-L ≥ 0.5 against a gold
//! answer) exactly when the hidden bit is set. Presets differ in how much the
//! sampled answers and the greedy probability reveal about that bit.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation_log::{GenerationRecord, RecordBatch, TokenRelevance, TokenScoredText};
use crate::labeling::correctness_label;
use crate::similarity::rouge_l;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    /// Sample entropy tracks correctness; the greedy probability tracks the ensemble.
    Calibrated,
    /// Samples carry little signal; the greedy answer is much less probable
    /// than the ensemble exactly when it is wrong.
    UnderconfidentGreedy,
    /// The greedy answer is more probable than the ensemble when it is wrong.
    OverconfidentGreedy,
    /// Weak signal everywhere; no entailment matrix or token relevance is emitted.
    Noisy,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [
        PresetName::Calibrated,
        PresetName::UnderconfidentGreedy,
        PresetName::OverconfidentGreedy,
        PresetName::Noisy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Calibrated => "calibrated",
            PresetName::UnderconfidentGreedy => "underconfident_greedy",
            PresetName::OverconfidentGreedy => "overconfident_greedy",
            PresetName::Noisy => "noisy",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthPreset {
    pub name: PresetName,
    pub n_records: usize,
    pub m_samples: usize,
    pub seed: u64,
    pub answer_vocab_size: usize,
    /// Typical answer length in words.
    pub mean_length: usize,
}

impl SynthPreset {
    pub fn new(name: PresetName, n_records: usize, m_samples: usize, seed: u64) -> Self {
        Self {
            name,
            n_records,
            m_samples,
            seed,
            answer_vocab_size: 400,
            mean_length: 3,
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_records < 2 {
            return Err(Error::Generation(format!(
                "need at least 2 records to hold both outcomes, got {}",
                self.n_records
            )));
        }
        if self.m_samples == 0 {
            return Err(Error::Generation("m_samples must be at least 1".into()));
        }
        if self.mean_length == 0 {
            return Err(Error::Generation("mean_length must be at least 1".into()));
        }
        let needed = 4 * (self.mean_length + 2);
        if self.answer_vocab_size < needed {
            return Err(Error::Generation(format!(
                "answer_vocab_size {} too small for mean_length {} (need ≥ {needed})",
                self.answer_vocab_size, self.mean_length
            )));
        }
        Ok(())
    }
}

/// Distribution parameters for one class (answerable or not).
#[derive(Clone, Copy, Debug)]
struct ClassProfile {
    /// Mean and spread of each sample's length-normalised log-probability.
    sample_logprob: (f64, f64),
    /// Range for the per-record chance that a sample repeats the dominant answer.
    focus: (f64, f64),
    /// `ln P_𝒢 − ln P̃` for the greedy answer.
    greedy_offset: (f64, f64),
}

#[derive(Clone, Copy, Debug)]
struct Profile {
    answerable: ClassProfile,
    unanswerable: ClassProfile,
    emit_equivalence: bool,
    emit_relevance: bool,
}

impl Profile {
    fn for_preset(name: PresetName) -> Self {
        let class = |sample_logprob, focus, greedy_offset| ClassProfile {
            sample_logprob,
            focus,
            greedy_offset,
        };
        match name {
            PresetName::Calibrated => Profile {
                answerable: class((-0.2, 0.12), (0.7, 1.0), (0.0, 0.1)),
                unanswerable: class((-0.8, 0.35), (0.1, 0.5), (0.0, 0.1)),
                emit_equivalence: true,
                emit_relevance: true,
            },
            PresetName::UnderconfidentGreedy => Profile {
                answerable: class((-0.5, 0.3), (0.3, 0.9), (0.1, 0.3)),
                unanswerable: class((-0.6, 0.3), (0.3, 0.9), (-0.6, 0.5)),
                emit_equivalence: true,
                emit_relevance: true,
            },
            PresetName::OverconfidentGreedy => Profile {
                answerable: class((-0.3, 0.2), (0.5, 1.0), (-0.3, 0.2)),
                unanswerable: class((-0.7, 0.3), (0.2, 0.6), (0.3, 0.2)),
                emit_equivalence: true,
                emit_relevance: true,
            },
            PresetName::Noisy => Profile {
                answerable: class((-0.5, 0.4), (0.2, 0.9), (0.0, 0.4)),
                unanswerable: class((-0.7, 0.4), (0.2, 0.9), (0.0, 0.4)),
                emit_equivalence: false,
                emit_relevance: false,
            },
        }
    }
}

const MAX_LOGPROB: f64 = -0.005;
const MIN_LOGPROB: f64 = -6.0;
const WRONG_ANSWERS: usize = 4;

fn normal(rng: &mut ChaCha8Rng, (mean, sd): (f64, f64)) -> f64 {
    Normal::new(mean, sd).expect("finite parameters").sample(rng)
}

/// Per-token log-probabilities with mean `target`, all ≤ 0.
fn token_logprobs(rng: &mut ChaCha8Rng, len: usize, target: f64) -> Vec<f64> {
    let mut noise: Vec<f64> = (0..len).map(|_| normal(rng, (0.0, 0.35))).collect();
    let centre = noise.iter().sum::<f64>() / len as f64;
    noise.iter_mut().for_each(|e| *e -= centre);
    let peak = noise.iter().copied().fold(0.0, f64::max);
    let scale = if peak > 0.0 { (-target / peak).min(1.0) } else { 1.0 };
    noise.iter().map(|e| (target + scale * e).min(0.0)).collect()
}

fn answer(rng: &mut ChaCha8Rng, words: &[String], target: f64, emit_relevance: bool) -> (TokenScoredText<f64>, Option<Vec<f64>>) {
    let tokens: Vec<String> = words
        .iter()
        .enumerate()
        .map(|(i, w)| if i == 0 { w.clone() } else { format!(" {w}") })
        .collect();
    let lps = token_logprobs(rng, words.len(), target);
    let relevance = emit_relevance.then(|| (0..words.len()).map(|_| rng.random_range(0.05..=1.0)).collect());
    (
        TokenScoredText::new(words.join(" "), lps).with_tokens(tokens),
        relevance,
    )
}

fn draw_words(rng: &mut ChaCha8Rng, pool: &[String], n: usize) -> Vec<String> {
    pool.choose_multiple(rng, n).cloned().collect()
}

fn generate_record(
    rng: &mut ChaCha8Rng,
    preset: &SynthPreset,
    profile: &Profile,
    vocab: &[String],
    index: usize,
    answerable: bool,
) -> Result<GenerationRecord<f64>> {
    let class = if answerable { profile.answerable } else { profile.unanswerable };
    let len_hi = preset.mean_length + 1;

    let mut shuffled = vocab.to_vec();
    shuffled.shuffle(rng);
    let gold_len = rng.random_range(2..=len_hi.max(2));
    let gold: Vec<String> = shuffled.drain(..gold_len).collect();
    let mut gold_answers = vec![gold.join(" ")];
    if rng.random_bool(0.3) {
        let alias: Vec<String> = shuffled.drain(..2).collect();
        gold_answers.push(alias.join(" "));
    }
    let pool = shuffled;

    let correct_text = gold.clone();
    let wrong: Vec<Vec<String>> = (0..WRONG_ANSWERS)
        .map(|_| {
            let n = rng.random_range(1..=len_hi);
            draw_words(rng, &pool, n)
        })
        .collect();

    let greedy_words = if answerable {
        let mut w = correct_text.clone();
        if rng.random_bool(0.3) {
            w.push(pool.choose(rng).expect("nonempty pool").clone());
        }
        w
    } else {
        let mut w = wrong[0].clone();
        if w.len() >= 3 && rng.random_bool(0.3) {
            let at = rng.random_range(0..=w.len());
            w.insert(at, gold.choose(rng).expect("nonempty gold").clone());
        }
        w
    };

    let (dominant, others): (Vec<String>, Vec<Vec<String>>) = if answerable {
        (correct_text.clone(), wrong.clone())
    } else {
        let mut others = wrong[1..].to_vec();
        others.push(correct_text.clone());
        (wrong[0].clone(), others)
    };

    let focus = rng.random_range(class.focus.0..=class.focus.1);
    let mut sample_words = Vec::with_capacity(preset.m_samples);
    let mut sample_targets = Vec::with_capacity(preset.m_samples);
    for _ in 0..preset.m_samples {
        let words = if rng.random_bool(focus) {
            dominant.clone()
        } else {
            others.choose(rng).expect("nonempty alternatives").clone()
        };
        sample_words.push(words);
        sample_targets.push(normal(rng, class.sample_logprob).clamp(MIN_LOGPROB, MAX_LOGPROB));
    }
    let log_gibbs = sample_targets.iter().sum::<f64>() / preset.m_samples as f64;
    let greedy_target = (log_gibbs + normal(rng, class.greedy_offset)).clamp(MIN_LOGPROB, MAX_LOGPROB);

    let (greedy, greedy_rel) = answer(rng, &greedy_words, greedy_target, profile.emit_relevance);
    let mut samples = Vec::with_capacity(preset.m_samples);
    let mut sample_rel = Vec::with_capacity(preset.m_samples);
    for (words, &target) in sample_words.iter().zip(&sample_targets) {
        let (s, rel) = answer(rng, words, target, profile.emit_relevance);
        samples.push(s);
        sample_rel.extend(rel);
    }

    let m = samples.len();
    let equivalence = profile.emit_equivalence.then(|| {
        (0..m)
            .map(|i| (0..m).map(|j| sample_words[i] == sample_words[j]).collect())
            .collect()
    });
    let sentence_similarity = Some(
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| rouge_l::<f64>(&samples[i].text, &samples[j].text).value())
                    .collect()
            })
            .collect(),
    );
    let token_relevance = greedy_rel.map(|greedy| TokenRelevance {
        greedy,
        samples: sample_rel,
    });

    let id = format!("{}-{index:05}", preset.name);
    if correctness_label(&greedy.text, &gold_answers, 0.5) != answerable {
        return Err(Error::Generation(format!(
            "record {id}: greedy correctness disagrees with the answerability bit"
        )));
    }
    let meta = [
        ("answerable", serde_json::json!(answerable)),
        ("preset", serde_json::json!(preset.name.as_str())),
        ("model", serde_json::json!("synthetic")),
        ("sampling", serde_json::json!("synthetic")),
        ("num_samples", serde_json::json!(preset.m_samples)),
        ("temperature", serde_json::json!(0.5)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    Ok(GenerationRecord {
        id,
        question: format!("synthetic question {index}"),
        gold_answers,
        greedy,
        samples,
        equivalence,
        token_relevance,
        sentence_similarity,
        meta,
    })
}

/// Deterministic synthetic batch; the first record is answerable and the second is not.
pub fn generate_batch(preset: &SynthPreset) -> Result<RecordBatch<f64>> {
    preset.check()?;
    let profile = Profile::for_preset(preset.name);
    let vocab: Vec<String> = (0..preset.answer_vocab_size).map(|i| format!("w{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(preset.seed);
    let records = (0..preset.n_records)
        .map(|i| {
            let answerable = match i {
                0 => true,
                1 => false,
                _ => rng.random_bool(0.5),
            };
            generate_record(&mut rng, preset, &profile, &vocab, i, answerable)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecordBatch::new(
        records,
        format!("synth:{}:{}", preset.name, preset.seed),
    ))
}

/// The hidden answerability bit stored in `meta`.
pub fn answerable(record: &GenerationRecord<f64>) -> Option<bool> {
    record.meta.get("answerable").and_then(|v| v.as_bool())
}
