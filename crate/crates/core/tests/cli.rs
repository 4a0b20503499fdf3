use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn uqscore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqscore"))
        .args(args)
        .output()
        .expect("spawn uqscore")
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, preset: &str, n: usize) -> PathBuf {
    let out = path(dir, "log.jsonl");
    let st = uqscore(&[
        "synth", "--preset", preset, "--n-records", &n.to_string(), "--m-samples", "5", "--seed", "4",
        "--output", s(&out),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    out
}

const FIXTURE: &str = r#"{"id":"r1","question":"Capital of France?","gold_answers":["Paris"],"greedy":{"text":"paris","token_logprobs":[-0.6931471805599453]},"samples":[{"text":"paris","token_logprobs":[-0.5108256237659907]},{"text":"Paris.","token_logprobs":[-1.2039728043259361]},{"text":"lyon","token_logprobs":[-2.3025850929940455]}],"equivalence":[[true,true,false],[true,true,false],[false,false,true]]}
{"id":"r2","question":"Capital of Italy?","gold_answers":["Rome"],"greedy":{"text":"milan","token_logprobs":[-0.916290731874155]},"samples":[{"text":"rome","token_logprobs":[-1.6094379124341003]},{"text":"milan","token_logprobs":[-1.6094379124341003]}],"equivalence":[[true,false],[false,true]]}

{"id":"r3","question":"Capital of Germany?","gold_answers":["Berlin"],"greedy":{"text":"berlin","token_logprobs":[-0.35667494393873245]},"samples":[{"text":"berlin","token_logprobs":[-0.2231435513142097]},{"text":"Berlin","token_logprobs":[-2.3025850929940455]}],"equivalence":[[true,true],[true,true]]}
"#;

#[test]
fn validate_reports_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth(&dir, "underconfident_greedy", 500);
    let ok = uqscore(&["validate", "--input", s(&log)]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("total: 500  valid: 500  invalid: 0"));

    let bad = path(&dir, "bad.jsonl");
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"id\":\"broken\"\n");
    std::fs::write(&bad, text).unwrap();
    let out = uqscore(&["validate", "--input", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("invalid: 1"));
}

#[test]
fn configuration_and_io_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth(&dir, "calibrated", 10);
    let out = path(&dir, "a.csv");
    let bogus = uqscore(&["ablate", "--input", s(&log), "--sweep", "bogus", "--output", s(&out)]);
    assert_eq!(bogus.status.code(), Some(2));
    let range = uqscore(&[
        "ablate", "--input", s(&log), "--sweep", "num-generations", "--values", "9", "--output", s(&out),
    ]);
    assert_eq!(range.status.code(), Some(2));
    let missing = uqscore(&["score", "--input", "/definitely/not/here.jsonl", "--output", s(&out)]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn sar_without_similarity_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = path(&dir, "fixture.jsonl");
    std::fs::write(&log, FIXTURE).unwrap();
    let out = uqscore(&["score", "--input", s(&log), "--method", "sar", "--output", s(&path(&dir, "x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn default_run_covers_every_method_and_aggregator() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth(&dir, "calibrated", 40);
    let scores = path(&dir, "scores.csv");
    let report = path(&dir, "report.csv");
    assert!(uqscore(&["score", "--input", s(&log), "--output", s(&scores)]).status.success());
    assert!(uqscore(&["eval", "--input", s(&scores), "--output", s(&report)]).status.success());

    let mut rdr = csv::Reader::from_path(&report).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>().join(","),
        "method,aggregator,label_source,group,param,param_value,n,auroc,defined"
    );
    let overall: Vec<_> = rdr
        .records()
        .map(Result::unwrap)
        .filter(|r| &r[3] == "all")
        .collect();
    assert_eq!(overall.len(), 20);
    assert!(overall.iter().all(|r| &r[6] == "40"));
    assert!(path(&dir, "report.json").exists());
}

#[test]
fn se_kld_rows_match_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let log = path(&dir, "fixture.jsonl");
    std::fs::write(&log, FIXTURE).unwrap();
    let scores = path(&dir, "scores.csv");
    let st = uqscore(&[
        "score", "--input", s(&log), "--method", "se", "--aggregator", "kld", "--output", s(&scores),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    // (id, entropy, gibbs, label prob, correct, in_sample)
    let expected = [
        ("r1", -(0.9f64.ln() + 0.1f64.ln()) / 2.0, 0.3, 0.5, true, true),
        ("r2", -0.2f64.ln(), 0.2, 0.4, false, true),
        ("r3", -0.9f64.ln(), 0.9, 0.7, true, true),
    ];
    let mut rdr = csv::Reader::from_path(&scores).unwrap();
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for (row, (id, h, g, p, correct, in_sample)) in rows.iter().zip(expected) {
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        assert_eq!(&row[0], id);
        assert_eq!((&row[1], &row[2], &row[3]), ("se", "kld", "greedy"));
        assert!((f(4) - h).abs() < 1e-12, "{id} entropy {}", f(4));
        assert!((f(5) - g).abs() < 1e-12, "{id} gibbs {}", f(5));
        assert!((f(6) - p).abs() < 1e-12, "{id} label prob {}", f(6));
        assert!((f(7) - g * (g / p).ln()).abs() < 1e-12, "{id} value {}", f(7));
        assert_eq!(row[8].parse::<bool>().unwrap(), in_sample);
        assert_eq!(row[9].parse::<bool>().unwrap(), correct);
    }
}

#[test]
fn flipped_orientation_negates_scores() {
    let dir = tempfile::tempdir().unwrap();
    let log = path(&dir, "fixture.jsonl");
    std::fs::write(&log, FIXTURE).unwrap();
    let read = |flip: bool| {
        let out = path(&dir, if flip { "f.csv" } else { "n.csv" });
        let mut args = vec!["score", "--input", s(&log), "--method", "lnpe", "--output", s(&out)];
        if flip {
            args.push("--flip-orientation");
        }
        assert!(uqscore(&args).status.success());
        csv::Reader::from_path(&out)
            .unwrap()
            .records()
            .map(|r| r.unwrap()[7].parse::<f64>().unwrap())
            .collect::<Vec<_>>()
    };
    let (plain, flipped) = (read(false), read(true));
    assert_eq!(plain.len(), flipped.len());
    assert!(plain.iter().zip(&flipped).all(|(a, b)| *a == -*b));
}

#[test]
fn ablation_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth(&dir, "noisy", 30);
    let out = path(&dir, "ablate.csv");
    let st = uqscore(&[
        "ablate", "--input", s(&log), "--method", "lnpe", "--aggregator", "kld", "--sweep",
        "num-generations", "--output", s(&out),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let rows: Vec<_> = csv::Reader::from_path(&out).unwrap().records().map(Result::unwrap).collect();
    let ks: Vec<_> = rows.iter().map(|r| r[5].to_string()).collect();
    assert_eq!(ks, ["1", "3", "5"]);
    assert!(rows.iter().all(|r| &r[4] == "num_generations"));
}
