//! File-based round trips through the public API and the CLI.

use std::path::Path;
use std::sync::Arc;

use clap::Parser;
use streamground::cli::{run, Cli};
use streamground::data::{generate_synthetic_dataset, Dataset, SyntheticSpec};
use streamground::encoding::ModelConfig;
use streamground::evaluation::{evaluate_dataset, evaluate_manifest, EvalOptions};
use streamground::streaming::StreamModel;
use streamground::training::{load_checkpoint, train};

fn cli(args: &[&str]) -> String {
    let parsed = Cli::try_parse_from(std::iter::once("streamground").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    run(&parsed, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        num_videos: 3,
        frames_per_video: 40,
        raw_dim: 6,
        event_length_range: (4, 10),
        words_per_query: 2,
        ..Default::default()
    }
}

fn small_config() -> ModelConfig {
    ModelConfig {
        d: 16,
        m_p: 4,
        m_h: 8,
        n: 3,
        heads: 2,
        frame_dim: 6,
        word_dim: 6,
        epochs: 2,
        batch_size: 4,
        ..ModelConfig::desk()
    }
}

#[test]
fn synth_twice_gives_identical_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        cli(&["synth", "--seed", "7", "--out", out.to_str().unwrap(), "--videos", "3"]);
    }
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_synthetic_dataset(&small_spec(), dir.path().join("data")).unwrap();
    let data = Dataset::load(&manifest).unwrap();
    let run = dir.path().join("run");
    let outcome = train(&data, &small_config(), Some(&run)).unwrap();
    let (net, store) = load_checkpoint(run.join("checkpoint")).unwrap();
    assert_eq!(net.config, outcome.net.config);
    // Stored values are f32, so the f32 models agree exactly.
    let stored = Arc::new(StreamModel::<f32>::new(net, &store));
    let live = Arc::new(StreamModel::<f32>::new(outcome.net, &outcome.store));
    let options = EvalOptions::default();
    assert_eq!(
        evaluate_dataset(&data, &stored, &options).unwrap(),
        evaluate_dataset(&data, &live, &options).unwrap()
    );
    let report_path = dir.path().join("report.csv");
    let report = evaluate_manifest(&manifest, run.join("checkpoint"), &options, Some(&report_path)).unwrap();
    assert_eq!(report.queries, data.annotation_count());
    let csv = std::fs::read_to_string(report_path).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("v0")).count(), report.queries * 6);
}

#[test]
fn cli_train_eval_stream() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).display().to_string();
    cli(&["synth", "--out", &d("data"), "--videos", "2", "--frames", "40", "--raw-dim", "6", "--words", "2", "--min-len", "4", "--max-len", "10"]);
    let manifest = d("data/manifest.jsonl");
    let trained = cli(&[
        "train", "--manifest", &manifest, "--out", &d("run"), "--epochs", "1", "--d", "16", "--m_h", "8", "--m_p", "4", "--n", "3",
        "--heads", "2",
    ]);
    assert!(trained.starts_with("trained "), "{trained}");
    let metrics = std::fs::read_to_string(d("run/metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,L_ord,L_pro,L_kd,total,lr\n"));
    let eval = cli(&["eval", "--manifest", &manifest, "--checkpoint", &d("run/checkpoint"), "--n", "1", "--m", "0.5"]);
    assert!(eval.contains("queries,4"), "{eval}");
    let streamed = cli(&[
        "stream", "--checkpoint", &d("run/checkpoint"), "--frames", &d("data/frames/v0000.tgf"), "--query", &d("data/queries/v0000_0.tgf"),
    ]);
    let lines: Vec<&str> = streamed.lines().collect();
    assert_eq!(lines[0], "T,s,m,e,warmup");
    assert_eq!(lines.len(), 41);
    assert!(lines[1].starts_with("0,") && lines[1].ends_with(",1"));
    assert!(lines[40].ends_with(",0"));
    let reference = cli(&[
        "stream", "--checkpoint", &d("run/checkpoint"), "--frames", &d("data/frames/v0000.tgf"), "--query", &d("data/queries/v0000_0.tgf"),
        "--reference",
    ]);
    assert_eq!(streamed, reference);
}

#[test]
fn cli_bench_reports_both_paths() {
    let out = cli(&["bench", "--steps", "4", "--warmup", "1", "--d", "16", "--m_h", "16", "--m_p", "4", "--n", "4", "--heads", "2", "--frame_dim", "8", "--word_dim", "8"]);
    for key in ["incremental_steps_per_s,", "reference_steps_per_s,", "speedup,"] {
        assert!(out.contains(key), "{out}");
    }
}

#[test]
fn cli_errors_name_the_key() {
    let parsed = Cli::try_parse_from(["streamground", "bench", "--m_h", "0"]).unwrap();
    let err = run(&parsed, &mut Vec::new()).unwrap_err();
    assert!(err.to_string().contains("m_h"), "{err}");
    let missing = Cli::try_parse_from(["streamground", "eval", "--manifest", "/nonexistent/m.jsonl", "--checkpoint", "/nonexistent"]).unwrap();
    assert!(run(&missing, &mut Vec::new()).is_err());
}
