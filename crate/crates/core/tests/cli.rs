use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use trec::cli::{
    self, Cli, ABLATION_FILE, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, PREPARED_FILE,
    TRAIN_LOG_FILE,
};
use trec::config::RunConfig;
use trec::data::InteractionLog;
use trec::synthetic::planted_clusters;
use trec::training::load_checkpoint;

fn write_movielens(log: &InteractionLog, path: &Path) {
    let mut text = String::new();
    for r in &log.records {
        text.push_str(&format!("{}\t{}\t5\t{}\n", r.user, r.item, r.timestamp));
    }
    std::fs::write(path, text).unwrap();
}

/// A planted-cluster log on disk plus a config file pointing at it.
struct Fixture {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Fixture {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("u.data");
        write_movielens(&planted_clusters(50, 40, 2, 20, 4), &data);
        let config = dir.path().join("run.toml");
        let text = format!(
            "out_dir = {:?}\n\n[dataset]\npath = {:?}\n\n[model]\nd = 16\n\n[train]\nlearning_rate = 0.01\nepochs = 2\n{extra}",
            dir.path().join("runs"),
            data
        );
        std::fs::write(&config, text).unwrap();
        Self { dir, config }
    }

    fn args(&self, command: &str, extra: &[&str]) -> Vec<String> {
        let mut args = vec![
            "trec".to_string(),
            command.to_string(),
            "--config".into(),
            self.config.display().to_string(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        args
    }

    fn run(&self, command: &str, extra: &[&str]) -> trec::Result<(bool, String)> {
        let cli = Cli::try_parse_from(self.args(command, extra)).unwrap();
        let mut out = Vec::new();
        let ok = cli::run(cli, &mut out)?;
        Ok((ok, String::from_utf8(out).unwrap()))
    }

    fn config(&self, extra: &[&str]) -> RunConfig {
        let sets: Vec<&str> = extra.to_vec();
        RunConfig::resolve(Some(&self.config), &sets).unwrap()
    }
}

#[test]
fn prepare_prints_statistics_and_is_deterministic() {
    let fx = Fixture::new("");
    let (ok, out) = fx.run("prepare", &[]).unwrap();
    assert!(ok);
    assert!(
        out.starts_with("users\titems\tinteractions\tmedian\n50\t40\t1000\t20\n"),
        "{out}"
    );
    let run_dir = fx.config(&[]).run_dir();
    let first = std::fs::read(run_dir.join(PREPARED_FILE)).unwrap();
    fx.run("prepare", &[]).unwrap();
    assert_eq!(std::fs::read(run_dir.join(PREPARED_FILE)).unwrap(), first);
}

#[test]
fn missing_data_file_is_a_path_error() {
    let fx = Fixture::new("");
    let err = fx
        .run("prepare", &["--set", "dataset.path=/nonexistent/u.data"])
        .unwrap_err();
    assert!(err.to_string().contains("/nonexistent/u.data"), "{err}");
}

#[test]
fn train_writes_log_and_loadable_checkpoint() {
    let fx = Fixture::new("");
    let (ok, out) = fx.run("train", &["--set", "train.epochs=1"]).unwrap();
    assert!(ok);
    assert!(out.contains("mean seconds/epoch"), "{out}");
    let cfg = fx.config(&["train.epochs=1"]);
    let run_dir = cfg.run_dir();
    let log = std::fs::read_to_string(run_dir.join(TRAIN_LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(
        log.starts_with("epoch\tloss\tseconds\tval_recall@10\n1\t"),
        "{log}"
    );
    let ckpt = load_checkpoint(run_dir.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ckpt.epochs_completed, 1);
    assert_eq!(ckpt.hp, cfg.model);
    assert!(ckpt.optimizer.is_some());
}

#[test]
fn training_is_reproducible_under_a_fixed_seed() {
    let fx = Fixture::new("");
    let validation = |out: &str| {
        out.lines()
            .filter(|l| l.starts_with("validation"))
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let (_, a) = fx.run("train", &["--seed", "9"]).unwrap();
    let b_dir = fx.dir.path().join("other");
    let (_, b) = fx
        .run("train", &["--seed", "9", "--out", b_dir.to_str().unwrap()])
        .unwrap();
    assert_eq!(validation(&a).len(), 2);
    assert_eq!(validation(&a), validation(&b));
}

#[test]
fn evaluate_reports_both_cutoffs_and_reaches_the_planted_oracle() {
    let fx = Fixture::new("");
    fx.run("train", &["--set", "train.epochs=30"]).unwrap();
    let (ok, out) = fx.run("evaluate", &["--set", "train.epochs=30"]).unwrap();
    assert!(ok);
    let run_dir = fx.config(&["train.epochs=30"]).run_dir();
    let tsv = std::fs::read_to_string(run_dir.join(METRICS_FILE)).unwrap();
    assert_eq!(out, tsv);
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines[0], "split\tk\trecall\tndcg\tusers");
    assert_eq!(lines.len(), 3);
    let values: Vec<f64> = lines[1..]
        .iter()
        .flat_map(|l| {
            l.split('\t')
                .skip(2)
                .take(2)
                .map(|v| v.parse::<f64>().unwrap())
                .collect::<Vec<_>>()
        })
        .collect();
    assert_eq!(values.len(), 4);
    assert_eq!(values[0], 1.0, "{tsv}");
}

#[test]
fn evaluate_without_checkpoint_fails() {
    let fx = Fixture::new("");
    let err = fx
        .run("evaluate", &["--checkpoint", "/nonexistent/model.bin"])
        .unwrap_err();
    assert!(err.to_string().contains("/nonexistent/model.bin"), "{err}");
}

#[test]
fn evaluate_rejects_a_checkpoint_for_another_catalog() {
    let fx = Fixture::new("");
    fx.run("train", &["--set", "train.epochs=1"]).unwrap();
    let ckpt = fx
        .config(&["train.epochs=1"])
        .run_dir()
        .join(CHECKPOINT_FILE);
    let other = fx.dir.path().join("small.data");
    write_movielens(&planted_clusters(20, 16, 2, 8, 1), &other);
    let err = fx
        .run(
            "evaluate",
            &[
                "--checkpoint",
                ckpt.to_str().unwrap(),
                "--set",
                &format!("dataset.path={}", other.display()),
            ],
        )
        .unwrap_err();
    assert!(matches!(err, trec::Error::Dimension { .. }), "{err}");
}

#[test]
fn ablation_writes_eight_rows_in_order() {
    let fx = Fixture::new("");
    let (ok, out) = fx.run("ablate", &["--set", "train.epochs=1"]).unwrap();
    assert!(ok);
    let tsv = std::fs::read_to_string(fx.config(&["train.epochs=1"]).run_dir().join(ABLATION_FILE))
        .unwrap();
    assert!(out.ends_with(&tsv));
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 9);
    assert_eq!(
        lines[0],
        "architecture\trecall@10\tndcg@10\trecall@20\tndcg@20"
    );
    for (line, n) in lines[1..].iter().zip(1..) {
        assert!(line.starts_with(&format!("({n}) ")), "{line}");
    }
    let values = |line: &str| line.split_once('\t').unwrap().1.to_string();
    assert_eq!(values(lines[1]), values(lines[7]));
}

/// Accepts `limit` newline-terminated lines, then fails like a closed pipe.
struct FailAfter {
    limit: usize,
    lines: usize,
}

impl Write for FailAfter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        if self.lines >= self.limit {
            return Err(std::io::Error::new(
                std::io::ErrorKind::BrokenPipe,
                "interrupted",
            ));
        }
        self.lines += buf.iter().filter(|&&b| b == b'\n').count();
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn interrupted_ablation_keeps_finished_rows() {
    let fx = Fixture::new("");
    fx.run("prepare", &["--set", "train.epochs=1"]).unwrap();
    let cli = Cli::try_parse_from(fx.args("ablate", &["--set", "train.epochs=1"])).unwrap();
    // Header plus three rows reach the terminal; the fourth row fails.
    let mut out = FailAfter { limit: 4, lines: 0 };
    assert!(cli::run(cli, &mut out).is_err());
    let tsv = std::fs::read_to_string(fx.config(&["train.epochs=1"]).run_dir().join(ABLATION_FILE))
        .unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 4, "{tsv}");
    assert!(lines[3].starts_with("(3) w/o ITI\t"));
}

#[test]
fn sweep_trains_once_per_value() {
    let fx = Fixture::new("");
    let (ok, _) = fx
        .run("sweep", &["d", "8,16", "--set", "train.epochs=1"])
        .unwrap();
    assert!(ok);
    let path = fx.config(&["train.epochs=1"]).run_dir().join("sweep-d.tsv");
    let tsv = std::fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines[0], "param\tvalue\tk\trecall\tndcg");
    // One line per (value, k).
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("d\t8\t10\t"), "{}", lines[1]);
}

#[test]
fn invalid_sweep_parameter_is_a_usage_error() {
    let err = Cli::try_parse_from(["trec", "sweep", "gamma", "1,2"]).unwrap_err();
    assert_eq!(err.kind(), clap::error::ErrorKind::ValueValidation);
    let text = err.to_string();
    for name in ["q", "omega", "alpha", "beta", "d"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn gradcheck_passes() {
    let cli = Cli::try_parse_from(["trec", "gradcheck", "--trials", "3"]).unwrap();
    let mut out = Vec::new();
    assert!(cli::run(cli, &mut out).unwrap());
    let out = String::from_utf8(out).unwrap();
    assert!(out.contains("worst entry: "), "{out}");
    assert!(out.lines().last().unwrap().starts_with("PASS"), "{out}");
}

#[test]
fn resolved_config_reproduces_the_run_directory() {
    let fx = Fixture::new("");
    fx.run("prepare", &["--set", "model.omega=0.6", "--seed", "3"])
        .unwrap();
    let cfg = fx.config(&["model.omega=0.6", "train.seed=3"]);
    let written = cfg.run_dir().join(CONFIG_FILE);
    let again = RunConfig::resolve(Some(&written), &[] as &[&str]).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.run_dir(), cfg.run_dir());
}

#[test]
fn unknown_override_key_is_named() {
    let fx = Fixture::new("");
    let err = fx.run("prepare", &["--set", "model.gamma=2"]).unwrap_err();
    assert!(err.to_string().contains("gamma"), "{err}");
}
