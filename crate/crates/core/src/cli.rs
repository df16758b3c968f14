//! The `trec` command line.
//!
//! Each command resolves a [`RunConfig`], works inside `out_dir/<hash>` and
//! writes the resolved config there as `config.toml`, so the same inputs
//! always land in the same directory and a rerun overwrites it.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{
    chronological_split, load, read_prepared, write_prepared, Catalog, DatasetStats, Split,
    SplitDataset,
};
use crate::error::{Error, Result};
use crate::eval::{
    ablation_header, evaluate, run_ablation_matrix, sweep, sweep_table, AblationRow, SweepParam,
    METRICS_HEADER, SWEEP_HEADER,
};
use crate::io::write_atomic;
use crate::model::ModelParams;
use crate::training::{
    check_model_gradients, load_checkpoint, save_checkpoint, train_epochs, training_log,
    EpochStats, GradCheckProblem, OptimizerState, GRADCHECK_TOLERANCE,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const PREPARED_FILE: &str = "prepared.tsv";
pub const STATS_FILE: &str = "stats.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const VALIDATION_FILE: &str = "validation.tsv";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const ABLATION_FILE: &str = "ablation.tsv";

#[derive(Debug, Parser)]
#[command(name = "trec", version, about = "Trend-aware sequential recommender")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    /// TOML run configuration; defaults are used for missing keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Dotted config override, e.g. `--set model.d=120`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::resolve(self.config.as_deref(), &self.set)?;
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, split and cache the dataset; print its statistics.
    Prepare(Common),
    /// Train the model, writing a per-epoch log and a checkpoint.
    Train(Common),
    /// Report test metrics of a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to the run directory's checkpoint.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate the eight ablation architectures.
    Ablate(Common),
    /// Retrain for each value of one hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of q, omega, alpha, beta, d.
        param: SweepParam,
        /// Comma-separated values, e.g. 20,40,80,120.
        #[arg(value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Compare analytic and finite-difference gradients of the full loss.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds to check, starting at `train.seed`.
        #[arg(long, default_value_t = 20)]
        trials: u64,
    },
}

/// Runs one command. `Ok(false)` means it ran but a check failed.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    match cli.command {
        Command::Prepare(common) => {
            let cfg = common.resolve()?;
            let run_dir = start_run(&cfg)?;
            prepare(&cfg, &run_dir, out)?;
            Ok(true)
        }
        Command::Train(common) => cmd_train(&common.resolve()?, out).map(|_| true),
        Command::Evaluate { common, checkpoint } => {
            cmd_evaluate(&common.resolve()?, checkpoint.as_deref(), out).map(|_| true)
        }
        Command::Ablate(common) => cmd_ablate(&common.resolve()?, out).map(|_| true),
        Command::Sweep {
            common,
            param,
            values,
        } => cmd_sweep(&common.resolve()?, param, &values, out).map(|_| true),
        Command::Gradcheck { common, trials } => cmd_gradcheck(&common.resolve()?, trials, out),
    }
}

/// Creates the run directory and writes the resolved config into it.
pub fn start_run(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_atomic(&dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    Ok(dir)
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

/// Loads and splits the raw log, writes the cache and statistics.
pub fn prepare(
    cfg: &RunConfig,
    run_dir: &Path,
    out: &mut dyn Write,
) -> Result<(Catalog, SplitDataset)> {
    let log = load(cfg.dataset.format, &cfg.dataset.path)?;
    let (catalog, ds) = chronological_split(&log, cfg.split)?;
    write_prepared(run_dir.join(PREPARED_FILE), &catalog, &ds)?;
    let stats = DatasetStats::of(&ds).to_tsv();
    write_atomic(&run_dir.join(STATS_FILE), stats.as_bytes())?;
    write!(out, "{stats}").map_err(io_err)?;
    Ok((catalog, ds))
}

/// Reads the run's cache, preparing it first when absent.
pub fn prepared(cfg: &RunConfig, run_dir: &Path, out: &mut dyn Write) -> Result<SplitDataset> {
    let path = run_dir.join(PREPARED_FILE);
    if path.exists() {
        Ok(read_prepared(&path)?.1)
    } else {
        Ok(prepare(cfg, run_dir, out)?.1)
    }
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<(ModelParams, Vec<EpochStats>)> {
    let run_dir = start_run(cfg)?;
    let ds = prepared(cfg, &run_dir, out)?;
    let hp = cfg.effective_hyperparams();
    let mut params = ModelParams::init(ds.num_users(), ds.num_items(), &hp, cfg.train.seed)?;
    let mut opt = OptimizerState::new(cfg.train.optimizer, &params.store);
    let log_path = run_dir.join(TRAIN_LOG_FILE);
    let ckpt_path = run_dir.join(CHECKPOINT_FILE);
    let mut history: Vec<EpochStats> = Vec::new();
    // Per-epoch checkpoints carry parameters only; the final one below also
    // stores the optimizer moments.
    train_epochs(
        &ds,
        &mut params,
        &hp,
        &cfg.train,
        &mut opt,
        0,
        &mut |stats, params| {
            let val = stats
                .val_recall_at_10
                .map_or(String::new(), |r| format!("  val R@10 {r:.4}"));
            writeln!(
                out,
                "epoch {:>3}  loss {:.5}  {:.1}s{val}",
                stats.epoch + 1,
                stats.mean_loss,
                stats.seconds
            )
            .map_err(io_err)?;
            history.push(stats.clone());
            write_atomic(&log_path, training_log(&history).as_bytes())?;
            save_checkpoint(&ckpt_path, params, &hp, stats.epoch + 1, None)
        },
    )?;
    save_checkpoint(&ckpt_path, &params, &hp, history.len(), Some(&opt))?;

    let mean_seconds = history.iter().map(|s| s.seconds).sum::<f64>() / history.len() as f64;
    writeln!(out, "mean seconds/epoch\t{mean_seconds:.3}").map_err(io_err)?;
    let report = evaluate(&ds, &params, &hp, Split::Validation, &cfg.eval.ks)?;
    write_atomic(&run_dir.join(VALIDATION_FILE), report.to_tsv().as_bytes())?;
    write!(out, "{}", report.to_tsv()).map_err(io_err)?;
    writeln!(out, "wrote {}", ckpt_path.display()).map_err(io_err)?;
    Ok((params, history))
}

pub fn cmd_evaluate(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    out: &mut dyn Write,
) -> Result<crate::eval::MetricsReport> {
    let run_dir = start_run(cfg)?;
    let path = checkpoint.map_or_else(|| run_dir.join(CHECKPOINT_FILE), Path::to_path_buf);
    let ckpt = load_checkpoint(&path)?;
    let ds = prepared(cfg, &run_dir, out)?;
    ckpt.params
        .check_compatible(&ckpt.hp, ds.num_users(), ds.num_items())?;
    let report = evaluate(&ds, &ckpt.params, &ckpt.hp, Split::Test, &cfg.eval.ks)?;
    let tsv = report.to_tsv();
    debug_assert!(tsv.starts_with(METRICS_HEADER));
    write_atomic(&run_dir.join(METRICS_FILE), tsv.as_bytes())?;
    write!(out, "{tsv}").map_err(io_err)?;
    Ok(report)
}

/// Trains the eight architectures on the run's base model. The TSV is
/// rewritten after every row, so an interrupted run keeps its finished rows.
pub fn cmd_ablate(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<AblationRow>> {
    let run_dir = start_run(cfg)?;
    let ds = prepared(cfg, &run_dir, out)?;
    let exp = crate::eval::Experiment {
        hp: cfg.model.clone(),
        ..cfg.experiment()
    };
    let path = run_dir.join(ABLATION_FILE);
    let header = ablation_header(&cfg.eval.ks);
    writeln!(out, "{header}").map_err(io_err)?;
    let mut text = format!("{header}\n");
    write_atomic(&path, text.as_bytes())?;
    run_ablation_matrix(&ds, &exp, &mut |row| {
        let line = row.tsv_line(&cfg.eval.ks);
        writeln!(out, "{line}").map_err(io_err)?;
        out.flush().map_err(io_err)?;
        text.push_str(&line);
        text.push('\n');
        write_atomic(&path, text.as_bytes())
    })
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    param: SweepParam,
    values: &[f64],
    out: &mut dyn Write,
) -> Result<Vec<crate::eval::SweepRow>> {
    let run_dir = start_run(cfg)?;
    let ds = prepared(cfg, &run_dir, out)?;
    let path = run_dir.join(format!("sweep-{}.tsv", param.name()));
    let mut done = Vec::new();
    writeln!(out, "{SWEEP_HEADER}").map_err(io_err)?;
    sweep(&ds, &cfg.experiment(), param, values, &mut |batch| {
        for row in batch {
            writeln!(out, "{}", row.tsv_line()).map_err(io_err)?;
        }
        done.extend_from_slice(batch);
        write_atomic(&path, sweep_table(&done).as_bytes())
    })
}

/// Full-model gradient check over `trials` consecutive seeds.
pub fn cmd_gradcheck(cfg: &RunConfig, trials: u64, out: &mut dyn Write) -> Result<bool> {
    if trials == 0 {
        return Err(Error::Config("gradcheck needs at least one trial".into()));
    }
    let mut worst: Option<crate::training::ModelCheck> = None;
    for seed in cfg.train.seed..cfg.train.seed + trials {
        let problem = GradCheckProblem::small(seed)?;
        let check = check_model_gradients(&problem, seed)?;
        writeln!(
            out,
            "seed {seed}\tmax relative error {:.3e}\t{} entries",
            check.report.max_rel_error, check.report.entries_checked
        )
        .map_err(io_err)?;
        if worst
            .as_ref()
            .is_none_or(|w| check.report.max_rel_error > w.report.max_rel_error)
        {
            worst = Some(check);
        }
    }
    let worst = worst.expect("at least one trial ran");
    if let Some(entry) = &worst.report.worst {
        writeln!(
            out,
            "worst entry: {}[{}, {}] (seed {}) analytic {:.9e} numeric {:.9e}",
            entry.param, entry.row, entry.col, worst.seed, entry.analytic, entry.numeric
        )
        .map_err(io_err)?;
    }
    let passed = worst.passed();
    writeln!(
        out,
        "{}: max relative error {:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})",
        if passed { "PASS" } else { "FAIL" },
        worst.report.max_rel_error
    )
    .map_err(io_err)?;
    Ok(passed)
}
