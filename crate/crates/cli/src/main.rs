//! `relubridge` command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relubridge::exec::with_threads;
use relubridge::train::{train, TrainLog};
use relubridge::Execution;
use relubridge_cli::checkpoint::save_checkpoint;
use relubridge_cli::config::{ExperimentConfig, ExperimentKind};
use relubridge_cli::experiment::{build_network, load_dataset, run_experiment};
use relubridge_cli::report::{emit_report, parse_summary, write_plots};
use relubridge_cli::CliError;

#[derive(Parser)]
#[command(
    name = "relubridge",
    version,
    about = "Exact path geometry of ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Initialize a network and write `init.rpln`.
    Init(RunArgs),
    /// Train a network, writing checkpoints and `train_log.csv`.
    Train(RunArgs),
    /// Run the configured experiment and write its report.
    Analyze(RunArgs),
    /// Simulate random walk bridges and write their report.
    BridgeSim(RunArgs),
    /// Re-render plots from `summary.csv` in `--out` and print it.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf, Option<usize>), CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out.as_ref().map(|p| cfg.resolve(p)))
            .ok_or_else(|| {
                CliError::Config("no output directory: pass --out or set `out`".into())
            })?;
        let threads = self.threads.or(cfg.threads);
        Ok((cfg, out, threads))
    }
}

fn execution(threads: Option<usize>) -> Execution {
    match threads {
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn train_log_csv(log: &TrainLog) -> String {
    let mut s = String::from("step,epoch,loss,accuracy,kind\n");
    for (kind, recs) in [("batch", &log.steps), ("eval", &log.evals)] {
        for r in recs {
            writeln!(
                s,
                "{},{},{:e},{:e},{kind}",
                r.step, r.epoch, r.loss, r.accuracy
            )
            .unwrap();
        }
    }
    s
}

fn write_training(
    out: &Path,
    net: &relubridge::LayerGraph,
    log: &TrainLog,
) -> Result<(), CliError> {
    for (step, snap) in &log.checkpoints {
        save_checkpoint(snap, out.join(format!("ckpt_{step}.rpln")))?;
    }
    save_checkpoint(net, out.join("final.rpln"))?;
    let p = out.join("train_log.csv");
    std::fs::write(&p, train_log_csv(log)).map_err(|e| CliError::output(&p, e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Init(a) => {
            let (cfg, out, _) = a.load()?;
            let net = build_network(&cfg, 0)?;
            create_dir(&out)?;
            save_checkpoint(&net, out.join("init.rpln"))
        }
        Command::Train(a) => {
            let (cfg, out, threads) = a.load()?;
            let data = load_dataset(&cfg)?
                .ok_or_else(|| CliError::Config("training needs a labelled dataset".into()))?;
            let net = build_network(&cfg, 0)?;
            let (net, log) = with_threads(threads, || train(net, &data, &cfg.train_config()))?;
            create_dir(&out)?;
            write_training(&out, &net, &log)?;
            if let Some(e) = log.evals.last() {
                println!(
                    "step {} loss {:.6} accuracy {:.4}",
                    e.step, e.loss, e.accuracy
                );
            }
            Ok(())
        }
        Command::Analyze(a) => analyze(a, false),
        Command::BridgeSim(a) => analyze(a, true),
        Command::Report { out } => {
            let p = out.join("summary.csv");
            let text = std::fs::read_to_string(&p).map_err(|e| {
                CliError::Data(relubridge::Error::Io {
                    path: p.clone(),
                    source: e,
                })
            })?;
            let rows = parse_summary(&text)?;
            let plots = write_plots(&rows, &out)?;
            println!(
                "{:<28} {:>12} {:>14} {:>14} {:>8}",
                "series", "x", "mean", "std", "n"
            );
            for r in &rows {
                println!(
                    "{:<28} {:>12} {:>14.6e} {:>14.6e} {:>8}",
                    r.series, r.x, r.mean, r.std, r.n
                );
            }
            println!("{} plots written to {}", plots.len(), out.display());
            Ok(())
        }
    }
}

fn analyze(a: RunArgs, bridge: bool) -> Result<(), CliError> {
    let (cfg, out, threads) = a.load()?;
    if bridge != (cfg.kind == ExperimentKind::BridgeSim) {
        let want = if bridge {
            "bridge-sim"
        } else {
            "an analysis kind"
        };
        return Err(CliError::Config(format!(
            "config kind `{}` used where {want} is expected",
            cfg.kind.name()
        )));
    }
    let result = with_threads(threads, || run_experiment(&cfg, execution(threads)))?;
    emit_report(&result.report, &out)?;
    if let Some((net, log)) = &result.trained {
        write_training(&out, net, log)?;
    }
    for (k, v) in &result.report.meta {
        println!("{k} = {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
