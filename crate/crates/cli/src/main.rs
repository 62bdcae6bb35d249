use std::path::{Path, PathBuf};
use std::process::ExitCode;

use attenprune::harness::{emit_reports, prepare, run_method, train_only, Overrides, RunConfig};
use attenprune::nn::checkpoint;
use attenprune::scheduler::compact_model;
use attenprune::{Criterion, Error, ExperimentLog, Method, Model, PruneThreshold};
use clap::{Args, Parser, Subcommand};

/// Filter pruning by gradual attenuation.
#[derive(Parser, Debug)]
#[command(name = "attenprune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Warm-up training; writes `<out>/warmup.ckpt`.
    Train(RunArgs),
    /// Runs one pruning method; writes the log, final checkpoint and reports.
    Prune(RunArgs),
    /// Runs attenuation and hard pruning from the same initial model.
    Compare(RunArgs),
    /// Regenerates reports from stored logs.
    Report {
        /// Experiment log (JSONL); may be repeated.
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Physically removes pruned filters from a checkpoint.
    Compact {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run config; the built-in desk setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    /// l1, l2, std or cosine.
    #[arg(long)]
    criterion: Option<Criterion>,
    /// Attenuation factor.
    #[arg(long)]
    fa: Option<f64>,
    /// Growth of k per round.
    #[arg(long)]
    a: Option<usize>,
    /// Accuracy-drop tolerance.
    #[arg(long)]
    t1: Option<f64>,
    /// Absolute L1 prune threshold.
    #[arg(long, conflicts_with = "t2_relative")]
    t2: Option<f64>,
    /// Prune threshold as a fraction of each layer's mean L1 after warm-up.
    #[arg(long)]
    t2_relative: Option<f64>,
    /// Fraction of all filters to prune.
    #[arg(long)]
    target: Option<f64>,
    /// Initial model checkpoint (`prune`) instead of a fresh initialisation.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self, forced: Option<Method>) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::desk(),
        };
        if forced.is_some() && self.method.is_some() {
            return Err(Error::Config("--method does not apply to this command".into()));
        }
        let method = self.method.or(forced).unwrap_or(config.method);
        if method == Method::Hard && self.fa.is_some() {
            return Err(Error::Config("--fa has no effect with --method hard".into()));
        }
        let t2 = match (self.t2, self.t2_relative) {
            (Some(v), _) => Some(PruneThreshold::Absolute(v)),
            (None, Some(v)) => Some(PruneThreshold::Relative(v)),
            _ => None,
        };
        config.apply(&Overrides {
            seed: self.seed,
            output_dir: self.out.clone(),
            method: Some(method),
            criterion: self.criterion,
            attenuation_factor: self.fa,
            a: self.a,
            t1: self.t1,
            t2,
            target_prune_fraction: self.target,
        });
        config.validate()?;
        Ok(config)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Format { .. } | Error::Data(_) | Error::Label { .. } | Error::Io { .. } => 2,
        _ => 3,
    }
}

fn save_logs(out: &Path, logs: &[ExperimentLog]) -> Result<(), Error> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    for log in logs {
        let path = out.join(format!("{}.jsonl", log.label()));
        log.save(&path)?;
        println!("log: {}", path.display());
    }
    let reports = emit_reports(logs, &out.join("reports"))?;
    println!("reports: {} files in {}", reports.len(), out.join("reports").display());
    Ok(())
}

fn print_summary(log: &ExperimentLog) {
    let s = &log.summary;
    println!(
        "{}: {:?}, rounds {}, pruned {}/{} ({:.1}%), baseline {:.4}, final {:.4}, test {}",
        log.label(),
        s.outcome,
        s.rounds,
        s.pruned_count,
        log.header.total_filters,
        100.0 * s.pruned_fraction,
        log.header.baseline_accuracy,
        s.final_accuracy,
        s.test_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}")),
    );
    println!(
        "  params {} -> {} ({:.1}% fewer), MACs {} -> {} ({:.1}% fewer)",
        s.compaction.params_before,
        s.compaction.params_after,
        100.0 * s.compaction.param_reduction,
        s.compaction.macs_before,
        s.compaction.macs_after,
        100.0 * s.compaction.mac_reduction,
    );
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(args) => {
            if args.checkpoint.is_some() {
                return Err(Error::Config("train writes <out>/warmup.ckpt; --checkpoint is not used".into()));
            }
            let config = args.resolve(None)?;
            let prepared = prepare(&config)?;
            let (model, epochs, acc) = train_only(&config, &prepared)?;
            let path = config.output_dir.join("warmup.ckpt");
            std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::Io {
                path: config.output_dir.clone(),
                source: e,
            })?;
            checkpoint::save(&model, &path)?;
            println!("trained {epochs} epochs, validation accuracy {acc:.4}");
            println!("checkpoint: {}", path.display());
        }
        Command::Prune(args) => {
            let config = args.resolve(None)?;
            let mut prepared = prepare(&config)?;
            if let Some(path) = &args.checkpoint {
                let model: Model<f32> = checkpoint::load(path)?;
                if model.input_shape() != prepared.model.input_shape() || model.pruned_count() != 0 {
                    return Err(Error::Config(format!(
                        "{} does not fit the configured data or is already pruned",
                        path.display()
                    )));
                }
                prepared.model = model;
            }
            let (model, log) = run_method(&config, config.method, &prepared)?;
            print_summary(&log);
            save_logs(&config.output_dir, std::slice::from_ref(&log))?;
            let path = config.output_dir.join(format!("{}.ckpt", log.label()));
            checkpoint::save(&model, &path)?;
            println!("checkpoint: {}", path.display());
        }
        Command::Compare(args) => {
            if args.checkpoint.is_some() {
                return Err(Error::Config("compare starts from a fresh model; --checkpoint is not used".into()));
            }
            let config = args.resolve(Some(Method::Attenuation))?;
            let logs = attenprune::harness::compare(&config)?;
            for log in &logs {
                print_summary(log);
            }
            save_logs(&config.output_dir, &logs)?;
        }
        Command::Report { logs, out } => {
            let logs = logs.iter().map(|p| ExperimentLog::load(p)).collect::<Result<Vec<_>, _>>()?;
            let written = emit_reports(&logs, &out)?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Compact { checkpoint: input, out } => {
            let model: Model<f32> = checkpoint::load(&input)?;
            let (compact, stats) = compact_model(&model)?;
            checkpoint::save(&compact, &out)?;
            println!(
                "removed {} filters: params {} -> {}, MACs {} -> {}",
                stats.removed_filters, stats.params_before, stats.params_after, stats.macs_before, stats.macs_after
            );
            println!("checkpoint: {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
