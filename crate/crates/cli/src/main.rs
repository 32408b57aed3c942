use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featservo::experiment::{
    export_profiles, run_accuracy_suite, run_batch_suite, run_single, ExperimentConfig, ExperimentError,
};

#[derive(Parser)]
#[command(name = "featservo", version, about = "Feature-based visual servoing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One servo run; writes the trace, summary and profiles.
    Run(Common),
    /// The accuracy grid (goals × starts × scenes).
    Accuracy(Common),
    /// Success-ratio batches over random initial poses.
    Batch(Common),
    /// Validate a configuration file and print it with defaults filled in.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for suites (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ExperimentError> {
        let cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(match self.seed {
            Some(seed) => cfg.with_seed(seed),
            None => cfg,
        })
    }
}

fn write(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, contents).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))
}

fn prepare_out(dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))
}

fn json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn execute(command: &Command) -> Result<(), ExperimentError> {
    match command {
        Command::Run(c) => {
            let cfg = c.load()?;
            prepare_out(&c.out)?;
            let (trace, target) = run_single(&cfg)?;
            write(&c.out.join("trace.csv"), &trace.to_csv())?;
            write(&c.out.join("summary.json"), &json(&trace.summary_json(&target)))?;
            export_profiles(&trace, &c.out)?;
            let last = trace.final_record().and_then(|r| r.mean_error);
            println!(
                "status={} cycles={} final_mean_error_px={}",
                trace.status.as_str(),
                trace.cycles(),
                last.map_or("nan".into(), |e| format!("{e:.4}"))
            );
        }
        Command::Accuracy(c) => {
            let cfg = c.load()?;
            prepare_out(&c.out)?;
            let out = run_accuracy_suite(&cfg)?;
            write(&c.out.join("accuracy.csv"), &out.report.to_csv())?;
            write(&c.out.join("accuracy.json"), &json(&out.report))?;
            print!("{}", out.report.to_csv());
            println!(
                "converged {}/{} mean_avg1_px={:?} mean_avg2_px={:?}",
                out.report.converged,
                out.report.rows.len(),
                out.report.mean_avg1_px,
                out.report.mean_avg2_px
            );
        }
        Command::Batch(c) => {
            let cfg = c.load()?;
            prepare_out(&c.out)?;
            let out = run_batch_suite(&cfg)?;
            write(&c.out.join("batch.csv"), &out.report.to_csv())?;
            write(&c.out.join("batch.json"), &json(&out.report))?;
            print!("{}", out.report.to_csv());
        }
        Command::Check(c) => {
            let cfg = c.load()?;
            cfg.run_scene()?;
            print!("{}", cfg.to_toml());
            eprintln!("config ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run(c) | Command::Accuracy(c) | Command::Batch(c) | Command::Check(c) => c,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                ExperimentError::Config(_) => 2,
                ExperimentError::Io(_) => 3,
                ExperimentError::Sim(_) => 1,
            })
        }
    }
}
