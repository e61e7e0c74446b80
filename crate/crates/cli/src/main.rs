use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurotrack_cli::report::write_report;
use neurotrack_cli::run::{CLASSIFICATION_JSON, GROUP_STATS_JSON, PROFILES_CSV, SWEEP_CSV};
use neurotrack_cli::{ExperimentConfig, Layout, RunError, RunManifest, Runner, Stage, OUTPUT_ENV};

#[derive(Parser)]
#[command(name = "neurotrack", version, about = "Simulate a listening cohort, decode speech tracking from its EEG and classify it")]
struct Cli {
    /// Key-value configuration file; defaults apply to every key it omits.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Replaces the configured global seed.
    #[arg(long, global = true, value_name = "OVERRIDE")]
    seed: Option<u64>,
    /// Output root; replaces `output_dir` from the configuration.
    #[arg(long, global = true, env = OUTPUT_ENV, value_name = "DIR")]
    output: Option<PathBuf>,
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic cohort (subjects, story, cohort.json).
    Simulate,
    /// Run pipeline stages, skipping those whose inputs are unchanged.
    Run {
        /// `all` or a comma-separated subset of simulate, preprocess,
        /// features, train, evaluate, classify, sweep, report.
        #[arg(long, default_value = "all", value_name = "LIST")]
        stages: String,
    },
    /// Write the figure CSVs and SVGs from run results.
    Report {
        /// Output root holding `results/`; defaults to the configured one.
        dir: Option<PathBuf>,
    },
    /// Print the run manifest.
    Inspect {
        #[arg(long)]
        json: bool,
    },
    /// Print the effective configuration as key-value text.
    Config,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                RunError::Other(inner) => eprintln!("error: {inner:#}"),
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn real_main(cli: Cli) -> Result<(), RunError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| RunError::Usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    let root = cli.output.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(RunError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| RunError::Other(e.into()))?;

    let mut runner = Runner::new(&cfg, &root);
    runner.quiet = cli.quiet;
    match cli.command {
        Command::Simulate => {
            pool.install(|| runner.run(&[Stage::Simulate]))?;
        }
        Command::Run { stages } => {
            let stages = Stage::parse_list(&stages).map_err(RunError::Usage)?;
            let m = pool.install(|| runner.run(&stages))?;
            if !cli.quiet {
                eprint!("{}", m.render());
            }
        }
        Command::Report { dir: None } => {
            pool.install(|| runner.run(&[Stage::Report]))?;
        }
        Command::Report { dir: Some(dir) } => {
            let layout = Layout::new(dir);
            let results = layout.results();
            for (file, stage) in [
                (PROFILES_CSV, Stage::Classify),
                (GROUP_STATS_JSON, Stage::Classify),
                (CLASSIFICATION_JSON, Stage::Classify),
                (SWEEP_CSV, Stage::Sweep),
            ] {
                if !results.join(file).exists() {
                    return Err(RunError::Dependency { stage: Stage::Report, missing: stage });
                }
            }
            let written = write_report(&results, &layout.report())?;
            if !cli.quiet {
                for p in written {
                    eprintln!("wrote {}", p.display());
                }
            }
        }
        Command::Inspect { json } => {
            let m = RunManifest::load(&root)?
                .ok_or_else(|| RunError::Usage(format!("no run manifest in {}", root.display())))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&m).map_err(|e| RunError::Other(e.into()))?);
            } else {
                print!("{}", m.render());
            }
        }
        Command::Config => {
            cfg.validate().map_err(|e| RunError::Usage(e.to_string()))?;
            print!("{}", cfg.to_text());
        }
    }
    Ok(())
}
