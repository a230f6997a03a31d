use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mortality::experiment::{cmd_rank, cmd_synth, run_experiment, run_permtest, ExperimentConfig};
use mortality::Error;

#[derive(Parser)]
#[command(name = "mortality", version, about = "Early mortality prediction from structured features and clinical notes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort as JSONL.
    Synth {
        /// Generator config (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of records, overriding the config.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config (or replay a manifest).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        ranges: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Paired AUC permutation test between two cells of a finished run.
    Permtest {
        results_dir: PathBuf,
        cell_a: String,
        cell_b: String,
        #[arg(long)]
        permutations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Top structured coefficients of a saved linear model.
    Rank {
        model: PathBuf,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn config_error(e: Error) -> Failure {
    Failure::Config(e)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth { config, seed, n, out } => {
            let count = cmd_synth(config.as_deref(), &out, seed, n).map_err(|e| match e {
                Error::Config(_) => Failure::Config(e),
                e => Failure::Runtime(e),
            })?;
            println!("wrote {count} records to {}", out.display());
        }
        Command::Run {
            config,
            seed,
            jobs,
            out,
            stopwords,
            ranges,
            embeddings,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(config_error)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.stopwords = stopwords.or(cfg.stopwords);
            cfg.ranges = ranges.or(cfg.ranges);
            cfg.embeddings = embeddings.or(cfg.embeddings);
            cfg.validate().map_err(config_error)?;
            let table = run_experiment(&cfg, jobs).map_err(Failure::Runtime)?;
            for fs in &cfg.feature_sets {
                println!("== {fs}");
                print!("{}", table.to_tsv(*fs));
            }
            let failed = table.cells.iter().filter(|c| c.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} cell(s) failed; see results.json");
            }
            println!("results written to {}", cfg.out_dir.display());
        }
        Command::Permtest {
            results_dir,
            cell_a,
            cell_b,
            permutations,
            seed,
        } => {
            let r = run_permtest(&results_dir, &cell_a, &cell_b, permutations, seed).map_err(Failure::Runtime)?;
            println!("observed |dAUC| = {:.6}", r.observed);
            println!("p = {:.6} ({} permutations)", r.p_value, r.n_perm);
            println!(
                "{} at 0.05",
                if r.significant(0.05) { "significant" } else { "not significant" }
            );
        }
        Command::Rank { model, k } => {
            for (i, (name, w)) in cmd_rank(&model, k).map_err(Failure::Runtime)?.iter().enumerate() {
                println!("{:>2}\t{name}\t{w:.6}", i + 1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
