//! `codeqe`: run the quality-estimation pipeline stage by stage.

use clap::{Args, Parser, Subcommand};
use codeqe_core::corpus::synthetic::mini_corpus_jsonl;
use codeqe_core::pipeline::{Pipeline, PipelineError, RunConfig, Stage};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "codeqe", version, about = "Few-shot functional-correctness estimation for generated code")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config field, e.g. `--set neighborhood.k_grid=[1,2,3]`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load datasets, validate them and split train/dev.
    Ingest,
    /// Sample candidate solutions for every problem.
    Generate,
    /// Execute candidates against their test suites.
    Label,
    /// Embed labeled training pairs into the example index.
    Index,
    /// Score dev and test pairs with every configured method.
    Predict,
    /// Pick k per few-shot method on the dev set.
    Tune,
    /// Compute nDCG tables and the k sweep.
    Evaluate,
    /// Check provenance and write the final table.
    Report,
    /// Run every stage in order.
    Run,
    /// Write a synthetic corpus and a stub-backed config to start from.
    Synth {
        /// Directory to write into.
        dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        problems: usize,
        #[arg(long, default_value_t = 20)]
        test_problems: usize,
    },
}

const SYNTH_CONFIG: &str = r#"seed = 2024
out_dir = "out"

[train]
name = "synthetic"
path = "train.jsonl"
format = "mbpp-style"

[[test_sets]]
name = "synthetic-test"
path = "test.jsonl"
format = "mbpp-style"

[backends.generator]
endpoint = "stub"
model_name = "stub-gen"

[backends.predictor]
endpoint = "stub"
model_name = "stub-pred"

[backends.encoder]
endpoint = "stub"
model_name = "stub-enc"

[runners]
python = "stub"

[neighborhood]
k_grid = [1, 2, 3, 4, 5]
"#;

fn synth(dir: &Path, problems: usize, test_problems: usize, seed: u64) -> Result<(), PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let files = [
        ("train.jsonl", mini_corpus_jsonl("train", problems, seed)),
        ("test.jsonl", mini_corpus_jsonl("test", test_problems, seed.wrapping_add(1))),
        ("run.toml", SYNTH_CONFIG.to_string()),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io(&path))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn pipeline(global: &GlobalArgs) -> Result<Pipeline, PipelineError> {
    let config = global
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let mut overrides = global.overrides.clone();
    if let Some(seed) = global.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = RunConfig::load(config, &overrides)?;
    Pipeline::new(cfg, global.out.clone())
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let stages: Vec<Stage> = match &cli.command {
        Command::Synth { dir, problems, test_problems } => {
            return synth(dir, *problems, *test_problems, cli.global.seed.unwrap_or(7))
        }
        Command::Run => Stage::ALL.to_vec(),
        Command::Ingest => vec![Stage::Ingest],
        Command::Generate => vec![Stage::Generate],
        Command::Label => vec![Stage::Label],
        Command::Index => vec![Stage::Index],
        Command::Predict => vec![Stage::Predict],
        Command::Tune => vec![Stage::Tune],
        Command::Evaluate => vec![Stage::Evaluate],
        Command::Report => vec![Stage::Report],
    };
    let p = pipeline(&cli.global)?;
    for stage in stages {
        let outcome = p.run_stage(stage)?;
        let state = if outcome.skipped { "up to date" } else { "done" };
        println!("{stage}: {state} ({})", p.out_dir().join(stage.as_str()).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
