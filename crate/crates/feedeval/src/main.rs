use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use feedeval::annotation::{self, ServeConfig};
use feedeval::backend::BackendSet;
use feedeval::config::PipelineConfig;
use feedeval::error::{Error, Result};
use feedeval::{pipeline, stages, synthetic};
use feedeval_core::datasets::RankExpansion;

#[derive(Parser)]
#[command(name = "feedeval", version, about = "Generate, select and evaluate essay feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Pipeline configuration (TOML).
    #[arg(short, long, env = "FEEDEVAL_CONFIG", default_value = "feedeval.toml")]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Expansion {
    AllPairs,
    Adjacent,
}

#[derive(Subcommand)]
enum Command {
    /// Read and normalize essays, report dropped rows.
    Ingest(ConfigArg),
    /// Print the generation request of one essay, or write all requests.
    Render {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        essay: Option<String>,
    },
    /// Sample feedback candidates.
    Generate(ConfigArg),
    /// Score candidates on the configured dimensions.
    Score {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Pick the highest and lowest scoring candidate per trait.
    Select {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Build specificity preference pairs from feedback variants.
    BuildSpeceval {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Candidate JSONL holding the variants of each (essay, trait).
        #[arg(long)]
        variants: PathBuf,
    },
    /// Build helpfulness preference pairs from source records.
    BuildHelpfulness {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "all-pairs")]
        expansion: Expansion,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Build validity NLI examples from scored feedback records.
    BuildValidity {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write training labels from stored selections.
    EmitLabels(ConfigArg),
    /// Write the prompt-stratified fold split.
    Folds(ConfigArg),
    /// Quadratic weighted kappa per prompt, trait and fold.
    EvalQwk {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Evaluate stored predictions instead of querying the scoring model.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Accuracy and F1 of predicted against gold pairwise preferences.
    EvalAlignment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Revise essays with stored feedback and measure score changes.
    Revise(ConfigArg),
    /// Run the annotation service.
    Serve {
        /// Service configuration (TOML).
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Run every stage end to end.
    Run(ConfigArg),
    /// Write a synthetic corpus and a mock configuration for it.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        per_prompt: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn report(checksum: &str) {
    println!("manifest sha256 {checksum}");
}

fn synth(dir: &Path, per_prompt: usize, seed: u64) -> Result<()> {
    let mut cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    let corpus = synthetic::write_corpus(&dir.join("data"), per_prompt, cfg.folds, seed)?;
    let relative = |p: &Path| p.strip_prefix(dir).map_or_else(|_| p.to_path_buf(), Path::to_path_buf);
    cfg.data.essays = Some(relative(&corpus.essays));
    cfg.data.rubrics_dir = Some(relative(&corpus.rubrics_dir));
    cfg.output_dir = PathBuf::from("out");
    let text = toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("feedeval.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!("{} essays, configuration at {}", corpus.count, path.display());
    Ok(())
}

fn serve(config: Option<&Path>, bind: Option<String>) -> Result<()> {
    let mut cfg = config.map_or_else(|| Ok(ServeConfig::default()), ServeConfig::load)?;
    if let Some(b) = bind {
        cfg.bind = b;
    }
    let app = annotation::build(&cfg)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.bind)
            .await
            .map_err(|e| Error::io(cfg.bind.as_str(), e))?;
        log::info!("listening on {}", cfg.bind);
        annotation::http::serve(listener, app)
            .await
            .map_err(|e| Error::io(cfg.bind.as_str(), e))
    })
}

fn dispatch(cmd: Command) -> Result<()> {
    let backends = |cfg: &PipelineConfig| BackendSet::from_config(cfg);
    match cmd {
        Command::Ingest(c) => report(&stages::ingest(&c.load()?)?),
        Command::Render { cfg, essay } => {
            if let Some(prompt) = stages::render(&cfg.load()?, essay.as_deref())? {
                print!("{prompt}");
            }
        }
        Command::Generate(c) => {
            let cfg = c.load()?;
            report(&stages::generate(&cfg, &backends(&cfg)?)?);
        }
        Command::Score { cfg, candidates } => {
            let cfg = cfg.load()?;
            report(&stages::score(&cfg, &backends(&cfg)?, candidates.as_deref())?);
        }
        Command::Select {
            cfg,
            candidates,
            scores,
        } => report(&stages::select(&cfg.load()?, candidates.as_deref(), scores.as_deref())?),
        Command::BuildSpeceval { cfg, variants } => {
            let cfg = cfg.load()?;
            report(&stages::speceval(&cfg, &backends(&cfg)?, &variants)?);
        }
        Command::BuildHelpfulness { input, expansion, out } => {
            let expansion = match expansion {
                Expansion::AllPairs => RankExpansion::AllPairs,
                Expansion::Adjacent => RankExpansion::Adjacent,
            };
            report(&stages::helpfulness(&input, expansion, &out)?);
        }
        Command::BuildValidity { input, seed, out } => report(&stages::validity(&input, seed, &out)?),
        Command::EmitLabels(c) => report(&stages::emit_label_files(&c.load()?)?),
        Command::Folds(c) => report(&stages::folds(&c.load()?)?),
        Command::EvalQwk { cfg, predictions } => {
            let cfg = cfg.load()?;
            report(&stages::eval_qwk(&cfg, &backends(&cfg)?, predictions.as_deref())?);
        }
        Command::EvalAlignment { input, out } => report(&stages::eval_alignment(&input, &out)?),
        Command::Revise(c) => {
            let cfg = c.load()?;
            report(&stages::revise(&cfg, &backends(&cfg)?)?);
        }
        Command::Serve { config, bind } => serve(config.as_deref(), bind)?,
        Command::Run(c) => {
            let cfg = c.load()?;
            let summary = pipeline::run(&cfg, &backends(&cfg)?)?;
            if !summary.essay_errors.is_empty() {
                log::warn!("{} essays failed, see essay_errors.jsonl", summary.essay_errors.len());
            }
            match summary.qwk.overall_average {
                Some(q) => println!("overall QWK {q:.4}"),
                None => println!("overall QWK undefined"),
            }
            report(&summary.manifest_hash);
        }
        Command::Synth { dir, per_prompt, seed } => synth(&dir, per_prompt, seed)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
