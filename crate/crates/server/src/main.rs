use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flarewatch_core::classify::ClassifierFamily;
use flarewatch_core::evaluate::SynthSpec;
use flarewatch_core::pipeline::Clock;
use flarewatch_core::store::IncidentStore;
use flarewatch_server::commands;
use flarewatch_server::{Contacts, ServerError, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "flarewatch", version, about = "Emergency detection over geo-tagged short posts")]
struct Cli {
    /// Service configuration file.
    #[arg(long, global = true, default_value = "data/config.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Nb,
    Svm,
}

impl From<Family> for ClassifierFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Nb => ClassifierFamily::NaiveBayes,
            Family::Svm => ClassifierFamily::MaxMargin,
        }
    }
}

#[derive(clap::Args)]
struct CorpusArgs {
    /// Labeled TSV corpus; the synthetic corpus is used when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 3200)]
    size: usize,
    #[arg(long, default_value_t = 1313)]
    positives: usize,
    /// Synthetic label and text noise rate in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl CorpusArgs {
    fn spec(&self) -> SynthSpec {
        SynthSpec::default()
            .with_size(self.size, self.positives)
            .with_noise(self.noise)
            .with_seed(self.seed)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled corpus as TSV.
    Generate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train both stages and write models plus the word cloud.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_enum, default_value = "svm")]
        stage1: Family,
        #[arg(long, value_enum, default_value = "nb")]
        stage2: Family,
        /// Output directory; defaults to the configured models_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified cross validation of one stage, printed as JSON.
    Eval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        #[arg(long, value_enum, default_value = "svm")]
        classifier: Family,
        #[arg(long, default_value_t = 42)]
        fold_seed: u64,
    },
    /// Trace one text through preprocessing and both classifiers.
    Classify {
        #[arg(long)]
        text: String,
    },
    /// Replay a JSON Lines post file into the incident log.
    Replay {
        #[arg(long)]
        file: PathBuf,
        /// Posts per second; unthrottled when absent.
        #[arg(long)]
        rate: Option<f64>,
        /// Incident log; defaults to incidents.log in the data dir.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Stamp incidents with the post time instead of the wall clock.
        #[arg(long)]
        post_time: bool,
    },
    /// Run the HTTP service.
    Serve {
        /// Overrides the configured port.
        #[arg(long)]
        port: Option<u16>,
    },
}

fn load_config(path: &PathBuf) -> Result<(ServiceConfig, Contacts), ServerError> {
    let cfg = ServiceConfig::load(path)?.apply_env(|k| std::env::var(k).ok())?;
    let contacts = Contacts::load(&cfg.contacts)?;
    Ok((cfg, contacts))
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), ServerError> {
    let (cfg, contacts) = load_config(&cli.config)?;
    match cli.command {
        Command::Generate { corpus, out } => {
            let dataset = commands::load_corpus(None, &corpus.spec())?;
            dataset.save(&out)?;
            eprintln!("wrote {} examples to {}", dataset.len(), out.display());
        }
        Command::Train {
            corpus,
            stage1,
            stage2,
            out,
        } => {
            let dataset = commands::load_corpus(corpus.data.as_deref(), &corpus.spec())?;
            let out = out.unwrap_or_else(|| cfg.models_dir.clone());
            let summary = commands::train(&cfg, &contacts, &dataset, (stage1.into(), stage2.into()), &out)?;
            print_json(&summary);
        }
        Command::Eval {
            corpus,
            folds,
            stage,
            classifier,
            fold_seed,
        } => {
            let dataset = commands::load_corpus(corpus.data.as_deref(), &corpus.spec())?;
            let report = commands::evaluate(&cfg, &contacts, &dataset, stage, classifier.into(), folds, fold_seed)?;
            print_json(&report);
        }
        Command::Classify { text } => {
            let ctx = cfg.pipeline_context(&contacts)?;
            print_json(&commands::classify_text(&ctx, &text)?);
        }
        Command::Replay {
            file,
            rate,
            store,
            post_time,
        } => {
            let mut ctx = cfg.pipeline_context(&contacts)?;
            if post_time {
                ctx = ctx.with_clock(Clock::PostTime);
            }
            let path = store.unwrap_or_else(|| cfg.incidents_log());
            let (store, report) = IncidentStore::open(&path)?;
            if report.torn_discarded > 0 {
                eprintln!("discarded {} torn record(s) in {}", report.torn_discarded, path.display());
            }
            let stdout = std::io::stdout();
            let summary = commands::replay(&ctx, &store, &file, rate, &mut stdout.lock())?;
            println!("summary {}", serde_json::to_string(&summary).expect("serializable"));
        }
        Command::Serve { port } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| ServerError::Config(e.to_string()))?;
            let addr = SocketAddr::from(([0, 0, 0, 0], port.unwrap_or(cfg.port)));
            runtime.block_on(async {
                let server = flarewatch_server::spawn(&cfg, addr).await?;
                tracing::info!(addr = %server.addr, "listening");
                let _ = tokio::signal::ctrl_c().await;
                server.stop().await;
                Ok::<_, ServerError>(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
