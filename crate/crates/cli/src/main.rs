//! `finsent`: ingest, label, run experiment variants, train the PPO policy, report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use finsent_core::corpus::{
    read_headlines, write_jsonl, CorpusStore, SourceRegistry, UnknownSourcePolicy,
};
use finsent_core::eval::experiment::{run_experiment, train_policy};
use finsent_core::eval::{ExperimentConfig, MetricsReport, Variant, WeightSummary};
use finsent_core::marketdata::{label_headlines, PriceStore, SentimentLabel, DEFAULT_LABEL_WINDOW};
use finsent_core::synthetic::{SyntheticConfig, World};

const SYNTHETIC_CONFIG: &str = include_str!("../config/synthetic.toml");

#[derive(Parser)]
#[command(
    name = "finsent",
    version,
    about = "Market-grounded news sentiment with source-weighted retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a price file and ingest a news file; prints the ingestion report.
    Ingest {
        #[arg(long)]
        prices: Option<PathBuf>,
        #[arg(long)]
        news: Option<PathBuf>,
        /// Source registry (`name = weight`); the reference preset if omitted.
        #[arg(long)]
        sources: Option<PathBuf>,
        /// Reject rows from sources missing from the registry instead of registering them at weight 0.
        #[arg(long)]
        reject_unknown: bool,
        /// Write the accepted items as `corpus.jsonl` plus `ingest_report.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label headlines from next-day returns.
    Label {
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        headlines: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LABEL_WINDOW)]
        window: usize,
        /// Output JSONL of labeled headlines.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment variant and write its output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the variant in the config.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the PPO source-weight policy.
    PpoTrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a run or training output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Print the metrics JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Write a seeded synthetic world and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        symbols: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            eprintln!(
                "{}",
                json!({ "error": { "kind": "usage", "message": message.trim() } })
            );
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut kind = "cli";
            let mut parts = Vec::new();
            // Core errors already render their source, so stop there.
            for cause in e.chain() {
                parts.push(cause.to_string());
                if let Some(fe) = cause.downcast_ref::<finsent_core::Error>() {
                    kind = fe.kind();
                    break;
                }
            }
            let message = parts.join(": ");
            eprintln!(
                "{}",
                json!({ "error": { "kind": kind, "message": message } })
            );
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            prices,
            news,
            sources,
            reject_unknown,
            out,
        } => ingest(prices, news, sources, reject_unknown, out),
        Command::Label {
            prices,
            headlines,
            window,
            out,
        } => label(&prices, &headlines, window, &out),
        Command::Run {
            config,
            variant,
            out,
        } => run(&config, variant.as_deref(), &out),
        Command::PpoTrain { config, out } => ppo_train(&config, &out),
        Command::Report { input, json } => report(&input, json),
        Command::Synth {
            out,
            seed,
            symbols,
            days,
        } => synth(&out, seed, symbols, days),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn ingest(
    prices: Option<PathBuf>,
    news: Option<PathBuf>,
    sources: Option<PathBuf>,
    reject_unknown: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    if prices.is_none() && news.is_none() {
        anyhow::bail!(finsent_core::Error::InvalidInput(
            "pass --prices and/or --news".into()
        ));
    }
    let mut summary = serde_json::Map::new();
    if let Some(p) = prices {
        let store = PriceStore::load_csv(&p).with_context(|| format!("loading {}", p.display()))?;
        let symbols: Vec<&str> = store.symbols().collect();
        summary.insert(
            "prices".into(),
            json!({ "bars": store.len(), "symbols": symbols }),
        );
    }
    if let Some(n) = news {
        let mut registry = match &sources {
            Some(s) => SourceRegistry::load(s)?,
            None => SourceRegistry::reference_preset(),
        };
        let policy = if reject_unknown {
            UnknownSourcePolicy::Reject
        } else {
            UnknownSourcePolicy::AutoRegister
        };
        let mut corpus = CorpusStore::new();
        let report = corpus
            .ingest_path(&n, &mut registry, policy)
            .with_context(|| format!("ingesting {}", n.display()))?;
        if let Some(dir) = &out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_jsonl(dir.join("corpus.jsonl"), corpus.items())?;
            fs::write(
                dir.join("ingest_report.json"),
                serde_json::to_string_pretty(&report)? + "\n",
            )?;
            fs::write(dir.join("sources.toml"), registry.to_toml())?;
        }
        summary.insert("news".into(), serde_json::to_value(&report)?);
    }
    print_json(&serde_json::Value::Object(summary))
}

fn label(prices: &Path, headlines: &Path, window: usize, out: &Path) -> Result<()> {
    let store = PriceStore::load_csv(prices)?;
    let items = read_headlines(headlines)?;
    let labeled = label_headlines(&items, &store, window)?;
    write_jsonl(out, &labeled)?;
    let mut counts = serde_json::Map::new();
    for l in [
        SentimentLabel::Positive,
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Unknown,
    ] {
        counts.insert(
            l.as_str().into(),
            labeled.iter().filter(|x| x.label == l).count().into(),
        );
    }
    print_json(&json!({ "labeled": labeled.len(), "counts": counts, "out": out }))
}

fn run(config: &Path, variant: Option<&str>, out: &Path) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(v) = variant {
        cfg.variant = v.parse::<Variant>()?;
        cfg.validate()?;
    }
    let report = run_experiment(&cfg, Some(out))?;
    print_json(&json!({
        "variant": report.variant,
        "out": out,
        "accuracy": report.metrics.accuracy,
        "weighted_f1": report.metrics.weighted_f1,
        "evaluated": report.metrics.evaluated,
        "excluded": report.metrics.excluded,
    }))
}

fn ppo_train(config: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let (ck, report, summary) = train_policy(&cfg, Some(out))?;
    let last = report.rows.last();
    print_json(&json!({
        "out": out,
        "batches": report.rows.len(),
        "final_mean_reward": last.map(|r| r.mean_reward),
        "config_hash": ck.config_hash,
        "extracted_weights": summary.sources.iter().map(|s| (s.source.clone(), json!(s.r#final))).collect::<serde_json::Map<_, _>>(),
        "flagged": summary.flagged().collect::<Vec<_>>(),
    }))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn report(dir: &Path, as_json: bool) -> Result<()> {
    let metrics_path = dir.join("report.json");
    let summary_path = dir.join("weights_summary.json");
    let metrics: Option<MetricsReport> = metrics_path
        .exists()
        .then(|| read_json(&metrics_path))
        .transpose()?;
    let summary: Option<WeightSummary> = summary_path
        .exists()
        .then(|| read_json(&summary_path))
        .transpose()?;
    if metrics.is_none() && summary.is_none() {
        anyhow::bail!(finsent_core::Error::InvalidInput(format!(
            "{} has neither report.json nor weights_summary.json",
            dir.display()
        )));
    }
    if as_json {
        return print_json(&json!({ "metrics": metrics, "weights": summary }));
    }
    if let Some(m) = &metrics {
        println!("accuracy     {:.4}", m.accuracy);
        println!("weighted F1  {:.4}", m.weighted_f1);
        println!("evaluated    {}  (excluded {})", m.evaluated, m.excluded);
        for (class, s) in &m.per_class {
            println!(
                "  {class:<9} P {:.3}  R {:.3}  F1 {:.3}  n {}",
                s.precision, s.recall, s.f1, s.support
            );
        }
        println!();
    }
    if let Some(s) = &summary {
        println!("source weights over {} step(s), initial -> final:", s.steps);
        print!("{}", s.render_text());
    }
    Ok(())
}

fn synth(out: &Path, seed: u64, symbols: Option<usize>, days: Option<usize>) -> Result<()> {
    let mut cfg = SyntheticConfig {
        seed,
        ..Default::default()
    };
    if let Some(s) = symbols {
        cfg.symbols = s;
    }
    if let Some(d) = days {
        cfg.query_days = d;
    }
    let world = World::generate(cfg)?;
    world.write_to(out)?;
    fs::write(out.join("config.toml"), SYNTHETIC_CONFIG)?;
    print_json(&json!({
        "out": out,
        "queries": world.queries.len(),
        "corpus": world.corpus.len(),
        "symbols": world.config.symbols,
        "config": out.join("config.toml"),
    }))
}
