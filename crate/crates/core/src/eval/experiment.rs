//! Loads data for an experiment config, runs one variant, writes the output directory.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::config::{
    ClassifierKind, EmbeddingKind, ExperimentConfig, FidelitySpec, InitialWeights, Variant,
};
use super::metrics::{accuracy, weighted_f1, ClassScores, ConfusionMatrix};
use super::plot::{emit_weight_plot_data, WeightSummary};
use crate::classifier::{Backend, OracleClassifier, OracleFidelity, RuleClassifier};
use crate::corpus::{
    read_headlines, CorpusStore, IngestReport, SourceRegistry, UnknownSourcePolicy,
};
use crate::embedding::{EmbeddingProvider, HashEmbedder, PrecomputedStore};
use crate::error::{Error, Result};
use crate::feedback::{run_feedback_epoch, FeedbackEvent, WeightTrajectory};
use crate::marketdata::{label_headlines, LabeledHeadline, PriceStore, SentimentLabel};
use crate::pipeline::{Pipeline, PredictionRecord};
use crate::ppo::train::{
    extract_policy_weights, ppo_train, rollout, Controller, PolicyCheckpoint, TrainingReport,
};
use crate::ppo::SourceWeightEnv;
use crate::retrieval::{Retriever, SentimentCueLexicon};
use crate::weights::SourceWeights;

/// Everything read from disk for one config.
pub struct Resources {
    pub prices: PriceStore,
    pub corpus: CorpusStore,
    pub registry: SourceRegistry,
    pub ingest: IngestReport,
    /// Labeled queries in (date, id) order.
    pub dataset: Vec<LabeledHeadline>,
    pub embedder: Box<dyn EmbeddingProvider>,
    pub backend: Backend,
    pub lexicon: SentimentCueLexicon,
}

impl Resources {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let data = &config.data;
        let prices = PriceStore::load_csv(config.resolve(&data.prices))?;
        let mut registry = SourceRegistry::load(config.resolve(&data.sources))?;
        let mut corpus = CorpusStore::new();
        let ingest = corpus.ingest_path(
            config.resolve(&data.corpus),
            &mut registry,
            UnknownSourcePolicy::AutoRegister,
        )?;
        let mut queries = read_headlines(config.resolve(&data.queries))?;
        queries.sort_by(|a, b| (a.date, &a.id).cmp(&(b.date, &b.id)));
        let dataset = label_headlines(&queries, &prices, config.labels.window)?;
        Ok(Self {
            embedder: build_embedder(config)?,
            backend: build_backend(config)?,
            prices,
            corpus,
            registry,
            ingest,
            dataset,
            lexicon: SentimentCueLexicon::default(),
        })
    }

    pub fn initial_weights(&self, config: &ExperimentConfig) -> SourceWeights {
        match config.data.initial_weights {
            InitialWeights::Registry => self.registry.weights(),
            InitialWeights::Uniform => self.registry.uniform_weights(),
        }
    }

    pub fn pipeline<'a>(&'a self, config: &ExperimentConfig, variant: Variant) -> Pipeline<'a> {
        Pipeline {
            retriever: Retriever {
                corpus: &self.corpus,
                prices: Some(&self.prices),
                embedder: self.embedder.as_ref(),
                lexicon: &self.lexicon,
                config: variant.retrieval(&config.retrieval),
            },
            backend: &self.backend,
        }
    }
}

fn build_embedder(config: &ExperimentConfig) -> Result<Box<dyn EmbeddingProvider>> {
    let e = &config.embedding;
    Ok(match e.kind {
        EmbeddingKind::Hash => Box::new(HashEmbedder::new(e.dim, e.max_ngram)?),
        EmbeddingKind::Precomputed => {
            let path = e
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("embedding.path missing".into()))?;
            Box::new(PrecomputedStore::load(config.resolve(path))?)
        }
        #[cfg(feature = "remote")]
        EmbeddingKind::Remote => Box::new(crate::embedding::RemoteEmbedder::new(
            crate::remote::RemoteConfig {
                url: e.url.clone(),
                timeout_ms: e.timeout_ms,
                retries: e.retries,
                max_in_flight: e.max_in_flight,
            },
            e.dim,
        )?),
        #[cfg(not(feature = "remote"))]
        EmbeddingKind::Remote => return Err(Error::Config("built without remote support".into())),
    })
}

fn load_fidelity(config: &ExperimentConfig, spec: &FidelitySpec) -> Result<OracleFidelity> {
    match spec {
        FidelitySpec::Inline(map) => OracleFidelity::try_from(map.clone()),
        FidelitySpec::Path(p) => {
            let path = config.resolve(p);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let map: IndexMap<String, f64> = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            OracleFidelity::try_from(map)
        }
    }
}

fn build_backend(config: &ExperimentConfig) -> Result<Backend> {
    let c = &config.classifier;
    Ok(match c.kind {
        ClassifierKind::Oracle => {
            let spec = c
                .fidelity
                .as_ref()
                .ok_or_else(|| Error::Config("classifier.fidelity missing".into()))?;
            Backend::Oracle(OracleClassifier::new(
                load_fidelity(config, spec)?,
                config.seed,
                c.base_rate,
            )?)
        }
        ClassifierKind::Rule => Backend::Prompt(Box::new(RuleClassifier::default())),
        #[cfg(feature = "remote")]
        ClassifierKind::Remote => Backend::Prompt(Box::new(
            crate::classifier::RemoteClassifier::new(crate::remote::RemoteConfig {
                url: c.url.clone(),
                timeout_ms: c.timeout_ms,
                retries: c.retries,
                max_in_flight: c.max_in_flight,
            })?,
        )),
        #[cfg(not(feature = "remote"))]
        ClassifierKind::Remote => return Err(Error::Config("built without remote support".into())),
    })
}

/// Contents of `report.json`: metrics only, so runs that reach the same
/// predictions produce the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub evaluated: u64,
    pub excluded: u64,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub per_class: IndexMap<String, ClassScores>,
    pub confusion: [[u64; 3]; 3],
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let per_class = SentimentLabel::CLASSES
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str().to_string(), cm.class_scores(i)))
            .collect();
        Ok(Self {
            evaluated: cm.total(),
            excluded: cm.excluded_count,
            accuracy: accuracy(cm)?,
            weighted_f1: weighted_f1(cm)?,
            per_class,
            confusion: cm.counts,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub variant: Variant,
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub initial_weights: SourceWeights,
    pub final_weights: SourceWeights,
    pub trajectory: WeightTrajectory,
    pub summary: WeightSummary,
    pub records: Vec<PredictionRecord>,
    pub events: Vec<FeedbackEvent>,
    pub ingest: IngestReport,
}

/// Static-weight evaluation split across scoped threads; output order matches `dataset`.
pub fn evaluate_parallel(
    dataset: &[LabeledHeadline],
    pipeline: &Pipeline<'_>,
    weights: &SourceWeights,
    threads: usize,
) -> Vec<PredictionRecord> {
    let threads = if threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get().min(8))
    } else {
        threads
    };
    if threads <= 1 || dataset.len() < 64 {
        return crate::pipeline::evaluate_static(dataset, pipeline, weights);
    }
    let chunk = dataset.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = dataset
            .chunks(chunk)
            .map(|part| s.spawn(move || crate::pipeline::evaluate_static(part, pipeline, weights)))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    })
}

/// Runs `config.variant` and, when `out` is given, writes the output directory.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    config.validate()?;
    let res = Resources::load(config)?;
    let variant = config.variant;
    let initial = res.initial_weights(config);
    let pipeline = res.pipeline(config, variant);

    let (final_weights, records, events, trajectory) = match variant {
        Variant::BaseNoContext | Variant::RagStatic => {
            let records = evaluate_parallel(&res.dataset, &pipeline, &initial, config.threads);
            let trajectory = WeightTrajectory::starting_at(&initial);
            (initial.clone(), records, Vec::new(), trajectory)
        }
        Variant::RagFeedbackCosine | Variant::RagFeedbackWoc => {
            let epoch = run_feedback_epoch(
                &res.dataset,
                &pipeline,
                initial.clone(),
                config.feedback.alpha,
                config.feedback.neutral_zone,
            )?;
            (epoch.weights, epoch.records, epoch.events, epoch.trajectory)
        }
        Variant::RagPpo => {
            let path = config
                .data
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("data.checkpoint missing".into()))?;
            let ck = PolicyCheckpoint::load(&config.resolve(path))?;
            let weights = ppo_weights(&res, config, &pipeline, &ck)?;
            let records = evaluate_parallel(&res.dataset, &pipeline, &weights, config.threads);
            let mut trajectory = WeightTrajectory::starting_at(&ck.initial_weights);
            trajectory.push(&weights);
            (weights, records, Vec::new(), trajectory)
        }
    };

    let confusion = ConfusionMatrix::from_records(&records);
    if confusion.total() == 0 {
        // Nothing scored; surface why instead of an empty-matrix error.
        if let Some(e) = records.iter().find_map(|r| r.error.as_deref()) {
            return Err(Error::InvalidInput(format!(
                "no query could be scored; first failure: {e}"
            )));
        }
    }
    let metrics = MetricsReport::from_confusion(&confusion)?;
    let (_, summary) = emit_weight_plot_data(&trajectory)?;
    let report = ExperimentReport {
        variant,
        metrics,
        confusion,
        initial_weights: initial,
        final_weights,
        trajectory,
        summary,
        records,
        events,
        ingest: res.ingest,
    };
    if let Some(dir) = out {
        write_outputs(&report, config, dir)?;
    }
    Ok(report)
}

fn ppo_weights(
    res: &Resources,
    config: &ExperimentConfig,
    pipeline: &Pipeline<'_>,
    ck: &PolicyCheckpoint,
) -> Result<SourceWeights> {
    let names: Vec<&str> = ck.initial_weights.names().collect();
    let registry: Vec<&str> = res.registry.names().collect();
    if names != registry {
        return Err(Error::Config(format!(
            "checkpoint sources {names:?} do not match registry {registry:?}"
        )));
    }
    let mut env = SourceWeightEnv::new(
        &res.dataset,
        pipeline,
        ck.initial_weights.clone(),
        ck.config.env.clone(),
    )?;
    let run = rollout(
        &mut env,
        Controller::Policy(&ck.policy),
        config.ppo_eval.extract_states,
        config.seed,
    )?;
    let w = extract_policy_weights(&ck.policy, &run.states)?;
    ck.initial_weights.with_values(&w)
}

/// Trains a policy on the config's dataset and writes `policy.json`,
/// `training.csv`, `weights.csv` and `weights_summary.json` into `out`.
pub fn train_policy(
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<(PolicyCheckpoint, TrainingReport, WeightSummary)> {
    let mut config = config.clone();
    config.variant = Variant::RagStatic;
    config.validate()?;
    let res = Resources::load(&config)?;
    let initial = res.initial_weights(&config);
    let pipeline = res.pipeline(&config, Variant::RagStatic);
    let mut env = SourceWeightEnv::new(
        &res.dataset,
        &pipeline,
        initial.clone(),
        config.ppo.env.clone(),
    )?;
    let trained = ppo_train(&mut env, &config.ppo)?;
    let ck = PolicyCheckpoint::new(initial.clone(), &trained, &config.ppo);
    let run = rollout(
        &mut env,
        Controller::Policy(&ck.policy),
        config.ppo_eval.extract_states,
        config.ppo.seed,
    )?;
    let extracted = initial.with_values(&extract_policy_weights(&ck.policy, &run.states)?)?;
    let mut trajectory = WeightTrajectory::starting_at(&initial);
    trajectory.push(&extracted);
    let (csv, summary) = emit_weight_plot_data(&trajectory)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        ck.save(&dir.join("policy.json"))?;
        trained.report.write_csv(&dir.join("training.csv"))?;
        write_file(&dir.join("weights.csv"), csv.as_bytes())?;
        write_json(&dir.join("weights_summary.json"), &summary)?;
    }
    Ok((ck, trained.report, summary))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_file(path, &buf)
}

#[derive(Serialize)]
struct RunInfo<'a> {
    variant: Variant,
    seed: u64,
    initial_weights: &'a SourceWeights,
    final_weights: &'a SourceWeights,
    ingest: &'a IngestReport,
    config: &'a ExperimentConfig,
}

pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("truth\\predicted");
    for c in SentimentLabel::CLASSES {
        out.push(',');
        out.push_str(c.as_str());
    }
    out.push('\n');
    for (c, row) in SentimentLabel::CLASSES.iter().zip(&cm.counts) {
        out.push_str(c.as_str());
        for n in row {
            out.push_str(&format!(",{n}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_outputs(
    report: &ExperimentReport,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("report.json"), &report.metrics)?;
    write_file(
        &dir.join("confusion.csv"),
        confusion_csv(&report.confusion).as_bytes(),
    )?;
    let (csv, _) = emit_weight_plot_data(&report.trajectory)?;
    write_file(&dir.join("weights.csv"), csv.as_bytes())?;
    write_json(&dir.join("weights_summary.json"), &report.summary)?;
    write_jsonl(&dir.join("predictions.jsonl"), &report.records)?;
    if !report.events.is_empty() {
        write_jsonl(&dir.join("events.jsonl"), &report.events)?;
    }
    let info = RunInfo {
        variant: report.variant,
        seed: config.seed,
        initial_weights: &report.initial_weights,
        final_weights: &report.final_weights,
        ingest: &report.ingest,
        config,
    };
    write_json(&dir.join("run.json"), &info)?;
    let mut f = std::fs::File::create(dir.join("summary.txt")).map_err(|e| Error::io(dir, e))?;
    writeln!(
        f,
        "variant: {}\naccuracy: {:.4}\nweighted_f1: {:.4}\nevaluated: {}\nexcluded: {}\n\n{}",
        report.variant,
        report.metrics.accuracy,
        report.metrics.weighted_f1,
        report.metrics.evaluated,
        report.metrics.excluded,
        report.summary.render_text()
    )
    .map_err(|e| Error::io(dir, e))
}
