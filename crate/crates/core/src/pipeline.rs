//! End-to-end orchestration: ingest, generate, evaluate, report.
//!
//! Every stage reads its inputs from the output directory and writes its
//! artifacts there, so stages can be run one at a time or all together.
//! After each stage `manifest.json` is rewritten with a content hash for every
//! artifact present. Model and paraphrase responses live in the response
//! cache; re-running with a warm cache sends no requests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::ResponseCache;
use crate::client::{ChatBackend, ClientError, HttpChatClient};
use crate::config::{ConfigError, RunConfig};
use crate::digest_hex;
use crate::harness::{evaluate as run_harness, DemoPool, EvalModel, EvalSettings, EvalStats, HarnessError, MockModel};
use crate::kb::{self, KbError, KnowledgeTriplet, Schema};
use crate::matrix::ScoreMatrix;
use crate::metrics::{ablation_reports, k_rows_csv, render_table, MetricsError, MetricsReport};
use crate::textgen::{generate_all, GenerationError, GenerationPlan, Generator, PoolError, PrototypePool, Rephraser, TestSample};

pub const SAMPLED: &str = "sampled.tsv";
pub const DEMOS: &str = "demos.tsv";
pub const INGEST_LOG: &str = "ingest.json";
pub const SAMPLES: &str = "samples.jsonl";
pub const DEMO_SAMPLES: &str = "demo_samples.jsonl";
pub const GENERATION_LOG: &str = "generation.json";
pub const RESPONSES: &str = "responses.jsonl";
pub const MATRIX: &str = "score_matrix.json";
pub const REPORT: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const K_ROWS: &str = "k_rows.csv";
pub const ABLATION_DIR: &str = "ablation";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Generate,
    Evaluate,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Generate => "generate",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("endpoint setup: {0}")]
    Client(#[from] ClientError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{stage}: {path}: {source}")]
    Io {
        stage: Stage,
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{stage}: {path}: {message}")]
    Artifact { stage: Stage, path: String, message: String },
}

impl PipelineError {
    /// 1 configuration/input, 2 generation, 3 evaluation or reporting.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Kb(_) | PipelineError::Client(_) => 1,
            PipelineError::Pool(_) | PipelineError::Generation(_) => 2,
            PipelineError::Harness(_) | PipelineError::Metrics(_) => 3,
            PipelineError::Io { stage, .. } | PipelineError::Artifact { stage, .. } => match stage {
                Stage::Ingest => 1,
                Stage::Generate => 2,
                Stage::Evaluate | Stage::Report => 3,
            },
        }
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn write(stage: Stage, path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    let io_err = |source| PipelineError::Io {
        stage,
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    fs::write(path, bytes).map_err(io_err)
}

fn read(stage: Stage, path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        stage,
        path: path.display().to_string(),
        source,
    })
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("serializable") + "\n")
        .collect()
}

fn from_jsonl<T: for<'de> Deserialize<'de>>(stage: Stage, path: &Path) -> Result<Vec<T>> {
    read(stage, path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Artifact {
                stage,
                path: path.display().to_string(),
                message: format!("record {}: {e}", i + 1),
            })
        })
        .collect()
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn seeds_map(cfg: &RunConfig) -> BTreeMap<String, u64> {
    BTreeMap::from([
        ("subset".to_string(), cfg.seeds.subset),
        ("negatives".to_string(), cfg.seeds.negatives),
        ("demos".to_string(), cfg.seeds.demos),
        ("mock".to_string(), cfg.seeds.mock),
    ])
}

fn source_name(cfg: &RunConfig) -> String {
    cfg.kb
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestLog {
    pub config_hash: String,
    pub positives_loaded: usize,
    pub subset: usize,
    pub negatives: usize,
    pub skipped_negative_pairs: Vec<(String, String)>,
    pub demo_points: usize,
    pub test_points: usize,
}

/// Sampled knowledge points, split into demonstration and test sets.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub full_kb: Vec<KnowledgeTriplet>,
    pub demos: Vec<KnowledgeTriplet>,
    pub tests: Vec<KnowledgeTriplet>,
    pub log: IngestLog,
}

/// Loads the KB and performs subset, negative and demonstration sampling in
/// memory.
pub fn sample_points(cfg: &RunConfig) -> Result<Sampled> {
    let schema = Schema::load(&cfg.schema_path())?;
    let full_kb = kb::load_kb(&cfg.kb_path(), &schema)?;
    let subset = kb::sample_subset(&full_kb, &schema, cfg.seeds.subset);
    let neg = kb::sample_negatives(&subset, &full_kb, cfg.seeds.negatives);
    let mut points = subset.clone();
    points.extend(neg.negatives.iter().cloned());
    let (demos, tests) = kb::split_demos(&points, cfg.demos_per_relation, cfg.seeds.demos);
    let log = IngestLog {
        config_hash: cfg.config_hash(),
        positives_loaded: full_kb.len(),
        subset: subset.len(),
        negatives: neg.negatives.len(),
        skipped_negative_pairs: neg.skipped.iter().map(|(h, r)| (h.to_string(), r.clone())).collect(),
        demo_points: demos.len(),
        test_points: tests.len(),
    };
    Ok(Sampled {
        full_kb,
        demos,
        tests,
        log,
    })
}

pub fn ingest(cfg: &RunConfig) -> Result<IngestLog> {
    let sampled = sample_points(cfg)?;
    let out = cfg.output_path();
    write(Stage::Ingest, &out.join(SAMPLED), kb::write_sampled(&sampled.tests))?;
    write(Stage::Ingest, &out.join(DEMOS), kb::write_sampled(&sampled.demos))?;
    write(Stage::Ingest, &out.join(INGEST_LOG), pretty(&sampled.log))?;
    write_manifest(cfg)?;
    log::info!(
        "ingest: {} positives, {} sampled, {} negatives ({} pairs skipped), {} demo / {} test points",
        sampled.log.positives_loaded,
        sampled.log.subset,
        sampled.log.negatives,
        sampled.log.skipped_negative_pairs.len(),
        sampled.log.demo_points,
        sampled.log.test_points
    );
    Ok(sampled.log)
}

fn open_cache(cfg: &RunConfig, stage: Stage) -> Result<ResponseCache> {
    let dir = cfg.cache_path();
    ResponseCache::on_disk(&dir).map_err(|source| PipelineError::Io {
        stage,
        path: dir.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationLog {
    pub config_hash: String,
    pub generator: Generator,
    pub keys: Vec<String>,
    pub test_samples: usize,
    pub demo_samples: usize,
    pub excluded: Vec<(String, String)>,
}

/// Renders test and demonstration points into samples.
pub fn generate_points(
    cfg: &RunConfig,
    tests: &[KnowledgeTriplet],
    demos: &[KnowledgeTriplet],
    cache: Option<&ResponseCache>,
) -> Result<(Vec<TestSample>, Vec<TestSample>, GenerationLog)> {
    let pool = match cfg.pool_path() {
        Some(p) if cfg.generator != Generator::LlmEval => {
            let pool = PrototypePool::load(&p)?;
            let relations: BTreeSet<&str> = tests.iter().chain(demos).map(|t| t.relation.as_str()).collect();
            if let Err(missing) = pool.check_complete(relations) {
                for m in &missing[1..] {
                    log::error!("{m}");
                }
                return Err(missing.into_iter().next().unwrap().into());
            }
            Some(pool)
        }
        _ => None,
    };
    let endpoint = match &cfg.rephraser {
        Some(ep) if cfg.rephrase || cfg.generator == Generator::LlmEval => Some(HttpChatClient::new(ep.clone())?),
        _ => None,
    };
    let plan = GenerationPlan {
        generator: cfg.generator,
        keys: cfg.active_keys(),
        pool: pool.as_ref(),
        rephraser: match (&endpoint, cfg.rephrase && cfg.generator == Generator::PretexEval) {
            (Some(ep), true) => Some(Rephraser { backend: ep, cache }),
            _ => None,
        },
        llm: endpoint.as_ref().map(|e| e as &dyn ChatBackend),
        llm_cache: cache,
        pad_llmeval: cfg.pad_llmeval,
    };
    let test_out = generate_all(tests, &plan, cfg.parallelism)?;
    let demo_out = generate_all(demos, &plan, cfg.parallelism)?;
    let mut excluded = test_out.excluded;
    excluded.extend(demo_out.excluded);
    let log = GenerationLog {
        config_hash: cfg.config_hash(),
        generator: cfg.generator,
        keys: cfg.active_keys().iter().map(|k| k.to_string()).collect(),
        test_samples: test_out.samples.len(),
        demo_samples: demo_out.samples.len(),
        excluded,
    };
    Ok((test_out.samples, demo_out.samples, log))
}

pub fn generate(cfg: &RunConfig) -> Result<GenerationLog> {
    let out = cfg.output_path();
    let source = source_name(cfg);
    let load = |name: &str| -> Result<Vec<KnowledgeTriplet>> {
        let text = read(Stage::Generate, &out.join(name))?;
        Ok(kb::parse_sampled(&text, name, &source)?)
    };
    let tests = load(SAMPLED)?;
    let demos = load(DEMOS)?;
    let cache = open_cache(cfg, Stage::Generate)?;
    let (samples, demo_samples, log) = generate_points(cfg, &tests, &demos, Some(&cache))?;
    write(Stage::Generate, &out.join(SAMPLES), to_jsonl(&samples))?;
    write(Stage::Generate, &out.join(DEMO_SAMPLES), to_jsonl(&demo_samples))?;
    write(Stage::Generate, &out.join(GENERATION_LOG), pretty(&log))?;
    write_manifest(cfg)?;
    log::info!(
        "generate: {} test samples, {} demo samples, {} points excluded",
        log.test_samples,
        log.demo_samples,
        log.excluded.len()
    );
    Ok(log)
}

/// Owns whatever backend the config names.
pub enum ModelHandle {
    Mock(MockModel),
    Remote(HttpChatClient),
}

impl ModelHandle {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        match (&cfg.model.mock, &cfg.model.endpoint) {
            (Some(name), _) => Ok(ModelHandle::Mock(
                MockModel::parse(name, cfg.seeds.mock).map_err(ConfigError::Invalid)?,
            )),
            (None, Some(ep)) => Ok(ModelHandle::Remote(HttpChatClient::new(ep.clone())?)),
            (None, None) => Err(ConfigError::Invalid("[model] needs `mock` or `endpoint`".into()).into()),
        }
    }

    pub fn as_eval_model(&self) -> EvalModel<'_> {
        match self {
            ModelHandle::Mock(m) => EvalModel::Mock(*m),
            ModelHandle::Remote(c) => EvalModel::Remote(c),
        }
    }
}

pub fn eval_settings(cfg: &RunConfig) -> EvalSettings {
    EvalSettings {
        shots: cfg.shots,
        demo_seed: cfg.seeds.demos,
        parallelism: cfg.parallelism,
    }
}

pub fn evaluate(cfg: &RunConfig) -> Result<EvalStats> {
    let out = cfg.output_path();
    let samples: Vec<TestSample> = from_jsonl(Stage::Evaluate, &out.join(SAMPLES))?;
    let demo_samples: Vec<TestSample> = from_jsonl(Stage::Evaluate, &out.join(DEMO_SAMPLES))?;
    let model = ModelHandle::from_config(cfg)?;
    let cache = open_cache(cfg, Stage::Evaluate)?;
    let demos = DemoPool::from_samples(&demo_samples);
    let mut eval = run_harness(&samples, &model.as_eval_model(), &demos, eval_settings(cfg), Some(&cache))?;
    eval.matrix.seeds = seeds_map(cfg);
    eval.matrix.config_hash = cfg.config_hash();
    write(Stage::Evaluate, &out.join(RESPONSES), to_jsonl(&eval.records))?;
    write(Stage::Evaluate, &out.join(MATRIX), pretty(&eval.matrix))?;
    write_manifest(cfg)?;
    log::info!(
        "evaluate: {} samples, {} requests, {} cache hits, {} failures, {} unparsed",
        eval.records.len(),
        eval.stats.requests,
        eval.stats.cache_hits,
        eval.stats.failures,
        eval.stats.unparsed
    );
    Ok(eval.stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub step: String,
    pub columns: Vec<String>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub model_id: String,
    pub generator: String,
    pub columns: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Vec<AblationEntry>>,
}

fn ablation_file(step: &str) -> String {
    let slug = step.trim_start_matches('+').replace('+', "_").to_lowercase();
    format!("{slug}.json")
}

pub fn build_report(matrix: &ScoreMatrix, sweep: bool) -> Result<RunReport> {
    let metrics = MetricsReport::compute(matrix)?;
    let ablation = if sweep {
        let steps = crate::metrics::ablation_steps();
        Some(
            ablation_reports(matrix)?
                .into_iter()
                .zip(steps)
                .map(|((step, metrics), (_, keys))| AblationEntry {
                    step,
                    columns: keys.iter().map(|k| k.to_string()).collect(),
                    metrics,
                })
                .collect(),
        )
    } else {
        None
    };
    Ok(RunReport {
        config_hash: matrix.config_hash.clone(),
        model_id: matrix.model_id.clone(),
        generator: matrix.generator.clone(),
        columns: matrix.columns.clone(),
        seeds: matrix.seeds.clone(),
        metrics,
        ablation,
    })
}

pub fn render_report(report: &RunReport) -> String {
    let mut text = format!(
        "model: {}\ngenerator: {}\ncolumns: {}\nconfig: {}\n\n",
        report.model_id,
        report.generator,
        report.columns.join(", "),
        report.config_hash
    );
    text.push_str(&render_table(&report.generator, &report.metrics));
    if let Some(steps) = &report.ablation {
        text.push_str("\nablation (cumulative transformations)\n");
        text.push_str(&format!("{:<10} {:>8} {:>8} {:>10}\n", "step", "a_avg", "a_joint", "gain(pts)"));
        for s in steps {
            text.push_str(&format!(
                "{:<10} {:>8.4} {:>8.4} {:>+10.1}\n",
                s.step, s.metrics.a_avg, s.metrics.a_joint, s.metrics.gain_points
            ));
        }
    }
    text
}

pub fn report(cfg: &RunConfig) -> Result<RunReport> {
    let out = cfg.output_path();
    let path = out.join(MATRIX);
    let matrix: ScoreMatrix =
        serde_json::from_str(&read(Stage::Report, &path)?).map_err(|e| PipelineError::Artifact {
            stage: Stage::Report,
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let report = build_report(&matrix, cfg.ablation_sweep)?;
    write(Stage::Report, &out.join(REPORT), pretty(&report))?;
    write(Stage::Report, &out.join(REPORT_TEXT), render_report(&report))?;
    write(Stage::Report, &out.join(K_ROWS), k_rows_csv(&matrix))?;
    if let Some(steps) = &report.ablation {
        for s in steps {
            write(Stage::Report, &out.join(ABLATION_DIR).join(ablation_file(&s.step)), pretty(s))?;
        }
    }
    write_manifest(cfg)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub ingest: IngestLog,
    pub generation: GenerationLog,
    pub eval: EvalStats,
    pub report: RunReport,
}

/// All four stages in order.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let ingest = ingest(cfg)?;
    let generation = generate(cfg)?;
    let eval = evaluate(cfg)?;
    let report = report(cfg)?;
    Ok(RunSummary {
        ingest,
        generation,
        eval,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub generator: Generator,
    pub inputs: Vec<ManifestEntry>,
    pub artifacts: Vec<ManifestEntry>,
}

fn entry(path: &Path, shown: String) -> Option<ManifestEntry> {
    let bytes = fs::read(path).ok()?;
    Some(ManifestEntry {
        path: shown,
        sha256: digest_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

fn artifact_names(out: &Path) -> Vec<String> {
    let mut names: Vec<String> = [
        SAMPLED,
        DEMOS,
        INGEST_LOG,
        SAMPLES,
        DEMO_SAMPLES,
        GENERATION_LOG,
        RESPONSES,
        MATRIX,
        REPORT,
        REPORT_TEXT,
        K_ROWS,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Ok(dir) = fs::read_dir(out.join(ABLATION_DIR)) {
        let mut extra: Vec<String> = dir
            .filter_map(|e| e.ok())
            .map(|e| format!("{ABLATION_DIR}/{}", e.file_name().to_string_lossy()))
            .collect();
        extra.sort();
        names.extend(extra);
    }
    names
}

pub fn build_manifest(cfg: &RunConfig) -> Manifest {
    let out = cfg.output_path();
    let inputs = [Some(&cfg.kb), Some(&cfg.schema), cfg.pool.as_ref()]
        .into_iter()
        .flatten()
        .filter_map(|p| entry(&cfg.resolve(p), p.display().to_string()))
        .collect();
    let artifacts = artifact_names(&out)
        .into_iter()
        .filter_map(|name| entry(&out.join(&name), name))
        .collect();
    Manifest {
        config_hash: cfg.config_hash(),
        seeds: seeds_map(cfg),
        generator: cfg.generator,
        inputs,
        artifacts,
    }
}

pub fn write_manifest(cfg: &RunConfig) -> Result<Manifest> {
    let manifest = build_manifest(cfg);
    write(Stage::Report, &cfg.output_path().join(MANIFEST), pretty(&manifest))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Checks a config without running it: schema coverage of the KB, prototype
/// completeness for every evaluated relation, demonstration sufficiency and,
/// optionally, endpoint reachability.
pub fn validate(cfg: &RunConfig, check_endpoints: bool) -> Vec<Diagnostic> {
    let mut problems = Vec::new();
    let mut push = |message: String| problems.push(Diagnostic { message });

    let schema = match Schema::load(&cfg.schema_path()) {
        Ok(s) => s,
        Err(e) => {
            push(format!("schema: {e}"));
            return problems;
        }
    };

    let kb_text = match fs::read_to_string(cfg.kb_path()) {
        Ok(t) => t,
        Err(e) => {
            push(format!("kb: cannot read {}: {e}", cfg.kb_path().display()));
            return problems;
        }
    };
    let mut unknown = BTreeMap::<String, usize>::new();
    let mut evaluated = BTreeSet::new();
    for (idx, line) in kb_text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() == 3 {
            let rel = fields[1].trim();
            if !schema.contains(rel) {
                unknown.entry(rel.to_string()).or_insert(idx + 1);
            } else if !schema.is_excluded(rel) {
                evaluated.insert(rel.to_string());
            }
        }
    }
    for (rel, line) in &unknown {
        push(format!("kb: relation `{rel}` (first at line {line}) is not declared in the schema"));
    }
    let kb_ok = match kb::load_kb(&cfg.kb_path(), &schema) {
        Ok(_) => true,
        Err(KbError::UnknownRelation { .. }) => false,
        Err(e) => {
            push(format!("kb: {e}"));
            false
        }
    };

    if cfg.generator != Generator::LlmEval {
        if let Some(path) = cfg.pool_path() {
            match PrototypePool::load(&path) {
                Ok(pool) => {
                    for rel in &evaluated {
                        for gap in pool.missing(rel) {
                            push(gap.to_string());
                        }
                    }
                }
                Err(e) => push(e.to_string()),
            }
        }
    }

    if kb_ok {
        if let Ok(sampled) = sample_points(cfg) {
            let mut demo_counts = BTreeMap::<&str, usize>::new();
            let mut test_counts = BTreeMap::<&str, usize>::new();
            for d in &sampled.demos {
                *demo_counts.entry(d.relation.as_str()).or_default() += 1;
            }
            for t in &sampled.tests {
                *test_counts.entry(t.relation.as_str()).or_default() += 1;
            }
            for rel in &evaluated {
                let demos = demo_counts.get(rel.as_str()).copied().unwrap_or(0);
                let tests = test_counts.get(rel.as_str()).copied().unwrap_or(0);
                if cfg.shots > 0 && demos < cfg.shots {
                    push(format!(
                        "demos: relation `{rel}` has {demos} demonstration points, {} needed per bucket",
                        cfg.shots
                    ));
                }
                if tests == 0 {
                    push(format!("demos: relation `{rel}` has no knowledge points left for testing"));
                }
            }
        }
    }

    if check_endpoints {
        let endpoints = [("model", cfg.model.endpoint.as_ref()), ("rephraser", cfg.rephraser.as_ref())];
        for (name, ep) in endpoints {
            let Some(ep) = ep else { continue };
            match HttpChatClient::new(ep.clone()) {
                Ok(client) if client.reachable() => {}
                Ok(_) => push(format!("{name}: endpoint {} is unreachable", ep.base_url)),
                Err(e) => push(format!("{name}: {e}")),
            }
        }
    }
    problems
}

pub fn artifact_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_path().join(name)
}
