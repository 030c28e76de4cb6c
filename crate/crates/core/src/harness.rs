//! Few-shot statement verification.
//!
//! Prompts are built from five demonstrations drawn from the sample's
//! `(relation, key)` bucket followed by the test statement, each phrased as
//! `<statement>, is the statement above true or false? Please answer True or
//! False.` Replies are mapped to True/False by keyword, and each sample scores
//! 1 when the parsed answer matches its gold label.

use std::collections::{BTreeMap, HashSet};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use once_cell::sync::Lazy;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{prompt_hash, ResponseCache};
use crate::client::{ChatBackend, ClientError};
use crate::matrix::{ScoreMatrix, ScoreRow};
use crate::predicate::{Label, TransformKey};
use crate::textgen::{cached_complete, TestSample};
use crate::{digest_hex, seed_for};

pub const QUESTION: &str = "is the statement above true or false? Please answer True or False.";

/// Demonstrations per prompt in the default setting.
pub const DEFAULT_SHOTS: usize = 5;

pub const TRUE_KEYWORDS: [&str; 4] = ["True", "Entailed", "Correct", "Yes"];
pub const FALSE_KEYWORDS: [&str; 4] = ["False", "Contradicted", "Wrong", "No"];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("demo bucket ({relation}, {key}) holds {available} entries, {needed} needed")]
    BucketUnderflow {
        relation: String,
        key: TransformKey,
        available: usize,
        needed: usize,
    },
    #[error("expected {expected} demonstrations, got {got}")]
    DemoCount { expected: usize, got: usize },
    #[error("demonstration {sample_id} is not from bucket ({relation}, {key})")]
    WrongBucket {
        sample_id: String,
        relation: String,
        key: TransformKey,
    },
    #[error("triplet {0} appears in both demonstrations and test samples")]
    DemoLeak(String),
    #[error("knowledge point {triplet_id} has columns {found:?}, expected {expected:?}")]
    RaggedMatrix {
        triplet_id: String,
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("no samples to evaluate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    #[serde(rename = "T")]
    True,
    #[serde(rename = "F")]
    False,
    #[serde(rename = "unparsed")]
    Unparsed,
}

impl Answer {
    pub fn matches(self, label: Label) -> bool {
        matches!((self, label), (Answer::True, Label::True) | (Answer::False, Label::False))
    }
}

static KEYWORDS: Lazy<Regex> = Lazy::new(|| {
    let words: Vec<&str> = TRUE_KEYWORDS.iter().chain(FALSE_KEYWORDS.iter()).copied().collect();
    Regex::new(&format!(r"(?i)\b(?:{})\b", words.join("|"))).unwrap()
});

/// Maps a reply to True/False by its earliest keyword (case-insensitive,
/// whole words). Replies without a keyword are `Unparsed`.
pub fn extract_answer(raw_reply: &str) -> Answer {
    match KEYWORDS.find(raw_reply) {
        Some(m) => {
            let word = m.as_str();
            if TRUE_KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word)) {
                Answer::True
            } else {
                Answer::False
            }
        }
        None => Answer::Unparsed,
    }
}

pub fn format_query(statement: &str) -> String {
    format!("{statement}, {QUESTION}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoEntry {
    pub sample_id: String,
    pub triplet_id: String,
    pub relation: String,
    pub key: TransformKey,
    pub text: String,
    pub label: Label,
}

/// Held-out `(statement, answer)` pairs grouped by `(relation, key)`.
#[derive(Debug, Clone, Default)]
pub struct DemoPool {
    buckets: BTreeMap<(String, TransformKey), Vec<DemoEntry>>,
}

impl DemoPool {
    pub fn from_samples(samples: &[TestSample]) -> Self {
        let mut buckets: BTreeMap<(String, TransformKey), Vec<DemoEntry>> = BTreeMap::new();
        for s in samples {
            buckets.entry((s.relation.clone(), s.key)).or_default().push(DemoEntry {
                sample_id: s.sample_id.clone(),
                triplet_id: s.triplet_id.clone(),
                relation: s.relation.clone(),
                key: s.key,
                text: s.final_text.clone(),
                label: s.label,
            });
        }
        for bucket in buckets.values_mut() {
            bucket.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        }
        DemoPool { buckets }
    }

    pub fn bucket(&self, relation: &str, key: TransformKey) -> &[DemoEntry] {
        self.buckets
            .get(&(relation.to_string(), key))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn triplet_ids(&self) -> HashSet<&str> {
        self.buckets
            .values()
            .flatten()
            .map(|d| d.triplet_id.as_str())
            .collect()
    }

    /// Fails unless every bucket the samples need holds at least `shots` entries.
    pub fn check(&self, samples: &[TestSample], shots: usize) -> Result<(), HarnessError> {
        let ids = self.triplet_ids();
        for s in samples {
            if ids.contains(s.triplet_id.as_str()) {
                return Err(HarnessError::DemoLeak(s.triplet_id.clone()));
            }
            let available = self.bucket(&s.relation, s.key).len();
            if available < shots {
                return Err(HarnessError::BucketUnderflow {
                    relation: s.relation.clone(),
                    key: s.key,
                    available,
                    needed: shots,
                });
            }
        }
        Ok(())
    }

    /// Draws `shots` demonstrations for `sample`, uniformly without
    /// replacement. The draw depends only on `seed` and the sample id.
    pub fn draw(&self, sample: &TestSample, shots: usize, seed: u64) -> Result<Vec<&DemoEntry>, HarnessError> {
        let bucket = self.bucket(&sample.relation, sample.key);
        if bucket.len() < shots {
            return Err(HarnessError::BucketUnderflow {
                relation: sample.relation.clone(),
                key: sample.key,
                available: bucket.len(),
                needed: shots,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &sample.sample_id));
        Ok(bucket.choose_multiple(&mut rng, shots).collect())
    }
}

/// Demonstration blocks (statement, question, gold answer) followed by the
/// test statement and question. `shots` is the required demonstration count.
pub fn build_prompt(sample: &TestSample, demos: &[&DemoEntry], shots: usize) -> Result<String, HarnessError> {
    if demos.len() != shots {
        return Err(HarnessError::DemoCount {
            expected: shots,
            got: demos.len(),
        });
    }
    let mut blocks = Vec::with_capacity(demos.len() + 1);
    for d in demos {
        if d.relation != sample.relation || d.key != sample.key {
            return Err(HarnessError::WrongBucket {
                sample_id: d.sample_id.clone(),
                relation: sample.relation.clone(),
                key: sample.key,
            });
        }
        blocks.push(format!("{}\n{}", format_query(&d.text), d.label.as_word()));
    }
    blocks.push(format_query(&sample.final_text));
    Ok(blocks.join("\n\n"))
}

/// Offline stand-ins for evaluated models. They read the gold label from the
/// sample instead of understanding the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockModel {
    /// Always answers correctly.
    PerfectKnower,
    AlwaysTrue,
    /// Fair coin per sample.
    CoinFlipper { seed: u64 },
    /// Correct on untransformed statements, fair coin on every other key.
    SurfaceFormKnower { seed: u64 },
}

/// True when the first hex digit of `sha256("{seed}:{sample_id}")` is even.
fn coin(seed: u64, sample_id: &str) -> bool {
    let digest = digest_hex(format!("{seed}:{sample_id}").as_bytes());
    u8::from_str_radix(&digest[..1], 16).expect("hex digit").is_multiple_of(2)
}

impl MockModel {
    pub fn model_id(&self) -> String {
        match self {
            MockModel::PerfectKnower => "mock:perfect".into(),
            MockModel::AlwaysTrue => "mock:always-true".into(),
            MockModel::CoinFlipper { seed } => format!("mock:coin:{seed}"),
            MockModel::SurfaceFormKnower { seed } => format!("mock:surface:{seed}"),
        }
    }

    pub fn answer(&self, sample: &TestSample) -> Answer {
        let truth = |label: Label| match label {
            Label::True => Answer::True,
            Label::False => Answer::False,
        };
        let flip = |seed: u64| if coin(seed, &sample.sample_id) { Answer::True } else { Answer::False };
        match *self {
            MockModel::PerfectKnower => truth(sample.label),
            MockModel::AlwaysTrue => Answer::True,
            MockModel::CoinFlipper { seed } => flip(seed),
            MockModel::SurfaceFormKnower { seed } => {
                if sample.key == TransformKey::NONE {
                    truth(sample.label)
                } else {
                    flip(seed)
                }
            }
        }
    }

    /// Parses `perfect`, `always-true`, `coin` and `surface`; the latter two
    /// take `seed`.
    pub fn parse(name: &str, seed: u64) -> Result<Self, String> {
        match name.trim().to_ascii_lowercase().as_str() {
            "perfect" | "perfect-knower" => Ok(MockModel::PerfectKnower),
            "always-true" => Ok(MockModel::AlwaysTrue),
            "coin" | "coin-flipper" => Ok(MockModel::CoinFlipper { seed }),
            "surface" | "surface-form" | "surface-form-knower" => Ok(MockModel::SurfaceFormKnower { seed }),
            other => Err(format!("unknown mock model `{other}`")),
        }
    }
}

impl FromStr for MockModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MockModel::parse(s, 0)
    }
}

pub enum EvalModel<'a> {
    Mock(MockModel),
    Remote(&'a dyn ChatBackend),
}

impl EvalModel<'_> {
    pub fn model_id(&self) -> String {
        match self {
            EvalModel::Mock(m) => m.model_id(),
            EvalModel::Remote(b) => b.model_id().to_string(),
        }
    }
}

struct MockBackend<'s> {
    model: MockModel,
    id: String,
    sample: &'s TestSample,
}

impl ChatBackend for MockBackend<'_> {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _prompt: &str) -> Result<String, ClientError> {
        Ok(match self.model.answer(self.sample) {
            Answer::True => "True".into(),
            Answer::False => "False".into(),
            Answer::Unparsed => String::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalSettings {
    /// Demonstrations per prompt; 0 for zero-shot.
    pub shots: usize,
    pub demo_seed: u64,
    pub parallelism: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            shots: DEFAULT_SHOTS,
            demo_seed: 0,
            parallelism: 4,
        }
    }
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub sample_id: String,
    pub triplet_id: String,
    pub column: String,
    pub prompt_hash: String,
    pub raw_reply: String,
    pub parsed: Answer,
    pub score: u8,
    /// Set when the request failed after all retries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalStats {
    /// Calls that reached the model (cache misses).
    pub requests: usize,
    pub cache_hits: usize,
    pub failures: usize,
    pub unparsed: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub matrix: ScoreMatrix,
    pub records: Vec<ResponseRecord>,
    pub prompts: Vec<String>,
    pub stats: EvalStats,
}

struct CountingBackend<'b> {
    inner: &'b dyn ChatBackend,
    calls: &'b AtomicUsize,
    sent: std::sync::atomic::AtomicBool,
}

impl ChatBackend for CountingBackend<'_> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.sent.store(true, Ordering::Relaxed);
        self.inner.complete(prompt)
    }
}

/// Scores every sample. `samples` must be ordered by knowledge point (as
/// produced by generation); rows follow that order and every point must have
/// the same columns.
pub fn evaluate(
    samples: &[TestSample],
    model: &EvalModel<'_>,
    demos: &DemoPool,
    settings: EvalSettings,
    cache: Option<&ResponseCache>,
) -> Result<Evaluation, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::Empty);
    }
    demos.check(samples, settings.shots)?;
    let prompts: Vec<String> = samples
        .iter()
        .map(|s| build_prompt(s, &demos.draw(s, settings.shots, settings.demo_seed)?, settings.shots))
        .collect::<Result<_, _>>()?;

    let calls = AtomicUsize::new(0);
    let hits = AtomicUsize::new(0);
    let model_id = model.model_id();

    let ask = |sample: &TestSample, prompt: &str| -> Result<String, ClientError> {
        let (reply, sent) = match model {
            EvalModel::Remote(backend) => {
                let counted = CountingBackend {
                    inner: *backend,
                    calls: &calls,
                    sent: Default::default(),
                };
                (cached_complete(&counted, cache, prompt, ""), counted.sent.load(Ordering::Relaxed))
            }
            EvalModel::Mock(mock) => {
                let backend = MockBackend {
                    model: *mock,
                    id: model_id.clone(),
                    sample,
                };
                let counted = CountingBackend {
                    inner: &backend,
                    calls: &calls,
                    sent: Default::default(),
                };
                // Mock replies depend on the sample, not only the prompt.
                (cached_complete(&counted, cache, prompt, &sample.sample_id), counted.sent.load(Ordering::Relaxed))
            }
        };
        if !sent && reply.is_ok() {
            hits.fetch_add(1, Ordering::Relaxed);
        }
        reply
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallelism.max(1))
        .build()
        .expect("thread pool");
    let replies: Vec<Result<String, ClientError>> = pool.install(|| {
        samples
            .par_iter()
            .zip(prompts.par_iter())
            .map(|(s, p)| ask(s, p))
            .collect()
    });

    let mut stats = EvalStats::default();
    let mut records = Vec::with_capacity(samples.len());
    for ((sample, prompt), reply) in samples.iter().zip(&prompts).zip(replies) {
        let (raw_reply, error) = match reply {
            Ok(r) => (r, None),
            Err(e) => {
                log::error!("{}: {e}", sample.sample_id);
                stats.failures += 1;
                (String::new(), Some(e.to_string()))
            }
        };
        let parsed = if error.is_some() { Answer::Unparsed } else { extract_answer(&raw_reply) };
        if parsed == Answer::Unparsed {
            stats.unparsed += 1;
        }
        records.push(ResponseRecord {
            sample_id: sample.sample_id.clone(),
            triplet_id: sample.triplet_id.clone(),
            column: sample.column.clone(),
            prompt_hash: prompt_hash(prompt),
            raw_reply,
            parsed,
            score: parsed.matches(sample.label) as u8,
            error,
        });
    }
    stats.requests = calls.into_inner();
    stats.cache_hits = hits.into_inner();

    let matrix = assemble_matrix(samples, &records, &model_id)?;
    Ok(Evaluation {
        matrix,
        records,
        prompts,
        stats,
    })
}

/// Groups per-sample scores into rows. Records must align with samples.
pub fn assemble_matrix(
    samples: &[TestSample],
    records: &[ResponseRecord],
    model_id: &str,
) -> Result<ScoreMatrix, HarnessError> {
    let first = samples.first().ok_or(HarnessError::Empty)?;
    let mut rows: Vec<ScoreRow> = Vec::new();
    let mut row_columns: Vec<Vec<String>> = Vec::new();
    for (s, r) in samples.iter().zip(records) {
        debug_assert_eq!(s.sample_id, r.sample_id);
        if rows.last().map(|row| row.triplet_id.as_str()) != Some(s.triplet_id.as_str()) {
            rows.push(ScoreRow {
                triplet_id: s.triplet_id.clone(),
                relation: s.relation.clone(),
                polarity: s.polarity,
                scores: Vec::new(),
            });
            row_columns.push(Vec::new());
        }
        rows.last_mut().unwrap().scores.push(r.score);
        row_columns.last_mut().unwrap().push(s.column.clone());
    }
    let columns = row_columns[0].clone();
    for (row, cols) in rows.iter().zip(&row_columns) {
        if cols != &columns {
            return Err(HarnessError::RaggedMatrix {
                triplet_id: row.triplet_id.clone(),
                found: cols.clone(),
                expected: columns.clone(),
            });
        }
    }
    let mut seen = HashSet::new();
    for row in &rows {
        if !seen.insert(row.triplet_id.as_str()) {
            return Err(HarnessError::RaggedMatrix {
                triplet_id: row.triplet_id.clone(),
                found: vec![],
                expected: columns.clone(),
            });
        }
    }
    Ok(ScoreMatrix {
        model_id: model_id.to_string(),
        generator: first.generator.to_string(),
        columns,
        seeds: BTreeMap::new(),
        config_hash: String::new(),
        rows,
    })
}
