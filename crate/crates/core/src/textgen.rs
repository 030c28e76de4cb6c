//! Turning predicate variants back into text.
//!
//! Each variant is rendered through a hand-written prototype, looked up by
//! `(relation, base key, surface)`: double-negated variants use the negated
//! surface of their base key. The instantiated prototype may then be
//! paraphrased by a chat endpoint. The two baseline generators (raw template
//! and direct LLM generation) live here as well.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use once_cell::sync::Lazy;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{cache_key, prompt_hash, CacheEntry, ResponseCache};
use crate::client::ChatBackend;
use crate::kb::{KnowledgeTriplet, Polarity};
use crate::predicate::{derive_variants, label_for, to_predicate, Label, TransformKey};

pub const REPHRASE_INSTRUCTION: &str = "Please paraphrase the following statement to present the same concept in a different way. DO NOT change the basic sentence structure. Directly output the paraphrased statement without other text. Statement: [prototype]";

pub const LLMEVAL_INSTRUCTION: &str = "Based on the given knowledge triplet, generate 8 statement to express the underlying knowledge in different ways. Output one statement per line. Directly output the statements without other text. Knowledge triplet: [triplet].";

/// Number of statements requested from the LLM-generation baseline.
pub const LLMEVAL_COUNT: usize = 8;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("cannot read prototype pool {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("prototype pool line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("prototype pool is missing ({relation}, {key}, {surface})")]
    Missing {
        relation: String,
        key: TransformKey,
        surface: Surface,
    },
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("LLM generation for triplet {triplet_id}: expected {expected} statements, got {got}")]
    UnderGenerated {
        triplet_id: String,
        expected: usize,
        got: usize,
    },
    #[error("LLM generation for triplet {triplet_id} failed: {message}")]
    Backend { triplet_id: String, message: String },
    #[error("generator `{0}` needs a configured chat endpoint")]
    NoBackend(Generator),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Affirmative,
    Negated,
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Surface::Affirmative => "affirmative",
            Surface::Negated => "negated",
        })
    }
}

impl FromStr for Surface {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "affirmative" => Ok(Surface::Affirmative),
            "negated" => Ok(Surface::Negated),
            other => Err(format!("unknown surface `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prototype {
    pub relation: String,
    pub base_key: TransformKey,
    pub surface: Surface,
    pub template: String,
}

const HEAD_SLOT: &str = "[X]";
const TAIL_SLOT: &str = "[Y]";

fn check_template(template: &str) -> Result<(), String> {
    for slot in [HEAD_SLOT, TAIL_SLOT] {
        let n = template.matches(slot).count();
        if n != 1 {
            return Err(format!("template must contain exactly one {slot}, found {n}: {template:?}"));
        }
    }
    Ok(())
}

/// Prototype templates indexed by `(relation, base key, surface)`.
#[derive(Debug, Clone, Default)]
pub struct PrototypePool {
    entries: BTreeMap<(String, TransformKey, Surface), Prototype>,
}

impl PrototypePool {
    /// Parses `relation \t base_key \t surface \t template` records. Blank and
    /// `#` lines are skipped.
    pub fn parse(text: &str) -> Result<Self, PoolError> {
        let mut pool = PrototypePool::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |message: String| PoolError::Malformed { line: idx + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(malformed(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            let key: TransformKey = fields[1].parse().map_err(malformed)?;
            if key.dn {
                return Err(malformed(format!(
                    "base key `{key}` carries DN; store it as `{}` with surface `negated`",
                    key.base()
                )));
            }
            let surface: Surface = fields[2].parse().map_err(malformed)?;
            let template = fields[3].to_string();
            check_template(&template).map_err(malformed)?;
            let relation = fields[0].trim().to_string();
            let slot = (relation.clone(), key, surface);
            if pool.entries.contains_key(&slot) {
                return Err(malformed(format!("duplicate entry ({relation}, {key}, {surface})")));
            }
            pool.entries.insert(
                slot,
                Prototype {
                    relation,
                    base_key: key,
                    surface,
                    template,
                },
            );
        }
        Ok(pool)
    }

    pub fn load(path: &Path) -> Result<Self, PoolError> {
        let text = fs::read_to_string(path).map_err(|source| PoolError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn retrieve(&self, relation: &str, key: TransformKey) -> Result<&Prototype, PoolError> {
        let surface = if key.dn { Surface::Negated } else { Surface::Affirmative };
        self.entries
            .get(&(relation.to_string(), key.base(), surface))
            .ok_or_else(|| PoolError::Missing {
                relation: relation.to_string(),
                key: key.base(),
                surface,
            })
    }

    /// Every `(base key, surface)` slot absent for `relation`.
    pub fn missing(&self, relation: &str) -> Vec<PoolError> {
        let mut out = Vec::new();
        for key in TransformKey::BASE {
            for surface in [Surface::Affirmative, Surface::Negated] {
                if !self.entries.contains_key(&(relation.to_string(), key, surface)) {
                    out.push(PoolError::Missing {
                        relation: relation.to_string(),
                        key,
                        surface,
                    });
                }
            }
        }
        out
    }

    /// Checks all eight templates for each relation; returns how many were
    /// validated, or every missing slot.
    pub fn check_complete<'a>(&self, relations: impl IntoIterator<Item = &'a str>) -> Result<usize, Vec<PoolError>> {
        let mut validated = 0;
        let mut missing = Vec::new();
        for relation in relations {
            let gaps = self.missing(relation);
            validated += 8 - gaps.len();
            missing.extend(gaps);
        }
        if missing.is_empty() {
            Ok(validated)
        } else {
            Err(missing)
        }
    }
}

/// Prototype lookup: double-negated keys map to the negated surface of their
/// base key.
pub fn retrieve_prototype<'a>(
    pool: &'a PrototypePool,
    relation: &str,
    key: TransformKey,
) -> Result<&'a Prototype, PoolError> {
    pool.retrieve(relation, key)
}

/// Fills `[X]` with the head and `[Y]` with the tail in a single left-to-right
/// pass; inserted text is never re-scanned.
pub fn instantiate(proto: &Prototype, head: &str, tail: &str) -> String {
    let template = proto.template.as_str();
    let mut out = String::with_capacity(template.len() + head.len() + tail.len());
    let mut rest = template;
    while let Some(pos) = rest.find('[') {
        out.push_str(&rest[..pos]);
        let tail_part = &rest[pos..];
        if let Some(after) = tail_part.strip_prefix(HEAD_SLOT) {
            out.push_str(head);
            rest = after;
        } else if let Some(after) = tail_part.strip_prefix(TAIL_SLOT) {
            out.push_str(tail);
            rest = after;
        } else {
            out.push('[');
            rest = &tail_part[1..];
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    #[serde(rename = "pretexeval")]
    PretexEval,
    Direct,
    #[serde(rename = "llmeval")]
    LlmEval,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::PretexEval => "pretexeval",
            Generator::Direct => "direct",
            Generator::LlmEval => "llmeval",
        })
    }
}

impl FromStr for Generator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pretexeval" => Ok(Generator::PretexEval),
            "direct" => Ok(Generator::Direct),
            "llmeval" => Ok(Generator::LlmEval),
            other => Err(format!("unknown generator `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSample {
    pub sample_id: String,
    pub triplet_id: String,
    pub relation: String,
    pub polarity: Polarity,
    pub key: TransformKey,
    /// Score-matrix column this sample fills.
    pub column: String,
    pub prototype_text: String,
    pub final_text: String,
    pub label: Label,
    pub rephrased: bool,
    pub generator: Generator,
}

pub fn sample_id(triplet_id: &str, key: TransformKey) -> String {
    format!("{triplet_id}-{}", key.code())
}

/// A chat endpoint used for paraphrasing, with an optional response cache.
pub struct Rephraser<'a> {
    pub backend: &'a dyn ChatBackend,
    pub cache: Option<&'a ResponseCache>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rephrased {
    pub text: String,
    pub rephrased: bool,
}

pub fn rephrase_prompt(statement: &str) -> String {
    REPHRASE_INSTRUCTION.replace("[prototype]", statement)
}

/// Sends `prompt` through `backend`, consulting `cache` first.
pub fn cached_complete(
    backend: &dyn ChatBackend,
    cache: Option<&ResponseCache>,
    prompt: &str,
    extra: &str,
) -> Result<String, crate::client::ClientError> {
    let key = cache_key(backend.model_id(), prompt, extra);
    if let Some(hit) = cache.and_then(|c| c.get(&key)) {
        return Ok(hit.reply);
    }
    let reply = backend.complete(prompt)?;
    if let Some(cache) = cache {
        let entry = CacheEntry {
            model: backend.model_id().to_string(),
            prompt_hash: prompt_hash(prompt),
            reply: reply.clone(),
        };
        if let Err(e) = cache.put(&key, entry) {
            log::warn!("cannot write cache entry: {e}");
        }
    }
    Ok(reply)
}

/// Paraphrases one statement. With no rephraser, or when the endpoint fails
/// or answers with nothing, the input comes back unchanged.
pub fn rephrase(statement: &str, rephraser: Option<&Rephraser<'_>>) -> Rephrased {
    let unchanged = || Rephrased {
        text: statement.to_string(),
        rephrased: false,
    };
    let Some(r) = rephraser else {
        return unchanged();
    };
    match cached_complete(r.backend, r.cache, &rephrase_prompt(statement), "") {
        Ok(reply) => match reply.lines().map(str::trim).find(|l| !l.is_empty()) {
            Some(line) => Rephrased {
                text: line.to_string(),
                rephrased: true,
            },
            None => {
                log::warn!("empty paraphrase for {statement:?}; keeping prototype");
                unchanged()
            }
        },
        Err(e) => {
            log::warn!("paraphrase failed for {statement:?}: {e}");
            unchanged()
        }
    }
}

/// Renders the variants of `triplet` selected by `keys`, in canonical order.
pub fn generate_pretexeval_keys(
    triplet: &KnowledgeTriplet,
    pool: &PrototypePool,
    keys: &[TransformKey],
    rephraser: Option<&Rephraser<'_>>,
) -> Result<Vec<TestSample>, PoolError> {
    let base = to_predicate(triplet);
    let mut out = Vec::with_capacity(keys.len());
    for variant in derive_variants(&base).into_iter().filter(|v| keys.contains(&v.key)) {
        let proto = retrieve_prototype(pool, &variant.relation, variant.key)?;
        let prototype_text = instantiate(proto, variant.head.as_str(), variant.tail.as_str());
        let Rephrased { text, rephrased } = rephrase(&prototype_text, rephraser);
        out.push(TestSample {
            sample_id: sample_id(&triplet.triplet_id, variant.key),
            triplet_id: triplet.triplet_id.clone(),
            relation: triplet.relation.clone(),
            polarity: triplet.polarity,
            key: variant.key,
            column: variant.key.to_string(),
            prototype_text,
            final_text: text,
            label: label_for(variant.key, triplet.polarity),
            rephrased,
            generator: Generator::PretexEval,
        });
    }
    Ok(out)
}

pub fn generate_pretexeval(
    triplet: &KnowledgeTriplet,
    pool: &PrototypePool,
    rephraser: Option<&Rephraser<'_>>,
) -> Result<Vec<TestSample>, PoolError> {
    generate_pretexeval_keys(triplet, pool, &TransformKey::ALL, rephraser)
}

/// The raw untransformed template, never paraphrased.
pub fn generate_direct(triplet: &KnowledgeTriplet, pool: &PrototypePool) -> Result<TestSample, PoolError> {
    let mut sample = generate_pretexeval_keys(triplet, pool, &[TransformKey::NONE], None)?
        .pop()
        .expect("one key requested");
    sample.generator = Generator::Direct;
    Ok(sample)
}

pub fn llmeval_prompt(triplet: &KnowledgeTriplet) -> String {
    let rendered = format!("({}, {}, {})", triplet.head, triplet.relation, triplet.tail);
    LLMEVAL_INSTRUCTION.replace("[triplet]", &rendered)
}

static NUMBERING: Lazy<Regex> = Lazy::new(|| Regex::new(r"^(?:\d+[.)]|-)\s*").unwrap());

/// Splits an LLM reply into statements: one per non-blank line, with leading
/// `N.`, `N)` or `- ` markers removed.
pub fn parse_statement_lines(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| NUMBERING.replace(l, "").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Asks the backend for eight statements about the triplet. Surplus lines
/// are dropped; a short reply is padded with its last line when `pad` is set,
/// otherwise the triplet fails.
pub fn generate_llmeval(
    triplet: &KnowledgeTriplet,
    backend: &dyn ChatBackend,
    cache: Option<&ResponseCache>,
    pad: bool,
) -> Result<Vec<TestSample>, GenerationError> {
    let reply = cached_complete(backend, cache, &llmeval_prompt(triplet), "").map_err(|e| {
        GenerationError::Backend {
            triplet_id: triplet.triplet_id.clone(),
            message: e.to_string(),
        }
    })?;
    let mut lines = parse_statement_lines(&reply);
    if lines.len() > LLMEVAL_COUNT {
        log::warn!(
            "triplet {}: {} statements generated, keeping the first {LLMEVAL_COUNT}",
            triplet.triplet_id,
            lines.len()
        );
        lines.truncate(LLMEVAL_COUNT);
    }
    if lines.len() < LLMEVAL_COUNT {
        let got = lines.len();
        match lines.last().cloned() {
            Some(last) if pad => {
                log::warn!("triplet {}: padding {got} statements to {LLMEVAL_COUNT}", triplet.triplet_id);
                lines.resize(LLMEVAL_COUNT, last);
            }
            _ => {
                return Err(GenerationError::UnderGenerated {
                    triplet_id: triplet.triplet_id.clone(),
                    expected: LLMEVAL_COUNT,
                    got,
                })
            }
        }
    }
    let label = label_for(TransformKey::NONE, triplet.polarity);
    Ok(lines
        .into_iter()
        .enumerate()
        .map(|(j, text)| TestSample {
            sample_id: format!("{}-llm{}", triplet.triplet_id, j + 1),
            triplet_id: triplet.triplet_id.clone(),
            relation: triplet.relation.clone(),
            polarity: triplet.polarity,
            key: TransformKey::NONE,
            column: format!("S{}", j + 1),
            prototype_text: text.clone(),
            final_text: text,
            label,
            rephrased: false,
            generator: Generator::LlmEval,
        })
        .collect())
}

/// Everything needed to render a batch of knowledge points.
pub struct GenerationPlan<'a> {
    pub generator: Generator,
    pub keys: Vec<TransformKey>,
    pub pool: Option<&'a PrototypePool>,
    pub rephraser: Option<Rephraser<'a>>,
    /// Endpoint for the LLM-generation baseline.
    pub llm: Option<&'a dyn ChatBackend>,
    pub llm_cache: Option<&'a ResponseCache>,
    pub pad_llmeval: bool,
}

#[derive(Debug, Default)]
pub struct GenerationOutput {
    pub samples: Vec<TestSample>,
    /// Knowledge points dropped from the run, with the reason.
    pub excluded: Vec<(String, String)>,
}

/// Generates samples for every point using up to `parallelism` threads.
/// Output is ordered by `(triplet_id, column)` regardless of completion order.
/// Pool errors abort; per-triplet LLM failures exclude that triplet.
pub fn generate_all(
    points: &[KnowledgeTriplet],
    plan: &GenerationPlan<'_>,
    parallelism: usize,
) -> Result<GenerationOutput, GenerationError> {
    let mut points: Vec<&KnowledgeTriplet> = points.iter().collect();
    points.sort_by(|a, b| a.triplet_id.cmp(&b.triplet_id));

    let one = |t: &KnowledgeTriplet| -> Result<Vec<TestSample>, GenerationError> {
        match plan.generator {
            Generator::PretexEval => {
                let pool = plan.pool.expect("pretexeval requires a prototype pool");
                Ok(generate_pretexeval_keys(t, pool, &plan.keys, plan.rephraser.as_ref())?)
            }
            Generator::Direct => {
                let pool = plan.pool.expect("direct requires a prototype pool");
                Ok(vec![generate_direct(t, pool)?])
            }
            Generator::LlmEval => {
                let backend = plan.llm.ok_or(GenerationError::NoBackend(Generator::LlmEval))?;
                generate_llmeval(t, backend, plan.llm_cache, plan.pad_llmeval)
            }
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<Vec<TestSample>, GenerationError>> =
        pool.install(|| points.par_iter().map(|t| one(t)).collect());

    let mut out = GenerationOutput::default();
    for (point, result) in points.iter().zip(results) {
        match result {
            Ok(samples) => out.samples.extend(samples),
            Err(e @ (GenerationError::UnderGenerated { .. } | GenerationError::Backend { .. })) => {
                log::error!("{e}; triplet excluded");
                out.excluded.push((point.triplet_id.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::client::ClientError;
    use crate::kb::Entity;

    fn pool() -> PrototypePool {
        PrototypePool::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/prototypes.tsv")).unwrap()
    }

    fn triplet(h: &str, r: &str, t: &str, p: Polarity) -> KnowledgeTriplet {
        KnowledgeTriplet::new(Entity::new(h).unwrap(), r, Entity::new(t).unwrap(), p, "t")
    }

    struct Upper {
        calls: AtomicUsize,
    }

    impl ChatBackend for Upper {
        fn model_id(&self) -> &str {
            "stub-upper"
        }
        fn complete(&self, prompt: &str) -> Result<String, ClientError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let statement = prompt.rsplit("Statement: ").next().unwrap();
            Ok(format!("  {}\n", statement.to_uppercase()))
        }
    }

    struct Failing;

    impl ChatBackend for Failing {
        fn model_id(&self) -> &str {
            "down"
        }
        fn complete(&self, _: &str) -> Result<String, ClientError> {
            Err(ClientError::Transport("connection refused".into()))
        }
    }

    struct Canned(&'static str);

    impl ChatBackend for Canned {
        fn model_id(&self) -> &str {
            "canned"
        }
        fn complete(&self, _: &str) -> Result<String, ClientError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn fixture_pool_is_complete() {
        let pool = pool();
        let relations = [
            "may treat",
            "may prevent",
            "Symptoms",
            "Affected Sites",
            "Therapeutic Drugs",
            "Surgical Procedures",
        ];
        assert_eq!(pool.check_complete(relations).unwrap(), 48);
        assert_eq!(pool.len(), 48);
    }

    #[test]
    fn retrieves_published_templates() {
        let pool = pool();
        assert_eq!(pool.retrieve("may treat", TransformKey::NONE).unwrap().template, "[X] might treat [Y] .");
        assert_eq!(
            pool.retrieve("Symptoms", TransformKey::INV).unwrap().template,
            "Common symptoms of [X] include [Y]."
        );
        assert_eq!(
            pool.retrieve("may treat", TransformKey::DN).unwrap().template,
            "[X] is not able to treat [Y] ."
        );
        let p = pool.retrieve("may treat", TransformKey::INV_INS_DN).unwrap();
        assert_eq!((p.base_key, p.surface), (TransformKey::INV_INS, Surface::Negated));
    }

    #[test]
    fn missing_entry_is_named() {
        let text = "may prevent\tNone\taffirmative\t[X] may be able to prevent [Y] .\n";
        let pool = PrototypePool::parse(text).unwrap();
        let err = pool.retrieve("may prevent", TransformKey::INS_DN).unwrap_err();
        assert_eq!(err.to_string(), "prototype pool is missing (may prevent, Ins, negated)");
        assert_eq!(pool.check_complete(["may prevent"]).unwrap_err().len(), 7);
    }

    #[test]
    fn pool_rejects_bad_records() {
        assert!(PrototypePool::parse("r\tNone\taffirmative\t[X] and [X] [Y]\n").is_err());
        assert!(PrototypePool::parse("r\tNone\taffirmative\tonly [X]\n").is_err());
        assert!(PrototypePool::parse("r\tDN\tnegated\t[X] [Y]\n").is_err());
        assert!(PrototypePool::parse("r\tNone\tsideways\t[X] [Y]\n").is_err());
        let dup = "r\tNone\taffirmative\t[X] [Y]\nr\tNone\taffirmative\t[Y] [X]\n";
        assert!(PrototypePool::parse(dup).is_err());
    }

    #[test]
    fn substitution() {
        let proto = pool().retrieve("may treat", TransformKey::NONE).unwrap().clone();
        assert_eq!(instantiate(&proto, "Aspirin", "migraine"), "Aspirin might treat migraine .");
    }

    #[test]
    fn substitution_is_single_pass() {
        let proto = pool().retrieve("may treat", TransformKey::NONE).unwrap().clone();
        let out = instantiate(&proto, "Drug [Y]", "[X] disease");
        assert_eq!(out, "Drug [Y] might treat [X] disease .");
        let plain = instantiate(&proto, "a", "b");
        assert!(!plain.contains("[X]") && !plain.contains("[Y]"));
    }

    #[test]
    fn stray_brackets_survive() {
        let proto = Prototype {
            relation: "r".into(),
            base_key: TransformKey::NONE,
            surface: Surface::Affirmative,
            template: "[note] [X] relates to [Y] [".into(),
        };
        assert_eq!(instantiate(&proto, "a", "b"), "[note] a relates to b [");
    }

    #[test]
    fn offline_rephrase_passes_through() {
        let r = rephrase("Aspirin might treat migraine .", None);
        assert_eq!(r.text, "Aspirin might treat migraine .");
        assert!(!r.rephrased);
    }

    #[test]
    fn stub_rephrase() {
        let stub = Upper { calls: AtomicUsize::new(0) };
        let cache = ResponseCache::in_memory();
        let r = Rephraser {
            backend: &stub,
            cache: Some(&cache),
        };
        let out = rephrase("Aspirin might treat migraine .", Some(&r));
        assert_eq!(out.text, "ASPIRIN MIGHT TREAT MIGRAINE .");
        assert!(out.rephrased);
        rephrase("Aspirin might treat migraine .", Some(&r));
        assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn failed_rephrase_keeps_input() {
        let r = Rephraser {
            backend: &Failing,
            cache: None,
        };
        let out = rephrase("x y", Some(&r));
        assert_eq!(out, Rephrased { text: "x y".into(), rephrased: false });
    }

    #[test]
    fn rephrase_prompt_is_verbatim() {
        let p = rephrase_prompt("Aspirin might treat migraine .");
        assert!(p.contains("DO NOT change the basic sentence structure"));
        assert!(p.ends_with("Statement: Aspirin might treat migraine ."));
    }

    #[test]
    fn pretexeval_sample_set() {
        let t = triplet("Aspirin", "may treat", "migraine", Polarity::Positive);
        let samples = generate_pretexeval(&t, &pool(), None).unwrap();
        assert_eq!(samples.len(), 8);
        let keys: Vec<TransformKey> = samples.iter().map(|s| s.key).collect();
        assert_eq!(keys, TransformKey::ALL);
        assert_eq!(samples.iter().filter(|s| s.label == Label::True).count(), 4);
        assert!(samples.iter().all(|s| s.final_text == s.prototype_text && !s.rephrased));
        assert_eq!(samples[1].final_text, "migraine may be treated by Aspirin");
        assert_eq!(samples[4].final_text, "Aspirin is not able to treat migraine .");
        assert_eq!(samples[4].label, Label::False);
    }

    #[test]
    fn rephrasing_keeps_identity_and_labels() {
        let t = triplet("Aspirin", "may treat", "migraine", Polarity::Negative);
        let stub = Upper { calls: AtomicUsize::new(0) };
        let r = Rephraser {
            backend: &stub,
            cache: None,
        };
        let plain = generate_pretexeval(&t, &pool(), None).unwrap();
        let para = generate_pretexeval(&t, &pool(), Some(&r)).unwrap();
        for (a, b) in plain.iter().zip(&para) {
            assert_eq!((&a.sample_id, a.key, a.label), (&b.sample_id, b.key, b.label));
            assert_eq!(b.final_text, a.final_text.to_uppercase());
            assert!(b.rephrased);
        }
    }

    #[test]
    fn none_subset_matches_direct() {
        let t = triplet("Aspirin", "may treat", "migraine", Polarity::Positive);
        let direct = generate_direct(&t, &pool()).unwrap();
        let mut sub = generate_pretexeval_keys(&t, &pool(), &[TransformKey::NONE], None).unwrap();
        assert_eq!(sub.len(), 1);
        let sub = sub.pop().unwrap();
        assert_eq!(direct.final_text, "Aspirin might treat migraine .");
        assert_eq!(direct.label, Label::True);
        assert_eq!(direct.generator, Generator::Direct);
        assert_eq!(
            serde_json::to_string(&TestSample { generator: Generator::Direct, ..sub }).unwrap(),
            serde_json::to_string(&direct).unwrap()
        );
    }

    #[test]
    fn direct_negative() {
        let t = triplet("Aspirin", "may treat", "migraine", Polarity::Negative);
        let d = generate_direct(&t, &pool()).unwrap();
        assert_eq!(d.final_text, "Aspirin might treat migraine .");
        assert_eq!(d.label, Label::False);
    }

    #[test]
    fn llmeval_prompt_renders_triplet() {
        let t = triplet("Aspirin", "may treat", "migraine", Polarity::Positive);
        assert!(llmeval_prompt(&t).ends_with("Knowledge triplet: (Aspirin, may treat, migraine)."));
        assert!(llmeval_prompt(&t).starts_with("Based on the given knowledge triplet, generate 8 statement"));
    }

    #[test]
    fn numbering_is_stripped() {
        let lines = parse_statement_lines("1. A\n\n2) B\n- C\n10. D\n  E  \n");
        assert_eq!(lines, ["A", "B", "C", "D", "E"]);
    }

    #[test]
    fn llmeval_numbered_reply() {
        let reply = "1. s1\n2. s2\n3. s3\n4. s4\n5. s5\n6. s6\n7. s7\n8. s8\n";
        let pos = triplet("Aspirin", "may treat", "migraine", Polarity::Positive);
        let samples = generate_llmeval(&pos, &Canned(reply), None, false).unwrap();
        let texts: Vec<&str> = samples.iter().map(|s| s.final_text.as_str()).collect();
        assert_eq!(texts, ["s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8"]);
        assert!(samples.iter().all(|s| s.label == Label::True));
        let neg = triplet("Aspirin", "may treat", "migraine", Polarity::Negative);
        let samples = generate_llmeval(&neg, &Canned(reply), None, false).unwrap();
        assert!(samples.iter().all(|s| s.label == Label::False));
    }

    #[test]
    fn llmeval_short_reply() {
        let t = triplet("A", "may treat", "B", Polarity::Positive);
        let reply = "a\nb\nc\nd\ne\nf";
        assert!(matches!(
            generate_llmeval(&t, &Canned(reply), None, false),
            Err(GenerationError::UnderGenerated { got: 6, .. })
        ));
        let padded = generate_llmeval(&t, &Canned(reply), None, true).unwrap();
        assert_eq!(padded.len(), 8);
        assert_eq!(padded[7].final_text, "f");
    }

    #[test]
    fn llmeval_long_reply_truncates() {
        let t = triplet("A", "may treat", "B", Polarity::Positive);
        let samples = generate_llmeval(&t, &Canned("1\n2\n3\n4\n5\n6\n7\n8\n9\n10"), None, false).unwrap();
        assert_eq!(samples.len(), 8);
    }

    #[test]
    fn batch_excludes_failed_llmeval_points() {
        let points = vec![
            triplet("A", "may treat", "B", Polarity::Positive),
            triplet("C", "may treat", "D", Polarity::Positive),
        ];
        let plan = GenerationPlan {
            generator: Generator::LlmEval,
            keys: vec![],
            pool: None,
            rephraser: None,
            llm: Some(&Canned("a\nb")),
            llm_cache: None,
            pad_llmeval: false,
        };
        let out = generate_all(&points, &plan, 2).unwrap();
        assert!(out.samples.is_empty());
        assert_eq!(out.excluded.len(), 2);
    }

    #[test]
    fn batch_order_is_stable() {
        let pool = pool();
        let points: Vec<KnowledgeTriplet> = (0..40)
            .map(|i| triplet(&format!("Drug {i}"), "may treat", "flu", Polarity::Positive))
            .collect();
        let plan = GenerationPlan {
            generator: Generator::PretexEval,
            keys: TransformKey::ALL.to_vec(),
            pool: Some(&pool),
            rephraser: None,
            llm: None,
            llm_cache: None,
            pad_llmeval: false,
        };
        let a = generate_all(&points, &plan, 1).unwrap().samples;
        let b = generate_all(&points, &plan, 8).unwrap().samples;
        assert_eq!(a, b);
        assert_eq!(a.len(), 320);
        assert!(a.windows(2).all(|w| (&w[0].triplet_id, w[0].key.index()) < (&w[1].triplet_id, w[1].key.index())));
    }
}
