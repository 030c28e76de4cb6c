//! Knowledge-base ingestion and sampling.
//!
//! A knowledge base is a UTF-8 TSV file of `head \t relation \t tail` rows.
//! Relations are declared in a separate schema file. Sampling keeps one tail
//! per `(head, relation)` pair and draws one type-consistent negative tail for
//! each kept pair.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest_hex;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: unknown relation `{relation}`")]
    UnknownRelation {
        file: String,
        line: usize,
        relation: String,
    },
    #[error("schema: duplicate relation `{0}`")]
    DuplicateRelation(String),
    #[error("schema: relation `{relation}` is declared inverse of unknown relation `{target}`")]
    DanglingInverse { relation: String, target: String },
    #[error("empty entity")]
    EmptyEntity,
}

/// An entity surface form: trimmed, internal whitespace runs collapsed to a
/// single space, case preserved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Entity(String);

impl Entity {
    pub fn new(raw: &str) -> Result<Self, KbError> {
        let normalized = raw.split_whitespace().collect::<Vec<_>>().join(" ");
        if normalized.is_empty() {
            return Err(KbError::EmptyEntity);
        }
        Ok(Entity(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Entity {
    type Error = KbError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Entity::new(&value)
    }
}

impl From<Entity> for String {
    fn from(value: Entity) -> Self {
        value.0
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    pub relation_id: String,
    pub description: String,
    pub inverse_of: Option<String>,
}

/// Validated set of relation declarations.
#[derive(Debug, Clone, Default)]
pub struct Schema {
    relations: Vec<RelationSchema>,
}

impl Schema {
    pub fn new(relations: Vec<RelationSchema>) -> Result<Self, KbError> {
        let mut seen = HashSet::new();
        for rel in &relations {
            if !seen.insert(rel.relation_id.as_str()) {
                return Err(KbError::DuplicateRelation(rel.relation_id.clone()));
            }
        }
        for rel in &relations {
            if let Some(target) = &rel.inverse_of {
                if target == &rel.relation_id || !seen.contains(target.as_str()) {
                    return Err(KbError::DanglingInverse {
                        relation: rel.relation_id.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        Ok(Schema { relations })
    }

    /// Parses `relation_id \t description [\t inverse_of]` records. Blank lines
    /// and lines starting with `#` are ignored.
    pub fn parse(text: &str, file: &str) -> Result<Self, KbError> {
        let mut relations = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(KbError::Malformed {
                    file: file.to_string(),
                    line: idx + 1,
                    message: format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let relation_id = fields[0].trim().to_string();
            if relation_id.is_empty() {
                return Err(KbError::Malformed {
                    file: file.to_string(),
                    line: idx + 1,
                    message: "empty relation id".into(),
                });
            }
            let inverse_of = fields
                .get(2)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            relations.push(RelationSchema {
                relation_id,
                description: fields[1].trim().to_string(),
                inverse_of,
            });
        }
        Schema::new(relations)
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let text = read(path)?;
        Schema::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, relation_id: &str) -> Option<&RelationSchema> {
        self.relations.iter().find(|r| r.relation_id == relation_id)
    }

    pub fn contains(&self, relation_id: &str) -> bool {
        self.get(relation_id).is_some()
    }

    /// Relations dropped from evaluation because they restate another one.
    pub fn is_excluded(&self, relation_id: &str) -> bool {
        self.get(relation_id).is_some_and(|r| r.inverse_of.is_some())
    }

    pub fn relations(&self) -> &[RelationSchema] {
        &self.relations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl std::str::FromStr for Polarity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            other => Err(format!("unknown polarity `{other}`")),
        }
    }
}

/// One knowledge point. Positive triplets are facts read from the KB file;
/// negative ones are sampled corruptions that never occur in it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeTriplet {
    pub triplet_id: String,
    pub head: Entity,
    pub relation: String,
    pub tail: Entity,
    pub polarity: Polarity,
    pub source_kb: String,
}

impl KnowledgeTriplet {
    pub fn new(
        head: Entity,
        relation: impl Into<String>,
        tail: Entity,
        polarity: Polarity,
        source_kb: impl Into<String>,
    ) -> Self {
        let relation = relation.into();
        let triplet_id = triplet_id(&head, &relation, &tail, polarity);
        KnowledgeTriplet {
            triplet_id,
            head,
            relation,
            tail,
            polarity,
            source_kb: source_kb.into(),
        }
    }

    pub fn fact(&self) -> (&Entity, &str, &Entity) {
        (&self.head, &self.relation, &self.tail)
    }
}

pub fn triplet_id(head: &Entity, relation: &str, tail: &Entity, polarity: Polarity) -> String {
    let material = format!("{}\t{}\t{}\t{}", head, relation, tail, polarity.as_str());
    digest_hex(material.as_bytes())[..16].to_string()
}

fn read(path: &Path) -> Result<String, KbError> {
    fs::read_to_string(path).map_err(|source| KbError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn source_name(file: &str) -> String {
    Path::new(file)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file.to_string())
}

/// Parses KB TSV text. Duplicate `(head, relation, tail)` rows are collapsed,
/// keeping the first occurrence.
pub fn parse_kb(text: &str, file: &str, schema: &Schema) -> Result<Vec<KnowledgeTriplet>, KbError> {
    let source = source_name(file);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KbError::Malformed {
                file: file.to_string(),
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let entity = |raw: &str, what: &str| {
            Entity::new(raw).map_err(|_| KbError::Malformed {
                file: file.to_string(),
                line: line_no,
                message: format!("empty {what} field"),
            })
        };
        let head = entity(fields[0], "head")?;
        let relation = fields[1].trim();
        let tail = entity(fields[2], "tail")?;
        if !schema.contains(relation) {
            return Err(KbError::UnknownRelation {
                file: file.to_string(),
                line: line_no,
                relation: relation.to_string(),
            });
        }
        if seen.insert((head.clone(), relation.to_string(), tail.clone())) {
            out.push(KnowledgeTriplet::new(head, relation, tail, Polarity::Positive, source.clone()));
        }
    }
    Ok(out)
}

pub fn load_kb(path: &Path, schema: &Schema) -> Result<Vec<KnowledgeTriplet>, KbError> {
    let text = read(path)?;
    parse_kb(&text, &path.display().to_string(), schema)
}

/// Keeps exactly one triplet per `(head, relation)` pair, chosen uniformly
/// among its tails. Relations marked as inverses are dropped.
pub fn sample_subset(triplets: &[KnowledgeTriplet], schema: &Schema, seed: u64) -> Vec<KnowledgeTriplet> {
    let mut groups: BTreeMap<(&str, &Entity), Vec<&KnowledgeTriplet>> = BTreeMap::new();
    for t in triplets {
        if schema.is_excluded(&t.relation) {
            continue;
        }
        groups.entry((t.relation.as_str(), &t.head)).or_default().push(t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups
        .into_values()
        .map(|mut candidates| {
            candidates.sort_by(|a, b| a.tail.cmp(&b.tail));
            let pick = rng.gen_range(0..candidates.len());
            candidates[pick].clone()
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct NegativeSampling {
    pub negatives: Vec<KnowledgeTriplet>,
    /// `(head, relation)` pairs whose candidate pool was empty.
    pub skipped: Vec<(Entity, String)>,
}

/// Draws one negative tail per `(head, relation)` in `subset`. Candidates are
/// tails seen with the same relation anywhere in `full_kb`, minus every tail
/// the head is actually linked to.
pub fn sample_negatives(subset: &[KnowledgeTriplet], full_kb: &[KnowledgeTriplet], seed: u64) -> NegativeSampling {
    let mut domain: BTreeMap<&str, BTreeSet<&Entity>> = BTreeMap::new();
    let mut linked: HashSet<(&Entity, &str, &Entity)> = HashSet::new();
    for t in full_kb {
        domain.entry(t.relation.as_str()).or_default().insert(&t.tail);
        linked.insert((&t.head, t.relation.as_str(), &t.tail));
    }

    let mut pairs: Vec<(&Entity, &str)> = subset.iter().map(|t| (&t.head, t.relation.as_str())).collect();
    pairs.sort();
    pairs.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut result = NegativeSampling::default();
    for (head, relation) in pairs {
        let pool: Vec<&Entity> = domain
            .get(relation)
            .into_iter()
            .flatten()
            .copied()
            .filter(|tail| !linked.contains(&(head, relation, *tail)))
            .collect();
        match pool.choose(&mut rng) {
            Some(tail) => {
                let source = subset
                    .iter()
                    .find(|t| &t.head == head && t.relation == relation)
                    .map(|t| t.source_kb.clone())
                    .unwrap_or_default();
                result.negatives.push(KnowledgeTriplet::new(
                    head.clone(),
                    relation,
                    (*tail).clone(),
                    Polarity::Negative,
                    source,
                ));
            }
            None => {
                log::warn!("no negative candidate for ({head}, {relation}); pair skipped");
                result.skipped.push((head.clone(), relation.to_string()));
            }
        }
    }
    result
}

/// Splits knowledge points into demonstration and test sets. For each
/// relation, `per_relation` points are drawn uniformly for demonstrations.
/// Returned sets are sorted by triplet id.
pub fn split_demos(
    points: &[KnowledgeTriplet],
    per_relation: usize,
    seed: u64,
) -> (Vec<KnowledgeTriplet>, Vec<KnowledgeTriplet>) {
    let mut by_relation: BTreeMap<&str, Vec<&KnowledgeTriplet>> = BTreeMap::new();
    for p in points {
        by_relation.entry(p.relation.as_str()).or_default().push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut demos = Vec::new();
    let mut tests = Vec::new();
    for (_, mut group) in by_relation {
        group.sort_by(|a, b| a.triplet_id.cmp(&b.triplet_id));
        group.shuffle(&mut rng);
        let take = per_relation.min(group.len());
        demos.extend(group[..take].iter().map(|t| (*t).clone()));
        tests.extend(group[take..].iter().map(|t| (*t).clone()));
    }
    demos.sort_by(|a, b| a.triplet_id.cmp(&b.triplet_id));
    tests.sort_by(|a, b| a.triplet_id.cmp(&b.triplet_id));
    (demos, tests)
}

/// Renders triplets as `head \t relation \t tail \t polarity` rows.
pub fn write_sampled(triplets: &[KnowledgeTriplet]) -> String {
    let mut out = String::new();
    for t in triplets {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", t.head, t.relation, t.tail, t.polarity.as_str()));
    }
    out
}

pub fn parse_sampled(text: &str, file: &str, source_kb: &str) -> Result<Vec<KnowledgeTriplet>, KbError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| KbError::Malformed {
            file: file.to_string(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(malformed(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let head = Entity::new(fields[0]).map_err(|_| malformed("empty head field".into()))?;
        let tail = Entity::new(fields[2]).map_err(|_| malformed("empty tail field".into()))?;
        let polarity: Polarity = fields[3].parse().map_err(malformed)?;
        out.push(KnowledgeTriplet::new(head, fields[1].trim(), tail, polarity, source_kb));
    }
    Ok(out)
}

pub fn load_sampled(path: &Path, source_kb: &str) -> Result<Vec<KnowledgeTriplet>, KbError> {
    let text = read(path)?;
    parse_sampled(&text, &path.display().to_string(), source_kb)
}
