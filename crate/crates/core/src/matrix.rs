use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kb::Polarity;

/// One knowledge point's binary scores, one cell per column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub triplet_id: String,
    pub relation: String,
    pub polarity: Polarity,
    pub scores: Vec<u8>,
}

impl ScoreRow {
    pub fn correct(&self) -> usize {
        self.scores.iter().filter(|&&s| s == 1).count()
    }
}

/// `n x m` correctness grid: rows are knowledge points, columns are sample
/// slots (transformation keys or generated-statement indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub model_id: String,
    pub generator: String,
    pub columns: Vec<String>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    #[serde(default)]
    pub config_hash: String,
    pub rows: Vec<ScoreRow>,
}

impl ScoreMatrix {
    /// A bare matrix from 0/1 rows, mostly for tests. Every row gets relation
    /// `r` and positive polarity.
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Self {
        let m = rows.first().map_or(0, Vec::len);
        ScoreMatrix {
            model_id: String::new(),
            generator: String::new(),
            columns: (1..=m).map(|j| format!("S{j}")).collect(),
            seeds: BTreeMap::new(),
            config_hash: String::new(),
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(i, scores)| ScoreRow {
                    triplet_id: format!("row{i}"),
                    relation: "r".into(),
                    polarity: Polarity::Positive,
                    scores,
                })
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    /// Every row has `m` cells, each 0 or 1.
    pub fn is_well_formed(&self) -> bool {
        let m = self.m();
        self.rows
            .iter()
            .all(|r| r.scores.len() == m && r.scores.iter().all(|&s| s <= 1))
    }

    /// Keeps the named columns, in the given order. Returns `None` when a
    /// name is absent.
    pub fn select_columns(&self, names: &[String]) -> Option<ScoreMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.columns.iter().position(|c| c == n))
            .collect::<Option<_>>()?;
        Some(ScoreMatrix {
            columns: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| ScoreRow {
                    scores: idx.iter().map(|&j| r.scores[j]).collect(),
                    ..r.clone()
                })
                .collect(),
            ..self.clone()
        })
    }

    /// Rows belonging to `relation`.
    pub fn filter_relation(&self, relation: &str) -> ScoreMatrix {
        ScoreMatrix {
            rows: self.rows.iter().filter(|r| r.relation == relation).cloned().collect(),
            ..self.clone()
        }
    }
}
