//! Mastery metrics over a score matrix.
//!
//! Average accuracy is the mean over all cells; joint accuracy counts a
//! knowledge point only when every one of its samples is correct. The
//! expected-joint curve interpolates between the two: its value at `i` is the
//! joint accuracy obtained by scoring a random size-`i` subset of each row's
//! columns, averaged over all subsets. For a row with `k` correct cells out of
//! `m` that average is `C(k, i) / C(m, i)`. All three are computed exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::ScoreMatrix;
use crate::predicate::TransformKey;

pub type Fraction = Ratio<u64>;

/// Widest matrix the curve accepts; `C(16, 8)` keeps everything in `u64`.
pub const MAX_CURVE_WIDTH: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("score matrix has no cells")]
    Empty,
    #[error("score matrix is malformed (ragged rows or non-binary cells)")]
    Malformed,
    #[error("matrix has {0} columns; the curve supports at most {MAX_CURVE_WIDTH}")]
    TooWide(usize),
    #[error("matrix has no column `{0}`")]
    MissingColumn(String),
}

fn check(matrix: &ScoreMatrix) -> Result<(), MetricsError> {
    if !matrix.is_well_formed() {
        return Err(MetricsError::Malformed);
    }
    if matrix.n() == 0 || matrix.m() == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, j| acc * (n - j) / (j + 1))
}

pub fn average_accuracy(matrix: &ScoreMatrix) -> Result<Fraction, MetricsError> {
    check(matrix)?;
    let correct: usize = matrix.rows.iter().map(|r| r.correct()).sum();
    Ok(Fraction::new(correct as u64, (matrix.n() * matrix.m()) as u64))
}

pub fn joint_accuracy(matrix: &ScoreMatrix) -> Result<Fraction, MetricsError> {
    check(matrix)?;
    let m = matrix.m();
    let mastered = matrix.rows.iter().filter(|r| r.correct() == m).count();
    Ok(Fraction::new(mastered as u64, matrix.n() as u64))
}

/// Expected joint accuracy for `i = 1..=m` samples per knowledge point.
pub fn expected_joint_curve(matrix: &ScoreMatrix) -> Result<Vec<Fraction>, MetricsError> {
    check(matrix)?;
    let m = matrix.m();
    if m > MAX_CURVE_WIDTH {
        return Err(MetricsError::TooWide(m));
    }
    let n = matrix.n() as u64;
    let ks: Vec<u64> = matrix.rows.iter().map(|r| r.correct() as u64).collect();
    Ok((1..=m as u64)
        .map(|i| {
            let hits: u64 = ks.iter().map(|&k| binomial(k, i)).sum();
            Fraction::new(hits, n * binomial(m as u64, i))
        })
        .collect())
}

/// Percentage points above a 50% random-guess baseline.
pub fn gain_vs_random(a_avg: f64) -> f64 {
    100.0 * a_avg - 50.0
}

pub fn to_f64(f: Fraction) -> f64 {
    f.to_f64().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub n: usize,
    pub a_avg: f64,
    pub a_joint: f64,
}

pub fn per_relation_breakdown(matrix: &ScoreMatrix) -> Result<BTreeMap<String, RelationMetrics>, MetricsError> {
    check(matrix)?;
    let mut relations: Vec<&str> = matrix.rows.iter().map(|r| r.relation.as_str()).collect();
    relations.sort_unstable();
    relations.dedup();
    relations
        .into_iter()
        .map(|rel| {
            let sub = matrix.filter_relation(rel);
            Ok((
                rel.to_string(),
                RelationMetrics {
                    n: sub.n(),
                    a_avg: to_f64(average_accuracy(&sub)?),
                    a_joint: to_f64(joint_accuracy(&sub)?),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub m: usize,
    pub a_avg: f64,
    pub a_joint: f64,
    /// Entry `i - 1` is the expected joint accuracy with `i` samples.
    pub expected_joint: Vec<f64>,
    /// `100 * a_avg - 50`.
    pub gain_points: f64,
    pub per_relation: BTreeMap<String, RelationMetrics>,
    /// Exact values as `numerator/denominator`.
    pub exact: ExactMetrics,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactMetrics {
    pub a_avg: String,
    pub a_joint: String,
    pub expected_joint: Vec<String>,
}

fn render(f: Fraction) -> String {
    format!("{}/{}", f.numer(), f.denom())
}

impl MetricsReport {
    pub fn compute(matrix: &ScoreMatrix) -> Result<Self, MetricsError> {
        let avg = average_accuracy(matrix)?;
        let joint = joint_accuracy(matrix)?;
        let curve = expected_joint_curve(matrix)?;
        Ok(MetricsReport {
            n: matrix.n(),
            m: matrix.m(),
            a_avg: to_f64(avg),
            a_joint: to_f64(joint),
            expected_joint: curve.iter().copied().map(to_f64).collect(),
            gain_points: gain_vs_random(to_f64(avg)),
            per_relation: per_relation_breakdown(matrix)?,
            exact: ExactMetrics {
                a_avg: render(avg),
                a_joint: render(joint),
                expected_joint: curve.into_iter().map(render).collect(),
            },
        })
    }
}

/// Cumulative transformation sets: untransformed, then adding inversion,
/// double negation and finally instantiation.
pub fn ablation_steps() -> [(&'static str, Vec<TransformKey>); 4] {
    use TransformKey as K;
    [
        ("Direct", vec![K::NONE]),
        ("+Inv", vec![K::NONE, K::INV]),
        ("+Inv+DN", vec![K::NONE, K::INV, K::DN, K::INV_DN]),
        ("+All", K::ALL.to_vec()),
    ]
}

/// Metrics for each ablation step, computed on column subsets of one matrix.
pub fn ablation_reports(matrix: &ScoreMatrix) -> Result<Vec<(String, MetricsReport)>, MetricsError> {
    ablation_steps()
        .into_iter()
        .map(|(name, keys)| {
            let names: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
            let sub = matrix.select_columns(&names).ok_or_else(|| {
                let missing = names.iter().find(|n| !matrix.columns.contains(n)).cloned().unwrap_or_default();
                MetricsError::MissingColumn(missing)
            })?;
            Ok((name.to_string(), MetricsReport::compute(&sub)?))
        })
        .collect()
}

/// Human-readable summary: one line per relation plus the overall line, and
/// the expected-joint curve.
pub fn render_table(label: &str, report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<32} {:>6} {:>8} {:>8} {:>10}",
        format!("relation [{label}]"),
        "n",
        "a_avg",
        "a_joint",
        "gain(pts)"
    );
    for (rel, m) in &report.per_relation {
        let _ = writeln!(
            out,
            "{:<32} {:>6} {:>8.4} {:>8.4} {:>+10.1}",
            rel,
            m.n,
            m.a_avg,
            m.a_joint,
            gain_vs_random(m.a_avg)
        );
    }
    let _ = writeln!(
        out,
        "{:<32} {:>6} {:>8.4} {:>8.4} {:>+10.1}",
        "ALL", report.n, report.a_avg, report.a_joint, report.gain_points
    );
    let curve: Vec<String> = report.expected_joint.iter().map(|v| format!("{v:.4}")).collect();
    let _ = writeln!(out, "expected joint (i=1..{}): {}", report.m, curve.join(" "));
    out
}

/// `triplet_id,relation,polarity,k,m` rows for plotting curves externally.
pub fn k_rows_csv(matrix: &ScoreMatrix) -> String {
    let mut out = String::from("triplet_id,relation,polarity,k,m\n");
    for r in &matrix.rows {
        let relation = if r.relation.contains([',', '"']) {
            format!("\"{}\"", r.relation.replace('"', "\"\""))
        } else {
            r.relation.clone()
        };
        let _ = writeln!(out, "{},{},{},{},{}", r.triplet_id, relation, r.polarity.as_str(), r.correct(), matrix.m());
    }
    out
}
