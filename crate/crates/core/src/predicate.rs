//! Predicate expressions and their equivalence-transformed variants.
//!
//! A triplet `(h, r, t)` is lifted to the expression `R(h, t)`. Three
//! transformations (inversion, instantiation, double negation) and their
//! compositions give eight variants. The transformations are markers here;
//! their surface realization lives in the prototype pool, so arguments are
//! never swapped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kb::{Entity, KnowledgeTriplet, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TransformKey {
    pub inv: bool,
    pub ins: bool,
    pub dn: bool,
}

impl TransformKey {
    pub const NONE: TransformKey = TransformKey::new(false, false, false);
    pub const INV: TransformKey = TransformKey::new(true, false, false);
    pub const INS: TransformKey = TransformKey::new(false, true, false);
    pub const INV_INS: TransformKey = TransformKey::new(true, true, false);
    pub const DN: TransformKey = TransformKey::new(false, false, true);
    pub const INV_DN: TransformKey = TransformKey::new(true, false, true);
    pub const INS_DN: TransformKey = TransformKey::new(false, true, true);
    pub const INV_INS_DN: TransformKey = TransformKey::new(true, true, true);

    /// All keys in canonical order. Column `j` of a score matrix is `ALL[j]`
    /// when every key is evaluated.
    pub const ALL: [TransformKey; 8] = [
        Self::NONE,
        Self::INV,
        Self::INS,
        Self::INV_INS,
        Self::DN,
        Self::INV_DN,
        Self::INS_DN,
        Self::INV_INS_DN,
    ];

    /// The four keys without double negation, used for prototype lookup.
    pub const BASE: [TransformKey; 4] = [Self::NONE, Self::INV, Self::INS, Self::INV_INS];

    pub const fn new(inv: bool, ins: bool, dn: bool) -> Self {
        TransformKey { inv, ins, dn }
    }

    pub fn index(self) -> usize {
        self.inv as usize + 2 * self.ins as usize + 4 * self.dn as usize
    }

    pub fn base(self) -> TransformKey {
        TransformKey { dn: false, ..self }
    }

    pub fn toggle_dn(self) -> TransformKey {
        TransformKey { dn: !self.dn, ..self }
    }

    /// Short lowercase code used inside sample ids, e.g. `inv+dn`.
    pub fn code(self) -> String {
        self.to_string().to_lowercase()
    }
}

impl fmt::Display for TransformKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::with_capacity(3);
        if self.inv {
            parts.push("Inv");
        }
        if self.ins {
            parts.push("Ins");
        }
        if self.dn {
            parts.push("DN");
        }
        if parts.is_empty() {
            f.write_str("None")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

impl FromStr for TransformKey {
    type Err = String;

    /// Accepts `None` (or `∅`) and `+`-joined combinations of `Inv`, `Ins`
    /// and `DN` in any order and case.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") || s == "∅" {
            return Ok(TransformKey::NONE);
        }
        let mut key = TransformKey::NONE;
        for part in s.split('+') {
            let flag = match part.trim().to_ascii_lowercase().as_str() {
                "inv" => &mut key.inv,
                "ins" => &mut key.ins,
                "dn" => &mut key.dn,
                _ => return Err(format!("unknown transformation key `{s}`")),
            };
            if *flag {
                return Err(format!("repeated component in key `{s}`"));
            }
            *flag = true;
        }
        Ok(key)
    }
}

impl Serialize for TransformKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TransformKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "T")]
    True,
    #[serde(rename = "F")]
    False,
}

impl Label {
    pub fn as_word(self) -> &'static str {
        match self {
            Label::True => "True",
            Label::False => "False",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PredicateVariant {
    pub triplet_id: String,
    pub key: TransformKey,
    pub head: Entity,
    pub tail: Entity,
    pub relation: String,
}

/// Lifts a triplet to its untransformed expression `R(h, t)`. Polarity stays
/// with the triplet.
pub fn to_predicate(triplet: &KnowledgeTriplet) -> PredicateVariant {
    PredicateVariant {
        triplet_id: triplet.triplet_id.clone(),
        key: TransformKey::NONE,
        head: triplet.head.clone(),
        tail: triplet.tail.clone(),
        relation: triplet.relation.clone(),
    }
}

/// The eight variants of `base`, in canonical key order.
pub fn derive_variants(base: &PredicateVariant) -> Vec<PredicateVariant> {
    debug_assert_eq!(base.key, TransformKey::NONE, "variants derive from the original expression");
    TransformKey::ALL
        .iter()
        .map(|&key| PredicateVariant { key, ..base.clone() })
        .collect()
}

/// Gold label of a statement rendered from `key` over a triplet of the given
/// polarity. A single negated surface flips the truth of the fact.
pub fn label_for(key: TransformKey, polarity: Polarity) -> Label {
    match (polarity, key.dn) {
        (Polarity::Positive, false) | (Polarity::Negative, true) => Label::True,
        (Polarity::Positive, true) | (Polarity::Negative, false) => Label::False,
    }
}
