use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::QueryExpr;

/// The fourteen query templates.
///
/// `p` projection, `i` intersection, `u` union, `n` negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Structure {
    P1,
    P2,
    P3,
    I2,
    I3,
    Pi,
    Ip,
    U2,
    Up,
    In2,
    In3,
    Inp,
    Pin,
    Pni,
}

impl Structure {
    pub const ALL: [Structure; 14] = [
        Structure::P1,
        Structure::P2,
        Structure::P3,
        Structure::I2,
        Structure::I3,
        Structure::Pi,
        Structure::Ip,
        Structure::U2,
        Structure::Up,
        Structure::In2,
        Structure::In3,
        Structure::Inp,
        Structure::Pin,
        Structure::Pni,
    ];

    /// Existential positive structures (no negation).
    pub const EPFO: [Structure; 9] = [
        Structure::P1,
        Structure::P2,
        Structure::P3,
        Structure::I2,
        Structure::I3,
        Structure::Pi,
        Structure::Ip,
        Structure::U2,
        Structure::Up,
    ];

    pub const NEGATION: [Structure; 5] =
        [Structure::In2, Structure::In3, Structure::Inp, Structure::Pin, Structure::Pni];

    /// Structures present in the training query set.
    pub const TRAINING: [Structure; 10] = [
        Structure::P1,
        Structure::P2,
        Structure::P3,
        Structure::I2,
        Structure::I3,
        Structure::In2,
        Structure::In3,
        Structure::Inp,
        Structure::Pin,
        Structure::Pni,
    ];

    pub const UNION: [Structure; 2] = [Structure::U2, Structure::Up];

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::P1 => "1p",
            Structure::P2 => "2p",
            Structure::P3 => "3p",
            Structure::I2 => "2i",
            Structure::I3 => "3i",
            Structure::Pi => "pi",
            Structure::Ip => "ip",
            Structure::U2 => "2u",
            Structure::Up => "up",
            Structure::In2 => "2in",
            Structure::In3 => "3in",
            Structure::Inp => "inp",
            Structure::Pin => "pin",
            Structure::Pni => "pni",
        }
    }

    pub fn has_negation(self) -> bool {
        Self::NEGATION.contains(&self)
    }

    pub fn has_union(self) -> bool {
        Self::UNION.contains(&self)
    }

    /// Template with anchor and relation slots numbered in post-order.
    pub fn template(self) -> QueryExpr {
        use QueryExpr as E;
        let a = E::Anchor;
        let p = |e: E, r| E::Project(Box::new(e), r);
        let n = |e: E| E::Negate(Box::new(e));
        match self {
            Structure::P1 => p(a(0), 0),
            Structure::P2 => p(p(a(0), 0), 1),
            Structure::P3 => p(p(p(a(0), 0), 1), 2),
            Structure::I2 => E::Intersect(vec![p(a(0), 0), p(a(1), 1)]),
            Structure::I3 => E::Intersect(vec![p(a(0), 0), p(a(1), 1), p(a(2), 2)]),
            Structure::Ip => p(E::Intersect(vec![p(a(0), 0), p(a(1), 1)]), 2),
            Structure::Pi => E::Intersect(vec![p(p(a(0), 0), 1), p(a(1), 2)]),
            Structure::U2 => E::Union(vec![p(a(0), 0), p(a(1), 1)]),
            Structure::Up => p(E::Union(vec![p(a(0), 0), p(a(1), 1)]), 2),
            Structure::In2 => E::Intersect(vec![p(a(0), 0), n(p(a(1), 1))]),
            Structure::In3 => E::Intersect(vec![p(a(0), 0), p(a(1), 1), n(p(a(2), 2))]),
            Structure::Inp => p(E::Intersect(vec![p(a(0), 0), n(p(a(1), 1))]), 2),
            Structure::Pin => E::Intersect(vec![p(p(a(0), 0), 1), n(p(a(1), 2))]),
            Structure::Pni => E::Intersect(vec![n(p(p(a(0), 0), 1)), p(a(1), 2)]),
        }
    }

    pub fn anchor_count(self) -> usize {
        self.template().anchors().len()
    }

    pub fn relation_count(self) -> usize {
        self.template().relations().len()
    }

    /// One flag per anchor: whether that anchor's branch is negated.
    pub fn negation_flags(self) -> Vec<bool> {
        self.template().anchor_negation_flags()
    }

    /// The template whose skeleton matches `expr`, if any.
    pub fn identify(expr: &QueryExpr) -> Option<Structure> {
        let skeleton = expr.skeleton();
        Self::ALL.into_iter().find(|s| s.template().skeleton() == skeleton)
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Structure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown query structure `{s}`"))
    }
}

impl From<Structure> for String {
    fn from(s: Structure) -> String {
        s.as_str().to_string()
    }
}

impl TryFrom<String> for Structure {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
