//! The translational scoring-function space.
//!
//! A scoring function is `s(h, r, t) = -|| f ||_1`, where `f` is a signed sum
//! of first-order terms (one of seven embedding parts) and second-order terms
//! (the Hadamard product of two parts). An [`SfSpec`] is the set of terms with
//! coefficient +1 or -1; a coefficient of 0 is simply absence.
//!
//! Text form: `-e1t*r2 + e0t*r0 + e0t*r2 - r0`. Factors are
//! `e0h e1h r0 r1 r2 e0t e1t`, `*` is the Hadamard product, whitespace is
//! ignored and a leading `+` is optional.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One of the seven embedding parts a term can read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VectorPart {
    E0H,
    E1H,
    R0,
    R1,
    R2,
    E0T,
    E1T,
}

impl VectorPart {
    pub const ALL: [VectorPart; 7] = [
        VectorPart::E0H,
        VectorPart::E1H,
        VectorPart::R0,
        VectorPart::R1,
        VectorPart::R2,
        VectorPart::E0T,
        VectorPart::E1T,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            VectorPart::E0H => "e0h",
            VectorPart::E1H => "e1h",
            VectorPart::R0 => "r0",
            VectorPart::R1 => "r1",
            VectorPart::R2 => "r2",
            VectorPart::E0T => "e0t",
            VectorPart::E1T => "e1t",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.token() == token)
    }

    pub fn is_head(self) -> bool {
        matches!(self, VectorPart::E0H | VectorPart::E1H)
    }

    pub fn is_tail(self) -> bool {
        matches!(self, VectorPart::E0T | VectorPart::E1T)
    }

    pub fn is_relation(self) -> bool {
        matches!(self, VectorPart::R0 | VectorPart::R1 | VectorPart::R2)
    }
}

impl fmt::Display for VectorPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// A first-order part or the Hadamard product of two parts.
///
/// Products keep their operand order but compare, hash and sort as the
/// unordered pair.
#[derive(Clone, Copy, Debug)]
pub enum Term {
    First(VectorPart),
    Second(VectorPart, VectorPart),
}

impl Term {
    /// Same term with product operands in [`VectorPart`] order.
    pub fn canonical(self) -> Term {
        match self {
            Term::Second(a, b) if b < a => Term::Second(b, a),
            t => t,
        }
    }

    /// Position of the canonical form in [`enumerate_terms`].
    pub fn index(self) -> usize {
        match self.canonical() {
            Term::First(p) => p.index(),
            Term::Second(a, b) => 7 + 7 * a.index() + b.index(),
        }
    }

    pub fn factors(self) -> impl Iterator<Item = VectorPart> {
        let (a, b) = match self {
            Term::First(p) => (p, None),
            Term::Second(x, y) => (x, Some(y)),
        };
        std::iter::once(a).chain(b)
    }

    pub fn order(self) -> usize {
        match self {
            Term::First(_) => 1,
            Term::Second(..) => 2,
        }
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.index() == other.index()
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.index().hash(state);
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        self.index().cmp(&other.index())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.canonical() {
            Term::First(p) => write!(f, "{p}"),
            Term::Second(a, b) => write!(f, "{a}*{b}"),
        }
    }
}

/// All 56 terms: the seven parts in [`VectorPart`] order, then the 49 ordered
/// pairs `(a, b)` row-major, self-products included.
pub fn enumerate_terms() -> Vec<Term> {
    let firsts = VectorPart::ALL.into_iter().map(Term::First);
    let seconds = VectorPart::ALL
        .into_iter()
        .flat_map(|a| VectorPart::ALL.into_iter().map(move |b| Term::Second(a, b)));
    firsts.chain(seconds).collect()
}

/// Number of coefficient assignments over the 56 enumerated terms: `3^56`.
pub fn search_space_size() -> BigUint {
    BigUint::from(3u32).pow(enumerate_terms().len() as u32)
}

/// Number of assignments over terms that are distinct up to operand swap: `3^35`.
pub fn distinct_search_space_size() -> BigUint {
    BigUint::from(3u32).pow(DISTINCT_TERM_COUNT as u32)
}

pub const DISTINCT_TERM_COUNT: usize = 7 + 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignedTerm {
    pub sign: Sign,
    pub term: Term,
}

/// A scoring function: a non-empty set of signed, pairwise distinct terms.
///
/// Terms are kept sorted by [`Term::index`], so equal specs always evaluate
/// in the same arithmetic order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SfSpec {
    terms: Vec<SignedTerm>,
}

impl SfSpec {
    pub fn new(terms: impl IntoIterator<Item = (Sign, Term)>) -> Result<Self> {
        let mut terms: Vec<SignedTerm> = terms
            .into_iter()
            .map(|(sign, term)| SignedTerm { sign, term })
            .collect();
        if terms.is_empty() {
            return Err(Error::SfSyntax {
                position: 0,
                message: "empty scoring function".into(),
            });
        }
        terms.sort_by_key(|t| t.term);
        if let Some(w) = terms.windows(2).find(|w| w[0].term == w[1].term) {
            return Err(Error::SfSyntax {
                position: 0,
                message: format!("duplicate term `{}`", w[0].term),
            });
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[SignedTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// True iff some term reads a head-entity part.
    pub fn uses_head(&self) -> bool {
        self.parts().any(VectorPart::is_head)
    }

    pub fn uses_tail(&self) -> bool {
        self.parts().any(VectorPart::is_tail)
    }

    fn parts(&self) -> impl Iterator<Item = VectorPart> + '_ {
        self.terms.iter().flat_map(|t| t.term.factors())
    }
}

/// Canonical text: terms in enumeration order, operands in part order,
/// every sign explicit, single spaces between terms.
impl fmt::Display for SfSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}{}", t.sign.symbol(), t.term)?;
        }
        Ok(())
    }
}

impl FromStr for SfSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_sf(s)
    }
}

impl Serialize for SfSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SfSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_sf(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, PartialEq)]
enum Token<'a> {
    Plus,
    Minus,
    Star,
    Ident(&'a str),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token<'_>)>> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                tokens.push((i, Token::Plus));
                i += 1;
            }
            b'-' => {
                tokens.push((i, Token::Minus));
                i += 1;
            }
            b'*' => {
                tokens.push((i, Token::Star));
                i += 1;
            }
            c if c.is_ascii_alphanumeric() => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                tokens.push((start, Token::Ident(&text[start..i])));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(Error::SfSyntax {
                    position: i,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
    }
    Ok(tokens)
}

/// Parses the text form. Positions in errors are byte offsets into `text`.
pub fn parse_sf(text: &str) -> Result<SfSpec> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Error::SfSyntax {
            position: 0,
            message: "empty scoring function".into(),
        });
    }
    let end = text.len();
    let mut pos = 0;
    let mut terms: Vec<(usize, Sign, Term)> = Vec::new();

    let factor = |pos: &mut usize| -> Result<VectorPart> {
        match tokens.get(*pos) {
            Some((at, Token::Ident(name))) => {
                *pos += 1;
                VectorPart::from_token(name).ok_or_else(|| Error::SfSyntax {
                    position: *at,
                    message: format!("unknown factor `{name}`"),
                })
            }
            Some((at, tok)) => Err(Error::SfSyntax {
                position: *at,
                message: format!("expected a factor, found {tok:?}"),
            }),
            None => Err(Error::SfSyntax {
                position: end,
                message: "expected a factor, found end of input".into(),
            }),
        }
    };

    while pos < tokens.len() {
        let sign = match tokens[pos].1 {
            Token::Plus => {
                pos += 1;
                Sign::Plus
            }
            Token::Minus => {
                pos += 1;
                Sign::Minus
            }
            _ if terms.is_empty() => Sign::Plus,
            _ => {
                return Err(Error::SfSyntax {
                    position: tokens[pos].0,
                    message: "expected `+` or `-` between terms".into(),
                })
            }
        };
        let start = tokens.get(pos).map_or(end, |t| t.0);
        let a = factor(&mut pos)?;
        let term = if matches!(tokens.get(pos), Some((_, Token::Star))) {
            pos += 1;
            let b = factor(&mut pos)?;
            if let Some((at, Token::Star)) = tokens.get(pos) {
                return Err(Error::SfSyntax {
                    position: *at,
                    message: "products of more than two factors are not in the search space".into(),
                });
            }
            Term::Second(a, b)
        } else {
            Term::First(a)
        };
        if terms.iter().any(|(_, _, t)| *t == term) {
            return Err(Error::SfSyntax {
                position: start,
                message: format!("duplicate term `{term}`"),
            });
        }
        terms.push((start, sign, term));
    }
    SfSpec::new(terms.into_iter().map(|(_, s, t)| (s, t)))
}

/// Canonical text of `spec`.
pub fn print_sf(spec: &SfSpec) -> String {
    spec.to_string()
}

/// Named models expressible in the space, with their defining text.
pub const CATALOG: [(&str, &str); 6] = [
    ("transe", "e0h - e0t + r0"),
    ("interht", "e0h*e1t - e1h*e0t + r0"),
    ("triplere", "e0h*r1 - e0t*r2 + r0"),
    ("pairre", "e0h*r1 - e0t*r2"),
    ("trans", "e0h*e1t - e1h*e0t + r0 + e0h*r1 + e0t*r2"),
    ("autoweird", "-e1t*r2 + e0t*r0 + e0t*r2 - r0"),
];

/// Looks up a catalog model by (case-insensitive) name.
pub fn catalog(name: &str) -> Result<SfSpec> {
    let key = name.to_ascii_lowercase();
    CATALOG
        .iter()
        .find(|(n, _)| *n == key)
        .map(|(_, text)| parse_sf(text).expect("catalog entries parse"))
        .ok_or_else(|| Error::UnknownModel(name.to_owned()))
}

/// Accepts either a catalog name or a scoring-function expression.
pub fn resolve_sf(text: &str) -> Result<SfSpec> {
    match catalog(text.trim()) {
        Ok(spec) => Ok(spec),
        Err(_) => parse_sf(text),
    }
}
