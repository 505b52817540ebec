//! The binary symbolic space at finite truncation: words, cylinders, points
//! with tail rules, the 2^-n ultrametric and the ball/cylinder dictionary.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on word length; masses stay exactly representable below it and
/// every construction in this crate lives well inside.
pub const MAX_DEPTH: usize = 64;

/// A finite word over {0,1}, letter i stored in bit i.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Word {
    bits: u64,
    len: u8,
}

impl Word {
    pub fn empty() -> Self {
        Word { bits: 0, len: 0 }
    }

    pub fn from_letters(letters: &[u8]) -> Result<Self> {
        if letters.len() > MAX_DEPTH {
            return Err(Error::DepthExceeded(format!(
                "word of length {} exceeds cap {MAX_DEPTH}",
                letters.len()
            )));
        }
        let mut bits = 0u64;
        for (i, &l) in letters.iter().enumerate() {
            debug_assert!(l <= 1, "letters must be 0 or 1");
            if l == 1 {
                bits |= 1 << i;
            }
        }
        Ok(Word {
            bits,
            len: letters.len() as u8,
        })
    }

    /// Parse the ASCII serialization: a bit-string like "0101", or "e" for
    /// the empty word.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "e" {
            return Ok(Word::empty());
        }
        let mut letters = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => letters.push(0),
                '1' => letters.push(1),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "invalid word {s:?}: letters must be 0 or 1 (or \"e\")"
                    )))
                }
            }
        }
        Word::from_letters(&letters)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn letter(&self, i: usize) -> u8 {
        debug_assert!(i < self.len());
        ((self.bits >> i) & 1) as u8
    }

    pub fn push(&self, letter: u8) -> Result<Self> {
        if self.len() >= MAX_DEPTH {
            return Err(Error::DepthExceeded(format!(
                "cannot extend word past cap {MAX_DEPTH}"
            )));
        }
        let mut w = *self;
        if letter == 1 {
            w.bits |= 1 << w.len;
        }
        w.len += 1;
        Ok(w)
    }

    pub fn concat(&self, other: &Word) -> Result<Self> {
        if self.len() + other.len() > MAX_DEPTH {
            return Err(Error::DepthExceeded("concatenation exceeds cap".into()));
        }
        Ok(Word {
            bits: self.bits | (other.bits << self.len),
            len: self.len + other.len,
        })
    }

    /// The prefix of length n (n <= len).
    pub fn prefix(&self, n: usize) -> Self {
        debug_assert!(n <= self.len());
        let mask = if n == 64 { !0u64 } else { (1u64 << n) - 1 };
        Word {
            bits: self.bits & mask,
            len: n as u8,
        }
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        self.len() <= other.len() && other.prefix(self.len()) == *self
    }

    /// Index of the first position where the words differ, scanning the
    /// overlap; None if one is a prefix of the other.
    pub fn first_mismatch(&self, other: &Word) -> Option<usize> {
        let n = self.len().min(other.len());
        let mask = if n == 64 { !0u64 } else { (1u64 << n) - 1 };
        let diff = (self.bits ^ other.bits) & mask;
        if diff == 0 {
            None
        } else {
            Some(diff.trailing_zeros() as usize)
        }
    }

    /// N_0(j): occurrences of the letter 0.
    pub fn zero_count(&self) -> usize {
        let mask = if self.len == 64 {
            !0u64
        } else {
            (1u64 << self.len) - 1
        };
        self.len() - (self.bits & mask).count_ones() as usize
    }

    pub fn letters(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len()).map(move |i| self.letter(i))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "e");
        }
        for l in self.letters() {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl Ord for Word {
    /// Lexicographic by letters, a proper prefix ordering before its
    /// extensions. Total and deterministic; used for canonical enumeration.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let n = self.len().min(other.len());
        for i in 0..n {
            match self.letter(i).cmp(&other.letter(i)) {
                std::cmp::Ordering::Equal => {}
                o => return o,
            }
        }
        self.len().cmp(&other.len())
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Word::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// The cylinder [j] = { jx : x in X }; the closed balls of the space.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cylinder(pub Word);

/// Relation between two cylinders. In an ultrametric space they are nested
/// or disjoint, never properly overlapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CylinderRelation {
    Nested,
    /// First mismatch index and the distance between the two sets.
    Disjoint { split_depth: usize, gap: f64 },
}

impl Cylinder {
    pub fn root() -> Self {
        Cylinder(Word::empty())
    }

    pub fn word(&self) -> &Word {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// diam([j]) = 2^-n for a depth-n cylinder.
    pub fn diameter(&self) -> f64 {
        (-(self.depth() as f64)).exp2()
    }

    pub fn child(&self, letter: u8) -> Result<Self> {
        Ok(Cylinder(self.0.push(letter)?))
    }

    pub fn parent(&self) -> Option<Self> {
        if self.depth() == 0 {
            None
        } else {
            Some(Cylinder(self.0.prefix(self.depth() - 1)))
        }
    }

    pub fn contains(&self, other: &Cylinder) -> bool {
        self.0.is_prefix_of(&other.0)
    }

    pub fn relation(&self, other: &Cylinder) -> CylinderRelation {
        match self.0.first_mismatch(&other.0) {
            None => CylinderRelation::Nested,
            Some(i) => CylinderRelation::Disjoint {
                split_depth: i,
                gap: (-(i as f64)).exp2(),
            },
        }
    }

    pub fn is_disjoint(&self, other: &Cylinder) -> bool {
        matches!(self.relation(other), CylinderRelation::Disjoint { .. })
    }

    /// The canonical point of the cylinder: the prefix continued by the
    /// default tail rule.
    pub fn canonical_point(&self) -> Point {
        Point::new(self.0, TailRule::RepeatOne)
    }
}

impl fmt::Display for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0)
    }
}

impl fmt::Debug for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Deterministic continuation of a point beyond its stored prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailRule {
    RepeatOne,
    RepeatZero,
}

impl TailRule {
    fn letter(&self) -> u8 {
        match self {
            TailRule::RepeatOne => 1,
            TailRule::RepeatZero => 0,
        }
    }
}

/// A point of X: a finite prefix plus a deterministic tail rule. The prefix
/// determines every ball of radius >= 2^-len(prefix).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Point {
    prefix: Word,
    tail: TailRule,
}

impl Point {
    pub fn new(prefix: Word, tail: TailRule) -> Self {
        Point { prefix, tail }
    }

    pub fn from_word(prefix: Word) -> Self {
        Point::new(prefix, TailRule::RepeatOne)
    }

    pub fn prefix_word(&self) -> &Word {
        &self.prefix
    }

    pub fn letter(&self, i: usize) -> u8 {
        if i < self.prefix.len() {
            self.prefix.letter(i)
        } else {
            self.tail.letter()
        }
    }

    /// The depth-n prefix word of the point (resolving the tail rule).
    pub fn resolve_prefix(&self, n: usize) -> Result<Word> {
        if n > MAX_DEPTH {
            return Err(Error::DepthExceeded(format!(
                "prefix depth {n} exceeds cap {MAX_DEPTH}"
            )));
        }
        let mut w = self.prefix.prefix(n.min(self.prefix.len()));
        while w.len() < n {
            w = w.push(self.tail.letter())?;
        }
        Ok(w)
    }

    pub fn in_cylinder(&self, c: &Cylinder) -> bool {
        match self.resolve_prefix(c.depth()) {
            Ok(w) => w == *c.word(),
            Err(_) => false,
        }
    }
}

/// A dyadic radius r = 2^-m with m >= 1. All packings in this crate live on
/// the dyadic grid: arbitrary radii in [2^-n-1, 2^-n) move partition sums by
/// at most a bounded factor and cannot shift critical exponents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicRadius {
    exponent: u32,
}

impl DyadicRadius {
    pub fn new(exponent: u32) -> Result<Self> {
        if exponent == 0 {
            return Err(Error::InvalidConfig(
                "dyadic radius needs exponent >= 1".into(),
            ));
        }
        if exponent as usize > MAX_DEPTH {
            return Err(Error::DepthExceeded(format!(
                "radius exponent {exponent} exceeds cap {MAX_DEPTH}"
            )));
        }
        Ok(DyadicRadius { exponent })
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn value(&self) -> f64 {
        (-(self.exponent as f64)).exp2()
    }

    pub fn ln(&self) -> f64 {
        -(self.exponent as f64) * std::f64::consts::LN_2
    }
}

/// B(x, 2^-m) is exactly the depth-m prefix cylinder of x.
pub fn ball_of(x: &Point, r: DyadicRadius) -> Result<Cylinder> {
    Ok(Cylinder(x.resolve_prefix(r.exponent() as usize)?))
}

/// The ultrametric d(x,y) = 2^-n at the first mismatch, 0 for equal points.
pub fn distance(x: &Point, y: &Point) -> f64 {
    match first_mismatch_index(x, y) {
        None => 0.0,
        Some(n) => (-(n as f64)).exp2(),
    }
}

/// First index where two points differ, None if provably equal (identical
/// prefix overlap and the same tail rule governing everything beyond).
pub fn first_mismatch_index(x: &Point, y: &Point) -> Option<usize> {
    let scan = x.prefix.len().max(y.prefix.len());
    for i in 0..scan {
        if x.letter(i) != y.letter(i) {
            return Some(i);
        }
    }
    if x.tail == y.tail {
        None
    } else {
        // Tails differ at every index past the common prefix.
        Some(scan)
    }
}

/// Classify two cylinders; convenience free function mirroring the op name.
pub fn cylinder_relation(c1: &Cylinder, c2: &Cylinder) -> CylinderRelation {
    c1.relation(c2)
}

pub fn zero_count(j: &Word) -> usize {
    j.zero_count()
}

/// All cylinders of a given depth, in canonical (lexicographic) order.
/// Only sensible for small depths; used by oracles and tests.
pub fn all_cylinders_at_depth(depth: usize) -> Vec<Cylinder> {
    assert!(depth <= 20, "exhaustive enumeration capped at depth 20");
    let mut out = Vec::with_capacity(1 << depth);
    for code in 0u64..(1u64 << depth) {
        // code bit k = letter k, iterate in lexicographic order of words
        let mut letters = Vec::with_capacity(depth);
        for i in 0..depth {
            letters.push(((code >> (depth - 1 - i)) & 1) as u8);
        }
        let mut w = Word::empty();
        for l in letters {
            w = w.push(l).unwrap();
        }
        out.push(Cylinder(w));
    }
    out.sort();
    out
}
