//! Binary necklaces: canonical forms, enumeration, counting and Gray chains.
//!
//! Words are stored as bit patterns with the leftmost letter in the most
//! significant position and `A = 0`, so lexicographic order on words is
//! integer order on the bits.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::arch::Arm;
use crate::error::{Error, Result};

/// Largest word length accepted by the enumeration routines.
pub const MAX_NECKLACE_LEN: usize = 20;

/// Default node-expansion budget for [`gray_chain_search`].
pub const DEFAULT_SEARCH_BUDGET: u64 = 10_000_000;

#[inline]
fn mask(m: usize) -> u32 {
    if m == 32 {
        u32::MAX
    } else {
        (1u32 << m) - 1
    }
}

#[inline]
pub(crate) fn rotate_left(word: u32, m: usize) -> u32 {
    ((word << 1) | (word >> (m - 1))) & mask(m)
}

/// Least rotation of an `m`-bit word.
pub fn canonical_bits(word: u32, m: usize) -> u32 {
    let mut best = word;
    let mut w = word;
    for _ in 1..m {
        w = rotate_left(w, m);
        best = best.min(w);
    }
    best
}

/// Equivalence class of binary words under rotation, stored as its least
/// rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Necklace {
    word: u32,
    len: usize,
}

impl Necklace {
    pub fn from_bits(word: u32, len: usize) -> Result<Self> {
        if len == 0 || len > MAX_NECKLACE_LEN {
            return Err(Error::Domain(format!(
                "necklace length {len} outside 1..={MAX_NECKLACE_LEN}"
            )));
        }
        Ok(Necklace {
            word: canonical_bits(word & mask(len), len),
            len,
        })
    }

    pub fn parse(s: &str) -> Result<Self> {
        let arms = s
            .chars()
            .map(Arm::from_symbol)
            .collect::<Result<Vec<_>>>()?;
        canonical(&arms)
    }

    pub fn all_a(len: usize) -> Self {
        Necklace { word: 0, len }
    }

    pub fn all_b(len: usize) -> Self {
        Necklace {
            word: mask(len),
            len,
        }
    }

    pub fn bits(&self) -> u32 {
        self.word
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn count_b(&self) -> usize {
        self.word.count_ones() as usize
    }

    pub fn count_a(&self) -> usize {
        self.len - self.count_b()
    }

    /// Smallest `p` such that rotating by `p` fixes the word.
    pub fn period(&self) -> usize {
        let mut w = self.word;
        for p in 1..=self.len {
            w = rotate_left(w, self.len);
            if w == self.word {
                return p;
            }
        }
        self.len
    }

    /// All distinct rotations of the representative word.
    pub fn rotations(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.len);
        let mut w = self.word;
        for _ in 0..self.period() {
            out.push(w);
            w = rotate_left(w, self.len);
        }
        out
    }

    /// Swaps A and B.
    pub fn complement(&self) -> Necklace {
        Necklace {
            word: canonical_bits(!self.word & mask(self.len), self.len),
            len: self.len,
        }
    }

    /// True iff some rotations of the two words differ in exactly one letter.
    pub fn is_adjacent(&self, other: &Necklace) -> bool {
        self.len == other.len
            && (0..self.len).any(|k| canonical_bits(self.word ^ (1 << k), self.len) == other.word)
    }
}

impl fmt::Display for Necklace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", word_string(self.word, self.len))
    }
}

pub(crate) fn word_string(word: u32, len: usize) -> String {
    (0..len)
        .map(|k| {
            if (word >> (len - 1 - k)) & 1 == 0 {
                'A'
            } else {
                'B'
            }
        })
        .collect()
}

/// Canonical (least-rotation) form of a word.
pub fn canonical(word: &[Arm]) -> Result<Necklace> {
    if word.is_empty() {
        return Err(Error::Domain(
            "cannot take the necklace of an empty word".into(),
        ));
    }
    let bits = word
        .iter()
        .fold(0u32, |acc, a| (acc << 1) | a.index() as u32);
    Necklace::from_bits(bits, word.len())
}

/// All distinct necklaces of length `m`, in lexicographic order.
pub fn enumerate_necklaces(m: usize) -> Result<Vec<Necklace>> {
    if m == 0 || m > MAX_NECKLACE_LEN {
        return Err(Error::Domain(format!(
            "m must be in 1..={MAX_NECKLACE_LEN}, got {m}"
        )));
    }
    Ok((0..=mask(m))
        .filter(|&w| canonical_bits(w, m) == w)
        .map(|w| Necklace { word: w, len: m })
        .collect())
}

fn totient(mut n: u64) -> u64 {
    let mut result = n;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            while n.is_multiple_of(p) {
                n /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if n > 1 {
        result -= result / n;
    }
    result
}

/// Number of binary necklaces of length `m` by Pólya counting:
/// `(1/m) sum_{d | m} phi(d) 2^{m/d}`.
pub fn polya_count(m: usize) -> u64 {
    assert!((1..=63).contains(&m), "polya_count supports 1 <= m <= 63");
    let m = m as u64;
    let total: u128 = (1..=m)
        .filter(|d| m.is_multiple_of(*d))
        .map(|d| totient(d) as u128 * (1u128 << (m / d)))
        .sum();
    (total / m as u128) as u64
}

/// Ordered necklaces from all-A to all-B, consecutive ones one flip apart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayChain {
    chain: Vec<Necklace>,
    len: usize,
}

impl GrayChain {
    pub fn new(chain: Vec<Necklace>) -> Result<Self> {
        let check = verify_gray(&chain);
        if let Some(v) = check.violation {
            return Err(Error::InvalidChain(v.to_string()));
        }
        let len = chain[0].len();
        Ok(GrayChain { chain, len })
    }

    /// Parses whitespace- or newline-separated words.
    pub fn parse(text: &str) -> Result<Self> {
        GrayChain::new(
            text.split_whitespace()
                .map(Necklace::parse)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn necklaces(&self) -> &[Necklace] {
        &self.chain
    }

    /// Word length `m`.
    pub fn word_len(&self) -> usize {
        self.len
    }

    /// Chain length `n(m)`.
    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    /// Position of each canonical word in the chain.
    pub fn index_map(&self) -> HashMap<u32, usize> {
        self.chain
            .iter()
            .enumerate()
            .map(|(i, n)| (n.bits(), i))
            .collect()
    }

    /// Smallest primitive period among chain members.
    pub fn min_period(&self) -> usize {
        self.chain.iter().map(Necklace::period).min().unwrap_or(0)
    }

    /// True iff reversing the chain and swapping A/B gives the same chain.
    pub fn is_self_complementary(&self) -> bool {
        let n = self.chain.len();
        (0..n).all(|i| self.chain[i].complement() == self.chain[n - 1 - i])
    }

    /// `sum_i (a_i, b_i)` over the interior necklaces.
    pub fn interior_letter_counts(&self) -> (usize, usize) {
        let n = self.chain.len();
        if n < 2 {
            return (0, 0);
        }
        self.chain[1..n - 1]
            .iter()
            .fold((0, 0), |(a, b), nk| (a + nk.count_a(), b + nk.count_b()))
    }

    pub fn to_text(&self) -> String {
        self.chain.iter().map(|n| format!("{n}\n")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    Empty,
    BadStart,
    BadEnd,
    MixedLength,
    NotCanonical,
    Repeat,
    NotAdjacent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at index {}", self.kind, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GrayCheck {
    pub valid: bool,
    pub violation: Option<Violation>,
}

/// Checks endpoints, distinctness, canonical forms and one-flip adjacency,
/// reporting the first violation in chain order.
pub fn verify_gray(chain: &[Necklace]) -> GrayCheck {
    let fail = |index, kind| GrayCheck {
        valid: false,
        violation: Some(Violation { index, kind }),
    };
    let Some(first) = chain.first() else {
        return fail(0, ViolationKind::Empty);
    };
    let m = first.len();
    if first.bits() != 0 {
        return fail(0, ViolationKind::BadStart);
    }
    let mut seen = std::collections::HashSet::new();
    for (i, nk) in chain.iter().enumerate() {
        if nk.len() != m {
            return fail(i, ViolationKind::MixedLength);
        }
        if canonical_bits(nk.bits(), m) != nk.bits() {
            return fail(i, ViolationKind::NotCanonical);
        }
        if !seen.insert(nk.bits()) {
            return fail(i, ViolationKind::Repeat);
        }
        if i > 0 && !chain[i - 1].is_adjacent(nk) {
            return fail(i, ViolationKind::NotAdjacent);
        }
    }
    if chain[chain.len() - 1].bits() != mask(m) {
        return fail(chain.len() - 1, ViolationKind::BadEnd);
    }
    GrayCheck {
        valid: true,
        violation: None,
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    /// Longest valid chain found.
    pub chain: GrayChain,
    /// The chain visits all `N(m)` necklaces.
    pub full_cover: bool,
    /// The node budget ran out before the search was complete, so a longer
    /// chain may exist.
    pub budget_exhausted: bool,
    pub expansions: u64,
    /// `N(m)`.
    pub total_necklaces: usize,
}

struct Graph {
    nodes: Vec<Necklace>,
    adj: Vec<Vec<usize>>,
    parity: Vec<u8>,
}

impl Graph {
    fn new(m: usize) -> Result<Self> {
        let nodes = enumerate_necklaces(m)?;
        let index: HashMap<u32, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.bits(), i))
            .collect();
        let adj = nodes
            .iter()
            .map(|n| {
                let mut nb: Vec<usize> = (0..m)
                    .map(|k| index[&canonical_bits(n.bits() ^ (1 << k), m)])
                    .collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect();
        let parity = nodes.iter().map(|n| (n.count_b() % 2) as u8).collect();
        Ok(Graph { nodes, adj, parity })
    }
}

struct Search<'a> {
    g: &'a Graph,
    target: usize,
    visited: Vec<bool>,
    path: Vec<usize>,
    expansions: u64,
    budget: u64,
    exhausted: bool,
    best: Vec<usize>,
    // scratch for reachability
    mark: Vec<u32>,
    stamp: u32,
    queue: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(g: &'a Graph, budget: u64) -> Self {
        let n = g.nodes.len();
        Search {
            g,
            target: n - 1,
            visited: vec![false; n],
            path: Vec::with_capacity(n),
            expansions: 0,
            budget,
            exhausted: false,
            best: Vec::new(),
            mark: vec![0; n],
            stamp: 0,
            queue: Vec::with_capacity(n),
        }
    }

    /// Number of unvisited nodes reachable from `from` through unvisited
    /// nodes, and whether the target is among them.
    fn reachable(&mut self, from: usize) -> (usize, bool) {
        self.stamp += 1;
        let stamp = self.stamp;
        self.queue.clear();
        self.queue.push(from);
        self.mark[from] = stamp;
        let mut count = 0;
        let mut hit_target = false;
        let mut head = 0;
        while head < self.queue.len() {
            let u = self.queue[head];
            head += 1;
            for &v in &self.g.adj[u] {
                if !self.visited[v] && self.mark[v] != stamp {
                    self.mark[v] = stamp;
                    count += 1;
                    if v == self.target {
                        hit_target = true;
                    } else {
                        self.queue.push(v);
                    }
                }
            }
        }
        (count, hit_target)
    }

    fn hamiltonian_feasible(&mut self, cur: usize, remaining: usize) -> bool {
        let (count, hit) = self.reachable(cur);
        if !hit || count != remaining {
            return false;
        }
        // every unvisited interior node needs two usable neighbours
        for v in 0..self.g.nodes.len() {
            if self.visited[v] {
                continue;
            }
            let avail = self.g.adj[v]
                .iter()
                .filter(|&&u| !self.visited[u] || u == cur)
                .count();
            if avail < if v == self.target { 1 } else { 2 } {
                return false;
            }
        }
        // the rest of the path alternates weight parity
        let p = self.g.parity[cur];
        let mut same = 0;
        let mut other = 0;
        for v in 0..self.g.nodes.len() {
            if !self.visited[v] {
                if self.g.parity[v] == p {
                    same += 1
                } else {
                    other += 1
                }
            }
        }
        other == remaining.div_ceil(2) && same == remaining / 2
    }

    fn tick(&mut self) -> bool {
        self.expansions += 1;
        if self.expansions > self.budget {
            self.exhausted = true;
        }
        !self.exhausted
    }

    /// Depth-first search for a chain through every necklace.
    fn hamiltonian(&mut self, cur: usize) -> bool {
        if !self.tick() {
            return false;
        }
        let n = self.g.nodes.len();
        if cur == self.target {
            if self.path.len() > self.best.len() {
                self.best = self.path.clone();
            }
            return self.path.len() == n;
        }
        let remaining = n - self.path.len();
        if !self.hamiltonian_feasible(cur, remaining) {
            return false;
        }
        for i in 0..self.g.adj[cur].len() {
            let v = self.g.adj[cur][i];
            if self.visited[v] {
                continue;
            }
            self.visited[v] = true;
            self.path.push(v);
            let done = self.hamiltonian(v);
            if done {
                return true;
            }
            self.path.pop();
            self.visited[v] = false;
            if self.exhausted {
                return false;
            }
        }
        false
    }

    /// Branch and bound for the longest chain ending at the target.
    fn longest(&mut self, cur: usize) {
        if !self.tick() {
            return;
        }
        if cur == self.target {
            if self.path.len() > self.best.len() {
                self.best = self.path.clone();
            }
            return;
        }
        let (count, hit) = self.reachable(cur);
        if !hit || self.path.len() + count <= self.best.len() {
            return;
        }
        for i in 0..self.g.adj[cur].len() {
            let v = self.g.adj[cur][i];
            if self.visited[v] {
                continue;
            }
            self.visited[v] = true;
            self.path.push(v);
            self.longest(v);
            self.path.pop();
            self.visited[v] = false;
            if self.exhausted || self.best.len() == self.g.nodes.len() {
                return;
            }
        }
    }

    fn reset(&mut self) {
        self.visited.iter_mut().for_each(|v| *v = false);
        self.path.clear();
        self.visited[0] = true;
        self.path.push(0);
        self.exhausted = false;
    }
}

/// Depth-first search for a Gray chain from all-A to all-B, neighbours
/// tried in lexicographic order.
///
/// A chain covering every necklace is looked for first; if none exists (or
/// the budget runs out) a branch-and-bound search returns the longest chain
/// it can find. `budget` bounds node expansions per phase.
pub fn gray_chain_search(m: usize, budget: u64) -> Result<SearchOutcome> {
    let g = Graph::new(m)?;
    let n = g.nodes.len();
    let mut s = Search::new(&g, budget);
    s.reset();
    let found = s.hamiltonian(0);
    let mut exhausted = s.exhausted;
    let mut expansions = s.expansions;
    if !found {
        s.expansions = 0;
        s.reset();
        s.longest(0);
        exhausted |= s.exhausted;
        expansions += s.expansions;
    }
    let chain = GrayChain::new(s.best.iter().map(|&i| g.nodes[i]).collect())?;
    Ok(SearchOutcome {
        full_cover: chain.len() == n,
        budget_exhausted: exhausted && chain.len() < n,
        chain,
        expansions,
        total_necklaces: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nk(s: &str) -> Necklace {
        Necklace::parse(s).unwrap()
    }

    fn words(chain: &GrayChain) -> Vec<String> {
        chain.necklaces().iter().map(|n| n.to_string()).collect()
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(nk("BAAB").to_string(), "AABB");
        assert_eq!(nk("AAAA").to_string(), "AAAA");
        assert_eq!(nk("BABA").to_string(), "ABAB");
        assert!(canonical(&[]).is_err());
    }

    #[test]
    fn enumeration_examples() {
        let three: Vec<String> = enumerate_necklaces(3)
            .unwrap()
            .iter()
            .map(|n| n.to_string())
            .collect();
        assert_eq!(three, ["AAA", "AAB", "ABB", "BBB"]);
        let four = enumerate_necklaces(4).unwrap();
        assert_eq!(four.len(), 6);
        assert!(four.contains(&nk("ABAB")));
        let one: Vec<String> = enumerate_necklaces(1)
            .unwrap()
            .iter()
            .map(|n| n.to_string())
            .collect();
        assert_eq!(one, ["A", "B"]);
        assert!(enumerate_necklaces(0).is_err());
        assert!(enumerate_necklaces(21).is_err());
    }

    #[test]
    fn polya_examples() {
        assert_eq!(polya_count(5), 8);
        assert_eq!(polya_count(6), 14);
        assert_eq!(polya_count(1), 2);
        // prime formula 2 + (2^m - 2)/m
        for m in [3usize, 5, 7, 11, 13] {
            assert_eq!(polya_count(m), 2 + ((1u64 << m) - 2) / m as u64);
        }
    }

    #[test]
    fn count_matches_enumeration() {
        for m in 1..=14 {
            assert_eq!(
                enumerate_necklaces(m).unwrap().len() as u64,
                polya_count(m),
                "m={m}"
            );
        }
    }

    #[test]
    fn search_small_cases() {
        let three = gray_chain_search(3, DEFAULT_SEARCH_BUDGET).unwrap();
        assert!(three.full_cover);
        assert_eq!(words(&three.chain), ["AAA", "AAB", "ABB", "BBB"]);

        let four = gray_chain_search(4, DEFAULT_SEARCH_BUDGET).unwrap();
        assert!(!four.full_cover);
        assert!(!four.budget_exhausted);
        assert_eq!(four.chain.len(), 5);
        assert_eq!(four.total_necklaces, 6);
        assert!(!four.chain.necklaces().contains(&nk("ABAB")));

        let five = gray_chain_search(5, DEFAULT_SEARCH_BUDGET).unwrap();
        assert!(five.full_cover);
        assert_eq!(five.chain.len(), 8);
    }

    #[test]
    fn verify_examples() {
        let ok: Vec<Necklace> = ["AAA", "AAB", "ABB", "BBB"].iter().map(|s| nk(s)).collect();
        assert!(verify_gray(&ok).valid);

        let bad = verify_gray(&[nk("AAAA"), nk("AABB")]);
        assert!(!bad.valid);
        assert_eq!(
            bad.violation.unwrap(),
            Violation {
                index: 1,
                kind: ViolationKind::NotAdjacent
            }
        );

        let short = verify_gray(&[nk("AAA")]);
        assert!(!short.valid);
        assert_eq!(short.violation.unwrap().kind, ViolationKind::BadEnd);

        let repeat: Vec<Necklace> = ["AAA", "AAB", "AAA"].iter().map(|s| nk(s)).collect();
        assert_eq!(
            verify_gray(&repeat).violation.unwrap().kind,
            ViolationKind::Repeat
        );
        assert!(!verify_gray(&[]).valid);
    }

    #[test]
    fn chain_metadata() {
        let four = gray_chain_search(4, DEFAULT_SEARCH_BUDGET).unwrap().chain;
        assert!(four.is_self_complementary());
        assert_eq!(four.min_period(), 1);
        let (a, b) = four.interior_letter_counts();
        assert_eq!(a + b, 4 * (four.len() - 2));
        assert_eq!(GrayChain::parse(&four.to_text()).unwrap(), four);
    }

    #[test]
    fn adjacency_is_symmetric() {
        for m in 2..=8 {
            let all = enumerate_necklaces(m).unwrap();
            for u in &all {
                for v in &all {
                    assert_eq!(u.is_adjacent(v), v.is_adjacent(u));
                }
            }
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn canonical_is_rotation_invariant(m in 1usize..16, word in any::<u32>(), k in 0usize..16) {
            let w = word & mask(m);
            let c = Necklace::from_bits(w, m).unwrap();
            let mut rotated = w;
            for _ in 0..(k % m) {
                rotated = rotate_left(rotated, m);
            }
            prop_assert_eq!(Necklace::from_bits(rotated, m).unwrap(), c);
            prop_assert_eq!(Necklace::from_bits(c.bits(), m).unwrap(), c);
        }
    }
}
