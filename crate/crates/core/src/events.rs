//! Poisson event streams driving the particle system.
//!
//! Neutral arrows: for every pair of levels `i < j` a rate-1 Poisson process.
//! They are generated per target level `j` as one stream of rate `j` (levels
//! are 0-based here) whose source level is uniform on `0..j`. The restriction of
//! the arrows to levels `< n` is therefore the same for every `n >= n'`, which
//! couples runs with different level counts.
//!
//! Potential events: for every level and every mark a Poisson process of rate
//! `cap` in time, with activation level `z ~ U[0, cap]` and sampling seed
//! `w ~ U[0, 1]`. They are generated per level as one stream of rate
//! `cap * marks.len()` with a uniformly chosen mark.
//!
//! All streams use exponential inter-arrival times and are merged through a
//! heap, so the merged sequence can be consumed lazily.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fmt_f64;
use crate::seed::{stream_rng, StreamKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    /// Potential selective birth.
    Beta,
    /// Potential competitive death.
    Delta,
    /// Potential mutation (multitype runs only).
    Lambda,
}

impl Mark {
    pub fn as_str(self) -> &'static str {
        match self {
            Mark::Beta => "beta",
            Mark::Delta => "delta",
            Mark::Lambda => "lambda",
        }
    }
}

/// Arrow from `src` to `dst` at lookdown time `time_s`; `src < dst`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeutralAtom {
    pub time_s: f64,
    pub src: usize,
    pub dst: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialAtom {
    pub time_s: f64,
    pub level: usize,
    /// Activation level in `[0, cap]`.
    pub z: f64,
    /// Sampling seed in `[0, 1]`.
    pub w: f64,
    pub mark: Mark,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Atom {
    Neutral(NeutralAtom),
    Potential(PotentialAtom),
}

impl Atom {
    pub fn time(&self) -> f64 {
        match self {
            Atom::Neutral(a) => a.time_s,
            Atom::Potential(a) => a.time_s,
        }
    }

    /// Deterministic total order: time, then neutral before potential, then
    /// levels, then mark. Equal keys keep generation order (merges are stable).
    pub fn key_cmp(&self, other: &Atom) -> Ordering {
        self.time()
            .total_cmp(&other.time())
            .then_with(|| self.kind_rank().cmp(&other.kind_rank()))
            .then_with(|| self.level_key().cmp(&other.level_key()))
    }

    fn kind_rank(&self) -> u8 {
        match self {
            Atom::Neutral(_) => 0,
            Atom::Potential(_) => 1,
        }
    }

    fn level_key(&self) -> (usize, usize) {
        match self {
            Atom::Neutral(a) => (a.src, a.dst),
            Atom::Potential(a) => (a.level, a.mark as usize),
        }
    }
}

/// A materialized, time-sorted list of atoms on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    pub atoms: Vec<Atom>,
    pub horizon: f64,
    pub n_levels: usize,
    pub cap: f64,
    pub marks: Vec<Mark>,
}

impl EventStream {
    pub fn empty(n_levels: usize, horizon: f64) -> Self {
        Self { atoms: Vec::new(), horizon, n_levels, cap: 0.0, marks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn neutral(&self) -> impl Iterator<Item = &NeutralAtom> + '_ {
        self.atoms.iter().filter_map(|a| match a {
            Atom::Neutral(n) => Some(n),
            Atom::Potential(_) => None,
        })
    }

    pub fn potential(&self) -> impl Iterator<Item = &PotentialAtom> + '_ {
        self.atoms.iter().filter_map(|a| match a {
            Atom::Potential(p) => Some(p),
            Atom::Neutral(_) => None,
        })
    }

    pub fn cursor(&self) -> StreamCursor<'_> {
        StreamCursor { stream: self, pos: 0 }
    }

    /// Trace dump: `kind,time_s,i,j,level,z,w,mark`, levels 1-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(b"kind,time_s,i,j,level,z,w,mark\n")?;
        for atom in &self.atoms {
            match atom {
                Atom::Neutral(a) => writeln!(
                    out,
                    "neutral,{},{},{},,,,",
                    fmt_f64(a.time_s),
                    a.src + 1,
                    a.dst + 1
                )?,
                Atom::Potential(a) => writeln!(
                    out,
                    "potential,{},,,{},{},{},{}",
                    fmt_f64(a.time_s),
                    a.level + 1,
                    fmt_f64(a.z),
                    fmt_f64(a.w),
                    a.mark.as_str()
                )?,
            }
        }
        Ok(())
    }
}

/// Anything the engine can pull atoms from in time order.
pub trait EventSource {
    /// Atoms are available on `[0, horizon]`.
    fn horizon(&self) -> f64;
    fn peek(&mut self) -> Option<&Atom>;
    fn pop(&mut self) -> Option<Atom>;
}

pub struct StreamCursor<'a> {
    stream: &'a EventStream,
    pos: usize,
}

impl EventSource for StreamCursor<'_> {
    fn horizon(&self) -> f64 {
        self.stream.horizon
    }

    fn peek(&mut self) -> Option<&Atom> {
        self.stream.atoms.get(self.pos)
    }

    fn pop(&mut self) -> Option<Atom> {
        let atom = self.stream.atoms.get(self.pos).copied();
        if atom.is_some() {
            self.pos += 1;
        }
        atom
    }
}

enum StreamSpec {
    Neutral { dst: usize },
    Potential { level: usize },
}

struct SubStream {
    rng: ChaCha8Rng,
    spec: StreamSpec,
    clock: f64,
    exp: Exp<f64>,
}

struct Pending {
    atom: Atom,
    stream: usize,
    seq: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed so that BinaryHeap pops the earliest atom.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .atom
            .key_cmp(&self.atom)
            .then_with(|| other.stream.cmp(&self.stream))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Lazy merged generator of neutral and potential atoms.
pub struct EventGenerator {
    streams: Vec<SubStream>,
    heap: BinaryHeap<Pending>,
    seqs: Vec<u64>,
    horizon: f64,
    cap: f64,
    marks: Vec<Mark>,
    /// Upper end of the generated activation levels per mark (`cap` unless
    /// restricted).
    z_max: Vec<f64>,
    n_levels: usize,
}

impl EventGenerator {
    /// Neutral arrows on `n_levels` levels plus potential events with the
    /// given cap and marks (pass `cap = 0` or no marks for a neutral run).
    pub fn new(n_levels: usize, horizon: f64, cap: f64, marks: &[Mark], seed: u64) -> Result<Self> {
        check_horizon(horizon)?;
        check_cap(cap)?;
        let mut gen = Self::blank(n_levels, horizon, cap, marks);
        gen.add_neutral(seed);
        gen.add_potential(seed);
        gen.prime();
        Ok(gen)
    }

    pub fn neutral_only(n_levels: usize, horizon: f64, seed: u64) -> Result<Self> {
        check_horizon(horizon)?;
        let mut gen = Self::blank(n_levels, horizon, 0.0, &[]);
        gen.add_neutral(seed);
        gen.prime();
        Ok(gen)
    }

    pub fn potential_only(n_levels: usize, horizon: f64, cap: f64, marks: &[Mark], seed: u64) -> Result<Self> {
        check_horizon(horizon)?;
        check_cap(cap)?;
        if marks.is_empty() {
            return Err(invalid("potential events need at least one mark"));
        }
        let mut gen = Self::blank(n_levels, horizon, cap, marks);
        gen.add_potential(seed);
        gen.prime();
        Ok(gen)
    }

    /// Like [`EventGenerator::new`], but only potential atoms with
    /// `z <= z_max(mark)` are produced. For a consumer that ignores atoms above
    /// these levels the result has the same law at a fraction of the cost.
    pub fn restricted(
        n_levels: usize,
        horizon: f64,
        cap: f64,
        bounds: &[(Mark, f64)],
        seed: u64,
    ) -> Result<Self> {
        check_horizon(horizon)?;
        check_cap(cap)?;
        let marks: Vec<Mark> = bounds.iter().map(|b| b.0).collect();
        let mut gen = Self::blank(n_levels, horizon, cap, &marks);
        if gen.marks.len() != marks.len() {
            return Err(invalid("each mark may be bounded only once"));
        }
        gen.z_max = gen
            .marks
            .iter()
            .map(|m| bounds.iter().find(|b| b.0 == *m).expect("present").1.clamp(0.0, cap))
            .collect();
        gen.add_neutral(seed);
        gen.add_potential(seed);
        gen.prime();
        Ok(gen)
    }

    fn blank(n_levels: usize, horizon: f64, cap: f64, marks: &[Mark]) -> Self {
        let mut marks = marks.to_vec();
        marks.sort();
        marks.dedup();
        let z_max = vec![cap; marks.len()];
        Self {
            streams: Vec::new(),
            heap: BinaryHeap::new(),
            seqs: Vec::new(),
            horizon,
            cap,
            marks,
            z_max,
            n_levels,
        }
    }

    fn add_neutral(&mut self, seed: u64) {
        for dst in 1..self.n_levels {
            self.streams.push(SubStream {
                rng: stream_rng(seed, StreamKind::Neutral, dst as u64),
                spec: StreamSpec::Neutral { dst },
                clock: 0.0,
                exp: Exp::new(dst as f64).expect("positive rate"),
            });
        }
    }

    fn add_potential(&mut self, seed: u64) {
        let rate: f64 = self.z_max.iter().sum();
        if rate <= 0.0 {
            return;
        }
        for level in 0..self.n_levels {
            self.streams.push(SubStream {
                rng: stream_rng(seed, StreamKind::Potential, level as u64),
                spec: StreamSpec::Potential { level },
                clock: 0.0,
                exp: Exp::new(rate).expect("positive rate"),
            });
        }
    }

    fn prime(&mut self) {
        self.seqs = vec![0; self.streams.len()];
        for idx in 0..self.streams.len() {
            self.refill(idx);
        }
    }

    fn refill(&mut self, idx: usize) {
        let horizon = self.horizon;
        let sub = &mut self.streams[idx];
        sub.clock += sub.exp.sample(&mut sub.rng);
        if sub.clock > horizon {
            return;
        }
        let atom = match sub.spec {
            StreamSpec::Neutral { dst } => Atom::Neutral(NeutralAtom {
                time_s: sub.clock,
                src: sub.rng.random_range(0..dst),
                dst,
            }),
            StreamSpec::Potential { level } => {
                let k = if self.marks.len() == 1 {
                    0
                } else {
                    // mark chosen with probability proportional to its range
                    let total: f64 = self.z_max.iter().sum();
                    let u = total * sub.rng.random::<f64>();
                    let mut acc = 0.0;
                    self.z_max
                        .iter()
                        .position(|&x| {
                            acc += x;
                            u < acc
                        })
                        .unwrap_or(self.z_max.len() - 1)
                };
                let mark = self.marks[k];
                let z = self.z_max[k] * sub.rng.random::<f64>();
                let w = sub.rng.random::<f64>();
                Atom::Potential(PotentialAtom { time_s: sub.clock, level, z, w, mark })
            }
        };
        let seq = self.seqs[idx];
        self.seqs[idx] += 1;
        self.heap.push(Pending { atom, stream: idx, seq });
    }

    /// Drains the generator into a materialized stream.
    pub fn collect_stream(mut self) -> EventStream {
        let mut atoms = Vec::new();
        while let Some(a) = self.pop() {
            atoms.push(a);
        }
        EventStream {
            atoms,
            horizon: self.horizon,
            n_levels: self.n_levels,
            cap: self.cap,
            marks: self.marks.clone(),
        }
    }
}

impl EventSource for EventGenerator {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn peek(&mut self) -> Option<&Atom> {
        self.heap.peek().map(|p| &p.atom)
    }

    fn pop(&mut self) -> Option<Atom> {
        let top = self.heap.pop()?;
        self.refill(top.stream);
        Some(top.atom)
    }
}

impl Iterator for EventGenerator {
    type Item = Atom;

    fn next(&mut self) -> Option<Atom> {
        self.pop()
    }
}

fn check_cap(cap: f64) -> Result<()> {
    if !(cap >= 0.0) || !cap.is_finite() {
        return Err(invalid(format!("cap must be finite and >= 0, got {cap}")));
    }
    Ok(())
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon >= 0.0) {
        return Err(invalid(format!("horizon must be >= 0, got {horizon}")));
    }
    Ok(())
}

/// Rate-1 arrows for every pair of levels on `[0, horizon]`.
pub fn gen_neutral_events(n_levels: usize, horizon: f64, seed: u64) -> Result<EventStream> {
    Ok(EventGenerator::neutral_only(n_levels, horizon, seed)?.collect_stream())
}

/// Potential events of rate `cap` per level and mark on `[0, horizon]`.
pub fn gen_potential_events(
    n_levels: usize,
    horizon: f64,
    cap: f64,
    marks: &[Mark],
    seed: u64,
) -> Result<EventStream> {
    Ok(EventGenerator::potential_only(n_levels, horizon, cap, marks, seed)?.collect_stream())
}

/// Stable merge of two streams over the same levels and horizon.
pub fn merge_streams(a: &EventStream, b: &EventStream) -> Result<EventStream> {
    if a.horizon != b.horizon {
        return Err(invalid(format!("horizons differ: {} vs {}", a.horizon, b.horizon)));
    }
    if a.n_levels != b.n_levels {
        return Err(invalid(format!("level counts differ: {} vs {}", a.n_levels, b.n_levels)));
    }
    let mut atoms = Vec::with_capacity(a.len() + b.len());
    let (mut x, mut y) = (a.atoms.iter().peekable(), b.atoms.iter().peekable());
    loop {
        let take_a = match (x.peek(), y.peek()) {
            (Some(p), Some(q)) => p.key_cmp(q) != Ordering::Greater,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        let next = if take_a { x.next() } else { y.next() };
        atoms.push(*next.expect("peeked"));
    }
    let mut marks: Vec<Mark> = a.marks.iter().chain(&b.marks).copied().collect();
    marks.sort();
    marks.dedup();
    Ok(EventStream { atoms, horizon: a.horizon, n_levels: a.n_levels, cap: a.cap.max(b.cap), marks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neutral(t: f64) -> Atom {
        Atom::Neutral(NeutralAtom { time_s: t, src: 0, dst: 1 })
    }

    #[test]
    fn trivial_streams_are_empty() {
        assert!(gen_neutral_events(3, 0.0, 1).unwrap().is_empty());
        assert!(gen_neutral_events(1, 10.0, 1).unwrap().is_empty());
        let s = gen_potential_events(5, 2.0, 0.0, &[Mark::Beta, Mark::Delta], 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn argument_errors() {
        assert!(gen_neutral_events(3, -1.0, 1).is_err());
        assert!(gen_potential_events(3, 1.0, -0.5, &[Mark::Beta], 1).is_err());
        assert!(gen_potential_events(3, 1.0, 1.0, &[], 1).is_err());
    }

    #[test]
    fn merge_examples() {
        let empty = EventStream::empty(2, 5.0);
        assert!(merge_streams(&empty, &empty).unwrap().is_empty());

        let mut one = EventStream::empty(2, 5.0);
        one.atoms.push(neutral(1.0));
        assert_eq!(merge_streams(&one, &empty).unwrap().atoms, one.atoms);

        let mut a = EventStream::empty(2, 5.0);
        a.atoms = vec![neutral(1.0), neutral(3.0)];
        let mut b = EventStream::empty(2, 5.0);
        b.atoms = vec![neutral(2.0)];
        let times: Vec<f64> = merge_streams(&a, &b).unwrap().atoms.iter().map(Atom::time).collect();
        assert_eq!(times, vec![1.0, 2.0, 3.0]);

        let other = EventStream::empty(2, 4.0);
        assert!(merge_streams(&a, &other).is_err());
    }

    #[test]
    fn ties_follow_kind_then_levels() {
        let p = Atom::Potential(PotentialAtom { time_s: 1.0, level: 0, z: 0.0, w: 0.0, mark: Mark::Beta });
        let n = Atom::Neutral(NeutralAtom { time_s: 1.0, src: 2, dst: 3 });
        assert_eq!(n.key_cmp(&p), Ordering::Less);
        let n2 = Atom::Neutral(NeutralAtom { time_s: 1.0, src: 1, dst: 3 });
        assert_eq!(n2.key_cmp(&n), Ordering::Less);
    }

    #[test]
    fn generator_matches_materialized_merge() {
        let marks = [Mark::Beta, Mark::Delta];
        let lazy = EventGenerator::new(6, 3.0, 2.0, &marks, 99).unwrap().collect_stream();
        let merged = merge_streams(
            &gen_neutral_events(6, 3.0, 99).unwrap(),
            &gen_potential_events(6, 3.0, 2.0, &marks, 99).unwrap(),
        )
        .unwrap();
        assert_eq!(lazy.atoms, merged.atoms);
    }

    #[test]
    fn streams_are_sorted_and_in_range() {
        let s = EventGenerator::new(8, 5.0, 1.5, &[Mark::Beta, Mark::Delta], 3).unwrap().collect_stream();
        for pair in s.atoms.windows(2) {
            assert!(pair[0].time() < pair[1].time());
        }
        for a in &s.atoms {
            assert!(a.time() >= 0.0 && a.time() <= 5.0);
            match a {
                Atom::Neutral(n) => assert!(n.src < n.dst && n.dst < 8),
                Atom::Potential(p) => {
                    assert!(p.level < 8);
                    assert!((0.0..=1.5).contains(&p.z));
                    assert!((0.0..=1.0).contains(&p.w));
                }
            }
        }
    }

    #[test]
    fn csv_dump_has_header_and_one_based_levels() {
        let mut s = EventStream::empty(3, 1.0);
        s.atoms.push(neutral(0.5));
        s.atoms.push(Atom::Potential(PotentialAtom { time_s: 0.75, level: 2, z: 0.25, w: 0.5, mark: Mark::Delta }));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kind,time_s,i,j,level,z,w,mark");
        assert!(lines[1].starts_with("neutral,") && lines[1].ends_with(",1,2,,,,"));
        assert!(lines[2].starts_with("potential,") && lines[2].ends_with(",delta"));
        assert!(lines[2].contains(",,,3,"));
    }

    #[test]
    fn restricted_generator_respects_bounds() {
        let bounds = [(Mark::Beta, 0.5), (Mark::Delta, 2.0)];
        let gen = EventGenerator::restricted(3, 200.0, 10.0, &bounds, 4).unwrap();
        let s = gen.collect_stream();
        let pot: Vec<_> = s.potential().collect();
        for a in &pot {
            let b = if a.mark == Mark::Beta { 0.5 } else { 2.0 };
            assert!(a.z <= b);
        }
        // expected count 3 * 200 * 2.5 = 1500
        assert!((pot.len() as f64 - 1500.0).abs() < 3.0 * 1500f64.sqrt());
        let beta = pot.iter().filter(|a| a.mark == Mark::Beta).count() as f64;
        assert!((beta - 300.0).abs() < 3.0 * 300f64.sqrt());
        assert!(EventGenerator::restricted(3, 1.0, 1.0, &[(Mark::Beta, 1.0), (Mark::Beta, 0.5)], 1).is_err());
    }
}
