//! Alignment graphs over pronunciation sausages and Viterbi forced alignment.
//!
//! Each phone of each alternative is one emitting state with a self-loop
//! (or a chain of `min_duration` states whose last member loops). Empty
//! alternatives are contracted away while building, so the dynamic program
//! only sees emitting states.

use std::fmt::Write as _;

use thiserror::Error;

use crate::am::PhonePosteriors;
use crate::g2p::{PronSausage, SlotOrigin};
use crate::phoneset::PhoneInventory;

/// Seconds per frame; frame `t` covers `[t·0.010, (t+1)·0.010)`.
pub const FRAME_SHIFT: f64 = 0.010;

/// Frame index to seconds, rounded to the nearest double of `frames / 100`.
pub fn frames_to_seconds(frames: usize) -> f64 {
    frames as f64 / 100.0
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("pronunciation slot {slot} has no alternatives")]
    EmptySlot { slot: usize },
    #[error("phone code {0:?} is not in the inventory")]
    UnknownPhone(char),
    #[error("nothing to align: the pronunciation graph has no phones")]
    EmptyGraph,
    #[error("text too long for audio: at least {needed} frames needed, audio has {frames}")]
    TextTooLong { needed: usize, frames: usize },
    #[error("minimum duration must be 1 to 3 frames, got {0}")]
    MinDuration(usize),
    #[error("posteriors have {got} phone columns, inventory has {expected}")]
    PosteriorWidth { expected: usize, got: usize },
    #[error("cannot align zero frames")]
    NoFrames,
    #[error("{0}")]
    Dump(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphState {
    /// Inventory index of the emitted phone.
    pub phone: usize,
    pub code: char,
    pub slot: usize,
    pub alternative: usize,
    /// Phone position within the alternative.
    pub position: usize,
    /// Index within the minimum-duration chain.
    pub copy: usize,
    pub self_loop: bool,
}

#[derive(Debug, Clone)]
pub struct AlignGraph {
    pub states: Vec<GraphState>,
    /// Successors other than the self-loop.
    pub successors: Vec<Vec<usize>>,
    pub starts: Vec<usize>,
    pub is_final: Vec<bool>,
    /// Slot alternatives, kept for reporting the chosen variants.
    pub slot_alternatives: Vec<Vec<String>>,
    pub slot_origins: Vec<SlotOrigin>,
    pub words: Vec<String>,
    /// Frames needed by the shortest start→end path.
    pub min_frames: usize,
}

impl AlignGraph {
    pub fn build(sausage: &PronSausage, inv: &PhoneInventory, min_duration: usize) -> Result<Self, DecodeError> {
        if !(1..=3).contains(&min_duration) {
            return Err(DecodeError::MinDuration(min_duration));
        }
        let mut states: Vec<GraphState> = Vec::new();
        let mut successors: Vec<Vec<usize>> = Vec::new();
        let mut starts = Vec::new();
        // States whose next move enters the following slot, and whether the
        // empty prefix reaches this point.
        let mut frontier: Vec<usize> = Vec::new();
        let mut open_start = true;
        // Shortest emitting length to reach the frontier.
        let mut shortest = 0usize;
        for (si, slot) in sausage.slots.iter().enumerate() {
            if slot.alternatives.is_empty() {
                return Err(DecodeError::EmptySlot { slot: si });
            }
            let mut next_frontier = Vec::new();
            let mut next_open = false;
            let mut next_shortest = usize::MAX;
            for (ai, alt) in slot.alternatives.iter().enumerate() {
                if alt.is_empty() {
                    next_frontier.extend_from_slice(&frontier);
                    next_open |= open_start;
                    next_shortest = next_shortest.min(shortest);
                    continue;
                }
                let mut prev: Option<usize> = None;
                for (pos, code) in alt.chars().enumerate() {
                    let phone = inv.position(code).ok_or(DecodeError::UnknownPhone(code))?;
                    for copy in 0..min_duration {
                        let id = states.len();
                        states.push(GraphState {
                            phone,
                            code,
                            slot: si,
                            alternative: ai,
                            position: pos,
                            copy,
                            self_loop: copy + 1 == min_duration,
                        });
                        successors.push(Vec::new());
                        match prev {
                            Some(p) => successors[p].push(id),
                            None => {
                                for &f in &frontier {
                                    successors[f].push(id);
                                }
                                if open_start {
                                    starts.push(id);
                                }
                            }
                        }
                        prev = Some(id);
                    }
                }
                next_frontier.push(prev.expect("non-empty alternative"));
                next_shortest = next_shortest.min(shortest + alt.chars().count() * min_duration);
            }
            next_frontier.sort_unstable();
            next_frontier.dedup();
            frontier = next_frontier;
            open_start = next_open;
            shortest = next_shortest;
        }
        if states.is_empty() {
            return Err(DecodeError::EmptyGraph);
        }
        for s in &mut successors {
            s.sort_unstable();
            s.dedup();
        }
        let mut is_final = vec![false; states.len()];
        for &f in &frontier {
            is_final[f] = true;
        }
        // An all-empty path has no frames; the shortest real path has ≥ 1 phone.
        let min_frames = if open_start { min_duration } else { shortest };
        Ok(Self {
            states,
            successors,
            starts,
            is_final,
            slot_alternatives: sausage.slots.iter().map(|s| s.alternatives.clone()).collect(),
            slot_origins: sausage.slots.iter().map(|s| s.origin).collect(),
            words: sausage.words.clone(),
            min_frames,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.states.len()];
        for (s, succ) in self.successors.iter().enumerate() {
            for &n in succ {
                preds[n].push(s);
            }
        }
        preds
    }

    /// Number of distinct phone strings spelled by start→end paths, counting
    /// each sequence of alternative choices once.
    pub fn path_count(&self) -> u128 {
        // Paths over states (ignoring self-loops) from starts to finals.
        let mut count = vec![0u128; self.states.len()];
        for &s in &self.starts {
            count[s] += 1;
        }
        // States are created in topological order.
        let mut total = 0;
        for s in 0..self.states.len() {
            for &n in &self.successors[s] {
                count[n] += count[s];
            }
            if self.is_final[s] {
                total += count[s];
            }
        }
        total
    }
}

/// Per-phone frame counts from an alignment pass, turned into floored,
/// normalized probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonePrior {
    pub counts: Vec<u64>,
    pub total: u64,
    probs: Vec<f64>,
}

pub const PRIOR_FLOOR: f64 = 1e-5;

impl PhonePrior {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let probs = if total == 0 {
            vec![1.0 / counts.len().max(1) as f64; counts.len()]
        } else {
            let floored: Vec<f64> = counts
                .iter()
                .map(|&c| (c as f64 / total as f64).max(PRIOR_FLOOR))
                .collect();
            let z: f64 = floored.iter().sum();
            floored.into_iter().map(|p| p / z).collect()
        };
        Self { counts, total, probs }
    }

    pub fn uniform(phones: usize) -> Self {
        Self::from_counts(vec![0; phones])
    }

    /// Frame counts over a set of alignments.
    pub fn recount<'a>(
        alignments: impl IntoIterator<Item = &'a Alignment>,
        inv: &PhoneInventory,
    ) -> Result<Self, DecodeError> {
        let mut counts = vec![0u64; inv.len()];
        for a in alignments {
            for iv in &a.phones {
                let i = inv.position(iv.phone).ok_or(DecodeError::UnknownPhone(iv.phone))?;
                counts[i] += (iv.end - iv.start) as u64;
            }
        }
        Ok(Self::from_counts(counts))
    }

    pub fn prob(&self, phone: usize) -> f64 {
        self.probs[phone]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneInterval {
    pub phone: char,
    pub start: usize,
    pub end: usize,
}

impl PhoneInterval {
    pub fn start_seconds(&self) -> f64 {
        frames_to_seconds(self.start)
    }

    pub fn end_seconds(&self) -> f64 {
        frames_to_seconds(self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordSpan {
    pub word: String,
    pub start: usize,
    pub end: usize,
}

/// Phone intervals tiling `[0, num_frames)` plus word spans.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Alignment {
    pub phones: Vec<PhoneInterval>,
    pub words: Vec<WordSpan>,
    pub num_frames: usize,
}

impl Alignment {
    /// Checks that the phone intervals tile `[0, num_frames)`.
    pub fn validate(&self) -> Result<(), String> {
        let mut at = 0;
        for (i, iv) in self.phones.iter().enumerate() {
            if iv.start != at || iv.end <= iv.start {
                return Err(format!("interval {i} [{}, {}) breaks tiling at frame {at}", iv.start, iv.end));
            }
            at = iv.end;
        }
        if at != self.num_frames {
            return Err(format!("intervals end at frame {at}, expected {}", self.num_frames));
        }
        Ok(())
    }

    /// Per-frame inventory indices.
    pub fn frame_labels(&self, inv: &PhoneInventory) -> Result<Vec<usize>, DecodeError> {
        let mut out = Vec::with_capacity(self.num_frames);
        for iv in &self.phones {
            let i = inv.position(iv.phone).ok_or(DecodeError::UnknownPhone(iv.phone))?;
            out.extend(std::iter::repeat_n(i, iv.end - iv.start));
        }
        Ok(out)
    }

    /// Phone codes of the intervals in order.
    pub fn phone_string(&self) -> String {
        self.phones.iter().map(|p| p.phone).collect()
    }

    /// Debug dump: `phone<TAB>start_s<TAB>end_s` per interval.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for iv in &self.phones {
            let _ = writeln!(out, "{}\t{:.3}\t{:.3}", iv.phone, iv.start_seconds(), iv.end_seconds());
        }
        out
    }

    /// Parses [`Alignment::dump`] output; times must fall on frame boundaries.
    pub fn parse_dump(text: &str) -> Result<Self, DecodeError> {
        let mut phones = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| DecodeError::Dump(format!("line {}: {m}", n + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad("expected phone, start and end separated by tabs"));
            }
            let mut chars = cols[0].chars();
            let phone = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(bad("phone must be one character")),
            };
            let frame = |s: &str| -> Result<usize, DecodeError> {
                let v: f64 = s.trim().parse().map_err(|_| bad("bad time"))?;
                let f = v / FRAME_SHIFT;
                if v < 0.0 || (f - f.round()).abs() > 1e-6 {
                    return Err(bad("time not on a frame boundary"));
                }
                Ok(f.round() as usize)
            };
            phones.push(PhoneInterval {
                phone,
                start: frame(cols[1])?,
                end: frame(cols[2])?,
            });
        }
        let num_frames = phones.last().map_or(0, |p| p.end);
        let a = Alignment {
            phones,
            words: Vec::new(),
            num_frames,
        };
        a.validate().map_err(DecodeError::Dump)?;
        Ok(a)
    }
}

/// Best path with its score and chosen alternative per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiResult {
    pub alignment: Alignment,
    pub score: f64,
    /// Index of the chosen alternative in every sausage slot.
    pub choices: Vec<usize>,
    /// Graph state of every frame.
    pub state_path: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub alpha: f64,
    pub min_duration: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            min_duration: 1,
        }
    }
}

/// Emission score of `phone` at frame `t`: log posterior minus α·log prior.
fn emission(post: &PhonePosteriors, t: usize, phone: usize, log_prior: &[f64], alpha: f64) -> f64 {
    let p = post.row(t)[phone].max(f64::MIN_POSITIVE);
    p.ln() - alpha * log_prior[phone]
}

/// Maximizes Σ_t [log p(phone_t | x_t) − α·log prior(phone_t)] over graph paths
/// of exactly `posteriors.frames` frames.
pub fn viterbi(
    post: &PhonePosteriors,
    graph: &AlignGraph,
    prior: &PhonePrior,
    alpha: f64,
) -> Result<ViterbiResult, DecodeError> {
    let frames = post.frames;
    if frames == 0 {
        return Err(DecodeError::NoFrames);
    }
    if graph.is_empty() {
        return Err(DecodeError::EmptyGraph);
    }
    if post.phones != prior.len() {
        return Err(DecodeError::PosteriorWidth {
            expected: prior.len(),
            got: post.phones,
        });
    }
    if graph.min_frames > frames {
        return Err(DecodeError::TextTooLong {
            needed: graph.min_frames,
            frames,
        });
    }
    let n = graph.len();
    let log_prior: Vec<f64> = (0..prior.len()).map(|i| prior.prob(i).ln()).collect();
    let preds = graph.predecessors();
    let mut back = vec![u32::MAX; frames * n];
    let mut cur = vec![f64::NEG_INFINITY; n];
    for &s in &graph.starts {
        cur[s] = emission(post, 0, graph.states[s].phone, &log_prior, alpha);
    }
    let mut next = vec![f64::NEG_INFINITY; n];
    for t in 1..frames {
        for s in 0..n {
            let st = &graph.states[s];
            let (mut best, mut arg) = if st.self_loop {
                (cur[s], s as u32)
            } else {
                (f64::NEG_INFINITY, u32::MAX)
            };
            for &p in &preds[s] {
                if cur[p] > best {
                    best = cur[p];
                    arg = p as u32;
                }
            }
            next[s] = if best == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                best + emission(post, t, st.phone, &log_prior, alpha)
            };
            back[t * n + s] = arg;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let (mut best, mut end) = (f64::NEG_INFINITY, usize::MAX);
    for s in 0..n {
        if graph.is_final[s] && cur[s] > best {
            best = cur[s];
            end = s;
        }
    }
    if end == usize::MAX {
        return Err(DecodeError::TextTooLong {
            needed: graph.min_frames.max(frames + 1),
            frames,
        });
    }
    let mut path = vec![0usize; frames];
    let mut s = end;
    for t in (0..frames).rev() {
        path[t] = s;
        if t > 0 {
            s = back[t * n + s] as usize;
        }
    }
    Ok(assemble(graph, path, best))
}

/// Phone occurrence identity: chain copies of one phone share it.
fn occurrence(st: &GraphState) -> (usize, usize, usize) {
    (st.slot, st.alternative, st.position)
}

fn assemble(graph: &AlignGraph, path: Vec<usize>, score: f64) -> ViterbiResult {
    let frames = path.len();
    let mut phones: Vec<PhoneInterval> = Vec::new();
    let mut owners: Vec<SlotOrigin> = Vec::new();
    let mut choices: Vec<Option<usize>> = vec![None; graph.slot_alternatives.len()];
    let mut last: Option<(usize, usize, usize)> = None;
    for (t, &s) in path.iter().enumerate() {
        let st = &graph.states[s];
        choices[st.slot] = Some(st.alternative);
        if last == Some(occurrence(st)) {
            phones.last_mut().unwrap().end = t + 1;
        } else {
            phones.push(PhoneInterval {
                phone: st.code,
                start: t,
                end: t + 1,
            });
            owners.push(graph.slot_origins[st.slot]);
            last = Some(occurrence(st));
        }
    }
    let choices = choices
        .iter()
        .zip(&graph.slot_alternatives)
        .map(|(c, alts)| c.unwrap_or_else(|| alts.iter().position(|a| a.is_empty()).unwrap_or(0)))
        .collect();
    let mut words: Vec<WordSpan> = Vec::new();
    let mut current: Option<usize> = None;
    for (iv, owner) in phones.iter().zip(&owners) {
        match *owner {
            SlotOrigin::Word(w) if current == Some(w) => words.last_mut().unwrap().end = iv.end,
            SlotOrigin::Word(w) => {
                words.push(WordSpan {
                    word: graph.words[w].clone(),
                    start: iv.start,
                    end: iv.end,
                });
                current = Some(w);
            }
            SlotOrigin::Boundary => current = None,
        }
    }
    ViterbiResult {
        alignment: Alignment {
            phones,
            words,
            num_frames: frames,
        },
        score,
        choices,
        state_path: path,
    }
}

/// Recomputes the objective of a state path.
pub fn path_score(post: &PhonePosteriors, graph: &AlignGraph, prior: &PhonePrior, alpha: f64, path: &[usize]) -> f64 {
    let log_prior: Vec<f64> = (0..prior.len()).map(|i| prior.prob(i).ln()).collect();
    path.iter()
        .enumerate()
        .map(|(t, &s)| emission(post, t, graph.states[s].phone, &log_prior, alpha))
        .sum()
}

/// Uniform starting alignment: every phone 3 frames (30 ms) with equal
/// leading and trailing silence, the odd frame going to the end. When the
/// phones do not fit at 3 frames each they share all frames evenly.
pub fn bootstrap_alignment(phones: &str, frames: usize, silence: char) -> Result<Alignment, DecodeError> {
    let codes: Vec<char> = phones.chars().collect();
    let n = codes.len();
    if frames == 0 {
        return Err(DecodeError::NoFrames);
    }
    if n > frames {
        return Err(DecodeError::TextTooLong { needed: n, frames });
    }
    let mut out = Vec::with_capacity(n + 2);
    let mut push = |phone: char, start: usize, end: usize| {
        if end > start {
            out.push(PhoneInterval { phone, start, end });
        }
    };
    if n == 0 {
        push(silence, 0, frames);
    } else if 3 * n <= frames {
        let lead = (frames - 3 * n) / 2;
        push(silence, 0, lead);
        for (i, &c) in codes.iter().enumerate() {
            push(c, lead + 3 * i, lead + 3 * i + 3);
        }
        push(silence, lead + 3 * n, frames);
    } else {
        for (i, &c) in codes.iter().enumerate() {
            push(c, i * frames / n, (i + 1) * frames / n);
        }
    }
    Ok(Alignment {
        phones: out,
        words: Vec::new(),
        num_frames: frames,
    })
}

/// Aligns with the defaults used everywhere else: build, then Viterbi.
pub fn align(
    post: &PhonePosteriors,
    sausage: &PronSausage,
    inv: &PhoneInventory,
    prior: &PhonePrior,
    cfg: DecoderConfig,
) -> Result<ViterbiResult, DecodeError> {
    let graph = AlignGraph::build(sausage, inv, cfg.min_duration)?;
    viterbi(post, &graph, prior, cfg.alpha)
}
