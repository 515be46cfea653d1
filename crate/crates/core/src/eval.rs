//! Scoring hypothesis alignments against references: phone edit distance
//! plus counts of matched phones whose centers moved by 0.1 s or 0.2 s.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::decoder::Alignment;
use crate::phoneset::PhoneInventory;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("reference has no phones to score")]
    EmptyReference,
    #[error("phone code {0:?} is not in the inventory")]
    UnknownPhone(char),
}

/// A labeled time interval in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPhone {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

impl TimedPhone {
    pub fn new(label: impl Into<String>, start: f64, end: f64) -> Self {
        Self {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Converts an alignment into SAMPA-labeled intervals (silence labeled "").
pub fn timed_phones(a: &Alignment, inv: &PhoneInventory) -> Result<Vec<TimedPhone>, EvalError> {
    a.phones
        .iter()
        .map(|iv| {
            let label = if iv.phone == inv.silence() {
                String::new()
            } else {
                inv.get(iv.phone).ok_or(EvalError::UnknownPhone(iv.phone))?.sampa.clone()
            };
            Ok(TimedPhone::new(label, iv.start_seconds(), iv.end_seconds()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match { r: usize, h: usize },
    Substitute { r: usize, h: usize },
    Delete { r: usize },
    Insert { h: usize },
}

/// Minimal unit-cost edit script. Among equally cheap scripts the backtrace
/// prefers match, then substitution, deletion, insertion.
pub fn edit_align<T: PartialEq>(reference: &[T], hyp: &[T]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            d[i * w + j] = diag.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 && reference[i - 1] == hyp[j - 1] && d[(i - 1) * w + j - 1] == here {
            ops.push(EditOp::Match { r: i - 1, h: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[(i - 1) * w + j - 1] + 1 == here {
            ops.push(EditOp::Substitute { r: i - 1, h: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && d[(i - 1) * w + j] + 1 == here {
            ops.push(EditOp::Delete { r: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Insert { h: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Edit cost of a script.
pub fn edit_cost(ops: &[EditOp]) -> usize {
    ops.iter().filter(|o| !matches!(o, EditOp::Match { .. })).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub include_silence: bool,
    /// Center shifts of at least these many seconds count as misplaced.
    pub thresholds: (f64, f64),
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            include_silence: false,
            thresholds: (0.1, 0.2),
        }
    }
}

/// Slack for threshold comparisons so that shifts computed from decimal
/// times land on the intended side.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub ref_phone_count: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub matches: usize,
    pub misplaced_100ms: usize,
    pub misplaced_200ms: usize,
}

impl EvalReport {
    fn pct(&self, n: usize) -> f64 {
        if self.ref_phone_count == 0 {
            0.0
        } else {
            100.0 * n as f64 / self.ref_phone_count as f64
        }
    }

    pub fn mismatch_pct(&self) -> f64 {
        self.pct(self.insertions + self.deletions + self.substitutions)
    }

    pub fn misplace_100_pct(&self) -> f64 {
        self.pct(self.misplaced_100ms)
    }

    pub fn misplace_200_pct(&self) -> f64 {
        self.pct(self.misplaced_200ms)
    }

    pub fn combined_100_pct(&self) -> f64 {
        self.pct(self.insertions + self.deletions + self.substitutions + self.misplaced_100ms)
    }

    /// Sums counts of another file pair into this report.
    pub fn add(&mut self, other: &EvalReport) {
        self.ref_phone_count += other.ref_phone_count;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.substitutions += other.substitutions;
        self.matches += other.matches;
        self.misplaced_100ms += other.misplaced_100ms;
        self.misplaced_200ms += other.misplaced_200ms;
    }

    /// Text table: one metric per row, percentages over reference phones.
    pub fn table(&self, include_silence: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} reference phones; percentages of reference phone count; silence {}",
            self.ref_phone_count,
            if include_silence { "included" } else { "excluded" }
        );
        let rows = [
            ("phone mismatch", self.mismatch_pct()),
            ("misplacement 0.1s+", self.misplace_100_pct()),
            ("misplacement 0.2s+", self.misplace_200_pct()),
            ("mismatch or misplacement 0.1s+", self.combined_100_pct()),
        ];
        for (name, v) in rows {
            let _ = writeln!(out, "{name:<32}{v:>7.2}%");
        }
        out
    }

    pub fn to_json(&self, include_silence: bool) -> serde_json::Value {
        serde_json::json!({
            "counts": self,
            "percent": {
                "mismatch": self.mismatch_pct(),
                "misplace_0.1": self.misplace_100_pct(),
                "misplace_0.2": self.misplace_200_pct(),
                "mismatch_or_misplace_0.1": self.combined_100_pct(),
            },
            "conventions": {
                "denominator": "reference phone count",
                "silence": if include_silence { "included" } else { "excluded" },
                "shift": "phone center",
            }
        })
    }
}

pub fn score(reference: &[TimedPhone], hyp: &[TimedPhone], opts: ScoreOptions) -> Result<EvalReport, EvalError> {
    let keep = |p: &&TimedPhone| opts.include_silence || !p.label.is_empty();
    let r: Vec<&TimedPhone> = reference.iter().filter(keep).collect();
    let h: Vec<&TimedPhone> = hyp.iter().filter(keep).collect();
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let rl: Vec<&str> = r.iter().map(|p| p.label.as_str()).collect();
    let hl: Vec<&str> = h.iter().map(|p| p.label.as_str()).collect();
    let mut rep = EvalReport {
        ref_phone_count: r.len(),
        ..Default::default()
    };
    for op in edit_align(&rl, &hl) {
        match op {
            EditOp::Match { r: i, h: j } => {
                rep.matches += 1;
                let shift = (r[i].center() - h[j].center()).abs();
                if shift + TIME_EPS >= opts.thresholds.0 {
                    rep.misplaced_100ms += 1;
                }
                if shift + TIME_EPS >= opts.thresholds.1 {
                    rep.misplaced_200ms += 1;
                }
            }
            EditOp::Substitute { .. } => rep.substitutions += 1,
            EditOp::Delete { .. } => rep.deletions += 1,
            EditOp::Insert { .. } => rep.insertions += 1,
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(labels: &[&str], dur: f64) -> Vec<TimedPhone> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| TimedPhone::new(*l, i as f64 * dur, (i + 1) as f64 * dur))
            .collect()
    }

    #[test]
    fn edit_examples() {
        let a: Vec<char> = "abc".chars().collect();
        assert!(edit_align(&a, &a).iter().all(|o| matches!(o, EditOp::Match { .. })));
        let b: Vec<char> = "abd".chars().collect();
        assert_eq!(
            edit_align(&a, &b),
            vec![
                EditOp::Match { r: 0, h: 0 },
                EditOp::Match { r: 1, h: 1 },
                EditOp::Substitute { r: 2, h: 2 }
            ]
        );
        assert_eq!(edit_align(&a, &[]), vec![EditOp::Delete { r: 0 }, EditOp::Delete { r: 1 }, EditOp::Delete { r: 2 }]);
        assert_eq!(edit_align::<char>(&[], &['x']), vec![EditOp::Insert { h: 0 }]);
    }

    #[test]
    fn self_score_is_zero() {
        let x = seq(&["", "a", "h", "o", "j", ""], 0.07);
        let r = score(&x, &x, ScoreOptions::default()).unwrap();
        assert_eq!(r.ref_phone_count, 4);
        assert_eq!((r.mismatch_pct(), r.misplace_100_pct(), r.combined_100_pct()), (0.0, 0.0, 0.0));
        assert_eq!(
            score(&seq(&["", ""], 0.1), &x, ScoreOptions::default()).unwrap_err(),
            EvalError::EmptyReference
        );
        let with_sil = score(
            &x,
            &x,
            ScoreOptions {
                include_silence: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(with_sil.ref_phone_count, 6);
    }

    #[test]
    fn uniform_shift() {
        let x = seq(&["a", "b", "c", "d"], 0.05);
        let moved: Vec<TimedPhone> = x.iter().map(|p| TimedPhone::new(p.label.clone(), p.start + 0.1, p.end + 0.1)).collect();
        let r = score(&x, &moved, ScoreOptions::default()).unwrap();
        assert_eq!(r.misplaced_100ms, 4);
        assert_eq!(r.misplaced_200ms, 0);
        let both: Vec<TimedPhone> = x.iter().map(|p| TimedPhone::new(p.label.clone(), p.start + 3.0, p.end + 3.0)).collect();
        let moved_both: Vec<TimedPhone> =
            moved.iter().map(|p| TimedPhone::new(p.label.clone(), p.start + 3.0, p.end + 3.0)).collect();
        assert_eq!(score(&both, &moved_both, ScoreOptions::default()).unwrap(), r);
    }

    #[test]
    fn report_formats() {
        let r = EvalReport {
            ref_phone_count: 100,
            insertions: 1,
            deletions: 1,
            substitutions: 2,
            matches: 97,
            misplaced_100ms: 3,
            misplaced_200ms: 0,
        };
        let t = r.table(false);
        assert!(t.contains("phone mismatch                     4.00%"));
        assert!(t.contains("mismatch or misplacement 0.1s+     7.00%"));
        let j = r.to_json(false);
        assert_eq!(j["percent"]["misplace_0.1"], 3.0);
        assert_eq!(j["counts"]["matches"], 97);
    }
}
