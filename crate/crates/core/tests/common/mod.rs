//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use prak_core::am::PhonePosteriors;
use prak_core::eval::TimedPhone;
use prak_core::g2p::{PronSausage, Slot, SlotOrigin};
use prak_core::phoneset::PhoneInventory;

/// Every way to write `total` as an ordered sum of `parts` positive integers.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 1..=total.saturating_sub(parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Every phone string spelled by one alternative per slot.
pub fn sausage_paths(s: &PronSausage) -> Vec<String> {
    let mut out = vec![String::new()];
    for slot in &s.slots {
        out = out
            .iter()
            .flat_map(|p| slot.alternatives.iter().map(move |a| format!("{p}{a}")))
            .collect();
    }
    out
}

/// Best Σ_t [ln p − α ln prior] by exhaustive enumeration of variant choices
/// and segmentations. `None` when no path fits.
pub fn brute_force_score(
    post: &PhonePosteriors,
    s: &PronSausage,
    inv: &PhoneInventory,
    log_prior: &[f64],
    alpha: f64,
) -> Option<f64> {
    let frames = post.frames;
    let mut best: Option<f64> = None;
    for path in sausage_paths(s) {
        let phones: Vec<usize> = path.chars().map(|c| inv.position(c).unwrap()).collect();
        if phones.is_empty() {
            continue;
        }
        for seg in compositions(frames, phones.len()) {
            let mut t = 0;
            let mut score = 0.0;
            for (&p, &len) in phones.iter().zip(&seg) {
                for _ in 0..len {
                    score += post.row(t)[p].ln() - alpha * log_prior[p];
                    t += 1;
                }
            }
            if best.is_none_or(|b| score > b) {
                best = Some(score);
            }
        }
    }
    best
}

pub fn word_sausage(slots: &[Vec<&str>]) -> PronSausage {
    PronSausage {
        slots: slots
            .iter()
            .map(|alts| Slot {
                alternatives: alts.iter().map(|a| a.to_string()).collect(),
                origin: SlotOrigin::Word(0),
            })
            .collect(),
        words: vec!["w".to_string()],
    }
}

/// Levenshtein distance by plain recursion over all alignments (tiny inputs).
pub fn edit_distance_exhaustive(a: &[char], b: &[char]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = edit_distance_exhaustive(ra, rb) + usize::from(x != y);
            let del = edit_distance_exhaustive(ra, b) + 1;
            let ins = edit_distance_exhaustive(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

/// 100 reference phones of 0.05 s each. The hypothesis substitutes two,
/// deletes one, inserts one and shifts three matched phones by 0.15 s.
pub fn constructed_pair() -> (Vec<TimedPhone>, Vec<TimedPhone>) {
    let labels = ["a", "e", "i", "o", "u", "t", "k", "s", "m", "n"];
    let reference: Vec<TimedPhone> = (0..100)
        .map(|i| TimedPhone::new(labels[i % 10], i as f64 * 0.05, (i + 1) as f64 * 0.05))
        .collect();
    let mut hyp = Vec::new();
    for (i, p) in reference.iter().enumerate() {
        match i {
            10 | 30 => hyp.push(TimedPhone::new("x", p.start, p.end)),
            50 => {}
            70 => {
                hyp.push(p.clone());
                hyp.push(TimedPhone::new("y", p.end, p.end));
            }
            20 | 40 | 60 => hyp.push(TimedPhone::new(p.label.clone(), p.start + 0.15, p.end + 0.15)),
            _ => hyp.push(p.clone()),
        }
    }
    (reference, hyp)
}
