//! Czech pronunciation generation.
//!
//! Words go through three stages:
//!
//! 1. [`apply_exceptions`] rewrites foreign spellings into Czech-like ones.
//! 2. [`G2p::base_transcribe`] maps letters to phone codes with a handful of
//!    orthographic context rules (digraphs, ě, di/ti/ni, ř after voiceless
//!    consonants).
//! 3. A chain of small [`BackwardFst`]s walks the whole utterance from right
//!    to left. Right-context phenomena (regressive voicing, place
//!    assimilation, velar nasals, glottal onsets) become plain state
//!    propagation. A transducer may emit several outputs for one input;
//!    these end up as alternatives in the [`PronSausage`] and the acoustic
//!    model picks one during alignment.
//!
//! Word boundaries are optional pauses, so the transducers see each boundary
//! both as a pause and as fluent continuation. Alternatives of one word are
//! exact; dependencies across word boundaries are relaxed to the union over
//! all neighbouring choices so that the sausage has no hidden cross-slot
//! constraints.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::phoneset::{PhoneClass, PhoneError, PhoneInventory, PlaceFlags, Voicing};
use crate::textnorm::{apply_exceptions, CleanText, ExceptionRuleSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum G2pError {
    #[error("cannot transcribe character {ch:?} in word {word:?}")]
    Unmappable { ch: char, word: String },
    #[error(transparent)]
    Phone(#[from] PhoneError),
    #[error("inventory lacks phone {0:?} required by the Czech rules")]
    MissingPhone(char),
}

/// Codes the Czech rule blocks refer to directly.
mod code {
    pub const SILENCE: char = '_';
    pub const N: char = 'n';
    pub const ENG: char = 'N';
    pub const J: char = 'j';
    pub const E: char = 'e';
    pub const M: char = 'm';
    pub const NJ: char = 'ň';
    pub const I_SHORT: char = 'i';
    pub const I_LONG: char = 'í';
    pub const V: char = 'v';
    pub const RZ: char = 'ř';
    pub const RZ_VOICELESS: char = 'Ř';
    pub const OU: char = 'O';
    pub const AU: char = 'A';
    pub const EU: char = 'E';
    pub const DZH: char = 'Ž';
    pub const X: char = 'x';
}

/// Dental stop or nasal and its palatal counterpart.
const PALATAL_PAIRS: [(char, char); 3] = [('d', 'ď'), ('t', 'ť'), ('n', 'ň')];

fn palatalize(c: char) -> Option<char> {
    PALATAL_PAIRS.iter().find(|(d, _)| *d == c).map(|(_, p)| *p)
}

/// Input symbol of a backward transducer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Phone(char),
    /// Between two words: either a pause or fluent continuation.
    WordBoundary,
    /// Start or end of the utterance (always a pause).
    UtteranceEdge,
}

pub type FstState = u8;

/// A finite-state transducer applied right to left.
///
/// The transition table is built once from the phone inventory and covers
/// every (state, symbol) pair.
#[derive(Debug, Clone)]
pub struct BackwardFst {
    name: &'static str,
    state_names: &'static [&'static str],
    initial: FstState,
    table: HashMap<(FstState, Symbol), Vec<(FstState, String)>>,
}

impl BackwardFst {
    fn build<F>(
        name: &'static str,
        state_names: &'static [&'static str],
        initial: FstState,
        inv: &PhoneInventory,
        rule: F,
    ) -> Self
    where
        F: Fn(FstState, Symbol) -> Vec<(FstState, String)>,
    {
        let mut symbols: Vec<Symbol> = inv.phones().iter().map(|p| Symbol::Phone(p.code)).collect();
        symbols.push(Symbol::WordBoundary);
        symbols.push(Symbol::UtteranceEdge);
        let mut table = HashMap::new();
        for s in 0..state_names.len() as FstState {
            for &sym in &symbols {
                let mut arcs: Vec<(FstState, String)> = Vec::new();
                for arc in rule(s, sym) {
                    if !arcs.contains(&arc) {
                        arcs.push(arc);
                    }
                }
                debug_assert!(!arcs.is_empty(), "{name}: no arc for {s} {sym:?}");
                table.insert((s, sym), arcs);
            }
        }
        Self {
            name,
            state_names,
            initial,
            table,
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn states(&self) -> &'static [&'static str] {
        self.state_names
    }

    pub fn initial(&self) -> FstState {
        self.initial
    }

    /// Arcs leaving `state` on `sym`, in preference order.
    pub fn step(&self, state: FstState, sym: Symbol) -> &[(FstState, String)] {
        self.table.get(&(state, sym)).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// One word alternative, kept as the output string of each input position of
/// the base transcription. The positional view lets the final factoring find
/// independent sub-spans.
type Positional = Vec<String>;

/// Alternatives grouped by spelling variant.
type WordForms = Vec<Vec<Positional>>;

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotOrigin {
    Word(usize),
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    /// Phone-code strings; the first one is canonical.
    pub alternatives: Vec<String>,
    pub origin: SlotOrigin,
}

/// Linear lattice of pronunciation alternatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PronSausage {
    pub slots: Vec<Slot>,
    pub words: Vec<String>,
}

impl PronSausage {
    /// Builds a sausage from per-word phone strings with no variants, using
    /// `silence` for the optional boundary slots.
    pub fn from_words(words: &[(&str, &str)], silence: char) -> Self {
        let mut slots = vec![Slot::boundary(silence)];
        for (i, (_, phones)) in words.iter().enumerate() {
            slots.push(Slot {
                alternatives: vec![phones.to_string()],
                origin: SlotOrigin::Word(i),
            });
            slots.push(Slot::boundary(silence));
        }
        Self {
            slots,
            words: words.iter().map(|(w, _)| w.to_string()).collect(),
        }
    }

    /// First alternative of every slot, concatenated.
    pub fn canonical(&self) -> String {
        self.slots.iter().map(|s| s.alternatives[0].as_str()).collect()
    }

    pub fn path_count(&self) -> u128 {
        self.slots.iter().map(|s| s.alternatives.len() as u128).product()
    }

    pub fn word_slots(&self, word: usize) -> impl Iterator<Item = &Slot> {
        self.slots.iter().filter(move |s| s.origin == SlotOrigin::Word(word))
    }

    /// All full pronunciations of one word (product over its slots).
    pub fn word_variants(&self, word: usize) -> Vec<String> {
        let mut out = vec![String::new()];
        for slot in self.word_slots(word) {
            out = out
                .iter()
                .flat_map(|p| slot.alternatives.iter().map(move |a| format!("{p}{a}")))
                .collect();
        }
        out
    }

    /// One slot per line, alternatives tab-separated, `∅` for empty.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for slot in &self.slots {
            let alts: Vec<&str> = slot
                .alternatives
                .iter()
                .map(|a| if a.is_empty() { "∅" } else { a.as_str() })
                .collect();
            out.push_str(&alts.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Terminal rendering: boundary options in brackets, then one line per
    /// word with its variants separated by `/`.
    pub fn render(&self, inv: &PhoneInventory, sampa: bool) -> Result<String, PhoneError> {
        let show = |s: &str| -> Result<String, PhoneError> {
            if s.is_empty() {
                Ok("∅".to_string())
            } else if sampa {
                inv.to_sampa(s)
            } else {
                inv.to_ipa(s)
            }
        };
        let mut out = String::new();
        if self.words.is_empty() {
            return Ok(out);
        }
        let mut seen_word = None;
        for slot in &self.slots {
            match slot.origin {
                SlotOrigin::Boundary => {
                    let alts = slot.alternatives.iter().map(|a| show(a)).collect::<Result<Vec<_>, _>>()?;
                    let _ = writeln!(out, "[{}]", alts.join("/"));
                }
                SlotOrigin::Word(w) if seen_word != Some(w) => {
                    seen_word = Some(w);
                    let vars = self
                        .word_variants(w)
                        .iter()
                        .map(|v| show(v))
                        .collect::<Result<Vec<_>, _>>()?;
                    let _ = writeln!(out, "{}\t{}", self.words[w], vars.join("/"));
                }
                SlotOrigin::Word(_) => {}
            }
        }
        Ok(out)
    }
}

impl Slot {
    pub fn boundary(silence: char) -> Self {
        Self {
            alternatives: vec![String::new(), silence.to_string()],
            origin: SlotOrigin::Boundary,
        }
    }
}

/// The Czech pronunciation generator.
#[derive(Debug, Clone)]
pub struct G2p {
    inventory: PhoneInventory,
    fsts: Vec<BackwardFst>,
}

impl G2p {
    pub fn new(inventory: PhoneInventory) -> Result<Self, G2pError> {
        for c in [
            code::SILENCE,
            code::N,
            code::ENG,
            code::J,
            code::E,
            code::M,
            code::NJ,
            code::I_SHORT,
            code::I_LONG,
            code::V,
            code::RZ,
            code::RZ_VOICELESS,
            code::OU,
            code::AU,
            code::EU,
            code::DZH,
            code::X,
        ] {
            if !inventory.contains(c) {
                return Err(G2pError::MissingPhone(c));
            }
        }
        let fsts = vec![
            labial_e_fst(&inventory),
            voicing_fst(&inventory),
            dental_palatal_fst(&inventory),
            velar_fst(&inventory),
            onset_fst(&inventory),
        ];
        Ok(Self { inventory, fsts })
    }

    pub fn czech() -> Self {
        Self::new(PhoneInventory::czech()).expect("built-in inventory satisfies the rules")
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    /// Transducers in application order.
    pub fn fsts(&self) -> &[BackwardFst] {
        &self.fsts
    }

    /// Letter-to-phone mapping of one cleaned, lowercase word.
    pub fn base_transcribe(&self, word: &str) -> Result<String, G2pError> {
        let letters: Vec<char> = word.chars().collect();
        let unmappable = |ch: char| G2pError::Unmappable {
            ch,
            word: word.to_string(),
        };
        // Hiatus after these prefixes: ne-umí, na-učit, za-ujmout.
        let prefix_hiatus = |i: usize| {
            i == 1 && letters.get(2) == Some(&'u') && matches!(&letters[..2], ['n', 'e'] | ['n', 'a'] | ['z', 'a'])
        };
        let mut out: Vec<char> = Vec::with_capacity(letters.len());
        let mut i = 0;
        while i < letters.len() {
            let c = letters[i];
            let next = letters.get(i + 1).copied();
            let prev_letter = if i > 0 { Some(letters[i - 1]) } else { None };
            match (c, next) {
                ('c', Some('h')) => {
                    out.push(code::X);
                    i += 1;
                }
                ('d', Some('ž')) => {
                    out.push(code::DZH);
                    i += 1;
                }
                ('o', Some('u')) => {
                    out.push(code::OU);
                    i += 1;
                }
                ('a', Some('u')) if !prefix_hiatus(i) => {
                    out.push(code::AU);
                    i += 1;
                }
                ('e', Some('u')) if !prefix_hiatus(i) => {
                    out.push(code::EU);
                    i += 1;
                }
                ('ě', _) => match prev_letter {
                    Some('b' | 'p' | 'v' | 'f' | 'm') => {
                        out.push(code::J);
                        out.push(code::E);
                    }
                    Some('d' | 't' | 'n') => {
                        let last = out.last_mut().expect("previous letter was transcribed");
                        if let Some(p) = palatalize(*last) {
                            *last = p;
                        }
                        out.push(code::E);
                    }
                    _ => out.push(code::E),
                },
                ('i' | 'í', _) => {
                    if let Some(last) = out.last_mut() {
                        if let Some(p) = palatalize(*last) {
                            *last = p;
                        }
                    }
                    out.push(c);
                }
                ('y', _) => out.push(code::I_SHORT),
                ('ý', _) => out.push(code::I_LONG),
                ('ů', _) => out.push('ú'),
                ('x', _) => out.extend(['k', 's']),
                ('q', _) => out.extend(['k', 'v']),
                ('w', _) => out.push(code::V),
                ('ř', _) => {
                    let after_voiceless = out
                        .last()
                        .and_then(|&p| self.inventory.get(p))
                        .is_some_and(|p| p.klass == PhoneClass::Obstruent && p.voicing == Voicing::Voiceless);
                    out.push(if after_voiceless { code::RZ_VOICELESS } else { code::RZ });
                }
                _ => {
                    const PLAIN: &str = "aábcčdďeéfghijklmnňoóprsštťuúvzž";
                    if !PLAIN.contains(c) {
                        return Err(unmappable(c));
                    }
                    out.push(c);
                }
            }
            i += 1;
        }
        let phones: String = out.into_iter().collect();
        self.inventory.validate(&phones)?;
        Ok(phones)
    }

    /// Runs the transducer chain over per-word phone strings (one entry per
    /// spelling variant) and factors the result into a sausage.
    pub fn apply_backward_fsts(&self, words: &[String], spellings: &[Vec<String>]) -> Result<PronSausage, G2pError> {
        for variants in spellings {
            for v in variants {
                self.inventory.validate(v)?;
            }
        }
        let mut forms: Vec<WordForms> = spellings
            .iter()
            .map(|variants| {
                variants
                    .iter()
                    .map(|v| vec![v.chars().map(String::from).collect::<Positional>()])
                    .collect()
            })
            .collect();
        for fst in &self.fsts {
            forms = run_fst(fst, &forms);
        }
        let silence = self.inventory.silence();
        let mut slots = vec![Slot::boundary(silence)];
        for (w, word_forms) in forms.iter().enumerate() {
            for alternatives in factor_word(word_forms) {
                slots.push(Slot {
                    alternatives,
                    origin: SlotOrigin::Word(w),
                });
            }
            slots.push(Slot::boundary(silence));
        }
        Ok(PronSausage {
            slots,
            words: words.to_vec(),
        })
    }

    /// Full pipeline: exceptions, base transcription, transducers.
    pub fn pron_generate(&self, text: &CleanText, rules: &ExceptionRuleSet) -> Result<PronSausage, G2pError> {
        let mut spellings = Vec::with_capacity(text.words.len());
        for word in &text.words {
            let mut phones = Vec::new();
            for spelling in apply_exceptions(word, rules) {
                push_unique(&mut phones, self.base_transcribe(&spelling)?);
            }
            spellings.push(phones);
        }
        self.apply_backward_fsts(&text.words, &spellings)
    }
}

/// One transducer over the whole utterance, right to left.
fn run_fst(fst: &BackwardFst, words: &[WordForms]) -> Vec<WordForms> {
    let mut entry: Vec<FstState> = Vec::new();
    for (s, _) in fst.step(fst.initial(), Symbol::UtteranceEdge) {
        push_unique(&mut entry, *s);
    }
    let mut out: Vec<WordForms> = vec![Vec::new(); words.len()];
    for w in (0..words.len()).rev() {
        let left = if w == 0 { Symbol::UtteranceEdge } else { Symbol::WordBoundary };
        let mut exits: Vec<FstState> = Vec::new();
        for spelling in &words[w] {
            let mut produced: Vec<Positional> = Vec::new();
            for alt in spelling {
                let flat: Vec<(usize, char)> = alt
                    .iter()
                    .enumerate()
                    .flat_map(|(pos, s)| s.chars().map(move |c| (pos, c)))
                    .collect();
                for &start in &entry {
                    let mut partial: Vec<(Positional, FstState)> = vec![(vec![String::new(); alt.len()], start)];
                    for &(pos, c) in flat.iter().rev() {
                        let mut next = Vec::new();
                        for (acc, st) in &partial {
                            for (ns, emitted) in fst.step(*st, Symbol::Phone(c)) {
                                let mut acc = acc.clone();
                                acc[pos].insert_str(0, emitted);
                                push_unique(&mut next, (acc, *ns));
                            }
                        }
                        partial = next;
                    }
                    for (acc, st) in partial {
                        for (ns, emitted) in fst.step(st, left) {
                            let mut acc = acc.clone();
                            if let Some(first) = acc.first_mut() {
                                first.insert_str(0, emitted);
                            }
                            push_unique(&mut produced, acc);
                            push_unique(&mut exits, *ns);
                        }
                    }
                }
            }
            out[w].push(produced);
        }
        entry = exits;
    }
    out
}

/// Splits a word's alternatives into the finest sequence of independent
/// slots. A cut between positions is valid when the alternative set equals
/// the product of its left and right projections; valid cuts combine freely.
fn factor_word(forms: &WordForms) -> Vec<Vec<String>> {
    if forms.len() != 1 {
        let mut all = Vec::new();
        for spelling in forms {
            for alt in spelling {
                push_unique(&mut all, alt.concat());
            }
        }
        return vec![all];
    }
    let alts = &forms[0];
    let width = alts[0].len();
    let project = |lo: usize, hi: usize| -> Vec<&[String]> {
        let mut v: Vec<&[String]> = Vec::new();
        for a in alts {
            push_unique(&mut v, &a[lo..hi]);
        }
        v
    };
    let mut cuts = vec![0];
    for k in 1..width {
        if project(0, k).len() * project(k, width).len() == alts.len() {
            cuts.push(k);
        }
    }
    cuts.push(width);
    let mut slots: Vec<Vec<String>> = Vec::new();
    for win in cuts.windows(2) {
        let mut strings: Vec<String> = Vec::new();
        for part in project(win[0], win[1]) {
            push_unique(&mut strings, part.concat());
        }
        if strings.iter().all(|s| s.is_empty()) {
            continue;
        }
        // Runs of fixed material form one slot.
        match slots.last_mut() {
            Some(prev) if prev.len() == 1 && strings.len() == 1 => prev[0].push_str(&strings[0]),
            _ => slots.push(strings),
        }
    }
    slots
}

// Transducer definitions. Each closure receives (state, symbol) and returns
// arcs in preference order: the unmodified form first.

fn identity(state: FstState, sym: Symbol) -> Vec<(FstState, String)> {
    match sym {
        Symbol::Phone(c) => vec![(state, c.to_string())],
        _ => vec![(state, String::new())],
    }
}

/// `je` after a labial stays `je` (bě, pě, vě, fě) except after m, where it
/// becomes `ňe` (mě). The `j` is held back one step until its left
/// neighbour is known.
fn labial_e_fst(inv: &PhoneInventory) -> BackwardFst {
    const PLAIN: FstState = 0;
    const SAW_E: FstState = 1;
    const HELD_J: FstState = 2;
    let inv2 = inv.clone();
    BackwardFst::build("labial-e", &["plain", "saw-e", "held-j"], PLAIN, inv, move |state, sym| {
        let after = |c: char| if c == code::E { SAW_E } else { PLAIN };
        match (state, sym) {
            (SAW_E, Symbol::Phone(code::J)) => vec![(HELD_J, String::new())],
            (HELD_J, Symbol::Phone(code::M)) => vec![(PLAIN, format!("{}{}", code::M, code::NJ))],
            (HELD_J, Symbol::Phone(c)) => vec![(after(c), format!("{c}{}", code::J))],
            (HELD_J, _) => vec![(PLAIN, code::J.to_string())],
            (_, Symbol::Phone(c)) => {
                debug_assert!(inv2.contains(c));
                vec![(after(c), c.to_string())]
            }
            _ => vec![(PLAIN, String::new())],
        }
    })
}

/// Regressive voicing assimilation. An obstruent cluster takes the voicing
/// of its rightmost obstruent; v, ř and voiceless ř adapt but do not spread
/// their own voicing. Word-final obstruents devoice before a pause; before a
/// vowel- or sonorant-initial word both voicings are offered.
fn voicing_fst(inv: &PhoneInventory) -> BackwardFst {
    const NEUTRAL: FstState = 0;
    const VOICED: FstState = 1;
    const VOICELESS: FstState = 2;
    const PAUSE: FstState = 3;
    const EITHER: FstState = 4;
    let inv = inv.clone();
    let inv_for_table = inv.clone();
    BackwardFst::build(
        "voicing",
        &["neutral", "voiced", "voiceless", "pause", "either"],
        NEUTRAL,
        &inv_for_table,
        move |state, sym| match sym {
            Symbol::UtteranceEdge => vec![(PAUSE, String::new())],
            Symbol::WordBoundary => {
                let fluent = match state {
                    NEUTRAL => EITHER,
                    s => s,
                };
                vec![(PAUSE, String::new()), (fluent, String::new())]
            }
            Symbol::Phone(c) => {
                let Some(p) = inv.get(c) else { return identity(NEUTRAL, sym) };
                if p.klass != PhoneClass::Obstruent {
                    return vec![(NEUTRAL, c.to_string())];
                }
                let trigger = !matches!(c, code::V | code::RZ | code::RZ_VOICELESS);
                let with_voicing = |v: Voicing| -> char {
                    if p.voicing == v {
                        c
                    } else {
                        p.voicing_partner.unwrap_or(c)
                    }
                };
                let by_voicing = |out: char| match inv.get(out).map(|q| q.voicing) {
                    Some(Voicing::Voiced) => VOICED,
                    Some(Voicing::Voiceless) => VOICELESS,
                    _ => NEUTRAL,
                };
                // A trigger imposes its own voicing on the left context. A
                // non-trigger leaves the left context alone when it surfaces
                // unchanged, and otherwise joins the cluster it adapted to.
                match state {
                    VOICED => {
                        let out = with_voicing(Voicing::Voiced);
                        vec![(if trigger { by_voicing(out) } else { VOICED }, out.to_string())]
                    }
                    VOICELESS | PAUSE => {
                        let out = with_voicing(Voicing::Voiceless);
                        let next = if trigger { by_voicing(out) } else { state };
                        vec![(next, out.to_string())]
                    }
                    EITHER => {
                        let other = p.voicing_partner.unwrap_or(c);
                        let keep = if trigger { by_voicing(c) } else { NEUTRAL };
                        vec![(keep, c.to_string()), (by_voicing(other), other.to_string())]
                    }
                    _ => vec![(if trigger { by_voicing(c) } else { NEUTRAL }, c.to_string())],
                }
            }
        },
    )
}

/// d/t/n before ď/ť/ň may take the palatal place; the change spreads left
/// through further dentals (ntní → ntňí, nťňí, ňťňí).
fn dental_palatal_fst(inv: &PhoneInventory) -> BackwardFst {
    const PLAIN: FstState = 0;
    const PALATAL_RIGHT: FstState = 1;
    let inv2 = inv.clone();
    BackwardFst::build("dental-palatal", &["plain", "palatal-right"], PLAIN, inv, move |state, sym| {
        let Symbol::Phone(c) = sym else { return vec![(PLAIN, String::new())] };
        let flags = inv2.get(c).map(|p| p.flags).unwrap_or_default();
        if flags.contains(PlaceFlags::PALATAL) {
            return vec![(PALATAL_RIGHT, c.to_string())];
        }
        if flags.contains(PlaceFlags::PALATAL_CANDIDATE) && state == PALATAL_RIGHT {
            if let Some(p) = palatalize(c).filter(|p| inv2.contains(*p)) {
                return vec![(PLAIN, c.to_string()), (PALATAL_RIGHT, p.to_string())];
            }
        }
        vec![(PLAIN, c.to_string())]
    })
}

/// n before k or g becomes ŋ.
fn velar_fst(inv: &PhoneInventory) -> BackwardFst {
    const PLAIN: FstState = 0;
    const VELAR_RIGHT: FstState = 1;
    let inv2 = inv.clone();
    BackwardFst::build("velar", &["plain", "velar-right"], PLAIN, inv, move |state, sym| {
        let Symbol::Phone(c) = sym else { return vec![(PLAIN, String::new())] };
        if inv2.get(c).is_some_and(|p| p.flags.contains(PlaceFlags::VELAR_TRIGGER)) {
            return vec![(VELAR_RIGHT, c.to_string())];
        }
        if c == code::N && state == VELAR_RIGHT {
            return vec![(PLAIN, code::ENG.to_string())];
        }
        vec![(PLAIN, c.to_string())]
    })
}

/// Optional glottal stop before a word-initial vowel and optional j between
/// i/í and a following vowel inside a word.
fn onset_fst(inv: &PhoneInventory) -> BackwardFst {
    const PLAIN: FstState = 0;
    const VOWEL_RIGHT: FstState = 1;
    let glottal = inv.glottal_stop().to_string();
    let inv2 = inv.clone();
    BackwardFst::build("onset", &["plain", "vowel-right"], PLAIN, inv, move |state, sym| match sym {
        Symbol::Phone(c) => {
            let syllabic = inv2.get(c).is_some_and(|p| p.klass.is_syllabic());
            if !syllabic {
                return vec![(PLAIN, c.to_string())];
            }
            if state == VOWEL_RIGHT && (c == code::I_SHORT || c == code::I_LONG) {
                vec![(VOWEL_RIGHT, c.to_string()), (VOWEL_RIGHT, format!("{c}{}", code::J))]
            } else {
                vec![(VOWEL_RIGHT, c.to_string())]
            }
        }
        _ if state == VOWEL_RIGHT => vec![(PLAIN, String::new()), (PLAIN, glottal.clone())],
        _ => vec![(PLAIN, String::new())],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::{clean_text, ExceptionRule};
    use proptest::prelude::*;

    fn g2p() -> G2p {
        G2p::czech()
    }

    fn sausage(text: &str) -> PronSausage {
        let g = g2p();
        g.pron_generate(&clean_text(text.as_bytes()).unwrap(), &ExceptionRuleSet::default())
            .unwrap()
    }

    fn ipa_variants(text: &str, word: usize) -> Vec<String> {
        let g = g2p();
        let s = sausage(text);
        s.word_variants(word).iter().map(|v| g.inventory().to_ipa(v).unwrap()).collect()
    }

    #[test]
    fn base_examples() {
        let g = g2p();
        assert_eq!(g.base_transcribe("vošingtnu").unwrap(), "vošingtnu");
        assert_eq!(g.base_transcribe("chata").unwrap(), "xata");
        assert_eq!(g.base_transcribe("dítě").unwrap(), "ďíťe");
        assert_eq!(g.base_transcribe("oběd").unwrap(), "objed");
        assert_eq!(g.base_transcribe("město").unwrap(), "mjesto");
        assert_eq!(g.base_transcribe("dům").unwrap(), "dúm");
        assert_eq!(g.base_transcribe("taxi").unwrap(), "taksi");
        assert_eq!(g.base_transcribe("džus").unwrap(), "Žus");
        assert_eq!(g.base_transcribe("auto").unwrap(), "Ato");
        assert_eq!(g.base_transcribe("neumí").unwrap(), "neumí");
        assert_eq!(g.base_transcribe("tři").unwrap(), "tŘi");
        assert_eq!(g.base_transcribe("dřevo").unwrap(), "dřevo");
        assert_eq!(g.base_transcribe("ty").unwrap(), "ti");
        assert_eq!(
            g.base_transcribe("grüß").unwrap_err(),
            G2pError::Unmappable {
                ch: 'ü',
                word: "grüß".into()
            }
        );
    }

    #[test]
    fn worked_example_washingtonu() {
        let g = g2p();
        let rules = ExceptionRuleSet::new(vec![ExceptionRule {
            pattern: "washington".into(),
            replacements: vec!["vošingtn".into()],
        }])
        .unwrap();
        let s = g.pron_generate(&clean_text(b"Washingtonu").unwrap(), &rules).unwrap();
        assert_eq!(s.word_variants(0), vec!["vošiNktnu"]);
        assert_eq!(g.inventory().to_ipa(&s.canonical()).unwrap(), "vošiŋktnu");
    }

    #[test]
    fn ntni_variants() {
        assert_eq!(
            ipa_variants("procentní", 0),
            vec!["prot͡sɛntɲiː", "prot͡sɛncɲiː", "prot͡sɛɲcɲiː"]
        );
        let s = sausage("procentní");
        let word: Vec<&Slot> = s.word_slots(0).collect();
        assert!(word.iter().any(|slot| slot.alternatives == vec!["nt", "nť", "ňť"]));
    }

    #[test]
    fn glottal_stop_variants() {
        let s = sausage("a");
        assert_eq!(s.word_slots(0).next().unwrap().alternatives, vec!["a", "?a"]);
        assert_eq!(ipa_variants("obě", 0), vec!["objɛ", "ʔobjɛ"]);
        assert_eq!(sausage("obě").canonical(), "obje");
    }

    #[test]
    fn labial_e() {
        assert_eq!(ipa_variants("město", 0), vec!["mɲɛsto"]);
        assert_eq!(ipa_variants("pět", 0), vec!["pjɛt"]);
        assert_eq!(ipa_variants("věc", 0), vec!["vjɛt͡s"]);
    }

    #[test]
    fn voicing_examples() {
        assert_eq!(ipa_variants("kde", 0), vec!["gdɛ"]);
        assert_eq!(ipa_variants("vždy", 0), vec!["vždi"]);
        assert_eq!(ipa_variants("vsadit", 0), vec!["fsaɟit"]);
        assert_eq!(ipa_variants("led", 0), vec!["lɛt"]);
        // Before a vowel-initial word both voicings are available.
        assert_eq!(ipa_variants("led a", 0), vec!["lɛt", "lɛd"]);
        // Before a voiced obstruent: pause (voiceless) or fluent (voiced).
        assert_eq!(ipa_variants("jak dobře", 0), vec!["jak", "jag"]);
    }

    #[test]
    fn empty_text_is_one_boundary() {
        let s = sausage("");
        assert_eq!(s.slots.len(), 1);
        assert_eq!(s.slots[0].alternatives, vec!["", "_"]);
        assert_eq!(s.slots[0].origin, SlotOrigin::Boundary);
    }

    #[test]
    fn intervocalic_j() {
        assert_eq!(ipa_variants("marie", 0), vec!["mariɛ", "marijɛ"]);
    }

    #[test]
    fn fst_steps_are_total() {
        let g = g2p();
        let inv = g.inventory();
        for fst in g.fsts() {
            for s in 0..fst.states().len() as FstState {
                for p in inv.phones() {
                    assert!(!fst.step(s, Symbol::Phone(p.code)).is_empty(), "{} {s} {}", fst.name(), p.code);
                }
                assert!(!fst.step(s, Symbol::WordBoundary).is_empty());
                assert!(!fst.step(s, Symbol::UtteranceEdge).is_empty());
            }
        }
    }

    #[test]
    fn dump_and_render() {
        let g = g2p();
        let s = sausage("obě");
        assert_eq!(s.dump(), "∅\t_\no\t?o\nbje\n∅\t_\n");
        let r = s.render(g.inventory(), false).unwrap();
        assert_eq!(r, "[∅/‖]\nobě\tobjɛ/ʔobjɛ\n[∅/‖]\n");
        assert_eq!(sausage("").render(g.inventory(), false).unwrap(), "");
    }

    /// Reference runner: the reversed input processed left to right, each
    /// emitted piece reversed and the final string reversed back.
    fn forward_on_reversed(fst: &BackwardFst, syms: &[Symbol]) -> Vec<String> {
        let mut partial: Vec<(String, FstState)> = vec![(String::new(), fst.initial())];
        for sym in syms.iter().rev() {
            let mut next = Vec::new();
            for (acc, st) in &partial {
                for (ns, out) in fst.step(*st, *sym) {
                    let piece: String = out.chars().rev().collect();
                    push_unique(&mut next, (format!("{acc}{piece}"), *ns));
                }
            }
            partial = next;
        }
        let mut out = Vec::new();
        for (s, _) in partial {
            push_unique(&mut out, s.chars().rev().collect::<String>());
        }
        out
    }

    fn word_strategy() -> impl Strategy<Value = String> {
        let letters: Vec<char> = "aábcčdďeéěfghchiíjklmnňoóprřsštťuúůvyýzž".chars().collect();
        proptest::collection::vec(prop::sample::select(letters), 1..9).prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn backward_equals_reversed_forward(word in word_strategy()) {
            let g = g2p();
            let phones = g.base_transcribe(&word).unwrap();
            for fst in g.fsts() {
                let forms = vec![vec![vec![phones.chars().map(String::from).collect::<Positional>()]]];
                let mut ours: Vec<String> = run_fst(fst, &forms)[0][0].iter().map(|p| p.concat()).collect();
                let mut syms = vec![Symbol::UtteranceEdge];
                syms.extend(phones.chars().map(Symbol::Phone));
                syms.push(Symbol::UtteranceEdge);
                let mut reference = forward_on_reversed(fst, &syms);
                ours.sort();
                reference.sort();
                prop_assert_eq!(ours, reference);
            }
        }

        #[test]
        fn sausage_invariants(words in proptest::collection::vec(word_strategy(), 0..4)) {
            let g = g2p();
            let inv = g.inventory();
            let text = words.join(" ");
            let s = sausage(&text);
            let again = sausage(&text);
            prop_assert_eq!(&s, &again);
            let product: u128 = s.slots.iter().map(|x| x.alternatives.len() as u128).product();
            prop_assert_eq!(s.path_count(), product);
            for slot in &s.slots {
                prop_assert!(!slot.alternatives.is_empty());
                let mut uniq = slot.alternatives.clone();
                uniq.sort();
                uniq.dedup();
                prop_assert_eq!(uniq.len(), slot.alternatives.len());
                for a in &slot.alternatives {
                    prop_assert!(inv.validate(a).is_ok());
                }
            }
            let glottal = inv.glottal_stop();
            for w in 0..s.words.len() {
                for v in s.word_variants(w) {
                    let chars: Vec<char> = v.chars().collect();
                    for (i, &c) in chars.iter().enumerate() {
                        let next = chars.get(i + 1).copied();
                        // Velar nasal only before k/g; no n directly before k/g.
                        if c == 'N' { prop_assert!(matches!(next, Some('k' | 'g')), "{}", v); }
                        if c == 'n' { prop_assert!(!matches!(next, Some('k' | 'g')), "{}", v); }
                        // Glottal stop only word-initially before a vowel.
                        if c == glottal {
                            prop_assert_eq!(i, 0);
                            prop_assert!(next.and_then(|n| inv.get(n)).is_some_and(|p| p.klass.is_syllabic()));
                        }
                        // Obstruent clusters agree in voicing unless the right
                        // member is one of the non-triggering v, ř, Ř.
                        if let (Some(p), Some(q)) = (inv.get(c), next.and_then(|n| inv.get(n))) {
                            if p.klass == PhoneClass::Obstruent && q.klass == PhoneClass::Obstruent
                                && !matches!(q.code, 'v' | 'ř' | 'Ř') {
                                prop_assert_eq!(p.voicing, q.voicing, "{}", v);
                            }
                        }
                    }
                    if v.starts_with(glottal) {
                        let plain: String = v.chars().skip(1).collect();
                        prop_assert!(s.word_variants(w).contains(&plain));
                    }
                }
            }
        }
    }
}
