//! Phone inventory with one-character internal codes.
//!
//! Every phone is identified by a single `char`. Czech letters are used where
//! they name the phone directly (`a`, `á`, `č`, `ď` ...); the remaining phones
//! get assigned substitutes (`x` for ch, `O` for the ou diphthong, `?` for the
//! glottal stop, `_` for silence and so on). The table is loaded from a small
//! tab-separated file so that transcription conventions can be changed without
//! touching code. Row order fixes the acoustic-model output index of a phone.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// The default Czech inventory shipped with the crate.
pub const CZECH_INVENTORY: &str = include_str!("../data/czech_phones.tsv");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhoneError {
    #[error("unknown phone code {code:?} at position {position}")]
    UnknownCode { code: char, position: usize },
    #[error("inventory line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid inventory: {0}")]
    Invalid(String),
    #[error("cannot read inventory file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhoneClass {
    Vowel,
    Diphthong,
    Obstruent,
    Sonorant,
    GlottalStop,
    Silence,
}

impl PhoneClass {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "vowel" => Self::Vowel,
            "diphthong" => Self::Diphthong,
            "obstruent" => Self::Obstruent,
            "sonorant" => Self::Sonorant,
            "glottal-stop" => Self::GlottalStop,
            "silence" => Self::Silence,
            _ => return None,
        })
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Vowel => "vowel",
            Self::Diphthong => "diphthong",
            Self::Obstruent => "obstruent",
            Self::Sonorant => "sonorant",
            Self::GlottalStop => "glottal-stop",
            Self::Silence => "silence",
        }
    }

    /// Vowels and diphthongs.
    pub fn is_syllabic(self) -> bool {
        matches!(self, Self::Vowel | Self::Diphthong)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Voicing {
    Voiced,
    Voiceless,
    NotApplicable,
}

impl Voicing {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "voiced" => Self::Voiced,
            "voiceless" => Self::Voiceless,
            "-" | "n/a" => Self::NotApplicable,
            _ => return None,
        })
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Voiced => "voiced",
            Self::Voiceless => "voiceless",
            Self::NotApplicable => "-",
        }
    }
}

/// Place-of-articulation flags consulted by the assimilation transducers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PlaceFlags(u8);

impl PlaceFlags {
    pub const PALATAL_CANDIDATE: Self = Self(1);
    pub const PALATAL: Self = Self(2);
    pub const VELAR_TRIGGER: Self = Self(4);
    pub const NASAL: Self = Self(8);

    const NAMES: [(&'static str, PlaceFlags); 4] = [
        ("palatal-candidate", Self::PALATAL_CANDIDATE),
        ("palatal", Self::PALATAL),
        ("velar-trigger", Self::VELAR_TRIGGER),
        ("nasal", Self::NASAL),
    ];

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    fn parse(s: &str) -> Option<Self> {
        if s == "-" {
            return Some(Self::default());
        }
        let mut bits = 0;
        for name in s.split(',') {
            let (_, flag) = Self::NAMES.iter().find(|(n, _)| *n == name.trim())?;
            bits |= flag.0;
        }
        Some(Self(bits))
    }

    fn render(self) -> String {
        let names: Vec<&str> = Self::NAMES
            .iter()
            .filter(|(_, f)| self.contains(*f))
            .map(|(n, _)| *n)
            .collect();
        if names.is_empty() {
            "-".to_string()
        } else {
            names.join(",")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phone {
    pub code: char,
    pub sampa: String,
    pub ipa: String,
    pub klass: PhoneClass,
    pub voicing: Voicing,
    pub voicing_partner: Option<char>,
    pub flags: PlaceFlags,
}

/// Ordered phone table. Immutable once built.
#[derive(Debug, Clone)]
pub struct PhoneInventory {
    phones: Vec<Phone>,
    index: HashMap<char, usize>,
    by_sampa: HashMap<String, usize>,
    silence: usize,
    glottal_stop: usize,
}

impl PhoneInventory {
    /// The built-in 44-phone Czech inventory.
    pub fn czech() -> Self {
        Self::parse(CZECH_INVENTORY).expect("built-in inventory is valid")
    }

    pub fn load(path: &Path) -> Result<Self, PhoneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PhoneError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, PhoneError> {
        let mut phones = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| PhoneError::Parse {
                line: lineno + 1,
                message: message.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(err(&format!("expected 7 tab-separated columns, got {}", cols.len())));
            }
            let mut chars = cols[0].chars();
            let code = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(err("code must be exactly one character")),
            };
            let klass = PhoneClass::parse(cols[3]).ok_or_else(|| err("unknown phone class"))?;
            let voicing = Voicing::parse(cols[4]).ok_or_else(|| err("unknown voicing"))?;
            let voicing_partner = match cols[5] {
                "-" => None,
                p => {
                    let mut pc = p.chars();
                    match (pc.next(), pc.next()) {
                        (Some(c), None) => Some(c),
                        _ => return Err(err("partner must be one character or '-'")),
                    }
                }
            };
            let flags = PlaceFlags::parse(cols[6]).ok_or_else(|| err("unknown place flag"))?;
            phones.push(Phone {
                code,
                sampa: cols[1].to_string(),
                ipa: cols[2].to_string(),
                klass,
                voicing,
                voicing_partner,
                flags,
            });
        }
        Self::from_phones(phones)
    }

    pub fn from_phones(phones: Vec<Phone>) -> Result<Self, PhoneError> {
        let mut index = HashMap::new();
        let mut by_sampa = HashMap::new();
        let mut by_ipa = HashMap::new();
        for (i, p) in phones.iter().enumerate() {
            if index.insert(p.code, i).is_some() {
                return Err(PhoneError::Invalid(format!("duplicate code {:?}", p.code)));
            }
            if p.sampa.is_empty() || by_sampa.insert(p.sampa.clone(), i).is_some() {
                return Err(PhoneError::Invalid(format!("empty or duplicate SAMPA {:?}", p.sampa)));
            }
            if p.ipa.is_empty() || by_ipa.insert(p.ipa.clone(), i).is_some() {
                return Err(PhoneError::Invalid(format!("empty or duplicate IPA {:?}", p.ipa)));
            }
        }
        for p in &phones {
            if let Some(q) = p.voicing_partner {
                let partner = index
                    .get(&q)
                    .map(|&i| &phones[i])
                    .ok_or_else(|| PhoneError::Invalid(format!("{:?}: unknown partner {q:?}", p.code)))?;
                let symmetric = partner.voicing_partner == Some(p.code);
                let same_but_voicing = partner.klass == p.klass
                    && partner.flags == p.flags
                    && partner.voicing != p.voicing
                    && p.voicing != Voicing::NotApplicable
                    && partner.voicing != Voicing::NotApplicable;
                if !symmetric || !same_but_voicing {
                    return Err(PhoneError::Invalid(format!(
                        "voicing pair {:?}/{:?} must be symmetric and differ only in voicing",
                        p.code, q
                    )));
                }
            }
        }
        let single = |klass: PhoneClass| -> Result<usize, PhoneError> {
            let found: Vec<usize> = phones
                .iter()
                .enumerate()
                .filter(|(_, p)| p.klass == klass)
                .map(|(i, _)| i)
                .collect();
            match found.as_slice() {
                [i] => Ok(*i),
                _ => Err(PhoneError::Invalid(format!(
                    "exactly one {} phone required, found {}",
                    klass.as_str(),
                    found.len()
                ))),
            }
        };
        let silence = single(PhoneClass::Silence)?;
        let glottal_stop = single(PhoneClass::GlottalStop)?;
        Ok(Self {
            phones,
            index,
            by_sampa,
            silence,
            glottal_stop,
        })
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn phones(&self) -> &[Phone] {
        &self.phones
    }

    pub fn position(&self, code: char) -> Option<usize> {
        self.index.get(&code).copied()
    }

    pub fn get(&self, code: char) -> Option<&Phone> {
        self.position(code).map(|i| &self.phones[i])
    }

    pub fn contains(&self, code: char) -> bool {
        self.index.contains_key(&code)
    }

    pub fn by_index(&self, i: usize) -> &Phone {
        &self.phones[i]
    }

    pub fn silence(&self) -> char {
        self.phones[self.silence].code
    }

    pub fn silence_index(&self) -> usize {
        self.silence
    }

    pub fn glottal_stop(&self) -> char {
        self.phones[self.glottal_stop].code
    }

    /// Reverse SAMPA lookup, used when reading reference TextGrids.
    pub fn from_sampa(&self, sampa: &str) -> Option<char> {
        self.by_sampa.get(sampa).map(|&i| self.phones[i].code)
    }

    fn lookup(&self, code: char, position: usize) -> Result<&Phone, PhoneError> {
        self.get(code).ok_or(PhoneError::UnknownCode { code, position })
    }

    /// Concatenated SAMPA rendering of a code sequence.
    pub fn to_sampa(&self, seq: &str) -> Result<String, PhoneError> {
        seq.chars()
            .enumerate()
            .map(|(i, c)| self.lookup(c, i).map(|p| p.sampa.as_str()))
            .collect()
    }

    /// SAMPA tokens, one per phone.
    pub fn sampa_tokens(&self, seq: &str) -> Result<Vec<&str>, PhoneError> {
        seq.chars()
            .enumerate()
            .map(|(i, c)| self.lookup(c, i).map(|p| p.sampa.as_str()))
            .collect()
    }

    pub fn to_ipa(&self, seq: &str) -> Result<String, PhoneError> {
        seq.chars()
            .enumerate()
            .map(|(i, c)| self.lookup(c, i).map(|p| p.ipa.as_str()))
            .collect()
    }

    pub fn voicing_partner(&self, code: char) -> Result<Option<char>, PhoneError> {
        self.lookup(code, 0).map(|p| p.voicing_partner)
    }

    /// Checks that every character of `seq` is a known code.
    pub fn validate(&self, seq: &str) -> Result<(), PhoneError> {
        for (i, c) in seq.chars().enumerate() {
            self.lookup(c, i)?;
        }
        Ok(())
    }

    /// Canonical text form; `parse(render())` reproduces the inventory.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.phones {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                p.code,
                p.sampa,
                p.ipa,
                p.klass.as_str(),
                p.voicing.as_str(),
                p.voicing_partner.map(String::from).unwrap_or_else(|| "-".into()),
                p.flags.render()
            ));
        }
        out
    }

    /// SHA-256 of the canonical rendering. Stored in model files so a model is
    /// never decoded against a different phone indexing.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.render().as_bytes());
        hasher.finalize().into()
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ipa)
    }
}
