//! Praat TextGrid files with interval tiers.
//!
//! Output is the full ("long") text format in UTF-8 without a BOM. Input may
//! be the full or short text format, in UTF-8 (with or without BOM) or
//! UTF-16 (either byte order), with any line endings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::decoder::{frames_to_seconds, Alignment};
use crate::eval::TimedPhone;
use crate::phoneset::PhoneInventory;

#[derive(Debug, Error, PartialEq)]
pub enum TextGridError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
    #[error("invalid TextGrid: {0}")]
    Invalid(String),
    #[error("cannot decode TextGrid text: {0}")]
    Encoding(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub xmin: f64,
    pub xmax: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tier {
    pub name: String,
    pub xmin: f64,
    pub xmax: f64,
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextGrid {
    pub xmin: f64,
    pub xmax: f64,
    pub tiers: Vec<Tier>,
}

/// Allowed disagreement between touching interval bounds.
const BOUND_EPS: f64 = 1e-9;

pub const WORD_TIER: &str = "word";
pub const PHONE_TIER: &str = "phone";

/// Builds a tier from labeled spans in frames, filling gaps with empty labels
/// and stretching the last interval to `end`.
fn tier_from_spans(name: &str, spans: &[(usize, usize, String)], frames: usize, end: f64) -> Tier {
    let mut intervals = Vec::new();
    let mut at = 0usize;
    for (s, e, text) in spans {
        if *s > at {
            intervals.push(Interval {
                xmin: frames_to_seconds(at),
                xmax: frames_to_seconds(*s),
                text: String::new(),
            });
        }
        intervals.push(Interval {
            xmin: frames_to_seconds(*s),
            xmax: frames_to_seconds(*e),
            text: text.clone(),
        });
        at = *e;
    }
    if at < frames || intervals.is_empty() {
        intervals.push(Interval {
            xmin: frames_to_seconds(at),
            xmax: end,
            text: String::new(),
        });
    }
    let last = intervals.last_mut().unwrap();
    last.xmax = end;
    Tier {
        name: name.to_string(),
        xmin: 0.0,
        xmax: end,
        intervals,
    }
}

impl TextGrid {
    /// Word and phone tiers for an alignment. Phone labels are SAMPA and
    /// silence is the empty label. The grid ends at `duration` seconds when
    /// that is later than the last frame.
    pub fn from_alignment(a: &Alignment, inv: &PhoneInventory, duration: Option<f64>) -> Result<Self, TextGridError> {
        a.validate().map_err(TextGridError::Invalid)?;
        let end = duration.unwrap_or(0.0).max(frames_to_seconds(a.num_frames));
        if end <= 0.0 {
            return Err(TextGridError::Invalid("zero-length grid".into()));
        }
        let mut phones = Vec::with_capacity(a.phones.len());
        for iv in &a.phones {
            let label = if iv.phone == inv.silence() {
                String::new()
            } else {
                inv.get(iv.phone)
                    .ok_or_else(|| TextGridError::Invalid(format!("unknown phone code {:?}", iv.phone)))?
                    .sampa
                    .clone()
            };
            phones.push((iv.start, iv.end, label));
        }
        let mut words = Vec::with_capacity(a.words.len());
        let mut at = 0;
        for w in &a.words {
            if w.start < at || w.end <= w.start || w.end > a.num_frames {
                return Err(TextGridError::Invalid(format!("word span {:?} [{}, {}) does not fit", w.word, w.start, w.end)));
            }
            at = w.end;
            words.push((w.start, w.end, w.word.clone()));
        }
        let grid = TextGrid {
            xmin: 0.0,
            xmax: end,
            tiers: vec![
                tier_from_spans(WORD_TIER, &words, a.num_frames, end),
                tier_from_spans(PHONE_TIER, &phones, a.num_frames, end),
            ],
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid with one empty interval per tier.
    pub fn silent(duration: f64) -> Self {
        let tier = |name: &str| Tier {
            name: name.to_string(),
            xmin: 0.0,
            xmax: duration,
            intervals: vec![Interval {
                xmin: 0.0,
                xmax: duration,
                text: String::new(),
            }],
        };
        TextGrid {
            xmin: 0.0,
            xmax: duration,
            tiers: vec![tier(WORD_TIER), tier(PHONE_TIER)],
        }
    }

    pub fn tier(&self, name: &str) -> Option<&Tier> {
        self.tiers.iter().find(|t| t.name == name)
    }

    /// Intervals of the named tier (or the last tier when absent) for scoring.
    pub fn timed_phones(&self, tier: &str) -> Option<Vec<TimedPhone>> {
        let t = self.tier(tier).or(self.tiers.last())?;
        Some(
            t.intervals
                .iter()
                .map(|i| TimedPhone::new(i.text.trim(), i.xmin, i.xmax))
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<(), TextGridError> {
        let bad = |m: String| Err(TextGridError::Invalid(m));
        if !(self.xmin.is_finite() && self.xmax.is_finite()) || self.xmax <= self.xmin {
            return bad(format!("grid bounds [{}, {}]", self.xmin, self.xmax));
        }
        for t in &self.tiers {
            if (t.xmin - self.xmin).abs() > BOUND_EPS || (t.xmax - self.xmax).abs() > BOUND_EPS {
                return bad(format!("tier {:?} bounds differ from the grid", t.name));
            }
            if t.intervals.is_empty() {
                return bad(format!("tier {:?} has no intervals", t.name));
            }
            let mut at = t.xmin;
            for (i, iv) in t.intervals.iter().enumerate() {
                if (iv.xmin - at).abs() > BOUND_EPS {
                    return bad(format!("tier {:?} interval {} starts at {} instead of {}", t.name, i + 1, iv.xmin, at));
                }
                if iv.xmax <= iv.xmin {
                    return bad(format!("tier {:?} interval {} is empty or reversed", t.name, i + 1));
                }
                at = iv.xmax;
            }
            if (at - t.xmax).abs() > BOUND_EPS {
                return bad(format!("tier {:?} ends at {} instead of {}", t.name, at, t.xmax));
            }
        }
        Ok(())
    }

    /// Full text format.
    pub fn to_text(&self) -> Result<String, TextGridError> {
        self.validate()?;
        let mut o = String::new();
        let _ = writeln!(o, "File type = \"ooTextFile\"");
        let _ = writeln!(o, "Object class = \"TextGrid\"");
        let _ = writeln!(o);
        let _ = writeln!(o, "xmin = {} ", self.xmin);
        let _ = writeln!(o, "xmax = {} ", self.xmax);
        let _ = writeln!(o, "tiers? <exists> ");
        let _ = writeln!(o, "size = {} ", self.tiers.len());
        let _ = writeln!(o, "item []: ");
        for (k, t) in self.tiers.iter().enumerate() {
            let _ = writeln!(o, "    item [{}]:", k + 1);
            let _ = writeln!(o, "        class = \"IntervalTier\" ");
            let _ = writeln!(o, "        name = {} ", quote(&t.name));
            let _ = writeln!(o, "        xmin = {} ", t.xmin);
            let _ = writeln!(o, "        xmax = {} ", t.xmax);
            let _ = writeln!(o, "        intervals: size = {} ", t.intervals.len());
            for (i, iv) in t.intervals.iter().enumerate() {
                let _ = writeln!(o, "        intervals [{}]:", i + 1);
                let _ = writeln!(o, "            xmin = {} ", iv.xmin);
                let _ = writeln!(o, "            xmax = {} ", iv.xmax);
                let _ = writeln!(o, "            text = {} ", quote(&iv.text));
            }
        }
        Ok(o)
    }

    /// Short text format (values only).
    pub fn to_short_text(&self) -> Result<String, TextGridError> {
        self.validate()?;
        let mut o = String::new();
        let _ = writeln!(o, "File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n");
        let _ = writeln!(o, "{}\n{}\n<exists>\n{}", self.xmin, self.xmax, self.tiers.len());
        for t in &self.tiers {
            let _ = writeln!(o, "\"IntervalTier\"\n{}\n{}\n{}\n{}", quote(&t.name), t.xmin, t.xmax, t.intervals.len());
            for iv in &t.intervals {
                let _ = writeln!(o, "{}\n{}\n{}", iv.xmin, iv.xmax, quote(&iv.text));
            }
        }
        Ok(o)
    }

    /// Validates, then writes UTF-8 text; nothing is written for an invalid grid.
    pub fn write(&self, path: &Path) -> Result<(), TextGridError> {
        let text = self.to_text()?;
        fs::write(path, text).map_err(|e| TextGridError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, TextGridError> {
        let bytes = fs::read(path).map_err(|e| TextGridError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_bytes(&bytes)
    }

    pub fn parse_bytes(bytes: &[u8]) -> Result<Self, TextGridError> {
        Self::parse(&decode_text(bytes)?)
    }

    pub fn parse(text: &str) -> Result<Self, TextGridError> {
        let tokens = tokenize(text)?;
        Parser { tokens, pos: 0 }.grid()
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Decodes UTF-8 or UTF-16 bytes, honoring a BOM when present.
pub fn decode_text(bytes: &[u8]) -> Result<String, TextGridError> {
    let utf16 = |body: &[u8], le: bool| -> Result<String, TextGridError> {
        if !body.len().is_multiple_of(2) {
            return Err(TextGridError::Encoding("odd byte count in UTF-16 text".into()));
        }
        let units: Vec<u16> = body
            .chunks_exact(2)
            .map(|c| if le { u16::from_le_bytes([c[0], c[1]]) } else { u16::from_be_bytes([c[0], c[1]]) })
            .collect();
        String::from_utf16(&units).map_err(|e| TextGridError::Encoding(e.to_string()))
    };
    match bytes {
        [0xFF, 0xFE, rest @ ..] => utf16(rest, true),
        [0xFE, 0xFF, rest @ ..] => utf16(rest, false),
        [0xEF, 0xBB, 0xBF, rest @ ..] => {
            String::from_utf8(rest.to_vec()).map_err(|e| TextGridError::Encoding(e.to_string()))
        }
        // BOM-less UTF-16 starts with an ASCII character next to a zero byte.
        [a, 0, ..] if *a != 0 => utf16(bytes, true),
        [0, b, ..] if *b != 0 => utf16(bytes, false),
        _ => String::from_utf8(bytes.to_vec()).map_err(|e| TextGridError::Encoding(e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Str(String),
    Num(f64),
    Flag(bool),
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, TextGridError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut line = 1;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                line += 1;
                i += 1;
            }
            '"' => {
                let start_line = line;
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => {
                            return Err(TextGridError::Syntax {
                                line: start_line,
                                message: "unterminated string".into(),
                            })
                        }
                        Some('"') if chars.get(i + 1) == Some(&'"') => {
                            s.push('"');
                            i += 2;
                        }
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            if ch == '\n' {
                                line += 1;
                            }
                            if ch != '\r' {
                                s.push(ch);
                            }
                            i += 1;
                        }
                    }
                }
                out.push((Tok::Str(s), start_line));
            }
            '!' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '[' => {
                while i < chars.len() && chars[i] != ']' && chars[i] != '\n' {
                    i += 1;
                }
                i += 1;
            }
            '<' => {
                let end = (i..chars.len()).find(|&k| chars[k] == '>' || chars[k] == '\n').unwrap_or(chars.len());
                let word: String = chars[i..end.min(chars.len())].iter().collect();
                let flag = match word.as_str() {
                    "<exists" => true,
                    "<absent" => false,
                    _ => {
                        return Err(TextGridError::Syntax {
                            line,
                            message: format!("unknown flag {word}>"),
                        })
                    }
                };
                out.push((Tok::Flag(flag), line));
                i = end + 1;
            }
            c if c.is_ascii_digit() || ((c == '-' || c == '+' || c == '.') && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '.')) => {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '.' | '-' | '+')) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let v: f64 = word.parse().map_err(|_| TextGridError::Syntax {
                    line,
                    message: format!("bad number {word:?}"),
                })?;
                out.push((Tok::Num(v), line));
            }
            c if c.is_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '?')) {
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or(self.tokens.last())
            .map_or(1, |t| t.1)
    }

    fn next(&mut self, what: &str) -> Result<(Tok, usize), TextGridError> {
        let t = self.tokens.get(self.pos).cloned().ok_or_else(|| TextGridError::Syntax {
            line: self.line(),
            message: format!("unexpected end of file, expected {what}"),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn string(&mut self, what: &str) -> Result<(String, usize), TextGridError> {
        match self.next(what)? {
            (Tok::Str(s), l) => Ok((s, l)),
            (_, line) => Err(TextGridError::Syntax {
                line,
                message: format!("expected {what} (a quoted string)"),
            }),
        }
    }

    fn number(&mut self, what: &str) -> Result<(f64, usize), TextGridError> {
        match self.next(what)? {
            (Tok::Num(v), l) => Ok((v, l)),
            (_, line) => Err(TextGridError::Syntax {
                line,
                message: format!("expected {what} (a number)"),
            }),
        }
    }

    fn count(&mut self, what: &str) -> Result<(usize, usize), TextGridError> {
        let (v, line) = self.number(what)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(TextGridError::Syntax {
                line,
                message: format!("{what} must be a whole number"),
            });
        }
        Ok((v as usize, line))
    }

    fn grid(mut self) -> Result<TextGrid, TextGridError> {
        let (ft, line) = self.string("file type")?;
        if ft != "ooTextFile" {
            return Err(TextGridError::Syntax {
                line,
                message: format!("file type {ft:?} is not a Praat text file"),
            });
        }
        let (class, line) = self.string("object class")?;
        if class != "TextGrid" {
            return Err(TextGridError::Syntax {
                line,
                message: format!("object class {class:?} is not TextGrid"),
            });
        }
        let (xmin, _) = self.number("xmin")?;
        let (xmax, line) = self.number("xmax")?;
        if xmax <= xmin {
            return Err(TextGridError::Structure {
                line,
                message: format!("grid xmax {xmax} not after xmin {xmin}"),
            });
        }
        let exists = match self.next("tiers flag")? {
            (Tok::Flag(f), _) => f,
            (_, line) => {
                return Err(TextGridError::Syntax {
                    line,
                    message: "expected <exists> or <absent>".into(),
                })
            }
        };
        let mut tiers = Vec::new();
        if exists {
            let (n, _) = self.count("tier count")?;
            for _ in 0..n {
                tiers.push(self.tier(xmin, xmax)?);
            }
        }
        if self.pos < self.tokens.len() {
            return Err(TextGridError::Syntax {
                line: self.line(),
                message: "unexpected content after the last tier".into(),
            });
        }
        Ok(TextGrid { xmin, xmax, tiers })
    }

    fn tier(&mut self, gmin: f64, gmax: f64) -> Result<Tier, TextGridError> {
        let (class, line) = self.string("tier class")?;
        if class != "IntervalTier" {
            return Err(TextGridError::Syntax {
                line,
                message: format!("unsupported tier class {class:?}"),
            });
        }
        let (name, _) = self.string("tier name")?;
        let (xmin, min_line) = self.number("tier xmin")?;
        let (xmax, max_line) = self.number("tier xmax")?;
        if (xmin - gmin).abs() > BOUND_EPS || (xmax - gmax).abs() > BOUND_EPS {
            return Err(TextGridError::Structure {
                line: if (xmin - gmin).abs() > BOUND_EPS { min_line } else { max_line },
                message: format!("tier {name:?} bounds [{xmin}, {xmax}] differ from grid [{gmin}, {gmax}]"),
            });
        }
        let (n, line) = self.count("interval count")?;
        if n == 0 {
            return Err(TextGridError::Structure {
                line,
                message: format!("tier {name:?} has no intervals"),
            });
        }
        let mut intervals = Vec::with_capacity(n);
        let mut at = xmin;
        for k in 0..n {
            let (a, line) = self.number("interval xmin")?;
            let (b, _) = self.number("interval xmax")?;
            let (text, _) = self.string("interval text")?;
            if (a - at).abs() > BOUND_EPS {
                let what = if a < at { "overlaps the previous one" } else { "leaves a gap" };
                return Err(TextGridError::Structure {
                    line,
                    message: format!("tier {name:?} interval {} {what} (starts at {a}, expected {at})", k + 1),
                });
            }
            if b <= a {
                return Err(TextGridError::Structure {
                    line,
                    message: format!("tier {name:?} interval {} has xmax {b} not after xmin {a}", k + 1),
                });
            }
            at = b;
            intervals.push(Interval { xmin: a, xmax: b, text });
        }
        if (at - xmax).abs() > BOUND_EPS {
            return Err(TextGridError::Structure {
                line: self.line(),
                message: format!("tier {name:?} intervals end at {at}, tier ends at {xmax}"),
            });
        }
        Ok(Tier {
            name,
            xmin,
            xmax,
            intervals,
        })
    }
}
