//! Transcript cleanup and longest-match exception rules.

use std::path::Path;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("input is not valid UTF-8 (byte offset {offset})")]
    Encoding { offset: usize },
    #[error(
        "line {line}: digit {digit:?} in {word:?} at byte offset {offset}; spell numbers out in words"
    )]
    Digit {
        digit: char,
        word: String,
        offset: usize,
        line: usize,
    },
    #[error("rule file line {line}: {message}")]
    Rule { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Cleaned, lowercased transcript words.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CleanText {
    pub words: Vec<String>,
    /// Byte offset of each word in the raw input.
    pub offsets: Vec<usize>,
}

impl CleanText {
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words joined by single spaces.
    pub fn render(&self) -> String {
        self.words.join(" ")
    }
}

fn is_dash(c: char) -> bool {
    matches!(
        c,
        '-' | '\u{2010}'..='\u{2015}' | '\u{2212}' | '\u{2E3A}' | '\u{2E3B}' | '\u{FE58}' | '\u{FE63}' | '\u{FF0D}'
    )
}

fn is_separator(c: char) -> bool {
    c.is_whitespace() || is_dash(c)
}

/// Decodes, normalizes and tokenizes a raw transcript.
pub fn clean_text(raw: &[u8]) -> Result<CleanText, TextError> {
    const BOM: &[u8] = b"\xEF\xBB\xBF";
    let skip = if raw.starts_with(BOM) { BOM.len() } else { 0 };
    let text = std::str::from_utf8(&raw[skip..]).map_err(|e| TextError::Encoding {
        offset: skip + e.valid_up_to(),
    })?;

    let mut out = CleanText::default();
    let mut start = None;
    let mut tokens = Vec::new();
    for (i, c) in text.char_indices() {
        match (is_separator(c), start) {
            (true, Some(s)) => {
                tokens.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push((s, &text[s..]));
    }

    for (offset, token) in tokens {
        // A stray BOM (U+FEFF) in the middle of a file is a format character
        // and falls out with the other non-letters below.
        let word: String = token
            .nfc()
            .flat_map(char::to_lowercase)
            .filter(|c| c.is_alphanumeric())
            .collect();
        if let Some(digit) = word.chars().find(|c| c.is_numeric()) {
            let line = 1 + text[..offset].matches('\n').count();
            return Err(TextError::Digit {
                digit,
                word: token.to_string(),
                offset: offset + skip,
                line,
            });
        }
        if !word.is_empty() {
            out.words.push(word);
            out.offsets.push(offset + skip);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExceptionRule {
    pub pattern: String,
    pub replacements: Vec<String>,
}

/// Replacement rules matched longest-first, independent of file order.
#[derive(Debug, Clone, Default)]
pub struct ExceptionRuleSet {
    // Sorted by descending pattern length (in chars); stable, so equal
    // lengths keep file order.
    rules: Vec<ExceptionRule>,
}

impl ExceptionRuleSet {
    pub fn new(rules: Vec<ExceptionRule>) -> Result<Self, TextError> {
        for (i, r) in rules.iter().enumerate() {
            if r.pattern.is_empty() || r.replacements.is_empty() {
                return Err(TextError::Rule {
                    line: i + 1,
                    message: "rule needs a pattern and at least one replacement".into(),
                });
            }
        }
        let mut rules: Vec<ExceptionRule> = rules
            .into_iter()
            .map(|r| ExceptionRule {
                pattern: r.pattern.nfc().flat_map(char::to_lowercase).collect(),
                replacements: r.replacements,
            })
            .collect();
        rules.sort_by_key(|r| std::cmp::Reverse(r.pattern.chars().count()));
        Ok(Self { rules })
    }

    /// Parses `pattern replacement1 replacement2 ...` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let text = text.strip_prefix('\u{FEFF}').unwrap_or(text);
        let mut rules = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            let mut fields = line.split_whitespace();
            let Some(pattern) = fields.next() else { continue };
            let replacements: Vec<String> = fields.map(|f| f.nfc().collect()).collect();
            if replacements.is_empty() {
                return Err(TextError::Rule {
                    line: lineno + 1,
                    message: format!("pattern {pattern:?} has no replacement"),
                });
            }
            rules.push(ExceptionRule {
                pattern: pattern.to_string(),
                replacements,
            });
        }
        Self::new(rules)
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let text = std::fs::read_to_string(path).map_err(|e| TextError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn rules(&self) -> &[ExceptionRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Highest-priority match in `chars`: longest, then leftmost, then file order.
    /// Returns (start, length, rule index).
    fn best_match(&self, chars: &[char]) -> Option<(usize, usize, usize)> {
        let mut best: Option<(usize, usize, usize)> = None;
        for (ri, rule) in self.rules.iter().enumerate() {
            let pat: Vec<char> = rule.pattern.chars().collect();
            if let Some((_, len, _)) = best {
                // Rules are sorted by length: nothing later can be longer.
                if pat.len() < len {
                    break;
                }
            }
            if pat.len() > chars.len() {
                continue;
            }
            if let Some(pos) = chars.windows(pat.len()).position(|w| w == pat.as_slice()) {
                let better = match best {
                    None => true,
                    Some((bpos, blen, _)) => pat.len() > blen || (pat.len() == blen && pos < bpos),
                };
                if better {
                    best = Some((pos, pat.len(), ri));
                }
            }
        }
        best
    }

    fn expand(&self, chars: &[char]) -> Vec<String> {
        let Some((pos, len, ri)) = self.best_match(chars) else {
            return vec![chars.iter().collect()];
        };
        let prefixes = self.expand(&chars[..pos]);
        let suffixes = self.expand(&chars[pos + len..]);
        let mut out = Vec::new();
        for p in &prefixes {
            for r in &self.rules[ri].replacements {
                for s in &suffixes {
                    out.push(format!("{p}{r}{s}"));
                }
            }
        }
        out
    }
}

/// Spelling variants of `word` after exception replacement.
///
/// The longest matching pattern is replaced by each of its replacements; the
/// replaced text is not matched again, while the parts before and after it
/// are processed the same way. The result is the cross product of all
/// choices, in prefix-major order.
pub fn apply_exceptions(word: &str, rules: &ExceptionRuleSet) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    rules.expand(&chars)
}
