use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CorpusError, SoapSection, SoapSegment};

pub const MAX_SEGMENT_CHARS: usize = 256;

/// One lexicon pattern. A trailing `*` lets the last word run on through
/// further letters (`vomit*` matches "vomited").
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub pattern: String,
    pub section: SoapSection,
}

impl LexiconEntry {
    fn literal(&self) -> (Vec<char>, bool) {
        let p = self.pattern.trim();
        let (body, wildcard) = match p.strip_suffix('*') {
            Some(b) => (b, true),
            None => (p, false),
        };
        (body.chars().flat_map(char::to_lowercase).collect(), wildcard)
    }
}

/// Phrase patterns mapped to SOAP sections.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoapLexicon {
    pub entries: Vec<LexiconEntry>,
}

impl SoapLexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Self {
        Self { entries }
    }

    /// Parses `pattern<TAB>section` lines. Blank lines and `#` comments are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(pattern), Some(section), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(CorpusError::Format {
                    line: i + 1,
                    message: "expected `pattern<TAB>section`".to_string(),
                });
            };
            let section = SoapSection::parse(section.trim()).ok_or_else(|| CorpusError::Format {
                line: i + 1,
                message: alloc::format!("unknown SOAP section `{}`", section.trim()),
            })?;
            if pattern.trim().trim_end_matches('*').is_empty() {
                return Err(CorpusError::Format {
                    line: i + 1,
                    message: "empty pattern".to_string(),
                });
            }
            entries.push(LexiconEntry {
                pattern: pattern.trim().to_string(),
                section,
            });
        }
        Ok(Self { entries })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.pattern);
            out.push('\t');
            out.push_str(e.section.as_str());
            out.push('\n');
        }
        out
    }
}

/// A single lexicon hit over `chars[start..end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LexiconMatch {
    pub start: usize,
    pub end: usize,
    pub entry: usize,
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric()
}

fn is_clause_break(c: char) -> bool {
    matches!(
        c,
        ',' | '.' | ';' | '!' | '?' | ':' | '\n' | '，' | '。' | '；' | '！' | '？' | '：' | '、'
    )
}

fn is_decimal_point(chars: &[char], j: usize) -> bool {
    chars[j] == '.'
        && j > 0
        && chars[j - 1].is_ascii_digit()
        && chars.get(j + 1).is_some_and(char::is_ascii_digit)
}

const TRAILING_CONNECTIVES: &[&str] = &["and", "or", "but", "with", "also", "plus"];

/// Length of the match of `entry` at `start`, if any.
pub(crate) fn match_at(lower: &[char], start: usize, literal: &[char], wildcard: bool) -> Option<usize> {
    if literal.is_empty() || start + literal.len() > lower.len() {
        return None;
    }
    if is_word(literal[0]) && start > 0 && is_word(lower[start - 1]) {
        return None;
    }
    if lower[start..start + literal.len()] != *literal {
        return None;
    }
    let mut end = start + literal.len();
    let last = literal[literal.len() - 1];
    if wildcard {
        while end < lower.len() && is_word(lower[end]) {
            end += 1;
        }
    } else if is_word(last) && end < lower.len() && is_word(lower[end]) {
        return None;
    }
    Some(end - start)
}

/// Leftmost-longest, non-overlapping lexicon hits. On equal length the
/// earlier lexicon entry wins.
pub fn find_matches(text: &str, lexicon: &SoapLexicon) -> Vec<LexiconMatch> {
    let lower: Vec<char> = text.chars().map(lower_char).collect();
    let literals: Vec<(Vec<char>, bool)> = lexicon.entries.iter().map(LexiconEntry::literal).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        let mut best: Option<(usize, usize)> = None;
        for (e, (lit, wild)) in literals.iter().enumerate() {
            if let Some(len) = match_at(&lower, i, lit, *wild) {
                if best.map_or(true, |(l, _)| len > l) {
                    best = Some((len, e));
                }
            }
        }
        match best {
            Some((len, entry)) => {
                out.push(LexiconMatch {
                    start: i,
                    end: i + len,
                    entry,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

pub(crate) fn lower_char(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// Rule-based SOAP extraction.
///
/// Each lexicon hit opens a segment that runs to the end of its clause or
/// to the next hit, whichever comes first. Trailing connectives are dropped
/// and segments are capped at [`MAX_SEGMENT_CHARS`].
pub fn extract_soap(text: &str, lexicon: &SoapLexicon, turn_index: usize) -> Vec<SoapSegment> {
    let chars: Vec<char> = text.chars().collect();
    let matches = find_matches(text, lexicon);
    let mut out = Vec::with_capacity(matches.len());
    for (k, m) in matches.iter().enumerate() {
        let next = matches.get(k + 1).map_or(chars.len(), |n| n.start);
        let clause_end = (m.end..chars.len())
            .find(|&j| is_clause_break(chars[j]) && !is_decimal_point(&chars, j))
            .unwrap_or(chars.len());
        let end = next.min(clause_end);
        let span: String = chars[m.start..end].iter().collect();
        let mut seg = span.trim();
        loop {
            let trimmed = TRAILING_CONNECTIVES.iter().find_map(|w| {
                seg.strip_suffix(w)
                    .filter(|rest| rest.ends_with(char::is_whitespace))
                    .map(str::trim_end)
            });
            match trimmed {
                Some(rest) if rest.chars().count() >= m.end - m.start => seg = rest,
                _ => break,
            }
        }
        let seg: String = seg.chars().take(MAX_SEGMENT_CHARS).collect();
        if seg.is_empty() {
            continue;
        }
        out.push(SoapSegment {
            section: lexicon.entries[m.entry].section,
            text: seg,
            turn_index,
        });
    }
    out
}
