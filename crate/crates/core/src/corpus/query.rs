use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{SoapSection, SoapSegment};

/// Retrieval query built from the segment history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    /// Deduplicated S/O/A segments in first-occurrence order.
    pub segments: Vec<SoapSegment>,
    /// True when no S/O/A segment existed and `text` is the raw dialogue.
    pub fallback: bool,
}

/// Lower-cased, whitespace-collapsed text used as the segment dedup key.
pub fn normalize_segment_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// S/O/A segments with duplicates removed, keeping first occurrences in order.
pub fn dedup_segments(segments: &[SoapSegment]) -> Vec<SoapSegment> {
    let mut seen = BTreeSet::new();
    segments
        .iter()
        .filter(|s| s.section != SoapSection::P)
        .filter(|s| seen.insert(normalize_segment_text(&s.text)))
        .cloned()
        .collect()
}

/// Concatenates the deduplicated S/O/A segments; plan segments are left out.
/// Without any such segment the raw turns are used and the query is flagged.
pub fn build_query<'a>(segments: &[SoapSegment], raw_turns: impl IntoIterator<Item = &'a str>) -> Query {
    let kept = dedup_segments(segments);
    if kept.is_empty() {
        let text = raw_turns
            .into_iter()
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        return Query {
            text,
            segments: kept,
            fallback: true,
        };
    }
    let text = kept.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
    Query {
        text,
        segments: kept,
        fallback: false,
    }
}
