use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::CorpusError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// One token per extended grapheme cluster (suits unsegmented scripts).
    Grapheme,
    /// Maximal runs of alphanumeric characters.
    Whitespace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub mode: TokenizerMode,
    pub hash_buckets: usize,
    pub stopwords: Vec<String>,
    pub seed: u64,
}

pub const MIN_HASH_BUCKETS: usize = 256;

const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "i", "me", "my", "you", "your", "it", "its", "is", "are", "am", "was",
    "were", "be", "been", "to", "of", "in", "on", "at", "for", "and", "or", "but", "with", "so",
    "this", "that", "these", "those", "there", "very", "just", "some", "any", "also", "too",
    "的", "了", "吗", "呢", "吧", "啊", "是", "我", "你", "在", "和", "也", "就", "都",
];

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            mode: TokenizerMode::Grapheme,
            hash_buckets: 4096,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
        }
    }
}

/// Deterministic tokenizer with FNV-1a feature hashing.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    config: TokenizerConfig,
    stopwords: BTreeSet<String>,
}

impl Tokenizer {
    pub fn new(config: TokenizerConfig) -> Result<Self, CorpusError> {
        if config.hash_buckets < MIN_HASH_BUCKETS {
            return Err(CorpusError::Config(alloc::format!(
                "hash_buckets must be >= {MIN_HASH_BUCKETS}, got {}",
                config.hash_buckets
            )));
        }
        let stopwords = config.stopwords.iter().map(|s| s.to_lowercase()).collect();
        Ok(Self { config, stopwords })
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    pub fn buckets(&self) -> usize {
        self.config.hash_buckets
    }

    /// Lower-cased tokens with whitespace and punctuation removed.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        match self.config.mode {
            TokenizerMode::Grapheme => text
                .graphemes(true)
                .filter(|g| g.chars().any(char::is_alphanumeric))
                .map(str::to_lowercase)
                .collect(),
            TokenizerMode::Whitespace => text
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase)
                .collect(),
        }
    }

    /// [`Tokenizer::tokens`] with stopwords removed.
    pub fn content_tokens(&self, text: &str) -> Vec<String> {
        self.tokens(text)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(self.config.seed, token.as_bytes()) % self.config.hash_buckets as u64) as usize
    }

    /// Hashed bag of content tokens, in text order.
    pub fn bag(&self, text: &str) -> Vec<usize> {
        self.content_tokens(text).iter().map(|t| self.bucket(t)).collect()
    }
}

/// 64-bit FNV-1a over the little-endian seed followed by `bytes`.
pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}
