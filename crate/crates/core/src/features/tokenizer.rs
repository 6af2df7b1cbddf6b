//! Subword tokenization with BERT-style framing.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 100;
pub const CLS_ID: u32 = 101;
pub const SEP_ID: u32 = 102;
pub const VOCAB_SIZE: u32 = 30_522;

/// First id handed out by the hashing tokenizer; everything below is reserved.
const HASH_BASE: u32 = 1_000;

/// Fixed-length token ids plus attention mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<u32>,
    pub attention_mask: Vec<u8>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of non-padding positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

pub trait Tokenizer: Send + Sync {
    /// Content token ids, without start/separator markers.
    fn content_ids(&self, text: &str) -> Vec<u32>;

    /// Length of the framed sequence before truncation or padding.
    fn framed_len(&self, text: &str) -> usize {
        self.content_ids(text).len() + 2
    }

    /// `[CLS] content [SEP]`, truncated to `budget` and right-padded to it.
    fn tokenize(&self, text: &str, budget: usize) -> Result<TokenSeq> {
        if budget < 2 {
            return Err(Error::Config(format!("token budget must be >= 2, got {budget}")));
        }
        let content = self.content_ids(text);
        let keep = content.len().min(budget - 2);
        let mut tokens = Vec::with_capacity(budget);
        tokens.push(CLS_ID);
        tokens.extend_from_slice(&content[..keep]);
        tokens.push(SEP_ID);
        let real = tokens.len();
        tokens.resize(budget, PAD_ID);
        let mut attention_mask = vec![1u8; real];
        attention_mask.resize(budget, 0);
        Ok(TokenSeq {
            tokens,
            attention_mask,
        })
    }
}

/// Lower-cases, splits on whitespace and isolates punctuation, the way BERT's
/// basic tokenizer does before wordpiece.
pub fn basic_split(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if is_punctuation(ch) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        } else {
            cur.extend(ch.to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn is_punctuation(ch: char) -> bool {
    ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace() && !ch.is_control())
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Vocabulary-free tokenizer: each basic token hashes to a stable id.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashingTokenizer;

impl HashingTokenizer {
    pub fn id_of(word: &str) -> u32 {
        HASH_BASE + (fnv1a(word.as_bytes()) % (VOCAB_SIZE - HASH_BASE) as u64) as u32
    }
}

impl Tokenizer for HashingTokenizer {
    fn content_ids(&self, text: &str) -> Vec<u32> {
        basic_split(text).iter().map(|w| Self::id_of(w)).collect()
    }
}

/// Greedy longest-match-first wordpiece over a `vocab.txt` (one token per line).
#[derive(Debug, Clone)]
pub struct WordPieceTokenizer {
    vocab: HashMap<String, u32>,
    unk_id: u32,
    max_chars: usize,
}

impl WordPieceTokenizer {
    pub fn from_vocab_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_tokens(text.lines()))
    }

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let vocab: HashMap<String, u32> = tokens
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t.trim_end().to_string(), i as u32))
            .collect();
        let unk_id = vocab.get("[UNK]").copied().unwrap_or(UNK_ID);
        Self {
            vocab,
            unk_id,
            max_chars: 100,
        }
    }

    fn word_pieces(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > self.max_chars {
            out.push(self.unk_id);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut sub: String = chars[start..end].iter().collect();
                if start > 0 {
                    sub.insert_str(0, "##");
                }
                if let Some(&id) = self.vocab.get(&sub) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk_id);
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

impl Tokenizer for WordPieceTokenizer {
    fn content_ids(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in basic_split(text) {
            self.word_pieces(&w, &mut out);
        }
        out
    }
}

/// Sequence length budget: the rounded mean of the 50th and 75th percentiles
/// of framed token lengths.
pub fn token_budget_from_lengths(lengths: &[usize]) -> Result<usize> {
    if lengths.is_empty() {
        return Err(Error::Empty("token budget needs at least one text".into()));
    }
    let mut sorted: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q2 = percentile(&sorted, 50.0);
    let q3 = percentile(&sorted, 75.0);
    Ok(((q2 + q3) / 2.0).round() as usize)
}

/// Linear-interpolated percentile of already sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
