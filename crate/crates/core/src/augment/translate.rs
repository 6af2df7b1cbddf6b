//! Back-translation through pivot languages, with a record/replay cache in
//! front of any real provider.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Language};
use crate::error::{Error, Result};
use crate::features::tokenizer::fnv1a;

pub trait TranslationClient: Send + Sync {
    fn translate(&self, text: &str, source: Language, target: Language) -> Result<String>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl TranslationClient for IdentityTranslator {
    fn translate(&self, text: &str, _source: Language, _target: Language) -> Result<String> {
        Ok(text.to_string())
    }
}

const SYNONYMS: &[(&str, &str)] = &[
    ("said", "told"),
    ("going", "heading"),
    ("want", "need"),
    ("see", "notice"),
    ("look", "glance"),
    ("make", "create"),
    ("thing", "stuff"),
    ("people", "folks"),
    ("today", "tonight"),
    ("morning", "afternoon"),
    ("friend", "buddy"),
    ("couch", "sofa"),
    ("maybe", "perhaps"),
    ("guess", "suppose"),
    ("car", "ride"),
    ("work", "job"),
    ("dinner", "supper"),
    ("got", "received"),
    ("know", "understand"),
    ("think", "believe"),
    ("well", "anyway"),
];
const FILLERS: &[&str] = &["just", "so", "then", "now"];

/// Deterministic offline stand-in for a translation provider.
///
/// The forward pass tags the text with the pivot code; the return pass swaps
/// some words for synonyms and drops some fillers, both chosen by hashing
/// (pivot, word, position). Words it does not know pass through untouched,
/// so class-bearing vocabulary survives.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParaphraseTranslator;

impl ParaphraseTranslator {
    fn synonym(word: &str) -> Option<&'static str> {
        SYNONYMS.iter().find_map(|&(a, b)| {
            if a == word {
                Some(b)
            } else if b == word {
                Some(a)
            } else {
                None
            }
        })
    }

    fn paraphrase(text: &str, pivot: Language) -> String {
        let mut out: Vec<String> = Vec::new();
        for (pos, token) in text.split_whitespace().enumerate() {
            let (core, tail) = split_trailing_punct(token);
            let lower = core.to_lowercase();
            let h = fnv1a(format!("{}:{}:{}", pivot.code(), lower, pos).as_bytes());
            if FILLERS.contains(&lower.as_str()) && h.is_multiple_of(5) {
                continue;
            }
            let word = match Self::synonym(&lower) {
                Some(syn) if h.is_multiple_of(3) => match_case(core, syn),
                _ => core.to_string(),
            };
            out.push(format!("{word}{tail}"));
        }
        out.join(" ")
    }
}

fn split_trailing_punct(token: &str) -> (&str, &str) {
    let idx = token
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_punctuation())
        .last()
        .map(|(i, _)| i)
        .unwrap_or(token.len());
    token.split_at(idx)
}

fn match_case(template: &str, word: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut c = word.chars();
        match c.next() {
            Some(f) => f.to_uppercase().chain(c).collect(),
            None => String::new(),
        }
    } else {
        word.to_string()
    }
}

impl TranslationClient for ParaphraseTranslator {
    fn translate(&self, text: &str, source: Language, target: Language) -> Result<String> {
        if source == Language::En {
            Ok(format!("[{}] {}", target.code(), text))
        } else {
            let prefix = format!("[{}] ", source.code());
            let body = text.strip_prefix(&prefix).unwrap_or(text);
            Ok(Self::paraphrase(body, source))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub text_sha256: String,
    pub source: String,
    pub target: String,
}

impl CacheKey {
    pub fn new(text: &str, source: Language, target: Language) -> Self {
        Self {
            text_sha256: sha256_hex(text.as_bytes()),
            source: source.code().to_string(),
            target: target.code().to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    #[serde(flatten)]
    key: CacheKey,
    translation: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record/replay cache around an optional live client.
///
/// With no inner client every lookup must hit the cache. New translations are
/// appended to the backing file, one JSON record per line.
pub struct CachedTranslator {
    inner: Option<Box<dyn TranslationClient>>,
    entries: Mutex<HashMap<CacheKey, String>>,
    path: Option<PathBuf>,
}

impl CachedTranslator {
    pub fn replay(path: &Path) -> Result<Self> {
        Ok(Self {
            inner: None,
            entries: Mutex::new(read_cache(path)?),
            path: None,
        })
    }

    /// Replays hits from `path` and records misses from `inner` into it.
    pub fn recording(path: &Path, inner: Box<dyn TranslationClient>) -> Result<Self> {
        let entries = if path.exists() {
            read_cache(path)?
        } else {
            HashMap::new()
        };
        Ok(Self {
            inner: Some(inner),
            entries: Mutex::new(entries),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn in_memory(inner: Box<dyn TranslationClient>) -> Self {
        Self {
            inner: Some(inner),
            entries: Mutex::new(HashMap::new()),
            path: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries, sorted by key.
    pub fn snapshot(&self) -> BTreeMap<CacheKey, String> {
        self.entries
            .lock()
            .expect("cache lock")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

fn read_cache(path: &Path) -> Result<HashMap<CacheKey, String>> {
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(rec.key, rec.translation);
    }
    Ok(out)
}

impl TranslationClient for CachedTranslator {
    fn translate(&self, text: &str, source: Language, target: Language) -> Result<String> {
        let key = CacheKey::new(text, source, target);
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let inner = self.inner.as_ref().ok_or_else(|| Error::CacheMiss {
            text_sha256: key.text_sha256.clone(),
            source_lang: key.source.clone(),
            target: key.target.clone(),
        })?;
        let translation = inner.translate(text, source, target)?;

        // Identical keys always map to identical content, so racing writers
        // may both append; the reader keeps the last one.
        let mut entries = self.entries.lock().expect("cache lock");
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let rec = CacheRecord {
                key: key.clone(),
                translation: translation.clone(),
            };
            let mut line = serde_json::to_string(&rec)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
        }
        entries.insert(key, translation.clone());
        Ok(translation)
    }
}

/// Writes every entry of `cache` to `path`, sorted by key.
pub fn write_cache(cache: &BTreeMap<CacheKey, String>, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(File::create(path)?);
    for (key, translation) in cache {
        let rec = CacheRecord {
            key: key.clone(),
            translation: translation.clone(),
        };
        serde_json::to_writer(&mut f, &rec)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// English -> pivot -> English.
pub fn back_translate(text: &str, pivot: Language, client: &dyn TranslationClient) -> Result<String> {
    if text.trim().is_empty() {
        return Err(Error::Empty("back-translation input text".into()));
    }
    let forward = client.translate(text, Language::En, pivot)?;
    let back = normalize_whitespace(&client.translate(&forward, pivot, Language::En)?);
    if back.is_empty() {
        return Err(Error::Empty("back-translation output".into()));
    }
    Ok(back)
}

/// Back-translates `(id, text)` pairs; results keep input order.
pub fn back_translate_batch(
    items: &[(String, String)],
    pivot: Language,
    client: &dyn TranslationClient,
) -> Result<Vec<(String, String)>> {
    items
        .par_iter()
        .map(|(id, text)| {
            back_translate(text, pivot, client)
                .map(|t| (id.clone(), t))
                .map_err(|e| Error::Translation {
                    id: id.clone(),
                    pivot: pivot.to_string(),
                    message: e.to_string(),
                })
        })
        .collect()
}

/// Raw (pre-dedup) back-translations per original, in pivot order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackTranslationTable {
    pub entries: BTreeMap<String, Vec<(Language, String)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableRecord {
    parent_id: String,
    pivot: Language,
    text: String,
}

impl BackTranslationTable {
    pub fn get(&self, parent_id: &str) -> Option<&[(Language, String)]> {
        self.entries.get(parent_id).map(Vec::as_slice)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(File::create(path)?);
        for (parent_id, rows) in &self.entries {
            for (pivot, text) in rows {
                let rec = TableRecord {
                    parent_id: parent_id.clone(),
                    pivot: *pivot,
                    text: text.clone(),
                };
                serde_json::to_writer(&mut f, &rec)?;
                f.write_all(b"\n")?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut table = Self::default();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TableRecord = serde_json::from_str(&line).map_err(|e| Error::ManifestParse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            table.entries.entry(rec.parent_id).or_default().push((rec.pivot, rec.text));
        }
        Ok(table)
    }
}

/// Back-translates every original through each pivot.
pub fn back_translate_corpus(
    corpus: &Corpus,
    pivots: &[Language],
    client: &dyn TranslationClient,
) -> Result<BackTranslationTable> {
    let items: Vec<(String, String)> = corpus
        .originals()
        .iter()
        .map(|u| (u.id.clone(), u.text.clone()))
        .collect();
    let mut table = BackTranslationTable::default();
    for &pivot in pivots {
        for (id, text) in back_translate_batch(&items, pivot, client)? {
            table.entries.entry(id).or_default().push((pivot, text));
        }
    }
    Ok(table)
}
