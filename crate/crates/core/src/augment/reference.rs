//! A 690-utterance reference fixture whose back-translations reproduce the
//! published per-pivot survivor counts after deduplication.
//!
//! The texts are synthetic. Which originals survive each pivot is drawn from a
//! seeded shuffle; survivors gain a pivot-specific word, the rest come back
//! unchanged up to case and terminal punctuation so that normalization is
//! exercised too.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dedup::normalize;
use super::translate::{write_cache, CacheKey};
use crate::corpus::{save_manifest, Corpus, Label, Language, Utterance, NUM_FOLDS};
use crate::error::Result;

pub const REFERENCE_SIZE: usize = 690;

/// Unique back-translations per pivot.
pub const REFERENCE_SURVIVORS: [(Language, usize); 5] = [
    (Language::Gr, 544),
    (Language::Ge, 596),
    (Language::Fr, 476),
    (Language::Ita, 476),
    (Language::Lat, 632),
];

pub const REFERENCE_MANIFEST: &str = "manifest.jsonl";
pub const REFERENCE_TRANSLATIONS: &str = "translations.jsonl";

/// First original, with a known Greek round trip.
pub const PROBE_TEXT: &str = "I can't believe it.";
pub const PROBE_GREEK: &str = "I really can't believe it.";

const SEED: u64 = 0x6d75_7374;

const WORDS: &[&str] = &[
    "you", "know", "the", "party", "was", "great", "we", "should", "go", "again", "maybe",
    "next", "week", "she", "told", "me", "about", "her", "new", "job", "i", "am", "sure",
    "this", "is", "fine", "he", "bought", "a", "boat", "they", "love", "that", "show", "my",
    "coffee", "tastes", "like", "water", "today", "sheldon", "thinks", "penny", "lost", "keys",
];

fn marker(pivot: Language) -> &'static str {
    match pivot {
        Language::Gr => "really",
        Language::Ge => "well",
        Language::Fr => "actually",
        Language::Ita => "truly",
        Language::Lat => "indeed",
        Language::En => "",
    }
}

/// Inserts the pivot's word after the first word.
fn survivor_text(text: &str, pivot: Language) -> String {
    match text.split_once(' ') {
        Some((head, tail)) => format!("{head} {} {tail}", marker(pivot)),
        None => format!("{text} {}", marker(pivot)),
    }
}

/// Same text up to case and terminal punctuation.
fn echo_text(text: &str, variant: usize) -> String {
    if variant.is_multiple_of(2) {
        text.to_string()
    } else {
        text.trim_end_matches(['.', '?', '!']).to_lowercase()
    }
}

fn forward_text(text: &str, pivot: Language) -> String {
    format!("<{}> {text}", pivot.code())
}

#[derive(Debug, Clone)]
pub struct ReferenceFixture {
    pub corpus: Corpus,
    pub translations: BTreeMap<CacheKey, String>,
}

impl ReferenceFixture {
    /// Writes the manifest and the translation cache under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_manifest(&self.corpus, &dir.join(REFERENCE_MANIFEST))?;
        write_cache(&self.translations, &dir.join(REFERENCE_TRANSLATIONS))
    }
}

pub fn reference_fixture() -> Result<ReferenceFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut seen = HashSet::new();
    let mut texts = vec![PROBE_TEXT.to_string()];
    seen.insert(normalize(PROBE_TEXT));
    while texts.len() < REFERENCE_SIZE {
        let n = rng.random_range(6..=23);
        let mut words: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
        let first = words[0].to_string();
        let mut cap = first[..1].to_uppercase();
        cap.push_str(&first[1..]);
        words[0] = &cap;
        let text = format!("{}{}", words.join(" "), [".", "?", "!"][rng.random_range(0..3)]);
        if seen.insert(normalize(&text)) {
            texts.push(text);
        }
    }

    let originals: Vec<Utterance> = texts
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let id = format!("ref_{i:04}");
            Utterance {
                audio_ref: format!("audio/{id}.wav"),
                id,
                text: text.clone(),
                label: Label::from(i % 2 == 0),
                speaker: format!("SPK{}", i % 11),
                show: format!("SHOW{}", i % 4),
                fold: ((i / 2) % NUM_FOLDS as usize) as u8,
            }
        })
        .collect();

    let mut translations = BTreeMap::new();
    for (pivot, survivors) in REFERENCE_SURVIVORS {
        let mut order: Vec<usize> = (1..REFERENCE_SIZE).collect();
        order.shuffle(&mut rng);
        order.insert(0, 0);
        let keep: HashSet<usize> = order[..survivors].iter().copied().collect();
        for (i, text) in texts.iter().enumerate() {
            let forward = forward_text(text, pivot);
            let back = if keep.contains(&i) {
                survivor_text(text, pivot)
            } else {
                echo_text(text, i)
            };
            translations.insert(CacheKey::new(text, Language::En, pivot), forward.clone());
            translations.insert(CacheKey::new(&forward, pivot, Language::En), back);
        }
    }

    Ok(ReferenceFixture {
        corpus: Corpus::new(originals, Vec::new())?,
        translations,
    })
}
