//! Bimodal augmentation: back-translated text paired with synthesized audio.
//!
//! The flow is back-translate every original through the pivots
//! ([`back_translate_corpus`]), deduplicate per plan ([`plan_texts`]), render
//! audio ([`materialize_plan`]) and finally assemble a training corpus from
//! one or more plans ([`assemble_fold_dataset`]).

mod dedup;
mod reference;
mod store;
mod synth;
mod translate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use crate::audio::AudioClip;
use crate::audio::MemoryClips;
use crate::corpus::{AugmentedSample, Corpus, Language, SynthesizerId};
use crate::error::{Error, Result};
pub use dedup::{deduplicate, normalize};
pub use reference::{
    reference_fixture, ReferenceFixture, PROBE_GREEK, PROBE_TEXT, REFERENCE_MANIFEST,
    REFERENCE_SIZE, REFERENCE_SURVIVORS, REFERENCE_TRANSLATIONS,
};
pub use store::{AudioStore, DirectoryStore, MemoryStore};
pub use synth::{
    sample_id, synthesize_batch, BatchEntry, BatchReport, BatchStatus, CommandSynthesizer,
    DirectorySynthesizer, MockSynthesizer, SynthesizerAdapter, TextItem,
};
pub use translate::{
    back_translate, back_translate_batch, back_translate_corpus, sha256_hex, write_cache,
    BackTranslationTable, CacheKey, CachedTranslator, IdentityTranslator, ParaphraseTranslator,
    TranslationClient,
};

/// Cloud voices used for the multi-speaker plans.
pub const CLOUD_VOICES: [&str; 4] = ["Brian", "Emma", "Joey", "Salli"];
pub const MAIN_PIVOTS: [Language; 4] = [Language::Gr, Language::Ge, Language::Fr, Language::Ita];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub name: String,
    pub pivot_languages: Vec<Language>,
    pub synthesizer: SynthesizerId,
    pub voices: Vec<String>,
}

impl AugmentationPlan {
    pub fn new(
        name: impl Into<String>,
        pivot_languages: Vec<Language>,
        synthesizer: SynthesizerId,
        voices: Vec<String>,
    ) -> Result<Self> {
        let plan = Self {
            name: name.into(),
            pivot_languages,
            synthesizer,
            voices,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pivot_languages.is_empty() {
            return Err(Error::Config(format!("plan `{}` has no pivot languages", self.name)));
        }
        if self.pivot_languages.contains(&Language::En) {
            return Err(Error::Config(format!("plan `{}` uses English as a pivot", self.name)));
        }
        if self.voices.is_empty() {
            return Err(Error::Config(format!("plan `{}` has no voices", self.name)));
        }
        if let Some(v) = self.voices.iter().find(|v| v.is_empty() || v.contains('~')) {
            return Err(Error::Config(format!("plan `{}` has invalid voice `{v}`", self.name)));
        }
        Ok(())
    }

    /// Latin back-translations voiced by the four cloud speakers.
    pub fn four_fold_cloud() -> Self {
        Self {
            name: "4-fold(cloud)".into(),
            pivot_languages: vec![Language::Lat],
            synthesizer: SynthesizerId::CloudTts,
            voices: CLOUD_VOICES.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn four_fold_pretrained() -> Self {
        Self {
            name: "4-fold(pretrained)".into(),
            pivot_languages: MAIN_PIVOTS.to_vec(),
            synthesizer: SynthesizerId::PretrainedNts,
            voices: vec!["default".into()],
        }
    }

    pub fn four_fold_finetuned() -> Self {
        Self {
            name: "4-fold(finetuned)".into(),
            pivot_languages: MAIN_PIVOTS.to_vec(),
            synthesizer: SynthesizerId::FinetunedNts,
            voices: vec!["default".into()],
        }
    }

    pub fn sixteen_fold_cloud() -> Self {
        Self {
            name: "16-fold(cloud)".into(),
            pivot_languages: MAIN_PIVOTS.to_vec(),
            synthesizer: SynthesizerId::CloudTts,
            voices: CLOUD_VOICES.iter().map(|v| v.to_string()).collect(),
        }
    }

    /// Main pivots voiced by the first `voices` cloud speakers through the
    /// mock synthesizer: a `4 * voices`-fold plan.
    pub fn mock_scaled(voices: usize) -> Result<Self> {
        if !(1..=CLOUD_VOICES.len()).contains(&voices) {
            return Err(Error::Config(format!(
                "mock plans take 1 to {} voices, got {voices}",
                CLOUD_VOICES.len()
            )));
        }
        Self::new(
            format!("{}-fold(mock)", 4 * voices),
            MAIN_PIVOTS.to_vec(),
            SynthesizerId::Mock,
            CLOUD_VOICES[..voices].iter().map(|v| v.to_string()).collect(),
        )
    }

    /// The 16-fold cloud set combined with the fine-tuned 4-fold set.
    pub fn twenty_fold() -> Vec<Self> {
        vec![Self::sixteen_fold_cloud(), Self::four_fold_finetuned()]
    }
}

/// Deduplicated texts for one plan.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanTexts {
    pub items: Vec<TextItem>,
    pub per_pivot: BTreeMap<Language, usize>,
}

/// Deduplicates each original's back-translations over the plan's pivots,
/// in plan order.
pub fn plan_texts(
    corpus: &Corpus,
    plan: &AugmentationPlan,
    table: &BackTranslationTable,
) -> Result<PlanTexts> {
    plan.validate()?;
    let mut out = PlanTexts::default();
    for &p in &plan.pivot_languages {
        out.per_pivot.insert(p, 0);
    }
    for u in corpus.originals() {
        let rows = table.get(&u.id).unwrap_or(&[]);
        let mut candidates = Vec::with_capacity(plan.pivot_languages.len());
        for &pivot in &plan.pivot_languages {
            let (_, text) = rows.iter().find(|(l, _)| *l == pivot).ok_or_else(|| {
                Error::Translation {
                    id: u.id.clone(),
                    pivot: pivot.to_string(),
                    message: "no back-translation available".into(),
                }
            })?;
            candidates.push((pivot, text.clone()));
        }
        for (pivot, text) in deduplicate(&u.text, &candidates) {
            *out.per_pivot.get_mut(&pivot).expect("pivot seeded") += 1;
            out.items.push(TextItem {
                parent_id: u.id.clone(),
                pivot,
                text,
            });
        }
    }
    Ok(out)
}

/// Synthesizes audio for every deduplicated text of `plan`.
pub fn materialize_plan(
    corpus: &Corpus,
    plan: &AugmentationPlan,
    table: &BackTranslationTable,
    adapter: &dyn SynthesizerAdapter,
    store: &dyn AudioStore,
) -> Result<BatchReport> {
    if adapter.id() != plan.synthesizer {
        return Err(Error::Config(format!(
            "plan `{}` wants synthesizer {}, adapter is {}",
            plan.name,
            plan.synthesizer,
            adapter.id()
        )));
    }
    let texts = plan_texts(corpus, plan, table)?;
    Ok(synthesize_batch(&texts.items, adapter, &plan.voices, store))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCount {
    pub name: String,
    pub unique_texts: usize,
    pub per_pivot: BTreeMap<Language, usize>,
    pub voices: usize,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct Assembly {
    pub corpus: Corpus,
    pub counts: Vec<PlanCount>,
}

/// All originals plus the augmented samples named by `plans`. Every planned
/// sample must already have audio in `store`.
pub fn assemble_fold_dataset(
    corpus: &Corpus,
    plans: &[AugmentationPlan],
    table: &BackTranslationTable,
    store: &dyn AudioStore,
) -> Result<Assembly> {
    let labels: BTreeMap<&str, _> = corpus
        .originals()
        .iter()
        .map(|u| (u.id.as_str(), u.label))
        .collect();
    let mut augmented = Vec::new();
    let mut counts = Vec::with_capacity(plans.len());
    for plan in plans {
        let texts = plan_texts(corpus, plan, table)?;
        let before = augmented.len();
        for item in &texts.items {
            for voice in &plan.voices {
                let id = sample_id(&item.parent_id, item.pivot, plan.synthesizer, voice);
                if !store.contains(&id) {
                    return Err(Error::MissingAudio(id));
                }
                augmented.push(AugmentedSample {
                    audio_ref: store.audio_ref(&id),
                    id,
                    parent_id: item.parent_id.clone(),
                    pivot_language: item.pivot,
                    text: item.text.clone(),
                    synthesizer: plan.synthesizer,
                    voice: voice.clone(),
                    label: labels[item.parent_id.as_str()],
                });
            }
        }
        counts.push(PlanCount {
            name: plan.name.clone(),
            unique_texts: texts.items.len(),
            per_pivot: texts.per_pivot,
            voices: plan.voices.len(),
            samples: augmented.len() - before,
        });
    }
    Ok(Assembly {
        corpus: corpus.with_augmented(augmented)?,
        counts,
    })
}

/// Fully offline augmentation: [`ParaphraseTranslator`] back-translations
/// rendered by [`MockSynthesizer`] into memory. Returns the assembled corpus
/// and the clips of the augmented samples.
pub fn mock_augment(corpus: &Corpus, plans: &[AugmentationPlan]) -> Result<(Assembly, MemoryClips)> {
    let mut pivots: Vec<Language> = Vec::new();
    for plan in plans {
        for &p in &plan.pivot_languages {
            if !pivots.contains(&p) {
                pivots.push(p);
            }
        }
    }
    let table = back_translate_corpus(corpus, &pivots, &ParaphraseTranslator)?;
    let store = MemoryStore::new();
    for plan in plans {
        let adapter = MockSynthesizer::standing_in_for(plan.synthesizer);
        let report = materialize_plan(corpus, plan, &table, &adapter, &store)?;
        if let Some(failed) = report.failures().next() {
            return Err(Error::Synthesis(format!(
                "{}: {}",
                failed.id,
                failed.error.as_deref().unwrap_or("unknown failure")
            )));
        };
    }
    let assembly = assemble_fold_dataset(corpus, plans, &table, &store)?;
    Ok((assembly, store.into_clips()))
}
