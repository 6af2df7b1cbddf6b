#![allow(dead_code)]

use std::path::PathBuf;

use sarcasm_fusion::augment::{
    assemble_fold_dataset, back_translate_corpus, materialize_plan, AugmentationPlan, Assembly,
    BackTranslationTable, CachedTranslator, MemoryStore, MockSynthesizer, REFERENCE_MANIFEST,
    REFERENCE_TRANSLATIONS,
};
use sarcasm_fusion::corpus::{load_manifest, Corpus, Language};

pub fn reference_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference")
}

/// Committed corpus plus its replayed back-translation table.
pub fn replay_reference() -> (Corpus, BackTranslationTable) {
    let dir = reference_dir();
    let corpus = load_manifest(&dir.join(REFERENCE_MANIFEST)).unwrap();
    let client = CachedTranslator::replay(&dir.join(REFERENCE_TRANSLATIONS)).unwrap();
    let table = back_translate_corpus(&corpus, &Language::PIVOTS, &client).unwrap();
    (corpus, table)
}

/// Every augmentation plan of the data-size study, keyed by its row name.
pub fn table_plans() -> Vec<(&'static str, Vec<AugmentationPlan>)> {
    vec![
        ("4-fold(cloud)", vec![AugmentationPlan::four_fold_cloud()]),
        ("4-fold(pretrained)", vec![AugmentationPlan::four_fold_pretrained()]),
        ("4-fold(finetuned)", vec![AugmentationPlan::four_fold_finetuned()]),
        ("16-fold(cloud)", vec![AugmentationPlan::sixteen_fold_cloud()]),
        ("20-fold", AugmentationPlan::twenty_fold()),
    ]
}

/// Renders every plan with very short mock clips and assembles them.
pub fn assemble(corpus: &Corpus, table: &BackTranslationTable, plans: &[AugmentationPlan]) -> Assembly {
    let store = MemoryStore::new();
    for plan in plans {
        let synth = MockSynthesizer {
            burst_ms: 1.0,
            ..MockSynthesizer::standing_in_for(plan.synthesizer)
        };
        let report = materialize_plan(corpus, plan, table, &synth, &store).unwrap();
        assert_eq!(report.failures().count(), 0);
    }
    assemble_fold_dataset(corpus, plans, table, &store).unwrap()
}
