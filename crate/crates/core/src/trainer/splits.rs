//! Cross-validation folds from the per-original fold ids.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, NUM_FOLDS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: u8,
    /// Train-side originals first, then their augmented children.
    pub train_ids: Vec<String>,
    /// Originals only.
    pub test_ids: Vec<String>,
}

/// Fold `k` tests on the originals stored with fold `k` and trains on every
/// other original plus the augmented children of those originals.
pub fn make_splits(corpus: &Corpus) -> Result<Vec<FoldSplit>> {
    if let Some(u) = corpus.originals().iter().find(|u| u.fold >= NUM_FOLDS) {
        return Err(Error::InvalidCorpus(format!(
            "original `{}` has no valid fold id (got {})",
            u.id, u.fold
        )));
    }
    let splits: Vec<FoldSplit> = (0..NUM_FOLDS)
        .map(|k| {
            let mut train_ids = Vec::new();
            let mut test_ids = Vec::new();
            let mut train_parents = BTreeSet::new();
            for u in corpus.originals() {
                if u.fold == k {
                    test_ids.push(u.id.clone());
                } else {
                    train_parents.insert(u.id.as_str());
                    train_ids.push(u.id.clone());
                }
            }
            for a in corpus.augmented() {
                if train_parents.contains(a.parent_id.as_str()) {
                    train_ids.push(a.id.clone());
                }
            }
            FoldSplit {
                fold_id: k,
                train_ids,
                test_ids,
            }
        })
        .collect();
    assert_no_leakage(corpus, &splits)?;
    Ok(splits)
}

/// Fails if an augmented sample is tested on, or if a sample derived from a
/// test original is trained on.
pub fn assert_no_leakage(corpus: &Corpus, splits: &[FoldSplit]) -> Result<()> {
    let augmented: BTreeSet<&str> = corpus.augmented().iter().map(|a| a.id.as_str()).collect();
    let fold_of = corpus.fold_of();
    for s in splits {
        if let Some(id) = s.test_ids.iter().find(|id| augmented.contains(id.as_str())) {
            return Err(Error::InvalidCorpus(format!(
                "augmented sample `{id}` appears in the test set of fold {}",
                s.fold_id
            )));
        }
        if let Some(id) = s
            .train_ids
            .iter()
            .find(|id| fold_of.get(id.as_str()) == Some(&s.fold_id))
        {
            return Err(Error::InvalidCorpus(format!(
                "sample `{id}` from test fold {} appears in its training set",
                s.fold_id
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AugmentedSample, Label, Language, SynthesizerId, Utterance};

    fn corpus(n: usize) -> Corpus {
        let originals = (0..n)
            .map(|i| Utterance {
                id: format!("u{i}"),
                text: format!("text {i}"),
                audio_ref: format!("{i}.wav"),
                label: Label::from(i % 2 == 0),
                speaker: "s".into(),
                show: "x".into(),
                fold: (i % 5) as u8,
            })
            .collect();
        Corpus::new(originals, vec![]).unwrap()
    }

    #[test]
    fn balanced_folds_and_partition() {
        let c = corpus(690);
        let splits = make_splits(&c).unwrap();
        assert_eq!(splits.len(), 5);
        let mut seen = BTreeSet::new();
        for s in &splits {
            assert_eq!(s.test_ids.len(), 138);
            assert_eq!(s.train_ids.len(), 552);
            for id in &s.test_ids {
                assert!(seen.insert(id.clone()));
            }
        }
        assert_eq!(seen.len(), 690);
    }

    #[test]
    fn augmented_children_follow_parent() {
        let c = corpus(10);
        let child = AugmentedSample {
            id: "u0~gr".into(),
            parent_id: "u0".into(),
            pivot_language: Language::Gr,
            text: "other".into(),
            synthesizer: SynthesizerId::Mock,
            voice: "v".into(),
            audio_ref: "a.wav".into(),
            label: Label::Sarcastic,
        };
        let c = c.with_augmented(vec![child]).unwrap();
        let splits = make_splits(&c).unwrap();
        assert!(!splits[0].train_ids.contains(&"u0~gr".to_string()));
        for s in &splits[1..] {
            assert!(s.train_ids.contains(&"u0~gr".to_string()));
        }
        assert!(splits.iter().all(|s| !s.test_ids.contains(&"u0~gr".to_string())));

        let mut bad = splits.clone();
        bad[0].train_ids.push("u0~gr".into());
        assert!(assert_no_leakage(&c, &bad).is_err());
        let mut bad = splits;
        bad[1].test_ids.push("u0~gr".into());
        assert!(assert_no_leakage(&c, &bad).is_err());
    }
}
