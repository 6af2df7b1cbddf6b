use std::collections::HashSet;

use crate::corpus::Language;

/// Case-folded, punctuation-stripped, whitespace-collapsed. Punctuation is
/// deleted rather than replaced, so "can't" and "cant" compare equal.
pub fn normalize(text: &str) -> String {
    let kept: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Drops candidates whose normalized text matches the original or any
/// candidate kept before it. Survivors keep their input order.
pub fn deduplicate(original: &str, candidates: &[(Language, String)]) -> Vec<(Language, String)> {
    let mut seen: HashSet<String> = HashSet::with_capacity(candidates.len() + 1);
    seen.insert(normalize(original));
    candidates
        .iter()
        .filter(|(_, text)| seen.insert(normalize(text)))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(lang: Language, s: &str) -> (Language, String) {
        (lang, s.to_string())
    }

    #[test]
    fn distinct_candidates_pass_through() {
        let input = vec![c(Language::Gr, "One."), c(Language::Ge, "Two."), c(Language::Fr, "Three.")];
        assert_eq!(deduplicate("Zero.", &input), input);
    }

    #[test]
    fn later_duplicate_of_kept_candidate_dropped() {
        let input = vec![
            c(Language::Gr, "It rains."),
            c(Language::Ge, "it rains"),
            c(Language::Fr, "Rain falls."),
        ];
        assert_eq!(
            deduplicate("It is raining.", &input),
            vec![c(Language::Gr, "It rains."), c(Language::Fr, "Rain falls.")]
        );
    }

    #[test]
    fn copy_of_original_dropped() {
        let input = vec![
            c(Language::Gr, "  oh   REALLY?! "),
            c(Language::Ge, "Oh, really?"),
            c(Language::Fr, "Oh really, now?"),
        ];
        assert_eq!(deduplicate("Oh really?", &input), vec![c(Language::Fr, "Oh really, now?")]);
    }

    #[test]
    fn normal_form() {
        assert_eq!(normalize(" I CAN'T   believe it... "), "i cant believe it");
        assert_eq!(normalize("?!"), "");
        assert_eq!(normalize("Ça  va?"), "ça va");
    }

    fn lang() -> impl Strategy<Value = Language> {
        prop::sample::select(Language::PIVOTS.to_vec())
    }

    proptest! {
        #[test]
        fn idempotent_and_stable(
            original in "[a-c ]{0,6}",
            raw in prop::collection::vec((lang(), "[a-cA-C .!]{0,6}"), 0..8),
        ) {
            let once = deduplicate(&original, &raw);
            let twice = deduplicate(&original, &once);
            prop_assert_eq!(&once, &twice);

            // survivors form a subsequence of the input
            let mut it = raw.iter();
            for kept in &once {
                prop_assert!(it.any(|x| x == kept));
            }
        }
    }
}
