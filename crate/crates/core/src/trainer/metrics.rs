//! Precision, recall and F1 over both classes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Class scores weighted by true-class support.
    #[default]
    Weighted,
    Macro,
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::Weighted => "weighted",
            Averaging::Macro => "macro",
        })
    }
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "weighted" => Ok(Averaging::Weighted),
            "macro" => Ok(Averaging::Macro),
            other => Err(Error::Config(format!(
                "unknown averaging `{other}` (expected weighted or macro)"
            ))),
        }
    }
}

/// Percentages in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Thresholds probabilities and averages per-class scores.
pub fn evaluate(
    probabilities: &[f64],
    labels: &[bool],
    threshold: f64,
    averaging: Averaging,
) -> Result<Prf> {
    if probabilities.is_empty() {
        return Err(Error::Empty("cannot evaluate zero predictions".into()));
    }
    if probabilities.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let predicted: Vec<bool> = probabilities.iter().map(|&p| p >= threshold).collect();
    let n = labels.len() as f64;
    let mut out = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for class in [true, false] {
        let tp = (0..labels.len())
            .filter(|&i| predicted[i] == class && labels[i] == class)
            .count();
        let pred = predicted.iter().filter(|&&p| p == class).count();
        let support = labels.iter().filter(|&&l| l == class).count();
        let p = ratio(tp, pred);
        let r = ratio(tp, support);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let w = match averaging {
            Averaging::Weighted => support as f64 / n,
            Averaging::Macro => 0.5,
        };
        out.precision += w * p;
        out.recall += w * r;
        out.f1 += w * f1;
    }
    out.precision *= 100.0;
    out.recall *= 100.0;
    out.f1 *= 100.0;
    Ok(out)
}

/// One configuration's cross-validated scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub averaging: Averaging,
    pub per_fold: Vec<Prf>,
    pub mean_p: f64,
    pub mean_r: f64,
    pub mean_f1: f64,
}

impl MetricsReport {
    pub fn from_folds(name: impl Into<String>, averaging: Averaging, per_fold: Vec<Prf>) -> Result<Self> {
        if per_fold.is_empty() {
            return Err(Error::Empty("a report needs at least one fold".into()));
        }
        let n = per_fold.len() as f64;
        let mean = |f: fn(&Prf) -> f64| per_fold.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            name: name.into(),
            averaging,
            mean_p: mean(|m| m.precision),
            mean_r: mean(|m| m.recall),
            mean_f1: mean(|m| m.f1),
            per_fold,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Confusion matrix to (probabilities, labels).
    fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<f64>, Vec<bool>) {
        let mut p = Vec::new();
        let mut l = Vec::new();
        for (n, pred, lab) in [(tp, 0.9, true), (fp, 0.9, false), (fn_, 0.1, true), (tn, 0.1, false)] {
            p.extend(std::iter::repeat_n(pred, n));
            l.extend(std::iter::repeat_n(lab, n));
        }
        (p, l)
    }

    #[test]
    fn perfect_and_all_wrong() {
        let (p, l) = from_counts(5, 0, 0, 5);
        let m = evaluate(&p, &l, 0.5, Averaging::Weighted).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (100.0, 100.0, 100.0));
        let (p, l) = from_counts(0, 5, 5, 0);
        assert_eq!(evaluate(&p, &l, 0.5, Averaging::Weighted).unwrap().f1, 0.0);
    }

    #[test]
    fn hand_computed_confusion_matrix() {
        // positive: P 3/4, R 3/5; negative: P 4/6, R 4/5; supports 5 and 5
        let (p, l) = from_counts(3, 1, 2, 4);
        let m = evaluate(&p, &l, 0.5, Averaging::Weighted).unwrap();
        assert!((m.precision - 70.833333333).abs() < 1e-6);
        assert!((m.recall - 70.0).abs() < 1e-9);
        assert!((m.f1 - 69.696969697).abs() < 1e-6);
        let mm = evaluate(&p, &l, 0.5, Averaging::Macro).unwrap();
        assert!((mm.f1 - m.f1).abs() < 1e-9);
    }

    #[test]
    fn weighted_differs_from_macro_when_imbalanced() {
        let (p, l) = from_counts(6, 1, 0, 1);
        let w = evaluate(&p, &l, 0.5, Averaging::Weighted).unwrap();
        let m = evaluate(&p, &l, 0.5, Averaging::Macro).unwrap();
        assert!((w.f1 - m.f1).abs() > 1.0);
    }

    #[test]
    fn input_errors() {
        assert!(evaluate(&[], &[], 0.5, Averaging::Weighted).is_err());
        assert!(evaluate(&[0.2], &[true, false], 0.5, Averaging::Weighted).is_err());
    }

    #[test]
    fn report_means_are_arithmetic() {
        let folds = vec![
            Prf { precision: 80.0, recall: 70.0, f1: 60.0 },
            Prf { precision: 90.0, recall: 50.0, f1: 61.0 },
            Prf { precision: 85.0, recall: 60.0, f1: 62.5 },
        ];
        let r = MetricsReport::from_folds("x", Averaging::Weighted, folds.clone()).unwrap();
        assert_eq!(r.mean_p, (80.0 + 90.0 + 85.0) / 3.0);
        assert_eq!(r.mean_r, (70.0 + 50.0 + 60.0) / 3.0);
        assert_eq!(r.mean_f1, (60.0 + 61.0 + 62.5) / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        r.save(&path).unwrap();
        assert_eq!(MetricsReport::load(&path).unwrap(), r);
    }

    proptest! {
        #[test]
        fn evaluate_is_permutation_invariant(
            rows in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |r: &[(f64, bool)]| (r.iter().map(|x| x.0).collect::<Vec<_>>(), r.iter().map(|x| x.1).collect::<Vec<_>>());
            let (p1, l1) = split(&rows);
            let (p2, l2) = split(&shuffled);
            for avg in [Averaging::Weighted, Averaging::Macro] {
                let a = evaluate(&p1, &l1, 0.5, avg).unwrap();
                let b = evaluate(&p2, &l2, 0.5, avg).unwrap();
                prop_assert!((a.f1 - b.f1).abs() < 1e-9);
                prop_assert!((a.precision - b.precision).abs() < 1e-9);
                prop_assert!((0.0..=100.0).contains(&a.f1));
            }
        }
    }
}
