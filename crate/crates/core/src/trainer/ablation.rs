//! Ablation runners, comparison tables and plots.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::train::{run_cv, InputTable, TrainConfig};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::fusion::{AttentionVariant, Modality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    DataSize,
    Synthesizer,
    Attention,
    Modality,
    Skip,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 5] = [
        AblationAxis::DataSize,
        AblationAxis::Synthesizer,
        AblationAxis::Attention,
        AblationAxis::Modality,
        AblationAxis::Skip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::DataSize => "data_size",
            AblationAxis::Synthesizer => "synthesizer",
            AblationAxis::Attention => "attention",
            AblationAxis::Modality => "modality",
            AblationAxis::Skip => "skip",
        }
    }

    /// Axes compared across training sets, drawn as figures.
    pub fn is_plotted(self) -> bool {
        matches!(self, AblationAxis::DataSize | AblationAxis::Synthesizer)
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown ablation axis `{s}` (expected data_size, synthesizer, attention, modality or skip)"
                ))
            })
    }
}

/// One row of an ablation: a training corpus and a model configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub corpus: Corpus,
    pub variant: AttentionVariant,
    pub modality: Modality,
}

/// Builds the rows of `axis`. `datasets` names the training corpora compared
/// on the data-size and synthesizer axes, in row order; the other axes use
/// `base`.
pub fn experiments_for_axis(
    axis: AblationAxis,
    base: &Corpus,
    datasets: &[(String, Corpus)],
    variant: AttentionVariant,
) -> Result<Vec<Experiment>> {
    let row = |name: &str, corpus: &Corpus, variant, modality| Experiment {
        name: name.to_string(),
        corpus: corpus.clone(),
        variant,
        modality,
    };
    Ok(match axis {
        AblationAxis::DataSize | AblationAxis::Synthesizer => {
            if datasets.is_empty() {
                return Err(Error::MissingConfiguration(format!(
                    "{axis} ablation needs at least one named dataset"
                )));
            }
            datasets
                .iter()
                .map(|(name, c)| row(name, c, variant, Modality::TextAudio))
                .collect()
        }
        AblationAxis::Attention => AttentionVariant::ALL
            .into_iter()
            .map(|v| row(v.as_str(), base, v, Modality::TextAudio))
            .collect(),
        AblationAxis::Modality => {
            let v = if variant.is_cross() {
                AttentionVariant::SelfSkip.with_skip(variant.skip())
            } else {
                variant
            };
            Modality::ALL
                .into_iter()
                .map(|m| row(m.as_str(), base, v, m))
                .collect()
        }
        AblationAxis::Skip => [
            AttentionVariant::SelfAttention,
            AttentionVariant::SelfSkip,
            AttentionVariant::Cross,
            AttentionVariant::CrossSkip,
        ]
        .into_iter()
        .map(|v| row(v.as_str(), base, v, Modality::TextAudio))
        .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub axis: AblationAxis,
    pub rows: Vec<MetricsReport>,
}

impl ComparisonTable {
    pub fn row(&self, name: &str) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text table, one row per configuration.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(13);
        let avg = self.rows.first().map(|r| r.averaging.to_string()).unwrap_or_default();
        let mut out = String::new();
        let _ = writeln!(out, "axis: {}  averaging: {avg}", self.axis);
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}", "configuration", "P", "R", "F1");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6.2}  {:>6.2}  {:>6.2}",
                r.name, r.mean_p, r.mean_r, r.mean_f1
            );
        }
        out
    }

    /// Writes `<axis>.json`, `<axis>.txt` and, for plotted axes,
    /// `<axis>.svg`. Returns the paths written.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{}.json", self.axis));
        std::fs::write(&json, serde_json::to_string_pretty(self)?)?;
        let txt = dir.join(format!("{}.txt", self.axis));
        std::fs::write(&txt, self.render())?;
        let mut out = vec![json, txt];
        if self.axis.is_plotted() {
            let svg = dir.join(format!("{}.svg", self.axis));
            plot_f1(self, &svg)?;
            out.push(svg);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Mean F1 per configuration as a line over the row order.
pub fn plot_f1(table: &ComparisonTable, path: &Path) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot(e.to_string());
    let n = table.rows.len();
    if n == 0 {
        return Err(Error::Empty("nothing to plot".into()));
    }
    let f1: Vec<f64> = table.rows.iter().map(|r| r.mean_f1).collect();
    let lo = f1.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = f1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.2).max(1.0);
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let names: Vec<String> = table.rows.iter().map(|r| r.name.clone()).collect();
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Mean F1 by {}", table.axis), ("sans-serif", 20))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(-0.5f64..(n as f64 - 0.5), (lo - pad).max(0.0)..(hi + pad).min(100.0))
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < names.len() {
                names[i as usize].clone()
            } else {
                String::new()
            }
        })
        .y_desc("F1 (%)")
        .draw()
        .map_err(|e| plot_err(&e))?;
    chart
        .draw_series(LineSeries::new(f1.iter().enumerate().map(|(i, &v)| (i as f64, v)), &BLUE))
        .map_err(|e| plot_err(&e))?;
    chart
        .draw_series(
            f1.iter()
                .enumerate()
                .map(|(i, &v)| Circle::new((i as f64, v), 4, BLUE.filled())),
        )
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

/// Runs every experiment under 5-fold cross-validation.
pub fn ablate(
    axis: AblationAxis,
    experiments: &[Experiment],
    inputs: &InputTable,
    config: &TrainConfig,
) -> Result<ComparisonTable> {
    if experiments.is_empty() {
        return Err(Error::MissingConfiguration(format!("no configurations for the {axis} axis")));
    }
    let rows = experiments
        .iter()
        .map(|e| Ok(run_cv(&e.name, &e.corpus, inputs, config, e.variant, e.modality)?.report))
        .collect::<Result<_>>()?;
    Ok(ComparisonTable { axis, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendStatus {
    Pass,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub status: TrendStatus,
    /// Mean F1 per row, in row order.
    pub f1: Vec<f64>,
    /// Row pairs where F1 dropped.
    pub drops: Vec<(String, String)>,
}

/// Passes when mean F1 never decreases along the row order.
pub fn trend_check(table: &ComparisonTable) -> TrendCheck {
    let f1: Vec<f64> = table.rows.iter().map(|r| r.mean_f1).collect();
    let drops: Vec<(String, String)> = table
        .rows
        .windows(2)
        .filter(|w| w[1].mean_f1 < w[0].mean_f1)
        .map(|w| (w[0].name.clone(), w[1].name.clone()))
        .collect();
    TrendCheck {
        status: if drops.is_empty() {
            TrendStatus::Pass
        } else {
            TrendStatus::Warn
        },
        f1,
        drops,
    }
}

/// Reports keyed by name, for lookups across tables.
pub fn by_name(table: &ComparisonTable) -> BTreeMap<&str, &MetricsReport> {
    table.rows.iter().map(|r| (r.name.as_str(), r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::metrics::{Averaging, Prf};

    fn report(name: &str, f1: f64) -> MetricsReport {
        MetricsReport::from_folds(
            name,
            Averaging::Weighted,
            vec![Prf {
                precision: f1,
                recall: f1,
                f1,
            }],
        )
        .unwrap()
    }

    #[test]
    fn axis_rows() {
        let base = Corpus::empty();
        let att = experiments_for_axis(AblationAxis::Attention, &base, &[], AttentionVariant::SelfSkip).unwrap();
        let names: Vec<_> = att.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["baseline", "self", "self+skip", "cross", "cross+skip"]);
        let m = experiments_for_axis(AblationAxis::Modality, &base, &[], AttentionVariant::CrossSkip).unwrap();
        assert_eq!(m.len(), 3);
        assert!(m.iter().all(|e| e.variant == AttentionVariant::SelfSkip));
        assert!(matches!(
            experiments_for_axis(AblationAxis::DataSize, &base, &[], AttentionVariant::SelfSkip),
            Err(Error::MissingConfiguration(_))
        ));
    }

    #[test]
    fn trend_and_rendering() {
        let t = ComparisonTable {
            axis: AblationAxis::DataSize,
            rows: vec![report("none", 60.0), report("4x", 65.0), report("16x", 64.0)],
        };
        let check = trend_check(&t);
        assert_eq!(check.status, TrendStatus::Warn);
        assert_eq!(check.drops, vec![("4x".to_string(), "16x".to_string())]);
        let text = t.render();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("65.00"));

        let dir = tempfile::tempdir().unwrap();
        let files = t.save(dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let svg = std::fs::read_to_string(&files[2]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(ComparisonTable::load(&files[0]).unwrap(), t);
    }

    #[test]
    fn axis_names_round_trip() {
        for a in AblationAxis::ALL {
            assert_eq!(a.as_str().parse::<AblationAxis>().unwrap(), a);
        }
        assert!("size".parse::<AblationAxis>().is_err());
    }
}
