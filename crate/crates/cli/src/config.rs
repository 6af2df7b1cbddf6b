//! Experiment configuration: a sectioned TOML document, then `--set`
//! overrides, then validation. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use sarcasm_fusion::augment::AugmentationPlan;
use sarcasm_fusion::corpus::{SignalLayout, SyntheticSpec};
use sarcasm_fusion::fusion::{AttentionVariant, Modality};
use sarcasm_fusion::trainer::{AblationAxis, TrainConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub corpus: CorpusConfig,
    pub augment: AugmentConfig,
    pub features: FeaturesConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Line-delimited manifest; audio references resolve against its
    /// directory. A synthetic corpus is generated when unset.
    pub manifest: Option<PathBuf>,
    pub synthetic_samples: usize,
    pub synthetic_seed: u64,
    pub separability: f64,
    pub layout: SignalLayout,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            synthetic_samples: 400,
            synthetic_seed: 7,
            separability: 0.9,
            layout: SignalLayout::Independent,
        }
    }
}

impl CorpusConfig {
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec::new(self.synthetic_samples, self.synthetic_seed, self.separability)
            .with_layout(self.layout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorKind {
    /// Offline synonym paraphraser, recorded into the translation cache.
    Paraphrase,
    /// Returns its input; every back-translation is deduplicated away.
    Identity,
    /// Cache hits only.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesizerKind {
    Mock,
    /// Pre-rendered clips under `<synth_dir>/<synthesizer id>/`.
    Directory,
    /// `synth_command` is run once per clip.
    Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Plan-set names, see [`plan_set`].
    pub plans: Vec<String>,
    pub translator: TranslatorKind,
    /// Replay source for `translator = "replay"`; otherwise translations are
    /// recorded under the artifact root.
    pub translation_cache: Option<PathBuf>,
    pub synthesizer: SynthesizerKind,
    pub synth_dir: Option<PathBuf>,
    pub synth_command: Vec<String>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            plans: vec!["4-fold(mock)".into()],
            translator: TranslatorKind::Paraphrase,
            translation_cache: None,
            synthesizer: SynthesizerKind::Mock,
            synth_dir: None,
            synth_command: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Mock,
    /// Pretrained encoder whose features were written to the feature cache
    /// by an external extractor.
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturesConfig {
    pub text_encoder: EncoderKind,
    pub audio_encoder: EncoderKind,
    pub token_budget: Option<usize>,
    /// Feature cache directory; `features/` under the artifact root when unset.
    pub cache: Option<PathBuf>,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            text_encoder: EncoderKind::Mock,
            audio_encoder: EncoderKind::Mock,
            token_budget: None,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub variant: AttentionVariant,
    pub modality: Modality,
    pub axis: Option<AblationAxis>,
    /// Training sets compared on the data-size and synthesizer axes, as
    /// plan-set names; `none` is the originals alone.
    pub datasets: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            variant: AttentionVariant::SelfSkip,
            modality: Modality::TextAudio,
            axis: None,
            datasets: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn datasets_for(&self, axis: AblationAxis) -> Vec<String> {
        if !self.datasets.is_empty() {
            return self.datasets.clone();
        }
        let names: &[&str] = match axis {
            AblationAxis::DataSize => &["none", "4-fold(mock)", "16-fold(mock)"],
            AblationAxis::Synthesizer => &["4-fold(cloud)", "4-fold(pretrained)", "4-fold(finetuned)"],
            _ => &[],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Named augmentation plan sets.
pub fn plan_set(name: &str) -> Result<Vec<AugmentationPlan>, ConfigError> {
    let mock = |voices| {
        AugmentationPlan::mock_scaled(voices)
            .map(|p| vec![p])
            .map_err(|e| ConfigError(e.to_string()))
    };
    match name {
        "none" => Ok(Vec::new()),
        "4-fold(cloud)" => Ok(vec![AugmentationPlan::four_fold_cloud()]),
        "4-fold(pretrained)" => Ok(vec![AugmentationPlan::four_fold_pretrained()]),
        "4-fold(finetuned)" => Ok(vec![AugmentationPlan::four_fold_finetuned()]),
        "16-fold(cloud)" => Ok(vec![AugmentationPlan::sixteen_fold_cloud()]),
        "20-fold" => Ok(AugmentationPlan::twenty_fold()),
        "4-fold(mock)" => mock(1),
        "8-fold(mock)" => mock(2),
        "12-fold(mock)" => mock(3),
        "16-fold(mock)" => mock(4),
        other => Err(ConfigError(format!(
            "unknown plan set `{other}` (expected none, 4-fold(cloud), 4-fold(pretrained), \
             4-fold(finetuned), 16-fold(cloud), 20-fold or 4/8/12/16-fold(mock))"
        ))),
    }
}

/// Plans named by `names`, deduplicated by plan name, in first-seen order.
pub fn union_of(names: &[String]) -> Result<Vec<AugmentationPlan>, ConfigError> {
    let mut out: Vec<AugmentationPlan> = Vec::new();
    for name in names {
        for plan in plan_set(name)? {
            if !out.iter().any(|p| p.name == plan.name) {
                out.push(plan);
            }
        }
    }
    Ok(out)
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(table: &mut Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override `{assignment}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("override key `{key}` is malformed")));
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override key `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Keys present in `given` but absent from `resolved`.
fn unknown_keys(given: &Table, resolved: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in given {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (v, resolved.get(k)) {
            (Value::Table(g), Some(Value::Table(r))) => unknown_keys(g, r, &path, out),
            (_, Some(_)) => {}
            (_, None) => out.push(path),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| ConfigError(format!("{}: {}", p.display(), e.message())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
        let resolved = config.to_table()?;
        let mut unknown = Vec::new();
        unknown_keys(&table, &resolved, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(ConfigError(format!("unknown config keys: {}", unknown.join(", "))));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| ConfigError(e.to_string()))?;
        if self.corpus.manifest.is_none() {
            self.corpus
                .synthetic_spec()
                .validate()
                .map_err(|e| ConfigError(e.to_string()))?;
        }
        union_of(&self.augment.plans)?;
        union_of(&self.experiment.datasets)?;
        if self.augment.translator == TranslatorKind::Replay && self.augment.translation_cache.is_none() {
            return Err(ConfigError("translator = \"replay\" needs augment.translation_cache".into()));
        }
        if self.augment.synthesizer == SynthesizerKind::Directory && self.augment.synth_dir.is_none() {
            return Err(ConfigError("synthesizer = \"directory\" needs augment.synth_dir".into()));
        }
        if self.augment.synthesizer == SynthesizerKind::Command && self.augment.synth_command.is_empty() {
            return Err(ConfigError("synthesizer = \"command\" needs augment.synth_command".into()));
        }
        let inputs = [
            ("corpus.manifest", &self.corpus.manifest),
            ("augment.translation_cache", &self.augment.translation_cache),
            ("augment.synth_dir", &self.augment.synth_dir),
        ];
        for (key, path) in inputs {
            if let Some(p) = path.as_ref().filter(|p| !p.exists()) {
                return Err(ConfigError(format!("{key}: {} does not exist", p.display())));
            }
        }
        if self.experiment.variant.is_cross() && self.experiment.modality != Modality::TextAudio {
            return Err(ConfigError(format!(
                "variant {} needs modality text+audio",
                self.experiment.variant
            )));
        }
        Ok(())
    }

    pub fn to_table(&self) -> Result<Table, ConfigError> {
        match Value::try_from(self).map_err(|e| ConfigError(e.to_string()))? {
            Value::Table(t) => Ok(t),
            _ => Err(ConfigError("configuration is not a table".into())),
        }
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError(e.to_string()))
    }
}
