//! Stage implementations. Every stage is idempotent: translations, clips and
//! features are cached under the artifact root and reused on the next run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sarcasm_fusion::audio::FileClips;
use sarcasm_fusion::augment::{
    assemble_fold_dataset, back_translate_corpus, materialize_plan, reference_fixture,
    AugmentationPlan, BackTranslationTable, CachedTranslator, CommandSynthesizer,
    DirectorySynthesizer, DirectoryStore, IdentityTranslator, MockSynthesizer,
    ParaphraseTranslator, SynthesizerAdapter,
};
use sarcasm_fusion::corpus::{
    generate_synthetic_corpus, load_manifest, save_manifest, Corpus, Language, SynthesizerId,
    Utterance,
};
use sarcasm_fusion::features::{
    compute_token_budget, ExternalEncoder, FeatureCache, FeatureExtractor, FeatureTable,
};
use sarcasm_fusion::trainer::{
    ablate, experiments_for_axis, run_cv, trend_check, AblationAxis, ComparisonTable, InputTable,
    MetricsReport, TrendStatus,
};
use sarcasm_fusion::{Error, Result};

use crate::config::{union_of, Config, EncoderKind, SynthesizerKind, TranslatorKind};

pub struct Context {
    config: Config,
    home: PathBuf,
    subcommand: &'static str,
    artifacts: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    version: &'a str,
    home: &'a Path,
    artifacts: &'a [PathBuf],
    config: &'a Config,
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn render_report(r: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}  averaging: {}", r.name, r.averaging);
    let _ = writeln!(out, "{:<6}  {:>6}  {:>6}  {:>6}", "fold", "P", "R", "F1");
    for (i, p) in r.per_fold.iter().enumerate() {
        let _ = writeln!(out, "{:<6}  {:>6.2}  {:>6.2}  {:>6.2}", i, p.precision, p.recall, p.f1);
    }
    let _ = writeln!(out, "{:<6}  {:>6.2}  {:>6.2}  {:>6.2}", "mean", r.mean_p, r.mean_r, r.mean_f1);
    out
}

impl Context {
    pub fn new(config: Config, home: PathBuf, subcommand: &'static str) -> Result<Self> {
        std::fs::create_dir_all(&home)?;
        let home = std::path::absolute(&home)?;
        Ok(Self {
            config,
            home,
            subcommand,
            artifacts: Vec::new(),
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.home.join(rel)
    }

    fn record(&mut self, path: PathBuf) {
        if !self.artifacts.contains(&path) {
            self.artifacts.push(path);
        }
    }

    /// Writes the run manifest and the resolved configuration.
    pub fn finish(mut self) -> Result<()> {
        let dir = self.path("runs");
        std::fs::create_dir_all(&dir)?;
        let snapshot = dir.join(format!("{}.toml", self.subcommand));
        let toml = self.config.to_toml().map_err(|e| Error::Config(e.0))?;
        std::fs::write(&snapshot, toml)?;
        self.record(snapshot);
        let manifest = RunManifest {
            subcommand: self.subcommand,
            version: env!("CARGO_PKG_VERSION"),
            home: &self.home,
            artifacts: &self.artifacts,
            config: &self.config,
        };
        std::fs::write(
            dir.join(format!("{}.json", self.subcommand)),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    /// The originals and the directory their audio references resolve against.
    fn base_corpus(&mut self) -> Result<(Corpus, PathBuf)> {
        match self.config.corpus.manifest.clone() {
            Some(manifest) => {
                let corpus = load_manifest(&manifest)?.originals_only();
                let root = manifest
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."));
                Ok((corpus, std::path::absolute(root)?))
            }
            None => {
                let dir = self.path("corpus");
                let syn = generate_synthetic_corpus(&self.config.corpus.synthetic_spec())?;
                syn.write_to(&dir)?;
                self.record(dir.join("manifest.jsonl"));
                Ok((syn.corpus, dir))
            }
        }
    }

    fn translator(&self) -> Result<CachedTranslator> {
        let a = &self.config.augment;
        match a.translator {
            TranslatorKind::Replay => {
                CachedTranslator::replay(a.translation_cache.as_deref().expect("validated"))
            }
            TranslatorKind::Paraphrase => CachedTranslator::recording(
                &self.path("translations-paraphrase.jsonl"),
                Box::new(ParaphraseTranslator),
            ),
            TranslatorKind::Identity => CachedTranslator::recording(
                &self.path("translations-identity.jsonl"),
                Box::new(IdentityTranslator),
            ),
        }
    }

    fn back_translations(&mut self, corpus: &Corpus, plans: &[AugmentationPlan]) -> Result<BackTranslationTable> {
        let mut pivots: Vec<Language> = Vec::new();
        for p in plans.iter().flat_map(|p| &p.pivot_languages) {
            if !pivots.contains(p) {
                pivots.push(*p);
            }
        }
        let table = back_translate_corpus(corpus, &pivots, &self.translator()?)?;
        let path = self.path("backtranslations.jsonl");
        table.save(&path)?;
        self.record(path);
        Ok(table)
    }

    fn synthesizer(&self, id: SynthesizerId) -> Box<dyn SynthesizerAdapter> {
        let a = &self.config.augment;
        match a.synthesizer {
            SynthesizerKind::Mock => Box::new(MockSynthesizer::standing_in_for(id)),
            SynthesizerKind::Directory => Box::new(DirectorySynthesizer {
                id,
                dir: a.synth_dir.as_deref().expect("validated").join(id.as_str()),
            }),
            SynthesizerKind::Command => Box::new(CommandSynthesizer {
                id,
                program: PathBuf::from(&a.synth_command[0]),
                args: a.synth_command[1..].to_vec(),
            }),
        }
    }

    fn store(&self) -> Result<DirectoryStore> {
        DirectoryStore::new(self.path("audio"))
    }

    fn synthesize(
        &mut self,
        corpus: &Corpus,
        table: &BackTranslationTable,
        plans: &[AugmentationPlan],
        store: &DirectoryStore,
    ) -> Result<()> {
        for plan in plans {
            let adapter = self.synthesizer(plan.synthesizer);
            let report = materialize_plan(corpus, plan, table, adapter.as_ref(), store)?;
            let path = self.path(&format!("synth/{}.json", file_stem(&plan.name)));
            report.save(&path)?;
            self.record(path);
            let failed: Vec<_> = report.failures().collect();
            if let Some(first) = failed.first() {
                return Err(Error::Synthesis(format!(
                    "{} of {} clips failed for plan `{}`, first {}: {}",
                    failed.len(),
                    report.entries.len(),
                    plan.name,
                    first.id,
                    first.error.as_deref().unwrap_or("unknown")
                )));
            }
        }
        Ok(())
    }

    /// Base corpus plus one assembled training corpus per entry of `sets`.
    fn prepare(&mut self, sets: &[Vec<String>]) -> Result<(Corpus, PathBuf, Vec<Corpus>)> {
        let (base, root) = self.base_corpus()?;
        let all: Vec<String> = sets.iter().flatten().cloned().collect();
        let plans = union_of(&all).map_err(|e| Error::Config(e.0))?;
        if plans.is_empty() {
            return Ok((base.clone(), root, sets.iter().map(|_| base.clone()).collect()));
        }
        let table = self.back_translations(&base, &plans)?;
        let store = self.store()?;
        self.synthesize(&base, &table, &plans, &store)?;
        let mut out = Vec::with_capacity(sets.len());
        for names in sets {
            let plans = union_of(names).map_err(|e| Error::Config(e.0))?;
            out.push(assemble_fold_dataset(&base, &plans, &table, &store)?.corpus);
        }
        Ok((base, root, out))
    }

    fn features(&mut self, base: &Corpus, corpus: &Corpus, root: &Path) -> Result<FeatureTable> {
        let f = &self.config.features;
        let cache_dir = f.cache.clone().unwrap_or_else(|| self.path("features"));
        let mut extractor = FeatureExtractor::mock();
        if f.text_encoder == EncoderKind::Pretrained {
            extractor.text_encoder = Box::new(ExternalEncoder::bert_base());
        }
        if f.audio_encoder == EncoderKind::Pretrained {
            extractor.audio_encoder = Box::new(ExternalEncoder::vggish());
        }
        // the budget comes from the originals so every training set shares it
        let budget = match f.token_budget {
            Some(b) => b,
            None => compute_token_budget(base, extractor.tokenizer.as_ref())?,
        };
        extractor = extractor
            .with_cache(FeatureCache::new(&cache_dir))
            .with_token_budget(budget);
        let table = extractor.extract(corpus, &FileClips::new(Some(root)))?;
        let summary = self.path("features/summary.json");
        std::fs::create_dir_all(summary.parent().expect("has parent"))?;
        std::fs::write(
            &summary,
            serde_json::to_string_pretty(&serde_json::json!({
                "samples": table.len(),
                "token_budget": table.token_budget,
                "text_adapter": table.text_adapter,
                "audio_adapter": table.audio_adapter,
                "cache": cache_dir,
            }))?,
        )?;
        self.record(summary);
        Ok(table)
    }

    pub fn fixtures(&mut self) -> Result<()> {
        let syn = generate_synthetic_corpus(&self.config.corpus.synthetic_spec())?;
        let dir = self.path("corpus");
        syn.write_to(&dir)?;
        self.record(dir.join("manifest.jsonl"));
        let reference = self.path("reference");
        reference_fixture()?.write_to(&reference)?;
        self.record(reference);
        println!("synthetic corpus: {} originals in {}", syn.corpus.len(), dir.display());
        Ok(())
    }

    pub fn synth(&mut self) -> Result<()> {
        let (base, _) = self.base_corpus()?;
        let plans = union_of(&self.config.augment.plans).map_err(|e| Error::Config(e.0))?;
        let table = self.back_translations(&base, &plans)?;
        let store = self.store()?;
        self.synthesize(&base, &table, &plans, &store)?;
        println!("synthesized {} plan(s) into {}", plans.len(), store.root().display());
        Ok(())
    }

    pub fn augment(&mut self) -> Result<()> {
        let sets = vec![self.config.augment.plans.clone()];
        let (_, root, mut corpora) = self.prepare(&sets)?;
        let corpus = corpora.pop().expect("one set");
        // originals get absolute references so the manifest stands alone
        let originals: Vec<Utterance> = corpus
            .originals()
            .iter()
            .map(|u| Utterance {
                audio_ref: FileClips::new(Some(&root)).resolve(&u.audio_ref).to_string_lossy().into_owned(),
                ..u.clone()
            })
            .collect();
        let out = Corpus::new(originals, corpus.augmented().to_vec())?;
        let path = self.path("augmented.jsonl");
        save_manifest(&out, &path)?;
        self.record(path.clone());
        println!(
            "{} originals + {} augmented -> {}",
            out.originals().len(),
            out.augmented().len(),
            path.display()
        );
        Ok(())
    }

    pub fn extract(&mut self) -> Result<()> {
        let sets = vec![self.config.augment.plans.clone()];
        let (base, root, corpora) = self.prepare(&sets)?;
        let table = self.features(&base, &corpora[0], &root)?;
        println!("features for {} samples (token budget {})", table.len(), table.token_budget);
        Ok(())
    }

    pub fn train(&mut self) -> Result<()> {
        let sets = vec![self.config.augment.plans.clone()];
        let (base, root, corpora) = self.prepare(&sets)?;
        let table = self.features(&base, &corpora[0], &root)?;
        let inputs = InputTable::from_features(&table);
        let e = &self.config.experiment;
        let out = run_cv(&e.name, &corpora[0], &inputs, &self.config.train, e.variant, e.modality)?;
        let stem = file_stem(&e.name);
        let json = self.path(&format!("metrics/{stem}.json"));
        out.report.save(&json)?;
        let txt = self.path(&format!("metrics/{stem}.txt"));
        std::fs::write(&txt, render_report(&out.report))?;
        let history = self.path(&format!("metrics/{stem}.history.json"));
        std::fs::write(&history, serde_json::to_string_pretty(&out.histories)?)?;
        for p in [json, txt, history] {
            self.record(p);
        }
        print!("{}", render_report(&out.report));
        Ok(())
    }

    pub fn ablate(&mut self, axis: AblationAxis) -> Result<()> {
        let e = self.config.experiment.clone();
        let (base, root, table) = if axis.is_plotted() {
            let names = e.datasets_for(axis);
            let sets: Vec<Vec<String>> = names.iter().map(|n| vec![n.clone()]).collect();
            let (base, root, corpora) = self.prepare(&sets)?;
            let union = self.prepare(std::slice::from_ref(&names))?.2.pop().expect("one set");
            let features = self.features(&base, &union, &root)?;
            let datasets: Vec<(String, Corpus)> = names.into_iter().zip(corpora).collect();
            let experiments = experiments_for_axis(axis, &base, &datasets, e.variant)?;
            let inputs = InputTable::from_features(&features);
            (base, root, ablate(axis, &experiments, &inputs, &self.config.train)?)
        } else {
            let sets = vec![self.config.augment.plans.clone()];
            let (base, root, corpora) = self.prepare(&sets)?;
            let features = self.features(&base, &corpora[0], &root)?;
            let experiments = experiments_for_axis(axis, &corpora[0], &[], e.variant)?;
            let inputs = InputTable::from_features(&features);
            (base, root, ablate(axis, &experiments, &inputs, &self.config.train)?)
        };
        let _ = (base, root);
        for p in table.save(&self.path("ablation"))? {
            self.record(p);
        }
        print!("{}", table.render());
        if axis == AblationAxis::DataSize {
            let check = trend_check(&table);
            let path = self.path("ablation/data_size.trend.json");
            std::fs::write(&path, serde_json::to_string_pretty(&check)?)?;
            self.record(path);
            match check.status {
                TrendStatus::Pass => println!("trend: pass (mean F1 non-decreasing with data size)"),
                TrendStatus::Warn => println!("trend: warn (F1 dropped between {:?})", check.drops),
            }
        }
        Ok(())
    }

    pub fn report(&mut self) -> Result<()> {
        let mut printed = 0;
        let mut paths: Vec<PathBuf> = Vec::new();
        for dir in ["metrics", "ablation"] {
            if let Ok(entries) = std::fs::read_dir(self.path(dir)) {
                paths.extend(entries.filter_map(|e| e.ok().map(|e| e.path())));
            }
        }
        paths.sort();
        for p in paths {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if !name.ends_with(".json") || name.ends_with(".history.json") || name.ends_with(".trend.json") {
                continue;
            }
            if p.parent().and_then(Path::file_name) == Some("metrics".as_ref()) {
                print!("{}", render_report(&MetricsReport::load(&p)?));
            } else {
                print!("{}", ComparisonTable::load(&p)?.render());
            }
            println!();
            printed += 1;
        }
        if printed == 0 {
            return Err(Error::Empty(format!(
                "no metrics or ablation tables under {}",
                self.home.display()
            )));
        }
        Ok(())
    }
}
