//! Acceptance criteria, run in order. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.
//!
//! Criterion 8 needs the real corpus and pretrained features; set
//! `SARCASM_FUSION_REFERENCE` to a directory holding `manifest.jsonl` and a
//! feature cache under `features/` to run it.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sarcasm_fusion::audio::{AudioClip, FileClips};
use sarcasm_fusion::augment::{
    deduplicate, mock_augment, normalize, plan_texts, AugmentationPlan,
};
use sarcasm_fusion::corpus::{
    generate_synthetic_corpus, load_manifest, shuffle_labels, Language, SignalLayout, SyntheticSpec,
};
use sarcasm_fusion::features::{
    audio_to_mel, encode_text, extract_audio, BandPoolAudioEncoder, ExternalEncoder,
    FeatureCache, FeatureExtractor, HashingTokenizer, MockTextEncoder, Tokenizer,
};
use sarcasm_fusion::fusion::{
    bce_with_logit, cross_attention_block, self_attention_block, skip_pool, softmax_rows,
    AttentionParams, AttentionVariant, FusionModel, Modality, ModelDims, ModelInput,
};
use sarcasm_fusion::trainer::{
    ablate, assert_no_leakage, by_name, experiments_for_axis, make_splits, run_cv, AblationAxis,
    InputTable, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

/// Training overrides shared by the end-to-end criteria. Everything not set
/// here keeps its default.
fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        d_k: 32,
        max_epochs: 60,
        early_stop_patience: 10,
        seed,
        ..TrainConfig::default()
    }
}

// ---------------------------------------------------------------- oracles

fn naive_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let m = b.ncols();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[[i, l]] * b[[l, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

fn naive_attention(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let (n, dk) = q.dim();
    let m = k.nrows();
    let mut w = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..dk {
                s += q[[i, l]] * k[[j, l]];
            }
            w[[i, j]] = s / (dk as f64).sqrt();
        }
        let total: f64 = (0..m).map(|j| w[[i, j]].exp()).sum();
        for j in 0..m {
            w[[i, j]] = w[[i, j]].exp() / total;
        }
    }
    naive_matmul(&w, v)
}

fn naive_block(mq: &Array2<f64>, mkv: &Array2<f64>, p: &AttentionParams) -> Array2<f64> {
    let q = naive_matmul(mq, &p.w_q);
    let k = naive_matmul(mkv, &p.w_k);
    let v = naive_matmul(mkv, &p.w_v);
    naive_matmul(&naive_attention(&q, &k, &v), &p.w_o)
}

fn naive_skip_pool(m: &Array2<f64>, y: &Array2<f64>) -> Array1<f64> {
    let (n, d) = m.dim();
    let mut out = Array1::zeros(d);
    for c in 0..d {
        for r in 0..n {
            out[c] += m[[r, c]] * y[[r, c]];
        }
    }
    out
}

fn max_abs_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
}

fn random_params(d: usize, dk: usize, rng: &mut ChaCha8Rng) -> AttentionParams {
    AttentionParams {
        w_q: random_matrix(d, dk, rng),
        w_k: random_matrix(d, dk, rng),
        w_v: random_matrix(d, d, rng),
        w_o: random_matrix(d, d, rng),
    }
}

fn permute_rows(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(m.dim(), |(r, c)| m[[perm[r], c]])
}

// --------------------------------------------------------------- criteria

fn dataset_arithmetic() -> Outcome {
    let (corpus, table) = common::replay_reference();
    let mut per_pivot = Vec::new();
    for pivot in Language::PIVOTS {
        let plan = AugmentationPlan::new("one", vec![pivot], sarcasm_fusion::corpus::SynthesizerId::Mock, vec!["v".into()])
            .expect("valid plan");
        per_pivot.push(plan_texts(&corpus, &plan, &table).expect("plan texts").items.len());
    }
    let main_sum: usize = per_pivot[..4].iter().sum();
    let mut sizes = Vec::new();
    for (_, plans) in common::table_plans() {
        let asm = common::assemble(&corpus, &table, &plans);
        sizes.push((asm.corpus.augmented().len(), asm.corpus.len()));
    }
    let pass = per_pivot == [544, 596, 476, 476, 632]
        && main_sum == 2_092
        && sizes
            == [
                (2_528, 3_218),
                (2_092, 2_782),
                (2_092, 2_782),
                (8_368, 9_058),
                (10_460, 11_150),
            ];
    Outcome::new(
        pass,
        format!("unique per pivot {per_pivot:?}, main sum {main_sum}, (augmented, total) {sizes:?}"),
    )
}

fn attention_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2_024);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n_t = rng.random_range(1..=5);
        let n_a = rng.random_range(1..=5);
        let d = rng.random_range(1..=6);
        let dk = rng.random_range(1..=6);
        let m_t = random_matrix(n_t, d, &mut rng);
        let m_a = random_matrix(n_a, d, &mut rng);
        let p_t = random_params(d, dk, &mut rng);
        let p_a = random_params(d, dk, &mut rng);

        let y = self_attention_block(&m_t, &p_t).expect("self attention");
        let oracle = naive_block(&m_t, &m_t, &p_t);
        worst = worst.max(max_abs_diff(&y, &oracle));

        let pooled = skip_pool(&m_t, &y).expect("skip pool");
        worst = worst.max(max_abs_diff(&pooled, &naive_skip_pool(&m_t, &oracle)));

        let (t, a) = cross_attention_block(&m_t, &m_a, &p_t, &p_a).expect("cross attention");
        worst = worst.max(max_abs_diff(&t, &naive_block(&m_t, &m_a, &p_t)));
        worst = worst.max(max_abs_diff(&a, &naive_block(&m_a, &m_t, &p_a)));
    }
    Outcome::new(worst <= 1e-10, format!("200 instances, max |diff| {worst:.3e} (tol 1e-10)"))
}

fn gradient_check() -> Outcome {
    let dims = ModelDims {
        text_in: 4,
        feature: 4,
        d_k: 3,
        hidden: 5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let text = random_matrix(3, 4, &mut rng);
    let audio = random_matrix(3, 4, &mut rng);
    let x = ModelInput::new(&text, &audio);
    let model = FusionModel::new(dims, AttentionVariant::SelfSkip, Modality::TextAudio, 0.5, 17)
        .expect("model");
    let mask = Array1::from_vec(vec![2.0, 0.0, 2.0, 2.0, 0.0]);
    let label = 1.0;

    let mut analytic = model.params.zeros_like();
    model
        .loss_and_grad(&x, label, Some(&mask), &mut analytic)
        .expect("gradient");
    let loss = |m: &FusionModel| bce_with_logit(m.forward(&x, Some(&mask)).expect("forward").logit, label);
    let h = 1e-5;
    let mut worst = (0.0f64, "");
    let n_tensors = model.params.tensors().len();
    for t in 0..n_tensors {
        let (name, _, a) = analytic.tensors()[t].clone();
        let mut numeric = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let mut plus = model.clone();
            plus.params.slices_mut()[t].1[i] += h;
            let mut minus = model.clone();
            minus.params.slices_mut()[t].1[i] -= h;
            numeric.push((loss(&plus) - loss(&minus)) / (2.0 * h));
        }
        let diff = a.iter().zip(&numeric).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let scale = a
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|v| v * v).sum::<f64>().sqrt());
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        if rel >= worst.0 {
            worst = (rel, name);
        }
    }
    Outcome::new(
        worst.0 < 1e-4,
        format!("{n_tensors} tensors, worst relative error {:.3e} on {} (tol 1e-4)", worst.0, worst.1),
    )
}

fn invariant_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut failures: Vec<String> = Vec::new();

    // softmax rows
    let mut softmax_err = 0.0f64;
    for _ in 0..500 {
        let scale = rng.random_range(0.01..1_000.0);
        let s = random_matrix(rng.random_range(1..8), rng.random_range(1..8), &mut rng) * scale;
        for row in softmax_rows(&s).rows() {
            softmax_err = softmax_err.max((row.sum() - 1.0).abs());
        }
    }
    if softmax_err > 1e-6 {
        failures.push(format!("softmax row sum off by {softmax_err:.2e}"));
    }

    // permutations
    let mut perm_err = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=6);
        let dk = rng.random_range(1..=4);
        let m = random_matrix(n, d, &mut rng);
        let other = random_matrix(rng.random_range(1..=6), d, &mut rng);
        let p = random_params(d, dk, &mut rng);
        let q = random_params(d, dk, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let pm = permute_rows(&m, &perm);

        let y = self_attention_block(&m, &p).expect("self attention");
        let py = self_attention_block(&pm, &p).expect("self attention");
        perm_err = perm_err.max(max_abs_diff(&py, &permute_rows(&y, &perm)));
        let pooled = skip_pool(&m, &y).expect("skip pool");
        let ppooled = skip_pool(&pm, &py).expect("skip pool");
        perm_err = perm_err.max(max_abs_diff(&pooled, &ppooled));

        // permuting the key/value side leaves the query side unchanged
        let (t, a) = cross_attention_block(&other, &m, &q, &p).expect("cross attention");
        let (pt, pa) = cross_attention_block(&other, &pm, &q, &p).expect("cross attention");
        perm_err = perm_err.max(max_abs_diff(&t, &pt));
        perm_err = perm_err.max(max_abs_diff(&pa, &permute_rows(&a, &perm)));
    }
    if perm_err > 1e-10 {
        failures.push(format!("permutation property off by {perm_err:.2e}"));
    }

    // shape totality
    let words = ["oh", "great", "another", "meeting", "i", "love", "it", "really", "!"];
    for _ in 0..40 {
        let n_words = rng.random_range(0..60);
        let text: Vec<&str> = (0..n_words).map(|_| words[rng.random_range(0..words.len())]).collect();
        let budget = rng.random_range(2..64);
        let tokens = HashingTokenizer.tokenize(&text.join(" "), budget).expect("tokenize");
        let f = encode_text(&tokens, &MockTextEncoder).expect("encode text");
        if f.matrix().dim() != (20, 768) {
            failures.push(format!("text features {:?}", f.matrix().dim()));
        }
    }
    for _ in 0..20 {
        let rate = [8_000, 16_000, 22_050, 44_100][rng.random_range(0..4)];
        let n = rng.random_range(1..(rate as usize * 3));
        let samples: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let clip = AudioClip::new(samples, rate).expect("clip");
        let f = extract_audio(&clip, &BandPoolAudioEncoder).expect("extract audio");
        if f.matrix().dim() != (24, 512) || !f.matrix().iter().all(|v| v.is_finite()) {
            failures.push(format!("audio features {:?} for {n} samples at {rate} Hz", f.matrix().dim()));
        }
    }

    // mel frame count: 25 ms window, 10 ms hop at 16 kHz
    for _ in 0..100 {
        let n = rng.random_range(400..80_000);
        let clip = AudioClip::new(vec![0.1; n], 16_000).expect("clip");
        let frames = audio_to_mel(&clip).expect("mel").n_frames();
        let expected = 1 + (n - 400) / 160;
        if frames != expected {
            failures.push(format!("{n} samples gave {frames} frames, expected {expected}"));
        }
    }

    // dedup idempotence and stability
    let pool = ["Oh great.", "oh great", "OH GREAT!", "Sure, fine.", "sure, fine", "Whatever you say."];
    for _ in 0..200 {
        let original = pool[rng.random_range(0..pool.len())];
        let candidates: Vec<(Language, String)> = Language::PIVOTS
            .iter()
            .map(|&l| (l, pool[rng.random_range(0..pool.len())].to_string()))
            .collect();
        let once = deduplicate(original, &candidates);
        let twice = deduplicate(original, &once);
        let mut it = candidates.iter();
        let ordered = once.iter().all(|kept| it.any(|c| c == kept));
        let mut norms: Vec<String> = once.iter().map(|(_, t)| normalize(t)).collect();
        let distinct = {
            let before = norms.len();
            norms.sort();
            norms.dedup();
            norms.len() == before
        };
        let fresh = once.iter().all(|(_, t)| normalize(t) != normalize(original));
        if once != twice || !ordered || !distinct || !fresh {
            failures.push(format!("dedup misbehaved on {original:?} / {candidates:?}"));
        }
    }

    // leakage guard on the fully augmented reference set
    let (corpus, table) = common::replay_reference();
    let asm = common::assemble(&corpus, &table, &AugmentationPlan::twenty_fold());
    let splits = make_splits(&asm.corpus).expect("splits");
    let augmented: std::collections::HashSet<&str> =
        asm.corpus.augmented().iter().map(|a| a.id.as_str()).collect();
    let leaked = splits
        .iter()
        .flat_map(|s| &s.test_ids)
        .filter(|id| augmented.contains(id.as_str()))
        .count();
    if leaked > 0 || assert_no_leakage(&asm.corpus, &splits).is_err() {
        failures.push(format!("{leaked} augmented ids in test sets"));
    }

    let detail = if failures.is_empty() {
        format!(
            "softmax max err {softmax_err:.1e}, permutation max err {perm_err:.1e}, shapes, 100 frame counts, dedup, leakage over {} augmented ids",
            augmented.len()
        )
    } else {
        failures.join("; ")
    };
    Outcome::new(failures.is_empty(), detail)
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let syn = generate_synthetic_corpus(&SyntheticSpec::new(400, 7, 0.9)).expect("corpus");
    let feats = FeatureExtractor::mock().extract(&syn.corpus, &syn.clips).expect("features");
    let inputs = InputTable::from_features(&feats);
    let cfg = desk_config(0);
    let real = run_cv("separable", &syn.corpus, &inputs, &cfg, AttentionVariant::SelfSkip, Modality::TextAudio)
        .expect("cv");
    let shuffled_corpus = shuffle_labels(&syn.corpus, 99).expect("shuffle");
    let shuffled = run_cv("shuffled", &shuffled_corpus, &inputs, &cfg, AttentionVariant::SelfSkip, Modality::TextAudio)
        .expect("cv");
    let elapsed = start.elapsed();
    let (f1, f1_shuffled) = (real.report.mean_f1, shuffled.report.mean_f1);
    Outcome::new(
        f1 >= 95.0 && (40.0..=60.0).contains(&f1_shuffled) && within(elapsed, 300),
        format!(
            "mean F1 {f1:.2} (need >= 95.0), shuffled {f1_shuffled:.2} (need 40..60), {:.0} s (limit 300)",
            elapsed.as_secs_f64()
        ),
    )
}

fn augmentation_trend() -> Outcome {
    let start = Instant::now();
    let (mut none, mut four) = (Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let syn = generate_synthetic_corpus(&SyntheticSpec::new(200, 100 + seed, 0.6)).expect("corpus");
        let plan = AugmentationPlan::mock_scaled(1).expect("plan");
        let (asm, mut clips) = mock_augment(&syn.corpus, &[plan]).expect("augment");
        clips.extend(syn.clips.clone());
        let feats = FeatureExtractor::mock().extract(&asm.corpus, &clips).expect("features");
        let inputs = InputTable::from_features(&feats);
        let cfg = desk_config(seed);
        let run = |corpus| {
            run_cv("x", corpus, &inputs, &cfg, AttentionVariant::SelfSkip, Modality::TextAudio)
                .expect("cv")
                .report
                .mean_f1
        };
        none.push(run(&syn.corpus));
        four.push(run(&asm.corpus));
    }
    let elapsed = start.elapsed();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m0, m4) = (mean(&none), mean(&four));
    Outcome::new(
        m4 >= m0 && within(elapsed, 600),
        format!(
            "mean F1 over 5 seeds: none {m0:.2}, 4x {m4:.2} (need 4x >= none); per seed none {none:.1?}, 4x {four:.1?}; {:.0} s (limit 600)",
            elapsed.as_secs_f64()
        ),
    )
}

fn fusion_benefit() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec::new(200, 21, 1.0).with_layout(SignalLayout::Complementary);
    let syn = generate_synthetic_corpus(&spec).expect("corpus");
    let feats = FeatureExtractor::mock().extract(&syn.corpus, &syn.clips).expect("features");
    let inputs = InputTable::from_features(&feats);
    let experiments = experiments_for_axis(AblationAxis::Modality, &syn.corpus, &[], AttentionVariant::SelfAttention)
        .expect("experiments");
    let table = ablate(AblationAxis::Modality, &experiments, &inputs, &desk_config(0)).expect("ablation");
    let elapsed = start.elapsed();
    let rows = by_name(&table);
    let f1 = |m: Modality| rows[m.as_str()].mean_f1;
    let (a, t, ta) = (f1(Modality::Audio), f1(Modality::Text), f1(Modality::TextAudio));
    Outcome::new(
        ta >= a.max(t) + 5.0 && within(elapsed, 300),
        format!(
            "text+audio {ta:.2}, audio {a:.2}, text {t:.2} (need fusion >= best single + 5); {:.0} s (limit 300)",
            elapsed.as_secs_f64()
        ),
    )
}

fn reference_baseline() -> Option<Outcome> {
    let dir = PathBuf::from(std::env::var_os("SARCASM_FUSION_REFERENCE")?);
    let run = || -> sarcasm_fusion::Result<f64> {
        let corpus = load_manifest(&dir.join("manifest.jsonl"))?.originals_only();
        let extractor = FeatureExtractor {
            tokenizer: Box::new(HashingTokenizer),
            text_encoder: Box::new(ExternalEncoder::bert_base()),
            audio_encoder: Box::new(ExternalEncoder::vggish()),
            cache: Some(FeatureCache::new(dir.join("features"))),
            token_budget: Some(20),
        };
        let feats = extractor.extract(&corpus, &FileClips::new(Some(dir.as_path())))?;
        let inputs = InputTable::from_features(&feats);
        let cfg = TrainConfig::default();
        Ok(run_cv("baseline", &corpus, &inputs, &cfg, AttentionVariant::Baseline, Modality::TextAudio)?
            .report
            .mean_f1)
    };
    Some(match run() {
        Ok(f1) => Outcome::new((f1 - 68.10).abs() <= 4.0, format!("mean F1 {f1:.2} (need 68.10 +/- 4.0)")),
        Err(e) => Outcome::new(false, format!("run failed: {e}")),
    })
}

type Criterion = (u8, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "dataset arithmetic", dataset_arithmetic),
        (2, "attention oracle", attention_oracle),
        (3, "gradient check", gradient_check),
        (4, "invariant suite", invariant_suite),
        (5, "synthetic end-to-end", synthetic_end_to_end),
        (6, "augmentation trend", augmentation_trend),
        (7, "fusion benefit", fusion_benefit),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} criterion {id} ({name}): {} [{:.1} s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    match reference_baseline() {
        Some(outcome) => {
            if !outcome.pass {
                failed += 1;
            }
            println!(
                "{} criterion 8 (reference baseline, optional): {}",
                if outcome.pass { "PASS" } else { "FAIL" },
                outcome.detail
            );
        }
        None => println!(
            "SKIP criterion 8 (reference baseline, optional): SARCASM_FUSION_REFERENCE not set"
        ),
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
