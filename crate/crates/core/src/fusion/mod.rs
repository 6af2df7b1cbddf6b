//! Attention fusion of text and audio rows and the sigmoid classifier.

mod checkpoint;
mod model;
mod ops;
mod params;
mod sparse;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, tensor_names,
};
pub use model::{AttentionVariant, FusionModel, Modality, ModelInput, Trace};
pub use ops::{
    attention_weights, baseline_no_attention, bce, bce_with_logit, classify, cross_attention_block,
    dropout_mask, fuse, head_logit, mean_pool, qkv_project, scaled_dot_attention,
    self_attention_block, sigmoid, skip_pool, softmax_rows, sum_pool,
};
pub use params::{AttentionParams, ClassifierHead, FusionParams, ModelDims};
pub use sparse::CsrMatrix;

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_dims() -> ModelDims {
        ModelDims {
            text_in: 5,
            feature: 4,
            d_k: 3,
            hidden: 6,
        }
    }

    fn toy_input(seed: u64, dims: &ModelDims) -> ModelInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = Array2::from_shape_fn((3, dims.text_in), |_| rng.random_range(-1.0..1.0));
        let audio = Array2::from_shape_fn((3, dims.feature), |_| rng.random_range(-1.0..1.0));
        ModelInput::new(&text, &audio)
    }

    /// Max per-tensor relative error between analytic and central-difference
    /// gradients.
    fn gradient_error(model: &FusionModel, x: &ModelInput, mask: Option<&Array1<f64>>) -> Vec<(&'static str, f64)> {
        let label = 1.0;
        let mut analytic = model.params.zeros_like();
        model.loss_and_grad(x, label, mask, &mut analytic).unwrap();
        let h = 1e-5;
        let n_tensors = model.params.tensors().len();
        let mut out = Vec::new();
        for t in 0..n_tensors {
            let len = model.params.tensors()[t].2.len();
            let mut numeric = vec![0.0; len];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let mut plus = model.clone();
                plus.params.slices_mut()[t].1[i] += h;
                let mut minus = model.clone();
                minus.params.slices_mut()[t].1[i] -= h;
                let f = |m: &FusionModel| bce_with_logit(m.forward(x, mask).unwrap().logit, label);
                *slot = (f(&plus) - f(&minus)) / (2.0 * h);
            }
            let a = analytic.tensors()[t].2.to_vec();
            let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
            let denom = na.max(nn);
            let rel = if denom == 0.0 { 0.0 } else { diff / denom };
            out.push((model.params.tensors()[t].0, rel));
        }
        out
    }

    #[test]
    fn gradients_match_finite_differences_for_every_variant() {
        let dims = toy_dims();
        for variant in AttentionVariant::ALL {
            for modality in Modality::ALL {
                let Ok(model) = FusionModel::new(dims, variant, modality, 0.5, 11) else {
                    assert!(variant.is_cross());
                    continue;
                };
                let x = toy_input(5, &dims);
                let mask = Array1::from_vec(vec![2.0, 0.0, 2.0, 2.0, 0.0, 2.0]);
                for m in [None, Some(&mask)] {
                    for (name, err) in gradient_error(&model, &x, m) {
                        assert!(err < 1e-4, "{variant}/{modality} {name}: {err}");
                    }
                }
            }
        }
    }

    #[test]
    fn batched_gradients_match_per_sample() {
        let dims = toy_dims();
        for variant in AttentionVariant::ALL {
            for modality in Modality::ALL {
                let Ok(model) = FusionModel::new(dims, variant, modality, 0.5, 3) else {
                    continue;
                };
                let xs: Vec<ModelInput> = (0..4).map(|s| toy_input(20 + s, &dims)).collect();
                let refs: Vec<&ModelInput> = xs.iter().collect();
                let labels = [1.0, 0.0, 0.0, 1.0];
                let masks: Vec<Array1<f64>> = (0..4)
                    .map(|s| Array1::from_shape_fn(dims.hidden, |j| if (j + s) % 3 == 0 { 0.0 } else { 2.0 }))
                    .collect();
                let mut single = model.params.zeros_like();
                let mut loss = 0.0;
                for i in 0..4 {
                    loss += model.loss_and_grad(refs[i], labels[i], Some(&masks[i]), &mut single).unwrap();
                }
                let mut batched = model.params.zeros_like();
                let batch_loss = model.batch_loss_and_grad(&refs, &labels, &masks, &mut batched).unwrap();
                assert!((loss - batch_loss).abs() < 1e-12);
                for (a, b) in single.tensors().iter().zip(batched.tensors()) {
                    for (u, v) in a.2.iter().zip(b.2.iter()) {
                        assert!((u - v).abs() < 1e-12, "{variant}/{modality} {}", a.0);
                    }
                }
            }
        }
    }

    #[test]
    fn cross_needs_both_modalities() {
        assert!(FusionModel::new(toy_dims(), AttentionVariant::Cross, Modality::Text, 0.5, 1).is_err());
    }

    #[test]
    fn model_matches_composed_ops() {
        let dims = toy_dims();
        let x = toy_input(2, &dims);
        let model = FusionModel::new(dims, AttentionVariant::SelfSkip, Modality::TextAudio, 0.5, 4).unwrap();
        let p = &model.params;
        let m_t = x.text.to_dense().dot(&p.w_p);
        let m_a = x.audio.to_dense();
        let t = skip_pool(&m_t, &self_attention_block(&m_t, &p.text).unwrap()).unwrap();
        let a = skip_pool(&m_a, &self_attention_block(&m_a, &p.audio).unwrap()).unwrap();
        let prob = classify(&fuse(&t, &a).unwrap(), &p.head, None);
        assert!((model.predict(&x).unwrap() - prob).abs() < 1e-12);

        let model = FusionModel::new(dims, AttentionVariant::Cross, Modality::TextAudio, 0.5, 4).unwrap();
        let p = &model.params;
        let (tt, ta) = cross_attention_block(&m_t, &m_a, &p.text, &p.audio).unwrap();
        let prob = classify(&fuse(&sum_pool(&tt), &sum_pool(&ta)).unwrap(), &p.head, None);
        assert!((model.predict(&x).unwrap() - prob).abs() < 1e-12);
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
    }

    fn permute_rows(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn(m.dim(), |(r, c)| m[[perm[r], c]])
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(seed in any::<u64>(), n in 1usize..8, m in 1usize..8, scale in 0.1f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_matrix(n, m, &mut rng) * scale;
            for row in softmax_rows(&s).rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn self_attention_permutation_properties(seed in any::<u64>(), n in 1usize..6, d in 1usize..6, dk in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(n, d, &mut rng);
            let p = AttentionParams {
                w_q: random_matrix(d, dk, &mut rng),
                w_k: random_matrix(d, dk, &mut rng),
                w_v: random_matrix(d, dk, &mut rng),
                w_o: random_matrix(dk, d, &mut rng),
            };
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let y = self_attention_block(&m, &p).unwrap();
            let pm = permute_rows(&m, &perm);
            let py = self_attention_block(&pm, &p).unwrap();
            prop_assert!((&py - &permute_rows(&y, &perm)).iter().all(|v| v.abs() < 1e-8));
            let a = skip_pool(&m, &y).unwrap();
            let b = skip_pool(&pm, &py).unwrap();
            prop_assert!((a - b).iter().all(|v| v.abs() < 1e-8));
        }

        #[test]
        fn classify_is_a_probability(seed in any::<u64>()) {
            let dims = toy_dims();
            let model = FusionModel::new(dims, AttentionVariant::SelfSkip, Modality::TextAudio, 0.5, seed).unwrap();
            let y = model.predict(&toy_input(seed ^ 1, &dims)).unwrap();
            prop_assert!(y > 0.0 && y < 1.0);
            prop_assert!(bce(y, 1.0) >= 0.0 && bce(y, 0.0) >= 0.0);
        }
    }
}
