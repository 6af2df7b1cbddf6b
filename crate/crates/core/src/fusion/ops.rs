//! Forward-only attention, pooling and classification primitives.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{AttentionParams, ClassifierHead};
use crate::error::{Error, Result};

fn check_finite(name: &str, m: &ArrayView2<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.into()))
    }
}

fn check_cols(what: &str, m: &ArrayView2<f64>, w: &Array2<f64>) -> Result<()> {
    if m.ncols() != w.nrows() {
        return Err(Error::Shape(format!(
            "{what}: input {:?} does not conform to weights {:?}",
            m.dim(),
            w.dim()
        )));
    }
    Ok(())
}

/// `(M·W_Q, M·W_K, M·W_V)`.
pub fn qkv_project(
    m: &Array2<f64>,
    params: &AttentionParams,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    check_cols("qkv_project", &m.view(), &params.w_q)?;
    Ok((m.dot(&params.w_q), m.dot(&params.w_k), m.dot(&params.w_v)))
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(s: &Array2<f64>) -> Array2<f64> {
    let mut out = s.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Attention weights `softmax(Q·Kᵀ/√d_k)`.
pub fn attention_weights(q: &Array2<f64>, k: &Array2<f64>) -> Array2<f64> {
    let scale = (q.ncols() as f64).sqrt();
    softmax_rows(&(q.dot(&k.t()) / scale))
}

/// `softmax(Q·Kᵀ/√d_k)·V`.
pub fn scaled_dot_attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
) -> Result<Array2<f64>> {
    if q.ncols() == 0 {
        return Err(Error::Shape("d_k must be at least 1".into()));
    }
    if q.ncols() != k.ncols() || k.nrows() != v.nrows() {
        return Err(Error::Shape(format!(
            "attention shapes Q {:?}, K {:?}, V {:?} do not conform",
            q.dim(),
            k.dim(),
            v.dim()
        )));
    }
    check_finite("Q", &q.view())?;
    check_finite("K", &k.view())?;
    check_finite("V", &v.view())?;
    Ok(attention_weights(q, k).dot(v))
}

/// `Attention(M·W_Q, M·W_K, M·W_V)·W_O`.
pub fn self_attention_block(m: &Array2<f64>, params: &AttentionParams) -> Result<Array2<f64>> {
    let (q, k, v) = qkv_project(m, params)?;
    Ok(scaled_dot_attention(&q, &k, &v)?.dot(&params.w_o))
}

/// `Σ_i M_i ⊙ m̃_i`: each row of the attention output gated by its input row,
/// then summed over rows. The pooling notation also admits a row dot product
/// or a broadcast of the whole matrix; only this reading yields a single
/// feature-width vector without another reduction.
pub fn skip_pool(m: &Array2<f64>, attended: &Array2<f64>) -> Result<Array1<f64>> {
    if m.dim() != attended.dim() {
        return Err(Error::Shape(format!(
            "skip_pool needs equal shapes, got {:?} and {:?}",
            m.dim(),
            attended.dim()
        )));
    }
    Ok((m * attended).sum_axis(Axis(0)))
}

/// Row sum, the pooling used when the skip connection is disabled.
pub fn sum_pool(attended: &Array2<f64>) -> Array1<f64> {
    attended.sum_axis(Axis(0))
}

pub fn mean_pool(m: &Array2<f64>) -> Array1<f64> {
    m.mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(m.ncols()))
}

/// Queries from one modality, keys and values from the other, each direction
/// with the query modality's weights.
pub fn cross_attention_block(
    m_t: &Array2<f64>,
    m_a: &Array2<f64>,
    params_t: &AttentionParams,
    params_a: &AttentionParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let one_way = |mq: &Array2<f64>, mkv: &Array2<f64>, p: &AttentionParams| -> Result<Array2<f64>> {
        check_cols("cross attention query", &mq.view(), &p.w_q)?;
        check_cols("cross attention key", &mkv.view(), &p.w_k)?;
        let q = mq.dot(&p.w_q);
        let k = mkv.dot(&p.w_k);
        let v = mkv.dot(&p.w_v);
        Ok(scaled_dot_attention(&q, &k, &v)?.dot(&p.w_o))
    };
    Ok((one_way(m_t, m_a, params_t)?, one_way(m_a, m_t, params_a)?))
}

/// Text half first.
pub fn fuse(t: &Array1<f64>, a: &Array1<f64>) -> Result<Array1<f64>> {
    if t.len() != a.len() {
        return Err(Error::Shape(format!(
            "fuse needs equal halves, got {} and {}",
            t.len(),
            a.len()
        )));
    }
    Ok(concatenate![Axis(0), *t, *a])
}

/// Mean-pooled rows of each modality, fused.
pub fn baseline_no_attention(m_t: &Array2<f64>, m_a: &Array2<f64>) -> Result<Array1<f64>> {
    fuse(&mean_pool(m_t), &mean_pool(m_a))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverted dropout mask: each unit kept with probability `1 - rate` and
/// scaled by `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    if rate <= 0.0 {
        return Array1::ones(len);
    }
    let keep = 1.0 - rate;
    Array1::from_shape_fn(len, |_| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 })
}

/// `p · W` accumulated row by row, which keeps memory access contiguous.
pub fn vec_mat(p: &Array1<f64>, w: &Array2<f64>) -> Array1<f64> {
    assert_eq!(p.len(), w.nrows(), "vector-matrix shape mismatch");
    let mut out = Array1::zeros(w.ncols());
    for (i, &pi) in p.iter().enumerate() {
        if pi != 0.0 {
            out.scaled_add(pi, &w.row(i));
        }
    }
    out
}

/// Head logit; `mask` is a dropout mask over the dense units.
pub fn head_logit(p: &Array1<f64>, head: &ClassifierHead, mask: Option<&Array1<f64>>) -> f64 {
    let mut h = vec_mat(p, &head.dense_w) + &head.dense_b;
    h.mapv_inplace(|v| v.max(0.0));
    if let Some(mask) = mask {
        h *= mask;
    }
    h.dot(&head.out_w) + head.out_b[0]
}

/// Sigmoid probability. Dropout is applied only when a generator is given.
pub fn classify(p: &Array1<f64>, head: &ClassifierHead, dropout: Option<&mut ChaCha8Rng>) -> f64 {
    let mask = dropout.map(|rng| dropout_mask(head.dense_b.len(), head.dropout, rng));
    sigmoid(head_logit(p, head, mask.as_ref()))
}

/// Binary cross-entropy on a probability clipped away from 0 and 1.
pub fn bce(prob: f64, label: f64) -> f64 {
    let eps = 1e-12;
    let p = prob.clamp(eps, 1.0 - eps);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Binary cross-entropy computed from the logit, stable for large |z|.
pub fn bce_with_logit(z: f64, label: f64) -> f64 {
    z.max(0.0) - z * label + (-z.abs()).exp().ln_1p()
}
