//! The trainable fusion classifier with hand-derived gradients.

use std::fmt;
use std::str::FromStr;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::ops::{attention_weights, mean_pool, sigmoid, vec_mat};
use super::params::{AttentionParams, FusionParams, ModelDims};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::features::SampleFeatures;

/// How each modality's rows become one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttentionVariant {
    /// Mean-pool the rows, no attention.
    #[serde(rename = "baseline")]
    Baseline,
    /// Self-attention, sum-pooled.
    #[serde(rename = "self")]
    SelfAttention,
    /// Self-attention, skip-pooled with the input rows.
    #[serde(rename = "self+skip")]
    SelfSkip,
    #[serde(rename = "cross")]
    Cross,
    #[serde(rename = "cross+skip")]
    CrossSkip,
}

impl AttentionVariant {
    pub const ALL: [AttentionVariant; 5] = [
        AttentionVariant::Baseline,
        AttentionVariant::SelfAttention,
        AttentionVariant::SelfSkip,
        AttentionVariant::Cross,
        AttentionVariant::CrossSkip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionVariant::Baseline => "baseline",
            AttentionVariant::SelfAttention => "self",
            AttentionVariant::SelfSkip => "self+skip",
            AttentionVariant::Cross => "cross",
            AttentionVariant::CrossSkip => "cross+skip",
        }
    }

    pub fn uses_attention(self) -> bool {
        self != AttentionVariant::Baseline
    }

    pub fn is_cross(self) -> bool {
        matches!(self, AttentionVariant::Cross | AttentionVariant::CrossSkip)
    }

    pub fn skip(self) -> bool {
        matches!(self, AttentionVariant::SelfSkip | AttentionVariant::CrossSkip)
    }

    /// The same attention kind with the skip connection switched.
    pub fn with_skip(self, skip: bool) -> Self {
        match (self, skip) {
            (AttentionVariant::SelfAttention | AttentionVariant::SelfSkip, true) => {
                AttentionVariant::SelfSkip
            }
            (AttentionVariant::SelfAttention | AttentionVariant::SelfSkip, false) => {
                AttentionVariant::SelfAttention
            }
            (AttentionVariant::Cross | AttentionVariant::CrossSkip, true) => {
                AttentionVariant::CrossSkip
            }
            (AttentionVariant::Cross | AttentionVariant::CrossSkip, false) => {
                AttentionVariant::Cross
            }
            (AttentionVariant::Baseline, _) => AttentionVariant::Baseline,
        }
    }
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown attention variant `{s}` (expected baseline, self, self+skip, cross or cross+skip)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "audio")]
    Audio,
    #[serde(rename = "text")]
    Text,
    #[serde(rename = "text+audio")]
    TextAudio,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Text, Modality::TextAudio];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Text => "text",
            Modality::TextAudio => "text+audio",
        }
    }

    pub fn has_text(self) -> bool {
        self != Modality::Audio
    }

    pub fn has_audio(self) -> bool {
        self != Modality::Text
    }

    pub fn count(self) -> usize {
        if self == Modality::TextAudio {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!("unknown modality `{s}` (expected audio, text or text+audio)"))
            })
    }
}

/// One sample's encoder outputs, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub text: CsrMatrix,
    pub audio: CsrMatrix,
    audio_dense: Array2<f64>,
}

impl ModelInput {
    pub fn new(text: &Array2<f64>, audio: &Array2<f64>) -> Self {
        Self {
            text: CsrMatrix::from_dense(text.view()),
            audio: CsrMatrix::from_dense(audio.view()),
            audio_dense: audio.clone(),
        }
    }

    pub fn from_features(f: &SampleFeatures) -> Self {
        Self::new(f.text.matrix(), f.audio.matrix())
    }
}

/// Row source of an attention projection: dense, or sparse input rows.
#[derive(Clone, Copy)]
enum Rows<'a> {
    Dense(&'a Array2<f64>),
    Sparse(&'a CsrMatrix),
}

impl Rows<'_> {
    fn dot(self, w: &Array2<f64>) -> Array2<f64> {
        match self {
            Rows::Dense(m) => m.dot(w),
            Rows::Sparse(m) => m.dot(w),
        }
    }

    /// `acc += rowsᵀ · d`.
    fn t_dot_acc(self, d: &Array2<f64>, acc: &mut Array2<f64>) {
        match self {
            Rows::Dense(m) => general_mat_mul(1.0, &m.t(), d, 1.0, acc),
            Rows::Sparse(m) => m.t_dot_acc(d, acc),
        }
    }
}

#[derive(Debug, Clone)]
struct AttnTrace {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    w: Array2<f64>,
    a: Array2<f64>,
    y: Array2<f64>,
}

fn attend(query: Rows, kv: Rows, p: &AttentionParams) -> AttnTrace {
    let q = query.dot(&p.w_q);
    let k = kv.dot(&p.w_k);
    let v = kv.dot(&p.w_v);
    let w = attention_weights(&q, &k);
    let a = w.dot(&v);
    let y = a.dot(&p.w_o);
    AttnTrace { q, k, v, w, a, y }
}

/// Accumulates parameter gradients for one attention pass and returns
/// `(dQuery, dKeyValue)` with respect to the projected rows' inputs, computed
#[allow(clippy::too_many_arguments)]
/// only when requested.
fn attend_backward(
    t: &AttnTrace,
    dy: &Array2<f64>,
    query: Rows,
    kv: Rows,
    p: &AttentionParams,
    g: &mut AttentionParams,
    want_dquery: bool,
    want_dkv: bool,
) -> (Option<Array2<f64>>, Option<Array2<f64>>) {
    general_mat_mul(1.0, &t.a.t(), dy, 1.0, &mut g.w_o);
    let da = dy.dot(&p.w_o.t());
    let dw = da.dot(&t.v.t());
    let dv = t.w.t().dot(&da);
    let row_dot = (&dw * &t.w).sum_axis(Axis(1)).insert_axis(Axis(1));
    let scale = (t.q.ncols() as f64).sqrt();
    let ds = &t.w * &(&dw - &row_dot) / scale;
    let dq = ds.dot(&t.k);
    let dk = ds.t().dot(&t.q);
    query.t_dot_acc(&dq, &mut g.w_q);
    kv.t_dot_acc(&dk, &mut g.w_k);
    kv.t_dot_acc(&dv, &mut g.w_v);
    let dquery = want_dquery.then(|| dq.dot(&p.w_q.t()));
    let dkv = want_dkv.then(|| dk.dot(&p.w_k.t()) + dv.dot(&p.w_v.t()));
    (dquery, dkv)
}

#[derive(Debug, Clone)]
struct Branch {
    attn: Option<AttnTrace>,
    pooled: Array1<f64>,
}

/// Everything below the dense head.
#[derive(Debug, Clone)]
struct Encoded {
    m_t: Option<Array2<f64>>,
    text: Option<Branch>,
    audio: Option<Branch>,
    p: Array1<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    enc: Encoded,
    pre: Array1<f64>,
    h: Array1<f64>,
    mask: Option<Array1<f64>>,
    pub logit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub dims: ModelDims,
    pub variant: AttentionVariant,
    pub modality: Modality,
    pub params: FusionParams,
}

impl FusionModel {
    pub fn new(
        dims: ModelDims,
        variant: AttentionVariant,
        modality: Modality,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        if variant.is_cross() && modality != Modality::TextAudio {
            return Err(Error::Config(format!(
                "{variant} attention needs both modalities, got {modality}"
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {dropout}")));
        }
        let head_input = dims.feature * modality.count();
        Ok(Self {
            dims,
            variant,
            modality,
            params: FusionParams::init(&dims, head_input, dropout, seed),
        })
    }

    fn check_input(&self, x: &ModelInput) -> Result<()> {
        if self.modality.has_text() && x.text.ncols() != self.dims.text_in {
            return Err(Error::Shape(format!(
                "text rows are {} wide, model expects {}",
                x.text.ncols(),
                self.dims.text_in
            )));
        }
        if self.modality.has_audio() && x.audio.ncols() != self.dims.feature {
            return Err(Error::Shape(format!(
                "audio rows are {} wide, model expects {}",
                x.audio.ncols(),
                self.dims.feature
            )));
        }
        Ok(())
    }

    fn pool(&self, m: &Array2<f64>, attn: Option<&AttnTrace>) -> Array1<f64> {
        match attn {
            None => mean_pool(m),
            Some(t) if self.variant.skip() => (m * &t.y).sum_axis(Axis(0)),
            Some(t) => t.y.sum_axis(Axis(0)),
        }
    }

    /// Forward pass; `mask` is a dropout mask over the dense units.
    pub fn forward(&self, x: &ModelInput, mask: Option<&Array1<f64>>) -> Result<Trace> {
        let enc = self.encode(x)?;
        let head = &self.params.head;
        let pre = vec_mat(&enc.p, &head.dense_w) + &head.dense_b;
        let mut h = pre.mapv(|v| v.max(0.0));
        if let Some(mask) = mask {
            h *= mask;
        }
        let logit = h.dot(&head.out_w) + head.out_b[0];
        if !logit.is_finite() {
            return Err(Error::NonFinite("logit".into()));
        }
        Ok(Trace {
            enc,
            pre,
            h,
            mask: mask.cloned(),
            logit,
        })
    }

    fn encode(&self, x: &ModelInput) -> Result<Encoded> {
        self.check_input(x)?;
        let params = &self.params;
        let m_t = self.modality.has_text().then(|| x.text.dot(&params.w_p));
        let m_a = &x.audio_dense;
        let a_rows = Rows::Sparse(&x.audio);

        let (text, audio) = match self.variant {
            AttentionVariant::Baseline => (
                m_t.as_ref().map(|m| Branch {
                    attn: None,
                    pooled: mean_pool(m),
                }),
                self.modality.has_audio().then(|| Branch {
                    attn: None,
                    pooled: mean_pool(m_a),
                }),
            ),
            AttentionVariant::SelfAttention | AttentionVariant::SelfSkip => {
                let text = m_t.as_ref().map(|m| {
                    let t = attend(Rows::Dense(m), Rows::Dense(m), &params.text);
                    Branch {
                        pooled: self.pool(m, Some(&t)),
                        attn: Some(t),
                    }
                });
                let audio = self.modality.has_audio().then(|| {
                    let t = attend(a_rows, a_rows, &params.audio);
                    Branch {
                        pooled: self.pool(m_a, Some(&t)),
                        attn: Some(t),
                    }
                });
                (text, audio)
            }
            AttentionVariant::Cross | AttentionVariant::CrossSkip => {
                let m = m_t.as_ref().expect("cross attention has text");
                let tt = attend(Rows::Dense(m), a_rows, &params.text);
                let ta = attend(a_rows, Rows::Dense(m), &params.audio);
                (
                    Some(Branch {
                        pooled: self.pool(m, Some(&tt)),
                        attn: Some(tt),
                    }),
                    Some(Branch {
                        pooled: self.pool(m_a, Some(&ta)),
                        attn: Some(ta),
                    }),
                )
            }
        };

        let parts: Vec<_> = [&text, &audio]
            .into_iter()
            .flatten()
            .map(|b| b.pooled.view())
            .collect();
        let p = ndarray::concatenate(Axis(0), &parts)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Encoded { m_t, text, audio, p })
    }

    pub fn logit(&self, x: &ModelInput) -> Result<f64> {
        Ok(self.forward(x, None)?.logit)
    }

    /// Inference probability, dropout off.
    pub fn predict(&self, x: &ModelInput) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    /// Adds `dL/dθ` to `grads` given `dz = dL/dlogit`.
    pub fn backward(&self, x: &ModelInput, trace: &Trace, dz: f64, grads: &mut FusionParams) {
        let head = &self.params.head;
        let g = &mut grads.head;
        g.out_w.scaled_add(dz, &trace.h);
        g.out_b[0] += dz;
        let mut dpre = &head.out_w * dz;
        if let Some(mask) = &trace.mask {
            dpre *= mask;
        }
        dpre.zip_mut_with(&trace.pre, |d, &z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        g.dense_b += &dpre;
        for (i, &pi) in trace.enc.p.iter().enumerate() {
            if pi != 0.0 {
                g.dense_w.row_mut(i).scaled_add(pi, &dpre);
            }
        }
        let dp = head.dense_w.dot(&dpre);
        self.encoder_backward(x, &trace.enc, dp, grads);
    }

    /// Gradients below the head given `dp = dL/dp` for the fused vector.
    fn encoder_backward(&self, x: &ModelInput, enc: &Encoded, dp: Array1<f64>, grads: &mut FusionParams) {
        let params = &self.params;
        let f = self.dims.feature;
        let (ds_t, ds_a) = match self.modality {
            Modality::TextAudio => (
                Some(dp.slice(ndarray::s![..f]).to_owned()),
                Some(dp.slice(ndarray::s![f..]).to_owned()),
            ),
            Modality::Text => (Some(dp), None),
            Modality::Audio => (None, Some(dp)),
        };

        let m_a = &x.audio_dense;
        let a_rows = Rows::Sparse(&x.audio);
        // gradient w.r.t. the projected text rows
        let mut dm_t = enc.m_t.as_ref().map(|m| Array2::<f64>::zeros(m.dim()));

        // pooled-vector gradient to (direct dM, dm̃)
        let unpool = |m: &Array2<f64>, branch: &Branch, ds: &Array1<f64>| {
            let dsr = ds.view().insert_axis(Axis(0));
            let rows = m.nrows() as f64;
            match &branch.attn {
                None => (Some(Array2::from_shape_fn(m.dim(), |(_, j)| ds[j] / rows)), None),
                Some(t) if self.variant.skip() => (Some(&t.y * &dsr), Some(m * &dsr)),
                Some(t) => (None, Some(Array2::from_shape_fn(t.y.dim(), |(_, j)| ds[j]))),
            }
        };

        let mut text_dy = None;
        let mut audio_dy = None;
        if let (Some(branch), Some(ds)) = (&enc.text, &ds_t) {
            let m = enc.m_t.as_ref().expect("text branch has rows");
            let (direct, dy) = unpool(m, branch, ds);
            if let Some(d) = direct {
                *dm_t.as_mut().expect("text gradient buffer") += &d;
            }
            text_dy = dy;
        }
        if let (Some(branch), Some(ds)) = (&enc.audio, &ds_a) {
            // the audio rows are inputs: only the attention weights need gradients
            audio_dy = unpool(m_a, branch, ds).1;
        }

        let want_text = dm_t.is_some();
        match self.variant {
            AttentionVariant::Baseline => {}
            AttentionVariant::SelfAttention | AttentionVariant::SelfSkip => {
                if let (Some(t), Some(dy)) = (enc.text.as_ref().and_then(|b| b.attn.as_ref()), &text_dy) {
                    let m = enc.m_t.as_ref().expect("text rows");
                    let rows = Rows::Dense(m);
                    let (dq, dkv) =
                        attend_backward(t, dy, rows, rows, &params.text, &mut grads.text, true, true);
                    let dm = dm_t.as_mut().expect("text gradient buffer");
                    *dm += &dq.expect("requested");
                    *dm += &dkv.expect("requested");
                }
                if let (Some(t), Some(dy)) = (enc.audio.as_ref().and_then(|b| b.attn.as_ref()), &audio_dy) {
                    attend_backward(t, dy, a_rows, a_rows, &params.audio, &mut grads.audio, false, false);
                }
            }
            AttentionVariant::Cross | AttentionVariant::CrossSkip => {
                let m = enc.m_t.as_ref().expect("text rows");
                let rows = Rows::Dense(m);
                if let (Some(t), Some(dy)) = (enc.text.as_ref().and_then(|b| b.attn.as_ref()), &text_dy) {
                    let (dq, _) =
                        attend_backward(t, dy, rows, a_rows, &params.text, &mut grads.text, want_text, false);
                    *dm_t.as_mut().expect("text gradient buffer") += &dq.expect("requested");
                }
                if let (Some(t), Some(dy)) = (enc.audio.as_ref().and_then(|b| b.attn.as_ref()), &audio_dy) {
                    let (_, dkv) =
                        attend_backward(t, dy, a_rows, rows, &params.audio, &mut grads.audio, false, want_text);
                    *dm_t.as_mut().expect("text gradient buffer") += &dkv.expect("requested");
                }
            }
        }

        if let Some(dm) = &dm_t {
            x.text.t_dot_acc(dm, &mut grads.w_p);
        }
    }

    /// Logit-form binary cross-entropy for one sample; gradients are added
    /// to `grads`.
    pub fn loss_and_grad(
        &self,
        x: &ModelInput,
        label: f64,
        mask: Option<&Array1<f64>>,
        grads: &mut FusionParams,
    ) -> Result<f64> {
        let trace = self.forward(x, mask)?;
        let z = trace.logit;
        self.backward(x, &trace, sigmoid(z) - label, grads);
        Ok(super::ops::bce_with_logit(z, label))
    }

    /// Summed loss over a minibatch with gradients added to `grads`. Same
    /// result as calling [`loss_and_grad`](Self::loss_and_grad) per sample,
    /// but the dense head runs as matrix products over the whole batch.
    pub fn batch_loss_and_grad(
        &self,
        xs: &[&ModelInput],
        labels: &[f64],
        masks: &[Array1<f64>],
        grads: &mut FusionParams,
    ) -> Result<f64> {
        if xs.len() != labels.len() || xs.len() != masks.len() {
            return Err(Error::Shape(format!(
                "batch of {} inputs, {} labels, {} masks",
                xs.len(),
                labels.len(),
                masks.len()
            )));
        }
        if xs.is_empty() {
            return Ok(0.0);
        }
        let encs: Vec<Encoded> = xs.iter().map(|x| self.encode(x)).collect::<Result<_>>()?;
        let head = &self.params.head;
        let (b, width) = (xs.len(), head.dense_b.len());
        let mut p = Array2::<f64>::zeros((b, encs[0].p.len()));
        for (mut row, enc) in p.rows_mut().into_iter().zip(&encs) {
            row.assign(&enc.p);
        }
        let mut pre = Array2::<f64>::zeros((b, width));
        pre.rows_mut().into_iter().for_each(|mut r| r.assign(&head.dense_b));
        general_mat_mul(1.0, &p, &head.dense_w, 1.0, &mut pre);

        let mut loss = 0.0;
        let mut dpre = Array2::<f64>::zeros((b, width));
        let g = &mut grads.head;
        for i in 0..b {
            let (pre_i, mask) = (pre.row(i), &masks[i]);
            let h = Array1::from_shape_fn(width, |j| pre_i[j].max(0.0) * mask[j]);
            let z = h.dot(&head.out_w) + head.out_b[0];
            if !z.is_finite() {
                return Err(Error::NonFinite("logit".into()));
            }
            let dz = sigmoid(z) - labels[i];
            loss += super::ops::bce_with_logit(z, labels[i]);
            g.out_w.scaled_add(dz, &h);
            g.out_b[0] += dz;
            let mut d = dpre.row_mut(i);
            for j in 0..width {
                d[j] = if pre_i[j] > 0.0 { head.out_w[j] * dz * mask[j] } else { 0.0 };
            }
        }
        g.dense_b += &dpre.sum_axis(Axis(0));
        general_mat_mul(1.0, &p.t(), &dpre, 1.0, &mut g.dense_w);
        let dp = dpre.dot(&head.dense_w.t());
        for ((x, enc), dp) in xs.iter().zip(&encs).zip(dp.rows()) {
            self.encoder_backward(x, enc, dp.to_owned(), grads);
        }
        Ok(loss)
    }
}
