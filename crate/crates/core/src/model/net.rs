//! Encoder–decoder transformer with hand-written backpropagation.
//!
//! Pre-norm blocks, multi-head attention without projection biases, a GELU
//! feed-forward, sinusoidal positions, and a separate output projection.
//! Everything runs in `f64` on one thread so a batch's loss and gradient are
//! bitwise reproducible, and gradients come from explicit reverse passes that
//! are checked against finite differences in the test suite.
//!
//! Sequences arrive already framed (language tag / BOS / EOS); each batch
//! item is processed at its exact length, so no padding or pad-masking is
//! involved anywhere in the math.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::config::ModelConfig;
use crate::model::params::{view1_mut, view2_mut, Layout, ModelParams};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch item {index} has a sequence shorter than 2 tokens")]
    ItemTooShort { index: usize },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("sequence length {len} exceeds model maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
}

/// One framed training example: encoder input and the full decoder sequence
/// (the net shifts it internally into input/target).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem {
    pub enc_input: Vec<u32>,
    pub dec_full: Vec<u32>,
}

/// A group of examples contributing to one optimizer step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

/// Active dropout probabilities for one training pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutRates {
    /// Applied to each sublayer output before its residual add.
    pub residual: f64,
    /// Applied to attention probabilities.
    pub attention: f64,
}

impl DropoutRates {
    pub fn from_config(cfg: &ModelConfig) -> DropoutRates {
        DropoutRates {
            residual: cfg.dropout,
            attention: cfg.attention_dropout,
        }
    }
}

impl Batch {
    /// Total number of predicted (target) tokens across the batch.
    pub fn target_tokens(&self) -> usize {
        self.items
            .iter()
            .map(|it| it.dec_full.len().saturating_sub(1))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Sinusoidal position table for `len` positions of width `d`.
fn positional(len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, d), |(t, j)| {
        let i = (j / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * i / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

struct LnCache {
    normed: Array2<f64>,
    inv_std: Array1<f64>,
}

fn ln_fwd(x: &Array2<f64>, g: &[f64], b: &[f64]) -> (Array2<f64>, LnCache) {
    let (t, d) = x.dim();
    let mut normed = Array2::zeros((t, d));
    let mut inv_std = Array1::zeros(t);
    let mut out = Array2::zeros((t, d));
    for r in 0..t {
        let row = x.row(r);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = inv;
        for c in 0..d {
            let n = (row[c] - mean) * inv;
            normed[[r, c]] = n;
            out[[r, c]] = n * g[c] + b[c];
        }
    }
    (out, LnCache { normed, inv_std })
}

/// Returns the input gradient and accumulates gain/bias gradients.
fn ln_bwd(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: &[f64],
    dg: &mut [f64],
    db: &mut [f64],
) -> Array2<f64> {
    let (t, d) = dy.dim();
    let mut dx = Array2::zeros((t, d));
    for r in 0..t {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for c in 0..d {
            let dyv = dy[[r, c]];
            let n = cache.normed[[r, c]];
            dg[c] += dyv * n;
            db[c] += dyv;
            let dn = dyv * g[c];
            m1 += dn;
            m2 += dn * n;
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let inv = cache.inv_std[r];
        for c in 0..d {
            let dn = dy[[r, c]] * g[c];
            dx[[r, c]] = inv * (dn - m1 - cache.normed[[r, c]] * m2);
        }
    }
    dx
}

fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let (t, k) = scores.dim();
    let mut out = Array2::zeros((t, k));
    for r in 0..t {
        let row = scores.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..k {
            let e = (row[c] - max).exp();
            out[[r, c]] = e;
            sum += e;
        }
        for c in 0..k {
            out[[r, c]] /= sum;
        }
    }
    out
}

fn softmax_rows_bwd(dp: &Array2<f64>, p: &Array2<f64>) -> Array2<f64> {
    let (t, k) = dp.dim();
    let mut ds = Array2::zeros((t, k));
    for r in 0..t {
        let dot: f64 = (0..k).map(|c| dp[[r, c]] * p[[r, c]]).sum();
        for c in 0..k {
            ds[[r, c]] = p[[r, c]] * (dp[[r, c]] - dot);
        }
    }
    ds
}

/// Inverted-dropout mask: zero with probability `p`, else `1/(1-p)`.
fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.gen::<f64>() < p {
            0.0
        } else {
            keep
        }
    })
}

/// Applies residual dropout when active; returns the (possibly scaled)
/// activations and the mask used.
fn maybe_dropout(
    x: Array2<f64>,
    p: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, Option<Array2<f64>>) {
    if p > 0.0 {
        if let Some(r) = rng.as_deref_mut() {
            let mask = dropout_mask(x.nrows(), x.ncols(), p, r);
            return (&x * &mask, Some(mask));
        }
    }
    (x, None)
}

// ---------------------------------------------------------------------------
// Gradient accumulation into the flat buffer
// ---------------------------------------------------------------------------

struct GradBuf<'a> {
    layout: &'a Layout,
    values: &'a mut [f64],
}

impl GradBuf<'_> {
    fn add2(&mut self, name: &str, c: &Array2<f64>) {
        let spec = self.layout.spec(name).expect("tensor name from layout");
        let mut view = view2_mut(self.values, spec).expect("rank-2 tensor");
        view += c;
    }

    fn add1(&mut self, name: &str, c: &Array1<f64>) {
        let spec = self.layout.spec(name).expect("tensor name from layout");
        let mut view = view1_mut(self.values, spec).expect("rank-1 tensor");
        view += c;
    }

    /// Two disjoint mutable slices for a norm's gain and bias gradients.
    fn slices1(&mut self, a: &str, b: &str) -> (&mut [f64], &mut [f64]) {
        let sa = self.layout.spec(a).expect("tensor name from layout").clone();
        let sb = self.layout.spec(b).expect("tensor name from layout").clone();
        assert!(
            sa.offset + sa.len() <= sb.offset,
            "expected disjoint ordered tensors"
        );
        let (head, tail) = self.values.split_at_mut(sb.offset);
        (
            &mut head[sa.offset..sa.offset + sa.len()],
            &mut tail[..sb.len()],
        )
    }
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

struct AttnCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    p_raw: Vec<Array2<f64>>,
    p_drop: Vec<Array2<f64>>,
    masks: Option<Vec<Array2<f64>>>,
    concat: Array2<f64>,
}

struct AttnWeights<'a> {
    wq: ndarray::ArrayView2<'a, f64>,
    wk: ndarray::ArrayView2<'a, f64>,
    wv: ndarray::ArrayView2<'a, f64>,
    wo: ndarray::ArrayView2<'a, f64>,
}

fn attn_weights<'a>(params: &'a ModelParams, prefix: &str) -> AttnWeights<'a> {
    AttnWeights {
        wq: params.mat(&format!("{prefix}.wq")).expect("layout tensor"),
        wk: params.mat(&format!("{prefix}.wk")).expect("layout tensor"),
        wv: params.mat(&format!("{prefix}.wv")).expect("layout tensor"),
        wo: params.mat(&format!("{prefix}.wo")).expect("layout tensor"),
    }
}

fn attn_fwd(
    xq_in: &Array2<f64>,
    mem_in: &Array2<f64>,
    w: &AttnWeights<'_>,
    heads: usize,
    causal: bool,
    attn_p: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, AttnCache) {
    let d = xq_in.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = xq_in.dot(&w.wq);
    let k = mem_in.dot(&w.wk);
    let v = mem_in.dot(&w.wv);
    let (tq, tk) = (q.nrows(), k.nrows());
    let use_drop = attn_p > 0.0 && rng.is_some();
    let mut concat = Array2::zeros((tq, d));
    let mut p_raw = Vec::with_capacity(heads);
    let mut p_drop = Vec::with_capacity(heads);
    let mut masks: Option<Vec<Array2<f64>>> = if use_drop {
        Some(Vec::with_capacity(heads))
    } else {
        None
    };
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut scores = qh.dot(&kh.t());
        scores *= scale;
        if causal {
            for i in 0..tq {
                for j in (i + 1)..tk {
                    scores[[i, j]] = f64::NEG_INFINITY;
                }
            }
        }
        let p = softmax_rows(&scores);
        let pd = if use_drop {
            let r = rng.as_deref_mut().expect("rng present when dropping");
            let mask = dropout_mask(tq, tk, attn_p, r);
            let pd = &p * &mask;
            masks.as_mut().expect("mask store").push(mask);
            pd
        } else {
            p.clone()
        };
        let oh = pd.dot(&vh);
        concat.slice_mut(cols).assign(&oh);
        p_raw.push(p);
        p_drop.push(pd);
    }
    let out = concat.dot(&w.wo);
    (
        out,
        AttnCache {
            q,
            k,
            v,
            p_raw,
            p_drop,
            masks,
            concat,
        },
    )
}

/// Backward through one attention block. Returns gradients with respect to
/// the query-side input and the memory-side input (for self-attention the
/// caller adds them together).
#[allow(clippy::too_many_arguments)]
fn attn_bwd(
    d_out: &Array2<f64>,
    cache: &AttnCache,
    xq_in: &Array2<f64>,
    mem_in: &Array2<f64>,
    w: &AttnWeights<'_>,
    heads: usize,
    prefix: &str,
    grads: &mut GradBuf<'_>,
) -> (Array2<f64>, Array2<f64>) {
    let d = xq_in.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (tq, tk) = (cache.q.nrows(), cache.k.nrows());

    grads.add2(&format!("{prefix}.wo"), &cache.concat.t().dot(d_out));
    let d_concat = d_out.dot(&w.wo.t());

    let mut d_q = Array2::zeros((tq, d));
    let mut d_k = Array2::zeros((tk, d));
    let mut d_v = Array2::zeros((tk, d));
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let d_oh = d_concat.slice(cols);
        let vh = cache.v.slice(cols);
        let mut d_pd = d_oh.dot(&vh.t());
        d_v.slice_mut(cols).assign(&cache.p_drop[h].t().dot(&d_oh));
        if let Some(ms) = cache.masks.as_ref() {
            d_pd = &d_pd * &ms[h];
        }
        let d_s = softmax_rows_bwd(&d_pd, &cache.p_raw[h]);
        let kh = cache.k.slice(cols);
        let qh = cache.q.slice(cols);
        let mut d_qh = d_s.dot(&kh);
        d_qh *= scale;
        d_q.slice_mut(cols).assign(&d_qh);
        let mut d_kh = d_s.t().dot(&qh);
        d_kh *= scale;
        d_k.slice_mut(cols).assign(&d_kh);
    }

    grads.add2(&format!("{prefix}.wq"), &xq_in.t().dot(&d_q));
    grads.add2(&format!("{prefix}.wk"), &mem_in.t().dot(&d_k));
    grads.add2(&format!("{prefix}.wv"), &mem_in.t().dot(&d_v));
    let d_xq = d_q.dot(&w.wq.t());
    let mut d_mem = d_k.dot(&w.wk.t());
    d_mem += &d_v.dot(&w.wv.t());
    (d_xq, d_mem)
}

// ---------------------------------------------------------------------------
// Feed-forward
// ---------------------------------------------------------------------------

struct FfnCache {
    pre: Array2<f64>,
    act: Array2<f64>,
}

fn ffn_fwd(input: &Array2<f64>, params: &ModelParams, prefix: &str) -> (Array2<f64>, FfnCache) {
    let w1 = params.mat(&format!("{prefix}.w1")).expect("layout tensor");
    let b1 = params.vec1(&format!("{prefix}.b1")).expect("layout tensor");
    let w2 = params.mat(&format!("{prefix}.w2")).expect("layout tensor");
    let b2 = params.vec1(&format!("{prefix}.b2")).expect("layout tensor");
    let mut pre = input.dot(&w1);
    pre += &b1;
    let act = pre.mapv(gelu);
    let mut out = act.dot(&w2);
    out += &b2;
    (out, FfnCache { pre, act })
}

fn ffn_bwd(
    d_out: &Array2<f64>,
    input: &Array2<f64>,
    cache: &FfnCache,
    params: &ModelParams,
    prefix: &str,
    grads: &mut GradBuf<'_>,
) -> Array2<f64> {
    let w1 = params.mat(&format!("{prefix}.w1")).expect("layout tensor");
    let w2 = params.mat(&format!("{prefix}.w2")).expect("layout tensor");
    grads.add2(&format!("{prefix}.w2"), &cache.act.t().dot(d_out));
    grads.add1(&format!("{prefix}.b2"), &d_out.sum_axis(Axis(0)));
    let d_act = d_out.dot(&w2.t());
    let d_pre = &d_act * &cache.pre.mapv(gelu_grad);
    grads.add2(&format!("{prefix}.w1"), &input.t().dot(&d_pre));
    grads.add1(&format!("{prefix}.b1"), &d_pre.sum_axis(Axis(0)));
    d_pre.dot(&w1.t())
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

fn embed_fwd(ids: &[u32], params: &ModelParams) -> Array2<f64> {
    let table = params.mat("embed.tok").expect("layout tensor");
    let d = params.config().width;
    let scale = (d as f64).sqrt();
    let pe = positional(ids.len(), d);
    let mut x = Array2::zeros((ids.len(), d));
    for (t, &id) in ids.iter().enumerate() {
        let row = table.row(id as usize);
        for c in 0..d {
            x[[t, c]] = row[c] * scale + pe[[t, c]];
        }
    }
    x
}

fn embed_bwd(ids: &[u32], d_x: &Array2<f64>, width: usize, grads: &mut GradBuf<'_>) {
    let scale = (width as f64).sqrt();
    let spec = grads
        .layout
        .spec("embed.tok")
        .expect("layout tensor")
        .clone();
    let mut table = view2_mut(grads.values, &spec).expect("rank-2 tensor");
    for (t, &id) in ids.iter().enumerate() {
        let mut row = table.row_mut(id as usize);
        for c in 0..d_x.ncols() {
            row[c] += d_x[[t, c]] * scale;
        }
    }
}

// ---------------------------------------------------------------------------
// Encoder / decoder stacks
// ---------------------------------------------------------------------------

struct EncLayerCache {
    ln1: LnCache,
    ln1_out: Array2<f64>,
    attn: AttnCache,
    attn_mask: Option<Array2<f64>>,
    ln2: LnCache,
    ln2_out: Array2<f64>,
    ffn: FfnCache,
    ffn_mask: Option<Array2<f64>>,
}

struct EncoderCache {
    ids: Vec<u32>,
    layers: Vec<EncLayerCache>,
    final_ln: LnCache,
    output: Array2<f64>,
}

fn encode(
    params: &ModelParams,
    ids: &[u32],
    rates: DropoutRates,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> EncoderCache {
    let cfg = params.config();
    let (resid_p, attn_p) = (rates.residual, rates.attention);
    let mut x = embed_fwd(ids, params);
    let mut layers = Vec::with_capacity(cfg.layers);
    for i in 0..cfg.layers {
        let g1 = params.vec1(&format!("enc.{i}.ln1.g")).expect("layout tensor");
        let b1 = params.vec1(&format!("enc.{i}.ln1.b")).expect("layout tensor");
        let (ln1_out, ln1) = ln_fwd(&x, g1.as_slice().unwrap(), b1.as_slice().unwrap());
        let w = attn_weights(params, &format!("enc.{i}.attn"));
        let (attn_out, attn) = attn_fwd(&ln1_out, &ln1_out, &w, cfg.heads, false, attn_p, rng);
        let (attn_out, attn_mask) = maybe_dropout(attn_out, resid_p, rng);
        x += &attn_out;
        let g2 = params.vec1(&format!("enc.{i}.ln2.g")).expect("layout tensor");
        let b2 = params.vec1(&format!("enc.{i}.ln2.b")).expect("layout tensor");
        let (ln2_out, ln2) = ln_fwd(&x, g2.as_slice().unwrap(), b2.as_slice().unwrap());
        let (ffn_out, ffn) = ffn_fwd(&ln2_out, params, &format!("enc.{i}.ffn"));
        let (ffn_out, ffn_mask) = maybe_dropout(ffn_out, resid_p, rng);
        x += &ffn_out;
        layers.push(EncLayerCache {
            ln1,
            ln1_out,
            attn,
            attn_mask,
            ln2,
            ln2_out,
            ffn,
            ffn_mask,
        });
    }
    let g = params.vec1("enc.final_ln.g").expect("layout tensor");
    let b = params.vec1("enc.final_ln.b").expect("layout tensor");
    let (output, final_ln) = ln_fwd(&x, g.as_slice().unwrap(), b.as_slice().unwrap());
    EncoderCache {
        ids: ids.to_vec(),
        layers,
        final_ln,
        output,
    }
}

struct DecLayerCache {
    ln1: LnCache,
    ln1_out: Array2<f64>,
    self_attn: AttnCache,
    self_mask: Option<Array2<f64>>,
    ln2: LnCache,
    ln2_out: Array2<f64>,
    cross_attn: AttnCache,
    cross_mask: Option<Array2<f64>>,
    ln3: LnCache,
    ln3_out: Array2<f64>,
    ffn: FfnCache,
    ffn_mask: Option<Array2<f64>>,
}

struct DecoderCache {
    ids: Vec<u32>,
    layers: Vec<DecLayerCache>,
    final_ln: LnCache,
    output: Array2<f64>,
}

fn decode_stack(
    params: &ModelParams,
    dec_input: &[u32],
    enc_out: &Array2<f64>,
    rates: DropoutRates,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> DecoderCache {
    let cfg = params.config();
    let (resid_p, attn_p) = (rates.residual, rates.attention);
    let mut y = embed_fwd(dec_input, params);
    let mut layers = Vec::with_capacity(cfg.layers);
    for i in 0..cfg.layers {
        let g1 = params.vec1(&format!("dec.{i}.ln1.g")).expect("layout tensor");
        let b1 = params.vec1(&format!("dec.{i}.ln1.b")).expect("layout tensor");
        let (ln1_out, ln1) = ln_fwd(&y, g1.as_slice().unwrap(), b1.as_slice().unwrap());
        let w_self = attn_weights(params, &format!("dec.{i}.self_attn"));
        let (self_out, self_attn) =
            attn_fwd(&ln1_out, &ln1_out, &w_self, cfg.heads, true, attn_p, rng);
        let (self_out, self_mask) = maybe_dropout(self_out, resid_p, rng);
        y += &self_out;
        let g2 = params.vec1(&format!("dec.{i}.ln2.g")).expect("layout tensor");
        let b2 = params.vec1(&format!("dec.{i}.ln2.b")).expect("layout tensor");
        let (ln2_out, ln2) = ln_fwd(&y, g2.as_slice().unwrap(), b2.as_slice().unwrap());
        let w_cross = attn_weights(params, &format!("dec.{i}.cross_attn"));
        let (cross_out, cross_attn) =
            attn_fwd(&ln2_out, enc_out, &w_cross, cfg.heads, false, attn_p, rng);
        let (cross_out, cross_mask) = maybe_dropout(cross_out, resid_p, rng);
        y += &cross_out;
        let g3 = params.vec1(&format!("dec.{i}.ln3.g")).expect("layout tensor");
        let b3 = params.vec1(&format!("dec.{i}.ln3.b")).expect("layout tensor");
        let (ln3_out, ln3) = ln_fwd(&y, g3.as_slice().unwrap(), b3.as_slice().unwrap());
        let (ffn_out, ffn) = ffn_fwd(&ln3_out, params, &format!("dec.{i}.ffn"));
        let (ffn_out, ffn_mask) = maybe_dropout(ffn_out, resid_p, rng);
        y += &ffn_out;
        layers.push(DecLayerCache {
            ln1,
            ln1_out,
            self_attn,
            self_mask,
            ln2,
            ln2_out,
            cross_attn,
            cross_mask,
            ln3,
            ln3_out,
            ffn,
            ffn_mask,
        });
    }
    let g = params.vec1("dec.final_ln.g").expect("layout tensor");
    let b = params.vec1("dec.final_ln.b").expect("layout tensor");
    let (output, final_ln) = ln_fwd(&y, g.as_slice().unwrap(), b.as_slice().unwrap());
    DecoderCache {
        ids: dec_input.to_vec(),
        layers,
        final_ln,
        output,
    }
}

fn encoder_bwd(
    mut d_x: Array2<f64>,
    cache: &EncoderCache,
    params: &ModelParams,
    grads: &mut GradBuf<'_>,
) {
    let cfg = params.config();
    for i in (0..cfg.layers).rev() {
        let lc = &cache.layers[i];
        let prefix = format!("enc.{i}");
        // FFN sublayer: residual passes d_x through, plus the sublayer path.
        let mut d_ffn_out = d_x.clone();
        if let Some(mask) = &lc.ffn_mask {
            d_ffn_out = &d_ffn_out * mask;
        }
        let d_ln2_out = ffn_bwd(
            &d_ffn_out,
            &lc.ln2_out,
            &lc.ffn,
            params,
            &format!("{prefix}.ffn"),
            grads,
        );
        let g2 = params.vec1(&format!("{prefix}.ln2.g")).expect("layout tensor");
        let (dg2, db2) = grads.slices1(&format!("{prefix}.ln2.g"), &format!("{prefix}.ln2.b"));
        let d_mid = ln_bwd(&d_ln2_out, &lc.ln2, g2.as_slice().unwrap(), dg2, db2);
        d_x += &d_mid;
        // Attention sublayer.
        let mut d_attn_out = d_x.clone();
        if let Some(mask) = &lc.attn_mask {
            d_attn_out = &d_attn_out * mask;
        }
        let w = attn_weights(params, &format!("{prefix}.attn"));
        let (d_xq, d_mem) = attn_bwd(
            &d_attn_out,
            &lc.attn,
            &lc.ln1_out,
            &lc.ln1_out,
            &w,
            cfg.heads,
            &format!("{prefix}.attn"),
            grads,
        );
        let d_ln1_out = d_xq + d_mem;
        let g1 = params.vec1(&format!("{prefix}.ln1.g")).expect("layout tensor");
        let (dg1, db1) = grads.slices1(&format!("{prefix}.ln1.g"), &format!("{prefix}.ln1.b"));
        let d_input = ln_bwd(&d_ln1_out, &lc.ln1, g1.as_slice().unwrap(), dg1, db1);
        d_x += &d_input;
    }
    embed_bwd(&cache.ids, &d_x, cfg.width, grads);
}

/// Backward through the decoder stack; returns the gradient flowing into the
/// encoder output via cross-attention.
fn decoder_bwd(
    d_stack_out: Array2<f64>,
    cache: &DecoderCache,
    enc_out: &Array2<f64>,
    params: &ModelParams,
    grads: &mut GradBuf<'_>,
) -> Array2<f64> {
    let cfg = params.config();
    let mut d_y = d_stack_out;
    let mut d_enc_out = Array2::zeros(enc_out.dim());
    for i in (0..cfg.layers).rev() {
        let lc = &cache.layers[i];
        let prefix = format!("dec.{i}");
        // FFN sublayer.
        let mut d_ffn_out = d_y.clone();
        if let Some(mask) = &lc.ffn_mask {
            d_ffn_out = &d_ffn_out * mask;
        }
        let d_ln3_out = ffn_bwd(
            &d_ffn_out,
            &lc.ln3_out,
            &lc.ffn,
            params,
            &format!("{prefix}.ffn"),
            grads,
        );
        let g3 = params.vec1(&format!("{prefix}.ln3.g")).expect("layout tensor");
        let (dg3, db3) = grads.slices1(&format!("{prefix}.ln3.g"), &format!("{prefix}.ln3.b"));
        let d_mid2 = ln_bwd(&d_ln3_out, &lc.ln3, g3.as_slice().unwrap(), dg3, db3);
        d_y += &d_mid2;
        // Cross-attention sublayer.
        let mut d_cross_out = d_y.clone();
        if let Some(mask) = &lc.cross_mask {
            d_cross_out = &d_cross_out * mask;
        }
        let w_cross = attn_weights(params, &format!("{prefix}.cross_attn"));
        let (d_xq, d_mem) = attn_bwd(
            &d_cross_out,
            &lc.cross_attn,
            &lc.ln2_out,
            enc_out,
            &w_cross,
            cfg.heads,
            &format!("{prefix}.cross_attn"),
            grads,
        );
        d_enc_out += &d_mem;
        let g2 = params.vec1(&format!("{prefix}.ln2.g")).expect("layout tensor");
        let (dg2, db2) = grads.slices1(&format!("{prefix}.ln2.g"), &format!("{prefix}.ln2.b"));
        let d_mid1 = ln_bwd(&d_xq, &lc.ln2, g2.as_slice().unwrap(), dg2, db2);
        d_y += &d_mid1;
        // Self-attention sublayer.
        let mut d_self_out = d_y.clone();
        if let Some(mask) = &lc.self_mask {
            d_self_out = &d_self_out * mask;
        }
        let w_self = attn_weights(params, &format!("{prefix}.self_attn"));
        let (d_xq, d_mem) = attn_bwd(
            &d_self_out,
            &lc.self_attn,
            &lc.ln1_out,
            &lc.ln1_out,
            &w_self,
            cfg.heads,
            &format!("{prefix}.self_attn"),
            grads,
        );
        let d_ln1_out = d_xq + d_mem;
        let g1 = params.vec1(&format!("{prefix}.ln1.g")).expect("layout tensor");
        let (dg1, db1) = grads.slices1(&format!("{prefix}.ln1.g"), &format!("{prefix}.ln1.b"));
        let d_input = ln_bwd(&d_ln1_out, &lc.ln1, g1.as_slice().unwrap(), dg1, db1);
        d_y += &d_input;
    }
    embed_bwd(&cache.ids, &d_y, cfg.width, grads);
    d_enc_out
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

fn validate_item(item: &BatchItem, index: usize, cfg: &ModelConfig) -> Result<(), NetError> {
    if item.enc_input.len() < 2 || item.dec_full.len() < 2 {
        return Err(NetError::ItemTooShort { index });
    }
    for len in [item.enc_input.len(), item.dec_full.len()] {
        if len > cfg.max_len {
            return Err(NetError::TooLong {
                len,
                max: cfg.max_len,
            });
        }
    }
    for &id in item.enc_input.iter().chain(item.dec_full.iter()) {
        if id as usize >= cfg.vocab_size {
            return Err(NetError::TokenOutOfRange {
                id,
                vocab: cfg.vocab_size,
            });
        }
    }
    Ok(())
}

/// Per-position cross-entropy (nats), summed over the item; also returns the
/// softmax rows needed for the backward pass.
fn ce_terms(logits: &Array2<f64>, targets: &[u32]) -> (f64, Array2<f64>) {
    let (t, v) = logits.dim();
    debug_assert_eq!(t, targets.len());
    let mut probs = Array2::zeros((t, v));
    let mut loss = 0.0;
    for r in 0..t {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..v {
            let e = (row[c] - max).exp();
            probs[[r, c]] = e;
            sum += e;
        }
        let lse = max + sum.ln();
        for c in 0..v {
            probs[[r, c]] /= sum;
        }
        loss += lse - row[targets[r] as usize];
    }
    (loss, probs)
}

fn output_logits(params: &ModelParams, dec_output: &Array2<f64>) -> Array2<f64> {
    let w_out = params.mat("out.w").expect("layout tensor");
    let b_out = params.vec1("out.b").expect("layout tensor");
    let mut logits = dec_output.dot(&w_out);
    logits += &b_out;
    logits
}

/// Mean cross-entropy (nats per target token) over the batch, without
/// gradients or dropout.
pub fn batch_loss(params: &ModelParams, batch: &Batch) -> Result<f64, NetError> {
    if batch.items.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let cfg = params.config();
    let no_drop = DropoutRates {
        residual: 0.0,
        attention: 0.0,
    };
    let mut rng: Option<&mut ChaCha8Rng> = None;
    let mut loss_sum = 0.0;
    let mut tokens = 0usize;
    for (idx, item) in batch.items.iter().enumerate() {
        validate_item(item, idx, cfg)?;
        let enc = encode(params, &item.enc_input, no_drop, &mut rng);
        let dec_input = &item.dec_full[..item.dec_full.len() - 1];
        let targets = &item.dec_full[1..];
        let dec = decode_stack(params, dec_input, &enc.output, no_drop, &mut rng);
        let logits = output_logits(params, &dec.output);
        let (item_loss, _) = ce_terms(&logits, targets);
        loss_sum += item_loss;
        tokens += targets.len();
    }
    let loss = loss_sum / tokens as f64;
    if !loss.is_finite() {
        return Err(NetError::NonFiniteLoss);
    }
    Ok(loss)
}

/// Mean cross-entropy over the batch plus the full gradient in the flat
/// parameter layout. Dropout is active only when an RNG is supplied and the
/// configured rates are nonzero.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &Batch,
    dropout: Option<(DropoutRates, &mut ChaCha8Rng)>,
) -> Result<(f64, Vec<f64>), NetError> {
    if batch.items.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let cfg = params.config();
    for (idx, item) in batch.items.iter().enumerate() {
        validate_item(item, idx, cfg)?;
    }
    let (rates, mut rng) = match dropout {
        Some((rates, rng)) => (rates, Some(rng)),
        None => (
            DropoutRates {
                residual: 0.0,
                attention: 0.0,
            },
            None,
        ),
    };
    let n_tokens = batch.target_tokens();
    let mut grad_values = vec![0.0; params.layout().total_len()];
    let mut loss_sum = 0.0;
    for item in &batch.items {
        let enc = encode(params, &item.enc_input, rates, &mut rng);
        let dec_input = &item.dec_full[..item.dec_full.len() - 1];
        let targets = &item.dec_full[1..];
        let dec = decode_stack(params, dec_input, &enc.output, rates, &mut rng);
        let logits = output_logits(params, &dec.output);
        let (item_loss, probs) = ce_terms(&logits, targets);
        loss_sum += item_loss;

        // d(mean loss)/d(logits): softmax minus one-hot, averaged over all
        // target tokens in the batch.
        let mut d_logits = probs;
        for (r, &tgt) in targets.iter().enumerate() {
            d_logits[[r, tgt as usize]] -= 1.0;
        }
        d_logits /= n_tokens as f64;

        let mut grads = GradBuf {
            layout: params.layout(),
            values: &mut grad_values,
        };
        grads.add2("out.w", &dec.output.t().dot(&d_logits));
        grads.add1("out.b", &d_logits.sum_axis(Axis(0)));
        let w_out = params.mat("out.w").expect("layout tensor");
        let d_dec_out = d_logits.dot(&w_out.t());
        let g = params.vec1("dec.final_ln.g").expect("layout tensor");
        let (dg, db) = grads.slices1("dec.final_ln.g", "dec.final_ln.b");
        let d_dec_stack = ln_bwd(&d_dec_out, &dec.final_ln, g.as_slice().unwrap(), dg, db);
        let d_enc_out = decoder_bwd(d_dec_stack, &dec, &enc.output, params, &mut grads);
        let ge = params.vec1("enc.final_ln.g").expect("layout tensor");
        let (dge, dbe) = grads.slices1("enc.final_ln.g", "enc.final_ln.b");
        let d_enc_stack = ln_bwd(&d_enc_out, &enc.final_ln, ge.as_slice().unwrap(), dge, dbe);
        encoder_bwd(d_enc_stack, &enc, params, &mut grads);
    }
    let loss = loss_sum / n_tokens as f64;
    if !loss.is_finite() {
        return Err(NetError::NonFiniteLoss);
    }
    Ok((loss, grad_values))
}

/// Inference forward pass: logits for every decoder position, no dropout.
pub fn forward_logits(
    params: &ModelParams,
    enc_input: &[u32],
    dec_input: &[u32],
) -> Result<Array2<f64>, NetError> {
    let cfg = params.config();
    let probe = BatchItem {
        enc_input: enc_input.to_vec(),
        // Validation applies the same length bounds the training path uses;
        // dec_input here is already the shifted input sequence.
        dec_full: dec_input.to_vec(),
    };
    validate_item(&probe, 0, cfg)?;
    let no_drop = DropoutRates {
        residual: 0.0,
        attention: 0.0,
    };
    let mut rng: Option<&mut ChaCha8Rng> = None;
    let enc = encode(params, enc_input, no_drop, &mut rng);
    let dec = decode_stack(params, dec_input, &enc.output, no_drop, &mut rng);
    Ok(output_logits(params, &dec.output))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use rand::SeedableRng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 2,
            width: 8,
            ffn_width: 16,
            max_len: 32,
            dropout: 0.0,
            attention_dropout: 0.0,
            vocab_size: 24,
        }
    }

    fn tiny_batch() -> Batch {
        Batch {
            items: vec![
                BatchItem {
                    enc_input: vec![5, 8, 9, 10, 2],
                    dec_full: vec![1, 6, 11, 12, 13, 2],
                },
                BatchItem {
                    enc_input: vec![5, 14, 15, 2],
                    dec_full: vec![1, 6, 16, 17, 2],
                },
            ],
        }
    }

    #[test]
    fn zeroed_params_give_exact_uniform_loss() {
        let params = ModelParams::zeroed(&tiny_cfg()).unwrap();
        let loss = batch_loss(&params, &tiny_batch()).unwrap();
        let uniform = (tiny_cfg().vocab_size as f64).ln();
        assert!(
            (loss - uniform).abs() < 1e-12,
            "loss {loss} vs ln V {uniform}"
        );
    }

    #[test]
    fn initialized_loss_is_near_uniform() {
        let params = ModelParams::init(&tiny_cfg(), 7).unwrap();
        let loss = batch_loss(&params, &tiny_batch()).unwrap();
        let uniform = (tiny_cfg().vocab_size as f64).ln();
        assert!(
            (loss - uniform).abs() < 0.5,
            "fresh parameters should score close to the uniform baseline: {loss} vs {uniform}"
        );
    }

    #[test]
    fn loss_and_grad_is_bitwise_deterministic() {
        let params = ModelParams::init(&tiny_cfg(), 3).unwrap();
        let (l1, g1) = loss_and_grad(&params, &tiny_batch(), None).unwrap();
        let (l2, g2) = loss_and_grad(&params, &tiny_batch(), None).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 11).unwrap();
        let batch = tiny_batch();
        let (_, analytic) = loss_and_grad(&params, &batch, None).unwrap();
        let mut worst = 0.0f64;
        let eps = 1e-5;
        for spec in params.layout().specs() {
            // Probe three spread-out coordinates of every tensor.
            for probe in 0..3usize {
                let idx = spec.offset + (probe * spec.len() / 3).min(spec.len() - 1);
                let mut plus = params.clone();
                plus.values_mut()[idx] += eps;
                let mut minus = params.clone();
                minus.values_mut()[idx] -= eps;
                let lp = batch_loss(&plus, &batch).unwrap();
                let lm = batch_loss(&minus, &batch).unwrap();
                let numeric = (lp - lm) / (2.0 * eps);
                let ana = analytic[idx];
                let rel = (numeric - ana).abs() / (numeric.abs() + ana.abs()).max(1e-8);
                if rel > worst {
                    worst = rel;
                }
                assert!(
                    rel < 1e-4,
                    "tensor {} coordinate {idx}: numeric {numeric} vs analytic {ana} (rel {rel})",
                    spec.name
                );
            }
        }
        assert!(worst < 1e-4);
    }

    #[test]
    fn causal_mask_blocks_future_target_positions() {
        let params = ModelParams::init(&tiny_cfg(), 5).unwrap();
        let enc = vec![5, 8, 9, 2];
        let dec_a = vec![1, 6, 10, 11, 12];
        let dec_b = vec![1, 6, 10, 20, 21]; // differs only from position 3 on
        let la = forward_logits(&params, &enc, &dec_a).unwrap();
        let lb = forward_logits(&params, &enc, &dec_b).unwrap();
        for r in 0..3 {
            for c in 0..la.ncols() {
                assert_eq!(
                    la[[r, c]].to_bits(),
                    lb[[r, c]].to_bits(),
                    "position {r} saw a future token"
                );
            }
        }
        assert!((0..la.ncols()).any(|c| la[[3, c]] != lb[[3, c]]));
    }

    #[test]
    fn dropout_is_seeded_and_perturbs_the_loss() {
        let mut cfg = tiny_cfg();
        cfg.dropout = 0.3;
        cfg.attention_dropout = 0.1;
        let params = ModelParams::init(&cfg, 9).unwrap();
        let batch = tiny_batch();
        let rates = DropoutRates::from_config(&cfg);
        let mut rng1 = ChaCha8Rng::seed_from_u64(42);
        let (l1, _) = loss_and_grad(&params, &batch, Some((rates, &mut rng1))).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(42);
        let (l2, _) = loss_and_grad(&params, &batch, Some((rates, &mut rng2))).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits(), "same dropout seed, same loss");
        let (l_eval, _) = loss_and_grad(&params, &batch, None).unwrap();
        assert_ne!(
            l1.to_bits(),
            l_eval.to_bits(),
            "dropout should perturb the loss"
        );
    }

    #[test]
    fn unused_vocabulary_rows_get_zero_embedding_gradient() {
        let params = ModelParams::init(&tiny_cfg(), 13).unwrap();
        let batch = tiny_batch();
        let (_, grads) = loss_and_grad(&params, &batch, None).unwrap();
        let spec = params.layout().spec("embed.tok").unwrap();
        let d = params.config().width;
        let used: std::collections::BTreeSet<u32> = batch
            .items
            .iter()
            .flat_map(|it| {
                it.enc_input
                    .iter()
                    .chain(it.dec_full[..it.dec_full.len() - 1].iter())
            })
            .copied()
            .collect();
        for tok in 0..params.config().vocab_size as u32 {
            let row = &grads[spec.offset + tok as usize * d..spec.offset + (tok as usize + 1) * d];
            let all_zero = row.iter().all(|&x| x == 0.0);
            if used.contains(&tok) {
                assert!(!all_zero, "token {tok} appears in the batch but got no gradient");
            } else {
                assert!(all_zero, "token {tok} is unused but received gradient");
            }
        }
    }

    #[test]
    fn rejects_malformed_batches() {
        let params = ModelParams::init(&tiny_cfg(), 1).unwrap();
        let empty = Batch { items: vec![] };
        assert!(matches!(
            batch_loss(&params, &empty),
            Err(NetError::EmptyBatch)
        ));
        let short = Batch {
            items: vec![BatchItem {
                enc_input: vec![5],
                dec_full: vec![1, 2],
            }],
        };
        assert!(matches!(
            batch_loss(&params, &short),
            Err(NetError::ItemTooShort { index: 0 })
        ));
        let oor = Batch {
            items: vec![BatchItem {
                enc_input: vec![5, 99, 2],
                dec_full: vec![1, 6, 2],
            }],
        };
        assert!(matches!(
            batch_loss(&params, &oor),
            Err(NetError::TokenOutOfRange { id: 99, vocab: 24 })
        ));
        let long = Batch {
            items: vec![BatchItem {
                enc_input: vec![5; 40],
                dec_full: vec![1, 6, 2],
            }],
        };
        assert!(matches!(
            batch_loss(&params, &long),
            Err(NetError::TooLong { len: 40, max: 32 })
        ));
    }
}
