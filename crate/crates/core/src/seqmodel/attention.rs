//! Causally masked self-attention next-event model, written from scratch in
//! f64 with an explicit backward pass so analytic gradients can be checked
//! against central finite differences.
//!
//! Architecture (pre-norm): token + learned positional embeddings → L blocks
//! of {LayerNorm → multi-head causal attention → residual, LayerNorm →
//! GELU feedforward → residual} → final LayerNorm → linear vocabulary
//! projection → softmax. Trained with next-token cross-entropy and a
//! decoupled-weight-decay Adam optimizer.
//!
//! All parameters live in a single flat `Vec<f64>` addressed through a
//! deterministic layout, which keeps the optimizer, serialization, and
//! finite-difference probing trivial.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.044715;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionConfig {
    /// Embedding dimension.
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// Feedforward inner width.
    pub ff: usize,
    /// Training passes over the corpus.
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Longest context attended to; longer sequences are scored through a
    /// sliding window and truncated for training.
    pub max_context: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            dim: 128,
            heads: 4,
            layers: 2,
            ff: 512,
            epochs: 10,
            lr: 1e-5,
            weight_decay: 0.01,
            max_context: 256,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Seg {
    off: usize,
    len: usize,
}

#[derive(Debug, Clone)]
struct LayerLayout {
    ln1_g: Seg,
    ln1_b: Seg,
    wq: Seg,
    bq: Seg,
    wk: Seg,
    bk: Seg,
    wv: Seg,
    bv: Seg,
    wo: Seg,
    bo: Seg,
    ln2_g: Seg,
    ln2_b: Seg,
    w1: Seg,
    b1: Seg,
    w2: Seg,
    b2: Seg,
}

#[derive(Debug, Clone)]
struct Layout {
    tok_emb: Seg,
    pos_emb: Seg,
    layers: Vec<LayerLayout>,
    lnf_g: Seg,
    lnf_b: Seg,
    w_out: Seg,
    b_out: Seg,
    total: usize,
}

fn layout(vocab: usize, dim: usize, n_layers: usize, ff: usize, max_ctx: usize) -> Layout {
    let mut cur = 0usize;
    let mut seg = |len: usize| {
        let s = Seg { off: cur, len };
        cur += len;
        s
    };
    let tok_emb = seg(vocab * dim);
    let pos_emb = seg(max_ctx * dim);
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layers.push(LayerLayout {
            ln1_g: seg(dim),
            ln1_b: seg(dim),
            wq: seg(dim * dim),
            bq: seg(dim),
            wk: seg(dim * dim),
            bk: seg(dim),
            wv: seg(dim * dim),
            bv: seg(dim),
            wo: seg(dim * dim),
            bo: seg(dim),
            ln2_g: seg(dim),
            ln2_b: seg(dim),
            w1: seg(dim * ff),
            b1: seg(ff),
            w2: seg(ff * dim),
            b2: seg(dim),
        });
    }
    let lnf_g = seg(dim);
    let lnf_b = seg(dim);
    let w_out = seg(dim * vocab);
    let b_out = seg(vocab);
    Layout { tok_emb, pos_emb, layers, lnf_g, lnf_b, w_out, b_out, total: cur }
}

fn mat<'a>(buf: &'a [f64], s: Seg, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &buf[s.off..s.off + s.len]).expect("layout shape")
}

fn vec1<'a>(buf: &'a [f64], s: Seg) -> ArrayView1<'a, f64> {
    ArrayView1::from_shape(s.len, &buf[s.off..s.off + s.len]).expect("layout shape")
}

fn add_into(grads: &mut [f64], s: Seg, values: impl IntoIterator<Item = f64>) {
    for (dst, src) in grads[s.off..s.off + s.len].iter_mut().zip(values) {
        *dst += src;
    }
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + GELU_C * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + GELU_C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_C * x * x)
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

/// y = g ⊙ (x − μ)/√(σ² + ε) + b, row-wise.
fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let (t, d) = x.dim();
    let mut y = Array2::zeros((t, d));
    let mut xhat = Array2::zeros((t, d));
    let mut rstd = Array1::zeros(t);
    for i in 0..t {
        let row = x.row(i);
        let mean = row.mean().expect("nonempty row");
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let xh = (row[j] - mean) * r;
            xhat[[i, j]] = xh;
            y[[i, j]] = g[j] * xh + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Backward of [`layer_norm`]: returns dx and accumulates dg/db.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: ArrayView1<f64>,
    grads: &mut [f64],
    g_seg: Seg,
    b_seg: Seg,
) -> Array2<f64> {
    let (t, d) = dy.dim();
    let mut dx = Array2::zeros((t, d));
    let mut dg = vec![0.0; d];
    let mut db = vec![0.0; d];
    for i in 0..t {
        let mut m1 = 0.0; // mean of dxhat
        let mut m2 = 0.0; // mean of dxhat ⊙ xhat
        for j in 0..d {
            let dyij = dy[[i, j]];
            let xh = cache.xhat[[i, j]];
            dg[j] += dyij * xh;
            db[j] += dyij;
            let dxh = dyij * g[j];
            m1 += dxh;
            m2 += dxh * xh;
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let r = cache.rstd[i];
        for j in 0..d {
            let dxh = dy[[i, j]] * g[j];
            dx[[i, j]] = r * (dxh - m1 - cache.xhat[[i, j]] * m2);
        }
    }
    add_into(grads, g_seg, dg);
    add_into(grads, b_seg, db);
    dx
}

struct LayerCache {
    ln1: LnCache,
    y1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    att: Vec<Array2<f64>>,
    concat: Array2<f64>,
    ln2: LnCache,
    y2: Array2<f64>,
    h1: Array2<f64>,
    act: Array2<f64>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    lnf: LnCache,
    yf: Array2<f64>,
    probs: Array2<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformerModel {
    pub vocab_size: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff: usize,
    pub max_context: usize,
    /// Flat parameter store; see the layout walk for addressing.
    pub params: Vec<f64>,
}

impl TransformerModel {
    /// Fresh model with seeded initialization. Embeddings and projections get
    /// small uniform values; the output projection starts at zero so the
    /// initial next-token distribution is exactly uniform and the first
    /// gradient steps break ties in the direction of the data.
    pub fn new(vocab_size: usize, cfg: &AttentionConfig, seed: u64) -> Self {
        assert!(cfg.dim % cfg.heads == 0, "head count must divide the embedding dimension");
        let lay = layout(vocab_size, cfg.dim, cfg.layers, cfg.ff, cfg.max_context);
        let mut params = vec![0.0; lay.total];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut fill_uniform = |s: Seg, r: f64, params: &mut Vec<f64>| {
            for p in &mut params[s.off..s.off + s.len] {
                *p = rng.gen_range(-r..=r);
            }
        };
        fill_uniform(lay.tok_emb, 0.02, &mut params);
        fill_uniform(lay.pos_emb, 0.02, &mut params);
        let r_attn = (6.0 / (2.0 * cfg.dim as f64)).sqrt();
        let r_ff1 = (6.0 / (cfg.dim as f64 + cfg.ff as f64)).sqrt();
        for l in &lay.layers {
            for s in [l.wq, l.wk, l.wv, l.wo] {
                fill_uniform(s, r_attn, &mut params);
            }
            fill_uniform(l.w1, r_ff1, &mut params);
            fill_uniform(l.w2, r_ff1, &mut params);
            for s in [l.ln1_g, l.ln2_g] {
                params[s.off..s.off + s.len].fill(1.0);
            }
        }
        params[lay.lnf_g.off..lay.lnf_g.off + lay.lnf_g.len].fill(1.0);
        // w_out and b_out stay zero.
        TransformerModel {
            vocab_size,
            dim: cfg.dim,
            heads: cfg.heads,
            layers: cfg.layers,
            ff: cfg.ff,
            max_context: cfg.max_context,
            params,
        }
    }

    fn layout(&self) -> Layout {
        layout(self.vocab_size, self.dim, self.layers, self.ff, self.max_context)
    }

    /// Trains by next-token cross-entropy over `[BOS, …]` streams. Streams
    /// longer than the context window are truncated; order is reshuffled each
    /// pass from the seed, so training is deterministic.
    pub fn fit(streams: &[Vec<u32>], vocab_size: usize, cfg: &AttentionConfig, seed: u64) -> Self {
        let mut model = TransformerModel::new(vocab_size, cfg, seed);
        let mut opt = AdamW::new(model.params.len(), cfg.lr, cfg.weight_decay);
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(1));
        let mut order: Vec<usize> = (0..streams.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let stream = &streams[i];
                if stream.len() < 2 {
                    continue;
                }
                let take = stream.len().min(cfg.max_context + 1);
                let inputs = &stream[..take - 1];
                let targets = &stream[1..take];
                let (_, grads) = model.loss_and_grads(inputs, targets);
                opt.step(&mut model.params, &grads);
            }
        }
        model
    }

    /// Forward pass over `inputs` (≤ max_context tokens); returns row-wise
    /// next-token probabilities and the activation cache.
    fn forward(&self, inputs: &[u32]) -> ForwardCache {
        let t = inputs.len();
        assert!(t >= 1 && t <= self.max_context, "context window of {t} tokens unsupported");
        let d = self.dim;
        let lay = self.layout();
        let p = &self.params;
        let tok = mat(p, lay.tok_emb, self.vocab_size, d);
        let pos = mat(p, lay.pos_emb, self.max_context, d);

        let mut x = Array2::zeros((t, d));
        for (i, &tk) in inputs.iter().enumerate() {
            let row = &tok.row(tk as usize) + &pos.row(i);
            x.row_mut(i).assign(&row);
        }

        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut layer_caches = Vec::with_capacity(self.layers);
        for l in &lay.layers {
            let (y1, ln1) = layer_norm(&x, vec1(p, l.ln1_g), vec1(p, l.ln1_b));
            let mut q = y1.dot(&mat(p, l.wq, d, d));
            q += &vec1(p, l.bq);
            let mut k = y1.dot(&mat(p, l.wk, d, d));
            k += &vec1(p, l.bk);
            let mut v = y1.dot(&mat(p, l.wv, d, d));
            v += &vec1(p, l.bv);

            let mut att = Vec::with_capacity(self.heads);
            let mut concat = Array2::zeros((t, d));
            for h in 0..self.heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let qh = q.slice(cols);
                let kh = k.slice(cols);
                let vh = v.slice(cols);
                let scores = qh.dot(&kh.t()) * scale;
                let mut a = Array2::zeros((t, t));
                for i in 0..t {
                    // Causal mask: position i attends to 0..=i only.
                    let row = scores.slice(s![i, ..=i]);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|&sc| (sc - max).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    for (j, e) in exps.iter().enumerate() {
                        a[[i, j]] = e / sum;
                    }
                }
                let oh = a.dot(&vh);
                concat.slice_mut(cols).assign(&oh);
                att.push(a);
            }
            let mut attn_out = concat.dot(&mat(p, l.wo, d, d));
            attn_out += &vec1(p, l.bo);
            let x_mid = &x + &attn_out;

            let (y2, ln2) = layer_norm(&x_mid, vec1(p, l.ln2_g), vec1(p, l.ln2_b));
            let mut h1 = y2.dot(&mat(p, l.w1, d, self.ff));
            h1 += &vec1(p, l.b1);
            let act = h1.mapv(gelu);
            let mut ff_out = act.dot(&mat(p, l.w2, self.ff, d));
            ff_out += &vec1(p, l.b2);
            x = &x_mid + &ff_out;

            layer_caches.push(LayerCache { ln1, y1, q, k, v, att, concat, ln2, y2, h1, act });
        }

        let (yf, lnf) = layer_norm(&x, vec1(p, lay.lnf_g), vec1(p, lay.lnf_b));
        let mut logits = yf.dot(&mat(p, lay.w_out, d, self.vocab_size));
        logits += &vec1(p, lay.b_out);
        let mut probs = Array2::zeros((t, self.vocab_size));
        for i in 0..t {
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for (j, e) in exps.iter().enumerate() {
                probs[[i, j]] = e / sum;
            }
        }
        ForwardCache { layers: layer_caches, lnf, yf, probs }
    }

    /// Mean next-token cross-entropy of `targets` given `inputs`.
    pub fn loss(&self, inputs: &[u32], targets: &[u32]) -> f64 {
        assert_eq!(inputs.len(), targets.len());
        let cache = self.forward(inputs);
        let t = inputs.len() as f64;
        targets
            .iter()
            .enumerate()
            .map(|(i, &w)| -cache.probs[[i, w as usize]].ln())
            .sum::<f64>()
            / t
    }

    /// Loss plus analytic gradients for every parameter, in layout order.
    pub fn loss_and_grads(&self, inputs: &[u32], targets: &[u32]) -> (f64, Vec<f64>) {
        assert_eq!(inputs.len(), targets.len());
        let t = inputs.len();
        let d = self.dim;
        let lay = self.layout();
        let p = &self.params;
        let cache = self.forward(inputs);
        let mut grads = vec![0.0; p.len()];

        let loss = targets
            .iter()
            .enumerate()
            .map(|(i, &w)| -cache.probs[[i, w as usize]].ln())
            .sum::<f64>()
            / t as f64;

        // d(mean CE)/d(logits) = (softmax − onehot) / T.
        let mut dlogits = cache.probs.clone();
        for (i, &w) in targets.iter().enumerate() {
            dlogits[[i, w as usize]] -= 1.0;
        }
        dlogits /= t as f64;

        add_into(&mut grads, lay.b_out, dlogits.sum_axis(Axis(0)));
        add_into(&mut grads, lay.w_out, cache.yf.t().dot(&dlogits).iter().cloned().collect::<Vec<_>>());
        let dyf = dlogits.dot(&mat(p, lay.w_out, d, self.vocab_size).t());
        let mut dx =
            layer_norm_backward(&dyf, &cache.lnf, vec1(p, lay.lnf_g), &mut grads, lay.lnf_g, lay.lnf_b);

        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for (l, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // Feedforward sub-block: x = x_mid + gelu(ln2(x_mid)·W1 + b1)·W2 + b2.
            let d_ff_out = dx.clone();
            add_into(&mut grads, l.b2, d_ff_out.sum_axis(Axis(0)));
            add_into(&mut grads, l.w2, lc.act.t().dot(&d_ff_out).iter().cloned().collect::<Vec<_>>());
            let dact = d_ff_out.dot(&mat(p, l.w2, self.ff, d).t());
            let dh1 = &dact * &lc.h1.mapv(gelu_prime);
            add_into(&mut grads, l.b1, dh1.sum_axis(Axis(0)));
            add_into(&mut grads, l.w1, lc.y2.t().dot(&dh1).iter().cloned().collect::<Vec<_>>());
            let dy2 = dh1.dot(&mat(p, l.w1, d, self.ff).t());
            let mut dx_mid =
                layer_norm_backward(&dy2, &lc.ln2, vec1(p, l.ln2_g), &mut grads, l.ln2_g, l.ln2_b);
            dx_mid += &dx; // residual path

            // Attention sub-block: x_mid = x_in + (heads(ln1(x_in)))·Wo + bo.
            let d_attn_out = dx_mid.clone();
            add_into(&mut grads, l.bo, d_attn_out.sum_axis(Axis(0)));
            add_into(
                &mut grads,
                l.wo,
                lc.concat.t().dot(&d_attn_out).iter().cloned().collect::<Vec<_>>(),
            );
            let dconcat = d_attn_out.dot(&mat(p, l.wo, d, d).t());

            let mut dq = Array2::zeros((t, d));
            let mut dk = Array2::zeros((t, d));
            let mut dv = Array2::zeros((t, d));
            for h in 0..self.heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let a = &lc.att[h];
                let doh = dconcat.slice(cols);
                let vh = lc.v.slice(cols);
                let qh = lc.q.slice(cols);
                let kh = lc.k.slice(cols);

                let da = doh.dot(&vh.t());
                let mut dvh = dv.slice_mut(cols);
                dvh += &a.t().dot(&doh);

                // Softmax backward per causal row.
                let mut dscores = Array2::zeros((t, t));
                for i in 0..t {
                    let dot: f64 = (0..=i).map(|j| da[[i, j]] * a[[i, j]]).sum();
                    for j in 0..=i {
                        dscores[[i, j]] = a[[i, j]] * (da[[i, j]] - dot);
                    }
                }
                let mut dqh = dq.slice_mut(cols);
                dqh += &(dscores.dot(&kh) * scale);
                let mut dkh = dk.slice_mut(cols);
                dkh += &(dscores.t().dot(&qh) * scale);
            }

            add_into(&mut grads, l.bq, dq.sum_axis(Axis(0)));
            add_into(&mut grads, l.wq, lc.y1.t().dot(&dq).iter().cloned().collect::<Vec<_>>());
            add_into(&mut grads, l.bk, dk.sum_axis(Axis(0)));
            add_into(&mut grads, l.wk, lc.y1.t().dot(&dk).iter().cloned().collect::<Vec<_>>());
            add_into(&mut grads, l.bv, dv.sum_axis(Axis(0)));
            add_into(&mut grads, l.wv, lc.y1.t().dot(&dv).iter().cloned().collect::<Vec<_>>());
            let dy1 = dq.dot(&mat(p, l.wq, d, d).t())
                + dk.dot(&mat(p, l.wk, d, d).t())
                + dv.dot(&mat(p, l.wv, d, d).t());
            let dx_in_norm =
                layer_norm_backward(&dy1, &lc.ln1, vec1(p, l.ln1_g), &mut grads, l.ln1_g, l.ln1_b);
            dx = dx_mid + dx_in_norm;
        }

        // Embedding gradients.
        for (i, &tk) in inputs.iter().enumerate() {
            let row: Vec<f64> = dx.row(i).iter().cloned().collect();
            let tok_seg = Seg { off: lay.tok_emb.off + tk as usize * d, len: d };
            add_into(&mut grads, tok_seg, row.iter().cloned());
            let pos_seg = Seg { off: lay.pos_emb.off + i * d, len: d };
            add_into(&mut grads, pos_seg, row);
        }

        (loss, grads)
    }

    /// Next-token distribution after `context`, attending to at most the
    /// last `max_context` tokens.
    pub fn next_distribution(&self, context: &[u32]) -> Vec<f64> {
        assert!(!context.is_empty(), "context must include BOS");
        let start = context.len().saturating_sub(self.max_context);
        let window = &context[start..];
        let cache = self.forward(window);
        cache.probs.row(window.len() - 1).to_vec()
    }

    /// P(tokens[t] | tokens[..t]) for t = 1…len−1 over a `[BOS, …]` stream;
    /// positions beyond the context window are scored with a sliding window.
    pub fn sequence_probs(&self, tokens: &[u32]) -> Vec<f64> {
        if tokens.len() < 2 {
            return Vec::new();
        }
        let input_len = tokens.len() - 1;
        let head = input_len.min(self.max_context);
        let cache = self.forward(&tokens[..head]);
        let mut out: Vec<f64> =
            (1..=head).map(|t| cache.probs[[t - 1, tokens[t] as usize]]).collect();
        for t in head + 1..tokens.len() {
            let window = &tokens[t - self.max_context..t];
            let cache = self.forward(window);
            out.push(cache.probs[[self.max_context - 1, tokens[t] as usize]]);
        }
        out
    }
}

/// Adam with decoupled weight decay; moments persist across steps.
struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
    wd: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamW {
    fn new(n: usize, lr: f64, wd: f64) -> Self {
        AdamW { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr, wd, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.wd * params[i]);
        }
    }
}
