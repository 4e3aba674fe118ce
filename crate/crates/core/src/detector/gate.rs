//! Softmax gate: a small fully connected network mapping a feature vector to
//! two mixing weights (g_CB, g_MLP) on the probability simplex. Trained with
//! both experts frozen, minimizing log-loss of the fused prediction
//! p = g_CB·f_CB + g_MLP·f_MLP, which is well-defined even though the tree
//! expert itself is not differentiable.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{validate_training_input, DetectorError};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GateConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig { hidden: 16, epochs: 100, batch_size: 32, lr: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateNetwork {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Layout: W1 (input_dim × hidden) | b1 (hidden) | W2 (hidden × 2) | b2 (2).
    pub params: Vec<f64>,
}

impl GateNetwork {
    fn param_len(d: usize, h: usize) -> usize {
        d * h + h + h * 2 + 2
    }

    pub fn new(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = vec![0.0; Self::param_len(input_dim, hidden_dim)];
        let r1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        for p in &mut params[..input_dim * hidden_dim] {
            *p = rng.gen_range(-r1..=r1);
        }
        let r2 = (6.0 / (hidden_dim + 2) as f64).sqrt();
        let w2_off = input_dim * hidden_dim + hidden_dim;
        for p in &mut params[w2_off..w2_off + hidden_dim * 2] {
            *p = rng.gen_range(-r2..=r2);
        }
        GateNetwork { input_dim, hidden_dim, params }
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, [f64; 2]) {
        assert_eq!(x.len(), self.input_dim);
        let (d, h) = (self.input_dim, self.hidden_dim);
        let w1 = &self.params[..d * h];
        let b1 = &self.params[d * h..d * h + h];
        let w2_off = d * h + h;
        let w2 = &self.params[w2_off..w2_off + h * 2];
        let b2 = &self.params[w2_off + h * 2..];

        let mut z1 = b1.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            for j in 0..h {
                z1[j] += xi * w1[i * h + j];
            }
        }
        let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let mut logits = [b2[0], b2[1]];
        for j in 0..h {
            logits[0] += a1[j] * w2[j * 2];
            logits[1] += a1[j] * w2[j * 2 + 1];
        }
        (z1, a1, logits)
    }

    /// Gate weights (g_CB, g_MLP): nonnegative, summing to 1 by construction.
    pub fn weights(&self, x: &[f64]) -> [f64; 2] {
        let (_, _, logits) = self.forward(x);
        softmax2(logits)
    }

    /// Trains against frozen expert outputs `experts[i] = (f_CB, f_MLP)`.
    pub fn train(
        x: &[Vec<f64>],
        experts: &[(f64, f64)],
        y: &[bool],
        cfg: &GateConfig,
        seed: u64,
    ) -> Result<Self, DetectorError> {
        validate_training_input(x, y)?;
        if experts.len() != x.len() {
            return Err(DetectorError::ShapeMismatch { rows: x.len(), labels: experts.len() });
        }
        let input_dim = x[0].len();
        let mut model = GateNetwork::new(input_dim, cfg.hidden.max(1), seed);
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(1));
        let mut order: Vec<usize> = (0..x.len()).collect();
        let batch = cfg.batch_size.max(1);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let grads = model.batch_grads(chunk, x, experts, y);
                for (p, g) in model.params.iter_mut().zip(&grads) {
                    *p -= cfg.lr * g;
                }
            }
        }
        Ok(model)
    }

    fn batch_grads(
        &self,
        chunk: &[usize],
        x: &[Vec<f64>],
        experts: &[(f64, f64)],
        y: &[bool],
    ) -> Vec<f64> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let w2_off = d * h + h;
        let mut grads = vec![0.0; self.params.len()];
        let bsz = chunk.len() as f64;
        for &i in chunk {
            let (z1, a1, logits) = self.forward(&x[i]);
            let g = softmax2(logits);
            let (f_cb, f_mlp) = experts[i];
            let p = (g[0] * f_cb + g[1] * f_mlp).clamp(1e-7, 1.0 - 1e-7);
            let target = if y[i] { 1.0 } else { 0.0 };
            let dp = (p - target) / (p * (1.0 - p)) / bsz;
            let dg = [dp * f_cb, dp * f_mlp];
            let dot = dg[0] * g[0] + dg[1] * g[1];
            let dlogits = [g[0] * (dg[0] - dot), g[1] * (dg[1] - dot)];

            grads[w2_off + h * 2] += dlogits[0];
            grads[w2_off + h * 2 + 1] += dlogits[1];
            let w2 = &self.params[w2_off..w2_off + h * 2];
            for j in 0..h {
                grads[w2_off + j * 2] += dlogits[0] * a1[j];
                grads[w2_off + j * 2 + 1] += dlogits[1] * a1[j];
                if z1[j] > 0.0 {
                    let dz1 = dlogits[0] * w2[j * 2] + dlogits[1] * w2[j * 2 + 1];
                    grads[d * h + j] += dz1;
                    for (k, &xv) in x[i].iter().enumerate() {
                        grads[k * h + j] += dz1 * xv;
                    }
                }
            }
        }
        grads
    }

    /// Mean fused log-loss with this gate and frozen experts.
    pub fn fused_loss(&self, x: &[Vec<f64>], experts: &[(f64, f64)], y: &[bool]) -> f64 {
        let n = x.len() as f64;
        x.iter()
            .zip(experts)
            .zip(y)
            .map(|((xi, &(f_cb, f_mlp)), &yi)| {
                let g = self.weights(xi);
                let p = (g[0] * f_cb + g[1] * f_mlp).clamp(1e-12, 1.0 - 1e-12);
                if yi {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / n
    }
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let sum = e0 + e1;
    [e0 / sum, e1 / sum]
}
