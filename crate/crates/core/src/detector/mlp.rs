//! Fully connected neural expert: one rectified hidden layer whose width is
//! derived from the input size, a logistic output unit, and mini-batch
//! gradient descent on log-loss. Parameters live in one flat vector so the
//! analytic gradients can be probed with finite differences.
//!
//! Inputs are expected to be standardized by the caller; the ensemble applies
//! its training-split statistics before calling in.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{validate_training_input, DetectorError};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MlpConfig {
    /// hidden_dim = hidden_factor × input_dim (≥ 1).
    pub hidden_factor: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden_factor: 2, epochs: 80, batch_size: 32, lr: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralExpert {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Layout: W1 (input_dim × hidden) | b1 (hidden) | w2 (hidden) | b2 (1).
    pub params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl NeuralExpert {
    fn param_len(input_dim: usize, hidden_dim: usize) -> usize {
        input_dim * hidden_dim + hidden_dim + hidden_dim + 1
    }

    pub fn new(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = vec![0.0; Self::param_len(input_dim, hidden_dim)];
        let r1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        for p in &mut params[..input_dim * hidden_dim] {
            *p = rng.gen_range(-r1..=r1);
        }
        let r2 = (6.0 / (hidden_dim + 1) as f64).sqrt();
        let w2_off = input_dim * hidden_dim + hidden_dim;
        for p in &mut params[w2_off..w2_off + hidden_dim] {
            *p = rng.gen_range(-r2..=r2);
        }
        NeuralExpert { input_dim, hidden_dim, params }
    }

    pub fn train(
        x: &[Vec<f64>],
        y: &[bool],
        cfg: &MlpConfig,
        seed: u64,
    ) -> Result<Self, DetectorError> {
        validate_training_input(x, y)?;
        let input_dim = x[0].len();
        let hidden_dim = (cfg.hidden_factor * input_dim).max(1);
        let mut model = NeuralExpert::new(input_dim, hidden_dim, seed);
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(1));
        let mut order: Vec<usize> = (0..x.len()).collect();
        let batch = cfg.batch_size.max(1);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let bx: Vec<&[f64]> = chunk.iter().map(|&i| x[i].as_slice()).collect();
                let by: Vec<bool> = chunk.iter().map(|&i| y[i]).collect();
                let (_, grads) = model.loss_and_grads(&bx, &by);
                for (p, g) in model.params.iter_mut().zip(&grads) {
                    *p -= cfg.lr * g;
                }
            }
        }
        Ok(model)
    }

    fn forward_hidden(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let w1 = &self.params[..d * h];
        let b1 = &self.params[d * h..d * h + h];
        let mut z1 = b1.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            let row = &w1[i * h..(i + 1) * h];
            for (j, &w) in row.iter().enumerate() {
                z1[j] += xi * w;
            }
        }
        let a1 = z1.iter().map(|&z| z.max(0.0)).collect();
        (z1, a1)
    }

    /// f_MLP(x) ∈ (0, 1).
    pub fn predict_prob(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.input_dim);
        let (d, h) = (self.input_dim, self.hidden_dim);
        let (_, a1) = self.forward_hidden(x);
        let w2 = &self.params[d * h + h..d * h + h + h];
        let b2 = self.params[d * h + h + h];
        let z2 = a1.iter().zip(w2).map(|(a, w)| a * w).sum::<f64>() + b2;
        sigmoid(z2)
    }

    /// Mean log-loss over the batch plus analytic parameter gradients.
    pub fn loss_and_grads(&self, x: &[&[f64]], y: &[bool]) -> (f64, Vec<f64>) {
        assert_eq!(x.len(), y.len());
        let (d, h) = (self.input_dim, self.hidden_dim);
        let w2_off = d * h + h;
        let b2_off = w2_off + h;
        let w2 = self.params[w2_off..w2_off + h].to_vec();
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let bsz = x.len() as f64;
        for (xi, &yi) in x.iter().zip(y) {
            let (z1, a1) = self.forward_hidden(xi);
            let z2 = a1.iter().zip(&w2).map(|(a, w)| a * w).sum::<f64>() + self.params[b2_off];
            let p = sigmoid(z2);
            let target = if yi { 1.0 } else { 0.0 };
            let pc = p.clamp(1e-12, 1.0 - 1e-12);
            loss += -(target * pc.ln() + (1.0 - target) * (1.0 - pc).ln()) / bsz;
            let dz2 = (p - target) / bsz;
            grads[b2_off] += dz2;
            for j in 0..h {
                grads[w2_off + j] += dz2 * a1[j];
            }
            for j in 0..h {
                if z1[j] > 0.0 {
                    let dz1 = dz2 * w2[j];
                    grads[d * h + j] += dz1;
                    for (i, &xv) in xi.iter().enumerate() {
                        grads[i * h + j] += dz1 * xv;
                    }
                }
            }
        }
        (loss, grads)
    }

    pub fn loss(&self, x: &[&[f64]], y: &[bool]) -> f64 {
        let bsz = x.len() as f64;
        x.iter()
            .zip(y)
            .map(|(xi, &yi)| {
                let p = self.predict_prob(xi).clamp(1e-12, 1.0 - 1e-12);
                if yi {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / bsz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<bool>) {
        // Two linearly separable 2-D clusters on the diagonal.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..25 {
            let t = i as f64 * 0.04;
            x.push(vec![-2.0 + t, -2.0 - t]);
            y.push(false);
            x.push(vec![2.0 - t, 2.0 + t]);
            y.push(true);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_reach_high_training_accuracy() {
        let (x, y) = blobs();
        let model = NeuralExpert::train(&x, &y, &MlpConfig::default(), 3).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(xi, &yi)| (model.predict_prob(xi) >= 0.5) == yi)
            .count();
        assert!(correct as f64 / x.len() as f64 >= 0.99);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        // 3-feature toy net probed coordinate-wise.
        let mut model = NeuralExpert::new(3, 4, 9);
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for p in &mut model.params {
            *p += rng.gen_range(-0.5..=0.5);
        }
        let rows = [
            vec![0.3, -1.2, 0.5],
            vec![-0.7, 0.4, 1.1],
            vec![1.5, 0.2, -0.8],
            vec![-0.1, -0.3, 0.9],
        ];
        let x: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let y = [true, false, true, false];
        let (_, analytic) = model.loss_and_grads(&x, &y);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..model.params.len() {
            let orig = model.params[i];
            model.params[i] = orig + h;
            let lp = model.loss(&x, &y);
            model.params[i] = orig - h;
            let lm = model.loss(&x, &y);
            model.params[i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        assert!(worst < 1e-3, "worst relative gradient error {worst}");
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs();
        let a = NeuralExpert::train(&x, &y, &MlpConfig::default(), 5).unwrap();
        let b = NeuralExpert::train(&x, &y, &MlpConfig::default(), 5).unwrap();
        assert_eq!(a, b);
        let c = NeuralExpert::train(&x, &y, &MlpConfig::default(), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn hidden_width_follows_input_size() {
        let (x, y) = blobs();
        let model = NeuralExpert::train(&x, &y, &MlpConfig::default(), 1).unwrap();
        assert_eq!(model.hidden_dim, 2 * model.input_dim);
    }

    #[test]
    fn degenerate_labels_are_rejected() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(
            NeuralExpert::train(&x, &[true, true], &MlpConfig::default(), 0),
            Err(DetectorError::DegenerateLabels)
        ));
    }
}
