//! The tMIA attack model: a two-layer perceptron over standardized loss
//! trajectories with a sigmoid output.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::seed::SeedPath;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    inputs: usize,
    hidden: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
    /// `[w1 (hidden × inputs), b1 (hidden), w2 (hidden), b2]`, flattened.
    theta: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Mlp {
    fn layout(&self) -> (usize, usize, usize, usize) {
        let w1 = 0;
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden;
        (w1, b1, w2, b2)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Returns the logit and the hidden activations.
    fn forward(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (w1, b1, w2, b2) = self.layout();
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.theta[w1 + j * self.inputs..][..self.inputs];
                let z = self.theta[b1 + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        let z = self.theta[b2] + h.iter().zip(&self.theta[w2..w2 + self.hidden]).map(|(a, w)| a * w).sum::<f64>();
        (z, h)
    }

    /// Membership probability of one raw feature vector.
    pub fn predict(&self, features: &[f64]) -> f64 {
        sigmoid(self.forward(&self.standardize(features)).0)
    }

    /// Fits the network with binary cross-entropy, minibatches of 64 and Adam.
    pub fn train(
        features: &[Vec<f64>],
        labels: &[bool],
        hidden: usize,
        epochs: usize,
        adam: Adam,
        seed: SeedPath,
    ) -> Result<Self> {
        let n = features.len();
        if n == 0 || n != labels.len() {
            return Err(Error::dim("attack model needs one label per non-empty feature row"));
        }
        let inputs = features[0].len();
        if inputs == 0 || features.iter().any(|f| f.len() != inputs) {
            return Err(Error::dim("ragged or empty trajectory features"));
        }
        let mut mean = vec![0.0; inputs];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v / n as f64;
            }
        }
        let mut std = vec![0.0; inputs];
        for f in features {
            for ((s, v), m) in std.iter_mut().zip(f).zip(&mean) {
                *s += (v - m).powi(2) / n as f64;
            }
        }
        let std: Vec<f64> = std.into_iter().map(|s| s.sqrt().max(1e-8)).collect();

        let mut rng = seed.rng();
        let mut mlp = Mlp {
            inputs,
            hidden,
            mean,
            std,
            theta: vec![0.0; hidden * inputs + 2 * hidden + 1],
        };
        let (w1, b1, w2, _) = mlp.layout();
        let n1 = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("valid std");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid std");
        for w in &mut mlp.theta[w1..b1] {
            *w = n1.sample(&mut rng);
        }
        for w in &mut mlp.theta[w2..w2 + hidden] {
            *w = n2.sample(&mut rng);
        }

        let xs: Vec<Vec<f64>> = features.iter().map(|f| mlp.standardize(f)).collect();
        let mut m = vec![0.0; mlp.theta.len()];
        let mut v = vec![0.0; mlp.theta.len()];
        let mut t = 0i32;
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(64) {
                let mut g = vec![0.0; mlp.theta.len()];
                for &i in batch {
                    let (z, h) = mlp.forward(&xs[i]);
                    let y = if labels[i] { 1.0 } else { 0.0 };
                    let dz = (sigmoid(z) - y) / batch.len() as f64;
                    let (w1, b1, w2, b2) = mlp.layout();
                    g[b2] += dz;
                    for j in 0..hidden {
                        g[w2 + j] += dz * h[j];
                        if h[j] > 0.0 {
                            let dh = dz * mlp.theta[w2 + j];
                            g[b1 + j] += dh;
                            for (k, x) in xs[i].iter().enumerate() {
                                g[w1 + j * inputs + k] += dh * x;
                            }
                        }
                    }
                }
                t += 1;
                let c1 = 1.0 - adam.beta1.powi(t);
                let c2 = 1.0 - adam.beta2.powi(t);
                for k in 0..g.len() {
                    m[k] = adam.beta1 * m[k] + (1.0 - adam.beta1) * g[k];
                    v[k] = adam.beta2 * v[k] + (1.0 - adam.beta2) * g[k] * g[k];
                    mlp.theta[k] -= adam.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + adam.eps);
                }
            }
        }
        if mlp.theta.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("attack model diverged".into()));
        }
        Ok(mlp)
    }
}
