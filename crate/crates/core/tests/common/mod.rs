//! Independent reference implementations shared by the integration tests.
//! Everything here is written with plain loops over `Vec`s and does not call
//! into the library's numerical code.
#![allow(dead_code)]

use attncond::linalg::Matrix;
use attncond::model::{backward, sample_loss, ModelConfig, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// `softmax(q kᵀ · scale) v` spelled out entry by entry. Returns `(A_i, W)`.
pub fn naive_attention(
    x: &[Vec<f64>],
    wq: &[Vec<f64>],
    wk: &[Vec<f64>],
    wv: &[Vec<f64>],
    scale: f64,
    causal: bool,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let q = naive_matmul(x, wq);
    let k = naive_matmul(x, wk);
    let v = naive_matmul(x, wv);
    let n = x.len();
    let d = wv[0].len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        let live = if causal { i + 1 } else { n };
        let mut logits = vec![f64::NEG_INFINITY; n];
        for j in 0..live {
            let mut dot = 0.0;
            for t in 0..q[i].len() {
                dot += q[i][t] * k[j][t];
            }
            logits[j] = dot * scale;
        }
        let max = logits[..live].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for j in 0..live {
            w[i][j] = (logits[j] - max).exp();
            total += w[i][j];
        }
        for j in 0..live {
            w[i][j] /= total;
        }
    }
    let mut a = vec![vec![0.0; d]; n];
    for i in 0..n {
        for c in 0..d {
            for j in 0..n {
                a[i][c] += w[i][j] * v[j][c];
            }
        }
    }
    (a, w)
}

pub fn naive_layer_norm(x: &[Vec<f64>], gain: &[f64], bias: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(c, v)| (v - mean) / (var + 1e-5).sqrt() * gain[c] + bias[c])
                .collect()
        })
        .collect()
}

pub fn naive_gelu(z: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * z * (1.0 + (c * (z + 0.044715 * z.powi(3))).tanh())
}

/// Parameters with every block (biases and norm gains included) moved off its
/// initial value, so no gradient path is trivially zero.
pub fn perturbed_params(config: &ModelConfig, seed: u64) -> Parameters {
    let mut p = Parameters::init(config, seed);
    let mut r = rng(seed ^ 0x5eed);
    for m in p.blocks_mut() {
        for v in m.as_mut_slice() {
            *v += 0.2 * r.sample::<f64, _>(StandardNormal);
        }
    }
    p
}

#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_block: String,
}

/// Relative error with a floor so entries whose true gradient is ~0 are judged
/// on absolute error. Central differences at eps=1e-5 on an O(1) loss carry
/// ~1e-10 of round-off, so the floor sits at 1e-5.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Compares every analytic gradient entry against a central difference of the loss.
pub fn finite_difference_check(config: &ModelConfig, tokens: &[usize], label: usize, params: &Parameters, eps: f64) -> GradCheck {
    let (grads, _) = backward(tokens, label, params, config).unwrap();
    let names: Vec<String> = grads.blocks().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads.blocks().into_iter().map(|(_, m)| m.as_slice().to_vec()).collect();
    let mut work = params.clone();
    let mut out = GradCheck {
        checked: 0,
        max_rel_err: 0.0,
        worst_block: String::new(),
    };
    for (b, name) in names.iter().enumerate() {
        for i in 0..analytic[b].len() {
            let orig = work.blocks_mut()[b].as_slice()[i];
            work.blocks_mut()[b].as_mut_slice()[i] = orig + eps;
            let up = sample_loss(tokens, label, &work, config).unwrap();
            work.blocks_mut()[b].as_mut_slice()[i] = orig - eps;
            let down = sample_loss(tokens, label, &work, config).unwrap();
            work.blocks_mut()[b].as_mut_slice()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let e = rel_err(analytic[b][i], numeric);
            out.checked += 1;
            if e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst_block = format!("{name}[{i}]");
            }
        }
    }
    out
}

/// Straight-line scalar AdamW, one parameter.
pub struct ScalarAdamW {
    pub w: f64,
    m: f64,
    v: f64,
    t: i32,
}

impl ScalarAdamW {
    pub fn new(w: f64) -> Self {
        ScalarAdamW { w, m: 0.0, v: 0.0, t: 0 }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn step(&mut self, g: f64, lr: f64, wd: f64, b1: f64, b2: f64, eps: f64, warmup: usize) {
        self.t += 1;
        let lr_t = if warmup > 0 && (self.t as usize) < warmup {
            lr * self.t as f64 / warmup as f64
        } else {
            lr
        };
        self.w *= 1.0 - lr_t * wd;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let mh = self.m / (1.0 - b1.powi(self.t));
        let vh = self.v / (1.0 - b2.powi(self.t));
        self.w -= lr_t * mh / (vh.sqrt() + eps);
    }
}

pub fn max_abs_diff(a: &Matrix, b: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for (r, row) in b.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m = m.max((a[(r, c)] - v).abs());
        }
    }
    m
}
