// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scalar f32 kernels with a fixed accumulation order.
//!
//! Every reduction here is evaluated in the same order no matter which code
//! path calls it, so two routes through the model that feed identical inputs
//! produce identical bits.

use rayon::prelude::*;

const LANES: usize = 8;

/// Rows x cols above which `matvec` splits rows across the rayon pool.
/// Row results do not depend on scheduling.
const PAR_THRESHOLD: usize = 1 << 20;

/// Dot product: 8 interleaved partial sums, combined lane 0..7, then the tail.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / LANES;
    let mut acc = [0.0f32; LANES];
    for c in 0..chunks {
        let base = c * LANES;
        let xa = &a[base..base + LANES];
        let xb = &b[base..base + LANES];
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut sum = 0.0f32;
    for v in acc {
        sum += v;
    }
    for k in chunks * LANES..a.len() {
        sum += a[k] * b[k];
    }
    sum
}

/// `out[r] = dot(w[r, :], x)` for a row-major `rows x x.len()` matrix.
pub fn matvec(w: &[f32], x: &[f32], out: &mut [f32]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    if w.len() >= PAR_THRESHOLD {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(r, o)| *o = dot(&w[r * cols..(r + 1) * cols], x));
    } else {
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(&w[r * cols..(r + 1) * cols], x);
        }
    }
}

pub fn rms_norm(x: &[f32], gain: &[f32], eps: f32, out: &mut [f32]) {
    let mut ss = 0.0f32;
    for v in x {
        ss += v * v;
    }
    let inv = 1.0 / (ss / x.len() as f32 + eps).sqrt();
    for ((o, v), g) in out.iter_mut().zip(x).zip(gain) {
        *o = v * inv * g;
    }
}

#[inline]
pub fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// In-place softmax; max-subtracted, summed front to back.
pub fn softmax(x: &mut [f32]) {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Natural-log probability of `logits[idx]` under softmax, evaluated in f64.
pub fn log_prob(logits: &[f32], idx: usize) -> f64 {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut sum = 0.0f64;
    for &v in logits {
        sum += (v as f64 - max).exp();
    }
    (logits[idx] as f64 - max) - sum.ln()
}

/// Greedy choice: highest logit, lowest id on exact ties.
pub fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

pub fn all_finite(x: &[f32]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Rotary tables for one position, half-split ("rotate half") layout.
#[derive(Debug, Clone)]
pub struct Rope {
    head_dim: usize,
    inv_freq: Vec<f64>,
}

impl Rope {
    pub fn new(head_dim: usize, theta: f64) -> Self {
        let half = head_dim / 2;
        let inv_freq = (0..half)
            .map(|i| 1.0 / theta.powf((2 * i) as f64 / head_dim as f64))
            .collect();
        Self { head_dim, inv_freq }
    }

    /// Rotates every `head_dim`-wide head in `x` for position `pos`.
    pub fn apply(&self, x: &mut [f32], pos: usize) {
        let half = self.head_dim / 2;
        for head in x.chunks_exact_mut(self.head_dim) {
            for (i, f) in self.inv_freq.iter().enumerate() {
                let angle = pos as f64 * f;
                let (sin, cos) = (angle.sin() as f32, angle.cos() as f32);
                let a = head[i];
                let b = head[i + half];
                head[i] = a * cos - b * sin;
                head[i + half] = b * cos + a * sin;
            }
        }
    }
}
