// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-norm decoder-only transformer (RMSNorm, rotary attention with grouped
//! KV heads, gated SiLU feed-forward) evaluated one position at a time.
//!
//! Prefill runs every prompt position through the same single-position kernel
//! that `decode_step` uses, so a prefill of `p ++ [t]` and a prefill of `p`
//! followed by `decode_step(t)` produce the same bits.
//!
//! Per layer `k`, at each position:
//!
//! ```text
//! a^k = Attn(RMSNorm(h_k))
//! f^k = FFN(RMSNorm(h_k + a^k))
//! h_{k+1} = (h_k + a^k) + f^k          // o^k
//! ```
//!
//! The recorded `boundary_states` are `h_0 .. h_N` at the last position.

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub mod cache;
pub mod config;
pub mod ops;
pub mod tokenizer;
pub mod weights;

pub use cache::KvCache;
pub use config::ModelConfig;
pub use tokenizer::{TokenSequence, Tokenizer, VocabTokenizer};
pub use weights::{LayerWeights, ModelWeights};

use crate::error::{Error, Result, Stage};
use crate::transplant::TransplantPair;
use ops::Rope;

/// Default generation budget.
pub const DEFAULT_MAX_NEW: usize = 20;

/// Activations of one layer at the last prompt position.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub layer: usize,
    /// Attention block output before the residual add.
    pub attn_out: Vec<f32>,
    /// Feed-forward block output before the residual add.
    pub ffn_out: Vec<f32>,
    /// Residual stream after the layer.
    pub residual_out: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct PrefillResult {
    pub logits: Vec<f32>,
    pub cache: KvCache,
    /// One per layer when recorded, empty otherwise.
    pub traces: Vec<LayerTrace>,
    /// `n_layers + 1` states when recorded, empty otherwise.
    pub boundary_states: Vec<Vec<f32>>,
}

/// Layer-evaluation counters. One unit is one layer evaluated at one position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardStats {
    pub prefill_layer_evals: u64,
    pub decode_layer_evals: u64,
    /// Times an activation substitution was applied.
    pub substitutions: u64,
}

impl ForwardStats {
    pub fn total_layer_evals(&self) -> u64 {
        self.prefill_layer_evals + self.decode_layer_evals
    }

    pub fn merge(&mut self, other: &ForwardStats) {
        self.prefill_layer_evals += other.prefill_layer_evals;
        self.decode_layer_evals += other.decode_layer_evals;
        self.substitutions += other.substitutions;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Prefill,
    Decode,
}

/// Replacement applied to one layer at the last prompt position.
#[derive(Debug, Clone, Copy)]
pub enum Substitution<'a> {
    /// Replace the feed-forward output before the residual add.
    Ffn { layer: usize, vector: &'a [f32] },
    /// Replace the layer's whole residual output.
    Hidden { layer: usize, vector: &'a [f32] },
}

impl Substitution<'_> {
    fn layer(&self) -> usize {
        match self {
            Substitution::Ffn { layer, .. } | Substitution::Hidden { layer, .. } => *layer,
        }
    }

    fn vector(&self) -> &[f32] {
        match self {
            Substitution::Ffn { vector, .. } | Substitution::Hidden { vector, .. } => vector,
        }
    }
}

/// Greedy continuation of a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub tokens: Vec<u32>,
    pub text: String,
    /// Natural-log probability of each chosen token.
    pub logprobs: Vec<f64>,
    /// Transplant pair that produced this generation, `None` for a baseline.
    pub pair: Option<TransplantPair>,
}

impl Generation {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Default)]
struct Recording {
    traces: Vec<LayerTrace>,
    boundaries: Vec<Vec<f32>>,
}

/// Immutable weights plus architecture parameters and tokenizer.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    weights: ModelWeights,
    tokenizer: Tokenizer,
    rope: Rope,
}

impl Model {
    pub fn from_parts(config: ModelConfig, weights: ModelWeights, tokenizer: Tokenizer) -> Result<Self> {
        config.validate()?;
        weights.validate(&config)?;
        let rope = Rope::new(config.head_dim(), config.rope_theta);
        Ok(Self {
            config,
            weights,
            tokenizer,
            rope,
        })
    }

    /// Loads a safetensors checkpoint and a `key = value` config file.
    pub fn load(weights_path: &Path, config_path: &Path) -> Result<Self> {
        let config = ModelConfig::from_file(config_path)?;
        let weights = ModelWeights::load_safetensors(weights_path, &config)?;
        Self::from_parts(config, weights, Tokenizer::Bytes)
    }

    /// Seeded synthetic model with the byte tokenizer.
    pub fn synthetic(seed: u64, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let weights = ModelWeights::synthetic(seed, &config);
        Self::from_parts(config, weights, Tokenizer::Bytes)
    }

    pub fn with_tokenizer(mut self, tokenizer: Tokenizer) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn n_layers(&self) -> usize {
        self.config.n_layers
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    pub fn encode(&self, text: &str) -> Result<TokenSequence> {
        self.tokenizer.encode(text)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        self.tokenizer.decode(ids)
    }

    pub fn new_cache(&self) -> KvCache {
        KvCache::new(self.config.n_layers, self.config.kv_dim(), self.config.max_seq_len)
    }

    fn check_prompt(&self, ids: &[u32]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        if ids.len() > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_seq_len,
            });
        }
        for &id in ids {
            self.check_token(id)?;
        }
        Ok(())
    }

    fn check_token(&self, id: u32) -> Result<()> {
        if id as usize >= self.config.vocab_size {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    pub(crate) fn check_substitution(&self, sub: &Substitution<'_>) -> Result<()> {
        if sub.layer() >= self.config.n_layers {
            return Err(Error::InvalidArgument(format!(
                "substitution layer {} out of range for {} layers",
                sub.layer(),
                self.config.n_layers
            )));
        }
        if sub.vector().len() != self.config.d_model {
            return Err(Error::InvalidArgument(format!(
                "substitution vector has length {}, model d_model is {}",
                sub.vector().len(),
                self.config.d_model
            )));
        }
        Ok(())
    }

    fn embed(&self, id: u32) -> Result<Vec<f32>> {
        let d = self.config.d_model;
        let row = self.weights.embed[id as usize * d..(id as usize + 1) * d].to_vec();
        if !ops::all_finite(&row) {
            return Err(Error::NonFinite {
                layer: 0,
                stage: Stage::Embedding,
            });
        }
        Ok(row)
    }

    /// Attention block at `pos`; writes this position's K/V on `layer`.
    fn attention(&self, layer: usize, h: &[f32], pos: usize, cache: &mut KvCache, rope: &Rope) -> Vec<f32> {
        let cfg = &self.config;
        let w = &self.weights.layers[layer];
        let (d, kv_dim, hd) = (cfg.d_model, cfg.kv_dim(), cfg.head_dim());
        let mut xn = vec![0.0; d];
        ops::rms_norm(h, &w.attn_norm, cfg.norm_eps, &mut xn);
        let mut q = vec![0.0; d];
        let mut k = vec![0.0; kv_dim];
        let mut v = vec![0.0; kv_dim];
        ops::matvec(&w.wq, &xn, &mut q);
        ops::matvec(&w.wk, &xn, &mut k);
        ops::matvec(&w.wv, &xn, &mut v);
        rope.apply(&mut q, pos);
        rope.apply(&mut k, pos);
        cache.write(layer, pos, &k, &v);

        let group = cfg.n_heads / cfg.n_kv_heads;
        let scale = 1.0 / (hd as f32).sqrt();
        let mut heads = vec![0.0f32; d];
        let mut scores = vec![0.0f32; pos + 1];
        for head in 0..cfg.n_heads {
            let kvh = head / group;
            let qh = &q[head * hd..(head + 1) * hd];
            for (t, s) in scores.iter_mut().enumerate() {
                *s = ops::dot(qh, &cache.key(layer, t)[kvh * hd..(kvh + 1) * hd]) * scale;
            }
            ops::softmax(&mut scores);
            let out = &mut heads[head * hd..(head + 1) * hd];
            for (t, p) in scores.iter().enumerate() {
                let vt = &cache.value(layer, t)[kvh * hd..(kvh + 1) * hd];
                for (o, x) in out.iter_mut().zip(vt) {
                    *o += p * x;
                }
            }
        }
        let mut a = vec![0.0; d];
        ops::matvec(&w.wo, &heads, &mut a);
        a
    }

    fn feed_forward(&self, layer: usize, h: &[f32]) -> Vec<f32> {
        let cfg = &self.config;
        let w = &self.weights.layers[layer];
        let mut xn = vec![0.0; cfg.d_model];
        ops::rms_norm(h, &w.ffn_norm, cfg.norm_eps, &mut xn);
        let mut gate = vec![0.0; cfg.d_ffn];
        let mut up = vec![0.0; cfg.d_ffn];
        ops::matvec(&w.w_gate, &xn, &mut gate);
        ops::matvec(&w.w_up, &xn, &mut up);
        for (g, u) in gate.iter_mut().zip(&up) {
            *g = ops::silu(*g) * u;
        }
        let mut f = vec![0.0; cfg.d_model];
        ops::matvec(&w.w_down, &gate, &mut f);
        f
    }

    /// Runs `layers` at position `pos`, updating `h` in place.
    #[allow(clippy::too_many_arguments)]
    fn run_layers(
        &self,
        h: &mut Vec<f32>,
        pos: usize,
        layers: Range<usize>,
        cache: &mut KvCache,
        sub: Option<Substitution<'_>>,
        mut rec: Option<&mut Recording>,
        stats: &mut ForwardStats,
        phase: Phase,
    ) -> Result<()> {
        let rope = &self.rope;
        for layer in layers {
            match phase {
                Phase::Prefill => stats.prefill_layer_evals += 1,
                Phase::Decode => stats.decode_layer_evals += 1,
            }
            if let Some(r) = rec.as_deref_mut() {
                r.boundaries.push(h.clone());
            }
            let a = self.attention(layer, h, pos, cache, rope);
            if !ops::all_finite(&a) {
                return Err(Error::NonFinite {
                    layer,
                    stage: Stage::Attention,
                });
            }
            let mut h1 = h.clone();
            for (x, y) in h1.iter_mut().zip(&a) {
                *x += y;
            }
            let mut f = self.feed_forward(layer, &h1);
            if let Some(Substitution::Ffn { layer: l, vector }) = sub {
                if l == layer {
                    f.copy_from_slice(vector);
                    stats.substitutions += 1;
                }
            }
            if !ops::all_finite(&f) {
                return Err(Error::NonFinite {
                    layer,
                    stage: Stage::FeedForward,
                });
            }
            for (x, y) in h1.iter_mut().zip(&f) {
                *x += y;
            }
            if let Some(Substitution::Hidden { layer: l, vector }) = sub {
                if l == layer {
                    h1.copy_from_slice(vector);
                    stats.substitutions += 1;
                }
            }
            if !ops::all_finite(&h1) {
                return Err(Error::NonFinite {
                    layer,
                    stage: Stage::Residual,
                });
            }
            if let Some(r) = rec.as_deref_mut() {
                r.traces.push(LayerTrace {
                    layer,
                    attn_out: a,
                    ffn_out: f,
                    residual_out: h1.clone(),
                });
            }
            *h = h1;
        }
        Ok(())
    }

    /// Final norm then unembedding.
    fn unembed(&self, h: &[f32]) -> Result<Vec<f32>> {
        let cfg = &self.config;
        let mut xn = vec![0.0; cfg.d_model];
        ops::rms_norm(h, &self.weights.final_norm, cfg.norm_eps, &mut xn);
        if !ops::all_finite(&xn) {
            return Err(Error::NonFinite {
                layer: cfg.n_layers,
                stage: Stage::FinalNorm,
            });
        }
        let mut logits = vec![0.0; cfg.vocab_size];
        ops::matvec(&self.weights.unembed, &xn, &mut logits);
        if !ops::all_finite(&logits) {
            return Err(Error::NonFinite {
                layer: cfg.n_layers,
                stage: Stage::Logits,
            });
        }
        Ok(logits)
    }

    /// Forward pass over the prompt. With `record`, traces and boundary
    /// states of the last position are kept.
    pub fn prefill(&self, tokens: &TokenSequence, record: bool) -> Result<PrefillResult> {
        self.prefill_with(&tokens.ids, record, None, &mut ForwardStats::default())
    }

    /// Prefill with an optional substitution applied at the last position.
    pub fn prefill_with(
        &self,
        ids: &[u32],
        record: bool,
        sub: Option<Substitution<'_>>,
        stats: &mut ForwardStats,
    ) -> Result<PrefillResult> {
        self.check_prompt(ids)?;
        if let Some(s) = &sub {
            self.check_substitution(s)?;
        }
        let n = self.config.n_layers;
        let mut cache = self.new_cache();
        let mut rec = Recording::default();
        let mut logits = Vec::new();
        let last = ids.len() - 1;
        for (pos, &id) in ids.iter().enumerate() {
            let mut h = self.embed(id)?;
            let is_last = pos == last;
            let sub_here = if is_last { sub } else { None };
            let rec_here = if is_last && record { Some(&mut rec) } else { None };
            self.run_layers(&mut h, pos, 0..n, &mut cache, sub_here, rec_here, stats, Phase::Prefill)?;
            cache.commit(pos);
            if is_last {
                if record {
                    rec.boundaries.push(h.clone());
                }
                logits = self.unembed(&h)?;
            }
        }
        Ok(PrefillResult {
            logits,
            cache,
            traces: rec.traces,
            boundary_states: rec.boundaries,
        })
    }

    /// Recomputes the last committed position from layer `from` onward,
    /// starting from residual state `h`, and returns the new logits. The
    /// position's K/V on layers `from..` are overwritten.
    pub(crate) fn rerun_last_position(
        &self,
        cache: &mut KvCache,
        from: usize,
        mut h: Vec<f32>,
        sub: Option<Substitution<'_>>,
        stats: &mut ForwardStats,
    ) -> Result<Vec<f32>> {
        if let Some(s) = &sub {
            self.check_substitution(s)?;
        }
        let pos = cache
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::InvalidArgument("cache is empty".into()))?;
        let n = self.config.n_layers;
        self.run_layers(&mut h, pos, from..n, cache, sub, None, stats, Phase::Prefill)?;
        self.unembed(&h)
    }

    /// Feeds one token and returns next-token logits.
    pub fn decode_step(&self, cache: &mut KvCache, token: u32) -> Result<Vec<f32>> {
        self.decode_step_with(cache, token, &mut ForwardStats::default())
    }

    pub fn decode_step_with(&self, cache: &mut KvCache, token: u32, stats: &mut ForwardStats) -> Result<Vec<f32>> {
        let pos = cache.len();
        if pos >= cache.capacity() {
            return Err(Error::CacheOverflow(cache.capacity()));
        }
        self.check_token(token)?;
        let mut h = self.embed(token)?;
        self.run_layers(
            &mut h,
            pos,
            0..self.config.n_layers,
            cache,
            None,
            None,
            stats,
            Phase::Decode,
        )?;
        cache.commit(pos);
        self.unembed(&h)
    }

    /// Greedy generation from the prompt.
    pub fn generate(&self, tokens: &TokenSequence, max_new: usize, stop_ids: &HashSet<u32>) -> Result<Generation> {
        self.check_prompt(&tokens.ids)?;
        if max_new == 0 {
            return Ok(self.empty_generation());
        }
        let mut stats = ForwardStats::default();
        let mut pre = self.prefill_with(&tokens.ids, false, None, &mut stats)?;
        let logits = std::mem::take(&mut pre.logits);
        self.continue_generation(logits, &mut pre.cache, max_new, stop_ids, &mut stats)
    }

    pub(crate) fn empty_generation(&self) -> Generation {
        Generation {
            tokens: Vec::new(),
            text: String::new(),
            logprobs: Vec::new(),
            pair: None,
        }
    }

    /// Greedy decoding given the logits that predict the first new token and
    /// a cache holding the prompt.
    pub fn continue_generation(
        &self,
        first_logits: Vec<f32>,
        cache: &mut KvCache,
        max_new: usize,
        stop_ids: &HashSet<u32>,
        stats: &mut ForwardStats,
    ) -> Result<Generation> {
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        let mut logits = first_logits;
        for step in 0..max_new {
            let next = ops::argmax(&logits);
            if stop_ids.contains(&(next as u32)) {
                break;
            }
            tokens.push(next as u32);
            logprobs.push(ops::log_prob(&logits, next));
            if step + 1 == max_new {
                break;
            }
            logits = self.decode_step_with(cache, next as u32, stats)?;
        }
        Ok(Generation {
            text: self.tokenizer.decode_lossy(&tokens),
            tokens,
            logprobs,
            pair: None,
        })
    }

    /// Logit-lens view: final norm then unembedding of an arbitrary residual
    /// state. Returns the `top_k` tokens by logit, ties by lowest id.
    pub fn intermediate_decode(&self, hidden: &[f32], top_k: usize) -> Result<Vec<(u32, f32)>> {
        if top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be >= 1".into()));
        }
        if hidden.len() != self.config.d_model {
            return Err(Error::InvalidArgument(format!(
                "hidden state has length {}, expected {}",
                hidden.len(),
                self.config.d_model
            )));
        }
        if !ops::all_finite(hidden) {
            return Err(Error::NonFiniteHidden);
        }
        let logits = self.unembed(hidden)?;
        let mut order: Vec<u32> = (0..logits.len() as u32).collect();
        order.sort_by(|&a, &b| logits[b as usize].total_cmp(&logits[a as usize]).then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .take(top_k)
            .map(|id| (id, logits[id as usize]))
            .collect())
    }

    /// Intermediate decoding of every layer's output from a recorded prefill.
    pub fn logit_lens(&self, prefill: &PrefillResult, top_k: usize) -> Result<Vec<Vec<(u32, f32)>>> {
        if prefill.boundary_states.len() != self.config.n_layers + 1 {
            return Err(Error::InvalidArgument("prefill was not recorded".into()));
        }
        prefill.boundary_states[1..]
            .iter()
            .map(|h| self.intermediate_decode(h, top_k))
            .collect()
    }
}
