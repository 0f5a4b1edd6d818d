// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture parameters of a pre-norm decoder-only transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub d_ffn: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub rope_theta: f64,
    pub norm_eps: f32,
    /// Reuse the embedding matrix as the unembedding when the checkpoint has
    /// no separate `lm_head.weight`.
    #[serde(default)]
    pub tie_word_embeddings: bool,
    #[serde(default)]
    pub eos_token_id: Option<u32>,
}

impl ModelConfig {
    /// Small config used by tests and the synthetic CLI model.
    pub fn tiny(n_layers: usize) -> Self {
        Self {
            n_layers,
            d_model: 64,
            n_heads: 4,
            n_kv_heads: 2,
            d_ffn: 128,
            vocab_size: 256,
            max_seq_len: 512,
            rope_theta: 10000.0,
            norm_eps: 1e-5,
            tie_word_embeddings: false,
            eos_token_id: None,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn kv_dim(&self) -> usize {
        self.head_dim() * self.n_kv_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_kv_heads", self.n_kv_heads),
            ("d_ffn", self.d_ffn),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.n_heads.is_multiple_of(self.n_kv_heads) {
            return Err(Error::Config(format!(
                "n_heads {} not divisible by n_kv_heads {}",
                self.n_heads, self.n_kv_heads
            )));
        }
        if !self.head_dim().is_multiple_of(2) {
            return Err(Error::Config("head_dim must be even for rotary".into()));
        }
        if !(self.rope_theta > 0.0 && self.rope_theta.is_finite()) {
            return Err(Error::Config("rope_theta must be positive".into()));
        }
        if !(self.norm_eps > 0.0 && self.norm_eps.is_finite()) {
            return Err(Error::Config("norm_eps must be positive".into()));
        }
        Ok(())
    }

    /// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::ConfigParse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut cfg = PartialConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| err(line_no, format!("`{key}`: expected integer, got `{value}`")))
            };
            match key {
                "n_layers" => cfg.n_layers = Some(int()?),
                "d_model" => cfg.d_model = Some(int()?),
                "n_heads" => cfg.n_heads = Some(int()?),
                "n_kv_heads" => cfg.n_kv_heads = Some(int()?),
                "d_ffn" => cfg.d_ffn = Some(int()?),
                "vocab_size" => cfg.vocab_size = Some(int()?),
                "max_seq_len" => cfg.max_seq_len = Some(int()?),
                "rope_theta" => {
                    cfg.rope_theta = Some(
                        value
                            .parse()
                            .map_err(|_| err(line_no, format!("`rope_theta`: expected number, got `{value}`")))?,
                    )
                }
                "norm_eps" => {
                    cfg.norm_eps = Some(
                        value
                            .parse()
                            .map_err(|_| err(line_no, format!("`norm_eps`: expected number, got `{value}`")))?,
                    )
                }
                "tie_word_embeddings" => {
                    cfg.tie =
                        Some(value.parse().map_err(|_| {
                            err(line_no, format!("`tie_word_embeddings`: expected bool, got `{value}`"))
                        })?)
                }
                "eos_token_id" => cfg.eos = Some(int()? as u32),
                other => return Err(err(line_no, format!("unknown key `{other}`"))),
            }
        }
        let need = |v: Option<usize>, name: &str| v.ok_or_else(|| err(0, format!("missing key `{name}`")));
        let n_heads = need(cfg.n_heads, "n_heads")?;
        let config = ModelConfig {
            n_layers: need(cfg.n_layers, "n_layers")?,
            d_model: need(cfg.d_model, "d_model")?,
            n_heads,
            n_kv_heads: cfg.n_kv_heads.unwrap_or(n_heads),
            d_ffn: need(cfg.d_ffn, "d_ffn")?,
            vocab_size: need(cfg.vocab_size, "vocab_size")?,
            max_seq_len: need(cfg.max_seq_len, "max_seq_len")?,
            rope_theta: cfg.rope_theta.unwrap_or(10000.0),
            norm_eps: cfg.norm_eps.unwrap_or(1e-5),
            tie_word_embeddings: cfg.tie.unwrap_or(false),
            eos_token_id: cfg.eos,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_layers = {}", self.n_layers);
        let _ = writeln!(s, "d_model = {}", self.d_model);
        let _ = writeln!(s, "n_heads = {}", self.n_heads);
        let _ = writeln!(s, "n_kv_heads = {}", self.n_kv_heads);
        let _ = writeln!(s, "d_ffn = {}", self.d_ffn);
        let _ = writeln!(s, "vocab_size = {}", self.vocab_size);
        let _ = writeln!(s, "max_seq_len = {}", self.max_seq_len);
        let _ = writeln!(s, "rope_theta = {}", self.rope_theta);
        let _ = writeln!(s, "norm_eps = {:e}", self.norm_eps);
        let _ = writeln!(s, "tie_word_embeddings = {}", self.tie_word_embeddings);
        if let Some(eos) = self.eos_token_id {
            let _ = writeln!(s, "eos_token_id = {eos}");
        }
        s
    }
}

#[derive(Default)]
struct PartialConfig {
    n_layers: Option<usize>,
    d_model: Option<usize>,
    n_heads: Option<usize>,
    n_kv_heads: Option<usize>,
    d_ffn: Option<usize>,
    vocab_size: Option<usize>,
    max_seq_len: Option<usize>,
    rope_theta: Option<f64>,
    norm_eps: Option<f32>,
    tie: Option<bool>,
    eos: Option<u32>,
}
