// SPDX-License-Identifier: MIT OR Apache-2.0

//! Weight storage, safetensors I/O and seeded synthetic weights.
//!
//! Tensor names follow the Llama checkpoint layout
//! (`model.layers.{i}.self_attn.q_proj.weight`, ...). Matrices are row-major
//! `[out_features, in_features]`.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, TensorView, View};
use safetensors::SafeTensors;

use super::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Vec<f32>,
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub ffn_norm: Vec<f32>,
    pub w_gate: Vec<f32>,
    pub w_up: Vec<f32>,
    pub w_down: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub embed: Vec<f32>,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vec<f32>,
    /// `vocab_size x d_model`.
    pub unembed: Vec<f32>,
}

/// Name and expected shape of every tensor, in a fixed order.
fn tensor_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, kv, f, v) = (cfg.d_model, cfg.kv_dim(), cfg.d_ffn, cfg.vocab_size);
    let mut specs = vec![("model.embed_tokens.weight".to_string(), vec![v, d])];
    for i in 0..cfg.n_layers {
        let p = format!("model.layers.{i}");
        specs.push((format!("{p}.input_layernorm.weight"), vec![d]));
        specs.push((format!("{p}.self_attn.q_proj.weight"), vec![d, d]));
        specs.push((format!("{p}.self_attn.k_proj.weight"), vec![kv, d]));
        specs.push((format!("{p}.self_attn.v_proj.weight"), vec![kv, d]));
        specs.push((format!("{p}.self_attn.o_proj.weight"), vec![d, d]));
        specs.push((format!("{p}.post_attention_layernorm.weight"), vec![d]));
        specs.push((format!("{p}.mlp.gate_proj.weight"), vec![f, d]));
        specs.push((format!("{p}.mlp.up_proj.weight"), vec![f, d]));
        specs.push((format!("{p}.mlp.down_proj.weight"), vec![d, f]));
    }
    specs.push(("model.norm.weight".to_string(), vec![d]));
    specs.push(("lm_head.weight".to_string(), vec![v, d]));
    specs
}

impl ModelWeights {
    /// Checks every tensor length against `cfg`.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.layers.len() != cfg.n_layers {
            return Err(Error::Config(format!(
                "weights have {} layers, config says {}",
                self.layers.len(),
                cfg.n_layers
            )));
        }
        let specs = tensor_specs(cfg);
        for ((name, shape), data) in specs.iter().zip(self.flat()) {
            let expected: usize = shape.iter().product();
            if data.len() != expected {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: vec![data.len()],
                });
            }
        }
        Ok(())
    }

    /// Tensors in `tensor_specs` order.
    fn flat(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = vec![&self.embed];
        for l in &self.layers {
            out.extend([
                l.attn_norm.as_slice(),
                &l.wq,
                &l.wk,
                &l.wv,
                &l.wo,
                &l.ffn_norm,
                &l.w_gate,
                &l.w_up,
                &l.w_down,
            ]);
        }
        out.push(&self.final_norm);
        out.push(&self.unembed);
        out
    }

    /// Seeded weights: uniform in +-1/sqrt(fan_in), unit norm gains.
    pub fn synthetic(seed: u64, cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f32> {
            let s = 1.0 / (fan_in as f32).sqrt();
            (0..n).map(|_| rng.gen_range(-s..s)).collect()
        };
        let (d, kv, f, v) = (cfg.d_model, cfg.kv_dim(), cfg.d_ffn, cfg.vocab_size);
        let embed = uniform(v * d, 1);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerWeights {
                attn_norm: vec![1.0; d],
                wq: uniform(d * d, d),
                wk: uniform(kv * d, d),
                wv: uniform(kv * d, d),
                wo: uniform(d * d, d),
                ffn_norm: vec![1.0; d],
                w_gate: uniform(f * d, d),
                w_up: uniform(f * d, d),
                w_down: uniform(d * f, f),
            })
            .collect();
        let unembed = uniform(v * d, d);
        Self {
            embed,
            layers,
            final_norm: vec![1.0; d],
            unembed,
        }
    }

    /// Little-endian f32 bytes of every tensor, concatenated in a fixed order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.flat()
            .into_iter()
            .flat_map(|t| t.iter().flat_map(|x| x.to_le_bytes()))
            .collect()
    }

    pub fn load_safetensors(path: &Path, cfg: &ModelConfig) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_safetensors_bytes(&buf, cfg)
    }

    pub fn from_safetensors_bytes(buf: &[u8], cfg: &ModelConfig) -> Result<Self> {
        let st = SafeTensors::deserialize(buf).map_err(|e| Error::Safetensors(e.to_string()))?;
        let mut tensors = BTreeMap::new();
        for (name, shape) in tensor_specs(cfg) {
            let view = match st.tensor(&name) {
                Ok(v) => v,
                Err(_) if name == "lm_head.weight" && cfg.tie_word_embeddings => continue,
                Err(_) => return Err(Error::MissingTensor(name)),
            };
            if view.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: shape,
                    found: view.shape().to_vec(),
                });
            }
            let data = to_f32(&name, &view)?;
            tensors.insert(name, data);
        }
        let mut take = |name: &str| tensors.remove(name).expect("validated above");
        let embed = take("model.embed_tokens.weight");
        let layers = (0..cfg.n_layers)
            .map(|i| {
                let p = format!("model.layers.{i}");
                LayerWeights {
                    attn_norm: take(&format!("{p}.input_layernorm.weight")),
                    wq: take(&format!("{p}.self_attn.q_proj.weight")),
                    wk: take(&format!("{p}.self_attn.k_proj.weight")),
                    wv: take(&format!("{p}.self_attn.v_proj.weight")),
                    wo: take(&format!("{p}.self_attn.o_proj.weight")),
                    ffn_norm: take(&format!("{p}.post_attention_layernorm.weight")),
                    w_gate: take(&format!("{p}.mlp.gate_proj.weight")),
                    w_up: take(&format!("{p}.mlp.up_proj.weight")),
                    w_down: take(&format!("{p}.mlp.down_proj.weight")),
                }
            })
            .collect();
        let final_norm = take("model.norm.weight");
        let unembed = tensors.remove("lm_head.weight").unwrap_or_else(|| embed.clone());
        Ok(Self {
            embed,
            layers,
            final_norm,
            unembed,
        })
    }

    /// Serializes as an F32 safetensors container.
    pub fn to_safetensors_bytes(&self, cfg: &ModelConfig) -> Result<Vec<u8>> {
        let tensors: Vec<(String, F32Tensor)> = tensor_specs(cfg)
            .into_iter()
            .zip(self.flat())
            .map(|((name, shape), data)| {
                (
                    name,
                    F32Tensor {
                        shape,
                        bytes: data.iter().flat_map(|x| x.to_le_bytes()).collect(),
                    },
                )
            })
            .collect();
        safetensors::serialize(tensors, None).map_err(|e| Error::Safetensors(e.to_string()))
    }

    pub fn save_safetensors(&self, cfg: &ModelConfig, path: &Path) -> Result<()> {
        let bytes = self.to_safetensors_bytes(cfg)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

struct F32Tensor {
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

impl View for F32Tensor {
    fn dtype(&self) -> Dtype {
        Dtype::F32
    }
    fn shape(&self) -> &[usize] {
        &self.shape
    }
    fn data(&self) -> Cow<'_, [u8]> {
        Cow::Borrowed(&self.bytes)
    }
    fn data_len(&self) -> usize {
        self.bytes.len()
    }
}

fn to_f32(name: &str, view: &TensorView<'_>) -> Result<Vec<f32>> {
    let data = view.data();
    let out = match view.dtype() {
        Dtype::F32 => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Dtype::F16 => data
            .chunks_exact(2)
            .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        Dtype::BF16 => data
            .chunks_exact(2)
            .map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        other => {
            return Err(Error::UnsupportedDtype {
                name: name.to_string(),
                dtype: format!("{other:?}"),
            })
        }
    };
    Ok(out)
}
