// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-layer key/value cache.

#[derive(Debug, Clone, PartialEq)]
struct LayerKv {
    keys: Vec<f32>,
    values: Vec<f32>,
}

/// Keys and values of every processed position, for every layer.
///
/// `len` counts positions committed on all layers. A position that is being
/// computed may already be present on some layers before it is committed.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache {
    layers: Vec<LayerKv>,
    kv_dim: usize,
    capacity: usize,
    len: usize,
}

impl KvCache {
    pub fn new(n_layers: usize, kv_dim: usize, capacity: usize) -> Self {
        Self {
            layers: vec![
                LayerKv {
                    keys: Vec::new(),
                    values: Vec::new(),
                };
                n_layers
            ],
            kv_dim,
            capacity,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Writes (appends or overwrites) the entry of `pos` on `layer`.
    pub(crate) fn write(&mut self, layer: usize, pos: usize, k: &[f32], v: &[f32]) {
        let d = self.kv_dim;
        let l = &mut self.layers[layer];
        let stored = l.keys.len() / d;
        debug_assert!(pos <= stored, "cache write skips positions");
        if pos == stored {
            l.keys.extend_from_slice(k);
            l.values.extend_from_slice(v);
        } else {
            l.keys[pos * d..(pos + 1) * d].copy_from_slice(k);
            l.values[pos * d..(pos + 1) * d].copy_from_slice(v);
        }
    }

    pub(crate) fn commit(&mut self, pos: usize) {
        debug_assert!(self.layers.iter().all(|l| l.keys.len() == (pos + 1) * self.kv_dim));
        self.len = self.len.max(pos + 1);
    }

    /// Key of position `pos` on `layer`.
    pub fn key(&self, layer: usize, pos: usize) -> &[f32] {
        let d = self.kv_dim;
        &self.layers[layer].keys[pos * d..(pos + 1) * d]
    }

    pub fn value(&self, layer: usize, pos: usize) -> &[f32] {
        let d = self.kv_dim;
        &self.layers[layer].values[pos * d..(pos + 1) * d]
    }

    /// Copies the entries of `pos` on layers `from..` out of `other`.
    pub(crate) fn restore_from(&mut self, other: &KvCache, pos: usize, from: usize) {
        for layer in from..self.layers.len() {
            let (k, v) = (other.key(layer, pos).to_vec(), other.value(layer, pos).to_vec());
            self.write(layer, pos, &k, &v);
        }
    }
}
