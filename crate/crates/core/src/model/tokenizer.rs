// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte-level tokenizer plus an optional vocabulary-file tokenizer.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Token ids plus the text they were produced from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub source_text: String,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>, source_text: impl Into<String>) -> Self {
        Self {
            ids,
            source_text: source_text.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

const SPACE_MARKER: char = '\u{2581}';

// one tokenizer per model, so the variant size gap does not matter
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, Default)]
pub enum Tokenizer {
    /// One token per UTF-8 byte; id == byte value.
    #[default]
    Bytes,
    Vocab(VocabTokenizer),
}

impl Tokenizer {
    pub fn vocab_size(&self) -> usize {
        match self {
            Tokenizer::Bytes => 256,
            Tokenizer::Vocab(v) => v.vocab_size(),
        }
    }

    /// Encodes non-empty text.
    pub fn encode(&self, text: &str) -> Result<TokenSequence> {
        if text.is_empty() {
            return Err(Error::EmptyInput);
        }
        let ids = match self {
            Tokenizer::Bytes => text.bytes().map(u32::from).collect(),
            Tokenizer::Vocab(v) => v.encode(text),
        };
        Ok(TokenSequence::new(ids, text))
    }

    /// Decodes ids; every id must be below `vocab_size`. Invalid UTF-8 is
    /// replaced with U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let vocab_size = self.vocab_size();
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange { id, vocab_size });
        }
        Ok(self.decode_lossy(ids))
    }

    /// Like `decode`, but ids beyond the tokenizer's vocabulary render as nothing.
    pub fn decode_lossy(&self, ids: &[u32]) -> String {
        let bytes: Vec<u8> = match self {
            Tokenizer::Bytes => ids.iter().filter(|&&i| i < 256).map(|&i| i as u8).collect(),
            Tokenizer::Vocab(v) => v.decode_bytes(ids),
        };
        String::from_utf8_lossy(&bytes).into_owned()
    }
}

/// Tokenizer read from a vocabulary file: one piece per line, line number = id.
///
/// Encoding is greedy longest match. Text no piece covers falls back to byte
/// pieces: the `<0xNN>` line when the vocabulary has one, otherwise the id
/// `pieces.len() + byte`.
#[derive(Debug, Clone)]
pub struct VocabTokenizer {
    pieces: Vec<String>,
    lookup: HashMap<String, u32>,
    byte_ids: [u32; 256],
    byte_of_id: HashMap<u32, u8>,
    vocab_size: usize,
    max_piece_len: usize,
    space_marker: bool,
}

fn parse_byte_piece(piece: &str) -> Option<u8> {
    let hex = piece.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

impl VocabTokenizer {
    pub fn from_pieces<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let pieces: Vec<String> = pieces.into_iter().map(Into::into).collect();
        let n = pieces.len() as u32;
        let mut byte_ids = [u32::MAX; 256];
        let mut lookup = HashMap::new();
        let mut max_piece_len = 0;
        let mut space_marker = false;
        for (id, p) in pieces.iter().enumerate() {
            if let Some(b) = parse_byte_piece(p) {
                byte_ids[b as usize] = id as u32;
                continue;
            }
            if p.is_empty() {
                continue;
            }
            space_marker |= p.contains(SPACE_MARKER);
            max_piece_len = max_piece_len.max(p.len());
            lookup.entry(p.clone()).or_insert(id as u32);
        }
        let mut appended = false;
        for (b, slot) in byte_ids.iter_mut().enumerate() {
            if *slot == u32::MAX {
                *slot = n + b as u32;
                appended = true;
            }
        }
        let byte_of_id = byte_ids.iter().enumerate().map(|(b, &id)| (id, b as u8)).collect();
        let vocab_size = pieces.len() + if appended { 256 } else { 0 };
        Self {
            pieces,
            lookup,
            byte_ids,
            byte_of_id,
            vocab_size,
            max_piece_len,
            space_marker,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_pieces(text.lines()))
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        let text: String = if self.space_marker {
            text.replace(' ', &SPACE_MARKER.to_string())
        } else {
            text.to_owned()
        };
        let mut ids = Vec::new();
        let mut start = 0;
        while start < text.len() {
            let mut end = (start + self.max_piece_len).min(text.len());
            let mut matched = None;
            while end > start {
                if text.is_char_boundary(end) {
                    if let Some(&id) = self.lookup.get(&text[start..end]) {
                        matched = Some((id, end));
                        break;
                    }
                }
                end -= 1;
            }
            match matched {
                Some((id, end)) => {
                    ids.push(id);
                    start = end;
                }
                None => {
                    let ch_len = text[start..].chars().next().map_or(1, char::len_utf8);
                    for &b in &text.as_bytes()[start..start + ch_len] {
                        ids.push(self.byte_ids[b as usize]);
                    }
                    start += ch_len;
                }
            }
        }
        ids
    }

    fn decode_bytes(&self, ids: &[u32]) -> Vec<u8> {
        let mut out = Vec::new();
        for &id in ids {
            if let Some(&b) = self.byte_of_id.get(&id) {
                out.push(b);
            } else if let Some(p) = self.pieces.get(id as usize) {
                if self.space_marker {
                    out.extend(p.replace(SPACE_MARKER, " ").bytes());
                } else {
                    out.extend(p.bytes());
                }
            }
        }
        out
    }
}
