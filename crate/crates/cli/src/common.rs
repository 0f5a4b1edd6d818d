// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared plumbing: model and dataset loading, output layout, progress log.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use transplant_core::eval::{load_dataset, DatasetInstance, TemplateRegistry};
use transplant_core::model::{Tokenizer, VocabTokenizer};
use transplant_core::{Model, ModelConfig};

use crate::args::{CommonArgs, GenArgs, ModelArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or missing inputs; nothing useful ran.
    Config(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => f.write_str(m),
        }
    }
}

impl From<transplant_core::Error> for CliError {
    fn from(e: transplant_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Per-command result: how many units of work failed.
#[derive(Debug, Default, Clone, Copy)]
pub struct Outcome {
    pub failures: usize,
}

pub fn load_model(args: &ModelArgs) -> CliResult<Model> {
    let model = if let Some(spec) = args.model.strip_prefix("synth:") {
        let mut parts = spec.split(':');
        let seed: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| config_err(format!("bad synthetic model spec `{}`", args.model)))?;
        let config = match (parts.next(), &args.config) {
            (Some(n), _) => {
                let n: usize = n
                    .parse()
                    .map_err(|_| config_err(format!("bad layer count in `{}`", args.model)))?;
                ModelConfig::tiny(n)
            }
            (None, Some(path)) => ModelConfig::from_file(path)?,
            (None, None) => ModelConfig::tiny(4),
        };
        Model::synthetic(seed, config)?
    } else {
        let config = args
            .config
            .as_deref()
            .ok_or_else(|| config_err("--config is required with a checkpoint"))?;
        Model::load(Path::new(&args.model), config)?
    };
    match &args.tokenizer {
        Some(path) => {
            let tok = VocabTokenizer::from_file(path)?;
            if tok.vocab_size() > model.config().vocab_size {
                return Err(config_err(format!(
                    "tokenizer has {} pieces, model vocabulary is {}",
                    tok.vocab_size(),
                    model.config().vocab_size
                )));
            }
            Ok(model.with_tokenizer(Tokenizer::Vocab(tok)))
        }
        None => Ok(model),
    }
}

pub fn stop_ids(model: &Model) -> HashSet<u32> {
    model.config().eos_token_id.into_iter().collect()
}

pub fn templates(gen: &GenArgs) -> CliResult<TemplateRegistry> {
    match &gen.templates {
        Some(dir) => Ok(TemplateRegistry::from_dir(dir)?),
        None => Ok(TemplateRegistry::builtin()),
    }
}

pub fn init_threads(common: &CommonArgs) {
    // the global pool can only be built once per process; later calls keep it
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.max(1))
        .build_global();
}

/// Instances grouped by `(dataset, language)`, optionally subsampled.
pub type Groups = BTreeMap<(String, String), Vec<DatasetInstance>>;

pub fn load_groups(paths: &[PathBuf], langs: &[String], sample: Option<usize>, seed: u64) -> CliResult<Groups> {
    let mut groups = Groups::new();
    let mut seen = HashSet::new();
    for path in paths {
        for inst in load_dataset(path)? {
            if !langs.is_empty() && !langs.contains(&inst.language_tag) {
                continue;
            }
            if !seen.insert((inst.dataset.clone(), inst.id.clone())) {
                return Err(config_err(format!(
                    "duplicate instance id `{}` in {}",
                    inst.id, inst.dataset
                )));
            }
            groups
                .entry((inst.dataset.clone(), inst.language_tag.clone()))
                .or_default()
                .push(inst);
        }
    }
    if groups.is_empty() {
        return Err(config_err("no instances selected"));
    }
    if let Some(k) = sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for items in groups.values_mut() {
            if items.len() > k {
                let mut keep = rand::seq::index::sample(&mut rng, items.len(), k).into_vec();
                keep.sort_unstable();
                *items = keep.into_iter().map(|i| items[i].clone()).collect();
            }
        }
    }
    Ok(groups)
}

/// Instance id usable as a file name.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn pilot_dir(out: &Path, dataset: &str, lang: &str) -> PathBuf {
    out.join("pilot").join(file_stem(dataset)).join(file_stem(lang))
}

/// Dataset names with pilot output, filtered by `only` when non-empty.
pub fn pilot_datasets(out: &Path, only: &[String]) -> CliResult<Vec<String>> {
    let root = out.join("pilot");
    let mut names = Vec::new();
    let entries = std::fs::read_dir(&root).map_err(|e| config_err(format!("{}: {e}", root.display())))?;
    for e in entries.flatten() {
        if e.path().is_dir() {
            names.push(e.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    if !only.is_empty() {
        for want in only {
            if !names.contains(want) {
                return Err(config_err(format!(
                    "no pilot output for dataset `{want}` in {}",
                    root.display()
                )));
            }
        }
        names.retain(|n| only.contains(n));
    }
    Ok(names)
}

/// Sorted subdirectories of `dir`.
pub fn subdirs(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

/// Sorted files in `dir` whose names end with `suffix`.
pub fn files_with_suffix(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(suffix))
        })
        .collect();
    v.sort();
    v
}

/// Append-only `progress.log` in the output directory.
pub struct Progress {
    file: Mutex<File>,
}

impl Progress {
    pub fn open(out: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(out).map_err(|e| config_err(format!("{}: {e}", out.display())))?;
        let path = out.join("progress.log");
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Ok(Self { file: Mutex::new(file) })
    }

    pub fn log(&self, line: &str) {
        if let Ok(mut f) = self.file.lock() {
            let _ = writeln!(f, "{line}");
        }
    }

    /// Logs and echoes to stderr.
    pub fn warn(&self, line: &str) {
        eprintln!("{line}");
        self.log(line);
    }
}
