// SPDX-License-Identifier: MIT OR Apache-2.0

//! JSONL task datasets.
//!
//! One instance per line:
//!
//! ```json
//! {"id": "xnli-zh-0", "dataset": "xnli", "task_kind": "multiple_choice", "lang": "zh",
//!  "fields": {"premise": "...", "hypothesis": "..."},
//!  "options": ["Entail", "Neutral", "Contradict"], "gold": "(1)",
//!  "parallel": {"lang": "en", "fields": {...}, "options": [...]}}
//! ```
//!
//! `lang` groups the instance (a language, or a culture for opinion tasks).
//! `prompt_lang` (default: `lang`) is the language of `fields`. `parallel`
//! holds the same instance rendered in another language; it is the activation
//! donor for transplantation and the second half of PIM prompts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MultipleChoice,
    Generation,
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "multiple_choice" | "mc" => Ok(TaskKind::MultipleChoice),
            "generation" | "qa" => Ok(TaskKind::Generation),
            other => Err(format!("unknown task_kind `{other}`")),
        }
    }
}

/// Instance text in one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rendering {
    pub lang: String,
    #[serde(default)]
    pub fields: BTreeMap<String, String>,
    #[serde(default)]
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetInstance {
    pub id: String,
    pub dataset: String,
    pub task_kind: TaskKind,
    pub language_tag: String,
    pub rendering: Rendering,
    pub parallel: Option<Rendering>,
    /// `"(k)"` label for multiple choice, answer span for generation.
    pub gold: String,
}

/// Option label for 0-based option index `k`: `"(k+1)"`.
pub fn option_label(k: usize) -> String {
    format!("({})", k + 1)
}

impl DatasetInstance {
    pub fn labels(&self) -> Vec<String> {
        (0..self.rendering.options.len()).map(option_label).collect()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty `id`".into());
        }
        match self.task_kind {
            TaskKind::MultipleChoice => {
                let k = self.rendering.options.len();
                if k < 2 {
                    return Err(format!("multiple-choice instance needs >= 2 options, has {k}"));
                }
                if !self.labels().contains(&self.gold) {
                    return Err(format!("gold `{}` is not one of (1)..({k})", self.gold));
                }
                if let Some(p) = &self.parallel {
                    if !p.options.is_empty() && p.options.len() != k {
                        return Err(format!(
                            "parallel rendering has {} options, expected {k}",
                            p.options.len()
                        ));
                    }
                }
            }
            TaskKind::Generation => {
                if self.gold.trim().is_empty() {
                    return Err("generation instance needs a non-empty `gold`".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawInstance {
    id: Option<String>,
    dataset: Option<String>,
    task_kind: Option<String>,
    lang: Option<String>,
    prompt_lang: Option<String>,
    #[serde(default)]
    fields: BTreeMap<String, String>,
    #[serde(default)]
    options: Vec<String>,
    gold: Option<String>,
    parallel: Option<Rendering>,
}

fn parse_line(line: &str) -> std::result::Result<DatasetInstance, String> {
    let raw: RawInstance = serde_json::from_str(line).map_err(|e| format!("parse error: {e}"))?;
    let need = |v: Option<String>, name: &str| v.ok_or_else(|| format!("missing field `{name}`"));
    let task_kind: TaskKind = need(raw.task_kind, "task_kind")?.parse()?;
    let lang = need(raw.lang, "lang")?;
    let inst = DatasetInstance {
        id: need(raw.id, "id")?,
        dataset: need(raw.dataset, "dataset")?,
        task_kind,
        rendering: Rendering {
            lang: raw.prompt_lang.unwrap_or_else(|| lang.clone()),
            fields: raw.fields,
            options: raw.options,
        },
        language_tag: lang,
        parallel: raw.parallel,
        gold: need(raw.gold, "gold")?,
    };
    inst.validate()?;
    Ok(inst)
}

/// Parses JSONL text; blank lines are skipped, line numbers are 1-based.
pub fn parse_dataset(text: &str, path: &Path) -> Result<Vec<DatasetInstance>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_line(line).map_err(|msg| Error::Dataset {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        })?;
        out.push(inst);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetInstance>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

/// Serializes an instance back to its JSONL line.
pub fn to_jsonl_line(inst: &DatasetInstance) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("id".into(), inst.id.clone().into());
    obj.insert("dataset".into(), inst.dataset.clone().into());
    obj.insert(
        "task_kind".into(),
        serde_json::to_value(inst.task_kind).unwrap_or_default(),
    );
    obj.insert("lang".into(), inst.language_tag.clone().into());
    if inst.rendering.lang != inst.language_tag {
        obj.insert("prompt_lang".into(), inst.rendering.lang.clone().into());
    }
    obj.insert(
        "fields".into(),
        serde_json::to_value(&inst.rendering.fields).unwrap_or_default(),
    );
    if !inst.rendering.options.is_empty() {
        obj.insert(
            "options".into(),
            serde_json::to_value(&inst.rendering.options).unwrap_or_default(),
        );
    }
    obj.insert("gold".into(), inst.gold.clone().into());
    if let Some(p) = &inst.parallel {
        obj.insert("parallel".into(), serde_json::to_value(p).unwrap_or_default());
    }
    serde_json::Value::Object(obj).to_string()
}
