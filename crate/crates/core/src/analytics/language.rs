// SPDX-License-Identifier: MIT OR Apache-2.0

//! Script-based language tagging and input/output language consistency.

use serde::{Deserialize, Serialize};

use crate::transplant::SweepResult;

pub const UNKNOWN: &str = "unknown";

/// Writing systems the built-in detector tells apart. Variant order breaks
/// vote ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Script {
    Latin,
    Cyrillic,
    Greek,
    Armenian,
    Georgian,
    Hebrew,
    Arabic,
    Devanagari,
    Bengali,
    Tamil,
    Telugu,
    Thai,
    Hangul,
    Kana,
    Han,
}

impl Script {
    pub const ALL: [Script; 15] = [
        Script::Latin,
        Script::Cyrillic,
        Script::Greek,
        Script::Armenian,
        Script::Georgian,
        Script::Hebrew,
        Script::Arabic,
        Script::Devanagari,
        Script::Bengali,
        Script::Tamil,
        Script::Telugu,
        Script::Thai,
        Script::Hangul,
        Script::Kana,
        Script::Han,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Script::Latin => "latin",
            Script::Cyrillic => "cyrillic",
            Script::Greek => "greek",
            Script::Armenian => "armenian",
            Script::Georgian => "georgian",
            Script::Hebrew => "hebrew",
            Script::Arabic => "arabic",
            Script::Devanagari => "devanagari",
            Script::Bengali => "bengali",
            Script::Tamil => "tamil",
            Script::Telugu => "telugu",
            Script::Thai => "thai",
            Script::Hangul => "hangul",
            Script::Kana => "kana",
            Script::Han => "cjk",
        }
    }

    /// Script of a letter, `None` for digits, punctuation, marks and
    /// unlisted scripts.
    pub fn of(c: char) -> Option<Script> {
        if !c.is_alphabetic() {
            return None;
        }
        let u = c as u32;
        let s = match u {
            0x0041..=0x024F
            | 0x1E00..=0x1EFF
            | 0x2C60..=0x2C7F
            | 0xA720..=0xA7FF
            | 0xFF21..=0xFF3A
            | 0xFF41..=0xFF5A => Script::Latin,
            0x0370..=0x03FF | 0x1F00..=0x1FFF => Script::Greek,
            0x0400..=0x052F | 0x1C80..=0x1C8F | 0x2DE0..=0x2DFF | 0xA640..=0xA69F => Script::Cyrillic,
            0x0530..=0x058F => Script::Armenian,
            0x10A0..=0x10FF | 0x1C90..=0x1CBF => Script::Georgian,
            0x0590..=0x05FF | 0xFB1D..=0xFB4F => Script::Hebrew,
            0x0600..=0x06FF | 0x0750..=0x077F | 0x08A0..=0x08FF | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF => Script::Arabic,
            0x0900..=0x097F | 0xA8E0..=0xA8FF => Script::Devanagari,
            0x0980..=0x09FF => Script::Bengali,
            0x0B80..=0x0BFF => Script::Tamil,
            0x0C00..=0x0C7F => Script::Telugu,
            0x0E00..=0x0E7F => Script::Thai,
            0x1100..=0x11FF | 0x3130..=0x318F | 0xA960..=0xA97F | 0xAC00..=0xD7AF | 0xD7B0..=0xD7FF => Script::Hangul,
            0x3040..=0x30FF | 0x31F0..=0x31FF | 0xFF66..=0xFF9F => Script::Kana,
            0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x3134F => Script::Han,
            _ => return None,
        };
        Some(s)
    }
}

/// Per-text language classifier.
pub trait LanguageDetector: Sync {
    fn detect(&self, text: &str) -> String;
}

impl<F> LanguageDetector for F
where
    F: Fn(&str) -> String + Sync,
{
    fn detect(&self, text: &str) -> String {
        self(text)
    }
}

/// Majority vote over the scripts of the letters in the text.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptDetector;

impl LanguageDetector for ScriptDetector {
    fn detect(&self, text: &str) -> String {
        detect_language_script(text).to_owned()
    }
}

/// Script tag of `text`. Han and kana vote together; the winner is `kana`
/// when any kana letter is present. No letters gives [`UNKNOWN`].
pub fn detect_language_script(text: &str) -> &'static str {
    let mut counts = [0usize; Script::ALL.len()];
    for s in text.chars().filter_map(Script::of) {
        counts[s as usize] += 1;
    }
    let kana = counts[Script::Kana as usize];
    let mut votes = counts;
    votes[Script::Han as usize] += kana;
    votes[Script::Kana as usize] = 0;
    let mut best: Option<Script> = None;
    for s in Script::ALL {
        if votes[s as usize] > 0 && best.is_none_or(|b| votes[s as usize] > votes[b as usize]) {
            best = Some(s);
        }
    }
    match best {
        None => UNKNOWN,
        Some(Script::Han) if kana > 0 => Script::Kana.tag(),
        Some(s) => s.tag(),
    }
}

/// Script tag the built-in detector reports for text in `lang`
/// (`"zh"`, `"zh-CN"`, `"ru"` ...).
pub fn script_for_language(lang: &str) -> &'static str {
    let base = lang.split(['-', '_']).next().unwrap_or(lang).to_ascii_lowercase();
    let s = match base.as_str() {
        "zh" | "yue" => Script::Han,
        "ja" => Script::Kana,
        "ko" => Script::Hangul,
        "ru" | "bg" | "uk" | "be" | "sr" | "mk" | "kk" | "ky" | "mn" | "tg" => Script::Cyrillic,
        "el" => Script::Greek,
        "hy" => Script::Armenian,
        "ka" => Script::Georgian,
        "he" | "yi" => Script::Hebrew,
        "ar" | "ur" | "fa" | "ps" | "ug" => Script::Arabic,
        "hi" | "mr" | "ne" | "sa" => Script::Devanagari,
        "bn" | "as" => Script::Bengali,
        "ta" => Script::Tamil,
        "te" => Script::Telugu,
        "th" => Script::Thai,
        _ => Script::Latin,
    };
    s.tag()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub language: String,
    pub required: String,
    /// Pair generations considered.
    pub answers: usize,
    /// Fraction of pair generations in the required language; `None` without any.
    pub transplant: Option<f64>,
    pub baselines: usize,
    pub baseline: Option<f64>,
}

fn matches(detector: &dyn LanguageDetector, text: &str, required: &str) -> bool {
    !text.trim().is_empty() && detector.detect(text) == required
}

/// Share of all sweep answers (and target baselines) whose detected tag is
/// `required`. Empty outputs count as mismatches.
pub fn consistency(
    language: &str,
    results: &[SweepResult],
    required: &str,
    detector: &dyn LanguageDetector,
) -> ConsistencyRow {
    let (mut hits, mut answers, mut base_hits) = (0usize, 0usize, 0usize);
    for r in results {
        for (_, g) in r.iter() {
            answers += 1;
            hits += usize::from(matches(detector, &g.text, required));
        }
        base_hits += usize::from(matches(detector, &r.baseline.text, required));
    }
    let frac = |h: usize, n: usize| (n > 0).then(|| h as f64 / n as f64);
    ConsistencyRow {
        language: language.to_owned(),
        required: required.to_owned(),
        answers,
        transplant: frac(hits, answers),
        baselines: results.len(),
        baseline: frac(base_hits, results.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_table() {
        assert_eq!(detect_language_script("你好世界"), "cjk");
        assert_eq!(detect_language_script("Привет мир"), "cyrillic");
        assert_eq!(detect_language_script("Hello, world"), "latin");
        assert_eq!(detect_language_script("مرحبا"), "arabic");
        assert_eq!(detect_language_script("नमस्ते"), "devanagari");
        assert_eq!(detect_language_script("안녕하세요"), "hangul");
        assert_eq!(detect_language_script("日本語のテキスト"), "kana");
        assert_eq!(detect_language_script("Γειά σου"), "greek");
        assert_eq!(detect_language_script(""), UNKNOWN);
        assert_eq!(detect_language_script("123 !?"), UNKNOWN);
    }

    #[test]
    fn ties_go_to_the_earlier_script() {
        assert_eq!(detect_language_script("ab жы"), "latin");
    }

    #[test]
    fn language_codes_map_to_scripts() {
        assert_eq!(script_for_language("zh-CN"), "cjk");
        assert_eq!(script_for_language("ja"), "kana");
        assert_eq!(script_for_language("sw"), "latin");
        assert_eq!(script_for_language("ur"), "arabic");
        assert_eq!(script_for_language("th"), "thai");
    }

    #[test]
    fn closures_are_detectors() {
        let d = |_: &str| "x".to_string();
        assert_eq!(LanguageDetector::detect(&d, "anything"), "x");
    }
}
