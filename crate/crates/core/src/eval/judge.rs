// SPDX-License-Identifier: MIT OR Apache-2.0

//! Correctness rules for multiple-choice and generative answers.

use serde::{Deserialize, Serialize};

use super::dataset::{option_label, DatasetInstance, TaskKind};

/// Width of the CoT answer window for generative tasks, in whitespace tokens.
pub const COT_QA_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeRule {
    /// Gold label present, no other label present.
    McExclusive,
    /// Last label occurrence decides.
    McLastLabel,
    /// Option-text fallback fired (opt-in).
    McOptionText,
    /// Gold is a substring of the response.
    QaContains,
    /// Gold is a substring of the final window.
    QaLastTokens,
}

impl JudgeRule {
    pub fn as_str(self) -> &'static str {
        match self {
            JudgeRule::McExclusive => "mc_exclusive",
            JudgeRule::McLastLabel => "mc_last_label",
            JudgeRule::McOptionText => "mc_option_text",
            JudgeRule::QaContains => "qa_contains",
            JudgeRule::QaLastTokens => "qa_last_tokens",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub correct: bool,
    pub matched_span: Option<String>,
    pub rule: JudgeRule,
}

/// Collapses whitespace runs to one space and trims.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct McOptions {
    /// When no label occurs, accept a response naming exactly one option text.
    pub option_text_fallback: bool,
}

/// Multiple-choice verdict on `"(k)"` labels, `k` in `1..=options.len()`.
pub fn judge_mc(response: &str, options: &[String], gold: &str, cot: bool) -> Judgement {
    judge_mc_with(response, options, gold, cot, McOptions::default())
}

pub fn judge_mc_with(response: &str, options: &[String], gold: &str, cot: bool, opts: McOptions) -> Judgement {
    let text = normalize_ws(response);
    let labels: Vec<String> = (0..options.len()).map(option_label).collect();
    if cot {
        let last = labels
            .iter()
            .filter_map(|l| text.rfind(l.as_str()).map(|pos| (pos, l)))
            .max_by_key(|&(pos, _)| pos);
        if let Some((_, l)) = last {
            return Judgement {
                correct: l == gold,
                matched_span: Some(l.clone()),
                rule: JudgeRule::McLastLabel,
            };
        }
    } else {
        let present: Vec<&String> = labels.iter().filter(|l| text.contains(l.as_str())).collect();
        if !present.is_empty() {
            return Judgement {
                correct: present.len() == 1 && present[0] == gold,
                matched_span: (present.len() == 1).then(|| present[0].clone()),
                rule: JudgeRule::McExclusive,
            };
        }
    }
    let rule = if cot {
        JudgeRule::McLastLabel
    } else {
        JudgeRule::McExclusive
    };
    if opts.option_text_fallback {
        let named: Vec<usize> = options
            .iter()
            .enumerate()
            .filter(|(_, o)| {
                let o = normalize_ws(o);
                !o.is_empty() && text.contains(&o)
            })
            .map(|(k, _)| k)
            .collect();
        if let [k] = named[..] {
            let l = option_label(k);
            return Judgement {
                correct: l == gold,
                matched_span: Some(l),
                rule: JudgeRule::McOptionText,
            };
        }
    }
    Judgement {
        correct: false,
        matched_span: None,
        rule,
    }
}

/// Generative verdict: case-sensitive substring after whitespace normalization.
pub fn judge_qa(response: &str, gold: &str, cot: bool) -> Judgement {
    let gold_n = normalize_ws(gold);
    let (hay, rule) = if cot {
        let toks: Vec<&str> = response.split_whitespace().collect();
        let start = toks.len().saturating_sub(COT_QA_WINDOW);
        (toks[start..].join(" "), JudgeRule::QaLastTokens)
    } else {
        (normalize_ws(response), JudgeRule::QaContains)
    };
    let correct = !gold_n.is_empty() && hay.contains(&gold_n);
    Judgement {
        correct,
        matched_span: correct.then_some(gold_n),
        rule,
    }
}

/// Judge bound to one instance.
#[derive(Debug, Clone)]
pub struct Judge {
    pub instance_id: String,
    pub kind: TaskKind,
    pub options: Vec<String>,
    pub gold: String,
    pub cot: bool,
    pub mc: McOptions,
}

impl Judge {
    pub fn for_instance(inst: &DatasetInstance, cot: bool) -> Self {
        Self {
            instance_id: inst.id.clone(),
            kind: inst.task_kind,
            options: inst.rendering.options.clone(),
            gold: inst.gold.clone(),
            cot,
            mc: McOptions::default(),
        }
    }

    pub fn judge(&self, response: &str) -> Judgement {
        match self.kind {
            TaskKind::MultipleChoice => judge_mc_with(response, &self.options, &self.gold, self.cot, self.mc),
            TaskKind::Generation => judge_qa(response, &self.gold, self.cot),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("option {i}")).collect()
    }

    #[test]
    fn mc_plain_rules() {
        let o = opts(3);
        assert!(judge_mc("my answer would be: (1) Entail", &o, "(1)", false).correct);
        assert!(!judge_mc("either (1) or (2)", &o, "(1)", false).correct);
        assert!(!judge_mc("nothing here", &o, "(1)", false).correct);
        let j = judge_mc(
            "Option 1 (The baby drools on the bib) is less likely",
            &opts(2),
            "(2)",
            false,
        );
        assert!(!j.correct);
        assert_eq!(j.matched_span, None);
    }

    #[test]
    fn mc_cot_takes_last_label() {
        let o = opts(3);
        assert!(judge_mc("(1) seems plausible, but (3) fits better", &o, "(3)", true).correct);
        assert!(!judge_mc("(3) at first, finally (1)", &o, "(3)", true).correct);
        // labels outside the option range never count
        assert!(judge_mc("(2) ... (4)", &o, "(2)", true).correct);
    }

    #[test]
    fn option_text_fallback_is_opt_in() {
        let o = vec![
            "The baby drools on the bib.".to_string(),
            "The baby soiled his diaper.".to_string(),
        ];
        let r = "I think The baby soiled his diaper.";
        assert!(!judge_mc(r, &o, "(2)", false).correct);
        let j = judge_mc_with(
            r,
            &o,
            "(2)",
            false,
            McOptions {
                option_text_fallback: true,
            },
        );
        assert!(j.correct);
        assert_eq!(j.rule, JudgeRule::McOptionText);
    }

    #[test]
    fn qa_rules() {
        assert!(judge_qa("It opened in 1912.", "1912", false).correct);
        assert!(!judge_qa("around 1911", "1912", false).correct);
        assert!(!judge_qa("paris", "Paris", false).correct);
        assert!(judge_qa("New\n  York City", "New York", false).correct);
        let mut toks: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        toks[4] = "1912".into();
        assert!(!judge_qa(&toks.join(" "), "1912", true).correct);
        toks[30] = "1912".into();
        let j = judge_qa(&toks.join(" "), "1912", true);
        assert!(j.correct);
        assert_eq!(j.matched_span.as_deref(), Some("1912"));
    }

    proptest! {
        #[test]
        fn mc_verdict_ignores_option_order(
            resp in "[ a-z()1-4]{0,40}",
            k in 2usize..5,
            g in 0usize..5,
            seed in any::<u64>(),
        ) {
            let g = g % k;
            let mut o = opts(k);
            let before = judge_mc(&resp, &o, &option_label(g), false);
            let n = o.len();
            o.rotate_left((seed as usize) % n);
            let after = judge_mc(&resp, &o, &option_label(g), false);
            prop_assert_eq!(before, after);
        }

        #[test]
        fn mc_plain_correct_implies_one_label(resp in "[ a-z()1-4]{0,40}", g in 0usize..4) {
            let o = opts(4);
            if judge_mc(&resp, &o, &option_label(g), false).correct {
                let present = (0..4).filter(|&k| resp.contains(&option_label(k))).count();
                prop_assert_eq!(present, 1);
            }
        }

        #[test]
        fn cot_qa_window_ignores_prefix(
            prefix in proptest::collection::vec("[a-z0-9]{1,5}", 0..30),
            tail in proptest::collection::vec("[a-z0-9]{1,5}", 20..30),
            gold in "[a-z0-9]{1,3}",
        ) {
            let t = tail.join(" ");
            let full = format!("{} {t}", prefix.join(" "));
            prop_assert_eq!(judge_qa(&t, &gold, true).correct, judge_qa(&full, &gold, true).correct);
        }
    }
}
