// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transplant_core::analytics::{
    apply_selection, build_grid, consistency, generation_perplexity, layerwise_upper_bound, outcome_categories,
    perplexity_stats, script_for_language, select_pairs, upper_bound, Axis, BankSource, CorrectnessGrid,
    OutcomeCategory, PairSelection, ScriptDetector, Strategy, PPL_MIN_LEN,
};
use transplant_core::eval::{
    evaluate_baseline, normalize_ws, parse_dataset, render_prompt, render_source, DatasetInstance, Direction,
    EvalOptions, Judge, PromptVariant, TemplateRegistry,
};
use transplant_core::model::ops;
use transplant_core::model::Generation;
use transplant_core::transplant::{build_activation_bank, sweep, transplant_generate, SweepInput, TransplantOptions};
use transplant_core::{Model, ModelConfig, PairSet, SweepResult, TokenSequence, TransplantMode, TransplantPair};

fn random_grid(rng: &mut ChaCha8Rng, id: usize, n: usize, p: f64) -> CorrectnessGrid {
    let cells = (0..n * n).map(|_| Some(rng.gen_bool(p))).collect();
    CorrectnessGrid::from_cells(
        format!("g{id}"),
        n,
        cells,
        Some(rng.gen_bool(0.5)),
        Some(rng.gen_bool(0.5)),
    )
    .unwrap()
}

fn brute_ub(grids: &[CorrectnessGrid], n: usize, keep: impl Fn(usize, usize) -> bool) -> usize {
    let mut count = 0;
    for g in grids {
        let mut best = false;
        for i in 0..n {
            for j in 0..n {
                if keep(i, j) && g.get(i, j) == Some(true) {
                    best = true;
                }
            }
        }
        count += best as usize;
    }
    count
}

#[test]
fn upper_bound_matches_exhaustive_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [4usize, 8, 32] {
        let full = PairSet::full(n, TransplantMode::Ffn);
        let sl = PairSet::source_last(n, TransplantMode::Ffn);
        let tf = PairSet::target_first(n, TransplantMode::Ffn);
        for round in 0..20 {
            // sparse cells so that all-false grids occur
            let p = 0.5 / (n * n) as f64 * (1 + round % 4) as f64;
            let grids: Vec<_> = (0..25).map(|k| random_grid(&mut rng, k, n, p)).collect();
            let ub = upper_bound(&grids, &full).unwrap();
            assert_eq!(ub.count, brute_ub(&grids, n, |_, _| true));
            assert_eq!(ub.accuracy, ub.count as f64 / 25.0);
            let ub_sl = upper_bound(&grids, &sl).unwrap();
            assert_eq!(ub_sl.count, brute_ub(&grids, n, |i, _| i == n - 1));
            assert!(ub_sl.count <= ub.count);
            assert!(upper_bound(&grids, &tf).unwrap().count <= ub.count);
            for axis in [Axis::SourceFixed, Axis::TargetFixed] {
                for k in 0..n {
                    assert!(layerwise_upper_bound(&grids, axis, k).unwrap().count <= ub.count);
                }
            }
            // per instance, the best row (or column) recovers the overall bound
            for g in &grids {
                let one = std::slice::from_ref(g);
                let overall = upper_bound(one, &full).unwrap().count;
                for axis in [Axis::SourceFixed, Axis::TargetFixed] {
                    let best = (0..n).map(|k| layerwise_upper_bound(one, axis, k).unwrap().count).max();
                    assert_eq!(best, Some(overall));
                }
            }
        }
    }
}

#[test]
fn dataset_level_layerwise_max_can_fall_below_overall() {
    let row = |i: usize| {
        let cells = (0..4).map(|c| Some(c / 2 == i)).collect();
        CorrectnessGrid::from_cells(format!("r{i}"), 2, cells, None, None).unwrap()
    };
    let grids = vec![row(0), row(1)];
    assert_eq!(
        upper_bound(&grids, &PairSet::full(2, TransplantMode::Ffn))
            .unwrap()
            .count,
        2
    );
    for k in 0..2 {
        assert_eq!(layerwise_upper_bound(&grids, Axis::SourceFixed, k).unwrap().count, 1);
    }
}

/// Brute-force selection with the documented tie-break.
fn oracle_select(grids: &[CorrectnessGrid], n: usize, strategy: Strategy) -> (usize, usize) {
    let mut best: Option<((usize, usize), usize)> = None;
    for i in 0..n {
        for j in 0..n {
            let ok = match strategy {
                Strategy::Oa => true,
                Strategy::Sl => i == n - 1,
                Strategy::Tf => j == 0,
            };
            if !ok {
                continue;
            }
            let score = grids.iter().filter(|g| g.get(i, j) == Some(true)).count();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some(((i, j), score));
            }
        }
    }
    best.unwrap().0
}

#[test]
fn selection_recovers_planted_and_brute_force_optima() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for round in 0..40 {
        let n = rng.gen_range(2..9);
        let mut pilots = BTreeMap::new();
        let mut planted = HashMap::new();
        for lang in ["ar", "de", "zh"] {
            let plant = (rng.gen_range(0..n), rng.gen_range(0..n));
            let mut grids: Vec<_> = (0..12).map(|k| random_grid(&mut rng, k, n, 0.3)).collect();
            if round % 2 == 0 {
                // planted pair is right everywhere, every other pair misses instance 0
                let cells = (0..n * n).map(|c| Some((c / n, c % n) == plant)).collect();
                grids[0] = CorrectnessGrid::from_cells("g0", n, cells, None, None).unwrap();
                for g in grids.iter_mut().skip(1) {
                    let cells = (0..n * n)
                        .map(|c| Some((c / n, c % n) == plant || g.get(c / n, c % n) == Some(true)))
                        .collect();
                    *g = CorrectnessGrid::from_cells(g.id(), n, cells, None, None).unwrap();
                }
                planted.insert(lang, plant);
            }
            pilots.insert(lang.to_string(), grids);
        }
        for strategy in Strategy::ALL {
            let sel = select_pairs("xnli", &pilots, strategy, TransplantMode::Ffn).unwrap();
            for (lang, grids) in &pilots {
                let got = sel.pair(lang).unwrap();
                let want = oracle_select(grids, n, strategy);
                assert_eq!((got.source_layer, got.target_layer), want);
                if strategy == Strategy::Oa {
                    if let Some(p) = planted.get(lang.as_str()) {
                        assert_eq!((got.source_layer, got.target_layer), *p);
                    }
                }
                assert!(strategy.admits(n, &got));
                // no candidate beats the choice
                let chosen = &sel.choices[lang];
                assert!(chosen
                    .candidates
                    .iter()
                    .all(|c| c.correct as f64 / grids.len() as f64 <= chosen.pilot_accuracy));
            }
        }
    }
}

#[test]
fn grid_cells_equal_rejudged_generations() {
    let m = Model::synthetic(31, ModelConfig::tiny(3)).unwrap();
    let src = m.encode("Where is the tower?").unwrap();
    let tgt = m.encode("Wo ist der Turm?").unwrap();
    let input = SweepInput {
        instance_id: "t0",
        source_language: "en",
        source: &src,
        target: &tgt,
    };
    let r = sweep(
        &m,
        input,
        &PairSet::full(3, TransplantMode::Ffn),
        &TransplantOptions::with_max_new(10),
    )
    .unwrap();
    // most frequent visible character across outputs, so verdicts are mixed
    let mut freq: HashMap<char, usize> = HashMap::new();
    for g in &r.generations {
        for c in g.text.chars().filter(|c| !c.is_whitespace()) {
            *freq.entry(c).or_default() += 1;
        }
    }
    let gold = freq
        .into_iter()
        .max_by_key(|&(c, k)| (k, c))
        .map(|(c, _)| c.to_string())
        .unwrap();
    let line = format!(
        r#"{{"id":"t0","dataset":"xquad","task_kind":"generation","lang":"de","fields":{{}},"gold":{}}}"#,
        serde_json::to_string(&gold).unwrap()
    );
    let inst = parse_dataset(&line, Path::new("x")).unwrap().remove(0);
    let grid = build_grid(&r, &Judge::for_instance(&inst, false)).unwrap();
    for (p, g) in r.iter() {
        let oracle = g.text.split_whitespace().collect::<Vec<_>>().join(" ").contains(&gold);
        assert_eq!(grid.get(p.source_layer, p.target_layer), Some(oracle));
    }
    assert_eq!(grid.tgt_correct(), Some(normalize_ws(&r.baseline.text).contains(&gold)));
    assert_eq!(grid.populated(), 9);

    let sl = sweep(
        &m,
        input,
        &PairSet::source_last(3, TransplantMode::Ffn),
        &TransplantOptions::with_max_new(4),
    )
    .unwrap();
    let g = build_grid(&sl, &Judge::for_instance(&inst, false)).unwrap();
    assert_eq!(g.populated(), 3);
    assert!((0..3).all(|j| g.get(2, j).is_some() && g.get(0, j).is_none()));

    let mut other = Judge::for_instance(&inst, false);
    other.instance_id = "t1".into();
    assert!(build_grid(&r, &other).is_err());
}

fn uniform_model(vocab: usize) -> Model {
    let cfg = ModelConfig {
        vocab_size: vocab,
        ..ModelConfig::tiny(2)
    };
    let mut w = Model::synthetic(5, cfg.clone()).unwrap().weights().clone();
    w.unembed.iter_mut().for_each(|x| *x = 0.0);
    Model::from_parts(cfg, w, transplant_core::Tokenizer::Bytes).unwrap()
}

#[test]
fn uniform_logits_give_vocab_sized_perplexity() {
    for v in [64usize, 256] {
        let m = uniform_model(v);
        let src = TokenSequence::new(vec![1, 2, 3, 4], "");
        let tgt = TokenSequence::new(vec![5, 6, 7], "");
        let input = SweepInput {
            instance_id: "u",
            source_language: "en",
            source: &src,
            target: &tgt,
        };
        let r = sweep(
            &m,
            input,
            &PairSet::full(2, TransplantMode::Ffn),
            &TransplantOptions::with_max_new(12),
        )
        .unwrap();
        let rep = perplexity_stats(std::slice::from_ref(&r), PPL_MIN_LEN).unwrap();
        assert_eq!(rep.count, 4);
        for x in [rep.min, rep.q1, rep.median, rep.q3, rep.mean, rep.max] {
            assert_eq!(x, v as f64);
        }
        assert_eq!(rep.baseline_mean, Some(v as f64));
        // five-token generations are excluded
        let short = sweep(
            &m,
            input,
            &PairSet::full(2, TransplantMode::Ffn),
            &TransplantOptions::with_max_new(5),
        )
        .unwrap();
        assert!(perplexity_stats(std::slice::from_ref(&short), PPL_MIN_LEN).is_err());
        let mixed = perplexity_stats(&[short, r], PPL_MIN_LEN).unwrap();
        assert_eq!(mixed.count, 4);
    }
}

#[test]
fn perplexity_matches_recomputation_from_logits() {
    let m = Model::synthetic(17, ModelConfig::tiny(2)).unwrap();
    let p = m.encode("perplexity check").unwrap();
    let g = m.generate(&p, 12, &Default::default()).unwrap();
    // independent greedy loop with an f64 log-softmax
    let mut pre = m.prefill(&p, false).unwrap();
    let mut logits = pre.logits.clone();
    let mut total = 0.0f64;
    for step in 0..12 {
        let next = ops::argmax(&logits);
        let lse = logits.iter().map(|&x| (x as f64).exp()).sum::<f64>().ln();
        total += logits[next] as f64 - lse;
        if step < 11 {
            logits = m.decode_step(&mut pre.cache, next as u32).unwrap();
        }
    }
    let want = (-total / 12.0).exp();
    let got = generation_perplexity(&g.logprobs).unwrap();
    assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
    assert!(got >= 1.0);
}

fn scripted_result(texts: &[&str], baseline: &str) -> SweepResult {
    let gen = |t: &str| Generation {
        tokens: vec![0; t.len()],
        text: t.to_string(),
        logprobs: vec![0.0; t.len()],
        pair: None,
    };
    let pairs: Vec<_> = (0..texts.len()).map(|j| TransplantPair::ffn(0, j)).collect();
    SweepResult {
        instance_id: "c".into(),
        source_baseline: gen(""),
        baseline: gen(baseline),
        generations: texts.iter().map(|t| gen(t)).collect(),
        pair_set: PairSet::custom(texts.len(), pairs).unwrap(),
        stats: Default::default(),
    }
}

#[test]
fn consistency_fractions() {
    let all = scripted_result(&["你好", "世界", "中文"], "很好");
    let row = consistency("zh", &[all], script_for_language("zh"), &ScriptDetector);
    assert_eq!((row.answers, row.transplant, row.baseline), (3, Some(1.0), Some(1.0)));
    let half = scripted_result(&["你好", "hello", "世界", "Привет"], "world");
    let row = consistency("zh", &[half], "cjk", &ScriptDetector);
    assert_eq!((row.transplant, row.baseline), (Some(0.5), Some(0.0)));
    // empty outputs never count as consistent, whatever the detector says
    let blank = scripted_result(&["", "  "], "");
    let always = |_: &str| "cjk".to_string();
    assert_eq!(consistency("zh", &[blank], "cjk", &always).transplant, Some(0.0));
    assert_eq!(consistency("zh", &[], "cjk", &always).transplant, None);
}

#[test]
fn outcome_proportions_match_a_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let grids: Vec<_> = (0..50).map(|k| random_grid(&mut rng, k, 3, 0.05)).collect();
        let rows = outcome_categories(&grids).unwrap();
        let mut tally: HashMap<(bool, bool, bool), usize> = HashMap::new();
        for g in &grids {
            let any = (0..3).any(|i| (0..3).any(|j| g.get(i, j) == Some(true)));
            *tally
                .entry((g.src_correct().unwrap(), g.tgt_correct().unwrap(), any))
                .or_default() += 1;
        }
        let total: f64 = rows.iter().map(|r| r.proportion).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for r in &rows {
            let OutcomeCategory {
                source_correct,
                target_correct,
                sweep_correct,
            } = r.category;
            assert_eq!(
                r.count,
                tally
                    .get(&(source_correct, target_correct, sweep_correct))
                    .copied()
                    .unwrap_or(0)
            );
        }
    }
}

fn bilingual_qa(n: usize) -> Vec<DatasetInstance> {
    let lines: Vec<String> = (0..n)
        .map(|k| {
            let lang = if k % 2 == 0 { "de" } else { "fr" };
            format!(
                r#"{{"id":"b{k}","dataset":"xquad","task_kind":"generation","lang":"{lang}","fields":{{"context":"Text {k} {lang}","question":"Was {k}?"}},"gold":"e","parallel":{{"lang":"en","fields":{{"context":"Text {k}","question":"What {k}?"}}}}}}"#
            )
        })
        .collect();
    parse_dataset(&lines.join("\n"), Path::new("b.jsonl")).unwrap()
}

#[test]
fn identity_selection_reproduces_plain_accuracy() {
    let m = Model::synthetic(12, ModelConfig::tiny(3)).unwrap();
    let reg = TemplateRegistry::builtin();
    let ds = bilingual_qa(6);
    let opts = EvalOptions {
        max_new: 8,
        ..EvalOptions::default()
    };
    let plain = evaluate_baseline(&m, &reg, &ds, PromptVariant::Plain, &opts).unwrap();
    // bank built from the target prompt itself
    for inst in &ds {
        let tgt = m
            .encode(&render_prompt(&reg, inst, PromptVariant::Plain, Direction::EnToX).unwrap())
            .unwrap();
        let bank = build_activation_bank(&m, "de", &tgt).unwrap();
        let g = transplant_generate(
            &m,
            &tgt,
            &bank,
            TransplantPair::ffn(1, 1),
            &TransplantOptions::with_max_new(8),
        )
        .unwrap();
        let item = plain.items.iter().find(|e| e.instance_id == inst.id).unwrap();
        assert_eq!(g.text, item.response);
    }
    let sel = PairSelection::identity(&["de", "fr", "sw"], "xquad", 3, 1).unwrap();
    let rep = apply_selection(&m, &reg, &ds, &sel, BankSource::Target, &opts).unwrap();
    for (lang, row) in &rep.per_language {
        assert_eq!(row.accuracy, plain.per_language()[lang]);
        assert_eq!(row.baseline_accuracy, plain.per_language()[lang]);
    }
    for (e, p) in rep.items.iter().zip(&plain.items) {
        assert_eq!(e.response, p.response);
    }
    assert_eq!(rep.absent, vec!["sw".to_string()]);
    assert!(!rep.per_language.contains_key("sw"));

    let only_de = PairSelection::identity(&["de"], "xquad", 3, 1).unwrap();
    assert!(apply_selection(&m, &reg, &ds, &only_de, BankSource::Source, &opts).is_err());
}

/// Sweeps every instance and returns, for the first seed where one exists,
/// the first pair whose answer differs from the baseline on some instance.
fn find_flipping_pair(reg: &TemplateRegistry, ds: &[DatasetInstance]) -> (Model, TransplantPair, Vec<SweepResult>) {
    for seed in 0..64 {
        let m = Model::synthetic(seed, ModelConfig::tiny(3)).unwrap();
        let sweeps: Vec<SweepResult> = ds
            .iter()
            .map(|inst| {
                let src = m.encode(&render_source(reg, inst, Direction::EnToX).unwrap()).unwrap();
                let tgt = m
                    .encode(&render_prompt(reg, inst, PromptVariant::Plain, Direction::EnToX).unwrap())
                    .unwrap();
                let input = SweepInput {
                    instance_id: &inst.id,
                    source_language: "en",
                    source: &src,
                    target: &tgt,
                };
                sweep(
                    &m,
                    input,
                    &PairSet::full(3, TransplantMode::Ffn),
                    &TransplantOptions::with_max_new(8),
                )
                .unwrap()
            })
            .collect();
        for pair in PairSet::full(3, TransplantMode::Ffn).pairs() {
            if sweeps.iter().any(|r| r.get(pair).unwrap().tokens != r.baseline.tokens) {
                return (m, *pair, sweeps);
            }
        }
    }
    panic!("no synthetic seed changes an answer");
}

#[test]
fn applied_pair_flip_matches_rerun() {
    let reg = TemplateRegistry::builtin();
    let mut ds = bilingual_qa(4);
    let opts = EvalOptions {
        max_new: 8,
        ..EvalOptions::default()
    };
    let (m, pair, sweeps) = find_flipping_pair(&reg, &ds);
    // the swept answer becomes gold wherever the baseline lacks it
    let mut flipped = 0;
    for (inst, r) in ds.iter_mut().zip(&sweeps) {
        let span = normalize_ws(&r.get(&pair).unwrap().text);
        if !span.is_empty() && !normalize_ws(&r.baseline.text).contains(&span) {
            inst.gold = span;
            flipped += 1;
        }
    }
    let ij = [pair.source_layer, pair.target_layer];
    let sel = PairSelection::from_file_map(
        &BTreeMap::from([("de".to_string(), ij), ("fr".to_string(), ij)]),
        Strategy::Oa,
        "xquad",
        3,
        TransplantMode::Ffn,
    )
    .unwrap();
    let rep = apply_selection(&m, &reg, &ds, &sel, BankSource::Source, &opts).unwrap();
    assert!(flipped > 0);
    let flips = rep
        .items
        .iter()
        .filter(|e| e.judgement.correct && !e.baseline_judgement.correct)
        .count();
    assert!(flips >= flipped);
    for e in &rep.items {
        let inst = ds.iter().find(|d| d.id == e.instance_id).unwrap();
        let src = m.encode(&render_source(&reg, inst, Direction::EnToX).unwrap()).unwrap();
        let tgt = m
            .encode(&render_prompt(&reg, inst, PromptVariant::Plain, Direction::EnToX).unwrap())
            .unwrap();
        let bank = build_activation_bank(&m, "en", &src).unwrap();
        let g = transplant_generate(&m, &tgt, &bank, pair, &TransplantOptions::with_max_new(8)).unwrap();
        assert_eq!(e.response, g.text);
        assert_eq!(
            e.judgement.correct,
            normalize_ws(&g.text).contains(&normalize_ws(&inst.gold))
        );
    }
}
