// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transplant_core::model::{ForwardStats, Substitution};
use transplant_core::transplant::{
    build_activation_bank, sweep, sweep_naive, transplant_generate, SweepInput, TransplantOptions,
};
use transplant_core::{Model, ModelConfig, PairSet, TokenSequence, TransplantMode, TransplantPair};

fn prompt(rng: &mut ChaCha8Rng, len: usize) -> TokenSequence {
    TokenSequence::new((0..len).map(|_| rng.gen_range(0..256)).collect(), "")
}

#[test]
fn identity_pair_reproduces_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1usize, 2, 4] {
        let m = Model::synthetic(n as u64, ModelConfig::tiny(n)).unwrap();
        for _ in 0..4 {
            let len = rng.gen_range(1..24);
            let p = prompt(&mut rng, len);
            let baseline = m.generate(&p, 10, &Default::default()).unwrap();
            let bank = build_activation_bank(&m, "xx", &p).unwrap();
            for k in 0..n {
                let g = transplant_generate(
                    &m,
                    &p,
                    &bank,
                    TransplantPair::ffn(k, k),
                    &TransplantOptions::with_max_new(10),
                )
                .unwrap();
                assert_eq!(g.tokens, baseline.tokens);
                assert_eq!(g.logprobs, baseline.logprobs);
                assert_eq!(g.text, baseline.text);
            }
        }
    }
}

#[test]
fn cached_sweep_equals_naive_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [1usize, 3, 5] {
        let m = Model::synthetic(40 + n as u64, ModelConfig::tiny(n)).unwrap();
        for _ in 0..3 {
            let (ls, lt) = (rng.gen_range(1..20), rng.gen_range(1..20));
            let src = prompt(&mut rng, ls);
            let tgt = prompt(&mut rng, lt);
            let input = SweepInput {
                instance_id: "i",
                source_language: "en",
                source: &src,
                target: &tgt,
            };
            for mode in [TransplantMode::Ffn, TransplantMode::Hidden] {
                let pairs = PairSet::full(n, mode);
                let opts = TransplantOptions::with_max_new(8);
                let fast = sweep(&m, input, &pairs, &opts).unwrap();
                let slow = sweep_naive(&m, input, &pairs, &opts).unwrap();
                assert_eq!(fast.baseline, slow.baseline);
                assert_eq!(fast.source_baseline, slow.source_baseline);
                assert_eq!(fast.generations, slow.generations);
            }
        }
    }
}

#[test]
fn sweep_outputs_match_transplant_generate() {
    let m = Model::synthetic(8, ModelConfig::tiny(3)).unwrap();
    let src = m.encode("The capital of France is").unwrap();
    let tgt = m.encode("La capitale de la France est").unwrap();
    let bank = build_activation_bank(&m, "en", &src).unwrap();
    let input = SweepInput {
        instance_id: "i",
        source_language: "en",
        source: &src,
        target: &tgt,
    };
    let opts = TransplantOptions::with_max_new(12);
    let r = sweep(&m, input, &PairSet::full(3, TransplantMode::Ffn), &opts).unwrap();
    for (pair, g) in r.iter() {
        assert_eq!(g, &transplant_generate(&m, &tgt, &bank, *pair, &opts).unwrap());
    }
    // transplantation actually changes something on this model
    assert!(r.generations.iter().any(|g| g.tokens != r.baseline.tokens));
}

#[test]
fn transplant_leaves_earlier_layers_and_positions_untouched() {
    let m = Model::synthetic(3, ModelConfig::tiny(4)).unwrap();
    let src = m.encode("source side").unwrap();
    let tgt = m.encode("target side prompt").unwrap();
    let bank = build_activation_bank(&m, "en", &src).unwrap();
    let base = m.prefill(&tgt, true).unwrap();
    let last = tgt.len() - 1;
    for j in 0..4 {
        let sub = Substitution::Ffn {
            layer: j,
            vector: &bank.ffn_vectors[3],
        };
        let modified = m
            .prefill_with(&tgt.ids, true, Some(sub), &mut ForwardStats::default())
            .unwrap();
        assert_eq!(base.boundary_states[..=j], modified.boundary_states[..=j]);
        for layer in 0..4 {
            for pos in 0..last {
                assert_eq!(base.cache.key(layer, pos), modified.cache.key(layer, pos));
                assert_eq!(base.cache.value(layer, pos), modified.cache.value(layer, pos));
            }
        }
        for layer in 0..=j {
            assert_eq!(base.cache.key(layer, last), modified.cache.key(layer, last));
        }
        assert_eq!(modified.traces[j].ffn_out, bank.ffn_vectors[3]);
    }
}

#[test]
fn substitution_fires_once_per_pair_and_never_while_decoding() {
    let m = Model::synthetic(5, ModelConfig::tiny(3)).unwrap();
    let src = m.encode("abc def").unwrap();
    let tgt = m.encode("ghi jkl").unwrap();
    let input = SweepInput {
        instance_id: "i",
        source_language: "en",
        source: &src,
        target: &tgt,
    };
    let pairs = PairSet::full(3, TransplantMode::Ffn);
    let opts = TransplantOptions::with_max_new(10);
    for r in [
        sweep(&m, input, &pairs, &opts).unwrap(),
        sweep_naive(&m, input, &pairs, &opts).unwrap(),
    ] {
        assert_eq!(r.stats.substitutions, 9);
    }
    // a single transplant: one substitution, decode work equals a plain generation
    let bank = build_activation_bank(&m, "en", &src).unwrap();
    let mut st = ForwardStats::default();
    transplant_core::transplant::transplant_generate_with(&m, &tgt, &bank, TransplantPair::ffn(2, 1), &opts, &mut st)
        .unwrap();
    assert_eq!(st.substitutions, 1);
    assert_eq!(st.prefill_layer_evals, 3 * tgt.len() as u64);
}

#[test]
fn naive_counter_is_pairs_times_layers_times_length_plus_decoding() {
    let n = 3usize;
    let m = Model::synthetic(6, ModelConfig::tiny(n)).unwrap();
    let src = m.encode("src prompt").unwrap();
    let tgt = m.encode("target prompt!").unwrap();
    let input = SweepInput {
        instance_id: "i",
        source_language: "en",
        source: &src,
        target: &tgt,
    };
    let pairs = PairSet::full(n, TransplantMode::Ffn);
    let opts = TransplantOptions::with_max_new(5);
    let r = sweep_naive(&m, input, &pairs, &opts).unwrap();
    let (n, ls, lt) = (n as u64, src.len() as u64, tgt.len() as u64);
    // bank prefill + source baseline + target baseline + one prefill per pair
    let expected_prefill = n * ls + n * ls + n * lt + pairs.len() as u64 * n * lt;
    assert_eq!(r.stats.prefill_layer_evals, expected_prefill);
    // every generation runs max_new - 1 decode steps (no stop ids)
    assert_eq!(r.stats.decode_layer_evals, (2 + pairs.len() as u64) * 4 * n);

    let cached = sweep(&m, input, &pairs, &opts).unwrap();
    let branch: u64 = pairs.pairs().iter().map(|p| n - p.target_layer as u64).sum();
    assert_eq!(cached.stats.prefill_layer_evals, n * ls + n * lt + branch);
    assert_eq!(cached.stats.decode_layer_evals, r.stats.decode_layer_evals);
    assert!(cached.stats.total_layer_evals() < r.stats.total_layer_evals());
}

#[test]
fn empty_pair_set_gives_baselines_only() {
    let m = Model::synthetic(6, ModelConfig::tiny(2)).unwrap();
    let src = m.encode("a").unwrap();
    let tgt = m.encode("b").unwrap();
    let input = SweepInput {
        instance_id: "i",
        source_language: "en",
        source: &src,
        target: &tgt,
    };
    let empty = PairSet::custom(2, vec![]).unwrap();
    let r = sweep_naive(&m, input, &empty, &TransplantOptions::with_max_new(4)).unwrap();
    assert!(r.generations.is_empty());
    assert_eq!(r.baseline.len(), 4);
    let c = sweep(&m, input, &empty, &TransplantOptions::with_max_new(4)).unwrap();
    assert_eq!(c.baseline, r.baseline);
}

#[test]
fn hidden_mode_identity_reproduces_baseline_too() {
    let m = Model::synthetic(13, ModelConfig::tiny(3)).unwrap();
    let p = m.encode("hidden identity").unwrap();
    let bank = build_activation_bank(&m, "en", &p).unwrap();
    let base = m.generate(&p, 6, &Default::default()).unwrap();
    for k in 0..3 {
        let g = transplant_generate(
            &m,
            &p,
            &bank,
            TransplantPair::new(k, k, TransplantMode::Hidden),
            &TransplantOptions::with_max_new(6),
        )
        .unwrap();
        assert_eq!(g.tokens, base.tokens);
    }
}
