#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use scriptorium_core::corpus::class_balance_of;
use scriptorium_core::endmodel::{evaluate_predictions, featurize, train, Example, FeaturizerConfig, TrainConfig};
use scriptorium_core::labelmodel::{self, DevSet, Params};
use scriptorium_core::prompt::{build_prompt, DataExemplar, GenerationParams, Strategy as PromptStrategy, TaskSpec};
use scriptorium_core::{
    combine_union, compute_stats, ClassSpace, FitConfig, ModelKind, NoiseModel, Origin, PseudoLabel, PseudoLabeledSet,
    RuleProgram, VoteMatrix,
};

fn classes(k: usize) -> ClassSpace {
    let names: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
    ClassSpace::from_names(&names).unwrap()
}

/// (k, rows) with entries in {-1} ∪ [0, k).
fn matrix_strategy(max_n: usize, max_m: usize) -> impl Strategy<Value = (usize, Vec<Vec<i32>>)> {
    (2usize..=3, 1..=max_n, 1..=max_m)
        .prop_flat_map(|(k, n, m)| (Just(k), prop::collection::vec(prop::collection::vec(-1..k as i32, m), n)))
}

fn permutation(len: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..len).collect::<Vec<_>>()).prop_shuffle()
}

fn fit_all(k: usize, matrix: &VoteMatrix) -> Vec<NoiseModel> {
    let cs = classes(k);
    let cfg = FitConfig::default();
    let mut out = vec![labelmodel::fit(ModelKind::Mv, matrix, &cs, None, &cfg).unwrap()];
    // Agreement weights and EM both need at least one vote.
    if matrix.as_slice().iter().any(|&v| v != -1) {
        out.push(labelmodel::fit(ModelKind::Wmv, matrix, &cs, None, &cfg).unwrap());
        out.push(labelmodel::fit(ModelKind::Ds, matrix, &cs, None, &cfg).unwrap());
    }
    if matrix.m() >= 3 {
        out.push(labelmodel::fit(ModelKind::Fs, matrix, &cs, None, &cfg).unwrap());
    }
    out
}

fn permute_params(params: &Params, order: &[usize]) -> Params {
    match params {
        Params::Mv => Params::Mv,
        Params::Wmv { weights, weight_source } => {
            Params::Wmv { weights: order.iter().map(|&a| weights[a]).collect(), weight_source: weight_source.clone() }
        }
        Params::Ds { confusion } => Params::Ds { confusion: order.iter().map(|&a| confusion[a].clone()).collect() },
        Params::Fs { accuracies } => {
            Params::Fs { accuracies: accuracies.iter().map(|row| order.iter().map(|&a| row[a]).collect()).collect() }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posteriors_are_distributions((k, rows) in matrix_strategy(12, 4)) {
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        for model in fit_all(k, &matrix) {
            let post = labelmodel::infer(&model, &matrix).unwrap();
            for i in 0..rows.len() {
                let total: f64 = post.probs[i].iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
                prop_assert_eq!(post.covered[i], rows[i].iter().any(|&v| v != -1));
                let best = post.probs[i].iter().copied().fold(f64::MIN, f64::max);
                prop_assert!(post.probs[i][post.hard[i]] >= best - 1e-12);
            }
        }
    }

    #[test]
    fn row_permutation_equivariance(((k, rows), seed) in matrix_strategy(12, 4).prop_flat_map(|(k, rows)| {
        let n = rows.len();
        (Just((k, rows)), permutation(n))
    })) {
        let order = seed;
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        let shuffled = matrix.select_rows(&order);
        let a = fit_all(k, &matrix);
        let b = fit_all(k, &shuffled);
        for (ma, mb) in a.iter().zip(&b) {
            let pa = labelmodel::infer(ma, &matrix).unwrap();
            let pb = labelmodel::infer(mb, &shuffled).unwrap();
            for (j, &i) in order.iter().enumerate() {
                for c in 0..k {
                    prop_assert!((pa.probs[i][c] - pb.probs[j][c]).abs() < 1e-9, "{:?}", ma.kind);
                }
            }
        }
    }

    #[test]
    fn column_permutation_with_params((k, rows, order) in matrix_strategy(10, 4).prop_flat_map(|(k, rows)| {
        let m = rows[0].len();
        (Just(k), Just(rows), permutation(m))
    })) {
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        let permuted = matrix.select_columns(&order);
        for model in fit_all(k, &matrix) {
            let mut moved = model.clone();
            moved.params = permute_params(&model.params, &order);
            let pa = labelmodel::infer(&model, &matrix).unwrap();
            let pb = labelmodel::infer(&moved, &permuted).unwrap();
            for i in 0..rows.len() {
                for c in 0..k {
                    prop_assert!((pa.probs[i][c] - pb.probs[i][c]).abs() < 1e-12);
                }
                prop_assert_eq!(pa.hard[i], pb.hard[i]);
            }
        }
    }

    #[test]
    fn mv_ignores_duplicated_lf_set((k, rows) in matrix_strategy(10, 4)) {
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        let doubled = matrix.hstack(&matrix).unwrap();
        let mv = NoiseModel::majority(&classes(k));
        prop_assert_eq!(
            labelmodel::infer(&mv, &matrix).unwrap().hard,
            labelmodel::infer(&mv, &doubled).unwrap().hard
        );
    }

    #[test]
    fn ds_objective_never_decreases((k, rows) in matrix_strategy(30, 5)) {
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        prop_assume!(matrix.as_slice().iter().any(|&v| v != -1));
        let model = labelmodel::fit(ModelKind::Ds, &matrix, &classes(k), None, &FitConfig::default()).unwrap();
        for w in model.diagnostics.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn wmv_dev_weights_are_positive((k, rows) in matrix_strategy(10, 4), gold_seed in any::<u64>()) {
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        let gold: Vec<usize> = (0..rows.len()).map(|i| ((gold_seed >> (i % 64)) as usize) % k).collect();
        let dev = DevSet { votes: &matrix, gold: &gold };
        let model = labelmodel::fit(ModelKind::Wmv, &matrix, &classes(k), Some(dev), &FitConfig::default()).unwrap();
        match model.params {
            Params::Wmv { weights, .. } => prop_assert!(weights.iter().all(|&w| w > 0.0 && w.is_finite())),
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn stats_ordering_and_point_order((k, rows, order) in matrix_strategy(9, 3).prop_flat_map(|(k, rows)| {
        let n = rows.len();
        (Just(k), Just(rows), permutation(n))
    })) {
        let _ = k;
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        let stats = compute_stats(&matrix, None).unwrap();
        for s in &stats.per_lf {
            prop_assert!(s.conflict <= s.overlap && s.overlap <= s.coverage && s.coverage <= 1.0);
        }
        let shuffled = compute_stats(&matrix.select_rows(&order), None).unwrap();
        prop_assert_eq!(stats.per_lf, shuffled.per_lf);
    }

    #[test]
    fn twin_columns((_k, rows) in matrix_strategy(9, 1)) {
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        let twins = compute_stats(&matrix.hstack(&matrix).unwrap(), None).unwrap();
        for s in &twins.per_lf {
            prop_assert_eq!(s.overlap, s.coverage);
            prop_assert_eq!(s.conflict, 0.0);
        }
    }

    #[test]
    fn vote_matrix_text_round_trip((_k, rows) in matrix_strategy(8, 4)) {
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        prop_assert_eq!(VoteMatrix::from_text(&matrix.to_text()).unwrap(), matrix);
    }

    #[test]
    fn class_balance_is_distribution(gold in prop::collection::vec(0usize..4, 1..50)) {
        let p = class_balance_of(&gold, 4).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn union_keeps_human_entries(human_mask in prop::collection::vec(any::<bool>(), 1..30), synth_seed in any::<u64>()) {
        let n = human_mask.len();
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let entry = |i: usize, label: usize, origin| PseudoLabel {
            id: ids[i].clone(),
            label,
            posterior: if label == 0 { vec![0.8, 0.2] } else { vec![0.1, 0.9] },
            origin,
        };
        let human = PseudoLabeledSet::new(
            (0..n).filter(|&i| human_mask[i]).map(|i| entry(i, i % 2, Origin::Human)).collect(), n).unwrap();
        let synth = PseudoLabeledSet::new(
            (0..n).filter(|&i| (synth_seed >> (i % 64)) & 1 == 1).map(|i| entry(i, (i + 1) % 2, Origin::Synthesized)).collect(), n).unwrap();
        let both = combine_union(&human, &synth, &ids).unwrap();
        for h in &human.entries {
            prop_assert_eq!(both.get(&h.id), Some(h));
        }
        prop_assert!(both.coverage >= human.coverage.max(synth.coverage));
    }

    #[test]
    fn keyword_match_ignores_case(word in "[a-z]{1,8}", text in "[a-zA-Z ]{0,30}") {
        let program = RuleProgram::parse(
            &format!(r#"{{"rules":[{{"if":{{"keyword_any":["{word}"]}},"emit":1}}],"default":-1}}"#), 2).unwrap();
        let hit = text.to_lowercase().contains(&word);
        prop_assert_eq!(program.apply(&text).raw(), if hit { 1 } else { -1 });
        prop_assert_eq!(program.apply(&text.to_uppercase()), program.apply(&text));
    }

    #[test]
    fn featurize_is_sorted_and_normalized(text in "\\PC{0,80}", ngrams in 1usize..=2) {
        let cfg = FeaturizerConfig { l2_normalize: true, ngram_max: ngrams, ..FeaturizerConfig::default() };
        let v = featurize(&text, &cfg);
        prop_assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(v.values.iter().all(|x| x.is_finite() && *x > 0.0));
        if !v.is_empty() {
            prop_assert!((v.squared_norm() - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(featurize(&text, &cfg), v);
    }

    #[test]
    fn metrics_are_fractions(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..40)) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let r = evaluate_predictions(&pred, &gold, 3, Some(2)).unwrap();
        let f1 = r.f1_binary.unwrap();
        for x in [r.accuracy, r.f1_macro, f1] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn training_is_deterministic_and_monotone(texts in prop::collection::vec(("[a-d ]{1,12}", 0usize..2), 1..10)) {
        let cfg = FeaturizerConfig { dim: 64, l2_normalize: true, ..FeaturizerConfig::default() };
        let data: Vec<Example> = texts.iter().map(|(t, y)| {
            let mut target = vec![0.0; 2];
            target[*y] = 1.0;
            Example { features: featurize(t, &cfg), target }
        }).collect();
        let tc = TrainConfig { epochs: 60, ..TrainConfig::default() };
        let a = train(&data, 2, 64, &tc).unwrap();
        let b = train(&data, 2, 64, &tc).unwrap();
        prop_assert_eq!(&a, &b);
        for w in a.diagnostics.loss_trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }
}

fn spec() -> TaskSpec {
    TaskSpec {
        language_line: "# Python 3".into(),
        task_description: "# Decide whether a comment is spam.".into(),
        function_signature: "def label_comment(comment):".into(),
        labeling_instructions: "    # return 1 for spam, 0 for ham, -1 to abstain".into(),
        mission: Some("# Keep the comment section useful.".into()),
        heuristics: Some(vec!["subscribe".into(), "check out".into()]),
        lf_exemplars: Some(vec!["def lf(c):\n    return 1 if 'http' in c else -1".into()]),
        data_exemplars: Some(vec![
            DataExemplar { text: "win a free iphone".into(), label: "spam".into() },
            DataExemplar { text: "nice video".into(), label: "ham".into() },
        ]),
        output_form: Default::default(),
        comment_prefix: "# ".into(),
    }
}

proptest! {
    #[test]
    fn every_strategy_contains_general_components(temp in 0.0f64..=0.2, samples in 1u32..5) {
        let spec = spec();
        let params = GenerationParams { temperature: temp, n_samples: samples, ..GenerationParams::default() };
        for strategy in PromptStrategy::ALL {
            let bundle = build_prompt(strategy, &spec, params.clone()).unwrap();
            let mut at = 0;
            for part in [&spec.language_line, &spec.task_description, &spec.function_signature, &spec.labeling_instructions] {
                let pos = bundle.text[at..].find(part.as_str());
                prop_assert!(pos.is_some(), "{strategy} lacks {part}");
                at += pos.unwrap() + part.len();
            }
            let again = build_prompt(strategy, &spec, params.clone()).unwrap();
            prop_assert_eq!(again, bundle);
        }
    }
}
