use capnet::cells::NetworkTopology;
use capnet::data::{Sample, SAMPLE_LEN};
use capnet::learning::*;
use proptest::prelude::*;

/// Response matrix as printed alongside the hardware results; rows are true
/// classes, columns class circuits.
const REFERENCE_MATRIX: [[f64; 10]; 10] = [
    [-1.1, -0.5, -0.3, 0.6, 6e-14, 0.5, -0.2, 0.2, 1.3, 1.2],
    [-1.5, -0.9, -0.8, 0.8, 1.0, -1.6, 1.0, -0.6, 0.2, 2.2],
    [-0.2, -1.6, -0.3, -0.2, 0.6, 0.0, 1.2, 0.6, -0.3, 0.9],
    [-0.7, -0.1, 0.7, 1.3, 1.5, 2.3, 0.5, 0.3, 0.6, -1.6],
    [-0.6, 0.1, -1.9, 0.3, 0.0, -0.9, -0.2, 6e-14, 0.9, 0.3],
    [2.7, 0.1, -1.9, -1.7, -3.1, -2.1, -0.7, -0.7, 2.3, -1.0],
    [-1.8, 1.7, -1.1, -1.5, -0.3, -0.6, 6e-14, 0.8, 1.5, -1.3],
    [-3.2, -0.4, 2.7, -1.1, -1.6, 0.6, 2.4, 0.5, -0.2, 0.2],
    [-0.8, -0.2, 1.4, -1.4, 1.0, -1.4, 0.5, 0.3, 3.2, 2.0],
    [-0.7, 0.7, 0.3, -1.0, -0.5, 0.2, 1.3, -0.2, -0.3, -1.9],
];

fn sample(label: u8, active: &[usize]) -> Sample {
    let mut values = [0u8; SAMPLE_LEN];
    for &k in active {
        values[k] = 255;
    }
    Sample { label, values }
}

fn rows_of(m: &[[f64; 10]]) -> Vec<ResponseRow> {
    m.iter()
        .enumerate()
        .map(|(c, r)| ResponseRow {
            label: c as u8,
            responses: r.to_vec(),
        })
        .collect()
}

fn cfg() -> HarnessConfig {
    HarnessConfig::default()
}

#[test]
fn positive_row_charges_only_active_pins() {
    let topo = NetworkTopology::default();
    let s = sample(3, &[0, 7, 24]);
    let out = train_class_circuit(3, &[s], &topo, Some(&FeedbackRule::default()), &cfg()).unwrap();
    for (k, v) in out.state.inputs.iter().enumerate() {
        if [0, 7, 24].contains(&k) {
            assert!(*v > 1e-3, "pin {k} did not charge: {v}");
        } else {
            assert!(v.abs() < 1e-9, "inactive pin {k} moved to {v}");
        }
    }
    assert_eq!(out.measurements.len(), 1);
}

#[test]
fn feedback_slows_charging_on_negative_rows() {
    let topo = NetworkTopology::default();
    let s = sample(1, &(0..SAMPLE_LEN).step_by(2).collect::<Vec<_>>());
    let with = train_class_circuit(0, &[s], &topo, Some(&FeedbackRule::default()), &cfg()).unwrap();
    let without = train_class_circuit(0, &[s], &topo, None, &cfg()).unwrap();
    let q = |w: &WeightState| w.inputs.iter().sum::<f64>();
    assert!(q(&with.state) < q(&without.state), "{} vs {}", q(&with.state), q(&without.state));
    for (a, b) in with.state.inputs.iter().zip(&without.state.inputs) {
        assert!(a <= b, "{a} > {b}");
    }
}

#[test]
fn feedback_is_inert_on_positive_rows() {
    let topo = NetworkTopology::default();
    let s = sample(0, &[2, 3, 4]);
    let with = train_class_circuit(0, &[s], &topo, Some(&FeedbackRule::default()), &cfg()).unwrap();
    let without = train_class_circuit(0, &[s], &topo, None, &cfg()).unwrap();
    for (a, b) in with.state.inputs.iter().zip(&without.state.inputs) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn empty_dataset_leaves_initial_state() {
    let topo = NetworkTopology::default();
    let out = train_class_circuit(5, &[], &topo, Some(&FeedbackRule::default()), &cfg()).unwrap();
    assert_eq!(out.state, WeightState::zeros(5, 25, topo.supply));
    assert!(out.measurements.is_empty());
    assert!(out.warning.is_none());
}

#[test]
fn class_id_out_of_range_is_rejected() {
    let topo = NetworkTopology::default();
    let r = train_class_circuit(10, &[], &topo, None, &cfg());
    assert!(matches!(r, Err(LearningError::BadClass(10))));
}

#[test]
fn training_is_deterministic() {
    let topo = NetworkTopology::default();
    let rows = toy_set(3, 2, 11);
    let a = train_class_circuit(1, &rows, &topo, Some(&FeedbackRule::default()), &cfg()).unwrap();
    let b = train_class_circuit(1, &rows, &topo, Some(&FeedbackRule::default()), &cfg()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn weight_text_round_trips() {
    let mut w = WeightState::zeros(7, 25, 5.0);
    for (k, v) in w.inputs.iter_mut().enumerate() {
        *v = k as f64 * 0.173;
    }
    w.output = 1.25;
    let text = w.to_text();
    assert!(text.starts_with("class=7 supply=5.0 format=1\n"));
    assert_eq!(text.lines().count(), 27);
    assert_eq!(WeightState::from_text(&text).unwrap(), w);
}

#[test]
fn malformed_weight_text_is_rejected() {
    for bad in [
        "",
        "class=7 supply=5.0 format=2\n0,1.0\n",
        "class=12 supply=5.0 format=1\n0,1.0\n",
        "class=1 supply=5.0 format=1\n1,1.0\n",
        "class=1 supply=5.0 format=1\n0,abc\n",
        "class=1 supply=5.0 format=1\n",
    ] {
        assert!(WeightState::from_text(bad).is_err(), "{bad:?}");
    }
}

#[test]
fn saturation_flags_mark_values_near_supply() {
    let mut w = WeightState::zeros(0, 25, 5.0);
    w.inputs[0] = 4.96;
    w.inputs[1] = 4.9;
    let f = w.saturated_flags();
    assert_eq!(f.len(), 26);
    assert!(f[0] && !f[1]);
    assert!((w.input_saturation() - 0.04).abs() < 1e-12);
}

#[test]
fn zero_sample_reads_the_baseline() {
    let topo = NetworkTopology::default();
    let clf = Classifier::new(&topo).unwrap();
    let rows = toy_set(2, 1, 3);
    let states: Vec<WeightState> = train_all(&[0, 1], &rows, &topo, Some(&FeedbackRule::default()), &cfg())
        .unwrap()
        .into_iter()
        .map(|o| o.state)
        .collect();
    let zero = sample(0, &[]);
    let base = baseline_offsets(&clf, &cfg(), ResponseUnit::Amperes).unwrap();
    for (r, b) in clf.infer(&zero, &states, &cfg(), 0).unwrap().iter().zip(&base) {
        assert!((r.amperes - b).abs() < 1e-9, "{} vs {b}", r.amperes);
        assert_eq!(r.counts, 512);
    }
}

#[test]
fn responses_do_not_depend_on_circuit_order() {
    let topo = NetworkTopology::default();
    let clf = Classifier::new(&topo).unwrap();
    let rows = toy_set(2, 1, 5);
    let mut states: Vec<WeightState> = train_all(&[0, 1], &rows, &topo, Some(&FeedbackRule::default()), &cfg())
        .unwrap()
        .into_iter()
        .map(|o| o.state)
        .collect();
    let fwd = clf.infer(&rows[0], &states, &cfg(), 0).unwrap();
    states.reverse();
    let mut rev = clf.infer(&rows[0], &states, &cfg(), 0).unwrap();
    rev.reverse();
    assert_eq!(fwd, rev);
}

#[test]
fn sole_training_sample_wins_its_own_circuit() {
    let topo = NetworkTopology::default();
    let clf = Classifier::new(&topo).unwrap();
    let a = sample(0, &[0, 1, 2, 5, 6, 7]);
    let b = sample(1, &[17, 18, 19, 22, 23, 24]);
    let states: Vec<WeightState> = train_all(&[0, 1], &[a, b], &topo, Some(&FeedbackRule::default()), &cfg())
        .unwrap()
        .into_iter()
        .map(|o| o.state)
        .collect();
    for s in [a, b] {
        let r = clf.infer(&s, &states, &cfg(), 0).unwrap();
        let amps: Vec<f64> = r.iter().map(|x| x.amperes).collect();
        assert_eq!(argmax(&amps), s.label as usize, "{amps:?}");
    }
}

#[test]
fn toy_set_is_separated_by_trained_circuits() {
    let topo = NetworkTopology::default();
    let clf = Classifier::new(&topo).unwrap();
    let rows = toy_set(10, 3, 0);
    let states: Vec<WeightState> = train_all(&[0, 1], &rows, &topo, Some(&FeedbackRule::default()), &cfg())
        .unwrap()
        .into_iter()
        .map(|o| o.state)
        .collect();
    let (resp, _) = respond_all(&clf, &rows, &states, &cfg(), ResponseUnit::Amperes).unwrap();
    let hits = resp.iter().filter(|r| argmax(&r.responses) == r.label as usize).count();
    assert!(hits as f64 / rows.len() as f64 >= 0.9, "{hits}/{}", rows.len());
}

#[test]
fn toy_set_shape() {
    let rows = toy_set(4, 2, 9);
    assert_eq!(rows.len(), 8);
    for r in &rows {
        let lit = r.values.iter().filter(|v| **v > 0).count();
        assert_eq!(lit, if r.label == 0 { 10 } else { 11 });
    }
    assert_eq!(rows, toy_set(4, 2, 9));
}

#[test]
fn reference_matrix_row_eight_is_a_hit_and_row_zero_a_miss() {
    assert_eq!(argmax(&REFERENCE_MATRIX[8]), 8);
    assert_eq!(argmax(&REFERENCE_MATRIX[0]), 8);
    let (m, metrics) = evaluate(&rows_of(&REFERENCE_MATRIX), None, "published").unwrap();
    assert_eq!(m.diagonal_hits(), 1);
    assert!((metrics.top1 - 0.1).abs() < 1e-12);
    assert_eq!(metrics.confusion[8][8], 1);
    assert_eq!(metrics.confusion[0][8], 1);
}

#[test]
fn identity_matrix_scores_perfectly() {
    let mut m = [[0.0; 10]; 10];
    for (k, row) in m.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    let (rm, metrics) = evaluate(&rows_of(&m), None, "unit").unwrap();
    assert_eq!(metrics.top1, 1.0);
    assert_eq!(metrics.top3, 1.0);
    assert_eq!(rm.diagonal_hits(), 10);
    assert_eq!(metrics.n_eval, 10);
}

#[test]
fn ties_go_to_the_lowest_index() {
    let rows = vec![ResponseRow {
        label: 4,
        responses: vec![1.0; 10],
    }];
    let (_, m) = evaluate(&rows, None, "A").unwrap();
    assert_eq!(m.confusion[4][0], 1);
    assert_eq!(m.top1, 0.0);
    assert_eq!(m.top3, 0.0);
    assert_eq!(m.tie_rule, TIE_RULE);
}

#[test]
fn per_circuit_offsets_are_subtracted() {
    let rows = vec![ResponseRow {
        label: 2,
        responses: vec![5.0, 5.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    }];
    let offsets = [4.0, 4.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    assert_eq!(evaluate(&rows, None, "A").unwrap().1.top1, 0.0);
    assert_eq!(evaluate(&rows, Some(&offsets), "A").unwrap().1.top1, 1.0);
}

#[test]
fn shape_errors() {
    let short = vec![ResponseRow {
        label: 0,
        responses: vec![0.0; 9],
    }];
    assert!(matches!(evaluate(&short, None, "A"), Err(LearningError::ShapeMismatch(_))));
    let ok = rows_of(&REFERENCE_MATRIX);
    assert!(matches!(evaluate(&ok, Some(&[0.0; 3]), "A"), Err(LearningError::ShapeMismatch(_))));
    let bad_label = vec![ResponseRow {
        label: 10,
        responses: vec![0.0; 10],
    }];
    assert!(evaluate(&bad_label, None, "A").is_err());
}

#[test]
fn csv_outputs_have_expected_shape() {
    let (m, metrics) = evaluate(&rows_of(&REFERENCE_MATRIX), None, "published").unwrap();
    let csv = m.to_csv();
    assert!(csv.starts_with("# unit=published\ntrue_class,n,c0"));
    assert_eq!(csv.lines().count(), 12);
    let csv = metrics.to_csv();
    assert_eq!(csv.lines().count(), 12);
    assert!(csv.contains("tie_rule=lowest index wins ties"));
}

fn arb_rows() -> impl Strategy<Value = Vec<ResponseRow>> {
    prop::collection::vec(
        (0u8..10, prop::collection::vec(-10.0f64..10.0, 10)).prop_map(|(label, responses)| ResponseRow { label, responses }),
        1..40,
    )
}

proptest! {
    #[test]
    fn top1_never_exceeds_top3(rows in arb_rows()) {
        let (_, m) = evaluate(&rows, None, "A").unwrap();
        prop_assert!(0.0 <= m.top1 && m.top1 <= m.top3 && m.top3 <= 1.0);
        for c in 0..10 {
            let n = rows.iter().filter(|r| r.label as usize == c).count();
            prop_assert_eq!(m.confusion[c].iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn uniform_row_shift_changes_nothing(rows in arb_rows(), shifts in prop::collection::vec(-100.0f64..100.0, 40)) {
        let shifted: Vec<ResponseRow> = rows
            .iter()
            .zip(&shifts)
            .map(|(r, s)| ResponseRow { label: r.label, responses: r.responses.iter().map(|v| v + s).collect() })
            .collect();
        let (_, a) = evaluate(&rows, None, "A").unwrap();
        let (_, b) = evaluate(&shifted, None, "A").unwrap();
        prop_assert_eq!(a.confusion, b.confusion);
        prop_assert_eq!(a.top3, b.top3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trained_weights_stay_within_the_rails(
        rows in prop::collection::vec((0u8..10, prop::collection::vec(any::<bool>(), SAMPLE_LEN)), 1..6),
        class_id in 0u8..10,
    ) {
        let samples: Vec<Sample> = rows
            .iter()
            .map(|(label, on)| {
                let mut values = [0u8; SAMPLE_LEN];
                for (v, b) in values.iter_mut().zip(on) {
                    *v = if *b { 255 } else { 0 };
                }
                Sample { label: *label, values }
            })
            .collect();
        let topo = NetworkTopology::default();
        let out = train_class_circuit(class_id, &samples, &topo, Some(&FeedbackRule::default()), &cfg()).unwrap();
        for v in out.state.voltages() {
            prop_assert!((-1e-9..=topo.supply + 1e-9).contains(&v), "{}", v);
        }
    }
}

#[test]
fn baseline_gradient_matches_finite_differences() {
    let batch = toy_set(3, 2, 4);
    let batch = &batch[..5];
    let model = BaselineModel::new(8, 1);
    let g = model.gradient(batch);
    // balances truncation against roundoff for this loss scale
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for k in 0..model.param_count() {
        let mut plus = model.clone();
        *plus.params_mut().nth(k).unwrap() += h;
        let mut minus = model.clone();
        *minus.params_mut().nth(k).unwrap() -= h;
        let fd = (plus.loss(batch) - minus.loss(batch)) / (2.0 * h);
        let rel = (fd - g[k]).abs() / g[k].abs().max(fd.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-6, "worst relative error {worst}");
}

fn balanced_synthetic(n_per_class: usize) -> Vec<Sample> {
    // Class c lights pins c, c+10 and (c+20 when in range) at full scale.
    (0..n_per_class)
        .flat_map(|_| 0..10u8)
        .map(|c| {
            let pins: Vec<usize> = [c as usize, c as usize + 10, c as usize + 20]
                .into_iter()
                .filter(|p| *p < SAMPLE_LEN)
                .collect();
            sample(c, &pins)
        })
        .collect()
}

#[test]
fn untrained_baseline_sits_near_chance() {
    let data = balanced_synthetic(20);
    let cfg = BaselineConfig {
        epochs: 0,
        ..Default::default()
    };
    let model = baseline_train(&data, &cfg).unwrap();
    let m = baseline_eval(&model, &data).unwrap();
    assert!(m.top1 <= 0.3, "{}", m.top1);
}

#[test]
fn baseline_learns_a_separable_set_deterministically() {
    let data = balanced_synthetic(30);
    let cfg = BaselineConfig {
        epochs: 30,
        ..Default::default()
    };
    let a = baseline_train(&data, &cfg).unwrap();
    let b = baseline_train(&data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(baseline_eval(&a, &data).unwrap().top1, 1.0);
}

#[test]
fn baseline_rejects_bad_config() {
    let data = balanced_synthetic(1);
    for cfg in [
        BaselineConfig {
            learning_rate: 0.0,
            ..Default::default()
        },
        BaselineConfig {
            hidden: 0,
            ..Default::default()
        },
    ] {
        assert!(matches!(baseline_train(&data, &cfg), Err(LearningError::InvalidConfig(_))));
    }
}
