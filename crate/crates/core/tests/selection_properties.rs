mod common;

use palms_core::selection::{assign_weights, compute_cutoffs, select_best, LoocvScore};
use palms_core::{
    run_palms, run_palms_fwc, select_model, train_svc, Dataset, LabeledPoint, ModelGrid, ModelParams, SeededRng,
    SelectionMethod, SimulatedOracle, SolverSettings,
};
use proptest::prelude::*;

fn grid(n_features: usize) -> ModelGrid {
    let g = 1.0 / n_features as f64;
    let gammas: Vec<f64> = [1e-2, 1.0, 1e2].iter().map(|m| m * g).collect();
    ModelGrid::product(&[0.01, 1.0, 100.0], &gammas, ModelParams { c: 1.0, gamma: g }).unwrap()
}

fn split(data: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let mut rng = SeededRng::new(seed);
    palms_core::data::stratified_initial_sample(data, 2, &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unit_weight_reduces_to_plain_selection(seed in 0u64..1_000, budget in 0usize..20) {
        let data = common::overlapping_blobs(seed, 30, 1.5, 1.0);
        let (init, pool) = split(&data, seed);
        let g = grid(2);
        let s = SolverSettings::default();
        let (plain, rec_a, _) =
            run_palms(&init, &pool, budget, &g, &mut SimulatedOracle::new(&pool), &s, &mut SeededRng::new(0)).unwrap();
        let (fwc, rec_b, _) =
            run_palms_fwc(&init, &pool, budget, &g, 1.0, &mut SimulatedOracle::new(&pool), &s, &mut SeededRng::new(0)).unwrap();
        prop_assert_eq!(rec_a.queries, rec_b.queries);
        prop_assert_eq!(plain.chosen, fwc.chosen);
        for (a, b) in plain.scores.iter().zip(&fwc.scores) {
            prop_assert_eq!(a.accuracy, b.accuracy);
        }
    }

    #[test]
    fn selection_ignores_score_order(accs in prop::collection::vec(0u8..4, 9), rot in 0usize..9) {
        let g = grid(2);
        let scores: Vec<LoocvScore> = g
            .models()
            .iter()
            .zip(&accs)
            .map(|(m, &a)| LoocvScore::plain(*m, (0..4).map(|i| i < a).collect()))
            .collect();
        let mut rotated = scores.clone();
        rotated.rotate_left(rot);
        let (a, _) = select_best(&scores, &g).unwrap();
        let (b, _) = select_best(&rotated, &g).unwrap();
        prop_assert_eq!(a, b);
        let top = scores.iter().map(|s| s.accuracy).fold(f64::MIN, f64::max);
        let smallest = scores
            .iter()
            .filter(|s| s.accuracy == top)
            .map(|s| (s.model.gamma, s.model.c))
            .min_by(|x, y| x.partial_cmp(y).unwrap())
            .unwrap();
        prop_assert_eq!((a.gamma, a.c), smallest);
    }

    #[test]
    fn cutoffs_follow_kernel_scaling(seed in 0u64..1_000, s in 0.1f64..10.0) {
        // scaling x by s and gamma by 1/s^2 leaves every kernel value unchanged
        let data = common::overlapping_blobs(seed, 12, 1.5, 1.0);
        let scaled = Dataset::new(
            2,
            data.iter().map(|p| LabeledPoint { x: p.x.iter().map(|v| v * s).collect(), ..p.clone() }).collect(),
        )
        .unwrap();
        let settings = SolverSettings::with_tolerance(1e-10);
        let a = train_svc(&data, ModelParams { c: 1.0, gamma: 0.5 }, &settings).unwrap();
        let b = train_svc(&scaled, ModelParams { c: 1.0, gamma: 0.5 / (s * s) }, &settings).unwrap();
        let (ca, cb) = (compute_cutoffs(&a, &data).unwrap(), compute_cutoffs(&b, &scaled).unwrap());
        prop_assert!((ca.class0 - cb.class0).abs() < 1e-5);
        prop_assert!((ca.class1 - cb.class1).abs() < 1e-5);
        let wa = assign_weights(&a, &data, ca, 1.5).unwrap();
        for (p, &w) in data.iter().zip(&wa.weights) {
            let f = a.decision_value(&p.x).unwrap();
            let far = f.abs() >= wa.cutoffs.for_class(palms_core::svm::label_of(f));
            prop_assert_eq!(w, if far { 1.5 } else { 1.0 });
        }
    }
}

#[test]
fn fwc_changes_only_the_default_score() {
    let data = common::overlapping_blobs(3, 20, 1.0, 1.0);
    let g = grid(2);
    let s = SolverSettings::default();
    let (plain, _) = select_model(&data, &g, SelectionMethod::Palms, &s).unwrap();
    let (fwc, _) = select_model(&data, &g, SelectionMethod::PalmsFwc { weight: 3.0 }, &s).unwrap();
    for (a, b) in plain.scores.iter().zip(&fwc.scores) {
        assert_eq!(a.fold_correct, b.fold_correct);
        if a.model.same_as(&g.default_model()) {
            assert!(b.weighted);
        } else {
            assert_eq!(a.accuracy, b.accuracy);
            assert!(!b.weighted);
        }
    }
    let wa = fwc.weight_assignment.unwrap();
    assert_eq!(wa.ids, data.ids());
}

#[test]
fn loocv_agrees_with_refitting() {
    let data = common::overlapping_blobs(9, 10, 1.0, 1.2);
    let g = grid(2);
    let s = SolverSettings::default();
    let (report, _) = select_model(&data, &g, SelectionMethod::Palms, &s).unwrap();
    for score in &report.scores {
        assert_eq!(score.fold_correct, common::naive_loocv(&data, score.model, &s), "{:?}", score.model);
    }
}
