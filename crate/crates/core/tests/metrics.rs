use std::collections::BTreeSet;

use instrumentnet::evaluator::{accumulate, f1_score, micro_macro, ClassCounts, Prf};
use instrumentnet::NUM_CLASSES;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type LabelSet = BTreeSet<usize>;

fn random_set(r: &mut ChaCha8Rng) -> LabelSet {
    (0..NUM_CLASSES).filter(|_| r.gen_bool(0.25)).collect()
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Recount from the raw set pairs without going through ClassCounts.
fn brute_force(pairs: &[(LabelSet, LabelSet)]) -> (f64, f64, f64, f64, f64, f64) {
    let mut all_tp = 0usize;
    let mut all_pred = 0usize;
    let mut all_true = 0usize;
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for c in 0..NUM_CLASSES {
        let tp = pairs.iter().filter(|(p, a)| p.contains(&c) && a.contains(&c)).count();
        let pred = pairs.iter().filter(|(p, _)| p.contains(&c)).count();
        let truth = pairs.iter().filter(|(_, a)| a.contains(&c)).count();
        all_tp += tp;
        all_pred += pred;
        all_true += truth;
        let p = safe_div(tp as f64, pred as f64);
        let r = safe_div(tp as f64, truth as f64);
        sp += p;
        sr += r;
        sf += safe_div(2.0 * p * r, p + r);
    }
    let mp = safe_div(all_tp as f64, all_pred as f64);
    let mr = safe_div(all_tp as f64, all_true as f64);
    let n = NUM_CLASSES as f64;
    (mp, mr, safe_div(2.0 * mp * mr, mp + mr), sp / n, sr / n, sf / n)
}

fn counts_for(pairs: &[(LabelSet, LabelSet)]) -> ClassCounts {
    pairs.iter().fold(ClassCounts::default(), |c, (p, a)| {
        let p: Vec<usize> = p.iter().copied().collect();
        let a: Vec<usize> = a.iter().copied().collect();
        accumulate(&p, &a, c).unwrap()
    })
}

#[test]
fn matches_brute_force_recount_on_random_pairs() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let pairs: Vec<_> = (0..1000).map(|_| (random_set(&mut r), random_set(&mut r))).collect();
    let (micro, macro_, _) = micro_macro(&counts_for(&pairs));
    let (mp, mr, mf, ap, ar, af) = brute_force(&pairs);
    for (got, want) in [
        (micro.precision, mp),
        (micro.recall, mr),
        (micro.f1, mf),
        (macro_.precision, ap),
        (macro_.recall, ar),
        (macro_.f1, af),
    ] {
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn two_class_example_is_exact() {
    // Class 0 is a hit; class 1 is predicted on one excerpt and annotated on another.
    let pairs = vec![
        (LabelSet::from([0]), LabelSet::from([0])),
        (LabelSet::from([1]), LabelSet::new()),
        (LabelSet::new(), LabelSet::from([1])),
    ];
    let counts = counts_for(&pairs);
    assert_eq!((counts.tp[0], counts.fp[0], counts.fn_[0]), (1, 0, 0));
    assert_eq!((counts.tp[1], counts.fp[1], counts.fn_[1]), (0, 1, 1));
    let (micro, _, per_class) = micro_macro(&counts);
    assert_eq!((micro.precision, micro.recall, micro.f1), (0.5, 0.5, 0.5));
    // Macro over the two classes that occur.
    let two = |f: fn(&Prf) -> f64| (f(&per_class[0].metrics) + f(&per_class[1].metrics)) / 2.0;
    assert_eq!(two(|m| m.precision), 0.5);
    assert_eq!(two(|m| m.recall), 0.5);
    assert_eq!(two(|m| m.f1), 0.5);
}

#[test]
fn support_weighting_separates_micro_from_macro() {
    // Class 0: 9 hits. Class 1: one miss and one false alarm.
    let mut pairs = vec![(LabelSet::from([0]), LabelSet::from([0])); 9];
    pairs.push((LabelSet::from([1]), LabelSet::new()));
    pairs.push((LabelSet::new(), LabelSet::from([1])));
    let (micro, macro_, _) = micro_macro(&counts_for(&pairs));
    assert_eq!(micro.f1, 0.9);
    assert_eq!(macro_.f1, 1.0 / NUM_CLASSES as f64);
}

#[test]
fn macro_f1_is_the_mean_of_per_class_f1() {
    let mut counts = ClassCounts::default();
    counts.tp[0] = 3;
    counts.fp[0] = 1;
    counts.tp[1] = 1;
    counts.fn_[1] = 4;
    let (_, macro_, per_class) = micro_macro(&counts);
    let mean: f64 = per_class.iter().map(|c| c.metrics.f1).sum::<f64>() / NUM_CLASSES as f64;
    assert_eq!(macro_.f1, mean);
    assert!((macro_.f1 - f1_score(macro_.precision, macro_.recall)).abs() > 1e-3);
}

#[test]
fn published_triple_satisfies_the_f1_formula() {
    let f = f1_score(0.655, 0.557);
    assert!((f - 2.0 * 0.655 * 0.557 / (0.655 + 0.557)).abs() < 1e-15);
    assert_eq!(format!("{f:.3}"), "0.602");
}

#[test]
fn perfect_predictions_score_one() {
    let pairs: Vec<_> = (0..NUM_CLASSES).map(|c| (LabelSet::from([c]), LabelSet::from([c]))).collect();
    let (micro, macro_, _) = micro_macro(&counts_for(&pairs));
    assert_eq!((micro.f1, macro_.f1), (1.0, 1.0));
}

proptest! {
    #[test]
    fn every_triple_satisfies_f1_identity(seed in any::<u64>(), n in 1usize..60) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<_> = (0..n).map(|_| (random_set(&mut r), random_set(&mut r))).collect();
        let (micro, _, per_class) = micro_macro(&counts_for(&pairs));
        for m in std::iter::once(micro).chain(per_class.iter().map(|c| c.metrics)) {
            let expected = if m.precision + m.recall == 0.0 {
                0.0
            } else {
                2.0 * m.precision * m.recall / (m.precision + m.recall)
            };
            prop_assert!((m.f1 - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn counts_cover_every_label_exactly_once(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (p, a) = (random_set(&mut r), random_set(&mut r));
        let c = counts_for(&[(p.clone(), a.clone())]);
        let tp: u64 = c.tp.iter().sum();
        let fp: u64 = c.fp.iter().sum();
        let fn_: u64 = c.fn_.iter().sum();
        prop_assert_eq!(tp + fp, p.len() as u64);
        prop_assert_eq!(tp + fn_, a.len() as u64);
    }
}
