mod common;

use common::oracle_metrics;
use evseg_core::labels::{LabelMap, IGNORE, NUM_CLASSES};
use evseg_core::metrics::{metrics, metrics_with, ConfusionMatrix, MeanMode};
use evseg_core::report::{fixture_rows, render_table};
use evseg_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lm(h: usize, w: usize, d: Vec<u8>) -> LabelMap {
    LabelMap::new(h, w, d).unwrap()
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}

fn random_map(rng: &mut impl Rng, classes: u8, ignore_p: f64) -> Vec<u8> {
    (0..64)
        .map(|_| if rng.gen_bool(ignore_p) { IGNORE } else { rng.gen_range(0..classes) })
        .collect()
}

#[test]
fn hand_tally() {
    let cm = ConfusionMatrix::default()
        .accumulate(&lm(2, 2, vec![0, 1, 1, 1]), &lm(2, 2, vec![0, 0, 1, 1]))
        .unwrap();
    assert_eq!((cm.get(0, 0), cm.get(0, 1), cm.get(1, 1), cm.total()), (1, 1, 2, 4));
    let m = metrics(&cm);
    assert_eq!(m.acc, Some(0.75));
    assert_eq!(m.per_class_iou[0], Some(0.5));
    assert_eq!(m.per_class_iou[1], Some(2.0 / 3.0));
    assert_eq!(m.miou, Some(7.0 / 12.0));
    assert_eq!(m.fwiou, Some(7.0 / 12.0));
    assert!(m.per_class_iou[2..].iter().all(Option::is_none));
}

#[test]
fn perfect_and_empty() {
    let gt = lm(2, 3, vec![0, 5, 5, 18, IGNORE, 2]);
    let m = metrics(&ConfusionMatrix::default().accumulate(&gt, &gt).unwrap());
    assert_eq!((m.acc, m.miou, m.fwiou), (Some(1.0), Some(1.0), Some(1.0)));
    let all_ignore = lm(2, 2, vec![IGNORE; 4]);
    let cm = ConfusionMatrix::default().accumulate(&lm(2, 2, vec![3; 4]), &all_ignore).unwrap();
    assert_eq!(cm, ConfusionMatrix::default());
    let m = metrics(&cm);
    assert_eq!((m.acc, m.miou, m.fwiou), (None, None, None));
}

#[test]
fn absent_classes_are_left_out_of_the_mean() {
    // Class 16 never appears in ground truth or prediction, as in a target
    // domain without any train.
    let gt = lm(1, 4, vec![0, 0, 13, 13]);
    let pred = lm(1, 4, vec![0, 13, 13, 13]);
    let m = metrics(&ConfusionMatrix::default().accumulate(&pred, &gt).unwrap());
    assert_eq!(m.per_class_iou[16], None);
    assert_eq!(m.miou, Some(7.0 / 12.0));
    let strict = metrics_with(&ConfusionMatrix::default().accumulate(&pred, &gt).unwrap(), MeanMode::Strict);
    assert!((strict.miou.unwrap() - (0.5 + 2.0 / 3.0) / 19.0).abs() < 1e-15);
    let table = render_table(&fixture_rows());
    let train_row = table.lines().find(|l| l.contains("ISSAFE-CLAN") && l.contains("target")).unwrap();
    assert!(train_row.contains(" - "));
}

#[test]
fn shape_mismatch_is_a_dimension_error() {
    let r = ConfusionMatrix::default().accumulate(&lm(2, 2, vec![0; 4]), &lm(1, 4, vec![0; 4]));
    assert!(matches!(r, Err(Error::Dimension(_))));
}

#[test]
fn thousand_random_pairs_match_definitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let classes = [2u8, 4, 19][i % 3];
        let gt = random_map(&mut rng, classes, 0.1);
        let pred = random_map(&mut rng, classes, 0.0);
        let m = metrics(&ConfusionMatrix::default().accumulate(&lm(8, 8, pred.clone()), &lm(8, 8, gt.clone())).unwrap());
        let o = oracle_metrics(&[(&pred, &gt)], NUM_CLASSES);
        assert!(close(m.acc, o.acc, 1e-12));
        assert!(close(m.miou, o.miou, 1e-12));
        assert!(close(m.fwiou, o.fwiou, 1e-12));
        for c in 0..NUM_CLASSES {
            assert!(close(m.per_class_iou[c], o.iou[c], 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_order_does_not_matter(seed in any::<u64>(), parts in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<(Vec<u8>, Vec<u8>)> = (0..parts)
            .map(|_| (random_map(&mut rng, 5, 0.0), random_map(&mut rng, 5, 0.2)))
            .collect();
        let single = frames.iter().fold(ConfusionMatrix::default(), |cm, (p, g)| {
            cm.accumulate(&lm(8, 8, p.clone()), &lm(8, 8, g.clone())).unwrap()
        });
        let reversed = frames.iter().rev().fold(ConfusionMatrix::default(), |cm, (p, g)| {
            cm.accumulate(&lm(8, 8, p.clone()), &lm(8, 8, g.clone())).unwrap()
        });
        let split = parts / 2;
        let sum = |fs: &[(Vec<u8>, Vec<u8>)]| fs.iter().fold(ConfusionMatrix::default(), |cm, (p, g)| {
            cm.accumulate(&lm(8, 8, p.clone()), &lm(8, 8, g.clone())).unwrap()
        });
        let merged = &sum(&frames[..split]) + &sum(&frames[split..]);
        prop_assert_eq!(&single, &reversed);
        prop_assert_eq!(&single, &merged);
        prop_assert_eq!(metrics(&single), metrics(&merged));
    }

    #[test]
    fn metrics_are_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_map(&mut rng, 6, 0.3);
        let pred = random_map(&mut rng, 6, 0.0);
        let m = metrics(&ConfusionMatrix::default().accumulate(&lm(8, 8, pred), &lm(8, 8, gt)).unwrap());
        for v in [m.acc, m.miou, m.fwiou].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if let (Some(fw), Some(acc)) = (m.fwiou, m.acc) {
            prop_assert!(fw <= acc + 1e-12);
        }
    }

    #[test]
    fn predictions_at_ignored_pixels_are_irrelevant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_map(&mut rng, 7, 0.4);
        let pred = random_map(&mut rng, 7, 0.0);
        let mut other = pred.clone();
        for (o, &g) in other.iter_mut().zip(&gt) {
            if g == IGNORE {
                *o = rng.gen_range(0..19);
            }
        }
        let a = ConfusionMatrix::default().accumulate(&lm(8, 8, pred), &lm(8, 8, gt.clone())).unwrap();
        let b = ConfusionMatrix::default().accumulate(&lm(8, 8, other), &lm(8, 8, gt)).unwrap();
        prop_assert_eq!(metrics(&a), metrics(&b));
    }
}
