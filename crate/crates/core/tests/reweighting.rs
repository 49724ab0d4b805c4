//! Reweighted loss and hard-example mining properties.

mod common;

use common::criteria;
use patchsel::autograd::{Tape, Tensor};
use patchsel::training::{hnm_threshold, hnm_weights, reweighted_loss, reweighted_loss_var, WEIGHT_EPS};
use proptest::prelude::*;

#[test]
fn reweighting_invariants() {
    match criteria::criterion2() {
        Ok(s) => eprintln!("{s}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn hnm_semantics() {
    match criteria::criterion5() {
        Ok(s) => eprintln!("{s}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn hnm_weight_examples() {
    assert_eq!(hnm_weights(&[30.0, 50.0], 40.0), vec![1.0, 0.0]);
    assert_eq!(hnm_weights(&[41.0, 50.0], 40.0), vec![0.0, 0.0]);
    assert_eq!(hnm_weights(&[41.0, 99.0], f64::INFINITY), vec![1.0, 1.0]);
}

#[test]
fn hnm_schedule_examples() {
    assert_eq!(hnm_threshold(0, 45.0, 35.0, 10).unwrap(), 45.0);
    assert_eq!(hnm_threshold(5, 45.0, 35.0, 10).unwrap(), 40.0);
    assert_eq!(hnm_threshold(10, 45.0, 35.0, 10).unwrap(), 35.0);
    assert!(hnm_threshold(11, 45.0, 35.0, 10).is_err());
}

#[test]
fn nan_loss_is_reported() {
    assert!(reweighted_loss(&[1.0, f64::NAN], &[0.5, 0.5], WEIGHT_EPS).is_err());
    assert!(reweighted_loss(&[1.0], &[0.5, 0.5], WEIGHT_EPS).is_err());
}

fn losses_and_t() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..5.0f64, n),
            prop::collection::vec(1e-3..1.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn weights_sum_to_n_up_to_guard((l, t) in losses_and_t()) {
        let rec = reweighted_loss(&l, &t, WEIGHT_EPS).unwrap();
        let n = l.len() as f64;
        let st: f64 = t.iter().sum();
        prop_assert!((rec.weight_sum() - n * st / (st + WEIGHT_EPS)).abs() <= 1e-9 * n);
    }

    #[test]
    fn total_is_weighted_mean((l, t) in losses_and_t()) {
        let rec = reweighted_loss(&l, &t, WEIGHT_EPS).unwrap();
        let direct = rec.weights.iter().zip(&l).map(|(w, l)| w * l).sum::<f64>() / l.len() as f64;
        prop_assert!((rec.total - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        let (lo, hi) = l.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(rec.total >= lo * (1.0 - 1e-6) - 1e-12 && rec.total <= hi + 1e-12);
    }

    #[test]
    fn scaling_t_leaves_total_unchanged((l, t) in losses_and_t(), c in 0.01..100.0f64) {
        let a = reweighted_loss(&l, &t, WEIGHT_EPS).unwrap().total;
        let ct: Vec<f64> = t.iter().map(|v| v * c).collect();
        let b = reweighted_loss(&l, &ct, WEIGHT_EPS).unwrap().total;
        let st: f64 = t.iter().sum();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs() + 10.0 * WEIGHT_EPS / (c.min(1.0) * st));
    }

    #[test]
    fn gradient_identity((l, t) in losses_and_t()) {
        let n = l.len();
        let mut tape = Tape::new();
        let lv = tape.leaf(Tensor::new(vec![n], l.clone()).unwrap());
        let tv = tape.leaf(Tensor::new(vec![n], t.clone()).unwrap());
        let total = reweighted_loss_var(&mut tape, lv, tv, WEIGHT_EPS).unwrap();
        let tot = tape.value(total).item().unwrap();
        let g = tape.backward(total).unwrap();
        let st: f64 = t.iter().sum::<f64>() + WEIGHT_EPS;
        for q in 0..n {
            let formula = (l[q] - tot) / st;
            prop_assert!((g.get(tv).unwrap()[q] - formula).abs() <= 1e-12 * (1.0 + formula.abs()));
            prop_assert!((g.get(lv).unwrap()[q] - t[q] / st).abs() <= 1e-15);
        }
    }

    #[test]
    fn raising_t_of_a_worse_patch_raises_total((l, t) in losses_and_t(), q in 0usize..40) {
        let q = q % l.len();
        let before = reweighted_loss(&l, &t, WEIGHT_EPS).unwrap().total;
        let mut t2 = t.clone();
        t2[q] *= 1.5;
        let after = reweighted_loss(&l, &t2, WEIGHT_EPS).unwrap().total;
        if l[q] > before + 1e-9 {
            prop_assert!(after >= before);
        } else if l[q] < before - 1e-9 {
            prop_assert!(after <= before);
        }
    }

    #[test]
    fn hnm_weights_are_indicators(p in prop::collection::vec(0.0..100.0f64, 0..50), thr in 0.0..100.0f64) {
        let w = hnm_weights(&p, thr);
        prop_assert_eq!(w.len(), p.len());
        for (w, p) in w.iter().zip(&p) {
            prop_assert_eq!(*w, if *p < thr { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn hnm_schedule_is_linear(total in 1usize..200, s in 20.0..60.0f64, e in 20.0..60.0f64) {
        let mut prev = None;
        for epoch in 0..=total {
            let v = hnm_threshold(epoch, s, e, total).unwrap();
            prop_assert!((v - (s + (e - s) * epoch as f64 / total as f64)).abs() < 1e-9);
            if let Some(p) = prev {
                let ok = if e <= s { v <= p } else { v >= p };
                prop_assert!(ok);
            }
            prev = Some(v);
        }
    }
}
