use crate::common::{rng, scalar, uniform};
use ddx_core::classifier::losses;
use ddx_core::numerics::{Tape, Tensor2};

fn softmax_rows(t: &Tensor2) -> Tensor2 {
    let (r, c) = t.shape();
    Tensor2::from_fn(r, c, |i, j| {
        let row = t.row(i);
        let m = row.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
        (row[j] - m).exp() / z
    })
}

pub fn matching_attention_gives_zero_explanation_loss() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let a = softmax_rows(&uniform(&mut r, 3, 7, 2.0));
        let mut tape = Tape::new();
        let av = tape.leaf(a.clone());
        let p = tape.leaf(Tensor2::filled(1, 4, 0.3));
        let l = losses(&mut tape, av, a, p, &[0, 2], &[1.0, 0.0], 1.0, 0.5).unwrap();
        assert_eq!(scalar(&tape, l.l_expl), 0.0);
    }
}

pub fn half_probability_gives_ln2() {
    for labels in [vec![1.0], vec![0.0, 1.0], vec![1.0, 1.0, 0.0, 0.0, 1.0]] {
        let cols: Vec<usize> = (0..labels.len()).collect();
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor2::filled(2, 3, 1.0 / 3.0));
        let p = tape.leaf(Tensor2::filled(1, labels.len(), 0.5));
        let l = losses(&mut tape, a, Tensor2::filled(2, 3, 1.0 / 3.0), p, &cols, &labels, 1.0, 0.5).unwrap();
        assert!((scalar(&tape, l.l_d) - std::f64::consts::LN_2).abs() < 1e-12);
    }
}

pub fn total_is_weighted_sum_exactly() {
    for seed in 0..50 {
        let mut r = rng(100 + seed);
        let a = softmax_rows(&uniform(&mut r, 2, 5, 2.0));
        let target = softmax_rows(&uniform(&mut r, 2, 5, 2.0));
        let probs = Tensor2::from_fn(1, 4, |_, j| 0.1 + 0.2 * j as f64);
        let mut tape = Tape::new();
        let av = tape.leaf(a);
        let p = tape.leaf(probs);
        let l = losses(&mut tape, av, target, p, &[3, 1], &[1.0, 0.0], 1.0, 0.5).unwrap();
        let (d, e, t) = (scalar(&tape, l.l_d), scalar(&tape, l.l_expl), scalar(&tape, l.total));
        assert!(e > 0.0);
        assert_eq!(t, 1.0 * d + 0.5 * e);
    }
}
