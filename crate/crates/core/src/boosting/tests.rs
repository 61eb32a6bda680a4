use super::*;
use rand::{Rng, SeedableRng};

fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

fn quick() -> GbtParams {
    GbtParams {
        num_boost_round: 30,
        seed: 5,
        ..GbtParams::default()
    }
}

#[test]
fn logloss_examples() {
    assert!(logloss(&[1], &[1.0 - 1e-15]) < 1e-14);
    let l = logloss(&[0, 1, 1, 0], &[0.5; 4]);
    assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    // Clamping keeps the loss finite.
    assert!(logloss(&[1], &[0.0]).is_finite());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<u8> = (0..50).map(|_| rng.random_bool(0.3) as u8).collect();
    let p: Vec<f64> = (0..50).map(|_| rng.random_range(0.01..0.99)).collect();
    let direct = -y
        .iter()
        .zip(&p)
        .map(|(&yi, &pi)| yi as f64 * pi.ln() + (1.0 - yi as f64) * (1.0 - pi).ln())
        .sum::<f64>()
        / 50.0;
    assert!((logloss(&y, &p) - direct).abs() < 1e-14);
}

#[test]
fn gradients_match_finite_differences() {
    let loss = |y: u8, m: f64, w: f64| {
        let p: f64 = 1.0 / (1.0 + (-m).exp());
        let wy = if y == 1 { w } else { 1.0 };
        -wy * (y as f64 * p.ln() + (1.0 - y as f64) * (1.0 - p).ln())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let y = rng.random_bool(0.5) as u8;
        let m = rng.random_range(-6.0..6.0);
        let w = rng.random_range(0.2..5.0);
        let step = 1e-6;
        let fd_g = (loss(y, m + step, w) - loss(y, m - step, w)) / (2.0 * step);
        let (g, h) = grad_hess(y, m, w);
        assert!((g - fd_g).abs() <= 1e-4 * g.abs().max(1e-3), "g {g} fd {fd_g}");
        // A second difference of the loss at this step is dominated by
        // rounding, so the hessian is checked against the gradient.
        let fd_h2 = (grad_hess(y, m + step, w).0 - grad_hess(y, m - step, w).0) / (2.0 * step);
        assert!((h - fd_h2).abs() <= 1e-4 * h.abs().max(1e-3), "h {h} fd {fd_h2}");
    }
}

#[test]
fn zero_rounds_predict_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_data(&mut rng, 50, 3);
    let y: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
    let m = fit_gbt(&x, &y, &x, &y, &GbtParams { num_boost_round: 0, ..quick() }).unwrap();
    assert_eq!(m.best_iteration, None);
    assert!(m.predict_proba(&x).unwrap().iter().all(|&p| p == 0.5));
    assert!(m.feature_importance.iter().all(|&v| v == 0.0));
}

#[test]
fn single_leaf_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_data(&mut rng, 20, 2);
    let y: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
    let mut m = fit_gbt(&x, &y, &x, &y, &GbtParams { num_boost_round: 0, ..quick() }).unwrap();
    m.trees = vec![RegressionTree {
        nodes: vec![GbtNode::Leaf { weight: 1.7 }],
    }];
    m.best_iteration = Some(0);
    let p = m.predict_proba(&x).unwrap();
    assert!(p.iter().all(|&v| (v - sigmoid(0.05 * 1.7)).abs() < 1e-15));
}

#[test]
fn errors() {
    let x = Matrix::column_vector(&[0.0, 1.0, 2.0]);
    let e = fit_gbt(&x, &[1, 1, 1], &x, &[1, 0, 1], &quick()).unwrap_err();
    assert!(matches!(e, Error::Degenerate(_)));
    let empty = Matrix::zeros(0, 1);
    assert!(fit_gbt(&x, &[0, 1, 1], &empty, &[], &quick()).is_err());
    let m = fit_gbt(&x, &[0, 1, 1], &x, &[0, 1, 1], &quick()).unwrap();
    assert!(m.predict_proba(&Matrix::zeros(1, 2)).is_err());
}

#[test]
fn traversal_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_data(&mut rng, 400, 4);
    let y: Vec<u8> = x.rows().map(|r| (r[0] + r[2] * r[2] > 0.7) as u8).collect();
    let m = fit_gbt(&x, &y, &x, &y, &quick()).unwrap();
    let test = random_data(&mut rng, 100, 4);
    let got = m.predict_proba(&test).unwrap();
    for (i, row) in test.rows().enumerate() {
        let mut margin = 0.0;
        for t in &m.trees[..m.n_trees_used()] {
            let mut k = 0;
            let w = loop {
                match &t.nodes[k] {
                    GbtNode::Split { feature, threshold, left, right, .. } => {
                        k = if row[*feature] <= *threshold { *left } else { *right };
                    }
                    GbtNode::Leaf { weight } => break *weight,
                }
            };
            margin += 0.05 * w;
        }
        let want = 1.0 / (1.0 + (-margin).exp());
        assert!((got[i] - want).abs() < 1e-12);
        assert!(got[i] > 0.0 && got[i] < 1.0);
    }
}

#[test]
fn separable_training_loss_strictly_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_data(&mut rng, 500, 3);
    let y: Vec<u8> = x.rows().map(|r| (r[1] > 0.5) as u8).collect();
    // Past ~160 rounds the hessians fall below min_child_weight and the
    // loss only drifts at the 1e-9 level.
    let m = fit_gbt(&x, &y, &x, &y, &GbtParams { num_boost_round: 150, ..quick() }).unwrap();
    let bad: Vec<_> = m.train_logloss.windows(2).enumerate().filter(|(_, w)| w[1] >= w[0]).map(|(i, w)| (i, w[0], w[1])).collect();
    assert!(bad.is_empty(), "{bad:?}");
    // Noiseless separable validation keeps improving: no early stop before
    // round 50.
    assert!(m.best_iteration.unwrap() >= 50);
    assert_eq!(m.trees.len(), 150);
}

#[test]
fn full_sampling_loss_is_non_increasing_on_noisy_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_data(&mut rng, 600, 4);
    let y: Vec<u8> = x.rows().map(|r| rng.random_bool(0.2 + 0.6 * r[0]) as u8).collect();
    let p = GbtParams {
        subsample: 1.0,
        colsample_bytree: 1.0,
        num_boost_round: 150,
        early_stopping_rounds: 1000,
        ..quick()
    };
    let m = fit_gbt(&x, &y, &x, &y, &p).unwrap();
    assert!(m.train_logloss.windows(2).all(|w| w[1] <= w[0] + 1e-15));
}

#[test]
fn early_stopping_picks_validation_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_data(&mut rng, 400, 5);
    let y: Vec<u8> = x.rows().map(|r| rng.random_bool(0.3 + 0.4 * r[0]) as u8).collect();
    let xv = random_data(&mut rng, 400, 5);
    let yv: Vec<u8> = xv.rows().map(|r| rng.random_bool(0.3 + 0.4 * r[0]) as u8).collect();
    let p = GbtParams {
        eta: 0.3,
        num_boost_round: 1000,
        ..quick()
    };
    let m = fit_gbt(&x, &y, &xv, &yv, &p).unwrap();
    let argmin = m
        .valid_logloss
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .unwrap()
        .0;
    assert_eq!(m.best_iteration, Some(argmin));
    assert_eq!(m.trees.len(), argmin + 51);
}

/// Exact greedy root split by scanning sorted feature values.
fn exhaustive_root(x: &Matrix, g: &[f64], h: &[f64], lambda: f64, mcw: f64) -> (usize, f64, f64) {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
    let mut best = (usize::MAX, f64::NAN, 0.0);
    for f in 0..x.n_cols() {
        let mut idx: Vec<usize> = (0..x.n_rows()).collect();
        idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
        let (mut gl, mut hl) = (0.0, 0.0);
        for w in 0..idx.len() - 1 {
            gl += g[idx[w]];
            hl += h[idx[w]];
            let (v, next) = (x.get(idx[w], f), x.get(idx[w + 1], f));
            if v == next || hl < mcw || ht - hl < mcw {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(gt - gl, ht - hl) - score(gt, ht));
            if gain > best.2 {
                best = (f, v + (next - v) / 2.0, gain);
            }
        }
    }
    best
}

#[test]
fn histogram_split_equals_exhaustive_when_bins_suffice() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..20 {
        // At most 40 distinct values per feature.
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..3).map(|_| rng.random_range(0..40) as f64 * 0.25).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<u8> = x.rows().map(|r| rng.random_bool(if r[0] + r[2] > 9.0 { 0.8 } else { 0.3 }) as u8).collect();
        let params = GbtParams {
            max_depth: 1,
            subsample: 1.0,
            colsample_bytree: 1.0,
            num_boost_round: 1,
            scale_pos_weight: Some(1.0),
            ..quick()
        };
        let m = fit_gbt(&x, &y, &x, &y, &params).unwrap();
        let g: Vec<f64> = y.iter().map(|&v| grad_hess(v, 0.0, 1.0).0).collect();
        let h: Vec<f64> = y.iter().map(|&v| grad_hess(v, 0.0, 1.0).1).collect();
        let (f, thr, gain) = exhaustive_root(&x, &g, &h, 1.0, 1.0);
        match &m.trees[0].nodes[0] {
            GbtNode::Split { feature, threshold, gain: hg, .. } => {
                assert_eq!(*feature, f, "trial {trial}");
                assert_eq!(*threshold, thr, "trial {trial}");
                assert!((hg - gain).abs() < 1e-9 * gain.abs().max(1.0));
            }
            GbtNode::Leaf { .. } => assert!(f == usize::MAX),
        }
    }
}

#[test]
fn balanced_data_scale_weight_is_neutral() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_data(&mut rng, 300, 3);
    let y: Vec<u8> = (0..300).map(|i| (i % 2) as u8).collect();
    let auto = fit_gbt(&x, &y, &x, &y, &quick()).unwrap();
    assert_eq!(auto.scale_pos_weight, 1.0);
    let unweighted = fit_gbt(&x, &y, &x, &y, &GbtParams { scale_pos_weight: Some(1.0), ..quick() }).unwrap();
    assert_eq!(auto.trees, unweighted.trees);
}

#[test]
fn deterministic_under_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random_data(&mut rng, 300, 4);
    let y: Vec<u8> = x.rows().map(|r| (r[3] > 0.4) as u8).collect();
    let a = fit_gbt(&x, &y, &x, &y, &quick()).unwrap();
    let b = fit_gbt(&x, &y, &x, &y, &quick()).unwrap();
    assert_eq!(a, b);
    let c = fit_gbt(&x, &y, &x, &y, &GbtParams { seed: 99, ..quick() }).unwrap();
    assert_ne!(a.trees, c.trees);
}

#[test]
fn one_informative_feature_dominates_importance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random_data(&mut rng, 2000, 5);
    let y: Vec<u8> = x.rows().map(|r| (r[2] > 0.5) as u8).collect();
    let xv = random_data(&mut rng, 500, 5);
    let yv: Vec<u8> = xv.rows().map(|r| (r[2] > 0.5) as u8).collect();
    let m = fit_gbt(&x, &y, &xv, &yv, &GbtParams { num_boost_round: 200, ..quick() }).unwrap();
    let imp = gbt_importance(&m);
    assert!(imp.values[2] > 0.9, "{:?}", imp.values);
    assert!((imp.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn unused_feature_has_zero_importance() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let rows: Vec<[f64; 2]> = (0..300).map(|_| [rng.random(), 3.0]).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y: Vec<u8> = x.rows().map(|r| (r[0] > 0.5) as u8).collect();
    let m = fit_gbt(&x, &y, &x, &y, &quick()).unwrap();
    assert_eq!(m.feature_importance[1], 0.0);
    assert_eq!(m.feature_importance[0], 1.0);
}
