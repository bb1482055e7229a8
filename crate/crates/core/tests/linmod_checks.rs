//! Linear model: closed-form ridge, finite-difference gradients, AUC.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use suquan::linmod::{
    auc, fit_linear, loss_value_grad, objective_value_grad, DenseDesign, LossKind, LossSpec,
};
use suquan::suquan::f_step_objective_grad;
use suquan::Dataset;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<f64> {
    (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    y
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|j| {
            let orig = x[j];
            x[j] = orig + h;
            let up = f(&x);
            x[j] = orig - h;
            let down = f(&x);
            x[j] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn assert_close(analytic: &[f64], numeric: &[f64], tol: f64) {
    let scale = numeric.iter().map(|v| v.abs()).fold(1e-3, f64::max);
    for (a, n) in analytic.iter().zip(numeric) {
        assert!((a - n).abs() / scale <= tol, "analytic {a} vs numeric {n}");
    }
}

#[test]
fn ridge_matches_closed_form() {
    let (n, p, lambda) = (30, 4, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_matrix(&mut rng, n, p);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let spec = LossSpec::new(LossKind::Squared, y.clone()).unwrap();
    let fit = fit_linear(&DenseDesign::new(&x, p).unwrap(), &spec, lambda).unwrap();

    let z = DMatrix::from_row_slice(n, p, &x);
    let zbar = z.row_mean();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut zc = z.clone();
    for mut row in zc.row_iter_mut() {
        row -= &zbar;
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let a = zc.transpose() * &zc / n as f64 + DMatrix::identity(p, p) * lambda;
    let w = a.lu().solve(&(zc.transpose() * yc / n as f64)).unwrap();
    let b = ybar - (zbar * &w)[0];

    for j in 0..p {
        assert!((fit.model.w[j] - w[j]).abs() < 1e-6, "w[{j}] {} vs {}", fit.model.w[j], w[j]);
    }
    assert!((fit.model.b - b).abs() < 1e-6);
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in [LossKind::Logistic, LossKind::Squared] {
        for _ in 0..50 {
            let n = 6;
            let spec = LossSpec::new(kind, random_labels(&mut rng, n)).unwrap();
            let m: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (_, g) = loss_value_grad(&spec, &m).unwrap();
            // per-sample derivatives of the mean loss are g_i / n
            let num = central_difference(|u| loss_value_grad(&spec, u).unwrap().0 * n as f64, &m, 1e-6);
            assert_close(&g, &num, 1e-6);
        }
    }
}

#[test]
fn w_step_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in [LossKind::Logistic, LossKind::Squared] {
        for _ in 0..50 {
            let (n, p) = (8, 5);
            let x = random_matrix(&mut rng, n, p);
            let design = DenseDesign::new(&x, p).unwrap();
            let spec = LossSpec::new(kind, random_labels(&mut rng, n)).unwrap();
            let lambda = rng.random_range(0.0..1.0);
            let mut wb: Vec<f64> = (0..=p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, gw, gb) = objective_value_grad(&design, &spec, lambda, &wb[..p], wb[p]).unwrap();
            let num = central_difference(
                |v| objective_value_grad(&design, &spec, lambda, &v[..p], v[p]).unwrap().0,
                &wb,
                1e-6,
            );
            wb.clear();
            wb.extend(gw);
            wb.push(gb);
            assert_close(&wb, &num, 1e-5);
        }
    }
}

#[test]
fn f_step_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for kind in [LossKind::Logistic, LossKind::Squared] {
        for _ in 0..50 {
            let (n, p) = (8, 6);
            let labels = random_labels(&mut rng, n);
            let data = Dataset::new("d", p, random_matrix(&mut rng, n, p), labels.clone()).unwrap();
            let spec = LossSpec::new(kind, labels).unwrap();
            let w: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = rng.random_range(-0.5..0.5);
            let f: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = f_step_objective_grad(data.sorted(), &spec, &w, b, &f).unwrap();
            let num = central_difference(
                |v| f_step_objective_grad(data.sorted(), &spec, &w, b, v).unwrap().0,
                &f,
                1e-6,
            );
            assert_close(&g, &num, 1e-5);
        }
    }
}

proptest! {
    #[test]
    fn auc_invariant_to_increasing_transforms(
        scores in prop::collection::vec(-5.0f64..5.0, 4..40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = random_labels(&mut rng, scores.len());
        let base = auc(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| s.powi(3) + 2.0 * s).collect();
        prop_assert_eq!(auc(&warped, &labels).unwrap(), base);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc(&flipped, &labels).unwrap() - (1.0 - base)).abs() < 1e-12);
    }
}
