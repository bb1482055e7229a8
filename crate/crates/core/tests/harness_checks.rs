//! Simulation and cross-validation harness.

use suquan::harness::{
    cross_validate, derive_seed, simulate, stratified_folds, CvPlan, Fitted, Learner, Method,
    QuantileChoice, SimulationSpec,
};
use suquan::linmod::{LinearModel, LossKind};
use suquan::quantiles::{make_distribution_quantile, QuantileFamily};
use suquan::{Dataset, Result};

fn spec(n_train: usize, seed: u64) -> SimulationSpec {
    SimulationSpec {
        p: 50,
        n_train,
        n_test: 40,
        corruption: Some(QuantileFamily::Exponential),
        seed,
    }
}

#[test]
fn simulate_is_deterministic() {
    let a = simulate(&spec(100, 7)).unwrap();
    let b = simulate(&spec(100, 7)).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
    assert_eq!(a.truth, b.truth);
    let c = simulate(&spec(100, 8)).unwrap();
    assert_ne!(a.train.features(), c.train.features());
}

#[test]
fn label_frequency_matches_logistic_model() {
    let sim = simulate(&SimulationSpec {
        p: 30,
        n_train: 10_000,
        n_test: 1,
        corruption: None,
        seed: 3,
    })
    .unwrap();
    let n = sim.train.n() as f64;
    let mut expected = 0.0;
    let mut variance = 0.0;
    for row in sim.train.rows() {
        let margin: f64 = row.iter().zip(&sim.truth.w_true).map(|(x, w)| x * w).sum();
        let prob = 1.0 / (1.0 + (-margin).exp());
        expected += prob;
        variance += prob * (1.0 - prob);
    }
    let observed = sim.train.labels().iter().filter(|y| **y > 0.0).count() as f64;
    let se = variance.sqrt();
    assert!(
        (observed - expected).abs() <= 3.0 * se,
        "positives {observed}, expected {expected} +- {se} (n = {n})"
    );
}

fn small_plan(lambdas: Vec<f64>) -> CvPlan {
    CvPlan {
        repeats: 5,
        folds: 3,
        lambda_grid: lambdas,
        gamma_grid: vec![1.0],
        seed: 4,
    }
}

#[test]
fn single_point_grid_returns_that_point() {
    let sim = simulate(&spec(60, 1)).unwrap();
    let learner = Method::Logistic { quantile: QuantileChoice::Median };
    let res = cross_validate(&sim.train, &learner, &small_plan(vec![0.5])).unwrap();
    assert_eq!(res.lambda, 0.5);
    assert_eq!(res.gamma, 0.0);
    assert!(res.mean_auc.is_finite());
}

/// Ignores its hyperparameters entirely.
struct Constant;

impl Learner for Constant {
    fn name(&self) -> String {
        "constant".into()
    }

    fn fit(&self, train: &Dataset, lambda: f64, _gamma: f64) -> Result<Fitted> {
        let p = train.p();
        let mut model = LinearModel::zeros(p, LossKind::Logistic, lambda);
        model.w[p - 1] = 1.0;
        Ok(Fitted {
            quantile: make_distribution_quantile(QuantileFamily::Gaussian, p)?,
            model,
            diagnostics: None,
        })
    }
}

#[test]
fn ties_go_to_the_largest_lambda() {
    let sim = simulate(&spec(60, 2)).unwrap();
    let res = cross_validate(&sim.train, &Constant, &small_plan(vec![0.01, 10.0, 1.0])).unwrap();
    assert_eq!(res.lambda, 10.0);
}

#[test]
fn every_fold_is_scored_at_every_grid_point() {
    let sim = simulate(&spec(60, 5)).unwrap();
    let grid = vec![0.1, 1.0];
    let res = cross_validate(&sim.train, &Constant, &small_plan(grid.clone())).unwrap();
    for l in grid {
        let records: Vec<_> = res.table.iter().filter(|r| r.lambda == l).collect();
        assert_eq!(records.len(), 15);
        let mut cells: Vec<(usize, usize)> = records.iter().map(|r| (r.repeat, r.fold)).collect();
        cells.sort_unstable();
        cells.dedup();
        assert_eq!(cells.len(), 15);
    }
}

#[test]
fn spav_grid_covers_gamma() {
    let sim = simulate(&spec(60, 6)).unwrap();
    let learner = Method::SuquanSpav { f_init: QuantileChoice::Median, rounds: 1 };
    let plan = CvPlan {
        repeats: 1,
        folds: 3,
        lambda_grid: vec![0.1, 1.0],
        gamma_grid: vec![1.0, 100.0],
        seed: 0,
    };
    let res = cross_validate(&sim.train, &learner, &plan).unwrap();
    assert_eq!(res.table.len(), 3 * 2 * 2);
    assert!(plan.gamma_grid.contains(&res.gamma));
}

#[test]
fn folds_are_stratified() {
    let labels: Vec<f64> = (0..47).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
    for seed in 0..10 {
        let folds = stratified_folds(&labels, 3, derive_seed(9, &[seed])).unwrap();
        for class in [1.0, -1.0] {
            let counts: Vec<usize> = (0..3)
                .map(|k| (0..labels.len()).filter(|&i| folds[i] == k && labels[i] == class).count())
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
    }
    assert!(stratified_folds(&[1.0, -1.0, -1.0, -1.0], 3, 0).is_err());
}
