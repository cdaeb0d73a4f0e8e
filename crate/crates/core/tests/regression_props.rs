mod common;

use approx::assert_relative_eq;
use common::normal_equations;
use memcost_core::regression::{
    fit_ols, sign_flip_pvalue, Dataset, DesignMatrix, LinearModel, ModelSpec,
};
use memcost_core::seed::rng_for;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Row-major predictors (well conditioned) and a response.
fn random_problem(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = rng_for(seed, &[1]);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|j| (j + 1) as f64 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| 3.0 + r.iter().sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    (x, y)
}

fn design(x: &[Vec<f64>], cols: usize) -> DesignMatrix<f64> {
    let predictors = (0..cols)
        .map(|j| (format!("x{j}"), x.iter().map(|r| r[j]).collect()))
        .collect();
    DesignMatrix::with_intercept(predictors, x.len()).unwrap()
}

fn dataset(x: &[Vec<f64>], y: &[f64]) -> Dataset<f64> {
    let p = x[0].len();
    Dataset::new(
        (0..p).map(|j| format!("x{j}")).collect(),
        (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect(),
        y.to_vec(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn qr_matches_normal_equations(seed in any::<u64>(), n in 10usize..80, p in 1usize..6) {
        let (x, y) = random_problem(seed, n, p);
        let fit = fit_ols(&design(&x, p), &y).unwrap();
        let oracle = normal_equations(&x, &y);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_columns(seed in any::<u64>(), n in 10usize..80, p in 1usize..6) {
        let (x, y) = random_problem(seed, n, p);
        let d = design(&x, p);
        let fit = fit_ols(&d, &y).unwrap();
        let rnorm = fit.residuals.iter().map(|r| r * r).sum::<f64>().sqrt();
        for j in 0..d.cols() {
            let col = d.column(j);
            let cnorm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = col.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
            prop_assert!(dot.abs() <= 1e-8 * cnorm * rnorm);
        }
    }

    #[test]
    fn adding_a_predictor_never_raises_in_sample_error(seed in any::<u64>(), n in 10usize..80, p in 2usize..6) {
        let (x, y) = random_problem(seed, n, p);
        let small = fit_ols(&design(&x, p - 1), &y).unwrap().mse();
        let large = fit_ols(&design(&x, p), &y).unwrap().mse();
        prop_assert!(large <= small * (1.0 + 1e-12));
    }

    #[test]
    fn standardization_leaves_predictions_and_raw_coefficients_unchanged(
        seed in any::<u64>(),
        n in 10usize..80,
        p in 1usize..5,
        scale in 1e-3f64..1e3,
        shift in -1e3f64..1e3,
    ) {
        let (mut x, y) = random_problem(seed, n, p);
        for r in &mut x {
            r[0] = r[0] * scale + shift;
        }
        let data = dataset(&x, &y);
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let raw = LinearModel::fit(&data, &ModelSpec::new(&names).with_standardize(false), None).unwrap();
        let std = LinearModel::fit(&data, &ModelSpec::new(&names).with_standardize(true), None).unwrap();
        for i in 0..n {
            let (a, b) = (raw.predict_row(&data, i), std.predict_row(&data, i));
            prop_assert!((a - b).abs() <= 1e-7 * (1.0 + a.abs()));
        }
        for (a, b) in raw.raw_coefficients().iter().zip(std.raw_coefficients()) {
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn sign_flip_p_is_in_range(values in proptest::collection::vec(-10.0f64..10.0, 1..60), seed in any::<u64>()) {
        let n_perm = 199;
        let p = sign_flip_pvalue(&values, n_perm, seed);
        let floor = if values.len() <= 20 { 0.5f64.powi(values.len() as i32) } else { 1.0 / (n_perm + 1) as f64 };
        prop_assert!(p >= floor - 1e-15 && p <= 1.0);
        prop_assert_eq!(p, sign_flip_pvalue(&values, n_perm, seed));
    }
}

#[test]
fn exhaustive_p_counts_assignments() {
    // All-positive values: only the identity assignment reaches the observed sum.
    assert_relative_eq!(sign_flip_pvalue(&[1.0, 2.0, 3.0, 4.0], 10, 0), 1.0 / 16.0);
    // {1, 1}: sums 2, 0, 0, -2.
    assert_relative_eq!(sign_flip_pvalue(&[1.0, 1.0], 10, 0), 0.25);
    assert_relative_eq!(sign_flip_pvalue(&[-1.0, -1.0], 10, 0), 1.0);
}

#[test]
fn monte_carlo_floor_with_many_items() {
    let values = vec![1.0; 40];
    assert_relative_eq!(sign_flip_pvalue(&values, 999, 3), 1.0 / 1000.0);
}
