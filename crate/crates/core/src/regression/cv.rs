//! Repeated k-fold cross-validation and fold-wise coefficient tests.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{rng_for, STREAM_CV, STREAM_FOLD_COEFFICIENTS};

use super::dataset::{Dataset, ModelSpec};
use super::ols::LinearModel;
use super::permutation::{permutation_test_errors, sign_flip_pvalue};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub repeats: usize,
    pub n_perm: usize,
    pub seed: u64,
    /// Assign whole documents to folds instead of individual rows.
    pub group_by_document: bool,
}

impl CvConfig {
    pub fn new(seed: u64) -> Self {
        CvConfig {
            k: 10,
            repeats: 50,
            n_perm: 10_000,
            seed,
            group_by_document: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be >= 2, got {}", self.k)));
        }
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be >= 1".to_owned()));
        }
        Ok(())
    }
}

/// Assign each row to one of `k` folds using a shuffle drawn from `rng`.
fn assign_folds<T: Scalar>(
    data: &Dataset<T>,
    k: usize,
    group_by_document: bool,
    rng: &mut impl rand::Rng,
) -> Vec<usize> {
    let n = data.len();
    match data.groups().filter(|_| group_by_document) {
        Some(groups) => {
            let n_groups = groups.iter().max().map_or(0, |&g| g + 1);
            let mut order: Vec<usize> = (0..n_groups).collect();
            order.shuffle(rng);
            let mut fold_of_group = vec![0; n_groups];
            for (pos, &g) in order.iter().enumerate() {
                fold_of_group[g] = pos % k;
            }
            groups.iter().map(|&g| fold_of_group[g]).collect()
        }
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let mut fold = vec![0; n];
            for (pos, &row) in order.iter().enumerate() {
                fold[row] = pos % k;
            }
            fold
        }
    }
}

fn split(folds: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..folds.len()).partition(|&i| folds[i] == f);
            (train, test)
        })
        .collect()
}

/// Per-item held-out squared errors for each spec, averaged over repeats.
///
/// All specs share the same fold assignments, so their error vectors are
/// index-aligned and paired.
pub fn cross_validated_errors<T: Scalar>(
    data: &Dataset<T>,
    specs: &[&ModelSpec],
    cfg: &CvConfig,
) -> Result<Vec<Vec<T>>> {
    cfg.validate()?;
    let width = specs.iter().map(|s| s.width()).max().unwrap_or(1);
    if data.len() < 10 * width {
        return Err(Error::Contract(format!(
            "cross-validation needs at least {} rows for {} columns, got {}",
            10 * width,
            width,
            data.len()
        )));
    }
    if data.len() < cfg.k {
        return Err(Error::Contract(format!(
            "{} rows cannot form {} folds",
            data.len(),
            cfg.k
        )));
    }

    let per_repeat: Vec<Vec<Vec<T>>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(cfg.seed, &[STREAM_CV, r as u64]);
            let folds = assign_folds(data, cfg.k, cfg.group_by_document, &mut rng);
            let mut errors = vec![vec![T::zero(); data.len()]; specs.len()];
            for (train, test) in split(&folds, cfg.k) {
                if test.is_empty() {
                    continue;
                }
                for (s, spec) in specs.iter().enumerate() {
                    let model = LinearModel::fit(data, spec, Some(&train))?;
                    for &i in &test {
                        let e = data.response()[i] - model.predict_row(data, i);
                        errors[s][i] = e * e;
                    }
                }
            }
            Ok(errors)
        })
        .collect::<Result<_>>()?;

    let reps = T::of(cfg.repeats as f64);
    let mut mean = vec![vec![T::zero(); data.len()]; specs.len()];
    for errors in &per_repeat {
        for (m, e) in mean.iter_mut().zip(errors) {
            for (mi, &ei) in m.iter_mut().zip(e) {
                *mi = *mi + ei;
            }
        }
    }
    for m in &mut mean {
        for v in m.iter_mut() {
            *v = *v / reps;
        }
    }
    Ok(mean)
}

pub fn mean<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / T::of(values.len() as f64)
}

/// Outcome of comparing two nested models.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult<T> {
    pub base: ModelSpec,
    pub full: ModelSpec,
    pub base_errors: Vec<T>,
    pub full_errors: Vec<T>,
    /// mean(base errors) - mean(full errors)
    pub delta_mse: T,
    pub p_value: f64,
    /// Names matching each vector in `fold_coefficients` (intercept first).
    pub coefficient_names: Vec<String>,
    /// Raw-unit coefficients of the full model fitted on each fold.
    pub fold_coefficients: Vec<Vec<T>>,
    pub seed: u64,
}

/// ΔMSE of `full` over `base` by repeated k-fold cross-validation, with a
/// paired sign-flip permutation test and fold-wise coefficients.
pub fn cross_validate<T: Scalar>(
    data: &Dataset<T>,
    base: &ModelSpec,
    full: &ModelSpec,
    cfg: &CvConfig,
) -> Result<EvalResult<T>> {
    if !full.contains_all(base) {
        return Err(Error::Contract(
            "the full model's predictors must include the base model's".to_owned(),
        ));
    }
    let mut errors = cross_validated_errors(data, &[base, full], cfg)?;
    let full_errors = errors.pop().unwrap();
    let base_errors = errors.pop().unwrap();
    let delta_mse = mean(&base_errors) - mean(&full_errors);
    let p_value = permutation_test_errors(&base_errors, &full_errors, cfg.n_perm, cfg.seed);
    let fits = fold_fits(data, full, cfg.k, cfg.seed)?;
    Ok(EvalResult {
        base: base.clone(),
        full: full.clone(),
        base_errors,
        full_errors,
        delta_mse,
        p_value,
        coefficient_names: fits.names,
        fold_coefficients: fits.coefficients,
        seed: cfg.seed,
    })
}

/// Raw-unit coefficients from fitting a spec separately on each fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldFits<T> {
    pub names: Vec<String>,
    pub coefficients: Vec<Vec<T>>,
}

impl<T: Scalar> FoldFits<T> {
    pub fn of(&self, predictor: &str) -> Option<Vec<T>> {
        let idx = self.names.iter().position(|n| n == predictor)?;
        Some(self.coefficients.iter().map(|c| c[idx]).collect())
    }
}

/// Split the rows into `k` random folds and fit `spec` on each fold alone.
pub fn fold_fits<T: Scalar>(
    data: &Dataset<T>,
    spec: &ModelSpec,
    k: usize,
    seed: u64,
) -> Result<FoldFits<T>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    let mut rng = rng_for(seed, &[STREAM_FOLD_COEFFICIENTS]);
    let folds = assign_folds(data, k, false, &mut rng);
    let models: Vec<LinearModel<T>> = split(&folds, k)
        .into_par_iter()
        .map(|(_, rows)| LinearModel::fit(data, spec, Some(&rows)))
        .collect::<Result<_>>()?;
    Ok(FoldFits {
        names: models[0].names.clone(),
        coefficients: models.iter().map(LinearModel::raw_coefficients).collect(),
    })
}

/// Direction of a significant coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Slowdown,
    Speedup,
    Neither,
}

impl Side {
    pub fn label(self) -> i8 {
        match self {
            Side::Slowdown => 1,
            Side::Speedup => -1,
            Side::Neither => 0,
        }
    }
}

/// Sign-flip tests on a distribution of fold coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientTest {
    pub predictor: String,
    pub coefficients: Vec<f64>,
    pub mean: f64,
    /// p for mean > 0
    pub p_above: f64,
    /// p for mean < 0
    pub p_below: f64,
    pub side: Side,
    /// p of the reported side, or the smaller one-sided p when neither.
    pub p_value: f64,
}

impl CoefficientTest {
    /// Test `mean(coefficients) ≷ 0`. `alpha` is the overall level shared by
    /// the two one-sided tests, each run at `alpha / 2`.
    pub fn from_coefficients(
        predictor: &str,
        coefficients: Vec<f64>,
        alpha: f64,
        n_perm: usize,
        seed: u64,
    ) -> Self {
        let p_above = sign_flip_pvalue(&coefficients, n_perm, seed);
        let negated: Vec<f64> = coefficients.iter().map(|c| -c).collect();
        let p_below = sign_flip_pvalue(&negated, n_perm, seed);
        let side = if p_above < alpha / 2.0 {
            Side::Slowdown
        } else if p_below < alpha / 2.0 {
            Side::Speedup
        } else {
            Side::Neither
        };
        let p_value = match side {
            Side::Slowdown => p_above,
            Side::Speedup => p_below,
            Side::Neither => p_above.min(p_below),
        };
        CoefficientTest {
            predictor: predictor.to_owned(),
            mean: coefficients.iter().sum::<f64>() / coefficients.len() as f64,
            coefficients,
            p_above,
            p_below,
            side,
            p_value,
        }
    }
}

/// Fit `spec` on each of `k` folds and test whether the mean coefficient of
/// `target` is above or below zero (exhaustive for k <= 20).
pub fn fold_coefficient_test<T: Scalar>(
    data: &Dataset<T>,
    spec: &ModelSpec,
    target: &str,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<CoefficientTest> {
    if !spec.predictors.iter().any(|p| p == target) {
        return Err(Error::Config(format!(
            "target predictor '{target}' is not in the model"
        )));
    }
    let fits = fold_fits(data, spec, k, seed)?;
    let coefs = fits
        .of(target)
        .unwrap()
        .into_iter()
        .map(Scalar::to_f64_lossy)
        .collect();
    Ok(CoefficientTest::from_coefficients(
        target, coefs, alpha, 10_000, seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn synthetic(n: usize, beta: f64, noise: f64, seed: u64) -> Dataset<f64> {
        let mut rng = rng_for(seed, &[99]);
        let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let m: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y = (0..n)
            .map(|i| 300.0 + 4.0 * c[i] + beta * m[i] + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::new(vec!["c".into(), "m".into()], vec![c, m], y).unwrap()
    }

    fn quick(seed: u64) -> CvConfig {
        CvConfig {
            k: 10,
            repeats: 3,
            n_perm: 999,
            seed,
            group_by_document: false,
        }
    }

    #[test]
    fn identical_models_have_zero_delta() {
        let data = synthetic(500, 2.0, 1.0, 1);
        let spec = ModelSpec::new(&["c"]);
        let r = cross_validate(&data, &spec, &spec, &quick(5)).unwrap();
        assert_eq!(r.delta_mse, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.base_errors, r.full_errors);
    }

    #[test]
    fn real_predictor_reduces_error() {
        let data = synthetic(2000, 2.0, 1.0, 2);
        let r = cross_validate(
            &data,
            &ModelSpec::new(&["c"]),
            &ModelSpec::new(&["c", "m"]),
            &quick(6),
        )
        .unwrap();
        assert!(r.delta_mse > 0.0);
        assert!(r.p_value < 0.01);
        assert_eq!(r.fold_coefficients.len(), 10);
        assert_eq!(r.coefficient_names, vec!["(intercept)", "c", "m"]);
    }

    #[test]
    fn same_seed_same_result() {
        let data = synthetic(400, 1.0, 1.0, 3);
        let base = ModelSpec::new(&["c"]);
        let full = ModelSpec::new(&["c", "m"]);
        let a = cross_validate(&data, &base, &full, &quick(11)).unwrap();
        let b = cross_validate(&data, &base, &full, &quick(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_rows_is_contract_violation() {
        let data = synthetic(20, 1.0, 1.0, 4);
        let r = cross_validate(
            &data,
            &ModelSpec::new(&["c"]),
            &ModelSpec::new(&["c", "m"]),
            &quick(1),
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn non_nested_full_is_rejected() {
        let data = synthetic(500, 1.0, 1.0, 4);
        let r = cross_validate(&data, &ModelSpec::new(&["c"]), &ModelSpec::new(&["m"]), &quick(1));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn grouped_folds_keep_groups_together() {
        let data = synthetic(300, 1.0, 1.0, 8)
            .with_groups((0..300).map(|i| i / 30).collect())
            .unwrap();
        let mut rng = rng_for(1, &[1]);
        let folds = assign_folds(&data, 5, true, &mut rng);
        for g in 0..10 {
            let f = folds[g * 30];
            assert!(folds[g * 30..(g + 1) * 30].iter().all(|&x| x == f));
        }
    }

    #[test]
    fn all_positive_fold_coefficients() {
        let t = CoefficientTest::from_coefficients("m", vec![1.0; 10], 0.05, 0, 0);
        assert_eq!(t.p_above, 1.0 / 1024.0);
        assert_eq!(t.side, Side::Slowdown);
    }

    #[test]
    fn alternating_coefficients_are_neither() {
        let coefs = (0..10).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 }).collect();
        let t = CoefficientTest::from_coefficients("m", coefs, 0.05, 0, 0);
        assert_eq!(t.side, Side::Neither);
    }

    #[test]
    fn injected_effect_is_slowdown() {
        let data = synthetic(3000, 3.0, 5.0, 12);
        let t = fold_coefficient_test(&data, &ModelSpec::new(&["c", "m"]), "m", 10, 0.05, 4).unwrap();
        assert_eq!(t.side, Side::Slowdown);
        assert!((t.mean - 3.0).abs() < 0.5);
    }
}
