//! Ordinary least squares via Householder QR.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::dataset::{Dataset, ModelSpec};

/// Column-major design matrix with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix<T> {
    names: Vec<String>,
    columns: Vec<Vec<T>>,
    rows: usize,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(names: Vec<String>, columns: Vec<Vec<T>>) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if names.len() != columns.len() || columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Contract("ragged design matrix".to_owned()));
        }
        Ok(DesignMatrix {
            names,
            columns,
            rows,
        })
    }

    /// An intercept column followed by the given predictor columns.
    pub fn with_intercept(predictors: Vec<(String, Vec<T>)>, rows: usize) -> Result<Self> {
        let mut names = vec!["(intercept)".to_owned()];
        let mut columns = vec![vec![T::one(); rows]];
        for (name, col) in predictors {
            names.push(name);
            columns.push(col);
        }
        Self::new(names, columns)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.columns[j]
    }

    pub fn predict(&self, coefficients: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        for (col, &b) in self.columns.iter().zip(coefficients) {
            for (o, &x) in out.iter_mut().zip(col) {
                *o = *o + b * x;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit<T> {
    pub coefficients: Vec<T>,
    pub residuals: Vec<T>,
}

impl<T: Scalar> OlsFit<T> {
    pub fn mse(&self) -> T {
        let n = T::of(self.residuals.len() as f64);
        self.residuals.iter().map(|&r| r * r).sum::<T>() / n
    }
}

/// Least-squares fit of `y` on the columns of `x`.
///
/// A column whose component orthogonal to the preceding columns vanishes
/// (relative to its own norm) makes the design rank deficient; all such
/// columns are named in the error.
pub fn fit_ols<T: Scalar>(x: &DesignMatrix<T>, y: &[T]) -> Result<OlsFit<T>> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::Contract(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if n < p {
        return Err(Error::Contract(format!(
            "{n} rows cannot identify {p} coefficients"
        )));
    }

    let mut a: Vec<Vec<T>> = x.columns.clone();
    let mut qty: Vec<T> = y.to_vec();
    let tol = T::epsilon().sqrt();
    let mut collinear = Vec::new();
    let mut diag = vec![T::zero(); p];

    for j in 0..p {
        let col_norm = norm(&x.columns[j]);
        let norm_below = norm(&a[j][j..]);
        if norm_below <= tol * col_norm || col_norm == T::zero() {
            collinear.push(x.names[j].clone());
            continue;
        }

        // Householder reflector zeroing a[j][j+1..]
        let alpha = if a[j][j] > T::zero() {
            -norm_below
        } else {
            norm_below
        };
        let mut v: Vec<T> = a[j][j..].to_vec();
        v[0] = v[0] - alpha;
        let v_norm_sq: T = v.iter().map(|&e| e * e).sum();
        diag[j] = alpha;
        if v_norm_sq == T::zero() {
            continue;
        }
        let two = T::of(2.0);
        let reflect = |target: &mut [T]| {
            let dot: T = v.iter().zip(target.iter()).map(|(&vi, &ti)| vi * ti).sum();
            let scale = two * dot / v_norm_sq;
            for (t, &vi) in target.iter_mut().zip(&v) {
                *t = *t - scale * vi;
            }
        };
        for col in a.iter_mut().skip(j + 1) {
            reflect(&mut col[j..]);
        }
        reflect(&mut qty[j..]);
        a[j][j] = alpha;
    }

    if !collinear.is_empty() {
        return Err(Error::SingularDesign { columns: collinear });
    }

    // back substitution on R (upper triangle stored column-wise in `a`)
    let mut beta = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut acc = qty[i];
        for k in i + 1..p {
            acc = acc - a[k][i] * beta[k];
        }
        beta[i] = acc / diag[i];
    }

    let fitted = x.predict(&beta);
    let residuals = y.iter().zip(&fitted).map(|(&yi, &fi)| yi - fi).collect();
    Ok(OlsFit {
        coefficients: beta,
        residuals,
    })
}

fn norm<T: Scalar>(v: &[T]) -> T {
    // scaled to avoid overflow on large raw predictors
    let scale = v.iter().fold(T::zero(), |m, &e| m.max(e.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let ss: T = v.iter().map(|&e| (e / scale) * (e / scale)).sum();
    scale * ss.sqrt()
}

/// A fitted linear model that can predict rows of a [`Dataset`].
///
/// With standardization on, predictors are z-scored using the training
/// rows' mean and (population) standard deviation; `coefficients` are then
/// on the standardized scale and [`LinearModel::raw_coefficients`] maps
/// them back to the original units.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel<T> {
    pub names: Vec<String>,
    pub coefficients: Vec<T>,
    columns: Vec<usize>,
    means: Vec<T>,
    scales: Vec<T>,
}

impl<T: Scalar> LinearModel<T> {
    /// Fit `spec` on the given rows of `data` (all rows when `rows` is
    /// `None`).
    pub fn fit(data: &Dataset<T>, spec: &ModelSpec, rows: Option<&[usize]>) -> Result<Self> {
        let columns = data.resolve(spec)?;
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..data.len()).collect();
                &all
            }
        };
        let n = rows.len();
        if n < spec.width() {
            return Err(Error::Contract(format!(
                "{n} rows cannot fit {} coefficients",
                spec.width()
            )));
        }
        let nf = T::of(n as f64);

        let mut means = Vec::with_capacity(columns.len());
        let mut scales = Vec::with_capacity(columns.len());
        let mut predictors = Vec::with_capacity(columns.len());
        let mut constant = Vec::new();
        for (&c, name) in columns.iter().zip(&spec.predictors) {
            let src = data.column_at(c);
            let values: Vec<T> = rows.iter().map(|&i| src[i]).collect();
            let (mean, scale) = if spec.standardize {
                let mean = values.iter().copied().sum::<T>() / nf;
                let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
                let sd = var.sqrt();
                if sd <= T::epsilon() * mean.abs().max(T::one()) {
                    constant.push(name.clone());
                }
                (mean, sd)
            } else {
                (T::zero(), T::one())
            };
            let z = values.into_iter().map(|v| (v - mean) / scale).collect();
            means.push(mean);
            scales.push(scale);
            predictors.push((name.clone(), z));
        }
        if !constant.is_empty() {
            return Err(Error::SingularDesign { columns: constant });
        }

        let design = DesignMatrix::with_intercept(predictors, n)?;
        let y: Vec<T> = rows.iter().map(|&i| data.response()[i]).collect();
        let fit = fit_ols(&design, &y)?;
        Ok(LinearModel {
            names: design.names().to_vec(),
            coefficients: fit.coefficients,
            columns,
            means,
            scales,
        })
    }

    pub fn predict_row(&self, data: &Dataset<T>, row: usize) -> T {
        let mut acc = self.coefficients[0];
        for (j, &c) in self.columns.iter().enumerate() {
            let z = (data.column_at(c)[row] - self.means[j]) / self.scales[j];
            acc = acc + self.coefficients[j + 1] * z;
        }
        acc
    }

    /// Coefficients in the predictors' original units, intercept first.
    pub fn raw_coefficients(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.coefficients.len());
        let mut intercept = self.coefficients[0];
        let mut slopes = Vec::with_capacity(self.columns.len());
        for j in 0..self.columns.len() {
            let slope = self.coefficients[j + 1] / self.scales[j];
            intercept = intercept - slope * self.means[j];
            slopes.push(slope);
        }
        out.push(intercept);
        out.extend(slopes);
        out
    }

    /// Raw-unit coefficient of a named predictor.
    pub fn raw_coefficient(&self, name: &str) -> Option<T> {
        let idx = self.names.iter().position(|n| n == name)?;
        Some(self.raw_coefficients()[idx])
    }

    /// Mean squared error over the given rows.
    pub fn mse(&self, data: &Dataset<T>, rows: &[usize]) -> T {
        let sum: T = rows
            .iter()
            .map(|&i| {
                let e = data.response()[i] - self.predict_row(data, i);
                e * e
            })
            .sum();
        sum / T::of(rows.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simple(x: &[f64]) -> DesignMatrix<f64> {
        DesignMatrix::with_intercept(vec![("x".into(), x.to_vec())], x.len()).unwrap()
    }

    #[test]
    fn exact_line() {
        let fit = fit_ols(&simple(&[0.0, 1.0, 2.0]), &[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 1.0, epsilon = 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn hand_solved_normal_equations() {
        // X'X = [[3,3],[3,5]], X'y = [2,3] => slope 1/2, intercept 1/6
        let fit = fit_ols(&simple(&[0.0, 1.0, 2.0]), &[0.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x = vec![0.0, 1.0, 2.0, 5.0];
        let design = DesignMatrix::with_intercept(
            vec![("a".into(), x.clone()), ("b".into(), x)],
            4,
        )
        .unwrap();
        match fit_ols(&design, &[1.0, 2.0, 3.0, 4.0]) {
            Err(Error::SingularDesign { columns }) => assert_eq!(columns, vec!["b".to_owned()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn works_in_f32() {
        let design = DesignMatrix::<f32>::with_intercept(vec![("x".into(), vec![0.0, 1.0, 2.0])], 3)
            .unwrap();
        let fit = fit_ols(&design, &[1.0f32, 2.0, 3.0]).unwrap();
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn standardized_fit_matches_raw_predictions() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64) * 3.0 + 100.0).collect();
        let z: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
        let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| 0.5 * a - 2.0 * b + 1.0).collect();
        let data = Dataset::new(vec!["x".into(), "z".into()], vec![x, z], y).unwrap();
        let spec = ModelSpec::new(&["x", "z"]);
        let std = LinearModel::fit(&data, &spec, None).unwrap();
        let raw = LinearModel::fit(&data, &spec.clone().with_standardize(false), None).unwrap();
        for i in 0..20 {
            assert_abs_diff_eq!(std.predict_row(&data, i), raw.predict_row(&data, i), epsilon = 1e-9);
        }
        let back = std.raw_coefficients();
        for (a, b) in back.iter().zip(&raw.coefficients) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(std.raw_coefficient("z").unwrap(), -2.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_predictor_is_singular() {
        let data = Dataset::new(
            vec!["c".into()],
            vec![vec![0.0; 10]],
            (0..10).map(f64::from).collect(),
        )
        .unwrap();
        for standardize in [true, false] {
            let spec = ModelSpec::new(&["c"]).with_standardize(standardize);
            assert!(matches!(
                LinearModel::fit(&data, &spec, None),
                Err(Error::SingularDesign { .. })
            ));
        }
    }
}
