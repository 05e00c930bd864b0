//! Closed-form ridge regression and linear-model prediction.
//!
//! Base learners are fit by solving the normal equations with a dense
//! Cholesky factorization. The intercept is unpenalized: features and
//! targets are centered (optionally with sample weights), the centered
//! system is solved, and the intercept absorbs the means.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Jitter added to the normal-equation diagonal when the factorization
/// fails (rank-deficient X at lambda = 0).
const JITTER_FLOOR: f64 = 1e-10;

/// A dense linear map: `scores = X · weightsᵀ + bias`.
///
/// Used both for the J×d initial classifier and for each single-output
/// (1×ns) base learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// outputs × inputs
    pub weights: Array2<f64>,
    /// one entry per output
    pub bias: Array1<f64>,
}

impl LinearModel {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::DimMismatch(format!(
                "weight rows {} vs bias length {}",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) || bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite entry in linear model".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.weights.ncols()
    }
}

/// Row-wise scores `X · Wᵀ + b`.
pub fn predict_linear(model: &LinearModel, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if features.ncols() != model.n_inputs() {
        return Err(Error::DimMismatch(format!(
            "predict_linear: {} feature columns vs model inputs {}",
            features.ncols(),
            model.n_inputs()
        )));
    }
    let mut scores = features.dot(&model.weights.t());
    scores += &model.bias;
    Ok(scores)
}

/// Fit `min_β,b Σ (x_i·β + b - y_i)² + λ‖β‖²` and return a 1-output model.
pub fn fit_ridge(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, lambda: f64) -> Result<LinearModel> {
    fit_ridge_weighted(x, y, None, lambda)
}

/// Weighted variant: `min Σ w_i (x_i·β + b - y_i)² + λ‖β‖²`.
///
/// Zero-weight rows drop out of the fit. `weights = None` means all ones.
pub fn fit_ridge_weighted(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    weights: Option<ArrayView1<'_, f64>>,
    lambda: f64,
) -> Result<LinearModel> {
    let n = x.nrows();
    let m = x.ncols();
    if n == 0 {
        return Err(Error::Invalid("ridge fit needs at least one sample".into()));
    }
    if y.len() != n {
        return Err(Error::DimMismatch(format!(
            "ridge fit: {n} rows vs {} targets",
            y.len()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::Config("ridge lambda must be >= 0".into()));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::DimMismatch(format!(
                "ridge fit: {n} rows vs {} weights",
                w.len()
            )));
        }
        if w.iter().any(|&wi| !wi.is_finite() || wi < 0.0) {
            return Err(Error::Invalid("ridge weights must be finite and >= 0".into()));
        }
        if w.sum() <= 0.0 {
            return Err(Error::Invalid("ridge fit: total sample weight is zero".into()));
        }
    }

    // Weighted means; the intercept stays unpenalized by centering.
    let total: f64 = weights.map_or(n as f64, |w| w.sum());
    let mut x_mean = Array1::<f64>::zeros(m);
    let mut y_mean = 0.0;
    for i in 0..n {
        let wi = weights.map_or(1.0, |w| w[i]);
        if wi == 0.0 {
            continue;
        }
        y_mean += wi * y[i];
        for j in 0..m {
            x_mean[j] += wi * x[[i, j]];
        }
    }
    x_mean /= total;
    y_mean /= total;

    // Accumulate XᵀWX and XᵀWy over centered data.
    let mut gram = Array2::<f64>::zeros((m, m));
    let mut rhs = Array1::<f64>::zeros(m);
    let mut xc_row = Array1::<f64>::zeros(m);
    for i in 0..n {
        let wi = weights.map_or(1.0, |w| w[i]);
        if wi == 0.0 {
            continue;
        }
        for j in 0..m {
            xc_row[j] = x[[i, j]] - x_mean[j];
        }
        let yc = y[i] - y_mean;
        for j in 0..m {
            let s = wi * xc_row[j];
            rhs[j] += s * yc;
            for k in j..m {
                gram[[j, k]] += s * xc_row[k];
            }
        }
    }
    // Mirror the upper triangle.
    for j in 0..m {
        for k in (j + 1)..m {
            gram[[k, j]] = gram[[j, k]];
        }
        gram[[j, j]] += lambda;
    }

    let beta = solve_spd_with_jitter(gram, rhs)?;
    let intercept = y_mean - x_mean.dot(&beta);
    let weights_out = beta.insert_axis(Axis(0));
    LinearModel::new(weights_out, Array1::from_elem(1, intercept))
}

/// Fit one learner per class on the rows selected (with multiplicity) by
/// that class's batch, against that class's pseudo-label column.
pub fn fit_block_learners(
    mapped: ArrayView2<'_, f64>,
    responses: ArrayView2<'_, f64>,
    batches: &[Vec<usize>],
    lambda: f64,
) -> Result<Vec<LinearModel>> {
    if responses.nrows() != mapped.nrows() || responses.ncols() != batches.len() {
        return Err(Error::DimMismatch(format!(
            "fit_block_learners: mapped {}x{}, responses {}x{}, {} batches",
            mapped.nrows(),
            mapped.ncols(),
            responses.nrows(),
            responses.ncols(),
            batches.len()
        )));
    }
    let mut learners = Vec::with_capacity(batches.len());
    for (class, batch) in batches.iter().enumerate() {
        if batch.is_empty() {
            return Err(Error::Invalid(format!("empty batch for class {class}")));
        }
        let mut rows = Array2::<f64>::zeros((batch.len(), mapped.ncols()));
        let mut targets = Array1::<f64>::zeros(batch.len());
        for (out, &idx) in batch.iter().enumerate() {
            rows.row_mut(out).assign(&mapped.row(idx));
            targets[out] = responses[[idx, class]];
        }
        learners.push(fit_ridge(rows.view(), targets.view(), lambda)?);
    }
    Ok(learners)
}

/// One-vs-rest multiclass ridge on ±1-coded targets; returns a J×d model.
pub fn fit_one_vs_rest(
    features: ArrayView2<'_, f64>,
    classes: &[usize],
    n_classes: usize,
    lambda: f64,
) -> Result<LinearModel> {
    let n = features.nrows();
    if n == 0 || classes.len() != n {
        return Err(Error::Invalid(format!(
            "one-vs-rest fit: {n} rows vs {} labels",
            classes.len()
        )));
    }
    let mut weights = Array2::<f64>::zeros((n_classes, features.ncols()));
    let mut bias = Array1::<f64>::zeros(n_classes);
    let mut targets = Array1::<f64>::zeros(n);
    for class in 0..n_classes {
        for (i, &c) in classes.iter().enumerate() {
            targets[i] = if c == class { 1.0 } else { -1.0 };
        }
        let learner = fit_ridge(features, targets.view(), lambda)?;
        weights.row_mut(class).assign(&learner.weights.row(0));
        bias[class] = learner.bias[0];
    }
    LinearModel::new(weights, bias)
}

/// Solve `A x = b` for symmetric positive-definite `A` by Cholesky.
/// On factorization failure the diagonal is jittered, starting at 1e-10.
fn solve_spd_with_jitter(mut a: Array2<f64>, b: Array1<f64>) -> Result<Array1<f64>> {
    let m = a.nrows();
    let mut jitter = 0.0;
    for attempt in 0..6 {
        match cholesky_solve(&a, &b) {
            Some(x) => {
                if jitter > 0.0 {
                    log::warn!("ridge normal equations needed diagonal jitter {jitter:.1e}");
                }
                return Ok(x);
            }
            None => {
                let step = JITTER_FLOOR * 10f64.powi(2 * attempt);
                for j in 0..m {
                    a[[j, j]] += step;
                }
                jitter += step;
            }
        }
    }
    Err(Error::Invalid(
        "ridge normal equations are not positive definite even with jitter".into(),
    ))
}

/// Dense Cholesky factor-and-solve. Returns None if a pivot is not
/// strictly positive.
fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let m = a.nrows();
    let mut l = Array2::<f64>::zeros((m, m));
    for j in 0..m {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..m {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    // Forward then back substitution.
    let mut y = Array1::<f64>::zeros(m);
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(m);
    for i in (0..m).rev() {
        let mut s = y[i];
        for k in (i + 1)..m {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn line_through_origin() {
        let x = array![[1.0], [2.0]];
        let y = array![1.0, 2.0];
        let m = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        assert!((m.weights[[0, 0]] - 1.0).abs() < 1e-12);
        assert!(m.bias[0].abs() < 1e-12);
    }

    #[test]
    fn shrinkage_closed_form() {
        let x = array![[-0.5], [0.5]];
        let y = array![-0.5, 0.5];
        let m = fit_ridge(x.view(), y.view(), 1.0).unwrap();
        assert!((m.weights[[0, 0]] - 1.0 / 3.0).abs() < 1e-12);
        assert!(m.bias[0].abs() < 1e-12);
    }

    #[test]
    fn constant_targets_go_to_intercept() {
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let y = array![7.0, 7.0, 7.0];
        for lambda in [0.0, 0.01, 10.0] {
            let m = fit_ridge(x.view(), y.view(), lambda).unwrap();
            assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
            assert!((m.bias[0] - 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_repeated_row_fits_constant() {
        let mut x = Array2::<f64>::zeros((8, 3));
        for mut r in x.rows_mut() {
            r.assign(&array![1.0, -2.0, 0.5]);
        }
        let y = Array1::from_elem(8, 3.25);
        let m = fit_ridge(x.view(), y.view(), 0.5).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.bias[0] - 3.25).abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_at_zero_lambda_still_solves() {
        // Two identical columns.
        let x = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let y = array![1.0, 2.0, 3.0];
        let m = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        let pred = predict_linear(&m, x.view()).unwrap();
        for i in 0..3 {
            assert!((pred[[i, 0]] - y[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn predict_shapes_and_errors() {
        let m = LinearModel::new(array![[1.0, 0.0]], array![0.5]).unwrap();
        let scores = predict_linear(&m, array![[2.0, 9.0]].view()).unwrap();
        assert!((scores[[0, 0]] - 2.5).abs() < 1e-15);
        assert!(predict_linear(&m, array![[1.0]].view()).is_err());
    }

    #[test]
    fn interpolation_on_full_rank_square_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let x = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        // n x n random X is full rank with an intercept column appended.
        let m = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        let pred = predict_linear(&m, x.view()).unwrap();
        for i in 0..n {
            assert!((pred[[i, 0]] - y[i]).abs() < 1e-8, "row {i}");
        }
    }

    #[test]
    fn stationarity_residual_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = rng.random_range(3..40);
            let m = rng.random_range(1..10);
            let lambda = [0.0, 0.01, 1.0][trial % 3];
            let x = Array2::from_shape_fn((n, m), |_| rng.sample::<f64, _>(StandardNormal));
            let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
            let fit = fit_ridge(x.view(), y.view(), lambda).unwrap();
            let beta = fit.weights.row(0).to_owned();
            let resid = x.dot(&beta) + fit.bias[0] - &y;
            let grad = x.t().dot(&resid) + lambda * &beta;
            let y_max = y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let bound = 1e-6 * (1.0 + y_max);
            assert!(
                grad.iter().all(|g| g.abs() <= bound),
                "stationarity violated, trial {trial}"
            );
            // Unpenalized intercept: residuals sum to zero.
            assert!(resid.sum().abs() <= bound);
        }
    }

    #[test]
    fn monotone_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = Array2::from_shape_fn((30, 5), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(30, |_| rng.sample::<f64, _>(StandardNormal));
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.1, 1.0, 10.0, 100.0] {
            let m = fit_ridge(x.view(), y.view(), lambda).unwrap();
            let norm = m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!(norm <= last + 1e-12, "norm grew at lambda {lambda}");
            last = norm;
        }
    }

    #[test]
    fn block_learners_identical_batches_identical_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mapped = Array2::from_shape_fn((10, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let mut responses = Array2::<f64>::zeros((10, 2));
        for i in 0..10 {
            let v: f64 = rng.sample(StandardNormal);
            responses[[i, 0]] = v;
            responses[[i, 1]] = v;
        }
        let batch = vec![0, 1, 2, 5, 5, 9];
        let learners =
            fit_block_learners(mapped.view(), responses.view(), &[batch.clone(), batch], 0.01)
                .unwrap();
        assert_eq!(learners[0], learners[1]);
    }

    #[test]
    fn block_learner_single_repeated_index() {
        let mapped = array![[1.0, 2.0], [5.0, -1.0]];
        let responses = array![[0.7, 0.0], [0.1, 0.0]];
        let batch0 = vec![1; 6];
        let batch1 = vec![0, 1];
        let learners =
            fit_block_learners(mapped.view(), responses.view(), &[batch0, batch1], 0.5).unwrap();
        assert!(learners[0].weights.iter().all(|w| w.abs() < 1e-9));
        assert!((learners[0].bias[0] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn weighted_fit_ignores_zero_weight_rows() {
        let x = array![[1.0], [2.0], [100.0]];
        let y = array![1.0, 2.0, -50.0];
        let w = array![1.0, 1.0, 0.0];
        let m = fit_ridge_weighted(x.view(), y.view(), Some(w.view()), 0.0).unwrap();
        assert!((m.weights[[0, 0]] - 1.0).abs() < 1e-9);
        assert!(m.bias[0].abs() < 1e-9);
    }

    #[test]
    fn one_vs_rest_separable_is_perfect() {
        let x = array![[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]];
        let classes = [0usize, 0, 1, 1];
        let m = fit_one_vs_rest(x.view(), &classes, 2, 1e-6).unwrap();
        let scores = predict_linear(&m, x.view()).unwrap();
        for (i, &c) in classes.iter().enumerate() {
            let row: Vec<f64> = scores.row(i).to_vec();
            assert_eq!(crate::logitboost::argmax(&row), c);
        }
    }

    #[test]
    fn determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = Array2::from_shape_fn((25, 6), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(25, |_| rng.sample::<f64, _>(StandardNormal));
        let a = fit_ridge(x.view(), y.view(), 0.01).unwrap();
        let b = fit_ridge(x.view(), y.view(), 0.01).unwrap();
        assert_eq!(a, b);
    }
}
