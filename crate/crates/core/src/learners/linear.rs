//! Linear regression learners: OLS, ridge, and lasso (coordinate
//! descent with a KKT certificate).
//!
//! Features are standardized internally for the penalized fits; the
//! intercept is never penalized. When no penalty is supplied, ridge and
//! lasso pick one by a fixed 5-fold cross-validation (assignment
//! `i mod 5` over the training rows) on a 20-point log-spaced grid.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{Fitted, Prediction, TargetKind};
use crate::error::{Error, Result};
use crate::linalg;

const CV_FOLDS: usize = 5;
const CV_GRID: usize = 20;

#[derive(Debug, Clone)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Array1<f64>,
    train_mse: f64,
    /// Max KKT violation at convergence (lasso only).
    pub kkt_violation: f64,
    /// Penalty actually used (after CV when applicable).
    pub lambda_used: Option<f64>,
}

impl LinearModel {
    fn predict_values(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.coefficients.len() {
            return Err(Error::Learner(format!(
                "prediction matrix has {} columns, model expects {}",
                x.ncols(),
                self.coefficients.len()
            )));
        }
        Ok(x.dot(&self.coefficients) + self.intercept)
    }
}

impl Fitted for LinearModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction> {
        Ok(Prediction::Regression(self.predict_values(x)?))
    }

    fn target_kind(&self) -> TargetKind {
        TargetKind::Regression
    }

    fn train_loss(&self) -> f64 {
        self.train_mse
    }
}

fn mse(pred: &Array1<f64>, y: ArrayView1<f64>) -> f64 {
    pred.iter().zip(y.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

pub fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Box<dyn Fitted>> {
    let n = x.nrows();
    let p = x.ncols();
    let mut design = Array2::ones((n, p + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(&x);
    // pseudo-inverse of the normal equations tolerates zero-variance columns
    let beta = linalg::lstsq_normal_pinv(design.view(), y, 1e-12)?;
    let model = LinearModel {
        intercept: beta[0],
        coefficients: beta.slice(ndarray::s![1..]).to_owned(),
        train_mse: 0.0,
        kkt_violation: 0.0,
        lambda_used: None,
    };
    let train_mse = mse(&model.predict_values(x)?, y);
    Ok(Box::new(LinearModel { train_mse, ..model }))
}

/// Column means and population standard deviations; zero-variance
/// columns get scale 1 so their standardized values are identically 0.
struct Scaler {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Scaler {
    fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(ndarray::Axis(0)).expect("nonempty");
        let mut scale = Array1::zeros(x.ncols());
        for j in 0..x.ncols() {
            let var =
                x.column(j).iter().map(|v| (v - mean[j]) * (v - mean[j])).sum::<f64>() / n;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for j in 0..out.ncols() {
            let (m, s) = (self.mean[j], self.scale[j]);
            out.column_mut(j).mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

fn ridge_path_solution(
    xs: &Array2<f64>,
    yc: &Array1<f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    let p = xs.ncols();
    let mut gram = xs.t().dot(xs);
    for j in 0..p {
        gram[[j, j]] += lambda;
    }
    let rhs = xs.t().dot(yc);
    let inv = linalg::sym_inv_strict(gram.view(), 1e-14)?;
    Ok(inv.dot(&rhs))
}

fn destandardize(
    scaler: &Scaler,
    beta_std: &Array1<f64>,
    y_mean: f64,
) -> (f64, Array1<f64>) {
    let coefficients = Array1::from_shape_fn(beta_std.len(), |j| beta_std[j] / scaler.scale[j]);
    let intercept = y_mean - coefficients.dot(&scaler.mean);
    (intercept, coefficients)
}

/// 20-point geometric grid from `hi` down to `hi * 1e-3`.
fn log_grid(hi: f64) -> Vec<f64> {
    let lo = hi * 1e-3;
    let ratio = (lo / hi).powf(1.0 / (CV_GRID as f64 - 1.0));
    (0..CV_GRID).map(|k| hi * ratio.powi(k as i32)).collect()
}

/// Fixed in-training-fold CV assignment: row `i` belongs to fold `i % 5`.
fn cv_select<FitFn>(x: ArrayView2<f64>, y: ArrayView1<f64>, grid: &[f64], fit_at: FitFn) -> f64
where
    FitFn: Fn(ArrayView2<f64>, ArrayView1<f64>, f64) -> Option<(f64, Array1<f64>)>,
{
    let n = x.nrows();
    let folds = CV_FOLDS.min(n);
    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in grid {
        let mut total_se = 0.0;
        let mut total_m = 0usize;
        let mut ok = true;
        for fold in 0..folds {
            let train: Vec<usize> = (0..n).filter(|i| i % folds != fold).collect();
            let val: Vec<usize> = (0..n).filter(|i| i % folds == fold).collect();
            if train.len() < 2 || val.is_empty() {
                continue;
            }
            let xt = x.select(ndarray::Axis(0), &train);
            let yt = y.select(ndarray::Axis(0), &train);
            match fit_at(xt.view(), yt.view(), lambda) {
                Some((intercept, coefs)) => {
                    for &i in &val {
                        let pred = intercept + x.row(i).dot(&coefs);
                        total_se += (pred - y[i]) * (pred - y[i]);
                        total_m += 1;
                    }
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || total_m == 0 {
            continue;
        }
        let err = total_se / total_m as f64;
        // ties prefer the larger (earlier) penalty
        if err < best.0 {
            best = (err, lambda);
        }
    }
    best.1
}

pub fn fit_ridge(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambda: Option<f64>,
) -> Result<Box<dyn Fitted>> {
    let fit_at = |xv: ArrayView2<f64>, yv: ArrayView1<f64>, lam: f64| {
        let scaler = Scaler::fit(xv);
        let xs = scaler.transform(xv);
        let y_mean = yv.mean().unwrap_or(0.0);
        let yc = &yv.to_owned() - y_mean;
        ridge_path_solution(&xs, &yc, lam)
            .ok()
            .map(|b| destandardize(&scaler, &b, y_mean))
    };
    let lambda = match lambda {
        Some(l) => l,
        None => {
            // grid anchored at the scale of the standardized Gram diagonal
            let grid = log_grid(x.nrows() as f64 * 10.0);
            cv_select(x, y, &grid, fit_at)
        }
    };
    let (intercept, coefficients) = fit_at(x, y, lambda)
        .ok_or_else(|| Error::Singular("ridge system singular".into()))?;
    let model = LinearModel {
        intercept,
        coefficients,
        train_mse: 0.0,
        kkt_violation: 0.0,
        lambda_used: Some(lambda),
    };
    let train_mse = mse(&model.predict_values(x)?, y);
    Ok(Box::new(LinearModel { train_mse, ..model }))
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Coordinate descent on standardized features; objective
/// `1/(2n) ||y - b0 - X b||^2 + lambda ||b||_1`.
fn lasso_coordinate_descent(
    xs: &Array2<f64>,
    yc: &Array1<f64>,
    lambda: f64,
) -> (Array1<f64>, f64) {
    let n = xs.nrows();
    let p = xs.ncols();
    let nf = n as f64;
    // per-column second moments; zero for degenerate columns
    let col_sq: Vec<f64> = (0..p).map(|j| xs.column(j).dot(&xs.column(j)) / nf).collect();
    let mut beta = Array1::zeros(p);
    let mut resid = yc.clone();
    let tol = 1e-10;
    let max_iter = 10_000;
    for _ in 0..max_iter {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = xs.column(j);
            let rho = xj.dot(&resid) / nf + col_sq[j] * beta[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                ndarray::Zip::from(&mut resid).and(&xj).for_each(|r, &v| *r -= delta * v);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < tol {
            break;
        }
    }
    // KKT certificate: |x_j' r / n| <= lambda off-support, = lambda on it
    let mut kkt = 0.0f64;
    for j in 0..p {
        if col_sq[j] == 0.0 {
            continue;
        }
        let grad = xs.column(j).dot(&resid) / nf;
        let viol = if beta[j] == 0.0 {
            (grad.abs() - lambda).max(0.0)
        } else {
            (grad - lambda * beta[j].signum()).abs()
        };
        kkt = kkt.max(viol);
    }
    (beta, kkt)
}

pub fn fit_lasso(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambda: Option<f64>,
) -> Result<Box<dyn Fitted>> {
    Ok(Box::new(fit_lasso_model(x, y, lambda)?))
}

/// Concrete lasso fit exposing the KKT certificate and selected penalty.
pub fn fit_lasso_model(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambda: Option<f64>,
) -> Result<LinearModel> {
    let scaler = Scaler::fit(x);
    let xs = scaler.transform(x);
    let y_mean = y.mean().unwrap_or(0.0);
    let yc = &y.to_owned() - y_mean;

    let lambda = match lambda {
        Some(l) => l,
        None => {
            let nf = x.nrows() as f64;
            let lambda_max = (0..xs.ncols())
                .map(|j| (xs.column(j).dot(&yc) / nf).abs())
                .fold(0.0f64, f64::max)
                .max(1e-12);
            let grid = log_grid(lambda_max);
            let fit_at = |xv: ArrayView2<f64>, yv: ArrayView1<f64>, lam: f64| {
                let sc = Scaler::fit(xv);
                let xvs = sc.transform(xv);
                let ym = yv.mean().unwrap_or(0.0);
                let yvc = &yv.to_owned() - ym;
                let (b, _) = lasso_coordinate_descent(&xvs, &yvc, lam);
                Some(destandardize(&sc, &b, ym))
            };
            cv_select(x, y, &grid, fit_at)
        }
    };

    let (beta_std, kkt) = lasso_coordinate_descent(&xs, &yc, lambda);
    let (intercept, coefficients) = destandardize(&scaler, &beta_std, y_mean);
    let model = LinearModel {
        intercept,
        coefficients,
        train_mse: 0.0,
        kkt_violation: kkt,
        lambda_used: Some(lambda),
    };
    let train_mse = mse(&model.predict_values(x)?, y);
    Ok(LinearModel { train_mse, ..model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ols_recovers_exact_line() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![2.0, 4.0, 6.0];
        let model = fit_ols(x.view(), y.view()).unwrap();
        let pred = model.predict(array![[4.0]].view()).unwrap().into_vector().unwrap();
        assert!((pred[0] - 8.0).abs() < 1e-9);
        assert!(model.train_loss() < 1e-18);
    }

    #[test]
    fn ols_tolerates_constant_feature() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]];
        let y = array![1.0, 2.0, 3.0, 4.0];
        let model = fit_ols(x.view(), y.view()).unwrap();
        let pred = model.predict(x.view()).unwrap().into_vector().unwrap();
        for (p, t) in pred.iter().zip(y.iter()) {
            assert!((p - t).abs() < 1e-8);
        }
    }

    #[test]
    fn lasso_full_shrinkage_yields_mean_model() {
        let x = array![[0.3, 1.0], [1.2, -0.4], [-0.7, 0.2], [0.5, 0.9], [2.0, -1.5]];
        let y = array![1.0, 2.0, 0.5, 1.5, 3.0];
        let model = fit_lasso(x.view(), y.view(), Some(1e6)).unwrap();
        let pred = model
            .predict(array![[10.0, -3.0]].view())
            .unwrap()
            .into_vector()
            .unwrap();
        let mean = y.mean().unwrap();
        assert!((pred[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn lasso_kkt_holds_at_convergence() {
        // deterministic pseudo-random design
        let n = 60;
        let p = 5;
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let x = Array2::from_shape_fn((n, p), |_| next());
        let y = Array1::from_shape_fn(n, |i| {
            2.0 * x[[i, 0]] - 1.0 * x[[i, 2]] + 0.1 * next()
        });
        let model = fit_lasso_model(x.view(), y.view(), Some(0.05)).unwrap();
        assert!(model.kkt_violation < 1e-8, "KKT violation {}", model.kkt_violation);
        assert_eq!(model.lambda_used, Some(0.05));
    }

    #[test]
    fn ridge_shrinks_towards_zero() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![2.0, 4.0, 6.0, 8.0];
        let small = fit_ridge(x.view(), y.view(), Some(1e-8)).unwrap();
        let large = fit_ridge(x.view(), y.view(), Some(1e8)).unwrap();
        let ps = small.predict(array![[5.0]].view()).unwrap().into_vector().unwrap();
        let pl = large.predict(array![[5.0]].view()).unwrap().into_vector().unwrap();
        assert!((ps[0] - 10.0).abs() < 1e-4);
        // fully shrunk slope leaves only the mean
        assert!((pl[0] - 5.0).abs() < 1e-3);
    }

    #[test]
    fn cv_lambda_fits_signal() {
        let n = 100;
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let x = Array2::from_shape_fn((n, 4), |_| next());
        let y = Array1::from_shape_fn(n, |i| 3.0 * x[[i, 0]] + 0.05 * next());
        let model = fit_lasso(x.view(), y.view(), None).unwrap();
        assert!(model.train_loss() < 0.05, "cv lasso underfits: {}", model.train_loss());
    }
}
