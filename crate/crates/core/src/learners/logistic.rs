//! Logistic and multinomial-softmax classifiers, fit by full-batch
//! gradient descent with backtracking line search (max 500 iterations,
//! gradient-norm tolerance 1e-8).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{Fitted, Prediction, TargetKind};
use crate::error::{Error, Result};

const MAX_ITER: usize = 500;
const GRAD_TOL: f64 = 1e-8;
const MAX_BACKTRACKS: usize = 60;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let scale = Array1::from_shape_fn(x.ncols(), |j| {
            let var =
                x.column(j).iter().map(|v| (v - mean[j]) * (v - mean[j])).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        });
        Self { mean, scale }
    }

    /// Standardized design with a leading intercept column.
    fn design(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut d = Array2::ones((x.nrows(), x.ncols() + 1));
        for j in 0..x.ncols() {
            let (m, s) = (self.mean[j], self.scale[j]);
            for i in 0..x.nrows() {
                d[[i, j + 1]] = (x[[i, j]] - m) / s;
            }
        }
        d
    }
}

pub struct LogisticModel {
    std: Standardizer,
    /// Weights on [intercept, standardized features].
    weights: Array1<f64>,
    train_loss: f64,
}

impl LogisticModel {
    fn probabilities(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() + 1 != self.weights.len() {
            return Err(Error::Learner(format!(
                "prediction matrix has {} columns, model expects {}",
                x.ncols(),
                self.weights.len() - 1
            )));
        }
        let d = self.std.design(x);
        Ok(d.dot(&self.weights).mapv(sigmoid))
    }
}

impl Fitted for LogisticModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction> {
        Ok(Prediction::BinaryProb(self.probabilities(x)?))
    }

    fn target_kind(&self) -> TargetKind {
        TargetKind::BinaryProb
    }

    fn train_loss(&self) -> f64 {
        self.train_loss
    }
}

fn binary_nll(d: &Array2<f64>, y: ArrayView1<f64>, w: &Array1<f64>) -> f64 {
    let z = d.dot(w);
    let n = y.len() as f64;
    z.iter()
        .zip(y.iter())
        .map(|(&zi, &yi)| {
            // log(1 + e^z) - y z, computed stably
            let softplus = if zi > 0.0 { zi + (-zi).exp().ln_1p() } else { zi.exp().ln_1p() };
            softplus - yi * zi
        })
        .sum::<f64>()
        / n
}

pub fn fit_logistic(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Box<dyn Fitted>> {
    let std = Standardizer::fit(x);
    let d = std.design(x);
    let n = x.nrows() as f64;
    let mut w = Array1::zeros(d.ncols());
    let mut loss = binary_nll(&d, y, &w);
    // warm-started backtracking: try twice the last accepted step first
    let mut step: f64 = 1.0;
    for _ in 0..MAX_ITER {
        let p = d.dot(&w).mapv(sigmoid);
        let grad = d.t().dot(&(&p - &y)) / n;
        let gnorm2 = grad.dot(&grad);
        if gnorm2.sqrt() < GRAD_TOL {
            break;
        }
        step = (step * 2.0).min(1.0);
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand = &w - &(step * &grad);
            let cand_loss = binary_nll(&d, y, &cand);
            if cand_loss <= loss - 1e-4 * step * gnorm2 {
                w = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(Box::new(LogisticModel { std, weights: w, train_loss: loss }))
}

pub struct MultinomialModel {
    std: Standardizer,
    /// (p+1) x C weights on [intercept, standardized features].
    weights: Array2<f64>,
    train_loss: f64,
}

impl MultinomialModel {
    fn probabilities(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() + 1 != self.weights.nrows() {
            return Err(Error::Learner(format!(
                "prediction matrix has {} columns, model expects {}",
                x.ncols(),
                self.weights.nrows() - 1
            )));
        }
        let d = self.std.design(x);
        let mut scores = d.dot(&self.weights);
        for mut row in scores.rows_mut() {
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        Ok(scores)
    }
}

impl Fitted for MultinomialModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction> {
        Ok(Prediction::MulticlassProb(self.probabilities(x)?))
    }

    fn target_kind(&self) -> TargetKind {
        TargetKind::MulticlassProb(self.weights.ncols())
    }

    fn train_loss(&self) -> f64 {
        self.train_loss
    }
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

fn multinomial_nll(d: &Array2<f64>, labels: &[usize], w: &Array2<f64>) -> f64 {
    let mut probs = d.dot(w);
    softmax_rows(&mut probs);
    let n = labels.len() as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -(probs[[i, l]].max(1e-300)).ln())
        .sum::<f64>()
        / n
}

pub fn fit_multinomial(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
) -> Result<Box<dyn Fitted>> {
    let std = Standardizer::fit(x);
    let d = std.design(x);
    let n = x.nrows() as f64;
    let mut w = Array2::zeros((d.ncols(), n_classes));
    let mut loss = multinomial_nll(&d, labels, &w);
    // warm-started backtracking: try twice the last accepted step first
    let mut step: f64 = 1.0;
    for _ in 0..MAX_ITER {
        let mut probs = d.dot(&w);
        softmax_rows(&mut probs);
        for (i, &l) in labels.iter().enumerate() {
            probs[[i, l]] -= 1.0;
        }
        let grad = d.t().dot(&probs) / n;
        let gnorm2 = grad.iter().map(|g| g * g).sum::<f64>();
        if gnorm2.sqrt() < GRAD_TOL {
            break;
        }
        step = (step * 2.0).min(1.0);
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand = &w - &(step * &grad);
            let cand_loss = multinomial_nll(&d, labels, &cand);
            if cand_loss <= loss - 1e-4 * step * gnorm2 {
                w = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(Box::new(MultinomialModel { std, weights: w, train_loss: loss }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn logistic_separates_simple_data() {
        let x = array![[-2.0], [-1.5], [-1.0], [1.0], [1.5], [2.0]];
        let y = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let model = fit_logistic(x.view(), y.view()).unwrap();
        let p = model.predict(x.view()).unwrap().into_vector().unwrap();
        for (pi, yi) in p.iter().zip(y.iter()) {
            assert_eq!((*pi > 0.5) as i32 as f64, *yi);
        }
    }

    #[test]
    fn multinomial_on_separable_three_classes() {
        // three separated clusters; training accuracy must reach 1.0
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for k in 0..3usize {
            let cx = [0.0, 5.0, -5.0][k];
            let cy = [0.0, 5.0, 5.0][k];
            for j in 0..8 {
                rows.push([cx + 0.1 * j as f64, cy - 0.1 * j as f64]);
                labels.push(k);
            }
        }
        let x = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        let model = fit_multinomial(x.view(), &labels, 3).unwrap();
        let probs = model.predict(x.view()).unwrap().into_matrix().unwrap();
        let mut correct = 0;
        for (i, &l) in labels.iter().enumerate() {
            let row = probs.row(i);
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-9, "row sum {}", sum);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if argmax == l {
                correct += 1;
            }
        }
        assert_eq!(correct, labels.len());
    }

    #[test]
    fn deterministic_refit() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0], [2.0, 1.0], [1.0, 2.0]];
        let y = array![0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let m1 = fit_logistic(x.view(), y.view()).unwrap();
        let m2 = fit_logistic(x.view(), y.view()).unwrap();
        let p1 = m1.predict(x.view()).unwrap().into_vector().unwrap();
        let p2 = m2.predict(x.view()).unwrap().into_vector().unwrap();
        assert_eq!(p1, p2);
    }
}
