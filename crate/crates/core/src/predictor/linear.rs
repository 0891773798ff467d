//! Linear and logistic models over the flattened padded prefix vector.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Apply a sigmoid to the linear score.
    pub logistic: bool,
}

impl LinearModel {
    pub fn score(&self, chi: &[f64]) -> f64 {
        debug_assert_eq!(chi.len(), self.weights.len());
        self.bias
            + self
                .weights
                .iter()
                .zip(chi)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    pub fn predict(&self, chi: &[f64]) -> f64 {
        let s = self.score(chi);
        if self.logistic {
            sigmoid(s)
        } else {
            s
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn design(rows: &[&[f64]]) -> DMatrix<f64> {
    let d = rows[0].len();
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

/// Solves the symmetric system with a pseudo-inverse, which yields the
/// minimum-norm solution when columns are collinear (one-hot groups,
/// always-zero padding columns).
fn pinv_solve(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = (max_sv * 1e-11).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).expect("svd computed with u and v")
}

/// Least squares with an optional ridge penalty on the weights (never the
/// bias). Columns and targets are centred before solving.
pub fn fit_least_squares(rows: &[&[f64]], targets: &[f64], l2: f64) -> LinearModel {
    assert!(!rows.is_empty());
    let n = rows.len() as f64;
    let mut x = design(rows);
    let d = x.ncols();
    let means: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n).collect();
    for (j, mean) in means.iter().enumerate() {
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let y_mean = targets.iter().sum::<f64>() / n;
    let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| t - y_mean));

    let mut gram = x.tr_mul(&x);
    for j in 0..d {
        gram[(j, j)] += l2;
    }
    let rhs = x.tr_mul(&y);
    let w = pinv_solve(gram, &rhs);
    let bias = y_mean - w.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
    LinearModel {
        weights: w.iter().copied().collect(),
        bias,
        logistic: false,
    }
}

/// Penalised logistic regression fitted by Newton-Raphson with step
/// halving. Labels are 0/1.
pub fn fit_logistic(rows: &[&[f64]], labels: &[f64], l2: f64, max_iter: usize) -> LinearModel {
    assert!(!rows.is_empty());
    let n = rows.len();
    let d = rows[0].len();
    // bias is the last column
    let x = DMatrix::from_fn(n, d + 1, |i, j| if j == d { 1.0 } else { rows[i][j] });
    let y = DVector::from_column_slice(labels);
    let mut beta = DVector::<f64>::zeros(d + 1);

    let objective = |beta: &DVector<f64>| {
        let z = &x * beta;
        let mut ll = 0.0;
        for i in 0..n {
            // log(1 + e^z) computed stably
            let zi = z[i];
            let softplus = if zi > 0.0 {
                zi + (-zi).exp().ln_1p()
            } else {
                zi.exp().ln_1p()
            };
            ll += softplus - y[i] * zi;
        }
        ll + 0.5 * l2 * beta.rows(0, d).norm_squared()
    };

    let mut current = objective(&beta);
    let mut converged = false;
    for _ in 0..max_iter {
        let z = &x * &beta;
        let p = z.map(sigmoid);
        let mut grad = x.tr_mul(&(&p - &y));
        for j in 0..d {
            grad[j] += l2 * beta[j];
        }
        let s = p.map(|pi| (pi * (1.0 - pi)).max(1e-12));
        let mut xs = x.clone();
        for (i, mut row) in xs.row_iter_mut().enumerate() {
            row *= s[i].sqrt();
        }
        let mut hess = xs.tr_mul(&xs);
        for j in 0..d {
            hess[(j, j)] += l2;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => pinv_solve(hess, &grad),
        };
        let mut t = 1.0;
        let mut improved = None;
        for _ in 0..40 {
            let cand = &beta - &step * t;
            let obj = objective(&cand);
            if obj <= current {
                improved = Some((cand, obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, obj)) = improved else {
            converged = true;
            break;
        };
        let gain = current - obj;
        beta = cand;
        current = obj;
        if step.amax() * t < 1e-10 || gain < 1e-14 * (1.0 + current.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("logistic regression stopped after {max_iter} iterations without converging");
    }
    LinearModel {
        weights: beta.rows(0, d).iter().copied().collect(),
        bias: beta[d],
        logistic: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_exact_coefficients() {
        let data: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![0.0, (i % 7) as f64 * 0.3, i as f64 / 4.0])
            .collect();
        let rows: Vec<&[f64]> = data.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = data.iter().map(|r| 2.0 * r[1] + 3.0 * r[2] - 1.0).collect();
        let m = fit_least_squares(&rows, &y, 0.0);
        assert!((m.weights[1] - 2.0).abs() < 1e-9);
        assert!((m.weights[2] - 3.0).abs() < 1e-9);
        assert_eq!(m.weights[0], 0.0);
        assert!((m.bias + 1.0).abs() < 1e-9);
    }

    #[test]
    fn collinear_one_hot_split_evenly() {
        // two complementary one-hot columns: min-norm gives opposite weights
        let data: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                if i % 2 == 0 {
                    vec![1.0, 0.0]
                } else {
                    vec![0.0, 1.0]
                }
            })
            .collect();
        let rows: Vec<&[f64]> = data.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = data.iter().map(|r| 10.0 * r[0]).collect();
        let m = fit_least_squares(&rows, &y, 0.0);
        assert!((m.weights[0] - 5.0).abs() < 1e-9);
        assert!((m.weights[1] + 5.0).abs() < 1e-9);
        for (r, t) in rows.iter().zip(&y) {
            assert!((m.predict(r) - t).abs() < 1e-9);
        }
    }

    #[test]
    fn logistic_orders_classes() {
        let data: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0]).collect();
        let rows: Vec<&[f64]> = data.iter().map(|r| r.as_slice()).collect();
        // overlapping classes so the unpenalised optimum is finite
        let y: Vec<f64> = (0..40)
            .map(|i| if (i * 7) % 40 < i { 1.0 } else { 0.0 })
            .collect();
        let m = fit_logistic(&rows, &y, 1e-3, 100);
        assert!(m.weights[0] > 0.0);
        let p = m.predict(&[0.9]);
        assert!(p > 0.5 && p < 1.0);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
