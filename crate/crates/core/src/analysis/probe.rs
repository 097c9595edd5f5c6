//! Linear models fit on frozen features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ShapeClass;

/// `y = W x + b`, with `weights` stored one row per output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }
}

/// Solves `A X = B` for symmetric positive definite `A` by Cholesky.
fn cholesky_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NonFinite("normal equations are not positive definite".into()));
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let cols = b.first().map_or(0, Vec::len);
    let mut x = vec![vec![0.0; cols]; n];
    for c in 0..cols {
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = (b[i][c] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
        }
        for i in (0..n).rev() {
            x[i][c] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k][c]).sum::<f64>()) / l[i][i];
        }
    }
    Ok(x)
}

/// Ridge regression with an unpenalised intercept.
pub fn fit_least_squares(x: &[Vec<f64>], y: &[Vec<f64>], ridge: f64) -> Result<LinearModel> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return Err(Error::Shape(format!("{} inputs for {} targets", n, y.len())));
    }
    let (d, o) = (x[0].len(), y[0].len());
    if x.iter().any(|r| r.len() != d) || y.iter().any(|r| r.len() != o) {
        return Err(Error::Shape("ragged regression data".into()));
    }
    let mean = |rows: &[Vec<f64>], w: usize| -> Vec<f64> {
        (0..w).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect()
    };
    let (mx, my) = (mean(x, d), mean(y, o));
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![vec![0.0; o]; d];
    for (xr, yr) in x.iter().zip(y) {
        let xc: Vec<f64> = xr.iter().zip(&mx).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in 0..d {
                a[i][j] += xc[i] * xc[j];
            }
            for k in 0..o {
                b[i][k] += xc[i] * (yr[k] - my[k]);
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let w = cholesky_solve(&a, &b)?;
    let weights: Vec<Vec<f64>> = (0..o).map(|k| (0..d).map(|i| w[i][k]).collect()).collect();
    let bias = (0..o)
        .map(|k| my[k] - weights[k].iter().zip(&mx).map(|(a, m)| a * m).sum::<f64>())
        .collect();
    Ok(LinearModel { weights, bias })
}

/// Coefficient of determination of one output column.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// One-vs-all least-squares classifier over the five shape classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeProbe {
    pub model: LinearModel,
}

impl ShapeProbe {
    pub fn fit(x: &[Vec<f64>], classes: &[ShapeClass], ridge: f64) -> Result<Self> {
        let y: Vec<Vec<f64>> = classes
            .iter()
            .map(|c| (0..5).map(|k| f64::from(u8::from(k == c.index()))).collect())
            .collect();
        Ok(Self {
            model: fit_least_squares(x, &y, ridge)?,
        })
    }

    pub fn classify(&self, x: &[f64]) -> ShapeClass {
        let scores = self.model.predict(x);
        let best = (0..5).fold(0, |b, k| if scores[k] > scores[b] { k } else { b });
        ShapeClass::ALL[best]
    }

    pub fn accuracy(&self, x: &[Vec<f64>], classes: &[ShapeClass]) -> f64 {
        let hits = x.iter().zip(classes).filter(|(r, &c)| self.classify(r) == c).count();
        hits as f64 / classes.len().max(1) as f64
    }
}
