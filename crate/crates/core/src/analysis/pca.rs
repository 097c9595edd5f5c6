use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal axes of a point cloud. `components[k]` is the unit axis with
/// the k-th largest variance `eigenvalues[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// Centered data projected on every component, one row per input row.
    pub projections: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations on a symmetric matrix. Returns eigenvalues and
/// the matrix whose columns are the eigenvectors.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// PCA by eigendecomposition of the sample covariance (divisor `M − 1`).
/// Each component's largest-magnitude entry is made positive.
pub fn pca_latent(rows: &[Vec<f64>]) -> Result<Pca> {
    let m = rows.len();
    if m < 2 {
        return Err(Error::Invalid(format!("PCA needs at least 2 rows, got {m}")));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("PCA rows must share a positive width".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m as f64).collect();
    let centered: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(x, mu)| x - mu).collect()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (m - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let (vals, vecs) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut c: Vec<f64> = (0..d).map(|i| vecs[i][k]).collect();
            let big = c.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if big < 0.0 {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            c
        })
        .collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&k| vals[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained_ratio = eigenvalues.iter().map(|&l| if total > 0.0 { l / total } else { 0.0 }).collect();
    let projections = centered
        .iter()
        .map(|r| components.iter().map(|c| c.iter().zip(r).map(|(a, b)| a * b).sum()).collect())
        .collect();
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        explained_ratio,
        projections,
    })
}

impl Pca {
    /// Centered rows rebuilt from the first `k` projections.
    pub fn reconstruct_centered(&self, k: usize) -> Vec<Vec<f64>> {
        let d = self.mean.len();
        self.projections
            .iter()
            .map(|p| {
                (0..d)
                    .map(|j| (0..k.min(p.len())).map(|c| p[c] * self.components[c][j]).sum())
                    .collect()
            })
            .collect()
    }
}

/// Projection table for plotting: one row per input with its labels.
pub fn write_projections_csv(path: &Path, pca: &Pca, labels: &[(String, [f64; 2], Option<f64>)]) -> Result<()> {
    if labels.len() != pca.projections.len() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), pca.projections.len())));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let pcs: Vec<String> = (1..=pca.components.len()).map(|k| format!("pc{k}")).collect();
    writeln!(out, "{},shape,pos_x_mm,pos_y_mm,theta_deg", pcs.join(","))?;
    for (p, (shape, pos, theta)) in pca.projections.iter().zip(labels) {
        let vals: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        let theta = theta.map(|t| t.to_string()).unwrap_or_default();
        writeln!(out, "{},{shape},{},{},{theta}", vals.join(","), pos[0], pos[1])?;
    }
    out.flush()?;
    Ok(())
}
