use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-column z-score parameters learned from training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant columns.
    pub std: Vec<f64>,
    /// Columns that were constant on the training rows (centered only).
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: &Matrix) -> Result<Self> {
        let n = train.n_rows();
        if n < 2 {
            return Err(Error::invalid("standardizer needs at least 2 training rows"));
        }
        let d = train.n_cols();
        let mut mean = vec![0.0; d];
        for row in train.rows() {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in train.rows() {
            for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let mut std = Vec::with_capacity(d);
        let mut constant = Vec::with_capacity(d);
        for (v, &m) in var.iter().zip(&mean) {
            let s = (v / n as f64).sqrt();
            let flat = !(s > 1e-12 * m.abs().max(1e-300));
            constant.push(flat);
            std.push(if flat { 1.0 } else { s });
        }
        Ok(Standardizer { mean, std, constant })
    }

    pub fn apply(&self, rows: &Matrix) -> Result<Matrix> {
        if rows.n_cols() != self.mean.len() {
            return Err(Error::invalid(format!(
                "feature arity mismatch: standardizer has {} columns, input has {}",
                self.mean.len(),
                rows.n_cols()
            )));
        }
        let mut out = rows.clone();
        for i in 0..out.n_rows() {
            for ((x, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }
}

pub fn fit_standardizer(train: &Matrix) -> Result<Standardizer> {
    Standardizer::fit(train)
}
