//! Descriptive statistics and least squares.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Neumaier-compensated sum; order-stable to well below 1e-12 for the
/// moment aggregations used by the simulators.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    compensated_sum(x.iter().copied()) / x.len() as f64
}

/// Sample variance (divides by n - 1).
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    compensated_sum(x.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    libm::sqrt(variance(x))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / libm::sqrt(sxx * syy)
}

/// Median of a slice (average of the two middle values for even length).
pub fn median(x: &[f64]) -> f64 {
    let mut v: Vec<f64> = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Ordinary least squares solution with the quantities the tests need.
#[derive(Debug, Clone)]
pub struct Ols {
    pub coef: Vec<f64>,
    pub resid: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub n: usize,
    pub k: usize,
    /// `(XᵀX)⁻¹`, row-major k×k.
    pub xtx_inv: Vec<f64>,
}

impl Ols {
    /// Fits `y = X b + e`. `columns` holds the regressors column by column;
    /// include a column of ones for an intercept.
    pub fn fit(columns: &[&[f64]], y: &[f64]) -> Result<Self> {
        let n = y.len();
        let k = columns.len();
        if k == 0 {
            return Err(Error::InvalidInput("no regressors".into()));
        }
        if n <= k {
            return Err(Error::InsufficientData { needed: k + 1, got: n });
        }
        for c in columns {
            if c.len() != n {
                return Err(Error::InvalidInput("regressor length mismatch".into()));
            }
        }
        // Column scaling keeps the rank test meaningful across units.
        let scale: Vec<f64> = columns
            .iter()
            .map(|c| {
                let s = libm::sqrt(c.iter().map(|v| v * v).sum::<f64>());
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let x = DMatrix::from_fn(n, k, |i, j| columns[j][i] / scale[j]);
        let qr = x.qr();
        let r = qr.r();
        let rmax = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        for i in 0..k {
            if !(r[(i, i)].abs() > 1e-10 * rmax) {
                return Err(Error::Singular(format!("column {i} is collinear")));
            }
        }
        let q = qr.q();
        let qty = q.transpose() * DVector::from_column_slice(y);
        let b = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
        let rinv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("R not invertible".into()))?;
        let cov = &rinv * rinv.transpose();
        let coef: Vec<f64> = (0..k).map(|j| b[j] / scale[j]).collect();
        let mut resid = Vec::with_capacity(n);
        for i in 0..n {
            let fit: f64 = (0..k).map(|j| columns[j][i] * coef[j]).sum();
            resid.push(y[i] - fit);
        }
        let rss = compensated_sum(resid.iter().map(|e| e * e));
        let my = mean(y);
        let tss = compensated_sum(y.iter().map(|v| (v - my) * (v - my)));
        let mut xtx_inv = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                xtx_inv.push(cov[(i, j)] / (scale[i] * scale[j]));
            }
        }
        Ok(Self { coef, resid, rss, tss, n, k, xtx_inv })
    }

    /// Coefficient of determination relative to the mean of `y`.
    pub fn r2(&self) -> f64 {
        if self.tss > 0.0 {
            1.0 - self.rss / self.tss
        } else {
            0.0
        }
    }

    /// Unbiased residual variance `rss / (n - k)`.
    pub fn sigma2(&self) -> f64 {
        self.rss / (self.n - self.k) as f64
    }

    pub fn std_errors(&self) -> Vec<f64> {
        let s2 = self.sigma2();
        (0..self.k).map(|j| libm::sqrt(s2 * self.xtx_inv[j * self.k + j])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ols_recovers_exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let ones = vec![1.0; 20];
        let fit = Ols::fit(&[&ones, &x], &y).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-12);
        assert!((fit.coef[1] + 0.5).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
        assert!((fit.r2() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_rejects_collinear_columns() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let ones = vec![1.0; 20];
        let y = x.clone();
        assert!(matches!(Ols::fit(&[&ones, &x, &x], &y), Err(Error::Singular(_))));
    }

    #[test]
    fn compensated_sum_is_order_stable() {
        let v: Vec<f64> = (0..10_000).map(|i| 1e8 + (i as f64) * 1e-3).collect();
        let mut r = v.clone();
        r.reverse();
        assert_eq!(compensated_sum(v), compensated_sum(r));
    }
}
