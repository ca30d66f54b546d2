//! Return panels, rolling correlation spectra and the derived observables.
//!
//! Correlations use population moments within each window (the normalization
//! cancels in Pearson's ratio); rolling volatilities use the sample (n - 1)
//! standard deviation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::series::{check_increasing, Date, ObservableSeries};

/// Matrices larger than this use power iteration for the leading eigenvalue.
pub const DENSE_EIGEN_MAX_N: usize = 512;

/// Daily log returns, one row per stock.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub tickers: Vec<String>,
    /// Dates of the returns (the first price date is dropped).
    pub dates: Vec<Date>,
    /// `returns[i][t]` for stock `i` on `dates[t]`.
    pub returns: Vec<Vec<f64>>,
}

impl ReturnPanel {
    /// Builds the panel from adjusted closes. `prices[i][t]` is stock `i` on
    /// `dates[t]`; `None` marks a missing cell.
    pub fn from_prices(tickers: Vec<String>, dates: Vec<Date>, prices: &[Vec<Option<f64>>]) -> Result<Self> {
        if tickers.len() != prices.len() || tickers.is_empty() {
            return Err(Error::InvalidInput("ticker count does not match price rows".into()));
        }
        if dates.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: dates.len() });
        }
        check_increasing(&dates)?;
        let mut returns = Vec::with_capacity(tickers.len());
        for (ticker, row) in tickers.iter().zip(prices) {
            if row.len() != dates.len() {
                return Err(Error::InvalidInput(format!("{ticker}: row length differs from calendar")));
            }
            let mut levels = Vec::with_capacity(row.len());
            for (d, p) in dates.iter().zip(row) {
                match *p {
                    None => return Err(Error::MissingValue { ticker: ticker.clone(), date: *d }),
                    Some(v) if !(v > 0.0) || !v.is_finite() => {
                        return Err(Error::NonPositivePrice { ticker: ticker.clone(), date: *d, price: v })
                    }
                    Some(v) => levels.push(libm::log(v)),
                }
            }
            returns.push(levels.windows(2).map(|w| w[1] - w[0]).collect());
        }
        Ok(Self { tickers, dates: dates[1..].to_vec(), returns })
    }

    pub fn from_returns(tickers: Vec<String>, dates: Vec<Date>, returns: Vec<Vec<f64>>) -> Result<Self> {
        check_increasing(&dates)?;
        if tickers.len() != returns.len() || returns.iter().any(|r| r.len() != dates.len()) {
            return Err(Error::InvalidInput("return panel shape mismatch".into()));
        }
        Ok(Self { tickers, dates, returns })
    }

    pub fn n_stocks(&self) -> usize {
        self.returns.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }
}

/// Pearson correlation matrix over a trailing window.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationWindow {
    pub end_date: Date,
    pub n: usize,
    /// Row-major `n × n`.
    pub matrix: Vec<f64>,
}

impl CorrelationWindow {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Mean of the off-diagonal entries.
    pub fn mean_offdiag(&self) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += self.get(i, j);
            }
        }
        s / (n * (n - 1) / 2) as f64
    }

    pub fn leading_eigenvalue(&self) -> Result<f64> {
        leading_eigenvalue(&self.matrix, self.n)
    }

    /// Leading eigenvalue over the trace, i.e. `λ_max / N`.
    pub fn psi1(&self) -> Result<f64> {
        Ok(self.leading_eigenvalue()? / self.n as f64)
    }
}

/// Correlation of the columns `start..start + len` of the panel.
///
/// Returns the offending stock when a column has zero variance.
fn window_correlation(panel: &ReturnPanel, start: usize, len: usize) -> core::result::Result<Vec<f64>, usize> {
    let n = panel.n_stocks();
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (i, r) in panel.returns.iter().enumerate() {
        let w = &r[start..start + len];
        let m = w.iter().sum::<f64>() / len as f64;
        let ss = w.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        if !(ss > 0.0) {
            return Err(i);
        }
        let inv = 1.0 / libm::sqrt(ss);
        z.push(w.iter().map(|v| (v - m) * inv).collect());
    }
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        c[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let v: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum();
            let v = v.clamp(-1.0, 1.0);
            c[i * n + j] = v;
            c[j * n + i] = v;
        }
    }
    Ok(c)
}

fn check_window(panel: &ReturnPanel, window: usize) -> Result<()> {
    if window < 2 {
        return Err(Error::InvalidInput(format!("window {window} must be at least 2")));
    }
    if panel.n_dates() < window {
        return Err(Error::InsufficientData { needed: window, got: panel.n_dates() });
    }
    Ok(())
}

/// Streams every trailing window of length `window` to `f`, oldest first,
/// without holding all matrices in memory.
pub fn for_each_correlation_window<F>(panel: &ReturnPanel, window: usize, mut f: F) -> Result<()>
where
    F: FnMut(CorrelationWindow) -> Result<()>,
{
    check_window(panel, window)?;
    let n = panel.n_stocks();
    for end in (window - 1)..panel.n_dates() {
        let start = end + 1 - window;
        let matrix = window_correlation(panel, start, window).map_err(|i| Error::DegenerateWindow {
            ticker: panel.tickers[i].clone(),
            date: panel.dates[end],
        })?;
        f(CorrelationWindow { end_date: panel.dates[end], n, matrix })?;
    }
    Ok(())
}

/// One correlation matrix per window end date `t ∈ [W, T]`.
pub fn rolling_correlation(panel: &ReturnPanel, window: usize) -> Result<Vec<CorrelationWindow>> {
    let mut out = Vec::with_capacity(panel.n_dates().saturating_sub(window) + 1);
    for_each_correlation_window(panel, window, |w| {
        out.push(w);
        Ok(())
    })?;
    Ok(out)
}

/// Largest eigenvalue of a symmetric row-major `n × n` matrix.
pub fn leading_eigenvalue(matrix: &[f64], n: usize) -> Result<f64> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNonConvergence("non-finite matrix entry".into()));
    }
    if n <= DENSE_EIGEN_MAX_N {
        let m = DMatrix::from_row_slice(n, n, matrix);
        let ev = m.symmetric_eigenvalues();
        Ok(ev.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    } else {
        power_iteration(matrix, n, 1e-10, 100_000)
    }
}

/// Leading eigenvalue by power iteration, stopped on the residual
/// `‖Cv − λv‖ < tol`.
pub fn power_iteration(matrix: &[f64], n: usize, tol: f64, max_iter: usize) -> Result<f64> {
    let mut v = vec![1.0 / libm::sqrt(n as f64); n];
    let mut w = vec![0.0; n];
    for _ in 0..max_iter {
        for i in 0..n {
            w[i] = matrix[i * n..(i + 1) * n].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let lambda: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let resid = libm::sqrt(w.iter().zip(&v).map(|(a, b)| (a - lambda * b) * (a - lambda * b)).sum::<f64>());
        if resid < tol {
            return Ok(lambda);
        }
        let norm = libm::sqrt(w.iter().map(|a| a * a).sum::<f64>());
        if !(norm > 0.0) {
            return Err(Error::EigenNonConvergence("power iteration collapsed".into()));
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    Err(Error::EigenNonConvergence(format!("power iteration: no convergence in {max_iter} steps")))
}

/// Daily leading-eigenvalue fraction of the trailing `window`-day correlation.
pub fn psi1_series(panel: &ReturnPanel, window: usize) -> Result<ObservableSeries> {
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for_each_correlation_window(panel, window, |w| {
        dates.push(w.end_date);
        values.push(w.psi1()?);
        Ok(())
    })?;
    ObservableSeries::new(dates, values, format!("psi1_w{window}"))
}

/// Disjoint 5-day reconstructions of the collective observables.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyObservables {
    pub psi1: ObservableSeries,
    pub mean_corr: ObservableSeries,
    /// Blocks dropped for zero within-block variance, with the reason.
    pub skipped: Vec<(Date, String)>,
}

pub const WEEK: usize = 5;

pub fn weekly_disjoint_observables(panel: &ReturnPanel) -> Result<WeeklyObservables> {
    if panel.n_dates() < 2 * WEEK {
        return Err(Error::InsufficientData { needed: 2 * WEEK, got: panel.n_dates() });
    }
    if panel.n_stocks() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: panel.n_stocks() });
    }
    let n = panel.n_stocks();
    let mut dates = Vec::new();
    let mut psi = Vec::new();
    let mut mc = Vec::new();
    let mut skipped = Vec::new();
    for b in 0..panel.n_dates() / WEEK {
        let start = b * WEEK;
        let end_date = panel.dates[start + WEEK - 1];
        match window_correlation(panel, start, WEEK) {
            Ok(matrix) => {
                let w = CorrelationWindow { end_date, n, matrix };
                dates.push(end_date);
                psi.push(w.psi1()?);
                mc.push(w.mean_offdiag());
            }
            Err(i) => skipped.push((end_date, format!("zero variance for {}", panel.tickers[i]))),
        }
    }
    Ok(WeeklyObservables {
        psi1: ObservableSeries::new(dates.clone(), psi, "psi1_weekly")?,
        mean_corr: ObservableSeries::new(dates, mc, "meancorr_weekly")?,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRow {
    pub end_date: Date,
    pub psi1: f64,
    pub vix_end: f64,
    pub vix_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockObservables {
    pub rows: Vec<BlockRow>,
    pub skipped: Vec<(Date, String)>,
}

impl BlockObservables {
    pub fn psi1(&self) -> Result<ObservableSeries> {
        ObservableSeries::new(self.dates(), self.rows.iter().map(|r| r.psi1).collect(), "psi1_block")
    }

    pub fn vix_end(&self) -> Result<ObservableSeries> {
        ObservableSeries::new(self.dates(), self.rows.iter().map(|r| r.vix_end).collect(), "vix_end")
    }

    pub fn vix_mean(&self) -> Result<ObservableSeries> {
        ObservableSeries::new(self.dates(), self.rows.iter().map(|r| r.vix_mean).collect(), "vix_mean")
    }

    fn dates(&self) -> Vec<Date> {
        self.rows.iter().map(|r| r.end_date).collect()
    }
}

/// Disjoint `block`-day blocks anchored at the first return date; the
/// trailing remainder is discarded.
pub fn block_observables(panel: &ReturnPanel, vix: &ObservableSeries, block: usize) -> Result<BlockObservables> {
    if block < 2 {
        return Err(Error::InvalidInput("block length must be at least 2".into()));
    }
    if panel.n_dates() < 2 * block {
        return Err(Error::InsufficientData { needed: 2 * block, got: panel.n_dates() });
    }
    let n = panel.n_stocks();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut k = 0;
    for b in 0..panel.n_dates() / block {
        let start = b * block;
        let dates = &panel.dates[start..start + block];
        let end_date = dates[block - 1];
        let mut in_block = Vec::new();
        let mut vix_end = None;
        while k < vix.len() && vix.dates[k] <= end_date {
            if vix.dates[k] >= dates[0] {
                in_block.push(vix.values[k]);
                if vix.dates[k] == end_date {
                    vix_end = Some(vix.values[k]);
                }
            }
            k += 1;
        }
        let Some(vix_end) = vix_end else {
            skipped.push((end_date, String::from("no field value on block end date")));
            continue;
        };
        match window_correlation(panel, start, block) {
            Ok(matrix) => {
                let w = CorrelationWindow { end_date, n, matrix };
                let vix_mean = in_block.iter().sum::<f64>() / in_block.len() as f64;
                rows.push(BlockRow { end_date, psi1: w.psi1()?, vix_end, vix_mean });
            }
            Err(i) => skipped.push((end_date, format!("zero variance for {}", panel.tickers[i]))),
        }
    }
    Ok(BlockObservables { rows, skipped })
}

/// Trailing sample standard deviation, `vol[i][k]` for window ending at
/// `dates[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityPanel {
    pub dates: Vec<Date>,
    pub vol: Vec<Vec<f64>>,
}

pub fn rolling_volatility(panel: &ReturnPanel, window: usize) -> Result<VolatilityPanel> {
    check_window(panel, window)?;
    let t = panel.n_dates();
    let dates = panel.dates[window - 1..].to_vec();
    let vol = panel
        .returns
        .iter()
        .map(|r| {
            (window - 1..t)
                .map(|end| {
                    let w = &r[end + 1 - window..=end];
                    let m = w.iter().sum::<f64>() / window as f64;
                    libm::sqrt(w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (window - 1) as f64)
                })
                .collect()
        })
        .collect();
    Ok(VolatilityPanel { dates, vol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, stream_rng};
    use crate::series::business_days;
    use alloc::string::ToString;
    use chrono::NaiveDate;

    fn day0() -> Date {
        NaiveDate::from_ymd_opt(2010, 1, 4).unwrap()
    }

    fn tickers(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i}")).collect()
    }

    fn random_panel(n: usize, t: usize, seed: u64) -> ReturnPanel {
        let mut rng = stream_rng(seed, 0);
        let f: Vec<f64> = (0..t).map(|_| normal(&mut rng)).collect();
        let returns = (0..n)
            .map(|i| (0..t).map(|k| 0.01 * (0.3 * (i as f64 + 1.0) * f[k] + normal(&mut rng))).collect())
            .collect();
        ReturnPanel::from_returns(tickers(n), business_days(day0(), t), returns).unwrap()
    }

    #[test]
    fn two_point_log_return() {
        let p = ReturnPanel::from_prices(
            vec!["A".to_string()],
            business_days(day0(), 2),
            &[vec![Some(100.0), Some(110.0)]],
        )
        .unwrap();
        assert_eq!(p.n_dates(), 1);
        assert!((p.returns[0][0] - 0.09531017980432493).abs() < 1e-15);
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let p = ReturnPanel::from_prices(vec!["A".to_string()], business_days(day0(), 6), &[vec![Some(42.0); 6]])
            .unwrap();
        assert!(p.returns[0].iter().all(|&r| r == 0.0));
    }

    #[test]
    fn random_prices_match_cellwise_log_difference() {
        let mut rng = stream_rng(5, 1);
        let prices: Vec<Vec<Option<f64>>> =
            (0..3).map(|_| (0..5).map(|_| Some(50.0 * (0.2 * normal(&mut rng)).exp())).collect()).collect();
        let p = ReturnPanel::from_prices(tickers(3), business_days(day0(), 5), &prices).unwrap();
        for i in 0..3 {
            for t in 1..5 {
                let want = libm::log(prices[i][t].unwrap()) - libm::log(prices[i][t - 1].unwrap());
                assert!((p.returns[i][t - 1] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn missing_and_non_positive_prices_rejected() {
        let d = business_days(day0(), 3);
        let e = ReturnPanel::from_prices(tickers(1), d.clone(), &[vec![Some(1.0), None, Some(1.0)]]);
        assert!(matches!(e, Err(Error::MissingValue { .. })));
        let e = ReturnPanel::from_prices(tickers(1), d, &[vec![Some(1.0), Some(0.0), Some(1.0)]]);
        assert!(matches!(e, Err(Error::NonPositivePrice { .. })));
    }

    #[test]
    fn perfectly_correlated_and_anticorrelated_pairs() {
        let base = random_panel(1, 40, 2).returns[0].clone();
        let neg: Vec<f64> = base.iter().map(|v| -v).collect();
        let scaled: Vec<f64> = base.iter().map(|v| 3.0 * v + 0.01).collect();
        let p = ReturnPanel::from_returns(tickers(3), business_days(day0(), 40), vec![base, scaled, neg]).unwrap();
        for w in rolling_correlation(&p, 10).unwrap() {
            assert!((w.get(0, 1) - 1.0).abs() < 1e-12);
            assert!((w.get(0, 2) + 1.0).abs() < 1e-12);
        }
    }

    fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for k in 0..x.len() {
            sxy += (x[k] - mx) * (y[k] - my);
            sxx += (x[k] - mx).powi(2);
            syy += (y[k] - my).powi(2);
        }
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn rolling_correlation_matches_pairwise_oracle() {
        let p = random_panel(5, 30, 3);
        let ws = rolling_correlation(&p, 10).unwrap();
        assert_eq!(ws.len(), 21);
        for (k, w) in ws.iter().enumerate() {
            assert!((w.trace() - 5.0).abs() < 1e-10);
            for i in 0..5 {
                for j in 0..5 {
                    let want = brute_pearson(&p.returns[i][k..k + 10], &p.returns[j][k..k + 10]);
                    assert!((w.get(i, j) - want).abs() < 1e-12);
                    assert!((w.get(i, j) - w.get(j, i)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_variance_window_names_stock_and_date() {
        let mut p = random_panel(3, 20, 4);
        for t in 5..12 {
            p.returns[1][t] = 0.0;
        }
        match rolling_correlation(&p, 6) {
            Err(Error::DegenerateWindow { ticker, date }) => {
                assert_eq!(ticker, "S1");
                assert_eq!(date, p.dates[10]);
            }
            other => panic!("{other:?}"),
        }
    }

    /// Largest root of the characteristic polynomial from Faddeev–LeVerrier
    /// coefficients, located by bisection.
    fn charpoly_lambda_max(a: &[f64], n: usize) -> f64 {
        let mul = |x: &[f64], y: &[f64]| {
            let mut z = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    z[i * n + j] = (0..n).map(|k| x[i * n + k] * y[k * n + j]).sum();
                }
            }
            z
        };
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        let mut m = vec![0.0; n * n];
        for k in 1..=n {
            let am = mul(a, &m);
            let mut mk = am.clone();
            for i in 0..n {
                mk[i * n + i] += c[n - k + 1];
            }
            m = mk;
            let amk = mul(a, &m);
            let tr: f64 = (0..n).map(|i| amk[i * n + i]).sum();
            c[n - k] = -tr / k as f64;
        }
        let p = |x: f64| c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci);
        // p > 0 above the largest root; walk down to the first sign change.
        let step = 1e-4;
        let mut x = n as f64 + 1.0;
        while p(x) > 0.0 {
            x -= step;
        }
        let (mut lo, mut hi) = (x, x + step);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn psi1_matches_characteristic_polynomial() {
        let p = random_panel(4, 20, 6);
        let s = psi1_series(&p, 6).unwrap();
        let ws = rolling_correlation(&p, 6).unwrap();
        for (w, v) in ws.iter().zip(&s.values) {
            let want = charpoly_lambda_max(&w.matrix, 4) / 4.0;
            assert!((v - want).abs() < 1e-10, "{v} vs {want}");
            assert!(*v >= 0.25 - 1e-12 && *v <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn identical_streams_give_unit_psi1() {
        let r = random_panel(1, 50, 7).returns[0].clone();
        let p = ReturnPanel::from_returns(tickers(4), business_days(day0(), 50), vec![r; 4]).unwrap();
        let s = psi1_series(&p, 20).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let w = weekly_disjoint_observables(&p).unwrap();
        assert!(w.psi1.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(w.mean_corr.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn independent_streams_bounded_below() {
        let mut rng = stream_rng(8, 0);
        let returns = (0..6).map(|_| (0..2000).map(|_| normal(&mut rng)).collect()).collect();
        let p = ReturnPanel::from_returns(tickers(6), business_days(day0(), 2000), returns).unwrap();
        let s = psi1_series(&p, 1000).unwrap();
        assert!(s.values.iter().all(|&v| v >= 1.0 / 6.0 && v < 0.3));
    }

    #[test]
    fn power_iteration_agrees_with_dense() {
        let p = random_panel(8, 60, 9);
        let w = &rolling_correlation(&p, 60).unwrap()[0];
        let dense = w.leading_eigenvalue().unwrap();
        let pi = power_iteration(&w.matrix, 8, 1e-10, 100_000).unwrap();
        assert!((dense - pi).abs() < 1e-9);
    }

    #[test]
    fn weekly_blocks_count_and_mean_correlation() {
        let p = random_panel(5, 25, 10);
        let w = weekly_disjoint_observables(&p).unwrap();
        assert_eq!(w.psi1.len(), 5);
        for b in 0..5 {
            let mut s = 0.0;
            for i in 0..5 {
                for j in (i + 1)..5 {
                    s += brute_pearson(&p.returns[i][5 * b..5 * b + 5], &p.returns[j][5 * b..5 * b + 5]);
                }
            }
            assert!((w.mean_corr.values[b] - s / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weekly_degenerate_block_is_skipped() {
        let mut p = random_panel(3, 27, 11);
        for t in 5..10 {
            p.returns[2][t] = 0.001;
        }
        let w = weekly_disjoint_observables(&p).unwrap();
        assert_eq!(w.psi1.len(), 4);
        assert_eq!(w.skipped.len(), 1);
        assert_eq!(w.skipped[0].0, p.dates[9]);
    }

    #[test]
    fn block_counts_and_constant_field() {
        let p = random_panel(3, 180, 12);
        let vix = ObservableSeries::new(p.dates.clone(), vec![17.0; 180], "vix").unwrap();
        let b = block_observables(&p, &vix, 60).unwrap();
        assert_eq!(b.rows.len(), 3);
        assert!(b.rows.iter().all(|r| r.vix_end == r.vix_mean));

        let p = random_panel(3, 77 * 60 + 30, 13);
        let vix = ObservableSeries::new(p.dates.clone(), vec![17.0; p.n_dates()], "vix").unwrap();
        assert_eq!(block_observables(&p, &vix, 60).unwrap().rows.len(), 77);
    }

    #[test]
    fn volatility_limits_and_oracle() {
        let t = 520;
        let alt: Vec<f64> = (0..t).map(|k| if k % 2 == 0 { 0.02 } else { -0.02 }).collect();
        let p = ReturnPanel::from_returns(
            tickers(2),
            business_days(day0(), t),
            vec![vec![0.003; t], alt],
        )
        .unwrap();
        let v = rolling_volatility(&p, 500).unwrap();
        assert_eq!(v.vol[0].len(), t - 500 + 1);
        assert!(v.vol[0].iter().all(|&s| s.abs() < 1e-15));
        // Sample normalization: alternating ±r has sd r·sqrt(W/(W-1)).
        let want = 0.02 * (500.0f64 / 499.0).sqrt();
        assert!(v.vol[1].iter().all(|&s| (s - want).abs() < 1e-12 && (s - 0.02).abs() < 1e-4));

        let p = random_panel(2, 80, 14);
        let v = rolling_volatility(&p, 60).unwrap();
        for k in 0..v.dates.len() {
            let w = &p.returns[1][k..k + 60];
            let m = w.iter().sum::<f64>() / 60.0;
            let ss: f64 = w.iter().map(|x| (x - m) * (x - m)).sum();
            assert!((v.vol[1][k] - (ss / 59.0).sqrt()).abs() < 1e-15);
        }
    }
}
