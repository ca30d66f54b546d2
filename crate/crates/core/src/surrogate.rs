//! AR(p) marginal fits of a field, persistence-matched surrogate fields and
//! the placebo gate that asks whether any AR-matched field does as well as
//! the real one.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ou::{fit_bare, fit_field};
use crate::rng::{derive_seed, normal, stream_rng};
use crate::series::{align, AlignedPair, ObservableSeries};
use crate::stats::{mean, std_dev, Ols};
use crate::twod::compare_structures;

/// Steps simulated and discarded before a surrogate is kept.
pub const BURN_IN: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArFit {
    pub order: usize,
    pub intercept: f64,
    pub coeffs: Vec<f64>,
    /// Conditional maximum-likelihood innovation variance `RSS / n`.
    pub noise_var: f64,
    pub aic: f64,
    /// Coefficient standard errors (intercept first).
    pub std_errors: Vec<f64>,
}

impl ArFit {
    /// Unconditional mean `c / (1 − Σφ)`.
    pub fn mean(&self) -> f64 {
        self.intercept / (1.0 - self.coeffs.iter().sum::<f64>())
    }

    /// Stationarity via the Levinson step-down recursion: every partial
    /// autocorrelation must lie strictly inside (−1, 1).
    pub fn is_stationary(&self) -> bool {
        let mut a = self.coeffs.clone();
        while let Some(&k) = a.last() {
            if !(k.abs() < 1.0) {
                return false;
            }
            let m = a.len();
            let d = 1.0 - k * k;
            a = (0..m - 1).map(|i| (a[i] + k * a[m - 2 - i]) / d).collect();
        }
        true
    }

    /// Theoretical autocorrelations at lags `0..=max_lag`, from the
    /// Yule–Walker system on the first `p` lags and the AR recursion after.
    pub fn acf(&self, max_lag: usize) -> Result<Vec<f64>> {
        let p = self.order;
        // Unknowns rho_1..rho_p: rho_k = sum_i phi_i rho_{|k-i|}, rho_0 = 1.
        let mut m = nalgebra::DMatrix::<f64>::identity(p, p);
        let mut rhs = nalgebra::DVector::<f64>::zeros(p);
        for k in 1..=p {
            for i in 1..=p {
                let lag = k.abs_diff(i);
                if lag == 0 {
                    rhs[k - 1] += self.coeffs[i - 1];
                } else {
                    m[(k - 1, lag - 1)] -= self.coeffs[i - 1];
                }
            }
        }
        let sol = m.lu().solve(&rhs).ok_or(Error::NonStationary)?;
        let mut rho = vec![1.0];
        rho.extend(sol.iter().copied());
        for k in (p + 1)..=max_lag {
            let r = (1..=p).map(|i| self.coeffs[i - 1] * rho[k - i]).sum();
            rho.push(r);
        }
        rho.truncate(max_lag + 1);
        Ok(rho)
    }
}

fn ar_ols(x: &[f64], p: usize, start: usize) -> Result<Ols> {
    let y = &x[start..];
    let ones = vec![1.0; y.len()];
    let mut cols: Vec<&[f64]> = vec![&ones];
    for i in 1..=p {
        cols.push(&x[start - i..x.len() - i]);
    }
    Ols::fit(&cols, y)
}

fn gaussian_aic(rss: f64, n: usize, k: usize) -> f64 {
    let nf = n as f64;
    let ll = -0.5 * nf * (libm::log(2.0 * core::f64::consts::PI * rss / nf) + 1.0);
    2.0 * k as f64 - 2.0 * ll
}

/// Least-squares AR fit with the order chosen by AIC over `1..=p_max`.
///
/// Every candidate order is scored on the same observations (those after
/// the first `p_max`), and the AIC counts the intercept, the `p`
/// coefficients and the variance. The chosen order is then refitted on all
/// observations it can use.
pub fn fit_ar(x: &[f64], p_max: usize) -> Result<ArFit> {
    if p_max == 0 {
        return Err(Error::InvalidInput("p_max must be at least 1".into()));
    }
    if x.len() <= p_max + 10 {
        return Err(Error::InsufficientData { needed: p_max + 11, got: x.len() });
    }
    let mut best: Option<(usize, f64)> = None;
    for p in 1..=p_max {
        let ols = ar_ols(x, p, p_max)?;
        let aic = gaussian_aic(ols.rss, ols.n, p + 2);
        if best.is_none_or(|(_, a)| aic < a) {
            best = Some((p, aic));
        }
    }
    let (order, aic) = best.expect("p_max >= 1");
    fit_ar_order(x, order).map(|f| ArFit { aic, ..f })
}

/// Least-squares AR fit of a fixed order on all usable observations.
pub fn fit_ar_order(x: &[f64], p: usize) -> Result<ArFit> {
    if p == 0 || x.len() <= p + 10 {
        return Err(Error::InsufficientData { needed: p + 11, got: x.len() });
    }
    let ols = ar_ols(x, p, p)?;
    let noise_var = ols.rss / ols.n as f64;
    if !(noise_var > 0.0) {
        return Err(Error::Degenerate("AR residuals vanish".into()));
    }
    Ok(ArFit {
        order: p,
        intercept: ols.coef[0],
        coeffs: ols.coef[1..].to_vec(),
        noise_var,
        aic: gaussian_aic(ols.rss, ols.n, p + 2),
        std_errors: ols.std_errors(),
    })
}

/// Simulates `count` independent AR paths of length `n_obs` and rescales
/// each to the target sample mean and standard deviation.
pub fn gen_surrogates(ar: &ArFit, n_obs: usize, count: usize, target_mean: f64, target_sd: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !ar.is_stationary() {
        return Err(Error::NonStationary);
    }
    if n_obs < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n_obs });
    }
    let p = ar.order;
    let sd = libm::sqrt(ar.noise_var);
    let m = ar.mean();
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let total = BURN_IN + n_obs;
            let mut path = vec![m; p];
            path.reserve(total);
            for t in p..p + total {
                let mut v = ar.intercept + sd * normal(&mut rng);
                for (j, phi) in ar.coeffs.iter().enumerate() {
                    v += phi * path[t - 1 - j];
                }
                path.push(v);
            }
            let raw = &path[p + BURN_IN..];
            let (mu, s) = (mean(raw), std_dev(raw));
            if !(s > 0.0) {
                return Err(Error::Degenerate("surrogate has zero variance".into()));
            }
            Ok(raw.iter().map(|v| target_mean + target_sd * (v - mu) / s).collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Comparison {
    /// BIC(M0) − BIC(M2).
    OneD,
    /// BIC(decoupled) − BIC(best coupled 2D structure).
    TwoD,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GainSummary {
    pub mean: f64,
    /// Sample standard deviation; zero with fewer than two gains.
    pub sd: f64,
    pub max: f64,
}

impl GainSummary {
    pub fn of(gains: &[f64]) -> Self {
        let mut sorted = gains.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: mean(&sorted),
            sd: if sorted.len() < 2 { 0.0 } else { std_dev(&sorted) },
            max: sorted.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlaceboReport {
    pub comparison: Comparison,
    pub real_gain: f64,
    /// Gains of the surrogates that fitted, in surrogate order.
    pub placebo_gains: Vec<f64>,
    /// Indices of surrogates whose fit failed.
    pub failed: Vec<usize>,
    pub empirical_p: f64,
    pub summary: GainSummary,
    pub ar_order: usize,
}

fn gain(comparison: Comparison, psi: &ObservableSeries, field: &ObservableSeries, bic0: f64, seed: u64) -> Result<f64> {
    match comparison {
        Comparison::OneD => Ok(bic0 - fit_field(psi, field, seed)?.bic),
        Comparison::TwoD => {
            let pair = AlignedPair {
                dates: psi.dates.clone(),
                x: psi.values.clone(),
                y: field.values.clone(),
                x_label: psi.label.clone(),
                y_label: field.label.clone(),
            };
            Ok(compare_structures(&pair)?.coupling_gain())
        }
    }
}

/// Replaces the real field by `count` AR-matched surrogates and compares
/// the real BIC gain with the surrogate gains.
///
/// Surrogate fits that fail are excluded and listed; the gate errors when
/// they reach 5% of `count`.
pub fn placebo_gate(series: &ObservableSeries, real_field: &ObservableSeries, count: usize, seed: u64, comparison: Comparison) -> Result<PlaceboReport> {
    if count == 0 {
        return Err(Error::InvalidInput("placebo count must be positive".into()));
    }
    let pair = align(series, real_field)?;
    let psi = pair.x_series();
    let field = pair.y_series();
    let bic0 = match comparison {
        Comparison::OneD => fit_bare(&psi, seed)?.bic,
        Comparison::TwoD => 0.0,
    };
    let real_gain = gain(comparison, &psi, &field, bic0, seed)?;
    let ar = fit_ar(&field.values, 10)?;
    let sims = gen_surrogates(&ar, field.len(), count, mean(&field.values), std_dev(&field.values), derive_seed(seed, 1))?;
    let mut placebo_gains = Vec::with_capacity(count);
    let mut failed = Vec::new();
    for (i, values) in sims.into_iter().enumerate() {
        let surrogate = ObservableSeries { dates: field.dates.clone(), values, label: field.label.clone() };
        match gain(comparison, &psi, &surrogate, bic0, seed) {
            Ok(g) if g.is_finite() => placebo_gains.push(g),
            _ => failed.push(i),
        }
    }
    if failed.len() * 20 >= count && !failed.is_empty() {
        return Err(Error::SurrogateFailures { failed: failed.len(), count });
    }
    let hits = placebo_gains.iter().filter(|g| **g >= real_gain).count();
    Ok(PlaceboReport {
        comparison,
        real_gain,
        empirical_p: hits as f64 / placebo_gains.len() as f64,
        summary: GainSummary::of(&placebo_gains),
        placebo_gains,
        failed,
        ar_order: ar.order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::business_days;
    use crate::synth::{default_start, ou_path};

    fn ar_path(coeffs: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let ar = ArFit { order: coeffs.len(), intercept: 0.0, coeffs: coeffs.to_vec(), noise_var: 1.0, aic: 0.0, std_errors: vec![] };
        let mut rng = stream_rng(seed, 0);
        let mut x = vec![0.0; coeffs.len()];
        for t in coeffs.len()..n + BURN_IN {
            let v = normal(&mut rng) + (0..coeffs.len()).map(|j| coeffs[j] * x[t - 1 - j]).sum::<f64>();
            x.push(v);
        }
        assert!(ar.is_stationary());
        x.split_off(BURN_IN)
    }

    #[test]
    fn stationarity_by_step_down() {
        let mk = |c: &[f64]| ArFit { order: c.len(), intercept: 0.0, coeffs: c.to_vec(), noise_var: 1.0, aic: 0.0, std_errors: vec![] };
        assert!(mk(&[0.98]).is_stationary());
        assert!(!mk(&[1.0]).is_stationary());
        assert!(!mk(&[1.5, -0.5]).is_stationary()); // unit root
        assert!(mk(&[1.5, -0.56]).is_stationary()); // roots 1/0.7, 1/0.8
        assert!(!mk(&[0.2, 1.1]).is_stationary());
    }

    #[test]
    fn ar1_recovery() {
        let x = ar_path(&[0.98], 5000, 4);
        let fit = fit_ar(&x, 10).unwrap();
        assert!(fit.order <= 3, "order {}", fit.order);
        let f1 = fit_ar_order(&x, 1).unwrap();
        assert!((f1.coeffs[0] - 0.98).abs() < 0.01);
    }

    #[test]
    fn white_noise_coefficients_are_insignificant() {
        let x = ar_path(&[0.0], 3000, 8);
        let fit = fit_ar_order(&x, 3).unwrap();
        for (c, se) in fit.coeffs.iter().zip(&fit.std_errors[1..]) {
            assert!(c.abs() < 3.0 * se);
        }
    }

    #[test]
    fn rescaled_surrogates_hit_targets_exactly() {
        let x = ar_path(&[0.9], 2000, 1);
        let ar = fit_ar(&x, 10).unwrap();
        let s = gen_surrogates(&ar, 800, 5, 2.9, 0.35, 11).unwrap();
        assert_eq!(s.len(), 5);
        for p in &s {
            assert_eq!(p.len(), 800);
            assert!((mean(p) - 2.9).abs() < 1e-10);
            assert!((std_dev(p) - 0.35).abs() < 1e-10);
        }
        assert_ne!(s[0], s[1]);
        assert_eq!(s, gen_surrogates(&ar, 800, 5, 2.9, 0.35, 11).unwrap());
    }

    #[test]
    fn explosive_ar_is_rejected() {
        let ar = ArFit { order: 1, intercept: 0.0, coeffs: vec![1.01], noise_var: 1.0, aic: 0.0, std_errors: vec![] };
        assert_eq!(gen_surrogates(&ar, 10, 1, 0.0, 1.0, 0), Err(Error::NonStationary));
    }

    #[test]
    fn theoretical_acf_of_ar2() {
        let ar = ArFit { order: 2, intercept: 0.0, coeffs: vec![0.5, 0.3], noise_var: 1.0, aic: 0.0, std_errors: vec![] };
        let rho = ar.acf(3).unwrap();
        let r1 = 0.5 / (1.0 - 0.3);
        assert!((rho[1] - r1).abs() < 1e-14);
        assert!((rho[2] - (0.5 * r1 + 0.3)).abs() < 1e-14);
        assert!((rho[3] - (0.5 * rho[2] + 0.3 * r1)).abs() < 1e-14);
    }

    #[test]
    fn single_surrogate_report() {
        let n = 600;
        let dates = business_days(default_start(), n);
        let v = ObservableSeries::new(dates.clone(), ou_path(0.05, 3.0, 0.1, n, 2), "v").unwrap();
        let psi = ObservableSeries::new(dates, ou_path(0.02, 0.4, 0.01, n, 3), "psi").unwrap();
        let r = placebo_gate(&psi, &v, 1, 5, Comparison::OneD).unwrap();
        assert_eq!(r.placebo_gains.len(), 1);
        assert!(r.empirical_p == 0.0 || r.empirical_p == 1.0);
        assert_eq!(r.summary.sd, 0.0);
        assert_eq!(r, placebo_gate(&psi, &v, 1, 5, Comparison::OneD).unwrap());
    }
}
