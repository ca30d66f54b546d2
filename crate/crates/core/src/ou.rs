//! One-dimensional OU hierarchy: exact and Euler one-step likelihoods,
//! maximum-likelihood fitting and attribution quantities.
//!
//! Exact OU families use the closed-form daily transition with the field held
//! constant over the interval. The quartic families and the heteroskedastic
//! M2′ use the Euler one-step Gaussian.
//!
//! For the exact families the likelihood is a reparametrized Gaussian linear
//! regression of `psi[t+1]` on `(1, psi[t], v[t])`, so the maximum is found in
//! closed form whenever the fitted autoregressive coefficient lies in (0, 1).
//! Otherwise, and for every Euler family, a seeded quasi-random multistart of
//! Nelder–Mead searches is used.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{Error, Result};
use crate::model::{Family, ModelFit, ModelSpec, SampleId};
use crate::optimize::{halton_points, multistart, NelderMeadOptions};
use crate::series::ObservableSeries;
use crate::special::{ks_critical, ks_pvalue, normal_cdf};
use crate::stats::{compensated_sum, mean, std_dev, Ols};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Number of multistart points for numerically optimized fits.
pub const N_STARTS: usize = 16;

/// Parameters of a single OU step with one (or a pre-combined) field term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuStep {
    pub theta: f64,
    pub mu: f64,
    pub beta: f64,
    pub sigma: f64,
}

/// `(1 - e^{-x}) / x`, stable near zero.
fn one_minus_exp_over(x: f64) -> f64 {
    if x.abs() < 1e-300 {
        1.0
    } else {
        -libm::expm1(-x) / x
    }
}

/// Exact transition moments over `dt` with field contribution `bv = beta * v`.
pub fn exact_moments(theta: f64, mu: f64, bv: f64, sigma: f64, psi: f64, dt: f64) -> (f64, f64) {
    let decay = libm::exp(-theta * dt);
    let g = dt * one_minus_exp_over(theta * dt);
    // (1 - e^{-θdt})(μ + βv/θ) written to stay finite as θ → 0.
    let mean = decay * psi + theta * g * mu + g * bv;
    let var = sigma * sigma * dt * one_minus_exp_over(2.0 * theta * dt);
    (mean, var)
}

/// Exact one-day transition `(mean, var)`; `v = None` is the field-free case.
pub fn exact_step(p: &OuStep, psi: f64, v: Option<f64>) -> (f64, f64) {
    exact_moments(p.theta, p.mu, p.beta * v.unwrap_or(0.0), p.sigma, psi, 1.0)
}

pub fn gaussian_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let e = x - mean;
    -0.5 * (LN_2PI + libm::log(var) + e * e / var)
}

/// Validates a parameter vector against the family's constraints.
pub(crate) fn check_params(family: Family, p: &[f64]) -> Result<()> {
    if p.len() != family.n_params() {
        return Err(Error::InvalidInput(format!(
            "{} expects {} parameters, got {}",
            family.label(),
            family.n_params(),
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite parameter".into()));
    }
    let ok = match family {
        Family::OuBare | Family::OuField | Family::OuMultiField(_) => p[0] > 0.0 && p[p.len() - 1] > 0.0,
        Family::OuFieldHetero => p[0] > 0.0,
        Family::Quartic | Family::QuarticField => p[1] >= 0.0 && p[p.len() - 1] > 0.0,
        Family::RegimeSwitch | Family::RegimeSwitchField => {
            let n = p.len();
            p[0] > 0.0 && p[n - 3] > 0.0 && p[n - 2] > 0.0 && p[n - 2] < 1.0 && p[n - 1] > 0.0 && p[n - 1] < 1.0
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{} parameters outside their domain", family.label())))
    }
}

/// One-step predictive `(mean, var)` from state `psi` with field values `v`.
/// `Err(())` flags a non-positive state-dependent noise scale.
#[inline]
pub(crate) fn predictive(family: Family, p: &[f64], psi: f64, v: &[f64], dt: f64) -> core::result::Result<(f64, f64), ()> {
    match family {
        Family::OuBare => Ok(exact_moments(p[0], p[1], 0.0, p[2], psi, dt)),
        Family::OuField => Ok(exact_moments(p[0], p[1], p[2] * v[0], p[3], psi, dt)),
        Family::OuMultiField(m) => {
            let bv: f64 = (0..m).map(|j| p[2 + j] * v[j]).sum();
            Ok(exact_moments(p[0], p[1], bv, p[2 + m], psi, dt))
        }
        Family::OuFieldHetero => {
            let s = p[3] + p[4] * psi;
            if !(s > 0.0) {
                return Err(());
            }
            let drift = -p[0] * (psi - p[1]) + p[2] * v[0];
            Ok((psi + drift * dt, s * s * dt))
        }
        Family::Quartic | Family::QuarticField => {
            let d = psi - p[2];
            let mut drift = -p[0] * d - p[1] * d * d * d;
            let sigma = if family == Family::QuarticField {
                drift += p[3] * v[0];
                p[4]
            } else {
                p[3]
            };
            Ok((psi + drift * dt, sigma * sigma * dt))
        }
        Family::RegimeSwitch | Family::RegimeSwitchField => Err(()),
    }
}

/// Sum of one-step log densities; on failure returns the offending index.
pub(crate) fn loglik_raw(family: Family, p: &[f64], x: &[f64], fields: &[&[f64]], dt: f64) -> core::result::Result<f64, usize> {
    let mut v = vec![0.0; fields.len()];
    let mut sum = 0.0;
    let mut c = 0.0;
    for t in 0..x.len() - 1 {
        for (j, f) in fields.iter().enumerate() {
            v[j] = f[t];
        }
        let (m, q) = predictive(family, p, x[t], &v, dt).map_err(|_| t)?;
        let term = gaussian_logpdf(x[t + 1], m, q);
        // Neumaier step inline: this loop is the hot path of every fit.
        let s = sum + term;
        if libm::fabs(sum) >= libm::fabs(term) {
            c += (sum - s) + term;
        } else {
            c += (term - s) + sum;
        }
        sum = s;
    }
    Ok(sum + c)
}

/// Log likelihood of `series` under `spec` at parameters `params`.
pub fn loglik(spec: &ModelSpec, params: &[f64], series: &ObservableSeries) -> Result<f64> {
    check_params(spec.family, params)?;
    let fields = spec.field_values(series)?;
    if spec.family.is_regime() {
        let rp = crate::regime::RegimeParams::from_vec(spec.family, params)?;
        let field = fields.first().copied();
        return crate::regime::hamilton_loglik(&rp, &series.values, field).map(|r| r.loglik);
    }
    loglik_raw(spec.family, params, &series.values, &fields, spec.dt)
        .map_err(|t| Error::NonPositiveNoise { date: series.dates[t] })
}

fn check_not_degenerate(series: &ObservableSeries) -> Result<()> {
    let sd = std_dev(&series.values);
    let moves = series.values.windows(2).any(|w| w[1] != w[0]);
    if !(sd > 0.0) || !moves {
        return Err(Error::Degenerate(format!("{} is constant", series.label)));
    }
    Ok(())
}

/// Maximum-likelihood fit. Deterministic given `(spec, series, seed)`.
pub fn fit(spec: &ModelSpec, series: &ObservableSeries, seed: u64) -> Result<ModelFit> {
    let fields = spec.field_values(series)?;
    check_not_degenerate(series)?;
    for (f, s) in fields.iter().zip(&spec.fields) {
        if !(std_dev(f) > 0.0) {
            return Err(Error::Degenerate(format!("field {} is constant", s.label)));
        }
    }
    let labels: Vec<String> = spec.fields.iter().map(|f| f.label.clone()).collect();
    let x = &series.values;
    let (params, ll, converged) = match spec.family {
        f if f.is_regime() => {
            return crate::regime::fit_rs(f == Family::RegimeSwitchField, series, spec.fields.first(), seed)
        }
        f if f.is_exact_ou() => fit_exact(f, x, &fields, spec.dt)?,
        f => fit_euler(f, x, &fields, spec.dt, seed)?,
    };
    Ok(ModelFit::new(spec.family, labels, params, ll, x.len() - 1, converged, SampleId::of(series)))
}

/// Convenience wrapper for the two headline models.
pub fn fit_bare(series: &ObservableSeries, seed: u64) -> Result<ModelFit> {
    fit(&ModelSpec::bare(Family::OuBare)?, series, seed)
}

pub fn fit_field(series: &ObservableSeries, field: &ObservableSeries, seed: u64) -> Result<ModelFit> {
    fit(&ModelSpec::new(Family::OuField, alloc::vec![field.clone()])?, series, seed)
}

fn lagged_design<'a>(x: &'a [f64], fields: &[&'a [f64]]) -> (Vec<f64>, Vec<&'a [f64]>) {
    let n = x.len() - 1;
    let ones = vec![1.0; n];
    let mut cols: Vec<&[f64]> = vec![&x[..n]];
    for f in fields {
        cols.push(&f[..n]);
    }
    (ones, cols)
}

fn fit_exact(family: Family, x: &[f64], fields: &[&[f64]], dt: f64) -> Result<(Vec<f64>, f64, bool)> {
    let n = x.len() - 1;
    let m = fields.len();
    let (ones, rest) = lagged_design(x, fields);
    let mut cols: Vec<&[f64]> = vec![&ones];
    cols.extend(rest);
    let ols = Ols::fit(&cols, &x[1..])?;
    let phi = ols.coef[1];
    let q = ols.rss / n as f64;
    if !(q > 0.0) {
        return Err(Error::Degenerate("zero one-step residual variance".into()));
    }
    if phi > 0.0 && phi < 1.0 {
        let theta = -libm::log(phi) / dt;
        let one_m = 1.0 - phi;
        let mut p = Vec::with_capacity(3 + m);
        p.push(theta);
        p.push(ols.coef[0] / one_m);
        for j in 0..m {
            p.push(ols.coef[2 + j] * theta / one_m);
        }
        p.push(libm::sqrt(2.0 * theta * q / ((1.0 - phi * phi) * dt)));
        let ll = loglik_raw(family, &p, x, fields, dt).map_err(|_| Error::Numerical("exact loglik".into()))?;
        return Ok((p, ll, true));
    }
    // No mean-reverting interior optimum. The residual sum of squares is a
    // convex quadratic in φ, so the optimum over the rate box sits on the
    // nearer edge; profile the remaining coefficients there.
    let theta = if phi >= 1.0 { THETA_MIN } else { THETA_MAX };
    fit_exact_at(family, x, fields, dt, theta)
}

/// Smallest and largest relaxation rates (per unit time) the exact fit
/// will report.
pub const THETA_MIN: f64 = 1e-6;
pub const THETA_MAX: f64 = 1e3;

/// Exact-family MLE with the relaxation rate held at `theta`.
fn fit_exact_at(family: Family, x: &[f64], fields: &[&[f64]], dt: f64, theta: f64) -> Result<(Vec<f64>, f64, bool)> {
    let n = x.len() - 1;
    let m = fields.len();
    let phi = libm::exp(-theta * dt);
    let y: Vec<f64> = (0..n).map(|t| x[t + 1] - phi * x[t]).collect();
    let ones = vec![1.0; n];
    let mut cols: Vec<&[f64]> = vec![&ones];
    for f in fields {
        cols.push(&f[..n]);
    }
    let ols = Ols::fit(&cols, &y)?;
    let q = ols.rss / n as f64;
    if !(q > 0.0) {
        return Err(Error::Degenerate("zero one-step residual variance".into()));
    }
    let one_m = -libm::expm1(-theta * dt);
    let mut p = Vec::with_capacity(3 + m);
    p.push(theta);
    p.push(ols.coef[0] / one_m);
    for j in 0..m {
        p.push(ols.coef[1 + j] * theta / one_m);
    }
    p.push(libm::sqrt(2.0 * theta * q / ((1.0 - phi * phi) * dt)));
    let ll = loglik_raw(family, &p, x, fields, dt).map_err(|_| Error::Numerical("exact loglik".into()))?;
    Ok((p, ll, true))
}

/// Multistart over a box from Halton points (plus an optional leading start).
pub(crate) fn box_multistart<F: FnMut(&[f64]) -> f64>(
    mut obj: F,
    lo: &[f64],
    hi: &[f64],
    first: Option<Vec<f64>>,
    seed: u64,
) -> Result<(Vec<f64>, f64, bool)> {
    let d = lo.len();
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(N_STARTS);
    let quasi = N_STARTS - usize::from(first.is_some());
    if let Some(s) = first {
        starts.push(s);
    }
    for u in halton_points(d, quasi, seed) {
        starts.push((0..d).map(|i| lo[i] + u[i] * (hi[i] - lo[i])).collect());
    }
    let steps: Vec<f64> = (0..d).map(|i| 0.1 * (hi[i] - lo[i])).collect();
    let opts = NelderMeadOptions::default();
    let mut any_converged = false;
    let mut best: Option<crate::optimize::Minimum> = None;
    for s in &starts {
        let Some(m) = multistart(&mut obj, core::slice::from_ref(s), &steps, opts) else { continue };
        any_converged |= m.converged;
        best = match best {
            Some(b) if crate::optimize::compare_minima(&b, &m) != core::cmp::Ordering::Greater => Some(b),
            _ => Some(m),
        };
    }
    match best {
        None => Err(Error::OptimizerFailed(format!("all {} starts returned non-finite objective", starts.len()))),
        Some(_) if !any_converged => Err(Error::OptimizerFailed(format!(
            "none of {} starts converged within {} iterations",
            starts.len(),
            opts.max_iter
        ))),
        Some(b) => Ok((b.x, b.f, b.converged)),
    }
}

fn fit_euler(family: Family, x: &[f64], fields: &[&[f64]], dt: f64, seed: u64) -> Result<(Vec<f64>, f64, bool)> {
    let n = x.len() - 1;
    // Euler linear regression start: Δψ = a + bψ + c v.
    let dx: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    let (ones, rest) = lagged_design(x, fields);
    let mut cols: Vec<&[f64]> = vec![&ones];
    cols.extend(rest);
    let ols = Ols::fit(&cols, &dx)?;
    let a2 = -ols.coef[1];
    let mx = mean(x);
    let sx = std_dev(x);
    let mu0 = if a2 > 1e-8 { ols.coef[0] / a2 } else { mx };
    let mu0 = if (mu0 - mx).abs() < 5.0 * sx { mu0 } else { mx };
    let c0 = if fields.is_empty() { 0.0 } else { ols.coef[2] };
    let sig = libm::sqrt(ols.rss / (n as f64 * dt)).max(1e-12);
    let a2s = a2.abs().max(1e-3);
    let a4_max = 4.0 * a2s / (sx * sx);
    match family {
        Family::OuFieldHetero => {
            let theta = a2.max(1e-4);
            let vbar = mean(&fields[0][..n]);
            let chi = c0 / theta;
            let mbar = mu0 + chi * vbar;
            let to_params = |z: &[f64]| -> Vec<f64> {
                let theta = libm::exp(z[0]);
                vec![theta, z[1] - z[2] * vbar, z[2] * theta, z[3], z[4]]
            };
            let xmax = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
            let first = vec![libm::log(theta), mbar, chi, sig, 0.0];
            let w_chi = (2.0 * chi.abs()).max(sx / std_dev(fields[0]));
            let lo = vec![libm::log(theta) - 1.5, mbar - 2.0 * sx, chi - w_chi, 0.5 * sig, -0.5 * sig / xmax];
            let hi = vec![libm::log(theta) + 1.5, mbar + 2.0 * sx, chi + w_chi, 1.5 * sig, 0.5 * sig / xmax];
            let obj = |z: &[f64]| match loglik_raw(family, &to_params(z), x, fields, dt) {
                Ok(l) => -l,
                Err(_) => f64::INFINITY,
            };
            let (z, f, c) = box_multistart(obj, &lo, &hi, Some(first), seed)?;
            Ok((to_params(&z), -f, c))
        }
        Family::Quartic | Family::QuarticField => {
            let with_field = family == Family::QuarticField;
            let to_params = |z: &[f64]| -> Vec<f64> {
                let mut p = vec![z[0], z[1] * z[1], z[2]];
                if with_field {
                    p.push(z[3]);
                }
                p.push(libm::exp(z[z.len() - 1]));
                p
            };
            let mut first = vec![a2, 0.0, mu0];
            let mut lo = vec![a2 - 2.0 * a2s, 0.0, mu0 - 2.0 * sx];
            let mut hi = vec![a2 + 2.0 * a2s, libm::sqrt(a4_max), mu0 + 2.0 * sx];
            if with_field {
                let w = (2.0 * c0.abs()).max(a2s * sx / std_dev(fields[0]));
                first.push(c0);
                lo.push(c0 - w);
                hi.push(c0 + w);
            }
            let ls = libm::log(sig);
            first.push(ls);
            lo.push(ls - 0.5);
            hi.push(ls + 0.5);
            let obj = |z: &[f64]| match loglik_raw(family, &to_params(z), x, fields, dt) {
                Ok(l) => -l,
                Err(_) => f64::INFINITY,
            };
            let (z, f, c) = box_multistart(obj, &lo, &hi, Some(first), seed)?;
            Ok((to_params(&z), -f, c))
        }
        _ => Err(Error::InvalidInput(format!("{} is not an Euler family", family.label()))),
    }
}

/// Timescale and susceptibility summary of an M0/M2 pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttributionSummary {
    pub tau_auto: f64,
    pub tau_cond: f64,
    pub chi: f64,
    pub scpa: f64,
}

impl AttributionSummary {
    pub fn from_rates(theta0: f64, theta: f64, beta: f64) -> Self {
        Self { tau_auto: 1.0 / theta0, tau_cond: 1.0 / theta, chi: beta / theta, scpa: 1.0 - theta0 / theta }
    }
}

pub fn attribution(fit0: &ModelFit, fit2: &ModelFit) -> Result<AttributionSummary> {
    if fit0.family != Family::OuBare || fit2.family != Family::OuField {
        return Err(Error::InvalidInput("attribution needs an M0 and an M2 fit".into()));
    }
    if fit0.sample != fit2.sample {
        return Err(Error::SampleMismatch);
    }
    Ok(AttributionSummary::from_rates(fit0.params[0], fit2.params[0], fit2.params[2]))
}

/// Conditional equilibrium `mu + (beta/theta) v` of a field fit.
pub fn mu_eff(fit2: &ModelFit, v: f64) -> Result<f64> {
    match fit2.family {
        Family::OuField | Family::OuFieldHetero => Ok(fit2.params[1] + fit2.params[2] / fit2.params[0] * v),
        _ => Err(Error::InvalidInput(format!("{} has no single field loading", fit2.label()))),
    }
}

/// One-step predictive moments for every transition of `series`.
pub fn predictive_moments(fit: &ModelFit, spec: &ModelSpec, series: &ObservableSeries) -> Result<Vec<(f64, f64)>> {
    if fit.family != spec.family || fit.family.is_regime() {
        return Err(Error::InvalidInput("predictive moments need a matching one-dimensional fit".into()));
    }
    let fields = spec.field_values(series)?;
    let x = &series.values;
    let mut v = vec![0.0; fields.len()];
    (0..x.len() - 1)
        .map(|t| {
            for (j, f) in fields.iter().enumerate() {
                v[j] = f[t];
            }
            predictive(fit.family, &fit.params, x[t], &v, spec.dt).map_err(|_| Error::NonPositiveNoise { date: series.dates[t] })
        })
        .collect()
}

/// Probability integral transform `u_t = Φ((ψ_{t+1} − m_t)/√q_t)`, dated at
/// the outcome.
pub fn pit_series(fit: &ModelFit, spec: &ModelSpec, series: &ObservableSeries) -> Result<ObservableSeries> {
    let mom = predictive_moments(fit, spec, series)?;
    let u: Vec<f64> = mom
        .iter()
        .enumerate()
        .map(|(t, (m, q))| normal_cdf((series.values[t + 1] - m) / libm::sqrt(*q)))
        .collect();
    ObservableSeries::new(series.dates[1..].to_vec(), u, format!("pit_{}", fit.label()))
}

/// Kolmogorov–Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_uniform(u: &[f64]) -> f64 {
    let mut s = u.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KsSummary {
    pub n: usize,
    pub distance: f64,
    pub critical_5pct: f64,
    pub p_value: f64,
}

/// KS summary of the PIT values selected by `mask` (all values if `None`).
pub fn pit_ks(pit: &[f64], mask: Option<&[bool]>) -> Result<KsSummary> {
    let u: Vec<f64> = match mask {
        Some(m) => pit.iter().zip(m).filter(|(_, k)| **k).map(|(u, _)| *u).collect(),
        None => pit.to_vec(),
    };
    if u.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let d = ks_uniform(&u);
    Ok(KsSummary { n: u.len(), distance: d, critical_5pct: ks_critical(u.len(), 0.05), p_value: ks_pvalue(d, u.len()) })
}

/// Analytic expected one-step log density of a correctly specified Gaussian
/// transition with variance `q`.
pub fn expected_logpdf(q: f64) -> f64 {
    -0.5 * (LN_2PI + libm::log(q) + 1.0)
}

/// Sum of one-step log densities over explicit moments (used by scoring).
pub fn score_moments(x_next: &[f64], moments: &[(f64, f64)]) -> f64 {
    compensated_sum(x_next.iter().zip(moments).map(|(x, (m, q))| gaussian_logpdf(*x, *m, *q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, stream_rng};
    use crate::series::business_days;
    use crate::synth::{simulate_1d, Init};

    fn dated(values: Vec<f64>, label: &str) -> ObservableSeries {
        let d = business_days(chrono::NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), values.len());
        ObservableSeries::new(d, values, label).unwrap()
    }

    fn field(n: usize, seed: u64) -> ObservableSeries {
        let mut rng = stream_rng(seed, 9);
        dated((0..n).map(|_| 3.0 + 0.3 * normal(&mut rng)).collect(), "logvix")
    }

    #[test]
    fn small_theta_limit() {
        let p = OuStep { theta: 1e-8, mu: 0.4, beta: 0.02, sigma: 0.01 };
        let (m, q) = exact_step(&p, 0.3, Some(2.0));
        let first_order = 0.3 + (p.theta * p.mu + p.beta * 2.0);
        assert!((m - first_order).abs() < 1e-6);
        assert!((q - p.sigma * p.sigma).abs() < 1e-6);
    }

    #[test]
    fn published_equilibrium_level() {
        let p = OuStep { theta: 0.01640, mu: -0.6256, beta: 0.00572, sigma: 0.00942 };
        let v = libm::log(20.0);
        let eq = p.mu + p.beta / p.theta * v;
        assert!((eq - 0.419).abs() < 5e-4, "{eq}");
        let (m, _) = exact_step(&p, eq, Some(v));
        assert!((m - eq).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_for_any_theta() {
        for theta in [1e-6, 0.01, 0.5, 3.0] {
            let p = OuStep { theta, mu: 0.2, beta: 0.0, sigma: 0.1 };
            assert!((exact_step(&p, 0.2, None).0 - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_loading_nests_bare_model() {
        let mut rng = stream_rng(1, 0);
        let x = dated((0..300).map(|_| 0.4 + 0.1 * normal(&mut rng)).collect(), "psi");
        let f = field(300, 2);
        let m0 = loglik(&ModelSpec::bare(Family::OuBare).unwrap(), &[0.03, 0.41, 0.02], &x).unwrap();
        let m2 = loglik(&ModelSpec::new(Family::OuField, vec![f]).unwrap(), &[0.03, 0.41, 0.0, 0.02], &x).unwrap();
        assert!((m0 - m2).abs() < 1e-12 * m0.abs().max(1.0));
    }

    #[test]
    fn three_points_term_by_term() {
        let x = dated(vec![0.30, 0.35, 0.33], "psi");
        let f = dated(vec![2.9, 3.1, 3.0], "v");
        let (theta, mu, beta, sigma) = (0.2, 0.1, 0.05, 0.03);
        let got = loglik(&ModelSpec::new(Family::OuField, vec![f.clone()]).unwrap(), &[theta, mu, beta, sigma], &x).unwrap();
        let mut want = 0.0;
        for t in 0..2 {
            let e = (-theta as f64).exp();
            let m = e * x.values[t] + (1.0 - e) * (mu + beta / theta * f.values[t]);
            let q = sigma * sigma * (1.0 - (-2.0 * theta as f64).exp()) / (2.0 * theta);
            want += (-(x.values[t + 1] - m).powi(2) / (2.0 * q)).exp().ln() - 0.5 * (2.0 * core::f64::consts::PI * q).ln();
        }
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn loglik_per_transition_matches_entropy() {
        let (theta, mu, sigma) = (0.02, 0.4, 0.01);
        let x = dated(simulate_1d(Family::OuBare, &[theta, mu, sigma], 5000, 8, &[], Init::Stationary).unwrap(), "psi");
        let l = loglik(&ModelSpec::bare(Family::OuBare).unwrap(), &[theta, mu, sigma], &x).unwrap();
        let (_, q) = exact_moments(theta, mu, 0.0, sigma, 0.0, 1.0);
        let n = 4999.0;
        // Each term is -(ln 2πq + z²)/2 with Var = 1/2.
        let band = 4.0 * (0.5f64).sqrt() / (n as f64).sqrt();
        assert!((l / n - expected_logpdf(q)).abs() < band);
    }

    #[test]
    fn state_dependent_noise_must_stay_positive() {
        let x = dated(vec![0.2, 0.5, 0.9, 0.4], "psi");
        let spec = ModelSpec::new(Family::OuFieldHetero, vec![field(4, 1)]).unwrap();
        // sigma(psi) = 0.05 - 0.08 psi first turns negative at psi = 0.9.
        let err = loglik(&spec, &[0.1, 0.4, 0.0, 0.05, -0.08], &x).unwrap_err();
        assert_eq!(err, Error::NonPositiveNoise { date: x.dates[2] });
    }

    #[test]
    fn constant_series_is_degenerate() {
        let x = dated(vec![0.4; 100], "psi");
        assert!(matches!(fit_bare(&x, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fit_is_deterministic_and_satisfies_identities() {
        let f = field(800, 4);
        let x = simulate_1d(Family::OuField, &[0.05, 0.1, 0.02, 0.01], 800, 5, &[&f.values], Init::Stationary).unwrap();
        let x = ObservableSeries::new(f.dates.clone(), x, "psi").unwrap();
        let spec = ModelSpec::new(Family::OuField, vec![f]).unwrap();
        let a = fit(&spec, &x, 3).unwrap();
        let b = fit(&spec, &x, 3).unwrap();
        assert_eq!(a, b);
        let k = a.k() as f64;
        assert_eq!(a.bic, k * (a.n_trans as f64).ln() - 2.0 * a.loglik);
        assert_eq!(a.aic, 2.0 * k - 2.0 * a.loglik);
        assert_eq!(a.n_trans, 799);
        assert!(a.converged && a.params[0] > 0.0 && a.params[3] > 0.0);
        // The closed form is the maximum: the reported loglik is reproduced.
        assert!((loglik(&spec, &a.params, &x).unwrap() - a.loglik).abs() < 1e-9);
    }

    #[test]
    fn closed_form_is_not_improved_by_local_search() {
        let f = field(600, 7);
        let x = simulate_1d(Family::OuField, &[0.08, 0.2, 0.01, 0.02], 600, 6, &[&f.values], Init::Stationary).unwrap();
        let x = ObservableSeries::new(f.dates.clone(), x, "psi").unwrap();
        let spec = ModelSpec::new(Family::OuField, vec![f]).unwrap();
        let a = fit(&spec, &x, 1).unwrap();
        let polished = crate::optimize::nelder_mead(
            |z: &[f64]| {
                let p = [z[0].exp(), z[1], z[2], z[3].exp()];
                -loglik(&spec, &p, &x).unwrap_or(f64::NEG_INFINITY)
            },
            &[a.params[0].ln(), a.params[1], a.params[2], a.params[3].ln()],
            &[0.1, 0.01, 0.001, 0.1],
            NelderMeadOptions { tol: 1e-14, max_iter: 4000 },
        );
        assert!(-polished.f <= a.loglik + 1e-7, "{} vs {}", -polished.f, a.loglik);
    }

    #[test]
    fn quartic_fits_nest_their_linear_start() {
        let f = field(1500, 11);
        let x = simulate_1d(Family::QuarticField, &[0.05, 3.0, 0.4, 0.01, 0.015], 1500, 12, &[&f.values], Init::Stationary).unwrap();
        let x = ObservableSeries::new(f.dates.clone(), x, "psi").unwrap();
        let m3 = fit(&ModelSpec::new(Family::QuarticField, vec![f.clone()]).unwrap(), &x, 2).unwrap();
        assert!(m3.converged && m3.params[1] >= 0.0);
        // Euler OU+field optimum, i.e. the quartic model at a4 = 0.
        let dx: Vec<f64> = x.values.windows(2).map(|w| w[1] - w[0]).collect();
        let ones = vec![1.0; 1499];
        let ols = Ols::fit(&[&ones, &x.values[..1499], &f.values[..1499]], &dx).unwrap();
        let a2 = -ols.coef[1];
        let lin = [a2, 0.0, ols.coef[0] / a2, ols.coef[2], (ols.rss / 1499.0).sqrt()];
        let l_lin = loglik(&ModelSpec::new(Family::QuarticField, vec![f]).unwrap(), &lin, &x).unwrap();
        assert!(m3.loglik >= l_lin - 1e-9);
        let m1 = fit(&ModelSpec::bare(Family::Quartic).unwrap(), &x, 2).unwrap();
        assert!(m1.converged && m1.params[1] >= 0.0);
    }

    #[test]
    fn heteroskedastic_fit_improves_on_constant_noise() {
        let f = field(1500, 13);
        let x = simulate_1d(Family::OuFieldHetero, &[0.05, 0.2, 0.02, 0.002, 0.03], 1500, 14, &[&f.values], Init::Fixed(0.25)).unwrap();
        let x = ObservableSeries::new(f.dates.clone(), x, "psi").unwrap();
        let het = fit(&ModelSpec::new(Family::OuFieldHetero, vec![f.clone()]).unwrap(), &x, 3).unwrap();
        assert!(het.converged);
        assert!(het.params[4] > 0.0, "sigma1 = {}", het.params[4]);
    }

    #[test]
    fn attribution_identities() {
        let a = AttributionSummary::from_rates(0.002, 0.002, 0.001);
        assert_eq!(a.scpa, 0.0);
        let b = AttributionSummary::from_rates(0.01, 0.005, 0.001);
        assert!(b.scpa < 0.0);
        assert!((b.scpa - (1.0 - b.tau_cond / b.tau_auto)).abs() < 1e-15);
    }

    #[test]
    fn attribution_rejects_different_samples() {
        let f = field(400, 1);
        let x = ObservableSeries::new(
            f.dates.clone(),
            simulate_1d(Family::OuField, &[0.05, 0.1, 0.02, 0.01], 400, 2, &[&f.values], Init::Stationary).unwrap(),
            "psi",
        )
        .unwrap();
        let short = x.slice_dates(None, Some(x.dates[300]));
        let f_short = f.slice_dates(None, Some(x.dates[300]));
        let m0 = fit_bare(&short, 1).unwrap();
        let m2 = fit_field(&x, &f, 1).unwrap();
        assert_eq!(attribution(&m0, &m2), Err(Error::SampleMismatch));
        let m2s = fit_field(&short, &f_short, 1).unwrap();
        assert!(attribution(&m0, &m2s).is_ok());
    }

    fn m2_record(theta: f64, mu: f64, beta: f64, sigma: f64) -> ModelFit {
        let x = dated(vec![0.0, 1.0], "psi");
        ModelFit::new(Family::OuField, vec!["v".into()], vec![theta, mu, beta, sigma], 0.0, 1, true, SampleId::of(&x))
    }

    #[test]
    fn mu_eff_is_affine() {
        let fit2 = m2_record(0.01640, -0.6256, 0.00572, 0.00942);
        assert!((mu_eff(&fit2, 20f64.ln()).unwrap() - 0.419).abs() < 5e-4);
        let (v1, v2) = (2.7, 3.4);
        let lhs = mu_eff(&fit2, v1).unwrap() + mu_eff(&fit2, v2).unwrap() - mu_eff(&fit2, 0.0).unwrap();
        assert!((lhs - mu_eff(&fit2, v1 + v2).unwrap()).abs() < 1e-12);
        let flat = m2_record(0.02, 0.3, 0.0, 0.01);
        assert_eq!(mu_eff(&flat, 4.0).unwrap(), 0.3);
    }

    #[test]
    fn mean_matched_data_has_central_pit() {
        let f = field(50, 3);
        let p = [0.05, 0.1, 0.02, 0.01];
        let mut x = vec![0.3];
        for t in 0..49 {
            x.push(exact_moments(p[0], p[1], p[2] * f.values[t], p[3], x[t], 1.0).0);
        }
        let x = ObservableSeries::new(f.dates.clone(), x, "psi").unwrap();
        let spec = ModelSpec::new(Family::OuField, vec![f]).unwrap();
        let rec = ModelFit::new(Family::OuField, vec!["v".into()], p.to_vec(), 0.0, 49, true, SampleId::of(&x));
        let u = pit_series(&rec, &spec, &x).unwrap();
        assert_eq!(u.len(), 49);
        assert!(u.values.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn ks_distance_of_grid_is_half_step() {
        let u: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_uniform(&u) - 0.005).abs() < 1e-15);
    }
}
