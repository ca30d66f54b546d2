//! Two-state Hamilton filter for mean-switching OU models.
//!
//! Both states share `theta`, `sigma` and the field loading `beta`; only the
//! equilibrium mean switches. Each transition uses the exact OU step with
//! the mean of the state active over that interval. The first interval's
//! state is drawn from the stationary distribution of the chain.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Family, ModelFit, SampleId};
use crate::ou::{box_multistart, exact_moments, fit_bare, fit_field, gaussian_logpdf};
use crate::series::ObservableSeries;
use crate::special::chi2_sf;
use crate::stats::std_dev;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegimeParams {
    pub theta: f64,
    pub mu_calm: f64,
    pub mu_stress: f64,
    /// Field loading; zero for the field-free model.
    pub beta: f64,
    pub sigma: f64,
    /// Per-day probability of leaving the calm state.
    pub p_cs: f64,
    /// Per-day probability of leaving the stress state.
    pub p_sc: f64,
}

impl RegimeParams {
    pub fn from_vec(family: Family, p: &[f64]) -> Result<Self> {
        match family {
            Family::RegimeSwitch if p.len() == 6 => Ok(Self {
                theta: p[0],
                mu_calm: p[1],
                mu_stress: p[2],
                beta: 0.0,
                sigma: p[3],
                p_cs: p[4],
                p_sc: p[5],
            }),
            Family::RegimeSwitchField if p.len() == 7 => Ok(Self {
                theta: p[0],
                mu_calm: p[1],
                mu_stress: p[2],
                beta: p[3],
                sigma: p[4],
                p_cs: p[5],
                p_sc: p[6],
            }),
            _ => Err(Error::InvalidInput("not a regime parameter vector".into())),
        }
    }

    pub fn to_vec(&self, with_field: bool) -> Vec<f64> {
        let mut v = vec![self.theta, self.mu_calm, self.mu_stress];
        if with_field {
            v.push(self.beta);
        }
        v.extend([self.sigma, self.p_cs, self.p_sc]);
        v
    }

    /// Stationary probability of the calm state.
    pub fn stationary_calm(&self) -> f64 {
        self.p_sc / (self.p_cs + self.p_sc)
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.theta, self.mu_calm, self.mu_stress, self.beta, self.sigma, self.p_cs, self.p_sc]
            .iter()
            .all(|v| v.is_finite());
        let probs = (0.0..=1.0).contains(&self.p_cs) && (0.0..=1.0).contains(&self.p_sc) && self.p_cs + self.p_sc > 0.0;
        if finite && self.theta > 0.0 && self.sigma > 0.0 && probs {
            Ok(())
        } else {
            Err(Error::InvalidInput("regime parameters outside their domain".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub loglik: f64,
    /// `P(state of interval t = calm, stress | data through t + 1)`, one per
    /// transition.
    pub filtered: Vec<[f64; 2]>,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(libm::exp(a - m) + libm::exp(b - m))
}

fn ln_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        libm::log(p)
    } else {
        f64::NEG_INFINITY
    }
}

/// Forward filter in log space.
pub fn hamilton_loglik(p: &RegimeParams, x: &[f64], field: Option<&[f64]>) -> Result<FilterOutput> {
    p.validate()?;
    if x.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: x.len() });
    }
    if let Some(f) = field {
        if f.len() != x.len() {
            return Err(Error::SampleMismatch);
        }
    }
    let lp = [
        [ln_or_neg_inf(1.0 - p.p_cs), ln_or_neg_inf(p.p_cs)],
        [ln_or_neg_inf(p.p_sc), ln_or_neg_inf(1.0 - p.p_sc)],
    ];
    let pi_c = p.stationary_calm();
    let mut pred = [ln_or_neg_inf(pi_c), ln_or_neg_inf(1.0 - pi_c)];
    let mus = [p.mu_calm, p.mu_stress];
    let mut loglik = 0.0;
    let mut filtered = Vec::with_capacity(x.len() - 1);
    for t in 0..x.len() - 1 {
        let bv = field.map_or(0.0, |f| p.beta * f[t]);
        let mut joint = [0.0; 2];
        for s in 0..2 {
            let (m, q) = exact_moments(p.theta, mus[s], bv, p.sigma, x[t], 1.0);
            joint[s] = pred[s] + gaussian_logpdf(x[t + 1], m, q);
        }
        let ll = log_sum_exp(joint[0], joint[1]);
        if !ll.is_finite() {
            return Err(Error::Numerical(alloc::format!("filter likelihood not finite at step {t}")));
        }
        loglik += ll;
        let f = [joint[0] - ll, joint[1] - ll];
        filtered.push([libm::exp(f[0]), libm::exp(f[1])]);
        pred = [log_sum_exp(f[0] + lp[0][0], f[1] + lp[1][0]), log_sum_exp(f[0] + lp[0][1], f[1] + lp[1][1])];
    }
    if loglik.is_nan() {
        return Err(Error::Numerical("NaN log likelihood".into()));
    }
    Ok(FilterOutput { loglik, filtered })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegimeStats {
    pub expected_calm_days: f64,
    pub expected_stress_days: f64,
    pub stationary_calm: f64,
    pub stationary_stress: f64,
    pub calm_relaxation_days: f64,
}

pub fn regime_stats(p: &RegimeParams) -> RegimeStats {
    let pc = p.stationary_calm();
    RegimeStats {
        expected_calm_days: 1.0 / p.p_cs,
        expected_stress_days: 1.0 / p.p_sc,
        stationary_calm: pc,
        stationary_stress: 1.0 - pc,
        calm_relaxation_days: 1.0 / p.theta,
    }
}

/// Fitting options for the regime models.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RsOptions {
    /// Fix the stress-state mean instead of estimating it. The parameter
    /// count is left unchanged, so BIC stays conservative.
    pub pin_mu_stress: Option<f64>,
}

/// Box on the state means: the observable's range without a field; with a
/// field the intercept is a level shift and is allowed to go negative.
pub fn mean_bounds(with_field: bool) -> (f64, f64) {
    if with_field {
        (-1.0, 1.0)
    } else {
        (0.0, 1.0)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

pub fn fit_rs(with_field: bool, series: &ObservableSeries, field: Option<&ObservableSeries>, seed: u64) -> Result<ModelFit> {
    fit_rs_with(with_field, series, field, seed, RsOptions::default())
}

pub fn fit_rs_with(
    with_field: bool,
    series: &ObservableSeries,
    field: Option<&ObservableSeries>,
    seed: u64,
    opts: RsOptions,
) -> Result<ModelFit> {
    let field = match (with_field, field) {
        (true, Some(f)) => {
            if f.dates != series.dates {
                return Err(Error::SampleMismatch);
            }
            Some(f)
        }
        (true, None) => return Err(Error::InvalidInput("field model needs a field".into())),
        (false, _) => None,
    };
    // The single-regime fit is both a degeneracy check and the start.
    let base = match field {
        Some(f) => fit_field(series, f, seed)?,
        None => fit_bare(series, seed)?,
    };
    let x = &series.values;
    let fv = field.map(|f| f.values.as_slice());
    let (lo_mu, hi_mu) = mean_bounds(with_field);
    let span = hi_mu - lo_mu;
    let to_mu = |z: f64| lo_mu + span * sigmoid(z);
    let from_mu = |m: f64| logit(((m - lo_mu) / span).clamp(1e-4, 1.0 - 1e-4));
    let theta0 = base.params[0];
    let sigma0 = *base.params.last().expect("sigma");
    let beta0 = if with_field { base.params[2] } else { 0.0 };
    let pin = opts.pin_mu_stress;
    if let Some(m) = pin {
        if !(lo_mu..=hi_mu).contains(&m) {
            return Err(Error::InvalidInput("pinned stress mean outside the mean bounds".into()));
        }
    }

    // Internal coordinates: ln θ, z_calm, z_stress, [β], ln σ, logit p_cs, logit p_sc.
    let to_params = |z: &[f64]| -> RegimeParams {
        let o = usize::from(with_field);
        RegimeParams {
            theta: libm::exp(z[0]),
            mu_calm: to_mu(z[1]),
            mu_stress: pin.unwrap_or_else(|| to_mu(z[2])),
            beta: if with_field { z[3] } else { 0.0 },
            sigma: libm::exp(z[3 + o]),
            p_cs: sigmoid(z[4 + o]),
            p_sc: sigmoid(z[5 + o]),
        }
    };
    let obj = |z: &[f64]| match hamilton_loglik(&to_params(z), x, fv) {
        Ok(o) => -o.loglik,
        Err(_) => f64::INFINITY,
    };
    let mu_base = base.params[1].clamp(lo_mu + 0.01 * span, hi_mu - 0.01 * span);
    let mut first = vec![libm::log(theta0), from_mu(mu_base), from_mu((mu_base + 0.2 * span).min(hi_mu - 0.01 * span))];
    let mut lo = vec![libm::log(theta0) - 1.0, -3.0, -3.0];
    let mut hi = vec![libm::log(theta0) + 1.0, 3.0, 3.0];
    if with_field {
        let w = 2.0 * beta0.abs() + 0.5 * std_dev(x) / std_dev(fv.expect("field")) * theta0;
        first.push(beta0);
        lo.push(beta0 - w);
        hi.push(beta0 + w);
    }
    let ls = libm::log(sigma0);
    first.extend([ls, logit(0.02), logit(0.3)]);
    lo.extend([ls - 0.5, logit(0.002), logit(0.01)]);
    hi.extend([ls + 0.5, logit(0.3), logit(0.95)]);
    let (z, f, converged) = box_multistart(obj, &lo, &hi, Some(first), seed)?;
    let mut p = to_params(&z);
    // Canonical labels: calm is the lower-mean state.
    if pin.is_none() && p.mu_calm > p.mu_stress {
        core::mem::swap(&mut p.mu_calm, &mut p.mu_stress);
        core::mem::swap(&mut p.p_cs, &mut p.p_sc);
    }
    let family = if with_field { Family::RegimeSwitchField } else { Family::RegimeSwitch };
    let labels: Vec<String> = field.iter().map(|f| f.label.clone()).collect();
    Ok(ModelFit::new(family, labels, p.to_vec(with_field), -f, x.len() - 1, converged, SampleId::of(series)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LrtResult {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
}

/// Likelihood-ratio test of a nested fit against a fuller one.
pub fn lrt(nested: &ModelFit, full: &ModelFit) -> Result<LrtResult> {
    if nested.sample != full.sample {
        return Err(Error::SampleMismatch);
    }
    if full.k() < nested.k() {
        return Err(Error::InvalidInput("full model has fewer parameters than the nested one".into()));
    }
    if full.loglik < nested.loglik - 1e-6 {
        return Err(Error::NestingViolation { nested: nested.loglik, full: full.loglik });
    }
    let chi2 = (2.0 * (full.loglik - nested.loglik)).max(0.0);
    let df = full.k() - nested.k();
    let p = if df == 0 { 1.0 } else { chi2_sf(chi2, df as f64) };
    Ok(LrtResult { chi2, df, p })
}
