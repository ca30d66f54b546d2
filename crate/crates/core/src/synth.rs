//! Ground-truth generators: exact and sub-stepped simulators for every model
//! family, a Monte-Carlo Euler oracle for one-day transition moments, and a
//! planted market world whose collective observable is driven by a hidden
//! informational field.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market::ReturnPanel;
use crate::model::Family;
use crate::ou::{check_params, exact_moments};
use crate::regime::RegimeParams;
use crate::rng::{derive_seed, normal, stream_rng, uniform, SimRng};
use crate::series::{business_days, AlignedPair, Date, ObservableSeries};
use crate::twod::LinearSystem2D;
use crate::stats::compensated_sum;

/// Default first calendar date of synthetic series.
pub fn default_start() -> Date {
    NaiveDate::from_ymd_opt(2004, 1, 2).expect("valid date")
}

/// Sub-step used for families without a closed-form transition.
pub const EULER_DT: f64 = 1e-3;

const EXPLOSION: f64 = 1e6;

/// Simulation accepts the closed limits `theta = 0` and `sigma = 0` that a
/// likelihood cannot.
fn check_sim_params(family: Family, p: &[f64]) -> Result<()> {
    let mut q = p.to_vec();
    if family.is_exact_ou() {
        let last = q.len() - 1;
        if q[0] == 0.0 {
            q[0] = 1.0;
        }
        if q[last] == 0.0 {
            q[last] = 1.0;
        }
    }
    check_params(family, &q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Stationary draw (OU families) or the equilibrium level (others).
    Stationary,
    Fixed(f64),
}

fn drift_noise(family: Family, p: &[f64], psi: f64, v: &[f64]) -> (f64, f64) {
    match family {
        Family::OuFieldHetero => (-p[0] * (psi - p[1]) + p[2] * v[0], p[3] + p[4] * psi),
        Family::Quartic => {
            let d = psi - p[2];
            (-p[0] * d - p[1] * d * d * d, p[3])
        }
        Family::QuarticField => {
            let d = psi - p[2];
            (-p[0] * d - p[1] * d * d * d + p[3] * v[0], p[4])
        }
        _ => unreachable!("exact families are stepped in closed form"),
    }
}

/// Simulates `n` daily observations of a one-dimensional family.
///
/// OU families use the exact daily law; the quartic and heteroskedastic
/// families use Euler–Maruyama with [`EULER_DT`] sub-steps. `fields[j][t]` is
/// held constant over day `t`.
pub fn simulate_1d(family: Family, params: &[f64], n: usize, seed: u64, fields: &[&[f64]], init: Init) -> Result<Vec<f64>> {
    if family.is_regime() {
        return Err(Error::InvalidInput("use simulate_regime for regime models".into()));
    }
    check_sim_params(family, params)?;
    if fields.len() != family.n_fields() {
        return Err(Error::InvalidInput("field count does not match the family".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if fields.iter().any(|f| f.len() < n) {
        return Err(Error::InsufficientData { needed: n, got: fields.iter().map(|f| f.len()).min().unwrap_or(0) });
    }
    let mut rng = stream_rng(seed, 0);
    let mut v = vec![0.0; fields.len()];
    let load = |v: &mut Vec<f64>, t: usize| {
        for (j, f) in fields.iter().enumerate() {
            v[j] = f[t];
        }
    };
    load(&mut v, 0);
    let mut x = Vec::with_capacity(n);
    if family.is_exact_ou() {
        let m = family.n_fields();
        let (theta, mu, sigma) = (params[0], params[1], params[params.len() - 1]);
        let bv = |v: &[f64]| -> f64 { (0..m).map(|j| params[2 + j] * v[j]).sum() };
        let x0 = match init {
            Init::Fixed(a) => a,
            Init::Stationary if theta > 0.0 => mu + bv(&v) / theta + sigma / libm::sqrt(2.0 * theta) * normal(&mut rng),
            Init::Stationary => mu,
        };
        x.push(x0);
        for t in 0..n - 1 {
            load(&mut v, t);
            let (mean, var) = exact_moments(theta, mu, bv(&v), sigma, x[t], 1.0);
            x.push(mean + libm::sqrt(var) * normal(&mut rng));
        }
        return Ok(x);
    }
    let mu = match family {
        Family::Quartic | Family::QuarticField => params[2],
        _ => params[1],
    };
    let mut psi = match init {
        Init::Fixed(a) => a,
        Init::Stationary => mu,
    };
    x.push(psi);
    let steps = libm::round(1.0 / EULER_DT) as usize;
    let sq = libm::sqrt(EULER_DT);
    for t in 0..n - 1 {
        load(&mut v, t);
        for _ in 0..steps {
            let (a, s) = drift_noise(family, params, psi, &v);
            psi += a * EULER_DT + s * sq * normal(&mut rng);
        }
        if !psi.is_finite() || psi.abs() > EXPLOSION {
            return Err(Error::Explosive(t + 1));
        }
        x.push(psi);
    }
    Ok(x)
}

/// [`simulate_1d`] wrapped as a dated series on a weekday calendar.
pub fn simulate_series(
    family: Family,
    params: &[f64],
    n: usize,
    seed: u64,
    fields: &[&ObservableSeries],
    init: Init,
    label: &str,
) -> Result<ObservableSeries> {
    let raw: Vec<&[f64]> = fields.iter().map(|f| f.values.as_slice()).collect();
    let x = simulate_1d(family, params, n, seed, &raw, init)?;
    let dates = match fields.first() {
        Some(f) => f.dates[..n].to_vec(),
        None => business_days(default_start(), n),
    };
    ObservableSeries::new(dates, x, label)
}

/// Stationary OU path, the default synthetic field (for example log VIX).
pub fn ou_path(theta: f64, mu: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    simulate_1d(Family::OuBare, &[theta, mu, sigma], n, seed, &[], Init::Stationary).expect("valid OU parameters")
}

/// Simulates `n` daily observations of the two-dimensional system with its
/// exact daily transition, starting from a stationary draw.
pub fn simulate_var1(system: &LinearSystem2D, n: usize, seed: u64) -> Result<AlignedPair> {
    if !system.is_stable() {
        return Err(Error::Unstable);
    }
    let d = system.discretize(1.0);
    let chol = |m: [[f64; 2]; 2]| -> Result<[f64; 3]> {
        let l11 = libm::sqrt(m[0][0]);
        if !(l11 > 0.0) {
            return Err(Error::InvalidInput(String::from("diffusion must be positive definite")));
        }
        let l21 = m[1][0] / l11;
        let r = m[1][1] - l21 * l21;
        if !(r > 0.0) {
            return Err(Error::InvalidInput(String::from("diffusion must be positive definite")));
        }
        Ok([l11, l21, libm::sqrt(r)])
    };
    let lq = chol(d.innovation_cov)?;
    let l0 = chol(system.stationary_cov()?)?;
    let mut rng = stream_rng(seed, 0);
    let (z1, z2) = (normal(&mut rng), normal(&mut rng));
    let mut s = [system.mean[0] + l0[0] * z1, system.mean[1] + l0[1] * z1 + l0[2] * z2];
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let phi = d.transition;
    let c = d.intercept;
    for _ in 0..n {
        x.push(s[0]);
        y.push(s[1]);
        let (z1, z2) = (normal(&mut rng), normal(&mut rng));
        s = [
            c[0] + phi[0][0] * s[0] + phi[0][1] * s[1] + lq[0] * z1,
            c[1] + phi[1][0] * s[0] + phi[1][1] * s[1] + lq[1] * z1 + lq[2] * z2,
        ];
    }
    Ok(AlignedPair { dates: business_days(default_start(), n), x, y, x_label: String::from("psi"), y_label: String::from("v") })
}

/// Simulates the two-state mean-switching model; returns the path and the
/// state (0 calm, 1 stress) active over each transition.
pub fn simulate_regime(p: &RegimeParams, n: usize, seed: u64, field: Option<&[f64]>, x0: f64) -> Result<(Vec<f64>, Vec<u8>)> {
    if let Some(f) = field {
        if f.len() < n {
            return Err(Error::InsufficientData { needed: n, got: f.len() });
        }
    }
    let mut rng = stream_rng(seed, 0);
    let mut s: u8 = if uniform(&mut rng) < p.stationary_calm() { 0 } else { 1 };
    let mut x = vec![x0];
    let mut states = Vec::with_capacity(n.saturating_sub(1));
    for t in 0..n.saturating_sub(1) {
        if t > 0 {
            let leave = if s == 0 { p.p_cs } else { p.p_sc };
            if uniform(&mut rng) < leave {
                s = 1 - s;
            }
        }
        states.push(s);
        let mu = if s == 0 { p.mu_calm } else { p.mu_stress };
        let bv = field.map_or(0.0, |f| p.beta * f[t]);
        let (m, q) = exact_moments(p.theta, mu, bv, p.sigma, x[t], 1.0);
        x.push(m + libm::sqrt(q) * normal(&mut rng));
    }
    Ok((x, states))
}

/// Monte-Carlo moments of the state one day ahead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMoments {
    pub mean: f64,
    pub var: f64,
    pub se_mean: f64,
    pub se_var: f64,
    pub n_paths: usize,
}

/// Euler–Maruyama oracle: `n_paths` independent paths from `psi0` over one
/// day with step `dt`, field values `v` held fixed. Each path has its own
/// random stream, so the result does not depend on evaluation order.
pub fn euler_oracle(family: Family, params: &[f64], psi0: f64, v: &[f64], n_paths: usize, dt: f64, seed: u64) -> Result<OracleMoments> {
    check_sim_params(family, params)?;
    if v.len() != family.n_fields() || family.is_regime() {
        return Err(Error::InvalidInput("euler oracle needs a one-dimensional family with matching fields".into()));
    }
    if n_paths < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n_paths });
    }
    let steps = libm::round(1.0 / dt) as usize;
    let sq = libm::sqrt(dt);
    let drift_sigma = |psi: f64| -> (f64, f64) {
        match family {
            Family::OuBare => (-params[0] * (psi - params[1]), params[2]),
            Family::OuField => (-params[0] * (psi - params[1]) + params[2] * v[0], params[3]),
            Family::OuMultiField(m) => {
                let bv: f64 = (0..m).map(|j| params[2 + j] * v[j]).sum();
                (-params[0] * (psi - params[1]) + bv, params[2 + m])
            }
            f => drift_noise(f, params, psi, v),
        }
    };
    let ends: Vec<f64> = (0..n_paths)
        .map(|i| {
            let mut rng: SimRng = stream_rng(seed, i as u64);
            let mut psi = psi0;
            for _ in 0..steps {
                let (a, s) = drift_sigma(psi);
                psi += a * dt + s * sq * normal(&mut rng);
            }
            psi
        })
        .collect();
    let n = n_paths as f64;
    let mean = compensated_sum(ends.iter().copied()) / n;
    let m2 = compensated_sum(ends.iter().map(|e| (e - mean) * (e - mean))) / n;
    let m4 = compensated_sum(ends.iter().map(|e| libm::pow(e - mean, 4.0))) / n;
    let var = m2 * n / (n - 1.0);
    Ok(OracleMoments {
        mean,
        var,
        se_mean: libm::sqrt(var / n),
        se_var: libm::sqrt((m4 - m2 * m2).max(0.0) / n),
        n_paths,
    })
}

/// Settings of the planted market world.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMarketConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    /// Relaxation rate of the hidden informational field.
    pub info_theta: f64,
    /// Baseline pairwise correlation of the factor model.
    pub base_corr: f64,
    /// Swing of the correlation with the informational field.
    pub corr_swing: f64,
    /// Loading of log VIX on the informational field.
    pub vix_info_loading: f64,
    /// Idiosyncratic noise in log VIX.
    pub vix_noise: f64,
    /// Window used to build the mechanical part of VIX.
    pub vix_window: usize,
}

impl Default for PlantedMarketConfig {
    fn default() -> Self {
        Self {
            n_stocks: 12,
            n_days: 2400,
            info_theta: 1.0 / 25.0,
            base_corr: 0.3,
            corr_swing: 0.25,
            vix_info_loading: 0.35,
            vix_noise: 0.05,
            vix_window: 60,
        }
    }
}

/// A synthetic market: return panel, VIX-like field and the hidden drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMarket {
    pub panel: ReturnPanel,
    /// Daily prices that generate `panel` (one row per stock, first date
    /// included), for writing price files.
    pub prices: Vec<Vec<f64>>,
    pub price_dates: Vec<Date>,
    pub vix: ObservableSeries,
    /// Hidden informational field on the panel's dates.
    pub info: Vec<f64>,
    /// Planted instantaneous pairwise correlation.
    pub corr: Vec<f64>,
}

/// Builds a one-factor return panel whose pairwise correlation follows a
/// hidden informational field, plus a VIX series equal to the portfolio
/// volatility implied by the trailing correlation times `exp(loading*info)`.
///
/// The collective observable therefore inherits its slow motion from the
/// informational field, while the mechanical part of VIX only reflects
/// realized co-movement.
pub fn planted_market(cfg: &PlantedMarketConfig, seed: u64) -> Result<PlantedMarket> {
    let n = cfg.n_stocks;
    let t_len = cfg.n_days;
    if n < 2 || t_len <= cfg.vix_window + 1 {
        return Err(Error::InvalidInput("planted market too small".into()));
    }
    let info = ou_path(cfg.info_theta, 0.0, libm::sqrt(2.0 * cfg.info_theta), t_len, derive_seed(seed, 1));
    let corr: Vec<f64> = info
        .iter()
        .map(|u| (cfg.base_corr + cfg.corr_swing * libm::tanh(*u)).clamp(0.01, 0.95))
        .collect();
    let mut rng = stream_rng(derive_seed(seed, 2), 0);
    let vols: Vec<f64> = (0..n).map(|_| 0.01 + 0.015 * uniform(&mut rng)).collect();
    let mut returns = vec![Vec::with_capacity(t_len); n];
    for t in 0..t_len {
        let f = normal(&mut rng);
        let a = libm::sqrt(corr[t]);
        let b = libm::sqrt(1.0 - corr[t]);
        for (i, r) in returns.iter_mut().enumerate() {
            r.push(vols[i] * (a * f + b * normal(&mut rng)));
        }
    }
    // VIX: equal-weight portfolio volatility under the trailing mean planted
    // correlation, annualized, times the informational multiplier.
    let w = cfg.vix_window;
    let s1: f64 = vols.iter().sum::<f64>() / n as f64;
    let s2: f64 = vols.iter().map(|s| s * s).sum::<f64>() / (n * n) as f64;
    let mut vix = Vec::with_capacity(t_len);
    let mut run = 0.0;
    for t in 0..t_len {
        run += corr[t];
        if t >= w {
            run -= corr[t - w];
        }
        let rho = run / (t.min(w - 1) + 1) as f64;
        let port_var = rho * (s1 * s1 - s2) + s2;
        let mech = 100.0 * libm::sqrt(252.0 * port_var);
        let e = cfg.vix_noise * normal(&mut rng);
        vix.push(mech * libm::exp(cfg.vix_info_loading * info[t] + e));
    }
    let price_dates = business_days(default_start(), t_len + 1);
    let dates = price_dates[1..].to_vec();
    let mut prices = Vec::with_capacity(n);
    for r in &returns {
        let mut p = vec![100.0];
        for x in r {
            let last = *p.last().expect("non-empty");
            p.push(last * libm::exp(*x));
        }
        prices.push(p);
    }
    let tickers: Vec<String> = (0..n).map(|i| format!("S{i:03}")).collect();
    let panel = ReturnPanel::from_returns(tickers, dates.clone(), returns)?;
    Ok(PlantedMarket {
        panel,
        prices,
        price_dates,
        vix: ObservableSeries::new(dates, vix, "vix")?,
        info,
        corr,
    })
}
