//! Model-free persistence diagnostics: autocorrelation summaries, quiet
//! regime segmentation and pooling, the episode bootstrap, field-stripped
//! residuals and bivariate Granger tests.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ModelFit;
use crate::ou::mu_eff;
use crate::rng::{stream_rng, uniform};
use crate::series::{align, Date, ObservableSeries};
use crate::special::f_sf;
use crate::stats::{compensated_sum, diff, mean, median, Ols};

/// `e⁻¹`, the e-folding threshold.
pub const EFOLD: f64 = 0.367_879_441_171_442_33;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AcfSummary {
    /// Autocorrelations at lags `0..acf.len()`.
    pub acf: Vec<f64>,
    /// First lag with `acf < e⁻¹`.
    pub efolding_lag: Option<usize>,
    /// Sum of the autocorrelations over lags 1..=60 (or the available lags).
    pub integrated_60: f64,
    pub integrated_90: f64,
}

impl AcfSummary {
    pub fn from_acf(acf: Vec<f64>) -> Self {
        let efolding_lag = acf.iter().position(|r| *r < EFOLD);
        let integrated = |l: usize| compensated_sum(acf.iter().skip(1).take(l).copied());
        Self { efolding_lag, integrated_60: integrated(60), integrated_90: integrated(90), acf }
    }

    pub fn integrated(&self, max_lag: usize) -> f64 {
        compensated_sum(self.acf.iter().skip(1).take(max_lag).copied())
    }
}

/// Biased autocorrelations (autocovariances divided by `n`, full-sample
/// mean removed) at lags `0..=max_lag`.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if x.len() <= max_lag + 1 {
        return Err(Error::InsufficientData { needed: max_lag + 2, got: x.len() });
    }
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let g0 = compensated_sum(c.iter().map(|v| v * v));
    if !(g0 > 0.0) {
        return Err(Error::Degenerate("constant series has no autocorrelation".into()));
    }
    Ok((0..=max_lag)
        .map(|l| if l == 0 { 1.0 } else { compensated_sum(c[l..].iter().zip(&c).map(|(a, b)| a * b)) / g0 })
        .collect())
}

pub fn acf_summary(x: &[f64], max_lag: usize) -> Result<AcfSummary> {
    Ok(AcfSummary::from_acf(acf(x, max_lag)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum QuietMode {
    StrictDaily,
    /// Trailing median over the given number of days.
    RollingMedian(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuietSpec {
    pub mode: QuietMode,
    pub low: f64,
    pub high: f64,
    pub min_len: usize,
}

impl QuietSpec {
    pub fn strict(low: f64, high: f64) -> Self {
        Self { mode: QuietMode::StrictDaily, low, high, min_len: 120 }
    }

    pub fn rolling(low: f64, high: f64) -> Self {
        Self { mode: QuietMode::RollingMedian(20), low, high, min_len: 120 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.low < self.high) || self.min_len == 0 {
            return Err(Error::InvalidInput("quiet band needs low < high and min_len >= 1".into()));
        }
        if self.mode == QuietMode::RollingMedian(0) {
            return Err(Error::InvalidInput("rolling median window must be positive".into()));
        }
        Ok(())
    }
}

/// Inclusive date range of a quiet episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub start: Date,
    pub end: Date,
    pub len: usize,
}

/// The statistic compared with the band on each date; `None` while the
/// trailing median window is still filling.
pub fn quiet_statistic(vix: &ObservableSeries, mode: QuietMode) -> Vec<Option<f64>> {
    match mode {
        QuietMode::StrictDaily => vix.values.iter().map(|v| Some(*v)).collect(),
        QuietMode::RollingMedian(w) => (0..vix.len())
            .map(|t| if t + 1 < w { None } else { Some(median(&vix.values[t + 1 - w..=t])) })
            .collect(),
    }
}

/// Maximal runs of dates whose statistic lies in `[low, high]`, kept when
/// at least `min_len` long.
pub fn quiet_segments(vix: &ObservableSeries, spec: &QuietSpec) -> Result<Vec<Segment>> {
    spec.validate()?;
    let stat = quiet_statistic(vix, spec.mode);
    let mut out = Vec::new();
    let mut start = None;
    for t in 0..=stat.len() {
        let inside = t < stat.len() && matches!(stat[t], Some(v) if v >= spec.low && v <= spec.high);
        match (inside, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                if t - s >= spec.min_len {
                    out.push(Segment { start: vix.dates[s], end: vix.dates[t - 1], len: t - s });
                }
                start = None;
            }
            _ => {}
        }
    }
    Ok(out)
}

fn segment_values(series: &ObservableSeries, seg: &Segment) -> Vec<f64> {
    series.dates.iter().zip(&series.values).filter(|(d, _)| **d >= seg.start && **d <= seg.end).map(|(_, v)| *v).collect()
}

fn segment_acf(x: &[f64]) -> Option<Vec<f64>> {
    if x.len() < 2 {
        return None;
    }
    acf(x, x.len() - 2).ok()
}

/// Pair-count weighted pooling of per-segment autocorrelations,
/// `ρ(ℓ) = Σ (n_s − ℓ) ρ_s(ℓ) / Σ (n_s − ℓ)`. Lags no segment can reach are
/// dropped.
fn pool(segs: &[Vec<f64>], max_lag: usize) -> Result<AcfSummary> {
    let acfs: Vec<(usize, Vec<f64>)> = segs.iter().filter_map(|x| segment_acf(x).map(|a| (x.len(), a))).collect();
    if acfs.is_empty() {
        return Err(Error::InsufficientData { needed: 2, got: 0 });
    }
    let mut pooled = Vec::with_capacity(max_lag + 1);
    for l in 0..=max_lag {
        let mut num = 0.0;
        let mut den = 0.0;
        for (n, a) in &acfs {
            if l < a.len() {
                let w = (n - l) as f64;
                num += w * a[l];
                den += w;
            }
        }
        if den == 0.0 {
            break;
        }
        pooled.push(num / den);
    }
    Ok(AcfSummary::from_acf(pooled))
}

pub fn pooled_quiet_acf(psi1: &ObservableSeries, segments: &[Segment], max_lag: usize) -> Result<AcfSummary> {
    if segments.is_empty() {
        return Err(Error::InvalidInput("no quiet segments".into()));
    }
    let segs: Vec<Vec<f64>> = segments.iter().map(|s| segment_values(psi1, s)).collect();
    pool(&segs, max_lag)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BootstrapCi {
    pub point: Option<usize>,
    pub low: usize,
    pub high: usize,
    /// Draws whose pooled ACF crossed `e⁻¹`.
    pub valid_draws: usize,
    pub draws: usize,
}

/// Nearest-rank percentile of sorted data.
fn nearest_rank(sorted: &[usize], q: f64) -> usize {
    let k = libm::ceil(q * sorted.len() as f64) as usize;
    sorted[k.clamp(1, sorted.len()) - 1]
}

/// Resamples whole quiet episodes with replacement and reports the 2.5% and
/// 97.5% percentiles of the pooled e-folding lag.
pub fn episode_bootstrap(psi1: &ObservableSeries, segments: &[Segment], max_lag: usize, draws: usize, seed: u64) -> Result<BootstrapCi> {
    let point = pooled_quiet_acf(psi1, segments, max_lag)?.efolding_lag;
    let segs: Vec<Vec<f64>> = segments.iter().map(|s| segment_values(psi1, s)).collect();
    let k = segs.len();
    let mut lags = Vec::with_capacity(draws);
    let mut pick = Vec::with_capacity(k);
    for d in 0..draws {
        let mut rng = stream_rng(seed, d as u64);
        pick.clear();
        for _ in 0..k {
            let i = ((uniform(&mut rng) * k as f64) as usize).min(k - 1);
            pick.push(segs[i].clone());
        }
        if let Ok(Some(l)) = pool(&pick, max_lag).map(|a| a.efolding_lag) {
            lags.push(l);
        }
    }
    if lags.is_empty() {
        return Err(Error::Degenerate("no bootstrap draw crossed the e-folding threshold".into()));
    }
    lags.sort_unstable();
    Ok(BootstrapCi { point, low: nearest_rank(&lags, 0.025), high: nearest_rank(&lags, 0.975), valid_draws: lags.len(), draws })
}

/// `ψ(t) − μ_eff(v_t)` on the common dates.
pub fn field_stripped_residual(fit2: &ModelFit, psi1: &ObservableSeries, field: &ObservableSeries) -> Result<ObservableSeries> {
    let pair = align(psi1, field)?;
    let values = pair.x.iter().zip(&pair.y).map(|(p, v)| mu_eff(fit2, *v).map(|m| p - m)).collect::<Result<Vec<_>>>()?;
    ObservableSeries::new(pair.dates, values, alloc::format!("{}_stripped", psi1.label))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrangerResult {
    /// `"x -> y"` using the series labels.
    pub direction: String,
    pub lag: usize,
    pub f: f64,
    pub p: f64,
    pub df1: usize,
    pub df2: usize,
    pub differenced: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrangerPair {
    pub x_to_y: GrangerResult,
    pub y_to_x: GrangerResult,
}

/// Columns `[1, target lags 1..p, source lags 1..p]` for observations `start..`.
fn lagged<'a>(target: &'a [f64], source: &'a [f64], p: usize, start: usize, with_source: bool) -> Vec<Vec<f64>> {
    let n = target.len() - start;
    let mut cols = vec![vec![1.0; n]];
    for i in 1..=p {
        cols.push(target[start - i..target.len() - i].to_vec());
    }
    if with_source {
        for i in 1..=p {
            cols.push(source[start - i..source.len() - i].to_vec());
        }
    }
    cols
}

fn ols_on(target: &[f64], source: &[f64], p: usize, start: usize, with_source: bool) -> Result<Ols> {
    let cols = lagged(target, source, p, start, with_source);
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    Ols::fit(&refs, &target[start..])
}

/// Lag order minimizing the AIC of the unrestricted bivariate VAR(p),
/// `n ln|Σ̂| + 2K`, with every order scored on the same observations.
pub fn select_var_lag(x: &[f64], y: &[f64], max_lag: usize) -> Result<usize> {
    let mut best = (0, f64::INFINITY);
    for p in 1..=max_lag {
        let ex = ols_on(x, y, p, max_lag, true)?.resid;
        let ey = ols_on(y, x, p, max_lag, true)?.resid;
        let n = ex.len() as f64;
        let sxx = compensated_sum(ex.iter().map(|e| e * e)) / n;
        let syy = compensated_sum(ey.iter().map(|e| e * e)) / n;
        let sxy = compensated_sum(ex.iter().zip(&ey).map(|(a, b)| a * b)) / n;
        let det = sxx * syy - sxy * sxy;
        if !(det > 0.0) {
            return Err(Error::Singular("VAR residual covariance".into()));
        }
        let aic = n * libm::log(det) + 2.0 * (2 * (2 * p + 1)) as f64;
        if aic < best.1 {
            best = (p, aic);
        }
    }
    Ok(best.0)
}

/// F test that the lags of `source` add nothing to `target`'s own lags.
pub fn granger_f(target: &[f64], source: &[f64], p: usize) -> Result<(f64, usize, usize)> {
    let r = ols_on(target, source, p, p, false)?;
    let u = ols_on(target, source, p, p, true)?;
    let df2 = u.n - u.k;
    let f = ((r.rss - u.rss) / p as f64) / (u.rss / df2 as f64);
    Ok((f.max(0.0), p, df2))
}

/// Both Granger directions at a shared lag order chosen by VAR AIC.
pub fn granger(x: &ObservableSeries, y: &ObservableSeries, max_lag: usize, differenced: bool) -> Result<GrangerPair> {
    if max_lag == 0 {
        return Err(Error::InvalidInput("max_lag must be at least 1".into()));
    }
    let pair = align(x, y)?;
    let (a, b) = if differenced { (diff(&pair.x), diff(&pair.y)) } else { (pair.x.clone(), pair.y.clone()) };
    if a.len() <= 3 * max_lag {
        return Err(Error::InsufficientData { needed: 3 * max_lag + 1, got: a.len() });
    }
    let lag = select_var_lag(&a, &b, max_lag)?;
    let run = |target: &[f64], source: &[f64], label: String| -> Result<GrangerResult> {
        let (f, df1, df2) = granger_f(target, source, lag)?;
        Ok(GrangerResult { direction: label, lag, f, p: f_sf(f, df1 as f64, df2 as f64), df1, df2, differenced })
    };
    Ok(GrangerPair {
        x_to_y: run(&b, &a, alloc::format!("{} -> {}", x.label, y.label))?,
        y_to_x: run(&a, &b, alloc::format!("{} -> {}", y.label, x.label))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal;
    use crate::series::business_days;
    use crate::synth::default_start;

    fn series(v: Vec<f64>) -> ObservableSeries {
        ObservableSeries::new(business_days(default_start(), v.len()), v, "s").unwrap()
    }

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        let mut x = vec![0.0];
        for _ in 1..n {
            let last = *x.last().unwrap();
            x.push(phi * last + normal(&mut rng));
        }
        x
    }

    #[test]
    fn acf_basics() {
        let s = acf_summary(&ar1(0.0, 2000, 1), 120).unwrap();
        assert_eq!(s.acf[0], 1.0);
        assert_eq!(s.efolding_lag, Some(1));
        assert!(s.acf.iter().all(|r| r.abs() <= 1.0));
        assert!((s.integrated_60 - s.acf[1..=60].iter().sum::<f64>()).abs() < 1e-12);
        assert!(acf_summary(&[1.0; 200], 10).is_err());
    }

    #[test]
    fn strict_band_on_constant_series() {
        let v = series(vec![16.0; 300]);
        let segs = quiet_segments(&v, &QuietSpec::strict(15.0, 18.0)).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len, 300);
    }

    #[test]
    fn excursions_every_hundred_days_break_segments() {
        let v = series((0..600).map(|t| if t % 100 == 99 { 25.0 } else { 16.0 }).collect());
        assert!(quiet_segments(&v, &QuietSpec::strict(15.0, 18.0)).unwrap().is_empty());
    }

    #[test]
    fn segments_match_brute_force_scan() {
        let mut rng = stream_rng(5, 0);
        let mut v = vec![16.0];
        for _ in 1..3000 {
            let last: f64 = *v.last().unwrap();
            v.push(last + 0.02 * (16.5 - last) + 0.6 * normal(&mut rng));
        }
        let s = series(v.clone());
        for spec in [QuietSpec::strict(15.0, 18.0), QuietSpec { min_len: 30, ..QuietSpec::rolling(14.0, 19.0) }] {
            let got = quiet_segments(&s, &spec).unwrap();
            let stat = quiet_statistic(&s, spec.mode);
            let inside = |t: usize| matches!(stat[t], Some(x) if x >= spec.low && x <= spec.high);
            // Every (i, j) run that is maximal and long enough.
            let mut want = Vec::new();
            for i in 0..v.len() {
                if !inside(i) || (i > 0 && inside(i - 1)) {
                    continue;
                }
                let mut j = i;
                while j + 1 < v.len() && inside(j + 1) {
                    j += 1;
                }
                if j + 1 - i >= spec.min_len {
                    want.push((s.dates[i], s.dates[j]));
                }
            }
            assert_eq!(got.iter().map(|g| (g.start, g.end)).collect::<Vec<_>>(), want);
        }
    }

    #[test]
    fn pooling_identities() {
        let x = ar1(0.9, 800, 2);
        let s = series(x.clone());
        let whole = Segment { start: s.dates[0], end: s.dates[799], len: 800 };
        let pooled = pooled_quiet_acf(&s, &[whole], 60).unwrap();
        let direct = acf_summary(&x, 60).unwrap();
        for (a, b) in pooled.acf.iter().zip(&direct.acf) {
            assert!((a - b).abs() < 1e-12);
        }
        let twice = pooled_quiet_acf(&s, &[whole, whole], 60).unwrap();
        for (a, b) in twice.acf.iter().zip(&direct.acf) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_with_one_segment_collapses() {
        let x = ar1(0.9, 600, 3);
        let s = series(x);
        let seg = Segment { start: s.dates[0], end: s.dates[599], len: 600 };
        let ci = episode_bootstrap(&s, &[seg], 60, 50, 1).unwrap();
        assert_eq!(Some(ci.low), ci.point);
        assert_eq!(Some(ci.high), ci.point);
    }

    #[test]
    fn planted_direction_is_recovered() {
        let n = 5000;
        let mut rng = stream_rng(7, 0);
        let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let mut y = vec![0.0];
        for t in 1..n {
            y.push(0.3 * x[t - 1] + normal(&mut rng));
        }
        let g = granger(&series(x), &series(y), 10, false).unwrap();
        assert!(g.x_to_y.p < 1e-6);
        assert!(g.y_to_x.p > 0.01, "{}", g.y_to_x.p);
    }

    #[test]
    fn identical_series_are_collinear() {
        let x = series(ar1(0.5, 500, 4));
        assert!(matches!(granger(&x, &x, 5, false), Err(Error::Singular(_))));
    }
}
