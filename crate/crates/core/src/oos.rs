//! Anchored chronological holdouts and the return-window sweep.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market::{psi1_series, ReturnPanel};
use crate::model::{Family, ModelFit, ModelSpec};
use crate::ou::{attribution, fit_bare, fit_field, loglik};
use crate::series::{align, AlignedPair, Date, ObservableSeries};

/// Minimum observations on each side of a split.
pub const MIN_SIDE: usize = 100;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitResult {
    /// Requested calendar date.
    pub nominal: Date,
    /// First trading date on or after `nominal`; the first test observation.
    pub split_date: Date,
    pub n_train: usize,
    pub n_test: usize,
    /// Test transitions actually scored.
    pub n_scored: usize,
    pub m0_train_ll_per_obs: f64,
    pub m2_train_ll_per_obs: f64,
    pub m0_test_ll_per_obs: f64,
    pub m2_test_ll_per_obs: f64,
    /// `m2_test_ll_per_obs − m0_test_ll_per_obs`.
    pub gap: f64,
    /// M2 test over train log likelihood per observation.
    pub m2_ratio: f64,
    pub m0_params: Vec<f64>,
    pub m2_params: Vec<f64>,
}

/// Index ranges `[from, to]` of the pair whose internal transitions are
/// scored. The first range starts at the last training observation so the
/// first test value is scored; ranges after an excluded stretch start at
/// their own first value.
fn test_segments(pair: &AlignedPair, split: usize, exclusion: Option<(Date, Date)>) -> Vec<(usize, usize)> {
    let keep = |t: usize| match exclusion {
        Some((a, b)) => pair.dates[t] < a || pair.dates[t] > b,
        None => true,
    };
    let mut out = Vec::new();
    let mut t = split;
    let n = pair.len();
    while t < n {
        if !keep(t) {
            t += 1;
            continue;
        }
        let start = t;
        while t + 1 < n && keep(t + 1) {
            t += 1;
        }
        let from = if start == split { split - 1 } else { start };
        if t > from {
            out.push((from, t));
        }
        t += 1;
    }
    out
}

fn sub(pair: &AlignedPair, from: usize, to: usize) -> Result<(ObservableSeries, ObservableSeries)> {
    let d = pair.dates[from..=to].to_vec();
    Ok((
        ObservableSeries::new(d.clone(), pair.x[from..=to].to_vec(), pair.x_label.clone())?,
        ObservableSeries::new(d, pair.y[from..=to].to_vec(), pair.y_label.clone())?,
    ))
}

/// Sum of exact one-step log densities over the given segments, at frozen
/// parameters.
fn score(fit: &ModelFit, pair: &AlignedPair, segments: &[(usize, usize)]) -> Result<f64> {
    let mut total = 0.0;
    for &(from, to) in segments {
        let (psi, field) = sub(pair, from, to)?;
        let spec = match fit.family {
            Family::OuBare => ModelSpec::bare(Family::OuBare)?,
            f => ModelSpec::new(f, alloc::vec![field])?,
        };
        total += loglik(&spec, &fit.params, &psi)?;
    }
    Ok(total)
}

/// Fits M0 and M2 on each prefix and scores the suffix with the frozen
/// parameters. `exclusion` removes an inclusive date range from every test
/// suffix; the pieces on either side are scored separately.
pub fn anchored_oos(
    psi1: &ObservableSeries,
    field: &ObservableSeries,
    split_dates: &[Date],
    seed: u64,
    exclusion: Option<(Date, Date)>,
) -> Result<Vec<SplitResult>> {
    let pair = align(psi1, field)?;
    let n = pair.len();
    split_dates
        .iter()
        .map(|&nominal| {
            let split = pair.dates.iter().position(|d| *d >= nominal).unwrap_or(n);
            let too_small = |side, got| Error::SplitTooSmall { split: nominal, side, got, needed: MIN_SIDE };
            if split < MIN_SIDE {
                return Err(too_small("train", split));
            }
            if n - split < MIN_SIDE {
                return Err(too_small("test", n - split));
            }
            let segments = test_segments(&pair, split, exclusion);
            let n_scored: usize = segments.iter().map(|(a, b)| b - a).sum();
            if n_scored == 0 {
                return Err(too_small("test", 0));
            }
            let (psi_tr, field_tr) = sub(&pair, 0, split - 1)?;
            let m0 = fit_bare(&psi_tr, seed)?;
            let m2 = fit_field(&psi_tr, &field_tr, seed)?;
            let per = |ll: f64, k: usize| ll / k as f64;
            let m0_test = per(score(&m0, &pair, &segments)?, n_scored);
            let m2_test = per(score(&m2, &pair, &segments)?, n_scored);
            let m0_train = per(m0.loglik, m0.n_trans);
            let m2_train = per(m2.loglik, m2.n_trans);
            Ok(SplitResult {
                nominal,
                split_date: pair.dates[split],
                n_train: split,
                n_test: n - split,
                n_scored,
                m0_train_ll_per_obs: m0_train,
                m2_train_ll_per_obs: m2_train,
                m0_test_ll_per_obs: m0_test,
                m2_test_ll_per_obs: m2_test,
                gap: m2_test - m0_test,
                m2_ratio: m2_test / m2_train,
                m0_params: m0.params,
                m2_params: m2.params,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowRow {
    pub window: usize,
    pub n_obs: usize,
    pub theta0: f64,
    pub tau0: f64,
    pub theta: f64,
    pub tau_cond: f64,
    pub beta: f64,
    pub chi: f64,
    pub scpa: f64,
    /// BIC(M0) − BIC(M2).
    pub dbic: f64,
}

/// M0 and M2 fits of the observable rebuilt from raw returns at each
/// window, against log VIX on the common dates.
pub fn window_sweep(panel: &ReturnPanel, vix: &ObservableSeries, windows: &[usize], seed: u64) -> Result<Vec<WindowRow>> {
    let log_vix = vix.ln()?;
    windows
        .iter()
        .map(|&w| {
            let psi = psi1_series(panel, w)?;
            let pair = align(&psi, &log_vix)?;
            let (p, v) = (pair.x_series(), pair.y_series());
            let m0 = fit_bare(&p, seed)?;
            let m2 = fit_field(&p, &v, seed)?;
            let a = attribution(&m0, &m2)?;
            Ok(WindowRow {
                window: w,
                n_obs: pair.len(),
                theta0: m0.params[0],
                tau0: a.tau_auto,
                theta: m2.params[0],
                tau_cond: a.tau_cond,
                beta: m2.params[2],
                chi: a.chi,
                scpa: a.scpa,
                dbic: m0.bic - m2.bic,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::business_days;
    use crate::synth::{default_start, ou_path, simulate_1d, Init};

    fn world(n: usize, seed: u64) -> (ObservableSeries, ObservableSeries) {
        let d = business_days(default_start(), n);
        let v = ou_path(0.05, 3.0, 0.08, n, seed);
        let x = simulate_1d(Family::OuField, &[0.03, -0.6, 0.01, 0.01], n, seed + 1, &[&v], Init::Stationary).unwrap();
        (ObservableSeries::new(d.clone(), x, "psi").unwrap(), ObservableSeries::new(d, v, "v").unwrap())
    }

    #[test]
    fn minimal_boundary_split_and_identities() {
        let (psi, v) = world(600, 1);
        let split = psi.dates[600 - MIN_SIDE];
        let r = &anchored_oos(&psi, &v, &[split], 3, None).unwrap()[0];
        assert_eq!(r.n_train + r.n_test, 600);
        assert_eq!(r.n_test, MIN_SIDE);
        assert_eq!(r.n_scored, MIN_SIDE);
        assert_eq!(r.gap, r.m2_test_ll_per_obs - r.m0_test_ll_per_obs);
        let late = psi.dates[600 - MIN_SIDE + 1];
        assert!(matches!(anchored_oos(&psi, &v, &[late], 3, None), Err(Error::SplitTooSmall { side: "test", .. })));
    }

    #[test]
    fn exclusion_splits_scoring() {
        let (psi, v) = world(800, 2);
        let split = psi.dates[400];
        let gap = (psi.dates[500], psi.dates[549]);
        let r = &anchored_oos(&psi, &v, &[split], 3, Some(gap)).unwrap()[0];
        // 100 scored values before the gap, 249 transitions after it.
        assert_eq!(r.n_scored, 100 + 249);
        let all = (psi.dates[400], psi.dates[799]);
        assert!(anchored_oos(&psi, &v, &[split], 3, Some(all)).is_err());
    }

    #[test]
    fn segment_scores_add_up() {
        let (psi, v) = world(700, 4);
        let pair = align(&psi, &v).unwrap();
        let m2 = fit_field(&psi, &v, 1).unwrap();
        let segs = test_segments(&pair, 300, Some((psi.dates[450], psi.dates[460])));
        assert_eq!(segs, alloc::vec![(299, 449), (461, 699)]);
        let whole = score(&m2, &pair, &segs).unwrap();
        let parts: f64 = segs.iter().map(|s| score(&m2, &pair, &[*s]).unwrap()).sum();
        assert!((whole - parts).abs() < 1e-9);
    }
}
