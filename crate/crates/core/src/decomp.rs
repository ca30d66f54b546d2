//! Split of the field into a mechanical part (portfolio volatility rebuilt
//! from realized correlations with frozen stock volatilities) and an
//! informational residual, with the static R² split and standalone M2 fits.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market::{CorrelationWindow, VolatilityPanel};
use crate::ou::{fit_bare, fit_field};
use crate::series::{align_all, Date, ObservableSeries};
use crate::stats::{mean, median, pearson, Ols};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Freeze {
    FullMedian,
    FullMean,
    /// Median over the sample dates strictly before the given date.
    PreSplitMedian(Date),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Weights {
    Equal,
    /// `w_i ∝ 1/s̃_i`.
    InverseVol,
    /// `w_i ∝ s̃_i`.
    VolShare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecompRecipe {
    pub freeze: Freeze,
    pub weights: Weights,
}

impl DecompRecipe {
    pub const BASELINE: DecompRecipe = DecompRecipe { freeze: Freeze::FullMedian, weights: Weights::Equal };

    pub fn name(&self) -> String {
        let f = match self.freeze {
            Freeze::FullMedian => String::from("full_median"),
            Freeze::FullMean => String::from("full_mean"),
            Freeze::PreSplitMedian(d) => alloc::format!("median_before_{d}"),
        };
        let w = match self.weights {
            Weights::Equal => "equal",
            Weights::InverseVol => "inverse_vol",
            Weights::VolShare => "vol_share",
        };
        alloc::format!("{f}/{w}")
    }
}

/// Three freezes with equal weights, then inverse-vol and vol-share weights
/// on the full-sample median.
pub fn default_recipes(split: Date) -> Vec<DecompRecipe> {
    vec![
        DecompRecipe::BASELINE,
        DecompRecipe { freeze: Freeze::FullMean, weights: Weights::Equal },
        DecompRecipe { freeze: Freeze::PreSplitMedian(split), weights: Weights::Equal },
        DecompRecipe { freeze: Freeze::FullMedian, weights: Weights::InverseVol },
        DecompRecipe { freeze: Freeze::FullMedian, weights: Weights::VolShare },
    ]
}

/// Frozen volatilities and normalized weights for the given sample rows.
pub fn frozen_vols(vol: &VolatilityPanel, rows: &[usize], recipe: &DecompRecipe) -> Result<(Vec<f64>, Vec<f64>)> {
    let pick = |rows: &[usize]| -> Vec<Vec<f64>> { vol.vol.iter().map(|s| rows.iter().map(|&r| s[r]).collect()).collect() };
    let frozen: Vec<f64> = match recipe.freeze {
        Freeze::FullMedian => pick(rows).iter().map(|s| median(s)).collect(),
        Freeze::FullMean => pick(rows).iter().map(|s| mean(s)).collect(),
        Freeze::PreSplitMedian(d) => {
            let pre: Vec<usize> = rows.iter().copied().filter(|&r| vol.dates[r] < d).collect();
            if pre.is_empty() || pre.len() == rows.len() {
                return Err(Error::InvalidInput(alloc::format!("freeze split {d} is outside the sample")));
            }
            pick(&pre).iter().map(|s| median(s)).collect()
        }
    };
    if frozen.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Degenerate("frozen volatility is not positive".into()));
    }
    let raw: Vec<f64> = match recipe.weights {
        Weights::Equal => vec![1.0; frozen.len()],
        Weights::InverseVol => frozen.iter().map(|s| 1.0 / s).collect(),
        Weights::VolShare => frozen.clone(),
    };
    let total: f64 = raw.iter().sum();
    Ok((frozen, raw.iter().map(|w| w / total).collect()))
}

/// `VIX_mech(t) = c √(Σᵢⱼ wᵢ wⱼ s̃ᵢ s̃ⱼ C_ij(t))` on the dates where the
/// volatility panel, the correlation windows and `vix` all exist, with `c`
/// matching the sample mean of `vix` there.
pub fn mechanical_proxy(vol: &VolatilityPanel, corrs: &[CorrelationWindow], vix: &ObservableSeries, recipe: &DecompRecipe) -> Result<ObservableSeries> {
    let n = vol.vol.len();
    // Walk the three date lists together.
    let (mut i, mut j, mut k) = (0, 0, 0);
    let mut rows = Vec::new();
    while i < vol.dates.len() && j < corrs.len() && k < vix.len() {
        let (a, b, c) = (vol.dates[i], corrs[j].end_date, vix.dates[k]);
        let m = a.max(b).max(c);
        if a == m && b == m && c == m {
            rows.push((i, j, k));
            i += 1;
            j += 1;
            k += 1;
        } else {
            if a < m {
                i += 1;
            }
            if b < m {
                j += 1;
            }
            if c < m {
                k += 1;
            }
        }
    }
    if rows.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: rows.len() });
    }
    let vol_rows: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let (frozen, w) = frozen_vols(vol, &vol_rows, recipe)?;
    let ws: Vec<f64> = (0..n).map(|a| w[a] * frozen[a]).collect();
    let mut level = Vec::with_capacity(rows.len());
    for &(_, jc, _) in &rows {
        let cw = &corrs[jc];
        if cw.n != n {
            return Err(Error::InvalidInput("correlation and volatility panels differ in size".into()));
        }
        let mut v = 0.0;
        for a in 0..n {
            for b in 0..n {
                v += ws[a] * ws[b] * cw.get(a, b);
            }
        }
        if !(v > 0.0) {
            return Err(Error::Numerical(alloc::format!("mechanical variance {v} on {}", cw.end_date)));
        }
        level.push(libm::sqrt(v));
    }
    let target = mean(&rows.iter().map(|r| vix.values[r.2]).collect::<Vec<_>>());
    let c = target / mean(&level);
    ObservableSeries::new(rows.iter().map(|r| vix.dates[r.2]).collect(), level.iter().map(|v| c * v).collect(), "vix_mech")
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoResidual {
    pub residual: ObservableSeries,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Standard errors of `(gamma0, gamma1)`.
    pub se: [f64; 2],
}

/// Least-squares residual of `log_vix` on the log mechanical proxy, over
/// their common dates.
pub fn informational_residual(log_vix: &ObservableSeries, log_mech: &ObservableSeries) -> Result<InfoResidual> {
    let s = align_all(&[log_vix, log_mech])?;
    if s[0].len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: s[0].len() });
    }
    let ones = vec![1.0; s[0].len()];
    let ols = Ols::fit(&[&ones, &s[1].values], &s[0].values)?;
    let se = ols.std_errors();
    Ok(InfoResidual {
        residual: ObservableSeries::new(s[0].dates.clone(), ols.resid.clone(), "vix_info")?,
        gamma0: ols.coef[0],
        gamma1: ols.coef[1],
        se: [se[0], se[1]],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct R2Split {
    pub r2_mech: f64,
    pub r2_full: f64,
    pub f_mech: f64,
    pub f_info: f64,
}

/// Fractions of shared explanatory power from the two R² values.
pub fn fractions(r2_mech: f64, r2_full: f64) -> Result<R2Split> {
    if !(r2_full > 0.0) {
        return Err(Error::Degenerate("full-model R² is zero".into()));
    }
    let f_mech = r2_mech / r2_full;
    Ok(R2Split { r2_mech, r2_full, f_mech, f_info: 1.0 - f_mech })
}

/// Sequential regressions `ψ ~ 1 + m` and `ψ ~ 1 + m + r`.
pub fn r2_split(psi1: &ObservableSeries, mech_log: &ObservableSeries, info: &ObservableSeries) -> Result<R2Split> {
    let s = align_all(&[psi1, mech_log, info])?;
    let ones = vec![1.0; s[0].len()];
    let r2_mech = Ols::fit(&[&ones, &s[1].values], &s[0].values)?.r2();
    let r2_full = Ols::fit(&[&ones, &s[1].values, &s[2].values], &s[0].values)?.r2();
    fractions(r2_mech, r2_full)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecompResult {
    pub mech_fraction: f64,
    pub info_fraction: f64,
    pub r2_full: f64,
    pub r2_mech: f64,
    /// BIC(M0) − BIC(M2) with each field, on the common sample.
    pub dbic_mech_only: f64,
    pub dbic_info_only: f64,
    pub dbic_actual: f64,
    /// Correlation of ψ with the informational field after both are
    /// residualized on the mechanical field.
    pub partial_residual_corr: f64,
    pub n_obs: usize,
}

/// M0 and three M2 fits (actual, mechanical-only, informational-only field)
/// on the dates shared by all four series.
pub fn standalone_field_fits(
    psi1: &ObservableSeries,
    actual: &ObservableSeries,
    mech: &ObservableSeries,
    info: &ObservableSeries,
    seed: u64,
) -> Result<DecompResult> {
    let s = align_all(&[psi1, actual, mech, info])?;
    let (psi, act, mec, inf) = (&s[0], &s[1], &s[2], &s[3]);
    let split = r2_split(psi, mec, inf)?;
    let bic0 = fit_bare(psi, seed)?.bic;
    let gain = |f: &ObservableSeries| fit_field(psi, f, seed).map(|m| bic0 - m.bic);
    let ones = vec![1.0; psi.len()];
    let rp = Ols::fit(&[&ones, &mec.values], &psi.values)?.resid;
    let ri = Ols::fit(&[&ones, &mec.values], &inf.values)?.resid;
    Ok(DecompResult {
        mech_fraction: split.f_mech,
        info_fraction: split.f_info,
        r2_full: split.r2_full,
        r2_mech: split.r2_mech,
        dbic_actual: gain(act)?,
        dbic_mech_only: gain(mec)?,
        dbic_info_only: gain(inf)?,
        partial_residual_corr: pearson(&rp, &ri),
        n_obs: psi.len(),
    })
}

/// Proxy, residual and standalone fits for one recipe. `vix` is in levels;
/// the field entering every regression and fit is its logarithm.
pub fn decompose(
    psi1: &ObservableSeries,
    vix: &ObservableSeries,
    vol: &VolatilityPanel,
    corrs: &[CorrelationWindow],
    recipe: &DecompRecipe,
    seed: u64,
) -> Result<DecompResult> {
    let mech = mechanical_proxy(vol, corrs, vix, recipe)?.ln()?;
    let log_vix = vix.ln()?;
    let info = informational_residual(&log_vix, &mech)?;
    standalone_field_fits(psi1, &log_vix, &mech, &info.residual, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub recipe: DecompRecipe,
    pub result: core::result::Result<DecompResult, Error>,
}

impl GridRow {
    /// Informational field helps and the mechanical field does not.
    pub fn signs_hold(&self) -> bool {
        matches!(&self.result, Ok(r) if r.dbic_info_only > 0.0 && r.dbic_mech_only <= 0.0)
    }
}

/// One row per recipe; a failing recipe is recorded without stopping the grid.
pub fn recipe_grid(
    psi1: &ObservableSeries,
    vix: &ObservableSeries,
    vol: &VolatilityPanel,
    corrs: &[CorrelationWindow],
    recipes: &[DecompRecipe],
    seed: u64,
) -> Result<Vec<GridRow>> {
    if recipes.is_empty() {
        return Err(Error::InvalidInput("no decomposition recipes".into()));
    }
    Ok(recipes.iter().map(|r| GridRow { recipe: *r, result: decompose(psi1, vix, vol, corrs, r, seed) }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{rolling_correlation, rolling_volatility};
    use crate::series::business_days;
    use crate::synth::default_start;

    fn window(n: usize, f: impl Fn(usize, usize) -> f64, day: usize) -> CorrelationWindow {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = if i == j { 1.0 } else { f(i, j) };
            }
        }
        CorrelationWindow { end_date: business_days(default_start(), day + 1)[day], n, matrix: m }
    }

    fn vols(n: usize, t: usize) -> VolatilityPanel {
        VolatilityPanel {
            dates: business_days(default_start(), t),
            vol: (0..n).map(|i| (0..t).map(|k| 0.01 * (1.0 + i as f64) * (1.0 + 0.1 * (k % 3) as f64)).collect()).collect(),
        }
    }

    fn vix(t: usize) -> ObservableSeries {
        ObservableSeries::new(business_days(default_start(), t), (0..t).map(|k| 15.0 + (k % 7) as f64).collect(), "vix").unwrap()
    }

    #[test]
    fn rank_one_correlation_gives_constant_proxy() {
        let t = 20;
        let corrs: Vec<_> = (0..t).map(|d| window(4, |_, _| 1.0, d)).collect();
        let p = mechanical_proxy(&vols(4, t), &corrs, &vix(t), &DecompRecipe::BASELINE).unwrap();
        assert!(p.values.iter().all(|v| (v - p.values[0]).abs() < 1e-12));
        assert!((mean(&p.values) - mean(&vix(t).values)).abs() < 1e-10);
    }

    #[test]
    fn proxy_matches_double_sum_oracle() {
        let t = 30;
        let n = 4;
        let corrs: Vec<_> = (0..t).map(|d| window(n, |i, j| 0.1 + 0.02 * ((i + j + d) % 5) as f64, d)).collect();
        let vp = vols(n, t);
        for recipe in default_recipes(business_days(default_start(), t)[10]) {
            let p = mechanical_proxy(&vp, &corrs, &vix(t), &recipe).unwrap();
            let rows: Vec<usize> = (0..t).collect();
            let (s, w) = frozen_vols(&vp, &rows, &recipe).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let raw: Vec<f64> = corrs
                .iter()
                .map(|c| {
                    let mut v = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            v += w[i] * w[j] * s[i] * s[j] * c.get(i, j);
                        }
                    }
                    v.sqrt()
                })
                .collect();
            let c = mean(&vix(t).values) / mean(&raw);
            for (a, b) in p.values.iter().zip(&raw) {
                assert!((a - c * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_correlation_is_the_diagonal_case() {
        let t = 5;
        let n = 3;
        let corrs: Vec<_> = (0..t).map(|d| window(n, |_, _| 0.0, d)).collect();
        let vp = vols(n, t);
        let p = mechanical_proxy(&vp, &corrs, &vix(t), &DecompRecipe::BASELINE).unwrap();
        assert!(p.values.iter().all(|v| (v - p.values[0]).abs() < 1e-12));
    }

    #[test]
    fn split_outside_sample_is_rejected() {
        let t = 10;
        let corrs: Vec<_> = (0..t).map(|d| window(2, |_, _| 0.3, d)).collect();
        let r = DecompRecipe { freeze: Freeze::PreSplitMedian(default_start()), weights: Weights::Equal };
        assert!(mechanical_proxy(&vols(2, t), &corrs, &vix(t), &r).is_err());
    }

    #[test]
    fn fractions_from_reported_r2() {
        let f = fractions(0.5505, 0.7120).unwrap();
        assert!((f.f_mech - 0.7732).abs() < 5e-5);
        assert!((f.f_info - 0.2268).abs() < 5e-5);
        assert_eq!(f.f_mech + f.f_info, 1.0);
        assert!(fractions(0.0, 0.0).is_err());
    }

    #[test]
    fn affine_field_has_zero_residual() {
        let d = business_days(default_start(), 50);
        let m: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let a: Vec<f64> = m.iter().map(|v| 2.0 + 0.5 * v).collect();
        let r = informational_residual(&ObservableSeries::new(d.clone(), a, "a").unwrap(), &ObservableSeries::new(d, m, "m").unwrap()).unwrap();
        assert!(r.residual.values.iter().all(|e| e.abs() < 1e-12));
        assert!((r.gamma1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn residual_is_orthogonal_to_proxy() {
        let d = business_days(default_start(), 80);
        let m: Vec<f64> = (0..80).map(|i| (i as f64 * 0.21).cos()).collect();
        let a: Vec<f64> = (0..80).map(|i| m[i] + (i as f64 * 1.3).sin()).collect();
        let ms = ObservableSeries::new(d.clone(), m.clone(), "m").unwrap();
        let r = informational_residual(&ObservableSeries::new(d, a, "a").unwrap(), &ms).unwrap();
        assert!(pearson(&r.residual.values, &m).abs() < 1e-10);
        let split = r2_split(&ms, &ms, &r.residual).unwrap();
        assert!((split.f_mech - 1.0).abs() < 1e-10);
    }

    #[test]
    fn planted_market_grid_runs() {
        let cfg = crate::synth::PlantedMarketConfig { n_days: 900, ..Default::default() };
        let w = crate::synth::planted_market(&cfg, 3).unwrap();
        let corrs = rolling_correlation(&w.panel, 60).unwrap();
        let psi = crate::market::psi1_series(&w.panel, 60).unwrap();
        let vp = rolling_volatility(&w.panel, 60).unwrap();
        let split = w.panel.dates[500];
        let grid = recipe_grid(&psi, &w.vix, &vp, &corrs, &default_recipes(split), 1).unwrap();
        assert_eq!(grid.len(), 5);
        for row in &grid {
            let r = row.result.as_ref().unwrap();
            assert!(0.0 <= r.r2_mech && r.r2_mech <= r.r2_full + 1e-12 && r.r2_full <= 1.0);
        }
        let again = recipe_grid(&psi, &w.vix, &vp, &corrs, &[default_recipes(split)[0]; 2], 1).unwrap();
        assert_eq!(again[0], again[1]);
    }
}
