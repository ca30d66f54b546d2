//! Level-orthogonal residual of the observable, the quadrant partition of the
//! (log VIX, residual) plane and the Q2-versus-Q3 forward-change test.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::series::{align, Date, ObservableSeries};
use crate::special::{ln_choose, normal_sf};
use crate::stats::{mean, median, Ols};

#[derive(Debug, Clone, PartialEq)]
pub struct OrthoResidual {
    pub residual: ObservableSeries,
    pub a: f64,
    pub b: f64,
    /// Standard errors of `(a, b)`.
    pub se: [f64; 2],
}

/// `ε⊥ = ψ − (a + b log VIX)` by least squares on the common dates.
pub fn orthogonal_residual(psi1: &ObservableSeries, log_vix: &ObservableSeries) -> Result<OrthoResidual> {
    let pair = align(psi1, log_vix)?;
    if pair.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: pair.len() });
    }
    let ones = vec![1.0; pair.len()];
    let ols = Ols::fit(&[&ones, &pair.y], &pair.x)?;
    let se = ols.std_errors();
    Ok(OrthoResidual {
        residual: ObservableSeries::new(pair.dates, ols.resid.clone(), "eps_perp")?,
        a: ols.coef[0],
        b: ols.coef[1],
        se: [se[0], se[1]],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Quadrant {
    /// High VIX, positive residual.
    Q1,
    /// Low VIX, positive residual.
    Q2,
    /// Low VIX, negative residual.
    Q3,
    /// High VIX, negative residual.
    Q4,
}

impl Quadrant {
    pub fn name(&self) -> &'static str {
        match self {
            Quadrant::Q1 => "Q1",
            Quadrant::Q2 => "Q2",
            Quadrant::Q3 => "Q3",
            Quadrant::Q4 => "Q4",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantLabels {
    pub dates: Vec<Date>,
    pub labels: Vec<Quadrant>,
    pub vix_median: f64,
}

impl QuadrantLabels {
    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for l in &self.labels {
            c[*l as usize] += 1;
        }
        c
    }
}

/// Splits at the sample median of log VIX (the median itself counts as
/// low) and at the sign of the residual (zero counts as negative).
pub fn quadrant_labels(log_vix: &ObservableSeries, residual: &ObservableSeries) -> Result<QuadrantLabels> {
    let pair = align(log_vix, residual)?;
    let m = median(&pair.x);
    let labels = pair
        .x
        .iter()
        .zip(&pair.y)
        .map(|(v, e)| match (*v <= m, *e > 0.0) {
            (false, true) => Quadrant::Q1,
            (true, true) => Quadrant::Q2,
            (true, false) => Quadrant::Q3,
            (false, false) => Quadrant::Q4,
        })
        .collect();
    Ok(QuadrantLabels { dates: pair.dates, labels, vix_median: m })
}

/// How the forward change of the field is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ChangeKind {
    /// `log VIX(t+h) − log VIX(t)`.
    #[default]
    Log,
    /// `VIX(t+h) − VIX(t)`.
    Level,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MannWhitney {
    /// `#{(a, b): a > b} + ½ #{a = b}` over first-sample `a`, second-sample `b`.
    pub u: f64,
    /// One-sided p-value for the first sample being larger.
    pub p: f64,
    pub rank_biserial: f64,
    pub exact: bool,
}

/// Total size at or below which the exact permutation law is used.
pub const MW_EXACT_MAX: usize = 50;

/// Distinct values with their first- and second-sample counts, ascending.
fn tie_groups(a: &[f64], b: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut all: Vec<(f64, bool)> = a.iter().map(|v| (*v, true)).chain(b.iter().map(|v| (*v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (v, first) in all {
        match groups.last_mut() {
            Some(g) if g.0 == v => {
                if first {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((v, first as usize, (!first) as usize)),
        }
    }
    groups
}

/// Upper tail `P(U ≥ u)` under random assignment of the pooled values,
/// with ties kept in place. Works on `2U`, which is an integer.
fn exact_upper_tail(groups: &[(f64, usize, usize)], n1: usize, u: f64) -> f64 {
    let n: usize = groups.iter().map(|g| g.1 + g.2).sum();
    let n2 = n - n1;
    let max2u = 2 * n1 * n2;
    // ways[k][s]: assignments of the groups seen so far with k values in the
    // first sample and 2U = s.
    let mut ways = vec![vec![0.0f64; max2u + 1]; n1 + 1];
    ways[0][0] = 1.0;
    let mut seen = 0;
    for g in groups {
        let t = g.1 + g.2;
        let mut next = vec![vec![0.0f64; max2u + 1]; n1 + 1];
        for k in 0..=n1.min(seen) {
            let below2 = seen - k;
            for s in 0..=max2u {
                let w = ways[k][s];
                if w == 0.0 {
                    continue;
                }
                for a in 0..=t.min(n1 - k) {
                    if t - a > n2 - below2.min(n2) {
                        continue;
                    }
                    // Each first-sample value beats every earlier second-sample
                    // value and ties with the t − a in its own group.
                    let add = 2 * a * below2 + a * (t - a);
                    let c = libm::round(libm::exp(ln_choose(t as u64, a as u64)));
                    next[k + a][s + add] += w * c;
                }
            }
        }
        ways = next;
        seen += t;
    }
    let target = libm::round(2.0 * u) as usize;
    let total: f64 = ways[n1].iter().sum();
    let tail: f64 = ways[n1][target.min(max2u + 1)..].iter().sum();
    tail / total
}

/// Tie-corrected normal approximation of `P(U ≥ u)` with continuity
/// correction.
fn normal_upper_tail(groups: &[(f64, usize, usize)], n1: usize, u: f64) -> f64 {
    let n: usize = groups.iter().map(|g| g.1 + g.2).sum();
    let nn = (n1 * (n - n1)) as f64;
    let nf = n as f64;
    let ties: f64 = groups.iter().map(|g| { let t = (g.1 + g.2) as f64; t * t * t - t }).sum();
    let var = nn / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    normal_sf((u - nn / 2.0 - 0.5) / libm::sqrt(var))
}

/// One-sided Mann–Whitney test of `a` stochastically larger than `b`.
///
/// Exact permutation law (ties included) when `a.len() + b.len() ≤ 50`,
/// otherwise the tie-corrected normal approximation with continuity
/// correction.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (n1, n2) = (a.len(), b.len());
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    let groups = tie_groups(a, b);
    let n = n1 + n2;
    let nn = (n1 * n2) as f64;
    let exact = n <= MW_EXACT_MAX;
    let p = if exact { exact_upper_tail(&groups, n1, u) } else { normal_upper_tail(&groups, n1, u) };
    Ok(MannWhitney { u, p: p.clamp(0.0, 1.0), rank_biserial: 2.0 * u / nn - 1.0, exact })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadrantTest {
    pub horizon: usize,
    pub n_q2: usize,
    pub n_q3: usize,
    pub mean_q2: f64,
    pub mean_q3: f64,
    pub u: f64,
    pub mw_p: f64,
    pub rank_biserial: f64,
    pub exact: bool,
}

/// Forward change of the field after Q2 days versus Q3 days, for each
/// horizon. Overlapping windows are kept.
pub fn horizon_test(labels: &QuadrantLabels, log_vix: &ObservableSeries, horizons: &[usize], change: ChangeKind) -> Result<Vec<QuadrantTest>> {
    // Field values on the label dates.
    let mut lv = Vec::with_capacity(labels.dates.len());
    let mut j = 0;
    for d in &labels.dates {
        while j < log_vix.len() && log_vix.dates[j] < *d {
            j += 1;
        }
        if j == log_vix.len() || log_vix.dates[j] != *d {
            return Err(Error::InvalidInput(alloc::format!("no field value on {d}")));
        }
        lv.push(log_vix.values[j]);
    }
    let level = |x: f64| match change {
        ChangeKind::Log => x,
        ChangeKind::Level => libm::exp(x),
    };
    horizons
        .iter()
        .map(|&h| {
            if h == 0 || h >= lv.len() {
                return Err(Error::InsufficientData { needed: h + 1, got: lv.len() });
            }
            let mut q2 = Vec::new();
            let mut q3 = Vec::new();
            for t in 0..lv.len() - h {
                let d = level(lv[t + h]) - level(lv[t]);
                match labels.labels[t] {
                    Quadrant::Q2 => q2.push(d),
                    Quadrant::Q3 => q3.push(d),
                    _ => {}
                }
            }
            if q2.is_empty() {
                return Err(Error::EmptyGroup("Q2"));
            }
            if q3.is_empty() {
                return Err(Error::EmptyGroup("Q3"));
            }
            let mw = mann_whitney(&q2, &q3)?;
            Ok(QuadrantTest {
                horizon: h,
                n_q2: q2.len(),
                n_q3: q3.len(),
                mean_q2: mean(&q2),
                mean_q3: mean(&q3),
                u: mw.u,
                mw_p: mw.p,
                rank_biserial: mw.rank_biserial,
                exact: mw.exact,
            })
        })
        .collect()
}
