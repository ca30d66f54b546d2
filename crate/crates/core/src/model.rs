//! Model descriptions and fitted-model records shared by the likelihood
//! modules.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{Error, Result};
use crate::series::{Date, ObservableSeries};

/// One-dimensional model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Family {
    /// Bare Ornstein–Uhlenbeck (M0).
    OuBare,
    /// OU with a field-shifted equilibrium (M2).
    OuField,
    /// M2 drift with noise scale `sigma0 + sigma1 * psi` (M2′).
    OuFieldHetero,
    /// Quartic-potential drift without a field (M1).
    Quartic,
    /// Quartic drift plus a linear field term (M3).
    QuarticField,
    /// OU with several additive field loadings.
    OuMultiField(usize),
    /// Two-state regime switching in the mean (M_RS,c).
    RegimeSwitch,
    /// Regime switching plus a continuous field loading (M_RS,c+field).
    RegimeSwitchField,
}

impl Family {
    pub fn n_fields(&self) -> usize {
        match self {
            Family::OuBare | Family::Quartic | Family::RegimeSwitch => 0,
            Family::OuField | Family::OuFieldHetero | Family::QuarticField | Family::RegimeSwitchField => 1,
            Family::OuMultiField(m) => *m,
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            Family::OuBare => &["theta", "mu", "sigma"],
            Family::OuField => &["theta", "mu", "beta", "sigma"],
            Family::OuFieldHetero => &["theta", "mu", "beta", "sigma0", "sigma1"],
            Family::Quartic => &["a2", "a4", "mu", "sigma"],
            Family::QuarticField => &["a2", "a4", "mu", "beta", "sigma"],
            Family::RegimeSwitch => &["theta", "mu_calm", "mu_stress", "sigma", "p_cs", "p_sc"],
            Family::RegimeSwitchField => &["theta", "mu_calm", "mu_stress", "beta", "sigma", "p_cs", "p_sc"],
            Family::OuMultiField(m) => {
                let mut v = vec![String::from("theta"), String::from("mu")];
                for j in 1..=*m {
                    v.push(format!("beta{j}"));
                }
                v.push(String::from("sigma"));
                return v;
            }
        };
        names.iter().map(|s| String::from(*s)).collect()
    }

    /// Free-parameter count used by the information criteria.
    pub fn n_params(&self) -> usize {
        match self {
            Family::OuBare => 3,
            Family::OuField => 4,
            Family::OuFieldHetero => 5,
            Family::Quartic => 4,
            Family::QuarticField => 5,
            Family::OuMultiField(m) => 3 + m,
            Family::RegimeSwitch => 6,
            Family::RegimeSwitchField => 7,
        }
    }

    /// Families whose one-day transition is the exact OU law.
    pub fn is_exact_ou(&self) -> bool {
        matches!(self, Family::OuBare | Family::OuField | Family::OuMultiField(_))
    }

    pub fn is_regime(&self) -> bool {
        matches!(self, Family::RegimeSwitch | Family::RegimeSwitchField)
    }

    pub fn label(&self) -> String {
        match self {
            Family::OuBare => "M0".into(),
            Family::OuField => "M2".into(),
            Family::OuFieldHetero => "M2'".into(),
            Family::Quartic => "M1".into(),
            Family::QuarticField => "M3".into(),
            Family::OuMultiField(m) => format!("OU+{m}F"),
            Family::RegimeSwitch => "M_RS,c".into(),
            Family::RegimeSwitchField => "M_RS,c+F".into(),
        }
    }
}

/// A model family together with the field series it conditions on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub fields: Vec<ObservableSeries>,
    /// Observation interval in trading days.
    pub dt: f64,
}

impl ModelSpec {
    pub fn new(family: Family, fields: Vec<ObservableSeries>) -> Result<Self> {
        if fields.len() != family.n_fields() {
            return Err(Error::InvalidInput(format!(
                "{} takes {} field(s), got {}",
                family.label(),
                family.n_fields(),
                fields.len()
            )));
        }
        Ok(Self { family, fields, dt: 1.0 })
    }

    pub fn bare(family: Family) -> Result<Self> {
        Self::new(family, Vec::new())
    }

    /// Checks that every field sits on the observable's calendar and
    /// returns the raw field values.
    pub(crate) fn field_values<'a>(&'a self, series: &ObservableSeries) -> Result<Vec<&'a [f64]>> {
        if series.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: series.len() });
        }
        self.fields
            .iter()
            .map(|f| {
                if f.dates != series.dates {
                    Err(Error::SampleMismatch)
                } else {
                    Ok(f.values.as_slice())
                }
            })
            .collect()
    }
}

/// Identifies the estimation sample so fits can be checked for comparability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleId {
    pub first: Date,
    pub last: Date,
    pub n_obs: usize,
    pub fingerprint: u64,
}

impl SampleId {
    pub fn of(series: &ObservableSeries) -> Self {
        // FNV-1a over value bits.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &series.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        Self {
            first: series.dates[0],
            last: *series.dates.last().expect("non-empty"),
            n_obs: series.len(),
            fingerprint: h,
        }
    }
}

/// A fitted one-dimensional model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelFit {
    pub family: Family,
    pub field_labels: Vec<String>,
    pub params: Vec<f64>,
    pub loglik: f64,
    pub n_trans: usize,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub sample: SampleId,
}

impl ModelFit {
    pub fn new(
        family: Family,
        field_labels: Vec<String>,
        params: Vec<f64>,
        loglik: f64,
        n_trans: usize,
        converged: bool,
        sample: SampleId,
    ) -> Self {
        let k = family.n_params();
        Self {
            family,
            field_labels,
            params,
            loglik,
            n_trans,
            aic: aic(k, loglik),
            bic: bic(k, loglik, n_trans),
            converged,
            sample,
        }
    }

    pub fn k(&self) -> usize {
        self.family.n_params()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.family.param_names()
    }

    /// Parameter by name.
    pub fn get(&self, name: &str) -> Option<f64> {
        self.family.param_names().iter().position(|n| n == name).map(|i| self.params[i])
    }

    pub fn label(&self) -> String {
        self.family.label()
    }
}

pub fn aic(k: usize, loglik: f64) -> f64 {
    2.0 * k as f64 - 2.0 * loglik
}

pub fn bic(k: usize, loglik: f64, n_trans: usize) -> f64 {
    k as f64 * libm::log(n_trans as f64) - 2.0 * loglik
}

/// Anything with a maximized likelihood that enters a BIC comparison.
pub trait LikelihoodFit {
    fn name(&self) -> String;
    fn loglik(&self) -> f64;
    fn n_params(&self) -> usize;
    fn n_trans(&self) -> usize;
    fn aic(&self) -> f64 {
        aic(self.n_params(), self.loglik())
    }
    fn bic(&self) -> f64 {
        bic(self.n_params(), self.loglik(), self.n_trans())
    }
}

impl LikelihoodFit for ModelFit {
    fn name(&self) -> String {
        self.label()
    }
    fn loglik(&self) -> f64 {
        self.loglik
    }
    fn n_params(&self) -> usize {
        self.k()
    }
    fn n_trans(&self) -> usize {
        self.n_trans
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts_match_names() {
        for f in [
            Family::OuBare,
            Family::OuField,
            Family::OuFieldHetero,
            Family::Quartic,
            Family::QuarticField,
            Family::OuMultiField(2),
            Family::RegimeSwitch,
            Family::RegimeSwitchField,
        ] {
            assert_eq!(f.param_names().len(), f.n_params(), "{f:?}");
        }
        assert_eq!(Family::OuMultiField(2).n_params(), 5);
    }

    #[test]
    fn criteria_identities() {
        assert_eq!(aic(4, -10.0), 28.0);
        assert!((bic(3, 5.0, 100) - (3.0 * libm::log(100.0) - 10.0)).abs() < 1e-15);
    }
}
