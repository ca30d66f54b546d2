//! Dated scalar series and calendar alignment.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate, Weekday};

use crate::error::{Error, Result};

pub type Date = NaiveDate;

/// A dated real series on a trading calendar.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObservableSeries {
    pub dates: Vec<Date>,
    pub values: Vec<f64>,
    pub label: String,
}

pub(crate) fn check_increasing(dates: &[Date]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::UnsortedDates(w[1]));
        }
    }
    Ok(())
}

impl ObservableSeries {
    pub fn new(dates: Vec<Date>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidInput("dates and values differ in length".into()));
        }
        check_increasing(&dates)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("non-finite value on {}", dates[i])));
        }
        Ok(Self { dates, values, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pointwise map keeping the calendar.
    pub fn map(&self, label: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.dates.clone(), self.values.iter().map(|&v| f(v)).collect(), label)
    }

    pub fn ln(&self) -> Result<Self> {
        if let Some(i) = self.values.iter().position(|&v| v <= 0.0) {
            return Err(Error::InvalidInput(alloc::format!(
                "{}: non-positive value on {}",
                self.label,
                self.dates[i]
            )));
        }
        let label = alloc::format!("log_{}", self.label);
        self.map(label, libm::log)
    }

    /// Every `step`-th observation starting from the first.
    pub fn thin(&self, step: usize) -> Self {
        let idx = (0..self.len()).step_by(step.max(1));
        let (dates, values) = idx.map(|i| (self.dates[i], self.values[i])).unzip();
        Self { dates, values, label: self.label.clone() }
    }

    /// Observations with `from <= date < to` (either bound optional).
    pub fn slice_dates(&self, from: Option<Date>, to: Option<Date>) -> Self {
        let (dates, values) = self
            .dates
            .iter()
            .zip(&self.values)
            .filter(|(d, _)| from.is_none_or(|f| **d >= f) && to.is_none_or(|t| **d < t))
            .map(|(d, v)| (*d, *v))
            .unzip();
        Self { dates, values, label: self.label.clone() }
    }
}

/// Two series restricted to their common dates.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlignedPair {
    pub dates: Vec<Date>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_label: String,
    pub y_label: String,
}

impl AlignedPair {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn x_series(&self) -> ObservableSeries {
        ObservableSeries { dates: self.dates.clone(), values: self.x.clone(), label: self.x_label.clone() }
    }

    pub fn y_series(&self) -> ObservableSeries {
        ObservableSeries { dates: self.dates.clone(), values: self.y.clone(), label: self.y_label.clone() }
    }

    pub fn thin(&self, step: usize) -> Self {
        let idx: Vec<usize> = (0..self.len()).step_by(step.max(1)).collect();
        Self {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x_label: self.x_label.clone(),
            y_label: self.y_label.clone(),
        }
    }
}

/// Restricts `a` and `b` to the dates they share, preserving order.
pub fn align(a: &ObservableSeries, b: &ObservableSeries) -> Result<AlignedPair> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    check_increasing(&a.dates)?;
    check_increasing(&b.dates)?;
    let (mut i, mut j) = (0, 0);
    let mut dates = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    while i < a.len() && j < b.len() {
        match a.dates[i].cmp(&b.dates[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                dates.push(a.dates[i]);
                x.push(a.values[i]);
                y.push(b.values[j]);
                i += 1;
                j += 1;
            }
        }
    }
    if dates.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(AlignedPair { dates, x, y, x_label: a.label.clone(), y_label: b.label.clone() })
}

/// Restricts several series to the dates common to all of them.
pub fn align_all(series: &[&ObservableSeries]) -> Result<Vec<ObservableSeries>> {
    let first = series.first().ok_or_else(|| Error::InvalidInput("no series".into()))?;
    let mut common = first.dates.clone();
    for s in &series[1..] {
        check_increasing(&s.dates)?;
        let pair = align(
            &ObservableSeries { dates: common.clone(), values: alloc::vec![0.0; common.len()], label: String::new() },
            s,
        )?;
        common = pair.dates;
    }
    Ok(series
        .iter()
        .map(|s| {
            let mut k = 0;
            let mut values = Vec::with_capacity(common.len());
            for (d, v) in s.dates.iter().zip(&s.values) {
                if k < common.len() && *d == common[k] {
                    values.push(*v);
                    k += 1;
                }
            }
            ObservableSeries { dates: common.clone(), values, label: s.label.to_string() }
        })
        .collect())
}

/// `n` consecutive weekdays starting at the first weekday on or after `start`.
pub fn business_days(start: Date, n: usize) -> Vec<Date> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("calendar overflow");
    }
    out
}
