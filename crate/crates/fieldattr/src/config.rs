//! Protocol configuration: a single TOML file with a strict schema.
//!
//! Unknown keys anywhere are rejected. Relative input paths resolve against
//! the directory of the configuration file. Every random step draws from a
//! seed that is either given explicitly or falls back to the top-level
//! `seed`.

use std::path::{Path, PathBuf};

use fieldattr_core::decomp::{default_recipes, DecompRecipe, Freeze, Weights};
use fieldattr_core::diagnostics::{QuietMode, QuietSpec};
use fieldattr_core::residual_state::ChangeKind;
use fieldattr_core::Date;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// Protocol stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Observables,
    Models,
    Placebo,
    Granger,
    Decomposition,
    Diagnostics,
    Sweep,
    Disjoint,
    Oos,
    Twod,
    Residual,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Observables,
        Stage::Models,
        Stage::Placebo,
        Stage::Granger,
        Stage::Decomposition,
        Stage::Diagnostics,
        Stage::Sweep,
        Stage::Disjoint,
        Stage::Oos,
        Stage::Twod,
        Stage::Residual,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Observables => "observables",
            Stage::Models => "models",
            Stage::Placebo => "placebo",
            Stage::Granger => "granger",
            Stage::Decomposition => "decomposition",
            Stage::Diagnostics => "diagnostics",
            Stage::Sweep => "sweep",
            Stage::Disjoint => "disjoint",
            Stage::Oos => "oos",
            Stage::Twod => "twod",
            Stage::Residual => "residual",
        }
    }

    /// Stages whose artifacts this stage reads.
    pub fn deps(&self) -> &'static [Stage] {
        match self {
            Stage::Observables => &[],
            Stage::Diagnostics => &[Stage::Observables, Stage::Models],
            _ => &[Stage::Observables],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Wide CSV of adjusted closes.
    pub prices: PathBuf,
    /// VIX levels.
    pub vix: PathBuf,
    #[serde(default, rename = "move", skip_serializing_if = "Option::is_none")]
    pub move_index: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ted: Option<PathBuf>,
}

impl InputConfig {
    /// `(name, path)` of every configured file.
    pub fn files(&self) -> Vec<(&'static str, &Path)> {
        let mut v = vec![("prices", self.prices.as_path()), ("vix", self.vix.as_path())];
        if let Some(p) = &self.move_index {
            v.push(("move", p.as_path()));
        }
        if let Some(p) = &self.ted {
            v.push(("ted", p.as_path()));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    /// Include the two regime-switching fits.
    pub regime: bool,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self { regime: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaceboConfig {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Also run the gate on the two-dimensional coupling gain.
    pub twod: bool,
}

impl Default for PlaceboConfig {
    fn default() -> Self {
        Self { count: 100, seed: None, twod: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrangerConfig {
    pub max_lag: usize,
}

impl Default for GrangerConfig {
    fn default() -> Self {
        Self { max_lag: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeName {
    FullMedian,
    FullMean,
    PreSplitMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsName {
    Equal,
    InverseVol,
    VolShare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeConfig {
    pub freeze: FreezeName,
    pub weights: WeightsName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecompositionConfig {
    /// Cut date for the pre-split freeze.
    pub split: Date,
    /// Defaults to the five standard recipes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recipes: Option<Vec<RecipeConfig>>,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self { split: date(2016, 1, 1), recipes: None }
    }
}

impl DecompositionConfig {
    pub fn resolved(&self) -> Vec<DecompRecipe> {
        match &self.recipes {
            None => default_recipes(self.split),
            Some(list) => list
                .iter()
                .map(|r| DecompRecipe {
                    freeze: match r.freeze {
                        FreezeName::FullMedian => Freeze::FullMedian,
                        FreezeName::FullMean => Freeze::FullMean,
                        FreezeName::PreSplitMedian => Freeze::PreSplitMedian(self.split),
                    },
                    weights: match r.weights {
                        WeightsName::Equal => Weights::Equal,
                        WeightsName::InverseVol => Weights::InverseVol,
                        WeightsName::VolShare => Weights::VolShare,
                    },
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuietModeName {
    Strict,
    Rolling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub mode: QuietModeName,
    pub median_window: usize,
    pub min_len: usize,
    /// `[low, high]` VIX bands.
    pub bands: Vec<[f64; 2]>,
    pub max_lag: usize,
    pub bootstrap_draws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            mode: QuietModeName::Rolling,
            median_window: 20,
            min_len: 120,
            bands: vec![[13.0, 21.0], [14.0, 20.0], [15.0, 19.0]],
            max_lag: 120,
            bootstrap_draws: 5000,
            seed: None,
        }
    }
}

impl DiagnosticsConfig {
    pub fn spec(&self, band: [f64; 2]) -> QuietSpec {
        let mode = match self.mode {
            QuietModeName::Strict => QuietMode::StrictDaily,
            QuietModeName::Rolling => QuietMode::RollingMedian(self.median_window),
        };
        QuietSpec { mode, low: band[0], high: band[1], min_len: self.min_len }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub windows: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { windows: vec![30, 45, 60, 90, 120] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisjointConfig {
    pub block: usize,
}

impl Default for DisjointConfig {
    fn default() -> Self {
        Self { block: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OosConfig {
    /// Anchored sweep cut dates.
    pub splits: Vec<Date>,
    /// Split scored with and without the exclusion range.
    pub baseline: Date,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclusion: Option<[Date; 2]>,
}

impl Default for OosConfig {
    fn default() -> Self {
        Self {
            splits: (0..6).map(|i| date(2010 + 2 * i, 1, 1)).collect(),
            baseline: date(2016, 1, 1),
            exclusion: Some([date(2020, 3, 1), date(2020, 9, 30)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwodConfig {
    /// Step of the naive thinning comparison.
    pub thin: usize,
}

impl Default for TwodConfig {
    fn default() -> Self {
        Self { thin: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeName {
    Log,
    Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub horizons: Vec<usize>,
    pub change: ChangeName,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self { horizons: vec![30, 60, 90], change: ChangeName::Log }
    }
}

impl ResidualConfig {
    pub fn change_kind(&self) -> ChangeKind {
        match self.change {
            ChangeName::Log => ChangeKind::Log,
            ChangeName::Level => ChangeKind::Level,
        }
    }
}

fn default_window() -> usize {
    60
}

fn default_output() -> PathBuf {
    PathBuf::from("report")
}

fn all_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

fn date(y: i32, m: u32, d: u32) -> Date {
    Date::from_ymd_opt(y, m, d).expect("valid calendar date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub input: InputConfig,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Stages to run; the rest are skipped.
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub placebo: PlaceboConfig,
    #[serde(default)]
    pub granger: GrangerConfig,
    #[serde(default)]
    pub decomposition: DecompositionConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub disjoint: DisjointConfig,
    #[serde(default)]
    pub oos: OosConfig,
    #[serde(default)]
    pub twod: TwodConfig,
    #[serde(default)]
    pub residual: ResidualConfig,
}

impl ProtocolConfig {
    /// Default settings for the given input files.
    pub fn new(prices: impl Into<PathBuf>, vix: impl Into<PathBuf>) -> Self {
        Self {
            input: InputConfig { prices: prices.into(), vix: vix.into(), move_index: None, ted: None },
            window: default_window(),
            seed: 0,
            output: default_output(),
            stages: all_stages(),
            models: Default::default(),
            placebo: Default::default(),
            granger: Default::default(),
            decomposition: Default::default(),
            diagnostics: Default::default(),
            sweep: Default::default(),
            disjoint: Default::default(),
            oos: Default::default(),
            twod: Default::default(),
            residual: Default::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input.prices);
        fix(&mut self.input.vix);
        if let Some(p) = self.input.move_index.as_mut() {
            fix(p);
        }
        if let Some(p) = self.input.ted.as_mut() {
            fix(p);
        }
        fix(&mut self.output);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn enabled(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn placebo_seed(&self) -> u64 {
        self.placebo.seed.unwrap_or(self.seed)
    }

    pub fn bootstrap_seed(&self) -> u64 {
        self.diagnostics.seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AppError::Config(m));
        for (name, p) in self.input.files() {
            if !p.is_file() {
                return bad(format!("input {name} does not exist: {}", p.display()));
            }
        }
        if self.window < 2 {
            return bad("window must be at least 2".into());
        }
        let mut seen = self.stages.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.stages.len() {
            return bad("stages are listed more than once".into());
        }
        if self.enabled(Stage::Placebo) && self.placebo.count == 0 {
            return bad("placebo.count must be positive".into());
        }
        if self.granger.max_lag == 0 {
            return bad("granger.max_lag must be positive".into());
        }
        if self.decomposition.recipes.as_ref().is_some_and(|r| r.is_empty()) {
            return bad("decomposition.recipes is empty".into());
        }
        for b in &self.diagnostics.bands {
            if !(b[0] < b[1]) {
                return bad(format!("quiet band [{}, {}] needs low < high", b[0], b[1]));
            }
        }
        if self.diagnostics.min_len == 0 || self.diagnostics.median_window == 0 || self.diagnostics.max_lag == 0 {
            return bad("diagnostics lengths must be positive".into());
        }
        if self.sweep.windows.iter().any(|w| *w < 2) {
            return bad("sweep windows must be at least 2".into());
        }
        if self.disjoint.block < 2 {
            return bad("disjoint.block must be at least 2".into());
        }
        if let Some([a, b]) = self.oos.exclusion {
            if b < a {
                return bad("oos.exclusion ends before it starts".into());
            }
        }
        if self.twod.thin == 0 {
            return bad("twod.thin must be positive".into());
        }
        if self.residual.horizons.is_empty() || self.residual.horizons.contains(&0) {
            return bad("residual.horizons must be positive and non-empty".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ProtocolConfig::parse("[input]\nprices = \"p.csv\"\nvix = \"v.csv\"\n").unwrap();
        assert_eq!(c.window, 60);
        assert_eq!(c.stages, Stage::ALL);
        assert_eq!(c.oos.splits.len(), 6);
        assert_eq!(c.decomposition.resolved().len(), 5);
        assert_eq!(ProtocolConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = "[input]\nprices = \"p.csv\"\nvix = \"v.csv\"\n";
        assert!(ProtocolConfig::parse(&format!("windw = 60\n{base}")).is_err());
        assert!(ProtocolConfig::parse(&format!("{base}[diagnostics]\nband = [[1.0, 2.0]]\n")).is_err());
        assert!(ProtocolConfig::parse(&format!("stages = [\"observable\"]\n{base}")).is_err());
        let e = ProtocolConfig::parse(&format!("{base}[decomposition]\nrecipes = [{{ freeze = \"median\", weights = \"equal\" }}]\n"));
        assert!(matches!(e, Err(AppError::Config(_))));
    }

    #[test]
    fn dependencies_point_backwards() {
        for (i, s) in Stage::ALL.iter().enumerate() {
            for d in s.deps() {
                let j = Stage::ALL.iter().position(|x| x == d).unwrap();
                assert!(j < i, "{} depends on later stage {}", s.name(), d.name());
            }
        }
    }
}
