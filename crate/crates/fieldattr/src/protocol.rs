//! Orchestration of the layered protocol.
//!
//! Stages run in the fixed order of [`Stage::ALL`]. A stage reads only the
//! artifacts of the stages listed in [`Stage::deps`]; when one of those did
//! not succeed the stage is skipped and the reason recorded.

use std::collections::BTreeMap;

use fieldattr_core::decomp::recipe_grid;
use fieldattr_core::diagnostics::{acf_summary, episode_bootstrap, field_stripped_residual, granger, pooled_quiet_acf, quiet_segments, GrangerResult};
use fieldattr_core::market::{psi1_series, rolling_correlation, rolling_volatility, weekly_disjoint_observables, ReturnPanel, WEEK};
use fieldattr_core::oos::{anchored_oos, window_sweep};
use fieldattr_core::ou::{attribution, fit, fit_bare, fit_field, pit_ks, pit_series};
use fieldattr_core::regime::{fit_rs, lrt, regime_stats, RegimeParams};
use fieldattr_core::residual_state::{horizon_test, orthogonal_residual, quadrant_labels};
use fieldattr_core::series::align_all;
use fieldattr_core::surrogate::{placebo_gate, Comparison, PlaceboReport};
use fieldattr_core::twod::{compare_structures, Structure};
use fieldattr_core::{align, AlignedPair, Date, Family, ModelFit, ModelSpec, ObservableSeries};
use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};

use crate::config::{ProtocolConfig, Stage};
use crate::error::{AppError, Result};
use crate::io::{read_prices, read_series};
use crate::report::{Manifest, ProtocolReport, StageRecord, StageStatus, Table, Value};

macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$(Value::from($v)),*] };
}

/// Observables on the common calendar of ψ₁ and VIX.
#[derive(Debug, Clone)]
pub struct Observables {
    pub panel: ReturnPanel,
    pub psi1: ObservableSeries,
    /// VIX levels.
    pub vix: ObservableSeries,
    pub log_vix: ObservableSeries,
    /// Auxiliary fields as they enter the drift: log MOVE, TED in levels.
    pub aux: Vec<ObservableSeries>,
}

impl Observables {
    pub fn build(panel: ReturnPanel, vix: &ObservableSeries, window: usize, aux: Vec<ObservableSeries>) -> Result<Self> {
        let psi = psi1_series(&panel, window)?;
        let pair = align(&psi, vix)?;
        let vix = pair.y_series();
        let mut log_vix = vix.ln()?;
        log_vix.label = "log_vix".into();
        Ok(Self { panel, psi1: pair.x_series(), vix, log_vix, aux })
    }

    pub fn load(cfg: &ProtocolConfig) -> Result<Self> {
        let panel = read_prices(&cfg.input.prices)?.to_panel()?;
        let vix = read_series(&cfg.input.vix)?;
        let mut aux = Vec::new();
        if let Some(p) = &cfg.input.move_index {
            let mut m = read_series(p)?.ln()?;
            m.label = "log_move".into();
            aux.push(m);
        }
        if let Some(p) = &cfg.input.ted {
            let mut t = read_series(p)?;
            t.label = "ted".into();
            aux.push(t);
        }
        Self::build(panel, &vix, cfg.window, aux)
    }
}

/// Artifacts handed from earlier stages to later ones.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub observables: Option<Observables>,
    pub m0: Option<ModelFit>,
    pub m2: Option<ModelFit>,
}

impl Artifacts {
    fn obs(&self) -> Result<&Observables> {
        self.observables.as_ref().ok_or_else(|| AppError::Stage("observables are not available".into()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct StageOutput {
    pub tables: Vec<Table>,
    pub summary: Json,
}

fn num(x: f64) -> Json {
    // NaN and infinities have no JSON form.
    serde_json::Number::from_f64(x).map_or(Json::Null, Json::Number)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run_stage(stage: Stage, cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    match stage {
        Stage::Observables => stage_observables(cfg, art),
        Stage::Models => stage_models(cfg, art),
        Stage::Placebo => stage_placebo(cfg, art),
        Stage::Granger => stage_granger(cfg, art),
        Stage::Decomposition => stage_decomposition(cfg, art),
        Stage::Diagnostics => stage_diagnostics(cfg, art),
        Stage::Sweep => stage_sweep(cfg, art),
        Stage::Disjoint => stage_disjoint(cfg, art),
        Stage::Oos => stage_oos(cfg, art),
        Stage::Twod => stage_twod(cfg, art),
        Stage::Residual => stage_residual(cfg, art),
    }
}

/// Runs every enabled stage in order, loading the observables from the
/// configured files.
pub fn run_protocol(cfg: &ProtocolConfig) -> ProtocolReport {
    run_with(cfg, Artifacts::default())
}

/// As [`run_protocol`], starting from pre-built artifacts (the observables
/// stage still reloads from files when enabled).
pub fn run_with(cfg: &ProtocolConfig, mut art: Artifacts) -> ProtocolReport {
    let mut report = ProtocolReport { manifest: manifest(cfg), ..Default::default() };
    let mut done: BTreeMap<Stage, bool> = BTreeMap::new();
    if art.observables.is_some() && !cfg.enabled(Stage::Observables) {
        done.insert(Stage::Observables, true);
    }
    for stage in Stage::ALL {
        if !cfg.enabled(stage) {
            continue;
        }
        let missing = stage.deps().iter().find(|d| !done.get(d).copied().unwrap_or(false));
        let status = if let Some(d) = missing {
            let why = if cfg.enabled(*d) { "did not succeed" } else { "is not enabled" };
            StageStatus::Skipped(format!("dependency {} {why}", d.name()))
        } else {
            match run_stage(stage, cfg, &mut art) {
                Ok(out) => {
                    report.tables.extend(out.tables);
                    if !out.summary.is_null() {
                        report.summary.insert(stage.name().into(), out.summary);
                    }
                    StageStatus::Ok
                }
                Err(e) => StageStatus::Failed(e.to_string()),
            }
        };
        done.insert(stage, status == StageStatus::Ok);
        report.manifest.stages.push(StageRecord { stage: stage.name().into(), status });
    }
    report
}

fn manifest(cfg: &ProtocolConfig) -> Manifest {
    let text = cfg.to_toml();
    let mut inputs = BTreeMap::new();
    for (name, path) in cfg.input.files() {
        let digest = std::fs::read(path).map_or_else(|e| format!("unreadable: {e}"), |b| sha256_hex(&b));
        inputs.insert(name.to_string(), digest);
    }
    let seeds = BTreeMap::from([
        ("fits".to_string(), cfg.seed),
        ("placebo".to_string(), cfg.placebo_seed()),
        ("bootstrap".to_string(), cfg.bootstrap_seed()),
    ]);
    Manifest {
        version: format!("fieldattr {}", env!("CARGO_PKG_VERSION")),
        config_hash: sha256_hex(text.as_bytes()),
        seeds,
        inputs,
        config: serde_json::to_value(cfg).expect("config is plain data"),
        stages: Vec::new(),
    }
}

fn stage_observables(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = Observables::load(cfg)?;
    let mut t = Table::new("observables", &["date", "psi1", "vix", "log_vix"]);
    for i in 0..obs.psi1.len() {
        t.push(row![obs.psi1.dates[i].to_string(), obs.psi1.values[i], obs.vix.values[i], obs.log_vix.values[i]]);
    }
    let p = &obs.psi1.values;
    let summary = json!({
        "n_obs": obs.psi1.len(),
        "first": obs.psi1.dates[0].to_string(),
        "last": obs.psi1.dates[obs.psi1.len() - 1].to_string(),
        "n_stocks": obs.panel.n_stocks(),
        "window": cfg.window,
        "psi1_min": num(p.iter().copied().fold(f64::INFINITY, f64::min)),
        "psi1_max": num(p.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        "aux_fields": obs.aux.iter().map(|a| a.label.clone()).collect::<Vec<_>>(),
    });
    art.observables = Some(obs);
    Ok(StageOutput { tables: vec![t], summary })
}

fn stage_models(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let (psi, lv) = (&obs.psi1, &obs.log_vix);
    let seed = cfg.seed;
    let m0 = fit_bare(psi, seed)?;
    let m2 = fit_field(psi, lv, seed)?;
    let one = |family: Family, fields: Vec<ObservableSeries>| -> Result<ModelFit> { Ok(fit(&ModelSpec::new(family, fields)?, psi, seed)?) };
    let mut fits: Vec<(String, Result<ModelFit>)> = vec![
        ("M0".into(), Ok(m0.clone())),
        ("M1".into(), one(Family::Quartic, vec![])),
        ("M2".into(), Ok(m2.clone())),
        ("M2'".into(), one(Family::OuFieldHetero, vec![lv.clone()])),
        ("M3".into(), one(Family::QuarticField, vec![lv.clone()])),
    ];
    if cfg.models.regime {
        fits.push(("M_RS,c".into(), fit_rs(false, psi, None, seed).map_err(Into::into)));
        fits.push(("M_RS,c+VIX".into(), fit_rs(true, psi, Some(lv), seed).map_err(Into::into)));
    }

    let mut fit_table = Table::new("model_fits", &["model", "k", "n_trans", "loglik", "aic", "bic", "converged", "error"]);
    let mut params = Table::new("model_params", &["model", "param", "value"]);
    let mut ok: Vec<(&str, &ModelFit)> = Vec::new();
    for (name, r) in &fits {
        match r {
            Ok(f) => {
                fit_table.push(row![name.as_str(), f.k(), f.n_trans, f.loglik, f.aic, f.bic, f.converged, Value::Missing]);
                for (p, v) in f.param_names().iter().zip(&f.params) {
                    params.push(row![name.as_str(), p.as_str(), *v]);
                }
                ok.push((name, f));
            }
            Err(e) => fit_table.push(row![name.as_str(), Value::Missing, Value::Missing, Value::Missing, Value::Missing, Value::Missing, Value::Missing, e.to_string()]),
        }
    }
    ok.sort_by(|a, b| a.1.bic.total_cmp(&b.1.bic));
    let mut cmp = Table::new("model_comparison", &["model", "bic", "dbic_vs_m2"]);
    for (name, f) in &ok {
        cmp.push(row![*name, f.bic, f.bic - m2.bic]);
    }

    let a = attribution(&m0, &m2)?;
    let mut summary = Map::new();
    summary.insert(
        "attribution".into(),
        json!({ "tau_auto": num(a.tau_auto), "tau_cond": num(a.tau_cond), "chi": num(a.chi), "scpa": num(a.scpa) }),
    );
    summary.insert("dbic_m2_vs_m0".into(), num(m0.bic - m2.bic));
    for (name, f) in [("M0", &m0), ("M2", &m2)] {
        let spec = if f.family == Family::OuBare { ModelSpec::bare(Family::OuBare)? } else { ModelSpec::new(Family::OuField, vec![lv.clone()])? };
        let ks = pit_ks(&pit_series(f, &spec, psi)?.values, None)?;
        summary.insert(format!("pit_ks_{name}"), json!({ "n": ks.n, "distance": num(ks.distance), "critical_5pct": num(ks.critical_5pct), "p": num(ks.p_value) }));
    }
    if let (Some(Ok(rs)), Some(Ok(rsf))) = (fits.get(5).map(|f| &f.1), fits.get(6).map(|f| &f.1)) {
        if let Ok(l) = lrt(rs, rsf) {
            summary.insert("lrt_rs_vix".into(), json!({ "chi2": num(l.chi2), "df": l.df, "p": num(l.p) }));
        }
        for (name, f) in [("regime_stats_rs", rs), ("regime_stats_rs_vix", rsf)] {
            let s = regime_stats(&RegimeParams::from_vec(f.family, &f.params)?);
            summary.insert(
                name.into(),
                json!({
                    "expected_calm_days": num(s.expected_calm_days),
                    "expected_stress_days": num(s.expected_stress_days),
                    "stationary_calm": num(s.stationary_calm),
                    "stationary_stress": num(s.stationary_stress),
                    "calm_relaxation_days": num(s.calm_relaxation_days),
                }),
            );
        }
    }

    let mut tables = vec![cmp, fit_table, params];
    if !obs.aux.is_empty() {
        tables.push(aux_table(obs, seed));
    }
    art.m0 = Some(m0);
    art.m2 = Some(m2);
    Ok(StageOutput { tables, summary: Json::Object(summary) })
}

/// M2 with each auxiliary field and the two-field model with VIX, each on
/// the maximal sample where ψ₁, VIX and that field all exist.
fn aux_table(obs: &Observables, seed: u64) -> Table {
    let mut t = Table::new(
        "aux_fields",
        &["field", "n_obs", "theta", "tau_cond", "beta", "dbic_field_vs_m0", "dbic_vix_vs_m0", "dbic_two_field_vs_vix", "beta_field_two_field", "error"],
    );
    for a in &obs.aux {
        let r = (|| -> Result<Vec<Value>> {
            let s = align_all(&[&obs.psi1, &obs.log_vix, a])?;
            let (psi, lv, f) = (&s[0], &s[1], &s[2]);
            let m0 = fit_bare(psi, seed)?;
            let mf = fit_field(psi, f, seed)?;
            let mv = fit_field(psi, lv, seed)?;
            let two = fit(&ModelSpec::new(Family::OuMultiField(2), vec![lv.clone(), f.clone()])?, psi, seed)?;
            Ok(row![
                a.label.as_str(),
                psi.len(),
                mf.params[0],
                1.0 / mf.params[0],
                mf.params[2],
                m0.bic - mf.bic,
                m0.bic - mv.bic,
                mv.bic - two.bic,
                two.params[3],
                Value::Missing
            ])
        })();
        t.push(r.unwrap_or_else(|e| {
            let mut v = vec![Value::from(a.label.as_str())];
            v.extend(std::iter::repeat_n(Value::Missing, 8));
            v.push(e.to_string().into());
            v
        }));
    }
    t
}

fn placebo_json(r: &PlaceboReport) -> Json {
    json!({
        "real_gain": num(r.real_gain),
        "empirical_p": num(r.empirical_p),
        "placebo_mean": num(r.summary.mean),
        "placebo_sd": num(r.summary.sd),
        "placebo_max": num(r.summary.max),
        "ar_order": r.ar_order,
        "failed": r.failed,
        "fitted": r.placebo_gains.len(),
    })
}

fn stage_placebo(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let mut runs = vec![("oned", Comparison::OneD)];
    if cfg.placebo.twod {
        runs.push(("twod", Comparison::TwoD));
    }
    let mut t = Table::new("placebo", &["comparison", "surrogate", "gain"]);
    let mut summary = Map::new();
    for (name, c) in runs {
        let r = placebo_gate(&obs.psi1, &obs.log_vix, cfg.placebo.count, cfg.placebo_seed(), c)?;
        let mut k = 0;
        for i in 0..cfg.placebo.count {
            if r.failed.contains(&i) {
                t.push(row![name, i, Value::Missing]);
            } else {
                t.push(row![name, i, r.placebo_gains[k]]);
                k += 1;
            }
        }
        summary.insert(name.into(), placebo_json(&r));
    }
    Ok(StageOutput { tables: vec![t], summary: Json::Object(summary) })
}

fn stage_granger(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let mut t = Table::new("granger", &["direction", "differenced", "lag", "f", "df1", "df2", "p"]);
    let push = |t: &mut Table, g: &GrangerResult| t.push(row![g.direction.as_str(), g.differenced, g.lag, g.f, g.df1, g.df2, g.p]);
    for differenced in [false, true] {
        let g = granger(&obs.psi1, &obs.log_vix, cfg.granger.max_lag, differenced)?;
        push(&mut t, &g.x_to_y);
        push(&mut t, &g.y_to_x);
    }
    Ok(StageOutput { tables: vec![t], summary: Json::Null })
}

fn stage_decomposition(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let vol = rolling_volatility(&obs.panel, cfg.window)?;
    let corrs = rolling_correlation(&obs.panel, cfg.window)?;
    let grid = recipe_grid(&obs.psi1, &obs.vix, &vol, &corrs, &cfg.decomposition.resolved(), cfg.seed)?;
    let mut t = Table::new(
        "decomposition",
        &[
            "recipe",
            "n_obs",
            "r2_mech",
            "r2_full",
            "mech_fraction",
            "info_fraction",
            "dbic_actual",
            "dbic_mech_only",
            "dbic_info_only",
            "partial_residual_corr",
            "signs_hold",
            "error",
        ],
    );
    for g in &grid {
        match &g.result {
            Ok(r) => t.push(row![
                g.recipe.name(),
                r.n_obs,
                r.r2_mech,
                r.r2_full,
                r.mech_fraction,
                r.info_fraction,
                r.dbic_actual,
                r.dbic_mech_only,
                r.dbic_info_only,
                r.partial_residual_corr,
                g.signs_hold(),
                Value::Missing
            ]),
            Err(e) => {
                let mut v = vec![Value::from(g.recipe.name())];
                v.extend(std::iter::repeat_n(Value::Missing, 9));
                v.push(false.into());
                v.push(e.to_string().into());
                t.push(v);
            }
        }
    }
    let summary = json!({
        "recipes": grid.len(),
        "signs_hold": grid.iter().filter(|g| g.signs_hold()).count(),
    });
    Ok(StageOutput { tables: vec![t], summary })
}

fn stage_diagnostics(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let m2 = art.m2.as_ref().ok_or_else(|| AppError::Stage("M2 fit is not available".into()))?;
    let d = &cfg.diagnostics;
    let full = acf_summary(&obs.psi1.values, d.max_lag)?;
    let stripped_series = field_stripped_residual(m2, &obs.psi1, &obs.log_vix)?;
    let stripped = acf_summary(&stripped_series.values, d.max_lag)?;

    let mut acf = Table::new("acf", &["series", "lag", "value"]);
    for (name, s) in [("psi1", &full), ("field_stripped", &stripped)] {
        for (lag, v) in s.acf.iter().enumerate() {
            acf.push(row![name, lag, *v]);
        }
    }
    let mut bands = Table::new(
        "quiet_bands",
        &["low", "high", "segments", "quiet_obs", "efold", "integrated_60", "ci_low", "ci_high", "valid_draws", "full_efold", "error"],
    );
    let mut segs_t = Table::new("quiet_segments", &["low", "high", "start", "end", "len"]);
    for band in &d.bands {
        let spec = d.spec(*band);
        let segs = quiet_segments(&obs.vix, &spec)?;
        for s in &segs {
            segs_t.push(row![band[0], band[1], s.start.to_string(), s.end.to_string(), s.len]);
        }
        let quiet_obs: usize = segs.iter().map(|s| s.len).sum();
        let mut row = row![band[0], band[1], segs.len(), quiet_obs];
        if segs.is_empty() {
            row.extend(std::iter::repeat_n(Value::Missing, 5));
            row.push(full.efolding_lag.into());
            row.push("no qualifying segments".into());
        } else {
            let pooled = pooled_quiet_acf(&obs.psi1, &segs, d.max_lag)?;
            for (lag, v) in pooled.acf.iter().enumerate() {
                acf.push(row![format!("quiet_{}_{}", band[0], band[1]), lag, *v]);
            }
            row.push(pooled.efolding_lag.into());
            row.push(pooled.integrated_60.into());
            match episode_bootstrap(&obs.psi1, &segs, d.max_lag, d.bootstrap_draws, cfg.bootstrap_seed()) {
                Ok(ci) => {
                    row.extend(row![ci.low, ci.high, ci.valid_draws, full.efolding_lag, Value::Missing]);
                }
                Err(e) => {
                    row.extend(row![Value::Missing, Value::Missing, Value::Missing, full.efolding_lag, e.to_string()]);
                }
            }
        }
        bands.push(row);
    }
    let summary = json!({
        "psi1_efold": full.efolding_lag,
        "psi1_integrated_60": num(full.integrated_60),
        "psi1_integrated_90": num(full.integrated_90),
        "stripped_efold": stripped.efolding_lag,
        "stripped_integrated_60": num(stripped.integrated_60),
        "stripped_integrated_90": num(stripped.integrated_90),
    });
    Ok(StageOutput { tables: vec![acf, bands, segs_t], summary })
}

fn stage_sweep(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let rows = window_sweep(&obs.panel, &obs.vix, &cfg.sweep.windows, cfg.seed)?;
    let mut t = Table::new("window_sweep", &["window", "n_obs", "theta0", "tau0", "theta", "tau_cond", "beta", "chi", "scpa", "dbic"]);
    for r in rows {
        t.push(row![r.window, r.n_obs, r.theta0, r.tau0, r.theta, r.tau_cond, r.beta, r.chi, r.scpa, r.dbic]);
    }
    Ok(StageOutput { tables: vec![t], summary: Json::Null })
}

/// M0 and M2 on a coarse series whose observations are `dt` trading days
/// apart; rates come out per trading day.
fn coarse_row(design: &str, psi: &ObservableSeries, field: &ObservableSeries, dt: f64, skipped: usize, seed: u64) -> Vec<Value> {
    let r = (|| -> Result<Vec<Value>> {
        let pair = align(psi, field)?;
        let (p, f) = (pair.x_series(), pair.y_series());
        let mut s0 = ModelSpec::bare(Family::OuBare)?;
        s0.dt = dt;
        let mut s2 = ModelSpec::new(Family::OuField, vec![f])?;
        s2.dt = dt;
        let m0 = fit(&s0, &p, seed)?;
        let m2 = fit(&s2, &p, seed)?;
        let a = attribution(&m0, &m2)?;
        Ok(row![design, dt, p.len(), skipped, m0.bic - m2.bic, a.tau_auto, a.tau_cond, a.chi, a.scpa, Value::Missing])
    })();
    r.unwrap_or_else(|e| {
        let mut v = row![design, dt, Value::Missing, skipped];
        v.extend(std::iter::repeat_n(Value::Missing, 5));
        v.push(e.to_string().into());
        v
    })
}

fn stage_disjoint(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let mut t = Table::new("disjoint", &["design", "step_days", "n_obs", "skipped_blocks", "dbic", "tau_auto", "tau_cond", "chi", "scpa", "error"]);
    let weekly = weekly_disjoint_observables(&obs.panel)?;
    t.push(coarse_row("weekly_disjoint", &weekly.psi1, &obs.log_vix, WEEK as f64, weekly.skipped.len(), cfg.seed));
    let b = cfg.disjoint.block;
    let blocks = fieldattr_core::market::block_observables(&obs.panel, &obs.vix, b)?;
    let psi = blocks.psi1()?;
    let mut end = blocks.vix_end()?.ln()?;
    end.label = "log_vix_end".into();
    let mut mean = blocks.vix_mean()?.ln()?;
    mean.label = "log_vix_mean".into();
    t.push(coarse_row(&format!("block{b}_end"), &psi, &end, b as f64, blocks.skipped.len(), cfg.seed));
    t.push(coarse_row(&format!("block{b}_mean"), &psi, &mean, b as f64, blocks.skipped.len(), cfg.seed));
    Ok(StageOutput { tables: vec![t], summary: Json::Null })
}

fn stage_oos(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let mut t = Table::new(
        "oos",
        &[
            "variant",
            "nominal",
            "split_date",
            "n_train",
            "n_test",
            "n_scored",
            "m0_train_ll",
            "m2_train_ll",
            "m0_test_ll",
            "m2_test_ll",
            "gap",
            "m2_test_train_ratio",
            "error",
        ],
    );
    let mut jobs: Vec<(&str, Date, Option<(Date, Date)>)> = cfg.oos.splits.iter().map(|d| ("sweep", *d, None)).collect();
    jobs.push(("baseline", cfg.oos.baseline, None));
    if let Some([a, b]) = cfg.oos.exclusion {
        jobs.push(("baseline_excluded", cfg.oos.baseline, Some((a, b))));
    }
    let mut n_ok = 0;
    for (variant, d, excl) in jobs {
        match anchored_oos(&obs.psi1, &obs.log_vix, &[d], cfg.seed, excl) {
            Ok(v) => {
                let r = &v[0];
                n_ok += 1;
                t.push(row![
                    variant,
                    d.to_string(),
                    r.split_date.to_string(),
                    r.n_train,
                    r.n_test,
                    r.n_scored,
                    r.m0_train_ll_per_obs,
                    r.m2_train_ll_per_obs,
                    r.m0_test_ll_per_obs,
                    r.m2_test_ll_per_obs,
                    r.gap,
                    r.m2_ratio,
                    Value::Missing
                ]);
            }
            Err(e) => {
                let mut v = row![variant, d.to_string()];
                v.extend(std::iter::repeat_n(Value::Missing, 10));
                v.push(e.to_string().into());
                t.push(v);
            }
        }
    }
    if n_ok == 0 {
        return Err(AppError::Stage("no split could be evaluated".into()));
    }
    Ok(StageOutput { tables: vec![t], summary: Json::Null })
}

fn stage_twod(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let daily = align(&obs.psi1, &obs.log_vix)?;
    let weekly = weekly_disjoint_observables(&obs.panel).and_then(|w| align(&w.psi1, &obs.log_vix));
    let k = cfg.twod.thin;
    let mut sets: Vec<(String, usize, std::result::Result<AlignedPair, String>)> = vec![("daily".into(), 1, Ok(daily.clone()))];
    if k > 1 {
        sets.push((format!("thinned_{k}"), k, Ok(daily.thin(k))));
    }
    sets.push(("weekly_disjoint".into(), WEEK, weekly.map_err(|e| e.to_string())));
    let mut t = Table::new(
        "twod",
        &["dataset", "step_days", "n_obs", "winner", "dbic_next", "dbic_vs_decoupled", "kernel_timescale_days", "kernel_amplitude", "error"],
    );
    let mut fits = Table::new("twod_fits", &["dataset", "structure", "k", "loglik", "bic", "phi11", "phi12", "phi21", "phi22", "gls_rounds"]);
    for (name, step, pair) in &sets {
        let step_f = *step as f64;
        let res = pair.clone().map_err(|e| e.clone()).and_then(|p| compare_structures(&p).map(|c| (p.len(), c)).map_err(|e| e.to_string()));
        match res {
            Ok((n, c)) => {
                for s in Structure::ALL {
                    let f = c.fit(s);
                    let a = f.transition;
                    fits.push(row![name.as_str(), s.name(), s.n_params(), f.loglik, f.bic, a[0][0], a[0][1], a[1][0], a[1][1], f.gls_rounds]);
                }
                // The kernel is fitted per observation step; convert to days.
                let (ts, amp, err) = match &c.kernel {
                    Ok(kern) => (Value::from(kern.timescale * step_f), Value::from(kern.amplitude / (step_f * step_f)), Value::Missing),
                    Err(e) => (Value::Missing, Value::Missing, Value::from(e.to_string())),
                };
                t.push(row![name.as_str(), *step, n, c.winner.name(), c.dbic_next, c.dbic_vs_decoupled, ts, amp, err]);
            }
            Err(e) => {
                let mut v = row![name.as_str(), *step];
                v.extend(std::iter::repeat_n(Value::Missing, 6));
                v.push(e.into());
                t.push(v);
            }
        }
    }
    Ok(StageOutput { tables: vec![t, fits], summary: Json::Null })
}

fn stage_residual(cfg: &ProtocolConfig, art: &mut Artifacts) -> Result<StageOutput> {
    let obs = art.obs()?;
    let orth = orthogonal_residual(&obs.psi1, &obs.log_vix)?;
    let labels = quadrant_labels(&obs.log_vix, &orth.residual)?;
    let tests = horizon_test(&labels, &obs.log_vix, &cfg.residual.horizons, cfg.residual.change_kind())?;
    let mut t = Table::new("residual_state", &["horizon", "n_q2", "n_q3", "mean_q2", "mean_q3", "u", "mw_p", "rank_biserial", "exact"]);
    for r in &tests {
        t.push(row![r.horizon, r.n_q2, r.n_q3, r.mean_q2, r.mean_q3, r.u, r.mw_p, r.rank_biserial, r.exact]);
    }
    let c = labels.counts();
    let summary = json!({
        "a": num(orth.a),
        "b": num(orth.b),
        "se_a": num(orth.se[0]),
        "se_b": num(orth.se[1]),
        "log_vix_median": num(labels.vix_median),
        "counts": { "Q1": c[0], "Q2": c[1], "Q3": c[2], "Q4": c[3] },
    });
    Ok(StageOutput { tables: vec![t], summary })
}
