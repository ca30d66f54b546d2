//! Writes a planted synthetic market and a matching configuration to disk.

use std::path::Path;

use fieldattr_core::synth::{planted_market, PlantedMarketConfig};
use fieldattr_core::Date;

use crate::config::ProtocolConfig;
use crate::error::{AppError, Result};
use crate::io::{write_prices, write_series};

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

/// Writes `prices.csv`, `vix.csv` and `config.toml` into `dir` and returns
/// the configuration (with paths resolved against `dir`).
///
/// Split dates, quiet bands and sweep windows are scaled to the sample so
/// every stage has data to work on.
pub fn write_world(dir: &Path, market: &PlantedMarketConfig, seed: u64) -> Result<ProtocolConfig> {
    std::fs::create_dir_all(dir).map_err(|source| AppError::Output { path: dir.into(), source })?;
    let m = planted_market(market, seed)?;
    write_prices(&dir.join("prices.csv"), &m.panel.tickers, &m.price_dates, &m.prices)?;
    write_series(&dir.join("vix.csv"), &m.vix)?;

    let dates = &m.panel.dates;
    let at = |f: f64| -> Date { dates[((dates.len() - 1) as f64 * f) as usize] };
    let mut sorted = m.vix.values.clone();
    sorted.sort_by(f64::total_cmp);

    let mut cfg = ProtocolConfig::new("prices.csv", "vix.csv");
    cfg.seed = seed;
    cfg.window = market.vix_window;
    cfg.placebo.count = 50;
    cfg.decomposition.split = at(0.5);
    cfg.diagnostics.bands = vec![[quantile(&sorted, 0.1), quantile(&sorted, 0.9)], [quantile(&sorted, 0.25), quantile(&sorted, 0.75)]];
    cfg.diagnostics.min_len = 60;
    cfg.diagnostics.max_lag = 40;
    cfg.diagnostics.bootstrap_draws = 200;
    cfg.sweep.windows = vec![40, 60, 90];
    cfg.oos.splits = vec![at(0.35), at(0.5), at(0.65)];
    cfg.oos.baseline = at(0.5);
    cfg.oos.exclusion = Some([at(0.7), at(0.75)]);
    cfg.residual.horizons = vec![10, 20, 40];

    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|source| AppError::Output { path: path.clone(), source })?;
    ProtocolConfig::load(&path)
}
