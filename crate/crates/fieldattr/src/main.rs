use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fieldattr::config::{ChangeName, QuietModeName};
use fieldattr::io::parse_date;
use fieldattr::report::StageStatus;
use fieldattr::synth::write_world;
use fieldattr::{emit, run_protocol, AppError, ProtocolConfig, ProtocolReport, Stage};
use fieldattr_core::synth::PlantedMarketConfig;
use fieldattr_core::Date;

#[derive(Parser)]
#[command(name = "fieldattr", version, about = "Field attribution for slow collective market observables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    vix: Option<PathBuf>,
    #[arg(long = "move")]
    move_index: Option<PathBuf>,
    #[arg(long)]
    ted: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report files here instead of printing the tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the ψ₁ observable aligned with VIX.
    Build(Common),
    /// Fit the one-dimensional model family and compare by BIC.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Leave out the regime-switching models.
        #[arg(long)]
        no_regime: bool,
    },
    /// Surrogate-field falsification gate.
    Placebo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        placebo_seed: Option<u64>,
        /// Also gate the two-dimensional coupling gain.
        #[arg(long)]
        twod: bool,
    },
    /// Mechanical / informational decomposition over the recipe grid.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_date)]
        split: Option<Date>,
    },
    /// Quiet-regime and field-stripped persistence diagnostics.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Quiet band as `low,high`; repeatable.
        #[arg(long = "band", value_parser = parse_band)]
        bands: Vec<[f64; 2]>,
        #[arg(long, value_parser = ["strict", "rolling"])]
        mode: Option<String>,
        #[arg(long)]
        min_len: Option<usize>,
        #[arg(long)]
        max_lag: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        bootstrap_seed: Option<u64>,
    },
    /// Bivariate Granger tests in levels and differences.
    Granger {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_lag: Option<usize>,
    },
    /// Two-dimensional linear system comparison.
    Twod {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        thin: Option<usize>,
    },
    /// Anchored chronological holdouts.
    Oos {
        #[command(flatten)]
        common: Common,
        /// Sweep cut date; repeatable.
        #[arg(long = "split", value_parser = parse_date)]
        splits: Vec<Date>,
        #[arg(long, value_parser = parse_date)]
        baseline: Option<Date>,
        /// Excluded test range as `from,to`.
        #[arg(long, value_parser = parse_range)]
        exclude: Option<[Date; 2]>,
        #[arg(long, conflicts_with = "exclude")]
        no_exclusion: bool,
    },
    /// M0/M2 fits across return windows.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        windows: Vec<usize>,
    },
    /// Residual-state quadrant test.
    Residual {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
        #[arg(long, value_parser = ["log", "level"])]
        change: Option<String>,
    },
    /// Write a planted synthetic market with a ready-to-run configuration.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        stocks: usize,
        #[arg(long, default_value_t = 2400)]
        days: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run every enabled stage of a configuration.
    RunAll {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_band(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected low,high")?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok([p(a)?, p(b)?])
}

fn parse_range(s: &str) -> Result<[Date; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected from,to")?;
    Ok([parse_date(a)?, parse_date(b)?])
}

fn base_config(c: &Common) -> Result<ProtocolConfig, AppError> {
    let mut cfg = match &c.config {
        Some(p) => ProtocolConfig::load(p)?,
        None => {
            let (Some(p), Some(v)) = (&c.prices, &c.vix) else {
                return Err(AppError::Config("--prices and --vix are required without --config".into()));
            };
            ProtocolConfig::new(p, v)
        }
    };
    if let Some(p) = &c.prices {
        cfg.input.prices = p.clone();
    }
    if let Some(v) = &c.vix {
        cfg.input.vix = v.clone();
    }
    if c.move_index.is_some() {
        cfg.input.move_index = c.move_index.clone();
    }
    if c.ted.is_some() {
        cfg.input.ted = c.ted.clone();
    }
    if let Some(w) = c.window {
        cfg.window = w;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_report(report: &ProtocolReport, keep_observables: bool) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    for t in &report.tables {
        if t.name == "observables" && !keep_observables {
            continue;
        }
        writeln!(out, "# {}", t.name)?;
        out.write_all(t.to_csv().as_bytes())?;
        writeln!(out)?;
    }
    if !report.summary.is_empty() {
        writeln!(out, "# summary")?;
        let s = serde_json::to_string_pretty(&serde_json::Value::Object(report.summary.clone())).map_err(std::io::Error::other)?;
        writeln!(out, "{s}")?;
    }
    Ok(())
}

/// Runs `stages` (observables first) and prints or writes the result.
fn run_stages(mut cfg: ProtocolConfig, stages: &[Stage], out: Option<PathBuf>) -> Result<bool, AppError> {
    let mut list = vec![Stage::Observables];
    list.extend_from_slice(stages);
    cfg.stages = list;
    cfg.validate()?;
    let report = run_protocol(&cfg);
    finish(&report, out, stages.is_empty())
}

fn finish(report: &ProtocolReport, out: Option<PathBuf>, keep_observables: bool) -> Result<bool, AppError> {
    for s in &report.manifest.stages {
        match &s.status {
            StageStatus::Failed(m) => eprintln!("stage {} failed: {m}", s.stage),
            StageStatus::Skipped(m) => eprintln!("stage {} skipped: {m}", s.stage),
            StageStatus::Ok => {}
        }
    }
    match out {
        Some(dir) => {
            for p in emit(report, &dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => print_report(report, keep_observables).map_err(|source| AppError::Output { path: "<stdout>".into(), source })?,
    }
    Ok(!report.failed())
}

fn run(cli: Cli) -> Result<bool, AppError> {
    match cli.command {
        Command::Build(c) => run_stages(base_config(&c)?, &[], c.out),
        Command::Fit { common, no_regime } => {
            let mut cfg = base_config(&common)?;
            if no_regime {
                cfg.models.regime = false;
            }
            run_stages(cfg, &[Stage::Models], common.out)
        }
        Command::Placebo { common, count, placebo_seed, twod } => {
            let mut cfg = base_config(&common)?;
            if let Some(n) = count {
                cfg.placebo.count = n;
            }
            if placebo_seed.is_some() {
                cfg.placebo.seed = placebo_seed;
            }
            cfg.placebo.twod |= twod;
            run_stages(cfg, &[Stage::Placebo], common.out)
        }
        Command::Decompose { common, split } => {
            let mut cfg = base_config(&common)?;
            if let Some(d) = split {
                cfg.decomposition.split = d;
            }
            run_stages(cfg, &[Stage::Decomposition], common.out)
        }
        Command::Diagnose { common, bands, mode, min_len, max_lag, draws, bootstrap_seed } => {
            let mut cfg = base_config(&common)?;
            let d = &mut cfg.diagnostics;
            if !bands.is_empty() {
                d.bands = bands;
            }
            if let Some(m) = mode {
                d.mode = if m == "strict" { QuietModeName::Strict } else { QuietModeName::Rolling };
            }
            d.min_len = min_len.unwrap_or(d.min_len);
            d.max_lag = max_lag.unwrap_or(d.max_lag);
            d.bootstrap_draws = draws.unwrap_or(d.bootstrap_draws);
            if bootstrap_seed.is_some() {
                d.seed = bootstrap_seed;
            }
            run_stages(cfg, &[Stage::Models, Stage::Diagnostics], common.out)
        }
        Command::Granger { common, max_lag } => {
            let mut cfg = base_config(&common)?;
            cfg.granger.max_lag = max_lag.unwrap_or(cfg.granger.max_lag);
            run_stages(cfg, &[Stage::Granger], common.out)
        }
        Command::Twod { common, thin } => {
            let mut cfg = base_config(&common)?;
            cfg.twod.thin = thin.unwrap_or(cfg.twod.thin);
            run_stages(cfg, &[Stage::Twod], common.out)
        }
        Command::Oos { common, splits, baseline, exclude, no_exclusion } => {
            let mut cfg = base_config(&common)?;
            if !splits.is_empty() {
                cfg.oos.splits = splits;
            }
            cfg.oos.baseline = baseline.unwrap_or(cfg.oos.baseline);
            if exclude.is_some() {
                cfg.oos.exclusion = exclude;
            }
            if no_exclusion {
                cfg.oos.exclusion = None;
            }
            run_stages(cfg, &[Stage::Oos], common.out)
        }
        Command::Sweep { common, windows } => {
            let mut cfg = base_config(&common)?;
            if !windows.is_empty() {
                cfg.sweep.windows = windows;
            }
            run_stages(cfg, &[Stage::Sweep], common.out)
        }
        Command::Residual { common, horizons, change } => {
            let mut cfg = base_config(&common)?;
            if !horizons.is_empty() {
                cfg.residual.horizons = horizons;
            }
            if let Some(c) = change {
                cfg.residual.change = if c == "level" { ChangeName::Level } else { ChangeName::Log };
            }
            run_stages(cfg, &[Stage::Residual], common.out)
        }
        Command::Synth { out, stocks, days, seed } => {
            let market = PlantedMarketConfig { n_stocks: stocks, n_days: days, ..Default::default() };
            write_world(&out, &market, seed)?;
            eprintln!("wrote {}", out.join("config.toml").display());
            Ok(true)
        }
        Command::RunAll { config, out } => {
            let cfg = ProtocolConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output.clone());
            let report = run_protocol(&cfg);
            finish(&report, Some(dir), false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
