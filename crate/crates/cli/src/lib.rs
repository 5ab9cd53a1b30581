//! Batch front end for the kinetic solver and the verification suite:
//! `simulate`, `verify`, `decay-fit` and `lsmall`. Every run writes CSV
//! tables and a `manifest.json` into the output directory.

pub mod error;
pub mod manifest;
pub mod output;
pub mod suite;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use boltzmann_core::geometry::LevelSetDomain;
use boltzmann_core::solver::{fit_log_linear, DomainChoice, SimConfig, Simulation, PRESETS};
use boltzmann_core::verify::{check_cycle_probability, CycleTable, EstimateReport};
use boltzmann_core::Vec3;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use error::CliError;
pub use manifest::RunManifest;
use suite::{cycle_report, run_check, SuiteConfig, CHECK_NAMES};

/// Environment variable read for the default output directory.
pub const OUT_ENV: &str = "BOLTZMANN_OUT";

#[derive(Debug, Parser)]
#[command(name = "boltzmann", version, about = "Cutoff hard-potential Boltzmann solver and estimate checks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the resolved configuration and exit without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation from a JSON configuration, a manifest or a preset.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
    },
    /// Run one named check, or `all`.
    Verify {
        check: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit log(column) = a − λt over rows with t ≥ t_min of a time-series CSV.
    DecayFit {
        csv: PathBuf,
        #[arg(long, default_value = "lp_v_linf_x")]
        column: String,
        #[arg(long, default_value_t = 0.0)]
        t_min: f64,
    },
    /// Tabulate the probability that a back-time cycle has not reached t = 0.
    Lsmall {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Settings of the cycle-probability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleConfig {
    pub domain: DomainChoice,
    pub radius: Option<f64>,
    pub semi_axes: Option<[f64; 3]>,
    pub exponents: Option<[f64; 3]>,
    pub x: [f64; 3],
    pub v: [f64; 3],
    pub t_list: Vec<f64>,
    pub k_list: Vec<usize>,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        let s = SuiteConfig::default();
        CycleConfig {
            domain: DomainChoice::UnitBall,
            radius: None,
            semi_axes: None,
            exponents: None,
            x: s.cycle_x,
            v: s.cycle_v,
            t_list: s.cycle_t,
            k_list: s.cycle_k,
            n_samples: s.cycle_samples,
            seed: s.seed,
        }
    }
}

impl CycleConfig {
    fn domain(&self) -> Result<LevelSetDomain, CliError> {
        Ok(match self.domain {
            DomainChoice::Homogeneous => return Err(CliError::Config("`domain` must be bounded for cycle tables".into())),
            DomainChoice::UnitBall => LevelSetDomain::unit_ball(),
            DomainChoice::Ball => LevelSetDomain::scaled_ball(self.radius.ok_or_else(|| CliError::Config("domain `ball` needs `radius`".into()))?)?,
            DomainChoice::Superellipsoid => match (self.semi_axes, self.exponents) {
                (Some(a), Some(e)) => LevelSetDomain::superellipsoid(a, e)?,
                _ => return Err(CliError::Config("domain `superellipsoid` needs `semi_axes` and `exponents`".into())),
            },
        })
    }
}

/// What a command leaves behind: named output bytes plus the manifest
/// ingredients.
struct RunRecord {
    command: String,
    config: serde_json::Value,
    seed: u64,
    grid_hashes: Vec<String>,
    outputs: Vec<(String, Vec<u8>)>,
    /// Set when a check failed; outputs are still written.
    failure: Option<String>,
}

/// Parses the command line and runs it. Returns the manifest of runs that
/// write outputs.
pub fn run(cli: &Cli) -> Result<Option<RunManifest>, CliError> {
    match cli.global.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<Option<RunManifest>, CliError> {
    let start = Instant::now();
    let g = &cli.global;
    let record = match &cli.command {
        Command::Simulate { config, preset } => simulate(g, config.as_deref(), preset.as_deref())?,
        Command::Verify { check, config } => verify(g, check, config.as_deref())?,
        Command::DecayFit { csv, column, t_min } => {
            decay_fit(csv, column, *t_min)?;
            None
        }
        Command::Lsmall { config } => lsmall(g, config.as_deref())?,
    };
    let Some(record) = record else { return Ok(None) };
    std::fs::create_dir_all(&g.out)?;
    for (name, bytes) in &record.outputs {
        std::fs::write(g.out.join(name), bytes)?;
    }
    let mut manifest = RunManifest::new(&record.command, record.config, record.seed, record.grid_hashes, &record.outputs);
    manifest.threads = g.threads;
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    std::fs::write(g.out.join("manifest.json"), serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.into()))?)?;
    match record.failure {
        Some(msg) => Err(CliError::Failed(msg)),
        None => Ok(Some(manifest)),
    }
}

/// Reads a JSON configuration, unwrapping a manifest to its config echo.
fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if RunManifest::looks_like(&doc) {
        doc = doc["config"].take();
    }
    serde_json::from_value(doc).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).expect("configurations serialize")
}

fn print_config<T: Serialize>(x: &T) {
    // a closed pipe (`| head`) is not an error for a dry run
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(x).expect("configurations serialize"));
}

fn simulate(g: &GlobalArgs, config: Option<&Path>, preset: Option<&str>) -> Result<Option<RunRecord>, CliError> {
    let mut cfg: SimConfig = match (config, preset) {
        (Some(path), _) => read_config(path)?,
        (None, Some(name)) => SimConfig::preset(name)
            .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`; valid presets: {}", PRESETS.join(", "))))?,
        (None, None) => return Err(CliError::Usage("simulate needs --config or --preset".into())),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if g.dry_run {
        print_config(&cfg);
        return Ok(None);
    }
    let sim = Simulation::new(&cfg)?;
    let series = sim.run()?;
    for w in &series.warnings {
        eprintln!("warning: {w}");
    }
    let last = series.reports.last().expect("a run reports at t = 0");
    println!(
        "simulate: {} reports to t = {}; entropy {:.6e} -> {:.6e}; min F {:.3e}",
        series.reports.len(),
        last.t,
        series.reports[0].entropy,
        last.entropy,
        series.positivity_min
    );
    Ok(Some(RunRecord {
        command: "simulate".into(),
        config: to_value(&cfg),
        seed: cfg.seed,
        grid_hashes: vec![sim.grid().hash()],
        outputs: vec![("timeseries.csv".into(), output::time_series_csv(&series.reports)?)],
        failure: None,
    }))
}

fn verify(g: &GlobalArgs, check: &str, config: Option<&Path>) -> Result<Option<RunRecord>, CliError> {
    let names: Vec<&str> = match check {
        "all" => CHECK_NAMES.to_vec(),
        name if suite::is_check(name) => vec![name],
        other => return Err(CliError::Usage(format!("unknown check `{other}`; valid checks: {}, all", CHECK_NAMES.join(", ")))),
    };
    let mut cfg: SuiteConfig = match config {
        Some(path) => read_config(path)?,
        None => SuiteConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if g.dry_run {
        print_config(&cfg);
        return Ok(None);
    }
    let mut reports: Vec<EstimateReport> = Vec::new();
    let mut cycles: Option<CycleTable> = None;
    for name in names {
        let out = run_check(name, &cfg)?;
        for r in &out.reports {
            println!(
                "{} {:<40} ratio_sup={:.6e} trend={:?} max_change={:.3} {}",
                if r.pass { "PASS" } else { "FAIL" },
                r.name,
                r.ratio_sup,
                r.refinement_trend,
                r.max_change(),
                r.note
            );
        }
        reports.extend(out.reports);
        cycles = cycles.or(out.cycles);
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    let mut grid_hashes: Vec<String> = reports.iter().flat_map(|r| r.levels.iter().map(|l| l.grid_hash.clone())).collect();
    grid_hashes.sort();
    grid_hashes.dedup();
    let mut outputs = vec![
        ("reports.csv".to_string(), output::report_csv(&reports)?),
        ("levels.csv".to_string(), output::levels_csv(&reports)?),
        ("profiles.csv".to_string(), output::profile_csv(&reports)?),
    ];
    if let Some(table) = &cycles {
        outputs.push(("cycles.csv".into(), output::cycle_csv(table)?));
    }
    println!("verify: {} of {} reports pass", reports.len() - failed.len(), reports.len());
    Ok(Some(RunRecord {
        command: format!("verify {check}"),
        config: to_value(&cfg),
        seed: cfg.seed,
        grid_hashes,
        outputs,
        failure: (!failed.is_empty()).then(|| failed.join(", ")),
    }))
}

/// Reads the `t` column and `column` from a time-series CSV.
pub fn read_series(path: &Path, column: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Usage(format!("no column `{name}` in {}; columns: {}", path.display(), headers.iter().collect::<Vec<_>>().join(", ")))
        })
    };
    let (it, ic) = (find("t")?, find(column)?);
    let mut t = Vec::new();
    let mut v = Vec::new();
    for row in reader.records() {
        let row = row?;
        let parse = |i: usize| row[i].trim().parse::<f64>().map_err(|e| CliError::Config(format!("bad number `{}`: {e}", &row[i])));
        t.push(parse(it)?);
        v.push(parse(ic)?);
    }
    Ok((t, v))
}

fn decay_fit(path: &Path, column: &str, t_min: f64) -> Result<(), CliError> {
    let (t, v) = read_series(path, column)?;
    let (t, v): (Vec<f64>, Vec<f64>) = t.into_iter().zip(v).filter(|(t, _)| *t >= t_min).unzip();
    let (rate, r2) = fit_log_linear(&t, &v)?;
    println!("lambda_hat,r2,points");
    println!("{rate},{r2},{}", t.len());
    Ok(())
}

fn lsmall(g: &GlobalArgs, config: Option<&Path>) -> Result<Option<RunRecord>, CliError> {
    let mut cfg: CycleConfig = match config {
        Some(path) => read_config(path)?,
        None => CycleConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let dom = cfg.domain()?;
    if g.dry_run {
        print_config(&cfg);
        return Ok(None);
    }
    let table = check_cycle_probability(&dom, &Vec3::from(cfg.x), &Vec3::from(cfg.v), &cfg.t_list, &cfg.k_list, cfg.n_samples, cfg.seed)?;
    for r in &table.rows {
        println!("t = {:<6} k = {:<4} p = {:.4} ± {:.4}", r.t, r.k, r.p_hat, r.stderr);
    }
    let summary = cycle_report(&table, SuiteConfig::default().cycle_level);
    println!("lsmall: monotone in k: {}; {}", table.monotone_in_k, summary.note);
    Ok(Some(RunRecord {
        command: "lsmall".into(),
        config: to_value(&cfg),
        seed: cfg.seed,
        grid_hashes: Vec::new(),
        outputs: vec![("lsmall.csv".into(), output::cycle_csv(&table)?)],
        failure: None,
    }))
}
