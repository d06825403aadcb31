//! Command-line front end: parses flags and key=value configs, runs one
//! experiment, and writes CSV/JSON artifacts plus a manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use shearlab::energy::{check_freq_lemmas, ladder_ratios, mode_energy_omega, mode_energy_theta};
use shearlab::error::LabError;
use shearlab::linalg::expm_registry;
use shearlab::operators::OperatorMatrix;
use shearlab::resolvent::{compute_phi, default_lambda_grid};
use shearlab::semigroup::{decay_curve, wei_bound_check};
use shearlab::sim::{simulate, write_checkpoint, SimConfig, CONFIG_KEYS};
use shearlab::spectral::{ChebGrid, XTransform, C64};
use shearlab::threshold::{fit_exponent, threshold_sweep, SweepMode, ThresholdOptions};

/// Environment variable consulted for the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SHEARLAB_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "shearlab", version, about = "Couette-flow stability experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// key = value config file, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $SHEARLAB_OUTPUT_DIR or ./shearlab-out).
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for sweep-level parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// σ_min sweep over λ and the resulting Φ.
    Resolvent(PointArgs),
    /// Decay curve of ‖e^{-tA}‖ with the Wei-bound check.
    Semigroup(PointArgs),
    /// Nonlinear run from seeded initial data.
    Simulate,
    /// Amplitude bisection over a list of viscosities.
    Threshold,
    /// Per-mode energy functionals and ladder ratios of a run.
    EnergyReport,
    /// Frequency-lemma suites and grid exactness checks.
    Selftest,
}

#[derive(Debug, Args)]
struct PointArgs {
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Resolvent(_) => "resolvent",
            Command::Semigroup(_) => "semigroup",
            Command::Simulate => "simulate",
            Command::Threshold => "threshold",
            Command::EnergyReport => "energy-report",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Numerical(String),
    Other(String),
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        let msg = e.to_string();
        match e {
            LabError::Config(_)
            | LabError::InvalidArgument(_)
            | LabError::InvalidParameter(_)
            | LabError::InvalidResolution(_) => CliError::Config(msg),
            LabError::NumericalFailure { .. }
            | LabError::StepSize(_)
            | LabError::StateCorruption(_)
            | LabError::State(_)
            | LabError::Dimension { .. } => CliError::Numerical(msg),
            _ => CliError::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            EXIT_CONFIG
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            EXIT_NUMERICAL
        }
        Err(CliError::Other(m)) => {
            eprintln!("error: {m}");
            EXIT_FAILURE
        }
    }
}

/// Subcommand-specific keys and their defaults. `None` defers the default
/// to the simulation config.
fn allowed_keys(cmd: &str) -> Vec<(&'static str, Option<&'static str>)> {
    let sim = || CONFIG_KEYS.iter().map(|k| (*k, None)).collect::<Vec<_>>();
    match cmd {
        "resolvent" => vec![
            ("nu", Some("1e-3")),
            ("k", Some("1")),
            ("n", Some("128")),
            ("points", Some("401")),
        ],
        "semigroup" => vec![
            ("nu", Some("1e-3")),
            ("k", Some("1")),
            ("n", Some("128")),
            ("points", Some("100")),
            ("lambda_points", Some("401")),
            ("method", Some("auto")),
            ("horizon", Some("5")),
        ],
        "simulate" => {
            let mut v = sim();
            v.push(("checkpoint", Some("false")));
            v
        }
        "threshold" => {
            let mut v = sim();
            v.extend([
                ("nus", Some("1e-2,3e-3,1e-3")),
                ("mode", Some("joint")),
                ("eps_u", Some("0.1")),
                ("start", Some("auto")),
                ("tolerance", Some("0.1")),
                ("scan_factor", Some("4")),
                ("max_scans", Some("8")),
                ("horizon_factor", Some("20")),
            ]);
            v
        }
        "energy-report" => sim(),
        "selftest" => vec![("samples", Some("100000")), ("seed", Some("0"))],
        _ => Vec::new(),
    }
}

fn parse_kv_text(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    subcommand: String,
    config: BTreeMap<String, String>,
    config_hash: String,
    seed: Option<u64>,
    versions: BTreeMap<String, String>,
    threads: usize,
    wall_time_seconds: f64,
    outputs: Vec<String>,
}

fn load_config(path: &Path, cmd: &str) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("not a manifest: {e}")))?;
        if m.subcommand != cmd {
            return Err(CliError::Config(format!(
                "manifest is for '{}', not '{cmd}'",
                m.subcommand
            )));
        }
        return Ok(m.config);
    }
    parse_kv_text(&text)
}

/// Merges file entries, `--set` overrides and dedicated flags; rejects
/// unknown keys.
fn user_map(cli: &Cli) -> CliResult<BTreeMap<String, String>> {
    let cmd = cli.command.name();
    let mut map = match &cli.common.config {
        Some(p) => load_config(p, cmd)?,
        None => BTreeMap::new(),
    };
    for o in &cli.common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{o}' is not KEY=VALUE")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Command::Resolvent(p) | Command::Semigroup(p) = &cli.command {
        if let Some(nu) = p.nu {
            map.insert("nu".into(), format!("{nu:e}"));
        }
        if let Some(k) = p.k {
            map.insert("k".into(), format!("{k:e}"));
        }
    }
    if let Some(seed) = cli.common.seed {
        if allowed_keys(cmd).iter().any(|(k, _)| *k == "seed") {
            map.insert("seed".into(), seed.to_string());
        }
    }
    let allowed = allowed_keys(cmd);
    for key in map.keys() {
        if !allowed.iter().any(|(k, _)| k == key) {
            let names: Vec<&str> = allowed.iter().map(|(k, _)| *k).collect();
            return Err(CliError::Config(format!(
                "unknown key '{key}' for {cmd} (known: {})",
                names.join(", ")
            )));
        }
    }
    Ok(map)
}

/// Fills subcommand defaults; simulation keys are resolved by [`SimConfig`].
fn resolve(cmd: &str, user: &BTreeMap<String, String>) -> CliResult<(BTreeMap<String, String>, Option<SimConfig>)> {
    let allowed = allowed_keys(cmd);
    let mut sim_map = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (key, default) in &allowed {
        match (user.get(*key), default) {
            (Some(v), None) => {
                sim_map.insert(key.to_string(), v.clone());
            }
            (Some(v), Some(_)) => {
                out.insert(key.to_string(), v.clone());
            }
            (None, Some(d)) => {
                out.insert(key.to_string(), d.to_string());
            }
            (None, None) => {}
        }
    }
    let sim = if allowed.iter().any(|(_, d)| d.is_none()) {
        let cfg = SimConfig::resolve(&sim_map)?;
        out.extend(cfg.to_map());
        Some(cfg)
    } else {
        None
    };
    Ok((out, sim))
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> CliResult<T> {
    let v = map
        .get(key)
        .ok_or_else(|| CliError::Config(format!("missing key '{key}'")))?;
    v.parse()
        .map_err(|_| CliError::Config(format!("bad value '{v}' for '{key}'")))
}

fn canonical_text(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn run(cli: Cli) -> CliResult<()> {
    let start = Instant::now();
    let cmd = cli.command.name();
    let user = user_map(&cli)?;
    let (config, sim) = resolve(cmd, &user)?;

    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        // A pool may already exist when called repeatedly in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let out_dir = cli
        .common
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("shearlab-out"));
    fs::create_dir_all(&out_dir)?;
    let mut out = Output {
        dir: out_dir.clone(),
        files: Vec::new(),
    };

    match &cli.command {
        Command::Resolvent(_) => run_resolvent(&config, &mut out)?,
        Command::Semigroup(_) => run_semigroup(&config, &mut out)?,
        Command::Simulate => run_simulate(&config, sim.as_ref().expect("sim config"), &mut out)?,
        Command::Threshold => run_threshold(&config, sim.as_ref().expect("sim config"), &mut out)?,
        Command::EnergyReport => run_energy(sim.as_ref().expect("sim config"), &mut out)?,
        Command::Selftest => run_selftest(&config, &mut out)?,
    }

    let text = canonical_text(&config);
    fs::write(out_dir.join("config.txt"), &text)?;
    let mut versions = BTreeMap::new();
    versions.insert("shearlab".to_string(), env!("CARGO_PKG_VERSION").to_string());
    versions.insert("manifest".to_string(), "1".to_string());
    let seed = config.get("seed").and_then(|s| s.parse().ok());
    out.files.push("config.txt".into());
    let manifest = Manifest {
        subcommand: cmd.to_string(),
        config,
        config_hash: format!("{:x}", Sha256::digest(text.as_bytes())),
        seed,
        versions,
        threads: rayon::current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: out.files.clone(),
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

/// A CSV cell: numbers are written with 17 significant digits.
enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl Output {
    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> CliResult<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()?;
        self.files.push(name.into());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> CliResult<()> {
        fs::write(self.dir.join(name), serde_json::to_string_pretty(value)?)?;
        self.files.push(name.into());
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        fs::write(self.dir.join(name), body)?;
        self.files.push(name.into());
        Ok(())
    }
}

fn gnuplot(data: &str, x: usize, y: usize, xlabel: &str, ylabel: &str, logscale: &str) -> String {
    format!(
        "set datafile separator ','\nset key off\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n{}plot '{data}' every ::1 using {x}:{y} with linespoints\n",
        if logscale.is_empty() {
            String::new()
        } else {
            format!("set logscale {logscale}\n")
        }
    )
}

fn run_resolvent(cfg: &BTreeMap<String, String>, out: &mut Output) -> CliResult<()> {
    let nu: f64 = get(cfg, "nu")?;
    let k: f64 = get(cfg, "k")?;
    let n: usize = get(cfg, "n")?;
    let points: usize = get(cfg, "points")?;
    let g = ChebGrid::new(n)?;
    let a = OperatorMatrix::assemble(&g, nu, k)?;
    let sweep = compute_phi(&a, &default_lambda_grid(k, points))?;
    let rows: Vec<Vec<Cell>> = sweep
        .lambda_grid
        .iter()
        .zip(&sweep.sigma_min_values)
        .map(|(l, s)| vec![Cell::Num(*l), Cell::Num(*s)])
        .collect();
    out.csv("phi_sweep.csv", &["lambda", "sigma_min"], &rows)?;
    out.json(
        "summary.json",
        &json!({
            "nu": nu, "k": k, "n": n,
            "phi": sweep.phi,
            "lambda_star": sweep.lambda_star,
            "grid_phi": sweep.grid_phi,
            "lipschitz_lower_bound": sweep.lipschitz_lower_bound,
            "points": sweep.lambda_grid.len(),
        }),
    )?;
    out.text("plot.gp", &gnuplot("phi_sweep.csv", 1, 2, "lambda", "sigma_min", ""))
}

fn run_semigroup(cfg: &BTreeMap<String, String>, out: &mut Output) -> CliResult<()> {
    let nu: f64 = get(cfg, "nu")?;
    let k: f64 = get(cfg, "k")?;
    let n: usize = get(cfg, "n")?;
    let points: usize = get(cfg, "points")?;
    let horizon: f64 = get(cfg, "horizon")?;
    let method_name: String = get(cfg, "method")?;
    let method = expm_registry().get(&method_name)?;
    if points < 2 || !(horizon > 0.0) {
        return Err(CliError::Config("need points ≥ 2 and horizon > 0".into()));
    }
    let g = ChebGrid::new(n)?;
    let a = OperatorMatrix::assemble(&g, nu, k)?;
    let sweep = compute_phi(&a, &default_lambda_grid(k, get(cfg, "lambda_points")?))?;
    let t_max = horizon / sweep.phi;
    let times: Vec<f64> = (0..points)
        .map(|i| t_max * i as f64 / (points - 1) as f64)
        .collect();
    let curve = decay_curve(&a, &times, &*method)?;
    let wei = wei_bound_check(&curve, sweep.phi, 1e-6);
    let bound = |t: f64| (std::f64::consts::FRAC_PI_2 - sweep.phi * t).exp();
    let rows: Vec<Vec<Cell>> = curve
        .times
        .iter()
        .zip(&curve.norms)
        .map(|(t, v)| vec![Cell::Num(*t), Cell::Num(*v), Cell::Num(bound(*t))])
        .collect();
    out.csv("decay.csv", &["t", "norm", "wei_bound"], &rows)?;
    out.json(
        "summary.json",
        &json!({
            "nu": nu, "k": k, "n": n,
            "phi": sweep.phi,
            "method": curve.method,
            "fitted_rate": curve.fitted_rate,
            "fitted_prefactor": curve.fitted_prefactor,
            "rate_over_phi": curve.fitted_rate / sweep.phi,
            "wei": wei,
        }),
    )?;
    out.text("plot.gp", &gnuplot("decay.csv", 1, 2, "t", "norm", "y"))
}

fn run_simulate(cfg: &BTreeMap<String, String>, sim: &SimConfig, out: &mut Output) -> CliResult<()> {
    let checkpoint: bool = get(cfg, "checkpoint")?;
    let rec = simulate(sim)?;
    let rows: Vec<Vec<Cell>> = rec
        .snapshots
        .iter()
        .map(|s| {
            [s.t, s.e_omega, s.e_theta, s.e_total, s.instant_total, s.theta_l2, s.theta_max]
                .into_iter()
                .map(Cell::Num)
                .collect()
        })
        .collect();
    out.csv(
        "timeseries.csv",
        &["t", "e_omega", "e_theta", "e_total", "instant_total", "theta_l2", "theta_max"],
        &rows,
    )?;
    out.json(
        "summary.json",
        &json!({
            "outcome": rec.outcome,
            "steps": rec.steps,
            "diagnostics": rec.diagnostics,
            "final": rec.final_aggregates,
        }),
    )?;
    if checkpoint {
        if let Some(state) = &rec.final_state {
            let f = fs::File::create(out.dir.join("state.bin"))?;
            write_checkpoint(state, std::io::BufWriter::new(f))?;
            out.files.push("state.bin".into());
        }
    }
    out.text("plot.gp", &gnuplot("timeseries.csv", 1, 5, "t", "instantaneous E_total", "y"))
}

fn run_energy(sim: &SimConfig, out: &mut Output) -> CliResult<()> {
    let rec = simulate(sim)?;
    let ledger = rec
        .ledger
        .as_ref()
        .ok_or_else(|| CliError::Other("run produced no ledger".into()))?;
    let mut rows = Vec::new();
    for m in &ledger.modes {
        let r = ladder_ratios(m, ledger.nu)?;
        rows.push(vec![
            Cell::Num(m.k),
            Cell::Text(r.regime.label().to_string()),
            Cell::Num(m.weight),
            Cell::Num(mode_energy_omega(m, ledger.nu, m.k)?),
            Cell::Num(mode_energy_theta(m, ledger.nu, m.k)?),
            Cell::Num(r.u1_sup),
            Cell::Num(r.u1_l2_inf),
            Cell::Num(r.theta_sup),
            Cell::Num(r.theta_l2),
        ]);
    }
    out.csv(
        "energy_modes.csv",
        &[
            "k", "regime", "weight", "E_omega", "E_theta", "ratio_u1_sup", "ratio_u1_l2_inf",
            "ratio_theta_sup", "ratio_theta_l2",
        ],
        &rows,
    )?;
    out.json(
        "summary.json",
        &json!({ "outcome": rec.outcome, "aggregates": rec.final_aggregates, "time": ledger.time }),
    )?;
    out.text("plot.gp", &gnuplot("energy_modes.csv", 1, 4, "k", "E_k[omega_k]", "xy"))
}

fn run_threshold(cfg: &BTreeMap<String, String>, base: &SimConfig, out: &mut Output) -> CliResult<()> {
    let nus: Vec<f64> = cfg["nus"]
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("bad viscosity list '{}'", cfg["nus"])))?;
    let mode = match cfg["mode"].as_str() {
        "joint" => SweepMode::Joint,
        "theta" => SweepMode::ThetaOnly {
            eps_u: get(cfg, "eps_u")?,
        },
        other => return Err(CliError::Config(format!("unknown mode '{other}' (joint, theta)"))),
    };
    let start = match cfg["start"].as_str() {
        "auto" => None,
        s => Some(
            s.parse()
                .map_err(|_| CliError::Config(format!("bad start amplitude '{s}'")))?,
        ),
    };
    let opts = ThresholdOptions {
        mode,
        start,
        scan_factor: get(cfg, "scan_factor")?,
        max_scans: get(cfg, "max_scans")?,
        tolerance: get(cfg, "tolerance")?,
        horizon_factor: get(cfg, "horizon_factor")?,
        criterion: "bootstrap".into(),
    };
    let points = threshold_sweep(base, &nus, &opts)?;
    let opt = |v: Option<f64>| Cell::Num(v.unwrap_or(f64::NAN));
    let rows: Vec<Vec<Cell>> = points
        .iter()
        .map(|p| {
            vec![
                Cell::Num(p.nu),
                opt(p.eps_star),
                opt(p.lower),
                opt(p.upper),
                Cell::Text(match &p.outcome {
                    shearlab::threshold::BisectionOutcome::Converged => "converged".into(),
                    shearlab::threshold::BisectionOutcome::BracketFailure { .. } => {
                        "bracket-failure".into()
                    }
                }),
            ]
        })
        .collect();
    out.csv("thresholds.csv", &["nu", "eps_star", "lower", "upper", "outcome"], &rows)?;
    let mut runs = Vec::new();
    for p in &points {
        for r in &p.runs {
            runs.push(vec![
                Cell::Num(p.nu),
                Cell::Num(r.eps),
                Cell::Text(format!("{:?}", r.verdict).to_lowercase()),
                Cell::Num(r.peak_ratio),
                Cell::Num(r.final_ratio),
            ]);
        }
    }
    out.csv("runs.csv", &["nu", "eps", "verdict", "peak_ratio", "final_ratio"], &runs)?;
    out.json("points.json", &serde_json::to_value(&points)?)?;
    let fit = match fit_exponent(&points, mode.predicted_exponent()) {
        Ok(f) => json!({
            "slope": f.slope,
            "intercept": f.intercept,
            "residual": f.residual,
            "predicted": f.predicted,
            "difference": f.slope - f.predicted,
            "points_used": f.points_used,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    out.json(
        "fit.json",
        &json!({ "fit": fit, "criterion": { "name": "bootstrap", "k_boot": 4.0 } }),
    )?;
    out.text("plot.gp", &gnuplot("thresholds.csv", 1, 2, "nu", "eps_star", "xy"))
}

fn run_selftest(cfg: &BTreeMap<String, String>, out: &mut Output) -> CliResult<()> {
    let samples: usize = get(cfg, "samples")?;
    let seed: u64 = get(cfg, "seed")?;
    let report = check_freq_lemmas(samples, seed)?;

    let g = ChebGrid::new(16)?;
    let y = g.nodes().clone();
    let quad_err = (g.integrate(&y.map(|v| v.powi(6))) - 2.0 / 7.0).abs();
    let cube = y.map(|v| C64::from(v.powi(3)));
    let diff_err = (g.diff(&cube) - y.map(|v| C64::from(3.0 * v * v)))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let tr = XTransform::new(8);
    let modes = vec![
        nalgebra::DVector::from_element(1, C64::from(0.3)),
        nalgebra::DVector::from_element(1, C64::new(0.1, -0.2)),
        nalgebra::DVector::from_element(1, C64::new(-0.4, 0.05)),
        nalgebra::DVector::from_element(1, C64::new(0.0, 0.7)),
    ];
    let back = tr.to_modes(&tr.to_physical(&modes, 4), 4);
    let fft_err = modes
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let grid_ok = quad_err < 1e-13 && diff_err < 1e-11 && fft_err < 1e-14;
    out.json(
        "selftest.json",
        &json!({
            "frequency_lemmas": report,
            "frequency_lemmas_passed": report.passed(),
            "quadrature_error": quad_err,
            "differentiation_error": diff_err,
            "fft_roundtrip_error": fft_err,
            "grid_passed": grid_ok,
        }),
    )?;
    if report.passed() && grid_ok {
        Ok(())
    } else {
        Err(CliError::Numerical("self-test failed; see selftest.json".into()))
    }
}
