use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use oam_spdc::config::{ConfigError, RunConfig, SweepSection};
use oam_spdc::metrics::{entanglement_of_formation, make_target, r_squared, schmidt_number, TargetShape};
use oam_spdc::optimize::{optimize, sweep, sweep_csv, OptimizationResult};
use oam_spdc::schmidt::{joint_radial_distribution, postselection_comparison, radial_sum_convergence, schmidt_spectrum, GridMeta};
use oam_spdc::{Error, GridTier};

const MANIFEST: &str = "manifest.toml";
const THREADS_ENV: &str = "OAM_SPDC_THREADS";

#[derive(Parser)]
#[command(name = "oam-spdc", version, about = "OAM Schmidt spectra of shaped-pump SPDC and pump coefficient optimisation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Run configuration (TOML) or a previous run manifest.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override `[swarm] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the evaluation tier (search tier for optimize/sweep).
    #[arg(long, value_parser = parse_tier)]
    grid_tier: Option<GridTier>,
}

#[derive(Subcommand)]
enum Command {
    /// Schmidt spectrum of the configured pump with E_f, K_a and R².
    Spectrum(Common),
    /// Fit pump coefficients to the configured target.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Report the swarm result without step-wise refinement.
        #[arg(long)]
        skip_refine: bool,
    },
    /// Generation accuracy against one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of theta_p, N, L.
        #[arg(long)]
        parameter: Option<String>,
        /// Comma-separated values (degrees for theta_p, mm for L).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        skip_refine: bool,
    },
    /// Joint radial distributions and p = 0 postselected spectra.
    Postselect {
        #[command(flatten)]
        common: Common,
        /// Comma-separated detection-to-pump waist ratios.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// Print a target spectrum as `l,S_l` rows.
    Targets {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        shape: Option<String>,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_tier(s: &str) -> Result<GridTier, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Config(String),
    Physics(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Physics(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Physics(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(format!("configuration error: {e}"))
    }
}

fn physics(context: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Physics(format!("{} (config {})", e, context.display()))
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Other(format!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    timestamp: String,
    seed: u64,
    outputs: Vec<String>,
    config: RunConfig,
}

/// `SOURCE_DATE_EPOCH` when set, so manifests can be reproduced byte for byte.
fn timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse::<i64>().ok());
    let time = match fixed {
        Some(secs) => chrono::DateTime::from_timestamp(secs, 0).unwrap_or_default(),
        None => chrono::Utc::now(),
    };
    time.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn csv(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        self.write(name, &format!("# manifest: {MANIFEST}\n{body}"))
    }

    fn toml<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let body = toml::to_string(value).map_err(|e| Failure::Other(e.to_string()))?;
        self.write(name, &format!("manifest = \"{MANIFEST}\"\n{body}"))
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(io(&path))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(self, command: &str, config: &RunConfig) -> Result<(), Failure> {
        let manifest = RunManifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: timestamp(),
            seed: config.swarm.seed,
            outputs: self.files.clone(),
            config: config.resolved()?,
        };
        let body = toml::to_string(&manifest).map_err(|e| Failure::Other(e.to_string()))?;
        let path = self.dir.join(MANIFEST);
        fs::write(&path, body).map_err(io(&path))
    }
}

fn load(common: &Common, search: bool) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.swarm.seed = seed;
    }
    if let Some(tier) = common.grid_tier {
        if search {
            cfg.grids.search_tier = tier;
        } else {
            cfg.grids.tier = tier;
        }
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct SpectrumSummary {
    window: usize,
    schmidt_number: f64,
    entanglement_of_formation_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_squared_percent: Option<f64>,
    grid: Option<GridMeta>,
}

fn cmd_spectrum(common: &Common) -> Result<(), Failure> {
    let cfg = load(common, false)?;
    let ctx = &common.config;
    let (pump, crystal) = (cfg.pump()?, cfg.crystal()?);
    let target = cfg.target()?;
    let spectrum = schmidt_spectrum(&pump, &crystal, cfg.window(), &cfg.grids.spec(cfg.grids.tier)).map_err(physics(ctx))?;
    let r2 = target.as_ref().map(|t| r_squared(t, &spectrum)).transpose().map_err(physics(ctx))?;
    let summary = SpectrumSummary {
        window: spectrum.window(),
        schmidt_number: schmidt_number(&spectrum),
        entanglement_of_formation_bits: entanglement_of_formation(&spectrum),
        r_squared_percent: r2,
        grid: spectrum.grid(),
    };
    println!("K_a = {:.4}", summary.schmidt_number);
    println!("E_f = {:.4} bits", summary.entanglement_of_formation_bits);
    if let Some(r) = r2 {
        println!("R^2 = {r:.4} %");
    }
    let mut out = Output::create(&common.out)?;
    out.csv("spectrum.csv", &spectrum.to_csv())?;
    out.toml("summary.toml", &summary)?;
    out.finish("spectrum", &cfg)
}

fn history_csv(result: &OptimizationResult) -> String {
    let mut s = String::from("iteration,best_r_squared_percent\n");
    for (i, v) in result.history.iter().enumerate() {
        s.push_str(&format!("{i},{v:.12}\n"));
    }
    s
}

fn cmd_optimize(common: &Common, skip_refine: bool) -> Result<(), Failure> {
    let mut cfg = load(common, true)?;
    if skip_refine {
        cfg.refine.enabled = false;
    }
    let ctx = &common.config;
    let target = cfg.require_target()?;
    let setup = cfg.setup()?;
    let result = optimize(&target, &setup, &cfg.swarm.swarm(), &cfg.run_options()).map_err(physics(ctx))?;
    let spectrum = setup.report_spectrum(&result.complex_coefficients()).map_err(physics(ctx))?;
    println!("G = {:.4} % (swarm {:.4} %)", result.g, result.swarm_g);
    println!("K_a = {:.4}, E_f = {:.4} bits", schmidt_number(&spectrum), entanglement_of_formation(&spectrum));
    let mut out = Output::create(&common.out)?;
    out.toml("result.toml", &result)?;
    out.csv("spectrum.csv", &spectrum.to_csv())?;
    out.csv("target.csv", &target.to_csv())?;
    out.csv("history.csv", &history_csv(&result))?;
    out.finish("optimize", &cfg)
}

fn cmd_sweep(common: &Common, parameter: Option<String>, values: Option<Vec<f64>>, skip_refine: bool) -> Result<(), Failure> {
    let mut cfg = load(common, true)?;
    if skip_refine {
        cfg.refine.enabled = false;
    }
    if parameter.is_some() || values.is_some() {
        let base = cfg.sweep.clone();
        let parameter = parameter.or_else(|| base.as_ref().map(|s| s.parameter.clone()));
        let values = values.or_else(|| base.as_ref().map(|s| s.values.clone()));
        let (Some(parameter), Some(values)) = (parameter, values) else {
            return Err(Failure::Config("configuration error: sweep needs both a parameter and values".into()));
        };
        let theta_candidates_deg = base.map(|s| s.theta_candidates_deg).unwrap_or_default();
        cfg.sweep = Some(SweepSection { parameter, values, theta_candidates_deg });
    }
    let ctx = &common.config;
    let (parameter, values, options) = cfg.sweep_parameter()?;
    let target = cfg.require_target()?;
    let setup = cfg.setup()?;
    let points = sweep(parameter, &values, &target, &setup, &cfg.swarm.swarm(), &options).map_err(physics(ctx))?;
    for p in &points {
        println!("{} = {}: G = {:.4} %", parameter, p.value, p.g);
    }
    let mut out = Output::create(&common.out)?;
    out.csv(&format!("sweep_{}.csv", parameter.name()), &sweep_csv(parameter, &points))?;
    out.finish("sweep", &cfg)
}

#[derive(Serialize)]
struct PostselectRow {
    waist_ratio: f64,
    postselected_fraction: f64,
    joint_00: f64,
}

fn cmd_postselect(common: &Common, ratios: Option<Vec<f64>>) -> Result<(), Failure> {
    let mut cfg = load(common, false)?;
    if let Some(r) = ratios {
        cfg.detection.ratios = r;
    }
    if let Some(bad) = cfg.detection.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Failure::Physics(format!("domain error: waist ratio must be positive, got {bad}")));
    }
    let ctx = &common.config;
    let (pump, crystal) = (cfg.pump()?, cfg.crystal()?);
    let grid = cfg.grids.spec(cfg.grids.tier);
    let window = cfg.window();
    let mut out = Output::create(&common.out)?;
    let mut table = String::from("waist_ratio,postselected_fraction,joint_00\n");
    for &ratio in &cfg.detection.ratios {
        let joint = joint_radial_distribution(&pump, &crystal, ratio, cfg.detection.p_max, &grid).map_err(physics(ctx))?;
        let cmp = postselection_comparison(&pump, &crystal, ratio * pump.waist(), window, &grid).map_err(physics(ctx))?;
        let row = PostselectRow { waist_ratio: ratio, postselected_fraction: cmp.fraction(), joint_00: joint.get(0, 0) };
        println!("w_s/w_p = {ratio}: postselected fraction {:.6e}, joint (0,0) {:.4}", row.postselected_fraction, row.joint_00);
        table.push_str(&format!("{},{:e},{:e}\n", row.waist_ratio, row.postselected_fraction, row.joint_00));
        out.csv(&format!("joint_w{ratio}.csv"), &joint.to_csv())?;
        out.csv(&format!("spectra_w{ratio}.csv"), &cmp.to_csv())?;
    }
    out.csv("postselect.csv", &table)?;

    let conv = radial_sum_convergence(0, &pump, &crystal, cfg.detection_waist(), cfg.detection.p_cutoff, &grid)
        .map_err(physics(ctx))?;
    let mut body = String::from("p_cutoff,partial_sum,captured_fraction\n");
    for (p, (s, f)) in conv.partial_sums.iter().zip(conv.captured_fraction()).enumerate() {
        body.push_str(&format!("{p},{s:e},{f:.12}\n"));
    }
    out.csv("radial_convergence.csv", &body)?;
    out.finish("postselect", &cfg)
}

fn cmd_targets(
    config: Option<PathBuf>,
    shape: Option<String>,
    width: Option<f64>,
    window: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let from_cfg = match &config {
        Some(path) => RunConfig::load(path)?.target,
        None => None,
    };
    let shape = shape.or_else(|| from_cfg.as_ref().map(|t| t.shape.clone()));
    let width = width.or_else(|| from_cfg.as_ref().map(|t| t.width));
    let window = window.or_else(|| from_cfg.as_ref().map(|t| t.window)).unwrap_or(oam_spdc::schmidt::DEFAULT_WINDOW);
    let (Some(shape), Some(width)) = (shape, width) else {
        return Err(Failure::Config("configuration error: targets needs --shape and --width or a config with [target]".into()));
    };
    let shape: TargetShape = shape.parse().map_err(|e: Error| Failure::Config(format!("configuration error: {e}")))?;
    let target = make_target(shape, width, window).map_err(|e| Failure::Config(format!("configuration error: {e}")))?;
    match out {
        Some(path) => fs::write(&path, target.to_csv()).map_err(io(&path)),
        None => {
            print!("{}", target.to_csv());
            Ok(())
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .map_err(|_| Failure::Config(format!("configuration error: {THREADS_ENV} must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Other(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Spectrum(c) => cmd_spectrum(&c),
        Command::Optimize { common, skip_refine } => cmd_optimize(&common, skip_refine),
        Command::Sweep { common, parameter, values, skip_refine } => cmd_sweep(&common, parameter, values, skip_refine),
        Command::Postselect { common, ratios } => cmd_postselect(&common, ratios),
        Command::Targets { config, shape, width, window, out } => cmd_targets(config, shape, width, window, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
