//! The `revsle` command line.
//!
//! Each subcommand reads an optional JSON config (`--config`), applies flag
//! overrides, and writes its outputs plus a `manifest.json` into
//! `<out>/<subcommand>-<digest>/`, where `<digest>` is a prefix of the
//! SHA-256 of the canonical config. The output root is `--out`, else
//! `$REVSLE_OUT_DIR`, else `revsle-runs`. Exit codes: 0 pass, 1 failed
//! verdict, 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use num::complex::Complex64;
use num::BigRational;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cft::{cft_row_exact, kac_weight_of, CftRow, Sector};
use crate::driving::{sample_brownian, TimeGrid};
use crate::loewner::{
    evolve_backward, evolve_forward, evolve_wholeplane, LoewnerEvolution, RadialControl, RadialStatus,
};
use crate::montecarlo::{
    default_checkpoints, run_composed_stats, run_inverse_consistency, run_martingale_test, sample_seed, with_workers,
    ComposedConfig, InverseConfig, McConfig,
};
use crate::numeric::{parse_rational, rational_to_f64};
use crate::observables::{audit_printed_exponents, one_point_exponents, ExponentRoots, ObservableSpec, PairCheck};
use crate::virasoro::virasoro_report;

pub const OUT_DIR_ENV: &str = "REVSLE_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "revsle-runs";
const DIGEST_PREFIX: usize = 12;

#[derive(Debug, Parser)]
#[command(
    name = "revsle",
    version,
    about = "Forward and backward SLE experiments",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a driving path and evaluate the forward chain at test points.
    SimulateForward(RunArgs),
    /// Sample a driving path and evaluate the backward chain at test points.
    SimulateBackward(RunArgs),
    /// Tip samples of a forward chain (zipper).
    Trace(RunArgs),
    /// Whole-plane flow on the half-plane for a grid of points.
    Radial(RunArgs),
    /// Central charges and degenerate weights over a list of kappa values.
    CftTable(RunArgs),
    /// Exact null-vector and radial eigenvalue checks.
    VirasoroCheck(RunArgs),
    /// Drift-free one-point exponents and the explicit-observable audit.
    Exponents(RunArgs),
    /// Monte Carlo martingale test of a one-point observable.
    MartingaleTest(RunArgs),
    /// Backward flow on the reversed driving against the forward flow.
    InverseCheck(RunArgs),
    /// Composed forward/backward process statistics.
    Composed(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
struct RunArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated list; fractions such as 8/3 are exact.
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output root directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// liouville or matter.
    #[arg(long)]
    sector: Option<String>,
    /// Conformal weight h (exponents) or the derivative exponent a (martingale-test).
    #[arg(long, allow_negative_numbers = true)]
    weight: Option<f64>,
    /// Drive both legs of the composed process with one path.
    #[arg(long)]
    shared: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let result = match &cli.command {
        Command::SimulateForward(a) => execute::<SimulateConfig>("simulate-forward", a, |c, x| c.run(x, true)),
        Command::SimulateBackward(a) => execute::<SimulateConfig>("simulate-backward", a, |c, x| c.run(x, false)),
        Command::Trace(a) => execute::<TraceConfig>("trace", a, TraceConfig::run),
        Command::Radial(a) => execute::<RadialRunConfig>("radial", a, RadialRunConfig::run),
        Command::CftTable(a) => execute::<CftTableConfig>("cft-table", a, CftTableConfig::run),
        Command::VirasoroCheck(a) => execute::<VirasoroConfig>("virasoro-check", a, VirasoroConfig::run),
        Command::Exponents(a) => execute::<ExponentsConfig>("exponents", a, ExponentsConfig::run),
        Command::MartingaleTest(a) => execute::<MartingaleRunConfig>("martingale-test", a, MartingaleRunConfig::run),
        Command::InverseCheck(a) => execute::<InverseRunConfig>("inverse-check", a, InverseRunConfig::run),
        Command::Composed(a) => execute::<ComposedRunConfig>("composed", a, ComposedRunConfig::run),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

/// Written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_digest: String,
    pub tool_version: String,
    pub master_seed: Option<u64>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub passed: bool,
}

struct RunContext {
    dir: PathBuf,
    outputs: Vec<String>,
    workers: Option<usize>,
}

impl RunContext {
    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<String> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())?;
        Ok(text)
    }
}

trait Experiment: Serialize + DeserializeOwned + Default {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()>;
    fn master_seed(&self) -> Option<u64> {
        None
    }
}

fn load_config<T: Experiment>(args: &RunArgs) -> CliResult<T> {
    let mut config: T = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?
        }
        None => T::default(),
    };
    config.apply_flags(args)?;
    Ok(config)
}

fn out_root(args: &RunArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// SHA-256 over the subcommand name and the canonical config JSON.
fn config_digest<T: Serialize>(name: &str, config: &T) -> CliResult<String> {
    let mut hasher = Sha256::new();
    hasher.update(name.as_bytes());
    hasher.update([0u8]);
    hasher.update(serde_json::to_vec(config)?);
    Ok(hex::encode(hasher.finalize()))
}

fn execute<T: Experiment>(
    name: &str,
    args: &RunArgs,
    run: impl FnOnce(&T, &mut RunContext) -> CliResult<bool>,
) -> CliResult<bool> {
    let config: T = load_config(args)?;
    let digest = config_digest(name, &config)?;
    let dir = out_root(args).join(format!("{name}-{}", &digest[..DIGEST_PREFIX]));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut ctx = RunContext {
        dir,
        outputs: Vec::new(),
        workers: args.workers,
    };
    let started = Instant::now();
    let mut canonical = serde_json::to_string_pretty(&config)?;
    canonical.push('\n');
    ctx.write("config.json", canonical.as_bytes())?;
    let passed = run(&config, &mut ctx)?;
    let manifest = RunManifest {
        subcommand: name.to_string(),
        config_digest: digest,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed(),
        outputs: ctx.outputs.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        passed,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(ctx.dir.join("manifest.json"), text + "\n")?;
    eprintln!("{name}: outputs in {}", ctx.dir.display());
    Ok(passed)
}

fn parse_kappa_list(text: &str) -> CliResult<Vec<BigRational>> {
    text.split(',')
        .map(|item| {
            let value = parse_rational(item).ok_or_else(|| anyhow!("cannot parse kappa value {item:?}"))?;
            if value <= BigRational::from_integer(0.into()) {
                bail!("kappa must be positive, got {item}");
            }
            Ok(value)
        })
        .collect::<anyhow::Result<_>>()
        .map_err(Failure::from)
}

fn single_kappa(args: &RunArgs) -> CliResult<Option<f64>> {
    let Some(text) = &args.kappa else { return Ok(None) };
    let list = parse_kappa_list(text)?;
    if list.len() != 1 {
        return Err(anyhow!("this subcommand takes a single kappa, got {}", list.len()).into());
    }
    Ok(Some(rational_to_f64(&list[0])))
}

fn positive(name: &str, value: f64) -> CliResult<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(anyhow!("{name} must be positive, got {value}").into())
    }
}

fn override_common(
    args: &RunArgs,
    kappa: &mut f64,
    horizon: &mut f64,
    steps: &mut usize,
    seed: &mut u64,
) -> CliResult<()> {
    if let Some(k) = single_kappa(args)? {
        *kappa = k;
    }
    if let Some(h) = args.horizon {
        *horizon = h;
    }
    if let Some(n) = args.steps {
        *steps = n;
    }
    if let Some(s) = args.seed {
        *seed = s;
    }
    positive("kappa", *kappa)?;
    if !(horizon.is_finite() && *horizon >= 0.0) {
        return Err(anyhow!("horizon must be non-negative").into());
    }
    if *steps == 0 {
        return Err(anyhow!("steps must be at least 1").into());
    }
    Ok(())
}

fn default_points() -> Vec<[f64; 2]> {
    vec![[0.0, 1.0], [1.0, 1.0], [-1.0, 1.0], [0.5, 2.0]]
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> CliResult<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    kappa: f64,
    horizon: f64,
    steps: usize,
    seed: u64,
    points: Vec<[f64; 2]>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            kappa: 4.0,
            horizon: 1.0,
            steps: 1000,
            seed: 1,
            points: default_points(),
        }
    }
}

impl Experiment for SimulateConfig {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()> {
        override_common(
            args,
            &mut self.kappa,
            &mut self.horizon,
            &mut self.steps,
            &mut self.seed,
        )
    }

    fn master_seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

fn write_path_outputs(ctx: &mut RunContext, evo: &LoewnerEvolution) -> CliResult<()> {
    let path = evo.path();
    let csv = csv_bytes(|b| Ok(path.write_csv(b)?))?;
    ctx.write("path.csv", &csv)?;
    ctx.write("path.json", (path.to_json()? + "\n").as_bytes())?;
    ctx.write_json("evolution.json", &evo.metadata())?;
    Ok(())
}

fn sampled_path(kappa: f64, horizon: f64, steps: usize, seed: u64) -> CliResult<crate::driving::DrivingPath> {
    let grid = TimeGrid::new(horizon, steps)?;
    if grid.is_degenerate() {
        return Ok(crate::driving::DrivingPath::constant(grid, kappa, 0.0)?);
    }
    Ok(sample_brownian(grid, kappa, seed)?)
}

impl SimulateConfig {
    fn run(&self, ctx: &mut RunContext, forward: bool) -> CliResult<bool> {
        let path = sampled_path(self.kappa, self.horizon, self.steps, self.seed)?;
        let evo = if forward {
            evolve_forward(&path)
        } else {
            evolve_backward(&path)
        };
        write_path_outputs(ctx, &evo)?;
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record(["re_z", "im_z", "re_g", "im_g", "re_dg", "im_dg", "status"])?;
        for p in &self.points {
            let z = Complex64::new(p[0], p[1]);
            let row = match evo.evaluate(z, evo.len()) {
                Ok(v) => [v.image.re, v.image.im, v.derivative.re, v.derivative.im]
                    .iter()
                    .map(f64::to_string)
                    .chain(["ok".to_string()])
                    .collect::<Vec<_>>(),
                Err(e) => vec!["NaN".into(), "NaN".into(), "NaN".into(), "NaN".into(), e.to_string()],
            };
            let mut record = vec![p[0].to_string(), p[1].to_string()];
            record.extend(row);
            csv.write_record(&record)?;
        }
        ctx.write("images.csv", &csv.into_inner().map_err(|e| anyhow!(e.to_string()))?)?;
        Ok(true)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TraceConfig {
    kappa: f64,
    horizon: f64,
    steps: usize,
    seed: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            horizon: 1.0,
            steps: 1000,
            seed: 1,
        }
    }
}

impl Experiment for TraceConfig {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()> {
        override_common(
            args,
            &mut self.kappa,
            &mut self.horizon,
            &mut self.steps,
            &mut self.seed,
        )
    }

    fn master_seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

impl TraceConfig {
    fn run(&self, ctx: &mut RunContext) -> CliResult<bool> {
        let path = sampled_path(self.kappa, self.horizon, self.steps, self.seed)?;
        let evo = evolve_forward(&path);
        write_path_outputs(ctx, &evo)?;
        let indices: Vec<usize> = (0..=evo.len()).collect();
        let csv = csv_bytes(|b| Ok(evo.write_trace_csv(&indices, b)?))?;
        ctx.write("trace.csv", &csv)?;
        Ok(true)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RadialRunConfig {
    kappa: f64,
    horizon: f64,
    steps: usize,
    seed: u64,
    samples: usize,
    points: Vec<[f64; 2]>,
    eps_sing: f64,
}

/// 5 × 4 grid in the upper half-plane.
pub fn radial_test_grid() -> Vec<[f64; 2]> {
    let mut pts = Vec::new();
    for &y in &[0.25, 0.5, 1.0, 2.0] {
        for &x in &[-2.0, -1.0, 0.0, 1.0, 2.0] {
            pts.push([x, y]);
        }
    }
    pts
}

impl Default for RadialRunConfig {
    fn default() -> Self {
        Self {
            kappa: 4.0,
            horizon: 1.0,
            steps: 100,
            seed: 1,
            samples: 1,
            points: radial_test_grid(),
            eps_sing: RadialControl::default().eps_sing,
        }
    }
}

impl Experiment for RadialRunConfig {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()> {
        override_common(
            args,
            &mut self.kappa,
            &mut self.horizon,
            &mut self.steps,
            &mut self.seed,
        )?;
        if let Some(n) = args.samples {
            self.samples = n;
        }
        positive("eps_sing", self.eps_sing)
    }

    fn master_seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

#[derive(Debug, Serialize)]
struct RadialRun {
    sample: usize,
    point: usize,
    status: String,
    substeps: usize,
}

impl RadialRunConfig {
    fn run(&self, ctx: &mut RunContext) -> CliResult<bool> {
        let control = RadialControl {
            eps_sing: self.eps_sing,
            ..RadialControl::default()
        };
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record(["sample", "point", "t", "re_g", "im_g"])?;
        let mut runs = Vec::new();
        let mut violations = 0usize;
        for sample in 0..self.samples {
            let seed = sample_seed(self.seed, sample as u64);
            let path = sampled_path(self.kappa, self.horizon, self.steps, seed)?;
            for (point, p) in self.points.iter().enumerate() {
                let z = Complex64::new(p[0], p[1]);
                match evolve_wholeplane(&path, z, control) {
                    Ok(evo) => {
                        for (k, g) in evo.states.iter().enumerate() {
                            violations += usize::from(g.im < 0.0);
                            let t = path.grid().time(k);
                            csv.write_record([
                                sample.to_string(),
                                point.to_string(),
                                t.to_string(),
                                g.re.to_string(),
                                g.im.to_string(),
                            ])?;
                        }
                        violations += usize::from(matches!(evo.status, RadialStatus::LeftHalfPlane { .. }));
                        let status = serde_json::to_value(evo.status)?["status"]
                            .as_str()
                            .unwrap_or("unknown")
                            .to_string();
                        runs.push(RadialRun {
                            sample,
                            point,
                            status,
                            substeps: evo.substeps,
                        });
                    }
                    Err(e) => runs.push(RadialRun {
                        sample,
                        point,
                        status: e.to_string(),
                        substeps: 0,
                    }),
                }
            }
        }
        ctx.write("radial.csv", &csv.into_inner().map_err(|e| anyhow!(e.to_string()))?)?;
        ctx.write_json(
            "summary.json",
            &serde_json::json!({ "containment_violations": violations, "runs": runs }),
        )?;
        Ok(violations == 0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CftTableConfig {
    kappas: Vec<String>,
}

impl Default for CftTableConfig {
    fn default() -> Self {
        Self {
            kappas: ["2", "8/3", "3", "4", "6", "8"].map(String::from).to_vec(),
        }
    }
}

impl Experiment for CftTableConfig {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()> {
        if let Some(text) = &args.kappa {
            self.kappas = text.split(',').map(|s| s.trim().to_string()).collect();
        }
        parse_kappa_list(&self.kappas.join(","))?;
        Ok(())
    }
}

impl CftTableConfig {
    fn run(&self, ctx: &mut RunContext) -> CliResult<bool> {
        let kappas = parse_kappa_list(&self.kappas.join(","))?;
        let rows: Vec<CftRow> = kappas.iter().map(cft_row_exact).collect::<Result<_, _>>()?;
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record(["kappa", "c_L", "c_M", "sum", "h12_L", "h12_M", "h13_L"])?;
        for (label, r) in self.kappas.iter().zip(&rows) {
            let mut record = vec![label.trim().to_string()];
            record.extend([r.c_l, r.c_m, r.sum, r.h12_l, r.h12_m, r.h13_l].map(|v| v.to_string()));
            csv.write_record(&record)?;
        }
        let bytes = csv.into_inner().map_err(|e| anyhow!(e.to_string()))?;
        print!("{}", String::from_utf8_lossy(&bytes));
        ctx.write("table.csv", &bytes)?;
        Ok(true)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VirasoroConfig {
    kappas: Vec<String>,
    sector: Sector,
}

impl Default for VirasoroConfig {
    fn default() -> Self {
        Self {
            kappas: vec!["2".into()],
            sector: Sector::Liouville,
        }
    }
}

impl Experiment for VirasoroConfig {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()> {
        if let Some(text) = &args.kappa {
            self.kappas = text.split(',').map(|s| s.trim().to_string()).collect();
        }
        if let Some(s) = &args.sector {
            self.sector = s.parse()?;
        }
        parse_kappa_list(&self.kappas.join(","))?;
        Ok(())
    }
}

impl VirasoroConfig {
    fn run(&self, ctx: &mut RunContext) -> CliResult<bool> {
        let kappas = parse_kappa_list(&self.kappas.join(","))?;
        let reports = kappas
            .iter()
            .map(|k| virasoro_report(k, self.sector))
            .collect::<Result<Vec<_>, _>>()?;
        let passed = reports
            .iter()
            .all(|r| r.singular_12 && r.singular_21 && r.matches_formula);
        let text = if reports.len() == 1 {
            ctx.write_json("report.json", &reports[0])?
        } else {
            ctx.write_json("report.json", &reports)?
        };
        print!("{text}");
        Ok(passed)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExponentsConfig {
    kappa: f64,
    /// Defaults to `h_(1,3)` in the Liouville sector.
    h: Option<f64>,
}

impl Default for ExponentsConfig {
    fn default() -> Self {
        Self { kappa: 4.0, h: None }
    }
}

impl Experiment for ExponentsConfig {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()> {
        if let Some(k) = single_kappa(args)? {
            self.kappa = k;
        }
        if let Some(h) = args.weight {
            self.h = Some(h);
        }
        positive("kappa", self.kappa)
    }
}

#[derive(Debug, Serialize)]
struct ExponentsOutput {
    kappa: f64,
    h: f64,
    roots: ExponentRoots,
    printed_pair_ok: bool,
    printed_pair: PairCheck,
    candidate_pairs: Vec<PairCheck>,
}

impl ExponentsConfig {
    fn run(&self, ctx: &mut RunContext) -> CliResult<bool> {
        let h = self.h.unwrap_or_else(|| kac_weight_of(&(self.kappa / 4.0), 1, 3));
        let audit = audit_printed_exponents(self.kappa);
        let output = ExponentsOutput {
            kappa: self.kappa,
            h,
            roots: one_point_exponents(self.kappa, h),
            printed_pair_ok: audit.printed.satisfied,
            printed_pair: audit.printed,
            candidate_pairs: audit.candidates,
        };
        let text = ctx.write_json("exponents.json", &output)?;
        print!("{text}");
        Ok(true)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MartingaleRunConfig {
    kappa: f64,
    y: f64,
    /// Derivative exponent; defaults to `h_(1,3) = −1 − 8/κ`.
    a: Option<f64>,
    /// Distance exponent; defaults to the larger drift-free root for `a`.
    b: Option<f64>,
    /// Defaults to `0.05·y²`.
    horizon: Option<f64>,
    steps: usize,
    samples: usize,
    seed: u64,
    checkpoints: Option<Vec<f64>>,
    eps_stop: f64,
}

impl Default for MartingaleRunConfig {
    fn default() -> Self {
        Self {
            kappa: 4.0,
            y: 1.0,
            a: None,
            b: None,
            horizon: None,
            steps: 500,
            samples: 50_000,
            seed: 20_240_601,
            checkpoints: None,
            eps_stop: crate::montecarlo::DEFAULT_EPS_STOP,
        }
    }
}

impl Experiment for MartingaleRunConfig {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()> {
        if let Some(k) = single_kappa(args)? {
            self.kappa = k;
        }
        if let Some(h) = args.horizon {
            self.horizon = Some(h);
        }
        if let Some(n) = args.steps {
            self.steps = n;
        }
        if let Some(n) = args.samples {
            self.samples = n;
        }
        if let Some(s) = args.seed {
            self.seed = s;
        }
        if let Some(a) = args.weight {
            self.a = Some(a);
        }
        positive("kappa", self.kappa)
    }

    fn master_seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

impl MartingaleRunConfig {
    fn to_mc_config(&self) -> CliResult<McConfig> {
        let a = self.a.unwrap_or(-1.0 - 8.0 / self.kappa);
        let b = match self.b {
            Some(b) => b,
            None => one_point_exponents(self.kappa, a)
                .real()
                .map(|r| r[0])
                .ok_or_else(|| anyhow!("no real drift-free exponent for a = {a}"))?,
        };
        let horizon = self.horizon.unwrap_or(0.05 * self.y * self.y);
        let grid = TimeGrid::new(horizon, self.steps)?;
        Ok(McConfig {
            kappa: self.kappa,
            horizon,
            n_steps: self.steps,
            n_samples: self.samples,
            master_seed: self.seed,
            observable: ObservableSpec::one_point(self.y, a, b)?,
            checkpoints: self
                .checkpoints
                .clone()
                .unwrap_or_else(|| default_checkpoints(&grid, 5)),
            eps_stop: self.eps_stop,
        })
    }

    fn run(&self, ctx: &mut RunContext) -> CliResult<bool> {
        let config = self.to_mc_config()?;
        config.validate()?;
        let report = with_workers(ctx.workers, || run_martingale_test(&config))??;
        ctx.write_json("report.json", &report)?;
        let csv = csv_bytes(|b| Ok(report.write_csv(b)?))?;
        ctx.write("report.csv", &csv)?;
        eprintln!(
            "martingale-test: max |z| = {:.3}, verdict {}",
            report.max_abs_z(),
            report.verdict
        );
        Ok(report.verdict)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InverseRunConfig {
    kappa: f64,
    horizon: f64,
    steps: usize,
    samples: usize,
    seed: u64,
    points: Vec<[f64; 2]>,
}

/// Test points with `Im z ≥ 1`.
pub fn inverse_test_points() -> Vec<[f64; 2]> {
    vec![[0.0, 1.0], [1.0, 1.0], [-1.0, 1.5], [0.5, 2.0], [-2.0, 1.0]]
}

impl Default for InverseRunConfig {
    fn default() -> Self {
        Self {
            kappa: 4.0,
            horizon: 1.0,
            steps: 500,
            samples: 200,
            seed: 7,
            points: inverse_test_points(),
        }
    }
}

impl Experiment for InverseRunConfig {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()> {
        override_common(
            args,
            &mut self.kappa,
            &mut self.horizon,
            &mut self.steps,
            &mut self.seed,
        )?;
        if let Some(n) = args.samples {
            self.samples = n;
        }
        Ok(())
    }

    fn master_seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

impl InverseRunConfig {
    fn run(&self, ctx: &mut RunContext) -> CliResult<bool> {
        let config = InverseConfig {
            kappa: self.kappa,
            horizon: self.horizon,
            n_steps: self.steps,
            n_samples: self.samples,
            master_seed: self.seed,
            points: self.points.clone(),
        };
        let report = with_workers(ctx.workers, || run_inverse_consistency(&config))??;
        ctx.write_json("report.json", &report)?;
        let csv = csv_bytes(|b| Ok(report.write_csv(b)?))?;
        ctx.write("errors.csv", &csv)?;
        Ok(report.pass)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ComposedRunConfig {
    kappa: f64,
    horizon: f64,
    steps: usize,
    samples: usize,
    seed: u64,
    points: Vec<[f64; 2]>,
    shared: bool,
}

impl Default for ComposedRunConfig {
    fn default() -> Self {
        Self {
            kappa: 4.0,
            horizon: 1.0,
            steps: 500,
            samples: 500,
            seed: 11,
            points: default_points(),
            shared: false,
        }
    }
}

impl Experiment for ComposedRunConfig {
    fn apply_flags(&mut self, args: &RunArgs) -> CliResult<()> {
        override_common(
            args,
            &mut self.kappa,
            &mut self.horizon,
            &mut self.steps,
            &mut self.seed,
        )?;
        if let Some(n) = args.samples {
            self.samples = n;
        }
        self.shared |= args.shared;
        Ok(())
    }

    fn master_seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

impl ComposedRunConfig {
    fn run(&self, ctx: &mut RunContext) -> CliResult<bool> {
        let config = ComposedConfig {
            kappa: self.kappa,
            horizon: self.horizon,
            n_steps: self.steps,
            n_samples: self.samples,
            master_seed: self.seed,
            points: self.points.clone(),
            shared_driving: self.shared,
        };
        let report = with_workers(ctx.workers, || run_composed_stats(&config))??;
        ctx.write_json("report.json", &report)?;
        let csv = csv_bytes(|b| Ok(report.write_csv(b)?))?;
        ctx.write("report.csv", &csv)?;
        Ok(report.containment_violations == 0)
    }
}

/// Directory a run with this subcommand and JSON config would write to.
pub fn run_directory(root: &Path, subcommand: &str, config_json: &serde_json::Value) -> Option<PathBuf> {
    let digest = config_digest(subcommand, config_json).ok()?;
    Some(root.join(format!("{subcommand}-{}", &digest[..DIGEST_PREFIX])))
}
