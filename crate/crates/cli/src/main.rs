mod evaluate;
mod viz;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use pokegrasp::dataset::{self, write_json, Dataset, DatasetError, GenConfig};
use pokegrasp::harness::catalog::default_catalog;
use pokegrasp::harness::{rates_csv, run_benchmark, Guidance, HarnessError, TrialConfig};
use pokegrasp::io;
use pokegrasp::metrics::{ApConfig, MetricsError};
use pokegrasp::plan::GripperSpec;
use pokegrasp::pokegt::PokeRegionConfig;
use pokegrasp::scene::CameraModel;
use pokegrasp::verify::{self, VerifyOptions};

#[derive(Parser)]
#[command(name = "pokegrasp", version, about = "Poke-guided grasping of transparent objects")]
struct Cli {
    /// JSON config file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with poking-region annotations.
    Gen(GenArgs),
    /// Re-derive annotations from the stored buffers of a dataset.
    Annotate(AnnotateArgs),
    /// Plan a poke and a grasp for every annotated instance.
    Plan(PlanArgs),
    /// Run the poke/grasp success-rate benchmark.
    Simulate(SimulateArgs),
    /// Average precision of detected poking regions.
    Evaluate(EvaluateArgs),
    /// Gradient, evaluator and round-trip self-checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Half-range of the random camera offset per axis, metres.
    #[arg(long)]
    camera_jitter: Option<f64>,
}

#[derive(Args)]
struct RegionArgs {
    /// Minimum normal·up for poking-region pixels.
    #[arg(long)]
    dot_threshold: Option<f64>,
    /// Minimum height above the table for poking-region pixels, metres.
    #[arg(long)]
    min_height: Option<f64>,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    region: RegionArgs,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output file [default: <dataset>/plan.json].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for PPM overlays of regions, poking points and grasps.
    #[arg(long)]
    viz: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for poke.csv, grasp.csv and trials.json.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated guidance modes out of bbox, mask, pr.
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    attempts: Option<usize>,
    /// Master seed [default: the dataset's generation seed].
    #[arg(long)]
    seed: Option<u64>,
    /// Calibration error is drawn from [-r, r] metres along x.
    #[arg(long)]
    calib_range: Option<f64>,
    #[arg(long, value_enum)]
    tactile_align: Option<OnOff>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Detection manifest (JSON).
    #[arg(long)]
    detections: PathBuf,
    /// Dataset supplying ground truth for images that list none.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory for report.json and report.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Write the per-check results as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt the analytic loss gradient (negative control).
    #[arg(long, hide = true)]
    inject_grad_fault: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    gen: Option<GenConfig>,
    camera: Option<CameraModel>,
    region: Option<PokeRegionConfig>,
    gripper: Option<GripperSpec>,
    trial: Option<TrialConfig>,
    simulate: SimulateSection,
    ap: Option<ApConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateSection {
    modes: Option<Vec<String>>,
    attempts: Option<usize>,
}

/// Bad flags, config values or mode names; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<UsageError>()
            || matches!(c.downcast_ref::<DatasetError>(), Some(DatasetError::InvalidConfig(_)))
            || matches!(c.downcast_ref::<HarnessError>(), Some(HarnessError::InvalidConfig(_)))
            || matches!(c.downcast_ref::<MetricsError>(), Some(MetricsError::InvalidConfig(_)))
    })
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let bytes = io::read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("POKEGRASP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("POKEGRASP_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

fn region_config(file: &FileConfig, args: &RegionArgs) -> PokeRegionConfig {
    let mut r = file.region.unwrap_or_default();
    if let Some(v) = args.dot_threshold {
        r.dot_threshold = v;
    }
    if let Some(v) = args.min_height {
        r.min_height = v;
    }
    r
}

fn cmd_gen(file: &FileConfig, a: &GenArgs) -> Result<()> {
    let mut cfg = file.gen.unwrap_or_default();
    if let Some(r) = file.region {
        cfg.region = r;
    }
    cfg.objects = a.objects.unwrap_or(cfg.objects);
    cfg.views = a.views.unwrap_or(cfg.views);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.width = a.width.unwrap_or(cfg.width);
    cfg.height = a.height.unwrap_or(cfg.height);
    cfg.camera_jitter = a.camera_jitter.unwrap_or(cfg.camera_jitter);
    let camera = file.camera.unwrap_or_default();
    let m = dataset::generate(&a.out, &default_catalog(), &camera, &cfg)?;
    println!("wrote {} scenes to {}", m.scenes.len(), a.out.display());
    Ok(())
}

fn cmd_annotate(file: &FileConfig, a: &AnnotateArgs) -> Result<()> {
    let cfg = region_config(file, &a.region);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let ds = Dataset::open(&a.dataset)?;
    let n = ds.annotate(&cfg)?;
    println!("annotated {n} instances in {} scenes", ds.manifest.scenes.len());
    Ok(())
}

fn cmd_plan(file: &FileConfig, a: &PlanArgs) -> Result<()> {
    let gripper = file.gripper.unwrap_or_default();
    gripper.validate().map_err(|e| usage(e.to_string()))?;
    let ds = Dataset::open(&a.dataset)?;
    let plans = ds.plan(&gripper)?;
    let out = a.out.clone().unwrap_or_else(|| a.dataset.join("plan.json"));
    write_json(&out, &plans)?;
    if let Some(dir) = &a.viz {
        io::create_dir(dir)?;
        for s in &ds.manifest.scenes {
            let scene_dir = ds.scene_dir(&s.name);
            let (scene, buffers) = dataset::load_scene(&scene_dir)?;
            let regions = ds
                .annotations(&s.name)?
                .iter()
                .map(|r| io::pgm_to_mask(&io::read_file(&scene_dir.join(&r.poke_file))?))
                .collect::<Result<Vec<_>, _>>()?;
            let mine: Vec<_> = plans.iter().filter(|p| p.scene == s.name).collect();
            let ppm = viz::overlay(&buffers, &regions, &mine, &scene.camera);
            io::write_file(&dir.join(format!("{}.ppm", s.name)), &ppm)?;
        }
    }
    let planned = plans.iter().filter(|p| p.grasp.is_some()).count();
    println!("planned {planned}/{} instances -> {}", plans.len(), out.display());
    Ok(())
}

fn parse_modes(list: &[String]) -> Result<Vec<Guidance>> {
    let modes = list
        .iter()
        .map(|s| Guidance::from_str(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if modes.is_empty() {
        return Err(usage("no guidance modes given"));
    }
    Ok(modes)
}

fn cmd_simulate(file: &FileConfig, a: &SimulateArgs) -> Result<()> {
    let mut cfg = file.trial.unwrap_or_default();
    if let Some(r) = file.region {
        cfg.region = r;
    }
    if let Some(g) = file.gripper {
        cfg.gripper = g;
    }
    cfg.calib_range = a.calib_range.unwrap_or(cfg.calib_range);
    if let Some(t) = a.tactile_align {
        cfg.tactile_align = t == OnOff::On;
    }
    let modes: Vec<String> = match &a.modes {
        Some(s) => s.split(',').map(str::to_string).collect(),
        None => file
            .simulate
            .modes
            .clone()
            .unwrap_or_else(|| Guidance::ALL.iter().map(|g| g.name().to_string()).collect()),
    };
    let modes = parse_modes(&modes)?;
    let attempts = a.attempts.or(file.simulate.attempts).unwrap_or(12);
    cfg.validate()?;

    let ds = Dataset::open(&a.dataset)?;
    cfg.master_seed = a
        .seed
        .or(file.trial.map(|t| t.master_seed))
        .unwrap_or(ds.manifest.config.seed);
    let result = run_benchmark(&ds.catalog, &ds.camera, &modes, attempts, &cfg)?;
    io::create_dir(&a.out)?;
    io::write_file(&a.out.join("poke.csv"), rates_csv(&result.poke_rates).as_bytes())?;
    io::write_file(&a.out.join("grasp.csv"), rates_csv(&result.grasp_rates).as_bytes())?;
    write_json(&a.out.join("trials.json"), &result.trials)?;
    for row in result.poke_rates.iter().filter(|r| r.object == "all") {
        println!("poke  {:<14} {}/{} ({:.1}%)", row.mode, row.successes, row.attempts, 100.0 * row.rate);
    }
    for row in result.grasp_rates.iter().filter(|r| r.object == "all") {
        println!("grasp {:<14} {}/{} ({:.1}%)", row.mode, row.successes, row.attempts, 100.0 * row.rate);
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let report = verify::run(&VerifyOptions {
        seed: a.seed,
        inject_grad_fault: a.inject_grad_fault,
    });
    for c in &report.checks {
        println!("{} {:<34} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(anyhow!("verification failed: {}", report.failures().join(", ")))
    }
}

fn run(cli: &Cli) -> Result<()> {
    init_threads()?;
    let file = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Gen(a) => cmd_gen(&file, a),
        Command::Annotate(a) => cmd_annotate(&file, a),
        Command::Plan(a) => cmd_plan(&file, a),
        Command::Simulate(a) => cmd_simulate(&file, a),
        Command::Evaluate(a) => evaluate::run(&file.ap.clone().unwrap_or_default(), a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
