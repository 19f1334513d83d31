//! `switchback`: run replication studies, presets and bound checks.
//!
//! Exit codes: 0 on success, 1 on invalid input or a failed check, 2 when an
//! estimator is undefined for the requested design.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use switchback_core::bounds::run_standard_checks;
use switchback_core::exposure::ExposureProbabilities;
use switchback_core::harness::{
    default_sizes, emit_results, instance_rng, load_configs, named_preset, results_csv, run_experiments,
    ExperimentConfig, HarnessError, LogBase, PresetOptions, ReplicationReport, PRESET_NAMES,
};
use switchback_core::gate_oracle;

#[derive(Parser)]
#[command(name = "switchback", version, about = "Clustered switchback experiment simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a named preset and write the results CSV.
    Simulate(SimulateArgs),
    /// Run a named preset over its default sizes.
    Preset(PresetArgs),
    /// Run the bound check battery and print one JSON line per report.
    VerifyBounds(VerifyArgs),
    /// Print the exact GATE of every generated instance of a config.
    Gate(ConfigArgs),
    /// Dump exact exposure probabilities for the HT estimators of a config.
    Exposure(ConfigArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed; overrides the seed in config files.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (CSV; a `.json` sidecar is written next to it).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Clone)]
struct PresetFlags {
    /// Full replication counts (100 instances, 100 or 200 draws) instead of desk scale.
    #[arg(long)]
    full_scale: bool,
    /// Hop radius of the line-graph presets.
    #[arg(long, default_value_t = 2)]
    hops: usize,
    /// Use log base 10 for the 30 log T lengths.
    #[arg(long)]
    log10: bool,
    /// Override the outcome noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: PresetFlags,
    /// JSON config: one object or an array.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Named preset.
    #[arg(long)]
    preset: Option<String>,
    /// Horizon (single-unit presets) or scaling size; repeatable.
    #[arg(long = "horizon", alias = "size")]
    sizes: Vec<usize>,
    /// Print the resolved configs as JSON instead of running them.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct PresetArgs {
    /// One of the preset names listed by `--list`.
    #[arg(required_unless_present = "list")]
    name: Option<String>,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: PresetFlags,
    /// Sizes to sweep instead of the preset defaults; repeatable.
    #[arg(long = "size", alias = "horizon")]
    sizes: Vec<usize>,
    #[arg(long)]
    list: bool,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ConfigArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let undefined = err
                .chain()
                .any(|e| e.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_estimator_undefined));
            ExitCode::from(if undefined { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => {
            let configs = match (&args.config, &args.preset) {
                (Some(path), _) => {
                    let mut configs = load_configs(path)?;
                    if let Some(seed) = args.common.seed {
                        configs.iter_mut().for_each(|c| c.seed = seed);
                    }
                    configs
                }
                (None, Some(name)) => {
                    let sizes = resolve_sizes(name, &args.sizes)?;
                    named_preset(name, &sizes, &preset_options(&args.common, &args.flags))?
                }
                (None, None) => bail!("either --config or --preset is required"),
            };
            let out = args
                .common
                .out
                .clone()
                .or_else(|| configs.iter().find_map(|c| c.output.clone()));
            simulate(&configs, &args.common, out.as_deref(), args.dry_run)
        }
        Command::Preset(args) => {
            if args.list {
                for name in PRESET_NAMES {
                    println!("{name}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let name = args.name.as_deref().expect("clap enforces a name");
            let sizes = resolve_sizes(name, &args.sizes)?;
            let configs = named_preset(name, &sizes, &preset_options(&args.common, &args.flags))?;
            simulate(&configs, &args.common, args.common.out.as_deref(), args.dry_run)
        }
        Command::VerifyBounds(args) => {
            let seed = args.common.seed.unwrap_or(0);
            let reports = with_pool(args.common.workers, || run_standard_checks(seed))??;
            let mut text = String::new();
            for r in &reports {
                text.push_str(&r.to_json_line());
                text.push('\n');
            }
            write_text(args.common.out.as_deref(), &text)?;
            let failed = reports.iter().filter(|r| !r.passed).count();
            eprintln!("{} checks, {failed} failed", reports.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Gate(args) => {
            let configs = configs_with_seed(&args)?;
            let text = with_pool(args.common.workers, || gate_table(&configs))??;
            write_text(args.common.out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Exposure(args) => {
            let configs = configs_with_seed(&args)?;
            let text = with_pool(args.common.workers, || exposure_table(&configs))??;
            write_text(args.common.out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn resolve_sizes(name: &str, given: &[usize]) -> Result<Vec<usize>> {
    if !given.is_empty() {
        return Ok(given.to_vec());
    }
    default_sizes(name).with_context(|| format!("unknown preset {name:?}; try `switchback preset --list`"))
}

fn preset_options(common: &Common, flags: &PresetFlags) -> PresetOptions {
    PresetOptions {
        seed: common.seed.unwrap_or(0),
        full_scale: flags.full_scale,
        log_base: if flags.log10 { LogBase::Ten } else { LogBase::Natural },
        h: flags.hops,
        sigma: flags.sigma,
        ..PresetOptions::default()
    }
}

fn configs_with_seed(args: &ConfigArgs) -> Result<Vec<ExperimentConfig>> {
    let mut configs = load_configs(&args.config)?;
    if let Some(seed) = args.common.seed {
        configs.iter_mut().for_each(|c| c.seed = seed);
    }
    Ok(configs)
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("cannot start worker pool")?;
    Ok(pool.install(f))
}

fn simulate(configs: &[ExperimentConfig], common: &Common, out: Option<&Path>, dry_run: bool) -> Result<ExitCode> {
    if dry_run {
        write_text(out, &(serde_json::to_string_pretty(configs)? + "\n"))?;
        return Ok(ExitCode::SUCCESS);
    }
    let report: ReplicationReport = with_pool(common.workers, || run_experiments(configs))??;
    match out {
        Some(path) => emit_results(&report, path)?,
        None => write_text(None, &results_csv(&report))?,
    }
    Ok(ExitCode::SUCCESS)
}

fn gate_table(configs: &[ExperimentConfig]) -> Result<String> {
    let mut text = String::from("scenario,instance,gate\n");
    for c in configs {
        c.validate()?;
        for k in 0..c.n_instances {
            let instance = c.instance.generate(&mut instance_rng(c.seed, k as u64))?;
            text.push_str(&format!("{},{k},{:.9e}\n", c.scenario, gate_oracle(&instance)));
        }
    }
    Ok(text)
}

fn exposure_table(configs: &[ExperimentConfig]) -> Result<String> {
    let mut text = String::from("scenario,estimator,unit,round,p\n");
    for c in configs {
        c.validate()?;
        let g = c.instance.graph();
        for est in &c.estimators {
            let Some(spec) = c.exposure_spec(est)? else { continue };
            let probs = ExposureProbabilities::compute(&g, &spec, c.horizon()).map_err(HarnessError::from)?;
            for line in probs.to_csv().lines().skip(1) {
                text.push_str(&format!("{},{},{line}\n", c.scenario, est.label()));
            }
        }
    }
    Ok(text)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
