use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use tripod_kerr::check::{run_all, DEFAULT_SEED};
use tripod_kerr::config::{load_config, OutputSpec, RunConfig};
use tripod_kerr::output::{check_writable, write_spectrum, write_to, Format};
use tripod_kerr::spectra::{point_detail, sweep, PopulationMode, SpectrumPoint, TriggerMode};

const THREADS_ENV: &str = "TRIPOD_KERR_THREADS";

/// Probe spectra and trigger-induced cross-Kerr phase shifts in a tripod
/// medium with a quasi-standing coupling wave.
#[derive(Parser)]
#[command(name = "tripod-kerr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the probe detuning and write the spectrum.
    Sweep(RunArgs),
    /// Solve a single probe detuning and print a report.
    Point {
        /// Probe detuning δ₁ in MHz-labelled units.
        delta1: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the oracle self-checks.
    Check {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, `key=value` or `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Replace the configured outputs with this file.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, value_enum)]
    trigger: Option<TriggerArg>,
    #[arg(long, value_enum)]
    populations: Option<PopulationArg>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum TriggerArg {
    On,
    Off,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum PopulationArg {
    Computed,
    Balanced,
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn thread_cap() -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            )),
        },
        Err(_) => Ok(None),
    }
}

fn resolve(args: &RunArgs) -> Result<RunConfig, String> {
    let mut config =
        load_config(args.config.as_deref(), &args.overrides).map_err(|e| e.to_string())?;
    if let Some(t) = args.trigger {
        config.options.trigger = match t {
            TriggerArg::On => TriggerMode::On,
            TriggerArg::Off => TriggerMode::Off,
            TriggerArg::Both => TriggerMode::Both,
        };
    }
    if let Some(p) = args.populations {
        config.options.populations = match p {
            PopulationArg::Computed => PopulationMode::Computed,
            PopulationArg::Balanced => PopulationMode::Balanced,
        };
    }
    let format = args.format.map(|f| match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Jsonl => Format::Jsonl,
    });
    match (&args.output, format) {
        (Some(path), f) => {
            config.outputs = vec![OutputSpec {
                format: f.unwrap_or_default(),
                path: path.clone(),
            }]
        }
        (None, Some(f)) => {
            for o in &mut config.outputs {
                o.format = f;
            }
        }
        (None, None) => {}
    }
    if let Some(n) = thread_cap()? {
        config.options.threads = Some(n);
    }
    Ok(config)
}

fn soft_status(points: &[SpectrumPoint]) -> ExitCode {
    if points.iter().all(|p| p.physical && p.converged) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run_sweep(args: &RunArgs) -> Result<ExitCode, String> {
    let config = resolve(args)?;
    for o in &config.outputs {
        check_writable(&o.path).map_err(|e| e.to_string())?;
    }
    let points =
        sweep(&config.params, &config.grid(), &config.options).map_err(|e| e.to_string())?;
    if config.outputs.is_empty() {
        let format = args.format.map_or(Format::Csv, |f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        });
        write_to(&points, format, config.unwrap, std::io::stdout().lock())
            .map_err(|e| e.to_string())?;
    }
    for o in &config.outputs {
        write_spectrum(&points, o.format, &o.path, config.unwrap).map_err(|e| e.to_string())?;
        log::info!("wrote {} points to {}", points.len(), o.path.display());
    }
    let flagged = points
        .iter()
        .filter(|p| !(p.physical && p.converged))
        .count();
    if flagged > 0 {
        log::warn!(
            "{flagged} of {} points flagged unphysical or unconverged",
            points.len()
        );
    }
    Ok(soft_status(&points))
}

fn show(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}

fn run_point(delta1: f64, args: &RunArgs) -> Result<ExitCode, String> {
    let config = resolve(args)?;
    config.params.validate().map_err(|e| e.to_string())?;
    config
        .options
        .solver
        .validate()
        .map_err(|e| e.to_string())?;
    let detail = point_detail(&config.params, delta1, &config.options);
    let p = &detail.point;
    println!("delta1        {}", p.delta1);
    println!(
        "populations   s00={:.6e} s11={:.6} s22={:.6e} s33={:.6}",
        p.s00, p.s11, p.s22, p.s33
    );
    println!("T_p           {:.6e}", p.t_p);
    println!("R_p           {:.6e}", p.r_p);
    println!("phi_plus      {:.6}", p.phi_plus);
    println!("phi_minus     {}", show(p.phi_minus));
    println!("dphi_plus     {}", show(p.dphi_plus));
    println!("dphi_minus    {}", show(p.dphi_minus));
    for (label, report) in [("trigger on ", &detail.on), ("trigger off", &detail.off)] {
        if let Some(r) = report {
            println!(
                "{label}   iterations={} residual={:.3e} converged={}",
                r.iterations, r.final_residual, r.converged
            );
        }
    }
    println!("physical      {}", p.physical);
    println!("converged     {}", p.converged);
    for o in &config.outputs {
        write_spectrum(std::slice::from_ref(p), o.format, &o.path, false)
            .map_err(|e| e.to_string())?;
    }
    Ok(soft_status(std::slice::from_ref(p)))
}

fn run_check(seed: u64, quiet: bool) -> ExitCode {
    let results = run_all(seed);
    for r in &results {
        if !quiet || !r.passed {
            println!(
                "{} {}: {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.detail
            );
        }
    }
    if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = match &cli.command {
        Command::Sweep(a) | Command::Point { run: a, .. } => a.quiet,
        Command::Check { quiet, .. } => *quiet,
    };
    init_logging(quiet);
    let outcome = match &cli.command {
        Command::Sweep(args) => run_sweep(args),
        Command::Point { delta1, run } => run_point(*delta1, run),
        Command::Check { seed, quiet } => Ok(run_check(*seed, *quiet)),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
