use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::{json, Value};

use tristirap::config::{load_config, ConfigError, LoadedConfig, ResolvedRun, SCHEMA_VERSION};
use tristirap::output::{self, write_atomic, Format};
use tristirap::presets;
use tristirap::propagator::RunStats;
use tristirap::qcore::{DensityMatrix, Level};
use tristirap::scenarios::{
    run_full_transfer, run_optical_pumping_prep, run_partial_stirap, run_reverse_transfer, run_scan, PointStatus,
    RunKind,
};

#[derive(Parser)]
#[command(name = "tristirap", version, about = "Three-photon STIRAP simulator for the N-scheme of Ca+-like ions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment and write its time series and summary.
    Run(RunArgs),
    /// Run the scan described by the config, one row per axis value.
    Scan(RunArgs),
    /// Run a built-in preset.
    Preset {
        name: String,
        #[command(flatten)]
        opts: Common,
    },
    /// Check a config and print the resolved snapshot without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the built-in presets.
    ListPresets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    opts: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Scan worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override integrator.rtol.
    #[arg(long)]
    rtol: Option<f64>,
    /// Reserved; the dynamics are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<tristirap::Error> for Failure {
    fn from(e: tristirap::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("i/o error: {e}"))
    }
}

impl Failure {
    fn report(&self) -> ExitCode {
        let (code, record) = match self {
            Failure::Config(e) => (1, json!({ "error": { "kind": e.kind(), "message": e.to_string(), "fields": e.fields() } })),
            Failure::Runtime(msg) => (2, json!({ "error": { "kind": "runtime", "message": msg } })),
        };
        eprintln!("{record}");
        ExitCode::from(code)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => load(&args.config).and_then(|cfg| execute(cfg, &args.opts, Mode::Run)),
        Command::Scan(args) => load(&args.config).and_then(|cfg| execute(cfg, &args.opts, Mode::Scan)),
        Command::Preset { name, opts } => match presets::load(&name) {
            Some(cfg) => cfg.map_err(Failure::from).and_then(|cfg| {
                let mode = if cfg.base().spec.scan.is_some() { Mode::Scan } else { Mode::Run };
                execute(cfg, &opts, mode)
            }),
            None => Err(Failure::Config(ConfigError::Validation(vec![tristirap::config::FieldError {
                path: "preset".into(),
                message: format!("unknown preset {name:?}; see list-presets"),
            }]))),
        },
        Command::Validate { config } => load(&config).map(|cfg| {
            let snapshots: Vec<Value> = cfg.runs.iter().map(ResolvedRun::snapshot).collect();
            println!("{}", serde_json::to_string_pretty(&json!({ "valid": true, "runs": snapshots })).expect("json"));
        }),
        Command::ListPresets => {
            for name in presets::names() {
                let text = presets::source(name).unwrap_or_default();
                let blurb = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                println!("{name:<18} {blurb}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn load(path: &Path) -> Result<LoadedConfig, Failure> {
    Ok(load_config(path)?)
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Run,
    Scan,
}

fn file_name(stem: &str, label: &Option<String>, ext: &str) -> String {
    match label {
        Some(l) => format!("{stem}_{l}.{ext}"),
        None => format!("{stem}.{ext}"),
    }
}

fn execute(cfg: LoadedConfig, opts: &Common, mode: Mode) -> Result<(), Failure> {
    let cfg = match opts.rtol {
        Some(rtol) => cfg.with_override("integrator.rtol", toml::Value::Float(rtol))?,
        None => cfg,
    };
    if mode == Mode::Scan {
        if let Some(run) = cfg.runs.iter().find(|r| r.spec.scan.is_none()) {
            return Err(Failure::Config(ConfigError::Validation(vec![tristirap::config::FieldError {
                path: "scenario.scan".into(),
                message: format!("scan requested but {} has no scan axis", run.label.as_deref().unwrap_or("the config")),
            }])));
        }
    }
    if opts.seed.is_some() {
        info!("--seed is accepted for compatibility and has no effect");
    }
    let workers = opts
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    let format: Format = opts.format.into();
    std::fs::create_dir_all(&opts.out)?;

    let started = Instant::now();
    let mut records = Vec::new();
    for run in &cfg.runs {
        let snapshot = run.snapshot();
        let record = match mode {
            Mode::Run => execute_run(run, &snapshot, &opts.out, format)?,
            Mode::Scan => execute_scan(run, &snapshot, &opts.out, format, workers)?,
        };
        records.push(json!({ "label": run.label, "result": record }));
    }
    write_atomic(&opts.out.join("resolved_config.toml"), cfg.to_toml().as_bytes())?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "mode": if mode == Mode::Run { "run" } else { "scan" },
        "workers": workers,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "runs": records,
    });
    let stem = cfg.base().outputs.summary.clone();
    let mut text = serde_json::to_string_pretty(&summary).expect("json");
    text.push('\n');
    write_atomic(&opts.out.join(format!("{stem}.json")), text.as_bytes())?;
    Ok(())
}

fn stats_json(stats: &RunStats) -> Value {
    json!({
        "accepted_steps": stats.accepted_steps,
        "rejected_steps": stats.rejected_steps,
        "rhs_evals": stats.rhs_evals,
        "invariants": stats.invariants,
        "invariants_hold": stats.invariants.holds(),
    })
}

fn execute_run(run: &ResolvedRun, snapshot: &Value, out: &Path, format: Format) -> Result<Value, Failure> {
    let p = &run.spec.params;
    let ext = format.extension();
    let ts_path = |stem: &str| out.join(file_name(stem, &run.label, ext));
    let stem = run.outputs.timeseries.as_str();
    let result = match run.spec.runner {
        RunKind::FullTransfer => {
            let r = run_full_transfer(p)?;
            write_atomic(&ts_path(stem), output::timeseries(&r.series, snapshot, format).as_bytes())?;
            json!({
                "runner": "full_transfer",
                "F_after_stirap": r.f_after_stirap,
                "one_minus_F": 1.0 - r.f_after_stirap,
                "P_Q_final": r.p_q_final,
                "one_minus_P_Q": 1.0 - r.p_q_final,
                "stirap_end_us": r.stirap_end,
                "final_populations": r.series.final_state.populations(),
                "stats": stats_json(&r.series.stats),
            })
        }
        RunKind::ReverseTransfer => {
            let r = run_reverse_transfer(p)?;
            write_atomic(&ts_path(&format!("{stem}_prep")), output::timeseries(&r.prep, snapshot, format).as_bytes())?;
            write_atomic(&ts_path(stem), output::timeseries(&r.transfer, snapshot, format).as_bytes())?;
            json!({
                "runner": "reverse_transfer",
                "prep_fidelity_to_QS": r.prep_fidelity_to_qs,
                "final_rho_DD": r.final_rho_dd,
                "one_minus_rho_DD": 1.0 - r.final_rho_dd,
                "final_populations": r.transfer.final_state.populations(),
                "stats": { "prep": stats_json(&r.prep.stats), "transfer": stats_json(&r.transfer.stats) },
            })
        }
        RunKind::PartialStirap => {
            let r = run_partial_stirap(p, None)?;
            write_atomic(&ts_path(stem), output::timeseries(&r.series, snapshot, format).as_bytes())?;
            json!({
                "runner": "partial_stirap",
                "t_freeze_us": r.t_freeze,
                "min_combination_F": r.min_fidelity,
                "final_combination_F": r.final_fidelity,
                "final_populations": r.series.final_state.populations(),
                "stats": stats_json(&r.series.stats),
            })
        }
        RunKind::OpticalPumping => {
            let r = run_optical_pumping_prep(p, &DensityMatrix::basis(Level::S))?;
            if let Some(series) = &r.series {
                write_atomic(&ts_path(stem), output::timeseries(series, snapshot, format).as_bytes())?;
            }
            json!({
                "runner": "optical_pumping",
                "pump_time_us": r.pump_time,
                "final_rho_DD": r.final_rho_dd,
                "stats": r.series.as_ref().map(|s| stats_json(&s.stats)),
            })
        }
    };
    Ok(result)
}

fn execute_scan(run: &ResolvedRun, snapshot: &Value, out: &Path, format: Format, workers: usize) -> Result<Value, Failure> {
    let result = run_scan(&run.spec, workers)?;
    let path = out.join(file_name(&run.outputs.scan, &run.label, format.extension()));
    write_atomic(&path, output::scan(&result, snapshot, format).as_bytes())?;
    let failed = result.points.iter().filter(|p| p.status != PointStatus::Ok).count();
    if failed > 0 {
        warn!("{failed} of {} scan points failed; see the status column of {}", result.points.len(), path.display());
    }
    Ok(json!({
        "parameter": result.parameter,
        "observable": result.observable,
        "points": result.points.len(),
        "failed": failed,
        "point_runtime_s": result.points.iter().map(|p| p.runtime_s).collect::<Vec<_>>(),
        "point_stats": result.points.iter().map(|p| stats_json(&p.stats)).collect::<Vec<_>>(),
    }))
}
