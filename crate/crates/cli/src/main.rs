//! `dimerwork`: single runs, parameter sweeps and figure grids as CSV or JSON.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dimerwork::config;
use dimerwork::emit;
use dimerwork::{
    relative_error_grid, run_single, run_sweep, Axis, Error, Flags, OutputFormat, Protocol,
    Quantity, SweepSpec, SweepTable,
};

#[derive(Parser, Debug)]
#[command(
    name = "dimerwork",
    version,
    about = "Work statistics of the driven Hubbard dimer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Options shared by every subcommand. Precedence: built-in defaults, figure
/// preset, `--config` file, then the flags below.
#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Grid size as `<U points>x<tau points>`, e.g. `51x51`.
    #[arg(long, global = true, value_name = "UxT")]
    grid: Option<String>,
    /// Fixed number of propagation steps per run.
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,
    #[arg(long, global = true, value_parser = ["scf", "exact"])]
    density_source: Option<String>,
    #[arg(long, global = true, value_parser = ["eq5", "eq1"])]
    delta_convention: Option<String>,
    /// Omit the generation time so repeated runs give identical files.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Extra `key=value` override, repeatable; same keys as the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// exact | ni | ks-plda | ks-par
    #[arg(long)]
    protocol: Option<String>,
    /// First-order correction of the measured energies.
    #[arg(long)]
    fop: bool,
    /// Self-consistent time-dependent functional cycle.
    #[arg(long)]
    tpf: bool,
    /// extracted_work | entropy_production | jarzynski_residual | adiabaticity
    #[arg(long)]
    quantity: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One run at a single (U, tau).
    Single {
        /// Interaction in units of J.
        #[arg(long)]
        u: Option<f64>,
        /// Ramp duration in units of 1/J.
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// One quantity over a (U, tau) grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Relative error of the extracted work against the exact protocol.
    ErrorGrid {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Exact extracted work.
    Fig2a,
    /// Exact entropy production.
    Fig2b,
    /// Relative error of the zero-order approximations.
    Fig3 { panel: Panel },
    /// Relative error of the approximations with first-order corrections.
    Fig4 { panel: Panel },
    /// Relative error with time-dependent functionals (pseudo-LDA).
    Fig5 { panel: Panel5 },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Panel {
    /// Non-interacting.
    A,
    /// Kohn-Sham, pseudo-LDA.
    B,
    /// Kohn-Sham, parametrized correlation.
    C,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Panel5 {
    /// Without first-order corrections.
    A,
    /// With first-order corrections.
    B,
}

/// What the subcommand computes once the spec is assembled.
enum Job {
    Single,
    Sweep,
    ErrorGrid,
}

fn preset(command: &Command) -> (Job, Vec<(&'static str, &'static str)>) {
    let error = |protocol, fop| {
        (
            Job::ErrorGrid,
            vec![
                ("protocol", protocol),
                ("fop", fop),
                ("quantity", "relative_error"),
            ],
        )
    };
    let panel = |p: Panel| match p {
        Panel::A => "ni",
        Panel::B => "ks-plda",
        Panel::C => "ks-par",
    };
    match command {
        Command::Single { .. } => (Job::Single, vec![]),
        Command::Sweep { .. } => (Job::Sweep, vec![]),
        Command::ErrorGrid { .. } => (Job::ErrorGrid, vec![("quantity", "relative_error")]),
        Command::Fig2a => (
            Job::Sweep,
            vec![("protocol", "exact"), ("quantity", "extracted_work")],
        ),
        Command::Fig2b => (
            Job::Sweep,
            vec![("protocol", "exact"), ("quantity", "entropy_production")],
        ),
        Command::Fig3 { panel: p } => error(panel(*p), "false"),
        Command::Fig4 { panel: p } => error(panel(*p), "true"),
        Command::Fig5 { panel: p } => {
            let (job, mut keys) = error(
                "ks-plda",
                if matches!(p, Panel5::B) {
                    "true"
                } else {
                    "false"
                },
            );
            keys.extend([("tpf", "true"), ("tau_max", "4"), ("tau_count", "41")]);
            (job, keys)
        }
    }
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, Error> {
    let c = &cli.common;
    let mut kv: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
    if let Some(g) = &c.grid {
        let (nu, nt) = g.split_once(['x', 'X']).ok_or_else(|| {
            Error::Config(format!("--grid expects <U points>x<tau points>, got `{g}`"))
        })?;
        push("u_count", nu.trim().to_string());
        push("tau_count", nt.trim().to_string());
    }
    if let Some(n) = c.steps {
        push("n_steps", n.to_string());
    }
    if let Some(s) = &c.density_source {
        push("density_source", s.clone());
    }
    if let Some(s) = &c.delta_convention {
        push("delta_convention", s.clone());
    }
    let run = match &cli.command {
        Command::Single { u, tau, run } => {
            if let Some(u) = u {
                push("u", u.to_string());
            }
            if let Some(t) = tau {
                push("tau", t.to_string());
            }
            Some(run)
        }
        Command::Sweep { run } | Command::ErrorGrid { run } => Some(run),
        _ => None,
    };
    if let Some(r) = run {
        if let Some(p) = &r.protocol {
            push("protocol", p.clone());
        }
        if r.fop {
            push("fop", "true".into());
        }
        if r.tpf {
            push("tpf", "true".into());
        }
        if let Some(q) = &r.quantity {
            push("quantity", q.clone());
        }
    }
    for s in &c.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        push(k.trim(), v.trim().to_string());
    }
    Ok(kv)
}

fn build_spec(cli: &Cli, preset_keys: &[(&str, &str)]) -> Result<SweepSpec, Error> {
    let mut spec = SweepSpec::default();
    for (k, v) in preset_keys {
        config::apply(&mut spec, k, v)?;
    }
    if let Some(path) = &cli.common.config {
        config::load(path, &mut spec)?;
    }
    for (k, v) in overrides(cli)? {
        config::apply(&mut spec, &k, &v).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("command line: {m}")),
            other => other,
        })?;
    }
    Ok(spec)
}

fn write_text(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_table(
    table: &SweepTable,
    format: OutputFormat,
    cli: &Cli,
    timestamp: Option<&str>,
) -> Result<(), Error> {
    let q = table.spec.quantity;
    if table.failed_count() > 0 {
        eprintln!(
            "{}",
            json!({ "warning": { "failed_cells": table.failed_count(), "total_cells": table.cells.len() } })
        );
    }
    match &cli.common.out {
        Some(path) => emit::emit(table, q, format, path, timestamp),
        None => write_text(&emit::render(table, q, format, timestamp), None),
    }
}

fn single_json(spec: &SweepSpec, timestamp: Option<&str>) -> Result<String, Error> {
    let cfg = spec.base;
    let r = run_single(&cfg, spec.protocol, spec.flags)?;
    let value = json!({
        "protocol": r.protocol,
        "flags": r.flags,
        "config": cfg,
        "generated_at": timestamp,
        "extracted_work": r.extracted_work,
        "mean_work": r.mean_work,
        "delta_f": r.delta_f,
        "delta_f_zero": r.delta_f_zero,
        "entropy_production": r.entropy_production,
        "jarzynski_residual": r.jarzynski_residual,
        "work_distribution": r.work_distribution,
        "transitions": r.transitions,
        "initial_energies": r.initial_energies,
        "final_energies": r.final_energies,
        "diagnostics": r.diagnostics,
    });
    Ok(serde_json::to_string_pretty(&value).expect("report serializes") + "\n")
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            return Err(Error::InvalidInput("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let (job, keys) = preset(&cli.command);
    let mut spec = build_spec(cli, &keys)?;
    let format = OutputFormat::parse(cli.common.format.as_deref().unwrap_or("csv"))?;
    let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let timestamp = (!cli.common.no_timestamp).then_some(now.as_str());

    match job {
        Job::Single => match format {
            OutputFormat::Json => {
                write_text(&single_json(&spec, timestamp)?, cli.common.out.as_deref())
            }
            OutputFormat::Csv => {
                spec.u_over_j = Axis::single(spec.base.u / spec.base.j);
                spec.tau_j = Axis::single(spec.base.tau * spec.base.j);
                emit_table(&run_sweep(&spec)?, format, cli, timestamp)
            }
        },
        Job::Sweep => {
            if spec.quantity == Quantity::RelativeError {
                return Err(Error::Config(
                    "relative_error needs the error-grid subcommand".into(),
                ));
            }
            emit_table(&run_sweep(&spec)?, format, cli, timestamp)
        }
        Job::ErrorGrid => {
            spec.quantity = Quantity::RelativeError;
            let exact_spec = SweepSpec {
                protocol: Protocol::Exact,
                flags: Flags::NONE,
                quantity: Quantity::ExtractedWork,
                ..spec
            };
            let approx = run_sweep(&spec)?;
            let exact = if spec.protocol == Protocol::Exact && spec.flags == Flags::NONE {
                approx.clone()
            } else {
                run_sweep(&exact_spec)?
            };
            emit_table(
                &relative_error_grid(&exact, &approx)?,
                format,
                cli,
                timestamp,
            )
        }
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut body = json!({ "code": e.code(), "message": e.to_string() });
    if let Error::Cell {
        u_over_j, tau_j, ..
    } = e
    {
        body["cell"] = json!({ "u_over_j": u_over_j, "tau_j": tau_j });
    }
    if let Error::Convergence {
        iterations,
        last_residual,
        ..
    } = e
    {
        body["iterations"] = json!(iterations);
        body["last_residual"] = json!(last_residual);
    }
    json!({ "error": body })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let message = e.render().to_string();
            eprintln!(
                "{}",
                json!({ "error": { "code": "usage", "message": message.trim() } })
            );
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
