mod config;
mod error;
mod output;
mod pipeline;
mod restrict;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddc_ident::restrictions::RestrictionKind;
use serde_json::json;

use config::{ConfigFile, Mode};
use error::{CliError, Issue, Result};
use output::BetaGrid;
use pipeline::Numerics;

const THREADS_VAR: &str = "DDC_IDENT_THREADS";

#[derive(Parser)]
#[command(name = "ddc-ident", version, about = "Identify the discount factor of dynamic discrete choice models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the identifying polynomials and write curves, the identified set and a manifest.
    Run(RunArgs),
    /// Check a config and report problems per field, without solving anything.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Source {
    /// Built-in scenario (entry, entry-fd, entry-game) or path to a model JSON file.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Path to a model JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the mode implied by the model type.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Comma list of restrictions, each `name` or `name(arg=val,...)`.
    #[arg(long)]
    restrictions: String,
    /// Firm whose discount factor is identified (1-based, games only).
    #[arg(long, default_value_t = 1)]
    firm: usize,
    /// Curve grid as lo:hi:n.
    #[arg(long, default_value = "0:1:201")]
    beta_grid: BetaGrid,
    #[arg(long, default_value = "ddc-ident-out")]
    out_dir: PathBuf,
    /// Common-root and root-residual tolerance.
    #[arg(long)]
    tol_root: Option<f64>,
    /// Stopping rule for value iteration and equilibrium iteration.
    #[arg(long)]
    tol_fixedpoint: Option<f64>,
    /// Equilibrium iteration damping in (0, 1].
    #[arg(long)]
    damping: Option<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    source: Source,
    /// Restrictions to resolve and rank-check.
    #[arg(long)]
    restrictions: Option<String>,
    #[arg(long, default_value_t = 1)]
    firm: usize,
}

struct Loaded {
    name: String,
    cfg: ConfigFile,
}

fn load(src: &Source) -> Result<Loaded> {
    let (name, mut cfg) = match (&src.scenario, &src.config) {
        (Some(s), None) if !Path::new(s).is_file() => (s.clone(), ConfigFile::builtin(s)?),
        (Some(s), None) => (s.clone(), ConfigFile::load(Path::new(s))?),
        (None, Some(p)) => (p.display().to_string(), ConfigFile::load(p)?),
        (None, None) => return Err(CliError::Usage("give --scenario or --config".into())),
        (Some(_), Some(_)) => return Err(CliError::Usage("give only one of --scenario and --config".into())),
    };
    if src.mode.is_some() {
        cfg.mode = src.mode;
    }
    Ok(Loaded { name, cfg })
}

/// Prints a line; a closed pipe on the reader's side is not an error.
fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn threads() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}

fn numerics(a: &RunArgs) -> Result<Numerics> {
    let mut n = Numerics::default();
    if let Some(t) = a.tol_root {
        if !(t > 0.0) {
            return Err(CliError::Usage("--tol-root must be positive".into()));
        }
        n.tolerances.common_root = t;
        n.tolerances.root_residual = t;
    }
    if let Some(t) = a.tol_fixedpoint {
        if !(t > 0.0) {
            return Err(CliError::Usage("--tol-fixedpoint must be positive".into()));
        }
        n.fixed_point_tol = t;
    }
    if let Some(d) = a.damping {
        if !(d > 0.0 && d <= 1.0) {
            return Err(CliError::Usage("--damping must lie in (0, 1]".into()));
        }
        n.damping = d;
    }
    Ok(n)
}

fn run(a: RunArgs) -> Result<()> {
    let threads = threads()?;
    let num = numerics(&a)?;
    let Loaded { name, cfg } = load(&a.source)?;
    cfg.validate()?;
    let mode = cfg.resolved_mode()?;
    let reqs = restrict::parse_list(&a.restrictions)?;
    log::info!("running {name} in {mode:?} mode with {} restriction(s)", reqs.len());
    let out = pipeline::run(&cfg, mode, &reqs, a.firm, &num)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|source| CliError::Io {
        path: a.out_dir.clone(),
        source,
    })?;
    let req_names: Vec<String> = reqs.iter().map(ToString::to_string).collect();
    let firm = (mode == Mode::Game).then_some(a.firm);
    output::write_curves(&a.out_dir.join("curves.csv"), &out.columns, &a.beta_grid)?;
    let columns: Vec<&str> = out.columns.iter().map(|(n, _)| n.as_str()).collect();
    output::write_json(
        &a.out_dir.join("identified_set.json"),
        &json!({
            "scenario": name,
            "mode": mode,
            "firm": firm,
            "restrictions": req_names,
            "columns": columns,
            "set": out.set,
            "note": out.note,
            "details": out.details,
        }),
    )?;
    output::write_json(
        &a.out_dir.join("run_manifest.json"),
        &json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": "run",
            "scenario": name,
            "mode": mode,
            "firm": firm,
            "restrictions": req_names,
            "beta_grid": a.beta_grid,
            "numerics": num,
            "finite_dependence_horizon": pipeline::RHO_MAX,
            "seed": null,
            "threads": threads,
            "config": cfg,
            "outputs": ["curves.csv", "identified_set.json", "run_manifest.json"],
        }),
    )?;
    let roots = out.set.as_ref().map(|s| s.combined.clone());
    log::info!("wrote {} curve(s) to {}", out.columns.len(), a.out_dir.display());
    let summary = json!({
        "out_dir": a.out_dir,
        "combined": roots,
        "inequality_intervals": out.set.and_then(|s| s.inequality_intervals),
        "note": out.note,
    });
    emit(&summary.to_string());
    Ok(())
}

fn restriction_report(cfg: &ConfigFile, mode: Mode, list: &str, firm: usize) -> Result<(Vec<serde_json::Value>, Vec<Issue>)> {
    let reqs = restrict::parse_list(list)?;
    let mut report = Vec::new();
    let mut issues = Vec::new();
    let mut push = |i: usize, req: &restrict::Request, r: Result<ddc_ident::restrictions::RestrictionSet>| match r {
        Ok(rs) => report.push(json!({
            "restriction": req.to_string(),
            "kind": rs.kind,
            "rows": rs.n_rows(),
            "rank": rs.rank(),
            "full_row_rank": rs.kind == RestrictionKind::InequalityGe || rs.is_full_row_rank(),
        })),
        Err(e) => issues.push(Issue::new(format!("restrictions[{i}]"), e.to_string())),
    };
    if mode == Mode::Game {
        let (model, design) = pipeline::game_model(cfg)?;
        if firm == 0 || firm > model.n_firms {
            return Err(CliError::Usage(format!("--firm must be in 1..={}", model.n_firms)));
        }
        for (i, s) in reqs.iter().enumerate() {
            push(i, s, restrict::game(s, &model.layout(), firm - 1, design.as_ref()));
        }
    } else {
        let data = pipeline::single_data(cfg, mode, &Numerics::default(), false)?;
        for (i, s) in reqs.iter().enumerate() {
            push(i, s, pipeline::resolve_single(std::slice::from_ref(s), &data).map(|mut v| v.remove(0)));
        }
    }
    Ok((report, issues))
}

/// Returns whether the config is valid.
fn validate(a: ValidateArgs) -> Result<bool> {
    let Loaded { name, cfg } = load(&a.source)?;
    let mut issues = cfg.issues();
    let mut report = Vec::new();
    if let (true, Some(list)) = (issues.is_empty(), &a.restrictions) {
        let mode = cfg.resolved_mode()?;
        let (r, more) = restriction_report(&cfg, mode, list, a.firm)?;
        report = r;
        issues.extend(more);
    }
    let valid = issues.is_empty();
    let text = serde_json::to_string_pretty(&json!({
        "config": name,
        "valid": valid,
        "issues": issues,
        "restrictions": report,
    }))
    .map_err(|e| CliError::Config(e.to_string()))?;
    emit(&text);
    Ok(valid)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
