//! `minsurf`: batch runs of the identity suite, the graph solver, the
//! Beltrami factorization and the inequality scans.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use minsurf::beltrami::{
    classify_regions, default_region_tolerances, factorize, harmonic_residual, FactorizeConfig, HarmonicNorm,
};
use minsurf::fem::TestSpace;
use minsurf::graphsolve::presets::Preset;
use minsurf::graphsolve::{
    inner_variation_residual_in, minimize, outer_residual_in, BoundaryData, SolveConfig,
};
use minsurf::ineqlab::{run_scan, ScanConfig, ScanKind};
use minsurf::io;
use minsurf::matcore::verify_identities;
use minsurf::{DiscreteMap, Error, Mesh, Result, ScanReport};

use config::ConfigFile;

const AFTER_HELP: &str = "\
Exit codes: 0 success, 1 violations found, 2 invalid input, 3 convergence failure, 4 I/O error.

Config files (--config) hold one `key = value` per line; keys are the long
flag names (`lambda-bound = 2`). Flags override the file, the file overrides
defaults.

CSV columns:
  solve --residual-csv     level,rings,h,nodes,iterations,outer_residual,inner_residual
  scan --histogram-csv     bin_lo,bin_hi,count (first and last rows are under/overflow)
  residuals --csv          test_space,outer_residual,inner_residual
  --map-csv (solve, factorize)  node,x,y,u1,...,un";

#[derive(Parser)]
#[command(name = "minsurf", version, about = "Minimal surface system workbench", after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Base seed of all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (directory for `factorize`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Tolerance of the command's main check or solver.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Flat key = value settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the algebraic identities of the area integrand on random matrices.
    Verify(VerifyArgs),
    /// Minimize the area of a graph over a disc or a given mesh.
    Solve(SolveArgs),
    /// Factor a solution as v o phi with phi quasiconformal.
    Factorize(FactorizeArgs),
    /// Run a randomized inequality scan.
    Scan(ScanArgs),
    /// Weak outer and inner residuals of a stored map.
    Residuals(ResidualsArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Codimension of the sampled matrices.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args)]
struct SolveArgs {
    /// Boundary preset: affine, z2, saddle, sine.
    #[arg(long)]
    preset: Option<String>,
    /// Factor applied to the preset data.
    #[arg(long)]
    scale: Option<f64>,
    /// Mesh JSON file; defaults to a polar disc mesh.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Boundary values as `node,u1,...,un` rows instead of a preset.
    #[arg(long = "boundary-csv")]
    boundary_csv: Option<PathBuf>,
    /// Rings of the disc mesh at the coarsest level.
    #[arg(long)]
    rings: Option<usize>,
    /// Number of refinement levels; each halves the mesh size.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long = "residual-csv")]
    residual_csv: Option<PathBuf>,
    #[arg(long = "map-csv")]
    map_csv: Option<PathBuf>,
}

#[derive(Args)]
struct FactorizeArgs {
    /// Map JSON written by `solve`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Beltrami grid size (power of two).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long = "half-width")]
    half_width: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long = "map-csv")]
    map_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// rank1-convexity, rank1-hessian, small-det, sptnull or orthogonal-split.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long = "lambda-bound")]
    lambda_bound: Option<f64>,
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long)]
    eps3: Option<f64>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
    /// Bound on |X| for quasiconformal pairs.
    #[arg(long)]
    cap: Option<f64>,
    /// Comma-separated C1 grid.
    #[arg(long)]
    c1: Option<String>,
    #[arg(long = "bisection-steps")]
    bisection_steps: Option<u32>,
    /// Convexity margin for small-det; estimated when absent.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long = "histogram-csv")]
    histogram_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ResidualsArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

const SHARED_KEYS: [&str; 4] = ["seed", "threads", "out", "tol"];

/// A failed run: the exit code and, for convergence failures, the last
/// iterate to save.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NotConverged { .. } | Error::MinimizeNotConverged { .. } => 3,
            Error::Io(_) => 4,
            _ => 2,
        };
        let message = match &e {
            Error::NotConverged { history, .. } => format!("{e}\nresidual history: {history:?}"),
            _ => e.to_string(),
        };
        Failure { code, message }
    }
}

type Run = std::result::Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match ConfigFile::load(cli.shared.config.as_deref())
        .and_then(|c| c.pick_opt(cli.shared.threads, "threads"))
    {
        Ok(t) => t,
        Err(e) => return fail(Failure::from(e)),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            return fail(Failure {
                code: 2,
                message: format!("cannot start thread pool: {e}"),
            })
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => ExitCode::from(code),
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("error: {}", f.message);
    ExitCode::from(f.code)
}

fn dispatch(cli: &Cli) -> Run {
    let file = ConfigFile::load(cli.shared.config.as_deref())?;
    match &cli.command {
        Command::Verify(a) => cmd_verify(&cli.shared, &file, a),
        Command::Solve(a) => cmd_solve(&cli.shared, &file, a),
        Command::Factorize(a) => cmd_factorize(&cli.shared, &file, a),
        Command::Scan(a) => cmd_scan(&cli.shared, &file, a),
        Command::Residuals(a) => cmd_residuals(&cli.shared, &file, a),
    }
}

fn allow(file: &ConfigFile, keys: &[&str]) -> Result<()> {
    let all: Vec<&str> = SHARED_KEYS.iter().chain(keys).copied().collect();
    file.check_keys(&all)
}

fn out_path(shared: &Shared, file: &ConfigFile, default: &str) -> Result<PathBuf> {
    file.pick(shared.out.clone(), "out", PathBuf::from(default))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    io::write_atomic(path, text.as_bytes()).map_err(|e| match e {
        Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))),
        other => other,
    })
}

fn write_report(path: &Path, report: &ScanReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_text(path, &text)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn cmd_verify(shared: &Shared, file: &ConfigFile, a: &VerifyArgs) -> Run {
    allow(file, &["n", "samples"])?;
    let n = file.pick(a.n, "n", 3usize)?;
    let samples = file.pick(a.samples, "samples", 100_000u64)?;
    let seed = file.pick(shared.seed, "seed", 0u64)?;
    let tol = file.pick(shared.tol, "tol", 1e-9)?;
    let out = out_path(shared, file, "verify-report.json")?;
    let report = verify_identities(n, samples, seed, tol)?;
    write_report(&out, &report)?;
    println!(
        "verify: n = {n}, {samples} samples, {} violations -> {}",
        report.violation_count,
        out.display()
    );
    Ok(if report.is_clean() { 0 } else { 1 })
}

/// Mesh for refinement level `k`: the disc with `rings * 2^k` rings, or the
/// given mesh refined `k` times.
fn level_mesh(base: Option<&Mesh>, rings: usize, k: usize) -> Result<Mesh> {
    match base {
        None => Mesh::disc(rings << k),
        Some(m) => {
            let mut mesh = m.clone();
            for _ in 0..k {
                mesh = mesh.refine().0;
            }
            Ok(mesh)
        }
    }
}

fn cmd_solve(shared: &Shared, file: &ConfigFile, a: &SolveArgs) -> Run {
    allow(
        file,
        &[
            "preset",
            "scale",
            "mesh",
            "boundary-csv",
            "rings",
            "levels",
            "max-iter",
            "residual-csv",
            "map-csv",
        ],
    )?;
    let preset_name = file.pick(a.preset.clone(), "preset", "z2".to_string())?;
    let scale = file.pick(a.scale, "scale", 0.25)?;
    let rings = file.pick(a.rings, "rings", 12usize)?;
    let levels = file.pick(a.levels, "levels", 1usize)?;
    let mesh_path: Option<PathBuf> = file.pick_opt(a.mesh.clone(), "mesh")?;
    let csv_path: Option<PathBuf> = file.pick_opt(a.boundary_csv.clone(), "boundary-csv")?;
    let residual_csv: Option<PathBuf> = file.pick_opt(a.residual_csv.clone(), "residual-csv")?;
    let map_csv: Option<PathBuf> = file.pick_opt(a.map_csv.clone(), "map-csv")?;
    let out = out_path(shared, file, "solution.json")?;
    let defaults = SolveConfig::default();
    let config = SolveConfig {
        tol: file.pick(shared.tol, "tol", defaults.tol)?,
        max_iter: file.pick(a.max_iter, "max-iter", defaults.max_iter)?,
        ..defaults
    };
    config.validate()?;
    if levels == 0 || rings == 0 {
        return Err(Error::InvalidInput("levels and rings must be positive".into()).into());
    }
    if csv_path.is_some() && levels > 1 {
        return Err(Error::InvalidInput("a boundary CSV fixes one mesh; use --levels 1".into()).into());
    }
    let base = match &mesh_path {
        Some(p) => Some(io::mesh_from_json(&read(p)?)?),
        None => None,
    };
    let preset = Preset::named(&preset_name, scale)?;
    let mut rows = Vec::new();
    let mut last = None;
    for k in 0..levels {
        let mesh = Arc::new(level_mesh(base.as_ref(), rings, k)?);
        let boundary = match &csv_path {
            Some(p) => io::boundary_from_csv(&mesh, &read(p)?)?,
            None => BoundaryData::from_fn(&mesh, preset.codim(), |p| preset.eval(p))?,
        };
        let solved = match minimize(&boundary, &config, mesh.clone()) {
            Ok(s) => s,
            Err(Error::MinimizeNotConverged {
                iterations,
                grad_norm,
                last_iterate,
            }) => {
                write_text(&out, &io::map_to_json(&last_iterate)?)?;
                return Err(Failure {
                    code: 3,
                    message: format!(
                        "minimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e}); last iterate saved to {}",
                        out.display()
                    ),
                });
            }
            Err(e) => return Err(e.into()),
        };
        let outer = outer_residual_in(&solved.map, TestSpace::Refined)?;
        let inner = inner_variation_residual_in(&solved.map, TestSpace::Refined)?;
        println!(
            "solve: level {k}, {} nodes, {} iterations, outer residual {outer:.6e}, inner residual {inner:.6e}",
            mesh.node_count(),
            solved.iterations
        );
        rows.push(format!(
            "{k},{},{},{},{},{outer},{inner}",
            if base.is_none() { rings << k } else { 0 },
            mesh.mesh_size(),
            mesh.node_count(),
            solved.iterations
        ));
        last = Some(solved.map);
    }
    let map = last.expect("at least one level");
    write_text(&out, &io::map_to_json(&map)?)?;
    if let Some(p) = residual_csv {
        let mut text = String::from("level,rings,h,nodes,iterations,outer_residual,inner_residual\n");
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        write_text(&p, &text)?;
    }
    if let Some(p) = map_csv {
        write_text(&p, &io::map_csv(&map))?;
    }
    Ok(0)
}

fn cmd_factorize(shared: &Shared, file: &ConfigFile, a: &FactorizeArgs) -> Run {
    allow(file, &["input", "grid", "half-width", "max-iter", "map-csv"])?;
    let input: PathBuf = file
        .pick_opt(a.input.clone(), "input")?
        .ok_or_else(|| Error::InvalidInput("factorize needs --input".into()))?;
    let defaults = FactorizeConfig::default();
    let mut config = FactorizeConfig {
        grid: file.pick(a.grid, "grid", defaults.grid)?,
        half_width: file.pick(a.half_width, "half-width", defaults.half_width)?,
        ..defaults
    };
    config.beltrami.tol = file.pick(shared.tol, "tol", config.beltrami.tol)?;
    config.beltrami.max_iter = file.pick(a.max_iter, "max-iter", config.beltrami.max_iter)?;
    let map_csv: Option<PathBuf> = file.pick_opt(a.map_csv.clone(), "map-csv")?;
    let out = out_path(shared, file, "factorize-out")?;
    let u = io::map_from_json(&read(&input)?)?;
    let f = factorize(&u, &config)?;
    let harmonic = harmonic_residual(&f.v, HarmonicNorm::StrongL2)?;
    let harmonic_dual = harmonic_residual(&f.v, HarmonicNorm::DualH1)?;
    let (tol_grad, tol_minor) = default_region_tolerances(&f.v);
    let regions = classify_regions(&f.v, tol_grad, tol_minor)?;
    let report = json!({
        "schema": "minsurf.factorize-report/v1",
        "grid": config.grid,
        "half_width": config.half_width,
        "mu_sup": f.mu_sup,
        "beltrami_iterations": f.iterations,
        "beltrami_residual": f.beltrami_residual,
        "residual_history": f.residual_history,
        "far_field": f.far_field,
        "conformal_mismatch": f.conformal_mismatch,
        "min_jacobian": f.min_jacobian,
        "harmonic_residual": harmonic,
        "harmonic_residual_dual": harmonic_dual,
        "regions": {
            "tol_grad": regions.tol_grad,
            "tol_minor": regions.tol_minor,
            "e1": regions.counts[0],
            "zset": regions.counts[1],
            "oset": regions.counts[2],
            "e1_measure": regions.e1_measure,
        },
    });
    std::fs::create_dir_all(&out).map_err(Error::Io)?;
    write_text(&out.join("phi.json"), &io::map_to_json(f.phi.map())?)?;
    write_text(&out.join("v.json"), &io::map_to_json(&f.v)?)?;
    write_json(&out.join("report.json"), &report)?;
    if let Some(p) = map_csv {
        write_text(&p, &io::map_csv(&f.v))?;
    }
    println!(
        "factorize: sup|mu| = {:.3e}, {} Beltrami iterations, harmonic residual {harmonic:.6e} -> {}",
        f.mu_sup,
        f.iterations,
        out.display()
    );
    Ok(0)
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("C1 grid entry '{s}': {e}")))
        })
        .collect()
}

fn cmd_scan(shared: &Shared, file: &ConfigFile, a: &ScanArgs) -> Run {
    allow(
        file,
        &[
            "kind",
            "lambda-bound",
            "K",
            "eps3",
            "L",
            "n",
            "samples",
            "cap",
            "c1",
            "bisection-steps",
            "margin",
            "histogram-csv",
        ],
    )?;
    let kinds: Vec<&str> = ScanKind::ALL.iter().map(|k| k.name()).collect();
    let usage = format!("usage: minsurf scan --kind <{}> [options]", kinds.join("|"));
    let kind_name: Option<String> = file.pick_opt(a.kind.clone(), "kind")?;
    let kind = match kind_name.as_deref().map(str::parse::<ScanKind>) {
        Some(Ok(k)) => k,
        Some(Err(e)) => {
            return Err(Failure {
                code: 2,
                message: format!("{e}\n{usage}"),
            })
        }
        None => {
            return Err(Failure {
                code: 2,
                message: format!("scan needs --kind\n{usage}"),
            })
        }
    };
    let d = ScanConfig::default();
    let c1_text: Option<String> = file.pick_opt(a.c1.clone(), "c1")?;
    let cfg = ScanConfig {
        lambda_bound: file.pick(a.lambda_bound, "lambda-bound", d.lambda_bound)?,
        k: file.pick(a.k, "K", d.k)?,
        eps3: file.pick(a.eps3, "eps3", d.eps3)?,
        l: file.pick(a.l, "L", d.l)?,
        n: file.pick(a.n, "n", if kind == ScanKind::Sptnull { 3 } else { d.n })?,
        samples: file.pick(a.samples, "samples", d.samples)?,
        seed: file.pick(shared.seed, "seed", d.seed)?,
        tol: file.pick(shared.tol, "tol", d.tol)?,
        cap: file.pick(a.cap, "cap", d.cap)?,
        c1_grid: match c1_text {
            Some(t) => parse_grid(&t)?,
            None => d.c1_grid,
        },
        bisection_steps: file.pick(a.bisection_steps, "bisection-steps", d.bisection_steps)?,
        convexity_margin: file.pick_opt(a.margin, "margin")?,
    };
    if kind == ScanKind::Sptnull {
        cfg.validate_qc()?;
    } else {
        cfg.validate()?;
    }
    let histogram: Option<PathBuf> = file.pick_opt(a.histogram_csv.clone(), "histogram-csv")?;
    let out = out_path(shared, file, "scan-report.json")?;
    let report = run_scan(kind, &cfg)?;
    write_report(&out, &report)?;
    if let Some(p) = histogram {
        match &report.histogram {
            Some(h) => write_text(&p, &io::histogram_csv(h))?,
            None => eprintln!("note: {kind} scans produce no histogram"),
        }
    }
    let mut constants: Vec<String> = report.constants.iter().map(|(k, v)| format!("{k} = {v:.6e}")).collect();
    constants.retain(|c| !c.contains('['));
    let violations = report.violation_count + report.strata.values().map(|s| s.violation_count).sum::<u64>();
    let mut line = format!("scan {kind}: {} samples, {violations} violations", report.samples);
    if !constants.is_empty() {
        line.push_str("; ");
        line.push_str(&constants.join(", "));
    }
    println!("{line} -> {}", out.display());
    Ok(if report.is_clean() { 0 } else { 1 })
}

fn cmd_residuals(shared: &Shared, file: &ConfigFile, a: &ResidualsArgs) -> Run {
    allow(file, &["input", "csv"])?;
    let input: PathBuf = file
        .pick_opt(a.input.clone(), "input")?
        .ok_or_else(|| Error::InvalidInput("residuals needs --input".into()))?;
    let csv: Option<PathBuf> = file.pick_opt(a.csv.clone(), "csv")?;
    let out = out_path(shared, file, "residuals.json")?;
    let u: DiscreteMap = io::map_from_json(&read(&input)?)?;
    let mut spaces = serde_json::Map::new();
    let mut text = String::from("test_space,outer_residual,inner_residual\n");
    for (name, space) in [("native", TestSpace::Native), ("refined", TestSpace::Refined)] {
        let outer = outer_residual_in(&u, space)?;
        let inner = inner_variation_residual_in(&u, space)?;
        text.push_str(&format!("{name},{outer},{inner}\n"));
        spaces.insert(name.into(), json!({ "outer_residual": outer, "inner_residual": inner }));
        println!("residuals ({name}): outer {outer:.6e}, inner {inner:.6e}");
    }
    let report = json!({
        "schema": "minsurf.residuals/v1",
        "nodes": u.mesh().node_count(),
        "codim": u.codim(),
        "h": u.mesh().mesh_size(),
        "test_spaces": Value::Object(spaces),
    });
    write_json(&out, &report)?;
    if let Some(p) = csv {
        write_text(&p, &text)?;
    }
    Ok(0)
}
