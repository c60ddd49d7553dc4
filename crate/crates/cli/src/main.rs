//! `hanzawa`: verification suites, curvature and norm evaluation, and the
//! fixed-point evolution probe, with reproducible JSON/CSV artifacts.

mod io;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use hanzawa_core::hanzawa::{HarmonicHeight, HeightFn, WaveHeight};
use hanzawa_core::interface_geometry::InterfaceGeometry;
use hanzawa_core::jet;
use hanzawa_core::norms::{self, NormSpec, SampledFunction};
use hanzawa_core::surface::rng;
use hanzawa_core::verify;
use hanzawa_core::{evolution, ReferenceSurface, RunConfig, SurfaceKind, V3};

use io::{config_err, ConfigError};
use report::{Checks, Report};

const WORKERS_ENV: &str = "HANZAWA_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "hanzawa", version, about = "Hanzawa-transform verification and evolution probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Surface description (TOML: kind, params, grid, rho0, center).
    #[arg(long)]
    surface: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run verification suites and write a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// `all` or a comma-separated list of suites.
        #[arg(long)]
        suite: Option<String>,
        /// Use seeds 0..N for the randomized suites.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean curvature of the interface Γ = {x + h n} as CSV
    /// (u, v, H_formula, H_oracle, abs_err).
    Curvature {
        #[command(flatten)]
        common: Common,
        /// const:C | wave:AMP[:SEED] | harmonic:L:AMP | csv:PATH
        #[arg(long, default_value = "const:0")]
        height: String,
        /// CSV output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the reference grid (u, v, x, y, z, nx, ny, nz, H).
        #[arg(long)]
        grid_csv: Option<PathBuf>,
    },
    /// Evaluate a norm of a builtin or tabulated function.
    Norms {
        #[arg(long)]
        config: Option<PathBuf>,
        /// linear | quadratic | sine | abs | gauss
        #[arg(long, conflicts_with = "csv", required_unless_present_any = ["csv", "probe"])]
        func: Option<String>,
        /// Tensor-grid samples: coordinate columns then a value column.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Norm specs such as `L:2`, `C:1`, `W:0.5:2`, `W6:2`; repeatable.
        #[arg(long = "norm", required_unless_present = "probe")]
        norms: Vec<String>,
        /// Grid for builtins on [0,1]^d, e.g. `257` or `33x33`.
        #[arg(long, default_value = "257")]
        grid: String,
        /// Run the product-estimate probe on the grid instead.
        #[arg(long)]
        probe: bool,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        /// JSON report of the probe.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fixed-point probe; write snapshots as CSV and the trace as JSON.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check stored reports: body hash and pass flags.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = init_workers().and_then(|_| run(cli.command));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = c.downcast_ref::<std::io::Error>().or_else(|| match c.downcast_ref::<csv::Error>().map(csv::Error::kind) {
            Some(csv::ErrorKind::Io(io)) => Some(io),
            _ => None,
        });
        io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn init_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| config_err(format!("{WORKERS_ENV}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Verify { common, suite, seeds, out } => cmd_verify(&common, suite, seeds, out),
        Command::Curvature { common, height, out, grid_csv } => cmd_curvature(&common, &height, out, grid_csv),
        Command::Norms { config, func, csv, norms, grid, probe, s, r, q, out } => {
            let cfg = io::load_config(config.as_deref(), None)?;
            if probe {
                cmd_probe(&cfg, &grid, s, r, q, out)
            } else {
                cmd_norms(func.as_deref(), csv.as_deref(), &norms, &grid)
            }
        }
        Command::Evolve { common, out_dir } => cmd_evolve(&common, out_dir),
        Command::Report { files } => cmd_report(&files),
    }
}

fn cmd_verify(common: &Common, suite: Option<String>, seeds: Option<u64>, out: Option<PathBuf>) -> Result<bool> {
    let mut cfg = io::load_config(common.config.as_deref(), common.surface.as_deref())?;
    if let Some(n) = seeds {
        if n == 0 {
            return Err(config_err("--seeds must be at least 1"));
        }
        cfg.verify.seeds = (0..n).collect();
    }
    let suites = match suite {
        Some(s) => verify::parse_suites(&s).map_err(|e| config_err(e.to_string()))?,
        None => cfg.verify.suites.clone(),
    };
    let start = Instant::now();
    let records = verify::run_suites(&suites, &cfg)?;
    for r in &records {
        println!("{r}");
    }
    let checks = Checks::new(records);
    let ok = checks.failed == 0;
    if !ok {
        eprintln!("{} of {} checks failed:", checks.failed, checks.records.len());
        for r in checks.records.iter().filter(|r| !r.pass) {
            eprintln!("  {} (criterion {}): {:.3e} > {:.1e}", r.name, r.criterion, r.max_rel_err, r.tolerance);
        }
    }
    let path = out.unwrap_or_else(|| Path::new(&cfg.output.dir).join("verify.json"));
    Report::new("verify", &cfg, checks, start.elapsed().as_secs_f64())?.write(&path)?;
    eprintln!("report written to {}", path.display());
    Ok(ok)
}

fn default_surface(cfg: &RunConfig) -> Result<ReferenceSurface> {
    Ok(match &cfg.surface {
        Some(s) => ReferenceSurface::new(s.shape()?, s.center, s.rho0, s.grid.nu, s.grid.nv)?,
        None => ReferenceSurface::sphere(1.0, 16, 32)?,
    })
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse().map_err(|_| config_err(format!("{what}: {s:?} is not a number")))
}

/// Node values of a height spec, and `Some(c)` when it is constant.
fn height_values(spec: &str, s: &ReferenceSurface) -> Result<(Vec<f64>, Option<f64>)> {
    let parts: Vec<&str> = spec.splitn(2, ':').collect();
    let arg = parts.get(1).copied().unwrap_or("");
    let n = s.grid.len();
    let c = s.center;
    match parts[0] {
        "const" => {
            let v = parse_f64(arg, "--height const")?;
            Ok((vec![v; n], Some(v)))
        }
        "wave" => {
            let mut it = arg.split(':');
            let amp = parse_f64(it.next().unwrap_or(""), "--height wave amplitude")?;
            let seed = it.next().map(|x| x.parse::<u64>()).transpose().map_err(|_| config_err("--height wave seed must be an integer"))?;
            let w = WaveHeight::random(&mut rng(seed.unwrap_or(0)), c.into(), 0.0, amp, 3, false);
            Ok((s.nodes().iter().map(|nd| w.eval(&jet::csts3(nd.x.into()), 0.0).v).collect(), None))
        }
        "harmonic" => {
            let (l, amp) = arg.split_once(':').ok_or_else(|| config_err("--height harmonic:L:AMP"))?;
            let l: usize = l.parse().ok().filter(|l| (1..=3).contains(l)).ok_or_else(|| config_err("harmonic degree must be 1, 2 or 3"))?;
            let amp = parse_f64(amp, "--height harmonic amplitude")?;
            let vals = s.nodes().iter().map(|nd| amp * HarmonicHeight::poly(l, &jet::csts3((nd.x - c).normalize().into())).v).collect();
            Ok((vals, None))
        }
        "csv" => Ok((io::read_height_csv(Path::new(arg), s)?, None)),
        other => Err(config_err(format!("unknown height kind {other:?}; use const, wave, harmonic or csv"))),
    }
}

fn cmd_curvature(common: &Common, height: &str, out: Option<PathBuf>, grid_csv: Option<PathBuf>) -> Result<bool> {
    let cfg = io::load_config(common.config.as_deref(), common.surface.as_deref())?;
    let s = default_surface(&cfg)?;
    let (h, constant) = height_values(height, &s)?;
    let ig = InterfaceGeometry::new(&s, &h, cfg.gate.delta0)?;

    // Oracle: closed form for concentric spheres, otherwise the generic
    // finite-difference geometry of the displaced point cloud.
    let (oracle, tol) = match (s.kind, constant) {
        (SurfaceKind::Sphere { r }, Some(c)) => (vec![-2.0 / (r + c); h.len()], 1e-9),
        _ => {
            let pts: Vec<V3> = s.nodes().iter().zip(&h).map(|(nd, hv)| nd.x + nd.frame.n * *hv).collect();
            let nrm: Vec<V3> = s.nodes().iter().map(|nd| nd.frame.n).collect();
            (s.fd_geometry(&pts, &nrm)?.iter().map(|g| g.mean_curvature).collect(), 1e-3)
        }
    };
    let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut worst = 0.0f64;
    let mut rows = Vec::with_capacity(h.len());
    for (i, nd) in s.nodes().iter().enumerate() {
        let err = (ig.h_gamma[i] - oracle[i]).abs();
        worst = worst.max(err / scale);
        rows.push([nd.s[0], nd.s[1], ig.h_gamma[i], oracle[i], err]);
    }
    let header = ["u", "v", "H_formula", "H_oracle", "abs_err"];
    match &out {
        Some(p) => {
            let mut w = io::csv_writer(p)?;
            write_rows(&mut w, &header, &rows)?;
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            write_rows(&mut w, &header, &rows)?;
        }
    }
    if let Some(p) = grid_csv {
        let mut w = io::csv_writer(&p)?;
        let rows: Vec<[f64; 9]> = s
            .nodes()
            .iter()
            .map(|nd| [nd.s[0], nd.s[1], nd.x[0], nd.x[1], nd.x[2], nd.frame.n[0], nd.frame.n[1], nd.frame.n[2], nd.mean_curvature])
            .collect();
        write_rows(&mut w, &["u", "v", "x", "y", "z", "nx", "ny", "nz", "H"], &rows)?;
    }
    let ok = worst <= tol;
    eprintln!("curvature: max relative deviation from oracle {worst:.3e} (tolerance {tol:.0e}) {}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn write_rows<W: std::io::Write, const N: usize>(w: &mut csv::Writer<W>, header: &[&str], rows: &[[f64; N]]) -> Result<()> {
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let shape: Option<Vec<usize>> = s.split('x').map(|p| p.trim().parse().ok()).collect();
    shape.filter(|v| !v.is_empty() && v.iter().all(|n| *n >= 2)).ok_or_else(|| config_err(format!("--grid {s:?}: expected N or NxM")))
}

fn builtin(name: &str, shape: &[usize]) -> Result<SampledFunction> {
    let d = shape.len();
    let f: fn(&[f64]) -> f64 = match name {
        "linear" => |x| x[0],
        "quadratic" => |x| x[0] * x[0],
        "sine" => |x| x.iter().map(|v| (2.0 * std::f64::consts::PI * v).sin()).sum(),
        "abs" => |x| (x[0] - 0.5).abs(),
        "gauss" => |x| (-20.0 * x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>()).exp(),
        other => return Err(config_err(format!("unknown function {other:?}; use linear, quadratic, sine, abs or gauss"))),
    };
    Ok(SampledFunction::from_fn(shape, &vec![0.0; d], &vec![1.0; d], &vec![false; d], f)?)
}

fn cmd_norms(func: Option<&str>, csv: Option<&Path>, specs: &[String], grid: &str) -> Result<bool> {
    let f = match (func, csv) {
        (Some(name), None) => builtin(name, &parse_grid(grid)?)?,
        (None, Some(p)) => {
            let (shape, lo, hi, values) = io::read_grid_csv(p)?;
            let spacing = shape.iter().zip(lo.iter().zip(&hi)).map(|(n, (a, b))| (b - a) / (*n as f64 - 1.0)).collect();
            SampledFunction::new(shape.clone(), lo, spacing, vec![false; shape.len()], values)?
        }
        _ => bail!(config_err("give exactly one of --func and --csv")),
    };
    for s in specs {
        let spec: NormSpec = s.parse().map_err(|e: hanzawa_core::Error| config_err(e.to_string()))?;
        println!("{spec}\t{:.17e}", norms::sobolev_norm(&f, &spec)?);
    }
    Ok(true)
}

fn cmd_probe(cfg: &RunConfig, grid: &str, s: f64, r: f64, q: f64, out: Option<PathBuf>) -> Result<bool> {
    let shape = parse_grid(grid)?;
    if shape.len() < 2 {
        return Err(config_err("the product probe needs a time axis and at least one space axis, e.g. --grid 33x33"));
    }
    let start = Instant::now();
    let probe = norms::product_estimate_probe(&mut rng(cfg.verify.first_seed()), &shape, s, r, q, cfg.verify.probe_trials)?;
    let spread = probe.max / probe.median;
    println!("max {:.6e} median {:.6e} max/median {:.3} skipped {}", probe.max, probe.median, spread, probe.skipped);
    let path = out.unwrap_or_else(|| Path::new(&cfg.output.dir).join("product_probe.json"));
    Report::new("norms --probe", cfg, probe, start.elapsed().as_secs_f64())?.write(&path)?;
    Ok(spread < 10.0)
}

fn cmd_evolve(common: &Common, out_dir: Option<PathBuf>) -> Result<bool> {
    let cfg = io::load_config(common.config.as_deref(), common.surface.as_deref())?;
    let start = Instant::now();
    let (setup, b0, h0) = {
        let probe_surface = match &cfg.surface {
            Some(s) => s.build()?,
            None => std::sync::Arc::new(evolution::probe_surface(16, 32)?),
        };
        let h = match &cfg.initial.h_csv {
            Some(p) => Some(io::read_height_csv(Path::new(p), &probe_surface)?),
            None => None,
        };
        verify::evolve_inputs(&cfg, h)?
    };
    if !setup.grid.contains_tube(&setup.surface) {
        return Err(config_err("the surface tube does not fit inside the unit box"));
    }
    let trace = evolution::fixed_point_probe(&setup, &b0, &h0, &cfg.evolution)?;
    let dir = out_dir.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let dt = cfg.evolution.dt();
    if let Some(last) = trace.iterates.last() {
        let mut w = io::csv_writer(&dir.join("height.csv"))?;
        let mut rows = Vec::new();
        for (k, h) in last.h.iter().enumerate() {
            for (nd, v) in setup.surface.nodes().iter().zip(h) {
                rows.push([k as f64, k as f64 * dt, nd.s[0], nd.s[1], *v]);
            }
        }
        write_rows(&mut w, &["step", "t", "u", "v", "h"], &rows)?;
        let mut w = io::csv_writer(&dir.join("magnetic.csv"))?;
        let mut rows = Vec::new();
        for (k, b) in last.b.iter().enumerate() {
            for (m, v) in b.iter().enumerate() {
                let x = setup.grid.point(m);
                rows.push([k as f64, k as f64 * dt, x[0], x[1], x[2], v[0], v[1], v[2]]);
            }
        }
        write_rows(&mut w, &["step", "t", "x", "y", "z", "bx", "by", "bz"], &rows)?;
    }
    let ok = !trace.diverged && trace.contraction.map_or(trace.converged, |c| c < 1.0);
    println!(
        "T = {}: {} iterations, contraction {}, converged {}, diverged {}",
        trace.t_final,
        trace.residuals.len(),
        trace.contraction.map_or("n/a".to_string(), |c| format!("{c:.4}")),
        trace.converged,
        trace.diverged
    );
    Report::new("evolve", &cfg, trace, start.elapsed().as_secs_f64())?.write(&dir.join("trace.json"))?;
    Ok(ok)
}

fn cmd_report(files: &[PathBuf]) -> Result<bool> {
    let mut ok = true;
    for p in files {
        let text = std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: line {}, column {}: {e}", p.display(), e.line(), e.column())))?;
        let hash_ok = report::hash_matches(&v);
        let body = &v["body"];
        let records = body["data"]["records"].as_array();
        let failed: Vec<&str> = records
            .map(|rs| rs.iter().filter(|r| r["pass"] != serde_json::Value::Bool(true)).filter_map(|r| r["name"].as_str()).collect())
            .unwrap_or_default();
        println!(
            "{}: command {}, hash {}, {} records, {} failed",
            p.display(),
            body["command"].as_str().unwrap_or("?"),
            if hash_ok { "ok" } else { "MISMATCH" },
            records.map_or(0, Vec::len),
            failed.len()
        );
        for name in &failed {
            println!("  FAIL {name}");
        }
        ok &= hash_ok && failed.is_empty();
    }
    Ok(ok)
}
