//! Command-line driver: `feec verify`, `feec project` and `feec list`.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage
//! or configuration errors.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::elements::{assemble_complex, ElementFamily, FamilyTag};
use crate::mesh::{read_mesh, structured_mesh, SimplicialMesh};
use crate::projector::{CommutingProjector, ProjectorConfig};
use crate::verify::{
    boundedness_study, check_boundedness, check_bubbles, check_commutation, check_double_complex, check_locality,
    check_projection, check_unisolvency_family, emit_report, verify_assumptions, verify_exactness, CheckRecord,
    FamilyInfo, MeshInfo, Status, Timer, Tolerances, VerificationReport,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Random discrete inputs per slot in the projection suite.
const PROJECTION_SAMPLES: usize = 50;
/// Random polynomial inputs per slot pair in the commutation suite.
const COMMUTATION_SAMPLES: usize = 5;
/// Random polynomial inputs per slot in the smoother suite.
const DOUBLE_COMPLEX_SAMPLES: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "feec", version, about = "Local bounded commuting projections onto finite element complexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exactness, assumption, unisolvency and bubble checks of a family on a mesh.
    Verify(RunArgs),
    /// Builds the commuting projections and runs projection, commutation,
    /// locality and (with --refine) boundedness suites.
    Project(RunArgs),
    /// Lists the supported families and their degree bounds.
    List,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// lrt, lbdm, hs, afn or whitney3d.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    /// unit-square:N, unit-cube:N or file:PATH.
    #[arg(long)]
    mesh: Option<String>,
    /// Uniform refinements of the boundedness study.
    #[arg(long)]
    refine: Option<usize>,
    /// Extra quadrature degree for analytic inputs.
    #[arg(long = "quad-bump")]
    quad_bump: Option<usize>,
    /// Tolerance override NAME=VALUE (repeatable).
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
    /// Path of the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record per-check wall-clock seconds in the report.
    #[arg(long)]
    timings: bool,
    /// JSON file whose fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Fields of a configuration file; every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    family: Option<String>,
    degree: Option<usize>,
    mesh: Option<String>,
    refine: Option<usize>,
    quad_bump: Option<usize>,
    tol: Option<std::collections::BTreeMap<String, f64>>,
    report: Option<PathBuf>,
    seed: Option<u64>,
    timings: Option<bool>,
}

/// Where the mesh comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MeshSource {
    UnitSquare(usize),
    UnitCube(usize),
    File(PathBuf),
}

impl MeshSource {
    pub fn parse(s: &str) -> Result<Self, String> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| format!("mesh '{s}' is not of the form KIND:ARG"))?;
        let n = || -> Result<usize, String> {
            match arg.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(format!("mesh resolution '{arg}' must be a positive integer")),
            }
        };
        match kind {
            "unit-square" => Ok(MeshSource::UnitSquare(n()?)),
            "unit-cube" => Ok(MeshSource::UnitCube(n()?)),
            "file" if !arg.is_empty() => Ok(MeshSource::File(PathBuf::from(arg))),
            _ => Err(format!("unknown mesh source '{s}'")),
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            MeshSource::UnitSquare(n) => format!("unit-square:{n}"),
            MeshSource::UnitCube(n) => format!("unit-cube:{n}"),
            MeshSource::File(p) => format!("file:{}", p.display()),
        }
    }

    pub fn load(&self) -> Result<SimplicialMesh, String> {
        match self {
            MeshSource::UnitSquare(n) => Ok(structured_mesh(2, *n)),
            MeshSource::UnitCube(n) => Ok(structured_mesh(3, *n)),
            MeshSource::File(p) => read_mesh(p).map_err(|e| format!("{}: {e}", p.display())),
        }
    }
}

/// A validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub family: ElementFamily,
    pub mesh: MeshSource,
    pub refine: usize,
    pub quad_bump: usize,
    pub tolerances: Tolerances,
    pub report: Option<PathBuf>,
    pub seed: u64,
    pub timings: bool,
}

impl RunConfig {
    fn from_args(a: RunArgs) -> Result<Self, String> {
        let file = match &a.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                serde_json::from_str::<FileConfig>(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let name = file.family.or(a.family).ok_or("--family is required")?;
        let tag = FamilyTag::parse(&name).ok_or_else(|| format!("unknown family '{name}'"))?;
        let degree = file.degree.or(a.degree).unwrap_or(tag.min_degree());
        let family = ElementFamily::new(tag, degree).map_err(|e| e.to_string())?;
        let mesh = match file.mesh.or(a.mesh) {
            Some(s) => MeshSource::parse(&s)?,
            None if tag.dim() == 3 => MeshSource::UnitCube(1),
            None => MeshSource::UnitSquare(2),
        };
        let mut tolerances = Tolerances::default();
        for t in &a.tol {
            let (k, v) = t.split_once('=').ok_or_else(|| format!("tolerance '{t}' is not NAME=VALUE"))?;
            let v: f64 = v.parse().map_err(|_| format!("tolerance value '{v}' is not a number"))?;
            tolerances.set(k, v)?;
        }
        for (k, v) in file.tol.unwrap_or_default() {
            tolerances.set(&k, v)?;
        }
        Ok(RunConfig {
            family,
            mesh,
            refine: file.refine.or(a.refine).unwrap_or(0),
            quad_bump: file.quad_bump.or(a.quad_bump).unwrap_or(ProjectorConfig::default().quad_bump),
            tolerances,
            report: file.report.or(a.report),
            seed: file.seed.or(a.seed).unwrap_or(0),
            timings: file.timings.unwrap_or(a.timings),
        })
    }

    fn load_mesh(&self) -> Result<SimplicialMesh, String> {
        let mesh = self.mesh.load()?;
        if mesh.dim() != self.family.dim() {
            return Err(format!(
                "mesh {} is {}D but family {} is {}D",
                self.mesh.descriptor(),
                mesh.dim(),
                self.family.label(),
                self.family.dim()
            ));
        }
        Ok(mesh)
    }
}

/// Caps the rayon pool at `FEEC_THREADS` if set.
fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("FEEC_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| format!("FEEC_THREADS='{v}' is not a positive integer"))?;
        // a pool built earlier in the same process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match cli.command {
        Command::List => cmd_list(),
        Command::Verify(a) => with_config(a, cmd_verify),
        Command::Project(a) => with_config(a, cmd_project),
    }
}

fn with_config(a: RunArgs, f: fn(&RunConfig) -> Result<i32, String>) -> i32 {
    match RunConfig::from_args(a).and_then(|c| f(&c)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

pub fn cmd_list() -> i32 {
    for tag in FamilyTag::ALL {
        let max = tag.max_degree().map(|m| format!(", max degree {m}")).unwrap_or_default();
        println!("{:<10} {}D  min degree {}{max}  {}", tag.name(), tag.dim(), tag.min_degree(), tag.describe());
    }
    EXIT_PASS
}

fn finish(command: &str, cfg: &RunConfig, mesh: &SimplicialMesh, checks: Vec<CheckRecord>) -> Result<i32, String> {
    let report = VerificationReport::new(
        command,
        cfg.seed,
        cfg.quad_bump,
        cfg.tolerances,
        MeshInfo::new(&cfg.mesh.descriptor(), cfg.refine, mesh),
        FamilyInfo::from(&cfg.family),
        checks,
    );
    if let Some(path) = &cfg.report {
        write_report(&report, path)?;
    }
    println!(
        "{} on {}: {} passed, {} failed, {} skipped",
        cfg.family.label(),
        cfg.mesh.descriptor(),
        report.meta.passed,
        report.meta.failed,
        report.meta.skipped
    );
    Ok(if report.all_passed() { EXIT_PASS } else { EXIT_FAIL })
}

fn write_report(report: &VerificationReport, path: &Path) -> Result<(), String> {
    emit_report(report, path).map_err(|e| format!("cannot write report {}: {e}", path.display()))
}

fn summarize(records: &[CheckRecord], elapsed: f64) {
    let per = elapsed / records.len().max(1) as f64;
    for r in records {
        let tag = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        println!("{tag} {:<32} {:>8.3}s", r.name, r.seconds.unwrap_or(per));
    }
}

/// Runs a group of checks, prints their summary lines and appends them.
fn group(out: &mut Vec<CheckRecord>, timer: Timer, f: impl FnOnce() -> Vec<CheckRecord>) {
    let t = Instant::now();
    let rs = timer.run_many(f);
    summarize(&rs, t.elapsed().as_secs_f64());
    out.extend(rs);
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<i32, String> {
    let mesh = Arc::new(cfg.load_mesh()?);
    let timer = Timer { enabled: cfg.timings };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();
    match assemble_complex(mesh.clone(), cfg.family) {
        Ok(cx) => {
            group(&mut checks, timer, || verify_exactness(&cx, &cfg.tolerances));
            group(&mut checks, Timer::default(), || verify_assumptions(&cx, &cfg.tolerances, &mut rng, timer));
        }
        Err(e) => group(&mut checks, timer, || vec![failure("assembly", &e.to_string())]),
    }
    group(&mut checks, timer, || check_unisolvency_family(&cfg.family, &cfg.tolerances));
    group(&mut checks, timer, || check_bubbles(&cfg.family));
    finish("verify", cfg, &mesh, checks)
}

fn failure(name: &str, error: &str) -> CheckRecord {
    CheckRecord::new(name, false, serde_json::json!({ "error": error }), None)
}

pub fn cmd_project(cfg: &RunConfig) -> Result<i32, String> {
    let mesh = Arc::new(cfg.load_mesh()?);
    let timer = Timer { enabled: cfg.timings };
    let tol = &cfg.tolerances;
    let config = ProjectorConfig { quad_bump: cfg.quad_bump };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();
    group(&mut checks, timer, || {
        vec![match check_double_complex(&mesh, &cfg.family, DOUBLE_COMPLEX_SAMPLES, cfg.family.k + 1, &mut rng, tol) {
            Ok(r) => r,
            Err(e) => failure("double_complex", &e.to_string()),
        }]
    });
    let t = Instant::now();
    let built = CommutingProjector::build(mesh.clone(), cfg.family, config);
    let build_seconds = t.elapsed().as_secs_f64();
    match built {
        Ok(p) => {
            println!("projector assembled in {build_seconds:.3}s");
            group(&mut checks, timer, || vec![check_projection(&p, PROJECTION_SAMPLES, &mut rng, tol)]);
            group(&mut checks, timer, || {
                vec![check_commutation(&p, COMMUTATION_SAMPLES, &mut rng, tol)
                    .unwrap_or_else(|e| failure("commutation", &e.to_string()))]
            });
            group(&mut checks, timer, || vec![check_locality(&p, &mut rng)]);
        }
        Err(e) => group(&mut checks, timer, || vec![failure("projector", &e.to_string())]),
    }
    if cfg.refine > 0 {
        group(&mut checks, timer, || {
            vec![match boundedness_study(&mesh, cfg.family, cfg.refine, config) {
                Ok(s) => check_boundedness(&s, tol),
                Err(e) => failure("boundedness", &e.to_string()),
            }]
        });
    } else {
        checks.push(CheckRecord::skipped("boundedness", "no refinements requested"));
    }
    finish("project", cfg, &mesh, checks)
}
