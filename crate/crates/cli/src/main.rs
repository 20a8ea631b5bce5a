use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cbct::analysis::iterations_to_tolerance;
use cbct::config::GeometryConfig;
use cbct::io::{self, DType, SliceAxis};
use cbct::operator::default_workers;
use cbct::phantom::{generate_phantom, parse_ellipsoids, shepp_logan_3d};
use cbct::solvers::{self, write_history_csv};
use cbct::{CbctOperator, Error, Method, SolverConfig, SolverReport, Termination};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_BREAKDOWN: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "cbct", version, about = "Matrix-free cone-beam CT projection and iterative reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a 3D Shepp-Logan (or custom ellipsoid) phantom on the configured grid.
    Phantom {
        #[command(flatten)]
        common: Common,
        /// Output file
        #[arg(long)]
        out: PathBuf,
        /// Ellipsoid table: one `cx cy cz a b c phi theta psi intensity` per line.
        #[arg(long)]
        ellipsoids: Option<PathBuf>,
    },
    /// Forward-project a volume.
    Project {
        #[command(flatten)]
        common: Common,
        /// Volume file
        #[arg(long)]
        vol: PathBuf,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Backproject a projection stack.
    Backproject {
        #[command(flatten)]
        common: Common,
        /// Projection stack file
        #[arg(long)]
        prj: PathBuf,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a volume from projections.
    Reconstruct(ReconstructArgs),
    /// Run CGLS and PSIRT side by side and summarize their convergence.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Projection stack file
        #[arg(long)]
        prj: PathBuf,
        /// Iterations per method.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        iters: u64,
        /// Relative discrepancy used for the iterations-to-tolerance count.
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        /// Directory for the comparison outputs
        #[arg(long)]
        outdir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Geometry config file.
    config: PathBuf,
    /// Worker threads for projection and backprojection.
    #[arg(long)]
    workers: Option<usize>,
    /// Sample type for binary outputs.
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    dtype: Precision,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[command(flatten)]
    common: Common,
    /// Projection stack file
    #[arg(long)]
    prj: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Maximum number of iterations.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    iters: u64,
    /// Stop once the relative discrepancy drops to this value (0 runs all iterations).
    #[arg(long, default_value_t = 0.0)]
    err: f64,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    /// Initial volume.
    #[arg(long)]
    x0: Option<PathBuf>,
    /// Tikhonov weight.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Jacobi (diagonal) preconditioning.
    #[arg(long)]
    jacobi: bool,
    /// Jacobi diagonal floor, relative to the largest entry.
    #[arg(long)]
    jacobi_floor: Option<f64>,
    /// Clamp iterates to `lo,hi` (SIRT and PSIRT only).
    #[arg(long = "box", value_name = "LO,HI", value_parser = parse_box, allow_hyphen_values = true)]
    box_bounds: Option<(f64, f64)>,
    /// Relaxation factor (SIRT and PSIRT only).
    #[arg(long)]
    relax: Option<f64>,
    /// Recompute the discrepancy from scratch every k iterations.
    #[arg(long, default_value_t = 0)]
    true_every: usize,
    /// Convergence history output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Precision {
    F32,
    F64,
}

impl From<Precision> for DType {
    fn from(p: Precision) -> Self {
        match p {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Cgls,
    Lsqr,
    Sirt,
    Psirt,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cgls => Method::Cgls,
            MethodArg::Lsqr => Method::Lsqr,
            MethodArg::Sirt => Method::Sirt,
            MethodArg::Psirt => Method::Psirt,
        }
    }
}

fn parse_box(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

/// Command failure, tagged with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Format(_) | Error::GeometryMismatch(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("cannot write manifest: {e}"),
        }
    }
}

type CmdResult = Result<(), Failure>;

struct Setup {
    config_path: PathBuf,
    config: GeometryConfig,
    workers: usize,
    dtype: DType,
}

impl Setup {
    fn new(common: &Common) -> Result<Self, Failure> {
        let config = GeometryConfig::load(&common.config)?;
        Ok(Self {
            config_path: common.config.clone(),
            config,
            workers: common.workers.unwrap_or_else(default_workers).max(1),
            dtype: common.dtype.into(),
        })
    }

    fn operator(&self) -> Result<CbctOperator, Failure> {
        Ok(self.config.operator(self.workers)?)
    }

    /// Writes `<stem>.manifest.json` next to `output`.
    fn manifest(&self, command: &str, params: Value, output: &Path) -> CmdResult {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        self.manifest_at(command, params, &output.with_file_name(name))
    }

    fn manifest_at(&self, command: &str, params: Value, path: &Path) -> CmdResult {
        let manifest = json!({
            "command": command,
            "config_path": self.config_path,
            "config": self.config,
            "parameters": params,
            "seeds": [],
            "worker_count": self.workers,
            "version": concat!("cbct ", env!("CARGO_PKG_VERSION")),
        });
        let w = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer_pretty(w, &manifest)?;
        Ok(())
    }
}

fn cmd_phantom(common: &Common, out: &Path, ellipsoids: Option<&Path>) -> CmdResult {
    let setup = Setup::new(common)?;
    let table = match ellipsoids {
        Some(path) => parse_ellipsoids(&fs::read_to_string(path)?)?,
        None => shepp_logan_3d(),
    };
    let vol = generate_phantom(&table, &setup.config.volume_geometry()?)?;
    io::write_volume(out, &vol, setup.dtype)?;
    setup.manifest(
        "phantom",
        json!({ "out": out, "ellipsoids": ellipsoids, "ellipsoid_count": table.len(), "dtype": common.dtype }),
        out,
    )
}

fn cmd_project(common: &Common, vol: &Path, out: &Path) -> CmdResult {
    let setup = Setup::new(common)?;
    let op = setup.operator()?;
    let x = io::read_volume(vol, op.vol_geom())?;
    io::write_projections(out, &op.project(&x)?, setup.dtype)?;
    setup.manifest("project", json!({ "vol": vol, "out": out, "dtype": common.dtype }), out)
}

fn cmd_backproject(common: &Common, prj: &Path, out: &Path) -> CmdResult {
    let setup = Setup::new(common)?;
    let op = setup.operator()?;
    let b = io::read_projections(prj, op.trajectory())?;
    io::write_volume(out, &op.backproject(&b)?, setup.dtype)?;
    setup.manifest("backproject", json!({ "prj": prj, "out": out, "dtype": common.dtype }), out)
}

fn write_csv(path: &Path, report: &SolverReport) -> CmdResult {
    write_history_csv(BufWriter::new(fs::File::create(path)?), &report.history)?;
    Ok(())
}

fn termination_name(t: Termination) -> String {
    match t {
        Termination::ToleranceReached => "tolerance_reached".into(),
        Termination::IterationLimit => "iteration_limit".into(),
        Termination::Breakdown(b) => format!("breakdown_{b:?}").to_lowercase(),
    }
}

fn cmd_reconstruct(a: &ReconstructArgs) -> CmdResult {
    let setup = Setup::new(&a.common)?;
    let op = setup.operator()?;
    let b = io::read_projections(&a.prj, op.trajectory())?;
    let method: Method = a.method.into();
    let mut cfg = SolverConfig::new(method, a.iters as usize);
    cfg.rel_discrepancy_tol = a.err;
    cfg.tikhonov_lambda = a.lambda;
    cfg.jacobi_precondition = a.jacobi;
    if let Some(f) = a.jacobi_floor {
        cfg.jacobi_floor = f;
    }
    cfg.box_bounds = a.box_bounds;
    if let Some(r) = a.relax {
        cfg.relaxation = r;
    }
    cfg.true_discrepancy_every = a.true_every;
    // Validate before reading the initial volume so flag errors win.
    cfg.validate()?;
    if let Some(path) = &a.x0 {
        cfg.initial_x0 = Some(io::read_volume(path, op.vol_geom())?);
    }

    let report = solvers::reconstruct(&op, &b, &cfg)?;
    io::write_volume(&a.out, &report.final_x, setup.dtype)?;
    if let Some(csv) = &a.csv {
        write_csv(csv, &report)?;
    }
    setup.manifest(
        "reconstruct",
        json!({
            "prj": a.prj,
            "out": a.out,
            "csv": a.csv,
            "x0": a.x0,
            "method": method.name(),
            "max_iterations": cfg.max_iterations,
            "rel_discrepancy_tol": cfg.rel_discrepancy_tol,
            "tikhonov_lambda": cfg.tikhonov_lambda,
            "jacobi_precondition": cfg.jacobi_precondition,
            "jacobi_floor": cfg.jacobi_floor,
            "box_bounds": cfg.box_bounds,
            "relaxation": cfg.relaxation,
            "true_discrepancy_every": cfg.true_discrepancy_every,
            "dtype": a.common.dtype,
            "iterations": report.iterations,
            "final_rel_discrepancy": report.final_rel_discrepancy(),
            "termination": termination_name(report.termination),
        }),
        &a.out,
    )?;
    println!(
        "{}: {} iterations, relative discrepancy {:e} ({})",
        method.name(),
        report.iterations,
        report.final_rel_discrepancy(),
        termination_name(report.termination)
    );
    match report.termination {
        Termination::Breakdown(why) => Err(Failure {
            code: EXIT_BREAKDOWN,
            message: format!("solver breakdown: {why:?}"),
        }),
        _ => Ok(()),
    }
}

fn fmt_count(n: Option<usize>) -> String {
    n.map_or_else(|| "not_reached".into(), |n| n.to_string())
}

fn cmd_compare(common: &Common, prj: &Path, iters: usize, tol: f64, outdir: &Path) -> CmdResult {
    if !(tol > 0.0 && tol <= 1.0) {
        return Err(Error::InvalidConfig(format!("--tol must lie in (0, 1], got {tol}")).into());
    }
    let setup = Setup::new(common)?;
    let op = setup.operator()?;
    let b = io::read_projections(prj, op.trajectory())?;
    fs::create_dir_all(outdir)?;

    let mut summary = vec![
        format!("iterations = {iters}"),
        format!("tolerance = {tol}"),
        format!("worker_count = {}", setup.workers),
    ];
    let mut counts = Vec::new();
    for method in [Method::Cgls, Method::Psirt] {
        let name = method.name();
        let report = solvers::reconstruct(&op, &b, &SolverConfig::new(method, iters))?;
        write_csv(&outdir.join(format!("{name}.csv")), &report)?;
        io::write_volume(outdir.join(format!("{name}.vol")), &report.final_x, setup.dtype)?;
        let center = op.vol_geom().nz / 2;
        io::export_slice_pgm(
            &report.final_x,
            SliceAxis::Z,
            center,
            (0.0, 1.0),
            outdir.join(format!("{name}_z{center}.pgm")),
        )?;
        let to_tol = iterations_to_tolerance(&report.history, tol);
        counts.push(to_tol);
        summary.push(format!("{name}_rel_discrepancy = {:e}", report.final_rel_discrepancy()));
        summary.push(format!("{name}_iterations_to_tol = {}", fmt_count(to_tol)));
        summary.push(format!("{name}_termination = {}", termination_name(report.termination)));
        summary.push(format!("{name}_seconds = {:.3}", report.history.last().map_or(0.0, |r| r.wall_seconds)));
    }
    let ratio = match (counts[0], counts[1]) {
        (Some(c), Some(p)) if c > 0 => format!("{:.3}", p as f64 / c as f64),
        _ => "undefined".into(),
    };
    summary.push(format!("iterations_ratio_psirt_over_cgls = {ratio}"));
    let text = summary.join("\n") + "\n";
    fs::write(outdir.join("summary.txt"), &text)?;
    print!("{text}");
    setup.manifest_at(
        "compare",
        json!({ "prj": prj, "iters": iters, "tol": tol, "outdir": outdir, "dtype": common.dtype }),
        &outdir.join("manifest.json"),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Phantom { common, out, ellipsoids } => cmd_phantom(common, out, ellipsoids.as_deref()),
        Command::Project { common, vol, out } => cmd_project(common, vol, out),
        Command::Backproject { common, prj, out } => cmd_backproject(common, prj, out),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Compare {
            common,
            prj,
            iters,
            tol,
            outdir,
        } => cmd_compare(common, prj, *iters as usize, *tol, outdir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
