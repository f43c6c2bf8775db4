//! `surfreg` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use surfreg_core::arap::register_arap;
use surfreg_core::rigid::register_rigid;
use surfreg_core::{synth, Error as CoreError, Mesh};
use thiserror::Error;

use crate::config::{ConfigFile, GroundTruth, Mode, Report, RunConfig, TransformJson};
use crate::log::write_iteration_log;
use crate::obj::{parse_obj, write_obj, ObjError};

#[derive(Debug, Parser)]
#[command(name = "surfreg", version, about = "Rigid and as-rigid-as-possible surface registration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rigid ICP (point-to-point, point-to-plane when --w4 > 0).
    Rigid(RunArgs),
    /// Non-rigid as-rigid-as-possible registration; the source needs faces.
    Arap(ArapArgs),
    /// Writes a synthetic scenario: source.obj, target.obj, ground_truth.json.
    Synth(SynthArgs),
    /// Prints vertex/face counts and the bounding box of an OBJ file.
    Info { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Registered source mesh.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit weight [default: 1]
    #[arg(long)]
    pub w1: Option<f64>,
    /// Global rigid weight [default: 1]
    #[arg(long)]
    pub w2: Option<f64>,
    /// Point-to-plane weight [default: 0]
    #[arg(long)]
    pub w4: Option<f64>,
    /// Rotation regularizer [default: 1e-6]
    #[arg(long)]
    pub tikhonov: Option<f64>,
    /// Iteration cap [default: 50 rigid, 100 arap]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Stop tolerance [default: 1e-6]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Per-iteration CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// JSON run report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Flat JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Exit with status 3 when the iteration cap is hit.
    #[arg(long)]
    pub require_convergence: bool,
}

#[derive(Debug, Args)]
pub struct ArapArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// ARAP stiffness [default: 1]
    #[arg(long)]
    pub w3: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    SphereRigid,
    Bend,
    Incline,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Io = 2,
    Numerical = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Obj { path: PathBuf, source: ObjError },
    #[error("{}: {source}", path.display())]
    Config { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("not converged after {0} iterations")]
    NotConverged(usize),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Usage(_) => ExitStatus::Usage,
            CliError::Io { .. } | CliError::Obj { .. } | CliError::Config { .. } => ExitStatus::Io,
            CliError::NotConverged(_) => ExitStatus::Numerical,
            CliError::Core(e) => match e {
                CoreError::InvalidConfig(_) => ExitStatus::Usage,
                CoreError::EmptyTarget
                | CoreError::NonFinite { .. }
                | CoreError::InvalidMesh(_)
                | CoreError::LengthMismatch { .. } => ExitStatus::Io,
                CoreError::DegenerateNormal { .. }
                | CoreError::MissingNormals
                | CoreError::MissingGraph
                | CoreError::Underdetermined { .. }
                | CoreError::BlockOutOfRange { .. }
                | CoreError::NotSymmetric { .. }
                | CoreError::SingularSystem(_)
                | CoreError::FoldingBend(_) => ExitStatus::Numerical,
            },
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn read_mesh(path: &Path) -> Result<Mesh, CliError> {
    let mesh = parse_obj(&read(path)?).map_err(|source| CliError::Obj { path: path.into(), source })?;
    Ok(mesh)
}

/// Writes all files or none: on a failed write the files already written are
/// removed again.
fn write_all(files: &[(PathBuf, String)]) -> Result<(), CliError> {
    for (k, (path, text)) in files.iter().enumerate() {
        if let Err(source) = fs::write(path, text) {
            for (done, _) in &files[..k] {
                let _ = fs::remove_file(done);
            }
            return Err(CliError::Io { path: path.clone(), source });
        }
    }
    Ok(())
}

fn resolve(args: &RunArgs, w3: Option<f64>, mode: Mode) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => ConfigFile::from_json(&read(path)?).map_err(|source| CliError::Config { path: path.clone(), source })?,
        None => ConfigFile::default(),
    };
    if let Some(m) = file.mode {
        if m != mode {
            return Err(CliError::Usage(format!("config mode {m:?} conflicts with subcommand {mode:?}").to_lowercase()));
        }
    }
    let flags = ConfigFile {
        mode: Some(mode),
        w1: args.w1,
        w2: args.w2,
        w3,
        w4: args.w4,
        tikhonov: args.tikhonov,
        max_iters: args.iters,
        stop_tol: args.tol,
        seed: None,
        source: args.source.clone(),
        target: args.target.clone(),
        output: args.out.clone(),
        log: args.log.clone(),
    };
    RunConfig::resolve(file.overridden_by(flags), mode).map_err(|flag| CliError::Usage(format!("missing required {flag}")))
}

fn register(args: &RunArgs, w3: Option<f64>, mode: Mode) -> Result<(), CliError> {
    let cfg = resolve(args, w3, mode)?;
    let source = read_mesh(&cfg.source)?;
    let target = read_mesh(&cfg.target)?;
    let (result, out_mesh) = match mode {
        Mode::Rigid => {
            let rc = cfg.rigid();
            rc.validate()?;
            let res = register_rigid(&source, &target, &rc)?;
            let mesh = source.transformed(&res.transform);
            (res, mesh)
        }
        Mode::Arap => {
            let ac = cfg.arap();
            ac.validate()?;
            if source.faces.is_empty() {
                return Err(CliError::Usage("arap mode requires a source mesh with faces".into()));
            }
            let res = register_arap(&source, &target, &ac)?;
            let mesh = source.with_vertices(res.final_points.clone());
            (res, mesh)
        }
    };
    if args.require_convergence && !result.converged {
        return Err(CliError::NotConverged(result.iterations()));
    }
    let mut files = vec![(cfg.output.clone(), write_obj(&out_mesh))];
    if let Some(log) = &cfg.log {
        files.push((log.clone(), write_iteration_log(&result.reports)));
    }
    if let Some(report) = &args.report {
        files.push((report.clone(), Report::new(&cfg, &result).to_json()));
    }
    write_all(&files)
}

fn synthesize(args: &SynthArgs) -> Result<(), CliError> {
    let (name, scenario) = match args.scenario {
        Scenario::SphereRigid => ("sphere-rigid", synth::sphere_rigid_scenario(args.seed)),
        Scenario::Bend => ("bend", synth::bend_scenario(synth::BEND_CURVATURE)?),
        Scenario::Incline => ("incline", synth::incline_scenario(args.seed)),
    };
    fs::create_dir_all(&args.out_dir).map_err(|source| CliError::Io { path: args.out_dir.clone(), source })?;
    let gt = GroundTruth {
        scenario: name.into(),
        seed: args.seed,
        ground_truth: scenario.ground_truth.as_ref().map(TransformJson::from),
    };
    let mut gt_json = serde_json::to_string_pretty(&gt).expect("ground truth serializes");
    gt_json.push('\n');
    write_all(&[
        (args.out_dir.join("source.obj"), write_obj(&scenario.source)),
        (args.out_dir.join("target.obj"), write_obj(&scenario.target)),
        (args.out_dir.join("ground_truth.json"), gt_json),
    ])
}

fn info(path: &Path, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let mesh = read_mesh(path)?;
    let stdout_err = |source| CliError::Io { path: "<stdout>".into(), source };
    writeln!(out, "vertices {}", mesh.len()).map_err(stdout_err)?;
    writeln!(out, "faces {}", mesh.faces.len()).map_err(stdout_err)?;
    writeln!(out, "normals {}", if mesh.normals.is_some() { "yes" } else { "no" }).map_err(stdout_err)?;
    if let Some((lo, hi)) = mesh.bounding_box() {
        writeln!(out, "bbox_min {} {} {}", lo.x, lo.y, lo.z).map_err(stdout_err)?;
        writeln!(out, "bbox_max {} {} {}", hi.x, hi.y, hi.z).map_err(stdout_err)?;
        writeln!(out, "bbox_diagonal {}", mesh.bbox_diagonal()).map_err(stdout_err)?;
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Rigid(args) => register(args, None, Mode::Rigid),
        Command::Arap(args) => register(&args.run, args.w3, Mode::Arap),
        Command::Synth(args) => synthesize(args),
        Command::Info { file } => info(file, &mut std::io::stdout().lock()),
    }
}

/// Parses `argv`, runs, reports errors on stderr and returns the exit status.
pub fn run<I, T>(argv: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::Usage } else { ExitStatus::Success };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitStatus::Success,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "surfreg: {e}");
            if let CliError::Usage(_) = e {
                let mut cmd = <Cli as clap::CommandFactory>::command();
                let name = match &cli.command {
                    Command::Rigid(_) => "rigid",
                    Command::Arap(_) => "arap",
                    Command::Synth(_) => "synth",
                    Command::Info { .. } => "info",
                };
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    let _ = writeln!(std::io::stderr(), "{}", sub.render_usage());
                }
            }
            e.status()
        }
    }
}
