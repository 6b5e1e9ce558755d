//! Executes one configured run and writes its artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use serrin_core::diagnostics::{self, max_point, DiagnosticsError, SerrinReport};
use serrin_core::experiments::{self, ExperimentError, NonexistenceReport, SweepOptions, SweepResult, SweepStatus};
use serrin_core::mesh::{self, MeshError};
use serrin_core::{fem, oracle, DomainSpec, FemError, Mesh, Shape};

use crate::config::{Command, RunConfig};
use crate::plot::{emit_plot, PlotOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

pub const SOLVE_CSV_HEADER: &str = "vertices,triangles,h_max,min_angle_deg,u_max,u_center,flux_integral,area";
pub const IDENTITY_CSV_HEADER: &str = "level,h_max,vertices,FI_lhs,FI_rhs,FI_gap,exact";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads for sweep members; `None` uses every available core.
    pub jobs: Option<usize>,
    /// Forces the plot on regardless of the config.
    pub plot: bool,
    /// Output root taking precedence over the config's `output_dir`.
    pub out_root: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub dir: PathBuf,
    pub artifacts: Vec<String>,
    pub warnings: Vec<String>,
    pub failure: Option<String>,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn failed(message: impl Into<String>) -> Self {
        Failure { code: EXIT_FAILED, message: message.into() }
    }
}

fn fem_code(e: &FemError) -> i32 {
    match e {
        FemError::BadConductivity(_) | FemError::BadConfig(_) => EXIT_INVALID,
        _ => EXIT_FAILED,
    }
}

fn mesh_code(e: &MeshError) -> i32 {
    match e {
        MeshError::BadTargetSize(_) | MeshError::Geometry(_) => EXIT_INVALID,
        _ => EXIT_FAILED,
    }
}

fn diagnostics_code(e: &DiagnosticsError) -> i32 {
    match e {
        DiagnosticsError::Fem(f) => fem_code(f),
        DiagnosticsError::Mesh(m) => mesh_code(m),
        DiagnosticsError::Geometry(_) | DiagnosticsError::NonZeroMean { .. } => EXIT_INVALID,
        _ => EXIT_FAILED,
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match &e {
            ExperimentError::InvalidInput(_)
            | ExperimentError::IndistinguishableFromBall { .. }
            | ExperimentError::Geometry(_) => EXIT_INVALID,
            ExperimentError::Fem(f) => fem_code(f),
            ExperimentError::Mesh(m) => mesh_code(m),
            ExperimentError::Diagnostics(d) => diagnostics_code(d),
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<DiagnosticsError> for Failure {
    fn from(e: DiagnosticsError) -> Self {
        Failure { code: diagnostics_code(&e), message: e.to_string() }
    }
}

impl From<FemError> for Failure {
    fn from(e: FemError) -> Self {
        Failure { code: fem_code(&e), message: e.to_string() }
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        Failure { code: mesh_code(&e), message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::failed(format!("i/o: {e}"))
    }
}

/// `out_root`, else the config's `output_dir`, else `outputs`.
pub fn output_dir(config: &RunConfig, out_root: Option<&Path>) -> PathBuf {
    let root = out_root.map(Path::to_path_buf).or_else(|| config.output_dir.clone()).unwrap_or_else(|| "outputs".into());
    root.join(config.output_name())
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<String>,
    warnings: Vec<String>,
}

impl Writer {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        std::fs::write(self.dir.join(name), contents)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

/// Runs `config`, writing artifacts and always a `manifest.json`.
pub fn run(config: &RunConfig, options: &RunOptions) -> RunOutcome {
    let started = Instant::now();
    let dir = output_dir(config, options.out_root.as_deref());
    let mut writer = Writer { dir: dir.clone(), artifacts: Vec::new(), warnings: Vec::new() };
    let plot = options.plot || config.plot;
    let result = match std::fs::create_dir_all(&dir) {
        Err(e) => Err(Failure::from(e)),
        Ok(()) => match config.validate() {
            Err(e) => Err(Failure { code: EXIT_INVALID, message: e.to_string() }),
            Ok(()) => match options.jobs {
                None => execute(config, plot, &mut writer),
                Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => pool.install(|| execute(config, plot, &mut writer)),
                    Err(e) => Err(Failure::failed(format!("thread pool: {e}"))),
                },
            },
        },
    };
    let (exit_code, failure) = match result {
        Ok(()) => (EXIT_OK, None),
        Err(f) => (f.code, Some(f.message)),
    };
    let manifest = json!({
        "tool": "serrin-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": config.command.name(),
        "config": config,
        "status": if exit_code == EXIT_OK { "ok" } else { "failed" },
        "exit_code": exit_code,
        "failure": failure,
        "warnings": writer.warnings,
        "artifacts": writer.artifacts,
        "jobs": options.jobs,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let (exit_code, failure) = match std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join("manifest.json"), text)) {
        Ok(()) => (exit_code, failure),
        Err(e) => (EXIT_FAILED, Some(failure.unwrap_or_else(|| format!("i/o: cannot write manifest: {e}")))),
    };
    RunOutcome { exit_code, dir, artifacts: writer.artifacts, warnings: writer.warnings, failure }
}

fn execute(config: &RunConfig, plot: bool, out: &mut Writer) -> Result<(), Failure> {
    let cfg = config.solver_config();
    let sweep_opts = SweepOptions { window: config.window.unwrap_or(4), solver: cfg };
    let domain = &config.domain;
    let h = config.target_h;
    match config.command {
        Command::Solve => {
            let mesh = refined_mesh(config)?;
            let sigma = config.sigma_c.unwrap_or(1.0);
            let u = fem::solve_two_phase(&mesh, sigma, &cfg)?;
            let flux = fem::normal_derivative(&mesh, &u, sigma)?;
            let center = u.value_at(&mesh, domain.shape.center()).unwrap_or(f64::NAN);
            let row = [
                mesh.num_vertices().to_string(),
                mesh.num_triangles().to_string(),
                format!("{:e}", mesh.h_max),
                format!("{:e}", mesh.min_angle_deg()),
                format!("{:e}", u.max()),
                format!("{center:e}"),
                format!("{:e}", flux.integral()),
                format!("{:e}", mesh.area()),
            ];
            out.write("report.csv", &format!("{SOLVE_CSV_HEADER}\n{}\n", row.join(",")))?;
            out.write("field.txt", &u.dump(&mesh))?;
        }
        Command::Diagnose => {
            let mesh = refined_mesh(config)?;
            let sigma = config.sigma_c.unwrap_or(1.0);
            let report = diagnostics::report_on_mesh(&mesh, domain, sigma, config.eta.as_ref(), &cfg)?;
            write_report(out, &report)?;
        }
        Command::VerifyIdentity => {
            let mut mesh = mesh::generate(domain, &config.inclusion, h)?;
            let exact = identity_value(domain);
            let mut csv = format!("{IDENTITY_CSV_HEADER}\n");
            for level in 0..=config.refinements.unwrap_or(1) {
                if level > 0 {
                    mesh = mesh::refine(&mesh);
                }
                let v = fem::solve_one_phase(&mesh, &cfg)?;
                let dv = fem::normal_derivative(&mesh, &v, 1.0)?;
                let z = max_point(&mesh, &v)?;
                let fi = diagnostics::fundamental_identity(&mesh, &v, &dv, z, domain.serrin_constant())?;
                csv.push_str(&format!(
                    "{level},{:e},{},{:e},{:e},{:e},{}\n",
                    mesh.h_max,
                    mesh.num_vertices(),
                    fi.lhs,
                    fi.rhs,
                    fi.relative_gap,
                    exact.map_or_else(String::new, |e| format!("{e:e}"))
                ));
            }
            out.write("report.csv", &csv)?;
        }
        Command::SweepSigma => {
            let ts = config.t_values.as_deref().unwrap_or_default();
            let sweep = experiments::sigma_sweep(domain, &config.inclusion, ts, h, &sweep_opts)?;
            write_sweep(out, &sweep, plot)?;
        }
        Command::SweepInclusion => {
            let radii = config.inclusion_radii.as_deref().unwrap_or_default();
            let center = config.inclusion_center.unwrap_or_else(|| domain.shape.center());
            let sigma = config.sigma_c.unwrap_or(1.0);
            let sweep = experiments::inclusion_sweep(domain, sigma, center, radii, h, &sweep_opts)?;
            write_sweep(out, &sweep, plot)?;
        }
        Command::SweepStability => {
            let family: Vec<(f64, DomainSpec)> =
                config.family.iter().flatten().map(|m| (m.parameter, m.domain.clone())).collect();
            let sweep = experiments::one_phase_stability_sweep(&family, h, &sweep_opts)?;
            write_sweep(out, &sweep, plot)?;
        }
        Command::FrechetCheck => {
            let eps = config.eps_values.as_deref().unwrap_or_default();
            let t0 = config.t0.unwrap_or(0.0);
            let sweep = experiments::frechet_check(domain, &config.inclusion, t0, eps, h, &sweep_opts)?;
            write_sweep(out, &sweep, plot)?;
        }
        Command::Nonexistence => {
            let report = experiments::nonexistence_threshold(domain, config.fitted_c2, config.fitted_c3, h, &cfg)?;
            write_nonexistence(out, &report)?;
        }
    }
    Ok(())
}

fn refined_mesh(config: &RunConfig) -> Result<Mesh, Failure> {
    let mut mesh = mesh::generate(&config.domain, &config.inclusion, config.target_h)?;
    for _ in 0..config.refinements.unwrap_or(0) {
        mesh = mesh::refine(&mesh);
    }
    Ok(mesh)
}

/// Closed-form identity value where one is known.
fn identity_value(domain: &DomainSpec) -> Option<f64> {
    match domain.shape {
        Shape::Disk { .. } => Some(0.0),
        Shape::Ellipse { a, b, .. } => oracle::ellipse_identity_value(a, b).ok(),
        Shape::Star { .. } => None,
    }
}

fn write_report(out: &mut Writer, report: &SerrinReport) -> Result<(), Failure> {
    out.write("report.csv", &format!("{}\n{}\n", SerrinReport::CSV_HEADER, report.csv_row()))?;
    let json = json!({
        "report": report,
        "bridge_holds": report.bridge_holds(),
    });
    out.write("report.json", &format!("{}\n", serde_json::to_string_pretty(&json).expect("report serializes")))
}

fn write_sweep(out: &mut Writer, sweep: &SweepResult, plot: bool) -> Result<(), Failure> {
    out.write("report.csv", &sweep.to_csv())?;
    let summary = serde_json::to_string_pretty(&sweep.summary()).expect("summary serializes");
    out.write("fit.json", &format!("{summary}\n"))?;
    if plot {
        match emit_plot(sweep, &out.dir.join("plot.svg"))? {
            PlotOutcome::Written => out.artifacts.push("plot.svg".into()),
            PlotOutcome::Skipped(reason) => out.warnings.push(format!("plot skipped: {reason}")),
        }
    }
    if let SweepStatus::Partial { .. } = sweep.status {
        return Err(Failure::failed(sweep.status.describe()));
    }
    Ok(())
}

fn write_nonexistence(out: &mut Writer, report: &NonexistenceReport) -> Result<(), Failure> {
    out.write("report.csv", &format!("{}\n{}\n", NonexistenceReport::CSV_HEADER, report.csv_row()))?;
    out.write("report.json", &format!("{}\n", serde_json::to_string_pretty(report).expect("report serializes")))
}
