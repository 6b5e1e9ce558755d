//! Parameter sweeps that measure the stability scalings, with log-log fits.
//!
//! Members of a sweep run in parallel on the ambient rayon pool and are
//! merged in input order, so results do not depend on the thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{deviation_norms, max_point, DiagnosticsError};
use crate::fem::{self, BoundaryTrace, FemError, Field, FieldLabel, SolverConfig};
use crate::geometry::{self, DomainSpec, GeometryError, InclusionSpec, Point, Shape};
use crate::mesh::{self, Mesh, MeshError};

/// Stability exponent in two dimensions.
pub const TAU_2: f64 = 1.0;

/// Metrics below this multiple of the oracle fixture's error are left out
/// of fits.
pub const FLOOR_FACTOR: f64 = 10.0;

/// Stability exponent `τ_N` by dimension. For `N = 3` every exponent below
/// one is admissible and the limit is returned.
pub fn stability_exponent(dim: u32) -> Option<f64> {
    match dim {
        0 | 1 => None,
        2 | 3 => Some(1.0),
        n => Some(2.0 / (n as f64 - 1.0)),
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    InvalidInput(String),
    #[error("gap {gap:.3e} is at or below the resolution floor {floor:.3e}: indistinguishable from a ball at this resolution")]
    IndistinguishableFromBall { gap: f64, floor: f64 },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum FitError {
    #[error("fit window must hold at least 3 points, got {0}")]
    BadWindow(usize),
    #[error("need at least 3 positive points, have {0}")]
    TooFewPoints(usize),
    #[error("abscissae are not strictly monotone at point {0}")]
    NotMonotone(usize),
}

/// Least-squares line through `(log x, log y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Indices of the points inside the window.
    pub used: Vec<usize>,
    /// Indices dropped for a nonpositive or non-finite coordinate.
    pub excluded: Vec<usize>,
}

impl Fit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

/// Fits the trailing `window` positive points.
pub fn slope_fit(points: &[(f64, f64)], window: usize) -> Result<Fit, FitError> {
    if window < 3 {
        return Err(FitError::BadWindow(window));
    }
    let positive = |&(x, y): &(f64, f64)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite();
    let (usable, excluded): (Vec<usize>, Vec<usize>) = (0..points.len()).partition(|&i| positive(&points[i]));
    if usable.len() < 3 {
        return Err(FitError::TooFewPoints(usable.len()));
    }
    let increasing = points[usable[1]].0 > points[usable[0]].0;
    for w in usable.windows(2) {
        let (a, b) = (points[w[0]].0, points[w[1]].0);
        if (increasing && b <= a) || (!increasing && b >= a) {
            return Err(FitError::NotMonotone(w[1]));
        }
    }
    let used = usable[usable.len().saturating_sub(window)..].to_vec();
    let logs: Vec<(f64, f64)> = used.iter().map(|&i| (points[i].0.ln(), points[i].1.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else if ss_res == 0.0 { 1.0 } else { 0.0 };
    Ok(Fit { slope, intercept, r_squared, used, excluded })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    OnePhaseStability,
    Sigma,
    Frechet,
    Inclusion,
}

impl SweepKind {
    pub fn parameter(self) -> &'static str {
        match self {
            SweepKind::OnePhaseStability => "e",
            SweepKind::Sigma => "t",
            SweepKind::Frechet => "eps",
            SweepKind::Inclusion => "r",
        }
    }

    /// Metric columns, in CSV order.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            SweepKind::OnePhaseStability => {
                &["dev_L2", "dev_Linf", "gap", "rho_i", "rho_e", "ratio", "perimeter", "dev_floor", "gap_floor", "h_max"]
            }
            SweepKind::Sigma => &[
                "sigma_c",
                "abs_t",
                "diff_L2",
                "diff_Linf",
                "dev_L2",
                "dev_Linf",
                "dev0_Linf",
                "ratio",
                "perimeter",
                "floor",
            ],
            SweepKind::Frechet => &["error_L2", "floor"],
            SweepKind::Inclusion => &["area", "grad_w_Linf", "dn_w_Linf", "dt_w_Linf", "margin", "floor", "h_max"],
        }
    }

    /// Columns fitted as `(x, y)`.
    pub fn axes(self) -> (&'static str, &'static str) {
        match self {
            SweepKind::OnePhaseStability => ("dev_Linf", "gap"),
            SweepKind::Sigma => ("abs_t", "diff_Linf"),
            SweepKind::Frechet => ("eps", "error_L2"),
            SweepKind::Inclusion => ("area", "grad_w_Linf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SweepStatus {
    Fitted,
    /// Every member sits at the resolution floor.
    ExactCase,
    /// The configuration is an exact solution pair for every parameter.
    ExactFamily,
    Unfitted { reason: String },
    /// A member failed; rows before it are kept and nothing is fitted.
    Partial { parameter: f64, reason: String },
}

impl SweepStatus {
    pub fn describe(&self) -> String {
        match self {
            SweepStatus::Fitted => "fitted".into(),
            SweepStatus::ExactCase => "exact case".into(),
            SweepStatus::ExactFamily => "degenerate: exact solution family".into(),
            SweepStatus::Unfitted { reason } => format!("unfitted: {reason}"),
            SweepStatus::Partial { parameter, reason } => format!("partial: member {parameter} failed: {reason}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    /// One value per [`SweepKind::columns`] entry.
    pub values: Vec<f64>,
    pub in_fit: bool,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    pub window: usize,
    pub fit: Option<Fit>,
    /// Fitted constants and reported reference values.
    pub constants: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
    /// Largest edge over all meshes of the sweep.
    pub h_max: f64,
    pub status: SweepStatus,
}

/// The JSON record written next to a sweep's CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub kind: SweepKind,
    pub status: String,
    pub x: String,
    pub y: String,
    pub window: usize,
    pub points_in_fit: usize,
    pub fit: Option<Fit>,
    pub constants: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
    pub h_max: f64,
}

impl SweepResult {
    fn new(kind: SweepKind, window: usize) -> Self {
        SweepResult {
            kind,
            rows: Vec::new(),
            window,
            fit: None,
            constants: BTreeMap::new(),
            checks: BTreeMap::new(),
            h_max: 0.0,
            status: SweepStatus::Fitted,
        }
    }

    /// Value of a named column (or the parameter) in row `i`.
    pub fn value(&self, i: usize, name: &str) -> Option<f64> {
        if name == self.kind.parameter() {
            return Some(self.rows[i].parameter);
        }
        let k = self.kind.columns().iter().position(|c| *c == name)?;
        Some(self.rows[i].values[k])
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        (0..self.rows.len()).map(|i| self.value(i, name)).collect()
    }

    /// `(x, y)` for every row, in row order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let (x, y) = self.kind.axes();
        (0..self.rows.len()).map(|i| (self.value(i, x).unwrap(), self.value(i, y).unwrap())).collect()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec![self.kind.parameter()];
        cols.extend_from_slice(self.kind.columns());
        cols.push("in_fit");
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for row in &self.rows {
            let mut cells = vec![format!("{:e}", row.parameter)];
            cells.extend(row.values.iter().map(|v| format!("{v:e}")));
            cells.push(u8::from(row.in_fit).to_string());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> FitSummary {
        let (x, y) = self.kind.axes();
        FitSummary {
            kind: self.kind,
            status: self.status.describe(),
            x: x.into(),
            y: y.into(),
            window: self.window,
            points_in_fit: self.rows.iter().filter(|r| r.in_fit).count(),
            fit: self.fit.clone(),
            constants: self.constants.clone(),
            checks: self.checks.clone(),
            h_max: self.h_max,
        }
    }

    /// Fits the rows still marked `in_fit`; rows outside the window are
    /// unmarked. With no usable rows the status becomes `exact`.
    fn finish(&mut self, exact: SweepStatus) {
        let candidates: Vec<usize> = (0..self.rows.len()).filter(|&i| self.rows[i].in_fit).collect();
        if candidates.is_empty() {
            self.status = exact;
            return;
        }
        let all = self.points();
        let pts: Vec<(f64, f64)> = candidates.iter().map(|&i| all[i]).collect();
        match slope_fit(&pts, self.window) {
            Ok(mut fit) => {
                fit.used = fit.used.iter().map(|&k| candidates[k]).collect();
                fit.excluded = fit.excluded.iter().map(|&k| candidates[k]).collect();
                for &i in &candidates {
                    if !fit.used.contains(&i) {
                        self.rows[i].in_fit = false;
                        self.rows[i].flags.push("outside fit window".into());
                    }
                }
                self.fit = Some(fit);
                self.status = SweepStatus::Fitted;
            }
            Err(e) => {
                for &i in &candidates {
                    self.rows[i].in_fit = false;
                }
                self.status = SweepStatus::Unfitted { reason: e.to_string() };
            }
        }
    }

    fn push(&mut self, parameter: f64, values: Vec<f64>, in_fit: bool, flags: Vec<String>) {
        debug_assert_eq!(values.len(), self.kind.columns().len());
        self.rows.push(SweepRow { parameter, values, in_fit, flags });
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    /// Number of trailing (smallest-parameter) points fitted.
    pub window: usize,
    pub solver: SolverConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { window: 4, solver: SolverConfig::default() }
    }
}

impl SweepOptions {
    fn validate(&self) -> Result<(), ExperimentError> {
        if self.window < 3 {
            return Err(ExperimentError::InvalidInput(format!("fit window must be at least 3, got {}", self.window)));
        }
        self.solver.validate()?;
        Ok(())
    }
}

fn strictly_monotone(values: &[f64], what: &str) -> Result<(), ExperimentError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ExperimentError::InvalidInput(format!("{what}: values must be finite")));
    }
    let up = values.windows(2).all(|w| w[1] > w[0]);
    let down = values.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(ExperimentError::InvalidInput(format!("{what}: values must be strictly monotone")));
    }
    Ok(())
}

/// Runs `job` on every input in parallel and keeps the results up to the
/// first failure.
fn run_members<I: Sync, T: Send>(
    inputs: &[I],
    job: impl Fn(&I) -> Result<T, ExperimentError> + Sync,
) -> (Vec<T>, Option<(usize, ExperimentError)>) {
    let results: Vec<Result<T, ExperimentError>> = inputs.par_iter().map(&job).collect();
    let mut done = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => done.push(t),
            Err(e) => return (done, Some((i, e))),
        }
    }
    (done, None)
}

fn weighted_l2(trace: &BoundaryTrace) -> f64 {
    trace.values.iter().zip(&trace.weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
}

fn bridge_holds(l2: f64, linf: f64, perimeter: f64) -> bool {
    l2 <= perimeter.sqrt() * linf * (1.0 + 1e-12)
}

/// Concentric disks with the areas of `domain` and `inclusion`, centred at
/// the origin.
fn concentric_fixture(domain: &DomainSpec, inclusion_area: f64) -> (DomainSpec, InclusionSpec) {
    let outer = (domain.area() / std::f64::consts::PI).sqrt();
    let inner = (inclusion_area / std::f64::consts::PI).sqrt();
    let fixture = DomainSpec { shape: Shape::disk(outer), boundary_samples: domain.boundary_samples };
    let incl = if inclusion_area > 0.0 { InclusionSpec::disk(Point::ORIGIN, inner) } else { InclusionSpec::None };
    (fixture, incl)
}

fn is_concentric(domain: &DomainSpec, inclusion: &InclusionSpec) -> bool {
    domain.is_disk()
        && match inclusion {
            InclusionSpec::Disk { center, .. } => center.dist(domain.shape.center()) < 1e-12,
            _ => false,
        }
}

struct OnePhaseMeasure {
    l2: f64,
    linf: f64,
    rho_i: f64,
    rho_e: f64,
    perimeter: f64,
    h_max: f64,
}

fn one_phase_member(domain: &DomainSpec, target_h: f64, cfg: &SolverConfig) -> Result<OnePhaseMeasure, ExperimentError> {
    let mesh = mesh::generate(domain, &InclusionSpec::None, target_h)?;
    let v = fem::solve_one_phase(&mesh, cfg)?;
    let dv = fem::normal_derivative(&mesh, &v, 1.0)?;
    let dev = deviation_norms(&dv, domain.serrin_constant(), None)?;
    let z = max_point(&mesh, &v)?;
    let (rho_i, rho_e) = geometry::rho_bounds(domain, z)?;
    Ok(OnePhaseMeasure { l2: dev.l2, linf: dev.linf, rho_i, rho_e, perimeter: dv.total_weight(), h_max: mesh.h_max })
}

/// Gap `ρ_e - ρ_i` against the deviation of `∂ₙv` from `c` over a family of
/// domains tending to a disk. `family` pairs each domain with its parameter.
pub fn one_phase_stability_sweep(
    family: &[(f64, DomainSpec)],
    target_h: f64,
    opts: &SweepOptions,
) -> Result<SweepResult, ExperimentError> {
    opts.validate()?;
    if family.is_empty() {
        return Err(ExperimentError::InvalidInput("family: at least one domain required".into()));
    }
    let params: Vec<f64> = family.iter().map(|m| m.0).collect();
    strictly_monotone(&params, "family parameters")?;
    for (_, d) in family {
        d.validate()?;
    }
    let (fixture, _) = concentric_fixture(&family[0].1, 0.0);
    let mut jobs: Vec<&DomainSpec> = family.iter().map(|m| &m.1).collect();
    jobs.push(&fixture);
    let (measures, failure) = run_members(&jobs, |d| one_phase_member(d, target_h, &opts.solver));

    let mut out = SweepResult::new(SweepKind::OnePhaseStability, opts.window);
    out.constants.insert("tau".into(), TAU_2);
    let floor = match (&failure, measures.last()) {
        (None, Some(f)) => f,
        (Some((i, e)), _) => {
            let reason = if *i == family.len() { format!("oracle fixture: {e}") } else { e.to_string() };
            let parameter = params.get(*i).copied().unwrap_or(f64::NAN);
            for (m, &p) in measures.iter().zip(&params) {
                out.push(p, one_phase_values(m, 0.0, 0.0), false, vec![]);
                out.h_max = out.h_max.max(m.h_max);
            }
            out.status = SweepStatus::Partial { parameter, reason };
            return Ok(out);
        }
        (None, None) => unreachable!(),
    };
    let (dev_floor, gap_floor) = (floor.linf, floor.rho_e - floor.rho_i);
    let mut bridge = true;
    for (m, &p) in measures[..family.len()].iter().zip(&params) {
        let gap = m.rho_e - m.rho_i;
        let mut flags = Vec::new();
        let mut in_fit = true;
        if !(m.linf > FLOOR_FACTOR * dev_floor) {
            flags.push("deviation at resolution floor".into());
            in_fit = false;
        }
        if !(gap > FLOOR_FACTOR * gap_floor) {
            flags.push("gap at resolution floor".into());
            in_fit = false;
        }
        bridge &= bridge_holds(m.l2, m.linf, m.perimeter);
        out.push(p, one_phase_values(m, dev_floor, gap_floor), in_fit, flags);
        out.h_max = out.h_max.max(m.h_max);
    }
    out.checks.insert("bridge".into(), bridge);

    let ratios: Vec<f64> = out.column("ratio").unwrap();
    let active: Vec<f64> = ratios.iter().zip(&out.rows).filter(|(_, r)| r.in_fit).map(|(q, _)| *q).collect();
    if let (Some(&first), Some(&last)) = (active.first(), active.last()) {
        let largest_param_first = params[0] > params[params.len() - 1];
        let (at_large, at_small) = if largest_param_first { (first, last) } else { (last, first) };
        out.constants.insert("ratio_largest_parameter".into(), at_large);
        out.constants.insert("ratio_smallest_parameter".into(), at_small);
        out.constants.insert("C1".into(), active.iter().fold(0.0f64, |m, &r| m.max(r)));
        out.checks.insert("ratio_bounded".into(), at_small <= 2.0 * at_large);
    }
    out.finish(SweepStatus::ExactCase);
    Ok(out)
}

fn one_phase_values(m: &OnePhaseMeasure, dev_floor: f64, gap_floor: f64) -> Vec<f64> {
    let gap = m.rho_e - m.rho_i;
    let ratio = if m.linf > 0.0 { gap / m.linf } else { 0.0 };
    vec![m.l2, m.linf, gap, m.rho_i, m.rho_e, ratio, m.perimeter, dev_floor, gap_floor, m.h_max]
}

fn check_t(t: f64) -> Result<(), ExperimentError> {
    if !(t > -1.0 && t.is_finite()) {
        return Err(ExperimentError::InvalidInput(format!("t = {t}: sigma_c = 1 + t must stay positive")));
    }
    Ok(())
}

/// Two-phase flux at `σ_c = 1 + t` for every `t`, plus the one at `t = 0`.
fn flux_family(mesh: &Mesh, t_values: &[f64], cfg: &SolverConfig) -> Result<(BoundaryTrace, Vec<BoundaryTrace>), ExperimentError> {
    let base = fem::normal_derivative(mesh, &fem::solve_two_phase(mesh, 1.0, cfg)?, 1.0)?;
    let (traces, failure) = run_members(t_values, |&t| {
        let u = fem::solve_two_phase(mesh, 1.0 + t, cfg)?;
        Ok(fem::normal_derivative(mesh, &u, 1.0 + t)?)
    });
    match failure {
        Some((_, e)) => Err(e),
        None => Ok((base, traces)),
    }
}

/// `‖∂ₙu(t) - ∂ₙu(0)‖` and `‖∂ₙu(t) - c‖` on one shared mesh as `t → 0`.
pub fn sigma_sweep(
    domain: &DomainSpec,
    inclusion: &InclusionSpec,
    t_values: &[f64],
    target_h: f64,
    opts: &SweepOptions,
) -> Result<SweepResult, ExperimentError> {
    opts.validate()?;
    for &t in t_values {
        check_t(t)?;
        if t == 0.0 {
            return Err(ExperimentError::InvalidInput("t_values: t = 0 is the reference, not a sweep member".into()));
        }
    }
    strictly_monotone(&t_values.iter().map(|t| t.abs()).collect::<Vec<_>>(), "t_values")?;
    let mut out = SweepResult::new(SweepKind::Sigma, opts.window);
    let mesh = mesh::generate(domain, inclusion, target_h)?;
    out.h_max = mesh.h_max;
    let c = domain.serrin_constant();
    let concentric = is_concentric(domain, inclusion);

    let (base, traces) = match flux_family(&mesh, t_values, &opts.solver) {
        Ok(r) => r,
        Err(e) => {
            out.status = SweepStatus::Partial { parameter: t_values.first().copied().unwrap_or(f64::NAN), reason: e.to_string() };
            return Ok(out);
        }
    };
    let floors: Vec<f64> = if concentric || matches!(inclusion, InclusionSpec::None) {
        vec![0.0; t_values.len()]
    } else {
        let (fd, fi) = concentric_fixture(domain, inclusion.area());
        let fmesh = mesh::generate(&fd, &fi, target_h)?;
        let (fbase, ftraces) = flux_family(&fmesh, t_values, &opts.solver)?;
        ftraces.iter().map(|t| t.difference(&fbase).max_abs()).collect()
    };
    let dev0 = deviation_norms(&base, c, None)?;
    let perimeter = base.total_weight();
    let (mut triangle, mut bridge) = (true, true);
    let mut c7 = 0.0f64;
    for ((&t, trace), &floor) in t_values.iter().zip(&traces).zip(&floors) {
        let diff = trace.difference(&base);
        let (diff_l2, diff_linf) = (weighted_l2(&diff), diff.max_abs());
        let dev = deviation_norms(trace, c, None)?;
        triangle &= dev.linf <= (diff_linf + dev0.linf) * (1.0 + 1e-12);
        bridge &= bridge_holds(dev.l2, dev.linf, perimeter) && bridge_holds(diff_l2, diff_linf, perimeter);
        let ratio = diff_linf / t.abs();
        c7 = c7.max(ratio);
        let mut flags = Vec::new();
        let in_fit = !concentric && diff_linf > FLOOR_FACTOR * floor;
        if !in_fit {
            flags.push("difference at resolution floor".into());
        }
        let values = vec![1.0 + t, t.abs(), diff_l2, diff_linf, dev.l2, dev.linf, dev0.linf, ratio, perimeter, floor];
        out.push(t, values, in_fit, flags);
    }
    out.checks.insert("triangle_inequality".into(), triangle);
    out.checks.insert("bridge".into(), bridge);
    out.constants.insert("C7".into(), c7);
    out.constants.insert("dev0_Linf".into(), dev0.linf);
    out.constants.insert("tau".into(), TAU_2);
    out.finish(if concentric { SweepStatus::ExactFamily } else { SweepStatus::ExactCase });
    Ok(out)
}

/// Difference quotients `(u(t₀+ε) - u(t₀))/ε` against the linearized
/// solution `u'(t₀)`, in the mesh `L²` norm.
pub fn frechet_check(
    domain: &DomainSpec,
    inclusion: &InclusionSpec,
    t0: f64,
    eps_values: &[f64],
    target_h: f64,
    opts: &SweepOptions,
) -> Result<SweepResult, ExperimentError> {
    opts.validate()?;
    check_t(t0)?;
    if eps_values.iter().any(|&e| !(e > 0.0)) {
        return Err(ExperimentError::InvalidInput("eps_values: must be positive".into()));
    }
    strictly_monotone(eps_values, "eps_values")?;
    let mut out = SweepResult::new(SweepKind::Frechet, opts.window);
    let mesh = mesh::generate(domain, inclusion, target_h)?;
    out.h_max = mesh.h_max;
    let cfg = &opts.solver;
    let sigma = 1.0 + t0;
    let u0 = fem::solve_two_phase(&mesh, sigma, cfg)?;
    let du = fem::solve_linearized(&mesh, sigma, &u0, cfg)?;
    let (shifted, failure) = run_members(eps_values, |&e| Ok(fem::solve_two_phase(&mesh, sigma + e, cfg)?));
    if let Some((i, e)) = failure {
        out.status = SweepStatus::Partial { parameter: eps_values[i], reason: e.to_string() };
        return Ok(out);
    }
    let u_norm = fem::l2_norm(&mesh, &u0.values);
    let tol = cfg.cg_rel_tolerance;
    let mut floor_min = f64::INFINITY;
    for (&eps, u) in eps_values.iter().zip(&shifted) {
        let q: Vec<f64> = (0..mesh.num_vertices()).map(|i| (u.values[i] - u0.values[i]) / eps - du.values[i]).collect();
        let err = fem::l2_norm(&mesh, &q);
        // two solves, each accurate to the relative tolerance
        let floor = 2.0 * tol * u_norm / eps;
        floor_min = floor_min.min(floor);
        let mut flags = Vec::new();
        let mut in_fit = true;
        if eps < 1e3 * tol {
            flags.push("eps below 1e3 x solver tolerance".into());
            in_fit = false;
        }
        if !(err > FLOOR_FACTOR * floor) {
            flags.push("error at solver floor".into());
            in_fit = false;
        }
        out.push(eps, vec![err, floor], in_fit, flags);
    }
    out.constants.insert("floor_min".into(), floor_min);
    out.constants.insert("t0".into(), t0);
    if let Some(val) = du.value_at(&mesh, domain.shape.center()) {
        out.constants.insert("uprime_at_center".into(), val);
    }
    out.finish(SweepStatus::ExactCase);
    Ok(out)
}

/// `∇w` on ∂Ω for `w = u - v` on one mesh: normal part from the recovered
/// fluxes, tangential part from nodal differences along the boundary.
/// Returns `(‖∇w‖∞, ‖∂ₙw‖∞, ‖∂_τw‖∞)`.
pub fn boundary_gradient_of_difference(
    mesh: &Mesh,
    u: &Field,
    sigma_c: f64,
    v: &Field,
) -> Result<(f64, f64, f64), ExperimentError> {
    let dn = fem::normal_derivative(mesh, u, sigma_c)?.difference(&fem::normal_derivative(mesh, v, 1.0)?);
    let w = u.difference(v, FieldLabel::W)?;
    let b = &mesh.boundary;
    let n = b.len();
    let (mut grad, mut normal, mut tangential) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let (prev, next) = (b[(i + n - 1) % n], b[(i + 1) % n]);
        let len = mesh.vertices[next].dist(mesh.vertices[b[i]]) + mesh.vertices[b[i]].dist(mesh.vertices[prev]);
        let dt = (w.values[next] - w.values[prev]) / len;
        let dnw = dn.values[i];
        grad = grad.max(dnw.hypot(dt));
        normal = normal.max(dnw.abs());
        tangential = tangential.max(dt.abs());
    }
    Ok((grad, normal, tangential))
}

fn inclusion_member(
    domain: &DomainSpec,
    inclusion: &InclusionSpec,
    sigma_c: f64,
    target_h: f64,
    cfg: &SolverConfig,
) -> Result<((f64, f64, f64), f64), ExperimentError> {
    let mesh = mesh::generate(domain, inclusion, target_h)?;
    let u = fem::solve_two_phase(&mesh, sigma_c, cfg)?;
    let v = fem::solve_one_phase(&mesh, cfg)?;
    Ok((boundary_gradient_of_difference(&mesh, &u, sigma_c, &v)?, mesh.h_max))
}

/// `‖∇w‖_{L∞(∂Ω)}` for `w = u - v` as a disk inclusion of fixed centre
/// shrinks.
pub fn inclusion_sweep(
    domain: &DomainSpec,
    sigma_c: f64,
    center: Point,
    radii: &[f64],
    target_h: f64,
    opts: &SweepOptions,
) -> Result<SweepResult, ExperimentError> {
    opts.validate()?;
    if !(sigma_c > 0.0 && sigma_c.is_finite()) {
        return Err(FemError::BadConductivity(sigma_c).into());
    }
    if radii.iter().any(|&r| !(r > 0.0)) {
        return Err(ExperimentError::InvalidInput("inclusion_radii: must be positive".into()));
    }
    strictly_monotone(radii, "inclusion_radii")?;
    let inclusions: Vec<InclusionSpec> = radii.iter().map(|&r| InclusionSpec::disk(center, r)).collect();
    let margins = inclusions
        .iter()
        .map(|incl| geometry::inclusion_margin(domain, incl).map(|m| m.distance))
        .collect::<Result<Vec<f64>, _>>()?;
    // M is fixed by the first member
    let m_inv = margins[0];
    if let Some(i) = margins.iter().position(|&m| m < m_inv * (1.0 - 1e-12)) {
        return Err(ExperimentError::InvalidInput(format!(
            "inclusion_radii: margin {:.4} at r = {} is below 1/M = {m_inv:.4}",
            margins[i], radii[i]
        )));
    }

    let concentric = is_concentric(domain, &inclusions[0]);
    let mut jobs: Vec<(DomainSpec, InclusionSpec)> = inclusions.iter().map(|i| (domain.clone(), i.clone())).collect();
    if !concentric {
        jobs.extend(inclusions.iter().map(|i| concentric_fixture(domain, i.area())));
    }
    let (measures, failure) = run_members(&jobs, |(d, i)| inclusion_member(d, i, sigma_c, target_h, &opts.solver));
    let mut out = SweepResult::new(SweepKind::Inclusion, opts.window);
    if let Some((i, e)) = failure {
        let reason = if i >= radii.len() { format!("oracle fixture: {e}") } else { e.to_string() };
        out.status = SweepStatus::Partial { parameter: radii[i % radii.len()], reason };
        return Ok(out);
    }
    let mut c_w = 0.0f64;
    for (k, &r) in radii.iter().enumerate() {
        let ((grad, dn, dt), h_max) = measures[k];
        let floor = if concentric { grad } else { measures[radii.len() + k].0 .0 };
        let area = inclusions[k].area();
        c_w = c_w.max(grad / area.sqrt());
        out.h_max = out.h_max.max(h_max);
        let in_fit = !concentric && grad > FLOOR_FACTOR * floor;
        let flags = if in_fit { vec![] } else { vec!["gradient at resolution floor".to_string()] };
        out.push(r, vec![area, grad, dn, dt, margins[k], floor, h_max], in_fit, flags);
    }
    out.constants.insert("sigma_c".into(), sigma_c);
    out.constants.insert("M".into(), 1.0 / m_inv);
    out.constants.insert("C_w".into(), c_w);
    out.constants.insert("theoretical_exponent".into(), 0.5 * TAU_2);
    out.constants.insert("improved_exponent".into(), TAU_2);
    out.finish(if concentric { SweepStatus::ExactFamily } else { SweepStatus::ExactCase });
    if let Some(fit) = &out.fit {
        let slope = fit.slope;
        out.constants.insert("slope_minus_theoretical".into(), slope - 0.5 * TAU_2);
        out.constants.insert("slope_minus_improved".into(), slope - TAU_2);
        out.checks.insert("slope_at_least_theoretical".into(), slope >= 0.5 * TAU_2);
        out.checks.insert("slope_at_least_improved".into(), slope >= TAU_2);
    }
    Ok(out)
}

/// `gap ≤ C₁·dev` composed with `dev ≤ C₇|t|`.
pub fn empirical_c2(one_phase: &SweepResult, sigma: &SweepResult) -> Option<f64> {
    Some(one_phase.constants.get("C1")? * sigma.constants.get("C7")?)
}

/// `gap ≤ C₁·dev` composed with `‖∇w‖ ≤ C_w|D|^{1/2}`.
pub fn empirical_c3(one_phase: &SweepResult, inclusion: &SweepResult) -> Option<f64> {
    Some(one_phase.constants.get("C1")? * inclusion.constants.get("C_w")?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonexistenceReport {
    pub gap: f64,
    pub resolution_floor: f64,
    pub h_max: f64,
    pub fitted_c2: Option<f64>,
    pub fitted_c3: Option<f64>,
    /// No exact pair with `|σ_c - 1|` below this.
    pub sigma_threshold: Option<f64>,
    /// No exact pair with `|D|` below this.
    pub area_threshold: Option<f64>,
    pub label: String,
}

impl NonexistenceReport {
    pub const CSV_HEADER: &'static str = "gap,floor,h_max,C2,C3,sigma_threshold,area_threshold";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:e}"));
        [
            format!("{:e}", self.gap),
            format!("{:e}", self.resolution_floor),
            format!("{:e}", self.h_max),
            opt(self.fitted_c2),
            opt(self.fitted_c3),
            opt(self.sigma_threshold),
            opt(self.area_threshold),
        ]
        .join(",")
    }
}

/// Thresholds below which `(D, Ω)` cannot solve the overdetermined problem,
/// given constants fitted by earlier sweeps.
pub fn nonexistence_threshold(
    domain: &DomainSpec,
    fitted_c2: Option<f64>,
    fitted_c3: Option<f64>,
    target_h: f64,
    cfg: &SolverConfig,
) -> Result<NonexistenceReport, ExperimentError> {
    for (name, c) in [("fitted_C2", fitted_c2), ("fitted_C3", fitted_c3)] {
        if matches!(c, Some(c) if !(c > 0.0 && c.is_finite())) {
            return Err(ExperimentError::InvalidInput(format!("{name}: must be positive and finite")));
        }
    }
    if fitted_c2.is_none() && fitted_c3.is_none() {
        return Err(ExperimentError::InvalidInput("fitted_C2 or fitted_C3: at least one required".into()));
    }
    let m = one_phase_member(domain, target_h, cfg)?;
    let gap = m.rho_e - m.rho_i;
    let floor = 10.0 * m.h_max * m.h_max;
    if gap <= floor {
        return Err(ExperimentError::IndistinguishableFromBall { gap, floor });
    }
    Ok(NonexistenceReport {
        gap,
        resolution_floor: floor,
        h_max: m.h_max,
        fitted_c2,
        fitted_c3,
        sigma_threshold: fitted_c2.map(|c2| gap.powf(1.0 / TAU_2) / c2),
        area_threshold: fitted_c3.map(|c3| (gap / c3).powf(2.0 / TAU_2)),
        label: "empirical, conditional on fitted constants".into(),
    })
}
