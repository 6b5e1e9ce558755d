//! Quantities appearing in the stability estimates for the overdetermined
//! problem, computed from discrete solutions.
//!
//! Everything is two-dimensional: `q(x) = -|x - z|²/4` and the harmonic
//! function is `h = v - q = v + |x - z|²/4`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{self, BoundaryTrace, FemError, Field, FieldLabel, SolverConfig};
use crate::geometry::{self, DomainSpec, GeometryError, InclusionSpec, Point};
use crate::mesh::{self, Mesh, MeshError};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("the maximum of v sits on boundary vertex {0}")]
    MaxOnBoundary(usize),
    #[error("perturbation has weighted mean {mean:.3e} (sup {sup:.3e}); it must vanish")]
    NonZeroMean { mean: f64, sup: f64 },
    #[error("trace has non-positive quadrature weight at boundary node {0}")]
    BadWeight(usize),
}

/// Zero-mean boundary perturbation `amplitude·cos(mode·θ + phase)` of the
/// Neumann datum, as a function of the curve parameter θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub amplitude: f64,
    #[serde(default = "one")]
    pub mode: u32,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> u32 {
    1
}

impl Perturbation {
    pub fn eval(&self, theta: f64) -> f64 {
        self.amplitude * (self.mode as f64 * theta + self.phase).cos()
    }

    pub fn describe(&self) -> String {
        format!("{}*cos({}*theta+{})", self.amplitude, self.mode, self.phase)
    }

    /// Values at the trace nodes with the weighted mean removed.
    pub fn on_trace(&self, trace: &BoundaryTrace) -> Vec<f64> {
        let raw: Vec<f64> = trace
            .params
            .iter()
            .zip(&trace.points)
            .map(|(t, p)| self.eval(t.unwrap_or_else(|| p.y.atan2(p.x))))
            .collect();
        project_zero_mean(trace, &raw)
    }
}

/// Removes the `weights`-weighted mean.
pub fn project_zero_mean(trace: &BoundaryTrace, values: &[f64]) -> Vec<f64> {
    let mean = weighted_mean(trace, values);
    values.iter().map(|v| v - mean).collect()
}

fn weighted_mean(trace: &BoundaryTrace, values: &[f64]) -> f64 {
    values.iter().zip(&trace.weights).map(|(v, w)| v * w).sum::<f64>() / trace.total_weight()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub l2: f64,
    pub linf: f64,
}

/// `‖trace - c - η‖` in the weighted `L²(∂Ω)` and nodal sup norms.
pub fn deviation_norms(trace: &BoundaryTrace, c: f64, eta: Option<&[f64]>) -> Result<Deviation, DiagnosticsError> {
    if let Some(i) = trace.weights.iter().position(|&w| !(w > 0.0)) {
        return Err(DiagnosticsError::BadWeight(i));
    }
    if let Some(eta) = eta {
        assert_eq!(eta.len(), trace.len(), "one perturbation value per boundary node");
        let sup = eta.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let mean = weighted_mean(trace, eta);
        if mean.abs() > 1e-8 * sup {
            return Err(DiagnosticsError::NonZeroMean { mean, sup });
        }
    }
    let (mut sq, mut linf) = (0.0, 0.0f64);
    for (i, (&val, &w)) in trace.values.iter().zip(&trace.weights).enumerate() {
        let r = val - c - eta.map_or(0.0, |e| e[i]);
        sq += w * r * r;
        linf = linf.max(r.abs());
    }
    Ok(Deviation { l2: sq.sqrt(), linf })
}

/// Maximum point of `v`: the best vertex, moved to the stationary point of
/// a least-squares quadratic over its two-ring when that stays nearby.
pub fn max_point(mesh: &Mesh, v: &Field) -> Result<Point, DiagnosticsError> {
    v.check_mesh(mesh)?;
    let best = (0..v.values.len()).max_by(|&a, &b| v.values[a].total_cmp(&v.values[b]).then(b.cmp(&a))).unwrap();
    if mesh.is_boundary_vertex()[best] {
        return Err(DiagnosticsError::MaxOnBoundary(best));
    }
    let neighbors = mesh.vertex_neighbors();
    let mut patch = vec![best];
    for &n in &neighbors[best] {
        patch.push(n);
    }
    for &n in &neighbors[best] {
        for &m in &neighbors[n] {
            if !patch.contains(&m) {
                patch.push(m);
            }
        }
    }
    let x0 = mesh.vertices[best];
    let radius = patch.iter().map(|&p| mesh.vertices[p].dist(x0)).fold(0.0, f64::max);
    // fit f ≈ c0 + c1 dx + c2 dy + c3 dx² + c4 dx dy + c5 dy² in scaled coordinates
    let mut ata = [[0.0f64; 6]; 6];
    let mut atb = [0.0f64; 6];
    for &p in &patch {
        let d = (mesh.vertices[p] - x0) * (1.0 / radius);
        let row = [1.0, d.x, d.y, d.x * d.x, d.x * d.y, d.y * d.y];
        for i in 0..6 {
            for j in 0..6 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * v.values[p];
        }
    }
    let Some(c) = solve_dense(ata, atb) else {
        return Ok(x0);
    };
    let (hxx, hxy, hyy) = (2.0 * c[3], c[4], 2.0 * c[5]);
    let det = hxx * hyy - hxy * hxy;
    if !(hxx < 0.0 && det > 0.0) {
        return Ok(x0);
    }
    let dx = -(hyy * c[1] - hxy * c[2]) / det;
    let dy = -(-hxy * c[1] + hxx * c[2]) / det;
    let shift = Point::new(dx, dy);
    // only trust the fit inside the patch core
    if shift.norm() > 0.5 {
        return Ok(x0);
    }
    Ok(x0 + shift * radius)
}

fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let s: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// `h = v + |x - z|²/4`.
pub fn h_field(mesh: &Mesh, v: &Field, z: Point) -> Result<Field, DiagnosticsError> {
    v.check_mesh(mesh)?;
    let values = v.values.iter().zip(&mesh.vertices).map(|(val, p)| val + (*p - z).norm_sq() / 4.0).collect();
    Ok(Field::new(mesh, values, FieldLabel::H))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityTerms {
    pub lhs: f64,
    pub rhs: f64,
    pub relative_gap: f64,
}

/// Both sides of `∫ v|∇²h|² = ½∫_∂Ω (c² - (∂ₙv)²) ∂ₙh`, with
/// `∂ₙh = ∂ₙv + (x - z)·n/2` and the Hessian of `h` recovered from `v`.
pub fn fundamental_identity(
    mesh: &Mesh,
    v: &Field,
    trace: &BoundaryTrace,
    z: Point,
    c: f64,
) -> Result<IdentityTerms, DiagnosticsError> {
    let hessians = fem::hessian_recovery(mesh, v)?;
    let density: Vec<f64> = hessians.iter().zip(&v.values).map(|(h, val)| val * h.shifted(0.5).frobenius_sq()).collect();
    let lhs: f64 = mesh
        .triangles
        .iter()
        .enumerate()
        .map(|(t, tri)| mesh.triangle_area(t) / 3.0 * tri.iter().map(|&i| density[i]).sum::<f64>())
        .sum();
    let rhs: f64 = 0.5
        * (0..trace.len())
            .map(|i| {
                let dn_v = trace.values[i];
                let dn_h = dn_v + (trace.points[i] - z).dot(trace.normals[i]) / 2.0;
                trace.weights[i] * (c * c - dn_v * dn_v) * dn_h
            })
            .sum::<f64>();
    let relative_gap = (lhs - rhs).abs() / lhs.max(rhs).max(1e-14);
    Ok(IdentityTerms { lhs, rhs, relative_gap })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationCheck {
    /// `max - min` of `h` over the boundary nodes.
    pub osc: f64,
    /// `|osc - (ρ_e² - ρ_i²)/4|`.
    pub residual: f64,
    /// `(8/d_Ω)·osc`, the bound on `ρ_e - ρ_i`.
    pub gap_bound: f64,
    pub holds: bool,
}

/// Compares the oscillation of `h` on ∂Ω with the radii about `z` and checks
/// `ρ_e - ρ_i ≤ (8/d_Ω)·osc + slack`.
pub fn osc_check(h_trace: &[f64], rho_i: f64, rho_e: f64, diameter: f64, slack: f64) -> OscillationCheck {
    let max = h_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = h_trace.iter().copied().fold(f64::INFINITY, f64::min);
    let osc = max - min;
    let gap_bound = 8.0 / diameter * osc;
    OscillationCheck {
        osc,
        residual: (osc - (rho_e * rho_e - rho_i * rho_i) / 4.0).abs(),
        gap_bound,
        holds: rho_e - rho_i <= gap_bound + slack,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    /// `min v(x)/δ(x)` over interior vertices.
    pub ratio_min: f64,
    /// `min (v(x) - δ(x)²/4)`, which should be nonnegative up to O(h²).
    pub quadratic_slack_min: f64,
}

/// Linear and quadratic growth of `v` away from ∂Ω, with δ the distance to
/// the analytic boundary curve.
pub fn growth_check(mesh: &Mesh, v: &Field, domain: &DomainSpec) -> Result<GrowthCheck, DiagnosticsError> {
    v.check_mesh(mesh)?;
    let is_boundary = mesh.is_boundary_vertex();
    let (mut ratio_min, mut slack_min) = (f64::INFINITY, f64::INFINITY);
    for (i, &p) in mesh.vertices.iter().enumerate() {
        if is_boundary[i] {
            continue;
        }
        let delta = domain.distance_to_boundary(p);
        if delta <= 0.0 {
            continue;
        }
        ratio_min = ratio_min.min(v.values[i] / delta);
        slack_min = slack_min.min(v.values[i] - delta * delta / 4.0);
    }
    Ok(GrowthCheck { ratio_min, quadratic_slack_min: slack_min })
}

/// All diagnostics of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerrinReport {
    pub c: f64,
    pub deviation_l2: f64,
    pub deviation_linf: f64,
    pub z: Point,
    pub rho_i: f64,
    pub rho_e: f64,
    pub gap: f64,
    pub osc_h: f64,
    pub osc_identity_residual: f64,
    pub osc_inequality_holds: bool,
    pub fi_lhs: f64,
    pub fi_rhs: f64,
    pub fi_relative_gap: f64,
    pub growth_ratio_min: f64,
    pub growth_quadratic_slack: f64,
    pub h_max: f64,
    /// Sum of the trace weights, the discrete `|∂Ω|`.
    pub perimeter: f64,
    pub eta: Option<String>,
}

impl SerrinReport {
    pub const CSV_HEADER: &'static str =
        "c,dev_L2,dev_Linf,z_x,z_y,rho_i,rho_e,gap,osc_h,FI_lhs,FI_rhs,FI_gap,growth_min,h_max";

    pub fn csv_row(&self) -> String {
        [
            self.c,
            self.deviation_l2,
            self.deviation_linf,
            self.z.x,
            self.z.y,
            self.rho_i,
            self.rho_e,
            self.gap,
            self.osc_h,
            self.fi_lhs,
            self.fi_rhs,
            self.fi_relative_gap,
            self.growth_ratio_min,
            self.h_max,
        ]
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
    }

    /// `‖·‖_{L²(∂Ω)} ≤ |∂Ω|^{1/2} ‖·‖_∞` for the deviation, on the discrete
    /// boundary.
    pub fn bridge_holds(&self) -> bool {
        self.deviation_l2 <= self.perimeter.sqrt() * self.deviation_linf * (1.0 + 1e-12)
    }
}

/// Solves both problems on a generated mesh and collects the diagnostics.
pub fn full_report(
    domain: &DomainSpec,
    inclusion: &InclusionSpec,
    sigma_c: f64,
    target_h: f64,
    eta: Option<&Perturbation>,
    cfg: &SolverConfig,
) -> Result<SerrinReport, DiagnosticsError> {
    let mesh = mesh::generate(domain, inclusion, target_h)?;
    report_on_mesh(&mesh, domain, sigma_c, eta, cfg)
}

/// As [`full_report`] on an existing mesh of `domain`.
pub fn report_on_mesh(
    mesh: &Mesh,
    domain: &DomainSpec,
    sigma_c: f64,
    eta: Option<&Perturbation>,
    cfg: &SolverConfig,
) -> Result<SerrinReport, DiagnosticsError> {
    let c = domain.serrin_constant();
    let u = fem::solve_two_phase(mesh, sigma_c, cfg)?;
    let du = fem::normal_derivative(mesh, &u, sigma_c)?;
    let eta_values = eta.map(|e| e.on_trace(&du));
    let dev = deviation_norms(&du, c, eta_values.as_deref())?;

    let v = fem::solve_one_phase(mesh, cfg)?;
    let dv = fem::normal_derivative(mesh, &v, 1.0)?;
    let z = max_point(mesh, &v)?;
    let (rho_i, rho_e) = geometry::rho_bounds(domain, z)?;
    let h = h_field(mesh, &v, z)?;
    let h_trace: Vec<f64> = mesh.boundary.iter().map(|&b| h.values[b]).collect();
    let osc = osc_check(&h_trace, rho_i, rho_e, domain.diameter(), mesh.h_max);
    let fi = fundamental_identity(mesh, &v, &dv, z, c)?;
    let growth = growth_check(mesh, &v, domain)?;
    Ok(SerrinReport {
        c,
        deviation_l2: dev.l2,
        deviation_linf: dev.linf,
        z,
        rho_i,
        rho_e,
        gap: rho_e - rho_i,
        osc_h: osc.osc,
        osc_identity_residual: osc.residual,
        osc_inequality_holds: osc.holds,
        fi_lhs: fi.lhs,
        fi_rhs: fi.rhs,
        fi_relative_gap: fi.relative_gap,
        growth_ratio_min: growth.ratio_min,
        growth_quadratic_slack: growth.quadratic_slack_min,
        h_max: mesh.h_max,
        perimeter: du.total_weight(),
        eta: eta.map(Perturbation::describe),
    })
}

#[cfg(test)]
mod tests;
