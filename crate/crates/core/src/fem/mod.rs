//! Piecewise-linear Galerkin solvers for the boundary value problems of the
//! laboratory: two-phase torsion, one-phase torsion, harmonic extension of
//! Dirichlet data, and the derivative of the two-phase solution with respect
//! to the inclusion conductivity.
//!
//! σ is constant on each element (`σ_c` on inside-D triangles, 1 elsewhere),
//! so the transmission condition across ∂D is carried by the weak form.

mod recovery;
pub mod sparse;

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::Point;
use crate::mesh::{Mesh, Region};
use sparse::{pcg, CsrMatrix};

pub use recovery::{
    flux_trace, gradient_recovery, hessian_recovery, normal_derivative, BoundaryTrace, Hessian,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("sigma_c must be positive and finite, got {0}")]
    BadConductivity(f64),
    #[error("field was computed on mesh {field} but mesh {mesh} was given")]
    MeshMismatch { field: u64, mesh: u64 },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("boundary data is not finite at vertex {0}")]
    NonFiniteBoundary(usize),
    #[error("vertex {0} has a degenerate recovery patch")]
    DegeneratePatch(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub cg_rel_tolerance: f64,
    /// `None` means `20·√unknowns + 1000`.
    pub cg_max_iterations: Option<usize>,
    pub jacobi: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { cg_rel_tolerance: 1e-10, cg_max_iterations: None, jacobi: true }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.cg_rel_tolerance > 0.0 && self.cg_rel_tolerance <= 1e-4) {
            return Err(FemError::BadConfig(format!("tolerance {} outside (0, 1e-4]", self.cg_rel_tolerance)));
        }
        if matches!(self.cg_max_iterations, Some(n) if n < 100) {
            return Err(FemError::BadConfig("at least 100 iterations required".into()));
        }
        Ok(())
    }

    fn max_iterations(&self, unknowns: usize) -> usize {
        self.cg_max_iterations.unwrap_or(20 * (unknowns as f64).sqrt() as usize + 1000)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FieldLabel {
    U,
    V,
    W,
    H,
    UPrime,
    Custom(String),
}

/// Nodal values of a P1 function on a specific mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    mesh_id: u64,
    pub values: Vec<f64>,
    pub label: FieldLabel,
}

impl Field {
    pub fn new(mesh: &Mesh, values: Vec<f64>, label: FieldLabel) -> Self {
        assert_eq!(values.len(), mesh.num_vertices(), "one value per vertex");
        Self { mesh_id: mesh.id(), values, label }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64, label: FieldLabel) -> Self {
        Self::new(mesh, mesh.vertices.iter().map(|&p| f(p)).collect(), label)
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<(), FemError> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.num_vertices() {
            return Err(FemError::MeshMismatch { field: self.mesh_id, mesh: mesh.id() });
        }
        Ok(())
    }

    /// `self - other` on the shared mesh.
    pub fn difference(&self, other: &Field, label: FieldLabel) -> Result<Field, FemError> {
        if self.mesh_id != other.mesh_id {
            return Err(FemError::MeshMismatch { field: other.mesh_id, mesh: self.mesh_id });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { mesh_id: self.mesh_id, values, label })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64, label: FieldLabel) -> Field {
        Field { mesh_id: self.mesh_id, values: self.values.iter().map(|&v| f(v)).collect(), label }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation at `p`, `None` outside the mesh.
    pub fn value_at(&self, mesh: &Mesh, p: Point) -> Option<f64> {
        let (t, l) = mesh.locate(p)?;
        let tri = mesh.triangles[t];
        Some((0..3).map(|k| l[k] * self.values[tri[k]]).sum())
    }

    /// Mesh dump followed by a VALUES section.
    pub fn dump(&self, mesh: &Mesh) -> String {
        let mut s = mesh.dump();
        let _ = writeln!(s, "VALUES {}", self.values.len());
        for v in &self.values {
            let _ = writeln!(s, "{v:.16e}");
        }
        s
    }
}

/// Per-element conductivity for the two-phase problem.
pub fn conductivities(mesh: &Mesh, sigma_c: f64) -> Vec<f64> {
    mesh.regions
        .iter()
        .map(|r| match r {
            Region::InsideD => sigma_c,
            Region::OutsideD => 1.0,
        })
        .collect()
}

/// Gradients of the three barycentric coordinates of triangle `t`.
pub(crate) fn shape_gradients(mesh: &Mesh, t: usize) -> ([Point; 3], f64) {
    let [a, b, c] = mesh.triangles[t].map(|v| mesh.vertices[v]);
    let twice_area = (b - a).cross(c - a);
    let g = |p: Point, q: Point| Point::new(p.y - q.y, q.x - p.x) * (1.0 / twice_area);
    ([g(b, c), g(c, a), g(a, b)], 0.5 * twice_area)
}

/// Global stiffness matrix `∫ σ ∇φ_i·∇φ_j` over all vertices.
pub fn stiffness(mesh: &Mesh, coefficients: &[f64]) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = shape_gradients(mesh, t);
        let s = coefficients[t] * area;
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], s * g[i].dot(g[j])));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), triplets)
}

/// `∫ φ_i` for a unit source, by the centroid rule (exact here).
pub fn unit_load(mesh: &Mesh) -> Vec<f64> {
    let mut load = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let share = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            load[v] += share;
        }
    }
    load
}

/// Load of the conductivity derivative: `-∫_D ∇u·∇φ_i`.
pub fn linearized_load(mesh: &Mesh, u_base: &Field) -> Vec<f64> {
    let mut load = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.regions[t] != Region::InsideD {
            continue;
        }
        let (g, area) = shape_gradients(mesh, t);
        let grad_u = (0..3).fold(Point::ORIGIN, |acc, k| acc + g[k] * u_base.values[tri[k]]);
        for k in 0..3 {
            load[tri[k]] -= area * grad_u.dot(g[k]);
        }
    }
    load
}

/// Solves `∫σ∇u·∇φ = ⟨load, φ⟩` for all interior test functions, with `u`
/// fixed to `boundary_values` on boundary vertices.
pub fn solve_dirichlet(
    mesh: &Mesh,
    coefficients: &[f64],
    load: &[f64],
    boundary_values: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>, FemError> {
    cfg.validate()?;
    let n = mesh.num_vertices();
    let is_boundary = mesh.is_boundary_vertex();
    let mut index = vec![usize::MAX; n];
    let mut unknowns = 0;
    for v in 0..n {
        if !is_boundary[v] {
            index[v] = unknowns;
            unknowns += 1;
        }
    }
    let mut values = vec![0.0; n];
    for &v in &mesh.boundary {
        if !boundary_values[v].is_finite() {
            return Err(FemError::NonFiniteBoundary(v));
        }
        values[v] = boundary_values[v];
    }
    let full = stiffness(mesh, coefficients);
    let mut triplets = Vec::with_capacity(full.nnz());
    let mut rhs = vec![0.0; unknowns];
    for v in 0..n {
        let i = index[v];
        if i == usize::MAX {
            continue;
        }
        rhs[i] = load[v];
        for (c, a) in full.row(v) {
            if index[c] == usize::MAX {
                rhs[i] -= a * values[c];
            } else {
                triplets.push((i, index[c], a));
            }
        }
    }
    let reduced = CsrMatrix::from_triplets(unknowns, triplets);
    let mut x = vec![0.0; unknowns];
    let outcome = pcg(&reduced, &rhs, &mut x, cfg.cg_rel_tolerance, cfg.max_iterations(unknowns), cfg.jacobi);
    if !outcome.converged {
        return Err(FemError::NotConverged { iterations: outcome.iterations, residual: outcome.relative_residual });
    }
    for v in 0..n {
        if index[v] != usize::MAX {
            values[v] = x[index[v]];
        }
    }
    Ok(values)
}

/// `-div(σ∇u) = 1` in Ω, `u = 0` on ∂Ω.
pub fn solve_two_phase(mesh: &Mesh, sigma_c: f64, cfg: &SolverConfig) -> Result<Field, FemError> {
    if !(sigma_c > 0.0 && sigma_c.is_finite()) {
        return Err(FemError::BadConductivity(sigma_c));
    }
    let values = solve_dirichlet(mesh, &conductivities(mesh, sigma_c), &unit_load(mesh), &vec![0.0; mesh.num_vertices()], cfg)?;
    Ok(Field::new(mesh, values, FieldLabel::U))
}

/// `-Δv = 1` in Ω, `v = 0` on ∂Ω.
pub fn solve_one_phase(mesh: &Mesh, cfg: &SolverConfig) -> Result<Field, FemError> {
    let values = solve_dirichlet(mesh, &vec![1.0; mesh.num_triangles()], &unit_load(mesh), &vec![0.0; mesh.num_vertices()], cfg)?;
    Ok(Field::new(mesh, values, FieldLabel::V))
}

/// Discrete harmonic function with boundary values `g`.
pub fn solve_harmonic_dirichlet(mesh: &Mesh, g: impl Fn(Point) -> f64, cfg: &SolverConfig) -> Result<Field, FemError> {
    let mut bv = vec![0.0; mesh.num_vertices()];
    for &v in &mesh.boundary {
        bv[v] = g(mesh.vertices[v]);
    }
    let values = solve_dirichlet(mesh, &vec![1.0; mesh.num_triangles()], &vec![0.0; mesh.num_vertices()], &bv, cfg)?;
    Ok(Field::new(mesh, values, FieldLabel::H))
}

/// Derivative of the two-phase solution with respect to `t` at
/// `σ_c = 1 + t₀`: `∫σ∇u'·∇φ = -∫_D ∇u·∇φ`, `u' = 0` on ∂Ω.
pub fn solve_linearized(mesh: &Mesh, sigma_c: f64, u_base: &Field, cfg: &SolverConfig) -> Result<Field, FemError> {
    u_base.check_mesh(mesh)?;
    if !(sigma_c > 0.0 && sigma_c.is_finite()) {
        return Err(FemError::BadConductivity(sigma_c));
    }
    let load = linearized_load(mesh, u_base);
    let values = solve_dirichlet(mesh, &conductivities(mesh, sigma_c), &load, &vec![0.0; mesh.num_vertices()], cfg)?;
    Ok(Field::new(mesh, values, FieldLabel::UPrime))
}

/// Residual `‖Ku - F‖ / ‖F‖` restricted to interior rows.
pub fn interior_residual(mesh: &Mesh, coefficients: &[f64], load: &[f64], f: &Field) -> f64 {
    let k = stiffness(mesh, coefficients);
    let is_boundary = mesh.is_boundary_vertex();
    let (mut num, mut den) = (0.0, 0.0);
    for v in 0..mesh.num_vertices() {
        if is_boundary[v] {
            continue;
        }
        let r: f64 = k.row(v).map(|(c, a)| a * f.values[c]).sum::<f64>() - load[v];
        num += r * r;
        den += load[v] * load[v];
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Exact `∫ f²` of a P1 function.
pub fn l2_norm(mesh: &Mesh, values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let e = tri.map(|v| values[v]);
        let sum = e[0] + e[1] + e[2];
        let sq = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
        acc += mesh.triangle_area(t) / 12.0 * (sq + sum * sum);
    }
    acc.sqrt()
}

/// `‖∇f‖_{L²}` of a P1 function.
pub fn gradient_l2_norm(mesh: &Mesh, values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = shape_gradients(mesh, t);
        let grad = (0..3).fold(Point::ORIGIN, |a, k| a + g[k] * values[tri[k]]);
        acc += area * grad.norm_sq();
    }
    acc.sqrt()
}

// Degree-4 six-point rule on the reference triangle (barycentric, weight).
const QUAD6: [([f64; 3], f64); 6] = [
    ([0.445948490915965, 0.445948490915965, 0.108103018168070], 0.223381589678011),
    ([0.445948490915965, 0.108103018168070, 0.445948490915965], 0.223381589678011),
    ([0.108103018168070, 0.445948490915965, 0.445948490915965], 0.223381589678011),
    ([0.091576213509771, 0.091576213509771, 0.816847572980459], 0.109951743655322),
    ([0.091576213509771, 0.816847572980459, 0.091576213509771], 0.109951743655322),
    ([0.816847572980459, 0.091576213509771, 0.091576213509771], 0.109951743655322),
];

/// `‖f_h - exact‖_{L²(Ω_h)}` with a degree-4 rule per triangle.
pub fn l2_error(mesh: &Mesh, f: &Field, exact: impl Fn(Point) -> f64) -> f64 {
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|v| mesh.vertices[v]);
        let val = tri.map(|v| f.values[v]);
        let area = mesh.triangle_area(t);
        for (l, w) in QUAD6 {
            let x = p[0] * l[0] + p[1] * l[1] + p[2] * l[2];
            let fh = val[0] * l[0] + val[1] * l[1] + val[2] * l[2];
            acc += w * area * (fh - exact(x)).powi(2);
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests;
