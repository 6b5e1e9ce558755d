//! Boundary flux and derivative recovery from P1 fields.

use super::sparse::{pcg, CsrMatrix};
use super::{conductivities, shape_gradients, stiffness, unit_load, FemError, Field};
use crate::geometry::Point;
use crate::mesh::Mesh;

/// Values on the boundary loop with their arc-length quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTrace {
    pub vertices: Vec<usize>,
    pub points: Vec<Point>,
    /// Curve parameter of each vertex when it lies on the analytic curve.
    pub params: Vec<Option<f64>>,
    pub normals: Vec<Point>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ weight · value`, the discrete boundary integral.
    pub fn integral(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn with_values(&self, values: Vec<f64>) -> BoundaryTrace {
        assert_eq!(values.len(), self.len());
        BoundaryTrace { values, ..self.clone() }
    }

    /// Pointwise `self - other` on the same boundary.
    pub fn difference(&self, other: &BoundaryTrace) -> BoundaryTrace {
        assert_eq!(self.vertices, other.vertices, "traces live on different boundaries");
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Variational boundary flux `σ∂ₙf`: solves the boundary mass system
/// `∫_∂Ω λ φ_i = ∫_Ω σ∇f·∇φ_i - ⟨load, φ_i⟩` for boundary vertices `i`.
pub fn flux_trace(mesh: &Mesh, f: &Field, coefficients: &[f64], load: &[f64]) -> Result<BoundaryTrace, FemError> {
    f.check_mesh(mesh)?;
    let k = stiffness(mesh, coefficients);
    let nb = mesh.boundary.len();
    let residual: Vec<f64> = mesh
        .boundary
        .iter()
        .map(|&v| k.row(v).map(|(c, a)| a * f.values[c]).sum::<f64>() - load[v])
        .collect();
    let mut triplets = Vec::with_capacity(4 * nb);
    for i in 0..nb {
        let j = (i + 1) % nb;
        let len = mesh.vertices[mesh.boundary[i]].dist(mesh.vertices[mesh.boundary[j]]);
        triplets.extend([(i, i, len / 3.0), (j, j, len / 3.0), (i, j, len / 6.0), (j, i, len / 6.0)]);
    }
    let mass = CsrMatrix::from_triplets(nb, triplets);
    let mut values = vec![0.0; nb];
    let outcome = pcg(&mass, &residual, &mut values, 1e-14, 10 * nb + 100, true);
    if !outcome.converged {
        return Err(FemError::NotConverged { iterations: outcome.iterations, residual: outcome.relative_residual });
    }
    Ok(BoundaryTrace {
        vertices: mesh.boundary.clone(),
        points: mesh.boundary.iter().map(|&v| mesh.vertices[v]).collect(),
        params: mesh.boundary.iter().map(|&v| mesh.curve_tags[v].map(|t| t.param)).collect(),
        normals: mesh.boundary_vertex_normals(),
        weights: mesh.boundary_weights(),
        values,
    })
}

/// `∂ₙf` for a field solving the two-phase (or, with `σ_c = 1`, one-phase)
/// torsion problem on this mesh.
pub fn normal_derivative(mesh: &Mesh, f: &Field, sigma_c: f64) -> Result<BoundaryTrace, FemError> {
    flux_trace(mesh, f, &conductivities(mesh, sigma_c), &unit_load(mesh))
}

/// Area-weighted average of element gradients at each vertex.
pub fn gradient_recovery(mesh: &Mesh, f: &Field) -> Result<Vec<Point>, FemError> {
    f.check_mesh(mesh)?;
    let n = mesh.num_vertices();
    let mut acc = vec![Point::ORIGIN; n];
    let mut weight = vec![0.0; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = shape_gradients(mesh, t);
        let grad = (0..3).fold(Point::ORIGIN, |a, k| a + g[k] * f.values[tri[k]]);
        for &v in tri {
            acc[v] = acc[v] + grad * area;
            weight[v] += area;
        }
    }
    Ok(acc.into_iter().zip(weight).map(|(g, w)| g * (1.0 / w)).collect())
}

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Hessian {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Hessian {
    pub fn frobenius_sq(&self) -> f64 {
        self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy
    }

    pub fn shifted(&self, diag: f64) -> Hessian {
        Hessian { xx: self.xx + diag, xy: self.xy, yy: self.yy + diag }
    }
}

/// Recovered gradients, then a least-squares linear fit of them over each
/// vertex patch (the vertex and its neighbours up to two edges away); the
/// fitted Jacobian is symmetrized.
pub fn hessian_recovery(mesh: &Mesh, f: &Field) -> Result<Vec<Hessian>, FemError> {
    let grads = gradient_recovery(mesh, f)?;
    let neighbors = mesh.vertex_neighbors();
    let mut out = Vec::with_capacity(mesh.num_vertices());
    for v in 0..mesh.num_vertices() {
        let x0 = mesh.vertices[v];
        // normal equations of g ≈ a + B (x - x0) on the patch
        let mut ata = [[0.0f64; 3]; 3];
        let mut atb = [[0.0f64; 2]; 3];
        let patch = two_ring(&neighbors, v);
        for &p in &patch {
            let d = mesh.vertices[p] - x0;
            let row = [1.0, d.x, d.y];
            for i in 0..3 {
                for j in 0..3 {
                    ata[i][j] += row[i] * row[j];
                }
                atb[i][0] += row[i] * grads[p].x;
                atb[i][1] += row[i] * grads[p].y;
            }
        }
        if neighbors[v].len() < 3 {
            return Err(FemError::DegeneratePatch(v));
        }
        let sol = solve3(ata, atb).ok_or(FemError::DegeneratePatch(v))?;
        // sol[1] = ∂/∂x of (gx, gy), sol[2] = ∂/∂y
        let (gxx, gyx) = (sol[1][0], sol[1][1]);
        let (gxy, gyy) = (sol[2][0], sol[2][1]);
        out.push(Hessian { xx: gxx, xy: 0.5 * (gxy + gyx), yy: gyy });
    }
    Ok(out)
}

fn two_ring(neighbors: &[Vec<usize>], v: usize) -> Vec<usize> {
    let mut patch = vec![v];
    patch.extend_from_slice(&neighbors[v]);
    for &n in &neighbors[v] {
        for &m in &neighbors[n] {
            if !patch.contains(&m) {
                patch.push(m);
            }
        }
    }
    patch
}

fn solve3(a: [[f64; 3]; 3], b: [[f64; 2]; 3]) -> Option<[[f64; 2]; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if d.abs() <= 1e-14 * scale.powi(3) {
        return None;
    }
    let mut out = [[0.0; 2]; 3];
    for k in 0..2 {
        for i in 0..3 {
            let mut m = a;
            for r in 0..3 {
                m[r][i] = b[r][k];
            }
            out[i][k] = det(&m) / d;
        }
    }
    Some(out)
}
