//! Conforming triangulations of Ω that resolve ∂D with element edges.
//!
//! Vertices come from three deterministic sources: equispaced parameter
//! samples of ∂Ω and ∂D, and a hexagonal lattice of spacing `target_h`
//! kept away from both curves. The constrained Delaunay triangulation of
//! that point set is then quality-refined; any vertex the refinement places
//! on a boundary or interface chord is projected back onto its curve.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};
use thiserror::Error;

use crate::geometry::{self, DomainSpec, GeometryError, InclusionSpec, Point, Shape};

const TAU: f64 = std::f64::consts::TAU;
const MIN_ANGLE_DEG: f64 = 20.0;
const H_MAX_FACTOR: f64 = 1.5;
const OUTER_LAYERS: usize = 3;
const INTERFACE_LAYERS: usize = 2;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("target_h must be positive and finite, got {0}")]
    BadTargetSize(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("mesh quality not reached after {attempts} attempts: min angle {min_angle_deg:.2} deg, h_max {h_max:.4} (target {target_h})")]
    Quality { attempts: usize, min_angle_deg: f64, h_max: f64, target_h: f64 },
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("malformed mesh dump: {0}")]
    Dump(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    OutsideD,
    InsideD,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curve {
    Outer,
    Interface,
}

/// Position of a vertex on one of the analytic curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveTag {
    pub curve: Curve,
    pub param: f64,
}

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Debug)]
pub struct Mesh {
    id: u64,
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    /// Counterclockwise loop of boundary vertex ids; edge `i` runs from
    /// `boundary[i]` to `boundary[i + 1]`.
    pub boundary: Vec<usize>,
    /// Outward unit normal of each boundary edge.
    pub boundary_normals: Vec<Point>,
    /// Counterclockwise loop of interface vertex ids (empty without D).
    pub interface: Vec<usize>,
    pub curve_tags: Vec<Option<CurveTag>>,
    pub outer: Option<Shape>,
    pub inner: Option<Shape>,
    pub h_max: f64,
}

impl Mesh {
    /// Identity used to tie fields to the mesh they were computed on.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Builds a mesh from raw connectivity, e.g. for polygonal test domains.
    /// Triangles are reoriented counterclockwise; the boundary loop is
    /// recovered from edges used by a single triangle.
    pub fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, regions: Vec<Region>) -> Result<Self, MeshError> {
        if triangles.len() != regions.len() {
            return Err(MeshError::Triangulation("one region per triangle required".into()));
        }
        let n = vertices.len();
        let mut tris = triangles;
        for t in &mut tris {
            if t.iter().any(|&v| v >= n) {
                return Err(MeshError::Triangulation("vertex index out of range".into()));
            }
            if orient(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
        }
        let mut mesh = Mesh {
            id: next_id(),
            curve_tags: vec![None; n],
            vertices,
            triangles: tris,
            regions,
            boundary: Vec::new(),
            boundary_normals: Vec::new(),
            interface: Vec::new(),
            outer: None,
            inner: None,
            h_max: 0.0,
        };
        mesh.boundary = boundary_loop(&mesh.triangles, None)?;
        mesh.interface = interface_loop(&mesh.triangles, &mesh.regions)?;
        mesh.finish();
        Ok(mesh)
    }

    fn finish(&mut self) {
        let nb = self.boundary.len();
        self.boundary_normals = (0..nb)
            .map(|i| {
                let a = self.vertices[self.boundary[i]];
                let b = self.vertices[self.boundary[(i + 1) % nb]];
                let e = (b - a).normalized();
                Point::new(e.y, -e.x)
            })
            .collect();
        self.h_max = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| self.vertices[a].dist(self.vertices[b]))
            .fold(0.0, f64::max);
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * orient(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) * (1.0 / 3.0)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len()).filter(|&t| self.regions[t] == region).map(|t| self.triangle_area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| min_angle([self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]))
            .fold(180.0, f64::min)
    }

    pub fn is_boundary_vertex(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertices.len()];
        for &v in &self.boundary {
            flags[v] = true;
        }
        flags
    }

    /// Unique undirected edges in first-encounter order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                if seen.insert(key, ()).is_none() {
                    out.push(key);
                }
            }
        }
        out
    }

    /// Neighbouring vertex ids of every vertex, sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            nb[a].push(b);
            nb[b].push(a);
        }
        for list in &mut nb {
            list.sort_unstable();
        }
        nb
    }

    /// Triangles incident to every vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut vt = vec![Vec::new(); self.vertices.len()];
        for (i, t) in self.triangles.iter().enumerate() {
            for &v in t {
                vt[v].push(i);
            }
        }
        vt
    }

    /// Outward unit normal at a boundary vertex: the analytic curve normal
    /// when the vertex is tagged, otherwise the average of adjacent edge normals.
    pub fn boundary_vertex_normals(&self) -> Vec<Point> {
        let nb = self.boundary.len();
        (0..nb)
            .map(|i| {
                let v = self.boundary[i];
                match (self.curve_tags[v], &self.outer) {
                    (Some(CurveTag { curve: Curve::Outer, param }), Some(shape)) => shape.normal(param),
                    _ => (self.boundary_normals[i] + self.boundary_normals[(i + nb - 1) % nb]).normalized(),
                }
            })
            .collect()
    }

    /// Arc-length weight of each boundary vertex (half of each adjacent edge).
    pub fn boundary_weights(&self) -> Vec<f64> {
        let nb = self.boundary.len();
        let mut w = vec![0.0; nb];
        for i in 0..nb {
            let j = (i + 1) % nb;
            let len = self.vertices[self.boundary[i]].dist(self.vertices[self.boundary[j]]);
            w[i] += 0.5 * len;
            w[j] += 0.5 * len;
        }
        w
    }

    /// Containing triangle and barycentric coordinates of `p`.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for (i, t) in self.triangles.iter().enumerate() {
            let [a, b, c] = [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]];
            let area = orient(a, b, c);
            let l = [orient(p, b, c) / area, orient(a, p, c) / area, orient(a, b, p) / area];
            let worst = l.iter().copied().fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(_, _, w)| worst > w) {
                best = Some((i, l, worst));
            }
            if worst >= 0.0 {
                return Some((i, l));
            }
        }
        best.filter(|&(_, _, w)| w > -1e-9).map(|(i, l, _)| (i, l))
    }

    /// Plain-text dump: VERTICES, TRIANGLES and BOUNDARY_EDGES sections with
    /// 17 significant digits per float.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "VERTICES {}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e}", p.x, p.y);
        }
        let _ = writeln!(s, "TRIANGLES {}", self.triangles.len());
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            let tag = match r {
                Region::OutsideD => 0,
                Region::InsideD => 1,
            };
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], tag);
        }
        let nb = self.boundary.len();
        let _ = writeln!(s, "BOUNDARY_EDGES {nb}");
        for i in 0..nb {
            let n = self.boundary_normals[i];
            let _ = writeln!(s, "{} {} {:.16e} {:.16e}", self.boundary[i], self.boundary[(i + 1) % nb], n.x, n.y);
        }
        s
    }
}

/// Parsed contents of a mesh or field dump.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeshDump {
    pub vertices: Vec<Point>,
    pub triangles: Vec<([usize; 3], u8)>,
    pub boundary_edges: Vec<(usize, usize, Point)>,
    pub values: Vec<f64>,
}

pub fn parse_dump(text: &str) -> Result<MeshDump, MeshError> {
    let bad = |m: &str| MeshError::Dump(m.to_string());
    let mut out = MeshDump::default();
    let mut lines = text.lines();
    while let Some(header) = lines.next() {
        let mut it = header.split_whitespace();
        let (Some(section), Some(count)) = (it.next(), it.next()) else {
            if header.trim().is_empty() {
                continue;
            }
            return Err(bad(header));
        };
        let count: usize = count.parse().map_err(|_| bad(header))?;
        for _ in 0..count {
            let line = lines.next().ok_or_else(|| bad("truncated section"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64, MeshError> { f.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad(line)) };
            let idx = |i: usize| -> Result<usize, MeshError> { f.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad(line)) };
            match section {
                "VERTICES" => out.vertices.push(Point::new(num(0)?, num(1)?)),
                "TRIANGLES" => out.triangles.push(([idx(0)?, idx(1)?, idx(2)?], idx(3)? as u8)),
                "BOUNDARY_EDGES" => out.boundary_edges.push((idx(0)?, idx(1)?, Point::new(num(2)?, num(3)?))),
                "VALUES" => out.values.push(num(0)?),
                _ => return Err(bad(section)),
            }
        }
    }
    Ok(out)
}

/// Meshes Ω with D resolved by element edges.
pub fn generate(domain: &DomainSpec, inclusion: &InclusionSpec, target_h: f64) -> Result<Mesh, MeshError> {
    if !(target_h > 0.0 && target_h.is_finite()) {
        return Err(MeshError::BadTargetSize(target_h));
    }
    domain.validate()?;
    let margin = geometry::inclusion_margin(domain, inclusion)?.distance;
    let outer = domain.shape.clone();
    let inner = inclusion.shape();

    // Progressively stricter area caps if the first pass misses the size bound.
    let attempts = [(25.0, 0.45), (25.0, 0.4), (22.0, 0.35)];
    let mut last = (0.0, f64::INFINITY);
    for &(angle, area_factor) in &attempts {
        let mesh = build(&outer, inner.as_ref(), margin, target_h, angle, area_factor)?;
        let (min_angle, h_max) = (mesh.min_angle_deg(), mesh.h_max);
        if min_angle >= MIN_ANGLE_DEG && h_max <= H_MAX_FACTOR * target_h {
            return Ok(mesh);
        }
        last = (min_angle, h_max);
    }
    Err(MeshError::Quality { attempts: attempts.len(), min_angle_deg: last.0, h_max: last.1, target_h })
}

/// Samples at (nearly) equal arc length, at least `min_count`, always even.
fn curve_samples(shape: &Shape, spacing: f64, min_count: usize) -> Vec<(Point, f64)> {
    let n = ((shape.perimeter() / spacing).ceil() as usize).max(min_count);
    let n = n + n % 2;
    // cumulative arc length on a fine parameter grid, trapezoid in speed
    let fine = 64 * n;
    let dt = TAU / fine as f64;
    let mut cumulative = Vec::with_capacity(fine + 1);
    cumulative.push(0.0);
    let mut prev = shape.velocity(0.0).norm();
    for i in 1..=fine {
        let cur = shape.velocity(i as f64 * dt).norm();
        cumulative.push(cumulative[i - 1] + 0.5 * (prev + cur) * dt);
        prev = cur;
    }
    let total = cumulative[fine];
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let target = total * i as f64 / n as f64;
        while cumulative[k + 1] < target {
            k += 1;
        }
        let frac = (target - cumulative[k]) / (cumulative[k + 1] - cumulative[k]);
        let t = (k as f64 + frac) * dt;
        out.push((shape.point(t), t));
    }
    out
}

/// Rows of points at normal offsets `k·(√3/2)·spacing` from the curve, each
/// row shifted half a sample along it. `side = -1` goes inward. Rows stop
/// before the offset reaches a third of the smallest radius of curvature.
fn offset_layers(shape: &Shape, samples: &[(Point, f64)], rows: usize, side: f64) -> Vec<Point> {
    let n = samples.len();
    let reach = 1.0 / (3.0 * shape.max_curvature(4 * n).max(1e-12));
    let mut out = Vec::new();
    for k in 1..=rows {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let (p0, t0) = samples[j];
            let (p1, mut t1) = samples[(j + 1) % n];
            if t1 <= t0 {
                t1 += TAU;
            }
            let t = if k % 2 == 1 { 0.5 * (t0 + t1) } else { t0 };
            let offset = k as f64 * 0.5 * 3f64.sqrt() * p0.dist(p1);
            if offset > reach {
                return out;
            }
            // the curve normal points outward
            row.push(shape.point(t) + shape.normal(t) * (side * offset));
        }
        out.extend(row);
    }
    out
}

fn build(outer: &Shape, inner: Option<&Shape>, margin: f64, h: f64, angle_deg: f64, area_factor: f64) -> Result<Mesh, MeshError> {
    let outer_samples = curve_samples(outer, h, 64);
    let inner_samples = inner.map(|s| curve_samples(s, h, 32)).unwrap_or_default();
    let outer_poly: Vec<Point> = outer_samples.iter().map(|s| s.0).collect();
    let inner_poly: Vec<Point> = inner_samples.iter().map(|s| s.0).collect();

    // Staggered offset rows along each curve give a locally structured strip
    // next to ∂Ω and on both sides of ∂D.
    // In a thin gap between ∂D and ∂Ω drop interface rows first, then outer ones.
    let row = 0.5 * 3f64.sqrt() * h;
    let (mut outer_rows, mut gap_rows) = (OUTER_LAYERS, INTERFACE_LAYERS);
    while (outer_rows + gap_rows) as f64 * row + 0.8 * h > margin && outer_rows > 0 {
        if gap_rows > 0 {
            gap_rows -= 1;
        } else {
            outer_rows -= 1;
        }
    }
    let outer_layers = offset_layers(outer, &outer_samples, outer_rows, -1.0);
    let mut inner_layers = Vec::new();
    if let Some(s) = inner {
        inner_layers = offset_layers(s, &inner_samples, gap_rows, 1.0);
        inner_layers.extend(offset_layers(s, &inner_samples, INTERFACE_LAYERS, -1.0));
        // keep interface rows clear of the outer strip
        let keep = 0.5 * h;
        inner_layers.retain(|&p| polyline_distance(&outer_poly, p, keep) >= keep && outer.contains(p));
    }
    let outer_depth = outer_layers.iter().map(|&p| polyline_distance(&outer_poly, p, 0.0)).fold(0.0, f64::max);
    let inner_depth = inner_layers.iter().map(|&p| polyline_distance(&inner_poly, p, 0.0)).fold(0.0, f64::max);

    // Lattice points kept clear of both curves and their strips.
    let clearance = 0.45 * h;
    let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in &outer_poly {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let center = outer.center();
    let dy = h * 3f64.sqrt() / 2.0;
    // The lattice also covers a band outside Ω so that the region between the
    // convex hull and a concave boundary is made of well-shaped triangles.
    let (j0, j1) = (((lo.y - center.y) / dy).floor() as i64 - 3, ((hi.y - center.y) / dy).ceil() as i64 + 3);
    let (i0, i1) = (((lo.x - center.x) / h).floor() as i64 - 3, ((hi.x - center.x) / h).ceil() as i64 + 3);
    let mut lattice = Vec::new();
    for j in j0..=j1 {
        let shift = if j.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
        for i in i0..=i1 {
            let p = center + Point::new(i as f64 * h + shift, j as f64 * dy);
            let outer_gap = clearance + outer_depth;
            if polyline_distance(&outer_poly, p, outer_gap) < outer_gap {
                continue;
            }
            let inner_gap = clearance + inner_depth;
            if !inner_poly.is_empty() && polyline_distance(&inner_poly, p, inner_gap) < inner_gap {
                continue;
            }
            lattice.push(p);
        }
    }

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let insert = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>, p: Point| {
        cdt.insert(Point2::new(p.x, p.y)).map_err(|e| MeshError::Triangulation(format!("{e:?}")))
    };
    let mut tags: Vec<Option<CurveTag>> = Vec::new();
    let mut outer_handles = Vec::with_capacity(outer_samples.len());
    for &(p, t) in &outer_samples {
        outer_handles.push(insert(&mut cdt, p)?);
        tags.push(Some(CurveTag { curve: Curve::Outer, param: t }));
    }
    let mut inner_handles = Vec::with_capacity(inner_samples.len());
    for &(p, t) in &inner_samples {
        inner_handles.push(insert(&mut cdt, p)?);
        tags.push(Some(CurveTag { curve: Curve::Interface, param: t }));
    }
    for &p in outer_layers.iter().chain(&inner_layers).chain(&lattice) {
        insert(&mut cdt, p)?;
        tags.push(None);
    }
    if cdt.num_vertices() != tags.len() {
        return Err(MeshError::Triangulation("duplicate input points".into()));
    }
    for handles in [&outer_handles, &inner_handles] {
        let n = handles.len();
        for i in 0..n {
            cdt.add_constraint(handles[i], handles[(i + 1) % n]);
        }
    }
    let max_area = area_factor * h * h;
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(angle_deg))
        .with_max_allowed_area(max_area)
        .with_max_additional_vertices(20 * tags.len() + 1000)
        .keep_constraint_edges();
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(MeshError::Triangulation("refinement vertex budget exhausted".into()));
    }

    let vertices: Vec<Point> = cdt.vertices().map(|v| Point::new(v.position().x, v.position().y)).collect();
    tags.resize(vertices.len(), None);
    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    for face in cdt.inner_faces() {
        let vs = face.vertices();
        let t = [vs[0].fix().index(), vs[1].fix().index(), vs[2].fix().index()];
        let c = (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) * (1.0 / 3.0);
        if !geometry::point_in_polygon(&outer_poly, c) {
            continue;
        }
        let region = if !inner_poly.is_empty() && geometry::point_in_polygon(&inner_poly, c) {
            Region::InsideD
        } else {
            Region::OutsideD
        };
        triangles.push(if orient(vertices[t[0]], vertices[t[1]], vertices[t[2]]) > 0.0 { t } else { [t[0], t[2], t[1]] });
        regions.push(region);
    }
    if triangles.is_empty() {
        return Err(MeshError::Triangulation("no triangles inside the domain".into()));
    }

    // Drop vertices not used by any kept triangle (outside parts of a non-convex hull).
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept_vertices = Vec::new();
    let mut kept_tags = Vec::new();
    for t in &mut triangles {
        for v in t.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = kept_vertices.len();
                kept_vertices.push(vertices[*v]);
                kept_tags.push(tags[*v]);
            }
            *v = remap[*v];
        }
    }
    // Keep a stable, geometry-independent vertex order: sort by original index.
    let mut order: Vec<usize> = (0..remap.len()).filter(|&v| remap[v] != usize::MAX).collect();
    order.sort_unstable();
    let mut final_index = vec![0; kept_vertices.len()];
    let mut final_vertices = Vec::with_capacity(order.len());
    let mut final_tags = Vec::with_capacity(order.len());
    for (new, &old) in order.iter().enumerate() {
        final_index[remap[old]] = new;
        final_vertices.push(vertices[old]);
        final_tags.push(tags[old]);
    }
    for t in &mut triangles {
        for v in t.iter_mut() {
            *v = final_index[*v];
        }
    }

    let boundary = boundary_loop(&triangles, final_tags.iter().position(|t| t.is_some()))?;
    let interface = interface_loop(&triangles, &regions)?;
    let mut mesh = Mesh {
        id: next_id(),
        vertices: final_vertices,
        triangles,
        regions,
        boundary,
        boundary_normals: Vec::new(),
        interface,
        curve_tags: final_tags,
        outer: Some(outer.clone()),
        inner: inner.cloned(),
        h_max: 0.0,
    };
    project_untagged(&mut mesh, Curve::Outer);
    project_untagged(&mut mesh, Curve::Interface);
    if (0..mesh.triangles.len()).any(|t| mesh.triangle_area(t) <= 0.0) {
        return Err(MeshError::Triangulation("curve projection inverted a triangle".into()));
    }
    mesh.finish();
    Ok(mesh)
}

/// Vertices inserted on a chord by refinement get a parameter interpolated
/// between the tagged loop neighbours and are moved onto the curve.
fn project_untagged(mesh: &mut Mesh, curve: Curve) {
    let (lp, shape) = match curve {
        Curve::Outer => (mesh.boundary.clone(), mesh.outer.clone()),
        Curve::Interface => (mesh.interface.clone(), mesh.inner.clone()),
    };
    let Some(shape) = shape else { return };
    let n = lp.len();
    let Some(start) = (0..n).find(|&i| mesh.curve_tags[lp[i]].is_some()) else { return };
    let mut i = 0;
    while i < n {
        let a = (start + i) % n;
        let mut j = i + 1;
        while j <= n && mesh.curve_tags[lp[(start + j) % n]].is_none() {
            j += 1;
        }
        if j > i + 1 {
            let b = (start + j) % n;
            let ta = mesh.curve_tags[lp[a]].expect("tagged").param;
            let mut tb = mesh.curve_tags[lp[b]].expect("tagged").param;
            if tb <= ta {
                tb += TAU;
            }
            // arc position measured along the chain of chords
            let mut acc = vec![0.0];
            for k in i + 1..=j {
                let prev = mesh.vertices[lp[(start + k - 1) % n]];
                let cur = mesh.vertices[lp[(start + k) % n]];
                acc.push(acc.last().unwrap() + prev.dist(cur));
            }
            let total = *acc.last().unwrap();
            for k in i + 1..j {
                let v = lp[(start + k) % n];
                let param = (ta + (tb - ta) * acc[k - i] / total).rem_euclid(TAU);
                mesh.vertices[v] = shape.point(param);
                mesh.curve_tags[v] = Some(CurveTag { curve, param });
            }
        }
        i = j;
    }
}

/// Closed counterclockwise loop of edges that belong to a single triangle.
fn boundary_loop(triangles: &[[usize; 3]], start: Option<usize>) -> Result<Vec<usize>, MeshError> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    if count.values().any(|&c| c > 2) {
        return Err(MeshError::Triangulation("non-manifold edge".into()));
    }
    let mut directed = Vec::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if count[&(a.min(b), a.max(b))] == 1 {
                directed.push((a, b));
            }
        }
    }
    chain(directed, start)
}

/// Loop of edges between inside-D and outside-D triangles, oriented
/// counterclockwise around D.
fn interface_loop(triangles: &[[usize; 3]], regions: &[Region]) -> Result<Vec<usize>, MeshError> {
    let mut outside_edges = HashMap::new();
    for (t, r) in triangles.iter().zip(regions) {
        if *r == Region::OutsideD {
            for k in 0..3 {
                outside_edges.insert((t[(k + 1) % 3], t[k]), ());
            }
        }
    }
    let mut directed = Vec::new();
    for (t, r) in triangles.iter().zip(regions) {
        if *r == Region::InsideD {
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                if outside_edges.contains_key(&e) {
                    directed.push(e);
                }
            }
        }
    }
    if directed.is_empty() {
        return Ok(Vec::new());
    }
    let start = directed.iter().map(|e| e.0).min();
    chain(directed, start)
}

fn chain(directed: Vec<(usize, usize)>, start: Option<usize>) -> Result<Vec<usize>, MeshError> {
    let mut next = HashMap::new();
    for &(a, b) in &directed {
        if next.insert(a, b).is_some() {
            return Err(MeshError::Triangulation("loop is not simple".into()));
        }
    }
    let first = match start {
        Some(s) if next.contains_key(&s) => s,
        _ => directed.iter().map(|e| e.0).min().ok_or_else(|| MeshError::Triangulation("empty loop".into()))?,
    };
    let mut out = vec![first];
    let mut cur = next[&first];
    while cur != first {
        out.push(cur);
        cur = *next.get(&cur).ok_or_else(|| MeshError::Triangulation("open loop".into()))?;
        if out.len() > directed.len() {
            return Err(MeshError::Triangulation("loop does not close".into()));
        }
    }
    if out.len() != directed.len() {
        return Err(MeshError::Triangulation(format!(
            "expected a single loop, found {} of {} edges",
            out.len(),
            directed.len()
        )));
    }
    Ok(out)
}

/// Uniform red refinement; midpoints of boundary and interface edges are
/// placed on the analytic curves at the mid-parameter.
pub fn refine(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut tags = mesh.curve_tags.clone();
    let nb = mesh.boundary.len();
    let ni = mesh.interface.len();
    let mut curve_edges: HashMap<(usize, usize), Curve> = HashMap::new();
    for i in 0..nb {
        let (a, b) = (mesh.boundary[i], mesh.boundary[(i + 1) % nb]);
        curve_edges.insert((a.min(b), a.max(b)), Curve::Outer);
    }
    for i in 0..ni {
        let (a, b) = (mesh.interface[i], mesh.interface[(i + 1) % ni]);
        curve_edges.insert((a.min(b), a.max(b)), Curve::Interface);
    }
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>, tags: &mut Vec<Option<CurveTag>>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let mut p = (vertices[a] + vertices[b]) * 0.5;
        let mut tag = None;
        if let Some(&curve) = curve_edges.get(&key) {
            let shape = match curve {
                Curve::Outer => mesh.outer.as_ref(),
                Curve::Interface => mesh.inner.as_ref(),
            };
            if let (Some(shape), Some(ta), Some(tb)) = (shape, tags[a], tags[b]) {
                let (mut s, mut t) = (ta.param, tb.param);
                if (t - s).abs() > std::f64::consts::PI {
                    if s < t {
                        s += TAU;
                    } else {
                        t += TAU;
                    }
                }
                let param = (0.5 * (s + t)).rem_euclid(TAU);
                p = shape.point(param);
                tag = Some(CurveTag { curve, param });
            }
        }
        vertices.push(p);
        tags.push(tag);
        midpoint.insert(key, vertices.len() - 1);
        vertices.len() - 1
    };
    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    let mut regions = Vec::with_capacity(4 * mesh.triangles.len());
    for (t, r) in mesh.triangles.iter().zip(&mesh.regions) {
        let [a, b, c] = *t;
        let ab = mid(a, b, &mut vertices, &mut tags);
        let bc = mid(b, c, &mut vertices, &mut tags);
        let ca = mid(c, a, &mut vertices, &mut tags);
        triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        regions.extend([*r; 4]);
    }
    let refine_loop = |lp: &[usize]| -> Vec<usize> {
        let n = lp.len();
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            let (a, b) = (lp[i], lp[(i + 1) % n]);
            out.push(a);
            out.push(midpoint[&(a.min(b), a.max(b))]);
        }
        out
    };
    let mut refined = Mesh {
        id: next_id(),
        boundary: refine_loop(&mesh.boundary),
        interface: refine_loop(&mesh.interface),
        vertices,
        triangles,
        regions,
        boundary_normals: Vec::new(),
        curve_tags: tags,
        outer: mesh.outer.clone(),
        inner: mesh.inner.clone(),
        h_max: 0.0,
    };
    refined.finish();
    refined
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

fn min_angle(p: [Point; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let (u, v) = (b - a, c - a);
            u.cross(v).abs().atan2(u.dot(v)).to_degrees()
        })
        .fold(180.0, f64::min)
}

/// Distance from `p` to a closed polyline, with early exit once below `stop`.
fn polyline_distance(poly: &[Point], p: Point, stop: f64) -> f64 {
    let n = poly.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let d = geometry::segment_distance(p, poly[i], poly[(i + 1) % n]);
        if d < best {
            best = d;
            if best < stop {
                break;
            }
        }
    }
    best
}
