//! Parametric domains and inclusions, and the geometric quantities derived
//! from them: area, perimeter, the Serrin constant `c = -|Ω|/|∂Ω|`, the
//! inner/outer radii about a point, the diameter and the inclusion margin.
//!
//! Every curve is parametrized over `t ∈ [0, 2π)` counterclockwise. Polygons
//! are only carriers for quadrature and meshing; exact quantities are taken
//! from the analytic curve whenever possible.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TAU: f64 = 2.0 * PI;
const GOLDEN_TOL: f64 = 1e-10;
const PERIMETER_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("boundary_samples must be even and at least 64, got {0}")]
    BadSampleCount(usize),
    #[error("point ({x}, {y}) is not strictly inside the domain")]
    NotInside { x: f64, y: f64 },
    #[error("inclusion is not compactly contained in the domain (margin {margin:.3e})")]
    InclusionNotContained { margin: f64 },
    #[error("polygon is degenerate: {0}")]
    DegeneratePolygon(String),
    #[error("area and perimeter must be positive (area {area}, perimeter {perimeter})")]
    NonPositiveMeasure { area: f64, perimeter: f64 },
}

/// A point or vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        Point::new(self.x / n, self.y / n)
    }

    /// Counterclockwise rotation by 90 degrees.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// A smooth closed curve bounding a star-shaped region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Disk {
        #[serde(default)]
        center: Point,
        #[serde(alias = "R", alias = "r")]
        radius: f64,
    },
    /// Semi-axis `a` along x, `b` along y, with `a >= b`.
    Ellipse {
        #[serde(default)]
        center: Point,
        a: f64,
        b: f64,
    },
    /// `r(t) = r0 (1 + amplitude cos(mode t))`.
    Star {
        #[serde(default)]
        center: Point,
        r0: f64,
        amplitude: f64,
        mode: u32,
    },
}

impl Shape {
    pub fn disk(radius: f64) -> Self {
        Shape::Disk { center: Point::ORIGIN, radius }
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Shape::Ellipse { center: Point::ORIGIN, a, b }
    }

    pub fn star(r0: f64, amplitude: f64, mode: u32) -> Self {
        Shape::Star { center: Point::ORIGIN, r0, amplitude, mode }
    }

    pub fn with_center(mut self, c: Point) -> Self {
        match &mut self {
            Shape::Disk { center, .. } | Shape::Ellipse { center, .. } | Shape::Star { center, .. } => {
                *center = c
            }
        }
        self
    }

    pub fn center(&self) -> Point {
        match *self {
            Shape::Disk { center, .. } | Shape::Ellipse { center, .. } | Shape::Star { center, .. } => center,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite_center = {
            let c = self.center();
            c.x.is_finite() && c.y.is_finite()
        };
        if !finite_center {
            return Err(GeometryError::InvalidShape("center must be finite".into()));
        }
        match *self {
            Shape::Disk { radius, .. } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(GeometryError::InvalidShape(format!("disk radius must be positive, got {radius}")));
                }
            }
            Shape::Ellipse { a, b, .. } => {
                if !(b > 0.0 && a >= b && a.is_finite()) {
                    return Err(GeometryError::InvalidShape(format!(
                        "ellipse needs a >= b > 0, got a={a}, b={b}"
                    )));
                }
            }
            Shape::Star { r0, amplitude, mode, .. } => {
                if !(r0 > 0.0 && r0.is_finite()) {
                    return Err(GeometryError::InvalidShape(format!("star base radius must be positive, got {r0}")));
                }
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(GeometryError::InvalidShape(format!(
                        "star amplitude must lie in [0, 1), got {amplitude}"
                    )));
                }
                if mode == 0 {
                    return Err(GeometryError::InvalidShape("star mode must be at least 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Curve point at parameter `t`.
    pub fn point(&self, t: f64) -> Point {
        let (c, s) = (t.cos(), t.sin());
        match *self {
            Shape::Disk { center, radius } => center + Point::new(radius * c, radius * s),
            Shape::Ellipse { center, a, b } => center + Point::new(a * c, b * s),
            Shape::Star { center, r0, amplitude, mode } => {
                let r = r0 * (1.0 + amplitude * (mode as f64 * t).cos());
                center + Point::new(r * c, r * s)
            }
        }
    }

    /// First derivative of the parametrization.
    pub fn velocity(&self, t: f64) -> Point {
        let (c, s) = (t.cos(), t.sin());
        match *self {
            Shape::Disk { radius, .. } => Point::new(-radius * s, radius * c),
            Shape::Ellipse { a, b, .. } => Point::new(-a * s, b * c),
            Shape::Star { r0, amplitude, mode, .. } => {
                let k = mode as f64;
                let r = r0 * (1.0 + amplitude * (k * t).cos());
                let dr = -r0 * amplitude * k * (k * t).sin();
                Point::new(dr * c - r * s, dr * s + r * c)
            }
        }
    }

    fn acceleration(&self, t: f64) -> Point {
        let (c, s) = (t.cos(), t.sin());
        match *self {
            Shape::Disk { radius, .. } => Point::new(-radius * c, -radius * s),
            Shape::Ellipse { a, b, .. } => Point::new(-a * c, -b * s),
            Shape::Star { r0, amplitude, mode, .. } => {
                let k = mode as f64;
                let r = r0 * (1.0 + amplitude * (k * t).cos());
                let dr = -r0 * amplitude * k * (k * t).sin();
                let ddr = -r0 * amplitude * k * k * (k * t).cos();
                Point::new(ddr * c - 2.0 * dr * s - r * c, ddr * s + 2.0 * dr * c - r * s)
            }
        }
    }

    /// Outward unit normal at parameter `t`.
    pub fn normal(&self, t: f64) -> Point {
        let v = self.velocity(t);
        Point::new(v.y, -v.x).normalized()
    }

    /// Signed curvature (positive for convex arcs).
    pub fn curvature(&self, t: f64) -> f64 {
        let v = self.velocity(t);
        let acc = self.acceleration(t);
        v.cross(acc) / v.norm().powi(3)
    }

    pub fn max_curvature(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|i| self.curvature(TAU * i as f64 / samples as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Exact enclosed area.
    pub fn area(&self) -> f64 {
        match *self {
            Shape::Disk { radius, .. } => PI * radius * radius,
            Shape::Ellipse { a, b, .. } => PI * a * b,
            Shape::Star { r0, amplitude, .. } => PI * r0 * r0 * (1.0 + 0.5 * amplitude * amplitude),
        }
    }

    /// Arc length, by adaptive Simpson quadrature of `|γ'(t)|`.
    pub fn perimeter(&self) -> f64 {
        match *self {
            Shape::Disk { radius, .. } => TAU * radius,
            _ => {
                let speed = |t: f64| self.velocity(t).norm();
                // Split into quarters so the initial Simpson estimate cannot alias a symmetric integrand.
                (0..4)
                    .map(|q| {
                        let lo = q as f64 * PI / 2.0;
                        adaptive_simpson(&speed, lo, lo + PI / 2.0, PERIMETER_TOL / 4.0, 40)
                    })
                    .sum()
            }
        }
    }

    /// Strict interior test against the analytic curve.
    pub fn contains(&self, p: Point) -> bool {
        let d = p - self.center();
        match *self {
            Shape::Disk { radius, .. } => d.norm() < radius,
            Shape::Ellipse { a, b, .. } => (d.x / a).powi(2) + (d.y / b).powi(2) < 1.0,
            Shape::Star { r0, amplitude, mode, .. } => {
                let theta = d.y.atan2(d.x);
                d.norm() < r0 * (1.0 + amplitude * (mode as f64 * theta).cos())
            }
        }
    }

    /// Parameter of the curve point nearest to `p` and its distance.
    ///
    /// Dense sampling with `samples` points, then golden-section refinement on
    /// the bracketing parameter interval.
    pub fn nearest(&self, p: Point, samples: usize) -> (f64, f64) {
        let f = |t: f64| self.point(t).dist(p);
        let (t, d) = refine_extremum(&f, samples, Extremum::Min);
        (t, d)
    }

    pub fn distance_to(&self, p: Point, samples: usize) -> f64 {
        self.nearest(p, samples).1
    }

    /// Scales the shape about the origin.
    pub fn scaled(&self, s: f64) -> Shape {
        match *self {
            Shape::Disk { center, radius } => Shape::Disk { center: center * s, radius: radius * s },
            Shape::Ellipse { center, a, b } => Shape::Ellipse { center: center * s, a: a * s, b: b * s },
            Shape::Star { center, r0, amplitude, mode } => Shape::Star { center: center * s, r0: r0 * s, amplitude, mode },
        }
    }
}

fn default_boundary_samples() -> usize {
    256
}

/// The outer domain Ω.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
}

impl DomainSpec {
    pub fn new(shape: Shape) -> Self {
        Self { shape, boundary_samples: default_boundary_samples() }
    }

    pub fn disk(radius: f64) -> Self {
        Self::new(Shape::disk(radius))
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self::new(Shape::ellipse(a, b))
    }

    pub fn star(r0: f64, amplitude: f64, mode: u32) -> Self {
        Self::new(Shape::star(r0, amplitude, mode))
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.boundary_samples < 64 || self.boundary_samples % 2 != 0 {
            return Err(GeometryError::BadSampleCount(self.boundary_samples));
        }
        self.shape.validate()
    }

    pub fn is_disk(&self) -> bool {
        match self.shape {
            Shape::Disk { .. } => true,
            Shape::Ellipse { a, b, .. } => a == b,
            Shape::Star { amplitude, .. } => amplitude == 0.0,
        }
    }

    pub fn area(&self) -> f64 {
        self.shape.area()
    }

    pub fn perimeter(&self) -> f64 {
        self.shape.perimeter()
    }

    /// `c = -|Ω| / |∂Ω|` from the analytic curve.
    pub fn serrin_constant(&self) -> f64 {
        -self.area() / self.perimeter()
    }

    pub fn diameter(&self) -> f64 {
        diameter(&self.shape, self.boundary_samples)
    }

    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.shape.distance_to(p, self.boundary_samples)
    }
}

/// The inclusion D (possibly absent).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InclusionSpec {
    #[default]
    None,
    Disk {
        #[serde(default)]
        center: Point,
        #[serde(alias = "R", alias = "r")]
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        center: Point,
        a: f64,
        b: f64,
    },
}

impl InclusionSpec {
    pub fn disk(center: Point, radius: f64) -> Self {
        InclusionSpec::Disk { center, radius }
    }

    pub fn shape(&self) -> Option<Shape> {
        match *self {
            InclusionSpec::None => None,
            InclusionSpec::Disk { center, radius } => Some(Shape::Disk { center, radius }),
            InclusionSpec::Ellipse { center, a, b } => Some(Shape::Ellipse { center, a, b }),
        }
    }

    pub fn area(&self) -> f64 {
        self.shape().map_or(0.0, |s| s.area())
    }
}

/// Discrete closed boundary: counterclockwise vertices, per-vertex arc-length
/// weights (half the adjacent edge lengths) and per-edge outward normals.
/// Edge `i` joins vertex `i` to vertex `i + 1 (mod n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolygonalBoundary {
    pub vertices: Vec<Point>,
    pub weights: Vec<f64>,
    pub normals: Vec<Point>,
}

impl PolygonalBoundary {
    pub fn from_vertices(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::DegeneratePolygon(format!("{n} vertices")));
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(GeometryError::DegeneratePolygon("not counterclockwise".into()));
        }
        let mut weights = vec![0.0; n];
        let mut normals = Vec::with_capacity(n);
        for i in 0..n {
            let j = (i + 1) % n;
            let e = vertices[j] - vertices[i];
            let len = e.norm();
            if len == 0.0 {
                return Err(GeometryError::DegeneratePolygon(format!("repeated vertex {i}")));
            }
            weights[i] += 0.5 * len;
            weights[j] += 0.5 * len;
            normals.push(Point::new(e.y / len, -e.x / len));
        }
        Ok(Self { vertices, weights, normals })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        point_in_polygon(&self.vertices, p)
    }

    /// Distance from `p` to the polygon edges.
    pub fn distance_to(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Samples `n` vertices at equispaced parameter values.
pub fn polygonize(spec: &DomainSpec, n: usize) -> Result<PolygonalBoundary, GeometryError> {
    spec.shape.validate()?;
    polygonize_shape(&spec.shape, n)
}

pub(crate) fn polygonize_shape(shape: &Shape, n: usize) -> Result<PolygonalBoundary, GeometryError> {
    if n < 3 {
        return Err(GeometryError::BadSampleCount(n));
    }
    let vertices = (0..n).map(|i| shape.point(TAU * i as f64 / n as f64)).collect();
    PolygonalBoundary::from_vertices(vertices)
}

/// Shoelace area and total edge length.
pub fn area_perimeter(poly: &PolygonalBoundary) -> (f64, f64) {
    (signed_area(&poly.vertices), poly.weights.iter().sum())
}

/// `c = -area / perimeter`.
pub fn serrin_constant(area: f64, perimeter: f64) -> Result<f64, GeometryError> {
    if !(area > 0.0 && perimeter > 0.0) {
        return Err(GeometryError::NonPositiveMeasure { area, perimeter });
    }
    Ok(-area / perimeter)
}

/// Inner and outer radii `(ρ_i, ρ_e)` of ∂Ω about `z`: the minimum and
/// maximum distance from `z` to the curve.
pub fn rho_bounds(spec: &DomainSpec, z: Point) -> Result<(f64, f64), GeometryError> {
    spec.validate()?;
    let shape = &spec.shape;
    let inside = shape.contains(z) && shape.distance_to(z, spec.boundary_samples) > 1e-12;
    if !inside {
        return Err(GeometryError::NotInside { x: z.x, y: z.y });
    }
    let f = |t: f64| shape.point(t).dist(z);
    let (_, rho_i) = refine_extremum(&f, spec.boundary_samples, Extremum::Min);
    let (_, rho_e) = refine_extremum(&f, spec.boundary_samples, Extremum::Max);
    Ok((rho_i, rho_e.max(rho_i)))
}

/// Distance from D to ∂Ω and the associated `M = max(1, 1/margin)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin {
    pub distance: f64,
    pub m: f64,
}

pub fn inclusion_margin(domain: &DomainSpec, inclusion: &InclusionSpec) -> Result<Margin, GeometryError> {
    domain.validate()?;
    let Some(inner) = inclusion.shape() else {
        return Ok(Margin { distance: f64::INFINITY, m: 1.0 });
    };
    inner.validate()?;
    let outer = &domain.shape;
    let n = domain.boundary_samples;
    // every sample of ∂D must sit strictly inside Ω
    let outside = (0..n).any(|i| !outer.contains(inner.point(TAU * i as f64 / n as f64)));
    if outside || !outer.contains(inner.center()) {
        return Err(GeometryError::InclusionNotContained { margin: 0.0 });
    }
    let f = |t: f64| outer.distance_to(inner.point(t), n);
    let (_, distance) = refine_extremum(&f, n, Extremum::Min);
    if distance <= 0.0 {
        return Err(GeometryError::InclusionNotContained { margin: distance });
    }
    Ok(Margin { distance, m: (1.0 / distance).max(1.0) })
}

/// Largest distance between two curve points.
pub fn diameter(shape: &Shape, samples: usize) -> f64 {
    let pts: Vec<Point> = (0..samples).map(|i| shape.point(TAU * i as f64 / samples as f64)).collect();
    let (mut bi, mut bj, mut best) = (0, 0, 0.0);
    for i in 0..samples {
        for j in i + 1..samples {
            let d = pts[i].dist(pts[j]);
            if d > best {
                (bi, bj, best) = (i, j, d);
            }
        }
    }
    let h = TAU / samples as f64;
    let (mut s, mut t) = (TAU * bi as f64 / samples as f64, TAU * bj as f64 / samples as f64);
    for _ in 0..8 {
        let ps = shape.point(t);
        s = golden_section(|u| -shape.point(u).dist(ps), s - h, s + h, GOLDEN_TOL);
        let pt = shape.point(s);
        t = golden_section(|u| -shape.point(u).dist(pt), t - h, t + h, GOLDEN_TOL);
    }
    shape.point(s).dist(shape.point(t)).max(best)
}

pub(crate) fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n).map(|i| vertices[i].cross(vertices[(i + 1) % n])).sum::<f64>()
}

pub(crate) fn point_in_polygon(vertices: &[Point], p: Point) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

pub(crate) fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Extremum {
    Min,
    Max,
}

/// Dense periodic sampling of `f` over `[0, 2π)` followed by golden-section
/// refinement around the best sample.
fn refine_extremum(f: &dyn Fn(f64) -> f64, samples: usize, which: Extremum) -> (f64, f64) {
    let sign = if which == Extremum::Min { 1.0 } else { -1.0 };
    let h = TAU / samples as f64;
    let (mut best_t, mut best) = (0.0, f64::INFINITY);
    for i in 0..samples {
        let t = h * i as f64;
        let v = sign * f(t);
        if v < best {
            (best_t, best) = (t, v);
        }
    }
    let t = golden_section(|t| sign * f(t), best_t - h, best_t + h, GOLDEN_TOL);
    let v = sign * f(t);
    if v < best {
        (t.rem_euclid(TAU), sign * v)
    } else {
        (best_t, sign * best)
    }
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn inscribed_square() {
        let poly = polygonize_shape(&Shape::disk(1.0), 4).unwrap();
        let (area, _) = area_perimeter(&poly);
        assert!(close(area, 2.0, 1e-14));
    }

    #[test]
    fn polygonize_rejects_small_or_odd_counts_through_spec() {
        let mut spec = DomainSpec::disk(1.0);
        spec.boundary_samples = 63;
        assert!(spec.validate().is_err());
        spec.boundary_samples = 66;
        assert!(spec.validate().is_ok());
        assert!(polygonize(&DomainSpec::disk(-1.0), 128).is_err());
        assert!(polygonize(&DomainSpec::star(1.0, 1.0, 3), 128).is_err());
    }

    #[test]
    fn disk_polygon_area_matches_inscribed_formula() {
        let n = 2048;
        let poly = polygonize(&DomainSpec::disk(1.0), n).unwrap();
        let (area, perimeter) = area_perimeter(&poly);
        let nf = n as f64;
        let exact_area = nf * (TAU / nf).sin() / 2.0;
        let exact_perim = 2.0 * nf * (PI / nf).sin();
        assert!(close(area, exact_area, 1e-12));
        assert!(close(perimeter, exact_perim, 1e-12));
        assert!(close(area, PI, 1e-5));
        assert!(close(perimeter, TAU, 1e-4));
    }

    #[test]
    fn star_without_amplitude_is_the_disk() {
        let a = polygonize(&DomainSpec::star(1.0, 0.0, 5), 256).unwrap();
        let b = polygonize(&DomainSpec::disk(1.0), 256).unwrap();
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            assert_eq!(p, q);
        }
    }

    #[test]
    fn ellipse_area_and_perimeter() {
        let spec = DomainSpec::ellipse(1.2, 1.0);
        let poly = polygonize(&spec, 4096).unwrap();
        let (area, perimeter) = area_perimeter(&poly);
        assert!(close(area, 3.76991, 1e-3));
        assert!(close(perimeter, 6.9257, 1e-3));
        // Ramanujan's second approximation is accurate to ~1e-12 at this eccentricity
        let (a, b) = (1.2f64, 1.0f64);
        let hh = ((a - b) / (a + b)).powi(2);
        let ramanujan = PI * (a + b) * (1.0 + 3.0 * hh / (10.0 + (4.0 - 3.0 * hh).sqrt()));
        assert!(close(spec.perimeter(), ramanujan, 1e-9));
    }

    #[test]
    fn explicit_square() {
        let sq = PolygonalBoundary::from_vertices(vec![
            Point::new(-1.0, -1.0),
            Point::new(1.0, -1.0),
            Point::new(1.0, 1.0),
            Point::new(-1.0, 1.0),
        ])
        .unwrap();
        assert_eq!(area_perimeter(&sq), (4.0, 8.0));
        for n in &sq.normals {
            assert!(close(n.norm(), 1.0, 1e-12));
        }
        let cw: Vec<Point> = sq.vertices.iter().rev().copied().collect();
        assert!(PolygonalBoundary::from_vertices(cw).is_err());
    }

    #[test]
    fn serrin_constant_examples() {
        assert_eq!(serrin_constant(PI, TAU).unwrap(), -0.5);
        assert!(close(serrin_constant(4.0 * PI, 4.0 * PI).unwrap(), -1.0, 1e-15));
        let e = DomainSpec::ellipse(1.2, 1.0);
        assert!(close(e.serrin_constant(), -3.76991 / 6.9257, 1e-4));
        assert!(serrin_constant(0.0, 1.0).is_err());
        assert!(serrin_constant(1.0, -1.0).is_err());
    }

    #[test]
    fn rho_examples() {
        let (ri, re) = rho_bounds(&DomainSpec::disk(1.0), Point::ORIGIN).unwrap();
        assert!(close(ri, 1.0, 1e-12) && close(re, 1.0, 1e-12));
        let (ri, re) = rho_bounds(&DomainSpec::ellipse(1.2, 1.0), Point::ORIGIN).unwrap();
        assert!(close(ri, 1.0, 1e-12) && close(re, 1.2, 1e-12));
        let (ri, re) = rho_bounds(&DomainSpec::disk(1.0), Point::new(0.3, 0.0)).unwrap();
        assert!(close(ri, 0.7, 1e-12) && close(re, 1.3, 1e-12));
        assert!(rho_bounds(&DomainSpec::disk(1.0), Point::new(1.0, 0.0)).is_err());
        assert!(rho_bounds(&DomainSpec::disk(1.0), Point::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn rho_refinement_beats_sampling() {
        // off-axis point: the nearest boundary point falls between samples
        let spec = DomainSpec::ellipse(1.2, 1.0);
        let z = Point::new(0.137, 0.051);
        let (ri, _) = rho_bounds(&spec, z).unwrap();
        let brute = (0..200_000)
            .map(|i| spec.shape.point(TAU * i as f64 / 200_000.0).dist(z))
            .fold(f64::INFINITY, f64::min);
        assert!(ri <= brute + 1e-12);
        assert!(close(ri, brute, 1e-9));
    }

    #[test]
    fn margin_examples() {
        let dom = DomainSpec::disk(1.0);
        let m = inclusion_margin(&dom, &InclusionSpec::disk(Point::ORIGIN, 0.5)).unwrap();
        assert!(close(m.distance, 0.5, 1e-10) && close(m.m, 2.0, 1e-9));
        let m = inclusion_margin(&dom, &InclusionSpec::disk(Point::new(0.5, 0.0), 0.3)).unwrap();
        assert!(close(m.distance, 0.2, 1e-10) && close(m.m, 5.0, 1e-8));
        assert!(inclusion_margin(&dom, &InclusionSpec::disk(Point::new(0.5, 0.0), 0.6)).is_err());
        let none = inclusion_margin(&dom, &InclusionSpec::None).unwrap();
        assert!(none.distance.is_infinite() && none.m == 1.0);
    }

    #[test]
    fn diameter_of_ellipse_and_star() {
        assert!(close(diameter(&Shape::ellipse(1.2, 1.0), 256), 2.4, 1e-12));
        assert!(close(diameter(&Shape::disk(1.0), 256), 2.0, 1e-12));
        let star = Shape::star(1.0, 0.1, 2);
        assert!(close(diameter(&star, 256), 2.2, 1e-9));
    }

    #[test]
    fn curvature_of_disk_and_ellipse() {
        assert!(close(Shape::disk(2.0).curvature(0.3), 0.5, 1e-14));
        // ellipse curvature at the end of the major axis is a / b^2
        assert!(close(Shape::ellipse(1.2, 1.0).curvature(0.0), 1.2, 1e-12));
    }

    #[test]
    fn json_schema() {
        let spec: DomainSpec = serde_json::from_str(r#"{"kind":"ellipse","a":1.2,"b":1.0}"#).unwrap();
        assert_eq!(spec, DomainSpec::ellipse(1.2, 1.0));
        let inc: InclusionSpec = serde_json::from_str(r#"{"kind":"disk","center":[0.5,0],"radius":0.3}"#).unwrap();
        assert_eq!(inc, InclusionSpec::disk(Point::new(0.5, 0.0), 0.3));
        let none: InclusionSpec = serde_json::from_str(r#"{"kind":"none"}"#).unwrap();
        assert_eq!(none, InclusionSpec::None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn shapes() -> impl Strategy<Value = Shape> {
            prop_oneof![
                (0.2f64..3.0).prop_map(Shape::disk),
                (0.2f64..3.0, 0.3f64..1.0).prop_map(|(b, r)| Shape::ellipse(b / r, b)),
                (0.3f64..2.0, 0.0f64..0.2, 1u32..6).prop_map(|(r, e, k)| Shape::star(r, e, k)),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn serrin_constant_scales_linearly(shape in shapes(), s in 0.3f64..4.0) {
                let spec = DomainSpec::new(shape.clone());
                let scaled = DomainSpec::new(shape.scaled(s));
                let c = spec.serrin_constant();
                let cs = scaled.serrin_constant();
                prop_assert!((cs - s * c).abs() <= 1e-12 * s.max(1.0) * c.abs().max(1.0) * 10.0);
                let p = polygonize(&spec, 512).unwrap();
                let ps = polygonize(&scaled, 512).unwrap();
                let (a, l) = area_perimeter(&p);
                let (as_, ls) = area_perimeter(&ps);
                let ratio = serrin_constant(as_, ls).unwrap() / serrin_constant(a, l).unwrap();
                prop_assert!((ratio - s).abs() <= 1e-12 * s.max(1.0));
            }

            #[test]
            fn outer_radius_bounded_by_diameter(shape in shapes(), fx in -0.3f64..0.3, fy in -0.3f64..0.3) {
                let spec = DomainSpec::new(shape.clone());
                let z = shape.center() + Point::new(fx, fy) * shape.area().sqrt() * 0.3;
                let (ri, re) = rho_bounds(&spec, z).unwrap();
                prop_assert!(ri <= re);
                prop_assert!(re <= spec.diameter() + 1e-12);
            }
        }
    }

    #[test]
    fn gap_vanishes_only_for_centered_disks() {
        let disk = DomainSpec::disk(1.0);
        let (ri, re) = rho_bounds(&disk, Point::ORIGIN).unwrap();
        assert!(re - ri < 1e-12);
        let (ri, re) = rho_bounds(&disk, Point::new(0.01, 0.0)).unwrap();
        assert!(re - ri > 1e-3);
        let (ri, re) = rho_bounds(&DomainSpec::ellipse(1.01, 1.0), Point::ORIGIN).unwrap();
        assert!(re - ri > 1e-3);
        let (ri, re) = rho_bounds(&DomainSpec::star(1.0, 0.02, 3), Point::ORIGIN).unwrap();
        assert!(re - ri > 1e-3);
    }

    #[test]
    fn polygon_convergence_is_second_order() {
        for spec in [DomainSpec::disk(1.0), DomainSpec::ellipse(1.2, 1.0)] {
            let errs: Vec<(f64, f64)> = [64, 128, 256]
                .iter()
                .map(|&n| {
                    let (a, p) = area_perimeter(&polygonize(&spec, n).unwrap());
                    ((a - spec.area()).abs(), (p - spec.perimeter()).abs())
                })
                .collect();
            for w in errs.windows(2) {
                let (ra, rp) = (w[0].0 / w[1].0, w[0].1 / w[1].1);
                assert!((3.5..=4.5).contains(&ra), "area ratio {ra}");
                assert!((3.5..=4.5).contains(&rp), "perimeter ratio {rp}");
            }
        }
    }
}
