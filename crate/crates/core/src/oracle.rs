//! Closed-form reference solutions. Nothing here touches the mesh or the
//! finite-element code, so agreement between the two is a real check.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point {0:?} lies outside the domain of the formula")]
    OutOfDomain(Point),
    #[error("singular evaluation at x = y = {0:?}")]
    Singular(Point),
}

/// Concentric disks `D = B(0, r₀) ⊂ Ω = B(0, R)` with `σ = σ_c` in `D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialTwoPhaseSolution {
    pub outer_radius: f64,
    pub inclusion_radius: f64,
    pub sigma_c: f64,
}

impl RadialTwoPhaseSolution {
    pub fn new(outer_radius: f64, inclusion_radius: f64, sigma_c: f64) -> Result<Self, OracleError> {
        if !(inclusion_radius > 0.0 && inclusion_radius < outer_radius && outer_radius.is_finite()) {
            return Err(OracleError::InvalidParameter(format!("need 0 < r0 < R, got r0={inclusion_radius}, R={outer_radius}")));
        }
        if !(sigma_c > 0.0 && sigma_c.is_finite()) {
            return Err(OracleError::InvalidParameter(format!("sigma_c must be positive, got {sigma_c}")));
        }
        Ok(Self { outer_radius, inclusion_radius, sigma_c })
    }

    fn check(&self, r: f64) -> Result<(), OracleError> {
        if !(0.0..=self.outer_radius).contains(&r) {
            return Err(OracleError::OutOfDomain(Point::new(r, 0.0)));
        }
        Ok(())
    }

    /// `u(r)`, piecewise quadratic.
    pub fn value(&self, r: f64) -> Result<f64, OracleError> {
        self.check(r)?;
        let (big, r0) = (self.outer_radius, self.inclusion_radius);
        Ok(if r >= r0 {
            (big * big - r * r) / 4.0
        } else {
            (big * big - r0 * r0) / 4.0 + (r0 * r0 - r * r) / (4.0 * self.sigma_c)
        })
    }

    /// `u'(r)`; at `r = r₀` the outer one-sided value.
    pub fn derivative(&self, r: f64) -> Result<f64, OracleError> {
        self.check(r)?;
        Ok(-r / (2.0 * self.conductivity(r)))
    }

    /// `σ(r)u'(r) = -r/2` on both sides.
    pub fn flux(&self, r: f64) -> Result<f64, OracleError> {
        Ok(self.conductivity(r) * self.derivative(r)?)
    }

    fn conductivity(&self, r: f64) -> f64 {
        if r < self.inclusion_radius {
            self.sigma_c
        } else {
            1.0
        }
    }

    pub fn at(&self, p: Point) -> Result<f64, OracleError> {
        self.value(p.norm())
    }
}

/// `u(r)` for the concentric two-phase problem.
pub fn concentric_two_phase(outer_radius: f64, inclusion_radius: f64, sigma_c: f64, r: f64) -> Result<f64, OracleError> {
    RadialTwoPhaseSolution::new(outer_radius, inclusion_radius, sigma_c)?.value(r)
}

/// Torsion function `(R² - |x - c|²)/4` of a disk.
pub fn disk_torsion(center: Point, radius: f64, p: Point) -> Result<f64, OracleError> {
    let d2 = (p - center).norm_sq();
    if d2 > radius * radius * (1.0 + 1e-12) {
        return Err(OracleError::OutOfDomain(p));
    }
    Ok((radius * radius - d2) / 4.0)
}

fn ellipse_scale(a: f64, b: f64) -> Result<f64, OracleError> {
    if !(a >= b && b > 0.0 && a.is_finite()) {
        return Err(OracleError::InvalidParameter(format!("need a >= b > 0, got a={a}, b={b}")));
    }
    Ok(a * a * b * b / (2.0 * (a * a + b * b)))
}

/// Torsion function of the centred ellipse with semi-axes `a ≥ b`.
pub fn ellipse_torsion(a: f64, b: f64, p: Point) -> Result<f64, OracleError> {
    let k = ellipse_scale(a, b)?;
    let s = p.x * p.x / (a * a) + p.y * p.y / (b * b);
    if s > 1.0 + 1e-12 {
        return Err(OracleError::OutOfDomain(p));
    }
    Ok(k * (1.0 - s))
}

pub fn ellipse_torsion_gradient(a: f64, b: f64, p: Point) -> Result<Point, OracleError> {
    let k = ellipse_scale(a, b)?;
    Ok(Point::new(-2.0 * k * p.x / (a * a), -2.0 * k * p.y / (b * b)))
}

/// Constant Hessian `diag(-b², -a²)/(a² + b²)`.
pub fn ellipse_torsion_hessian(a: f64, b: f64) -> Result<[[f64; 2]; 2], OracleError> {
    ellipse_scale(a, b)?;
    let s = a * a + b * b;
    Ok([[-b * b / s, 0.0], [0.0, -a * a / s]])
}

/// `∂ₙv` of the ellipse torsion function at the boundary point with
/// parameter `t`, i.e. at `(a cos t, b sin t)`.
pub fn ellipse_normal_derivative(a: f64, b: f64, t: f64) -> Result<f64, OracleError> {
    let p = Point::new(a * t.cos(), b * t.sin());
    let n = Point::new(p.x / (a * a), p.y / (b * b)).normalized();
    Ok(ellipse_torsion_gradient(a, b, p)?.dot(n))
}

/// Both sides of the integral identity `∫v|∇²h|² = ½∫(c² - (∂ₙv)²)∂ₙh` for
/// the ellipse: `πa³b³(a² - b²)²/(8(a² + b²)³)`.
pub fn ellipse_identity_value(a: f64, b: f64) -> Result<f64, OracleError> {
    ellipse_scale(a, b)?;
    let s = a * a + b * b;
    Ok(PI * (a * b).powi(3) * (a * a - b * b).powi(2) / (8.0 * s.powi(3)))
}

/// `Γ(x) = -ln|x| / 2π`.
pub fn fundamental_solution(x: Point) -> f64 {
    -x.norm().ln() / (2.0 * PI)
}

fn check_green_args(x: Point, y: Point) -> Result<(), OracleError> {
    if y.norm() >= 1.0 {
        return Err(OracleError::OutOfDomain(y));
    }
    if x.norm() > 1.0 + 1e-12 {
        return Err(OracleError::OutOfDomain(x));
    }
    if x.dist(y) == 0.0 {
        return Err(OracleError::Singular(x));
    }
    Ok(())
}

/// Dirichlet Green's function of the unit disk,
/// `G(x, y) = (1/4π)[ln(|x|²|y|² - 2x·y + 1) - ln|x - y|²]`.
/// At `y = 0` this is `-ln|x| / 2π`.
pub fn disk_green(x: Point, y: Point) -> Result<f64, OracleError> {
    check_green_args(x, y)?;
    let a = x.norm_sq() * y.norm_sq() - 2.0 * x.dot(y) + 1.0;
    let b = (x - y).norm_sq();
    Ok((a.ln() - b.ln()) / (4.0 * PI))
}

/// Harmonic part `G - Γ(x - y)` as a function of `x`: the solution of the
/// Dirichlet problem with data `Γ(· - y)` is its negative,
/// `-(1/2π) ln(|y||x - y*|)` with `y* = y/|y|²`.
pub fn disk_corrector(x: Point, y: Point) -> Result<f64, OracleError> {
    Ok(fundamental_solution(x - y) - disk_green(x, y)?)
}

/// `M[i][j] = ∂²G / ∂x_i ∂y_j`.
pub fn green_mixed_derivative(x: Point, y: Point) -> Result<[[f64; 2]; 2], OracleError> {
    check_green_args(x, y)?;
    let (xs, ys) = ([x.x, x.y], [y.x, y.y]);
    let a = x.norm_sq() * y.norm_sq() - 2.0 * x.dot(y) + 1.0;
    let b = (x - y).norm_sq();
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { 1.0 } else { 0.0 };
            let a_i = 2.0 * y.norm_sq() * xs[i] - 2.0 * ys[i];
            let a_j = 2.0 * x.norm_sq() * ys[j] - 2.0 * xs[j];
            let a_ij = 4.0 * xs[i] * ys[j] - 2.0 * delta;
            let b_i = 2.0 * (xs[i] - ys[i]);
            let b_j = -2.0 * (xs[j] - ys[j]);
            let b_ij = -2.0 * delta;
            let log_a = a_ij / a - a_i * a_j / (a * a);
            let log_b = b_ij / b - b_i * b_j / (b * b);
            m[i][j] = (log_a - log_b) / (4.0 * PI);
        }
    }
    Ok(m)
}

/// Spectral norm of a 2×2 matrix.
pub fn operator_norm(m: [[f64; 2]; 2]) -> f64 {
    let (p, q, r, s) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let f = p * p + q * q + r * r + s * s;
    let det = p * s - q * r;
    (0.5 * (f + (f * f - 4.0 * det * det).max(0.0).sqrt())).sqrt()
}

/// Sampled `sup |∇ₓ∇_y G|` over `y ∈ D = B(0, 1 - 1.5/M)` and
/// `x ∈ Ω` with `dist(x, D) ≥ 1/(2M)`, i.e. `1 - 1/M ≤ |x| ≤ 1`.
/// By rotation invariance `x` is taken on the positive axis.
pub fn mixed_derivative_sup(m: f64, samples: usize) -> Result<f64, OracleError> {
    if !(m >= 2.0 && m.is_finite()) {
        return Err(OracleError::InvalidParameter(format!("M must be at least 2, got {m}")));
    }
    if samples < 4 {
        return Err(OracleError::InvalidParameter("need at least 4 samples".into()));
    }
    let rho = 1.0 - 1.5 / m;
    let x_min = 1.0 - 1.0 / m;
    let mut sup = 0.0f64;
    for ix in 0..=samples {
        let x = Point::new(x_min + (1.0 - x_min) * ix as f64 / samples as f64, 0.0);
        for ir in 0..=samples {
            // radii clustered toward the rim of D where the kernel peaks
            let s = ir as f64 / samples as f64;
            let r = rho * (1.0 - (1.0 - s).powi(2));
            let n_angles = if ir == 0 { 1 } else { 4 * samples };
            for ia in 0..n_angles {
                // angles clustered toward the x-axis
                let u = ia as f64 / n_angles as f64 * 2.0 - 1.0;
                let theta = PI * u.abs().powi(3) * u.signum();
                let y = Point::new(r * theta.cos(), r * theta.sin());
                sup = sup.max(operator_norm(green_mixed_derivative(x, y)?));
            }
        }
    }
    Ok(sup)
}

/// `J₀(x)` by its power series; accurate to about 1e-15 for `|x| ≤ 6`.
pub fn bessel_j0(x: f64) -> f64 {
    let q = -(x * x) / 4.0;
    let (mut term, mut sum) = (1.0f64, 1.0f64);
    for k in 1..60 {
        term *= q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// First positive zero of `J₀`, by bisection on `[2, 3]`.
pub fn bessel_j0_first_zero() -> f64 {
    let (mut lo, mut hi) = (2.0f64, 3.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if bessel_j0(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// First Dirichlet eigenvalue of a disk of radius `R`: `(j₀,₁/R)²`.
pub fn disk_lambda1(radius: f64) -> Result<f64, OracleError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(OracleError::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    Ok((bessel_j0_first_zero() / radius).powi(2))
}

/// `λ₁` of the disk with the same area as the given set.
pub fn faber_krahn_bound(area: f64) -> Result<f64, OracleError> {
    if !(area > 0.0) {
        return Err(OracleError::InvalidParameter(format!("area must be positive, got {area}")));
    }
    disk_lambda1((area / PI).sqrt())
}
