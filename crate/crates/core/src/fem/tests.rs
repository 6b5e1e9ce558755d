use super::*;
use crate::geometry::{DomainSpec, InclusionSpec};
use crate::mesh::{generate, refine};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn disk_mesh(h: f64) -> Mesh {
    generate(&DomainSpec::disk(1.0), &InclusionSpec::None, h).unwrap()
}

fn concentric_mesh(h: f64) -> Mesh {
    generate(&DomainSpec::disk(1.0), &InclusionSpec::disk(Point::ORIGIN, 0.5), h).unwrap()
}

fn ellipse_mesh(h: f64) -> Mesh {
    generate(&DomainSpec::ellipse(1.2, 1.0), &InclusionSpec::None, h).unwrap()
}

// independent closed forms
fn radial(r: f64, r0: f64, sigma_c: f64) -> f64 {
    if r >= r0 {
        (1.0 - r * r) / 4.0
    } else {
        (1.0 - r0 * r0) / 4.0 + (r0 * r0 - r * r) / (4.0 * sigma_c)
    }
}

fn ellipse_v(p: Point, a: f64, b: f64) -> f64 {
    (1.0 - p.x * p.x / (a * a) - p.y * p.y / (b * b)) * a * a * b * b / (2.0 * (a * a + b * b))
}

/// Torsion function of the square (-1,1)² at the origin by its cosine series.
fn square_center_series() -> f64 {
    let pi = std::f64::consts::PI;
    let mut s = 0.0;
    for k in 0..40 {
        let n = (2 * k + 1) as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s += sign / (n.powi(3) * (n * pi / 2.0).cosh());
    }
    0.5 - 16.0 / pi.powi(3) * s
}

fn square_mesh(n: usize) -> Mesh {
    let mut vertices = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point::new(-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            // criss-cross free, symmetric about the centre
            if (i < n / 2) == (j < n / 2) {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let regions = vec![Region::OutsideD; triangles.len()];
    Mesh::from_parts(vertices, triangles, regions).unwrap()
}

#[test]
fn disk_center_value() {
    let mesh = disk_mesh(0.05);
    let u = solve_two_phase(&mesh, 3.0, &cfg()).unwrap();
    let c = u.value_at(&mesh, Point::ORIGIN).unwrap();
    assert!((c - 0.25).abs() < 5e-4, "{c}");
}

#[test]
fn dirichlet_boundary_is_exactly_zero() {
    let mesh = concentric_mesh(0.1);
    let u = solve_two_phase(&mesh, 2.0, &cfg()).unwrap();
    for &b in &mesh.boundary {
        assert_eq!(u.values[b], 0.0);
    }
}

#[test]
fn concentric_center_value() {
    let mesh = concentric_mesh(0.05);
    let u = solve_two_phase(&mesh, 2.0, &cfg()).unwrap();
    let c = u.value_at(&mesh, Point::ORIGIN).unwrap();
    assert!((c - 0.21875).abs() < 5e-4, "{c}");
    assert!((radial(0.0, 0.5, 2.0) - 7.0 / 32.0).abs() < 1e-15);
}

#[test]
fn unit_conductivity_equals_one_phase() {
    let mesh = concentric_mesh(0.1);
    let u = solve_two_phase(&mesh, 1.0, &cfg()).unwrap();
    let v = solve_one_phase(&mesh, &cfg()).unwrap();
    let scale = v.max();
    for (a, b) in u.values.iter().zip(&v.values) {
        assert!((a - b).abs() <= 1e-9 * scale);
    }
}

#[test]
fn bad_conductivity_rejected() {
    let mesh = disk_mesh(0.2);
    assert!(matches!(solve_two_phase(&mesh, 0.0, &cfg()), Err(FemError::BadConductivity(_))));
    assert!(matches!(solve_two_phase(&mesh, -1.0, &cfg()), Err(FemError::BadConductivity(_))));
}

#[test]
fn solver_config_validation() {
    let mut c = cfg();
    c.cg_rel_tolerance = 1e-3;
    assert!(c.validate().is_err());
    c.cg_rel_tolerance = 1e-8;
    c.cg_max_iterations = Some(50);
    assert!(c.validate().is_err());
}

#[test]
fn iteration_budget_exhaustion_reports_residual() {
    let mesh = disk_mesh(0.02);
    let c = SolverConfig { cg_max_iterations: Some(100), cg_rel_tolerance: 1e-12, jacobi: false };
    match solve_one_phase(&mesh, &c) {
        Err(FemError::NotConverged { iterations, residual }) => {
            assert!(iterations >= 100);
            assert!(residual > 1e-10);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn ellipse_center_value() {
    let mesh = ellipse_mesh(0.05);
    let v = solve_one_phase(&mesh, &cfg()).unwrap();
    let c = v.value_at(&mesh, Point::ORIGIN).unwrap();
    let exact = ellipse_v(Point::ORIGIN, 1.2, 1.0);
    assert!((exact - 0.29508).abs() < 1e-5);
    assert!((c - exact).abs() < 1e-3, "{c} vs {exact}");
}

#[test]
fn square_center_value() {
    let oracle = square_center_series();
    assert!((oracle - 0.2947).abs() < 1e-4, "{oracle}");
    let mesh = square_mesh(40);
    let v = solve_one_phase(&mesh, &cfg()).unwrap();
    let c = v.value_at(&mesh, Point::ORIGIN).unwrap();
    assert!((c - oracle).abs() < 1e-3, "{c} vs {oracle}");
}

#[test]
fn harmonic_constant_is_reproduced() {
    let mesh = concentric_mesh(0.1);
    let f = solve_harmonic_dirichlet(&mesh, |_| 1.0, &cfg()).unwrap();
    for v in &f.values {
        assert!((v - 1.0).abs() < 1e-9);
    }
}

#[test]
fn harmonic_linear_data() {
    let mesh = disk_mesh(0.1);
    let f = solve_harmonic_dirichlet(&mesh, |p| p.x, &cfg()).unwrap();
    // a linear function is discretely harmonic, so only solver error remains
    for (p, v) in mesh.vertices.iter().zip(&f.values) {
        assert!((v - p.x).abs() < 1e-8);
    }
}

#[test]
fn harmonic_green_corrector() {
    let y0 = Point::new(0.5, 0.0);
    let star = y0 * (1.0 / y0.norm_sq());
    let gamma = |p: Point| -(p.dist(y0)).ln() / (2.0 * std::f64::consts::PI);
    let corrector = |p: Point| -(y0.norm() * p.dist(star)).ln() / (2.0 * std::f64::consts::PI);
    let mut errs = Vec::new();
    let mut mesh = disk_mesh(0.2);
    for _ in 0..3 {
        let f = solve_harmonic_dirichlet(&mesh, gamma, &cfg()).unwrap();
        errs.push(l2_error(&mesh, &f, corrector));
        mesh = refine(&mesh);
    }
    assert!(errs[2] < 1e-3, "{errs:?}");
    assert!(errs[0] / errs[1] > 3.0 && errs[1] / errs[2] > 3.0, "{errs:?}");
}

#[test]
fn non_finite_boundary_rejected() {
    let mesh = disk_mesh(0.2);
    let r = solve_harmonic_dirichlet(&mesh, |p| if p.x > 0.99 { f64::NAN } else { 0.0 }, &cfg());
    assert!(matches!(r, Err(FemError::NonFiniteBoundary(_))));
}

#[test]
fn linearized_without_inclusion_vanishes() {
    let mesh = disk_mesh(0.1);
    let u = solve_two_phase(&mesh, 1.0, &cfg()).unwrap();
    let du = solve_linearized(&mesh, 1.0, &u, &cfg()).unwrap();
    assert!(du.values.iter().all(|&v| v == 0.0));
}

#[test]
fn linearized_concentric_center() {
    let mesh = concentric_mesh(0.05);
    let u = solve_two_phase(&mesh, 1.0, &cfg()).unwrap();
    let du = solve_linearized(&mesh, 1.0, &u, &cfg()).unwrap();
    // d/dt of r0²/(4(1+t)) at t = 0
    let c = du.value_at(&mesh, Point::ORIGIN).unwrap();
    assert!((c + 0.0625).abs() < 2e-3, "{c}");
}

#[test]
fn linearized_rejects_foreign_field() {
    let a = disk_mesh(0.2);
    let b = disk_mesh(0.2);
    let u = solve_two_phase(&a, 1.0, &cfg()).unwrap();
    assert!(matches!(solve_linearized(&b, 1.0, &u, &cfg()), Err(FemError::MeshMismatch { .. })));
    assert!(matches!(normal_derivative(&b, &u, 1.0), Err(FemError::MeshMismatch { .. })));
}

#[test]
fn finite_differences_approach_linearization() {
    let mesh =
        generate(&DomainSpec::ellipse(1.2, 1.0), &InclusionSpec::disk(Point::ORIGIN, 0.3), 0.08).unwrap();
    let t0 = 0.5;
    let tight = SolverConfig { cg_rel_tolerance: 1e-13, ..cfg() };
    let u0 = solve_two_phase(&mesh, 1.0 + t0, &tight).unwrap();
    let du = solve_linearized(&mesh, 1.0 + t0, &u0, &tight).unwrap();
    let errs: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&eps| {
            let u1 = solve_two_phase(&mesh, 1.0 + t0 + eps, &tight).unwrap();
            let q: Vec<f64> =
                u1.values.iter().zip(&u0.values).zip(&du.values).map(|((a, b), d)| (a - b) / eps - d).collect();
            l2_norm(&mesh, &q)
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.8 && ratio < 2.2, "{errs:?}");
    }
}

#[test]
fn disk_flux_is_minus_half() {
    let mesh = disk_mesh(0.05);
    let v = solve_one_phase(&mesh, &cfg()).unwrap();
    let tr = normal_derivative(&mesh, &v, 1.0).unwrap();
    let dev = tr.values.iter().fold(0.0f64, |m, x| m.max((x + 0.5).abs()));
    assert!(dev < 10.0 * 0.05 * 0.05, "{dev}");
}

#[test]
fn concentric_flux_is_minus_half() {
    for sigma_c in [0.5, 2.0, 5.0] {
        let mesh = concentric_mesh(0.05);
        let u = solve_two_phase(&mesh, sigma_c, &cfg()).unwrap();
        let tr = normal_derivative(&mesh, &u, sigma_c).unwrap();
        let dev = tr.values.iter().fold(0.0f64, |m, x| m.max((x + 0.5).abs()));
        assert!(dev < 10.0 * 0.05 * 0.05, "sigma_c={sigma_c}: {dev}");
    }
}

#[test]
fn ellipse_flux_at_axes() {
    let (a, b) = (1.2, 1.0);
    let mesh = ellipse_mesh(0.04);
    let v = solve_one_phase(&mesh, &cfg()).unwrap();
    let tr = normal_derivative(&mesh, &v, 1.0).unwrap();
    // ∂ₙv = ∇v·n for the closed form, evaluated at the nearest trace node
    let exact = |p: Point| {
        let k = a * a * b * b / (2.0 * (a * a + b * b));
        let grad = Point::new(-2.0 * p.x / (a * a), -2.0 * p.y / (b * b)) * k;
        let n = Point::new(p.x / (a * a), p.y / (b * b)).normalized();
        grad.dot(n)
    };
    assert!((exact(Point::new(a, 0.0)) + 0.4918).abs() < 1e-4);
    assert!((exact(Point::new(0.0, b)) + 0.5902).abs() < 1e-4);
    for target in [Point::new(a, 0.0), Point::new(-a, 0.0), Point::new(0.0, b), Point::new(0.0, -b)] {
        let i = (0..tr.len()).min_by(|&i, &j| tr.points[i].dist(target).total_cmp(&tr.points[j].dist(target))).unwrap();
        let want = exact(tr.points[i]);
        assert!((tr.values[i] - want).abs() < 5e-3, "at {target:?}: {} vs {want}", tr.values[i]);
    }
}

#[test]
fn flux_balance_matches_area() {
    let meshes = [concentric_mesh(0.07), ellipse_mesh(0.07), generate(&DomainSpec::star(1.0, 0.1, 3), &InclusionSpec::None, 0.07).unwrap()];
    for mesh in &meshes {
        for sigma_c in [1.0, 3.0] {
            let u = solve_two_phase(mesh, sigma_c, &cfg()).unwrap();
            let tr = normal_derivative(mesh, &u, sigma_c).unwrap();
            let rel = (tr.integral() + mesh.area()).abs() / mesh.area();
            assert!(rel < 1e-8, "{rel}");
        }
    }
}

#[test]
fn trace_weights_sum_to_polygon_perimeter() {
    let mesh = disk_mesh(0.05);
    let v = solve_one_phase(&mesh, &cfg()).unwrap();
    let tr = normal_derivative(&mesh, &v, 1.0).unwrap();
    let perim: f64 = (0..mesh.boundary.len())
        .map(|i| mesh.vertices[mesh.boundary[i]].dist(mesh.vertices[mesh.boundary[(i + 1) % mesh.boundary.len()]]))
        .sum();
    assert!((tr.total_weight() - perim).abs() < 1e-12);
    assert!(tr.weights.iter().all(|&w| w > 0.0));
}

#[test]
fn maximum_principle() {
    for mesh in [concentric_mesh(0.08), ellipse_mesh(0.08)] {
        for sigma_c in [0.5, 1.0, 4.0] {
            let u = solve_two_phase(&mesh, sigma_c, &cfg()).unwrap();
            assert!(u.min() >= 0.0);
            let arg = (0..u.values.len()).max_by(|&i, &j| u.values[i].total_cmp(&u.values[j])).unwrap();
            assert!(!mesh.is_boundary_vertex()[arg]);
        }
    }
}

#[test]
fn assembled_residual_within_tolerance() {
    let mesh = concentric_mesh(0.05);
    let u = solve_two_phase(&mesh, 2.0, &cfg()).unwrap();
    let r = interior_residual(&mesh, &conductivities(&mesh, 2.0), &unit_load(&mesh), &u);
    assert!(r <= cfg().cg_rel_tolerance, "{r}");
}

#[test]
fn convergence_under_refinement() {
    let mut mesh = concentric_mesh(0.2);
    let mut l2 = Vec::new();
    let mut trace = Vec::new();
    for _ in 0..3 {
        let u = solve_two_phase(&mesh, 2.0, &cfg()).unwrap();
        l2.push(l2_error(&mesh, &u, |p| radial(p.norm().min(1.0), 0.5, 2.0)));
        let tr = normal_derivative(&mesh, &u, 2.0).unwrap();
        trace.push(tr.values.iter().fold(0.0f64, |m, x| m.max((x + 0.5).abs())));
        mesh = refine(&mesh);
    }
    for w in l2.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.4..=4.6).contains(&ratio), "{l2:?}");
    }
    for w in trace.windows(2) {
        assert!(w[0] / w[1] >= 1.8, "{trace:?}");
    }
}

#[test]
fn center_value_decreases_with_conductivity() {
    let mesh = concentric_mesh(0.05);
    let mut last = f64::INFINITY;
    for sigma_c in [0.5, 1.0, 2.0, 4.0] {
        let u = solve_two_phase(&mesh, sigma_c, &cfg()).unwrap();
        let c = u.value_at(&mesh, Point::ORIGIN).unwrap();
        assert!(c < last);
        assert!((c - radial(0.0, 0.5, sigma_c)).abs() < 1e-3);
        last = c;
    }
}

fn interior_far(mesh: &Mesh, margin: f64) -> Vec<usize> {
    let spec = DomainSpec::new(mesh.outer.clone().unwrap());
    (0..mesh.num_vertices()).filter(|&v| spec.distance_to_boundary(mesh.vertices[v]) > margin).collect()
}

#[test]
fn hessian_of_quadratic() {
    let coarse = disk_mesh(0.05);
    let fine = refine(&coarse);
    let err = |mesh: &Mesh| {
        let f = Field::interpolate(mesh, |p| p.x * p.x, FieldLabel::Custom("x2".into()));
        let hs = hessian_recovery(mesh, &f).unwrap();
        let ids = interior_far(mesh, 0.15);
        let e: Vec<f64> = ids.iter().map(|&v| hs[v]).map(|h| ((h.xx - 2.0).powi(2) + 2.0 * h.xy.powi(2) + h.yy.powi(2)).sqrt()).collect();
        (e.iter().copied().fold(0.0, f64::max), e.iter().sum::<f64>() / e.len() as f64)
    };
    // irregular patches keep an O(1) error at isolated vertices
    let (c, f) = (err(&coarse), err(&fine));
    assert!(c.0 < 0.5 && f.0 < 0.5, "{c:?} {f:?}");
    assert!(c.1 < 0.02 && f.1 < 0.02, "{c:?} {f:?}");
}

#[test]
fn hessian_of_quadratic_exact_on_uniform_grid() {
    let mesh = square_mesh(20);
    let f = Field::interpolate(&mesh, |p| p.x * p.x - p.x * p.y + 0.5 * p.y * p.y, FieldLabel::Custom("q".into()));
    let hs = hessian_recovery(&mesh, &f).unwrap();
    for (v, p) in mesh.vertices.iter().enumerate() {
        // away from the boundary and from the lines where the diagonal flips
        if p.x.abs().max(p.y.abs()) > 0.75 || p.x.abs().min(p.y.abs()) < 0.35 {
            continue;
        }
        let h = hs[v];
        assert!((h.xx - 2.0).abs() < 1e-9 && (h.xy + 1.0).abs() < 1e-9 && (h.yy - 1.0).abs() < 1e-9, "{p:?} {h:?}");
    }
}

#[test]
fn hessian_of_linear_vanishes() {
    let mesh = ellipse_mesh(0.08);
    let f = Field::interpolate(&mesh, |p| 3.0 * p.x - 2.0 * p.y + 1.0, FieldLabel::Custom("lin".into()));
    for h in hessian_recovery(&mesh, &f).unwrap() {
        assert!(h.frobenius_sq().sqrt() < 1e-10, "{h:?}");
    }
}

#[test]
fn hessian_of_ellipse_torsion() {
    let mesh = ellipse_mesh(0.04);
    let v = solve_one_phase(&mesh, &cfg()).unwrap();
    let hs = hessian_recovery(&mesh, &v).unwrap();
    let ids = interior_far(&mesh, 0.2);
    let mean = |f: &dyn Fn(&Hessian) -> f64| ids.iter().map(|&i| f(&hs[i])).sum::<f64>() / ids.len() as f64;
    assert!((mean(&|h| h.xx) + 1.0 / 2.44).abs() < 0.02);
    assert!((mean(&|h| h.yy) + 1.44 / 2.44).abs() < 0.02);
    assert!(mean(&|h| h.xy).abs() < 0.02);
}

#[test]
fn gradient_recovery_exact_for_linear() {
    let mesh = concentric_mesh(0.1);
    let f = Field::interpolate(&mesh, |p| 2.0 * p.x + 0.5 * p.y, FieldLabel::Custom("lin".into()));
    for g in gradient_recovery(&mesh, &f).unwrap() {
        assert!((g.x - 2.0).abs() < 1e-12 && (g.y - 0.5).abs() < 1e-12);
    }
}

#[test]
fn solves_are_bit_identical() {
    let mesh = concentric_mesh(0.07);
    let a = solve_two_phase(&mesh, 2.0, &cfg()).unwrap();
    let b = solve_two_phase(&mesh, 2.0, &cfg()).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn field_dump_has_values_section() {
    let mesh = disk_mesh(0.3);
    let v = solve_one_phase(&mesh, &cfg()).unwrap();
    let parsed = crate::mesh::parse_dump(&v.dump(&mesh)).unwrap();
    assert_eq!(parsed.values, v.values);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn flux_balance_any_inclusion(r in 0.1f64..0.6, cx in -0.2f64..0.2, sigma_c in 0.2f64..8.0) {
            let mesh = generate(&DomainSpec::disk(1.0), &InclusionSpec::disk(Point::new(cx, 0.0), r), 0.12).unwrap();
            let u = solve_two_phase(&mesh, sigma_c, &cfg()).unwrap();
            prop_assert!(u.min() >= 0.0);
            let tr = normal_derivative(&mesh, &u, sigma_c).unwrap();
            prop_assert!((tr.integral() + mesh.area()).abs() / mesh.area() < 1e-8);
        }

        #[test]
        fn harmonic_solution_bounded_by_data(kx in -3.0f64..3.0, ky in -3.0f64..3.0) {
            let mesh = disk_mesh(0.15);
            let g = |p: Point| (kx * p.x).sin() + (ky * p.y).cos();
            let f = solve_harmonic_dirichlet(&mesh, g, &cfg()).unwrap();
            let bmax = mesh.boundary.iter().map(|&b| f.values[b]).fold(f64::NEG_INFINITY, f64::max);
            let bmin = mesh.boundary.iter().map(|&b| f.values[b]).fold(f64::INFINITY, f64::min);
            prop_assert!(f.max() <= bmax + 1e-9 && f.min() >= bmin - 1e-9);
        }
    }
}
