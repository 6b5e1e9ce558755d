use super::*;
use crate::fem::{interior_residual, solve_one_phase, unit_load};
use crate::geometry::Shape;
use crate::mesh::{generate, refine};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn one_phase(domain: &DomainSpec, h: f64) -> (Mesh, Field) {
    let mesh = generate(domain, &InclusionSpec::None, h).unwrap();
    let v = solve_one_phase(&mesh, &cfg()).unwrap();
    (mesh, v)
}

#[test]
fn max_point_disk_and_ellipse() {
    for domain in [DomainSpec::disk(1.0), DomainSpec::ellipse(1.2, 1.0)] {
        let (mesh, v) = one_phase(&domain, 0.05);
        let z = max_point(&mesh, &v).unwrap();
        assert!(z.norm() < 0.05 * 0.05, "{z:?}");
    }
}

#[test]
fn max_point_follows_translation() {
    let shift = Point::new(0.3, 0.1);
    let (m0, v0) = one_phase(&DomainSpec::disk(1.0), 0.05);
    let (m1, v1) = one_phase(&DomainSpec::new(Shape::disk(1.0).with_center(shift)), 0.05);
    let (z0, z1) = (max_point(&m0, &v0).unwrap(), max_point(&m1, &v1).unwrap());
    assert!((z1 - z0 - shift).norm() < 0.05 * 0.05, "{z0:?} {z1:?}");
}

#[test]
fn max_point_stable_under_refinement() {
    let (mesh, v) = one_phase(&DomainSpec::ellipse(1.2, 1.0), 0.08);
    let fine = refine(&mesh);
    let vf = solve_one_phase(&fine, &cfg()).unwrap();
    let (a, b) = (max_point(&mesh, &v).unwrap(), max_point(&fine, &vf).unwrap());
    assert!(a.dist(b) < 0.08 * 0.08);
}

#[test]
fn deviation_of_disk_and_ellipse() {
    let (mesh, v) = one_phase(&DomainSpec::disk(1.0), 0.05);
    let tr = fem::normal_derivative(&mesh, &v, 1.0).unwrap();
    let d = deviation_norms(&tr, -0.5, None).unwrap();
    assert!(d.linf < 0.05 * 0.05 && d.l2 < 0.05 * 0.05, "{d:?}");

    let domain = DomainSpec::ellipse(1.2, 1.0);
    let (mesh, v) = one_phase(&domain, 0.05);
    let tr = fem::normal_derivative(&mesh, &v, 1.0).unwrap();
    let c = domain.serrin_constant();
    assert!((c + 0.5443).abs() < 1e-4);
    // closed form: the larger of the two axis deviations
    let expected = (-1.2 / 2.44 - c).abs().max((-1.44 / 2.44 - c).abs());
    assert!((expected - 0.0525).abs() < 2e-4);
    let d = deviation_norms(&tr, c, None).unwrap();
    assert!((d.linf - expected).abs() < 2e-3, "{} vs {expected}", d.linf);
}

#[test]
fn perturbation_must_have_zero_mean() {
    let (mesh, v) = one_phase(&DomainSpec::disk(1.0), 0.1);
    let tr = fem::normal_derivative(&mesh, &v, 1.0).unwrap();
    let constant = vec![0.01; tr.len()];
    assert!(matches!(deviation_norms(&tr, -0.5, Some(&constant)), Err(DiagnosticsError::NonZeroMean { .. })));
    let eta = Perturbation { amplitude: 0.01, mode: 0, phase: 0.0 }.on_trace(&tr);
    assert!(eta.iter().all(|e| e.abs() < 1e-15));
}

#[test]
fn trace_equal_to_target_has_no_deviation() {
    let (mesh, v) = one_phase(&DomainSpec::disk(1.0), 0.1);
    let tr = fem::normal_derivative(&mesh, &v, 1.0).unwrap();
    let eta = Perturbation { amplitude: 0.003, mode: 2, phase: 0.4 }.on_trace(&tr);
    let synthetic = tr.with_values(eta.iter().map(|e| -0.5 + e).collect());
    let d = deviation_norms(&synthetic, -0.5, Some(&eta)).unwrap();
    assert!(d.l2 < 1e-15 && d.linf < 1e-15);
}

#[test]
fn h_is_constant_on_the_disk() {
    let (mesh, v) = one_phase(&DomainSpec::disk(1.0), 0.05);
    let z = max_point(&mesh, &v).unwrap();
    let h = h_field(&mesh, &v, z).unwrap();
    for val in &h.values {
        assert!((val - 0.25).abs() < 0.05 * 0.05, "{val}");
    }
}

#[test]
fn h_is_nearly_discrete_harmonic() {
    let (mesh, v) = one_phase(&DomainSpec::ellipse(1.2, 1.0), 0.1);
    let mut residuals = Vec::new();
    for m in [mesh.clone(), refine(&mesh)] {
        let v = if m.id() == mesh.id() { v.clone() } else { solve_one_phase(&m, &cfg()).unwrap() };
        let z = max_point(&m, &v).unwrap();
        let h = h_field(&m, &v, z).unwrap();
        let ones = vec![1.0; m.num_triangles()];
        // residual against the unit load, i.e. relative to ‖F‖
        let zero = vec![0.0; m.num_vertices()];
        let absolute = interior_residual(&m, &ones, &zero, &h);
        let scale: f64 = unit_load(&m).iter().map(|f| f * f).sum::<f64>().sqrt();
        residuals.push(absolute / scale);
    }
    assert!(residuals[1] < residuals[0], "{residuals:?}");
    assert!(residuals[1] < 0.2, "{residuals:?}");
}

#[test]
fn identity_on_disk_vanishes() {
    let (mesh, v) = one_phase(&DomainSpec::disk(1.0), 0.05);
    let tr = fem::normal_derivative(&mesh, &v, 1.0).unwrap();
    let z = max_point(&mesh, &v).unwrap();
    let fi = fundamental_identity(&mesh, &v, &tr, z, -0.5).unwrap();
    assert!(fi.lhs.abs() < 0.05 && fi.rhs.abs() < 0.05, "{fi:?}");
    assert!(fi.lhs.abs() < 0.05 * 9.044e-3, "{fi:?}");
}

#[test]
fn identity_on_translated_disk_vanishes() {
    let domain = DomainSpec::new(Shape::disk(1.0).with_center(Point::new(-0.2, 0.4)));
    let (mesh, v) = one_phase(&domain, 0.05);
    let tr = fem::normal_derivative(&mesh, &v, 1.0).unwrap();
    let z = max_point(&mesh, &v).unwrap();
    let fi = fundamental_identity(&mesh, &v, &tr, z, -0.5).unwrap();
    assert!(fi.lhs.abs() < 0.05 * 9.044e-3 && fi.rhs.abs() < 1e-5, "{fi:?}");
}

#[test]
fn identity_on_ellipse_converges() {
    let domain = DomainSpec::ellipse(1.2, 1.0);
    let exact = 9.044e-3;
    let mut mesh = generate(&domain, &InclusionSpec::None, 0.1).unwrap();
    let mut gaps = Vec::new();
    for _ in 0..3 {
        let v = solve_one_phase(&mesh, &cfg()).unwrap();
        let tr = fem::normal_derivative(&mesh, &v, 1.0).unwrap();
        let z = max_point(&mesh, &v).unwrap();
        let fi = fundamental_identity(&mesh, &v, &tr, z, domain.serrin_constant()).unwrap();
        gaps.push(fi);
        mesh = refine(&mesh);
    }
    let last = gaps[2];
    assert!((last.lhs - exact).abs() < 0.05 * exact && (last.rhs - exact).abs() < 0.05 * exact, "{gaps:?}");
    for w in gaps.windows(2) {
        assert!(w[0].relative_gap >= 1.3 * w[1].relative_gap, "{gaps:?}");
    }
}

#[test]
fn oscillation_examples() {
    let disk = osc_check(&[0.25, 0.25, 0.25], 1.0, 1.0, 2.0, 0.0);
    assert_eq!(disk.osc, 0.0);
    assert!(disk.residual == 0.0 && disk.holds);

    let domain = DomainSpec::ellipse(1.2, 1.0);
    let (mesh, v) = one_phase(&domain, 0.05);
    let z = max_point(&mesh, &v).unwrap();
    let (ri, re) = geometry::rho_bounds(&domain, z).unwrap();
    let h = h_field(&mesh, &v, z).unwrap();
    let trace: Vec<f64> = mesh.boundary.iter().map(|&b| h.values[b]).collect();
    let chk = osc_check(&trace, ri, re, domain.diameter(), mesh.h_max);
    assert!((chk.osc - 0.11).abs() < 1e-3, "{chk:?}");
    assert!(chk.residual < 1e-3);
    assert!((chk.gap_bound - 8.0 / 2.4 * 0.11).abs() < 1e-2);
    assert!(chk.holds);

    let domain = DomainSpec::star(1.0, 0.05, 3);
    let (mesh, v) = one_phase(&domain, 0.05);
    let z = max_point(&mesh, &v).unwrap();
    let (ri, re) = geometry::rho_bounds(&domain, z).unwrap();
    let h = h_field(&mesh, &v, z).unwrap();
    let trace: Vec<f64> = mesh.boundary.iter().map(|&b| h.values[b]).collect();
    let chk = osc_check(&trace, ri, re, domain.diameter(), mesh.h_max);
    assert!(chk.osc > 0.0 && chk.holds, "{chk:?}");
}

#[test]
fn growth_on_disk() {
    let domain = DomainSpec::disk(1.0);
    let (mesh, v) = one_phase(&domain, 0.05);
    let g = growth_check(&mesh, &v, &domain).unwrap();
    // v/δ = (1 + r)/4 is smallest at the centre
    assert!((g.ratio_min - 0.25).abs() < 2e-3, "{g:?}");
    assert!(g.quadratic_slack_min >= -1e-6, "{g:?}");
    let doubled = v.map(|x| 2.0 * x, FieldLabel::V);
    let g2 = growth_check(&mesh, &doubled, &domain).unwrap();
    assert!((g2.ratio_min - 2.0 * g.ratio_min).abs() < 1e-14);
}

#[test]
fn concentric_report_is_exact() {
    let h = 0.05;
    for sigma_c in [0.5, 2.0, 5.0] {
        let r = full_report(&DomainSpec::disk(1.0), &InclusionSpec::disk(Point::ORIGIN, 0.5), sigma_c, h, None, &cfg())
            .unwrap();
        // z is recovered to O(h²), and the gap is at most 2|z| here
        assert!(r.gap < h * h, "{r:?}");
        assert!(r.deviation_linf <= 10.0 * h * h, "{r:?}");
        assert!(r.bridge_holds());
    }
}

#[test]
fn ellipse_report() {
    let r = full_report(&DomainSpec::ellipse(1.2, 1.0), &InclusionSpec::None, 1.0, 0.05, None, &cfg()).unwrap();
    assert!((r.gap - 0.2).abs() < 1e-3, "{r:?}");
    assert!((r.deviation_linf - 0.0525).abs() < 2e-3, "{r:?}");
    assert!(r.osc_inequality_holds && r.bridge_holds());
    assert_eq!(r.csv_row().split(',').count(), SerrinReport::CSV_HEADER.split(',').count());
}

#[test]
fn perturbed_disk_report() {
    let eta = Perturbation { amplitude: 0.01, mode: 1, phase: 0.0 };
    let r = full_report(&DomainSpec::disk(1.0), &InclusionSpec::None, 1.0, 0.05, Some(&eta), &cfg()).unwrap();
    assert!((r.deviation_linf - 0.01).abs() < 0.05 * 0.05, "{r:?}");
    assert_eq!(r.eta.as_deref(), Some("0.01*cos(1*theta+0)"));
}

#[test]
fn csv_header_order() {
    assert_eq!(
        SerrinReport::CSV_HEADER.split(',').collect::<Vec<_>>(),
        ["c", "dev_L2", "dev_Linf", "z_x", "z_y", "rho_i", "rho_e", "gap", "osc_h", "FI_lhs", "FI_rhs", "FI_gap", "growth_min", "h_max"]
    );
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn bridge_inequality_on_random_traces(seed in 0u64..1000, c in -1.0f64..0.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (mesh, v) = one_phase(&DomainSpec::disk(1.0), 0.25);
            let tr = fem::normal_derivative(&mesh, &v, 1.0).unwrap();
            let noisy = tr.with_values(tr.values.iter().map(|x| x + rng.gen_range(-0.1..0.1)).collect());
            let d = deviation_norms(&noisy, c, None).unwrap();
            prop_assert!(d.l2 <= noisy.total_weight().sqrt() * d.linf * (1.0 + 1e-12));
        }

        #[test]
        fn osc_residual_nonnegative(vals in proptest::collection::vec(0.0f64..1.0, 3..20), ri in 0.1f64..1.0, extra in 0.0f64..0.5) {
            let chk = osc_check(&vals, ri, ri + extra, 2.0 * (ri + extra), 0.0);
            prop_assert!(chk.osc >= 0.0 && chk.residual >= 0.0);
        }
    }
}
