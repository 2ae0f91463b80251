//! End-to-end checks through the public API against closed forms.

use std::f64::consts::PI;

use flowconn_core::curves::{sample_curve, CurveSpec};
use flowconn_core::estimators::{
    connection_integrals, estimate_q, oracle_psi_derivative, recover_christoffel_segment,
    theorem_rhs, verify_theorem, Mode, QField, TheoremSettings,
};
use flowconn_core::{BrownianDriver, FlowConfig, ManifoldModel};

fn oracle_settings() -> TheoremSettings {
    TheoremSettings {
        mode: Mode::Oracle,
        ..Default::default()
    }
}

fn driver(n: usize) -> BrownianDriver {
    BrownianDriver::new(42, 1e-4, 1e-3, n).unwrap()
}

#[test]
fn great_circle_circulation() {
    // On the unit sphere Γ¹_{2k} dx_k restricted to the equator is x₁dx₂ − x₂dx₁.
    let model = ManifoldModel::sphere(3).unwrap();
    let c = sample_curve(&model, &CurveSpec::GreatCircle, 400).unwrap();
    let lhs = connection_integrals(&model, &c).unwrap();
    assert!((lhs[(0, 1)] - 2.0 * PI).abs() < 1e-4, "{}", lhs[(0, 1)]);
    assert!((lhs[(1, 0)] + 2.0 * PI).abs() < 1e-4);
    assert!(lhs[(0, 2)].abs() < 1e-12 && lhs[(1, 2)].abs() < 1e-12);
}

#[test]
fn oracle_identity_across_manifolds() {
    let cases = [
        (
            "sphere:n=3",
            ManifoldModel::sphere(3).unwrap(),
            CurveSpec::QuarterGreatCircle,
        ),
        ("circle", ManifoldModel::circle(), CurveSpec::GreatCircle),
        (
            "torus",
            ManifoldModel::torus(2.0, 1.0).unwrap(),
            CurveSpec::PoloidalLoop,
        ),
        (
            "torus",
            ManifoldModel::torus(2.0, 0.5).unwrap(),
            CurveSpec::QuarterGreatCircle,
        ),
        (
            "ellipsoid",
            ManifoldModel::ellipsoid(1.0, 2.0, 3.0).unwrap(),
            CurveSpec::QuarterGreatCircle,
        ),
        (
            "plane",
            ManifoldModel::plane(3, 2).unwrap(),
            CurveSpec::Segment {
                from: vec![0.0, 0.0, 0.0],
                to: vec![1.0, 2.0, 0.0],
                via: flowconn_core::curves::SegmentPath::Geodesic,
            },
        ),
    ];
    for (name, model, spec) in cases {
        let c = sample_curve(&model, &spec, 200).unwrap();
        let report = verify_theorem(
            &model,
            &c,
            &oracle_settings(),
            &FlowConfig::default(),
            &driver(model.ambient_dim()),
        )
        .unwrap();
        assert!(
            report.passed(),
            "{name}: max residual {:e}",
            report.max_abs_residual()
        );
    }
}

#[test]
fn reversal_negates_both_sides() {
    let model = ManifoldModel::torus(2.0, 1.0).unwrap();
    let c = sample_curve(&model, &CurveSpec::QuarterGreatCircle, 101).unwrap();
    let r = c.reversed();
    let (lf, lr) = (
        connection_integrals(&model, &c).unwrap(),
        connection_integrals(&model, &r).unwrap(),
    );
    let (df, dr) = (
        oracle_psi_derivative(&model, &c).unwrap(),
        oracle_psi_derivative(&model, &r).unwrap(),
    );
    let rhs_f = theorem_rhs(&model, &c, &df, &QField::Analytic).unwrap();
    let rhs_r = theorem_rhs(&model, &r, &dr, &QField::Analytic).unwrap();
    for (a, b) in rhs_f.iter().zip(&rhs_r) {
        assert_eq!(lf[(a.i, a.j)], -lr[(a.i, a.j)]);
        // The assembled right-hand side mixes several sums; only rounding separates it.
        assert!((a.rhs + b.rhs).abs() < 1e-13, "({}, {})", a.i, a.j);
    }
}

#[test]
fn retracted_ray_recovery_matches_arc_angle() {
    // R(x + s v) on the unit sphere sweeps the angle atan(s), so the ratio is atan(ε)/ε.
    let model = ManifoldModel::sphere(3).unwrap();
    let (x, v) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    for eps in [0.04, 0.02, 0.01] {
        let est = recover_christoffel_segment(
            &model,
            &x,
            &v,
            eps,
            200,
            &oracle_settings(),
            &FlowConfig::default(),
            &driver(3),
        )
        .unwrap();
        let expected = f64::atan(eps) / eps;
        assert!(
            (est.estimate[(0, 1)] - expected).abs() < 1e-8,
            "ε={eps}: {}",
            est.estimate[(0, 1)]
        );
    }
}

#[test]
fn circle_drift_is_half_the_inward_normal() {
    let model = ManifoldModel::circle();
    let x = [0.6, 0.8];
    let dt = 1e-3;
    let q = estimate_q(&model, &x, dt, 40_000, &FlowConfig::default(), &driver(2)).unwrap();
    for ((&xk, &mean), &se) in x.iter().zip(&q.mean).zip(&q.std_error) {
        let expected = -0.5 * xk;
        assert!(
            (mean - expected).abs() <= 3.0 * se + 10.0 * dt,
            "{mean} ± {se} vs {expected}"
        );
    }
}
