use super::*;
use crate::linalg::max_abs_diff;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Closed form for the unit sphere with extension `I − xxᵀ/|x|²`, valid on
/// `|x| = 1`: `S^i_{jl} = −x_j P^{il}`.
fn sphere_s_oracle(x: &[f64]) -> Tensor3 {
    let n = x.len();
    let p = |i: usize, l: usize| if i == l { 1.0 } else { 0.0 } - x[i] * x[l];
    let mut t = Tensor3::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                t[(i, j, l)] = -x[j] * p(i, l);
            }
        }
    }
    t
}

fn central_fd_dp(shape: &dyn Shape, x: &[f64], h: f64) -> Tensor3 {
    let n = x.len();
    let mut t = Tensor3::zeros(n);
    let mut pp = vec![0.0; n * n];
    let mut pm = vec![0.0; n * n];
    for l in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[l] += h;
        xm[l] -= h;
        shape.projection(&xp, &mut pp);
        shape.projection(&xm, &mut pm);
        for j in 0..n {
            for m in 0..n {
                t[(j, m, l)] = (pp[j * n + m] - pm[j * n + m]) / (2.0 * h);
            }
        }
    }
    t
}

#[test]
fn projection_examples() {
    let s2 = ManifoldModel::sphere(3).unwrap();
    let p = s2.projection_at(&[1.0, 0.0, 0.0]).unwrap();
    assert_eq!(p.as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

    let s1 = ManifoldModel::circle();
    let p = s1.projection_at(&[0.0, 1.0]).unwrap();
    assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0, 0.0]);

    let plane = ManifoldModel::plane(3, 2).unwrap();
    let p = plane.projection_at(&[0.3, -2.0, 0.0]).unwrap();
    assert_eq!(
        p.as_slice(),
        Matrix::from_fn(3, |i, j| if i == j && i < 2 { 1.0 } else { 0.0 }).as_slice()
    );
}

#[test]
fn projection_rejects_off_manifold_points() {
    let s2 = ManifoldModel::sphere(3).unwrap();
    let err = s2.projection_at(&[1.1, 0.0, 0.0]).unwrap_err();
    assert!(matches!(err, Error::OffManifold { .. }));
    assert!(matches!(
        s2.projection_at(&[1.0, 0.0]).unwrap_err(),
        Error::DimensionMismatch { .. }
    ));
}

#[test]
fn s_tensor_matches_sphere_closed_form() {
    let s2 = ManifoldModel::sphere(3).unwrap();
    let x = [1.0, 0.0, 0.0];
    let s = s2.s_tensor(&x).unwrap();
    assert!(s.max_abs_diff(&sphere_s_oracle(&x)) < 1e-15);
    assert_eq!(s[(1, 0, 1)], -1.0);
    for i in 0..3 {
        for j in 1..3 {
            for l in 0..3 {
                assert_eq!(s[(i, j, l)], 0.0);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [2, 3, 5, 8] {
        let m = ManifoldModel::sphere(n).unwrap();
        for _ in 0..20 {
            let x = m.sample_point(&mut rng);
            assert!(m.s_tensor(&x).unwrap().max_abs_diff(&sphere_s_oracle(&x)) < 1e-13);
        }
    }
}

#[test]
fn flat_plane_geometry_vanishes() {
    let plane = ManifoldModel::plane(3, 2).unwrap();
    let x = [0.4, -1.2, 0.0];
    assert_eq!(plane.s_tensor(&x).unwrap().max_abs(), 0.0);
    assert_eq!(plane.drift_r(&x).unwrap(), vec![0.0; 3]);
    assert_eq!(plane.christoffel(&x).unwrap().tensor().max_abs(), 0.0);
    assert_eq!(plane.q_via_remark(&x).unwrap(), vec![0.0; 3]);
}

#[test]
fn drift_examples() {
    let s2 = ManifoldModel::sphere(3).unwrap();
    let r = s2.drift_r(&[0.0, 0.0, 1.0]).unwrap();
    assert!(max_abs_diff(&r, &[0.0, 0.0, -1.0]) < 1e-15);
    let s1 = ManifoldModel::circle();
    let r = s1.drift_r(&[1.0, 0.0]).unwrap();
    assert!(max_abs_diff(&r, &[-0.5, 0.0]) < 1e-15);
    // r = −((n−1)/2) x on S^{n−1}.
    let s5 = ManifoldModel::sphere(6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = s5.sample_point(&mut rng);
    let r = s5.drift_r(&x).unwrap();
    let expected: Vec<f64> = x.iter().map(|v| -2.5 * v).collect();
    assert!(max_abs_diff(&r, &expected) < 1e-14);
}

#[test]
fn christoffel_examples_on_the_sphere() {
    let s2 = ManifoldModel::sphere(3).unwrap();
    let g = s2.christoffel(&[1.0, 0.0, 0.0]).unwrap();
    let mut expected = Tensor3::zeros(3);
    expected[(0, 1, 1)] = 1.0;
    expected[(0, 2, 2)] = 1.0;
    expected[(1, 0, 1)] = -1.0;
    expected[(2, 0, 2)] = -1.0;
    assert!(g.tensor().max_abs_diff(&expected) < 1e-15);

    // Closed form Γ^i_{jl} = x_i P^{jl} − x_j P^{il}, cross-checked against the FD model.
    let fd = ManifoldModel::sphere(3)
        .unwrap()
        .with_derivative_mode(DerivativeMode::FiniteDifference);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let x = s2.sample_point(&mut rng);
        let p = |i: usize, l: usize| if i == l { 1.0 } else { 0.0 } - x[i] * x[l];
        let g = s2.christoffel(&x).unwrap();
        let g_fd = fd.christoffel(&x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    let closed = x[i] * p(j, l) - x[j] * p(i, l);
                    assert!((g.get(i, j, l) - closed).abs() < 1e-14);
                    assert!((g_fd.get(i, j, l) - closed).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn christoffel_diagonal_is_zero() {
    let torus = ManifoldModel::torus(2.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let x = torus.sample_point(&mut rng);
        let g = torus.christoffel(&x).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(g.get(i, i, k), 0.0);
            }
        }
    }
}

#[test]
fn q_via_remark_matches_drift() {
    let s2 = ManifoldModel::sphere(3).unwrap();
    let q = s2.q_via_remark(&[0.0, 0.0, 1.0]).unwrap();
    assert!(max_abs_diff(&q, &[0.0, 0.0, -1.0]) < 1e-15);

    let torus = ManifoldModel::torus(2.0, 1.0).unwrap();
    let x = Torus::new(2.0, 1.0).unwrap().point(0.7, 2.1);
    let q = torus.q_via_remark(&x).unwrap();
    let r = torus.drift_r(&x).unwrap();
    assert!(max_abs_diff(&q, &r) < 1e-9);
    assert!(r.iter().any(|v| v.abs() > 0.1));
}

#[test]
fn analytic_derivatives_match_central_differences() {
    let models: Vec<ManifoldModel> = vec![
        ManifoldModel::circle(),
        ManifoldModel::sphere(3).unwrap(),
        ManifoldModel::sphere(7).unwrap(),
        ManifoldModel::torus(2.0, 1.0).unwrap(),
        ManifoldModel::torus(3.0, 0.5).unwrap(),
        ManifoldModel::plane(4, 2).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in &models {
        assert!(m.uses_analytic_derivative());
        for _ in 0..50 {
            let x = m.sample_point(&mut rng);
            let analytic = m.projection_derivative_at(&x).unwrap();
            let fd = central_fd_dp(m.shape(), &x, 1e-5);
            assert!(analytic.max_abs_diff(&fd) < 1e-6, "{}", m.label());
        }
    }
}

#[test]
fn ellipsoid_falls_back_to_finite_differences() {
    let e = ManifoldModel::ellipsoid(1.0, 2.0, 3.0).unwrap();
    assert!(!e.uses_analytic_derivative());
    let report = identity_suite(&e, 200, 1, IdentityTolerances::for_model(&e)).unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn retraction_examples() {
    let s2 = ManifoldModel::sphere(3).unwrap();
    assert_eq!(&*s2.retract(&[2.0, 0.0, 0.0]).unwrap(), &[1.0, 0.0, 0.0]);
    let x = [0.6, 0.0, 0.8];
    assert!(max_abs_diff(&s2.retract(&x).unwrap(), &x) < 1e-15);
    assert!(matches!(
        s2.retract(&[0.0, 0.0, 0.0]),
        Err(Error::CaptureRadiusExceeded { .. })
    ));

    let torus = ManifoldModel::torus(2.0, 1.0).unwrap();
    assert!(matches!(
        torus.retract(&[0.0, 2.0, 0.3]),
        Err(Error::CaptureRadiusExceeded { .. })
    ));
}

/// Nearest point on the torus by minimising |x − T(θ, φ)|² over the two
/// angles with alternating golden-section searches.
fn torus_nearest_by_minimisation(t: &Torus, x: &[f64], theta0: f64, phi0: f64) -> [f64; 3] {
    let dist2 = |th: f64, ph: f64| {
        let p = t.point(th, ph);
        (0..3).map(|i| (p[i] - x[i]).powi(2)).sum::<f64>()
    };
    let golden = |f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64| {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    };
    let (mut th, mut ph) = (theta0, phi0);
    for _ in 0..20 {
        th = golden(&|v| dist2(v, ph), th - 0.1, th + 0.1);
        ph = golden(&|v| dist2(th, v), ph - 0.1, ph + 0.1);
    }
    t.point(th, ph)
}

#[test]
fn torus_retraction_matches_minimisation_oracle() {
    let shape = Torus::new(2.0, 1.0).unwrap();
    let torus = ManifoldModel::torus(2.0, 1.0).unwrap();
    for &(th, ph) in &[(0.3, 1.1), (2.5, -0.4), (4.0, 3.0)] {
        let base = shape.point(th, ph);
        let normal = {
            let mut p = vec![0.0; 9];
            shape.projection(&base, &mut p);
            // Normal = (I − P) applied to the radial direction.
            let c = [
                2.0 * base[0] / (base[0].hypot(base[1])),
                2.0 * base[1] / (base[0].hypot(base[1])),
                0.0,
            ];
            let d: Vec<f64> = (0..3).map(|i| base[i] - c[i]).collect();
            d
        };
        let displaced: Vec<f64> = (0..3).map(|i| base[i] + 1e-3 * normal[i]).collect();
        let foot = torus.retract(&displaced).unwrap();
        let oracle = torus_nearest_by_minimisation(&shape, &displaced, th, ph);
        assert!(max_abs_diff(&foot, &oracle) < 1e-7);
        assert!(max_abs_diff(&foot, &base) < 1e-12);
        assert!(torus.distance(&foot) < 1e-12);
        // Idempotent.
        assert!(max_abs_diff(&torus.retract(&foot).unwrap(), &foot) < 1e-15);
    }
}

#[test]
fn ellipsoid_retraction_is_nearest_point() {
    let e = Ellipsoid::new(1.0, 2.0, 3.0).unwrap();
    let model = ManifoldModel::ellipsoid(1.0, 2.0, 3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let y = model.sample_point(&mut rng);
        let mut p = vec![0.0; 9];
        e.projection(&y, &mut p);
        let nu = [y[0], y[1] / 4.0, y[2] / 9.0];
        let len = crate::linalg::norm(&nu);
        for s in [-0.2, -1e-3, 1e-3, 0.2] {
            let x: Vec<f64> = (0..3).map(|i| y[i] + s * nu[i] / len).collect();
            let foot = model.retract(&x).unwrap();
            assert!(
                max_abs_diff(&foot, &y) < 1e-9,
                "{x:?} -> {foot:?}, expected {y:?}"
            );
            let g: f64 = foot[0].powi(2) + foot[1].powi(2) / 4.0 + foot[2].powi(2) / 9.0;
            assert!((g - 1.0).abs() < 1e-12);
        }
    }
}

/// Unit sphere with the extension `I − xxᵀ/|x|² + (|x|² − 1)(e₁e₂ᵀ + e₂e₁ᵀ)`,
/// which agrees with the global one only on the sphere itself.
struct PerturbedSphere(Sphere);

impl Shape for PerturbedSphere {
    fn ambient_dim(&self) -> usize {
        self.0.ambient_dim()
    }

    fn intrinsic_dim(&self) -> usize {
        self.0.intrinsic_dim()
    }

    fn label(&self) -> String {
        "perturbed-sphere".into()
    }

    fn projection(&self, x: &[f64], out: &mut [f64]) {
        self.0.projection(x, out);
        let bump = x.iter().map(|v| v * v).sum::<f64>() - 1.0;
        let n = x.len();
        out[1] += bump;
        out[n] += bump;
    }

    fn distance(&self, x: &[f64]) -> f64 {
        self.0.distance(x)
    }

    fn retract(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.0.retract(x, out)
    }

    fn capture_radius(&self) -> f64 {
        self.0.capture_radius()
    }

    fn sample_point(&self, rng: &mut dyn rand::RngCore, out: &mut [f64]) {
        self.0.sample_point(rng, out)
    }
}

#[test]
fn contracted_christoffel_is_extension_independent() {
    let global = ManifoldModel::sphere(3).unwrap();
    let retracted =
        ManifoldModel::new(Box::new(RetractedExtension::new(Sphere::new(3).unwrap()))).unwrap();
    let perturbed = ManifoldModel::new(Box::new(PerturbedSphere(Sphere::new(3).unwrap()))).unwrap();
    assert!(!retracted.uses_analytic_derivative());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let x = global.sample_point(&mut rng);
        let p = global.projection_at(&x).unwrap();
        let raw: Vec<f64> = (0..3)
            .map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5)
            .collect();
        let v = p.mul_vec(&raw);
        let a = global.christoffel(&x).unwrap().contract(&v);
        for other in [&retracted, &perturbed] {
            let b = other.christoffel(&x).unwrap().contract(&v);
            assert!(a.max_abs_diff(&b) < 1e-5);
        }
    }
    // Contracted with the normal, the extensions disagree.
    let x = [1.0, 0.0, 0.0];
    let a = global.christoffel(&x).unwrap();
    let b = perturbed.christoffel(&x).unwrap();
    assert!(a.tensor().max_abs_diff(b.tensor()) > 1e-2);
}

#[test]
fn identity_suite_passes_on_builtins() {
    let models = [
        ManifoldModel::sphere(3).unwrap(),
        ManifoldModel::torus(2.0, 1.0).unwrap(),
        ManifoldModel::plane(3, 2).unwrap(),
        ManifoldModel::sphere(5).unwrap(),
        ManifoldModel::torus(2.0, 1.0)
            .unwrap()
            .with_derivative_mode(DerivativeMode::FiniteDifference),
    ];
    for m in &models {
        let report = identity_suite(m, 300, 7, IdentityTolerances::for_model(m)).unwrap();
        assert!(report.passed(), "{}: {:?}", m.label(), report.violations());
    }
}

struct SkewedSphere;

impl Shape for SkewedSphere {
    fn ambient_dim(&self) -> usize {
        3
    }
    fn intrinsic_dim(&self) -> usize {
        2
    }
    fn label(&self) -> String {
        "skewed".into()
    }
    fn projection(&self, x: &[f64], out: &mut [f64]) {
        Sphere::new(3).unwrap().projection(x, out);
        out[1] += 1e-3;
    }
    fn distance(&self, x: &[f64]) -> f64 {
        Sphere::new(3).unwrap().distance(x)
    }
    fn retract(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        Sphere::new(3).unwrap().retract(x, out)
    }
    fn capture_radius(&self) -> f64 {
        1.0
    }
    fn sample_point(&self, rng: &mut dyn rand::RngCore, out: &mut [f64]) {
        Sphere::new(3).unwrap().sample_point(rng, out)
    }
}

#[test]
fn identity_suite_flags_a_corrupted_projector() {
    let m = ManifoldModel::new(Box::new(SkewedSphere)).unwrap();
    let report = identity_suite(&m, 50, 1, IdentityTolerances::for_model(&m)).unwrap();
    assert!(!report.passed());
    let worst = report.violations();
    assert!(worst.iter().any(|c| c.name == "symmetry"));
}

proptest! {
    #[test]
    fn sphere_projector_identities(z in proptest::collection::vec(-1.0f64..1.0, 4), scale in 0.5f64..2.0) {
        prop_assume!(crate::linalg::norm(&z) > 1e-3);
        let m = ManifoldModel::sphere(4).unwrap().with_capture_radius(f64::INFINITY);
        let near: Vec<f64> = z.iter().map(|v| v * scale).collect();
        let x = m.retract(&near).unwrap();
        let p = m.projection_at(&x).unwrap();
        prop_assert!(p.max_abs_diff(&p.transpose()) < 1e-12);
        prop_assert!(p.matmul(&p).max_abs_diff(&p) < 1e-10);
        prop_assert!((p.trace() - 3.0).abs() < 1e-10);
        let g = m.christoffel(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    prop_assert_eq!(g.get(i, j, k), -g.get(j, i, k));
                }
            }
        }
        prop_assert!(max_abs_diff(&m.retract(&x).unwrap(), &x) < 1e-15);
    }
}
