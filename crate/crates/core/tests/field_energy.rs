mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rtk_denoise::energy::{
    certify_pointwise, certify_uniform, energy, energy_grad, energy_hessian, is_discrete_log_concave,
    log_sum_exp, minimize_energy, prekopa_check, probe_points, residual_at, SolveOptions,
};
use rtk_denoise::field::{Activation, AffineField, BoxRegion, DenoisingField, FieldSpec, GaussianData};
use rtk_denoise::linalg::Matrix;
use rtk_denoise::rng::seeded;
use rtk_denoise::schedule::Schedule;
use rtk_denoise::Error;

fn act(i: u8) -> Activation {
    [Activation::Tanh, Activation::Softplus, Activation::Relu][i as usize % 3]
}

#[test]
fn energy_vanishes_at_a_fixed_point() {
    let mut rng = seeded(1);
    let field = random_one_layer(&mut rng, 3, 4, Activation::Tanh, 0.5);
    let z = normal_vec(&mut rng, 3);
    let fz = field.apply(&z);
    let x: Vec<f64> = z.iter().zip(&fz).map(|(a, f)| a + f).collect();
    assert!(energy(&field, &x, &z, 0.3).unwrap() < 1e-28);
    assert!(max_abs(&energy_grad(&field, &x, &z, 0.3).unwrap()) < 1e-13);
}

#[test]
fn invalid_inputs_are_rejected() {
    let field = AffineField::zero(2);
    let ok = [0.0, 0.0];
    assert!(matches!(energy(&field, &ok, &ok, 0.0), Err(Error::InvalidArgument(_))));
    assert!(matches!(energy(&field, &ok, &ok, f64::NAN), Err(Error::InvalidArgument(_))));
    assert!(energy(&field, &ok, &[0.0], 1.0).is_err());
    assert!(energy(&field, &ok, &[f64::INFINITY, 0.0], 1.0).is_err());
    assert!(energy_hessian(&field, &[f64::NAN, 0.0], &ok, 1.0).is_err());
    assert!(BoxRegion::new(vec![0.0], vec![0.0]).is_err());
    let region = BoxRegion::around(&ok, 1.0).unwrap();
    assert!(certify_uniform(&field, &ok, &region, 1.0, 0, &mut seeded(0)).is_err());
}

#[test]
fn field_spec_json_round_trip() {
    let mut rng = seeded(2);
    let sched = Schedule::cosine(8, 0.008).unwrap();
    let specs = vec![
        FieldSpec::Affine(random_affine(&mut rng, 2, 0.5)),
        FieldSpec::OneLayer(random_one_layer(&mut rng, 2, 3, Activation::Softplus, 0.5)),
        FieldSpec::OneLayer(random_context_field(&mut rng, 2, 2, 3, Activation::Tanh, 0.5)),
        FieldSpec::GaussianOracle(GaussianData::new(vec![1.0, 2.0], 0.5).unwrap().oracle_field(&sched, 3).unwrap()),
    ];
    let text = serde_json::to_string(&specs).unwrap();
    let back: Vec<FieldSpec> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, specs);
    for s in &back {
        s.validate().unwrap();
    }
    let bad = r#"{"kind": "affine", "lambda": [[1.0, 0.0]], "bias": [0.0]}"#;
    let rejected = match serde_json::from_str::<FieldSpec>(bad) {
        Ok(spec) => spec.validate().is_err(),
        Err(_) => true,
    };
    assert!(rejected);
}

#[test]
fn oracle_field_is_its_affine_form() {
    let sched = Schedule::cosine(16, 0.008).unwrap();
    let data = GaussianData::new(vec![0.5, -1.0], 0.3).unwrap();
    let field = data.oracle_field(&sched, 9).unwrap();
    let affine = field.as_affine();
    let z = [0.3, 2.0];
    assert!(max_abs_diff(&field.apply(&z), &affine.apply(&z)) < 1e-15);
    let moved = field.transport(&z).unwrap();
    let fz = field.apply(&z);
    assert!(max_abs_diff(&moved, &[z[0] - fz[0], z[1] - fz[1]]) < 1e-15);
    assert!(data.oracle_field(&sched, 0).is_err());
    assert!(data.oracle_field(&sched, 17).is_err());
}

#[test]
fn prekopa_helpers() {
    assert!(is_discrete_log_concave(&[-4.0, -1.0, 0.0, -1.0, -4.0], 0.0));
    assert!(!is_discrete_log_concave(&[0.0, -2.0, 0.0], 1e-9));
    assert!(is_discrete_log_concave(&[f64::NEG_INFINITY, -5.0, f64::NEG_INFINITY], 0.0));
    assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    assert!(prekopa_check(&Matrix::zeros(2, 5)).is_err());
    let mut g = Matrix::zeros(3, 3);
    g[(1, 1)] = f64::NAN;
    assert!(prekopa_check(&g).is_err());
}

#[test]
fn probes_cover_corners_and_center() {
    let region = BoxRegion::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
    let pts = probe_points(&region, 10, &mut seeded(4));
    assert_eq!(pts.len(), 4 + 1 + 10);
    assert!(pts.contains(&vec![-1.0, 0.0]) && pts.contains(&vec![1.0, 2.0]));
    assert!(pts.contains(&vec![0.0, 1.0]));
    for p in &pts {
        assert!((-1.0..=1.0).contains(&p[0]) && (0.0..=2.0).contains(&p[1]));
    }
}

proptest! {
    #![proptest_config(prop_config(64))]

    #[test]
    fn energy_is_half_squared_residual(seed: u64, d in 1usize..6, a in 0u8..3, sigma in 0.1f64..3.0) {
        let mut rng = seeded(seed);
        let field = random_one_layer(&mut rng, d, 4, act(a), 0.8);
        let (x, z) = (normal_vec(&mut rng, d), normal_vec(&mut rng, d));
        let r = residual_at(&field, &x, &z).unwrap();
        let e = energy(&field, &x, &z, sigma).unwrap();
        prop_assert!(e >= 0.0);
        let want = r.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma * sigma);
        prop_assert!((e - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn hessian_is_symmetric(seed: u64, d in 1usize..6, a in 0u8..3) {
        let mut rng = seeded(seed);
        let field = random_one_layer(&mut rng, d, 5, act(a), 1.0);
        let (x, z) = (normal_vec(&mut rng, d), normal_vec(&mut rng, d));
        let h = energy_hessian(&field, &x, &z, 0.7).unwrap();
        prop_assert!(h.asymmetry() <= 1e-12 * h.max_abs().max(1.0));
    }

    #[test]
    fn certified_margin_bounds_the_spectrum(seed: u64, d in 1usize..8, a in 0u8..2, eps in 0.0f64..0.3) {
        let mut rng = seeded(seed);
        let field = random_one_layer(&mut rng, d, 6, act(a), 0.3);
        let z = normal_vec(&mut rng, d);
        let fz = field.apply(&z);
        let x: Vec<f64> = z.iter().zip(&fz).map(|(a, f)| a + f + eps * rng.random_range(-1.0..1.0)).collect();
        let rep = certify_pointwise(&field, &x, &z, 0.5).unwrap();
        if rep.certified {
            let lam = min_eig(&energy_hessian(&field, &x, &z, 0.5).unwrap());
            prop_assert!(lam >= rep.margin - 1e-10);
        }
    }

    #[test]
    fn pointwise_bounds_dominate(seed: u64, d in 1usize..6, h in 1usize..8, a in 0u8..3) {
        let mut rng = seeded(seed);
        let field = random_one_layer(&mut rng, d, h, act(a), 1.0);
        let z = normal_vec(&mut rng, d);
        let b = field.bounds(&z).unwrap();
        let e = field.evaluate(&z);
        prop_assert!(b.kappa_bound >= op_norm(&e.jacobian) * (1.0 - 1e-12));
        for hi in &e.hessians {
            prop_assert!(b.b_bound >= sym_abs_max_eig(hi) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn uniform_bounds_dominate_inside_the_box(seed: u64, d in 1usize..5, a in 0u8..3, half in 0.05f64..2.0) {
        let mut rng = seeded(seed);
        let field = random_context_field(&mut rng, d, 2, 5, act(a), 1.0);
        let center = normal_vec(&mut rng, d);
        let region = BoxRegion::around(&center, half).unwrap();
        let u = field.uniform_bounds(&region).unwrap();
        for _ in 0..20 {
            let p: Vec<f64> = center.iter().map(|c| c + half * rng.random_range(-1.0..1.0)).collect();
            let b = field.bounds(&p).unwrap();
            prop_assert!(u.kappa >= b.kappa_bound * (1.0 - 1e-12));
            prop_assert!(u.curvature >= b.b_bound * (1.0 - 1e-12));
        }
    }

    #[test]
    fn newton_reaches_a_stationary_point(seed: u64, d in 1usize..5) {
        let mut rng = seeded(seed);
        let field = random_one_layer(&mut rng, d, 4, Activation::Tanh, 0.4);
        let x = normal_vec(&mut rng, d);
        let z0 = normal_vec(&mut rng, d);
        let out = minimize_energy(&field, &x, &z0, 0.5, SolveOptions { max_iters: 100, tol: 1e-7 }).unwrap();
        prop_assert!(out.energies.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(out.converged, "grad norm {}", out.grad_norm);
        let g = energy_grad(&field, &x, &out.z, 0.5).unwrap();
        prop_assert!(max_abs(&g) <= 1e-7);
    }
}
