mod common;

use common::*;
use proptest::prelude::*;
use rtk_denoise::energy::energy_grad;
use rtk_denoise::field::{Activation, FieldSpec, GaussianData, GaussianOracleField};
use rtk_denoise::rng::seeded;
use rtk_denoise::samplers::{
    ddim_sample, ddim_transition, dddm_sample, ddpm_sample, full_grid, pf_euler, pf_euler_endpoint,
    predict_score, rtk_loop, run_batch, validate_grid, CleanPredictor, DddmOptions, DdimKernel, FieldPredictor,
    GaussianPredictor,
};
use rtk_denoise::schedule::Schedule;

fn oracle_fields(sched: &Schedule, data: &GaussianData) -> Vec<GaussianOracleField> {
    (0..sched.steps())
        .map(|k| data.oracle_field(sched, sched.forward_index(k)).unwrap())
        .collect()
}

#[test]
fn dddm_with_oracle_fields_composes_transports() {
    let sched = Schedule::cosine(32, 0.008).unwrap();
    let data = GaussianData::new(vec![1.0, -2.0], 0.4).unwrap();
    let fields = oracle_fields(&sched, &data);
    let x = [0.3, -1.1];
    let traj = dddm_sample(&sched, &fields, &x, &DddmOptions::default()).unwrap();
    let mut z = x.to_vec();
    for (k, f) in fields.iter().enumerate() {
        z = f.transport(&z).unwrap();
        assert!(max_abs_diff(&z, &traj.states[k + 1]) < 1e-13);
    }
    assert_eq!(traj.times.first(), Some(&32.0));
    assert_eq!(traj.times.last(), Some(&0.0));
}

#[test]
fn refined_dddm_solves_the_implicit_step() {
    // The proxy energy of an affine field is minimized where z = x − F(z).
    let sched = Schedule::cosine(16, 0.008).unwrap();
    let data = GaussianData::new(vec![0.5], 0.2).unwrap();
    let fields = oracle_fields(&sched, &data);
    let opts = DddmOptions {
        inner_iters: 5,
        ..DddmOptions::default()
    };
    let traj = dddm_sample(&sched, &fields, &[1.2], &opts).unwrap();
    assert_eq!(traj.solves.as_ref().map(Vec::len), Some(16));
    for (k, f) in fields.iter().enumerate() {
        let (a, c) = f.transport_coefficients();
        let want = (traj.states[k][0] + c[0]) / (2.0 - a);
        assert!((traj.states[k + 1][0] - want).abs() < 1e-12);
    }
}

#[test]
fn refined_dddm_lands_on_stationary_points() {
    let sched = Schedule::cosine(8, 0.008).unwrap();
    let mut rng = seeded(11);
    let fields: Vec<FieldSpec> = (0..8)
        .map(|_| FieldSpec::OneLayer(random_one_layer(&mut rng, 2, 4, Activation::Tanh, 0.3)))
        .collect();
    let opts = DddmOptions {
        inner_iters: 50,
        solver_tol: 1e-8,
        ..DddmOptions::default()
    };
    let traj = dddm_sample(&sched, &fields, &[0.4, -0.2], &opts).unwrap();
    for (k, s) in traj.solves.unwrap().iter().enumerate() {
        assert!(s.converged, "step {k}: {s:?}");
        let sigma = sched.beta(sched.forward_index(k)).sqrt();
        let g = energy_grad(&fields[k], &traj.states[k], &traj.states[k + 1], sigma).unwrap();
        assert!(max_abs(&g) <= 1e-8);
    }
}

#[test]
fn certified_dddm_reports_every_step() {
    let sched = Schedule::cosine(16, 0.008).unwrap();
    let data = GaussianData::new(vec![0.0, 1.0], 0.25).unwrap();
    let fields = oracle_fields(&sched, &data);
    let opts = DddmOptions {
        certify_steps: true,
        ..DddmOptions::default()
    };
    let traj = dddm_sample(&sched, &fields, &[0.1, 0.2], &opts).unwrap();
    let reports = traj.reports.unwrap();
    assert_eq!(reports.len(), 16);
    assert!(reports.iter().all(|r| r.certified && r.margin > 0.0));
}

#[test]
fn dddm_rejects_bad_input() {
    let sched = Schedule::cosine(4, 0.008).unwrap();
    let data = GaussianData::new(vec![0.0], 1.0).unwrap();
    let fields = oracle_fields(&sched, &data);
    assert!(dddm_sample(&sched, &fields[..3], &[0.0], &DddmOptions::default()).is_err());
    assert!(dddm_sample(&sched, &fields, &[f64::NAN], &DddmOptions::default()).is_err());
    assert!(dddm_sample(&sched, &fields, &[0.0, 0.0], &DddmOptions::default()).is_err());
    let zero_iters = DddmOptions {
        inner_iters: 0,
        ..DddmOptions::default()
    };
    assert!(dddm_sample(&sched, &fields, &[0.0], &zero_iters).is_err());
}

#[test]
fn ddim_grid_validation() {
    let sched = Schedule::cosine(8, 0.008).unwrap();
    assert!(validate_grid(&sched, &[0, 4, 8]).is_ok());
    assert!(validate_grid(&sched, &[1, 4, 8]).is_err());
    assert!(validate_grid(&sched, &[0, 4, 7]).is_err());
    assert!(validate_grid(&sched, &[0, 4, 4, 8]).is_err());
    assert!(validate_grid(&sched, &[0]).is_err());
    assert_eq!(full_grid(&sched), (0..=8).collect::<Vec<_>>());
}

#[test]
fn ddim_transition_closed_form() {
    let sched = Schedule::cosine(10, 0.008).unwrap();
    let data = GaussianData::new(vec![0.7], 0.3).unwrap();
    let p = GaussianPredictor::new(data.clone());
    let (t, s) = (7, 3);
    let x = [0.9];
    let (a, a_prev) = (sched.alpha_bar(t), sched.alpha_bar(s));
    let x0 = data.posterior_mean(&x, a)[0];
    let eps = (x[0] - a.sqrt() * x0) / (1.0 - a).sqrt();
    let want = a_prev.sqrt() * x0 + (1.0 - a_prev).sqrt() * eps;
    assert!((ddim_transition(&sched, &p, &x, t, s)[0] - want).abs() < 1e-14);
}

#[test]
fn ddim_kernel_matches_ddim_sample() {
    let sched = Schedule::cosine(12, 0.008).unwrap();
    let p = GaussianPredictor::new(GaussianData::new(vec![1.0, 0.0], 0.5).unwrap());
    let grid = vec![0, 3, 7, 12];
    let direct = ddim_sample(&sched, &p, &grid, &[0.2, -0.4]).unwrap();
    let kernel = DdimKernel::new(&sched, &p, grid.clone()).unwrap();
    let looped = rtk_loop(&kernel, &[0.2, -0.4], 3, &mut seeded(0)).unwrap();
    assert_eq!(direct.states, looped.states);
    assert_eq!(direct.times, looped.times);
}

#[test]
fn pf_euler_trajectory_and_endpoint_agree() {
    let sched = Schedule::cosine(16, 0.008).unwrap();
    let p = GaussianPredictor::new(GaussianData::new(vec![-0.5], 0.3).unwrap());
    let traj = pf_euler(&sched, &p, &[0.8], 40).unwrap();
    assert_eq!(traj.states.len(), 41);
    assert_eq!(traj.endpoint(), pf_euler_endpoint(&sched, &p, &[0.8], 40).unwrap().as_slice());
    assert!(traj.times.windows(2).all(|w| w[1] < w[0]));
    assert!(pf_euler(&sched, &p, &[0.8], 0).is_err());
}

#[test]
fn pf_euler_converges_to_the_exact_flow() {
    let sched = Schedule::cosine(32, 0.008).unwrap();
    let data = GaussianData::new(vec![1.0], 0.25).unwrap();
    let p = GaussianPredictor::new(data.clone());
    let exact = oracle_fields(&sched, &data)
        .iter()
        .fold(vec![-0.4], |z, f| f.transport(&z).unwrap());
    let errs: Vec<f64> = [64, 256, 1024]
        .iter()
        .map(|&k| (pf_euler_endpoint(&sched, &p, &[-0.4], k).unwrap()[0] - exact[0]).abs())
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    assert!(errs[2] < 1e-2);
}

#[test]
fn ddpm_is_seeded() {
    let sched = Schedule::cosine(8, 0.008).unwrap();
    let p = GaussianPredictor::new(GaussianData::new(vec![0.0, 1.0], 0.5).unwrap());
    let a = ddpm_sample(&sched, &p, &[0.1, 0.1], 9).unwrap();
    let b = ddpm_sample(&sched, &p, &[0.1, 0.1], 9).unwrap();
    let c = ddpm_sample(&sched, &p, &[0.1, 0.1], 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.endpoint(), c.endpoint());
    assert_eq!(a.seed, Some(9));
}

#[test]
fn field_predictor_serves_the_matching_step() {
    let sched = Schedule::cosine(4, 0.008).unwrap();
    let data = GaussianData::new(vec![0.3], 0.5).unwrap();
    let fields = oracle_fields(&sched, &data);
    let p = FieldPredictor::new(fields.clone()).unwrap();
    for k in 0..4 {
        let t = sched.forward_index(k);
        let got = p.predict_clean(&sched, &[0.7], t as f64);
        let want = 0.7 - fields[k].transport(&[0.7]).map(|v| 0.7 - v[0]).unwrap();
        assert!((got[0] - want).abs() < 1e-15);
    }
    assert!(FieldPredictor::<GaussianOracleField>::new(vec![]).is_err());
}

#[test]
fn batches_do_not_depend_on_thread_count() {
    let sched = Schedule::cosine(8, 0.008).unwrap();
    let p = GaussianPredictor::new(GaussianData::new(vec![1.0], 0.5).unwrap());
    let job = |_: usize, r: &mut rtk_denoise::rng::SeededRng| {
        let x = rtk_denoise::rng::standard_normal(r, 1);
        let seed = rand::Rng::random(r);
        ddpm_sample(&sched, &p, &x, seed).unwrap().endpoint()[0]
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_batch(200, 21, job));
    let b = four.install(|| run_batch(200, 21, job));
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(prop_config(64))]

    #[test]
    fn gaussian_predictor_score_is_exact(mean in -3.0f64..3.0, var in 0.05f64..3.0, x in -5.0f64..5.0, tau in 0.5f64..16.0) {
        let sched = Schedule::cosine(16, 0.008).unwrap();
        let data = GaussianData::new(vec![mean], var).unwrap();
        let p = GaussianPredictor::new(data.clone());
        let a = sched.alpha_bar_at(tau);
        let v = var * a + 1.0 - a;
        let want = -(x - a.sqrt() * mean) / v;
        let got = predict_score(&p, &sched, &[x], tau)[0];
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn ddim_on_a_point_mass_lands_on_it(mu in -3.0f64..3.0, x in -3.0f64..3.0, cut in 1usize..15) {
        // With a point mass every clean estimate is exact, so any grid ends at μ.
        let sched = Schedule::cosine(16, 0.008).unwrap();
        let p = GaussianPredictor::new(GaussianData::new(vec![mu], 1e-300).unwrap());
        let traj = ddim_sample(&sched, &p, &[0, cut, 16], &[x]).unwrap();
        prop_assert!((traj.endpoint()[0] - mu).abs() < 1e-9);
    }
}
