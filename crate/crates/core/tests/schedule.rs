mod common;

use common::prop_config;
use proptest::prelude::*;
use rtk_denoise::rng::seeded;
use rtk_denoise::schedule::{Schedule, DEFAULT_BETA_MAX};

/// Cosine `ᾱ` from the closed form, clamping `β` on the way.
fn cosine_oracle(steps: usize, s: f64) -> Vec<f64> {
    let f = |t: f64| (((t / steps as f64) + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
    let mut out = vec![1.0];
    for t in 1..=steps {
        let beta = (1.0 - f(t as f64) / f((t - 1) as f64)).min(DEFAULT_BETA_MAX);
        out.push(out[t - 1] * (1.0 - beta));
    }
    out
}

#[test]
fn cosine_matches_closed_form() {
    for steps in [1, 8, 64, 1000] {
        let sched = Schedule::cosine(steps, 0.008).unwrap();
        for (a, b) in sched.alpha_bars().iter().zip(cosine_oracle(steps, 0.008)) {
            assert!((a - b).abs() <= 1e-14 * b.max(1e-300), "T={steps}: {a} vs {b}");
        }
    }
}

#[test]
fn last_beta_is_clamped() {
    let sched = Schedule::cosine(1000, 0.008).unwrap();
    assert_eq!(sched.beta(1000), DEFAULT_BETA_MAX);
    assert!(sched.alpha_bar(1000) > 0.0);
}

#[test]
fn json_round_trip() {
    let sched = Schedule::cosine(32, 0.008).unwrap();
    let text = serde_json::to_string(&sched).unwrap();
    let back: Schedule = serde_json::from_str(&text).unwrap();
    assert_eq!(back.alpha_bars(), sched.alpha_bars());
    assert_eq!(back.log_alpha_bar_at(3.5), sched.log_alpha_bar_at(3.5));
}

#[test]
fn inconsistent_json_is_rejected() {
    let sched = Schedule::cosine(4, 0.008).unwrap();
    let mut v: serde_json::Value = serde_json::to_value(&sched).unwrap();
    v["alpha_bar"][2] = serde_json::json!(0.5);
    assert!(serde_json::from_value::<Schedule>(v).is_err());
}

#[test]
fn bad_arguments() {
    assert!(Schedule::cosine(0, 0.008).is_err());
    assert!(Schedule::cosine(10, -1.0).is_err());
    assert!(Schedule::from_betas(&[0.1, 1.0]).is_err());
    let sched = Schedule::cosine(4, 0.008).unwrap();
    assert!(sched.forward_marginal(&[0.0], 5).is_err());
}

#[test]
fn forward_sample_moments() {
    let sched = Schedule::cosine(16, 0.008).unwrap();
    let mut rng = seeded(3);
    let t = 8;
    let n = 20_000;
    let draws: Vec<f64> = (0..n).map(|_| sched.forward_sample(&[2.0], t, &mut rng).unwrap()[0]).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let a = sched.alpha_bar(t);
    assert!((mean - 2.0 * a.sqrt()).abs() < 4.0 * ((1.0 - a) / n as f64).sqrt());
    assert!((var - (1.0 - a)).abs() < 4.0 * (1.0 - a) * (2.0 / n as f64).sqrt());
    assert_eq!(sched.forward_sample(&[2.0], 0, &mut rng).unwrap(), vec![2.0]);
}

proptest! {
    #![proptest_config(prop_config(256))]

    #[test]
    fn alpha_bar_decreases(steps in 1usize..400, s in 0.0f64..0.1) {
        let sched = Schedule::cosine(steps, s).unwrap();
        let a = sched.alpha_bars();
        prop_assert_eq!(a[0], 1.0);
        prop_assert!(a.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        prop_assert!(sched.betas().iter().all(|b| *b > 0.0 && *b <= DEFAULT_BETA_MAX));
    }

    #[test]
    fn interpolation_is_monotone_and_exact_on_integers(steps in 2usize..200, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let sched = Schedule::cosine(steps, 0.008).unwrap();
        let (lo, hi) = (u.min(v) * steps as f64, u.max(v) * steps as f64);
        prop_assert!(sched.log_alpha_bar_at(hi) <= sched.log_alpha_bar_at(lo));
        let t = (u * steps as f64).floor() as usize;
        prop_assert_eq!(sched.alpha_bar_at(t as f64), sched.alpha_bar(t));
        prop_assert!((sched.log_alpha_bar_at(t as f64) - sched.alpha_bar(t).ln()).abs() < 1e-12);
    }

    #[test]
    fn reverse_and_forward_indices_pair(steps in 1usize..500, k in 0usize..500) {
        let sched = Schedule::cosine(steps, 0.008).unwrap();
        let k = k % steps;
        prop_assert_eq!(sched.forward_index(k) + k, steps);
    }

    #[test]
    fn marginal_variance_complements_signal(steps in 1usize..100, t in 0usize..100, x in -5.0f64..5.0) {
        let sched = Schedule::cosine(steps, 0.008).unwrap();
        let t = t % (steps + 1);
        let g = sched.forward_marginal(&[x], t).unwrap();
        let a = sched.alpha_bar(t);
        prop_assert!((g.variance + a - 1.0).abs() < 1e-15);
        prop_assert!((g.mean[0] - a.sqrt() * x).abs() < 1e-12);
    }
}
