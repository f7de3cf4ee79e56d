use rand::RngCore;

use super::{score_into, CleanPredictor, Trajectory};
use crate::error::{check_dim, check_finite, invalid, Result};
use crate::rng::{seeded, standard_normal};
use crate::schedule::Schedule;

/// One ancestral draw `x_{t−1} = (x_t + β_t ŝ)/√(1 − β_t) + √β_t·z`.
pub fn ddpm_step<P: CleanPredictor + ?Sized>(
    schedule: &Schedule,
    predictor: &P,
    x_t: &[f64],
    t: usize,
    rng: &mut (impl RngCore + ?Sized),
) -> Result<Vec<f64>> {
    if t == 0 || t > schedule.steps() {
        return invalid(format!("ddpm step needs 1 ≤ t ≤ {}, got {t}", schedule.steps()));
    }
    check_dim("x_t", x_t, predictor.dim())?;
    check_finite("x_t", x_t)?;
    Ok(ddpm_mean_then_noise(schedule, predictor, x_t, t, schedule.beta(t), rng))
}

/// Shared by the DDPM chain and the Gaussian transition kernel.
pub(crate) fn ddpm_mean_then_noise<P: CleanPredictor + ?Sized>(
    schedule: &Schedule,
    predictor: &P,
    x: &[f64],
    t: usize,
    variance: f64,
    rng: &mut (impl RngCore + ?Sized),
) -> Vec<f64> {
    let beta = schedule.beta(t);
    let mut s = vec![0.0; x.len()];
    score_into(predictor, schedule, x, t as f64, &mut s);
    let scale = 1.0 / (1.0 - beta).sqrt();
    let sd = variance.sqrt();
    let noise = standard_normal(rng, x.len());
    x.iter()
        .zip(&s)
        .zip(noise)
        .map(|((xi, si), z)| (xi + beta * si) * scale + sd * z)
        .collect()
}

/// Full ancestral chain from `x_T` over all `T` steps.
pub fn ddpm_sample<P: CleanPredictor + ?Sized>(
    schedule: &Schedule,
    predictor: &P,
    x_t: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = seeded(seed);
    let steps = schedule.steps();
    let mut traj = Trajectory::start(x_t, steps as f64, Some(seed));
    let mut x = x_t.to_vec();
    for t in (1..=steps).rev() {
        x = ddpm_step(schedule, predictor, &x, t, &mut rng)?;
        traj.states.push(x.clone());
        traj.times.push((t - 1) as f64);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GaussianData;
    use crate::samplers::GaussianPredictor;

    #[test]
    fn rejects_step_zero() {
        let s = Schedule::cosine(4, 0.008).unwrap();
        let p = GaussianPredictor::new(GaussianData::new(vec![0.0], 1.0).unwrap());
        assert!(ddpm_step(&s, &p, &[0.0], 0, &mut seeded(0)).is_err());
        assert!(ddpm_step(&s, &p, &[0.0], 5, &mut seeded(0)).is_err());
    }

    #[test]
    fn tiny_beta_moves_little() {
        let s = Schedule::from_betas(&[1e-8, 1e-8]).unwrap();
        let p = GaussianPredictor::new(GaussianData::new(vec![1.0], 0.5).unwrap());
        let x = [0.7];
        let y = ddpm_step(&s, &p, &x, 2, &mut seeded(3)).unwrap();
        assert!((y[0] - x[0]).abs() < 1e-3);
    }

    #[test]
    fn seeded_chain_reproduces() {
        let s = Schedule::cosine(10, 0.008).unwrap();
        let p = GaussianPredictor::new(GaussianData::new(vec![2.0, -1.0], 0.25).unwrap());
        let a = ddpm_sample(&s, &p, &[0.1, 0.2], 11).unwrap();
        let b = ddpm_sample(&s, &p, &[0.1, 0.2], 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states.len(), 11);
        assert_eq!(a.seed, Some(11));
    }
}
