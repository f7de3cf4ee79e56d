use super::{score_into, CleanPredictor, Trajectory};
use crate::error::{check_dim, check_finite, invalid, Result};
use crate::schedule::Schedule;

/// Backward Euler integration of `dx/dτ = −½β(τ)(x + ∇log p_τ(x))` from
/// `τ = T` to `0` in `K` equal steps of `η = T/K` index units.
///
/// Each step integrates `β` exactly over its interval,
/// `∫β = log ᾱ(τ − η) − log ᾱ(τ)`, with `log ᾱ` interpolated linearly.
pub fn pf_euler<P: CleanPredictor + ?Sized>(
    schedule: &Schedule,
    predictor: &P,
    x_t: &[f64],
    k_steps: usize,
) -> Result<Trajectory> {
    check_args(predictor, x_t, k_steps)?;
    let mut traj = Trajectory::start(x_t, schedule.steps() as f64, None);
    let mut x = x_t.to_vec();
    let mut s = vec![0.0; x.len()];
    for k in 0..k_steps {
        let (tau, next) = step_times(schedule, k, k_steps);
        euler_step(schedule, predictor, &mut x, &mut s, tau, next);
        traj.states.push(x.clone());
        traj.times.push(next);
    }
    Ok(traj)
}

/// Endpoint of [`pf_euler`] without storing the path.
pub fn pf_euler_endpoint<P: CleanPredictor + ?Sized>(
    schedule: &Schedule,
    predictor: &P,
    x_t: &[f64],
    k_steps: usize,
) -> Result<Vec<f64>> {
    check_args(predictor, x_t, k_steps)?;
    let mut x = x_t.to_vec();
    let mut s = vec![0.0; x.len()];
    for k in 0..k_steps {
        let (tau, next) = step_times(schedule, k, k_steps);
        euler_step(schedule, predictor, &mut x, &mut s, tau, next);
    }
    Ok(x)
}

fn check_args<P: CleanPredictor + ?Sized>(predictor: &P, x: &[f64], k_steps: usize) -> Result<()> {
    if k_steps == 0 {
        return invalid("K must be at least 1");
    }
    check_dim("x_T", x, predictor.dim())?;
    check_finite("x_T", x)
}

fn step_times(schedule: &Schedule, k: usize, k_steps: usize) -> (f64, f64) {
    let horizon = schedule.steps() as f64;
    let tau = horizon * (k_steps - k) as f64 / k_steps as f64;
    let next = horizon * (k_steps - k - 1) as f64 / k_steps as f64;
    (tau, next)
}

fn euler_step<P: CleanPredictor + ?Sized>(
    schedule: &Schedule,
    predictor: &P,
    x: &mut [f64],
    s: &mut [f64],
    tau: f64,
    next: f64,
) {
    let half_beta = 0.5 * (schedule.log_alpha_bar_at(next) - schedule.log_alpha_bar_at(tau));
    score_into(predictor, schedule, x, tau, s);
    for (xi, si) in x.iter_mut().zip(s.iter()) {
        *xi += half_beta * (*xi + si);
    }
}
