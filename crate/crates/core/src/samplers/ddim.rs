use super::{CleanPredictor, Trajectory};
use crate::error::{check_dim, check_finite, invalid, Result};
use crate::schedule::Schedule;

/// Checks `0 = k_0 < k_1 < … < k_S = T` over reverse-step indices.
pub fn validate_grid(schedule: &Schedule, grid: &[usize]) -> Result<()> {
    let steps = schedule.steps();
    if grid.len() < 2 {
        return invalid("coarse grid needs at least two indices");
    }
    if let Some(k) = grid.iter().find(|&&k| k > steps) {
        return invalid(format!("grid index {k} outside 0..={steps}"));
    }
    if grid[0] != 0 || *grid.last().unwrap() != steps {
        return invalid(format!("coarse grid must start at 0 and end at {steps}"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("coarse grid must be strictly increasing");
    }
    Ok(())
}

/// Deterministic transition from forward index `t` to `t_next < t`:
/// `x' = √ᾱ' x̂₀ + √((1 − ᾱ')/(1 − ᾱ))·(x − √ᾱ x̂₀)`.
pub fn ddim_transition<P: CleanPredictor + ?Sized>(
    schedule: &Schedule,
    predictor: &P,
    x: &[f64],
    t: usize,
    t_next: usize,
) -> Vec<f64> {
    let a = schedule.alpha_bar(t);
    let a_next = schedule.alpha_bar(t_next);
    let clean = predictor.predict_clean(schedule, x, t as f64);
    let sa = a.sqrt();
    let sa_next = a_next.sqrt();
    let ratio = ((1.0 - a_next) / (1.0 - a)).sqrt();
    clean
        .iter()
        .zip(x)
        .map(|(c, xi)| sa_next * c + ratio * (xi - sa * c))
        .collect()
}

/// DDIM sampling over a coarse grid of reverse steps, `σ = 0`.
pub fn ddim_sample<P: CleanPredictor + ?Sized>(
    schedule: &Schedule,
    predictor: &P,
    grid: &[usize],
    x_init: &[f64],
) -> Result<Trajectory> {
    validate_grid(schedule, grid)?;
    check_dim("x_init", x_init, predictor.dim())?;
    check_finite("x_init", x_init)?;
    let steps = schedule.steps();
    let mut traj = Trajectory::start(x_init, steps as f64, None);
    let mut x = x_init.to_vec();
    for w in grid.windows(2) {
        let (t, t_next) = (steps - w[0], steps - w[1]);
        x = ddim_transition(schedule, predictor, &x, t, t_next);
        traj.states.push(x.clone());
        traj.times.push(t_next as f64);
    }
    Ok(traj)
}

/// `[0, 1, …, T]`
pub fn full_grid(schedule: &Schedule) -> Vec<usize> {
    (0..=schedule.steps()).collect()
}
