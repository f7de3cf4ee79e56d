use rand::RngCore;

use super::ancestral::ddpm_mean_then_noise;
use super::dddm::{dddm_update, AnchorMode};
use super::ddim::{ddim_transition, validate_grid};
use super::{CleanPredictor, Trajectory};
use crate::error::{check_finite, invalid, Result};
use crate::field::DenoisingField;
use crate::schedule::Schedule;

/// Reverse transition kernel `p̂(x_{k+1} | x_k)` for reverse steps `k = 0..K−1`.
pub trait TransitionKernel {
    fn dim(&self) -> usize;

    /// Number of steps the kernel is defined for.
    fn steps(&self) -> usize;

    /// Forward time reached after reverse step `k`.
    fn time_after(&self, k: usize) -> f64;

    /// Forward time of the starting state.
    fn start_time(&self) -> f64;

    fn step(
        &self,
        k: usize,
        current: &[f64],
        initial: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>>;
}

/// Generic reverse loop: draws `x_{k+1} ∼ kernel(· | x_k)` for `k < K`.
pub fn rtk_loop<K: TransitionKernel + ?Sized>(
    kernel: &K,
    x_init: &[f64],
    k_steps: usize,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    if k_steps > kernel.steps() {
        return invalid(format!(
            "kernel defined for {} steps, asked for {k_steps}",
            kernel.steps()
        ));
    }
    if x_init.len() != kernel.dim() {
        return invalid("x_init dimension does not match the kernel");
    }
    check_finite("x_init", x_init)?;
    let mut traj = Trajectory::start(x_init, kernel.start_time(), None);
    let mut x = x_init.to_vec();
    for k in 0..k_steps {
        x = kernel.step(k, &x, x_init, rng)?;
        traj.states.push(x.clone());
        traj.times.push(kernel.time_after(k));
    }
    Ok(traj)
}

/// Dirac kernel of the one-shot DDDM update.
pub struct DiracKernel<'a, F> {
    pub schedule: &'a Schedule,
    pub fields: &'a [F],
    pub anchor: AnchorMode,
}

impl<F: DenoisingField> TransitionKernel for DiracKernel<'_, F> {
    fn dim(&self) -> usize {
        self.fields.first().map_or(0, |f| f.dim())
    }

    fn steps(&self) -> usize {
        self.fields.len().min(self.schedule.steps())
    }

    fn time_after(&self, k: usize) -> f64 {
        (self.schedule.steps() - k - 1) as f64
    }

    fn start_time(&self) -> f64 {
        self.schedule.steps() as f64
    }

    fn step(&self, k: usize, current: &[f64], initial: &[f64], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let anchor = match self.anchor {
            AnchorMode::Current => current,
            AnchorMode::Initial => initial,
        };
        dddm_update(&self.fields[k], anchor, current)
    }
}

/// Gaussian kernel with the DDPM mean and variance `σ_t²` (default `β_t`).
pub struct AncestralKernel<'a, P: ?Sized> {
    pub schedule: &'a Schedule,
    pub predictor: &'a P,
    /// Per reverse step `k`; `None` gives `σ_t² = β_t`.
    pub variances: Option<Vec<f64>>,
}

impl<P: CleanPredictor + ?Sized> TransitionKernel for AncestralKernel<'_, P> {
    fn dim(&self) -> usize {
        self.predictor.dim()
    }

    fn steps(&self) -> usize {
        self.schedule.steps()
    }

    fn time_after(&self, k: usize) -> f64 {
        (self.schedule.steps() - k - 1) as f64
    }

    fn start_time(&self) -> f64 {
        self.schedule.steps() as f64
    }

    fn step(&self, k: usize, current: &[f64], _initial: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let t = self.schedule.steps() - k;
        let var = match &self.variances {
            Some(v) => *v.get(k).ok_or_else(|| {
                crate::Error::InvalidArgument(format!("no kernel variance for step {k}"))
            })?,
            None => self.schedule.beta(t),
        };
        if !(var >= 0.0) {
            return invalid("kernel variance must be non-negative");
        }
        Ok(ddpm_mean_then_noise(self.schedule, self.predictor, current, t, var, rng))
    }
}

/// Deterministic DDIM map over a coarse grid of reverse steps.
pub struct DdimKernel<'a, P: ?Sized> {
    pub schedule: &'a Schedule,
    pub predictor: &'a P,
    grid: Vec<usize>,
}

impl<'a, P: CleanPredictor + ?Sized> DdimKernel<'a, P> {
    pub fn new(schedule: &'a Schedule, predictor: &'a P, grid: Vec<usize>) -> Result<Self> {
        validate_grid(schedule, &grid)?;
        Ok(Self {
            schedule,
            predictor,
            grid,
        })
    }
}

impl<P: CleanPredictor + ?Sized> TransitionKernel for DdimKernel<'_, P> {
    fn dim(&self) -> usize {
        self.predictor.dim()
    }

    fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    fn time_after(&self, k: usize) -> f64 {
        (self.schedule.steps() - self.grid[k + 1]) as f64
    }

    fn start_time(&self) -> f64 {
        self.schedule.steps() as f64
    }

    fn step(&self, k: usize, current: &[f64], _initial: &[f64], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let steps = self.schedule.steps();
        Ok(ddim_transition(
            self.schedule,
            self.predictor,
            current,
            steps - self.grid[k],
            steps - self.grid[k + 1],
        ))
    }
}
