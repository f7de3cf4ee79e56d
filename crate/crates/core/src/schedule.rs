//! Discrete variance-preserving noise schedule and the forward noising process.
//!
//! Indices run `t = 0..=T` with `ᾱ_0 = 1`, so `t = 0` is the clean data. A
//! reverse step `k` of a sampler corresponds to forward index `t = T − k`.
//! For samplers that need a continuous time, `τ ∈ [0, T]` is measured in the
//! same index units and `log ᾱ` is interpolated linearly between integers.

use std::f64::consts::FRAC_PI_2;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, Error, Result};
use crate::rng::standard_normal;

/// Upper clamp on β_t; keeps ᾱ_T strictly positive for the cosine schedule.
pub const DEFAULT_BETA_MAX: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr")]
pub struct Schedule {
    #[serde(rename = "T")]
    steps: usize,
    s: f64,
    /// `beta[t − 1] = β_t` for `t = 1..=T`.
    beta: Vec<f64>,
    /// `alpha_bar[t] = ᾱ_t` for `t = 0..=T`.
    alpha_bar: Vec<f64>,
    #[serde(skip)]
    log_alpha_bar: Vec<f64>,
}

#[derive(Deserialize)]
struct ScheduleRepr {
    #[serde(rename = "T")]
    steps: usize,
    s: f64,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl TryFrom<ScheduleRepr> for Schedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        let sched = Schedule::from_betas(&r.beta)?;
        if sched.steps != r.steps || r.alpha_bar.len() != r.steps + 1 {
            return invalid("schedule JSON: T does not match array lengths");
        }
        for (a, b) in sched.alpha_bar.iter().zip(&r.alpha_bar) {
            if (a - b).abs() > 1e-12 * a.abs().max(1e-300) + 1e-300 {
                return invalid("schedule JSON: alpha_bar inconsistent with beta");
            }
        }
        Ok(Schedule { s: r.s, ..sched })
    }
}

/// Mean and isotropic variance of a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl Schedule {
    /// Cosine schedule `ᾱ_t = f(t)/f(0)`, `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`,
    /// with β_t clamped at [`DEFAULT_BETA_MAX`].
    pub fn cosine(steps: usize, s: f64) -> Result<Self> {
        Self::cosine_with_clamp(steps, s, DEFAULT_BETA_MAX)
    }

    pub fn cosine_with_clamp(steps: usize, s: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return invalid("T must be positive");
        }
        if !(s > 0.0) || !s.is_finite() {
            return invalid("cosine offset s must be positive");
        }
        if !(beta_max > 0.0 && beta_max < 1.0) {
            return invalid("beta clamp must lie in (0, 1)");
        }
        let horizon = steps as f64;
        let f = |t: usize| {
            let c = (((t as f64 / horizon) + s) / (1.0 + s) * FRAC_PI_2).cos();
            c * c
        };
        let f0 = f(0);
        let raw: Vec<f64> = (0..=steps).map(|t| f(t) / f0).collect();
        let betas: Vec<f64> = (1..=steps)
            .map(|t| (1.0 - raw[t] / raw[t - 1]).min(beta_max))
            .collect();
        let mut sched = Self::from_betas(&betas)?;
        sched.s = s;
        Ok(sched)
    }

    /// Schedule from explicit per-step variances, `ᾱ_t = Π_{u ≤ t} (1 − β_u)`.
    pub fn from_betas(betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            return invalid("schedule needs at least one step");
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return invalid(format!("beta {b} outside (0, 1)"));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        for b in betas {
            let prev = *alpha_bar.last().unwrap();
            alpha_bar.push(prev * (1.0 - b));
        }
        Ok(Self {
            steps: betas.len(),
            s: 0.0,
            beta: betas.to_vec(),
            log_alpha_bar: alpha_bar.iter().map(|a| a.ln()).collect(),
            alpha_bar,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn offset(&self) -> f64 {
        self.s
    }

    /// β_t for `1 ≤ t ≤ T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    /// ᾱ_t for `0 ≤ t ≤ T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `log ᾱ(τ)` with linear interpolation of `log ᾱ` between integer steps.
    pub fn log_alpha_bar_at(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, self.steps as f64);
        let i = (tau.floor() as usize).min(self.steps - 1);
        let frac = tau - i as f64;
        let lo = self.log_alpha_bar[i];
        let hi = self.log_alpha_bar[i + 1];
        if frac == 0.0 {
            lo
        } else if frac == 1.0 {
            hi
        } else {
            lo + frac * (hi - lo)
        }
    }

    pub fn alpha_bar_at(&self, tau: f64) -> f64 {
        if tau.fract() == 0.0 && tau >= 0.0 && tau <= self.steps as f64 {
            return self.alpha_bar[tau as usize];
        }
        self.log_alpha_bar_at(tau).exp()
    }

    /// Forward index for reverse step `k`: `t = T − k`.
    pub fn forward_index(&self, reverse_step: usize) -> usize {
        self.steps - reverse_step
    }

    /// Maps a continuous time `kη` on a horizon of length `horizon` onto the
    /// discrete index axis: `t = kη·(T/horizon)`.
    pub fn index_from_time(&self, time: f64, horizon: f64) -> f64 {
        time * self.steps as f64 / horizon
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return invalid(format!("step index {t} outside 0..={}", self.steps));
        }
        Ok(())
    }

    /// `p(x_t | x_0) = N(√ᾱ_t x_0, (1 − ᾱ_t) I)`.
    pub fn forward_marginal(&self, x0: &[f64], t: usize) -> Result<GaussianParams> {
        self.check_t(t)?;
        check_finite("x0", x0)?;
        let a = self.alpha_bar[t];
        let scale = a.sqrt();
        Ok(GaussianParams {
            mean: x0.iter().map(|x| scale * x).collect(),
            variance: 1.0 - a,
        })
    }

    /// One draw from [`Schedule::forward_marginal`].
    pub fn forward_sample(
        &self,
        x0: &[f64],
        t: usize,
        rng: &mut (impl RngCore + ?Sized),
    ) -> Result<Vec<f64>> {
        let g = self.forward_marginal(x0, t)?;
        if t == 0 {
            return Ok(x0.to_vec());
        }
        let sd = g.variance.sqrt();
        let noise = standard_normal(rng, x0.len());
        Ok(g.mean.iter().zip(noise).map(|(m, e)| m + sd * e).collect())
    }
}
