//! Reverse-time samplers.
//!
//! Time convention: reverse step `k` runs from forward index `t = T − k` to
//! `t − 1`. Per-step field lists are indexed by `k`, so `fields[0]` acts at
//! `t = T` and `fields[T − 1]` produces the clean sample.
//!
//! | reverse step `k` | forward index `t` | transition     |
//! |------------------|-------------------|----------------|
//! | 0                | T                 | `T → T − 1`    |
//! | k                | T − k             | `T−k → T−k−1`  |
//! | T − 1            | 1                 | `1 → 0`        |

mod ancestral;
mod dddm;
mod ddim;
mod flow;
mod rtk;

pub use ancestral::{ddpm_sample, ddpm_step};
pub use dddm::{dddm_sample, dddm_update, AnchorMode, DddmOptions};
pub use ddim::{ddim_sample, ddim_transition, full_grid, validate_grid};
pub use flow::{pf_euler, pf_euler_endpoint};
pub use rtk::{rtk_loop, AncestralKernel, DdimKernel, DiracKernel, TransitionKernel};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyReport;
use crate::error::{invalid, Result};
use crate::field::{DenoisingField, GaussianData};
use crate::rng::{stream, SeededRng};
use crate::schedule::Schedule;

/// Clean-sample estimator `x̂₀(x_τ, τ)`.
///
/// Noise and score predictions are derived from it:
/// `ε̂ = (x − √ᾱ x̂₀)/√(1 − ᾱ)` and `ŝ = (√ᾱ x̂₀ − x)/(1 − ᾱ)`.
pub trait CleanPredictor: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `x̂₀` for state `x` at forward time `tau ∈ (0, T]` into `out`.
    fn predict_clean_into(&self, schedule: &Schedule, x: &[f64], tau: f64, out: &mut [f64]);

    fn predict_clean(&self, schedule: &Schedule, x: &[f64], tau: f64) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.predict_clean_into(schedule, x, tau, &mut out);
        out
    }
}

pub fn predict_eps<P: CleanPredictor + ?Sized>(
    predictor: &P,
    schedule: &Schedule,
    x: &[f64],
    tau: f64,
) -> Vec<f64> {
    let a = schedule.alpha_bar_at(tau);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    predictor
        .predict_clean(schedule, x, tau)
        .iter()
        .zip(x)
        .map(|(c, xi)| (xi - sa * c) / sn)
        .collect()
}

pub fn predict_score<P: CleanPredictor + ?Sized>(
    predictor: &P,
    schedule: &Schedule,
    x: &[f64],
    tau: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    score_into(predictor, schedule, x, tau, &mut out);
    out
}

pub(crate) fn score_into<P: CleanPredictor + ?Sized>(
    predictor: &P,
    schedule: &Schedule,
    x: &[f64],
    tau: f64,
    out: &mut [f64],
) {
    let a = schedule.alpha_bar_at(tau);
    predictor.predict_clean_into(schedule, x, tau, out);
    let sa = a.sqrt();
    let denom = 1.0 - a;
    for (o, xi) in out.iter_mut().zip(x) {
        *o = (sa * *o - xi) / denom;
    }
}

/// Exact posterior mean for Gaussian data.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPredictor {
    pub data: GaussianData,
}

impl GaussianPredictor {
    pub fn new(data: GaussianData) -> Self {
        Self { data }
    }
}

impl CleanPredictor for GaussianPredictor {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn predict_clean_into(&self, schedule: &Schedule, x: &[f64], tau: f64, out: &mut [f64]) {
        let a = schedule.alpha_bar_at(tau);
        let s = a.sqrt();
        let gain = self.data.var * s / self.data.marginal_var(a);
        for ((o, xi), mi) in out.iter_mut().zip(x).zip(&self.data.mean) {
            *o = mi + gain * (xi - s * mi);
        }
    }
}

/// Clean estimates `x̂₀ = x − F_t(x)` from per-step fields, `fields[T − t]`
/// serving forward index `t = round(τ)`.
pub struct FieldPredictor<F> {
    fields: Vec<F>,
}

impl<F: DenoisingField> FieldPredictor<F> {
    pub fn new(fields: Vec<F>) -> Result<Self> {
        let Some(first) = fields.first() else {
            return invalid("field predictor needs at least one field");
        };
        let d = first.dim();
        if fields.iter().any(|f| f.dim() != d) {
            return invalid("all fields must share one dimension");
        }
        Ok(Self { fields })
    }
}

impl<F: DenoisingField> CleanPredictor for FieldPredictor<F> {
    fn dim(&self) -> usize {
        self.fields[0].dim()
    }

    fn predict_clean_into(&self, schedule: &Schedule, x: &[f64], tau: f64, out: &mut [f64]) {
        let steps = schedule.steps();
        let t = (tau.round() as usize).clamp(1, steps);
        let k = (steps - t).min(self.fields.len() - 1);
        for ((o, xi), fi) in out.iter_mut().zip(x).zip(self.fields[k].apply(x)) {
            *o = xi - fi;
        }
    }
}

/// Iteration counts of one refined DDDM step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub fallback_steps: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// States of one reverse run; `states[0]` is the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// Forward time of each state.
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reports: Option<Vec<EnergyReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solves: Option<Vec<SolveSummary>>,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub(crate) fn start(x: &[f64], time: f64, seed: Option<u64>) -> Self {
        Self {
            states: vec![x.to_vec()],
            times: vec![time],
            reports: None,
            solves: None,
            seed,
        }
    }

    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// CSV with header `step,component_0,…,component_{d−1}`.
    pub fn to_csv(&self) -> String {
        let d = self.states[0].len();
        let mut out = String::from("step");
        for j in 0..d {
            out.push_str(&format!(",component_{j}"));
        }
        out.push('\n');
        for (k, s) in self.states.iter().enumerate() {
            out.push_str(&k.to_string());
            for v in s {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ddpm,
    Ddim,
    Dddm,
    PfEuler,
}

impl std::str::FromStr for SamplerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(SamplerKind::Ddpm),
            "ddim" => Ok(SamplerKind::Ddim),
            "dddm" => Ok(SamplerKind::Dddm),
            "pf_euler" | "pf-euler" => Ok(SamplerKind::PfEuler),
            other => invalid(format!("unknown sampler kind '{other}'")),
        }
    }
}

/// Sampler selection and options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Reverse-step indices `0 = k_0 < … < k_S = T` (ddim).
    #[serde(default)]
    pub coarse_grid: Option<Vec<usize>>,
    /// Newton iterations per DDDM step; 1 is the one-shot update.
    #[serde(default = "one")]
    pub inner_iters: usize,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    #[serde(default)]
    pub certify_steps: bool,
}

fn one() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-10
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind) -> Self {
        Self {
            kind,
            coarse_grid: None,
            inner_iters: 1,
            solver_tol: default_tol(),
            certify_steps: false,
        }
    }

    pub fn validate(&self, schedule: &Schedule) -> Result<()> {
        if self.inner_iters == 0 {
            return invalid("inner_iters must be at least 1");
        }
        if !(self.solver_tol >= 0.0) {
            return invalid("solver_tol must be non-negative");
        }
        if let Some(g) = &self.coarse_grid {
            validate_grid(schedule, g)?;
        }
        Ok(())
    }
}

/// Runs `n` independent jobs, job `i` with its own stream of `seed`.
///
/// Results do not depend on the thread count.
pub fn run_batch<T, F>(n: usize, seed: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SeededRng) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            job(i, &mut rng)
        })
        .collect()
}
