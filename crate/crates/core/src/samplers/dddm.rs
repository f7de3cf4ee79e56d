use serde::{Deserialize, Serialize};

use super::{SamplerConfig, SolveSummary, Trajectory};
use crate::energy::{certify_pointwise, minimize_energy, SolveOptions};
use crate::error::{check_dim, check_finite, invalid, Result};
use crate::field::{apply_field, DenoisingField};
use crate::schedule::Schedule;

/// State the DDDM update subtracts the field from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// `x̂' = x̂ − F(x̂)`.
    #[default]
    Current,
    /// `x̂' = x_init − F(x̂)`, anchoring every step at the stored start.
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DddmOptions {
    pub inner_iters: usize,
    pub solver_tol: f64,
    pub certify_steps: bool,
    pub anchor: AnchorMode,
    /// Proxy-energy scale; `None` uses `σ² = β_t` of each step.
    pub sigma: Option<f64>,
}

impl Default for DddmOptions {
    fn default() -> Self {
        Self {
            inner_iters: 1,
            solver_tol: 1e-10,
            certify_steps: false,
            anchor: AnchorMode::Current,
            sigma: None,
        }
    }
}

impl From<&SamplerConfig> for DddmOptions {
    fn from(c: &SamplerConfig) -> Self {
        Self {
            inner_iters: c.inner_iters,
            solver_tol: c.solver_tol,
            certify_steps: c.certify_steps,
            ..Self::default()
        }
    }
}

/// One-shot update `anchor − F(current)`.
pub fn dddm_update<F: DenoisingField + ?Sized>(
    field: &F,
    anchor: &[f64],
    current: &[f64],
) -> Result<Vec<f64>> {
    check_dim("anchor", anchor, field.dim())?;
    let f = apply_field(field, current)?;
    Ok(anchor.iter().zip(f).map(|(a, fi)| a - fi).collect())
}

/// Deterministic DDDM chain; `fields[k]` serves reverse step `k`.
pub fn dddm_sample<F: DenoisingField>(
    schedule: &Schedule,
    fields: &[F],
    x_init: &[f64],
    opts: &DddmOptions,
) -> Result<Trajectory> {
    let steps = schedule.steps();
    if fields.len() != steps {
        return invalid(format!(
            "dddm needs one field per reverse step: got {} for T = {steps}",
            fields.len()
        ));
    }
    if opts.inner_iters == 0 {
        return invalid("inner_iters must be at least 1");
    }
    if let Some(s) = opts.sigma {
        if !(s > 0.0) || !s.is_finite() {
            return invalid("sigma must be positive");
        }
    }
    check_finite("x_init", x_init)?;
    for f in fields {
        check_dim("x_init", x_init, f.dim())?;
    }

    let mut traj = Trajectory::start(x_init, steps as f64, None);
    let mut reports = Vec::new();
    let mut solves = Vec::new();
    let mut x = x_init.to_vec();
    for (k, field) in fields.iter().enumerate() {
        let t = steps - k;
        let anchor = match opts.anchor {
            AnchorMode::Current => x.clone(),
            AnchorMode::Initial => x_init.to_vec(),
        };
        let sigma = opts.sigma.unwrap_or_else(|| schedule.beta(t).sqrt());
        let mut next = dddm_update(field, &anchor, &x)?;
        if opts.inner_iters > 1 {
            let solve = SolveOptions {
                max_iters: opts.inner_iters,
                tol: opts.solver_tol,
            };
            let out = minimize_energy(field, &anchor, &next, sigma, solve)?;
            solves.push(SolveSummary {
                iterations: out.iterations,
                fallback_steps: out.fallback_steps,
                grad_norm: out.grad_norm,
                converged: out.converged,
            });
            next = out.z;
        }
        if opts.certify_steps {
            reports.push(certify_pointwise(field, &anchor, &next, sigma)?);
        }
        x = next;
        traj.states.push(x.clone());
        traj.times.push((t - 1) as f64);
    }
    if opts.certify_steps {
        traj.reports = Some(reports);
    }
    if opts.inner_iters > 1 {
        traj.solves = Some(solves);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AffineField, GaussianData};

    #[test]
    fn zero_fields_keep_state() {
        let s = Schedule::cosine(5, 0.008).unwrap();
        let fields = vec![AffineField::zero(2); 5];
        let traj = dddm_sample(&s, &fields, &[0.3, -0.2], &DddmOptions::default()).unwrap();
        assert!(traj.states.iter().all(|st| st == &vec![0.3, -0.2]));
    }

    #[test]
    fn missing_field_is_an_error() {
        let s = Schedule::cosine(5, 0.008).unwrap();
        let fields = vec![AffineField::zero(1); 4];
        assert!(dddm_sample(&s, &fields, &[0.0], &DddmOptions::default()).is_err());
    }

    #[test]
    fn oracle_chain_is_certified() {
        let s = Schedule::cosine(16, 0.008).unwrap();
        let data = GaussianData::new(vec![2.0], 0.25).unwrap();
        let fields: Vec<_> = (0..16)
            .map(|k| data.oracle_field(&s, 16 - k).unwrap())
            .collect();
        let opts = DddmOptions {
            certify_steps: true,
            ..Default::default()
        };
        let traj = dddm_sample(&s, &fields, &[0.8], &opts).unwrap();
        let reports = traj.reports.unwrap();
        assert_eq!(reports.len(), 16);
        assert!(reports.iter().all(|r| r.certified && r.margin > 0.0));
    }

    #[test]
    fn initial_anchor_differs() {
        let s = Schedule::cosine(4, 0.008).unwrap();
        let data = GaussianData::new(vec![1.0], 0.5).unwrap();
        let fields: Vec<_> = (0..4).map(|k| data.oracle_field(&s, 4 - k).unwrap()).collect();
        let a = dddm_sample(&s, &fields, &[0.5], &DddmOptions::default()).unwrap();
        let opts = DddmOptions {
            anchor: AnchorMode::Initial,
            ..Default::default()
        };
        let b = dddm_sample(&s, &fields, &[0.5], &opts).unwrap();
        assert_eq!(a.states[1], b.states[1]);
        assert_ne!(a.endpoint(), b.endpoint());
    }
}
