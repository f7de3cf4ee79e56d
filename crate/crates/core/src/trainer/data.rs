use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, Result};

/// Synthetic clean-data distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Point mass at `mean`.
    Point { mean: Vec<f64> },
    /// `N(mean, var·I)`.
    Gauss { mean: Vec<f64>, var: f64 },
    /// Equal-weight 2D mixture of `N((±offset, 0), sd²·I)`.
    Mixture { offset: f64, sd: f64 },
    /// Two interleaved half circles with Gaussian jitter `sd`.
    Moons { sd: f64 },
}

impl DataSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            DataSource::Point { mean } => {
                if mean.is_empty() {
                    return invalid("point mass needs dimension ≥ 1");
                }
                check_finite("mean", mean)
            }
            DataSource::Gauss { mean, var } => {
                if mean.is_empty() || !(*var > 0.0) {
                    return invalid("Gaussian source needs dimension ≥ 1 and var > 0");
                }
                check_finite("mean", mean)
            }
            DataSource::Mixture { offset, sd } => {
                if !offset.is_finite() || !(*sd >= 0.0) {
                    return invalid("mixture needs finite offset and sd ≥ 0");
                }
                Ok(())
            }
            DataSource::Moons { sd } => {
                if !(*sd >= 0.0) {
                    return invalid("moons need sd ≥ 0");
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DataSource::Point { mean } | DataSource::Gauss { mean, .. } => mean.len(),
            DataSource::Mixture { .. } | DataSource::Moons { .. } => 2,
        }
    }

    pub fn sample(&self, rng: &mut (impl RngCore + ?Sized)) -> Vec<f64> {
        match self {
            DataSource::Point { mean } => mean.clone(),
            DataSource::Gauss { mean, var } => {
                let sd = var.sqrt();
                mean.iter().map(|m| m + sd * normal(&mut *rng)).collect()
            }
            DataSource::Mixture { offset, sd } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                vec![sign * offset + sd * normal(&mut *rng), sd * normal(&mut *rng)]
            }
            DataSource::Moons { sd } => {
                let theta = PI * rng.random::<f64>();
                let (x, y) = if rng.random::<bool>() {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                vec![x + sd * normal(&mut *rng), y + sd * normal(&mut *rng)]
            }
        }
    }
}

fn normal(rng: &mut (impl RngCore + ?Sized)) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn shapes_and_point_mass() {
        let mut rng = seeded(0);
        let p = DataSource::Point { mean: vec![1.0, 2.0] };
        assert_eq!(p.sample(&mut rng), vec![1.0, 2.0]);
        for src in [
            DataSource::Mixture { offset: 2.0, sd: 0.3 },
            DataSource::Moons { sd: 0.05 },
            DataSource::Gauss { mean: vec![0.0; 3], var: 1.0 },
        ] {
            src.validate().unwrap();
            assert_eq!(src.sample(&mut rng).len(), src.dim());
        }
        assert!(DataSource::Gauss { mean: vec![0.0], var: 0.0 }.validate().is_err());
    }
}
