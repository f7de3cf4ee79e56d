//! Conformer-ensemble metrics.
//!
//! All atoms are used in file order. There is no hydrogen filtering and no
//! symmetry-aware atom matching.

mod kabsch;

pub use kabsch::{kabsch_rmsd, Conformer};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Coverage threshold in Å.
pub const DEFAULT_DELTA: f64 = 0.75;

/// Conformers sharing one atom list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    conformers: Vec<Conformer>,
    /// Element symbols; carried through, ignored by geometry.
    elements: Vec<String>,
}

impl Ensemble {
    pub fn new(conformers: Vec<Conformer>) -> Result<Self> {
        let n = conformers.first().map_or(0, Vec::len);
        Self::with_elements(conformers, vec![String::new(); n])
    }

    pub fn with_elements(conformers: Vec<Conformer>, elements: Vec<String>) -> Result<Self> {
        let Some(first) = conformers.first() else {
            return invalid("ensemble is empty");
        };
        let n = first.len();
        if n == 0 {
            return invalid("conformers need at least one atom");
        }
        if conformers.iter().any(|c| c.len() != n) {
            return invalid("conformers have different atom counts");
        }
        if elements.len() != n {
            return invalid("element list does not match atom count");
        }
        if conformers.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return invalid("coordinates must be finite");
        }
        Ok(Self {
            conformers,
            elements,
        })
    }

    pub fn len(&self) -> usize {
        self.conformers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conformers.is_empty()
    }

    pub fn atoms(&self) -> usize {
        self.conformers[0].len()
    }

    pub fn conformers(&self) -> &[Conformer] {
        &self.conformers
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    /// Parses multi-frame XYZ text.
    pub fn from_xyz(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let mut conformers = Vec::new();
        let mut elements: Option<Vec<String>> = None;
        loop {
            while lines.peek().is_some_and(|(_, l)| l.trim().is_empty()) {
                lines.next();
            }
            let Some((ln, count_line)) = lines.next() else { break };
            let count: usize = count_line
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: expected atom count", ln + 1)))?;
            if lines.next().is_none() {
                return Err(Error::Parse(format!("line {}: missing comment line", ln + 2)));
            }
            let mut frame = Vec::with_capacity(count);
            let mut symbols = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, line) = lines
                    .next()
                    .ok_or_else(|| Error::Parse("truncated XYZ frame".into()))?;
                let mut parts = line.split_whitespace();
                let sym = parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {}: empty atom line", ln + 1)))?;
                let mut xyz = [0.0; 3];
                for v in xyz.iter_mut() {
                    *v = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Parse(format!("line {}: expected 3 coordinates", ln + 1)))?;
                }
                symbols.push(sym.to_string());
                frame.push(xyz);
            }
            match &elements {
                None => elements = Some(symbols),
                Some(e) if e.len() != count => {
                    return Err(Error::Parse(format!(
                        "frame {} has {count} atoms, expected {}",
                        conformers.len() + 1,
                        e.len()
                    )))
                }
                _ => {}
            }
            conformers.push(frame);
        }
        let elements = elements.ok_or_else(|| Error::Parse("no XYZ frames".into()))?;
        Self::with_elements(conformers, elements)
    }

    pub fn read_xyz(path: &Path) -> Result<Self> {
        Self::from_xyz(&std::fs::read_to_string(path)?)
    }

    pub fn to_xyz(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.conformers.iter().enumerate() {
            out.push_str(&format!("{}\nframe {i}\n", c.len()));
            for (sym, p) in self.elements.iter().zip(c) {
                let sym = if sym.is_empty() { "X" } else { sym };
                out.push_str(&format!("{sym} {:?} {:?} {:?}\n", p[0], p[1], p[2]));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Reference-centric: every reference finds its closest generated conformer.
    Recall,
    /// Generation-centric.
    Precision,
}

fn check_pair(gen: &Ensemble, reference: &Ensemble) -> Result<()> {
    if gen.atoms() != reference.atoms() {
        return invalid(format!(
            "atom counts differ: generated {} vs reference {}",
            gen.atoms(),
            reference.atoms()
        ));
    }
    Ok(())
}

/// For each conformer of `rows`, its smallest RMSD to `cols`.
fn min_rmsds(rows: &Ensemble, cols: &Ensemble) -> Vec<f64> {
    rows.conformers
        .par_iter()
        .map(|r| {
            cols.conformers
                .iter()
                .map(|c| kabsch_rmsd(r, c).expect("validated ensembles"))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn oriented<'a>(gen: &'a Ensemble, reference: &'a Ensemble, mode: Mode) -> (&'a Ensemble, &'a Ensemble) {
    match mode {
        Mode::Recall => (reference, gen),
        Mode::Precision => (gen, reference),
    }
}

/// Average minimum RMSD.
pub fn amr(gen: &Ensemble, reference: &Ensemble, mode: Mode) -> Result<f64> {
    check_pair(gen, reference)?;
    let (rows, cols) = oriented(gen, reference, mode);
    let mins = min_rmsds(rows, cols);
    Ok(mins.iter().sum::<f64>() / mins.len() as f64)
}

/// Fraction of conformers whose minimum RMSD is strictly below `delta`.
pub fn coverage(gen: &Ensemble, reference: &Ensemble, delta: f64, mode: Mode) -> Result<f64> {
    check_delta(delta)?;
    check_pair(gen, reference)?;
    let (rows, cols) = oriented(gen, reference, mode);
    let mins = min_rmsds(rows, cols);
    Ok(mins.iter().filter(|m| **m < delta).count() as f64 / mins.len() as f64)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub amr_r: f64,
    pub amr_p: f64,
    pub cov_r: f64,
    pub cov_p: f64,
    pub delta: f64,
}

/// All four metrics, sharing one pass per orientation.
pub fn evaluate(gen: &Ensemble, reference: &Ensemble, delta: f64) -> Result<MetricsReport> {
    check_delta(delta)?;
    check_pair(gen, reference)?;
    let recall = min_rmsds(reference, gen);
    let precision = min_rmsds(gen, reference);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cov = |v: &[f64]| v.iter().filter(|m| **m < delta).count() as f64 / v.len() as f64;
    Ok(MetricsReport {
        amr_r: mean(&recall),
        amr_p: mean(&precision),
        cov_r: cov(&recall),
        cov_p: cov(&precision),
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(shift: f64) -> Conformer {
        vec![[0.0, 0.0, 0.0], [1.0 + shift, 0.0, 0.0], [0.0, 1.0, 0.0]]
    }

    #[test]
    fn self_comparison() {
        let e = Ensemble::new(vec![tri(0.0), tri(0.5)]).unwrap();
        let r = evaluate(&e, &e, DEFAULT_DELTA).unwrap();
        assert_eq!((r.amr_r, r.amr_p, r.cov_r, r.cov_p), (0.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn singleton_amr_is_rmsd() {
        let a = Ensemble::new(vec![tri(0.0)]).unwrap();
        let b = Ensemble::new(vec![tri(0.7)]).unwrap();
        let d = kabsch_rmsd(&tri(0.0), &tri(0.7)).unwrap();
        assert_eq!(amr(&a, &b, Mode::Recall).unwrap(), d);
        assert_eq!(amr(&a, &b, Mode::Precision).unwrap(), d);
        assert_eq!(coverage(&a, &b, d / 2.0, Mode::Recall).unwrap(), 0.0);
        assert!(coverage(&a, &b, 0.0, Mode::Recall).is_err());
    }

    #[test]
    fn xyz_round_trip() {
        let text = "3\nwater\nO 0.0 0.0 0.0\nH 0.96 0.0 0.0\nH -0.24 0.93 0.0\n\n3\nsecond\nO 0 0 0.1\nH 0.9 0 0\nH -0.2 0.9 0\n";
        let e = Ensemble::from_xyz(text).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.elements(), &["O", "H", "H"]);
        assert_eq!(Ensemble::from_xyz(&e.to_xyz()).unwrap(), e);
        assert!(Ensemble::from_xyz("2\nx\nC 0 0 0\n").is_err());
        assert!(Ensemble::from_xyz("1\nx\nC 0 zero 0\n").is_err());
        assert!(Ensemble::from_xyz("").is_err());
    }

    #[test]
    fn mismatched_atoms() {
        let a = Ensemble::new(vec![tri(0.0)]).unwrap();
        let b = Ensemble::new(vec![vec![[0.0; 3]; 2]]).unwrap();
        assert!(amr(&a, &b, Mode::Recall).is_err());
    }
}
