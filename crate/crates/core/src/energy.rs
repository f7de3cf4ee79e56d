//! Proxy energy of a reverse subproblem and its strong-convexity certificates.
//!
//! For a step anchored at `x` with field `F`, the proxy energy is
//! `g(z) = ‖r(z)‖²/(2σ²)` with residual `r(z) = z − x + F(z)`. Its Boltzmann
//! density `exp(−g)` stands in for the reverse transition kernel; when `g` is
//! strongly convex the kernel is strongly log-concave.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, invalid, Result};
use crate::field::{eval_field, BoxRegion, DenoisingField, FieldEval};
use crate::linalg::{cholesky, cholesky_solve, dot, norm, spectral_norm, sym_op_norm, Matrix};

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return invalid(format!("sigma must be positive and finite, got {sigma}"));
    }
    Ok(())
}

fn prepare<F: DenoisingField + ?Sized>(
    field: &F,
    x_anchor: &[f64],
    z: &[f64],
    sigma: f64,
) -> Result<FieldEval> {
    check_sigma(sigma)?;
    check_dim("x_anchor", x_anchor, field.dim())?;
    check_finite("x_anchor", x_anchor)?;
    eval_field(field, z)
}

fn residual(value: &[f64], x_anchor: &[f64], z: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(x_anchor)
        .zip(value)
        .map(|((zi, xi), fi)| zi - xi + fi)
        .collect()
}

/// `r(z) = z − x + F(z)`.
pub fn residual_at<F: DenoisingField + ?Sized>(
    field: &F,
    x_anchor: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    check_dim("x_anchor", x_anchor, field.dim())?;
    let value = crate::field::apply_field(field, z)?;
    Ok(residual(&value, x_anchor, z))
}

/// `g(z) = ‖z − (x − F(z))‖²/(2σ²)`.
pub fn energy<F: DenoisingField + ?Sized>(
    field: &F,
    x_anchor: &[f64],
    z: &[f64],
    sigma: f64,
) -> Result<f64> {
    check_sigma(sigma)?;
    let r = residual_at(field, x_anchor, z)?;
    check_finite("x_anchor", x_anchor)?;
    Ok(dot(&r, &r) / (2.0 * sigma * sigma))
}

/// `(I + J)ᵀ r`.
fn grad_unscaled(jacobian: &Matrix, r: &[f64]) -> Vec<f64> {
    let mut g = jacobian.tr_matvec(r);
    for (gi, ri) in g.iter_mut().zip(r) {
        *gi += ri;
    }
    g
}

/// `∇g(z) = (I + J_F(z))ᵀ r(z)/σ²`.
pub fn energy_grad<F: DenoisingField + ?Sized>(
    field: &F,
    x_anchor: &[f64],
    z: &[f64],
    sigma: f64,
) -> Result<Vec<f64>> {
    let e = prepare(field, x_anchor, z, sigma)?;
    let r = residual(&e.value, x_anchor, z);
    let s2 = sigma * sigma;
    Ok(grad_unscaled(&e.jacobian, &r).into_iter().map(|g| g / s2).collect())
}

fn hessian_from_eval(e: &FieldEval, r: &[f64], sigma: f64) -> Matrix {
    let d = r.len();
    let mut a = e.jacobian.clone();
    for i in 0..d {
        a[(i, i)] += 1.0;
    }
    let mut h = a.gram();
    for (ri, hi) in r.iter().zip(&e.hessians) {
        h.add_scaled(hi, *ri);
    }
    // exact symmetry; each term is symmetric up to round-off
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = avg;
            h[(j, i)] = avg;
        }
    }
    h.scaled(1.0 / (sigma * sigma))
}

/// `∇²g(z) = ((I+J)ᵀ(I+J) + Σ_i r_i H_{F,i})/σ²`.
pub fn energy_hessian<F: DenoisingField + ?Sized>(
    field: &F,
    x_anchor: &[f64],
    z: &[f64],
    sigma: f64,
) -> Result<Matrix> {
    let e = prepare(field, x_anchor, z, sigma)?;
    let r = residual(&e.value, x_anchor, z);
    Ok(hessian_from_eval(&e, &r, sigma))
}

/// How the residual-curvature term of the pointwise certificate is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureRule {
    /// `‖Σ r_i H_i‖ ≤ R·√B_sq`, from Cauchy-Schwarz over `i`.
    #[default]
    Sound,
    /// `R·B_sq`. Not a valid bound when `B_sq < 1`; kept for comparison.
    Literal,
}

impl CurvatureRule {
    pub fn term(self, residual_norm: f64, curvature_sq: f64) -> f64 {
        match self {
            CurvatureRule::Sound => residual_norm * curvature_sq.sqrt(),
            CurvatureRule::Literal => residual_norm * curvature_sq,
        }
    }
}

/// Pointwise strong-convexity certificate of the proxy energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `R = ‖r(z)‖`
    pub residual_norm: f64,
    /// `L = ‖J_F(z)‖₂`
    pub lipschitz: f64,
    /// `B_sq = Σ_i ‖H_{F,i}(z)‖_op²`
    pub curvature_sq: f64,
    /// `((1 − L)² − curvature term)/σ²`; a lower bound on `λ_min(∇²g)` when `L < 1`.
    pub margin: f64,
    pub certified: bool,
    pub sigma: f64,
    pub rule: CurvatureRule,
}

/// Certificate at `z` with the default [`CurvatureRule::Sound`].
pub fn certify_pointwise<F: DenoisingField + ?Sized>(
    field: &F,
    x_anchor: &[f64],
    z: &[f64],
    sigma: f64,
) -> Result<EnergyReport> {
    certify_pointwise_with(field, x_anchor, z, sigma, CurvatureRule::Sound)
}

pub fn certify_pointwise_with<F: DenoisingField + ?Sized>(
    field: &F,
    x_anchor: &[f64],
    z: &[f64],
    sigma: f64,
    rule: CurvatureRule,
) -> Result<EnergyReport> {
    let e = prepare(field, x_anchor, z, sigma)?;
    let r = residual(&e.value, x_anchor, z);
    Ok(report_from_eval(&e, &r, sigma, rule))
}

fn report_from_eval(e: &FieldEval, r: &[f64], sigma: f64, rule: CurvatureRule) -> EnergyReport {
    let residual_norm = norm(r);
    let lipschitz = spectral_norm(&e.jacobian);
    let curvature_sq: f64 = e.hessians.iter().map(|h| sym_op_norm(h).powi(2)).sum();
    let contraction = (1.0 - lipschitz).powi(2);
    let term = rule.term(residual_norm, curvature_sq);
    let margin = (contraction - term) / (sigma * sigma);
    EnergyReport {
        residual_norm,
        lipschitz,
        curvature_sq,
        margin,
        certified: lipschitz < 1.0 && contraction > term,
        sigma,
        rule,
    }
}

/// Region-wide admissibility of a constant step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizeCert {
    pub kappa: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// Largest residual norm over the probes; an estimate, not a proven sup.
    pub r_max: f64,
    pub r_max_source: String,
    pub n_probes: usize,
    pub d: usize,
    pub sigma: f64,
    /// `R_max·√d·B/σ²`
    pub c_b: f64,
    /// `(1 − κ)²/σ² > C_B` with `κ < 1`.
    pub admissible: bool,
}

const HALTON_PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Probe points: all corners (when `d ≤ 10`), the center, and `n_probe`
/// randomly shifted Halton points (uniform draws beyond 16 dimensions).
pub fn probe_points(region: &BoxRegion, n_probe: usize, rng: &mut (impl RngCore + ?Sized)) -> Vec<Vec<f64>> {
    let d = region.dim();
    let mut pts = Vec::new();
    if d <= 10 {
        for mask in 0..(1u32 << d) {
            pts.push(
                (0..d)
                    .map(|j| if mask >> j & 1 == 1 { region.hi[j] } else { region.lo[j] })
                    .collect(),
            );
        }
    }
    pts.push(region.center());
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    for i in 0..n_probe {
        let p = (0..d)
            .map(|j| {
                let u = if j < HALTON_PRIMES.len() {
                    (radical_inverse(i as u64 + 1, HALTON_PRIMES[j]) + shift[j]).fract()
                } else {
                    rng.random::<f64>()
                };
                region.lo[j] + u * (region.hi[j] - region.lo[j])
            })
            .collect();
        pts.push(p);
    }
    pts
}

/// Uniform certificate over `region` for the step anchored at `x_anchor`.
pub fn certify_uniform<F: DenoisingField + ?Sized>(
    field: &F,
    x_anchor: &[f64],
    region: &BoxRegion,
    sigma: f64,
    n_probe: usize,
    rng: &mut (impl RngCore + ?Sized),
) -> Result<StepSizeCert> {
    check_sigma(sigma)?;
    if n_probe == 0 {
        return invalid("n_probe must be at least 1");
    }
    let d = field.dim();
    if region.dim() != d {
        return invalid("region dimension does not match the field");
    }
    check_dim("x_anchor", x_anchor, d)?;
    check_finite("x_anchor", x_anchor)?;
    let bounds = match field.uniform_bounds(region) {
        Some(b) => b,
        None => return invalid("field provides no uniform derivative bounds"),
    };
    let probes = probe_points(region, n_probe, rng);
    let mut r_max: f64 = 0.0;
    for p in &probes {
        let r = residual(&field.apply(p), x_anchor, p);
        r_max = r_max.max(norm(&r));
    }
    let s2 = sigma * sigma;
    let c_b = r_max * (d as f64).sqrt() * bounds.curvature / s2;
    let admissible = bounds.kappa < 1.0 && (1.0 - bounds.kappa).powi(2) / s2 > c_b;
    Ok(StepSizeCert {
        kappa: bounds.kappa,
        b: bounds.curvature,
        r_max,
        r_max_source: "empirical".into(),
        n_probes: probes.len(),
        d,
        sigma,
        c_b,
        admissible,
    })
}

/// Stopping rule for [`minimize_energy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub tol: f64,
}

/// Trace of one subproblem solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// `g` at the start and after every accepted iteration; non-increasing.
    pub energies: Vec<f64>,
    /// Iterations that fell back to gradient descent.
    pub fallback_steps: usize,
    pub converged: bool,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Damped Newton on `g` from `z0` with Armijo backtracking.
///
/// When the Hessian is not positive definite the iteration takes a
/// `σ²`-scaled steepest-descent direction instead.
pub fn minimize_energy<F: DenoisingField + ?Sized>(
    field: &F,
    x_anchor: &[f64],
    z0: &[f64],
    sigma: f64,
    opts: SolveOptions,
) -> Result<SolveOutcome> {
    let mut z = z0.to_vec();
    let mut e = prepare(field, x_anchor, &z, sigma)?;
    let s2 = sigma * sigma;
    let mut r = residual(&e.value, x_anchor, &z);
    let mut g = dot(&r, &r) / (2.0 * s2);
    let mut energies = vec![g];
    let mut fallback_steps = 0;
    let mut iterations = 0;
    let mut grad: Vec<f64> = grad_unscaled(&e.jacobian, &r).iter().map(|v| v / s2).collect();
    let mut grad_norm = norm(&grad);

    while iterations < opts.max_iters && grad_norm > opts.tol {
        let hess = hessian_from_eval(&e, &r, sigma);
        let direction: Vec<f64> = match cholesky(&hess) {
            Some(l) => cholesky_solve(&l, &grad).into_iter().map(|v| -v).collect(),
            None => {
                fallback_steps += 1;
                grad.iter().map(|v| -v * s2).collect()
            }
        };
        let slope = dot(&grad, &direction);
        if !(slope < 0.0) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = z.iter().zip(&direction).map(|(zi, p)| zi + step * p).collect();
            let value = field.apply(&trial);
            let rt = residual(&value, x_anchor, &trial);
            let gt = dot(&rt, &rt) / (2.0 * s2);
            if gt.is_finite() && gt <= g + ARMIJO_C * step * slope {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        iterations += 1;
        z = next;
        e = field.evaluate(&z);
        r = residual(&e.value, x_anchor, &z);
        g = dot(&r, &r) / (2.0 * s2);
        energies.push(g);
        grad = grad_unscaled(&e.jacobian, &r).iter().map(|v| v / s2).collect();
        grad_norm = norm(&grad);
    }
    Ok(SolveOutcome {
        z,
        iterations,
        grad_norm,
        energies,
        fallback_steps,
        converged: grad_norm <= opts.tol,
    })
}

/// Outcome of the discrete log-concavity tests on a joint grid and its marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrekopaReport {
    pub joint_axes: bool,
    pub joint_diagonals: bool,
    pub joint: bool,
    pub marginal: bool,
    /// `joint && marginal`
    pub passed: bool,
}

/// Tolerance of the discrete midpoint test on log values.
pub const MIDPOINT_TOL: f64 = 1e-9;

fn midpoint_ok(a: f64, mid: f64, b: f64, tol: f64) -> bool {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return true;
    }
    mid >= 0.5 * (a + b) - tol
}

/// Discrete midpoint concavity of a sequence of log values.
pub fn is_discrete_log_concave(values: &[f64], tol: f64) -> bool {
    values
        .windows(3)
        .all(|w| midpoint_ok(w[0], w[1], w[2], tol))
}

/// `log Σ_j exp(v_j)`, with `−∞` for an all-`−∞` row.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Discrete log-concavity of a joint log-density grid `grid[(i, j)] = log q(z_i, x_j)`
/// and of its marginal over `x`.
pub fn prekopa_check(grid: &Matrix) -> Result<PrekopaReport> {
    let (n, m) = (grid.rows(), grid.cols());
    if n < 3 || m < 3 {
        return invalid(format!("log-density lattice must be at least 3×3, got {n}×{m}"));
    }
    if grid
        .as_slice()
        .iter()
        .any(|v| v.is_nan() || *v == f64::INFINITY)
    {
        return invalid("log-density grid contains NaN or +inf");
    }
    let tol = MIDPOINT_TOL;
    let rows_ok = (0..n).all(|i| is_discrete_log_concave(grid.row(i), tol));
    let cols_ok = (0..m).all(|j| is_discrete_log_concave(&grid.column(j), tol));
    let mut diag_ok = true;
    'outer: for i in 1..n - 1 {
        for j in 1..m - 1 {
            let mid = grid[(i, j)];
            if !midpoint_ok(grid[(i - 1, j - 1)], mid, grid[(i + 1, j + 1)], tol)
                || !midpoint_ok(grid[(i - 1, j + 1)], mid, grid[(i + 1, j - 1)], tol)
            {
                diag_ok = false;
                break 'outer;
            }
        }
    }
    let marginal: Vec<f64> = (0..n).map(|i| log_sum_exp(grid.row(i))).collect();
    let marginal_ok = is_discrete_log_concave(&marginal, tol);
    let joint_axes = rows_ok && cols_ok;
    let joint = joint_axes && diag_ok;
    Ok(PrekopaReport {
        joint_axes,
        joint_diagonals: diag_ok,
        joint,
        marginal: marginal_ok,
        passed: joint && marginal_ok,
    })
}
