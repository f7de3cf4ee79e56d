//! Denoising maps `F: ℝᵈ → ℝᵈ` with analytic first and second derivatives.
//!
//! A reverse step applies `x̂' = x − F(x̂)`. Every field here exposes its
//! value, Jacobian `J_F(z)` and per-output Hessians `H_{F,i}(z)` so that the
//! proxy energy of a step can be differentiated and certified exactly.
//!
//! Fields are time-indexed by construction: a sampler holds one field per
//! reverse step instead of passing `t` into a shared network.

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, invalid, Result};
use crate::linalg::{spectral_norm, Matrix};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Softplus,
    Relu,
}

/// |u| at which |tanh''(u)| peaks: atanh(1/√3).
const TANH_CURVATURE_PEAK: f64 = 0.658_478_948_462_408_4;

impl Activation {
    pub fn value(self, u: f64) -> f64 {
        match self {
            Activation::Tanh => u.tanh(),
            Activation::Softplus => {
                if u > 30.0 {
                    u + (-u).exp().ln_1p()
                } else {
                    u.exp().ln_1p()
                }
            }
            Activation::Relu => u.max(0.0),
        }
    }

    /// φ′(u); relu uses 0 at the kink.
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Activation::Softplus => logistic(u),
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// φ″(u); zero for relu.
    pub fn second_derivative(self, u: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = u.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Softplus => {
                let s = logistic(u);
                s * (1.0 - s)
            }
            Activation::Relu => 0.0,
        }
    }

    /// `sup |φ′(u)|` for `u ∈ [lo, hi]`.
    pub fn sup_abs_derivative(self, lo: f64, hi: f64) -> f64 {
        match self {
            Activation::Tanh => self.derivative(closest_to_zero(lo, hi)),
            Activation::Softplus => logistic(hi),
            Activation::Relu => {
                if hi > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `sup |φ″(u)|` for `u ∈ [lo, hi]`.
    pub fn sup_abs_second_derivative(self, lo: f64, hi: f64) -> f64 {
        match self {
            Activation::Tanh => {
                // |φ″| is even and unimodal on [0, ∞) with its peak at TANH_CURVATURE_PEAK
                let peak = TANH_CURVATURE_PEAK;
                if (lo <= peak && peak <= hi) || (lo <= -peak && -peak <= hi) {
                    return self.second_derivative(peak).abs();
                }
                self.second_derivative(lo)
                    .abs()
                    .max(self.second_derivative(hi).abs())
            }
            Activation::Softplus => self.second_derivative(closest_to_zero(lo, hi)),
            Activation::Relu => 0.0,
        }
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn closest_to_zero(lo: f64, hi: f64) -> f64 {
    if lo <= 0.0 && 0.0 <= hi {
        0.0
    } else if hi < 0.0 {
        hi
    } else {
        lo
    }
}

/// Value, Jacobian and per-output Hessians of a field at one point.
#[derive(Debug, Clone)]
pub struct FieldEval {
    pub value: Vec<f64>,
    /// `jacobian[(i, j)] = ∂F_i/∂z_j`.
    pub jacobian: Matrix,
    /// `hessians[i] = ∇²F_i(z)`, each symmetric.
    pub hessians: Vec<Matrix>,
}

/// Axis-aligned box `[lo, hi]` in ℝᵈ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return invalid("box bounds must be non-empty and of equal length");
        }
        check_finite("box lo", &lo)?;
        check_finite("box hi", &hi)?;
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return invalid("box region is degenerate (need lo < hi on every axis)");
        }
        Ok(Self { lo, hi })
    }

    /// Cube of half-width `half` centered at `center`.
    pub fn around(center: &[f64], half: f64) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - half).collect(),
            center.iter().map(|c| c + half).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }
}

/// Uniform derivative bounds over a region: `‖J_F‖₂ ≤ kappa`, `‖H_{F,i}‖_op ≤ curvature`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBounds {
    pub kappa: f64,
    pub curvature: f64,
}

/// A denoising map with analytic derivatives.
pub trait DenoisingField: Send + Sync {
    fn dim(&self) -> usize;

    /// Value and derivatives. Implementations may assume validated input.
    fn evaluate(&self, z: &[f64]) -> FieldEval;

    /// Value only; cheaper than [`DenoisingField::evaluate`].
    fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.evaluate(z).value
    }

    /// Uniform Jacobian/curvature bounds over `region`, when the field can
    /// provide them.
    fn uniform_bounds(&self, _region: &BoxRegion) -> Option<UniformBounds> {
        None
    }
}

fn validate_input(field: &(impl DenoisingField + ?Sized), z: &[f64]) -> Result<()> {
    check_dim("z", z, field.dim())?;
    check_finite("z", z)
}

/// Evaluates `field` at `z` after checking dimension and finiteness.
pub fn eval_field(field: &(impl DenoisingField + ?Sized), z: &[f64]) -> Result<FieldEval> {
    validate_input(field, z)?;
    Ok(field.evaluate(z))
}

/// Checked value-only evaluation.
pub fn apply_field(field: &(impl DenoisingField + ?Sized), z: &[f64]) -> Result<Vec<f64>> {
    validate_input(field, z)?;
    Ok(field.apply(z))
}

/// `F(z) = Λz + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineField {
    #[serde(rename = "lambda")]
    pub lambda_mat: Matrix,
    pub bias: Vec<f64>,
}

impl AffineField {
    pub fn new(lambda_mat: Matrix, bias: Vec<f64>) -> Result<Self> {
        if !lambda_mat.is_square() || lambda_mat.rows() != bias.len() {
            return invalid("affine field: Λ must be d×d and b a d-vector");
        }
        if !lambda_mat.all_finite() {
            return invalid("affine field: Λ is not finite");
        }
        check_finite("bias", &bias)?;
        Ok(Self { lambda_mat, bias })
    }

    pub fn zero(d: usize) -> Self {
        Self {
            lambda_mat: Matrix::zeros(d, d),
            bias: vec![0.0; d],
        }
    }
}

impl DenoisingField for AffineField {
    fn dim(&self) -> usize {
        self.bias.len()
    }

    fn evaluate(&self, z: &[f64]) -> FieldEval {
        let d = self.dim();
        FieldEval {
            value: self.apply(z),
            jacobian: self.lambda_mat.clone(),
            hessians: vec![Matrix::zeros(d, d); d],
        }
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut v = self.lambda_mat.matvec(z);
        for (x, b) in v.iter_mut().zip(&self.bias) {
            *x += b;
        }
        v
    }

    fn uniform_bounds(&self, _region: &BoxRegion) -> Option<UniformBounds> {
        Some(UniformBounds {
            kappa: spectral_norm(&self.lambda_mat),
            curvature: 0.0,
        })
    }
}

/// One-hidden-layer map `y = W2·φ(W1·x + b1)`, shared by fields and graph layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneLayerMap {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub activation: Activation,
}

impl OneLayerMap {
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, activation: Activation) -> Result<Self> {
        if w1.rows() != b1.len() || w2.cols() != w1.rows() {
            return invalid(format!(
                "one-layer map: W1 is {}×{}, b1 has {}, W2 is {}×{}",
                w1.rows(),
                w1.cols(),
                b1.len(),
                w2.rows(),
                w2.cols()
            ));
        }
        if !w1.all_finite() || !w2.all_finite() {
            return invalid("one-layer map: weights are not finite");
        }
        check_finite("b1", &b1)?;
        Ok(Self {
            w1,
            b1,
            w2,
            activation,
        })
    }

    /// Gaussian initialization with standard deviation `scale/√fan_in` per layer.
    pub fn random(
        input: usize,
        hidden: usize,
        output: usize,
        activation: Activation,
        scale: f64,
        rng: &mut (impl RngCore + ?Sized),
    ) -> Self {
        let n1 = Normal::new(0.0, scale / (input.max(1) as f64).sqrt()).unwrap();
        let n2 = Normal::new(0.0, scale / (hidden.max(1) as f64).sqrt()).unwrap();
        let w1 = Matrix::from_fn(hidden, input, |_, _| n1.sample(rng));
        let b1 = (0..hidden).map(|_| n1.sample(rng)).collect();
        let w2 = Matrix::from_fn(output, hidden, |_, _| n2.sample(rng));
        Self {
            w1,
            b1,
            w2,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    /// Pre-activations `u = W1·x + b1`.
    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut u = self.w1.matvec(x);
        for (ui, bi) in u.iter_mut().zip(&self.b1) {
            *ui += bi;
        }
        u
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = self
            .pre_activation(x)
            .into_iter()
            .map(|u| self.activation.value(u))
            .collect();
        self.w2.matvec(&hidden)
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        check_dim("map input", x, self.input_dim())?;
        check_finite("map input", x)
    }
}

/// `F(z) = W2·φ(W1·[z; c] + b1)` with an optional fixed context vector `c`.
///
/// The context realizes the two-argument form `F(x₀⁽ⁿ⁾, x_t)`: the first `d`
/// columns of `W1` act on `z`, the remaining columns on the context.
/// Derivatives are taken with respect to `z` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneLayerField {
    #[serde(flatten)]
    pub map: OneLayerMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<Vec<f64>>,
}

/// Pointwise derivative bounds of a one-layer field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBounds {
    /// `‖W2‖_op·‖W1‖_op·max_j |φ′(u_j)| ≥ ‖J_F(z)‖₂`
    pub kappa_bound: f64,
    /// `‖W1‖_op²·max_{i,j} |w2_{ij}|·max_j |φ″(u_j)| ≥ max_i ‖H_{F,i}(z)‖_op`
    pub b_bound: f64,
}

impl OneLayerField {
    /// Single-argument field: `W1` must be `h×d` and `W2` `d×h`.
    pub fn new(map: OneLayerMap) -> Result<Self> {
        if map.input_dim() != map.output_dim() {
            return invalid("one-layer field: W1 must have d columns when W2 has d rows");
        }
        Ok(Self { map, context: None })
    }

    /// Field with a context block: `W1` is `h×(d + c)`.
    pub fn with_context(map: OneLayerMap, context: Vec<f64>) -> Result<Self> {
        if map.input_dim() != map.output_dim() + context.len() {
            return invalid("one-layer field: W1 columns must equal d + context length");
        }
        check_finite("context", &context)?;
        Ok(Self {
            map,
            context: Some(context),
        })
    }

    pub fn context_dim(&self) -> usize {
        self.map.input_dim() - self.map.output_dim()
    }

    pub fn set_context(&mut self, context: Vec<f64>) -> Result<()> {
        if context.len() != self.context_dim() {
            return invalid("context length does not match the field");
        }
        self.context = Some(context);
        Ok(())
    }

    fn input(&self, z: &[f64]) -> Vec<f64> {
        let mut x = z.to_vec();
        match &self.context {
            Some(c) => x.extend_from_slice(c),
            None => x.extend(std::iter::repeat(0.0).take(self.context_dim())),
        }
        x
    }

    /// The `h×d` block of `W1` acting on `z`.
    pub fn w1_z(&self) -> Matrix {
        let d = self.dim();
        Matrix::from_fn(self.map.hidden_dim(), d, |i, j| self.map.w1[(i, j)])
    }

    fn w2_max_abs(&self) -> f64 {
        self.map.w2.max_abs()
    }

    /// Pointwise derivative bounds at `z`.
    pub fn bounds(&self, z: &[f64]) -> Result<FieldBounds> {
        check_dim("z", z, self.dim())?;
        check_finite("z", z)?;
        let u = self.map.pre_activation(&self.input(z));
        let act = self.map.activation;
        let max_d1 = u.iter().fold(0.0_f64, |m, &x| m.max(act.derivative(x).abs()));
        let max_d2 = u
            .iter()
            .fold(0.0_f64, |m, &x| m.max(act.second_derivative(x).abs()));
        let w1 = spectral_norm(&self.w1_z());
        let w2 = spectral_norm(&self.map.w2);
        Ok(FieldBounds {
            kappa_bound: w2 * w1 * max_d1,
            b_bound: w1 * w1 * self.w2_max_abs() * max_d2,
        })
    }
}

impl DenoisingField for OneLayerField {
    fn dim(&self) -> usize {
        self.map.output_dim()
    }

    fn evaluate(&self, z: &[f64]) -> FieldEval {
        let d = self.dim();
        let h = self.map.hidden_dim();
        let act = self.map.activation;
        let u = self.map.pre_activation(&self.input(z));
        let hidden: Vec<f64> = u.iter().map(|&x| act.value(x)).collect();
        let d1: Vec<f64> = u.iter().map(|&x| act.derivative(x)).collect();
        let d2: Vec<f64> = u.iter().map(|&x| act.second_derivative(x)).collect();
        let value = self.map.w2.matvec(&hidden);

        // J = W2 · diag(φ′(u)) · W1_z
        let w1 = &self.map.w1;
        let w2 = &self.map.w2;
        let jacobian = Matrix::from_fn(d, d, |i, j| {
            (0..h).map(|k| w2[(i, k)] * d1[k] * w1[(k, j)]).sum()
        });
        // H_i = W1_zᵀ · diag(w2_i ⊙ φ″(u)) · W1_z
        let hessians = (0..d)
            .map(|i| {
                let weights: Vec<f64> = (0..h).map(|k| w2[(i, k)] * d2[k]).collect();
                let mut hess = Matrix::zeros(d, d);
                for a in 0..d {
                    for b in a..d {
                        let s: f64 = (0..h).map(|k| w1[(k, a)] * weights[k] * w1[(k, b)]).sum();
                        hess[(a, b)] = s;
                        hess[(b, a)] = s;
                    }
                }
                hess
            })
            .collect();
        FieldEval {
            value,
            jacobian,
            hessians,
        }
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.map.forward(&self.input(z))
    }

    fn uniform_bounds(&self, region: &BoxRegion) -> Option<UniformBounds> {
        if region.dim() != self.dim() {
            return None;
        }
        let d = self.dim();
        let w1 = &self.map.w1;
        let act = self.map.activation;
        let ctx = self.context.clone().unwrap_or_else(|| vec![0.0; self.context_dim()]);
        let mut sup_d1: f64 = 0.0;
        let mut sup_d2: f64 = 0.0;
        for k in 0..self.map.hidden_dim() {
            // exact range of u_k over the box
            let mut lo = self.map.b1[k];
            let mut hi = self.map.b1[k];
            for j in 0..d {
                let a = w1[(k, j)] * region.lo[j];
                let b = w1[(k, j)] * region.hi[j];
                lo += a.min(b);
                hi += a.max(b);
            }
            for (c, x) in ctx.iter().enumerate() {
                let v = w1[(k, d + c)] * x;
                lo += v;
                hi += v;
            }
            sup_d1 = sup_d1.max(act.sup_abs_derivative(lo, hi));
            sup_d2 = sup_d2.max(act.sup_abs_second_derivative(lo, hi));
        }
        let n1 = spectral_norm(&self.w1_z());
        let n2 = spectral_norm(&self.map.w2);
        Some(UniformBounds {
            kappa: n2 * n1 * sup_d1,
            curvature: n1 * n1 * self.w2_max_abs() * sup_d2,
        })
    }
}

/// Pointwise derivative bounds for a one-layer field.
pub fn field_bounds(field: &OneLayerField, z: &[f64]) -> Result<FieldBounds> {
    field.bounds(z)
}

/// Isotropic Gaussian data `N(μ, σ₀² I)`.
///
/// Under the VP forward process every marginal stays Gaussian,
/// `p_t = N(√ᾱ_t μ, v_t I)` with `v_t = σ₀² ᾱ_t + 1 − ᾱ_t`, so scores, clean
/// estimates and the probability-flow transport are all closed-form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianData {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl GaussianData {
    pub fn new(mean: Vec<f64>, var: f64) -> Result<Self> {
        if mean.is_empty() {
            return invalid("Gaussian data needs dimension ≥ 1");
        }
        check_finite("data mean", &mean)?;
        if !(var > 0.0) || !var.is_finite() {
            return invalid("data variance must be positive");
        }
        Ok(Self { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal variance `v = σ₀² ᾱ + 1 − ᾱ`.
    pub fn marginal_var(&self, alpha_bar: f64) -> f64 {
        self.var * alpha_bar + 1.0 - alpha_bar
    }

    pub fn marginal_mean(&self, alpha_bar: f64) -> Vec<f64> {
        let s = alpha_bar.sqrt();
        self.mean.iter().map(|m| s * m).collect()
    }

    /// `∇ log p(x) = −(x − √ᾱ μ)/v`.
    pub fn score(&self, x: &[f64], alpha_bar: f64) -> Vec<f64> {
        let s = alpha_bar.sqrt();
        let v = self.marginal_var(alpha_bar);
        x.iter()
            .zip(&self.mean)
            .map(|(xi, mi)| -(xi - s * mi) / v)
            .collect()
    }

    /// Posterior mean `E[x₀ | x_t] = μ + σ₀²√ᾱ/v · (x − √ᾱ μ)`.
    pub fn posterior_mean(&self, x: &[f64], alpha_bar: f64) -> Vec<f64> {
        let s = alpha_bar.sqrt();
        let gain = self.var * s / self.marginal_var(alpha_bar);
        x.iter()
            .zip(&self.mean)
            .map(|(xi, mi)| mi + gain * (xi - s * mi))
            .collect()
    }

    /// Exact probability-flow transport field for forward step `t → t − 1`.
    pub fn oracle_field(&self, schedule: &Schedule, t: usize) -> Result<GaussianOracleField> {
        GaussianOracleField::new(self.clone(), schedule, t)
    }
}

/// Exact PF-ODE transport of one step for Gaussian data, as a denoising field.
///
/// The flow maps `N(m_t, v_t)` onto `N(m_{t−1}, v_{t−1})` monotonically, so it
/// is the affine map `z ↦ m_{t−1} + a (z − m_t)` with `a = √(v_{t−1}/v_t)`.
/// As a field, `F(z) = z − transport(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianOracleField {
    pub data: GaussianData,
    /// Forward index of the step; the transport goes `t → t − 1`.
    pub step: usize,
    pub alpha_bar: f64,
    pub alpha_bar_prev: f64,
}

impl GaussianOracleField {
    pub fn new(data: GaussianData, schedule: &Schedule, t: usize) -> Result<Self> {
        if t == 0 || t > schedule.steps() {
            return invalid(format!(
                "oracle step must lie in 1..={}, got {t}",
                schedule.steps()
            ));
        }
        Ok(Self {
            data,
            step: t,
            alpha_bar: schedule.alpha_bar(t),
            alpha_bar_prev: schedule.alpha_bar(t - 1),
        })
    }

    /// Slope `a` and offset `c` of the transport `z ↦ a z + c`.
    pub fn transport_coefficients(&self) -> (f64, Vec<f64>) {
        let a = (self.data.marginal_var(self.alpha_bar_prev) / self.data.marginal_var(self.alpha_bar))
            .sqrt();
        let sp = self.alpha_bar_prev.sqrt();
        let s = self.alpha_bar.sqrt();
        let c = self.data.mean.iter().map(|m| sp * m - a * s * m).collect();
        (a, c)
    }

    /// The exact flow of `z` from step `t` to `t − 1`.
    pub fn transport(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim("z", z, self.dim())?;
        check_finite("z", z)?;
        let (a, c) = self.transport_coefficients();
        Ok(z.iter().zip(c).map(|(zi, ci)| a * zi + ci).collect())
    }

    /// Equivalent affine field `Λ = (1 − a) I`, `b = −c`.
    pub fn as_affine(&self) -> AffineField {
        let d = self.dim();
        let (a, c) = self.transport_coefficients();
        AffineField {
            lambda_mat: Matrix::from_diag(&vec![1.0 - a; d]),
            bias: c.into_iter().map(|x| -x).collect(),
        }
    }
}

/// Exact transport for the oracle field; errors like [`GaussianOracleField::transport`].
pub fn oracle_transport(field: &GaussianOracleField, z: &[f64]) -> Result<Vec<f64>> {
    field.transport(z)
}

impl DenoisingField for GaussianOracleField {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn evaluate(&self, z: &[f64]) -> FieldEval {
        let d = self.dim();
        let (a, _) = self.transport_coefficients();
        FieldEval {
            value: self.apply(z),
            jacobian: Matrix::from_diag(&vec![1.0 - a; d]),
            hessians: vec![Matrix::zeros(d, d); d],
        }
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let (a, c) = self.transport_coefficients();
        z.iter().zip(c).map(|(zi, ci)| zi - (a * zi + ci)).collect()
    }

    fn uniform_bounds(&self, _region: &BoxRegion) -> Option<UniformBounds> {
        let (a, _) = self.transport_coefficients();
        Some(UniformBounds {
            kappa: (1.0 - a).abs(),
            curvature: 0.0,
        })
    }
}

/// Serializable field of any supported kind, tagged by `"kind"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Affine(AffineField),
    OneLayer(OneLayerField),
    GaussianOracle(GaussianOracleField),
}

impl FieldSpec {
    /// Checks shapes after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            FieldSpec::Affine(f) => {
                AffineField::new(f.lambda_mat.clone(), f.bias.clone()).map(|_| ())
            }
            FieldSpec::OneLayer(f) => {
                let m = &f.map;
                OneLayerMap::new(m.w1.clone(), m.b1.clone(), m.w2.clone(), m.activation)?;
                if m.input_dim() < m.output_dim() {
                    return invalid("one-layer field: W1 has fewer columns than d");
                }
                if let Some(c) = &f.context {
                    if c.len() != f.context_dim() {
                        return invalid("one-layer field: context length mismatch");
                    }
                }
                Ok(())
            }
            FieldSpec::GaussianOracle(f) => {
                GaussianData::new(f.data.mean.clone(), f.data.var)?;
                if !(f.alpha_bar > 0.0 && f.alpha_bar < f.alpha_bar_prev && f.alpha_bar_prev <= 1.0) {
                    return invalid("oracle field: need 0 < ᾱ_t < ᾱ_{t−1} ≤ 1");
                }
                Ok(())
            }
        }
    }
}

impl DenoisingField for FieldSpec {
    fn dim(&self) -> usize {
        match self {
            FieldSpec::Affine(f) => f.dim(),
            FieldSpec::OneLayer(f) => f.dim(),
            FieldSpec::GaussianOracle(f) => f.dim(),
        }
    }

    fn evaluate(&self, z: &[f64]) -> FieldEval {
        match self {
            FieldSpec::Affine(f) => f.evaluate(z),
            FieldSpec::OneLayer(f) => f.evaluate(z),
            FieldSpec::GaussianOracle(f) => f.evaluate(z),
        }
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        match self {
            FieldSpec::Affine(f) => f.apply(z),
            FieldSpec::OneLayer(f) => f.apply(z),
            FieldSpec::GaussianOracle(f) => f.apply(z),
        }
    }

    fn uniform_bounds(&self, region: &BoxRegion) -> Option<UniformBounds> {
        match self {
            FieldSpec::Affine(f) => f.uniform_bounds(region),
            FieldSpec::OneLayer(f) => f.uniform_bounds(region),
            FieldSpec::GaussianOracle(f) => f.uniform_bounds(region),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_affine_field() {
        let f = AffineField::zero(3);
        let e = eval_field(&f, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(e.value, vec![0.0; 3]);
        assert_eq!(e.jacobian.max_abs(), 0.0);
        assert!(e.hessians.iter().all(|h| h.max_abs() == 0.0));
    }

    #[test]
    fn affine_jacobian_is_lambda() {
        let lam = Matrix::from_rows(&[vec![0.1, -0.2], vec![0.3, 0.05]]).unwrap();
        let f = AffineField::new(lam.clone(), vec![1.0, 2.0]).unwrap();
        for z in [[0.0, 0.0], [3.0, -1.0]] {
            let e = eval_field(&f, &z).unwrap();
            assert_eq!(e.jacobian, lam);
        }
    }

    #[test]
    fn eval_rejects_bad_input() {
        let f = AffineField::zero(2);
        assert!(eval_field(&f, &[1.0]).is_err());
        assert!(eval_field(&f, &[1.0, f64::NAN]).is_err());
        assert!(eval_field(&f, &[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn relu_curvature_bound_is_zero() {
        let mut rng = seeded(3);
        let map = OneLayerMap::random(4, 6, 4, Activation::Relu, 1.0, &mut rng);
        let f = OneLayerField::new(map).unwrap();
        let b = field_bounds(&f, &[0.2, -0.1, 0.4, 1.0]).unwrap();
        assert_eq!(b.b_bound, 0.0);
    }

    #[test]
    fn zero_weights_give_zero_bounds() {
        let map = OneLayerMap::new(
            Matrix::zeros(5, 3),
            vec![0.1; 5],
            Matrix::zeros(3, 5),
            Activation::Tanh,
        )
        .unwrap();
        let f = OneLayerField::new(map).unwrap();
        let b = field_bounds(&f, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(b.kappa_bound, 0.0);
        assert_eq!(b.b_bound, 0.0);
    }

    #[test]
    fn tanh_curvature_peak_constant() {
        let a = Activation::Tanh;
        let peak = a.second_derivative(TANH_CURVATURE_PEAK).abs();
        assert!((peak - 4.0 / (3.0 * 3.0_f64.sqrt())).abs() < 1e-14);
        for u in [0.5, 0.6, 0.65, 0.66, 0.7, 0.8] {
            assert!(a.second_derivative(u).abs() <= peak + 1e-15);
        }
    }

    #[test]
    fn interval_sups_dominate_samples() {
        for act in [Activation::Tanh, Activation::Softplus, Activation::Relu] {
            for (lo, hi) in [(-3.0, -1.0), (-0.2, 0.3), (0.1, 2.0), (-5.0, 5.0), (0.7, 0.9)] {
                let s1 = act.sup_abs_derivative(lo, hi);
                let s2 = act.sup_abs_second_derivative(lo, hi);
                for i in 0..=200 {
                    let u = lo + (hi - lo) * i as f64 / 200.0;
                    assert!(act.derivative(u).abs() <= s1 + 1e-15);
                    assert!(act.second_derivative(u).abs() <= s2 + 1e-15);
                }
            }
        }
    }

    #[test]
    fn oracle_mean_round_trip() {
        let sched = Schedule::cosine(8, 0.008).unwrap();
        let data = GaussianData::new(vec![2.0], 0.25).unwrap();
        for t in 1..=8 {
            let f = data.oracle_field(&sched, t).unwrap();
            let m_t = data.marginal_mean(sched.alpha_bar(t));
            let m_prev = data.marginal_mean(sched.alpha_bar(t - 1));
            let moved = oracle_transport(&f, &m_t).unwrap();
            assert!((moved[0] - m_prev[0]).abs() < 1e-12);
            // forward noising mean map √(1 − β_t) takes it back
            let back = moved[0] * (1.0 - sched.beta(t)).sqrt();
            assert!((back - m_t[0]).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn oracle_rejects_step_zero() {
        let sched = Schedule::cosine(8, 0.008).unwrap();
        let data = GaussianData::new(vec![0.0], 1.0).unwrap();
        assert!(data.oracle_field(&sched, 0).is_err());
        assert!(data.oracle_field(&sched, 9).is_err());
    }

    #[test]
    fn stationary_oracle_is_identity() {
        let sched = Schedule::cosine(8, 0.008).unwrap();
        let data = GaussianData::new(vec![0.0, 0.0], 1.0).unwrap();
        let f = data.oracle_field(&sched, 5).unwrap();
        let z = [0.3, -1.2];
        assert_eq!(f.transport(&z).unwrap(), z.to_vec());
    }

    #[test]
    fn field_spec_json() {
        let mut rng = seeded(5);
        let map = OneLayerMap::random(2, 3, 2, Activation::Softplus, 0.5, &mut rng);
        let spec = FieldSpec::OneLayer(OneLayerField::new(map).unwrap());
        let j = serde_json::to_value(&spec).unwrap();
        assert_eq!(j["kind"], "one_layer");
        assert_eq!(j["activation"], "softplus");
        assert_eq!(j["w1"].as_array().unwrap().len(), 3);
        let back: FieldSpec = serde_json::from_value(j).unwrap();
        assert_eq!(back, spec);
        back.validate().unwrap();

        let bad = serde_json::json!({
            "kind": "affine", "lambda": [[1.0, 0.0]], "bias": [0.0]
        });
        let parsed: FieldSpec = serde_json::from_value(bad).unwrap();
        assert!(parsed.validate().is_err());
    }
}
