use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, Result};
use crate::linalg::Matrix;

/// Per-position scalars of a causal scan `h_t = a_t h_{t−1} + b_t x_t`, `y_t = c_t h_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ScanParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() || a.len() != c.len() {
            return invalid("scan parameters a, b, c must share one length");
        }
        check_finite("a", &a)?;
        check_finite("b", &b)?;
        check_finite("c", &c)?;
        Ok(Self { a, b, c })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// The lower-triangular semiseparable matrix `M[t][s] = c_t (Π_{s<r≤t} a_r) b_s`.
    pub fn dense(&self) -> Matrix {
        let l = self.len();
        let mut m = Matrix::zeros(l, l);
        for t in 0..l {
            let mut decay = 1.0;
            for s in (0..=t).rev() {
                m[(t, s)] = self.c[t] * decay * self.b[s];
                decay *= self.a[s];
            }
        }
        m
    }
}

/// Quasiseparable mixer: forward and backward scans plus a per-channel diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixerParams {
    pub forward: ScanParams,
    /// Applied to the flipped sequence, indexed in flipped order.
    pub backward: ScanParams,
    /// `D`, one entry per channel.
    pub diag: Vec<f64>,
}

impl MixerParams {
    pub fn new(forward: ScanParams, backward: ScanParams, diag: Vec<f64>) -> Result<Self> {
        if forward.len() != backward.len() {
            return invalid("forward and backward scans must share one length");
        }
        check_finite("diag", &diag)?;
        Ok(Self {
            forward,
            backward,
            diag,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.forward.len()
    }
}

/// Causal scan over each channel (column) of `x` (`L×c`).
pub fn ss_scan(params: &ScanParams, x: &Matrix) -> Result<Matrix> {
    if x.rows() != params.len() {
        return invalid(format!(
            "input has {} positions, scan has {}",
            x.rows(),
            params.len()
        ));
    }
    let (l, ch) = (x.rows(), x.cols());
    let mut y = Matrix::zeros(l, ch);
    let mut h = vec![0.0; ch];
    for t in 0..l {
        for j in 0..ch {
            h[j] = params.a[t] * h[j] + params.b[t] * x[(t, j)];
            y[(t, j)] = params.c[t] * h[j];
        }
    }
    Ok(y)
}

/// Moves every row down one position, zero-filling the first.
fn shift(x: &Matrix) -> Matrix {
    let mut y = Matrix::zeros(x.rows(), x.cols());
    for t in 1..x.rows() {
        y.row_mut(t).copy_from_slice(x.row(t - 1));
    }
    y
}

fn flip(x: &Matrix) -> Matrix {
    let l = x.rows();
    Matrix::from_fn(l, x.cols(), |t, j| x[(l - 1 - t, j)])
}

/// `QS(X) = shift(SS_f(X)) + flip(shift(SS_b(flip(X)))) + D·X`.
pub fn qs_mix(params: &MixerParams, x: &Matrix) -> Result<Matrix> {
    if params.diag.len() != x.cols() {
        return invalid("diag needs one entry per channel");
    }
    let fwd = shift(&ss_scan(&params.forward, x)?);
    let bwd = flip(&shift(&ss_scan(&params.backward, &flip(x))?));
    Ok(Matrix::from_fn(x.rows(), x.cols(), |t, j| {
        fwd[(t, j)] + bwd[(t, j)] + params.diag[j] * x[(t, j)]
    }))
}

/// Itemized forward-pass FLOPs of one Hydra block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub xz_projections: u128,
    pub bcdt_projections: u128,
    pub first_ssd: u128,
    pub second_ssd: u128,
    pub combined_qs: u128,
    pub diagonal: u128,
    pub shift_flip: u128,
    pub depthwise_conv: u128,
    pub gating: u128,
    pub output_projection: u128,
    /// Sum of every item, counting the two SSDs once through `combined_qs`.
    pub total: u128,
}

impl FlopsReport {
    /// `(label, value)` rows in table order.
    pub fn rows(&self) -> Vec<(&'static str, u128)> {
        vec![
            ("XZ projections", self.xz_projections),
            ("BCdt projections", self.bcdt_projections),
            ("First SSD", self.first_ssd),
            ("Second SSD", self.second_ssd),
            ("Combined QS cost", self.combined_qs),
            ("Diagonal multiplication (DX)", self.diagonal),
            ("Shift / flip overhead", self.shift_flip),
            ("Depthwise convolution", self.depthwise_conv),
            ("Gating", self.gating),
            ("Output projection", self.output_projection),
            ("Total", self.total),
        ]
    }
}

pub fn hydra_flops(
    seq_len: u64,
    d_model: u64,
    expand: u64,
    d_state: u64,
    num_heads: u64,
    window_size: u64,
) -> Result<FlopsReport> {
    if [seq_len, d_model, expand, d_state, num_heads, window_size].contains(&0) {
        return invalid("FLOPs arguments must be positive integers");
    }
    let (l, d, e, n, h, w) = (
        seq_len as u128,
        d_model as u128,
        expand as u128,
        d_state as u128,
        num_heads as u128,
        window_size as u128,
    );
    let ssd = 2 * 3 * l * (e * d) * n;
    let mut r = FlopsReport {
        xz_projections: 2 * l * d * (2 * e * d),
        bcdt_projections: 2 * l * d * (2 * n + h),
        first_ssd: ssd,
        second_ssd: ssd,
        combined_qs: 4 * 3 * l * (e * d) * n,
        diagonal: 2 * l * d,
        shift_flip: 6 * l * d,
        depthwise_conv: 2 * l * d * w,
        gating: 5 * l * d,
        output_projection: 2 * l * d * d,
        total: 0,
    };
    r.total = r.xz_projections
        + r.bcdt_projections
        + r.combined_qs
        + r.diagonal
        + r.shift_flip
        + r.depthwise_conv
        + r.gating
        + r.output_projection;
    Ok(r)
}
