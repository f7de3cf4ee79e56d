use crate::error::{invalid, Result};

pub type Conformer = Vec<[f64; 3]>;

type M3 = [[f64; 3]; 3];

fn centered(x: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let n = x.len() as f64;
    let mut c = [0.0; 3];
    for p in x {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    c.iter_mut().for_each(|v| *v /= n);
    x.iter().map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect()
}

fn det(m: &M3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn col(m: &M3, j: usize) -> [f64; 3] {
    [m[0][j], m[1][j], m[2][j]]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// One-sided Jacobi SVD `H = U Σ Vᵀ`; singular values descending, `U`
/// completed to an orthonormal basis when `H` is rank deficient.
fn svd3(h: &M3) -> (M3, [f64; 3], M3) {
    let mut a = *h;
    let mut v: M3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..60 {
        let mut rotated = false;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let (ci, cj) = (col(&a, i), col(&a, j));
            let alpha = dot3(&ci, &ci);
            let beta = dot3(&cj, &cj);
            let gamma = dot3(&ci, &cj);
            if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let t = if zeta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            for m in [&mut a, &mut v] {
                for row in m.iter_mut() {
                    let (x, y) = (row[i], row[j]);
                    row[i] = c * x - s * y;
                    row[j] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma_raw = [0, 1, 2].map(|k| dot3(&col(&a, k), &col(&a, k)).sqrt());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&p, &q| sigma_raw[q].total_cmp(&sigma_raw[p]));
    let sigma = order.map(|k| sigma_raw[k]);
    let mut u: M3 = [[0.0; 3]; 3];
    let mut vs: M3 = [[0.0; 3]; 3];
    let tiny = sigma[0] * 1e-14;
    let mut basis: Vec<[f64; 3]> = Vec::new();
    for (dst, &k) in order.iter().enumerate() {
        for r in 0..3 {
            vs[r][dst] = v[r][k];
        }
        if sigma_raw[k] > tiny && sigma_raw[k] > 0.0 {
            let c = col(&a, k);
            basis.push([c[0] / sigma_raw[k], c[1] / sigma_raw[k], c[2] / sigma_raw[k]]);
        }
    }
    // complete U by Gram-Schmidt against the standard basis
    for e in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
        if basis.len() == 3 {
            break;
        }
        let mut w: [f64; 3] = e;
        for b in &basis {
            let p = dot3(&w, b);
            for k in 0..3 {
                w[k] -= p * b[k];
            }
        }
        let nrm = dot3(&w, &w).sqrt();
        if nrm > 1e-8 {
            basis.push([w[0] / nrm, w[1] / nrm, w[2] / nrm]);
        }
    }
    for (j, b) in basis.iter().enumerate() {
        for r in 0..3 {
            u[r][j] = b[r];
        }
    }
    (u, sigma, vs)
}

/// Proper rotation `R` minimizing `Σ ‖R p_i − q_i‖²` for centered `p`, `q`.
fn optimal_rotation(p: &[[f64; 3]], q: &[[f64; 3]]) -> M3 {
    let mut h: M3 = [[0.0; 3]; 3];
    for (a, b) in p.iter().zip(q) {
        for r in 0..3 {
            for c in 0..3 {
                h[r][c] += a[r] * b[c];
            }
        }
    }
    if h.iter().flatten().all(|v| *v == 0.0) {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let (u, _, v) = svd3(&h);
    // R = V·diag(1, 1, d)·Uᵀ with d = sign det(V Uᵀ)
    let mut vut: M3 = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            vut[r][c] = (0..3).map(|k| v[r][k] * u[c][k]).sum();
        }
    }
    let d = if det(&vut) < 0.0 { -1.0 } else { 1.0 };
    let mut rot: M3 = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            rot[r][c] = v[r][0] * u[c][0] + v[r][1] * u[c][1] + d * v[r][2] * u[c][2];
        }
    }
    rot
}

fn rmsd_ordered(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let p = centered(a);
    let q = centered(b);
    let rot = optimal_rotation(&p, &q);
    let mut sum = 0.0;
    for (x, y) in p.iter().zip(&q) {
        for r in 0..3 {
            let rx = rot[r][0] * x[0] + rot[r][1] * x[1] + rot[r][2] * x[2];
            sum += (rx - y[r]).powi(2);
        }
    }
    (sum / p.len() as f64).sqrt()
}

fn canonical_less(a: &[[f64; 3]], b: &[[f64; 3]]) -> bool {
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// RMSD after optimal superposition by translation and proper rotation.
///
/// The arguments are put in a canonical order first, so the result is exactly
/// symmetric.
pub fn kabsch_rmsd(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    if a.len() != b.len() {
        return invalid(format!("atom counts differ: {} vs {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return invalid("conformers need at least one atom");
    }
    if a.iter().chain(b).flatten().any(|v| !v.is_finite()) {
        return invalid("coordinates must be finite");
    }
    if a == b {
        return Ok(0.0);
    }
    Ok(if canonical_less(b, a) {
        rmsd_ordered(b, a)
    } else {
        rmsd_ordered(a, b)
    })
}
