use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{sym_eigen, Matrix};

/// `k` lowest eigenpairs of the normalized Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianPe {
    /// `n×k`; column `c` is the eigenvector of `eigenvalues[c]`.
    pub encoding: Matrix,
    /// Ascending, in `[0, 2]`.
    pub eigenvalues: Vec<f64>,
}

/// Eigenvectors of `L = I − D^{−1/2} A D^{−1/2}` for the `k` smallest
/// eigenvalues.
///
/// Isolated nodes get `D^{−1/2} = 0`, which leaves a unit row in `L`. Each
/// eigenvector is signed so that its largest-magnitude entry (first on ties)
/// is positive.
pub fn laplacian_pe(adjacency: &Matrix, k: usize) -> Result<LaplacianPe> {
    let n = adjacency.rows();
    if !adjacency.is_square() {
        return invalid("adjacency must be square");
    }
    if k > n {
        return invalid(format!("k = {k} exceeds node count {n}"));
    }
    if !adjacency.all_finite() || adjacency.as_slice().iter().any(|v| *v < 0.0) {
        return invalid("adjacency entries must be finite and non-negative");
    }
    if adjacency.asymmetry() != 0.0 {
        return invalid("adjacency must be symmetric");
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = adjacency.row(i).iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let lap = Matrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * adjacency[(i, j)] * inv_sqrt[j]
    });
    let eig = sym_eigen(&lap)?;
    let mut encoding = Matrix::zeros(n, k);
    for c in 0..k {
        let col = eig.vectors.column(c);
        let pivot = col
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > col[best].abs() { i } else { best });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            encoding[(r, c)] = sign * col[r];
        }
    }
    Ok(LaplacianPe {
        encoding,
        eigenvalues: eig.values[..k].to_vec(),
    })
}

/// `PE(pos, 2i) = sin(pos/10000^{2i/d})`, `PE(pos, 2i+1) = cos(pos/10000^{2i/d})`.
pub fn sinusoidal_pe(pos: usize, d_model: usize) -> Result<Vec<f64>> {
    if d_model % 2 != 0 {
        return invalid(format!("d_model must be even, got {d_model}"));
    }
    let p = pos as f64;
    let mut out = Vec::with_capacity(d_model);
    for i in 0..d_model / 2 {
        let angle = p / 10000f64.powf(2.0 * i as f64 / d_model as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adj(n: usize, edges: &[(usize, usize)]) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for &(i, j) in edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    #[test]
    fn complete_and_path_spectra() {
        let k3 = laplacian_pe(&adj(3, &[(0, 1), (1, 2), (0, 2)]), 3).unwrap();
        assert!(k3.eigenvalues[0].abs() < 1e-12);
        assert!((k3.eigenvalues[1] - 1.5).abs() < 1e-12);
        assert!((k3.eigenvalues[2] - 1.5).abs() < 1e-12);
        let p3 = laplacian_pe(&adj(3, &[(0, 1), (1, 2)]), 3).unwrap();
        for (v, e) in p3.eigenvalues.iter().zip([0.0, 1.0, 2.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn null_vector_is_sqrt_degree() {
        let a = adj(4, &[(0, 1), (1, 2), (2, 3), (1, 3)]);
        let pe = laplacian_pe(&a, 1).unwrap();
        let deg = [1.0f64, 3.0, 2.0, 2.0];
        let norm: f64 = deg.iter().sum::<f64>().sqrt();
        for i in 0..4 {
            assert!((pe.encoding[(i, 0)] - deg[i].sqrt() / norm).abs() < 1e-10);
        }
    }

    #[test]
    fn isolated_node_and_errors() {
        let pe = laplacian_pe(&adj(3, &[(0, 1)]), 3).unwrap();
        assert!(pe.eigenvalues.iter().any(|v| (v - 1.0).abs() < 1e-12));
        let mut bad = adj(3, &[(0, 1)]);
        bad[(0, 2)] = 1.0;
        assert!(laplacian_pe(&bad, 2).is_err());
        assert!(laplacian_pe(&adj(3, &[]), 4).is_err());
    }

    #[test]
    fn sinusoidal_values() {
        assert_eq!(sinusoidal_pe(0, 6).unwrap(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(sinusoidal_pe(5, 8).unwrap()[0], 5f64.sin());
        let v = sinusoidal_pe(3, 4).unwrap();
        let expect = [
            0.1411200080598672,
            -0.9899924966004454,
            0.02999550020249566,
            0.9995500337489875,
        ];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(sinusoidal_pe(1, 3).is_err());
    }
}
