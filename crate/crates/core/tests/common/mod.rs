//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rtk_denoise::field::{Activation, AffineField, OneLayerField, OneLayerMap};
use rtk_denoise::linalg::Matrix;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// Smallest eigenvalue of a symmetric matrix, dense solver.
pub fn min_eig(m: &Matrix) -> f64 {
    to_na(m).symmetric_eigen().eigenvalues.min()
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_abs_max_eig(m: &Matrix) -> f64 {
    to_na(m).symmetric_eigen().eigenvalues.amax()
}

/// Largest singular value.
pub fn op_norm(m: &Matrix) -> f64 {
    to_na(m).singular_values().max()
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| normal(rng)).collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * normal(rng))
}

pub fn random_one_layer(rng: &mut impl Rng, d: usize, h: usize, act: Activation, scale: f64) -> OneLayerField {
    let map = OneLayerMap::new(
        random_matrix(rng, h, d, scale),
        normal_vec(rng, h),
        random_matrix(rng, d, h, scale),
        act,
    )
    .unwrap();
    OneLayerField::new(map).unwrap()
}

pub fn random_context_field(rng: &mut impl Rng, d: usize, c: usize, h: usize, act: Activation, scale: f64) -> OneLayerField {
    let map = OneLayerMap::new(
        random_matrix(rng, h, d + c, scale),
        normal_vec(rng, h),
        random_matrix(rng, d, h, scale),
        act,
    )
    .unwrap();
    OneLayerField::with_context(map, normal_vec(rng, c)).unwrap()
}

pub fn random_affine(rng: &mut impl Rng, d: usize, scale: f64) -> AffineField {
    AffineField::new(random_matrix(rng, d, d, scale), normal_vec(rng, d)).unwrap()
}

/// Central differences of a scalar function.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, z: &[f64], h: f64) -> Vec<f64> {
    let mut zp = z.to_vec();
    (0..z.len())
        .map(|i| {
            zp[i] = z[i] + h;
            let up = f(&zp);
            zp[i] = z[i] - h;
            let down = f(&zp);
            zp[i] = z[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian; `out[i][j] = ∂f_i/∂z_j`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = z.len();
    let mut zp = z.to_vec();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        zp[j] = z[j] + h;
        let up = f(&zp);
        zp[j] = z[j] - h;
        let down = f(&zp);
        zp[j] = z[j];
        cols.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    (0..cols[0].len()).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let axis = Unit::new_normalize(Vector3::new(normal(rng), normal(rng), normal(rng)));
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let r = Rotation3::from_axis_angle(&axis, angle);
    let m = r.matrix();
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

pub fn rigid(p: &[f64; 3], r: &[[f64; 3]; 3], t: &[f64; 3]) -> [f64; 3] {
    let mut out = *t;
    for i in 0..3 {
        for j in 0..3 {
            out[i] += r[i][j] * p[j];
        }
    }
    out
}

/// Sample mean and unbiased variance of scalars.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Random permutation of `0..n`.
pub fn permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Property-test settings without on-disk regression files.
pub fn prop_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}
