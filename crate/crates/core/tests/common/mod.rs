#![allow(dead_code)]

use mpct_core::{DenseMatrix, SymBandedMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `‖a - b‖∞ / max(1, ‖b‖∞)`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / amax(b).max(1.0)
}

pub fn dense_solve(m: &DenseMatrix, d: &[f64]) -> Vec<f64> {
    let x = to_na(m).lu().solve(&DVector::from_column_slice(d)).expect("nonsingular");
    x.iter().copied().collect()
}

/// Diagonally dominant symmetric banded matrix.
pub fn random_banded_spd<R: Rng>(rng: &mut R, n: usize, bw: usize) -> SymBandedMatrix {
    let mut m = SymBandedMatrix::zeros(n, bw).unwrap();
    let mut rowsum = vec![0.0; n];
    for j in 0..n {
        for i in j + 1..(j + bw + 1).min(n) {
            let v: f64 = rng.random_range(-1.0..1.0);
            m.set(i, j, v);
            rowsum[i] += v.abs();
            rowsum[j] += v.abs();
        }
    }
    for i in 0..n {
        m.set(i, i, rowsum[i] + rng.random_range(0.5..2.0));
    }
    m
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}
