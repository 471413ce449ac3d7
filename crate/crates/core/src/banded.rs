//! Symmetric banded and block-diagonal storage with Cholesky kernels, plus the
//! structured prediction matrix `G` of the tracking problem.
//!
//! Banded matrices use packed lower-band column storage: column `j` holds the
//! entries `(j, j), (j + 1, j), ..., (j + bw, j)` contiguously, padded with
//! zeros past the last row. Only the lower triangle is stored.

use serde::{Deserialize, Serialize};

use crate::dense::{CholeskyFactor, DenseMatrix};
use crate::error::{check_len, Error, Result};

/// Relative pivot floor for the banded Cholesky factorization, applied to the
/// largest diagonal entry of the input.
pub const DEFAULT_PIVOT_FLOOR: f64 = 1e-13;

/// Anything that can solve `Γ x = d` in place for a fixed factored `Γ`.
pub trait StructuredSolve: Send + Sync {
    fn dim(&self) -> usize;

    /// Overwrites `x` with `Γ⁻¹ x`. The caller guarantees `x.len() == self.dim()`.
    fn solve_in_place(&self, x: &mut [f64]);

    fn solve(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), d.len())?;
        let mut x = d.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymBandedMatrix {
    n: usize,
    half_bandwidth: usize,
    bands: Vec<f64>,
}

impl SymBandedMatrix {
    pub fn zeros(n: usize, half_bandwidth: usize) -> Result<Self> {
        if n == 0 || half_bandwidth >= n {
            return Err(Error::InvalidParameter(format!(
                "half bandwidth {half_bandwidth} must be below the dimension {n}"
            )));
        }
        Ok(Self { n, half_bandwidth, bands: vec![0.0; n * (half_bandwidth + 1)] })
    }

    /// Copies the band of a dense symmetric matrix. Entries outside the band are ignored.
    pub fn from_dense(m: &DenseMatrix, half_bandwidth: usize) -> Result<Self> {
        check_len(m.rows(), m.cols())?;
        let mut out = Self::zeros(m.rows(), half_bandwidth)?;
        for j in 0..out.n {
            for i in j..(j + half_bandwidth + 1).min(out.n) {
                out.set(i, j, m[(i, j)]);
            }
        }
        Ok(out)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        j * (self.half_bandwidth + 1) + (i - j)
    }

    /// Symmetric access; returns zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.half_bandwidth {
            0.0
        } else {
            self.bands[self.slot(i, j)]
        }
    }

    /// Sets entry `(i, j)` and, implicitly, `(j, i)`.
    ///
    /// Panics if the entry lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.half_bandwidth, "entry ({i}, {j}) outside the band");
        let s = self.slot(i, j);
        self.bands[s] = value;
    }

    pub fn add_to(&mut self, i: usize, j: usize, value: f64) {
        let v = self.get(i, j);
        self.set(i, j, v + value);
    }

    pub fn is_finite(&self) -> bool {
        self.bands.iter().all(|v| v.is_finite())
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.bands[self.slot(i, i)]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            y[j] += self.bands[self.slot(j, j)] * x[j];
            for i in j + 1..(j + self.half_bandwidth + 1).min(self.n) {
                let a = self.bands[self.slot(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
        Ok(y)
    }
}

/// Lower-triangular Cholesky factor `L` of a banded matrix, in the same packed layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedCholeskyFactor {
    n: usize,
    half_bandwidth: usize,
    bands: Vec<f64>,
}

impl BandedCholeskyFactor {
    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    /// Entry `L[i][j]` (zero outside the lower band).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < j || i - j > self.half_bandwidth {
            0.0
        } else {
            self.bands[j * (self.half_bandwidth + 1) + (i - j)]
        }
    }

    pub fn to_dense_lower(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        let w = self.half_bandwidth + 1;
        &self.bands[j * w..(j + 1) * w]
    }
}

impl StructuredSolve for BandedCholeskyFactor {
    fn dim(&self) -> usize {
        self.n
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let bw = self.half_bandwidth;
        debug_assert_eq!(x.len(), n);
        // L y = d, column oriented
        for j in 0..n {
            let col = self.col(j);
            let yj = x[j] / col[0];
            x[j] = yj;
            let end = (j + bw + 1).min(n);
            for (xi, l) in x[j + 1..end].iter_mut().zip(&col[1..]) {
                *xi -= l * yj;
            }
        }
        // L^T x = y
        for j in (0..n).rev() {
            let col = self.col(j);
            let end = (j + bw + 1).min(n);
            let s: f64 = x[j + 1..end].iter().zip(&col[1..]).map(|(xi, l)| xi * l).sum();
            x[j] = (x[j] - s) / col[0];
        }
    }
}

/// Factor with the default pivot floor.
pub fn banded_cholesky_factor(m: &SymBandedMatrix) -> Result<BandedCholeskyFactor> {
    banded_cholesky_factor_with_floor(m, DEFAULT_PIVOT_FLOOR)
}

/// Banded Cholesky `M = L Lᵀ`, rejecting any pivot at or below
/// `relative_floor * max_i M[i][i]`.
pub fn banded_cholesky_factor_with_floor(
    m: &SymBandedMatrix,
    relative_floor: f64,
) -> Result<BandedCholeskyFactor> {
    let n = m.n;
    let bw = m.half_bandwidth;
    let w = bw + 1;
    let floor = relative_floor * m.max_diagonal().max(0.0);
    let mut l = m.bands.clone();
    // right-looking: after finishing column j, update the trailing band
    for j in 0..n {
        let pivot = l[j * w];
        if !(pivot > floor) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { row: j });
        }
        let d = pivot.sqrt();
        l[j * w] = d;
        let end = (j + w).min(n);
        for i in j + 1..end {
            l[j * w + (i - j)] /= d;
        }
        for k in j + 1..end {
            let lkj = l[j * w + (k - j)];
            if lkj == 0.0 {
                continue;
            }
            for i in k..end {
                l[k * w + (i - k)] -= l[j * w + (i - j)] * lkj;
            }
        }
    }
    Ok(BandedCholeskyFactor { n, half_bandwidth: bw, bands: l })
}

pub fn banded_solve(l: &BandedCholeskyFactor, d: &[f64]) -> Result<Vec<f64>> {
    l.solve(d)
}

/// Block-diagonal symmetric matrix made of small dense blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagMatrix {
    blocks: Vec<DenseMatrix>,
}

impl BlockDiagMatrix {
    pub fn new(blocks: Vec<DenseMatrix>) -> Result<Self> {
        for b in &blocks {
            check_len(b.rows(), b.cols())?;
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[DenseMatrix] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(DenseMatrix::rows).sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim();
        let mut out = DenseMatrix::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            for i in 0..b.rows() {
                for j in 0..b.cols() {
                    out[(off + i, off + j)] = b[(i, j)];
                }
            }
            off += b.rows();
        }
        out
    }

    pub fn factor(&self) -> Result<BlockDiagFactor> {
        block_diag_factor(self)
    }
}

/// Per-block dense Cholesky factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagFactor {
    n: usize,
    blocks: Vec<CholeskyFactor>,
}

impl BlockDiagFactor {
    pub fn blocks(&self) -> &[CholeskyFactor] {
        &self.blocks
    }

    /// Explicit inverse of every block.
    pub fn block_inverses(&self) -> Vec<DenseMatrix> {
        self.blocks.iter().map(CholeskyFactor::inverse).collect()
    }
}

impl StructuredSolve for BlockDiagFactor {
    fn dim(&self) -> usize {
        self.n
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let mut off = 0;
        for b in &self.blocks {
            let k = b.dim();
            b.solve_in_place(&mut x[off..off + k]);
            off += k;
        }
    }
}

pub fn block_diag_factor(m: &BlockDiagMatrix) -> Result<BlockDiagFactor> {
    let blocks = m
        .blocks
        .iter()
        .enumerate()
        .map(|(block, b)| {
            if !b.is_symmetric(1e-12) {
                return Err(Error::BlockNotPositiveDefinite { block, row: 0 });
            }
            b.cholesky().map_err(|row| Error::BlockNotPositiveDefinite { block, row })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockDiagFactor { n: m.dim(), blocks })
}

pub fn block_diag_solve(f: &BlockDiagFactor, d: &[f64]) -> Result<Vec<f64>> {
    f.solve(d)
}

/// Equality-constraint matrix of the tracking problem for the variable ordering
/// `z = (x_0, u_0, ..., x_{N-1}, u_{N-1}, x_s, u_s)`:
///
/// ```text
/// [ I                              ]
/// [ A  B  -I                       ]
/// [       ...  ...  ...            ]
/// [            A  B  -I            ]
/// [                  (A - I)   B   ]
/// ```
///
/// Never materialized; products are evaluated block by block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSparseMatrix {
    nx: usize,
    nu: usize,
    horizon: usize,
    a: DenseMatrix,
    b: DenseMatrix,
}

impl PredictionSparseMatrix {
    pub fn new(a: DenseMatrix, b: DenseMatrix, horizon: usize) -> Result<Self> {
        let nx = a.rows();
        check_len(nx, a.cols())?;
        check_len(nx, b.rows())?;
        if horizon < 2 {
            return Err(Error::InvalidParameter(format!("horizon must be at least 2, got {horizon}")));
        }
        Ok(Self { nx, nu: b.cols(), horizon, a, b })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    /// `(N + 2) n_x`
    pub fn rows(&self) -> usize {
        (self.horizon + 2) * self.nx
    }

    /// `(N + 1) (n_x + n_u)`
    pub fn cols(&self) -> usize {
        (self.horizon + 1) * (self.nx + self.nu)
    }

    /// `out = G x`
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let (nx, nu, n) = (self.nx, self.nu, self.horizon);
        let stage = nx + nu;
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(out.len(), self.rows());
        out[..nx].copy_from_slice(&x[..nx]);
        // rows 1..=N: A x_{i-1} + B u_{i-1} - x_i, with x_N = x_s
        for i in 1..=n {
            let prev = &x[(i - 1) * stage..i * stage];
            let row = &mut out[i * nx..(i + 1) * nx];
            self.a.matvec_into(&prev[..nx], row);
            self.b.matvec_acc(1.0, &prev[nx..], row);
            for (r, xi) in row.iter_mut().zip(&x[i * stage..i * stage + nx]) {
                *r -= xi;
            }
        }
        // last row: (A - I) x_s + B u_s
        let s = &x[n * stage..];
        let row = &mut out[(n + 1) * nx..];
        self.a.matvec_into(&s[..nx], row);
        self.b.matvec_acc(1.0, &s[nx..], row);
        for (r, xs) in row.iter_mut().zip(&s[..nx]) {
            *r -= xs;
        }
    }

    /// `out = Gᵀ y`
    pub fn apply_transpose_into(&self, y: &[f64], out: &mut [f64]) {
        let (nx, nu, n) = (self.nx, self.nu, self.horizon);
        let stage = nx + nu;
        debug_assert_eq!(y.len(), self.rows());
        debug_assert_eq!(out.len(), self.cols());
        out.iter_mut().for_each(|o| *o = 0.0);
        out[..nx].copy_from_slice(&y[..nx]);
        for i in 1..=n {
            let yi = &y[i * nx..(i + 1) * nx];
            let (head, tail) = out.split_at_mut(i * stage);
            let prev = &mut head[(i - 1) * stage..];
            self.a.matvec_t_acc(1.0, yi, &mut prev[..nx]);
            self.b.matvec_t_acc(1.0, yi, &mut prev[nx..]);
            for (o, v) in tail[..nx].iter_mut().zip(yi) {
                *o -= v;
            }
        }
        let yl = &y[(n + 1) * nx..];
        let s = &mut out[n * stage..];
        self.a.matvec_t_acc(1.0, yl, &mut s[..nx]);
        self.b.matvec_t_acc(1.0, yl, &mut s[nx..]);
        for (o, v) in s[..nx].iter_mut().zip(yl) {
            *o -= v;
        }
    }

    pub fn g_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols(), x.len())?;
        let mut out = vec![0.0; self.rows()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    pub fn gt_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows(), y.len())?;
        let mut out = vec![0.0; self.cols()];
        self.apply_transpose_into(y, &mut out);
        Ok(out)
    }

    /// Nonzero blocks of block row `i` (of height `n_x`), as
    /// `(column offset, block)` pairs in increasing column order.
    pub(crate) fn row_blocks(&self, i: usize) -> Vec<(usize, DenseMatrix)> {
        let (nx, n) = (self.nx, self.horizon);
        let stage = nx + self.nu;
        let eye = DenseMatrix::identity(nx);
        if i == 0 {
            vec![(0, eye)]
        } else if i <= n {
            vec![
                ((i - 1) * stage, self.a.clone()),
                ((i - 1) * stage + nx, self.b.clone()),
                (i * stage, eye.scaled(-1.0)),
            ]
        } else {
            vec![(n * stage, self.a.sub(&eye)), (n * stage + nx, self.b.clone())]
        }
    }

    /// Half bandwidth of `G D Gᵀ` for any block-diagonal `D` whose blocks do
    /// not straddle stages: consecutive block rows share one stage, so the
    /// product is block tridiagonal with `n_x × n_x` blocks.
    pub fn gram_half_bandwidth(&self) -> usize {
        (2 * self.nx - 1).min(self.rows() - 1)
    }
}

pub fn g_matvec(g: &PredictionSparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    g.g_matvec(x)
}

pub fn gt_matvec(g: &PredictionSparseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    g.gt_matvec(y)
}
