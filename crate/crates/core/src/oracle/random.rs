//! Seedable generators of random test problems.

use nalgebra::DMatrix;
use rand::Rng;

use crate::dense::DenseMatrix;
use crate::problem::{LtiModel, MpctParams};

/// A problem together with one online query `(x_t, x_r, u_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstance {
    pub model: LtiModel,
    pub params: MpctParams,
    pub x_t: Vec<f64>,
    pub x_r: Vec<f64>,
    pub u_r: Vec<f64>,
}

/// `G` has `(N+2)·n_x` rows and `(N+1)(n_x+n_u)` columns, so full row rank
/// needs `n_x ≤ (N+1)·n_u`. Shapes failing this are always rejected by
/// `build_problem` with `RankDeficientG`.
pub fn shape_admits_full_row_rank(nx: usize, nu: usize, horizon: usize) -> bool {
    nx <= (horizon + 1) * nu
}

fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// `MᵀM + min_eig·I` with `M` uniform in `[-1, 1]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, min_eig: f64) -> DenseMatrix {
    let m = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    m.transpose().matmul(&m).add_diagonal(min_eig)
}

pub fn is_controllable(a: &DenseMatrix, b: &DenseMatrix) -> bool {
    controllability_ratio(a, b) > 1e-6
}

/// Smallest over largest singular value of `[B, AB, ..., A^{n-1}B]`.
pub fn controllability_ratio(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let (nx, nu) = (b.rows(), b.cols());
    let a = DMatrix::from_row_slice(nx, nx, a.as_slice());
    let mut block = DMatrix::from_row_slice(nx, nu, b.as_slice());
    let mut ctrb = DMatrix::zeros(nx, nx * nu);
    for k in 0..nx {
        ctrb.view_mut((0, k * nu), (nx, nu)).copy_from(&block);
        block = &a * block;
    }
    let sv = ctrb.singular_values();
    let smax = sv.max();
    if smax > 0.0 { sv.min() / smax } else { 0.0 }
}

/// `A = I + perturbation`, `B` uniform, redrawn until `(A, B)` is
/// comfortably controllable, `A` comfortably invertible, and the
/// steady-state map `[A - I, B]` well conditioned.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, nx: usize, nu: usize) -> (DenseMatrix, DenseMatrix) {
    let scale = 0.4 / (nx as f64).sqrt();
    loop {
        let a = DenseMatrix::from_fn(nx, nx, |i, j| {
            rng.random_range(-scale..scale) + if i == j { 1.0 } else { 0.0 }
        });
        let b = DenseMatrix::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0));
        let an = DMatrix::from_row_slice(nx, nx, a.as_slice());
        let mut ss = DMatrix::zeros(nx, nx + nu);
        ss.view_mut((0, 0), (nx, nx)).copy_from(&(&an - DMatrix::identity(nx, nx)));
        ss.view_mut((0, nx), (nx, nu)).copy_from(&DMatrix::from_row_slice(nx, nu, b.as_slice()));
        let ss_min = ss.singular_values().min();
        if an.determinant().abs() > 0.2 && ss_min > 0.05 && controllability_ratio(&a, &b) > 1e-3 {
            return (a, b);
        }
    }
}

/// Model with random finite bounds; no feasibility guarantee for any query.
pub fn random_problem<R: Rng + ?Sized>(rng: &mut R, nx: usize, nu: usize, horizon: usize, rho: f64) -> RandomInstance {
    let (a, b) = random_system(rng, nx, nu);
    let x_hi = uniform_vec(rng, nx, 0.5, 3.0);
    let u_hi = uniform_vec(rng, nu, 0.5, 2.0);
    let model = LtiModel::new(
        a,
        b,
        x_hi.iter().map(|h| -h).collect(),
        x_hi,
        u_hi.iter().map(|h| -h).collect(),
        u_hi,
    )
    .expect("valid random model");
    let params = MpctParams::new(
        random_spd(rng, nx, 0.2),
        random_spd(rng, nu, 0.2),
        random_spd(rng, nx, 0.5).scaled(3.0),
        random_spd(rng, nu, 0.2),
        horizon,
        rho,
    );
    let x_t = uniform_vec(rng, nx, -1.0, 1.0);
    let x_r = uniform_vec(rng, nx, -1.0, 1.0);
    let u_r = uniform_vec(rng, nu, -0.5, 0.5);
    RandomInstance { model, params, x_t, x_r, u_r }
}

/// Instance whose QP is strictly feasible by construction: an admissible
/// equilibrium is picked first and a trajectory with interior inputs is
/// run backwards from it to produce `x_t`. State bounds enclose that
/// trajectory with a random margin (some are infinite); the reference is
/// drawn so that it is sometimes unreachable.
pub fn feasible_instance<R: Rng + ?Sized>(
    rng: &mut R,
    nx: usize,
    nu: usize,
    horizon: usize,
    rho: f64,
) -> RandomInstance {
    loop {
        let (a, b) = random_system(rng, nx, nu);
        let an = DMatrix::from_row_slice(nx, nx, a.as_slice());
        let bn = DMatrix::from_row_slice(nx, nu, b.as_slice());
        let Some(a_inv) = an.clone().try_inverse() else { continue };
        let Some(i_minus_a_inv) = (DMatrix::identity(nx, nx) - &an).try_inverse() else { continue };

        let u_hi = uniform_vec(rng, nu, 0.8, 1.5);
        let u_s = nalgebra::DVector::from_vec(u_hi.iter().map(|h| rng.random_range(-0.3 * h..0.3 * h)).collect());
        let x_s = &i_minus_a_inv * &bn * &u_s;
        if x_s.amax() > 3.0 {
            continue;
        }
        let mut traj = vec![x_s.clone()];
        let mut x = x_s.clone();
        for _ in 0..horizon {
            let u = nalgebra::DVector::from_vec(u_hi.iter().map(|h| rng.random_range(-0.7 * h..0.7 * h)).collect());
            x = &a_inv * (&x - &bn * u);
            traj.push(x.clone());
        }
        // traj = [x_N = x_s, x_{N-1}, ..., x_0]
        if traj.iter().any(|x| x.amax() > 10.0) {
            continue;
        }
        let x_t: Vec<f64> = traj[horizon].iter().copied().collect();
        let mut x_lo = vec![0.0; nx];
        let mut x_hi = vec![0.0; nx];
        for j in 0..nx {
            let reach = traj[..horizon].iter().map(|x| x[j].abs()).fold(0.0f64, f64::max);
            let bound = reach * rng.random_range(1.02..1.5) + 0.05;
            if rng.random_bool(0.15) {
                x_lo[j] = f64::NEG_INFINITY;
                x_hi[j] = f64::INFINITY;
            } else {
                x_lo[j] = -bound * rng.random_range(1.0..1.3);
                x_hi[j] = bound;
            }
        }
        let model = LtiModel::new(a, b, x_lo.clone(), x_hi.clone(), u_hi.iter().map(|h| -h).collect(), u_hi.clone())
            .expect("valid random model");
        let params = MpctParams::new(
            random_spd(rng, nx, 0.2),
            random_spd(rng, nu, 0.2),
            random_spd(rng, nx, 0.5).scaled(3.0),
            random_spd(rng, nu, 0.2),
            horizon,
            rho,
        );
        let x_r = (0..nx)
            .map(|j| {
                let span = if x_hi[j].is_finite() { x_hi[j] } else { 2.0 };
                rng.random_range(-1.3 * span..1.3 * span)
            })
            .collect();
        let u_r = u_hi.iter().map(|h| rng.random_range(-1.2 * h..1.2 * h)).collect();
        return RandomInstance { model, params, x_t, x_r, u_r };
    }
}
