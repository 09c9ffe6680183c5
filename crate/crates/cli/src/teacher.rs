//! Teacher networks for the student-teacher experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sntk_core::linalg::DenseMatrix;
use sntk_core::rnn::{init_xavier, plant_fixed_points, FixedPointSpec, RnnModel};
use sntk_core::{Error, Result, Scalar};

/// Readout-plane coordinates of the default planted layout: two mirrored
/// pairs, i.e. stable points at `(±a, ±a)`.
pub const DEFAULT_PLANT: [(f64, f64); 2] = [(0.75, 0.75), (0.75, -0.75)];

/// Magnitude of the seeded off-readout components of planted points.
pub const DEFAULT_TAIL: f64 = 0.05;

/// Xavier base network with fixed points planted at the given readout-plane
/// coordinates. The remaining coordinates of each point are drawn uniformly
/// from `[-tail, tail]`; every point also plants its mirror.
pub fn planted_teacher<T: Scalar>(n: usize, readout_points: &[(f64, f64)], tail: f64, seed: u64) -> Result<RnnModel<T>> {
    let base = init_xavier::<T>(n, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let points = readout_points
        .iter()
        .map(|&(x, y)| {
            let mut p = vec![T::c(x), T::c(y)];
            p.extend((2..n).map(|_| T::c(if tail > 0.0 { rng.gen_range(-tail..=tail) } else { 0.0 })));
            p
        })
        .collect();
    plant_fixed_points(&base, &FixedPointSpec::new(points))
}

/// Teacher with two unstable real eigenvalues `e1 > e2 > 1` and the rest of
/// the spectrum inside `rest_radius`: `W = Q (diag(e1, e2) ⊕ R) Qᵀ` with `R` a
/// Xavier block rescaled to spectral radius `rest_radius` and `Q` a random
/// orthogonal basis, so neither mode is aligned with the readout units. `b = 0`.
pub fn two_mode_teacher<T: Scalar>(n: usize, e1: f64, e2: f64, rest_radius: f64, seed: u64) -> Result<RnnModel<T>> {
    if !(e1 > e2 && e2 > 1.0) {
        return Err(Error::InvalidArgument(format!("teacher eigenvalues need e1 > e2 > 1, got {e1}, {e2}")));
    }
    if n < 3 {
        return Err(Error::InvalidArgument("two-mode teacher needs N >= 3".into()));
    }
    if !(0.0..1.0).contains(&rest_radius) {
        return Err(Error::InvalidArgument(format!("contractive radius {rest_radius} must lie in [0, 1)")));
    }
    let rest = init_xavier::<f64>(n - 2, seed)?;
    let rho = sntk_core::linalg::eigen_moduli(&rest.w)[0];
    let factor = if rho > 0.0 { rest_radius / rho } else { 0.0 };
    let mut block = DenseMatrix::<f64>::zeros(n, n);
    block.set(0, 0, e1);
    block.set(1, 1, e2);
    for i in 0..n - 2 {
        for j in 0..n - 2 {
            block.set(i + 2, j + 2, rest.w.get(i, j) * factor);
        }
    }
    let q = random_orthogonal(n, seed.wrapping_add(1));
    let w = q.matmul(&block).matmul(&q.transpose());
    RnnModel::new(DenseMatrix::from_fn(n, n, |i, j| T::c(w.get(i, j))), vec![T::zero(); n], [0, 1])
}

/// Columns are Gram-Schmidt orthonormalised uniform draws.
fn random_orthogonal(n: usize, seed: u64) -> DenseMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // two passes keep the basis orthogonal to rounding
        for _ in 0..2 {
            for c in &cols {
                let d = sntk_core::linalg::dot(c, &v);
                sntk_core::linalg::axpy(-d, c, &mut v);
            }
        }
        let norm = sntk_core::linalg::norm(&v);
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    DenseMatrix::from_fn(n, n, |i, j| cols[j][i])
}
