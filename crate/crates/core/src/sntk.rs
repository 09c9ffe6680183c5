//! Parameter-to-state Jacobians and the state-space NTK.
//!
//! For trajectories `h ∈ R^{B×T×N}` of an [`RnnModel`], `J = ∂h/∂θ` is obtained
//! by forward sensitivity propagation
//!
//! ```text
//! S_0 = 0,    S_{t+1} = W diag(1 - tanh²(h_t)) S_t + D_θ f(h_t)
//! ```
//!
//! and `sNTK = J Jᵀ`. Spectra are taken from the Fisher `F = Jᵀ J` (`m × m`),
//! which shares every nonzero eigenvalue with the sNTK. The matrix-free
//! operators [`jvp`] and [`vjp`] apply `J` and `Jᵀ` without building either.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, axpy, dot, DenseMatrix};
use crate::rnn::{param_count, simulate, ParamVector, RnnModel, TrajectoryBatch};
use crate::{Error, Result, Scalar};

/// Default cap on the number of elements of a materialised Jacobian or sNTK.
pub const DEFAULT_ELEMENT_BUDGET: usize = 100_000_000;

/// `J = ∂h/∂θ`, rows ordered `(b, t, n)` lexicographically, columns by
/// [`ParamVector`] index.
#[derive(Clone, Debug, PartialEq)]
pub struct StateJacobian<T> {
    pub batch: usize,
    pub len: usize,
    pub dim: usize,
    pub params: usize,
    pub matrix: DenseMatrix<T>,
}

impl<T: Scalar> StateJacobian<T> {
    pub fn from_matrix(batch: usize, len: usize, dim: usize, matrix: DenseMatrix<T>) -> Result<Self> {
        if matrix.rows != batch * len * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} Jacobian rows for B*T*N = {}",
                matrix.rows,
                batch * len * dim
            )));
        }
        Ok(Self { batch, len, dim, params: matrix.cols, matrix })
    }

    #[inline]
    pub fn row_index(&self, b: usize, t: usize, n: usize) -> usize {
        (b * self.len + t) * self.dim + n
    }

    /// `J v`
    pub fn apply(&self, v: &ParamVector<T>) -> Vec<T> {
        self.matrix.matvec(&v.0)
    }
}

fn check_traj<T: Scalar>(model: &RnnModel<T>, traj: &TrajectoryBatch<T>) -> Result<()> {
    if traj.dim != model.n() {
        return Err(Error::DimensionMismatch(format!("trajectory dim {} vs N={}", traj.dim, model.n())));
    }
    if let Some(step) = traj.overflow {
        return Err(Error::Overflow { step });
    }
    Ok(())
}

/// Simulates from `h0` and returns the exact trajectory Jacobian.
pub fn state_jacobian<T: Scalar>(
    model: &RnnModel<T>,
    h0: &DenseMatrix<T>,
    len: usize,
    budget: usize,
) -> Result<StateJacobian<T>> {
    let traj = simulate(model, h0, len)?;
    state_jacobian_of(model, &traj, budget)
}

/// Exact Jacobian of an already simulated trajectory batch.
pub fn state_jacobian_of<T: Scalar>(
    model: &RnnModel<T>,
    traj: &TrajectoryBatch<T>,
    budget: usize,
) -> Result<StateJacobian<T>> {
    check_traj(model, traj)?;
    let n = model.n();
    let m = param_count(n);
    let rows = traj.batch * traj.len * n;
    let requested = rows.saturating_mul(m);
    if requested > budget {
        return Err(Error::BudgetExceeded { requested, budget });
    }
    let mut jac = DenseMatrix::zeros(rows, m);
    let mut act = vec![T::zero(); n];
    let mut deriv = vec![T::zero(); n];
    for b in 0..traj.batch {
        for t in 0..traj.len.saturating_sub(1) {
            let h = traj.state(b, t);
            for i in 0..n {
                act[i] = h[i].tanh();
                deriv[i] = T::one() - act[i] * act[i];
            }
            let cur = (b * traj.len + t) * n * m;
            let next = cur + n * m;
            let (head, tail) = jac.data.split_at_mut(next);
            let s_cur = &head[cur..];
            let s_next = &mut tail[..n * m];
            if t > 0 {
                for i in 0..n {
                    let out = &mut s_next[i * m..(i + 1) * m];
                    for k in 0..n {
                        let c = model.w.get(i, k) * deriv[k];
                        if c != T::zero() {
                            axpy(c, &s_cur[k * m..(k + 1) * m], out);
                        }
                    }
                }
            }
            // D_θ f: ∂(W a + b)_i / ∂W_ij = a_j, ∂/∂b_i = 1
            for i in 0..n {
                let out = &mut s_next[i * m..(i + 1) * m];
                for j in 0..n {
                    out[i * n + j] = out[i * n + j] + act[j];
                }
                out[n * n + i] = out[n * n + i] + T::one();
            }
        }
    }
    StateJacobian::from_matrix(traj.batch, traj.len, n, jac)
}

/// `J v` without materialising `J`, returned in trajectory layout `(b, t, n)`.
pub fn jvp<T: Scalar>(model: &RnnModel<T>, traj: &TrajectoryBatch<T>, v: &ParamVector<T>) -> Result<Vec<T>> {
    check_traj(model, traj)?;
    let n = model.n();
    if v.len() != param_count(n) {
        return Err(Error::DimensionMismatch(format!("direction has {} entries, m={}", v.len(), param_count(n))));
    }
    let (vw, vb) = v.0.split_at(n * n);
    let mut out = vec![T::zero(); traj.element_count()];
    let mut act = vec![T::zero(); n];
    let mut scaled = vec![T::zero(); n];
    for b in 0..traj.batch {
        for t in 0..traj.len.saturating_sub(1) {
            let h = traj.state(b, t);
            let cur = traj.index(b, t, 0);
            for i in 0..n {
                act[i] = h[i].tanh();
                scaled[i] = out[cur + i] * (T::one() - act[i] * act[i]);
            }
            let nxt = cur + n;
            for i in 0..n {
                out[nxt + i] = dot(model.w.row(i), &scaled) + dot(&vw[i * n..(i + 1) * n], &act) + vb[i];
            }
        }
    }
    Ok(out)
}

/// `Jᵀ u` by reverse accumulation, `u` in trajectory layout.
pub fn vjp<T: Scalar>(model: &RnnModel<T>, traj: &TrajectoryBatch<T>, u: &[T]) -> Result<ParamVector<T>> {
    check_traj(model, traj)?;
    let n = model.n();
    if u.len() != traj.element_count() {
        return Err(Error::DimensionMismatch(format!("cotangent has {} entries, B*T*N={}", u.len(), traj.element_count())));
    }
    let mut grad = vec![T::zero(); param_count(n)];
    let (gw, gb) = grad.split_at_mut(n * n);
    let mut lambda = vec![T::zero(); n];
    let mut pulled = vec![T::zero(); n];
    let mut act = vec![T::zero(); n];
    for b in 0..traj.batch {
        if traj.len < 2 {
            continue;
        }
        let last = traj.index(b, traj.len - 1, 0);
        lambda.copy_from_slice(&u[last..last + n]);
        for t in (0..traj.len - 1).rev() {
            // λ holds the adjoint of h_{t+1}; h_{t+1} = W tanh(h_t) + b
            let h = traj.state(b, t);
            for (a, &x) in act.iter_mut().zip(h) {
                *a = x.tanh();
            }
            pulled.iter_mut().for_each(|x| *x = T::zero());
            for i in 0..n {
                let li = lambda[i];
                if li != T::zero() {
                    axpy(li, &act, &mut gw[i * n..(i + 1) * n]);
                    gb[i] = gb[i] + li;
                    axpy(li, model.w.row(i), &mut pulled);
                }
            }
            let cur = traj.index(b, t, 0);
            for i in 0..n {
                lambda[i] = u[cur + i] + pulled[i] * (T::one() - act[i] * act[i]);
            }
        }
    }
    Ok(ParamVector(grad))
}

/// `F = Jᵀ J`.
pub fn fisher_matrix<T: Scalar>(jac: &StateJacobian<T>) -> DenseMatrix<T> {
    let m = jac.params;
    let mut f = DenseMatrix::zeros(m, m);
    for r in 0..jac.matrix.rows {
        let row = jac.matrix.row(r);
        for i in 0..m {
            let ri = row[i];
            if ri != T::zero() {
                axpy(ri, &row[i..], &mut f.data[i * m + i..(i + 1) * m]);
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            f.data[i * m + j] = f.data[j * m + i];
        }
    }
    f
}

/// Symmetric positive semidefinite operator on parameter space.
pub trait SymmetricOperator<T> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], out: &mut [T]) -> Result<()>;
}

impl<T: Scalar> SymmetricOperator<T> for DenseMatrix<T> {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[T], out: &mut [T]) -> Result<()> {
        self.matvec_into(x, out);
        Ok(())
    }
}

/// Matrix-free `c · Jᵀ M J` for a fixed trajectory, where `M` optionally
/// restricts the state rows to a subset of dimensions (`t ≥ 1`).
pub struct FisherOperator<'a, T> {
    pub model: &'a RnnModel<T>,
    pub traj: &'a TrajectoryBatch<T>,
    pub scale: T,
    pub dims: Option<&'a [usize]>,
}

impl<'a, T: Scalar> FisherOperator<'a, T> {
    pub fn new(model: &'a RnnModel<T>, traj: &'a TrajectoryBatch<T>) -> Self {
        Self { model, traj, scale: T::one(), dims: None }
    }
}

impl<T: Scalar> SymmetricOperator<T> for FisherOperator<'_, T> {
    fn dim(&self) -> usize {
        self.model.param_count()
    }

    fn apply(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let mut jv = jvp(self.model, self.traj, &ParamVector(x.to_vec()))?;
        if let Some(dims) = self.dims {
            let mut keep = vec![false; self.traj.dim];
            for &d in dims {
                keep[d] = true;
            }
            for (i, v) in jv.iter_mut().enumerate() {
                if !keep[i % self.traj.dim] {
                    *v = T::zero();
                }
            }
        }
        let g = vjp(self.model, self.traj, &jv)?;
        for (o, &v) in out.iter_mut().zip(&g.0) {
            *o = self.scale * v;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigPair<T> {
    pub value: T,
    /// Unit norm, first significant component positive.
    pub vector: ParamVector<T>,
    pub iterations: usize,
    /// `‖A v - λ v‖` at the returned pair.
    pub residual: T,
    pub converged: bool,
    /// The operator annihilated the iterate; `vector` is arbitrary.
    pub degenerate: bool,
}

/// Seeded random unit vector.
pub fn random_unit<T: Scalar>(dim: usize, seed: u64) -> ParamVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v = ParamVector((0..dim).map(|_| T::c(rng.gen_range(-1.0..1.0))).collect());
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

/// Flips `v` so its first significant component is positive.
pub fn canonical_sign<T: Scalar>(v: &mut [T]) {
    let max = v.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let cutoff = max * T::c(1e-8);
    if let Some(&first) = v.iter().find(|x| x.abs() > cutoff) {
        if first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Power iteration from a seeded random start.
pub fn top_eigpair<T: Scalar, Op: SymmetricOperator<T> + ?Sized>(op: &Op, cfg: &PowerIteration) -> Result<EigPair<T>> {
    let start = random_unit(op.dim(), cfg.seed);
    top_eigpair_from(op, start, cfg)
}

/// Power iteration from a given start vector.
///
/// Stops once `‖A v - λ v‖ ≤ tol · λ`, with `λ = vᵀ A v`. When the budget runs
/// out first, the result carries the last iterate `A v / ‖A v‖` together with
/// the Rayleigh quotient and residual of the vector before it.
pub fn top_eigpair_from<T: Scalar, Op: SymmetricOperator<T> + ?Sized>(
    op: &Op,
    start: ParamVector<T>,
    cfg: &PowerIteration,
) -> Result<EigPair<T>> {
    let dim = op.dim();
    if start.len() != dim {
        return Err(Error::DimensionMismatch(format!("start vector {} vs operator {dim}", start.len())));
    }
    let mut v = start
        .normalized()
        .ok_or_else(|| Error::InvalidArgument("zero start vector".into()))?;
    let mut w = vec![T::zero(); dim];
    let tol = T::c(cfg.tol);
    let mut last = (T::zero(), T::infinity());
    for it in 1..=cfg.max_iters.max(1) {
        op.apply(&v.0, &mut w)?;
        let wn = linalg::norm(&w);
        if !wn.is_finite() {
            return Err(Error::NonFinite("operator application".into()));
        }
        if wn == T::zero() {
            canonical_sign(&mut v.0);
            return Ok(EigPair {
                value: T::zero(),
                vector: v,
                iterations: it,
                residual: T::zero(),
                converged: true,
                degenerate: true,
            });
        }
        let lambda = dot(&v.0, &w);
        let residual = w
            .iter()
            .zip(&v.0)
            .map(|(&a, &b)| (a - lambda * b) * (a - lambda * b))
            .sum::<T>()
            .sqrt();
        last = (lambda, residual);
        if residual <= tol * lambda.abs() {
            canonical_sign(&mut v.0);
            return Ok(EigPair { value: lambda, vector: v, iterations: it, residual, converged: true, degenerate: false });
        }
        v = ParamVector(w.iter().map(|&x| x / wn).collect());
    }
    // budget exhausted: return the advanced iterate with the last Rayleigh quotient
    canonical_sign(&mut v.0);
    Ok(EigPair {
        value: last.0,
        vector: v,
        iterations: cfg.max_iters.max(1),
        residual: last.1,
        converged: false,
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SntkSummary<T> {
    pub frob_norm: T,
    pub spec_norm: T,
    pub stable_rank: T,
    pub top_eigval: T,
    pub top_eigvec: ParamVector<T>,
    pub converged: bool,
    pub residual: T,
}

/// `‖K‖_F² / ‖K‖₂²`, or 0 for the zero operator.
pub fn stable_rank<T: Scalar>(frob: T, spec: T) -> T {
    if spec > T::zero() {
        (frob / spec) * (frob / spec)
    } else {
        T::zero()
    }
}

fn summary_from<T: Scalar>(frob: T, eig: EigPair<T>) -> SntkSummary<T> {
    SntkSummary {
        frob_norm: frob,
        spec_norm: eig.value,
        stable_rank: stable_rank(frob, eig.value),
        top_eigval: eig.value,
        top_eigvec: eig.vector,
        converged: eig.converged,
        residual: eig.residual,
    }
}

/// Summary of the sNTK spectrum, computed on the materialised Fisher.
pub fn sntk_summary<T: Scalar>(jac: &StateJacobian<T>, cfg: &PowerIteration) -> Result<SntkSummary<T>> {
    sntk_summary_from_fisher(&fisher_matrix(jac), cfg)
}

pub fn sntk_summary_from_fisher<T: Scalar>(fisher: &DenseMatrix<T>, cfg: &PowerIteration) -> Result<SntkSummary<T>> {
    let eig = top_eigpair(fisher, cfg)?;
    Ok(summary_from(fisher.frobenius_norm(), eig))
}

/// Matrix-free summary: the spectral norm by power iteration on `Jᵀ(J v)`,
/// the Frobenius norm exactly as `Σ_i ‖F e_i‖²` over all `m` basis vectors.
pub fn sntk_summary_matrix_free<T: Scalar>(
    model: &RnnModel<T>,
    traj: &TrajectoryBatch<T>,
    cfg: &PowerIteration,
) -> Result<SntkSummary<T>> {
    let op = FisherOperator::new(model, traj);
    let m = op.dim();
    let mut col = vec![T::zero(); m];
    let mut e = vec![T::zero(); m];
    let mut frob2 = T::zero();
    for i in 0..m {
        e[i] = T::one();
        op.apply(&e, &mut col)?;
        frob2 = frob2 + dot(&col, &col);
        e[i] = T::zero();
    }
    let eig = top_eigpair(&op, cfg)?;
    Ok(summary_from(frob2.sqrt(), eig))
}

/// Hutchinson estimate of `‖F‖_F² = E‖F z‖²` over `probes` seeded
/// Rademacher vectors `z`.
pub fn frobenius_sq_estimate<T: Scalar, Op: SymmetricOperator<T> + ?Sized>(op: &Op, probes: usize, seed: u64) -> Result<T> {
    if probes == 0 {
        return Err(Error::InvalidArgument("at least one probe is needed".into()));
    }
    let m = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![T::zero(); m];
    let mut fz = vec![T::zero(); m];
    let mut total = T::zero();
    for _ in 0..probes {
        z.iter_mut().for_each(|x| *x = if rng.gen::<bool>() { T::one() } else { -T::one() });
        op.apply(&z, &mut fz)?;
        total = total + dot(&fz, &fz);
    }
    Ok(total / T::from_count(probes))
}

/// Matrix-free summary for kernels too large to materialise: power iteration
/// for the spectral norm and a Hutchinson estimate of the Frobenius norm.
/// The stable rank is an estimate and is clamped below at 1.
pub fn sntk_summary_estimated<T: Scalar>(
    model: &RnnModel<T>,
    traj: &TrajectoryBatch<T>,
    cfg: &PowerIteration,
    probes: usize,
) -> Result<SntkSummary<T>> {
    let op = FisherOperator::new(model, traj);
    let eig = top_eigpair(&op, cfg)?;
    let frob = frobenius_sq_estimate(&op, probes, cfg.seed ^ 0x5DEECE66D)?.sqrt().max(eig.value);
    Ok(summary_from(frob, eig))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionResult<T> {
    /// Unit parameter direction spanning the bifurcation channel.
    pub direction: ParamVector<T>,
    /// `‖J u‖²`, the norm of `sNTK_g = (J u)(J u)ᵀ`.
    pub sntk_g_norm: T,
    /// `‖J (I - u uᵀ) Jᵀ‖_F`
    pub residual_frob: T,
    /// `sntk_g_norm / ‖sNTK‖₂`
    pub dominance_ratio: T,
}

fn check_unit<T: Scalar>(direction: &ParamVector<T>, m: usize) -> Result<()> {
    if direction.len() != m {
        return Err(Error::DimensionMismatch(format!("direction has {} entries, m={m}", direction.len())));
    }
    let n = direction.norm();
    if !((n - T::one()).abs() <= T::c(1e-10)) {
        return Err(Error::InvalidArgument(format!("direction norm {n} is not 1")));
    }
    Ok(())
}

/// Splits the sNTK along a unit parameter direction `u`:
/// `sNTK_g = J u uᵀ Jᵀ` and `sNTK_R = J (I - u uᵀ) Jᵀ`.
pub fn decompose<T: Scalar>(
    jac: &StateJacobian<T>,
    direction: &ParamVector<T>,
    cfg: &PowerIteration,
) -> Result<DecompositionResult<T>> {
    let fisher = fisher_matrix(jac);
    let spec = top_eigpair(&fisher, cfg)?.value;
    decompose_with_fisher(jac, &fisher, direction, spec)
}

/// As [`decompose`], reusing a Fisher matrix and spectral norm already at hand.
pub fn decompose_with_fisher<T: Scalar>(
    jac: &StateJacobian<T>,
    fisher: &DenseMatrix<T>,
    direction: &ParamVector<T>,
    spec_norm: T,
) -> Result<DecompositionResult<T>> {
    let m = jac.params;
    check_unit(direction, m)?;
    let u = &direction.0;
    let ju = jac.apply(direction);
    let g_norm = dot(&ju, &ju);
    // ‖J_R J_Rᵀ‖_F = ‖J_Rᵀ J_R‖_F with J_Rᵀ J_R = P F P, P = I - u uᵀ
    let fu = fisher.matvec(u);
    let ufu = dot(u, &fu);
    let mut r2 = T::zero();
    for i in 0..m {
        let row = fisher.row(i);
        for j in 0..m {
            let v = row[j] - u[i] * fu[j] - fu[i] * u[j] + ufu * u[i] * u[j];
            r2 = r2 + v * v;
        }
    }
    let dominance = if spec_norm > T::zero() { g_norm / spec_norm } else { T::zero() };
    Ok(DecompositionResult {
        direction: direction.clone(),
        sntk_g_norm: g_norm,
        residual_frob: r2.sqrt(),
        dominance_ratio: dominance,
    })
}

/// Materialised `(sNTK, sNTK_g, sNTK_R)`, each `BTN × BTN`.
pub fn materialize_sntk_parts<T: Scalar>(
    jac: &StateJacobian<T>,
    direction: &ParamVector<T>,
    budget: usize,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>, DenseMatrix<T>)> {
    check_unit(direction, jac.params)?;
    let rows = jac.matrix.rows;
    let requested = rows.saturating_mul(rows);
    if requested > budget {
        return Err(Error::BudgetExceeded { requested, budget });
    }
    let ju = jac.apply(direction);
    let jt = jac.matrix.transpose();
    let full = jac.matrix.matmul(&jt);
    let g = DenseMatrix::from_fn(rows, rows, |i, j| ju[i] * ju[j]);
    // J (I - u uᵀ)
    let mut jr = jac.matrix.clone();
    for i in 0..rows {
        axpy(-ju[i], &direction.0, &mut jr.data[i * jac.params..(i + 1) * jac.params]);
    }
    let r = jr.matmul(&jr.transpose());
    Ok((full, g, r))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandscapePoint<T> {
    pub alpha: T,
    pub beta: T,
    pub spec_norm: T,
    pub stable_rank: T,
    pub overflowed: bool,
}

fn landscape_point<T: Scalar>(
    model: &RnnModel<T>,
    h0: &DenseMatrix<T>,
    len: usize,
    cfg: &PowerIteration,
    budget: usize,
    alpha: T,
    beta: T,
) -> Result<LandscapePoint<T>> {
    let traj = simulate(model, h0, len)?;
    if traj.overflow.is_some() {
        return Ok(LandscapePoint { alpha, beta, spec_norm: T::nan(), stable_rank: T::nan(), overflowed: true });
    }
    let jac = state_jacobian_of(model, &traj, budget)?;
    match sntk_summary(&jac, cfg) {
        Ok(s) => Ok(LandscapePoint { alpha, beta, spec_norm: s.spec_norm, stable_rank: s.stable_rank, overflowed: false }),
        Err(Error::NonFinite(_)) => Ok(LandscapePoint { alpha, beta, spec_norm: T::nan(), stable_rank: T::nan(), overflowed: true }),
        Err(e) => Err(e),
    }
}

/// Spectral norm and stable rank of the sNTK at `θ + α u` for each `α`.
pub fn landscape_sweep<T: Scalar>(
    model: &RnnModel<T>,
    h0: &DenseMatrix<T>,
    len: usize,
    direction: &ParamVector<T>,
    alphas: &[T],
    cfg: &PowerIteration,
    budget: usize,
) -> Result<Vec<LandscapePoint<T>>> {
    check_unit(direction, model.param_count())?;
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("empty alpha grid".into()));
    }
    alphas
        .iter()
        .map(|&a| landscape_point(&model.displaced(direction, a)?, h0, len, cfg, budget, a, T::zero()))
        .collect()
}

/// Two-direction grid at `θ + α u + β v`, row-major in `(α, β)`.
#[allow(clippy::too_many_arguments)]
pub fn landscape_sweep_2d<T: Scalar>(
    model: &RnnModel<T>,
    h0: &DenseMatrix<T>,
    len: usize,
    u: &ParamVector<T>,
    v: &ParamVector<T>,
    alphas: &[T],
    betas: &[T],
    cfg: &PowerIteration,
    budget: usize,
) -> Result<Vec<LandscapePoint<T>>> {
    check_unit(u, model.param_count())?;
    check_unit(v, model.param_count())?;
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::InvalidArgument("empty landscape grid".into()));
    }
    let mut out = Vec::with_capacity(alphas.len() * betas.len());
    for &a in alphas {
        let shifted = model.displaced(u, a)?;
        for &b in betas {
            out.push(landscape_point(&shifted.displaced(v, b)?, h0, len, cfg, budget, a, b)?);
        }
    }
    Ok(out)
}
