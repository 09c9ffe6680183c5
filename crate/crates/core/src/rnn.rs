//! Autonomous tanh RNN `h_{t+1} = W tanh(h_t) + b`.
//!
//! Both the student and the teacher of the training experiments are
//! [`RnnModel`]s. The readout is the pair of state coordinates in
//! `readout` with identity weights.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, axpy, dot, DenseMatrix};
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct RnnModel<T> {
    /// Recurrent weights, `N x N`.
    pub w: DenseMatrix<T>,
    /// Bias, length `N`.
    pub b: Vec<T>,
    pub readout: [usize; 2],
}

/// Flat parameter vector: `W` row-major followed by `b`, length `N² + N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<T>(pub Vec<T>);

impl<T: Scalar> ParamVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    /// Unit vector along coordinate `i`.
    pub fn basis(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.0[i] = T::one();
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> T {
        linalg::norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Returns a unit-norm copy, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n == T::zero() || !n.is_finite() {
            return None;
        }
        Some(Self(self.0.iter().map(|&x| x / n).collect()))
    }
}

/// Number of parameters of an `N`-unit model.
pub fn param_count(n: usize) -> usize {
    n * n + n
}

impl<T: Scalar> RnnModel<T> {
    pub fn new(w: DenseMatrix<T>, b: Vec<T>, readout: [usize; 2]) -> Result<Self> {
        let n = w.rows;
        if w.cols != n {
            return Err(Error::DimensionMismatch(format!("W is {}x{}", w.rows, w.cols)));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!("bias has {} entries for N={n}", b.len())));
        }
        if readout[0] == readout[1] || readout[0] >= n || readout[1] >= n {
            return Err(Error::InvalidArgument(format!(
                "readout indices {readout:?} must be distinct and below N={n}"
            )));
        }
        Ok(Self { w, b, readout })
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn param_count(&self) -> usize {
        param_count(self.n())
    }

    pub fn params(&self) -> ParamVector<T> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.w.data);
        p.extend_from_slice(&self.b);
        ParamVector(p)
    }

    /// Overwrites all parameters from a flat vector.
    pub fn set_params(&mut self, p: &ParamVector<T>) -> Result<()> {
        let n = self.n();
        if p.len() != param_count(n) {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for N={n} (expected {})",
                p.len(),
                param_count(n)
            )));
        }
        self.w.data.copy_from_slice(&p.0[..n * n]);
        self.b.copy_from_slice(&p.0[n * n..]);
        Ok(())
    }

    pub fn with_params(&self, p: &ParamVector<T>) -> Result<Self> {
        let mut m = self.clone();
        m.set_params(p)?;
        Ok(m)
    }

    /// `θ + alpha · direction`
    pub fn displaced(&self, direction: &ParamVector<T>, alpha: T) -> Result<Self> {
        let mut p = self.params();
        if direction.len() != p.len() {
            return Err(Error::DimensionMismatch("direction length".into()));
        }
        axpy(alpha, &direction.0, &mut p.0);
        self.with_params(&p)
    }

    /// One step of the dynamics for a single state.
    pub fn step_into(&self, h: &[T], act: &mut [T], out: &mut [T]) {
        for (a, &x) in act.iter_mut().zip(h) {
            *a = x.tanh();
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.w.row(i), act) + self.b[i];
        }
    }

    pub fn step(&self, h: &[T]) -> Vec<T> {
        let n = self.n();
        let mut act = vec![T::zero(); n];
        let mut out = vec![T::zero(); n];
        self.step_into(h, &mut act, &mut out);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.w.data.iter().chain(&self.b).all(|x| x.is_finite())
    }
}

/// Xavier-uniform initialisation of `W` and `b` on `±sqrt(6 / (N + N))`.
pub fn init_xavier<T: Scalar>(n: usize, seed: u64) -> Result<RnnModel<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("hidden size {n} < 2; the readout needs two units")));
    }
    let bound = (6.0 / (2 * n) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || T::c(rng.gen_range(-bound..=bound));
    let w = DenseMatrix::from_fn(n, n, |_, _| draw());
    let b = (0..n).map(|_| draw()).collect();
    RnnModel::new(w, b, [0, 1])
}

/// Planted fixed points. Each point `x` also plants its mirror `-x`.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointSpec<T> {
    pub points: Vec<Vec<T>>,
}

impl<T: Scalar> FixedPointSpec<T> {
    pub fn new(points: Vec<Vec<T>>) -> Self {
        Self { points }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::FixedPoints("no points".into()));
        }
        for (i, x) in self.points.iter().enumerate() {
            if x.len() != n {
                return Err(Error::FixedPoints(format!("point {i} has {} coordinates, N={n}", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::FixedPoints(format!("point {i} is not finite")));
            }
            if x.iter().all(|v| v.tanh() == T::zero()) {
                return Err(Error::FixedPoints(format!("tanh of point {i} is zero")));
            }
        }
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                let (a, b) = (&self.points[i], &self.points[j]);
                if a == b || a.iter().zip(b).all(|(&u, &v)| u == -v) {
                    return Err(Error::FixedPoints(format!("points {i} and {j} coincide up to mirroring")));
                }
            }
        }
        Ok(())
    }
}

/// Replaces the base weights so that `W tanh(x_i) = x_i` for every planted
/// point, with `b = 0`.
///
/// With `A = [tanh(x_1) .. tanh(x_k)]`, `X = [x_1 .. x_k]` and `A⁺` the
/// pseudo-inverse, `W = X A⁺ + W_base (I - A A⁺)`. For one point this is
/// `x tanh(x)^T / ‖tanh(x)‖² + W_base (I - t t^T / ‖t‖²)`.
pub fn plant_fixed_points<T: Scalar>(base: &RnnModel<T>, spec: &FixedPointSpec<T>) -> Result<RnnModel<T>> {
    let n = base.n();
    spec.validate(n)?;
    let k = spec.points.len();
    if k > n {
        return Err(Error::FixedPoints(format!("{k} points exceed N={n}")));
    }
    // A^T, k x N
    let at = DenseMatrix::from_fn(k, n, |i, j| spec.points[i][j].tanh());
    let gram = DenseMatrix::from_fn(k, k, |i, j| dot(at.row(i), at.row(j)));
    // A⁺ = (A^T A)^{-1} A^T, k x N
    let pinv = linalg::solve(&gram, &at, T::c(1e-10))
        .ok_or_else(|| Error::FixedPoints("tanh images are linearly dependent".into()))?;
    // projector onto the complement of span{tanh(x_i)}: I - A A⁺
    let mut complement = DenseMatrix::identity(n);
    for r in 0..n {
        for c in 0..n {
            let mut s = T::zero();
            for i in 0..k {
                s = s + at.get(i, r) * pinv.get(i, c);
            }
            let v = complement.get(r, c) - s;
            complement.set(r, c, v);
        }
    }
    let mut w = base.w.matmul(&complement);
    for r in 0..n {
        for c in 0..n {
            let mut s = T::zero();
            for i in 0..k {
                s = s + spec.points[i][r] * pinv.get(i, c);
            }
            let v = w.get(r, c) + s;
            w.set(r, c, v);
        }
    }
    RnnModel::new(w, vec![T::zero(); n], base.readout)
}

/// States of `B` trajectories of length `T` in an `N`-dimensional space,
/// stored `(b, t, n)`-lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch<T> {
    pub batch: usize,
    pub len: usize,
    pub dim: usize,
    pub states: Vec<T>,
    /// First time step at which a non-finite state appeared.
    pub overflow: Option<usize>,
}

impl<T: Scalar> TrajectoryBatch<T> {
    #[inline]
    pub fn state(&self, b: usize, t: usize) -> &[T] {
        let off = (b * self.len + t) * self.dim;
        &self.states[off..off + self.dim]
    }

    #[inline]
    pub fn index(&self, b: usize, t: usize, n: usize) -> usize {
        (b * self.len + t) * self.dim + n
    }

    pub fn element_count(&self) -> usize {
        self.states.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.batch == other.batch && self.len == other.len && self.dim == other.dim
    }
}

/// Draws `B x N` initial conditions i.i.d. uniform on `[-bound, bound]`.
pub fn sample_initial_conditions<T: Scalar, R: Rng>(rng: &mut R, batch: usize, n: usize, bound: f64) -> DenseMatrix<T> {
    DenseMatrix::from_fn(batch, n, |_, _| T::c(rng.gen_range(-bound..=bound)))
}

/// Unrolls the model from each row of `h0` for `len` states (`h_0 .. h_{len-1}`).
pub fn simulate<T: Scalar>(model: &RnnModel<T>, h0: &DenseMatrix<T>, len: usize) -> Result<TrajectoryBatch<T>> {
    let n = model.n();
    if h0.cols != n {
        return Err(Error::DimensionMismatch(format!("initial conditions have {} columns, N={n}", h0.cols)));
    }
    if len == 0 {
        return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
    }
    if h0.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial conditions".into()));
    }
    if !model.is_finite() {
        return Err(Error::NonFinite("model parameters".into()));
    }
    let batch = h0.rows;
    let mut states = vec![T::zero(); batch * len * n];
    let mut act = vec![T::zero(); n];
    let mut overflow = None;
    for b in 0..batch {
        let base = b * len * n;
        states[base..base + n].copy_from_slice(h0.row(b));
        for t in 1..len {
            let (prev, next) = states[base + (t - 1) * n..base + (t + 1) * n].split_at_mut(n);
            model.step_into(prev, &mut act, next);
            if overflow.is_none() && next.iter().any(|x| !x.is_finite()) {
                overflow = Some(t);
            }
        }
    }
    Ok(TrajectoryBatch { batch, len, dim: n, states, overflow })
}

fn check_loss_shapes<T: Scalar>(student: &TrajectoryBatch<T>, teacher: &TrajectoryBatch<T>, dims: &[usize]) -> Result<()> {
    if !student.same_shape(teacher) {
        return Err(Error::DimensionMismatch(format!(
            "student {}x{}x{} vs teacher {}x{}x{}",
            student.batch, student.len, student.dim, teacher.batch, teacher.len, teacher.dim
        )));
    }
    if student.len < 2 {
        return Err(Error::InvalidArgument("loss needs at least two time steps".into()));
    }
    if dims.is_empty() || dims.iter().any(|&d| d >= student.dim) {
        return Err(Error::InvalidArgument(format!("loss dimensions {dims:?} out of range")));
    }
    Ok(())
}

/// Mean squared difference over batch entries, time steps `1..T` and the
/// listed state dimensions. `t = 0` is excluded since initial conditions are shared.
pub fn readout_loss<T: Scalar>(student: &TrajectoryBatch<T>, teacher: &TrajectoryBatch<T>, dims: &[usize]) -> Result<T> {
    check_loss_shapes(student, teacher, dims)?;
    let mut sum = T::zero();
    for b in 0..student.batch {
        for t in 1..student.len {
            let (s, r) = (student.state(b, t), teacher.state(b, t));
            for &d in dims {
                let e = s[d] - r[d];
                sum = sum + e * e;
            }
        }
    }
    Ok(sum / T::from_count(student.batch * (student.len - 1) * dims.len()))
}

/// `∂loss/∂h` for every state of the student trajectory, same layout as `states`.
pub fn loss_state_gradient<T: Scalar>(
    student: &TrajectoryBatch<T>,
    teacher: &TrajectoryBatch<T>,
    dims: &[usize],
) -> Result<Vec<T>> {
    check_loss_shapes(student, teacher, dims)?;
    let scale = T::c(2.0) / T::from_count(student.batch * (student.len - 1) * dims.len());
    let mut grad = vec![T::zero(); student.element_count()];
    for b in 0..student.batch {
        for t in 1..student.len {
            for &d in dims {
                let i = student.index(b, t, d);
                grad[i] = scale * (student.states[i] - teacher.states[i]);
            }
        }
    }
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossAndGradient<T> {
    pub loss: T,
    pub gradient: ParamVector<T>,
    pub student: TrajectoryBatch<T>,
}

/// Loss against a teacher trajectory and its exact gradient with respect to
/// `(W, b)` by reverse accumulation through the unrolled dynamics.
pub fn bptt_gradient<T: Scalar>(
    student: &RnnModel<T>,
    teacher_traj: &TrajectoryBatch<T>,
    h0: &DenseMatrix<T>,
    dims: &[usize],
) -> Result<LossAndGradient<T>> {
    let traj = simulate(student, h0, teacher_traj.len)?;
    if let Some(step) = traj.overflow {
        return Err(Error::Overflow { step });
    }
    let loss = readout_loss(&traj, teacher_traj, dims)?;
    let n = student.n();
    let len = traj.len;
    let scale = T::c(2.0) / T::from_count(traj.batch * (len - 1) * dims.len());
    let mut grad = vec![T::zero(); param_count(n)];
    let (gw, gb) = grad.split_at_mut(n * n);
    let mut adj = vec![T::zero(); n];
    let mut back = vec![T::zero(); n];
    let mut act = vec![T::zero(); n];
    for b in 0..traj.batch {
        adj.iter_mut().for_each(|x| *x = T::zero());
        for t in (1..len).rev() {
            let h = traj.state(b, t);
            // adj currently holds W^T λ_{t+1}; scale by tanh' and add the direct term
            for i in 0..n {
                let a = h[i].tanh();
                back[i] = if t + 1 < len { adj[i] * (T::one() - a * a) } else { T::zero() };
            }
            let r = teacher_traj.state(b, t);
            for &d in dims {
                back[d] = back[d] + scale * (h[d] - r[d]);
            }
            // λ_t is in `back`; h_t = W tanh(h_{t-1}) + b
            for (a, &x) in act.iter_mut().zip(traj.state(b, t - 1)) {
                *a = x.tanh();
            }
            for i in 0..n {
                let li = back[i];
                if li != T::zero() {
                    axpy(li, &act, &mut gw[i * n..(i + 1) * n]);
                    gb[i] = gb[i] + li;
                }
            }
            adj.iter_mut().for_each(|x| *x = T::zero());
            for i in 0..n {
                let li = back[i];
                if li != T::zero() {
                    axpy(li, student.w.row(i), &mut adj);
                }
            }
        }
    }
    let gradient = ParamVector(grad);
    if !gradient.is_finite() {
        return Err(Error::NonFinite("BPTT gradient".into()));
    }
    Ok(LossAndGradient { loss, gradient, student: traj })
}

/// Largest eigenvalue modulus of `W`.
pub fn spectral_radius<T: Scalar>(model: &RnnModel<T>) -> T {
    T::c(linalg::eigen_moduli(&model.w)[0])
}

/// The `k` largest eigenvalue moduli of `W`, descending.
pub fn eigen_moduli<T: Scalar>(model: &RnnModel<T>, k: usize) -> Result<Vec<T>> {
    if k == 0 || k > model.n() {
        return Err(Error::InvalidArgument(format!("k={k} outside 1..={}", model.n())));
    }
    Ok(linalg::eigen_moduli(&model.w).into_iter().take(k).map(T::c).collect())
}

/// Serialises a model in the line-oriented checkpoint format:
/// a header `rnn N=<N> readout=<i>,<j>`, `N` rows of `W`, then one row of `b`.
pub fn to_checkpoint_string<T: Scalar>(model: &RnnModel<T>) -> String {
    let n = model.n();
    let mut s = String::new();
    let _ = writeln!(s, "rnn N={n} readout={},{}", model.readout[0], model.readout[1]);
    let mut row = |vals: &[T]| {
        let line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    };
    for i in 0..n {
        row(model.w.row(i));
    }
    row(&model.b);
    s
}

pub fn write_checkpoint<T: Scalar, W: Write>(model: &RnnModel<T>, mut out: W) -> io::Result<()> {
    out.write_all(to_checkpoint_string(model).as_bytes())
}

pub fn save_checkpoint<T: Scalar>(model: &RnnModel<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_checkpoint_string(model))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<RnnModel<T>> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}

pub fn parse_checkpoint<T: Scalar>(text: &str) -> Result<RnnModel<T>> {
    let bad = |line: usize, msg: &str| Error::Checkpoint { line, msg: msg.to_string() };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty checkpoint"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("rnn") {
        return Err(bad(1, "header must start with `rnn`"));
    }
    let mut n = None;
    let mut readout = None;
    for f in fields {
        if let Some(v) = f.strip_prefix("N=") {
            n = Some(v.parse::<usize>().map_err(|_| bad(1, "bad N"))?);
        } else if let Some(v) = f.strip_prefix("readout=") {
            let (i, j) = v.split_once(',').ok_or_else(|| bad(1, "readout must be `i,j`"))?;
            let i = i.parse::<usize>().map_err(|_| bad(1, "bad readout index"))?;
            let j = j.parse::<usize>().map_err(|_| bad(1, "bad readout index"))?;
            readout = Some([i, j]);
        } else {
            return Err(bad(1, &format!("unknown header field `{f}`")));
        }
    }
    let n = n.ok_or_else(|| bad(1, "missing N"))?;
    let readout = readout.ok_or_else(|| bad(1, "missing readout"))?;
    let mut parse_row = |what: &str| -> Result<Vec<T>> {
        let (idx, line) = lines.next().ok_or_else(|| bad(0, &format!("missing {what}")))?;
        let vals = line
            .split_whitespace()
            .map(|tok| tok.parse::<T>().map_err(|_| bad(idx + 1, &format!("bad number `{tok}`"))))
            .collect::<Result<Vec<T>>>()?;
        if vals.len() != n {
            return Err(bad(idx + 1, &format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    };
    let mut w = Vec::with_capacity(n * n);
    for _ in 0..n {
        w.extend(parse_row("weight row")?);
    }
    let b = parse_row("bias row")?;
    if let Some((idx, _)) = lines.next() {
        return Err(bad(idx + 1, "trailing content"));
    }
    RnnModel::new(DenseMatrix::from_vec(n, n, w)?, b, readout)
}
