//! One-dimensional normal-form maps `h_{t+1} = f(h_t, g)` and the rank-one
//! kernel `(D_g h)(D_g h)^T` they induce.
//!
//! Every kind is shifted so that its bifurcation sits at `g* = 1`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, Scalar};

/// Reference bifurcation point shared by all kinds.
pub const CRITICAL_G: f64 = 1.0;

/// States with a larger magnitude are treated as overflowed.
pub const OVERFLOW_BOUND: f64 = 1e100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormalFormKind {
    /// `h -> g h`
    StabilityFlip,
    /// `h -> g h - h^3`
    Pitchfork,
    /// `h -> h + (g - 1) - h^2`. Textbook form, not one of the two analysed maps.
    SaddleNode,
    /// `h -> g h - h^2`. Textbook form, not one of the two analysed maps.
    Transcritical,
}

impl NormalFormKind {
    pub const ALL: [NormalFormKind; 4] = [
        NormalFormKind::StabilityFlip,
        NormalFormKind::Pitchfork,
        NormalFormKind::SaddleNode,
        NormalFormKind::Transcritical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormalFormKind::StabilityFlip => "flip",
            NormalFormKind::Pitchfork => "pitchfork",
            NormalFormKind::SaddleNode => "saddle-node",
            NormalFormKind::Transcritical => "transcritical",
        }
    }
}

impl fmt::Display for NormalFormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormalFormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flip" | "stability-flip" | "stabilityflip" => Ok(NormalFormKind::StabilityFlip),
            "pitchfork" => Ok(NormalFormKind::Pitchfork),
            "saddle-node" | "saddlenode" | "fold" => Ok(NormalFormKind::SaddleNode),
            "transcritical" => Ok(NormalFormKind::Transcritical),
            other => Err(Error::InvalidArgument(format!("unknown normal form kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarNormalForm<T> {
    pub kind: NormalFormKind,
    pub g: T,
}

impl<T: Scalar> ScalarNormalForm<T> {
    pub fn new(kind: NormalFormKind, g: T) -> Self {
        Self { kind, g }
    }

    #[inline]
    pub fn step(&self, h: T) -> T {
        let g = self.g;
        match self.kind {
            NormalFormKind::StabilityFlip => g * h,
            NormalFormKind::Pitchfork => g * h - h * h * h,
            NormalFormKind::SaddleNode => h + (g - T::one()) - h * h,
            NormalFormKind::Transcritical => g * h - h * h,
        }
    }

    /// `∂f/∂h`
    #[inline]
    pub fn d_state(&self, h: T) -> T {
        let g = self.g;
        match self.kind {
            NormalFormKind::StabilityFlip => g,
            NormalFormKind::Pitchfork => g - T::c(3.0) * h * h,
            NormalFormKind::SaddleNode => T::one() - T::c(2.0) * h,
            NormalFormKind::Transcritical => g - T::c(2.0) * h,
        }
    }

    /// `∂f/∂g`
    #[inline]
    pub fn d_param(&self, h: T) -> T {
        match self.kind {
            NormalFormKind::SaddleNode => T::one(),
            _ => h,
        }
    }

    /// Iterates the map for `len` states starting at `h0`, propagating the
    /// sensitivity `s_{t+1} = ∂f/∂h · s_t + ∂f/∂g` with `s_0 = 0`.
    pub fn simulate(&self, h0: T, len: usize) -> Result<ScalarTrajectory<T>> {
        if len == 0 {
            return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
        }
        if !h0.is_finite() {
            return Err(Error::NonFinite(format!("initial condition {h0}")));
        }
        let bound = T::c(OVERFLOW_BOUND);
        let mut states = Vec::with_capacity(len);
        let mut sensitivities = Vec::with_capacity(len);
        let (mut h, mut s) = (h0, T::zero());
        states.push(h);
        sensitivities.push(s);
        for t in 1..len {
            // sensitivity first: both partials are evaluated at the old state
            s = self.d_state(h) * s + self.d_param(h);
            h = self.step(h);
            if !(h.abs() <= bound) || !(s.abs() <= bound) {
                return Err(Error::Overflow { step: t });
            }
            states.push(h);
            sensitivities.push(s);
        }
        Ok(ScalarTrajectory { states, sensitivities })
    }

    /// Norm of the rank-one kernel `v v^T`, where `v` stacks `D_g h_t` for
    /// `t = 1..=horizon` over every initial condition, averaged over the batch.
    ///
    /// `‖v v^T‖₂ = ‖v‖²`; the `t = 0` sensitivity is identically zero and is
    /// not part of `v`, so `v` has `batch.len() * horizon` entries.
    pub fn sntk_norm(&self, h0_batch: &[T], horizon: usize) -> Result<T> {
        if h0_batch.is_empty() {
            return Err(Error::InvalidArgument("empty initial-condition batch".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let mut total = T::zero();
        for &h0 in h0_batch {
            let traj = self.simulate(h0, horizon + 1)?;
            total = total + traj.sensitivities[1..].iter().map(|&s| s * s).sum::<T>();
        }
        if !total.is_finite() {
            return Err(Error::Overflow { step: horizon });
        }
        Ok(total / T::from_count(h0_batch.len()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarTrajectory<T> {
    /// `h_0 .. h_{len-1}`
    pub states: Vec<T>,
    /// `D_g h_t`, with `sensitivities[0] = 0`.
    pub sensitivities: Vec<T>,
}

impl<T> ScalarTrajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// `h0² · Σ_{t<horizon} (t+1)² g^{2t}`, summed term by term.
pub fn closed_form_flip_norm<T: Scalar>(g: T, h0: T, horizon: usize) -> T {
    let g2 = g * g;
    let mut power = T::one();
    let mut sum = T::zero();
    for t in 0..horizon {
        let k = T::from_count(t + 1);
        sum = sum + k * k * power;
        power = power * g2;
    }
    h0 * h0 * sum
}

/// Uniform initial-condition sampler, shared across all grid points of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformSampler {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub seed: u64,
}

impl UniformSampler {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("sampler count must be at least 1".into()));
        }
        if !(self.low.is_finite() && self.high.is_finite()) || self.low > self.high {
            return Err(Error::InvalidArgument(format!(
                "sampler bounds [{}, {}] are not an interval",
                self.low, self.high
            )));
        }
        Ok(())
    }

    pub fn draw<T: Scalar>(&self) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count)
            .map(|_| {
                let u: f64 = rng.gen();
                T::c(self.low + (self.high - self.low) * u)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint<T> {
    pub g: T,
    /// Batch-mean rank-one kernel norm; NaN when the point overflowed.
    pub mean_norm: T,
    pub overflowed: bool,
}

/// Evaluates [`ScalarNormalForm::sntk_norm`] over a grid of `g` values with one
/// fixed set of initial conditions.
pub fn landscape_sweep<T: Scalar>(
    kind: NormalFormKind,
    g_grid: &[T],
    sampler: &UniformSampler,
    horizon: usize,
) -> Result<Vec<SweepPoint<T>>> {
    if g_grid.is_empty() {
        return Err(Error::InvalidArgument("empty g grid".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    sampler.validate()?;
    let h0: Vec<T> = sampler.draw();
    let points = g_grid
        .iter()
        .map(|&g| match ScalarNormalForm::new(kind, g).sntk_norm(&h0, horizon) {
            Ok(v) => SweepPoint { g, mean_norm: v, overflowed: false },
            Err(Error::Overflow { .. }) => SweepPoint { g, mean_norm: T::nan(), overflowed: true },
            Err(e) => unreachable!("validated sweep input failed: {e}"),
        })
        .collect();
    Ok(points)
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace<T: Scalar>(lo: T, hi: T, count: usize) -> Vec<T> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / T::from_count(count - 1);
            (0..count)
                .map(|i| if i + 1 == count { hi } else { lo + step * T::from_count(i) })
                .collect()
        }
    }
}
