//! Student-teacher training with SGD or a rank-one natural-gradient corrector.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{axpy, DenseMatrix};
use crate::rnn::{self, bptt_gradient, sample_initial_conditions, simulate, ParamVector, RnnModel};
use crate::sntk::{self, EigPair, FisherOperator, PowerIteration};
use crate::{Error, Result, Scalar};

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    RankOneNaturalGrad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    /// Squared error on the two readout coordinates.
    Readout,
    /// Squared error on every state coordinate.
    FullState,
}

/// Where the initial conditions of each iteration come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataMode {
    /// A new batch from the seeded stream every iteration.
    Fresh,
    /// One batch drawn at the start and reused.
    Fixed,
}

/// Which batch the kernel metrics are evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeMode {
    TrainingBatch,
    /// A separate batch drawn once from its own stream.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub n: usize,
    pub batch: usize,
    /// Unrolled trajectory length (states `h_0 .. h_{T-1}`).
    pub len: usize,
    pub learning_rate: T,
    pub iterations: usize,
    pub optimizer: Optimizer,
    /// Absolute damping added to the top Fisher eigenvalue.
    pub natgrad_epsilon: T,
    /// Power iterations for the first (cold) estimate of the top Fisher mode.
    pub natgrad_power_iters: usize,
    /// Power iterations per step afterwards, warm-started from the previous mode.
    pub natgrad_warm_iters: usize,
    pub metrics_every: usize,
    pub seed: u64,
    /// Initial conditions are uniform on `[-ic_bounds, ic_bounds]` per coordinate.
    pub ic_bounds: f64,
    pub loss_mode: LossMode,
    pub data_mode: DataMode,
    pub probe_mode: ProbeMode,
    /// Number of leading eigenvalue moduli of `W` recorded with each metrics row.
    pub record_eig_moduli: usize,
    pub checkpoint_every: Option<usize>,
    pub checkpoint_at: Vec<usize>,
    pub checkpoint_on_crossing: bool,
    pub metrics_power: PowerIteration,
    /// Jacobians with more elements than this are not materialised; the
    /// metrics then fall back to matrix-free estimates.
    pub jacobian_budget: usize,
    /// Hutchinson probes for the Frobenius norm in the matrix-free fallback.
    pub frobenius_probes: usize,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            n: 64,
            batch: 256,
            len: 25,
            learning_rate: T::c(5e-3),
            iterations: 35_000,
            optimizer: Optimizer::Sgd,
            natgrad_epsilon: T::c(1e-4),
            natgrad_power_iters: 10,
            natgrad_warm_iters: 1,
            metrics_every: 50,
            seed: 0,
            ic_bounds: 1.0,
            loss_mode: LossMode::Readout,
            data_mode: DataMode::Fresh,
            probe_mode: ProbeMode::TrainingBatch,
            record_eig_moduli: 0,
            checkpoint_every: None,
            checkpoint_at: Vec::new(),
            checkpoint_on_crossing: true,
            metrics_power: PowerIteration::default(),
            jacobian_budget: sntk::DEFAULT_ELEMENT_BUDGET,
            frobenius_probes: 32,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    /// Reduced task that trains in minutes on one core.
    pub fn desk_scale() -> Self {
        Self { n: 16, batch: 32, len: 15, iterations: 20_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("N", self.n),
            ("batch", self.batch),
            ("metrics_every", self.metrics_every),
            ("natgrad_power_iters", self.natgrad_power_iters),
            ("natgrad_warm_iters", self.natgrad_warm_iters),
            ("frobenius_probes", self.frobenius_probes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument("N must be at least 2".into()));
        }
        if self.len < 2 {
            return Err(Error::InvalidArgument("T must be at least 2".into()));
        }
        if !(self.learning_rate >= T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.natgrad_epsilon >= T::zero()) {
            return Err(Error::InvalidArgument(format!("natgrad epsilon {}", self.natgrad_epsilon)));
        }
        if !(self.ic_bounds > 0.0) || !self.ic_bounds.is_finite() {
            return Err(Error::InvalidArgument(format!("ic bounds {}", self.ic_bounds)));
        }
        if self.record_eig_moduli > self.n {
            return Err(Error::InvalidArgument("more eigenvalue moduli requested than N".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::InvalidArgument("checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    pub fn loss_dims(&self, readout: [usize; 2]) -> Vec<usize> {
        match self.loss_mode {
            LossMode::Readout => readout.to_vec(),
            LossMode::FullState => (0..self.n).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord<T> {
    pub iteration: usize,
    pub loss: T,
    pub stable_rank: T,
    pub spec_norm: T,
    pub spectral_radius: T,
    /// Norm of the parameter update applied at this iteration.
    pub step_norm: T,
    /// Top eigenvalue of the optimiser's Fisher; 0 under SGD.
    pub optimizer_mode_eigval: T,
    /// Leading eigenvalue moduli of `W` (empty unless requested).
    pub eig_moduli: Vec<T>,
    /// The natural-gradient step fell back to SGD on a degenerate Fisher.
    pub natgrad_fallback: bool,
}

/// `θ ← θ - η g`.
pub fn sgd_step<T: Scalar>(model: &RnnModel<T>, gradient: &ParamVector<T>, lr: T) -> Result<RnnModel<T>> {
    if !gradient.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let mut p = model.params();
    if p.len() != gradient.len() {
        return Err(Error::DimensionMismatch("gradient length".into()));
    }
    axpy(-lr, &gradient.0, &mut p.0);
    model.with_params(&p)
}

/// Preconditioned direction `g + (1/(λ+ε) - 1) (vᵀg) v`: identity off the
/// mode `v`, curvature-rescaled along it.
pub fn natgrad_direction<T: Scalar>(gradient: &ParamVector<T>, mode: &ParamVector<T>, eigval: T, epsilon: T) -> ParamVector<T> {
    let coeff = (T::one() / (eigval + epsilon) - T::one()) * mode.dot(gradient);
    let mut d = gradient.clone();
    axpy(coeff, &mode.0, &mut d.0);
    d
}

#[derive(Clone, Debug, PartialEq)]
pub struct NatGradStep<T> {
    pub model: RnnModel<T>,
    /// Top Fisher mode used for the correction.
    pub mode: EigPair<T>,
    pub step: ParamVector<T>,
    /// The Fisher was degenerate and a plain SGD step was taken.
    pub fallback: bool,
}

/// One rank-one natural-gradient step. The top mode of `op` is found by power
/// iteration, warm-started from `warm` when given.
pub fn natgrad_step<T: Scalar, Op: sntk::SymmetricOperator<T> + ?Sized>(
    model: &RnnModel<T>,
    gradient: &ParamVector<T>,
    lr: T,
    op: &Op,
    epsilon: T,
    power: &PowerIteration,
    warm: Option<&ParamVector<T>>,
) -> Result<NatGradStep<T>> {
    if !gradient.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let mode = match warm.and_then(|w| w.normalized()) {
        Some(start) => sntk::top_eigpair_from(op, start, power)?,
        None => sntk::top_eigpair(op, power)?,
    };
    let fallback = mode.degenerate || !(mode.value > T::zero());
    let direction = if fallback {
        gradient.clone()
    } else {
        natgrad_direction(gradient, &mode.vector, mode.value, epsilon)
    };
    let step = ParamVector(direction.0.iter().map(|&x| -lr * x).collect());
    let mut p = model.params();
    axpy(T::one(), &step.0, &mut p.0);
    Ok(NatGradStep { model: model.with_params(&p)?, mode, step, fallback })
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus<T> {
    Completed,
    /// Halted at `iteration`; the returned model is the last finite one.
    Diverged { iteration: usize, loss: T, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub iteration: usize,
    pub model: RnnModel<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<T> {
    pub model: RnnModel<T>,
    pub metrics: Vec<MetricsRecord<T>>,
    pub checkpoints: Vec<Checkpoint<T>>,
    pub status: RunStatus<T>,
}

const PROBE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

fn kernel_metrics<T: Scalar>(
    model: &RnnModel<T>,
    traj: &rnn::TrajectoryBatch<T>,
    cfg: &TrainConfig<T>,
) -> Result<(T, T)> {
    let s = match sntk::state_jacobian_of(model, traj, cfg.jacobian_budget) {
        Ok(jac) => sntk::sntk_summary(&jac, &cfg.metrics_power)?,
        Err(Error::BudgetExceeded { .. }) => {
            sntk::sntk_summary_estimated(model, traj, &cfg.metrics_power, cfg.frobenius_probes)?
        }
        Err(e) => return Err(e),
    };
    Ok((s.stable_rank, s.spec_norm))
}

/// Trains `student` to reproduce the trajectories of `teacher`.
///
/// Metrics rows are taken every `metrics_every` iterations and at the last
/// iteration, on the parameters before that iteration's update. A
/// checkpoint is kept whenever the spectral radius of `W` crosses 1 from
/// below between two consecutive rows (when enabled), plus at the
/// configured iterations.
pub fn train<T: Scalar>(config: &TrainConfig<T>, student: &RnnModel<T>, teacher: &RnnModel<T>) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if student.n() != config.n || teacher.n() != config.n {
        return Err(Error::DimensionMismatch(format!(
            "student N={}, teacher N={}, config N={}",
            student.n(),
            teacher.n(),
            config.n
        )));
    }
    if student.readout != teacher.readout {
        return Err(Error::InvalidArgument("student and teacher readouts differ".into()));
    }
    let dims = config.loss_dims(student.readout);
    let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fixed_h0: Option<DenseMatrix<T>> = match config.data_mode {
        DataMode::Fixed => Some(sample_initial_conditions(&mut data_rng, config.batch, config.n, config.ic_bounds)),
        DataMode::Fresh => None,
    };
    let probe_h0: Option<DenseMatrix<T>> = match config.probe_mode {
        ProbeMode::Fixed => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ PROBE_STREAM);
            Some(sample_initial_conditions(&mut rng, config.batch, config.n, config.ic_bounds))
        }
        ProbeMode::TrainingBatch => None,
    };
    // normalisation of the optimiser Fisher to the loss: mean over its terms
    let fisher_scale = T::one() / T::from_count(config.batch * (config.len - 1) * dims.len());

    let mut model = student.clone();
    let mut metrics: Vec<MetricsRecord<T>> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut mode: Option<ParamVector<T>> = None;
    let mut status = RunStatus::Completed;

    for it in 0..config.iterations {
        let h0 = match &fixed_h0 {
            Some(h) => h.clone(),
            None => sample_initial_conditions(&mut data_rng, config.batch, config.n, config.ic_bounds),
        };
        let teacher_traj = simulate(teacher, &h0, config.len)?;
        let lg = match bptt_gradient(&model, &teacher_traj, &h0, &dims) {
            Ok(lg) => lg,
            Err(e @ (Error::Overflow { .. } | Error::NonFinite(_))) => {
                status = RunStatus::Diverged { iteration: it, loss: T::nan(), reason: e.to_string() };
                break;
            }
            Err(e) => return Err(e),
        };
        if !lg.loss.is_finite() || lg.loss > T::c(DIVERGENCE_LOSS) {
            status = RunStatus::Diverged { iteration: it, loss: lg.loss, reason: "loss out of range".into() };
            break;
        }

        let (next, step_norm, eigval, fallback) = match config.optimizer {
            Optimizer::Sgd => {
                let next = sgd_step(&model, &lg.gradient, config.learning_rate)?;
                (next, config.learning_rate * lg.gradient.norm(), T::zero(), false)
            }
            Optimizer::RankOneNaturalGrad => {
                let op = FisherOperator { model: &model, traj: &lg.student, scale: fisher_scale, dims: Some(&dims) };
                let power = PowerIteration {
                    max_iters: if mode.is_some() { config.natgrad_warm_iters } else { config.natgrad_power_iters },
                    tol: config.metrics_power.tol,
                    seed: config.seed,
                };
                let ng = natgrad_step(&model, &lg.gradient, config.learning_rate, &op, config.natgrad_epsilon, &power, mode.as_ref())?;
                let mut v = ng.mode.vector.clone();
                // keep the tracked mode sign-continuous across iterations
                if let Some(prev) = &mode {
                    if v.dot(prev) < T::zero() {
                        v.0.iter_mut().for_each(|x| *x = -*x);
                    }
                }
                mode = if ng.fallback { None } else { Some(v) };
                (ng.model, ng.step.norm(), ng.mode.value, ng.fallback)
            }
        };
        if !next.is_finite() {
            status = RunStatus::Diverged { iteration: it, loss: lg.loss, reason: "non-finite parameters".into() };
            break;
        }

        if it % config.metrics_every == 0 || it + 1 == config.iterations {
            let (stable_rank, spec_norm) = match &probe_h0 {
                Some(p) => kernel_metrics(&model, &simulate(&model, p, config.len)?, config)?,
                None => kernel_metrics(&model, &lg.student, config)?,
            };
            let eig = crate::linalg::eigen_moduli(&model.w);
            let record = MetricsRecord {
                iteration: it,
                loss: lg.loss,
                stable_rank,
                spec_norm,
                spectral_radius: T::c(eig[0]),
                step_norm,
                optimizer_mode_eigval: eigval,
                eig_moduli: eig.iter().take(config.record_eig_moduli).map(|&x| T::c(x)).collect(),
                natgrad_fallback: fallback,
            };
            if config.checkpoint_on_crossing {
                if let Some(prev) = metrics.last() {
                    if prev.spectral_radius < T::one() && record.spectral_radius >= T::one() {
                        checkpoints.push(Checkpoint { iteration: it, model: model.clone() });
                    }
                }
            }
            metrics.push(record);
        }
        let scheduled = config.checkpoint_every.is_some_and(|k| it % k == 0) || config.checkpoint_at.contains(&it);
        if scheduled && !checkpoints.iter().any(|c: &Checkpoint<T>| c.iteration == it) {
            checkpoints.push(Checkpoint { iteration: it, model: model.clone() });
        }
        model = next;
    }
    Ok(TrainOutcome { model, metrics, checkpoints, status })
}

/// Iterations at which the spectral radius crosses 1 from below, placed by
/// linear interpolation between consecutive records and rounded up.
pub fn detect_bifurcation<T: Scalar>(metrics: &[MetricsRecord<T>]) -> Vec<usize> {
    metrics
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let (ra, rb) = (a.spectral_radius.as_f64(), b.spectral_radius.as_f64());
            if ra < 1.0 && rb >= 1.0 {
                let frac = (1.0 - ra) / (rb - ra);
                let at = a.iteration as f64 + frac * (b.iteration - a.iteration) as f64;
                Some((at.ceil() as usize).clamp(a.iteration + 1, b.iteration))
            } else {
                None
            }
        })
        .collect()
}

/// `Σ |log10 L_{k+1} - log10 L_k|` over consecutive records.
pub fn log_loss_total_variation<T: Scalar>(metrics: &[MetricsRecord<T>]) -> f64 {
    metrics
        .windows(2)
        .map(|w| (w[1].loss.as_f64().log10() - w[0].loss.as_f64().log10()).abs())
        .sum()
}

pub const METRICS_HEADER: &str = "iteration,loss,stable_rank,spec_norm,spectral_radius,step_norm,optimizer_mode_eigval";

/// 17 significant digits.
pub fn format_float<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

/// Writes the metrics CSV. `extra_columns` name the `eig_moduli` columns
/// appended after the standard ones (e.g. `student_eig1`).
pub fn write_metrics_csv<T: Scalar, W: Write>(metrics: &[MetricsRecord<T>], extra_columns: &[&str], mut out: W) -> io::Result<()> {
    let mut header = METRICS_HEADER.to_string();
    for c in extra_columns {
        header.push(',');
        header.push_str(c);
    }
    writeln!(out, "{header}")?;
    for r in metrics {
        let mut line = format!(
            "{},{},{},{},{},{},{}",
            r.iteration,
            format_float(r.loss),
            format_float(r.stable_rank),
            format_float(r.spec_norm),
            format_float(r.spectral_radius),
            format_float(r.step_norm),
            format_float(r.optimizer_mode_eigval)
        );
        for i in 0..extra_columns.len() {
            line.push(',');
            line.push_str(&r.eig_moduli.get(i).map(|&v| format_float(v)).unwrap_or_else(|| "NaN".into()));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
