//! The experiment subcommands, driven by resolved settings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sntk_core::linalg::DenseMatrix;
use sntk_core::normal_forms::{self, linspace, NormalFormKind, UniformSampler};
use sntk_core::rnn::{
    init_xavier, load_checkpoint, readout_loss, sample_initial_conditions, save_checkpoint, simulate, ParamVector,
    RnnModel,
};
use sntk_core::sntk::{self, fisher_matrix, state_jacobian_of, sntk_summary_from_fisher, PowerIteration};
use sntk_core::train::{
    detect_bifurcation, format_float, train, write_metrics_csv, DataMode, LossMode, Optimizer, ProbeMode, RunStatus,
    TrainConfig, TrainOutcome,
};

use crate::config::Resolved;
use crate::error::{io_err, CliError};
use crate::teacher::{planted_teacher, two_mode_teacher};

pub const SWEEP_FILE: &str = "normal_form_sweep.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BIFURCATIONS_FILE: &str = "bifurcations.csv";
pub const LANDSCAPE_FILE: &str = "landscape.csv";
pub const PROBE_FILE: &str = "probe.csv";
pub const TEACHER_FILE: &str = "teacher.rnn";
pub const FINAL_FILE: &str = "final.rnn";

pub fn checkpoint_name(iteration: usize) -> String {
    format!("ckpt_{iteration}.rnn")
}

pub const SWEEP_KEYS: &[(&str, &str)] = &[
    ("kind", "pitchfork"),
    ("g-min", "0.5"),
    ("g-max", "1.5"),
    ("g-steps", "101"),
    ("h0-low", "-0.05"),
    ("h0-high", "0.05"),
    ("count", "64"),
    ("T", "30"),
    ("seed", "0"),
];

/// Keys shared by `train` and `two-modes`.
pub const TRAINING_KEYS: &[(&str, &str)] = &[
    ("n", "16"),
    ("batch", "32"),
    ("T", "15"),
    ("lr", "0.005"),
    ("iterations", "20000"),
    ("optimizer", "sgd"),
    ("natgrad-epsilon", "0.0001"),
    ("natgrad-power-iters", "10"),
    ("natgrad-warm-iters", "1"),
    ("metrics-every", "50"),
    ("metrics-power-iters", "100"),
    ("metrics-power-tol", "1e-6"),
    ("frobenius-probes", "32"),
    ("ic-bounds", "1"),
    ("init-gain", "1"),
    ("loss-mode", "readout"),
    ("data-mode", "fresh"),
    ("probe-mode", "batch"),
    ("checkpoint-every", ""),
    ("checkpoint-at", ""),
    ("student", ""),
    ("teacher-seed", "100"),
    ("seed", "0"),
];

pub const TRAIN_EXTRA_KEYS: &[(&str, &str)] = &[("teacher", ""), ("plant", "0.9,0.3;0.9,-0.3"), ("plant-tail", "0.05")];

pub const TWO_MODES_EXTRA_KEYS: &[(&str, &str)] = &[("teacher-eigs", "1.2 1.1"), ("rest-radius", "0.5")];

pub const LANDSCAPE_KEYS: &[(&str, &str)] = &[
    ("checkpoint", ""),
    ("direction", "top-eig"),
    ("direction-file", ""),
    ("alpha-min", "-0.5"),
    ("alpha-max", "0.5"),
    ("alpha-steps", "41"),
    ("batch", "32"),
    ("T", "15"),
    ("ic-bounds", "1"),
    ("power-iters", "100"),
    ("power-tol", "1e-6"),
    ("seed", "0"),
];

pub const PROBE_KEYS: &[(&str, &str)] = &[
    ("checkpoint", ""),
    ("teacher", ""),
    ("batch", "32"),
    ("T", "15"),
    ("ic-bounds", "1"),
    ("power-iters", "100"),
    ("power-tol", "1e-6"),
    ("seed", "0"),
];

pub fn keys(tables: &[&[(&'static str, &'static str)]]) -> Vec<(&'static str, &'static str)> {
    tables.iter().flat_map(|t| t.iter().copied()).collect()
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn normal_form_sweep(cfg: &Resolved, out: &Path) -> Result<PathBuf, CliError> {
    let kind: NormalFormKind = cfg.get("kind")?;
    let (g_min, g_max): (f64, f64) = (cfg.get("g-min")?, cfg.get("g-max")?);
    let steps: usize = cfg.get("g-steps")?;
    if steps == 0 || !(g_min <= g_max) {
        return Err(config_err(format!("g grid [{g_min}, {g_max}] with {steps} steps is empty")));
    }
    let sampler = UniformSampler {
        low: cfg.get("h0-low")?,
        high: cfg.get("h0-high")?,
        count: cfg.get("count")?,
        seed: cfg.get("seed")?,
    };
    sampler.validate().map_err(|e| config_err(e.to_string()))?;
    let horizon: usize = cfg.get("T")?;
    if horizon == 0 {
        return Err(config_err("T must be at least 1"));
    }
    let grid = linspace(g_min, g_max, steps);
    let points = normal_forms::landscape_sweep(kind, &grid, &sampler, horizon)?;

    prepare_out(out)?;
    let mut csv = String::from("g,mean_norm\n");
    for p in &points {
        csv.push_str(&format!("{},{}\n", format_float(p.g), format_float(p.mean_norm)));
    }
    let path = out.join(SWEEP_FILE);
    write_file(&path, &csv)?;
    cfg.write_to(out)?;
    Ok(path)
}

fn parse_enum<T>(cfg: &Resolved, key: &str, table: &[(&str, T)]) -> Result<T, CliError>
where
    T: Copy,
{
    let raw = cfg.raw(key);
    table.iter().find(|(name, _)| *name == raw).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
        config_err(format!("{key} = `{raw}`: expected one of {}", names.join(", ")))
    })
}

/// Builds the core training configuration from resolved settings.
pub fn train_config(cfg: &Resolved) -> Result<TrainConfig<f64>, CliError> {
    let every: Option<usize> = cfg.opt("checkpoint-every")?;
    let tc = TrainConfig {
        n: cfg.get("n")?,
        batch: cfg.get("batch")?,
        len: cfg.get("T")?,
        learning_rate: cfg.get("lr")?,
        iterations: cfg.get("iterations")?,
        optimizer: parse_enum(cfg, "optimizer", &[("sgd", Optimizer::Sgd), ("natgrad", Optimizer::RankOneNaturalGrad)])?,
        natgrad_epsilon: cfg.get("natgrad-epsilon")?,
        natgrad_power_iters: cfg.get("natgrad-power-iters")?,
        natgrad_warm_iters: cfg.get("natgrad-warm-iters")?,
        metrics_every: cfg.get("metrics-every")?,
        seed: cfg.get("seed")?,
        ic_bounds: cfg.get("ic-bounds")?,
        loss_mode: parse_enum(cfg, "loss-mode", &[("readout", LossMode::Readout), ("full-state", LossMode::FullState)])?,
        data_mode: parse_enum(cfg, "data-mode", &[("fresh", DataMode::Fresh), ("fixed", DataMode::Fixed)])?,
        probe_mode: parse_enum(cfg, "probe-mode", &[("batch", ProbeMode::TrainingBatch), ("fixed", ProbeMode::Fixed)])?,
        record_eig_moduli: 0,
        checkpoint_every: every.filter(|&k| k > 0),
        checkpoint_at: cfg.list("checkpoint-at")?,
        checkpoint_on_crossing: true,
        metrics_power: PowerIteration {
            max_iters: cfg.get("metrics-power-iters")?,
            tol: cfg.get("metrics-power-tol")?,
            seed: cfg.get("seed")?,
        },
        jacobian_budget: sntk::DEFAULT_ELEMENT_BUDGET,
        frobenius_probes: cfg.get("frobenius-probes")?,
    };
    tc.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(tc)
}

/// Loads the student checkpoint, or draws a Xavier student whose `W` is
/// scaled by `init-gain`.
pub fn build_student(cfg: &Resolved, n: usize) -> Result<RnnModel<f64>, CliError> {
    if let Some(path) = cfg.opt::<String>("student")? {
        return load_model(Path::new(&path), n);
    }
    let gain: f64 = cfg.get("init-gain")?;
    if !(gain.is_finite() && gain > 0.0) {
        return Err(config_err(format!("init-gain {gain} must be positive")));
    }
    let mut s = init_xavier::<f64>(n, cfg.get("seed")?)?;
    s.w.data.iter_mut().for_each(|w| *w *= gain);
    Ok(s)
}

fn load_model(path: &Path, n: usize) -> Result<RnnModel<f64>, CliError> {
    if !path.exists() {
        return Err(config_err(format!("checkpoint {} not found", path.display())));
    }
    let m = load_checkpoint::<f64>(path)?;
    if n != 0 && m.n() != n {
        return Err(config_err(format!("{} has N={}, expected {n}", path.display(), m.n())));
    }
    Ok(m)
}

/// Parses `x1,y1;x2,y2;...` readout-plane coordinates.
pub fn parse_plant(spec: &str) -> Result<Vec<(f64, f64)>, CliError> {
    spec.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let xy: Vec<&str> = p.split(',').map(str::trim).collect();
            match xy.as_slice() {
                [x, y] => Ok((
                    x.parse().map_err(|_| config_err(format!("plant: bad coordinate `{x}`")))?,
                    y.parse().map_err(|_| config_err(format!("plant: bad coordinate `{y}`")))?,
                )),
                _ => Err(config_err(format!("plant: expected `x,y`, got `{p}`"))),
            }
        })
        .collect()
}

fn write_training_outputs(
    out: &Path,
    outcome: &TrainOutcome<f64>,
    teacher: &RnnModel<f64>,
    extra_columns: &[&str],
) -> Result<(), CliError> {
    let path = out.join(METRICS_FILE);
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    write_metrics_csv(&outcome.metrics, extra_columns, &mut f).map_err(io_err(&path))?;
    for c in &outcome.checkpoints {
        save_checkpoint(&c.model, out.join(checkpoint_name(c.iteration)))?;
    }
    save_checkpoint(teacher, out.join(TEACHER_FILE))?;
    save_checkpoint(&outcome.model, out.join(FINAL_FILE))?;

    let mut events = String::from("iteration,checkpoint\n");
    for it in detect_bifurcation(&outcome.metrics) {
        // the crossing checkpoint is the first one taken at or after the event
        let ckpt = outcome
            .metrics
            .iter()
            .find(|r| r.iteration >= it)
            .filter(|r| outcome.checkpoints.iter().any(|c| c.iteration == r.iteration))
            .map(|r| checkpoint_name(r.iteration))
            .unwrap_or_default();
        events.push_str(&format!("{it},{ckpt}\n"));
    }
    write_file(&out.join(BIFURCATIONS_FILE), &events)
}

fn finish(outcome: &TrainOutcome<f64>) -> Result<(), CliError> {
    match &outcome.status {
        RunStatus::Completed => Ok(()),
        RunStatus::Diverged { iteration, reason, .. } => {
            Err(CliError::Divergence { iteration: *iteration, reason: reason.clone() })
        }
    }
}

pub fn train_cmd(cfg: &Resolved, out: &Path) -> Result<TrainOutcome<f64>, CliError> {
    let tc = train_config(cfg)?;
    let teacher = match cfg.opt::<String>("teacher")? {
        Some(path) => load_model(Path::new(&path), tc.n)?,
        None => {
            let points = parse_plant(cfg.raw("plant"))?;
            if points.is_empty() {
                return Err(config_err("either teacher or a non-empty plant is required"));
            }
            planted_teacher(tc.n, &points, cfg.get("plant-tail")?, cfg.get("teacher-seed")?)
                .map_err(|e| config_err(format!("plant: {e}")))?
        }
    };
    let student = build_student(cfg, tc.n)?;
    let outcome = train(&tc, &student, &teacher)?;
    prepare_out(out)?;
    write_training_outputs(out, &outcome, &teacher, &[])?;
    cfg.write_to(out)?;
    finish(&outcome)?;
    Ok(outcome)
}

pub fn two_modes_cmd(cfg: &Resolved, out: &Path) -> Result<TrainOutcome<f64>, CliError> {
    let mut tc = train_config(cfg)?;
    tc.record_eig_moduli = 2;
    let eigs: Vec<f64> = cfg.list("teacher-eigs")?;
    let [e1, e2] = eigs[..] else {
        return Err(config_err(format!("teacher-eigs needs two values, got {}", eigs.len())));
    };
    if !(e1 > e2 && e2 > 1.0) {
        return Err(config_err(format!("teacher-eigs must satisfy e1 > e2 > 1, got {e1} {e2}")));
    }
    let teacher = two_mode_teacher(tc.n, e1, e2, cfg.get("rest-radius")?, cfg.get("teacher-seed")?)
        .map_err(|e| config_err(e.to_string()))?;
    let student = build_student(cfg, tc.n)?;
    let outcome = train(&tc, &student, &teacher)?;
    prepare_out(out)?;
    write_training_outputs(out, &outcome, &teacher, &["student_eig1", "student_eig2"])?;
    cfg.write_to(out)?;
    finish(&outcome)?;
    Ok(outcome)
}

fn probe_batch(cfg: &Resolved, n: usize) -> Result<(DenseMatrix<f64>, usize), CliError> {
    let batch: usize = cfg.get("batch")?;
    let len: usize = cfg.get("T")?;
    let bound: f64 = cfg.get("ic-bounds")?;
    if batch == 0 || len < 2 || !(bound > 0.0) {
        return Err(config_err(format!("probe batch {batch}, T {len}, ic-bounds {bound} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.get("seed")?);
    Ok((sample_initial_conditions(&mut rng, batch, n, bound), len))
}

fn power(cfg: &Resolved) -> Result<PowerIteration, CliError> {
    Ok(PowerIteration { max_iters: cfg.get("power-iters")?, tol: cfg.get("power-tol")?, seed: cfg.get("seed")? })
}

fn required_checkpoint(cfg: &Resolved) -> Result<RnnModel<f64>, CliError> {
    let path: String = cfg.opt("checkpoint")?.ok_or_else(|| config_err("--checkpoint is required"))?;
    load_model(Path::new(&path), 0)
}

/// Reads a whitespace-separated parameter vector and normalises it.
pub fn read_direction(path: &Path, m: usize) -> Result<ParamVector<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let v: Vec<f64> = text
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| config_err(format!("{}: bad number `{s}`", path.display()))))
        .collect::<Result<_, _>>()?;
    if v.len() != m {
        return Err(config_err(format!("{}: {} entries, the model has {m} parameters", path.display(), v.len())));
    }
    ParamVector(v).normalized().ok_or_else(|| config_err(format!("{}: zero or non-finite direction", path.display())))
}

pub fn landscape_cmd(cfg: &Resolved, out: &Path) -> Result<PathBuf, CliError> {
    let model = required_checkpoint(cfg)?;
    let (h0, len) = probe_batch(cfg, model.n())?;
    let pcfg = power(cfg)?;
    let direction = match cfg.raw("direction") {
        "top-eig" => {
            let traj = simulate(&model, &h0, len)?;
            let jac = state_jacobian_of(&model, &traj, sntk::DEFAULT_ELEMENT_BUDGET)?;
            sntk_summary_from_fisher(&fisher_matrix(&jac), &pcfg)?.top_eigvec
        }
        "file" => {
            let path: String = cfg.opt("direction-file")?.ok_or_else(|| config_err("direction = file needs --direction-file"))?;
            read_direction(Path::new(&path), model.param_count())?
        }
        other => return Err(config_err(format!("direction = `{other}`: expected top-eig or file"))),
    };
    let (lo, hi): (f64, f64) = (cfg.get("alpha-min")?, cfg.get("alpha-max")?);
    let steps: usize = cfg.get("alpha-steps")?;
    if steps == 0 || !(lo <= hi) {
        return Err(config_err(format!("alpha grid [{lo}, {hi}] with {steps} steps is empty")));
    }
    let alphas = linspace(lo, hi, steps);
    let points = sntk::landscape_sweep(&model, &h0, len, &direction, &alphas, &pcfg, sntk::DEFAULT_ELEMENT_BUDGET)?;

    prepare_out(out)?;
    let mut csv = String::from("alpha,spec_norm,stable_rank\n");
    for p in &points {
        csv.push_str(&format!("{},{},{}\n", format_float(p.alpha), format_float(p.spec_norm), format_float(p.stable_rank)));
    }
    let path = out.join(LANDSCAPE_FILE);
    write_file(&path, &csv)?;
    cfg.write_to(out)?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub spec_norm: f64,
    pub frob_norm: f64,
    pub stable_rank: f64,
    pub dominance_ratio: f64,
    pub loss: Option<f64>,
}

impl ProbeResult {
    pub fn csv(&self) -> String {
        let mut head = String::from("spec_norm,frob_norm,stable_rank,dominance_ratio");
        let mut row = [self.spec_norm, self.frob_norm, self.stable_rank, self.dominance_ratio]
            .iter()
            .map(|&x| format_float(x))
            .collect::<Vec<_>>()
            .join(",");
        if let Some(l) = self.loss {
            head.push_str(",loss");
            row.push(',');
            row.push_str(&format_float(l));
        }
        format!("{head}\n{row}\n")
    }
}

/// Kernel summary and decomposition along the top Fisher eigenvector of a
/// model on a seeded batch.
pub fn probe_model(
    model: &RnnModel<f64>,
    teacher: Option<&RnnModel<f64>>,
    h0: &DenseMatrix<f64>,
    len: usize,
    pcfg: &PowerIteration,
) -> Result<ProbeResult, CliError> {
    let traj = simulate(model, h0, len)?;
    let jac = state_jacobian_of(model, &traj, sntk::DEFAULT_ELEMENT_BUDGET)?;
    let fisher = fisher_matrix(&jac);
    let s = sntk_summary_from_fisher(&fisher, pcfg)?;
    let d = sntk::decompose_with_fisher(&jac, &fisher, &s.top_eigvec, s.spec_norm)?;
    let loss = match teacher {
        Some(t) => {
            if t.n() != model.n() || t.readout != model.readout {
                return Err(config_err("teacher and checkpoint differ in N or readout"));
            }
            Some(readout_loss(&traj, &simulate(t, h0, len)?, &model.readout)?)
        }
        None => None,
    };
    Ok(ProbeResult {
        spec_norm: s.spec_norm,
        frob_norm: s.frob_norm,
        stable_rank: s.stable_rank,
        dominance_ratio: d.dominance_ratio,
        loss,
    })
}

pub fn probe_cmd(cfg: &Resolved, out: &Path) -> Result<ProbeResult, CliError> {
    let model = required_checkpoint(cfg)?;
    let teacher = match cfg.opt::<String>("teacher")? {
        Some(p) => Some(load_model(Path::new(&p), model.n())?),
        None => None,
    };
    let (h0, len) = probe_batch(cfg, model.n())?;
    let r = probe_model(&model, teacher.as_ref(), &h0, len, &power(cfg)?)?;
    prepare_out(out)?;
    let csv = r.csv();
    write_file(&out.join(PROBE_FILE), &csv)?;
    cfg.write_to(out)?;
    std::io::stdout().write_all(csv.as_bytes()).map_err(io_err(Path::new("<stdout>")))?;
    Ok(r)
}
