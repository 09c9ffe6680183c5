//! Argument parsing and dispatch for the `sntk` binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, keys};
use crate::config::{load_config, Resolved};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "sntk", version, about = "State-space NTK experiments on scalar normal forms and student-teacher RNNs")]
pub struct Cli {
    /// `key = value` settings file; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rank-one kernel norm of a scalar normal form over a grid of g
    NormalFormSweep(SweepArgs),
    /// Student-teacher training against a planted or loaded teacher
    Train(TrainArgs),
    /// Kernel norm and stable rank along a line through a checkpoint
    Landscape(LandscapeArgs),
    /// Training against a teacher with two unstable eigenvalues
    TwoModes(TwoModesArgs),
    /// One-line kernel summary of a checkpoint
    Probe(ProbeArgs),
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// flip, pitchfork, saddle-node or transcritical
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub g_min: Option<f64>,
    #[arg(long)]
    pub g_max: Option<f64>,
    #[arg(long)]
    pub g_steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub h0_low: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub h0_high: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long = "T")]
    pub horizon: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainingArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long = "T")]
    pub len: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// sgd or natgrad
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub natgrad_epsilon: Option<f64>,
    #[arg(long)]
    pub natgrad_power_iters: Option<usize>,
    #[arg(long)]
    pub natgrad_warm_iters: Option<usize>,
    #[arg(long)]
    pub metrics_every: Option<usize>,
    #[arg(long)]
    pub metrics_power_iters: Option<usize>,
    #[arg(long)]
    pub metrics_power_tol: Option<f64>,
    /// Hutchinson probes when the Jacobian is too large to materialise
    #[arg(long)]
    pub frobenius_probes: Option<usize>,
    #[arg(long)]
    pub ic_bounds: Option<f64>,
    /// Scale applied to the Xavier-drawn student W
    #[arg(long)]
    pub init_gain: Option<f64>,
    /// readout or full-state
    #[arg(long)]
    pub loss_mode: Option<String>,
    /// fresh or fixed
    #[arg(long)]
    pub data_mode: Option<String>,
    /// batch or fixed
    #[arg(long)]
    pub probe_mode: Option<String>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Comma-separated iterations
    #[arg(long)]
    pub checkpoint_at: Option<String>,
    /// Start from this checkpoint instead of a Xavier draw
    #[arg(long)]
    pub student: Option<PathBuf>,
    #[arg(long)]
    pub teacher_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Teacher checkpoint; overrides --plant
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    /// Readout-plane fixed points `x,y;x,y`, each planted with its mirror
    #[arg(long, allow_hyphen_values = true)]
    pub plant: Option<String>,
    #[arg(long)]
    pub plant_tail: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TwoModesArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, num_args = 2, value_names = ["E1", "E2"])]
    pub teacher_eigs: Option<Vec<f64>>,
    /// Spectral radius of the contractive block
    #[arg(long)]
    pub rest_radius: Option<f64>,
}

#[derive(Args, Debug)]
pub struct LandscapeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// top-eig or file
    #[arg(long)]
    pub direction: Option<String>,
    #[arg(long)]
    pub direction_file: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_max: Option<f64>,
    #[arg(long)]
    pub alpha_steps: Option<usize>,
    #[command(flatten)]
    pub batch: BatchArgs,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Adds a loss column against this teacher
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[command(flatten)]
    pub batch: BatchArgs,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long = "T")]
    pub len: Option<usize>,
    #[arg(long)]
    pub ic_bounds: Option<f64>,
    #[arg(long)]
    pub power_iters: Option<usize>,
    #[arg(long)]
    pub power_tol: Option<f64>,
}

type Flags = Vec<(&'static str, Option<String>)>;

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn p(v: &Option<PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

impl TrainingArgs {
    fn flags(&self) -> Flags {
        vec![
            ("n", s(&self.n)),
            ("batch", s(&self.batch)),
            ("T", s(&self.len)),
            ("lr", s(&self.lr)),
            ("iterations", s(&self.iterations)),
            ("optimizer", self.optimizer.clone()),
            ("natgrad-epsilon", s(&self.natgrad_epsilon)),
            ("natgrad-power-iters", s(&self.natgrad_power_iters)),
            ("natgrad-warm-iters", s(&self.natgrad_warm_iters)),
            ("metrics-every", s(&self.metrics_every)),
            ("metrics-power-iters", s(&self.metrics_power_iters)),
            ("metrics-power-tol", s(&self.metrics_power_tol)),
            ("frobenius-probes", s(&self.frobenius_probes)),
            ("ic-bounds", s(&self.ic_bounds)),
            ("init-gain", s(&self.init_gain)),
            ("loss-mode", self.loss_mode.clone()),
            ("data-mode", self.data_mode.clone()),
            ("probe-mode", self.probe_mode.clone()),
            ("checkpoint-every", s(&self.checkpoint_every)),
            ("checkpoint-at", self.checkpoint_at.clone()),
            ("student", p(&self.student)),
            ("teacher-seed", s(&self.teacher_seed)),
        ]
    }
}

impl BatchArgs {
    fn flags(&self) -> Flags {
        vec![
            ("batch", s(&self.batch)),
            ("T", s(&self.len)),
            ("ic-bounds", s(&self.ic_bounds)),
            ("power-iters", s(&self.power_iters)),
            ("power-tol", s(&self.power_tol)),
        ]
    }
}

/// What a successful run produced.
#[derive(Debug)]
pub enum Output {
    File(PathBuf),
    Training { iterations: usize, crossings: Vec<usize> },
    Probe(commands::ProbeResult),
}

fn resolve(defaults: Vec<(&str, &str)>, cli: &Cli, mut flags: Flags) -> Result<Resolved, CliError> {
    let file = cli.config.as_deref().map(load_config).transpose()?;
    flags.push(("seed", s(&cli.seed)));
    Resolved::new(&defaults, file.as_ref(), &flags)
}

pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    let out: &Path = &cli.out;
    match &cli.command {
        Command::NormalFormSweep(a) => {
            let flags = vec![
                ("kind", a.kind.clone()),
                ("g-min", s(&a.g_min)),
                ("g-max", s(&a.g_max)),
                ("g-steps", s(&a.g_steps)),
                ("h0-low", s(&a.h0_low)),
                ("h0-high", s(&a.h0_high)),
                ("count", s(&a.count)),
                ("T", s(&a.horizon)),
            ];
            let cfg = resolve(keys(&[commands::SWEEP_KEYS]), cli, flags)?;
            commands::normal_form_sweep(&cfg, out).map(Output::File)
        }
        Command::Train(a) => {
            let mut flags = a.training.flags();
            flags.extend([("teacher", p(&a.teacher)), ("plant", a.plant.clone()), ("plant-tail", s(&a.plant_tail))]);
            let cfg = resolve(keys(&[commands::TRAINING_KEYS, commands::TRAIN_EXTRA_KEYS]), cli, flags)?;
            let o = commands::train_cmd(&cfg, out)?;
            Ok(Output::Training { iterations: o.metrics.last().map_or(0, |r| r.iteration + 1), crossings: crate::train_crossings(&o) })
        }
        Command::TwoModes(a) => {
            let mut flags = a.training.flags();
            let eigs = a.teacher_eigs.as_ref().map(|e| e.iter().map(f64::to_string).collect::<Vec<_>>().join(" "));
            flags.extend([("teacher-eigs", eigs), ("rest-radius", s(&a.rest_radius))]);
            let cfg = resolve(keys(&[commands::TRAINING_KEYS, commands::TWO_MODES_EXTRA_KEYS]), cli, flags)?;
            let o = commands::two_modes_cmd(&cfg, out)?;
            Ok(Output::Training { iterations: o.metrics.last().map_or(0, |r| r.iteration + 1), crossings: crate::train_crossings(&o) })
        }
        Command::Landscape(a) => {
            let mut flags = a.batch.flags();
            flags.extend([
                ("checkpoint", p(&a.checkpoint)),
                ("direction", a.direction.clone()),
                ("direction-file", p(&a.direction_file)),
                ("alpha-min", s(&a.alpha_min)),
                ("alpha-max", s(&a.alpha_max)),
                ("alpha-steps", s(&a.alpha_steps)),
            ]);
            let cfg = resolve(keys(&[commands::LANDSCAPE_KEYS]), cli, flags)?;
            commands::landscape_cmd(&cfg, out).map(Output::File)
        }
        Command::Probe(a) => {
            let mut flags = a.batch.flags();
            flags.extend([("checkpoint", p(&a.checkpoint)), ("teacher", p(&a.teacher))]);
            let cfg = resolve(keys(&[commands::PROBE_KEYS]), cli, flags)?;
            commands::probe_cmd(&cfg, out).map(Output::Probe)
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(Output::File(path)) => {
            eprintln!("wrote {}", path.display());
            0
        }
        Ok(Output::Training { iterations, crossings }) => {
            eprintln!("trained {iterations} iterations, crossings at {crossings:?}; outputs in {}", cli.out.display());
            0
        }
        Ok(Output::Probe(_)) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Config(_)) {
                eprintln!("\nFor more information, try '--help'.");
            }
            e.exit_code()
        }
    }
}
