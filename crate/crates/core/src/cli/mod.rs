//! Command-line front end.
//!
//! Every subcommand resolves its parameters as defaults, then the JSON file
//! given by `--config`, then explicit flags. The resolved parameters are
//! written as `<command>.config.json` next to the outputs, and passing that
//! snapshot back through `--config` reproduces the run.
//!
//! `--out` names either an output directory or, when it has an extension, the
//! primary output file (its parent directory receives the other files).
//!
//! Failures print one line `error: code=<code> message=<text>` to stderr.
//! Usage errors and invalid arguments exit with 2, everything else with 1.

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

/// Caps the worker threads of internal parallel loops.
pub const THREADS_ENV: &str = "RTK_DENOISE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rtk-denoise", version, about = "Certified deterministic reverse diffusion")]
struct Cli {
    /// JSON file with parameters of the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, or the primary output file.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a cosine noise schedule as JSON.
    Schedule(ScheduleArgs),
    /// Run one reverse trajectory.
    Sample(SampleArgs),
    /// Pointwise and uniform certificates of one denoising step.
    Certify(CertifyArgs),
    /// Train per-step one-layer fields on synthetic data.
    Train(TrainArgs),
    /// AMR and coverage between two XYZ ensembles.
    Metrics(MetricsArgs),
    /// Itemized FLOPs of one Hydra block.
    Flops(FlopsArgs),
    /// Certified DDDM chain on Gaussian data with oracle fields.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    /// Number of diffusion steps.
    #[arg(long = "T", value_name = "T")]
    steps: Option<usize>,
    /// Cosine offset.
    #[arg(long)]
    s: Option<f64>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// ddpm, ddim, dddm or pf_euler.
    #[arg(long)]
    kind: Option<String>,
    /// Schedule length T.
    #[arg(long)]
    steps: Option<usize>,
    /// Euler steps K for pf_euler.
    #[arg(long)]
    euler_steps: Option<usize>,
    /// Comma-separated reverse-step indices for ddim, e.g. "0,16,32,64".
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// JSON list of fields, one per reverse step.
    #[arg(long, value_name = "PATH")]
    fields: Option<PathBuf>,
    /// Gaussian data mean, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mean: Option<Vec<f64>>,
    /// Gaussian data variance.
    #[arg(long)]
    var: Option<f64>,
    /// Start state, comma separated; drawn from the prior when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x_init: Option<Vec<f64>>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    solver_tol: Option<f64>,
    /// Attach a pointwise certificate to every DDDM step.
    #[arg(long)]
    certify: bool,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    /// Schedule length T.
    #[arg(long = "T", value_name = "T")]
    steps: Option<usize>,
    /// Forward index of the step.
    #[arg(long)]
    t: Option<usize>,
    /// JSON file with one field; the Gaussian oracle is used when absent.
    #[arg(long, value_name = "PATH")]
    field: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mean: Option<Vec<f64>>,
    #[arg(long)]
    var: Option<f64>,
    /// Evaluation point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    z: Option<Vec<f64>>,
    /// Anchor state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Half width of the box around z for the uniform certificate.
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long)]
    n_probe: Option<usize>,
    /// Curvature term: sound or literal.
    #[arg(long)]
    rule: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// point, gauss, mixture or moons.
    #[arg(long)]
    data: Option<String>,
    /// Schedule length T.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// ph or gmse.
    #[arg(long)]
    loss: Option<String>,
    /// Pseudo-Huber scale.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    /// tanh, softplus or relu.
    #[arg(long)]
    activation: Option<String>,
    /// Peak learning rate.
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Generated ensemble (XYZ).
    #[arg(long, value_name = "PATH")]
    gen: Option<PathBuf>,
    /// Reference ensemble (XYZ).
    #[arg(long = "ref", value_name = "PATH")]
    reference: Option<PathBuf>,
    /// Coverage threshold in Å.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Debug, Args)]
struct FlopsArgs {
    #[arg(long)]
    seq_len: Option<u64>,
    #[arg(long)]
    d_model: Option<u64>,
    #[arg(long)]
    expand: Option<u64>,
    #[arg(long)]
    d_state: Option<u64>,
    #[arg(long)]
    num_heads: Option<u64>,
    #[arg(long)]
    window_size: Option<u64>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    /// Schedule length T.
    #[arg(long = "T", value_name = "T")]
    steps: Option<usize>,
    /// Prior draws for the endpoint statistics.
    #[arg(long)]
    samples: Option<usize>,
}

/// Where outputs go.
#[derive(Debug, Clone)]
pub(crate) struct OutTarget {
    pub dir: PathBuf,
    /// Primary file named on the command line, if any.
    pub file: Option<PathBuf>,
}

impl OutTarget {
    fn new(out: Option<PathBuf>) -> Option<Self> {
        out.map(|p| {
            if p.extension().is_some() {
                let dir = p
                    .parent()
                    .filter(|d| !d.as_os_str().is_empty())
                    .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
                OutTarget { dir, file: Some(p) }
            } else {
                OutTarget { dir: p, file: None }
            }
        })
    }

    /// The primary file, or `default_name` inside the directory.
    pub fn primary(&self, default_name: &str) -> PathBuf {
        self.file.clone().unwrap_or_else(|| self.dir.join(default_name))
    }

    /// A secondary file named after the primary file's stem.
    pub fn sibling(&self, default_name: &str, suffix: &str) -> PathBuf {
        let primary = self.primary(default_name);
        let stem = primary.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
        self.dir.join(format!("{stem}{suffix}"))
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

pub(crate) struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<OutTarget>,
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn report(code: &str, message: &str) {
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error: code={code} message={message}");
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            report("usage", first);
            eprint!("{}", e.render());
            return 2;
        }
    };
    let result = thread_cap().and_then(|cap| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cap {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        let globals = Globals {
            config: cli.config,
            seed: cli.seed,
            out: OutTarget::new(cli.out),
        };
        pool.install(|| dispatch(cli.command, &globals))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            report(e.code(), &e.to_string());
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, g: &Globals) -> Result<()> {
    match command {
        Command::Schedule(a) => commands::schedule(a, g),
        Command::Sample(a) => commands::sample(a, g),
        Command::Certify(a) => commands::certify(a, g),
        Command::Train(a) => commands::train(a, g),
        Command::Metrics(a) => commands::metrics(a, g),
        Command::Flops(a) => commands::flops(a, g),
        Command::Demo(a) => commands::demo(a, g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_target_forms() {
        let t = OutTarget::new(Some("runs/traj.csv".into())).unwrap();
        assert_eq!(t.dir, PathBuf::from("runs"));
        assert_eq!(t.sibling("x.csv", ".diagnostics.json"), PathBuf::from("runs/traj.diagnostics.json"));
        let t = OutTarget::new(Some("sched.json".into())).unwrap();
        assert_eq!(t.dir, PathBuf::from("."));
        let t = OutTarget::new(Some("runs".into())).unwrap();
        assert_eq!(t.primary("traj.csv"), PathBuf::from("runs/traj.csv"));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["rtk-denoise", "schedule", "--bogus"]), 2);
        assert_eq!(run(["rtk-denoise"]), 2);
        assert_eq!(run(["rtk-denoise", "--help"]), 0);
    }
}
