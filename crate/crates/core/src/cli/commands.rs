use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    CertifyArgs, DemoArgs, FlopsArgs, Globals, MetricsArgs, OutTarget, SampleArgs, ScheduleArgs,
    TrainArgs,
};
use crate::demo::{run_demo, DemoConfig};
use crate::energy::{certify_pointwise_with, certify_uniform, CurvatureRule, EnergyReport, StepSizeCert};
use crate::error::{check_dim, invalid, Error, Result};
use crate::field::{Activation, BoxRegion, DenoisingField, FieldSpec, GaussianData};
use crate::graph::hydra_flops;
use crate::metrics::{evaluate, Ensemble, DEFAULT_DELTA};
use crate::rng::{seeded, standard_normal, stream};
use crate::samplers::{
    dddm_sample, ddim_sample, ddpm_sample, full_grid, pf_euler, AnchorMode, CleanPredictor,
    DddmOptions, FieldPredictor, GaussianPredictor, SamplerKind, SolveSummary,
};
use crate::schedule::Schedule;
use crate::trainer::{init_fields, train_dddm, DataSource, LossKind, LossSpec, TrainConfig, DEFAULT_PSEUDO_HUBER_C};

const DEFAULT_S: f64 = 0.008;

fn load_config<C: Default + DeserializeOwned>(g: &Globals) -> Result<C> {
    match &g.config {
        Some(p) => read_json(p),
        None => Ok(C::default()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(e, path))
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| with_path(e, dir))?;
    }
    fs::write(path, text).map_err(|e| with_path(e, path))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn snapshot<C: Serialize>(out: &OutTarget, command: &str, config: &C) -> Result<()> {
    write_text(&out.join(&format!("{command}.config.json")), &to_json(config)?)
}

fn default_out(g: &Globals) -> OutTarget {
    g.out.clone().unwrap_or(OutTarget {
        dir: PathBuf::from("."),
        file: None,
    })
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(rename = "T")]
    pub steps: usize,
    pub s: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            s: DEFAULT_S,
        }
    }
}

pub(super) fn schedule(a: ScheduleArgs, g: &Globals) -> Result<()> {
    let mut cfg: ScheduleConfig = load_config(g)?;
    set(&mut cfg.steps, a.steps);
    set(&mut cfg.s, a.s);
    let json = to_json(&Schedule::cosine(cfg.steps, cfg.s)?)?;
    match &g.out {
        Some(out) => {
            write_text(&out.primary("schedule.json"), &json)?;
            snapshot(out, "schedule", &cfg)
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub seed: u64,
    pub kind: SamplerKind,
    #[serde(rename = "T")]
    pub steps: usize,
    pub s: f64,
    /// Euler steps for pf_euler; `T` when absent.
    pub euler_steps: Option<usize>,
    /// Reverse-step grid for ddim; the full grid when absent.
    pub grid: Option<Vec<usize>>,
    /// JSON list of fields; Gaussian data `N(mean, var·I)` when absent.
    pub fields: Option<PathBuf>,
    pub mean: Vec<f64>,
    pub var: f64,
    pub x_init: Option<Vec<f64>>,
    pub inner_iters: usize,
    pub solver_tol: f64,
    pub certify: bool,
    pub anchor: AnchorMode,
    /// Proxy-energy scale; `√β_t` when absent.
    pub sigma: Option<f64>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kind: SamplerKind::Dddm,
            steps: 64,
            s: DEFAULT_S,
            euler_steps: None,
            grid: None,
            fields: None,
            mean: vec![0.0],
            var: 1.0,
            x_init: None,
            inner_iters: 1,
            solver_tol: 1e-10,
            certify: false,
            anchor: AnchorMode::Current,
            sigma: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct SampleDiagnostics<'a> {
    kind: SamplerKind,
    #[serde(rename = "T")]
    steps: usize,
    seed: Option<u64>,
    x_init: &'a [f64],
    endpoint: &'a [f64],
    times: &'a [f64],
    reports: Option<&'a [EnergyReport]>,
    solves: Option<&'a [SolveSummary]>,
}

fn load_fields(path: &Path) -> Result<Vec<FieldSpec>> {
    let fields: Vec<FieldSpec> = read_json(path)?;
    for f in &fields {
        f.validate()?;
    }
    Ok(fields)
}

pub(super) fn sample(a: SampleArgs, g: &Globals) -> Result<()> {
    let mut cfg: SampleConfig = load_config(g)?;
    set(&mut cfg.seed, g.seed);
    set(&mut cfg.kind, a.kind.map(|k| k.parse()).transpose()?);
    set(&mut cfg.steps, a.steps);
    if a.euler_steps.is_some() {
        cfg.euler_steps = a.euler_steps;
    }
    if a.grid.is_some() {
        cfg.grid = a.grid;
    }
    if a.fields.is_some() {
        cfg.fields = a.fields;
    }
    set(&mut cfg.mean, a.mean);
    set(&mut cfg.var, a.var);
    if a.x_init.is_some() {
        cfg.x_init = a.x_init;
    }
    set(&mut cfg.inner_iters, a.inner_iters);
    set(&mut cfg.solver_tol, a.solver_tol);
    cfg.certify |= a.certify;

    if cfg.certify && cfg.kind != SamplerKind::Dddm {
        return invalid("per-step certificates apply to the dddm sampler only");
    }
    let schedule = Schedule::cosine(cfg.steps, cfg.s)?;
    let fields = match &cfg.fields {
        Some(p) => Some(load_fields(p)?),
        None => None,
    };
    let data = GaussianData::new(cfg.mean.clone(), cfg.var)?;
    let d = fields.as_ref().and_then(|f| f.first()).map_or(data.dim(), |f| f.dim());
    let x_init = match &cfg.x_init {
        Some(x) => {
            check_dim("x_init", x, d)?;
            x.clone()
        }
        None => standard_normal(&mut stream(cfg.seed, 1), d),
    };

    let traj = if cfg.kind == SamplerKind::Dddm {
        let fields = match fields {
            Some(f) => f,
            None => (0..cfg.steps)
                .map(|k| {
                    data.oracle_field(&schedule, schedule.forward_index(k))
                        .map(FieldSpec::GaussianOracle)
                })
                .collect::<Result<_>>()?,
        };
        let opts = DddmOptions {
            inner_iters: cfg.inner_iters,
            solver_tol: cfg.solver_tol,
            certify_steps: cfg.certify,
            anchor: cfg.anchor,
            sigma: cfg.sigma,
        };
        dddm_sample(&schedule, &fields, &x_init, &opts)?
    } else {
        let predictor: Box<dyn CleanPredictor> = match fields {
            Some(f) => Box::new(FieldPredictor::new(f)?),
            None => Box::new(GaussianPredictor::new(data)),
        };
        match cfg.kind {
            SamplerKind::Ddpm => ddpm_sample(&schedule, predictor.as_ref(), &x_init, cfg.seed)?,
            SamplerKind::Ddim => {
                let grid = cfg.grid.clone().unwrap_or_else(|| full_grid(&schedule));
                ddim_sample(&schedule, predictor.as_ref(), &grid, &x_init)?
            }
            _ => pf_euler(
                &schedule,
                predictor.as_ref(),
                &x_init,
                cfg.euler_steps.unwrap_or(cfg.steps),
            )?,
        }
    };

    let diagnostics = SampleDiagnostics {
        kind: cfg.kind,
        steps: cfg.steps,
        seed: traj.seed,
        x_init: &x_init,
        endpoint: traj.endpoint(),
        times: &traj.times,
        reports: traj.reports.as_deref(),
        solves: traj.solves.as_deref(),
    };
    let out = default_out(g);
    write_text(&out.primary("traj.csv"), &traj.to_csv())?;
    write_text(&out.sibling("traj.csv", ".diagnostics.json"), &to_json(&diagnostics)?)?;
    snapshot(&out, "sample", &cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub seed: u64,
    #[serde(rename = "T")]
    pub steps: usize,
    pub s: f64,
    /// Forward index; `T/2` when absent.
    pub t: Option<usize>,
    pub field: Option<PathBuf>,
    pub mean: Vec<f64>,
    pub var: f64,
    /// Evaluation point; the origin when absent.
    pub z: Option<Vec<f64>>,
    /// Anchor state; `z` when absent.
    pub x: Option<Vec<f64>>,
    /// `√β_t` when absent.
    pub sigma: Option<f64>,
    pub half_width: f64,
    pub n_probe: usize,
    pub rule: CurvatureRule,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 64,
            s: DEFAULT_S,
            t: None,
            field: None,
            mean: vec![0.0],
            var: 1.0,
            z: None,
            x: None,
            sigma: None,
            half_width: 1.0,
            n_probe: 256,
            rule: CurvatureRule::Sound,
        }
    }
}

#[derive(Debug, Serialize)]
struct CertifyReport {
    t: usize,
    z: Vec<f64>,
    x: Vec<f64>,
    pointwise: EnergyReport,
    /// Absent for fields without uniform derivative bounds.
    uniform: Option<StepSizeCert>,
}

fn parse_rule(s: &str) -> Result<CurvatureRule> {
    match s {
        "sound" => Ok(CurvatureRule::Sound),
        "literal" => Ok(CurvatureRule::Literal),
        other => invalid(format!("unknown curvature rule '{other}'")),
    }
}

pub(super) fn certify(a: CertifyArgs, g: &Globals) -> Result<()> {
    let mut cfg: CertifyConfig = load_config(g)?;
    set(&mut cfg.seed, g.seed);
    set(&mut cfg.steps, a.steps);
    if a.t.is_some() {
        cfg.t = a.t;
    }
    if a.field.is_some() {
        cfg.field = a.field;
    }
    set(&mut cfg.mean, a.mean);
    set(&mut cfg.var, a.var);
    if a.z.is_some() {
        cfg.z = a.z;
    }
    if a.x.is_some() {
        cfg.x = a.x;
    }
    if a.sigma.is_some() {
        cfg.sigma = a.sigma;
    }
    set(&mut cfg.half_width, a.half_width);
    set(&mut cfg.n_probe, a.n_probe);
    set(&mut cfg.rule, a.rule.as_deref().map(parse_rule).transpose()?);

    let schedule = Schedule::cosine(cfg.steps, cfg.s)?;
    let t = cfg.t.unwrap_or((cfg.steps / 2).max(1));
    if t == 0 || t > cfg.steps {
        return invalid(format!("t must lie in 1..={}, got {t}", cfg.steps));
    }
    let field = match &cfg.field {
        Some(p) => {
            let f: FieldSpec = read_json(p)?;
            f.validate()?;
            f
        }
        None => FieldSpec::GaussianOracle(GaussianData::new(cfg.mean.clone(), cfg.var)?.oracle_field(&schedule, t)?),
    };
    let d = field.dim();
    let z = cfg.z.clone().unwrap_or_else(|| vec![0.0; d]);
    let x = cfg.x.clone().unwrap_or_else(|| z.clone());
    let sigma = cfg.sigma.unwrap_or_else(|| schedule.beta(t).sqrt());
    check_dim("z", &z, d)?;
    let pointwise = certify_pointwise_with(&field, &x, &z, sigma, cfg.rule)?;
    let region = BoxRegion::around(&z, cfg.half_width)?;
    let uniform = match field.uniform_bounds(&region) {
        Some(_) => Some(certify_uniform(&field, &x, &region, sigma, cfg.n_probe, &mut stream(cfg.seed, 0))?),
        None => None,
    };

    println!(
        "pointwise: L = {:.6e}, R = {:.6e}, B_sq = {:.6e}, margin = {:.6e}, certified = {}",
        pointwise.lipschitz, pointwise.residual_norm, pointwise.curvature_sq, pointwise.margin, pointwise.certified
    );
    match &uniform {
        Some(u) => println!(
            "uniform: kappa = {:.6e}, B = {:.6e}, R_max = {:.6e} ({}, {} probes), C_B = {:.6e}, admissible = {}",
            u.kappa, u.b, u.r_max, u.r_max_source, u.n_probes, u.c_b, u.admissible
        ),
        None => println!("uniform: unavailable for this field"),
    }
    let report = CertifyReport {
        t,
        z,
        x,
        pointwise,
        uniform,
    };
    let json = to_json(&report)?;
    print!("{json}");
    if let Some(out) = &g.out {
        write_text(&out.primary("certify.json"), &json)?;
        snapshot(out, "certify", &cfg)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCliConfig {
    pub seed: u64,
    #[serde(rename = "T")]
    pub steps: usize,
    pub s: f64,
    pub data: DataSource,
    pub loss: LossKind,
    pub c: f64,
    pub hidden: usize,
    pub activation: Activation,
    /// Give every field the iterated clean estimate as extra input.
    pub context: bool,
    pub init_scale: f64,
    pub optimizer: TrainConfig,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 16,
            s: DEFAULT_S,
            data: default_source("point").expect("known kind"),
            loss: LossKind::PseudoHuber,
            c: DEFAULT_PSEUDO_HUBER_C,
            hidden: 16,
            activation: Activation::Tanh,
            context: false,
            init_scale: 0.5,
            optimizer: TrainConfig::default(),
        }
    }
}

fn default_source(kind: &str) -> Result<DataSource> {
    Ok(match kind {
        "point" => DataSource::Point { mean: vec![1.0, -0.5] },
        "gauss" => DataSource::Gauss {
            mean: vec![0.0, 0.0],
            var: 1.0,
        },
        "mixture" => DataSource::Mixture { offset: 2.0, sd: 0.5 },
        "moons" => DataSource::Moons { sd: 0.1 },
        other => return invalid(format!("unknown data source '{other}'")),
    })
}

fn source_kind(d: &DataSource) -> &'static str {
    match d {
        DataSource::Point { .. } => "point",
        DataSource::Gauss { .. } => "gauss",
        DataSource::Mixture { .. } => "mixture",
        DataSource::Moons { .. } => "moons",
    }
}

fn parse_loss(s: &str) -> Result<LossKind> {
    match s {
        "ph" | "pseudo_huber" => Ok(LossKind::PseudoHuber),
        "gmse" | "graph_mse" => Ok(LossKind::GraphMse),
        other => invalid(format!("unknown loss '{other}'")),
    }
}

fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "tanh" => Ok(Activation::Tanh),
        "softplus" => Ok(Activation::Softplus),
        "relu" => Ok(Activation::Relu),
        other => invalid(format!("unknown activation '{other}'")),
    }
}

pub(super) fn train(a: TrainArgs, g: &Globals) -> Result<()> {
    let mut cfg: TrainCliConfig = load_config(g)?;
    set(&mut cfg.seed, g.seed);
    if let Some(kind) = a.data.as_deref() {
        if kind != source_kind(&cfg.data) {
            cfg.data = default_source(kind)?;
        }
    }
    set(&mut cfg.steps, a.steps);
    set(&mut cfg.optimizer.epochs, a.epochs);
    set(&mut cfg.loss, a.loss.as_deref().map(parse_loss).transpose()?);
    set(&mut cfg.c, a.c);
    set(&mut cfg.hidden, a.hidden);
    set(&mut cfg.activation, a.activation.as_deref().map(parse_activation).transpose()?);
    set(&mut cfg.optimizer.peak_lr, a.lr);
    cfg.optimizer.seed = cfg.seed;
    // flag overrides may shrink the run below the defaults' warmup and floor
    cfg.optimizer.min_lr = cfg.optimizer.min_lr.min(cfg.optimizer.peak_lr);
    cfg.optimizer.warmup_steps = cfg.optimizer.warmup_steps.min(cfg.optimizer.total_steps());

    let schedule = Schedule::cosine(cfg.steps, cfg.s)?;
    let loss = LossSpec {
        kind: cfg.loss,
        c_param: cfg.c,
    };
    let mut rng = seeded(cfg.seed);
    let mut fields = init_fields(
        cfg.steps,
        cfg.data.dim(),
        cfg.hidden,
        cfg.activation,
        cfg.context,
        cfg.init_scale,
        &mut rng,
    )?;
    let report = train_dddm(&mut fields, &cfg.data, &schedule, &loss, &cfg.optimizer, &mut rng)?;
    let specs: Vec<FieldSpec> = fields.into_iter().map(FieldSpec::OneLayer).collect();

    let out = default_out(g);
    write_text(&out.primary("fields.json"), &to_json(&specs)?)?;
    write_text(&out.join("loss.csv"), &report.to_csv())?;
    snapshot(&out, "train", &cfg)?;
    if let Some(last) = report.epoch_losses.last() {
        println!("epochs = {}, final loss = {last:e}", report.epoch_losses.len());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub gen: Option<PathBuf>,
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    pub delta: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            gen: None,
            reference: None,
            delta: DEFAULT_DELTA,
        }
    }
}

pub(super) fn metrics(a: MetricsArgs, g: &Globals) -> Result<()> {
    let mut cfg: MetricsConfig = load_config(g)?;
    if a.gen.is_some() {
        cfg.gen = a.gen;
    }
    if a.reference.is_some() {
        cfg.reference = a.reference;
    }
    set(&mut cfg.delta, a.delta);
    let (Some(gen), Some(reference)) = (&cfg.gen, &cfg.reference) else {
        return invalid("metrics needs both --gen and --ref");
    };
    let gen = Ensemble::from_xyz(&read_text(gen)?)?;
    let reference = Ensemble::from_xyz(&read_text(reference)?)?;
    let json = to_json(&evaluate(&gen, &reference, cfg.delta)?)?;
    print!("{json}");
    if let Some(out) = &g.out {
        write_text(&out.primary("metrics.json"), &json)?;
        snapshot(out, "metrics", &cfg)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlopsConfig {
    pub seq_len: u64,
    pub d_model: u64,
    pub expand: u64,
    pub d_state: u64,
    pub num_heads: u64,
    pub window_size: u64,
}

impl Default for FlopsConfig {
    fn default() -> Self {
        Self {
            seq_len: 2048,
            d_model: 512,
            expand: 2,
            d_state: 256,
            num_heads: 8,
            window_size: 4,
        }
    }
}

pub(super) fn flops(a: FlopsArgs, g: &Globals) -> Result<()> {
    let mut cfg: FlopsConfig = load_config(g)?;
    set(&mut cfg.seq_len, a.seq_len);
    set(&mut cfg.d_model, a.d_model);
    set(&mut cfg.expand, a.expand);
    set(&mut cfg.d_state, a.d_state);
    set(&mut cfg.num_heads, a.num_heads);
    set(&mut cfg.window_size, a.window_size);
    let report = hydra_flops(
        cfg.seq_len,
        cfg.d_model,
        cfg.expand,
        cfg.d_state,
        cfg.num_heads,
        cfg.window_size,
    )?;
    let rows = report.rows();
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    for (label, value) in &rows {
        println!("{label:<width$}  {value:>20}");
    }
    if let Some(out) = &g.out {
        write_text(&out.primary("flops.json"), &to_json(&report)?)?;
        snapshot(out, "flops", &cfg)?;
    }
    Ok(())
}

pub(super) fn demo(a: DemoArgs, g: &Globals) -> Result<()> {
    let mut cfg: DemoConfig = load_config(g)?;
    set(&mut cfg.seed, g.seed);
    set(&mut cfg.steps, a.steps);
    set(&mut cfg.samples, a.samples);
    let output = run_demo(&cfg)?;
    let out = default_out(g);
    write_text(&out.primary("demo_trajectory.csv"), &output.trajectory_csv)?;
    write_text(&out.join("demo_diagnostics.json"), &to_json(&output.steps)?)?;
    let summary = to_json(&output.summary)?;
    write_text(&out.join("demo_summary.json"), &summary)?;
    snapshot(&out, "demo", &cfg)?;
    print!("{summary}");
    Ok(())
}
