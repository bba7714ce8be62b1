//! Command-line front end. [`run`] returns the error that `main` prints
//! as a single line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use acs_core::data::{gen2d, gen3d, GenOptions, Noise};
use acs_core::engine::{
    predict, recalibrate_norm, train_loop, AdamConfig, LossKind, Optimizer, TrainConfig,
};
use acs_core::gradcheck::{self, GradOp};
use acs_core::graph::{
    convert_graph, infer_shapes, init_params, transfer_weights, ConvertMode, ConvertOptions, Dim,
    ModelGraph, PoolDepth, Scope,
};
use acs_core::profile::{compare, model_cost};
use acs_core::{AnyTensor, ParamStore, Tensor, WeightStore};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::model_file::ModelFileError;
use crate::poc::{PocConfig, Variant};
use crate::weights::{FormatError, WeightsError};
use crate::{dataset, model_file, poc, report, weights};

pub const THREADS_VAR: &str = "ACS_THREADS";

#[derive(Debug, thiserror::Error)]
#[error("{kind}: {message}")]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    /// `error: <kind>: <message>` with line breaks folded.
    pub fn line(&self) -> String {
        let msg = self
            .message
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        format!("error: {}: {msg}", self.kind)
    }
}

fn core_kind(e: &acs_core::Error) -> &'static str {
    use acs_core::Error as E;
    match e {
        E::AtNode { source, .. } => core_kind(source),
        E::MissingParam(_) => "missing",
        E::InvalidGraph(_) | E::UnsupportedKind { .. } => "graph",
        E::InvalidConfig(_) | E::OutsideOracle(_) => "config",
        E::Diverged { .. } => "diverged",
        E::DType { .. } => "dtype",
        _ => "shape",
    }
}

impl From<acs_core::Error> for CliError {
    fn from(e: acs_core::Error) -> Self {
        CliError::new(core_kind(&e), e.to_string())
    }
}

impl From<WeightsError> for CliError {
    fn from(e: WeightsError) -> Self {
        let kind = match &e {
            WeightsError::Io { .. } => "io",
            WeightsError::Format { .. } => "format",
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        let kind = match &e {
            ModelFileError::Io { .. } => "io",
            ModelFileError::Json(_)
            | ModelFileError::Version(_)
            | ModelFileError::Schema { .. } => "schema",
            ModelFileError::Graph(g) => core_kind(g),
        };
        CliError::new(kind, e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("io", format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(
    name = "acs",
    version,
    about = "ACS convolutions: 2D-to-3D model conversion, profiling and training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert a 2D model (and optionally its weights) to 3D.
    Convert(ConvertArgs),
    /// Print per-layer MACs, parameters and activation sizes.
    Profile(ProfileArgs),
    /// Run a model over every image in a container.
    Infer(InferArgs),
    /// Generate a synthetic shape dataset.
    GenData(GenDataArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Finite-difference check of one operator's gradients.
    GradCheck(GradCheckArgs),
    /// Pretrain in 2D, convert, probe and fine-tune in 3D.
    Poc(PocArgs),
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// acs, mean_acs, soft_acs, p25d, i3d or conv3d.
    #[arg(long)]
    pub mode: String,
    /// 2D weights to transfer; without it the 3D model is initialized.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// `whole` or `prefix=a,b,...`.
    #[arg(long, default_value = "whole")]
    pub scope: String,
    /// Output base path; `.model` and `.acsw` are appended.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = PoolArg::One)]
    pub pool_depth: PoolArg,
    /// Also stride the depth axis where the 2D model strides.
    #[arg(long)]
    pub depth_stride: bool,
    /// Axis the i3d kernels are repeated along: d, h or w.
    #[arg(long, default_value = "d")]
    pub inflate_axis: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    /// 1×K×K windows.
    One,
    /// K×K×K windows.
    K,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated input shape, `N,C,H,W` or `N,C,D,H,W`.
    #[arg(long)]
    pub input_shape: String,
    /// Print ratios of this model's costs over the compared model's.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Container of `C×spatial` images; in a dataset only `*/image`
    /// entries are used.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    pub dim: u8,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Read the noise level 0.5 as a variance.
    #[arg(long, conflicts_with = "noiseless")]
    pub noise_variance: bool,
    #[arg(long)]
    pub noiseless: bool,
    /// Random cone/pyramid apex direction.
    #[arg(long)]
    pub random_orientation: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "dice")]
    pub loss: String,
    #[arg(long)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Starting weights; fresh initialization otherwise.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Cubic (or square) random crop extent.
    #[arg(long)]
    pub crop: Option<usize>,
    /// Write the per-epoch history here.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Keep the batchnorm running statistics accumulated during training
    /// instead of re-estimating them over the data afterwards.
    #[arg(long)]
    pub keep_running_stats: bool,
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    /// conv, acs, mean_acs, soft_acs, batchnorm, groupnorm, avgpool, dice or bce.
    #[arg(long)]
    pub op: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct PocArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seconds-scale configuration for smoke testing.
    #[arg(long)]
    pub quick: bool,
    /// Directory for the results table and histories.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of acs_r, acs_p, p25d_r, p25d_p, conv3d_r.
    #[arg(long)]
    pub variants: Option<String>,
    #[arg(long)]
    pub train2d: Option<usize>,
    #[arg(long)]
    pub epochs2d: Option<usize>,
    #[arg(long)]
    pub probe3d: Option<usize>,
    #[arg(long)]
    pub train3d: Option<usize>,
    #[arg(long)]
    pub test3d: Option<usize>,
    #[arg(long)]
    pub epochs3d: Option<usize>,
    #[arg(long)]
    pub batch3d: Option<usize>,
    #[arg(long)]
    pub lr2d: Option<f64>,
    #[arg(long)]
    pub lr3d: Option<f64>,
    /// Cubic crop for 3D fine-tuning; 0 trains on whole volumes.
    #[arg(long)]
    pub crop3d: Option<usize>,
    /// Print per-epoch progress to stderr.
    #[arg(long)]
    pub verbose: bool,
}

/// Worker count from `ACS_THREADS` (default 1). Execution is sequential,
/// so values above 1 are accepted and reported but do not add workers.
pub fn threads() -> Result<(usize, usize), CliError> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok((1, 1)),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok((n, 1)),
            _ => Err(CliError::new(
                "config",
                format!("{THREADS_VAR} must be a positive integer, got {v:?}"),
            )),
        },
    }
}

fn print_config(
    out: &mut dyn Write,
    command: &str,
    items: &[(&str, String)],
) -> Result<(), CliError> {
    let (requested, used) = threads()?;
    let mut s = format!("config command = {command}\n");
    for (k, v) in items {
        s += &format!("config {k} = {v}\n");
    }
    s += &format!("config threads = {used} (requested {requested})\n");
    write_out(out, &s)
}

fn write_out(out: &mut dyn Write, s: &str) -> Result<(), CliError> {
    out.write_all(s.as_bytes())
        .map_err(|e| CliError::new("io", format!("stdout: {e}")))
}

fn parse_shape(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| {
            CliError::new(
                "usage",
                format!("bad input shape {s:?}: expected comma-separated integers"),
            )
        })
}

fn parse_scope(s: &str) -> Result<Scope, CliError> {
    if s == "whole" {
        return Ok(Scope::Whole);
    }
    match s.strip_prefix("prefix=") {
        Some(list) if !list.is_empty() => {
            Ok(Scope::Prefixes(list.split(',').map(String::from).collect()))
        }
        _ => Err(CliError::new(
            "usage",
            format!("bad scope {s:?}: expected `whole` or `prefix=a,b`"),
        )),
    }
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn f32_params(store: &WeightStore) -> ParamStore<f32> {
    store.to_params()
}

pub fn run(
    argv: impl IntoIterator<Item = impl Into<OsString> + Clone>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            return write_out(out, &e.to_string());
        }
        Err(e) => {
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            return Err(CliError::new("usage", first));
        }
    };
    match cli.command {
        Command::Convert(a) => convert(a, out),
        Command::Profile(a) => profile(a, out),
        Command::Infer(a) => infer(a, out),
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => train(a, out),
        Command::GradCheck(a) => grad_check(a, out),
        Command::Poc(a) => run_poc(a, out),
    }
}

fn convert(a: ConvertArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mode = ConvertMode::parse(&a.mode)
        .ok_or_else(|| CliError::new("usage", format!("unknown mode {:?}", a.mode)))?;
    let scope = parse_scope(&a.scope)?;
    let axis = match a.inflate_axis.as_str() {
        "d" => 0,
        "h" => 1,
        "w" => 2,
        other => {
            return Err(CliError::new(
                "usage",
                format!("unknown inflate axis {other:?}"),
            ))
        }
    };
    print_config(
        out,
        "convert",
        &[
            ("model", a.model.display().to_string()),
            ("mode", mode.name().into()),
            (
                "weights",
                a.weights
                    .as_ref()
                    .map_or("none (initialized)".into(), |p| p.display().to_string()),
            ),
            ("scope", a.scope.clone()),
            ("pool_depth", format!("{:?}", a.pool_depth).to_lowercase()),
            ("depth_stride", a.depth_stride.to_string()),
            ("inflate_axis", a.inflate_axis.clone()),
            ("seed", a.seed.to_string()),
            ("out", a.out.display().to_string()),
        ],
    )?;
    let g2 = model_file::load(&a.model)?;
    let mut opts = ConvertOptions::new(mode).with_pool_depth(match a.pool_depth {
        PoolArg::One => PoolDepth::One,
        PoolArg::K => PoolDepth::Full,
    });
    opts.depth_stride = a.depth_stride;
    opts.inflate_axis = axis;
    let g3 = convert_graph(&g2, &opts)?;
    let store = match &a.weights {
        Some(p) => transfer_weights(&weights::load(p)?, &g3, &scope, a.seed)?,
        None => init_params::<f32>(&g3, a.seed).to_weights(),
    };
    let (mp, wp) = (with_ext(&a.out, "model"), with_ext(&a.out, "acsw"));
    model_file::save(&g3, &mp)?;
    weights::save(&store, &wp)?;
    write_out(
        out,
        &format!(
            "converted {} nodes; params 2d {} 3d {}\nwrote {}\nwrote {}\n",
            g3.nodes().len(),
            g2.param_count(),
            g3.param_count(),
            mp.display(),
            wp.display()
        ),
    )
}

/// A 3D shape adapted to a 2D graph by dropping the depth axis (and the
/// reverse with a unit depth).
fn shape_for(g: &ModelGraph, shape: &[usize]) -> Vec<usize> {
    match (g.dim(), shape.len()) {
        (Dim::D2, 5) => [&shape[..2], &shape[3..]].concat(),
        (Dim::D3, 4) => [&shape[..2], &[1], &shape[2..]].concat(),
        _ => shape.to_vec(),
    }
}

fn profile(a: ProfileArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let shape = parse_shape(&a.input_shape)?;
    print_config(
        out,
        "profile",
        &[
            ("model", a.model.display().to_string()),
            ("input_shape", format!("{shape:?}")),
            (
                "compare",
                a.compare
                    .as_ref()
                    .map_or("none".into(), |p| p.display().to_string()),
            ),
            ("format", if a.json { "json" } else { "table" }.into()),
        ],
    )?;
    let g = model_file::load(&a.model)?;
    let r = model_cost(&g, &shape_for(&g, &shape))?;
    let other = match &a.compare {
        Some(p) => {
            let h = model_file::load(p)?;
            Some(model_cost(&h, &shape_for(&h, &shape))?)
        }
        None => None,
    };
    if a.json {
        let mut v = serde_json::json!({ "report": report::cost_json(&r) });
        if let Some(o) = &other {
            v["compare"] = report::cost_json(o);
            v["ratio"] = report::comparison_json(&compare(&r, o));
        }
        write_out(
            out,
            &(serde_json::to_string_pretty(&v).expect("json") + "\n"),
        )
    } else {
        write_out(out, &report::cost_table(&r))?;
        if let Some(o) = &other {
            write_out(
                out,
                &format!(
                    "\ncompared model params {} macs {}\n",
                    o.totals.params, o.totals.macs
                ),
            )?;
            write_out(
                out,
                &format!(
                    "ratios (this / compared)\n{}",
                    report::comparison_table(&compare(&r, o))
                ),
            )?;
        }
        Ok(())
    }
}

fn infer(a: InferArgs, out: &mut dyn Write) -> Result<(), CliError> {
    print_config(
        out,
        "infer",
        &[
            ("model", a.model.display().to_string()),
            ("weights", a.weights.display().to_string()),
            ("input", a.input.display().to_string()),
            ("out", a.out.display().to_string()),
        ],
    )?;
    let g = model_file::load(&a.model)?;
    let params = f32_params(&weights::load(&a.weights)?);
    let input = weights::load(&a.input)?;
    let dataset = input.names().any(|n| n.ends_with("/image"));
    let mut result = WeightStore::new();
    for (name, t) in input.iter() {
        if dataset && !name.ends_with("/image") {
            continue;
        }
        let img: Tensor<f32> = t.to_real();
        let logits = predict(&g, &params, &[&img])
            .map_err(|e| CliError::new("shape", format!("entry `{name}`: {e}")))?;
        let logits = logits.into_iter().next().expect("one image in, one out");
        let base = name.strip_suffix("/image").unwrap_or(name);
        let labels = label_map(&logits);
        let fmt = |e: acs_core::Error| CliError::from(e);
        result
            .insert(format!("{base}/logits"), AnyTensor::F32(logits))
            .map_err(fmt)?;
        result
            .insert(format!("{base}/prediction"), AnyTensor::F32(labels))
            .map_err(fmt)?;
    }
    weights::save(&result, &a.out)?;
    write_out(
        out,
        &format!(
            "wrote {} predictions to {}\n",
            result.len() / 2,
            a.out.display()
        ),
    )
}

/// Class id per voxel: the largest positive logit's channel + 1, or 0.
pub fn label_map(logits: &Tensor<f32>) -> Tensor<f32> {
    let c = logits.shape()[1];
    let spatial = logits.shape()[2..].to_vec();
    let s: usize = spatial.iter().product();
    Tensor::from_fn(spatial, |i| {
        let mut best = (0.0f32, 0usize);
        for ch in 0..c {
            let v = logits.data()[ch * s + i];
            if v > best.0 {
                best = (v, ch + 1);
            }
        }
        best.1 as f32
    })
}

fn gen_data(a: GenDataArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let opts = GenOptions {
        noise: if a.noiseless {
            Noise::None
        } else if a.noise_variance {
            GenOptions::variance_half().noise
        } else {
            GenOptions::default().noise
        },
        random_orientation: a.random_orientation,
    };
    print_config(
        out,
        "gen-data",
        &[
            ("dim", a.dim.to_string()),
            ("n", a.n.to_string()),
            ("seed", a.seed.to_string()),
            ("noise", format!("{:?}", opts.noise)),
            ("random_orientation", opts.random_orientation.to_string()),
            ("out", a.out.display().to_string()),
        ],
    )?;
    if a.n == 0 {
        return Err(CliError::new("usage", "--n must be at least 1"));
    }
    let samples = if a.dim == 2 {
        gen2d(a.n, a.seed, &opts)
    } else {
        gen3d(a.n, a.seed, &opts)
    };
    weights::save(&dataset::shapes_to_store(&samples), &a.out)?;
    write_out(
        out,
        &format!("wrote {} samples to {}\n", a.n, a.out.display()),
    )
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let loss = LossKind::parse(&a.loss)
        .ok_or_else(|| CliError::new("usage", format!("unknown loss {:?}", a.loss)))?;
    print_config(
        out,
        "train",
        &[
            ("model", a.model.display().to_string()),
            ("data", a.data.display().to_string()),
            ("loss", loss.name().into()),
            ("epochs", a.epochs.to_string()),
            ("lr", a.lr.to_string()),
            ("optimizer", "adam".into()),
            ("batch_size", a.batch_size.to_string()),
            ("crop", a.crop.map_or("none".into(), |c| c.to_string())),
            ("recalibrate_norm", (!a.keep_running_stats).to_string()),
            (
                "weights",
                a.weights
                    .as_ref()
                    .map_or("initialized".into(), |p| p.display().to_string()),
            ),
            ("seed", a.seed.to_string()),
            ("out", a.out.display().to_string()),
        ],
    )?;
    let g = model_file::load(&a.model)?;
    let data =
        dataset::from_store(&weights::load(&a.data)?).map_err(|m| CliError::new("format", m))?;
    let first = data
        .first()
        .ok_or_else(|| CliError::new("format", "dataset is empty"))?;
    let mut probe_shape = vec![1];
    probe_shape.extend_from_slice(first.image.shape());
    let shapes = infer_shapes(&g, &probe_shape)?;
    let out_pos = g
        .nodes()
        .iter()
        .position(|n| n.name == g.outputs()[0])
        .expect("output is a node");
    let classes = shapes[out_pos][1];
    let mut params = match &a.weights {
        Some(p) => f32_params(&weights::load(p)?),
        None => init_params::<f32>(&g, a.seed),
    };
    let spatial = first.mask.shape().len();
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        loss,
        optimizer: Optimizer::Adam(AdamConfig {
            lr: a.lr,
            ..AdamConfig::default()
        }),
        decay: None,
        classes,
        crop: a.crop.map(|c| vec![c; spatial]),
        seed: a.seed,
    };
    let mut lines = String::new();
    let h = train_loop(&g, &mut params, &data, &cfg, |r| {
        lines += &format!("epoch {} loss {:.6} dice {:.6}\n", r.epoch, r.loss, r.dice);
    })?;
    if a.epochs > 0 && !a.keep_running_stats {
        let images: Vec<_> = data.iter().map(|s| &s.image).collect();
        recalibrate_norm(&g, &mut params, &images, a.batch_size)?;
    }
    write_out(out, &lines)?;
    weights::save(&params.to_weights(), &a.out)?;
    if let Some(p) = &a.history {
        std::fs::write(p, h.to_csv()).map_err(|e| io_err(p, e))?;
    }
    write_out(out, &format!("wrote {}\n", a.out.display()))
}

fn grad_check(a: GradCheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let op = GradOp::parse(&a.op)
        .ok_or_else(|| CliError::new("usage", format!("unknown op {:?}", a.op)))?;
    print_config(
        out,
        "grad-check",
        &[
            ("op", op.name().into()),
            ("seed", a.seed.to_string()),
            ("tolerance", format!("{:e}", a.tolerance)),
        ],
    )?;
    let r = gradcheck::run(op, a.seed)?;
    let mut s = String::new();
    for i in &r.inputs {
        s += &format!(
            "{} entries {} max rel err {:.3e}\n",
            i.input, i.entries, i.max_rel_err
        );
    }
    let worst = r.max_rel_err();
    s += &format!("max rel err {worst:.3e}\n");
    write_out(out, &s)?;
    if worst <= a.tolerance {
        Ok(())
    } else {
        Err(CliError::new(
            "check",
            format!(
                "{} max rel err {worst:e} exceeds {:e}",
                op.name(),
                a.tolerance
            ),
        ))
    }
}

fn run_poc(a: PocArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = if a.quick {
        PocConfig::quick()
    } else {
        PocConfig::default()
    };
    cfg.seed = a.seed;
    if let Some(list) = &a.variants {
        cfg.variants = list
            .split(',')
            .map(|s| {
                Variant::parse(s.trim())
                    .ok_or_else(|| CliError::new("usage", format!("unknown variant {s:?}")))
            })
            .collect::<Result<_, _>>()?;
    }
    let overrides = [
        (a.train2d, &mut cfg.train2d),
        (a.epochs2d, &mut cfg.epochs2d),
        (a.probe3d, &mut cfg.probe3d),
        (a.train3d, &mut cfg.train3d),
        (a.test3d, &mut cfg.test3d),
        (a.epochs3d, &mut cfg.epochs3d),
        (a.batch3d, &mut cfg.batch3d),
    ];
    for (v, slot) in overrides {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(lr) = a.lr2d {
        cfg.lr2d = lr;
    }
    if let Some(lr) = a.lr3d {
        cfg.lr3d = lr;
    }
    if let Some(c) = a.crop3d {
        cfg.crop3d = (c > 0).then_some(c);
    }
    let mut items: Vec<(String, String)> = cfg.describe();
    items.push((
        "out".into(),
        a.out
            .as_ref()
            .map_or("none".into(), |p| p.display().to_string()),
    ));
    let borrowed: Vec<(&str, String)> =
        items.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    print_config(out, "poc", &borrowed)?;
    let verbose = a.verbose;
    let r = poc::run(&cfg, &mut |m| {
        if verbose {
            eprintln!("{m}");
        }
    })?;
    write_out(out, &r.to_table())?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let table = dir.join("results.csv");
        std::fs::write(&table, r.to_csv()).map_err(|e| io_err(&table, e))?;
        for (name, csv) in &r.histories {
            let p = dir.join(format!("{name}.csv"));
            std::fs::write(&p, csv).map_err(|e| io_err(&p, e))?;
        }
        write_out(out, &format!("wrote {}\n", table.display()))?;
    }
    Ok(())
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::new("format", e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_parsing() {
        assert_eq!(parse_scope("whole").unwrap(), Scope::Whole);
        assert_eq!(
            parse_scope("prefix=encoder.,decoder.").unwrap(),
            Scope::Prefixes(vec!["encoder.".into(), "decoder.".into()])
        );
        assert_eq!(parse_scope("prefix=").unwrap_err().kind, "usage");
    }

    #[test]
    fn shapes_adapt_to_the_graph() {
        let g = acs_core::graph::toy_unet(Default::default()).unwrap();
        assert_eq!(shape_for(&g, &[1, 1, 8, 16, 16]), vec![1, 1, 16, 16]);
        assert_eq!(parse_shape("1, 2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_shape("1,x").is_err());
    }

    #[test]
    fn label_map_picks_the_largest_positive_logit() {
        let l = Tensor::new([1, 2, 3], vec![-1.0, 2.0, 0.5, -2.0, 3.0, 0.2]).unwrap();
        assert_eq!(label_map(&l).data(), &[0.0, 2.0, 1.0]);
    }

    #[test]
    fn usage_errors_are_one_line() {
        let e = run(["acs", "profile", "--bogus"], &mut Vec::new()).unwrap_err();
        assert_eq!(e.kind, "usage");
        assert_eq!(e.line().lines().count(), 1);
    }
}
