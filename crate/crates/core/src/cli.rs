//! Command-line front end.
//!
//! Model configuration keys may be overridden on `train` and `bench` with
//! trailing `--key value` pairs, e.g. `--lambda 0.3 --m_h 64`. Dashes in
//! keys are read as underscores. Overrides win over the config file, which
//! wins over the preset.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{generate_synthetic_dataset, read_feature_file, Dataset, SyntheticSpec};
use crate::encoding::ModelConfig;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_dataset, report_csv, EvalOptions};
use crate::model::TwinNet;
use crate::numerics::{Element, Tensor};
use crate::streaming::{bench_paths, StreamModel, StreamState};
use crate::training::train;

#[derive(Debug, Parser)]
#[command(name = "streamground", version, about = "Sentence grounding over streaming video features")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus and its manifest.
    Synth(SynthArgs),
    /// Train the twin network and write a checkpoint and metrics.csv.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest and report R@n,IoU=m.
    Eval(EvalArgs),
    /// Emit `T,s,m,e,warmup` for every frame of one video.
    Stream(StreamArgs),
    /// Compare incremental and reference streaming throughput.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Activitynet,
    Mad,
    Large,
}

impl Preset {
    fn config(self) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(),
            Preset::Activitynet => ModelConfig::activitynet(),
            Preset::Mad => ModelConfig::mad(),
            Preset::Large => ModelConfig::large(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 25)]
    pub videos: usize,
    #[arg(long, default_value_t = 80)]
    pub frames: usize,
    #[arg(long, default_value_t = 32)]
    pub raw_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub events: usize,
    #[arg(long, default_value_t = 8)]
    pub min_len: usize,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 4)]
    pub words: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `key = value` file; its values replace the preset's.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 is the deterministic reference mode.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Config overrides as `--key value` pairs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Report CSV path; the aggregate is always printed.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
    pub m: Vec<f64>,
    /// Score all O(L²) candidates instead of the sparse subset.
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub exclude_warmup: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Frame feature file, one row per frame.
    #[arg(long)]
    pub frames: PathBuf,
    /// Word feature file of the query.
    #[arg(long)]
    pub query: PathBuf,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recompute every first-layer logit row at each step.
    #[arg(long)]
    pub reference: bool,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark a trained checkpoint instead of a random network.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[arg(long, default_value_t = 8)]
    pub warmup: usize,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// Parses `--key value` and `--key=value` pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(Error::Config {
                key: arg.clone(),
                reason: "expected a --key value override".into(),
            });
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let value = it.next().ok_or_else(|| Error::Config {
                    key: flag.to_string(),
                    reason: "missing value".into(),
                })?;
                (flag.to_string(), value.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")))
    }
}

impl ModelArgs {
    /// Preset, then config file, then `infer` (when neither the file nor an
    /// override sets the key), then overrides, then `--seed`/`--workers`.
    fn resolve(&self, infer: &[(&str, String)]) -> Result<ModelConfig> {
        let overrides = parse_overrides(&self.overrides)?;
        let mut config = match &self.config {
            Some(path) => {
                require(path)?;
                let mut c = self.preset.config();
                c.apply_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
                c
            }
            None => self.preset.config(),
        };
        for (key, value) in infer {
            let overridden = overrides.iter().any(|(k, _)| k == key);
            if self.config.is_none() && !overridden {
                config.set(key, value)?;
            }
        }
        for (key, value) in &overrides {
            config.set(key, value)?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        config.validate()?;
        Ok(config)
    }
}

fn dataset_dims(dataset: &Dataset) -> Vec<(&'static str, String)> {
    let Some(video) = dataset.videos.iter().find(|v| !v.queries.is_empty()) else {
        return Vec::new();
    };
    vec![
        ("frame_dim", video.frames.cols().to_string()),
        ("word_dim", video.queries[0].words.cols().to_string()),
    ]
}

fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SyntheticSpec {
        num_videos: args.videos,
        frames_per_video: args.frames,
        raw_dim: args.raw_dim,
        event_count_per_video: args.events,
        event_length_range: (args.min_len, args.max_len),
        noise_scale: args.noise,
        words_per_query: args.words,
        seed: args.seed,
    };
    let manifest = generate_synthetic_dataset(&spec, &args.out)?;
    writeln!(out, "wrote {} annotations to {}", args.videos * args.events, manifest.display()).map_err(stdout_error)
}

fn train_cmd(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    require(&args.manifest)?;
    let dataset = Dataset::load(&args.manifest)?;
    let config = args.model.resolve(&dataset_dims(&dataset))?;
    let outcome = train(&dataset, &config, Some(&args.out))?;
    let last = outcome.metrics.last().map(|m| m.losses).unwrap_or_default();
    writeln!(
        out,
        "trained {} steps; final L_ord {:.5} L_pro {:.5} L_kd {:.5} total {:.5}\ncheckpoint {}",
        outcome.metrics.len(),
        last.l_ord,
        last.l_pro,
        last.l_kd,
        last.total,
        args.out.join("checkpoint").display()
    )
    .map_err(stdout_error)
}

fn eval_cmd(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    require(&args.manifest)?;
    require(&args.checkpoint)?;
    let dataset = Dataset::load(&args.manifest)?;
    let options = EvalOptions {
        ns: args.n.clone(),
        ms: args.m.clone(),
        full_candidates: args.full,
        exclude_warmup: args.exclude_warmup,
        workers: args.workers,
    };
    let report = match args.precision {
        Precision::F64 => evaluate_dataset(&dataset, &Arc::new(StreamModel::<f64>::load(&args.checkpoint)?), &options)?,
        Precision::F32 => evaluate_dataset(&dataset, &Arc::new(StreamModel::<f32>::load(&args.checkpoint)?), &options)?,
    };
    if let Some(path) = &args.report {
        std::fs::write(path, report_csv(&report)).map_err(|e| Error::io(path, e))?;
    }
    writeln!(out, "queries,{}", report.queries).map_err(stdout_error)?;
    writeln!(out, "n,m,recall").map_err(stdout_error)?;
    for r in &report.recalls {
        writeln!(out, "{},{},{:.2}", r.n, r.m, r.recall).map_err(stdout_error)?;
    }
    Ok(())
}

fn stream_rows<S: Element>(args: &StreamArgs, frames: &Tensor, words: &Tensor, out: &mut dyn Write) -> Result<()> {
    let model = Arc::new(StreamModel::<S>::load(&args.checkpoint)?);
    let mut state = StreamState::new(model, words)?;
    writeln!(out, "T,s,m,e,warmup").map_err(stdout_error)?;
    for t in 0..frames.rows() {
        let o = if args.reference {
            state.step_reference(frames.row(t))?
        } else {
            state.step(frames.row(t))?
        };
        writeln!(out, "{},{},{},{},{}", o.t, o.s, o.m, o.e, u8::from(o.warmup)).map_err(stdout_error)?;
    }
    Ok(())
}

fn stream_cmd(args: &StreamArgs, out: &mut dyn Write) -> Result<()> {
    for path in [&args.checkpoint, &args.frames, &args.query] {
        require(path)?;
    }
    let frames = read_feature_file(&args.frames)?;
    let words = read_feature_file(&args.query)?;
    let mut file;
    let sink: &mut dyn Write = match &args.out {
        Some(path) => {
            file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
            &mut file
        }
        None => out,
    };
    match args.precision {
        Precision::F64 => stream_rows::<f64>(args, &frames, &words, sink)?,
        Precision::F32 => stream_rows::<f32>(args, &frames, &words, sink)?,
    }
    sink.flush().map_err(stdout_error)
}

fn bench_model<S: Element>(args: &BenchArgs) -> Result<Arc<StreamModel<S>>> {
    Ok(Arc::new(match &args.checkpoint {
        Some(dir) => {
            require(dir)?;
            StreamModel::load(dir)?
        }
        None => {
            let config = args.model.resolve(&[])?;
            let (net, store) = TwinNet::new(&config)?;
            StreamModel::new(net, &store)
        }
    }))
}

fn bench_run<S: Element>(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let model = bench_model::<S>(args)?;
    let c = model.config().clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(c.seed);
    let mut random = |rows: usize, cols: usize| {
        Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let frames = random(args.warmup + args.steps, c.frame_dim)?;
    let words = random(6, c.word_dim)?;
    let report = bench_paths(&model, &words, &frames, args.warmup)?;
    writeln!(
        out,
        "d={} m_h={} m_p={} n={} k={} l_dec={} steps={}\nincremental_steps_per_s,{:.3}\nreference_steps_per_s,{:.3}\nspeedup,{:.3}",
        c.d,
        c.m_h,
        c.m_p,
        c.n,
        c.k,
        c.l_dec,
        report.steps,
        report.incremental_sps,
        report.reference_sps,
        report.speedup()
    )
    .map_err(stdout_error)
}

fn bench_cmd(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    match args.precision {
        Precision::F32 => bench_run::<f32>(args, out),
        Precision::F64 => bench_run::<f64>(args, out),
    }
}

fn stdout_error(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Stream(a) => stream_cmd(a, out),
        Command::Bench(a) => bench_cmd(a, out),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
