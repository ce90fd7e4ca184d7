//! The `rfsample` command line: thin wrappers over the library modules.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::annotations::{load_dataset, Dataset};
use crate::error::Error;
use crate::frequency::compute_frequencies;
use crate::repeat_factor::{
    compute_repeat_factors, image_repeat_factors, write_factors_json, ImageRepeatTable, Method,
    SamplerConfig, DEFAULT_THRESHOLD,
};
use crate::report::{build_report, diff_methods};
use crate::sampler::sample_epoch;
use crate::synth::{generate, ImageCountLaw, InstancesLaw, SynthSpec};

pub const EXIT_INPUT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Parser)]
#[command(name = "rfsample", version, about = "Repeat factor sampling for long-tailed detection datasets")]
pub struct Cli {
    /// Worker threads (defaults to one per core). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-category image/instance frequencies and buckets.
    Analyze(AnalyzeArgs),
    /// Category and image repeat factors.
    Factors(FactorsArgs),
    /// Seeded per-epoch sample lists.
    Sample(SampleArgs),
    /// Write a synthetic long-tailed annotation file.
    Synth(SynthArgs),
    /// Bucketed balance report comparing sampler configs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// COCO/LVIS annotation JSON.
    pub input: PathBuf,

    /// Drop annotations with dangling references instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    /// rfs, irfs-geometric, irfs-harmonic, irfs-arithmetic, irfs-quadratic or instance-only.
    #[arg(long, default_value = "irfs-geometric", value_parser = parse_method)]
    pub method: Method,

    /// Oversampling threshold; 0 disables re-sampling.
    #[arg(long = "t", visible_alias = "threshold", default_value_t = DEFAULT_THRESHOLD, value_parser = parse_threshold)]
    pub threshold: f64,
}

impl MethodArgs {
    fn config(&self) -> SamplerConfig {
        SamplerConfig::new(self.method, self.threshold).expect("validated by the parser")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleFormat {
    Txt,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, value_enum, default_value = "json")]
    pub format: TableFormat,

    /// Output file (stdout if omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FactorsArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub method: MethodArgs,

    /// `json` writes both tables; `csv` writes the category table.
    #[arg(long, value_enum, default_value = "json")]
    pub format: TableFormat,

    #[arg(short, long)]
    pub output: Option<PathBuf>,

    /// Also write the image factor table as CSV here.
    #[arg(long)]
    pub image_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub method: MethodArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Number of epochs to generate.
    #[arg(long, default_value_t = 1)]
    pub epochs: u64,

    /// Index of the first epoch.
    #[arg(long, default_value_t = 0)]
    pub first_epoch: u64,

    /// `txt` is one image id per line; `json` adds a provenance header.
    #[arg(long, value_enum, default_value = "txt")]
    pub format: SampleFormat,

    /// Directory receiving one file per epoch. Without it epochs are streamed
    /// to stdout (JSON Lines for `--format json`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub images: usize,

    /// Number of categories (implied by --image-counts).
    #[arg(long, required_unless_present = "image_counts")]
    pub categories: Option<usize>,

    /// Zipf exponent for per-category image counts.
    #[arg(long, conflicts_with = "image_counts", required_unless_present = "image_counts")]
    pub zipf: Option<f64>,

    /// Explicit per-category image counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub image_counts: Option<Vec<usize>>,

    /// Instances per image occurrence (default 1).
    #[arg(long, conflicts_with_all = ["instances_geometric", "instances"])]
    pub instances_constant: Option<u32>,

    /// Instances per occurrence drawn as 1 + Geometric(p).
    #[arg(long, conflicts_with = "instances")]
    pub instances_geometric: Option<f64>,

    /// Explicit per-category instances per occurrence, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub instances: Option<Vec<u32>>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// `method[:t]`, repeatable. Defaults to rfs and irfs-geometric at t=0.001.
    #[arg(long = "config", value_parser = parse_config)]
    pub configs: Vec<SamplerConfig>,

    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,

    /// Emit the per-category delta between two config indices instead, e.g. `0,1`.
    #[arg(long, value_delimiter = ',', num_args = 1, value_names = ["A,B"])]
    pub diff: Option<Vec<usize>>,

    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !t.is_finite() || t < 0.0 {
        return Err(format!("threshold must be finite and non-negative, got {s}"));
    }
    Ok(t)
}

fn parse_config(s: &str) -> Result<SamplerConfig, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failed invocation, tagged with its exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(Error),
    #[error("internal error: {0}")]
    Internal(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::InvalidConfig(msg) => CliError::Usage(msg),
            e @ Error::IndexOutOfRange { .. } => CliError::Usage(e.to_string()),
            e @ Error::ProvenanceMismatch { .. } => CliError::Internal(e),
            e => CliError::Input(e),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(err: io::Error) -> Self {
        CliError::Input(Error::Io(err))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(Error::Io(io::Error::other(e))))?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Analyze(args) => analyze(args),
        Command::Factors(args) => factors(args),
        Command::Sample(args) => sample(args),
        Command::Synth(args) => synth(args),
        Command::Report(args) => report(args),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(input: &InputArgs) -> Result<Dataset, CliError> {
    let ds = load_dataset(&input.input, !input.lenient)?;
    if ds.dropped_annotations() > 0 {
        eprintln!(
            "warning: dropped {} annotations with dangling references",
            ds.dropped_annotations()
        );
    }
    Ok(ds)
}

fn image_table(ds: &Dataset, cfg: &SamplerConfig) -> Result<ImageRepeatTable, CliError> {
    let ft = compute_frequencies(ds)?;
    let rft = compute_repeat_factors(&ft, cfg)?;
    Ok(image_repeat_factors(ds, &rft)?)
}

fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let ds = load(&args.input)?;
    let ft = compute_frequencies(&ds)?;
    let mut out = open_output(args.output.as_deref())?;
    match args.format {
        TableFormat::Json => ft.write_json(&mut out)?,
        TableFormat::Csv => ft.write_csv(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn factors(args: FactorsArgs) -> Result<(), CliError> {
    let ds = load(&args.input)?;
    let cfg = args.method.config();
    let ft = compute_frequencies(&ds)?;
    let rft = compute_repeat_factors(&ft, &cfg)?;
    let irt = image_repeat_factors(&ds, &rft)?;
    let mut out = open_output(args.output.as_deref())?;
    match args.format {
        TableFormat::Json => write_factors_json(&rft, &irt, &mut out)?,
        TableFormat::Csv => rft.write_csv(&mut out)?,
    }
    out.flush()?;
    if let Some(path) = &args.image_output {
        let mut w = open_output(Some(path))?;
        irt.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn sample(args: SampleArgs) -> Result<(), CliError> {
    if args.epochs == 0 {
        return Err(CliError::Usage("--epochs must be at least 1".into()));
    }
    let last = args
        .first_epoch
        .checked_add(args.epochs)
        .ok_or_else(|| CliError::Usage("epoch range overflows".into()))?;
    let ds = load(&args.input)?;
    let irt = image_table(&ds, &args.method.config())?;

    if let Some(dir) = &args.output {
        fs::create_dir_all(dir)?;
    }
    let mut stdout = match args.output {
        None => Some(open_output(None)?),
        Some(_) => None,
    };
    // One epoch in memory at a time.
    for epoch in args.first_epoch..last {
        let sample = sample_epoch(&irt, args.seed, epoch)?;
        match (&args.output, stdout.as_mut()) {
            (Some(dir), _) => {
                let ext = match args.format {
                    SampleFormat::Txt => "txt",
                    SampleFormat::Json => "json",
                };
                let mut w = open_output(Some(&dir.join(format!("epoch_{epoch:05}.{ext}"))))?;
                match args.format {
                    SampleFormat::Txt => sample.write_text(&mut w)?,
                    SampleFormat::Json => sample.write_json(&mut w)?,
                }
                w.flush()?;
            }
            (None, Some(w)) => match args.format {
                SampleFormat::Txt => sample.write_text(w)?,
                SampleFormat::Json => sample.write_json_line(w)?,
            },
            (None, None) => unreachable!(),
        }
    }
    if let Some(mut w) = stdout {
        w.flush()?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let (image_count_law, num_categories) = match (&args.image_counts, args.zipf) {
        (Some(counts), _) => {
            if let Some(n) = args.categories.filter(|&n| n != counts.len()) {
                return Err(CliError::Usage(format!(
                    "--categories {n} disagrees with {} --image-counts",
                    counts.len()
                )));
            }
            (ImageCountLaw::Explicit(counts.clone()), counts.len())
        }
        (None, Some(exponent)) => (
            ImageCountLaw::Zipf { exponent },
            args.categories.expect("required by clap"),
        ),
        (None, None) => unreachable!("required by clap"),
    };
    let instances_law = match (&args.instances, args.instances_geometric, args.instances_constant) {
        (Some(list), _, _) => InstancesLaw::Explicit(list.clone()),
        (None, Some(p), _) => InstancesLaw::Geometric(p),
        (None, None, k) => InstancesLaw::Constant(k.unwrap_or(1)),
    };
    let spec = SynthSpec {
        num_categories,
        num_images: args.images,
        image_count_law,
        instances_law,
        seed: args.seed,
    };
    let ds = generate(&spec).map_err(|e| match e {
        Error::InfeasibleSpec(msg) => CliError::Usage(format!("infeasible synthetic spec: {msg}")),
        other => other.into(),
    })?;
    let file = File::create(&args.output)?;
    ds.write_json(file)?;
    eprintln!(
        "wrote {} images, {} annotations, {} categories (digest {})",
        ds.image_count(),
        ds.instance_count(),
        ds.category_count(),
        ds.source_digest()
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), CliError> {
    let configs = if args.configs.is_empty() {
        vec![
            SamplerConfig::new(Method::Rfs, DEFAULT_THRESHOLD)?,
            SamplerConfig::default(),
        ]
    } else {
        args.configs
    };
    let ds = load(&args.input)?;
    let report = build_report(&ds, &configs)?;
    let mut out = open_output(args.output.as_deref())?;
    match args.diff.as_deref() {
        Some(&[a, b]) => {
            let diff = diff_methods(&report, a, b)?;
            match args.format {
                ReportFormat::Text => out.write_all(diff.render_text().as_bytes())?,
                ReportFormat::Json => diff.write_json(&mut out)?,
                ReportFormat::Csv => diff.write_csv(&mut out)?,
            }
        }
        Some(_) => return Err(CliError::Usage("--diff takes exactly two indices, e.g. 0,1".into())),
        None => match args.format {
            ReportFormat::Text => out.write_all(report.render_text().as_bytes())?,
            ReportFormat::Json => report.write_json(&mut out)?,
            ReportFormat::Csv => report.write_csv(&mut out)?,
        },
    }
    out.flush()?;
    Ok(())
}
