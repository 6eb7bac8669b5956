//! `forgery-bench` command-line tool.

mod colormap;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forgery_bench::benchmark::{self, BenchmarkConfig};
use forgery_bench::datasets::{self, DatasetDescriptor, DatasetError};
use forgery_bench::image_io::{self, ImageTensor};
use forgery_bench::methods::{self, MethodError, MethodOutput};
use forgery_bench::metrics::load_metrics;
use ndarray::{Array2, Array3};

#[derive(Parser)]
#[command(name = "forgery-bench", version, about = "Run and benchmark image-forgery detectors")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method on one image.
    Run(RunArgs),
    /// Evaluate a method on a dataset and write metric reports.
    Benchmark(BenchmarkArgs),
    /// Not supported: the built-in methods have no weights.
    #[command(name = "download_weights")]
    DownloadWeights(StubArgs),
    /// Not supported: the built-in methods have no weights.
    #[command(name = "adapt_weights")]
    AdaptWeights(StubArgs),
}

#[derive(Args)]
struct MethodArgs {
    /// JSON file with the method configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted and ignored; the built-in methods run on the CPU.
    #[arg(long)]
    device: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    method: String,
    image_path: PathBuf,
    /// Folder receiving `<image stem>/heatmap.png`, `mask.png`, ...
    #[arg(long)]
    output_folder: Option<PathBuf>,
    /// Also write the heatmap blended over the image.
    #[arg(long)]
    overlay: bool,
    /// Write a side-by-side panel PNG (headless stand-in for a plot window).
    #[arg(long, overrides_with = "no_show_plot")]
    show_plot: bool,
    #[arg(long, overrides_with = "show_plot")]
    no_show_plot: bool,
    #[command(flatten)]
    method_args: MethodArgs,
}

#[derive(Args)]
struct BenchmarkArgs {
    method: String,
    dataset: String,
    dataset_path: PathBuf,
    /// Comma-separated metric names.
    #[arg(long, value_delimiter = ',', default_value = "auroc,f1,f1_weighted_v1,f1_weighted_v2")]
    metrics: Vec<String>,
    #[arg(long)]
    tampered_only: bool,
    #[arg(long, default_value = "output")]
    output_folder: PathBuf,
    #[arg(long)]
    use_existing_output: bool,
    /// Dataset descriptor JSON overriding the built-in layout.
    #[arg(long)]
    dataset_config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Report folder timestamp (defaults to the current UTC time).
    #[arg(long)]
    timestamp: Option<String>,
    #[arg(long)]
    no_save_outputs: bool,
    #[arg(long)]
    save_extra_outputs: bool,
    #[command(flatten)]
    method_args: MethodArgs,
}

#[derive(Args)]
struct StubArgs {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    rest: Vec<String>,
}

enum CliError {
    Usage(String),
    Failure(String),
}

impl From<MethodError> for CliError {
    fn from(e: MethodError) -> Self {
        match e {
            MethodError::UnknownMethod { .. } | MethodError::InvalidConfig { .. } => CliError::Usage(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::UnknownDataset { .. } | DatasetError::InvalidDescriptor(_) | DatasetError::InvalidLoadKeys(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Failure(other.to_string()),
        }
    }
}

fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Benchmark(args) => bench(args, cli.verbose),
        Command::DownloadWeights(_) | Command::AdaptWeights(_) => {
            Err(CliError::Failure("not supported in this build".into()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn method_config(args: &MethodArgs) -> Result<serde_json::Value, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => serde_json::json!({}),
    };
    if let (Some(device), Some(obj)) = (&args.device, config.as_object_mut()) {
        obj.insert("device".into(), serde_json::Value::String(device.clone()));
    }
    Ok(config)
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let (method, pipeline) = methods::load_method(&args.method, &method_config(&args.method_args)?)?;
    let wants_files = args.overlay || args.show_plot;
    if wants_files && args.output_folder.is_none() {
        return Err(CliError::Usage("--overlay and --show-plot need --output-folder".into()));
    }
    let (data, size) = datasets::load_image_data(&args.image_path, &pipeline.inputs)?;
    let data = pipeline.run(&data).map_err(failure)?;
    let prediction = method.predict(&data)?;
    let output = prediction.output;
    output.validate(Some(size))?;

    println!("method: {}", method.name());
    println!("image: {}", args.image_path.display());
    if let Some(d) = output.detection {
        println!("detection: {d}");
    }
    let Some(folder) = &args.output_folder else {
        return Ok(());
    };
    let stem = args
        .image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let dir = folder.join(stem);
    std::fs::create_dir_all(&dir).map_err(failure)?;
    if let Some(h) = &output.heatmap {
        let path = dir.join("heatmap.png");
        write_gray(&path, &h.mapv(|v| (v * 255.0).round() as u8))?;
        println!("heatmap: {}", path.display());
    }
    if let Some(m) = &output.mask {
        let path = dir.join("mask.png");
        write_gray(&path, &m.mapv(|v| v * 255))?;
        println!("mask: {}", path.display());
    }
    if wants_files {
        let image = image_io::read_image(&args.image_path).map_err(failure)?;
        let map = display_map(&output);
        if args.overlay {
            let path = dir.join("overlay.png");
            write_rgb(&path, &overlay(&image, &map))?;
            println!("overlay: {}", path.display());
        }
        if args.show_plot {
            let path = dir.join("panel.png");
            write_rgb(&path, &panel(&image, &output, &map))?;
            println!("panel: {}", path.display());
        }
    }
    Ok(())
}

/// The map shown in overlays: the heatmap, else the mask.
fn display_map(output: &MethodOutput) -> Array2<f32> {
    match (&output.heatmap, &output.mask) {
        (Some(h), _) => h.clone(),
        (None, Some(m)) => m.mapv(f32::from),
        (None, None) => Array2::zeros((0, 0)),
    }
}

fn rgb_at(image: &ImageTensor, y: usize, x: usize) -> [u8; 3] {
    let d = image.data();
    if image.channels() == 1 {
        [d[[0, y, x]]; 3]
    } else {
        [d[[0, y, x]], d[[1, y, x]], d[[2, y, x]]]
    }
}

/// Colormapped `map` blended with α = 0.5 over the image.
fn overlay(image: &ImageTensor, map: &Array2<f32>) -> Array3<u8> {
    let (h, w) = image.size();
    Array3::from_shape_fn((3, h, w), |(c, y, x)| {
        let base = rgb_at(image, y, x)[c];
        match map.get((y, x)) {
            Some(&v) => ((u16::from(base) + u16::from(colormap::viridis(v)[c]) + 1) / 2) as u8,
            None => base,
        }
    })
}

/// Image, colormapped heatmap and mask side by side.
fn panel(image: &ImageTensor, output: &MethodOutput, map: &Array2<f32>) -> Array3<u8> {
    let (h, w) = image.size();
    let mut tiles: Vec<Box<dyn Fn(usize, usize) -> [u8; 3]>> = vec![Box::new(|y, x| rgb_at(image, y, x))];
    if !map.is_empty() {
        tiles.push(Box::new(|y, x| colormap::viridis(map[[y, x]])));
    }
    if let Some(m) = &output.mask {
        tiles.push(Box::new(move |y, x| [m[[y, x]] * 255; 3]));
    }
    Array3::from_shape_fn((3, h, w * tiles.len()), |(c, y, x)| tiles[x / w](y, x % w)[c])
}

fn write_gray(path: &Path, a: &Array2<u8>) -> Result<(), CliError> {
    let (h, w) = a.dim();
    let t = ImageTensor::new(a.clone().into_shape_with_order((1, h, w)).map_err(failure)?).map_err(failure)?;
    image_io::write_png(path, &t).map_err(failure)
}

fn write_rgb(path: &Path, a: &Array3<u8>) -> Result<(), CliError> {
    image_io::write_png(path, &ImageTensor::new(a.clone()).map_err(failure)?).map_err(failure)
}

fn bench(args: &BenchmarkArgs, verbose: u8) -> Result<(), CliError> {
    let (method, pipeline) = methods::load_method(&args.method, &method_config(&args.method_args)?)?;
    let metrics = load_metrics(&args.metrics).map_err(|e| CliError::Usage(e.to_string()))?;
    let descriptor = match &args.dataset_config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            DatasetDescriptor {
                root: args.dataset_path.clone(),
                ..DatasetDescriptor::from_json(&text)?
            }
        }
        None => datasets::registry_descriptor(&args.dataset, &args.dataset_path)?,
    };
    let dataset = datasets::load_dataset(&descriptor, Some(&pipeline), args.tampered_only, &[] as &[&str])?;
    if dataset.is_empty() {
        return Err(CliError::Failure("no images".into()));
    }
    let config = BenchmarkConfig {
        save_method_outputs: !args.no_save_outputs,
        save_extra_outputs: args.save_extra_outputs,
        save_metrics: true,
        output_folder: args.output_folder.clone(),
        use_existing_output: args.use_existing_output,
        verbose,
        device_hint: args.method_args.device.clone(),
        workers: args.workers,
        timestamp: args.timestamp.clone(),
    };
    let result = benchmark::run(method.as_ref(), &dataset, &metrics, &config).map_err(failure)?;
    println!("images: {}", dataset.len());
    for (report, path) in result.reports.iter().zip(&result.report_paths) {
        println!("report: {}", path.display());
        eprintln!(
            "{}: {} evaluated, {} skipped",
            report.output_type, report.images_evaluated, report.images_skipped
        );
    }
    for path in &result.roc_paths {
        println!("roc: {}", path.display());
    }
    Ok(())
}
