//! Method × dataset × metrics evaluation with cached outputs and JSON reports.
//!
//! ```text
//! {output_folder}/{method}/{dataset}/
//!     metrics/{timestamp}_{dataset_mode}/{output_type}_report.json
//!     outputs/{image_name}.phz
//! ```

mod phz;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, DatasetError};
use crate::methods::{ExtraArray, Method, MethodOutput, OutputType};
use crate::metrics::{Metric, MetricError, MetricSet, RocCurve};

pub use phz::{decode as decode_phz, encode as encode_phz, load_output, save_output, ArrayEntry, Dtype, Manifest};

#[derive(thiserror::Error, Debug)]
pub enum BenchmarkError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("archive error: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error("corrupt output {path}: {reason}")]
    CorruptOutput { path: PathBuf, reason: String },
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    TamperedOnly,
    Full,
}

impl DatasetMode {
    pub fn from_flag(tampered_only: bool) -> Self {
        if tampered_only {
            DatasetMode::TamperedOnly
        } else {
            DatasetMode::Full
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetMode::TamperedOnly => "tampered_only",
            DatasetMode::Full => "full",
        }
    }
}

impl fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn report_path(
    output_folder: impl AsRef<Path>,
    method: &str,
    dataset: &str,
    timestamp: &str,
    dataset_mode: &str,
    output_type: &str,
) -> PathBuf {
    output_folder
        .as_ref()
        .join(method)
        .join(dataset)
        .join("metrics")
        .join(format!("{timestamp}_{dataset_mode}"))
        .join(format!("{output_type}_report.json"))
}

pub fn outputs_dir(output_folder: impl AsRef<Path>, method: &str, dataset: &str) -> PathBuf {
    output_folder.as_ref().join(method).join(dataset).join("outputs")
}

/// Path of the method-specific diagnostics stored next to a cached output.
pub fn extras_path(output_folder: impl AsRef<Path>, method: &str, dataset: &str, image_name: &str) -> PathBuf {
    outputs_dir(output_folder, method, dataset).join(format!("{image_name}.extra.phz"))
}

/// `YYYYMMDDTHHMMSS` in UTC.
pub fn timestamp_now() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S").to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub save_method_outputs: bool,
    /// Also store method diagnostics (`*.extra.phz`). Outputs are then
    /// obtained through `predict` rather than `benchmark`.
    pub save_extra_outputs: bool,
    pub save_metrics: bool,
    pub output_folder: PathBuf,
    pub use_existing_output: bool,
    /// 0 quiet, 1 summary, 2 per image.
    pub verbose: u8,
    /// Accepted for compatibility; the built-in methods run on the CPU.
    pub device_hint: Option<String>,
    /// Images evaluated concurrently.
    pub workers: usize,
    /// Report folder timestamp; the current UTC time when absent.
    pub timestamp: Option<String>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            save_method_outputs: true,
            save_extra_outputs: false,
            save_metrics: true,
            output_folder: PathBuf::from("output"),
            use_existing_output: false,
            verbose: 1,
            device_hint: None,
            workers: 1,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub dataset: String,
    pub dataset_mode: DatasetMode,
    pub output_type: OutputType,
    pub metrics: BTreeMap<String, Option<f64>>,
    pub images_evaluated: usize,
    pub images_skipped: usize,
    pub skip_reasons: BTreeMap<String, usize>,
}

impl MetricReport {
    /// Pretty JSON with sorted keys and shortest round-trip floats.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, BenchmarkError> {
        serde_json::from_str(text).map_err(|e| BenchmarkError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub reports: Vec<MetricReport>,
    /// Written report files, in the order of `reports`.
    pub report_paths: Vec<PathBuf>,
    /// ROC sidecar files written next to the reports.
    pub roc_paths: Vec<PathBuf>,
    pub method_calls: usize,
    pub cache_hits: usize,
}

/// Debug name of an error variant, for grouping skip reasons.
fn variant<E: fmt::Debug>(e: &E) -> String {
    let text = format!("{e:?}");
    text.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect()
}

enum Outcome {
    Skipped(String),
    Done {
        sets: Vec<Result<MetricSet, String>>,
        called: bool,
        cached: bool,
    },
}

struct Runner<'a> {
    method: &'a dyn Method,
    dataset: &'a Dataset,
    config: &'a BenchmarkConfig,
    templates: Vec<MetricSet>,
    outputs: PathBuf,
}

impl Runner<'_> {
    fn cached(&self, path: &Path) -> Option<MethodOutput> {
        if !self.config.use_existing_output || !path.exists() {
            return None;
        }
        match load_output(path) {
            Ok(out) => Some(out),
            Err(e) => {
                log::warn!("ignoring cached output: {e}");
                None
            }
        }
    }

    fn compute(&self, name: &str, data: &crate::data::DataMap) -> Result<MethodOutput, String> {
        if self.config.save_extra_outputs {
            let p = self.method.predict(data).map_err(|e| format!("method_error: {}", variant(&e)))?;
            if !p.extras.is_empty() {
                let path = extras_path(&self.config.output_folder, self.method.name(), self.dataset.name(), name);
                let written = encode_phz(&p.extras, None).and_then(|b| phz::write_atomic(&path, &b));
                if let Err(e) = written {
                    log::warn!("could not store extras for {name}: {e}");
                }
            }
            Ok(p.output)
        } else {
            self.method
                .benchmark(data)
                .map_err(|e| format!("method_error: {}", variant(&e)))
        }
    }

    fn evaluate(&self, index: usize) -> Outcome {
        let name = match self.dataset.image_name(index) {
            Ok(n) => n.to_string(),
            Err(e) => return Outcome::Skipped(format!("load_error: {}", variant(&e))),
        };
        let item = match self.dataset.get(index) {
            Ok(item) => item,
            Err(e) => {
                log::warn!("skipping {name}: {e}");
                return Outcome::Skipped(format!("load_error: {}", variant(&e)));
            }
        };
        let cache = self.outputs.join(format!("{name}.phz"));
        let (output, called, cached) = match self.cached(&cache) {
            Some(out) => (out, false, true),
            None => match self.compute(&name, &item.data) {
                Ok(out) => (out, true, false),
                Err(reason) => {
                    log::warn!("skipping {name}: {reason}");
                    return Outcome::Skipped(reason);
                }
            },
        };
        if let Err(e) = output.validate(Some(item.mask.dim())) {
            log::warn!("skipping {name}: {e}");
            return Outcome::Skipped("invalid_output".into());
        }
        if called && self.config.save_method_outputs {
            if let Err(e) = save_output(&self.outputs, &name, &output) {
                log::warn!("could not cache output for {name}: {e}");
            }
        }
        if self.config.verbose >= 2 {
            log::info!("[{}/{}] {name}", index + 1, self.dataset.len());
        }
        let forged = self.dataset.is_forged(index).unwrap_or(false);
        let sets = self
            .templates
            .iter()
            .map(|t| update(t.clone(), &output, &item.mask, forged))
            .collect();
        Outcome::Done { sets, called, cached }
    }
}

fn update(mut set: MetricSet, output: &MethodOutput, mask: &Array2<u8>, forged: bool) -> Result<MetricSet, String> {
    let missing = || format!("missing_output: {}", set.output_type());
    let result = match set.output_type() {
        OutputType::Heatmap => {
            let h = output.heatmap.as_ref().ok_or_else(missing)?;
            set.update_map(h.view(), mask.view())
        }
        OutputType::Mask => {
            let m = output.mask.as_ref().ok_or_else(missing)?;
            set.update_map(m.mapv(f32::from).view(), mask.view())
        }
        OutputType::Detection => {
            let d = output.detection.ok_or_else(missing)?;
            set.update_detection(d, forged)
        }
    };
    result.map(|_| set).map_err(|e| format!("metric_error: {}", variant(&e)))
}

/// Evaluates `method` on every image of `dataset` and writes one report per
/// output type the method declares. Per-image failures become skips.
pub fn run(
    method: &dyn Method,
    dataset: &Dataset,
    metrics: &[Metric],
    config: &BenchmarkConfig,
) -> Result<BenchmarkRun, BenchmarkError> {
    if config.workers == 0 {
        return Err(BenchmarkError::InvalidConfig("workers must be at least 1".into()));
    }
    if let Some(d) = &config.device_hint {
        log::debug!("device hint `{d}` accepted; running on the CPU");
    }
    let templates: Vec<MetricSet> = method
        .output_types()
        .iter()
        .map(|&t| MetricSet::applicable(t, metrics))
        .collect();
    let outputs = outputs_dir(&config.output_folder, method.name(), dataset.name());
    if config.save_method_outputs || config.save_extra_outputs {
        std::fs::create_dir_all(&outputs)?;
    }
    let runner = Runner {
        method,
        dataset,
        config,
        templates,
        outputs,
    };

    let mut totals = runner.templates.clone();
    let mut reasons: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); totals.len()];
    let (mut method_calls, mut cache_hits) = (0, 0);
    let n = dataset.len();
    let mut start = 0;
    while start < n {
        let end = (start + config.workers).min(n);
        let outcomes: Vec<Outcome> = if config.workers == 1 {
            vec![runner.evaluate(start)]
        } else {
            let r = &runner;
            std::thread::scope(|s| {
                let handles: Vec<_> = (start..end).map(|i| s.spawn(move || r.evaluate(i))).collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            })
        };
        // Merged strictly in index order so reports do not depend on `workers`.
        for outcome in outcomes {
            match outcome {
                Outcome::Skipped(reason) => {
                    for r in &mut reasons {
                        *r.entry(reason.clone()).or_default() += 1;
                    }
                }
                Outcome::Done { sets, called, cached } => {
                    method_calls += usize::from(called);
                    cache_hits += usize::from(cached);
                    for ((total, r), set) in totals.iter_mut().zip(&mut reasons).zip(sets) {
                        match set {
                            Ok(set) => total.merge(&set),
                            Err(reason) => *r.entry(reason).or_default() += 1,
                        }
                    }
                }
            }
        }
        start = end;
    }

    let mode = DatasetMode::from_flag(dataset.tampered_only());
    let timestamp = config.timestamp.clone().unwrap_or_else(timestamp_now);
    let mut run = BenchmarkRun {
        reports: Vec::new(),
        report_paths: Vec::new(),
        roc_paths: Vec::new(),
        method_calls,
        cache_hits,
    };
    for (set, skip_reasons) in totals.iter().zip(reasons) {
        let report = MetricReport {
            method: method.name().to_string(),
            dataset: dataset.name().to_string(),
            dataset_mode: mode,
            output_type: set.output_type(),
            metrics: set.results(),
            images_evaluated: set.updates(),
            images_skipped: n - set.updates(),
            skip_reasons,
        };
        if let Some(k) = set.mauroc_skipped() {
            log::info!("mauroc: {k} single-class images left out");
        }
        if config.save_metrics {
            let path = report_path(
                &config.output_folder,
                method.name(),
                dataset.name(),
                &timestamp,
                mode.as_str(),
                set.output_type().as_str(),
            );
            phz::write_atomic(&path, report.to_json().as_bytes())?;
            if let Some(curve) = set.roc_curve() {
                let roc = path.with_file_name(format!("{}_roc.json", set.output_type()));
                phz::write_atomic(&roc, roc_json(&curve).as_bytes())?;
                run.roc_paths.push(roc);
            }
            run.report_paths.push(path);
        }
        if config.verbose >= 1 {
            log::info!(
                "{} {} {}: {} evaluated, {} skipped",
                report.method,
                report.dataset,
                report.output_type,
                report.images_evaluated,
                report.images_skipped
            );
        }
        run.reports.push(report);
    }
    Ok(run)
}

fn roc_json(curve: &RocCurve) -> String {
    let value = serde_json::to_value(curve).expect("curve serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("curve serializes");
    text.push('\n');
    text
}

/// Reads back diagnostics written with `save_extra_outputs`.
pub fn load_extras(path: impl AsRef<Path>) -> Result<Vec<(String, ExtraArray)>, BenchmarkError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    Ok(decode_phz(&bytes, path)?.0)
}
