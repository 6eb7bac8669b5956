use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use forgery_bench::benchmark::{load_extras, run, BenchmarkConfig, BenchmarkRun};
use forgery_bench::data::DataMap;
use forgery_bench::datasets::{load_dataset, Dataset, DatasetDescriptor, LayoutAdapter, MaskRule};
use forgery_bench::methods::{load_method, Method, MethodError, OutputType, Prediction};
use forgery_bench::metrics::load_metrics;
use forgery_bench::preprocessing::PipelineSpec;
use forgery_bench_testkit as tk;

/// Forwards to a real method, counting calls and optionally failing after a budget.
struct Counting {
    inner: Box<dyn Method>,
    calls: AtomicUsize,
    panic_after: Option<usize>,
}

impl Counting {
    fn new(name: &str, panic_after: Option<usize>) -> Self {
        Self {
            inner: load_method(name, &serde_json::json!({})).unwrap().0,
            calls: AtomicUsize::new(0),
            panic_after,
        }
    }
}

impl Method for Counting {
    fn name(&self) -> &'static str {
        self.inner.name()
    }
    fn output_types(&self) -> &'static [OutputType] {
        self.inner.output_types()
    }
    fn pipeline(&self) -> PipelineSpec {
        self.inner.pipeline()
    }
    fn predict(&self, d: &DataMap) -> Result<Prediction, MethodError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.panic_after.is_some_and(|k| n >= k) {
            panic!("simulated interruption");
        }
        self.inner.predict(d)
    }
}

fn fixture(root: &Path, forged: usize, pristine: usize) {
    tk::jpeg_dataset_fixture(root, forged, pristine, 64).unwrap();
}

fn dataset(root: &Path, method: &dyn Method, tampered_only: bool) -> Dataset {
    let desc = DatasetDescriptor {
        name: "synthetic".into(),
        root: root.to_path_buf(),
        layout: LayoutAdapter {
            forged_glob: "forged/*.jpg".into(),
            pristine_glob: Some("pristine/*.jpg".into()),
            mask_pattern: "masks/{stem}.png".into(),
            forged_suffix: None,
        },
        counts: None,
        mask_rule: MaskRule::Default,
    };
    load_dataset(&desc, Some(&method.pipeline()), tampered_only, &["image"]).unwrap()
}

fn config(out: &Path, timestamp: &str) -> BenchmarkConfig {
    BenchmarkConfig {
        output_folder: out.to_path_buf(),
        timestamp: Some(timestamp.into()),
        verbose: 0,
        ..Default::default()
    }
}

fn go(method: &dyn Method, ds: &Dataset, metrics: &[&str], cfg: &BenchmarkConfig) -> BenchmarkRun {
    run(method, ds, &load_metrics(metrics).unwrap(), cfg).unwrap()
}

fn read(paths: &[PathBuf]) -> Vec<Vec<u8>> {
    paths.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

const ALL: [&str; 6] = ["f1", "auroc", "mauroc", "f1_weighted_v1", "mcc_weighted_v2", "roc"];

#[test]
fn repeated_runs_are_byte_identical() {
    let data = tempfile::tempdir().unwrap();
    fixture(data.path(), 4, 2);
    let out = tempfile::tempdir().unwrap();
    let m = Counting::new("dq", None);
    let ds = dataset(data.path(), &m, false);
    assert_eq!(ds.len(), 6);
    let a = go(&m, &ds, &ALL, &config(out.path(), "20240101T000000"));
    let b = go(&m, &ds, &ALL, &config(out.path(), "20240101T000001"));
    assert_eq!(m.calls.load(Ordering::SeqCst), 12);
    assert_eq!(read(&a.report_paths), read(&b.report_paths));
    assert_eq!(a.reports[0].images_evaluated, 6);
    assert_eq!(a.roc_paths.len(), 1);
}

#[test]
fn interrupted_run_resumes_to_the_same_bytes() {
    let data = tempfile::tempdir().unwrap();
    fixture(data.path(), 4, 2);
    let full_out = tempfile::tempdir().unwrap();
    let reference = Counting::new("dq", None);
    let ds = dataset(data.path(), &reference, false);
    let full = go(&reference, &ds, &ALL, &config(full_out.path(), "T"));

    let out = tempfile::tempdir().unwrap();
    let flaky = Counting::new("dq", Some(3));
    let interrupted = catch_unwind(AssertUnwindSafe(|| go(&flaky, &ds, &ALL, &config(out.path(), "T"))));
    assert!(interrupted.is_err());
    let cached = std::fs::read_dir(out.path().join("dq/synthetic/outputs")).unwrap().count();
    assert_eq!(cached, 3);

    let resumed_method = Counting::new("dq", None);
    let mut cfg = config(out.path(), "T");
    cfg.use_existing_output = true;
    let resumed = go(&resumed_method, &ds, &ALL, &cfg);
    assert_eq!(resumed_method.calls.load(Ordering::SeqCst), 3);
    assert_eq!(resumed.cache_hits, 3);
    assert_eq!(read(&resumed.report_paths), read(&full.report_paths));

    let again = Counting::new("dq", None);
    let cached_run = go(&again, &ds, &ALL, &cfg);
    assert_eq!(again.calls.load(Ordering::SeqCst), 0);
    assert_eq!(read(&cached_run.report_paths), read(&full.report_paths));
}

#[test]
fn directory_layout_matches_the_tree() {
    let data = tempfile::tempdir().unwrap();
    fixture(data.path(), 3, 1);
    let out = tempfile::tempdir().unwrap();
    let m = Counting::new("dq", None);
    let ds = dataset(data.path(), &m, true);
    let r = go(&m, &ds, &["f1_weighted_v1"], &config(out.path(), "20240101T000000"));
    let rel: Vec<String> = r
        .report_paths
        .iter()
        .map(|p| p.strip_prefix(out.path()).unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(rel, ["dq/synthetic/metrics/20240101T000000_tampered_only/heatmap_report.json"]);
    let pattern = regex_like(&rel[0]);
    assert!(pattern, "{}", rel[0]);
    for i in 0..3 {
        assert!(out.path().join(format!("dq/synthetic/outputs/img_{i:02}.phz")).is_file());
    }
}

/// `{method}/{dataset}/metrics/{timestamp}_{mode}/{type}_report.json`
fn regex_like(rel: &str) -> bool {
    let parts: Vec<&str> = rel.split('/').collect();
    parts.len() == 5
        && parts[2] == "metrics"
        && parts[3].split_once('_').is_some_and(|(ts, mode)| {
            ts.len() == 15 && ts.as_bytes()[8] == b'T' && ["tampered_only", "full"].contains(&mode)
        })
        && parts[4].strip_suffix("_report.json").is_some_and(|t| ["heatmap", "mask", "detection"].contains(&t))
}

#[test]
fn grid_align_writes_mask_and_detection_reports() {
    let data = tempfile::tempdir().unwrap();
    fixture(data.path(), 2, 2);
    let out = tempfile::tempdir().unwrap();
    let m = Counting::new("grid_align", None);
    let ds = dataset(data.path(), &m, false);
    let r = go(&m, &ds, &["f1_weighted_v1", "f1", "auroc"], &config(out.path(), "T"));
    let names: Vec<_> = r.report_paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["mask_report.json", "detection_report.json"]);
    let detection = &r.reports[1];
    assert_eq!(detection.output_type, OutputType::Detection);
    assert!(!detection.metrics.contains_key("f1_weighted_v1"));
    assert!(detection.metrics.contains_key("auroc"));
    assert_eq!(detection.images_evaluated, 4);
}

#[test]
fn parallel_matches_sequential() {
    let data = tempfile::tempdir().unwrap();
    fixture(data.path(), 4, 2);
    let out = tempfile::tempdir().unwrap();
    let m = Counting::new("dq", None);
    let ds = dataset(data.path(), &m, false);
    let mut cfg = config(out.path(), "seq");
    cfg.save_method_outputs = false;
    let seq = go(&m, &ds, &ALL, &cfg);
    cfg.workers = 4;
    cfg.timestamp = Some("par".into());
    let par = go(&m, &ds, &ALL, &cfg);
    assert_eq!(read(&seq.report_paths), read(&par.report_paths));
    assert!(!out.path().join("dq/synthetic/outputs").exists());
}

#[test]
fn failing_images_are_skipped_with_reasons() {
    let data = tempfile::tempdir().unwrap();
    fixture(data.path(), 2, 1);
    std::fs::write(data.path().join("forged/img_01.jpg"), b"\xff\xd8 truncated").unwrap();
    let out = tempfile::tempdir().unwrap();
    let m = Counting::new("dq", None);
    let ds = dataset(data.path(), &m, false);
    let r = go(&m, &ds, &["f1"], &config(out.path(), "T"));
    let report = &r.reports[0];
    assert_eq!(report.images_evaluated, 2);
    assert_eq!(report.images_skipped, 1);
    assert_eq!(report.skip_reasons.values().sum::<usize>(), 1);
    assert!(report.skip_reasons.keys().all(|k| k.starts_with("load_error")));
}

#[test]
fn extras_are_stored_beside_outputs() {
    let data = tempfile::tempdir().unwrap();
    fixture(data.path(), 1, 0);
    let out = tempfile::tempdir().unwrap();
    let m = Counting::new("dq", None);
    let ds = dataset(data.path(), &m, true);
    let mut cfg = config(out.path(), "T");
    cfg.save_extra_outputs = true;
    go(&m, &ds, &["f1"], &cfg);
    let extras = load_extras(out.path().join("dq/synthetic/outputs/img_00.extra.phz")).unwrap();
    assert_eq!(extras[0].0, "block_scores");
}
