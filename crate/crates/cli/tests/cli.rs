use std::path::Path;
use std::process::{Command, Output};

use forgery_bench_testkit as tk;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forgery-bench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture_jpeg(dir: &Path) {
    std::fs::write(dir.join("fixture.jpg"), tk::double_compression_splice(1, 96, 95, 75).jpeg).unwrap();
}

#[test]
fn run_dq_writes_heatmap_and_overlay() {
    let dir = tempfile::tempdir().unwrap();
    fixture_jpeg(dir.path());
    let o = bin(&["run", "dq", "fixture.jpg", "--output-folder", "out", "--overlay"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["heatmap.png", "overlay.png"] {
        let img = image::open(dir.path().join("out/fixture").join(name)).unwrap();
        assert_eq!((img.width(), img.height()), (96, 96));
    }
    assert!(!dir.path().join("out/fixture/panel.png").exists());
    let text = stdout(&o);
    assert!(text.lines().all(|l| l.contains(": ")));
    assert!(text.contains("heatmap: out/fixture/heatmap.png"));
}

#[test]
fn show_plot_writes_a_panel() {
    let dir = tempfile::tempdir().unwrap();
    let s = tk::grid_shift_splice(2, 96);
    s.image.save(dir.path().join("shifted.png")).unwrap();
    let o = bin(&["run", "grid_align", "shifted.png", "--output-folder", "o", "--show-plot"], dir.path());
    assert!(o.status.success());
    let panel = image::open(dir.path().join("o/shifted/panel.png")).unwrap();
    // Image, colormapped mask and binary mask.
    assert_eq!((panel.width(), panel.height()), (288, 96));
    assert!(dir.path().join("o/shifted/mask.png").is_file());
}

#[test]
fn run_grid_align_prints_detection() {
    let dir = tempfile::tempdir().unwrap();
    tk::pristine_decoded(3, 128).save(dir.path().join("p.png")).unwrap();
    let o = bin(&["run", "grid_align", "p.png"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "detection: 0" || l == "detection: 1"), "{text}");
    assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fixture_jpeg(dir.path());
    let o = bin(&["run", "unknown_method", "fixture.jpg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("dq") && err.contains("grid_align") && err.contains("noise_blocks"));
    assert_eq!(bin(&["run", "dq"], dir.path()).status.code(), Some(2));
    assert_eq!(bin(&["run", "dq", "fixture.jpg", "--overlay"], dir.path()).status.code(), Some(2));
}

#[test]
fn processing_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["run", "dq", "missing.jpg"], dir.path()).status.code(), Some(1));
    assert_eq!(bin(&["download_weights", "x"], dir.path()).status.code(), Some(1));
}

#[test]
fn benchmark_prints_one_report_for_dq() {
    let data = tempfile::tempdir().unwrap();
    tk::jpeg_dataset_fixture(data.path(), 3, 1, 64).unwrap();
    let desc = serde_json::json!({
        "name": "synthetic",
        "root": "unused",
        "layout": {"forged_glob": "forged/*.jpg", "pristine_glob": "pristine/*.jpg", "mask_pattern": "masks/{stem}.png"}
    });
    std::fs::write(data.path().join("desc.json"), desc.to_string()).unwrap();
    let o = bin(
        &[
            "benchmark", "dq", "synthetic", ".", "--dataset-config", "desc.json", "--metrics", "f1_weighted_v1",
            "--output-folder", "out", "--timestamp", "20240101T000000",
        ],
        data.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let reports: Vec<&str> = text.lines().filter(|l| l.starts_with("report: ")).collect();
    assert_eq!(reports.len(), 1, "{text}");
    assert!(reports[0].ends_with("heatmap_report.json"));
    let path = data.path().join(reports[0].trim_start_matches("report: "));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(report["images_evaluated"], 4);
}

#[test]
fn benchmark_rejects_unknown_metric_and_empty_selection() {
    let dir = tempfile::tempdir().unwrap();
    tk::jpeg_dataset_fixture(dir.path(), 0, 2, 32).unwrap();
    let desc = serde_json::json!({
        "name": "pristine_only",
        "root": ".",
        "layout": {"forged_glob": "forged/*.jpg", "pristine_glob": "pristine/*.jpg", "mask_pattern": "masks/{stem}.png"}
    });
    std::fs::write(dir.path().join("d.json"), desc.to_string()).unwrap();
    let o = bin(&["benchmark", "dq", "x", ".", "--dataset-config", "d.json", "--metrics", "f1,bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = bin(&["benchmark", "dq", "x", ".", "--dataset-config", "d.json", "--tampered-only"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no images"));
    assert_eq!(bin(&["benchmark", "dq", "imd2020", "."], dir.path()).status.code(), Some(2));
}
