use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;

fn visnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_visnav"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn generate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = visnav(&["generate", "--out", p(d), "--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = read_dir_sorted(&a);
    assert_eq!(files, read_dir_sorted(&b));
    assert_eq!(
        files.iter().filter(|(n, _)| n.ends_with(".pgm")).count(),
        60
    );
    let truth = fs::read_to_string(a.join("truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 61);

    let c = tmp.path().join("c");
    visnav(&["generate", "--out", p(&c), "--seed", "8"]);
    assert_ne!(read_dir_sorted(&a), read_dir_sorted(&c));
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), r#"{"scene": {"noise_sigma": -1.0}}"#);
    let o = visnav(&["generate", "--config", &cfg, "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise_sigma"));

    let cfg = write_config(tmp.path(), r#"{"scene": {"noise": 1.0}}"#);
    assert_eq!(
        code(&visnav(&["generate", "--config", &cfg, "--out", p(&out)])),
        2
    );
    let cfg = write_config(tmp.path(), r#"{"colour": true}"#);
    assert_eq!(
        code(&visnav(&["generate", "--config", &cfg, "--out", p(&out)])),
        2
    );

    assert_eq!(code(&visnav(&["generate"])), 2, "missing output directory");
    assert_eq!(
        code(&visnav(&[
            "simulate",
            "--out",
            p(&out),
            "--scenario",
            "docking"
        ])),
        2
    );
    let missing = tmp.path().join("nope.json");
    assert_eq!(
        code(&visnav(&[
            "generate",
            "--config",
            p(&missing),
            "--out",
            p(&out)
        ])),
        2
    );
}

#[test]
fn unwritable_output_exits_2() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("file");
    fs::write(&file, b"x").unwrap();
    let o = visnav(&["generate", "--out", p(&file.join("sub"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_image_directory_exits_2() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&visnav(&["detect", p(&empty), "--out", p(&out)])), 2);
    assert_eq!(code(&visnav(&["track", p(&empty), "--out", p(&out)])), 2);
    assert_eq!(
        code(&visnav(&[
            "track",
            p(&tmp.path().join("absent")),
            "--out",
            p(&out)
        ])),
        2
    );
}

#[test]
fn tracks_a_generated_sequence() {
    let tmp = TempDir::new().unwrap();
    let (seq, out) = (tmp.path().join("seq"), tmp.path().join("track"));
    assert_eq!(code(&visnav(&["generate", "--out", p(&seq)])), 0);
    let start = Instant::now();
    let o = visnav(&["track", p(&seq), "--out", p(&out), "--redetect-every", "30"]);
    let per_frame = start.elapsed().as_secs_f64() / 60.0;
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(per_frame < 1.0, "{per_frame} s per frame");

    let csv = fs::read_to_string(out.join("track.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 60);
    assert!(rows.iter().all(|r| !r.contains(",lost,")));
    assert!(rows[30].contains(",redetected,"), "{}", rows[30]);

    // overlays carry the wireframe at full scale
    let overlay = visnav::image::load(out.join("overlay").join("0010.pgm")).unwrap();
    let frame = visnav::image::load(seq.join("0010.pgm")).unwrap();
    let burned = overlay
        .pixels()
        .iter()
        .zip(frame.pixels())
        .filter(|(o, f)| **o == 255 && **f != 255)
        .count();
    assert!(burned > 50, "{burned}");

    let truth = fs::read_to_string(seq.join("truth.csv")).unwrap();
    for (row, gt) in rows.iter().zip(truth.lines().skip(1)) {
        let r: Vec<&str> = row.split(',').collect();
        let g: Vec<&str> = gt.split(',').collect();
        let dx: f64 = r[3].parse::<f64>().unwrap() - g[2].parse::<f64>().unwrap();
        let dy: f64 = r[4].parse::<f64>().unwrap() - g[3].parse::<f64>().unwrap();
        assert!(dx.hypot(dy) < 0.5, "{row}");
    }
}

#[test]
fn star_only_frames_report_no_target() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"scene": {"target": false, "stars": {"count": 80}}, "sequence": {"frames": 5}}"#,
    );
    let (seq, out) = (tmp.path().join("seq"), tmp.path().join("det"));
    let o = visnav(&["generate", "--config", &cfg, "--out", p(&seq)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(code(&visnav(&["detect", p(&seq), "--out", p(&out)])), 3);
    let csv = fs::read_to_string(out.join("detections.csv")).unwrap();
    assert_eq!(
        csv.lines()
            .skip(1)
            .filter(|l| l.contains(",no-target,"))
            .count(),
        5
    );
    assert_eq!(code(&visnav(&["track", p(&seq), "--out", p(&out)])), 3);
}

#[test]
fn simulate_forced_translation_reduces_measurement_error() {
    let tmp = TempDir::new().unwrap();
    let (img, noise) = (tmp.path().join("img"), tmp.path().join("noise"));

    let start = Instant::now();
    let o = visnav(&[
        "simulate",
        "--scenario",
        "forced-translation",
        "--out",
        p(&img),
    ]);
    let t_img = start.elapsed().as_secs_f64();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&img);
    assert!(
        s["rms_estimate"].as_f64().unwrap() < s["rms_measurement"].as_f64().unwrap(),
        "{s}"
    );

    let start = Instant::now();
    let o = visnav(&[
        "simulate",
        "--scenario",
        "forced-translation",
        "--mode",
        "measurement-noise-model",
        "--out",
        p(&noise),
    ]);
    let t_noise = start.elapsed().as_secs_f64();
    assert_eq!(code(&o), 0);
    let s = summary(&noise);
    assert!(
        s["rms_estimate"].as_f64().unwrap() < s["rms_measurement"].as_f64().unwrap(),
        "{s}"
    );
    println!("synthetic images {t_img:.2} s, noise model {t_noise:.2} s");

    for f in ["telemetry.csv", "errors.csv", "trajectory.csv"] {
        let a = fs::read_to_string(img.join(f)).unwrap();
        let b = fs::read_to_string(noise.join(f)).unwrap();
        assert_eq!(a.lines().next(), b.lines().next(), "{f} header");
        assert_eq!(a.lines().count(), 901, "{f}");
        assert_eq!(b.lines().count(), 901, "{f}");
    }
}

#[test]
fn simulate_fly_around_final_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("fly");
    let o = visnav(&["simulate", "--scenario", "fly-around", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert!(s["final_error_m"].as_f64().unwrap() < 2.0, "{s}");
    assert!(s["consistency_fraction"].as_f64().unwrap() >= 0.95, "{s}");
    assert!(s["failure"].is_null());
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"scenario": {"forced_translation": {"duration": 120.0}}}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = visnav(&["simulate", "--config", &cfg, "--seed", "3", "--out", p(d)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
}

#[test]
fn lost_target_is_a_scenario_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"scene": {"target": false}, "scenario": {"kind": "fly-around", "redetection_budget": 2}}"#,
    );
    let out = tmp.path().join("out");
    let o = visnav(&["simulate", "--config", &cfg, "--out", p(&out)]);
    assert_eq!(code(&o), 4);
    let s = summary(&out);
    assert!(
        s["failure"].as_str().unwrap().contains("consecutive"),
        "{s}"
    );
    let telemetry = fs::read_to_string(out.join("telemetry.csv")).unwrap();
    assert_eq!(telemetry.lines().count(), 1 + 3);
}
