use std::path::Path;
use std::process::{Command, Output};

use meshforge::io::{self, MatrixFile, ProgramFile, ReportFile};
use meshforge::mesh::forward;
use meshforge::{PhaseSchedule, Rng};

fn meshforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshforge"))
        .current_dir(dir)
        .args(args)
        .env("MESHFORGE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = meshforge(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn synth_device_is_deterministic_and_unitary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-device", "--modes", "4", "--seed", "1", "--out", "a.json"]);
    ok(d, &["synth-device", "--modes", "4", "--seed", "1", "--out", "b.json"]);
    assert_eq!(read(d, "a.json"), read(d, "b.json"));
    let model = io::read_model(&d.join("a.json")).unwrap();
    assert_eq!(model.n_modes(), 4);
    assert_eq!(model.n_mixers(), 4);
    assert!(model.basis().iter().all(|u| u.unitarity_defect() <= 1e-10));
}

#[test]
fn usage_and_io_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = meshforge(d, &["synth-device", "--modes", "0", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = meshforge(d, &["validate", "--model", "missing.json", "--test", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = meshforge(d, &["sweep", "--kind", "noise", "--alphas", ""]);
    assert_eq!(out.status.code(), Some(2));
    let out = meshforge(d, &["sweep", "--kind", "noise", "--modes", "2,3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_train_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-device", "--modes", "4", "--seed", "2", "--out", "dev.json"]);
    ok(d, &["gen-train", "--device", "dev.json", "--count", "7", "--alpha", "0", "--seed", "3", "--out", "clean.json"]);
    ok(d, &["gen-train", "--device", "dev.json", "--count", "7", "--alpha", "0.05", "--seed", "3", "--out", "noisy.json"]);
    let device = io::read_model(&d.join("dev.json")).unwrap();
    let clean = io::read_dataset(&d.join("clean.json")).unwrap();
    let noisy = io::read_dataset(&d.join("noisy.json")).unwrap();
    assert_eq!(clean.len(), 7);
    for (c, n) in clean.pairs().iter().zip(noisy.pairs()) {
        let ideal = forward(&device, &c.phases).unwrap();
        assert!(c.observed.max_abs_diff(&ideal) <= 1e-10);
        assert!(n.observed.unitarity_defect() <= 1e-10);
        assert!(n.observed.max_abs_diff(&forward(&device, &n.phases).unwrap()) > 1e-6);
    }
    let rewritten = io::to_json(&io::DatasetFile::from_dataset(&clean));
    assert_eq!(rewritten.as_bytes(), read(d, "clean.json"));
}

#[test]
fn learn_validate_program_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-device", "--modes", "2", "--seed", "5", "--out", "dev.json"]);
    ok(d, &["gen-train", "--device", "dev.json", "--count", "5", "--seed", "1", "--out", "train.json"]);
    ok(d, &["gen-train", "--device", "dev.json", "--count", "30", "--seed", "2", "--out", "test.json"]);
    let learn = [
        "learn", "--train", "train.json", "--test", "test.json", "--epochs", "300", "--seed", "4",
        "--out-model", "m.json", "--out-trace", "t.csv",
    ];
    ok(d, &learn);
    let trace = io::parse_trace_csv(&String::from_utf8(read(d, "t.csv")).unwrap()).unwrap();
    assert!(trace.records.len() <= 301);
    assert!(trace.records.iter().map(|r| r.j_test).fold(f64::INFINITY, f64::min) <= 1e-2);

    let model_bytes = read(d, "m.json");
    let trace_bytes = read(d, "t.csv");
    ok(d, &learn);
    assert_eq!(read(d, "m.json"), model_bytes);
    assert_eq!(read(d, "t.csv"), trace_bytes);

    let out = ok(d, &["validate", "--model", "m.json", "--test", "test.json"]);
    let report: ReportFile = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.pass && report.mean_j <= 1e-2);
    assert_eq!(report.per_sample.len(), 30);

    let out = ok(d, &["validate", "--model", "dev.json", "--test", "test.json"]);
    let report: ReportFile = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.mean_j <= 1e-20);

    let model = io::read_model(&d.join("m.json")).unwrap();
    let mut rng = Rng::new(8);
    let target = forward(&model, &PhaseSchedule::random(3, 2, &mut rng)).unwrap();
    io::write_matrix(&d.join("target.json"), &target).unwrap();
    ok(d, &["program", "--model", "m.json", "--target", "target.json", "--restarts", "3", "--out", "p.json"]);
    let program: ProgramFile = serde_json::from_slice(&read(d, "p.json")).unwrap();
    assert!(program.achieved_j <= 1e-6);
    assert_eq!(program.per_restart.len(), 3);
    assert!(program
        .phases
        .iter()
        .flatten()
        .all(|p| (0.0..std::f64::consts::TAU).contains(p)));

    let small = MatrixFile::from_matrix(&meshforge::ComplexMatrix::identity(3));
    io::write_text(&d.join("small.json"), &io::to_json(&small)).unwrap();
    let out = meshforge(d, &["program", "--model", "m.json", "--target", "small.json", "--out", "q.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn perfect_initial_guess_starts_at_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-device", "--modes", "3", "--seed", "6", "--out", "dev.json"]);
    ok(d, &["gen-train", "--device", "dev.json", "--count", "4", "--seed", "1", "--out", "train.json"]);
    ok(d, &[
        "learn", "--train", "train.json", "--test", "train.json", "--init", "file:dev.json",
        "--apriori-alpha", "0", "--epochs", "5", "--out-model", "m.json", "--out-trace", "t.csv",
    ]);
    let trace = io::parse_trace_csv(&String::from_utf8(read(d, "t.csv")).unwrap()).unwrap();
    assert!(trace.records[0].j_test <= 1e-20);
}

#[test]
fn undertrained_model_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-device", "--modes", "3", "--seed", "1", "--out", "dev.json"]);
    ok(d, &["gen-train", "--device", "dev.json", "--count", "2", "--seed", "1", "--out", "train.json"]);
    ok(d, &["gen-train", "--device", "dev.json", "--count", "50", "--seed", "2", "--out", "test.json"]);
    ok(d, &[
        "learn", "--train", "train.json", "--test", "test.json", "--epochs", "300",
        "--out-model", "m.json", "--out-trace", "t.csv",
    ]);
    let out = meshforge(d, &["validate", "--model", "m.json", "--test", "test.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweeps_write_documented_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &[
        "sweep", "--kind", "fidelity-calibration", "--alphas", "0,0.05,0.1", "--samples", "1000",
        "--out", "cal.csv",
    ]);
    let text = String::from_utf8(read(d, "cal.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha,mean_fidelity,std_fidelity,mean_j,samples"));
    let fids: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!((fids[0] - 1.0).abs() <= 1e-12);
    assert!(fids.windows(2).all(|w| w[1] < w[0]));

    ok(d, &[
        "sweep", "--kind", "noise", "--modes", "2", "--count", "5", "--alphas", "0.025,0.1",
        "--reps", "3", "--epochs", "300", "--test-count", "30", "--out", "noise.csv",
    ]);
    let text = String::from_utf8(read(d, "noise.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(text.lines().next(), Some("alpha,mean_j,pass_fraction,reps"));
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 0.0);

    ok(d, &[
        "sweep", "--kind", "train-size", "--modes", "3", "--counts", "2,4", "--reps", "2",
        "--epochs", "300", "--test-count", "30", "--out", "ts.csv",
    ]);
    let text = String::from_utf8(read(d, "ts.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("n_modes,count,mean_j,pass_fraction,reps"));
    assert_eq!(text.lines().count(), 3);

    let help = ok(d, &["sweep", "--help"]);
    let help = String::from_utf8(help.stdout).unwrap();
    assert!(help.contains("n_modes,init_alpha,mean_j,pass_fraction,reps"));
}
