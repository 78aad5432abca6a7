use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wbkmeans::WeightedDataset;
use wbkmeans_cli::ingest::{parse_points, read_points, write_points, Header};
use wbkmeans_cli::verify::read_assignment;

fn wbkmeans(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbkmeans"))
        .args(args)
        .current_dir(dir)
        .env_remove("WBKMEANS_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

fn three_points(dir: &Path) {
    fs::write(dir.join("p.csv"), "0,1\n1,1\n2,1\n").unwrap();
    fs::write(
        dir.join("job.toml"),
        "input = \"p.csv\"\nk = 2\n[bounds]\nlower = [1.5, 1.5]\nupper = [1.5, 1.5]\n[init]\nsites = [[0.0], [2.0]]\n[output]\ndir = \"out\"\n",
    )
    .unwrap();
}

// scattered points with weights in [0.5, 2)
fn scatter(dir: &Path, n: usize) {
    let mut text = String::from("x,y,weight\n");
    for i in 0..n {
        let t = i as f64;
        let x = (t * 0.618_033_988_7).fract() * 10.0 + if i % 3 == 0 { 20.0 } else { 0.0 };
        let y = (t * 0.414_213_562_3).fract() * 10.0;
        let w = 0.5 + (t * 0.732_050_807_5).fract() * 1.5;
        text.push_str(&format!("{x},{y},{w}\n"));
    }
    fs::write(dir.join("s.csv"), text).unwrap();
}

#[test]
fn three_point_job_reports_the_split_middle_point() {
    let tmp = TempDir::new().unwrap();
    three_points(tmp.path());
    let out = wbkmeans(&["run", "--config", "job.toml"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = json(tmp.path().join("out/summary.json"));
    assert_eq!(summary["fractional_count"], 2);
    assert_eq!(summary["certificate"], "strongly_feasible");
    assert_eq!(summary["verdict"], "converged");
    // centroids move to 1/3 and 5/3: error 2·(1·(1/3)² + ½·(2/3)²)
    assert!((summary["squared_error"].as_f64().unwrap() - 2.0 / 3.0).abs() <= 1e-9);
    let trace = json(tmp.path().join("out/trace.json"));
    let first = &trace[0]["trace"]["records"][0];
    assert!((first["squared_error"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    assert_eq!(first["fractional_count"], 2);
    let certificate = json(tmp.path().join("out/certificate.json"));
    assert_eq!(certificate["verdict"], "strongly_feasible");
    let y = read_assignment(&tmp.path().join("out/assignment.csv"), Some(2), 3).unwrap();
    assert_eq!(y.values(), &[1.0, 0.5, 0.0, 0.0, 0.5, 1.0]);
    let sites = json(tmp.path().join("out/sites.json"));
    assert_eq!(sites["sigma"].as_array().unwrap().len(), 2);
}

#[test]
fn infeasible_bounds_exit_one_and_name_the_condition() {
    let tmp = TempDir::new().unwrap();
    three_points(tmp.path());
    let out = wbkmeans(&["run", "--config", "job.toml", "--lower", "1,1", "--upper", "1,1"], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("Σκ⁻ ≤ Σω ≤ Σκ⁺"), "{}", stderr(&out));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn iteration_cap_exits_two() {
    let tmp = TempDir::new().unwrap();
    scatter(tmp.path(), 60);
    let out = wbkmeans(
        &["run", "--input", "s.csv", "--k", "4", "--balanced", "10%", "--max-iterations", "1", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert_eq!(json(tmp.path().join("o/summary.json"))["verdict"], "iteration_cap");
}

#[test]
fn multi_start_keeps_every_trace_and_picks_the_best() {
    let tmp = TempDir::new().unwrap();
    scatter(tmp.path(), 80);
    let out = wbkmeans(
        &["run", "--input", "s.csv", "--k", "4", "--balanced", "0.2", "--starts", "8", "--init", "uniform-sample", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = json(tmp.path().join("o/trace.json"));
    let seeds: Vec<u64> = trace.as_array().unwrap().iter().map(|t| t["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, (0..8).collect::<Vec<_>>());
    let summary = json(tmp.path().join("o/summary.json"));
    let errors: Vec<f64> = summary["seeds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["squared_error"].as_f64().unwrap())
        .collect();
    let best = summary["best_seed"].as_u64().unwrap() as usize;
    assert!(errors.iter().all(|&e| e >= errors[best]));
    assert_eq!(summary["squared_error"].as_f64().unwrap(), errors[best]);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    scatter(tmp.path(), 70);
    let mut runs = Vec::new();
    for (dir, workers) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let out = wbkmeans(
            &["--workers", workers, "run", "--input", "s.csv", "--k", "3", "--balanced", "5%", "--starts", "4", "--out", dir],
            tmp.path(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        runs.push(dir);
    }
    for name in ["assignment.csv", "sites.json", "trace.json", "certificate.json", "summary.json"] {
        let first = fs::read(tmp.path().join(runs[0]).join(name)).unwrap();
        for dir in &runs[1..] {
            assert_eq!(first, fs::read(tmp.path().join(dir).join(name)).unwrap(), "{name} differs in {dir}");
        }
    }
}

#[test]
fn ingest_errors_cite_rows() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("zero.csv"), "x,w\n0,1\n1,0\n").unwrap();
    fs::write(tmp.path().join("dup.csv"), "0,0,1\n1,1,1\n0,0,2\n").unwrap();
    fs::write(tmp.path().join("bad.csv"), "0,1\n1,one\n").unwrap();
    let run = |file: &str| wbkmeans(&["run", "--input", file, "--k", "2", "--balanced", "0.5"], tmp.path());
    let zero = run("zero.csv");
    assert_eq!(code(&zero), 1);
    assert!(stderr(&zero).contains("row 3: weight must be positive"), "{}", stderr(&zero));
    let dup = run("dup.csv");
    assert!(stderr(&dup).contains("row 3: duplicates the coordinates of row 1; merge"), "{}", stderr(&dup));
    let bad = run("bad.csv");
    assert!(stderr(&bad).contains("row 2, column 2"), "{}", stderr(&bad));
}

#[test]
fn points_survive_a_file_round_trip() {
    let tmp = TempDir::new().unwrap();
    let pts: Vec<Vec<f64>> = (0..50)
        .map(|i| vec![(i as f64).sqrt() * 1e-7, -(i as f64) / 7.0, 1e200 / (i as f64 + 3.0)])
        .collect();
    let weights: Vec<f64> = (0..50).map(|i| 0.1 + i as f64 / 3.0).collect();
    let data = WeightedDataset::new(&pts, weights).unwrap();
    let path = tmp.path().join("rt.tsv");
    write_points(fs::File::create(&path).unwrap(), &data, b'\t').unwrap();
    assert_eq!(read_points(&path, b'\t', Header::Detect).unwrap(), data);
    let mut buf = Vec::new();
    write_points(&mut buf, &data, b';').unwrap();
    assert_eq!(parse_points(&buf[..], b';', Header::Absent).unwrap(), data);
}

#[test]
fn must_link_pairs_share_their_rows() {
    let tmp = TempDir::new().unwrap();
    scatter(tmp.path(), 40);
    let out = wbkmeans(
        &["run", "--input", "s.csv", "--k", "3", "--balanced", "10%", "--must-link", "0:5", "--must-link", "5:17", "--must-link", "2:9", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = json(tmp.path().join("o/summary.json"));
    assert_eq!(summary["must_link_applied"], true);
    assert_eq!(summary["points"], 40);
    assert_eq!(summary["reduced_points"], 37);
    let y = read_assignment(&tmp.path().join("o/assignment.csv"), Some(3), 40).unwrap();
    for (a, b) in [(0, 5), (5, 17), (2, 9)] {
        for i in 0..3 {
            assert_eq!(y.get(i, a), y.get(i, b));
        }
    }
    assert_eq!(json(tmp.path().join("o/certificate.json"))["points"], "merged");
}

#[test]
fn kernel_run_needs_an_explicit_kernel() {
    let tmp = TempDir::new().unwrap();
    scatter(tmp.path(), 30);
    let base = ["kernel-run", "--input", "s.csv", "--k", "2", "--balanced", "10%", "--out", "o"];
    let missing = wbkmeans(&base, tmp.path());
    assert_eq!(code(&missing), 1);
    assert!(stderr(&missing).contains("explicit kernel"), "{}", stderr(&missing));
    let no_bandwidth = wbkmeans(&[&base[..], &["--kernel", "gaussian"]].concat(), tmp.path());
    assert!(stderr(&no_bandwidth).contains("--bandwidth"));

    let ok = wbkmeans(&[&base[..], &["--kernel", "gaussian", "--bandwidth", "3"]].concat(), tmp.path());
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let summary = json(tmp.path().join("o/summary.json"));
    assert_eq!(summary["command"], "kernel-run");
    assert!(summary["certificate"].is_null());
    assert!(!tmp.path().join("o/certificate.json").exists());
    let sites = json(tmp.path().join("o/sites.json"));
    assert_eq!(sites["centroids"][0]["kind"], "coefficients");
}

#[test]
fn verify_accepts_run_output_and_rejects_crossed_labels() {
    let tmp = TempDir::new().unwrap();
    three_points(tmp.path());
    assert_eq!(code(&wbkmeans(&["run", "--config", "job.toml"], tmp.path())), 0);
    let ok = wbkmeans(
        &["verify", "--input", "p.csv", "--assignment", "out/assignment.csv", "--sites", "out/sites.json"],
        tmp.path(),
    );
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let report: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["verdict"], "strongly_feasible");

    // clusters {0, 2} and {1, 3} on a line cannot both be power cells
    fs::write(tmp.path().join("line.csv"), "0,1\n1,1\n2,1\n3,1\n").unwrap();
    fs::write(tmp.path().join("crossed.csv"), "cluster,point,value\n0,0,1\n0,2,1\n1,1,1\n1,3,1\n").unwrap();
    let bad = wbkmeans(&["verify", "--input", "line.csv", "--assignment", "crossed.csv"], tmp.path());
    assert_eq!(code(&bad), 3);
    let report: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["verdict"], "infeasible");
}

#[test]
fn hidden_oracle_finds_no_integral_split() {
    let tmp = TempDir::new().unwrap();
    three_points(tmp.path());
    let out = wbkmeans(
        &["oracle", "--input", "p.csv", "--site", "0", "--site", "2", "--lower", "1.5,1.5", "--upper", "1.5,1.5"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["integral"].is_null());
    assert!((report["lp"]["squared_error"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    let help = wbkmeans(&["--help"], tmp.path());
    assert!(!String::from_utf8_lossy(&help.stdout).contains("oracle"));
}
