use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nsstret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsstret"))
        .arg("-q")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 4] = ["--scales", "2", "--dirs", "4,4"];

struct Corpus {
    _dir: tempfile::TempDir,
    db: PathBuf,
    index: PathBuf,
    root: PathBuf,
}

fn corpus() -> Corpus {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let db = root.join("db");
    assert_eq!(code(&nsstret(&["synth", "--out", p(&db), "--classes", "2", "--seed", "3"])), 0);
    let index = root.join("a.idx");
    let mut args = vec!["index", "--db", p(&db), "--scheme", "scheme2", "--marginal", "gg", "--out", p(&index)];
    args.extend(SMALL);
    let out = nsstret(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    Corpus {
        _dir: dir,
        db,
        index,
        root,
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let out = nsstret(&["index", "--db", ".", "--scheme", "scheme1", "--out", "x", "--dirs", "4,8", "--scales", "3"]);
    assert_eq!(code(&out), 2);
    let out = nsstret(&["index", "--db", ".", "--scheme", "scheme3", "--out", "x"]);
    assert_eq!(code(&out), 2);
    let out = nsstret(&["compare-schemes", "--db", ".", "--schemes", ""]);
    assert_eq!(code(&out), 2);
    let out = nsstret(&["compare-schemes", "--db", "."]);
    assert_eq!(code(&out), 2);
    let out = nsstret(&["index", "--db", ".", "--scheme", "scheme9", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn index_query_evaluate_round_trip() {
    let c = corpus();
    let manifest = fs::read_to_string(c.root.join("a.idx.manifest.tsv")).unwrap();
    assert_eq!(manifest, "stem\twidth\theight\tpatches\nsynth_000\t512\t512\t16\nsynth_001\t512\t512\t16\n");

    // Rebuilding gives a byte-identical index.
    let again = c.root.join("b.idx");
    let mut args = vec!["index", "--db", p(&c.db), "--scheme", "scheme2", "--out", p(&again), "--jobs", "1"];
    args.extend(SMALL);
    assert_eq!(code(&nsstret(&args)), 0);
    assert_eq!(fs::read(&c.index).unwrap(), fs::read(&again).unwrap());

    let image = c.db.join("synth_001.png");
    let out = nsstret(&["query", "--index", p(&c.index), "--image", p(&image), "--patch", "5", "--top", "16"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.len() == 3));
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[0][1], "synth_001_p05");
    assert!(rows[0][2].parse::<f64>().unwrap().abs() < 1e-6);
    let jd: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(jd.windows(2).all(|w| w[0] <= w[1]));

    let out = nsstret(&["query", "--index", p(&c.index), "--image", p(&image), "--top", "3"]);
    assert_eq!(code(&out), 2);
    let out = nsstret(&["query", "--index", p(&c.index), "--image", p(&image), "--patch", "16"]);
    assert_eq!(code(&out), 2);

    let r1 = c.root.join("r1.tsv");
    let r2 = c.root.join("r2.tsv");
    let out = nsstret(&["evaluate", "--index", p(&c.index), "--report", p(&r1), "--jobs", "1", "--db", p(&c.db)]);
    assert_eq!(code(&out), 0);
    let summary = stdout(&out);
    assert!(summary.starts_with("ARR\t"), "{summary}");
    let arr: f64 = summary.split('\t').nth(1).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&arr));
    assert_eq!(code(&nsstret(&["evaluate", "--index", p(&c.index), "--report", p(&r2), "--jobs", "3"])), 0);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    let report = fs::read_to_string(&r1).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("synth_00") && l.contains("_p")).count(), 32);

    // A changed dataset is reported as a data error.
    fs::copy(&image, c.db.join("synth_002.png")).unwrap();
    assert_eq!(code(&nsstret(&["evaluate", "--index", p(&c.index), "--db", p(&c.db)])), 3);
}

#[test]
fn damaged_index_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.idx");
    fs::write(&bad, b"NSSTIDX1\x01\0\0\0\0").unwrap();
    let out = nsstret(&["evaluate", "--index", p(&bad)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset"));
    fs::write(&bad, b"garbage").unwrap();
    assert_eq!(code(&nsstret(&["evaluate", "--index", p(&bad)])), 3);
    assert_eq!(code(&nsstret(&["evaluate", "--index", p(&dir.path().join("missing"))])), 3);
}

#[test]
fn diagnose_writes_histograms_and_chi_plot() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    assert_eq!(code(&nsstret(&["synth", "--out", p(&db), "--classes", "1"])), 0);
    let image = db.join("synth_000.png");
    let out_dir = dir.path().join("diag");
    let mut args = vec!["diagnose", "--image", p(&image), "--patch", "0", "--pair", "c0_s2_d1,c0_s2_d1", "--out", p(&out_dir)];
    args.extend(SMALL);
    let out = nsstret(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let chi = fs::read_to_string(out_dir.join("chi.csv")).unwrap();
    assert_eq!(chi.lines().count(), 1 + 128 * 128);
    let stats = fs::read_to_string(out_dir.join("chi_stats.csv")).unwrap();
    let row: Vec<&str> = stats.lines().nth(1).unwrap().split(',').collect();
    assert!((row[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    let hist = fs::read_to_string(out_dir.join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 2 * 64);
    let k: f64 = hist.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(k > 0.0);

    let mut args = vec!["diagnose", "--image", p(&image), "--patch", "0", "--out", p(&out_dir)];
    args.extend(SMALL);
    assert_eq!(code(&nsstret(&args)), 0);
    let mut args = vec!["diagnose", "--image", p(&image), "--pair", "c0_s9_d1,c0_s1_d1", "--out", p(&out_dir)];
    args.extend(SMALL);
    assert_eq!(code(&nsstret(&args)), 2);
    let mut args = vec!["diagnose", "--image", p(&image), "--pair", "nonsense", "--out", p(&out_dir)];
    args.extend(SMALL);
    assert_eq!(code(&nsstret(&args)), 2);
}

#[test]
fn decompose_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    assert_eq!(code(&nsstret(&["synth", "--out", p(&db), "--classes", "1"])), 0);
    let arch = dir.path().join("bands");
    let image = db.join("synth_000.png");
    let mut args = vec!["decompose", "--image", p(&image), "--out", p(&arch)];
    args.extend(SMALL);
    assert_eq!(code(&nsstret(&args)), 0);
    assert!(arch.join("c2_s2_d4.f64").exists());
    assert_eq!(fs::metadata(arch.join("c0_s1_d1.f64")).unwrap().len(), 512 * 512 * 8);

    let out = nsstret(&["oracle", "copula", "--rho", "0.5"]);
    let v: f64 = stdout(&out).split('\t').nth(1).unwrap().trim().parse().unwrap();
    assert!((v - 0.5 * (8.0 / 3.0 + 0.75f64.ln() - 2.0)).abs() < 1e-12);
    let out = nsstret(&["oracle", "gg", "--db", "1,1", "--q", "2,1"]);
    let vals: Vec<f64> = stdout(&out).lines().map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert!((vals[0] - vals[1]).abs() < 1e-9);
}

#[test]
fn compare_schemes_table() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    assert_eq!(code(&nsstret(&["synth", "--out", p(&db), "--classes", "2"])), 0);
    let mut args = vec!["compare-schemes", "--db", p(&db), "--schemes", "scheme1,independent"];
    args.extend(SMALL);
    let out = nsstret(&args);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "scheme");
    assert_eq!(rows[1][0], "scheme1");
    assert_eq!(rows[2][0], "independent");
    for r in &rows[1..] {
        let fe: f64 = r[1].parse().unwrap();
        let per_image: f64 = r[2].parse().unwrap();
        assert!((per_image - fe / 32.0).abs() < 2e-3);
        let arr: f64 = r[6].parse().unwrap();
        assert!((0.0..=1.0).contains(&arr));
    }
}
