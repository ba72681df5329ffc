use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_torsion-lab"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn torsion-lab")
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("ellipse21.json"),
        r#"{"kind": "ellipse", "a": 2.0, "b": 1.0}"#,
    )
    .unwrap();
    fs::write(dir.path().join("circle.json"), r#"{"kind": "circle", "radius": 1.0}"#).unwrap();
    fs::write(
        dir.path().join("cos3.json"),
        r#"{"base": {"kind": "circle", "radius": 1.0}, "cos": [0.0, 0.0, 1.0], "level": 3}"#,
    )
    .unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let h = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (h, rows)
}

#[test]
fn help_documents_exit_codes() {
    let o = bin().arg("--help").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    for needle in [
        "Exit codes",
        "2  config",
        "3  domain",
        "4  mesh",
        "5  solver",
        "6  resource",
        "TORSION_LAB_THREADS",
    ] {
        assert!(text.contains(needle), "missing {needle}");
    }
}

#[test]
fn solve_ellipse_summary() {
    let dir = setup();
    let o = run(
        dir.path(),
        &[
            "solve",
            "--domain",
            "ellipse21.json",
            "--level",
            "4",
            "--out",
            "o",
            "--plot",
            "--dump-mesh",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("o");
    for f in [
        "solution.csv",
        "boundary.csv",
        "summary.json",
        "boundary_flux.svg",
        "vertices.csv",
        "triangles.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let tau = v["tau"].as_f64().unwrap();
    assert!((tau - 1.6 * std::f64::consts::PI).abs() < 1e-3, "tau = {tau}");
    for k in ["R", "H0", "z", "flux_deviation_l2"] {
        assert!(!v[k].is_null(), "{k}");
    }
    let (h, rows) = csv_rows(&out.join("solution.csv"));
    assert_eq!(h, ["x", "y", "u", "P", "h"]);
    assert_eq!(rows.len(), v["nodes"].as_u64().unwrap() as usize);
    let (h, _) = csv_rows(&out.join("boundary.csv"));
    assert_eq!(h, ["theta", "u_nu"]);
}

#[test]
fn solve_is_deterministic() {
    let dir = setup();
    for out in ["a", "b"] {
        let o = run(dir.path(), &["solve", "--seed", "11", "--level", "3", "--out", out]);
        assert_eq!(code(&o), 0);
    }
    for f in ["solution.csv", "boundary.csv", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn verify_circle_writes_identity_table() {
    let dir = setup();
    let o = run(
        dir.path(),
        &[
            "verify",
            "--domain",
            "circle.json",
            "--levels",
            "1..3",
            "--out",
            "v",
            "--plot",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv_rows(&dir.path().join("v/identities.csv"));
    assert_eq!(
        h,
        [
            "identity",
            "level",
            "h",
            "lhs",
            "rhs",
            "abs_residual",
            "rel_residual",
            "order_estimate"
        ]
    );
    assert_eq!(rows.len() % 3, 0);
    // First level has no order estimate.
    assert!(rows.iter().filter(|r| r[1] == "1").all(|r| r[7].is_empty()));
    let div = rows.iter().find(|r| r[0] == "divergence" && r[1] == "3").unwrap();
    assert!(div[5].parse::<f64>().unwrap() < 1e-6);
    assert!(dir.path().join("v/identities.svg").is_file());
}

#[test]
fn stability_sweep_and_report() {
    let dir = setup();
    let o = run(
        dir.path(),
        &["stability", "sweep", "--family", "cos3.json", "--out", "s", "--plot"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv_rows(&dir.path().join("s/sweep.csv"));
    assert_eq!(h[0], "epsilon");
    assert_eq!(rows.len(), 5);
    let (h, fits) = csv_rows(&dir.path().join("s/fits.csv"));
    assert_eq!(h, ["x", "y", "slope", "intercept", "correlation"]);
    assert_eq!(fits.len(), 3);
    assert!(dir.path().join("s/sweep.svg").is_file());

    let o = run(dir.path(), &["report", "--out", "s"]);
    assert_eq!(code(&o), 0);
    let md = fs::read_to_string(dir.path().join("s/report.md")).unwrap();
    assert!(md.contains("## Stability sweep"));
    assert!(!md.contains("## Flow"));
}

#[test]
fn flow_writes_trajectory() {
    let dir = setup();
    let o = run(
        dir.path(),
        &[
            "flow",
            "--domain",
            "ellipse21.json",
            "--level",
            "1",
            "--max-steps",
            "3",
            "--out",
            "f",
            "--plot",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv_rows(&dir.path().join("f/trajectory.csv"));
    assert_eq!(h[..3], ["step", "t", "dt"]);
    assert_eq!(rows.len(), 4);
    let j: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(j.windows(2).all(|w| w[1] <= w[0]), "{j:?}");
    assert!(dir.path().join("f/final_domain.json").is_file());
    assert!(dir.path().join("f/flow.svg").is_file());
}

#[test]
fn error_categories_map_to_exit_codes() {
    let dir = setup();
    let p = dir.path();
    fs::write(p.join("neg.json"), r#"{"kind": "fourier", "c0": 1.0, "cos": [2.0]}"#).unwrap();
    fs::write(p.join("junk.json"), "{").unwrap();
    fs::write(p.join("blocker"), "").unwrap();

    assert_eq!(code(&run(p, &["solve", "--domain", "circle.json", "--level", "9"])), 2);
    assert_eq!(code(&run(p, &["solve", "--domain", "missing.json"])), 2);
    assert_eq!(code(&run(p, &["solve"])), 2);
    assert_eq!(
        code(&run(p, &["verify", "--domain", "circle.json", "--levels", "3..1"])),
        2
    );
    assert_eq!(code(&run(p, &["solve", "--domain", "neg.json", "--level", "1"])), 3);
    assert!([2, 3].contains(&code(&run(p, &["solve", "--domain", "junk.json", "--level", "1"]))));
    assert_eq!(
        code(&run(
            p,
            &["solve", "--domain", "circle.json", "--level", "1", "--out", "blocker/x"]
        )),
        6
    );
    assert_eq!(code(&run(p, &["report", "--out", "."])), 2);
    let o = bin()
        .current_dir(p)
        .env("TORSION_LAB_THREADS", "0")
        .args(["solve", "--domain", "circle.json", "--level", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_input_is_rejected_before_output_dir_is_created() {
    let dir = setup();
    let o = run(dir.path(), &["stability", "--family", "nope.json", "--out", "never"]);
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("never").exists());
}
