//! End-to-end checks of the `finitary` binary: exit codes, artifact
//! formats, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn finitary(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finitary"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_geom_half(dir: &Path) -> String {
    let path = dir.join("geom.json");
    fs::write(&path, r#"{"head": [], "tail": {"coef": 1.0, "rate": 0.5}}"#).unwrap();
    path.display().to_string()
}

fn write_uniform12(dir: &Path) -> String {
    let path = dir.join("u12.json");
    fs::write(&path, r#"{"head": [0.5, 0.5], "tail": null}"#).unwrap();
    path.display().to_string()
}

#[test]
fn pipeline_on_geometric_passes() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_geom_half(dir.path());
    let out = finitary(
        &[
            "pipeline",
            "--dist",
            &dist,
            "--mu",
            "0.5",
            "--seed",
            "1",
            "--range",
            "-1000000..0",
            "--out",
            "report.csv",
        ],
        dir.path(),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "stdout: {stdout}");
    assert!(stdout.contains("gap_chi_square_p"));
    assert!(stdout.contains("window_tail_r2"));
    // artifacts exist and carry the config echo
    for name in ["report.csv", "report.skeleton.csv", "report.points.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with("# {\"command\":\"pipeline\""), "{name}");
    }
}

#[test]
fn missing_kernel_file_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = finitary(
        &[
            "code-markov",
            "--kernel",
            "does-not-exist.json",
            "--range",
            "0..10",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_gf_rejects_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lattice.json");
    fs::write(&path, r#"{"head": [0.0, 0.5, 0.0, 0.5], "tail": null}"#).unwrap();
    let out = finitary(
        &["analyze-gf", "--dist", path.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("lattice"), "stderr: {stderr}");
}

#[test]
fn analyze_gf_emits_report_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_geom_half(dir.path());
    let out = finitary(
        &[
            "analyze-gf",
            "--dist",
            &dist,
            "--nmax",
            "50",
            "--out",
            "gf.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("gf.csv")).unwrap();
    assert!(text.contains("kappa=exact"));
    assert!(text.contains("n,q,geometric,residual"));
    // ν = 4/3 shows up in the report line
    assert!(text.contains("nu=1.333333333"), "{text}");
}

#[test]
fn code_renewal_output_is_byte_identical_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g4.json");
    // Geom(1/4): coef = 1/3, rate = 3/4
    fs::write(
        &path,
        r#"{"head": [], "tail": {"coef": 0.3333333333333333, "rate": 0.75}}"#,
    )
    .unwrap();
    let dist = path.display().to_string();
    let args = [
        "code-renewal",
        "--dist",
        &dist,
        "--seed",
        "5",
        "--range",
        "-200000..0",
        "--out",
        "a.csv",
    ];
    assert_eq!(finitary(&args, dir.path()).status.code(), Some(0));
    let mut args2 = args;
    args2[8] = "b.csv";
    assert_eq!(finitary(&args2, dir.path()).status.code(), Some(0));
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    let a_text = String::from_utf8_lossy(&a).replace("a.csv", "OUT");
    let b_text = String::from_utf8_lossy(&b).replace("b.csv", "OUT");
    assert_eq!(a_text, b_text, "identical config must give identical bytes");

    let out = finitary(&["verify", "--dist", &dist, "--input", "a.csv"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "verify report:\n{stdout}");
    assert!(stdout.contains("gap_chi_square_p"));
}

#[test]
fn code_renewal_routes_bounded_jumps_through_cftp() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_uniform12(dir.path());
    let out = finitary(
        &[
            "code-renewal",
            "--dist",
            &dist,
            "--seed",
            "2",
            "--range",
            "0..2000",
            "--out",
            "cftp.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("cftp.csv")).unwrap();
    assert!(text.contains("index,bit,window,regen_time"));
    let ones = text
        .lines()
        .filter(|l| l.split(',').nth(1) == Some("1"))
        .count();
    // density ≈ 2/3 of 2000
    assert!((1200..1500).contains(&ones), "ones = {ones}");
}

#[test]
fn undilute_identity_on_unit_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_uniform12(dir.path());
    let input = dir.path().join("pts.csv");
    fs::write(&input, "position\n0\n1\n2\n3\n").unwrap();
    let out = finitary(
        &[
            "undilute",
            "--dist",
            &dist,
            "--mu",
            "0.5",
            "--input",
            input.to_str().unwrap(),
            "--out",
            "filled.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("filled.csv")).unwrap();
    let positions: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("position") && !l.is_empty())
        .collect();
    assert_eq!(positions, vec!["0", "1", "2", "3"]);
}

#[test]
fn code_markov_emits_labels() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = dir.path().join("k.json");
    fs::write(
        &kernel,
        r#"{"states": ["a", "b"], "rows": {"a": {"a": 0.5, "b": 0.5}, "b": {"a": 1.0}}}"#,
    )
    .unwrap();
    let out = finitary(
        &[
            "code-markov",
            "--kernel",
            kernel.to_str().unwrap(),
            "--seed",
            "9",
            "--range",
            "-500..500",
            "--out",
            "chain.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("chain.csv")).unwrap();
    assert!(text.contains("index,state,window"));
    let states: Vec<&str> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(states.len(), 1000);
    assert!(states.iter().all(|&s| s == "a" || s == "b"));
    let a_frac = states.iter().filter(|&&s| s == "a").count() as f64 / 1000.0;
    assert!((a_frac - 2.0 / 3.0).abs() < 0.1, "a fraction {a_frac}");
}

#[test]
fn bad_range_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_geom_half(dir.path());
    let out = finitary(
        &["code-renewal", "--dist", &dist, "--range", "10..3"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
