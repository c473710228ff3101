//! End-to-end runs of the `oamturb` binary.

use std::process::{Command, Output};

fn oamturb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oamturb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = oamturb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header
        .iter()
        .position(|h| *h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    lines
        .map(|l| l.split(',').nth(k).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn spectrum_of_presets() {
    let quad = stdout(&["spectrum", "--l-max", "8"]);
    assert!(quad.starts_with("l,lambda_l\n"));
    assert!(quad.lines().any(|l| l == "0,0.25"));
    assert!(quad.lines().any(|l| l == "4,0.0"));

    let uniform = stdout(&["spectrum", "--plate", "uniform", "--l-max", "3"]);
    let nonzero: Vec<&str> = uniform
        .lines()
        .skip(1)
        .filter(|l| !l.ends_with(",0.0"))
        .collect();
    assert_eq!(nonzero, ["0,1.0"]);

    let half = stdout(&["spectrum", "--plate", "half", "--l-max", "4"]);
    assert!(half.lines().any(|l| l == "2,0.0"));
    assert!(half.lines().any(|l| l == "0,0.0"));
}

#[test]
fn coupling_without_turbulence_is_identity() {
    let csv = stdout(&["coupling", "--ratio", "0", "--dl-max", "5"]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "delta,T");
    assert_eq!(rows[1], "0,1.0");
    assert_eq!(rows.len(), 1 + 6);
}

#[test]
fn coupling_monte_carlo_tracks_quadrature() {
    let analytic = column(
        &stdout(&["coupling", "--ratio", "0.65", "--dl-max", "3"]),
        "T",
    );
    let mc = stdout(&[
        "coupling",
        "--ratio",
        "0.65",
        "--dl-max",
        "3",
        "--mc",
        "--realizations",
        "200",
        "--seed",
        "5",
    ]);
    let (t, se) = (column(&mc, "T"), column(&mc, "stderr"));
    for d in 0..=3 {
        let tol = (2.0 * se[d]).max(0.02);
        assert!(
            (t[d] - analytic[d]).abs() < tol,
            "delta {d}: {} vs {}",
            t[d],
            analytic[d]
        );
    }
}

#[test]
fn coincidence_is_normalized_at_zero() {
    let csv = stdout(&["coincidence", "--ratio", "0"]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "delta_rad,P");
    assert_eq!(rows.len(), 1 + 721);
    assert_eq!(rows[1 + 360], "0.0,1.0");
}

#[test]
fn dimensionality_scan_columns() {
    let csv = stdout(&["dimensionality", "--ratios", "0:0.6:0.3"]);
    assert!(csv.starts_with("ratio,D_operator,D_curve,purity\n"));
    let d = column(&csv, "D_operator");
    assert_eq!(d.len(), 3);
    assert!((d[0] - 6.0).abs() < 0.05);
    assert!(d[0] > d[1] && d[1] > d[2]);

    let op_only = stdout(&[
        "dimensionality",
        "--ratio",
        "0",
        "--method",
        "operator",
        "--plate",
        "half",
    ]);
    let row = op_only.lines().nth(1).unwrap();
    let cells: Vec<&str> = row.split(',').collect();
    assert!((cells[1].parse::<f64>().unwrap() - 3.0).abs() < 0.05);
    assert!(cells[2].is_empty());
}

#[test]
fn link_budget_both_directions() {
    let inverse = stdout(&["link", "--ratio", "0.65"]);
    let distance = column(&inverse, "distance")[0];
    assert!((distance - 2000.0).abs() < 100.0, "{distance}");
    assert!(inverse.trim_end().ends_with(",true"));

    let forward = stdout(&["link", "--distance", &distance.to_string()]);
    assert!((column(&forward, "ratio")[0] - 0.65).abs() < 1e-6);

    let far = stdout(&["link", "--distance", "1e5"]);
    assert!(far.trim_end().ends_with(",false"));
}

#[test]
fn output_is_deterministic() {
    let args = [
        "coupling",
        "--ratio",
        "0.3",
        "--dl-max",
        "2",
        "--mc",
        "--realizations",
        "100",
        "--seed",
        "9",
    ];
    assert_eq!(oamturb(&args).stdout, oamturb(&args).stdout);
    let args = ["dimensionality", "--ratios", "0:0.2:0.1"];
    assert_eq!(oamturb(&args).stdout, oamturb(&args).stdout);
}

#[test]
fn config_files_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    std::fs::write(
        &path,
        "[plate]\npreset = \"half\"\n\n[turbulence]\nratios = [0.0]\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();

    let echoed = stdout(&["config", "--config", p]);
    assert!(echoed.contains("preset = \"half\""));
    let round = dir.path().join("echo.toml");
    std::fs::write(&round, &echoed).unwrap();
    assert_eq!(
        stdout(&["config", "--config", round.to_str().unwrap()]),
        echoed
    );

    let d = column(
        &stdout(&["dimensionality", "--config", p, "--method", "operator"]),
        "D_operator",
    );
    assert!((d[0] - 3.0).abs() < 0.05);
    let d = column(
        &stdout(&[
            "dimensionality",
            "--config",
            p,
            "--plate",
            "quadrant",
            "--method",
            "operator",
        ]),
        "D_operator",
    );
    assert!((d[0] - 6.0).abs() < 0.05);

    let out = dir.path().join("spectrum.csv");
    let printed = stdout(&[
        "spectrum",
        "--config",
        p,
        "--l-max",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(printed.is_empty());
    assert!(std::fs::read_to_string(&out)
        .unwrap()
        .starts_with("l,lambda_l\n"));
}

#[test]
fn screen_dump_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("screen.bin");
    let status = oamturb(&[
        "screen",
        "--ratio",
        "0.5",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let bytes = std::fs::metadata(&out).unwrap().len();
    assert_eq!(bytes, 512 * 512 * 8);
    let header = std::fs::read_to_string(out.with_extension("hdr")).unwrap();
    assert!(header.contains("512"), "{header}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[plate]\npreset = \"quadrant\"\nbogus = 1\n").unwrap();
    let out = oamturb(&["config", "--config", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    assert_eq!(
        oamturb(&["coupling", "--ratio", "-1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        oamturb(&["spectrum", "--plate", "hexagon"]).status.code(),
        Some(2)
    );
    assert_eq!(oamturb(&["frobnicate"]).status.code(), Some(2));

    let strict = dir.path().join("strict.toml");
    std::fs::write(
        &strict,
        "[quadrature]\nradial_nodes = 4\nconvergence_tol = 1e-15\n",
    )
    .unwrap();
    let out = oamturb(&[
        "coupling",
        "--config",
        strict.to_str().unwrap(),
        "--ratio",
        "0.65",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = oamturb(&["spectrum", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/dir/x.csv"));
    let out = oamturb(&["spectrum", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(4));
}
