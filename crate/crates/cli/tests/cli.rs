//! End-to-end tests of the `rdcert` binary: output conventions, exit codes,
//! config handling, and determinism of the file outputs.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rdcert"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Extracts the float after `name=` from key=value output.
fn field(text: &str, name: &str) -> f64 {
    let prefix = format!("{name}=");
    text.lines()
        .find_map(|line| line.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {name} in output:\n{text}"))
        .parse()
        .expect("parsable float")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn spectrum_prints_eigenvalues_and_signals_parabolicity() {
    let out = run(&["spectrum", "--m", "2", "--a", "3", "--b", "1", "--c", "1"]);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.contains("parabolic=true"));
    assert!((field(&text, "lambda_1") - 2.0).abs() < 1e-12);
    assert!((field(&text, "lambda_2") - 4.0).abs() < 1e-12);

    let out = run(&["spectrum", "--m", "2", "--a", "0.9", "--b", "1", "--c", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stdout_of(&out).contains("parabolic=false"));
}

#[test]
fn certify_exit_code_follows_the_verdict() {
    let base = ["--m", "2", "--a", "3", "--b", "1", "--c", "1"];
    let mut args = vec!["certify"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--theta", "1.2"]);
    let out = run(&args);
    assert_eq!(code(&out), 0);
    assert!(stdout_of(&out).contains("holds=true"));

    let mut args = vec!["certify"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--theta", "0.8"]);
    let out = run(&args);
    assert_eq!(code(&out), 4);
    let text = stdout_of(&out);
    assert!(text.contains("holds=false"));
    assert!(text.contains("witness_minor_index=2"));
    assert!(text.contains("witness_chain=0"));
}

#[test]
fn theta_search_lands_just_above_the_closing_threshold() {
    let out = run(&["theta-search", "--m", "2", "--a", "3", "--b", "1", "--c", "1"]);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.contains("holds=true"));
    let theta = field(&text, "theta_1");
    // The two-component threshold is 3/(2 sqrt(2)); bisection should pin it
    // from above.
    let threshold = 3.0 / (2.0 * 2.0_f64.sqrt());
    assert!(theta > threshold, "theta {theta} below threshold");
    assert!(theta < threshold + 1e-6, "theta {theta} left slack");
}

#[test]
fn theta_search_reports_infeasible_spectra_with_exit_4() {
    let out = run(&["theta-search", "--m", "2", "--a", "0.9", "--b", "1", "--c", "1"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn config_file_supplies_values_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[matrix]\nm = 2\na = 3.0\nb = 1.0\nc = 1.0\n",
    );
    let out = run(&["spectrum", "--config", &cfg]);
    assert_eq!(code(&out), 0);
    assert!((field(&stdout_of(&out), "lambda_1") - 2.0).abs() < 1e-12);

    let out = run(&["spectrum", "--config", &cfg, "--a", "4"]);
    assert_eq!(code(&out), 0);
    assert!((field(&stdout_of(&out), "lambda_1") - 3.0).abs() < 1e-12);
}

#[test]
fn config_problems_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[matrix]\nm = 2\na = 3.0\nb = 1.0\nc = 1.0\nextra = 7\n",
    );
    let out = run(&["spectrum", "--config", &cfg]);
    assert_eq!(code(&out), 2, "unknown key must be refused");

    let out = run(&["spectrum"]);
    assert_eq!(code(&out), 2, "missing matrix must be refused");

    let out = run(&["spectrum", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&out), 2);

    let out = run(&[
        "certify", "--m", "2", "--a", "3", "--b", "1", "--c", "1", "--theta", "1.0,oops",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn regions_enumerates_and_tests_points() {
    let out = run(&["regions", "--m", "3", "--a", "2", "--b", "1", "--c", "1"]);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.contains("count=8"));
    assert!(text.contains("region_0="));

    let out = run(&[
        "regions", "--m", "2", "--a", "3", "--b", "1", "--c", "1", "--point", "1.0,1.0",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.contains("point_in_region=true"));

    // The enumeration cap turns huge component counts into a capacity error.
    let out = run(&["regions", "--m", "20", "--a", "3", "--b", "1", "--c", "1"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn audit_always_exits_clean_and_reports_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        concat!(
            "[matrix]\nm = 2\na = 3.0\nb = 1.0\nc = 1.0\n\n",
            "[reaction]\nkind = \"lotka\"\nrates = [1.0, 0.5]\n",
            "couplings = [0.5, 0.1, 0.1, 0.5]\n",
        ),
    );
    let out = run(&["audit", "--config", &cfg]);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.contains("quasi_positive=true"));
    assert!(text.contains("all_hold=true"));
    assert!(text.contains("degree_bound=2"));
}

fn simulate_config(dir: &Path) -> String {
    write_config(
        dir,
        concat!(
            "[matrix]\nm = 2\na = 3.0\nb = 1.0\nc = 1.0\n\n",
            "[grid]\nn_x = 30\nlength = 1.0\n\n",
            "[initial]\nkind = \"sin\"\noffset = 0.5\namplitude = 0.25\n\n",
            "[time]\ndt = 1e-3\nt_end = 1e-2\nmonitor_every = 2\nn_snapshots = 3\n",
        ),
    )
}

#[test]
fn simulate_writes_deterministic_csv_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path());
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    let snaps = dir.path().join("snaps.bin");

    let out = run(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        csv_a.to_str().unwrap(),
        "--snapshots",
        snaps.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let out = run(&["simulate", "--config", &cfg, "--out", csv_b.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let bytes_a = std::fs::read(&csv_a).unwrap();
    let bytes_b = std::fs::read(&csv_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "identical runs must write identical bytes");

    let text = String::from_utf8(bytes_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,L,Z,min_slack,min_w_1,min_w_2,mass_1,mass_2"
    );
    // Rows at steps 0, 2, ..., 10.
    assert_eq!(lines.count(), 6);

    // Three records: (u64 m, u64 n_points, f64 t) header plus the field.
    let blob = std::fs::read(&snaps).unwrap();
    let n_points = 32;
    let record = 24 + 2 * n_points * 8;
    assert_eq!(blob.len(), 3 * record);
    assert_eq!(u64::from_le_bytes(blob[0..8].try_into().unwrap()), 2);
    assert_eq!(
        u64::from_le_bytes(blob[8..16].try_into().unwrap()),
        n_points as u64
    );
    let t0 = f64::from_le_bytes(blob[16..24].try_into().unwrap());
    assert_eq!(t0, 0.0);
    let t_last = f64::from_le_bytes(
        blob[2 * record + 16..2 * record + 24].try_into().unwrap(),
    );
    assert!((t_last - 1e-2).abs() < 1e-12);
}

#[test]
fn simulate_stdout_carries_the_csv_when_no_file_is_given() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path());
    let out = run(&["simulate", "--config", &cfg]);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.starts_with("t,L,Z,min_slack"));
    // The human summary must stay off the data stream.
    assert!(!text.contains("dt_effective"));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dt_effective="));
    assert!(err.contains("blow_up=none"));
}

#[test]
fn simulate_blow_up_exits_5_after_writing_the_partial_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        concat!(
            "[matrix]\nm = 2\na = 3.0\nb = 1.0\nc = 1.0\n\n",
            "[grid]\nn_x = 8\nlength = 1.0\n\n",
            "[reaction]\nkind = \"quadratic\"\ncoef = 1.0\n\n",
            "[initial]\nkind = \"const\"\nvalues = [1.0, 1.0]\n\n",
            "[time]\ndt = 1e-3\nt_end = 2.0\nmonitor_every = 100\n",
        ),
    );
    let csv = dir.path().join("monitors.csv");
    let out = run(&["simulate", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 5);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("blow_up=1."));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().count() > 1, "partial monitors still written");
}

#[test]
fn verify_checks_the_form_sign_along_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path());
    let out = run(&["verify", "--config", &cfg, "--theta", "1.2"]);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.contains("snapshot_0_holds=true"));
    assert!(text.contains("holds=true"));

    let out = run(&["verify", "--config", &cfg, "--theta", "0.8"]);
    assert_eq!(code(&out), 4);
    assert!(stdout_of(&out).contains("holds=false"));
}
