use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mpisv(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpisv"))
        .args(args)
        .env("MPISV_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = "
name = small
grid.cell_count = 8, 8
scanner.measurement_time_s = 0.2e-3
scanner.sample_interval_s = 1e-6
particle.diameters_nm = 30
output.directory = small
";

#[test]
fn validate_reports_every_violation_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.cfg",
        "grid.dimension = 1\ngrid.fov_min_mm = -12.5\ngrid.fov_max_mm = 12.5\ngrid.cell_size_mm = 0.1\n\
         scanner.mode = ffl\nscanner.gradient_diag_t_per_m_per_mu0 = -1\n\
         scanner.drive_amplitude_t_per_mu0 = 0.012\nscanner.drive_frequency_hz = 2.5e6/102\n\
         scanner.receive_coils = 1\nquadrature.gauss_order = 0\n",
    );
    let out = mpisv(&["validate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("FFL scanning needs dimension 2 or 3"), "{err}");
    assert!(err.contains("gauss_order"), "{err}");
}

#[test]
fn validate_accepts_shipped_configs() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let out = mpisv(&["validate", path.to_str().unwrap()], dir.path());
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        }
    }
}

#[test]
fn simulate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let out = mpisv(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("small");
    for f in ["spectrum.csv", "fit.txt", "plot.svg", "manifest.txt", "config.cfg"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(run.join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("n,sigma,sigma_normalized\n1,"));
    assert_eq!(csv.lines().count(), 65);

    let spectrum = run.join("spectrum.csv");
    let out = mpisv(&["fit", spectrum.to_str().unwrap(), "--model", "power-law", "--window", "2:20"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("window_first=2") && text.contains("power_law.exponent="), "{text}");
    assert!(!text.contains("exponential."));
}

#[test]
fn fit_window_past_rank_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_config(dir.path(), "s.csv", "n,sigma,sigma_normalized\n1,1,1\n2,0.5,0.5\n3,0,0\n");
    let out = mpisv(&["fit", csv.to_str().unwrap(), "--window", "1:3"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_singleton_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.cfg", SMALL);
    let out = mpisv(&["compare", a.to_str().unwrap(), "--window", "2:10"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("trivially consistent"));
    assert!(dir.path().join("compare/comparison.svg").exists());

    let b = write_config(dir.path(), "b.cfg", &SMALL.replace("8, 8", "6, 6").replace("name = small", "name = b"));
    let out = mpisv(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--window", "2:10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("share the spatial discretization"));
}

#[test]
fn missing_config_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpisv(&["simulate", "/nonexistent/x.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
