//! End-to-end runs of the `vix-mlmc` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vix_mlmc::cli::{resolve, Command as Cmd, Overrides, Preset, RunConfig};
use vix_mlmc::model::ForwardCurve;
use vix_mlmc::output::{read_manifest, sha256_hex, OUTPUT_DIR_ENV};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vix-mlmc"));
    c.env_remove(OUTPUT_DIR_ENV);
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).arg("--output-dir").arg(dir).output().unwrap()
}

fn files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(ext))
        .collect();
    v.sort();
    v
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_PRICE: [&str; 7] = ["price", "--n", "8", "--M", "5000", "--seed", "3"];

#[test]
fn price_writes_csv_and_manifest_named_by_experiment_and_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&SMALL_PRICE, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains('±') && stdout(&o).contains("cost"), "{}", stdout(&o));
    let csv = files(dir.path(), ".csv");
    assert_eq!(csv.len(), 1);
    let name = csv[0].file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.starts_with("price_rect_") && name.ends_with("Z.csv"), "{name}");
    let manifests = files(dir.path(), ".manifest.json");
    assert_eq!(manifests.len(), 1);
    assert_eq!(manifests[0].to_string_lossy().replace(".manifest.json", ".csv"), csv[0].to_string_lossy());
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for args in [
        &SMALL_PRICE[..],
        &["price", "--estimator", "mlmc", "--epsilon", "0.02", "--seed", "5"][..],
        &["strong-error", "--n-values", "2,4", "--n-ref", "8", "--M", "2000", "--scheme", "trap"][..],
    ] {
        for d in [&a, &b] {
            let o = run(args, d.path());
            assert!(o.status.success(), "{}", stderr(&o));
        }
    }
    let (fa, fb) = (files(a.path(), ".csv"), files(b.path(), ".csv"));
    assert_eq!(fa.len(), 3);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn manifest_round_trips_the_run_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["weak-error", "--preset", "fig2", "--n-values", "2,3", "--M", "2000", "--scheme", "trap"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let path = &files(dir.path(), ".manifest.json")[0];
    let m = read_manifest::<RunConfig>(path).unwrap();
    let flags = Overrides {
        preset: Some(Preset::Fig2),
        n_values: Some(vec![2, 3]),
        m: Some(2000),
        scheme: Some(vix_mlmc::scheme::SchemeKind::Trapezoid),
        output_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let expected = resolve(Cmd::WeakError, &flags).unwrap();
    assert_eq!(m.config, expected);
    assert_eq!(m.schema_version, vix_mlmc::output::MANIFEST_SCHEMA_VERSION);
    assert_eq!(m.config_sha256, sha256_hex(serde_json::to_string(&expected).unwrap().as_bytes()));
    // a manifest's config is itself a valid config file
    let toml_path = dir.path().join("again.toml");
    std::fs::write(&toml_path, toml::to_string(&m.config).unwrap()).unwrap();
    let again = resolve(Cmd::WeakError, &Overrides { config: Some(toml_path), ..Default::default() }).unwrap();
    assert_eq!(again, expected);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "preset = \"fig3\"\nseed = 9\n[model]\neta = 0.7\n[estimator]\nn = 12\nm = 3000\n[payoff]\nkind = \"put\"\nstrike = 0.2\n",
    )
    .unwrap();
    let c = resolve(Cmd::Price, &Overrides { config: Some(cfg.clone()), n: Some(6), ..Default::default() }).unwrap();
    assert_eq!(c.estimator.n, 6);
    assert_eq!(c.estimator.m, 3000);
    assert_eq!(c.model.eta, 0.7);
    assert_eq!(c.model.h, 0.1);
    assert_eq!(c.seed, 9);
    assert_eq!(c.payoff, vix_mlmc::payoff::Payoff::Put { strike: 0.2 });
    assert!(c.estimator.use_cv, "preset from the file applies");
    let o = run(&["price", "--config", cfg.to_str().unwrap(), "--n", "6", "--no-cv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("n=6 M=3000]"), "{}", stdout(&o));
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\nhurst = 0.1\n").unwrap();
    let o = run(&["price", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hurst"), "{}", stderr(&o));
}

#[test]
fn x0_curve_is_read_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("x0.csv");
    std::fs::write(&curve, "u,x0\n0.5,-3.0\n0.55,-2.9\n0.6,-2.8\n").unwrap();
    let flags = Overrides {
        x0_csv: Some(curve.clone()),
        x0_interp: vix_mlmc::model::Interpolation::Linear,
        ..Default::default()
    };
    let c = resolve(Cmd::Price, &flags).unwrap();
    assert!(matches!(c.model.x0, ForwardCurve::Linear { .. }));
    assert!((c.model.x0.eval(0.525) + 2.95).abs() < 1e-12);
    let o = run(&["price", "--x0-csv", curve.to_str().unwrap(), "--n", "6", "--M", "1000"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    // Lambda needs a flat curve; auto planning falls back to pilot constants
    let o = run(
        &["price", "--x0-csv", curve.to_str().unwrap(), "--estimator", "mlmc", "--plan-mode", "lambda"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("flat"), "{}", stderr(&o));
}

#[test]
fn malformed_x0_csv_is_a_usage_error_and_missing_file_is_io() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "u,x0\n0.5,abc\n").unwrap();
    let o = run(&["price", "--x0-csv", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = run(&["price", "--x0-csv", dir.path().join("missing.csv").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn exit_codes_follow_error_categories() {
    let dir = tempfile::tempdir().unwrap();
    // usage: unknown flag, invalid values, missing strike
    assert_eq!(run(&["price", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["price", "--hurst", "1.5"], dir.path()).status.code(), Some(2));
    let o = run(&["price", "--payoff", "call"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing strike"));
    // io: output directory is a regular file
    let file = dir.path().join("not-a-dir");
    std::fs::write(&file, "").unwrap();
    let o = bin().args(SMALL_PRICE).arg("--output-dir").arg(&file).output().unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    // success
    assert_eq!(run(&SMALL_PRICE, dir.path()).status.code(), Some(0));
}

#[test]
fn validation_reports_every_problem_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["price", "--hurst", "0", "--eta", "-1", "--delta", "0", "--M", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for field in ["h:", "eta:", "delta:", "m:"] {
        assert!(err.contains(field), "missing {field} in {err}");
    }
}

#[test]
fn lambda_plan_outside_its_hypothesis_suggests_pilot_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["price", "--hurst", "0.6", "--estimator", "mlmc", "--plan-mode", "lambda"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0 < H < 1/2") && stderr(&o).contains("pilot"), "{}", stderr(&o));
    let o = run(&["price", "--hurst", "0.6", "--estimator", "mlmc", "--epsilon", "0.05", "--plan-mode", "auto"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn presets_resolve_to_complete_configs() {
    let c = resolve(Cmd::MseCost, &Overrides { preset: Some(Preset::Fig3), ..Default::default() }).unwrap();
    assert_eq!(c.mse.epsilons, vec![0.04, 0.02, 0.01, 0.005]);
    assert_eq!(c.mse.n_mse, 100);
    assert_eq!(c.mse.reference_price, 0.121971);
    let c = resolve(Cmd::MseCost, &Overrides { preset: Some(Preset::Fig3), paper_scale: true, ..Default::default() }).unwrap();
    assert_eq!(c.mse.n_mse, 400);
    let c = resolve(Cmd::StrongError, &Overrides { preset: Some(Preset::Fig1), paper_scale: true, ..Default::default() }).unwrap();
    assert_eq!(c.strong.n_ref, 2000);
    assert!(c.strong.n_values.iter().all(|n| 2000 % n == 0));
    let c = resolve(Cmd::Price, &Overrides { preset: Some(Preset::Fig2), ..Default::default() }).unwrap();
    assert_eq!((c.model.h, c.model.t, c.estimator.n, c.estimator.m), (0.3, 0.25, 400, 100_000));
}

#[test]
fn flat_model_price_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["price", "--eta", "0", "--x0", "-2.896", "--kappa", "0.1", "--M", "1000"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let exact = (-1.448f64).exp() - 0.1;
    assert!(stdout(&o).contains(&format!("{exact:.9} ± 0.000e0")), "{}", stdout(&o));
}

#[test]
fn covariance_check_passes_and_json_output_works() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["covariance-check", "--pairs", "100", "--seed", "7", "--format", "json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let json = files(dir.path(), ".json").into_iter().find(|p| !p.to_string_lossy().ends_with(".manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(json).unwrap()).unwrap();
    assert!(v["max_rel_deviation"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["pairs"].as_array().unwrap().len(), 100);
}

#[test]
fn output_directory_defaults_to_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(SMALL_PRICE).env(OUTPUT_DIR_ENV, dir.path()).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(files(dir.path(), ".csv").len(), 1);
}

#[test]
fn mse_cost_writes_one_csv_per_family() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["mse-cost", "--epsilons", "0.08,0.04", "--n-mse", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> =
        files(dir.path(), ".csv").iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names.len(), 3);
    for tag in ["mc-rect", "ml-rect", "ml-trap"] {
        assert!(names.iter().any(|n| n.starts_with(&format!("mse-cost_{tag}_"))), "{names:?}");
    }
}
