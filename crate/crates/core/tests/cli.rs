//! Golden-file tests for every `itbn` subcommand.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the expected files.

use std::fs;
use std::path::{Path, PathBuf};

use itbn::learn::FitResult;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

/// Runs the CLI with `{data}` and `{tmp}` substituted in the arguments.
fn itbn(args: &str, tmp: &Path) -> Run {
    let data = data_dir();
    let mut argv = vec!["itbn".to_string()];
    argv.extend(args.split_whitespace().map(|a| {
        a.replace("{data}", data.to_str().unwrap())
            .replace("{tmp}", tmp.to_str().unwrap())
    }));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = itbn::cli::run(argv, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden_dir()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing golden file {name}; run with UPDATE_GOLDEN=1"));
    assert_eq!(actual, expected, "output differs from golden file {name}");
}

fn ok(args: &str, tmp: &Path) -> String {
    let r = itbn(args, tmp);
    assert_eq!(r.code, 0, "`{args}` failed: {}", r.stderr);
    r.stdout
}

fn fitted(tmp: &Path) {
    ok(
        "fit --model {data}/model.json --data {data}/obs.csv --out {tmp}/params.json",
        tmp,
    );
}

const INPUTS: &str = "--model {data}/model.json --params {tmp}/params.json --data {data}/obs.csv";

#[test]
fn validate_accepts_the_model() {
    let tmp = tempfile::tempdir().unwrap();
    check_golden(
        "validate.stdout",
        &ok("validate --model {data}/model.json", tmp.path()),
    );
}

#[test]
fn validate_reports_a_cycle() {
    let tmp = tempfile::tempdir().unwrap();
    let r = itbn("validate --model {data}/cycle.json", tmp.path());
    assert_eq!(r.code, 2);
    check_golden("validate_cycle.stdout", &r.stdout);
    check_golden("validate_cycle.stderr", &r.stderr);
}

#[test]
fn fit_writes_params() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(
        "fit --model {data}/model.json --data {data}/obs.csv --out {tmp}/params.json",
        tmp.path(),
    );
    check_golden("fit.stdout", &stdout);
    check_golden(
        "fit.params.json",
        &fs::read_to_string(tmp.path().join("params.json")).unwrap(),
    );
}

#[test]
fn params_round_trip_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    let text = fs::read_to_string(tmp.path().join("params.json")).unwrap();
    let fit: FitResult = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&fit).unwrap() + "\n", text);
    let again: FitResult = serde_json::from_str(&serde_json::to_string(&fit).unwrap()).unwrap();
    assert_eq!(again, fit);
    for (a, b) in fit.processes.iter().zip(&again.processes) {
        assert_eq!(a.log_likelihood.to_bits(), b.log_likelihood.to_bits());
    }
}

#[test]
fn fit_with_knot_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(
        "fit --model {data}/model.json --data {data}/obs.csv --out {tmp}/params.json --select-knots 0..2",
        tmp.path(),
    );
    check_golden("fit_select.stdout", &stdout);
    let fit: FitResult =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("params.json")).unwrap()).unwrap();
    assert_eq!(fit.knot_selection.len(), 1);
    assert_eq!(fit.knot_selection[0].1.scores.len(), 3);
}

#[test]
fn fit_records_interpolation() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        "fit --model {data}/model.json --data {data}/obs.csv --out {tmp}/params.json --interpolate-parents",
        tmp.path(),
    );
    let fit: FitResult =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("params.json")).unwrap()).unwrap();
    assert!(fit.settings.interpolate_parents);
}

#[test]
fn loglik_prints_a_scalar() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    let stdout = ok(&format!("loglik {INPUTS}"), tmp.path());
    check_golden("loglik.stdout", &stdout);
    let fit: FitResult =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("params.json")).unwrap()).unwrap();
    let ll: f64 = stdout.trim().parse().unwrap();
    assert!((ll - fit.log_likelihood).abs() < 1e-9 * fit.log_likelihood.abs().max(1.0));
}

#[test]
fn loglik_of_empty_data_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    fs::write(tmp.path().join("empty.csv"), "entity,time,process,value\n").unwrap();
    let stdout = ok(
        "loglik --model {data}/model.json --params {tmp}/params.json --data {tmp}/empty.csv",
        tmp.path(),
    );
    assert_eq!(stdout, "0\n");
}

#[test]
fn smooth_writes_posterior_csv() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    fs::write(
        tmp.path().join("partial.csv"),
        fs::read_to_string(data_dir().join("obs.csv"))
            .unwrap()
            .lines()
            .filter(|l| !(l.starts_with("e2,") && l.contains(",X,")))
            .collect::<Vec<_>>()
            .join("\n"),
    )
    .unwrap();
    let stdout = ok(
        "smooth --model {data}/model.json --params {tmp}/params.json --data {tmp}/partial.csv --entity e2 --out {tmp}/smooth.csv",
        tmp.path(),
    );
    check_golden("smooth.stdout", &stdout);
    check_golden(
        "smooth.csv",
        &fs::read_to_string(tmp.path().join("smooth.csv")).unwrap(),
    );
}

#[test]
fn predict_writes_json() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    check_golden(
        "predict.json",
        &ok(
            &format!("predict {INPUTS} --entity e1 --at 7.5"),
            tmp.path(),
        ),
    );
}

#[test]
fn find_time_exact() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    let stdout = ok(
        &format!("find-time {INPUTS} --entity e1 --process Y --slice 3 --target 3.1 --bracket 2 3"),
        tmp.path(),
    );
    check_golden("find_time.json", &stdout);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["residual"].as_f64().unwrap().abs() <= 1e-9);
    assert!(v["iterations"].as_u64().is_some());
}

#[test]
fn find_time_monte_carlo_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    let args = format!("find-time {INPUTS} --entity e1 --process Y --slice 3 --target 3.1 --bracket 2 3 --mc 2000 --seed 9 --tol 1e-3");
    let first = ok(&args, tmp.path());
    assert_eq!(first, ok(&args, tmp.path()));
    check_golden("find_time_mc.json", &first);
}

#[test]
fn find_time_quantile() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    let stdout = ok(
        &format!("find-time {INPUTS} --entity e1 --process Y --slice 3 --target 3.4 --bracket 2 3 --quantile 0.9"),
        tmp.path(),
    );
    check_golden("find_time_quantile.json", &stdout);
}

#[test]
fn find_time_rejects_a_wrong_slice_index() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    let r = itbn(
        &format!("find-time {INPUTS} --entity e1 --process Y --slice 5 --target 3.1 --bracket 2 3"),
        tmp.path(),
    );
    assert_eq!(r.code, 1);
    let v: serde_json::Value = serde_json::from_str(&r.stderr).unwrap();
    assert_eq!(v["error"], "invalid-parameter");
}

#[test]
fn find_time_without_a_root_is_a_numeric_failure() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    let r = itbn(
        &format!("find-time {INPUTS} --entity e1 --process Y --slice 3 --target 100 --bracket 2 3"),
        tmp.path(),
    );
    assert_eq!(r.code, 3);
    check_golden("find_time_no_root.stderr", &r.stderr);
}

#[test]
fn size_compare_table() {
    let tmp = tempfile::tempdir().unwrap();
    check_golden(
        "size_compare.stdout",
        &ok("size-compare --data {data}/obs.csv", tmp.path()),
    );
    check_golden(
        "size_compare_two_hidden.stdout",
        &ok(
            "size-compare --data {data}/obs.csv --hidden-processes 2",
            tmp.path(),
        ),
    );
}

#[test]
fn prop3_sim_table() {
    let tmp = tempfile::tempdir().unwrap();
    check_golden(
        "prop3_sim.stdout",
        &ok("prop3-sim --n 1000 --p 0.5 --reps 5 --seed 3", tmp.path()),
    );
}

#[test]
fn simulate_on_a_timeline_file() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    let stdout = ok(
        "simulate --model {data}/model.json --params {tmp}/params.json --timeline {data}/timeline.txt --seed 5 --entities 2 --out {tmp}/sim.csv",
        tmp.path(),
    );
    check_golden("simulate.stdout", &stdout);
    check_golden(
        "simulate.csv",
        &fs::read_to_string(tmp.path().join("sim.csv")).unwrap(),
    );
}

#[test]
fn simulate_geometric_then_refit() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    ok(
        "simulate --model {data}/model.json --params {tmp}/params.json --geometric 40,0.3 --seed 5 --entities 3 --out {tmp}/sim.csv",
        tmp.path(),
    );
    check_golden(
        "simulate_geometric.csv",
        &fs::read_to_string(tmp.path().join("sim.csv")).unwrap(),
    );
    ok(
        "fit --model {data}/model.json --data {tmp}/sim.csv --out {tmp}/refit.json",
        tmp.path(),
    );
}

#[test]
fn plot_writes_csv_and_svg() {
    let tmp = tempfile::tempdir().unwrap();
    fitted(tmp.path());
    let stdout = ok(
        &format!("plot {INPUTS} --entity e1 --process Y --grid 0.5 --out {{tmp}}/plot.csv --svg {{tmp}}/plot.svg"),
        tmp.path(),
    );
    check_golden("plot.stdout", &stdout);
    let csv = fs::read_to_string(tmp.path().join("plot.csv")).unwrap();
    check_golden("plot.csv", &csv);
    check_golden(
        "plot.svg",
        &fs::read_to_string(tmp.path().join("plot.svg")).unwrap(),
    );
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[2] <= v[1] && v[1] <= v[3]);
    }
}

#[test]
fn synth_glucose_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(
        "synth-glucose --entities 2 --per-entity 10 --seed 4 --out {tmp}/g.csv --model-out {tmp}/g.json",
        tmp.path(),
    );
    check_golden("synth_glucose.stdout", &stdout);
    check_golden(
        "synth_glucose.csv",
        &fs::read_to_string(tmp.path().join("g.csv")).unwrap(),
    );
    check_golden(
        "synth_glucose.model.json",
        &fs::read_to_string(tmp.path().join("g.json")).unwrap(),
    );
}

#[test]
fn duplicate_rows_are_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = itbn(
        "fit --model {data}/model.json --data {data}/duplicate.csv --out {tmp}/p.json",
        tmp.path(),
    );
    assert_eq!(r.code, 2);
    check_golden("duplicate.stderr", &r.stderr);
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let r = itbn("loglik --model {data}/model.json", tmp.path());
    assert_eq!(r.code, 1);
    let v: serde_json::Value = serde_json::from_str(&r.stderr).unwrap();
    assert_eq!(v["error"], "usage");
    assert_eq!(v["exit_code"], 1);
    assert_eq!(itbn("no-such-command", tmp.path()).code, 1);
    assert_eq!(itbn("--help", tmp.path()).code, 0);
}
