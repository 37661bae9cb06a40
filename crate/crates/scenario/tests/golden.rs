//! Golden-file regression: the reference parameter file and the report
//! renderings for the three builtin scenarios are checked in, and every run
//! must reproduce them byte for byte. Run with `BLESS=1` to regenerate
//! after an intentional change.

use std::fs;
use std::path::PathBuf;

use scenario::reference_network;
use scenario::report::{export_csv, method_flow_diff};
use scenario::runner::{builtin_event, run_scenario, RunReport, ScenarioConfig, DISTRIBUTED};
use supply::{load_network, save_network};

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn blessing() -> bool {
    std::env::var_os("BLESS").is_some()
}

fn check_golden(rel: &str, actual: &str) {
    let path = repo_path(rel);
    if blessing() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {rel} ({e}); run with BLESS=1"));
    assert_eq!(expected, actual, "{rel} drifted from the checked-in golden");
}

fn run(label: &str) -> RunReport {
    let cfg = ScenarioConfig::new(label, builtin_event(label).unwrap());
    run_scenario(&cfg).unwrap()
}

#[test]
fn reference_parameter_file_matches_the_generator() {
    let path = repo_path("data/reference_network.json");
    let generated = reference_network();
    if blessing() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        save_network(&generated, &path).unwrap();
        return;
    }
    let loaded = load_network(&path).expect("reference file loads");
    assert_eq!(loaded, generated, "data/reference_network.json drifted");
}

#[test]
fn metric_values_match_the_golden_csv() {
    let reports: Vec<RunReport> = ["c5", "t4", "o1"].map(run).into_iter().collect();
    let csv = export_csv(&reports).unwrap();
    check_golden("tests/golden/metrics.csv", &csv);
}

#[test]
fn t4_flow_diff_matches_the_golden_dot() {
    let report = run("t4");
    let dot = method_flow_diff(&report, DISTRIBUTED).unwrap();
    check_golden("tests/golden/flows_t4_distributed.dot", &dot);
}

#[test]
fn c5_transcript_matches_the_golden_log() {
    let report = run("c5");
    let log = &report.logs[DISTRIBUTED];
    check_golden("tests/golden/transcript_c5_distributed.log", &log.export());
}
