use std::path::Path;

use qmf::cli::{run_command, Outcome, EXIT_CHECK, EXIT_INPUT, EXIT_OK};

const HARMONIC: &str = r#"
[problem]
n = 1
rank = 1
mode = "exact"
order = 2

[lambda]
values = [1]

[potential]
terms = [{ alpha = [2], coeff = 1 }]
"#;

fn run(args: &[&str]) -> Outcome {
    run_command(std::iter::once("qmf").chain(args.iter().copied()))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn spectrum_of_harmonic_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "h.toml", HARMONIC);
    let out = run(&["spectrum", "--spec", &spec, "--degree", "3"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let values: Vec<&str> = out.documents[0]["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["eigenvalue"].as_str().unwrap())
        .collect();
    assert_eq!(values, ["1", "3", "5", "7"]);
}

#[test]
fn parity_check_on_cubic_passes() {
    let out = run(&["verify", "--preset", "cubic", "--order", "2", "--checks", "parity"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let checks = out.documents[0]["verification"].as_array().unwrap();
    assert_eq!(checks.len(), 1);
    assert_eq!(checks[0]["name"], "parity");
    assert_eq!(checks[0]["passed"], true);
}

#[test]
fn bad_level_is_an_input_error() {
    let out = run(&["compute", "--preset", "cubic", "--level", "2"]);
    assert_eq!(out.code, EXIT_INPUT);
    assert!(out.stderr.contains("E0 not in spectrum"), "{}", out.stderr);
}

#[test]
fn input_errors_exit_with_one() {
    assert_eq!(run(&["compute"]).code, EXIT_INPUT);
    assert_eq!(run(&["compute", "--preset", "nothing"]).code, EXIT_INPUT);
    assert_eq!(run(&["verify", "--preset", "cubic", "--checks", "speed"]).code, EXIT_INPUT);
    assert_eq!(run(&["compute", "--preset", "cubic", "--order", "1/3"]).code, EXIT_INPUT);
    assert_eq!(run(&["compute", "--preset", "cubic", "--mode", "fast"]).code, EXIT_INPUT);
    assert_eq!(run(&["frobnicate"]).code, EXIT_INPUT);

    let dir = tempfile::tempdir().unwrap();
    let broken = write(dir.path(), "b.toml", &HARMONIC.replace("n = 1", "n = = 1"));
    let out = run(&["compute", "--spec", &broken]);
    assert_eq!(out.code, EXIT_INPUT);
    assert!(out.stderr.contains("line 3"), "{}", out.stderr);
}

#[test]
fn failed_check_exits_with_two() {
    // a grid this coarse cannot resolve the quartic ground state
    let out = run(&["crosscheck", "--preset", "quartic", "--order", "2", "--hbar", "0.2,0.1", "--grid", "20"]);
    assert!(out.code == EXIT_CHECK || out.code == EXIT_INPUT, "{}", out.code);
    assert_ne!(out.code, EXIT_OK);
}

#[test]
fn exact_documents_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = run(&["compute", "--preset", "bundle2", "--order", "3/2", "--out", path.to_str().unwrap()]);
        assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let doc: serde_json::Value = serde_json::from_slice(&text).unwrap();
    assert_eq!(doc["schema"], 1);
    assert_eq!(doc["level"]["multiplicity"], 2);
    assert_eq!(doc["eigenvalues"][0]["terms"][0], serde_json::json!([0, "6"]));
}

#[test]
fn crosscheck_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("err.csv");
    let out = run(&["crosscheck", "--preset", "quartic", "--order", "2", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stdout);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("hbar,error\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn float_mode_and_level_index() {
    let out = run(&["verify", "--preset", "harmonic:lambda=1;1", "--level-index", "1", "--order", "2", "--mode", "float"]);
    assert_eq!(out.code, EXIT_OK, "{}{}", out.stdout, out.stderr);
    assert_eq!(out.documents[0]["level"]["multiplicity"], 2);
    assert_eq!(out.documents[0]["mode"], "float");
}
