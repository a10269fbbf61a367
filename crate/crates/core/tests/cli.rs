use std::path::Path;
use std::process::{Command, Output};

fn riga(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riga-qep"))
        .args(args)
        .current_dir(dir)
        .env_remove("RIGA_QEP_THREADS")
        .output()
        .unwrap()
}

const SMALL: &str = "problem = \"acoustic\"\np = 2\nne = 8\nnev = 4\n";

#[test]
fn solve_writes_identical_outputs_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let mut csv = Vec::new();
    for out in ["a", "b"] {
        let o = riga(&["solve", "--config", "small.toml", "--seed", "7", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csv.push(std::fs::read(dir.path().join(out).join("eigenpairs.csv")).unwrap());
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(out).join("report.json")).unwrap()).unwrap();
        assert_eq!(report["config"]["seed"], 7);
        let c = &report["counters"];
        let sum: f64 = ["fa", "fb", "mv", "vv"].iter().map(|k| c[k]["flops"].as_f64().unwrap()).sum();
        assert_eq!(c["total_flops"].as_f64().unwrap(), sum);
    }
    assert_eq!(csv[0], csv[1]);
    assert!(csv[0].len() > 40);
}

#[test]
fn assemble_writes_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let o = riga(&["assemble", "--set", "problem=em", "--set", "p=2", "--set", "ne=4", "--out", "m"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["K.mtx", "C.mtx", "M.mtx", "ordering.txt", "report.json"] {
        assert!(dir.path().join("m").join(f).exists(), "{f} missing");
    }
    let k = std::fs::read_to_string(dir.path().join("m/K.mtx")).unwrap();
    assert!(k.starts_with("%%MatrixMarket matrix coordinate"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = riga(&["solve", "--set", "degree=3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degree"));
    let o = riga(&["solve", "--config", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn a_shift_on_an_eigenvalue_exits_with_the_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    // the zero eigenvalue of the gradient kernel makes Q(0) = K singular
    let o = riga(
        &["solve", "--set", "problem=em", "--set", "p=2", "--set", "ne=4", "--set", "shift=0.0", "--out", "s"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cost_model_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = riga(&["cost-model", "--n", "1024", "--p", "3", "--nev", "20", "--disc", "riga"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 2, "{text}");
}
