//! End-to-end checks of the binary: report contents, determinism and exit
//! codes.

use std::process::Command;

fn ijets() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ijets"))
}

#[test]
fn involutivity_text_report() {
    let out = ijets()
        .args(["involutivity", "--catalog", "running", "--order", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "indices 7 6 3; characters 2 0 0; involutive: yes\n");
}

#[test]
fn involutivity_exit_code_on_failure() {
    // the raw two-reparametrization chart is not involutive at order 1
    let out = ijets()
        .args([
            "involutivity",
            "--catalog",
            "ex12-original",
            "--order",
            "1",
            "--reduced",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_catalog_id_is_input_error() {
    let out = ijets()
        .args(["involutivity", "--catalog", "nope", "--order", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn normal_form_csv_is_deterministic() {
    let run = || {
        let out = ijets()
            .args([
                "normal-form",
                "--catalog",
                "running",
                "--order",
                "4",
                "--format",
                "csv",
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert!(a.starts_with("dep,index,kind,value\n"));
    assert!(a.contains("invariant"));
    assert!(a.contains("phantom"));
}

#[test]
fn probe_delta_flags_irregular_chart() {
    let out = ijets()
        .args([
            "probe-delta",
            "--catalog",
            "ex12-original",
            "--order",
            "1",
            "--reduced",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("delta-irregular: yes"));
}

#[test]
fn catalog_dir_override_is_honored() {
    let dir = std::env::temp_dir().join(format!("ijets-cli-{}", std::process::id()));
    let out = ijets()
        .args(["dump-catalog", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = ijets()
        .env("IJETS_CATALOG_DIR", dir.to_str().unwrap())
        .args(["involutivity", "--catalog", "cm-complex", "--order", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "indices 0 0 2 2; characters 2 2 0 0; involutive: yes\n");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn chain_command_revalidates() {
    let out = ijets().args(["chain", "--catalog", "ex10"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("max deviation"));
}

#[test]
fn spec_file_input_and_csv_report() {
    // export a system, feed it back through --spec, ask for the CSV report
    let dir = std::env::temp_dir().join(format!("ijets-spec-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("reduced.json");
    let out = ijets()
        .args([
            "reduce",
            "--catalog",
            "running",
            "--order",
            "2",
            "--format",
            "json",
            "--out",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = ijets()
        .args([
            "involutivity",
            "--spec",
            path.to_str().unwrap(),
            "--order",
            "2",
            "--format",
            "csv",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text,
        "class,t,beta,alpha\n1,6,4,2\n2,3,3,0\n"
    );
    std::fs::remove_dir_all(&dir).ok();
}
