use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn heartsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heartsplit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&heartsplit(&["--help"])), 0);
    assert_eq!(code(&heartsplit(&["--version"])), 0);
    assert_eq!(code(&heartsplit(&["eval", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&heartsplit(&[])), 1);
    assert_eq!(code(&heartsplit(&["frobnicate"])), 1);
    assert_eq!(code(&heartsplit(&["simulate"])), 1);
}

#[test]
fn eval_without_weights_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = heartsplit(&["eval", "--data", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--weights"));
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = dir.path().join("w.bin");
    assert_eq!(
        code(&heartsplit(&[
            "train",
            "--data",
            s(&missing),
            "--out",
            s(&out)
        ])),
        2
    );
    assert_eq!(code(&heartsplit(&["sqa", s(&missing.join("a.csv"))])), 2);
}

#[test]
fn bad_values_exit_one() {
    assert_eq!(code(&heartsplit(&["simulate", "--case", "IV"])), 1);
    assert_eq!(code(&heartsplit(&["mac-report", "--baseline", "oops"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "gate.hrv_threshold = -3\n").unwrap();
    assert_eq!(code(&heartsplit(&["--config", s(&cfg), "mac-report"])), 1);
    fs::write(&cfg, "no.such.key = 1\n").unwrap();
    assert_eq!(code(&heartsplit(&["--config", s(&cfg), "mac-report"])), 1);
}

#[test]
fn corrupt_weights_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.bin");
    fs::write(&w, b"garbage").unwrap();
    let ecg = dir.path().join("x.csv");
    fs::write(&ecg, "0\n").unwrap();
    assert_eq!(
        code(&heartsplit(&["infer", "--weights", s(&w), s(&ecg)])),
        2
    );
}

#[test]
fn simulate_is_deterministic() {
    let a = heartsplit(&["simulate", "--case", "II", "--seed", "1"]);
    let b = heartsplit(&["simulate", "--case", "II", "--seed", "1"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("NOISE_REPORT,60,"));
}

#[test]
fn mac_report_lists_both_sides() {
    let o = heartsplit(&["mac-report", "--baseline", "ref:1000000:50000"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("edge params      607"));
    assert!(text.contains("fog params       3804"));
    assert!(text.contains("ref,1000000,50000"));
}

#[test]
fn synth_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let w1 = dir.path().join("w1.bin");
    let w2 = dir.path().join("w2.bin");
    let o = heartsplit(&[
        "synth",
        "--out",
        s(&data),
        "--records",
        "2",
        "--duration",
        "60",
        "--seed",
        "4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("syn000.csv").exists());
    assert!(data.join("syn000.meta").exists());
    assert!(data.join("syn001.ann").exists());

    let o = heartsplit(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&w1),
        "--epochs",
        "3",
        "--seed",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = heartsplit(&[
        "train-edge-head",
        "--weights",
        s(&w1),
        "--data",
        s(&data),
        "--out",
        s(&w2),
        "--epochs",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let report = dir.path().join("eval.txt");
    let o = heartsplit(&[
        "eval",
        "--weights",
        s(&w2),
        "--data",
        s(&data),
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("task,se,sp,ppv,acc"));
    assert!(text.contains("normal_vs_abnormal,"));

    let o = heartsplit(&["infer", "--weights", s(&w2), s(&data.join("syn000.csv"))]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().count() > 10);

    let summary = dir.path().join("traffic.json");
    let o = heartsplit(&[
        "run-edge",
        "--weights",
        s(&w2),
        s(&data.join("syn001.csv")),
        "--summary",
        s(&summary),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("HELLO,1,51"));

    let o = heartsplit(&[
        "energy-report",
        "--weights",
        s(&w2),
        "--case-ii",
        s(&summary),
        "--case-iii",
        s(&summary),
        "--csv",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("technology,"));
}

#[test]
fn excluded_records_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(
        code(&heartsplit(&[
            "synth",
            "--out",
            s(&data),
            "--records",
            "1",
            "--duration",
            "30"
        ])),
        0
    );
    let manifest = dir.path().join("split.txt");
    fs::write(&manifest, "excluded: syn000\n").unwrap();
    let w = dir.path().join("w.bin");
    let o = heartsplit(&[
        "train",
        "--data",
        s(&data),
        "--manifest",
        s(&manifest),
        "--out",
        s(&w),
    ]);
    assert_eq!(code(&o), 1);
}
