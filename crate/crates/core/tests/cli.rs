//! End-to-end checks of the `fedtune-sim` binary: exit codes, output
//! directory resolution and config rejection.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[experiment]
repetitions = 2

[data.synthetic]
k_clients = 20
mean_shard_size = 20
test_size = 200
noise = 0.3
label_alpha = 1.0

[model]
hidden_dim = 8

[training]
initial_m = 5
initial_e = 2
target_accuracy = 0.5
max_rounds = 300
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fedtune-sim"));
    c.env_remove("FEDTUNE_OUT_DIR").env("RUST_LOG", "error");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], cfg: &Path) -> Output {
    bin().args(args).arg("--config").arg(cfg).output().unwrap()
}

#[test]
fn run_succeeds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&["run", "--out", out.to_str().unwrap(), "--jobs", "2"], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.csv", "trace_seed0.jsonl", "trace_seed1.jsonl"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn seeds_flag_overrides_repetitions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&["run", "--out", out.to_str().unwrap(), "--seeds", "3"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("trace_seed2.jsonl").is_file());
}

#[test]
fn exhausted_run_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n").replace("target_accuracy = 0.5", "target_accuracy = 1.0").replace("max_rounds = 300", "max_rounds = 1");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = run(&["run", "--out", out.to_str().unwrap()], &cfg);
    assert_eq!(o.status.code(), Some(3));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("exhausted_max_rounds"));
}

#[test]
fn config_errors_exit_with_two_and_write_nothing() {
    let all = ["run", "sweep", "compare", "partition"];
    let cases: [(&str, &[&str]); 6] = [
        ("[training]\nbogus_key = 1\n", &all),
        ("[training]\ninitial_m = 0\n", &all),
        ("[training]\ntarget_accuracy = 1.5\n", &all),
        ("[data.synthetic]\nk_clients = 4\n[training]\ninitial_m = 9\n", &["run", "sweep", "compare"]),
        ("[tuner]\nenabled = true\npreferences = [0.5, 0.5, 0.5, 0.5]\n", &all),
        ("this is not toml", &all),
    ];
    for (text, cmds) in cases {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), text);
        let out = dir.path().join("out");
        for &cmd in cmds {
            let o = run(&[cmd, "--out", out.to_str().unwrap()], &cfg);
            assert_eq!(o.status.code(), Some(2), "{cmd} accepted {text:?}");
            assert!(!out.exists(), "{cmd} wrote output for {text:?}");
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "--out", dir.path().join("out").to_str().unwrap()], &dir.path().join("missing.toml"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_jobs_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(&["run", "--jobs", "0", "--out", dir.path().join("out").to_str().unwrap()], &cfg);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let from_cfg = dir.path().join("from_cfg");
    let text = format!("{SMALL}\n").replace("repetitions = 2", &format!("repetitions = 1\noutput_dir = {:?}", from_cfg.to_str().unwrap()));
    let cfg = write_config(dir.path(), &text);

    let o = bin().args(["partition", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(from_cfg.join("train.csv").is_file());

    let from_env = dir.path().join("from_env");
    let o = bin().args(["partition", "--config"]).arg(&cfg).env("FEDTUNE_OUT_DIR", &from_env).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(from_env.join("train.csv").is_file());

    let from_flag = dir.path().join("from_flag");
    let o = bin()
        .args(["partition", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&from_flag)
        .env("FEDTUNE_OUT_DIR", &from_env)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(from_flag.join("train.csv").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).contains("clients (K):      20"));
}

#[test]
fn help_lists_exit_codes_and_defaults() {
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Exit codes"));
    assert!(text.contains("[training]"));
    assert!(text.contains("target_accuracy"));
}
