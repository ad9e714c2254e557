use std::process::{Command, Output};

fn transcoder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transcoder")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn no_arguments_prints_usage() {
    let o = transcoder(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(transcoder(&["--bogus"]).status.code(), Some(2));
    assert_eq!(transcoder(&["flops", "--target", "bp", "--code", "ldpc_121_60", "--nope"]).status.code(), Some(2));
}

#[test]
fn flops_prints_the_count() {
    let o = transcoder(&["flops", "--target", "bp", "--code", "ldpc_121_60", "--iters", "50"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "36300");
}

#[test]
fn codeinfo_reports_dimensions() {
    let o = transcoder(&["codeinfo", "--code", "hamming_7_4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("n           7"));
    assert!(text.contains("k           4"));
}

#[test]
fn unknown_code_fails_cleanly() {
    let o = transcoder(&["codeinfo", "--code", "no_such_code"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn simulate_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bp.csv");
    let args = [
        "simulate", "--code", "hamming_7_4", "--decoder", "bp", "--iters", "5", "--ebn0", "1,3", "--min-errors", "10", "--min-frames", "200",
        "--max-frames", "5000", "--seed", "3", "--out",
    ];
    let mut args: Vec<&str> = args.to_vec();
    args.push(out.to_str().unwrap());
    let o = transcoder(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().next().unwrap().starts_with("pipeline,code,ebn0_db"));
    assert!(dir.path().join("bp.json").exists());
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn simulate_is_repeatable_across_thread_counts() {
    let run = |threads: &str| {
        let o = transcoder(&[
            "simulate", "--code", "hamming_7_4", "--ebn0", "2", "--min-errors", "20", "--min-frames", "500", "--seed", "9", "--threads", threads,
        ]);
        assert!(o.status.success());
        stdout(&o)
            .lines()
            .map(|l| l.split(',').take(6).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.json");
    let ckpt = ckpt.to_str().unwrap();
    let o = transcoder(&[
        "train", "--code", "hamming_7_4", "--modules", "full", "--runs", "2", "--iters-per-run", "2", "--epochs", "3", "--batch", "16", "--out", ckpt,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(dir.path().join("model.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
    let o = transcoder(&[
        "eval", "--code", "hamming_7_4", "--checkpoint", ckpt, "--modules", "full", "--runs", "2", "--iters", "2", "--ebn0", "2", "--min-errors",
        "5", "--min-frames", "100", "--max-frames", "1000", "--calibration-frames", "500",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("full/2xbp-2"));
}

#[test]
fn histogram_of_hamming_code() {
    let o = transcoder(&["histogram", "--code", "hamming_7_4", "--mapper", "bpsk", "--bins", "10", "--support"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).trim().is_empty());
}
