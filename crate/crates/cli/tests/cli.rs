use std::fs;
use std::path::Path;

use clap::{CommandFactory, Parser};
use fragmc::{dispatch, parse_alpha_range, Cli, FailureKind};
use fragmc_core::compose::SystemJson;

fn run(args: &[&str]) -> (Result<(), FailureKind>, String, String) {
    let cli = Cli::try_parse_from(std::iter::once("fragmc").chain(args.iter().copied())).expect("valid command line");
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let res = dispatch(&cli, &mut out, &mut err).map_err(|f| f.kind);
    (res, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    let mut full = vec!["gen"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["-o", &p]);
    assert_eq!(run(&full).0, Ok(()));
    p
}

#[test]
fn command_line_definition_is_consistent() {
    Cli::command().debug_assert();
}

#[test]
fn alpha_ranges() {
    assert_eq!(parse_alpha_range("1..29").unwrap(), 1..=29);
    assert_eq!(parse_alpha_range("3..=5").unwrap(), 3..=5);
    assert_eq!(parse_alpha_range("7").unwrap(), 7..=7);
    assert!(parse_alpha_range("0..3").is_err());
    assert!(parse_alpha_range("5..2").is_err());
    assert!(parse_alpha_range("a..b").is_err());
}

#[test]
fn intro_check_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let model = gen(dir.path(), "intro.pm", &["--intro"]);
    let sys = dir.path().join("sys.json");
    let (res, out, _) = run(&["check", "-m", &model, "-t", "success", "-o", sys.to_str().unwrap()]);
    assert_eq!(res, Ok(()));
    assert!(out.contains("op count"));
    let (res, out, _) = run(&["eval", "-s", sys.to_str().unwrap(), "-p", "p1=0.95,p2=0.8"]);
    assert_eq!(res, Ok(()));
    assert_eq!(out.split('\t').next().unwrap(), "99/100");
}

#[test]
fn check_without_output_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let model = gen(dir.path(), "seq.pm", &["--strategy", "SEQ", "--services", "1"]);
    let (res, out, err) = run(&["check", "-m", &model, "-t", "successFX", "-a", "1"]);
    assert_eq!(res, Ok(()));
    let json: SystemJson = serde_json::from_str(&out).unwrap();
    assert_eq!(json.result, "result");
    assert!(err.contains("fragments: 11 (0 multi-state)"));
}

#[test]
fn corrupted_system_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let model = gen(dir.path(), "seqr.pm", &["--strategy", "SEQ_R", "--services", "2"]);
    let sys = dir.path().join("sys.json");
    assert_eq!(run(&["check", "-m", &model, "-t", "successFX", "-o", sys.to_str().unwrap()]).0, Ok(()));
    let (res, _, _) = run(&["verify", "-m", &model, "-t", "successFX", "-s", sys.to_str().unwrap(), "--samples", "5"]);
    assert_eq!(res, Ok(()));

    let mut json: SystemJson = serde_json::from_str(&fs::read_to_string(&sys).unwrap()).unwrap();
    let last = json.bindings.last_mut().unwrap();
    last.formula = format!("({}) * 999/1000", last.formula);
    fs::write(&sys, serde_json::to_string(&json).unwrap()).unwrap();
    let (res, out, _) =
        run(&["verify", "-m", &model, "-t", "successFX", "-s", sys.to_str().unwrap(), "--samples", "5"]);
    assert_eq!(res, Err(FailureKind::Verify));
    assert!(out.contains("FAIL"));
}

#[test]
fn bench_is_repeatable_without_timings() {
    let dir = tempfile::tempdir().unwrap();
    let model = gen(dir.path(), "prob.pm", &["--strategy", "PROB", "--services", "2"]);
    let args = [
        "bench",
        "-m",
        &model,
        "-t",
        "successFX",
        "--alpha-range",
        "1..5",
        "--samples",
        "3",
        "--seed",
        "9",
        "--no-timings",
    ];
    let (a, first, _) = run(&args);
    let (b, second, _) = run(&args);
    assert_eq!((a, b), (Ok(()), Ok(())));
    assert_eq!(first, second);
    assert_eq!(first.lines().count(), 6);
    let (_, one, _) = run(&["bench", "-m", &model, "-t", "successFX", "--alpha-range", "4..4", "--samples", "1"]);
    assert_eq!(one.lines().count(), 2);
    assert!(one.lines().next().unwrap().ends_with("total_ms"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.pm");
    assert_eq!(run(&["check", "-m", missing.to_str().unwrap(), "-t", "x"]).0, Err(FailureKind::Io));

    let bad = dir.path().join("bad.pm");
    fs::write(&bad, "init 0\ntrans 0 1 q\n").unwrap();
    assert_eq!(run(&["check", "-m", bad.to_str().unwrap(), "-t", "1"]).0, Err(FailureKind::Parse));

    let model = gen(dir.path(), "intro.pm", &["--intro"]);
    assert_eq!(run(&["check", "-m", &model, "-t", "nowhere"]).0, Err(FailureKind::Validate));
    assert_eq!(run(&["check", "-m", &model, "-t", "17"]).0, Err(FailureKind::Validate));

    let stuck = dir.path().join("stuck.pm");
    // state 1 keeps probability one on itself next to another edge
    fs::write(&stuck, "init 0\nlabel 2 goal\ntrans 0 1 1\ntrans 1 1 1\ntrans 1 2 1/2\ntrans 2 2 1\n").unwrap();
    assert_eq!(run(&["check", "-m", stuck.to_str().unwrap(), "-t", "goal", "-a", "1"]).0, Err(FailureKind::Solve));

    let sys = dir.path().join("sys.json");
    assert_eq!(run(&["check", "-m", &model, "-t", "success", "-o", sys.to_str().unwrap()]).0, Ok(()));
    assert_eq!(run(&["eval", "-s", sys.to_str().unwrap(), "-p", "p1=0.5"]).0, Err(FailureKind::Validate));
    assert_eq!(run(&["eval", "-s", sys.to_str().unwrap(), "-p", "p1=0.5,p2=zz"]).0, Err(FailureKind::Parse));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let model = gen(dir.path(), "seq.pm", &["--strategy", "SEQ", "--services", "1"]);
    std::env::set_var("FRAGMC_SEED", "41");
    let cli = Cli::try_parse_from(["fragmc", "verify", "-m", &model, "-t", "successFX"]).unwrap();
    std::env::remove_var("FRAGMC_SEED");
    match cli.command {
        fragmc::Command::Verify(v) => assert_eq!(v.sample.seed, 41),
        _ => unreachable!(),
    }
}

#[test]
fn sweep_generation_keeps_the_requested_share() {
    let dir = tempfile::tempdir().unwrap();
    let model = gen(
        dir.path(),
        "sweep.pm",
        &["--strategy", "SEQ_R", "--services", "2", "--sweep-fraction", "0.25", "--seed", "3"],
    );
    let text = fs::read_to_string(model).unwrap();
    let params = text.lines().filter(|l| l.starts_with("param ")).count();
    // 29 parameters, a quarter kept, rounded up
    assert_eq!(params, 8);
}
