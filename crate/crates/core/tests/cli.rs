use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ms-solve");

fn ms_solve(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("MS_SOLVE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    ms_solve(args).status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn solve_reports_converged_run_as_csv() {
    let out = ms_solve(&[
        "solve",
        "--problem",
        "academic",
        "--method",
        "moser-steffensen",
        "--x0=-1,1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("n,x1,x2,error,residual,solve_condition,mult_condition,inverse_defect,b_norm")
    );
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() >= 6 && rows.len() <= 9, "{} rows", rows.len());
    assert!(rows.last().unwrap().split(',').nth(3) == Some("<=1e-16"));
    assert!(stderr(&out).contains("outcome: converged"));
    assert!(stderr(&out).contains("COC"));
}

#[test]
fn solve_affine_newton_takes_one_step() {
    let out = ms_solve(&["solve", "--problem", "affine", "--method", "newton"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 3);
}

fn code_of(command: &str) -> i32 {
    code(&command.split_whitespace().collect::<Vec<_>>())
}

#[test]
fn exit_codes() {
    let cases = [
        ("--help", 0),
        ("solve --problem academic --epsilon 0.1 --x0=5,-5", 2),
        (
            "solve --problem academic --epsilon 3 --x0=-1,1 --max-iter 2",
            2,
        ),
        (
            "solve --problem academic --epsilon 2 --method newton --x0 2,2",
            3,
        ),
        ("solve --problem academic --epsilon 2 --x0 2,2", 3),
        ("solve --problem example3d --method newton --x0 2,0,0", 3),
        ("solve --problem nope", 64),
        ("solve --problem academic --x0 1,2,3", 64),
        ("solve --method bisection", 64),
        ("solve --b0 approx-inverse:2", 64),
        ("reproduce 7", 64),
        ("tableau --nodes 0.5,0.5", 64),
        ("chapman --h -1", 64),
        ("frobnicate", 64),
        ("solve --problem affine -o /nonexistent-dir/out.csv", 74),
    ];
    for (command, expected) in cases {
        assert_eq!(code_of(command), expected, "{command}");
    }
}

#[test]
fn output_file_matches_stdout() {
    let dir = std::env::temp_dir().join(format!("ms-solve-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("trace.csv");
    let args = ["solve", "--problem", "academic", "--x0=-1,1"];
    let to_file = ms_solve(&[&args[..], &["-o", path.to_str().unwrap()]].concat());
    assert_eq!(to_file.status.code(), Some(0));
    assert!(to_file.stdout.is_empty());
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        stdout(&ms_solve(&args))
    );
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn json_output_parses() {
    let out = ms_solve(&[
        "solve",
        "--problem",
        "academic",
        "--x0=-1,1",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["outcome"], "converged");
    assert_eq!(v["method"], "moser-steffensen");
    assert!(v["records"].as_array().is_some_and(|r| r.len() > 3));
}

#[test]
fn reproduce_verdicts_set_exit_code() {
    let five = ms_solve(&["reproduce", "5"]);
    assert_eq!(five.status.code(), Some(0));
    assert!(stderr(&five).contains("PASS"));
    assert_eq!(code(&["reproduce", "6"]), 0);
    let three = ms_solve(&["reproduce", "3"]);
    assert_eq!(three.status.code(), Some(1));
    assert!(stderr(&three).contains("FAIL"));
}

#[test]
fn reproduce_output_is_independent_of_thread_count() {
    let serial = Command::new(BIN)
        .args(["reproduce", "5"])
        .env("MS_SOLVE_THREADS", "1")
        .output()
        .unwrap();
    let parallel = Command::new(BIN)
        .args(["reproduce", "5"])
        .env("MS_SOLVE_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(serial.stdout, parallel.stdout);
}

#[test]
fn radius_golden_run() {
    let golden = "radius --problem example3d --beta 0.75 --delta 0.25 --M 1 --k 1 --rtilde 1";
    let out = ms_solve(&golden.split_whitespace().collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let radius: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("radius,"))
        .expect("radius row")
        .parse()
        .unwrap();
    assert!((radius - 0.2466265467).abs() < 1e-9);

    let none = ms_solve(&[
        "radius", "--delta", "0.95", "--M", "1", "--k", "1", "--beta", "0.75",
    ]);
    assert!(
        stderr(&none).contains("no radius exists") || stdout(&none).contains("no radius exists")
    );
}

#[test]
fn chapman_literal_sign_fails_with_non_finite_state() {
    let out = ms_solve(&["chapman", "--sign", "positive"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("non-finite state at step 0"));
}

#[test]
fn chapman_is_deterministic_and_summarized() {
    let a = ms_solve(&["chapman"]);
    let b = ms_solve(&["chapman"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().next(), Some("t,y1,y2"));
    assert_eq!(text.lines().count(), 5122);
    assert!(stderr(&a).contains("y2 rises: 10"));
}

#[test]
fn chapman_adjusts_step_to_divide_a_day() {
    let out = ms_solve(&["chapman", "--h", "1000", "--inner", "newton"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("does not divide one day"));
}

#[test]
fn tableau_dump() {
    let out = ms_solve(&["tableau", "--stages", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).lines().count() >= 3);
}
