use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greedy-sched"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_worked_example() {
    let rates = "0.3,0.4,0.3,0.4,0.3,0.4";
    let o = cli(&["check", "--graph", "ring:6", "--rates", rates, "--region", "maximal"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "region=maximal member=false value=1.1 boundary=false");
    let o = cli(&[
        "check", "--graph", "ring:6", "--rates", rates, "--region", "priority", "--priority", "1,2,3,4,5,6",
    ]);
    assert_eq!(stdout(&o).trim(), "region=priority member=true value=1 boundary=true");
    let o = cli(&["check", "--graph", "ring:6", "--rates", "0.34"]);
    assert!(stdout(&o).starts_with("region=lqf member=false"));
}

#[test]
fn input_errors_exit_one() {
    assert_eq!(cli(&["check", "--graph", "ring:6", "--rates", "-1"]).status.code(), Some(1));
    assert_eq!(cli(&["check", "--graph", "ring:2", "--rates", "0.1"]).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    let o = cli(&["simulate", "--graph", "ring:6", "--scheduler", "fifo", "--arrivals", "bernoulli:0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn assign_em_json() {
    let o = cli(&["assign-em", "--graph", "ring:6", "--rates", "0.45"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["t"].as_f64().unwrap() <= 0.9 + 1e-6);
    assert_eq!(v["stable"], true);
    assert_eq!(v["x"].as_array().unwrap().len(), 6);
    assert!(stdout(&o).starts_with("{\"t\":"));
}

#[test]
fn decompose_then_check_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    let p = params.to_str().unwrap();
    let o = cli(&["decompose", "--graph", "ring:6", "--rates", "0.45", "--params-out", p]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
    let o = cli(&["check", "--graph", "ring:6", "--rates", "0.45", "--region", "sp", "--params", p]);
    assert!(stdout(&o).starts_with("region=sp member=true"));

    let trace = dir.path().join("trace.csv");
    let spk = format!("spk:{p}");
    let o = cli(&[
        "simulate", "--graph", "ring:6", "--scheduler", &spk, "--arrivals", "bernoulli:0.4",
        "--horizon", "2000", "--runs", "2", "--out", trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("run,slot,max_queue,total_queue\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 20);
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    std::fs::write(
        &cfg,
        r#"{"graph":"ring:6","scheduler":"lqf","arrivals":"ring6adv:0","horizon":300,"sample_every":3}"#,
    )
    .unwrap();
    let o = cli(&["simulate", "--config", cfg.to_str().unwrap(), "--horizon", "30"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 10);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) <= Some("1")));
}

#[test]
fn sweep_summary() {
    let o = cli(&[
        "sweep", "--graph", "bipartite8", "--scheduler", "maxweight", "--arrivals", "bipartitepairs",
        "--rates", "0.2,0.3", "--horizon", "1000", "--runs", "2",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("scheduler,rate,run,final_max_queue,slope,departure_rate_error\n"));
    assert_eq!(text.lines().count(), 5);
}
