use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn nsim() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nsim"));
    for var in [
        "NSIM_SEED",
        "NSIM_REPS",
        "NSIM_PARAMS",
        "NSIM_CONFIG",
        "NSIM_ERROR_JSON",
        "NSIM_PROVIDER",
    ] {
        c.env_remove(var);
    }
    c
}

fn run_in(dir: &Path, args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = nsim()
        .current_dir(dir)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or_default()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn ok(dir: &Path, args: &[&str], stdin: Option<&[u8]>) -> Vec<u8> {
    let out = run_in(dir, args, stdin);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("p.json"),
        r#"{"L": 1500, "o": 500, "g": 500, "G": 0.08}"#,
    )
    .unwrap();
    dir
}

#[test]
fn gen_pipes_into_sim() {
    let dir = setup();
    let d = dir.path();
    let goal = ok(d, &["gen", "dissem", "-p", "16", "-s", "16"], None);
    let json = ok(
        d,
        &["sim", "run", "--params", "p.json", "--reps", "5", "--per-rank"],
        Some(&goal),
    );
    let doc: Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(doc["metadata"]["nranks"], 16);
    assert_eq!(doc["metadata"]["generator"], "dissemination");
    assert_eq!(doc["metadata"]["noise"]["latency"], Value::Null);
    let runs = doc["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 5);
    // Without noise every run equals the baseline: 4 rounds of 2o + L + 1.
    for r in runs {
        assert_eq!(r["completion_ns"], 10_004);
        assert_eq!(r["per_rank"].as_array().unwrap().len(), 16);
    }
    assert_eq!(doc["metadata"]["noiseless_completion_ns"], 10_004);

    // Schedule JSON is accepted too, and flags override the parameter file.
    let sched = ok(d, &["gen", "ring", "-p", "4", "-s", "4096", "--format", "json"], None);
    let json = ok(d, &["sim", "run", "--params", "p.json", "--G", "0"], Some(&sched));
    let doc: Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(doc["metadata"]["params"]["G"], 0.0);
}

#[test]
fn gen_variants() {
    let dir = setup();
    let d = dir.path();
    let ring = String::from_utf8(ok(d, &["gen", "ring", "-p", "4", "-s", "536870912"], None)).unwrap();
    assert!(ring.contains("send 134217728b to 1"));
    let app = String::from_utf8(ok(
        d,
        &[
            "gen",
            "compapp",
            "-p",
            "4",
            "--comp",
            "1000",
            "--pattern",
            "ring",
            "-s",
            "64",
            "--iterations",
            "2",
        ],
        None,
    ))
    .unwrap();
    assert_eq!(app.matches("calc 1000").count(), 8);
    let out = run_in(d, &["gen", "ring", "-p", "8", "-s", "4"], None);
    assert_eq!(code(&out), 2);
}

#[test]
fn exit_codes_and_error_json() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(&run_in(d, &["sim", "run", "--frobnicate"], None)), 2);
    assert_eq!(
        code(&run_in(
            d,
            &["sim", "run", "--params", "p.json"],
            Some(b"num_ranks 2\nrank 0 { a: sned 4b to 1 }")
        )),
        3
    );
    let unmatched = b"num_ranks 2\nrank 0 { a: send 4b to 1 }\nrank 1 { }\n";
    let out = run_in(
        d,
        &["--error-json", "sim", "run", "--params", "p.json"],
        Some(unmatched),
    );
    assert_eq!(code(&out), 3);
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["class"], "validation");
    assert_eq!(err["error"]["exit_code"], 3);
    assert!(!err["error"]["details"].as_array().unwrap().is_empty());

    let out = run_in(
        d,
        &[
            "--error-json",
            "sim",
            "run",
            "--goal",
            "missing.goal",
            "--params",
            "p.json",
        ],
        None,
    );
    assert_eq!(code(&out), 4);
    assert_eq!(
        serde_json::from_slice::<Value>(&out.stderr).unwrap()["error"]["class"],
        "io"
    );

    let out = run_in(d, &["--error-json", "cost", "--bogus"], None);
    assert_eq!(code(&out), 2);
    assert_eq!(
        serde_json::from_slice::<Value>(&out.stderr).unwrap()["error"]["class"],
        "usage"
    );

    // No parameters at all is a usage error.
    let goal = ok(d, &["gen", "dissem", "-p", "2", "-s", "1"], None);
    assert_eq!(code(&run_in(d, &["sim", "run"], Some(&goal))), 2);
}

#[test]
fn flags_beat_env_beat_config() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("nsim.toml"), "seed = 1\nreps = 3\nparams = \"p.json\"\n").unwrap();
    std::fs::write(d.join("lat.csv"), "timestamp_ns,value,unit\n0,2500,ns\n1,9000,ns\n").unwrap();
    let goal = ok(d, &["gen", "dissem", "-p", "8", "-s", "16"], None);
    let seed_of = |extra_env: Option<&str>, flag: Option<&str>| {
        let mut c = nsim();
        c.current_dir(d)
            .args(["--config", "nsim.toml", "sim", "run", "--noise-lat", "lat.csv"]);
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        if let Some(s) = extra_env {
            c.env("NSIM_SEED", s);
        }
        let mut child = c.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().unwrap();
        child.stdin.take().unwrap().write_all(&goal).unwrap();
        let out = child.wait_with_output().unwrap();
        assert!(out.status.success());
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(doc["runs"].as_array().unwrap().len(), 3);
        doc["metadata"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(None, None), 1);
    assert_eq!(seed_of(Some("2"), None), 2);
    assert_eq!(seed_of(Some("2"), Some("3")), 3);
}

#[test]
fn noise_inputs_are_digested() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("lat.csv"), "timestamp_ns,value,unit\n0,2500,ns\n1,9000,ns\n").unwrap();
    std::fs::write(d.join("bw.csv"), "0,100,gbps\n1,50,gbps\n").unwrap();
    std::fs::write(
        d.join("os.csv"),
        "# span_ns=100000\ntimestamp_ns,value,unit\n10,500,ns\n",
    )
    .unwrap();
    let goal = ok(d, &["gen", "ring", "-p", "4", "-s", "4096", "-o", "r.goal"], None);
    assert!(goal.is_empty());
    let args = [
        "sim",
        "run",
        "--goal",
        "r.goal",
        "--params",
        "p.json",
        "--noise-lat",
        "lat.csv",
        "--noise-bw",
        "bw.csv",
        "--noise-os",
        "os.csv",
        "--reps",
        "20",
        "--seed",
        "5",
        "-o",
        "res.json",
    ];
    ok(d, &args, None);
    let doc: Value = serde_json::from_slice(&std::fs::read(d.join("res.json")).unwrap()).unwrap();
    let sha = doc["metadata"]["noise"]["bandwidth"]["sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);
    assert_eq!(doc["metadata"]["noise"]["os"]["path"], "os.csv");
    // Units are checked: a latency trace cannot stand in for bandwidth.
    let out = run_in(
        d,
        &[
            "sim",
            "run",
            "--goal",
            "r.goal",
            "--params",
            "p.json",
            "--noise-bw",
            "lat.csv",
        ],
        None,
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn cost_and_report() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("lat.csv"), "0,2500,ns\n1,2500,ns\n2,25000,ns\n").unwrap();
    let goal = ok(d, &["gen", "dissem", "-p", "16", "-s", "16"], None);
    let res = ok(
        d,
        &[
            "sim",
            "run",
            "--params",
            "p.json",
            "--noise-lat",
            "lat.csv",
            "--reps",
            "50",
            "-o",
            "res.json",
        ],
        Some(&goal),
    );
    assert!(res.is_empty());

    let cost: Value =
        serde_json::from_slice(&ok(d, &["cost", "--results", "res.json", "--provider", "daint"], None)).unwrap();
    assert_eq!(cost["price"]["per_node_hour"], 1.73);
    assert_eq!(cost["nodes"], 16);
    let r0 = &cost["runs"][0];
    let expect = r0["completion_ns"].as_f64().unwrap() / 3.6e12 * 16.0 * 1.73;
    assert!((r0["usd"].as_f64().unwrap() - expect).abs() <= 1e-15 * expect);
    assert!(cost["mean_relative_increase"].as_f64().unwrap() > 0.0);

    // Several AWS instances share a label, so an instance must be named.
    assert_eq!(
        code(&run_in(
            d,
            &["cost", "--results", "res.json", "--provider", "AWS"],
            None
        )),
        2
    );
    let csv = ok(
        d,
        &[
            "cost",
            "--results",
            "res.json",
            "--provider",
            "AWS",
            "--instance",
            "c5n.metal",
            "--label",
            "committed",
            "--format",
            "csv",
        ],
        None,
    );
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().count(), 51);
    std::fs::write(d.join("cost.json"), serde_json::to_vec(&cost).unwrap()).unwrap();

    let stats: Value = serde_json::from_slice(&ok(
        d,
        &[
            "report",
            "box",
            "-i",
            "noisy=res.json",
            "-i",
            "cost.json",
            "--metric",
            "relative-increase",
            "--samples",
        ],
        None,
    ))
    .unwrap();
    assert_eq!(stats["schema"], "nsim.boxstats/1");
    assert_eq!(stats["groups"][1]["label"], "cost");
    assert_eq!(stats["groups"][0]["stats"], stats["groups"][1]["stats"]);
    assert_eq!(stats["groups"][0]["samples"].as_array().unwrap().len(), 50);

    let svg = String::from_utf8(ok(
        d,
        &[
            "report", "svg", "-i", "res.json", "-i", "lat.csv", "--log2", "--title", "P=16",
        ],
        None,
    ))
    .unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("class=\"box\"").count() == 2);
    let csv = String::from_utf8(ok(d, &["report", "box", "-i", "res.json", "--format", "csv"], None)).unwrap();
    assert!(csv.starts_with("# schema=nsim.boxstats/1\nlabel,n,"));
}

#[test]
fn trace_subcommands_pipe() {
    let dir = setup();
    let d = dir.path();
    let trace = b"timestamp_ns,value,unit\n0,4,ns\n5,2,ns\n9,8,ns\n12,6,ns\n";
    let norm = String::from_utf8(ok(d, &["trace", "normalize"], Some(trace))).unwrap();
    assert_eq!(
        norm,
        "timestamp_ns,value,unit\n0,2,ratio\n5,1,ratio\n9,4,ratio\n12,3,ratio\n"
    );
    let top = String::from_utf8(ok(d, &["trace", "top", "--fraction", "0.5"], Some(trace))).unwrap();
    assert_eq!(top, "timestamp_ns,value,unit\n9,8,ns\n12,6,ns\n");
    let dist: Value = serde_json::from_slice(&ok(d, &["trace", "dist"], Some(trace))).unwrap();
    assert_eq!(dist["samples"], serde_json::json!([2.0, 4.0, 6.0, 8.0]));
    let out = run_in(d, &["trace", "dist", "--unit", "gbps"], Some(trace));
    assert_eq!(code(&out), 3);
}

#[test]
fn bench_and_calibrate_over_loopback() {
    let dir = setup();
    let d = dir.path();
    let mut responder = nsim()
        .args(["bench", "pingpong", "--listen", "127.0.0.1:0", "--sessions", "3"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(responder.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();

    ok(
        d,
        &[
            "bench",
            "pingpong",
            "--peer",
            &addr,
            "-s",
            "1",
            "-n",
            "200",
            "-o",
            "small.csv",
        ],
        None,
    );
    ok(
        d,
        &[
            "bench",
            "pingpong",
            "--peer",
            &addr,
            "-s",
            "65536",
            "-c",
            "2",
            "-n",
            "50",
            "-o",
            "large.csv",
        ],
        None,
    );
    ok(
        d,
        &[
            "bench",
            "bidir",
            "--peer",
            &addr,
            "-s",
            "1024",
            "-n",
            "20",
            "-o",
            "out.csv",
            "--incoming",
            "in.csv",
        ],
        None,
    );
    assert!(responder.wait().unwrap().success());

    let small = std::fs::read_to_string(d.join("small.csv")).unwrap();
    assert_eq!(small.lines().count(), 201);
    assert_eq!(std::fs::read_to_string(d.join("out.csv")).unwrap().lines().count(), 21);
    // The responder records warmup iterations too.
    assert_eq!(std::fs::read_to_string(d.join("in.csv")).unwrap().lines().count(), 31);

    let params: Value = serde_json::from_slice(&ok(
        d,
        &[
            "sim",
            "calibrate",
            "--small",
            "small.csv",
            "--large",
            "large.csv",
            "--large-size",
            "65536",
        ],
        None,
    ))
    .unwrap();
    assert!(params["L"].as_u64().unwrap() + 2 * params["o"].as_u64().unwrap() > 0);
    assert_eq!(params["g"], params["o"]);
}

#[test]
fn detour_benchmark_writes_a_trace() {
    let dir = setup();
    let d = dir.path();
    let out = run_in(
        d,
        &[
            "bench",
            "detour",
            "--records",
            "3",
            "--probe",
            "1000",
            "--max-seconds",
            "0.2",
        ],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# span_ns="), "{text}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_min_ns="));
    assert_eq!(code(&run_in(d, &["bench", "detour", "--max-seconds", "-1"], None)), 2);
}
