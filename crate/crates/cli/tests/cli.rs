use std::path::{Path, PathBuf};
use std::process::Command;

use ivnsim_cli::run_cli;
use ivnsim_core::NetworkConfig;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Out {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = run_cli(std::iter::once("ivnsim").chain(args.iter().copied()), &mut o, &mut e);
    Out { code, stdout: String::from_utf8(o).unwrap(), stderr: String::from_utf8(e).unwrap() }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TT_ONLY: &str = r#"
network ttPair {
  inline ini {
```
settings.horizon = 100ms
```
  }
  devices { node a; node b; switch sw; }
  connections { segment eth { a <--> sw; b <--> sw; } }
  communication {
    message tick { sender a; receivers b; payload 64B; period 1ms; mapping { eth: tt{ctID 1;}; } }
    message noise { sender a; receivers b; payload 1500B; period 200us; mapping { eth: be{priority 0;}; } }
  }
}
"#;

fn dir_digest(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn compile_writes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cfg.json");
    let r = cli(&["compile", s(&scenario("small_network.andl")), "-o", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let cfg = NetworkConfig::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(cfg.name, "smallNetwork");
    assert_eq!(cfg.messages.len(), 2);
}

#[test]
fn compile_reports_semantic_errors_with_positions() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("dup.andl");
    std::fs::write(
        &src,
        "network n {\n  devices { canLink cb; node a; node b; }\n  connections { segment s { a <--> cb; b <--> cb; } }\n  communication {\n    message m1 { sender a; receivers b; payload 1B; period 1ms; mapping { s: can{id 37;}; } }\n    message m2 { sender b; receivers a; payload 1B; period 1ms; mapping { s: can{id 37;}; } }\n  }\n}\n",
    )
    .unwrap();
    let r = cli(&["compile", s(&src)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("dup.andl:6:"), "{}", r.stderr);
    assert!(r.stderr.contains("duplicate CAN id 37"), "{}", r.stderr);
}

#[test]
fn syntax_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("bad.andl");
    std::fs::write(&src, "network n {\n  devices {\n    node x\n    node y;\n  }\n}\n").unwrap();
    let r = cli(&["validate", s(&src)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("bad.andl:4:5: error"), "{}", r.stderr);
}

#[test]
fn missing_file_is_io_error() {
    assert_eq!(cli(&["compile", "/nonexistent/x.andl"]).code, 2);
    assert_eq!(cli(&["run", "/nonexistent/x.andl"]).code, 2);
    assert_eq!(cli(&["analyze", "/nonexistent/dir", "--metric", "latency"]).code, 2);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cli(&["run", s(&scenario("small_network.andl")), "--horizon", "0s"]).code, 2);
    assert_eq!(cli(&["frobnicate"]).code, 2);
    assert_eq!(cli(&["run", s(&scenario("small_network.andl")), "--window", "5ms:1ms"]).code, 2);
    let tmp = tempfile::tempdir().unwrap();
    let r = cli(&[
        "run",
        s(&scenario("small_network.andl")),
        "--set",
        "settings.nope=1",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("unknown override key"), "{}", r.stderr);
}

#[test]
fn validate_accepts_listing() {
    let r = cli(&["validate", s(&scenario("small_network.andl"))]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.starts_with("ok"));
}

#[test]
fn run_summary_and_reproducible_export() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let src = scenario("small_network.andl");
    let r1 = cli(&["run", s(&src), "--horizon", "1s", "--seed", "3", "--out", s(&a)]);
    let r2 = cli(&["run", s(&src), "--horizon", "1s", "--seed", "3", "--out", s(&b)]);
    assert_eq!(r1.code, 0, "{}", r1.stderr);
    assert_eq!(r1.stdout, r2.stdout);
    assert!(r1.stdout.contains("horizon 1s, seed 3"));
    let msg1 = r1.stdout.lines().find(|l| l.starts_with("msg1")).unwrap();
    let delivered: u64 = msg1.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(delivered.abs_diff(1000) <= 1, "{msg1}");
    let msg2 = r1.stdout.lines().find(|l| l.starts_with("msg2")).unwrap();
    let delivered: u64 = msg2.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(delivered.abs_diff(8000) <= 1, "{msg2}");
    assert!(r1.stdout.contains("backbone"));
    assert!(r1.stderr.contains("ignored inline setting `record-eventlog`"));
    assert!(a.join("scalars.csv").exists());
    assert_eq!(dir_digest(&a), dir_digest(&b));
}

#[test]
fn compiled_config_runs_like_source() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    assert_eq!(cli(&["compile", s(&scenario("small_network.andl")), "-o", s(&cfg)]).code, 0);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(cli(&["run", s(&cfg), "--horizon", "200ms", "--out", s(&a)]).code, 0);
    assert_eq!(cli(&["run", s(&scenario("small_network.andl")), "--horizon", "200ms", "--out", s(&b)]).code, 0);
    assert_eq!(dir_digest(&a), dir_digest(&b));
}

#[test]
fn override_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("tt.andl");
    std::fs::write(&src, TT_ONLY).unwrap();
    let out = tmp.path().join("r");
    let inline = cli(&["run", s(&src), "--out", s(&out)]);
    assert!(inline.stdout.contains("horizon 100ms"), "{}", inline.stdout);
    let flag = cli(&["run", s(&src), "--out", s(&out), "--horizon", "50ms"]);
    assert!(flag.stdout.contains("horizon 50ms"), "{}", flag.stdout);
    let set = cli(&["run", s(&src), "--out", s(&out), "--horizon", "50ms", "--set", "settings.horizon=20ms"]);
    assert!(set.stdout.contains("horizon 20ms"), "{}", set.stdout);
}

#[test]
fn analyze_tables_and_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    assert_eq!(cli(&["run", s(&scenario("small_network.andl")), "--out", s(&out)]).code, 0);

    let plot = tmp.path().join("lat.csv");
    let r = cli(&["analyze", s(&out), "--metric", "latency", "--filter", "msg1", "--plot", s(&plot)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<_> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 2, "{}", r.stdout);
    assert!(lines[0].contains("min_us") && lines[0].contains("max_us") && lines[0].contains("mean_us"));
    assert!(lines[1].starts_with("msg1"));
    let plot = std::fs::read_to_string(plot).unwrap();
    assert!(plot.starts_with("message,sink,time_ps,latency_ps\n"));
    assert!(plot.lines().count() > 900);

    let bw = cli(&["analyze", s(&out), "--metric", "bandwidth"]);
    assert_eq!(bw.code, 0);
    // four Ethernet links and two buses
    assert_eq!(bw.stdout.lines().count(), 1 + 6, "{}", bw.stdout);
    let eth_only = cli(&["analyze", s(&out), "--metric", "bandwidth", "--filter", "*s1"]);
    assert_eq!(eth_only.stdout.lines().count(), 1 + 3, "{}", eth_only.stdout);

    let windowed = cli(&["analyze", s(&out), "--metric", "bandwidth", "--filter", "cb1", "--window", "0s:500ms"]);
    assert_eq!(windowed.code, 0, "{}", windowed.stderr);
    assert!(windowed.stdout.lines().nth(1).unwrap().starts_with("cb1"));

    assert_eq!(cli(&["analyze", s(&out), "--metric", "queues"]).code, 0);
    assert_eq!(cli(&["analyze", s(&out), "--metric", "credit"]).code, 0);
    assert_eq!(cli(&["analyze", s(&out), "--metric", "latency", "--filter", "nothing"]).code, 1);
}

#[test]
fn tt_jitter_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("tt.andl");
    std::fs::write(&src, TT_ONLY).unwrap();
    let out = tmp.path().join("r");
    assert_eq!(cli(&["run", s(&src), "--out", s(&out), "--format", "structured"]).code, 0);
    assert!(out.join("results.json").exists());
    let r = cli(&["analyze", s(&out), "--metric", "jitter", "--filter", "tick"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let row = r.stdout.lines().nth(1).unwrap();
    assert_eq!(row.split_whitespace().last(), Some("0.000"), "{row}");
    let noisy = cli(&["analyze", s(&out), "--metric", "jitter", "--filter", "noise"]);
    assert_ne!(noisy.stdout.lines().nth(1).unwrap().split_whitespace().last(), Some("0.000"));
}

#[test]
fn jobs_fan_out_in_input_order() {
    let tmp = tempfile::tempdir().unwrap();
    let tt = tmp.path().join("tt.andl");
    std::fs::write(&tt, TT_ONLY).unwrap();
    let small = scenario("small_network.andl");
    let out = tmp.path().join("r");
    let r = cli(&["run", s(&small), s(&tt), "--jobs", "2", "--horizon", "100ms", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let first = r.stdout.find("small_network.andl").unwrap();
    let second = r.stdout.find("tt.andl").unwrap();
    assert!(first < second);
    assert!(out.join("small_network").join("scalars.csv").exists());
    assert!(out.join("tt").join("scalars.csv").exists());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ivnsim");
    let ok = Command::new(bin).args(["validate", s(&scenario("small_network.andl"))]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let missing = Command::new(bin).args(["validate", "/nonexistent.andl"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("analyze"));
}
