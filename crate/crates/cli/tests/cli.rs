use std::path::Path;
use std::process::{Command, Output};

fn memrelax(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memrelax"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("MEMRELAX_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn w0_identity_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let o = memrelax(&["w0", "--xi", "e1,e2", "--model", "reciprocal:p=2"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("W0 = 3.88988157484"), "{text}");
    assert!(text.contains("t* = 7.93700515"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("w0.csv")).unwrap();
    assert!(csv.starts_with("# config-hash: "));
    let row = csv.lines().nth(2).unwrap();
    let w0: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
    assert_eq!(w0, 2.0 + 3.0 * 2f64.powf(-2.0 / 3.0));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = memrelax(&["selftest"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[sweep]\nepss = [0.1]\n").unwrap();
    let o = memrelax(&["gamma-sweep", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epss"));

    let range = dir.path().join("range.toml");
    std::fs::write(&range, "[sweep]\neps = [0.1, 0.2]\n").unwrap();
    assert_eq!(memrelax(&["gamma-sweep", range.to_str().unwrap()], dir.path()).status.code(), Some(2));

    let flat = dir.path().join("flat.toml");
    std::fs::write(&flat, "[director]\ngradient = [1, 1, 0, 0, 0, 0]\n").unwrap();
    assert_eq!(memrelax(&["director", flat.to_str().unwrap()], dir.path()).status.code(), Some(3));

    assert_eq!(memrelax(&["w0", "--xi", "e1"], dir.path()).status.code(), Some(2));
    assert_eq!(memrelax(&["no-such-command"], dir.path()).status.code(), Some(2));
}

#[test]
fn json_config_and_seed_change_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"w0": {"points": [[2, 0, 0, 2, 0, 0]]}}"#).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(memrelax(&["w0", "--config", cfg.to_str().unwrap()], &a).status.success());
    assert!(memrelax(&["w0", "--config", cfg.to_str().unwrap(), "--seed", "9"], &b).status.success());
    let ca = std::fs::read_to_string(a.join("w0.csv")).unwrap();
    let cb = std::fs::read_to_string(b.join("w0.csv")).unwrap();
    assert!(ca.contains(",8.7500000000000000e0,"));
    assert_ne!(ca.lines().next(), cb.lines().next());
    assert_eq!(ca.lines().skip(1).collect::<Vec<_>>(), cb.lines().skip(1).collect::<Vec<_>>());
}

#[test]
fn recovery_and_director_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(memrelax(&["recovery", "--eps", "0.1,0.01"], dir.path()).status.success());
    let csv = std::fs::read_to_string(dir.path().join("recovery.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let o = memrelax(&["director", "--j", "1,4,64"], dir.path());
    assert!(o.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("director.json")).unwrap()).unwrap();
    assert!(json["config_hash"].is_string());
    assert_eq!(json["data"]["normal"]["j_v"], 1);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        "[envelope]\ndepth = 1\n[envelope.search]\nfine_max = 2.0\ntable_max = 2.0\nfine_pitch = 0.1\n[mesh]\nn = 2\n[sweep]\neps = [0.2, 0.1]\nlayers = 3\n",
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = cfg.to_str().unwrap();
    assert!(memrelax(&["gamma-sweep", c, "--threads", "1"], &a).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_memrelax"))
        .args(["gamma-sweep", c, "--out", b.to_str().unwrap()])
        .env("MEMRELAX_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ["sweep.csv", "membrane.csv", "sweep.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
