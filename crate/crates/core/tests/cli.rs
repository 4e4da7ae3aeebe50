mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use leoshot::config::ExperimentConfig;

const QUICK: &[&str] = &[
    "training.local_epochs=3",
    "data.train_per_class=24",
    "data.test_per_class=10",
    "training.synthetic_samples=200",
    "training.generator_epochs=3",
    "training.distill_epochs=3",
    "training.retrain_max_rounds=2",
    "training.fedavg_rounds_max=2",
];

fn leoshot(args: &[&str], out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_leoshot"));
    cmd.args(args)
        .arg("--out")
        .arg(out)
        .arg("--config")
        .arg(common::configs_dir().join("desk.conf"));
    for s in QUICK {
        cmd.arg("--set").arg(s);
    }
    cmd.output().unwrap()
}

/// Relative path → contents of every CSV under `dir`.
fn csv_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn every_subcommand_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in ["visibility", "fedavg", "leoshot", "compare"] {
        let a = tmp.path().join(format!("{sub}-a"));
        let b = tmp.path().join(format!("{sub}-b"));
        for dir in [&a, &b] {
            let out = leoshot(&[sub, "--seed", "3"], dir);
            assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        }
        let (ta, tb) = (csv_tree(&a), csv_tree(&b));
        assert!(!ta.is_empty(), "{sub} wrote no CSV");
        assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
        for (k, v) in &ta {
            assert!(v == &tb[k], "{sub}: {} differs between runs", k.display());
        }
    }
}

#[test]
fn subcommands_write_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = leoshot(&["compare"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("speedup"));
    for f in [
        "compare.csv",
        "leoshot/events.csv",
        "leoshot/trajectory.csv",
        "leoshot/summary.csv",
        "leoshot/phases.csv",
        "leoshot/synthetic.csv",
        "fedavg/events.csv",
        "fedavg/trajectory.csv",
        "fedavg/summary.csv",
    ] {
        assert!(tmp.path().join(f).is_file(), "missing {f}");
    }
}

#[test]
fn seeds_change_the_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(leoshot(&["leoshot", "--seed", "1"], &a).status.success());
    assert!(leoshot(&["leoshot", "--seed", "2"], &b).status.success());
    assert_ne!(fs::read(a.join("synthetic.csv")).unwrap(), fs::read(b.join("synthetic.csv")).unwrap());
}

#[test]
fn bad_input_exits_non_zero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["visibility", "--set", "link.tx_power_dbm=500"],
        &["visibility", "--set", "nosuch.key=1"],
        &["visibility", "--set", "scenario.horizon_s"],
        &["fedavg", "--set", "scenario.horizon_s=600"],
    ];
    for args in cases {
        let out = leoshot(args, tmp.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.starts_with("error: "), "{args:?}: {err}");
    }
    let out = leoshot(&["visibility", "--set", "link.tx_power_dbm=500"], tmp.path());
    assert!(String::from_utf8(out.stderr).unwrap().contains("link.tx_power_dbm"));

    let bad = tmp.path().join("bad.conf");
    fs::write(&bad, "constellation.orbits = 5\nthis line is wrong\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_leoshot"))
        .args(["visibility", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
}

#[test]
fn config_dump_round_trips() {
    let cfg = common::desk(4, QUICK);
    let again = ExperimentConfig::parse(&cfg.dump()).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.dump(), cfg.dump());
    assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
}
