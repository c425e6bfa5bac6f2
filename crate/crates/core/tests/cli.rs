use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_hagps");

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        "g_init = 1\n[data.synthetic]\nkind = \"toy\"\ndays = 4\nrate = 3\n[train]\nepochs = 1\nepisodes_per_epoch = 2\n",
    )
    .unwrap();
    path
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

#[test]
fn train_eval_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let mut runs = Vec::new();
    for (mode, extra) in [
        ("share-all", None),
        ("hagps", Some("--no-arp")),
        ("hagps", None),
    ] {
        let out = dir
            .path()
            .join(format!("{mode}-{}", extra.unwrap_or("full")));
        let mut cmd = Command::new(BIN);
        cmd.args(["train", "--config"])
            .arg(&cfg)
            .args(["--mode", mode, "--seed", "3", "--out"])
            .arg(&out);
        if let Some(flag) = extra {
            cmd.arg(flag);
        }
        let res = cmd.output().unwrap();
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        let manifest = json(&res.stdout);
        assert_eq!(manifest["seed"], 3);
        for f in [
            "manifest.json",
            "metrics.csv",
            "checkpoint.bin",
            "events.jsonl",
            "config.toml",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        runs.push(out);
    }

    let eval = |run: &Path| {
        let res = Command::new(BIN)
            .args(["eval", "--config"])
            .arg(&cfg)
            .arg("--checkpoint")
            .arg(run.join("checkpoint.bin"))
            .output()
            .unwrap();
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        json(&res.stdout)
    };
    assert_eq!(eval(&runs[0]), eval(&runs[0]));

    let res = Command::new(BIN)
        .arg("report")
        .args(&runs)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let rows = json(&res.stdout);
    let methods: Vec<&str> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, ["Share-All", "HAG-PS w/o ARP", "HAG-PS"]);
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("curves.csv").exists());
}

#[test]
fn failures_emit_error_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let res = Command::new(BIN)
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--mode", "share-all", "--no-id", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(json(&res.stderr)["error"]["kind"], "config");

    let res = Command::new(BIN)
        .args(["report", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));

    let res = Command::new(BIN)
        .args(["train", "--mode", "bogus"])
        .output()
        .unwrap();
    assert_eq!(json(&res.stderr)["error"]["kind"], "config");

    let res = Command::new(BIN).arg("frobnicate").output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(json(&res.stderr)["error"]["kind"], "usage");
}
