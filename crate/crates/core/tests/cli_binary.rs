//! End-to-end checks of the `evsched` binary: verbs, artifacts, exit codes
//! and the one-line greppable diagnostics.

use std::path::Path;
use std::process::Command;

fn evsched() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evsched"))
}

fn write_toy_config(dir: &Path) -> std::path::PathBuf {
    let fleet = "\
id,model,max_power_kw,capacity_kwh,connector,soc
1,Renault ZOE 22,22,22,Type2,0.88
2,Renault ZOE 41,22,41,Type2,0.5
3,Nissan LEAF,7,24,CHAdeMO,0.88
4,Renault ZOE 41,22,41,Type2,0.5
";
    std::fs::write(dir.join("fleet.csv"), fleet).unwrap();
    let cfg = "\
[program]
scenario = charge
target = 20,3.12,3.12

[fleet]
file = fleet.csv

[stations]
count = 2

[hyperparams]
epochs = 400
memory_size = 2000
batch_size = 32
epsilon_decay = 0.995
seed = 1

[network]
hidden = 32,16
dropout_rate = 0
dropout_after =

[run]
eval_episodes = 3
";
    let path = dir.join("toy.cfg");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn train_evaluate_schedule_baseline_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_config(dir.path());
    let out = dir.path().join("run");

    let status = evsched()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("checkpoint.bin").exists());
    assert!(out.join("history.csv").exists());
    assert!(out.join("manifest.cfg").exists());

    for verb in ["evaluate", "schedule"] {
        let status = evsched()
            .args([verb, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .arg("--checkpoint")
            .arg(out.join("checkpoint.bin"))
            .status()
            .unwrap();
        assert!(status.success(), "{verb} failed");
    }
    let status = evsched()
        .args(["baseline", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("report.txt").exists());
    assert!(out.join("curves.csv").exists());
    assert!(out.join("schedule.csv").exists());
    assert!(out.join("baseline_curve.csv").exists());
}

#[test]
fn missing_target_file_fails_with_config_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(
        &cfg,
        "[program]\ntarget_file = nope.csv\n\n[fleet]\ngenerate = 2\n",
    )
    .unwrap();
    let output = evsched()
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("error[config]") && stderr.contains("target profile"),
        "diagnostic was: {stderr}"
    );
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_config(dir.path());
    for (seed, out) in [("1", "a"), ("2", "b")] {
        let status = evsched()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .args(["--seed", seed])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.path().join("a").join("history.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b").join("history.csv")).unwrap();
    assert_ne!(a, b, "different seeds must produce different histories");
}

#[test]
fn gen_fleet_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.cfg");
    std::fs::write(
        &cfg,
        "[program]\ntarget = 1,2\n\n[fleet]\ngenerate = 6\nmix = 0.5,0.25,0.25\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = evsched()
        .args(["gen-fleet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let fleet = std::fs::read_to_string(out.join("fleet.csv")).unwrap();
    assert!(fleet.starts_with("id,model,max_power_kw,capacity_kwh,connector,soc\n"));
    assert_eq!(fleet.lines().count(), 7);
}
