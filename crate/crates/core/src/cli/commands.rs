//! Command implementations: train, evaluate, schedule, baseline, gen-fleet.
//! Each writes deterministic artifacts into the configured output directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::agent::{greedy_rollout, train};
use crate::domain::{Assignment, ScheduleState};
use crate::env::{baseline_schedule, Env};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::nn::NetworkParams;

use super::config::{ResolvedRun, RunConfig};
use super::fleet::write_fleet_csv;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const MANIFEST_FILE: &str = "manifest.cfg";
pub const FLEET_FILE: &str = "fleet.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const CURVES_FILE: &str = "curves.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const BASELINE_SCHEDULE_FILE: &str = "baseline_schedule.csv";
pub const BASELINE_CURVE_FILE: &str = "baseline_curve.csv";

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

/// Trains a policy and writes checkpoint, history CSV, the fleet snapshot and
/// a fully resolved run manifest.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let resolved = cfg.resolve()?;
    let (qnet, history) = train(
        &resolved.program,
        &resolved.fleet,
        &resolved.stations,
        &resolved.hp,
        resolved.netcfg.clone(),
    )?;
    ensure_out_dir(cfg)?;
    qnet.save_to_path(&cfg.out_dir.join(CHECKPOINT_FILE))?;
    write_fleet_csv(&cfg.out_dir.join(FLEET_FILE), &resolved.fleet)?;

    let mut csv = String::from("episode,reward,loss,epsilon\n");
    let losses = history.episode_mean_losses();
    for (i, loss) in losses.iter().enumerate() {
        writeln!(
            csv,
            "{},{},{},{}",
            i, history.episode_rewards[i], loss, history.epsilons[i]
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(cfg.out_dir.join(HISTORY_FILE), csv)?;

    let manifest = cfg.to_manifest(&resolved, FLEET_FILE);
    std::fs::write(cfg.out_dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

fn load_checkpoint_for(resolved: &ResolvedRun, checkpoint: &Path) -> Result<NetworkParams> {
    let qnet = NetworkParams::load_from_path(checkpoint)?;
    let found = qnet.config();
    let expect = &resolved.netcfg;
    if found.input_size != expect.input_size || found.output_size != expect.output_size {
        return Err(Error::Shape(format!(
            "checkpoint network is {}->{} but the configuration implies {}->{}",
            found.input_size, found.output_size, expect.input_size, expect.output_size
        )));
    }
    Ok(qnet)
}

/// Evaluates a checkpoint: report key-values plus target/achieved/baseline curves.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let resolved = cfg.resolve()?;
    let qnet = load_checkpoint_for(&resolved, checkpoint)?;
    let report = evaluate(
        &qnet,
        &resolved.program,
        &resolved.fleet,
        &resolved.stations,
        resolved.env_params(),
        cfg.eval_episodes,
    )?;
    ensure_out_dir(cfg)?;

    let mut txt = String::new();
    writeln!(txt, "pearson={}", report.pearson).unwrap();
    writeln!(txt, "baseline_pearson={}", report.baseline_pearson).unwrap();
    writeln!(txt, "max_deviation_kwh={}", report.max_deviation).unwrap();
    let dev: Vec<String> = report
        .per_slot_deviation
        .iter()
        .map(|v| v.to_string())
        .collect();
    writeln!(txt, "per_slot_deviation_kwh={}", dev.join(",")).unwrap();
    let rewards: Vec<String> = report
        .episode_rewards
        .iter()
        .map(|v| v.to_string())
        .collect();
    writeln!(txt, "episode_rewards={}", rewards.join(",")).unwrap();
    match &report.allocation_histogram {
        Some(hist) => {
            for (k, frac) in hist {
                writeln!(txt, "allocation_histogram_{k}={frac}").unwrap();
            }
        }
        None => writeln!(txt, "allocation_histogram=intractable").unwrap(),
    }
    std::fs::write(cfg.out_dir.join(REPORT_FILE), txt)?;

    let mut csv = String::from("slot,target_kwh,achieved_kwh,baseline_kwh\n");
    for t in 0..resolved.program.horizon {
        writeln!(
            csv,
            "{},{},{},{}",
            t, resolved.program.target_kwh[t], report.achieved_kwh[t], report.baseline_kwh[t]
        )
        .unwrap();
    }
    std::fs::write(cfg.out_dir.join(CURVES_FILE), csv)?;
    Ok(())
}

fn schedule_to_csv(resolved: &ResolvedRun, state: &ScheduleState) -> Result<String> {
    let env = Env::new(
        &resolved.program,
        &resolved.fleet,
        &resolved.stations,
        resolved.env_params(),
    )?;
    let mut rows: Vec<Assignment> = state.delivering_assignments();
    rows.sort_by_key(|a| (a.station, a.timeslot));
    let mut csv = String::from("station,timeslot,ev_id,kind,energy_kwh\n");
    for a in rows {
        let ev = env.ev_by_id(a.ev_id).ok_or_else(|| {
            Error::Data(format!("schedule references unknown EV id {}", a.ev_id))
        })?;
        let energy = env.assignment_energy(
            ev,
            &resolved.stations[a.station],
            resolved.program.scenario,
        )?;
        writeln!(
            csv,
            "{},{},{},{},{}",
            a.station,
            a.timeslot,
            a.ev_id,
            resolved.program.scenario.code(),
            energy
        )
        .unwrap();
    }
    Ok(csv)
}

/// Emits the greedy rollout of a checkpoint as a deployable schedule CSV.
pub fn cmd_schedule(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let resolved = cfg.resolve()?;
    let qnet = load_checkpoint_for(&resolved, checkpoint)?;
    let rollout = greedy_rollout(
        &qnet,
        &resolved.program,
        &resolved.fleet,
        &resolved.stations,
        resolved.env_params(),
    )?;
    ensure_out_dir(cfg)?;
    std::fs::write(
        cfg.out_dir.join(SCHEDULE_FILE),
        schedule_to_csv(&resolved, &rollout.schedule)?,
    )?;
    Ok(())
}

/// Emits the first-come-first-served baseline schedule and its curve.
pub fn cmd_baseline(cfg: &RunConfig) -> Result<()> {
    let resolved = cfg.resolve()?;
    let state = baseline_schedule(
        &resolved.program,
        &resolved.fleet,
        &resolved.stations,
        resolved.env_params(),
    )?;
    ensure_out_dir(cfg)?;
    std::fs::write(
        cfg.out_dir.join(BASELINE_SCHEDULE_FILE),
        schedule_to_csv(&resolved, &state)?,
    )?;

    let env = Env::new(
        &resolved.program,
        &resolved.fleet,
        &resolved.stations,
        resolved.env_params(),
    )?;
    let ledger = env.energy_of_state(&state)?;
    let mut csv = String::from("slot,target_kwh,baseline_kwh\n");
    for t in 0..resolved.program.horizon {
        writeln!(
            csv,
            "{},{},{}",
            t, resolved.program.target_kwh[t], ledger.per_slot_kwh[t]
        )
        .unwrap();
    }
    std::fs::write(cfg.out_dir.join(BASELINE_CURVE_FILE), csv)?;
    Ok(())
}

/// Writes the generated (or re-exported) fleet to `fleet.csv` in the out dir.
pub fn cmd_gen_fleet(cfg: &RunConfig) -> Result<()> {
    let resolved = cfg.resolve()?;
    ensure_out_dir(cfg)?;
    write_fleet_csv(&cfg.out_dir.join(FLEET_FILE), &resolved.fleet)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::TargetSpec;
    use std::path::PathBuf;

    fn toy_config(out_dir: PathBuf) -> RunConfig {
        let text = "\
[program]
target = 22,11,7

[fleet]
generate = 4
mix = 0.25,0.5,0.25

[stations]
count = 2

[hyperparams]
epochs = 40
memory_size = 500
batch_size = 16
epsilon_decay = 0.99
seed = 3

[network]
hidden = 16,8
dropout_rate = 0
dropout_after =

[run]
eval_episodes = 3
";
        let mut cfg = RunConfig::parse(text, Path::new(".")).unwrap();
        cfg.out_dir = out_dir;
        cfg
    }

    #[test]
    fn train_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path().to_path_buf());
        cmd_train(&cfg).unwrap();
        for file in [CHECKPOINT_FILE, HISTORY_FILE, MANIFEST_FILE, FLEET_FILE] {
            assert!(dir.path().join(file).exists(), "{file} missing");
        }
        let history = std::fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
        assert!(history.starts_with("episode,reward,loss,epsilon\n"));
        assert_eq!(history.lines().count(), 41);
    }

    #[test]
    fn train_zero_epochs_writes_header_only_history() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_config(dir.path().to_path_buf());
        cfg.hp.epochs = 0;
        cmd_train(&cfg).unwrap();
        let history = std::fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
        assert_eq!(history, "episode,reward,loss,epsilon\n");
        assert!(dir.path().join(CHECKPOINT_FILE).exists());
    }

    #[test]
    fn train_reruns_are_bit_identical() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let cfg1 = toy_config(dir1.path().to_path_buf());
        let cfg2 = toy_config(dir2.path().to_path_buf());
        cmd_train(&cfg1).unwrap();
        cmd_train(&cfg2).unwrap();
        let h1 = std::fs::read(dir1.path().join(HISTORY_FILE)).unwrap();
        let h2 = std::fs::read(dir2.path().join(HISTORY_FILE)).unwrap();
        assert_eq!(h1, h2);
        let c1 = std::fs::read(dir1.path().join(CHECKPOINT_FILE)).unwrap();
        let c2 = std::fs::read(dir2.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn evaluate_and_schedule_consistent_with_training() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path().to_path_buf());
        cmd_train(&cfg).unwrap();
        let checkpoint = dir.path().join(CHECKPOINT_FILE);
        cmd_evaluate(&cfg, &checkpoint).unwrap();
        cmd_schedule(&cfg, &checkpoint).unwrap();
        cmd_baseline(&cfg).unwrap();

        let report = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
        let pearson_line = report
            .lines()
            .find(|l| l.starts_with("pearson="))
            .expect("pearson field present");
        let value: f64 = pearson_line["pearson=".len()..].parse().unwrap();
        assert!((-1.0..=1.0).contains(&value));

        let curves = std::fs::read_to_string(dir.path().join(CURVES_FILE)).unwrap();
        assert_eq!(curves.lines().count(), 4, "header plus horizon rows");

        // schedule rows: unique (station, timeslot), per-slot sums match the
        // achieved curve of evaluate
        let schedule = std::fs::read_to_string(dir.path().join(SCHEDULE_FILE)).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        let mut per_slot = [0.0f64; 3];
        for line in schedule.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let station: usize = f[0].parse().unwrap();
            let slot: usize = f[1].parse().unwrap();
            assert!(seen.insert((station, slot)), "duplicate cell in schedule");
            assert_eq!(f[3], "C");
            per_slot[slot] += f[4].parse::<f64>().unwrap();
        }
        for (slot, line) in curves.lines().skip(1).enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let achieved: f64 = f[2].parse().unwrap();
            assert!((achieved - per_slot[slot]).abs() < 1e-9);
        }

        // baseline curve equals the baseline column of evaluate's curves
        let baseline = std::fs::read_to_string(dir.path().join(BASELINE_CURVE_FILE)).unwrap();
        for (line_c, line_b) in curves.lines().skip(1).zip(baseline.lines().skip(1)) {
            let c: Vec<&str> = line_c.split(',').collect();
            let b: Vec<&str> = line_b.split(',').collect();
            assert_eq!(c[3], b[2]);
        }
    }

    #[test]
    fn evaluate_rejects_mismatched_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path().to_path_buf());
        cmd_train(&cfg).unwrap();
        // same checkpoint, larger fleet -> different action space
        let mut other = toy_config(dir.path().to_path_buf());
        other.fleet = crate::cli::config::FleetSpec::Generate {
            count: 5,
            mix: [1.0 / 3.0; 3],
        };
        other.target = TargetSpec::Inline(vec![22.0, 11.0, 7.0]);
        let err = cmd_evaluate(&other, &dir.path().join(CHECKPOINT_FILE)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let msg = err.to_string();
        assert!(msg.contains("->"), "diagnostic names both shapes: {msg}");
    }

    #[test]
    fn manifest_rerun_reproduces_history() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path().join("first"));
        cmd_train(&cfg).unwrap();
        let manifest_path = dir.path().join("first").join(MANIFEST_FILE);
        let mut cfg2 = RunConfig::load(&manifest_path).unwrap();
        cfg2.out_dir = dir.path().join("second");
        cmd_train(&cfg2).unwrap();
        let h1 = std::fs::read(dir.path().join("first").join(HISTORY_FILE)).unwrap();
        let h2 = std::fs::read(dir.path().join("second").join(HISTORY_FILE)).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn gen_fleet_writes_fleet_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path().to_path_buf());
        cmd_gen_fleet(&cfg).unwrap();
        let fleet = crate::cli::fleet::load_fleet(&dir.path().join(FLEET_FILE)).unwrap();
        assert_eq!(fleet.len(), 4);
    }

    #[test]
    fn discharge_pipeline_end_to_end() {
        // symmetric scenario: the fleet feeds the operator's shortfall curve
        let text = "\
[program]
scenario = discharge
target = 18,3,3

[fleet]
generate = 4
mix = 0.25,0.5,0.25

[stations]
count = 2

[hyperparams]
epochs = 500
memory_size = 1000
batch_size = 32
epsilon_decay = 0.995
seed = 6

[network]
hidden = 32,16
dropout_rate = 0
dropout_after =

[run]
eval_episodes = 2
";
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::parse(text, Path::new(".")).unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        cmd_train(&cfg).unwrap();
        cmd_schedule(&cfg, &dir.path().join(CHECKPOINT_FILE)).unwrap();
        cmd_baseline(&cfg).unwrap();
        let schedule = std::fs::read_to_string(dir.path().join(SCHEDULE_FILE)).unwrap();
        for line in schedule.lines().skip(1) {
            assert_eq!(line.split(',').nth(3), Some("D"));
        }
        let baseline = std::fs::read_to_string(dir.path().join(BASELINE_SCHEDULE_FILE)).unwrap();
        assert!(baseline.lines().count() > 1, "eligible EVs discharge in FCFS order");
    }
}
