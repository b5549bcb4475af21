//! Evaluation of learned policies: Pearson correlation between target and
//! achieved curves, deviation reports, an exhaustive scheduling oracle for
//! small instances, and allocation-quality statistics against that oracle.

use std::collections::BTreeMap;

use crate::agent::{greedy_rollout, Rollout};
use crate::domain::{ChargingStation, DrProgram, ElectricVehicle, ScheduleState};
use crate::env::{baseline_schedule, Env, EnvParams};
use crate::error::{Error, Result};
use crate::nn::NetworkParams;

/// Instances whose complete-schedule count exceeds this are rejected by the oracle.
pub const ORACLE_LEAF_LIMIT: f64 = 1.0e7;

/// Pearson correlation coefficient between two equally long, non-constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Argument(format!(
            "pearson needs two series of equal length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mean_x: f64 = x.iter().sum::<f64>() / n;
    let mean_y: f64 = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "a constant series has zero variance".into(),
        ));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Element-wise absolute deviations between target and achieved curves, and
/// their maximum. Energies are magnitudes; negative entries are rejected.
pub fn deviation_report(target: &[f64], achieved: &[f64]) -> Result<(Vec<f64>, f64)> {
    if target.len() != achieved.len() {
        return Err(Error::Argument(format!(
            "curve lengths differ: {} vs {}",
            target.len(),
            achieved.len()
        )));
    }
    if target.iter().chain(achieved).any(|&e| e < 0.0) {
        return Err(Error::Argument("energy curves must be non-negative".into()));
    }
    let per_slot: Vec<f64> = target
        .iter()
        .zip(achieved)
        .map(|(t, a)| (t - a).abs())
        .collect();
    let max = per_slot.iter().copied().fold(0.0f64, f64::max);
    Ok((per_slot, max))
}

pub struct OracleResult {
    pub schedule: ScheduleState,
    pub distance: f64,
}

struct OracleSearch<'a> {
    fleet: &'a [ElectricVehicle],
    n_stations: usize,
    horizon: usize,
    target: &'a [f64],
    /// (station, timeslot, energy) choices per EV, precomputed.
    choices: Vec<Vec<(usize, usize, f64)>>,
}

impl<'a> OracleSearch<'a> {
    fn new(
        program: &'a DrProgram,
        fleet: &'a [ElectricVehicle],
        stations: &'a [ChargingStation],
        params: EnvParams,
    ) -> Result<Self> {
        let env = Env::new(program, fleet, stations, params)?;
        let n_cells = stations.len() * program.horizon;
        let leaves = ((n_cells + 1) as f64).powi(fleet.len() as i32);
        if leaves > ORACLE_LEAF_LIMIT {
            return Err(Error::Capacity(format!(
                "instance admits ~{leaves:.3e} complete schedules, above the {ORACLE_LEAF_LIMIT:.0e} enumeration guard"
            )));
        }
        let choices = fleet
            .iter()
            .map(|ev| {
                if !env.eligible(ev, program.scenario) {
                    return Vec::new();
                }
                let mut cells = Vec::with_capacity(n_cells);
                for (si, station) in stations.iter().enumerate() {
                    for timeslot in 0..program.horizon {
                        let energy = env
                            .assignment_energy(ev, station, program.scenario)
                            .expect("eligibility checked above");
                        cells.push((si, timeslot, energy));
                    }
                }
                cells
            })
            .collect();
        Ok(OracleSearch {
            fleet,
            n_stations: stations.len(),
            horizon: program.horizon,
            target: &program.target_kwh,
            choices,
        })
    }

    /// Walks every legal schedule (each EV unassigned or on one free,
    /// target-respecting cell) and hands the leaf matrices to `visit`.
    fn enumerate(&self, mut visit: impl FnMut(&[u32], f64)) {
        let mut cells = vec![0u32; self.n_stations * self.horizon];
        let mut per_slot = vec![0.0f64; self.horizon];
        self.recurse(0, &mut cells, &mut per_slot, &mut visit);
    }

    fn recurse(
        &self,
        ev_index: usize,
        cells: &mut Vec<u32>,
        per_slot: &mut Vec<f64>,
        visit: &mut impl FnMut(&[u32], f64),
    ) {
        if ev_index == self.fleet.len() {
            let distance: f64 = self
                .target
                .iter()
                .zip(per_slot.iter())
                .map(|(t, s)| (t - s).abs())
                .sum();
            visit(cells, distance);
            return;
        }
        // option: leave this EV unassigned
        self.recurse(ev_index + 1, cells, per_slot, visit);
        let ev_id = self.fleet[ev_index].id;
        for &(station, timeslot, energy) in &self.choices[ev_index] {
            let cell = station * self.horizon + timeslot;
            if cells[cell] != 0 {
                continue;
            }
            if per_slot[timeslot] + energy > self.target[timeslot] {
                continue;
            }
            cells[cell] = ev_id;
            per_slot[timeslot] += energy;
            self.recurse(ev_index + 1, cells, per_slot, visit);
            cells[cell] = 0;
            per_slot[timeslot] -= energy;
        }
    }

    fn state_from_cells(&self, cells: &[u32]) -> ScheduleState {
        let mut state = ScheduleState::empty(self.n_stations, self.horizon);
        for (i, &ev) in cells.iter().enumerate() {
            if ev != 0 {
                state.set_cell(i / self.horizon, i % self.horizon, ev);
            }
        }
        state
    }
}

/// Exhaustively enumerates every legal schedule (EVs may stay unassigned) and
/// returns one minimizing the L1 distance to the target curve, ties broken by
/// the lexicographically smallest matrix. Guarded against large instances.
pub fn brute_force_oracle(
    program: &DrProgram,
    fleet: &[ElectricVehicle],
    stations: &[ChargingStation],
    params: EnvParams,
) -> Result<OracleResult> {
    let search = OracleSearch::new(program, fleet, stations, params)?;
    let mut best_distance = f64::INFINITY;
    let mut best_cells: Option<Vec<u32>> = None;
    search.enumerate(|cells, distance| {
        let improves = match &best_cells {
            None => true,
            Some(best) => {
                distance < best_distance - 1e-9
                    || ((distance - best_distance).abs() <= 1e-9 && cells < best.as_slice())
            }
        };
        if improves {
            best_distance = best_distance.min(distance);
            best_cells = Some(cells.to_vec());
        }
    });
    let cells = best_cells.expect("enumeration always visits the empty schedule");
    Ok(OracleResult {
        schedule: search.state_from_cells(&cells),
        distance: best_distance,
    })
}

/// All distance-optimal schedules of an instance (up to the enumeration guard).
pub fn optimal_schedules(
    program: &DrProgram,
    fleet: &[ElectricVehicle],
    stations: &[ChargingStation],
    params: EnvParams,
) -> Result<(f64, Vec<ScheduleState>)> {
    let search = OracleSearch::new(program, fleet, stations, params)?;
    let mut best = f64::INFINITY;
    search.enumerate(|_, distance| {
        if distance < best {
            best = distance;
        }
    });
    let mut optima = Vec::new();
    search.enumerate(|cells, distance| {
        if (distance - best).abs() <= 1e-9 {
            optima.push(cells.to_vec());
        }
    });
    Ok((
        best,
        optima
            .into_iter()
            .map(|c| search.state_from_cells(&c))
            .collect(),
    ))
}

/// Cells on which the two schedules' delivering assignments differ, capped at
/// the fleet size. This is the per-episode "suboptimally allocated EVs" count.
fn hamming_to_schedule(
    rollout: &ScheduleState,
    optimum: &ScheduleState,
    fleet_size: usize,
) -> usize {
    let mut delivered = vec![0u32; rollout.cells().len()];
    for asg in rollout.delivering_assignments() {
        delivered[asg.station * rollout.horizon() + asg.timeslot] = asg.ev_id;
    }
    let differing = delivered
        .iter()
        .zip(optimum.cells())
        .filter(|(x, y)| x != y)
        .count();
    differing.min(fleet_size)
}

/// Histogram over greedy-rollout episodes of the minimum Hamming distance to
/// any oracle-optimal schedule, as fractions of the episode count.
pub fn allocation_stats(
    qnet: &NetworkParams,
    program: &DrProgram,
    fleet: &[ElectricVehicle],
    stations: &[ChargingStation],
    params: EnvParams,
    episodes: usize,
) -> Result<BTreeMap<usize, f64>> {
    if episodes == 0 {
        return Err(Error::Argument("episode count must be >= 1".into()));
    }
    let (_, optima) = optimal_schedules(program, fleet, stations, params)?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for _ in 0..episodes {
        let rollout = greedy_rollout(qnet, program, fleet, stations, params)?;
        let suboptimal = optima
            .iter()
            .map(|opt| hamming_to_schedule(&rollout.schedule, opt, fleet.len()))
            .min()
            .unwrap_or(fleet.len());
        *counts.entry(suboptimal).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / episodes as f64))
        .collect())
}

/// Summary of a policy evaluation run.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub pearson: f64,
    pub per_slot_deviation: Vec<f64>,
    pub max_deviation: f64,
    /// Omitted when the instance is too large for the oracle.
    pub allocation_histogram: Option<BTreeMap<usize, f64>>,
    pub baseline_pearson: f64,
    pub episode_rewards: Vec<f64>,
    pub achieved_kwh: Vec<f64>,
    pub baseline_kwh: Vec<f64>,
}

/// Runs greedy rollouts and compares the achieved curve of the final rollout
/// against the target and the uncoordinated baseline.
pub fn evaluate(
    qnet: &NetworkParams,
    program: &DrProgram,
    fleet: &[ElectricVehicle],
    stations: &[ChargingStation],
    params: EnvParams,
    episodes: usize,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Argument("episode count must be >= 1".into()));
    }
    let mut episode_rewards = Vec::with_capacity(episodes);
    let mut last: Option<Rollout> = None;
    for _ in 0..episodes {
        let rollout = greedy_rollout(qnet, program, fleet, stations, params)?;
        episode_rewards.push(rollout.reward);
        last = Some(rollout);
    }
    let rollout = last.expect("episodes >= 1");
    let achieved = rollout.ledger.per_slot_kwh.clone();

    let env = Env::new(program, fleet, stations, params)?;
    let baseline_state = baseline_schedule(program, fleet, stations, params)?;
    let baseline_kwh = env.energy_of_state(&baseline_state)?.per_slot_kwh;

    let (per_slot_deviation, max_deviation) = deviation_report(&program.target_kwh, &achieved)?;
    let report_pearson = pearson(&program.target_kwh, &achieved)?;
    let baseline_pearson = pearson(&program.target_kwh, &baseline_kwh)?;
    let allocation_histogram =
        match allocation_stats(qnet, program, fleet, stations, params, episodes) {
            Ok(h) => Some(h),
            Err(Error::Capacity(_)) => None,
            Err(e) => return Err(e),
        };

    Ok(EvalReport {
        pearson: report_pearson,
        per_slot_deviation,
        max_deviation,
        allocation_histogram,
        baseline_pearson,
        episode_rewards,
        achieved_kwh: achieved,
        baseline_kwh,
    })
}
