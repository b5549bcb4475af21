//! The scheduling MDP: constraint checks, energy accounting, rewards, episode
//! termination, and the uncoordinated first-come-first-served baseline.

use crate::domain::{
    Action, ChargingStation, Conflict, DrProgram, ElectricVehicle, OperationKind, ScheduleState,
    EMPTY_CELL,
};
use crate::error::{Error, Result};

/// Reward is `-REWARD_SCALE *` the L1 distance between target and scheduled curve.
pub const REWARD_SCALE: f64 = 100.0;

/// SoC eligibility thresholds and the violation penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_margin: f64,
    pub max_penalty: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            soc_min: 0.20,
            soc_max: 0.90,
            soc_margin: 0.05,
            max_penalty: -1.0e5,
        }
    }
}

impl From<&crate::domain::Hyperparams> for EnvParams {
    fn from(hp: &crate::domain::Hyperparams) -> Self {
        EnvParams {
            soc_min: hp.soc_min,
            soc_max: hp.soc_max,
            soc_margin: hp.soc_margin,
            max_penalty: hp.max_penalty,
        }
    }
}

/// Which scheduling constraint an action violates, in check order.
/// `step` reports the first violated one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Action kind does not match the program scenario.
    KindMismatch,
    /// SoC too close to the upper threshold to accept a charge.
    SocTooHighToCharge,
    /// SoC too close to the lower threshold to allow a discharge.
    SocTooLowToDischarge,
    /// Cell already occupied, or the EV is already assigned somewhere.
    DoubleBooking,
    /// The assignment would push the slot's scheduled energy above the target.
    TargetExceeded,
}

impl Violation {
    pub fn code(self) -> &'static str {
        match self {
            Violation::KindMismatch => "kind_mismatch",
            Violation::SocTooHighToCharge => "soc_too_high",
            Violation::SocTooLowToDischarge => "soc_too_low",
            Violation::DoubleBooking => "double_booking",
            Violation::TargetExceeded => "target_exceeded",
        }
    }

    /// Only a double booking terminates the episode.
    pub fn is_terminal(self) -> bool {
        matches!(self, Violation::DoubleBooking)
    }
}

/// Per-slot energy accounting. `per_slot_kwh[t]` is the magnitude of energy
/// moved by all stations in slot `t`; `remaining_kwh[t] = target[t] - per_slot[t]`
/// in both scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub per_slot_kwh: Vec<f64>,
    pub remaining_kwh: Vec<f64>,
}

impl EnergyLedger {
    pub fn new(target: &[f64]) -> Self {
        EnergyLedger {
            per_slot_kwh: vec![0.0; target.len()],
            remaining_kwh: target.to_vec(),
        }
    }

    /// L1 distance between the target and the scheduled curve.
    pub fn l1_gap(&self) -> f64 {
        self.remaining_kwh.iter().map(|r| r.abs()).sum()
    }
}

/// Result of applying one action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: ScheduleState,
    pub next_ledger: EnergyLedger,
    pub reward: f64,
    pub done: bool,
    pub violation: Option<Violation>,
}

/// The scheduling environment. Transitions are pure functions of
/// `(state, ledger, action)`; the struct only borrows the fixed problem data.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    program: &'a DrProgram,
    fleet: &'a [ElectricVehicle],
    stations: &'a [ChargingStation],
    params: EnvParams,
}

impl<'a> Env<'a> {
    pub fn new(
        program: &'a DrProgram,
        fleet: &'a [ElectricVehicle],
        stations: &'a [ChargingStation],
        params: EnvParams,
    ) -> Result<Self> {
        program.validate()?;
        crate::domain::validate_fleet(fleet)?;
        crate::domain::validate_stations(stations)?;
        if !(0.0 <= params.soc_min && params.soc_min < params.soc_max && params.soc_max <= 1.0) {
            return Err(Error::Config(format!(
                "require 0 <= soc_min < soc_max <= 1, got {} / {}",
                params.soc_min, params.soc_max
            )));
        }
        if !params.soc_margin.is_finite() || params.soc_margin < 0.0 {
            return Err(Error::Config("soc_margin must be >= 0".into()));
        }
        if !params.max_penalty.is_finite() || params.max_penalty >= 0.0 {
            return Err(Error::Config("max_penalty must be < 0".into()));
        }
        Ok(Env {
            program,
            fleet,
            stations,
            params,
        })
    }

    pub fn program(&self) -> &DrProgram {
        self.program
    }

    pub fn fleet(&self) -> &[ElectricVehicle] {
        self.fleet
    }

    pub fn stations(&self) -> &[ChargingStation] {
        self.stations
    }

    pub fn params(&self) -> EnvParams {
        self.params
    }

    /// All-zero matrix plus a fresh ledger (`remaining == target`).
    pub fn reset(&self) -> (ScheduleState, EnergyLedger) {
        (
            ScheduleState::empty(self.stations.len(), self.program.horizon),
            EnergyLedger::new(&self.program.target_kwh),
        )
    }

    pub fn ev_by_id(&self, ev_id: u32) -> Option<&ElectricVehicle> {
        self.fleet.iter().find(|ev| ev.id == ev_id)
    }

    /// SoC eligibility: chargeable iff `soc <= soc_max - margin`, dischargeable
    /// iff `soc >= soc_min + margin`.
    pub fn eligible(&self, ev: &ElectricVehicle, kind: OperationKind) -> bool {
        match kind {
            OperationKind::Charge => ev.soc <= self.params.soc_max - self.params.soc_margin,
            OperationKind::Discharge => ev.soc >= self.params.soc_min + self.params.soc_margin,
        }
    }

    /// Energy one assignment moves: pairwise power limit times slot duration,
    /// capped so the SoC stays inside `[soc_min, soc_max]`. No eligibility gate.
    fn raw_energy(&self, ev: &ElectricVehicle, station: &ChargingStation, kind: OperationKind) -> f64 {
        let power = ev.max_power_kw.min(station.max_power_kw);
        let by_power = power * self.program.slot_duration_h;
        let by_soc = match kind {
            OperationKind::Charge => (self.params.soc_max - ev.soc) * ev.capacity_kwh,
            OperationKind::Discharge => (ev.soc - self.params.soc_min) * ev.capacity_kwh,
        };
        by_power.min(by_soc).max(0.0)
    }

    /// Energy delivered by assigning `ev` to `station` for one slot.
    pub fn assignment_energy(
        &self,
        ev: &ElectricVehicle,
        station: &ChargingStation,
        kind: OperationKind,
    ) -> Result<f64> {
        if !self.eligible(ev, kind) {
            return Err(Error::Eligibility(format!(
                "EV {} (soc {:.3}) is not eligible to {kind}",
                ev.id, ev.soc
            )));
        }
        Ok(self.raw_energy(ev, station, kind))
    }

    fn validate_action(&self, a: &Action) -> Result<&ElectricVehicle> {
        if a.station >= self.stations.len() {
            return Err(Error::Range(format!(
                "action station {} out of range ({} stations)",
                a.station,
                self.stations.len()
            )));
        }
        if a.timeslot >= self.program.horizon {
            return Err(Error::Range(format!(
                "action timeslot {} out of range (horizon {})",
                a.timeslot, self.program.horizon
            )));
        }
        self.ev_by_id(a.ev_id)
            .ok_or_else(|| Error::Range(format!("action names unknown EV id {}", a.ev_id)))
    }

    /// Returns the first violated constraint in check order, or `None`.
    pub fn check_constraints(
        &self,
        state: &ScheduleState,
        ledger: &EnergyLedger,
        a: &Action,
    ) -> Option<Violation> {
        let ev = self.ev_by_id(a.ev_id)?;
        if a.kind != self.program.scenario {
            return Some(Violation::KindMismatch);
        }
        if !self.eligible(ev, a.kind) {
            return Some(match a.kind {
                OperationKind::Charge => Violation::SocTooHighToCharge,
                OperationKind::Discharge => Violation::SocTooLowToDischarge,
            });
        }
        if !state.is_cell_empty(a.station, a.timeslot) || state.contains_ev(a.ev_id) {
            return Some(Violation::DoubleBooking);
        }
        let energy = self.raw_energy(ev, &self.stations[a.station], a.kind);
        if ledger.per_slot_kwh[a.timeslot] + energy > self.program.target_kwh[a.timeslot] {
            return Some(Violation::TargetExceeded);
        }
        None
    }

    /// Immediate reward: `max_penalty` on any violation, otherwise the negated
    /// scaled L1 distance between target and scheduled curve over the horizon.
    pub fn reward(&self, ledger: &EnergyLedger, violation: Option<Violation>) -> f64 {
        if violation.is_some() {
            self.params.max_penalty
        } else {
            -REWARD_SCALE * ledger.l1_gap()
        }
    }

    /// Applies one action. Non-terminal violations leave the state untouched
    /// and cost `max_penalty`; a double booking writes the conflicting
    /// assignment (the faulted cell delivers no energy, so the ledger keeps
    /// the last valid accounting) and terminates; a legal action writes the
    /// assignment, updates the ledger, and terminates once every EV is placed.
    pub fn step(
        &self,
        state: &ScheduleState,
        ledger: &EnergyLedger,
        a: &Action,
    ) -> Result<StepOutcome> {
        let ev = self.validate_action(a)?;
        match self.check_constraints(state, ledger, a) {
            Some(Violation::DoubleBooking) => {
                let mut next = state.clone();
                let occupant = next.cell(a.station, a.timeslot);
                next.set_cell(a.station, a.timeslot, a.ev_id);
                next.set_conflict(Conflict {
                    station: a.station,
                    timeslot: a.timeslot,
                    displaced: (occupant != EMPTY_CELL).then_some(occupant),
                });
                Ok(StepOutcome {
                    next_state: next,
                    next_ledger: ledger.clone(),
                    reward: self.params.max_penalty,
                    done: true,
                    violation: Some(Violation::DoubleBooking),
                })
            }
            Some(v) => Ok(StepOutcome {
                next_state: state.clone(),
                next_ledger: ledger.clone(),
                reward: self.params.max_penalty,
                done: false,
                violation: Some(v),
            }),
            None => {
                let energy = self.raw_energy(ev, &self.stations[a.station], a.kind);
                let mut next = state.clone();
                next.set_cell(a.station, a.timeslot, a.ev_id);
                let mut next_ledger = ledger.clone();
                next_ledger.per_slot_kwh[a.timeslot] += energy;
                next_ledger.remaining_kwh[a.timeslot] -= energy;
                let done = self.episode_done(&next);
                let reward = self.reward(&next_ledger, None);
                Ok(StepOutcome {
                    next_state: next,
                    next_ledger,
                    reward,
                    done,
                    violation: None,
                })
            }
        }
    }

    /// Recomputes the ledger from the matrix. For states reached through legal
    /// steps this equals the incrementally maintained ledger.
    pub fn energy_of_state(&self, state: &ScheduleState) -> Result<EnergyLedger> {
        let mut ledger = EnergyLedger::new(&self.program.target_kwh);
        for a in state.delivering_assignments() {
            let ev = self.ev_by_id(a.ev_id).ok_or_else(|| {
                Error::Data(format!(
                    "cell ({}, {}) references unknown EV id {}",
                    a.station, a.timeslot, a.ev_id
                ))
            })?;
            let energy = self.raw_energy(ev, &self.stations[a.station], self.program.scenario);
            ledger.per_slot_kwh[a.timeslot] += energy;
            ledger.remaining_kwh[a.timeslot] -= energy;
        }
        Ok(ledger)
    }

    /// True once every fleet EV appears in the matrix or a conflict was recorded.
    pub fn episode_done(&self, state: &ScheduleState) -> bool {
        state.conflict().is_some() || self.fleet.iter().all(|ev| state.contains_ev(ev.id))
    }
}

/// Uncoordinated first-come-first-served schedule: EVs in fleet order take the
/// earliest free (slot, station) cell they are SoC-eligible for, ignoring the
/// per-slot target bound. EVs that fit nowhere stay unassigned.
pub fn baseline_schedule(
    program: &DrProgram,
    fleet: &[ElectricVehicle],
    stations: &[ChargingStation],
    params: EnvParams,
) -> Result<ScheduleState> {
    let env = Env::new(program, fleet, stations, params)?;
    let mut state = ScheduleState::empty(stations.len(), program.horizon);
    for ev in fleet {
        if !env.eligible(ev, program.scenario) {
            continue;
        }
        'cells: for timeslot in 0..program.horizon {
            for station in 0..stations.len() {
                if state.is_cell_empty(station, timeslot) {
                    state.set_cell(station, timeslot, ev.id);
                    break 'cells;
                }
            }
        }
    }
    Ok(state)
}
