//! Core value types shared by every other module: fleet, stations, the
//! demand-response program, the schedule matrix, actions and hyperparameters.

use crate::error::{Error, Result};

/// EV id 0 is reserved as the "empty cell" marker in the schedule matrix.
pub const EMPTY_CELL: u32 = 0;

/// Whether an action (or a whole program) moves energy into or out of the fleet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperationKind {
    Charge,
    Discharge,
}

impl OperationKind {
    /// One-letter code used in CSV output and action encoding.
    pub fn code(self) -> &'static str {
        match self {
            OperationKind::Charge => "C",
            OperationKind::Discharge => "D",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c" | "charge" => Ok(OperationKind::Charge),
            "d" | "discharge" => Ok(OperationKind::Discharge),
            other => Err(Error::Parse(format!(
                "unknown operation kind {other:?} (expected charge or discharge)"
            ))),
        }
    }
}

impl std::fmt::Display for OperationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperationKind::Charge => write!(f, "charge"),
            OperationKind::Discharge => write!(f, "discharge"),
        }
    }
}

/// One vehicle of the fleet. `soc` is the state of charge as a fraction of capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectricVehicle {
    pub id: u32,
    pub model_name: String,
    pub max_power_kw: f64,
    pub capacity_kwh: f64,
    pub connector_type: String,
    pub soc: f64,
}

impl ElectricVehicle {
    pub fn new(
        id: u32,
        model_name: impl Into<String>,
        max_power_kw: f64,
        capacity_kwh: f64,
        connector_type: impl Into<String>,
        soc: f64,
    ) -> Result<Self> {
        let ev = ElectricVehicle {
            id,
            model_name: model_name.into(),
            max_power_kw,
            capacity_kwh,
            connector_type: connector_type.into(),
            soc,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id == EMPTY_CELL {
            return Err(Error::Validation(
                "EV id 0 is reserved for empty schedule cells".into(),
            ));
        }
        if !self.max_power_kw.is_finite() || self.max_power_kw <= 0.0 {
            return Err(Error::Validation(format!(
                "EV {}: max_power must be a finite value > 0, got {}",
                self.id, self.max_power_kw
            )));
        }
        if !self.capacity_kwh.is_finite() || self.capacity_kwh <= 0.0 {
            return Err(Error::Validation(format!(
                "EV {}: capacity must be a finite value > 0, got {}",
                self.id, self.capacity_kwh
            )));
        }
        if !(0.0..=1.0).contains(&self.soc) {
            return Err(Error::Validation(format!(
                "EV {}: soc must be within [0, 1], got {}",
                self.id, self.soc
            )));
        }
        Ok(())
    }
}

/// Checks fleet-level invariants: per-EV validity plus unique ids.
pub fn validate_fleet(fleet: &[ElectricVehicle]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for ev in fleet {
        ev.validate()?;
        if !seen.insert(ev.id) {
            return Err(Error::Validation(format!("duplicate EV id {}", ev.id)));
        }
    }
    Ok(())
}

/// A charging point. Ids are contiguous row indices of the schedule matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingStation {
    pub id: usize,
    pub max_power_kw: f64,
}

impl ChargingStation {
    pub fn new(id: usize, max_power_kw: f64) -> Result<Self> {
        if !max_power_kw.is_finite() || max_power_kw <= 0.0 {
            return Err(Error::Validation(format!(
                "station {id}: max_power must be a finite value > 0, got {max_power_kw}"
            )));
        }
        Ok(ChargingStation { id, max_power_kw })
    }
}

pub fn validate_stations(stations: &[ChargingStation]) -> Result<()> {
    for (i, st) in stations.iter().enumerate() {
        if st.id != i {
            return Err(Error::Validation(format!(
                "station ids must be contiguous 0..N-1; index {i} holds id {}",
                st.id
            )));
        }
        if !st.max_power_kw.is_finite() || st.max_power_kw <= 0.0 {
            return Err(Error::Validation(format!(
                "station {}: max_power must be > 0",
                st.id
            )));
        }
    }
    Ok(())
}

/// The demand-response program: horizon, slot duration and the operator's
/// per-slot energy target, plus which operation the episode performs.
#[derive(Debug, Clone, PartialEq)]
pub struct DrProgram {
    pub horizon: usize,
    pub slot_duration_h: f64,
    pub target_kwh: Vec<f64>,
    pub scenario: OperationKind,
}

impl DrProgram {
    pub fn new(
        slot_duration_h: f64,
        target_kwh: Vec<f64>,
        scenario: OperationKind,
    ) -> Result<Self> {
        let program = DrProgram {
            horizon: target_kwh.len(),
            slot_duration_h,
            target_kwh,
            scenario,
        };
        program.validate()?;
        Ok(program)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Validation("program horizon must be >= 1".into()));
        }
        if self.target_kwh.len() != self.horizon {
            return Err(Error::Validation(format!(
                "target has {} entries but horizon is {}",
                self.target_kwh.len(),
                self.horizon
            )));
        }
        if !self.slot_duration_h.is_finite() || self.slot_duration_h <= 0.0 {
            return Err(Error::Validation(format!(
                "slot duration must be > 0 hours, got {}",
                self.slot_duration_h
            )));
        }
        for (t, &e) in self.target_kwh.iter().enumerate() {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::Validation(format!(
                    "target[{t}] must be a finite energy >= 0, got {e}"
                )));
            }
        }
        Ok(())
    }
}

/// A faulted cell: a second assignment was written onto a station/slot pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conflict {
    pub station: usize,
    pub timeslot: usize,
    /// EV id the write displaced, if the cell was already occupied.
    pub displaced: Option<u32>,
}

/// One placed assignment read out of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub station: usize,
    pub timeslot: usize,
    pub ev_id: u32,
}

/// The N x T assignment matrix of EV ids (0 = empty). At most one EV per cell;
/// under normal evolution each EV appears at most once. A double-booking write
/// is recorded in `conflict` and terminates the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    n_stations: usize,
    horizon: usize,
    cells: Vec<u32>,
    conflict: Option<Conflict>,
}

impl ScheduleState {
    pub fn empty(n_stations: usize, horizon: usize) -> Self {
        ScheduleState {
            n_stations,
            horizon,
            cells: vec![EMPTY_CELL; n_stations * horizon],
            conflict: None,
        }
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Station-major flattened matrix contents.
    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn cell(&self, station: usize, timeslot: usize) -> u32 {
        self.cells[station * self.horizon + timeslot]
    }

    pub fn is_cell_empty(&self, station: usize, timeslot: usize) -> bool {
        self.cell(station, timeslot) == EMPTY_CELL
    }

    pub fn contains_ev(&self, ev_id: u32) -> bool {
        self.cells.iter().any(|&c| c == ev_id && c != EMPTY_CELL)
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != EMPTY_CELL).count()
    }

    pub fn conflict(&self) -> Option<Conflict> {
        self.conflict
    }

    pub(crate) fn set_cell(&mut self, station: usize, timeslot: usize, ev_id: u32) {
        self.cells[station * self.horizon + timeslot] = ev_id;
    }

    pub(crate) fn set_conflict(&mut self, conflict: Conflict) {
        self.conflict = Some(conflict);
    }

    /// Nonzero cells in station-major order.
    pub fn assignments(&self) -> impl Iterator<Item = Assignment> + '_ {
        let horizon = self.horizon;
        self.cells.iter().enumerate().filter_map(move |(i, &ev)| {
            (ev != EMPTY_CELL).then_some(Assignment {
                station: i / horizon,
                timeslot: i % horizon,
                ev_id: ev,
            })
        })
    }

    /// Assignments that actually deliver energy: the conflicting write of a
    /// faulted episode is replaced by the EV it displaced (or dropped).
    pub fn delivering_assignments(&self) -> Vec<Assignment> {
        let mut out: Vec<Assignment> = Vec::new();
        for a in self.assignments() {
            match self.conflict {
                Some(c) if c.station == a.station && c.timeslot == a.timeslot => {
                    if let Some(prev) = c.displaced {
                        out.push(Assignment { ev_id: prev, ..a });
                    }
                }
                _ => out.push(a),
            }
        }
        out
    }
}

/// A candidate assignment of one EV to a station/timeslot cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub station: usize,
    pub ev_id: u32,
    pub timeslot: usize,
    pub kind: OperationKind,
}

/// Size of the flat action space: station x EV x timeslot x {charge, discharge}.
pub fn action_space_size(n_stations: usize, n_evs: usize, horizon: usize) -> usize {
    2 * n_stations * n_evs * horizon
}

/// Bijective map from an action to its flat index. Layout:
/// `((station * n_evs + (ev_id - 1)) * horizon + timeslot) * 2 + kind_bit`.
pub fn action_index(a: &Action, n_stations: usize, n_evs: usize, horizon: usize) -> Result<usize> {
    if a.station >= n_stations {
        return Err(Error::Range(format!(
            "station {} out of range (n_stations = {n_stations})",
            a.station
        )));
    }
    if a.ev_id == 0 || a.ev_id as usize > n_evs {
        return Err(Error::Range(format!(
            "ev id {} out of range (fleet size = {n_evs})",
            a.ev_id
        )));
    }
    if a.timeslot >= horizon {
        return Err(Error::Range(format!(
            "timeslot {} out of range (horizon = {horizon})",
            a.timeslot
        )));
    }
    let kind_bit = match a.kind {
        OperationKind::Charge => 0,
        OperationKind::Discharge => 1,
    };
    Ok(((a.station * n_evs + (a.ev_id as usize - 1)) * horizon + a.timeslot) * 2 + kind_bit)
}

/// Inverse of [`action_index`].
pub fn action_from_index(
    index: usize,
    n_stations: usize,
    n_evs: usize,
    horizon: usize,
) -> Result<Action> {
    let size = action_space_size(n_stations, n_evs, horizon);
    if index >= size {
        return Err(Error::Range(format!(
            "action index {index} out of range (action space size = {size})"
        )));
    }
    let kind = if index.is_multiple_of(2) {
        OperationKind::Charge
    } else {
        OperationKind::Discharge
    };
    let rest = index / 2;
    let timeslot = rest % horizon;
    let rest = rest / horizon;
    let ev_id = (rest % n_evs) as u32 + 1;
    let station = rest / n_evs;
    Ok(Action {
        station,
        ev_id,
        timeslot,
        kind,
    })
}

/// Training hyperparameters. Defaults are the tuned full-scale settings:
/// memory 700000, batch 50000, epsilon decay 0.99996, learning rate 0.001.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub epochs: usize,
    pub memory_size: usize,
    pub batch_size: usize,
    pub epsilon_initial: f64,
    pub epsilon_decay: f64,
    pub learning_rate: f64,
    pub discount: f64,
    /// Copy the online network into the target network every this many episodes.
    pub target_sync_every: usize,
    pub max_penalty: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_margin: f64,
    pub rng_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            epochs: 160_000,
            memory_size: 700_000,
            batch_size: 50_000,
            epsilon_initial: 1.0,
            epsilon_decay: 0.99996,
            learning_rate: 0.001,
            discount: 0.99,
            target_sync_every: 10,
            max_penalty: -1.0e5,
            soc_min: 0.20,
            soc_max: 0.90,
            soc_margin: 0.05,
            rng_seed: 42,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size > self.memory_size {
            return Err(Error::Validation(format!(
                "batch_size ({}) must not exceed memory_size ({})",
                self.batch_size, self.memory_size
            )));
        }
        if self.batch_size == 0 || self.memory_size == 0 {
            return Err(Error::Validation(
                "batch_size and memory_size must be >= 1".into(),
            ));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay < 1.0) {
            return Err(Error::Validation(format!(
                "epsilon_decay must lie in (0, 1), got {}",
                self.epsilon_decay
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon_initial) {
            return Err(Error::Validation(format!(
                "epsilon_initial must lie in [0, 1], got {}",
                self.epsilon_initial
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Validation(format!(
                "learning_rate must be a finite value >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::Validation(format!(
                "discount must lie in [0, 1], got {}",
                self.discount
            )));
        }
        if self.target_sync_every == 0 {
            return Err(Error::Validation("target_sync_every must be >= 1".into()));
        }
        if !self.max_penalty.is_finite() || self.max_penalty >= 0.0 {
            return Err(Error::Validation(format!(
                "max_penalty must be a finite value < 0, got {}",
                self.max_penalty
            )));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::Validation(format!(
                "require 0 <= soc_min < soc_max <= 1, got {} / {}",
                self.soc_min, self.soc_max
            )));
        }
        if !self.soc_margin.is_finite() || self.soc_margin < 0.0 {
            return Err(Error::Validation(format!(
                "soc_margin must be a finite value >= 0, got {}",
                self.soc_margin
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn act(station: usize, ev_id: u32, timeslot: usize, kind: OperationKind) -> Action {
        Action {
            station,
            ev_id,
            timeslot,
            kind,
        }
    }

    #[test]
    fn action_index_first_cell() {
        let a = act(0, 1, 0, OperationKind::Charge);
        assert_eq!(action_index(&a, 6, 30, 5).unwrap(), 0);
    }

    #[test]
    fn action_index_kind_bit() {
        let a = act(0, 1, 0, OperationKind::Discharge);
        assert_eq!(action_index(&a, 6, 30, 5).unwrap(), 1);
    }

    #[test]
    fn action_index_last_action() {
        // ((5*30 + 29)*5 + 4)*2 + 1 = 1799
        let a = act(5, 30, 4, OperationKind::Discharge);
        assert_eq!(action_index(&a, 6, 30, 5).unwrap(), 1799);
    }

    #[test]
    fn action_from_index_examples() {
        assert_eq!(
            action_from_index(0, 6, 30, 5).unwrap(),
            act(0, 1, 0, OperationKind::Charge)
        );
        assert_eq!(
            action_from_index(1799, 6, 30, 5).unwrap(),
            act(5, 30, 4, OperationKind::Discharge)
        );
    }

    #[test]
    fn action_from_index_one_past_end() {
        assert!(matches!(
            action_from_index(1800, 6, 30, 5),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn action_index_rejects_out_of_range_fields() {
        assert!(action_index(&act(6, 1, 0, OperationKind::Charge), 6, 30, 5).is_err());
        assert!(action_index(&act(0, 31, 0, OperationKind::Charge), 6, 30, 5).is_err());
        assert!(action_index(&act(0, 0, 0, OperationKind::Charge), 6, 30, 5).is_err());
        assert!(action_index(&act(0, 1, 5, OperationKind::Charge), 6, 30, 5).is_err());
    }

    #[test]
    fn action_space_size_matches_full_scale_configuration() {
        assert_eq!(action_space_size(6, 30, 5), 1800);
    }

    #[test]
    fn ev_validation() {
        assert!(ElectricVehicle::new(1, "Renault ZOE", 22.0, 22.0, "Type2", 0.35).is_ok());
        assert!(ElectricVehicle::new(0, "x", 22.0, 22.0, "Type2", 0.5).is_err());
        assert!(ElectricVehicle::new(1, "x", 0.0, 22.0, "Type2", 0.5).is_err());
        assert!(ElectricVehicle::new(1, "x", 22.0, -1.0, "Type2", 0.5).is_err());
        assert!(ElectricVehicle::new(1, "x", 22.0, 22.0, "Type2", 1.2).is_err());
    }

    #[test]
    fn fleet_rejects_duplicate_ids() {
        let fleet = vec![
            ElectricVehicle::new(1, "a", 1.0, 1.0, "t", 0.5).unwrap(),
            ElectricVehicle::new(1, "b", 1.0, 1.0, "t", 0.5).unwrap(),
        ];
        assert!(matches!(validate_fleet(&fleet), Err(Error::Validation(_))));
    }

    #[test]
    fn program_requires_matching_target_length() {
        let p = DrProgram {
            horizon: 3,
            slot_duration_h: 1.0,
            target_kwh: vec![1.0, 2.0],
            scenario: OperationKind::Charge,
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn hyperparams_default_is_valid() {
        Hyperparams::default().validate().unwrap();
    }

    #[test]
    fn hyperparams_rejects_batch_larger_than_memory() {
        let hp = Hyperparams {
            memory_size: 10,
            batch_size: 11,
            ..Hyperparams::default()
        };
        assert!(hp.validate().is_err());
    }

    #[test]
    fn schedule_state_cell_roundtrip() {
        let mut s = ScheduleState::empty(2, 3);
        assert!(s.is_cell_empty(1, 2));
        s.set_cell(1, 2, 7);
        assert_eq!(s.cell(1, 2), 7);
        assert!(s.contains_ev(7));
        assert_eq!(s.occupied_count(), 1);
        let placed: Vec<_> = s.assignments().collect();
        assert_eq!(
            placed,
            vec![Assignment {
                station: 1,
                timeslot: 2,
                ev_id: 7
            }]
        );
    }

    proptest! {
        #[test]
        fn action_index_roundtrips(
            n_stations in 1usize..8,
            n_evs in 1usize..12,
            horizon in 1usize..8,
            raw in 0usize..10_000,
        ) {
            let size = action_space_size(n_stations, n_evs, horizon);
            let index = raw % size;
            let a = action_from_index(index, n_stations, n_evs, horizon).unwrap();
            prop_assert!(a.station < n_stations);
            prop_assert!(a.ev_id >= 1 && a.ev_id as usize <= n_evs);
            prop_assert!(a.timeslot < horizon);
            prop_assert_eq!(action_index(&a, n_stations, n_evs, horizon).unwrap(), index);
        }
    }
}
