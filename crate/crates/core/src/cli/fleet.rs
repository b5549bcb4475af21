//! Fleet and target-profile files, the synthetic fleet generator, and the
//! documented synthetic target profile.

use std::path::Path;

use rand::Rng;

use crate::domain::{ChargingStation, DrProgram, ElectricVehicle, OperationKind};
use crate::env::{Env, EnvParams};
use crate::error::{Error, Result};

pub const FLEET_CSV_HEADER: &str = "id,model,max_power_kw,capacity_kwh,connector,soc";
pub const TARGET_CSV_HEADER: &str = "slot,target_kwh";

/// The three fleet models used throughout: (name, power kW, capacity kWh, connector).
pub const FLEET_MODELS: [(&str, f64, f64, &str); 3] = [
    ("Renault ZOE 22", 22.0, 22.0, "Type2"),
    ("Renault ZOE 41", 22.0, 41.0, "Type2"),
    ("Nissan LEAF", 7.0, 24.0, "CHAdeMO"),
];

/// Parses the fleet CSV (`id,model,max_power_kw,capacity_kwh,connector,soc`).
pub fn parse_fleet_csv(text: &str) -> Result<Vec<ElectricVehicle>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == FLEET_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse(format!(
                "fleet CSV must start with header {FLEET_CSV_HEADER:?}"
            )))
        }
    }
    let mut fleet = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::Parse(format!(
                "fleet CSV line {line_no}: expected 6 fields, found {}",
                fields.len()
            )));
        }
        let id: u32 = fields[0].parse().map_err(|_| {
            Error::Parse(format!("fleet CSV line {line_no}: bad id {:?}", fields[0]))
        })?;
        let max_power: f64 = fields[2].parse().map_err(|_| {
            Error::Parse(format!(
                "fleet CSV line {line_no}: bad max_power_kw {:?}",
                fields[2]
            ))
        })?;
        let capacity: f64 = fields[3].parse().map_err(|_| {
            Error::Parse(format!(
                "fleet CSV line {line_no}: bad capacity_kwh {:?}",
                fields[3]
            ))
        })?;
        let soc: f64 = fields[5].parse().map_err(|_| {
            Error::Parse(format!("fleet CSV line {line_no}: bad soc {:?}", fields[5]))
        })?;
        fleet.push(ElectricVehicle::new(
            id, fields[1], max_power, capacity, fields[4], soc,
        )?);
    }
    crate::domain::validate_fleet(&fleet)?;
    Ok(fleet)
}

pub fn load_fleet(path: &Path) -> Result<Vec<ElectricVehicle>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("fleet file {} not readable: {e}", path.display())))?;
    parse_fleet_csv(&text)
}

pub fn fleet_to_csv(fleet: &[ElectricVehicle]) -> String {
    let mut out = String::from(FLEET_CSV_HEADER);
    out.push('\n');
    for ev in fleet {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            ev.id, ev.model_name, ev.max_power_kw, ev.capacity_kwh, ev.connector_type, ev.soc
        ));
    }
    out
}

pub fn write_fleet_csv(path: &Path, fleet: &[ElectricVehicle]) -> Result<()> {
    std::fs::write(path, fleet_to_csv(fleet))?;
    Ok(())
}

/// Parses the target profile CSV (`slot,target_kwh`, slots in order from 0).
pub fn parse_target_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TARGET_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse(format!(
                "target profile must start with header {TARGET_CSV_HEADER:?}"
            )))
        }
    }
    let mut target = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Parse(format!(
                "target profile line {line_no}: expected 2 fields, found {}",
                fields.len()
            )));
        }
        let slot: usize = fields[0].parse().map_err(|_| {
            Error::Parse(format!(
                "target profile line {line_no}: bad slot {:?}",
                fields[0]
            ))
        })?;
        if slot != target.len() {
            return Err(Error::Parse(format!(
                "target profile line {line_no}: slots must run 0,1,2,... (found {slot})"
            )));
        }
        let kwh: f64 = fields[1].parse().map_err(|_| {
            Error::Parse(format!(
                "target profile line {line_no}: bad target_kwh {:?}",
                fields[1]
            ))
        })?;
        target.push(kwh);
    }
    Ok(target)
}

pub fn load_target_profile(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!(
            "target profile {} not readable: {e}",
            path.display()
        ))
    })?;
    parse_target_csv(&text)
}

/// Generates a fleet of the three supported models. `mix` gives the model
/// fractions (largest-remainder rounding keeps the counts exact); SoC is drawn
/// uniformly from [0.1, 0.9].
pub fn gen_fleet<R: Rng>(count: usize, mix: [f64; 3], rng: &mut R) -> Result<Vec<ElectricVehicle>> {
    if count == 0 {
        return Err(Error::Argument("fleet count must be >= 1".into()));
    }
    let sum: f64 = mix.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || mix.iter().any(|&f| f < 0.0) {
        return Err(Error::Argument(format!(
            "mix fractions must be non-negative and sum to 1, got {mix:?}"
        )));
    }
    let mut counts = [0usize; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0;
    for (i, &f) in mix.iter().enumerate() {
        let exact = f * count as f64;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((i, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..count - assigned {
        counts[remainders[k % 3].0] += 1;
    }

    let mut fleet = Vec::with_capacity(count);
    let mut id = 1u32;
    for (model_idx, &n) in counts.iter().enumerate() {
        let (name, power, capacity, connector) = FLEET_MODELS[model_idx];
        for _ in 0..n {
            let soc = rng.random_range(0.1..0.9);
            fleet.push(ElectricVehicle::new(id, name, power, capacity, connector, soc)?);
            id += 1;
        }
    }
    Ok(fleet)
}

/// Synthetic target profile: a tent-shaped piecewise-constant curve whose total
/// equals `fraction` of the fleet's deliverable energy (the sum of single-slot
/// assignment energies of all eligible EVs at the widest station).
pub fn synth_target(
    fleet: &[ElectricVehicle],
    stations: &[ChargingStation],
    scenario: OperationKind,
    slot_duration_h: f64,
    horizon: usize,
    fraction: f64,
    params: EnvParams,
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::Argument("horizon must be >= 1".into()));
    }
    if !fraction.is_finite() || fraction <= 0.0 {
        return Err(Error::Argument("target fraction must be > 0".into()));
    }
    if stations.is_empty() {
        return Err(Error::Argument("need at least one station".into()));
    }
    // probing program: the target content is irrelevant for assignment energy
    let probe = DrProgram::new(slot_duration_h, vec![0.0; horizon], scenario)?;
    let env = Env::new(&probe, fleet, stations, params)?;
    let widest = stations
        .iter()
        .max_by(|a, b| a.max_power_kw.total_cmp(&b.max_power_kw))
        .expect("nonempty stations");
    let deliverable: f64 = fleet
        .iter()
        .filter(|ev| env.eligible(ev, scenario))
        .map(|ev| env.assignment_energy(ev, widest, scenario).unwrap_or(0.0))
        .sum();
    let total = fraction * deliverable;
    let weights: Vec<f64> = (0..horizon)
        .map(|t| 1.0 + t.min(horizon - 1 - t) as f64)
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| total * w / weight_sum).collect())
}
