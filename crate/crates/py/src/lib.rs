//! Python bindings: the main domain types plus training, rollout, baseline,
//! oracle and metric entry points of the fleet scheduler.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use evsched::agent;
use evsched::domain::{self, OperationKind};
use evsched::env::{self, EnvParams};
use evsched::evaluation;
use evsched::nn::{NetworkConfig, NetworkParams};

fn to_py(err: evsched::Error) -> PyErr {
    PyValueError::new_err(format!("{err}"))
}

#[pyclass(name = "ElectricVehicle", from_py_object)]
#[derive(Clone)]
struct PyElectricVehicle {
    inner: domain::ElectricVehicle,
}

#[pymethods]
impl PyElectricVehicle {
    #[new]
    fn new(
        id: u32,
        model: &str,
        max_power_kw: f64,
        capacity_kwh: f64,
        connector: &str,
        soc: f64,
    ) -> PyResult<Self> {
        domain::ElectricVehicle::new(id, model, max_power_kw, capacity_kwh, connector, soc)
            .map(|inner| PyElectricVehicle { inner })
            .map_err(to_py)
    }

    #[getter]
    fn id(&self) -> u32 {
        self.inner.id
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.model_name.clone()
    }

    #[getter]
    fn max_power_kw(&self) -> f64 {
        self.inner.max_power_kw
    }

    #[getter]
    fn capacity_kwh(&self) -> f64 {
        self.inner.capacity_kwh
    }

    #[getter]
    fn connector(&self) -> String {
        self.inner.connector_type.clone()
    }

    #[getter]
    fn soc(&self) -> f64 {
        self.inner.soc
    }

    fn __repr__(&self) -> String {
        format!(
            "ElectricVehicle(id={}, model={:?}, max_power_kw={}, capacity_kwh={}, soc={})",
            self.inner.id, self.inner.model_name, self.inner.max_power_kw,
            self.inner.capacity_kwh, self.inner.soc
        )
    }
}

#[pyclass(name = "DrProgram", from_py_object)]
#[derive(Clone)]
struct PyDrProgram {
    inner: domain::DrProgram,
}

#[pymethods]
impl PyDrProgram {
    #[new]
    #[pyo3(signature = (scenario, target_kwh, slot_duration_h = 1.0))]
    fn new(scenario: &str, target_kwh: Vec<f64>, slot_duration_h: f64) -> PyResult<Self> {
        let kind = OperationKind::parse(scenario).map_err(to_py)?;
        domain::DrProgram::new(slot_duration_h, target_kwh, kind)
            .map(|inner| PyDrProgram { inner })
            .map_err(to_py)
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn scenario(&self) -> String {
        self.inner.scenario.to_string()
    }

    #[getter]
    fn target_kwh(&self) -> Vec<f64> {
        self.inner.target_kwh.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "DrProgram(scenario={:?}, horizon={}, target_kwh={:?})",
            self.inner.scenario.to_string(),
            self.inner.horizon,
            self.inner.target_kwh
        )
    }
}

/// One scheduling outcome: assignment rows, the per-slot energy curve and the
/// L1 distance to the target.
#[pyclass(name = "ScheduleResult")]
struct PyScheduleResult {
    #[pyo3(get)]
    assignments: Vec<(usize, usize, u32, String, f64)>,
    #[pyo3(get)]
    per_slot_kwh: Vec<f64>,
    #[pyo3(get)]
    l1_distance: f64,
}

fn stations_for(count: usize, power_kw: f64) -> PyResult<Vec<domain::ChargingStation>> {
    (0..count)
        .map(|i| domain::ChargingStation::new(i, power_kw).map_err(to_py))
        .collect()
}

fn schedule_result(
    program: &domain::DrProgram,
    fleet: &[domain::ElectricVehicle],
    stations: &[domain::ChargingStation],
    state: &domain::ScheduleState,
) -> PyResult<PyScheduleResult> {
    let env = env::Env::new(program, fleet, stations, EnvParams::default()).map_err(to_py)?;
    let ledger = env.energy_of_state(state).map_err(to_py)?;
    let mut assignments = Vec::new();
    for a in state.delivering_assignments() {
        let ev = env
            .ev_by_id(a.ev_id)
            .ok_or_else(|| PyValueError::new_err("unknown EV id in schedule"))?;
        let energy = env
            .assignment_energy(ev, &stations[a.station], program.scenario)
            .map_err(to_py)?;
        assignments.push((
            a.station,
            a.timeslot,
            a.ev_id,
            program.scenario.code().to_string(),
            energy,
        ));
    }
    assignments.sort_by_key(|r| (r.0, r.1));
    Ok(PyScheduleResult {
        assignments,
        l1_distance: ledger.l1_gap(),
        per_slot_kwh: ledger.per_slot_kwh,
    })
}

/// A trained Q-network together with the shape it was trained for.
#[pyclass(name = "Policy")]
struct PyPolicy {
    params: NetworkParams,
}

#[pymethods]
impl PyPolicy {
    /// Greedy rollout on an instance; returns a ScheduleResult.
    #[pyo3(signature = (program, fleet, n_stations, station_power_kw = 22.0))]
    fn rollout(
        &self,
        program: &PyDrProgram,
        fleet: Vec<PyElectricVehicle>,
        n_stations: usize,
        station_power_kw: f64,
    ) -> PyResult<PyScheduleResult> {
        let fleet: Vec<_> = fleet.into_iter().map(|ev| ev.inner).collect();
        let stations = stations_for(n_stations, station_power_kw)?;
        let rollout = agent::greedy_rollout(
            &self.params,
            &program.inner,
            &fleet,
            &stations,
            EnvParams::default(),
        )
        .map_err(to_py)?;
        schedule_result(&program.inner, &fleet, &stations, &rollout.schedule)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.params
            .save_to_path(std::path::Path::new(path))
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        NetworkParams::load_from_path(std::path::Path::new(path))
            .map(|params| PyPolicy { params })
            .map_err(to_py)
    }

    /// Flat copy of all weights and biases (layer by layer).
    fn weights(&self) -> Vec<f64> {
        self.params.params_flat()
    }

    fn __repr__(&self) -> String {
        let cfg = self.params.config();
        format!(
            "Policy(input={}, hidden={:?}, output={})",
            cfg.input_size, cfg.hidden, cfg.output_size
        )
    }
}

/// Generates a fleet from the three supported models; `mix` gives the model
/// fractions and SoC is drawn uniformly from [0.1, 0.9].
#[pyfunction]
#[pyo3(signature = (count, mix = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), seed = 42))]
fn gen_fleet(count: usize, mix: (f64, f64, f64), seed: u64) -> PyResult<Vec<PyElectricVehicle>> {
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    evsched::cli::gen_fleet(count, [mix.0, mix.1, mix.2], &mut rng)
        .map(|fleet| {
            fleet
                .into_iter()
                .map(|inner| PyElectricVehicle { inner })
                .collect()
        })
        .map_err(to_py)
}

/// Pearson correlation coefficient between two energy curves.
#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    evaluation::pearson(&x, &y).map_err(to_py)
}

/// Size of the flat action space: 2 * stations * EVs * timeslots.
#[pyfunction]
fn action_space_size(n_stations: usize, n_evs: usize, horizon: usize) -> usize {
    domain::action_space_size(n_stations, n_evs, horizon)
}

/// First-come-first-served schedule without coordination.
#[pyfunction]
#[pyo3(signature = (program, fleet, n_stations, station_power_kw = 22.0))]
fn baseline(
    program: &PyDrProgram,
    fleet: Vec<PyElectricVehicle>,
    n_stations: usize,
    station_power_kw: f64,
) -> PyResult<PyScheduleResult> {
    let fleet: Vec<_> = fleet.into_iter().map(|ev| ev.inner).collect();
    let stations = stations_for(n_stations, station_power_kw)?;
    let state = env::baseline_schedule(&program.inner, &fleet, &stations, EnvParams::default())
        .map_err(to_py)?;
    schedule_result(&program.inner, &fleet, &stations, &state)
}

/// Exhaustive optimum for small instances (distance-minimizing legal schedule).
#[pyfunction]
#[pyo3(signature = (program, fleet, n_stations, station_power_kw = 22.0))]
fn oracle(
    program: &PyDrProgram,
    fleet: Vec<PyElectricVehicle>,
    n_stations: usize,
    station_power_kw: f64,
) -> PyResult<PyScheduleResult> {
    let fleet: Vec<_> = fleet.into_iter().map(|ev| ev.inner).collect();
    let stations = stations_for(n_stations, station_power_kw)?;
    let result =
        evaluation::brute_force_oracle(&program.inner, &fleet, &stations, EnvParams::default())
            .map_err(to_py)?;
    schedule_result(&program.inner, &fleet, &stations, &result.schedule)
}

/// Trains a Q-network on an instance and returns the learned policy.
#[pyfunction]
#[pyo3(signature = (
    program, fleet, n_stations, station_power_kw = 22.0, epochs = 5000,
    hidden = vec![64, 32], memory_size = 5000, batch_size = 32,
    epsilon_decay = 0.999, learning_rate = 0.001, discount = 0.99,
    target_sync_every = 10, max_penalty = -1.0e5, seed = 42
))]
#[allow(clippy::too_many_arguments)]
fn train(
    program: &PyDrProgram,
    fleet: Vec<PyElectricVehicle>,
    n_stations: usize,
    station_power_kw: f64,
    epochs: usize,
    hidden: Vec<usize>,
    memory_size: usize,
    batch_size: usize,
    epsilon_decay: f64,
    learning_rate: f64,
    discount: f64,
    target_sync_every: usize,
    max_penalty: f64,
    seed: u64,
) -> PyResult<(PyPolicy, Vec<f64>)> {
    let fleet: Vec<_> = fleet.into_iter().map(|ev| ev.inner).collect();
    let stations = stations_for(n_stations, station_power_kw)?;
    let hp = domain::Hyperparams {
        epochs,
        memory_size,
        batch_size,
        epsilon_decay,
        learning_rate,
        discount,
        target_sync_every,
        max_penalty,
        rng_seed: seed,
        ..domain::Hyperparams::default()
    };
    let netcfg = NetworkConfig::plain(
        agent::encoded_len(stations.len(), fleet.len(), program.inner.horizon),
        hidden,
        domain::action_space_size(stations.len(), fleet.len(), program.inner.horizon),
    );
    let (params, history) =
        agent::train(&program.inner, &fleet, &stations, &hp, netcfg).map_err(to_py)?;
    Ok((PyPolicy { params }, history.episode_rewards))
}

#[pymodule]
fn evsched_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyElectricVehicle>()?;
    m.add_class::<PyDrProgram>()?;
    m.add_class::<PyScheduleResult>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(gen_fleet, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(action_space_size, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
