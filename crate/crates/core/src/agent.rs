//! The deep Q-learning agent: state encoding, epsilon-greedy selection,
//! replay memory, Bellman targets from the target network, the training
//! schedule with periodic target synchronization, and greedy rollouts.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    action_from_index, action_space_size, ChargingStation, DrProgram, ElectricVehicle,
    Hyperparams, ScheduleState,
};
use crate::env::{EnergyLedger, Env, EnvParams};
use crate::error::{Error, Result};
use crate::nn::{NetworkConfig, NetworkParams, TrainSample};

/// Epsilon never decays below this floor, preserving residual exploration.
pub const EPSILON_FLOOR: f64 = 0.01;

/// Episodes are cut off after `EPISODE_STEP_FACTOR * fleet_size` steps so a
/// policy stuck on non-terminal violations cannot loop forever.
pub const EPISODE_STEP_FACTOR: usize = 10;

/// One replay-memory record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Bounded FIFO of transitions; pushing past capacity evicts the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay memory capacity must be >= 1".into()));
        }
        Ok(ReplayMemory {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// Uniform sample without replacement, or `None` while the memory does not
    /// strictly exceed the batch size (the caller then skips training).
    pub fn sample_batch<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if self.buffer.len() <= batch_size {
            return None;
        }
        let picks = rand::seq::index::sample(rng, self.buffer.len(), batch_size);
        Some(picks.iter().map(|i| &self.buffer[i]).collect())
    }
}

/// Per-episode and per-training-step series recorded during training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub episode_rewards: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// True when the episode finished without any constraint violation.
    pub violation_free: Vec<bool>,
    pub step_losses: Vec<f64>,
    /// Training steps taken in each episode; chunks `step_losses` per episode.
    pub episode_train_steps: Vec<usize>,
}

impl TrainingHistory {
    pub fn episodes(&self) -> usize {
        self.episode_rewards.len()
    }

    /// Mean training loss per episode; NaN for episodes without updates.
    pub fn episode_mean_losses(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.episode_train_steps.len());
        let mut offset = 0;
        for &n in &self.episode_train_steps {
            if n == 0 {
                out.push(f64::NAN);
            } else {
                let sum: f64 = self.step_losses[offset..offset + n].iter().sum();
                out.push(sum / n as f64);
            }
            offset += n;
        }
        out
    }
}

/// Length of the feature vector: `N*T + 2*|EV| + T + 2`.
pub fn encoded_len(n_stations: usize, n_evs: usize, horizon: usize) -> usize {
    n_stations * horizon + 2 * n_evs + horizon + 2
}

/// Encodes a schedule state into a fixed-length feature vector in [0, 1]:
/// flattened matrix cells (id / fleet size), per-EV SoC, per-EV capacity over
/// the fleet max, remaining energy per slot over the target max, the fraction
/// of free cells, and the fraction of EVs still waiting.
pub fn encode_state(
    state: &ScheduleState,
    ledger: &EnergyLedger,
    fleet: &[ElectricVehicle],
    program: &DrProgram,
) -> Vec<f64> {
    let n_cells = state.n_stations() * state.horizon();
    let mut features = Vec::with_capacity(encoded_len(
        state.n_stations(),
        fleet.len(),
        program.horizon,
    ));
    let fleet_size = fleet.len().max(1) as f64;
    for &cell in state.cells() {
        features.push(cell as f64 / fleet_size);
    }
    for ev in fleet {
        features.push(ev.soc);
    }
    let max_capacity = fleet
        .iter()
        .map(|ev| ev.capacity_kwh)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    for ev in fleet {
        features.push(ev.capacity_kwh / max_capacity);
    }
    let max_target = program.target_kwh.iter().copied().fold(0.0f64, f64::max);
    let norm = if max_target > 0.0 { max_target } else { 1.0 };
    for &rem in &ledger.remaining_kwh {
        features.push((rem / norm).clamp(0.0, 1.0));
    }
    let free = n_cells - state.occupied_count();
    features.push(free as f64 / n_cells.max(1) as f64);
    let waiting = fleet.iter().filter(|ev| !state.contains_ev(ev.id)).count();
    features.push(waiting as f64 / fleet_size);
    features
}

/// Epsilon-greedy selection over the flat action space: uniformly random with
/// probability epsilon, otherwise the argmax of the eval-mode forward pass
/// (lowest index wins ties).
pub fn select_action<R: Rng>(
    qnet: &NetworkParams,
    features: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    let n_actions = qnet.config().output_size;
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..n_actions));
    }
    let q = qnet.forward_eval(features)?;
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Bellman targets from the target network: `reward` for terminal transitions,
/// otherwise `reward + gamma * max_a' TQ(next_state, a')`.
pub fn compute_targets(
    batch: &[&Transition],
    gamma: f64,
    tqnet: &NetworkParams,
) -> Result<Vec<f64>> {
    let mut targets = Vec::with_capacity(batch.len());
    for t in batch {
        if t.done || gamma == 0.0 {
            targets.push(t.reward);
        } else {
            let q = tqnet.forward_eval(&t.next_state)?;
            let max_q = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            targets.push(t.reward + gamma * max_q);
        }
    }
    Ok(targets)
}

/// Multiplicative decay floored at [`EPSILON_FLOOR`].
pub fn decay_epsilon(epsilon: f64, decay: f64) -> f64 {
    (epsilon * decay).max(EPSILON_FLOOR)
}

fn validate_setup(
    program: &DrProgram,
    fleet: &[ElectricVehicle],
    stations: &[ChargingStation],
    netcfg: &NetworkConfig,
) -> Result<()> {
    if fleet.is_empty() || stations.is_empty() {
        return Err(Error::Config(
            "training needs a nonempty fleet and at least one station".into(),
        ));
    }
    for (k, ev) in fleet.iter().enumerate() {
        if ev.id != k as u32 + 1 {
            return Err(Error::Config(format!(
                "fleet ids must be 1..=N in order for training; index {k} holds id {}",
                ev.id
            )));
        }
    }
    let expect_out = action_space_size(stations.len(), fleet.len(), program.horizon);
    if netcfg.output_size != expect_out {
        return Err(Error::Config(format!(
            "network output size {} does not match the action space size {expect_out}",
            netcfg.output_size
        )));
    }
    let expect_in = encoded_len(stations.len(), fleet.len(), program.horizon);
    if netcfg.input_size != expect_in {
        return Err(Error::Config(format!(
            "network input size {} does not match the feature length {expect_in}",
            netcfg.input_size
        )));
    }
    Ok(())
}

/// Runs the full training schedule: per episode, epsilon-greedy steps push
/// transitions into replay memory; once the memory strictly exceeds the batch
/// size, every environment step also performs one SGD step against targets
/// from the target network. The target network is re-synchronized every
/// `target_sync_every` episodes and epsilon decays once per episode.
/// Deterministic for a fixed `rng_seed`.
pub fn train(
    program: &DrProgram,
    fleet: &[ElectricVehicle],
    stations: &[ChargingStation],
    hp: &Hyperparams,
    netcfg: NetworkConfig,
) -> Result<(NetworkParams, TrainingHistory)> {
    hp.validate()?;
    netcfg.validate()?;
    validate_setup(program, fleet, stations, &netcfg)?;
    let env = Env::new(program, fleet, stations, EnvParams::from(hp))?;

    let mut rng = ChaCha8Rng::seed_from_u64(hp.rng_seed);
    let init_seed = rng.random::<u64>();
    let mut qnet = NetworkParams::init(netcfg, init_seed)?;
    let mut tqnet = qnet.clone();
    let mut memory = ReplayMemory::new(hp.memory_size)?;
    let mut history = TrainingHistory::default();
    let mut epsilon = hp.epsilon_initial;
    let max_steps = EPISODE_STEP_FACTOR * fleet.len();

    let n = stations.len();
    let e = fleet.len();
    let t = program.horizon;

    for episode in 0..hp.epochs {
        let (mut state, mut ledger) = env.reset();
        let mut features = encode_state(&state, &ledger, fleet, program);
        let mut episode_reward = 0.0;
        let mut violation_free = true;
        let mut train_steps = 0;

        for _ in 0..max_steps {
            let action_idx = select_action(&qnet, &features, epsilon, &mut rng)?;
            let action = action_from_index(action_idx, n, e, t)?;
            let outcome = env.step(&state, &ledger, &action)?;
            let next_features =
                encode_state(&outcome.next_state, &outcome.next_ledger, fleet, program);

            episode_reward += outcome.reward;
            if outcome.violation.is_some() {
                violation_free = false;
            }
            let done = outcome.done;
            memory.push(Transition {
                state: std::mem::take(&mut features),
                action: action_idx,
                reward: outcome.reward,
                next_state: next_features.clone(),
                done,
            });
            state = outcome.next_state;
            ledger = outcome.next_ledger;
            features = next_features;

            if let Some(batch) = memory.sample_batch(hp.batch_size, &mut rng) {
                let targets = compute_targets(&batch, hp.discount, &tqnet)?;
                let samples: Vec<TrainSample> = batch
                    .iter()
                    .zip(&targets)
                    .map(|(tr, &target)| TrainSample {
                        input: &tr.state,
                        action: tr.action,
                        target,
                    })
                    .collect();
                let loss = qnet.sgd_step(&samples, hp.learning_rate, &mut rng)?;
                history.step_losses.push(loss);
                train_steps += 1;
            }

            if done {
                break;
            }
        }

        history.episode_rewards.push(episode_reward);
        history.epsilons.push(epsilon);
        history.violation_free.push(violation_free);
        history.episode_train_steps.push(train_steps);

        if (episode + 1) % hp.target_sync_every == 0 {
            tqnet = qnet.clone();
        }
        epsilon = decay_epsilon(epsilon, hp.epsilon_decay);
    }

    Ok((qnet, history))
}

/// Result of one greedy episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub schedule: ScheduleState,
    pub ledger: EnergyLedger,
    /// Reward of the final step taken (0 when the episode had no steps).
    pub reward: f64,
    pub steps: usize,
    /// True when the liveness cap cut a looping episode short.
    pub aborted: bool,
}

/// Plays one episode with epsilon = 0. Constraint-violating argmax actions are
/// applied per the environment contract; a liveness cap of
/// `EPISODE_STEP_FACTOR * fleet_size` steps stops policies that loop on
/// non-terminal violations and returns the schedule built so far.
pub fn greedy_rollout(
    qnet: &NetworkParams,
    program: &DrProgram,
    fleet: &[ElectricVehicle],
    stations: &[ChargingStation],
    params: EnvParams,
) -> Result<Rollout> {
    let env = Env::new(program, fleet, stations, params)?;
    let expect_in = encoded_len(stations.len(), fleet.len(), program.horizon);
    let expect_out = action_space_size(stations.len(), fleet.len(), program.horizon);
    if qnet.config().input_size != expect_in || qnet.config().output_size != expect_out {
        return Err(Error::Config(format!(
            "network shape {}->{} does not fit this instance ({expect_in}->{expect_out})",
            qnet.config().input_size,
            qnet.config().output_size,
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut state, mut ledger) = env.reset();
    let max_steps = EPISODE_STEP_FACTOR * fleet.len();
    let mut reward = 0.0;
    let mut steps = 0;
    let mut aborted = false;

    while !env.episode_done(&state) {
        if steps >= max_steps {
            aborted = true;
            break;
        }
        let features = encode_state(&state, &ledger, fleet, program);
        let action_idx = select_action(qnet, &features, 0.0, &mut rng)?;
        let action = action_from_index(action_idx, stations.len(), fleet.len(), program.horizon)?;
        let outcome = env.step(&state, &ledger, &action)?;
        reward = outcome.reward;
        state = outcome.next_state;
        ledger = outcome.next_ledger;
        steps += 1;
        if outcome.done {
            break;
        }
    }

    Ok(Rollout {
        schedule: state,
        ledger,
        reward,
        steps,
        aborted,
    })
}
