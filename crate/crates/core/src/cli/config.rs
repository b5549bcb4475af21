//! Run configuration: a sectioned key-value text format, its parser, the
//! manifest writer, and resolution into ready-to-run problem data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::encoded_len;
use crate::domain::{
    action_space_size, ChargingStation, DrProgram, ElectricVehicle, Hyperparams, OperationKind,
};
use crate::env::EnvParams;
use crate::error::{Error, Result};
use crate::nn::NetworkConfig;

use super::fleet;

/// Where the per-slot target energies come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Inline(Vec<f64>),
    File(PathBuf),
    /// Synthesize a tent-shaped profile totalling `fraction` of the fleet's
    /// deliverable energy over `horizon` slots.
    Auto { fraction: f64, horizon: usize },
}

/// Where the fleet comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FleetSpec {
    File(PathBuf),
    Generate { count: usize, mix: [f64; 3] },
}

/// Everything a run needs, as loaded from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: OperationKind,
    pub slot_duration_h: f64,
    pub target: TargetSpec,
    pub fleet: FleetSpec,
    pub station_count: usize,
    pub station_power_kw: f64,
    pub hp: Hyperparams,
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub dropout_after: Vec<usize>,
    pub out_dir: PathBuf,
    pub eval_episodes: usize,
    /// Horizon stated in the config, cross-checked against the resolved target.
    pub declared_horizon: Option<usize>,
}

/// A fully materialized run: program, fleet, stations and the network shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub program: DrProgram,
    pub fleet: Vec<ElectricVehicle>,
    pub stations: Vec<ChargingStation>,
    pub hp: Hyperparams,
    pub netcfg: NetworkConfig,
}

impl ResolvedRun {
    pub fn env_params(&self) -> EnvParams {
        EnvParams::from(&self.hp)
    }
}

type Section = BTreeMap<String, (String, usize)>;

fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            sections.entry(name.trim().to_string()).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse(format!(
                "config line {line_no}: expected `key = value`, got {line:?}"
            )));
        };
        let Some(section) = &current else {
            return Err(Error::Parse(format!(
                "config line {line_no}: key outside any [section]"
            )));
        };
        let prev = sections.get_mut(section).unwrap().insert(
            key.trim().to_string(),
            (value.trim().to_string(), line_no),
        );
        if prev.is_some() {
            return Err(Error::Parse(format!(
                "config line {line_no}: duplicate key {:?} in [{section}]",
                key.trim()
            )));
        }
    }
    Ok(sections)
}

struct SectionReader {
    name: String,
    entries: Section,
}

impl SectionReader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Parse(format!("[{}] {key}: cannot parse value {v:?}", self.name))
            }),
        }
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn parse_list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) if v.trim().is_empty() => Ok(Some(Vec::new())),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.trim().parse::<T>().map_err(|_| {
                        Error::Parse(format!(
                            "[{}] {key}: cannot parse list item {item:?}",
                            self.name
                        ))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.entries.keys().next() {
            return Err(Error::Parse(format!(
                "unknown key {key:?} in [{}]",
                self.name
            )));
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parses a config file; relative file references resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config {} not readable: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut sections = parse_sections(text)?;
        let mut reader = |name: &str| SectionReader {
            name: name.to_string(),
            entries: sections.remove(name).unwrap_or_default(),
        };

        let mut program = reader("program");
        let scenario = match program.take("scenario") {
            Some(v) => OperationKind::parse(&v)?,
            None => OperationKind::Charge,
        };
        let slot_duration_h = program.parse_or("slot_duration_h", 1.0)?;
        let horizon: Option<usize> = program.parse("horizon")?;
        let inline: Option<Vec<f64>> = program.parse_list("target")?;
        let file: Option<String> = program.take("target_file");
        let auto: Option<f64> = program.parse("target_auto")?;
        let target = match (inline, file, auto) {
            (Some(v), None, None) => {
                if let Some(h) = horizon {
                    if h != v.len() {
                        return Err(Error::Validation(format!(
                            "horizon {h} disagrees with the {}-entry inline target",
                            v.len()
                        )));
                    }
                }
                TargetSpec::Inline(v)
            }
            (None, Some(p), None) => TargetSpec::File(resolve_path(base_dir, &p)),
            (None, None, Some(fraction)) => TargetSpec::Auto {
                fraction,
                horizon: horizon.ok_or_else(|| {
                    Error::Validation("[program] target_auto requires horizon".into())
                })?,
            },
            (None, None, None) => {
                return Err(Error::Validation(
                    "[program] needs one of: target, target_file, target_auto".into(),
                ))
            }
            _ => {
                return Err(Error::Validation(
                    "[program] target, target_file and target_auto are mutually exclusive".into(),
                ))
            }
        };
        program.finish()?;

        let mut fleet_sec = reader("fleet");
        let fleet_file: Option<String> = fleet_sec.take("file");
        let generate: Option<usize> = fleet_sec.parse("generate")?;
        let mix: Option<Vec<f64>> = fleet_sec.parse_list("mix")?;
        let fleet_spec = match (fleet_file, generate) {
            (Some(p), None) => {
                if mix.is_some() {
                    return Err(Error::Validation(
                        "[fleet] mix only applies together with generate".into(),
                    ));
                }
                FleetSpec::File(resolve_path(base_dir, &p))
            }
            (None, Some(count)) => {
                let mix = match mix {
                    None => [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                    Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
                    Some(v) => {
                        return Err(Error::Validation(format!(
                            "[fleet] mix needs exactly 3 fractions, got {}",
                            v.len()
                        )))
                    }
                };
                FleetSpec::Generate { count, mix }
            }
            (None, None) => {
                return Err(Error::Validation(
                    "[fleet] needs either file or generate".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Validation(
                    "[fleet] file and generate are mutually exclusive".into(),
                ))
            }
        };
        fleet_sec.finish()?;

        let mut stations = reader("stations");
        let station_count = stations.parse_or("count", 6)?;
        let station_power_kw = stations.parse_or("max_power_kw", 22.0)?;
        stations.finish()?;

        let defaults = Hyperparams::default();
        let mut hp_sec = reader("hyperparams");
        let hp = Hyperparams {
            epochs: hp_sec.parse_or("epochs", defaults.epochs)?,
            memory_size: hp_sec.parse_or("memory_size", defaults.memory_size)?,
            batch_size: hp_sec.parse_or("batch_size", defaults.batch_size)?,
            epsilon_initial: hp_sec.parse_or("epsilon_initial", defaults.epsilon_initial)?,
            epsilon_decay: hp_sec.parse_or("epsilon_decay", defaults.epsilon_decay)?,
            learning_rate: hp_sec.parse_or("learning_rate", defaults.learning_rate)?,
            discount: hp_sec.parse_or("discount", defaults.discount)?,
            target_sync_every: hp_sec.parse_or("target_sync_every", defaults.target_sync_every)?,
            max_penalty: hp_sec.parse_or("max_penalty", defaults.max_penalty)?,
            soc_min: hp_sec.parse_or("soc_min", defaults.soc_min)?,
            soc_max: hp_sec.parse_or("soc_max", defaults.soc_max)?,
            soc_margin: hp_sec.parse_or("soc_margin", defaults.soc_margin)?,
            rng_seed: hp_sec.parse_or("seed", defaults.rng_seed)?,
        };
        hp_sec.finish()?;

        let std_net = NetworkConfig::standard(1, 1);
        let mut net = reader("network");
        let hidden = net.parse_list("hidden")?.unwrap_or(std_net.hidden);
        let dropout_rate = net.parse_or("dropout_rate", std_net.dropout_rate)?;
        let dropout_after = net
            .parse_list("dropout_after")?
            .unwrap_or(std_net.dropout_after);
        net.finish()?;

        let mut run = reader("run");
        let out_dir = resolve_path(base_dir, &run.take("out_dir").unwrap_or_else(|| "out".into()));
        let eval_episodes = run.parse_or("eval_episodes", 20)?;
        run.finish()?;

        if let Some(section) = sections.keys().next() {
            return Err(Error::Parse(format!("unknown config section [{section}]")));
        }

        let cfg = RunConfig {
            scenario,
            slot_duration_h,
            target,
            fleet: fleet_spec,
            station_count,
            station_power_kw,
            hp,
            hidden,
            dropout_rate,
            dropout_after,
            out_dir,
            eval_episodes,
            declared_horizon: horizon,
        };
        cfg.hp.validate()?;
        Ok(cfg)
    }

    /// Materializes the run: loads or generates the fleet and target, builds
    /// the stations and the network shape, and validates cross-field
    /// consistency before anything executes.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        if self.station_count == 0 {
            return Err(Error::Config("need at least one station".into()));
        }
        let stations: Vec<ChargingStation> = (0..self.station_count)
            .map(|i| ChargingStation::new(i, self.station_power_kw))
            .collect::<Result<_>>()?;

        let fleet = match &self.fleet {
            FleetSpec::File(path) => fleet::load_fleet(path)?,
            FleetSpec::Generate { count, mix } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.hp.rng_seed);
                fleet::gen_fleet(*count, *mix, &mut rng)?
            }
        };
        if fleet.is_empty() {
            return Err(Error::Config(
                "resolved fleet is empty; a run needs at least one EV".into(),
            ));
        }

        let env_params = EnvParams::from(&self.hp);
        let target = match &self.target {
            TargetSpec::Inline(v) => v.clone(),
            TargetSpec::File(path) => fleet::load_target_profile(path)?,
            TargetSpec::Auto { fraction, horizon } => fleet::synth_target(
                &fleet,
                &stations,
                self.scenario,
                self.slot_duration_h,
                *horizon,
                *fraction,
                env_params,
            )?,
        };
        let program = DrProgram::new(self.slot_duration_h, target, self.scenario)?;
        if let Some(h) = self.declared_horizon {
            if h != program.horizon {
                return Err(Error::Validation(format!(
                    "declared horizon {h} disagrees with the {}-slot target profile",
                    program.horizon
                )));
            }
        }

        let netcfg = NetworkConfig {
            input_size: encoded_len(stations.len(), fleet.len(), program.horizon),
            hidden: self.hidden.clone(),
            dropout_rate: self.dropout_rate,
            dropout_after: self.dropout_after.clone(),
            output_size: action_space_size(stations.len(), fleet.len(), program.horizon),
        };
        netcfg.validate()?;
        self.hp.validate()?;

        Ok(ResolvedRun {
            program,
            fleet,
            stations,
            hp: self.hp.clone(),
            netcfg,
        })
    }

    /// Serializes to the config format with every field materialized; parsing
    /// the result reproduces the same resolved run.
    pub fn to_manifest(&self, resolved: &ResolvedRun, fleet_file: &str) -> String {
        let mut s = String::new();
        s.push_str("# evsched run manifest (fully resolved configuration)\n");
        s.push_str("[program]\n");
        s.push_str(&format!("scenario = {}\n", self.scenario));
        s.push_str(&format!("slot_duration_h = {}\n", self.slot_duration_h));
        let target: Vec<String> = resolved
            .program
            .target_kwh
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        s.push_str(&format!("target = {}\n", target.join(",")));
        s.push_str("\n[fleet]\n");
        s.push_str(&format!("file = {fleet_file}\n"));
        s.push_str("\n[stations]\n");
        s.push_str(&format!("count = {}\n", self.station_count));
        s.push_str(&format!("max_power_kw = {}\n", self.station_power_kw));
        s.push_str("\n[hyperparams]\n");
        let hp = &self.hp;
        s.push_str(&format!("epochs = {}\n", hp.epochs));
        s.push_str(&format!("memory_size = {}\n", hp.memory_size));
        s.push_str(&format!("batch_size = {}\n", hp.batch_size));
        s.push_str(&format!("epsilon_initial = {}\n", hp.epsilon_initial));
        s.push_str(&format!("epsilon_decay = {}\n", hp.epsilon_decay));
        s.push_str(&format!("learning_rate = {}\n", hp.learning_rate));
        s.push_str(&format!("discount = {}\n", hp.discount));
        s.push_str(&format!("target_sync_every = {}\n", hp.target_sync_every));
        s.push_str(&format!("max_penalty = {}\n", hp.max_penalty));
        s.push_str(&format!("soc_min = {}\n", hp.soc_min));
        s.push_str(&format!("soc_max = {}\n", hp.soc_max));
        s.push_str(&format!("soc_margin = {}\n", hp.soc_margin));
        s.push_str(&format!("seed = {}\n", hp.rng_seed));
        s.push_str("\n[network]\n");
        let hidden: Vec<String> = self.hidden.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!("hidden = {}\n", hidden.join(",")));
        s.push_str(&format!("dropout_rate = {}\n", self.dropout_rate));
        let da: Vec<String> = self.dropout_after.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!("dropout_after = {}\n", da.join(",")));
        s.push_str("\n[run]\n");
        s.push_str(&format!("out_dir = {}\n", self.out_dir.display()));
        s.push_str(&format!("eval_episodes = {}\n", self.eval_episodes));
        s
    }
}

fn resolve_path(base: &Path, p: &str) -> PathBuf {
    let path = PathBuf::from(p);
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}
