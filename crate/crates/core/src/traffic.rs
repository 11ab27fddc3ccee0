//! Scenario construction: canonical experiment cells, initial loop
//! population, ramp arrivals and sensor noise.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::dynamics::{equilibrium_velocity, IdmParams};
use crate::error::{Result, SimError};
use crate::strategies::StrategyKind;
use crate::world::{CarId, KnowledgeHorizon, Road, RoadNetwork, VehicleState};

/// Ramp demand above this is rejected (cars per minute).
pub const MAX_RAMP_RATE: f64 = 12.0;
/// Sensor error bound (percent).
pub const MAX_SENSOR_NOISE_PCT: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrivalProcess {
    Constant,
    Poisson,
}

impl FromStr for ArrivalProcess {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" => Ok(ArrivalProcess::Constant),
            "poisson" => Ok(ArrivalProcess::Poisson),
            other => Err(SimError::InvalidScenario(format!(
                "unknown arrival process {other:?} (expected constant or poisson)"
            ))),
        }
    }
}

impl fmt::Display for ArrivalProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArrivalProcess::Constant => "constant",
            ArrivalProcess::Poisson => "poisson",
        })
    }
}

/// One experiment cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// Initial main-road density, cars/km.
    pub main_density: f64,
    /// Ramp demand, cars/minute. Zero disables the ramp.
    pub ramp_rate: f64,
    pub arrival_process: ArrivalProcess,
    pub strategy: StrategyKind,
    pub network: RoadNetwork,
    pub idm: IdmParams,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub sensor_noise_pct: f64,
    pub horizon: KnowledgeHorizon,
    pub sliding_decision: bool,
    pub vehicle_length: f64,
    /// Velocity of a car entering the ramp, m/s.
    pub entry_velocity: f64,
    /// Metrics sampling cadence, s.
    pub sample_interval: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            main_density: 10.0,
            ramp_rate: 12.0,
            arrival_process: ArrivalProcess::Constant,
            strategy: StrategyKind::Priority,
            network: RoadNetwork::with_section(10_000.0, 400.0, DEFAULT_MERGE_SECTION, DEFAULT_DECISION_OFFSET)
                .expect("default network is valid"),
            idm: IdmParams::default(),
            dt: 0.1,
            duration: 1800.0,
            seed: 1,
            sensor_noise_pct: 0.0,
            horizon: KnowledgeHorizon::default(),
            sliding_decision: false,
            vehicle_length: 5.0,
            entry_velocity: 60.0 / 3.6,
            sample_interval: 1.0,
        }
    }
}

/// Default length of the merge section `[O, E]`, meters.
pub const DEFAULT_MERGE_SECTION: f64 = 100.0;
/// Default distance from `D` to `O`, meters.
pub const DEFAULT_DECISION_OFFSET: f64 = 100.0;

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        self.network.validate()?;
        self.idm.validate()?;
        if !(self.main_density.is_finite() && self.main_density >= 0.0) {
            return bad(format!("main_density {} must be non-negative", self.main_density));
        }
        if !(self.ramp_rate.is_finite() && self.ramp_rate >= 0.0 && self.ramp_rate <= MAX_RAMP_RATE) {
            return bad(format!(
                "ramp_rate {} must be in [0, {MAX_RAMP_RATE}] cars/minute",
                self.ramp_rate
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt {} must be positive", self.dt));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad(format!("duration {} must be non-negative", self.duration));
        }
        if !(0.0..=MAX_SENSOR_NOISE_PCT).contains(&self.sensor_noise_pct) {
            return bad(format!(
                "sensor_noise_pct {} must be in [0, {MAX_SENSOR_NOISE_PCT}]",
                self.sensor_noise_pct
            ));
        }
        if self.horizon.limit == 0 || !(self.horizon.range > 0.0) {
            return bad("knowledge horizon must allow at least one car within a positive range".into());
        }
        if !(self.vehicle_length.is_finite() && self.vehicle_length > 0.0) {
            return bad(format!("vehicle_length {} must be positive", self.vehicle_length));
        }
        if !(self.entry_velocity.is_finite() && self.entry_velocity >= 0.0) {
            return bad(format!("entry velocity {} must be non-negative", self.entry_velocity));
        }
        if !(self.sample_interval.is_finite() && self.sample_interval >= self.dt) {
            return bad(format!("sample interval {} must be at least dt", self.sample_interval));
        }
        Ok(())
    }
}

/// Main-road and ramp levels of the canonical experiment matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MainLevel {
    Light,
    Medium,
    Heavy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RampLevel {
    Low,
    High,
}

impl MainLevel {
    pub const ALL: [MainLevel; 3] = [MainLevel::Light, MainLevel::Medium, MainLevel::Heavy];

    pub fn density(self) -> f64 {
        match self {
            MainLevel::Light => 5.0,
            MainLevel::Medium => 10.0,
            MainLevel::Heavy => 15.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MainLevel::Light => "light",
            MainLevel::Medium => "medium",
            MainLevel::Heavy => "heavy",
        }
    }
}

impl RampLevel {
    pub const ALL: [RampLevel; 2] = [RampLevel::Low, RampLevel::High];

    pub fn rate(self) -> f64 {
        match self {
            RampLevel::Low => 6.0,
            RampLevel::High => 12.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RampLevel::Low => "low_ramp",
            RampLevel::High => "high_ramp",
        }
    }
}

/// A named cell of the experiment matrix, e.g. `medium/high_ramp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub main: MainLevel,
    pub ramp: RampLevel,
}

impl Cell {
    pub fn all() -> impl Iterator<Item = Cell> {
        MainLevel::ALL
            .into_iter()
            .flat_map(|main| RampLevel::ALL.into_iter().map(move |ramp| Cell { main, ramp }))
    }

    pub fn name(&self) -> String {
        format!("{}/{}", self.main.name(), self.ramp.name())
    }

    pub fn config(&self, strategy: StrategyKind) -> ScenarioConfig {
        ScenarioConfig {
            main_density: self.main.density(),
            ramp_rate: self.ramp.rate(),
            strategy,
            ..ScenarioConfig::default()
        }
    }
}

impl FromStr for Cell {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let (m, r) = s
            .split_once('/')
            .ok_or_else(|| SimError::InvalidScenario(format!("cell {s:?} must look like medium/high_ramp")))?;
        let main = MainLevel::ALL
            .into_iter()
            .find(|l| l.name() == m)
            .ok_or_else(|| SimError::InvalidScenario(format!("unknown main level {m:?}")))?;
        let ramp = RampLevel::ALL
            .into_iter()
            .find(|l| l.name() == r)
            .ok_or_else(|| SimError::InvalidScenario(format!("unknown ramp level {r:?}")))?;
        Ok(Cell { main, ramp })
    }
}

/// Uniformly spaced loop population at the equilibrium velocity of its spacing.
pub fn init_main_loop(
    density: f64,
    network: &RoadNetwork,
    idm: &IdmParams,
    vehicle_length: f64,
) -> Result<Vec<VehicleState>> {
    let n = (density * network.loop_length / 1000.0).round();
    if n < 1.0 {
        return Ok(Vec::new());
    }
    let spacing = network.loop_length / n;
    let gap = spacing - vehicle_length;
    if gap < idm.min_gap {
        return Err(SimError::InfeasibleDensity { density });
    }
    let v = equilibrium_velocity(gap, idm);
    Ok((0..n as usize)
        .map(|k| {
            // half a spacing past O so no car starts exactly on the merge point
            let x = (network.merge_start + spacing * (k as f64 + 0.5)).rem_euclid(network.loop_length);
            VehicleState::new(k as CarId, Road::MainLoop, x, v, vehicle_length)
        })
        .collect())
}

/// Time to the next ramp arrival: `60/rate` for constant demand, an
/// exponential draw with that mean for Poisson demand.
pub fn next_interarrival(process: ArrivalProcess, rate_per_min: f64, rng: &mut impl Rng) -> f64 {
    assert!(rate_per_min > 0.0, "arrival rate must be positive");
    let mean = 60.0 / rate_per_min;
    match process {
        ArrivalProcess::Constant => mean,
        ArrivalProcess::Poisson => Exp::new(1.0 / mean).expect("positive rate").sample(rng),
    }
}

/// Deterministic stream of ramp arrival instants.
#[derive(Clone, Debug)]
pub struct ArrivalSchedule {
    process: ArrivalProcess,
    rate: f64,
    next_arrival_time: f64,
    rng: ChaCha8Rng,
}

impl ArrivalSchedule {
    pub fn new(process: ArrivalProcess, rate_per_min: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let next_arrival_time = if rate_per_min > 0.0 {
            next_interarrival(process, rate_per_min, &mut rng)
        } else {
            f64::INFINITY
        };
        Self {
            process,
            rate: rate_per_min,
            next_arrival_time,
            rng,
        }
    }

    pub fn next_arrival_time(&self) -> f64 {
        self.next_arrival_time
    }

    /// Pop every arrival scheduled at or before `t`, oldest first.
    pub fn due(&mut self, t: f64) -> Vec<f64> {
        let mut out = Vec::new();
        while self.next_arrival_time <= t {
            out.push(self.next_arrival_time);
            self.next_arrival_time += next_interarrival(self.process, self.rate, &mut self.rng);
        }
        out
    }
}

/// `true · (1 + u)` with `u` uniform in `[-pct/100, pct/100]`.
pub fn apply_sensor_noise(true_value: f64, pct: f64, rng: &mut impl Rng) -> f64 {
    if pct <= 0.0 {
        return true_value;
    }
    let bound = pct / 100.0;
    true_value * (1.0 + rng.random_range(-bound..=bound))
}

/// Seed of an independent stream derived from a run seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
