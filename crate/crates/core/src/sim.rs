//! Fixed-step simulation of one scenario.
//!
//! Each step: admit ramp arrivals, take merge decisions, compute every
//! command from the frozen snapshot, integrate, execute merges, check for
//! overlaps, and sample metrics.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{following_command, idm_commands, integrate};
use crate::error::{Result, SimError};
use crate::metrics::{summarize, CarEvent, MetricsFrame, RunSummary, HARD_DECEL_THRESHOLD};
use crate::strategies::{
    assign_gap_at_decision_point, enforce_order_on_main, execute_merge, ordered_can_merge, priority_can_merge,
    proactive_command_indexed, replan_conflicts, sliding_decision_offset, GapAssignment, MergePlan, StrategyKind,
    SLIDING_GAIN,
};
use crate::traffic::{apply_sensor_noise, derive_seed, init_main_loop, ArrivalSchedule, ScenarioConfig};
use crate::world::{build_car_lists, CarId, CarLists, Road, VehicleState, World};

const ARRIVAL_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub frames: Vec<MetricsFrame>,
    pub events: Vec<CarEvent>,
    pub summary: RunSummary,
    pub initial_main: usize,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    config: ScenarioConfig,
    world: World,
    plan: MergePlan,
    arrivals: ArrivalSchedule,
    noise: ChaCha8Rng,
    queue: VecDeque<f64>,
    events: BTreeMap<CarId, CarEvent>,
    frames: Vec<MetricsFrame>,
    initial_main: usize,
    next_id: CarId,
    step: u64,
    steps_per_frame: u64,
    interval_accel: f64,
    interval_steps: u64,
    hard_decel_events: u64,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let mut world = World::new(config.network.clone());
        world.cars = init_main_loop(config.main_density, &config.network, &config.idm, config.vehicle_length)?;
        let initial_main = world.cars.len();
        let steps_per_frame = (config.sample_interval / config.dt).round().max(1.0) as u64;
        let mut sim = Self {
            arrivals: ArrivalSchedule::new(
                config.arrival_process,
                config.ramp_rate,
                derive_seed(config.seed, ARRIVAL_STREAM),
            ),
            noise: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, NOISE_STREAM)),
            next_id: world.next_id(),
            world,
            plan: MergePlan::default(),
            queue: VecDeque::new(),
            events: BTreeMap::new(),
            frames: Vec::new(),
            initial_main,
            step: 0,
            steps_per_frame,
            interval_accel: 0.0,
            interval_steps: 0,
            hard_decel_events: 0,
            config,
        };
        sim.record_frame();
        Ok(sim)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn plan(&self) -> &MergePlan {
        &self.plan
    }

    pub fn frames(&self) -> &[MetricsFrame] {
        &self.frames
    }

    pub fn queue_depth(&self) -> usize {
        self.queue.len()
    }

    pub fn merged_total(&self) -> usize {
        self.events.values().filter(|e| e.merge_t.is_some()).count()
    }

    pub fn spawned_total(&self) -> usize {
        self.events.len()
    }

    pub fn initial_main(&self) -> usize {
        self.initial_main
    }

    /// Number of whole steps covering `duration`.
    pub fn total_steps(&self) -> u64 {
        (self.config.duration / self.config.dt - 1e-9).ceil().max(0.0) as u64
    }

    pub fn run(mut self) -> Result<RunOutput> {
        for _ in 0..self.total_steps() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> RunOutput {
        let events: Vec<CarEvent> = self.events.into_values().collect();
        let summary = summarize(&self.frames, &events, self.config.sample_interval);
        RunOutput {
            frames: self.frames,
            events,
            summary,
            initial_main: self.initial_main,
        }
    }

    /// Decision point in ramp coordinates for the configured strategy, or
    /// `None` for the give-way baseline.
    fn decision_coordinate(&self) -> Option<f64> {
        let net = &self.world.network;
        match self.config.strategy {
            StrategyKind::Priority => None,
            StrategyKind::DistanceBased | StrategyKind::VelocityBased => Some(net.ramp_merge_start()),
            StrategyKind::ProactiveVelocity => {
                let offset = if self.config.sliding_decision {
                    sliding_decision_offset(
                        self.world.mean_main_velocity(),
                        net,
                        self.config.idm.time_headway,
                        SLIDING_GAIN,
                    )
                } else {
                    net.decision_offset
                };
                Some(net.decision_point(offset))
            }
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.world.time;
        self.queue.extend(self.arrivals.due(t));
        self.spawn_from_queue();
        self.take_decisions()?;
        if self.config.strategy != StrategyKind::Priority {
            replan_conflicts(&mut self.plan, &self.world, &self.config.idm, self.config.dt);
        }

        let commands = self.commands()?;
        let main_cmds: Vec<f64> = self
            .world
            .cars
            .iter()
            .zip(&commands)
            .filter(|(c, _)| c.road == Road::MainLoop)
            .map(|(_, &a)| a)
            .collect();
        self.world = integrate(&self.world, self.config.dt, &commands)?;
        // step count times dt, so sampled times carry no accumulated rounding
        self.world.time = (self.step + 1) as f64 * self.config.dt;
        self.execute_merges();

        if let Some(&(follower, leader, gap)) = self.world.overlaps().first() {
            return Err(SimError::Collision {
                follower,
                leader,
                time: self.world.time,
                gap,
            });
        }

        if !main_cmds.is_empty() {
            self.interval_accel += main_cmds.iter().map(|a| a.abs()).sum::<f64>() / main_cmds.len() as f64;
        }
        self.hard_decel_events += main_cmds.iter().filter(|&&a| a <= HARD_DECEL_THRESHOLD).count() as u64;
        self.interval_steps += 1;
        self.step += 1;
        if self.step.is_multiple_of(self.steps_per_frame) {
            self.record_frame();
        }
        Ok(())
    }

    /// Admit at most one queued arrival per step, if the entry cell is free.
    fn spawn_from_queue(&mut self) {
        let Some(&arrival) = self.queue.front() else {
            return;
        };
        let len = self.config.vehicle_length;
        let idm = &self.config.idm;
        let rearmost = self
            .world
            .cars
            .iter()
            .filter(|c| c.road == Road::Ramp)
            .min_by(|a, b| a.position.total_cmp(&b.position));
        let velocity = match rearmost {
            None => self.config.entry_velocity,
            Some(leader) => {
                let gap = leader.position - leader.length;
                if gap < len + idm.min_gap {
                    return;
                }
                // enter no faster than what still allows stopping behind the leader
                let safe = (leader.velocity.powi(2) + 2.0 * idm.max_deceleration * (gap - idm.min_gap)).sqrt();
                self.config.entry_velocity.min(safe)
            }
        };
        self.queue.pop_front();
        let id = self.next_id;
        self.next_id += 1;
        self.world
            .cars
            .push(VehicleState::new(id, Road::Ramp, 0.0, velocity, len));
        self.events.insert(
            id,
            CarEvent {
                car_id: id,
                spawn_t: arrival,
                decision_t: None,
                merge_t: None,
                entry_v: velocity,
                merge_v: None,
            },
        );
    }

    /// The world as the strategies perceive it: distances to `O` and
    /// velocities scaled by the sensor error. Ground truth is untouched.
    fn perceived(&mut self) -> World {
        let pct = self.config.sensor_noise_pct;
        if pct <= 0.0 {
            return self.world.clone();
        }
        let mut w = self.world.clone();
        let net = w.network.clone();
        for c in &mut w.cars {
            let s = net.offset_from_merge_start(c);
            if s < 0.0 {
                let d = apply_sensor_noise(-s, pct, &mut self.noise);
                c.position = match c.road {
                    Road::Ramp => (net.ramp_merge_start() - d).max(0.0),
                    Road::MainLoop => (net.merge_start - d).rem_euclid(net.loop_length),
                };
            }
            c.velocity = apply_sensor_noise(c.velocity, pct, &mut self.noise).max(0.0);
        }
        w
    }

    fn take_decisions(&mut self) -> Result<()> {
        let Some(at) = self.decision_coordinate() else {
            return Ok(());
        };
        let key = self.config.strategy.order_key().expect("ordered strategy");
        let mut due: Vec<(f64, CarId)> = self
            .world
            .cars
            .iter()
            .filter(|c| c.road == Road::Ramp && c.position >= at && !self.plan.gap_assignment.contains_key(&c.id))
            .filter(|c| self.events.get(&c.id).is_some_and(|e| e.decision_t.is_none()))
            .map(|c| (c.position, c.id))
            .collect();
        due.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (_, id) in due {
            let seen = self.perceived();
            let lists = build_car_lists(&seen, self.config.horizon);
            let assignment =
                assign_gap_at_decision_point(id, &lists, &seen, &self.plan.gap_assignment, key, &self.config.idm)?;
            self.plan.gap_assignment.insert(id, assignment);
            self.plan.out_list = committed_out_list(&lists, &self.plan.gap_assignment);
            self.plan.decided_at = self.world.time;
            if let Some(e) = self.events.get_mut(&id) {
                e.decision_t = Some(self.world.time);
            }
        }
        Ok(())
    }

    fn commands(&self) -> Result<Vec<f64>> {
        let world = &self.world;
        let idm = &self.config.idm;
        let dt = self.config.dt;
        let mut commands = idm_commands(world, idm, dt)?;
        if self.config.strategy == StrategyKind::Priority {
            return Ok(commands);
        }
        let index = world.index();
        let overrides = enforce_order_on_main(&self.plan, world, idm, dt);
        for (i, car) in world.cars.iter().enumerate() {
            match car.road {
                Road::Ramp => {
                    if let Some(a) = self.plan.gap_assignment.get(&car.id) {
                        commands[i] = proactive_command_indexed(world, &index, i, a, idm, dt)?;
                    }
                }
                Road::MainLoop => {
                    if let Some(view) = overrides.get(&car.id) {
                        let yielded = following_command(car.velocity, view, idm, dt)?;
                        commands[i] = commands[i].min(yielded);
                    }
                }
            }
        }
        Ok(commands)
    }

    fn execute_merges(&mut self) {
        let idm = self.config.idm;
        let dt = self.config.dt;
        let priority = self.config.strategy == StrategyKind::Priority;
        let mut ramp: Vec<(f64, CarId)> = self
            .world
            .cars
            .iter()
            .filter(|c| c.road == Road::Ramp && c.position >= self.world.network.ramp_merge_start())
            .map(|c| (c.position, c.id))
            .collect();
        if ramp.is_empty() {
            return;
        }
        ramp.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut index = self.world.index();
        for (_, id) in ramp {
            let merged = execute_merge(&mut self.world, id, &index, |car, gaps| {
                if priority {
                    priority_can_merge(car, gaps, &idm, dt)
                } else {
                    ordered_can_merge(car, gaps, &idm, dt)
                }
            });
            if !merged {
                continue;
            }
            index = self.world.index();
            let car = self.world.car(id).expect("merged car exists");
            let (t, v) = (self.world.time, car.velocity);
            if let Some(e) = self.events.get_mut(&id) {
                e.merge_t = Some(t);
                e.merge_v = Some(v);
            }
            let behind: Vec<CarId> = {
                let mut r: Vec<&VehicleState> = self.world.cars.iter().filter(|c| c.road == Road::Ramp).collect();
                r.sort_by(|a, b| b.position.total_cmp(&a.position));
                r.iter().map(|c| c.id).collect()
            };
            self.plan.on_merged(id, &behind);
        }
    }

    fn record_frame(&mut self) {
        let w = &self.world;
        let n_main = w.count_on(Road::MainLoop);
        let density = n_main as f64 / w.network.loop_length;
        let mean_velocity = w.mean_main_velocity();
        let mean_abs_accel = if self.interval_steps > 0 {
            self.interval_accel / self.interval_steps as f64
        } else {
            0.0
        };
        self.frames.push(MetricsFrame {
            t: w.time,
            n_main,
            n_ramp: w.count_on(Road::Ramp),
            ramp_queue: self.queue.len(),
            merged_total: self.merged_total(),
            density,
            mean_velocity,
            flow: density * mean_velocity,
            mean_abs_accel,
            hard_decel_events: self.hard_decel_events,
        });
        self.interval_accel = 0.0;
        self.interval_steps = 0;
    }
}

/// OutList consistent with the committed assignments: main cars in road
/// order, each committed ramp car right after its leader (never before an
/// earlier ramp car), undecided ramp cars last.
pub fn committed_out_list(lists: &CarLists, committed: &BTreeMap<CarId, GapAssignment>) -> Vec<CarId> {
    let mut out = lists.main_list.clone();
    let mut floor = 0;
    let mut undecided = Vec::new();
    for &r in &lists.ramp_list {
        match committed.get(&r) {
            Some(a) => {
                let after_leader = a
                    .leader
                    .and_then(|l| out.iter().position(|&c| c == l))
                    .map_or(0, |p| p + 1);
                let at = after_leader.max(floor);
                out.insert(at, r);
                floor = at + 1;
            }
            None => undecided.push(r),
        }
    }
    out.extend(undecided);
    out
}
