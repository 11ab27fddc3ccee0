//! Invariant suites behind `rampsim validate`.

use std::collections::BTreeSet;
use std::fmt;

use rampsim_core::dynamics::following_command;
use rampsim_core::{
    build_car_lists, init_main_loop, net_gap, order_velocity_based, step_world, IdmParams, KnowledgeHorizon,
    LeaderView, Road, RoadNetwork, ScenarioConfig, Simulation, VehicleState, World,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{write_events, write_frames, write_summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Equilibrium,
    RingPartition,
    Determinism,
    Conservation,
    OracleEquivalence,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Equilibrium,
        Suite::RingPartition,
        Suite::Determinism,
        Suite::Conservation,
        Suite::OracleEquivalence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Equilibrium => "equilibrium",
            Suite::RingPartition => "ring-partition",
            Suite::Determinism => "determinism",
            Suite::Conservation => "conservation",
            Suite::OracleEquivalence => "oracle-equivalence",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.suite, self.detail)
    }
}

/// Run every suite against `config`.
pub fn validate(config: &ScenarioConfig) -> Vec<SuiteReport> {
    Suite::ALL.into_iter().map(|s| run_suite(s, config)).collect()
}

pub fn all_passed(reports: &[SuiteReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

pub fn run_suite(suite: Suite, config: &ScenarioConfig) -> SuiteReport {
    let result = match suite {
        Suite::Equilibrium => equilibrium(config),
        Suite::RingPartition => ring_partition(config),
        Suite::Determinism => determinism(config),
        Suite::Conservation => conservation(config),
        Suite::OracleEquivalence => {
            let n = ORACLE_INSTANCES;
            match velocity_oracle_mismatches(config.seed, n) {
                0 => Ok(format!("{n} random instances match the crossing-time oracle")),
                m => Err(format!("{m} of {n} instances differ from the crossing-time oracle")),
            }
        }
    };
    let (passed, detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    SuiteReport { suite, passed, detail }
}

pub const ORACLE_INSTANCES: usize = 1000;

/// Free-road run of one car from rest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeRoadRun {
    pub max_velocity: f64,
    pub final_velocity: f64,
}

impl FreeRoadRun {
    pub fn overshoots(&self, params: &IdmParams) -> bool {
        self.max_velocity > params.desired_velocity
    }

    pub fn relative_error(&self, params: &IdmParams) -> f64 {
        (self.final_velocity - params.desired_velocity).abs() / params.desired_velocity
    }
}

/// Accelerate a lone car from rest with no leader for `duration` seconds.
pub fn free_road_run(params: &IdmParams, dt: f64, duration: f64) -> FreeRoadRun {
    let free = |v: f64| LeaderView::new(f64::INFINITY, v, v);
    let mut v: f64 = 0.0;
    let mut max_velocity: f64 = 0.0;
    for _ in 0..(duration / dt).ceil() as u64 {
        let a = following_command(v, &free(v), params, dt).expect("free road has no collision");
        v = (v + a * dt).max(0.0);
        max_velocity = max_velocity.max(v);
    }
    FreeRoadRun {
        max_velocity,
        final_velocity: v,
    }
}

/// Largest |command| seen while a uniform ring platoon runs for `duration` seconds.
pub fn ring_platoon_max_accel(
    density: f64,
    network: &RoadNetwork,
    params: &IdmParams,
    vehicle_length: f64,
    dt: f64,
    duration: f64,
) -> rampsim_core::Result<f64> {
    let mut world = World::new(network.clone());
    world.cars = init_main_loop(density, network, params, vehicle_length)?;
    let mut worst: f64 = 0.0;
    let none = Default::default();
    for _ in 0..(duration / dt).round() as u64 {
        world = step_world(&world, dt, &none, params)?;
        worst = world.cars.iter().map(|c| c.acceleration.abs()).fold(worst, f64::max);
    }
    Ok(worst)
}

/// Whether the IDM command never decreases as the gap grows, over a grid of
/// `points` gaps for several speeds and closing speeds.
pub fn idm_monotone_in_gap(params: &IdmParams, points: usize) -> bool {
    let gaps: Vec<f64> = (0..points)
        .map(|k| 0.5 + 499.5 * k as f64 / (points - 1) as f64)
        .collect();
    [0.0, 10.0, 20.0, params.desired_velocity].iter().all(|&v| {
        [-5.0, 0.0, 5.0].iter().all(|&dv| {
            let accel = |s: f64| {
                rampsim_core::idm_acceleration(v, &LeaderView::new(s, v, v - dv), params).expect("positive gap")
            };
            gaps.windows(2).all(|w| accel(w[1]) >= accel(w[0]))
        })
    })
}

fn equilibrium(config: &ScenarioConfig) -> Result<String, String> {
    let p = &config.idm;
    let free = free_road_run(p, config.dt, 600.0);
    if free.overshoots(p) {
        return Err(format!(
            "free car from rest overshoots v0: {} > {} m/s at dt = {} s",
            free.max_velocity, p.desired_velocity, config.dt
        ));
    }
    if free.relative_error(p) > 1e-3 {
        return Err(format!(
            "free car ends at {} m/s, more than 0.1% from v0 = {}",
            free.final_velocity, p.desired_velocity
        ));
    }
    let worst = ring_platoon_max_accel(
        config.main_density,
        &config.network,
        p,
        config.vehicle_length,
        config.dt,
        60.0,
    )
    .map_err(|e| format!("ring platoon: {e}"))?;
    if worst >= 1e-6 {
        return Err(format!("ring platoon drifts: max |a| = {worst} m/s² over 60 s"));
    }
    Ok(format!(
        "free car converges to {:.6} m/s without overshoot; ring platoon max |a| = {worst:e}",
        free.final_velocity
    ))
}

/// Check that the loop is exactly partitioned into car bodies and net gaps,
/// and that every car sits on its own road inside that road's bounds.
pub fn check_partition(world: &World) -> Result<(), String> {
    let net = &world.network;
    let mut ids = BTreeSet::new();
    for c in &world.cars {
        if !ids.insert(c.id) {
            return Err(format!("car {} appears twice", c.id));
        }
        let ok = match c.road {
            Road::MainLoop => (0.0..net.loop_length).contains(&c.position),
            Road::Ramp => (0.0..=net.ramp_length).contains(&c.position),
        };
        if !ok {
            return Err(format!("car {} at {} is outside {:?}", c.id, c.position, c.road));
        }
    }
    let mut main: Vec<&VehicleState> = world.cars.iter().filter(|c| c.road == Road::MainLoop).collect();
    if main.len() < 2 {
        return Ok(());
    }
    main.sort_by(|a, b| a.position.total_cmp(&b.position));
    let mut covered = 0.0;
    for (k, follower) in main.iter().enumerate() {
        let leader = main[(k + 1) % main.len()];
        let gap = net_gap(follower, leader, net).map_err(|e| e.to_string())?;
        if !(gap > 0.0) {
            return Err(format!("cars {} and {} overlap (gap {gap})", follower.id, leader.id));
        }
        covered += gap + leader.length;
    }
    let err = (covered - net.loop_length).abs();
    if err > 1e-6 * net.loop_length {
        return Err(format!(
            "gaps and bodies cover {covered} m of a {} m loop",
            net.loop_length
        ));
    }
    Ok(())
}

fn ring_partition(config: &ScenarioConfig) -> Result<String, String> {
    let mut sim = Simulation::new(config.clone()).map_err(|e| e.to_string())?;
    let steps = sim.total_steps();
    check_partition(sim.world()).map_err(|e| format!("t = 0: {e}"))?;
    for _ in 0..steps {
        sim.step().map_err(|e| e.to_string())?;
        check_partition(sim.world()).map_err(|e| format!("t = {}: {e}", sim.world().time))?;
    }
    Ok(format!("loop partitioned into bodies and gaps at all {steps} steps"))
}

/// frames, events and summary CSV bytes of one run.
pub fn run_csv_bytes(config: &ScenarioConfig) -> Result<[Vec<u8>; 3], String> {
    let out = Simulation::new(config.clone())
        .and_then(Simulation::run)
        .map_err(|e| e.to_string())?;
    let mut bufs = [Vec::new(), Vec::new(), Vec::new()];
    write_frames(&mut bufs[0], &out.frames).map_err(|e| e.to_string())?;
    write_events(&mut bufs[1], &out.events).map_err(|e| e.to_string())?;
    write_summary(&mut bufs[2], &out.summary).map_err(|e| e.to_string())?;
    Ok(bufs)
}

fn determinism(config: &ScenarioConfig) -> Result<String, String> {
    let a = run_csv_bytes(config)?;
    let b = run_csv_bytes(config)?;
    for (name, (x, y)) in ["frames", "events", "summary"].iter().zip(a.iter().zip(&b)) {
        if x != y {
            return Err(format!("{name} CSV differs between two runs with seed {}", config.seed));
        }
    }
    let bytes: usize = a.iter().map(Vec::len).sum();
    Ok(format!(
        "two runs with seed {} wrote identical CSVs ({bytes} bytes)",
        config.seed
    ))
}

/// Step a simulation, checking car-count conservation after every step and
/// the frame identities at the end. Returns the number of steps checked.
pub fn check_conservation(config: &ScenarioConfig) -> Result<u64, String> {
    let mut sim = Simulation::new(config.clone()).map_err(|e| e.to_string())?;
    let steps = sim.total_steps();
    let initial = sim.initial_main();
    let mut admitted = 0;
    for _ in 0..steps {
        sim.step().map_err(|e| e.to_string())?;
        let w = sim.world();
        let (n_main, n_ramp) = (w.count_on(Road::MainLoop), w.count_on(Road::Ramp));
        let (merged, spawned) = (sim.merged_total(), sim.spawned_total());
        if n_main != initial + merged || n_ramp + merged != spawned {
            return Err(format!(
                "t = {}: {n_main} on the loop and {n_ramp} on the ramp after {spawned} spawned and {merged} merged from {initial}",
                w.time
            ));
        }
        let total = spawned + sim.queue_depth();
        if total < admitted {
            return Err(format!("t = {}: arrivals went backwards", w.time));
        }
        admitted = total;
    }
    let mut last_merged = 0;
    for f in sim.frames() {
        if f.flow != f.density * f.mean_velocity {
            return Err(format!("t = {}: flow {} != density × velocity", f.t, f.flow));
        }
        if f.merged_total < last_merged {
            return Err(format!("t = {}: merged_total decreased", f.t));
        }
        last_merged = f.merged_total;
    }
    Ok(steps)
}

fn conservation(config: &ScenarioConfig) -> Result<String, String> {
    let steps = check_conservation(config)?;
    Ok(format!(
        "car counts conserved over {steps} steps; flow identity exact on every frame"
    ))
}

/// A random scene of at most five cars, each road's cars in nondecreasing
/// constant-velocity arrival order at `O`.
pub fn random_ordering_instance(rng: &mut impl Rng, network: &RoadNetwork) -> World {
    let n = rng.random_range(1..=5);
    let n_ramp = rng.random_range(0..=n);
    let mut world = World::new(network.clone());
    let mut id = 0;
    for (road, count) in [(Road::Ramp, n_ramp), (Road::MainLoop, n - n_ramp)] {
        let reach = match road {
            Road::Ramp => network.ramp_merge_start(),
            Road::MainLoop => 400.0,
        };
        let mut dists: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..reach)).collect();
        let mut times: Vec<f64> = (0..count).map(|_| rng.random_range(0.5..40.0)).collect();
        dists.sort_by(f64::total_cmp);
        times.sort_by(f64::total_cmp);
        for (d, t) in dists.into_iter().zip(times) {
            let position = match road {
                Road::Ramp => network.ramp_merge_start() - d,
                Road::MainLoop => (network.merge_start - d).rem_euclid(network.loop_length),
            };
            world.cars.push(VehicleState::new(id, road, position, d / t, 0.0));
            id += 1;
        }
    }
    world
}

/// Brute force: the unique order of all cars that keeps each road's order
/// and visits `O` in nondecreasing arrival time, ties to the main road.
pub fn crossing_time_oracle(world: &World) -> Vec<u32> {
    let net = &world.network;
    let time = |c: &VehicleState| {
        let d = match c.road {
            Road::Ramp => net.ramp_merge_start() - c.position,
            Road::MainLoop => (net.merge_start - c.position).rem_euclid(net.loop_length),
        };
        (d / c.velocity.max(0.1), c.road == Road::Ramp)
    };
    let road_rank = |road: Road| {
        let mut cars: Vec<&VehicleState> = world.cars.iter().filter(|c| c.road == road).collect();
        cars.sort_by(|a, b| time(a).0.total_cmp(&time(b).0).then(a.id.cmp(&b.id)));
        cars.iter().map(|c| c.id).collect::<Vec<_>>()
    };
    let (ramp, main) = (road_rank(Road::Ramp), road_rank(Road::MainLoop));
    let mut best: Option<Vec<u32>> = None;
    for perm in permutations(world.cars.iter().map(|c| c.id).collect()) {
        let keeps = |road: &[u32]| {
            perm.iter()
                .filter(|id| road.contains(id))
                .copied()
                .eq(road.iter().copied())
        };
        let sorted = perm.windows(2).all(|w| {
            let (a, b) = (time(world.car(w[0]).unwrap()), time(world.car(w[1]).unwrap()));
            a.0 < b.0 || (a.0 == b.0 && a.1 <= b.1)
        });
        if keeps(&ramp) && keeps(&main) && sorted {
            assert!(best.is_none(), "oracle order is not unique");
            best = Some(perm);
        }
    }
    best.expect("each road already in arrival order")
}

fn permutations(items: Vec<u32>) -> Vec<Vec<u32>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.clone();
        let head = rest.remove(i);
        for mut tail in permutations(rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Number of `n` random instances where velocity-based ordering disagrees with the oracle.
pub fn velocity_oracle_mismatches(seed: u64, n: usize) -> usize {
    let network = RoadNetwork::with_section(10_000.0, 400.0, 100.0, 100.0).expect("valid network");
    let horizon = KnowledgeHorizon {
        limit: 5,
        range: network.loop_length,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .filter(|_| {
            let world = random_ordering_instance(&mut rng, &network);
            let lists = build_car_lists(&world, horizon);
            let plan = order_velocity_based(&lists, &world).expect("instance is well formed");
            plan.out_list != crossing_time_oracle(&world)
        })
        .count()
}
