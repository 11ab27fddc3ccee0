//! Merging strategies: the priority (give-way) baseline and the
//! distance/velocity ordered strategies, with gap assignment at the decision
//! point, gap tracking on the ramp, order enforcement on the main road and
//! the merge manoeuvre itself.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::dynamics::{
    desired_gap, following_command, idm_acceleration, is_safe_following, leader_view_indexed, tag_collision, IdmParams,
    LeaderView,
};
use crate::error::{Result, SimError};
use crate::world::{distance_to_point, CarId, CarLists, Road, RoadIndex, RoadNetwork, VehicleState, World};

/// Velocity floor used when extrapolating arrival times.
pub const ARRIVAL_VELOCITY_FLOOR: f64 = 0.1;

/// Default gain of the sliding decision point.
pub const SLIDING_GAIN: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    /// Main road has right of way; ramp cars wait for a gap (reactive benchmark, "R").
    Priority,
    /// Closest car to the merge point goes first; decided at `O` ("D").
    DistanceBased,
    /// Earliest predicted arrival goes first; decided at `O` ("V").
    VelocityBased,
    /// Velocity-based order decided at `D`, with speed adjustment before `O` ("PV").
    ProactiveVelocity,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Priority,
        StrategyKind::DistanceBased,
        StrategyKind::VelocityBased,
        StrategyKind::ProactiveVelocity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Priority => "priority",
            StrategyKind::DistanceBased => "distance",
            StrategyKind::VelocityBased => "velocity",
            StrategyKind::ProactiveVelocity => "proactive_velocity",
        }
    }

    /// Short label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::Priority => "R",
            StrategyKind::DistanceBased => "D",
            StrategyKind::VelocityBased => "V",
            StrategyKind::ProactiveVelocity => "PV",
        }
    }

    /// Ordering key, `None` for the give-way baseline.
    pub fn order_key(self) -> Option<OrderKey> {
        match self {
            StrategyKind::Priority => None,
            StrategyKind::DistanceBased => Some(OrderKey::Distance),
            StrategyKind::VelocityBased | StrategyKind::ProactiveVelocity => Some(OrderKey::ArrivalTime),
        }
    }

    pub fn is_proactive(self) -> bool {
        self == StrategyKind::ProactiveVelocity
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "priority" | "R" => Ok(StrategyKind::Priority),
            "distance" | "D" => Ok(StrategyKind::DistanceBased),
            "velocity" | "V" => Ok(StrategyKind::VelocityBased),
            "proactive_velocity" | "PV" => Ok(StrategyKind::ProactiveVelocity),
            other => Err(SimError::InvalidScenario(format!(
                "unknown strategy {other:?} (expected priority, distance, velocity or proactive_velocity)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderKey {
    /// Along-path distance to `O`.
    Distance,
    /// Constant-velocity arrival time at `O`.
    ArrivalTime,
}

/// Where a ramp car intends to slot in: the main-road car it will follow and
/// the one that will follow it (`None` = open end).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GapAssignment {
    pub leader: Option<CarId>,
    pub follower: Option<CarId>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergePlan {
    pub out_list: Vec<CarId>,
    pub gap_assignment: BTreeMap<CarId, GapAssignment>,
    pub decided_at: f64,
}

impl MergePlan {
    /// Derive the gap of every ramp car from its neighbours in `out_list`.
    pub fn from_out_list(out_list: Vec<CarId>, lists: &CarLists, decided_at: f64) -> Self {
        let ramp: BTreeSet<CarId> = lists.ramp_list.iter().copied().collect();
        let mut gap_assignment = BTreeMap::new();
        for (i, id) in out_list.iter().enumerate() {
            if !ramp.contains(id) {
                continue;
            }
            let leader = out_list[..i].iter().rev().find(|c| !ramp.contains(c)).copied();
            let follower = out_list[i + 1..].iter().find(|c| !ramp.contains(c)).copied();
            gap_assignment.insert(*id, GapAssignment { leader, follower });
        }
        Self {
            out_list,
            gap_assignment,
            decided_at,
        }
    }

    /// A car completed its merge: ramp cars still waiting for the same gap
    /// now follow it, and it no longer needs an assignment.
    pub fn on_merged(&mut self, id: CarId, ramp_order_behind: &[CarId]) {
        if let Some(done) = self.gap_assignment.remove(&id) {
            for behind in ramp_order_behind {
                if let Some(a) = self.gap_assignment.get_mut(behind) {
                    if a.follower == done.follower {
                        a.leader = Some(id);
                    }
                }
            }
        }
    }
}

/// Whether `out_list` keeps each road's internal order (no overtaking within a lane).
pub fn preserves_road_order(out_list: &[CarId], lists: &CarLists) -> bool {
    let ramp: BTreeSet<CarId> = lists.ramp_list.iter().copied().collect();
    let main: BTreeSet<CarId> = lists.main_list.iter().copied().collect();
    let ramp_part: Vec<CarId> = out_list.iter().copied().filter(|c| ramp.contains(c)).collect();
    let main_part: Vec<CarId> = out_list.iter().copied().filter(|c| main.contains(c)).collect();
    ramp_part == lists.ramp_list
        && main_part == lists.main_list
        && out_list.len() == lists.ramp_list.len() + lists.main_list.len()
}

/// Constant-velocity time for `car` to reach `point`.
pub fn predict_arrival_time(car: &VehicleState, point: f64, network: &RoadNetwork) -> Result<f64> {
    let d = distance_to_point(car, point, network)?;
    Ok(d / car.velocity.max(ARRIVAL_VELOCITY_FLOOR))
}

fn car(world: &World, id: CarId) -> &VehicleState {
    world
        .car(id)
        .unwrap_or_else(|| panic!("car {id} listed but not in the world"))
}

fn key_of(world: &World, id: CarId, key: OrderKey) -> Result<f64> {
    let c = car(world, id);
    let o = world.network.merge_start;
    match key {
        OrderKey::Distance => distance_to_point(c, o, &world.network),
        OrderKey::ArrivalTime => predict_arrival_time(c, o, &world.network),
    }
}

/// Merge the two per-road sequences, asking `ramp_first(ramp_head, main_head)`
/// only about the current heads. Each road's order survives untouched.
fn stable_merge(
    main: &[CarId],
    ramp: &[CarId],
    mut ramp_first: impl FnMut(CarId, CarId) -> Result<bool>,
) -> Result<Vec<CarId>> {
    let mut out = Vec::with_capacity(main.len() + ramp.len());
    let (mut i, mut j) = (0, 0);
    while i < main.len() && j < ramp.len() {
        if ramp_first(ramp[j], main[i])? {
            out.push(ramp[j]);
            j += 1;
        } else {
            out.push(main[i]);
            i += 1;
        }
    }
    out.extend_from_slice(&main[i..]);
    out.extend_from_slice(&ramp[j..]);
    Ok(out)
}

fn order_by_key(lists: &CarLists, world: &World, key: OrderKey) -> Result<MergePlan> {
    let out = stable_merge(&lists.main_list, &lists.ramp_list, |r, m| {
        // strict: ties go to the main road
        Ok(key_of(world, r, key)? < key_of(world, m, key)?)
    })?;
    Ok(MergePlan::from_out_list(out, lists, world.time))
}

/// Closest car to `O` goes first.
pub fn order_distance_based(lists: &CarLists, world: &World) -> Result<MergePlan> {
    order_by_key(lists, world, OrderKey::Distance)
}

/// Earliest constant-velocity arrival at `O` goes first.
pub fn order_velocity_based(lists: &CarLists, world: &World) -> Result<MergePlan> {
    order_by_key(lists, world, OrderKey::ArrivalTime)
}

/// Give-way ordering: a ramp car only goes ahead of a main car if that car
/// could still follow it safely.
pub fn order_priority(lists: &CarLists, world: &World, params: &IdmParams, dt: f64) -> Result<MergePlan> {
    let net = &world.network;
    let out = stable_merge(&lists.main_list, &lists.ramp_list, |r, m| {
        let (r, m) = (car(world, r), car(world, m));
        let rear_gap = (net.offset_from_merge_start(r) - r.length) - net.offset_from_merge_start(m);
        Ok(is_safe_following(
            m.velocity,
            &LeaderView::new(rear_gap, m.velocity, r.velocity),
            params,
            dt,
        ))
    })?;
    Ok(MergePlan::from_out_list(out, lists, world.time))
}

/// Net gaps around the loop-projected position of a ramp car.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InsertionGaps {
    pub rear: Option<(CarId, f64, f64)>,
    pub front: Option<(CarId, f64, f64)>,
}

/// Rear and front loop neighbours of `ramp_car`'s projected position, with
/// net gaps `(id, gap, velocity)`. An overlapping neighbour yields a negative gap.
pub fn insertion_gaps(ramp_car: &VehicleState, world: &World, index: &RoadIndex) -> InsertionGaps {
    let net = &world.network;
    let x = net.project_to_loop(ramp_car.position);
    let Some((rear, front)) = index.main_neighbors_at(world, x) else {
        return InsertionGaps {
            rear: None,
            front: None,
        };
    };
    let (rear, front) = (&world.cars[rear], &world.cars[front]);
    let l = net.loop_length;
    // front bumpers partition the ring, so both arcs are in [0, l); a body
    // reaching past `x` shows up as a negative net gap
    let rear_gap = (x - rear.position).rem_euclid(l) - ramp_car.length;
    let front_gap = (front.position - x).rem_euclid(l) - front.length;
    InsertionGaps {
        rear: Some((rear.id, rear_gap, rear.velocity)),
        front: Some((front.id, front_gap, front.velocity)),
    }
}

fn front_safe(v: f64, gaps: &InsertionGaps, params: &IdmParams, dt: f64) -> bool {
    gaps.front
        .is_none_or(|(_, gap, vf)| is_safe_following(v, &LeaderView::new(gap, v, vf), params, dt))
}

fn rear_safe(v: f64, gaps: &InsertionGaps, params: &IdmParams, dt: f64) -> bool {
    gaps.rear
        .is_none_or(|(_, gap, vr)| is_safe_following(vr, &LeaderView::new(gap, vr, v), params, dt))
}

/// Give-way merge test: the front gap must cover the merging car's desired
/// gap and both neighbours must stay able to stop in time.
pub fn priority_can_merge(ramp_car: &VehicleState, gaps: &InsertionGaps, params: &IdmParams, dt: f64) -> bool {
    let v = ramp_car.velocity;
    let desired = gaps
        .front
        .is_none_or(|(_, gap, vf)| gap >= desired_gap(v, v - vf, params));
    desired && front_safe(v, gaps, params, dt) && rear_safe(v, gaps, params, dt)
}

/// Merge test for the ordered strategies: both neighbours must stay able to stop in time.
pub fn ordered_can_merge(ramp_car: &VehicleState, gaps: &InsertionGaps, params: &IdmParams, dt: f64) -> bool {
    let v = ramp_car.velocity;
    front_safe(v, gaps, params, dt) && rear_safe(v, gaps, params, dt)
}

/// Minimum width of an acceptable gap window in the units of `key`.
pub fn min_window(key: OrderKey, ramp_car: &VehicleState, params: &IdmParams) -> f64 {
    match key {
        OrderKey::ArrivalTime => params.time_headway,
        OrderKey::Distance => ramp_car.length + params.min_gap + params.time_headway * ramp_car.velocity,
    }
}

/// Pick the main-road gap for `ramp_car` when it reaches the decision point.
///
/// The known main cars and the ramp cars ahead that already hold a gap form a
/// timeline of keys (arrival times or distances at `O`). The windows between
/// consecutive entries are scanned from the last committed ramp car onward;
/// the first window wide enough that contains the car's own key, or lies
/// after it, is chosen. Past the last known car the window is open.
pub fn assign_gap_at_decision_point(
    ramp_car: CarId,
    lists: &CarLists,
    world: &World,
    committed: &BTreeMap<CarId, GapAssignment>,
    key: OrderKey,
    params: &IdmParams,
) -> Result<GapAssignment> {
    let me = car(world, ramp_car);
    let own = key_of(world, ramp_car, key)?;

    let ahead: Vec<CarId> = lists
        .ramp_list
        .iter()
        .take_while(|&&r| r != ramp_car)
        .copied()
        .filter(|r| committed.contains_key(r))
        .collect();
    let timeline = stable_merge(&lists.main_list, &ahead, |r, m| {
        Ok(key_of(world, r, key)? < key_of(world, m, key)?)
    })?;
    let keys: Vec<f64> = timeline.iter().map(|&c| key_of(world, c, key)).collect::<Result<_>>()?;
    let first_window = timeline.iter().rposition(|c| ahead.contains(c)).map_or(0, |i| i + 1);
    let is_ramp = |c: CarId| ahead.contains(&c);

    let width = min_window(key, me, params);
    for w in first_window..=timeline.len() {
        let start = (w > 0).then(|| keys[w - 1]);
        let end = keys.get(w).copied();
        let wide_enough = match (start, end) {
            (Some(s), Some(e)) => e - s >= width,
            (None, Some(e)) => e - own >= width / 2.0,
            (_, None) => true,
        };
        let not_passed = end.is_none_or(|e| own < e);
        if wide_enough && not_passed {
            let leader = (w > 0).then(|| timeline[w - 1]);
            let follower = timeline.get(w).copied();
            debug_assert!(follower.is_none_or(|f| !is_ramp(f)));
            return Ok(GapAssignment { leader, follower });
        }
    }
    unreachable!("the open window past the last known car always qualifies")
}

/// Net gap from `me` to `target` with both placed on a common axis by their
/// signed offset from `O`.
fn projected_view(me: &VehicleState, target: &VehicleState, net: &RoadNetwork) -> f64 {
    net.offset_from_merge_start(target) - target.length - net.offset_from_merge_start(me)
}

/// Gap a ramp car tracks to its assigned leader: the projected gap, or, if
/// larger, the arrival-time lead of the leader at `O` expressed at the car's
/// own speed. A faster leader that is still level with the car but will
/// reach `O` first therefore does not force it to brake.
fn tracking_gap(me: &VehicleState, leader: &VehicleState, net: &RoadNetwork) -> f64 {
    let eta = |c: &VehicleState| -net.offset_from_merge_start(c) / c.velocity.max(ARRIVAL_VELOCITY_FLOOR);
    let by_time = me.velocity.max(ARRIVAL_VELOCITY_FLOOR) * (eta(me) - eta(leader)) - leader.length;
    projected_view(me, leader, net).max(by_time)
}

/// Ramp-car command once it holds a gap: `min(a_safety, a_track)`.
///
/// `a_safety` is the car-following command against the ramp leader or the
/// virtual stop at `E`.
/// `a_track` is IDM against the assigned leader at the tracking gap (see `tracking_gap`). A
/// leader behind the car on both measures gives the full braking command.
pub fn proactive_accel_command(
    ramp_car: &VehicleState,
    assignment: &GapAssignment,
    world: &World,
    params: &IdmParams,
    dt: f64,
) -> Result<f64> {
    let index = world.index();
    let i = world
        .cars
        .iter()
        .position(|c| c.id == ramp_car.id)
        .ok_or(SimError::DuplicateId(ramp_car.id))?;
    proactive_command_indexed(world, &index, i, assignment, params, dt)
}

pub(crate) fn proactive_command_indexed(
    world: &World,
    index: &RoadIndex,
    i: usize,
    assignment: &GapAssignment,
    params: &IdmParams,
    dt: f64,
) -> Result<f64> {
    let me = &world.cars[i];
    let safety_view = leader_view_indexed(world, index, i)?;
    let safety =
        following_command(me.velocity, &safety_view, params, dt).map_err(|e| tag_collision(e, world, index, i))?;
    let Some(leader) = assignment.leader.and_then(|id| world.car(id)) else {
        return Ok(safety);
    };
    let gap = tracking_gap(me, leader, &world.network);
    let track = if gap > 0.0 {
        idm_acceleration(me.velocity, &LeaderView::new(gap, me.velocity, leader.velocity), params)?
    } else {
        -params.max_deceleration
    };
    Ok(params.clamp_command(safety.min(track)))
}

/// Leader overrides for main-road cars that must open a gap: the assigned
/// follower of a waiting ramp car treats that car's projection as a leader
/// whenever the projection is ahead of it and it can still stop behind it.
pub fn enforce_order_on_main(
    plan: &MergePlan,
    world: &World,
    params: &IdmParams,
    dt: f64,
) -> BTreeMap<CarId, LeaderView> {
    let mut overrides: BTreeMap<CarId, LeaderView> = BTreeMap::new();
    for (&ramp_id, a) in &plan.gap_assignment {
        let Some((f, view)) = yield_view(world, ramp_id, a) else {
            continue;
        };
        if !is_safe_following(f.velocity, &view, params, dt) {
            continue;
        }
        overrides
            .entry(f.id)
            .and_modify(|v| {
                if view.gap < v.gap {
                    *v = view;
                }
            })
            .or_insert(view);
    }
    overrides
}

/// The assigned follower of a ramp car and its view of the car's projection.
fn yield_view<'w>(world: &'w World, ramp_id: CarId, a: &GapAssignment) -> Option<(&'w VehicleState, LeaderView)> {
    let r = world.car(ramp_id)?;
    let f = world.car(a.follower?)?;
    if r.road != Road::Ramp || f.road != Road::MainLoop {
        return None;
    }
    let gap = projected_view(f, r, &world.network);
    Some((f, LeaderView::new(gap, f.velocity, r.velocity)))
}

/// Keep assignments realizable as the world moves on.
///
/// A ramp car that was placed behind every known main car gets the loop car
/// now behind its projection as follower. A ramp car whose follower can no
/// longer let it in (it has drawn level, or could not stop behind the
/// projection) moves one gap back: the old follower becomes the leader and
/// the loop car behind it the follower. Returns the ramp cars that moved back.
pub fn replan_conflicts(plan: &mut MergePlan, world: &World, params: &IdmParams, dt: f64) -> Vec<CarId> {
    let index = world.index();
    let net = &world.network;
    let mut moved = Vec::new();
    let ids: Vec<CarId> = plan.gap_assignment.keys().copied().collect();
    for id in ids {
        let a = plan.gap_assignment[&id];
        if let (None, Some(r)) = (a.follower, world.car(id)) {
            let x = (net.merge_start + net.offset_from_merge_start(r)).rem_euclid(net.loop_length);
            if let (Road::Ramp, Some((rear, _))) = (r.road, index.main_neighbors_at(world, x)) {
                let rear = if Some(world.cars[rear].id) == a.leader {
                    index.main_follower_of(rear)
                } else {
                    Some(rear)
                };
                let follower = rear.map(|j| world.cars[j].id).filter(|&f| Some(f) != a.leader);
                plan.gap_assignment.insert(id, GapAssignment { follower, ..a });
            }
        }
        let mut steps = 0;
        while steps < index.main.len() {
            let a = plan.gap_assignment[&id];
            let Some((f, view)) = yield_view(world, id, &a) else {
                break;
            };
            if view.gap > 0.0 && is_safe_following(f.velocity, &view, params, dt) {
                break;
            }
            let fi = world.index_of(f.id).expect("follower exists");
            let behind = index.main_follower_of(fi).map(|j| world.cars[j].id);
            plan.gap_assignment.insert(
                id,
                GapAssignment {
                    leader: Some(f.id),
                    follower: behind.filter(|&b| Some(b) != a.leader),
                },
            );
            if moved.last() != Some(&id) {
                moved.push(id);
            }
            steps += 1;
        }
    }
    moved
}

/// Move a ramp car onto the loop at its projected position, keeping its
/// velocity. Returns false (and leaves the world unchanged) unless the car is
/// inside the merge section and `accept` approves the gaps there.
pub fn execute_merge(
    world: &mut World,
    ramp_car: CarId,
    index: &RoadIndex,
    accept: impl Fn(&VehicleState, &InsertionGaps) -> bool,
) -> bool {
    let Some(i) = world.index_of(ramp_car) else {
        return false;
    };
    let net = world.network.clone();
    let car = &world.cars[i];
    if car.road != Road::Ramp || car.position < net.ramp_merge_start() {
        return false;
    }
    let gaps = insertion_gaps(car, world, index);
    if !accept(car, &gaps) {
        return false;
    }
    let t = world.time;
    let car = &mut world.cars[i];
    car.road = Road::MainLoop;
    car.position = net.project_to_loop(car.position);
    car.merged_at = Some(t);
    true
}

/// Sliding decision point: `k · v̄ · T`, capped at the ramp length before `O`.
pub fn sliding_decision_offset(mean_main_velocity: f64, network: &RoadNetwork, time_headway: f64, gain: f64) -> f64 {
    (gain * mean_main_velocity.max(0.0) * time_headway).clamp(0.0, network.ramp_merge_start())
}
