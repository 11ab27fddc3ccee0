//! Road geometry, vehicle storage and the car lists consumed by the merging
//! strategies.
//!
//! Coordinates: every car stores the position of its *front bumper* along its
//! own road. Loop positions live in `[0, loop_length)`. Ramp positions run from
//! the ramp entry (0) to the end of the merge section `E` (`ramp_length`). The
//! two coordinate systems are joined at the merge start `O`: the ramp
//! coordinate of `O` is `ramp_length - merge_length`.

use std::cmp::Ordering;

use crate::error::{Result, SimError};

pub type CarId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Road {
    MainLoop,
    Ramp,
}

/// Kinematic state of one car.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub id: CarId,
    pub road: Road,
    /// Front bumper position along `road`, meters.
    pub position: f64,
    pub velocity: f64,
    /// Last commanded acceleration.
    pub acceleration: f64,
    pub length: f64,
    /// Simulation time at which the car completed its merge, if it came from the ramp.
    pub merged_at: Option<f64>,
}

impl VehicleState {
    pub fn new(id: CarId, road: Road, position: f64, velocity: f64, length: f64) -> Self {
        Self {
            id,
            road,
            position,
            velocity,
            acceleration: 0.0,
            length,
            merged_at: None,
        }
    }
}

/// Closed main loop plus one on-ramp.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    pub loop_length: f64,
    pub ramp_length: f64,
    /// Loop position of the merge start `O`.
    pub merge_start: f64,
    /// Loop position of the merge end `E`.
    pub merge_end: f64,
    /// Distance from the decision point `D` up to `O`, measured along the ramp.
    pub decision_offset: f64,
}

impl RoadNetwork {
    pub fn new(
        loop_length: f64,
        ramp_length: f64,
        merge_start: f64,
        merge_end: f64,
        decision_offset: f64,
    ) -> Result<Self> {
        let net = Self {
            loop_length,
            ramp_length,
            merge_start,
            merge_end,
            decision_offset,
        };
        net.validate()?;
        Ok(net)
    }

    /// Network with `O` at loop position 0 and a merge section of `merge_length`.
    pub fn with_section(loop_length: f64, ramp_length: f64, merge_length: f64, decision_offset: f64) -> Result<Self> {
        if !(loop_length.is_finite() && loop_length > 0.0) {
            return Err(SimError::InvalidNetwork(format!(
                "loop_length {loop_length} must be positive"
            )));
        }
        Self::new(
            loop_length,
            ramp_length,
            0.0,
            merge_length.rem_euclid(loop_length),
            decision_offset,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SimError::InvalidNetwork(msg));
        for (name, v) in [
            ("loop_length", self.loop_length),
            ("ramp_length", self.ramp_length),
            ("merge_start", self.merge_start),
            ("merge_end", self.merge_end),
            ("decision_offset", self.decision_offset),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} is not finite"));
            }
        }
        if self.loop_length <= 0.0 {
            return bad(format!("loop_length {} must be positive", self.loop_length));
        }
        if self.ramp_length <= 0.0 {
            return bad(format!("ramp_length {} must be positive", self.ramp_length));
        }
        if !(0.0..self.loop_length).contains(&self.merge_start) || !(0.0..self.loop_length).contains(&self.merge_end) {
            return bad("merge points must lie on the loop".into());
        }
        let section = self.merge_length();
        if section <= 0.0 || section > self.ramp_length {
            return bad(format!(
                "merge section length {section} must be in (0, ramp_length = {}]",
                self.ramp_length
            ));
        }
        if self.decision_offset < 0.0 || self.decision_offset > self.ramp_merge_start() {
            return bad(format!(
                "decision offset {} must be in [0, {}] so that D lies between the ramp entry and O",
                self.decision_offset,
                self.ramp_merge_start()
            ));
        }
        Ok(())
    }

    /// Length of the merge section `[O, E]`.
    pub fn merge_length(&self) -> f64 {
        (self.merge_end - self.merge_start).rem_euclid(self.loop_length)
    }

    /// Ramp coordinate of `O`.
    pub fn ramp_merge_start(&self) -> f64 {
        self.ramp_length - self.merge_length()
    }

    /// Ramp coordinate of the decision point `D` for a given offset.
    pub fn decision_point(&self, offset: f64) -> f64 {
        (self.ramp_merge_start() - offset).max(0.0)
    }

    /// Signed along-path coordinate of a car's front bumper relative to `O`.
    ///
    /// Negative upstream of `O`, positive past it. Loop cars map into
    /// `(-loop_length/2, loop_length/2]`.
    pub fn offset_from_merge_start(&self, car: &VehicleState) -> f64 {
        match car.road {
            Road::Ramp => car.position - self.ramp_merge_start(),
            Road::MainLoop => {
                let d = wrap(car.position - self.merge_start, self.loop_length);
                if d > self.loop_length / 2.0 {
                    d - self.loop_length
                } else {
                    d
                }
            }
        }
    }

    /// Whether a loop position lies inside the merge section `[O, E]`.
    pub fn in_merge_section(&self, loop_position: f64) -> bool {
        wrap(loop_position - self.merge_start, self.loop_length) <= self.merge_length()
    }

    /// Loop position that a ramp car at `ramp_position` projects onto.
    pub fn project_to_loop(&self, ramp_position: f64) -> f64 {
        wrap(
            self.merge_start + (ramp_position - self.ramp_merge_start()),
            self.loop_length,
        )
    }
}

fn wrap(x: f64, loop_length: f64) -> f64 {
    let r = x.rem_euclid(loop_length);
    // rem_euclid of a tiny negative value can round up to loop_length itself
    if r >= loop_length {
        0.0
    } else {
        r
    }
}

/// Wrap a coordinate onto the loop, `[0, loop_length)`.
pub fn wrap_position(x: f64, loop_length: f64) -> Result<f64> {
    if !x.is_finite() || !loop_length.is_finite() {
        return Err(SimError::NonFinite("position"));
    }
    if loop_length <= 0.0 {
        return Err(SimError::InvalidNetwork(format!(
            "loop_length {loop_length} must be positive"
        )));
    }
    Ok(wrap(x, loop_length))
}

/// Bumper-to-bumper distance from `follower`'s front to `leader`'s rear.
///
/// A loop car may be passed as its own leader (sole car on the ring); two
/// *different* states carrying the same id are rejected.
pub fn net_gap(follower: &VehicleState, leader: &VehicleState, network: &RoadNetwork) -> Result<f64> {
    if follower.road != leader.road {
        return Err(SimError::RoadMismatch {
            follower: follower.id,
            leader: leader.id,
        });
    }
    if follower.id == leader.id {
        if follower == leader && follower.road == Road::MainLoop {
            return Ok(network.loop_length - follower.length);
        }
        return Err(SimError::DuplicateId(follower.id));
    }
    Ok(match follower.road {
        Road::MainLoop => wrap(leader.position - follower.position, network.loop_length) - leader.length,
        Road::Ramp => leader.position - leader.length - follower.position,
    })
}

/// Along-path distance from the car to a loop `point`.
///
/// Ramp cars can only reach points inside the merge section. A loop car
/// already inside the merge section at or past `point` is at distance 0.
pub fn distance_to_point(car: &VehicleState, point: f64, network: &RoadNetwork) -> Result<f64> {
    if !point.is_finite() || !car.position.is_finite() {
        return Err(SimError::NonFinite("position"));
    }
    let point = wrap(point, network.loop_length);
    if !network.in_merge_section(point) && car.road == Road::Ramp {
        return Err(SimError::Unreachable { car: car.id, point });
    }
    Ok(match car.road {
        Road::Ramp => {
            let ramp_point = network.ramp_merge_start() + wrap(point - network.merge_start, network.loop_length);
            (ramp_point - car.position).max(0.0)
        }
        Road::MainLoop => {
            if network.in_merge_section(point) {
                let past_point = wrap(car.position - point, network.loop_length);
                let point_to_end = wrap(network.merge_end - point, network.loop_length);
                if past_point <= point_to_end {
                    return Ok(0.0);
                }
            }
            wrap(point - car.position, network.loop_length)
        }
    })
}

/// How far a car's sensors and radio reach.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnowledgeHorizon {
    /// Maximum number of main-road cars known.
    pub limit: usize,
    /// Maximum distance to `O` of a known main-road car.
    pub range: f64,
}

impl Default for KnowledgeHorizon {
    fn default() -> Self {
        Self { limit: 8, range: 400.0 }
    }
}

/// RampList / MainList / OutList. Each list is front-most first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CarLists {
    pub ramp_list: Vec<CarId>,
    pub main_list: Vec<CarId>,
    pub out_list: Vec<CarId>,
}

/// All cars plus the clock.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub network: RoadNetwork,
    pub cars: Vec<VehicleState>,
    pub time: f64,
}

impl World {
    pub fn new(network: RoadNetwork) -> Self {
        Self {
            network,
            cars: Vec::new(),
            time: 0.0,
        }
    }

    pub fn car(&self, id: CarId) -> Option<&VehicleState> {
        self.cars.iter().find(|c| c.id == id)
    }

    pub fn index_of(&self, id: CarId) -> Option<usize> {
        self.cars.iter().position(|c| c.id == id)
    }

    pub fn count_on(&self, road: Road) -> usize {
        self.cars.iter().filter(|c| c.road == road).count()
    }

    pub fn next_id(&self) -> CarId {
        self.cars.iter().map(|c| c.id + 1).max().unwrap_or(0)
    }

    /// Space-mean velocity of the loop cars, 0 on an empty loop.
    pub fn mean_main_velocity(&self) -> f64 {
        let (sum, n) = self
            .cars
            .iter()
            .filter(|c| c.road == Road::MainLoop)
            .fold((0.0, 0usize), |(s, n), c| (s + c.velocity, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn index(&self) -> RoadIndex {
        RoadIndex::build(self)
    }

    /// Every (follower, leader, gap) of consecutive same-road cars whose net gap is not positive.
    pub fn overlaps(&self) -> Vec<(CarId, CarId, f64)> {
        let idx = self.index();
        let mut bad = Vec::new();
        let check = |order: &[usize], wraps: bool, bad: &mut Vec<(CarId, CarId, f64)>| {
            let n = order.len();
            let pairs = if wraps { n } else { n.saturating_sub(1) };
            if wraps && n < 2 {
                return;
            }
            for i in 0..pairs {
                let f = &self.cars[order[i]];
                let l = &self.cars[order[(i + 1) % n]];
                let gap = net_gap(f, l, &self.network).unwrap_or(f64::NEG_INFINITY);
                if !(gap > 0.0) {
                    bad.push((f.id, l.id, gap));
                }
            }
        };
        check(&idx.main, true, &mut bad);
        check(&idx.ramp, false, &mut bad);
        bad
    }
}

fn by_position(cars: &[VehicleState]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        cars[a]
            .position
            .total_cmp(&cars[b].position)
            .then(cars[a].id.cmp(&cars[b].id))
    }
}

/// Per-road ordering of a world snapshot, upstream first.
#[derive(Clone, Debug)]
pub struct RoadIndex {
    /// Indices into `World::cars` of loop cars, ascending position.
    pub main: Vec<usize>,
    /// Indices of ramp cars, ascending position.
    pub ramp: Vec<usize>,
    /// For each car, its rank within its road's ordering.
    rank: Vec<usize>,
}

impl RoadIndex {
    pub fn build(world: &World) -> Self {
        let mut main = Vec::new();
        let mut ramp = Vec::new();
        for (i, c) in world.cars.iter().enumerate() {
            match c.road {
                Road::MainLoop => main.push(i),
                Road::Ramp => ramp.push(i),
            }
        }
        main.sort_by(by_position(&world.cars));
        ramp.sort_by(by_position(&world.cars));
        let mut rank = vec![0; world.cars.len()];
        for (r, &i) in main.iter().enumerate() {
            rank[i] = r;
        }
        for (r, &i) in ramp.iter().enumerate() {
            rank[i] = r;
        }
        Self { main, ramp, rank }
    }

    /// Index of the next car ahead on the same road. On the loop this wraps
    /// and a sole car is its own leader; on the ramp the front-most car has none.
    pub fn leader_of(&self, world: &World, car: usize) -> Option<usize> {
        let r = self.rank[car];
        match world.cars[car].road {
            Road::MainLoop => Some(self.main[(r + 1) % self.main.len()]),
            Road::Ramp => self.ramp.get(r + 1).copied(),
        }
    }

    /// Index of the next loop car behind a loop car; `None` for a sole car.
    pub fn main_follower_of(&self, car: usize) -> Option<usize> {
        let n = self.main.len();
        (n > 1).then(|| self.main[(self.rank[car] + n - 1) % n])
    }

    /// Loop cars immediately behind and ahead of a loop position (the rear
    /// and front neighbours of an insertion there).
    pub fn main_neighbors_at(&self, world: &World, loop_position: f64) -> Option<(usize, usize)> {
        if self.main.is_empty() {
            return None;
        }
        let split = self.main.partition_point(|&i| world.cars[i].position <= loop_position);
        let n = self.main.len();
        let rear = self.main[(split + n - 1) % n];
        let front = self.main[split % n];
        Some((rear, front))
    }
}

/// Snapshot the ramp list and the known part of the main list.
///
/// `ramp_list`: unmerged ramp cars, front-most first. `main_list`: loop cars
/// upstream of `O` (or inside the merge section) within `horizon`, nearest to
/// `O` first, at most `horizon.limit` of them.
pub fn build_car_lists(world: &World, horizon: KnowledgeHorizon) -> CarLists {
    let net = &world.network;
    let mut ramp: Vec<&VehicleState> = world.cars.iter().filter(|c| c.road == Road::Ramp).collect();
    ramp.sort_by(|a, b| b.position.total_cmp(&a.position).then(a.id.cmp(&b.id)));

    let mut main: Vec<(f64, &VehicleState)> = world
        .cars
        .iter()
        .filter(|c| c.road == Road::MainLoop)
        .filter_map(|c| {
            let s = net.offset_from_merge_start(c);
            let in_section = s >= 0.0 && s <= net.merge_length();
            let upstream = s < 0.0 && -s <= horizon.range;
            (in_section || upstream).then_some((s, c))
        })
        .collect();
    // front-most (largest offset) first
    main.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
    // keep the `limit` cars closest to O: those inside the section first, then the nearest upstream
    main.truncate(horizon.limit);

    CarLists {
        ramp_list: ramp.iter().map(|c| c.id).collect(),
        main_list: main.iter().map(|(_, c)| c.id).collect(),
        out_list: Vec::new(),
    }
}
