//! Intelligent-driver-model car following and the fixed-step integrator.

use std::collections::BTreeMap;

use crate::error::{Result, SimError};
use crate::world::{net_gap, wrap_position, CarId, Road, RoadIndex, VehicleState, World};

/// Car-following parameters. Defaults: 100 km/h desired velocity, 1.5 s
/// headway, 1 m/s² acceleration, 3 m/s² deceleration, 2 m standstill gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdmParams {
    pub desired_velocity: f64,
    pub time_headway: f64,
    pub max_acceleration: f64,
    /// Comfortable deceleration inside the desired gap, and the hard command floor.
    pub max_deceleration: f64,
    pub min_gap: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_velocity: 100.0 / 3.6,
            time_headway: 1.5,
            max_acceleration: 1.0,
            max_deceleration: 3.0,
            min_gap: 2.0,
            exponent: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("desired_velocity", self.desired_velocity),
            ("time_headway", self.time_headway),
            ("max_acceleration", self.max_acceleration),
            ("max_deceleration", self.max_deceleration),
            ("min_gap", self.min_gap),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.exponent.is_finite() && self.exponent >= 1.0) {
            return Err(SimError::InvalidParams(format!(
                "exponent = {} must be >= 1",
                self.exponent
            )));
        }
        Ok(())
    }

    pub fn clamp_command(&self, a: f64) -> f64 {
        a.clamp(-self.max_deceleration, self.max_acceleration)
    }
}

/// What a car sees of whatever it follows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeaderView {
    /// Net gap to the effective leader.
    pub gap: f64,
    pub leader_velocity: f64,
    /// Own velocity minus leader velocity.
    pub closing_speed: f64,
}

impl LeaderView {
    pub fn new(gap: f64, own_velocity: f64, leader_velocity: f64) -> Self {
        Self {
            gap,
            leader_velocity,
            closing_speed: own_velocity - leader_velocity,
        }
    }
}

/// Desired dynamic gap `s0 + max(0, vT + v·dv / (2·sqrt(ab)))`.
pub fn desired_gap(v: f64, dv: f64, params: &IdmParams) -> f64 {
    let dynamic = v * params.time_headway + v * dv / (2.0 * (params.max_acceleration * params.max_deceleration).sqrt());
    params.min_gap + dynamic.max(0.0)
}

/// IDM acceleration `a·[1 - (v/v0)^δ - (s*/s)²]`, clamped to `[-b, a]`.
///
/// A non-positive gap is an overlap that already happened and is reported
/// as a collision.
pub fn idm_acceleration(v: f64, leader: &LeaderView, params: &IdmParams) -> Result<f64> {
    if !(leader.gap > 0.0) {
        return Err(SimError::Collision {
            follower: CarId::MAX,
            leader: CarId::MAX,
            time: f64::NAN,
            gap: leader.gap,
        });
    }
    Ok(params.clamp_command(raw_idm(v, leader, params)))
}

fn free_term(v: f64, params: &IdmParams) -> f64 {
    let ratio = v / params.desired_velocity;
    if params.exponent == 4.0 {
        let r2 = ratio * ratio;
        r2 * r2
    } else {
        ratio.powf(params.exponent)
    }
}

fn raw_idm(v: f64, leader: &LeaderView, params: &IdmParams) -> f64 {
    let s_star = desired_gap(v, leader.closing_speed, params);
    let interaction = s_star / leader.gap;
    params.max_acceleration * (1.0 - free_term(v, params) - interaction * interaction)
}

/// Highest command that still lets a follower stop behind its leader if the
/// leader brakes at `b` from now on and the follower starts braking at `b`
/// after one step of `dt`.
///
/// Solves `(v + v')/2·dt + v'²/(2b) = gap - s0 + v_l²/(2b)` for the velocity
/// `v'` reached after the step.
pub fn safe_command(v: f64, leader: &LeaderView, params: &IdmParams, dt: f64) -> f64 {
    let b = params.max_deceleration;
    let budget = leader.gap - params.min_gap + leader.leader_velocity.powi(2) / (2.0 * b) - 0.5 * v * dt;
    let v_next = if budget <= 0.0 {
        0.0
    } else {
        b * (-0.5 * dt + (0.25 * dt * dt + 2.0 * budget / b).sqrt())
    };
    (v_next - v) / dt
}

/// Whether a follower at `v` can still avoid `leader` under the `[-b, a]` command limits.
pub fn is_safe_following(v: f64, leader: &LeaderView, params: &IdmParams, dt: f64) -> bool {
    leader.gap > 0.0 && safe_command(v, leader, params, dt) >= -params.max_deceleration
}

/// Car-following command actually issued: IDM capped by [`safe_command`],
/// then clamped to `[-b, a]`.
pub fn following_command(v: f64, leader: &LeaderView, params: &IdmParams, dt: f64) -> Result<f64> {
    let idm = idm_acceleration(v, leader, params)?;
    Ok(params.clamp_command(idm.min(safe_command(v, leader, params, dt))))
}

/// Leader a car reacts to.
///
/// Loop cars follow the next car ahead (a sole car follows its own rear
/// around the ring). Ramp cars follow the nearer of their real ramp leader
/// and a virtual stopped car of zero length at `E`.
pub fn effective_leader(car: &VehicleState, world: &World) -> Result<LeaderView> {
    let index = world.index();
    let i = world
        .cars
        .iter()
        .position(|c| c == car)
        .ok_or(SimError::DuplicateId(car.id))?;
    leader_view_indexed(world, &index, i)
}

pub(crate) fn leader_view_indexed(world: &World, index: &RoadIndex, i: usize) -> Result<LeaderView> {
    let car = &world.cars[i];
    let real = index
        .leader_of(world, i)
        .map(|l| {
            let leader = &world.cars[l];
            net_gap(car, leader, &world.network).map(|g| LeaderView::new(g, car.velocity, leader.velocity))
        })
        .transpose()?;
    match car.road {
        Road::MainLoop => Ok(real.expect("a loop car always has a leader")),
        Road::Ramp => {
            let virtual_stop = LeaderView::new(world.network.ramp_length - car.position, car.velocity, 0.0);
            Ok(match real {
                Some(r) if r.gap < virtual_stop.gap => r,
                _ => virtual_stop,
            })
        }
    }
}

/// Car-following command for every car from a frozen snapshot.
pub fn idm_commands(world: &World, params: &IdmParams, dt: f64) -> Result<Vec<f64>> {
    let index = world.index();
    (0..world.cars.len())
        .map(|i| {
            let view = leader_view_indexed(world, &index, i)?;
            following_command(world.cars[i].velocity, &view, params, dt).map_err(|e| tag_collision(e, world, &index, i))
        })
        .collect()
}

pub(crate) fn tag_collision(e: SimError, world: &World, index: &RoadIndex, i: usize) -> SimError {
    match e {
        SimError::Collision { gap, .. } => {
            let leader = index
                .leader_of(world, i)
                .map(|l| world.cars[l].id)
                .unwrap_or(CarId::MAX);
            SimError::Collision {
                follower: world.cars[i].id,
                leader,
                time: world.time,
                gap,
            }
        }
        other => other,
    }
}

/// One ballistic step: `v' = max(0, v + a·dt)`, `x' = x + (v + v')/2·dt`.
///
/// Loop positions wrap. Commands are applied simultaneously, so storage
/// order never matters.
pub fn integrate(world: &World, dt: f64, commands: &[f64]) -> Result<World> {
    assert_eq!(commands.len(), world.cars.len());
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::InvalidScenario(format!("dt = {dt} must be positive")));
    }
    let mut next = world.clone();
    for (car, &a) in next.cars.iter_mut().zip(commands) {
        let v = car.velocity;
        let v_next = (v + a * dt).max(0.0);
        let x = car.position + 0.5 * (v + v_next) * dt;
        car.position = match car.road {
            Road::MainLoop => wrap_position(x, world.network.loop_length)?,
            Road::Ramp => x,
        };
        car.velocity = v_next;
        car.acceleration = a;
    }
    next.time = world.time + dt;
    Ok(next)
}

/// Advance the world one step. Cars without an entry in `overrides` get
/// their car-following command; all commands are clamped to `[-b, a]`.
pub fn step_world(world: &World, dt: f64, overrides: &BTreeMap<CarId, f64>, params: &IdmParams) -> Result<World> {
    let mut commands = idm_commands(world, params, dt)?;
    for (cmd, car) in commands.iter_mut().zip(&world.cars) {
        if let Some(&a) = overrides.get(&car.id) {
            *cmd = params.clamp_command(a);
        }
    }
    integrate(world, dt, &commands)
}

/// Velocity at which a homogeneous platoon with net gap `gap` is in equilibrium
/// (IDM acceleration zero at zero closing speed). Bisection on `[0, v0]`.
pub fn equilibrium_velocity(gap: f64, params: &IdmParams) -> f64 {
    if gap <= params.min_gap {
        return 0.0;
    }
    let f = |v: f64| raw_idm(v, &LeaderView::new(gap, v, v), params);
    let (mut lo, mut hi) = (0.0, params.desired_velocity);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::RoadNetwork;

    fn p() -> IdmParams {
        IdmParams::default()
    }

    #[test]
    fn desired_gap_examples() {
        assert_eq!(desired_gap(0.0, 0.0, &p()), 2.0);
        let v0 = 27.78;
        assert!((desired_gap(v0, 0.0, &p()) - 43.67).abs() < 1e-9);
        assert_eq!(desired_gap(20.0, -30.0, &p()), 2.0);
    }

    #[test]
    fn idm_examples() {
        let params = p();
        let v0 = params.desired_velocity;
        let free = LeaderView::new(1e12, v0, v0);
        assert!(idm_acceleration(v0, &free, &params).unwrap().abs() < 1e-12);

        let standstill = LeaderView::new(params.min_gap, 0.0, 0.0);
        assert_eq!(idm_acceleration(0.0, &standstill, &params).unwrap(), 0.0);

        // v = 20, s = 30, dv = 5, evaluated at 40 digits with mpmath:
        // s* = 60.867513459481288, a·[1 - (v/v0)^4 - (s*/s)^2] = -3.385243220822373
        // → clamped at -3
        let view = LeaderView {
            gap: 30.0,
            leader_velocity: 15.0,
            closing_speed: 5.0,
        };
        assert_eq!(idm_acceleration(20.0, &view, &params).unwrap(), -3.0);
        // unclamped value from the same evaluation
        let raw = raw_idm(20.0, &view, &params);
        assert!((raw - (-3.385243220822373)).abs() < 1e-12, "{raw}");
    }

    #[test]
    fn overlap_is_collision() {
        let view = LeaderView::new(0.0, 10.0, 10.0);
        assert!(matches!(
            idm_acceleration(10.0, &view, &p()),
            Err(SimError::Collision { .. })
        ));
    }

    #[test]
    fn invalid_params() {
        let mut bad = p();
        bad.exponent = 0.5;
        assert!(bad.validate().is_err());
        bad = p();
        bad.time_headway = 0.0;
        assert!(bad.validate().is_err());
        assert!(p().validate().is_ok());
    }

    fn net() -> RoadNetwork {
        RoadNetwork::with_section(10_000.0, 400.0, 100.0, 200.0).unwrap()
    }

    #[test]
    fn ramp_leader_selection() {
        let mut world = World::new(net());
        world.cars.push(VehicleState::new(1, Road::Ramp, 300.0, 12.0, 5.0));
        let v = effective_leader(&world.cars[0], &world).unwrap();
        assert_eq!(
            v,
            LeaderView {
                gap: 100.0,
                leader_velocity: 0.0,
                closing_speed: 12.0
            }
        );

        world.cars.push(VehicleState::new(2, Road::Ramp, 325.0, 8.0, 5.0));
        let v = effective_leader(&world.cars[0], &world).unwrap();
        assert_eq!(v.gap, 20.0);
        assert_eq!(v.leader_velocity, 8.0);
    }

    #[test]
    fn main_leader_is_real_car() {
        let mut world = World::new(net());
        world.cars.push(VehicleState::new(1, Road::MainLoop, 100.0, 20.0, 5.0));
        world.cars.push(VehicleState::new(2, Road::MainLoop, 200.0, 18.0, 5.0));
        let v = effective_leader(&world.cars[0], &world).unwrap();
        assert_eq!(
            v,
            LeaderView {
                gap: 95.0,
                leader_velocity: 18.0,
                closing_speed: 2.0
            }
        );
        let v = effective_leader(&world.cars[1], &world).unwrap();
        assert_eq!(v.gap, 10_000.0 - 100.0 - 5.0);
    }

    #[test]
    fn integrator_examples() {
        let mut world = World::new(net());
        world.cars.push(VehicleState::new(1, Road::MainLoop, 0.0, 0.0, 5.0));
        let next = integrate(&world, 0.1, &[1.0]).unwrap();
        assert!((next.cars[0].velocity - 0.1).abs() < 1e-15);
        assert!((next.cars[0].position - 0.005).abs() < 1e-15);

        let v0 = p().desired_velocity;
        world.cars[0].velocity = v0;
        let next = integrate(&world, 0.1, &[0.0]).unwrap();
        assert!((next.cars[0].position - v0 * 0.1).abs() < 1e-12);

        world.cars[0].velocity = 0.05;
        let next = integrate(&world, 0.1, &[-3.0]).unwrap();
        assert_eq!(next.cars[0].velocity, 0.0);

        world.cars[0].position = 9_999.0;
        world.cars[0].velocity = 20.0;
        let next = integrate(&world, 0.1, &[0.0]).unwrap();
        assert!((next.cars[0].position - 1.0).abs() < 1e-9);
    }

    #[test]
    fn overrides_are_clamped() {
        let mut world = World::new(net());
        world.cars.push(VehicleState::new(1, Road::MainLoop, 0.0, 10.0, 5.0));
        let overrides = BTreeMap::from([(1, -50.0)]);
        let next = step_world(&world, 0.1, &overrides, &p()).unwrap();
        assert_eq!(next.cars[0].acceleration, -3.0);
    }
}
