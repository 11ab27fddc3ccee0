use std::collections::BTreeMap;

use proptest::prelude::*;
use rampsim_core::strategies::preserves_road_order;
use rampsim_core::{
    assign_gap_at_decision_point, build_car_lists, enforce_order_on_main, execute_merge, order_distance_based,
    order_priority, order_velocity_based, ordered_can_merge, CarId, GapAssignment, IdmParams, KnowledgeHorizon,
    MergePlan, OrderKey, Road, RoadNetwork, VehicleState, World,
};

const DT: f64 = 0.1;

fn network() -> RoadNetwork {
    RoadNetwork::with_section(10_000.0, 400.0, 100.0, 100.0).unwrap()
}

/// A car `dist` metres upstream of `O` on the given road.
fn car_at(id: CarId, road: Road, dist: f64, v: f64, net: &RoadNetwork) -> VehicleState {
    let position = match road {
        Road::Ramp => net.ramp_merge_start() - dist,
        Road::MainLoop => (net.merge_start - dist).rem_euclid(net.loop_length),
    };
    VehicleState::new(id, road, position, v, 5.0)
}

const C: CarId = 0;
const D: CarId = 1;
const E: CarId = 2;
const X: CarId = 10;
const Y: CarId = 11;

/// Main cars c, d, e and ramp cars x, y at 20, 32, 82 and 30, 80 m from `O`.
fn figure_scene(x_velocity: f64) -> World {
    let net = network();
    let mut w = World::new(net.clone());
    w.cars = vec![
        car_at(C, Road::MainLoop, 20.0, 20.0, &net),
        car_at(D, Road::MainLoop, 32.0, 20.0, &net),
        car_at(E, Road::MainLoop, 82.0, 20.0, &net),
        car_at(X, Road::Ramp, 30.0, x_velocity, &net),
        car_at(Y, Road::Ramp, 80.0, 20.0, &net),
    ];
    w
}

fn lists(w: &World) -> rampsim_core::CarLists {
    build_car_lists(w, KnowledgeHorizon::default())
}

#[test]
fn scene_lists() {
    let w = figure_scene(20.0);
    let l = lists(&w);
    assert_eq!(l.main_list, vec![C, D, E]);
    assert_eq!(l.ramp_list, vec![X, Y]);
}

#[test]
fn priority_order_of_the_scene() {
    let w = figure_scene(20.0);
    let plan = order_priority(&lists(&w), &w, &IdmParams::default(), DT).unwrap();
    assert_eq!(plan.out_list, vec![C, D, X, E, Y]);
}

#[test]
fn distance_order_of_the_scene() {
    let w = figure_scene(20.0);
    let plan = order_distance_based(&lists(&w), &w).unwrap();
    assert_eq!(plan.out_list, vec![C, X, D, Y, E]);
}

#[test]
fn velocity_order_with_fast_ramp_car() {
    let w = figure_scene(40.0);
    let plan = order_velocity_based(&lists(&w), &w).unwrap();
    assert_eq!(plan.out_list, vec![X, C, D, Y, E]);
    // at equal speeds arrival order is distance order
    let w = figure_scene(20.0);
    assert_eq!(
        order_velocity_based(&lists(&w), &w).unwrap().out_list,
        vec![C, X, D, Y, E]
    );
}

#[test]
fn assignments_follow_the_out_list() {
    let w = figure_scene(20.0);
    let plan = order_distance_based(&lists(&w), &w).unwrap();
    assert_eq!(
        plan.gap_assignment[&X],
        GapAssignment {
            leader: Some(C),
            follower: Some(D)
        }
    );
    assert_eq!(
        plan.gap_assignment[&Y],
        GapAssignment {
            leader: Some(D),
            follower: Some(E)
        }
    );
}

/// Main cars reach `O` after 6, 9, 9.5 and 14 s; the ramp car after 10 s.
fn window_scene() -> World {
    let net = network();
    let mut w = World::new(net.clone());
    for (id, t) in [(0, 6.0), (1, 9.0), (2, 9.5), (3, 14.0)] {
        w.cars.push(car_at(id, Road::MainLoop, 20.0 * t, 20.0, &net));
    }
    w.cars.push(car_at(X, Road::Ramp, 200.0, 20.0, &net));
    w
}

#[test]
fn gap_choice_skips_narrow_and_passed_windows() {
    let w = window_scene();
    let a = assign_gap_at_decision_point(
        X,
        &lists(&w),
        &w,
        &BTreeMap::new(),
        OrderKey::ArrivalTime,
        &IdmParams::default(),
    )
    .unwrap();
    assert_eq!(
        a,
        GapAssignment {
            leader: Some(2),
            follower: Some(3)
        }
    );
}

#[test]
fn gap_choice_past_the_last_car_is_open() {
    let net = network();
    let mut w = window_scene();
    w.cars.retain(|c| c.id != 3);
    let a = assign_gap_at_decision_point(
        X,
        &lists(&w),
        &w,
        &BTreeMap::new(),
        OrderKey::ArrivalTime,
        &IdmParams::default(),
    )
    .unwrap();
    assert_eq!(
        a,
        GapAssignment {
            leader: Some(2),
            follower: None
        }
    );
    // an empty main road leaves the car unconstrained
    let mut w = World::new(net.clone());
    w.cars.push(car_at(X, Road::Ramp, 200.0, 20.0, &net));
    let a = assign_gap_at_decision_point(
        X,
        &lists(&w),
        &w,
        &BTreeMap::new(),
        OrderKey::Distance,
        &IdmParams::default(),
    )
    .unwrap();
    assert_eq!(a, GapAssignment::default());
}

#[test]
fn committed_car_ahead_keeps_ramp_order() {
    let net = network();
    let mut w = window_scene();
    let y = car_at(Y, Road::Ramp, 240.0, 40.0, &net);
    w.cars.push(y);
    let mut committed = BTreeMap::new();
    committed.insert(
        X,
        GapAssignment {
            leader: Some(2),
            follower: Some(3),
        },
    );
    // Y would reach O after 6 s, but X ahead of it already holds the (9.5, 14) gap
    let a = assign_gap_at_decision_point(
        Y,
        &lists(&w),
        &w,
        &committed,
        OrderKey::ArrivalTime,
        &IdmParams::default(),
    )
    .unwrap();
    assert_eq!(a.leader, Some(X));
    assert_eq!(a.follower, Some(3));
}

fn plan_for(ramp: CarId, follower: CarId) -> MergePlan {
    let mut plan = MergePlan::default();
    plan.gap_assignment.insert(
        ramp,
        GapAssignment {
            leader: None,
            follower: Some(follower),
        },
    );
    plan
}

#[test]
fn assigned_follower_yields_to_projection() {
    let net = network();
    let mut w = World::new(net.clone());
    w.cars.push(car_at(X, Road::Ramp, 50.0, 20.0, &net));
    w.cars.push(car_at(0, Road::MainLoop, 120.0, 20.0, &net));
    let overrides = enforce_order_on_main(&plan_for(X, 0), &w, &IdmParams::default(), DT);
    let view = overrides[&0];
    assert!((view.gap - 65.0).abs() < 1e-9);
    assert_eq!(view.closing_speed, 0.0);
}

#[test]
fn no_override_that_would_need_more_than_full_braking() {
    let net = network();
    let mut w = World::new(net.clone());
    w.cars.push(car_at(X, Road::Ramp, 50.0, 5.0, &net));
    w.cars.push(car_at(0, Road::MainLoop, 60.0, 30.0, &net));
    assert!(enforce_order_on_main(&plan_for(X, 0), &w, &IdmParams::default(), DT).is_empty());
    // a follower already level with the projection is not asked to yield
    w.cars[1] = car_at(0, Road::MainLoop, 48.0, 20.0, &net);
    assert!(enforce_order_on_main(&plan_for(X, 0), &w, &IdmParams::default(), DT).is_empty());
}

#[test]
fn merge_moves_car_to_projection() {
    let net = network();
    let params = IdmParams::default();
    let mut w = World::new(net.clone());
    w.time = 12.0;
    w.cars.push(VehicleState::new(
        X,
        Road::Ramp,
        net.ramp_merge_start() + 40.0,
        20.0,
        5.0,
    ));
    w.cars.push(car_at(0, Road::MainLoop, 150.0, 20.0, &net));
    w.cars
        .push(VehicleState::new(1, Road::MainLoop, net.merge_start + 200.0, 20.0, 5.0));
    let index = w.index();
    assert!(execute_merge(&mut w, X, &index, |c, g| ordered_can_merge(
        c, g, &params, DT
    )));
    let x = w.car(X).unwrap();
    assert_eq!(x.road, Road::MainLoop);
    assert_eq!(x.position, net.merge_start + 40.0);
    assert_eq!(x.merged_at, Some(12.0));
    assert_eq!(x.velocity, 20.0);
}

#[test]
fn merge_refused_upstream_of_o_or_into_a_car() {
    let net = network();
    let params = IdmParams::default();
    let mut w = World::new(net.clone());
    w.cars.push(car_at(X, Road::Ramp, 1.0, 20.0, &net));
    w.cars.push(car_at(0, Road::MainLoop, 500.0, 20.0, &net));
    let before = w.clone();
    let index = w.index();
    assert!(!execute_merge(&mut w, X, &index, |_, _| true));
    assert_eq!(w, before);

    w.cars[0] = VehicleState::new(X, Road::Ramp, net.ramp_merge_start() + 40.0, 20.0, 5.0);
    w.cars[1] = VehicleState::new(0, Road::MainLoop, net.merge_start + 42.0, 20.0, 5.0);
    let before = w.clone();
    let index = w.index();
    assert!(!execute_merge(&mut w, X, &index, |c, g| ordered_can_merge(
        c, g, &params, DT
    )));
    assert_eq!(w, before);
}

fn scene_strategy() -> impl Strategy<Value = World> {
    let car = (prop::bool::ANY, 0.0..290.0f64, 0.0..35.0f64);
    prop::collection::vec(car, 0..9).prop_map(|cars| {
        let net = network();
        let mut w = World::new(net.clone());
        for (k, (ramp, d, v)) in cars.into_iter().enumerate() {
            let road = if ramp { Road::Ramp } else { Road::MainLoop };
            let dist = if ramp { d } else { d + 10.0 * k as f64 };
            w.cars.push(car_at(k as CarId, road, dist, v, &net));
        }
        w
    })
}

proptest! {
    #[test]
    fn every_ordering_keeps_each_roads_order(w in scene_strategy()) {
        let l = lists(&w);
        let params = IdmParams::default();
        for plan in [
            order_priority(&l, &w, &params, DT).unwrap(),
            order_distance_based(&l, &w).unwrap(),
            order_velocity_based(&l, &w).unwrap(),
        ] {
            prop_assert!(preserves_road_order(&plan.out_list, &l));
            for r in &l.ramp_list {
                prop_assert!(plan.gap_assignment.contains_key(r));
            }
        }
    }
}
