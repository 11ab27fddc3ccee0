//! Closed-loop on-ramp merging simulator.
//!
//! A single-lane ring road with one on-ramp. Cars follow the intelligent
//! driver model; ramp cars join the ring under one of four merging
//! strategies, from the give-way baseline to proactive velocity-ordered
//! merging with speed adjustment ahead of the merge point.

// NaN-rejecting comparisons are written `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod sim;
pub mod strategies;
pub mod traffic;
pub mod world;

pub use dynamics::{
    desired_gap, effective_leader, equilibrium_velocity, following_command, idm_acceleration, is_safe_following,
    safe_command, step_world, IdmParams, LeaderView,
};
pub use error::{Result, SimError};
pub use metrics::{accel_stats, flow, latency_to_fill, throughput, CarEvent, MetricsFrame, RunSummary, StepAccels};
pub use sim::{RunOutput, Simulation};
pub use strategies::{
    assign_gap_at_decision_point, enforce_order_on_main, execute_merge, insertion_gaps, order_distance_based,
    order_priority, order_velocity_based, ordered_can_merge, predict_arrival_time, priority_can_merge,
    proactive_accel_command, replan_conflicts, sliding_decision_offset, GapAssignment, InsertionGaps, MergePlan,
    OrderKey, StrategyKind,
};
pub use traffic::{
    apply_sensor_noise, init_main_loop, next_interarrival, ArrivalProcess, ArrivalSchedule, Cell, MainLevel, RampLevel,
    ScenarioConfig,
};
pub use world::{
    build_car_lists, distance_to_point, net_gap, wrap_position, CarId, CarLists, KnowledgeHorizon, Road, RoadNetwork,
    VehicleState, World,
};
