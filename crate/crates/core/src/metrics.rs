//! Latency, throughput, flow and acceleration metrics.

use std::collections::BTreeMap;

use crate::error::{Result, SimError};
use crate::world::{Road, World};

/// Commands at or below this count as hard braking, m/s².
pub const HARD_DECEL_THRESHOLD: f64 = -2.0;

/// Velocity above which flow is compared, m/s.
pub const FAST_REGIME_VELOCITY: f64 = 20.0;

/// One sampling instant.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsFrame {
    pub t: f64,
    pub n_main: usize,
    pub n_ramp: usize,
    pub ramp_queue: usize,
    pub merged_total: usize,
    /// cars/m
    pub density: f64,
    pub mean_velocity: f64,
    /// cars/s
    pub flow: f64,
    /// Mean |command| over loop cars since the previous frame.
    pub mean_abs_accel: f64,
    pub hard_decel_events: u64,
}

/// Per-car ramp history.
#[derive(Clone, Debug, PartialEq)]
pub struct CarEvent {
    pub car_id: u32,
    pub spawn_t: f64,
    pub decision_t: Option<f64>,
    pub merge_t: Option<f64>,
    pub entry_v: f64,
    pub merge_v: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub latency_to_fill: BTreeMap<usize, f64>,
    pub total_throughput: usize,
    pub peak_flow: f64,
    pub time_above_20ms: f64,
    pub mean_abs_accel_overall: f64,
    pub per_car_ramp_transit: Vec<f64>,
    /// Frame-averaged flow and velocity.
    pub mean_flow: f64,
    pub mean_velocity: f64,
    /// Time-averaged flow over frames with mean velocity above 20 m/s, if any.
    pub fast_regime_flow: Option<f64>,
}

/// Time at which the `n`-th merge completed; 0 for `n = 0`, `None` if never reached.
pub fn latency_to_fill(merge_times: &[f64], n: usize) -> Option<f64> {
    if n == 0 {
        return Some(0.0);
    }
    let mut sorted = merge_times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.get(n - 1).copied()
}

/// Merges completed in the window `(t0, t1]`.
pub fn throughput(merge_times: &[f64], t0: f64, t1: f64) -> Result<usize> {
    if !(t0 <= t1) {
        return Err(SimError::InvalidScenario(format!("window ({t0}, {t1}] is reversed")));
    }
    Ok(merge_times.iter().filter(|&&t| t > t0 && t <= t1).count())
}

/// Loop density times space-mean velocity; 0 on an empty loop.
pub fn flow(world: &World) -> f64 {
    let n = world.count_on(Road::MainLoop);
    if n == 0 {
        return 0.0;
    }
    (n as f64 / world.network.loop_length) * world.mean_main_velocity()
}

/// Commands issued to loop cars during one step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepAccels {
    pub dt: f64,
    pub accels: Vec<f64>,
}

/// Time-weighted mean over steps of the per-step mean |a|, and the number of
/// commands at or below the hard-braking threshold.
pub fn accel_stats(log: &[StepAccels]) -> (f64, u64) {
    let mut weighted = 0.0;
    let mut time = 0.0;
    let mut hard = 0;
    for step in log {
        time += step.dt;
        if step.accels.is_empty() {
            continue;
        }
        let mean = step.accels.iter().map(|a| a.abs()).sum::<f64>() / step.accels.len() as f64;
        weighted += mean * step.dt;
        hard += step.accels.iter().filter(|&&a| a <= HARD_DECEL_THRESHOLD).count() as u64;
    }
    let mean = if time > 0.0 { weighted / time } else { 0.0 };
    (mean, hard)
}

/// Latency grid reported in summaries.
pub fn latency_grid() -> impl Iterator<Item = usize> {
    (1..=40).map(|k| k * 10)
}

/// Aggregate a run from its frames and events only, so that the summary can
/// be recomputed from the written CSVs.
pub fn summarize(frames: &[MetricsFrame], events: &[CarEvent], sample_interval: f64) -> RunSummary {
    let merges: Vec<f64> = events.iter().filter_map(|e| e.merge_t).collect();
    let latency_to_fill = latency_grid()
        .map_while(|n| latency_to_fill(&merges, n).map(|t| (n, t)))
        .collect();
    let mean = |f: &dyn Fn(&MetricsFrame) -> f64| {
        if frames.is_empty() {
            0.0
        } else {
            frames.iter().map(f).sum::<f64>() / frames.len() as f64
        }
    };
    // the initial frame carries no commands
    let accel_frames = if frames.len() > 1 { &frames[1..] } else { &frames[..0] };
    let mean_abs_accel_overall = if accel_frames.is_empty() {
        0.0
    } else {
        accel_frames.iter().map(|f| f.mean_abs_accel).sum::<f64>() / accel_frames.len() as f64
    };
    let fast: Vec<f64> = frames
        .iter()
        .filter(|f| f.mean_velocity > FAST_REGIME_VELOCITY)
        .map(|f| f.flow)
        .collect();
    RunSummary {
        latency_to_fill,
        total_throughput: merges.len(),
        peak_flow: frames.iter().map(|f| f.flow).fold(0.0, f64::max),
        time_above_20ms: fast.len() as f64 * sample_interval,
        mean_abs_accel_overall,
        per_car_ramp_transit: events.iter().filter_map(|e| e.merge_t.map(|m| m - e.spawn_t)).collect(),
        mean_flow: mean(&|f| f.flow),
        mean_velocity: mean(&|f| f.mean_velocity),
        fast_regime_flow: (!fast.is_empty()).then(|| fast.iter().sum::<f64>() / fast.len() as f64),
    }
}
