use proptest::prelude::*;
use rampsim_core::metrics::summarize;
use rampsim_core::{flow, latency_to_fill, throughput, CarEvent, MetricsFrame, Road, RoadNetwork, VehicleState, World};

/// Smallest logged time by which at least `n` merges are done.
fn fill_oracle(log: &[f64], n: usize) -> Option<f64> {
    log.iter()
        .copied()
        .filter(|&t| log.iter().filter(|&&u| u <= t).count() >= n)
        .min_by(f64::total_cmp)
}

#[test]
fn flow_of_ten_cars_per_km_at_twenty() {
    let net = RoadNetwork::with_section(10_000.0, 400.0, 100.0, 100.0).unwrap();
    let mut w = World::new(net);
    for k in 0..100u32 {
        w.cars
            .push(VehicleState::new(k, Road::MainLoop, 100.0 * k as f64, 20.0, 5.0));
    }
    w.cars.push(VehicleState::new(500, Road::Ramp, 10.0, 0.0, 5.0));
    assert!((flow(&w) - 0.2).abs() < 1e-12);
}

fn frame(t: f64, v: f64, merged: usize) -> MetricsFrame {
    let density = 0.01;
    MetricsFrame {
        t,
        n_main: 100,
        n_ramp: 0,
        ramp_queue: 0,
        merged_total: merged,
        density,
        mean_velocity: v,
        flow: density * v,
        mean_abs_accel: 0.5,
        hard_decel_events: 0,
    }
}

#[test]
fn summary_from_frames_and_events() {
    let frames = vec![
        frame(0.0, 25.0, 0),
        frame(1.0, 25.0, 1),
        frame(2.0, 15.0, 2),
        frame(3.0, 21.0, 2),
    ];
    let events: Vec<CarEvent> = [(1.0, 0.5), (2.0, 1.5)]
        .iter()
        .enumerate()
        .map(|(k, &(m, s))| CarEvent {
            car_id: k as u32,
            spawn_t: s,
            decision_t: None,
            merge_t: Some(m),
            entry_v: 16.0,
            merge_v: Some(16.0),
        })
        .collect();
    let s = summarize(&frames, &events, 1.0);
    assert_eq!(s.total_throughput, 2);
    assert_eq!(s.per_car_ramp_transit, vec![0.5, 0.5]);
    assert_eq!(s.time_above_20ms, 3.0);
    assert!((s.fast_regime_flow.unwrap() - 0.01 * (25.0 + 25.0 + 21.0) / 3.0).abs() < 1e-15);
    assert!((s.mean_velocity - 21.5).abs() < 1e-12);
    assert!((s.mean_abs_accel_overall - 0.5).abs() < 1e-12);
    assert!((s.peak_flow - 0.25).abs() < 1e-15);
    // latencies only up to the grid points reached
    assert!(s.latency_to_fill.is_empty());
}

proptest! {
    #[test]
    fn latency_is_the_order_statistic(log in prop::collection::vec(0.0..1800.0f64, 0..60), n in 1usize..70) {
        prop_assert_eq!(latency_to_fill(&log, n), fill_oracle(&log, n));
    }

    #[test]
    fn latency_is_monotone(log in prop::collection::vec(0.0..1800.0f64, 0..60)) {
        let l: Vec<f64> = (0..=log.len()).map(|n| latency_to_fill(&log, n).unwrap()).collect();
        prop_assert!(l.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn throughput_is_additive(
        log in prop::collection::vec(0.0..100.0f64, 0..60),
        mut cuts in prop::collection::vec(0.0..100.0f64, 3),
    ) {
        cuts.sort_by(f64::total_cmp);
        let (a, b, c) = (cuts[0], cuts[1], cuts[2]);
        let whole = throughput(&log, a, c).unwrap();
        prop_assert_eq!(throughput(&log, a, b).unwrap() + throughput(&log, b, c).unwrap(), whole);
        prop_assert_eq!(throughput(&log, -1.0, 100.0).unwrap(), log.len());
    }
}
