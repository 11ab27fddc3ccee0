use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rampsim_cli::output::{read_frames, reaggregate, EVENTS_FILE, FRAMES_FILE};
use rampsim_cli::{parse_config, run_scenario, run_sweep, ConfigText, RunError, SweepSpec, VaryKey};
use rampsim_core::{ScenarioConfig, SimError, StrategyKind};

fn rampsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rampsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.conf");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn zero_duration_writes_initial_frame_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = rampsim(&["run", "--duration-s", "0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let frames = read_frames(fs::File::open(out.join(FRAMES_FILE)).unwrap()).unwrap();
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0].t, 0.0);
    for f in ["config.txt", "events.csv", "summary.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(
        dir.path(),
        "strategy = proactive_velocity\narrival_process = poisson\nsensor_noise_pct = 3\n",
    );
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = rampsim(&[
            "run",
            "--config",
            &conf,
            "--seed",
            "7",
            "--duration-s",
            "120",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out);
    }
    for f in ["config.txt", "frames.csv", "events.csv", "summary.csv"] {
        assert_eq!(
            fs::read(outputs[0].join(f)).unwrap(),
            fs::read(outputs[1].join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_echo_reproduces_the_run_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config("strategy = distance\nduration_s = 5\nramp_rate_per_min = 6").unwrap();
    let artifact = run_scenario(&config, dir.path()).unwrap();
    let echoed = parse_config(&fs::read_to_string(artifact.config_echo).unwrap()).unwrap();
    assert_eq!(echoed, config);
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "ramp_rate_per_min = 13\n");
    let o = rampsim(&[
        "run",
        "--config",
        &conf,
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ramp_rate_per_min"));

    let conf = write_config(dir.path(), "lanes = 2\n");
    let o = rampsim(&["validate", "--config", &conf]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lanes"));
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = rampsim(&["validate", "--duration-s", "30"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{stdout}");

    let conf = write_config(dir.path(), "dt_s = 10\n");
    let o = rampsim(&["validate", "--config", &conf, "--duration-s", "30"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL equilibrium"));

    let conf = write_config(dir.path(), "main_density_per_km = 300\n");
    let o = rampsim(&["validate", "--config", &conf, "--duration-s", "30"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout).contains("infeasible"));
}

#[test]
fn collision_maps_to_its_own_exit_status() {
    let e = RunError::Sim(SimError::Collision {
        follower: 1,
        leader: 2,
        time: 3.0,
        gap: -0.1,
    });
    assert!(e.is_collision());
    assert!(e.to_string().contains("t = 3"));
    assert!(!RunError::Sim(SimError::InfeasibleDensity { density: 1.0 }).is_collision());
    assert_eq!(rampsim_cli::EXIT_COLLISION, 3);
}

#[test]
fn priority_merges_in_medium_heavy_cell() {
    let config = ScenarioConfig {
        strategy: StrategyKind::Priority,
        main_density: 10.0,
        ramp_rate: 12.0,
        ..ScenarioConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let artifact = run_scenario(&config, dir.path()).unwrap();
    assert!(artifact.output.summary.total_throughput > 0);
}

#[test]
fn sweep_summaries_match_reaggregated_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = ConfigText::default();
    base.set("duration_s", "200").unwrap();
    let spec = SweepSpec::new(base, VaryKey::RampLength, vec![200.0, 400.0]);
    let rows = run_sweep(&spec, Some(dir.path())).unwrap();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let cell = dir
            .path()
            .join(format!("ramp_length_m_{}", row.value))
            .join(row.strategy.name());
        let summary = reaggregate(&cell.join(FRAMES_FILE), &cell.join(EVENTS_FILE), 1.0).unwrap();
        assert_eq!(summary, row.summary);
    }
}

#[test]
fn sweep_command_prints_one_row_per_run() {
    let o = rampsim(&[
        "sweep",
        "--vary",
        "decision_offset_m",
        "--values",
        "0,100",
        "--duration-s",
        "60",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let mut lines = stdout.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("decision_offset_m,strategy,latency_100"));
    assert_eq!(lines.count(), 8);

    let o = rampsim(&["sweep", "--vary", "seed", "--values", "1"]);
    assert!(!o.status.success());
}
