//! Run artifacts: frames, events and summary CSVs plus a config echo.

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rampsim_core::metrics::{latency_grid, summarize};
use rampsim_core::{CarEvent, MetricsFrame, RunOutput, RunSummary, ScenarioConfig, SimError, Simulation};
use thiserror::Error;

use crate::config::render_config;

pub const FRAME_COLUMNS: [&str; 10] = [
    "t",
    "n_main",
    "n_ramp",
    "ramp_queue",
    "merged_total",
    "density",
    "mean_velocity",
    "flow",
    "mean_abs_accel",
    "hard_decel_events",
];

pub const EVENT_COLUMNS: [&str; 6] = ["car_id", "spawn_t", "decision_t", "merge_t", "entry_v", "merge_v"];

pub const CONFIG_FILE: &str = "config.txt";
pub const FRAMES_FILE: &str = "frames.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Parse(String),
}

impl RunError {
    pub fn is_collision(&self) -> bool {
        matches!(self, RunError::Sim(SimError::Collision { .. }))
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Files written for one run, plus the in-memory result.
#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub config_echo: PathBuf,
    pub frames: PathBuf,
    pub events: PathBuf,
    pub summary: PathBuf,
    pub output: RunOutput,
}

/// Run `config` to completion and write its artifacts into `dir`.
pub fn run_scenario(config: &ScenarioConfig, dir: &Path) -> Result<RunArtifact, RunError> {
    let output = Simulation::new(config.clone())?.run()?;
    write_artifact(config, &output, dir)
}

pub fn write_artifact(config: &ScenarioConfig, output: &RunOutput, dir: &Path) -> Result<RunArtifact, RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let artifact = RunArtifact {
        config_echo: dir.join(CONFIG_FILE),
        frames: dir.join(FRAMES_FILE),
        events: dir.join(EVENTS_FILE),
        summary: dir.join(SUMMARY_FILE),
        output: output.clone(),
    };
    fs::write(&artifact.config_echo, render_config(config)).map_err(io_err(&artifact.config_echo))?;
    write_frames(create(&artifact.frames)?, &output.frames)?;
    write_events(create(&artifact.events)?, &output.events)?;
    write_summary(create(&artifact.summary)?, &output.summary)?;
    Ok(artifact)
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_frames<W: Write>(w: W, frames: &[MetricsFrame]) -> Result<(), RunError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FRAME_COLUMNS)?;
    for f in frames {
        out.write_record([
            f.t.to_string(),
            f.n_main.to_string(),
            f.n_ramp.to_string(),
            f.ramp_queue.to_string(),
            f.merged_total.to_string(),
            f.density.to_string(),
            f.mean_velocity.to_string(),
            f.flow.to_string(),
            f.mean_abs_accel.to_string(),
            f.hard_decel_events.to_string(),
        ])?;
    }
    out.flush().map_err(|e| RunError::Io {
        path: PathBuf::from(FRAMES_FILE),
        source: e,
    })
}

pub fn write_events<W: Write>(w: W, events: &[CarEvent]) -> Result<(), RunError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EVENT_COLUMNS)?;
    for e in events {
        out.write_record([
            e.car_id.to_string(),
            e.spawn_t.to_string(),
            opt(e.decision_t),
            opt(e.merge_t),
            e.entry_v.to_string(),
            opt(e.merge_v),
        ])?;
    }
    out.flush().map_err(|e| RunError::Io {
        path: PathBuf::from(EVENTS_FILE),
        source: e,
    })
}

/// `metric,value` rows; latency rows for the whole grid, empty where never reached.
pub fn write_summary<W: Write>(w: W, s: &RunSummary) -> Result<(), RunError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "value"])?;
    let mut row = |k: &str, v: String| out.write_record([k, v.as_str()]);
    row("total_throughput", s.total_throughput.to_string())?;
    row("peak_flow", s.peak_flow.to_string())?;
    row("mean_flow", s.mean_flow.to_string())?;
    row("mean_velocity", s.mean_velocity.to_string())?;
    row("fast_regime_flow", opt(s.fast_regime_flow))?;
    row("time_above_20ms", s.time_above_20ms.to_string())?;
    row("mean_abs_accel_overall", s.mean_abs_accel_overall.to_string())?;
    let transit = &s.per_car_ramp_transit;
    let mean_transit = (!transit.is_empty()).then(|| transit.iter().sum::<f64>() / transit.len() as f64);
    row("mean_ramp_transit", opt(mean_transit))?;
    for n in latency_grid() {
        row(&format!("latency_to_fill_{n}"), opt(s.latency_to_fill.get(&n).copied()))?;
    }
    out.flush().map_err(|e| RunError::Io {
        path: PathBuf::from(SUMMARY_FILE),
        source: e,
    })
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, RunError> {
    let raw = rec
        .get(i)
        .ok_or_else(|| RunError::Parse(format!("missing column {name}")))?;
    raw.parse()
        .map_err(|_| RunError::Parse(format!("column {name}: cannot parse {raw:?}")))
}

fn opt_field(rec: &csv::StringRecord, i: usize, name: &str) -> Result<Option<f64>, RunError> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rec, i, name).map(Some),
    }
}

fn check_header(r: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), RunError> {
    let header = r.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(RunError::Parse(format!("unexpected header {header:?}")));
    }
    Ok(())
}

pub fn read_frames<R: Read>(r: R) -> Result<Vec<MetricsFrame>, RunError> {
    let mut r = csv::Reader::from_reader(r);
    check_header(&mut r, &FRAME_COLUMNS)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let c = &FRAME_COLUMNS;
            Ok(MetricsFrame {
                t: field(&rec, 0, c[0])?,
                n_main: field(&rec, 1, c[1])?,
                n_ramp: field(&rec, 2, c[2])?,
                ramp_queue: field(&rec, 3, c[3])?,
                merged_total: field(&rec, 4, c[4])?,
                density: field(&rec, 5, c[5])?,
                mean_velocity: field(&rec, 6, c[6])?,
                flow: field(&rec, 7, c[7])?,
                mean_abs_accel: field(&rec, 8, c[8])?,
                hard_decel_events: field(&rec, 9, c[9])?,
            })
        })
        .collect()
}

pub fn read_events<R: Read>(r: R) -> Result<Vec<CarEvent>, RunError> {
    let mut r = csv::Reader::from_reader(r);
    check_header(&mut r, &EVENT_COLUMNS)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let c = &EVENT_COLUMNS;
            Ok(CarEvent {
                car_id: field(&rec, 0, c[0])?,
                spawn_t: field(&rec, 1, c[1])?,
                decision_t: opt_field(&rec, 2, c[2])?,
                merge_t: opt_field(&rec, 3, c[3])?,
                entry_v: field(&rec, 4, c[4])?,
                merge_v: opt_field(&rec, 5, c[5])?,
            })
        })
        .collect()
}

/// Recompute a run summary from written frames and events CSVs.
pub fn reaggregate(frames: &Path, events: &Path, sample_interval: f64) -> Result<RunSummary, RunError> {
    let frames = read_frames(File::open(frames).map_err(io_err(frames))?)?;
    let events = read_events(File::open(events).map_err(io_err(events))?)?;
    Ok(summarize(&frames, &events, sample_interval))
}
