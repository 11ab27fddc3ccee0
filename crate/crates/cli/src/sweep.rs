//! One-parameter sweeps across all four strategies.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rampsim_core::{RunSummary, ScenarioConfig, StrategyKind};
use rayon::prelude::*;

use crate::config::{ConfigError, ConfigText};
use crate::output::{run_scenario, RunError};

/// The parameters a sweep may vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VaryKey {
    MainDensity,
    RampRate,
    DecisionOffset,
    RampLength,
}

impl VaryKey {
    pub const ALL: [VaryKey; 4] = [
        VaryKey::MainDensity,
        VaryKey::RampRate,
        VaryKey::DecisionOffset,
        VaryKey::RampLength,
    ];

    /// The config-file key this parameter maps to.
    pub fn config_key(self) -> &'static str {
        match self {
            VaryKey::MainDensity => "main_density_per_km",
            VaryKey::RampRate => "ramp_rate_per_min",
            VaryKey::DecisionOffset => "decision_offset_m",
            VaryKey::RampLength => "ramp_length_m",
        }
    }

    fn short_name(self) -> &'static str {
        match self {
            VaryKey::MainDensity => "main_density",
            VaryKey::RampRate => "ramp_rate",
            VaryKey::DecisionOffset => "decision_offset",
            VaryKey::RampLength => "ramp_length",
        }
    }
}

impl fmt::Display for VaryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.config_key())
    }
}

impl FromStr for VaryKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        VaryKey::ALL
            .into_iter()
            .find(|k| {
                k.config_key() == s
                    || k.short_name() == s
                    || (s == "decision_offset_DO" && *k == VaryKey::DecisionOffset)
            })
            .ok_or_else(|| {
                let names: Vec<&str> = VaryKey::ALL.iter().map(|k| k.config_key()).collect();
                format!("cannot vary {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: ConfigText,
    pub varied: VaryKey,
    pub values: Vec<f64>,
    pub strategies: Vec<StrategyKind>,
}

impl SweepSpec {
    pub fn new(base: ConfigText, varied: VaryKey, values: Vec<f64>) -> Self {
        Self {
            base,
            varied,
            values,
            strategies: StrategyKind::ALL.to_vec(),
        }
    }

    /// Every (value, strategy) configuration, validated up front.
    pub fn configs(&self) -> Result<Vec<(f64, StrategyKind, ScenarioConfig)>, ConfigError> {
        let mut out = Vec::new();
        for &value in &self.values {
            for &strategy in &self.strategies {
                let mut text = self.base.clone();
                text.set(self.varied.config_key(), value.to_string())?;
                text.set("strategy", strategy.name())?;
                out.push((value, strategy, text.build()?));
            }
        }
        Ok(out)
    }
}

/// Parse `--values`: comma-separated numbers, kept in the given order.
pub fn parse_values(list: &str) -> Result<Vec<f64>, String> {
    let values: Vec<f64> = list
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad sweep value {v:?}")))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err("no sweep values".into());
    }
    Ok(values)
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: f64,
    pub strategy: StrategyKind,
    pub summary: RunSummary,
}

impl SweepRow {
    pub fn latency_100(&self) -> Option<f64> {
        self.summary.latency_to_fill.get(&100).copied()
    }
}

/// Run every cell of `spec` concurrently. With `out`, each run's artifacts go
/// to `out/<key>_<value>/<strategy>/`.
pub fn run_sweep(spec: &SweepSpec, out: Option<&Path>) -> Result<Vec<SweepRow>, RunError> {
    let configs = spec.configs().map_err(|e| RunError::Parse(e.to_string()))?;
    configs
        .into_par_iter()
        .map(|(value, strategy, config)| {
            let output = match out {
                Some(dir) => {
                    let cell = dir
                        .join(format!("{}_{}", spec.varied.config_key(), value))
                        .join(strategy.name());
                    run_scenario(&config, &cell)?.output
                }
                None => rampsim_core::Simulation::new(config)?.run()?,
            };
            Ok(SweepRow {
                value,
                strategy,
                summary: output.summary,
            })
        })
        .collect()
}

pub const TABLE_COLUMNS: [&str; 8] = [
    "value",
    "strategy",
    "latency_100",
    "merged",
    "mean_flow",
    "mean_velocity",
    "mean_abs_accel",
    "fast_regime_flow",
];

/// Comparison table, one row per value and strategy.
pub fn write_table<W: Write>(w: W, varied: VaryKey, rows: &[SweepRow]) -> Result<(), RunError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = TABLE_COLUMNS.map(String::from);
    header[0] = varied.config_key().to_string();
    out.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let s = &r.summary;
        out.write_record([
            r.value.to_string(),
            r.strategy.name().to_string(),
            opt(r.latency_100()),
            s.total_throughput.to_string(),
            s.mean_flow.to_string(),
            s.mean_velocity.to_string(),
            s.mean_abs_accel_overall.to_string(),
            opt(s.fast_regime_flow),
        ])?;
    }
    out.flush().map_err(|e| RunError::Io {
        path: "sweep table".into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vary_key_names() {
        assert_eq!("ramp_length".parse::<VaryKey>().unwrap(), VaryKey::RampLength);
        assert_eq!("ramp_length_m".parse::<VaryKey>().unwrap(), VaryKey::RampLength);
        assert_eq!(
            "decision_offset_DO".parse::<VaryKey>().unwrap(),
            VaryKey::DecisionOffset
        );
        assert!("seed".parse::<VaryKey>().is_err());
    }

    #[test]
    fn values_keep_order() {
        assert_eq!(parse_values("400, 200").unwrap(), vec![400.0, 200.0]);
        assert!(parse_values("1,,2").is_err());
    }

    #[test]
    fn one_run_per_value_and_strategy() {
        let spec = SweepSpec::new(ConfigText::default(), VaryKey::RampLength, vec![200.0, 400.0]);
        let configs = spec.configs().unwrap();
        assert_eq!(configs.len(), 8);
        assert!(configs.iter().all(|(v, _, c)| c.network.ramp_length == *v));
        let seeds: Vec<u64> = configs.iter().map(|(_, _, c)| c.seed).collect();
        assert!(seeds.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn invalid_value_names_the_key() {
        let spec = SweepSpec::new(ConfigText::default(), VaryKey::RampRate, vec![13.0]);
        assert_eq!(spec.configs().unwrap_err().key(), Some("ramp_rate_per_min"));
    }
}
