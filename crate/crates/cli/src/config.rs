//! Flat `key = value` scenario files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rampsim_core::traffic::{MAX_RAMP_RATE, MAX_SENSOR_NOISE_PCT};
use rampsim_core::{ArrivalProcess, KnowledgeHorizon, RoadNetwork, ScenarioConfig, StrategyKind};
use thiserror::Error;

/// Every key a scenario file may set, in the order they are echoed.
pub const KEYS: [&str; 17] = [
    "loop_length_m",
    "ramp_length_m",
    "merge_section_m",
    "decision_offset_m",
    "main_density_per_km",
    "ramp_rate_per_min",
    "arrival_process",
    "strategy",
    "seed",
    "dt_s",
    "duration_s",
    "sensor_noise_pct",
    "neighbor_limit",
    "neighbor_range_m",
    "sliding_decision",
    "vehicle_length_m",
    "entry_velocity_kmh",
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` is set more than once")]
    Duplicate { line: usize, key: String },
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    /// The key the diagnostic is about, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Syntax { .. } => None,
            ConfigError::UnknownKey { key, .. }
            | ConfigError::Duplicate { key, .. }
            | ConfigError::Invalid { key, .. } => Some(key),
        }
    }
}

/// Raw key/value settings; unset keys take the defaults when built.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigText {
    entries: BTreeMap<String, String>,
}

impl ConfigText {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if entries.insert(key.to_string(), unquote(value).to_string()).is_some() {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Override one key; the key must be one of [`KEYS`].
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line: 0,
                key: key.to_string(),
            });
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn build(&self) -> Result<ScenarioConfig, ConfigError> {
        let d = ScenarioConfig::default();
        let loop_length = self.number("loop_length_m", d.network.loop_length, |v| v > 0.0, "must be positive")?;
        let ramp_length = self.number("ramp_length_m", d.network.ramp_length, |v| v > 0.0, "must be positive")?;
        let section = self.number(
            "merge_section_m",
            d.network.merge_length(),
            |v| v > 0.0 && v <= ramp_length,
            &format!("must be in (0, ramp_length_m = {ramp_length}]"),
        )?;
        let offset = self.number(
            "decision_offset_m",
            d.network.decision_offset,
            |v| (0.0..=ramp_length - section).contains(&v),
            &format!(
                "must be in [0, {}] (ramp_length_m - merge_section_m) so that D lies upstream of O",
                ramp_length - section
            ),
        )?;
        let network = RoadNetwork::with_section(loop_length, ramp_length, section, offset)
            .map_err(|e| invalid("merge_section_m", e))?;

        let dt = self.number("dt_s", d.dt, |v| v > 0.0, "must be positive")?;
        let config = ScenarioConfig {
            main_density: self.number(
                "main_density_per_km",
                d.main_density,
                |v| v >= 0.0,
                "must be non-negative",
            )?,
            ramp_rate: self.number(
                "ramp_rate_per_min",
                d.ramp_rate,
                |v| (0.0..=MAX_RAMP_RATE).contains(&v),
                &format!("must be in [0, {MAX_RAMP_RATE}] cars per minute"),
            )?,
            arrival_process: self.parsed::<ArrivalProcess>("arrival_process", d.arrival_process)?,
            strategy: self.parsed::<StrategyKind>("strategy", d.strategy)?,
            network,
            idm: d.idm,
            dt,
            duration: self.number("duration_s", d.duration, |v| v >= 0.0, "must be non-negative")?,
            seed: self.parsed::<u64>("seed", d.seed)?,
            sensor_noise_pct: self.number(
                "sensor_noise_pct",
                d.sensor_noise_pct,
                |v| (0.0..=MAX_SENSOR_NOISE_PCT).contains(&v),
                &format!("must be in [0, {MAX_SENSOR_NOISE_PCT}]"),
            )?,
            horizon: KnowledgeHorizon {
                limit: {
                    let n = self.parsed::<usize>("neighbor_limit", d.horizon.limit)?;
                    if n == 0 {
                        return Err(invalid("neighbor_limit", "must be at least 1"));
                    }
                    n
                },
                range: self.number("neighbor_range_m", d.horizon.range, |v| v > 0.0, "must be positive")?,
            },
            sliding_decision: self.parsed::<bool>("sliding_decision", d.sliding_decision)?,
            vehicle_length: self.number("vehicle_length_m", d.vehicle_length, |v| v > 0.0, "must be positive")?,
            entry_velocity: self.number(
                "entry_velocity_kmh",
                d.entry_velocity * 3.6,
                |v| v >= 0.0 && v <= d.idm.desired_velocity * 3.6,
                &format!("must be in [0, {}] km/h", d.idm.desired_velocity * 3.6),
            )? / 3.6,
            // one frame per second, or per step when steps are longer
            sample_interval: d.sample_interval.max(dt),
        };
        config.validate().map_err(|e| invalid("config", e))?;
        Ok(config)
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse::<T>()
                .map_err(|e| invalid(key, format!("cannot parse {raw:?}: {e}"))),
        }
    }

    fn number(&self, key: &str, default: f64, ok: impl Fn(f64) -> bool, rule: &str) -> Result<f64, ConfigError> {
        let v = self.parsed::<f64>(key, default)?;
        if v.is_finite() && ok(v) {
            Ok(v)
        } else {
            Err(invalid(key, format!("{v} {rule}")))
        }
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

fn invalid(key: &str, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.to_string(),
    }
}

/// Parse a scenario file into a full configuration.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    ConfigText::parse(text)?.build()
}

/// Every key of `config` in file form; `parse_config(&render_config(c))` gives `c` back.
pub fn render_config(config: &ScenarioConfig) -> String {
    let net = &config.network;
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("loop_length_m", net.loop_length.to_string());
    put("ramp_length_m", net.ramp_length.to_string());
    put("merge_section_m", net.merge_length().to_string());
    put("decision_offset_m", net.decision_offset.to_string());
    put("main_density_per_km", config.main_density.to_string());
    put("ramp_rate_per_min", config.ramp_rate.to_string());
    put("arrival_process", config.arrival_process.to_string());
    put("strategy", config.strategy.name().to_string());
    put("seed", config.seed.to_string());
    put("dt_s", config.dt.to_string());
    put("duration_s", config.duration.to_string());
    put("sensor_noise_pct", config.sensor_noise_pct.to_string());
    put("neighbor_limit", config.horizon.limit.to_string());
    put("neighbor_range_m", config.horizon.range.to_string());
    put("sliding_decision", config.sliding_decision.to_string());
    put("vehicle_length_m", config.vehicle_length.to_string());
    put("entry_velocity_kmh", (config.entry_velocity * 3.6).to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(parse_config("# nothing here\n\n").unwrap(), c);
    }

    #[test]
    fn ramp_rate_cap() {
        let e = parse_config("ramp_rate_per_min = 13").unwrap_err();
        assert_eq!(e.key(), Some("ramp_rate_per_min"));
        assert!(parse_config("ramp_rate_per_min = 12").is_ok());
    }

    #[test]
    fn strategy_names() {
        let c = parse_config("strategy = velocity").unwrap();
        assert_eq!(c.strategy, StrategyKind::VelocityBased);
        let c = parse_config("strategy = \"proactive_velocity\"  # PV").unwrap();
        assert_eq!(c.strategy, StrategyKind::ProactiveVelocity);
        let e = parse_config("strategy = fastest").unwrap_err();
        assert_eq!(e.key(), Some("strategy"));
    }

    #[test]
    fn diagnostics_name_the_key() {
        let e = parse_config("speed_limit = 3").unwrap_err();
        assert_eq!(
            e,
            ConfigError::UnknownKey {
                line: 1,
                key: "speed_limit".into()
            }
        );
        assert_eq!(parse_config("dt_s = 0").unwrap_err().key(), Some("dt_s"));
        assert_eq!(parse_config("seed = -1").unwrap_err().key(), Some("seed"));
        assert_eq!(
            parse_config("sensor_noise_pct = 3.5").unwrap_err().key(),
            Some("sensor_noise_pct")
        );
        assert_eq!(
            parse_config("ramp_length_m = 150").unwrap_err().key(),
            Some("decision_offset_m")
        );
        assert_eq!(parse_config("seed = 1\nseed = 2").unwrap_err().key(), Some("seed"));
        assert!(matches!(
            parse_config("just words").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
    }

    #[test]
    fn short_ramp_with_matching_offset() {
        let c = parse_config("ramp_length_m = 200\ndecision_offset_m = 50").unwrap();
        assert_eq!(c.network.ramp_length, 200.0);
        assert_eq!(c.network.ramp_merge_start(), 100.0);
    }

    #[test]
    fn render_round_trips() {
        let text = "strategy = distance\nseed = 42\narrival_process = poisson\nsensor_noise_pct = 3\nsliding_decision = true\nentry_velocity_kmh = 72\n";
        let c = parse_config(text).unwrap();
        assert_eq!(parse_config(&render_config(&c)).unwrap(), c);
        let d = ScenarioConfig::default();
        assert_eq!(parse_config(&render_config(&d)).unwrap(), d);
    }
}
