//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; an empty file yields [`SimConfig::default`]. Unknown keys,
//! repeated keys and unparsable or out-of-range values are all collected and
//! reported together, one item per offending line.
//!
//! | key | unit / values | default |
//! |---|---|---|
//! | `arrival_rate` | arrivals per tick | 4e-3 |
//! | `service_rate` | departures per tick | 4e-4 |
//! | `steps` | ticks | 50000 |
//! | `seed` | master seed | 1 |
//! | `policy` | `instability`, `maxsnr`, `error` | instability |
//! | `n_max` | consecutive losses | 10 |
//! | `error_threshold` | m | 0.02 |
//! | `total_rb` | RBs per tick | 60 |
//! | `payload_bits` | bits | 600 |
//! | `cell_radius` | m | 1000 |
//! | `tx_power` | dBm | 20 |
//! | `carrier_wavelength` | m | 0.1499 (2 GHz) |
//! | `reference_distance` | m | 100 |
//! | `pathloss_exponent` | | 3 |
//! | `bandwidth` | Hz | 1.4e6 |
//! | `noise_density` | dBm/Hz | -174 |
//! | `noise_figure` | dB | 7 |
//! | `doppler` | Hz | 6.67 |
//! | `sample_time` | s | 0.005 |
//! | `instability_bound` | | 1e-9 |
//! | `constant_pe_threshold` | | 1e-3 |
//! | `pbb_form` | `corrected`, `as_printed` | corrected |
//! | `relative_tolerance` | quadrature | 1e-9 |
//! | `max_subdivisions` | quadrature | 500 |
//! | `tail_truncation_factor` | quadrature | 40 |
//! | `spawn_offset` | m | 0.005 |
//! | `initial_population` | `empty`, `stationary` | empty |
//! | `ideal_channel` | `true`, `false` | false |
//! | `track_shape` | `line`, `circle` | line |
//! | `track_radius` | m, circles only | 20 |
//! | `track_speed` | m/s | 1 |
//! | `k_x`, `k_y`, `k_theta` | controller gains | 10, 64, 16 |
//! | `max_speed` | m/s | 2 |

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use wncs_core::control::TrackShape;
use wncs_core::simulator::{InitialPopulation, SimConfig};
use wncs_core::stability::PbbForm;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{}", Itemized(.0))]
    Invalid(Vec<String>),
}

struct Itemized<'a>(&'a [String]);

impl fmt::Display for Itemized<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration ({} problem{}):", self.0.len(), if self.0.len() == 1 { "" } else { "s" })?;
        for item in self.0 {
            write!(f, "\n  - {item}")?;
        }
        Ok(())
    }
}

/// SimConfig plus the circle radius, which only lands in the config when the
/// shape is a circle.
struct Draft {
    cfg: SimConfig,
    circle: bool,
    radius: f64,
}

const DEFAULT_TRACK_RADIUS: f64 = 20.0;

type Setter = fn(&mut Draft, &str) -> Result<(), String>;
type Getter = fn(&Draft) -> String;

struct Key {
    name: &'static str,
    set: Setter,
    get: Getter,
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse {v:?}: {e}"))
}

fn positive(v: &str) -> Result<f64, String> {
    let x: f64 = parse(v)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("must be positive, got {x}"))
    }
}

fn finite(v: &str) -> Result<f64, String> {
    let x: f64 = parse(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("must be finite, got {x}"))
    }
}

fn within(v: &str, lo: f64, hi: f64, open_lo: bool) -> Result<f64, String> {
    let x: f64 = parse(v)?;
    let above = if open_lo { x > lo } else { x >= lo };
    if above && x <= hi {
        Ok(x)
    } else {
        let bracket = if open_lo { '(' } else { '[' };
        Err(format!("must lie in {bracket}{lo}, {hi}], got {x}"))
    }
}

fn at_least_one<T: FromStr + PartialOrd + From<u8> + fmt::Display>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    let x: T = parse(v)?;
    if x >= T::from(1) {
        Ok(x)
    } else {
        Err(format!("must be at least 1, got {x}"))
    }
}

macro_rules! key {
    ($name:literal, |$d:ident| $field:expr, $check:expr) => {
        Key {
            name: $name,
            set: |$d, v| {
                $field = $check(v)?;
                Ok(())
            },
            get: |$d| $field.to_string(),
        }
    };
}

fn keys() -> Vec<Key> {
    vec![
        key!("arrival_rate", |d| d.cfg.arrival_rate, |v| within(v, 0.0, 0.1, true)),
        key!("service_rate", |d| d.cfg.service_rate, |v| within(v, 0.0, 1.0, true)),
        key!("steps", |d| d.cfg.total_ticks, at_least_one::<u64>),
        key!("seed", |d| d.cfg.seed, parse::<u64>),
        Key {
            name: "policy",
            set: |d, v| {
                d.cfg.policy = v.parse().map_err(|e: wncs_core::Error| e.to_string())?;
                Ok(())
            },
            get: |d| d.cfg.policy.to_string(),
        },
        key!("n_max", |d| d.cfg.n_max, at_least_one::<u32>),
        key!("error_threshold", |d| d.cfg.error_threshold_m, positive),
        key!("total_rb", |d| d.cfg.total_rb, parse::<u32>),
        key!("payload_bits", |d| d.cfg.payload_bits, at_least_one::<u32>),
        key!("cell_radius", |d| d.cfg.cell_radius_m, positive),
        key!("tx_power", |d| d.cfg.radio.tx_power_dbm, finite),
        key!("carrier_wavelength", |d| d.cfg.radio.carrier_wavelength_m, positive),
        key!("reference_distance", |d| d.cfg.radio.reference_distance_m, positive),
        key!("pathloss_exponent", |d| d.cfg.radio.pathloss_exponent, |v| within(v, 2.0, 6.0, false)),
        key!("bandwidth", |d| d.cfg.radio.bandwidth_hz, positive),
        key!("noise_density", |d| d.cfg.radio.noise_density_dbm_hz, finite),
        key!("noise_figure", |d| d.cfg.radio.noise_figure_db, finite),
        key!("doppler", |d| d.cfg.radio.doppler_hz, positive),
        key!("sample_time", |d| d.cfg.radio.sample_time_s, positive),
        key!("instability_bound", |d| d.cfg.instability_bound, |v| within(v, 0.0, 1.0, true)),
        key!("constant_pe_threshold", |d| d.cfg.constant_pe_threshold, |v| within(v, 0.0, 1.0, true)),
        Key {
            name: "pbb_form",
            set: |d, v| {
                d.cfg.pbb_form = match v {
                    "corrected" => PbbForm::Corrected,
                    "as_printed" => PbbForm::AsPrinted,
                    _ => return Err(format!("expected corrected or as_printed, got {v:?}")),
                };
                Ok(())
            },
            get: |d| match d.cfg.pbb_form {
                PbbForm::Corrected => "corrected".into(),
                PbbForm::AsPrinted => "as_printed".into(),
            },
        },
        key!("relative_tolerance", |d| d.cfg.quadrature.relative_tolerance, positive),
        key!("max_subdivisions", |d| d.cfg.quadrature.max_subdivisions, at_least_one::<usize>),
        key!("tail_truncation_factor", |d| d.cfg.quadrature.tail_truncation_factor, |v| within(v, 20.0, 700.0, false)),
        key!("spawn_offset", |d| d.cfg.spawn_offset_m, |v| within(v, 0.0, f64::MAX, false)),
        Key {
            name: "initial_population",
            set: |d, v| {
                d.cfg.initial_population = match v {
                    "empty" => InitialPopulation::Empty,
                    "stationary" => InitialPopulation::Stationary,
                    _ => return Err(format!("expected empty or stationary, got {v:?}")),
                };
                Ok(())
            },
            get: |d| match d.cfg.initial_population {
                InitialPopulation::Empty => "empty".into(),
                InitialPopulation::Stationary => "stationary".into(),
            },
        },
        key!("ideal_channel", |d| d.cfg.ideal_channel, parse::<bool>),
        Key {
            name: "track_shape",
            set: |d, v| {
                d.circle = match v {
                    "line" => false,
                    "circle" => true,
                    _ => return Err(format!("expected line or circle, got {v:?}")),
                };
                Ok(())
            },
            get: |d| if d.circle { "circle".into() } else { "line".into() },
        },
        key!("track_radius", |d| d.radius, positive),
        key!("track_speed", |d| d.cfg.track.speed, positive),
        key!("k_x", |d| d.cfg.gains.k_x, finite),
        key!("k_y", |d| d.cfg.gains.k_y, finite),
        key!("k_theta", |d| d.cfg.gains.k_theta, finite),
        key!("max_speed", |d| d.cfg.gains.max_speed, positive),
    ]
}

fn draft_of(cfg: &SimConfig) -> Draft {
    let (circle, radius) = match cfg.track.shape {
        TrackShape::Line => (false, DEFAULT_TRACK_RADIUS),
        TrackShape::Circle { radius } => (true, radius),
    };
    Draft { cfg: cfg.clone(), circle, radius }
}

/// Parses configuration text.
pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    let table = keys();
    let mut draft = draft_of(&SimConfig::default());
    let mut seen = HashSet::new();
    let mut problems = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = n + 1;
        let Some((name, value)) = line.split_once('=') else {
            problems.push(format!("line {lineno}: expected `key = value`, got {line:?}"));
            continue;
        };
        let (name, value) = (name.trim(), value.trim());
        let Some(key) = table.iter().find(|k| k.name == name) else {
            problems.push(format!("line {lineno}: unknown key `{name}`"));
            continue;
        };
        if !seen.insert(name) {
            problems.push(format!("line {lineno}: `{name}` given more than once"));
            continue;
        }
        if let Err(e) = (key.set)(&mut draft, value) {
            problems.push(format!("line {lineno}: `{name}` {e}"));
        }
    }
    if draft.circle {
        draft.cfg.track.shape = TrackShape::Circle { radius: draft.radius };
    } else if seen.contains("track_radius") {
        problems.push("`track_radius` needs `track_shape = circle`".into());
    }
    if problems.is_empty() {
        if let Err(e) = draft.cfg.validate() {
            problems.push(e.to_string());
        }
    }
    if problems.is_empty() {
        Ok(draft.cfg)
    } else {
        Err(ConfigError::Invalid(problems))
    }
}

pub fn parse_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config_str(&text)
}

/// Every key with its value, in the documented order. Feeding the output
/// back to [`parse_config_str`] reproduces `cfg` exactly, except that
/// `track_radius` is only written for circular tracks.
pub fn render_config(cfg: &SimConfig) -> String {
    let draft = draft_of(cfg);
    let mut out = String::new();
    for key in keys() {
        if key.name == "track_radius" && !draft.circle {
            continue;
        }
        out.push_str(key.name);
        out.push_str(" = ");
        out.push_str(&(key.get)(&draft));
        out.push('\n');
    }
    out
}

/// Names of all accepted keys.
pub fn key_names() -> Vec<&'static str> {
    keys().iter().map(|k| k.name).collect()
}
