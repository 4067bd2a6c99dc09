//! Run configuration: a line-oriented `key = value` format.
//!
//! ```text
//! # comment
//! direction = u2g
//! v_max = 3          # trailing comments are allowed
//! ```
//!
//! Keys are case-sensitive and unknown keys are rejected. Layers are merged in
//! the order preset, config file, `--set` overrides, so later layers win.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use uav_secrecy::evaluation::SweepAxis;
use uav_secrecy::orchestrator::Scheme;
use uav_secrecy::scenario::{db_to_linear, dbm_to_watts, slots_for_period, Direction, Point, Scenario};

use crate::error::ConfigParseError;

/// Every accepted key in manifest order, with its default if it has one.
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("direction", None),
    ("ground_x_m", None),
    ("ground_y_m", None),
    ("eaves_x_m", None),
    ("eaves_y_m", None),
    ("altitude_m", None),
    ("start_x_m", None),
    ("start_y_m", None),
    ("final_x_m", None),
    ("final_y_m", None),
    ("v_max", None),
    ("ref_snr_db", None),
    ("flight_period_s", None),
    ("slot_len_s", Some("0.5")),
    ("avg_power_dbm", None),
    ("peak_to_avg_ratio", Some("4")),
    ("pathloss_exp", Some("3")),
    ("schemes", Some("T-OPT-With-PC,T-OPT-Without-PC,BET-With-PC,BET-Without-PC")),
    ("sweep_axis", Some("none")),
    ("sweep_values", Some("")),
    ("epsilon", Some("1e-4")),
    ("max_iter", Some("200")),
    ("mc_samples", Some("5000")),
    ("seed", Some("0")),
    ("out_dir", Some("out")),
];

pub const PRESETS: &[&str] = &["case1-u2g", "case1-g2u", "case2-u2g", "case2-g2u"];

/// Desk-scale slot length in seconds.
pub const DESK_SLOT_S: f64 = 5.0;

/// A raw value and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub origin: String,
    pub line: usize,
    /// 1-based column of the value.
    pub column: usize,
}

/// Raw key-value pairs; later layers overwrite earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layers {
    entries: BTreeMap<String, Entry>,
}

impl Layers {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `text` and merges it over the current entries.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigParseError> {
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if let Some((key, entry)) = parse_line(raw, origin, line)? {
                if let Some(first) = seen.insert(key.clone(), line) {
                    return Err(ConfigParseError::DuplicateKey {
                        origin: origin.to_string(),
                        line,
                        key,
                        first,
                    });
                }
                self.entries.insert(key, entry);
            }
        }
        Ok(())
    }

    /// Merges one `key=value` override, numbered from 1 in command-line order.
    pub fn merge_override(&mut self, text: &str, index: usize) -> Result<(), ConfigParseError> {
        let origin = format!("--set #{index}");
        match parse_line(text, &origin, 1)? {
            Some((key, entry)) => {
                self.entries.insert(key, entry);
                Ok(())
            }
            None => Err(ConfigParseError::Syntax {
                origin,
                line: 1,
                column: 1,
                message: "expected `key=value`".into(),
            }),
        }
    }

    pub fn set(&mut self, key: &str, value: String, origin: &str) {
        self.entries.insert(
            key.to_string(),
            Entry { value, origin: origin.to_string(), line: 0, column: 0 },
        );
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }
}

fn parse_line(raw: &str, origin: &str, line: usize) -> Result<Option<(String, Entry)>, ConfigParseError> {
    let content = raw.split('#').next().unwrap_or("");
    if content.trim().is_empty() {
        return Ok(None);
    }
    let key_col = content.len() - content.trim_start().len() + 1;
    let Some(eq) = content.find('=') else {
        return Err(ConfigParseError::Syntax {
            origin: origin.to_string(),
            line,
            column: key_col,
            message: "expected `key = value`".into(),
        });
    };
    let key = content[..eq].trim();
    if key.is_empty() {
        return Err(ConfigParseError::Syntax {
            origin: origin.to_string(),
            line,
            column: key_col,
            message: "missing key before `=`".into(),
        });
    }
    if !KEYS.iter().any(|(k, _)| *k == key) {
        return Err(ConfigParseError::UnknownKey {
            origin: origin.to_string(),
            line,
            column: key_col,
            key: key.to_string(),
        });
    }
    let after = &content[eq + 1..];
    let value_col = eq + 2 + (after.len() - after.trim_start().len());
    Ok(Some((
        key.to_string(),
        Entry {
            value: after.trim().to_string(),
            origin: origin.to_string(),
            line,
            column: value_col,
        },
    )))
}

/// Text of a built-in preset.
pub fn preset_text(name: &str) -> Result<String, ConfigParseError> {
    let (start, end, direction) = match name {
        "case1-u2g" => ((100, 600), (100, -600), "u2g"),
        "case1-g2u" => ((100, 600), (100, -600), "g2u"),
        "case2-u2g" => ((-500, -150), (700, -150), "u2g"),
        "case2-g2u" => ((-500, -150), (700, -150), "g2u"),
        _ => return Err(ConfigParseError::UnknownPreset(name.to_string())),
    };
    Ok(format!(
        "direction = {direction}\n\
         ground_x_m = 0\nground_y_m = 0\n\
         eaves_x_m = 200\neaves_y_m = 0\n\
         altitude_m = 100\n\
         start_x_m = {}\nstart_y_m = {}\n\
         final_x_m = {}\nfinal_y_m = {}\n\
         v_max = 3\n\
         ref_snr_db = 80\n\
         flight_period_s = 600\n\
         slot_len_s = 0.5\n\
         avg_power_dbm = -5\n\
         peak_to_avg_ratio = 4\n\
         pathloss_exp = 3\n\
         sweep_axis = flight_period\n\
         sweep_values = 400,450,500,550,600\n",
        start.0, start.1, end.0, end.1
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub direction: Direction,
    pub ground: Point,
    pub eaves: Point,
    pub altitude_m: f64,
    pub start: Point,
    pub final_pos: Point,
    pub v_max: f64,
    pub ref_snr_db: f64,
    pub flight_period_s: f64,
    pub slot_len_s: f64,
    pub avg_power_dbm: f64,
    pub peak_to_avg_ratio: f64,
    pub pathloss_exp: f64,
    pub schemes: Vec<Scheme>,
    pub sweep: Option<(SweepAxis, Vec<f64>)>,
    pub epsilon: f64,
    pub max_iter: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

struct Resolver<'a> {
    layers: &'a Layers,
}

impl Resolver<'_> {
    fn entry(&self, key: &'static str) -> Result<Entry, ConfigParseError> {
        if let Some(e) = self.layers.get(key) {
            return Ok(e.clone());
        }
        let default = KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .and_then(|(_, d)| *d)
            .ok_or(ConfigParseError::MissingKey { key })?;
        Ok(Entry { value: default.to_string(), origin: "default".into(), line: 0, column: 0 })
    }

    fn parse<T>(
        &self,
        key: &'static str,
        f: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<T, ConfigParseError> {
        let e = self.entry(key)?;
        f(&e.value).map_err(|message| ConfigParseError::InvalidValue {
            origin: e.origin,
            line: e.line,
            column: e.column,
            key,
            message,
        })
    }

    fn float(&self, key: &'static str) -> Result<f64, ConfigParseError> {
        self.parse(key, |v| {
            let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(format!("`{v}` is not finite"))
            }
        })
    }

    fn int<T: std::str::FromStr>(&self, key: &'static str) -> Result<T, ConfigParseError> {
        self.parse(key, |v| v.parse().map_err(|_| format!("`{v}` is not a non-negative integer")))
    }

    fn point(&self, x: &'static str, y: &'static str) -> Result<Point, ConfigParseError> {
        Ok(Point::new(self.float(x)?, self.float(y)?))
    }
}

fn parse_list<T>(v: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect()
}

fn parse_number(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("`{s}` is not a finite number"))
}

impl RunConfig {
    pub fn from_layers(layers: &Layers) -> Result<Self, ConfigParseError> {
        let r = Resolver { layers };
        let schemes = r.parse("schemes", |v| {
            let list = parse_list(v, |s| s.parse::<Scheme>())?;
            if list.is_empty() {
                Err("at least one scheme is required".into())
            } else {
                Ok(list)
            }
        })?;
        let axis = r.parse("sweep_axis", |v| match v {
            "none" => Ok(None),
            "flight_period" => Ok(Some(SweepAxis::FlightPeriod)),
            "avg_power" => Ok(Some(SweepAxis::AvgPower)),
            other => Err(format!("unknown axis `{other}` (expected none, flight_period or avg_power)")),
        })?;
        let values = r.parse("sweep_values", |v| {
            let list = parse_list(v, parse_number)?;
            if axis.is_some() && list.is_empty() {
                Err("a sweep axis needs at least one value".into())
            } else {
                Ok(list)
            }
        })?;
        let sweep = axis.map(|a| (a, values));
        Ok(Self {
            direction: r.parse("direction", |v| v.parse())?,
            ground: r.point("ground_x_m", "ground_y_m")?,
            eaves: r.point("eaves_x_m", "eaves_y_m")?,
            altitude_m: r.float("altitude_m")?,
            start: r.point("start_x_m", "start_y_m")?,
            final_pos: r.point("final_x_m", "final_y_m")?,
            v_max: r.float("v_max")?,
            ref_snr_db: r.float("ref_snr_db")?,
            flight_period_s: r.float("flight_period_s")?,
            slot_len_s: r.float("slot_len_s")?,
            avg_power_dbm: r.float("avg_power_dbm")?,
            peak_to_avg_ratio: r.float("peak_to_avg_ratio")?,
            pathloss_exp: r.float("pathloss_exp")?,
            schemes,
            sweep,
            epsilon: r.parse("epsilon", |v| {
                let x = parse_number(v)?;
                if x > 0.0 {
                    Ok(x)
                } else {
                    Err(format!("`{v}` must be positive"))
                }
            })?,
            max_iter: r.int("max_iter")?,
            mc_samples: r.int("mc_samples")?,
            seed: r.int("seed")?,
            out_dir: PathBuf::from(r.entry("out_dir")?.value),
        })
    }

    /// Base scenario and whether the slot count was rounded.
    pub fn scenario(&self) -> (Scenario, bool) {
        let (num_slots, rounded) = slots_for_period(self.flight_period_s, self.slot_len_s);
        let avg_power = dbm_to_watts(self.avg_power_dbm);
        let scenario = Scenario {
            ground_pos: self.ground,
            eaves_pos: self.eaves,
            altitude_m: self.altitude_m,
            ref_snr: db_to_linear(self.ref_snr_db),
            v_max: self.v_max,
            slot_len_s: self.slot_len_s,
            num_slots,
            start_pos: self.start,
            final_pos: self.final_pos,
            avg_power,
            peak_power: self.peak_to_avg_ratio * avg_power,
            pathloss_exp: self.pathloss_exp,
            direction: self.direction,
        };
        (scenario, rounded)
    }

    /// The resolved configuration in the input format; parsing it back gives
    /// an equal `RunConfig`.
    pub fn to_manifest(&self) -> String {
        let f = |x: f64| format!("{x:?}");
        let list = |xs: &[f64]| xs.iter().map(|&x| f(x)).collect::<Vec<_>>().join(",");
        let (axis, values) = match &self.sweep {
            None => ("none", String::new()),
            Some((SweepAxis::FlightPeriod, v)) => ("flight_period", list(v)),
            Some((SweepAxis::AvgPower, v)) => ("avg_power", list(v)),
        };
        let mut out = String::from("# resolved run configuration\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("direction", self.direction.to_string());
        kv("ground_x_m", f(self.ground.x));
        kv("ground_y_m", f(self.ground.y));
        kv("eaves_x_m", f(self.eaves.x));
        kv("eaves_y_m", f(self.eaves.y));
        kv("altitude_m", f(self.altitude_m));
        kv("start_x_m", f(self.start.x));
        kv("start_y_m", f(self.start.y));
        kv("final_x_m", f(self.final_pos.x));
        kv("final_y_m", f(self.final_pos.y));
        kv("v_max", f(self.v_max));
        kv("ref_snr_db", f(self.ref_snr_db));
        kv("flight_period_s", f(self.flight_period_s));
        kv("slot_len_s", f(self.slot_len_s));
        kv("avg_power_dbm", f(self.avg_power_dbm));
        kv("peak_to_avg_ratio", f(self.peak_to_avg_ratio));
        kv("pathloss_exp", f(self.pathloss_exp));
        kv(
            "schemes",
            self.schemes.iter().map(|s| s.name()).collect::<Vec<_>>().join(","),
        );
        kv("sweep_axis", axis.to_string());
        kv("sweep_values", values);
        kv("epsilon", f(self.epsilon));
        kv("max_iter", self.max_iter.to_string());
        kv("mc_samples", self.mc_samples.to_string());
        kv("seed", self.seed.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        out
    }
}
