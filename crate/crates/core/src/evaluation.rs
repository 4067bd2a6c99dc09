//! Sweeps over flight period and average power, per-slot traces, and CSV output.

use std::fmt::Write as _;
use std::io::{self, Write};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::channel::{self, McEstimate};
use crate::error::{Error, Result};
use crate::orchestrator::{solve_benchmark, Scheme, SolveOptions, SolveReport};
use crate::scenario::{dbm_to_watts, Direction, Scenario};

pub const TRAJECTORY_HEADER: &str = "slot,time_s,x_m,y_m";
pub const POWER_HEADER: &str = "slot,time_s,power_W,d_ug_m,d_ue_m";
pub const SWEEP_HEADER: &str =
    "axis_name,axis_value,scheme,secrecy_bps_hz,mc_secrecy_bps_hz,mc_stderr,iterations,converged";

pub const DEFAULT_MC_SAMPLES: usize = 5000;

/// Float formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Values in seconds.
    FlightPeriod,
    /// Values in dBm; the peak power keeps the base peak-to-average ratio.
    AvgPower,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::FlightPeriod => "flight_period_s",
            SweepAxis::AvgPower => "avg_power_dbm",
        }
    }

    pub fn apply(self, base: &Scenario, value: f64) -> (Scenario, bool) {
        match self {
            SweepAxis::FlightPeriod => base.with_flight_period(value),
            SweepAxis::AvgPower => (base.with_avg_power(dbm_to_watts(value)), false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub solve: SolveOptions,
    /// Fading draws per G2U point; zero skips the Monte Carlo column.
    pub mc_samples: usize,
    /// Shared by every sweep point so that points see common fading draws.
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub scheme: Scheme,
    /// Clamped average secrecy rate (bound-based for G2U).
    pub secrecy: f64,
    /// Fading-averaged secrecy rate, G2U only.
    pub mc: Option<McEstimate>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMetadata {
    /// SHA-256 of the canonical base scenario text.
    pub scenario_hash: String,
    pub seed: u64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub slot_len_s: f64,
    pub mc_samples: usize,
    /// Axis values whose slot count was rounded.
    pub rounded: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub axis_values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// Row-major by axis value, then scheme in the given order.
    pub points: Vec<SweepPoint>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    /// Secrecy rates of one scheme along the axis.
    pub fn series(&self, scheme: Scheme) -> Vec<f64> {
        self.points.iter().filter(|p| p.scheme == scheme).map(|p| p.secrecy).collect()
    }

    pub fn mc_series(&self, scheme: Scheme) -> Vec<Option<McEstimate>> {
        self.points.iter().filter(|p| p.scheme == scheme).map(|p| p.mc).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_sweep_csv(self, out)
    }
}

/// Text form of every scenario field with round-trip float formatting.
pub fn canonical_scenario(s: &Scenario) -> String {
    let mut t = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(t, "{k}={v}");
    };
    kv("ground_pos", format!("{:?},{:?}", s.ground_pos.x, s.ground_pos.y));
    kv("eaves_pos", format!("{:?},{:?}", s.eaves_pos.x, s.eaves_pos.y));
    kv("altitude_m", format!("{:?}", s.altitude_m));
    kv("ref_snr", format!("{:?}", s.ref_snr));
    kv("v_max", format!("{:?}", s.v_max));
    kv("slot_len_s", format!("{:?}", s.slot_len_s));
    kv("num_slots", s.num_slots.to_string());
    kv("start_pos", format!("{:?},{:?}", s.start_pos.x, s.start_pos.y));
    kv("final_pos", format!("{:?},{:?}", s.final_pos.x, s.final_pos.y));
    kv("avg_power", format!("{:?}", s.avg_power));
    kv("peak_power", format!("{:?}", s.peak_power));
    kv("pathloss_exp", format!("{:?}", s.pathloss_exp));
    kv("direction", s.direction.to_string());
    t
}

pub fn scenario_hash(s: &Scenario) -> String {
    Sha256::digest(canonical_scenario(s).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Solves one scheme and reduces it to a sweep point.
pub fn evaluate_point(
    scenario: &Scenario,
    scheme: Scheme,
    axis_value: f64,
    opts: &EvalOptions,
) -> Result<(SweepPoint, SolveReport)> {
    let report = solve_benchmark(scenario, scheme, &opts.solve)?;
    let mc = match scenario.direction {
        Direction::G2U if opts.mc_samples > 0 => Some(channel::mc_secrecy_rate_g2u(
            scenario,
            &report.trajectory,
            &report.power,
            opts.mc_samples,
            opts.seed,
        )?),
        _ => None,
    };
    let point = SweepPoint {
        axis_value,
        scheme,
        secrecy: report.clamped_objective,
        mc,
        iterations: report.iterations,
        converged: report.converged,
    };
    Ok((point, report))
}

/// Evaluates every (value, scheme) pair in parallel; rows follow axis order.
pub fn sweep(
    base: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    schemes: &[Scheme],
    opts: &EvalOptions,
) -> Result<SweepResult> {
    base.ensure_valid()?;
    let scenarios: Vec<(Scenario, bool)> = values.iter().map(|&v| axis.apply(base, v)).collect();
    for (s, _) in &scenarios {
        s.ensure_valid()?;
    }
    let jobs: Vec<(usize, Scheme)> = (0..values.len())
        .flat_map(|i| schemes.iter().map(move |&sc| (i, sc)))
        .collect();
    let points = jobs
        .par_iter()
        .map(|&(i, sc)| {
            evaluate_point(&scenarios[i].0, sc, values[i], opts)
                .map(|(p, _)| p)
                .map_err(|e| Error::AtSweepPoint {
                    scheme: sc,
                    axis: axis.name(),
                    value: values[i],
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let rounded = values
        .iter()
        .zip(&scenarios)
        .filter(|(_, (_, r))| *r)
        .map(|(&v, _)| v)
        .collect();
    Ok(SweepResult {
        axis,
        axis_values: values.to_vec(),
        schemes: schemes.to_vec(),
        points,
        metadata: SweepMetadata {
            scenario_hash: scenario_hash(base),
            seed: opts.seed,
            epsilon: opts.solve.epsilon,
            max_iter: opts.solve.max_iter,
            slot_len_s: base.slot_len_s,
            mc_samples: opts.mc_samples,
            rounded,
        },
    })
}

/// Sweep over flight periods in seconds.
pub fn sweep_flight_period(
    base: &Scenario,
    periods_s: &[f64],
    schemes: &[Scheme],
    opts: &EvalOptions,
) -> Result<SweepResult> {
    sweep(base, SweepAxis::FlightPeriod, periods_s, schemes, opts)
}

/// Sweep over average powers in dBm with the peak tracking the base ratio.
pub fn sweep_avg_power(
    base: &Scenario,
    avg_dbm: &[f64],
    schemes: &[Scheme],
    opts: &EvalOptions,
) -> Result<SweepResult> {
    sweep(base, SweepAxis::AvgPower, avg_dbm, schemes, opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTraceRow {
    /// 1-based slot index.
    pub slot: usize,
    pub time_s: f64,
    pub watts: f64,
    pub d_ug_m: f64,
    pub d_ue_m: f64,
}

pub fn power_trace(scenario: &Scenario, report: &SolveReport) -> Vec<PowerTraceRow> {
    let h2 = scenario.altitude_sq();
    report
        .trajectory
        .points
        .iter()
        .zip(&report.power.powers)
        .enumerate()
        .map(|(i, (&uav, &watts))| PowerTraceRow {
            slot: i + 1,
            time_s: (i + 1) as f64 * scenario.slot_len_s,
            watts,
            d_ug_m: ((uav - scenario.ground_pos).norm_sq() + h2).sqrt(),
            d_ue_m: ((uav - scenario.eaves_pos).norm_sq() + h2).sqrt(),
        })
        .collect()
}

/// Trajectory rows, slot 0 being the start location.
pub fn write_trajectory_csv<W: Write>(scenario: &Scenario, report: &SolveReport, mut out: W) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    let points = std::iter::once(scenario.start_pos).chain(report.trajectory.points.iter().copied());
    for (k, p) in points.enumerate() {
        writeln!(
            out,
            "{k},{},{},{}",
            fmt_f64(k as f64 * scenario.slot_len_s),
            fmt_f64(p.x),
            fmt_f64(p.y)
        )?;
    }
    Ok(())
}

pub fn write_power_csv<W: Write>(rows: &[PowerTraceRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{POWER_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.slot,
            fmt_f64(r.time_s),
            fmt_f64(r.watts),
            fmt_f64(r.d_ug_m),
            fmt_f64(r.d_ue_m)
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut out: W) -> io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for p in &result.points {
        let (mc_mean, mc_se) = match p.mc {
            Some(m) => (fmt_f64(m.mean), fmt_f64(m.std_err)),
            None => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{mc_mean},{mc_se},{},{}",
            result.axis.name(),
            fmt_f64(p.axis_value),
            p.scheme,
            fmt_f64(p.secrecy),
            p.iterations,
            p.converged
        )?;
    }
    Ok(())
}
