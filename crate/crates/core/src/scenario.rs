//! Problem instances and the per-slot decision variables.
//!
//! Time is discretized into `num_slots` slots of `slot_len_s` seconds. The
//! UAV position of slot `n` is its horizontal position at the end of that
//! slot, so the UAV must sit at `final_pos` in the last slot. Every step
//! (start to slot 1, slot to slot) is bounded by the per-slot reach
//! `D = v_max * slot_len_s`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Default feasibility tolerance on step lengths, in meters.
pub const FEAS_TOL: f64 = 1e-6;

/// Horizontal coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Linear interpolation, `s = 0` gives `self`.
    pub fn lerp(self, other: Point, s: f64) -> Point {
        self + (other - self) * s
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Link direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// UAV transmits to the ground node; both links are LoS and trajectory dependent.
    U2G,
    /// Ground node transmits to the UAV; the eavesdropper link is fixed with Rayleigh fading.
    G2U,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::U2G => "u2g",
            Direction::G2U => "g2u",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "u2g" => Ok(Direction::U2G),
            "g2u" => Ok(Direction::G2U),
            other => Err(format!("unknown direction `{other}` (expected u2g or g2u)")),
        }
    }
}

/// A violated scenario invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    InfeasibleEndpoints { distance: f64, reach: f64 },
    BadPowerBudget { avg: f64, peak: f64 },
    NonPositive { field: &'static str, value: f64 },
    NonFinite { field: &'static str },
    BadPathlossExponent(f64),
    CoLocatedEavesdropper,
    NoSlots,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::InfeasibleEndpoints { distance, reach } => write!(
                f,
                "infeasible endpoints: distance {distance} m exceeds v_max*T = {reach} m"
            ),
            ScenarioError::BadPowerBudget { avg, peak } => write!(
                f,
                "bad power budget: average {avg} W must be below peak {peak} W"
            ),
            ScenarioError::NonPositive { field, value } => {
                write!(f, "{field} must be positive, got {value}")
            }
            ScenarioError::NonFinite { field } => write!(f, "{field} is not finite"),
            ScenarioError::BadPathlossExponent(k) => {
                write!(f, "path-loss exponent must be >= 2, got {k}")
            }
            ScenarioError::CoLocatedEavesdropper => {
                write!(f, "ground node and eavesdropper are co-located")
            }
            ScenarioError::NoSlots => write!(f, "number of slots must be at least 1"),
        }
    }
}

/// Immutable problem instance shared by every solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ground_pos: Point,
    pub eaves_pos: Point,
    pub altitude_m: f64,
    /// Reference SNR at 1 m per Watt, linear scale.
    pub ref_snr: f64,
    pub v_max: f64,
    pub slot_len_s: f64,
    pub num_slots: usize,
    pub start_pos: Point,
    pub final_pos: Point,
    /// Average transmit power budget, Watts.
    pub avg_power: f64,
    /// Peak transmit power, Watts.
    pub peak_power: f64,
    /// Ground-to-eavesdropper path-loss exponent (G2U only).
    pub pathloss_exp: f64,
    pub direction: Direction,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Number of slots for a flight period, rounded to the nearest integer.
///
/// Returns the slot count and whether `period_s` was not an exact multiple of
/// `slot_len_s`.
pub fn slots_for_period(period_s: f64, slot_len_s: f64) -> (usize, bool) {
    let ratio = period_s / slot_len_s;
    let n = ratio.round();
    (n.max(0.0) as usize, (ratio - n).abs() > 1e-9 * ratio.abs().max(1.0))
}

impl Scenario {
    /// Common parameters of the two reference geometries: node at the origin,
    /// eavesdropper 200 m east, 100 m altitude, 80 dB reference SNR, 3 m/s,
    /// 0.5 s slots, peak power four times the average, path-loss exponent 3.
    fn reference(direction: Direction, start: Point, end: Point, period_s: f64, avg_dbm: f64) -> Self {
        let slot_len_s = 0.5;
        let avg_power = dbm_to_watts(avg_dbm);
        Scenario {
            ground_pos: Point::new(0.0, 0.0),
            eaves_pos: Point::new(200.0, 0.0),
            altitude_m: 100.0,
            ref_snr: db_to_linear(80.0),
            v_max: 3.0,
            slot_len_s,
            num_slots: slots_for_period(period_s, slot_len_s).0,
            start_pos: start,
            final_pos: end,
            avg_power,
            peak_power: 4.0 * avg_power,
            pathloss_exp: 3.0,
            direction,
        }
    }

    /// Endpoints on the perpendicular bisector of node and eavesdropper.
    pub fn case1(direction: Direction, period_s: f64, avg_dbm: f64) -> Self {
        Self::reference(
            direction,
            Point::new(100.0, 600.0),
            Point::new(100.0, -600.0),
            period_s,
            avg_dbm,
        )
    }

    /// Endpoints on a line parallel to the node-eavesdropper axis.
    pub fn case2(direction: Direction, period_s: f64, avg_dbm: f64) -> Self {
        Self::reference(
            direction,
            Point::new(-500.0, -150.0),
            Point::new(700.0, -150.0),
            period_s,
            avg_dbm,
        )
    }

    /// Maximum horizontal distance per slot, `D = v_max * slot_len_s`.
    pub fn max_step(&self) -> f64 {
        self.v_max * self.slot_len_s
    }

    pub fn flight_period(&self) -> f64 {
        self.num_slots as f64 * self.slot_len_s
    }

    /// Horizontal distance between ground node and eavesdropper.
    pub fn d_ge(&self) -> f64 {
        self.ground_pos.dist(self.eaves_pos)
    }

    pub fn altitude_sq(&self) -> f64 {
        self.altitude_m * self.altitude_m
    }

    /// Same scenario with the flight period changed; slot length is kept and
    /// the slot count rounded. The flag reports whether rounding occurred.
    pub fn with_flight_period(&self, period_s: f64) -> (Scenario, bool) {
        let (n, rounded) = slots_for_period(period_s, self.slot_len_s);
        (Scenario { num_slots: n, ..self.clone() }, rounded)
    }

    /// Same scenario with a new average power, keeping the peak-to-average ratio.
    pub fn with_avg_power(&self, avg_power: f64) -> Scenario {
        let ratio = self.peak_power / self.avg_power;
        Scenario {
            avg_power,
            peak_power: ratio * avg_power,
            ..self.clone()
        }
    }

    /// Same physical scenario with a different slot length; the flight period
    /// is preserved by rounding the slot count.
    pub fn with_slot_len(&self, slot_len_s: f64) -> Scenario {
        let period = self.flight_period();
        let (n, _) = slots_for_period(period, slot_len_s);
        Scenario {
            slot_len_s,
            num_slots: n,
            ..self.clone()
        }
    }

    /// Every violated invariant, or `Ok(())`.
    pub fn validate(&self) -> std::result::Result<(), Vec<ScenarioError>> {
        let mut errs = Vec::new();
        let finite = [
            ("ground_pos", self.ground_pos.x.is_finite() && self.ground_pos.y.is_finite()),
            ("eaves_pos", self.eaves_pos.x.is_finite() && self.eaves_pos.y.is_finite()),
            ("start_pos", self.start_pos.x.is_finite() && self.start_pos.y.is_finite()),
            ("final_pos", self.final_pos.x.is_finite() && self.final_pos.y.is_finite()),
        ];
        for (field, ok) in finite {
            if !ok {
                errs.push(ScenarioError::NonFinite { field });
            }
        }
        let positive = [
            ("altitude_m", self.altitude_m),
            ("ref_snr", self.ref_snr),
            ("v_max", self.v_max),
            ("slot_len_s", self.slot_len_s),
            ("avg_power", self.avg_power),
            ("peak_power", self.peak_power),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                errs.push(ScenarioError::NonPositive { field, value });
            }
        }
        if self.num_slots == 0 {
            errs.push(ScenarioError::NoSlots);
        }
        if !(self.avg_power < self.peak_power) {
            errs.push(ScenarioError::BadPowerBudget {
                avg: self.avg_power,
                peak: self.peak_power,
            });
        }
        if !(self.pathloss_exp >= 2.0) {
            errs.push(ScenarioError::BadPathlossExponent(self.pathloss_exp));
        }
        if self.d_ge() == 0.0 {
            errs.push(ScenarioError::CoLocatedEavesdropper);
        }
        let distance = self.start_pos.dist(self.final_pos);
        let reach = self.v_max * self.flight_period();
        // relative slack so that the exact minimum period is accepted
        if distance > reach * (1.0 + 1e-12) {
            errs.push(ScenarioError::InfeasibleEndpoints { distance, reach });
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().map_err(Error::Validation)
    }
}

/// Per-slot horizontal UAV positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Point>,
}

impl Trajectory {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    /// Uniform-speed straight line from start to final, ending on `final_pos`.
    pub fn straight_line(scenario: &Scenario) -> Self {
        let n = scenario.num_slots;
        let points = (1..=n)
            .map(|k| scenario.start_pos.lerp(scenario.final_pos, k as f64 / n as f64))
            .collect();
        Self { points }
    }

    /// Largest pointwise distance to another trajectory of the same length.
    pub fn max_distance(&self, other: &Trajectory) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max)
    }

    /// Lengths of the N+1 steps: start to slot 1, slot to slot, slot N to final.
    pub fn step_lengths(&self, start: Point, end: Point) -> Vec<f64> {
        let mut prev = start;
        let mut steps = Vec::with_capacity(self.points.len() + 1);
        for &p in &self.points {
            steps.push(p.dist(prev));
            prev = p;
        }
        steps.push(end.dist(prev));
        steps
    }
}

/// Checks the N+1 mobility constraints within `tol` meters.
pub fn is_feasible_trajectory(scenario: &Scenario, traj: &Trajectory, tol: f64) -> Result<bool> {
    if traj.len() != scenario.num_slots {
        return Err(Error::LengthMismatch {
            expected: scenario.num_slots,
            actual: traj.len(),
        });
    }
    let d = scenario.max_step();
    Ok(traj
        .step_lengths(scenario.start_pos, scenario.final_pos)
        .into_iter()
        .all(|s| s <= d + tol))
}

/// Per-slot transmit power in Watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    pub powers: Vec<f64>,
}

impl PowerProfile {
    pub fn new(powers: Vec<f64>) -> Self {
        Self { powers }
    }

    pub fn constant(num_slots: usize, watts: f64) -> Self {
        Self {
            powers: vec![watts; num_slots],
        }
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.powers.is_empty() {
            return 0.0;
        }
        self.powers.iter().sum::<f64>() / self.powers.len() as f64
    }

    /// Peak and average constraints, the average within `tol` Watts.
    pub fn is_feasible(&self, avg_power: f64, peak_power: f64, tol: f64) -> bool {
        self.powers.iter().all(|&p| (0.0..=peak_power).contains(&p)) && self.mean() <= avg_power + tol
    }
}
