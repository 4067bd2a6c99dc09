//! Successive convex approximation of the trajectory subproblems, and the
//! best-effort heuristic trajectory.
//!
//! For fixed power, the legitimate term `log2(1 + P/u)` is convex in the
//! squared ground distance `u` and is replaced by its tangent (a global
//! under-estimator). The eavesdropper distance `|r - e|^2` is replaced by its
//! tangent plane (a global under-estimator, hence a conservative bound on the
//! leakage). One step solves the resulting convex program around the current
//! point. The smooth objective never decreases across a step.
//!
//! The last slot is pinned to the final location. The convex program therefore
//! optimizes slots `1..N-1`, with the final location as the terminal anchor.

use std::f64::consts::LN_2;

use log::debug;

use crate::channel::{self, sq_dist};
use crate::convex_core::{self, EavesLinearization, Mobility, SubproblemSpec};
use crate::error::{Error, Result};
use crate::scenario::{Direction, Point, PowerProfile, Scenario, Trajectory};

/// Relative shrink of the eavesdropper slack toward its floor.
const T_SHRINK: f64 = 1e-6;

/// A trajectory with its slacks at their binding values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasiblePoint {
    pub trajectory: Trajectory,
    /// `|r_n - g|^2 + H^2`.
    pub u_fea: Vec<f64>,
    /// Eavesdropper slack, U2G only.
    pub t_fea: Option<Vec<f64>>,
}

/// Slacks for a trajectory: `u` at equality, `t` just inside `|r - e|^2 + H^2`.
pub fn init_slacks(scenario: &Scenario, traj: &Trajectory) -> FeasiblePoint {
    let h = scenario.altitude_m;
    let h2 = h * h;
    let u_fea = traj
        .points
        .iter()
        .map(|&r| sq_dist(r, scenario.ground_pos, h))
        .collect();
    let t_fea = (scenario.direction == Direction::U2G).then(|| {
        traj.points
            .iter()
            .map(|&r| {
                let d2 = sq_dist(r, scenario.eaves_pos, h);
                d2 - T_SHRINK * (d2 - h2)
            })
            .collect()
    });
    FeasiblePoint {
        trajectory: traj.clone(),
        u_fea,
        t_fea,
    }
}

/// Tangent of `log2(1 + p/u)` at `u_fea`, evaluated at `u`.
#[inline]
pub fn surrogate_log(u: f64, u_fea: f64, p: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    (p / u_fea).ln_1p() / LN_2 - p * (u - u_fea) / (LN_2 * (u_fea * u_fea + p * u_fea))
}

/// Slope of [`surrogate_log`] in `u`, negated.
#[inline]
fn surrogate_slope(u_fea: f64, p: f64) -> f64 {
    p / (LN_2 * (u_fea * u_fea + p * u_fea))
}

/// Convex subproblem around `point` for slots `1..N-1`.
pub fn build_subproblem(scenario: &Scenario, point: &FeasiblePoint, power: &PowerProfile) -> SubproblemSpec {
    let free = scenario.num_slots.saturating_sub(1);
    let snr = scenario.ref_snr;
    let pn: Vec<f64> = power.powers[..free].iter().map(|&p| snr * p).collect();
    let linear_u_coeffs = pn
        .iter()
        .zip(&point.u_fea)
        .map(|(&p, &u)| surrogate_slope(u, p))
        .collect();
    let (log_t_terms, t_linearization) = match scenario.direction {
        Direction::U2G => (
            Some(pn),
            Some(EavesLinearization {
                eaves: scenario.eaves_pos,
                anchors: point.trajectory.points[..free].to_vec(),
            }),
        ),
        Direction::G2U => (None, None),
    };
    SubproblemSpec {
        n_slots: free,
        linear_u_coeffs,
        log_t_terms,
        mobility: Mobility {
            start: scenario.start_pos,
            end: scenario.final_pos,
            max_step: scenario.max_step(),
        },
        ground: scenario.ground_pos,
        altitude: scenario.altitude_m,
        t_linearization,
    }
}

/// Surrogate objective (average over all slots) of a solved subproblem.
fn surrogate_value(
    scenario: &Scenario,
    point: &FeasiblePoint,
    power: &PowerProfile,
    new_points: &[Point],
    new_t: &[f64],
) -> f64 {
    let snr = scenario.ref_snr;
    let h = scenario.altitude_m;
    let ge = channel::ge_gain(scenario.d_ge(), scenario.pathloss_exp, snr);
    let n = scenario.num_slots;
    let mut total = 0.0;
    for k in 0..n {
        let p = snr * power.powers[k];
        let (r, t) = if k < new_points.len() {
            (new_points[k], new_t[k])
        } else {
            let r = point.trajectory.points[k];
            (r, sq_dist(r, scenario.eaves_pos, h))
        };
        let u = sq_dist(r, scenario.ground_pos, h);
        let legit = surrogate_log(u, point.u_fea[k], p);
        let leak = match scenario.direction {
            Direction::U2G => channel::log2_1p(p / t),
            Direction::G2U => channel::log2_1p(ge * power.powers[k]),
        };
        total += legit - leak;
    }
    total / n as f64
}

/// One SCA step for the scenario's direction.
///
/// Returns the new point and the surrogate objective it attains. If the
/// convex iterate would lower the smooth objective (possible only through
/// solver roundoff), the input point is kept.
pub fn sca_step(
    scenario: &Scenario,
    point: &FeasiblePoint,
    power: &PowerProfile,
    tol: f64,
) -> Result<(FeasiblePoint, f64)> {
    let n = scenario.num_slots;
    for actual in [point.trajectory.len(), power.len(), point.u_fea.len()] {
        if actual != n {
            return Err(Error::LengthMismatch { expected: n, actual });
        }
    }
    let before = channel::smooth_secrecy_rate(scenario, &point.trajectory, power)?;
    let unchanged = || Ok((init_slacks(scenario, &point.trajectory), before));

    let spec = build_subproblem(scenario, point, power);
    if spec.n_slots == 0 || !spec.has_interior() {
        // the only feasible path is the current one
        return unchanged();
    }
    let free = &point.trajectory.points[..spec.n_slots];
    let warm = spec.interior_point_near(free).ok_or_else(|| {
        Error::Solver(convex_core::SolveError::InfeasibleStart(
            "no strictly feasible point near the current trajectory".into(),
        ))
    })?;
    let out = convex_core::solve(&spec, &warm, tol)?;

    let mut points = out.points.clone();
    points.push(point.trajectory.points[n - 1]);
    let traj = Trajectory::new(points);
    let after = channel::smooth_secrecy_rate(scenario, &traj, power)?;
    if after < before {
        debug!("SCA step rejected: smooth objective {after:.15e} < {before:.15e}");
        return unchanged();
    }
    let surrogate = surrogate_value(scenario, point, power, &out.points, &out.t);
    Ok((init_slacks(scenario, &traj), surrogate))
}

/// [`sca_step`] for U2G; the scenario direction is overridden.
pub fn sca_step_u2g(
    scenario: &Scenario,
    point: &FeasiblePoint,
    power: &PowerProfile,
    tol: f64,
) -> Result<(FeasiblePoint, f64)> {
    let s = Scenario { direction: Direction::U2G, ..scenario.clone() };
    let point = FeasiblePoint {
        t_fea: point.t_fea.clone().or_else(|| init_slacks(&s, &point.trajectory).t_fea),
        ..point.clone()
    };
    sca_step(&s, &point, power, tol)
}

/// [`sca_step`] for G2U; the scenario direction is overridden.
pub fn sca_step_g2u(
    scenario: &Scenario,
    point: &FeasiblePoint,
    power: &PowerProfile,
    tol: f64,
) -> Result<(FeasiblePoint, f64)> {
    let s = Scenario { direction: Direction::G2U, ..scenario.clone() };
    sca_step(&s, point, power, tol)
}

/// Best-effort trajectory: fly at full speed toward the point above the
/// ground node, hover there while time allows, then fly at full speed to the
/// final location, arriving at the end of the last slot.
///
/// If the detour through the node is too long, the turn happens at the point
/// of the start-to-node segment whose detour length equals `v_max * T`.
pub fn bet_trajectory(scenario: &Scenario) -> Trajectory {
    let start = scenario.start_pos;
    let end = scenario.final_pos;
    let node = scenario.ground_pos;
    let v = scenario.v_max;
    let period = scenario.flight_period();
    let budget = v * period;

    let detour = |s: f64| {
        let w = start.lerp(node, s);
        start.dist(w) + w.dist(end)
    };
    // detour length is nondecreasing along the segment
    let turn_param = if detour(1.0) <= budget {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if detour(mid) <= budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let turn = if turn_param == 1.0 { node } else { start.lerp(node, turn_param) };
    let leg1 = start.dist(turn);
    let leg2 = turn.dist(end);
    let t1 = leg1 / v;
    let t_leave = (period - leg2 / v).max(t1);

    let points = (1..=scenario.num_slots)
        .map(|k| {
            let tau = k as f64 * scenario.slot_len_s;
            if tau < t1 {
                start.lerp(turn, v * tau / leg1)
            } else if tau <= t_leave {
                turn
            } else if leg2 > 0.0 {
                // measured back from the final location so the last slot lands on it
                end.lerp(turn, (v * (period - tau) / leg2).clamp(0.0, 1.0))
            } else {
                end
            }
        })
        .collect();
    Trajectory::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{is_feasible_trajectory, FEAS_TOL};

    fn desk(s: Scenario) -> Scenario {
        s.with_slot_len(5.0)
    }

    #[test]
    fn slacks_above_nodes() {
        let s = Scenario::case1(Direction::U2G, 400.0, -5.0);
        let traj = Trajectory::new(vec![s.ground_pos, s.eaves_pos, Point::new(100.0, 0.0)]);
        let fp = init_slacks(&s, &traj);
        assert_eq!(fp.u_fea[0], 1e4);
        let t = fp.t_fea.unwrap();
        assert_eq!(t[1], 1e4);
        assert_eq!(fp.u_fea[2], 20_000.0);
        assert!(t[2] < 20_000.0 && t[2] > 20_000.0 * (1.0 - 1e-6));
    }

    #[test]
    fn g2u_has_no_t_slack() {
        let s = Scenario::case2(Direction::G2U, 600.0, -5.0);
        assert!(init_slacks(&s, &bet_trajectory(&s)).t_fea.is_none());
    }

    #[test]
    fn surrogate_values() {
        assert!((surrogate_log(3.0, 3.0, 2.0) - (1.0f64 + 2.0 / 3.0).log2()).abs() < 1e-15);
        assert!((surrogate_log(2.0, 1.0, 1.0) - 0.2786524795555183).abs() < 1e-15);
        assert!(surrogate_log(2.0, 1.0, 1.0) <= 1.5f64.log2());
        assert_eq!(surrogate_log(5.0, 1.0, 0.0), 0.0);
    }

    #[test]
    fn bet_hovers_when_start_and_end_above_node() {
        let mut s = Scenario::case2(Direction::U2G, 20.0, -5.0);
        s.start_pos = s.ground_pos;
        s.final_pos = s.ground_pos;
        let traj = bet_trajectory(&s);
        assert!(traj.points.iter().all(|&p| p == s.ground_pos));
    }

    #[test]
    fn bet_case2_leg_lengths_and_hover() {
        let s = Scenario::case2(Direction::U2G, 600.0, -5.0);
        assert_eq!(s.num_slots, 1200);
        let leg1 = s.start_pos.dist(s.ground_pos);
        let leg2 = s.ground_pos.dist(s.final_pos);
        assert!((leg1 - 522.0153254455275).abs() < 1e-9);
        assert!((leg2 - 715.8910531638177).abs() < 1e-9);
        let traj = bet_trajectory(&s);
        let hover = traj.points.iter().filter(|&&p| p == s.ground_pos).count();
        // arrival at 174.005 s, departure at 361.37 s: slots 349..=722
        assert_eq!(hover, 374);
        assert!(is_feasible_trajectory(&s, &traj, FEAS_TOL).unwrap());
        assert_eq!(*traj.points.last().unwrap(), s.final_pos);
    }

    #[test]
    fn bet_case1_minimum_period_is_the_straight_line() {
        let s = Scenario::case1(Direction::U2G, 400.0, -5.0);
        let bet = bet_trajectory(&s);
        assert!(bet.max_distance(&Trajectory::straight_line(&s)) < 1e-9);
    }

    #[test]
    fn bet_turns_midway_when_short_of_time() {
        let s = Scenario::case1(Direction::U2G, 403.0, -5.0);
        let traj = bet_trajectory(&s);
        assert!(is_feasible_trajectory(&s, &traj, FEAS_TOL).unwrap());
        let steps = traj.step_lengths(s.start_pos, s.final_pos);
        let total: f64 = steps.iter().sum();
        // sampling cuts the corner at the turn by well under a metre
        let budget = s.v_max * s.flight_period();
        assert!(total <= budget + 1e-6 && total > budget - 1.0, "path length {total}");
        // the turn moves toward the node, never past it
        let westmost = traj.points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        assert!(westmost < 100.0 && westmost > 0.0);
    }

    #[test]
    fn zero_power_step_is_degenerate() {
        let s = desk(Scenario::case1(Direction::U2G, 500.0, -5.0));
        let fp = init_slacks(&s, &bet_trajectory(&s));
        let power = PowerProfile::constant(s.num_slots, 0.0);
        let (next, sur) = sca_step(&s, &fp, &power, 1e-8).unwrap();
        assert_eq!(sur, 0.0);
        assert!(is_feasible_trajectory(&s, &next.trajectory, FEAS_TOL).unwrap());
        assert_eq!(channel::smooth_secrecy_rate(&s, &next.trajectory, &power).unwrap(), 0.0);
    }

    #[test]
    fn minimum_period_leaves_trajectory_unchanged() {
        let s = desk(Scenario::case1(Direction::U2G, 400.0, -5.0));
        let line = Trajectory::straight_line(&s);
        let power = PowerProfile::constant(s.num_slots, s.avg_power);
        let (next, _) = sca_step(&s, &init_slacks(&s, &line), &power, 1e-8).unwrap();
        assert!(next.trajectory.max_distance(&line) <= FEAS_TOL);
    }

    #[test]
    fn u2g_step_improves_straight_line() {
        let s = desk(Scenario::case1(Direction::U2G, 500.0, -5.0));
        let line = Trajectory::straight_line(&s);
        let power = PowerProfile::constant(s.num_slots, s.avg_power);
        let before = channel::secrecy_rate_u2g_smooth(&s, &line, &power).unwrap();
        let (next, sur) = sca_step_u2g(&s, &init_slacks(&s, &line), &power, 1e-8).unwrap();
        let after = channel::secrecy_rate_u2g_smooth(&s, &next.trajectory, &power).unwrap();
        assert!(after > before, "{after} <= {before}");
        assert!(sur <= after + 1e-12);
        assert!(sur >= before - 1e-9);
        assert!(is_feasible_trajectory(&s, &next.trajectory, FEAS_TOL).unwrap());
    }

    #[test]
    fn g2u_single_free_slot_moves_toward_node() {
        let mut s = Scenario::case2(Direction::G2U, 400.0, -5.0);
        s.num_slots = 2;
        s.slot_len_s = 100.0;
        s.start_pos = Point::new(-100.0, -150.0);
        s.final_pos = Point::new(100.0, -150.0);
        let traj = Trajectory::new(vec![Point::new(-50.0, -150.0), s.final_pos]);
        let power = PowerProfile::constant(2, s.avg_power);
        let (next, _) = sca_step_g2u(&s, &init_slacks(&s, &traj), &power, 1e-8).unwrap();
        let d0 = traj.points[0].dist(s.ground_pos);
        let d1 = next.trajectory.points[0].dist(s.ground_pos);
        assert!(d1 < d0 - 1.0, "{d1} vs {d0}");
    }

    #[test]
    fn g2u_fixed_point_hovers_above_node() {
        let s = desk(Scenario::case2(Direction::G2U, 900.0, -5.0));
        let power = PowerProfile::constant(s.num_slots, s.avg_power);
        let mut fp = init_slacks(&s, &Trajectory::straight_line(&s));
        for _ in 0..60 {
            fp = sca_step(&s, &fp, &power, 1e-8).unwrap().0;
        }
        let closest = fp
            .trajectory
            .points
            .iter()
            .map(|p| p.dist(s.ground_pos))
            .fold(f64::INFINITY, f64::min);
        assert!(closest < 1.0, "closest approach {closest}");
    }
}
