//! Joint trajectory and power optimization, and the benchmark schemes.

use std::fmt;
use std::str::FromStr;

use log::{debug, info};

use crate::channel;
use crate::convex_core::DEFAULT_TOL;
use crate::error::{Error, Result};
use crate::power_control::{optimal_power, PowerInstance};
use crate::scenario::{PowerProfile, Scenario, Trajectory};
use crate::trajectory_sca::{bet_trajectory, init_slacks, sca_step, FeasiblePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Joint trajectory optimization and power control.
    TOptWithPc,
    /// Trajectory optimization with constant power.
    TOptWithoutPc,
    /// Best-effort trajectory with optimal power.
    BetWithPc,
    /// Best-effort trajectory with constant power.
    BetWithoutPc,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::TOptWithPc,
        Scheme::TOptWithoutPc,
        Scheme::BetWithPc,
        Scheme::BetWithoutPc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TOptWithPc => "T-OPT-With-PC",
            Scheme::TOptWithoutPc => "T-OPT-Without-PC",
            Scheme::BetWithPc => "BET-With-PC",
            Scheme::BetWithoutPc => "BET-Without-PC",
        }
    }

    pub fn optimizes_trajectory(self) -> bool {
        matches!(self, Scheme::TOptWithPc | Scheme::TOptWithoutPc)
    }

    pub fn controls_power(self) -> bool {
        matches!(self, Scheme::TOptWithPc | Scheme::BetWithPc)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                format!(
                    "unknown scheme `{s}` (expected one of {})",
                    Scheme::ALL.map(Scheme::name).join(", ")
                )
            })
    }
}

/// Which block is updated first inside one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BcdOrder {
    #[default]
    TrajectoryFirst,
    PowerFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative-improvement stopping threshold.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Duality-gap tolerance of each convex iterate.
    pub solver_tol: f64,
    pub order: BcdOrder,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iter: 200,
            solver_tol: DEFAULT_TOL,
            order: BcdOrder::TrajectoryFirst,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    pub power: PowerProfile,
    /// Smooth (unclamped) average secrecy rate, starting with the initial point.
    pub objective_history: Vec<f64>,
    /// Average secrecy rate with per-slot clamp at the final point.
    pub clamped_objective: f64,
    pub iterations: usize,
    pub scheme: Scheme,
    pub converged: bool,
}

impl SolveReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::NAN)
    }
}

/// Relative improvement below `epsilon`; absolute when the objective is not positive.
pub fn has_converged(prev: f64, curr: f64, epsilon: f64) -> bool {
    let gain = curr - prev;
    if curr > 0.0 {
        gain / curr < epsilon
    } else {
        gain < epsilon
    }
}

fn optimal_profile(scenario: &Scenario, traj: &Trajectory) -> Result<PowerProfile> {
    Ok(optimal_power(&PowerInstance::from_trajectory(scenario, traj)?).profile)
}

fn report(
    scenario: &Scenario,
    scheme: Scheme,
    trajectory: Trajectory,
    power: PowerProfile,
    objective_history: Vec<f64>,
    iterations: usize,
    converged: bool,
) -> Result<SolveReport> {
    let clamped_objective = channel::secrecy_rate(scenario, &trajectory, &power)?;
    Ok(SolveReport {
        trajectory,
        power,
        objective_history,
        clamped_objective,
        iterations,
        scheme,
        converged,
    })
}

/// Alternating optimization from the best-effort trajectory with constant
/// power: a trajectory SCA step, then the closed-form power update (or the
/// reverse with [`BcdOrder::PowerFirst`]), until the smooth objective stops
/// improving. With `control_power = false` the power stays constant and only
/// the trajectory steps run.
fn run_bcd(
    scenario: &Scenario,
    scheme: Scheme,
    control_power: bool,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    scenario.ensure_valid()?;
    let mut power = PowerProfile::constant(scenario.num_slots, scenario.avg_power);
    let mut point: FeasiblePoint = init_slacks(scenario, &bet_trajectory(scenario));
    let mut history = vec![channel::smooth_secrecy_rate(scenario, &point.trajectory, &power)?];
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=opts.max_iter {
        iterations = k;
        let at = |source: Error| Error::AtIteration { scheme, iteration: k, source: Box::new(source) };
        match opts.order {
            BcdOrder::TrajectoryFirst => {
                point = sca_step(scenario, &point, &power, opts.solver_tol).map_err(at)?.0;
                if control_power {
                    power = optimal_profile(scenario, &point.trajectory).map_err(at)?;
                }
            }
            BcdOrder::PowerFirst => {
                if control_power {
                    power = optimal_profile(scenario, &point.trajectory).map_err(at)?;
                }
                point = sca_step(scenario, &point, &power, opts.solver_tol).map_err(at)?.0;
            }
        }
        let r = channel::smooth_secrecy_rate(scenario, &point.trajectory, &power)?;
        if !r.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: k });
        }
        let prev = *history.last().expect("history starts non-empty");
        history.push(r);
        debug!("{scheme} iteration {k}: objective {r:.12}");
        if has_converged(prev, r, opts.epsilon) {
            converged = true;
            break;
        }
    }
    info!(
        "{scheme}: {iterations} iterations, objective {:.6} bps/Hz, converged {converged}",
        history.last().unwrap()
    );
    report(scenario, scheme, point.trajectory, power, history, iterations, converged)
}

/// The joint algorithm (T-OPT-With-PC).
pub fn solve_joint(scenario: &Scenario, opts: &SolveOptions) -> Result<SolveReport> {
    run_bcd(scenario, Scheme::TOptWithPc, true, opts)
}

/// Any scheme; [`Scheme::TOptWithPc`] delegates to [`solve_joint`].
pub fn solve_benchmark(scenario: &Scenario, scheme: Scheme, opts: &SolveOptions) -> Result<SolveReport> {
    match scheme {
        Scheme::TOptWithPc => solve_joint(scenario, opts),
        Scheme::TOptWithoutPc => run_bcd(scenario, scheme, false, opts),
        Scheme::BetWithPc | Scheme::BetWithoutPc => {
            scenario.ensure_valid()?;
            let traj = bet_trajectory(scenario);
            let power = if scheme == Scheme::BetWithPc {
                optimal_profile(scenario, &traj)?
            } else {
                PowerProfile::constant(scenario.num_slots, scenario.avg_power)
            };
            let r = channel::smooth_secrecy_rate(scenario, &traj, &power)?;
            report(scenario, scheme, traj, power, vec![r], 0, true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{is_feasible_trajectory, Direction, Point, FEAS_TOL};

    fn desk(s: Scenario) -> Scenario {
        s.with_slot_len(5.0)
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("T-OPT".parse::<Scheme>().is_err());
    }

    #[test]
    fn stopping_rule() {
        assert!(has_converged(1.0, 1.00001, 1e-4));
        assert!(!has_converged(1.0, 1.1, 1e-4));
        // nonpositive objective falls back to absolute improvement
        assert!(has_converged(-1.0, -0.99999, 1e-4));
        assert!(!has_converged(-1.0, -0.5, 1e-4));
    }

    #[test]
    fn bet_without_pc_is_constant_power_on_bet() {
        let s = desk(Scenario::case2(Direction::U2G, 600.0, -5.0));
        let r = solve_benchmark(&s, Scheme::BetWithoutPc, &SolveOptions::default()).unwrap();
        assert!(r.power.powers.iter().all(|&p| p == s.avg_power));
        assert_eq!(r.trajectory, bet_trajectory(&s));
    }

    #[test]
    fn g2u_bet_with_pc_uses_constant_eavesdropper_gain() {
        let s = desk(Scenario::case2(Direction::G2U, 500.0, -5.0));
        let r = solve_benchmark(&s, Scheme::BetWithPc, &SolveOptions::default()).unwrap();
        let b = channel::ge_gain(s.d_ge(), s.pathloss_exp, s.ref_snr);
        let a: Vec<f64> = r
            .trajectory
            .points
            .iter()
            .map(|&p| s.ref_snr / channel::sq_dist(p, s.ground_pos, s.altitude_m))
            .collect();
        let inst = PowerInstance::new(a, vec![b; s.num_slots], s.avg_power, s.peak_power).unwrap();
        assert_eq!(r.power, optimal_power(&inst).profile);
    }

    #[test]
    fn joint_is_monotone_and_feasible() {
        let s = desk(Scenario::case2(Direction::U2G, 500.0, -5.0));
        let r = solve_joint(&s, &SolveOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.objective_history.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(is_feasible_trajectory(&s, &r.trajectory, FEAS_TOL).unwrap());
        assert!(r.power.is_feasible(s.avg_power, s.peak_power, 1e-9 * s.avg_power));
        let bet = solve_benchmark(&s, Scheme::BetWithoutPc, &SolveOptions::default()).unwrap();
        assert!(r.final_objective() >= bet.final_objective() - 1e-9);
    }

    #[test]
    fn mirrored_geometry_gives_mirrored_trajectory() {
        let s = desk(Scenario::case1(Direction::U2G, 500.0, -5.0));
        let m = Scenario {
            ground_pos: s.eaves_pos,
            eaves_pos: s.ground_pos,
            ..s.clone()
        };
        let opts = SolveOptions::default();
        let a = solve_joint(&s, &opts).unwrap();
        let b = solve_joint(&m, &opts).unwrap();
        let mirrored = Trajectory::new(
            b.trajectory
                .points
                .iter()
                .map(|p| Point::new(200.0 - p.x, p.y))
                .collect(),
        );
        assert!(a.trajectory.max_distance(&mirrored) < 1e-3);
        assert!((a.clamped_objective - b.clamped_objective).abs() < 1e-9);
    }

    #[test]
    fn invalid_scenario_is_rejected() {
        let mut s = desk(Scenario::case1(Direction::U2G, 400.0, -5.0));
        s.num_slots -= 1;
        assert!(matches!(
            solve_joint(&s, &SolveOptions::default()),
            Err(Error::Validation(_))
        ));
    }
}
