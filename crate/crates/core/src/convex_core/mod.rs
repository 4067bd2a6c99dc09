//! Log-barrier interior-point solver for the convex trajectory subproblems.
//!
//! A subproblem has free positions `r_1..r_n`. It carries the mobility chain
//! `|r_1 - start|, |r_{k+1} - r_k|, |end - r_n| <= D` and the minimization
//! objective
//!
//! ```text
//!   sum_n c_n u_n + sum_n log2(1 + P_n / t_n)
//!   u_n >= |r_n - g|^2 + H^2
//!   H^2 <= t_n <= L_n(r_n)
//! ```
//!
//! where `L_n` is the first-order upper bound of `|r_n - e|^2 + H^2` taken at
//! the linearization anchor. Both slacks bind at the optimum (the objective
//! increases in `u_n` and decreases in `t_n`), so the solver works on positions
//! only: `u_n` becomes a convex quadratic and `t_n = L_n(r_n)` an affine
//! argument of a convex function, with the floor `L_n(r_n) >= H^2` kept as a
//! barrier. The Newton system couples only consecutive slots, so it is banded
//! with bandwidth 3 and every step costs O(n).

mod banded;

use std::f64::consts::LN_2;

use thiserror::Error;

pub use banded::{BandedCholesky, SymBanded};

use crate::scenario::Point;

/// Backtracking parameters.
const ARMIJO_ALPHA: f64 = 0.25;
const ARMIJO_BETA: f64 = 0.5;
/// Barrier weight growth per outer stage.
const MU_GROWTH: f64 = 10.0;
const MAX_OUTER: usize = 64;
const MAX_NEWTON_PER_STAGE: usize = 200;
/// Half squared Newton decrement below which a stage counts as centered.
const CENTERING_TOL: f64 = 1e-10;
/// Smallest initial duality gap relative to the objective magnitude.
const MIN_INITIAL_GAP: f64 = 1e-2;
/// Relative rounding level of the merit value.
const MERIT_REL_EPS: f64 = 1e-15;
/// Looser threshold used once the merit stops decreasing at working precision.
const ROUNDOFF_CENTERING_TOL: f64 = 1e-6;
/// Anchors closer than this (relative to H^2) to the eavesdropper make `L_n`
/// constant; the log term and its floor are then dropped.
const DEGENERATE_ANCHOR: f64 = 1e-12;
/// Relative slack a start point should keep from every constraint.
const START_MARGIN: f64 = 1e-6;

pub const DEFAULT_TOL: f64 = 1e-8;

/// Start and end anchors with the per-step reach `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobility {
    pub start: Point,
    pub end: Point,
    pub max_step: f64,
}

/// First-order bound of the UAV-eavesdropper squared distance:
/// `L_n(r) = |a_n - e|^2 + H^2 + 2 (a_n - e) . (r - a_n)`, never above the true value.
#[derive(Debug, Clone, PartialEq)]
pub struct EavesLinearization {
    pub eaves: Point,
    pub anchors: Vec<Point>,
}

/// One convex iterate of the trajectory subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSpec {
    pub n_slots: usize,
    /// Weight `c_n >= 0` of the ground-distance slack `u_n`.
    pub linear_u_coeffs: Vec<f64>,
    /// `P_n` of the `log2(1 + P_n / t_n)` terms; `None` for the QCQP family.
    pub log_t_terms: Option<Vec<f64>>,
    pub mobility: Mobility,
    pub ground: Point,
    pub altitude: f64,
    /// Required whenever `log_t_terms` is present.
    pub t_linearization: Option<EavesLinearization>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Minimization objective at the returned point.
    pub objective: f64,
    /// `m / mu`, the barrier's complementarity bound.
    pub duality_gap: f64,
    /// Infinity norm of the Lagrangian gradient with barrier multipliers.
    pub stationarity: f64,
    /// Largest constraint value `g_i(x)` (nonpositive when feasible).
    pub max_violation: f64,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// Objective at the end of each outer stage.
    pub stage_objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub points: Vec<Point>,
    /// Eavesdropper slack: `L_n(r_n)` on log-term slots, the true squared distance elsewhere.
    pub t: Vec<f64>,
    /// Ground slack at its binding value `|r_n - g|^2 + H^2`.
    pub u: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("warm start is not strictly feasible ({0})")]
    InfeasibleStart(String),
    #[error("iteration limit reached (gap {:.3e})", .best.diagnostics.duality_gap)]
    MaxIterations { best: Box<SolveOutput> },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("malformed subproblem: {0}")]
    Malformed(String),
}

/// One active `log2(1 + P/L(r))` term with its floor `L(r) >= H^2`.
#[derive(Debug, Clone, Copy)]
struct LogTerm {
    slot: usize,
    p: f64,
    /// Gradient of `L` with respect to the slot position.
    w: Point,
    /// `L(r) = base + w . r`.
    base: f64,
}

impl LogTerm {
    #[inline]
    fn l(&self, r: Point) -> f64 {
        self.base + self.w.dot(r)
    }
}

impl SubproblemSpec {
    fn check(&self) -> Result<(), SolveError> {
        let bad = |m: String| Err(SolveError::Malformed(m));
        if self.linear_u_coeffs.len() != self.n_slots {
            return bad(format!("{} u coefficients for {} slots", self.linear_u_coeffs.len(), self.n_slots));
        }
        if self.linear_u_coeffs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return bad("u coefficients must be nonnegative".into());
        }
        if !(self.mobility.max_step > 0.0) || !(self.altitude > 0.0) {
            return bad("step bound and altitude must be positive".into());
        }
        if let Some(p) = &self.log_t_terms {
            if p.len() != self.n_slots || p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad("log terms must be nonnegative, one per slot".into());
            }
            match &self.t_linearization {
                Some(lin) if lin.anchors.len() == self.n_slots => {}
                _ => return bad("log terms need one linearization anchor per slot".into()),
            }
        }
        Ok(())
    }

    fn log_terms(&self) -> Vec<LogTerm> {
        let (Some(ps), Some(lin)) = (&self.log_t_terms, &self.t_linearization) else {
            return Vec::new();
        };
        let h2 = self.altitude * self.altitude;
        ps.iter()
            .zip(&lin.anchors)
            .enumerate()
            .filter_map(|(slot, (&p, &a))| {
                let delta = a - lin.eaves;
                if p <= 0.0 || delta.norm_sq() <= DEGENERATE_ANCHOR * h2 {
                    return None;
                }
                let w = delta * 2.0;
                // L(r) = H^2 - |delta|^2 + 2 delta . (r - e)
                let base = h2 - delta.norm_sq() - w.dot(lin.eaves);
                Some(LogTerm { slot, p, w, base })
            })
            .collect()
    }

    /// Upper bound `L_n(r)` of the eavesdropper squared distance at slot `n`.
    pub fn linearized_t_bound(&self, slot: usize, r: Point) -> Option<f64> {
        let lin = self.t_linearization.as_ref()?;
        let delta = lin.anchors[slot] - lin.eaves;
        Some(self.altitude * self.altitude - delta.norm_sq() + 2.0 * delta.dot(r - lin.eaves))
    }

    fn u_value(&self, r: Point) -> f64 {
        (r - self.ground).norm_sq() + self.altitude * self.altitude
    }

    /// Minimization objective with both slacks at their binding values.
    pub fn objective(&self, points: &[Point]) -> f64 {
        let quad: f64 = self
            .linear_u_coeffs
            .iter()
            .zip(points)
            .map(|(&c, &r)| if c > 0.0 { c * self.u_value(r) } else { 0.0 })
            .sum();
        let logs: f64 = self
            .log_terms()
            .iter()
            .map(|lt| (lt.p / lt.l(points[lt.slot])).ln_1p() / LN_2)
            .sum();
        quad + logs
    }

    /// Largest constraint value over the mobility chain and the `t` floors.
    pub fn max_violation(&self, points: &[Point]) -> f64 {
        let problem = Problem::new(self);
        let mut worst = f64::NEG_INFINITY;
        problem.for_each_slack(points, |s| worst = worst.max(-s));
        worst
    }

    /// Whether the mobility chain has an interior: the anchors must be
    /// strictly closer than `(n + 1) D`.
    pub fn has_interior(&self) -> bool {
        let chord = self.mobility.start.dist(self.mobility.end);
        chord < (self.n_slots + 1) as f64 * self.mobility.max_step * (1.0 - 1e-12)
    }

    /// A strictly feasible point close to `points`: a small blend toward the
    /// uniform segment between the anchors, which is strictly inside every
    /// step bound. `None` if no such blend is strictly feasible.
    pub fn interior_point_near(&self, points: &[Point]) -> Option<Vec<Point>> {
        if points.len() != self.n_slots || !self.has_interior() {
            return None;
        }
        let problem = Problem::new(self);
        if problem.min_relative_slack(points) >= START_MARGIN {
            return Some(points.to_vec());
        }
        let m = &self.mobility;
        let line: Vec<Point> = (0..self.n_slots)
            .map(|k| m.start.lerp(m.end, (k + 1) as f64 / (self.n_slots + 1) as f64))
            .collect();
        // cap the blend so that no floor constraint is crossed
        let mut theta: f64 = 1e-3;
        for lt in &problem.logs {
            let r = points[lt.slot];
            let s0 = lt.l(r) - problem.h2;
            let ds = lt.w.dot(line[lt.slot] - r);
            if ds < 0.0 && s0 > 0.0 {
                theta = theta.min(0.5 * s0 / -ds);
            }
        }
        let blend = |theta: f64| -> Vec<Point> {
            points.iter().zip(&line).map(|(&p, &l)| p.lerp(l, theta)).collect()
        };
        // shrinking blends suit a start on the boundary, growing ones an infeasible start
        let shrinking = (0..60).map(|k| theta * 0.5f64.powi(k));
        let growing = (1..)
            .map(|k| theta * 2f64.powi(k))
            .take_while(|&t| t < 1.0)
            .chain([1.0]);
        let candidates: Vec<Vec<Point>> = shrinking.chain(growing).map(blend).collect();
        // Newton steps off a near-zero slack fall below the coordinate resolution
        candidates
            .iter()
            .find(|c| problem.min_relative_slack(c) >= START_MARGIN)
            .or_else(|| candidates.iter().find(|c| problem.strictly_feasible(c)))
            .cloned()
    }
}

/// Flattened solver view of a spec.
struct Problem<'a> {
    spec: &'a SubproblemSpec,
    logs: Vec<LogTerm>,
    d2: f64,
    h2: f64,
}

impl<'a> Problem<'a> {
    fn new(spec: &'a SubproblemSpec) -> Self {
        Self {
            spec,
            logs: spec.log_terms(),
            d2: spec.mobility.max_step * spec.mobility.max_step,
            h2: spec.altitude * spec.altitude,
        }
    }

    fn n_constraints(&self) -> usize {
        self.spec.n_slots + 1 + self.logs.len()
    }

    #[inline]
    fn node(&self, points: &[Point], j: usize) -> Point {
        // node 0 is the start anchor, node n + 1 the end anchor
        let n = self.spec.n_slots;
        if j == 0 {
            self.spec.mobility.start
        } else if j == n + 1 {
            self.spec.mobility.end
        } else {
            points[j - 1]
        }
    }

    fn for_each_slack(&self, points: &[Point], mut f: impl FnMut(f64)) {
        for j in 0..=self.spec.n_slots {
            let delta = self.node(points, j + 1) - self.node(points, j);
            f(self.d2 - delta.norm_sq());
        }
        for lt in &self.logs {
            f(lt.l(points[lt.slot]) - self.h2);
        }
    }

    /// Smallest slack, mobility slacks relative to `D^2` and floors to `H^2`.
    fn min_relative_slack(&self, points: &[Point]) -> f64 {
        let n_mobility = self.spec.n_slots + 1;
        let mut k = 0;
        let mut worst = f64::INFINITY;
        self.for_each_slack(points, |s| {
            let scale = if k < n_mobility { self.d2 } else { self.h2 };
            worst = worst.min(s / scale);
            k += 1;
        });
        worst
    }

    fn strictly_feasible(&self, points: &[Point]) -> bool {
        let mut ok = true;
        self.for_each_slack(points, |s| ok &= s > 0.0);
        ok
    }

    /// Barrier-augmented value `mu f0 - sum ln s`, infinite outside the domain.
    fn merit(&self, points: &[Point], mu: f64) -> f64 {
        let mut barrier = 0.0;
        let mut feasible = true;
        self.for_each_slack(points, |s| {
            if s > 0.0 {
                barrier -= s.ln();
            } else {
                feasible = false;
            }
        });
        if !feasible {
            return f64::INFINITY;
        }
        mu * self.spec.objective(points) + barrier
    }

    /// Gradients of the objective and of the barrier, separately.
    fn gradients(&self, points: &[Point]) -> (Vec<f64>, Vec<f64>) {
        let n = self.spec.n_slots;
        let mut g_obj = vec![0.0; 2 * n];
        let mut g_bar = vec![0.0; 2 * n];
        for (i, (&c, &r)) in self.spec.linear_u_coeffs.iter().zip(points).enumerate() {
            let d = (r - self.spec.ground) * (2.0 * c);
            g_obj[2 * i] += d.x;
            g_obj[2 * i + 1] += d.y;
        }
        for lt in &self.logs {
            let l = lt.l(points[lt.slot]);
            let dh = (1.0 / (l + lt.p) - 1.0 / l) / LN_2;
            g_obj[2 * lt.slot] += dh * lt.w.x;
            g_obj[2 * lt.slot + 1] += dh * lt.w.y;
            let s = l - self.h2;
            g_bar[2 * lt.slot] -= lt.w.x / s;
            g_bar[2 * lt.slot + 1] -= lt.w.y / s;
        }
        for j in 0..=n {
            let delta = self.node(points, j + 1) - self.node(points, j);
            let s = self.d2 - delta.norm_sq();
            let g = delta * (2.0 / s);
            if j >= 1 {
                // node j is slot j - 1
                g_bar[2 * (j - 1)] -= g.x;
                g_bar[2 * (j - 1) + 1] -= g.y;
            }
            if j < n {
                g_bar[2 * j] += g.x;
                g_bar[2 * j + 1] += g.y;
            }
        }
        (g_obj, g_bar)
    }

    fn hessian(&self, points: &[Point], mu: f64, h: &mut SymBanded) {
        h.clear();
        let n = self.spec.n_slots;
        for (i, &c) in self.spec.linear_u_coeffs.iter().enumerate() {
            h.add(2 * i, 2 * i, 2.0 * mu * c);
            h.add(2 * i + 1, 2 * i + 1, 2.0 * mu * c);
        }
        for lt in &self.logs {
            let l = lt.l(points[lt.slot]);
            let d2h = (1.0 / (l * l) - 1.0 / ((l + lt.p) * (l + lt.p))) / LN_2;
            let s = l - self.h2;
            let k = mu * d2h + 1.0 / (s * s);
            add_outer(h, lt.slot, lt.slot, lt.w, lt.w, k);
        }
        for j in 0..=n {
            let delta = self.node(points, j + 1) - self.node(points, j);
            let s = self.d2 - delta.norm_sq();
            // Hessian of -ln(D^2 - |delta|^2) in delta: 2I/s + 4 delta delta^T / s^2
            let diag = 2.0 / s;
            let rank1 = 4.0 / (s * s);
            let blk = [
                diag + rank1 * delta.x * delta.x,
                rank1 * delta.x * delta.y,
                diag + rank1 * delta.y * delta.y,
            ];
            let a = j.checked_sub(1); // slot of node j
            let b = (j < n).then_some(j); // slot of node j + 1
            for slot in [a, b].into_iter().flatten() {
                add_block(h, slot, slot, blk, 1.0);
            }
            if let (Some(a), Some(b)) = (a, b) {
                add_block(h, b, a, blk, -1.0);
            }
        }
    }
}

fn add_outer(h: &mut SymBanded, si: usize, sj: usize, u: Point, v: Point, k: f64) {
    add_block(h, si, sj, [k * u.x * v.x, k * u.x * v.y, k * u.y * v.y], 1.0);
}

/// Adds a symmetric 2x2 block `[[b0, b1], [b1, b2]]` at slots `(si, sj)`, `si >= sj`.
fn add_block(h: &mut SymBanded, si: usize, sj: usize, b: [f64; 3], sign: f64) {
    let (i, j) = (2 * si, 2 * sj);
    h.add(i, j, sign * b[0]);
    h.add(i + 1, j + 1, sign * b[2]);
    h.add(i + 1, j, sign * b[1]);
    if si != sj {
        h.add(i, j + 1, sign * b[1]);
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn step(points: &[Point], dz: &[f64], alpha: f64) -> Vec<Point> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| Point::new(p.x + alpha * dz[2 * i], p.y + alpha * dz[2 * i + 1]))
        .collect()
}

fn output(problem: &Problem<'_>, points: Vec<Point>, diagnostics: Diagnostics) -> SolveOutput {
    let spec = problem.spec;
    let u = points.iter().map(|&r| spec.u_value(r)).collect();
    let mut t: Vec<f64> = match &spec.t_linearization {
        Some(lin) => points
            .iter()
            .map(|&r| (r - lin.eaves).norm_sq() + problem.h2)
            .collect(),
        None => vec![f64::NAN; spec.n_slots],
    };
    for lt in &problem.logs {
        t[lt.slot] = lt.l(points[lt.slot]);
    }
    SolveOutput { points, t, u, diagnostics }
}

/// Solves a subproblem from a strictly feasible warm start.
///
/// Stops once the barrier's duality gap `m / mu` is at most `tol`.
pub fn solve(spec: &SubproblemSpec, warm_start: &[Point], tol: f64) -> Result<SolveOutput, SolveError> {
    spec.check()?;
    if warm_start.len() != spec.n_slots {
        return Err(SolveError::Malformed(format!(
            "warm start has {} points for {} slots",
            warm_start.len(),
            spec.n_slots
        )));
    }
    let problem = Problem::new(spec);
    if spec.n_slots == 0 {
        let diag = Diagnostics {
            objective: 0.0,
            duality_gap: 0.0,
            stationarity: 0.0,
            max_violation: spec.max_violation(&[]),
            outer_iterations: 0,
            newton_steps: 0,
            stage_objectives: Vec::new(),
        };
        return Ok(output(&problem, Vec::new(), diag));
    }
    if !problem.strictly_feasible(warm_start) {
        return Err(SolveError::InfeasibleStart(format!(
            "max constraint value {:.3e}",
            spec.max_violation(warm_start)
        )));
    }

    let n = spec.n_slots;
    let m = problem.n_constraints() as f64;
    let mut z = warm_start.to_vec();

    // balance objective and barrier gradients at the warm start
    let (g_obj, g_bar) = problem.gradients(&z);
    let go2 = dot(&g_obj, &g_obj);
    let mut mu = if go2 > 0.0 { -dot(&g_obj, &g_bar) / go2 } else { 1.0 };
    if !(mu.is_finite() && mu > 0.0) {
        mu = m / spec.objective(&z).abs().max(1e-12);
    }
    // an initial gap far below the objective scale leaves a long damped phase
    let mu_cap = m / (MIN_INITIAL_GAP * spec.objective(&z).abs().max(1e-12));
    mu = mu.min(mu_cap).clamp(1e-8, 1e8);

    let mut hess = SymBanded::zeros(2 * n, 3);
    let mut dz = vec![0.0; 2 * n];
    let mut newton_steps = 0;
    let mut stage_objectives = Vec::new();
    let mut stationarity = f64::INFINITY;

    for outer in 1..=MAX_OUTER {
        let mut centered = false;
        for _ in 0..MAX_NEWTON_PER_STAGE {
            let (g_obj, g_bar) = problem.gradients(&z);
            let grad: Vec<f64> = g_obj.iter().zip(&g_bar).map(|(o, b)| mu * o + b).collect();
            stationarity = inf_norm(&grad) / mu;
            problem.hessian(&z, mu, &mut hess);
            let chol = match hess.cholesky() {
                Some(c) => c,
                None => {
                    // roundoff can leave a tiny negative pivot at large mu
                    let shift = 1e-12 * hess.max_abs_diagonal().max(1.0);
                    hess.add_diagonal(shift);
                    hess.cholesky().ok_or_else(|| {
                        SolveError::NumericalBreakdown("Newton system not positive definite".into())
                    })?
                }
            };
            dz.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
            chol.solve_in_place(&mut dz);
            let decrement = -dot(&grad, &dz);
            if !decrement.is_finite() {
                return Err(SolveError::NumericalBreakdown("non-finite Newton step".into()));
            }
            let f0 = problem.merit(&z, mu);
            // the predicted decrease cannot be realized below the merit's rounding level
            if decrement * 0.5 <= CENTERING_TOL.max(MERIT_REL_EPS * f0.abs()) {
                centered = true;
                break;
            }
            newton_steps += 1;

            let slope = -decrement;
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-16 {
                let cand = step(&z, &dz, alpha);
                let f1 = problem.merit(&cand, mu);
                // allow for roundoff in the merit value itself
                if f1 <= f0 + ARMIJO_ALPHA * alpha * slope + MERIT_REL_EPS * f0.abs() {
                    accepted = Some((cand, f1 < f0));
                    break;
                }
                alpha *= ARMIJO_BETA;
            }
            match accepted {
                Some((cand, true)) => z = cand,
                Some((cand, false)) if decrement * 0.5 <= ROUNDOFF_CENTERING_TOL => {
                    // no decrease representable at this precision
                    z = cand;
                    centered = true;
                    break;
                }
                Some((cand, false)) => z = cand,
                None => {
                    if decrement * 0.5 <= ROUNDOFF_CENTERING_TOL {
                        centered = true;
                        break;
                    }
                    return Err(SolveError::NumericalBreakdown(format!(
                        "line search stalled with Newton decrement {decrement:.3e} at mu {mu:.3e}"
                    )));
                }
            }
        }
        stage_objectives.push(spec.objective(&z));
        let gap = m / mu;
        let diag = || Diagnostics {
            objective: spec.objective(&z),
            duality_gap: gap,
            stationarity,
            max_violation: spec.max_violation(&z),
            outer_iterations: outer,
            newton_steps,
            stage_objectives: stage_objectives.clone(),
        };
        if !centered {
            return Err(SolveError::MaxIterations {
                best: Box::new(output(&problem, z.clone(), diag())),
            });
        }
        if gap <= tol {
            let d = diag();
            return Ok(output(&problem, z, d));
        }
        if outer == MAX_OUTER {
            return Err(SolveError::MaxIterations {
                best: Box::new(output(&problem, z.clone(), diag())),
            });
        }
        mu *= MU_GROWTH;
    }
    unreachable!("outer loop returns on its last stage")
}
