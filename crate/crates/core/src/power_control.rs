//! Optimal per-slot transmit power for a fixed trajectory.
//!
//! Maximizes `sum_n log2(1 + a_n p_n) - log2(1 + b_n p_n)` under a mean-power
//! budget and a per-slot peak. Slots with `a_n <= b_n` get zero power. Every
//! other slot takes the stationary point of its Lagrangian,
//! clipped to `[0, peak]`, with the multiplier `lambda` found by bisection on
//! the mean power.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::scenario::{PowerProfile, Scenario, Trajectory};
use crate::channel::{ge_gain, sq_dist};

/// Lower end of the multiplier bracket.
const LAMBDA_FLOOR: f64 = 1e-12;
/// Relative tolerance on the mean-power constraint when it binds.
pub const POWER_REL_TOL: f64 = 1e-9;

/// One sub-problem: legitimate and eavesdropper coefficients per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerInstance {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub avg_power: f64,
    pub peak_power: f64,
}

impl PowerInstance {
    pub fn new(a: Vec<f64>, b: Vec<f64>, avg_power: f64, peak_power: f64) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                expected: a.len(),
                actual: b.len(),
            });
        }
        if a.iter().chain(&b).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("coefficients must be positive and finite".into()));
        }
        if !(avg_power > 0.0 && avg_power < peak_power) {
            return Err(Error::Domain(format!(
                "need 0 < avg_power < peak_power, got {avg_power} and {peak_power}"
            )));
        }
        Ok(Self { a, b, avg_power, peak_power })
    }

    /// Coefficients for a trajectory: `a_n = gamma0 / d_UG^2`, and
    /// `b_n = gamma0 / d_UE^2` (U2G) or the constant `gamma0 / d_GE^kappa` (G2U).
    pub fn from_trajectory(scenario: &Scenario, traj: &Trajectory) -> Result<Self> {
        if traj.len() != scenario.num_slots {
            return Err(Error::LengthMismatch {
                expected: scenario.num_slots,
                actual: traj.len(),
            });
        }
        let g = scenario.ref_snr;
        let h = scenario.altitude_m;
        let a = traj
            .points
            .iter()
            .map(|&p| g / sq_dist(p, scenario.ground_pos, h))
            .collect();
        let b = match scenario.direction {
            crate::Direction::U2G => traj
                .points
                .iter()
                .map(|&p| g / sq_dist(p, scenario.eaves_pos, h))
                .collect(),
            crate::Direction::G2U => {
                vec![ge_gain(scenario.d_ge(), scenario.pathloss_exp, g); traj.len()]
            }
        };
        Self::new(a, b, scenario.avg_power, scenario.peak_power)
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Sum of per-slot secrecy terms at `powers` (not averaged).
    pub fn objective(&self, powers: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .zip(powers)
            .map(|((&a, &b), &p)| slot_objective(a, b, p))
            .sum()
    }
}

/// `log2(1 + a p) - log2(1 + b p)`.
#[inline]
pub fn slot_objective(a: f64, b: f64, p: f64) -> f64 {
    ((a * p).ln_1p() - (b * p).ln_1p()) / LN_2
}

/// Unclipped stationary power of one slot for multiplier `lambda`:
///
/// `sqrt((1/(2b) - 1/(2a))^2 + (1/b - 1/a) / (lambda ln 2)) - 1/(2b) - 1/(2a)`.
///
/// Evaluated as the root of `ab p^2 + (a+b) p + 1 - k = 0`, `k = (a-b)/(lambda ln2)`,
/// in a form without cancellation when the root is near zero.
pub fn phat(a: f64, b: f64, lambda: f64) -> Result<f64> {
    if !(a > b) {
        return Err(Error::Domain(format!("phat needs a > b, got a = {a}, b = {b}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("phat needs lambda > 0, got {lambda}")));
    }
    Ok(phat_unchecked(a, b, lambda))
}

#[inline]
fn phat_unchecked(a: f64, b: f64, lambda: f64) -> f64 {
    let k = (a - b) / (lambda * LN_2);
    let sum = a + b;
    let disc = (a - b) * (a - b) + 4.0 * a * b * k;
    2.0 * (k - 1.0) / (sum + disc.sqrt())
}

/// Optimal profile plus the multiplier that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub profile: PowerProfile,
    /// Zero when the mean-power budget is slack.
    pub lambda: f64,
}

fn profile_at(inst: &PowerInstance, lambda: f64, out: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for ((&a, &b), p) in inst.a.iter().zip(&inst.b).zip(out.iter_mut()) {
        *p = if a > b {
            phat_unchecked(a, b, lambda).clamp(0.0, inst.peak_power)
        } else {
            0.0
        };
        total += *p;
    }
    total / inst.len().max(1) as f64
}

/// Optimal power profile of a sub-problem.
pub fn optimal_power(inst: &PowerInstance) -> PowerSolution {
    let n = inst.len();
    let active = inst.a.iter().zip(&inst.b).filter(|(a, b)| a > b).count();
    if active == 0 {
        return PowerSolution {
            profile: PowerProfile::constant(n, 0.0),
            lambda: 0.0,
        };
    }
    // lambda -> 0+: every active slot at peak
    if active as f64 * inst.peak_power <= n as f64 * inst.avg_power {
        let powers = inst
            .a
            .iter()
            .zip(&inst.b)
            .map(|(a, b)| if a > b { inst.peak_power } else { 0.0 })
            .collect();
        return PowerSolution {
            profile: PowerProfile::new(powers),
            lambda: 0.0,
        };
    }

    let target = inst.avg_power;
    let tol = POWER_REL_TOL * target;
    let mut buf = vec![0.0; n];
    let mut lo = LAMBDA_FLOOR;
    let mut hi = 1.0;
    while profile_at(inst, hi, &mut buf) > target {
        lo = hi;
        hi *= 2.0;
    }
    let mut hi_mean = profile_at(inst, hi, &mut buf);
    for _ in 0..400 {
        if (hi_mean - target).abs() <= tol || hi - lo <= 1e-14 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let m = profile_at(inst, mid, &mut buf);
        debug_assert!(m.is_finite());
        if m > target {
            lo = mid;
        } else {
            hi = mid;
            hi_mean = m;
        }
    }
    profile_at(inst, hi, &mut buf);
    PowerSolution {
        profile: PowerProfile::new(buf),
        lambda: hi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn literal_phat(a: f64, b: f64, lambda: f64) -> f64 {
        let r = 1.0 / (2.0 * b) - 1.0 / (2.0 * a);
        (r * r + (1.0 / b - 1.0 / a) / (lambda * LN_2)).sqrt() - 1.0 / (2.0 * b) - 1.0 / (2.0 * a)
    }

    /// Exhaustive grid search over `[0, peak]^n` for small `n`.
    fn grid_best(inst: &PowerInstance, steps: usize) -> f64 {
        let n = inst.len();
        let delta = inst.peak_power / steps as f64;
        let budget = n as f64 * inst.avg_power + 1e-12;
        let mut idx = vec![0usize; n];
        let mut best = f64::NEG_INFINITY;
        loop {
            let p: Vec<f64> = idx.iter().map(|&k| k as f64 * delta).collect();
            if p.iter().sum::<f64>() <= budget {
                best = best.max(inst.objective(&p));
            }
            let mut i = 0;
            loop {
                if i == n {
                    return best;
                }
                idx[i] += 1;
                if idx[i] <= steps {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn stable_form_matches_literal_formula() {
        for &(a, b, l) in &[(2.0, 1.0, 0.1), (10.0, 0.1, 3.0), (5.0, 4.9, 0.01), (1e4, 5e3, 1e2)] {
            let x = phat(a, b, l).unwrap();
            let y = literal_phat(a, b, l);
            assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()), "{a} {b} {l}: {x} vs {y}");
        }
    }

    #[test]
    fn phat_large_lambda_limit() {
        // tends to -1/a
        let p = phat(2.0, 1.0, 1e15).unwrap();
        assert!((p + 0.5).abs() < 1e-9);
    }

    #[test]
    fn phat_zero_at_stationary_multiplier() {
        // d/dp [log2(1+2p) - log2(1+p)] at p = 0 is (a - b)/ln2
        let lam = 1.0 / LN_2;
        assert!(phat(2.0, 1.0, lam).unwrap().abs() < 1e-15);
        let h = 1e-6;
        let fd = (slot_objective(2.0, 1.0, h) - slot_objective(2.0, 1.0, 0.0)) / h;
        assert!((fd - lam).abs() < 1e-5);
    }

    #[test]
    fn phat_matches_fine_grid_argmax() {
        let lam = 0.1;
        let mut best = (0.0, f64::NEG_INFINITY);
        for k in 0..=2_000_000 {
            let p = k as f64 * 1e-5;
            let v = slot_objective(2.0, 1.0, p) - lam * p;
            if v > best.1 {
                best = (p, v);
            }
        }
        assert!((phat(2.0, 1.0, lam).unwrap() - best.0).abs() < 1e-4);
    }

    #[test]
    fn phat_domain_errors() {
        assert!(phat(1.0, 1.0, 1.0).is_err());
        assert!(phat(2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn losing_slots_get_nothing() {
        let inst = PowerInstance::new(vec![1.0, 0.5], vec![1.0, 2.0], 1.0, 4.0).unwrap();
        let sol = optimal_power(&inst);
        assert_eq!(sol.profile.powers, vec![0.0, 0.0]);
    }

    #[test]
    fn single_slot_budget_binds() {
        let inst = PowerInstance::new(vec![2.0], vec![1.0], 1.0, 4.0).unwrap();
        let sol = optimal_power(&inst);
        assert!((sol.profile.powers[0] - 1.0).abs() <= 1e-9);
        assert!(sol.lambda > 0.0);
    }

    #[test]
    fn slack_budget_puts_active_slots_at_peak() {
        let inst = PowerInstance::new(vec![2.0, 0.5, 0.5, 0.5], vec![1.0; 4], 1.0, 3.0).unwrap();
        let sol = optimal_power(&inst);
        assert_eq!(sol.lambda, 0.0);
        assert_eq!(sol.profile.powers, vec![3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_slots_match_grid() {
        let inst = PowerInstance::new(vec![2.0, 1.01], vec![1.0, 1.0], 0.3, 1.2).unwrap();
        let sol = optimal_power(&inst);
        let p = &sol.profile.powers;
        assert!(p[0] > p[1]);
        let best = grid_best(&inst, 1000);
        assert!(inst.objective(p) >= best - 1e-3);
        assert!(sol.profile.is_feasible(0.3, 1.2, POWER_REL_TOL * 0.3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn beats_grid_search(
            ab in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..=3),
            avg in 0.05f64..2.0,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = ab.into_iter().unzip();
            let inst = PowerInstance::new(a, b, avg, 4.0 * avg).unwrap();
            let sol = optimal_power(&inst);
            let steps = if inst.len() == 3 { 200 } else { 1000 };
            prop_assert!(inst.objective(&sol.profile.powers) >= grid_best(&inst, steps) - 1e-3);
        }

        #[test]
        fn feasible_and_complementary(
            ab in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..=12),
            avg in 0.01f64..5.0,
            ratio in 1.1f64..10.0,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = ab.into_iter().unzip();
            let inst = PowerInstance::new(a, b, avg, ratio * avg).unwrap();
            let sol = optimal_power(&inst);
            let tol = POWER_REL_TOL * avg;
            prop_assert!(sol.profile.is_feasible(avg, ratio * avg, tol));
            for ((&a, &b), &p) in inst.a.iter().zip(&inst.b).zip(&sol.profile.powers) {
                if a <= b {
                    prop_assert_eq!(p, 0.0);
                } else if sol.lambda == 0.0 {
                    prop_assert_eq!(p, ratio * avg);
                }
            }
            if sol.lambda > 0.0 {
                prop_assert!((sol.profile.mean() - avg).abs() <= tol);
            }
        }

        #[test]
        fn stronger_legit_gains_never_hurt(
            ab in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..=8),
            scale in 1.0f64..5.0,
            avg in 0.05f64..2.0,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = ab.into_iter().unzip();
            let base = PowerInstance::new(a.clone(), b.clone(), avg, 4.0 * avg).unwrap();
            let scaled = PowerInstance::new(a.iter().map(|x| x * scale).collect(), b, avg, 4.0 * avg).unwrap();
            let v0 = base.objective(&optimal_power(&base).profile.powers);
            let v1 = scaled.objective(&optimal_power(&scaled).profile.powers);
            prop_assert!(v1 >= v0 - 1e-9);
        }

        #[test]
        fn mean_power_nonincreasing_in_lambda(
            ab in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..=8),
            l1 in 1e-3f64..10.0,
            f in 1.0f64..10.0,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = ab.into_iter().unzip();
            let inst = PowerInstance::new(a, b, 1.0, 4.0).unwrap();
            let mut buf = vec![0.0; inst.len()];
            let m1 = profile_at(&inst, l1, &mut buf);
            let m2 = profile_at(&inst, l1 * f, &mut buf);
            prop_assert!(m2 <= m1 + 1e-15);
        }
    }
}
