//! LoS channel model, achievable rates and secrecy objectives.
//!
//! Gains follow free-space path loss, `gamma0 / d^2`, so every rate is
//! `log2(1 + gamma0 * p / d^2)`. The ground-to-eavesdropper link of the G2U
//! direction has path-loss exponent `kappa` and unit-mean exponential
//! (Rayleigh power) fading; the optimizer works with its Jensen upper bound
//! and [`mc_secrecy_rate_g2u`] reports the fading average.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenario::{Direction, Point, PowerProfile, Scenario, Trajectory};

/// `log2(1 + x)`, accurate for small `x`.
#[inline]
pub fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Squared 3D distance between a UAV at `altitude` and a ground node.
#[inline]
pub fn sq_dist(uav: Point, node: Point, altitude: f64) -> f64 {
    (uav - node).norm_sq() + altitude * altitude
}

/// Achievable LoS rate in bps/Hz.
#[inline]
pub fn rate_los(power_w: f64, sq_dist_m2: f64, ref_snr: f64) -> f64 {
    log2_1p(ref_snr * power_w / sq_dist_m2)
}

/// Jensen upper bound of the ground-to-eavesdropper rate.
#[inline]
pub fn ge_rate_bound(power_w: f64, d_ge_m: f64, pathloss_exp: f64, ref_snr: f64) -> f64 {
    log2_1p(ge_gain(d_ge_m, pathloss_exp, ref_snr) * power_w)
}

/// `gamma0 / d_GE^kappa`, the fading-free ground-to-eavesdropper coefficient.
#[inline]
pub fn ge_gain(d_ge_m: f64, pathloss_exp: f64, ref_snr: f64) -> f64 {
    ref_snr / d_ge_m.powf(pathloss_exp)
}

/// Link geometry and power of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotLinkState {
    pub d2_ug: f64,
    pub d2_ue: f64,
    pub power: f64,
}

impl SlotLinkState {
    pub fn at(scenario: &Scenario, uav: Point, power: f64) -> Self {
        Self {
            d2_ug: sq_dist(uav, scenario.ground_pos, scenario.altitude_m),
            d2_ue: sq_dist(uav, scenario.eaves_pos, scenario.altitude_m),
            power,
        }
    }

    /// Legitimate rate (UAV-ground in either direction).
    pub fn legit_rate(&self, ref_snr: f64) -> f64 {
        rate_los(self.power, self.d2_ug, ref_snr)
    }
}

fn check_lengths(scenario: &Scenario, traj: &Trajectory, power: &PowerProfile) -> Result<()> {
    for actual in [traj.len(), power.len()] {
        if actual != scenario.num_slots {
            return Err(Error::LengthMismatch {
                expected: scenario.num_slots,
                actual,
            });
        }
    }
    Ok(())
}

/// Per-slot secrecy terms without the positive-part clamp.
///
/// The subtrahend is the UAV-eavesdropper LoS rate for U2G and the Jensen
/// bound for G2U.
pub fn slot_secrecy_terms(
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerProfile,
) -> Result<Vec<f64>> {
    check_lengths(scenario, traj, power)?;
    let g = scenario.ref_snr;
    let ge = ge_gain(scenario.d_ge(), scenario.pathloss_exp, g);
    Ok(traj
        .points
        .iter()
        .zip(&power.powers)
        .map(|(&uav, &p)| {
            let st = SlotLinkState::at(scenario, uav, p);
            let leak = match scenario.direction {
                Direction::U2G => rate_los(p, st.d2_ue, g),
                Direction::G2U => log2_1p(ge * p),
            };
            st.legit_rate(g) - leak
        })
        .collect())
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

/// Average secrecy rate with per-slot positive-part clamp, for the scenario's direction.
pub fn secrecy_rate(scenario: &Scenario, traj: &Trajectory, power: &PowerProfile) -> Result<f64> {
    let terms = slot_secrecy_terms(scenario, traj, power)?;
    Ok(mean(terms.iter().map(|&r| r.max(0.0)), terms.len()))
}

/// Average of the unclamped per-slot terms; the objective the solvers ascend.
pub fn smooth_secrecy_rate(
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerProfile,
) -> Result<f64> {
    let terms = slot_secrecy_terms(scenario, traj, power)?;
    Ok(mean(terms.iter().copied(), terms.len()))
}

fn with_direction(scenario: &Scenario, direction: Direction) -> std::borrow::Cow<'_, Scenario> {
    if scenario.direction == direction {
        std::borrow::Cow::Borrowed(scenario)
    } else {
        std::borrow::Cow::Owned(Scenario {
            direction,
            ..scenario.clone()
        })
    }
}

pub fn secrecy_rate_u2g(scenario: &Scenario, traj: &Trajectory, power: &PowerProfile) -> Result<f64> {
    secrecy_rate(&with_direction(scenario, Direction::U2G), traj, power)
}

pub fn secrecy_rate_u2g_smooth(
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerProfile,
) -> Result<f64> {
    smooth_secrecy_rate(&with_direction(scenario, Direction::U2G), traj, power)
}

pub fn secrecy_rate_g2u(scenario: &Scenario, traj: &Trajectory, power: &PowerProfile) -> Result<f64> {
    secrecy_rate(&with_direction(scenario, Direction::G2U), traj, power)
}

pub fn secrecy_rate_g2u_smooth(
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerProfile,
) -> Result<f64> {
    smooth_secrecy_rate(&with_direction(scenario, Direction::G2U), traj, power)
}

/// Zeroes the power of every slot whose unclamped secrecy term is negative.
///
/// The smooth objective at the projected power equals the clamped objective
/// at the original power.
pub fn project_nonnegative_slots(
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerProfile,
) -> Result<PowerProfile> {
    let terms = slot_secrecy_terms(scenario, traj, power)?;
    Ok(PowerProfile::new(
        terms
            .iter()
            .zip(&power.powers)
            .map(|(&r, &p)| if r >= 0.0 { p } else { 0.0 })
            .collect(),
    ))
}

/// A unit-mean exponential fading draw.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FadingSample(pub f64);

/// Samples per independent ChaCha stream.
const MC_CHUNK: usize = 4096;

/// `n` unit-mean exponential draws for `seed`.
///
/// Draw `i` comes from stream `i / MC_CHUNK` of a ChaCha8 generator keyed by
/// `seed`, via the inverse CDF `-ln(1 - u)`. Chunks are generated in parallel
/// and concatenated in order, so the output depends only on `(n, seed)`.
pub fn fading_samples(n: usize, seed: u64) -> Vec<FadingSample> {
    let chunks = n.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let len = MC_CHUNK.min(n - k * MC_CHUNK);
            (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    FadingSample(-(-u).ln_1p())
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

impl McEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: 0.0, std_err: 0.0 };
        }
        let m = xs.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: m, std_err }
    }
}

/// Monte Carlo estimate of the faded ground-to-eavesdropper rate
/// `E[log2(1 + gamma0 q zeta / d_GE^kappa)]`.
pub fn mc_ge_rate(
    power_w: f64,
    d_ge_m: f64,
    pathloss_exp: f64,
    ref_snr: f64,
    n_samples: usize,
    seed: u64,
) -> McEstimate {
    let c = ge_gain(d_ge_m, pathloss_exp, ref_snr) * power_w;
    if c == 0.0 {
        return McEstimate { mean: 0.0, std_err: 0.0 };
    }
    let rates: Vec<f64> = fading_samples(n_samples, seed)
        .iter()
        .map(|z| log2_1p(c * z.0))
        .collect();
    McEstimate::from_samples(&rates)
}

/// Fading-averaged G2U secrecy rate.
///
/// Each slot's eavesdropper rate is replaced by its Monte Carlo mean over
/// common fading draws and the positive-part clamp is applied per slot. The
/// standard error comes from the per-draw average over the slots that remain
/// positive.
pub fn mc_secrecy_rate_g2u(
    scenario: &Scenario,
    traj: &Trajectory,
    power: &PowerProfile,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_lengths(scenario, traj, power)?;
    let g = scenario.ref_snr;
    let ge = ge_gain(scenario.d_ge(), scenario.pathloss_exp, g);
    let zeta = fading_samples(n_samples.max(1), seed);
    let ns = zeta.len() as f64;
    let n_slots = scenario.num_slots as f64;

    // slot index, legitimate rate, eavesdropper coefficient
    let mut active = Vec::new();
    for (&uav, &q) in traj.points.iter().zip(&power.powers) {
        if q <= 0.0 {
            continue;
        }
        let legit = SlotLinkState::at(scenario, uav, q).legit_rate(g);
        let c = ge * q;
        let leak = zeta.iter().map(|z| log2_1p(c * z.0)).sum::<f64>() / ns;
        if legit - leak > 0.0 {
            active.push((legit, c));
        }
    }
    if active.is_empty() {
        return Ok(McEstimate { mean: 0.0, std_err: 0.0 });
    }
    let legit_sum: f64 = active.iter().map(|(r, _)| r).sum();
    let per_draw: Vec<f64> = zeta
        .iter()
        .map(|z| {
            let leak: f64 = active.iter().map(|&(_, c)| log2_1p(c * z.0)).sum();
            (legit_sum - leak) / n_slots
        })
        .collect();
    Ok(McEstimate::from_samples(&per_draw))
}
