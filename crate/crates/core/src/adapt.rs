//! Probability-vector adaptation and rollback.
//!
//! Adaptation moves each component toward the best vector of a batch and
//! away from the worst one, only where the two disagree. Rollback pulls
//! the vector back toward its reset value `p0`, either fully or by the
//! partial contraction `p <- (p + q p0) / (1 + q)`.

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::sampler::{clamp_probability, ProbabilityVector, P_MIN};

/// Step-size schedule for additive adaptation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `d_k = d / k`
    Harmonic,
    /// `d_k = d`
    Constant,
}

impl Schedule {
    pub fn step(&self, d: f64, k: u64) -> f64 {
        match self {
            Schedule::Harmonic => d / k.max(1) as f64,
            Schedule::Constant => d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Multiplicative { d: f64 },
    Additive { d: f64, schedule: Schedule },
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Multiplicative { d: 1.5 }
    }
}

/// When the vector is rolled back.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollbackMode {
    None,
    /// Full reset whenever the stagnation test fires.
    Full,
    /// Partial contraction before every step, never a full reset.
    PartialEachStep,
    /// Partial contraction before every step plus a full reset whenever
    /// the stagnation test fires.
    #[default]
    Triggered,
}

impl RollbackMode {
    pub fn partial_each_step(&self) -> bool {
        matches!(self, RollbackMode::PartialEachStep | RollbackMode::Triggered)
    }

    pub fn full_on_stagnation(&self) -> bool {
        matches!(self, RollbackMode::Full | RollbackMode::Triggered)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub strategy: Strategy,
    /// Partial-rollback weight; `q_k = w / s_m`.
    pub w: f64,
    /// Minimum improvement of the running `f^M` maximum over `window`
    /// steps that counts as progress.
    pub delta_f: f64,
    /// Stagnation window `m`, in steps.
    pub window: usize,
    pub rollback: RollbackMode,
    /// Reset to the mean of the current vector instead of the original `p0`.
    pub adaptive_p0: bool,
    /// Contract only components below `p0`, as in the literal rollback rule.
    pub one_sided_rollback: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::default(),
            w: 0.02,
            delta_f: 0.0,
            window: 50,
            rollback: RollbackMode::default(),
            adaptive_p0: false,
            one_sided_rollback: false,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            Strategy::Multiplicative { d } if !(d > 1.0) => {
                return Err(Error::invalid(format!("multiplicative d must exceed 1, got {d}")))
            }
            Strategy::Additive { d, .. } if !(d > 0.0) => {
                return Err(Error::invalid(format!("additive d must be positive, got {d}")))
            }
            _ => {}
        }
        if !(self.w >= 0.0) {
            return Err(Error::invalid("w must be nonnegative"));
        }
        if !(self.delta_f >= 0.0) {
            return Err(Error::invalid("delta_f must be nonnegative"));
        }
        if self.window == 0 {
            return Err(Error::invalid("stagnation window must be at least 1"));
        }
        Ok(())
    }
}

fn check_pair(pv: &ProbabilityVector, best: &Bits, worst: &Bits) -> Result<()> {
    for v in [best, worst] {
        if v.len() != pv.len() {
            return Err(Error::DimensionMismatch {
                expected: pv.len(),
                found: v.len(),
            });
        }
    }
    Ok(())
}

/// Additive rule with step `d_k`: up where best=1/worst=0, down where
/// best=0/worst=1.
pub fn adapt_additive(pv: &mut ProbabilityVector, best: &Bits, worst: &Bits, d_k: f64) -> Result<()> {
    check_pair(pv, best, worst)?;
    let p = pv.components_mut();
    for (j, (b, w)) in best.iter().zip(worst.iter()).enumerate() {
        match (b, w) {
            (true, false) => p[j] = clamp_probability(p[j] + d_k),
            (false, true) => p[j] = clamp_probability(p[j] - d_k),
            _ => {}
        }
    }
    Ok(())
}

/// One multiplicative move of a single component.
#[inline]
pub fn multiplicative_move(p: f64, up: bool, d: f64) -> f64 {
    let next = match (up, p < 0.5) {
        (true, true) => p * d,
        (true, false) => 1.0 - (1.0 - p) / d,
        (false, true) => p / d,
        (false, false) => {
            let v = 1.0 - (1.0 - p) * d;
            if v <= 0.0 {
                P_MIN
            } else {
                v
            }
        }
    };
    clamp_probability(next)
}

/// Multiplicative rule with coefficient `d > 1`; components where best and
/// worst agree are left alone.
pub fn adapt_multiplicative(pv: &mut ProbabilityVector, best: &Bits, worst: &Bits, d: f64) -> Result<()> {
    if !(d > 1.0) {
        return Err(Error::invalid(format!("multiplicative d must exceed 1, got {d}")));
    }
    check_pair(pv, best, worst)?;
    let p = pv.components_mut();
    for (j, (b, w)) in best.iter().zip(worst.iter()).enumerate() {
        if b != w {
            p[j] = multiplicative_move(p[j], b, d);
        }
    }
    Ok(())
}

/// `p <- (p + q p0) / (1 + q)` on every component (or only those below
/// `p0` when `one_sided`).
pub fn partial_rollback(pv: &mut ProbabilityVector, q: f64, one_sided: bool) {
    if !(q > 0.0) {
        return;
    }
    let p0 = pv.p0();
    for p in pv.components_mut() {
        if !one_sided || *p < p0 {
            *p = clamp_probability((*p + q * p0) / (1.0 + q));
        }
    }
}

/// `q_k = w / s_m` with `s_m` floored at 1.
pub fn rollback_weight(w: f64, steps_without_improvement: u64) -> f64 {
    w / steps_without_improvement.max(1) as f64
}

/// Sets every component, and the reset value, to `new_p0`.
pub fn full_rollback(pv: &mut ProbabilityVector, new_p0: f64) -> Result<()> {
    if !(new_p0 > 0.0 && new_p0 < 1.0) {
        return Err(Error::invalid(format!("reset probability {new_p0} outside (0,1)")));
    }
    pv.set_p0(new_p0);
    let p0 = pv.p0();
    pv.components_mut().iter_mut().for_each(|p| *p = p0);
    Ok(())
}

/// Stagnation test over the running maxima recorded since the last reset.
///
/// `history[i]` is the best `f^M` after step `i + 1` of the current epoch.
/// Fires when the gain over the last `m` steps is below `delta_f`, or is
/// not positive at all. Needs more than `m` entries.
pub fn should_rollback(history: &[f64], m: usize, delta_f: f64) -> bool {
    if m == 0 || history.len() <= m {
        return false;
    }
    let latest = history[history.len() - 1];
    let earlier = history[history.len() - 1 - m];
    let gain = latest - earlier;
    gain < delta_f || gain <= 0.0
}
