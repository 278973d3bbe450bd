//! The generation probability vector and Bernoulli sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::model::{Constraint, Problem};

/// Floor applied to every probability component; the ceiling is `1 - P_MIN`.
pub const P_MIN: f64 = 1e-6;

/// Default starting probability for problems without usable constraints.
pub const UNCONSTRAINED_P0: f64 = 0.5;

#[inline]
pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(P_MIN, 1.0 - P_MIN)
}

/// Per-component probabilities `p_j = P{x_j = 1}` and the reset value `p0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    p: Vec<f64>,
    p0: f64,
}

impl ProbabilityVector {
    /// All components at `p0`.
    pub fn uniform(dim: usize, p0: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::invalid(format!("initial probability {p0} outside (0,1)")));
        }
        let p0 = clamp_probability(p0);
        Ok(Self { p: vec![p0; dim], p0 })
    }

    /// Takes explicit components; each is clamped into `[P_MIN, 1 - P_MIN]`.
    pub fn from_components(p: Vec<f64>, p0: f64) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("probability components must be finite"));
        }
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::invalid(format!("initial probability {p0} outside (0,1)")));
        }
        Ok(Self {
            p: p.into_iter().map(clamp_probability).collect(),
            p0: clamp_probability(p0),
        })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn components(&self) -> &[f64] {
        &self.p
    }

    pub(crate) fn components_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn set_p0(&mut self, p0: f64) {
        self.p0 = clamp_probability(p0);
    }

    /// Mean component value.
    pub fn mean(&self) -> f64 {
        if self.p.is_empty() {
            return self.p0;
        }
        self.p.iter().sum::<f64>() / self.p.len() as f64
    }

    /// Draws one vector with independent `x_j ~ Bernoulli(p_j)`.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Bits {
        let mut x = Bits::zeros(self.p.len());
        for (j, &p) in self.p.iter().enumerate() {
            if rng.gen::<f64>() < p {
                x.set(j, true);
            }
        }
        x
    }

    /// `sum_i b_i p_i`, the expected left-hand side of a row.
    pub fn expected_lhs(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.p.len() {
            return Err(Error::DimensionMismatch {
                expected: self.p.len(),
                found: row.len(),
            });
        }
        Ok(row.iter().zip(&self.p).map(|(b, p)| b * p).sum())
    }
}

/// Starting probability that puts the expected row sums on the boundary
/// of the tightest constraint: `min_k B_k / sum_i b_ik`, capped at
/// `1 / (V + 1)` when at-most-one groups of length `V` exist.
///
/// Rows whose coefficient sum is not positive are skipped. With nothing
/// left to bound it, the result is [`UNCONSTRAINED_P0`].
pub fn initial_probability(problem: &Problem) -> f64 {
    let ratio = problem
        .constraints()
        .iter()
        .filter_map(row_ratio)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))));
    let group_cap = problem.variants().map(|v| 1.0 / (v as f64 + 1.0));
    let p0 = match (ratio, group_cap) {
        (Some(r), Some(cap)) => r.min(cap),
        (Some(r), None) => r,
        (None, Some(cap)) => cap,
        (None, None) => UNCONSTRAINED_P0,
    };
    clamp_probability(p0)
}

fn row_ratio(c: &Constraint) -> Option<f64> {
    let sum: f64 = c.row.iter().sum();
    (sum > 0.0).then(|| c.bound / sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_row_ratio_capped_by_groups() {
        let p = Problem::builder(vec![1.0; 4])
            .constraint(vec![1.0, 2.0, 3.0, 4.0], 5.0)
            .build()
            .unwrap();
        assert_eq!(initial_probability(&p), 0.5);
        let grouped = Problem::builder(vec![1.0; 4])
            .constraint(vec![1.0, 2.0, 3.0, 4.0], 5.0)
            .variant_groups(4)
            .build()
            .unwrap();
        assert!((initial_probability(&grouped) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn unconstrained_default() {
        let p = Problem::builder(vec![1.0; 4]).build().unwrap();
        assert_eq!(initial_probability(&p), 0.5);
    }

    #[test]
    fn tightest_row_wins() {
        let p = Problem::builder(vec![1.0; 2])
            .constraint(vec![5.0, 5.0], 3.0)
            .constraint(vec![5.0, 5.0], 1.0)
            .build()
            .unwrap();
        assert!((initial_probability(&p) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_rows_are_skipped() {
        let p = Problem::builder(vec![1.0; 2])
            .constraint(vec![0.0, 0.0], 3.0)
            .build()
            .unwrap();
        assert_eq!(initial_probability(&p), 0.5);
    }

    #[test]
    fn zero_bound_clamps_to_floor() {
        let p = Problem::builder(vec![1.0; 2])
            .constraint(vec![1.0, 1.0], 0.0)
            .build()
            .unwrap();
        assert_eq!(initial_probability(&p), P_MIN);
    }

    #[test]
    fn expected_lhs_values() {
        let pv = ProbabilityVector::uniform(4, 0.5).unwrap();
        assert_eq!(pv.expected_lhs(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 5.0);
        // sum b = B / p0 gives exactly B
        let pv = ProbabilityVector::uniform(4, 0.25).unwrap();
        assert_eq!(pv.expected_lhs(&[2.0, 2.0, 2.0, 2.0]).unwrap(), 2.0);
        let pv = ProbabilityVector::uniform(4, P_MIN).unwrap();
        assert!(pv.expected_lhs(&[1.0; 4]).unwrap() < 1e-5);
        assert!(pv.expected_lhs(&[1.0; 3]).is_err());
    }

    #[test]
    fn rejects_out_of_range_p0() {
        assert!(ProbabilityVector::uniform(3, 0.0).is_err());
        assert!(ProbabilityVector::uniform(3, 1.0).is_err());
        assert!(ProbabilityVector::from_components(vec![0.5, f64::NAN], 0.5).is_err());
    }

    #[test]
    fn generate_at_floor_is_almost_all_zero() {
        let pv = ProbabilityVector::uniform(100, P_MIN).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ones: usize = (0..10_000).map(|_| pv.generate(&mut rng).count_ones()).sum();
        assert!((ones as f64) / 1e6 < 0.01);
    }

    #[test]
    fn generate_mean_count() {
        let d = 1000;
        let m = 1000;
        let pv = ProbabilityVector::uniform(d, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let total: usize = (0..m).map(|_| pv.generate(&mut rng).count_ones()).sum();
        let mean = total as f64 / m as f64;
        // standard error of the mean ones-count: sqrt(D p (1-p) / m)
        let se = (d as f64 * 0.2 * 0.8 / m as f64).sqrt();
        assert!((mean - 200.0).abs() < 5.0 * se, "mean {mean}");
    }

    #[test]
    fn generate_is_deterministic() {
        let pv = ProbabilityVector::uniform(64, 0.3).unwrap();
        let a = pv.generate(&mut ChaCha8Rng::seed_from_u64(99));
        let b = pv.generate(&mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
    }

    #[test]
    fn marginals_converge() {
        let p: Vec<f64> = (0..20).map(|j| 0.02 + 0.048 * j as f64).collect();
        let pv = ProbabilityVector::from_components(p.clone(), 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 20_000;
        let mut counts = vec![0usize; p.len()];
        for _ in 0..m {
            for j in pv.generate(&mut rng).iter_ones() {
                counts[j] += 1;
            }
        }
        for (j, &pj) in p.iter().enumerate() {
            let freq = counts[j] as f64 / m as f64;
            let tol = 4.0 * (pj * (1.0 - pj) / m as f64).sqrt();
            assert!((freq - pj).abs() <= tol, "component {j}: {freq} vs {pj}");
        }
    }
}
