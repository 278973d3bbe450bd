use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Problem;

/// Parameters of a random instance.
///
/// Coefficients are integers drawn uniformly from the closed ranges. Each
/// bound is `margin * sum(row)`, so the zero vector is always feasible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub dim: usize,
    pub n_constraints: usize,
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    pub margin: f64,
    /// Group size for at-most-one groups, if any.
    pub variants: Option<usize>,
    pub seed: u64,
    /// Make the instance admit no feasible vector.
    pub infeasible: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            dim: 100,
            n_constraints: 5,
            a_range: (1.0, 100.0),
            b_range: (1.0, 100.0),
            margin: 0.3,
            variants: None,
            seed: 0,
            infeasible: false,
        }
    }
}

impl GeneratorSpec {
    /// Named presets: `paper-smp` (100 variables, 105 rows) and
    /// `paper-large` (10000 variables, 100 rows).
    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "paper-smp" => Ok(Self {
                dim: 100,
                n_constraints: 105,
                ..Self::default()
            }),
            "paper-large" => Ok(Self {
                dim: 10_000,
                n_constraints: 100,
                ..Self::default()
            }),
            other => Err(Error::invalid(format!(
                "unknown profile `{other}`; expected paper-smp or paper-large"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be at least 1"));
        }
        for (name, (lo, hi)) in [("a_range", self.a_range), ("b_range", self.b_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo.ceil() < hi.floor()) {
                return Err(Error::invalid(format!("{name} must contain at least two integers")));
            }
        }
        if self.b_range.0 <= 0.0 {
            return Err(Error::invalid("b_range must be positive"));
        }
        if !(self.margin > 0.0 && self.margin <= 1.0) {
            return Err(Error::invalid("margin must lie in (0,1]"));
        }
        if let Some(v) = self.variants {
            if v == 0 || self.dim % v != 0 {
                return Err(Error::invalid(format!("variants {v} must divide dim {}", self.dim)));
            }
        }
        if self.infeasible && self.n_constraints == 0 {
            return Err(Error::invalid("an infeasible instance needs at least one constraint"));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo.ceil() as i64..=hi.floor() as i64) as f64
}

/// Builds the instance described by `spec`; the same spec always yields
/// the same instance.
///
/// With `infeasible`, the first row's bound becomes 0 and a row
/// `-sum(x) <= -1` demands at least one selected variable, so no vector
/// satisfies both.
pub fn generate_instance(spec: &GeneratorSpec) -> Result<Problem> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a: Vec<f64> = (0..spec.dim).map(|_| draw(&mut rng, spec.a_range)).collect();
    let mut builder = Problem::builder(a);
    for k in 0..spec.n_constraints {
        let row: Vec<f64> = (0..spec.dim).map(|_| draw(&mut rng, spec.b_range)).collect();
        let bound = if spec.infeasible && k == 0 {
            0.0
        } else {
            spec.margin * row.iter().sum::<f64>()
        };
        builder = builder.constraint(row, bound);
    }
    if spec.infeasible {
        builder = builder.constraint(vec![-1.0; spec.dim], -1.0);
    }
    if let Some(v) = spec.variants {
        builder = builder.variant_groups(v);
    }
    builder.build()
}
