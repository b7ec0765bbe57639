use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::Family;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub transform: Transform,
    pub bounds: [f64; 2],
}

impl Dimension {
    pub fn linear(name: &str, lo: f64, hi: f64) -> Self {
        Dimension {
            name: name.to_string(),
            transform: Transform::Linear,
            bounds: [lo, hi],
        }
    }

    pub fn log(name: &str, lo: f64, hi: f64) -> Self {
        Dimension {
            name: name.to_string(),
            transform: Transform::Log,
            bounds: [lo, hi],
        }
    }

    fn from_unit(&self, u: f64) -> f64 {
        let [lo, hi] = self.bounds;
        let u = u.clamp(0.0, 1.0);
        let v = match self.transform {
            Transform::Linear => lo + u * (hi - lo),
            Transform::Log => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
        };
        v.clamp(lo, hi)
    }

    fn to_unit(&self, v: f64) -> f64 {
        let [lo, hi] = self.bounds;
        let u = match self.transform {
            Transform::Linear => (v - lo) / (hi - lo),
            Transform::Log => (v.ln() - lo.ln()) / (hi.ln() - lo.ln()),
        };
        u.clamp(0.0, 1.0)
    }
}

/// Box-bounded search domain. Optimization runs in the unit cube; values
/// are mapped through each dimension's transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let space = SearchSpace { family: None, dims };
        space.validate()?;
        Ok(space)
    }

    /// Domain of `phi` for one distribution family; parameter order matches
    /// [`Family::distribution`].
    pub fn for_family(family: Family) -> Self {
        let dims = match family {
            Family::Geometric => vec![Dimension::log("p", 1e-5, 1.0)],
            Family::Mixnb2 => vec![
                Dimension::linear("w", 0.0, 1.0),
                Dimension::log("r1", 0.5, 500.0),
                Dimension::log("p1", 1e-4, 0.5),
                Dimension::log("r2", 0.5, 500.0),
                Dimension::log("p2", 1e-4, 0.5),
            ],
        };
        SearchSpace {
            family: Some(family),
            dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::invalid("search space", "no dimensions"));
        }
        for d in &self.dims {
            let [lo, hi] = d.bounds;
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid("search space", format!("`{}` needs lo < hi", d.name)));
            }
            if d.transform == Transform::Log && lo <= 0.0 {
                return Err(Error::invalid("search space", format!("log dimension `{}` needs lo > 0", d.name)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(unit).map(|(d, u)| d.from_unit(*u)).collect()
    }

    pub fn to_unit(&self, values: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(values).map(|(d, v)| d.to_unit(*v)).collect()
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.dims.len()
            && self
                .dims
                .iter()
                .zip(values)
                .all(|(d, v)| (d.bounds[0]..=d.bounds[1]).contains(v))
    }

    /// Uniform draw in the transformed (unit) space.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let unit: Vec<f64> = (0..self.dim()).map(|_| rng.random::<f64>()).collect();
        self.from_unit(&unit)
    }
}
