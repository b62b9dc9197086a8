//! Componentwise monotone maps applied to the flow state under the time
//! derivative (identity, power laws of porous-medium type, or custom
//! monotone functions).
//!
//! Power maps use the odd extension `phi(s) = sign(s) |s|^gamma`. Custom
//! maps are checked for monotonicity by seeded sampling at construction
//! and inverted by bisection; closed-form kinds invert exactly.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{SpaceTimeField, SpatialField};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PhiComponent {
    Identity,
    /// `sign(s) * |s|^gamma` with `gamma > 0`.
    Power { gamma: f64 },
    /// Arbitrary monotone nondecreasing map with optional derivative.
    Custom {
        f: ScalarFn,
        derivative: Option<ScalarFn>,
    },
}

impl std::fmt::Debug for PhiComponent {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PhiComponent::Identity => write!(fm, "Identity"),
            PhiComponent::Power { gamma } => write!(fm, "Power({gamma})"),
            PhiComponent::Custom { .. } => write!(fm, "Custom"),
        }
    }
}

/// Monotone map applied componentwise to an `m`-component state.
#[derive(Debug, Clone)]
pub struct PhiMap {
    components: Vec<PhiComponent>,
}

/// Range used for the seeded monotonicity check of custom components.
const MONOTONE_CHECK_RANGE: (f64, f64) = (-10.0, 10.0);
const MONOTONE_CHECK_SAMPLES: usize = 1000;
const BISECTION_TOL: f64 = 1e-12;

impl PhiMap {
    pub fn identity(m: usize) -> Self {
        PhiMap {
            components: vec![PhiComponent::Identity; m],
        }
    }

    /// Same power law on every component; rejects `gamma <= 0`.
    pub fn power(m: usize, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidExponent {
                p: gamma,
                reason: "power map needs gamma > 0".into(),
            });
        }
        Ok(PhiMap {
            components: vec![PhiComponent::Power { gamma }; m],
        })
    }

    /// Build from explicit components. Custom components are sampled on
    /// a seeded grid of points and rejected if any ordered pair decreases.
    pub fn new(components: Vec<PhiComponent>) -> Result<Self> {
        for comp in &components {
            match comp {
                PhiComponent::Identity => {}
                PhiComponent::Power { gamma } => {
                    if !(gamma.is_finite() && *gamma > 0.0) {
                        return Err(Error::InvalidExponent {
                            p: *gamma,
                            reason: "power map needs gamma > 0".into(),
                        });
                    }
                }
                PhiComponent::Custom { f, .. } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b9);
                    let mut samples: Vec<f64> = (0..MONOTONE_CHECK_SAMPLES)
                        .map(|_| rng.gen_range(MONOTONE_CHECK_RANGE.0..MONOTONE_CHECK_RANGE.1))
                        .collect();
                    samples.sort_by(|a, b| a.total_cmp(b));
                    for w in samples.windows(2) {
                        let (fa, fb) = (f(w[0]), f(w[1]));
                        if !(fa.is_finite() && fb.is_finite()) || fa > fb {
                            return Err(Error::NotMonotone {
                                at: w[0],
                                left: fa,
                                right: fb,
                            });
                        }
                    }
                }
            }
        }
        Ok(PhiMap { components })
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn is_identity(&self) -> bool {
        self.components
            .iter()
            .all(|c| matches!(c, PhiComponent::Identity))
    }

    pub fn eval(&self, comp: usize, s: f64) -> f64 {
        match &self.components[comp] {
            PhiComponent::Identity => s,
            PhiComponent::Power { gamma } => s.signum() * s.abs().powf(*gamma),
            PhiComponent::Custom { f, .. } => f(s),
        }
    }

    /// Derivative of the component map; custom maps without an explicit
    /// derivative fall back to a central difference. Values are clamped
    /// into `[0, 1e15]` so degenerate points stay finite for Newton.
    pub fn derivative(&self, comp: usize, s: f64) -> f64 {
        let d = match &self.components[comp] {
            PhiComponent::Identity => 1.0,
            PhiComponent::Power { gamma } => {
                let a = s.abs();
                if a == 0.0 {
                    if *gamma >= 1.0 {
                        if *gamma == 1.0 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        f64::INFINITY
                    }
                } else {
                    gamma * a.powf(gamma - 1.0)
                }
            }
            PhiComponent::Custom { f, derivative } => match derivative {
                Some(d) => d(s),
                None => {
                    let h = 1e-6 * (1.0 + s.abs());
                    (f(s + h) - f(s - h)) / (2.0 * h)
                }
            },
        };
        d.clamp(0.0, 1e15)
    }

    /// Componentwise inverse. Closed-form kinds invert exactly; custom
    /// maps use monotone bisection to absolute tolerance 1e-12 after
    /// doubling an initial bracket around zero.
    pub fn inverse(&self, comp: usize, y: f64) -> Result<f64> {
        match &self.components[comp] {
            PhiComponent::Identity => Ok(y),
            PhiComponent::Power { gamma } => Ok(y.signum() * y.abs().powf(1.0 / gamma)),
            PhiComponent::Custom { f, .. } => {
                let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
                let mut tries = 0;
                while f(lo) > y {
                    lo *= 2.0;
                    tries += 1;
                    if tries > 1100 {
                        return Err(Error::SolverFailure {
                            time_level: 0,
                            reason: format!("bisection bracket for phi inverse of {y} not found"),
                        });
                    }
                }
                while f(hi) < y {
                    hi *= 2.0;
                    tries += 1;
                    if tries > 2200 {
                        return Err(Error::SolverFailure {
                            time_level: 0,
                            reason: format!("bisection bracket for phi inverse of {y} not found"),
                        });
                    }
                }
                while hi - lo > BISECTION_TOL {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break; // interval at floating-point resolution
                    }
                    if f(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// Map a raw node-major, component-minor slab in place.
    pub fn apply_in_place(&self, values: &mut [f64]) -> Result<()> {
        let m = self.m();
        if !values.len().is_multiple_of(m) {
            return Err(Error::ShapeMismatch(format!(
                "slab length {} is not a multiple of {} components",
                values.len(),
                m
            )));
        }
        if self.is_identity() {
            return Ok(());
        }
        for chunk in values.chunks_mut(m) {
            for (c, v) in chunk.iter_mut().enumerate() {
                *v = self.eval(c, *v);
            }
        }
        Ok(())
    }

    /// Map a space-time field componentwise.
    pub fn apply(&self, u: &SpaceTimeField) -> Result<SpaceTimeField> {
        if u.m() != self.m() {
            return Err(Error::ShapeMismatch(format!(
                "phi map has {} components, field has {}",
                self.m(),
                u.m()
            )));
        }
        let m = self.m();
        let values: Vec<f64> = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.eval(i % m, v))
            .collect();
        SpaceTimeField::from_values(u.grid().clone(), m, u.boundary(), values)
    }

    /// Map a spatial field componentwise.
    pub fn apply_spatial(&self, u: &SpatialField) -> Result<SpatialField> {
        if u.m() != self.m() {
            return Err(Error::ShapeMismatch(format!(
                "phi map has {} components, field has {}",
                self.m(),
                u.m()
            )));
        }
        let m = self.m();
        let values: Vec<f64> = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.eval(i % m, v))
            .collect();
        SpatialField::from_values(u.grid().clone(), m, u.boundary(), values)
    }

    /// Componentwise inverse applied to a spatial field.
    pub fn inverse_spatial(&self, y: &SpatialField) -> Result<SpatialField> {
        if y.m() != self.m() {
            return Err(Error::ShapeMismatch(format!(
                "phi map has {} components, field has {}",
                self.m(),
                y.m()
            )));
        }
        let m = self.m();
        let mut values = Vec::with_capacity(y.values().len());
        for (i, &v) in y.values().iter().enumerate() {
            values.push(self.inverse(i % m, v)?);
        }
        SpatialField::from_values(y.grid().clone(), m, y.boundary(), values)
    }
}
