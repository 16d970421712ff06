//! Control systems with polynomial right-hand sides and structured control sets.
//!
//! A [`DynamicsSpec`] stores each state component of `f(t, x, u)` as a sum of
//! monomials, which gives exact state Jacobians without finite differences.

mod registry;

pub use registry::{
    brockett_loop_control, brockett_loop_signal, get_scenario, get_scenario_with, Reference,
    ReferencePair, ReferencePath, Scenario, ScenarioParams, SCENARIO_IDS,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Radius tolerance for membership in the unit sphere.
pub const SPHERE_TOL: f64 = 1e-12;

/// A single monomial `coeff * t^a * prod x_i^b_i * prod u_j^c_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coeff: f64,
    pub x_exponents: Vec<u32>,
    pub u_exponents: Vec<u32>,
    pub t_exponent: u32,
}

impl PolyTerm {
    pub fn new(coeff: f64, x_exponents: Vec<u32>, u_exponents: Vec<u32>, t_exponent: u32) -> Self {
        Self {
            coeff,
            x_exponents,
            u_exponents,
            t_exponent,
        }
    }

    fn value(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        let mut v = self.coeff;
        if self.t_exponent > 0 {
            v *= t.powi(self.t_exponent as i32);
        }
        for (&xi, &e) in x.iter().zip(&self.x_exponents) {
            if e > 0 {
                v *= xi.powi(e as i32);
            }
        }
        for (&uj, &e) in u.iter().zip(&self.u_exponents) {
            if e > 0 {
                v *= uj.powi(e as i32);
            }
        }
        v
    }

    /// Partial derivative with respect to `x[k]`.
    fn dx(&self, k: usize, t: f64, x: &[f64], u: &[f64]) -> f64 {
        let ek = self.x_exponents[k];
        if ek == 0 || self.coeff == 0.0 {
            return 0.0;
        }
        let mut v = self.coeff * f64::from(ek);
        if self.t_exponent > 0 {
            v *= t.powi(self.t_exponent as i32);
        }
        for (i, (&xi, &e)) in x.iter().zip(&self.x_exponents).enumerate() {
            let e = if i == k { e - 1 } else { e };
            if e > 0 {
                v *= xi.powi(e as i32);
            }
        }
        for (&uj, &e) in u.iter().zip(&self.u_exponents) {
            if e > 0 {
                v *= uj.powi(e as i32);
            }
        }
        v
    }

    fn u_degree(&self) -> u32 {
        self.u_exponents.iter().sum()
    }
}

/// Polynomial dynamics `f: R x R^n x R^r -> R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSpec {
    pub n: usize,
    pub r: usize,
    pub components: Vec<Vec<PolyTerm>>,
}

impl DynamicsSpec {
    pub fn new(n: usize, r: usize, components: Vec<Vec<PolyTerm>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("state dimension must be positive".into()));
        }
        check_len("component list", components.len(), n)?;
        for (i, comp) in components.iter().enumerate() {
            for term in comp {
                if term.x_exponents.len() != n || term.u_exponents.len() != r {
                    return Err(Error::Dimension(format!(
                        "term in component {i} has exponent lengths ({}, {}), expected ({n}, {r})",
                        term.x_exponents.len(),
                        term.u_exponents.len()
                    )));
                }
                if !term.coeff.is_finite() {
                    return Err(Error::Input(format!(
                        "non-finite coefficient in component {i}"
                    )));
                }
            }
        }
        Ok(Self { n, r, components })
    }

    /// `f(t, x, u)`.
    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_args(x, u)?;
        let mut out = vec![0.0; self.n];
        self.eval_into(t, x, u, &mut out);
        Ok(out)
    }

    /// `f_x(t, x, u)`, row `i` holding the gradient of component `i`.
    pub fn jacobian(&self, t: f64, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_args(x, u)?;
        let mut out = vec![0.0; self.n * self.n];
        self.add_jacobian_into(1.0, t, x, u, &mut out);
        Ok(DMatrix::from_row_slice(self.n, self.n, &out))
    }

    /// True when every monomial has total degree at most one in `u`.
    pub fn is_control_affine(&self) -> bool {
        self.components
            .iter()
            .flatten()
            .all(|term| term.u_degree() <= 1)
    }

    pub(crate) fn check_args(&self, x: &[f64], u: &[f64]) -> Result<()> {
        check_len("state", x.len(), self.n)?;
        check_len("control", u.len(), self.r)
    }

    pub(crate) fn eval_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        for (o, comp) in out.iter_mut().zip(&self.components) {
            *o = comp.iter().map(|term| term.value(t, x, u)).sum();
        }
    }

    /// Adds `weight * f_x` into a row-major `n x n` buffer.
    pub(crate) fn add_jacobian_into(
        &self,
        weight: f64,
        t: f64,
        x: &[f64],
        u: &[f64],
        out: &mut [f64],
    ) {
        let n = self.n;
        for (i, comp) in self.components.iter().enumerate() {
            for k in 0..n {
                let d: f64 = comp.iter().map(|term| term.dx(k, t, x, u)).sum();
                out[i * n + k] += weight * d;
            }
        }
    }
}

/// Admissible control values `U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSet {
    FiniteSet { points: Vec<Vec<f64>> },
    UnitSphere { dim: usize },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl ControlSet {
    pub fn dim(&self) -> usize {
        match self {
            ControlSet::FiniteSet { points } => points.first().map_or(0, Vec::len),
            ControlSet::UnitSphere { dim } => *dim,
            ControlSet::Box { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControlSet::FiniteSet { points } => {
                let Some(first) = points.first() else {
                    return Err(Error::Input("finite control set is empty".into()));
                };
                for p in points {
                    check_len("control point", p.len(), first.len())?;
                    if p.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Input("non-finite control point".into()));
                    }
                }
            }
            ControlSet::UnitSphere { dim } => {
                if *dim == 0 {
                    return Err(Error::Input("sphere dimension must be positive".into()));
                }
            }
            ControlSet::Box { lower, upper } => {
                check_len("box upper bound", upper.len(), lower.len())?;
                if lower.iter().zip(upper).any(|(lo, hi)| !(lo <= hi)) {
                    return Err(Error::Input(
                        "box requires lower <= upper componentwise".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Exact membership for finite sets and boxes; sphere radius within [`SPHERE_TOL`].
    pub fn contains(&self, u: &[f64]) -> bool {
        if u.len() != self.dim() {
            return false;
        }
        match self {
            ControlSet::FiniteSet { points } => points.iter().any(|p| p.as_slice() == u),
            ControlSet::UnitSphere { .. } => {
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                (norm - 1.0).abs() <= SPHERE_TOL
            }
            ControlSet::Box { lower, upper } => u
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi),
        }
    }
}

/// Dynamics paired with the set its controls range over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSystem {
    pub dynamics: DynamicsSpec,
    pub controls: ControlSet,
}

impl ControlSystem {
    pub fn new(dynamics: DynamicsSpec, controls: ControlSet) -> Result<Self> {
        controls.validate()?;
        check_len("control set", controls.dim(), dynamics.r)?;
        Ok(Self { dynamics, controls })
    }

    pub fn n(&self) -> usize {
        self.dynamics.n
    }

    pub fn r(&self) -> usize {
        self.dynamics.r
    }
}

pub fn eval_dynamics(sys: &DynamicsSpec, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    sys.eval(t, x, u)
}

pub fn eval_jacobian(sys: &DynamicsSpec, t: f64, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
    sys.jacobian(t, x, u)
}
