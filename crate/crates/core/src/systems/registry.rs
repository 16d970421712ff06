//! Built-in scenarios: the two worked examples plus contrast cases with known answers.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ControlSet, ControlSystem, DynamicsSpec, PolyTerm};
use crate::error::{check_len, Error, Result};
use crate::integrate::{integrate_relaxed, Trajectory};
use crate::relaxed::{
    Atom, Mesh, OrdinaryControl, RelaxedControl, VariationDirection, WeightShift,
};

pub const SCENARIO_IDS: [&str; 6] = [
    "frozen",
    "single_integrator",
    "balanced_switch",
    "ramp",
    "paper_example_31",
    "brockett",
];

/// Cells of the relaxed control behind the `loop` pair of `brockett`.
const LOOP_CELLS: usize = 40;

/// Numeric overrides accepted by the registry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Angular rate of the Brockett loop.
    pub omega: Option<f64>,
    /// Index of the `mu_j` family.
    pub j: Option<f64>,
}

impl ScenarioParams {
    pub fn omega(&self) -> f64 {
        self.omega.unwrap_or(2.0 * PI)
    }

    pub fn j(&self) -> f64 {
        self.j.unwrap_or(2.0)
    }
}

/// How the reference trajectory of a pair is obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferencePath {
    /// `x(t) = x1 + velocity * (t - t1)`.
    Affine { velocity: Vec<f64> },
    /// Solution of the relaxed system driven by the pair's control.
    Relaxed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub name: String,
    pub path: ReferencePath,
    pub control: RelaxedControl,
    /// Variation catalog used by the attainability solver; may be empty.
    pub directions: Vec<VariationDirection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub system: ControlSystem,
    pub t1: f64,
    pub t2_hat: f64,
    pub x1: Vec<f64>,
    pub pairs: Vec<ReferencePair>,
}

impl Scenario {
    /// Looks up a pair by name; `None` selects the first one.
    pub fn pair(&self, name: Option<&str>) -> Result<&ReferencePair> {
        match name {
            None => self.pairs.first().ok_or_else(|| Error::UnknownPair {
                scenario: self.id.clone(),
                pair: "<default>".into(),
            }),
            Some(name) => {
                self.pairs
                    .iter()
                    .find(|p| p.name == name)
                    .ok_or_else(|| Error::UnknownPair {
                        scenario: self.id.clone(),
                        pair: name.into(),
                    })
            }
        }
    }

    /// Integration mesh on `[t1, t2_hat]` with `cells_per_unit` steps per unit time,
    /// rounded up to a multiple of the pair's control cells.
    pub fn mesh_for(&self, pair: &ReferencePair, cells_per_unit: usize) -> Result<Mesh> {
        let span = self.t2_hat - self.t1;
        let wanted = ((cells_per_unit as f64) * span).ceil().max(1.0) as usize;
        let coarse = pair.control.mesh.cells;
        let cells = wanted.div_ceil(coarse) * coarse;
        Mesh::new(self.t1, self.t2_hat, cells)
    }

    /// Samples the reference trajectory of `pair` on its integration mesh.
    pub fn reference(&self, pair: &ReferencePair, cells_per_unit: usize) -> Result<Reference> {
        let mesh = self.mesh_for(pair, cells_per_unit)?;
        let trajectory = match &pair.path {
            ReferencePath::Affine { velocity } => {
                check_len("reference velocity", velocity.len(), self.system.n())?;
                let samples = mesh
                    .nodes()
                    .into_iter()
                    .map(|t| affine_point(&self.x1, velocity, t - self.t1))
                    .collect();
                Trajectory::new(mesh, samples)?
            }
            ReferencePath::Relaxed => {
                integrate_relaxed(&self.system.dynamics, &pair.control, &self.x1, &mesh)?
            }
        };
        Ok(Reference {
            trajectory,
            path: pair.path.clone(),
            x1: self.x1.clone(),
            t1: self.t1,
        })
    }
}

/// A sampled reference trajectory that can also be queried between nodes.
#[derive(Clone, Debug)]
pub struct Reference {
    pub trajectory: Trajectory,
    path: ReferencePath,
    x1: Vec<f64>,
    t1: f64,
}

impl Reference {
    /// Exact for affine references, linear interpolation otherwise.
    pub fn at(&self, t: f64) -> Vec<f64> {
        match &self.path {
            ReferencePath::Affine { velocity } => affine_point(&self.x1, velocity, t - self.t1),
            ReferencePath::Relaxed => self.trajectory.at(t),
        }
    }

    pub fn endpoint(&self) -> &[f64] {
        self.trajectory.endpoint()
    }
}

fn affine_point(origin: &[f64], velocity: &[f64], dt: f64) -> Vec<f64> {
    origin
        .iter()
        .zip(velocity)
        .map(|(o, v)| o + v * dt)
        .collect()
}

pub fn get_scenario(id: &str) -> Result<Scenario> {
    get_scenario_with(id, &ScenarioParams::default())
}

pub fn get_scenario_with(id: &str, params: &ScenarioParams) -> Result<Scenario> {
    if let Some(omega) = params.omega {
        if !omega.is_finite() || omega == 0.0 {
            return Err(Error::Input(format!(
                "omega must be finite and nonzero, got {omega}"
            )));
        }
    }
    if let Some(j) = params.j {
        if !(j >= 1.0) || !j.is_finite() {
            return Err(Error::Input(format!("j must be finite and >= 1, got {j}")));
        }
    }
    match id {
        "frozen" => frozen(),
        "single_integrator" => single_integrator(),
        "balanced_switch" => balanced_switch(),
        "ramp" => ramp(),
        "paper_example_31" => example_31(params.j()),
        "brockett" => brockett(params.omega()),
        other => Err(Error::UnknownScenario(other.into())),
    }
}

fn term(coeff: f64, x: &[u32], u: &[u32]) -> PolyTerm {
    PolyTerm::new(coeff, x.to_vec(), u.to_vec(), 0)
}

fn unit_mesh() -> Mesh {
    Mesh {
        t1: 0.0,
        t2: 1.0,
        cells: 1,
    }
}

fn atom(w: f64, u: &[f64]) -> Atom {
    Atom { w, u: u.to_vec() }
}

/// Moves `amount` of mass from `from` to `to` on every cell.
fn transfer(cells: usize, from: &[f64], to: &[f64], amount: f64) -> VariationDirection {
    let cell = vec![
        WeightShift {
            dw: -amount,
            u: from.to_vec(),
        },
        WeightShift {
            dw: amount,
            u: to.to_vec(),
        },
    ];
    VariationDirection {
        cells: vec![cell; cells],
    }
}

fn scalar_integrator(points: &[f64]) -> Result<ControlSystem> {
    ControlSystem::new(
        DynamicsSpec::new(1, 1, vec![vec![term(1.0, &[0], &[1])]])?,
        ControlSet::FiniteSet {
            points: points.iter().map(|&p| vec![p]).collect(),
        },
    )
}

fn frozen() -> Result<Scenario> {
    let system = ControlSystem::new(
        DynamicsSpec::new(2, 1, vec![vec![], vec![]])?,
        ControlSet::FiniteSet {
            points: vec![vec![-1.0], vec![0.0], vec![1.0]],
        },
    )?;
    Ok(Scenario {
        id: "frozen".into(),
        system,
        t1: 0.0,
        t2_hat: 1.0,
        x1: vec![0.0, 0.0],
        pairs: vec![ReferencePair {
            name: "rest".into(),
            path: ReferencePath::Affine {
                velocity: vec![0.0, 0.0],
            },
            control: RelaxedControl::constant(unit_mesh(), vec![atom(1.0, &[0.0])])?,
            directions: vec![],
        }],
    })
}

fn single_integrator() -> Result<Scenario> {
    Ok(Scenario {
        id: "single_integrator".into(),
        system: scalar_integrator(&[-1.0, 1.0])?,
        t1: 0.0,
        t2_hat: 1.0,
        x1: vec![0.0],
        pairs: vec![ReferencePair {
            name: "forward".into(),
            path: ReferencePath::Affine {
                velocity: vec![1.0],
            },
            control: RelaxedControl::constant(unit_mesh(), vec![atom(1.0, &[1.0])])?,
            directions: vec![transfer(1, &[1.0], &[-1.0], 1.0)],
        }],
    })
}

fn balanced_switch() -> Result<Scenario> {
    Ok(Scenario {
        id: "balanced_switch".into(),
        system: scalar_integrator(&[-1.0, 1.0])?,
        t1: 0.0,
        t2_hat: 1.0,
        x1: vec![0.0],
        pairs: vec![ReferencePair {
            name: "reference".into(),
            path: ReferencePath::Affine {
                velocity: vec![0.0],
            },
            control: RelaxedControl::constant(
                unit_mesh(),
                vec![atom(0.5, &[-1.0]), atom(0.5, &[1.0])],
            )?,
            directions: vec![
                transfer(1, &[-1.0], &[1.0], 0.5),
                transfer(1, &[1.0], &[-1.0], 0.5),
            ],
        }],
    })
}

fn ramp() -> Result<Scenario> {
    Ok(Scenario {
        id: "ramp".into(),
        system: scalar_integrator(&[-1.0, 0.0, 1.0])?,
        t1: 0.0,
        t2_hat: 1.0,
        x1: vec![0.0],
        pairs: vec![ReferencePair {
            name: "reference".into(),
            path: ReferencePath::Affine {
                velocity: vec![1.0],
            },
            control: RelaxedControl::constant(unit_mesh(), vec![atom(1.0, &[1.0])])?,
            directions: vec![transfer(1, &[1.0], &[0.0], 1.0)],
        }],
    })
}

fn example_31(j: f64) -> Result<Scenario> {
    // x1' = u, x2' = 1 - u^2 - x1^2
    let dynamics = DynamicsSpec::new(
        2,
        1,
        vec![
            vec![term(1.0, &[0, 0], &[1])],
            vec![
                term(1.0, &[0, 0], &[0]),
                term(-1.0, &[0, 0], &[2]),
                term(-1.0, &[2, 0], &[0]),
            ],
        ],
    )?;
    let system = ControlSystem::new(
        dynamics,
        ControlSet::FiniteSet {
            points: vec![vec![-1.0], vec![0.0], vec![1.0]],
        },
    )?;
    let diagonal = ReferencePath::Affine {
        velocity: vec![0.0, 1.0],
    };
    Ok(Scenario {
        id: "paper_example_31".into(),
        system,
        t1: 0.0,
        t2_hat: 1.0,
        x1: vec![0.0, 0.0],
        pairs: vec![
            ReferencePair {
                name: "paper".into(),
                path: diagonal.clone(),
                control: RelaxedControl::constant(
                    unit_mesh(),
                    vec![atom(0.5, &[-1.0]), atom(0.5, &[1.0])],
                )?,
                directions: vec![],
            },
            ReferencePair {
                name: "corrected".into(),
                path: diagonal,
                control: RelaxedControl::constant(unit_mesh(), vec![atom(1.0, &[0.0])])?,
                directions: vec![
                    transfer(1, &[0.0], &[1.0], 1.0),
                    transfer(1, &[0.0], &[-1.0], 1.0),
                ],
            },
            ReferencePair {
                name: "mu_j".into(),
                path: ReferencePath::Relaxed,
                control: mu_j(j)?,
                directions: vec![],
            },
        ],
    })
}

/// `(1 - 1/j) delta_{-1/j} + (1/j) delta_1`; the first atom lies outside `{-1, 0, 1}`.
fn mu_j(j: f64) -> Result<RelaxedControl> {
    RelaxedControl::constant(
        unit_mesh(),
        vec![atom(1.0 - 1.0 / j, &[-1.0 / j]), atom(1.0 / j, &[1.0])],
    )
}

fn brockett(omega: f64) -> Result<Scenario> {
    // x1' = u1, x2' = u2, x3' = x1 u2 - x2 u1
    let dynamics = DynamicsSpec::new(
        3,
        2,
        vec![
            vec![term(1.0, &[0, 0, 0], &[1, 0])],
            vec![term(1.0, &[0, 0, 0], &[0, 1])],
            vec![
                term(1.0, &[1, 0, 0], &[0, 1]),
                term(-1.0, &[0, 1, 0], &[1, 0]),
            ],
        ],
    )?;
    let system = ControlSystem::new(dynamics, ControlSet::UnitSphere { dim: 2 })?;
    let compass = RelaxedControl::constant(
        unit_mesh(),
        vec![
            atom(0.25, &[1.0, 0.0]),
            atom(0.25, &[-1.0, 0.0]),
            atom(0.25, &[0.0, 1.0]),
            atom(0.25, &[0.0, -1.0]),
        ],
    )?;
    Ok(Scenario {
        id: "brockett".into(),
        system,
        t1: 0.0,
        t2_hat: 1.0,
        x1: vec![0.0, 0.0, 0.0],
        pairs: vec![
            ReferencePair {
                name: "paper".into(),
                path: ReferencePath::Affine {
                    velocity: vec![0.0, 0.0, 1.0],
                },
                control: compass,
                directions: vec![],
            },
            ReferencePair {
                name: "loop".into(),
                path: ReferencePath::Relaxed,
                control: loop_chords(omega, LOOP_CELLS)?,
                directions: vec![],
            },
        ],
    })
}

fn circle_point(angle: f64) -> Vec<f64> {
    vec![angle.cos(), angle.sin()]
}

/// Each cell mixes the loop directions at its two end times with equal weight.
fn loop_chords(omega: f64, cells: usize) -> Result<RelaxedControl> {
    let mesh = Mesh::new(0.0, 1.0, cells)?;
    let atoms = (0..cells)
        .map(|k| {
            vec![
                Atom {
                    w: 0.5,
                    u: circle_point(omega * mesh.node(k)),
                },
                Atom {
                    w: 0.5,
                    u: circle_point(omega * mesh.node(k + 1)),
                },
            ]
        })
        .collect();
    RelaxedControl::new(mesh, atoms)
}

/// `u(t) = (cos wt, sin wt)` sampled at piece midpoints on `pieces` equal pieces of `[t1, t2]`.
pub fn brockett_loop_control(
    omega: f64,
    pieces: usize,
    t1: f64,
    t2: f64,
) -> Result<OrdinaryControl> {
    let mesh = Mesh::new(t1, t2, pieces)?;
    let breakpoints = mesh.nodes();
    let values = (0..pieces)
        .map(|k| circle_point(omega * 0.5 * (mesh.node(k) + mesh.node(k + 1))))
        .collect();
    OrdinaryControl::new(breakpoints, values)
}

/// The continuous loop control itself.
pub fn brockett_loop_signal(omega: f64) -> impl Fn(f64) -> Vec<f64> {
    move |t| circle_point(omega * t)
}
