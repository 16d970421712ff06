//! Chattering: ordinary controls that switch among a relaxed control's atoms with
//! dwell times proportional to their weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate_ordinary_path, integrate_relaxed_path, subdivide};
use crate::linalg::{dist, norm};
use crate::relaxed::{OrdinaryControl, RelaxedControl};
use crate::systems::DynamicsSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatterPlan {
    pub source: RelaxedControl,
    /// Sub-cycles per mesh cell.
    pub subdivisions: usize,
}

impl ChatterPlan {
    pub fn new(source: RelaxedControl, subdivisions: usize) -> Result<Self> {
        if subdivisions == 0 {
            return Err(Error::Input(
                "chattering needs at least one sub-cycle per cell".into(),
            ));
        }
        Ok(Self {
            source,
            subdivisions,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub p: usize,
    pub sup_deviation: f64,
    /// Bound on the deviation between nodes, `(h / p) * max |f|`.
    pub excursion_bound: f64,
}

/// Splits each cell into `p` sub-cycles; inside a sub-cycle the atoms run in input
/// order for `(h / p) * weight` each. Zero-weight atoms are skipped.
pub fn chatter(plan: &ChatterPlan) -> OrdinaryControl {
    let mesh = &plan.source.mesh;
    let p = plan.subdivisions;
    let mut breakpoints = vec![mesh.t1];
    let mut values = Vec::new();
    for (k, atoms) in plan.source.cells.iter().enumerate() {
        let (a, b) = (mesh.node(k), mesh.node(k + 1));
        let cycle = (b - a) / p as f64;
        let live: Vec<_> = atoms.iter().filter(|atom| atom.w > 0.0).collect();
        for q in 0..p {
            let start = a + (b - a) * q as f64 / p as f64;
            let end = if q + 1 == p {
                b
            } else {
                a + (b - a) * (q + 1) as f64 / p as f64
            };
            let mut t = start;
            for (i, atom) in live.iter().enumerate() {
                t = if i + 1 == live.len() {
                    end
                } else {
                    t + cycle * atom.w
                };
                if t > *breakpoints.last().unwrap() {
                    breakpoints.push(t);
                    values.push(atom.u.clone());
                }
            }
        }
    }
    OrdinaryControl {
        breakpoints,
        values,
    }
}

/// Largest speed over the atoms along the given states.
pub(crate) fn max_speed(
    sys: &DynamicsSpec,
    mu: &RelaxedControl,
    times: &[f64],
    states: &[Vec<f64>],
) -> f64 {
    let last = mu.cells.len() - 1;
    let mut out = vec![0.0; sys.n];
    let mut best: f64 = 0.0;
    for (&t, x) in times.iter().zip(states) {
        let cell = mu.mesh.cell_of(t).unwrap_or(last);
        for atom in &mu.cells[cell] {
            sys.eval_into(t, x, &atom.u, &mut out);
            best = best.max(norm(&out));
        }
    }
    best
}

/// Uniform distance between chattered and relaxed trajectories for each `p`.
///
/// Both trajectories are integrated on the same grid: every switching time of the
/// chattered control, with pieces split into steps of at most `max_step`.
pub fn convergence_study(
    sys: &DynamicsSpec,
    mu: &RelaxedControl,
    x1: &[f64],
    p_list: &[usize],
    max_step: f64,
) -> Result<Vec<ConvergenceRow>> {
    if p_list.is_empty() || p_list.windows(2).any(|w| w[0] >= w[1]) || p_list[0] == 0 {
        return Err(Error::Input(
            "p list must be positive and strictly increasing".into(),
        ));
    }
    if !(max_step > 0.0) {
        return Err(Error::Input("max_step must be positive".into()));
    }
    let h = mu.mesh.width();
    p_list
        .par_iter()
        .map(|&p| {
            let plan = ChatterPlan::new(mu.clone(), p)?;
            let control = chatter(&plan);
            let chattered = integrate_ordinary_path(sys, &control, x1, max_step)?;
            let times = subdivide(&control.breakpoints, max_step);
            let relaxed = integrate_relaxed_path(sys, mu, x1, &times)?;
            let sup_deviation = chattered
                .states
                .iter()
                .zip(&relaxed.states)
                .map(|(a, b)| dist(a, b))
                .fold(0.0, f64::max);
            let speed = max_speed(sys, mu, &relaxed.times, &relaxed.states);
            Ok(ConvergenceRow {
                p,
                sup_deviation,
                excursion_bound: h / p as f64 * speed,
            })
        })
        .collect()
}

/// `p,sup_deviation,excursion_bound` rows.
pub fn study_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("p,sup_deviation,excursion_bound\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.p,
            crate::format::real(r.sup_deviation),
            crate::format::real(r.excursion_bound)
        ));
    }
    out
}
