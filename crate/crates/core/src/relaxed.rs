//! Finitely supported relaxed controls, piecewise-constant ordinary controls,
//! and the admissibility audit of reference pairs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrate::Trajectory;
use crate::systems::{ControlSet, ControlSystem, DynamicsSpec};

/// Tolerance on the unit sum of a cell's weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Uniform partition of `[t1, t2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeshRepr")]
pub struct Mesh {
    pub t1: f64,
    pub t2: f64,
    pub cells: usize,
}

#[derive(Deserialize)]
struct MeshRepr {
    t1: f64,
    t2: f64,
    cells: usize,
}

impl TryFrom<MeshRepr> for Mesh {
    type Error = Error;
    fn try_from(m: MeshRepr) -> Result<Self> {
        Mesh::new(m.t1, m.t2, m.cells)
    }
}

impl Mesh {
    pub fn new(t1: f64, t2: f64, cells: usize) -> Result<Self> {
        if !(t1.is_finite() && t2.is_finite() && t1 < t2) {
            return Err(Error::Input(format!(
                "mesh needs t1 < t2, got [{t1}, {t2}]"
            )));
        }
        if cells == 0 {
            return Err(Error::Input("mesh needs at least one cell".into()));
        }
        Ok(Self { t1, t2, cells })
    }

    pub fn width(&self) -> f64 {
        (self.t2 - self.t1) / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i >= self.cells {
            self.t2
        } else {
            self.t1 + i as f64 * self.width()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.node(i)).collect()
    }

    /// Cell containing `t`: right-open cells, last cell closed, ties go to the later cell.
    pub fn cell_of(&self, t: f64) -> Option<usize> {
        if !(t >= self.t1 && t <= self.t2) {
            return None;
        }
        let guess = ((t - self.t1) / self.width()).floor();
        let mut k = if guess < 0.0 {
            0
        } else {
            (guess as usize).min(self.cells - 1)
        };
        if k + 1 < self.cells && t >= self.node(k + 1) {
            k += 1;
        } else if k > 0 && t < self.node(k) {
            k -= 1;
        }
        Some(k)
    }

    /// True when `self` has the same span and each of `coarse`'s cells splits into
    /// a whole number of `self`'s cells.
    pub fn refines(&self, coarse: &Mesh) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.cells.is_multiple_of(coarse.cells)
            && close(self.t1, coarse.t1)
            && close(self.t2, coarse.t2)
    }
}

/// One Dirac mass `w * delta_u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub w: f64,
    pub u: Vec<f64>,
}

/// A convex combination of Dirac masses on each cell of a mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RelaxedRepr")]
pub struct RelaxedControl {
    pub mesh: Mesh,
    #[serde(rename = "atoms")]
    pub cells: Vec<Vec<Atom>>,
}

#[derive(Deserialize)]
struct RelaxedRepr {
    mesh: Mesh,
    atoms: Vec<Vec<Atom>>,
}

impl TryFrom<RelaxedRepr> for RelaxedControl {
    type Error = Error;
    fn try_from(r: RelaxedRepr) -> Result<Self> {
        RelaxedControl::new(r.mesh, r.atoms)
    }
}

impl RelaxedControl {
    /// Checks weights (each in `[0, 1]`, unit sum per cell) and that all points share one dimension.
    pub fn new(mesh: Mesh, cells: Vec<Vec<Atom>>) -> Result<Self> {
        check_len("atom cell list", cells.len(), mesh.cells)?;
        let dim = cells
            .first()
            .and_then(|c| c.first())
            .map(|a| a.u.len())
            .unwrap_or(0);
        for (k, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Input(format!("cell {k} has no atoms")));
            }
            let mut total = 0.0;
            for a in cell {
                if !(0.0..=1.0).contains(&a.w) {
                    return Err(Error::Input(format!(
                        "cell {k}: weight {} outside [0, 1]",
                        a.w
                    )));
                }
                check_len("atom point", a.u.len(), dim)?;
                if a.u.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Input(format!("cell {k}: non-finite atom point")));
                }
                total += a.w;
            }
            if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::Input(format!(
                    "cell {k}: weights sum to {total}, not 1"
                )));
            }
        }
        Ok(Self { mesh, cells })
    }

    /// The same measure on every cell.
    pub fn constant(mesh: Mesh, atoms: Vec<Atom>) -> Result<Self> {
        let cells = vec![atoms; mesh.cells];
        Self::new(mesh, cells)
    }

    pub fn dirac(mesh: Mesh, u: Vec<f64>) -> Result<Self> {
        Self::constant(mesh, vec![Atom { w: 1.0, u }])
    }

    /// Control dimension and the `n + 1` atom cap.
    pub fn check_dimensions(&self, sys: &ControlSystem) -> Result<()> {
        let cap = sys.n() + 1;
        for (k, cell) in self.cells.iter().enumerate() {
            if cell.len() > cap {
                return Err(Error::Input(format!(
                    "cell {k} has {} atoms, at most {cap} allowed",
                    cell.len()
                )));
            }
            for a in cell {
                check_len("atom point", a.u.len(), sys.r())?;
            }
        }
        Ok(())
    }

    pub fn check_membership(&self, controls: &ControlSet) -> Result<()> {
        for (k, cell) in self.cells.iter().enumerate() {
            if let Some(a) = cell.iter().find(|a| !controls.contains(&a.u)) {
                return Err(Error::Domain(format!(
                    "cell {k}: atom {:?} is not in U",
                    a.u
                )));
            }
        }
        Ok(())
    }

    pub fn measure_at(&self, t: f64) -> Result<&[Atom]> {
        self.mesh
            .cell_of(t)
            .map(|k| self.cells[k].as_slice())
            .ok_or_else(|| {
                Error::Domain(format!(
                    "t = {t} outside [{}, {}]",
                    self.mesh.t1, self.mesh.t2
                ))
            })
    }

    /// Same cell measures laid on `[t1, t_end]` with the same number of cells.
    pub fn retimed(&self, t_end: f64) -> Result<Self> {
        Ok(Self {
            mesh: Mesh::new(self.mesh.t1, t_end, self.mesh.cells)?,
            cells: self.cells.clone(),
        })
    }
}

pub(crate) fn field_into(
    sys: &DynamicsSpec,
    atoms: &[Atom],
    t: f64,
    x: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    // Seeding with the first atom keeps a single Dirac bit-identical to `f`.
    sys.eval_into(t, x, &atoms[0].u, out);
    if atoms.len() == 1 && atoms[0].w == 1.0 {
        return;
    }
    let w0 = atoms[0].w;
    out.iter_mut().for_each(|v| *v *= w0);
    for a in &atoms[1..] {
        sys.eval_into(t, x, &a.u, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += a.w * s;
        }
    }
}

pub(crate) fn jacobian_into(
    sys: &DynamicsSpec,
    atoms: &[Atom],
    t: f64,
    x: &[f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for a in atoms {
        sys.add_jacobian_into(a.w, t, x, &a.u, out);
    }
}

/// `<mu_t, f(t, x, .)>` on the cell containing `t`.
pub fn relaxed_field(
    sys: &DynamicsSpec,
    mu: &RelaxedControl,
    t: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let atoms = mu.measure_at(t)?;
    sys.check_args(x, &atoms[0].u)?;
    let mut out = vec![0.0; sys.n];
    let mut scratch = vec![0.0; sys.n];
    field_into(sys, atoms, t, x, &mut out, &mut scratch);
    Ok(out)
}

/// `<mu_t, f_x(t, x, .)>` on the cell containing `t`.
pub fn relaxed_jacobian(
    sys: &DynamicsSpec,
    mu: &RelaxedControl,
    t: f64,
    x: &[f64],
) -> Result<DMatrix<f64>> {
    let atoms = mu.measure_at(t)?;
    sys.check_args(x, &atoms[0].u)?;
    let mut out = vec![0.0; sys.n * sys.n];
    jacobian_into(sys, atoms, t, x, &mut out);
    Ok(DMatrix::from_row_slice(sys.n, sys.n, &out))
}

/// Piecewise-constant control: `values[k]` on `[breakpoints[k], breakpoints[k + 1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrdinaryControl {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl OrdinaryControl {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input(
                "ordinary control needs at least one piece".into(),
            ));
        }
        check_len("breakpoint list", breakpoints.len(), values.len() + 1)?;
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Input(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::Input("non-finite breakpoint".into()));
        }
        let dim = values[0].len();
        for v in &values {
            check_len("control value", v.len(), dim)?;
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn constant(t1: f64, t2: f64, u: Vec<f64>) -> Result<Self> {
        Self::new(vec![t1, t2], vec![u])
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    /// Index of the piece containing `t` (right-open, last piece closed).
    pub fn piece_of(&self, t: f64) -> Option<usize> {
        if !(t >= self.start() && t <= self.end()) {
            return None;
        }
        let k = self.breakpoints.partition_point(|&b| b <= t);
        Some(k.saturating_sub(1).min(self.pieces() - 1))
    }

    pub fn value_at(&self, t: f64) -> Option<&[f64]> {
        self.piece_of(t).map(|k| self.values[k].as_slice())
    }

    pub fn check_membership(&self, controls: &ControlSet) -> Result<()> {
        match self.values.iter().find(|v| !controls.contains(v)) {
            Some(v) => Err(Error::Domain(format!("control value {v:?} is not in U"))),
            None => Ok(()),
        }
    }

    /// `t_start,t_end,u0,...` with one row per piece.
    pub fn to_csv(&self) -> String {
        let r = self.values[0].len();
        let mut header = vec!["t_start".to_string(), "t_end".to_string()];
        header.extend((0..r).map(|j| format!("u{j}")));
        let mut out = header.join(",");
        out.push('\n');
        for (k, v) in self.values.iter().enumerate() {
            let mut row = vec![
                crate::format::real(self.breakpoints[k]),
                crate::format::real(self.breakpoints[k + 1]),
            ];
            row.extend(v.iter().map(|&x| crate::format::real(x)));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Signed mass shift applied to one atom location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightShift {
    pub dw: f64,
    pub u: Vec<f64>,
}

/// A signed perturbation `delta mu` of a relaxed control, cell by cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationDirection {
    pub cells: Vec<Vec<WeightShift>>,
}

impl VariationDirection {
    /// Per-cell deltas must cancel and shifted points must lie in `U`.
    pub fn validate(&self, mu: &RelaxedControl, controls: &ControlSet) -> Result<()> {
        check_len("direction cell list", self.cells.len(), mu.cells.len())?;
        for (k, cell) in self.cells.iter().enumerate() {
            let total: f64 = cell.iter().map(|s| s.dw).sum();
            if total.abs() > WEIGHT_SUM_TOL {
                return Err(Error::Input(format!(
                    "direction cell {k}: deltas sum to {total}"
                )));
            }
            if let Some(s) = cell.iter().find(|s| !controls.contains(&s.u)) {
                return Err(Error::Domain(format!(
                    "direction point {:?} is not in U",
                    s.u
                )));
            }
        }
        Ok(())
    }

    /// Largest step keeping every weight of `mu + alpha * self` nonnegative.
    pub fn alpha_max(&self, mu: &RelaxedControl) -> f64 {
        let mut best = f64::INFINITY;
        for (cell, shifts) in mu.cells.iter().zip(&self.cells) {
            for s in shifts.iter().filter(|s| s.dw < 0.0) {
                let have: f64 = cell.iter().filter(|a| a.u == s.u).map(|a| a.w).sum();
                best = best.min(have / -s.dw);
            }
        }
        best
    }
}

/// `mu + sum_i alphas[i] * directions[i]`, merging shifts into atoms with equal points.
pub fn perturb(
    mu: &RelaxedControl,
    directions: &[VariationDirection],
    alphas: &[f64],
) -> Result<RelaxedControl> {
    check_len("alpha vector", alphas.len(), directions.len())?;
    let mut cells = mu.cells.clone();
    for (dir, &alpha) in directions.iter().zip(alphas) {
        check_len("direction cell list", dir.cells.len(), cells.len())?;
        if alpha == 0.0 {
            continue;
        }
        for (cell, shifts) in cells.iter_mut().zip(&dir.cells) {
            for s in shifts {
                match cell.iter_mut().find(|a| a.u == s.u) {
                    Some(a) => a.w += alpha * s.dw,
                    None => cell.push(Atom {
                        w: alpha * s.dw,
                        u: s.u.clone(),
                    }),
                }
            }
        }
    }
    for (k, cell) in cells.iter_mut().enumerate() {
        for a in cell.iter_mut() {
            if a.w < -1e-14 {
                return Err(Error::Domain(format!(
                    "cell {k}: perturbed weight {} < 0",
                    a.w
                )));
            }
            a.w = a.w.clamp(0.0, 1.0);
        }
    }
    RelaxedControl::new(mu.mesh.clone(), cells)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub sup_residual: f64,
    pub residual_profile: Vec<f64>,
    pub tol: f64,
    pub verdict: Verdict,
}

/// Finite-difference velocities of a sampled trajectory.
///
/// Interior nodes use centered differences, except at boundaries of `mu`'s cells where
/// the difference is taken one-sided into the later cell. End nodes are one-sided.
pub fn fd_velocities(traj: &Trajectory, mu: &RelaxedControl) -> Result<Vec<Vec<f64>>> {
    if !traj.mesh.refines(&mu.mesh) {
        return Err(Error::Input(
            "trajectory mesh does not refine the control mesh".into(),
        ));
    }
    let steps = traj.mesh.cells / mu.mesh.cells;
    let last = traj.mesh.cells;
    let h = traj.mesh.width();
    let x = &traj.samples;
    let n = x[0].len();
    let combine = |coeffs: &[(usize, f64)], scale: f64| -> Vec<f64> {
        (0..n)
            .map(|c| coeffs.iter().map(|&(i, w)| w * x[i][c]).sum::<f64>() / scale)
            .collect()
    };
    let forward = |i: usize| {
        if steps >= 2 {
            combine(&[(i, -3.0), (i + 1, 4.0), (i + 2, -1.0)], 2.0 * h)
        } else {
            combine(&[(i, -1.0), (i + 1, 1.0)], h)
        }
    };
    let out = (0..=last)
        .map(|i| {
            if i == last {
                if steps >= 2 {
                    combine(&[(i, 3.0), (i - 1, -4.0), (i - 2, 1.0)], 2.0 * h)
                } else {
                    combine(&[(i, 1.0), (i - 1, -1.0)], h)
                }
            } else if i % steps == 0 {
                forward(i)
            } else {
                combine(&[(i + 1, 1.0), (i - 1, -1.0)], 2.0 * h)
            }
        })
        .collect();
    Ok(out)
}

/// Relaxed field along a sampled trajectory, one vector per node.
pub fn node_velocities(
    sys: &DynamicsSpec,
    traj: &Trajectory,
    mu: &RelaxedControl,
) -> Result<Vec<Vec<f64>>> {
    traj.mesh
        .nodes()
        .iter()
        .zip(&traj.samples)
        .map(|(&t, x)| relaxed_field(sys, mu, t, x))
        .collect()
}

/// Sup-norm defect between the sampled trajectory's slope and the relaxed field.
pub fn audit_admissibility(
    sys: &DynamicsSpec,
    traj: &Trajectory,
    mu: &RelaxedControl,
    tol: f64,
) -> Result<AdmissibilityReport> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let slopes = fd_velocities(traj, mu)?;
    let fields = node_velocities(sys, traj, mu)?;
    let residual_profile: Vec<f64> = slopes
        .iter()
        .zip(&fields)
        .map(|(s, f)| crate::linalg::dist(s, f))
        .collect();
    let sup_residual = residual_profile.iter().copied().fold(0.0, f64::max);
    Ok(AdmissibilityReport {
        sup_residual,
        residual_profile,
        tol,
        verdict: if sup_residual <= tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
    })
}
