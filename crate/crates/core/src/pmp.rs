//! Hamiltonian, maximum function, and the multiplier-set certificate.
//!
//! A candidate costate is checked against four conditions along a reference pair:
//! the adjoint equation, the maximum condition `<psi, x'> = M`, continuity of `M`
//! along the reference, and the sign of `M` at the terminal time.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrate::{fundamental_costate, integrate_adjoint, Trajectory};
use crate::linalg::{dot, norm, row_times};
use crate::relaxed::{
    audit_admissibility, fd_velocities, jacobian_into, node_velocities, RelaxedControl, Verdict,
};
use crate::systems::{ControlSet, ControlSystem, DynamicsSpec};

/// Largest sphere scan evaluated before giving up with an unsupported-configuration error.
const MAX_SCAN: usize = 4_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransversalityConvention {
    /// `s * M(t2) <= 0`.
    Definition,
    /// `M(t2) <= 0`.
    Theorem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaConfig {
    pub s: i8,
    pub sphere_resolution: f64,
    pub residual_tol: f64,
    pub continuity_jump_tol: f64,
    pub transversality_convention: TransversalityConvention,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self {
            s: -1,
            sphere_resolution: 1e-2,
            residual_tol: 1e-6,
            continuity_jump_tol: 1e-6,
            transversality_convention: TransversalityConvention::Definition,
        }
    }
}

impl LambdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s != 1 && self.s != -1 {
            return Err(Error::Input(format!("s must be -1 or +1, got {}", self.s)));
        }
        for (name, v) in [
            ("sphere_resolution", self.sphere_resolution),
            ("residual_tol", self.residual_tol),
            ("continuity_jump_tol", self.continuity_jump_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn transversality(&self, terminal_m: f64) -> f64 {
        match self.transversality_convention {
            TransversalityConvention::Definition => f64::from(self.s) * terminal_m,
            TransversalityConvention::Theorem => terminal_m,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NonzeroViolation,
    AdjointEquation,
    MaximumCondition,
    Continuity,
    Transversality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertificateVerdict {
    Member,
    Rejected { reason: RejectReason },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub max_condition_residual: f64,
    pub adjoint_residual: f64,
    pub continuity_jump: f64,
    pub transversality_value: f64,
    pub verdict: CertificateVerdict,
}

impl CertificateReport {
    pub fn is_member(&self) -> bool {
        self.verdict == CertificateVerdict::Member
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum LambdaVerdict {
    Found {
        psi_terminal: Vec<f64>,
        report: CertificateReport,
    },
    EmptyUpToResolution {
        min_over_scan_of_max_residual: f64,
        scan_size: usize,
    },
}

pub fn hamiltonian(sys: &DynamicsSpec, t: f64, x: &[f64], psi: &[f64], u: &[f64]) -> Result<f64> {
    check_len("covector", psi.len(), sys.n)?;
    Ok(dot(psi, &sys.eval(t, x, u)?))
}

/// How `sup_u H` is computed for a given system.
#[derive(Clone, Debug)]
enum Maximizer {
    Finite(Vec<Vec<f64>>),
    AffineSphere,
    AffineBox { lower: Vec<f64>, upper: Vec<f64> },
}

/// Everything needed to maximize `H` over `U` at one `(t, x)`, independent of `psi`.
#[derive(Clone, Debug)]
enum NodeFields {
    /// `f(t, x, p)` for every point `p` of a finite set.
    Finite(Vec<Vec<f64>>),
    /// `f = drift + sum_j u_j gains[j]`.
    Affine {
        drift: Vec<f64>,
        gains: Vec<Vec<f64>>,
    },
}

impl Maximizer {
    fn for_system(sys: &ControlSystem) -> Result<Self> {
        match &sys.controls {
            ControlSet::FiniteSet { points } => Ok(Maximizer::Finite(points.clone())),
            other if !sys.dynamics.is_control_affine() => Err(Error::Unsupported(format!(
                "maximum over a continuum control set ({}) needs control-affine dynamics",
                match other {
                    ControlSet::UnitSphere { .. } => "unit sphere",
                    _ => "box",
                }
            ))),
            ControlSet::UnitSphere { .. } => Ok(Maximizer::AffineSphere),
            ControlSet::Box { lower, upper } => Ok(Maximizer::AffineBox {
                lower: lower.clone(),
                upper: upper.clone(),
            }),
        }
    }

    fn fields(&self, sys: &DynamicsSpec, t: f64, x: &[f64]) -> NodeFields {
        let eval = |u: &[f64]| {
            let mut out = vec![0.0; sys.n];
            sys.eval_into(t, x, u, &mut out);
            out
        };
        match self {
            Maximizer::Finite(points) => {
                NodeFields::Finite(points.iter().map(|p| eval(p)).collect())
            }
            Maximizer::AffineSphere | Maximizer::AffineBox { .. } => {
                let zero = vec![0.0; sys.r];
                let drift = eval(&zero);
                let gains = (0..sys.r)
                    .map(|j| {
                        let mut e = zero.clone();
                        e[j] = 1.0;
                        eval(&e).iter().zip(&drift).map(|(a, b)| a - b).collect()
                    })
                    .collect();
                NodeFields::Affine { drift, gains }
            }
        }
    }

    fn value(&self, fields: &NodeFields, psi: &[f64]) -> f64 {
        self.maximize(fields, psi, false).0
    }

    /// `(M, witness)`; the witness is only built when asked for.
    fn maximize(&self, fields: &NodeFields, psi: &[f64], witness: bool) -> (f64, Vec<f64>) {
        match (self, fields) {
            (Maximizer::Finite(points), NodeFields::Finite(values)) => {
                let mut best = 0;
                let mut best_h = dot(psi, &values[0]);
                for (i, v) in values.iter().enumerate().skip(1) {
                    let h = dot(psi, v);
                    if h > best_h {
                        best = i;
                        best_h = h;
                    }
                }
                (
                    best_h,
                    if witness {
                        points[best].clone()
                    } else {
                        Vec::new()
                    },
                )
            }
            (Maximizer::AffineSphere, NodeFields::Affine { drift, gains }) => {
                let coeffs: Vec<f64> = gains.iter().map(|g| dot(psi, g)).collect();
                let size = norm(&coeffs);
                let m = dot(psi, drift) + size;
                if !witness {
                    return (m, Vec::new());
                }
                let w = if size > 0.0 {
                    coeffs.iter().map(|c| c / size).collect()
                } else {
                    let mut e = vec![0.0; coeffs.len()];
                    e[0] = 1.0;
                    e
                };
                (m, w)
            }
            (Maximizer::AffineBox { lower, upper }, NodeFields::Affine { drift, gains }) => {
                let mut m = dot(psi, drift);
                let mut w = Vec::with_capacity(gains.len());
                for (j, g) in gains.iter().enumerate() {
                    let c = dot(psi, g);
                    let pick = if c > 0.0 { upper[j] } else { lower[j] };
                    m += c * pick;
                    w.push(pick);
                }
                (m, if witness { w } else { Vec::new() })
            }
            _ => unreachable!("node fields built by a different maximizer"),
        }
    }
}

/// `M(t, x, psi) = sup_{u in U} H(t, x, psi, u)` and a maximizing control.
///
/// Finite sets break ties toward the lowest index. Continuum sets require dynamics
/// that are affine in `u`.
pub fn max_function(
    sys: &ControlSystem,
    t: f64,
    x: &[f64],
    psi: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_len("state", x.len(), sys.n())?;
    check_len("covector", psi.len(), sys.n())?;
    let maximizer = Maximizer::for_system(sys)?;
    let fields = maximizer.fields(&sys.dynamics, t, x);
    Ok(maximizer.maximize(&fields, psi, true))
}

/// Reference data shared by every candidate costate of one pair.
struct PairData<'a> {
    sys: &'a ControlSystem,
    reference: &'a Trajectory,
    control: &'a RelaxedControl,
    maximizer: Maximizer,
    fields: Vec<NodeFields>,
    velocities: Vec<Vec<f64>>,
    /// Row-major `<mu, f_x>` at every node.
    jacobians: Vec<Vec<f64>>,
}

impl<'a> PairData<'a> {
    fn new(
        sys: &'a ControlSystem,
        reference: &'a Trajectory,
        control: &'a RelaxedControl,
        tol: f64,
    ) -> Result<Self> {
        check_len("reference state", reference.dim(), sys.n())?;
        control.check_dimensions(sys)?;
        let maximizer = Maximizer::for_system(sys)?;
        let f = &sys.dynamics;
        let audit = audit_admissibility(f, reference, control, tol)?;
        let velocities = if audit.verdict == Verdict::Pass {
            node_velocities(f, reference, control)?
        } else {
            fd_velocities(reference, control)?
        };
        let times = reference.times();
        let n = sys.n();
        let last = control.cells.len() - 1;
        let mut fields = Vec::with_capacity(times.len());
        let mut jacobians = Vec::with_capacity(times.len());
        for (&t, x) in times.iter().zip(&reference.samples) {
            fields.push(maximizer.fields(f, t, x));
            let mut a = vec![0.0; n * n];
            let cell = control.mesh.cell_of(t).unwrap_or(last);
            jacobian_into(f, &control.cells[cell], t, x, &mut a);
            jacobians.push(a);
        }
        Ok(Self {
            sys,
            reference,
            control,
            maximizer,
            fields,
            velocities,
            jacobians,
        })
    }

    /// Maximum-condition residual and transversality value for a costate path.
    fn score_path<'p>(
        &self,
        costates: impl Iterator<Item = &'p [f64]>,
        cfg: &LambdaConfig,
    ) -> (f64, f64) {
        let mut worst: f64 = 0.0;
        let mut last_m = 0.0;
        for ((psi, fields), v) in costates.zip(&self.fields).zip(&self.velocities) {
            let m = self.maximizer.value(fields, psi);
            worst = worst.max((m - dot(psi, v)).abs());
            last_m = m;
        }
        (worst, cfg.transversality(last_m))
    }

    fn score_direction(&self, phi: &[Vec<f64>], v: &[f64], cfg: &LambdaConfig) -> f64 {
        let n = v.len();
        let mut psi = vec![0.0; n];
        let mut worst: f64 = 0.0;
        let mut last_m = 0.0;
        for ((m_row, fields), vel) in phi.iter().zip(&self.fields).zip(&self.velocities) {
            row_times(v, m_row, &mut psi);
            let m = self.maximizer.value(fields, &psi);
            worst = worst.max((m - dot(&psi, vel)).abs());
            last_m = m;
        }
        worst + cfg.transversality(last_m).max(0.0)
    }

    fn report(&self, psi_terminal: &[f64], cfg: &LambdaConfig) -> Result<CertificateReport> {
        let f = &self.sys.dynamics;
        if psi_terminal.iter().all(|&v| v == 0.0) {
            return Ok(CertificateReport {
                max_condition_residual: 0.0,
                adjoint_residual: 0.0,
                continuity_jump: 0.0,
                transversality_value: 0.0,
                verdict: CertificateVerdict::Rejected {
                    reason: RejectReason::NonzeroViolation,
                },
            });
        }
        let costate = integrate_adjoint(f, self.reference, self.control, psi_terminal)?;
        let psi = &costate.samples;
        let n = self.sys.n();
        let times = self.reference.times();
        let h = self.reference.mesh.width();

        let (max_condition_residual, transversality_value) =
            self.score_path(psi.iter().map(Vec::as_slice), cfg);

        // Adjoint defect: trapezoidal consistency of consecutive costate samples with
        // psi' = -psi <mu, f_x>, using Jacobians evaluated at the nodes.
        let slope = |i: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            row_times(&psi[i], &self.jacobians[i], &mut out);
            out.iter_mut().for_each(|v| *v = -*v);
            out
        };
        let slopes: Vec<Vec<f64>> = (0..psi.len()).map(slope).collect();
        let adjoint_residual = (0..psi.len() - 1)
            .map(|i| {
                let defect: Vec<f64> = (0..n)
                    .map(|c| {
                        (psi[i + 1][c] - psi[i][c]) / h - 0.5 * (slopes[i][c] + slopes[i + 1][c])
                    })
                    .collect();
                norm(&defect)
            })
            .fold(0.0, f64::max);

        // Continuity of M: largest node-to-node jump beyond a Lipschitz allowance.
        let mut m_vals = Vec::with_capacity(psi.len());
        let mut witness_fields = Vec::with_capacity(psi.len());
        for ((p, fields), (&t, x)) in psi
            .iter()
            .zip(&self.fields)
            .zip(times.iter().zip(&self.reference.samples))
        {
            let (m, w) = self.maximizer.maximize(fields, p, true);
            m_vals.push(m);
            let mut fw = vec![0.0; n];
            f.eval_into(t, x, &w, &mut fw);
            witness_fields.push(fw);
        }
        let mut lipschitz: f64 = 0.0;
        for i in 0..psi.len() - 1 {
            let df: Vec<f64> = witness_fields[i + 1]
                .iter()
                .zip(&witness_fields[i])
                .map(|(a, b)| a - b)
                .collect();
            let c = norm(&witness_fields[i]) * norm(&slopes[i]) + norm(&psi[i]) * norm(&df) / h;
            lipschitz = lipschitz.max(c);
        }
        let biggest_jump = m_vals
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        let continuity_jump = (biggest_jump - lipschitz * h).max(0.0);

        let reason = if adjoint_residual > cfg.residual_tol {
            Some(RejectReason::AdjointEquation)
        } else if max_condition_residual > cfg.residual_tol {
            Some(RejectReason::MaximumCondition)
        } else if continuity_jump > cfg.continuity_jump_tol {
            Some(RejectReason::Continuity)
        } else if transversality_value > cfg.residual_tol {
            Some(RejectReason::Transversality)
        } else {
            None
        };
        Ok(CertificateReport {
            max_condition_residual,
            adjoint_residual,
            continuity_jump,
            transversality_value,
            verdict: match reason {
                None => CertificateVerdict::Member,
                Some(reason) => CertificateVerdict::Rejected { reason },
            },
        })
    }
}

/// Checks one terminal covector against all four conditions.
///
/// Velocities along the reference come from the relaxed field when the pair passes the
/// admissibility audit at `residual_tol`, and from finite differences otherwise.
pub fn check_lambda_candidate(
    sys: &ControlSystem,
    reference: &Trajectory,
    control: &RelaxedControl,
    psi_terminal: &[f64],
    cfg: &LambdaConfig,
) -> Result<CertificateReport> {
    cfg.validate()?;
    check_len("terminal covector", psi_terminal.len(), sys.n())?;
    PairData::new(sys, reference, control, cfg.residual_tol)?.report(psi_terminal, cfg)
}

/// Deterministic direction sets on the unit sphere of `R^n`, in canonical order.
pub fn sphere_grid(n: usize, resolution: f64) -> Result<Vec<Vec<f64>>> {
    match n {
        0 => Err(Error::Input("empty state space".into())),
        1 => Ok(vec![vec![1.0], vec![-1.0]]),
        2 => {
            let count = (2.0 * std::f64::consts::PI / resolution).ceil() as usize;
            Ok((0..count)
                .map(|k| {
                    let a = k as f64 * resolution;
                    vec![a.cos(), a.sin()]
                })
                .collect())
        }
        3 => {
            let count = (4.0 * std::f64::consts::PI / (resolution * resolution)).ceil() as usize;
            if count > MAX_SCAN {
                return Err(Error::Unsupported(format!(
                    "sphere scan of {count} directions; increase the resolution"
                )));
            }
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            Ok((0..count)
                .map(|k| {
                    let z = 1.0 - (2 * k + 1) as f64 / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = k as f64 * golden;
                    vec![rho * phi.cos(), rho * phi.sin(), z]
                })
                .collect())
        }
        4..=6 => cube_grid(n, resolution),
        _ => Err(Error::Unsupported(format!(
            "sphere scans are limited to n <= 6, got n = {n}"
        ))),
    }
}

/// Normalized points of the cube surface `[-1, 1]^n` on a grid of spacing `resolution`.
fn cube_grid(n: usize, resolution: f64) -> Result<Vec<Vec<f64>>> {
    let per_axis = (2.0 / resolution).ceil() as usize + 1;
    let count = 2 * n * per_axis.pow(n as u32 - 1);
    if count > MAX_SCAN {
        return Err(Error::Unsupported(format!(
            "sphere scan of about {count} directions; increase the resolution"
        )));
    }
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (per_axis - 1) as f64;
    let mut out = Vec::with_capacity(count);
    for face in 0..n {
        for sign in [1.0, -1.0] {
            let mut idx = vec![0usize; n - 1];
            loop {
                let mut p = Vec::with_capacity(n);
                let mut rest = idx.iter();
                // Points shared with a lower face were already emitted there.
                let mut duplicate = false;
                for axis in 0..n {
                    if axis == face {
                        p.push(sign);
                    } else {
                        let i = *rest.next().unwrap();
                        if axis < face && (i == 0 || i == per_axis - 1) {
                            duplicate = true;
                        }
                        p.push(coord(i));
                    }
                }
                if !duplicate {
                    let len = norm(&p);
                    out.push(p.into_iter().map(|v| v / len).collect());
                }
                let mut d = 0;
                while d < n - 1 {
                    idx[d] += 1;
                    if idx[d] < per_axis {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == n - 1 {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Directions within `resolution` of `center`, spaced `resolution / 100`
/// (coarser in four or more dimensions).
fn local_grid(center: &[f64], resolution: f64) -> Vec<Vec<f64>> {
    let n = center.len();
    match n {
        1 => Vec::new(),
        2 => {
            let a0 = center[1].atan2(center[0]);
            (-100..=100)
                .map(|k| {
                    let a = a0 + resolution * k as f64 / 100.0;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        }
        _ => {
            // Orthonormal tangent basis by Gram-Schmidt against the unit axes.
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for axis in 0..n {
                let mut v = vec![0.0; n];
                v[axis] = 1.0;
                for b in std::iter::once(center).chain(basis.iter().map(Vec::as_slice)) {
                    let c = dot(&v, b) / dot(b, b);
                    v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= c * bi);
                }
                let len = norm(&v);
                if len > 1e-8 {
                    basis.push(v.into_iter().map(|x| x / len).collect());
                }
                if basis.len() == n - 1 {
                    break;
                }
            }
            let steps: i64 = if n == 3 { 100 } else { 10 };
            let offsets: Vec<f64> = (-steps..=steps)
                .map(|k| resolution * k as f64 / steps as f64)
                .collect();
            let mut out = Vec::new();
            let mut push = |coef: &[f64]| {
                let mut p = center.to_vec();
                for (b, c) in basis.iter().zip(coef) {
                    p.iter_mut().zip(b).for_each(|(pi, bi)| *pi += c * bi);
                }
                let len = norm(&p);
                out.push(p.into_iter().map(|x| x / len).collect::<Vec<f64>>());
            };
            if n == 3 {
                for &a in &offsets {
                    for &b in &offsets {
                        push(&[a, b]);
                    }
                }
            } else {
                for axis in 0..basis.len() {
                    for &a in &offsets {
                        let mut coef = vec![0.0; basis.len()];
                        coef[axis] = a;
                        push(&coef);
                    }
                }
            }
            out
        }
    }
}

/// Scans terminal covectors on the unit sphere for a member of the multiplier set.
///
/// Directions are scored by maximum-condition residual plus the positive part of the
/// transversality value. The first direction in canonical order that scores within
/// `residual_tol` and passes the full check is returned. Failing that, one local pass
/// at a hundredth of the resolution is made around the best direction. Emptiness is
/// only asserted up to the scan resolution.
pub fn search_lambda(
    sys: &ControlSystem,
    reference: &Trajectory,
    control: &RelaxedControl,
    cfg: &LambdaConfig,
) -> Result<LambdaVerdict> {
    cfg.validate()?;
    let data = PairData::new(sys, reference, control, cfg.residual_tol)?;
    let phi: Vec<Vec<f64>> = fundamental_costate(&sys.dynamics, reference, control)?
        .iter()
        .map(row_major)
        .collect();

    let coarse = sphere_grid(sys.n(), cfg.sphere_resolution)?;
    let mut scanned = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (round, directions) in [Some(coarse), None].into_iter().enumerate() {
        let directions = match directions {
            Some(d) => d,
            None => match &best {
                Some((_, center)) => local_grid(center, cfg.sphere_resolution),
                None => Vec::new(),
            },
        };
        if round > 0 && directions.is_empty() {
            break;
        }
        let scores: Vec<f64> = directions
            .par_iter()
            .map(|v| data.score_direction(&phi, v, cfg))
            .collect();
        scanned += directions.len();
        for (v, &score) in directions.iter().zip(&scores) {
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, v.clone()));
            }
        }
        for (v, &score) in directions.iter().zip(&scores) {
            if score <= cfg.residual_tol {
                let report = data.report(v, cfg)?;
                if report.is_member() {
                    return Ok(LambdaVerdict::Found {
                        psi_terminal: v.clone(),
                        report,
                    });
                }
            }
        }
    }
    Ok(LambdaVerdict::EmptyUpToResolution {
        min_over_scan_of_max_residual: best.map_or(f64::INFINITY, |(s, _)| s),
        scan_size: scanned,
    })
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    (0..rows * cols).map(|i| m[(i / cols, i % cols)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::get_scenario;

    #[test]
    fn hamiltonian_examples() {
        let sc = get_scenario("paper_example_31").unwrap();
        let f = &sc.system.dynamics;
        assert_eq!(
            hamiltonian(f, 0.3, &[0.0, 0.3], &[1.0, 2.0], &[1.0]).unwrap(),
            1.0
        );
        assert_eq!(
            hamiltonian(f, 0.3, &[0.0, 0.3], &[0.0, 0.0], &[-1.0]).unwrap(),
            0.0
        );
        let sc = get_scenario("brockett").unwrap();
        let h = hamiltonian(
            &sc.system.dynamics,
            0.0,
            &[0.0; 3],
            &[3.0, 4.0, 7.0],
            &[0.0, 1.0],
        )
        .unwrap();
        assert_eq!(h, 4.0);
        assert!(hamiltonian(
            &sc.system.dynamics,
            0.0,
            &[0.0; 3],
            &[3.0, 4.0],
            &[0.0, 1.0]
        )
        .is_err());
    }

    #[test]
    fn max_function_examples() {
        let sc = get_scenario("paper_example_31").unwrap();
        let (m, w) = max_function(&sc.system, 0.5, &[0.0, 0.5], &[3.0, 1.0]).unwrap();
        assert_eq!((m, w), (3.0, vec![1.0]));
        let (m, w) = max_function(&sc.system, 0.5, &[0.0, 0.5], &[0.0, 0.0]).unwrap();
        assert_eq!((m, w), (0.0, vec![-1.0]));

        let sc = get_scenario("brockett").unwrap();
        let (m, w) = max_function(&sc.system, 0.0, &[0.0; 3], &[3.0, 4.0, 7.0]).unwrap();
        assert!((m - 5.0).abs() < 1e-15);
        assert!((w[0] - 0.6).abs() < 1e-15 && (w[1] - 0.8).abs() < 1e-15);
        let (m, w) = max_function(&sc.system, 0.0, &[0.0; 3], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!((m, w), (0.0, vec![1.0, 0.0]));
    }

    #[test]
    fn box_sign_rule() {
        let sc = get_scenario("brockett").unwrap();
        let sys = ControlSystem::new(
            sc.system.dynamics.clone(),
            ControlSet::Box {
                lower: vec![-1.0, -2.0],
                upper: vec![3.0, 1.0],
            },
        )
        .unwrap();
        let (m, w) = max_function(&sys, 0.0, &[0.0; 3], &[1.0, -1.0, 0.0]).unwrap();
        assert_eq!(w, vec![3.0, -2.0]);
        assert_eq!(m, 5.0);
    }

    #[test]
    fn non_affine_continuum_is_unsupported() {
        let sc = get_scenario("paper_example_31").unwrap();
        let sys = ControlSystem::new(
            sc.system.dynamics.clone(),
            ControlSet::UnitSphere { dim: 1 },
        )
        .unwrap();
        assert!(matches!(
            max_function(&sys, 0.0, &[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn corrected_pair_certificate() {
        let sc = get_scenario("paper_example_31").unwrap();
        let pair = sc.pair(Some("corrected")).unwrap();
        let reference = sc.reference(pair, 1000).unwrap();
        let cfg = LambdaConfig::default();
        let report = check_lambda_candidate(
            &sc.system,
            &reference.trajectory,
            &pair.control,
            &[0.0, 1.0],
            &cfg,
        )
        .unwrap();
        assert!(report.is_member(), "{report:?}");
        assert_eq!(report.max_condition_residual, 0.0);
        assert_eq!(report.transversality_value, -1.0);
    }

    #[test]
    fn balanced_switch_rejects() {
        let sc = get_scenario("balanced_switch").unwrap();
        let pair = &sc.pairs[0];
        let reference = sc.reference(pair, 1000).unwrap();
        let cfg = LambdaConfig::default();
        let report = check_lambda_candidate(
            &sc.system,
            &reference.trajectory,
            &pair.control,
            &[1.0],
            &cfg,
        )
        .unwrap();
        assert_eq!(report.max_condition_residual, 1.0);
        assert_eq!(
            report.verdict,
            CertificateVerdict::Rejected {
                reason: RejectReason::MaximumCondition
            }
        );
        let zero = check_lambda_candidate(
            &sc.system,
            &reference.trajectory,
            &pair.control,
            &[0.0],
            &cfg,
        )
        .unwrap();
        assert_eq!(
            zero.verdict,
            CertificateVerdict::Rejected {
                reason: RejectReason::NonzeroViolation
            }
        );
    }

    #[test]
    fn theorem_convention_flips_sign() {
        let sc = get_scenario("ramp").unwrap();
        let pair = &sc.pairs[0];
        let reference = sc.reference(pair, 100).unwrap();
        let cfg = LambdaConfig {
            transversality_convention: TransversalityConvention::Theorem,
            ..LambdaConfig::default()
        };
        let report = check_lambda_candidate(
            &sc.system,
            &reference.trajectory,
            &pair.control,
            &[1.0],
            &cfg,
        )
        .unwrap();
        assert_eq!(report.transversality_value, 1.0);
        assert_eq!(
            report.verdict,
            CertificateVerdict::Rejected {
                reason: RejectReason::Transversality
            }
        );
    }

    #[test]
    fn sphere_grids_are_unit() {
        for (n, res) in [(1, 0.1), (2, 0.01), (3, 0.1), (4, 0.5)] {
            let grid = sphere_grid(n, res).unwrap();
            assert!(!grid.is_empty());
            for v in &grid {
                assert!((norm(v) - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(sphere_grid(3, 0.1).unwrap().len(), 1257);
        assert!(sphere_grid(7, 0.5).is_err());
        assert!(sphere_grid(3, 1e-4).is_err());
    }

    #[test]
    fn search_examples() {
        let cfg = LambdaConfig::default();

        let sc = get_scenario("balanced_switch").unwrap();
        let pair = &sc.pairs[0];
        let reference = sc.reference(pair, 1000).unwrap();
        match search_lambda(&sc.system, &reference.trajectory, &pair.control, &cfg).unwrap() {
            LambdaVerdict::EmptyUpToResolution {
                min_over_scan_of_max_residual,
                ..
            } => assert!(min_over_scan_of_max_residual >= 0.99),
            other => panic!("expected emptiness, got {other:?}"),
        }

        let sc = get_scenario("ramp").unwrap();
        let pair = &sc.pairs[0];
        let reference = sc.reference(pair, 1000).unwrap();
        match search_lambda(&sc.system, &reference.trajectory, &pair.control, &cfg).unwrap() {
            LambdaVerdict::Found {
                psi_terminal,
                report,
            } => {
                assert_eq!(psi_terminal, vec![1.0]);
                assert!(report.max_condition_residual <= 1e-9);
            }
            other => panic!("expected a member, got {other:?}"),
        }
    }
}
