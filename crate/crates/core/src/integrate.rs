//! Fixed-step classical Runge-Kutta integration of ordinary, relaxed and adjoint dynamics.
//!
//! Every integrator steps over a grid whose nodes include all control switching times,
//! so no step straddles a discontinuity. The control on a step is looked up at the
//! step midpoint.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::relaxed::{field_into, jacobian_into, Mesh, OrdinaryControl, RelaxedControl};
use crate::systems::DynamicsSpec;

/// States sampled at the nodes of a uniform mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mesh: Mesh,
    pub samples: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(mesh: Mesh, samples: Vec<Vec<f64>>) -> Result<Self> {
        check_len("sample list", samples.len(), mesh.cells + 1)?;
        let n = samples[0].len();
        for s in &samples {
            check_len("sample", s.len(), n)?;
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("non-finite trajectory sample".into()));
            }
        }
        Ok(Self { mesh, samples })
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.mesh.nodes()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.samples.last().unwrap()
    }

    /// Linear interpolation between nodes, clamped to the mesh span.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(self.mesh.t1, self.mesh.t2);
        let k = self.mesh.cell_of(t).unwrap_or(0);
        let (a, b) = (self.mesh.node(k), self.mesh.node(k + 1));
        let theta = (t - a) / (b - a);
        lerp(&self.samples[k], &self.samples[k + 1], theta)
    }

    pub fn to_csv(&self) -> String {
        let times = self.times();
        crate::format::series_csv(
            "x",
            self.dim(),
            times
                .iter()
                .copied()
                .zip(self.samples.iter().map(Vec::as_slice)),
        )
    }
}

/// Row covectors sampled on a mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Costate {
    pub mesh: Mesh,
    pub samples: Vec<Vec<f64>>,
}

impl Costate {
    pub fn to_csv(&self) -> String {
        let times = self.mesh.nodes();
        crate::format::series_csv(
            "psi",
            self.samples[0].len(),
            times
                .iter()
                .copied()
                .zip(self.samples.iter().map(Vec::as_slice)),
        )
    }
}

/// States on an arbitrary increasing time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Path {
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().unwrap()
    }
}

fn lerp(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + theta * (y - x)).collect()
}

/// Scratch space for one classical RK4 step.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }

    /// Advances `y` from `t` to `t + h`; `h` may be negative.
    pub(crate) fn step<F>(&mut self, rhs: &mut F, t: f64, h: f64, y: &mut [f64])
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let half = 0.5 * h;
        rhs(t, y, &mut self.k1);
        for ((s, yi), k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k1) {
            *s = yi + half * k;
        }
        rhs(t + half, &self.stage, &mut self.k2);
        for ((s, yi), k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k2) {
            *s = yi + half * k;
        }
        rhs(t + half, &self.stage, &mut self.k3);
        for ((s, yi), k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k3) {
            *s = yi + h * k;
        }
        rhs(t + h, &self.stage, &mut self.k4);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// RK4 over consecutive grid nodes. `rhs` receives the step index first.
pub(crate) fn rk4_grid<F>(times: &[f64], x1: &[f64], mut rhs: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(usize, f64, &[f64], &mut [f64]),
{
    let mut rk = Rk4::new(x1.len());
    let mut y = x1.to_vec();
    let mut out = Vec::with_capacity(times.len());
    out.push(y.clone());
    for (k, w) in times.windows(2).enumerate() {
        let mut f = |t: f64, x: &[f64], o: &mut [f64]| rhs(k, t, x, o);
        rk.step(&mut f, w[0], w[1] - w[0], &mut y);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: w[1] });
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Splits every interval of `knots` into equal steps no longer than `max_step`.
pub(crate) fn subdivide(knots: &[f64], max_step: f64) -> Vec<f64> {
    let mut out = vec![knots[0]];
    for w in knots.windows(2) {
        let m = ((w[1] - w[0]) / max_step).ceil().max(1.0) as usize;
        for i in 1..m {
            out.push(w[0] + (w[1] - w[0]) * i as f64 / m as f64);
        }
        out.push(w[1]);
    }
    out
}

fn check_state(sys: &DynamicsSpec, x1: &[f64]) -> Result<()> {
    check_len("initial state", x1.len(), sys.n)
}

fn ordinary_rhs<'a>(
    sys: &'a DynamicsSpec,
    u: &'a OrdinaryControl,
    times: &'a [f64],
) -> impl FnMut(usize, f64, &[f64], &mut [f64]) + 'a {
    move |k, t, x, out| {
        let mid = 0.5 * (times[k] + times[k + 1]);
        let piece = u.piece_of(mid).unwrap_or(u.pieces() - 1);
        sys.eval_into(t, x, &u.values[piece], out);
    }
}

fn relaxed_rhs<'a>(
    sys: &'a DynamicsSpec,
    mu: &'a RelaxedControl,
    times: &'a [f64],
) -> impl FnMut(usize, f64, &[f64], &mut [f64]) + 'a {
    let mut scratch = vec![0.0; sys.n];
    let last = mu.cells.len() - 1;
    move |k, t, x, out| {
        let mid = 0.5 * (times[k] + times[k + 1]);
        let cell = mu.mesh.cell_of(mid).unwrap_or(last);
        field_into(sys, &mu.cells[cell], t, x, out, &mut scratch);
    }
}

fn check_control(sys: &DynamicsSpec, u: &OrdinaryControl, t1: f64, t2: f64) -> Result<()> {
    check_len("control value", u.values[0].len(), sys.r)?;
    let slack = 1e-12 * (1.0 + t1.abs().max(t2.abs()));
    if u.start() > t1 + slack || u.end() < t2 - slack {
        return Err(Error::Input(format!(
            "control spans [{}, {}] but integration needs [{t1}, {t2}]",
            u.start(),
            u.end()
        )));
    }
    Ok(())
}

/// Ordinary system under a piecewise-constant control, sampled at `mesh` nodes.
pub fn integrate_ordinary(
    sys: &DynamicsSpec,
    u: &OrdinaryControl,
    x1: &[f64],
    mesh: &Mesh,
) -> Result<Trajectory> {
    check_state(sys, x1)?;
    check_control(sys, u, mesh.t1, mesh.t2)?;
    let nodes = mesh.nodes();
    let slack = 1e-12 * (1.0 + mesh.t1.abs().max(mesh.t2.abs()));
    let mut times = Vec::with_capacity(nodes.len() + u.pieces());
    let mut at_node = Vec::with_capacity(nodes.len());
    let mut breaks = u
        .breakpoints
        .iter()
        .copied()
        .filter(|&b| b > mesh.t1 && b < mesh.t2)
        .peekable();
    for &node in &nodes {
        while let Some(&b) = breaks.peek() {
            if b < node - slack {
                if times.last().is_none_or(|&l| b > l + slack) {
                    times.push(b);
                }
                breaks.next();
            } else {
                if (b - node).abs() <= slack {
                    breaks.next();
                }
                break;
            }
        }
        at_node.push(times.len());
        times.push(node);
    }
    let states = rk4_grid(&times, x1, ordinary_rhs(sys, u, &times))?;
    let samples = at_node.into_iter().map(|i| states[i].clone()).collect();
    Trajectory::new(mesh.clone(), samples)
}

/// Ordinary system over the control's own span, with every piece split into steps
/// no longer than `max_step`. Nodes include all breakpoints.
pub fn integrate_ordinary_path(
    sys: &DynamicsSpec,
    u: &OrdinaryControl,
    x1: &[f64],
    max_step: f64,
) -> Result<Path> {
    check_state(sys, x1)?;
    check_len("control value", u.values[0].len(), sys.r)?;
    if !(max_step > 0.0) {
        return Err(Error::Input("max_step must be positive".into()));
    }
    let times = subdivide(&u.breakpoints, max_step);
    let states = rk4_grid(&times, x1, ordinary_rhs(sys, u, &times))?;
    Ok(Path { times, states })
}

/// Relaxed system on `mesh`, which must refine the control's mesh.
pub fn integrate_relaxed(
    sys: &DynamicsSpec,
    mu: &RelaxedControl,
    x1: &[f64],
    mesh: &Mesh,
) -> Result<Trajectory> {
    check_state(sys, x1)?;
    check_len("atom point", mu.cells[0][0].u.len(), sys.r)?;
    if !mesh.refines(&mu.mesh) {
        return Err(Error::Input(format!(
            "integration mesh ({} cells) does not refine the control mesh ({} cells)",
            mesh.cells, mu.mesh.cells
        )));
    }
    let times = mesh.nodes();
    let samples = rk4_grid(&times, x1, relaxed_rhs(sys, mu, &times))?;
    Trajectory::new(mesh.clone(), samples)
}

/// Relaxed system on an arbitrary grid inside the control's span. The grid must
/// contain the control's cell boundaries.
pub fn integrate_relaxed_path(
    sys: &DynamicsSpec,
    mu: &RelaxedControl,
    x1: &[f64],
    times: &[f64],
) -> Result<Path> {
    check_state(sys, x1)?;
    check_len("atom point", mu.cells[0][0].u.len(), sys.r)?;
    if times.len() < 2 || times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Input("time grid must be strictly increasing".into()));
    }
    let states = rk4_grid(times, x1, relaxed_rhs(sys, mu, times))?;
    Ok(Path {
        times: times.to_vec(),
        states,
    })
}

/// Ordinary system under a control that varies inside steps; RK stages sample it directly.
pub fn integrate_signal<U>(sys: &DynamicsSpec, u: U, x1: &[f64], mesh: &Mesh) -> Result<Trajectory>
where
    U: Fn(f64) -> Vec<f64>,
{
    check_state(sys, x1)?;
    check_len("control value", u(mesh.t1).len(), sys.r)?;
    let times = mesh.nodes();
    let samples = rk4_grid(&times, x1, |_, t, x, out| sys.eval_into(t, x, &u(t), out))?;
    Trajectory::new(mesh.clone(), samples)
}

/// Averaged state Jacobian `<mu, f_x>` along a sampled reference, with the reference
/// interpolated linearly inside steps.
struct AveragedJacobian<'a> {
    sys: &'a DynamicsSpec,
    reference: &'a Trajectory,
    mu: &'a RelaxedControl,
    x: Vec<f64>,
}

impl<'a> AveragedJacobian<'a> {
    fn new(
        sys: &'a DynamicsSpec,
        reference: &'a Trajectory,
        mu: &'a RelaxedControl,
    ) -> Result<Self> {
        check_len("reference state", reference.dim(), sys.n)?;
        check_len("atom point", mu.cells[0][0].u.len(), sys.r)?;
        if !reference.mesh.refines(&mu.mesh) {
            return Err(Error::Input(
                "reference mesh does not refine the control mesh".into(),
            ));
        }
        Ok(Self {
            sys,
            reference,
            mu,
            x: vec![0.0; sys.n],
        })
    }

    /// Fills `out` (row-major) on step `k` of the reference mesh at time `t`.
    fn eval(&mut self, k: usize, t: f64, out: &mut [f64]) {
        let mesh = &self.reference.mesh;
        let (a, b) = (mesh.node(k), mesh.node(k + 1));
        let theta = (t - a) / (b - a);
        let (xa, xb) = (&self.reference.samples[k], &self.reference.samples[k + 1]);
        for (i, xi) in self.x.iter_mut().enumerate() {
            *xi = xa[i] + theta * (xb[i] - xa[i]);
        }
        let cell = self
            .mu
            .mesh
            .cell_of(0.5 * (a + b))
            .unwrap_or(self.mu.cells.len() - 1);
        jacobian_into(self.sys, &self.mu.cells[cell], t, &self.x, out);
    }
}

/// Integrates `d/dt y = -y A(t)` backward from the mesh end, `y` a row of `rows` covectors.
fn backward_linear(
    jac: &mut AveragedJacobian<'_>,
    terminal: Vec<f64>,
    rows: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = jac.sys.n;
    let mesh = jac.reference.mesh.clone();
    let mut a = vec![0.0; n * n];
    let mut rk = Rk4::new(terminal.len());
    let mut y = terminal;
    let mut out = vec![Vec::new(); mesh.cells + 1];
    out[mesh.cells] = y.clone();
    for k in (0..mesh.cells).rev() {
        let (t0, t1) = (mesh.node(k), mesh.node(k + 1));
        let mut rhs = |t: f64, psi: &[f64], o: &mut [f64]| {
            jac.eval(k, t, &mut a);
            for r in 0..rows {
                let row = &psi[r * n..(r + 1) * n];
                for c in 0..n {
                    o[r * n + c] = -(0..n).map(|i| row[i] * a[i * n + c]).sum::<f64>();
                }
            }
        };
        rk.step(&mut rhs, t1, t0 - t1, &mut y);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t0 });
        }
        out[k] = y.clone();
    }
    Ok(out)
}

/// Costate of `psi' = -psi <mu, f_x(t, x_ref, .)>` ending at `psi_terminal`.
pub fn integrate_adjoint(
    sys: &DynamicsSpec,
    reference: &Trajectory,
    mu: &RelaxedControl,
    psi_terminal: &[f64],
) -> Result<Costate> {
    check_len("terminal covector", psi_terminal.len(), sys.n)?;
    let mut jac = AveragedJacobian::new(sys, reference, mu)?;
    let samples = backward_linear(&mut jac, psi_terminal.to_vec(), 1)?;
    Ok(Costate {
        mesh: reference.mesh.clone(),
        samples,
    })
}

/// Matrices `Phi(t_i)` with `psi(t_i) = psi(t2) Phi(t_i)` for every adjoint solution.
///
/// Row `k` of `Phi` is the adjoint solution ending at the `k`-th unit covector, and
/// `Phi` is the identity at the final node.
pub fn fundamental_costate(
    sys: &DynamicsSpec,
    reference: &Trajectory,
    mu: &RelaxedControl,
) -> Result<Vec<DMatrix<f64>>> {
    let n = sys.n;
    let mut jac = AveragedJacobian::new(sys, reference, mu)?;
    let identity: Vec<f64> = (0..n * n)
        .map(|i| if i / n == i % n { 1.0 } else { 0.0 })
        .collect();
    let flat = backward_linear(&mut jac, identity, n)?;
    Ok(flat
        .into_iter()
        .map(|m| DMatrix::from_row_slice(n, n, &m))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relaxed::Atom;
    use crate::systems::get_scenario;

    #[test]
    fn constant_field_is_exact() {
        let sc = get_scenario("single_integrator").unwrap();
        let mesh = Mesh::new(0.0, 1.0, 10).unwrap();
        let u = OrdinaryControl::constant(0.0, 1.0, vec![1.0]).unwrap();
        let traj = integrate_ordinary(&sc.system.dynamics, &u, &[0.0], &mesh).unwrap();
        assert_eq!(traj.endpoint(), &[1.0]);
    }

    #[test]
    fn frozen_stays_put() {
        let sc = get_scenario("frozen").unwrap();
        let mesh = Mesh::new(0.0, 1.0, 20).unwrap();
        let u = OrdinaryControl::new(vec![0.0, 0.3, 1.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        let traj = integrate_ordinary(&sc.system.dynamics, &u, &[1.0, 2.0], &mesh).unwrap();
        assert!(traj.samples.iter().all(|s| s == &vec![1.0, 2.0]));
    }

    #[test]
    fn off_mesh_breakpoints_are_respected() {
        let sc = get_scenario("single_integrator").unwrap();
        let mesh = Mesh::new(0.0, 1.0, 4).unwrap();
        let u = OrdinaryControl::new(vec![0.0, 0.3, 1.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        let traj = integrate_ordinary(&sc.system.dynamics, &u, &[0.0], &mesh).unwrap();
        assert!((traj.samples[1][0] - 0.25).abs() < 1e-15);
        assert!((traj.samples[2][0] - 0.1).abs() < 1e-15);
        assert!((traj.endpoint()[0] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn short_control_is_rejected() {
        let sc = get_scenario("single_integrator").unwrap();
        let mesh = Mesh::new(0.0, 1.0, 4).unwrap();
        let u = OrdinaryControl::constant(0.0, 0.5, vec![1.0]).unwrap();
        assert!(integrate_ordinary(&sc.system.dynamics, &u, &[0.0], &mesh).is_err());
    }

    #[test]
    fn balanced_relaxed_on_example_31_stays_at_origin() {
        let sc = get_scenario("paper_example_31").unwrap();
        let mu = &sc.pair(Some("paper")).unwrap().control;
        let mesh = Mesh::new(0.0, 1.0, 100).unwrap();
        let traj = integrate_relaxed(&sc.system.dynamics, mu, &[0.0, 0.0], &mesh).unwrap();
        assert!(traj.samples.iter().all(|s| s == &vec![0.0, 0.0]));
    }

    #[test]
    fn single_atom_relaxed_equals_ordinary() {
        let sc = get_scenario("paper_example_31").unwrap();
        let f = &sc.system.dynamics;
        let mesh = Mesh::new(0.0, 1.0, 50).unwrap();
        let mu = RelaxedControl::dirac(Mesh::new(0.0, 1.0, 1).unwrap(), vec![1.0]).unwrap();
        let u = OrdinaryControl::constant(0.0, 1.0, vec![1.0]).unwrap();
        let a = integrate_relaxed(f, &mu, &[0.1, 0.2], &mesh).unwrap();
        let b = integrate_ordinary(f, &u, &[0.1, 0.2], &mesh).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn non_refining_mesh_is_rejected() {
        let sc = get_scenario("brockett").unwrap();
        let mu = &sc.pair(Some("loop")).unwrap().control;
        let mesh = Mesh::new(0.0, 1.0, 30).unwrap();
        assert!(integrate_relaxed(&sc.system.dynamics, mu, &[0.0; 3], &mesh).is_err());
    }

    #[test]
    fn divergence_reports_time() {
        // x' = x^2 from x = 1 blows up at t = 1.
        use crate::systems::PolyTerm;
        let f =
            DynamicsSpec::new(1, 1, vec![vec![PolyTerm::new(1.0, vec![2], vec![0], 0)]]).unwrap();
        let u = OrdinaryControl::constant(0.0, 3.0, vec![0.0]).unwrap();
        let mesh = Mesh::new(0.0, 3.0, 30).unwrap();
        match integrate_ordinary(&f, &u, &[1.0], &mesh) {
            Err(Error::Divergence { t }) => assert!(t > 0.9 && t <= 3.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn adjoint_examples() {
        let sc = get_scenario("paper_example_31").unwrap();
        let pair = sc.pair(Some("corrected")).unwrap();
        let reference = sc.reference(pair, 100).unwrap();
        let psi = integrate_adjoint(
            &sc.system.dynamics,
            &reference.trajectory,
            &pair.control,
            &[0.0, 1.0],
        )
        .unwrap();
        assert!(psi.samples.iter().all(|p| p == &vec![0.0, 1.0]));
        let zero = integrate_adjoint(
            &sc.system.dynamics,
            &reference.trajectory,
            &pair.control,
            &[0.0, 0.0],
        )
        .unwrap();
        assert!(zero.samples.iter().all(|p| p.iter().all(|&v| v == 0.0)));

        let sc = get_scenario("brockett").unwrap();
        let pair = sc.pair(Some("paper")).unwrap();
        let reference = sc.reference(pair, 100).unwrap();
        let psi = integrate_adjoint(
            &sc.system.dynamics,
            &reference.trajectory,
            &pair.control,
            &[0.3, -0.7, 2.0],
        )
        .unwrap();
        assert!(psi.samples.iter().all(|p| p == &vec![0.3, -0.7, 2.0]));
    }

    #[test]
    fn fundamental_is_identity_without_coupling() {
        let sc = get_scenario("ramp").unwrap();
        let pair = &sc.pairs[0];
        let reference = sc.reference(pair, 50).unwrap();
        let phi =
            fundamental_costate(&sc.system.dynamics, &reference.trajectory, &pair.control).unwrap();
        assert_eq!(phi.len(), 51);
        assert!(phi.iter().all(|m| *m == DMatrix::identity(1, 1)));
    }

    #[test]
    fn fundamental_superposition() {
        // mu_j reference has x1 != 0, so the example-3.1 adjoint is genuinely coupled.
        let sc = get_scenario("paper_example_31").unwrap();
        let pair = sc.pair(Some("mu_j")).unwrap();
        let reference = sc.reference(pair, 200).unwrap();
        let f = &sc.system.dynamics;
        let phi = fundamental_costate(f, &reference.trajectory, &pair.control).unwrap();
        assert_eq!(phi[200], DMatrix::identity(2, 2));
        let v = [0.7, -1.3];
        let psi = integrate_adjoint(f, &reference.trajectory, &pair.control, &v).unwrap();
        for (m, p) in phi.iter().zip(&psi.samples) {
            let row = nalgebra::RowDVector::from_row_slice(&v) * m;
            for c in 0..2 {
                assert!((row[c] - p[c]).abs() <= 1e-12, "{} vs {}", row[c], p[c]);
            }
        }
        assert!(phi[0][(1, 0)].abs() > 1e-3);
    }

    #[test]
    fn relaxed_path_matches_uniform_integration() {
        let sc = get_scenario("balanced_switch").unwrap();
        let mu = RelaxedControl::constant(
            Mesh::new(0.0, 1.0, 1).unwrap(),
            vec![
                Atom {
                    w: 0.25,
                    u: vec![-1.0],
                },
                Atom {
                    w: 0.75,
                    u: vec![1.0],
                },
            ],
        )
        .unwrap();
        let mesh = Mesh::new(0.0, 1.0, 8).unwrap();
        let a = integrate_relaxed(&sc.system.dynamics, &mu, &[0.0], &mesh).unwrap();
        let b = integrate_relaxed_path(&sc.system.dynamics, &mu, &[0.0], &mesh.nodes()).unwrap();
        assert_eq!(a.samples, b.states);
        assert!((a.endpoint()[0] - 0.5).abs() < 1e-15);
    }
}
