//! Constructive local attainability.
//!
//! Given a reference pair whose multiplier set is empty, the endpoint equation
//! `x(tau, alpha) = x_ref(t2)` is solved over the terminal time and the weights of a
//! catalog of variation directions. The resulting relaxed control is then chattered
//! into an ordinary one and the final switching time is polished so the reference
//! endpoint is hit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chattering::{chatter, max_speed, ChatterPlan};
use crate::error::{check_len, Error, Result};
use crate::integrate::{integrate_ordinary_path, integrate_relaxed, subdivide, Path, Rk4};
use crate::linalg::{dist, dot, norm};
use crate::pmp::{search_lambda, LambdaConfig, LambdaVerdict};
use crate::relaxed::{perturb, Mesh, OrdinaryControl, RelaxedControl, VariationDirection};
use crate::systems::{ControlSet, ControlSystem, DynamicsSpec, ReferencePair, Scenario};

/// Largest step used in place of an unbounded direction range.
const ALPHA_CAP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn from_s(s: i8) -> Result<Self> {
        match s {
            -1 => Ok(Side::Left),
            1 => Ok(Side::Right),
            other => Err(Error::Input(format!("s must be -1 or +1, got {other}"))),
        }
    }

    pub fn s(self) -> i8 {
        match self {
            Side::Left => -1,
            Side::Right => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttainConfig {
    pub steps_per_unit: usize,
    pub newton_tol: f64,
    pub endpoint_tol: f64,
    pub max_iterations: usize,
    pub fd_step: f64,
    /// Skip the emptiness check on the multiplier set.
    pub force: bool,
    pub lambda: LambdaConfig,
}

impl Default for AttainConfig {
    fn default() -> Self {
        Self {
            steps_per_unit: 1000,
            newton_tol: 1e-10,
            endpoint_tol: 1e-9,
            max_iterations: 50,
            fd_step: 1e-6,
            force: false,
            lambda: LambdaConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttainabilityResult {
    pub tau: f64,
    pub control: OrdinaryControl,
    pub tube_deviation: f64,
    pub endpoint_error: f64,
    pub side: Side,
    pub iterations: usize,
    pub alpha: Vec<f64>,
    pub subdivisions: usize,
}

/// State at `tau` of the relaxed system under `mu + sum alpha_i delta_mu_i`, with the
/// cell measures laid on `[t1, tau]`.
pub fn endpoint_map(
    sys: &DynamicsSpec,
    mu: &RelaxedControl,
    directions: &[VariationDirection],
    tau: f64,
    alpha: &[f64],
    x1: &[f64],
    steps_per_unit: usize,
) -> Result<Vec<f64>> {
    if alpha.iter().any(|&a| !(a >= 0.0)) {
        return Err(Error::Domain(format!(
            "alpha must be nonnegative, got {alpha:?}"
        )));
    }
    let control = perturb(mu, directions, alpha)?.retimed(tau)?;
    let mesh = integration_mesh(&control, steps_per_unit)?;
    Ok(integrate_relaxed(sys, &control, x1, &mesh)?
        .endpoint()
        .to_vec())
}

fn integration_mesh(control: &RelaxedControl, steps_per_unit: usize) -> Result<Mesh> {
    let m = &control.mesh;
    let wanted = ((steps_per_unit as f64) * (m.t2 - m.t1)).ceil().max(1.0) as usize;
    Mesh::new(m.t1, m.t2, wanted.div_ceil(m.cells) * m.cells)
}

/// Open interval `(t2 - eps, t2)` or `(t2, t2 + eps)`, shrunk by `eps / 1000` at both ends.
fn tau_bounds(t2: f64, eps: f64, side: Side) -> (f64, f64) {
    let margin = eps * 1e-3;
    match side {
        Side::Left => (t2 - eps + margin, t2 - margin),
        Side::Right => (t2 + margin, t2 + eps - margin),
    }
}

struct EndpointProblem<'a> {
    sys: &'a DynamicsSpec,
    mu: &'a RelaxedControl,
    directions: &'a [VariationDirection],
    x1: &'a [f64],
    target: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    steps_per_unit: usize,
}

impl EndpointProblem<'_> {
    /// `z = (tau, alpha)`.
    fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let x = endpoint_map(
            self.sys,
            self.mu,
            self.directions,
            z[0],
            &z[1..],
            self.x1,
            self.steps_per_unit,
        )?;
        Ok(x.iter().zip(&self.target).map(|(a, b)| a - b).collect())
    }

    fn project(&self, z: &mut [f64]) {
        for ((v, lo), hi) in z.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn jacobian(&self, z: &[f64], r: &[f64], step: f64) -> Result<DMatrix<f64>> {
        let n = r.len();
        let mut jac = DMatrix::zeros(n, z.len());
        for c in 0..z.len() {
            let mut zc = z.to_vec();
            let h = if z[c] + step <= self.upper[c] {
                step
            } else {
                -step
            };
            zc[c] += h;
            let rc = match self.residual(&zc) {
                Ok(rc) => rc,
                Err(Error::Domain(_)) => {
                    zc[c] = z[c] - h;
                    let back = self.residual(&zc)?;
                    back.iter().zip(r).map(|(b, a)| 2.0 * a - b).collect()
                }
                Err(e) => return Err(e),
            };
            for i in 0..n {
                jac[(i, c)] = (rc[i] - r[i]) / h;
            }
        }
        Ok(jac)
    }
}

struct Solved {
    tau: f64,
    alpha: Vec<f64>,
    iterations: usize,
}

/// Damped Gauss-Newton with projection onto the box of admissible `(tau, alpha)`.
fn solve_endpoint(problem: &EndpointProblem<'_>, tau0: f64, cfg: &AttainConfig) -> Result<Solved> {
    let mut z = vec![0.0; 1 + problem.directions.len()];
    z[0] = tau0;
    problem.project(&mut z);
    let mut r = problem.residual(&z)?;
    let mut rn = norm(&r);
    let mut iterations = 0;
    let fail = |rn: f64, z: &[f64], iterations: usize| Error::NewtonFailed {
        best_residual: rn,
        tau: z[0],
        iterations,
    };
    while rn > cfg.newton_tol {
        if iterations == cfg.max_iterations {
            return Err(fail(rn, &z, iterations));
        }
        iterations += 1;
        let jac = problem.jacobian(&z, &r, cfg.fd_step)?;
        let rhs = -DVector::from_column_slice(&r);
        let step = jac
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Input(format!("least-squares step failed: {e}")))?;
        let mut accepted = None;
        let mut lambda = 1.0;
        for _ in 0..40 {
            let mut trial: Vec<f64> = z
                .iter()
                .zip(step.iter())
                .map(|(a, d)| a + lambda * d)
                .collect();
            problem.project(&mut trial);
            if let Ok(rt) = problem.residual(&trial) {
                let rtn = norm(&rt);
                if rtn < rn {
                    accepted = Some((trial, rt, rtn));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((zt, rt, rtn)) => {
                z = zt;
                r = rt;
                rn = rtn;
            }
            None => return Err(fail(rn, &z, iterations)),
        }
    }
    Ok(Solved {
        tau: z[0],
        alpha: z[1..].to_vec(),
        iterations,
    })
}

/// Index of the node of `path` sitting exactly at `t`.
fn node_index(path: &Path, t: f64) -> usize {
    path.times
        .partition_point(|&s| s < t)
        .min(path.times.len() - 1)
}

/// Adjusts the length of the last piece so the endpoint error is stationary along
/// the final velocity, by bisection on `<x(d) - target, f(x(d), u_last)>`.
fn polish_last_piece(
    sys: &DynamicsSpec,
    control: &OrdinaryControl,
    path: &Path,
    target: &[f64],
    max_step: f64,
) -> Result<Option<OrdinaryControl>> {
    let last = control.pieces() - 1;
    let a = control.breakpoints[last];
    let width = control.breakpoints[last + 1] - a;
    let x_start = path.states[node_index(path, a)].clone();
    let u = &control.values[last];
    let mut rk = Rk4::new(sys.n);
    let mut f = vec![0.0; sys.n];
    let mut run = |d: f64| -> f64 {
        let mut x = x_start.clone();
        if d > 0.0 {
            let steps = (d / max_step).ceil().max(1.0) as usize;
            let h = d / steps as f64;
            for i in 0..steps {
                let mut rhs = |t: f64, y: &[f64], o: &mut [f64]| sys.eval_into(t, y, u, o);
                rk.step(&mut rhs, a + i as f64 * h, h, &mut x);
            }
        }
        sys.eval_into(a + d, &x, u, &mut f);
        let gap: Vec<f64> = x.iter().zip(target).map(|(p, q)| p - q).collect();
        dot(&gap, &f)
    };
    let (mut lo, mut hi) = (0.0, 2.0 * width);
    let (g_lo, g_hi) = (run(lo), run(hi));
    if g_lo * g_hi > 0.0 {
        return Ok(None);
    }
    let rising = g_hi > g_lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (run(mid) > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let d = 0.5 * (lo + hi);
    if d <= 0.0 {
        return Ok(None);
    }
    let mut polished = control.clone();
    polished.breakpoints[last + 1] = a + d;
    Ok(Some(polished))
}

/// Checks the multiplier set, then synthesizes an ordinary control reaching the
/// reference endpoint at some `tau` within `eps` of `t2` on the requested side.
pub fn probe_attainability(
    scenario: &Scenario,
    pair: &ReferencePair,
    directions: &[VariationDirection],
    s: i8,
    eps: f64,
    cfg: &AttainConfig,
) -> Result<AttainabilityResult> {
    let side = Side::from_s(s)?;
    if !cfg.force {
        refuse_if_nonempty(scenario, pair, side, cfg)?;
    }
    attain(scenario, pair, directions, side, eps, cfg)
}

fn refuse_if_nonempty(
    scenario: &Scenario,
    pair: &ReferencePair,
    side: Side,
    cfg: &AttainConfig,
) -> Result<()> {
    let reference = scenario.reference(pair, cfg.steps_per_unit)?;
    let lambda_cfg = LambdaConfig {
        s: side.s(),
        ..cfg.lambda.clone()
    };
    match search_lambda(
        &scenario.system,
        &reference.trajectory,
        &pair.control,
        &lambda_cfg,
    )? {
        LambdaVerdict::Found { psi_terminal, .. } => Err(Error::Refused { psi_terminal }),
        LambdaVerdict::EmptyUpToResolution { .. } => Ok(()),
    }
}

fn attain(
    scenario: &Scenario,
    pair: &ReferencePair,
    directions: &[VariationDirection],
    side: Side,
    eps: f64,
    cfg: &AttainConfig,
) -> Result<AttainabilityResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Input(format!("eps must be positive, got {eps}")));
    }
    let sys = &scenario.system;
    let mu = &pair.control;
    mu.check_dimensions(sys)?;
    for d in directions {
        d.validate(mu, &sys.controls)?;
    }
    let reference = scenario.reference(pair, cfg.steps_per_unit)?;
    let target = reference.endpoint().to_vec();
    let t2 = scenario.t2_hat;
    let (tau_lo, tau_hi) = tau_bounds(t2, eps, side);
    let mut lower = vec![tau_lo];
    let mut upper = vec![tau_hi];
    for d in directions {
        lower.push(0.0);
        upper.push(d.alpha_max(mu).min(ALPHA_CAP));
    }
    let problem = EndpointProblem {
        sys: &sys.dynamics,
        mu,
        directions,
        x1: &scenario.x1,
        target: target.clone(),
        lower,
        upper,
        steps_per_unit: cfg.steps_per_unit,
    };
    let tau0 = match side {
        Side::Left => t2 - 0.5 * eps,
        Side::Right => t2 + 0.5 * eps,
    };
    let solved = solve_endpoint(&problem, tau0, cfg)?;

    // Chatter finely enough that the predicted deviation stays under eps / 4.
    let relaxed = perturb(mu, directions, &solved.alpha)?.retimed(solved.tau)?;
    let mesh = integration_mesh(&relaxed, cfg.steps_per_unit)?;
    let relaxed_traj = integrate_relaxed(&sys.dynamics, &relaxed, &scenario.x1, &mesh)?;
    let speed = max_speed(
        &sys.dynamics,
        &relaxed,
        &relaxed_traj.times(),
        &relaxed_traj.samples,
    );
    let p = ((4.0 * relaxed.mesh.width() * speed / eps).ceil() as usize).max(1);
    let mut control = chatter(&ChatterPlan::new(relaxed, p)?);
    control.check_membership(&sys.controls)?;

    let max_step = 1.0 / cfg.steps_per_unit as f64;
    let mut path = integrate_ordinary_path(&sys.dynamics, &control, &scenario.x1, max_step)?;
    let mut endpoint_error = dist(path.endpoint(), &target);
    if endpoint_error > cfg.endpoint_tol {
        if let Some(polished) =
            polish_last_piece(&sys.dynamics, &control, &path, &target, max_step)?
        {
            let polished_path =
                integrate_ordinary_path(&sys.dynamics, &polished, &scenario.x1, max_step)?;
            let polished_error = dist(polished_path.endpoint(), &target);
            if polished_error < endpoint_error {
                control = polished;
                path = polished_path;
                endpoint_error = polished_error;
            }
        }
    }
    if endpoint_error > cfg.endpoint_tol {
        return Err(Error::EndpointMiss {
            error: endpoint_error,
            tol: cfg.endpoint_tol,
        });
    }
    let tau = control.end();
    let on_side = match side {
        Side::Left => tau < t2 && tau > t2 - eps,
        Side::Right => tau > t2 && tau < t2 + eps,
    };
    if !on_side {
        return Err(Error::EndpointMiss {
            error: (tau - t2).abs(),
            tol: eps,
        });
    }

    let horizon = tau.min(t2);
    let tube_deviation = path
        .times
        .iter()
        .zip(&path.states)
        .filter(|(&t, _)| t <= horizon)
        .map(|(&t, x)| dist(x, &reference.at(t)))
        .fold(0.0, f64::max);
    if tube_deviation > eps {
        return Err(Error::TubeViolation {
            deviation: tube_deviation,
            eps,
        });
    }
    Ok(AttainabilityResult {
        tau,
        control,
        tube_deviation,
        endpoint_error,
        side,
        iterations: solved.iterations,
        alpha: solved.alpha,
        subdivisions: p,
    })
}

#[derive(Debug)]
pub struct SequenceOutcome {
    pub results: Vec<AttainabilityResult>,
    /// The probe that stopped the sequence, if any.
    pub failure: Option<Error>,
}

/// Left probes with `eps_k = eps0 / 2^k` for `k = 0..count`; stops at the first failure.
pub fn minimizing_sequence(
    scenario: &Scenario,
    pair: &ReferencePair,
    directions: &[VariationDirection],
    eps0: f64,
    count: usize,
    cfg: &AttainConfig,
) -> Result<SequenceOutcome> {
    if count == 0 {
        return Ok(SequenceOutcome {
            results: Vec::new(),
            failure: None,
        });
    }
    if !cfg.force {
        refuse_if_nonempty(scenario, pair, Side::Left, cfg)?;
    }
    let mut results = Vec::with_capacity(count);
    for k in 0..count {
        let eps = eps0 / 2f64.powi(k as i32);
        match attain(scenario, pair, directions, Side::Left, eps, cfg) {
            Ok(r) => results.push(r),
            Err(e) => {
                return Ok(SequenceOutcome {
                    results,
                    failure: Some(e),
                })
            }
        }
    }
    Ok(SequenceOutcome {
        results,
        failure: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ValueEstimate {
    /// Smallest hitting time over the samples; an upper bound on the minimal time.
    Hit {
        time: f64,
        sample: usize,
    },
    NoHit {
        closest_approach: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueProbeConfig {
    pub ball: f64,
    pub horizon: f64,
    pub samples: usize,
    pub seed: u64,
    pub steps_per_unit: usize,
}

impl Default for ValueProbeConfig {
    fn default() -> Self {
        Self {
            ball: 1e-3,
            horizon: 2.0,
            samples: 200,
            seed: 42,
            steps_per_unit: 1000,
        }
    }
}

const MAX_SWITCHES: usize = 8;

/// Random bang-bang control number `index`; the stream depends only on `(seed, index)`.
fn sample_control(points: &[Vec<f64>], horizon: f64, seed: u64, index: usize) -> OrdinaryControl {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let switches = rng.gen_range(0..=MAX_SWITCHES);
    let mut times: Vec<f64> = (0..switches).map(|_| rng.gen_range(0.0..horizon)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut breakpoints = vec![0.0];
    breakpoints.extend(times.into_iter().filter(|&t| t > 0.0));
    breakpoints.push(horizon);
    let values = (0..breakpoints.len() - 1)
        .map(|_| points[rng.gen_range(0..points.len())].clone())
        .collect();
    OrdinaryControl {
        breakpoints,
        values,
    }
}

/// First time the trajectory enters the ball, or the closest approach when it never does.
fn hitting_time(
    sys: &DynamicsSpec,
    control: &OrdinaryControl,
    t1: f64,
    x1: &[f64],
    target: &[f64],
    ball: f64,
    max_step: f64,
) -> std::result::Result<f64, f64> {
    let mut closest = dist(x1, target);
    if closest <= ball {
        return Ok(t1);
    }
    let times: Vec<f64> = subdivide(&control.breakpoints, max_step)
        .into_iter()
        .map(|t| t1 + t)
        .collect();
    let mut rk = Rk4::new(sys.n);
    let mut x = x1.to_vec();
    for w in times.windows(2) {
        let u = control.value_at(0.5 * (w[0] + w[1]) - t1).unwrap();
        let mut rhs = |t: f64, y: &[f64], o: &mut [f64]| sys.eval_into(t, y, u, o);
        let start = x.clone();
        rk.step(&mut rhs, w[0], w[1] - w[0], &mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(closest);
        }
        let d = dist(&x, target);
        if d <= ball {
            // Bisect the partial step length for the entry time.
            let (mut lo, mut hi) = (0.0, w[1] - w[0]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let mut y = start.clone();
                rk.step(&mut rhs, w[0], mid, &mut y);
                if dist(&y, target) <= ball {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(w[0] + hi);
        }
        closest = closest.min(d);
    }
    Err(closest)
}

/// Upper estimate of the minimal time from `x1` into the ball around `target`,
/// over random piecewise-constant controls with at most eight switches.
pub fn value_probe(
    sys: &ControlSystem,
    t1: f64,
    x1: &[f64],
    target: &[f64],
    cfg: &ValueProbeConfig,
) -> Result<ValueEstimate> {
    let ControlSet::FiniteSet { points } = &sys.controls else {
        return Err(Error::Unsupported(
            "value probing samples a finite control set".into(),
        ));
    };
    check_len("initial state", x1.len(), sys.n())?;
    check_len("target", target.len(), sys.n())?;
    if cfg.samples == 0 {
        return Err(Error::Input("need at least one sample".into()));
    }
    if !(cfg.ball > 0.0) || !(cfg.horizon > 0.0) || cfg.steps_per_unit == 0 {
        return Err(Error::Input(
            "ball, horizon and step count must be positive".into(),
        ));
    }
    let max_step = 1.0 / cfg.steps_per_unit as f64;
    let outcomes: Vec<std::result::Result<f64, f64>> = (0..cfg.samples)
        .into_par_iter()
        .map(|k| {
            let control = sample_control(points, cfg.horizon, cfg.seed, k);
            hitting_time(&sys.dynamics, &control, t1, x1, target, cfg.ball, max_step)
        })
        .collect();
    let mut best: Option<(f64, usize)> = None;
    let mut closest = f64::INFINITY;
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(t) if best.is_none_or(|(b, _)| t - t1 < b) => best = Some((t - t1, k)),
            Ok(_) => {}
            Err(c) => closest = closest.min(c),
        }
    }
    Ok(match best {
        Some((time, sample)) => ValueEstimate::Hit { time, sample },
        None => ValueEstimate::NoHit {
            closest_approach: closest,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::get_scenario;

    #[test]
    fn endpoint_map_unperturbed_reference() {
        let sc = get_scenario("paper_example_31").unwrap();
        let pair = sc.pair(Some("corrected")).unwrap();
        let x = endpoint_map(
            &sc.system.dynamics,
            &pair.control,
            &pair.directions,
            1.0,
            &[0.0, 0.0],
            &sc.x1,
            1000,
        )
        .unwrap();
        assert!(dist(&x, &[0.0, 1.0]) <= 1e-12);
    }

    #[test]
    fn endpoint_map_is_linear_on_balanced_switch() {
        let sc = get_scenario("balanced_switch").unwrap();
        let pair = &sc.pairs[0];
        for alpha in [0.0, 0.1, 0.37, 1.0] {
            let x = endpoint_map(
                &sc.system.dynamics,
                &pair.control,
                &pair.directions[..1],
                1.0,
                &[alpha],
                &sc.x1,
                1000,
            )
            .unwrap();
            assert!(
                (x[0] - 2.0 * alpha * 0.5).abs() <= 1e-14,
                "alpha {alpha}: {}",
                x[0]
            );
        }
        assert!(matches!(
            endpoint_map(
                &sc.system.dynamics,
                &pair.control,
                &pair.directions[..1],
                1.0,
                &[-0.1],
                &sc.x1,
                1000
            ),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            endpoint_map(
                &sc.system.dynamics,
                &pair.control,
                &pair.directions[..1],
                1.0,
                &[1.5],
                &sc.x1,
                1000
            ),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn endpoint_map_first_order_in_alpha() {
        // Moving mass from u = 0 to u = 1 gives x1(1) = alpha exactly and bends x2 at second order.
        let sc = get_scenario("paper_example_31").unwrap();
        let pair = sc.pair(Some("corrected")).unwrap();
        let f = &sc.system.dynamics;
        for alpha in [1e-3, 1e-2] {
            let x = endpoint_map(
                f,
                &pair.control,
                &pair.directions,
                1.0,
                &[alpha, 0.0],
                &sc.x1,
                1000,
            )
            .unwrap();
            assert!((x[0] - alpha).abs() <= 1e-14);
            // x2' = (1 - alpha) - (alpha t)^2, so x2(1) = 1 - alpha - alpha^2 / 3.
            assert!((x[1] - (1.0 - alpha - alpha * alpha / 3.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn balanced_switch_attains_from_both_sides() {
        let sc = get_scenario("balanced_switch").unwrap();
        let pair = &sc.pairs[0];
        let cfg = AttainConfig::default();
        let left = probe_attainability(&sc, pair, &pair.directions, -1, 0.01, &cfg).unwrap();
        assert_eq!(left.tau, 0.995);
        assert_eq!(left.side, Side::Left);
        assert!(left.endpoint_error <= 1e-12);
        assert!(left.tube_deviation <= 0.01);
        left.control.check_membership(&sc.system.controls).unwrap();

        let right = probe_attainability(&sc, pair, &pair.directions, 1, 0.01, &cfg).unwrap();
        assert!(right.tau > 1.0 && right.tau < 1.01);
        assert!(right.endpoint_error <= 1e-9);
    }

    #[test]
    fn ramp_is_refused_then_fails() {
        let sc = get_scenario("ramp").unwrap();
        let pair = &sc.pairs[0];
        let cfg = AttainConfig::default();
        assert!(matches!(
            probe_attainability(&sc, pair, &pair.directions, -1, 0.01, &cfg),
            Err(Error::Refused { .. })
        ));
        let forced = AttainConfig { force: true, ..cfg };
        match probe_attainability(&sc, pair, &pair.directions, -1, 0.01, &forced) {
            Err(Error::NewtonFailed {
                best_residual, tau, ..
            }) => {
                assert!(tau < 1.0);
                assert!(best_residual >= 1.0 - tau - 1e-15);
                assert!(best_residual > 0.0);
            }
            other => panic!("expected a failed solve, got {other:?}"),
        }
    }

    #[test]
    fn sequence_approaches_from_the_left() {
        let sc = get_scenario("balanced_switch").unwrap();
        let pair = &sc.pairs[0];
        let cfg = AttainConfig::default();
        let out = minimizing_sequence(&sc, pair, &pair.directions, 0.1, 3, &cfg).unwrap();
        assert!(out.failure.is_none());
        let taus: Vec<f64> = out.results.iter().map(|r| r.tau).collect();
        assert_eq!(taus, vec![0.95, 0.975, 0.9875]);
        let empty = minimizing_sequence(&sc, pair, &pair.directions, 0.1, 0, &cfg).unwrap();
        assert!(empty.results.is_empty());
    }

    #[test]
    fn value_probe_examples() {
        let sc = get_scenario("single_integrator").unwrap();
        let cfg = ValueProbeConfig::default();
        let at_start = value_probe(&sc.system, 0.0, &[0.0], &[0.0], &cfg).unwrap();
        assert_eq!(
            at_start,
            ValueEstimate::Hit {
                time: 0.0,
                sample: 0
            }
        );
        let far = value_probe(&sc.system, 0.0, &[0.0], &[10.0], &cfg).unwrap();
        match far {
            ValueEstimate::NoHit { closest_approach } => assert!(closest_approach >= 8.0 - 1e-9),
            other => panic!("{other:?}"),
        }
        let sc = get_scenario("brockett").unwrap();
        assert!(matches!(
            value_probe(&sc.system, 0.0, &[0.0; 3], &[0.0; 3], &cfg),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn sampled_controls_are_reproducible() {
        let points = vec![vec![-1.0], vec![1.0]];
        let a = sample_control(&points, 2.0, 42, 7);
        let b = sample_control(&points, 2.0, 42, 7);
        assert_eq!(a, b);
        assert!(a.pieces() <= MAX_SWITCHES + 1);
        assert_ne!(sample_control(&points, 2.0, 42, 8), a);
    }
}
