use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use relaxopt::chattering::{chatter, ChatterPlan};
use relaxopt::integrate::{integrate_adjoint, integrate_relaxed};
use relaxopt::pmp::{
    check_lambda_candidate, hamiltonian, max_function, search_lambda, LambdaConfig,
};
use relaxopt::relaxed::{relaxed_field, Atom, Mesh, RelaxedControl};
use relaxopt::systems::{eval_dynamics, eval_jacobian, get_scenario, ControlSet, SCENARIO_IDS};

fn sample_in(controls: &ControlSet, raw: &[f64], pick: usize) -> Vec<f64> {
    match controls {
        ControlSet::FiniteSet { points } => points[pick % points.len()].clone(),
        ControlSet::UnitSphere { dim } => {
            let v: Vec<f64> = raw[..*dim].iter().map(|x| x + 1e-3).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect()
        }
        ControlSet::Box { lower, upper } => lower
            .iter()
            .zip(upper)
            .zip(raw)
            .map(|((lo, hi), r)| lo + (hi - lo) * (r + 1.0) / 2.0)
            .collect(),
    }
}

fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, len)
}

/// Carathéodory check: `v` lies in the hull iff it is a nonnegative affine combination
/// of some affinely independent subset of the points.
fn in_hull(points: &[Vec<f64>], v: &[f64]) -> bool {
    let n = v.len();
    let m = points.len();
    (1u32..(1 << m)).any(|mask| {
        let idx: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        if idx.len() > n + 1 {
            return false;
        }
        let mut a = DMatrix::zeros(n + 1, idx.len());
        for (c, &j) in idx.iter().enumerate() {
            for i in 0..n {
                a[(i, c)] = points[j][i];
            }
            a[(n, c)] = 1.0;
        }
        let svd = a.clone().svd(true, true);
        if svd.rank(1e-9) < idx.len() {
            return false;
        }
        let mut b = DVector::zeros(n + 1);
        for i in 0..n {
            b[i] = v[i];
        }
        b[n] = 1.0;
        let lambda = svd.solve(&b, 1e-14).unwrap();
        (&a * &lambda - &b).norm() <= 1e-9 && lambda.iter().all(|&l| l >= -1e-9)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jacobian_matches_central_differences(
        idx in 0..SCENARIO_IDS.len(),
        t in 0.0..1.0f64,
        x in vec_strategy(3),
        raw_u in prop::collection::vec(-1.0..1.0f64, 2),
        pick in 0usize..8,
    ) {
        let sc = get_scenario(SCENARIO_IDS[idx]).unwrap();
        let f = &sc.system.dynamics;
        let x = &x[..f.n];
        let u = sample_in(&sc.system.controls, &raw_u, pick);
        let jac = eval_jacobian(f, t, x, &u).unwrap();
        let h = 1e-6;
        let tol = 1e-6 * (1.0 + x.iter().map(|v| v * v).sum::<f64>());
        for k in 0..f.n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let fp = eval_dynamics(f, t, &xp, &u).unwrap();
            let fm = eval_dynamics(f, t, &xm, &u).unwrap();
            for i in 0..f.n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                prop_assert!((jac[(i, k)] - fd).abs() <= tol, "{} entry ({i},{k}): {} vs {fd}", sc.id, jac[(i, k)]);
            }
        }
    }

    #[test]
    fn dynamics_are_deterministic(idx in 0..SCENARIO_IDS.len(), t in 0.0..1.0f64, x in vec_strategy(3), raw_u in prop::collection::vec(-1.0..1.0f64, 2)) {
        let sc = get_scenario(SCENARIO_IDS[idx]).unwrap();
        let f = &sc.system.dynamics;
        let u = sample_in(&sc.system.controls, &raw_u, 1);
        let a = eval_dynamics(f, t, &x[..f.n], &u).unwrap();
        let b = eval_dynamics(f, t, &x[..f.n], &u).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn brockett_state_jacobian_is_bounded(t in 0.0..1.0f64, x in vec_strategy(3), raw_u in prop::collection::vec(-1.0..1.0f64, 2)) {
        let sc = get_scenario("brockett").unwrap();
        let u = sample_in(&sc.system.controls, &raw_u, 0);
        let jac = eval_jacobian(&sc.system.dynamics, t, &x, &u).unwrap();
        let spectral = jac.singular_values().max();
        prop_assert!(spectral <= 2f64.sqrt() + 1e-12, "norm {spectral}");
    }

    #[test]
    fn relaxed_field_is_a_convex_combination(
        use_brockett in any::<bool>(),
        raw_w in prop::collection::vec(0.01..1.0f64, 4),
        raw_u in prop::collection::vec(-1.0..1.0f64, 8),
        x in vec_strategy(3),
        t in 0.0..1.0f64,
    ) {
        let (sc, atoms) = if use_brockett {
            let sc = get_scenario("brockett").unwrap();
            let pts: Vec<Vec<f64>> = (0..4).map(|i| sample_in(&sc.system.controls, &raw_u[2 * i..2 * i + 2], 0)).collect();
            (sc, pts)
        } else {
            let sc = get_scenario("paper_example_31").unwrap();
            (sc, vec![vec![-1.0], vec![0.0], vec![1.0]])
        };
        let f = &sc.system.dynamics;
        let n = f.n;
        let x = &x[..n];
        let total: f64 = raw_w[..atoms.len()].iter().sum();
        let cell: Vec<Atom> = atoms.iter().zip(&raw_w).map(|(u, w)| Atom { w: w / total, u: u.clone() }).collect();
        let mu = RelaxedControl::constant(Mesh::new(0.0, 1.0, 1).unwrap(), cell).unwrap();
        let v = relaxed_field(f, &mu, t, x).unwrap();

        let images: Vec<Vec<f64>> = atoms.iter().map(|u| eval_dynamics(f, t, x, u).unwrap()).collect();
        prop_assert!(in_hull(&images, &v), "field {v:?} outside hull of {images:?}");
    }

    #[test]
    fn renormalized_weights_leave_field_unchanged(
        raw_w in prop::collection::vec(0.01..1.0f64, 3),
        scale in 0.1..10.0f64,
        x in vec_strategy(2),
        t in 0.0..1.0f64,
    ) {
        let sc = get_scenario("paper_example_31").unwrap();
        let f = &sc.system.dynamics;
        let pts = [-1.0, 0.0, 1.0];
        let build = |w: &[f64]| {
            let total: f64 = w.iter().sum();
            let cell = w.iter().zip(pts).map(|(w, u)| Atom { w: w / total, u: vec![u] }).collect();
            RelaxedControl::constant(Mesh::new(0.0, 1.0, 1).unwrap(), cell).unwrap()
        };
        let scaled: Vec<f64> = raw_w.iter().map(|w| w * scale).collect();
        let a = relaxed_field(f, &build(&raw_w), t, &x).unwrap();
        let b = relaxed_field(f, &build(&scaled), t, &x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-14, "{p} vs {q}");
        }
    }

    #[test]
    fn adjoint_is_linear(v in vec_strategy(3), w in vec_strategy(3), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let sc = get_scenario("brockett").unwrap();
        let pair = sc.pair(Some("loop")).unwrap();
        let reference = sc.reference(pair, 200).unwrap();
        let f = &sc.system.dynamics;
        let mix: Vec<f64> = v.iter().zip(&w).map(|(p, q)| a * p + b * q).collect();
        let pv = integrate_adjoint(f, &reference.trajectory, &pair.control, &v).unwrap();
        let pw = integrate_adjoint(f, &reference.trajectory, &pair.control, &w).unwrap();
        let pm = integrate_adjoint(f, &reference.trajectory, &pair.control, &mix).unwrap();
        let scale = 1.0 + a.abs() * v.iter().map(|x| x.abs()).sum::<f64>() + b.abs() * w.iter().map(|x| x.abs()).sum::<f64>();
        for k in 0..pm.samples.len() {
            for i in 0..3 {
                let expect = a * pv.samples[k][i] + b * pw.samples[k][i];
                prop_assert!((pm.samples[k][i] - expect).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn certificate_scores_are_homogeneous(psi in vec_strategy(3), lambda in 0.01..100.0f64, which in 0usize..3) {
        let (id, pair_name) = [("ramp", "reference"), ("paper_example_31", "corrected"), ("brockett", "paper")][which];
        let sc = get_scenario(id).unwrap();
        let pair = sc.pair(Some(pair_name)).unwrap();
        let reference = sc.reference(pair, 100).unwrap();
        let psi = &psi[..sc.system.n()];
        prop_assume!(psi.iter().any(|v| v.abs() > 1e-3));
        let scaled: Vec<f64> = psi.iter().map(|v| lambda * v).collect();
        let cfg = LambdaConfig::default();
        let r1 = check_lambda_candidate(&sc.system, &reference.trajectory, &pair.control, psi, &cfg).unwrap();
        let r2 = check_lambda_candidate(&sc.system, &reference.trajectory, &pair.control, &scaled, &cfg).unwrap();
        let close = |p: f64, q: f64| (p - q).abs() <= 1e-10 * (p.abs().max(q.abs()).max(1e-300));
        prop_assert!(close(lambda * r1.max_condition_residual, r2.max_condition_residual),
            "{} vs {}", lambda * r1.max_condition_residual, r2.max_condition_residual);
        prop_assert!(close(lambda * r1.transversality_value, r2.transversality_value));
    }

    #[test]
    fn maximizer_attains_the_maximum(psi in vec_strategy(3), x in vec_strategy(3), t in 0.0..1.0f64, which in 0usize..3) {
        let id = ["paper_example_31", "brockett", "ramp"][which];
        let sc = get_scenario(id).unwrap();
        let n = sc.system.n();
        let (m, witness) = max_function(&sc.system, t, &x[..n], &psi[..n]).unwrap();
        let h = hamiltonian(&sc.system.dynamics, t, &x[..n], &psi[..n], &witness).unwrap();
        prop_assert!((h - m).abs() <= 1e-12 * (1.0 + m.abs()), "H {h} vs M {m}");
    }

    #[test]
    fn chattering_conserves_mass(
        cells in 1usize..5,
        p in 1usize..20,
        raw_w in prop::collection::vec(0.0..1.0f64, 15),
    ) {
        let pts = [-1.0, 0.0, 1.0];
        let mesh = Mesh::new(0.0, 1.0, cells).unwrap();
        let mut atoms = Vec::new();
        for k in 0..cells {
            let w = &raw_w[3 * k..3 * k + 3];
            let total: f64 = w.iter().sum::<f64>() + 1e-3;
            atoms.push(
                w.iter()
                    .zip(pts)
                    .enumerate()
                    .map(|(i, (w, u))| Atom { w: (w + if i == 0 { 1e-3 } else { 0.0 }) / total, u: vec![u] })
                    .collect::<Vec<_>>(),
            );
        }
        let mu = RelaxedControl::new(mesh.clone(), atoms).unwrap();
        let control = chatter(&ChatterPlan::new(mu.clone(), p).unwrap());
        let sc = get_scenario("paper_example_31").unwrap();
        control.check_membership(&sc.system.controls).unwrap();
        for k in 0..cells {
            let (a, b) = (mesh.node(k), mesh.node(k + 1));
            for atom in &mu.cells[k] {
                let spent: f64 = (0..control.pieces())
                    .filter(|&i| control.values[i] == atom.u)
                    .map(|i| {
                        let (s, e) = (control.breakpoints[i], control.breakpoints[i + 1]);
                        (e.min(b) - s.max(a)).max(0.0)
                    })
                    .sum();
                prop_assert!((spent - mesh.width() * atom.w).abs() <= 1e-14, "cell {k}: {spent} vs {}", mesh.width() * atom.w);
            }
        }
    }
}

#[test]
fn integration_is_bit_reproducible() {
    let sc = get_scenario("brockett").unwrap();
    let pair = sc.pair(Some("loop")).unwrap();
    let mesh = sc.mesh_for(pair, 500).unwrap();
    let a = integrate_relaxed(&sc.system.dynamics, &pair.control, &sc.x1, &mesh).unwrap();
    let b = integrate_relaxed(&sc.system.dynamics, &pair.control, &sc.x1, &mesh).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    for (p, q) in a.samples.iter().flatten().zip(b.samples.iter().flatten()) {
        assert_eq!(p.to_bits(), q.to_bits());
    }
}

#[test]
fn search_verdict_does_not_depend_on_worker_count() {
    for id in ["balanced_switch", "ramp"] {
        let sc = get_scenario(id).unwrap();
        let pair = &sc.pairs[0];
        let reference = sc.reference(pair, 200).unwrap();
        let cfg = LambdaConfig::default();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    search_lambda(&sc.system, &reference.trajectory, &pair.control, &cfg).unwrap()
                })
        };
        let one = serde_json::to_string(&run(1)).unwrap();
        assert_eq!(one, serde_json::to_string(&run(4)).unwrap());
        assert_eq!(one, serde_json::to_string(&run(4)).unwrap());
    }
}
