mod common;

use common::{default_setup, norm, point_in_ball, small_setup};
use greensolve::measure::truncate;
use greensolve::operator::apply_measure;
use greensolve::schrodinger::{
    csola_many, default_cutoffs, solve_bounded_direct, solve_bounded_iterative, solve_l1, vu_l1_estimate,
    CsolaTolerances,
};
use greensolve::{Atom, Potential, RadonMeasure, Singularity};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn l1_diff(g: &greensolve::QuadGrid, a: &[f64], b: &[f64]) -> f64 {
    g.l1_norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// Random bounded data with `||V||_inf` below `vmax`.
fn random_bounded(rng: &mut ChaCha8Rng, n: usize, vmax: f64) -> (Vec<f64>, RadonMeasure) {
    let c0 = rng.gen_range(0.0..0.5 * vmax);
    let v: Vec<f64> = (0..n).map(|_| c0 + rng.gen_range(0.0..0.5 * vmax)).collect();
    let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.5)).collect();
    let atoms = if rng.gen_bool(0.5) { vec![Atom { point: point_in_ball(rng, 0.5), mass: rng.gen_range(-1.0..1.0) }] } else { vec![] };
    (v, RadonMeasure::new(f, atoms).unwrap())
}

fn spectral_radius(m: &greensolve::GreenMatrix) -> f64 {
    m.symmetrized_eigenvalues().unwrap().into_iter().fold(0.0, f64::max)
}

#[test]
fn iterative_and_direct_agree_on_random_configurations() {
    let (k, g, m) = small_setup(0.5);
    let vmax = 0.9 / spectral_radius(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..20 {
        let (v, mu) = random_bounded(&mut rng, g.len(), vmax);
        let d = solve_bounded_direct(&k, &g, &m, &v, &mu).unwrap();
        let it = solve_bounded_iterative(&k, &g, &m, &v, &mu, 1e-13, 2000).unwrap();
        let rel = l1_diff(&g, &d.u, &it.u) / g.l1_norm(&d.u);
        assert!(rel < 1e-8, "trial {trial}: {rel}");
        assert!(it.sandwich_violation <= 1e-10);
        assert!(d.residual < 1e-10 * g.l1_norm(&d.u).max(1.0));
    }
}

#[test]
fn solutions_are_dominated_by_the_green_operator() {
    let (k, g, m) = small_setup(0.75);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let (v, mu) = random_bounded(&mut rng, g.len(), 0.9 / spectral_radius(&m));
        let abs = RadonMeasure::new(
            mu.density.iter().map(|x| x.abs()).collect(),
            mu.atoms.iter().map(|a| Atom { mass: a.mass.abs(), ..*a }).collect(),
        )
        .unwrap();
        let bound = apply_measure(&k, &g, &m, &abs).unwrap();
        let it = solve_bounded_iterative(&k, &g, &m, &v, &mu, 1e-12, 2000).unwrap();
        for (u, b) in it.u.iter().zip(&bound) {
            assert!(u.abs() <= b * (1.0 + 1e-9) + 1e-14);
        }
        let (pos, _) = mu.split();
        let u = solve_bounded_direct(&k, &g, &m, &v, &pos).unwrap().u;
        let gp = apply_measure(&k, &g, &m, &pos).unwrap();
        for (x, y) in u.iter().zip(&gp) {
            assert!(*x >= -1e-12 * y.abs().max(1.0) && *x <= y * (1.0 + 1e-9) + 1e-14);
        }
    }
}

#[test]
fn vu_estimate_examples() {
    let (k, g, m) = small_setup(0.5);
    let one = RadonMeasure::from_density(vec![1.0; g.len()]).unwrap();
    let tv = one.total_variation(&g);
    let zero = vec![0.0; g.len()];
    let r = solve_bounded_direct(&k, &g, &m, &zero, &one).unwrap();
    assert_eq!(vu_l1_estimate(&g, &m, &r, &zero, tv, 0.5).unwrap().0, 0.0);
    let v1 = vec![1.0; g.len()];
    let r = solve_bounded_direct(&k, &g, &m, &v1, &one).unwrap();
    let (lhs, rhs) = vu_l1_estimate(&g, &m, &r, &v1, tv, 0.5).unwrap();
    assert!(lhs > 0.0 && lhs <= rhs);
}

#[test]
fn vu_bound_is_uniform_over_cutoffs() {
    let (k, g, m) = small_setup(0.5);
    let one = RadonMeasure::from_density(vec![1.0; g.len()]).unwrap();
    let tv = one.total_variation(&g);
    let vn = Potential::power(g.len(), [0.0; 3], 1.5, 1.0).unwrap().node_values(&g).unwrap();
    let mut lhs_all = vec![];
    let mut rhs_all = vec![];
    for j in 0..=14 {
        let vk = truncate(&vn, 2f64.powi(j));
        let r = solve_bounded_direct(&k, &g, &m, &vk, &one).unwrap();
        let (lhs, rhs) = vu_l1_estimate(&g, &m, &r, &vk, tv, 0.5).unwrap();
        assert!(lhs <= rhs, "k = 2^{j}: {lhs} > {rhs}");
        lhs_all.push(lhs);
        rhs_all.push(rhs);
    }
    let cap = rhs_all[3..].iter().cloned().fold(0.0, f64::max);
    assert!(rhs_all[3..].iter().all(|&r| r == cap), "{rhs_all:?}");
    assert!(lhs_all.iter().all(|&l| l <= cap));
}

#[test]
fn double_limit_comparison_principle() {
    let (_, g, m) = small_setup(0.5);
    let v1 = Potential::power(g.len(), [0.0; 3], 1.5, 1.0).unwrap();
    let v2 = Potential::new(vec![0.0; g.len()], 0.5, vec![Singularity { point: [0.0; 3], beta: 1.5, coeff: 2.0 }]).unwrap();
    let f1: Vec<f64> = g.nodes.iter().map(|x| 2.0 + x[0]).collect();
    let f2: Vec<f64> = g.nodes.iter().map(|x| 1.0 + 0.5 * x[0]).collect();
    let (u1, _) = solve_l1(&g, &m, &v1, &f1, 1e-8).unwrap();
    let (u2, _) = solve_l1(&g, &m, &v2, &f2, 1e-8).unwrap();
    for (a, b) in u1.u.iter().zip(&u2.u) {
        assert!(*a >= *b - 1e-10 * a.abs().max(1e-12));
    }
    assert!(u1.residual < 1e-6 * g.l1_norm(&u1.u));
}

#[test]
fn sign_changing_double_limit_is_linear_in_parts() {
    let (_, g, m) = small_setup(0.5);
    let v = Potential::power(g.len(), [0.0; 3], 1.0, 1.0).unwrap();
    let f: Vec<f64> = g.nodes.iter().map(|x| x[2]).collect();
    let fp: Vec<f64> = f.iter().map(|x| x.max(0.0)).collect();
    let fm: Vec<f64> = f.iter().map(|x| (-x).max(0.0)).collect();
    let (u, _) = solve_l1(&g, &m, &v, &f, 1e-9).unwrap();
    let (up, _) = solve_l1(&g, &m, &v, &fp, 1e-9).unwrap();
    let (um, _) = solve_l1(&g, &m, &v, &fm, 1e-9).unwrap();
    let comb: Vec<f64> = up.u.iter().zip(&um.u).map(|(a, b)| a - b).collect();
    assert!(l1_diff(&g, &u.u, &comb) < 1e-12 * g.l1_norm(&u.u).max(1e-12));
}

/// One csola_many call at the default grid covering the concentration properties.
#[test]
fn csola_structure_at_a_strong_singularity() {
    let (k, g, m) = default_setup(0.5);
    let n = g.len();
    let v = Potential::power(n, [0.0; 3], 1.5, 1.0).unwrap();
    let delta = RadonMeasure::point_mass(n, [0.0; 3], 1.0).unwrap();
    let dx = RadonMeasure::from_density(vec![1.0; n]).unwrap();
    let combo = RadonMeasure::combine(2.0, &delta, 3.0, &dx).unwrap();
    let off = RadonMeasure::new(vec![1.0; n], vec![Atom { point: [0.3, 0.0, 0.0], mass: 1.0 }]).unwrap();
    let cutoffs = default_cutoffs(&v);
    let reps = csola_many(&k, &g, &m, &v, &[delta.clone(), dx.clone(), combo, off], &cutoffs, None, CsolaTolerances::default())
        .unwrap();

    for r in &reps {
        assert!(r.ladder.windows(2).all(|w| w[1].l1 <= w[0].l1 * (1.0 + 1e-10)));
        assert!(r.monotonicity_defect <= 1e-10);
        for a in &r.alphas {
            assert!(a.consensus >= 0.0 && a.consensus <= a.atom_mass + 0.1, "{a:?}");
        }
    }
    let a = reps[0].alphas[0].consensus;
    assert!((a - 1.0).abs() < 0.1, "{a}");
    assert!(!reps[0].is_solution && reps[0].mu_reduced.atoms.is_empty());
    assert!(reps[1].is_solution && reps[1].alphas[0].consensus.abs() < 0.05);
    assert!(!reps[2].is_solution);
    assert!(reps[3].is_solution && reps[3].mu_reduced.atoms.len() == 1);

    let lin: Vec<f64> = reps[0].u_limit.iter().zip(&reps[1].u_limit).map(|(a, b)| 2.0 * a + 3.0 * b).collect();
    let lin_err = l1_diff(&g, &reps[2].u_limit, &lin) / g.l1_norm(&lin);
    assert!(lin_err < 1e-3, "{lin_err}");

    let (l1, _) = solve_l1(&g, &m, &v, &vec![1.0; n], 1e-10).unwrap();
    let rel = l1_diff(&g, &l1.u, &reps[1].u_limit) / g.l1_norm(&l1.u);
    assert!(rel < 1e-2, "{rel}");
    let gd = apply_measure(&k, &g, &m, &delta).unwrap();
    assert!(g.l1_norm(&reps[0].u_limit) < 0.02 * g.l1_norm(&gd));
}

#[test]
fn csola_at_a_weak_singularity_is_the_dual_solution() {
    let (k, g, m) = default_setup(0.5);
    let n = g.len();
    let v = Potential::power(n, [0.0; 3], 0.5, 1.0).unwrap();
    let delta = RadonMeasure::point_mass(n, [0.0; 3], 1.0).unwrap();
    let reps = csola_many(&k, &g, &m, &v, &[delta.clone()], &default_cutoffs(&v), None, CsolaTolerances::default()).unwrap();
    let r = &reps[0];
    assert!(r.alphas[0].consensus < 0.05 && r.is_solution);
    assert_eq!(r.mu_reduced.atoms.len(), 1);
    let vn = v.node_values(&g).unwrap();
    let d = solve_bounded_direct(&k, &g, &m, &vn, &delta).unwrap();
    let rel = l1_diff(&g, &d.u, &r.u_limit) / g.l1_norm(&d.u);
    assert!(rel < 1e-3, "{rel}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bounded_double_limit_equals_direct(c0 in 0.0f64..5.0, a in 0.1f64..3.0, b in -1.0f64..1.0) {
        let (k, g, m) = small_setup(0.5);
        let v = Potential::constant(g.len(), c0).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|x| a + b * norm(x)).collect();
        let (r, _) = solve_l1(&g, &m, &v, &f, 1e-12).unwrap();
        let d = solve_bounded_direct(&k, &g, &m, &v.node_values(&g).unwrap(), &RadonMeasure::from_density(f).unwrap()).unwrap();
        prop_assert!(l1_diff(&g, &r.u, &d.u) <= 1e-9 * g.l1_norm(&d.u));
    }
}
