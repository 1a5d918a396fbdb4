mod common;

use common::{default_setup, inner, norm, point_in_ball, small_setup};
use greensolve::operator::{
    apply_measure, ball_indicator, cache_path, indicator_scaling, kernel_column, load_or_assemble, loglog_slope,
    near_support, regularization_probe, CacheStatus, Equiintegrability,
};
use greensolve::{Atom, GreenMatrix, RadonMeasure};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[test]
fn weighted_self_adjointness_on_random_pairs() {
    let (_, g, m) = small_setup(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let f: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gf = m.apply_density(&f).unwrap();
        let gh = m.apply_density(&h).unwrap();
        let lhs = inner(&g, &gf, &h);
        let rhs = inner(&g, &f, &gh);
        let scale = inner(&g, &f, &f).sqrt() * inner(&g, &h, &h).sqrt();
        assert!((lhs - rhs).abs() < 1e-9 * scale);
    }
}

#[test]
fn discrete_coercivity() {
    for s in [0.5, 1.0] {
        let (_, _, m) = small_setup(s);
        let ev = m.symmetrized_eigenvalues().unwrap();
        let max = ev.iter().cloned().fold(f64::MIN, f64::max);
        let min = ev.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min >= -1e-9 * max, "s = {s}: {min} vs {max}");
    }
}

#[test]
fn atom_column_for_classical_kernel_is_closed_form() {
    let (k, g, m) = small_setup(1.0);
    let u = apply_measure(&k, &g, &m, &RadonMeasure::point_mass(g.len(), [0.0; 3], 1.0).unwrap()).unwrap();
    for i in 1..g.len() {
        let r = norm(&g.nodes[i]);
        let exact = (1.0 / r - 1.0) / (4.0 * PI);
        assert!((u[i] - exact).abs() <= 1e-12 * exact.max(1e-300), "node {i}");
    }
}

#[test]
fn mollified_atoms_converge_to_the_kernel_column() {
    let (k, g, m) = default_setup(0.5);
    let x0 = [0.0; 3];
    let col = kernel_column(&k, &g, &m, &x0).unwrap();
    let far: Vec<usize> = (0..g.len()).filter(|&i| norm(&g.nodes[i]) > 0.3 && g.boundary_dist[i] > 0.05).collect();
    let mut errs = vec![];
    for j in [2, 4, 8, 16] {
        let ind = ball_indicator(&g, &x0, 1.0 / j as f64);
        let vol = g.integrate(&ind);
        let f: Vec<f64> = ind.iter().map(|v| v / vol).collect();
        let gf = m.apply_density(&f).unwrap();
        errs.push(far.iter().map(|&i| ((gf[i] - col[i]) / col[i]).abs()).fold(0.0, f64::max));
    }
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    assert!(errs[3] < 0.01, "{errs:?}");
}

#[test]
fn indicator_scaling_properties() {
    let (k, g, m) = default_setup(0.5);
    let ladder: Vec<f64> = (1..=8).map(|j| 0.5f64.powi(j)).collect();
    let recs = indicator_scaling(&k, &g, &m, &[0.0; 3], &ladder).unwrap();
    assert!(recs.iter().all(|r| !r.clamped));
    let vmin = recs.iter().map(|r| r.value_at_x0).fold(f64::MAX, f64::min);
    let vmax = recs.iter().map(|r| r.value_at_x0).fold(0.0, f64::max);
    assert!(vmin > 0.0 && vmax / vmin < 3.0, "{vmin} {vmax}");
    assert!(recs.windows(2).all(|w| w[1].l1_norm < w[0].l1_norm));
    assert!(recs.last().unwrap().l1_norm < 0.05 * recs[0].l1_norm);
    let tail: Vec<(f64, f64)> = recs[2..].iter().map(|r| (r.rho, r.value_far)).collect();
    let slope = loglog_slope(&tail).unwrap();
    assert!((slope - 2.0).abs() < 0.15, "{slope}");
}

#[test]
fn near_support_recovers_atom_mass() {
    let (k, g, m) = default_setup(0.5);
    let ladder: Vec<f64> = (1..=10).map(|j| 0.5f64.powi(j)).collect();
    for mass in [0.5, 1.0, 2.0] {
        let mu = RadonMeasure::new(vec![1.0; g.len()], vec![Atom { point: [0.0; 3], mass }]).unwrap();
        let recs = near_support(&k, &g, &m, &mu, &[0.0; 3], &ladder).unwrap();
        let r = recs.last().unwrap().ratio;
        assert!((r - mass).abs() < 0.1 * mass, "mass {mass}: {r}");
    }
    let diffuse = RadonMeasure::from_density(vec![1.0; g.len()]).unwrap();
    let recs = near_support(&k, &g, &m, &diffuse, &[0.0; 3], &ladder).unwrap();
    let pts: Vec<(f64, f64)> = recs.iter().map(|r| (r.rho, r.scaled_mu)).collect();
    assert!(loglog_slope(&pts).unwrap() >= 0.5);
}

#[test]
fn equiintegrability_bound_holds() {
    let (k, g, m) = small_setup(0.5);
    let e = Equiintegrability::calibrate(&k, &g, &m).unwrap();
    assert_eq!(e.beta, 0.5 / 3.0);
    let all: Vec<usize> = (0..g.len()).collect();
    let zero = vec![0.0; g.len()];
    let (lhs, rhs) = e.probe(&g, &m, &zero, &all).unwrap();
    assert!(lhs == 0.0 && rhs == 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let f: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for rho in g.dyadic_ladder() {
            let set = g.nodes_in_ball(&[0.0; 3], rho);
            let (lhs, rhs) = e.probe(&g, &m, &f, &set).unwrap();
            assert!(lhs <= rhs, "rho {rho}: {lhs} > {rhs}");
        }
        let (lhs, rhs) = e.probe(&g, &m, &f, &all).unwrap();
        assert!(lhs <= rhs);
    }
    assert!(e.probe(&g, &m, &zero, &[]).is_err());
}

#[test]
fn sup_norm_ratio_is_attained_by_one() {
    let (_, g, m) = small_setup(0.5);
    let (k, _, _) = small_setup(0.5);
    let r = regularization_probe(&k, &g, &m, f64::INFINITY, f64::INFINITY, 10, 2).unwrap();
    let g1 = m.apply_density(&vec![1.0; g.len()]).unwrap();
    let sup = g.lq_norm(&g1, f64::INFINITY);
    assert!(r.random_max <= sup * (1.0 + 1e-12));
    assert!(r.ladder.iter().all(|&(_, v)| v <= sup * (1.0 + 1e-12)));
}

#[test]
fn cache_layout_and_reuse() {
    let (k, g, m) = small_setup(0.5);
    let d = tempfile::tempdir().unwrap();
    let (a, st) = load_or_assemble(&k, &g, Some(d.path())).unwrap();
    assert_eq!(st, CacheStatus::Miss);
    let path = cache_path(d.path(), &k, &g);
    let bytes = std::fs::read(&path).unwrap();
    let n = g.len();
    assert_eq!(&bytes[..4], b"GRNK");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
    assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 0.5);
    assert_eq!(bytes[21..53], g.hash());
    assert_eq!(u64::from_le_bytes(bytes[53..61].try_into().unwrap()), n as u64);
    assert_eq!(bytes.len(), 61 + 8 * (n * n + n));
    let first = f64::from_le_bytes(bytes[61..69].try_into().unwrap());
    assert_eq!(first, m.entry(0, 0));
    let (b, st) = load_or_assemble(&k, &g, Some(d.path())).unwrap();
    assert_eq!(st, CacheStatus::Hit);
    assert_eq!(a.entries(), b.entries());
    let f: Vec<f64> = g.nodes.iter().map(|x| 1.0 + x[0]).collect();
    let ua = a.apply_density(&f).unwrap();
    let ub = b.apply_density(&f).unwrap();
    assert!(ua.iter().zip(&ub).all(|(x, y)| x.to_bits() == y.to_bits()));
    let other = greensolve::GreenKernel::rfl(3, 0.75).unwrap();
    assert!(GreenMatrix::read_cache(&path, &other, &g).is_err());
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> RadonMeasure {
    let density = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let atoms = (0..2).map(|_| Atom { point: point_in_ball(rng, 0.5), mass: rng.gen_range(-2.0..2.0) }).collect();
    RadonMeasure::new(density, atoms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn measure_duality(seed in any::<u64>()) {
        let (k, g, m) = small_setup(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs = inner(&g, &m.apply_density(&f).unwrap(), &h);
        let rhs = inner(&g, &f, &m.apply_density(&h).unwrap());
        let scale = inner(&g, &f, &f).sqrt() * inner(&g, &h, &h).sqrt();
        prop_assert!((lhs - rhs).abs() < 1e-9 * scale);
        let _ = k;
    }

    #[test]
    fn positivity_and_domination(seed in any::<u64>()) {
        let (k, g, m) = small_setup(0.75);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_measure(&mut rng, g.len());
        let abs = RadonMeasure::new(
            mu.density.iter().map(|v| v.abs()).collect(),
            mu.atoms.iter().map(|a| Atom { point: a.point, mass: a.mass.abs() }).collect(),
        ).unwrap();
        let u = apply_measure(&k, &g, &m, &mu).unwrap();
        let ua = apply_measure(&k, &g, &m, &abs).unwrap();
        for (x, y) in u.iter().zip(&ua) {
            prop_assert!(*y >= 0.0);
            prop_assert!(x.abs() <= y * (1.0 + 1e-12) + 1e-14);
        }
    }
}
