//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use common::{default_setup, norm, point_in_ball, setup};
use greensolve::diagnostics::z_equivalence_suite;
use greensolve::grid::GridSpec;
use greensolve::measure::z_membership_analytic;
use greensolve::operator::{apply_measure, critical_exponent, loglog_slope, near_support, regularization_probe};
use greensolve::schrodinger::{
    csola_many, default_cutoffs, default_rho_ladder, residual, solve_bounded_direct, solve_bounded_iterative, solve_l1,
    CsolaReport, CsolaTolerances,
};
use greensolve::{Atom, GreenKernel, Potential, QuadGrid, RadonMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::ExitCode;
use std::time::Instant;

/// Criteria whose failure is expected and documented.
const KNOWN_FAILURES: &[usize] = &[1, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn l1_diff(g: &QuadGrid, a: &[f64], b: &[f64]) -> f64 {
    g.l1_norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

fn kernel(s: f64) -> GreenKernel {
    if s == 1.0 {
        GreenKernel::classical(3).unwrap()
    } else {
        GreenKernel::rfl(3, s).unwrap()
    }
}

/// Shell means of `u` as a function of radius.
fn radial_profile(g: &QuadGrid, u: &[f64]) -> Vec<(f64, f64)> {
    let mut acc = vec![(0.0, 0.0); g.shells.len()];
    for i in 0..g.len() {
        if let Some((shell, _, _)) = g.locate(i) {
            acc[shell].0 += u[i];
            acc[shell].1 += 1.0;
        }
    }
    g.shells.iter().zip(acc).map(|(s, (sum, n))| (s.radius, sum / n)).collect()
}

fn interpolate(profile: &[(f64, f64)], r: f64) -> f64 {
    let j = profile.partition_point(|p| p.0 < r).clamp(1, profile.len() - 1);
    let ((r0, v0), (r1, v1)) = (profile[j - 1], profile[j]);
    v0 + (v1 - v0) * (r - r0) / (r1 - r0)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sym: f64 = 0.0;
    let mut band: f64 = 0.0;
    for s in [0.5, 1.0] {
        let k = kernel(s);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..10_000 {
            let x = point_in_ball(&mut rng, 0.999);
            let y = point_in_ball(&mut rng, 0.999);
            let (a, b) = (k.eval(&x, &y).unwrap(), k.eval(&y, &x).unwrap());
            sym = sym.max((a - b).abs() / a.abs().max(b.abs()));
            let r = k.estimate_ratio(&x, &y).unwrap();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        band = band.max(if lo > 0.0 { hi / lo } else { f64::INFINITY });
    }
    let mut coercive = f64::INFINITY;
    let mut refinement: f64 = 0.0;
    for s in [0.5, 1.0] {
        let (_, g, m) = default_setup(s);
        let ev = m.symmetrized_eigenvalues().unwrap();
        let max = ev.iter().cloned().fold(f64::MIN, f64::max);
        let min = ev.iter().cloned().fold(f64::MAX, f64::min);
        coercive = coercive.min(min / max);
        let fine = m.apply_density(&vec![1.0; g.len()]).unwrap();
        let profile = radial_profile(&g, &fine);
        let sup = fine.iter().cloned().fold(0.0, f64::max);
        let d = GridSpec::default();
        let (_, gc, mc) = setup(s, d.radial_count / 2, d.angular_count / 2);
        let coarse = mc.apply_density(&vec![1.0; gc.len()]).unwrap();
        for i in 1..gc.len() {
            let r = norm(&gc.nodes[i]);
            if r >= profile[0].0 && r <= profile[profile.len() - 1].0 {
                refinement = refinement.max((coarse[i] - interpolate(&profile, r)).abs() / sup);
            }
        }
    }
    let pass = sym <= 1e-12 && band < 50.0 && coercive >= -1e-9 && refinement < 1e-2;
    outcome(
        pass,
        format!("symmetry {sym:.2e}, band max/min {band:.2}, min/max eigenvalue {coercive:.2e}, refinement change {refinement:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let (_, g, m) = default_setup(1.0);
    let u = m.apply_density(&vec![1.0; g.len()]).unwrap();
    let err = (0..g.len())
        .map(|i| {
            let exact = (1.0 - norm(&g.nodes[i]).powi(2)) / 6.0;
            ((u[i] - exact) / exact).abs()
        })
        .fold(0.0, f64::max);
    outcome(err < 1e-2, format!("max relative error {err:.3e}"))
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for s in [0.5, 1.0] {
        let (k, g, m) = default_setup(s);
        let q = 0.9 * critical_exponent(&k, 1.0);
        let r = regularization_probe(&k, &g, &m, 1.0, q, 5, 0).unwrap();
        pass &= r.ladder_variation < 2.0;
        parts.push(format!("s={s} q={q:.2} variation {:.3}", r.ladder_variation));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_4() -> Outcome {
    let (k, g, m) = default_setup(0.5);
    let rho = default_rho_ladder(&g, &[0.0; 3]);
    let n = g.len();
    let delta = RadonMeasure::point_mass(n, [0.0; 3], 1.0).unwrap();
    let recs = near_support(&k, &g, &m, &delta, &[0.0; 3], &rho).unwrap();
    let delta_slope = loglog_slope(&recs.iter().map(|r| (r.rho, r.scaled_delta)).collect::<Vec<_>>()).unwrap();
    let diffuse = RadonMeasure::from_density(vec![1.0; n]).unwrap();
    let recs = near_support(&k, &g, &m, &diffuse, &[0.0; 3], &rho).unwrap();
    let diffuse_slope = loglog_slope(&recs.iter().map(|r| (r.rho, r.scaled_mu)).collect::<Vec<_>>()).unwrap();
    let mut worst: f64 = 0.0;
    for mass in [0.5, 1.0, 2.0] {
        let mu = RadonMeasure::new(vec![1.0; n], vec![Atom { point: [0.0; 3], mass }]).unwrap();
        let recs = near_support(&k, &g, &m, &mu, &[0.0; 3], &rho).unwrap();
        worst = worst.max((recs.last().unwrap().ratio - mass).abs() / mass);
    }
    let pass = delta_slope.abs() <= 0.15 && diffuse_slope >= 0.5 && worst < 0.1;
    outcome(pass, format!("delta slope {delta_slope:.3}, diffuse slope {diffuse_slope:.3}, worst mass error {worst:.3e}"))
}

fn criterion_5() -> Outcome {
    let (k, g, m) = default_setup(0.5);
    let lmax = m.symmetrized_eigenvalues().unwrap().into_iter().fold(0.0, f64::max);
    let vmax = 0.9 / lmax;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut violation): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let c0 = rng.gen_range(0.0..0.5 * vmax);
        let v: Vec<f64> = (0..g.len()).map(|_| c0 + rng.gen_range(0.0..0.5 * vmax)).collect();
        let f: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.5)).collect();
        let atoms = if rng.gen_bool(0.5) { vec![Atom { point: point_in_ball(&mut rng, 0.5), mass: rng.gen_range(-1.0..1.0) }] } else { vec![] };
        let mu = RadonMeasure::new(f, atoms).unwrap();
        let d = solve_bounded_direct(&k, &g, &m, &v, &mu).unwrap();
        match solve_bounded_iterative(&k, &g, &m, &v, &mu, 1e-13, 5000) {
            Ok(it) => {
                worst = worst.max(l1_diff(&g, &d.u, &it.u) / g.l1_norm(&d.u));
                violation = violation.max(it.sandwich_violation);
            }
            Err(e) => return outcome(false, format!("iteration failed: {e}")),
        }
    }
    outcome(worst < 1e-8 && violation <= 1e-10, format!("worst relative L1 gap {worst:.2e}, sandwich violation {violation:.2e}"))
}

struct Scenario {
    s: f64,
    beta: f64,
    delta: CsolaReport,
    reduced: Option<CsolaReport>,
    residual: f64,
    column_ratio: f64,
}

fn scenarios() -> Vec<Scenario> {
    let mut out = vec![];
    for (s, beta) in [(0.5, 0.5), (0.5, 1.5), (0.75, 1.0), (0.75, 2.0)] {
        let (k, g, m) = default_setup(s);
        let n = g.len();
        let v = Potential::power(n, [0.0; 3], beta, 1.0).unwrap();
        let delta = RadonMeasure::point_mass(n, [0.0; 3], 1.0).unwrap();
        let mut mus = vec![delta.clone()];
        if (s, beta) == (0.5, 1.5) {
            mus.push(RadonMeasure::new(vec![1.0; n], vec![Atom { point: [0.0; 3], mass: 1.0 }]).unwrap());
        }
        let mut reps = csola_many(&k, &g, &m, &v, &mus, &default_cutoffs(&v), None, CsolaTolerances::default()).unwrap();
        let gd = apply_measure(&k, &g, &m, &delta).unwrap();
        let vn = v.node_values(&g).unwrap();
        let d = reps.remove(0);
        let res = residual(&g, &m, &vn, &gd, &d.u_limit).unwrap() / g.l1_norm(&d.u_limit).max(f64::MIN_POSITIVE);
        out.push(Scenario {
            s,
            beta,
            column_ratio: g.l1_norm(&d.u_limit) / g.l1_norm(&gd),
            residual: res,
            delta: d,
            reduced: reps.pop(),
        });
    }
    out
}

fn criterion_6(sc: &[Scenario]) -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for c in sc {
        let a = c.delta.alphas[0].consensus;
        let ok = if c.beta < 2.0 * c.s {
            a < 0.05 && c.residual < 1e-3
        } else {
            a > 0.9 && c.column_ratio < 0.02
        };
        pass &= ok;
        parts.push(format!("s={} beta={}: alpha {a:.3}, residual {:.1e}, column ratio {:.2e}", c.s, c.beta, c.residual, c.column_ratio));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_7(sc: &[Scenario]) -> Outcome {
    let c = sc.iter().find(|c| c.reduced.is_some()).unwrap();
    let r = c.reduced.as_ref().unwrap();
    let (_, g, m) = default_setup(c.s);
    let v = Potential::power(g.len(), [0.0; 3], c.beta, 1.0).unwrap();
    let (l1, _) = solve_l1(&g, &m, &v, &vec![1.0; g.len()], 1e-10).unwrap();
    let rel = l1_diff(&g, &l1.u, &r.u_limit) / g.l1_norm(&l1.u);
    outcome(rel < 1e-2 && r.mu_reduced.atoms.is_empty(), format!("relative L1 gap {rel:.3e}, reduced atoms {}", r.mu_reduced.atoms.len()))
}

fn criterion_8() -> Outcome {
    let mut all = true;
    let mut flags_match = true;
    let mut disagreements = vec![];
    for s in [0.5, 0.75, 1.0] {
        let (k, g, m) = default_setup(s);
        for beta in [0.25, 0.5, 1.5, 2.5] {
            let v = Potential::power(g.len(), [0.0; 3], beta, 1.0).unwrap();
            let r = z_equivalence_suite(&k, &g, &m, &v, &default_cutoffs(&v), CsolaTolerances::default(), 0).unwrap();
            let analytic = z_membership_analytic(&v, &k).z_points;
            let flagged: Vec<[f64; 3]> = r.points.iter().filter(|p| p.max_principle_fails).map(|p| p.point).collect();
            flags_match &= flagged == analytic;
            if !r.all_agree {
                all = false;
                let p = &r.points[0];
                disagreements.push(format!("s={s} beta={beta} verdicts {:?} one ratio {:.3}", p.verdicts(), p.one_ratio));
            }
        }
    }
    let detail = if disagreements.is_empty() { "all 12 agree".to_string() } else { disagreements.join("; ") };
    outcome(all && flags_match, format!("{detail}; probe flags match analytic Z: {flags_match}"))
}

fn criterion_9(sc: &[Scenario]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = vec![];
    for c in sc {
        for (name, r) in [("delta", Some(&c.delta)), ("delta+dx", c.reduced.as_ref())] {
            if let Some(r) = r {
                worst = worst.max(r.vu_running_max_variation);
                parts.push(format!("s={} beta={} {name}: {:.3}", c.s, c.beta, r.vu_running_max_variation));
            }
        }
    }
    outcome(worst < 0.1, parts.join(", "))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let sc = scenarios();
    let results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6(&sc)),
        (7, criterion_7(&sc)),
        (8, criterion_8()),
        (9, criterion_9(&sc)),
    ];
    let mut unexpected = 0;
    for (i, o) in &results {
        let known = KNOWN_FAILURES.contains(i);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {i}: {tag}: {}", o.detail);
        if !o.pass && !known {
            unexpected += 1;
        }
    }
    println!("acceptance finished in {:.0} s", start.elapsed().as_secs_f64());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
