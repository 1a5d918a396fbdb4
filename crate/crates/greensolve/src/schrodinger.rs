//! Solvers for the dual problem `u = G(mu - V u)`: a dense direct solve and
//! the monotone sandwich iteration for bounded `V`, the double truncation
//! ladder for integrable data, and the cutoff ladder (CSOLA) for singular
//! `V` with measure data, including the concentration mass at singular points.

use crate::error::{Error, Result};
use crate::grid::QuadGrid;
use crate::kernel::GreenKernel;
use crate::measure::{reduce, truncate, Potential, RadonMeasure, ZEvidence, ZReport};
use crate::operator::{apply_measure, kernel_column, GreenMatrix};
use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iterative,
    Direct,
    DoubleLimit,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub u: Vec<f64>,
    pub vu: Vec<f64>,
    /// `||u - G(mu - V u)||_1`.
    pub residual: f64,
    pub iterations: usize,
    pub bracket_gap: f64,
    pub method: Method,
    /// Largest violation of the sandwich ordering, relative to `||G(mu)||_inf`.
    pub sandwich_violation: f64,
}

fn check_potential(vk: &[f64], n: usize) -> Result<()> {
    if vk.len() != n {
        return Err(Error::Parameter("potential does not match the grid".into()));
    }
    if vk.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Parameter("bounded solves need a finite nonnegative potential".into()));
    }
    Ok(())
}

fn matvec_potential(m: &GreenMatrix, vk: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let vu: Vec<f64> = vk.iter().zip(u).map(|(a, b)| a * b).collect();
    m.apply_density(&vu)
}

/// `||u - (b - M V u)||_1`.
pub fn residual(g: &QuadGrid, m: &GreenMatrix, vk: &[f64], b: &[f64], u: &[f64]) -> Result<f64> {
    let mv = matvec_potential(m, vk, u)?;
    let r: Vec<f64> = (0..u.len()).map(|i| u[i] - b[i] + mv[i]).collect();
    Ok(g.l1_norm(&r))
}

/// Dense LU of `I + M diag(V_k)`.
pub struct BoundedSystem {
    lu: PartialPivLu<f64>,
    n: usize,
}

impl BoundedSystem {
    pub fn new(m: &GreenMatrix, vk: &[f64]) -> Result<Self> {
        let n = m.len();
        check_potential(vk, n)?;
        let e = m.entries();
        let a = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + e[i * n + j] * vk[j]);
        Ok(Self { lu: a.partial_piv_lu(), n })
    }

    pub fn solve(&self, rhs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if rhs.is_empty() {
            return Ok(vec![]);
        }
        let b = Mat::from_fn(self.n, rhs.len(), |i, j| rhs[j][i]);
        let x = self.lu.solve(&b);
        let out: Vec<Vec<f64>> = (0..rhs.len()).map(|j| (0..self.n).map(|i| x[(i, j)]).collect()).collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Solver("factorization produced non-finite values".into()));
        }
        Ok(out)
    }
}

/// `(I + M diag(V_k)) u = G(mu)` by dense factorization.
pub fn solve_bounded_direct(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    vk: &[f64],
    mu: &RadonMeasure,
) -> Result<SolveReport> {
    let b = apply_measure(k, g, m, mu)?;
    let sys = BoundedSystem::new(m, vk)?;
    let u = sys.solve(&[&b])?.remove(0);
    let res = residual(g, m, vk, &b, &u)?;
    let vu = vk.iter().zip(&u).map(|(a, b)| a * b).collect();
    Ok(SolveReport { u, vu, residual: res, iterations: 1, bracket_gap: 0.0, method: Method::Direct, sandwich_violation: 0.0 })
}

struct Sandwich {
    lower: Vec<f64>,
    upper: Vec<f64>,
    iterations: usize,
    gap: f64,
    violation: f64,
}

/// Sandwich iteration `u_0 = 0`, `u_i = (b - M V u_{i-1})_+` for data `b = G(mu) >= 0`.
fn sandwich(g: &QuadGrid, m: &GreenMatrix, vk: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Result<Sandwich> {
    let n = b.len();
    let scale = b.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let step = |u: &[f64]| -> Result<Vec<f64>> {
        let mv = matvec_potential(m, vk, u)?;
        Ok((0..n).map(|i| (b[i] - mv[i]).max(0.0)).collect())
    };
    let mut lower = vec![0.0; n];
    let mut upper = step(&lower)?;
    let mut violation: f64 = 0.0;
    let mut iterations = 1;
    let ref_norm = g.l1_norm(&upper).max(f64::MIN_POSITIVE);
    loop {
        let gap = g.l1_norm(&upper.iter().zip(&lower).map(|(a, b)| a - b).collect::<Vec<_>>());
        if gap <= tol * ref_norm {
            return Ok(Sandwich { lower, upper, iterations, gap, violation });
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence { iterations, last_gap: gap });
        }
        let next_lower = step(&upper)?;
        let next_upper = step(&next_lower)?;
        iterations += 2;
        for i in 0..n {
            // lower_prev <= lower_next <= upper_next <= upper_prev
            violation = violation
                .max(lower[i] - next_lower[i])
                .max(next_lower[i] - next_upper[i])
                .max(next_upper[i] - upper[i]);
        }
        if violation > 1e-10 * scale {
            return Err(Error::Invariant(format!(
                "sandwich ordering violated by {:e} (relative); assembly is not symmetric positive",
                violation / scale
            )));
        }
        lower = next_lower;
        upper = next_upper;
    }
}

/// Monotone iteration of the existence proof, run separately on `mu_+` and `mu_-`.
pub fn solve_bounded_iterative(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    vk: &[f64],
    mu: &RadonMeasure,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    check_potential(vk, g.len())?;
    let (pos, neg) = mu.split();
    let n = g.len();
    let mut u = vec![0.0; n];
    let mut iterations = 0;
    let mut gap = 0.0;
    let mut violation: f64 = 0.0;
    for (sign, part) in [(1.0, pos), (-1.0, neg)] {
        if part.atoms.is_empty() && part.density.iter().all(|&v| v == 0.0) {
            continue;
        }
        let b = apply_measure(k, g, m, &part)?;
        let s = sandwich(g, m, vk, &b, tol, max_iter)?;
        let scale = b.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        violation = violation.max(s.violation / scale);
        iterations = iterations.max(s.iterations);
        gap += s.gap;
        for i in 0..n {
            u[i] += sign * 0.5 * (s.lower[i] + s.upper[i]);
        }
    }
    let b = apply_measure(k, g, m, mu)?;
    let res = residual(g, m, vk, &b, &u)?;
    let vu = vk.iter().zip(&u).map(|(a, b)| a * b).collect();
    Ok(SolveReport { u, vu, residual: res, iterations, bracket_gap: gap, method: Method::Iterative, sandwich_violation: violation })
}

/// `(sum w V |u|, ||G(1)||_inf (1/inf_K G(1) + ||V||_{L^inf(Omega \ K)}) ||mu||)` with
/// `K = B_radius(0)` containing the singular set.
pub fn vu_l1_estimate(
    g: &QuadGrid,
    m: &GreenMatrix,
    report: &SolveReport,
    vk: &[f64],
    data_total_variation: f64,
    k_radius: f64,
) -> Result<(f64, f64)> {
    let lhs = g.l1_norm(&vk.iter().zip(&report.u).map(|(a, b)| a * b).collect::<Vec<_>>());
    let g1 = m.apply_density(&vec![1.0; g.len()])?;
    let gmax = g1.iter().cloned().fold(0.0, f64::max);
    let mut inf_k = f64::INFINITY;
    let mut v_out: f64 = 0.0;
    for i in 0..g.len() {
        if crate::kernel::norm(&g.nodes[i]) <= k_radius {
            inf_k = inf_k.min(g1[i]);
        } else {
            v_out = v_out.max(vk[i]);
        }
    }
    if !inf_k.is_finite() {
        return Err(Error::Parameter("inner set K contains no node".into()));
    }
    Ok((lhs, gmax * (1.0 / inf_k + v_out) * data_total_variation))
}

/// Geometric ladder `2^j max(1, scale)` up to the first value exceeding `top`.
fn ladder_to(scale: f64, top: f64, cap: usize) -> Vec<f64> {
    let base = scale.max(1.0);
    let mut out = vec![];
    for j in 0..cap {
        let k = base * 2f64.powi(j as i32);
        out.push(k);
        if k >= top {
            break;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct DoubleLimitStep {
    pub m: f64,
    pub k: f64,
    pub l1: f64,
    pub change: f64,
}

/// Solution for `(f, V) in L^1 x L^1_+` through `V ∧ k` (inner, decreasing) and `f ∧ m` (outer, increasing).
pub fn solve_l1(
    g: &QuadGrid,
    m: &GreenMatrix,
    v: &Potential,
    f: &[f64],
    tol: f64,
) -> Result<(SolveReport, Vec<DoubleLimitStep>)> {
    m.check_grid(g)?;
    let vn = v.node_values(g)?;
    if vn.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("V is not integrable at the grid resolution (infinite cell value)".into()));
    }
    if f.len() != g.len() || f.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("density must be finite at every node".into()));
    }
    let vmax = vn.iter().cloned().fold(0.0, f64::max);
    let fmax = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let ks = ladder_to(1.0, vmax, 64);
    let ms = ladder_to(1.0, fmax, 64);
    let parts: Vec<(f64, Vec<f64>)> = [1.0, -1.0]
        .iter()
        .map(|&sg| (sg, f.iter().map(|&x| (sg * x).max(0.0)).collect::<Vec<f64>>()))
        .filter(|(_, p)| p.iter().any(|&x| x > 0.0))
        .collect();
    // rhs[part][m-level]
    let mut rhs: Vec<Vec<f64>> = vec![];
    for (_, p) in &parts {
        for &mm in &ms {
            rhs.push(m.apply_density(&p.iter().map(|&x| x.min(mm)).collect::<Vec<_>>())?);
        }
    }
    let cols = rhs.len();
    // u[k-level][column]
    let mut sols: Vec<Vec<Vec<f64>>> = vec![];
    let mut done = vec![false; cols];
    for &kk in &ks {
        let vk = truncate(&vn, kk);
        let sys = BoundedSystem::new(m, &vk)?;
        let refs: Vec<&[f64]> = rhs.iter().map(|r| r.as_slice()).collect();
        let u = sys.solve(&refs)?;
        if let Some(prev) = sols.last() {
            for c in 0..cols {
                let d: Vec<f64> = u[c].iter().zip(&prev[c]).map(|(a, b)| a - b).collect();
                if g.l1_norm(&d) <= tol * g.l1_norm(&u[c]).max(f64::MIN_POSITIVE) {
                    done[c] = true;
                }
            }
        }
        sols.push(u);
        if done.iter().all(|&d| d) {
            break;
        }
    }
    let mut trace = vec![];
    let n = g.len();
    let mut u = vec![0.0; n];
    for (pi, (sign, _)) in parts.iter().enumerate() {
        let mut outer_prev: Option<Vec<f64>> = None;
        let mut chosen = vec![0.0; n];
        for (mi, &mm) in ms.iter().enumerate() {
            let c = pi * ms.len() + mi;
            let mut inner_prev: Option<&Vec<f64>> = None;
            let mut um = &sols[0][c];
            for (ki, lvl) in sols.iter().enumerate() {
                let cur = &lvl[c];
                let change = inner_prev.map_or(f64::INFINITY, |p| {
                    g.l1_norm(&cur.iter().zip(p).map(|(a, b)| a - b).collect::<Vec<_>>())
                });
                trace.push(DoubleLimitStep { m: mm, k: ks[ki], l1: g.l1_norm(cur), change });
                um = cur;
                if change <= tol * g.l1_norm(cur).max(f64::MIN_POSITIVE) {
                    break;
                }
                inner_prev = Some(cur);
            }
            let converged = outer_prev.as_ref().is_some_and(|p: &Vec<f64>| {
                let d: Vec<f64> = um.iter().zip(p).map(|(a, b)| a - b).collect();
                g.l1_norm(&d) <= tol * g.l1_norm(um).max(f64::MIN_POSITIVE)
            });
            chosen = um.clone();
            if converged {
                break;
            }
            outer_prev = Some(um.clone());
        }
        for i in 0..n {
            u[i] += sign * chosen[i];
        }
    }
    let b = m.apply_density(f)?;
    let res = residual(g, m, &vn, &b, &u)?;
    let vu = vn.iter().zip(&u).map(|(a, b)| a * b).collect();
    Ok((
        SolveReport { u, vu, residual: res, iterations: sols.len(), bracket_gap: 0.0, method: Method::DoubleLimit, sandwich_violation: 0.0 },
        trace,
    ))
}

// ---------------------------------------------------------------------------
// CSOLA

/// Thresholds of the concentration analysis.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CsolaTolerances {
    /// Consensus `α` below this counts as no concentration.
    pub alpha_solution: f64,
    /// Largest admissible disagreement between the two estimators.
    pub alpha_consensus: f64,
}

impl Default for CsolaTolerances {
    fn default() -> Self {
        Self { alpha_solution: 0.05, alpha_consensus: 0.1 }
    }
}

/// Probe balls must exceed this multiple of the radius where `V` reaches the last cutoff.
pub const RESOLUTION_FACTOR: f64 = 4.0;

/// Default cutoff ladder `2^0..2^14` scaled by `max(1, ||background||_inf)`.
pub fn default_cutoffs(v: &Potential) -> Vec<f64> {
    let bg = v.background.iter().fold(v.c0, |a, &b| a.max(b + v.c0));
    (0..=14).map(|j| 2f64.powi(j) * bg.max(1.0)).collect()
}

/// Default probe radii around `x`: dyadic, inside the domain, at most 1/4.
pub fn default_rho_ladder(g: &QuadGrid, x: &[f64; 3]) -> Vec<f64> {
    let room = 1.0 - crate::kernel::norm(x);
    g.dyadic_ladder().into_iter().filter(|&r| r <= 0.25 && r < room).collect()
}

/// Solutions `u_k` for every cutoff and every right-hand side: `out[k][rhs]`.
pub fn run_ladder(m: &GreenMatrix, vn: &[f64], cutoffs: &[f64], rhs: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) || cutoffs.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Parameter("cutoffs must be positive and increasing".into()));
    }
    let refs: Vec<&[f64]> = rhs.iter().map(|r| r.as_slice()).collect();
    cutoffs
        .iter()
        .map(|&kk| BoundedSystem::new(m, &truncate(vn, kk))?.solve(&refs))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderPoint {
    pub k: f64,
    pub l1: f64,
    pub change_l1: f64,
    /// `sum w V_k |u_k|`.
    pub vu_l1: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaEstimate {
    pub point: [f64; 3],
    pub atom_mass: f64,
    pub mass_balance: f64,
    pub scaling: f64,
    pub consensus: f64,
    pub inconclusive: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub point: [f64; 3],
    /// Fitted limit of `rho^(-2s) int_{B_rho} G(delta_x)`.
    pub c_x: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CsolaReport {
    pub u_limit: Vec<f64>,
    pub ladder: Vec<LadderPoint>,
    pub alphas: Vec<AlphaEstimate>,
    pub mu_reduced: RadonMeasure,
    pub is_solution: bool,
    pub calibration: Vec<Calibration>,
    /// Largest node-wise increase `u_{k'} - u_k` (k' > k) of a positive part, relative to `||u_1||_inf`.
    pub monotonicity_defect: f64,
    /// Relative growth of the running maximum of `sum w V_k |u_k|` over the second half of the ladder.
    pub vu_running_max_variation: f64,
    pub rho_ladder: Vec<f64>,
    pub z_report: ZReport,
}

/// Aitken extrapolation of a convergent scalar sequence from its last three terms.
pub fn aitken(seq: &[f64]) -> f64 {
    match seq.len() {
        0 => f64::NAN,
        1 | 2 => *seq.last().unwrap(),
        l => {
            let (a1, a2, a3) = (seq[l - 3], seq[l - 2], seq[l - 1]);
            let (d1, d2) = (a2 - a1, a3 - a2);
            if d1 == 0.0 || d2 == 0.0 {
                return a3;
            }
            let r = d2 / d1;
            if !(r > 0.0 && r < 1.0) {
                return a3;
            }
            let r = r.min(0.95);
            a3 + d2 * r / (1.0 - r)
        }
    }
}

/// Vector extrapolation with a global ratio `||u3 - u2|| / ||u2 - u1||`.
fn extrapolate_vectors(g: &QuadGrid, seq: &[Vec<f64>], nonneg: bool) -> Vec<f64> {
    let l = seq.len();
    if l < 3 {
        return seq.last().cloned().unwrap_or_default();
    }
    let (u1, u2, u3) = (&seq[l - 3], &seq[l - 2], &seq[l - 1]);
    let d1 = g.l1_norm(&u2.iter().zip(u1).map(|(a, b)| a - b).collect::<Vec<_>>());
    let d2 = g.l1_norm(&u3.iter().zip(u2).map(|(a, b)| a - b).collect::<Vec<_>>());
    let q = if d1 > 0.0 { (d2 / d1).clamp(0.0, 0.95) } else { 0.0 };
    u3.iter()
        .zip(u2)
        .map(|(a, b)| {
            let v = a + q / (1.0 - q) * (a - b);
            if nonneg { v.max(0.0) } else { v }
        })
        .collect()
}

struct PartAnalysis {
    u_limit: Vec<f64>,
    mb: Vec<f64>,
    sc_ratio: Vec<f64>,
    monotonicity: f64,
}

/// Shared post-processing of one nonnegative part.
#[allow(clippy::too_many_arguments)]
fn analyse_part(
    g: &QuadGrid,
    columns: &[Vec<f64>],
    points: &[[f64; 3]],
    rho: &[Vec<f64>],
    vn: &[f64],
    cutoffs: &[f64],
    us: &[Vec<f64>],
    resolved: &[f64],
) -> Result<PartAnalysis> {
    let saturated = cutoffs.last().is_some_and(|&c| vn.iter().all(|&v| v <= c));
    let u_limit = if saturated { us.last().cloned().unwrap_or_default() } else { extrapolate_vectors(g, us, true) };
    let scale = us[0].iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut monotonicity: f64 = 0.0;
    for w in us.windows(2) {
        for (a, b) in w[1].iter().zip(&w[0]) {
            monotonicity = monotonicity.max((a - b) / scale);
        }
    }
    let mut mb = vec![];
    let mut sc_ratio = vec![];
    for (p, x) in points.iter().enumerate() {
        let mut per_rho = vec![];
        let mut ratio = vec![];
        for &r in rho[p].iter().filter(|&&r| r >= resolved[p]) {
            let seq: Vec<f64> = cutoffs
                .iter()
                .zip(us)
                .map(|(&kk, u)| {
                    let vu: Vec<f64> = u.iter().zip(vn).map(|(a, v)| a * v.min(kk)).collect();
                    g.ball_integral(&vu, x, r).map(|b| b.value)
                })
                .collect::<Result<_>>()?;
            per_rho.push(aitken(&seq));
            let num = g.ball_integral(&u_limit, x, r)?.value;
            let den = g.ball_integral(&columns[p], x, r)?.value;
            ratio.push(num / den);
        }
        mb.push(aitken(&per_rho));
        sc_ratio.push(aitken(&ratio));
    }
    Ok(PartAnalysis { u_limit, mb, sc_ratio, monotonicity })
}

/// CSOLA for several data measures sharing one potential and one set of factorizations.
#[allow(clippy::too_many_arguments)]
pub fn csola_many(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    v: &Potential,
    mus: &[RadonMeasure],
    cutoffs: &[f64],
    rho_ladder: Option<&[f64]>,
    tol: CsolaTolerances,
) -> Result<Vec<CsolaReport>> {
    m.check_grid(g)?;
    let vn = v.node_values(g)?;
    let points = v.singular_set();
    let rho: Vec<Vec<f64>> = points
        .iter()
        .map(|x| {
            let room = 1.0 - crate::kernel::norm(x);
            let floor = g.min_probe_radius();
            let mut r: Vec<f64> = match rho_ladder {
                Some(l) => l.iter().cloned().filter(|&r| r < room).map(|r| r.max(floor)).collect(),
                None => default_rho_ladder(g, x),
            };
            r.sort_by(|a, b| b.total_cmp(a));
            r.dedup();
            r
        })
        .collect();
    // balls smaller than this have not seen the concentration at the last cutoff
    let k_last = cutoffs.last().cloned().unwrap_or(1.0);
    let resolved: Vec<f64> = v
        .singularities
        .iter()
        .enumerate()
        .map(|(p, sg)| {
            let r = RESOLUTION_FACTOR * (sg.coeff / k_last).powf(1.0 / sg.beta);
            // keep at least the three finest radii usable
            rho[p].get(2).map_or(0.0, |&r3| r.min(r3))
        })
        .collect();
    let columns: Vec<Vec<f64>> = points.iter().map(|x| kernel_column(k, g, m, x)).collect::<Result<_>>()?;
    let two_s = 2.0 * k.order();
    let calibration: Vec<Calibration> = points
        .iter()
        .enumerate()
        .map(|(p, x)| {
            let seq: Vec<f64> = rho[p]
                .iter()
                .map(|&r| g.ball_integral(&columns[p], x, r).map(|b| b.value * b.radius.powf(-two_s)))
                .collect::<Result<_>>()?;
            Ok(Calibration { point: *x, c_x: aitken(&seq) })
        })
        .collect::<Result<_>>()?;
    // right-hand sides: positive and negative part of every measure
    let mut rhs = vec![];
    let mut parts = vec![];
    for mu in mus {
        let (pos, neg) = mu.split();
        for part in [pos, neg] {
            let active = !part.atoms.is_empty() || part.density.iter().any(|&x| x != 0.0);
            if active {
                rhs.push(apply_measure(k, g, m, &part)?);
            }
            parts.push((part, active.then(|| rhs.len() - 1)));
        }
    }
    let sols = run_ladder(m, &vn, cutoffs, &rhs)?;
    let n = g.len();
    let mut out = vec![];
    for (mi, mu) in mus.iter().enumerate() {
        let mut u_limit = vec![0.0; n];
        let mut us_signed: Vec<Vec<f64>> = vec![vec![0.0; n]; cutoffs.len()];
        let mut mb = vec![0.0; points.len()];
        let mut sc = vec![0.0; points.len()];
        let mut monotonicity: f64 = 0.0;
        for (pi, sign) in [(2 * mi, 1.0), (2 * mi + 1, -1.0)] {
            let (part, col) = &parts[pi];
            let Some(c) = col else { continue };
            let us: Vec<Vec<f64>> = sols.iter().map(|lvl| lvl[*c].clone()).collect();
            let a = analyse_part(g, &columns, &points, &rho, &vn, cutoffs, &us, &resolved)?;
            monotonicity = monotonicity.max(a.monotonicity);
            for i in 0..n {
                u_limit[i] += sign * a.u_limit[i];
            }
            for (kk, u) in us.iter().enumerate() {
                for i in 0..n {
                    us_signed[kk][i] += sign * u[i];
                }
            }
            for p in 0..points.len() {
                let atom = part.mass_at(&points[p]);
                mb[p] += sign * a.mb[p].clamp(0.0, atom.max(0.0));
                sc[p] += sign * (atom - a.sc_ratio[p]).clamp(0.0, atom.max(0.0));
            }
        }
        let mut ladder = vec![];
        for (kk, u) in us_signed.iter().enumerate() {
            let change = if kk == 0 {
                f64::NAN
            } else {
                g.l1_norm(&u.iter().zip(&us_signed[kk - 1]).map(|(a, b)| a - b).collect::<Vec<_>>())
            };
            let vu: Vec<f64> = u.iter().zip(&vn).map(|(a, v)| a * v.min(cutoffs[kk])).collect();
            ladder.push(LadderPoint { k: cutoffs[kk], l1: g.l1_norm(u), change_l1: change, vu_l1: g.l1_norm(&vu) });
        }
        let vu_running_max_variation = running_max_variation(&ladder.iter().map(|l| l.vu_l1).collect::<Vec<_>>());
        let alphas: Vec<AlphaEstimate> = points
            .iter()
            .enumerate()
            .map(|(p, x)| {
                let consensus = 0.5 * (mb[p] + sc[p]);
                AlphaEstimate {
                    point: *x,
                    atom_mass: mu.mass_at(x),
                    mass_balance: mb[p],
                    scaling: sc[p],
                    consensus,
                    inconclusive: (mb[p] - sc[p]).abs() > tol.alpha_consensus,
                }
            })
            .collect();
        let evidence: Vec<ZEvidence> = alphas
            .iter()
            .zip(&v.singularities)
            .map(|(a, s)| ZEvidence {
                point: a.point,
                beta: s.beta,
                analytic_verdict: a.consensus.abs() >= tol.alpha_solution,
                borderline: a.inconclusive,
                integral_ladder: vec![],
                ladder_verdict: None,
                maxprinciple_value: None,
            })
            .collect();
        let z_report = ZReport {
            z_points: evidence.iter().filter(|e| e.analytic_verdict).map(|e| e.point).collect(),
            evidence,
        };
        out.push(CsolaReport {
            u_limit,
            ladder,
            is_solution: alphas.iter().all(|a| a.consensus.abs() < tol.alpha_solution),
            mu_reduced: reduce(mu, &z_report),
            alphas,
            calibration: calibration.clone(),
            monotonicity_defect: monotonicity,
            vu_running_max_variation,
            rho_ladder: rho.first().cloned().unwrap_or_default(),
            z_report,
        });
    }
    Ok(out)
}

/// CSOLA for a single data measure.
#[allow(clippy::too_many_arguments)]
pub fn csola(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    v: &Potential,
    mu: &RadonMeasure,
    cutoffs: &[f64],
    rho_ladder: Option<&[f64]>,
    tol: CsolaTolerances,
) -> Result<CsolaReport> {
    Ok(csola_many(k, g, m, v, std::slice::from_ref(mu), cutoffs, rho_ladder, tol)?.remove(0))
}

/// Relative growth of the running maximum from the middle of the sequence to its end.
pub fn running_max_variation(seq: &[f64]) -> f64 {
    if seq.is_empty() {
        return 0.0;
    }
    let half = seq.len() / 2;
    let total = seq.iter().cloned().fold(0.0, f64::max);
    let early = seq[..=half].iter().cloned().fold(0.0, f64::max);
    if total == 0.0 {
        0.0
    } else {
        (total - early) / total
    }
}
