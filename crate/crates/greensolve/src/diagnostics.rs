//! Structural probes of the perturbed Green operator `G_V`: kernel columns,
//! the strong maximum principle and the agreement of the Z-set verdicts.

use crate::error::{Error, Result};
use crate::grid::QuadGrid;
use crate::kernel::{norm, GreenKernel};
use crate::measure::{dist, z_integral_ladder, z_membership_analytic, Potential, RadonMeasure};
use crate::operator::{kernel_column, GreenMatrix};
use crate::schrodinger::{csola_many, CsolaReport, CsolaTolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// A point value below this fraction of the inner median counts as vanishing.
pub const MAX_PRINCIPLE_THRESHOLD: f64 = 0.05;
/// A column whose L1 norm is below this fraction of `||G(delta_x)||_1` counts as vanishing.
pub const COLUMN_THRESHOLD: f64 = 0.02;
/// Concentration mass above which `delta_x` is declared fully absorbed.
pub const ALPHA_THRESHOLD: f64 = 0.5;
/// Number of random bounded data used for the universal quantifier.
pub const RANDOM_DATA: usize = 3;

/// Value of `u` at `x` from ball averages at the two finest probe radii, extrapolated linearly to radius 0.
pub fn point_value(g: &QuadGrid, u: &[f64], x: &[f64; 3]) -> Result<f64> {
    let r0 = g.min_probe_radius();
    let avg = |r: f64| -> Result<f64> {
        let idx = g.nodes_in_ball(x, r);
        if idx.is_empty() {
            return Err(Error::Parameter(format!("no node within {r} of {x:?}")));
        }
        let w: f64 = idx.iter().map(|&i| g.weights[i]).sum();
        Ok(idx.iter().map(|&i| g.weights[i] * u[i]).sum::<f64>() / w)
    };
    let (a1, a2) = (avg(r0)?, avg(2.0 * r0)?);
    Ok((2.0 * a1 - a2).clamp(0.0, a1.max(a2).max(0.0)))
}

/// Volume-weighted median of `u` over the nodes with `|x| < 1/2`.
pub fn inner_median(g: &QuadGrid, u: &[f64]) -> f64 {
    let mut v: Vec<(f64, f64)> =
        (0..g.len()).filter(|&i| norm(&g.nodes[i]) < 0.5).map(|i| (u[i], g.weights[i])).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = 0.5 * v.iter().map(|p| p.1).sum::<f64>();
    let mut acc = 0.0;
    for (x, w) in &v {
        acc += w;
        if acc >= half {
            return *x;
        }
    }
    v[v.len() - 1].0
}

/// `G_V(delta_x)`, the CSOLA limit for a unit point mass at `x`.
pub fn gv_column(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    v: &Potential,
    x: &[f64; 3],
    cutoffs: &[f64],
) -> Result<Vec<f64>> {
    let mu = RadonMeasure::point_mass(g.len(), *x, 1.0)?;
    let rep = csola_many(k, g, m, v, &[mu], cutoffs, None, CsolaTolerances::default())?;
    Ok(rep.into_iter().next().map(|r| r.u_limit).unwrap_or_default())
}

#[derive(Clone, Debug, Serialize)]
pub struct PointProbe {
    pub point: [f64; 3],
    /// Interpolated `G_V(1)(x)`.
    pub value: f64,
    /// `value / median`.
    pub ratio: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxPrincipleReport {
    pub gv_one: Vec<f64>,
    pub median: f64,
    pub probes: Vec<PointProbe>,
    pub near_zero_points: Vec<[f64; 3]>,
    pub gv_columns: Vec<([f64; 3], Vec<f64>)>,
}

fn probe_points(g: &QuadGrid, u: &[f64], points: &[[f64; 3]]) -> Result<(f64, Vec<PointProbe>)> {
    let median = inner_median(g, u);
    let probes = points
        .iter()
        .map(|x| {
            let value = point_value(g, u, x)?;
            let ratio = value / median;
            Ok(PointProbe { point: *x, value, ratio, flagged: ratio < MAX_PRINCIPLE_THRESHOLD })
        })
        .collect::<Result<_>>()?;
    Ok((median, probes))
}

/// `G_V(1)` by CSOLA, flagged at the singular points where it vanishes, plus the requested columns.
pub fn max_principle_probe(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    v: &Potential,
    cutoffs: &[f64],
    columns_at: &[[f64; 3]],
) -> Result<MaxPrincipleReport> {
    let mut mus = vec![RadonMeasure::from_density(vec![1.0; g.len()])?];
    for x in columns_at {
        mus.push(RadonMeasure::point_mass(g.len(), *x, 1.0)?);
    }
    let mut reps = csola_many(k, g, m, v, &mus, cutoffs, None, CsolaTolerances::default())?.into_iter();
    let gv_one = reps.next().map(|r| r.u_limit).unwrap_or_default();
    let (median, probes) = probe_points(g, &gv_one, &v.singular_set())?;
    let near_zero_points = probes.iter().filter(|p| p.flagged).map(|p| p.point).collect();
    let gv_columns = columns_at.iter().cloned().zip(reps.map(|r| r.u_limit)).collect();
    Ok(MaxPrincipleReport { gv_one, median, probes, near_zero_points, gv_columns })
}

/// Verdicts "x is in Z" for one singular point.
#[derive(Clone, Debug, Serialize)]
pub struct ZVerdicts {
    pub point: [f64; 3],
    pub beta: f64,
    pub borderline: bool,
    /// Concentration mass of `delta_x`.
    pub alpha: f64,
    pub alpha_inconclusive: bool,
    /// (i) `delta_x` is absorbed completely.
    pub column_absorbed: bool,
    /// `||G_V(delta_x)||_1 / ||G(delta_x)||_1`.
    pub column_ratio: f64,
    /// (ii) the column vanishes in L1.
    pub column_vanishes: bool,
    /// `G_V(f)(x) / median` for each random bounded `f`.
    pub random_ratios: Vec<f64>,
    /// (iii) `G_V(f)(x)` vanishes for every sampled bounded `f`.
    pub bounded_data_vanish: bool,
    /// `G_V(1)(x) / median`.
    pub one_ratio: f64,
    /// (iv) `G_V(1)(x)` vanishes.
    pub max_principle_fails: bool,
    /// (v) the integrability criterion.
    pub analytic: bool,
    /// Numerical integrability ladder; `None` when under-resolved.
    pub ladder: Option<bool>,
    pub ladder_decay_rate: Option<f64>,
    pub agree: bool,
}

impl ZVerdicts {
    pub fn verdicts(&self) -> [bool; 5] {
        [self.column_absorbed, self.column_vanishes, self.bounded_data_vanish, self.max_principle_fails, self.analytic]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ZSuiteReport {
    pub seed: u64,
    pub points: Vec<ZVerdicts>,
    /// Points where all five verdicts report membership in Z.
    pub z_points: Vec<[f64; 3]>,
    /// Points where the integrability criterion reports membership in Z.
    pub analytic_z_points: Vec<[f64; 3]>,
    /// Points where the verdicts disagree.
    pub disputed_points: Vec<[f64; 3]>,
    pub all_agree: bool,
    pub one_median: f64,
    #[serde(skip)]
    pub reports: Vec<CsolaReport>,
}

/// Five independent Z verdicts per singular point of `V`; factorizations are shared across all data.
pub fn z_equivalence_suite(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    v: &Potential,
    cutoffs: &[f64],
    tol: CsolaTolerances,
    seed: u64,
) -> Result<ZSuiteReport> {
    let points = v.singular_set();
    let n = g.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mus: Vec<RadonMeasure> = points.iter().map(|x| RadonMeasure::point_mass(n, *x, 1.0)).collect::<Result<_>>()?;
    mus.push(RadonMeasure::from_density(vec![1.0; n])?);
    for _ in 0..RANDOM_DATA {
        mus.push(RadonMeasure::from_density((0..n).map(|_| rng.gen_range(0.0..1.0)).collect())?);
    }
    let reports = csola_many(k, g, m, v, &mus, cutoffs, None, tol)?;
    let np = points.len();
    let (one_median, one_probes) = probe_points(g, &reports[np].u_limit, &points)?;
    let random: Vec<Vec<PointProbe>> = reports[np + 1..]
        .iter()
        .map(|r| probe_points(g, &r.u_limit, &points).map(|p| p.1))
        .collect::<Result<_>>()?;
    let analytic = z_membership_analytic(v, k);
    let mut out = vec![];
    for (p, x) in points.iter().enumerate() {
        let rep = &reports[p];
        let alpha = rep.alphas.iter().find(|a| dist(&a.point, x) <= crate::measure::POINT_TOL).ok_or_else(|| {
            Error::Invariant(format!("no concentration estimate at {x:?}"))
        })?;
        let reference = g.l1_norm(&kernel_column(k, g, m, x)?);
        let column_ratio = g.l1_norm(&rep.u_limit) / reference;
        let random_ratios: Vec<f64> = random.iter().map(|r| r[p].ratio).collect();
        let room = 1.0 - norm(x);
        let rho: Vec<f64> = g.dyadic_ladder().into_iter().filter(|&r| r < room).collect();
        let ladder = z_integral_ladder(v, k, g, x, &rho)?;
        let ev = &analytic.evidence[p];
        let mut z = ZVerdicts {
            point: *x,
            beta: ev.beta,
            borderline: ev.borderline,
            alpha: alpha.consensus,
            alpha_inconclusive: alpha.inconclusive,
            column_absorbed: alpha.consensus > ALPHA_THRESHOLD,
            column_ratio,
            column_vanishes: column_ratio < COLUMN_THRESHOLD,
            bounded_data_vanish: random_ratios.iter().all(|&r| r < MAX_PRINCIPLE_THRESHOLD),
            random_ratios,
            one_ratio: one_probes[p].ratio,
            max_principle_fails: one_probes[p].flagged,
            analytic: ev.analytic_verdict,
            ladder: if ladder.under_resolved { None } else { ladder.divergent },
            ladder_decay_rate: ladder.decay_rate,
            agree: false,
        };
        let v5 = z.verdicts();
        z.agree = v5.iter().all(|&b| b == v5[0]);
        out.push(z);
    }
    Ok(ZSuiteReport {
        seed,
        all_agree: out.iter().all(|z| z.agree),
        z_points: out.iter().filter(|z| z.verdicts().iter().all(|&b| b)).map(|z| z.point).collect(),
        analytic_z_points: out.iter().filter(|z| z.analytic).map(|z| z.point).collect(),
        disputed_points: out.iter().filter(|z| !z.agree).map(|z| z.point).collect(),
        points: out,
        one_median,
        reports,
    })
}
