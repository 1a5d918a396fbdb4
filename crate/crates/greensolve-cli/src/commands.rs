//! Subcommand pipelines: each returns a serializable result and its tables.

use crate::config::{Loaded, SolveMethod};
use crate::report::Table;
use anyhow::{bail, Context, Result};
use greensolve::diagnostics::{point_value, z_equivalence_suite, ZSuiteReport};
use greensolve::measure::Atom;
use greensolve::operator::{
    cache_path, indicator_scaling, load_or_assemble, loglog_slope, near_support, CacheStatus, IndicatorRecord,
    NearSupportRecord,
};
use greensolve::schrodinger::{
    csola, default_cutoffs, default_rho_ladder, solve_bounded_direct, solve_bounded_iterative, solve_l1,
    vu_l1_estimate, AlphaEstimate, Calibration, DoubleLimitStep, LadderPoint, Method,
};
use greensolve::{GreenKernel, GreenMatrix, Potential, QuadGrid, RadonMeasure};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Shared state of one run.
pub struct Run {
    pub loaded: Loaded,
    pub grid: QuadGrid,
    pub kernel: GreenKernel,
    pub matrix: GreenMatrix,
    pub cache: CacheStatus,
    pub cache_file: Option<PathBuf>,
    pub seed: u64,
}

impl Run {
    pub fn build(loaded: Loaded, seed: Option<u64>, cache_dir: Option<&Path>) -> Result<Self> {
        let cfg = &loaded.config;
        let grid = QuadGrid::build(cfg.grid_spec()).context("grid")?;
        let kernel = cfg.kernel()?;
        let dir = cache_dir.map(Path::to_path_buf).or_else(|| cfg.cache_dir.as_ref().map(|d| loaded.resolve(d)));
        let (matrix, cache) = load_or_assemble(&kernel, &grid, dir.as_deref()).context("kernel matrix")?;
        if let CacheStatus::Rebuilt { reason } = &cache {
            eprintln!("warning: kernel cache rebuilt ({reason})");
        }
        let cache_file = dir.map(|d| cache_path(&d, &kernel, &grid));
        let seed = cfg.seed(seed);
        Ok(Self { loaded, grid, kernel, matrix, cache, cache_file, seed })
    }

    fn potential(&self) -> Result<Potential> {
        self.loaded.potential(&self.grid)
    }

    fn measure(&self) -> Result<RadonMeasure> {
        self.loaded.measure(&self.grid)
    }

    fn cutoffs(&self, v: &Potential) -> Vec<f64> {
        self.loaded.config.ladders.cutoffs.clone().unwrap_or_else(|| default_cutoffs(v))
    }

    fn node_table(&self, name: &str, columns: &[(&str, &[f64])]) -> Table {
        let mut header = vec!["node", "x", "y", "z", "r"];
        header.extend(columns.iter().map(|c| c.0));
        let mut t = Table::new(name, &header);
        for (i, x) in self.grid.nodes.iter().enumerate() {
            let mut row = vec![i as f64, x[0], x[1], x[2], x.iter().map(|a| a * a).sum::<f64>().sqrt()];
            row.extend(columns.iter().map(|c| c.1[i]));
            t.push(row);
        }
        t
    }
}

pub struct Outcome<T> {
    pub result: T,
    pub tables: Vec<Table>,
}

#[derive(Serialize)]
pub struct AssembleResult {
    pub nodes: usize,
    pub symmetry_defect: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub g_one_at_origin: f64,
    /// Largest node-wise relative deviation of `G(1)` from the closed form.
    pub g_one_max_rel_error: f64,
    pub cache_file: Option<String>,
}

pub fn assemble(c: &Run) -> Result<Outcome<AssembleResult>> {
    let g = &c.grid;
    let eig = c.matrix.symmetrized_eigenvalues()?;
    let g1 = c.matrix.apply_density(&vec![1.0; g.len()])?;
    let exact: Vec<f64> = g.nodes.iter().map(|x| c.kernel.torsion(x.iter().map(|a| a * a).sum::<f64>().sqrt())).collect();
    let err = g1.iter().zip(&exact).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
    Ok(Outcome {
        result: AssembleResult {
            nodes: g.len(),
            symmetry_defect: c.matrix.symmetry_defect(),
            min_eigenvalue: eig.iter().cloned().fold(f64::INFINITY, f64::min),
            max_eigenvalue: eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            g_one_at_origin: g1[0],
            g_one_max_rel_error: err,
            cache_file: c.cache_file.as_ref().map(|p| p.display().to_string()),
        },
        tables: vec![c.node_table("g_one", &[("g_one", &g1), ("exact", &exact)])],
    })
}

#[derive(Serialize)]
pub struct VuEstimate {
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Serialize)]
pub struct SolveResult {
    pub method: Method,
    pub residual: f64,
    pub iterations: usize,
    pub bracket_gap: f64,
    pub sandwich_violation: f64,
    pub u_l1: f64,
    pub u_at_origin: f64,
    pub vu_l1: f64,
    pub vu_estimate: Option<VuEstimate>,
    pub double_limit: Vec<DoubleLimitStep>,
}

pub fn solve(c: &Run) -> Result<Outcome<SolveResult>> {
    let (g, k, m) = (&c.grid, &c.kernel, &c.matrix);
    let v = c.potential()?;
    let mu = c.measure()?;
    let cfg = &c.loaded.config;
    let tol = cfg.tolerances.solver_tol;
    let method = match cfg.solve.method {
        SolveMethod::Auto if v.is_bounded() => SolveMethod::Direct,
        SolveMethod::Auto => SolveMethod::L1,
        other => other,
    };
    if method != SolveMethod::L1 && !v.is_bounded() {
        bail!("solve.method: {method:?} needs a bounded potential; use \"l1\" or the csola subcommand");
    }
    let (report, trace) = match method {
        SolveMethod::Direct => (solve_bounded_direct(k, g, m, &v.node_values(g)?, &mu)?, vec![]),
        SolveMethod::Iterative => {
            let max_iter = cfg.solve.max_iter.unwrap_or(10_000);
            (solve_bounded_iterative(k, g, m, &v.node_values(g)?, &mu, tol, max_iter)?, vec![])
        }
        _ => {
            if !mu.atoms.is_empty() {
                bail!("solve.method \"l1\": the measure has atoms; use the csola subcommand");
            }
            solve_l1(g, m, &v, &mu.density, tol)?
        }
    };
    let vu_estimate = if v.is_bounded() {
        let vk = v.node_values(g)?;
        let (lhs, rhs) = vu_l1_estimate(g, m, &report, &vk, mu.total_variation(g), 0.5)?;
        Some(VuEstimate { lhs, rhs })
    } else {
        None
    };
    let mut tables = vec![c.node_table("solution", &[("u", &report.u), ("vu", &report.vu)])];
    if !trace.is_empty() {
        let mut t = Table::new("double_limit", &["m", "k", "l1", "change"]);
        for s in &trace {
            t.push(vec![s.m, s.k, s.l1, s.change]);
        }
        tables.push(t);
    }
    Ok(Outcome {
        result: SolveResult {
            method: report.method,
            residual: report.residual,
            iterations: report.iterations,
            bracket_gap: report.bracket_gap,
            sandwich_violation: report.sandwich_violation,
            u_l1: g.l1_norm(&report.u),
            u_at_origin: point_value(g, &report.u, &[0.0; 3])?,
            vu_l1: g.l1_norm(&report.vu),
            vu_estimate,
            double_limit: trace,
        },
        tables,
    })
}

#[derive(Serialize)]
pub struct ReducedMeasure {
    pub atoms: Vec<Atom>,
    pub density_integral: f64,
    pub density_preserved: bool,
}

#[derive(Serialize)]
pub struct CsolaResult {
    pub is_solution: bool,
    pub alphas: Vec<AlphaEstimate>,
    pub calibration: Vec<Calibration>,
    pub ladder: Vec<LadderPoint>,
    pub mu_reduced: ReducedMeasure,
    pub z_points: Vec<[f64; 3]>,
    pub monotonicity_defect: f64,
    pub vu_running_max_variation: f64,
    pub rho_ladder: Vec<f64>,
    pub u_limit_l1: f64,
}

pub fn run_csola(c: &Run) -> Result<Outcome<CsolaResult>> {
    let g = &c.grid;
    let v = c.potential()?;
    let mu = c.measure()?;
    let cfg = &c.loaded.config;
    let rho = cfg.ladders.rho_ladder.as_deref();
    let r = csola(&c.kernel, g, &c.matrix, &v, &mu, &c.cutoffs(&v), rho, cfg.csola_tolerances())?;
    let mut ladder = Table::new("csola_ladder", &["k", "l1", "change_l1", "vu_l1"]);
    for p in &r.ladder {
        ladder.push(vec![p.k, p.l1, p.change_l1, p.vu_l1]);
    }
    let mut alpha = Table::new("csola_alpha", &["x", "y", "z", "atom_mass", "mass_balance", "scaling", "consensus"]);
    for a in &r.alphas {
        alpha.push(vec![a.point[0], a.point[1], a.point[2], a.atom_mass, a.mass_balance, a.scaling, a.consensus]);
    }
    let tables = vec![ladder, alpha, c.node_table("csola_solution", &[("u_limit", &r.u_limit)])];
    Ok(Outcome {
        result: CsolaResult {
            is_solution: r.is_solution,
            u_limit_l1: g.l1_norm(&r.u_limit),
            mu_reduced: ReducedMeasure {
                atoms: r.mu_reduced.atoms.clone(),
                density_integral: g.integrate(&r.mu_reduced.density),
                density_preserved: r.mu_reduced.density == mu.density,
            },
            alphas: r.alphas,
            calibration: r.calibration,
            ladder: r.ladder,
            z_points: r.z_report.z_points,
            monotonicity_defect: r.monotonicity_defect,
            vu_running_max_variation: r.vu_running_max_variation,
            rho_ladder: r.rho_ladder,
        },
        tables,
    })
}

pub fn ztest(c: &Run) -> Result<Outcome<ZSuiteReport>> {
    let v = c.potential()?;
    let r = z_equivalence_suite(&c.kernel, &c.grid, &c.matrix, &v, &c.cutoffs(&v), c.loaded.config.csola_tolerances(), c.seed)?;
    let mut t = Table::new(
        "ztest_verdicts",
        &["x", "y", "z", "beta", "alpha", "column_ratio", "one_ratio", "random_ratio_max", "v1", "v2", "v3", "v4", "v5"],
    );
    for p in &r.points {
        let mut row = vec![p.point[0], p.point[1], p.point[2], p.beta, p.alpha, p.column_ratio, p.one_ratio];
        row.push(p.random_ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        row.extend(p.verdicts().iter().map(|&b| if b { 1.0 } else { 0.0 }));
        t.push(row);
    }
    let mut gv = Table::new("ztest_gv_one", &["node", "gv_one"]);
    if let Some(one) = r.reports.get(r.points.len()) {
        for (i, u) in one.u_limit.iter().enumerate() {
            gv.push(vec![i as f64, *u]);
        }
    }
    Ok(Outcome { result: r, tables: vec![t, gv] })
}

#[derive(Serialize)]
pub struct ScalingResult {
    pub point: [f64; 3],
    pub indicator: Vec<IndicatorRecord>,
    /// Log-log slope of `rho^(-2s) G(1_{B_rho})(x0)`.
    pub indicator_slope: Option<f64>,
    pub near_support: Vec<NearSupportRecord>,
    /// Log-log slope of `rho^(-2s) int_{B_rho} G(mu)`.
    pub near_support_slope: Option<f64>,
    /// Log-log slope of `rho^(-2s) int_{B_rho} G(delta_x0)`.
    pub delta_slope: Option<f64>,
    pub atom_mass: f64,
    /// Near-support ratio at the finest unclamped radius.
    pub atom_mass_estimate: Option<f64>,
}

pub fn scaling(c: &Run) -> Result<Outcome<ScalingResult>> {
    let g = &c.grid;
    let x0 = c.loaded.config.scaling.point.unwrap_or([0.0; 3]);
    let rho = c.loaded.config.ladders.rho_ladder.clone().unwrap_or_else(|| default_rho_ladder(g, &x0));
    let mu = c.measure()?;
    let ind = indicator_scaling(&c.kernel, g, &c.matrix, &x0, &rho)?;
    let near = near_support(&c.kernel, g, &c.matrix, &mu, &x0, &rho)?;
    let mut t1 = Table::new("scaling_indicator", &["rho", "value_at_x0", "l1_norm", "value_far"]);
    for r in &ind {
        t1.push(vec![r.rho, r.value_at_x0, r.l1_norm, r.value_far]);
    }
    let mut t2 = Table::new("scaling_near_support", &["rho", "scaled_mu", "scaled_delta", "ratio"]);
    for r in &near {
        t2.push(vec![r.rho, r.scaled_mu, r.scaled_delta, r.ratio]);
    }
    let slope = |pts: Vec<(f64, f64)>| loglog_slope(&pts);
    Ok(Outcome {
        result: ScalingResult {
            point: x0,
            indicator_slope: slope(ind.iter().filter(|r| !r.clamped).map(|r| (r.rho, r.value_at_x0)).collect()),
            near_support_slope: slope(near.iter().filter(|r| !r.clamped).map(|r| (r.rho, r.scaled_mu)).collect()),
            delta_slope: slope(near.iter().filter(|r| !r.clamped).map(|r| (r.rho, r.scaled_delta)).collect()),
            atom_mass: mu.mass_at(&x0),
            atom_mass_estimate: near.iter().filter(|r| !r.clamped).last().map(|r| r.ratio),
            indicator: ind,
            near_support: near,
        },
        tables: vec![t1, t2],
    })
}
