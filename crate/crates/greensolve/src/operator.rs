//! The discrete Green operator: assembly, application to densities and
//! measures, the binary kernel cache and the probes of its mapping
//! properties.

use crate::assembly::energy_matrix;
use crate::error::{Error, Result};
use crate::grid::QuadGrid;
use crate::kernel::{GreenKernel, Variant};
use crate::measure::{RadonMeasure, POINT_TOL};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Kernel parameters recorded with a matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelRef {
    pub variant: Variant,
    pub dim: usize,
    pub s: f64,
}

impl KernelRef {
    pub fn of(k: &GreenKernel) -> Self {
        Self { variant: k.variant(), dim: k.dim(), s: k.order() }
    }
}

/// `entries[i][j] ≈ G(x_i, x_j) w_j`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenMatrix {
    pub grid_hash: [u8; 32],
    pub kernel: KernelRef,
    n: usize,
    entries: Vec<f64>,
    weights: Vec<f64>,
    diag_correction: Vec<f64>,
}

impl GreenMatrix {
    /// Galerkin assembly: `entries = E W` with `E_ij` the mutual energy of the
    /// node cells; the diagonal carries the cell self-energy.
    pub fn assemble(k: &GreenKernel, g: &QuadGrid) -> Result<Self> {
        if k.dim() != g.dim() {
            return Err(Error::Parameter(format!("kernel dim {} vs grid dim {}", k.dim(), g.dim())));
        }
        let n = g.len();
        let mut entries = energy_matrix(k, g);
        let diag_correction: Vec<f64> = (0..n).map(|i| entries[i * n + i] * g.weights[i]).collect();
        entries.par_chunks_mut(n).for_each(|row| {
            for (x, w) in row.iter_mut().zip(&g.weights) {
                *x *= w;
            }
        });
        Ok(Self { grid_hash: g.hash(), kernel: KernelRef::of(k), n, entries, weights: g.weights.clone(), diag_correction })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `int_{cell_i} G(x_i, y) dy` realized as `E_ii w_i`.
    pub fn diag_correction(&self) -> &[f64] {
        &self.diag_correction
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Symmetric kernel sample `entries[i][j] / w_j`.
    pub fn kernel_value(&self, i: usize, j: usize) -> f64 {
        self.entry(i, j) / self.weights[j]
    }

    pub fn check_grid(&self, g: &QuadGrid) -> Result<()> {
        if g.hash() != self.grid_hash || g.len() != self.n {
            return Err(Error::Parameter("matrix was assembled on a different grid".into()));
        }
        Ok(())
    }

    /// `G(f)` at the nodes.
    pub fn apply_density(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.n {
            return Err(Error::Parameter("density does not match matrix size".into()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("density must be finite at every node".into()));
        }
        Ok(self.entries.par_chunks(self.n).map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum()).collect())
    }

    /// `faer` copy for factorizations.
    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.n, self.n, |i, j| self.entries[i * self.n + j])
    }

    /// Eigenvalues of `W^(1/2) E W^(1/2)`, ascending.
    pub fn symmetrized_eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.n;
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let m = Mat::from_fn(n, n, |i, j| sw[i] * self.entries[i * n + j] / sw[j]);
        let sym = Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        let ev = sym
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Solver(format!("eigenvalue iteration failed: {e:?}")))?;
        let mut v: Vec<f64> = ev.into_iter().collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    /// Largest violation of `entries[i][j]/w_j = entries[j][i]/w_i`, relative.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                let a = self.kernel_value(i, j);
                let b = self.kernel_value(j, i);
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
            }
        }
        worst
    }
}

/// Kernel column `G(x_i, x0)` at every node; a node on `x0` gets the cell self-energy.
pub fn kernel_column(k: &GreenKernel, g: &QuadGrid, m: &GreenMatrix, x0: &[f64; 3]) -> Result<Vec<f64>> {
    if crate::kernel::norm(x0) >= 1.0 {
        return Err(Error::Domain(format!("atom at {x0:?} is outside the unit ball")));
    }
    (0..g.len())
        .map(|i| {
            let d = crate::kernel::norm2(&[g.nodes[i][0] - x0[0], g.nodes[i][1] - x0[1], g.nodes[i][2] - x0[2]]).sqrt();
            if d <= POINT_TOL {
                Ok(m.diag_correction()[i] / g.weights[i])
            } else {
                k.eval(&g.nodes[i], x0)
            }
        })
        .collect()
}

/// `G(mu)` at the nodes: matrix action on the density plus analytic atom columns.
pub fn apply_measure(k: &GreenKernel, g: &QuadGrid, m: &GreenMatrix, mu: &RadonMeasure) -> Result<Vec<f64>> {
    m.check_grid(g)?;
    let mut out = m.apply_density(&mu.density)?;
    for a in &mu.atoms {
        let col = kernel_column(k, g, m, &a.point)?;
        for (o, c) in out.iter_mut().zip(&col) {
            *o += a.mass * c;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Kernel cache

const MAGIC: &[u8; 4] = b"GRNK";
const CACHE_VERSION: u32 = 1;

/// Outcome of a cache lookup.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Miss,
    Rebuilt { reason: String },
    Disabled,
}

fn header(k: KernelRef, hash: &[u8; 32], n: usize) -> Vec<u8> {
    let mut h = Vec::with_capacity(4 + 4 + 4 + 8 + 1 + 32 + 8);
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    h.extend_from_slice(&(k.dim as u32).to_le_bytes());
    h.extend_from_slice(&k.s.to_le_bytes());
    h.push(k.variant.code());
    h.extend_from_slice(hash);
    h.extend_from_slice(&(n as u64).to_le_bytes());
    h
}

impl GreenMatrix {
    /// Write the cache file atomically (temporary file, then rename).
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut buf = header(self.kernel, &self.grid_hash, self.n);
        buf.reserve(8 * (self.n * self.n + self.n));
        for v in self.entries.iter().chain(&self.diag_correction) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Read a cache file; the header must match `k` and `g` exactly.
    pub fn read_cache(path: &Path, k: &GreenKernel, g: &QuadGrid) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let kr = KernelRef::of(k);
        let n = g.len();
        let want = header(kr, &g.hash(), n);
        if bytes.len() < want.len() || bytes[..want.len()] != want[..] {
            return Err(Error::Cache("header does not match kernel and grid".into()));
        }
        let body = &bytes[want.len()..];
        if body.len() != 8 * (n * n + n) {
            return Err(Error::Cache(format!("expected {} payload bytes, found {}", 8 * (n * n + n), body.len())));
        }
        let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let (entries, diag) = vals.split_at(n * n);
        Ok(Self {
            grid_hash: g.hash(),
            kernel: kr,
            n,
            entries: entries.to_vec(),
            weights: g.weights.clone(),
            diag_correction: diag.to_vec(),
        })
    }
}

/// Cache file name for a kernel/grid pair.
pub fn cache_path(dir: &Path, k: &GreenKernel, g: &QuadGrid) -> PathBuf {
    let v = match k.variant() {
        Variant::Classical => "classical",
        Variant::Rfl => "rfl",
    };
    dir.join(format!("grnk-{v}-s{:016x}-{}.bin", k.order().to_bits(), &g.hash_hex()[..16]))
}

/// Assemble, or load from `cache_dir` when a matching file exists.
pub fn load_or_assemble(k: &GreenKernel, g: &QuadGrid, cache_dir: Option<&Path>) -> Result<(GreenMatrix, CacheStatus)> {
    let Some(dir) = cache_dir else {
        return Ok((GreenMatrix::assemble(k, g)?, CacheStatus::Disabled));
    };
    let path = cache_path(dir, k, g);
    let status = if path.exists() {
        match GreenMatrix::read_cache(&path, k, g) {
            Ok(m) => return Ok((m, CacheStatus::Hit)),
            Err(e) => CacheStatus::Rebuilt { reason: e.to_string() },
        }
    } else {
        CacheStatus::Miss
    };
    let m = GreenMatrix::assemble(k, g)?;
    m.write_cache(&path)?;
    Ok((m, status))
}

// ---------------------------------------------------------------------------
// Probes

/// Indicator of the nodes inside a ball.
pub fn ball_indicator(g: &QuadGrid, center: &[f64], radius: f64) -> Vec<f64> {
    let mut f = vec![0.0; g.len()];
    for i in g.nodes_in_ball(center, radius) {
        f[i] = 1.0;
    }
    f
}

/// Constant of the equiintegrability bound `||G(1_A)||_inf <= C |A|^beta`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Equiintegrability {
    pub beta: f64,
    pub constant: f64,
}

/// Safety factor applied on top of the largest observed ratio.
pub const EQUI_SAFETY: f64 = 2.0;

impl Equiintegrability {
    /// Calibrate `C` from `G(1_Omega)` and centred dyadic balls, with `beta = s/n`.
    pub fn calibrate(k: &GreenKernel, g: &QuadGrid, m: &GreenMatrix) -> Result<Self> {
        let beta = k.order() / k.dim() as f64;
        let mut sets = vec![vec![1.0; g.len()]];
        for rho in g.dyadic_ladder() {
            sets.push(ball_indicator(g, &[0.0; 3], rho));
        }
        let mut c: f64 = 0.0;
        for f in &sets {
            let measure = g.integrate(f);
            let gf = m.apply_density(f)?;
            c = c.max(g.lq_norm(&gf, f64::INFINITY) / measure.powf(beta));
        }
        Ok(Self { beta, constant: EQUI_SAFETY * c })
    }

    /// `(sum_{i in A} w_i |G(f)_i|, C |A|^beta ||f||_1)`.
    pub fn probe(&self, g: &QuadGrid, m: &GreenMatrix, f: &[f64], set: &[usize]) -> Result<(f64, f64)> {
        if set.is_empty() {
            return Err(Error::Parameter("the probe set must be nonempty".into()));
        }
        let gf = m.apply_density(f)?;
        let lhs = set.iter().map(|&i| g.weights[i] * gf[i].abs()).sum();
        let measure: f64 = set.iter().map(|&i| g.weights[i]).sum();
        Ok((lhs, self.constant * measure.powf(self.beta) * g.l1_norm(f)))
    }
}

/// `Q(p) = n p / (n - 2s)` (infinite for `p >= n/(2s)`).
pub fn critical_exponent(k: &GreenKernel, p: f64) -> f64 {
    let n = k.dim() as f64;
    let s = k.order();
    if p.is_infinite() || p >= n / (2.0 * s) {
        f64::INFINITY
    } else {
        n * p / (n - 2.0 * s)
    }
}

/// Largest radius of the concentrating family `1_{B_rho}/|B_rho|`.
pub const CONCENTRATION_START: f64 = 0.25;

#[derive(Clone, Debug, Serialize)]
pub struct RegularizationReport {
    pub p: f64,
    pub q: f64,
    pub critical_q: f64,
    pub random_max: f64,
    /// `(rho, ||G(f_rho)||_q / ||f_rho||_p)` for `f_rho = 1_{B_rho}/|B_rho|`.
    pub ladder: Vec<(f64, f64)>,
    pub max_ratio: f64,
    /// `max/min` of the ladder ratios.
    pub ladder_variation: f64,
}

/// Observed `||G(f)||_q / ||f||_p` over random sign-changing data and a concentrating family.
pub fn regularization_probe(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    p: f64,
    q: f64,
    trials: usize,
    seed: u64,
) -> Result<RegularizationReport> {
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(Error::Parameter("exponents must satisfy 1 <= p, q".into()));
    }
    let qc = critical_exponent(k, p);
    if q >= qc && !(q.is_infinite() && p.is_infinite()) {
        return Err(Error::Parameter(format!(
            "q = {q} is not below Q(p) = {qc}; G does not map L^{p} into L^{q} and the ratio diverges under refinement"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_max: f64 = 0.0;
    for _ in 0..trials {
        let f: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gf = m.apply_density(&f)?;
        random_max = random_max.max(g.lq_norm(&gf, q) / g.lq_norm(&f, p));
    }
    let mut ladder = Vec::new();
    for rho in g.dyadic_ladder().into_iter().filter(|&r| r <= CONCENTRATION_START) {
        let ind = ball_indicator(g, &[0.0; 3], rho);
        let vol = g.integrate(&ind);
        let f: Vec<f64> = ind.iter().map(|v| v / vol).collect();
        let gf = m.apply_density(&f)?;
        ladder.push((rho, g.lq_norm(&gf, q) / g.lq_norm(&f, p)));
    }
    let lmax = ladder.iter().map(|x| x.1).fold(0.0, f64::max);
    let lmin = ladder.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    Ok(RegularizationReport {
        p,
        q,
        critical_q: qc,
        random_max,
        max_ratio: lmax.max(random_max),
        ladder_variation: if ladder.is_empty() { 1.0 } else { lmax / lmin },
        ladder,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IndicatorRecord {
    pub rho: f64,
    pub value_at_x0: f64,
    pub l1_norm: f64,
    pub value_far: f64,
    pub clamped: bool,
}

/// `G(1_{B_rho(x0)}) / rho^(2s)` at `x0`, in `L^1`, and at a point at distance 0.5.
pub fn indicator_scaling(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    x0: &[f64; 3],
    rho_ladder: &[f64],
) -> Result<Vec<IndicatorRecord>> {
    let i0 = nearest_node(g, x0);
    let dir: [f64; 3] = {
        let r = crate::kernel::norm(x0);
        if r > 1e-12 { [-x0[0] / r, -x0[1] / r, -x0[2] / r] } else { [0.0, 0.0, 1.0] }
    };
    let far_pt = [x0[0] + 0.5 * dir[0], x0[1] + 0.5 * dir[1], x0[2] + 0.5 * dir[2]];
    let i_far = nearest_node(g, &far_pt);
    let two_s = 2.0 * k.order();
    rho_ladder
        .iter()
        .map(|&rho| {
            let floor = g.min_probe_radius();
            let (r, clamped) = if rho < floor { (floor, true) } else { (rho, false) };
            if crate::kernel::norm(x0) + r > 1.0 {
                return Err(Error::Domain(format!("ball of radius {r} at {x0:?} leaves the domain")));
            }
            let f = ball_indicator(g, x0, r);
            let gf = m.apply_density(&f)?;
            let scale = r.powf(two_s);
            Ok(IndicatorRecord {
                rho: r,
                value_at_x0: gf[i0] / scale,
                l1_norm: g.l1_norm(&gf) / scale,
                value_far: gf[i_far] / scale,
                clamped,
            })
        })
        .collect()
}

pub fn nearest_node(g: &QuadGrid, x: &[f64]) -> usize {
    (0..g.len())
        .min_by(|&a, &b| {
            let da: f64 = g.nodes[a].iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
            let db: f64 = g.nodes[b].iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
            da.total_cmp(&db)
        })
        .unwrap_or(0)
}

#[derive(Clone, Debug, Serialize)]
pub struct NearSupportRecord {
    pub rho: f64,
    /// `rho^(-2s) int_{B_rho} G(mu)`.
    pub scaled_mu: f64,
    /// `rho^(-2s) int_{B_rho} G(delta_x0)`.
    pub scaled_delta: f64,
    pub ratio: f64,
    pub clamped: bool,
}

/// Near-support functional of `G(mu)` compared against that of `G(delta_x0)`.
pub fn near_support(
    k: &GreenKernel,
    g: &QuadGrid,
    m: &GreenMatrix,
    mu: &RadonMeasure,
    x0: &[f64; 3],
    rho_ladder: &[f64],
) -> Result<Vec<NearSupportRecord>> {
    let gm = apply_measure(k, g, m, mu)?;
    let gd = kernel_column(k, g, m, x0)?;
    let two_s = 2.0 * k.order();
    rho_ladder
        .iter()
        .map(|&rho| {
            let a = g.ball_integral(&gm, x0, rho)?;
            let b = g.ball_integral(&gd, x0, rho)?;
            let scale = a.radius.powf(-two_s);
            Ok(NearSupportRecord {
                rho: a.radius,
                scaled_mu: scale * a.value,
                scaled_delta: scale * b.value,
                ratio: a.value / b.value,
                clamped: a.clamped,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
