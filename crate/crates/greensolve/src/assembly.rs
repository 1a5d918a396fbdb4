//! Galerkin assembly of the discrete Green operator.
//!
//! Node `i` carries a probability measure `nu_i`: the origin node the uniform
//! ball of radius `origin_radius`, a shell node the uniform measure on
//! `slab x patch`. The energy `E_ij = <G nu_i, nu_j>` factorizes through the
//! zonal radial integrals
//!
//! `Psi_ab(theta) = int int rho_a(r) rho_b(r') g(r, r', theta) dr dr'`
//!
//! and the distribution of the angle between uniform points of two patches.
//! `Psi_ab` is interpolated on a fixed grid in `theta`; the patch geometry is
//! reduced to a weight vector against that interpolation basis, so
//! `E_ij = sum_k W_{pq}[k] Psi_ab(theta_k)`. The matrix entries are
//! `M_ij = E_ij w_j`. Because every `E_ij` is the energy of two positive
//! measures under a positive definite kernel, `E` is symmetric, entrywise
//! positive and positive semidefinite.

use crate::grid::{AngularRule, Patch, QuadGrid};
use crate::kernel::GreenKernel;
use crate::quadrature::{gauss_legendre, graded_breaks, Rule};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

const CHEB: usize = 11;
const THETA_MIN: f64 = 1e-7;
const THETA_GEOMETRIC_TOP: f64 = 0.4;

/// Piecewise Chebyshev interpolation grid on `[THETA_MIN, pi]`.
#[derive(Clone, Debug)]
pub struct ThetaGrid {
    pub edges: Vec<f64>,
    pub nodes: Vec<f64>,
    cheb: [f64; CHEB],
    bary: [f64; CHEB],
}

impl ThetaGrid {
    pub fn new() -> Self {
        let mut edges = vec![THETA_MIN];
        while *edges.last().unwrap() * 2.0 < THETA_GEOMETRIC_TOP {
            let t = *edges.last().unwrap() * 2.0;
            edges.push(t);
        }
        let start = *edges.last().unwrap();
        let uniform = ((PI - start) / 0.4).ceil() as usize;
        for k in 1..=uniform {
            edges.push(start + (PI - start) * k as f64 / uniform as f64);
        }
        let mut cheb = [0.0; CHEB];
        let mut bary = [0.0; CHEB];
        for j in 0..CHEB {
            let a = PI * (2 * j + 1) as f64 / (2 * CHEB) as f64;
            cheb[j] = -a.cos();
            bary[j] = if j % 2 == 0 { 1.0 } else { -1.0 } * a.sin();
        }
        let mut nodes = Vec::with_capacity((edges.len() - 1) * CHEB);
        for w in edges.windows(2) {
            for &x in &cheb {
                nodes.push(0.5 * (w[0] + w[1]) + 0.5 * (w[1] - w[0]) * x);
            }
        }
        Self { edges, nodes, cheb, bary }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panels(&self) -> usize {
        self.edges.len() - 1
    }

    fn panel_of(&self, theta: f64) -> usize {
        match self.edges.binary_search_by(|e| e.total_cmp(&theta)) {
            Ok(k) => k.min(self.panels() - 1),
            Err(k) => k.saturating_sub(1).min(self.panels() - 1),
        }
    }

    /// Lagrange basis values of the panel containing `theta`.
    fn basis(&self, panel: usize, theta: f64, out: &mut [f64; CHEB]) {
        let (a, b) = (self.edges[panel], self.edges[panel + 1]);
        let x = (2.0 * theta - a - b) / (b - a);
        let mut total = 0.0;
        for j in 0..CHEB {
            let d = x - self.cheb[j];
            if d == 0.0 {
                out.fill(0.0);
                out[j] = 1.0;
                return;
            }
            out[j] = self.bary[j] / d;
            total += out[j];
        }
        for v in out.iter_mut() {
            *v /= total;
        }
    }

    /// Interpolate tabulated values at `theta`.
    pub fn interpolate(&self, values: &[f64], theta: f64) -> f64 {
        let p = self.panel_of(theta);
        let mut l = [0.0; CHEB];
        self.basis(p, theta, &mut l);
        l.iter().zip(&values[p * CHEB..(p + 1) * CHEB]).map(|(a, b)| a * b).sum()
    }
}

impl Default for ThetaGrid {
    fn default() -> Self {
        Self::new()
    }
}

/// Radial probability measure with density proportional to `r^2` on `[lo, hi]`.
#[derive(Clone, Copy, Debug)]
struct RadialMeasure {
    lo: f64,
    hi: f64,
}

impl RadialMeasure {
    fn density(&self, r: f64) -> f64 {
        3.0 * r * r / (self.hi.powi(3) - self.lo.powi(3))
    }
}

fn radial_measures(grid: &QuadGrid) -> Vec<RadialMeasure> {
    let mut out = vec![RadialMeasure { lo: 0.0, hi: grid.origin_radius }];
    out.extend(grid.shells.iter().map(|s| RadialMeasure { lo: s.slab.0, hi: s.slab.1 }));
    out
}

/// `Psi_ab(theta)` by integrating over `u = r' - r` (graded toward `u = 0`) and `v = r`.
fn zonal_value(k: &GreenKernel, a: RadialMeasure, b: RadialMeasure, theta: f64, gl: &Rule) -> f64 {
    let sh2 = (0.5 * theta).sin().powi(2);
    let u_lo = b.lo - a.hi;
    let u_hi = b.hi - a.lo;
    let mid = 0.25 * (a.lo + a.hi + b.lo + b.hi);
    let eps = (2.0 * mid * (0.5 * theta).sin()).max(1e-14 * (u_hi - u_lo));
    let mut breaks = graded_breaks(u_lo, u_hi, 0.0, eps, 2.0);
    for extra in [b.lo - a.lo, b.hi - a.hi] {
        if extra > u_lo && extra < u_hi {
            breaks.push(extra);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (p0, p1) = (w[0], w[1]);
        let hu = 0.5 * (p1 - p0);
        let cu = 0.5 * (p0 + p1);
        for (xu, wu) in gl.nodes.iter().zip(&gl.weights) {
            let u = cu + hu * xu;
            let v0 = a.lo.max(b.lo - u);
            let v1 = a.hi.min(b.hi - u);
            if v1 <= v0 {
                continue;
            }
            let hv = 0.5 * (v1 - v0);
            let cv = 0.5 * (v0 + v1);
            let mut inner = 0.0;
            for (xv, wv) in gl.nodes.iter().zip(&gl.weights) {
                let r1 = cv + hv * xv;
                let r2 = r1 + u;
                inner += wv * a.density(r1) * b.density(r2) * k.eval_zonal(r1, r2, sh2);
            }
            total += wu * hu * hv * inner;
        }
    }
    total
}

/// Zonal tables for all unordered pairs of radial measures.
#[derive(Clone, Debug)]
pub struct ZonalTables {
    count: usize,
    values: Vec<Vec<f64>>,
}

impl ZonalTables {
    pub fn build(k: &GreenKernel, grid: &QuadGrid, theta: &ThetaGrid) -> Self {
        let measures = radial_measures(grid);
        let m = measures.len();
        let gl = gauss_legendre(5);
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect();
        let values = pairs
            .par_iter()
            .map(|&(a, b)| {
                let (ma, mb) = (measures[a], measures[b]);
                theta.nodes.iter().map(|&t| zonal_value(k, ma, mb, t, &gl)).collect()
            })
            .collect();
        Self { count: m, values }
    }

    fn index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        a * self.count - a * (a + 1) / 2 + b
    }

    /// Values of `Psi_ab` at the theta nodes; index 0 is the origin ball.
    pub fn get(&self, a: usize, b: usize) -> &[f64] {
        &self.values[self.index(a, b)]
    }
}

/// Sparse weight vector against the theta basis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ThetaWeights {
    pub start: usize,
    pub values: Vec<f64>,
}

impl ThetaWeights {
    fn from_dense(d: &[f64]) -> Self {
        let first = d.iter().position(|v| *v != 0.0);
        match first {
            None => Self::default(),
            Some(f) => {
                let last = d.iter().rposition(|v| *v != 0.0).unwrap();
                Self { start: f, values: d[f..=last].to_vec() }
            }
        }
    }

    pub fn dot(&self, table: &[f64]) -> f64 {
        self.values.iter().zip(&table[self.start..]).map(|(a, b)| a * b).sum()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Angle-distribution weights for every class `(band_i, band_j, sector offset)`.
#[derive(Clone, Debug)]
pub struct AngularWeights {
    pub bands: usize,
    pub sectors: usize,
    classes: Vec<ThetaWeights>,
    /// Weights of the full-sphere mean, used by the origin node.
    pub sphere: ThetaWeights,
}

impl AngularWeights {
    pub fn get(&self, bi: usize, bj: usize, offset: usize) -> &ThetaWeights {
        &self.classes[(bi * self.bands + bj) * self.sectors + offset]
    }

    pub fn build(rule: &AngularRule, theta: &ThetaGrid) -> Self {
        let (mz, mp) = (rule.bands, rule.sectors);
        let k = theta.len();
        let rows: Vec<Vec<Vec<f64>>> = (0..mz)
            .into_par_iter()
            .map(|bi| band_weights(rule, theta, bi))
            .collect();
        let mut classes = Vec::with_capacity(mz * mz * mp);
        for bi in 0..mz {
            for bj in 0..mz {
                for off in 0..mp {
                    let mut acc = vec![0.0; k];
                    let mirror_off = (mp - off) % mp;
                    let copies = [
                        (bi, bj, off),
                        (bi, bj, mirror_off),
                        (bj, bi, off),
                        (bj, bi, mirror_off),
                        (mz - 1 - bi, mz - 1 - bj, off),
                        (mz - 1 - bi, mz - 1 - bj, mirror_off),
                        (mz - 1 - bj, mz - 1 - bi, off),
                        (mz - 1 - bj, mz - 1 - bi, mirror_off),
                    ];
                    for &(a, b, o) in &copies {
                        for (x, y) in acc.iter_mut().zip(&rows[a][b * mp + o]) {
                            *x += y / copies.len() as f64;
                        }
                    }
                    classes.push(ThetaWeights::from_dense(&acc));
                }
            }
        }
        let mut sphere = vec![0.0; k];
        let sub = gauss_legendre(6);
        let mut l = [0.0; CHEB];
        for p in 0..theta.panels() {
            let (a, b) = (theta.edges[p], theta.edges[p + 1]);
            for (x, w) in sub.nodes.iter().zip(&sub.weights) {
                let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
                theta.basis(p, t, &mut l);
                for j in 0..CHEB {
                    sphere[p * CHEB + j] += 0.5 * (b - a) * w * 0.5 * t.sin() * l[j];
                }
            }
        }
        Self { bands: mz, sectors: mp, classes, sphere: ThetaWeights::from_dense(&sphere) }
    }
}

type Vec3 = [f64; 3];

fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    dot3(&c, &c).sqrt().atan2(dot3(a, b))
}

fn unit(z: f64, phi: f64) -> Vec3 {
    let rho = (1.0 - z * z).max(0.0).sqrt();
    [rho * phi.cos(), rho * phi.sin(), z]
}

/// Linear constraint `c . P >= b` describing one side of a patch.
#[derive(Clone, Copy, Debug)]
struct HalfSpace {
    c: Vec3,
    b: f64,
}

fn patch_constraints(p: &Patch, sectors: usize) -> Vec<HalfSpace> {
    let mut out = Vec::with_capacity(4);
    if p.z0 > -1.0 {
        out.push(HalfSpace { c: [0.0, 0.0, 1.0], b: p.z0 });
    }
    if p.z1 < 1.0 {
        out.push(HalfSpace { c: [0.0, 0.0, -1.0], b: -p.z1 });
    }
    if sectors > 1 {
        out.push(HalfSpace { c: [-p.phi0.sin(), p.phi0.cos(), 0.0], b: 0.0 });
        out.push(HalfSpace { c: [p.phi1.sin(), -p.phi1.cos(), 0.0], b: 0.0 });
    }
    out
}

/// Point of view `omega` with its tangent frame.
struct Frame {
    w: Vec3,
    e1: Vec3,
    e2: Vec3,
}

impl Frame {
    fn new(z: f64, phi: f64) -> Self {
        let rho = (1.0 - z * z).max(0.0).sqrt();
        Self {
            w: [rho * phi.cos(), rho * phi.sin(), z],
            e1: [z * phi.cos(), z * phi.sin(), -rho],
            e2: [-phi.sin(), phi.cos(), 0.0],
        }
    }
}

/// Target patch seen from a frame: per-constraint coefficients.
struct Seen {
    a: Vec<f64>,
    rho: Vec<f64>,
    psi: Vec<f64>,
    b: Vec<f64>,
}

fn see(frame: &Frame, cons: &[HalfSpace]) -> Seen {
    let mut s = Seen { a: vec![], rho: vec![], psi: vec![], b: vec![] };
    for h in cons {
        let g1 = dot3(&h.c, &frame.e1);
        let g2 = dot3(&h.c, &frame.e2);
        s.a.push(dot3(&h.c, &frame.w));
        s.rho.push(g1.hypot(g2));
        s.psi.push(g2.atan2(g1));
        s.b.push(h.b);
    }
    s
}

const TAU: f64 = 2.0 * PI;

/// Azimuthal measure of the circle at angular distance `theta` inside the patch.
fn arc_measure(seen: &Seen, theta: f64) -> f64 {
    let (st, ct) = theta.sin_cos();
    let mut set: [(f64, f64); 8] = [(0.0, 0.0); 8];
    set[0] = (0.0, TAU);
    let mut len = 1;
    for i in 0..seen.a.len() {
        let big_a = seen.a[i] * ct;
        let r = seen.rho[i] * st;
        let b = seen.b[i];
        if r <= 1e-300 {
            if big_a >= b {
                continue;
            }
            return 0.0;
        }
        let kappa = (b - big_a) / r;
        if kappa <= -1.0 {
            continue;
        }
        if kappa >= 1.0 {
            return 0.0;
        }
        let h = kappa.acos();
        let start = (seen.psi[i] - h).rem_euclid(TAU);
        let end = start + 2.0 * h;
        let arcs: [(f64, f64); 2] =
            if end <= TAU { [(start, end), (0.0, 0.0)] } else { [(start, TAU), (0.0, end - TAU)] };
        let mut next: [(f64, f64); 8] = [(0.0, 0.0); 8];
        let mut nlen = 0;
        for &(s0, s1) in &set[..len] {
            for &(a0, a1) in &arcs {
                let lo = s0.max(a0);
                let hi = s1.min(a1);
                if hi > lo && nlen < 8 {
                    next[nlen] = (lo, hi);
                    nlen += 1;
                }
            }
        }
        set = next;
        len = nlen;
        if len == 0 {
            return 0.0;
        }
    }
    set[..len].iter().map(|(a, b)| b - a).sum()
}

/// Candidate kink locations of `theta -> arc_measure` and a bracket of its support.
fn kinks(frame: &Frame, seen: &Seen, corners: &[Vec3]) -> (Vec<f64>, f64, f64) {
    let mut out = Vec::with_capacity(12);
    for i in 0..seen.a.len() {
        let tc = seen.rho[i].atan2(seen.a[i]);
        let d = seen.b[i].clamp(-1.0, 1.0).acos();
        for t in [(tc - d).abs(), (tc + d).min(TAU - tc - d)] {
            if t > 0.0 && t < PI {
                out.push(t);
            }
        }
    }
    for c in corners {
        out.push(angle_between(&frame.w, c));
    }
    let inside = (0..seen.a.len()).all(|i| seen.a[i] >= seen.b[i]);
    let antipode_inside = (0..seen.a.len()).all(|i| -seen.a[i] >= seen.b[i]);
    let lo = if inside { 0.0 } else { out.iter().cloned().fold(PI, f64::min) };
    let hi = if antipode_inside { PI } else { out.iter().cloned().fold(0.0, f64::max).min(PI) };
    (out, lo, hi)
}

fn graded_unit(levels: usize, pts: usize) -> Rule {
    let mut br = vec![0.0, 1.0];
    for j in 1..=levels {
        let t = 0.5f64.powi(j as i32);
        br.push(t);
        br.push(1.0 - t);
    }
    br.sort_by(f64::total_cmp);
    br.dedup();
    let gl = gauss_legendre(pts);
    let mut r = Rule { nodes: vec![], weights: vec![] };
    for w in br.windows(2) {
        let m = gl.mapped(w[0], w[1]);
        r.nodes.extend(m.nodes);
        r.weights.extend(m.weights);
    }
    r
}

/// Classes whose angle distribution is non-smooth in the source point: the
/// target touches the source patch or its antipodal image.
fn patches_touch(rule: &AngularRule, bi: usize, bj: usize, off: usize) -> bool {
    let (mz, mp) = (rule.bands, rule.sectors);
    let circ = |o: usize| o.min(mp - o);
    let polar = |b: usize| b == 0 || b + 1 == mz;
    let direct = (bi == bj && polar(bi)) || (bi.abs_diff(bj) <= 1 && circ(off) <= 1);
    let anti_band = mz - 1 - bi;
    let anti_off = (off + mp - mp / 2) % mp;
    let slack = mp % 2;
    let anti = (anti_band == bj && polar(bj)) || (anti_band.abs_diff(bj) <= 1 && circ(anti_off) <= 1 + slack);
    mp <= 3 || direct || anti
}

/// Dense weights for source band `bi` against every target `(band, offset)`.
fn band_weights(rule: &AngularRule, theta: &ThetaGrid, bi: usize) -> Vec<Vec<f64>> {
    let (mz, mp) = (rule.bands, rule.sectors);
    let k = theta.len();
    let src = rule.patch(bi, 0);
    let fine = graded_unit(6, 4);
    let coarse = {
        let g = gauss_legendre(14);
        g.mapped(0.0, 1.0)
    };
    let sub = gauss_legendre(6);
    let mut out = vec![vec![0.0; k]; mz * mp];
    let targets: Vec<(usize, usize, Patch, Vec<HalfSpace>, Vec<Vec3>)> = (0..mz)
        .flat_map(|bj| (0..mp).map(move |o| (bj, o)))
        .map(|(bj, o)| {
            let p = rule.patch(bj, o);
            let cons = patch_constraints(&p, mp);
            let corners = vec![unit(p.z0, p.phi0), unit(p.z0, p.phi1), unit(p.z1, p.phi0), unit(p.z1, p.phi1)];
            (bj, o, p, cons, corners)
        })
        .collect();
    let mut l = [0.0; CHEB];
    for (near_pass, rule_1d) in [(true, &fine), (false, &coarse)] {
        for (xz, wz) in rule_1d.nodes.iter().zip(&rule_1d.weights) {
            let z = src.z0 + (src.z1 - src.z0) * xz;
            for (xp, wph) in rule_1d.nodes.iter().zip(&rule_1d.weights) {
                let phi = src.phi0 + (src.phi1 - src.phi0) * xp;
                let frame = Frame::new(z, phi);
                let wgt = wz * wph;
                for (bj, o, p, cons, corners) in &targets {
                    if patches_touch(rule, bi, *bj, *o) != near_pass {
                        continue;
                    }
                    let seen = see(&frame, cons);
                    let (mut br, lo, hi) = kinks(&frame, &seen, corners);
                    let lo = lo.max(THETA_MIN);
                    if hi <= lo {
                        continue;
                    }
                    br.retain(|&t| t > lo && t < hi);
                    br.push(lo);
                    br.push(hi);
                    for &e in &theta.edges {
                        if e > lo && e < hi {
                            br.push(e);
                        }
                    }
                    br.sort_by(f64::total_cmp);
                    br.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
                    let area = p.area();
                    let row = &mut out[bj * mp + o];
                    for seg in br.windows(2) {
                        let (t0, t1) = (seg[0], seg[1]);
                        let panel = theta.panel_of(0.5 * (t0 + t1));
                        for (x, w) in sub.nodes.iter().zip(&sub.weights) {
                            let xi = 0.5 * (x + 1.0);
                            let t = t0 + (t1 - t0) * 0.5 * (1.0 - (PI * xi).cos());
                            let jac = (t1 - t0) * 0.25 * PI * (PI * xi).sin() * w;
                            let m = arc_measure(&seen, t);
                            if m == 0.0 {
                                continue;
                            }
                            theta.basis(panel, t, &mut l);
                            let f = wgt * jac * t.sin() * m / area;
                            let base = panel * CHEB;
                            for j in 0..CHEB {
                                row[base + j] += f * l[j];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Angular weights are kernel independent: cache them per angular count.
pub fn angular_weights(rule: &AngularRule, theta: &ThetaGrid) -> Arc<AngularWeights> {
    static CACHE: OnceLock<Mutex<Vec<(usize, Arc<AngularWeights>)>>> = OnceLock::new();
    let key = rule.len();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    if let Some((_, w)) = cache.lock().unwrap().iter().find(|(k, _)| *k == key) {
        return w.clone();
    }
    let w = Arc::new(AngularWeights::build(rule, theta));
    cache.lock().unwrap().push((key, w.clone()));
    w
}

/// Symmetric energy matrix `E_ij = <G nu_i, nu_j>` in row-major order.
pub fn energy_matrix(k: &GreenKernel, grid: &QuadGrid) -> Vec<f64> {
    let theta = ThetaGrid::new();
    let zonal = ZonalTables::build(k, grid, &theta);
    let ang = angular_weights(&grid.angular, &theta);
    let n = grid.len();
    let nr = grid.shells.len();
    let (mz, mp) = (grid.angular.bands, grid.angular.sectors);
    // E for each (shell a, shell b, band i, band j, offset)
    let block = mz * mz * mp;
    let shell_pairs: Vec<Vec<f64>> = (0..nr * nr)
        .into_par_iter()
        .map(|ab| {
            let (a, b) = (ab / nr, ab % nr);
            let tab = zonal.get(a + 1, b + 1);
            let mut v = Vec::with_capacity(block);
            for bi in 0..mz {
                for bj in 0..mz {
                    for o in 0..mp {
                        v.push(ang.get(bi, bj, o).dot(tab));
                    }
                }
            }
            v
        })
        .collect();
    let origin_col: Vec<f64> = (0..=nr).map(|b| ang.sphere.dot(zonal.get(0, b))).collect();
    let mut e = vec![0.0; n * n];
    e.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        if i == 0 {
            row[0] = origin_col[0];
            for (j, x) in row.iter_mut().enumerate().skip(1) {
                let (b, _, _) = grid.locate(j).unwrap();
                *x = origin_col[b + 1];
            }
            return;
        }
        let (a, bi, si) = grid.locate(i).unwrap();
        row[0] = origin_col[a + 1];
        for (j, x) in row.iter_mut().enumerate().skip(1) {
            let (b, bj, sj) = grid.locate(j).unwrap();
            let o = (sj + mp - si) % mp;
            *x = shell_pairs[a * nr + b][(bi * mz + bj) * mp + o];
        }
    });
    e
}
