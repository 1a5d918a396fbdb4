//! Product quadrature of the unit ball in three dimensions.
//!
//! Radially the ball is cut into panels graded dyadically toward the origin
//! (`[2^-(j+1), 2^-j]`) and toward the boundary (`[1 - 2^-j, 1 - 2^-(j+1)]`),
//! each carrying a three-point Gauss rule for the weight `r^2`. The angular
//! rule is Gauss–Legendre in `z = cos(theta)` times a uniform rule in `phi`,
//! which is a product rule in the area-preserving cylindrical coordinates
//! `(z, phi)`: every node owns the patch `[z_k, z_(k+1)] x [phi_l, phi_(l+1)]`
//! whose area equals its weight. The origin is a separate node owning the ball
//! inside the first panel.

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, gauss_r2};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

/// Bumped whenever the node layout changes, so cached matrices are invalidated.
pub const RULE_VERSION: u32 = 3;
/// Slab half-width as a fraction of the half-gap to neighbouring shells.
const SLAB_FRACTION: f64 = 0.8;

const NODES_PER_PANEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    pub dim: usize,
    pub radial_count: usize,
    pub angular_count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dim: 3, radial_count: 48, angular_count: 48 }
    }
}

/// One radial level of the product grid.
#[derive(Clone, Debug)]
pub struct Shell {
    pub radius: f64,
    /// Weight of the rule for `int f(r) r^2 dr`.
    pub weight: f64,
    /// Radial support `[lo, hi]` of the node measures on this shell.
    pub slab: (f64, f64),
}

/// Spherical patch in `(z, phi)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Patch {
    pub z0: f64,
    pub z1: f64,
    pub phi0: f64,
    pub phi1: f64,
}

impl Patch {
    pub fn area(&self) -> f64 {
        (self.z1 - self.z0) * (self.phi1 - self.phi0)
    }
}

#[derive(Clone, Debug)]
pub struct AngularRule {
    /// Number of `z` bands.
    pub bands: usize,
    /// Number of `phi` sectors.
    pub sectors: usize,
    pub z: Vec<f64>,
    pub z_weight: Vec<f64>,
    pub z_edges: Vec<f64>,
}

impl AngularRule {
    pub fn new(count: usize) -> Self {
        let (bands, sectors) = factor_angular(count);
        let gl = gauss_legendre(bands);
        let mut z_edges = vec![-1.0];
        for w in &gl.weights {
            let last = *z_edges.last().unwrap();
            z_edges.push(last + w);
        }
        *z_edges.last_mut().unwrap() = 1.0;
        Self { bands, sectors, z: gl.nodes, z_weight: gl.weights, z_edges }
    }

    pub fn len(&self) -> usize {
        self.bands * self.sectors
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sector_width(&self) -> f64 {
        2.0 * PI / self.sectors as f64
    }

    pub fn direction(&self, band: usize, sector: usize) -> [f64; 3] {
        let z = self.z[band];
        let phi = (sector as f64 + 0.5) * self.sector_width();
        let rho = (1.0 - z * z).sqrt();
        [rho * phi.cos(), rho * phi.sin(), z]
    }

    pub fn weight(&self, band: usize) -> f64 {
        self.z_weight[band] * self.sector_width()
    }

    pub fn patch(&self, band: usize, sector: usize) -> Patch {
        let w = self.sector_width();
        Patch {
            z0: self.z_edges[band],
            z1: self.z_edges[band + 1],
            phi0: sector as f64 * w,
            phi1: (sector as f64 + 1.0) * w,
        }
    }
}

/// Split `count` into bands x sectors with sectors close to pi x bands.
fn factor_angular(count: usize) -> (usize, usize) {
    (1..=count)
        .filter(|b| count % b == 0)
        .map(|b| (b, count / b))
        .filter(|&(_, m)| m >= 3 || count < 3)
        .min_by(|a, b| {
            let da = (a.1 as f64 - PI * a.0 as f64).abs();
            let db = (b.1 as f64 - PI * b.0 as f64).abs();
            da.total_cmp(&db)
        })
        .unwrap_or((1, count))
}

/// Radial panel edges: dyadic toward the origin and toward the boundary.
fn radial_panels(radial_count: usize) -> Vec<(f64, f64, usize)> {
    let p = (radial_count / NODES_PER_PANEL).max(1);
    let outer = p.div_ceil(4).max(1);
    let inner = p - outer;
    let mut edges = Vec::new();
    if inner == 0 {
        edges.push(0.25);
    } else {
        for j in (1..=inner).rev() {
            edges.push(0.5f64.powi(j as i32 + 1));
        }
    }
    edges.push(0.5);
    for j in 2..=outer {
        edges.push(1.0 - 0.5f64.powi(j as i32));
    }
    edges.push(1.0);
    if inner == 0 {
        edges.retain(|&e| e != 0.5);
    }
    let panels = edges.len() - 1;
    let extra = radial_count - NODES_PER_PANEL * panels;
    (0..panels)
        .map(|k| {
            let bonus = extra / panels + usize::from(k + extra % panels >= panels);
            (edges[k], edges[k + 1], NODES_PER_PANEL + bonus)
        })
        .collect()
}

/// Quadrature grid of the unit ball.
#[derive(Clone, Debug)]
pub struct QuadGrid {
    pub spec: GridSpec,
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub boundary_dist: Vec<f64>,
    pub radial_levels: Vec<f64>,
    pub cell_radius: Vec<f64>,
    pub shells: Vec<Shell>,
    pub angular: AngularRule,
    /// Radius of the ball owned by the origin node.
    pub origin_radius: f64,
    /// Edges of the radial panels, starting at `origin_radius`.
    pub panel_edges: Vec<f64>,
    hash: [u8; 32],
}

/// Result of a localized integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallSample {
    pub value: f64,
    pub captured: usize,
    /// True when no node was inside the ball; `value` is then 0 but meaningless.
    pub empty: bool,
    /// True when the requested radius was raised to the resolution floor.
    pub clamped: bool,
    pub radius: f64,
}

impl QuadGrid {
    pub fn build(spec: GridSpec) -> Result<Self> {
        if spec.dim != 3 {
            return Err(Error::Unsupported(format!(
                "ball grids are implemented for n = 3 only (got n = {})",
                spec.dim
            )));
        }
        if spec.radial_count < 4 {
            return Err(Error::Parameter("radial_count must be at least 4".into()));
        }
        if spec.angular_count < 6 {
            return Err(Error::Parameter("angular_count must be at least 6".into()));
        }
        let panels = radial_panels(spec.radial_count);
        let origin_radius = panels[0].0;
        let mut panel_edges = vec![origin_radius];
        let mut radii = Vec::new();
        let mut rweights = Vec::new();
        for &(a, b, m) in &panels {
            let rule = gauss_r2(m, a, b);
            radii.extend(rule.nodes);
            rweights.extend(rule.weights);
            panel_edges.push(b);
        }
        let shells = slabs(&radii, &rweights, origin_radius);
        let angular = AngularRule::new(spec.angular_count);
        let na = angular.len();
        let n = 1 + shells.len() * na;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        nodes.push([0.0; 3]);
        weights.push(4.0 * PI / 3.0 * origin_radius.powi(3));
        for sh in &shells {
            for band in 0..angular.bands {
                for sector in 0..angular.sectors {
                    let d = angular.direction(band, sector);
                    nodes.push([sh.radius * d[0], sh.radius * d[1], sh.radius * d[2]]);
                    weights.push(sh.weight * angular.weight(band));
                }
            }
        }
        let boundary_dist = nodes.iter().map(|x| 1.0 - crate::kernel::norm(x)).collect();
        let cell_radius = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| if i == 0 { origin_radius } else { (3.0 * w / (4.0 * PI)).cbrt() })
            .collect();
        let mut h = Sha256::new();
        h.update(b"greensolve-grid");
        h.update(RULE_VERSION.to_le_bytes());
        h.update((spec.dim as u64).to_le_bytes());
        h.update((spec.radial_count as u64).to_le_bytes());
        h.update((spec.angular_count as u64).to_le_bytes());
        Ok(Self {
            spec,
            nodes,
            weights,
            boundary_dist,
            radial_levels: radii,
            cell_radius,
            shells,
            angular,
            origin_radius,
            panel_edges,
            hash: h.finalize().into(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn hash_hex(&self) -> String {
        self.hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `(shell, band, sector)` of a node, `None` for the origin.
    pub fn locate(&self, i: usize) -> Option<(usize, usize, usize)> {
        if i == 0 {
            return None;
        }
        let na = self.angular.len();
        let a = (i - 1) / na;
        let q = (i - 1) % na;
        Some((a, q / self.angular.sectors, q % self.angular.sectors))
    }

    pub fn node_index(&self, shell: usize, band: usize, sector: usize) -> usize {
        1 + shell * self.angular.len() + band * self.angular.sectors + sector
    }

    /// Index of the node at `x`, if any lies within `tol`.
    pub fn find_node(&self, x: &[f64], tol: f64) -> Option<usize> {
        self.nodes
            .iter()
            .position(|y| y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= tol * tol)
    }

    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.weights.iter().zip(u).map(|(w, v)| w * v).sum()
    }

    pub fn l1_norm(&self, u: &[f64]) -> f64 {
        self.weights.iter().zip(u).map(|(w, v)| w * v.abs()).sum()
    }

    /// Discrete `L^q` norm; `q = inf` gives the max norm.
    pub fn lq_norm(&self, u: &[f64], q: f64) -> f64 {
        if q.is_infinite() {
            return u.iter().fold(0.0, |m, v| m.max(v.abs()));
        }
        self.weights
            .iter()
            .zip(u)
            .map(|(w, v)| w * v.abs().powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Smallest radius a probe ball may have: twice the first radial level.
    pub fn min_probe_radius(&self) -> f64 {
        2.0 * self.radial_levels[0]
    }

    /// Dyadic radii `2^-j`, `j = 1, 2, ...`, down to the resolution floor.
    pub fn dyadic_ladder(&self) -> Vec<f64> {
        (1..60)
            .map(|j| 0.5f64.powi(j))
            .take_while(|&r| r >= self.min_probe_radius())
            .collect()
    }

    /// Nodes whose centre lies in the closed ball.
    pub fn nodes_in_ball(&self, center: &[f64], radius: f64) -> Vec<usize> {
        let r2 = radius * radius * (1.0 + 1e-12);
        (0..self.len())
            .filter(|&i| {
                self.nodes[i].iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2
            })
            .collect()
    }

    /// `sum_{x_i in B} w_i u_i` with node-centre inclusion.
    pub fn ball_integral(&self, u: &[f64], center: &[f64], radius: f64) -> Result<BallSample> {
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("ball radius {radius} must be positive")));
        }
        if u.len() != self.len() {
            return Err(Error::Parameter("value vector does not match grid".into()));
        }
        let cn = crate::kernel::norm(center);
        if cn >= 1.0 || (radius < 1.0 && cn + radius > 1.0 + 1e-9) {
            return Err(Error::Domain(format!("ball of radius {radius} at |c| = {cn} leaves the domain")));
        }
        let floor = self.min_probe_radius();
        let (radius, clamped) = if radius < floor { (floor, true) } else { (radius, false) };
        let inside = self.nodes_in_ball(center, radius);
        let value = inside.iter().map(|&i| self.weights[i] * u[i]).sum();
        Ok(BallSample { value, captured: inside.len(), empty: inside.is_empty(), clamped, radius })
    }
}

/// Radial slabs centred on the nodes, disjoint from each other, the origin cell and the boundary.
fn slabs(radii: &[f64], weights: &[f64], inner: f64) -> Vec<Shell> {
    let m = radii.len();
    (0..m)
        .map(|a| {
            let r = radii[a];
            let left = if a == 0 { 2.0 * (r - inner) } else { r - radii[a - 1] };
            let right = if a + 1 == m { 2.0 * (1.0 - r) } else { radii[a + 1] - r };
            let half = 0.5 * SLAB_FRACTION * left.min(right);
            Shell { radius: r, weight: weights[a], slab: (r - half, r + half) }
        })
        .collect()
}
