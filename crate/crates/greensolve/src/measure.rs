//! Radon measures, potentials with isolated power-law singularities, the
//! truncation `V ∧ k`, the integrability test for the incompatible set `Z`
//! and reduced measures.

use crate::error::{Error, Result};
use crate::grid::QuadGrid;
use crate::kernel::{norm, GreenKernel};
use serde::{Deserialize, Serialize};

/// Two points closer than this are treated as the same point.
pub const POINT_TOL: f64 = 1e-9;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_interior(p: &[f64; 3], what: &str) -> Result<()> {
    if !p.iter().all(|v| v.is_finite()) || norm(p) >= 1.0 {
        return Err(Error::Domain(format!("{what} at {p:?} is not inside the unit ball")));
    }
    Ok(())
}

fn check_distinct(points: &[[f64; 3]], what: &str) -> Result<()> {
    for (i, a) in points.iter().enumerate() {
        for b in &points[..i] {
            if dist(a, b) <= POINT_TOL {
                return Err(Error::Parameter(format!("{what} locations {a:?} and {b:?} coincide")));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: [f64; 3],
    pub mass: f64,
}

/// `mu = density dx + sum_j mass_j delta_{point_j}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadonMeasure {
    pub density: Vec<f64>,
    pub atoms: Vec<Atom>,
}

impl RadonMeasure {
    pub fn new(density: Vec<f64>, atoms: Vec<Atom>) -> Result<Self> {
        if density.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("measure density must be finite".into()));
        }
        for a in &atoms {
            check_interior(&a.point, "atom")?;
            if !a.mass.is_finite() {
                return Err(Error::Parameter("atom mass must be finite".into()));
            }
        }
        let pts: Vec<[f64; 3]> = atoms.iter().map(|a| a.point).collect();
        check_distinct(&pts, "atom")?;
        Ok(Self { density, atoms })
    }

    pub fn zero(n: usize) -> Self {
        Self { density: vec![0.0; n], atoms: vec![] }
    }

    pub fn from_density(density: Vec<f64>) -> Result<Self> {
        Self::new(density, vec![])
    }

    pub fn point_mass(n: usize, point: [f64; 3], mass: f64) -> Result<Self> {
        Self::new(vec![0.0; n], vec![Atom { point, mass }])
    }

    pub fn total_variation(&self, g: &QuadGrid) -> f64 {
        g.l1_norm(&self.density) + self.atoms.iter().map(|a| a.mass.abs()).sum::<f64>()
    }

    /// `mu({x})`.
    pub fn mass_at(&self, x: &[f64]) -> f64 {
        self.atoms
            .iter()
            .filter(|a| dist(&a.point, x) <= POINT_TOL)
            .map(|a| a.mass)
            .sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.density.iter().all(|&v| v >= 0.0) && self.atoms.iter().all(|a| a.mass >= 0.0)
    }

    /// Jordan decomposition `mu = mu_+ - mu_-`.
    pub fn split(&self) -> (RadonMeasure, RadonMeasure) {
        let part = |sign: f64| RadonMeasure {
            density: self.density.iter().map(|&v| (sign * v).max(0.0)).collect(),
            atoms: self
                .atoms
                .iter()
                .filter(|a| sign * a.mass > 0.0)
                .map(|a| Atom { point: a.point, mass: sign * a.mass })
                .collect(),
        };
        (part(1.0), part(-1.0))
    }

    /// `a mu + b nu`, merging atoms at common points.
    pub fn combine(a: f64, mu: &RadonMeasure, b: f64, nu: &RadonMeasure) -> Result<RadonMeasure> {
        if mu.density.len() != nu.density.len() {
            return Err(Error::Parameter("measures live on different grids".into()));
        }
        let density = mu.density.iter().zip(&nu.density).map(|(x, y)| a * x + b * y).collect();
        let mut atoms: Vec<Atom> = mu.atoms.iter().map(|t| Atom { point: t.point, mass: a * t.mass }).collect();
        for t in &nu.atoms {
            match atoms.iter_mut().find(|s| dist(&s.point, &t.point) <= POINT_TOL) {
                Some(s) => s.mass += b * t.mass,
                None => atoms.push(Atom { point: t.point, mass: b * t.mass }),
            }
        }
        Ok(RadonMeasure { density, atoms })
    }
}

/// `V(y) ≈ coeff |y - point|^(-beta)` near `point`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Singularity {
    pub point: [f64; 3],
    pub beta: f64,
    pub coeff: f64,
}

/// Nonnegative potential: sampled background, constant floor and power-law singularities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Potential {
    pub background: Vec<f64>,
    pub c0: f64,
    pub singularities: Vec<Singularity>,
}

impl Potential {
    pub fn new(background: Vec<f64>, c0: f64, singularities: Vec<Singularity>) -> Result<Self> {
        if background.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter("potential background must be finite and nonnegative".into()));
        }
        if !(c0.is_finite() && c0 >= 0.0) {
            return Err(Error::Parameter("potential floor c0 must be finite and nonnegative".into()));
        }
        for s in &singularities {
            check_interior(&s.point, "singular point")?;
            if !(s.beta > 0.0 && s.beta.is_finite()) || !(s.coeff > 0.0 && s.coeff.is_finite()) {
                return Err(Error::Parameter("singularities need beta > 0 and coeff > 0".into()));
            }
        }
        let pts: Vec<[f64; 3]> = singularities.iter().map(|s| s.point).collect();
        check_distinct(&pts, "singular point")?;
        Ok(Self { background, c0, singularities })
    }

    /// `V ≡ c0` on a grid with `n` nodes.
    pub fn constant(n: usize, c0: f64) -> Result<Self> {
        Self::new(vec![0.0; n], c0, vec![])
    }

    /// `V = coeff |x - point|^(-beta)`.
    pub fn power(n: usize, point: [f64; 3], beta: f64, coeff: f64) -> Result<Self> {
        Self::new(vec![0.0; n], 0.0, vec![Singularity { point, beta, coeff }])
    }

    pub fn is_bounded(&self) -> bool {
        self.singularities.is_empty()
    }

    /// Singular points `S`.
    pub fn singular_set(&self) -> Vec<[f64; 3]> {
        self.singularities.iter().map(|s| s.point).collect()
    }

    /// Scaled copy `t V`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(
            self.background.iter().map(|v| t * v).collect(),
            t * self.c0,
            self.singularities.iter().map(|s| Singularity { coeff: t * s.coeff, ..*s }).collect(),
        )
    }

    /// Values at the nodes. A node sitting on a singular point carries the
    /// mean of the singular term over the ball of its cell radius (infinite
    /// when `beta >= n`).
    pub fn node_values(&self, g: &QuadGrid) -> Result<Vec<f64>> {
        if self.background.len() != g.len() {
            return Err(Error::Parameter("potential background does not match grid".into()));
        }
        let n = g.dim() as f64;
        Ok((0..g.len())
            .map(|i| {
                let x = &g.nodes[i];
                let mut v = self.background[i] + self.c0;
                for s in &self.singularities {
                    let d = dist(x, &s.point);
                    v += if d <= POINT_TOL {
                        if s.beta < n {
                            s.coeff * n * g.cell_radius[i].powf(-s.beta) / (n - s.beta)
                        } else {
                            f64::INFINITY
                        }
                    } else {
                        s.coeff * d.powf(-s.beta)
                    };
                }
                v
            })
            .collect())
    }

    /// Largest node value outside the union of `rho`-balls around `S`.
    pub fn sup_outside(&self, g: &QuadGrid, rho: f64) -> Result<f64> {
        let v = self.node_values(g)?;
        Ok((0..g.len())
            .filter(|&i| self.singularities.iter().all(|s| dist(&g.nodes[i], &s.point) >= rho))
            .map(|i| v[i])
            .fold(0.0, f64::max))
    }
}

/// Node-wise `min(V, k)`.
pub fn truncate(values: &[f64], k: f64) -> Vec<f64> {
    values.iter().map(|&v| v.min(k)).collect()
}

/// Evidence collected for one singular point.
#[derive(Clone, Debug, Serialize)]
pub struct ZEvidence {
    pub point: [f64; 3],
    pub beta: f64,
    pub analytic_verdict: bool,
    pub borderline: bool,
    pub integral_ladder: Vec<f64>,
    pub ladder_verdict: Option<bool>,
    pub maxprinciple_value: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZReport {
    pub z_points: Vec<[f64; 3]>,
    pub evidence: Vec<ZEvidence>,
}

impl ZReport {
    pub fn empty() -> Self {
        Self { z_points: vec![], evidence: vec![] }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.z_points.iter().any(|p| dist(p, x) <= POINT_TOL)
    }
}

/// `x ∈ Z` iff `int_{B_rho(x)} V |x-y|^(2s-n) dy` diverges, i.e. `beta >= 2s`.
pub fn z_membership_analytic(v: &Potential, k: &GreenKernel) -> ZReport {
    let two_s = 2.0 * k.order();
    let evidence: Vec<ZEvidence> = v
        .singularities
        .iter()
        .map(|s| ZEvidence {
            point: s.point,
            beta: s.beta,
            analytic_verdict: s.beta >= two_s,
            borderline: (s.beta - two_s).abs() <= 1e-12,
            integral_ladder: vec![],
            ladder_verdict: None,
            maxprinciple_value: None,
        })
        .collect();
    let z_points = evidence.iter().filter(|e| e.analytic_verdict).map(|e| e.point).collect();
    ZReport { z_points, evidence }
}

/// Decay rate per dyadic step below which increments count as non-decaying.
pub const LADDER_DECAY_THRESHOLD: f64 = 0.25;

#[derive(Clone, Debug, Serialize)]
pub struct IntegralLadder {
    /// `ρ` values, descending.
    pub rho: Vec<f64>,
    /// `I(ρ) = int_{B_ρ(x) \ B_ρmin(x)} V |x-y|^(2s-n)`.
    pub integrals: Vec<f64>,
    /// Dyadic annulus contributions, outermost first.
    pub increments: Vec<f64>,
    /// Fitted decay exponent of the increments per halving of `ρ`.
    pub decay_rate: Option<f64>,
    /// `Some(true)` when the increments fail to decay geometrically.
    pub divergent: Option<bool>,
    pub under_resolved: bool,
}

/// Numerical counterpart of the integrability test over a descending ladder.
pub fn z_integral_ladder(
    v: &Potential,
    k: &GreenKernel,
    g: &QuadGrid,
    x: &[f64; 3],
    rho_ladder: &[f64],
) -> Result<IntegralLadder> {
    if !v.singularities.iter().any(|s| dist(&s.point, x) <= POINT_TOL) {
        return Err(Error::Parameter(format!("{x:?} is not a singular point of V")));
    }
    let vals = v.node_values(g)?;
    let expo = 2.0 * k.order() - g.dim() as f64;
    let floor = g.min_probe_radius();
    let mut rho: Vec<f64> = rho_ladder.iter().cloned().filter(|&r| r >= floor).collect();
    rho.sort_by(|a, b| b.total_cmp(a));
    let under = rho.len() < rho_ladder.len();
    let rmin = rho.last().cloned().unwrap_or(floor);
    let annulus = |lo: f64, hi: f64| -> f64 {
        (0..g.len())
            .filter_map(|i| {
                let d = dist(&g.nodes[i], x);
                (d > lo * (1.0 + 1e-12) && d <= hi * (1.0 + 1e-12)).then(|| g.weights[i] * vals[i] * d.powf(expo))
            })
            .sum()
    };
    let integrals: Vec<f64> = rho.iter().map(|&r| annulus(rmin, r)).collect();
    let increments: Vec<f64> = rho.windows(2).map(|w| annulus(w[1], w[0])).collect();
    let usable: Vec<(f64, f64)> = rho
        .windows(2)
        .zip(&increments)
        .filter(|(_, &inc)| inc > 0.0)
        .map(|(w, &inc)| (w[0].ln(), inc.ln()))
        .collect();
    let (decay_rate, divergent, under_resolved) = if usable.len() < 3 {
        (None, None, true)
    } else {
        // least-squares slope of ln(increment) against ln(rho)
        let tail = &usable[usable.len() / 2..];
        let tail = if tail.len() < 3 { &usable[usable.len() - 3..] } else { tail };
        let m = tail.len() as f64;
        let mx = tail.iter().map(|p| p.0).sum::<f64>() / m;
        let my = tail.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (Some(slope), Some(slope < LADDER_DECAY_THRESHOLD), under)
    };
    Ok(IntegralLadder { rho, integrals, increments, decay_rate, divergent, under_resolved })
}

/// `mu_r = mu - sum_{x in Z} mu({x}) delta_x`.
pub fn reduce(mu: &RadonMeasure, z: &ZReport) -> RadonMeasure {
    RadonMeasure {
        density: mu.density.clone(),
        atoms: mu.atoms.iter().filter(|a| !z.contains(&a.point)).cloned().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid() -> QuadGrid {
        QuadGrid::build(GridSpec { dim: 3, radial_count: 24, angular_count: 12 }).unwrap()
    }

    #[test]
    fn truncation_examples() {
        let g = grid();
        let v = Potential::constant(g.len(), 5.0).unwrap().node_values(&g).unwrap();
        assert_eq!(truncate(&v, 10.0), v);
        let v = Potential::power(g.len(), [0.0; 3], 1.0, 1.0).unwrap().node_values(&g).unwrap();
        let t = truncate(&v, 2.0);
        for i in 1..g.len() {
            let r = norm(&g.nodes[i]);
            let expect = if r < 0.5 { 2.0 } else { 1.0 / r };
            assert!((t[i] - expect).abs() < 1e-12);
        }
        assert_eq!(t[0], 2.0);
    }

    #[test]
    fn analytic_verdicts() {
        let k = GreenKernel::rfl(3, 0.5).unwrap();
        let v = |b| Potential::power(4, [0.0; 3], b, 1.0).unwrap();
        assert!(z_membership_analytic(&v(0.5), &k).z_points.is_empty());
        assert_eq!(z_membership_analytic(&v(1.5), &k).z_points.len(), 1);
        let border = z_membership_analytic(&v(1.0), &k);
        assert!(border.evidence[0].borderline && border.evidence[0].analytic_verdict);
        assert!(z_membership_analytic(&Potential::constant(4, 3.0).unwrap(), &k).z_points.is_empty());
    }

    #[test]
    fn ladder_increments_follow_the_model_rate() {
        let g = QuadGrid::build(GridSpec::default()).unwrap();
        let k = GreenKernel::rfl(3, 0.5).unwrap();
        let v = Potential::power(g.len(), [0.0; 3], 0.5, 1.0).unwrap();
        let lad = z_integral_ladder(&v, &k, &g, &[0.0; 3], &g.dyadic_ladder()).unwrap();
        assert!((lad.decay_rate.unwrap() - 0.5).abs() < 0.05, "{:?}", lad.decay_rate);
        assert_eq!(lad.divergent, Some(false));
        let v = Potential::power(g.len(), [0.0; 3], 1.0, 1.0).unwrap();
        let lad = z_integral_ladder(&v, &k, &g, &[0.0; 3], &g.dyadic_ladder()).unwrap();
        assert!(lad.decay_rate.unwrap().abs() < 0.05);
        assert_eq!(lad.divergent, Some(true));
    }

    #[test]
    fn reduce_removes_z_atoms_only() {
        let p0 = [0.0; 3];
        let p1 = [0.3, 0.0, 0.0];
        let mu = RadonMeasure::new(vec![1.0; 3], vec![Atom { point: p0, mass: 2.0 }, Atom { point: p1, mass: 3.0 }]).unwrap();
        let z = ZReport { z_points: vec![p0], evidence: vec![] };
        let r = reduce(&mu, &z);
        assert_eq!(r.atoms, vec![Atom { point: p1, mass: 3.0 }]);
        assert_eq!(r.density, mu.density);
        assert_eq!(reduce(&r, &z), r);
        assert_eq!(reduce(&mu, &ZReport::empty()), mu);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(RadonMeasure::point_mass(2, [1.0, 0.0, 0.0], 1.0).is_err());
        assert!(Potential::power(2, [0.0; 3], -1.0, 1.0).is_err());
        let dup = vec![Atom { point: [0.0; 3], mass: 1.0 }, Atom { point: [0.0; 3], mass: 2.0 }];
        assert!(RadonMeasure::new(vec![0.0; 2], dup).is_err());
    }
}
