//! Explicit Green kernels of the unit ball.
//!
//! Both kernels are written in terms of the squared distance `d2 = |x-y|^2` and
//! the product `p = (1-|x|^2)(1-|y|^2)`, which avoids cancellation near the
//! diagonal and near the boundary:
//!
//! * classical (s = 1): `c_n d^(2-n) (1 - (1 + p/d2)^((2-n)/2))`,
//! * restricted fractional (0 < s < 1): `kappa d^(2s-n) I(p/d2)` with
//!   `I(r) = int_0^r t^(s-1) (1+t)^(-n/2) dt`.
//!
//! At s = 1 the second formula reduces to the first.

use crate::error::{Error, Result};
use crate::quadrature::{gauss_power_unit, Rule};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Classical,
    Rfl,
}

impl Variant {
    pub fn code(self) -> u8 {
        match self {
            Variant::Classical => 1,
            Variant::Rfl => 2,
        }
    }
}

/// Green kernel of the unit ball in dimension `dim` for the operator of order `2s`.
#[derive(Clone, Debug)]
pub struct GreenKernel {
    dim: usize,
    s: f64,
    gamma: f64,
    variant: Variant,
    kappa: f64,
    lead: f64,
    beta_full: f64,
    rules: Option<Arc<JacobiPair>>,
    table: Option<Arc<IncompleteTable>>,
}

impl GreenKernel {
    pub fn classical(dim: usize) -> Result<Self> {
        Self::new(Variant::Classical, dim, 1.0)
    }

    pub fn rfl(dim: usize, s: f64) -> Result<Self> {
        Self::new(Variant::Rfl, dim, s)
    }

    pub fn new(variant: Variant, dim: usize, s: f64) -> Result<Self> {
        if !s.is_finite() || s <= 0.0 || s > 1.0 {
            return Err(Error::Parameter(format!("order s = {s} must lie in (0, 1]")));
        }
        if (dim as f64) - 2.0 * s <= 0.0 {
            return Err(Error::Unsupported(format!(
                "n - 2s = {} must be positive",
                dim as f64 - 2.0 * s
            )));
        }
        let n = dim as f64;
        match variant {
            Variant::Classical => {
                if s != 1.0 {
                    return Err(Error::Parameter("classical kernel requires s = 1".into()));
                }
                let c = gamma(n / 2.0) / (2.0 * (n - 2.0) * PI.powf(n / 2.0));
                Ok(Self {
                    dim,
                    s,
                    gamma: 1.0,
                    variant,
                    kappa: c * (n - 2.0) / 2.0,
                    lead: c,
                    beta_full: 2.0 / (n - 2.0),
                    rules: None,
                    table: None,
                })
            }
            Variant::Rfl => {
                if s >= 1.0 {
                    return Err(Error::Parameter("RFL kernel requires 0 < s < 1".into()));
                }
                let kappa = (ln_gamma(n / 2.0)
                    - 2.0 * s * std::f64::consts::LN_2
                    - (n / 2.0) * PI.ln()
                    - 2.0 * ln_gamma(s))
                .exp();
                let beta_full = (ln_gamma(s) + ln_gamma(n / 2.0 - s) - ln_gamma(n / 2.0)).exp();
                let mut k = Self {
                    dim,
                    s,
                    gamma: s,
                    variant,
                    kappa,
                    lead: kappa * beta_full,
                    beta_full,
                    rules: Some(Arc::new(jacobi_rules(s, n))),
                    table: None,
                };
                k.table = Some(Arc::new(IncompleteTable::build(&k)));
                Ok(k)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn order(&self) -> f64 {
        self.s
    }
    pub fn boundary_gamma(&self) -> f64 {
        self.gamma
    }
    pub fn variant(&self) -> Variant {
        self.variant
    }
    /// Constant in front of the incomplete integral.
    pub fn normalization(&self) -> f64 {
        self.kappa
    }
    /// Coefficient of the leading singularity `|x-y|^(2s-n)`.
    pub fn lead(&self) -> f64 {
        self.lead
    }
    /// `B(s, n/2 - s)`, the limit of the incomplete integral as r grows.
    pub fn beta_full(&self) -> f64 {
        self.beta_full
    }

    /// `G(x, y)` with domain and diagonal checks.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (d2, p) = self.pair_terms(x, y)?;
        Ok(self.eval_terms(d2, p))
    }

    /// Ratio of `G(x, y)` to the two-sided model `|x-y|^(2s-n) (dx dy / |x-y|^2 ∧ 1)^gamma`.
    pub fn estimate_ratio(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (d2, _) = self.pair_terms(x, y)?;
        let dx = 1.0 - norm(x);
        let dy = 1.0 - norm(y);
        let model = d2.powf(self.s - self.dim as f64 / 2.0) * (dx * dy / d2).min(1.0).powf(self.gamma);
        Ok(self.eval(x, y)? / model)
    }

    fn pair_terms(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::Parameter("point dimension does not match kernel".into()));
        }
        let nx = norm2(x);
        let ny = norm2(y);
        if nx >= 1.0 || ny >= 1.0 {
            return Err(Error::Domain(format!("|x|^2 = {nx}, |y|^2 = {ny}")));
        }
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 == 0.0 {
            return Err(Error::Singularity);
        }
        Ok((d2, (1.0 - nx) * (1.0 - ny)))
    }

    /// Kernel from `d2 = |x-y|^2 > 0` and `p = (1-|x|^2)(1-|y|^2) >= 0`.
    #[inline]
    pub fn eval_terms(&self, d2: f64, p: f64) -> f64 {
        let n = self.dim as f64;
        let r = p / d2;
        match self.variant {
            Variant::Classical => {
                let h = -(-(n - 2.0) / 2.0 * r.ln_1p()).exp_m1();
                self.lead * d2.powf(1.0 - n / 2.0) * h
            }
            Variant::Rfl => self.kappa * d2.powf(self.s - n / 2.0) * self.incomplete(r),
        }
    }

    /// Kernel between points at radii `r1`, `r2` separated by angle `theta`.
    #[inline]
    pub fn eval_zonal(&self, r1: f64, r2: f64, sin_half_sq: f64) -> f64 {
        let d2 = (r1 - r2) * (r1 - r2) + 4.0 * r1 * r2 * sin_half_sq;
        self.eval_terms(d2, (1.0 - r1 * r1) * (1.0 - r2 * r2))
    }

    /// `I(r) = int_0^r t^(s-1)(1+t)^(-n/2) dt`, tabulated fast path.
    #[inline]
    pub fn incomplete(&self, r: f64) -> f64 {
        match &self.table {
            Some(t) => t.eval(self, r),
            None => self.incomplete_direct(r),
        }
    }

    /// `I(r)` by 64-point Gauss–Jacobi quadrature after `t = r u` (or on the tail for r > 1).
    pub fn incomplete_direct(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let n = self.dim as f64;
        let s = self.s;
        if s == 1.0 {
            return 2.0 / (n - 2.0) * -(-(n - 2.0) / 2.0 * r.ln_1p()).exp_m1();
        }
        let rules = self.rules.as_ref().expect("RFL kernel carries its rules");
        if r <= 1.0 {
            r.powf(s) * rules.head.integrate(|u| (1.0 + r * u).powf(-n / 2.0))
        } else {
            let tail = r.powf(s) * rules.tail.integrate(|v| (v + r).powf(-n / 2.0));
            self.beta_full - tail
        }
    }

    /// Exact `G(1)(x)` as a function of `|x|`.
    pub fn torsion(&self, radius: f64) -> f64 {
        let n = self.dim as f64;
        let s = self.s;
        let c = (ln_gamma(n / 2.0)
            - 2.0 * s * std::f64::consts::LN_2
            - ln_gamma(1.0 + s)
            - ln_gamma(n / 2.0 + s))
        .exp();
        c * (1.0 - radius * radius).max(0.0).powf(s)
    }

    /// `G(x, 0)` as a function of `|x|`.
    pub fn column_at_origin(&self, radius: f64) -> f64 {
        self.eval_terms(radius * radius, 1.0 - radius * radius)
    }
}

#[derive(Debug)]
struct JacobiPair {
    head: Rule,
    tail: Rule,
}

fn jacobi_rules(s: f64, n: f64) -> JacobiPair {
    JacobiPair {
        head: gauss_power_unit(64, s),
        tail: gauss_power_unit(64, n / 2.0 - s),
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    norm2(x).sqrt()
}

const TABLE_LO: f64 = -36.0;
const TABLE_HI: f64 = 36.0;
const TABLE_DEG: usize = 14;

/// Piecewise Chebyshev table of `ln I(e^l)` on unit panels in `l`.
#[derive(Debug)]
struct IncompleteTable {
    coeffs: Vec<[f64; TABLE_DEG + 1]>,
}

impl IncompleteTable {
    fn build(k: &GreenKernel) -> Self {
        let direct = |r: f64| k.incomplete_direct(r);
        let panels = (TABLE_HI - TABLE_LO) as usize;
        let m = TABLE_DEG + 1;
        let cheb: Vec<f64> = (0..m)
            .map(|j| (PI * (j as f64 + 0.5) / m as f64).cos())
            .collect();
        let coeffs = (0..panels)
            .map(|p| {
                let a = TABLE_LO + p as f64;
                let vals: Vec<f64> = cheb.iter().map(|&x| direct((a + 0.5 + 0.5 * x).exp()).ln()).collect();
                let mut c = [0.0; TABLE_DEG + 1];
                for (i, ci) in c.iter_mut().enumerate() {
                    let sum: f64 = (0..m)
                        .map(|j| vals[j] * (PI * i as f64 * (j as f64 + 0.5) / m as f64).cos())
                        .sum();
                    *ci = sum * 2.0 / m as f64;
                }
                c[0] *= 0.5;
                c
            })
            .collect();
        Self { coeffs }
    }

    #[inline]
    fn eval(&self, k: &GreenKernel, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let l = r.ln();
        let n = k.dim as f64;
        let s = k.s;
        if l < TABLE_LO {
            return r.powf(s) / s * (1.0 - (n / 2.0) * s / (s + 1.0) * r);
        }
        if l >= TABLE_HI {
            return k.beta_full - r.powf(s - n / 2.0) / (n / 2.0 - s);
        }
        let p = ((l - TABLE_LO) as usize).min(self.coeffs.len() - 1);
        let x = 2.0 * (l - TABLE_LO - p as f64) - 1.0;
        let c = &self.coeffs[p];
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ci in c.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + ci;
            b2 = b1;
            b1 = b0;
        }
        (x * b1 - b2 + c[0]).exp()
    }
}
