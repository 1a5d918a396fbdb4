#![allow(dead_code)]

use greensolve::{GreenKernel, GreenMatrix, GridSpec, QuadGrid};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub type Setup = (Arc<GreenKernel>, Arc<QuadGrid>, Arc<GreenMatrix>);

/// Kernel, grid and assembled matrix, built once per test binary.
pub fn setup(s: f64, radial: usize, angular: usize) -> Setup {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize, usize), Setup>>> = OnceLock::new();
    let key = (s.to_bits(), radial, angular);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().unwrap().get(&key) {
        return v.clone();
    }
    let k = if s == 1.0 { GreenKernel::classical(3).unwrap() } else { GreenKernel::rfl(3, s).unwrap() };
    let g = QuadGrid::build(GridSpec { dim: 3, radial_count: radial, angular_count: angular }).unwrap();
    let m = GreenMatrix::assemble(&k, &g).unwrap();
    let v: Setup = (Arc::new(k), Arc::new(g), Arc::new(m));
    cache.lock().unwrap().insert(key, v.clone());
    v
}

pub fn default_setup(s: f64) -> Setup {
    let d = GridSpec::default();
    setup(s, d.radial_count, d.angular_count)
}

pub fn small_setup(s: f64) -> Setup {
    setup(s, 12, 12)
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `sum w a b`.
pub fn inner(g: &QuadGrid, a: &[f64], b: &[f64]) -> f64 {
    g.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Uniform random point in the ball of radius `r`.
pub fn point_in_ball(rng: &mut impl rand::Rng, r: f64) -> [f64; 3] {
    loop {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if norm(&p) < 1.0 {
            return [r * p[0], r * p[1], r * p[2]];
        }
    }
}
