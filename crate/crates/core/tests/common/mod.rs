//! Brute-force oracle shared by integration tests.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use oamturb::modes::PhasePlate;
use oamturb::turbulence::TurbulenceModel;

/// Gauss-Legendre nodes and weights on `[a, b]` (Golub-Welsch free: Newton).
fn gauss(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w));
    }
    out
}

/// `ρ̄_{m,m'}` for the quadrant plate at orientation `alpha`, by direct
/// quadrature of `∫∫ u*_m(x₁) A(x₁) A*(x₂) u_{m'}(x₂) C(|x₁ − x₂|)` with
/// `A(r, θ) = g(r) t(θ + α)/√2π`. Returns rows `m ∈ [-w, w]`.
pub fn brute_force_operator(
    ratio: f64,
    alpha: f64,
    w: i64,
    radial: usize,
    per_sector: usize,
) -> Vec<Vec<Complex64>> {
    let plate = PhasePlate::quadrant();
    let model = TurbulenceModel::new(ratio).unwrap();
    let rs = gauss(radial, 0.0, 3.5);
    let mut thetas = Vec::new();
    for k in 0..4 {
        let a = k as f64 * FRAC_PI_2 - alpha;
        thetas.extend(gauss(per_sector, a, a + FRAC_PI_2));
    }
    // node list: (x, y, weight·A(x))
    let mut nodes = Vec::new();
    for &(r, wr) in &rs {
        let g = 2.0 * (-r * r).exp();
        for &(t, wt) in &thetas {
            let a = plate.transmission(t + alpha) * (g / TAU.sqrt());
            nodes.push((r * t.cos(), r * t.sin(), r, t, a * (wr * wt * r)));
        }
    }
    let ms: Vec<i64> = (-w..=w).collect();
    // p_m(x) = u*_m(x) A(x) dA
    let basis = |m: i64, r: f64, t: f64| {
        Complex64::from_polar(2.0 * (-r * r).exp() / TAU.sqrt(), m as f64 * t)
    };
    let p: Vec<Vec<Complex64>> = ms
        .iter()
        .map(|&m| {
            nodes
                .iter()
                .map(|&(_, _, r, t, a)| basis(m, r, t).conj() * a)
                .collect()
        })
        .collect();
    let count = nodes.len();
    // q_{m'}(x₁) = Σ_x₂ C(x₁, x₂) A*(x₂) u_{m'}(x₂) dA
    let mut q = vec![vec![Complex64::new(0.0, 0.0); count]; ms.len()];
    let rhs: Vec<Vec<Complex64>> = ms
        .iter()
        .map(|&m| {
            nodes
                .iter()
                .map(|&(_, _, r, t, a)| a.conj() * basis(m, r, t))
                .collect()
        })
        .collect();
    for i in 0..count {
        let (x1, y1) = (nodes[i].0, nodes[i].1);
        for j in 0..count {
            let c = model.coherence((x1 - nodes[j].0).hypot(y1 - nodes[j].1));
            for k in 0..ms.len() {
                q[k][i] += rhs[k][j] * c;
            }
        }
    }
    p.iter()
        .map(|pm| {
            q.iter()
                .map(|qm| pm.iter().zip(qm).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}
