//! Fixed-node Gauss-Legendre rules and the graded periodic rule used for the
//! angular turbulence kernel.

use std::f64::consts::PI;

/// A set of nodes and weights over some interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Rule {
    let base = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Rule {
        nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
        weights: base.weights.iter().map(|w| half * w).collect(),
    }
}

/// Composite Gauss-Legendre rule over consecutive panels given by `edges`.
pub fn composite(edges: &[f64], order: usize) -> Rule {
    let mut nodes = Vec::with_capacity((edges.len() - 1) * order);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for pair in edges.windows(2) {
        let panel = gauss_legendre_on(order, pair[0], pair[1]);
        nodes.extend(panel.nodes);
        weights.extend(panel.weights);
    }
    Rule { nodes, weights }
}

/// Rule on `[0, π]` for even periodic integrands with a power-law cusp at 0:
/// uniform panels on `[π/4, π]` plus panels halving in width towards the cusp.
pub fn graded_half_period(uniform_panels: usize, graded_panels: usize, order: usize) -> Rule {
    let mut edges = Vec::with_capacity(uniform_panels + graded_panels + 2);
    edges.push(0.0);
    let quarter = PI / 4.0;
    for k in (1..=graded_panels).rev() {
        edges.push(quarter * 0.5f64.powi(k as i32));
    }
    for k in 0..=uniform_panels {
        edges.push(quarter + (PI - quarter) * k as f64 / uniform_panels as f64);
    }
    composite(&edges, order)
}
