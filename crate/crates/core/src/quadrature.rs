//! Gauss-Legendre rules, composite panel rules and a globally adaptive
//! 2-D cubature on rectangles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be at least 1");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
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
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Nodes and weights mapped onto `[a, b]` split into `panels` equal panels.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let width = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.order());
        for p in 0..panels {
            let lo = a + width * p as f64;
            let mid = lo + 0.5 * width;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((mid + 0.5 * width * x, 0.5 * width * w));
            }
        }
        out
    }
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
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn centered(cx: f64, cy: f64, half: f64) -> Self {
        Self { x0: cx - half, x1: cx + half, y0: cy - half, y1: cy + half }
    }

    fn quarters(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect { x0: self.x0, x1: xm, y0: self.y0, y1: ym },
            Rect { x0: xm, x1: self.x1, y0: self.y0, y1: ym },
            Rect { x0: self.x0, x1: xm, y0: ym, y1: self.y1 },
            Rect { x0: xm, x1: self.x1, y0: ym, y1: self.y1 },
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self { abs_tol: 0.0, rel_tol: 1e-8, max_evals: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

struct Region {
    rect: Rect,
    value: f64,
    error: f64,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Region {}
impl PartialOrd for Region {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Region {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn tensor_rule<F: Fn(f64, f64) -> f64>(rule: &GaussLegendre, r: &Rect, f: &F) -> f64 {
    let hx = 0.5 * (r.x1 - r.x0);
    let hy = 0.5 * (r.y1 - r.y0);
    let mx = 0.5 * (r.x0 + r.x1);
    let my = 0.5 * (r.y0 + r.y1);
    let mut acc = 0.0;
    for (xi, wi) in rule.nodes.iter().zip(&rule.weights) {
        let x = mx + hx * xi;
        let mut row = 0.0;
        for (yj, wj) in rule.nodes.iter().zip(&rule.weights) {
            row += wj * f(x, my + hy * yj);
        }
        acc += wi * row;
    }
    acc * hx * hy
}

/// Globally adaptive tensor Gauss-Legendre cubature.
///
/// Each region is estimated once as a whole and once as the sum of its four
/// quarters; the difference is the error estimate. The region with the
/// largest error is split until the summed error meets the tolerance.
pub fn adaptive_2d<F: Fn(f64, f64) -> f64>(f: F, domain: Rect, opts: AdaptiveOptions) -> QuadResult {
    let rule = GaussLegendre::new(7);
    let per_rule = rule.order() * rule.order();
    let mut evals = 0;

    let estimate = |r: Rect, coarse: f64, evals: &mut usize| -> Region {
        let fine: f64 = r.quarters().iter().map(|q| tensor_rule(&rule, q, &f)).sum();
        *evals += 4 * per_rule;
        Region { rect: r, value: fine, error: (fine - coarse).abs() }
    };

    let coarse = tensor_rule(&rule, &domain, &f);
    evals += per_rule;
    let root = estimate(domain, coarse, &mut evals);
    let mut heap = BinaryHeap::new();
    let mut total = root.value;
    let mut err = root.error;
    heap.push(root);

    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= tol {
            break;
        }
        if evals >= opts.max_evals {
            return QuadResult { value: total, error: err, evals, converged: false };
        }
        let worst = heap.pop().expect("heap is never empty");
        total -= worst.value;
        err -= worst.error;
        for q in worst.rect.quarters() {
            let coarse = tensor_rule(&rule, &q, &f);
            evals += per_rule;
            let child = estimate(q, coarse, &mut evals);
            total += child.value;
            err += child.error;
            heap.push(child);
        }
    }

    // Re-sum in a fixed order so the result does not carry heap-update rounding.
    let mut regions: Vec<Region> = heap.into_vec();
    regions.sort_by(|a, b| {
        (a.rect.x0, a.rect.y0)
            .partial_cmp(&(b.rect.x0, b.rect.y0))
            .unwrap_or(Ordering::Equal)
    });
    let value = regions.iter().map(|r| r.value).sum();
    let error = regions.iter().map(|r| r.error).sum();
    QuadResult { value, error, evals, converged: true }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in 1..=20 {
            let rule = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let got = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg} got={got}");
            }
        }
    }

    #[test]
    fn nodes_symmetric_and_weights_sum_to_two() {
        let rule = GaussLegendre::new(16);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        for i in 0..16 {
            assert_eq!(rule.nodes[i], -rule.nodes[15 - i]);
        }
    }

    #[test]
    fn composite_integrates_oscillatory() {
        let rule = GaussLegendre::new(8);
        let pts = rule.composite(0.0, 10.0, 10);
        let got: f64 = pts.iter().map(|(x, w)| w * (3.0 * x).cos()).sum();
        assert!((got - (30.0f64).sin() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_gaussian_peak() {
        let f = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * 0.01)).exp();
        let res = adaptive_2d(f, Rect::centered(0.3, -0.2, 2.0), AdaptiveOptions::default());
        let exact = 2.0 * PI * 0.01;
        assert!(res.converged);
        assert!((res.value - exact).abs() / exact < 1e-8, "{}", res.value);
    }

    #[test]
    fn adaptive_reports_budget_exhaustion() {
        let f = |x: f64, y: f64| (1.0 / (x * x + y * y + 1e-12)).sqrt();
        let res = adaptive_2d(
            f,
            Rect::centered(0.0, 0.0, 1.0),
            AdaptiveOptions { abs_tol: 0.0, rel_tol: 1e-15, max_evals: 5000 },
        );
        assert!(!res.converged);
    }
}
