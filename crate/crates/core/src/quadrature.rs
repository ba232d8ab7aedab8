//! Composite Gauss–Legendre quadrature.
//!
//! Only used as an independent numerical oracle for closed-form spectral
//! quantities, so the engine is simple: geometric panels (so that smooth
//! features at every frequency scale get resolution), each further split to a
//! maximum width (so oscillations are resolved), and on each panel an
//! `n`-point rule compared against an `n/2`-point rule for the error estimate.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `integral_a^b f`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A quadrature value with its panel-level error estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PanelIntegral {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

impl std::ops::Add for PanelIntegral {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            value: self.value + rhs.value,
            error_estimate: self.error_estimate + rhs.error_estimate,
            panels: self.panels + rhs.panels,
        }
    }
}

/// Pair of rules: the working rule and the coarser comparison rule.
#[derive(Clone, Debug)]
pub struct PanelRule {
    fine: GaussLegendre,
    coarse: GaussLegendre,
}

impl PanelRule {
    pub fn new(nodes: usize) -> Self {
        let nodes = nodes.max(2);
        Self {
            fine: GaussLegendre::new(nodes),
            coarse: GaussLegendre::new((nodes / 2).max(1)),
        }
    }

    pub fn fine(&self) -> &GaussLegendre {
        &self.fine
    }

    pub fn coarse(&self) -> &GaussLegendre {
        &self.coarse
    }

    fn panel<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> PanelIntegral {
        let fine = self.fine.integrate(f, a, b);
        let coarse = self.coarse.integrate(f, a, b);
        PanelIntegral {
            value: fine,
            error_estimate: (fine - coarse).abs(),
            panels: 1,
        }
    }

    /// Uniform panels of width at most `max_width` on `[a, b]`.
    pub fn integrate_uniform<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        max_width: f64,
    ) -> PanelIntegral {
        if b <= a {
            return PanelIntegral::default();
        }
        let pieces = subdivisions(a, b, max_width);
        let h = (b - a) / pieces as f64;
        (0..pieces)
            .map(|k| {
                let lo = a + k as f64 * h;
                let hi = if k + 1 == pieces { b } else { lo + h };
                self.panel(f, lo, hi)
            })
            .fold(PanelIntegral::default(), |acc, p| acc + p)
    }

    /// Geometric panels, `per_decade` per factor of ten on `[a, b]` with
    /// `a > 0`, each split further to width at most `max_width`.
    pub fn integrate_geometric<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        per_decade: usize,
        max_width: f64,
    ) -> PanelIntegral {
        geometric_layout(a, b, per_decade, max_width)
            .into_iter()
            .map(|(lo, hi, _)| self.integrate_uniform(f, lo, hi, max_width))
            .fold(PanelIntegral::default(), |acc, p| acc + p)
    }
}

/// Number of equal sub-panels of width at most `max_width` on `[a, b]`.
pub fn subdivisions(a: f64, b: f64, max_width: f64) -> usize {
    if max_width.is_finite() && max_width > 0.0 {
        ((b - a) / max_width).ceil().max(1.0) as usize
    } else {
        1
    }
}

/// `(lo, hi, subdivisions)` of the geometric panels used by
/// [`PanelRule::integrate_geometric`].
pub fn geometric_layout(
    a: f64,
    b: f64,
    per_decade: usize,
    max_width: f64,
) -> Vec<(f64, f64, usize)> {
    assert!(a > 0.0, "geometric panels need a positive start");
    let ratio = 10f64.powf(1.0 / per_decade.max(1) as f64);
    let mut out = Vec::new();
    let mut lo = a;
    while lo < b {
        let hi = (lo * ratio).min(b);
        out.push((lo, hi, subdivisions(lo, hi, max_width)));
        lo = hi;
    }
    out
}
