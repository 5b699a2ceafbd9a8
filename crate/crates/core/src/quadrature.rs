//! Small quadrature toolkit: Gauss-Legendre rules and geometrically graded
//! panels for integrands with algebraic behaviour at the origin.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Calls `f(x, w)` for the rule mapped onto [a, b].
    #[inline]
    pub fn for_each_on(&self, a: f64, b: f64, mut f: impl FnMut(f64, f64)) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            f(mid + half * x, half * w);
        }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_on(a, b, |x, w| acc += w * f(x));
        acc
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 8-point rule used by the graded radial integrals.
pub fn gl8() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(8))
}

/// Shared 16-point rule used for angular arcs.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Number of dyadic panels `[2^{-k-1}, 2^{-k}]` used on (0, 1].
pub const DYADIC_PANELS: usize = 61;

/// `∫_0^1 f(t) dt / t` on dyadic panels `t ∈ [2^{-k-1}, 2^{-k}]`,
/// k = 0..60, Gauss-Legendre in `log t` on each panel.
pub fn dyadic_log_integral(mut f: impl FnMut(f64) -> f64) -> f64 {
    let rule = gl8();
    let ln2 = std::f64::consts::LN_2;
    let mut acc = 0.0;
    for k in 0..DYADIC_PANELS {
        let hi = -(k as f64) * ln2;
        let lo = hi - ln2;
        let mut panel = 0.0;
        rule.for_each_on(lo, hi, |l, w| panel += w * f(l.exp()));
        acc += panel;
    }
    acc
}

/// Panels of width `ln 2` in `ln t`, descending from `hi` to `lo`, for
/// integrals against `dt/t`. With `lo = 0` the first `max_panels` panels
/// are used. Calls `f(t, weight)`.
pub fn log_panels(hi: f64, lo: f64, max_panels: usize, mut f: impl FnMut(f64, f64)) {
    let rule = gl8();
    let ln2 = std::f64::consts::LN_2;
    let top = hi.ln();
    let (count, bottom) = if lo > 0.0 {
        if lo >= hi {
            return;
        }
        let span = top - lo.ln();
        ((span / ln2).ceil() as usize, lo.ln())
    } else {
        (max_panels, f64::NEG_INFINITY)
    };
    for k in 0..count {
        let b = top - k as f64 * ln2;
        let a = (b - ln2).max(bottom);
        rule.for_each_on(a, b, |l, w| f(l.exp(), w));
    }
}

/// Gauss-Legendre over a list of arcs given by sorted breakpoints that
/// cover `[start, start + 2π)`. Calls `f(theta, weight)`.
pub fn angular_arcs(breaks: &[f64], mut f: impl FnMut(f64, f64)) {
    let rule = gl16();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            rule.for_each_on(w[0], w[1], &mut f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        let wsum: f64 = rule.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
        // degree 15 is exact for 8 nodes
        let v = rule.integrate(0.0, 1.0, |x| x.powi(15));
        assert!((v - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn log_panels_clip_to_bounds() {
        let mut v = 0.0;
        log_panels(2.0, 0.3, 0, |t, w| v += w * t * t);
        assert!((v - (4.0 - 0.09) / 2.0).abs() < 1e-13);
        let mut open = 0.0;
        log_panels(1.0, 0.0, 61, |t, w| open += w * t);
        assert!((open - 1.0).abs() < 1e-13);
    }

    #[test]
    fn dyadic_integral_of_power() {
        // ∫_0^1 t^{p}/t dt = 1/p
        for p in [1.1, 2.0, 3.5] {
            let v = dyadic_log_integral(|t| t.powf(p));
            assert!((v - 1.0 / p).abs() < 1e-13, "p={p} v={v}");
        }
    }
}
