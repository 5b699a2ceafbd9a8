//! Orlicz functions, their conjugates and Lieberman indices, and the
//! spherical limit `G̃` that appears as the `s → 1` energy density.
//!
//! Built-in families are finite sums of power terms `c·t^p` with `p > 1`,
//! so `G`, its density `g = G'` and the log-integral
//! `Φ(x) = ∫_0^x G(τ) dτ/τ` are all available in closed form.
//! The spherical limit of a built-in family is tabulated on a log grid
//! with a cubic Hermite interpolant of `ln G̃` against `ln a`, whose
//! derivative gives `g̃` consistently.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{dyadic_log_integral, gl16, gl8};

/// One term `coef · t^exp` of a power-sum Orlicz function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    pub coef: f64,
    pub exp: f64,
}

#[inline]
pub(crate) fn pow_fast(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t * t
    } else if p == 3.0 {
        t * t * t
    } else if p == 4.0 {
        let t2 = t * t;
        t2 * t2
    } else if p.fract() == 0.0 && p.abs() < 64.0 {
        t.powi(p as i32)
    } else {
        t.powf(p)
    }
}

#[derive(Debug, Clone)]
enum Repr {
    PowerSum(Vec<PowerTerm>),
    Tabulated(Arc<LogTable>),
}

/// Evaluator bundle for an Orlicz function `G` with density `g`.
///
/// Values are immutable once built, so the type is freely shared between
/// worker threads.
#[derive(Debug, Clone)]
pub struct OrliczFunction {
    name: String,
    repr: Repr,
    p_minus: f64,
    p_plus: f64,
    delta2_c: f64,
}

impl fmt::Display for OrliczFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl OrliczFunction {
    /// `G(t) = Σ coef·t^exp`. Every term needs `coef > 0` and `1 < exp < ∞`.
    pub fn power_sum(name: impl Into<String>, terms: Vec<PowerTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Input("power sum needs at least one term".into()));
        }
        for t in &terms {
            if !(t.coef.is_finite() && t.coef > 0.0) {
                return Err(Error::Input(format!("coefficient {} must be positive", t.coef)));
            }
            if !t.exp.is_finite() {
                return Err(Error::Input(format!("exponent {} must be finite", t.exp)));
            }
            if t.exp <= 1.0 {
                return Err(Error::Integrability(format!(
                    "exponent {} violates p_minus > 1",
                    t.exp
                )));
            }
        }
        let p_minus = terms.iter().map(|t| t.exp).fold(f64::INFINITY, f64::min);
        let p_plus = terms.iter().map(|t| t.exp).fold(0.0, f64::max);
        Ok(Self {
            name: name.into(),
            repr: Repr::PowerSum(terms),
            p_minus,
            p_plus,
            delta2_c: 2f64.powf(p_plus),
        })
    }

    /// `G(t) = t^p / p`.
    pub fn power(p: f64) -> Result<Self> {
        Self::power_sum(format!("power:{p}"), vec![PowerTerm { coef: 1.0 / p, exp: p }])
    }

    /// `G(t) = t^p`.
    pub fn pure_power(p: f64) -> Result<Self> {
        Self::power_sum(format!("powerp:{p}"), vec![PowerTerm { coef: 1.0, exp: p }])
    }

    /// `G(t) = t^p / 2`.
    pub fn half_power(p: f64) -> Result<Self> {
        Self::power_sum(format!("powerp_half:{p}"), vec![PowerTerm { coef: 0.5, exp: p }])
    }

    /// `G(t) = t^p + t^q`.
    pub fn blend(p: f64, q: f64) -> Result<Self> {
        Self::power_sum(
            format!("blend:{p}:{q}"),
            vec![PowerTerm { coef: 1.0, exp: p }, PowerTerm { coef: 1.0, exp: q }],
        )
    }

    /// Parses `power:p`, `powerp:p`, `powerp_half:p` or `blend:p:q`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("bad number '{s}' in family '{spec}'")))
        };
        match parts.as_slice() {
            ["power", p] => Self::power(num(p)?),
            ["powerp", p] => Self::pure_power(num(p)?),
            ["powerp_half", p] => Self::half_power(num(p)?),
            ["blend", p, q] => Self::blend(num(p)?, num(q)?),
            _ => Err(Error::Input(format!("unknown Orlicz family '{spec}'"))),
        }
    }

    fn tabulated(name: String, table: LogTable) -> Self {
        let p_minus = table.p_minus;
        let p_plus = table.p_plus;
        Self {
            name,
            repr: Repr::Tabulated(Arc::new(table)),
            p_minus,
            p_plus,
            delta2_c: 2f64.powf(p_plus),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }
    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }
    /// Declared doubling constant `2^{p_plus}`.
    pub fn delta2_c(&self) -> f64 {
        self.delta2_c
    }

    pub fn terms(&self) -> Option<&[PowerTerm]> {
        match &self.repr {
            Repr::PowerSum(t) => Some(t),
            Repr::Tabulated(_) => None,
        }
    }

    /// True when `G(t) = c·t²`; then `G(|Re z|) + G(|Im z|) = c|z|²` is
    /// invariant under phase rotations of `z`.
    pub fn is_quadratic(&self) -> bool {
        matches!(&self.repr, Repr::PowerSum(t) if t.iter().all(|t| t.exp == 2.0))
    }

    /// Splits a power sum into single-term functions (used to evaluate
    /// modulars of `u/λ` for many `λ` from one quadrature pass).
    pub fn split_terms(&self) -> Option<Vec<(f64, OrliczFunction)>> {
        let terms = self.terms()?;
        Some(
            terms
                .iter()
                .map(|t| {
                    let f = OrliczFunction {
                        name: format!("{}[t^{}]", self.name, t.exp),
                        repr: Repr::PowerSum(vec![*t]),
                        p_minus: t.exp,
                        p_plus: t.exp,
                        delta2_c: 2f64.powf(t.exp),
                    };
                    (t.exp, f)
                })
                .collect(),
        )
    }

    /// `G(t)` for `t ≥ 0`, unchecked.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.repr {
            Repr::PowerSum(terms) => terms.iter().map(|c| c.coef * pow_fast(t, c.exp)).sum(),
            Repr::Tabulated(tab) => tab.eval(t).0,
        }
    }

    /// `g(t) = G'(t)` for `t ≥ 0`, unchecked.
    #[inline]
    pub fn density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.repr {
            Repr::PowerSum(terms) => terms
                .iter()
                .map(|c| c.coef * c.exp * pow_fast(t, c.exp - 1.0))
                .sum(),
            Repr::Tabulated(tab) => tab.eval(t).1,
        }
    }

    /// `(G(t), g(t))` in one call.
    #[inline]
    pub fn value_and_density(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return (0.0, 0.0);
        }
        match &self.repr {
            Repr::PowerSum(terms) => {
                let mut v = 0.0;
                let mut d = 0.0;
                for c in terms {
                    let tp1 = pow_fast(t, c.exp - 1.0);
                    v += c.coef * tp1 * t;
                    d += c.coef * c.exp * tp1;
                }
                (v, d)
            }
            Repr::Tabulated(tab) => tab.eval(t),
        }
    }

    /// `Φ(x) = ∫_0^x G(τ) dτ/τ`. Convex and `Φ'(x) = G(x)/x`.
    pub fn log_integral(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.repr {
            Repr::PowerSum(terms) => terms
                .iter()
                .map(|c| c.coef * pow_fast(x, c.exp) / c.exp)
                .sum(),
            Repr::Tabulated(_) => dyadic_log_integral(|t| self.value(x * t)),
        }
    }

    /// Checked evaluation returning `(G(t), g(t))`.
    pub fn evaluate(&self, t: f64) -> Result<(f64, f64)> {
        if !t.is_finite() {
            return Err(Error::Input(format!("non-finite argument {t}")));
        }
        if t < 0.0 {
            return Err(Error::Domain(format!("G is defined on t >= 0, got {t}")));
        }
        Ok(self.value_and_density(t))
    }

    /// Complementary function `G*(s) = sup_t { s t − G(t) }`, attained where
    /// `g(t) = s`. Solved by bisection on the monotone density.
    pub fn legendre_transform(&self, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::Input(format!("non-finite argument {s}")));
        }
        if s < 0.0 {
            return Err(Error::Domain(format!("G* is defined on s >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 1e-12;
        let mut hi = 1e12;
        let mut expansions = 0;
        while self.density(lo) > s {
            lo *= 1e-3;
            expansions += 1;
            if expansions > 60 || lo == 0.0 {
                return Err(Error::Bracket { lo, hi, what: "g(t) = s below bracket".into() });
            }
        }
        while self.density(hi) < s {
            hi *= 1e3;
            expansions += 1;
            if expansions > 60 || !hi.is_finite() {
                return Err(Error::Bracket { lo, hi, what: "g(t) = s above bracket".into() });
            }
        }
        let tol = 1e-12 * s.max(1.0);
        let mut t = 0.5 * (lo + hi);
        for _ in 0..400 {
            // geometric midpoint while the bracket spans decades
            t = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            let r = self.density(t) - s;
            if r.abs() <= tol || (hi - lo) <= 4.0 * f64::EPSILON * hi {
                break;
            }
            if r < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
        }
        Ok(s * t - self.value(t))
    }

    /// `(min, max)` of `t g(t) / G(t)` over `t_grid`.
    pub fn estimate_indices(&self, t_grid: &[f64]) -> Result<(f64, f64)> {
        validate_grid(t_grid)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &t in t_grid {
            let (v, d) = self.value_and_density(t);
            if v <= 0.0 {
                return Err(Error::Degenerate { t });
            }
            let r = t * d / v;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok((lo, hi))
    }

    /// `max G(2t)/G(t)` over `t_grid`.
    pub fn delta2_constant(&self, t_grid: &[f64]) -> Result<f64> {
        validate_grid(t_grid)?;
        let mut c = 0.0f64;
        for &t in t_grid {
            let v = self.value(t);
            if v <= 0.0 {
                return Err(Error::Degenerate { t });
            }
            c = c.max(self.value(2.0 * t) / v);
        }
        Ok(c)
    }
}

fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::Input("empty t grid".into()));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Input("t grid must be strictly positive and finite".into()));
    }
    let lo = t_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t_grid.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 1e6 * (1.0 - 1e-12) {
        return Err(Error::Input(format!(
            "t grid spans {:.2} decades, need at least 6",
            (hi / lo).log10()
        )));
    }
    Ok(())
}

/// Logarithmic grid of `count` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1).max(1) as f64).exp())
        .collect()
}

/// Standard sampling grid for index and doubling estimates: 10^-6..10^6.
pub fn default_t_grid() -> Vec<f64> {
    log_grid(1e-6, 1e6, 241)
}

// ---------------------------------------------------------------------------
// Tabulated functions: cubic Hermite in (ln t, ln G).

#[derive(Debug, Clone)]
struct LogTable {
    l0: f64,
    dl: f64,
    ln_g: Vec<f64>,
    slope: Vec<f64>,
    p_minus: f64,
    p_plus: f64,
}

impl LogTable {
    /// `(G, g)` at `t > 0`.
    fn eval(&self, t: f64) -> (f64, f64) {
        let l = t.ln();
        let n = self.ln_g.len();
        let pos = (l - self.l0) / self.dl;
        let (h, dh) = if pos <= 0.0 {
            (self.ln_g[0] + self.slope[0] * (l - self.l0), self.slope[0])
        } else if pos >= (n - 1) as f64 {
            let le = self.l0 + (n - 1) as f64 * self.dl;
            (self.ln_g[n - 1] + self.slope[n - 1] * (l - le), self.slope[n - 1])
        } else {
            let k = (pos.floor() as usize).min(n - 2);
            let tau = pos - k as f64;
            let (y0, y1) = (self.ln_g[k], self.ln_g[k + 1]);
            let (m0, m1) = (self.slope[k] * self.dl, self.slope[k + 1] * self.dl);
            let t2 = tau * tau;
            let t3 = t2 * tau;
            let h = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                + (t3 - 2.0 * t2 + tau) * m0
                + (-2.0 * t3 + 3.0 * t2) * y1
                + (t3 - t2) * m1;
            let dh = ((6.0 * t2 - 6.0 * tau) * y0
                + (3.0 * t2 - 4.0 * tau + 1.0) * m0
                + (-6.0 * t2 + 6.0 * tau) * y1
                + (3.0 * t2 - 2.0 * tau) * m1)
                / self.dl;
            (h, dh)
        };
        let g = h.exp();
        (g, g * dh / t)
    }
}

// ---------------------------------------------------------------------------
// Spherical limit.

/// Angular quadrature nodes `(|w_N|, weight)` on `S^{n-1}` for `n ∈ {1,2}`.
fn sphere_rule(n: usize, trapezoid_nodes: usize) -> Vec<(f64, f64)> {
    match n {
        1 => vec![(1.0, 1.0), (1.0, 1.0)],
        _ => {
            let m = trapezoid_nodes;
            let dth = 2.0 * PI / m as f64;
            (0..m).map(|j| ((j as f64 * dth).sin().abs(), dth)).collect()
        }
    }
}

/// Angular trapezoid resolution for `n = 2`.
const SPHERE_TRAPEZOID: usize = 2048;

fn check_dim(n: usize) -> Result<()> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        Err(Error::Input(format!("dimension {n} not in {{1, 2}}")))
    }
}

/// `G̃(a) = ∫_0^1 ∫_{S^{n-1}} G(a |w_N| t) dS_w dt/t`, the `s`-free form of
/// the spherical limit obtained with `t = r^{1-s}`.
pub fn spherical_limit(f: &OrliczFunction, n: usize, a: f64) -> Result<f64> {
    check_dim(n)?;
    if !a.is_finite() {
        return Err(Error::Input(format!("non-finite argument {a}")));
    }
    if a < 0.0 {
        return Err(Error::Domain(format!("G̃ is defined on a >= 0, got {a}")));
    }
    if f.p_minus() <= 1.0 {
        return Err(Error::Integrability("p_minus <= 1: the radial integral diverges".into()));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (wn, w) in sphere_rule(n, SPHERE_TRAPEZOID) {
        if wn == 0.0 {
            continue;
        }
        let b = a * wn;
        acc += w * dyadic_log_integral(|t| f.value(b * t));
    }
    Ok(acc)
}

/// The defining expression `(1-s) ∫_0^1 ∫_{S^{n-1}} G(a |w_N| r^{1-s}) dS dr/r`
/// evaluated directly in `r` at a fixed `s ∈ (0, 1)`.
pub fn spherical_limit_raw(f: &OrliczFunction, n: usize, a: f64, s: f64) -> Result<f64> {
    check_dim(n)?;
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} not in (0, 1)")));
    }
    if a < 0.0 {
        return Err(Error::Domain(format!("G̃ is defined on a >= 0, got {a}")));
    }
    if f.p_minus() <= 1.0 {
        return Err(Error::Integrability("p_minus <= 1: the radial integral diverges".into()));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    let e = 1.0 - s;
    let ln2 = std::f64::consts::LN_2;
    let panels = (crate::quadrature::DYADIC_PANELS as f64 / e).ceil() as usize;
    let rule = gl8();
    let mut acc = 0.0;
    for (wn, w) in sphere_rule(n, SPHERE_TRAPEZOID) {
        if wn == 0.0 {
            continue;
        }
        let b = a * wn;
        let mut radial = 0.0;
        for k in 0..panels {
            let hi = -(k as f64) * ln2;
            let lo = hi - ln2;
            // ∫ G(b r^{1-s}) dr/r with l = ln r
            rule.for_each_on(lo, hi, |l, wl| radial += wl * f.value(b * (e * l).exp()));
        }
        acc += w * e * radial;
    }
    Ok(acc)
}

/// `K_{n,p} = ∫_{S^{n-1}} |w_N|^p dS`.
pub fn sphere_moment(n: usize, p: f64) -> f64 {
    match n {
        1 => 2.0,
        _ => {
            use statrs::function::gamma::gamma;
            2.0 * PI.sqrt() * gamma((p + 1.0) / 2.0) / gamma(p / 2.0 + 1.0)
        }
    }
}

/// Closed-form spherical limit of a power sum:
/// `G̃(a) = Σ coef · K_{n,p} / p · a^p`.
pub fn power_sum_spherical_limit(f: &OrliczFunction, n: usize) -> Result<OrliczFunction> {
    check_dim(n)?;
    let terms = f
        .terms()
        .ok_or_else(|| Error::Input(format!("{} is not a power sum", f.name())))?;
    let mapped = terms
        .iter()
        .map(|t| PowerTerm { coef: t.coef * sphere_moment(n, t.exp) / t.exp, exp: t.exp })
        .collect();
    OrliczFunction::power_sum(format!("gtilde[{}]/{}d", f.name(), n), mapped)
}

/// `G̃` for `f` in dimension `n`: closed form for power sums, otherwise the
/// tabulated quadrature.
pub fn limit_function(f: &OrliczFunction, n: usize) -> Result<OrliczFunction> {
    if f.terms().is_some() {
        power_sum_spherical_limit(f, n)
    } else {
        Ok(SphericalLimit::new(f, n)?.function().clone())
    }
}

/// Tabulated spherical limit `G̃` of an Orlicz function in dimension `n`,
/// with empirical equivalence constants `c1 G ≤ G̃ ≤ c2 G`.
#[derive(Debug, Clone)]
pub struct SphericalLimit {
    base: OrliczFunction,
    n: usize,
    function: OrliczFunction,
    c1: f64,
    c2: f64,
}

/// Table range `ln a ∈ [-TABLE_HALF_RANGE, TABLE_HALF_RANGE]`.
const TABLE_HALF_RANGE: f64 = 30.0;
const TABLE_STEP: f64 = 0.05;

impl SphericalLimit {
    pub fn new(base: &OrliczFunction, n: usize) -> Result<Self> {
        check_dim(n)?;
        if base.p_minus() <= 1.0 {
            return Err(Error::Integrability("p_minus <= 1".into()));
        }
        // Angular nodes for the table: quarter circle by symmetry (n = 2).
        let ang: Vec<(f64, f64)> = match n {
            1 => vec![(1.0, 2.0)],
            _ => {
                let rule = gl16();
                let mut v = Vec::new();
                let q = PI / 2.0;
                for k in 0..4 {
                    let (a, b) = (k as f64 * q / 4.0, (k + 1) as f64 * q / 4.0);
                    rule.for_each_on(a, b, |th, w| v.push((th.sin(), 4.0 * w)));
                }
                v
            }
        };
        let count = (2.0 * TABLE_HALF_RANGE / TABLE_STEP).round() as usize + 1;
        let l0 = -TABLE_HALF_RANGE;
        let mut ln_g = Vec::with_capacity(count);
        let mut slope = Vec::with_capacity(count);
        for k in 0..count {
            let l = l0 + k as f64 * TABLE_STEP;
            let a = l.exp();
            let mut gt = 0.0;
            let mut dgt = 0.0;
            for &(wn, w) in &ang {
                let b = a * wn;
                gt += w * dyadic_log_integral(|t| base.value(b * t));
                // d/da ∫ G(a wn t) dt/t = wn ∫ g(a wn t) dt
                dgt += w * wn * dyadic_log_integral(|t| t * base.density(b * t));
            }
            if !(gt > 0.0 && gt.is_finite()) {
                return Err(Error::Numeric(format!("G̃({a:e}) = {gt} while tabulating")));
            }
            ln_g.push(gt.ln());
            slope.push(a * dgt / gt);
        }
        let p_minus = slope.iter().cloned().fold(f64::INFINITY, f64::min);
        let p_plus = slope.iter().cloned().fold(0.0, f64::max);
        let table = LogTable { l0, dl: TABLE_STEP, ln_g, slope, p_minus, p_plus };
        let function = OrliczFunction::tabulated(format!("gtilde[{}]/{}d", base.name(), n), table);
        let mut c1 = f64::INFINITY;
        let mut c2 = 0.0f64;
        for t in log_grid(1e-3, 1e3, 61) {
            let r = function.value(t) / base.value(t);
            c1 = c1.min(r);
            c2 = c2.max(r);
        }
        Ok(Self { base: base.clone(), n, function, c1, c2 })
    }

    pub fn base(&self) -> &OrliczFunction {
        &self.base
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    /// `G̃` as an Orlicz function (tabulated).
    pub fn function(&self) -> &OrliczFunction {
        &self.function
    }
    pub fn constants(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    /// Writes the table `t, G, Gtilde, ratio` on the given sample points.
    pub fn write_csv<W: Write>(&self, mut out: W, ts: &[f64]) -> std::io::Result<()> {
        writeln!(out, "t,G,Gtilde,ratio")?;
        for &t in ts {
            let g = self.base.value(t);
            let gt = self.function.value(t);
            writeln!(out, "{:e},{:e},{:e},{:e}", t, g, gt, gt / g)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtins() -> Vec<OrliczFunction> {
        vec![
            OrliczFunction::power(2.0).unwrap(),
            OrliczFunction::power(1.5).unwrap(),
            OrliczFunction::pure_power(3.0).unwrap(),
            OrliczFunction::blend(2.0, 4.0).unwrap(),
        ]
    }

    #[test]
    fn evaluate_examples() {
        let f = OrliczFunction::power(2.0).unwrap();
        assert_eq!(f.evaluate(3.0).unwrap(), (4.5, 3.0));
        for f in builtins() {
            assert_eq!(f.evaluate(0.0).unwrap(), (0.0, 0.0));
        }
        let b = OrliczFunction::blend(2.0, 4.0).unwrap();
        assert_eq!(b.evaluate(1.0).unwrap(), (2.0, 6.0));
        assert!(matches!(f.evaluate(-1.0), Err(Error::Domain(_))));
        assert!(matches!(f.evaluate(f64::NAN), Err(Error::Input(_))));
    }

    #[test]
    fn legendre_examples() {
        let f = OrliczFunction::power(2.0).unwrap();
        assert!((f.legendre_transform(1.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(f.legendre_transform(0.0).unwrap(), 0.0);
        assert!(matches!(f.legendre_transform(-1.0), Err(Error::Domain(_))));
        let c = OrliczFunction::power(3.0).unwrap();
        let expect = 8f64.powf(1.5) * 2.0 / 3.0;
        assert!((c.legendre_transform(8.0).unwrap() - expect).abs() < 1e-9);
        // dense grid maximisation cross-check
        let brute = (1..200_000)
            .map(|k| {
                let t = k as f64 * 1e-4;
                8.0 * t - c.value(t)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((brute - expect).abs() < 1e-6);
    }

    #[test]
    fn indices_and_doubling() {
        let grid = default_t_grid();
        let (lo, hi) = OrliczFunction::power(2.0).unwrap().estimate_indices(&grid).unwrap();
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
        let (lo, hi) = OrliczFunction::blend(2.0, 4.0).unwrap().estimate_indices(&grid).unwrap();
        assert!((lo - 2.0).abs() < 1e-8 && (hi - 4.0).abs() < 1e-8, "{lo} {hi}");
        let (lo, hi) = OrliczFunction::power(3.0).unwrap().estimate_indices(&grid).unwrap();
        assert!((lo - 3.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);

        let d = |f: OrliczFunction| f.delta2_constant(&grid).unwrap();
        assert!((d(OrliczFunction::power(2.0).unwrap()) - 4.0).abs() < 1e-12);
        assert!((d(OrliczFunction::power(3.0).unwrap()) - 8.0).abs() < 1e-12);
        assert!((d(OrliczFunction::blend(2.0, 4.0).unwrap()) - 16.0).abs() < 1e-8);

        let f = OrliczFunction::power(2.0).unwrap();
        assert!(matches!(f.estimate_indices(&[]), Err(Error::Input(_))));
        assert!(matches!(f.estimate_indices(&[1.0, 10.0]), Err(Error::Input(_))));
    }

    #[test]
    fn parse_families() {
        assert_eq!(OrliczFunction::parse("power:2").unwrap().value(2.0), 2.0);
        assert_eq!(OrliczFunction::parse("powerp:2").unwrap().value(2.0), 4.0);
        assert_eq!(OrliczFunction::parse("powerp_half:2").unwrap().value(2.0), 2.0);
        assert_eq!(OrliczFunction::parse("blend:2:4").unwrap().value(1.0), 2.0);
        assert!(OrliczFunction::parse("exp:1").is_err());
        assert!(matches!(OrliczFunction::parse("power:1"), Err(Error::Integrability(_))));
    }

    #[test]
    fn spherical_limit_power_examples() {
        let sq = OrliczFunction::pure_power(2.0).unwrap();
        assert!((spherical_limit(&sq, 1, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((spherical_limit(&sq, 2, 1.0).unwrap() - PI / 2.0).abs() < 1e-10);
        for f in builtins() {
            assert_eq!(spherical_limit(&f, 1, 0.0).unwrap(), 0.0);
            assert_eq!(spherical_limit(&f, 2, 0.0).unwrap(), 0.0);
        }
        assert!(matches!(spherical_limit(&sq, 1, -1.0), Err(Error::Domain(_))));
        assert!(spherical_limit(&sq, 3, 1.0).is_err());
    }

    #[test]
    fn spherical_limit_matches_closed_form() {
        for f in builtins() {
            for n in [1, 2] {
                let closed = power_sum_spherical_limit(&f, n).unwrap();
                let tab = SphericalLimit::new(&f, n).unwrap();
                for a in [1e-3, 0.3, 1.0, 2.5, 40.0] {
                    let q = spherical_limit(&f, n, a).unwrap();
                    let c = closed.value(a);
                    assert!((q - c).abs() <= 1e-7 * c, "{f} n={n} a={a}: {q} vs {c}");
                    let t = tab.function().value(a);
                    assert!((t - c).abs() <= 5e-8 * c, "table {f} n={n} a={a}: {t} vs {c}");
                    let dt = tab.function().density(a);
                    let dc = closed.density(a);
                    assert!((dt - dc).abs() <= 5e-7 * dc, "table g {f} n={n} a={a}: {dt} vs {dc}");
                }
                let (c1, c2) = tab.constants();
                assert!(c1 > 0.0 && c1 <= c2 && c2.is_finite());
            }
        }
    }

    #[test]
    fn raw_form_is_s_independent() {
        for f in builtins() {
            for n in [1, 2] {
                for a in [0.5, 1.0, 3.0] {
                    let sub = spherical_limit(&f, n, a).unwrap();
                    for s in [0.5, 0.7, 0.9] {
                        let raw = spherical_limit_raw(&f, n, a, s).unwrap();
                        assert!((raw - sub).abs() <= 1e-6 * sub, "{f} n={n} s={s}");
                    }
                }
            }
        }
    }
}
