//! Energy modulars of grid fields and the Luxemburg norms they induce.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{GridField, MagneticPotential, Point};
pub use crate::nonlocal::{Breakdown, Integrand, PairEngine, QuadratureConfig, ShellPolicy};
use crate::orlicz::OrliczFunction;

/// The modulars the crate knows how to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModularKind {
    /// `∫ G(|Re u|) + G(|Im u|)`.
    IG,
    /// `∫ G(|u|)`.
    IGTilde,
    /// `∫ G(|Re(∇u − iAu)|) + G(|Im(∇u − iAu)|)`.
    IGA,
    /// `∫ G(|∇u − iAu|)`.
    IGATilde,
    /// Nonlocal modular with `A = 0`.
    IsG,
    IsGTilde,
    /// Nonlocal magnetic modular.
    IsGA,
    IsGATilde,
}

impl ModularKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ig" => Self::IG,
            "ig_tilde" | "igtilde" => Self::IGTilde,
            "iga" => Self::IGA,
            "iga_tilde" | "igatilde" => Self::IGATilde,
            "isg" => Self::IsG,
            "isg_tilde" | "isgtilde" => Self::IsGTilde,
            "isga" => Self::IsGA,
            "isga_tilde" | "isgatilde" => Self::IsGATilde,
            _ => return Err(Error::Input(format!("unknown modular kind '{s}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::IG => "IG",
            Self::IGTilde => "IG_tilde",
            Self::IGA => "IGA",
            Self::IGATilde => "IGA_tilde",
            Self::IsG => "IsG",
            Self::IsGTilde => "IsG_tilde",
            Self::IsGA => "IsGA",
            Self::IsGATilde => "IsGA_tilde",
        }
    }

    pub fn is_nonlocal(&self) -> bool {
        matches!(self, Self::IsG | Self::IsGTilde | Self::IsGA | Self::IsGATilde)
    }

    pub fn integrand(&self) -> Integrand {
        match self {
            Self::IGTilde | Self::IGATilde | Self::IsGTilde | Self::IsGATilde => Integrand::Modulus,
            _ => Integrand::Split,
        }
    }
}

/// Result of one modular evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModularReport {
    pub kind: ModularKind,
    pub value: f64,
    pub s: Option<f64>,
    pub shell_policy: Option<ShellPolicy>,
    pub error_estimate: f64,
}

impl ModularReport {
    fn local(kind: ModularKind, value: f64) -> Self {
        Self { kind, value, s: None, shell_policy: None, error_estimate: 0.0 }
    }
}

/// Magnetic Hölder quotient `(u(x) − e^{i(x−y)·A((x+y)/2)} u(y)) / |x − y|^s`
/// between two grid nodes.
pub fn holder_quotient(u: &GridField, a: &MagneticPotential, s: f64, x: Point, y: Point) -> Result<C64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
    }
    if x == y {
        return Err(Error::Singularity);
    }
    let ux = u.value_at(x).ok_or_else(|| Error::Input(format!("{x:?} is not a grid node")))?;
    let uy = u.value_at(y).ok_or_else(|| Error::Input(format!("{y:?} is not a grid node")))?;
    let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
    Ok((ux - C64::from_polar(1.0, a.phase(x, y)) * uy) / r.powf(s))
}

fn psi(f: &OrliczFunction, kind: Integrand, z: C64) -> f64 {
    match kind {
        Integrand::Split => f.value(z.re.abs()) + f.value(z.im.abs()),
        Integrand::Modulus => f.value(z.norm()),
    }
}

/// `Σ G(|Re u|) + G(|Im u|)` times `h^n`.
pub fn modular_ig(f: &OrliczFunction, u: &GridField) -> ModularReport {
    ModularReport::local(ModularKind::IG, zeroth_order(f, u, Integrand::Split))
}

/// `Σ G(|u|)` times `h^n`.
pub fn modular_ig_tilde(f: &OrliczFunction, u: &GridField) -> ModularReport {
    ModularReport::local(ModularKind::IGTilde, zeroth_order(f, u, Integrand::Modulus))
}

fn zeroth_order(f: &OrliczFunction, u: &GridField, kind: Integrand) -> f64 {
    u.grid().cell_volume() * u.values().iter().map(|v| psi(f, kind, *v)).sum::<f64>()
}

/// Rejects fields that are not negligible (above `1e-10 ‖u‖_∞`) on the
/// outermost grid nodes, where the differences would see the zero extension.
fn check_margin(u: &GridField) -> Result<()> {
    let g = u.grid();
    let top = g.points() - 1;
    let floor = 1e-10 * u.sup_norm();
    for (i, v) in u.values().iter().enumerate() {
        if v.norm() > floor {
            let m = g.multi(i);
            if (0..g.dim()).any(|k| m[k] == 0 || m[k] == top) {
                return Err(Error::Stencil("field support touches the grid boundary".into()));
            }
        }
    }
    Ok(())
}

/// Local magnetic modular with central Peierls differences for `∇u − iAu`.
pub fn modular_iga_local(f: &OrliczFunction, u: &GridField, a: &MagneticPotential) -> Result<ModularReport> {
    Ok(ModularReport::local(ModularKind::IGA, first_order(f, u, a, Integrand::Split)?))
}

/// `∫ G(|∇u − iAu|)`.
pub fn modular_iga_local_tilde(f: &OrliczFunction, u: &GridField, a: &MagneticPotential) -> Result<ModularReport> {
    Ok(ModularReport::local(ModularKind::IGATilde, first_order(f, u, a, Integrand::Modulus)?))
}

fn first_order(f: &OrliczFunction, u: &GridField, a: &MagneticPotential, kind: Integrand) -> Result<f64> {
    check_margin(u)?;
    let n = u.grid().dim();
    let mut acc = 0.0;
    for i in 0..u.grid().len() {
        let w = u.magnetic_gradient(a, i);
        let re = (0..n).map(|k| w[k].re * w[k].re).sum::<f64>().sqrt();
        let im = (0..n).map(|k| w[k].im * w[k].im).sum::<f64>().sqrt();
        acc += match kind {
            Integrand::Split => f.value(re) + f.value(im),
            Integrand::Modulus => f.value(re.hypot(im)),
        };
    }
    Ok(acc * u.grid().cell_volume())
}

/// Nonlocal magnetic modular `∬ G(|Re D|) + G(|Im D|) dxdy/|x−y|^n`.
pub fn modular_isga(
    f: &OrliczFunction,
    u: &GridField,
    a: &MagneticPotential,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<ModularReport> {
    nonlocal_report(f, u, a, s, cfg, ModularKind::IsGA)
}

/// Nonlocal modular with `G(|D|)`.
pub fn modular_isga_tilde(
    f: &OrliczFunction,
    u: &GridField,
    a: &MagneticPotential,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<ModularReport> {
    nonlocal_report(f, u, a, s, cfg, ModularKind::IsGATilde)
}

/// `A = 0` special case.
pub fn modular_isg(f: &OrliczFunction, u: &GridField, s: f64, cfg: &QuadratureConfig) -> Result<ModularReport> {
    let zero = MagneticPotential::zero(u.grid().dim());
    nonlocal_report(f, u, &zero, s, cfg, ModularKind::IsG)
}

fn nonlocal_report(
    f: &OrliczFunction,
    u: &GridField,
    a: &MagneticPotential,
    s: f64,
    cfg: &QuadratureConfig,
    kind: ModularKind,
) -> Result<ModularReport> {
    let b = nonlocal_breakdown(f, u, a, s, cfg, kind.integrand())?;
    let omitted = if cfg.shell_policy == ShellPolicy::Omit { b.shell.abs() } else { 0.0 };
    let value = b.total.max(0.0);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite {} value", kind.name())));
    }
    Ok(ModularReport { kind, value, s: Some(s), shell_policy: Some(cfg.shell_policy), error_estimate: b.tail + omitted })
}

/// Breakdown of the nonlocal integral of `u` over its support box.
pub fn nonlocal_breakdown(
    f: &OrliczFunction,
    u: &GridField,
    a: &MagneticPotential,
    s: f64,
    cfg: &QuadratureConfig,
    integrand: Integrand,
) -> Result<Breakdown> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
    }
    let Some(bx) = u.support_box() else {
        return Ok(Breakdown::default());
    };
    let engine = PairEngine::new(f, a, *u.grid(), bx, s, integrand, *cfg)?;
    engine.energy(&engine.gather(u))
}

/// What to evaluate: the kind plus its optional order and potential.
#[derive(Debug, Clone)]
pub struct ModularSpec {
    pub kind: ModularKind,
    pub s: Option<f64>,
    pub potential: Option<MagneticPotential>,
    pub cfg: QuadratureConfig,
}

impl ModularSpec {
    pub fn local(kind: ModularKind) -> Self {
        Self { kind, s: None, potential: None, cfg: QuadratureConfig::default() }
    }

    pub fn nonlocal(kind: ModularKind, s: f64, potential: Option<MagneticPotential>) -> Self {
        Self { kind, s: Some(s), potential, cfg: QuadratureConfig::default() }
    }
}

/// Dispatches on `spec.kind`.
pub fn evaluate(f: &OrliczFunction, u: &GridField, spec: &ModularSpec) -> Result<ModularReport> {
    let n = u.grid().dim();
    let zero = MagneticPotential::zero(n);
    let pot = match spec.kind {
        ModularKind::IsG | ModularKind::IsGTilde => &zero,
        _ => spec.potential.as_ref().unwrap_or(&zero),
    };
    let need_s = || spec.s.ok_or_else(|| Error::Input(format!("{} needs an order s", spec.kind.name())));
    match spec.kind {
        ModularKind::IG => Ok(modular_ig(f, u)),
        ModularKind::IGTilde => Ok(modular_ig_tilde(f, u)),
        ModularKind::IGA => modular_iga_local(f, u, pot),
        ModularKind::IGATilde => modular_iga_local_tilde(f, u, pot),
        k => nonlocal_report(f, u, pot, need_s()?, &spec.cfg, k),
    }
}

/// `inf{λ > 0 : modular(u/λ) ≤ 1}` by bisection to `1e-10` relative.
///
/// For power sums the modular of `u/λ` is `Σ_k λ^{-p_k} M_k`, so the field
/// is evaluated once per term instead of once per bisection step.
pub fn luxemburg_norm(f: &OrliczFunction, u: &GridField, spec: &ModularSpec) -> Result<f64> {
    if u.is_zero() {
        return Ok(0.0);
    }
    let curve: Box<dyn Fn(f64) -> Result<f64> + '_> = match f.split_terms() {
        Some(parts) => {
            let mut pieces = Vec::with_capacity(parts.len());
            for (p, g) in parts {
                pieces.push((p, evaluate(&g, u, spec)?.value));
            }
            Box::new(move |lam: f64| Ok(pieces.iter().map(|(p, m)| m * lam.powf(-p)).sum()))
        }
        None => Box::new(move |lam: f64| Ok(evaluate(f, &u.scale(C64::new(1.0 / lam, 0.0)), spec)?.value)),
    };
    luxemburg_from_curve(curve)
}

/// Bisection for the level set `m(λ) = 1` of a nonincreasing modular curve.
pub fn luxemburg_from_curve(m: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut lo = 1.0;
    let mut hi = 1.0;
    let mut steps = 0;
    while m(hi)? > 1.0 {
        hi *= 2.0;
        steps += 1;
        if steps > 400 {
            return Err(Error::Numeric("Luxemburg bracket did not close from above".into()));
        }
    }
    while m(lo)? <= 1.0 {
        lo *= 0.5;
        steps += 1;
        if steps > 800 || lo == 0.0 {
            return Err(Error::Numeric("Luxemburg bracket did not close from below".into()));
        }
    }
    if m(hi)? == 0.0 {
        return Ok(0.0);
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if m(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// CSV trace with columns `s, kind, value, error_estimate, shell_policy`.
pub fn write_trace<W: Write>(reports: &[ModularReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "s,kind,value,error_estimate,shell_policy")?;
    for r in reports {
        let s = r.s.map_or(String::new(), |s| s.to_string());
        let pol = match r.shell_policy {
            Some(ShellPolicy::Taylor) => "taylor",
            Some(ShellPolicy::Omit) => "omit",
            None => "",
        };
        writeln!(out, "{s},{},{:.17e},{:.6e},{pol}", r.kind.name(), r.value, r.error_estimate)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample, Grid, TestFunction};

    fn parabola(points: usize) -> GridField {
        let g = Grid::with_boundary_nodes(1, points, 1.0, 4).unwrap();
        sample(&TestFunction::Parabola, &g).unwrap()
    }

    #[test]
    fn holder_quotient_examples() {
        let g = Grid::new(1, 2.0, 32).unwrap();
        let a0 = MagneticPotential::zero(1);
        let z = GridField::zeros(g);
        let (x, y) = ([g.coord(3), 0.0], [g.coord(20), 0.0]);
        assert_eq!(holder_quotient(&z, &a0, 0.5, x, y).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(holder_quotient(&z, &a0, 0.5, x, x), Err(Error::Singularity));

        let h = g.spacing();
        let (xi, yi) = (4usize, 12usize); // |x − y| = 8h = 1
        let mut vals = vec![C64::new(0.0, 0.0); g.len()];
        vals[xi] = C64::new(1.0, 0.0);
        let u = GridField::new(g, vals).unwrap();
        let q = holder_quotient(&u, &a0, 0.3, [g.coord(xi), 0.0], [g.coord(yi), 0.0]).unwrap();
        assert!((8.0 * h - 1.0).abs() < 1e-15);
        assert!((q - C64::new(1.0, 0.0)).norm() < 1e-14);

        let one = GridField::from_fn(g, |_| C64::new(1.0, 0.0)).unwrap();
        let a = MagneticPotential::constant(1, [0.9, 0.0]);
        let (x, y) = ([g.coord(5), 0.0], [g.coord(2), 0.0]);
        let r = x[0] - y[0];
        let s = 0.4;
        let q = holder_quotient(&one, &a, s, x, y).unwrap();
        let want = (C64::new(1.0, 0.0) - C64::from_polar(1.0, r * 0.9)) / r.powf(s);
        assert!((q - want).norm() < 1e-14);
        assert!((q.norm() - 2.0 * (r * 0.9 / 2.0).sin().abs() / r.powf(s)).abs() < 1e-14);
    }

    #[test]
    fn local_modular_examples() {
        let f2 = OrliczFunction::pure_power(2.0).unwrap();
        let u = parabola(1024);
        assert!((modular_ig(&f2, &u).value - 16.0 / 15.0).abs() < 1e-5);
        let iu = u.scale(C64::new(0.0, 1.0));
        assert_eq!(modular_ig(&f2, &iu).value, modular_ig(&f2, &u).value);

        let half = OrliczFunction::power(2.0).unwrap();
        let a1 = MagneticPotential::constant(1, [1.0, 0.0]);
        // the kinks at ±1 cost O(h) in the two boundary cells
        let v = modular_iga_local(&half, &u, &a1).unwrap().value;
        assert!((v - 28.0 / 15.0).abs() < 5e-3 * 28.0 / 15.0, "{v}");

        // smooth field: second order, ½∫(u′² + u²) = √(π/2) for gaussian(1)
        let target = (std::f64::consts::PI / 2.0).sqrt();
        let err = |points: usize| {
            let g = Grid::new(1, 7.0, points).unwrap();
            let w = sample(&TestFunction::Gaussian { sigma: 1.0 }, &g).unwrap().map(|x, v| if x[0].abs() > 6.5 { C64::new(0.0, 0.0) } else { v }).unwrap();
            (modular_iga_local(&half, &w, &a1).unwrap().value - target).abs()
        };
        let (e1, e2) = (err(256), err(512));
        assert!(e1 / e2 > 3.5, "{e1} {e2}");

        let zero = GridField::zeros(*u.grid());
        assert_eq!(modular_iga_local(&half, &zero, &a1).unwrap().value, 0.0);

        let touching = GridField::from_fn(*u.grid(), |_| C64::new(1.0, 0.0)).unwrap();
        assert!(matches!(modular_iga_local(&half, &touching, &a1), Err(Error::Stencil(_))));
    }

    #[test]
    fn nonlocal_examples() {
        let f = OrliczFunction::power(2.0).unwrap();
        let g = Grid::new(1, 6.0, 1024).unwrap();
        let u = sample(&TestFunction::Gaussian { sigma: 1.0 }, &g).unwrap();
        let cfg = QuadratureConfig::default();
        let a0 = MagneticPotential::zero(1);
        let r = modular_isga(&f, &u, &a0, 0.5, &cfg).unwrap();
        assert!((r.value - std::f64::consts::PI).abs() < 1e-2 * std::f64::consts::PI);
        assert_eq!(r.value, modular_isg(&f, &u, 0.5, &cfg).unwrap().value);
        assert_eq!(modular_isga(&f, &GridField::zeros(g), &a0, 0.5, &cfg).unwrap().value, 0.0);
        assert!(matches!(modular_isga(&f, &u, &a0, 1.0, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn luxemburg_examples() {
        let f2 = OrliczFunction::pure_power(2.0).unwrap();
        let u = parabola(512);
        let m = modular_ig(&f2, &u).value;
        let scaled = u.scale(C64::new((4.0 / m).sqrt(), 0.0));
        let spec = ModularSpec::local(ModularKind::IG);
        let l = luxemburg_norm(&f2, &scaled, &spec).unwrap();
        assert!((l - 2.0).abs() < 1e-9);
        let l3 = luxemburg_norm(&f2, &scaled.scale(C64::new(3.0, 0.0)), &spec).unwrap();
        assert!((l3 - 3.0 * l).abs() < 1e-9 * l3);
        assert_eq!(luxemburg_norm(&f2, &GridField::zeros(*u.grid()), &spec).unwrap(), 0.0);

        // non-power path agrees with the term-splitting path
        let blend = OrliczFunction::blend(1.5, 2.5).unwrap();
        let fast = luxemburg_norm(&blend, &u, &spec).unwrap();
        let slow = luxemburg_from_curve(|lam| Ok(modular_ig(&blend, &u.scale(C64::new(1.0 / lam, 0.0))).value)).unwrap();
        assert!((fast - slow).abs() < 1e-9 * fast);
    }
}
