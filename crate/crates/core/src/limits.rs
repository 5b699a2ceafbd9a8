//! Numerical checks of the `s → 1` limit of the scaled nonlocal energy,
//! globally, at single points, and along approximating sequences.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{mollify, truncate, GridField, MagneticPotential, Point};
use crate::modulars::{luxemburg_norm, modular_iga_local, modular_isga, ModularKind, ModularSpec, PairEngine, QuadratureConfig};
use crate::orlicz::{limit_function, OrliczFunction};

/// Default ladder of orders.
pub const DEFAULT_LADDER: [f64; 6] = [0.60, 0.70, 0.80, 0.875, 0.925, 0.95];

/// Outcome of a sweep over an `s` ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub s_ladder: Vec<f64>,
    pub scaled_values: Vec<f64>,
    pub target: f64,
    pub extrapolated: f64,
    pub rel_gap: f64,
}

impl SweepResult {
    /// CSV with columns `s, scaled_value, target, gap`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s,scaled_value,target,gap")?;
        for (s, v) in self.s_ladder.iter().zip(&self.scaled_values) {
            writeln!(out, "{s},{v:.17e},{:.17e},{:.6e}", self.target, v - self.target)?;
        }
        Ok(())
    }
}

/// Relative gap with the `1e-30` floor on the denominator.
pub fn relative_gap(value: f64, target: f64) -> f64 {
    (value - target).abs() / target.max(1e-30)
}

pub fn check_ladder(ladder: &[f64], lo: f64, hi: f64) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Input("empty s ladder".into()));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("s ladder must be strictly increasing".into()));
    }
    if ladder.iter().any(|&s| !(s >= lo && s <= hi)) {
        return Err(Error::Domain(format!("s ladder must lie in [{lo}, {hi}]")));
    }
    Ok(())
}

/// Intercept at `1 − s = 0` of the least-squares line through the top three
/// ladder points (fewer when the ladder is shorter).
pub fn extrapolate(ladder: &[f64], values: &[f64]) -> f64 {
    let m = ladder.len().min(3);
    let xs: Vec<f64> = ladder[ladder.len() - m..].iter().map(|s| 1.0 - s).collect();
    let ys = &values[values.len() - m..];
    if m == 1 {
        return ys[0];
    }
    let mx = xs.iter().sum::<f64>() / m as f64;
    let my = ys.iter().sum::<f64>() / m as f64;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    my - (sxy / sxx) * mx
}

/// `(1 − s)·I_{s,G}^A(u)`.
pub fn scaled_modular(
    f: &OrliczFunction,
    u: &GridField,
    a: &MagneticPotential,
    s: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let v = (1.0 - s) * modular_isga(f, u, a, s, cfg)?.value;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("non-finite scaled modular at s = {s}")));
    }
    Ok(v)
}

/// The local limit `I_{G̃}^A(u)`.
pub fn bbm_target(f: &OrliczFunction, u: &GridField, a: &MagneticPotential) -> Result<f64> {
    let gt = limit_function(f, u.grid().dim())?;
    Ok(modular_iga_local(&gt, u, a)?.value)
}

/// Scaled nonlocal modular over a ladder, its extrapolation to `s = 1`
/// and the local target.
pub fn bbm_sweep(
    f: &OrliczFunction,
    u: &GridField,
    a: &MagneticPotential,
    s_ladder: &[f64],
    cfg: &QuadratureConfig,
) -> Result<SweepResult> {
    check_ladder(s_ladder, 0.5, 0.97)?;
    let scaled_values = s_ladder
        .par_iter()
        .map(|&s| scaled_modular(f, u, a, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let target = bbm_target(f, u, a)?;
    let extrapolated = extrapolate(s_ladder, &scaled_values);
    Ok(SweepResult {
        s_ladder: s_ladder.to_vec(),
        scaled_values,
        rel_gap: relative_gap(extrapolated, target),
        target,
        extrapolated,
    })
}

/// Pointwise limits and their local targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseResult {
    pub s_ladder: Vec<f64>,
    pub re_values: Vec<f64>,
    pub im_values: Vec<f64>,
    pub re_limit: f64,
    pub im_limit: f64,
    /// `G̃(|Re(∇u − iAu)(x)|)`.
    pub re_target: f64,
    /// `G̃(|Im(∇u − iAu)(x)|)`.
    pub im_target: f64,
}

/// `(1 − s) ∫ G(|Re D_s^A u(x, y)|) dy/|x − y|^n` and its `Im` counterpart
/// at a fixed node, extrapolated to `s = 1`.
pub fn pointwise_bbm(
    f: &OrliczFunction,
    u: &GridField,
    a: &MagneticPotential,
    x: Point,
    s_ladder: &[f64],
    cfg: &QuadratureConfig,
) -> Result<PointwiseResult> {
    check_ladder(s_ladder, 0.0, 1.0)?;
    let grid = *u.grid();
    let node = grid.node_at(x).ok_or_else(|| Error::Input(format!("{x:?} is not a grid node")))?;
    let rows = s_ladder
        .par_iter()
        .map(|&s| {
            let engine = PairEngine::new(f, a, grid, grid.full_box(), s, crate::modulars::Integrand::Split, *cfg)?;
            let vals = engine.gather(u);
            let i = engine.local_index(node).expect("full box contains every node");
            let p = engine.pointwise(i, &vals)?;
            Ok([(1.0 - s) * p[0], (1.0 - s) * p[1]])
        })
        .collect::<Result<Vec<_>>>()?;
    let re_values: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let im_values: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let gt = limit_function(f, grid.dim())?;
    let w = u.magnetic_gradient(a, node);
    let n = grid.dim();
    let re = (0..n).map(|k| w[k].re * w[k].re).sum::<f64>().sqrt();
    let im = (0..n).map(|k| w[k].im * w[k].im).sum::<f64>().sqrt();
    Ok(PointwiseResult {
        re_limit: extrapolate(s_ladder, &re_values),
        im_limit: extrapolate(s_ladder, &im_values),
        s_ladder: s_ladder.to_vec(),
        re_values,
        im_values,
        re_target: gt.value(re),
        im_target: gt.value(im),
    })
}

/// Approximating sequences used on the lower-bound side.
#[derive(Debug, Clone, PartialEq)]
pub enum Sequence {
    /// `u_k = u`.
    Constant,
    /// `u_k = ρ_{ε_k} * u`.
    Mollified(Vec<f64>),
    /// `u_k = η_{k} u` with the given radii.
    Truncated(Vec<f64>),
}

/// Both sides of the variational limit check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub s_ladder: Vec<f64>,
    /// Local limit `J(u)`.
    pub limit_energy: f64,
    /// `J_{s_k}(u)` along the ladder (constant recovery sequence).
    pub recovery_energies: Vec<f64>,
    /// Relative gap between the extrapolated recovery energies and `J(u)`.
    pub limsup_gap: f64,
    /// `J_{s_k}(u_k)` for the supplied sequence.
    pub sequence_energies: Vec<f64>,
    /// Luxemburg distances `‖u_k − u‖_G`.
    pub distances: Vec<f64>,
    /// `min` over the last three ladder points of `J_{s_k}(u_k)`, minus `J(u)`.
    pub liminf_margin: f64,
}

/// Upper and lower bound sides of the `s → 1` limit, with `J_s = (1−s) I_{s,G}^A`.
pub fn gamma_check(
    f: &OrliczFunction,
    a: &MagneticPotential,
    u: &GridField,
    sequence: &Sequence,
    s_ladder: &[f64],
    cfg: &QuadratureConfig,
) -> Result<GammaReport> {
    check_ladder(s_ladder, 0.5, 0.97)?;
    let members: Vec<GridField> = match sequence {
        Sequence::Constant => vec![u.clone(); s_ladder.len()],
        Sequence::Mollified(eps) => eps.iter().map(|&e| mollify(u, e)).collect::<Result<_>>()?,
        Sequence::Truncated(ks) => ks.iter().map(|&k| truncate(u, k)).collect::<Result<_>>()?,
    };
    if members.len() != s_ladder.len() {
        return Err(Error::Input("sequence length must match the s ladder".into()));
    }
    let spec = ModularSpec::local(ModularKind::IG);
    let distances = members
        .iter()
        .map(|m| luxemburg_norm(f, &m.sub(u)?, &spec))
        .collect::<Result<Vec<_>>>()?;
    let first = distances[0];
    let last = *distances.last().unwrap();
    let scale = luxemburg_norm(f, u, &spec)?;
    if last > 1e-12 * scale.max(1e-300) && last > 0.5 * first {
        return Err(Error::Precondition {
            what: "sequence does not approach u in the Luxemburg norm".into(),
            distance: last,
        });
    }
    let limit_energy = bbm_target(f, u, a)?;
    let recovery_energies = s_ladder
        .par_iter()
        .map(|&s| scaled_modular(f, u, a, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let sequence_energies = match sequence {
        Sequence::Constant => recovery_energies.clone(),
        _ => s_ladder
            .par_iter()
            .zip(&members)
            .map(|(&s, m)| scaled_modular(f, m, a, s, cfg))
            .collect::<Result<Vec<_>>>()?,
    };
    let limsup_gap = if limit_energy == 0.0 && recovery_energies.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        relative_gap(extrapolate(s_ladder, &recovery_energies), limit_energy)
    };
    let tail = &sequence_energies[sequence_energies.len().saturating_sub(3)..];
    let liminf_margin = tail.iter().cloned().fold(f64::INFINITY, f64::min) - limit_energy;
    Ok(GammaReport {
        s_ladder: s_ladder.to_vec(),
        limit_energy,
        recovery_energies,
        limsup_gap,
        sequence_energies,
        distances,
        liminf_margin,
    })
}
