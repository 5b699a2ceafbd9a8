//! Discrete evaluation of the nonlocal double integral
//!
//! ```text
//! ∬ Ψ(D(x, y)) dx dy / |x − y|^n,   D(x, y) = (u(x) − e^{iθ(x,y)} u(y)) / |x − y|^s,
//! ```
//!
//! with `Ψ(z) = G(|Re z|) + G(|Im z|)` (split) or `Ψ(z) = G(|z|)` (modulus)
//! and `θ(x, y) = (x − y)·A((x + y)/2)`.
//!
//! The integral is assembled from three pieces:
//!
//! * pairs of nodes inside an *active box* (midpoint rule, weight
//!   `h^{2n}/|x − y|^n`);
//! * pairs with one point outside the box, where the field vanishes. The
//!   radial integral is then one-dimensional and has a closed form through
//!   `Φ(x) = ∫_0^x G(τ) dτ/τ` whenever the integrand ignores the phase;
//!   otherwise it is integrated with graded panels in `t = r^{-s}`;
//! * an optional near-diagonal correction that replaces the lattice sum of
//!   the first-order Taylor model by its exact integral over a small square.
//!
//! Every piece also provides its exact gradient with respect to the real
//! and imaginary parts of the box values. Results are reduced over fixed
//! row blocks in a fixed order, so they do not depend on the thread count.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{dot, norm, Grid, GridField, IndexBox, MagneticPotential, Point};
use crate::orlicz::OrliczFunction;
use crate::quadrature::{angular_arcs, log_panels};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Which modulus of the quotient enters `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrand {
    /// `G(|Re z|) + G(|Im z|)`.
    Split,
    /// `G(|z|)`.
    Modulus,
}

/// Treatment of the near-diagonal region `|x − y| ≲ h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShellPolicy {
    /// Pair sum only; the self cell contributes nothing.
    Omit,
    /// Exact integral of the local Taylor model near the diagonal.
    Taylor,
}

/// Quadrature controls for the nonlocal modulars.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureConfig {
    /// Radius beyond which the exterior integral is dropped and only
    /// reported as an error estimate. `None` integrates to infinity.
    pub truncation_radius: Option<f64>,
    pub shell_policy: ShellPolicy,
    /// Rows per reduction block.
    pub reduction_block: usize,
    /// Lattice rings `K` inside the Taylor square of half-width `(K + ½)h`.
    pub near_rings: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { truncation_radius: None, shell_policy: ShellPolicy::Taylor, reduction_block: 64, near_rings: 4 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.reduction_block == 0 {
            return Err(Error::Input("reduction_block must be at least 1".into()));
        }
        if let Some(r) = self.truncation_radius {
            if !(r.is_finite() && r >= grid.half_width()) {
                return Err(Error::Input(format!(
                    "truncation radius {r} must be at least the grid half width {}",
                    grid.half_width()
                )));
            }
        }
        Ok(())
    }
}

enum Phase<'a> {
    Trivial,
    Table(Vec<C64>, Point),
    General(&'a MagneticPotential),
}

/// Exterior direction seen from a node: unit vector, angular weight and
/// `ρ^{-s}` with `ρ` the distance to the box boundary.
#[derive(Clone, Copy)]
struct ExtDir {
    e: Point,
    weight: f64,
    rho: f64,
}

/// One term `coef · Ψ(scale · (w·e))` of the Taylor correction.
#[derive(Clone, Copy)]
struct Probe {
    e: Point,
    scale: f64,
    coef: f64,
}

#[derive(Clone, Copy, Default)]
struct LocalStencil {
    up: [Option<usize>; 2],
    down: [Option<usize>; 2],
    up_coef: [C64; 2],
    down_coef: [C64; 2],
}

/// Split of an evaluated integral into its pieces (already scaled by `h^n`).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Breakdown {
    pub pairs: f64,
    pub exterior: f64,
    /// Taylor correction, included in `total` only under `ShellPolicy::Taylor`.
    pub shell: f64,
    /// Exterior integral beyond the truncation radius (not in `total`).
    pub tail: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Default)]
struct RowOut {
    pairs: [f64; 2],
    ext: [f64; 2],
    tail: f64,
    grad: C64,
}

#[derive(Clone, Copy, Default)]
struct ShellOut {
    val: [f64; 2],
    dw: [C64; 2],
}

/// Prepared evaluator for one `(G, A, s, box)` configuration.
pub struct PairEngine<'a> {
    f: &'a OrliczFunction,
    grid: Grid,
    n: usize,
    bx: IndexBox,
    dims: [usize; 2],
    nodes: Vec<usize>,
    s: f64,
    kind: Integrand,
    phase: Phase<'a>,
    symmetric: bool,
    rho: Vec<f64>,
    wt: Vec<f64>,
    t_max: f64,
    cfg: QuadratureConfig,
    ext_dirs: Vec<Vec<ExtDir>>,
    stencils: Vec<LocalStencil>,
    rings: Vec<usize>,
    shell_exact: Vec<Vec<Probe>>,
    shell_lattice: Vec<Vec<(Point, f64, f64)>>,
    volume: f64,
}

impl<'a> PairEngine<'a> {
    pub fn new(
        f: &'a OrliczFunction,
        a: &'a MagneticPotential,
        grid: Grid,
        bx: IndexBox,
        s: f64,
        kind: Integrand,
        cfg: QuadratureConfig,
    ) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
        }
        cfg.validate(&grid)?;
        if a.dim() != grid.dim() {
            return Err(Error::Input("potential and grid dimensions differ".into()));
        }
        let n = grid.dim();
        let h = grid.spacing();
        let dims = [bx.extent(0), if n == 2 { bx.extent(1) } else { 1 }];
        let nodes = grid.box_indices(&bx);

        let (wx, wy) = (2 * dims[0] - 1, 2 * dims[1] - 1);
        let mut rho = vec![0.0; wx * wy];
        let mut wt = vec![0.0; wx * wy];
        let phase = if a.is_zero() {
            Phase::Trivial
        } else if let Some(c) = a.as_constant() {
            let mut tab = vec![C64::new(1.0, 0.0); wx * wy];
            for dj in 0..wy {
                for di in 0..wx {
                    let d = [(di as f64 - (dims[0] - 1) as f64) * h, (dj as f64 - (dims[1] - 1) as f64) * h];
                    // offset d = x_j − x_i; the phase uses x_i − x_j
                    tab[di + wx * dj] = C64::from_polar(1.0, -dot(d, c));
                }
            }
            Phase::Table(tab, c)
        } else {
            Phase::General(a)
        };
        for dj in 0..wy {
            for di in 0..wx {
                let d = [(di as f64 - (dims[0] - 1) as f64) * h, (dj as f64 - (dims[1] - 1) as f64) * h];
                let r = norm(d);
                if r > 0.0 {
                    rho[di + wx * dj] = r.powf(-s);
                    wt[di + wx * dj] = grid.cell_volume() / r.powi(n as i32);
                }
            }
        }
        let symmetric = matches!(phase, Phase::Trivial) || kind == Integrand::Modulus || f.is_quadratic();
        let t_max = cfg.truncation_radius.map_or(0.0, |r| r.powf(-s));

        let mut engine = Self {
            f,
            grid,
            n,
            bx,
            dims,
            nodes,
            s,
            kind,
            phase,
            symmetric,
            rho,
            wt,
            t_max,
            cfg,
            ext_dirs: Vec::new(),
            stencils: Vec::new(),
            rings: Vec::new(),
            shell_exact: Vec::new(),
            shell_lattice: Vec::new(),
            volume: grid.cell_volume(),
        };
        engine.ext_dirs = (0..engine.nodes.len()).map(|i| engine.exterior_geometry(i)).collect();
        engine.stencils = (0..engine.nodes.len()).map(|i| engine.local_stencil(a, i)).collect();
        engine.rings = (0..engine.nodes.len()).map(|i| engine.ring_count(i)).collect();
        engine.shell_exact = (0..=cfg.near_rings).map(|k| engine.square_probes(k, &[])).collect();
        engine.shell_lattice = (0..=cfg.near_rings).map(|k| engine.lattice_probes(k)).collect();
        Ok(engine)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }
    pub fn index_box(&self) -> IndexBox {
        self.bx
    }
    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    /// Box values of `u` in engine order.
    pub fn gather(&self, u: &GridField) -> Vec<C64> {
        self.nodes.iter().map(|&i| u.values()[i]).collect()
    }

    /// Position of a grid node in engine order, if it lies in the box.
    pub fn local_index(&self, grid_idx: usize) -> Option<usize> {
        let m = self.grid.multi(grid_idx);
        for k in 0..self.n {
            if m[k] < self.bx.lo[k] || m[k] > self.bx.hi[k] {
                return None;
            }
        }
        let a = m[0] - self.bx.lo[0];
        let b = if self.n == 2 { m[1] - self.bx.lo[1] } else { 0 };
        Some(a + self.dims[0] * b)
    }

    #[inline]
    fn local_multi(&self, i: usize) -> [usize; 2] {
        [i % self.dims[0], i / self.dims[0]]
    }

    #[inline]
    fn point(&self, i: usize) -> Point {
        self.grid.point(self.nodes[i])
    }

    // -- kernels -----------------------------------------------------------

    #[inline]
    fn psi(&self, z: C64) -> [f64; 2] {
        match self.kind {
            Integrand::Split => [self.f.value(z.re.abs()), self.f.value(z.im.abs())],
            Integrand::Modulus => [self.f.value(z.norm()), 0.0],
        }
    }

    /// Complex gradient of `psi`.
    #[inline]
    fn psi_grad(&self, z: C64) -> C64 {
        match self.kind {
            Integrand::Split => C64::new(
                self.f.density(z.re.abs()) * z.re.signum(),
                self.f.density(z.im.abs()) * z.im.signum(),
            ),
            Integrand::Modulus => {
                let r = z.norm();
                if r > 0.0 {
                    z * (self.f.density(r) / r)
                } else {
                    ZERO
                }
            }
        }
    }

    #[inline]
    fn log_psi(&self, z: C64) -> [f64; 2] {
        match self.kind {
            Integrand::Split => [self.f.log_integral(z.re.abs()), self.f.log_integral(z.im.abs())],
            Integrand::Modulus => [self.f.log_integral(z.norm()), 0.0],
        }
    }

    #[inline]
    fn log_psi_grad(&self, z: C64) -> C64 {
        let dphi = |x: f64| if x > 0.0 { self.f.value(x) / x } else { 0.0 };
        match self.kind {
            Integrand::Split => C64::new(dphi(z.re.abs()) * z.re.signum(), dphi(z.im.abs()) * z.im.signum()),
            Integrand::Modulus => {
                let r = z.norm();
                if r > 0.0 {
                    z * (dphi(r) / r)
                } else {
                    ZERO
                }
            }
        }
    }

    // -- geometry ----------------------------------------------------------

    fn exterior_geometry(&self, i: usize) -> Vec<ExtDir> {
        let (lo, hi) = self.grid.box_bounds(&self.bx);
        let x = self.point(i);
        let s = self.s;
        if self.n == 1 {
            return vec![
                ExtDir { e: [1.0, 0.0], weight: 1.0, rho: (hi[0] - x[0]).powf(-s) },
                ExtDir { e: [-1.0, 0.0], weight: 1.0, rho: (x[0] - lo[0]).powf(-s) },
            ];
        }
        let mut breaks: Vec<f64> = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
            .iter()
            .map(|c| (c[1] - x[1]).atan2(c[0] - x[0]))
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.push(breaks[0] + 2.0 * PI);
        let mut out = Vec::with_capacity(64);
        angular_arcs(&breaks, |th, w| {
            let e = [th.cos(), th.sin()];
            let mut rho = f64::INFINITY;
            for k in 0..2 {
                if e[k] > 1e-300 {
                    rho = rho.min((hi[k] - x[k]) / e[k]);
                } else if e[k] < -1e-300 {
                    rho = rho.min((lo[k] - x[k]) / e[k]);
                }
            }
            out.push(ExtDir { e, weight: w, rho: rho.powf(-s) });
        });
        out
    }

    fn local_stencil(&self, a: &MagneticPotential, i: usize) -> LocalStencil {
        let h = self.grid.spacing();
        let x = self.point(i);
        let m = self.local_multi(i);
        let mut st = LocalStencil::default();
        for k in 0..self.n {
            let mut xp = x;
            xp[k] += 0.5 * h;
            let mut xm = x;
            xm[k] -= 0.5 * h;
            let step = if k == 0 { 1 } else { self.dims[0] };
            if m[k] + 1 < self.dims[k] {
                st.up[k] = Some(i + step);
            }
            if m[k] > 0 {
                st.down[k] = Some(i - step);
            }
            st.up_coef[k] = C64::from_polar(1.0, -h * a.eval(xp)[k]) / (2.0 * h);
            st.down_coef[k] = -C64::from_polar(1.0, h * a.eval(xm)[k]) / (2.0 * h);
        }
        st
    }

    fn ring_count(&self, i: usize) -> usize {
        let m = self.local_multi(i);
        let mut k = self.cfg.near_rings;
        for ax in 0..self.n {
            k = k.min(m[ax]).min(self.dims[ax] - 1 - m[ax]);
        }
        k
    }

    /// Exact-integral probes over the square of half-width `(k + ½)h`;
    /// `extra` adds angular breakpoints where the integrand has kinks.
    fn square_probes(&self, k: usize, extra: &[f64]) -> Vec<Probe> {
        let r = (k as f64 + 0.5) * self.grid.spacing();
        let q = 1.0 - self.s;
        if self.n == 1 {
            let scale = r.powf(q);
            return vec![
                Probe { e: [1.0, 0.0], scale, coef: 1.0 / q },
                Probe { e: [-1.0, 0.0], scale, coef: 1.0 / q },
            ];
        }
        let mut breaks: Vec<f64> = (0..4).map(|j| PI / 4.0 + j as f64 * PI / 2.0).collect();
        for &b in extra {
            breaks.push((b - PI / 4.0).rem_euclid(2.0 * PI) + PI / 4.0);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.push(PI / 4.0 + 2.0 * PI);
        let mut out = Vec::with_capacity(64 + 16 * extra.len());
        angular_arcs(&breaks, |th, w| {
            let e = [th.cos(), th.sin()];
            let rad = r / e[0].abs().max(e[1].abs());
            out.push(Probe { e, scale: rad.powf(q), coef: w / q });
        });
        out
    }

    fn lattice_probes(&self, k: usize) -> Vec<(Point, f64, f64)> {
        let h = self.grid.spacing();
        let k = k as isize;
        let ky = if self.n == 2 { k } else { 0 };
        let mut out = Vec::new();
        for b in -ky..=ky {
            for a in -k..=k {
                if a == 0 && b == 0 {
                    continue;
                }
                let v = [a as f64 * h, b as f64 * h];
                let r = norm(v);
                out.push((v, self.volume / r.powi(self.n as i32), r.powf(-self.s)));
            }
        }
        out
    }

    // -- pieces ------------------------------------------------------------

    #[inline]
    fn phase_factor(&self, i: usize, j: usize, off: usize) -> C64 {
        match &self.phase {
            Phase::Trivial => C64::new(1.0, 0.0),
            Phase::Table(t, _) => t[off],
            Phase::General(a) => C64::from_polar(1.0, a.phase(self.point(i), self.point(j))),
        }
    }

    /// Row `i` of the pair sum, the exterior integrals of node `i`, and
    /// (optionally) the gradient entry from both.
    fn row(&self, i: usize, u: &[C64], mode: RowMode) -> RowOut {
        let [ia, ib] = self.local_multi(i);
        let (nx, ny) = (self.dims[0], self.dims[1]);
        let wx = 2 * nx - 1;
        let ui = u[i];
        let mut out = RowOut::default();
        let half = mode == RowMode::Half && self.symmetric;
        let jb0 = if half { ib } else { 0 };
        for jb in jb0..ny {
            let base = wx * (jb + ny - 1 - ib) + (nx - 1) - ia;
            let ja0 = if half && jb == ib { ia + 1 } else { 0 };
            for ja in ja0..nx {
                let j = ja + nx * jb;
                if j == i {
                    continue;
                }
                let off = base + ja;
                let rho = self.rho[off];
                let w = self.wt[off];
                let phi = self.phase_factor(i, j, off);
                let d = (ui - phi * u[j]) * rho;
                let p = self.psi(d);
                out.pairs[0] += w * p[0];
                out.pairs[1] += w * p[1];
                if mode == RowMode::Gradient {
                    if self.symmetric {
                        out.grad += self.psi_grad(d) * (2.0 * w * rho);
                    } else {
                        let dji = (u[j] - phi.conj() * ui) * rho;
                        debug_assert!((dji.norm() - d.norm()).abs() <= 1e-12 * (1.0 + d.norm()));
                        out.grad += (self.psi_grad(d) - phi * self.psi_grad(dji)) * (w * rho);
                    }
                }
            }
        }
        if half {
            out.pairs[0] *= 2.0;
            out.pairs[1] *= 2.0;
        }
        self.exterior(i, ui, mode, &mut out);
        out
    }

    fn exterior(&self, i: usize, ui: C64, mode: RowMode, out: &mut RowOut) {
        if ui == ZERO {
            return;
        }
        let inv_s = 1.0 / self.s;
        let grad = mode == RowMode::Gradient;
        // the mirror half (x outside, y = node) equals the direct half when
        // the integrand ignores the phase; pointwise rows skip it
        let mirror = mode != RowMode::Pointwise;
        let fold = if mirror && self.symmetric { 2.0 } else { 1.0 };
        for dir in &self.ext_dirs[i] {
            let c = dir.weight * inv_s;
            let near = self.log_psi(ui * dir.rho);
            let far = self.log_psi(ui * self.t_max);
            out.ext[0] += fold * c * (near[0] - far[0]);
            out.ext[1] += fold * c * (near[1] - far[1]);
            out.tail += 2.0 * c * (far[0] + far[1]);
            if grad {
                let g = self.log_psi_grad(ui * dir.rho) * dir.rho - self.log_psi_grad(ui * self.t_max) * self.t_max;
                out.grad += g * (fold * c);
            }
            if mirror && !self.symmetric {
                self.mirror_radial(i, ui, dir, grad, out);
            }
        }
    }

    /// `(1/s) ∫ Ψ(e^{iθ} u t) dt/t` along one exterior ray from node `i`.
    fn mirror_radial(&self, i: usize, ui: C64, dir: &ExtDir, grad: bool, out: &mut RowOut) {
        
        let y = self.point(i);
        let c = dir.weight / self.s;
        let panels = (60.0 / self.f.p_minus()).ceil() as usize + 2;
        log_panels(dir.rho, self.t_max, panels.min(61), |t, w| {
            let r = t.powf(-1.0 / self.s);
            let x = [y[0] + r * dir.e[0], y[1] + r * dir.e[1]];
            let th = match &self.phase {
                Phase::General(a) => a.phase(x, y),
                Phase::Table(_, c) => r * dot(dir.e, *c),
                Phase::Trivial => 0.0,
            };
            let phi = C64::from_polar(1.0, th);
            let p = self.psi(phi * ui * t);
            out.ext[0] += c * w * p[0];
            out.ext[1] += c * w * p[1];
            if grad {
                out.grad += phi.conj() * self.psi_grad(phi * ui * t) * (c * w * t);
            }
        });
    }

    /// Magnetic central differences at node `i`.
    #[inline]
    fn taylor_gradient(&self, i: usize, u: &[C64]) -> [C64; 2] {
        let st = &self.stencils[i];
        let mut w = [ZERO; 2];
        for k in 0..self.n {
            if let Some(j) = st.up[k] {
                w[k] += st.up_coef[k] * u[j];
            }
            if let Some(j) = st.down[k] {
                w[k] += st.down_coef[k] * u[j];
            }
        }
        w
    }

    fn shell(&self, i: usize, u: &[C64], grad: bool) -> ShellOut {
        let w = self.taylor_gradient(i, u);
        let mut out = ShellOut::default();
        if w[0] == ZERO && w[1] == ZERO {
            return out;
        }
        let k = self.rings[i];
        let custom;
        let exact: &[Probe] = if self.n == 2 && !self.f.is_quadratic() && self.kind == Integrand::Split {
            let mut kinks = Vec::with_capacity(4);
            for v in [[w[0].re, w[1].re], [w[0].im, w[1].im]] {
                if v != [0.0, 0.0] {
                    let th = v[1].atan2(v[0]);
                    kinks.push(th + PI / 2.0);
                    kinks.push(th - PI / 2.0);
                }
            }
            custom = self.square_probes(k, &kinks);
            &custom
        } else {
            &self.shell_exact[k]
        };
        for pr in exact {
            let z = (w[0] * pr.e[0] + w[1] * pr.e[1]) * pr.scale;
            let v = self.log_psi(z);
            out.val[0] += pr.coef * v[0];
            out.val[1] += pr.coef * v[1];
            if grad {
                let g = self.log_psi_grad(z) * (pr.coef * pr.scale);
                out.dw[0] += g * pr.e[0];
                out.dw[1] += g * pr.e[1];
            }
        }
        for &(v, c, rho) in &self.shell_lattice[k] {
            let z = (w[0] * v[0] + w[1] * v[1]) * rho;
            let p = self.psi(z);
            out.val[0] -= c * p[0];
            out.val[1] -= c * p[1];
            if grad {
                let g = self.psi_grad(z) * (c * rho);
                out.dw[0] -= g * v[0];
                out.dw[1] -= g * v[1];
            }
        }
        out
    }

    fn block_sum(&self, xs: &[f64]) -> f64 {
        xs.chunks(self.cfg.reduction_block).map(|b| b.iter().sum::<f64>()).fold(0.0, |a, b| a + b)
    }

    fn rows(&self, u: &[C64], mode: RowMode) -> Vec<RowOut> {
        (0..self.nodes.len())
            .into_par_iter()
            .with_min_len(self.cfg.reduction_block)
            .map(|i| self.row(i, u, mode))
            .collect()
    }

    fn shells(&self, u: &[C64], grad: bool) -> Vec<ShellOut> {
        (0..self.nodes.len())
            .into_par_iter()
            .with_min_len(self.cfg.reduction_block)
            .map(|i| self.shell(i, u, grad))
            .collect()
    }

    fn check(&self, u: &[C64]) -> Result<()> {
        if u.len() != self.nodes.len() {
            return Err(Error::Input(format!("expected {} box values, got {}", self.nodes.len(), u.len())));
        }
        Ok(())
    }

    /// Value of the discrete double integral.
    pub fn energy(&self, u: &[C64]) -> Result<Breakdown> {
        self.check(u)?;
        let rows = self.rows(u, RowMode::Half);
        let shells = self.shells(u, false);
        Ok(self.assemble(&rows, &shells))
    }

    fn assemble(&self, rows: &[RowOut], shells: &[ShellOut]) -> Breakdown {
        let pairs: Vec<f64> = rows.iter().map(|r| r.pairs[0] + r.pairs[1]).collect();
        let ext: Vec<f64> = rows.iter().map(|r| r.ext[0] + r.ext[1]).collect();
        let tail: Vec<f64> = rows.iter().map(|r| r.tail).collect();
        let sh: Vec<f64> = shells.iter().map(|r| r.val[0] + r.val[1]).collect();
        let vol = self.volume;
        let pairs = vol * self.block_sum(&pairs);
        let exterior = vol * self.block_sum(&ext);
        let shell = vol * self.block_sum(&sh);
        let tail = vol * self.block_sum(&tail);
        let total = pairs + exterior + if self.cfg.shell_policy == ShellPolicy::Taylor { shell } else { 0.0 };
        Breakdown { pairs, exterior, shell, tail, total }
    }

    /// Value and gradient (`∂/∂Re u + i ∂/∂Im u` per box node).
    pub fn energy_and_gradient(&self, u: &[C64]) -> Result<(Breakdown, Vec<C64>)> {
        self.check(u)?;
        let rows = self.rows(u, RowMode::Gradient);
        let taylor = self.cfg.shell_policy == ShellPolicy::Taylor;
        let shells = self.shells(u, taylor);
        let b = self.assemble(&rows, &shells);
        let vol = self.volume;
        let mut grad: Vec<C64> = rows.iter().map(|r| r.grad * vol).collect();
        if taylor {
            for (m, sh) in shells.iter().enumerate() {
                let st = &self.stencils[m];
                for k in 0..self.n {
                    if sh.dw[k] == ZERO {
                        continue;
                    }
                    if let Some(j) = st.up[k] {
                        grad[j] += st.up_coef[k].conj() * sh.dw[k] * vol;
                    }
                    if let Some(j) = st.down[k] {
                        grad[j] += st.down_coef[k].conj() * sh.dw[k] * vol;
                    }
                }
            }
        }
        Ok((b, grad))
    }

    /// The inner integral `∫ Ψ(D(x_i, y)) dy/|x_i − y|^n` at a single node,
    /// split into its `Re` and `Im` parts (the `Im` part is 0 for `Modulus`).
    pub fn pointwise(&self, i: usize, u: &[C64]) -> Result<[f64; 2]> {
        self.check(u)?;
        if i >= self.nodes.len() {
            return Err(Error::Input("node outside the active box".into()));
        }
        let row = self.row(i, u, RowMode::Pointwise);
        let sh = self.shell(i, u, false);
        let taylor = if self.cfg.shell_policy == ShellPolicy::Taylor { 1.0 } else { 0.0 };
        Ok([
            row.pairs[0] + row.ext[0] + taylor * sh.val[0],
            row.pairs[1] + row.ext[1] + taylor * sh.val[1],
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowMode {
    Half,
    Gradient,
    Pointwise,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample, TestFunction};

    fn gauss_engine<'a>(
        f: &'a OrliczFunction,
        a: &'a MagneticPotential,
        s: f64,
        cfg: QuadratureConfig,
    ) -> (PairEngine<'a>, Vec<C64>) {
        let grid = Grid::new(1, 6.0, 1024).unwrap();
        let u = sample(&TestFunction::Gaussian { sigma: 1.0 }, &grid).unwrap();
        let e = PairEngine::new(f, a, grid, grid.full_box(), s, Integrand::Split, cfg).unwrap();
        let v = e.gather(&u);
        (e, v)
    }

    #[test]
    fn gaussian_half_power_at_one_half_is_pi() {
        let f = OrliczFunction::power(2.0).unwrap();
        let a = MagneticPotential::zero(1);
        let (e, v) = gauss_engine(&f, &a, 0.5, QuadratureConfig::default());
        let b = e.energy(&v).unwrap();
        assert!((b.total - PI).abs() < 1e-3 * PI, "{b:?}");
    }

    #[test]
    fn gradient_matches_half_loop_energy() {
        let f = OrliczFunction::blend(1.5, 3.0).unwrap();
        let a = MagneticPotential::constant(1, [0.7, 0.0]);
        let (e, v) = gauss_engine(&f, &a, 0.6, QuadratureConfig::default());
        let b = e.energy(&v).unwrap();
        let (b2, _) = e.energy_and_gradient(&v).unwrap();
        assert!((b.total - b2.total).abs() < 1e-12 * b.total);
    }
}
