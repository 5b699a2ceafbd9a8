//! Uniform grids, zero-extended complex fields, magnetic potentials and the
//! approximation operators (mollification, truncation, gauge shift,
//! modulus) applied to them.

use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of `R^n`, `n ≤ 2`; the second coordinate is 0 in 1D.
pub type Point = [f64; 2];

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Cell-centred uniform box grid on `[-L, L]^n` with `N` points per axis.
///
/// Node `i` on an axis sits at `-L + (i + 1/2) h`, `h = 2L/N`, so the
/// cells of the nodes tile the box exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    half_width: f64,
    points: usize,
}

/// Inclusive index box `lo[k] ..= hi[k]` on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl IndexBox {
    pub fn extent(&self, axis: usize) -> usize {
        self.hi[axis] - self.lo[axis] + 1
    }
}

impl Grid {
    pub fn new(n: usize, half_width: f64, points: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::Input(format!("grid dimension {n} not in {{1, 2}}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Input(format!("half width {half_width} must be positive")));
        }
        if points < 8 || !points.is_multiple_of(2) {
            return Err(Error::Input(format!("points per axis {points} must be even and >= 8")));
        }
        Ok(Self { n, half_width, points })
    }

    /// Grid whose nodes hit `±extent` exactly, leaving `margin` nodes
    /// beyond each end.
    pub fn with_boundary_nodes(n: usize, points: usize, extent: f64, margin: usize) -> Result<Self> {
        if points < 2 * margin + 3 {
            return Err(Error::Input("margin too large for the grid".into()));
        }
        let l = extent * points as f64 / (points - 1 - 2 * margin) as f64;
        Self::new(n, l, points)
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn points(&self) -> usize {
        self.points
    }
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }
    /// `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }
    pub fn len(&self) -> usize {
        self.points.pow(self.n as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    #[inline]
    pub fn multi(&self, idx: usize) -> [usize; 2] {
        if self.n == 1 {
            [idx, 0]
        } else {
            [idx % self.points, idx / self.points]
        }
    }

    #[inline]
    pub fn flat(&self, m: [usize; 2]) -> usize {
        if self.n == 1 {
            m[0]
        } else {
            m[0] + self.points * m[1]
        }
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let m = self.multi(idx);
        if self.n == 1 {
            [self.coord(m[0]), 0.0]
        } else {
            [self.coord(m[0]), self.coord(m[1])]
        }
    }

    pub fn points_iter(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Neighbour of `idx` shifted by `delta` along `axis`, if it lies on the grid.
    #[inline]
    pub fn shifted(&self, idx: usize, axis: usize, delta: isize) -> Option<usize> {
        let mut m = self.multi(idx);
        let v = m[axis] as isize + delta;
        if v < 0 || v >= self.points as isize {
            return None;
        }
        m[axis] = v as usize;
        Some(self.flat(m))
    }

    /// Index of the node closest to `x`, if it coincides with `x` to 1e-9 h.
    pub fn node_at(&self, x: Point) -> Option<usize> {
        let h = self.spacing();
        let mut m = [0usize; 2];
        for (k, mk) in m.iter_mut().enumerate().take(self.n) {
            let f = (x[k] + self.half_width) / h - 0.5;
            let r = f.round();
            if (f - r).abs() > 1e-9 || r < 0.0 || r >= self.points as f64 {
                return None;
            }
            *mk = r as usize;
        }
        Some(self.flat(m))
    }

    pub fn full_box(&self) -> IndexBox {
        let top = self.points - 1;
        IndexBox { lo: [0, 0], hi: [top, if self.n == 2 { top } else { 0 }] }
    }

    /// Flat indices of the nodes in `b`, in storage order.
    pub fn box_indices(&self, b: &IndexBox) -> Vec<usize> {
        let mut v = Vec::new();
        let (y0, y1) = if self.n == 2 { (b.lo[1], b.hi[1]) } else { (0, 0) };
        for j in y0..=y1 {
            for i in b.lo[0]..=b.hi[0] {
                v.push(self.flat([i, j]));
            }
        }
        v
    }

    /// Outer boundary of the cells of `b`: `[lo_k - h/2, hi_k + h/2]`.
    pub fn box_bounds(&self, b: &IndexBox) -> ([f64; 2], [f64; 2]) {
        let h = self.spacing();
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for k in 0..self.n {
            lo[k] = self.coord(b.lo[k]) - 0.5 * h;
            hi[k] = self.coord(b.hi[k]) + 0.5 * h;
        }
        (lo, hi)
    }
}

/// Complex samples of a field on a grid, extended by zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<Complex64>,
    support_radius: f64,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Input("field values must be finite".into()));
        }
        let support_radius = support_of(&grid, &values);
        Ok(Self { grid, values, support_radius })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()], support_radius: 0.0 }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> Complex64) -> Result<Self> {
        let values = grid.points_iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
    /// Sup-norm radius `max |x|_∞` over the non-zero nodes.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }

    /// Value at an integer offset from `idx`, zero off the grid.
    #[inline]
    pub fn value_shifted(&self, idx: usize, axis: usize, delta: isize) -> Complex64 {
        match self.grid.shifted(idx, axis, delta) {
            Some(j) => self.values[j],
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn value_at(&self, x: Point) -> Option<Complex64> {
        self.grid.node_at(x).map(|i| self.values[i])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        let values = self.values.iter().map(|v| v * alpha).collect();
        Self { grid: self.grid, values, support_radius: if alpha == Complex64::new(0.0, 0.0) { 0.0 } else { self.support_radius } }
    }

    pub fn map(&self, f: impl Fn(Point, Complex64) -> Complex64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| f(self.grid.point(i), *v))
            .collect();
        Self::new(self.grid, values)
    }

    pub fn combine(&self, other: &GridField, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Input("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Self::new(self.grid, values)
    }

    pub fn sub(&self, other: &GridField) -> Result<Self> {
        self.combine(other, |a, b| a - b)
    }

    /// `Σ u h^n`.
    pub fn mass(&self) -> Complex64 {
        let dv = self.grid.cell_volume();
        self.values.iter().sum::<Complex64>() * dv
    }

    /// Smallest index box containing every non-zero value.
    pub fn support_box(&self) -> Option<IndexBox> {
        let mut lo = [usize::MAX; 2];
        let mut hi = [0usize; 2];
        let mut any = false;
        for (i, v) in self.values.iter().enumerate() {
            if v.re != 0.0 || v.im != 0.0 {
                any = true;
                let m = self.grid.multi(i);
                for k in 0..2 {
                    lo[k] = lo[k].min(m[k]);
                    hi[k] = hi[k].max(m[k]);
                }
            }
        }
        any.then_some(IndexBox { lo, hi })
    }

    /// Central magnetic differences at `idx`,
    /// `(e^{-ihA_k⁺} u(x+he_k) − e^{ihA_k⁻} u(x−he_k)) / 2h ≈ ∂_k u − i A_k u`,
    /// with `A_k^±` the component of `A` at the edge midpoints `x ± he_k/2`.
    pub fn magnetic_gradient(&self, a: &MagneticPotential, idx: usize) -> [Complex64; 2] {
        let mut out = [Complex64::new(0.0, 0.0); 2];
        let stencil = self.magnetic_stencil(a, idx);
        for (k, st) in stencil.iter().enumerate().take(self.grid.n) {
            let up = st.up.map_or(Complex64::new(0.0, 0.0), |j| self.values[j] * st.up_coef);
            let down = st.down.map_or(Complex64::new(0.0, 0.0), |j| self.values[j] * st.down_coef);
            out[k] = up + down;
        }
        out
    }

    /// Coefficients of the central magnetic difference at `idx`.
    pub(crate) fn magnetic_stencil(&self, a: &MagneticPotential, idx: usize) -> [Stencil; 2] {
        let g = &self.grid;
        let h = g.spacing();
        let x = g.point(idx);
        let mut out = [Stencil::default(); 2];
        for (k, st) in out.iter_mut().enumerate().take(g.n) {
            let mut xp = x;
            xp[k] += 0.5 * h;
            let mut xm = x;
            xm[k] -= 0.5 * h;
            let ap = a.eval(xp)[k];
            let am = a.eval(xm)[k];
            st.up = g.shifted(idx, k, 1);
            st.down = g.shifted(idx, k, -1);
            st.up_coef = Complex64::from_polar(1.0, -h * ap) / (2.0 * h);
            st.down_coef = -Complex64::from_polar(1.0, h * am) / (2.0 * h);
        }
        out
    }
}

/// Linear stencil `w_k = up_coef·u[up] + down_coef·u[down]`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Stencil {
    pub up: Option<usize>,
    pub down: Option<usize>,
    pub up_coef: Complex64,
    pub down_coef: Complex64,
}

fn support_of(grid: &Grid, values: &[Complex64]) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
        .map(|(i, _)| {
            let p = grid.point(i);
            p[0].abs().max(p[1].abs())
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Magnetic potentials.

#[derive(Debug, Clone, PartialEq)]
enum PotentialKind {
    /// `A(x) = offset + M x`.
    Affine { offset: Point, matrix: [[f64; 2]; 2] },
    /// Bilinear interpolation of node samples plus a constant offset.
    Sampled { grid: Grid, values: Vec<Point>, offset: Point },
}

/// Vector potential `A: R^n → R^n` with certified bounds on the grid box.
#[derive(Debug, Clone, PartialEq)]
pub struct MagneticPotential {
    n: usize,
    kind: PotentialKind,
    sup_norm: f64,
    lipschitz_bound: f64,
    label: String,
}

impl MagneticPotential {
    pub fn zero(n: usize) -> Self {
        Self::constant(n, [0.0, 0.0])
    }

    pub fn constant(n: usize, c: Point) -> Self {
        let c = if n == 1 { [c[0], 0.0] } else { c };
        Self {
            n,
            kind: PotentialKind::Affine { offset: c, matrix: [[0.0; 2]; 2] },
            sup_norm: norm(c),
            lipschitz_bound: 0.0,
            label: if n == 1 { format!("const:{}", c[0]) } else { format!("const:{},{}", c[0], c[1]) },
        }
    }

    /// Linear shear `A(x) = M x`; bounds certified on `|x|_∞ ≤ extent`.
    pub fn shear(n: usize, matrix: [[f64; 2]; 2], extent: f64) -> Self {
        let mut m = matrix;
        if n == 1 {
            m = [[matrix[0][0], 0.0], [0.0, 0.0]];
        }
        let frob = m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            n,
            kind: PotentialKind::Affine { offset: [0.0, 0.0], matrix: m },
            sup_norm: frob * extent * (n as f64).sqrt(),
            lipschitz_bound: frob,
            label: format!("shear:{:?}", m),
        }
    }

    /// Potential sampled on the nodes of `grid`.
    pub fn sampled(grid: Grid, values: Vec<Point>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input("potential sample count does not match grid".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("potential samples must be finite".into()));
        }
        let h = grid.spacing();
        let sup = values.iter().map(|v| norm(*v)).fold(0.0, f64::max);
        let mut lip = 0.0f64;
        for i in 0..grid.len() {
            for k in 0..grid.dim() {
                if let Some(j) = grid.shifted(i, k, 1) {
                    let d = [values[j][0] - values[i][0], values[j][1] - values[i][1]];
                    lip = lip.max(norm(d) / h);
                }
            }
        }
        Ok(Self {
            n: grid.dim(),
            kind: PotentialKind::Sampled { grid, values, offset: [0.0, 0.0] },
            sup_norm: sup,
            lipschitz_bound: lip * (grid.dim() as f64).sqrt(),
            label: "sampled".into(),
        })
    }

    /// Parses `zero`, `const:a[,b]` or `shear:m11[,m12,m21,m22]`.
    pub fn parse(spec: &str, n: usize, extent: f64) -> Result<Self> {
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Input(format!("bad number '{v}' in potential '{spec}'")))
                })
                .collect()
        };
        let (head, tail) = spec.split_once(':').unwrap_or((spec, ""));
        match head {
            "zero" | "0" => Ok(Self::zero(n)),
            "const" => {
                let v = nums(tail)?;
                match (n, v.as_slice()) {
                    (1, [a]) => Ok(Self::constant(1, [*a, 0.0])),
                    (2, [a]) => Ok(Self::constant(2, [*a, *a])),
                    (2, [a, b]) => Ok(Self::constant(2, [*a, *b])),
                    _ => Err(Error::Input(format!("potential '{spec}' does not fit dimension {n}"))),
                }
            }
            "shear" => {
                let v = nums(tail)?;
                match (n, v.as_slice()) {
                    (1, [a]) => Ok(Self::shear(1, [[*a, 0.0], [0.0, 0.0]], extent)),
                    (2, [a, b, c, d]) => Ok(Self::shear(2, [[*a, *b], [*c, *d]], extent)),
                    _ => Err(Error::Input(format!("potential '{spec}' does not fit dimension {n}"))),
                }
            }
            _ => Err(Error::Input(format!("unknown potential '{spec}'"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }
    pub fn label(&self) -> &str {
        &self.label
    }

    /// True when `A ≡ 0`.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            PotentialKind::Affine { offset, matrix } => {
                offset.iter().all(|v| *v == 0.0) && matrix.iter().flatten().all(|v| *v == 0.0)
            }
            PotentialKind::Sampled { .. } => false,
        }
    }

    /// `Some(c)` when `A ≡ c` is constant.
    pub fn as_constant(&self) -> Option<Point> {
        match &self.kind {
            PotentialKind::Affine { offset, matrix } if matrix.iter().flatten().all(|v| *v == 0.0) => Some(*offset),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: Point) -> Point {
        match &self.kind {
            PotentialKind::Affine { offset, matrix } => [
                offset[0] + matrix[0][0] * x[0] + matrix[0][1] * x[1],
                offset[1] + matrix[1][0] * x[0] + matrix[1][1] * x[1],
            ],
            PotentialKind::Sampled { grid, values, offset } => {
                let v = interpolate(grid, values, x);
                [v[0] + offset[0], v[1] + offset[1]]
            }
        }
    }

    /// Phase `(x − y)·A((x + y)/2)` of the midpoint prescription.
    #[inline]
    pub fn phase(&self, x: Point, y: Point) -> f64 {
        let mid = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
        dot([x[0] - y[0], x[1] - y[1]], self.eval(mid))
    }

    /// `A + c`.
    pub fn shifted(&self, c: Point) -> Self {
        let c = if self.n == 1 { [c[0], 0.0] } else { c };
        let mut out = self.clone();
        match &mut out.kind {
            PotentialKind::Affine { offset, .. } | PotentialKind::Sampled { offset, .. } => {
                offset[0] += c[0];
                offset[1] += c[1];
            }
        }
        out.sup_norm += norm(c);
        out.label = format!("{}+[{},{}]", self.label, c[0], c[1]);
        out
    }
}

fn interpolate(grid: &Grid, values: &[Point], x: Point) -> Point {
    let h = grid.spacing();
    let n = grid.points();
    let locate = |c: f64| -> (usize, f64) {
        let f = ((c + grid.half_width()) / h - 0.5).clamp(0.0, (n - 1) as f64);
        let i = (f.floor() as usize).min(n - 2);
        (i, f - i as f64)
    };
    let (i0, t0) = locate(x[0]);
    if grid.dim() == 1 {
        let a = values[i0];
        let b = values[i0 + 1];
        return [a[0] + t0 * (b[0] - a[0]), a[1] + t0 * (b[1] - a[1])];
    }
    let (i1, t1) = locate(x[1]);
    let v = |i: usize, j: usize| values[grid.flat([i, j])];
    let mut out = [0.0; 2];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (1.0 - t0) * (1.0 - t1) * v(i0, i1)[k]
            + t0 * (1.0 - t1) * v(i0 + 1, i1)[k]
            + (1.0 - t0) * t1 * v(i0, i1 + 1)[k]
            + t0 * t1 * v(i0 + 1, i1 + 1)[k];
    }
    out
}

// ---------------------------------------------------------------------------
// Domains.

/// Axis-aligned open box `Ω = ∏ (lo_k, hi_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    n: usize,
    lo: Point,
    hi: Point,
}

impl Domain {
    pub fn new(n: usize, lo: Point, hi: Point) -> Result<Self> {
        for k in 0..n {
            if !(lo[k] < hi[k]) {
                return Err(Error::Input(format!("empty domain along axis {k}")));
            }
        }
        Ok(Self { n, lo, hi })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(1, [a, 0.0], [b, 0.0])
    }

    pub fn square(a: f64, b: f64) -> Result<Self> {
        Self::new(2, [a, a], [b, b])
    }

    /// Parses `a:b` (1D) or `a:b,c:d` (2D).
    pub fn parse(spec: &str, n: usize) -> Result<Self> {
        let axes: Vec<&str> = spec.split(',').collect();
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        let bad = || Error::Input(format!("bad domain '{spec}'"));
        let ranges: Vec<(f64, f64)> = axes
            .iter()
            .map(|ax| {
                let (a, b) = ax.split_once(':').ok_or_else(bad)?;
                Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
            })
            .collect::<Result<_>>()?;
        for k in 0..n {
            let (a, b) = if ranges.len() == 1 { ranges[0] } else { *ranges.get(k).ok_or_else(bad)? };
            lo[k] = a;
            hi[k] = b;
        }
        Self::new(n, lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn bounds(&self) -> (Point, Point) {
        (self.lo, self.hi)
    }

    pub fn diameter(&self) -> f64 {
        (0..self.n).map(|k| (self.hi[k] - self.lo[k]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: Point) -> bool {
        (0..self.n).all(|k| x[k] > self.lo[k] && x[k] < self.hi[k])
    }

    /// Nodes strictly inside `Ω` (points within `1e-9 h` of `∂Ω` excluded).
    pub fn dof_box(&self, grid: &Grid) -> Result<IndexBox> {
        if grid.dim() != self.n {
            return Err(Error::Input("domain and grid dimensions differ".into()));
        }
        let l = grid.half_width();
        for k in 0..self.n {
            if self.lo[k] <= -l || self.hi[k] >= l {
                return Err(Error::Input("domain must lie strictly inside the grid".into()));
            }
        }
        let h = grid.spacing();
        let tol = 1e-9 * h;
        let mut b = IndexBox { lo: [0, 0], hi: [0, 0] };
        for k in 0..self.n {
            let inside: Vec<usize> = (0..grid.points())
                .filter(|&i| {
                    let c = grid.coord(i);
                    c > self.lo[k] + tol && c < self.hi[k] - tol
                })
                .collect();
            if inside.len() < 2 {
                return Err(Error::Input("domain contains fewer than two nodes per axis".into()));
            }
            b.lo[k] = inside[0];
            b.hi[k] = *inside.last().unwrap();
        }
        Ok(b)
    }
}

// ---------------------------------------------------------------------------
// Analytic test functions.

/// Named analytic test functions.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `exp(−|x|²/σ²)`.
    Gaussian { sigma: f64 },
    /// `(1 − |x/R|²)₊²`.
    Bump { radius: f64 },
    /// `∏ (1 − x_k²)₊`.
    Parabola,
    /// `e^{i c·x} u₀(x)`.
    PlanePhase { c: Point, base: Box<TestFunction> },
    /// Constant value everywhere on the grid.
    Constant { value: f64 },
    /// Indicator of the open ball `|x| < R`.
    Ball { radius: f64 },
}

impl TestFunction {
    /// Parses `gaussian:σ`, `bump:R`, `parabola`, `const:v`, `ball:R`,
    /// `phase:c1[,c2]:<base>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Input(format!("unknown test function '{spec}'"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let (head, tail) = spec.split_once(':').unwrap_or((spec, ""));
        match head {
            "gaussian" => Ok(Self::Gaussian { sigma: if tail.is_empty() { 1.0 } else { num(tail)? } }),
            "bump" => Ok(Self::Bump { radius: if tail.is_empty() { 1.0 } else { num(tail)? } }),
            "parabola" => Ok(Self::Parabola),
            "const" => Ok(Self::Constant { value: num(tail)? }),
            "ball" => Ok(Self::Ball { radius: num(tail)? }),
            "phase" => {
                let (c, base) = tail.split_once(':').ok_or_else(bad)?;
                let cs: Vec<f64> = c.split(',').map(num).collect::<Result<_>>()?;
                let c = match cs.as_slice() {
                    [a] => [*a, 0.0],
                    [a, b] => [*a, *b],
                    _ => return Err(bad()),
                };
                Ok(Self::PlanePhase { c, base: Box::new(Self::parse(base)?) })
            }
            _ => Err(bad()),
        }
    }

    pub fn eval(&self, x: Point) -> Complex64 {
        let r2 = dot(x, x);
        match self {
            Self::Gaussian { sigma } => Complex64::new((-r2 / (sigma * sigma)).exp(), 0.0),
            Self::Bump { radius } => {
                let q = 1.0 - r2 / (radius * radius);
                Complex64::new(if q > 0.0 { q * q } else { 0.0 }, 0.0)
            }
            Self::Parabola => {
                let f = |c: f64| (1.0 - c * c).max(0.0);
                Complex64::new(f(x[0]) * if x[1] == 0.0 { 1.0 } else { f(x[1]) }, 0.0)
            }
            Self::PlanePhase { c, base } => Complex64::from_polar(1.0, dot(*c, x)) * base.eval(x),
            Self::Constant { value } => Complex64::new(*value, 0.0),
            Self::Ball { radius } => Complex64::new(if r2 < radius * radius { 1.0 } else { 0.0 }, 0.0),
        }
    }
}

/// Samples `expr` at the grid nodes.
pub fn sample(expr: &TestFunction, grid: &Grid) -> Result<GridField> {
    match expr {
        TestFunction::Gaussian { sigma } | TestFunction::Bump { radius: sigma } | TestFunction::Ball { radius: sigma }
            if !(sigma.is_finite() && *sigma > 0.0) =>
        {
            return Err(Error::Input(format!("test function parameter {sigma} must be positive")))
        }
        _ => {}
    }
    let n = grid.dim();
    GridField::from_fn(*grid, |p| {
        let x = if n == 1 { [p[0], 0.0] } else { p };
        if n == 1 {
            // the parabola product must not see the padding coordinate
            match expr {
                TestFunction::Parabola => Complex64::new((1.0 - x[0] * x[0]).max(0.0), 0.0),
                _ => expr.eval(x),
            }
        } else {
            expr.eval(x)
        }
    })
}

/// Parses and samples in one step.
pub fn sample_named(spec: &str, grid: &Grid) -> Result<GridField> {
    sample(&TestFunction::parse(spec)?, grid)
}

// ---------------------------------------------------------------------------
// Approximation operators.

/// Convolution with the normalised bump mollifier `ρ_ε`, supported in `B_ε`.
/// Weights are renormalised to unit discrete mass.
pub fn mollify(u: &GridField, eps: f64) -> Result<GridField> {
    let grid = *u.grid();
    let h = grid.spacing();
    if !(eps.is_finite() && eps >= 2.0 * h) {
        return Err(Error::Resolution { eps, min: 2.0 * h });
    }
    let reach = (eps / h).ceil() as isize;
    let n = grid.dim();
    let mut offsets: Vec<([isize; 2], f64)> = Vec::new();
    let yr = if n == 2 { reach } else { 0 };
    for dj in -yr..=yr {
        for di in -reach..=reach {
            let r = h * ((di * di + dj * dj) as f64).sqrt() / eps;
            if r < 1.0 {
                offsets.push(([di, dj], (-1.0 / (1.0 - r * r)).exp()));
            }
        }
    }
    let total: f64 = offsets.iter().map(|o| o.1).sum();
    for o in &mut offsets {
        o.1 /= total;
    }
    let np = grid.points() as isize;
    let values: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let m = grid.multi(idx);
            let mut acc = Complex64::new(0.0, 0.0);
            for (d, w) in &offsets {
                let i = m[0] as isize - d[0];
                let j = m[1] as isize - d[1];
                if i < 0 || i >= np || j < 0 || (n == 2 && j >= np) || (n == 1 && j != 0) {
                    continue;
                }
                acc += u.values()[grid.flat([i as usize, j as usize])] * *w;
            }
            acc
        })
        .collect();
    GridField::new(grid, values)
}

/// Radial cutoff profile: 1 on [0,1], `1 − 3(r−1)² + 2(r−1)³` on [1,2], 0 beyond.
pub fn cutoff_profile(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let d = r - 1.0;
        1.0 - 3.0 * d * d + 2.0 * d * d * d
    }
}

/// `u_k = η_k u`, `η_k(x) = η(|x|/k)`: equal to 1 on `B_k`, supported in
/// `B_{2k}`, `|∇η_k| ≤ 3/(2k)`.
pub fn truncate(u: &GridField, k: f64) -> Result<GridField> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Input(format!("truncation radius {k} must be positive")));
    }
    u.map(|x, v| v * cutoff_profile(norm(x) / k))
}

/// `u′ = e^{i c·x} u`, `A′ = A + c`.
pub fn gauge_transform(u: &GridField, a: &MagneticPotential, c: Point) -> Result<(GridField, MagneticPotential)> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("gauge shift must be finite".into()));
    }
    let n = u.grid().dim();
    let c = if n == 1 { [c[0], 0.0] } else { c };
    let u2 = if c == [0.0, 0.0] { u.clone() } else { u.map(|x, v| Complex64::from_polar(1.0, dot(c, x)) * v)? };
    Ok((u2, a.shifted(c)))
}

/// Pointwise modulus `|u|` as a real field.
pub fn modulus_field(u: &GridField) -> GridField {
    let values = u.values().iter().map(|v| Complex64::new(v.norm(), 0.0)).collect();
    GridField::new(*u.grid(), values).expect("modulus of finite values is finite")
}

// ---------------------------------------------------------------------------
// Import and export.

/// Grid metadata stored next to a field CSV.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldManifest {
    pub n: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub points: usize,
    pub support_radius: f64,
}

/// Writes `i0[,i1],re,im` rows.
pub fn write_field_csv<W: Write>(u: &GridField, mut out: W) -> std::io::Result<()> {
    let g = u.grid();
    if g.dim() == 1 {
        writeln!(out, "i0,re,im")?;
    } else {
        writeln!(out, "i0,i1,re,im")?;
    }
    for (idx, v) in u.values().iter().enumerate() {
        let m = g.multi(idx);
        if g.dim() == 1 {
            writeln!(out, "{},{:e},{:e}", m[0], v.re, v.im)?;
        } else {
            writeln!(out, "{},{},{:e},{:e}", m[0], m[1], v.re, v.im)?;
        }
    }
    Ok(())
}

pub fn read_field_csv<R: BufRead>(grid: Grid, input: R) -> Result<GridField> {
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    let cols = grid.dim() + 2;
    for (ln, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Input(e.to_string()))?;
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != cols {
            return Err(Error::Input(format!("line {}: expected {cols} columns", ln + 1)));
        }
        let bad = || Error::Input(format!("line {}: malformed row", ln + 1));
        let mut m = [0usize; 2];
        for k in 0..grid.dim() {
            m[k] = parts[k].trim().parse().map_err(|_| bad())?;
            if m[k] >= grid.points() {
                return Err(bad());
            }
        }
        let re: f64 = parts[cols - 2].trim().parse().map_err(|_| bad())?;
        let im: f64 = parts[cols - 1].trim().parse().map_err(|_| bad())?;
        values[grid.flat(m)] = Complex64::new(re, im);
    }
    GridField::new(grid, values)
}

/// Saves `<stem>.csv` and `<stem>.json` into `dir`.
pub fn save_field(u: &GridField, dir: &Path, stem: &str) -> Result<()> {
    let io = |e: std::io::Error| Error::Input(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;
    let f = std::fs::File::create(dir.join(format!("{stem}.csv"))).map_err(io)?;
    write_field_csv(u, std::io::BufWriter::new(f)).map_err(io)?;
    let g = u.grid();
    let man = FieldManifest {
        n: g.dim(),
        half_width: g.half_width(),
        points: g.points(),
        support_radius: u.support_radius(),
    };
    let text = serde_json::to_string_pretty(&man).map_err(|e| Error::Input(e.to_string()))?;
    std::fs::write(dir.join(format!("{stem}.json")), text).map_err(io)?;
    Ok(())
}

pub fn load_field(dir: &Path, stem: &str) -> Result<GridField> {
    let io = |e: std::io::Error| Error::Input(e.to_string());
    let text = std::fs::read_to_string(dir.join(format!("{stem}.json"))).map_err(io)?;
    let man: FieldManifest = serde_json::from_str(&text).map_err(|e| Error::Input(e.to_string()))?;
    let grid = Grid::new(man.n, man.half_width, man.points)?;
    let f = std::fs::File::open(dir.join(format!("{stem}.csv"))).map_err(io)?;
    read_field_csv(grid, std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> Grid {
        Grid::new(1, 3.0, 256).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = Grid::new(2, 1.0, 8).unwrap();
        assert_eq!(g.len(), 64);
        assert!((g.spacing() - 0.25).abs() < 1e-15);
        assert!((g.coord(0) + 0.875).abs() < 1e-15);
        assert!(Grid::new(1, 1.0, 7).is_err());
        assert!(Grid::new(3, 1.0, 8).is_err());
        let b = Grid::with_boundary_nodes(1, 1024, 1.0, 11).unwrap();
        assert!(b.node_at([1.0, 0.0]).is_some());
        assert!(b.node_at([-1.0, 0.0]).is_some());
    }

    #[test]
    fn sample_examples() {
        let g = TestFunction::Gaussian { sigma: 1.0 };
        assert_eq!(g.eval([0.0, 0.0]), Complex64::new(1.0, 0.0));
        let b = TestFunction::Bump { radius: 1.0 };
        assert_eq!(b.eval([1.0, 0.0]).re, 0.0);
        assert_eq!(b.eval([1.5, 0.0]).re, 0.0);
        let u = sample(&TestFunction::Parabola, &grid1()).unwrap();
        assert!((TestFunction::Parabola.eval([0.5, 0.0]).re - 0.75).abs() < 1e-15);
        assert!(u.support_radius() <= 1.0);
        assert!(TestFunction::parse("wavelet:2").is_err());
        let p = TestFunction::parse("phase:2:bump:1").unwrap();
        assert!((p.eval([0.3, 0.0]).norm() - b.eval([0.3, 0.0]).re).abs() < 1e-15);
    }

    #[test]
    fn mollify_examples() {
        let g = grid1();
        let z = GridField::zeros(g);
        assert!(mollify(&z, 0.1).unwrap().is_zero());
        let ball = sample(&TestFunction::Ball { radius: 2.0 }, &g).unwrap();
        let m = mollify(&ball, 0.2).unwrap();
        let mid = g.node_at([g.coord(128), 0.0]).unwrap();
        assert!((m.values()[mid].re - 1.0).abs() < 1e-12);
        // mass is conserved once the field is negligible at the grid edge
        let wide = Grid::new(1, 7.0, 512).unwrap();
        let gauss = sample(&TestFunction::Gaussian { sigma: 1.0 }, &wide).unwrap();
        let mg = mollify(&gauss, 0.1).unwrap();
        let (a, b) = (gauss.mass().re, mg.mass().re);
        assert!((a - b).abs() <= 1e-10 * a);
        assert!(mg.sup_norm() <= gauss.sup_norm());
        assert!(matches!(mollify(&gauss, wide.spacing()), Err(Error::Resolution { .. })));
    }

    #[test]
    fn truncate_examples() {
        let g = grid1();
        let u = sample(&TestFunction::Bump { radius: 1.0 }, &g).unwrap();
        assert_eq!(truncate(&u, 1.0).unwrap(), u);
        let one = sample(&TestFunction::Constant { value: 1.0 }, &g).unwrap();
        let t = truncate(&one, 0.5).unwrap();
        for (i, v) in t.values().iter().enumerate() {
            if g.point(i)[0].abs() >= 1.0 {
                assert_eq!(v.re, 0.0);
            }
        }
        let gauss = sample(&TestFunction::Gaussian { sigma: 1.0 }, &g).unwrap();
        let gk = truncate(&gauss, 1.0).unwrap();
        for (a, b) in gk.values().iter().zip(gauss.values()) {
            assert!(a.norm() <= b.norm());
        }
        // profile gradient bound |η'| ≤ 2
        let slope = (1..1000)
            .map(|k| {
                let r = 1.0 + k as f64 / 1000.0;
                (cutoff_profile(r + 1e-6) - cutoff_profile(r - 1e-6)).abs() / 2e-6
            })
            .fold(0.0, f64::max);
        assert!(slope <= 2.0);
    }

    #[test]
    fn gauge_and_modulus_examples() {
        let g = grid1();
        let u = sample(&TestFunction::Gaussian { sigma: 1.0 }, &g).unwrap();
        let a = MagneticPotential::zero(1);
        let (u0, a0) = gauge_transform(&u, &a, [0.0, 0.0]).unwrap();
        assert_eq!(u0, u);
        assert_eq!(a0.eval([0.3, 0.0]), a.eval([0.3, 0.0]));
        let (u2, a2) = gauge_transform(&u, &a, [2.0, 0.0]).unwrap();
        for (i, (v2, v)) in u2.values().iter().zip(u.values()).enumerate() {
            assert!((v2.norm() - v.norm()).abs() < 1e-15);
            let x = g.point(i)[0];
            assert!((v2.re - (2.0 * x).cos() * v.re).abs() < 1e-15);
        }
        assert_eq!(a2.as_constant(), Some([2.0, 0.0]));

        let iv = u.scale(Complex64::new(0.0, 1.0));
        assert_eq!(modulus_field(&iv), u);
        let c = GridField::from_fn(g, |_| Complex64::new(3.0, 4.0)).unwrap();
        assert!(modulus_field(&c).values().iter().all(|v| (v.re - 5.0).abs() < 1e-15 && v.im == 0.0));
    }

    #[test]
    fn csv_roundtrip() {
        let g = Grid::new(2, 1.0, 8).unwrap();
        let u = sample(&TestFunction::parse("phase:1,2:bump:0.8").unwrap(), &g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_field(&u, dir.path(), "u").unwrap();
        let back = load_field(dir.path(), "u").unwrap();
        for (a, b) in back.values().iter().zip(u.values()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn sampled_potential_bounds() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let vals: Vec<Point> = g.points_iter().map(|x| [x[0].sin(), 0.0]).collect();
        let a = MagneticPotential::sampled(g, vals).unwrap();
        assert!(a.sup_norm() <= 1.0 && a.lipschitz_bound() <= 1.0 + 1e-12);
        let x = g.point(3);
        assert!((a.eval(x)[0] - x[0].sin()).abs() < 1e-14);
    }
}
