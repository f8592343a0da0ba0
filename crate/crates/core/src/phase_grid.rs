//! Discretized flat phase space `ℝ^{2d}` (d = 1 or 2).
//!
//! Conventions, fixed once for the whole crate:
//!
//! * complex coordinates `z⁺ = (q + ip)/√2`, `z⁻ = (q − ip)/√2`;
//! * symplectic form `[z₁, z₂] = p₁·q₂ − p₂·q₁`;
//! * Liouville measure `dλ_ℏ = (2πℏ)^{−d} dq dp`, which coincides with
//!   `(πℏ)^{−d} dz⁺dz⁻` read as the real area element of `z⁺`;
//! * symplectic Fourier transform
//!   `f̃(ζ) = ∫ f(z) exp{(i/ℏ)(p_z·q_ζ − p_ζ·q_z)} dλ_ℏ(z)` with inverse
//!   `f(z) = ∫ f̃(ζ) exp{(i/ℏ)(p_ζ·q_z − p_z·q_ζ)} dλ_ℏ(ζ)`.
//!
//! Lattice points sit at `−L + j·2L/n`, `j = 0..n`, so the origin is the
//! sample `j = n/2`. The frequency lattice is the dual grid: its q-axis is
//! conjugate to the phase p-axis and vice versa.

use std::sync::Arc;

use num_traits::Zero;
use rustfft::{Fft, FftPlanner};

use crate::error::{OmegaError, Result};
use crate::ordering::OrderingRule;
use crate::scalar::{c, re, Real, C};

/// A point of phase space, `d` positions and `d` momenta.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint<T: Real> {
    pub q: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(q: Vec<T>, p: Vec<T>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(OmegaError::DimensionMismatch {
                expected: q.len(),
                found: p.len(),
            });
        }
        Ok(Self { q, p })
    }

    pub fn one(q: T, p: T) -> Self {
        Self { q: vec![q], p: vec![p] }
    }

    pub fn origin(d: usize) -> Self {
        Self {
            q: vec![T::zero(); d],
            p: vec![T::zero(); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn z_plus(&self) -> Vec<C<T>> {
        let s = T::FRAC_1_SQRT_2();
        self.q.iter().zip(&self.p).map(|(&q, &p)| c(q * s, p * s)).collect()
    }

    pub fn z_minus(&self) -> Vec<C<T>> {
        let s = T::FRAC_1_SQRT_2();
        self.q.iter().zip(&self.p).map(|(&q, &p)| c(q * s, -p * s)).collect()
    }

    /// Inverse of [`z_plus`](Self::z_plus): `q = √2 Re z⁺`, `p = √2 Im z⁺`.
    pub fn from_z_plus(z_plus: &[C<T>]) -> Self {
        let s = T::SQRT_2();
        Self {
            q: z_plus.iter().map(|z| z.re * s).collect(),
            p: z_plus.iter().map(|z| z.im * s).collect(),
        }
    }

    pub fn norm_sqr(&self) -> T {
        self.q
            .iter()
            .chain(&self.p)
            .fold(T::zero(), |a, &x| a + x * x)
    }

    pub fn neg(&self) -> Self {
        Self {
            q: self.q.iter().map(|&x| -x).collect(),
            p: self.p.iter().map(|&x| -x).collect(),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            q: self.q.iter().map(|&x| x * s).collect(),
            p: self.p.iter().map(|&x| x * s).collect(),
        }
    }
}

/// `[z₁, z₂] = p₁·q₂ − p₂·q₁`.
pub fn symplectic_form<T: Real>(z1: &PhasePoint<T>, z2: &PhasePoint<T>) -> Result<T> {
    if z1.dim() != z2.dim() {
        return Err(OmegaError::DimensionMismatch {
            expected: z1.dim(),
            found: z2.dim(),
        });
    }
    Ok((0..z1.dim()).fold(T::zero(), |acc, k| acc + z1.p[k] * z2.q[k] - z2.p[k] * z1.q[k]))
}

/// The same form through complex coordinates, `(1/i)(z₁⁺z₂⁻ − z₁⁻z₂⁺)`.
/// Returned as a complex number; its imaginary part vanishes identically.
pub fn complex_symplectic_form<T: Real>(z1: &PhasePoint<T>, z2: &PhasePoint<T>) -> Result<C<T>> {
    if z1.dim() != z2.dim() {
        return Err(OmegaError::DimensionMismatch {
            expected: z1.dim(),
            found: z2.dim(),
        });
    }
    let (a_p, a_m) = (z1.z_plus(), z1.z_minus());
    let (b_p, b_m) = (z2.z_plus(), z2.z_minus());
    let s = (0..z1.dim()).fold(C::zero(), |acc: C<T>, k| acc + a_p[k] * b_m[k] - a_m[k] * b_p[k]);
    Ok(s / c(T::zero(), T::one()))
}

/// Whether a [`Symbol`] lives on the phase lattice or its dual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Phase,
    Frequency,
}

impl Domain {
    pub fn tag(self) -> u8 {
        match self {
            Domain::Phase => 0,
            Domain::Frequency => 1,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Domain::Phase),
            1 => Some(Domain::Frequency),
            _ => None,
        }
    }
}

/// Uniform lattice on `[−L_q, L_q)^d × [−L_p, L_p)^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid<T: Real> {
    d: usize,
    n_q: usize,
    n_p: usize,
    l_q: T,
    l_p: T,
    hbar: T,
}

impl<T: Real> PhaseGrid<T> {
    pub fn new(d: usize, n_q: usize, n_p: usize, l_q: T, l_p: T, hbar: T) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(OmegaError::InvalidGrid(format!("dimension {d} not in {{1, 2}}")));
        }
        for (name, n) in [("n_q", n_q), ("n_p", n_p)] {
            if n < 8 || n % 2 != 0 {
                return Err(OmegaError::InvalidGrid(format!("{name} = {n} must be even and ≥ 8")));
            }
        }
        if !(l_q > T::zero() && l_p > T::zero()) {
            return Err(OmegaError::InvalidGrid("half-widths must be positive".into()));
        }
        if !(hbar > T::zero()) {
            return Err(OmegaError::InvalidGrid("ℏ must be positive".into()));
        }
        Ok(Self { d, n_q, n_p, l_q, l_p, hbar })
    }

    /// Square one-dimensional grid with `n` samples per axis and half-width `L`.
    pub fn square(n: usize, l: T, hbar: T) -> Result<Self> {
        Self::new(1, n, n, l, l, hbar)
    }

    /// 128 × 128 with `L = 8√ℏ`: a covariance-ℏ Gaussian gets ≥ 6 cells per
    /// standard deviation.
    pub fn default_for(hbar: T) -> Result<Self> {
        let l = T::lit(8.0) * hbar.sqrt();
        Self::new(1, 128, 128, l, l, hbar)
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn n_q(&self) -> usize {
        self.n_q
    }
    pub fn n_p(&self) -> usize {
        self.n_p
    }
    pub fn l_q(&self) -> T {
        self.l_q
    }
    pub fn l_p(&self) -> T {
        self.l_p
    }
    pub fn hbar(&self) -> T {
        self.hbar
    }

    pub fn dq(&self) -> T {
        (self.l_q + self.l_q) / T::from_usize_lossy(self.n_q)
    }

    pub fn dp(&self) -> T {
        (self.l_p + self.l_p) / T::from_usize_lossy(self.n_p)
    }

    pub fn q_at(&self, j: usize) -> T {
        -self.l_q + T::from_usize_lossy(j) * self.dq()
    }

    pub fn p_at(&self, k: usize) -> T {
        -self.l_p + T::from_usize_lossy(k) * self.dp()
    }

    /// Axis extents in storage order: `d` q-axes then `d` p-axes.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.n_q; self.d];
        s.extend(std::iter::repeat_n(self.n_p, self.d));
        s
    }

    pub fn len(&self) -> usize {
        self.n_q.pow(self.d as u32) * self.n_p.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> T {
        (self.dq() * self.dp()).powi(self.d as i32)
    }

    /// Weight of one cell under `dλ_ℏ`.
    pub fn liouville_weight(&self) -> T {
        self.cell_volume() / (T::TAU() * self.hbar).powi(self.d as i32)
    }

    /// Window volume `(2L_q)^d (2L_p)^d`.
    pub fn window_volume(&self) -> T {
        ((self.l_q + self.l_q) * (self.l_p + self.l_p)).powi(self.d as i32)
    }

    /// Grid of the symplectic Fourier transform. Its q-axis (`q_ζ`) is
    /// conjugate to the phase p-axis, so it inherits `n_p` samples with
    /// spacing `πℏ/L_p`.
    pub fn dual(&self) -> Self {
        let pi_h = T::PI() * self.hbar;
        let two = T::lit(2.0);
        Self {
            d: self.d,
            n_q: self.n_p,
            n_p: self.n_q,
            l_q: T::from_usize_lossy(self.n_p) * pi_h / (two * self.l_p),
            l_p: T::from_usize_lossy(self.n_q) * pi_h / (two * self.l_q),
            hbar: self.hbar,
        }
    }

    /// Multi-index of a flat storage index.
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut out = vec![0; shape.len()];
        for (a, &n) in shape.iter().enumerate().rev() {
            out[a] = idx % n;
            idx /= n;
        }
        out
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        self.shape()
            .iter()
            .zip(multi)
            .fold(0, |acc, (&n, &i)| acc * n + i)
    }

    pub fn point(&self, idx: usize) -> PhasePoint<T> {
        let m = self.unravel(idx);
        PhasePoint {
            q: m[..self.d].iter().map(|&j| self.q_at(j)).collect(),
            p: m[self.d..].iter().map(|&k| self.p_at(k)).collect(),
        }
    }

    /// Flat index of the lattice point `−z` (wrapping the `−L` edge onto itself).
    pub fn reflect_index(&self, idx: usize) -> usize {
        let shape = self.shape();
        let m: Vec<usize> = self
            .unravel(idx)
            .iter()
            .zip(&shape)
            .map(|(&i, &n)| (n - i) % n)
            .collect();
        self.ravel(&m)
    }

    /// Cells whose every coordinate lies within `fraction` of the half-width.
    pub fn interior_mask(&self, fraction: T) -> Vec<bool> {
        (0..self.len())
            .map(|idx| {
                let z = self.point(idx);
                z.q.iter().all(|&q| q.abs() <= fraction * self.l_q)
                    && z.p.iter().all(|&p| p.abs() <= fraction * self.l_p)
            })
            .collect()
    }

    /// Cells on the outermost lattice layer.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let shape = self.shape();
        (0..self.len())
            .map(|idx| {
                self.unravel(idx)
                    .iter()
                    .zip(&shape)
                    .any(|(&i, &n)| i == 0 || i == n - 1)
            })
            .collect()
    }

    /// Cells beyond `1 − shell` of the half-width along some axis.
    pub fn outer_shell_mask(&self, shell: T) -> Vec<bool> {
        let shape = self.shape();
        (0..self.len())
            .map(|idx| {
                self.unravel(idx).iter().zip(&shape).any(|(&i, &n)| {
                    let half = T::from_usize_lossy(n / 2);
                    let off = (T::from_usize_lossy(i) - half).abs() / half;
                    off > T::one() - shell
                })
            })
            .collect()
    }
}

/// Complex samples over a [`PhaseGrid`], tagged with the ordering rule the
/// values are a symbol for and the domain they live in.
#[derive(Clone, Debug, PartialEq)]
pub struct Symbol<T: Real> {
    grid: PhaseGrid<T>,
    values: Vec<C<T>>,
    ordering: OrderingRule,
    domain: Domain,
}

impl<T: Real> Symbol<T> {
    pub fn new(grid: PhaseGrid<T>, values: Vec<C<T>>, ordering: OrderingRule, domain: Domain) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(OmegaError::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self { grid, values, ordering, domain })
    }

    /// Sample `f(z)` over every lattice point.
    pub fn from_fn(grid: &PhaseGrid<T>, ordering: OrderingRule, f: impl Fn(&PhasePoint<T>) -> C<T>) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self {
            grid: grid.clone(),
            values,
            ordering,
            domain: Domain::Phase,
        }
    }

    /// One-dimensional shorthand for [`from_fn`](Self::from_fn).
    pub fn from_fn_1d(grid: &PhaseGrid<T>, ordering: OrderingRule, f: impl Fn(T, T) -> C<T>) -> Self {
        Self::from_fn(grid, ordering, |z| f(z.q[0], z.p[0]))
    }

    pub fn constant(grid: &PhaseGrid<T>, ordering: OrderingRule, value: C<T>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.len()],
            ordering,
            domain: Domain::Phase,
        }
    }

    pub fn zeros(grid: &PhaseGrid<T>, ordering: OrderingRule) -> Self {
        Self::constant(grid, ordering, C::zero())
    }

    pub fn grid(&self) -> &PhaseGrid<T> {
        &self.grid
    }
    pub fn values(&self) -> &[C<T>] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [C<T>] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<C<T>> {
        self.values
    }
    pub fn ordering(&self) -> OrderingRule {
        self.ordering
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn hbar(&self) -> T {
        self.grid.hbar
    }

    pub fn with_ordering(mut self, ordering: OrderingRule) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_values(&self, values: Vec<C<T>>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid.clone(),
            values,
            ordering: self.ordering,
            domain: self.domain,
        }
    }

    pub fn map(&self, f: impl Fn(C<T>) -> C<T>) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(C<T>, C<T>) -> C<T>) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.with_values(self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect()))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C<T>) -> Self {
        self.map(|v| v * s)
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(OmegaError::InvalidArgument("symbols live on different grids".into()));
        }
        if self.domain != other.domain {
            return Err(OmegaError::InvalidArgument("symbols live in different domains".into()));
        }
        Ok(())
    }

    /// Cell weight under the Liouville measure of the symbol's own lattice.
    pub fn measure_weight(&self) -> T {
        self.grid.liouville_weight()
    }

    /// `(∑|f|² dλ)^{1/2}`.
    pub fn l2_norm(&self) -> T {
        (self.values.iter().fold(T::zero(), |a, v| a + v.norm_sqr()) * self.measure_weight()).sqrt()
    }

    /// `∑ f dλ`.
    pub fn integral(&self) -> C<T> {
        self.values.iter().fold(C::zero(), |a: C<T>, &v| a + v) * self.measure_weight()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().map(|v| v.norm()).fold(T::zero(), T::max)
    }

    /// Values at `−z`.
    pub fn reflected(&self) -> Self {
        self.with_values((0..self.values.len()).map(|i| self.values[self.grid.reflect_index(i)]).collect())
    }

    /// Relative L² error against `reference`, restricted to the central
    /// `fraction` of the window.
    pub fn interior_relative_error(&self, reference: &Self, fraction: T) -> Result<T> {
        self.check_compatible(reference)?;
        let mask = self.grid.interior_mask(fraction);
        let (mut num, mut den) = (T::zero(), T::zero());
        for ((a, b), &m) in self.values.iter().zip(&reference.values).zip(&mask) {
            if m {
                num += (a - b).norm_sqr();
                den += b.norm_sqr();
            }
        }
        Ok(if den > T::zero() { (num / den).sqrt() } else { num.sqrt() })
    }

    /// Max absolute deviation on the central `fraction` of the window.
    pub fn interior_max_error(&self, reference: &Self, fraction: T) -> Result<T> {
        self.check_compatible(reference)?;
        let mask = self.grid.interior_mask(fraction);
        Ok(self
            .values
            .iter()
            .zip(&reference.values)
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|((a, b), _)| (a - b).norm())
            .fold(T::zero(), T::max))
    }

    /// Ratio `max_boundary |f| / max |f|`.
    pub fn boundary_ratio(&self) -> T {
        let max = self.max_abs();
        if max == T::zero() {
            return T::zero();
        }
        let bmax = self
            .values
            .iter()
            .zip(self.grid.boundary_mask())
            .filter(|(_, m)| *m)
            .map(|(v, _)| v.norm())
            .fold(T::zero(), T::max);
        bmax / max
    }

    /// Share of `∑|f|²` carried by the outer `shell` of the lattice.
    pub fn outer_energy_fraction(&self, shell: T) -> T {
        let mask = self.grid.outer_shell_mask(shell);
        let (mut outer, mut total) = (T::zero(), T::zero());
        for (v, m) in self.values.iter().zip(mask) {
            let e = v.norm_sqr();
            total += e;
            if m {
                outer += e;
            }
        }
        if total > T::zero() {
            outer / total
        } else {
            T::zero()
        }
    }
}

/// Box of half-width `a` smoothed by a Gaussian of width `w`:
/// `½[erf((x+a)/w) − erf((x−a)/w)]`. Entire, with a Gaussian spectrum.
pub fn flat_top<T: Real>(x: T, a: T, w: T) -> T {
    let (x, a, w) = (x.to_f64_lossy(), a.to_f64_lossy(), w.to_f64_lossy());
    T::lit(0.5 * (libm::erf((x + a) / w) - libm::erf((x - a) / w)))
}

impl<T: Real> Symbol<T> {
    /// Multiply by a product of [`flat_top`] windows with plateau `inner·L`
    /// and edge width `edge·L`. Growing symbols become representable on the
    /// grid while the central region is left untouched up to `erfc` tails.
    pub fn windowed(&self, inner: T, edge: T) -> Self {
        let g = &self.grid;
        self.with_values(
            (0..g.len())
                .map(|i| {
                    let z = g.point(i);
                    let w = z.q.iter().fold(T::one(), |a, &q| a * flat_top(q, inner * g.l_q, edge * g.l_q))
                        * z.p.iter().fold(T::one(), |a, &p| a * flat_top(p, inner * g.l_p, edge * g.l_p));
                    self.values[i] * w
                })
                .collect(),
        )
    }
}

/// Windowing threshold: symbols must be below this fraction of their peak
/// on the lattice boundary before they are Fourier transformed.
pub const WINDOW_TOLERANCE: f64 = 1e-8;
/// Share of spectral energy tolerated in the outer frequency shell.
pub const ALIASING_TOLERANCE: f64 = 1e-2;
/// Width of that shell, as a fraction of the half-width.
pub const ALIASING_SHELL: f64 = 0.1;

fn check_window<T: Real>(f: &Symbol<T>) -> Result<()> {
    let ratio = f.boundary_ratio().to_f64_lossy();
    if ratio > WINDOW_TOLERANCE {
        return Err(OmegaError::Aliasing {
            region: "window boundary",
            fraction: ratio,
            limit: WINDOW_TOLERANCE,
        });
    }
    Ok(())
}

fn check_bandwidth<T: Real>(g: &Symbol<T>) -> Result<()> {
    let frac = g.outer_energy_fraction(T::lit(ALIASING_SHELL)).to_f64_lossy();
    if frac > ALIASING_TOLERANCE {
        return Err(OmegaError::Aliasing {
            region: "outer frequency shell",
            fraction: frac,
            limit: ALIASING_TOLERANCE,
        });
    }
    Ok(())
}

/// ℏ-symplectic Fourier transform with windowing and bandwidth guards.
pub fn symplectic_fourier<T: Real>(f: &Symbol<T>) -> Result<Symbol<T>> {
    if f.domain != Domain::Phase {
        return Err(OmegaError::InvalidArgument("symplectic_fourier expects a phase-domain symbol".into()));
    }
    check_window(f)?;
    let g = symplectic_fourier_unchecked(f);
    check_bandwidth(&g)?;
    Ok(g)
}

/// Inverse transform; `g` must be frequency-domain.
pub fn inverse_symplectic_fourier<T: Real>(g: &Symbol<T>) -> Result<Symbol<T>> {
    if g.domain != Domain::Frequency {
        return Err(OmegaError::InvalidArgument(
            "inverse_symplectic_fourier expects a frequency-domain symbol".into(),
        ));
    }
    check_bandwidth(g)?;
    Ok(inverse_symplectic_fourier_unchecked(g))
}

/// Transform without the windowing/aliasing guards, for callers that
/// manage representability themselves.
pub fn symplectic_fourier_unchecked<T: Real>(f: &Symbol<T>) -> Symbol<T> {
    let grid = &f.grid;
    let d = grid.d;
    let mut data = f.values.clone();
    let shape = grid.shape();
    let mut planner = FftPlanner::new();
    // p-axes carry exp(+i p q_ζ/ℏ), q-axes exp(−i q p_ζ/ℏ).
    for axis in 0..2 * d {
        let sign = if axis >= d { 1 } else { -1 };
        transform_axis(&mut data, &shape, axis, sign, &mut planner);
    }
    let scale = grid.liouville_weight();
    for v in data.iter_mut() {
        *v *= scale;
    }
    let data = swap_blocks(&data, &shape, d);
    Symbol {
        grid: grid.dual(),
        values: data,
        ordering: f.ordering,
        domain: Domain::Frequency,
    }
}

pub fn inverse_symplectic_fourier_unchecked<T: Real>(g: &Symbol<T>) -> Symbol<T> {
    let fgrid = &g.grid;
    let d = fgrid.d;
    let mut data = g.values.clone();
    let shape = fgrid.shape();
    let mut planner = FftPlanner::new();
    // q_ζ-axes produce p with exp(−i p q_ζ/ℏ); p_ζ-axes produce q with exp(+i q p_ζ/ℏ).
    for axis in 0..2 * d {
        let sign = if axis >= d { 1 } else { -1 };
        transform_axis(&mut data, &shape, axis, sign, &mut planner);
    }
    let scale = fgrid.liouville_weight();
    for v in data.iter_mut() {
        *v *= scale;
    }
    let data = swap_blocks(&data, &shape, d);
    Symbol {
        grid: fgrid.dual(),
        values: data,
        ordering: g.ordering,
        domain: Domain::Phase,
    }
}

/// `out[x] = (−1)^{n/2+x} Σ_y (−1)^y in[y] e^{sign·2πi·xy/n}` along one axis.
///
/// With both lattices centered this is exactly the sampled kernel
/// `exp(sign·i·x_y·ω_x/ℏ)` between a lattice and its dual.
fn transform_axis<T: Real>(data: &mut [C<T>], shape: &[usize], axis: usize, sign: i32, planner: &mut FftPlanner<T>) {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let fft: Arc<dyn Fft<T>> = if sign < 0 {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    let half_sign = if (n / 2).is_multiple_of(2) { T::one() } else { -T::one() };
    let mut line = vec![C::zero(); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for (k, slot) in line.iter_mut().enumerate() {
                let v = data[base + k * stride];
                *slot = if k % 2 == 0 { v } else { -v };
            }
            fft.process(&mut line);
            for (k, v) in line.iter().enumerate() {
                let sgn = if k % 2 == 0 { half_sign } else { -half_sign };
                data[base + k * stride] = *v * sgn;
            }
        }
    }
}

/// Exchange the q-axis block and the p-axis block of a `2d`-axis array.
fn swap_blocks<T: Real>(data: &[C<T>], shape: &[usize], d: usize) -> Vec<C<T>> {
    let new_shape: Vec<usize> = shape[d..].iter().chain(&shape[..d]).copied().collect();
    let mut out = vec![C::zero(); data.len()];
    let total = data.len();
    let mut multi = vec![0usize; shape.len()];
    for (idx, v) in data.iter().enumerate().take(total) {
        let mut r = idx;
        for a in (0..shape.len()).rev() {
            multi[a] = r % shape[a];
            r /= shape[a];
        }
        let mut j = 0;
        for a in 0..shape.len() {
            let src_axis = (a + d) % (2 * d);
            j = j * new_shape[a] + multi[src_axis];
        }
        out[j] = *v;
    }
    out
}

/// Spectral partial derivative of a phase-domain symbol along one axis
/// (`axis < d` is a q-axis). Exact for band-limited symbols.
pub fn spectral_derivative<T: Real>(f: &Symbol<T>, axis: usize) -> Symbol<T> {
    let g = symplectic_fourier_unchecked(f);
    let d = f.grid.d;
    let fgrid = g.grid.clone();
    let hbar = fgrid.hbar;
    let ih = c(T::zero(), hbar);
    // q_ζ f̃ ↔ iℏ ∂_p f and p_ζ f̃ ↔ −iℏ ∂_q f.
    let vals: Vec<C<T>> = (0..fgrid.len())
        .map(|idx| {
            let z = fgrid.point(idx);
            let v = g.values[idx];
            if axis < d {
                v * re(z.p[axis]) / (-ih)
            } else {
                v * re(z.q[axis - d]) / ih
            }
        })
        .collect();
    let h = Symbol {
        grid: fgrid,
        values: vals,
        ordering: f.ordering,
        domain: Domain::Frequency,
    };
    inverse_symplectic_fourier_unchecked(&h)
}

/// Parseval check quantities `(∑|f|² dλ, ∑|f̃|² dλ̃)`.
pub fn parseval_pair<T: Real>(f: &Symbol<T>, g: &Symbol<T>) -> (T, T) {
    (f.l2_norm().powi(2), g.l2_norm().powi(2))
}

/// Direct Riemann sum of the defining integral at one frequency, for
/// cross-checking the FFT path on small grids.
pub fn fourier_direct_at<T: Real>(f: &Symbol<T>, zeta: &PhasePoint<T>) -> C<T> {
    let grid = &f.grid;
    let hbar = grid.hbar;
    let mut acc = C::zero();
    for (idx, v) in f.values.iter().enumerate() {
        let z = grid.point(idx);
        let phase = symplectic_form(&z, zeta).expect("same dimension") / hbar;
        acc += *v * C::from_polar(T::one(), phase);
    }
    acc * grid.liouville_weight()
}

impl<T: Real> std::ops::Index<usize> for Symbol<T> {
    type Output = C<T>;
    fn index(&self, i: usize) -> &C<T> {
        &self.values[i]
    }
}

/// Gaussian `exp(−|z − z₀|²/(2σ²))` on a grid, a convenient band-limited test symbol.
pub fn gaussian_symbol<T: Real>(grid: &PhaseGrid<T>, center: &PhasePoint<T>, sigma: T, ordering: OrderingRule) -> Symbol<T> {
    let two_s2 = T::lit(2.0) * sigma * sigma;
    Symbol::from_fn(grid, ordering, |z| {
        let r2 = z
            .q
            .iter()
            .zip(&center.q)
            .chain(z.p.iter().zip(&center.p))
            .fold(T::zero(), |a, (&x, &x0)| a + (x - x0) * (x - x0));
        re((-r2 / two_s2).exp())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid16() -> PhaseGrid<f64> {
        PhaseGrid::square(16, 6.0, 1.0).unwrap()
    }

    #[test]
    fn symplectic_form_examples() {
        let e_q = PhasePoint::<f64>::one(1.0, 0.0);
        let e_p = PhasePoint::<f64>::one(0.0, 1.0);
        assert_eq!(symplectic_form(&e_q, &e_p).unwrap(), -1.0);
        assert_eq!(symplectic_form(&e_p, &e_q).unwrap(), 1.0);
        assert_eq!(symplectic_form(&e_q, &e_q).unwrap(), 0.0);
        let cplx = complex_symplectic_form(&e_q, &e_p).unwrap();
        assert!((cplx.re + 1.0).abs() < 1e-15 && cplx.im.abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = PhasePoint::one(1.0, 0.0);
        let b = PhasePoint::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(symplectic_form(&a, &b), Err(OmegaError::DimensionMismatch { .. })));
    }

    #[test]
    fn complex_coordinates_reconstruct_point() {
        let z = PhasePoint::<f64>::new(vec![0.3, -1.2], vec![2.5, 0.7]).unwrap();
        let back = PhasePoint::from_z_plus(&z.z_plus());
        for (a, b) in z.q.iter().chain(&z.p).zip(back.q.iter().chain(&back.p)) {
            assert!((a - b).abs() < 1e-15);
        }
        for (zp, zm) in z.z_plus().iter().zip(z.z_minus()) {
            assert_eq!(zp.conj(), zm);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(PhaseGrid::<f64>::square(6, 1.0, 1.0).is_err());
        assert!(PhaseGrid::<f64>::square(9, 1.0, 1.0).is_err());
        assert!(PhaseGrid::<f64>::square(8, 1.0, -1.0).is_err());
        assert!(PhaseGrid::<f64>::new(3, 8, 8, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn cell_volume_sums_to_window() {
        for g in [grid16(), PhaseGrid::new(2, 8, 10, 1.5, 2.5, 0.3).unwrap()] {
            let total = g.cell_volume() * g.len() as f64;
            assert!((total / g.window_volume() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn origin_is_a_lattice_point() {
        let g = grid16();
        assert_eq!(g.q_at(8), 0.0);
        assert_eq!(g.p_at(8), 0.0);
    }

    #[test]
    fn dual_of_dual_is_identity() {
        let g = PhaseGrid::<f64>::new(1, 16, 32, 3.0, 5.0, 0.7).unwrap();
        let dd = g.dual().dual();
        assert!((dd.l_q() - g.l_q()).abs() < 1e-12 && (dd.l_p() - g.l_p()).abs() < 1e-12);
        assert_eq!((dd.n_q(), dd.n_p()), (g.n_q(), g.n_p()));
    }

    #[test]
    fn zero_symbol_transforms_to_zero() {
        let f = Symbol::zeros(&grid16(), OrderingRule::Weyl);
        let g = symplectic_fourier(&f).unwrap();
        assert!(g.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn fft_matches_direct_sum_on_16x16() {
        let grid = grid16();
        let f = Symbol::from_fn_1d(&grid, OrderingRule::Weyl, |q, p| {
            c((-(q - 0.4).powi(2) - 1.3 * p * p).exp(), 0.5 * q * (-(q * q + p * p)).exp())
        });
        let g = symplectic_fourier_unchecked(&f);
        let scale = g.max_abs();
        for idx in 0..g.grid().len() {
            let zeta = g.grid().point(idx);
            let direct = fourier_direct_at(&f, &zeta);
            assert!((direct - g[idx]).norm() / scale < 1e-12, "idx {idx}");
        }
    }

    #[test]
    fn non_decaying_symbol_trips_window_guard() {
        let f = Symbol::constant(&grid16(), OrderingRule::Weyl, c(1.0, 0.0));
        assert!(matches!(symplectic_fourier(&f), Err(OmegaError::Aliasing { .. })));
    }

    #[test]
    fn measure_conventions_agree() {
        // dz⁺ as a real area element: d(Re z⁺) d(Im z⁺) = dq dp / 2.
        let hbar = 0.37_f64;
        let jac = 0.5;
        let via_z = jac / (std::f64::consts::PI * hbar);
        let via_qp = 1.0 / (2.0 * std::f64::consts::PI * hbar);
        assert!((via_z - via_qp).abs() < 1e-15);
        // and the Gaussian exp(−|z|²/ℏ) = exp(−2 z⁺z⁻/ℏ) integrates to 1/2 under both.
        let grid = PhaseGrid::default_for(hbar).unwrap();
        let f = Symbol::from_fn_1d(&grid, OrderingRule::Weyl, |q, p| re((-(q * q + p * p) / hbar).exp()));
        assert!((f.integral().re - 0.5).abs() < 1e-12);
    }
}
