//! Coherent states, normal (Wick) symbols and the Gaussian-measure
//! representation of operator products.
//!
//! States are holomorphic functions of `ζ ∈ ℂ^modes`, square integrable
//! against the complex Gaussian `γ_ℏ` with `E[ζ ζ̄] = 1/ℏ` per mode. The
//! creator acts as `ℏζ·` and the annihilator as `∂_ζ`, so `[ẑ⁻, ẑ⁺] = ℏ` and
//! the monomials `√(ℏ^n/n!) ζ^n` are the Fock vectors `|n⟩`.
//!
//! With `c_v(ζ) = exp(v·ζ)` (so `ẑ⁻ c_v = v c_v`), the normal symbol of `W`
//! is `w(z⁺, z⁻) = ⟨c_u, W c_v⟩ / ⟨c_u, c_v⟩` at `z⁺ = ū`, `z⁻ = v`. For a
//! phase point, `z⁻ = (q + ip)/√2` and `z⁺` is its conjugate, which makes
//! the normal symbol the same object as the Normal-rule symbol.

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{OmegaError, Result};
use crate::evolution::{exact_propagator, step_factors, EvolutionSetup, Hamiltonian, Partition, Scheme};
use crate::linalg::CMatrix;
use crate::omega::{check_band, ratio_in_place, ConvertOptions};
use crate::ordering::OrderingRule;
use crate::phase_grid::{inverse_symplectic_fourier_unchecked, symplectic_fourier_unchecked, Domain, PhaseGrid, Symbol};
use crate::poly::MPoly;
use crate::quantizer::{ladder_variables, quantize_polynomial, Basis};
use crate::scalar::{c, factorial, re, Real, C};

/// Largest moment order handled by [`gaussian_measure_moments`].
pub const MAX_MOMENT_ORDER: usize = 8;
/// Share of `‖c_v‖²` allowed outside the truncated Fock space.
pub const TRUNCATION_TAIL_LIMIT: f64 = 1e-8;
pub const DEFAULT_QUADRATURE_POINTS: usize = 24;
/// Quadrature handles at most this many slices.
pub const MAX_QUADRATURE_SLICES: usize = 16;

/// An evaluation point `(z⁺, z⁻)`, one entry per mode.
pub type Probe<T> = (Vec<C<T>>, Vec<C<T>>);

/// How a coherent-state label maps to the ladder eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CoherentConvention {
    /// `e_w(ζ) = exp(−ℏ w·ζ)`: eigenvalue `−ℏw`, `⟨e_u, e_w⟩ = exp(ℏ ū·w)`.
    #[default]
    Paper,
    /// `e_w(ζ) = exp(w·ζ)`: eigenvalue `w`, `⟨e_u, e_w⟩ = exp(ū·w/ℏ)`.
    Bargmann,
}

impl CoherentConvention {
    pub fn name(self) -> &'static str {
        match self {
            CoherentConvention::Paper => "paper",
            CoherentConvention::Bargmann => "bargmann",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(CoherentConvention::Paper),
            "bargmann" => Some(CoherentConvention::Bargmann),
            _ => None,
        }
    }

    /// One-line description written next to coherent-state results.
    pub fn flag(self) -> &'static str {
        match self {
            CoherentConvention::Paper => "paper: e_w(zeta) = exp(-hbar w.zeta), <e_u,e_w> = exp(hbar conj(u).w)",
            CoherentConvention::Bargmann => "bargmann: e_w(zeta) = exp(w.zeta), <e_u,e_w> = exp(conj(u).w/hbar)",
        }
    }

    fn amplitude<T: Real>(self, w: C<T>, hbar: T) -> C<T> {
        match self {
            CoherentConvention::Paper => w * (-hbar),
            CoherentConvention::Bargmann => w,
        }
    }
}

/// Truncated Fock space of one or two modes, `levels` per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct FockSpace<T: Real> {
    modes: usize,
    levels: usize,
    hbar: T,
}

impl<T: Real> FockSpace<T> {
    pub fn new(modes: usize, levels: usize, hbar: T) -> Result<Self> {
        if !(1..=2).contains(&modes) {
            return Err(OmegaError::Unsupported(format!("{modes} modes (1 or 2 supported)")));
        }
        if levels < 2 {
            return Err(OmegaError::InvalidArgument("a Fock space needs at least 2 levels".into()));
        }
        if !(hbar > T::zero()) || !hbar.is_finite() {
            return Err(OmegaError::InvalidArgument("hbar must be positive and finite".into()));
        }
        Ok(Self { modes, levels, hbar })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }
    pub fn levels(&self) -> usize {
        self.levels
    }
    pub fn hbar(&self) -> T {
        self.hbar
    }
    pub fn dim(&self) -> usize {
        self.levels.pow(self.modes as u32)
    }

    /// Occupation numbers of basis vector `i` (mode 0 is the slow index).
    pub fn occupation(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.modes];
        for slot in out.iter_mut().rev() {
            *slot = i % self.levels;
            i /= self.levels;
        }
        out
    }

    pub fn index(&self, occ: &[usize]) -> usize {
        occ.iter().fold(0, |acc, &k| acc * self.levels + k)
    }

    /// `ẑ⁻` acting on `mode`.
    pub fn annihilation(&self, mode: usize) -> CMatrix<T> {
        assert!(mode < self.modes, "mode out of range");
        let mut a = CMatrix::zeros(self.dim(), self.dim());
        for col in 0..self.dim() {
            let mut occ = self.occupation(col);
            if occ[mode] == 0 {
                continue;
            }
            let k = occ[mode];
            occ[mode] -= 1;
            a[(self.index(&occ), col)] = re((self.hbar * T::from_usize_lossy(k)).sqrt());
        }
        a
    }

    pub fn creation(&self, mode: usize) -> CMatrix<T> {
        self.annihilation(mode).adjoint()
    }

    /// Basis vectors whose occupations stay below `levels − 1` in every mode,
    /// where truncated ladder relations hold exactly.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.occupation(i).iter().all(|&k| k + 1 < self.levels))
            .collect()
    }

    /// Components of the unnormalized `c_v` along the Fock basis:
    /// `∏_modes (v/√ℏ)^k / √k!`.
    pub fn coherent_vector(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(v.len(), self.modes, "amplitude per mode");
        if self.modes == 1 {
            return ladder_powers(v[0], self.hbar, self.levels);
        }
        let per_mode: Vec<Vec<C<T>>> = v.iter().map(|&x| ladder_powers(x, self.hbar, self.levels)).collect();
        (0..self.dim())
            .map(|i| {
                self.occupation(i)
                    .iter()
                    .zip(&per_mode)
                    .fold(C::one(), |acc, (&k, pm)| acc * pm[k])
            })
            .collect()
    }

    /// Share of `‖c_v‖² = exp(|v|²/ℏ)` lying outside the truncation.
    pub fn tail_fraction(&self, v: &[C<T>]) -> f64 {
        let kept: f64 = self.coherent_vector(v).iter().map(|x| x.norm_sqr().to_f64_lossy()).sum();
        let total = (v.iter().map(|x| x.norm_sqr().to_f64_lossy()).sum::<f64>() / self.hbar.to_f64_lossy()).exp();
        ((total - kept) / total).max(0.0)
    }
}

/// `(x/√ℏ)^k / √k!` for `k < n`.
fn ladder_powers<T: Real>(x: C<T>, hbar: T, n: usize) -> Vec<C<T>> {
    let s = x / hbar.sqrt();
    let mut out = Vec::with_capacity(n);
    let mut cur = C::one();
    for k in 0..n {
        if k > 0 {
            cur = cur * s / T::from_usize_lossy(k).sqrt();
        }
        out.push(cur);
    }
    out
}

/// A coherent state `e_w` in a chosen labelling convention.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentState<T: Real> {
    pub label: Vec<C<T>>,
    pub convention: CoherentConvention,
    pub hbar: T,
}

impl<T: Real> CoherentState<T> {
    pub fn new(label: Vec<C<T>>, convention: CoherentConvention, hbar: T) -> Self {
        Self { label, convention, hbar }
    }

    /// Ladder eigenvalues: `ẑ⁻_j e_w = amplitude[j] e_w`.
    pub fn amplitude(&self) -> Vec<C<T>> {
        self.label.iter().map(|&w| self.convention.amplitude(w, self.hbar)).collect()
    }

    /// Closed-form `⟨self, other⟩ = exp(ū·v/ℏ)` over ladder eigenvalues.
    pub fn overlap(&self, other: &Self) -> C<T> {
        (dot_conj(&self.amplitude(), &other.amplitude()) / self.hbar).exp()
    }

    pub fn coefficients(&self, space: &FockSpace<T>) -> Vec<C<T>> {
        space.coherent_vector(&self.amplitude())
    }

    pub fn truncated_overlap(&self, other: &Self, space: &FockSpace<T>) -> C<T> {
        crate::linalg::inner(&self.coefficients(space), &other.coefficients(space))
    }

    /// `∫ conj(e_self) e_other dγ_ℏ` by tensor Gauss–Hermite quadrature in
    /// the holomorphic picture (the reproducing-kernel check).
    pub fn quadrature_overlap(&self, other: &Self, points: usize) -> Result<C<T>> {
        let rule = gaussian_rule(points, self.hbar)?;
        let (u, v) = (self.amplitude(), other.amplitude());
        let mut total = C::one();
        for (&a, &b) in u.iter().zip(&v) {
            let mut acc = C::zero();
            for &(zeta, w) in &rule {
                acc += (a * zeta).exp().conj() * (b * zeta).exp() * w;
            }
            total *= acc;
        }
        Ok(total)
    }
}

fn dot_conj<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(C::zero(), |acc, (x, y)| acc + x.conj() * y)
}

/// Tensor Gauss–Hermite rule for `γ_ℏ` on one mode: nodes `ζ` with
/// `E[ζ ζ̄] = 1/ℏ` and weights summing to one.
pub fn gaussian_rule<T: Real>(points: usize, hbar: T) -> Result<Vec<(C<T>, T)>> {
    let scale = (1.0 / hbar.to_f64_lossy()).sqrt();
    Ok(unit_rule(points)?
        .into_iter()
        .map(|(z, w)| (c(T::lit(z.re * scale), T::lit(z.im * scale)), T::lit(w)))
        .collect())
}

/// Complex standard Gaussian rule (`E|ζ|² = 1`).
fn unit_rule(points: usize) -> Result<Vec<(num_complex::Complex<f64>, f64)>> {
    let n = NonZeroUsize::new(points)
        .ok_or_else(|| OmegaError::InvalidArgument("quadrature needs at least one point".into()))?;
    let gh = GaussHermite::new(n);
    let pairs = gh.as_node_weight_pairs();
    let mut out = Vec::with_capacity(points * points);
    for &(x, wx) in pairs {
        for &(y, wy) in pairs {
            out.push((num_complex::Complex::new(x, y), wx * wy / std::f64::consts::PI));
        }
    }
    Ok(out)
}

/// One entry of the moment table `E[ζ^a ζ̄^b]` under `γ_ℏ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Moment {
    pub a: usize,
    pub b: usize,
    pub closed_form: f64,
    pub quadrature: num_complex::Complex<f64>,
}

/// `E[ζ^a ζ̄^b] = δ_ab a! ℏ^{−a}` for `a, b ≤ order`, each checked against
/// Gauss–Hermite quadrature to `1e-8` relative to `√(a! b!) ℏ^{−(a+b)/2}`.
pub fn gaussian_measure_moments(order: usize, hbar: f64, points: usize) -> Result<Vec<Moment>> {
    if order > MAX_MOMENT_ORDER {
        return Err(OmegaError::DegreeExceeded {
            degree: order,
            cap: MAX_MOMENT_ORDER,
        });
    }
    let rule = gaussian_rule::<f64>(points.max(order + 1), hbar)?;
    let mut out = Vec::new();
    for a in 0..=order {
        for b in 0..=order {
            let closed = if a == b { factorial(a) * hbar.powi(-(a as i32)) } else { 0.0 };
            let quad: num_complex::Complex<f64> = rule
                .iter()
                .map(|&(z, w)| z.powu(a as u32) * z.conj().powu(b as u32) * w)
                .sum();
            // Cauchy–Schwarz bound on |E[ζ^a ζ̄^b]| sets the scale.
            let bound = (factorial(a) * factorial(b)).sqrt() * hbar.powf(-((a + b) as f64) / 2.0);
            let diff = (quad - closed).norm() / bound.max(1.0);
            if diff > 1e-8 {
                return Err(OmegaError::MomentMismatch { difference: diff });
            }
            out.push(Moment {
                a,
                b,
                closed_form: closed,
                quadrature: quad,
            });
        }
    }
    Ok(out)
}

/// How a normal symbol is held.
#[derive(Clone, Debug)]
pub enum WickForm<T: Real> {
    /// Polynomial in `(z⁺₁..z⁺_m, z⁻₁..z⁻_m)`.
    Polynomial(MPoly<T>),
    /// Normal symbol of a Fock matrix, evaluated through coherent vectors.
    Operator(FockSpace<T>, CMatrix<T>),
    /// Normal symbol of `Op(w₁)⋯Op(w_N)` by the Gaussian chain integral with
    /// a tensor Gauss–Hermite rule of the given size (one mode).
    Product(Vec<WickSymbol<T>>, usize),
}

#[derive(Clone, Debug)]
pub struct WickSymbol<T: Real> {
    modes: usize,
    hbar: T,
    form: WickForm<T>,
    /// Nonzero entries of a sparse operator matrix.
    sparse: Option<Vec<(usize, usize, C<T>)>>,
}

impl<T: Real> WickSymbol<T> {
    pub fn polynomial(poly: MPoly<T>, hbar: T) -> Result<Self> {
        if !poly.nvars().is_multiple_of(2) || !(1..=2).contains(&(poly.nvars() / 2)) {
            return Err(OmegaError::InvalidArgument(
                "a normal symbol polynomial has variables (z+_1..z+_m, z-_1..z-_m) with m = 1 or 2".into(),
            ));
        }
        Ok(Self {
            modes: poly.nvars() / 2,
            hbar,
            form: WickForm::Polynomial(poly),
            sparse: None,
        })
    }

    /// Normal symbol of a Fock matrix, without truncation checks.
    pub fn operator(space: &FockSpace<T>, matrix: CMatrix<T>) -> Result<Self> {
        if matrix.rows() != space.dim() || matrix.cols() != space.dim() {
            return Err(OmegaError::DimensionMismatch {
                expected: space.dim(),
                found: matrix.rows(),
            });
        }
        let nonzero: Vec<(usize, usize, C<T>)> = (0..matrix.rows())
            .flat_map(|i| (0..matrix.cols()).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let v = matrix[(i, j)];
                (!v.is_zero()).then_some((i, j, v))
            })
            .collect();
        let sparse = (nonzero.len() * 4 <= matrix.rows() * matrix.cols()).then_some(nonzero);
        Ok(Self {
            modes: space.modes(),
            hbar: space.hbar(),
            form: WickForm::Operator(space.clone(), matrix),
            sparse,
        })
    }

    /// The constant symbol `1`.
    pub fn one(modes: usize, hbar: T) -> Self {
        Self {
            modes,
            hbar,
            form: WickForm::Polynomial(MPoly::one(2 * modes)),
            sparse: None,
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }
    pub fn hbar(&self) -> T {
        self.hbar
    }
    pub fn form(&self) -> &WickForm<T> {
        &self.form
    }

    /// `w(z⁺, z⁻)` for independent complex arguments.
    pub fn eval(&self, zp: &[C<T>], zm: &[C<T>]) -> C<T> {
        match &self.form {
            WickForm::Polynomial(p) => {
                let mut x = zp.to_vec();
                x.extend_from_slice(zm);
                p.eval(&x)
            }
            _ => self.kernel(zp, zm) * (-dot(zp, zm) / self.hbar).exp(),
        }
    }

    /// `w(z⁺, z⁻) exp(z⁺·z⁻/ℏ) = ⟨c_u, W c_v⟩`.
    pub fn kernel(&self, zp: &[C<T>], zm: &[C<T>]) -> C<T> {
        match &self.form {
            WickForm::Operator(space, m) => {
                let a = space.coherent_vector(zp);
                if let Some(nz) = &self.sparse {
                    let b = space.coherent_vector(zm);
                    return nz.iter().fold(C::zero(), |acc, &(i, j, v)| acc + a[i] * v * b[j]);
                }
                let b = m.matvec(&space.coherent_vector(zm));
                a.iter().zip(&b).fold(C::zero(), |acc, (x, y)| acc + x * y)
            }
            WickForm::Polynomial(_) => self.eval(zp, zm) * (dot(zp, zm) / self.hbar).exp(),
            WickForm::Product(..) => self.kernel_matrix(&[zp.to_vec()], &[zm.to_vec()])[(0, 0)],
        }
    }

    /// [`kernel`](Self::kernel) from precomputed coherent vectors of `z⁺`
    /// and `z⁻`; `None` unless the symbol holds an operator matrix.
    fn kernel_from_vectors(&self, a: &[C<T>], b: &[C<T>]) -> Option<C<T>> {
        let WickForm::Operator(_, m) = &self.form else {
            return None;
        };
        Some(match &self.sparse {
            Some(nz) => nz.iter().fold(C::zero(), |acc, &(i, j, v)| acc + a[i] * v * b[j]),
            None => a.iter().zip(&m.matvec(b)).fold(C::zero(), |acc, (x, y)| acc + x * y),
        })
    }

    /// `w` on the phase point `(q, p)`.
    pub fn at_phase(&self, q: &[T], p: &[T]) -> C<T> {
        let zm: Vec<C<T>> = q.iter().zip(p).map(|(&a, &b)| c(a, b) * T::FRAC_1_SQRT_2()).collect();
        let zp: Vec<C<T>> = zm.iter().map(|z| z.conj()).collect();
        self.eval(&zp, &zm)
    }

    /// Kernel values for every pair: rows follow `zp`, columns `zm`.
    pub fn kernel_matrix(&self, zp: &[Vec<C<T>>], zm: &[Vec<C<T>>]) -> CMatrix<T> {
        match &self.form {
            WickForm::Operator(space, m) => {
                // Rows: coherent components of z⁺ (no conjugation, z⁺ already is ū).
                let a = CMatrix::from_fn(zp.len(), space.dim(), |_, _| C::zero());
                let mut a = a;
                for (i, z) in zp.iter().enumerate() {
                    for (k, v) in space.coherent_vector(z).into_iter().enumerate() {
                        a[(i, k)] = v;
                    }
                }
                let mut b = CMatrix::zeros(space.dim(), zm.len());
                for (j, z) in zm.iter().enumerate() {
                    for (k, v) in space.coherent_vector(z).into_iter().enumerate() {
                        b[(k, j)] = v;
                    }
                }
                a.matmul(&m.matmul(&b))
            }
            WickForm::Polynomial(poly) => {
                // ∑_t c_t (z⁺)^{a_t} (z⁻)^{b_t} as A·B, then times exp(z⁺·z⁻/ℏ).
                let m = self.modes;
                let terms: Vec<(&Vec<u32>, C<T>)> = poly.terms().map(|(e, &v)| (e, v)).collect();
                let mono = |z: &[C<T>], e: &[u32]| z.iter().zip(e).fold(C::one(), |acc, (x, &k)| acc * x.powu(k));
                let a = CMatrix::from_fn(zp.len(), terms.len(), |i, t| mono(&zp[i], &terms[t].0[..m]) * terms[t].1);
                let b = CMatrix::from_fn(terms.len(), zm.len(), |t, j| mono(&zm[j], &terms[t].0[m..]));
                let mut k = a.matmul(&b);
                let cols = zm.len();
                let hbar = self.hbar;
                k.as_mut_slice().par_chunks_mut(cols.max(1)).enumerate().for_each(|(i, row)| {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v *= (dot(&zp[i], &zm[j]) / hbar).exp();
                    }
                });
                k
            }
            WickForm::Product(slices, points) => {
                let nodes = chain_nodes(*points, self.hbar).expect("validated at construction");
                let xs: Vec<Vec<C<T>>> = nodes.iter().map(|(x, _)| vec![*x]).collect();
                let xbar: Vec<Vec<C<T>>> = nodes.iter().map(|(x, _)| vec![x.conj()]).collect();
                let weights: Vec<T> = nodes.iter().map(|&(_, w)| w).collect();
                let last = slices.len() - 1;
                let mut acc = slices[0].kernel_matrix(zp, if last == 0 { zm } else { &xs });
                for (j, s) in slices.iter().enumerate().skip(1) {
                    scale_columns(&mut acc, &weights);
                    let k = s.kernel_matrix(&xbar, if j == last { zm } else { &xs });
                    acc = acc.matmul(&k);
                }
                acc
            }
        }
    }

    /// Sample on a one-mode phase grid as a Normal-rule symbol.
    pub fn sample(&self, grid: &PhaseGrid<T>) -> Result<Symbol<T>> {
        if self.modes != 1 || grid.dim() != 1 {
            return Err(OmegaError::Unsupported("grid sampling of normal symbols is one-mode only".into()));
        }
        Ok(Symbol::from_fn_1d(grid, OrderingRule::Normal, |q, p| self.at_phase(&[q], &[p])))
    }
}

fn dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(C::zero(), |acc, (x, y)| acc + x * y)
}

fn scale_columns<T: Real>(m: &mut CMatrix<T>, w: &[T]) {
    let cols = m.cols();
    for (k, v) in m.as_mut_slice().iter_mut().enumerate() {
        *v *= w[k % cols];
    }
}

/// Chain nodes `ξ = ℏζ` (so `E|ξ|² = ℏ`) with their weights.
fn chain_nodes<T: Real>(points: usize, hbar: T) -> Result<Vec<(C<T>, T)>> {
    Ok(gaussian_rule(points, hbar)?.into_iter().map(|(z, w)| (z * hbar, w)).collect())
}

/// Normal symbol of the Fock matrix `w`, checked on `probes` (pairs
/// `(z⁺, z⁻)`): every probe must keep the coherent-vector tail below
/// [`TRUNCATION_TAIL_LIMIT`].
pub fn wick_symbol_of<T: Real>(
    space: &FockSpace<T>,
    matrix: &CMatrix<T>,
    probes: &[Probe<T>],
) -> Result<WickSymbol<T>> {
    for (zp, zm) in probes {
        let conj: Vec<C<T>> = zp.iter().map(|z| z.conj()).collect();
        let tail = space.tail_fraction(&conj).max(space.tail_fraction(zm));
        if tail > TRUNCATION_TAIL_LIMIT {
            return Err(OmegaError::TruncationDominance { fraction: tail });
        }
    }
    WickSymbol::operator(space, matrix.clone())
}

/// Integration method for the slice chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormalMethod {
    /// Tensor Gauss–Hermite with `points` nodes per real axis (one mode,
    /// at most [`MAX_QUADRATURE_SLICES`] slices).
    GaussHermite { points: usize },
    /// Monte Carlo over independent batches; the error estimate is the
    /// standard error of the batch means.
    MonteCarlo { samples: usize, batches: usize, seed: u64 },
}

impl NormalMethod {
    pub fn name(&self) -> &'static str {
        match self {
            NormalMethod::GaussHermite { .. } => "gauss-hermite",
            NormalMethod::MonteCarlo { .. } => "monte-carlo",
        }
    }
}

impl Default for NormalMethod {
    fn default() -> Self {
        NormalMethod::GaussHermite {
            points: DEFAULT_QUADRATURE_POINTS,
        }
    }
}

/// Value of a normal symbol with an error estimate (point-doubling change
/// for quadrature, standard error for Monte Carlo).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalValue<T: Real> {
    pub value: C<T>,
    pub error_estimate: f64,
}

/// The normal symbol of `Op(w₁)⋯Op(w_N)` evaluated at `probes` (pairs
/// `(z⁺, z⁻)`), with `w₁` acting last:
///
/// `w(z⁺, z⁻) = e^{−z⁺·z⁻/ℏ} ∫ ∏_{j=1}^{N} w_j(ξ̄_{j−1}, ξ_j) e^{ξ̄_{j−1}·ξ_j/ℏ} ∏_{j=1}^{N−1} dμ(ξ_j)`
///
/// where `ξ̄₀ = z⁺`, `ξ_N = z⁻` and `μ` is the complex Gaussian with
/// `E|ξ|² = ℏ` (the image of `γ_ℏ` under `ξ = ℏζ`).
///
/// `tolerance` bounds the point-doubling change for quadrature and the
/// standard error for Monte Carlo; `None` skips the check (and for
/// quadrature, the doubled rule).
pub fn normal_product_integral<T: Real>(
    slices: &[WickSymbol<T>],
    probes: &[Probe<T>],
    method: NormalMethod,
    tolerance: Option<f64>,
) -> Result<Vec<NormalValue<T>>> {
    let first = slices
        .first()
        .ok_or_else(|| OmegaError::InvalidArgument("normal_product_integral needs at least one slice".into()))?;
    let (modes, hbar) = (first.modes, first.hbar);
    if slices.iter().any(|s| s.modes != modes || s.hbar != hbar) {
        return Err(OmegaError::InvalidArgument("slices differ in modes or hbar".into()));
    }
    if probes.iter().any(|(a, b)| a.len() != modes || b.len() != modes) {
        return Err(OmegaError::DimensionMismatch {
            expected: modes,
            found: probes.iter().map(|(a, _)| a.len()).find(|&l| l != modes).unwrap_or(0),
        });
    }
    if slices.len() == 1 {
        return Ok(probes
            .iter()
            .map(|(zp, zm)| NormalValue {
                value: first.eval(zp, zm),
                error_estimate: 0.0,
            })
            .collect());
    }
    match method {
        NormalMethod::GaussHermite { points } => {
            if modes != 1 {
                return Err(OmegaError::Unsupported(
                    "tensor quadrature of the slice chain is one-mode only; use Monte Carlo".into(),
                ));
            }
            if slices.len() > MAX_QUADRATURE_SLICES {
                return Err(OmegaError::InvalidArgument(format!(
                    "quadrature handles at most {MAX_QUADRATURE_SLICES} slices, got {}",
                    slices.len()
                )));
            }
            let coarse = quadrature_chain(slices, probes, points)?;
            let Some(tol) = tolerance else {
                return Ok(coarse.into_iter().map(|value| NormalValue { value, error_estimate: 0.0 }).collect());
            };
            let fine = quadrature_chain(slices, probes, 2 * points)?;
            let out: Vec<NormalValue<T>> = coarse
                .iter()
                .zip(&fine)
                .map(|(&a, &b)| NormalValue {
                    value: a,
                    error_estimate: (a - b).norm().to_f64_lossy(),
                })
                .collect();
            let change = out.iter().map(|v| v.error_estimate).fold(0.0, f64::max);
            if !(change <= tol) {
                return Err(OmegaError::QuadratureNotConverged { change, tolerance: tol });
            }
            Ok(out)
        }
        NormalMethod::MonteCarlo { samples, batches, seed } => {
            if batches < 2 || samples < batches {
                return Err(OmegaError::InvalidArgument("Monte Carlo needs at least 2 batches and one sample per batch".into()));
            }
            let out = monte_carlo_chain(slices, probes, samples, batches, seed);
            if let Some(bound) = tolerance {
                let worst = out.iter().map(|v| v.error_estimate).fold(0.0, f64::max);
                if !(worst <= bound) {
                    return Err(OmegaError::VarianceTooLarge { stderr: worst, bound });
                }
            }
            Ok(out)
        }
    }
}

/// Lazy normal symbol of a product, evaluated by quadrature on demand.
pub fn normal_product_symbol<T: Real>(slices: Vec<WickSymbol<T>>, points: usize) -> Result<WickSymbol<T>> {
    let first = slices
        .first()
        .ok_or_else(|| OmegaError::InvalidArgument("a product needs at least one slice".into()))?;
    let (modes, hbar) = (first.modes, first.hbar);
    if modes != 1 || slices.iter().any(|s| s.modes != 1 || s.hbar != hbar) {
        return Err(OmegaError::Unsupported("lazy products are one-mode only".into()));
    }
    if points == 0 {
        return Err(OmegaError::InvalidArgument("quadrature needs at least one point".into()));
    }
    Ok(WickSymbol {
        modes,
        hbar,
        form: WickForm::Product(slices, points),
        sparse: None,
    })
}

fn quadrature_chain<T: Real>(
    slices: &[WickSymbol<T>],
    probes: &[Probe<T>],
    points: usize,
) -> Result<Vec<C<T>>> {
    let product = normal_product_symbol(slices.to_vec(), points)?;
    let zp: Vec<Vec<C<T>>> = probes.iter().map(|(a, _)| a.clone()).collect();
    let zm: Vec<Vec<C<T>>> = probes.iter().map(|(_, b)| b.clone()).collect();
    // One pass for all probes; only the paired (diagonal) entries are kept.
    let k = product.kernel_matrix(&zp, &zm);
    Ok(probes
        .iter()
        .enumerate()
        .map(|(i, (a, b))| k[(i, i)] * (-dot(a, b) / product.hbar).exp())
        .collect())
}

/// Proposal widening for the chain variables. Sampling `ξ` straight from
/// `μ` leaves the estimator with infinite variance once `N ≥ 3`: the second
/// moment carries `exp(2 Re ∑ ξ̄_j ξ_{j+1}/ℏ)` against `exp(−∑|ξ_j|²/ℏ)`, and
/// the path coupling has top eigenvalue `2cos(π/N) ≥ 1`. Drawing from
/// `E|ξ|² = sℏ` with `s = 1/(1 − cos(π/N))` keeps the second moment finite.
pub fn monte_carlo_widening(slices: usize) -> f64 {
    if slices < 3 {
        1.0
    } else {
        1.0 / (1.0 - (std::f64::consts::PI / slices as f64).cos())
    }
}

fn monte_carlo_chain<T: Real>(
    slices: &[WickSymbol<T>],
    probes: &[Probe<T>],
    samples: usize,
    batches: usize,
    seed: u64,
) -> Vec<NormalValue<T>> {
    let n = slices.len();
    let modes = slices[0].modes;
    let hbar = slices[0].hbar;
    let s = monte_carlo_widening(n);
    let sigma = (s * hbar.to_f64_lossy() / 2.0).sqrt();
    let per_batch = samples / batches;
    let h = hbar.to_f64_lossy();
    // Operator slices sharing one Fock space reuse coherent vectors per sample.
    let space: Option<FockSpace<T>> = match &slices[0].form {
        WickForm::Operator(sp, _) => Some(sp.clone()),
        _ => None,
    }
    .filter(|sp| slices.iter().all(|s| matches!(&s.form, WickForm::Operator(o, _) if o == sp)));
    let probe_vectors: Option<Vec<Probe<T>>> = space
        .as_ref()
        .map(|sp| probes.iter().map(|(a, b)| (sp.coherent_vector(a), sp.coherent_vector(b))).collect());
    // Each batch owns one ChaCha stream, so results do not depend on threads.
    let batch_means: Vec<Vec<num_complex::Complex<f64>>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut sums = vec![num_complex::Complex::new(0.0, 0.0); probes.len()];
            let mut xi: Vec<Vec<C<T>>> = vec![vec![C::zero(); modes]; n - 1];
            for _ in 0..per_batch {
                let mut log_w = 0.0;
                for v in xi.iter_mut() {
                    for z in v.iter_mut() {
                        let g1: f64 = StandardNormal.sample(&mut rng);
                        let g2: f64 = StandardNormal.sample(&mut rng);
                        let (x, y) = (sigma * g1, sigma * g2);
                        log_w += s.ln() - (1.0 - 1.0 / s) * (x * x + y * y) / h;
                        *z = c(T::lit(x), T::lit(y));
                    }
                }
                let weight = log_w.exp();
                let conj: Vec<Vec<C<T>>> = xi.iter().map(|v| v.iter().map(|z| z.conj()).collect()).collect();
                let (vec_xi, vec_conj): (Vec<_>, Vec<_>) = match &space {
                    Some(sp) => (
                        xi.iter().map(|v| sp.coherent_vector(v)).collect(),
                        conj.iter().map(|v| sp.coherent_vector(v)).collect(),
                    ),
                    None => (Vec::new(), Vec::new()),
                };
                let link = |j: usize, left: usize, right: usize| -> C<T> {
                    if space.is_some() {
                        if let Some(k) = slices[j].kernel_from_vectors(&vec_conj[left], &vec_xi[right]) {
                            return k;
                        }
                    }
                    slices[j].kernel(&conj[left], &xi[right])
                };
                let mut inner = C::<T>::one();
                for j in 1..n - 1 {
                    inner *= link(j, j - 1, j);
                }
                for (i, (slot, (zp, zm))) in sums.iter_mut().zip(probes).enumerate() {
                    let head = match (&space, &probe_vectors) {
                        (Some(_), Some(pv)) => slices[0].kernel_from_vectors(&pv[i].0, &vec_xi[0]),
                        _ => None,
                    }
                    .unwrap_or_else(|| slices[0].kernel(zp, &xi[0]));
                    let tail = match (&space, &probe_vectors) {
                        (Some(_), Some(pv)) => slices[n - 1].kernel_from_vectors(&vec_conj[n - 2], &pv[i].1),
                        _ => None,
                    }
                    .unwrap_or_else(|| slices[n - 1].kernel(&conj[n - 2], zm));
                    let v = head * inner * tail;
                    *slot += num_complex::Complex::new(v.re.to_f64_lossy(), v.im.to_f64_lossy()) * weight;
                }
            }
            sums.into_iter().map(|x| x / per_batch as f64).collect()
        })
        .collect();
    probes
        .iter()
        .enumerate()
        .map(|(i, (zp, zm))| {
            let norm = (-dot(zp, zm) / hbar).exp();
            let norm = num_complex::Complex::new(norm.re.to_f64_lossy(), norm.im.to_f64_lossy());
            let vals: Vec<num_complex::Complex<f64>> = batch_means.iter().map(|m| m[i] * norm).collect();
            let mean = vals.iter().sum::<num_complex::Complex<f64>>() / batches as f64;
            let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (batches - 1) as f64;
            NormalValue {
                value: c(T::lit(mean.re), T::lit(mean.im)),
                error_estimate: (var / batches as f64).sqrt(),
            }
        })
        .collect()
}

/// Which heat exponent links normal and Weyl symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HeatExponent {
    /// `f = exp[(ℏ²/2) ∂²/∂z⁺∂z⁻] w`, taken verbatim.
    PaperHbarSquared,
    /// `f = exp[−(ℏ/2) ∂²/∂z⁺∂z⁻] w`, which gives `Op_W(f) = Op_N(w)` under
    /// `[ẑ⁻, ẑ⁺] = ℏ`; the inverse map is smoothing by a Gaussian of
    /// covariance `E[ζ⁺ζ⁻] = ℏ/2`.
    #[default]
    Hbar,
}

impl HeatExponent {
    pub fn name(self) -> &'static str {
        match self {
            HeatExponent::PaperHbarSquared => "hbar-squared",
            HeatExponent::Hbar => "hbar",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "hbar-squared" => Some(HeatExponent::PaperHbarSquared),
            "hbar" => Some(HeatExponent::Hbar),
            _ => None,
        }
    }

    /// Coefficient `κ` of `exp(κ ∂⁺∂⁻)` for the normal-to-Weyl direction.
    fn coefficient<T: Real>(self, hbar: T) -> T {
        match self {
            HeatExponent::PaperHbarSquared => hbar * hbar / T::lit(2.0),
            HeatExponent::Hbar => -hbar / T::lit(2.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WickDirection {
    WickToWeyl,
    WeylToWick,
}

/// `exp(κ ∑_j ∂²/∂z⁺_j∂z⁻_j) p`, exact on polynomials in `(z⁺, z⁻)`.
fn heat_flow<T: Real>(p: &MPoly<T>, kappa: T) -> MPoly<T> {
    let m = p.nvars() / 2;
    let mut out = p.clone();
    let mut term = p.clone();
    let mut k = 0usize;
    loop {
        let mut next = MPoly::zero(p.nvars());
        for j in 0..m {
            next = &next + &term.derivative(j).derivative(m + j);
        }
        if next.is_zero() {
            break;
        }
        k += 1;
        term = next.scale(re(kappa / T::from_usize_lossy(k)));
        out = &out + &term;
    }
    out
}

/// Convert a polynomial normal symbol to a Weyl symbol or back. Both the
/// input and output use the variables `(z⁺₁..z⁺_m, z⁻₁..z⁻_m)`.
pub fn weyl_wick_convert<T: Real>(p: &MPoly<T>, direction: WickDirection, exponent: HeatExponent, hbar: T) -> MPoly<T> {
    let kappa = exponent.coefficient(hbar);
    match direction {
        WickDirection::WickToWeyl => heat_flow(p, kappa),
        WickDirection::WeylToWick => heat_flow(p, -kappa),
    }
}

/// Grid form of [`weyl_wick_convert`]: the heat operator is the spectral
/// multiplier `exp(−κ|ζ|²/(2ℏ²))`, guarded like an ordering conversion.
pub fn weyl_wick_convert_grid<T: Real>(f: &Symbol<T>, direction: WickDirection, exponent: HeatExponent) -> Result<Symbol<T>> {
    let (from, to) = match direction {
        WickDirection::WickToWeyl => (OrderingRule::Normal, OrderingRule::Weyl),
        WickDirection::WeylToWick => (OrderingRule::Weyl, OrderingRule::Normal),
    };
    if f.domain() != Domain::Phase {
        return Err(OmegaError::InvalidArgument("expected a phase-domain symbol".into()));
    }
    if f.ordering() != from {
        return Err(OmegaError::InvalidArgument(format!("symbol is tagged {} but the conversion starts from {from}", f.ordering())));
    }
    let hbar = f.hbar();
    let kappa = match direction {
        WickDirection::WickToWeyl => exponent.coefficient(hbar),
        WickDirection::WeylToWick => -exponent.coefficient(hbar),
    };
    let mut g = symplectic_fourier_unchecked(f);
    check_band(&g)?;
    let fgrid = g.grid().clone();
    let num: Vec<C<T>> = (0..fgrid.len())
        .map(|i| re((-kappa * fgrid.point(i).norm_sqr() / (T::lit(2.0) * hbar * hbar)).exp()))
        .collect();
    let den = vec![C::one(); fgrid.len()];
    ratio_in_place(g.values_mut(), &num, &den, &ConvertOptions::default())?;
    Ok(inverse_symplectic_fourier_unchecked(&g).with_ordering(to))
}

/// Outcome of the matrix cross-check `Op_W(f) = Op_N(w)` for one exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeylWickCheck {
    pub exponent: HeatExponent,
    pub max_error: f64,
    pub passes: bool,
}

/// Rewrite a one-mode ladder polynomial in `(q, p)`.
pub fn ladder_to_qp<T: Real>(w: &MPoly<T>) -> MPoly<T> {
    let (u, v) = ladder_variables::<T>();
    let mut out = MPoly::zero(2);
    for (e, &coef) in w.terms() {
        out = &out + &(&u.pow(e[0]) * &v.pow(e[1])).scale(coef);
    }
    out
}

/// Test both exponents on a few normal-ordered polynomials: convert to a
/// Weyl symbol, quantize both sides in `levels` Fock levels and compare
/// the interior blocks.
pub fn weyl_wick_cross_check<T: Real>(hbar: T, levels: usize) -> Result<Vec<WeylWickCheck>> {
    let cases: Vec<MPoly<T>> = vec![
        MPoly::monomial(2, vec![1, 1], C::one()),
        MPoly::monomial(2, vec![2, 2], C::one()),
        &MPoly::monomial(2, vec![2, 1], c(T::lit(0.5), T::lit(-1.0))) + &MPoly::monomial(2, vec![0, 1], re(T::lit(3.0))),
    ];
    let basis = Basis::fock(levels);
    let k = levels.saturating_sub(6).max(1);
    let mut out = Vec::new();
    for exponent in [HeatExponent::PaperHbarSquared, HeatExponent::Hbar] {
        let mut worst = 0.0f64;
        for w in &cases {
            let f = weyl_wick_convert(w, WickDirection::WickToWeyl, exponent, hbar);
            let lhs = quantize_polynomial(&ladder_to_qp(&f), OrderingRule::Weyl, &basis, hbar)?.interior(k);
            let rhs = quantize_polynomial(&ladder_to_qp(w), OrderingRule::Normal, &basis, hbar)?.interior(k);
            let scale = rhs.max_abs().to_f64_lossy().max(1.0);
            worst = worst.max((&lhs - &rhs).max_abs().to_f64_lossy() / scale);
        }
        out.push(WeylWickCheck {
            exponent,
            max_error: worst,
            passes: worst <= 1e-10,
        });
    }
    Ok(out)
}

/// Normal symbols of the backward-Euler slices, latest first (the order
/// expected by [`normal_product_integral`]). Each slice is the normal
/// symbol of `(1 + iΔt_j Ĥ(t_{j+1})/ℏ)^{−1}` in the setup's Fock space.
pub fn backward_euler_slices<T: Real>(
    h: &Hamiltonian<T>,
    p: &Partition<T>,
    setup: &EvolutionSetup<T>,
) -> Result<Vec<WickSymbol<T>>> {
    let space = FockSpace::new(1, setup.levels, setup.hbar)?;
    let mut out = step_factors(h, p, Scheme::BackwardOperator, setup)?
        .into_iter()
        .map(|m| WickSymbol::operator(&space, m))
        .collect::<Result<Vec<_>>>()?;
    out.reverse();
    Ok(out)
}

/// The slice-chain approximation `u^P(z⁺, z⁻)` of the normal symbol of the
/// evolution generated by `h` over the partition.
pub fn coherent_path_integral<T: Real>(
    h: &Hamiltonian<T>,
    p: &Partition<T>,
    z_plus: C<T>,
    z_minus: C<T>,
    method: NormalMethod,
    tolerance: Option<f64>,
    setup: &EvolutionSetup<T>,
) -> Result<NormalValue<T>> {
    let space = FockSpace::new(1, setup.levels, setup.hbar)?;
    let probe = (vec![z_plus], vec![z_minus]);
    let tail = space.tail_fraction(&[z_plus.conj()]).max(space.tail_fraction(&[z_minus]));
    if tail > TRUNCATION_TAIL_LIMIT {
        return Err(OmegaError::TruncationDominance { fraction: tail });
    }
    let slices = backward_euler_slices(h, p, setup)?;
    Ok(normal_product_integral(&slices, &[probe], method, tolerance)?[0])
}

/// Normal symbol of the exact propagator `exp(−i(t₁ − t₀)Ĥ/ℏ)` at one point.
pub fn exact_normal_symbol<T: Real>(
    h: &Hamiltonian<T>,
    t0: T,
    t1: T,
    z_plus: C<T>,
    z_minus: C<T>,
    setup: &EvolutionSetup<T>,
) -> Result<C<T>> {
    let space = FockSpace::new(1, setup.levels, setup.hbar)?;
    let u = exact_propagator(h, t0, t1, OrderingRule::Weyl, setup)?;
    Ok(WickSymbol::operator(&space, u)?.eval(&[z_plus], &[z_minus]))
}

/// Probe `(z⁺, z⁻)` for the matrix element between two coherent states.
pub fn coherent_probe<T: Real>(bra: &CoherentState<T>, ket: &CoherentState<T>) -> Probe<T> {
    (bra.amplitude().iter().map(|z| z.conj()).collect(), ket.amplitude())
}

/// One row of a coherent-path result file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentPathRecord<T: Real> {
    pub slices: usize,
    pub z_plus: C<T>,
    pub z_minus: C<T>,
    pub value: C<T>,
    pub error_estimate: f64,
}

pub const COHERENT_CSV_HEADER: &str = "N_slices,z_plus_re,z_plus_im,z_minus_re,z_minus_im,value_re,value_im,error_estimate";

/// CSV text; the first line records the coherent-state convention.
pub fn coherent_path_csv<T: Real>(records: &[CoherentPathRecord<T>], convention: CoherentConvention) -> String {
    let mut s = format!("# coherent_convention={}\n{COHERENT_CSV_HEADER}\n", convention.flag());
    for r in records {
        s.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.slices,
            r.z_plus.re.to_f64_lossy(),
            r.z_plus.im.to_f64_lossy(),
            r.z_minus.re.to_f64_lossy(),
            r.z_minus.im.to_f64_lossy(),
            r.value.re.to_f64_lossy(),
            r.value.im.to_f64_lossy(),
            r.error_estimate
        ));
    }
    s
}
