//! Symbol ↔ operator maps in truncated bases.
//!
//! Two bases are available: the Fock basis (first `N` oscillator levels)
//! and a position grid `x_j = −L + j·2L/n` with spectral momentum.
//! Polynomial symbols are quantized by the exact ordering formulas of each
//! rule; grid symbols by the Weyl map, after converting to the Weyl rule.

use num_traits::{One, Zero};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{OmegaError, Result};
use crate::fock;
use crate::linalg::CMatrix;
use crate::omega::{convert_symbol, ConvertOptions};
use crate::ordering::OrderingRule;
use crate::phase_grid::{symplectic_fourier_unchecked, Domain, PhaseGrid, Symbol};
use crate::poly::MPoly;
use crate::scalar::{binomial, c, re, Real, C};

/// Truncated Hilbert-space basis an operator is represented in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Basis<T: Real> {
    /// First `levels` number states.
    Fock { levels: usize },
    /// `n` points on `[−L, L)` with periodic spectral momentum.
    PositionGrid { n: usize, l: T },
}

impl<T: Real> Basis<T> {
    pub fn dim(&self) -> usize {
        match *self {
            Basis::Fock { levels } => levels,
            Basis::PositionGrid { n, .. } => n,
        }
    }

    pub fn fock(levels: usize) -> Self {
        Basis::Fock { levels }
    }

    /// Position-grid points.
    pub fn points(&self) -> Option<Vec<T>> {
        match *self {
            Basis::PositionGrid { n, l } => {
                let dx = (l + l) / T::from_usize_lossy(n);
                Some((0..n).map(|j| -l + T::from_usize_lossy(j) * dx).collect())
            }
            Basis::Fock { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n < 8 {
            return Err(OmegaError::InvalidArgument(format!("basis dimension {n} below 8")));
        }
        if let Basis::PositionGrid { n, l } = *self {
            if n % 2 != 0 || !(l > T::zero()) {
                return Err(OmegaError::InvalidArgument("position grid needs even n and L > 0".into()));
            }
        }
        Ok(())
    }
}

/// Dense operator in a truncated basis.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix<T: Real> {
    pub basis: Basis<T>,
    pub matrix: CMatrix<T>,
    pub hbar: T,
}

impl<T: Real> OperatorMatrix<T> {
    pub fn new(basis: Basis<T>, matrix: CMatrix<T>, hbar: T) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() != basis.dim() {
            return Err(OmegaError::DimensionMismatch {
                expected: basis.dim(),
                found: matrix.rows(),
            });
        }
        Ok(Self { basis, matrix, hbar })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Upper-left `k × k` block, where truncation artifacts are absent.
    pub fn interior(&self, k: usize) -> CMatrix<T> {
        self.matrix.block(k)
    }

    /// Relative Frobenius size of the anti-Hermitian part on a block.
    pub fn anti_hermitian_ratio(&self, k: usize) -> T {
        self.interior(k).anti_hermitian_ratio()
    }

    /// Share of `‖A‖²_F` carried by the last `rows` rows and columns.
    pub fn boundary_fraction(&self, rows: usize) -> T {
        let n = self.dim();
        let cut = n.saturating_sub(rows);
        let (mut edge, mut total) = (T::zero(), T::zero());
        for i in 0..n {
            for j in 0..n {
                let e = self.matrix[(i, j)].norm_sqr();
                total += e;
                if i >= cut || j >= cut {
                    edge += e;
                }
            }
        }
        if total > T::zero() {
            edge / total
        } else {
            T::zero()
        }
    }
}

/// Canonical operators `(q̂, p̂)` in a basis.
pub fn canonical_pair<T: Real>(basis: &Basis<T>, hbar: T) -> (CMatrix<T>, CMatrix<T>) {
    match *basis {
        Basis::Fock { levels } => (fock::position(levels, hbar), fock::momentum(levels, hbar)),
        Basis::PositionGrid { n, l } => position_grid_operators(n, l, hbar),
    }
}

/// `q̂` (diagonal) and spectral `p̂` on the position grid. Momenta are the DFT
/// frequencies `πℏ k/L`, `k ∈ [−n/2, n/2)`.
pub fn position_grid_operators<T: Real>(n: usize, l: T, hbar: T) -> (CMatrix<T>, CMatrix<T>) {
    let dx = (l + l) / T::from_usize_lossy(n);
    let q = CMatrix::from_diagonal(&(0..n).map(|j| re(-l + T::from_usize_lossy(j) * dx)).collect::<Vec<_>>());
    let dp = T::PI() * hbar / l;
    let inv_n = T::one() / T::from_usize_lossy(n);
    // P_jk = (1/n) Σ_k' p_k' e^{2πi k'(j−k)/n}, a function of j − k only.
    let col: Vec<C<T>> = (0..n)
        .map(|s| {
            let mut acc = C::zero();
            for k in 0..n {
                let kk = k as isize - (n / 2) as isize;
                let pk = dp * T::lit(kk as f64);
                let ph = T::TAU() * T::lit((kk * s as isize) as f64) * inv_n;
                acc += C::from_polar(pk, ph);
            }
            acc * inv_n
        })
        .collect();
    let p = CMatrix::from_fn(n, n, |j, k| col[(j + n - k) % n]);
    (q, p)
}

/// Ladder pair `(ẑ⁺, ẑ⁻)` in a basis.
pub fn ladder_pair<T: Real>(basis: &Basis<T>, hbar: T) -> (CMatrix<T>, CMatrix<T>) {
    match *basis {
        Basis::Fock { levels } => (fock::creation(levels, hbar), fock::annihilation(levels, hbar)),
        Basis::PositionGrid { .. } => {
            let (q, p) = canonical_pair(basis, hbar);
            let s = T::FRAC_1_SQRT_2();
            let ip = p.scale(c(T::zero(), T::one()));
            ((&q - &ip).scale_real(s), (&q + &ip).scale_real(s))
        }
    }
}

/// A monomial symbol of one degree of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MonomialOp {
    /// `q^n p^m`.
    Qp { n: u32, m: u32 },
    /// `(z⁺)^a (z⁻)^b` in the ladder pairing, where `z⁺` is the variable
    /// matched with the creator `ẑ⁺`; on phase space `z⁺ = (q − ip)/√2`.
    Ladder { a: u32, b: u32 },
}

impl MonomialOp {
    pub fn degree(&self) -> u32 {
        match *self {
            MonomialOp::Qp { n, m } => n + m,
            MonomialOp::Ladder { a, b } => a + b,
        }
    }

    /// The monomial as a polynomial in `(q, p)`.
    pub fn to_polynomial<T: Real>(&self) -> MPoly<T> {
        match *self {
            MonomialOp::Qp { n, m } => MPoly::monomial(2, vec![n, m], C::one()),
            MonomialOp::Ladder { a, b } => {
                let (u, v) = ladder_variables::<T>();
                &u.pow(a) * &v.pow(b)
            }
        }
    }
}

/// `u = (q − ip)/√2` and `v = (q + ip)/√2` as polynomials in `(q, p)`.
pub fn ladder_variables<T: Real>() -> (MPoly<T>, MPoly<T>) {
    let s = T::FRAC_1_SQRT_2();
    let q = MPoly::var(2, 0);
    let p = MPoly::var(2, 1);
    let ip = p.scale(c(T::zero(), T::one()));
    ((&q - &ip).scale(re(s)), (&q + &ip).scale(re(s)))
}

/// `(q, p)` as polynomials in the ladder variables `(u, v)`.
fn qp_in_ladder_variables<T: Real>() -> (MPoly<T>, MPoly<T>) {
    let s = T::FRAC_1_SQRT_2();
    let u = MPoly::var(2, 0);
    let v = MPoly::var(2, 1);
    // q = (u + v)/√2, p = i(u − v)/√2
    ((&u + &v).scale(re(s)), (&u - &v).scale(c(T::zero(), s)))
}

pub const DEFAULT_DEGREE_CAP: u32 = 6;

/// Cached powers of one matrix.
struct Powers<T: Real> {
    list: Vec<CMatrix<T>>,
}

impl<T: Real> Powers<T> {
    fn new(a: CMatrix<T>) -> Self {
        let n = a.rows();
        Self {
            list: vec![CMatrix::identity(n), a],
        }
    }

    fn get(&mut self, k: u32) -> &CMatrix<T> {
        let k = k as usize;
        while self.list.len() <= k {
            let next = self.list[self.list.len() - 1].matmul(&self.list[1]);
            self.list.push(next);
        }
        &self.list[k]
    }
}

/// Builds operator products in a (possibly enlarged) working space.
struct OrderedProducts<T: Real> {
    q: Powers<T>,
    p: Powers<T>,
    cr: Powers<T>,
    an: Powers<T>,
}

impl<T: Real> OrderedProducts<T> {
    fn new(basis: &Basis<T>, hbar: T) -> Self {
        let (q, p) = canonical_pair(basis, hbar);
        let (cr, an) = ladder_pair(basis, hbar);
        Self {
            q: Powers::new(q),
            p: Powers::new(p),
            cr: Powers::new(cr),
            an: Powers::new(an),
        }
    }

    fn qp(&mut self, n: u32, m: u32) -> CMatrix<T> {
        let qn = self.q.get(n).clone();
        qn.matmul(self.p.get(m))
    }

    fn pq(&mut self, m: u32, n: u32) -> CMatrix<T> {
        let pm = self.p.get(m).clone();
        pm.matmul(self.q.get(n))
    }

    fn ladder(&mut self, a: u32, b: u32, creators_left: bool) -> CMatrix<T> {
        let ca = self.cr.get(a).clone();
        let ab = self.an.get(b).clone();
        if creators_left {
            ca.matmul(&ab)
        } else {
            ab.matmul(&ca)
        }
    }

    /// Row of the ordering table for `q^n p^m`.
    fn qp_monomial(&mut self, rule: OrderingRule, n: u32, m: u32) -> CMatrix<T> {
        match rule {
            OrderingRule::Standard => self.qp(n, m),
            OrderingRule::Antistandard => self.pq(m, n),
            OrderingRule::Symmetric => {
                let a = self.qp(n, m);
                let b = self.pq(m, n);
                (&a + &b).scale_real(T::lit(0.5))
            }
            OrderingRule::Weyl => {
                // 2^{−n} Σ_j C(n, j) q̂^{n−j} p̂^m q̂^j
                let dim = self.q.list[1].rows();
                let mut acc = CMatrix::zeros(dim, dim);
                for j in 0..=n {
                    let left = self.q.get(n - j).clone();
                    let mid = self.p.get(m).clone();
                    let right = self.q.get(j).clone();
                    let term = left.matmul(&mid).matmul(&right);
                    acc = &acc + &term.scale_real(T::lit(binomial(n as usize, j as usize)));
                }
                acc.scale_real(T::lit(0.5f64.powi(n as i32)))
            }
            OrderingRule::BornJordan => {
                // (m+1)^{−1} Σ_j p̂^{m−j} q̂^n p̂^j
                let dim = self.q.list[1].rows();
                let mut acc = CMatrix::zeros(dim, dim);
                for j in 0..=m {
                    let left = self.p.get(m - j).clone();
                    let mid = self.q.get(n).clone();
                    let right = self.p.get(j).clone();
                    acc = &acc + &left.matmul(&mid).matmul(&right);
                }
                acc.scale_real(T::one() / T::from_usize_lossy(m as usize + 1))
            }
            OrderingRule::Normal | OrderingRule::Antinormal => {
                let (qv, pv) = qp_in_ladder_variables::<T>();
                let poly = &qv.pow(n) * &pv.pow(m);
                self.ladder_polynomial(&poly, rule == OrderingRule::Normal)
            }
        }
    }

    /// `Σ c_ab (ẑ⁺)^a (ẑ⁻)^b` (or the reversed order) for a polynomial in `(u, v)`.
    fn ladder_polynomial(&mut self, poly: &MPoly<T>, creators_left: bool) -> CMatrix<T> {
        let dim = self.q.list[1].rows();
        let mut acc = CMatrix::zeros(dim, dim);
        for (e, &coef) in poly.terms() {
            acc = &acc + &self.ladder(e[0], e[1], creators_left).scale(coef);
        }
        acc
    }

    fn monomial(&mut self, mono: MonomialOp, rule: OrderingRule) -> CMatrix<T> {
        match (mono, rule) {
            (MonomialOp::Ladder { a, b }, OrderingRule::Normal) => self.ladder(a, b, true),
            (MonomialOp::Ladder { a, b }, OrderingRule::Antinormal) => self.ladder(a, b, false),
            (MonomialOp::Ladder { .. }, _) => {
                let poly = mono.to_polynomial::<T>();
                self.polynomial(&poly, rule)
            }
            (MonomialOp::Qp { n, m }, _) => self.qp_monomial(rule, n, m),
        }
    }

    fn polynomial(&mut self, poly: &MPoly<T>, rule: OrderingRule) -> CMatrix<T> {
        let dim = self.q.list[1].rows();
        let mut acc = CMatrix::zeros(dim, dim);
        for (e, &coef) in poly.terms() {
            acc = &acc + &self.qp_monomial(rule, e[0], e[1]).scale(coef);
        }
        acc
    }
}

/// Working basis for exact products of degree `deg`: the Fock basis is
/// enlarged so the leading block of every product is exact.
fn working_basis<T: Real>(basis: &Basis<T>, deg: u32) -> Basis<T> {
    match *basis {
        Basis::Fock { levels } => Basis::Fock {
            levels: levels + deg as usize + 1,
        },
        b => b,
    }
}

/// Operator of a monomial under one row of the ordering table.
///
/// In the Fock basis the products are formed in `N + deg + 1` levels and
/// compressed, so every entry of the returned `N × N` matrix equals the
/// corresponding matrix element of the untruncated operator. In the position
/// basis products of the grid `q̂`, `p̂` are returned as they are.
pub fn quantize_monomial<T: Real>(mono: MonomialOp, rule: OrderingRule, basis: &Basis<T>, hbar: T) -> Result<OperatorMatrix<T>> {
    quantize_monomial_capped(mono, rule, basis, hbar, DEFAULT_DEGREE_CAP)
}

pub fn quantize_monomial_capped<T: Real>(
    mono: MonomialOp,
    rule: OrderingRule,
    basis: &Basis<T>,
    hbar: T,
    cap: u32,
) -> Result<OperatorMatrix<T>> {
    basis.validate()?;
    let deg = mono.degree();
    if deg > cap {
        return Err(OmegaError::DegreeExceeded {
            degree: deg as usize,
            cap: cap as usize,
        });
    }
    let work = working_basis(basis, deg);
    let mut ops = OrderedProducts::new(&work, hbar);
    let m = ops.monomial(mono, rule).block(basis.dim());
    OperatorMatrix::new(*basis, m, hbar)
}

/// Operator of a polynomial symbol (variables `q, p`) under a rule.
pub fn quantize_polynomial<T: Real>(f: &MPoly<T>, rule: OrderingRule, basis: &Basis<T>, hbar: T) -> Result<OperatorMatrix<T>> {
    basis.validate()?;
    if f.nvars() != 2 {
        return Err(OmegaError::DimensionMismatch {
            expected: 2,
            found: f.nvars(),
        });
    }
    let deg = f.degree() as u32;
    let work = working_basis(basis, deg);
    let mut ops = OrderedProducts::new(&work, hbar);
    let m = ops.polynomial(f, rule).block(basis.dim());
    OperatorMatrix::new(*basis, m, hbar)
}

// ---------------------------------------------------------------------------
// Grid symbols.

/// How a Weyl symbol on a grid is summed into a Fock-basis operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantizeMethod {
    /// `Σ_ζ f̃(ζ) D(ζ) dλ̃` over the frequency lattice, with displacement
    /// matrix elements from their Laguerre closed form.
    Displacement,
    /// `Σ_z f(z) Δ(z) dλ` over the phase lattice with the Wigner kernel.
    WignerKernel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizeOptions {
    pub method: QuantizeMethod,
    /// Fail when the trailing rows and columns carry more than this share
    /// of `‖A‖²_F`. `None` disables the check.
    pub truncation_limit: Option<f64>,
}

impl Default for QuantizeOptions {
    fn default() -> Self {
        Self {
            method: QuantizeMethod::Displacement,
            truncation_limit: None,
        }
    }
}

/// Rows/columns inspected by the truncation-dominance check.
pub fn truncation_rows(levels: usize) -> usize {
    (levels / 16).max(2)
}

pub const TRUNCATION_LIMIT: f64 = 1e-2;

/// Cells per parallel task; fixed so the summation order never depends on
/// the thread count.
const CHUNK: usize = 128;

fn axpy<T: Real>(acc: &mut CMatrix<T>, s: C<T>, x: &CMatrix<T>) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *a += s * *b;
    }
}

/// `Σ_i term(i)` over `0..count`, chunked and reduced in index order.
fn ordered_sum<T: Real>(count: usize, dim: usize, term: impl Fn(usize, &mut CMatrix<T>) + Sync) -> CMatrix<T> {
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<CMatrix<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = CMatrix::zeros(dim, dim);
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                term(i, &mut acc);
            }
            acc
        })
        .collect();
    parts.into_iter().fold(CMatrix::zeros(dim, dim), |a, b| &a + &b)
}

/// Coherent amplitude of the displacement `exp((i/ℏ)(p_ζ q̂ − q_ζ p̂))`.
pub fn displacement_amplitude<T: Real>(q_zeta: T, p_zeta: T, hbar: T) -> C<T> {
    fock::alpha_of(q_zeta, p_zeta, hbar)
}

fn weyl_input<T: Real>(f: &Symbol<T>) -> Result<Symbol<T>> {
    if f.domain() != Domain::Phase {
        return Err(OmegaError::InvalidArgument("quantize_symbol expects a phase-domain symbol".into()));
    }
    if f.grid().dim() != 1 {
        return Err(OmegaError::Unsupported("operator bases are single-mode; d must be 1".into()));
    }
    if f.ordering() == OrderingRule::Weyl {
        Ok(f.clone())
    } else {
        convert_symbol(f, f.ordering(), OrderingRule::Weyl)
    }
}

/// Weyl quantization of a grid symbol (converted to the Weyl rule first if
/// it carries another ordering).
pub fn quantize_symbol<T: Real>(f: &Symbol<T>, basis: &Basis<T>) -> Result<OperatorMatrix<T>> {
    quantize_symbol_with(f, basis, &QuantizeOptions::default())
}

pub fn quantize_symbol_with<T: Real>(f: &Symbol<T>, basis: &Basis<T>, opts: &QuantizeOptions) -> Result<OperatorMatrix<T>> {
    basis.validate()?;
    let w = weyl_input(f)?;
    let hbar = w.hbar();
    let op = match *basis {
        Basis::Fock { levels } => {
            let m = match opts.method {
                QuantizeMethod::Displacement => fock_by_displacement(&w, levels)?,
                QuantizeMethod::WignerKernel => fock_by_wigner_kernel(&w, levels),
            };
            OperatorMatrix::new(*basis, m, hbar)?
        }
        Basis::PositionGrid { n, l } => OperatorMatrix::new(*basis, position_weyl(&w, n, l)?, hbar)?,
    };
    if let (Some(limit), Basis::Fock { levels }) = (opts.truncation_limit, basis) {
        let frac = op.boundary_fraction(truncation_rows(*levels)).to_f64_lossy();
        if frac > limit {
            return Err(OmegaError::TruncationDominance { fraction: frac });
        }
    }
    Ok(op)
}

/// Relative size below which frequency or phase cells are skipped.
const NEGLIGIBLE: f64 = 1e-18;

fn fock_by_displacement<T: Real>(w: &Symbol<T>, levels: usize) -> Result<CMatrix<T>> {
    let g = crate::phase_grid::symplectic_fourier(w)?;
    let fgrid = g.grid().clone();
    let hbar = fgrid.hbar();
    let weight = fgrid.liouville_weight();
    let cut = g.max_abs() * T::lit(NEGLIGIBLE);
    let vals = g.values();
    let table = fock::LaguerreTable::new(levels);
    Ok(ordered_sum(fgrid.len(), levels, |i, acc| {
        let v = vals[i];
        if v.norm() <= cut {
            return;
        }
        let z = fgrid.point(i);
        fock::add_displacement(&table, displacement_amplitude(z.q[0], z.p[0], hbar), v * weight, acc);
    }))
}

fn fock_by_wigner_kernel<T: Real>(w: &Symbol<T>, levels: usize) -> CMatrix<T> {
    let grid = w.grid().clone();
    let hbar = grid.hbar();
    let weight = grid.liouville_weight();
    let cut = w.max_abs() * T::lit(NEGLIGIBLE);
    let vals = w.values();
    let table = fock::LaguerreTable::new(levels);
    ordered_sum(grid.len(), levels, |i, acc| {
        let v = vals[i];
        if v.norm() <= cut {
            return;
        }
        let z = grid.point(i);
        let k = fock::wigner_kernel_with(&table, z.q[0], z.p[0], hbar, levels);
        axpy(acc, v * weight, &k);
    })
}

/// Values of a 1-d symbol at the half-shifted q-points `q_j + dq/2`, by
/// trigonometric interpolation along q.
fn half_shift_q<T: Real>(f: &Symbol<T>) -> Vec<C<T>> {
    let g = f.grid();
    let (nq, np) = (g.n_q(), g.n_p());
    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(nq);
    let inv = planner.plan_fft_inverse(nq);
    let inv_n = T::one() / T::from_usize_lossy(nq);
    let mut out = vec![C::zero(); nq * np];
    let mut line = vec![C::zero(); nq];
    for k in 0..np {
        for j in 0..nq {
            line[j] = f.values()[j * np + k];
        }
        fwd.process(&mut line);
        for (m, v) in line.iter_mut().enumerate() {
            let kk = if m < nq / 2 { m as isize } else { m as isize - nq as isize };
            *v = if m == nq / 2 {
                // Nyquist mode: symmetric split gives cos(π/2) = 0.
                C::zero()
            } else {
                *v * C::from_polar(inv_n, T::PI() * T::lit(kk as f64) * inv_n)
            };
        }
        inv.process(&mut line);
        for j in 0..nq {
            out[j * np + k] = line[j];
        }
    }
    out
}

/// `M_jk = Δx ∫ f((x_j + x_k)/2, p) e^{ip(x_j − x_k)/ℏ} dp/(2πℏ)`, with the
/// p-integral summed over the symbol's own p-lattice.
fn position_weyl<T: Real>(w: &Symbol<T>, n: usize, l: T) -> Result<CMatrix<T>> {
    let g = w.grid();
    let same = g.n_q() == n && ((g.l_q() - l).abs() <= T::lit(1e-12) * l);
    if !same {
        return Err(OmegaError::InvalidArgument(
            "position-grid quantization needs the symbol's q-lattice to equal the basis grid".into(),
        ));
    }
    let np = g.n_p();
    let hbar = g.hbar();
    let dx = g.dq();
    let half = half_shift_q(w);
    let on = w.values();
    // phase[(m + n) * np + l] = e^{i p_l m Δx/ℏ}, m ∈ (−n, n)
    let mut phase = vec![C::zero(); 2 * n * np];
    for m in 0..2 * n {
        let s = T::lit(m as f64 - n as f64) * dx;
        for k in 0..np {
            phase[m * np + k] = C::from_polar(T::one(), g.p_at(k) * s / hbar);
        }
    }
    let scale = dx * g.dp() / (T::TAU() * hbar);
    let rows: Vec<Vec<C<T>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|k| {
                    let (src, mid) = if (j + k) % 2 == 0 { (on, (j + k) / 2) } else { (&half[..], (j + k - 1) / 2) };
                    let ph = &phase[(j + n - k) * np..(j + n - k + 1) * np];
                    let row = &src[mid * np..(mid + 1) * np];
                    let mut acc = C::zero();
                    for (a, b) in row.iter().zip(ph) {
                        acc += *a * *b;
                    }
                    acc * scale
                })
                .collect()
        })
        .collect();
    CMatrix::from_row_major(n, n, rows.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Operators back to symbols.

fn check_target<T: Real>(a: &OperatorMatrix<T>, grid: &PhaseGrid<T>) -> Result<usize> {
    let levels = match a.basis {
        Basis::Fock { levels } => levels,
        Basis::PositionGrid { .. } => {
            return Err(OmegaError::Unsupported("dequantization is implemented for the Fock basis".into()));
        }
    };
    if grid.dim() != 1 {
        return Err(OmegaError::Unsupported("operator bases are single-mode; d must be 1".into()));
    }
    if (grid.hbar() - a.hbar).abs() > T::lit(1e-12) * a.hbar {
        return Err(OmegaError::InvalidArgument("grid and operator carry different ℏ".into()));
    }
    Ok(levels)
}

fn sample_cells<T: Real>(grid: &PhaseGrid<T>, ordering: OrderingRule, f: impl Fn(T, T) -> C<T> + Sync) -> Symbol<T> {
    let vals: Vec<C<T>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let z = grid.point(i);
            f(z.q[0], z.p[0])
        })
        .collect();
    Symbol::new(grid.clone(), vals, ordering, Domain::Phase).expect("one value per cell")
}

/// Ω-symbol of a Fock-basis operator sampled on `grid`.
///
/// Weyl: `f(z) = Tr(A Δ(z))`. Normal: `⟨α|A|α⟩`. Standard and antistandard
/// use the mixed matrix elements `⟨q|A|p⟩/⟨q|p⟩` and `⟨p|A|q⟩/⟨p|q⟩`. The
/// remaining rules go through the Weyl symbol and a conversion.
pub fn dequantize<T: Real>(a: &OperatorMatrix<T>, rule: OrderingRule, grid: &PhaseGrid<T>) -> Result<Symbol<T>> {
    let n = check_target(a, grid)?;
    let hbar = a.hbar;
    let m = &a.matrix;
    match rule {
        OrderingRule::Weyl => {
            let tr = fock::WeylTrace::new(m);
            Ok(sample_cells(grid, rule, |q, p| tr.eval(q, p, hbar)))
        }
        OrderingRule::Normal => Ok(sample_cells(grid, rule, |q, p| {
            let v = fock::coherent_coefficients(fock::alpha_of(q, p, hbar), n);
            let mv = m.matvec(&v);
            v.iter().zip(&mv).fold(C::zero(), |acc, (x, y)| acc + x.conj() * y)
        })),
        OrderingRule::Standard | OrderingRule::Antistandard => {
            let h = hbar.to_f64_lossy();
            let norm = T::lit((std::f64::consts::TAU * h).sqrt());
            let standard = rule == OrderingRule::Standard;
            Ok(sample_cells(grid, rule, |q, p| {
                let hq = fock::hermite_functions(q.to_f64_lossy(), h, n);
                let hp = fock::hermite_functions(p.to_f64_lossy(), h, n);
                let mut acc = C::<T>::zero();
                for i in 0..n {
                    for j in 0..n {
                        // ⟨q|i⟩ = ψ_i(q), ⟨j|p⟩ = i^j ψ_j(p), ⟨p|i⟩ = (−i)^i ψ_i(p)
                        let (ph, w) = if standard {
                            (i_pow::<T>(j as i64), hq[i] * hp[j])
                        } else {
                            (i_pow::<T>(-(i as i64)), hp[i] * hq[j])
                        };
                        acc += m[(i, j)] * ph * T::lit(w);
                    }
                }
                let s = if standard { -T::one() } else { T::one() };
                acc * C::from_polar(norm, s * q * p / hbar)
            }))
        }
        _ => {
            let w = dequantize(a, OrderingRule::Weyl, grid)?;
            convert_symbol(&w, OrderingRule::Weyl, rule)
        }
    }
}

fn i_pow<T: Real>(k: i64) -> C<T> {
    match k.rem_euclid(4) {
        0 => c(T::one(), T::zero()),
        1 => c(T::zero(), T::one()),
        2 => c(-T::one(), T::zero()),
        _ => c(T::zero(), -T::one()),
    }
}

/// [`dequantize`] followed by the round trip `quantize_symbol(f) ≈ A` on the
/// leading `interior × interior` block; fails with
/// [`OmegaError::Unrepresentable`] when the relative Frobenius error exceeds
/// `limit`.
pub fn dequantize_verified<T: Real>(
    a: &OperatorMatrix<T>,
    rule: OrderingRule,
    grid: &PhaseGrid<T>,
    interior: usize,
    limit: f64,
) -> Result<Symbol<T>> {
    let f = dequantize(a, rule, grid)?;
    let back = quantize_symbol(&f, &a.basis)?;
    let err = crate::linalg::relative_distance(&back.interior(interior), &a.interior(interior)).to_f64_lossy();
    if !(err <= limit) {
        return Err(OmegaError::Unrepresentable { error: err, limit });
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Trace formula and coordinate kernels.

/// Ordering whose symbols pair with `rule`-symbols by the plain integral:
/// `Tr(Op_Ω(f) Op_Ω'(ρ)) = ∫ f ρ dλ` with `Ω'(ζ) = 1/Ω(−ζ)`. Rules whose
/// factor vanishes somewhere have no dual.
pub fn dual_rule(rule: OrderingRule) -> Option<OrderingRule> {
    match rule {
        OrderingRule::Weyl => Some(OrderingRule::Weyl),
        OrderingRule::Standard => Some(OrderingRule::Antistandard),
        OrderingRule::Antistandard => Some(OrderingRule::Standard),
        OrderingRule::Normal => Some(OrderingRule::Antinormal),
        OrderingRule::Antinormal => Some(OrderingRule::Normal),
        OrderingRule::Symmetric | OrderingRule::BornJordan => None,
    }
}

/// `Σ f ρ dλ` over the grid (no conjugation).
pub fn plain_pairing<T: Real>(f: &Symbol<T>, rho: &Symbol<T>) -> Result<C<T>> {
    f.check_compatible(rho)?;
    let s = f.values().iter().zip(rho.values()).fold(C::zero(), |acc: C<T>, (a, b)| acc + a * b);
    Ok(s * f.measure_weight())
}

/// `Tr(Op_Ω(f) Op_Ω(ρ))` for two symbols of the same rule.
///
/// For Weyl this is the plain pairing. For other rules the frequency form
/// `Σ f̃(ζ) Ω(ζ) ρ̃(−ζ) Ω(−ζ) dλ̃` is used, which only multiplies by Ω.
/// `ρ` must decay to the window boundary.
pub fn trace_pairing<T: Real>(f: &Symbol<T>, rho: &Symbol<T>, rule: OrderingRule) -> Result<C<T>> {
    f.check_compatible(rho)?;
    if f.domain() != Domain::Phase {
        return Err(OmegaError::InvalidArgument("trace_pairing expects phase-domain symbols".into()));
    }
    if f.ordering() != rule || rho.ordering() != rule {
        return Err(OmegaError::InvalidArgument(format!("both symbols must carry the {rule} ordering")));
    }
    let ratio = rho.boundary_ratio().to_f64_lossy();
    if ratio > crate::phase_grid::WINDOW_TOLERANCE {
        return Err(OmegaError::NoDecay { ratio });
    }
    if rule == OrderingRule::Weyl {
        return plain_pairing(f, rho);
    }
    let ft = symplectic_fourier_unchecked(f);
    let rt = symplectic_fourier_unchecked(rho);
    let fgrid = ft.grid().clone();
    let om = rule.omega_on_grid(&fgrid);
    // Ω(ζ)Ω(−ζ) grows like e^{|ζ|²/2ℏ} for the normal rule; cells past the
    // gain cap are dropped and their share of Σ|f̃ρ̃| is budgeted.
    let opts = ConvertOptions::default();
    let cap = T::lit(opts.max_gain);
    let mut acc = C::zero();
    let (mut dropped, mut total) = (T::zero(), T::zero());
    for i in 0..fgrid.len() {
        let r = fgrid.reflect_index(i);
        let prod = ft.values()[i] * rt.values()[r];
        let w = om[i] * om[r];
        total += prod.norm();
        if w.norm() > cap {
            dropped += prod.norm();
        } else {
            acc += prod * w;
        }
    }
    let share = if total > T::zero() { (dropped / total).to_f64_lossy() } else { 0.0 };
    if share > opts.mass_limit {
        return Err(OmegaError::Unrepresentable {
            error: share,
            limit: opts.mass_limit,
        });
    }
    Ok(acc * fgrid.liouville_weight())
}

/// Coordinate kernel `K(q'', q') = Σ_l u(q'', p_l) e^{ip_l(q'' − q')/ℏ} Δp/(2πℏ)`
/// of the operator with standard symbol `u` (d = 1), on the symbol's
/// q-lattice. Rows are `q''`. The position-basis matrix is `Δq · K`.
pub fn green_function<T: Real>(u_std: &Symbol<T>) -> Result<CMatrix<T>> {
    let g = u_std.grid();
    if g.dim() != 1 {
        return Err(OmegaError::Unsupported("green_function is one-dimensional".into()));
    }
    if u_std.ordering() != OrderingRule::Standard || u_std.domain() != Domain::Phase {
        return Err(OmegaError::InvalidArgument("green_function expects a phase-domain standard symbol".into()));
    }
    let (nq, np) = (g.n_q(), g.n_p());
    check_p_band(u_std)?;
    let hbar = g.hbar();
    let scale = g.dp() / (T::TAU() * hbar);
    let rows: Vec<Vec<C<T>>> = (0..nq)
        .into_par_iter()
        .map(|j| {
            let qj = g.q_at(j);
            let row = &u_std.values()[j * np..(j + 1) * np];
            (0..nq)
                .map(|k| {
                    let s = qj - g.q_at(k);
                    let mut acc = C::zero();
                    for (l, v) in row.iter().enumerate() {
                        acc += *v * C::from_polar(T::one(), g.p_at(l) * s / hbar);
                    }
                    acc * scale
                })
                .collect()
        })
        .collect();
    CMatrix::from_row_major(nq, nq, rows.into_iter().flatten().collect())
}

/// Aliasing guard for the p-integral: share of the p-spectrum energy in the
/// outer frequency shell, over all q rows.
fn check_p_band<T: Real>(u: &Symbol<T>) -> Result<()> {
    let g = u.grid();
    let (nq, np) = (g.n_q(), g.n_p());
    let fft = FftPlanner::<T>::new().plan_fft_forward(np);
    let edge = crate::phase_grid::ALIASING_SHELL;
    let (mut outer, mut total) = (0.0f64, 0.0f64);
    let mut line = vec![C::zero(); np];
    for j in 0..nq {
        line.copy_from_slice(&u.values()[j * np..(j + 1) * np]);
        fft.process(&mut line);
        for (m, v) in line.iter().enumerate() {
            let k = if m <= np / 2 { m } else { np - m };
            let e = v.norm_sqr().to_f64_lossy();
            total += e;
            if k as f64 > (1.0 - edge) * (np / 2) as f64 {
                outer += e;
            }
        }
    }
    let frac = if total > 0.0 { outer / total } else { 0.0 };
    if frac > crate::phase_grid::ALIASING_TOLERANCE {
        return Err(OmegaError::Aliasing {
            region: "p-axis spectrum",
            fraction: frac,
            limit: crate::phase_grid::ALIASING_TOLERANCE,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::i_unit;

    fn q_op(rule: OrderingRule, n: u32, m: u32, levels: usize, h: f64) -> CMatrix<f64> {
        quantize_monomial(MonomialOp::Qp { n, m }, rule, &Basis::fock(levels), h)
            .unwrap()
            .matrix
    }

    #[test]
    fn degree_one_table_rows() {
        let h = 0.7;
        let (q, p) = canonical_pair(&Basis::<f64>::fock(16), h);
        let sym = (&q.matmul(&p) + &p.matmul(&q)).scale_real(0.5).block(12);
        for rule in [OrderingRule::Weyl, OrderingRule::Symmetric, OrderingRule::BornJordan] {
            assert!((&q_op(rule, 1, 1, 12, h) - &sym).max_abs() < 1e-13, "{rule}");
        }
        let shift = CMatrix::identity(12).scale(i_unit::<f64>() * (h / 2.0));
        assert!((&q_op(OrderingRule::Standard, 1, 1, 12, h) - &(&sym + &shift)).max_abs() < 1e-13);
        assert!((&q_op(OrderingRule::Antistandard, 1, 1, 12, h) - &(&sym - &shift)).max_abs() < 1e-13);
    }

    #[test]
    fn born_jordan_q_p_squared() {
        let h = 0.3;
        let (q, p) = canonical_pair(&Basis::<f64>::fock(20), h);
        let want = &q.matmul(&p).matmul(&p) - &p.scale(i_unit::<f64>() * h);
        let got = q_op(OrderingRule::BornJordan, 1, 2, 16, h);
        assert!((&got - &want.block(16)).max_abs() < 1e-12);
        assert!((&got - &q_op(OrderingRule::Weyl, 1, 2, 16, h)).max_abs() < 1e-12);
    }

    #[test]
    fn normal_rule_on_ladder_monomials() {
        let h = 1.3;
        let b = Basis::<f64>::fock(10);
        let (cr, an) = ladder_pair(&b, h);
        let got = quantize_monomial(MonomialOp::Ladder { a: 1, b: 1 }, OrderingRule::Normal, &b, h).unwrap();
        assert!((&got.matrix - &cr.matmul(&an)).max_abs() < 1e-13);
        // Weyl symbol of z⁺z⁻ is (q²+p²)/2, whose operator is ẑ⁺ẑ⁻ + ℏ/2.
        let w = quantize_monomial(MonomialOp::Ladder { a: 1, b: 1 }, OrderingRule::Weyl, &b, h).unwrap();
        let want = &cr.matmul(&an) + &CMatrix::identity(10).scale_real(h / 2.0);
        assert!((&w.matrix - &want).max_abs() < 1e-12);
    }

    #[test]
    fn degree_cap_is_enforced() {
        let b = Basis::<f64>::fock(16);
        let err = quantize_monomial(MonomialOp::Qp { n: 4, m: 3 }, OrderingRule::Weyl, &b, 1.0).unwrap_err();
        assert!(matches!(err, OmegaError::DegreeExceeded { degree: 7, cap: 6 }));
        assert!(quantize_monomial(MonomialOp::Qp { n: 1, m: 0 }, OrderingRule::Weyl, &Basis::<f64>::fock(4), 1.0).is_err());
    }

    #[test]
    fn position_grid_ccr_on_smooth_states() {
        let h = 0.5;
        let (n, l) = (128, 10.0);
        let (q, p) = position_grid_operators::<f64>(n, l, h);
        let xs = Basis::PositionGrid { n, l }.points().unwrap();
        let psi: Vec<C<f64>> = xs.iter().map(|&x| re((-(x - 0.5) * (x - 0.5) / (2.0 * h)).exp())).collect();
        let lhs = q.commutator(&p).matvec(&psi);
        for (a, b) in lhs.iter().zip(&psi) {
            assert!((a - b * c(0.0, h)).norm() < 1e-10);
        }
    }

    #[test]
    fn dual_rules_are_involutive() {
        for r in OrderingRule::ALL {
            if let Some(d) = dual_rule(r) {
                assert_eq!(dual_rule(d), Some(r));
            }
        }
    }
}
