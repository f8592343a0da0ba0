//! Conversions between Ω-symbols and Ω-products of symbols.
//!
//! Two representations are supported. Grid [`Symbol`]s go through the
//! symplectic Fourier transform and are treated as periodic over the window.
//! Polynomial symbols ([`MPoly`] in the variables `q₁..q_d, p₁..p_d`) are
//! handled exactly: multiplying `f̃` by a power series in `ζ` becomes a
//! terminating differential operator through `q_ζ ↔ iℏ∂_p`, `p_ζ ↔ −iℏ∂_q`.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{OmegaError, Result};
use crate::ordering::OrderingRule;
use crate::phase_grid::{
    inverse_symplectic_fourier_unchecked, symplectic_fourier_unchecked, Domain, Symbol, ALIASING_SHELL,
    ALIASING_TOLERANCE,
};
use crate::poly::MPoly;
use crate::scalar::{c, factorial, i_unit, re, Real, C};

/// Guards applied when dividing by an ordering factor on the lattice.
#[derive(Clone, Copy, Debug)]
pub struct ConvertOptions {
    /// Cells with `|Ω_to| < margin` are zeroed (`Ω(0) = 1` sets the scale).
    pub margin: f64,
    /// Cells where `|Ω_from/Ω_to|` exceeds this are zeroed.
    pub max_gain: f64,
    /// Cells with `|Ω_to| < guard` count as near the zero set.
    pub guard: f64,
    /// Largest tolerated share of `∑|f̃|²` in zeroed or near-zero cells.
    pub mass_limit: f64,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            margin: 1e-6,
            max_gain: 1e8,
            guard: 1e-3,
            mass_limit: 1e-10,
        }
    }
}

/// A converted symbol plus the spectral mass that had to be dropped.
#[derive(Clone, Debug)]
pub struct Conversion<T: Real> {
    pub symbol: Symbol<T>,
    pub excluded_fraction: f64,
}

/// Multiply `f̃` by `num/den` cell by cell, zeroing unstable cells.
pub(crate) fn ratio_in_place<T: Real>(
    values: &mut [C<T>],
    num: &[C<T>],
    den: &[C<T>],
    opts: &ConvertOptions,
) -> Result<f64> {
    let floor = T::lit(opts.margin);
    let near = T::lit(opts.guard);
    let gain_cap = T::lit(opts.max_gain);
    let (mut dropped, mut total) = (T::zero(), T::zero());
    for ((v, &a), &b) in values.iter_mut().zip(num).zip(den) {
        let e = v.norm_sqr();
        total += e;
        let bn = b.norm();
        if bn < floor || a.norm() > gain_cap * bn {
            dropped += e;
            *v = C::zero();
        } else {
            if bn < near {
                dropped += e;
            }
            *v = *v * a / b;
        }
    }
    let frac = if total > T::zero() {
        (dropped / total).to_f64_lossy()
    } else {
        0.0
    };
    if frac > opts.mass_limit {
        return Err(OmegaError::ZeroSetViolation {
            fraction: frac,
            limit: opts.mass_limit,
        });
    }
    Ok(frac)
}

pub(crate) fn check_band<T: Real>(g: &Symbol<T>) -> Result<()> {
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

/// Re-express `f` (an Ω_from-symbol) as an Ω_to-symbol:
/// `f̃_to = f̃ · Ω_from / Ω_to`.
pub fn convert_symbol<T: Real>(f: &Symbol<T>, from: OrderingRule, to: OrderingRule) -> Result<Symbol<T>> {
    convert_symbol_with(f, from, to, &ConvertOptions::default()).map(|c| c.symbol)
}

pub fn convert_symbol_with<T: Real>(
    f: &Symbol<T>,
    from: OrderingRule,
    to: OrderingRule,
    opts: &ConvertOptions,
) -> Result<Conversion<T>> {
    if f.domain() != Domain::Phase {
        return Err(OmegaError::InvalidArgument("convert_symbol expects a phase-domain symbol".into()));
    }
    if f.ordering() != from {
        return Err(OmegaError::InvalidArgument(format!(
            "symbol is tagged {} but conversion starts from {from}",
            f.ordering()
        )));
    }
    if from == to {
        return Ok(Conversion {
            symbol: f.clone(),
            excluded_fraction: 0.0,
        });
    }
    let mut g = symplectic_fourier_unchecked(f);
    check_band(&g)?;
    let fgrid = g.grid().clone();
    let num = from.omega_on_grid(&fgrid);
    let den = to.omega_on_grid(&fgrid);
    let frac = ratio_in_place(g.values_mut(), &num, &den, opts)?;
    let out = inverse_symplectic_fourier_unchecked(&g).with_ordering(to);
    Ok(Conversion {
        symbol: out,
        excluded_fraction: frac,
    })
}

// ---------------------------------------------------------------------------
// Power series of the ordering factors and exact polynomial calculus.

fn cos_coeffs<T: Real>(n: usize) -> Vec<C<T>> {
    (0..=n)
        .map(|k| {
            if k % 2 == 1 {
                C::zero()
            } else {
                let s = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                re(T::lit(s / factorial(k)))
            }
        })
        .collect()
}

fn sinc_coeffs<T: Real>(n: usize) -> Vec<C<T>> {
    (0..=n)
        .map(|k| {
            if k % 2 == 1 {
                C::zero()
            } else {
                let s = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                re(T::lit(s / factorial(k + 1)))
            }
        })
        .collect()
}

/// Taylor series of `Ω(ζ/√ℏ)` in the frequency variables
/// `(q_ζ₁..q_ζd, p_ζ₁..p_ζd)`, truncated at total degree `max_degree`.
pub fn omega_series<T: Real>(rule: OrderingRule, hbar: T, d: usize, max_degree: usize) -> MPoly<T> {
    let n = 2 * d;
    let mut out = MPoly::one(n);
    for k in 0..d {
        let q = MPoly::var(n, k);
        let p = MPoly::var(n, d + k);
        let y = (&q * &p).scale(re(T::lit(0.5) / hbar));
        let r = (&(&q * &q) + &(&p * &p)).scale(re(T::lit(0.25) / hbar));
        let mode = match rule {
            OrderingRule::Weyl => continue,
            OrderingRule::Standard => y.scale(i_unit()).exp_truncated(max_degree),
            OrderingRule::Antistandard => y.scale(-i_unit::<T>()).exp_truncated(max_degree),
            OrderingRule::Normal => r.exp_truncated(max_degree),
            OrderingRule::Antinormal => r.scale(re(-T::one())).exp_truncated(max_degree),
            OrderingRule::Symmetric => y.compose(&cos_coeffs(max_degree), max_degree),
            OrderingRule::BornJordan => y.compose(&sinc_coeffs(max_degree), max_degree),
        };
        out = out.mul_truncated(&mode, max_degree);
    }
    out
}

/// Derivative multi-index and prefactor that a frequency monomial maps to.
fn frequency_monomial_to_derivative<T: Real>(e: &[u32], d: usize, hbar: T) -> (Vec<u32>, C<T>) {
    let mut alpha = vec![0u32; 2 * d];
    let mut factor = C::one();
    let ih = c(T::zero(), hbar);
    for k in 0..d {
        // q_ζ ↦ iℏ ∂_p and p_ζ ↦ −iℏ ∂_q
        alpha[d + k] += e[k];
        alpha[k] += e[d + k];
        factor = factor * ih.powu(e[k]) * (-ih).powu(e[d + k]);
    }
    (alpha, factor)
}

/// Apply the multiplier `s(ζ)` (a polynomial in the frequency variables) to
/// a polynomial symbol.
pub fn apply_frequency_series<T: Real>(series: &MPoly<T>, f: &MPoly<T>, d: usize, hbar: T) -> MPoly<T> {
    let mut out = MPoly::zero(2 * d);
    for (e, &coef) in series.terms() {
        let (alpha, factor) = frequency_monomial_to_derivative(e, d, hbar);
        let df = f.derivative_multi(&alpha);
        if !df.is_zero() {
            out = &out + &df.scale(coef * factor);
        }
    }
    out
}

/// Exact conversion of a polynomial Ω_from-symbol into an Ω_to-symbol.
pub fn convert_polynomial<T: Real>(f: &MPoly<T>, d: usize, from: OrderingRule, to: OrderingRule, hbar: T) -> MPoly<T> {
    if from == to {
        return f.clone();
    }
    let k = f.degree();
    let r = omega_series(from, hbar, d, k).mul_truncated(&omega_series(to, hbar, d, k).recip_truncated(k), k);
    apply_frequency_series(&r, f, d, hbar)
}

/// Taylor series of the two-point product kernel
/// `K̃^Ω(ζ₁, ζ₂) = Ω(ζ₁)Ω(ζ₂)/Ω(ζ₁+ζ₂) · exp{(i/2ℏ)[ζ₁, ζ₂]}`
/// in the `4d` variables `(ζ₁, ζ₂)`.
pub fn product_kernel_series<T: Real>(rule: OrderingRule, hbar: T, d: usize, max_degree: usize) -> MPoly<T> {
    let n = 4 * d;
    let first: Vec<usize> = (0..2 * d).collect();
    let second: Vec<usize> = (2 * d..4 * d).collect();
    let om = omega_series(rule, hbar, d, max_degree);
    let om1 = om.embed(n, &first);
    let om2 = om.embed(n, &second);
    let mut om12 = om1.clone();
    for i in 0..2 * d {
        let sum = &MPoly::var(n, i) + &MPoly::var(n, 2 * d + i);
        om12 = om12.substitute(i, &sum).truncate(max_degree);
    }
    let mut sigma = MPoly::zero(n);
    for k in 0..d {
        let (q1, p1, q2, p2) = (k, d + k, 2 * d + k, 3 * d + k);
        sigma = &sigma + &(&MPoly::var(n, p1) * &MPoly::var(n, q2));
        sigma = &sigma - &(&MPoly::var(n, p2) * &MPoly::var(n, q1));
    }
    let phase = sigma
        .scale(c(T::zero(), T::lit(0.5) / hbar))
        .exp_truncated(max_degree);
    om1.mul_truncated(&om2, max_degree)
        .mul_truncated(&om12.recip_truncated(max_degree), max_degree)
        .mul_truncated(&phase, max_degree)
}

/// Exact Ω-product of two polynomial Ω-symbols (the bidifferential
/// expansion terminates).
pub fn polynomial_product<T: Real>(f1: &MPoly<T>, f2: &MPoly<T>, rule: OrderingRule, d: usize, hbar: T) -> MPoly<T> {
    let k = f1.degree() + f2.degree();
    let kernel = product_kernel_series(rule, hbar, d, k);
    let mut cache1: BTreeMap<Vec<u32>, MPoly<T>> = BTreeMap::new();
    let mut cache2: BTreeMap<Vec<u32>, MPoly<T>> = BTreeMap::new();
    let mut out = MPoly::zero(2 * d);
    for (e, &coef) in kernel.terms() {
        let (a1, s1) = frequency_monomial_to_derivative(&e[..2 * d], d, hbar);
        let (a2, s2) = frequency_monomial_to_derivative(&e[2 * d..], d, hbar);
        let d1 = cache1
            .entry(a1.clone())
            .or_insert_with(|| f1.derivative_multi(&a1))
            .clone();
        if d1.is_zero() {
            continue;
        }
        let d2 = cache2.entry(a2.clone()).or_insert_with(|| f2.derivative_multi(&a2));
        if d2.is_zero() {
            continue;
        }
        out = &out + &(&d1 * d2).scale(coef * s1 * s2);
    }
    out
}

/// Evaluate a polynomial symbol on every lattice point.
pub fn sample_polynomial<T: Real>(
    f: &MPoly<T>,
    grid: &crate::phase_grid::PhaseGrid<T>,
    ordering: OrderingRule,
) -> Symbol<T> {
    Symbol::from_fn(grid, ordering, |z| {
        let x: Vec<T> = z.q.iter().chain(&z.p).copied().collect();
        f.eval_real(&x)
    })
}

// ---------------------------------------------------------------------------
// Products of grid symbols.

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProductMethod {
    /// Twisted convolution of the spectra, computed by FFT.
    Kernel,
    /// Bidifferential expansion truncated at total derivative order `order`;
    /// fails if the last retained order carries more than `tolerance` of
    /// the result's L² norm on the interior.
    Asymptotic { order: usize, tolerance: f64 },
}

#[derive(Clone, Debug)]
pub struct ProductReport<T: Real> {
    pub symbol: Symbol<T>,
    /// Relative size of the last retained order (asymptotic method only).
    pub remainder_estimate: Option<f64>,
    pub excluded_fraction: f64,
}

/// Ω-symbol of `f̂₁ f̂₂`.
pub fn omega_product<T: Real>(f1: &Symbol<T>, f2: &Symbol<T>, rule: OrderingRule, method: ProductMethod) -> Result<Symbol<T>> {
    omega_product_report(f1, f2, rule, method, &ConvertOptions::default()).map(|r| r.symbol)
}

pub fn omega_product_report<T: Real>(
    f1: &Symbol<T>,
    f2: &Symbol<T>,
    rule: OrderingRule,
    method: ProductMethod,
    opts: &ConvertOptions,
) -> Result<ProductReport<T>> {
    f1.check_compatible(f2)?;
    if f1.domain() != Domain::Phase {
        return Err(OmegaError::InvalidArgument("omega_product expects phase-domain symbols".into()));
    }
    for f in [f1, f2] {
        if f.ordering() != rule {
            return Err(OmegaError::InvalidArgument(format!(
                "symbol tagged {} multiplied under rule {rule}",
                f.ordering()
            )));
        }
    }
    match method {
        ProductMethod::Kernel => kernel_product(f1, f2, rule, opts),
        ProductMethod::Asymptotic { order, tolerance } => asymptotic_product(f1, f2, rule, order, tolerance),
    }
}

fn kernel_product<T: Real>(f1: &Symbol<T>, f2: &Symbol<T>, rule: OrderingRule, opts: &ConvertOptions) -> Result<ProductReport<T>> {
    if f1.grid().dim() != 1 {
        return Err(OmegaError::Unsupported(
            "kernel products are implemented for one degree of freedom; use the asymptotic method".into(),
        ));
    }
    let mut g1 = symplectic_fourier_unchecked(f1);
    let mut g2 = symplectic_fourier_unchecked(f2);
    check_band(&g1)?;
    check_band(&g2)?;
    let fgrid = g1.grid().clone();
    let om = rule.omega_on_grid(&fgrid);
    let ones = vec![C::one(); om.len()];
    let mut frac = 0.0;
    if rule != OrderingRule::Weyl {
        for g in [&mut g1, &mut g2] {
            frac += ratio_in_place(g.values_mut(), &om, &ones, opts)?;
        }
    }
    let h = twisted_convolution(g1.values(), g2.values(), &fgrid);
    let mut hs = g1.with_values(h);
    check_band(&hs)?;
    if rule != OrderingRule::Weyl {
        frac += ratio_in_place(hs.values_mut(), &ones, &om, opts)?;
    }
    Ok(ProductReport {
        symbol: inverse_symplectic_fourier_unchecked(&hs).with_ordering(rule),
        remainder_estimate: None,
        excluded_fraction: frac,
    })
}

/// `h̃(ζ) = ∑_{ζ₁} f̃(ζ₁) g̃(ζ−ζ₁) e^{(i/2ℏ)[ζ₁, ζ]} dλ̃` on a one-mode
/// frequency lattice, with samples outside the lattice taken as zero.
///
/// The sum over `q_ζ₁` is a linear convolution done by FFT; the sum over
/// `p_ζ₁` is explicit. Columns of the output are computed in parallel, each
/// by a fixed sequence of operations, so the result is deterministic.
fn twisted_convolution<T: Real>(f: &[C<T>], g: &[C<T>], fgrid: &crate::phase_grid::PhaseGrid<T>) -> Vec<C<T>> {
    let n1 = fgrid.n_q();
    let n2 = fgrid.n_p();
    let h2 = fgrid.hbar() + fgrid.hbar();
    let w = fgrid.liouville_weight();
    let qs: Vec<T> = (0..n1).map(|a| fgrid.q_at(a)).collect();
    let ps: Vec<T> = (0..n2).map(|b| fgrid.p_at(b)).collect();
    let m = 2 * n1;
    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let norm = T::one() / T::from_usize_lossy(m);

    // Spectra of the g columns, reused for every pair.
    let g_hat: Vec<Vec<C<T>>> = (0..n2)
        .map(|b2| {
            let mut buf = vec![C::zero(); m];
            for a in 0..n1 {
                buf[a] = g[a * n2 + b2];
            }
            fwd.process(&mut buf);
            buf
        })
        .collect();
    let f_cols: Vec<bool> = (0..n2).map(|b1| (0..n1).any(|a| f[a * n2 + b1] != C::zero())).collect();
    // phase[b * n1 + a] = e^{i p_b q_a / 2ℏ}
    let phase: Vec<C<T>> = (0..n2)
        .flat_map(|b| qs.iter().map(move |&q| (b, q)))
        .map(|(b, q)| C::from_polar(T::one(), ps[b] * q / h2))
        .collect();

    let columns: Vec<Vec<C<T>>> = (0..n2)
        .into_par_iter()
        .map(|b| {
            let mut col = vec![C::zero(); n1];
            let mut buf = vec![C::zero(); m];
            for b1 in 0..n2 {
                if !f_cols[b1] {
                    continue;
                }
                let b2 = b as isize - b1 as isize + (n2 / 2) as isize;
                if b2 < 0 || b2 >= n2 as isize {
                    continue;
                }
                let b2 = b2 as usize;
                for v in buf.iter_mut() {
                    *v = C::zero();
                }
                let out_phase = &phase[b * n1..(b + 1) * n1];
                for a1 in 0..n1 {
                    buf[a1] = f[a1 * n2 + b1] * out_phase[a1].conj();
                }
                fwd.process(&mut buf);
                for (x, y) in buf.iter_mut().zip(&g_hat[b2]) {
                    *x *= y;
                }
                inv.process(&mut buf);
                let in_phase = &phase[b1 * n1..(b1 + 1) * n1];
                for a in 0..n1 {
                    col[a] += buf[a + n1 / 2] * norm * in_phase[a];
                }
            }
            col
        })
        .collect();

    let mut out = vec![C::zero(); n1 * n2];
    for (b, col) in columns.into_iter().enumerate() {
        for (a, v) in col.into_iter().enumerate() {
            out[a * n2 + b] = v * w;
        }
    }
    out
}

/// Grid realization of the bidifferential expansion: every monomial
/// `ζ₁^α ζ₂^β` of the kernel series becomes `IFT[ζ^α f̃₁] · IFT[ζ^β f̃₂]`.
fn asymptotic_product<T: Real>(
    f1: &Symbol<T>,
    f2: &Symbol<T>,
    rule: OrderingRule,
    order: usize,
    tolerance: f64,
) -> Result<ProductReport<T>> {
    if order > 4 {
        return Err(OmegaError::InvalidArgument(format!("asymptotic order {order} exceeds 4")));
    }
    let d = f1.grid().dim();
    let hbar = f1.hbar();
    let g1 = symplectic_fourier_unchecked(f1);
    let g2 = symplectic_fourier_unchecked(f2);
    check_band(&g1)?;
    check_band(&g2)?;
    let fgrid = g1.grid().clone();
    let points: Vec<Vec<T>> = (0..fgrid.len())
        .map(|i| {
            let z = fgrid.point(i);
            z.q.iter().chain(&z.p).copied().collect()
        })
        .collect();
    let image = |g: &Symbol<T>, e: &[u32]| -> Vec<C<T>> {
        let vals = g
            .values()
            .iter()
            .zip(&points)
            .map(|(&v, x)| x.iter().zip(e).fold(v, |acc, (&xi, &k)| acc * re(xi.powi(k as i32))))
            .collect();
        inverse_symplectic_fourier_unchecked(&g.with_values(vals)).into_values()
    };
    let kernel = product_kernel_series(rule, hbar, d, order);
    let mut cache1: BTreeMap<Vec<u32>, Vec<C<T>>> = BTreeMap::new();
    let mut cache2: BTreeMap<Vec<u32>, Vec<C<T>>> = BTreeMap::new();
    let n = f1.grid().len();
    let mut total = vec![C::zero(); n];
    let mut last = vec![C::zero(); n];
    for (e, &coef) in kernel.terms() {
        let (e1, e2) = e.split_at(2 * d);
        let a = cache1.entry(e1.to_vec()).or_insert_with(|| image(&g1, e1)).clone();
        let b = cache2.entry(e2.to_vec()).or_insert_with(|| image(&g2, e2));
        let top = crate::poly::total(e) == order && order > 0;
        for i in 0..n {
            let t = coef * a[i] * b[i];
            total[i] += t;
            if top {
                last[i] += t;
            }
        }
    }
    let out = f1.with_values(total).with_ordering(rule);
    let mask = out.grid().interior_mask(T::lit(0.5));
    let (mut num, mut den) = (T::zero(), T::zero());
    for ((v, l), m) in out.values().iter().zip(&last).zip(&mask) {
        if *m {
            num += l.norm_sqr();
            den += v.norm_sqr();
        }
    }
    let estimate = if den > T::zero() {
        (num / den).sqrt().to_f64_lossy()
    } else {
        0.0
    };
    if estimate > tolerance {
        return Err(OmegaError::AsymptoticRemainder { estimate, tolerance });
    }
    Ok(ProductReport {
        symbol: out,
        remainder_estimate: Some(estimate),
        excluded_fraction: 0.0,
    })
}
