//! Truncated single-mode Fock space: ladder operators, displacement
//! matrix elements and the Wigner (displaced parity) kernel.
//!
//! Operators are scaled so that `[ẑ⁻, ẑ⁺] = ℏ`: the annihilator is
//! `ẑ⁻ = √ℏ a = (q̂ + ip̂)/√2` and the creator `ẑ⁺ = √ℏ a† = (q̂ − ip̂)/√2`.
//! A phase point `(q, p)` corresponds to the coherent amplitude
//! `α = (q + ip)/√(2ℏ)`.

use num_traits::Zero;

use crate::linalg::CMatrix;
use crate::scalar::{c, ln_factorial, re, Real, C};

/// `ẑ⁻` truncated to `n` levels.
pub fn annihilation<T: Real>(n: usize, hbar: T) -> CMatrix<T> {
    let mut a = CMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = re((hbar * T::from_usize_lossy(k)).sqrt());
    }
    a
}

/// `ẑ⁺` truncated to `n` levels.
pub fn creation<T: Real>(n: usize, hbar: T) -> CMatrix<T> {
    annihilation(n, hbar).adjoint()
}

/// `q̂ = (ẑ⁻ + ẑ⁺)/√2`.
pub fn position<T: Real>(n: usize, hbar: T) -> CMatrix<T> {
    let a = annihilation(n, hbar);
    (&a + &a.adjoint()).scale_real(T::FRAC_1_SQRT_2())
}

/// `p̂ = −i(ẑ⁻ − ẑ⁺)/√2`.
pub fn momentum<T: Real>(n: usize, hbar: T) -> CMatrix<T> {
    let a = annihilation(n, hbar);
    (&a - &a.adjoint()).scale(c(T::zero(), -T::FRAC_1_SQRT_2()))
}

/// `ẑ⁺ẑ⁻ = ℏ a†a`.
pub fn number<T: Real>(n: usize, hbar: T) -> CMatrix<T> {
    CMatrix::from_diagonal(&(0..n).map(|k| re(hbar * T::from_usize_lossy(k))).collect::<Vec<_>>())
}

/// Coherent amplitude of a phase point.
pub fn alpha_of<T: Real>(q: T, p: T, hbar: T) -> C<T> {
    c(q, p) / (hbar + hbar).sqrt()
}

/// Normalized associated Laguerre functions
/// `ℓ_j^{(k)}(x) = √(j!/(j+k)!) x^{k/2} e^{−x/2} L_j^{(k)}(x)` for
/// `j = 0..len`, by the three-term recurrence.
pub fn normalized_laguerre(k: usize, x: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if len == 0 {
        return out;
    }
    let l0 = if x == 0.0 {
        if k == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        (0.5 * (k as f64 * x.ln() - x - ln_factorial(k))).exp()
    };
    out[0] = l0;
    if len > 1 {
        // ℓ_1 = (1 + k − x) ℓ_0 / √(1 + k)
        out[1] = (1.0 + k as f64 - x) * l0 / ((1 + k) as f64).sqrt();
    }
    for j in 1..len.saturating_sub(1) {
        let jf = j as f64;
        let kf = k as f64;
        out[j + 1] = ((2.0 * jf + 1.0 + kf - x) * out[j] - (jf * (jf + kf)).sqrt() * out[j - 1])
            / ((jf + 1.0) * (jf + 1.0 + kf)).sqrt();
    }
    out
}

/// Coefficients of the [`normalized_laguerre`] recurrence, tabulated once
/// for loops over many phase points. Entries are stored `j`-major so all
/// orders `k` can advance together.
pub struct LaguerreTable {
    n: usize,
    up: Vec<f64>,
    inv: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl LaguerreTable {
    pub fn new(n: usize) -> Self {
        let mut up = vec![0.0; n * n];
        let mut inv = vec![0.0; n * n];
        for j in 0..n {
            let jf = j as f64;
            for k in 0..n {
                let kf = k as f64;
                up[j * n + k] = (jf * (jf + kf)).sqrt();
                inv[j * n + k] = 1.0 / ((jf + 1.0) * (jf + 1.0 + kf)).sqrt();
            }
        }
        LaguerreTable { n, up, inv, ln_fact: (0..n).map(ln_factorial).collect() }
    }

    pub fn levels(&self) -> usize {
        self.n
    }

    /// `ℓ_0^{(k)}(x)` given `ln x`.
    fn head(&self, k: usize, x: f64, ln_x: f64) -> f64 {
        if x == 0.0 {
            if k == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (0.5 * (k as f64 * ln_x - x - self.ln_fact[k])).exp()
        }
    }

    /// `ℓ_j^{(k)}(x)` for `j < out.len()`; needs `k + out.len() <= n`.
    pub fn fill(&self, k: usize, x: f64, out: &mut [f64]) {
        let len = out.len();
        debug_assert!(k + len <= self.n);
        if len == 0 {
            return;
        }
        out[0] = self.head(k, x, x.ln());
        let kf = k as f64;
        for j in 0..len - 1 {
            let jf = j as f64;
            let prev = if j == 0 { 0.0 } else { out[j - 1] };
            let i = j * self.n + k;
            out[j + 1] = ((2.0 * jf + 1.0 + kf - x) * out[j] - self.up[i] * prev) * self.inv[i];
        }
    }
}

/// Weyl symbol `f(z) = Tr(A Δ(z))` of a Fock-basis matrix, evaluated point by
/// point without forming the kernel.
pub struct WeylTrace<'a, T: Real> {
    rows: &'a [C<T>],
    cols: Vec<C<T>>,
    n: usize,
    table: LaguerreTable,
}

impl<'a, T: Real> WeylTrace<'a, T> {
    pub fn new(a: &'a CMatrix<T>) -> Self {
        let n = a.rows();
        let mut cols = vec![C::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                cols[j * n + i] = a[(i, j)];
            }
        }
        WeylTrace { rows: a.as_slice(), cols, n, table: LaguerreTable::new(n) }
    }

    pub fn eval(&self, q: T, p: T, hbar: T) -> C<T> {
        let n = self.n;
        let table = &self.table;
        let beta = alpha_of(q, p, hbar) * T::lit(2.0);
        let x = beta.norm_sqr().to_f64_lossy();
        let theta = beta.arg().to_f64_lossy();
        let ln_x = x.ln();
        let mut cur: Vec<f64> = (0..n).map(|k| table.head(k, x, ln_x)).collect();
        let mut prev = vec![0.0; n];
        let mut lower = vec![C::<T>::zero(); n];
        let mut upper = vec![C::<T>::zero(); n];
        for j in 0..n {
            let par = if j % 2 == 0 { 2.0 } else { -2.0 };
            // Δ(j+k, j) pairs with A(j, j+k), Δ(j, j+k) with A(j+k, j); the
            // upper parity (−1)^{j+k} cancels the (−1)^k of D.
            let row = &self.rows[j * n + j..(j + 1) * n];
            let col = &self.cols[j * n + j..(j + 1) * n];
            for ((((l, u), r), t), v) in lower.iter_mut().zip(upper.iter_mut()).zip(row).zip(col).zip(&cur) {
                let w = T::lit(par * v);
                *l += *r * w;
                *u += *t * w;
            }
            let width = n - j;
            if width == 1 {
                break;
            }
            let jf = j as f64;
            let up = &table.up[j * n..j * n + width - 1];
            let inv = &table.inv[j * n..j * n + width - 1];
            for (k, (((cu, pr), u), iv)) in cur.iter_mut().zip(prev.iter_mut()).zip(up).zip(inv).enumerate() {
                let next = ((2.0 * jf + 1.0 + k as f64 - x) * *cu - u * *pr) * iv;
                *pr = *cu;
                *cu = next;
            }
        }
        let mut acc = lower[0];
        for k in 1..n {
            let (sin, cos) = (k as f64 * theta).sin_cos();
            let e = c(T::lit(cos), T::lit(sin));
            acc += lower[k] * e + upper[k] * e.conj();
        }
        acc
    }
}

/// Displacement operator `D(β) = exp(β a† − β̄ a)` in the first `n` levels
/// of the untruncated space (closed form, no truncation artifacts).
pub fn displacement<T: Real>(beta: C<T>, n: usize) -> CMatrix<T> {
    displacement_with(&LaguerreTable::new(n), beta, n)
}

/// [`displacement`] with a prebuilt table covering `n` levels.
pub fn displacement_with<T: Real>(table: &LaguerreTable, beta: C<T>, n: usize) -> CMatrix<T> {
    let mut d = CMatrix::zeros(n, n);
    add_displacement(table, beta, c(T::one(), T::zero()), &mut d);
    d
}

/// `acc += scale · D(β)`, for `acc` of the table's size or smaller.
pub fn add_displacement<T: Real>(table: &LaguerreTable, beta: C<T>, scale: C<T>, acc: &mut CMatrix<T>) {
    let n = acc.rows();
    let x = beta.norm_sqr().to_f64_lossy();
    let theta = beta.arg().to_f64_lossy();
    let mut buf = vec![0.0; n];
    for k in 0..n {
        let ell = &mut buf[..n - k];
        table.fill(k, x, ell);
        let (sin, cos) = (k as f64 * theta).sin_cos();
        // ⟨j+k|D|j⟩ = e^{ikθ} ℓ_j^{(k)}, ⟨j|D|j+k⟩ = (−1)^k e^{−ikθ} ℓ_j^{(k)}
        let lower = scale * c(T::lit(cos), T::lit(sin));
        let s = if k % 2 == 0 { T::one() } else { -T::one() };
        let upper = scale * c(T::lit(cos), T::lit(-sin)) * s;
        for (j, &v) in ell.iter().enumerate() {
            let v = T::lit(v);
            acc[(j + k, j)] += lower * v;
            if k > 0 {
                acc[(j, j + k)] += upper * v;
            }
        }
    }
}

/// Wigner kernel `Δ(z) = 2 D(α) Π D(α)† = 2 D(2α) Π` at the phase point
/// `(q, p)`, in the first `n` levels. Weyl quantization is
/// `Op(f) = ∫ f Δ dλ_ℏ` and the inverse map is `f(z) = Tr(Op(f) Δ(z))`.
pub fn wigner_kernel<T: Real>(q: T, p: T, hbar: T, n: usize) -> CMatrix<T> {
    wigner_kernel_with(&LaguerreTable::new(n), q, p, hbar, n)
}

/// [`wigner_kernel`] with a prebuilt table covering `n` levels.
pub fn wigner_kernel_with<T: Real>(table: &LaguerreTable, q: T, p: T, hbar: T, n: usize) -> CMatrix<T> {
    let beta = alpha_of(q, p, hbar) * T::lit(2.0);
    let x = beta.norm_sqr().to_f64_lossy();
    let theta = beta.arg().to_f64_lossy();
    let mut w = CMatrix::zeros(n, n);
    let mut buf = vec![0.0; n];
    for k in 0..n {
        let ell = &mut buf[..n - k];
        table.fill(k, x, ell);
        let (sin, cos) = (k as f64 * theta).sin_cos();
        for (j, &v) in ell.iter().enumerate() {
            // Column parity (−1)^n of Π applied to ⟨m|D(2α)|n⟩.
            let par_lower = if j % 2 == 0 { 2.0 } else { -2.0 };
            w[(j + k, j)] = c(T::lit(par_lower * v * cos), T::lit(par_lower * v * sin));
            if k > 0 {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                let par_upper = if (j + k) % 2 == 0 { 2.0 } else { -2.0 };
                w[(j, j + k)] = c(
                    T::lit(par_upper * s * v * cos),
                    T::lit(-par_upper * s * v * sin),
                );
            }
        }
    }
    w
}

/// Position wavefunctions `⟨q|k⟩`, `k < n`, for the oscillator with `m = ω = 1`.
/// Momentum wavefunctions are `⟨p|k⟩ = (−i)^k ψ_k(p)`.
pub fn hermite_functions(q: f64, hbar: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    let x = q / hbar.sqrt();
    out[0] = (std::f64::consts::PI * hbar).powf(-0.25) * (-0.5 * x * x).exp();
    if n > 1 {
        out[1] = 2f64.sqrt() * x * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
    out
}

/// Coherent-state coefficients `⟨k|α⟩ = e^{−|α|²/2} α^k/√k!`, `k < n`.
pub fn coherent_coefficients<T: Real>(alpha: C<T>, n: usize) -> Vec<C<T>> {
    let a = alpha.to_f64();
    let x = a.norm_sqr();
    let (r, th) = a.to_polar();
    (0..n)
        .map(|k| {
            if r == 0.0 {
                return if k == 0 { C::new(T::one(), T::zero()) } else { C::zero() };
            }
            let mag = (k as f64 * r.ln() - 0.5 * ln_factorial(k) - 0.5 * x).exp();
            let ph = k as f64 * th;
            c(T::lit(mag * ph.cos()), T::lit(mag * ph.sin()))
        })
        .collect()
}

trait ToF64Complex {
    fn to_f64(self) -> num_complex::Complex<f64>;
}

impl<T: Real> ToF64Complex for C<T> {
    fn to_f64(self) -> num_complex::Complex<f64> {
        num_complex::Complex::new(self.re.to_f64_lossy(), self.im.to_f64_lossy())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::i_unit;

    #[test]
    fn ccr_on_interior_block() {
        let h = 0.37;
        let n = 12;
        let q = position::<f64>(n, h);
        let p = momentum::<f64>(n, h);
        let comm = q.commutator(&p).block(n - 1);
        let want = CMatrix::identity(n - 1).scale(i_unit::<f64>() * h);
        assert!((&comm - &want).max_abs() < 1e-14);
        let a = annihilation::<f64>(n, h);
        let lad = a.commutator(&a.adjoint()).block(n - 1);
        assert!((&lad - &CMatrix::identity(n - 1).scale_real(h)).max_abs() < 1e-14);
    }

    #[test]
    fn displacement_matches_truncated_exponential() {
        // Exponentiate in a much larger space, compare the leading block.
        let beta = c(0.7, -0.4);
        let big = 60;
        let a = annihilation::<f64>(big, 1.0);
        let gen = &a.adjoint().scale(beta) - &a.scale(beta.conj());
        let exact = gen.expm().block(12);
        let closed = displacement(beta, 12);
        assert!((&exact - &closed).max_abs() < 1e-12);
    }

    #[test]
    fn displacement_is_unitary_on_low_levels() {
        let d = displacement(c(1.5, 0.5), 80);
        let u = d.adjoint().matmul(&d).block(20);
        assert!((&u - &CMatrix::identity(20)).max_abs() < 1e-10);
    }

    #[test]
    fn wigner_kernel_at_origin_is_twice_parity() {
        let w = wigner_kernel(0.0, 0.0, 1.0, 6);
        for k in 0..6 {
            let want = if k % 2 == 0 { 2.0 } else { -2.0 };
            assert!((w[(k, k)] - re(want)).norm() < 1e-15);
        }
    }

    #[test]
    fn coherent_state_is_normalized_and_eigenvector() {
        let alpha = c(1.2, -0.3);
        let v = coherent_coefficients(alpha, 60);
        let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let a = annihilation::<f64>(60, 1.0);
        let av = a.matvec(&v);
        for k in 0..40 {
            assert!((av[k] - alpha * v[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn laguerre_zero_argument() {
        let l = normalized_laguerre(0, 0.0, 5);
        assert!(l.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(normalized_laguerre(3, 0.0, 4).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let h = 0.6;
        let n = 10;
        let dx = 0.01;
        let mut gram = vec![vec![0.0; n]; n];
        let mut x = -12.0;
        while x < 12.0 {
            let v = hermite_functions(x, h, n);
            for i in 0..n {
                for j in 0..n {
                    gram[i][j] += v[i] * v[j] * dx;
                }
            }
            x += dx;
        }
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i][j] - want).abs() < 1e-10, "{i} {j}");
            }
        }
    }

    #[test]
    fn table_matches_direct_recurrence() {
        let t = LaguerreTable::new(12);
        for k in 0..12 {
            for x in [0.0, 0.3, 4.7] {
                let mut out = vec![0.0; 12 - k];
                t.fill(k, x, &mut out);
                for (a, b) in out.iter().zip(normalized_laguerre(k, x, 12 - k)) {
                    assert!((a - b).abs() < 1e-14, "{k} {x}");
                }
            }
        }
    }

    #[test]
    fn weyl_trace_matches_kernel_trace() {
        let n = 9;
        let mut a = CMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = c((i as f64 * 0.7 - j as f64).sin(), (i as f64 + 0.3 * j as f64).cos());
            }
        }
        let t = WeylTrace::new(&a);
        for (q, p) in [(0.0, 0.0), (0.4, -1.1), (-2.0, 0.5)] {
            let k = wigner_kernel(q, p, 0.7, n);
            let mut want = C::zero();
            for i in 0..n {
                for j in 0..n {
                    want += a[(i, j)] * k[(j, i)];
                }
            }
            let got = t.eval(q, p, 0.7);
            assert!((got - want).norm() < 1e-12 * want.norm().max(1.0), "{got} {want}");
        }
    }
}
