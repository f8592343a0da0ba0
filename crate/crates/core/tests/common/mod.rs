#![allow(dead_code)]

use std::collections::BTreeMap;

use num_complex::Complex64;
use omega_core::linalg::CMatrix;
use omega_core::ordering::OrderingRule;
use omega_core::phase_grid::{PhaseGrid, Symbol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Letters of an operator word.
#[derive(Clone, Copy, Debug)]
pub enum Letter {
    Q,
    P,
    Cr,
    An,
}

/// Normal-ordered form: coefficient of `(ẑ⁺)^i (ẑ⁻)^j` under `[ẑ⁻, ẑ⁺] = ℏ`.
pub type NormalForm = BTreeMap<(u32, u32), Complex64>;

fn add(f: &mut NormalForm, k: (u32, u32), v: Complex64) {
    *f.entry(k).or_insert(Complex64::new(0.0, 0.0)) += v;
}

/// Right-multiply a normal form by one ladder operator.
fn times_ladder(f: &NormalForm, creator: bool, hbar: f64) -> NormalForm {
    let mut out = NormalForm::new();
    for (&(i, j), &v) in f {
        if creator {
            // (ẑ⁺)^i (ẑ⁻)^j ẑ⁺ = (ẑ⁺)^{i+1} (ẑ⁻)^j + jℏ (ẑ⁺)^i (ẑ⁻)^{j−1}
            add(&mut out, (i + 1, j), v);
            if j > 0 {
                add(&mut out, (i, j - 1), v * (j as f64 * hbar));
            }
        } else {
            add(&mut out, (i, j + 1), v);
        }
    }
    out
}

/// Symbolic normal ordering of a word (letters multiplied left to right).
pub fn reduce_word(word: &[Letter], hbar: f64) -> NormalForm {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut f = NormalForm::new();
    f.insert((0, 0), Complex64::new(1.0, 0.0));
    for &l in word {
        // q̂ = (ẑ⁻ + ẑ⁺)/√2, p̂ = i(ẑ⁺ − ẑ⁻)/√2
        let (ca, cc) = match l {
            Letter::Q => (Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
            Letter::P => (Complex64::new(0.0, -s), Complex64::new(0.0, s)),
            Letter::Cr => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
            Letter::An => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
        };
        let mut next = NormalForm::new();
        for (k, v) in times_ladder(&f, false, hbar) {
            add(&mut next, k, v * ca);
        }
        for (k, v) in times_ladder(&f, true, hbar) {
            add(&mut next, k, v * cc);
        }
        f = next;
    }
    f
}

fn falling(n: usize, k: u32) -> f64 {
    (0..k as usize).map(|t| (n - t) as f64).product()
}

/// Exact `N × N` matrix of a normal form:
/// `⟨r|(ẑ⁺)^i (ẑ⁻)^j|s⟩ = ℏ^{(i+j)/2} √(s!/(s−j)!) √(r!/(r−i)!)` when `r − i = s − j`.
pub fn normal_form_matrix(f: &NormalForm, levels: usize, hbar: f64) -> CMatrix<f64> {
    let mut m = CMatrix::zeros(levels, levels);
    for (&(i, j), &v) in f {
        for s in j as usize..levels {
            let mid = s - j as usize;
            let r = mid + i as usize;
            if r >= levels {
                continue;
            }
            let amp = hbar.powf((i + j) as f64 / 2.0) * (falling(s, j) * falling(r, i)).sqrt();
            m[(r, s)] += v * amp;
        }
    }
    m
}

fn repeat(l: Letter, k: u32) -> Vec<Letter> {
    vec![l; k as usize]
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

/// The ordering table's finite sum for `q^n p^m`, as weighted words.
pub fn table_words(rule: OrderingRule, n: u32, m: u32) -> Vec<(Complex64, Vec<Letter>)> {
    let one = Complex64::new(1.0, 0.0);
    let cat = |parts: &[Vec<Letter>]| parts.concat();
    match rule {
        OrderingRule::Standard => vec![(one, cat(&[repeat(Letter::Q, n), repeat(Letter::P, m)]))],
        OrderingRule::Antistandard => vec![(one, cat(&[repeat(Letter::P, m), repeat(Letter::Q, n)]))],
        OrderingRule::Symmetric => vec![
            (one * 0.5, cat(&[repeat(Letter::Q, n), repeat(Letter::P, m)])),
            (one * 0.5, cat(&[repeat(Letter::P, m), repeat(Letter::Q, n)])),
        ],
        OrderingRule::Weyl => (0..=n)
            .map(|j| {
                let w = binom(n, j) / 2f64.powi(n as i32);
                (one * w, cat(&[repeat(Letter::Q, n - j), repeat(Letter::P, m), repeat(Letter::Q, j)]))
            })
            .collect(),
        OrderingRule::BornJordan => (0..=m)
            .map(|j| {
                let w = 1.0 / (m + 1) as f64;
                (one * w, cat(&[repeat(Letter::P, m - j), repeat(Letter::Q, n), repeat(Letter::P, j)]))
            })
            .collect(),
        OrderingRule::Normal | OrderingRule::Antinormal => {
            // q^n p^m = 2^{−(n+m)/2} i^m (u+v)^n (u−v)^m, u ↔ ẑ⁺, v ↔ ẑ⁻
            let pre = Complex64::new(0.0, 1.0).powu(m) * 2f64.powf(-((n + m) as f64) / 2.0);
            let mut coeffs: BTreeMap<(u32, u32), Complex64> = BTreeMap::new();
            for a in 0..=n {
                for b in 0..=m {
                    let sign = if (m - b).is_multiple_of(2) { 1.0 } else { -1.0 };
                    let c = pre * (binom(n, a) * binom(m, b) * sign);
                    *coeffs.entry((a + b, n - a + m - b)).or_insert(Complex64::new(0.0, 0.0)) += c;
                }
            }
            coeffs
                .into_iter()
                .map(|((u, v), c)| {
                    let word = if rule == OrderingRule::Normal {
                        cat(&[repeat(Letter::Cr, u), repeat(Letter::An, v)])
                    } else {
                        cat(&[repeat(Letter::An, v), repeat(Letter::Cr, u)])
                    };
                    (c, word)
                })
                .collect()
        }
    }
}

/// Matrix of `q^n p^m` under `rule` from the symbolic reduction.
pub fn ccr_oracle(rule: OrderingRule, n: u32, m: u32, levels: usize, hbar: f64) -> CMatrix<f64> {
    let mut total = NormalForm::new();
    for (c, w) in table_words(rule, n, m) {
        for (k, v) in reduce_word(&w, hbar) {
            add(&mut total, k, v * c);
        }
    }
    normal_form_matrix(&total, levels, hbar)
}

/// Sum of a few seeded Gaussian bumps: band-limited on grids with
/// `L ≳ 12√ℏ` and well inside a 64-level Fock space.
pub fn random_bumps(grid: &PhaseGrid<f64>, rng: &mut ChaCha8Rng, count: usize, real: bool) -> Symbol<f64> {
    let s = grid.hbar().sqrt();
    let bumps: Vec<(f64, f64, f64, Complex64)> = (0..count)
        .map(|_| {
            let q0 = rng.gen_range(-2.0..2.0) * s;
            let p0 = rng.gen_range(-2.0..2.0) * s;
            let w = rng.gen_range(0.6..1.2) * s;
            let a = if real {
                Complex64::new(rng.gen_range(-1.0..1.0), 0.0)
            } else {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            };
            (q0, p0, w, a)
        })
        .collect();
    Symbol::from_fn_1d(grid, OrderingRule::Weyl, |q, p| {
        bumps.iter().fold(Complex64::new(0.0, 0.0), |acc, &(q0, p0, w, a)| {
            acc + a * (-((q - q0).powi(2) + (p - p0).powi(2)) / (2.0 * w * w)).exp()
        })
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative Frobenius distance on the leading block.
pub fn block_error(a: &CMatrix<f64>, b: &CMatrix<f64>, k: usize) -> f64 {
    let (a, b) = (a.block(k), b.block(k));
    let d = (&a - &b).frobenius_norm();
    let s = b.frobenius_norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}
