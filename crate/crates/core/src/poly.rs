//! Sparse multivariate polynomials with complex coefficients.
//!
//! Doubles as a truncated power-series type: the `*_truncated` methods and
//! [`MPoly::compose`] drop every term above a total degree.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::scalar::{factorial, re, Real, C};

#[derive(Clone, Debug, PartialEq)]
pub struct MPoly<T: Real> {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, C<T>>,
}

impl<T: Real> MPoly<T> {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, value: C<T>) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], value);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, C::one())
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(nvars, e, C::one())
    }

    pub fn monomial(nvars: usize, exps: Vec<u32>, coeff: C<T>) -> Self {
        assert_eq!(exps.len(), nvars);
        let mut p = Self::zero(nvars);
        p.add_term(exps, coeff);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &C<T>)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exps: &[u32]) -> C<T> {
        self.terms.get(exps).copied().unwrap_or_else(C::zero)
    }

    pub fn constant_term(&self) -> C<T> {
        self.coeff(&vec![0; self.nvars])
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `0` for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|e| total(e)).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, exps: Vec<u32>, coeff: C<T>) {
        if coeff == C::zero() {
            return;
        }
        match self.terms.get_mut(&exps) {
            Some(v) => {
                *v += coeff;
                if *v == C::zero() {
                    self.terms.remove(&exps);
                }
            }
            None => {
                self.terms.insert(exps, coeff);
            }
        }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &v) in &self.terms {
            out.add_term(e.clone(), v * s);
        }
        out
    }

    pub fn truncate(&self, max_degree: usize) -> Self {
        Self {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| total(e) <= max_degree)
                .map(|(e, v)| (e.clone(), *v))
                .collect(),
        }
    }

    /// Homogeneous part of the given degree.
    pub fn homogeneous(&self, degree: usize) -> Self {
        Self {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| total(e) == degree)
                .map(|(e, v)| (e.clone(), *v))
                .collect(),
        }
    }

    pub fn mul_truncated(&self, other: &Self, max_degree: usize) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Self::zero(self.nvars);
        for (ea, &a) in &self.terms {
            let da = total(ea);
            for (eb, &b) in &other.terms {
                if da + total(eb) > max_degree {
                    continue;
                }
                let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                out.add_term(e, a * b);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::one(self.nvars);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &v) in &self.terms {
            if e[i] > 0 {
                let mut f = e.clone();
                f[i] -= 1;
                out.add_term(f, v * T::from_usize_lossy(e[i] as usize));
            }
        }
        out
    }

    /// `∂^α`, with `α` a multi-index over all variables.
    pub fn derivative_multi(&self, alpha: &[u32]) -> Self {
        let mut out = self.clone();
        for (i, &a) in alpha.iter().enumerate() {
            for _ in 0..a {
                out = out.derivative(i);
            }
        }
        out
    }

    pub fn eval(&self, x: &[C<T>]) -> C<T> {
        assert_eq!(x.len(), self.nvars);
        self.terms.iter().fold(C::zero(), |acc, (e, &v)| {
            acc + e
                .iter()
                .zip(x)
                .fold(v, |m, (&k, &xi)| m * xi.powu(k))
        })
    }

    pub fn eval_real(&self, x: &[T]) -> C<T> {
        let xs: Vec<C<T>> = x.iter().map(|&v| re(v)).collect();
        self.eval(&xs)
    }

    /// `∑ a_k s^k` truncated at `max_degree`, for `s` with zero constant term.
    pub fn compose(&self, coeffs: &[C<T>], max_degree: usize) -> Self {
        debug_assert!(self.constant_term() == C::zero());
        let mut out = Self::zero(self.nvars);
        let mut power = Self::one(self.nvars);
        for (k, &a) in coeffs.iter().enumerate() {
            if k > max_degree || power.is_zero() {
                break;
            }
            out = &out + &power.scale(a);
            power = power.mul_truncated(self, max_degree);
        }
        out
    }

    pub fn exp_truncated(&self, max_degree: usize) -> Self {
        let c0 = self.constant_term();
        let s = self - &Self::constant(self.nvars, c0);
        let coeffs: Vec<C<T>> = (0..=max_degree).map(|k| re(T::lit(1.0 / factorial(k)))).collect();
        s.compose(&coeffs, max_degree).scale(c0.exp())
    }

    /// `1/p` as a truncated series; the constant term must not vanish.
    pub fn recip_truncated(&self, max_degree: usize) -> Self {
        let c0 = self.constant_term();
        assert!(c0 != C::zero(), "series reciprocal needs a nonzero constant term");
        let s = (self - &Self::constant(self.nvars, c0)).scale(C::<T>::one() / c0);
        let coeffs: Vec<C<T>> = (0..=max_degree)
            .map(|k| re(if k % 2 == 0 { T::one() } else { -T::one() }))
            .collect();
        s.compose(&coeffs, max_degree).scale(C::<T>::one() / c0)
    }

    /// Substitute variable `i` by a polynomial (in the same variable set).
    pub fn substitute(&self, i: usize, by: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &v) in &self.terms {
            let mut rest = e.clone();
            rest[i] = 0;
            let term = &Self::monomial(self.nvars, rest, v) * &by.pow(e[i]);
            out = &out + &term;
        }
        out
    }

    /// Re-express in a larger variable set; `map[i]` is the new index of variable `i`.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Self {
        let mut out = Self::zero(nvars);
        for (e, &v) in &self.terms {
            let mut f = vec![0; nvars];
            for (i, &k) in e.iter().enumerate() {
                f[map[i]] += k;
            }
            out.add_term(f, v);
        }
        out
    }

    /// Drop coefficients below `tol` in magnitude.
    pub fn prune(&self, tol: T) -> Self {
        Self {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, v)| v.norm() > tol)
                .map(|(e, v)| (e.clone(), *v))
                .collect(),
        }
    }

    /// Largest coefficient distance to `other`.
    pub fn max_coeff_distance(&self, other: &Self) -> T {
        let diff = self - other;
        diff.terms.values().map(|v| v.norm()).fold(T::zero(), T::max)
    }
}

pub(crate) fn total(e: &[u32]) -> usize {
    e.iter().map(|&k| k as usize).sum()
}

impl<T: Real> Add for &MPoly<T> {
    type Output = MPoly<T>;
    fn add(self, rhs: Self) -> MPoly<T> {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (e, &v) in &rhs.terms {
            out.add_term(e.clone(), v);
        }
        out
    }
}

impl<T: Real> Sub for &MPoly<T> {
    type Output = MPoly<T>;
    fn sub(self, rhs: Self) -> MPoly<T> {
        self + &(-rhs)
    }
}

impl<T: Real> Neg for &MPoly<T> {
    type Output = MPoly<T>;
    fn neg(self) -> MPoly<T> {
        self.scale(-C::<T>::one())
    }
}

impl<T: Real> Mul for &MPoly<T> {
    type Output = MPoly<T>;
    fn mul(self, rhs: Self) -> MPoly<T> {
        self.mul_truncated(rhs, usize::MAX)
    }
}
