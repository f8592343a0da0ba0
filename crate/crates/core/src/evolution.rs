//! Time slicing: partitions, Hamiltonian symbols, backward/forward Euler
//! product integrals, reference propagators and convergence studies.
//!
//! A Hamiltonian is a Weyl-ordered polynomial in `(q, p)` whose parts carry
//! affine time profiles. Evolution runs on a truncated Fock basis; the
//! generator of a step is `A = (i/ℏ) f̂`.

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{OmegaError, Result};
use crate::linalg::{inner, relative_distance, vec_norm, CMatrix};
use crate::ordering::OrderingRule;
use crate::phase_grid::{PhaseGrid, Symbol};
use crate::poly::MPoly;
use crate::quantizer::{dual_rule, quantize_polynomial, quantize_symbol, Basis, OperatorMatrix};
use crate::scalar::{c, i_unit, re, Real, C};

// ---------------------------------------------------------------------------
// Partitions.

/// Ordered knots `t_0 < t_1 < … < t_P`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition<T: Real> {
    knots: Vec<T>,
}

impl<T: Real> Partition<T> {
    pub fn new(knots: Vec<T>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(OmegaError::InvalidArgument("a partition needs at least two knots".into()));
        }
        if knots.iter().any(|t| !t.is_finite()) || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(OmegaError::InvalidArgument("partition knots must be finite and strictly increasing".into()));
        }
        Ok(Self { knots })
    }

    /// `steps` equal intervals of `[t_start, t_end]`.
    pub fn uniform(t_start: T, t_end: T, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(OmegaError::InvalidArgument("a partition needs at least one step".into()));
        }
        let h = (t_end - t_start) / T::from_usize_lossy(steps);
        let mut knots: Vec<T> = (0..steps).map(|j| t_start + h * T::from_usize_lossy(j)).collect();
        knots.push(t_end);
        Self::new(knots)
    }

    /// Uniform partition whose mesh is the largest `(t_end − t_start)/P`
    /// not exceeding `mesh`.
    pub fn with_mesh(t_start: T, t_end: T, mesh: T) -> Result<Self> {
        if !(mesh > T::zero()) {
            return Err(OmegaError::InvalidArgument("mesh must be positive".into()));
        }
        let steps = ((t_end - t_start) / mesh).to_f64_lossy() - 1e-9;
        Self::uniform(t_start, t_end, (steps.ceil() as usize).max(1))
    }

    pub fn t_start(&self) -> T {
        self.knots[0]
    }

    pub fn t_end(&self) -> T {
        *self.knots.last().expect("non-empty")
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn dt(&self, j: usize) -> T {
        self.knots[j + 1] - self.knots[j]
    }

    /// `|P| = max_j Δt_j`.
    pub fn mesh(&self) -> T {
        (0..self.steps()).map(|j| self.dt(j)).fold(T::zero(), |a, b| a.max(b))
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.dt(0);
        (0..self.steps()).all(|j| (self.dt(j) - h).abs() <= T::lit(1e-12) * h.abs().max(T::one()))
    }
}

// ---------------------------------------------------------------------------
// Hamiltonians.

/// Affine time profile `offset + slope·t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Profile<T: Real> {
    pub offset: T,
    pub slope: T,
}

impl<T: Real> Profile<T> {
    pub fn constant() -> Self {
        Self { offset: T::one(), slope: T::zero() }
    }

    pub fn at(&self, t: T) -> T {
        self.offset + self.slope * t
    }
}

/// Weyl symbol `f(t, q, p) = Σ_k c_k(t) f_k(q, p)`.
#[derive(Clone, Debug)]
pub struct Hamiltonian<T: Real> {
    pub name: String,
    parts: Vec<(Profile<T>, MPoly<T>)>,
    /// Candidate quasi-dissipativity constant for `Re(i f) ≥ δ`.
    pub delta: T,
}

impl<T: Real> Hamiltonian<T> {
    /// Time-independent Hamiltonian from a polynomial in `(q, p)`.
    pub fn new(name: &str, f: MPoly<T>) -> Result<Self> {
        Self::from_parts(name, vec![(Profile::constant(), f)])
    }

    pub fn from_parts(name: &str, parts: Vec<(Profile<T>, MPoly<T>)>) -> Result<Self> {
        if parts.iter().any(|(_, f)| f.nvars() != 2) {
            return Err(OmegaError::InvalidArgument("Hamiltonian polynomials must be in (q, p)".into()));
        }
        if parts.iter().any(|(pr, f)| {
            !pr.offset.is_finite() || !pr.slope.is_finite() || f.terms().any(|(_, v)| !(v.re.is_finite() && v.im.is_finite()))
        }) {
            return Err(OmegaError::InvalidArgument("Hamiltonian coefficients must be finite".into()));
        }
        Ok(Self {
            name: name.to_string(),
            parts,
            delta: T::zero(),
        })
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta = delta;
        self
    }

    pub fn zero() -> Self {
        Self::new("zero", MPoly::zero(2)).expect("valid")
    }

    pub fn time_dependent(&self) -> bool {
        self.parts.iter().any(|(pr, f)| pr.slope != T::zero() && !f.is_zero())
    }

    pub fn polynomial_at(&self, t: T) -> MPoly<T> {
        self.parts
            .iter()
            .fold(MPoly::zero(2), |acc, (pr, f)| &acc + &f.scale(re(pr.at(t))))
    }

    /// `∂_t f`, exact for affine profiles.
    pub fn time_derivative(&self) -> MPoly<T> {
        self.parts
            .iter()
            .fold(MPoly::zero(2), |acc, (pr, f)| &acc + &f.scale(re(pr.slope)))
    }

    pub fn degree(&self) -> usize {
        self.parts.iter().map(|(_, f)| f.degree()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.parts.iter().all(|(pr, f)| f.is_zero() || (pr.offset == T::zero() && pr.slope == T::zero()))
    }

    /// Unwindowed Weyl samples of `f(t, ·)`.
    pub fn symbol_at(&self, t: T, grid: &PhaseGrid<T>) -> Symbol<T> {
        let f = self.polynomial_at(t);
        Symbol::from_fn_1d(grid, OrderingRule::Weyl, |q, p| f.eval_real(&[q, p]))
    }

    /// `f̂(t)` quantized in the given rule on `levels` Fock levels.
    pub fn operator_at(&self, t: T, rule: OrderingRule, levels: usize, hbar: T) -> Result<OperatorMatrix<T>> {
        quantize_polynomial(&self.polynomial_at(t), rule, &Basis::fock(levels), hbar)
    }
}

/// `(q² + p²)/2`.
pub fn harmonic<T: Real>() -> MPoly<T> {
    let q = MPoly::var(2, 0);
    let p = MPoly::var(2, 1);
    (&(&q * &q) + &(&p * &p)).scale(re(T::lit(0.5)))
}

/// Built-in Hamiltonians.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Free,
    Oscillator,
    Quartic,
    ShiftedDissipative,
    TimeRamp,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Free,
        Preset::Oscillator,
        Preset::Quartic,
        Preset::ShiftedDissipative,
        Preset::TimeRamp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Free => "free",
            Preset::Oscillator => "oscillator",
            Preset::Quartic => "quartic",
            Preset::ShiftedDissipative => "shifted-dissipative",
            Preset::TimeRamp => "time-ramp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn formula(self) -> &'static str {
        match self {
            Preset::Free => "f = p²/2",
            Preset::Oscillator => "f = (q²+p²)/2",
            Preset::Quartic => "f = (q²+p²)²/4 + 1",
            Preset::ShiftedDissipative => "f = −i(1 + (q²+p²)/2), so i·f = 1 + (q²+p²)/2",
            Preset::TimeRamp => "f = (1+t)(q²+p²)/2",
        }
    }

    /// What [`check_aptness`] is expected to report.
    pub fn expectation(self) -> &'static str {
        match self {
            Preset::Free => "Re(if) = 0; not hypoelliptic (p²/2 vanishes on the q axis)",
            Preset::Oscillator => "Re(if) = 0; hypoelliptic; time independent",
            Preset::Quartic => "Re(if) = 0; hypoelliptic; time independent",
            Preset::ShiftedDissipative => "Re(if) ≥ 1, passes with δ = 1; hypoelliptic",
            Preset::TimeRamp => "Re(if) = 0; hypoelliptic; continuous in t",
        }
    }

    pub fn hamiltonian<T: Real>(self) -> Hamiltonian<T> {
        let p = MPoly::<T>::var(2, 1);
        let h = harmonic::<T>();
        let built = match self {
            Preset::Free => Hamiltonian::new(self.name(), (&p * &p).scale(re(T::lit(0.5)))),
            Preset::Oscillator => Hamiltonian::new(self.name(), h),
            Preset::Quartic => Hamiltonian::new(self.name(), &(&h * &h) + &MPoly::one(2)),
            Preset::ShiftedDissipative => Hamiltonian::new(
                self.name(),
                (&MPoly::one(2) + &h).scale(c(T::zero(), -T::one())),
            )
            .map(|h| h.with_delta(T::one())),
            Preset::TimeRamp => Hamiltonian::from_parts(
                self.name(),
                vec![(Profile { offset: T::one(), slope: T::one() }, h)],
            ),
        };
        let built = built.expect("preset polynomials are valid");
        match self {
            Preset::ShiftedDissipative => built,
            _ => built.with_delta(-T::one()),
        }
    }
}

// ---------------------------------------------------------------------------
// Aptness diagnostics.

#[derive(Clone, Debug, PartialEq)]
pub struct AptnessOptions {
    /// Decay exponents `(r₁, r₂)` used in the hypoellipticity weight.
    pub r1: f64,
    pub r2: f64,
    /// Shells where the hypoellipticity ratio is measured, as fractions of
    /// the grid half-width. Only the behaviour away from the origin matters.
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Largest tolerated ratio anywhere between the shells.
    pub ratio_limit: f64,
    /// Largest tolerated growth of the ratio from the inner to the outer shell.
    pub growth_limit: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Time samples (at least 2).
    pub time_samples: usize,
}

impl Default for AptnessOptions {
    fn default() -> Self {
        Self {
            r1: 1.0,
            r2: 0.0,
            inner_radius: 0.25,
            outer_radius: 0.6,
            ratio_limit: 1e2,
            growth_limit: 1.5,
            t_start: 0.0,
            t_end: 1.0,
            time_samples: 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AptnessReport {
    pub hbar: f64,
    /// Polynomial degree, i.e. the growth order `m₁`.
    pub growth_order: usize,
    pub positive_order: bool,
    pub delta: f64,
    pub min_re_if: f64,
    pub quasi_dissipative: bool,
    /// `sup |∂^α f|(1+|z|)^{r₁|α|} ℏ^{r₂|α|} / |if − δ|`, `|α| ≤ 2`, between the shells.
    pub hypoelliptic_ratio: f64,
    /// Ratio on the outer shell over the ratio on the inner shell.
    pub hypoelliptic_growth: f64,
    pub hypoelliptic: bool,
    /// Weighted sup distance between neighbouring time samples.
    pub continuity_modulus: f64,
    /// Same at half the sample spacing.
    pub continuity_modulus_half: f64,
    pub continuous: bool,
}

impl AptnessReport {
    pub fn apt(&self) -> bool {
        self.positive_order && self.quasi_dissipative && self.hypoelliptic && self.continuous
    }
}

const DERIVATIVES: [[u32; 2]; 6] = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];

/// Evaluate the three aptness conditions, and the growth order, on the
/// points of `grid` for each `ℏ` in `hbars`. Never fails: every condition
/// is reported as a flag.
pub fn check_aptness<T: Real>(h: &Hamiltonian<T>, grid: &PhaseGrid<T>, hbars: &[T], opts: &AptnessOptions) -> Vec<AptnessReport> {
    let points: Vec<(f64, f64)> = (0..grid.len())
        .map(|i| {
            let z = grid.point(i);
            (z.q[0].to_f64_lossy(), z.p[0].to_f64_lossy())
        })
        .collect();
    let l = grid.l_q().min(grid.l_p()).to_f64_lossy();
    let band = 0.1 * l;
    let samples = opts.time_samples.max(2);
    let times: Vec<f64> = (0..samples)
        .map(|k| opts.t_start + (opts.t_end - opts.t_start) * k as f64 / (samples - 1) as f64)
        .collect();
    let delta = h.delta.to_f64_lossy();
    let m1 = h.degree();

    let eval = |f: &MPoly<T>, q: f64, p: f64| {
        let v = f.eval_real(&[T::lit(q), T::lit(p)]);
        num_complex::Complex64::new(v.re.to_f64_lossy(), v.im.to_f64_lossy())
    };

    let mut min_re_if = f64::INFINITY;
    // (sup ratio between shells, sup ratio on inner band, sup ratio on outer band) per ℏ
    let mut shells = vec![(0.0f64, 0.0f64, 0.0f64); hbars.len()];
    for &t in &times {
        let f = h.polynomial_at(T::lit(t));
        let derivs: Vec<(usize, MPoly<T>)> =
            DERIVATIVES.iter().map(|a| ((a[0] + a[1]) as usize, f.derivative_multi(a))).collect();
        for &(q, p) in &points {
            let fv = eval(&f, q, p);
            let ifv = num_complex::Complex64::new(-fv.im, fv.re);
            min_re_if = min_re_if.min(ifv.re);
            let r = q.hypot(p);
            if r < opts.inner_radius * l || r > opts.outer_radius * l {
                continue;
            }
            let denom = (ifv - delta).norm();
            for (k, &hb) in hbars.iter().enumerate() {
                let hb = hb.to_f64_lossy();
                let mut ratio = 0.0f64;
                for (order, d) in &derivs {
                    let weight = (1.0 + r).powf(opts.r1 * *order as f64) * hb.powf(opts.r2 * *order as f64);
                    let num = eval(d, q, p).norm() * weight;
                    ratio = ratio.max(if denom > 0.0 {
                        num / denom
                    } else if num > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    });
                }
                let s = &mut shells[k];
                s.0 = s.0.max(ratio);
                if r <= opts.inner_radius * l + band {
                    s.1 = s.1.max(ratio);
                }
                if r >= opts.outer_radius * l - band {
                    s.2 = s.2.max(ratio);
                }
            }
        }
    }

    // Time continuity, weighted by (1+|z|)^{m₁}.
    let modulus = |spacing: f64| -> f64 {
        let mut worst = 0.0f64;
        let mut t = opts.t_start;
        while t + spacing <= opts.t_end + 1e-12 {
            let d = &h.polynomial_at(T::lit(t + spacing)) - &h.polynomial_at(T::lit(t));
            for &(q, p) in &points {
                worst = worst.max(eval(&d, q, p).norm() / (1.0 + q.hypot(p)).powi(m1 as i32));
            }
            t += spacing;
        }
        worst
    };
    let spacing = (opts.t_end - opts.t_start) / (samples - 1) as f64;
    let (m_full, m_half) = if spacing > 0.0 {
        (modulus(spacing), modulus(0.5 * spacing))
    } else {
        (0.0, 0.0)
    };
    let continuous = m_full <= 1e-12 || m_half <= 0.75 * m_full;

    hbars
        .iter()
        .zip(&shells)
        .map(|(&hb, &(sup, inner, outer))| {
            let growth = if inner > 0.0 { outer / inner } else if outer > 0.0 { f64::INFINITY } else { 1.0 };
            AptnessReport {
                hbar: hb.to_f64_lossy(),
                growth_order: m1,
                positive_order: m1 > 0 && !h.is_zero(),
                delta,
                min_re_if,
                quasi_dissipative: min_re_if >= delta,
                hypoelliptic_ratio: sup,
                hypoelliptic_growth: growth,
                hypoelliptic: sup.is_finite() && sup <= opts.ratio_limit && growth <= opts.growth_limit,
                continuity_modulus: m_full,
                continuity_modulus_half: m_half,
                continuous,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Truncation and step factors.

/// Where evolution happens: `levels` Fock levels, and the phase grid used by
/// the symbol scheme. The error norms look only at the `low_levels` block.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionSetup<T: Real> {
    pub hbar: T,
    pub levels: usize,
    pub grid: PhaseGrid<T>,
    /// Window plateau and edge width, as fractions of the half-width.
    pub window: (T, T),
    pub low_levels: usize,
}

impl<T: Real> EvolutionSetup<T> {
    /// 64 levels; 160 × 160 grid of half-width `20√ℏ`. The window edge
    /// (`1.6√ℏ`) is wide enough for Gaussian-ordered symbols to survive the
    /// conversion to Weyl form, and the window has decayed below `1e-14`
    /// at the lattice boundary.
    pub fn new(hbar: T) -> Result<Self> {
        let l = T::lit(20.0) * hbar.sqrt();
        Ok(Self {
            hbar,
            levels: 64,
            grid: PhaseGrid::square(160, l, hbar)?,
            window: (T::lit(0.55), T::lit(0.08)),
            low_levels: 4,
        })
    }

    pub fn basis(&self) -> Basis<T> {
        Basis::fock(self.levels)
    }

    fn validate(&self) -> Result<()> {
        if !(self.hbar > T::zero()) {
            return Err(OmegaError::InvalidArgument("ℏ must be positive".into()));
        }
        if (self.grid.hbar() - self.hbar).abs() > T::lit(1e-12) * self.hbar {
            return Err(OmegaError::InvalidArgument("grid ℏ differs from the evolution ℏ".into()));
        }
        if self.low_levels == 0 || self.low_levels > self.levels {
            return Err(OmegaError::InvalidArgument("low_levels must lie in 1..=levels".into()));
        }
        self.basis().validate()
    }
}

/// How one time step is realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// `(1 + (iΔt/ℏ) f̂(t_{j+1}))^{−1}` with `f̂` the Weyl quantization.
    BackwardOperator,
    /// Quantization of the symbol `(1 + (iΔt/ℏ) f(t_{j+1}, z))^{−1}`, read
    /// in the given ordering.
    BackwardSymbol(OrderingRule),
    /// `1 − (iΔt/ℏ) f̂(t_j)`.
    ForwardOperator,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::BackwardOperator => "backward_operator",
            Scheme::BackwardSymbol(_) => "backward_symbol",
            Scheme::ForwardOperator => "forward_operator",
        }
    }

    /// Ordering of the generator the scheme approximates.
    pub fn rule(self) -> OrderingRule {
        match self {
            Scheme::BackwardSymbol(rule) => rule,
            _ => OrderingRule::Weyl,
        }
    }
}

/// Generator `A = (i/ℏ) f̂`.
pub fn generator<T: Real>(f_hat: &OperatorMatrix<T>) -> CMatrix<T> {
    f_hat.matrix.scale(i_unit::<T>() / re(f_hat.hbar))
}

/// One backward Euler step: solve `(1 + Δt A) ψ' = ψ`.
pub fn backward_euler_step<T: Real>(a: &OperatorMatrix<T>, dt: T, psi: &[C<T>]) -> Result<Vec<C<T>>> {
    if !(dt > T::zero()) {
        return Err(OmegaError::InvalidArgument("Δt must be positive".into()));
    }
    if psi.len() != a.dim() {
        return Err(OmegaError::DimensionMismatch { expected: a.dim(), found: psi.len() });
    }
    let m = &CMatrix::identity(a.dim()) + &a.matrix.scale_real(dt);
    m.solve(psi).ok_or(OmegaError::Singular { step: 0 })
}

/// Resolvent symbol `(1 + (iΔt/ℏ) f)^{−1}` sampled on the grid, windowed and
/// tagged with `rule`.
pub fn resolvent_symbol<T: Real>(f: &MPoly<T>, dt: T, rule: OrderingRule, setup: &EvolutionSetup<T>) -> Symbol<T> {
    let x = c(T::zero(), dt / setup.hbar);
    Symbol::from_fn_1d(&setup.grid, rule, |q, p| C::<T>::from(T::one()) / (C::<T>::from(T::one()) + x * f.eval_real(&[q, p])))
        .windowed(setup.window.0, setup.window.1)
}

/// Short-time exponential symbol `exp(−(iΔt/ℏ) f)`, windowed and tagged.
pub fn exponential_symbol<T: Real>(f: &MPoly<T>, dt: T, rule: OrderingRule, setup: &EvolutionSetup<T>) -> Symbol<T> {
    let x = c(T::zero(), -dt / setup.hbar);
    Symbol::from_fn_1d(&setup.grid, rule, |q, p| (x * f.eval_real(&[q, p])).exp())
        .windowed(setup.window.0, setup.window.1)
}

fn operator_factor<T: Real>(f_hat: &CMatrix<T>, dt: T, hbar: T, backward: bool, step: usize) -> Result<CMatrix<T>> {
    let n = f_hat.rows();
    let x = c(T::zero(), dt / hbar);
    if backward {
        (&CMatrix::identity(n) + &f_hat.scale(x)).inverse().ok_or(OmegaError::Singular { step })
    } else {
        Ok(&CMatrix::identity(n) - &f_hat.scale(x))
    }
}

/// Factor of step `j` (from `t_j` to `t_{j+1}`).
fn step_factor<T: Real>(
    h: &Hamiltonian<T>,
    p: &Partition<T>,
    j: usize,
    scheme: Scheme,
    setup: &EvolutionSetup<T>,
) -> Result<CMatrix<T>> {
    let dt = p.dt(j);
    let (t_prev, t_next) = (p.knots()[j], p.knots()[j + 1]);
    match scheme {
        Scheme::BackwardOperator => {
            let f = h.operator_at(t_next, OrderingRule::Weyl, setup.levels, setup.hbar)?;
            operator_factor(&f.matrix, dt, setup.hbar, true, j)
        }
        Scheme::ForwardOperator => {
            let f = h.operator_at(t_prev, OrderingRule::Weyl, setup.levels, setup.hbar)?;
            operator_factor(&f.matrix, dt, setup.hbar, false, j)
        }
        Scheme::BackwardSymbol(rule) => {
            let r = resolvent_symbol(&h.polynomial_at(t_next), dt, rule, setup);
            Ok(quantize_symbol(&r, &setup.basis())?.matrix)
        }
    }
}

/// The individual step factors `F_0, …, F_{P−1}` (earliest first).
pub fn step_factors<T: Real>(
    h: &Hamiltonian<T>,
    p: &Partition<T>,
    scheme: Scheme,
    setup: &EvolutionSetup<T>,
) -> Result<Vec<CMatrix<T>>> {
    setup.validate()?;
    (0..p.steps()).map(|j| step_factor(h, p, j, scheme, setup)).collect()
}

/// Time-ordered product `F_{P−1} ⋯ F_1 F_0` of the scheme's step factors.
/// Time-independent Hamiltonians on uniform partitions take a matrix power.
pub fn product_integral<T: Real>(
    h: &Hamiltonian<T>,
    p: &Partition<T>,
    scheme: Scheme,
    setup: &EvolutionSetup<T>,
) -> Result<OperatorMatrix<T>> {
    setup.validate()?;
    let n = setup.levels;
    let u = if h.is_zero() {
        CMatrix::identity(n)
    } else if !h.time_dependent() && p.is_uniform() {
        step_factor(h, p, 0, scheme, setup)?.pow(p.steps())
    } else {
        let mut u = CMatrix::identity(n);
        for j in 0..p.steps() {
            u = step_factor(h, p, j, scheme, setup)?.matmul(&u);
        }
        u
    };
    OperatorMatrix::new(setup.basis(), u, setup.hbar)
}

/// Apply the step factors to `ψ₀` one at a time; entry `j` of the result is
/// the state at knot `t_j`.
pub fn evolve_state<T: Real>(
    h: &Hamiltonian<T>,
    p: &Partition<T>,
    psi0: &[C<T>],
    scheme: Scheme,
    setup: &EvolutionSetup<T>,
) -> Result<Vec<Vec<C<T>>>> {
    setup.validate()?;
    if psi0.len() != setup.levels {
        return Err(OmegaError::DimensionMismatch { expected: setup.levels, found: psi0.len() });
    }
    let mut out = vec![psi0.to_vec()];
    let reuse = !h.time_dependent() && p.is_uniform();
    let mut cached: Option<CMatrix<T>> = None;
    for j in 0..p.steps() {
        let f = match (&cached, reuse) {
            (Some(f), true) => f.clone(),
            _ => {
                let f = if h.is_zero() { CMatrix::identity(setup.levels) } else { step_factor(h, p, j, scheme, setup)? };
                if reuse {
                    cached = Some(f.clone());
                }
                f
            }
        };
        let next = f.matvec(out.last().expect("non-empty"));
        out.push(next);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reference propagators.

/// How the reference propagator is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    /// Eigendecomposition for time-independent Hamiltonians, Richardson otherwise.
    Auto,
    Eigen,
    /// `2 U(h/20) − U(h/10)` from backward-operator products on partitions
    /// 10 and 20 times finer than the given mesh.
    Richardson,
}

/// `exp(−(i/ℏ)(t₁ − t₀) f̂)` for time-independent `f`, with `f̂` quantized in
/// `rule`. Hermitian generators go through an eigendecomposition, others
/// through the matrix exponential.
pub fn exact_propagator<T: Real>(h: &Hamiltonian<T>, t0: T, t1: T, rule: OrderingRule, setup: &EvolutionSetup<T>) -> Result<CMatrix<T>> {
    if h.time_dependent() {
        return Err(OmegaError::Unsupported("no closed-form propagator for a time-dependent Hamiltonian".into()));
    }
    let f = h.operator_at(t0, rule, setup.levels, setup.hbar)?.matrix;
    let tau = (t1 - t0) / setup.hbar;
    if f.anti_hermitian_ratio() <= T::lit(1e-13) {
        let (vals, v) = f.hermitian_eigen();
        let phases: Vec<C<T>> = vals.iter().map(|&e| c(T::zero(), -e * tau).exp()).collect();
        Ok(v.matmul(&CMatrix::from_diagonal(&phases)).matmul(&v.adjoint()))
    } else {
        Ok(f.scale(c(T::zero(), -tau)).expm())
    }
}

/// Richardson extrapolation of backward-operator products (generator
/// quantized in `rule`) on uniform partitions of mesh `mesh/10` and `mesh/20`.
pub fn richardson_propagator<T: Real>(
    h: &Hamiltonian<T>,
    t0: T,
    t1: T,
    mesh: T,
    rule: OrderingRule,
    setup: &EvolutionSetup<T>,
) -> Result<CMatrix<T>> {
    let coarse = Partition::with_mesh(t0, t1, mesh / T::lit(10.0))?;
    let fine = Partition::uniform(t0, t1, 2 * coarse.steps())?;
    let product = |p: &Partition<T>| -> Result<CMatrix<T>> {
        if !h.time_dependent() {
            let f = h.operator_at(t0, rule, setup.levels, setup.hbar)?.matrix;
            return Ok(operator_factor(&f, p.dt(0), setup.hbar, true, 0)?.pow(p.steps()));
        }
        let mut u = CMatrix::identity(setup.levels);
        for j in 0..p.steps() {
            let f = h.operator_at(p.knots()[j + 1], rule, setup.levels, setup.hbar)?.matrix;
            u = operator_factor(&f, p.dt(j), setup.hbar, true, j)?.matmul(&u);
        }
        Ok(u)
    };
    let u_coarse = product(&coarse)?;
    let u_fine = product(&fine)?;
    Ok(&u_fine.scale_real(T::lit(2.0)) - &u_coarse)
}

/// Reference propagator over `[t0, t1]` for meshes down to `finest_mesh`.
pub fn reference_propagator<T: Real>(
    h: &Hamiltonian<T>,
    t0: T,
    t1: T,
    rule: OrderingRule,
    reference: Reference,
    finest_mesh: T,
    setup: &EvolutionSetup<T>,
) -> Result<CMatrix<T>> {
    match reference {
        Reference::Eigen => exact_propagator(h, t0, t1, rule, setup),
        Reference::Richardson => richardson_propagator(h, t0, t1, finest_mesh, rule, setup),
        Reference::Auto if h.time_dependent() => richardson_propagator(h, t0, t1, finest_mesh, rule, setup),
        Reference::Auto => exact_propagator(h, t0, t1, rule, setup),
    }
}

/// Relative Frobenius distance on the leading `k × k` block.
pub fn low_energy_distance<T: Real>(u: &CMatrix<T>, reference: &CMatrix<T>, k: usize) -> f64 {
    relative_distance(&u.block(k), &reference.block(k)).to_f64_lossy()
}

// ---------------------------------------------------------------------------
// Convergence studies.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    OperatorFrobenius,
    SymbolWeak,
    StateL2,
}

impl NormKind {
    pub fn name(self) -> &'static str {
        match self {
            NormKind::OperatorFrobenius => "operator_frobenius",
            NormKind::SymbolWeak => "symbol_weak",
            NormKind::StateL2 => "state_l2",
        }
    }
}

/// Least-squares slope of `log error` against `log mesh`, with the RMS
/// residual. `None` for fewer than two points or non-positive data.
pub fn fit_order(meshes: &[f64], errors: &[f64]) -> Option<(f64, f64)> {
    if meshes.len() < 2 || meshes.len() != errors.len() || meshes.iter().chain(errors).any(|&v| !(v > 0.0 && v.is_finite())) {
        return None;
    }
    let xs: Vec<f64> = meshes.iter().map(|m| m.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    Some((slope, (rss / n).sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub scheme: String,
    pub rule: OrderingRule,
    pub hbar: f64,
    pub norm_kind: NormKind,
    pub meshes: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when the data cannot be fitted (single mesh, zero errors).
    pub fitted_order: Option<f64>,
    pub residual: Option<f64>,
}

impl ConvergenceReport {
    pub fn new(scheme: &str, rule: OrderingRule, hbar: f64, norm_kind: NormKind, meshes: Vec<f64>, errors: Vec<f64>) -> Self {
        let fit = fit_order(&meshes, &errors);
        Self {
            scheme: scheme.to_string(),
            rule,
            hbar,
            norm_kind,
            meshes,
            errors,
            fitted_order: fit.map(|f| f.0),
            residual: fit.map(|f| f.1),
        }
    }

    pub fn monotone(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn order_within(&self, lo: f64, hi: f64) -> bool {
        self.fitted_order.is_some_and(|o| o >= lo && o <= hi)
    }

    pub const CSV_HEADER: &'static str = "mesh,error,scheme,rule,hbar";

    /// Data rows (no header), 17 significant digits.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (m, e) in self.meshes.iter().zip(&self.errors) {
            out.push_str(&format!("{m:.16e},{e:.16e},{},{},{:.16e}\n", self.scheme, self.rule.name(), self.hbar));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows())
    }
}

fn check_meshes(meshes: &[f64]) -> Result<()> {
    if meshes.is_empty() {
        return Err(OmegaError::InvalidArgument("empty mesh sequence".into()));
    }
    if meshes.iter().any(|m| !(*m > 0.0 && m.is_finite())) || meshes.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(OmegaError::InvalidArgument("meshes must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Operator error of `scheme` over `[t0, t1]` for each mesh, measured on
/// the low-energy block against the reference propagator of the scheme's
/// generator. Meshes are evaluated in parallel.
pub fn operator_convergence_study<T: Real>(
    h: &Hamiltonian<T>,
    scheme: Scheme,
    t0: T,
    t1: T,
    meshes: &[f64],
    reference: Reference,
    setup: &EvolutionSetup<T>,
) -> Result<ConvergenceReport> {
    check_meshes(meshes)?;
    let finest = T::lit(*meshes.last().expect("non-empty"));
    let u_ref = reference_propagator(h, t0, t1, scheme.rule(), reference, finest, setup)?;
    let errors: Vec<f64> = meshes
        .par_iter()
        .map(|&m| {
            let p = Partition::with_mesh(t0, t1, T::lit(m))?;
            let u = product_integral(h, &p, scheme, setup)?;
            Ok(low_energy_distance(&u.matrix, &u_ref, setup.low_levels))
        })
        .collect::<Result<_>>()?;
    let actual: Vec<f64> = meshes
        .iter()
        .map(|&m| Partition::with_mesh(t0, t1, T::lit(m)).map(|p| p.mesh().to_f64_lossy()))
        .collect::<Result<_>>()?;
    Ok(ConvergenceReport::new(
        scheme.name(),
        scheme.rule(),
        setup.hbar.to_f64_lossy(),
        NormKind::OperatorFrobenius,
        actual,
        errors,
    ))
}

/// Gaussian times quadratic polynomial:
/// `(1 + a·x + b·y + c·xy) exp(−(x² + y²)/2)`, `x = (q − q₀)/σ`, `y = (p − p₀)/σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestFunction {
    pub q0: f64,
    pub p0: f64,
    pub sigma: f64,
    pub coeffs: [f64; 3],
}

impl TestFunction {
    pub fn eval(&self, q: f64, p: f64) -> f64 {
        let x = (q - self.q0) / self.sigma;
        let y = (p - self.p0) / self.sigma;
        let [a, b, c] = self.coeffs;
        (1.0 + a * x + b * y + c * x * y) * (-0.5 * (x * x + y * y)).exp()
    }

    pub fn sample<T: Real>(&self, grid: &PhaseGrid<T>, rule: OrderingRule) -> Symbol<T> {
        Symbol::from_fn_1d(grid, rule, |q, p| re(T::lit(self.eval(q.to_f64_lossy(), p.to_f64_lossy()))))
    }
}

pub const BATTERY_SIZE: usize = 20;
pub const DEFAULT_BATTERY_SEED: u64 = 20_240_601;

/// Fixed battery of test functions in units of `√ℏ`: centres within `√ℏ`
/// of the origin, widths in `[0.5, 0.9]√ℏ`.
pub fn weak_battery(seed: u64, hbar: f64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = hbar.sqrt();
    (0..BATTERY_SIZE)
        .map(|_| TestFunction {
            q0: rng.gen_range(-1.0..1.0) * s,
            p0: rng.gen_range(-1.0..1.0) * s,
            sigma: rng.gen_range(0.5..0.9) * s,
            coeffs: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        })
        .collect()
}

/// Operators `Op_{Ω*}(φ)` of the battery in the rule dual to `rule`, so that
/// `⟨u_Ω, φ⟩ = Tr(U Op_{Ω*}(φ))` for the strict Ω-symbol `u_Ω` of `U`.
pub fn battery_operators<T: Real>(battery: &[TestFunction], rule: OrderingRule, setup: &EvolutionSetup<T>) -> Result<Vec<CMatrix<T>>> {
    let dual = dual_rule(rule).ok_or(OmegaError::ZeroSetViolation { fraction: 1.0, limit: 0.0 })?;
    // The battery lives within ~3√ℏ of the origin; a small grid suffices.
    let grid = PhaseGrid::square(64, T::lit(8.0) * setup.hbar.sqrt(), setup.hbar)?;
    battery
        .iter()
        .map(|phi| Ok(quantize_symbol(&phi.sample(&grid, dual), &setup.basis())?.matrix))
        .collect()
}

/// `⟨u, φ⟩ = ∫ u φ dλ` for each battery member, through the trace formula.
pub fn weak_pairings<T: Real>(u: &CMatrix<T>, ops: &[CMatrix<T>]) -> Vec<C<T>> {
    ops.iter()
        .map(|o| {
            let n = u.rows();
            let mut acc = C::zero();
            for i in 0..n {
                for k in 0..n {
                    acc += u[(i, k)] * o[(k, i)];
                }
            }
            acc
        })
        .collect()
}

/// Weak distance `max_φ |⟨u^P − u^ref, φ⟩|` between the Ω-symbols of the
/// backward-symbol products and of the reference propagator.
pub fn symbol_convergence_study<T: Real>(
    h: &Hamiltonian<T>,
    rule: OrderingRule,
    t0: T,
    t1: T,
    meshes: &[f64],
    reference: Reference,
    battery_seed: u64,
    setup: &EvolutionSetup<T>,
) -> Result<ConvergenceReport> {
    check_meshes(meshes)?;
    let ops = battery_operators(&weak_battery(battery_seed, setup.hbar.to_f64_lossy()), rule, setup)?;
    let finest = T::lit(*meshes.last().expect("non-empty"));
    let u_ref = reference_propagator(h, t0, t1, rule, reference, finest, setup)?;
    let ref_pairs = weak_pairings(&u_ref, &ops);
    let scheme = Scheme::BackwardSymbol(rule);
    let errors: Vec<f64> = meshes
        .par_iter()
        .map(|&m| {
            let p = Partition::with_mesh(t0, t1, T::lit(m))?;
            let u = product_integral(h, &p, scheme, setup)?;
            Ok(weak_pairings(&u.matrix, &ops)
                .iter()
                .zip(&ref_pairs)
                .map(|(a, b)| (a - b).norm().to_f64_lossy())
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let actual: Vec<f64> = meshes
        .iter()
        .map(|&m| Partition::with_mesh(t0, t1, T::lit(m)).map(|p| p.mesh().to_f64_lossy()))
        .collect::<Result<_>>()?;
    Ok(ConvergenceReport::new(
        scheme.name(),
        rule,
        setup.hbar.to_f64_lossy(),
        NormKind::SymbolWeak,
        actual,
        errors,
    ))
}

/// `‖U†U − 1‖_F` on the low-energy block.
pub fn unitarity_defect<T: Real>(u: &CMatrix<T>, k: usize) -> f64 {
    let g = u.adjoint().matmul(u).block(k);
    (&g - &CMatrix::identity(k)).frobenius_norm().to_f64_lossy()
}

/// Short-time symbol ansätze against the exact step.
#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzComparison {
    pub dt: f64,
    pub rule: OrderingRule,
    /// Low-block relative Frobenius distance of `Op((1 + iΔt f/ℏ)^{−1})`.
    pub resolvent_error: f64,
    /// Same for `Op(exp(−iΔt f/ℏ))`.
    pub exponential_error: f64,
    /// Errors divided by `Δt²`.
    pub resolvent_coefficient: f64,
    pub exponential_coefficient: f64,
    /// Largest modulus of each windowed symbol on the grid.
    pub resolvent_sup: f64,
    pub exponential_sup: f64,
}

/// Quantize both ansätze for `f(t)` in `rule` and compare with
/// `exp(−iΔt f̂/ℏ)` (generator quantized in the same rule, frozen at `t`).
pub fn dft_ansatz_compare<T: Real>(h: &Hamiltonian<T>, t: T, dt: T, rule: OrderingRule, setup: &EvolutionSetup<T>) -> Result<AnsatzComparison> {
    setup.validate()?;
    if !(dt > T::zero()) {
        return Err(OmegaError::InvalidArgument("Δt must be positive".into()));
    }
    let frozen = Hamiltonian::new(&h.name, h.polynomial_at(t))?;
    let exact = exact_propagator(&frozen, T::zero(), dt, rule, setup)?;
    let f = frozen.polynomial_at(T::zero());
    let r = resolvent_symbol(&f, dt, rule, setup);
    let e = exponential_symbol(&f, dt, rule, setup);
    let r_op = quantize_symbol(&r, &setup.basis())?.matrix;
    let e_op = quantize_symbol(&e, &setup.basis())?.matrix;
    let k = setup.low_levels;
    let dt2 = dt.to_f64_lossy().powi(2);
    let resolvent_error = low_energy_distance(&r_op, &exact, k);
    let exponential_error = low_energy_distance(&e_op, &exact, k);
    Ok(AnsatzComparison {
        dt: dt.to_f64_lossy(),
        rule,
        resolvent_error,
        exponential_error,
        resolvent_coefficient: resolvent_error / dt2,
        exponential_coefficient: exponential_error / dt2,
        resolvent_sup: r.max_abs().to_f64_lossy(),
        exponential_sup: e.max_abs().to_f64_lossy(),
    })
}

/// Smallest `Re⟨ψ|(i/ℏ)f̂|ψ⟩/⟨ψ|ψ⟩` over the basis vectors and `samples`
/// random states: a sampled lower bound on the numerical range of `A`.
pub fn sampled_numerical_range<T: Real>(a: &OperatorMatrix<T>, samples: usize, seed: u64) -> f64 {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quad = |v: &[C<T>]| -> f64 {
        let av = a.matrix.matvec(v);
        (inner(v, &av).re / vec_norm(v).powi(2)).to_f64_lossy()
    };
    let mut best = f64::INFINITY;
    for k in 0..n {
        let mut e = vec![C::zero(); n];
        e[k] = re(T::one());
        best = best.min(quad(&e));
    }
    for _ in 0..samples {
        let v: Vec<C<T>> = (0..n).map(|_| c(T::lit(rng.gen_range(-1.0..1.0)), T::lit(rng.gen_range(-1.0..1.0)))).collect();
        best = best.min(quad(&v));
    }
    best
}

/// Diagonal propagator `diag(e^{−iE_k τ/ℏ})`, handy for oracles.
pub fn diagonal_propagator<T: Real>(energies: &[T], tau: T, hbar: T) -> CMatrix<T> {
    CMatrix::from_diagonal(&energies.iter().map(|&e| c(T::zero(), -e * tau / hbar).exp()).collect::<Vec<_>>())
}
