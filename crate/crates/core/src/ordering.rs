//! The seven ordering rules and their factors `Ω(ζ)`.
//!
//! Every rule is encoded by a function `Ω` on frequency space with
//! `Ω(0) = 1`; the Ω-symbol of an operator with Weyl symbol `f` is defined
//! through `f̃^Ω(ζ) = f̃(ζ)/Ω(ζ)`. The table is written for `ℏ = 1`
//! and is evaluated at `ζ/√ℏ` otherwise, which is the scaling under which
//! `[q̂, p̂] = iℏ` is reproduced.
//!
//! In table units, with `X = ¼[(ζ⁺)² − (ζ⁻)²] = i q_ζ p_ζ / 2` and
//! `ζ⁺ζ⁻ = |ζ|²/2`:
//!
//! | rule          | Ω(ζ)                 |
//! |---------------|----------------------|
//! | Weyl          | 1                    |
//! | Standard      | e^X                  |
//! | Antistandard  | e^{−X}               |
//! | Normal        | e^{ζ⁺ζ⁻/2}           |
//! | Antinormal    | e^{−ζ⁺ζ⁻/2}          |
//! | Symmetric     | cosh X = cos(q_ζp_ζ/2) |
//! | Born–Jordan   | sinh X / X           |

use std::fmt;
use std::str::FromStr;

use crate::error::OmegaError;
use crate::phase_grid::{PhaseGrid, PhasePoint};
use crate::scalar::{c, re, Real, C};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrderingRule {
    Weyl,
    Standard,
    Antistandard,
    Normal,
    Antinormal,
    Symmetric,
    BornJordan,
}

/// How far the Ω-symbol of a general Weyl symbol is guaranteed to exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strictness {
    /// `1/Ω` is bounded, so every band-limited symbol has a strict Ω-symbol.
    StrictEverywhere,
    /// `1/Ω` grows without zeros; strict symbols exist for symbols whose
    /// spectrum decays faster than `Ω`.
    StrictOnMultipliers,
    /// `Ω` vanishes on a hypersurface; only the formal series is available.
    FormalOnly,
}

impl OrderingRule {
    pub const ALL: [OrderingRule; 7] = [
        OrderingRule::Weyl,
        OrderingRule::Standard,
        OrderingRule::Antistandard,
        OrderingRule::Normal,
        OrderingRule::Antinormal,
        OrderingRule::Symmetric,
        OrderingRule::BornJordan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OrderingRule::Weyl => "weyl",
            OrderingRule::Standard => "standard",
            OrderingRule::Antistandard => "antistandard",
            OrderingRule::Normal => "normal",
            OrderingRule::Antinormal => "antinormal",
            OrderingRule::Symmetric => "symmetric",
            OrderingRule::BornJordan => "born-jordan",
        }
    }

    /// Stable byte tag used by the binary container.
    pub fn tag(self) -> u8 {
        Self::ALL.iter().position(|&r| r == self).expect("listed") as u8
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        Self::ALL.get(t as usize).copied()
    }

    pub fn has_zeros(self) -> bool {
        matches!(self, OrderingRule::Symmetric | OrderingRule::BornJordan)
    }

    pub fn strictness(self) -> Strictness {
        match self {
            OrderingRule::Weyl | OrderingRule::Standard | OrderingRule::Antistandard | OrderingRule::Normal => {
                Strictness::StrictEverywhere
            }
            OrderingRule::Antinormal => Strictness::StrictOnMultipliers,
            OrderingRule::Symmetric | OrderingRule::BornJordan => Strictness::FormalOnly,
        }
    }

    /// Factor for one degree of freedom in table units.
    pub fn omega_mode<T: Real>(self, q: T, p: T) -> C<T> {
        let half = T::lit(0.5);
        let y = q * p * half;
        let r2 = q * q + p * p;
        match self {
            OrderingRule::Weyl => re(T::one()),
            OrderingRule::Standard => c(y.cos(), y.sin()),
            OrderingRule::Antistandard => c(y.cos(), -y.sin()),
            OrderingRule::Normal => re((r2 * T::lit(0.25)).exp()),
            OrderingRule::Antinormal => re((-r2 * T::lit(0.25)).exp()),
            OrderingRule::Symmetric => re(y.cos()),
            OrderingRule::BornJordan => re(sinc(y)),
        }
    }

    /// `Ω(ζ)` in table units (no ℏ rescaling).
    pub fn omega_table<T: Real>(self, zeta: &PhasePoint<T>) -> C<T> {
        zeta.q
            .iter()
            .zip(&zeta.p)
            .fold(re(T::one()), |acc, (&q, &p)| acc * self.omega_mode(q, p))
    }

    /// `Ω(ζ/√ℏ)`, the factor that relates symbols at Planck constant `ℏ`.
    pub fn omega<T: Real>(self, zeta: &PhasePoint<T>, hbar: T) -> C<T> {
        self.omega_table(&zeta.scaled(T::one() / hbar.sqrt()))
    }

    /// Factor sampled on every point of a frequency lattice.
    pub fn omega_on_grid<T: Real>(self, fgrid: &PhaseGrid<T>) -> Vec<C<T>> {
        let h = fgrid.hbar();
        (0..fgrid.len()).map(|i| self.omega(&fgrid.point(i), h)).collect()
    }
}

/// Evaluate `Ω(ζ)` for a rule. Total function.
pub fn omega_factor<T: Real>(rule: OrderingRule, zeta: &PhasePoint<T>, hbar: T) -> C<T> {
    rule.omega(zeta, hbar)
}

fn sinc<T: Real>(y: T) -> T {
    if y.abs() < T::lit(1e-4) {
        let y2 = y * y;
        T::one() - y2 / T::lit(6.0) + y2 * y2 / T::lit(120.0)
    } else {
        y.sin() / y
    }
}

impl fmt::Display for OrderingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OrderingRule {
    type Err = OmegaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.name() == key || (key == "bornjordan" && *r == OrderingRule::BornJordan))
            .ok_or_else(|| OmegaError::InvalidArgument(format!("unknown ordering rule `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::i_unit;

    #[test]
    fn every_rule_is_one_at_origin() {
        let z = PhasePoint::<f64>::origin(2);
        for r in OrderingRule::ALL {
            assert_eq!(r.omega(&z, 0.3), re(1.0), "{r}");
        }
    }

    #[test]
    fn weyl_is_identically_one() {
        for (q, p) in [(1.0, 2.0), (-3.0, 0.5), (7.0, -7.0)] {
            assert_eq!(OrderingRule::Weyl.omega(&PhasePoint::one(q, p), 1.0), re(1.0));
        }
    }

    #[test]
    fn standard_at_unit_frequency() {
        // Hand expansion: ζ± = (1 ± i)/√2, (ζ⁺)² − (ζ⁻)² = (2i − (−2i))/2 = 2i.
        let zp = c(1.0, 1.0) / 2f64.sqrt();
        let zm = zp.conj();
        let x = (zp * zp - zm * zm) / 4.0;
        assert!((x - c(0.0, 0.5)).norm() < 1e-15);
        let got = OrderingRule::Standard.omega(&PhasePoint::one(1.0, 1.0), 1.0);
        assert!((got - (i_unit::<f64>() * 0.5).exp()).norm() < 1e-15);
    }

    #[test]
    fn complex_coordinate_forms_agree() {
        // Check the closed forms against the ζ± expressions of the table.
        for (q, p) in [(0.3, -1.1), (2.0, 0.7), (-1.5, -2.5)] {
            let z = PhasePoint::one(q, p);
            let zp = z.z_plus()[0];
            let zm = z.z_minus()[0];
            let x = (zp * zp - zm * zm) / 4.0;
            let n = zp * zm / 2.0;
            let cases = [
                (OrderingRule::Standard, x.exp()),
                (OrderingRule::Antistandard, (-x).exp()),
                (OrderingRule::Normal, n.exp()),
                (OrderingRule::Antinormal, (-n).exp()),
                (OrderingRule::Symmetric, x.cosh()),
                (OrderingRule::BornJordan, x.sinh() / x),
            ];
            for (rule, want) in cases {
                assert!((rule.omega_table(&z) - want).norm() < 1e-13, "{rule}");
            }
        }
    }

    #[test]
    fn zero_sets() {
        assert!(OrderingRule::Symmetric.has_zeros() && OrderingRule::BornJordan.has_zeros());
        let y = std::f64::consts::PI; // cos(y/2) = 0 at q p = π
        let z = PhasePoint::one(1.0, y);
        assert!(OrderingRule::Symmetric.omega_table(&z).norm() < 1e-15);
        let z = PhasePoint::one(2.0, y);
        assert!(OrderingRule::BornJordan.omega_table(&z).norm() < 1e-15);
    }

    #[test]
    fn names_round_trip() {
        for r in OrderingRule::ALL {
            assert_eq!(r.name().parse::<OrderingRule>().unwrap(), r);
            assert_eq!(OrderingRule::from_tag(r.tag()), Some(r));
        }
        assert!("wick".parse::<OrderingRule>().is_err());
    }
}
