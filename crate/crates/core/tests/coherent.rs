use num_complex::Complex;
use omega_core::coherent::*;
use omega_core::evolution::{harmonic, EvolutionSetup, Hamiltonian, Partition, Preset};
use omega_core::linalg::CMatrix;
use omega_core::omega::convert_symbol;
use omega_core::phase_grid::{PhaseGrid, Symbol};
use omega_core::poly::MPoly;
use omega_core::quantizer::{quantize_polynomial, Basis};
use omega_core::{OmegaError, OrderingRule};
use rand::Rng;

mod common;

type C = Complex<f64>;

fn cx(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// 3×3 lattice of phase points as `(z⁺, z⁻)` probes.
fn lattice_probes(step: f64) -> Vec<(Vec<C>, Vec<C>)> {
    let mut out = Vec::new();
    for i in -1..=1 {
        for j in -1..=1 {
            let zm = cx(i as f64 * step, j as f64 * step);
            out.push((vec![zm.conj()], vec![zm]));
        }
    }
    out
}

fn oscillator_resolvent(levels: usize, dt: f64) -> CMatrix<f64> {
    let diag: Vec<C> = (0..levels)
        .map(|k| C::new(1.0, 0.0) / cx(1.0, dt * (k as f64 + 0.5)))
        .collect();
    CMatrix::from_diagonal(&diag)
}

#[test]
fn two_mode_ladder_relations() {
    let space = FockSpace::<f64>::new(2, 6, 0.3).unwrap();
    let interior = space.interior();
    for i in 0..2 {
        for j in 0..2 {
            let a = space.annihilation(i);
            let b = space.creation(j);
            let comm = &a.matmul(&b) - &b.matmul(&a);
            let cross = space.annihilation(i).commutator(&space.annihilation(j));
            for &r in &interior {
                for &s in &interior {
                    let want = if i == j && r == s { 0.3 } else { 0.0 };
                    assert!((comm[(r, s)] - want).norm() < 1e-14);
                    assert!(cross[(r, s)].norm() < 1e-14);
                }
            }
        }
    }
    assert!(FockSpace::<f64>::new(3, 4, 1.0).is_err());
    assert_eq!(space.index(&space.occupation(17)), 17);
}

#[test]
fn coherent_overlaps_and_eigenvalues() {
    let hbar = 0.25;
    let space = FockSpace::new(1, 40, hbar).unwrap();
    for conv in [CoherentConvention::Paper, CoherentConvention::Bargmann] {
        // |v|²/ℏ ≤ N/4 keeps the truncated sum at round-off.
        let scale = match conv {
            CoherentConvention::Paper => 1.0 / hbar,
            CoherentConvention::Bargmann => 1.0,
        };
        let u = CoherentState::new(vec![cx(0.6, -0.3) * scale], conv, hbar);
        let w = CoherentState::new(vec![cx(-0.2, 0.9) * scale], conv, hbar);
        let closed = u.overlap(&w);
        assert!((u.truncated_overlap(&w, &space) - closed).norm() < 1e-10 * closed.norm());
        // Reproducing kernel under γ_ℏ.
        let quad = u.quadrature_overlap(&w, 40).unwrap();
        assert!((quad - closed).norm() < 1e-10 * closed.norm(), "{conv:?} {quad} {closed}");
        // ẑ⁻ e_w = amplitude · e_w on the interior.
        let v = w.coefficients(&space);
        let av = space.annihilation(0).matvec(&v);
        let amp = w.amplitude()[0];
        for k in 0..30 {
            assert!((av[k] - amp * v[k]).norm() < 1e-12 * (1.0 + v[k].norm()));
        }
    }
    // Paper labels: ⟨e_u, e_w⟩ = exp(ℏ ū w).
    let u = CoherentState::new(vec![cx(1.0, 0.5)], CoherentConvention::Paper, 0.5);
    let w = CoherentState::new(vec![cx(-0.5, 1.0)], CoherentConvention::Paper, 0.5);
    let want = (cx(1.0, -0.5) * cx(-0.5, 1.0) * 0.5).exp();
    assert!((u.overlap(&w) - want).norm() < 1e-15);
}

#[test]
fn gaussian_moments_table() {
    let table = gaussian_measure_moments(8, 0.5, 24).unwrap();
    assert_eq!(table.len(), 81);
    let get = |a: usize, b: usize| table.iter().find(|m| m.a == a && m.b == b).unwrap().closed_form;
    assert_eq!(get(0, 0), 1.0);
    assert_eq!(get(1, 1), 2.0);
    assert_eq!(get(2, 2), 8.0);
    assert_eq!(get(8, 8), 40320.0 * 256.0);
    assert_eq!(get(3, 1), 0.0);
    assert!(matches!(
        gaussian_measure_moments(9, 1.0, 24),
        Err(OmegaError::DegreeExceeded { degree: 9, cap: 8 })
    ));
}

#[test]
fn normal_symbols_of_ladder_words() {
    let hbar = 0.4;
    let space = FockSpace::new(1, 48, hbar).unwrap();
    let a = space.annihilation(0);
    let ad = space.creation(0);
    let probes = lattice_probes(0.5);
    // ẑ⁻ẑ⁺ → z⁺z⁻ + ℏ
    let w = wick_symbol_of(&space, &a.matmul(&ad), &probes).unwrap();
    // (ẑ⁺)² ẑ⁻ → (z⁺)² z⁻
    let w2 = wick_symbol_of(&space, &ad.matmul(&ad).matmul(&a), &probes).unwrap();
    for (zp, zm) in &probes {
        let want = zp[0] * zm[0] + hbar;
        assert!((w.eval(zp, zm) - want).norm() < 1e-12);
        assert!((w2.eval(zp, zm) - zp[0] * zp[0] * zm[0]).norm() < 1e-12);
    }
    // Independent arguments (off the real phase plane).
    let (zp, zm) = (cx(0.3, 0.7), cx(-0.4, 0.2));
    assert!((w.eval(&[zp], &[zm]) - (zp * zm + hbar)).norm() < 1e-12);
    // Far outside the truncation.
    let far = vec![(vec![cx(6.0, 0.0)], vec![cx(6.0, 0.0)])];
    assert!(matches!(wick_symbol_of(&space, &a, &far), Err(OmegaError::TruncationDominance { .. })));
}

#[test]
fn normal_symbol_matches_normal_rule_quantization() {
    let hbar = 0.5;
    let levels = 40;
    let f = &(&MPoly::monomial(2, vec![2, 1], cx(0.3, 0.0)) + &MPoly::monomial(2, vec![0, 3], cx(0.0, -0.7)))
        + &MPoly::monomial(2, vec![1, 0], cx(1.1, 0.0));
    let op = quantize_polynomial(&f, OrderingRule::Normal, &Basis::fock(levels), hbar).unwrap();
    let space = FockSpace::new(1, levels, hbar).unwrap();
    let w = WickSymbol::operator(&space, op.matrix).unwrap();
    for &(q, p) in &[(0.0, 0.0), (0.4, -0.3), (-0.8, 0.5), (1.0, 1.0)] {
        let got = w.at_phase(&[q], &[p]);
        let want = f.eval(&[cx(q, 0.0), cx(p, 0.0)]);
        assert!((got - want).norm() < 1e-10, "{q} {p}: {got} vs {want}");
    }
}

#[test]
fn identity_slices_give_one() {
    let hbar = 0.3;
    let ones = vec![WickSymbol::one(1, hbar); 5];
    let probes = lattice_probes(0.4);
    let gh = normal_product_integral(&ones, &probes, NormalMethod::GaussHermite { points: 24 }, Some(1e-6)).unwrap();
    for v in &gh {
        assert!((v.value - 1.0).norm() < 1e-10);
    }
    let mc = normal_product_integral(
        &ones,
        &probes[..3],
        NormalMethod::MonteCarlo {
            samples: 40_000,
            batches: 20,
            seed: 7,
        },
        None,
    )
    .unwrap();
    for v in &mc {
        assert!((v.value - 1.0).norm() < 3.0 * v.error_estimate + 1e-12, "{:?}", v);
    }
}

#[test]
fn polynomial_slices_compose_like_operators() {
    let hbar = 0.7;
    let zm = WickSymbol::polynomial(MPoly::var(2, 1), hbar).unwrap();
    let zp = WickSymbol::polynomial(MPoly::var(2, 0), hbar).unwrap();
    let probes = lattice_probes(0.6);
    // Op(z⁻) Op(z⁺) = ẑ⁻ẑ⁺ → z⁺z⁻ + ℏ; the reversed order stays normal.
    let ab = normal_product_integral(&[zm.clone(), zp.clone()], &probes, NormalMethod::default(), Some(1e-9)).unwrap();
    let ba = normal_product_integral(&[zp, zm], &probes, NormalMethod::default(), Some(1e-9)).unwrap();
    for ((p, m), (x, y)) in probes.iter().zip(ab.iter().zip(&ba)) {
        assert!((x.value - (p[0] * m[0] + hbar)).norm() < 1e-10);
        assert!((y.value - p[0] * m[0]).norm() < 1e-10);
    }
}

#[test]
fn resolvent_chain_matches_fock_product() {
    let hbar = 0.5;
    let levels = 64;
    let space = FockSpace::new(1, levels, hbar).unwrap();
    let r = oscillator_resolvent(levels, 0.1);
    let probes = lattice_probes(0.5);
    let slice = wick_symbol_of(&space, &r, &probes).unwrap();
    let product = wick_symbol_of(&space, &r.pow(4), &probes).unwrap();
    let got = normal_product_integral(&vec![slice.clone(); 4], &probes, NormalMethod::default(), Some(1e-6)).unwrap();
    for ((zp, zm), v) in probes.iter().zip(&got) {
        let want = product.eval(zp, zm);
        assert!((v.value - want).norm() < 1e-5, "{} vs {}", v.value, want);
        assert!(v.error_estimate < 1e-6);
    }
    // Pairwise grouping reproduces the four-fold chain.
    let pair = normal_product_symbol(vec![slice.clone(), slice.clone()], 24).unwrap();
    let grouped = normal_product_integral(&[pair.clone(), pair], &probes, NormalMethod::default(), None).unwrap();
    for (a, b) in grouped.iter().zip(&got) {
        assert!((a.value - b.value).norm() < 1e-10);
    }
    // Monte Carlo agrees within its error bars.
    let mc = normal_product_integral(
        &vec![slice; 4],
        &probes[3..6],
        NormalMethod::MonteCarlo {
            samples: 200_000,
            batches: 40,
            seed: 11,
        },
        None,
    )
    .unwrap();
    for ((zp, zm), v) in probes[3..6].iter().zip(&mc) {
        let want = product.eval(zp, zm);
        assert!((v.value - want).norm() < 4.0 * v.error_estimate, "{} vs {} ± {}", v.value, want, v.error_estimate);
        assert!(v.error_estimate < 0.05);
    }
}

#[test]
fn monte_carlo_is_reproducible_and_checks_variance() {
    let hbar = 0.5;
    let space = FockSpace::new(2, 8, hbar).unwrap();
    // Op(z⁻₁) Op(z⁺₁) on two modes.
    let zm1 = WickSymbol::polynomial(MPoly::var(4, 2), hbar).unwrap();
    let zp1 = WickSymbol::polynomial(MPoly::var(4, 0), hbar).unwrap();
    let probe = vec![(vec![cx(0.2, -0.1), cx(0.0, 0.3)], vec![cx(0.2, 0.1), cx(0.0, -0.3)])];
    let method = NormalMethod::MonteCarlo {
        samples: 20_000,
        batches: 10,
        seed: 3,
    };
    let a = normal_product_integral(&[zm1.clone(), zp1.clone()], &probe, method, None).unwrap();
    let b = normal_product_integral(&[zm1.clone(), zp1.clone()], &probe, method, None).unwrap();
    assert_eq!(a, b);
    let want = probe[0].0[0] * probe[0].1[0] + hbar;
    assert!((a[0].value - want).norm() < 3.0 * a[0].error_estimate);
    assert!(matches!(
        normal_product_integral(&[zm1.clone(), zp1.clone()], &probe, method, Some(1e-12)),
        Err(OmegaError::VarianceTooLarge { .. })
    ));
    assert!(matches!(
        normal_product_integral(&[zm1, zp1], &probe, NormalMethod::default(), None),
        Err(OmegaError::Unsupported(_))
    ));
    assert_eq!(space.dim(), 64);
    assert!((monte_carlo_widening(4) - 1.0 / (1.0 - 0.5f64.sqrt())).abs() < 1e-14);
    assert_eq!(monte_carlo_widening(2), 1.0);
}

#[test]
fn weyl_wick_conversion_on_polynomials() {
    let hbar = 0.3;
    let h = MPoly::monomial(2, vec![1, 1], cx(1.0, 0.0));
    // Verbatim exponent: z⁺z⁻ → z⁺z⁻ + ℏ²/2.
    let f = weyl_wick_convert(&h, WickDirection::WickToWeyl, HeatExponent::PaperHbarSquared, hbar);
    assert!((f.constant_term() - hbar * hbar / 2.0).norm() < 1e-15);
    // ℏ exponent: z⁺z⁻ → z⁺z⁻ − ℏ/2 (the Weyl symbol of ẑ⁺ẑ⁻).
    let g = weyl_wick_convert(&h, WickDirection::WickToWeyl, HeatExponent::Hbar, hbar);
    assert!((g.constant_term() + hbar / 2.0).norm() < 1e-15);
    assert!((g.coeff(&[1, 1]) - 1.0).norm() < 1e-15);
    let one = MPoly::one(2);
    for e in [HeatExponent::PaperHbarSquared, HeatExponent::Hbar] {
        assert_eq!(weyl_wick_convert(&one, WickDirection::WickToWeyl, e, hbar), one);
    }
    // Round trip on a random degree-4 polynomial.
    let mut rng = common::rng(5);
    let mut p = MPoly::zero(2);
    for a in 0..=4u32 {
        for b in 0..=(4 - a) {
            p.add_term(vec![a, b], cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
    }
    for e in [HeatExponent::PaperHbarSquared, HeatExponent::Hbar] {
        let back = weyl_wick_convert(
            &weyl_wick_convert(&p, WickDirection::WickToWeyl, e, hbar),
            WickDirection::WeylToWick,
            e,
            hbar,
        );
        assert!(back.max_coeff_distance(&p) < 1e-12);
    }
}

#[test]
fn matrix_oracle_selects_the_hbar_exponent() {
    for hbar in [1.0, 0.3] {
        let checks = weyl_wick_cross_check(hbar, 30).unwrap();
        let paper = checks.iter().find(|c| c.exponent == HeatExponent::PaperHbarSquared).unwrap();
        let std = checks.iter().find(|c| c.exponent == HeatExponent::Hbar).unwrap();
        assert!(std.passes, "{std:?}");
        assert!(!paper.passes, "{paper:?}");
    }
}

#[test]
fn grid_conversion_matches_ordering_conversion() {
    let hbar = 0.5;
    let grid = PhaseGrid::square(64, 8.0, hbar).unwrap();
    let w = Symbol::from_fn_1d(&grid, OrderingRule::Normal, |q: f64, p: f64| {
        cx((-(q * q + p * p) / 2.0).exp() * (1.0 + 0.3 * q), 0.2 * p * (-(q * q + p * p)).exp())
    });
    let f = weyl_wick_convert_grid(&w, WickDirection::WickToWeyl, HeatExponent::Hbar).unwrap();
    let g = convert_symbol(&w, OrderingRule::Normal, OrderingRule::Weyl).unwrap();
    let diff = f.values().iter().zip(g.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
    let back = weyl_wick_convert_grid(&f, WickDirection::WeylToWick, HeatExponent::Hbar).unwrap();
    let err = back.values().iter().zip(w.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
    assert!(weyl_wick_convert_grid(&w, WickDirection::WeylToWick, HeatExponent::Hbar).is_err());
}

#[test]
fn coherent_path_integral_converges_at_first_order() {
    let hbar = 0.5;
    let setup = EvolutionSetup::new(hbar).unwrap();
    let h = Preset::Oscillator.hamiltonian::<f64>();
    let exact = exact_normal_symbol(&h, 0.0, 1.0, C::new(0.0, 0.0), C::new(0.0, 0.0), &setup).unwrap();
    assert!((exact - cx(0.0, -0.5).exp()).norm() < 1e-12);
    let mut errors = Vec::new();
    for steps in [4usize, 8] {
        let p = Partition::uniform(0.0, 1.0, steps).unwrap();
        let u = coherent_path_integral(&h, &p, C::new(0.0, 0.0), C::new(0.0, 0.0), NormalMethod::default(), Some(1e-6), &setup)
            .unwrap();
        // Only the ground level reaches z = 0: u = (1 + iΔt/2)^{−P}.
        let closed = cx(1.0, 0.5 / steps as f64).powi(-(steps as i32));
        assert!((u.value - closed).norm() < 1e-10);
        errors.push((u.value - exact).norm());
    }
    let ratio = errors[0] / errors[1];
    assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
    // Away from the origin, against the Fock product of the same slices.
    let p = Partition::uniform(0.0, 1.0, 4).unwrap();
    let z = cx(0.3, -0.2);
    let u = coherent_path_integral(&h, &p, z.conj(), z, NormalMethod::default(), Some(1e-6), &setup).unwrap();
    let space = FockSpace::new(1, setup.levels, hbar).unwrap();
    let prod = omega_core::evolution::product_integral(&h, &p, omega_core::evolution::Scheme::BackwardOperator, &setup)
        .unwrap();
    let want = WickSymbol::operator(&space, prod.matrix).unwrap().eval(&[z.conj()], &[z]);
    assert!((u.value - want).norm() < 1e-8);
}

#[test]
fn time_dependent_slices_are_ordered_latest_first() {
    let hbar = 0.5;
    let setup = EvolutionSetup::new(hbar).unwrap();
    let h = Hamiltonian::from_parts(
        "ramp-plus-drive",
        vec![
            (omega_core::evolution::Profile { offset: 1.0, slope: 0.0 }, harmonic()),
            (omega_core::evolution::Profile { offset: 0.0, slope: 1.0 }, MPoly::var(2, 0)),
        ],
    )
    .unwrap();
    let p = Partition::uniform(0.0, 1.0, 3).unwrap();
    let z = cx(0.2, 0.1);
    let u = coherent_path_integral(&h, &p, z.conj(), z, NormalMethod::default(), Some(1e-6), &setup).unwrap();
    let space = FockSpace::new(1, setup.levels, hbar).unwrap();
    let prod = omega_core::evolution::product_integral(&h, &p, omega_core::evolution::Scheme::BackwardOperator, &setup)
        .unwrap();
    let want = WickSymbol::operator(&space, prod.matrix).unwrap().eval(&[z.conj()], &[z]);
    assert!((u.value - want).norm() < 1e-8, "{} vs {}", u.value, want);
}

#[test]
fn csv_layout() {
    let rec = CoherentPathRecord {
        slices: 4,
        z_plus: cx(0.5, -0.25),
        z_minus: cx(0.5, 0.25),
        value: cx(1.0, -0.125),
        error_estimate: 0.0,
    };
    let s = coherent_path_csv(&[rec], CoherentConvention::Paper);
    let lines: Vec<&str> = s.lines().collect();
    assert!(lines[0].starts_with("# coherent_convention=paper"));
    assert_eq!(lines[1], COHERENT_CSV_HEADER);
    assert_eq!(
        lines[2],
        "4,5.0000000000000000e-1,-2.5000000000000000e-1,5.0000000000000000e-1,2.5000000000000000e-1,1.0000000000000000e0,-1.2500000000000000e-1,0.0000000000000000e0"
    );
}

#[test]
fn single_precision_normal_symbols() {
    let space = FockSpace::<f32>::new(1, 20, 0.5).unwrap();
    let a = space.annihilation(0);
    let w = WickSymbol::operator(&space, a.matmul(&space.creation(0))).unwrap();
    let z = Complex::<f32>::new(0.3, 0.2);
    let got = w.eval(&[z.conj()], &[z]);
    assert!((got - (z.norm_sqr() + 0.5)).norm() < 1e-5);
}
