use num_complex::Complex64;
use omega_core::evolution::*;
use omega_core::fock;
use omega_core::linalg::{vec_norm, CMatrix};
use omega_core::ordering::OrderingRule;
use omega_core::phase_grid::PhaseGrid;
use omega_core::poly::MPoly;
use omega_core::quantizer::{Basis, OperatorMatrix};
use omega_core::scalar::c;
use omega_core::OmegaError;

fn oscillator_levels(n: usize, hbar: f64) -> Vec<f64> {
    (0..n).map(|k| hbar * (k as f64 + 0.5)).collect()
}

fn distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn partition_mesh_is_recomputed() {
    let p = Partition::<f64>::new(vec![0.0, 0.1, 0.35, 0.4, 1.0]).unwrap();
    assert_eq!(p.steps(), 4);
    assert!((p.mesh() - 0.6).abs() < 1e-15);
    assert!(!p.is_uniform());
    let u = Partition::<f64>::uniform(0.0, 1.0, 8).unwrap();
    assert!(u.is_uniform());
    assert_eq!(u.t_end(), 1.0);
    assert!((u.mesh() - 0.125).abs() < 1e-15);
    assert_eq!(Partition::with_mesh(0.0, 1.0, 1.0 / 128.0).unwrap().steps(), 128);
    assert_eq!(Partition::with_mesh(0.0, 1.0, 0.3).unwrap().steps(), 4);
    assert!(Partition::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    assert!(Partition::new(vec![0.0]).is_err());
    assert!(Partition::<f64>::uniform(0.0, 1.0, 0).is_err());
}

#[test]
fn presets_are_listed_and_round_trip() {
    assert_eq!(Preset::ALL.len(), 5);
    for p in Preset::ALL {
        assert_eq!(Preset::from_name(p.name()), Some(p));
        let h = p.hamiltonian::<f64>();
        assert_eq!(h.name, p.name());
        assert_eq!(h.time_dependent(), p == Preset::TimeRamp);
    }
    assert_eq!(Preset::from_name("anharmonic"), None);
    // i·f = 1 + (q² + p²)/2 for the shifted-dissipative preset.
    let f = Preset::ShiftedDissipative.hamiltonian::<f64>().polynomial_at(0.0);
    let i_f = f.scale(c(0.0, 1.0));
    assert!((i_f.coeff(&[0, 0]) - c(1.0, 0.0)).norm() < 1e-15);
    assert!((i_f.coeff(&[2, 0]) - c(0.5, 0.0)).norm() < 1e-15);
    assert!((i_f.coeff(&[0, 2]) - c(0.5, 0.0)).norm() < 1e-15);
    // Time ramp at t = 1 is twice the oscillator.
    let r = Preset::TimeRamp.hamiltonian::<f64>().polynomial_at(1.0);
    assert!((r.coeff(&[2, 0]) - c(1.0, 0.0)).norm() < 1e-15);
}

fn aptness_grid() -> PhaseGrid<f64> {
    PhaseGrid::square(64, 8.0, 1.0).unwrap()
}

#[test]
fn aptness_of_dissipative_symbols() {
    let opts = AptnessOptions::default();
    // i f = (q² + p²)/2: Re(if) ≥ 0, passes with δ = 0.
    let f = harmonic::<f64>().scale(c(0.0, -1.0));
    let h = Hamiltonian::new("damped", f).unwrap();
    let r = &check_aptness(&h, &aptness_grid(), &[1.0], &opts)[0];
    assert!(r.min_re_if.abs() < 1e-14);
    assert!(r.quasi_dissipative);

    let h = Preset::ShiftedDissipative.hamiltonian::<f64>();
    let reports = check_aptness(&h, &aptness_grid(), &[1.0, 0.1], &opts);
    for r in &reports {
        assert!((r.min_re_if - 1.0).abs() < 1e-14, "{}", r.min_re_if);
        assert_eq!(r.delta, 1.0);
        assert!(r.apt(), "{r:?}");
    }
}

#[test]
fn zero_symbol_fails_growth_condition() {
    let r = &check_aptness(&Hamiltonian::<f64>::zero(), &aptness_grid(), &[1.0], &AptnessOptions::default())[0];
    assert!(!r.positive_order);
    assert!(!r.apt());
}

#[test]
fn quartic_dissipative_symbol_is_apt() {
    // i f = q⁴ + p⁴ + 1.
    let q = MPoly::<f64>::var(2, 0);
    let p = MPoly::<f64>::var(2, 1);
    let g = &(&q.pow(4) + &p.pow(4)) + &MPoly::one(2);
    let h = Hamiltonian::new("q4p4", g.scale(c(0.0, -1.0))).unwrap();
    let r = &check_aptness(&h, &aptness_grid(), &[0.1], &AptnessOptions::default())[0];
    assert!((r.min_re_if - 1.0).abs() < 1e-12);
    assert_eq!(r.growth_order, 4);
    assert!(r.apt(), "{r:?}");
    // Analytic bound on the ratio: |∂^α f|(1+|z|)^{|α|} / (q⁴+p⁴+1) at the
    // outer shell is at most 12(1+R)²R²/(R⁴/2+1), R = 0.6·8.
    let big_r = 4.8f64;
    let bound = 12.0 * (1.0 + big_r).powi(2) * big_r.powi(2) / (big_r.powi(4) / 2.0 + 1.0);
    assert!(r.hypoelliptic_ratio <= bound * 1.5, "{} vs {bound}", r.hypoelliptic_ratio);
}

#[test]
fn preset_aptness_expectations() {
    let opts = AptnessOptions::default();
    let check = |p: Preset, hbar: f64| check_aptness(&p.hamiltonian::<f64>(), &aptness_grid(), &[hbar], &opts)[0].clone();
    let free = check(Preset::Free, 1.0);
    assert!(free.quasi_dissipative && !free.hypoelliptic, "{free:?}");
    for p in [Preset::Oscillator, Preset::Quartic, Preset::TimeRamp] {
        let r = check(p, 0.1);
        assert!(r.apt(), "{p:?}: {r:?}");
    }
    let ramp = check(Preset::TimeRamp, 1.0);
    assert!(ramp.continuity_modulus > 0.0);
    assert!((ramp.continuity_modulus_half / ramp.continuity_modulus - 0.5).abs() < 1e-9);
}

fn oscillator_operator(levels: usize, hbar: f64) -> OperatorMatrix<f64> {
    Preset::Oscillator
        .hamiltonian::<f64>()
        .operator_at(0.0, OrderingRule::Weyl, levels, hbar)
        .unwrap()
}

fn generator_of(f: &OperatorMatrix<f64>) -> OperatorMatrix<f64> {
    OperatorMatrix::new(Basis::fock(f.dim()), generator(f), f.hbar).unwrap()
}

#[test]
fn zero_generator_step_is_identity() {
    let a = OperatorMatrix::new(Basis::fock(16), CMatrix::zeros(16, 16), 1.0).unwrap();
    let psi: Vec<Complex64> = (0..16).map(|k| c(k as f64, -0.5)).collect();
    let out = backward_euler_step(&a, 0.3, &psi).unwrap();
    assert!(distance(&out, &psi) < 1e-15);
    assert!(matches!(backward_euler_step(&a, 0.0, &psi), Err(OmegaError::InvalidArgument(_))));
}

#[test]
fn backward_step_on_coherent_state_is_second_order_accurate() {
    let (n, hbar) = (48, 1.0);
    let a = generator_of(&oscillator_operator(n, hbar));
    let psi = fock::coherent_coefficients(c(0.8, 0.3), n);
    let levels = oscillator_levels(n, hbar);
    let err = |dt: f64| {
        let exact = diagonal_propagator(&levels, dt, hbar).matvec(&psi);
        let step = backward_euler_step(&a, dt, &psi).unwrap();
        assert!(vec_norm(&step) <= vec_norm(&psi));
        distance(&step, &exact)
    };
    let ratio = err(0.01) / err(0.005);
    assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    // Leading term: (Δt²/2)‖Ĥ²ψ‖/ℏ² for the backward Euler local error.
    let h2: f64 = psi.iter().zip(&levels).map(|(v, e)| v.norm_sqr() * e.powi(4)).sum::<f64>().sqrt();
    assert!((err(0.01) / (0.5 * 1e-4 * h2) - 1.0).abs() < 0.05);
}

#[test]
fn every_scheme_is_identity_for_zero_hamiltonian() {
    let setup = EvolutionSetup::new(1.0).unwrap();
    let p = Partition::uniform(0.0, 1.0, 4).unwrap();
    for scheme in [Scheme::BackwardOperator, Scheme::ForwardOperator, Scheme::BackwardSymbol(OrderingRule::Normal)] {
        let u = product_integral(&Hamiltonian::zero(), &p, scheme, &setup).unwrap();
        assert!((&u.matrix - &CMatrix::identity(64)).max_abs() < 1e-15);
    }
}

#[test]
fn semigroup_consistency() {
    let setup = EvolutionSetup::new(0.5).unwrap();
    let h = Preset::Quartic.hamiltonian::<f64>();
    let h_step = 1.0 / 32.0;
    for scheme in [Scheme::BackwardOperator, Scheme::ForwardOperator] {
        let half = product_integral(&h, &Partition::with_mesh(0.0, 0.5, h_step).unwrap(), scheme, &setup).unwrap();
        let full = product_integral(&h, &Partition::with_mesh(0.0, 1.0, h_step).unwrap(), scheme, &setup).unwrap();
        let sq = half.matrix.matmul(&half.matrix);
        let rel = (&full.matrix - &sq).max_abs() / sq.max_abs();
        assert!(rel < 1e-12, "{scheme:?}: {rel}");
    }
}

#[test]
fn oscillator_converges_to_eigen_propagator() {
    let meshes: Vec<f64> = (3..8).map(|k| 2f64.powi(-k)).collect();
    let h = Preset::Oscillator.hamiltonian::<f64>();
    for hbar in [1.0, 0.1] {
        let setup = EvolutionSetup::new(hbar).unwrap();
        let r = operator_convergence_study(&h, Scheme::BackwardOperator, 0.0, 1.0, &meshes, Reference::Eigen, &setup).unwrap();
        assert!(r.monotone());
        assert!(r.order_within(0.8, 1.2), "{r:?}");
        // Oracle for the low-block error: diagonal phases only.
        let k = setup.low_levels;
        let want: f64 = {
            let p = 8.0;
            let num: f64 = (0..k)
                .map(|j| {
                    let x = (j as f64 + 0.5) / p;
                    (c(1.0, x).inv().powf(p) - c(0.0, -(j as f64 + 0.5)).exp()).norm_sqr()
                })
                .sum();
            (num / k as f64).sqrt()
        };
        assert!((r.errors[0] - want).abs() < 1e-10, "{} vs {want}", r.errors[0]);
    }
}

#[test]
fn eigen_oracle_matches_closed_form_quartic_spectrum() {
    // Op_W(H²) = Ĥ² + ℏ²/4 with Ĥ the oscillator.
    let hbar = 0.1;
    let setup = EvolutionSetup::new(hbar).unwrap();
    let h = Preset::Quartic.hamiltonian::<f64>();
    let u = exact_propagator(&h, 0.0, 1.0, OrderingRule::Weyl, &setup).unwrap();
    let e: Vec<f64> = (0..64)
        .map(|k| hbar * hbar * ((k as f64 + 0.5).powi(2) + 0.25) + 1.0)
        .collect();
    let want = diagonal_propagator(&e, 1.0, hbar);
    assert!((&u - &want).max_abs() < 1e-9);
    // Normal rule: ℏ² a†²a² + 1, eigenvalues ℏ²k(k−1) + 1.
    let u = exact_propagator(&h, 0.0, 1.0, OrderingRule::Normal, &setup).unwrap();
    let e: Vec<f64> = (0..64usize).map(|k| hbar * hbar * (k * k.saturating_sub(1)) as f64 + 1.0).collect();
    assert!((&u - &diagonal_propagator(&e, 1.0, hbar)).max_abs() < 1e-9);
}

#[test]
fn eigen_and_exponential_routes_agree() {
    let setup = EvolutionSetup::new(1.0).unwrap();
    let f = &harmonic::<f64>() + &MPoly::var(2, 0).scale(c(0.3, 0.0));
    let h = Hamiltonian::new("shifted", f.clone()).unwrap();
    let u = exact_propagator(&h, 0.0, 0.7, OrderingRule::Weyl, &setup).unwrap();
    let fh = h.operator_at(0.0, OrderingRule::Weyl, 64, 1.0).unwrap().matrix;
    let v = fh.scale(c(0.0, -0.7)).expm();
    assert!((&u.block(40) - &v.block(40)).max_abs() < 1e-10);
}

#[test]
fn time_ramp_reference_matches_closed_form() {
    // (1+t)H commutes with itself at all times: U = exp(−i(t + t²/2)Ĥ/ℏ).
    let hbar = 1.0;
    let setup = EvolutionSetup::new(hbar).unwrap();
    let h = Preset::TimeRamp.hamiltonian::<f64>();
    let exact = diagonal_propagator(&oscillator_levels(64, hbar), 1.5, hbar);
    let rich = richardson_propagator(&h, 0.0, 1.0, 1.0 / 128.0, OrderingRule::Weyl, &setup).unwrap();
    let ref_err = low_energy_distance(&rich, &exact, setup.low_levels);
    assert!(ref_err < 1e-4, "{ref_err}");

    let meshes: Vec<f64> = (3..8).map(|k| 2f64.powi(-k)).collect();
    let r = operator_convergence_study(&h, Scheme::BackwardOperator, 0.0, 1.0, &meshes, Reference::Auto, &setup).unwrap();
    assert!(r.monotone());
    // Generator reaches 2H, so the coarse meshes are pre-asymptotic; the
    // local order of the two finest meshes is already first order.
    let e = &r.errors;
    let local = (e[3] / e[4]).log2();
    assert!((0.8..=1.2).contains(&local), "{r:?}");
    assert!(ref_err < 0.01 * e[4]);
}

#[test]
fn evolve_state_matches_product_and_keeps_ground_state() {
    let hbar = 1.0;
    let setup = EvolutionSetup::new(hbar).unwrap();
    let h = Preset::Oscillator.hamiltonian::<f64>();
    let mut ground = vec![c(0.0, 0.0); 64];
    ground[0] = c(1.0, 0.0);
    let mut prev_defect = f64::INFINITY;
    for steps in [16, 32, 64] {
        let p = Partition::uniform(0.0, 1.0, steps).unwrap();
        let traj = evolve_state(&h, &p, &ground, Scheme::BackwardOperator, &setup).unwrap();
        assert_eq!(traj.len(), steps + 1);
        let u = product_integral(&h, &p, Scheme::BackwardOperator, &setup).unwrap();
        assert!(distance(traj.last().unwrap(), &u.matrix.matvec(&ground)) < 1e-13);
        for w in traj.windows(2) {
            assert!(vec_norm(&w[1]) <= vec_norm(&w[0]) + 1e-15);
        }
        // |⟨ψ(t)|ψ₀⟩| = (1 + Δt²/4)^{−P/2} ≈ 1 − Δt/8.
        let overlap = traj.last().unwrap()[0].norm();
        let dt = 1.0 / steps as f64;
        let want = (1.0 + dt * dt / 4.0).powf(-(steps as f64) / 2.0);
        assert!((overlap - want).abs() < 1e-12);
        assert!(1.0 - overlap < prev_defect);
        prev_defect = 1.0 - overlap;
    }
}

#[test]
fn dissipative_evolution_decays() {
    let hbar = 1.0;
    let setup = EvolutionSetup::new(hbar).unwrap();
    let h = Preset::ShiftedDissipative.hamiltonian::<f64>();
    let psi0 = fock::coherent_coefficients(c(0.5, -0.2), 64);
    let bound = (-h.delta * 1.0 / hbar).exp();
    let mut errors = Vec::new();
    let meshes = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    // Exact: level k decays like e^{−(1 + k + ½)t}.
    let exact: f64 = psi0
        .iter()
        .enumerate()
        .map(|(k, v)| v.norm_sqr() * (-2.0 * (1.5 + k as f64)).exp())
        .sum::<f64>()
        .sqrt();
    for &m in &meshes {
        let p = Partition::with_mesh(0.0, 1.0, m).unwrap();
        let traj = evolve_state(&h, &p, &psi0, Scheme::BackwardOperator, &setup).unwrap();
        let norm = vec_norm(traj.last().unwrap());
        assert!(norm <= bound + m, "{norm} vs {bound}");
        errors.push((norm - exact).abs());
    }
    let (order, _) = fit_order(&meshes, &errors).unwrap();
    assert!((order - 1.0).abs() < 0.1, "{order}");
}

#[test]
fn unitarity_is_restored_linearly() {
    let setup = EvolutionSetup::new(1.0).unwrap();
    let h = Preset::Oscillator.hamiltonian::<f64>();
    let meshes: Vec<f64> = (3..8).map(|k| 2f64.powi(-k)).collect();
    let defects: Vec<f64> = meshes
        .iter()
        .map(|&m| {
            let p = Partition::with_mesh(0.0, 1.0, m).unwrap();
            unitarity_defect(&product_integral(&h, &p, Scheme::BackwardOperator, &setup).unwrap().matrix, setup.low_levels)
        })
        .collect();
    let (order, _) = fit_order(&meshes, &defects).unwrap();
    assert!((0.8..=1.2).contains(&order), "{order} {defects:?}");
}

#[test]
fn operator_and_symbol_schemes_agree_to_first_order() {
    let setup = EvolutionSetup::new(1.0).unwrap();
    let h = Preset::Oscillator.hamiltonian::<f64>();
    let meshes = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let gaps: Vec<f64> = meshes
        .iter()
        .map(|&m| {
            let p = Partition::with_mesh(0.0, 1.0, m).unwrap();
            let a = product_integral(&h, &p, Scheme::BackwardOperator, &setup).unwrap();
            let b = product_integral(&h, &p, Scheme::BackwardSymbol(OrderingRule::Weyl), &setup).unwrap();
            low_energy_distance(&b.matrix, &a.matrix, setup.low_levels)
        })
        .collect();
    let constants: Vec<f64> = gaps.iter().zip(&meshes).map(|(g, m)| g / m).collect();
    assert!(constants.iter().all(|c| c.is_finite() && *c < 1.0), "{constants:?}");
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn symbol_study_degenerate_inputs() {
    let setup = EvolutionSetup::new(1.0).unwrap();
    let h = Preset::Oscillator.hamiltonian::<f64>();
    let r = symbol_convergence_study(&h, OrderingRule::Weyl, 0.0, 1.0, &[0.125], Reference::Eigen, 7, &setup).unwrap();
    assert_eq!(r.errors.len(), 1);
    assert!(r.fitted_order.is_none());
    assert!(symbol_convergence_study(&h, OrderingRule::Weyl, 0.0, 1.0, &[0.1, 0.2], Reference::Eigen, 7, &setup).is_err());
    let err = symbol_convergence_study(&h, OrderingRule::Symmetric, 0.0, 1.0, &[0.1], Reference::Eigen, 7, &setup);
    assert!(matches!(err, Err(OmegaError::ZeroSetViolation { .. })));
}

#[test]
fn weak_battery_is_reproducible_and_decaying() {
    let a = weak_battery(11, 0.1);
    assert_eq!(a.len(), BATTERY_SIZE);
    assert_eq!(a, weak_battery(11, 0.1));
    assert_ne!(a, weak_battery(12, 0.1));
    let s = 0.1f64.sqrt();
    for phi in &a {
        assert!(phi.q0.abs() <= s && phi.p0.abs() <= s);
        assert!(phi.eval(phi.q0 + 12.0 * s, phi.p0) < 1e-20);
    }
}

#[test]
fn weyl_symbol_study_on_oscillator() {
    let setup = EvolutionSetup::new(1.0).unwrap();
    let h = Preset::Oscillator.hamiltonian::<f64>();
    let meshes: Vec<f64> = (3..8).map(|k| 2f64.powi(-k)).collect();
    let r = symbol_convergence_study(&h, OrderingRule::Weyl, 0.0, 1.0, &meshes, Reference::Eigen, DEFAULT_BATTERY_SEED, &setup).unwrap();
    assert!(r.monotone(), "{r:?}");
    assert!(r.order_within(0.8, 1.2), "{r:?}");
    assert_eq!(r.norm_kind, NormKind::SymbolWeak);
}

#[test]
fn ansatz_comparison() {
    let setup = EvolutionSetup::new(1.0).unwrap();
    let zero = dft_ansatz_compare(&Hamiltonian::zero(), 0.0, 0.01, OrderingRule::Weyl, &setup).unwrap();
    assert!(zero.resolvent_error < 1e-9 && zero.exponential_error < 1e-9, "{zero:?}");

    let h = Preset::Oscillator.hamiltonian::<f64>();
    let a = dft_ansatz_compare(&h, 0.0, 0.02, OrderingRule::Weyl, &setup).unwrap();
    let b = dft_ansatz_compare(&h, 0.0, 0.01, OrderingRule::Weyl, &setup).unwrap();
    let (rr, re) = (a.resolvent_error / b.resolvent_error, a.exponential_error / b.exponential_error);
    assert!((rr - 4.0).abs() < 0.4 && (re - 4.0).abs() < 0.4, "{rr} {re}");

    let setup = EvolutionSetup::new(0.1).unwrap();
    let q = dft_ansatz_compare(&Preset::Quartic.hamiltonian::<f64>(), 0.0, 5e-4, OrderingRule::Normal, &setup).unwrap();
    assert!(q.resolvent_sup <= 1.0 + 1e-12 && q.exponential_sup <= 1.0 + 1e-12);
    assert!(q.resolvent_error.is_finite() && q.exponential_error.is_finite());
}

#[test]
fn convergence_report_csv_and_fit() {
    let meshes = vec![0.5, 0.25, 0.125];
    let errors = vec![0.25, 0.0625, 0.015625];
    let r = ConvergenceReport::new("backward_operator", OrderingRule::Weyl, 0.5, NormKind::OperatorFrobenius, meshes, errors);
    assert!((r.fitted_order.unwrap() - 2.0).abs() < 1e-12);
    assert!(r.residual.unwrap() < 1e-12);
    let csv = r.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mesh,error,scheme,rule,hbar");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1], "5.0000000000000000e-1,2.5000000000000000e-1,backward_operator,weyl,5.0000000000000000e-1");
}

#[test]
fn single_precision_evolution() {
    let setup = EvolutionSetup::<f32>::new(1.0).unwrap();
    let h = Preset::Oscillator.hamiltonian::<f32>();
    let p = Partition::uniform(0.0f32, 1.0, 16).unwrap();
    let u = product_integral(&h, &p, Scheme::BackwardOperator, &setup).unwrap();
    let x = 1.0f64 / 16.0;
    let want = c(1.0, 0.5 * x).inv().powf(16.0);
    let got = u.matrix[(0, 0)];
    assert!((got.re as f64 - want.re).abs() < 1e-5 && (got.im as f64 - want.im).abs() < 1e-5);
}
