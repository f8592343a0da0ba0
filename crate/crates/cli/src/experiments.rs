//! The experiments a run can execute. Each one composes library operations
//! and returns its files; all numbers are written with 17 significant digits.

use num_complex::Complex64;
use omega_core::coherent::*;
use omega_core::container::{encode_matrix, encode_symbol, symbol_csv};
use omega_core::evolution::*;
use omega_core::linalg::{inner, vec_norm, CMatrix};
use omega_core::omega::{
    convert_polynomial, convert_symbol, omega_product_report, polynomial_product, sample_polynomial, ConvertOptions, ProductMethod,
};
use omega_core::ordering::OrderingRule;
use omega_core::phase_grid::{gaussian_symbol, PhaseGrid, PhasePoint, Symbol};
use omega_core::poly::MPoly;
use omega_core::quantizer::*;
use omega_core::scalar::c;
use omega_core::{fock, OmegaError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Experiment, Plan};
use crate::error::{CliError, Result};
use crate::{Artifact, RunOutput};

fn e(x: f64) -> String {
    format!("{x:.16e}")
}

/// File-name suffix distinguishing the ℏ values of a multi-ℏ run.
fn suffix(i: usize, n: usize) -> String {
    if n == 1 {
        String::new()
    } else {
        format!("_hbar{i}")
    }
}

fn core(field: &'static str) -> impl Fn(OmegaError) -> CliError {
    move |err| CliError::from_core(field, err)
}

fn grid_for(plan: &Plan, hbar: f64) -> Result<PhaseGrid<f64>> {
    let g = &plan.config.grid;
    PhaseGrid::square(g.n, g.half_width * hbar.sqrt(), hbar).map_err(core("grid"))
}

fn setup_for(plan: &Plan, hbar: f64) -> Result<EvolutionSetup<f64>> {
    let mut s = EvolutionSetup::new(hbar).map_err(core("hbar"))?;
    s.levels = plan.config.grid.levels;
    s.low_levels = s.low_levels.min(s.levels);
    Ok(s)
}

pub fn execute(plan: &Plan, timestamp: u64) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    out.line(format!("experiment: {}", plan.config.experiment.name()));
    match plan.config.experiment {
        Experiment::OrderingCheck => ordering_check(plan, &mut out)?,
        Experiment::StarProduct => star_product(plan, timestamp, &mut out)?,
        Experiment::Quantize => quantize(plan, timestamp, &mut out)?,
        Experiment::Evolve => evolve(plan, timestamp, &mut out)?,
        Experiment::Converge => converge(plan, &mut out)?,
        Experiment::DftCompare => dft_compare(plan, &mut out)?,
        Experiment::CoherentPath => coherent_path(plan, &mut out)?,
        Experiment::TraceCheck => trace_check(plan, &mut out)?,
    }
    Ok(out)
}

/// Ordering table against the Ω-function calculus: each monomial quantized
/// through its table row, and through its exact conversion to a reference
/// rule (normal, or Weyl for the normal rule itself).
fn ordering_check(plan: &Plan, out: &mut RunOutput) -> Result<()> {
    let levels = plan.config.grid.levels;
    let max_degree = plan.config.checks.max_degree;
    let tol = plan.config.checks.ordering_tolerance;
    let basis = Basis::fock(levels);
    if levels <= max_degree as usize {
        return Err(CliError::validation("grid.levels", "must exceed checks.max_degree"));
    }
    let mut csv = String::from("rule,n,m,hbar,max_interior_error\n");
    let mut worst = 0.0f64;
    for &hbar in &plan.config.hbar {
        for rule in OrderingRule::ALL {
            let reference = if rule == OrderingRule::Normal { OrderingRule::Weyl } else { OrderingRule::Normal };
            let mut rule_worst = 0.0f64;
            for deg in 0..=max_degree {
                for n in 0..=deg {
                    let m = deg - n;
                    let got = quantize_monomial(MonomialOp::Qp { n, m }, rule, &basis, hbar).map_err(core("checks.max_degree"))?;
                    let mono = MPoly::monomial(2, vec![n, m], c(1.0, 0.0));
                    let converted = convert_polynomial(&mono, 1, rule, reference, hbar);
                    let want = quantize_polynomial(&converted, reference, &basis, hbar).map_err(core("checks.max_degree"))?;
                    let k = levels - deg as usize;
                    let scale = want.interior(k).frobenius_norm().max(1.0);
                    let err = (&got.interior(k) - &want.interior(k)).frobenius_norm() / scale;
                    rule_worst = rule_worst.max(err);
                    csv.push_str(&format!("{},{n},{m},{},{}\n", rule.name(), e(hbar), e(err)));
                }
            }
            out.line(format!("hbar={} rule={}: max interior error {}", e(hbar), rule.name(), e(rule_worst)));
            worst = worst.max(rule_worst);
        }
    }
    out.artifacts.push(Artifact::text("ordering_check.csv", csv));
    if !(worst < tol) {
        out.violate("ordering-table", format!("max interior error {} exceeds {}", e(worst), e(tol)));
    }
    Ok(())
}

/// Share of the grid where windowed bare monomials are compared.
const BARE_INTERIOR: f64 = 0.4;

/// Window for bare monomials: edges 3.5 cells wide so their spectrum is
/// resolved, six edge widths inside the boundary and four outside the
/// compared region. Returns `(inner, edge)` as fractions of `L`.
fn bare_window(grid: &PhaseGrid<f64>) -> Result<(f64, f64)> {
    let edge = 3.5 * grid.dq() / grid.l_q();
    let inner = 1.0 - 6.0 * edge;
    if inner - BARE_INTERIOR < 4.0 * edge {
        return Err(CliError::validation("grid.n", "bare monomials need at least 120 points per axis"));
    }
    Ok((inner, edge))
}

fn monomial_symbol(grid: &PhaseGrid<f64>, rule: OrderingRule, [n, m]: [u32; 2], localized: bool) -> Result<Symbol<f64>> {
    if localized {
        let h = grid.hbar();
        Ok(Symbol::from_fn_1d(grid, rule, |q: f64, p: f64| {
            c(q.powi(n as i32) * p.powi(m as i32) * (-(q * q + p * p) / (2.0 * h)).exp(), 0.0)
        }))
    } else {
        let (inner, edge) = bare_window(grid)?;
        let mono = MPoly::monomial(2, vec![n, m], c(1.0, 0.0));
        Ok(sample_polynomial(&mono, grid, rule).windowed(inner, edge))
    }
}

/// Ω-product of two monomials. Localized inputs are checked against the
/// Fock-matrix oracle (quantize, multiply, dequantize); windowed bare
/// monomials against the exact polynomial product on the inner 40%.
fn star_product(plan: &Plan, timestamp: u64, out: &mut RunOutput) -> Result<()> {
    let st = &plan.config.star;
    let rule = plan.rule;
    let method = if plan.asymptotic {
        ProductMethod::Asymptotic { order: st.order, tolerance: st.tolerance }
    } else {
        ProductMethod::Kernel
    };
    let nh = plan.config.hbar.len();
    for (i, &hbar) in plan.config.hbar.iter().enumerate() {
        let grid = grid_for(plan, hbar)?;
        let f1 = monomial_symbol(&grid, rule, st.left, st.localized)?;
        let f2 = monomial_symbol(&grid, rule, st.right, st.localized)?;
        let report = omega_product_report(&f1, &f2, rule, method, &ConvertOptions::default()).map_err(core("star"))?;
        let (error, oracle) = if st.localized {
            let basis = Basis::fock(plan.config.grid.levels);
            let op = |f: &Symbol<f64>| -> Result<CMatrix<f64>> {
                let w = convert_symbol(f, rule, OrderingRule::Weyl).map_err(core("rule"))?;
                Ok(quantize_symbol(&w, &basis).map_err(core("grid.levels"))?.matrix)
            };
            let prod = OperatorMatrix::new(basis, op(&f1)?.matmul(&op(&f2)?), hbar).map_err(core("grid.levels"))?;
            let want = dequantize(&prod, rule, &grid).map_err(core("rule"))?;
            (report.symbol.interior_relative_error(&want, 0.5).map_err(core("grid"))?, "fock-matrix")
        } else {
            let a = MPoly::monomial(2, st.left.to_vec(), c(1.0, 0.0));
            let b = MPoly::monomial(2, st.right.to_vec(), c(1.0, 0.0));
            let want = sample_polynomial(&polynomial_product(&a, &b, rule, 1, hbar), &grid, rule);
            (report.symbol.interior_relative_error(&want, BARE_INTERIOR).map_err(core("grid"))?, "polynomial")
        };
        let s = suffix(i, nh);
        out.artifacts.push(Artifact::binary(format!("star_product{s}.omgc"), encode_symbol(&report.symbol, timestamp)));
        out.artifacts.push(Artifact::text(format!("star_product{s}.csv"), symbol_csv(&report.symbol)));
        let mut line = format!(
            "hbar={} rule={} q^{}p^{} * q^{}p^{}: {oracle} oracle interior relative error {}, excluded fraction {}",
            e(hbar),
            rule.name(),
            st.left[0],
            st.left[1],
            st.right[0],
            st.right[1],
            e(error),
            e(report.excluded_fraction)
        );
        if let Some(r) = report.remainder_estimate {
            line.push_str(&format!(", remainder estimate {}", e(r)));
        }
        out.line(line);
        if !(error < st.tolerance) {
            out.violate("star-product-oracle", format!("hbar={}: error {} exceeds {}", e(hbar), e(error), e(st.tolerance)));
        }
    }
    Ok(())
}

/// Fock matrix of the Hamiltonian at `t0` in the configured rule, with the
/// spectra of its Hermitian and anti-Hermitian parts on the lower half of
/// the levels (the upper half feels the truncation).
fn quantize(plan: &Plan, timestamp: u64, out: &mut RunOutput) -> Result<()> {
    let levels = plan.config.grid.levels;
    let t0 = plan.config.evolution.t0;
    let nh = plan.config.hbar.len();
    let mut csv = String::from("hbar,k,hermitian_part,anti_hermitian_part\n");
    for (i, &hbar) in plan.config.hbar.iter().enumerate() {
        let a = plan.hamiltonian.operator_at(t0, plan.rule, levels, hbar).map_err(core("hamiltonian"))?;
        let adj = a.matrix.adjoint();
        let herm = (&a.matrix + &adj).scale_real(0.5);
        let anti = (&a.matrix - &adj).scale(c(0.0, -0.5));
        let (eh, _) = herm.hermitian_eigen();
        let (ea, _) = anti.hermitian_eigen();
        let mut eh = eh;
        let mut ea = ea;
        eh.sort_by(f64::total_cmp);
        ea.sort_by(f64::total_cmp);
        for k in 0..levels / 2 {
            csv.push_str(&format!("{},{k},{},{}\n", e(hbar), e(eh[k]), e(ea[k])));
        }
        out.artifacts.push(Artifact::binary(format!("operator{}.omgc", suffix(i, nh)), encode_matrix(&a, timestamp)));
        out.line(format!(
            "hbar={} rule={} levels={levels}: lowest hermitian-part eigenvalues {}, {}",
            e(hbar),
            plan.rule.name(),
            e(eh[0]),
            e(eh[1.min(levels - 1)])
        ));
    }
    out.artifacts.push(Artifact::text("spectrum.csv", csv));
    Ok(())
}

/// Evolve a coherent state with the configured scheme on the finest mesh,
/// tracking norm and phase-space centroid; the final state is compared
/// with the reference propagator.
fn evolve(plan: &Plan, timestamp: u64, out: &mut RunOutput) -> Result<()> {
    let ev = &plan.config.evolution;
    let finest = *ev.meshes.last().expect("validated non-empty");
    let nh = plan.config.hbar.len();
    let mut csv = String::from("hbar,t,norm,q_mean,p_mean\n");
    for (i, &hbar) in plan.config.hbar.iter().enumerate() {
        let setup = setup_for(plan, hbar)?;
        let part = Partition::with_mesh(ev.t0, ev.t1, finest).map_err(core("evolution.meshes"))?;
        let psi0 = fock::coherent_coefficients(c(ev.initial_alpha[0], ev.initial_alpha[1]), setup.levels);
        let states = evolve_state(&plan.hamiltonian, &part, &psi0, plan.scheme, &setup).map_err(core("evolution"))?;
        let (q, p) = canonical_pair(&setup.basis(), hbar);
        for (j, psi) in states.iter().enumerate() {
            let n2 = vec_norm(psi).powi(2);
            let qm = inner(psi, &q.matvec(psi)).re / n2;
            let pm = inner(psi, &p.matvec(psi)).re / n2;
            csv.push_str(&format!("{},{},{},{},{}\n", e(hbar), e(part.knots()[j]), e(n2.sqrt()), e(qm), e(pm)));
        }
        let u = product_integral(&plan.hamiltonian, &part, plan.scheme, &setup).map_err(core("evolution"))?;
        let u_ref = reference_propagator(&plan.hamiltonian, ev.t0, ev.t1, plan.scheme.rule(), plan.reference, finest, &setup)
            .map_err(core("evolution.reference"))?;
        let exact = u_ref.matvec(&psi0);
        let last = states.last().expect("initial state included");
        let diff: Vec<Complex64> = last.iter().zip(&exact).map(|(a, b)| a - b).collect();
        let err = vec_norm(&diff) / vec_norm(&exact);
        out.artifacts.push(Artifact::binary(format!("propagator{}.omgc", suffix(i, nh)), encode_matrix(&u, timestamp)));
        out.line(format!(
            "hbar={} scheme={} mesh={} steps={}: final norm {}, relative state error {}",
            e(hbar),
            plan.scheme.name(),
            e(part.mesh()),
            part.steps(),
            e(vec_norm(last)),
            e(err)
        ));
    }
    out.artifacts.push(Artifact::text("evolve.csv", csv));
    Ok(())
}

/// Error against the reference on every mesh, with a fitted order per ℏ.
fn converge(plan: &Plan, out: &mut RunOutput) -> Result<()> {
    let ev = &plan.config.evolution;
    let mut csv = format!("{}\n", ConvergenceReport::CSV_HEADER);
    let mut fits = String::from("hbar,scheme,rule,norm,fitted_order,residual,monotone\n");
    for &hbar in &plan.config.hbar {
        let setup = setup_for(plan, hbar)?;
        let r = if plan.symbol_norm {
            symbol_convergence_study(&plan.hamiltonian, plan.rule, ev.t0, ev.t1, &ev.meshes, plan.reference, ev.battery_seed, &setup)
        } else {
            operator_convergence_study(&plan.hamiltonian, plan.scheme, ev.t0, ev.t1, &ev.meshes, plan.reference, &setup)
        }
        .map_err(core("evolution"))?;
        csv.push_str(&r.csv_rows());
        let opt = |x: Option<f64>| x.map(e).unwrap_or_else(|| "nan".into());
        fits.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e(hbar),
            r.scheme,
            r.rule.name(),
            r.norm_kind.name(),
            opt(r.fitted_order),
            opt(r.residual),
            r.monotone()
        ));
        out.line(format!(
            "hbar={} scheme={} rule={}: fitted order {}, errors monotone: {}",
            e(hbar),
            r.scheme,
            r.rule.name(),
            opt(r.fitted_order),
            r.monotone()
        ));
    }
    out.artifacts.push(Artifact::text("converge.csv", csv));
    out.artifacts.push(Artifact::text("fits.csv", fits));
    Ok(())
}

/// Short-time resolvent and exponential symbols against the exact step.
fn dft_compare(plan: &Plan, out: &mut RunOutput) -> Result<()> {
    let ev = &plan.config.evolution;
    let mut csv = String::from(
        "hbar,dt,rule,resolvent_error,exponential_error,resolvent_coefficient,exponential_coefficient,resolvent_sup,exponential_sup\n",
    );
    for &hbar in &plan.config.hbar {
        let setup = setup_for(plan, hbar)?;
        for &dt in &ev.meshes {
            let r = dft_ansatz_compare(&plan.hamiltonian, ev.t0, dt, plan.rule, &setup).map_err(core("evolution.meshes"))?;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e(hbar),
                e(r.dt),
                r.rule.name(),
                e(r.resolvent_error),
                e(r.exponential_error),
                e(r.resolvent_coefficient),
                e(r.exponential_coefficient),
                e(r.resolvent_sup),
                e(r.exponential_sup)
            ));
            out.line(format!(
                "hbar={} dt={}: resolvent error {}, exponential error {}",
                e(hbar),
                e(dt),
                e(r.resolvent_error),
                e(r.exponential_error)
            ));
        }
    }
    out.artifacts.push(Artifact::text("dft_compare.csv", csv));
    Ok(())
}

/// Slice-chain values of the normal symbol for each slice count and probe,
/// the exact normal symbol at the same probes, and the Weyl↔Wick exponent
/// cross-check.
fn coherent_path(plan: &Plan, out: &mut RunOutput) -> Result<()> {
    let ev = &plan.config.evolution;
    let co = &plan.config.coherent;
    let nh = plan.config.hbar.len();
    for (i, &hbar) in plan.config.hbar.iter().enumerate() {
        let setup = setup_for(plan, hbar)?;
        let probes: Vec<(Complex64, Complex64)> = co.probes.iter().map(|p| (c(p[0], p[1]), c(p[2], p[3]))).collect();
        let mut records = Vec::new();
        for &n in &co.slices {
            let part = Partition::uniform(ev.t0, ev.t1, n).map_err(core("coherent.slices"))?;
            for &(zp, zm) in &probes {
                let v = coherent_path_integral(&plan.hamiltonian, &part, zp, zm, plan.method, co.tolerance, &setup)
                    .map_err(core("coherent"))?;
                records.push(CoherentPathRecord {
                    slices: n,
                    z_plus: zp,
                    z_minus: zm,
                    value: v.value,
                    error_estimate: v.error_estimate,
                });
            }
        }
        let mut reference = String::from("z_plus_re,z_plus_im,z_minus_re,z_minus_im,value_re,value_im\n");
        let mut worst = Vec::new();
        for &(zp, zm) in &probes {
            let u = exact_normal_symbol(&plan.hamiltonian, ev.t0, ev.t1, zp, zm, &setup).map_err(core("coherent.probes"))?;
            reference.push_str(&format!("{},{},{},{},{},{}\n", e(zp.re), e(zp.im), e(zm.re), e(zm.im), e(u.re), e(u.im)));
            for r in records.iter().filter(|r| r.z_plus == zp && r.z_minus == zm) {
                worst.push((r.slices, (r.value - u).norm()));
            }
        }
        let s = suffix(i, nh);
        out.artifacts.push(Artifact::text(format!("coherent_path{s}.csv"), coherent_path_csv(&records, plan.convention)));
        out.artifacts.push(Artifact::text(format!("coherent_reference{s}.csv"), reference));
        for &n in &co.slices {
            let err = worst.iter().filter(|w| w.0 == n).map(|w| w.1).fold(0.0, f64::max);
            out.line(format!("hbar={} N={n}: max distance to the exact normal symbol {}", e(hbar), e(err)));
        }
        let checks = weyl_wick_cross_check(hbar, setup.levels).map_err(core("grid.levels"))?;
        for chk in &checks {
            let chosen = if chk.exponent == plan.heat { " (configured)" } else { "" };
            out.line(format!(
                "hbar={} weyl-wick exponent {}{chosen}: matrix-oracle error {}, passes: {}",
                e(hbar),
                chk.exponent.name(),
                e(chk.max_error),
                chk.passes
            ));
        }
        if checks.iter().any(|chk| chk.exponent == plan.heat && !chk.passes) {
            out.violate(
                "weyl-wick-exponent",
                format!("the configured exponent {} fails the matrix-oracle cross-check", plan.heat.name()),
            );
        }
    }
    Ok(())
}

/// Sum of three Gaussian bumps with seeded centres, widths and amplitudes.
fn random_symbol(grid: &PhaseGrid<f64>, rng: &mut ChaCha8Rng, real: bool) -> Symbol<f64> {
    let s = grid.hbar().sqrt();
    let mut f = Symbol::zeros(grid, OrderingRule::Weyl);
    for _ in 0..3 {
        let z = PhasePoint::one(rng.gen_range(-2.0..2.0) * s, rng.gen_range(-2.0..2.0) * s);
        let w = rng.gen_range(0.6..1.2) * s;
        let a = if real {
            c(rng.gen_range(-1.0..1.0), 0.0)
        } else {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        };
        f = f.add(&gaussian_symbol(grid, &z, w, OrderingRule::Weyl).scale(a)).expect("same grid");
    }
    f
}

/// Trace formula `Tr(f̂ ρ̂) = ⟨f, ρ⟩_Ω` against the matrix trace.
fn trace_check(plan: &Plan, out: &mut RunOutput) -> Result<()> {
    let ch = &plan.config.checks;
    let basis = Basis::fock(plan.config.grid.levels);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.config.seed);
    let mut csv = String::from("hbar,pair,trace_re,trace_im,pairing_re,pairing_im,relative_error\n");
    let mut worst = 0.0f64;
    for &hbar in &plan.config.hbar {
        let grid = grid_for(plan, hbar)?;
        let mut hbar_worst = 0.0f64;
        for k in 0..ch.pairs {
            let f = random_symbol(&grid, &mut rng, false);
            let rho = random_symbol(&grid, &mut rng, true);
            let fm = quantize_symbol(&f, &basis).map_err(core("grid"))?.matrix;
            let rm = quantize_symbol(&rho, &basis).map_err(core("grid"))?.matrix;
            let tr = fm.matmul(&rm).trace();
            let fo = convert_symbol(&f, OrderingRule::Weyl, plan.rule).map_err(core("rule"))?;
            let ro = convert_symbol(&rho, OrderingRule::Weyl, plan.rule).map_err(core("rule"))?;
            let v = trace_pairing(&fo, &ro, plan.rule).map_err(core("rule"))?;
            let err = (v - tr).norm() / tr.norm();
            hbar_worst = hbar_worst.max(err);
            csv.push_str(&format!("{},{k},{},{},{},{},{}\n", e(hbar), e(tr.re), e(tr.im), e(v.re), e(v.im), e(err)));
        }
        out.line(format!("hbar={} rule={}: {} pairs, max relative error {}", e(hbar), plan.rule.name(), ch.pairs, e(hbar_worst)));
        worst = worst.max(hbar_worst);
    }
    out.artifacts.push(Artifact::text("trace_check.csv", csv));
    if !(worst < ch.trace_tolerance) {
        out.violate("trace-formula", format!("max relative error {} exceeds {}", e(worst), e(ch.trace_tolerance)));
    }
    Ok(())
}
