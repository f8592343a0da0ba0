//! Run configuration: a TOML file with a few top-level keys and one
//! section per concern. Every section is optional; defaults describe a
//! small desk-scale run.

use std::path::PathBuf;

use omega_core::coherent::{CoherentConvention, HeatExponent, NormalMethod};
use omega_core::evolution::{Preset, Reference, Scheme, DEFAULT_BATTERY_SEED};
use omega_core::ordering::OrderingRule;
use omega_core::poly::MPoly;
use omega_core::quantizer::DEFAULT_DEGREE_CAP;
use omega_core::scalar::c;
use omega_core::Hamiltonian;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    OrderingCheck,
    StarProduct,
    Quantize,
    Evolve,
    Converge,
    DftCompare,
    CoherentPath,
    TraceCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::OrderingCheck => "ordering-check",
            Experiment::StarProduct => "star-product",
            Experiment::Quantize => "quantize",
            Experiment::Evolve => "evolve",
            Experiment::Converge => "converge",
            Experiment::DftCompare => "dft-compare",
            Experiment::CoherentPath => "coherent-path",
            Experiment::TraceCheck => "trace-check",
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hbar")]
    pub hbar: Vec<f64>,
    #[serde(default = "default_rule")]
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub hamiltonian: HamiltonianSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub evolution: EvolutionSpec,
    #[serde(default)]
    pub coherent: CoherentSpec,
    #[serde(default)]
    pub star: StarSpec,
    #[serde(default)]
    pub checks: CheckSpec,
}

fn default_hbar() -> Vec<f64> {
    vec![1.0]
}

fn default_rule() -> String {
    "weyl".into()
}

/// Either a named preset or a list of `[n, m, re, im]` terms, one per
/// monomial `(re + i·im) qⁿ pᵐ` of a time-independent Weyl symbol.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<[f64; 4]>>,
    #[serde(default)]
    pub delta: f64,
}

impl Default for HamiltonianSpec {
    fn default() -> Self {
        Self {
            preset: Some("oscillator".into()),
            terms: None,
            delta: 0.0,
        }
    }
}

/// Phase-space lattice for the symbol experiments. `half_width` is in
/// units of `√ℏ`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_grid_n")]
    pub n: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_grid_n() -> usize {
    128
}

fn default_half_width() -> f64 {
    16.0
}

fn default_levels() -> usize {
    64
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n: default_grid_n(),
            half_width: default_half_width(),
            levels: default_levels(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "one")]
    pub t1: f64,
    #[serde(default = "default_meshes")]
    pub meshes: Vec<f64>,
    /// `backward-operator`, `backward-symbol` (read in `rule`) or `forward-operator`.
    #[serde(default = "default_scheme")]
    pub scheme: String,
    /// `auto`, `eigen` or `richardson`.
    #[serde(default = "default_reference")]
    pub reference: String,
    /// `operator` (low-block Frobenius) or `symbol` (weak battery distance).
    #[serde(default = "default_norm")]
    pub norm: String,
    #[serde(default = "default_battery_seed")]
    pub battery_seed: u64,
    /// Coherent amplitude `[re, im]` of the initial state for `evolve`.
    #[serde(default = "default_alpha")]
    pub initial_alpha: [f64; 2],
}

fn one() -> f64 {
    1.0
}

fn default_meshes() -> Vec<f64> {
    (3..=7).map(|k| 2f64.powi(-k)).collect()
}

fn default_scheme() -> String {
    "backward-operator".into()
}

fn default_reference() -> String {
    "auto".into()
}

fn default_norm() -> String {
    "operator".into()
}

fn default_battery_seed() -> u64 {
    DEFAULT_BATTERY_SEED
}

fn default_alpha() -> [f64; 2] {
    [0.5, 0.0]
}

impl Default for EvolutionSpec {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t1: 1.0,
            meshes: default_meshes(),
            scheme: default_scheme(),
            reference: default_reference(),
            norm: default_norm(),
            battery_seed: default_battery_seed(),
            initial_alpha: default_alpha(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoherentSpec {
    /// Slice counts of the partitions of `[t0, t1]`.
    #[serde(default = "default_slices")]
    pub slices: Vec<usize>,
    /// Probe points `[z⁺_re, z⁺_im, z⁻_re, z⁻_im]`.
    #[serde(default = "default_probes")]
    pub probes: Vec<[f64; 4]>,
    /// `gauss-hermite` or `monte-carlo`.
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// `paper` or `bargmann`.
    #[serde(default = "default_convention")]
    pub convention: String,
    /// `hbar` or `hbar-squared`: exponent of the Weyl↔Wick heat flow.
    #[serde(default = "default_heat")]
    pub heat_exponent: String,
}

fn default_slices() -> Vec<usize> {
    vec![1, 2, 4, 8]
}

fn default_probes() -> Vec<[f64; 4]> {
    vec![[0.0, 0.0, 0.0, 0.0], [0.5, -0.25, 0.5, 0.25]]
}

fn default_method() -> String {
    "gauss-hermite".into()
}

fn default_points() -> usize {
    24
}

fn default_samples() -> usize {
    100_000
}

fn default_batches() -> usize {
    20
}

fn default_convention() -> String {
    "paper".into()
}

fn default_heat() -> String {
    "hbar".into()
}

impl Default for CoherentSpec {
    fn default() -> Self {
        Self {
            slices: default_slices(),
            probes: default_probes(),
            method: default_method(),
            points: default_points(),
            samples: default_samples(),
            batches: default_batches(),
            tolerance: None,
            convention: default_convention(),
            heat_exponent: default_heat(),
        }
    }
}

/// Product of two monomials `qⁿpᵐ`, localized by `exp(−|z|²/2ℏ)` unless
/// `localized = false` (then only the asymptotic method applies).
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StarSpec {
    #[serde(default = "default_left")]
    pub left: [u32; 2],
    #[serde(default = "default_right")]
    pub right: [u32; 2],
    /// `kernel` or `asymptotic`.
    #[serde(default = "default_product_method")]
    pub method: String,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_star_tolerance")]
    pub tolerance: f64,
    #[serde(default = "yes")]
    pub localized: bool,
}

fn default_left() -> [u32; 2] {
    [1, 0]
}

fn default_right() -> [u32; 2] {
    [0, 1]
}

fn default_product_method() -> String {
    "kernel".into()
}

fn default_order() -> usize {
    4
}

fn default_star_tolerance() -> f64 {
    1e-6
}

fn yes() -> bool {
    true
}

impl Default for StarSpec {
    fn default() -> Self {
        Self {
            left: default_left(),
            right: default_right(),
            method: default_product_method(),
            order: default_order(),
            tolerance: default_star_tolerance(),
            localized: true,
        }
    }
}

/// Oracle checks: ordering table and trace formula.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default = "default_max_degree")]
    pub max_degree: u32,
    #[serde(default = "default_ordering_tolerance")]
    pub ordering_tolerance: f64,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_trace_tolerance")]
    pub trace_tolerance: f64,
}

fn default_max_degree() -> u32 {
    4
}

fn default_ordering_tolerance() -> f64 {
    1e-10
}

fn default_pairs() -> usize {
    10
}

fn default_trace_tolerance() -> f64 {
    1e-6
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            max_degree: default_max_degree(),
            ordering_tolerance: default_ordering_tolerance(),
            pairs: default_pairs(),
            trace_tolerance: default_trace_tolerance(),
        }
    }
}

/// A validated config with every name resolved.
#[derive(Clone, Debug)]
pub struct Plan {
    pub config: RunConfig,
    pub rule: OrderingRule,
    pub hamiltonian: Hamiltonian,
    pub scheme: Scheme,
    pub reference: Reference,
    pub symbol_norm: bool,
    pub method: NormalMethod,
    pub convention: CoherentConvention,
    pub heat: HeatExponent,
    pub asymptotic: bool,
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::validation(field, format!("must be a positive finite number (got {x})")))
    }
}

fn finite(field: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(CliError::validation(field, format!("must be finite (got {x})")))
    }
}

fn non_empty<T>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(CliError::validation(field, "must not be empty"))
    } else {
        Ok(())
    }
}

fn one_of(field: &str, value: &str, allowed: &[&str]) -> CliError {
    CliError::validation(field, format!("unknown value {value:?}, expected one of {}", allowed.join(", ")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // serde names the offending key in the message; keep it verbatim.
            CliError::validation("config", msg)
        })
    }

    /// Canonical TOML echo of the config, defaults included.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(self) -> Result<Plan> {
        non_empty("hbar", &self.hbar)?;
        for (i, &h) in self.hbar.iter().enumerate() {
            positive(&format!("hbar[{i}]"), h)?;
        }
        let rule: OrderingRule = self
            .rule
            .parse()
            .map_err(|_| one_of("rule", &self.rule, &OrderingRule::ALL.map(|r| r.name())))?;
        let hamiltonian = self.hamiltonian.build()?;

        let g = &self.grid;
        if g.n < 8 || !g.n.is_multiple_of(2) {
            return Err(CliError::validation("grid.n", format!("must be an even number ≥ 8 (got {})", g.n)));
        }
        positive("grid.half_width", g.half_width)?;
        if g.levels < 2 {
            return Err(CliError::validation("grid.levels", format!("must be at least 2 (got {})", g.levels)));
        }

        let e = &self.evolution;
        finite("evolution.t0", e.t0)?;
        finite("evolution.t1", e.t1)?;
        if !(e.t1 > e.t0) {
            return Err(CliError::validation("evolution.t1", "must exceed evolution.t0"));
        }
        non_empty("evolution.meshes", &e.meshes)?;
        for (i, &m) in e.meshes.iter().enumerate() {
            positive(&format!("evolution.meshes[{i}]"), m)?;
            if i > 0 && !(m < e.meshes[i - 1]) {
                return Err(CliError::validation(format!("evolution.meshes[{i}]"), "meshes must be strictly decreasing"));
            }
        }
        let scheme = match e.scheme.as_str() {
            "backward-operator" => Scheme::BackwardOperator,
            "backward-symbol" => Scheme::BackwardSymbol(rule),
            "forward-operator" => Scheme::ForwardOperator,
            s => return Err(one_of("evolution.scheme", s, &["backward-operator", "backward-symbol", "forward-operator"])),
        };
        let reference = match e.reference.as_str() {
            "auto" => Reference::Auto,
            "eigen" => Reference::Eigen,
            "richardson" => Reference::Richardson,
            s => return Err(one_of("evolution.reference", s, &["auto", "eigen", "richardson"])),
        };
        if reference == Reference::Eigen && hamiltonian.time_dependent() {
            return Err(CliError::validation(
                "evolution.reference",
                "eigen needs a time-independent hamiltonian; use richardson or auto",
            ));
        }
        let symbol_norm = match e.norm.as_str() {
            "operator" => false,
            "symbol" => true,
            s => return Err(one_of("evolution.norm", s, &["operator", "symbol"])),
        };
        finite("evolution.initial_alpha", e.initial_alpha[0] + e.initial_alpha[1])?;

        let co = &self.coherent;
        non_empty("coherent.slices", &co.slices)?;
        for (i, &n) in co.slices.iter().enumerate() {
            if n == 0 {
                return Err(CliError::validation(format!("coherent.slices[{i}]"), "must be at least 1"));
            }
        }
        non_empty("coherent.probes", &co.probes)?;
        for (i, p) in co.probes.iter().enumerate() {
            finite(&format!("coherent.probes[{i}]"), p.iter().sum())?;
        }
        let method = match co.method.as_str() {
            "gauss-hermite" => {
                if co.points < 2 {
                    return Err(CliError::validation("coherent.points", "must be at least 2"));
                }
                NormalMethod::GaussHermite { points: co.points }
            }
            "monte-carlo" => {
                if co.batches < 2 || co.samples < co.batches {
                    return Err(CliError::validation(
                        "coherent.batches",
                        "need at least 2 batches and no more batches than samples",
                    ));
                }
                NormalMethod::MonteCarlo {
                    samples: co.samples,
                    batches: co.batches,
                    seed: self.seed,
                }
            }
            s => return Err(one_of("coherent.method", s, &["gauss-hermite", "monte-carlo"])),
        };
        if let Some(t) = co.tolerance {
            positive("coherent.tolerance", t)?;
        }
        let convention =
            CoherentConvention::from_name(&co.convention).ok_or_else(|| one_of("coherent.convention", &co.convention, &["paper", "bargmann"]))?;
        let heat = HeatExponent::from_name(&co.heat_exponent)
            .ok_or_else(|| one_of("coherent.heat_exponent", &co.heat_exponent, &["hbar", "hbar-squared"]))?;

        let st = &self.star;
        let asymptotic = match st.method.as_str() {
            "kernel" => false,
            "asymptotic" => true,
            s => return Err(one_of("star.method", s, &["kernel", "asymptotic"])),
        };
        if !asymptotic && !st.localized {
            return Err(CliError::validation(
                "star.localized",
                "bare polynomials are not band-limited; use the asymptotic method or localize them",
            ));
        }
        if st.left[0] + st.left[1] + st.right[0] + st.right[1] > DEFAULT_DEGREE_CAP {
            return Err(CliError::validation("star.right", format!("total degree exceeds the cap {DEFAULT_DEGREE_CAP}")));
        }
        if asymptotic && !(1..=4).contains(&st.order) {
            return Err(CliError::validation("star.order", format!("must lie in 1..=4 (got {})", st.order)));
        }
        positive("star.tolerance", st.tolerance)?;

        let ch = &self.checks;
        if ch.max_degree > DEFAULT_DEGREE_CAP {
            return Err(CliError::validation("checks.max_degree", format!("exceeds the cap {DEFAULT_DEGREE_CAP}")));
        }
        positive("checks.ordering_tolerance", ch.ordering_tolerance)?;
        if ch.pairs == 0 {
            return Err(CliError::validation("checks.pairs", "must be at least 1"));
        }
        positive("checks.trace_tolerance", ch.trace_tolerance)?;

        Ok(Plan {
            config: self,
            rule,
            hamiltonian,
            scheme,
            reference,
            symbol_norm,
            method,
            convention,
            heat,
            asymptotic,
        })
    }
}

impl HamiltonianSpec {
    pub fn build(&self) -> Result<Hamiltonian> {
        let h = match (&self.preset, &self.terms) {
            (Some(name), None) => Preset::from_name(name)
                .ok_or_else(|| one_of("hamiltonian.preset", name, &Preset::ALL.map(|p| p.name())))?
                .hamiltonian::<f64>(),
            (None, Some(terms)) => {
                non_empty("hamiltonian.terms", terms)?;
                let mut f = MPoly::zero(2);
                for (i, &[n, m, a, b]) in terms.iter().enumerate() {
                    let field = format!("hamiltonian.terms[{i}]");
                    let exponent = |x: f64| x >= 0.0 && x.fract() == 0.0 && x <= DEFAULT_DEGREE_CAP as f64;
                    if !(exponent(n) && exponent(m)) {
                        return Err(CliError::validation(field, "exponents must be non-negative integers within the degree cap"));
                    }
                    if n + m > DEFAULT_DEGREE_CAP as f64 {
                        return Err(CliError::validation(field, format!("degree exceeds the cap {DEFAULT_DEGREE_CAP}")));
                    }
                    finite(&field, a + b)?;
                    f = &f + &MPoly::monomial(2, vec![n as u32, m as u32], c(a, b));
                }
                Hamiltonian::new("custom", f).map_err(|e| CliError::validation("hamiltonian.terms", e.to_string()))?
            }
            (Some(_), Some(_)) => return Err(CliError::validation("hamiltonian", "give either preset or terms, not both")),
            (None, None) => return Err(CliError::validation("hamiltonian", "give a preset or a list of terms")),
        };
        finite("hamiltonian.delta", self.delta)?;
        let delta = self.delta.max(h.delta);
        Ok(h.with_delta(delta))
    }
}
