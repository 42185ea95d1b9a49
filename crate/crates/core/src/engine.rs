//! Circuit primitives acting on [`StateVector`]s.
//!
//! Phase estimation for `e^{-iρt}` is simulated through the exact spectral
//! decomposition of `ρ` rather than by compiling the QFT circuit. The map
//! used is
//!
//! ```text
//! U_PE = Σ_j |v_j⟩⟨v_j| ⊗ X^{ℓ_j}
//! ```
//!
//! where `X^{ℓ}` XORs the label `ℓ` into the eigenvalue register. On a zeroed
//! eigenvalue register it writes `|ℓ_j⟩` next to each eigen-component, which
//! is the ideal action of phase estimation, and it is its own inverse.
//!
//! Labels come in two flavours: ideal mode writes a distinct exact token per
//! eigen-component, quantized mode writes the `L`-bit rounding of `λ_j / 2`.
//! Halving the eigenvalue keeps `λ = 1` (rank-one data) away from the
//! phase wrap-around at 1; decoding doubles the label back.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pca::{select_dimension_from, SpectralModel};
use crate::state::{qubits_for, StateVector, ANCILLA_REGISTER, EIGEN_REGISTER, FEATURE_REGISTER, INDEX_REGISTER};

/// Fraction of the eigenvalue written as the phase.
pub const PHASE_SCALE: f64 = 0.5;

/// Default floor on the post-selection success probability.
pub const DEFAULT_P_FLOOR: f64 = 1e-12;

/// Spectrum of `ρ = XᵀX / Tr(XᵀX)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoSpec {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    phase_scale: f64,
    threshold: f64,
    selected_dim: usize,
}

impl RhoSpec {
    /// `λ_j = σ_j² / Σσ²` with the model's right singular vectors.
    pub fn from_model(model: &SpectralModel) -> Self {
        Self {
            eigenvalues: model.variance_proportions().to_vec(),
            eigenvectors: model.right_vectors().to_vec(),
            phase_scale: PHASE_SCALE,
            threshold: model.threshold(),
            selected_dim: model.selected_dim(),
        }
    }

    /// Builds a spectrum and selects its dimension at `threshold`.
    pub fn new(eigenvalues: Vec<f64>, eigenvectors: Vec<Vec<f64>>, threshold: f64) -> Result<Self> {
        let dim = eigenvalues.len();
        if dim == 0 || eigenvectors.len() != dim || eigenvectors.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidInput("eigenvectors must form a square basis".into()));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidInput(format!("threshold {threshold} outside (0, 1]")));
        }
        if eigenvalues.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::InvalidInput("eigenvalues must lie in [0, 1]".into()));
        }
        Ok(Self {
            selected_dim: select_dimension_from(&eigenvalues, threshold),
            eigenvalues,
            eigenvectors,
            phase_scale: PHASE_SCALE,
            threshold,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    pub fn phase_scale(&self) -> f64 {
        self.phase_scale
    }

    pub fn selected_dim(&self) -> usize {
        self.selected_dim
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `Σ_j λ_j v_j v_jᵀ`, row-major.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.dim();
        let mut m = vec![0.0; n * n];
        for (l, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            for r in 0..n {
                for c in 0..n {
                    m[r * n + c] += l * v[r] * v[c];
                }
            }
        }
        m
    }

    /// Eigenbasis padded to `padded` dimensions; the padding directions are
    /// canonical axes with eigenvalue zero.
    fn padded_basis(&self, padded: usize) -> Vec<(f64, Vec<f64>)> {
        let n = self.dim();
        let mut out: Vec<(f64, Vec<f64>)> = self
            .eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(&l, v)| {
                let mut p = v.clone();
                p.resize(padded, 0.0);
                (l, p)
            })
            .collect();
        for k in n..padded {
            let mut e = vec![0.0; padded];
            e[k] = 1.0;
            out.push((0.0, e));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Exact per-component tokens; no quantization error.
    Ideal,
    /// `L`-bit rounding of `phase_scale · λ_j`.
    Quantized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseConfig {
    pub bits: usize,
    pub mode: LabelMode,
    pub eps_lambda: f64,
}

impl PhaseConfig {
    pub fn ideal(bits: usize) -> Self {
        Self {
            bits,
            mode: LabelMode::Ideal,
            eps_lambda: 2f64.powi(-(bits as i32)),
        }
    }

    pub fn quantized(bits: usize) -> Self {
        Self {
            bits,
            mode: LabelMode::Quantized,
            eps_lambda: 2f64.powi(-(bits as i32)),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 20 {
            return Err(Error::InvalidInput(format!(
                "eigenvalue register width {} outside 1..=20",
                self.bits
            )));
        }
        Ok(())
    }
}

/// The labels phase estimation writes for one `(ρ, config)` pair on a
/// feature register of a given padded width.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenLabels {
    mode: LabelMode,
    bits: usize,
    qubits: usize,
    phase_scale: f64,
    basis: Vec<(f64, Vec<f64>)>,
    labels: Vec<usize>,
}

impl EigenLabels {
    pub fn new(rho: &RhoSpec, cfg: &PhaseConfig, feature_qubits: usize) -> Result<Self> {
        cfg.validate()?;
        let padded = 1usize << feature_qubits;
        if padded < rho.dim() {
            return Err(Error::InvalidInput(format!(
                "feature register of {feature_qubits} qubits cannot hold a {}-dimensional ρ",
                rho.dim()
            )));
        }
        let basis = rho.padded_basis(padded);
        let (qubits, labels) = match cfg.mode {
            // token j + 1 for component j; 0 stays free
            LabelMode::Ideal => (qubits_for(padded + 1), (1..=padded).collect()),
            LabelMode::Quantized => {
                let scale = (1u64 << cfg.bits) as f64;
                let labels = basis
                    .iter()
                    .map(|(l, _)| ((rho.phase_scale * l * scale).round() as usize).min((1 << cfg.bits) - 1))
                    .collect();
                (cfg.bits, labels)
            }
        };
        Ok(Self {
            mode: cfg.mode,
            bits: cfg.bits,
            qubits,
            phase_scale: rho.phase_scale,
            basis,
            labels,
        })
    }

    /// Width of the eigenvalue register.
    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn label(&self, component: usize) -> usize {
        self.labels[component]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    /// Eigenvalue estimate carried by a label.
    pub fn decode(&self, label: usize) -> f64 {
        match self.mode {
            LabelMode::Ideal => self
                .labels
                .iter()
                .position(|&l| l == label)
                .map_or(0.0, |j| self.basis[j].0),
            LabelMode::Quantized => label as f64 / ((1u64 << self.bits) as f64 * self.phase_scale),
        }
    }

    /// Components sharing a label.
    pub fn components_with(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&j| self.labels[j] == label).collect()
    }

    /// Padded eigenvector of component `j`.
    pub fn eigenvector(&self, j: usize) -> &[f64] {
        &self.basis[j].1
    }

    /// Fails if two of the first `d` components share a label.
    pub fn check_distinct(&self, d: usize) -> Result<()> {
        for a in 0..d {
            for b in a + 1..d {
                if self.labels[a] == self.labels[b] {
                    return Err(Error::DegenerateSpectrum(format!(
                        "components {} and {} share the {}-bit label {:0width$b}; raise the eigenvalue register width",
                        a + 1,
                        b + 1,
                        self.bits,
                        self.labels[a],
                        width = self.bits
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fails unless each selected component owns its label outright; a
    /// shared label would route unselected directions into the index
    /// register.
    pub fn check_separable(&self, selected: &[usize]) -> Result<()> {
        for &a in selected {
            if let Some(b) = (0..self.labels.len()).find(|&b| b != a && self.labels[b] == self.labels[a]) {
                return Err(Error::DegenerateSpectrum(format!(
                    "selected component {} shares its label with component {}; raise the eigenvalue register width",
                    a + 1,
                    b + 1
                )));
            }
        }
        Ok(())
    }

    /// `U_PE` on `(feature, eigen)`. Self-inverse.
    fn apply(&self, state: &mut StateVector, feature: &str, eigen: &str) -> Result<()> {
        let fdim = state.register(feature)?.dim();
        let edim = state.register(eigen)?.dim();
        if fdim != self.basis.len() || edim != 1 << self.qubits {
            return Err(Error::InvalidInput(format!(
                "registers ({fdim}, {edim}) do not match the labelling ({}, {})",
                self.basis.len(),
                1usize << self.qubits
            )));
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut out = vec![zero; fdim * edim];
        let mut column = vec![zero; fdim];
        state.apply_local(&[feature, eigen], |fiber| {
            out.iter_mut().for_each(|a| *a = zero);
            for e in 0..edim {
                let mut empty = true;
                for (f, c) in column.iter_mut().enumerate() {
                    *c = fiber[f * edim + e];
                    empty &= *c == zero;
                }
                if empty {
                    continue;
                }
                for ((_, v), &label) in self.basis.iter().zip(&self.labels) {
                    let coeff: Complex64 = v.iter().zip(&column).map(|(x, a)| a * *x).sum();
                    if coeff == zero {
                        continue;
                    }
                    let target = e ^ label;
                    for (f, x) in v.iter().enumerate() {
                        out[f * edim + target] += coeff * *x;
                    }
                }
            }
            fiber.copy_from_slice(&out);
            Ok(())
        })
    }
}

fn require_zero(state: &StateVector, reg: &str) -> Result<()> {
    let m = state.marginal(reg)?;
    let off: f64 = m[1..].iter().sum();
    if off > 1e-24f64.max(1e-20 * m[0]) {
        return Err(Error::ContractViolation(format!(
            "register `{reg}` must start in |0⟩ (weight {off:e} elsewhere)"
        )));
    }
    Ok(())
}

/// Writes eigenvalue labels next to the eigen-components of the feature
/// register. Appends a zeroed eigenvalue register if none is present.
pub fn phase_estimate(rho: &RhoSpec, cfg: &PhaseConfig, state: &mut StateVector) -> Result<EigenLabels> {
    let fq = state.register(FEATURE_REGISTER)?.qubits;
    let labels = EigenLabels::new(rho, cfg, fq)?;
    if cfg.mode == LabelMode::Quantized {
        labels.check_distinct(rho.selected_dim())?;
    }
    phase_estimate_with(&labels, state)?;
    Ok(labels)
}

/// [`phase_estimate`] with a labelling already at hand; no distinctness
/// check is made.
pub fn phase_estimate_with(labels: &EigenLabels, state: &mut StateVector) -> Result<()> {
    if state.has_register(EIGEN_REGISTER) {
        require_zero(state, EIGEN_REGISTER)?;
    } else {
        state.append_register(EIGEN_REGISTER, labels.qubits())?;
    }
    labels.apply(state, FEATURE_REGISTER, EIGEN_REGISTER)
}

/// Undoes [`phase_estimate`]; on states it produced, the eigenvalue register
/// returns to `|0⟩` and is left in place for the caller to discard.
pub fn inverse_phase_estimate(rho: &RhoSpec, cfg: &PhaseConfig, state: &mut StateVector) -> Result<()> {
    let fq = state.register(FEATURE_REGISTER)?.qubits;
    let labels = EigenLabels::new(rho, cfg, fq)?;
    labels.apply(state, FEATURE_REGISTER, EIGEN_REGISTER)
}

/// Same as [`inverse_phase_estimate`] with a labelling already at hand.
pub fn inverse_phase_estimate_with(labels: &EigenLabels, state: &mut StateVector) -> Result<()> {
    labels.apply(state, FEATURE_REGISTER, EIGEN_REGISTER)
}

/// Gate count of the multi-controlled-NOT construction of one `CU_j`:
/// an `X` pair around every zero bit of the label plus one multi-controlled
/// NOT per set bit of `j`.
pub fn cu_gate_count(label: usize, j: usize, label_bits: usize) -> usize {
    let zeros = label_bits - (label & ((1 << label_bits) - 1)).count_ones() as usize;
    2 * zeros + j.count_ones() as usize
}

/// `CU(λ_j) : |λ_j⟩|0⟩ ↦ |λ_j⟩|j⟩` for every `(label, j)` pair, on the
/// eigenvalue and index registers. Labels outside the list leave the index
/// register alone. Returns the gate count of the equivalent circuit.
pub fn apply_cu_lambda(state: &mut StateVector, labels: &[(usize, usize)]) -> Result<usize> {
    let edim = state.register(EIGEN_REGISTER)?.dim();
    let equbits = state.register(EIGEN_REGISTER)?.qubits;
    let idim = state.register(INDEX_REGISTER)?.dim();
    let mut map: Vec<Option<usize>> = vec![None; edim];
    let mut gates = 0;
    for &(label, j) in labels {
        if label >= edim {
            return Err(Error::OutOfRange {
                what: "eigenvalue label",
                index: label,
                len: edim,
            });
        }
        if j == 0 || j >= idim {
            return Err(Error::OutOfRange {
                what: "index value",
                index: j,
                len: idim,
            });
        }
        if map[label].replace(j).is_some() {
            return Err(Error::DegenerateSpectrum(format!(
                "label {label} is assigned to more than one index"
            )));
        }
        gates += cu_gate_count(label, j, equbits);
    }
    require_zero(state, INDEX_REGISTER)?;
    let mut scratch = vec![Complex64::new(0.0, 0.0); idim];
    state.apply_controlled(EIGEN_REGISTER, INDEX_REGISTER, |e, fiber| {
        if let Some(j) = map[e] {
            for (k, a) in fiber.iter().enumerate() {
                scratch[k ^ j] = *a;
            }
            fiber.copy_from_slice(&scratch);
        }
        Ok(())
    })?;
    Ok(gates)
}

/// `CR(β_j) : |j⟩|0⟩ ↦ |j⟩(C/β̂_j |1⟩ + sqrt(1 − C²/β̂_j²) |0⟩)` for
/// `j = 1..=d` on the index register and a one-qubit ancilla. Index 0 and
/// labels above `d` leave the ancilla alone.
pub fn apply_cr_beta(state: &mut StateVector, beta_hat: &[f64], c: f64) -> Result<()> {
    if let Some((j, b)) = beta_hat.iter().enumerate().find(|(_, b)| !(b.is_finite() && **b > 0.0)) {
        return Err(Error::InvalidInput(format!("β̂_{} = {b} is not positive", j + 1)));
    }
    let min_beta = beta_hat.iter().copied().fold(f64::INFINITY, f64::min);
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("rotation constant {c} is not positive")));
    }
    if c > min_beta {
        return Err(Error::InvalidRotation { c, min_beta });
    }
    if state.register(ANCILLA_REGISTER)?.qubits != 1 {
        return Err(Error::InvalidInput("rotation ancilla must be one qubit".into()));
    }
    let idim = state.register(INDEX_REGISTER)?.dim();
    if beta_hat.len() >= idim {
        return Err(Error::InvalidInput(format!(
            "{} coefficients do not fit an index register of dimension {idim}",
            beta_hat.len()
        )));
    }
    require_zero(state, ANCILLA_REGISTER)?;
    state.apply_controlled(INDEX_REGISTER, ANCILLA_REGISTER, |j, fiber| {
        if (1..=beta_hat.len()).contains(&j) {
            let r = c / beta_hat[j - 1];
            let keep = (1.0 - r * r).max(0.0).sqrt();
            let (a0, a1) = (fiber[0], fiber[1]);
            fiber[0] = a0 * keep - a1 * r;
            fiber[1] = a0 * r + a1 * keep;
        }
        Ok(())
    })
}

/// Expected repetitions with amplitude amplification, `⌈π / (4 asin √p)⌉`.
pub fn amplification_repetitions(p: f64) -> u64 {
    if !(p > 0.0) {
        return u64::MAX;
    }
    (std::f64::consts::PI / (4.0 * p.min(1.0).sqrt().asin())).ceil() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostSelection {
    /// Renormalized state on the registers that were not measured.
    pub state: StateVector,
    pub probability: f64,
    pub repetitions: u64,
}

/// Projects onto the given register outcomes, drops those registers and
/// renormalizes.
pub fn postselect(state: &StateVector, outcomes: &[(&str, usize)], p_floor: f64) -> Result<PostSelection> {
    let total = state.norm_sqr();
    let mut s = state.clone();
    let kept = s.project(outcomes)?;
    let probability = kept / total;
    if !(probability >= p_floor) || probability == 0.0 {
        return Err(Error::VanishingSuccess {
            p: probability,
            floor: p_floor,
        });
    }
    for &(name, value) in outcomes {
        s.remove_register(name, value)?;
    }
    s.normalize()?;
    Ok(PostSelection {
        state: s,
        probability,
        repetitions: amplification_repetitions(probability),
    })
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
}

/// Ancilla statistics of a swap test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwapTestOutcome {
    pub shots: u64,
    pub zeros: u64,
    /// Empirical `P(ancilla = 0)`.
    pub p0_hat: f64,
    /// `2 p̂₀ − 1`, unbiased but possibly outside `[0, 1]`.
    pub overlap_sq_raw: f64,
    /// `2 p̂₀ − 1` clamped to `[0, 1]`.
    pub overlap_sq_estimate: f64,
    /// Exact `(1 + |⟨a|b⟩|²) / 2`.
    pub p0_exact: f64,
}

fn unit_inner(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    let (aa, bb) = (a.amplitudes(), b.amplitudes());
    let shape = |s: &StateVector| s.registers().iter().map(|r| r.qubits).collect::<Vec<_>>();
    if shape(a) != shape(b) {
        return Err(Error::InvalidInput(
            "swap test between states of different shape".into(),
        ));
    }
    let na = a.norm_sqr().sqrt();
    let nb = b.norm_sqr().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidInput("zero state".into()));
    }
    Ok(aa.iter().zip(bb).map(|(x, y)| x.conj() * y).sum::<Complex64>() / (na * nb))
}

/// Swap test: `P(0) = (1 + |⟨a|b⟩|²)/2`, sampled over `shots` runs.
pub fn swap_test(a: &StateVector, b: &StateVector, shots: u64, seed: u64) -> Result<SwapTestOutcome> {
    if shots == 0 {
        return Err(Error::InvalidInput("swap test needs at least one shot".into()));
    }
    let overlap = unit_inner(a, b)?.norm_sqr().min(1.0);
    let p0_exact = 0.5 * (1.0 + overlap);
    let zeros = binomial(&mut rng(seed), shots, p0_exact);
    let p0_hat = zeros as f64 / shots as f64;
    Ok(SwapTestOutcome {
        shots,
        zeros,
        p0_hat,
        overlap_sq_raw: 2.0 * p0_hat - 1.0,
        overlap_sq_estimate: (2.0 * p0_hat - 1.0).clamp(0.0, 1.0),
        p0_exact,
    })
}

/// Signed overlap estimate from an ancilla-controlled preparation of
/// `(|0⟩|a⟩ + |1⟩|b⟩)/√2` measured in the `X` basis:
/// `P(+) = (1 + Re⟨a|b⟩)/2`. Unlike the swap test this keeps the sign, which
/// the classification and regression demos need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapEstimate {
    /// `None` means the exact value was used.
    pub shots: Option<u64>,
    pub estimate: f64,
    pub standard_error: f64,
    pub exact: f64,
}

pub fn interference_test(a: &StateVector, b: &StateVector, shots: Option<u64>, seed: u64) -> Result<OverlapEstimate> {
    let exact = unit_inner(a, b)?.re.clamp(-1.0, 1.0);
    match shots {
        None => Ok(OverlapEstimate {
            shots: None,
            estimate: exact,
            standard_error: 0.0,
            exact,
        }),
        Some(0) => Err(Error::InvalidInput("interference test needs at least one shot".into())),
        Some(n) => {
            let plus = binomial(&mut rng(seed), n, 0.5 * (1.0 + exact));
            let p = plus as f64 / n as f64;
            Ok(OverlapEstimate {
                shots: Some(n),
                estimate: 2.0 * p - 1.0,
                standard_error: 2.0 * (p * (1.0 - p) / n as f64).sqrt(),
                exact,
            })
        }
    }
}

/// Sampled outcomes of one register plus its exact marginal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub shots: u64,
    pub counts: Vec<u64>,
    pub marginal: Vec<f64>,
}

/// Draws `shots` outcomes of `register` from the exact marginal.
pub fn measure_register(state: &StateVector, register: &str, shots: u64, seed: u64) -> Result<Histogram> {
    let mut marginal = state.marginal(register)?;
    let total: f64 = marginal.iter().sum();
    marginal.iter_mut().for_each(|p| *p /= total);
    let counts = sample_counts(&marginal, shots, &mut rng(seed));
    Ok(Histogram {
        shots,
        counts,
        marginal,
    })
}

/// Multinomial draw by successive conditional binomials.
pub(crate) fn sample_counts(probs: &[f64], shots: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut remaining = shots;
    let mut mass = 1.0;
    let mut counts = vec![0; probs.len()];
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let q = if k + 1 == probs.len() || mass <= 0.0 {
            1.0
        } else {
            (p / mass).clamp(0.0, 1.0)
        };
        let n = binomial(rng, remaining, q);
        counts[k] = n;
        remaining -= n;
        mass -= p;
    }
    counts
}
