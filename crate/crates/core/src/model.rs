//! Truncated Fock-space Hamiltonians for the quantum Rabi model and the
//! nonlinear optomechanical (Casimir-Rabi) model, plus spectrum scans that
//! locate avoided crossings.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{Calibration, EffectiveVariant};
use crate::error::{Error, Result};
use crate::linalg::{diagonalize, HermitianMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ThreePhoton,
    Casimir,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::ThreePhoton => "three_photon",
            ModelKind::Casimir => "casimir",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Fock cutoffs. `cavity_dim` photon states `0..cavity_dim`; `second_dim` is
/// 2 for the qubit or the phonon cutoff for the mechanical mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockTruncation {
    pub cavity_dim: usize,
    pub second_dim: usize,
}

impl FockTruncation {
    pub const fn three_photon_default() -> Self {
        Self {
            cavity_dim: 15,
            second_dim: 2,
        }
    }

    pub const fn casimir_default() -> Self {
        Self {
            cavity_dim: 8,
            second_dim: 12,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::ThreePhoton => Self::three_photon_default(),
            ModelKind::Casimir => Self::casimir_default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.cavity_dim * self.second_dim
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        match kind {
            ModelKind::ThreePhoton => {
                if self.cavity_dim < 4 {
                    return Err(Error::InvalidTruncation(format!(
                        "three-photon model needs cavity_dim >= 4 to hold |g,3>, got {}",
                        self.cavity_dim
                    )));
                }
                if self.second_dim != 2 {
                    return Err(Error::InvalidTruncation(format!(
                        "three-photon model needs second_dim = 2 (qubit), got {}",
                        self.second_dim
                    )));
                }
            }
            ModelKind::Casimir => {
                if self.cavity_dim < 3 {
                    return Err(Error::InvalidTruncation(format!(
                        "Casimir model needs cavity_dim >= 3 to hold |2,0>, got {}",
                        self.cavity_dim
                    )));
                }
                if self.second_dim < 4 {
                    return Err(Error::InvalidTruncation(format!(
                        "Casimir model needs second_dim >= 4 to hold |0,3>, got {}",
                        self.second_dim
                    )));
                }
            }
        }
        Ok(())
    }

    /// Raise every bosonic cutoff by `extra` levels.
    pub fn expanded(&self, kind: ModelKind, extra: usize) -> Self {
        match kind {
            ModelKind::ThreePhoton => Self {
                cavity_dim: self.cavity_dim + extra,
                second_dim: self.second_dim,
            },
            ModelKind::Casimir => Self {
                cavity_dim: self.cavity_dim + extra,
                second_dim: self.second_dim + extra,
            },
        }
    }
}

/// Quantum Rabi model parameters, in units where the qubit frequency is the
/// reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreePhotonParams {
    pub omega_a: f64,
    pub omega_c: f64,
    pub lambda: f64,
}

/// Optomechanical parameters, in units where the mechanical frequency is the
/// reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasimirParams {
    pub omega_c: f64,
    pub omega_m: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParams {
    ThreePhoton(ThreePhotonParams),
    Casimir(CasimirParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::ThreePhoton(_) => ModelKind::ThreePhoton,
            ModelParams::Casimir(_) => ModelKind::Casimir,
        }
    }

    /// The tunable cavity frequency.
    pub fn control_frequency(&self) -> f64 {
        match self {
            ModelParams::ThreePhoton(p) => p.omega_c,
            ModelParams::Casimir(p) => p.omega_c,
        }
    }

    pub fn with_control_frequency(&self, omega_c: f64) -> Self {
        match *self {
            ModelParams::ThreePhoton(p) => ModelParams::ThreePhoton(ThreePhotonParams { omega_c, ..p }),
            ModelParams::Casimir(p) => ModelParams::Casimir(CasimirParams { omega_c, ..p }),
        }
    }

    /// The non-control frequency: ω_a for the qubit, ω_m for the mechanics.
    pub fn primary_frequency(&self) -> f64 {
        match self {
            ModelParams::ThreePhoton(p) => p.omega_a,
            ModelParams::Casimir(p) => p.omega_m,
        }
    }

    pub fn with_primary_frequency(&self, omega: f64) -> Self {
        match *self {
            ModelParams::ThreePhoton(p) => ModelParams::ThreePhoton(ThreePhotonParams { omega_a: omega, ..p }),
            ModelParams::Casimir(p) => ModelParams::Casimir(CasimirParams { omega_m: omega, ..p }),
        }
    }

    pub fn coupling(&self) -> f64 {
        match self {
            ModelParams::ThreePhoton(p) => p.lambda,
            ModelParams::Casimir(p) => p.g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (name, vals): (&str, [(&str, f64); 3]) = match self {
            ModelParams::ThreePhoton(p) => (
                "three_photon",
                [("omega_a", p.omega_a), ("omega_c", p.omega_c), ("lambda", p.lambda)],
            ),
            ModelParams::Casimir(p) => (
                "casimir",
                [("omega_c", p.omega_c), ("omega_m", p.omega_m), ("g", p.g)],
            ),
        };
        for (field, v) in vals {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name}.{field} must be finite")));
            }
        }
        // frequencies strictly positive; coupling may be zero (decoupled limit)
        for (field, v) in &vals[..2] {
            if *v <= 0.0 {
                return Err(Error::Config(format!("{name}.{field} must be > 0, got {v}")));
            }
        }
        if vals[2].1 < 0.0 {
            return Err(Error::Config(format!("{name}.{} must be >= 0", vals[2].0)));
        }
        Ok(())
    }

    /// Regime warnings for couplings outside the perturbative window.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            ModelParams::ThreePhoton(p) if p.lambda >= 0.2 * p.omega_a => out.push(format!(
                "lambda = {} is not weak (>= 0.2 omega_a); effective model unreliable",
                p.lambda
            )),
            ModelParams::Casimir(p) if p.g > 0.05 * p.omega_m => out.push(format!(
                "g = {} exceeds 0.05 omega_m; effective model unreliable",
                p.g
            )),
            _ => {}
        }
        out
    }
}

/// A physical model together with its truncation and the effective-model
/// variant used for the detuning map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub params: ModelParams,
    pub truncation: FockTruncation,
    #[serde(default)]
    pub variant: EffectiveVariant,
    /// Applied by the effective-model evaluator only.
    #[serde(default)]
    pub calibration: Option<Calibration>,
}

impl ModelConfig {
    pub fn new(params: ModelParams, truncation: FockTruncation) -> Result<Self> {
        params.validate()?;
        truncation.validate(params.kind())?;
        for w in params.warnings() {
            log::warn!("{w}");
        }
        Ok(Self {
            params,
            truncation,
            variant: EffectiveVariant::MainText,
            calibration: None,
        })
    }

    pub fn with_variant(mut self, variant: EffectiveVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_calibration(mut self, calibration: Option<Calibration>) -> Self {
        self.calibration = calibration;
        self
    }

    pub fn with_params(&self, params: ModelParams) -> Self {
        Self {
            params,
            ..self.clone()
        }
    }

    pub fn with_truncation(&self, truncation: FockTruncation) -> Result<Self> {
        truncation.validate(self.kind())?;
        Ok(Self {
            truncation,
            ..self.clone()
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn dim(&self) -> usize {
        self.truncation.dim()
    }

    /// Reference frequency setting the unit of energy (ω_a or ω_m).
    pub fn reference_frequency(&self) -> f64 {
        self.params.primary_frequency()
    }

    pub fn hamiltonian(&self) -> Result<HermitianMatrix> {
        match self.params {
            ModelParams::ThreePhoton(p) => build_rabi_hamiltonian(&p, &self.truncation),
            ModelParams::Casimir(p) => build_optomech_hamiltonian(&p, &self.truncation),
        }
    }

    /// Hamiltonian with the cavity frequency replaced by `omega_c`.
    pub fn hamiltonian_at(&self, omega_c: f64) -> Result<HermitianMatrix> {
        self.with_params(self.params.with_control_frequency(omega_c))
            .hamiltonian()
    }

    /// Index of the bare state |q, n> (qubit ⊗ cavity) or |n_c, n_m>
    /// (cavity ⊗ mechanics).
    pub fn bare_index(&self, first: usize, second: usize) -> usize {
        match self.kind() {
            // qubit index 0 = g, 1 = e
            ModelKind::ThreePhoton => first * self.truncation.cavity_dim + second,
            ModelKind::Casimir => first * self.truncation.second_dim + second,
        }
    }

    /// |e,0> for the Rabi model, |2,0> for the optomechanical model.
    pub fn initial_index(&self) -> usize {
        match self.kind() {
            ModelKind::ThreePhoton => self.bare_index(1, 0),
            ModelKind::Casimir => self.bare_index(2, 0),
        }
    }

    /// |g,3> for the Rabi model, |0,3> for the optomechanical model.
    pub fn target_index(&self) -> usize {
        match self.kind() {
            ModelKind::ThreePhoton => self.bare_index(0, 3),
            ModelKind::Casimir => self.bare_index(0, 3),
        }
    }

    pub fn basis_label(&self, index: usize) -> String {
        match self.kind() {
            ModelKind::ThreePhoton => {
                let q = if index / self.truncation.cavity_dim == 0 { 'g' } else { 'e' };
                format!("|{q},{}>", index % self.truncation.cavity_dim)
            }
            ModelKind::Casimir => format!(
                "|{},{}>",
                index / self.truncation.second_dim,
                index % self.truncation.second_dim
            ),
        }
    }

    /// Energy-ordered eigenstate indices of the resonant pair.
    pub fn crossing_pair(&self) -> (usize, usize) {
        match self.kind() {
            ModelKind::ThreePhoton => (3, 4),
            ModelKind::Casimir => (5, 6),
        }
    }

    /// Cavity quadrature `a + a†` on the full space.
    pub fn cavity_quadrature(&self) -> Result<DMatrix<f64>> {
        let a = build_ladder(self.truncation.cavity_dim)?;
        let x = &a + a.transpose();
        Ok(match self.kind() {
            ModelKind::ThreePhoton => DMatrix::<f64>::identity(2, 2).kronecker(&x),
            ModelKind::Casimir => x.kronecker(&DMatrix::<f64>::identity(
                self.truncation.second_dim,
                self.truncation.second_dim,
            )),
        })
    }

    /// `σ_x` for the qubit or `b + b†` for the mechanics, on the full space.
    pub fn second_quadrature(&self) -> Result<DMatrix<f64>> {
        let ic = DMatrix::<f64>::identity(self.truncation.cavity_dim, self.truncation.cavity_dim);
        Ok(match self.kind() {
            ModelKind::ThreePhoton => sigma_x().kronecker(&ic),
            ModelKind::Casimir => {
                let b = build_ladder(self.truncation.second_dim)?;
                ic.kronecker(&(&b + b.transpose()))
            }
        })
    }

    /// Maximum relative change of the lowest `levels` eigenvalues when every
    /// bosonic cutoff is raised by `extra`; relative to `max(1, |E|)`.
    pub fn truncation_convergence(&self, levels: usize, extra: usize) -> Result<f64> {
        let base = diagonalize(&self.hamiltonian()?).values;
        let bigger = self.with_truncation(self.truncation.expanded(self.kind(), extra))?;
        let wide = diagonalize(&bigger.hamiltonian()?).values;
        Ok(base
            .iter()
            .zip(&wide)
            .take(levels)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max))
    }
}

/// Bosonic annihilation operator on `dim` Fock states.
pub fn build_ladder(dim: usize) -> Result<DMatrix<f64>> {
    if dim < 2 {
        return Err(Error::InvalidTruncation(format!(
            "ladder operator needs dim >= 2, got {dim}"
        )));
    }
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for m in 0..dim - 1 {
        a[(m, m + 1)] = ((m + 1) as f64).sqrt();
    }
    Ok(a)
}

fn sigma_x() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

/// `(ω_a/2)σ_z + ω_c a†a + λ σ_x (a + a†)` on qubit ⊗ cavity, qubit basis (g, e).
pub fn build_rabi_hamiltonian(p: &ThreePhotonParams, t: &FockTruncation) -> Result<HermitianMatrix> {
    t.validate(ModelKind::ThreePhoton)?;
    let nc = t.cavity_dim;
    let a = build_ladder(nc)?;
    let num = a.transpose() * &a;
    let x = &a + a.transpose();
    let sz = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
    let i2 = DMatrix::<f64>::identity(2, 2);
    let ic = DMatrix::<f64>::identity(nc, nc);
    let h = sz.kronecker(&ic) * (p.omega_a / 2.0)
        + i2.kronecker(&num) * p.omega_c
        + sigma_x().kronecker(&x) * p.lambda;
    HermitianMatrix::from_real_symmetric(h)
}

/// `ω_c a†a + ω_m b†b + g (a + a†)² (b + b†)` on cavity ⊗ mechanics.
pub fn build_optomech_hamiltonian(p: &CasimirParams, t: &FockTruncation) -> Result<HermitianMatrix> {
    t.validate(ModelKind::Casimir)?;
    let (nc, nm) = (t.cavity_dim, t.second_dim);
    let a = build_ladder(nc)?;
    let b = build_ladder(nm)?;
    let xa = &a + a.transpose();
    let xb = &b + b.transpose();
    let ic = DMatrix::<f64>::identity(nc, nc);
    let im = DMatrix::<f64>::identity(nm, nm);
    let h = (a.transpose() * &a).kronecker(&im) * p.omega_c
        + ic.kronecker(&(b.transpose() * &b)) * p.omega_m
        + (&xa * &xa).kronecker(&xb) * p.g;
    HermitianMatrix::from_real_symmetric(h)
}

/// Eigenvalues at one frequency ratio plus the gap of the tracked pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSlice {
    pub ratio: f64,
    pub eigenvalues: Vec<f64>,
    pub selected_gap: f64,
}

/// Spectrum at `omega_c = ratio * reference_frequency`, keeping the lowest
/// `levels` eigenvalues.
pub fn spectrum_at(
    model: &ModelConfig,
    ratio: f64,
    pair: (usize, usize),
    levels: usize,
) -> Result<SpectrumSlice> {
    let h = model.hamiltonian_at(ratio * model.reference_frequency())?;
    let values = diagonalize(&h).values;
    let (lo, hi) = pair;
    if lo.max(hi) >= values.len() {
        return Err(Error::ContractViolation(format!(
            "eigenstate pair ({lo},{hi}) outside dimension {}",
            values.len()
        )));
    }
    Ok(SpectrumSlice {
        ratio,
        selected_gap: (values[hi] - values[lo]).abs(),
        eigenvalues: values.into_iter().take(levels.max(lo.max(hi) + 1)).collect(),
    })
}

/// Spectrum slices on a list of ratios, evaluated in parallel; result order
/// follows `ratios`.
pub fn scan_spectrum(
    model: &ModelConfig,
    ratios: &[f64],
    pair: (usize, usize),
    levels: usize,
) -> Result<Vec<SpectrumSlice>> {
    ratios
        .par_iter()
        .map(|&r| spectrum_at(model, r, pair, levels))
        .collect()
}

pub const CROSSING_GRID_POINTS: usize = 201;
pub const CROSSING_RATIO_TOL: f64 = 1e-8;

/// Ratio minimizing the gap of `pair` inside `range`: grid scan followed by
/// golden-section refinement to relative tolerance 1e-8.
pub fn find_avoided_crossing(
    model: &ModelConfig,
    range: (f64, f64),
    pair: (usize, usize),
) -> Result<SpectrumSlice> {
    find_avoided_crossing_with_tol(model, range, pair, CROSSING_RATIO_TOL)
}

/// [`find_avoided_crossing`] with an explicit relative ratio tolerance.
pub fn find_avoided_crossing_with_tol(
    model: &ModelConfig,
    range: (f64, f64),
    pair: (usize, usize),
    tol: f64,
) -> Result<SpectrumSlice> {
    let (lo, hi) = range;
    if !(lo < hi) || lo <= 0.0 {
        return Err(Error::Config(format!("invalid ratio range [{lo}, {hi}]")));
    }
    if model.params.coupling() == 0.0 {
        return Err(Error::NoCrossing(
            "coupling is zero, levels cross without repulsion".into(),
        ));
    }
    let n = CROSSING_GRID_POINTS;
    let ratios: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let gap = |r: f64| spectrum_at(model, r, pair, 0).map(|s| s.selected_gap);
    let gaps = ratios
        .par_iter()
        .map(|&r| gap(r))
        .collect::<Result<Vec<_>>>()?;
    let best = (0..n)
        .min_by(|&a, &b| gaps[a].total_cmp(&gaps[b]))
        .expect("non-empty grid");
    if best == 0 || best == n - 1 {
        return Err(Error::NoCrossing(format!(
            "gap of pair {pair:?} is smallest at the edge of [{lo}, {hi}]"
        )));
    }

    // golden-section search on the bracketing grid cells
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (ratios[best - 1], ratios[best + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = gap(c)?;
    let mut fd = gap(d)?;
    for _ in 0..200 {
        if (b - a).abs() <= tol * 0.5 * (a + b).abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = gap(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = gap(d)?;
        }
    }
    let ratio = if fc < fd { c } else { d };
    let slice = spectrum_at(model, ratio, pair, pair.1 + 1)?;
    let scale = slice
        .eigenvalues
        .iter()
        .fold(model.reference_frequency(), |m, e| m.max(e.abs()));
    if slice.selected_gap <= 1e-12 * scale {
        return Err(Error::NoCrossing(format!(
            "levels {pair:?} become degenerate at ratio {ratio}; no level repulsion"
        )));
    }
    if slice.selected_gap > gaps[0] || slice.selected_gap > gaps[n - 1] {
        return Err(Error::NoCrossing("refined gap exceeds bracket-end gaps".into()));
    }
    Ok(slice)
}

/// Default scan window around the resonance of each model.
pub fn default_ratio_range(kind: ModelKind) -> (f64, f64) {
    match kind {
        ModelKind::ThreePhoton => (0.32, 0.36),
        ModelKind::Casimir => (1.4999, 1.5001),
    }
}
