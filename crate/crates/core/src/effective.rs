//! Closed-form effective two-level models of the multiphoton resonances and
//! the detuning map between physical cavity frequency and effective detuning.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::HermitianMatrix;
use crate::model::{
    default_ratio_range, find_avoided_crossing_with_tol, CasimirParams, ModelConfig, ModelParams,
    ThreePhotonParams,
};

/// Which three-photon effective matrix to use. The two differ in their
/// second-order diagonal shifts; the Casimir model has a single form.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveVariant {
    /// Stark shifts `(3λ²/2ω_a, −λ²/ω_c − 9λ²/2ω_a)`, coupling `−9√6 λ³/4ω_a²`.
    #[default]
    MainText,
    /// Stark shifts `(−λ²/2ω_c, −5λ²/2ω_c)`, coupling `−√6 λ³/4ω_c²`.
    Appendix,
}

/// Real symmetric 2×2 matrix on the resonant pair (initial, target).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveMatrix {
    pub entries: [[f64; 2]; 2],
}

impl EffectiveMatrix {
    pub fn symmetric(d0: f64, d1: f64, off: f64) -> Self {
        Self {
            entries: [[d0, off], [off, d1]],
        }
    }

    pub fn coupling(&self) -> f64 {
        self.entries[0][1]
    }

    pub fn splitting_at_zero_detuning(&self) -> f64 {
        2.0 * self.coupling().abs()
    }

    pub fn to_hermitian(&self) -> HermitianMatrix {
        let m = nalgebra::DMatrix::from_fn(2, 2, |i, j| self.entries[i][j]);
        HermitianMatrix::from_real_symmetric(m).expect("2x2 symmetric by construction")
    }
}

/// Effective detuning and Rabi coupling of the resonant pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTwoLevel {
    pub delta: f64,
    pub omega_eff: f64,
    pub basis_labels: [String; 2],
}

/// Interaction-picture Stark shifts and coupling of the `{|e,0>, |g,3>}` pair.
pub fn effective_three_photon(p: &ThreePhotonParams, variant: EffectiveVariant) -> EffectiveMatrix {
    let l2 = p.lambda * p.lambda;
    let l3 = l2 * p.lambda;
    let s6 = 6f64.sqrt();
    match variant {
        EffectiveVariant::MainText => EffectiveMatrix::symmetric(
            1.5 * l2 / p.omega_a,
            -l2 / p.omega_c - 4.5 * l2 / p.omega_a,
            -9.0 * s6 * l3 / (4.0 * p.omega_a * p.omega_a),
        ),
        EffectiveVariant::Appendix => EffectiveMatrix::symmetric(
            -0.5 * l2 / p.omega_c,
            -2.5 * l2 / p.omega_c,
            -s6 * l3 / (4.0 * p.omega_c * p.omega_c),
        ),
    }
}

/// Schrödinger-picture matrix of the `{|2,0>, |0,3>}` pair.
pub fn effective_casimir(p: &CasimirParams) -> EffectiveMatrix {
    let g2 = p.g * p.g;
    EffectiveMatrix::symmetric(
        2.0 * p.omega_c - 27.0 * g2 / p.omega_m,
        3.0 * p.omega_m - 6.0 * g2 / p.omega_m,
        18.0 * 3f64.sqrt() * g2 * p.g / (p.omega_m * p.omega_m),
    )
}

pub fn effective_matrix(params: &ModelParams, variant: EffectiveVariant) -> EffectiveMatrix {
    match params {
        ModelParams::ThreePhoton(p) => effective_three_photon(p, variant),
        ModelParams::Casimir(p) => effective_casimir(p),
    }
}

/// Ω_eff at the parameters' current frequencies.
pub fn effective_coupling(params: &ModelParams, variant: EffectiveVariant) -> f64 {
    effective_matrix(params, variant).coupling()
}

/// Δ and Ω_eff at the parameters' own cavity frequency.
pub fn effective_two_level(params: &ModelParams, variant: EffectiveVariant) -> EffectiveTwoLevel {
    let labels = match params {
        ModelParams::ThreePhoton(_) => ["|e,0>", "|g,3>"],
        ModelParams::Casimir(_) => ["|2,0>", "|0,3>"],
    };
    EffectiveTwoLevel {
        delta: raw_detuning(params, variant, params.control_frequency()),
        omega_eff: effective_coupling(params, variant),
        basis_labels: labels.map(String::from),
    }
}

/// Transition probability of a detuned two-level system driven at Rabi
/// frequency `omega`.
pub fn rabi_probability(delta: f64, omega: f64, t: f64) -> f64 {
    let w2 = omega * omega + delta * delta;
    if w2 == 0.0 {
        return 0.0;
    }
    let s = (w2.sqrt() * t / 2.0).sin();
    omega * omega / w2 * s * s
}

fn raw_detuning(params: &ModelParams, variant: EffectiveVariant, omega_c: f64) -> f64 {
    match (params, variant) {
        (ModelParams::ThreePhoton(p), EffectiveVariant::MainText) => {
            let l2 = p.lambda * p.lambda;
            (p.omega_a - 3.0 * omega_c) + l2 / omega_c + 6.0 * l2 / p.omega_a
        }
        (ModelParams::ThreePhoton(p), EffectiveVariant::Appendix) => {
            (p.omega_a - 3.0 * omega_c) + 2.0 * p.lambda * p.lambda / omega_c
        }
        (ModelParams::Casimir(p), _) => 3.0 * p.omega_m - 2.0 * omega_c + 21.0 * p.g * p.g / p.omega_m,
    }
}

fn raw_detuning_derivative(params: &ModelParams, variant: EffectiveVariant, omega_c: f64) -> f64 {
    match (params, variant) {
        (ModelParams::ThreePhoton(p), EffectiveVariant::MainText) => {
            -3.0 - p.lambda * p.lambda / (omega_c * omega_c)
        }
        (ModelParams::ThreePhoton(p), EffectiveVariant::Appendix) => {
            -3.0 - 2.0 * p.lambda * p.lambda / (omega_c * omega_c)
        }
        (ModelParams::Casimir(_), _) => -2.0,
    }
}

/// Cavity frequency at which the effective detuning vanishes.
pub fn resonance_frequency(params: &ModelParams, variant: EffectiveVariant) -> f64 {
    solve_detuning(params, variant, 0.0)
}

fn solve_detuning(params: &ModelParams, variant: EffectiveVariant, delta: f64) -> f64 {
    match params {
        ModelParams::Casimir(p) => (3.0 * p.omega_m + 21.0 * p.g * p.g / p.omega_m - delta) / 2.0,
        ModelParams::ThreePhoton(p) => {
            // Δ is strictly decreasing in ω_c; start from the bare solution
            let mut w = ((p.omega_a - delta) / 3.0).max(1e-3 * p.omega_a);
            for _ in 0..100 {
                let r = raw_detuning(params, variant, w) - delta;
                let step = r / raw_detuning_derivative(params, variant, w);
                let next = w - step;
                w = if next > 0.0 { next } else { 0.5 * w };
                if step.abs() <= 1e-16 * w {
                    break;
                }
            }
            w
        }
    }
}

fn control_window(params: &ModelParams, variant: EffectiveVariant) -> (f64, f64) {
    let w0 = resonance_frequency(params, variant);
    (0.9 * w0, 1.1 * w0)
}

/// Effective detuning Δ(ω_c). The control must lie within ±10 % of the
/// resonance frequency.
pub fn detuning_from_frequency(
    params: &ModelParams,
    variant: EffectiveVariant,
    omega_control: f64,
) -> Result<f64> {
    let (lo, hi) = control_window(params, variant);
    if !(lo..=hi).contains(&omega_control) {
        return Err(Error::Range(format!(
            "control frequency {omega_control} outside the window [{lo}, {hi}]"
        )));
    }
    Ok(raw_detuning(params, variant, omega_control))
}

/// Inverse of [`detuning_from_frequency`].
pub fn frequency_from_detuning(
    params: &ModelParams,
    variant: EffectiveVariant,
    delta_target: f64,
) -> Result<f64> {
    let (lo, hi) = control_window(params, variant);
    let w = solve_detuning(params, variant, delta_target);
    if !w.is_finite() || !(lo..=hi).contains(&w) {
        return Err(Error::Range(format!(
            "detuning {delta_target} is not reachable within the control window [{lo}, {hi}]"
        )));
    }
    let residual = (raw_detuning(params, variant, w) - delta_target).abs();
    if residual > 1e-12 * params.primary_frequency() {
        return Err(Error::Numerical(format!(
            "detuning inversion residual {residual:e} at delta {delta_target}"
        )));
    }
    Ok(w)
}

/// Change of Δ when the primary frequency is scaled by `1 + eps_1` and the
/// cavity frequency `omega_c` by `1 + eps_2`, evaluated without cancellation.
pub fn detuning_shift(
    params: &ModelParams,
    variant: EffectiveVariant,
    omega_c: f64,
    eps_1: f64,
    eps_2: f64,
) -> f64 {
    // 1/(1+ε) − 1
    let inv = |e: f64| -e / (1.0 + e);
    match (params, variant) {
        (ModelParams::ThreePhoton(p), EffectiveVariant::MainText) => {
            let l2 = p.lambda * p.lambda;
            p.omega_a * eps_1 - 3.0 * omega_c * eps_2
                + l2 / omega_c * inv(eps_2)
                + 6.0 * l2 / p.omega_a * inv(eps_1)
        }
        (ModelParams::ThreePhoton(p), EffectiveVariant::Appendix) => {
            p.omega_a * eps_1 - 3.0 * omega_c * eps_2 + 2.0 * p.lambda * p.lambda / omega_c * inv(eps_2)
        }
        (ModelParams::Casimir(p), _) => {
            3.0 * p.omega_m * eps_1 - 2.0 * omega_c * eps_2 + 21.0 * p.g * p.g / p.omega_m * inv(eps_1)
        }
    }
}

/// Correction of the effective model against the full-model spectrum: the
/// calibrated detuning is `Δ − delta_offset` and the coupling is scaled by
/// `coupling_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub delta_offset: f64,
    pub coupling_scale: f64,
}

impl Calibration {
    pub const IDENTITY: Calibration = Calibration {
        delta_offset: 0.0,
        coupling_scale: 1.0,
    };

    pub fn apply(&self, two_level: &EffectiveTwoLevel) -> EffectiveTwoLevel {
        EffectiveTwoLevel {
            delta: two_level.delta - self.delta_offset,
            omega_eff: two_level.omega_eff * self.coupling_scale,
            basis_labels: two_level.basis_labels.clone(),
        }
    }
}

/// Calibration placing the effective resonance at the full-model avoided
/// crossing and matching the resonant splitting to the minimum gap.
pub fn calibrate_to_full_model(model: &ModelConfig) -> Result<Calibration> {
    // the offset must resolve a small fraction of Ω_eff, far below the scan tolerance
    let slice = find_avoided_crossing_with_tol(
        model,
        default_ratio_range(model.kind()),
        model.crossing_pair(),
        1e-13,
    )?;
    let w = slice.ratio * model.reference_frequency();
    let omega = effective_coupling(&model.params.with_control_frequency(w), model.variant);
    if omega == 0.0 {
        return Err(Error::Range("effective coupling vanishes".into()));
    }
    Ok(Calibration {
        delta_offset: raw_detuning(&model.params, model.variant, w),
        coupling_scale: slice.selected_gap / (2.0 * omega.abs()),
    })
}

/// Propagator of `[[0, c], [c, Δ]]` over `tau`, row-major.
pub fn gauge_propagator(delta: f64, coupling: f64, tau: f64) -> [[Complex64; 2]; 2] {
    let half = delta / 2.0;
    let r = (coupling * coupling + half * half).sqrt();
    let cos = (r * tau).cos();
    // sin(rτ)/r, continuous at r = 0
    let sinc = if r * tau.abs() < 1e-8 {
        tau
    } else {
        (r * tau).sin() / r
    };
    let phase = Complex64::from_polar(1.0, -half * tau);
    let i = Complex64::i();
    [
        [
            phase * (cos + i * sinc * half),
            phase * (-i * sinc * coupling),
        ],
        [
            phase * (-i * sinc * coupling),
            phase * (cos - i * sinc * half),
        ],
    ]
}
