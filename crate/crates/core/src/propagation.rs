//! Piecewise-constant control sequences and their exact unitary evolution on
//! the full and effective models.

use serde::{Deserialize, Serialize};

use crate::effective::{
    effective_coupling, effective_two_level, frequency_from_detuning, gauge_propagator,
    detuning_from_frequency, detuning_shift, Calibration, EffectiveTwoLevel,
};
use crate::error::{Error, Result};
use crate::linalg::{basis_vector, diagonalize, CMatrix, CVector, HermitianMatrix};
use crate::model::{default_ratio_range, find_avoided_crossing, ModelConfig};
use crate::robustness::ErrorSpec;
use num_complex::Complex64;

/// How the segment controls of a sequence are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Effective detunings Δ_k.
    Detuning,
    /// Physical cavity frequencies ω_{c,k}.
    Frequency,
}

/// `N` controls held for `T/N` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpssSequence {
    pub representation: Representation,
    pub controls: Vec<f64>,
    pub total_time: f64,
}

impl OpssSequence {
    pub fn new(representation: Representation, controls: Vec<f64>, total_time: f64) -> Result<Self> {
        let seq = Self {
            representation,
            controls,
            total_time,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.controls.is_empty() {
            return Err(Error::Config("sequence needs at least one segment".into()));
        }
        if !(self.total_time.is_finite() && self.total_time > 0.0) {
            return Err(Error::Config(format!(
                "total_time must be finite and > 0, got {}",
                self.total_time
            )));
        }
        if let Some(k) = self.controls.iter().position(|c| !c.is_finite()) {
            return Err(Error::Config(format!("control {k} is not finite")));
        }
        if self.representation == Representation::Frequency
            && self.controls.iter().any(|&c| c <= 0.0)
        {
            return Err(Error::Config("cavity frequencies must be > 0".into()));
        }
        Ok(())
    }

    pub fn n_segments(&self) -> usize {
        self.controls.len()
    }

    pub fn segment_duration(&self) -> f64 {
        self.total_time / self.controls.len() as f64
    }

    /// Same sequence in the frequency representation.
    pub fn to_physical(&self, model: &ModelConfig) -> Result<OpssSequence> {
        match self.representation {
            Representation::Frequency => Ok(self.clone()),
            Representation::Detuning => Ok(OpssSequence {
                representation: Representation::Frequency,
                controls: self
                    .controls
                    .iter()
                    .map(|&d| frequency_from_detuning(&model.params, model.variant, d))
                    .collect::<Result<_>>()?,
                total_time: self.total_time,
            }),
        }
    }

    /// Same sequence in the detuning representation.
    pub fn to_detuning(&self, model: &ModelConfig) -> Result<OpssSequence> {
        match self.representation {
            Representation::Detuning => Ok(self.clone()),
            Representation::Frequency => Ok(OpssSequence {
                representation: Representation::Detuning,
                controls: self
                    .controls
                    .iter()
                    .map(|&w| detuning_from_frequency(&model.params, model.variant, w))
                    .collect::<Result<_>>()?,
                total_time: self.total_time,
            }),
        }
    }

    /// The first `k` segments, keeping the segment duration.
    pub fn prefix(&self, k: usize) -> OpssSequence {
        self.sub_sequence(0, k)
    }

    fn sub_sequence(&self, start: usize, end: usize) -> OpssSequence {
        OpssSequence {
            representation: self.representation,
            controls: self.controls[start..end].to_vec(),
            total_time: self.segment_duration() * (end - start) as f64,
        }
    }

    /// Segments `k..N`, keeping the segment duration.
    pub fn suffix(&self, k: usize) -> OpssSequence {
        self.sub_sequence(k, self.controls.len())
    }
}

/// Populations of tracked bare states sampled in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    /// `populations[i][j]` is the population of state `j` at `times[i]`.
    pub populations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub final_state: CVector,
    pub fidelity: f64,
    pub trajectory: Option<Trajectory>,
}

/// `exp(-i H tau)` from the eigendecomposition of `H`.
pub fn segment_propagator(h: &HermitianMatrix, tau: f64) -> Result<CMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::ContractViolation(format!("negative duration {tau}")));
    }
    Ok(diagonalize(h).propagator(tau))
}

fn check_index(model: &ModelConfig, index: usize, what: &str) -> Result<()> {
    if index >= model.dim() {
        return Err(Error::ContractViolation(format!(
            "{what} state index {index} outside dimension {}",
            model.dim()
        )));
    }
    Ok(())
}

fn require_frequency(seq: &OpssSequence) -> Result<()> {
    seq.validate()?;
    if seq.representation != Representation::Frequency {
        return Err(Error::Representation(
            "full-model evolution needs physical frequencies; convert with to_physical".into(),
        ));
    }
    Ok(())
}

/// Full-model evolution from bare state `initial`; fidelity is the population
/// of bare state `target` at `T`.
pub fn evolve_sequence(
    model: &ModelConfig,
    seq: &OpssSequence,
    initial: usize,
    target: usize,
    err: &ErrorSpec,
) -> Result<EvolutionResult> {
    evolve_sampled(model, seq, initial, target, err, 0)
}

/// As [`evolve_sequence`], additionally recording populations of `initial`
/// and `target` at `samples` equally spaced times in `[0, T]`.
pub fn evolve_sampled(
    model: &ModelConfig,
    seq: &OpssSequence,
    initial: usize,
    target: usize,
    err: &ErrorSpec,
    samples: usize,
) -> Result<EvolutionResult> {
    require_frequency(seq)?;
    check_index(model, initial, "initial")?;
    check_index(model, target, "target")?;
    let perturbed = err.apply_to_model(model);
    let tau = seq.segment_duration();
    let sample_times = sample_grid(seq.total_time, samples);
    let mut traj = (samples > 0).then(|| Trajectory {
        labels: vec![model.basis_label(initial), model.basis_label(target)],
        times: sample_times.clone(),
        populations: Vec::with_capacity(samples),
    });

    let mut psi = basis_vector(model.dim(), initial);
    let mut next = 0;
    for (k, &w) in seq.controls.iter().enumerate() {
        let h = perturbed.hamiltonian_at(err.apply_to_control(w))?;
        let eig = diagonalize(&h);
        let start = k as f64 * tau;
        if let Some(tr) = traj.as_mut() {
            let last = k + 1 == seq.n_segments();
            while next < sample_times.len()
                && (sample_times[next] < start + tau || last)
            {
                let state = eig.evolve(&psi, (sample_times[next] - start).max(0.0));
                tr.populations
                    .push(vec![state[initial].norm_sqr(), state[target].norm_sqr()]);
                next += 1;
            }
        }
        psi = eig.evolve(&psi, tau);
    }
    let fidelity = psi[target].norm_sqr().clamp(0.0, 1.0);
    Ok(EvolutionResult {
        final_state: psi,
        fidelity,
        trajectory: traj,
    })
}

fn sample_grid(total: f64, samples: usize) -> Vec<f64> {
    match samples {
        0 => Vec::new(),
        1 => vec![total],
        n => (0..n).map(|i| total * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Transfer fidelity between the model's default initial and target states.
pub fn transfer_fidelity(model: &ModelConfig, seq: &OpssSequence, err: &ErrorSpec) -> Result<f64> {
    evolve_sequence(model, seq, model.initial_index(), model.target_index(), err)
        .map(|r| r.fidelity)
}

/// Evolution on the 2×2 model `[[0, Ω_eff], [Ω_eff, Δ_k + δ]]` where `δ` is
/// `two_level.delta`, a uniform offset applied to every segment.
pub fn evolve_effective(seq: &OpssSequence, two_level: &EffectiveTwoLevel) -> Result<EvolutionResult> {
    evolve_effective_sampled(seq, two_level, 0)
}

pub fn evolve_effective_sampled(
    seq: &OpssSequence,
    two_level: &EffectiveTwoLevel,
    samples: usize,
) -> Result<EvolutionResult> {
    seq.validate()?;
    if seq.representation != Representation::Detuning {
        return Err(Error::Representation(
            "effective evolution needs detunings; convert with to_detuning".into(),
        ));
    }
    let tau = seq.segment_duration();
    let sample_times = sample_grid(seq.total_time, samples);
    let mut pops = Vec::with_capacity(samples);
    let mut psi = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let mut next = 0;
    let n = seq.n_segments();
    for (k, &d) in seq.controls.iter().enumerate() {
        let delta = d + two_level.delta;
        let start = k as f64 * tau;
        while next < sample_times.len() && (sample_times[next] < start + tau || k + 1 == n) {
            let u = gauge_propagator(delta, two_level.omega_eff, (sample_times[next] - start).max(0.0));
            let s = apply2(&u, &psi);
            pops.push(vec![s[0].norm_sqr(), s[1].norm_sqr()]);
            next += 1;
        }
        psi = apply2(&gauge_propagator(delta, two_level.omega_eff, tau), &psi);
    }
    Ok(EvolutionResult {
        final_state: CVector::from_column_slice(&psi),
        fidelity: psi[1].norm_sqr().clamp(0.0, 1.0),
        trajectory: (samples > 0).then(|| Trajectory {
            labels: two_level.basis_labels.to_vec(),
            times: sample_times,
            populations: pops,
        }),
    })
}

fn apply2(u: &[[Complex64; 2]; 2], psi: &[Complex64; 2]) -> [Complex64; 2] {
    [
        u[0][0] * psi[0] + u[0][1] * psi[1],
        u[1][0] * psi[0] + u[1][1] * psi[1],
    ]
}

/// A detuning sequence prepared for repeated effective-model evaluation under
/// frequency errors. Each segment keeps its physical frequency so that errors
/// shift Δ_k and Ω_eff consistently with the full model.
#[derive(Debug, Clone)]
pub struct EffectiveSequence<'a> {
    model: &'a ModelConfig,
    deltas: Vec<f64>,
    frequencies: Vec<f64>,
    tau: f64,
}

impl<'a> EffectiveSequence<'a> {
    pub fn new(model: &'a ModelConfig, seq: &OpssSequence) -> Result<Self> {
        let det = seq.to_detuning(model)?;
        let phys = seq.to_physical(model)?;
        Ok(Self {
            model,
            deltas: det.controls,
            frequencies: phys.controls,
            tau: seq.segment_duration(),
        })
    }

    /// Target population at `T` under `err`.
    pub fn fidelity(&self, err: &ErrorSpec) -> f64 {
        let params = self.model.params;
        let variant = self.model.variant;
        let cal = self.model.calibration.unwrap_or(Calibration::IDENTITY);
        let shifted = params.with_primary_frequency(params.primary_frequency() * (1.0 + err.eps_primary));
        let mut psi = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        for (&d, &w) in self.deltas.iter().zip(&self.frequencies) {
            let delta = d - cal.delta_offset
                + detuning_shift(&params, variant, w, err.eps_primary, err.eps_control);
            let omega = cal.coupling_scale
                * effective_coupling(
                    &shifted.with_control_frequency(w * (1.0 + err.eps_control)),
                    variant,
                );
            psi = apply2(&gauge_propagator(delta, omega, self.tau), &psi);
        }
        psi[1].norm_sqr().clamp(0.0, 1.0)
    }
}

/// Single segment at zero effective detuning, held for the effective π-transfer
/// time `π / (2|Ω_eff|)`.
pub fn baseline_sequence(model: &ModelConfig) -> Result<OpssSequence> {
    let w = frequency_from_detuning(&model.params, model.variant, 0.0)?;
    let omega = effective_two_level(&model.params.with_control_frequency(w), model.variant).omega_eff;
    if omega == 0.0 {
        return Err(Error::Range("effective coupling vanishes".into()));
    }
    OpssSequence::new(
        Representation::Frequency,
        vec![w],
        std::f64::consts::PI / (2.0 * omega.abs()),
    )
}

/// Single segment at the numerically located full-model avoided crossing,
/// held until the first maximum of the target population.
pub fn resonant_full_model_sequence(model: &ModelConfig) -> Result<OpssSequence> {
    let slice = find_avoided_crossing(
        model,
        default_ratio_range(model.kind()),
        model.crossing_pair(),
    )?;
    let w = slice.ratio * model.reference_frequency();
    let eig = diagonalize(&model.hamiltonian_at(w)?);
    let (initial, target) = (model.initial_index(), model.target_index());
    let psi0 = basis_vector(model.dim(), initial);
    let pop = |t: f64| eig.evolve(&psi0, t)[target].norm_sqr();

    // half a period of the splitting, searched in a generous bracket around it
    let t0 = std::f64::consts::PI / slice.selected_gap;
    let n = 3001;
    let grid: Vec<f64> = (0..n)
        .map(|i| t0 * (0.5 + i as f64 / (n - 1) as f64))
        .collect();
    let best = (0..n)
        .max_by(|&a, &b| pop(grid[a]).total_cmp(&pop(grid[b])))
        .expect("non-empty");
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if pop(c) > pop(d) {
            b = d;
        } else {
            a = c;
        }
    }
    OpssSequence::new(Representation::Frequency, vec![w], 0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::{rabi_probability, EffectiveVariant};
    use crate::linalg::identity_deviation;
    use crate::model::{FockTruncation, ModelParams, ThreePhotonParams};

    fn three_photon() -> ModelConfig {
        ModelConfig::new(
            ModelParams::ThreePhoton(ThreePhotonParams {
                omega_a: 1.0,
                omega_c: 1.0 / 3.0,
                lambda: 0.06,
            }),
            FockTruncation::three_photon_default(),
        )
        .unwrap()
    }

    fn level(omega: f64) -> EffectiveTwoLevel {
        EffectiveTwoLevel {
            delta: 0.0,
            omega_eff: omega,
            basis_labels: ["a".into(), "b".into()],
        }
    }

    #[test]
    fn zero_duration_is_identity() {
        let h = three_photon().hamiltonian().unwrap();
        let u = segment_propagator(&h, 0.0).unwrap();
        assert!(identity_deviation(&u) < 1e-12);
        assert!(segment_propagator(&h, -1.0).is_err());
    }

    #[test]
    fn diagonal_hamiltonian_gives_phases() {
        let h = crate::effective::EffectiveMatrix::symmetric(0.3, -1.1, 0.0).to_hermitian();
        let u = segment_propagator(&h, 2.0).unwrap();
        assert!((u[(0, 0)] - Complex64::from_polar(1.0, -0.6)).norm() < 1e-14);
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, 2.2)).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn resonant_quarter_period_transfers() {
        let omega = 0.37;
        let h = crate::effective::EffectiveMatrix::symmetric(0.0, 0.0, omega).to_hermitian();
        let tau = std::f64::consts::PI / (2.0 * omega);
        let u = segment_propagator(&h, tau).unwrap();
        assert!((u[(1, 0)].norm_sqr() - 1.0).abs() < 1e-13);
        assert!((rabi_probability(0.0, 2.0 * omega, tau) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn effective_resonant_transfer_is_complete() {
        let omega: f64 = -1.19e-3;
        let seq = OpssSequence::new(
            Representation::Detuning,
            vec![0.0],
            std::f64::consts::PI / (2.0 * omega.abs()),
        )
        .unwrap();
        let r = evolve_effective(&seq, &level(omega)).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_segments_match_hand_product() {
        let (d, c, t) = (0.002, 0.0011, 900.0);
        let seq = OpssSequence::new(Representation::Detuning, vec![d, -d], t).unwrap();
        let r = evolve_effective(&seq, &level(c)).unwrap();
        // closed-form 2×2 exponentials, multiplied by hand
        let step = |delta: f64, v: [Complex64; 2]| {
            let tau = t / 2.0;
            let r = (c * c + delta * delta / 4.0).sqrt();
            let (s, co) = ((r * tau).sin(), (r * tau).cos());
            let ph = Complex64::from_polar(1.0, -delta * tau / 2.0);
            let i = Complex64::i();
            let u00 = ph * (co + i * s / r * delta / 2.0);
            let u01 = ph * (-i * s / r * c);
            let u11 = ph * (co - i * s / r * delta / 2.0);
            [u00 * v[0] + u01 * v[1], u01 * v[0] + u11 * v[1]]
        };
        let v = step(-d, step(d, [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]));
        assert!((r.final_state[0] - v[0]).norm() < 1e-12);
        assert!((r.final_state[1] - v[1]).norm() < 1e-12);
    }

    #[test]
    fn constant_segments_merge() {
        let (d, c) = (0.0017, -0.0012);
        let seq = OpssSequence::new(Representation::Detuning, vec![d; 5], 2100.0).unwrap();
        let r = evolve_effective(&seq, &level(c)).unwrap();
        assert!((r.fidelity - rabi_probability(d, 2.0 * c, 2100.0)).abs() < 1e-12);
    }

    #[test]
    fn representation_mismatch_is_rejected() {
        let m = three_photon();
        let det = OpssSequence::new(Representation::Detuning, vec![0.0], 10.0).unwrap();
        assert!(matches!(
            transfer_fidelity(&m, &det, &ErrorSpec::none()),
            Err(Error::Representation(_))
        ));
        let freq = det.to_physical(&m).unwrap();
        assert!(matches!(evolve_effective(&freq, &level(1.0)), Err(Error::Representation(_))));
    }

    #[test]
    fn invalid_sequences_are_rejected() {
        assert!(OpssSequence::new(Representation::Detuning, vec![], 1.0).is_err());
        assert!(OpssSequence::new(Representation::Detuning, vec![0.0], 0.0).is_err());
        assert!(OpssSequence::new(Representation::Frequency, vec![-0.3], 1.0).is_err());
    }

    #[test]
    fn baseline_fidelity() {
        let m = three_photon();
        let seq = baseline_sequence(&m).unwrap();
        assert!((seq.total_time - 1319.5).abs() < 1.0, "{}", seq.total_time);
        let f = transfer_fidelity(&m, &seq, &ErrorSpec::none()).unwrap();
        assert!((f - 0.92).abs() < 0.03, "{f}");
    }

    #[test]
    fn full_model_first_maximum() {
        let m = three_photon();
        let seq = resonant_full_model_sequence(&m).unwrap();
        let f = transfer_fidelity(&m, &seq, &ErrorSpec::none()).unwrap();
        assert!(f >= 0.9, "{f}");
        let predicted = baseline_sequence(&m).unwrap().total_time;
        assert!((seq.total_time / predicted - 1.0).abs() < 0.25);
    }

    #[test]
    fn sampled_trajectory_ends_at_final_state() {
        let m = three_photon();
        let seq = OpssSequence::new(Representation::Frequency, vec![0.3438, 0.3442, 0.344], 1400.0).unwrap();
        let r = evolve_sampled(&m, &seq, m.initial_index(), m.target_index(), &ErrorSpec::none(), 50).unwrap();
        let tr = r.trajectory.unwrap();
        assert_eq!(tr.populations.len(), 50);
        assert!((tr.populations[0][0] - 1.0).abs() < 1e-12);
        assert!((tr.populations[49][1] - r.fidelity).abs() < 1e-12);
        assert!((r.final_state.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn effective_sequence_matches_evolve_effective_without_error() {
        let m = three_photon().with_variant(EffectiveVariant::MainText);
        let seq = OpssSequence::new(Representation::Detuning, vec![0.001, -0.002, 0.0], 1700.0).unwrap();
        let omega = effective_coupling(&m.params, m.variant);
        let direct = evolve_effective(&seq, &level(omega)).unwrap().fidelity;
        let prepared = EffectiveSequence::new(&m, &seq).unwrap().fidelity(&ErrorSpec::none());
        assert!((direct - prepared).abs() < 1e-12);
    }
}
