//! Composite robustness cost and the two-stage search for segmented
//! sequences: differential evolution followed by quasi-Newton refinement of
//! every elite-pool member.

mod de;
mod refine;

use std::ops::ControlFlow;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use de::{differential_evolution, DeConfig, DeOutcome, GenerationReport, Member};
pub use refine::{minimize_box, RefineConfig, RefineOutcome};

use crate::effective::{calibrate_to_full_model, effective_coupling, resonance_frequency, Calibration};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelKind};
use crate::propagation::{transfer_fidelity, EffectiveSequence, OpssSequence, Representation};
use crate::robustness::{lerp, ErrorAxis, ScanMode, MAX_ERROR};

/// Floor applied to `1 − F` inside the logarithmic barrier.
pub const BARRIER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub w_b: f64,
    pub w_f: f64,
    pub w_r: f64,
    pub f_target: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_b: 1.0,
            w_f: 500.0,
            w_r: 5.0,
            f_target: 0.9,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w_b", self.w_b), ("w_f", self.w_f), ("w_r", self.w_r)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("weights.{name} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.f_target) {
            return Err(Error::Config("weights.f_target must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// The three cost components before weighting, and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub barrier: f64,
    pub floor: f64,
    pub robust: f64,
    pub total: f64,
}

pub fn cost_breakdown(fidelities: &[f64], w: &CostWeights) -> CostBreakdown {
    let m = fidelities.len();
    if m == 0 {
        return CostBreakdown {
            barrier: 0.0,
            floor: 0.0,
            robust: 0.0,
            total: 0.0,
        };
    }
    let barrier: f64 = fidelities
        .iter()
        .map(|f| (1.0 - f).max(BARRIER_FLOOR).ln())
        .sum();
    let floor: f64 = fidelities
        .iter()
        .map(|f| (w.f_target - f).max(0.0).powi(2))
        .sum();
    let mean = fidelities.iter().sum::<f64>() / m as f64;
    let robust = (fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
    CostBreakdown {
        barrier,
        floor,
        robust,
        total: w.w_b * barrier + w.w_f * floor + w.w_r * robust,
    }
}

/// `w_b·Σ log(1−F) + w_f·Σ max(0, F_target−F)² + w_r·std(F)`.
pub fn cost(fidelities: &[f64], w: &CostWeights) -> f64 {
    cost_breakdown(fidelities, w).total
}

/// `m` uniform error samples in `[eps_min, eps_max]` along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub m: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    #[serde(default)]
    pub axis: ErrorAxis,
    #[serde(default = "effective_mode")]
    pub evaluator: ScanMode,
}

fn effective_mode() -> ScanMode {
    ScanMode::Effective
}

impl SampleSpec {
    /// 51 samples over ±0.5 % (three-photon) or ±5×10⁻⁸ (Casimir).
    pub fn default_for(kind: ModelKind) -> Self {
        let extent = match kind {
            ModelKind::ThreePhoton => 0.005,
            ModelKind::Casimir => 5e-8,
        };
        Self {
            m: 51,
            eps_min: -extent,
            eps_max: extent,
            axis: ErrorAxis::default(),
            evaluator: ScanMode::Effective,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("sample.m must be >= 2, got {}", self.m)));
        }
        if !(self.eps_min < self.eps_max) {
            return Err(Error::Config(format!(
                "sample needs eps_min < eps_max, got [{}, {}]",
                self.eps_min, self.eps_max
            )));
        }
        if self.eps_min.abs().max(self.eps_max.abs()) > MAX_ERROR {
            return Err(Error::Config(format!("sample range exceeds {MAX_ERROR}")));
        }
        Ok(())
    }

    pub fn samples(&self) -> Vec<f64> {
        (0..self.m)
            .map(|k| lerp(self.eps_min, self.eps_max, k as f64 / (self.m - 1) as f64))
            .collect()
    }
}

/// Box for the detunings and the total duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBounds {
    pub delta_min: f64,
    pub delta_max: f64,
    pub time_min: f64,
    pub time_max: f64,
}

impl ControlBounds {
    /// `Δ_k ∈ ±50|Ω_eff|`, `T ∈ [0.5, 12]·π/|Ω_eff|`, with Ω_eff at resonance.
    pub fn for_model(model: &ModelConfig) -> Result<Self> {
        let w0 = resonance_frequency(&model.params, model.variant);
        let omega = effective_coupling(&model.params.with_control_frequency(w0), model.variant).abs();
        if omega == 0.0 {
            return Err(Error::Range("effective coupling vanishes; no natural bounds".into()));
        }
        let t = std::f64::consts::PI / omega;
        Ok(Self {
            delta_min: -50.0 * omega,
            delta_max: 50.0 * omega,
            time_min: 0.5 * t,
            time_max: 12.0 * t,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_min < self.delta_max) || !(0.0 < self.time_min && self.time_min < self.time_max) {
            return Err(Error::Config(format!("malformed bounds {self:?}")));
        }
        Ok(())
    }

    pub fn to_sequence(&self, u: &[f64]) -> OpssSequence {
        let n = u.len() - 1;
        OpssSequence {
            representation: Representation::Detuning,
            controls: u[..n]
                .iter()
                .map(|v| self.delta_min + v * (self.delta_max - self.delta_min))
                .collect(),
            total_time: self.time_min + u[n] * (self.time_max - self.time_min),
        }
    }

    pub fn to_unit(&self, seq: &OpssSequence) -> Vec<f64> {
        let mut u: Vec<f64> = seq
            .controls
            .iter()
            .map(|d| (d - self.delta_min) / (self.delta_max - self.delta_min))
            .collect();
        u.push((seq.total_time - self.time_min) / (self.time_max - self.time_min));
        u
    }

    pub fn contains(&self, seq: &OpssSequence) -> bool {
        seq.controls
            .iter()
            .all(|d| (self.delta_min..=self.delta_max).contains(d))
            && (self.time_min..=self.time_max).contains(&seq.total_time)
    }
}

/// A detuning sequence with its sampled fidelities and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sequence: OpssSequence,
    pub cost: f64,
    pub fidelity_samples: Vec<f64>,
}

impl Candidate {
    pub fn mean_fidelity(&self) -> f64 {
        self.fidelity_samples.iter().sum::<f64>() / self.fidelity_samples.len().max(1) as f64
    }
}

/// Fidelities of `seq` at every sample of `sample`.
pub fn sample_fidelities(model: &ModelConfig, seq: &OpssSequence, sample: &SampleSpec) -> Result<Vec<f64>> {
    let eps = sample.samples();
    match sample.evaluator {
        ScanMode::Effective => {
            let eff = EffectiveSequence::new(model, seq)?;
            Ok(eps.iter().map(|&e| eff.fidelity(&sample.axis.spec(e))).collect())
        }
        ScanMode::Full => {
            let phys = seq.to_physical(model)?;
            eps.iter()
                .map(|&e| transfer_fidelity(model, &phys, &sample.axis.spec(e)))
                .collect()
        }
    }
}

pub fn evaluate_candidate(
    seq: &OpssSequence,
    model: &ModelConfig,
    sample: &SampleSpec,
    w: &CostWeights,
) -> Result<Candidate> {
    let seq = seq.to_detuning(model)?;
    let fidelity_samples = sample_fidelities(model, &seq, sample)?;
    Ok(Candidate {
        cost: cost(&fidelity_samples, w),
        sequence: seq,
        fidelity_samples,
    })
}

/// Everything that drives one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub n_segments: usize,
    #[serde(default)]
    pub de: DeConfig,
    #[serde(default)]
    pub refine: RefineConfig,
    pub sample: SampleSpec,
    #[serde(default)]
    pub weights: CostWeights,
    /// Defaults to [`ControlBounds::for_model`].
    #[serde(default)]
    pub bounds: Option<ControlBounds>,
    /// Calibrate the effective model against the full-model crossing before
    /// optimizing, unless the model already carries a calibration.
    #[serde(default = "enabled")]
    pub calibrate: bool,
}

fn enabled() -> bool {
    true
}

impl OptimizerConfig {
    pub fn full_defaults(kind: ModelKind, n_segments: usize, seed: u64) -> Self {
        Self {
            n_segments,
            de: DeConfig {
                seed,
                ..DeConfig::default()
            },
            refine: RefineConfig::default(),
            sample: SampleSpec::default_for(kind),
            weights: CostWeights::default(),
            bounds: None,
            calibrate: true,
        }
    }

    /// Reduced budget: population 40, 300 DE generations.
    pub fn desk_defaults(kind: ModelKind, n_segments: usize, seed: u64) -> Self {
        let mut cfg = Self::full_defaults(kind, n_segments, seed);
        cfg.de.population = 40;
        cfg.de.max_iterations = 300;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_segments == 0 {
            return Err(Error::Config("n_segments must be >= 1".into()));
        }
        self.de.validate()?;
        self.refine.validate()?;
        self.sample.validate()?;
        self.weights.validate()?;
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        Ok(())
    }

    /// The model the cost is evaluated on, calibrated if requested.
    pub fn prepare_model(&self, model: &ModelConfig) -> Result<ModelConfig> {
        if self.calibrate && model.calibration.is_none() && self.sample.evaluator == ScanMode::Effective {
            let cal = calibrate_to_full_model(model)?;
            log::info!(
                "effective model calibrated: delta offset {:e}, coupling scale {}",
                cal.delta_offset,
                cal.coupling_scale
            );
            Ok(model.clone().with_calibration(Some(cal)))
        } else {
            Ok(model.clone())
        }
    }

    pub fn resolved_bounds(&self, model: &ModelConfig) -> Result<ControlBounds> {
        match self.bounds {
            Some(b) => Ok(b),
            None => ControlBounds::for_model(model),
        }
    }
}

/// Elite pool of the DE stage, ascending cost.
pub fn de_optimize<H>(
    model: &ModelConfig,
    cfg: &OptimizerConfig,
    mut hook: H,
) -> Result<(Vec<Candidate>, DeOutcome)>
where
    H: FnMut(Progress<'_>) -> ControlFlow<()>,
{
    cfg.validate()?;
    let bounds = cfg.resolved_bounds(model)?;
    let objective = |u: &[f64]| -> Result<f64> {
        let seq = bounds.to_sequence(u);
        Ok(cost(&sample_fidelities(model, &seq, &cfg.sample)?, &cfg.weights))
    };
    let outcome = differential_evolution(cfg.n_segments + 1, &cfg.de, &[], objective, |r| {
        hook(Progress::Generation {
            report: r,
            best: bounds.to_sequence(&r.best.x),
        })
    })?;
    let pool = outcome
        .pool
        .iter()
        .map(|m| evaluate_candidate(&bounds.to_sequence(&m.x), model, &cfg.sample, &cfg.weights))
        .collect::<Result<Vec<_>>>()?;
    Ok((pool, outcome))
}

/// Quasi-Newton refinement inside `bounds`; never returns a higher cost.
pub fn refine(
    candidate: &Candidate,
    model: &ModelConfig,
    bounds: &ControlBounds,
    sample: &SampleSpec,
    w: &CostWeights,
    rc: &RefineConfig,
) -> Result<(Candidate, RefineOutcome)> {
    let start = candidate.sequence.to_detuning(model)?;
    if !bounds.contains(&start) {
        return Err(Error::ContractViolation("refinement start lies outside the bounds".into()));
    }
    let objective = |u: &[f64]| -> Result<f64> {
        Ok(cost(&sample_fidelities(model, &bounds.to_sequence(u), sample)?, w))
    };
    let outcome = minimize_box(&bounds.to_unit(&start), rc, objective)?;
    let refined = evaluate_candidate(&bounds.to_sequence(&outcome.x), model, sample, w)?;
    let input = evaluate_candidate(&start, model, sample, w)?;
    Ok((if refined.cost <= input.cost { refined } else { input }, outcome))
}

/// Progress notifications; the hook may stop the DE stage early.
#[derive(Debug, Clone)]
pub enum Progress<'a> {
    Generation {
        report: GenerationReport<'a>,
        best: OpssSequence,
    },
    Refined {
        index: usize,
        cost: f64,
    },
}

/// Record of one hybrid run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationManifest {
    pub model: ModelKind,
    pub seed: u64,
    pub n_segments: usize,
    pub de: DeConfig,
    pub refine: RefineConfig,
    pub weights: CostWeights,
    pub sample: SampleSpec,
    pub bounds: ControlBounds,
    pub calibration: Option<Calibration>,
    pub de_generations: usize,
    pub de_evaluations: usize,
    pub de_stopped_early: bool,
    pub de_pool_costs: Vec<f64>,
    pub refined_costs: Vec<f64>,
    pub refine_iterations: Vec<usize>,
    pub refine_converged: Vec<bool>,
    pub selected: usize,
    pub final_cost: f64,
    pub physical_controls: Vec<f64>,
    pub de_seconds: f64,
    pub refine_seconds: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct HybridOutcome {
    /// The model the costs were evaluated on.
    pub model: ModelConfig,
    pub best: Candidate,
    pub refined_pool: Vec<Candidate>,
    pub manifest: OptimizationManifest,
}

/// DE, then refine every elite member and keep the lowest cost. Costs are
/// evaluated on [`OptimizerConfig::prepare_model`].
pub fn hybrid_optimize<H>(model: &ModelConfig, cfg: &OptimizerConfig, mut hook: H) -> Result<HybridOutcome>
where
    H: FnMut(Progress<'_>) -> ControlFlow<()>,
{
    let t0 = Instant::now();
    cfg.validate()?;
    let model = &cfg.prepare_model(model)?;
    let bounds = cfg.resolved_bounds(model)?;
    let (pool, de_out) = de_optimize(model, cfg, &mut hook)?;
    let de_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let refined = pool
        .par_iter()
        .map(|c| refine(c, model, &bounds, &cfg.sample, &cfg.weights, &cfg.refine))
        .collect::<Result<Vec<_>>>()?;
    for (i, (c, _)) in refined.iter().enumerate() {
        let _ = hook(Progress::Refined { index: i, cost: c.cost });
    }
    let refine_seconds = t1.elapsed().as_secs_f64();

    let selected = (0..refined.len())
        .min_by(|&a, &b| refined[a].0.cost.total_cmp(&refined[b].0.cost))
        .expect("non-empty pool");
    let best = refined[selected].0.clone();
    let physical_controls = best.sequence.to_physical(model)?.controls;
    let manifest = OptimizationManifest {
        model: model.kind(),
        seed: cfg.de.seed,
        n_segments: cfg.n_segments,
        de: cfg.de,
        refine: cfg.refine,
        weights: cfg.weights,
        sample: cfg.sample,
        bounds,
        calibration: model.calibration,
        de_generations: de_out.generations,
        de_evaluations: de_out.evaluations,
        de_stopped_early: de_out.stopped_early,
        de_pool_costs: pool.iter().map(|c| c.cost).collect(),
        refined_costs: refined.iter().map(|(c, _)| c.cost).collect(),
        refine_iterations: refined.iter().map(|(_, o)| o.iterations).collect(),
        refine_converged: refined.iter().map(|(_, o)| o.converged).collect(),
        selected,
        final_cost: best.cost,
        physical_controls,
        de_seconds,
        refine_seconds,
        wall_seconds: t0.elapsed().as_secs_f64(),
    };
    Ok(HybridOutcome {
        model: model.clone(),
        best,
        refined_pool: refined.into_iter().map(|(c, _)| c).collect(),
        manifest,
    })
}
