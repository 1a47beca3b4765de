//! Multiplicative frequency errors, fidelity landscapes over error pairs, the
//! high-fidelity radius and windowed fidelity statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::propagation::{transfer_fidelity, EffectiveSequence, OpssSequence, Representation};

/// Largest admissible fractional error.
pub const MAX_ERROR: f64 = 0.1;

/// Fractional errors: the primary frequency (ω_a or ω_m) is scaled by
/// `1 + eps_primary` and every cavity control by `1 + eps_control`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub eps_primary: f64,
    pub eps_control: f64,
}

impl ErrorSpec {
    pub fn new(eps_primary: f64, eps_control: f64) -> Result<Self> {
        for e in [eps_primary, eps_control] {
            if !(e.abs() <= MAX_ERROR) {
                return Err(Error::Config(format!(
                    "fractional error {e} exceeds the bound {MAX_ERROR}"
                )));
            }
        }
        Ok(Self {
            eps_primary,
            eps_control,
        })
    }

    pub const fn none() -> Self {
        Self {
            eps_primary: 0.0,
            eps_control: 0.0,
        }
    }

    pub fn apply_to_params(&self, params: &ModelParams) -> ModelParams {
        params.with_primary_frequency(params.primary_frequency() * (1.0 + self.eps_primary))
    }

    pub fn apply_to_model(&self, model: &ModelConfig) -> ModelConfig {
        model.with_params(self.apply_to_params(&model.params))
    }

    pub fn apply_to_control(&self, omega_c: f64) -> f64 {
        omega_c * (1.0 + self.eps_control)
    }
}

/// Perturbed parameters and physical sequence. Couplings are left unchanged.
pub fn apply_error(
    params: &ModelParams,
    seq: &OpssSequence,
    err: &ErrorSpec,
) -> Result<(ModelParams, OpssSequence)> {
    if seq.representation != Representation::Frequency {
        return Err(Error::Representation(
            "errors act on physical frequencies; convert with to_physical".into(),
        ));
    }
    let controls = seq.controls.iter().map(|&w| err.apply_to_control(w)).collect();
    Ok((
        err.apply_to_params(params),
        OpssSequence {
            controls,
            ..seq.clone()
        },
    ))
}

/// Linear interpolation that returns both end points exactly.
pub fn lerp(lo: f64, hi: f64, t: f64) -> f64 {
    lo * (1.0 - t) + hi * t
}

/// Direction in error space along which a scalar ε is applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorAxis {
    /// ε on the primary frequency only.
    Primary,
    /// ε on the cavity frequency only.
    Control,
    /// The same ε on both.
    Both,
    /// `+ε` on the primary frequency and `−ε` on the cavity frequency.
    #[default]
    AntiCorrelated,
}

impl ErrorAxis {
    pub fn spec(self, eps: f64) -> ErrorSpec {
        match self {
            ErrorAxis::Primary => ErrorSpec { eps_primary: eps, eps_control: 0.0 },
            ErrorAxis::Control => ErrorSpec { eps_primary: 0.0, eps_control: eps },
            ErrorAxis::Both => ErrorSpec { eps_primary: eps, eps_control: eps },
            ErrorAxis::AntiCorrelated => ErrorSpec { eps_primary: eps, eps_control: -eps },
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorAxis::Primary => "primary",
            ErrorAxis::Control => "control",
            ErrorAxis::Both => "both",
            ErrorAxis::AntiCorrelated => "anti_correlated",
        }
    }
}

/// Which model evaluates fidelities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    #[default]
    Full,
    Effective,
}

/// Uniform grid of `points` values in `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn symmetric(extent: f64, points: usize) -> Self {
        Self {
            min: -extent,
            max: extent,
            points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::Config("axis bounds must be finite".into()));
        }
        if self.points >= 2 && !(self.min < self.max) {
            return Err(Error::Config(format!(
                "axis needs min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.min.abs().max(self.max.abs()) > MAX_ERROR {
            return Err(Error::Config(format!("axis exceeds the error bound {MAX_ERROR}")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![0.5 * (self.min + self.max)],
            n => (0..n)
                .map(|i| lerp(self.min, self.max, i as f64 / (n - 1) as f64))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub eps_primary: AxisSpec,
    pub eps_control: AxisSpec,
}

impl GridSpec {
    pub fn square(extent: f64, points: usize) -> Self {
        Self {
            eps_primary: AxisSpec::symmetric(extent, points),
            eps_control: AxisSpec::symmetric(extent, points),
        }
    }
}

/// Fidelity on a 2D grid of (ε_primary, ε_control); `fidelity[i][j]` is at
/// `(eps_axis_1[i], eps_axis_2[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityLandscape {
    pub eps_axis_1: Vec<f64>,
    pub eps_axis_2: Vec<f64>,
    pub fidelity: Vec<Vec<f64>>,
    pub model_tag: String,
    pub sequence_tag: String,
}

impl FidelityLandscape {
    pub fn is_empty(&self) -> bool {
        self.eps_axis_1.is_empty() || self.eps_axis_2.is_empty()
    }

    pub fn mean(&self) -> f64 {
        let n = self.eps_axis_1.len() * self.eps_axis_2.len();
        if n == 0 {
            return 0.0;
        }
        self.fidelity.iter().flatten().sum::<f64>() / n as f64
    }
}

/// Fidelity of `seq` under `err`, on the full or the effective model.
pub fn fidelity_under(
    model: &ModelConfig,
    seq: &OpssSequence,
    err: &ErrorSpec,
    mode: ScanMode,
) -> Result<f64> {
    match mode {
        ScanMode::Full => transfer_fidelity(model, &seq.to_physical(model)?, err),
        ScanMode::Effective => Ok(EffectiveSequence::new(model, seq)?.fidelity(err)),
    }
}

/// Fidelities on every error pair of `grid`, evaluated in parallel.
pub fn scan_landscape(
    model: &ModelConfig,
    seq: &OpssSequence,
    grid: &GridSpec,
    mode: ScanMode,
    sequence_tag: &str,
) -> Result<FidelityLandscape> {
    grid.eps_primary.validate()?;
    grid.eps_control.validate()?;
    let e1 = grid.eps_primary.values();
    let e2 = grid.eps_control.values();
    let physical = seq.to_physical(model)?;
    let prepared = match mode {
        ScanMode::Effective => Some(EffectiveSequence::new(model, seq)?),
        ScanMode::Full => None,
    };
    let pairs: Vec<(f64, f64)> = e1
        .iter()
        .flat_map(|&a| e2.iter().map(move |&b| (a, b)))
        .collect();
    let flat = pairs
        .par_iter()
        .map(|&(a, b)| {
            let err = ErrorSpec {
                eps_primary: a,
                eps_control: b,
            };
            match &prepared {
                Some(eff) => Ok(eff.fidelity(&err)),
                None => transfer_fidelity(model, &physical, &err),
            }
            .map_err(|e| Error::AtGridPoint {
                eps_1: a,
                eps_2: b,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let fidelity = if e2.is_empty() {
        vec![Vec::new(); e1.len()]
    } else {
        flat.chunks(e2.len()).map(<[f64]>::to_vec).collect()
    };
    Ok(FidelityLandscape {
        eps_axis_1: e1,
        eps_axis_2: e2,
        fidelity,
        model_tag: model.kind().tag().to_string(),
        sequence_tag: sequence_tag.to_string(),
    })
}

/// Radius of the largest disc around zero error in which every grid point has
/// fidelity at least `threshold`: the distance of the farthest grid point
/// passed before the first failing one, capped at the inscribed grid extent.
/// Zero if the point nearest the origin fails.
pub fn high_fidelity_radius(land: &FidelityLandscape, threshold: f64) -> f64 {
    if land.is_empty() {
        return 0.0;
    }
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &a) in land.eps_axis_1.iter().enumerate() {
        for (j, &b) in land.eps_axis_2.iter().enumerate() {
            points.push((a.hypot(b), land.fidelity[i][j]));
        }
    }
    points.sort_by(|x, y| x.0.total_cmp(&y.0));
    if points[0].1 < threshold {
        return 0.0;
    }
    let extent = [&land.eps_axis_1, &land.eps_axis_2]
        .iter()
        .map(|ax| {
            let lo = ax.first().copied().unwrap_or(0.0).abs();
            let hi = ax.last().copied().unwrap_or(0.0).abs();
            lo.min(hi)
        })
        .fold(f64::INFINITY, f64::min);
    // points at equal distance form one shell; a shell counts only if all pass
    let first_fail = points
        .iter()
        .find(|p| p.1 < threshold)
        .map_or(f64::INFINITY, |p| p.0);
    let radius = points
        .iter()
        .map(|p| p.0)
        .take_while(|&r| r < first_fail * (1.0 - 1e-12))
        .last()
        .unwrap_or(0.0);
    radius.min(extent)
}

/// Fidelity statistics over a window of errors around `center_eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub center_eps: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// The sample errors of a window: uniform in `[0.9 c, 1.1 c]` (mirrored for
/// negative `c`), or `n` copies of zero when `c = 0`.
pub fn window_samples(center_eps: f64, n_samples: usize) -> Vec<f64> {
    if center_eps == 0.0 {
        return vec![0.0; n_samples];
    }
    let (lo, hi) = if center_eps > 0.0 {
        (0.9 * center_eps, 1.1 * center_eps)
    } else {
        (1.1 * center_eps, 0.9 * center_eps)
    };
    (0..n_samples)
        .map(|i| lerp(lo, hi, i as f64 / (n_samples - 1) as f64))
        .collect()
}

pub fn window_stats(
    model: &ModelConfig,
    seq: &OpssSequence,
    axis: ErrorAxis,
    center_eps: f64,
    n_samples: usize,
    mode: ScanMode,
) -> Result<WindowStats> {
    if n_samples < 3 {
        return Err(Error::Config(format!("window needs >= 3 samples, got {n_samples}")));
    }
    ErrorSpec::new(1.1 * center_eps, 0.0)?;
    let samples = window_samples(center_eps, n_samples);
    let fidelities = if center_eps == 0.0 {
        vec![fidelity_under(model, seq, &ErrorSpec::none(), mode)?]
    } else {
        let physical = seq.to_physical(model)?;
        let prepared = match mode {
            ScanMode::Effective => Some(EffectiveSequence::new(model, seq)?),
            ScanMode::Full => None,
        };
        samples
            .par_iter()
            .map(|&e| {
                let err = axis.spec(e);
                match &prepared {
                    Some(eff) => Ok(eff.fidelity(&err)),
                    None => transfer_fidelity(model, &physical, &err),
                }
            })
            .collect::<Result<Vec<f64>>>()?
    };
    Ok(summarize(center_eps, &fidelities))
}

fn summarize(center_eps: f64, f: &[f64]) -> WindowStats {
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    let min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    WindowStats {
        center_eps,
        mean: mean.clamp(min, max),
        min,
        max,
    }
}
