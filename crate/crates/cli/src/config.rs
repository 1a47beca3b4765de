//! Run configuration: one JSON document, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use opss_core::effective::EffectiveVariant;
use opss_core::io::SequenceRecord;
use opss_core::model::{
    default_ratio_range, CasimirParams, FockTruncation, ModelConfig, ModelKind, ModelParams,
    ThreePhotonParams,
};
use opss_core::open_system::{open_system_truncation, DissipationConfig, IntegrationConfig};
use opss_core::optimizer::{ControlBounds, CostWeights, OptimizerConfig, SampleSpec};
use opss_core::optimizer::{DeConfig, RefineConfig};
use opss_core::robustness::{AxisSpec, ErrorAxis, GridSpec, ScanMode};

/// Raised for malformed or inconsistent configuration; maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<FockTruncation>,
    #[serde(default)]
    pub variant: EffectiveVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissipation: Option<DissipationConfig>,
    #[serde(default)]
    pub spectrum: SpectrumBlock,
    #[serde(default)]
    pub scan: ScanBlock,
    #[serde(default)]
    pub stats: StatsBlock,
    #[serde(default)]
    pub flux: FluxBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// Where a previously optimized sequence comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSource {
    Inline(SequenceRecord),
    /// Path to a sequence JSON file; relative paths resolve against the
    /// config file's directory.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Population 100, 1500 generations.
    #[default]
    Full,
    /// Population 40, 300 generations.
    Desk,
}

/// Optimizer settings. `de`, when given, replaces the budget's DE settings
/// wholesale (its own missing fields take the full-budget defaults).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_segments: Option<usize>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub de: Option<DeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<RefineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<CostWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ControlBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumBlock {
    /// Bounds of `omega_c / omega_ref`; default to a window around resonance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_max: Option<f64>,
    pub points: usize,
    pub levels: usize,
}

impl Default for SpectrumBlock {
    fn default() -> Self {
        Self {
            ratio_min: None,
            ratio_max: None,
            points: 401,
            levels: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanBlock {
    /// Defaults to 41 x 41 points over ±1 % (three-photon) or ±1e-7 (Casimir).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub threshold: f64,
    pub mode: ScanMode,
}

impl Default for ScanBlock {
    fn default() -> Self {
        Self {
            grid: None,
            threshold: 0.8,
            mode: ScanMode::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsBlock {
    /// Window centers; default {0, 0.1, 0.5, 1} % (three-photon) or
    /// {0.3, 0.6, 1.0}e-7 (Casimir).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<f64>>,
    pub samples: usize,
    pub axes: Vec<ErrorAxis>,
    pub mode: ScanMode,
    /// Also report the single-segment baseline when the sequence has N > 1.
    pub include_baseline: bool,
}

impl Default for StatsBlock {
    fn default() -> Self {
        Self {
            centers: None,
            samples: 101,
            axes: vec![ErrorAxis::Primary, ErrorAxis::Control],
            mode: ScanMode::Full,
            include_baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluxBlock {
    /// Error values of the landscape; default 21 points over ±1 %
    /// (three-photon) or ±1e-7 (Casimir). Zero points skips the landscape.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<AxisSpec>,
    pub axis: ErrorAxis,
    pub integration: IntegrationConfig,
    /// Cutoff of the master-equation runs; defaults to a reduced truncation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<FockTruncation>,
}

impl Default for FluxBlock {
    fn default() -> Self {
        Self {
            eps: None,
            axis: ErrorAxis::Primary,
            integration: IntegrationConfig::default(),
            truncation: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub model: Option<ModelKind>,
    pub segments: Option<usize>,
    pub sequence: Option<PathBuf>,
}

pub fn reference_params(kind: ModelKind) -> ModelParams {
    match kind {
        ModelKind::ThreePhoton => ModelParams::ThreePhoton(ThreePhotonParams {
            omega_a: 1.0,
            omega_c: 1.0 / 3.0,
            lambda: 0.06,
        }),
        ModelKind::Casimir => ModelParams::Casimir(CasimirParams {
            omega_c: 1.5,
            omega_m: 1.0,
            g: 0.001,
        }),
    }
}

/// Parses a config document, reporting the JSON path of the first bad field.
pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(format!("at `{path}`: {}", e.into_inner()))
    })
}

pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = parse(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(SequenceSource::File(p)) = &mut cfg.sequence {
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                *p = dir.join(&*p);
            }
        }
    }
    Ok(cfg)
}

impl RunConfig {
    /// Applies flag overrides and fills every model-dependent default, so the
    /// result reproduces the run when fed back as a config file.
    pub fn resolve(mut self, o: &Overrides) -> anyhow::Result<RunConfig> {
        if let Some(kind) = o.model {
            if self.model.map(|m| m.kind()) != Some(kind) {
                self.model = Some(reference_params(kind));
                self.truncation = None;
            }
        }
        let params = self
            .model
            .unwrap_or_else(|| reference_params(ModelKind::ThreePhoton));
        self.model = Some(params);
        let kind = params.kind();
        self.truncation.get_or_insert(FockTruncation::default_for(kind));
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if let Some(p) = &o.sequence {
            self.sequence = Some(SequenceSource::File(p.clone()));
        }
        if let Some(SequenceSource::File(p)) = &mut self.sequence {
            *p = fs::canonicalize(&*p).map_err(|e| {
                config_err(format!("sequence file {} is not readable: {e}", p.display()))
            })?;
        }
        if let Some(n) = o.segments {
            self.optimizer.get_or_insert_with(Default::default).n_segments = Some(n);
        }
        if let Some(opt) = &mut self.optimizer {
            let seed = self.seed.unwrap_or(0);
            let base = match opt.budget {
                Budget::Full => OptimizerConfig::full_defaults(kind, 1, seed),
                Budget::Desk => OptimizerConfig::desk_defaults(kind, 1, seed),
            };
            let de = opt.de.get_or_insert(base.de);
            de.seed = seed;
            opt.refine.get_or_insert(base.refine);
            opt.sample.get_or_insert(base.sample);
            opt.weights.get_or_insert(base.weights);
            opt.calibrate.get_or_insert(base.calibrate);
        }

        let (lo, hi) = default_ratio_range(kind);
        self.spectrum.ratio_min.get_or_insert(lo);
        self.spectrum.ratio_max.get_or_insert(hi);
        let extent = match kind {
            ModelKind::ThreePhoton => 0.01,
            ModelKind::Casimir => 1e-7,
        };
        self.scan.grid.get_or_insert(GridSpec::square(extent, 41));
        self.stats.centers.get_or_insert_with(|| match kind {
            ModelKind::ThreePhoton => vec![0.0, 0.001, 0.005, 0.01],
            ModelKind::Casimir => vec![0.3e-7, 0.6e-7, 1.0e-7],
        });
        self.flux.eps.get_or_insert(AxisSpec::symmetric(extent, 21));
        self.flux
            .truncation
            .get_or_insert(open_system_truncation(kind));
        Ok(self)
    }

    /// Model of a resolved config.
    pub fn model_config(&self) -> anyhow::Result<ModelConfig> {
        let params = self.model.context("model is not resolved")?;
        let trunc = self.truncation.context("truncation is not resolved")?;
        Ok(ModelConfig::new(params, trunc)?.with_variant(self.variant))
    }

    pub fn segments_hint(&self) -> Option<usize> {
        self.optimizer.as_ref().and_then(|o| o.n_segments)
    }

    pub fn optimizer_config(&self) -> anyhow::Result<OptimizerConfig> {
        let kind = self.model.context("model is not resolved")?.kind();
        let Some(seed) = self.seed else {
            bail!(config_err("optimize needs a seed (config `seed` or --seed)"));
        };
        let opt = self.optimizer.clone().unwrap_or_default();
        let Some(n) = opt.n_segments else {
            bail!(config_err(
                "optimize needs a segment count (config `optimizer.n_segments` or --segments)"
            ));
        };
        let mut cfg = OptimizerConfig::full_defaults(kind, n, seed);
        cfg.de = opt.de.unwrap_or(cfg.de);
        cfg.de.seed = seed;
        cfg.refine = opt.refine.unwrap_or(cfg.refine);
        cfg.sample = opt.sample.unwrap_or(cfg.sample);
        cfg.weights = opt.weights.unwrap_or(cfg.weights);
        cfg.bounds = opt.bounds;
        cfg.calibrate = opt.calibrate.unwrap_or(cfg.calibrate);
        cfg.validate()
            .map_err(|e| config_err(format!("optimizer: {e}")))?;
        Ok(cfg)
    }

    /// The stored sequence, if any.
    pub fn sequence_record(&self) -> anyhow::Result<Option<SequenceRecord>> {
        let rec = match &self.sequence {
            None => return Ok(None),
            Some(SequenceSource::Inline(r)) => r.clone(),
            Some(SequenceSource::File(p)) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    config_err(format!("cannot read sequence {}: {e}", p.display()))
                })?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                serde_path_to_error::deserialize(de).map_err(|e| {
                    let path = e.path().to_string();
                    config_err(format!("sequence {} at `{path}`: {}", p.display(), e.into_inner()))
                })?
            }
        };
        let kind = self.model.context("model is not resolved")?.kind();
        if rec.model != kind {
            bail!(config_err(format!(
                "sequence was optimized for {} but the model is {kind}",
                rec.model
            )));
        }
        if let Some(n) = self.segments_hint() {
            if n != rec.n_segments {
                bail!(config_err(format!(
                    "--segments {n} disagrees with the sequence, which has {}",
                    rec.n_segments
                )));
            }
        }
        Ok(Some(rec))
    }

    /// Checks that the analysis blocks are well formed.
    pub fn validate_blocks(&self) -> anyhow::Result<()> {
        let sp = &self.spectrum;
        if sp.points < 2 {
            bail!(config_err(format!("spectrum.points must be >= 2, got {}", sp.points)));
        }
        if let (Some(lo), Some(hi)) = (sp.ratio_min, sp.ratio_max) {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                bail!(config_err(format!("spectrum ratio range [{lo}, {hi}] is malformed")));
            }
        }
        if let Some(g) = &self.scan.grid {
            for (name, a) in [("eps_primary", g.eps_primary), ("eps_control", g.eps_control)] {
                if a.points == 0 {
                    bail!(config_err(format!("scan.grid.{name}.points must be >= 1")));
                }
                a.validate()
                    .map_err(|e| config_err(format!("scan.grid.{name}: {e}")))?;
            }
        }
        if !(0.0..=1.0).contains(&self.scan.threshold) {
            bail!(config_err(format!(
                "scan.threshold must lie in [0, 1], got {}",
                self.scan.threshold
            )));
        }
        if self.stats.samples < 3 {
            bail!(config_err(format!("stats.samples must be >= 3, got {}", self.stats.samples)));
        }
        if self.stats.axes.is_empty() {
            bail!(config_err("stats.axes must not be empty"));
        }
        if let Some(c) = &self.stats.centers {
            if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
                bail!(config_err("stats.centers must be a non-empty list of finite values"));
            }
        }
        if let Some(e) = &self.flux.eps {
            e.validate()
                .map_err(|err| config_err(format!("flux.eps: {err}")))?;
        }
        self.flux
            .integration
            .validate()
            .map_err(|e| config_err(format!("flux.integration: {e}")))?;
        if let Some(d) = &self.dissipation {
            d.validate()
                .map_err(|e| config_err(format!("dissipation: {e}")))?;
        }
        if self.workers == Some(0) {
            bail!(config_err("workers must be >= 1"));
        }
        if let Some(opt) = &self.optimizer {
            if opt.n_segments == Some(0) {
                bail!(config_err("optimizer.n_segments must be >= 1"));
            }
        }
        Ok(())
    }
}
