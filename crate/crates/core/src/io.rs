//! CSV and JSON exports. CSV files use `,` separators, `.` decimals and a
//! header row; JSON files are written atomically.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::effective::Calibration;
use crate::error::{Error, Result};
use crate::model::{ModelKind, SpectrumSlice};
use crate::open_system::{FluxLandscape, FluxTrace};
use crate::optimizer::{CostWeights, HybridOutcome, SampleSpec};
use crate::propagation::{OpssSequence, Representation, Trajectory};
use crate::robustness::{high_fidelity_radius, FidelityLandscape, WindowStats};

/// Serializes `value` as pretty JSON to a sibling temporary file and renames
/// it into place.
pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn num(x: f64) -> String {
    x.to_string()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// Columns `ratio, E_0 … E_k, gap`.
pub fn write_spectrum_csv(path: &Path, slices: &[SpectrumSlice]) -> Result<()> {
    let levels = slices.first().map_or(0, |s| s.eigenvalues.len());
    let mut w = csv_writer(path)?;
    let mut header = vec!["ratio".to_string()];
    header.extend((0..levels).map(|k| format!("E_{k}")));
    header.push("gap".into());
    w.write_record(&header)?;
    for s in slices {
        let mut row = vec![num(s.ratio)];
        row.extend(s.eigenvalues.iter().map(|&e| num(e)));
        row.push(num(s.selected_gap));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `time` followed by one population column per tracked state.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["time".to_string()];
    header.extend(traj.labels.iter().map(|l| format!("P{l}")));
    w.write_record(&header)?;
    for (t, pops) in traj.times.iter().zip(&traj.populations) {
        let mut row = vec![num(*t)];
        row.extend(pops.iter().map(|&p| num(p)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `eps_1, eps_2, fidelity`; `scale` multiplies both ε columns
/// (e.g. 100 for percent).
pub fn write_landscape_csv(path: &Path, land: &FidelityLandscape, scale: f64) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["eps_1", "eps_2", "fidelity"])?;
    for (i, &e1) in land.eps_axis_1.iter().enumerate() {
        for (j, &e2) in land.eps_axis_2.iter().enumerate() {
            w.write_record([num(e1 * scale), num(e2 * scale), num(land.fidelity[i][j])])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSummary {
    pub model_tag: String,
    pub sequence_tag: String,
    pub threshold: f64,
    pub radius: f64,
    pub points: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Multiplier applied to the ε columns of the CSV.
    pub eps_scale: f64,
}

impl LandscapeSummary {
    pub fn new(land: &FidelityLandscape, threshold: f64, eps_scale: f64) -> Self {
        let all = land.fidelity.iter().flatten().copied();
        Self {
            model_tag: land.model_tag.clone(),
            sequence_tag: land.sequence_tag.clone(),
            threshold,
            radius: high_fidelity_radius(land, threshold),
            points: land.eps_axis_1.len() * land.eps_axis_2.len(),
            mean: land.mean(),
            min: all.clone().fold(f64::INFINITY, f64::min),
            max: all.fold(f64::NEG_INFINITY, f64::max),
            eps_scale,
        }
    }
}

/// One bar of a windowed-statistics chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub n_segments: usize,
    pub axis: String,
    #[serde(flatten)]
    pub stats: WindowStats,
}

pub fn write_stats_csv(path: &Path, rows: &[StatsRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["n_segments", "axis", "center_eps", "mean", "min", "max"])?;
    for r in rows {
        w.write_record([
            r.n_segments.to_string(),
            r.axis.clone(),
            num(r.stats.center_eps),
            num(r.stats.mean),
            num(r.stats.min),
            num(r.stats.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, t_over_T, flux` and the two tracked populations.
pub fn write_flux_csv(path: &Path, trace: &FluxTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "t".to_string(),
        "t_over_T".into(),
        "flux".into(),
        format!("P{}", trace.labels[0]),
        format!("P{}", trace.labels[1]),
    ])?;
    for k in 0..trace.times.len() {
        let [p0, p1] = trace.populations[k];
        w.write_record([
            num(trace.times[k]),
            num(trace.normalized_times[k]),
            num(trace.flux[k]),
            num(p0),
            num(p1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t_over_T, eps, flux`, ε-major.
pub fn write_flux_landscape_csv(path: &Path, land: &FluxLandscape) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t_over_T", "eps", "flux"])?;
    for (e, row) in land.eps.iter().zip(&land.flux) {
        for (t, f) in land.normalized_times.iter().zip(row) {
            w.write_record([num(*t), num(*e), num(*f)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A persisted optimized sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRecord {
    pub model: ModelKind,
    pub n_segments: usize,
    pub representation: Representation,
    pub controls: Vec<f64>,
    pub total_time: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub weights: Option<CostWeights>,
    #[serde(default)]
    pub sample_spec: Option<SampleSpec>,
    #[serde(default)]
    pub cost: Option<f64>,
    #[serde(default)]
    pub fidelity_samples: Vec<f64>,
    /// Cavity frequencies for the same segments.
    #[serde(default)]
    pub physical_controls: Vec<f64>,
    #[serde(default)]
    pub calibration: Option<Calibration>,
}

impl SequenceRecord {
    pub fn from_outcome(out: &HybridOutcome) -> Self {
        let m = &out.manifest;
        let seq = &out.best.sequence;
        Self {
            model: m.model,
            n_segments: seq.n_segments(),
            representation: seq.representation,
            controls: seq.controls.clone(),
            total_time: seq.total_time,
            seed: Some(m.seed),
            weights: Some(m.weights),
            sample_spec: Some(m.sample),
            cost: Some(out.best.cost),
            fidelity_samples: out.best.fidelity_samples.clone(),
            physical_controls: m.physical_controls.clone(),
            calibration: m.calibration,
        }
    }

    pub fn from_sequence(model: ModelKind, seq: &OpssSequence) -> Self {
        Self {
            model,
            n_segments: seq.n_segments(),
            representation: seq.representation,
            controls: seq.controls.clone(),
            total_time: seq.total_time,
            seed: None,
            weights: None,
            sample_spec: None,
            cost: None,
            fidelity_samples: Vec::new(),
            physical_controls: Vec::new(),
            calibration: None,
        }
    }

    pub fn sequence(&self) -> Result<OpssSequence> {
        if self.controls.len() != self.n_segments {
            return Err(Error::Config(format!(
                "n_segments is {} but {} controls are listed",
                self.n_segments,
                self.controls.len()
            )));
        }
        OpssSequence::new(self.representation, self.controls.clone(), self.total_time)
    }

    /// The cavity-frequency form: stored physical controls when present,
    /// otherwise the record itself, which must then already be physical.
    pub fn physical_sequence(&self) -> Result<OpssSequence> {
        if !self.physical_controls.is_empty() {
            return OpssSequence::new(
                Representation::Frequency,
                self.physical_controls.clone(),
                self.total_time,
            );
        }
        let seq = self.sequence()?;
        if seq.representation != Representation::Frequency {
            return Err(Error::Representation(
                "record holds detunings without physical_controls".into(),
            ));
        }
        Ok(seq)
    }
}
