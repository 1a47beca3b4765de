use std::ops::ControlFlow;

use anyhow::bail;
use serde::Serialize;

use opss_core::io::{
    write_flux_csv, write_flux_landscape_csv, write_json_atomic, write_landscape_csv,
    write_spectrum_csv, write_stats_csv, LandscapeSummary, SequenceRecord, StatsRow,
};
use opss_core::model::{find_avoided_crossing, scan_spectrum, ModelConfig, ModelKind};
use opss_core::open_system::{flux_landscape, integrate_master_equation, DissipationConfig};
use opss_core::optimizer::{hybrid_optimize, Progress};
use opss_core::propagation::{baseline_sequence, OpssSequence};
use opss_core::robustness::{
    fidelity_under, scan_landscape, window_stats, ErrorAxis, ErrorSpec, ScanMode,
};

use crate::config::{ConfigError, RunConfig};
use crate::run::Run;

/// A sequence ready for analysis: physical controls plus the model carrying
/// the calibration it was optimized with.
pub struct Subject {
    pub model: ModelConfig,
    pub seq: OpssSequence,
    pub tag: String,
}

pub fn subject(cfg: &RunConfig, base: &ModelConfig) -> anyhow::Result<Subject> {
    match cfg.sequence_record()? {
        Some(rec) => {
            let model = base.clone().with_calibration(rec.calibration);
            let seq = if rec.physical_controls.is_empty() {
                rec.sequence()?.to_physical(&model)?
            } else {
                rec.physical_sequence()?
            };
            Ok(Subject {
                model,
                tag: format!("N={}", seq.n_segments()),
                seq,
            })
        }
        None => {
            if let Some(n) = cfg.segments_hint().filter(|&n| n > 1) {
                bail!(ConfigError(format!(
                    "{n} segments requested but no sequence given; run optimize and pass its sequence.json"
                )));
            }
            Ok(Subject {
                model: base.clone(),
                seq: baseline_sequence(base)?,
                tag: "N=1".into(),
            })
        }
    }
}

fn primary_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::ThreePhoton => "omega_a",
        ModelKind::Casimir => "omega_m",
    }
}

fn axis_name(kind: ModelKind, axis: ErrorAxis) -> String {
    match axis {
        ErrorAxis::Primary => primary_name(kind).into(),
        ErrorAxis::Control => "omega_c".into(),
        other => other.tag().into(),
    }
}

/// Landscape CSV scale and the unit it produces: percent for the
/// three-photon model, units of 1e-5 percent for the Casimir model.
fn eps_scale(kind: ModelKind) -> (f64, &'static str) {
    match kind {
        ModelKind::ThreePhoton => (100.0, "percent"),
        ModelKind::Casimir => (1e7, "1e-5 percent"),
    }
}

#[derive(Serialize)]
struct CrossingReport {
    model: ModelKind,
    pair: (usize, usize),
    ratio: f64,
    omega_c: f64,
    gap: f64,
    eigenvalues: Vec<f64>,
}

pub fn spectrum(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let model = cfg.model_config()?;
    let sp = &cfg.spectrum;
    let (lo, hi) = (sp.ratio_min.unwrap_or(0.0), sp.ratio_max.unwrap_or(0.0));
    let ratios: Vec<f64> = (0..sp.points)
        .map(|i| lo + (hi - lo) * i as f64 / (sp.points - 1) as f64)
        .collect();
    let pair = model.crossing_pair();
    let slices = run.stage("scan", || scan_spectrum(&model, &ratios, pair, sp.levels))?;
    let crossing = run.stage("crossing", || find_avoided_crossing(&model, (lo, hi), pair))?;
    log::info!("avoided crossing of {pair:?} at ratio {}", crossing.ratio);
    write_spectrum_csv(&run.file("spectrum.csv"), &slices)?;
    write_json_atomic(
        &run.file("crossing.json"),
        &CrossingReport {
            model: model.kind(),
            pair,
            ratio: crossing.ratio,
            omega_c: crossing.ratio * model.reference_frequency(),
            gap: crossing.selected_gap,
            eigenvalues: crossing.eigenvalues,
        },
    )?;
    Ok(())
}

pub fn optimize(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let model = cfg.model_config()?;
    let ocfg = cfg.optimizer_config()?;
    let every = (ocfg.de.max_iterations / 10).max(1);
    let outcome = run.stage("optimize", || {
        hybrid_optimize(&model, &ocfg, |p| {
            match p {
                Progress::Generation { report, .. } if report.generation % every == 0 => {
                    log::info!("generation {}: best cost {:.6}", report.generation, report.best.cost)
                }
                Progress::Refined { index, cost } => log::info!("refined member {index}: cost {cost:.6}"),
                _ => {}
            }
            ControlFlow::Continue(())
        })
    })?;
    let m = &outcome.manifest;
    run.convergence
        .insert("de_stopped_early".into(), m.de_stopped_early);
    run.convergence.insert(
        "refine_converged".into(),
        m.refine_converged.get(m.selected).copied().unwrap_or(false),
    );
    log::info!(
        "final cost {:.6}, mean sampled fidelity {:.4}",
        outcome.best.cost,
        outcome.best.mean_fidelity()
    );
    write_json_atomic(&run.file("sequence.json"), &SequenceRecord::from_outcome(&outcome))?;
    write_json_atomic(&run.file("optimization.json"), m)?;
    Ok(())
}

pub fn scan(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let base = cfg.model_config()?;
    let s = subject(cfg, &base)?;
    let grid = cfg.scan.grid.expect("resolved");
    let land = run.stage("scan", || {
        scan_landscape(&s.model, &s.seq, &grid, cfg.scan.mode, &s.tag)
    })?;
    let (scale, unit) = eps_scale(base.kind());
    let summary = LandscapeSummary::new(&land, cfg.scan.threshold, scale);
    log::info!("{}: radius {:e}, mean {:.4}", s.tag, summary.radius, summary.mean);
    run.notes.push(format!("landscape eps columns are in {unit}"));
    write_landscape_csv(&run.file("landscape.csv"), &land, scale)?;
    write_json_atomic(&run.file("radius.json"), &summary)?;
    Ok(())
}

pub fn stats(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let base = cfg.model_config()?;
    let kind = base.kind();
    let main = subject(cfg, &base)?;
    let mut subjects = Vec::new();
    if cfg.stats.include_baseline && main.seq.n_segments() > 1 {
        subjects.push(Subject {
            model: base.clone(),
            seq: baseline_sequence(&base)?,
            tag: "N=1".into(),
        });
    }
    subjects.push(main);
    let st = &cfg.stats;
    let centers = st.centers.clone().unwrap_or_default();
    let rows = run.stage("windows", || -> anyhow::Result<Vec<StatsRow>> {
        let mut rows = Vec::new();
        for s in &subjects {
            for &axis in &st.axes {
                for &c in &centers {
                    let stats = window_stats(&s.model, &s.seq, axis, c, st.samples, st.mode)?;
                    rows.push(StatsRow {
                        n_segments: s.seq.n_segments(),
                        axis: axis_name(kind, axis),
                        stats,
                    });
                }
            }
        }
        Ok(rows)
    })?;
    write_stats_csv(&run.file("stats.csv"), &rows)?;
    write_json_atomic(&run.file("stats.json"), &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct FluxSummary {
    quantity: &'static str,
    dissipation: DissipationConfig,
    n_segments: usize,
    total_time: f64,
    end_flux: f64,
    peak_flux: f64,
    landscape_axis: String,
    landscape_end_flux: Vec<f64>,
    max_trace_error: f64,
    max_hermiticity_error: f64,
    min_eigenvalue: f64,
    total_steps: u64,
}

const FLUX_QUANTITY: &str = "output photon flux kappa * Tr[rho X1^dag X1] itself; \
a 'differential' flux label is read as this quantity, with no time derivative or \
baseline subtraction applied";

pub fn flux(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let base = cfg.model_config()?;
    let s = subject(cfg, &base)?;
    let trunc = cfg.flux.truncation.expect("resolved");
    let model = s.model.with_truncation(trunc)?;
    let d = cfg.dissipation.unwrap_or_default();
    let integ = cfg.flux.integration;
    let trace = run.stage("trace", || {
        integrate_master_equation(
            &model,
            &s.seq,
            &d,
            model.initial_index(),
            &ErrorSpec::none(),
            &integ,
        )
    })?;
    let eps = cfg.flux.eps.expect("resolved").values();
    let land = if eps.is_empty() {
        None
    } else {
        Some(run.stage("landscape", || {
            flux_landscape(&model, &s.seq, &d, cfg.flux.axis, &eps, &integ)
        })?)
    };

    let mut summary = FluxSummary {
        quantity: FLUX_QUANTITY,
        dissipation: d,
        n_segments: s.seq.n_segments(),
        total_time: s.seq.total_time,
        end_flux: trace.end_flux(),
        peak_flux: trace.peak_flux(),
        landscape_axis: axis_name(base.kind(), cfg.flux.axis),
        landscape_end_flux: Vec::new(),
        max_trace_error: trace.max_trace_error,
        max_hermiticity_error: trace.max_hermiticity_error,
        min_eigenvalue: trace.min_eigenvalue,
        total_steps: trace.total_steps,
    };
    write_flux_csv(&run.file("flux.csv"), &trace)?;
    if let Some(land) = &land {
        summary.landscape_end_flux = land.end_flux();
        summary.max_trace_error = summary.max_trace_error.max(land.max_trace_error);
        summary.max_hermiticity_error = summary.max_hermiticity_error.max(land.max_hermiticity_error);
        summary.min_eigenvalue = summary.min_eigenvalue.min(land.min_eigenvalue);
        write_flux_landscape_csv(&run.file("flux_landscape.csv"), land)?;
    }
    run.notes.push(format!("flux quantity: {FLUX_QUANTITY}"));
    write_json_atomic(&run.file("flux.json"), &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct ValidationReport {
    model: ModelKind,
    n_segments: usize,
    total_time: f64,
    fidelity_full: f64,
    fidelity_effective: f64,
    /// Largest relative shift of the lowest levels when every cutoff grows by 2.
    truncation_shift: f64,
}

pub fn validate(run: &mut Run, cfg: &RunConfig) -> anyhow::Result<()> {
    let base = cfg.model_config()?;
    if cfg.segments_hint().is_some() {
        // the seed is only mandatory when actually optimizing
        let mut c = cfg.clone();
        c.seed.get_or_insert(0);
        c.optimizer_config()?;
    }
    let s = subject(cfg, &base)?;
    let none = ErrorSpec::none();
    let report = run.stage("checks", || -> anyhow::Result<ValidationReport> {
        let levels = base.crossing_pair().1 + 1;
        Ok(ValidationReport {
            model: base.kind(),
            n_segments: s.seq.n_segments(),
            total_time: s.seq.total_time,
            fidelity_full: fidelity_under(&s.model, &s.seq, &none, ScanMode::Full)?,
            fidelity_effective: fidelity_under(&s.model, &s.seq, &none, ScanMode::Effective)?,
            truncation_shift: base.truncation_convergence(levels, 2)?,
        })
    })?;
    log::info!(
        "{}: full-model fidelity {:.4}, effective {:.4}, truncation shift {:e}",
        s.tag,
        report.fidelity_full,
        report.fidelity_effective,
        report.truncation_shift
    );
    write_json_atomic(&run.file("validation.json"), &report)?;
    Ok(())
}
