//! Acceptance criteria. Prints one PASS/FAIL line per criterion, with the
//! measured values, and exits non-zero if any criterion fails. Stochastic
//! criteria use the fixed seeds below and are never re-rolled.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::time::Instant;

use opss_core::model::{default_ratio_range, find_avoided_crossing, ModelConfig, ModelKind};
use opss_core::open_system::{
    flux_landscape, integrate_master_equation, open_system_truncation, DissipationConfig,
    FluxLandscape, IntegrationConfig,
};
use opss_core::optimizer::{hybrid_optimize, OptimizerConfig};
use opss_core::propagation::{baseline_sequence, transfer_fidelity, OpssSequence};
use opss_core::robustness::{
    high_fidelity_radius, lerp, scan_landscape, window_stats, ErrorAxis, ErrorSpec, GridSpec,
    ScanMode,
};

const SEED: u64 = 7;
const DESK_SEEDS: [u64; 3] = [1, 2, 3];
const RADIUS_THRESHOLD: f64 = 0.8;
const GRID_POINTS: usize = 41;
const WINDOW_SAMPLES: usize = 101;
const AXES: [ErrorAxis; 2] = [ErrorAxis::Primary, ErrorAxis::Control];

fn axis_name(kind: ModelKind, axis: ErrorAxis) -> &'static str {
    match (kind, axis) {
        (ModelKind::ThreePhoton, ErrorAxis::Primary) => "omega_a",
        (ModelKind::Casimir, ErrorAxis::Primary) => "omega_m",
        (_, ErrorAxis::Control) => "omega_c",
        (_, a) => a.tag(),
    }
}

fn model(kind: ModelKind) -> ModelConfig {
    match kind {
        ModelKind::ThreePhoton => common::three_photon(),
        ModelKind::Casimir => common::casimir(),
    }
}

/// Fractional error scale of each model's scans.
fn scale(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::ThreePhoton => 0.01,
        ModelKind::Casimir => 1e-7,
    }
}

/// Optimized physical sequences, computed once per (model, N, seed, budget).
#[derive(Default)]
struct Runs {
    cache: BTreeMap<(u8, usize, u64, bool), OpssSequence>,
}

impl Runs {
    fn get(&mut self, kind: ModelKind, n: usize, seed: u64, desk: bool) -> OpssSequence {
        let key = (kind as u8, n, seed, desk);
        self.cache
            .entry(key)
            .or_insert_with(|| {
                let m = model(kind);
                let cfg = if desk {
                    OptimizerConfig::desk_defaults(kind, n, seed)
                } else {
                    OptimizerConfig::full_defaults(kind, n, seed)
                };
                let t = Instant::now();
                let out = hybrid_optimize(&m, &cfg, |_| ControlFlow::Continue(())).unwrap();
                let seq = out.best.sequence.to_physical(&out.model).unwrap();
                println!(
                    "    [run] {} N={n} seed={seed} {}: cost {:.4}, T {:.6e}, {:.1} s",
                    kind.tag(),
                    if desk { "desk" } else { "full" },
                    out.best.cost,
                    seq.total_time,
                    t.elapsed().as_secs_f64()
                );
                seq
            })
            .clone()
    }

    /// The unoptimized N=1 sequence or an optimized one.
    fn sequence(&mut self, kind: ModelKind, n: usize) -> OpssSequence {
        if n == 1 {
            baseline_sequence(&model(kind)).unwrap()
        } else {
            self.get(kind, n, SEED, false)
        }
    }
}

struct Suite {
    failed: Vec<u32>,
}

impl Suite {
    fn report(&mut self, id: u32, ok: bool, title: &str, detail: String) {
        println!("{} criterion {id} ({title}): {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id);
        }
    }
}

fn in_band(x: f64, center: f64, tol: f64) -> bool {
    (x - center).abs() <= tol
}

fn line_mean(m: &ModelConfig, seq: &OpssSequence, axis: ErrorAxis, extent: f64) -> f64 {
    let n = WINDOW_SAMPLES;
    (0..n)
        .map(|i| {
            let e = lerp(-extent, extent, i as f64 / (n - 1) as f64);
            transfer_fidelity(m, seq, &axis.spec(e)).unwrap()
        })
        .sum::<f64>()
        / n as f64
}

fn spectrum(suite: &mut Suite) {
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, want, tol) in [
        (ModelKind::ThreePhoton, 0.334, 0.005),
        (ModelKind::Casimir, 1.5000105, 2e-6),
    ] {
        let m = model(kind);
        let slice = find_avoided_crossing(&m, default_ratio_range(kind), m.crossing_pair()).unwrap();
        let pass = in_band(slice.ratio, want, tol);
        ok &= pass;
        parts.push(format!(
            "{} ratio {:.8} (want {want} ± {tol:e}, {}), gap {:.4e}",
            kind.tag(),
            slice.ratio,
            if pass { "ok" } else { "out" },
            slice.selected_gap
        ));
    }
    suite.report(1, ok, "spectrum reproduction", parts.join("; "));
}

fn baseline_fragility(suite: &mut Suite) {
    let m = common::three_photon();
    let seq = baseline_sequence(&m).unwrap();
    let f = |axis: ErrorAxis, e: f64| transfer_fidelity(&m, &seq, &axis.spec(e)).unwrap();
    let f0 = f(ErrorAxis::Primary, 0.0);
    let mut ok = in_band(f0, 0.92, 0.03);
    let mut parts = vec![format!("F(0) {f0:.4}")];
    for axis in AXES {
        let (plus, minus) = (f(axis, 5e-4), f(axis, -5e-4));
        let avg = 0.5 * (plus + minus);
        let far = f(axis, 5e-3).max(f(axis, -5e-3));
        ok &= in_band(avg, 0.90, 0.05) && far <= 0.1;
        parts.push(format!(
            "{}: F(±0.05%) {plus:.4}/{minus:.4} mean {avg:.4}, max F(±0.5%) {far:.4}",
            axis_name(m.kind(), axis)
        ));
    }
    suite.report(2, ok, "baseline fragility", parts.join("; "));
}

fn casimir_baseline(suite: &mut Suite) {
    let m = common::casimir();
    let seq = baseline_sequence(&m).unwrap();
    let mut ok = true;
    let mut parts = vec![format!("F(0) {:.5}", transfer_fidelity(&m, &seq, &ErrorSpec::none()).unwrap())];
    for axis in AXES {
        let s = window_stats(&m, &seq, axis, 0.3e-7, WINDOW_SAMPLES, ScanMode::Full).unwrap();
        ok &= in_band(s.mean, 0.45, 0.1);
        parts.push(format!("{} window mean {:.4}", axis_name(m.kind(), axis), s.mean));
    }
    let anti = window_stats(&m, &seq, ErrorAxis::AntiCorrelated, 0.3e-7, WINDOW_SAMPLES, ScanMode::Full).unwrap();
    parts.push(format!("anti-correlated {:.4} (info)", anti.mean));
    suite.report(3, ok, "Casimir baseline window at 0.3e-7, want 0.45 ± 0.1", parts.join("; "));
}

fn optimization_outcome(suite: &mut Suite, runs: &mut Runs) {
    let m = common::three_photon();
    let seq = runs.get(ModelKind::ThreePhoton, 7, SEED, false);
    let mut ok = true;
    let mut parts = Vec::new();
    for (axis, reference) in [(ErrorAxis::Primary, 0.88), (ErrorAxis::Control, 0.91)] {
        let mean = line_mean(&m, &seq, axis, 0.01);
        let w = window_stats(&m, &seq, axis, 0.005, WINDOW_SAMPLES, ScanMode::Full).unwrap();
        ok &= mean >= 0.8 && in_band(w.mean, reference, 0.05);
        parts.push(format!(
            "{}: mean(±1%) {mean:.4}, window(0.5%) {:.4} vs {reference}",
            axis_name(m.kind(), axis),
            w.mean
        ));
    }
    for seed in DESK_SEEDS {
        let seq = runs.get(ModelKind::ThreePhoton, 7, seed, true);
        let means: Vec<f64> = AXES.iter().map(|&a| line_mean(&m, &seq, a, 0.01)).collect();
        ok &= means.iter().all(|&x| x >= 0.75);
        parts.push(format!("desk seed {seed}: mean(±1%) {:.4}/{:.4}", means[0], means[1]));
    }
    suite.report(4, ok, "N=7 optimization outcome", parts.join("; "));
}

fn radius_monotonicity(suite: &mut Suite, runs: &mut Runs) {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [ModelKind::ThreePhoton, ModelKind::Casimir] {
        let m = model(kind);
        let grid = GridSpec::square(scale(kind), GRID_POINTS);
        let radii: Vec<f64> = [1, 3, 5, 7]
            .iter()
            .map(|&n| {
                let seq = runs.sequence(kind, n);
                let land = scan_landscape(&m, &seq, &grid, ScanMode::Full, &format!("N{n}")).unwrap();
                high_fidelity_radius(&land, RADIUS_THRESHOLD)
            })
            .collect();
        let increasing = radii.windows(2).all(|w| w[1] > w[0]);
        ok &= increasing;
        let shown: Vec<String> = radii.iter().map(|r| format!("{r:.3e}")).collect();
        parts.push(format!(
            "{} radii N=1,3,5,7: {} ({})",
            kind.tag(),
            shown.join(", "),
            if increasing { "increasing" } else { "not increasing" }
        ));
        if kind == ModelKind::Casimir {
            let r7 = radii[3];
            ok &= (0.5e-7..=2e-7).contains(&r7);
            parts.push(format!("Casimir N=7 radius {r7:.3e} vs [5e-8, 2e-7]"));
        }
    }
    suite.report(5, ok, "high-fidelity radius vs N", parts.join("; "));
}

fn open_system(suite: &mut Suite, runs: &mut Runs) {
    let full = common::three_photon();
    let m = full.with_truncation(open_system_truncation(full.kind())).unwrap();
    let d = DissipationConfig::new(6e-5, 6e-5).unwrap();
    let cfg = IntegrationConfig::default();
    let eps: Vec<f64> = (0..21).map(|i| lerp(-0.01, 0.01, i as f64 / 20.0)).collect();
    let center = 10;

    let mut ok = true;
    let mut parts = Vec::new();
    let health = |land: &FluxLandscape| {
        let min_flux = land.flux.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        land.max_trace_error <= 1e-6
            && land.min_eigenvalue >= -1e-8
            && land.max_hermiticity_error <= 1e-9
            && min_flux >= -1e-12
    };

    let n1 = runs.sequence(full.kind(), 1);
    let peak = integrate_master_equation(&m, &n1, &d, m.initial_index(), &ErrorSpec::none(), &cfg)
        .unwrap()
        .peak_flux();
    parts.push(format!("N=1 peak flux at ε=0 {peak:.3e}"));
    let n7 = runs.sequence(full.kind(), 7);
    for axis in AXES {
        let name = axis_name(full.kind(), axis);
        let l1 = flux_landscape(&m, &n1, &d, axis, &eps, &cfg).unwrap();
        let l7 = flux_landscape(&m, &n7, &d, axis, &eps, &cfg).unwrap();
        ok &= health(&l1) && health(&l7);
        parts.push(format!(
            "{name} diagnostics: trace err {:.1e}, min eig {:.1e}, herm err {:.1e}",
            l1.max_trace_error.max(l7.max_trace_error),
            l1.min_eigenvalue.min(l7.min_eigenvalue),
            l1.max_hermiticity_error.max(l7.max_hermiticity_error)
        ));

        let end1 = l1.end_flux();
        let inside: Vec<f64> = eps
            .iter()
            .zip(&end1)
            .filter(|(e, _)| e.abs() <= 0.003 + 1e-12)
            .map(|(_, f)| *f)
            .collect();
        let inside_mean = inside.iter().sum::<f64>() / inside.len() as f64;
        let edge = end1[0].max(end1[20]);
        let ratio = inside_mean / edge;
        ok &= ratio >= 10.0;

        let end7 = l7.end_flux();
        let f0 = end7[center];
        let (lo, hi) = end7
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        let sustained = f0 > 0.0 && lo >= f0 / 3.0 && hi <= 3.0 * f0;
        ok &= sustained;
        parts.push(format!(
            "{name}: N=1 inner/edge end flux {inside_mean:.3e}/{edge:.3e} = {ratio:.1}x; N=7 end flux {lo:.3e}..{hi:.3e} vs Φ(0) {f0:.3e}"
        ));
    }
    suite.report(6, ok, "open-system flux", parts.join("; "));
}

fn oracles(suite: &mut Suite) {
    let closed_form = common::closed_form_deviation(1000, 2024);
    let (raw, calibrated) = common::calibrated_trajectory_deviation();
    let master = common::closed_master_equation_deviation();
    let audit = common::optimizer_audit();
    let ok = closed_form <= 1e-12
        && calibrated <= 0.06
        && master <= 1e-6
        && audit.stored_cost_deviation <= 1e-10
        && audit.fresh_cost_deviation <= 1e-10
        && audit.bit_exact;
    suite.report(
        7,
        ok,
        "oracle equivalence",
        format!(
            "closed form vs propagation {closed_form:.1e}; effective vs full trajectory {calibrated:.4} (uncalibrated formulas {raw:.4}); \
             closed master equation vs unitary {master:.1e}; cost recomputation {:.1e}/{:.1e}; DE bit-exact {}",
            audit.stored_cost_deviation, audit.fresh_cost_deviation, audit.bit_exact
        ),
    );
}

fn main() {
    let start = Instant::now();
    let mut suite = Suite { failed: Vec::new() };
    let mut runs = Runs::default();

    spectrum(&mut suite);
    baseline_fragility(&mut suite);
    casimir_baseline(&mut suite);
    optimization_outcome(&mut suite, &mut runs);
    radius_monotonicity(&mut suite, &mut runs);
    open_system(&mut suite, &mut runs);
    oracles(&mut suite);

    println!(
        "acceptance: {} of 7 criteria passed in {:.0} s",
        7 - suite.failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !suite.failed.is_empty() {
        println!("failed criteria: {:?}", suite.failed);
        std::process::exit(1);
    }
}
