#![allow(dead_code)]

//! Models at the reference parameters and oracle measurements shared by the
//! oracle tests and the acceptance suite.

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use opss_core::effective::{
    calibrate_to_full_model, effective_two_level, gauge_propagator, rabi_probability, Calibration,
};
use opss_core::linalg::{diagonalize, HermitianMatrix};
use opss_core::model::{CasimirParams, FockTruncation, ModelConfig, ModelParams, ThreePhotonParams};
use opss_core::open_system::{
    integrate_master_equation, open_system_truncation, DissipationConfig, IntegrationConfig,
};
use opss_core::optimizer::{cost, evaluate_candidate, hybrid_optimize, OptimizerConfig};
use opss_core::propagation::{
    baseline_sequence, evolve_effective_sampled, evolve_sampled, resonant_full_model_sequence,
    OpssSequence, Representation,
};
use opss_core::robustness::ErrorSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn three_photon() -> ModelConfig {
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

pub fn casimir() -> ModelConfig {
    ModelConfig::new(
        ModelParams::Casimir(CasimirParams {
            omega_c: 1.5,
            omega_m: 1.0,
            g: 0.001,
        }),
        FockTruncation::casimir_default(),
    )
    .unwrap()
}

fn two_level(delta: f64, c: f64) -> HermitianMatrix {
    HermitianMatrix::from_real_symmetric(DMatrix::from_row_slice(2, 2, &[0.0, c, c, delta])).unwrap()
}

/// Largest deviation of the closed-form transition probability from
/// numerically propagating `[[0, Ω/2], [Ω/2, Δ]]` over `n` random triples.
pub fn closed_form_deviation(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let delta = rng.random_range(-2.0..2.0);
            let omega = rng.random_range(1e-3..2.0);
            let t = rng.random_range(0.0..20.0);
            let u = diagonalize(&two_level(delta, omega / 2.0)).propagator(t);
            (u[(1, 0)].norm_sqr() - rabi_probability(delta, omega, t)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest elementwise deviation of the closed-form gauge propagator from the
/// eigendecomposition propagator.
pub fn gauge_propagator_deviation(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let delta = rng.random_range(-2.0..2.0);
        let c = rng.random_range(-1.0..1.0);
        let t = rng.random_range(0.0..20.0);
        let want = diagonalize(&two_level(delta, c)).propagator(t);
        let got = gauge_propagator(delta, c, t);
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((got[i][j] - want[(i, j)]).norm());
            }
        }
    }
    worst
}

/// Largest population deviation between the full three-photon model and the
/// effective model over the N=1 baseline and the full-crossing sequence, for
/// the given calibration.
pub fn trajectory_deviation(m: &ModelConfig, cal: Calibration) -> f64 {
    let mut worst: f64 = 0.0;
    for seq in [baseline_sequence(m).unwrap(), resonant_full_model_sequence(m).unwrap()] {
        let full = evolve_sampled(m, &seq, m.initial_index(), m.target_index(), &ErrorSpec::none(), 401)
            .unwrap()
            .trajectory
            .unwrap();
        let tl = cal.apply(&effective_two_level(
            &m.params.with_control_frequency(seq.controls[0]),
            m.variant,
        ));
        let eff = evolve_effective_sampled(&seq.to_detuning(m).unwrap(), &tl, 401)
            .unwrap()
            .trajectory
            .unwrap();
        for (a, b) in full.populations.iter().zip(&eff.populations) {
            worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
    }
    worst
}

pub fn calibrated_trajectory_deviation() -> (f64, f64) {
    let m = three_photon();
    let cal = calibrate_to_full_model(&m).unwrap();
    (
        trajectory_deviation(&m, Calibration::IDENTITY),
        trajectory_deviation(&m, cal),
    )
}

/// Largest population deviation between the dissipation-free master equation
/// and unitary propagation for a three-segment sequence under errors.
pub fn closed_master_equation_deviation() -> f64 {
    let m = three_photon()
        .with_truncation(open_system_truncation(opss_core::model::ModelKind::ThreePhoton))
        .unwrap();
    let w = baseline_sequence(&m).unwrap().controls[0];
    let seq = OpssSequence::new(
        Representation::Frequency,
        vec![w, w * (1.0 + 2e-3), w * (1.0 - 1e-3)],
        1500.0,
    )
    .unwrap();
    let err = ErrorSpec::new(1e-3, -5e-4).unwrap();
    let cfg = IntegrationConfig {
        samples_per_segment: 8,
        ..Default::default()
    };
    let trace = integrate_master_equation(&m, &seq, &DissipationConfig::closed(), m.initial_index(), &err, &cfg)
        .unwrap();
    let traj = evolve_sampled(&m, &seq, m.initial_index(), m.target_index(), &err, 25)
        .unwrap()
        .trajectory
        .unwrap();
    assert_eq!(trace.populations.len(), traj.populations.len());
    let mut worst: f64 = 0.0;
    for (k, (p, q)) in trace.populations.iter().zip(&traj.populations).enumerate() {
        assert!((trace.times[k] - traj.times[k]).abs() < 1e-9);
        worst = worst.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs());
    }
    worst
}

pub struct OptimizerAudit {
    /// Largest |stored cost − cost recomputed from stored fidelities|.
    pub stored_cost_deviation: f64,
    /// Largest |stored cost − cost of a fresh evaluation of the sequence|.
    pub fresh_cost_deviation: f64,
    /// Whether runs on 1 and 3 worker threads agree bit for bit.
    pub bit_exact: bool,
}

pub fn optimizer_audit() -> OptimizerAudit {
    let m = three_photon();
    let mut cfg = OptimizerConfig::desk_defaults(m.kind(), 3, 5);
    cfg.de.population = 16;
    cfg.de.max_iterations = 20;
    cfg.refine.max_iterations = 30;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| hybrid_optimize(&m, &cfg, |_| ControlFlow::Continue(())).unwrap())
    };
    let a = run(1);
    let b = run(3);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let bit_exact = bits(&a.best.sequence.controls) == bits(&b.best.sequence.controls)
        && a.best.sequence.total_time.to_bits() == b.best.sequence.total_time.to_bits()
        && a.best.cost.to_bits() == b.best.cost.to_bits()
        && bits(&a.manifest.refined_costs) == bits(&b.manifest.refined_costs);

    let mut stored: f64 = 0.0;
    let mut fresh: f64 = 0.0;
    for c in a.refined_pool.iter().chain([&a.best]) {
        stored = stored.max((cost(&c.fidelity_samples, &cfg.weights) - c.cost).abs());
        let again = evaluate_candidate(&c.sequence, &a.model, &cfg.sample, &cfg.weights).unwrap();
        fresh = fresh.max((again.cost - c.cost).abs());
    }
    OptimizerAudit {
        stored_cost_deviation: stored,
        fresh_cost_deviation: fresh,
        bit_exact,
    }
}
