//! Dressed-state Lindblad dynamics for piecewise-constant Hamiltonians and the
//! cavity output photon flux.
//!
//! Within a segment the generator is constant, so a fixed-step RK4 step is the
//! linear map `R(hL) = I + z + z²/2 + z³/6 + z⁴/24` with `z = hL` acting on the
//! row-major vectorization of ρ. Many identical steps are taken by squaring
//! that matrix instead of looping over them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diagonalize, hermiticity_error, CMatrix, HermitianMatrix};
use crate::model::{FockTruncation, ModelConfig, ModelKind};
use crate::propagation::{OpssSequence, Representation};
use crate::robustness::{ErrorAxis, ErrorSpec};

/// Relative tolerance for treating two dressed energies as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Trace drift beyond this aborts an integration.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-5;

/// Photon decay rate `kappa` and qubit or phonon decay rate `gamma`, in units
/// of the model reference frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipationConfig {
    pub kappa: f64,
    pub gamma: f64,
}

impl DissipationConfig {
    pub fn new(kappa: f64, gamma: f64) -> Result<Self> {
        let d = Self { kappa, gamma };
        d.validate()?;
        Ok(d)
    }

    pub const fn closed() -> Self {
        Self {
            kappa: 0.0,
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa", self.kappa), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for DissipationConfig {
    fn default() -> Self {
        Self {
            kappa: 6e-5,
            gamma: 6e-5,
        }
    }
}

/// Smaller truncation used for master-equation runs; the superoperator grows
/// with the fourth power of the cutoff.
pub fn open_system_truncation(kind: ModelKind) -> FockTruncation {
    match kind {
        ModelKind::ThreePhoton => FockTruncation {
            cavity_dim: 10,
            second_dim: 2,
        },
        ModelKind::Casimir => FockTruncation {
            cavity_dim: 5,
            second_dim: 6,
        },
    }
}

/// A density matrix with its diagnostics.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub entries: CMatrix,
}

impl DensityMatrix {
    pub fn pure(dim: usize, index: usize) -> Self {
        let mut entries = CMatrix::zeros(dim, dim);
        entries[(index, index)] = Complex64::new(1.0, 0.0);
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.entries)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        sym.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        (&self.entries * &self.entries).trace().re
    }

    pub fn population(&self, index: usize) -> f64 {
        self.entries[(index, index)].re
    }

    fn from_vec(v: &DVector<Complex64>, dim: usize) -> Self {
        Self {
            entries: CMatrix::from_fn(dim, dim, |i, j| v[i * dim + j]),
        }
    }

    fn to_vec(&self) -> DVector<Complex64> {
        let d = self.dim();
        DVector::from_fn(d * d, |k, _| self.entries[(k / d, k % d)])
    }
}

/// Jump operators built from the eigenbasis of one Hamiltonian.
#[derive(Debug, Clone)]
pub struct JumpOperators {
    pub x1: CMatrix,
    pub x2: CMatrix,
    pub energies: Vec<f64>,
    /// Unordered eigenvalue pairs dropped as degenerate.
    pub degenerate_pairs: usize,
}

/// `X = Σ_{E_n > E_m} ⟨ψ_m|O|ψ_n⟩ |ψ_m⟩⟨ψ_n|` for `O = a + a†` and for `σ_x`
/// or `b + b†`, expressed in the bare basis.
pub fn dressed_jump_operators(h: &HermitianMatrix, model: &ModelConfig) -> Result<JumpOperators> {
    if h.dim() != model.dim() {
        return Err(Error::ContractViolation(format!(
            "Hamiltonian has dimension {}, model expects {}",
            h.dim(),
            model.dim()
        )));
    }
    let eig = diagonalize(h);
    let tol = DEGENERACY_TOL * model.reference_frequency();
    let v = &eig.vectors;
    let n = eig.dim();

    let mut degenerate_pairs = 0;
    for i in 0..n {
        for j in i + 1..n {
            if (eig.values[j] - eig.values[i]).abs() <= tol {
                degenerate_pairs += 1;
            }
        }
    }
    if degenerate_pairs > 0 {
        log::debug!("{degenerate_pairs} degenerate eigenvalue pairs excluded from jump operators");
    }

    let lowering = |op: DMatrix<f64>| -> CMatrix {
        let op = op.map(|x| Complex64::new(x, 0.0));
        let mut q = v.adjoint() * op * v;
        for m in 0..n {
            for k in 0..n {
                if eig.values[k] <= eig.values[m] + tol {
                    q[(m, k)] = Complex64::new(0.0, 0.0);
                }
            }
        }
        v * q * v.adjoint()
    };
    Ok(JumpOperators {
        x1: lowering(model.cavity_quadrature()?),
        x2: lowering(model.second_quadrature()?),
        energies: eig.values,
        degenerate_pairs,
    })
}

/// `−i[H, ρ] + κ D[X₁]ρ + γ D[X₂]ρ` with `D[O]ρ = OρO† − ½{O†O, ρ}`.
pub fn lindblad_rhs(
    rho: &CMatrix,
    h: &HermitianMatrix,
    ops: &JumpOperators,
    d: &DissipationConfig,
) -> CMatrix {
    let h = h.matrix();
    let mut out = (h * rho - rho * h) * Complex64::new(0.0, -1.0);
    for (rate, x) in [(d.kappa, &ops.x1), (d.gamma, &ops.x2)] {
        if rate == 0.0 {
            continue;
        }
        let xdx = x.adjoint() * x;
        let dis = x * rho * x.adjoint() - (&xdx * rho + rho * &xdx) * Complex64::new(0.5, 0.0);
        out += dis * Complex64::new(rate, 0.0);
    }
    out
}

/// Row-major vectorized generator, `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.
fn superoperator(h: &HermitianMatrix, ops: &JumpOperators, d: &DissipationConfig) -> CMatrix {
    let h = h.matrix();
    let n = h.nrows();
    let id = CMatrix::identity(n, n);
    let mut l = (h.kronecker(&id) - id.kronecker(&h.transpose())) * Complex64::new(0.0, -1.0);
    for (rate, x) in [(d.kappa, &ops.x1), (d.gamma, &ops.x2)] {
        if rate == 0.0 {
            continue;
        }
        let xdx = x.adjoint() * x;
        let dis = x.kronecker(&x.conjugate())
            - (xdx.kronecker(&id) + id.kronecker(&xdx.transpose())) * Complex64::new(0.5, 0.0);
        l += dis * Complex64::new(rate, 0.0);
    }
    l
}

/// Complex matrix held as separate real and imaginary parts, multiplied with
/// three real products.
#[derive(Clone)]
struct SplitMatrix {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl SplitMatrix {
    fn from_complex(m: &CMatrix) -> Self {
        Self {
            re: m.map(|z| z.re),
            im: m.map(|z| z.im),
        }
    }

    fn identity(n: usize) -> Self {
        Self {
            re: DMatrix::identity(n, n),
            im: DMatrix::zeros(n, n),
        }
    }

    fn mul(&self, other: &Self) -> Self {
        let t1 = &self.re * &other.re;
        let t2 = &self.im * &other.im;
        let t3 = (&self.re + &self.im) * (&other.re + &other.im);
        Self {
            im: t3 - &t1 - &t2,
            re: t1 - t2,
        }
    }

    /// `I + self · s`.
    fn identity_plus_scaled(mut self, s: f64) -> Self {
        self.re *= s;
        self.im *= s;
        for i in 0..self.re.nrows() {
            self.re[(i, i)] += 1.0;
        }
        self
    }

    fn powi(&self, mut k: usize) -> Self {
        let mut result = Self::identity(self.re.nrows());
        let mut base = self.clone();
        let mut first = true;
        while k > 0 {
            if k & 1 == 1 {
                result = if first { base.clone() } else { result.mul(&base) };
                first = false;
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let vr = v.map(|z| z.re);
        let vi = v.map(|z| z.im);
        let re = &self.re * &vr - &self.im * &vi;
        let im = &self.re * &vi + &self.im * &vr;
        DVector::from_fn(v.len(), |k, _| Complex64::new(re[k], im[k]))
    }
}

/// One RK4 step of the linear system `ρ' = Lρ`.
fn rk4_step_matrix(l: &CMatrix, h: f64) -> SplitMatrix {
    let z = SplitMatrix::from_complex(&(l * Complex64::new(h, 0.0)));
    let mut p = z.clone().identity_plus_scaled(0.25);
    for div in [3.0, 2.0, 1.0] {
        p = z.mul(&p).identity_plus_scaled(1.0 / div);
    }
    p
}

/// Sampling and step-size policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    /// Samples per segment, after the initial one.
    pub samples_per_segment: usize,
    /// The step is at most `min(T/N, 2π/ω_max) / steps_per_period`.
    pub steps_per_period: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            samples_per_segment: 20,
            steps_per_period: 50,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_segment == 0 || self.steps_per_period == 0 {
            return Err(Error::Config(
                "samples_per_segment and steps_per_period must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Time series of the output flux and density-matrix diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FluxTrace {
    pub times: Vec<f64>,
    pub normalized_times: Vec<f64>,
    pub flux: Vec<f64>,
    pub labels: [String; 2],
    /// Populations of the initial and target bare states.
    pub populations: Vec<[f64; 2]>,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub total_steps: u64,
    #[serde(skip)]
    pub final_state: Option<DensityMatrix>,
}

impl FluxTrace {
    pub fn end_flux(&self) -> f64 {
        self.flux.last().copied().unwrap_or(0.0)
    }

    pub fn peak_flux(&self) -> f64 {
        self.flux.iter().copied().fold(0.0, f64::max)
    }
}

/// Integrates the master equation from the pure bare state `initial` through
/// every segment of a physical sequence under the error `err`.
pub fn integrate_master_equation(
    model: &ModelConfig,
    seq: &OpssSequence,
    d: &DissipationConfig,
    initial: usize,
    err: &ErrorSpec,
    cfg: &IntegrationConfig,
) -> Result<FluxTrace> {
    d.validate()?;
    cfg.validate()?;
    seq.validate()?;
    if seq.representation != Representation::Frequency {
        return Err(Error::Representation(
            "the master equation needs physical frequencies; convert with to_physical".into(),
        ));
    }
    let dim = model.dim();
    if initial >= dim {
        return Err(Error::ContractViolation(format!(
            "initial index {initial} outside dimension {dim}"
        )));
    }
    let target = model.target_index();
    let perturbed = err.apply_to_model(model);
    let tau = seq.segment_duration();
    let s = cfg.samples_per_segment;
    let n_samples = seq.n_segments() * s + 1;

    let mut trace = FluxTrace {
        times: Vec::with_capacity(n_samples),
        normalized_times: Vec::with_capacity(n_samples),
        flux: Vec::with_capacity(n_samples),
        labels: [model.basis_label(initial), model.basis_label(target)],
        populations: Vec::with_capacity(n_samples),
        max_trace_error: 0.0,
        max_hermiticity_error: 0.0,
        min_eigenvalue: f64::INFINITY,
        total_steps: 0,
        final_state: None,
    };

    let mut rho = DensityMatrix::pure(dim, initial);
    let mut v = rho.to_vec();
    for (k, &w) in seq.controls.iter().enumerate() {
        let h = perturbed.hamiltonian_at(err.apply_to_control(w))?;
        let ops = dressed_jump_operators(&h, model)?;
        let spread = ops.energies[dim - 1] - ops.energies[0];
        let period = if spread > 0.0 {
            2.0 * std::f64::consts::PI / spread
        } else {
            tau
        };
        let h_max = tau.min(period) / cfg.steps_per_period as f64;
        let interval = tau / s as f64;
        let steps = (interval / h_max).ceil().max(1.0) as usize;
        let step = interval / steps as f64;
        let xdx = ops.x1.adjoint() * &ops.x1;

        if k == 0 {
            record(&mut trace, &rho, &xdx, d.kappa, 0.0, seq.total_time, initial, target)?;
        }
        let propagator = rk4_step_matrix(&superoperator(&h, &ops, d), step).powi(steps);
        for j in 1..=s {
            v = propagator.apply(&v);
            rho = DensityMatrix::from_vec(&v, dim);
            let t = if k + 1 == seq.n_segments() && j == s {
                seq.total_time
            } else {
                (k * s + j) as f64 * interval
            };
            record(&mut trace, &rho, &xdx, d.kappa, t, seq.total_time, initial, target)?;
        }
        trace.total_steps += (steps * s) as u64;
    }
    trace.final_state = Some(rho);
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn record(
    trace: &mut FluxTrace,
    rho: &DensityMatrix,
    xdx: &CMatrix,
    kappa: f64,
    t: f64,
    total: f64,
    initial: usize,
    target: usize,
) -> Result<()> {
    let drift = (rho.trace() - 1.0).abs();
    if !(drift <= TRACE_DRIFT_LIMIT) {
        return Err(Error::Numerical(format!(
            "trace drifted by {drift:e} at t = {t}; use a smaller step (raise steps_per_period)"
        )));
    }
    let flux = kappa * (&rho.entries * xdx).trace().re;
    trace.times.push(t);
    trace.normalized_times.push(t / total);
    trace.flux.push(flux);
    trace
        .populations
        .push([rho.population(initial), rho.population(target)]);
    trace.max_trace_error = trace.max_trace_error.max(drift);
    trace.max_hermiticity_error = trace.max_hermiticity_error.max(rho.hermiticity_error());
    trace.min_eigenvalue = trace.min_eigenvalue.min(rho.min_eigenvalue());
    Ok(())
}

/// `Φ_out(t, ε)`: one integration per ε along `axis`.
#[derive(Debug, Clone, Serialize)]
pub struct FluxLandscape {
    pub axis: ErrorAxis,
    pub eps: Vec<f64>,
    pub normalized_times: Vec<f64>,
    /// `flux[i][t]` for `eps[i]`.
    pub flux: Vec<Vec<f64>>,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl FluxLandscape {
    pub fn end_flux(&self) -> Vec<f64> {
        self.flux
            .iter()
            .map(|row| row.last().copied().unwrap_or(0.0))
            .collect()
    }
}

pub fn flux_landscape(
    model: &ModelConfig,
    seq: &OpssSequence,
    d: &DissipationConfig,
    axis: ErrorAxis,
    eps: &[f64],
    cfg: &IntegrationConfig,
) -> Result<FluxLandscape> {
    let traces = eps
        .par_iter()
        .map(|&e| {
            let err = axis.spec(e);
            integrate_master_equation(model, seq, d, model.initial_index(), &err, cfg).map_err(
                |source| Error::AtGridPoint {
                    eps_1: err.eps_primary,
                    eps_2: err.eps_control,
                    source: Box::new(source),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FluxLandscape {
        axis,
        eps: eps.to_vec(),
        normalized_times: traces
            .first()
            .map(|t| t.normalized_times.clone())
            .unwrap_or_default(),
        max_trace_error: traces.iter().map(|t| t.max_trace_error).fold(0.0, f64::max),
        max_hermiticity_error: traces
            .iter()
            .map(|t| t.max_hermiticity_error)
            .fold(0.0, f64::max),
        min_eigenvalue: traces
            .iter()
            .map(|t| t.min_eigenvalue)
            .fold(f64::INFINITY, f64::min),
        flux: traces.into_iter().map(|t| t.flux).collect(),
    })
}
