//! Bound-constrained limited-memory quasi-Newton descent on the unit box with
//! central finite-difference gradients.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Finite-difference step as a fraction of each parameter's box width.
    pub gradient_step: f64,
    pub memory: usize,
    /// Stop when the relative cost decrease of an iteration falls below this.
    pub cost_tolerance: f64,
    /// Stop when the projected gradient's largest component falls below this.
    pub gradient_tolerance: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3000,
            gradient_step: 1e-6,
            memory: 10,
            cost_tolerance: 2.2e-9,
            gradient_tolerance: 1e-10,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("refine.max_iterations must be >= 1".into()));
        }
        if !(self.gradient_step > 0.0 && self.gradient_step < 0.5) {
            return Err(Error::Config(format!(
                "refine.gradient_step must lie in (0, 0.5), got {}",
                self.gradient_step
            )));
        }
        if self.memory == 0 {
            return Err(Error::Config("refine.memory must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Counter<'f, F> {
    f: &'f F,
    calls: usize,
}

impl<F: Fn(&[f64]) -> Result<f64>> Counter<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.calls += 1;
        let c = (self.f)(x)?;
        Ok(if c.is_nan() { f64::INFINITY } else { c })
    }

    fn gradient(&mut self, x: &[f64], fx: f64, h: f64) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for j in 0..x.len() {
            let up = (x[j] + h).min(1.0);
            let down = (x[j] - h).max(0.0);
            probe[j] = up;
            let fu = if up > x[j] { self.eval(&probe)? } else { fx };
            probe[j] = down;
            let fd = if down < x[j] { self.eval(&probe)? } else { fx };
            probe[j] = x[j];
            g[j] = if up > down { (fu - fd) / (up - down) } else { 0.0 };
        }
        Ok(g)
    }
}

/// Variables pinned at a bound with the gradient pushing outward.
fn active_set(x: &[f64], g: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .map(|(&v, &d)| (v <= 0.0 && d > 0.0) || (v >= 1.0 && d < 0.0))
        .collect()
}

fn two_loop(g: &[f64], active: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(active)
            .map(|(&x, &a)| if a { 0.0 } else { x })
            .collect()
    };
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let (s, y) = (mask(s), mask(y));
        let sy = dot(&s, &y);
        if sy <= 0.0 {
            alphas.push((0.0, s, y, 0.0));
            continue;
        }
        let rho = 1.0 / sy;
        let a = rho * dot(&s, &q);
        for (qi, yi) in q.iter_mut().zip(&y) {
            *qi -= a * yi;
        }
        alphas.push((a, s, y, rho));
    }
    if let Some((s, y)) = memory.back() {
        let (s, y) = (mask(s), mask(y));
        let yy = dot(&y, &y);
        if yy > 0.0 && dot(&s, &y) > 0.0 {
            let gamma = dot(&s, &y) / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for (a, s, y, rho) in alphas.into_iter().rev() {
        if rho == 0.0 {
            continue;
        }
        let b = rho * dot(&y, &q);
        for (qi, si) in q.iter_mut().zip(&s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Minimize `f` over `[0, 1]^n` starting from `x0`. The result is never worse
/// than the starting point.
pub fn minimize_box<F>(x0: &[f64], cfg: &RefineConfig, f: F) -> Result<RefineOutcome>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let mut counter = Counter { f: &f, calls: 0 };
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = counter.eval(&x)?;
    let mut g = counter.gradient(&x, fx, cfg.gradient_step)?;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(cfg.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let active = active_set(&x, &g);
        let pg_max = g
            .iter()
            .zip(&active)
            .filter(|(_, &a)| !a)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max);
        if pg_max < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        let mut dir = two_loop(&g, &active, &memory);
        if dot(&dir, &g) >= 0.0 {
            memory.clear();
            dir = g.iter().zip(&active).map(|(&v, &a)| if a { 0.0 } else { -v }).collect();
        }
        // first step without curvature information is scaled to a small move
        let mut alpha = if memory.is_empty() {
            (0.01 / dir.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
            project(&mut trial);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if step.iter().all(|v| *v == 0.0) {
                break;
            }
            let ft = counter.eval(&trial)?;
            if ft <= fx + 1e-4 * decrease.min(0.0) && ft < fx {
                accepted = Some((trial, ft, step));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, ft, s)) = accepted else {
            if memory.is_empty() {
                converged = true;
                break;
            }
            // retry from steepest descent before giving up
            memory.clear();
            continue;
        };
        let g_new = counter.gradient(&trial, ft, cfg.gradient_step)?;
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let rel = (fx - ft) / fx.abs().max(ft.abs()).max(1.0);
        if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == cfg.memory {
                memory.pop_front();
            }
            memory.push_back((s, y));
        }
        x = trial;
        fx = ft;
        g = g_new;
        if rel < cfg.cost_tolerance {
            converged = true;
            break;
        }
    }
    Ok(RefineOutcome {
        x,
        cost: fx,
        iterations,
        evaluations: counter.calls,
        converged,
    })
}
