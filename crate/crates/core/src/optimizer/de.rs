//! Differential evolution (rand/1/bin) on the unit box.

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeConfig {
    pub population: usize,
    pub max_iterations: usize,
    pub mutation_factor: f64,
    pub crossover_rate: f64,
    pub elite_pool_size: usize,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population: 100,
            max_iterations: 1500,
            mutation_factor: 0.7,
            crossover_rate: 0.9,
            elite_pool_size: 5,
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::Config(format!(
                "de.population must be >= 4, got {}",
                self.population
            )));
        }
        if !(0.0..=2.0).contains(&self.mutation_factor) {
            return Err(Error::Config(format!(
                "de.mutation_factor must lie in [0, 2], got {}",
                self.mutation_factor
            )));
        }
        if !(self.crossover_rate > 0.0 && self.crossover_rate <= 1.0) {
            return Err(Error::Config(format!(
                "de.crossover_rate must lie in (0, 1], got {}",
                self.crossover_rate
            )));
        }
        if self.elite_pool_size == 0 {
            return Err(Error::Config("de.elite_pool_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A point of the unit box with its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub x: Vec<f64>,
    pub cost: f64,
}

/// Progress report handed to the per-generation hook.
#[derive(Debug, Clone, Copy)]
pub struct GenerationReport<'a> {
    pub generation: usize,
    pub best: &'a Member,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct DeOutcome {
    /// Best distinct points seen over the whole run, ascending cost.
    pub pool: Vec<Member>,
    pub population: Vec<Member>,
    pub generations: usize,
    pub evaluations: usize,
    pub stopped_early: bool,
}

// stream layout: phase in the top bits, then generation, then member index
fn member_rng(seed: u64, phase: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((phase << 60) | ((generation as u64) << 24) | index as u64);
    rng
}

fn offer(pool: &mut Vec<Member>, size: usize, m: &Member) {
    if !m.cost.is_finite() || pool.iter().any(|p| p.x == m.x) {
        return;
    }
    if pool.len() == size && pool.last().is_some_and(|w| w.cost <= m.cost) {
        return;
    }
    let at = pool.partition_point(|p| p.cost <= m.cost);
    pool.insert(at, m.clone());
    pool.truncate(size);
}

/// Minimize `f` over `[0, 1]^dim`. `initial` members (if any) replace the first
/// random ones. The hook runs after every generation and can stop the search.
pub fn differential_evolution<F, H>(
    dim: usize,
    cfg: &DeConfig,
    initial: &[Vec<f64>],
    f: F,
    mut hook: H,
) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
    H: FnMut(GenerationReport<'_>) -> ControlFlow<()>,
{
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::Config("optimization needs at least one parameter".into()));
    }
    let p = cfg.population;
    let mut points: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            if let Some(x) = initial.get(i) {
                x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
            } else {
                let mut rng = member_rng(cfg.seed, 1, 0, i);
                (0..dim).map(|_| rng.random::<f64>()).collect()
            }
        })
        .collect();
    for x in &mut points {
        x.resize(dim, 0.5);
    }
    let evaluate = |xs: &[Vec<f64>]| -> Result<Vec<f64>> {
        xs.par_iter()
            .enumerate()
            .map(|(i, x)| {
                f(x).map_err(|e| Error::Numerical(format!("candidate {i}: {e}")))
                    .map(|c| if c.is_nan() { f64::INFINITY } else { c })
            })
            .collect()
    };
    let costs = evaluate(&points)?;
    let mut pop: Vec<Member> = points
        .into_iter()
        .zip(costs)
        .map(|(x, cost)| Member { x, cost })
        .collect();
    let mut pool = Vec::with_capacity(cfg.elite_pool_size + 1);
    for m in &pop {
        offer(&mut pool, cfg.elite_pool_size, m);
    }
    let mut evaluations = p;
    let mut stopped_early = false;
    let mut generations = 0;

    for gen in 1..=cfg.max_iterations {
        let trials: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let mut rng = member_rng(cfg.seed, 2, gen, i);
                let mut pick = |exclude: &[usize]| loop {
                    let r = rng.random_range(0..p);
                    if !exclude.contains(&r) {
                        break r;
                    }
                };
                let r1 = pick(&[i]);
                let r2 = pick(&[i, r1]);
                let r3 = pick(&[i, r1, r2]);
                let jrand = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        if j == jrand || rng.random::<f64>() < cfg.crossover_rate {
                            let v = pop[r1].x[j] + cfg.mutation_factor * (pop[r2].x[j] - pop[r3].x[j]);
                            if (0.0..=1.0).contains(&v) {
                                v
                            } else {
                                rng.random::<f64>()
                            }
                        } else {
                            pop[i].x[j]
                        }
                    })
                    .collect()
            })
            .collect();
        let costs = evaluate(&trials)?;
        evaluations += p;
        for (i, (x, cost)) in trials.into_iter().zip(costs).enumerate() {
            let trial = Member { x, cost };
            offer(&mut pool, cfg.elite_pool_size, &trial);
            if trial.cost <= pop[i].cost {
                pop[i] = trial;
            }
        }
        generations = gen;
        let report = GenerationReport {
            generation: gen,
            best: &pool[0],
            evaluations,
        };
        if hook(report).is_break() {
            stopped_early = gen < cfg.max_iterations;
            break;
        }
    }
    if pool.is_empty() {
        return Err(Error::Numerical("no candidate had a finite cost".into()));
    }
    Ok(DeOutcome {
        pool,
        population: pop,
        generations,
        evaluations,
        stopped_early,
    })
}
