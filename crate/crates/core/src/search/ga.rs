//! Genetic search over exact `n`-point designs.
//!
//! An individual is a sorted multiset of `n` indices into a discrete space;
//! its fitness is the fixed-variance loss of its empirical measure.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::design::{DesignMeasure, DesignSpace};
use crate::error::{DesignError, Result};
use crate::linalg::{ch_max_product, sandwich, spd_inverse, trace_product};
use crate::loss::{combine, loss_fixed_sigma_with, LossReport};
use crate::moments::{a_from_table, RegressorTable};
use crate::optim::DEFAULT_SEED;
use crate::variance::VarianceFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossoverRule {
    /// Head of one sorted parent joined to the tail of the other, re-sorted.
    SortedOnePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GAConfig {
    pub population_size: usize,
    pub n_seeded: usize,
    pub elite_fraction: f64,
    pub mutation_probability: f64,
    pub crossover: CrossoverRule,
    /// Stop after this many generations without improvement.
    pub stall_limit: usize,
    /// Optional hard cap on the number of generations.
    pub max_generations: Option<usize>,
    pub rng_seed: u64,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population_size: 40,
            n_seeded: 3,
            elite_fraction: 0.10,
            mutation_probability: 0.02,
            crossover: CrossoverRule::SortedOnePoint,
            stall_limit: 1000,
            max_generations: None,
            rng_seed: DEFAULT_SEED,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < self.n_seeded + 1 || self.population_size < 2 {
            return Err(DesignError::InvalidParameter {
                name: "population_size",
                reason: format!("must exceed n_seeded = {}", self.n_seeded),
            });
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(DesignError::InvalidParameter {
                name: "elite_fraction",
                reason: format!("must lie in (0, 1), got {}", self.elite_fraction),
            });
        }
        if !(0.0..=1.0).contains(&self.mutation_probability) {
            return Err(DesignError::InvalidParameter {
                name: "mutation_probability",
                reason: format!("must lie in [0, 1], got {}", self.mutation_probability),
            });
        }
        if self.stall_limit == 0 {
            return Err(DesignError::InvalidParameter { name: "stall_limit", reason: "must be positive".into() });
        }
        Ok(())
    }

    fn elites(&self) -> usize {
        ((self.elite_fraction * self.population_size as f64).ceil() as usize).clamp(1, self.population_size - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub indices: Vec<usize>,
    pub design: DesignMeasure,
    pub loss: LossReport,
    /// Best fitness after each generation (entry 0 is the initial population).
    pub trace: Vec<f64>,
    pub generations: usize,
}

/// Fixed-variance loss of an exact design, with `A` precomputed.
pub struct ExactFitness<'a> {
    table: &'a RegressorTable,
    a: DMatrix<f64>,
    sigma: Vec<f64>,
    nu: f64,
    n_space: usize,
}

impl<'a> ExactFitness<'a> {
    pub fn new(space: &DesignSpace, table: &'a RegressorTable, sigma: &VarianceFunction, nu: f64) -> Self {
        Self { table, a: a_from_table(space, table), sigma: sigma.values(space), nu, n_space: space.len() }
    }

    /// `+inf` when the design does not identify the model.
    pub fn eval(&self, indices: &[usize]) -> f64 {
        let n = indices.len() as f64;
        let mut counts: Vec<(usize, f64)> = Vec::new();
        for &i in indices {
            match counts.last_mut() {
                Some((j, c)) if *j == i => *c += 1.0,
                _ => counts.push((i, 1.0)),
            }
        }
        debug_assert!(indices.windows(2).all(|w| w[0] <= w[1]) && indices.iter().all(|&i| i < self.n_space));
        let s = &self.sigma;
        let t00 = self.table.gram(counts.iter().map(|&(i, c)| (i, c / n)));
        let t01 = self.table.gram(counts.iter().map(|&(i, c)| (i, c / n / s[i])));
        let t02 = self.table.gram(counts.iter().map(|&(i, c)| (i, (c / n / s[i]).powi(2))));
        let Ok(inv) = spd_inverse(&t01, "T01") else {
            return f64::INFINITY;
        };
        let v = trace_product(&self.a, &sandwich(&inv, &t00));
        let b = ch_max_product(&self.a, &sandwich(&inv, &t02));
        let f = combine(v, b, self.nu);
        if f.is_finite() {
            f
        } else {
            f64::INFINITY
        }
    }
}

/// Reproducible per-slot stream derived from the master seed.
fn stream(seed: u64, generation: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation.wrapping_mul(1 << 20).wrapping_add(slot));
    rng
}

fn rank_roulette(rng: &mut ChaCha8Rng, size: usize) -> usize {
    // rank r (0 = fittest) has weight size - r
    let total = size * (size + 1) / 2;
    let mut u = rng.gen_range(0..total);
    for r in 0..size {
        let w = size - r;
        if u < w {
            return r;
        }
        u -= w;
    }
    size - 1
}

fn child(rng: &mut ChaCha8Rng, pop: &[Vec<usize>], n_space: usize, config: &GAConfig) -> Vec<usize> {
    let p1 = &pop[rank_roulette(rng, pop.len())];
    let p2 = &pop[rank_roulette(rng, pop.len())];
    let n = p1.len();
    let mut c: Vec<usize> = match config.crossover {
        CrossoverRule::SortedOnePoint => {
            let cut = if n > 1 { rng.gen_range(1..n) } else { 0 };
            p1[..cut].iter().chain(&p2[cut..]).copied().collect()
        }
    };
    for g in c.iter_mut() {
        if rng.gen::<f64>() < config.mutation_probability {
            if rng.gen::<bool>() {
                *g = (*g + 1).min(n_space - 1);
            } else {
                *g = g.saturating_sub(1);
            }
        }
    }
    c.sort_unstable();
    c
}

/// Minimizes the fixed-variance loss over exact `n`-point designs.
///
/// `seeds` are exact designs (index lists) placed in the initial
/// population; the remaining individuals are uniform random multisets.
/// The fittest `ceil(elite_fraction * population_size)` individuals are
/// copied unchanged into every new generation.
pub fn ga_minimax(
    space: Arc<DesignSpace>,
    basis: &Basis,
    sigma: &VarianceFunction,
    nu: f64,
    n: usize,
    seeds: &[Vec<usize>],
    config: &GAConfig,
) -> Result<GaResult> {
    config.validate()?;
    if !space.is_discrete() {
        return Err(DesignError::InvalidSpace("exact designs live on discrete spaces".into()));
    }
    if n == 0 {
        return Err(DesignError::InvalidParameter { name: "n", reason: "must be at least 1".into() });
    }
    let n_space = space.len();
    for s in seeds {
        if s.len() != n || s.iter().any(|&i| i >= n_space) {
            return Err(DesignError::InvalidParameter {
                name: "seeds",
                reason: format!("every seed needs {n} indices below {n_space}"),
            });
        }
    }
    let table = RegressorTable::new(&space, basis)?;
    let fitness = ExactFitness::new(&space, &table, sigma, nu);

    let mut init_rng = stream(config.rng_seed, 0, u64::MAX >> 1);
    let mut pop: Vec<Vec<usize>> = seeds
        .iter()
        .take(config.population_size)
        .map(|s| {
            let mut s = s.clone();
            s.sort_unstable();
            s
        })
        .collect();
    while pop.len() < config.population_size {
        let mut ind: Vec<usize> = (0..n).map(|_| init_rng.gen_range(0..n_space)).collect();
        ind.sort_unstable();
        pop.push(ind);
    }

    let elites = config.elites();
    let score = |pop: Vec<Vec<usize>>| -> Vec<(f64, Vec<usize>)> {
        let mut scored: Vec<(f64, Vec<usize>)> =
            pop.into_par_iter().map(|ind| (fitness.eval(&ind), ind)).collect();
        // stable: equal fitness keeps earlier slots first
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        scored
    };
    let mut scored = score(pop);
    let mut best = scored[0].clone();
    let mut trace = vec![best.0];
    let mut stall = 0usize;
    let mut generation = 0usize;
    while stall < config.stall_limit && config.max_generations.map_or(true, |m| generation < m) {
        generation += 1;
        let ranked: Vec<Vec<usize>> = scored.iter().map(|(_, i)| i.clone()).collect();
        let children: Vec<Vec<usize>> = (elites..config.population_size)
            .into_par_iter()
            .map(|slot| {
                let mut rng = stream(config.rng_seed, generation as u64, slot as u64);
                child(&mut rng, &ranked, n_space, config)
            })
            .collect();
        let survivors = scored[..elites].to_vec();
        let mut next = score(children);
        next.extend(survivors);
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        scored = next;
        if scored[0].0 < best.0 {
            best = scored[0].clone();
            stall = 0;
        } else {
            stall += 1;
        }
        trace.push(best.0);
    }

    let design = DesignMeasure::from_indices(space.clone(), &best.1)?;
    let loss = loss_fixed_sigma_with(&design, &table, &fitness.sigma, nu)?;
    Ok(GaResult { indices: best.1, design, loss, trace, generations: generation })
}
