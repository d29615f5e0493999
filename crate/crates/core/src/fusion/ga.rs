use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::gaussian;
use crate::seed::{derive_seed, rng_for, stream};
use crate::sim::parallel_map;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_prob: f64,
    /// Mutation standard deviation as a fraction of each gene's range.
    pub mutation_sigma: f64,
    pub mutation_prob: f64,
    pub elitism: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 64,
            generations: 200,
            tournament: 3,
            crossover_prob: 0.5,
            mutation_sigma: 0.1,
            mutation_prob: 0.15,
            elitism: 2,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.tournament == 0 || self.elitism >= self.population {
            return Err(Error::Config(format!(
                "GA needs population ≥ 2, tournament ≥ 1 and elitism < population, got {self:?}"
            )));
        }
        for p in [self.crossover_prob, self.mutation_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config("GA probabilities must lie in [0, 1]".into()));
            }
        }
        if !(self.mutation_sigma >= 0.0) {
            return Err(Error::Config("mutation_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    /// Best-so-far fitness after the initial population and each generation.
    pub trace: Vec<f64>,
}

/// `n` points stratified along every dimension of `bounds`.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, bounds: &[(f64, f64)], rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; bounds.len()]; n];
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            let u: f64 = rng.random();
            p[d] = lo + (s as f64 + u) / n as f64 * (hi - lo);
        }
    }
    points
}

/// Negated sum of squares, maximal (zero) at the origin.
pub fn sphere(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v).sum::<f64>()
}

fn tournament<R: Rng + ?Sized>(fitness: &[f64], k: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..k {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] > fitness[best] {
            best = c;
        }
    }
    best
}

/// Ranks by descending fitness; ties keep population order.
fn ranking(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
    order
}

/// Maximises `objective` over the box `bounds`. The initial population is a
/// Latin hypercube; each `seeds` entry replaces one of its worst members.
pub fn run_ga<F>(objective: F, bounds: &[(f64, f64)], cfg: &GaConfig, seed: u64, seeds: &[Vec<f64>], jobs: usize) -> Result<GaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(hi >= lo)) {
        return Err(Error::InvalidArgument("GA bounds must be non-empty with lo ≤ hi".into()));
    }
    if seeds.iter().any(|s| s.len() != bounds.len()) || seeds.len() > cfg.population {
        return Err(Error::InvalidArgument("GA seed individuals do not fit the problem".into()));
    }
    let clamp = |x: &mut Vec<f64>| {
        for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };
    let evaluate = |pop: &[Vec<f64>]| -> Vec<f64> {
        parallel_map(pop.len(), jobs, |i| {
            let f = objective(&pop[i]);
            if f.is_nan() {
                f64::NEG_INFINITY
            } else {
                f
            }
        })
    };

    let mut pop = latin_hypercube(cfg.population, bounds, &mut rng_for(seed, stream::LHS, 0));
    let mut fitness = evaluate(&pop);
    let order = ranking(&fitness);
    for (s, &slot) in seeds.iter().zip(order.iter().rev()) {
        let mut x = s.clone();
        clamp(&mut x);
        fitness[slot] = {
            let f = objective(&x);
            if f.is_nan() {
                f64::NEG_INFINITY
            } else {
                f
            }
        };
        pop[slot] = x;
    }
    let first = ranking(&fitness)[0];
    let mut best = pop[first].clone();
    let mut best_fitness = fitness[first];
    let mut trace = vec![best_fitness];

    for gen in 0..cfg.generations {
        let order = ranking(&fitness);
        let gen_seed = derive_seed(seed, stream::GA, gen as u64);
        let mut next: Vec<Vec<f64>> = order[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        for child in cfg.elitism..cfg.population {
            let mut rng = rng_for(gen_seed, stream::GA, child as u64);
            let a = &pop[tournament(&fitness, cfg.tournament, &mut rng)];
            let b = &pop[tournament(&fitness, cfg.tournament, &mut rng)];
            let mut x: Vec<f64> = a
                .iter()
                .zip(b)
                .map(|(&u, &v)| if rng.random_bool(cfg.crossover_prob) { v } else { u })
                .collect();
            for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
                if rng.random_bool(cfg.mutation_prob) {
                    *v += cfg.mutation_sigma * (hi - lo) * gaussian(&mut rng);
                }
            }
            clamp(&mut x);
            next.push(x);
        }
        let elite_fitness: Vec<f64> = order[..cfg.elitism].iter().map(|&i| fitness[i]).collect();
        let fresh = evaluate(&next[cfg.elitism..]);
        fitness = elite_fitness.into_iter().chain(fresh).collect();
        pop = next;
        let top = ranking(&fitness)[0];
        if fitness[top] > best_fitness {
            best_fitness = fitness[top];
            best = pop[top].clone();
        }
        trace.push(best_fitness);
    }
    Ok(GaResult {
        best,
        best_fitness,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lhs_is_stratified() {
        let bounds = [(0.0, 1.0), (-5.0, 5.0)];
        let pts = latin_hypercube(10, &bounds, &mut rng_for(1, 0, 0));
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            let mut bins: Vec<usize> = pts.iter().map(|p| ((p[d] - lo) / (hi - lo) * 10.0) as usize).collect();
            bins.sort();
            assert_eq!(bins, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn seeded_individual_is_kept() {
        let bounds = vec![(-1.0, 1.0); 3];
        let cfg = GaConfig {
            generations: 0,
            ..GaConfig::default()
        };
        let r = run_ga(sphere, &bounds, &cfg, 0, &[vec![0.0; 3]], 1).unwrap();
        assert_eq!(r.best_fitness, 0.0);
    }
}
