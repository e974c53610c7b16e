//! Real-coded steady-state genetic algorithm.
//!
//! One engine serves both the inner inversion and the outer control
//! optimization. A "generation" is a batch of replacement attempts
//! (`replacements_per_generation`, default = population size): offspring are
//! bred from a snapshot of the population, evaluated in parallel, then
//! applied serially in evaluation order (replace the current worst when
//! strictly better). All randomness derives from `(seed, eval_id)`
//! substreams, so parallel scheduling cannot change the outcome.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::ControlFlow;

use crate::rngstream;

const TAG_GA_INIT: u64 = 0x6A01;
const TAG_GA_OFFSPRING: u64 = 0x6A02;

/// Mutation draws move a gene uniformly within a window this wide, as a
/// fraction of the gene's range.
const MUTATION_WINDOW: f64 = 0.10;

/// Blend-crossover expansion factor (BLX-alpha).
const BLX_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaParams {
    pub pop_size: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub max_generations: usize,
    /// Replacement attempts per generation; 0 means `pop_size`.
    pub replacements_per_generation: usize,
    /// Fraction of each generation's offspring drawn uniformly at random
    /// (restart injection, used by the inversion to spread the archive).
    pub immigrant_fraction: f64,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            pop_size: 30,
            crossover_rate: 0.75,
            mutation_rate: 0.05,
            tournament_size: 2,
            max_generations: 50,
            replacements_per_generation: 0,
            immigrant_fraction: 0.0,
            seed: 0,
        }
    }
}

impl GaParams {
    /// Effective replacement attempts per generation.
    pub fn replacements(&self) -> usize {
        if self.replacements_per_generation == 0 {
            self.pop_size
        } else {
            self.replacements_per_generation
        }
    }

    fn validate(&self, bounds: &[(f64, f64)]) {
        assert!(self.pop_size >= 2, "population must be at least 2");
        assert!((0.0..=1.0).contains(&self.crossover_rate), "crossover rate in [0,1]");
        assert!((0.0..=1.0).contains(&self.mutation_rate), "mutation rate in [0,1]");
        assert!((0.0..=1.0).contains(&self.immigrant_fraction), "immigrant fraction in [0,1]");
        assert!(self.tournament_size >= 1, "tournament size must be at least 1");
        assert!(!bounds.is_empty(), "at least one gene required");
        for (k, (lo, hi)) in bounds.iter().enumerate() {
            assert!(lo.is_finite() && hi.is_finite() && lo < hi, "gene {k} bounds invalid");
        }
    }
}

/// A genome with its recorded fitness (lower is better).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Vec<f64>,
    #[serde(with = "crate::jsonnum")]
    pub fitness: f64,
    pub eval_id: u64,
}

/// Per-generation summary (generation 0 is the initial population).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GenStat {
    pub generation: u32,
    #[serde(with = "crate::jsonnum")]
    pub best_fitness: f64,
    #[serde(with = "crate::jsonnum")]
    pub mean_fitness: f64,
    pub evaluations: u64,
}

/// Passed to the observer once per evaluation, in `eval_id` order.
#[derive(Debug)]
pub struct GaEvent<'a> {
    pub eval_id: u64,
    pub generation: u32,
    pub genome: &'a [f64],
    pub fitness: f64,
    /// Whether the individual entered the population (always true during
    /// initialization).
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub population: Vec<Individual>,
    pub best: Individual,
    pub evaluations: u64,
    pub trace: Vec<GenStat>,
}

/// Lower fitness wins; ties go to the older individual (smaller `eval_id`).
fn better(fitness_a: f64, id_a: u64, fitness_b: f64, id_b: u64) -> bool {
    fitness_a < fitness_b || (fitness_a == fitness_b && id_a < id_b)
}

fn sanitize(fitness: f64, eval_id: u64) -> f64 {
    if fitness.is_finite() {
        fitness
    } else {
        log::warn!("non-finite fitness at eval {eval_id}; assigning +inf");
        f64::INFINITY
    }
}

/// Run the steady-state GA. `fitness` receives `(genome, eval_id)`; callers
/// with stochastic objectives must seed from `eval_id` themselves so a
/// genome's recorded fitness is reproducible.
pub fn run_ga<F, O>(
    fitness: F,
    bounds: &[(f64, f64)],
    params: &GaParams,
    mut observer: O,
) -> GaOutcome
where
    F: Fn(&[f64], u64) -> f64 + Sync,
    O: FnMut(&GaEvent) -> ControlFlow<()>,
{
    params.validate(bounds);
    let n_genes = bounds.len();
    let seed = params.seed;

    let random_genome = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
    };

    // Initial population.
    let genomes: Vec<Vec<f64>> = (0..params.pop_size)
        .map(|k| random_genome(&mut rngstream::stream(seed, &[TAG_GA_INIT, k as u64])))
        .collect();
    let fitnesses: Vec<f64> = genomes
        .par_iter()
        .enumerate()
        .map(|(k, g)| sanitize(fitness(g, k as u64), k as u64))
        .collect();
    let mut population: Vec<Individual> = genomes
        .into_iter()
        .zip(fitnesses)
        .enumerate()
        .map(|(k, (genome, fit))| Individual { genome, fitness: fit, eval_id: k as u64 })
        .collect();
    let mut evaluations = params.pop_size as u64;

    let mut stopped = false;
    for ind in &population {
        let event = GaEvent {
            eval_id: ind.eval_id,
            generation: 0,
            genome: &ind.genome,
            fitness: ind.fitness,
            accepted: true,
        };
        if observer(&event).is_break() {
            stopped = true;
            break;
        }
    }

    let mut trace = Vec::with_capacity(params.max_generations + 1);
    let stat = |population: &[Individual], generation: u32, evaluations: u64| {
        let best = population.iter().map(|i| i.fitness).fold(f64::INFINITY, f64::min);
        let mean = population.iter().map(|i| i.fitness).sum::<f64>() / population.len() as f64;
        GenStat { generation, best_fitness: best, mean_fitness: mean, evaluations }
    };
    trace.push(stat(&population, 0, evaluations));

    let replacements = params.replacements();
    let immigrants = (replacements as f64 * params.immigrant_fraction).ceil() as usize;

    'outer: for generation in 1..=params.max_generations {
        if stopped {
            break;
        }
        // Breed a batch from the current population snapshot.
        let offspring: Vec<(u64, Vec<f64>)> = (0..replacements)
            .map(|r| {
                let eval_id = evaluations + r as u64;
                let mut rng = rngstream::stream(seed, &[TAG_GA_OFFSPRING, eval_id]);
                let genome = if r < immigrants {
                    random_genome(&mut rng)
                } else {
                    let tournament = |rng: &mut rand_chacha::ChaCha8Rng| -> usize {
                        let mut winner = rng.gen_range(0..population.len());
                        for _ in 1..params.tournament_size {
                            let challenger = rng.gen_range(0..population.len());
                            if better(
                                population[challenger].fitness,
                                population[challenger].eval_id,
                                population[winner].fitness,
                                population[winner].eval_id,
                            ) {
                                winner = challenger;
                            }
                        }
                        winner
                    };
                    let p1 = tournament(&mut rng);
                    let p2 = tournament(&mut rng);
                    let mut genome = if rng.gen_bool(params.crossover_rate) {
                        // BLX-alpha blend of the two parents, per gene.
                        (0..n_genes)
                            .map(|g| {
                                let a = population[p1].genome[g];
                                let b = population[p2].genome[g];
                                let (lo, hi) = (a.min(b), a.max(b));
                                let d = hi - lo;
                                let raw =
                                    rng.gen_range(lo - BLX_ALPHA * d..=hi + BLX_ALPHA * d);
                                raw.clamp(bounds[g].0, bounds[g].1)
                            })
                            .collect()
                    } else {
                        population[p1].genome.clone()
                    };
                    for (g, gene) in genome.iter_mut().enumerate() {
                        if rng.gen_bool(params.mutation_rate) {
                            let half = 0.5 * MUTATION_WINDOW * (bounds[g].1 - bounds[g].0);
                            *gene = (*gene + rng.gen_range(-half..=half))
                                .clamp(bounds[g].0, bounds[g].1);
                        }
                    }
                    genome
                };
                (eval_id, genome)
            })
            .collect();

        let scored: Vec<f64> = offspring
            .par_iter()
            .map(|(eval_id, genome)| sanitize(fitness(genome, *eval_id), *eval_id))
            .collect();
        evaluations += replacements as u64;

        // Apply replacements serially, in eval order.
        for ((eval_id, genome), fit) in offspring.into_iter().zip(scored) {
            let worst = (0..population.len())
                .max_by(|&a, &b| {
                    let ia = &population[a];
                    let ib = &population[b];
                    ia.fitness
                        .partial_cmp(&ib.fitness)
                        .unwrap()
                        .then(ia.eval_id.cmp(&ib.eval_id))
                })
                .expect("population is non-empty");
            let accepted = fit < population[worst].fitness;
            let event = GaEvent {
                eval_id,
                generation: generation as u32,
                genome: &genome,
                fitness: fit,
                accepted,
            };
            let flow = observer(&event);
            if accepted {
                population[worst] = Individual { genome, fitness: fit, eval_id };
            }
            if flow.is_break() {
                trace.push(stat(&population, generation as u32, evaluations));
                break 'outer;
            }
        }
        trace.push(stat(&population, generation as u32, evaluations));
    }

    let best = population
        .iter()
        .min_by(|a, b| {
            a.fitness
                .partial_cmp(&b.fitness)
                .unwrap()
                .then(a.eval_id.cmp(&b.eval_id))
        })
        .expect("population is non-empty")
        .clone();

    GaOutcome { population, best, evaluations, trace }
}
