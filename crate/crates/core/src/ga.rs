//! Genetic algorithm over bang-bang chromosomes: seeded population
//! initialization, singlet-overlap fitness, tournament selection, single-point
//! crossover, per-gene mutation, elitism, and stall/target convergence.
//!
//! Reproducibility contract: every random draw comes from a ChaCha stream
//! derived from `(master_seed, generation, slot, purpose)`, and the fitness
//! reduction uses a stable total order `(fitness desc, chromosome hash asc)`,
//! so results are identical regardless of evaluation parallelism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::{self, HermitianOperator};
use crate::bb::{
    precompute_propagators, sequence_unitary, BBSequence, ChannelPulse, PropagatorCache, Segment,
    SequenceFitness,
};
use crate::error::{Error, Result};
use crate::spin::{
    build_singlet_projector, build_thermal_state, DensityMode, DensityState, SpinSystem, TWO_PI,
};

/// A chromosome is a bang-bang sequence; activity bits and quantized phases
/// are the genes.
pub type Chromosome = BBSequence;

#[derive(Debug, Clone)]
pub struct GAConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Phase quantization step in radians.
    pub phase_resolution: f64,
    pub elitism_count: usize,
    pub master_seed: u64,
    /// Stop once the best fitness reaches this value.
    pub target_q: Option<f64>,
    /// Stop after this many generations without meaningful improvement.
    pub stall_generations: usize,
    /// Improvement below this does not reset the stall counter.
    pub stall_epsilon: f64,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population_size: 64,
            generations: 200,
            tournament_size: 3,
            crossover_rate: 0.8,
            mutation_rate: 0.02,
            phase_resolution: TWO_PI / 360.0,
            elitism_count: 2,
            master_seed: 0,
            target_q: None,
            stall_generations: 50,
            stall_epsilon: 1e-4,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidArgument(
                "population_size must be >= 2".into(),
            ));
        }
        if self.elitism_count >= self.population_size {
            return Err(Error::InvalidArgument(
                "elitism_count must be < population_size".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate)
        {
            return Err(Error::InvalidArgument(
                "rates must lie in [0, 1]".into(),
            ));
        }
        if self.tournament_size == 0 {
            return Err(Error::InvalidArgument(
                "tournament_size must be >= 1".into(),
            ));
        }
        if self.phase_resolution <= 0.0 || self.phase_resolution > TWO_PI {
            return Err(Error::InvalidArgument(
                "phase_resolution must lie in (0, 2pi]".into(),
            ));
        }
        Ok(())
    }

    /// Number of representable phase values.
    pub fn phase_levels(&self) -> usize {
        ((TWO_PI / self.phase_resolution).round() as usize).max(1)
    }
}

/// Per-generation summary.
#[derive(Debug, Clone)]
pub struct FitnessRecord {
    pub generation: usize,
    pub best_q: f64,
    pub mean_q: f64,
    pub best_chromosome_id: u64,
}

// Stream purposes keep draws for different pipeline stages independent.
const PURPOSE_INIT: u64 = 1;
const PURPOSE_EVOLVE: u64 = 2;

fn stream(master_seed: u64, generation: u64, slot: u64, purpose: u64) -> ChaCha8Rng {
    // splitmix-style mixing of the coordinates into one seed.
    let mut z = master_seed
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(generation.wrapping_add(1)))
        .wrapping_add(0xbf58476d1ce4e5b9u64.wrapping_mul(slot.wrapping_add(1)))
        .wrapping_add(0x94d049bb133111ebu64.wrapping_mul(purpose));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

fn random_phase(rng: &mut ChaCha8Rng, cfg: &GAConfig) -> f64 {
    let levels = cfg.phase_levels();
    let k = rng.gen_range(0..levels);
    k as f64 * cfg.phase_resolution
}

fn random_chromosome(rng: &mut ChaCha8Rng, cfg: &GAConfig, template: &BBSequence) -> Chromosome {
    let segments = (0..template.len())
        .map(|_| {
            Segment::new(
                (0..template.nchannels())
                    .map(|_| {
                        let active = rng.gen_bool(0.5);
                        let phase = random_phase(rng, cfg);
                        ChannelPulse { active, phase }
                    })
                    .collect(),
            )
        })
        .collect();
    BBSequence::new(template.dt(), template.nchannels(), segments)
        .expect("template dimensions are valid")
}

/// Uniformly random population; deterministic for a fixed master seed.
pub fn random_population(cfg: &GAConfig, template: &BBSequence) -> Result<Vec<Chromosome>> {
    cfg.validate()?;
    Ok((0..cfg.population_size)
        .map(|slot| {
            let mut rng = stream(cfg.master_seed, 0, slot as u64, PURPOSE_INIT);
            random_chromosome(&mut rng, cfg, template)
        })
        .collect())
}

/// Singlet-overlap fitness `Q` of one chromosome: full-mode
/// `Q = 1/4 + Tr[U rho_dev U^dag P]` for deviation states, `Tr[U rho U^dag P]`
/// for full states.
pub fn fitness(
    chrom: &Chromosome,
    cache: &PropagatorCache,
    rho0: &DensityState,
    projector: &HermitianOperator,
) -> Result<f64> {
    let u = sequence_unitary(cache, chrom)?;
    let rho_t = algebra::conjugate(u.matrix(), rho0.matrix())?;
    let tr = algebra::expectation(&rho_t, projector.matrix())?;
    Ok(match rho0.mode() {
        DensityMode::Full => tr,
        DensityMode::Deviation => 0.25 + tr,
    })
}

/// Indices sorted best-first by `(fitness desc, fingerprint asc)`; the
/// fingerprint breaks ties so the ordering is a deterministic total order.
fn ranked_indices(pop: &[Chromosome], fitnesses: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| {
        fitnesses[b]
            .partial_cmp(&fitnesses[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| pop[a].fingerprint().cmp(&pop[b].fingerprint()))
    });
    idx
}

fn tournament_pick(
    rng: &mut ChaCha8Rng,
    cfg: &GAConfig,
    pop: &[Chromosome],
    fitnesses: &[f64],
) -> usize {
    let mut best: Option<usize> = None;
    for _ in 0..cfg.tournament_size {
        let i = rng.gen_range(0..pop.len());
        best = Some(match best {
            None => i,
            Some(j) => {
                let better = fitnesses[i] > fitnesses[j]
                    || (fitnesses[i] == fitnesses[j]
                        && pop[i].fingerprint() < pop[j].fingerprint());
                if better {
                    i
                } else {
                    j
                }
            }
        });
    }
    best.expect("tournament_size >= 1")
}

fn crossover(rng: &mut ChaCha8Rng, a: &Chromosome, b: &Chromosome) -> (Chromosome, Chromosome) {
    let len = a.len();
    if len < 2 {
        return (a.clone(), b.clone());
    }
    let cut = rng.gen_range(1..len);
    let mut segs1: Vec<Segment> = a.segments()[..cut].to_vec();
    segs1.extend_from_slice(&b.segments()[cut..]);
    let mut segs2: Vec<Segment> = b.segments()[..cut].to_vec();
    segs2.extend_from_slice(&a.segments()[cut..]);
    (
        BBSequence::new(a.dt(), a.nchannels(), segs1).expect("parents are consistent"),
        BBSequence::new(a.dt(), a.nchannels(), segs2).expect("parents are consistent"),
    )
}

fn mutate(rng: &mut ChaCha8Rng, cfg: &GAConfig, chrom: &mut Chromosome) {
    for seg in chrom.segments_mut() {
        let pulses: Vec<ChannelPulse> = seg
            .channels()
            .iter()
            .map(|c| {
                if rng.gen_bool(cfg.mutation_rate) {
                    ChannelPulse {
                        active: !c.active,
                        phase: random_phase(rng, cfg),
                    }
                } else {
                    *c
                }
            })
            .collect();
        *seg = Segment::new(pulses);
    }
}

/// One generation step: elitism, tournament selection, single-point crossover,
/// per-gene mutation. A mutated gene flips its activity bit and redraws its
/// phase from the quantized set.
pub fn evolve_generation(
    pop: &[Chromosome],
    fitnesses: &[f64],
    cfg: &GAConfig,
    generation: usize,
) -> Result<Vec<Chromosome>> {
    cfg.validate()?;
    if pop.len() != cfg.population_size || fitnesses.len() != cfg.population_size {
        return Err(Error::InvalidArgument(format!(
            "population/fitness sizes {}/{} do not match population_size {}",
            pop.len(),
            fitnesses.len(),
            cfg.population_size
        )));
    }
    let ranked = ranked_indices(pop, fitnesses);
    let mut next: Vec<Chromosome> = ranked[..cfg.elitism_count]
        .iter()
        .map(|&i| pop[i].clone())
        .collect();
    let mut slot = 0u64;
    while next.len() < cfg.population_size {
        let mut rng = stream(cfg.master_seed, generation as u64 + 1, slot, PURPOSE_EVOLVE);
        slot += 1;
        let pa = tournament_pick(&mut rng, cfg, pop, fitnesses);
        let pb = tournament_pick(&mut rng, cfg, pop, fitnesses);
        let (mut c1, mut c2) = if rng.gen_bool(cfg.crossover_rate) {
            crossover(&mut rng, &pop[pa], &pop[pb])
        } else {
            (pop[pa].clone(), pop[pb].clone())
        };
        mutate(&mut rng, cfg, &mut c1);
        mutate(&mut rng, cfg, &mut c2);
        next.push(c1);
        if next.len() < cfg.population_size {
            next.push(c2);
        }
    }
    Ok(next)
}

/// Everything `optimize` needs beyond the GA hyperparameters.
pub struct OptimizationProblem<'a> {
    pub system: &'a SpinSystem,
    /// Relative polarization per species label.
    pub polarizations: Vec<(String, f64)>,
}

#[derive(Debug)]
pub struct OptimizationOutcome {
    pub best: Chromosome,
    pub best_q: f64,
    pub history: Vec<FitnessRecord>,
    /// Majorization ceiling on the fitness for this initial state.
    pub ceiling: f64,
}

/// Full optimization loop. Deterministic for a fixed master seed, independent
/// of worker count.
pub fn optimize(
    problem: &OptimizationProblem<'_>,
    cfg: &GAConfig,
    template: &BBSequence,
) -> Result<OptimizationOutcome> {
    cfg.validate()?;
    let sys = problem.system;
    let cache = precompute_propagators(sys, template.dt())?;
    optimize_with_cache(problem, cfg, template, &cache)
}

/// Same as [`optimize`] but reuses an existing propagator cache.
pub fn optimize_with_cache(
    problem: &OptimizationProblem<'_>,
    cfg: &GAConfig,
    template: &BBSequence,
    cache: &PropagatorCache,
) -> Result<OptimizationOutcome> {
    cfg.validate()?;
    let sys = problem.system;
    let rho0 = build_thermal_state(sys, &problem.polarizations)?;
    let projector = build_singlet_projector(sys)?;
    let factor = crate::bb::singlet_projector_factor(sys);
    let evaluator = SequenceFitness::new(cache, &rho0, factor)?;

    let rho_full = HermitianOperator::with_tolerance(rho0.full_matrix_unchecked(), 1e-9)?;
    let ceiling = algebra::majorization_bound(&rho_full, &projector)?;

    let mut pop = random_population(cfg, template)?;
    let mut history = Vec::new();
    let mut best_ever: Option<(f64, Chromosome)> = None;
    let mut stall = 0usize;

    for generation in 0..=cfg.generations {
        let fitnesses: Vec<f64> = pop
            .par_iter()
            .map(|c| evaluator.evaluate(c))
            .collect::<Result<_>>()?;
        let ranked = ranked_indices(&pop, &fitnesses);
        let best_idx = ranked[0];
        let best_q = fitnesses[best_idx];
        let mean_q = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
        history.push(FitnessRecord {
            generation,
            best_q,
            mean_q,
            best_chromosome_id: pop[best_idx].fingerprint(),
        });

        let improved = match &best_ever {
            None => true,
            Some((q, _)) => best_q > q + cfg.stall_epsilon,
        };
        if best_ever.as_ref().map_or(true, |(q, _)| best_q > *q) {
            best_ever = Some((best_q, pop[best_idx].clone()));
        }
        if improved {
            stall = 0;
        } else {
            stall += 1;
        }

        if let Some(target) = cfg.target_q {
            if best_q >= target {
                break;
            }
        }
        if stall >= cfg.stall_generations {
            break;
        }
        if generation == cfg.generations {
            break;
        }
        pop = evolve_generation(&pop, &fitnesses, cfg, generation)?;
    }

    let (best_q, best) = best_ever.expect("at least one generation evaluated");
    Ok(OptimizationOutcome {
        best,
        best_q,
        history,
        ceiling,
    })
}
