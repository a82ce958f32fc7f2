use std::ops::ControlFlow;

use super::nsga2::{nsga2_select_indices, Ranking};
use super::rng::{master_rng, MasterRng, RngState};
use super::variation::{var_or, VariationParams};
use super::{EvolutionError, Individual, ParetoArchive};
use crate::assessment::Assessment;
use crate::expr::{generate_half_and_half, PrimitiveSet};

/// Hyperparameters of a run. Defaults follow the reference setup:
/// population 500, 20 generations, crossover 0.5, mutation 0.2,
/// tournament size 2, initial heights 1..=4, static height limit 20.
#[derive(Debug, Clone, PartialEq)]
pub struct GPConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub tournament_size: usize,
    pub init_min_height: usize,
    pub init_max_height: usize,
    pub variation_max_height: usize,
    pub seed: u64,
}

impl Default for GPConfig {
    fn default() -> Self {
        Self {
            population_size: 500,
            max_generations: 20,
            p_crossover: 0.5,
            p_mutation: 0.2,
            tournament_size: 2,
            init_min_height: 1,
            init_max_height: 4,
            variation_max_height: 20,
            seed: 0,
        }
    }
}

impl GPConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |msg: String| Err(EvolutionError::Config(msg));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.population_size == 0 {
            return bad("population_size must be positive".into());
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be positive".into());
        }
        if !prob(self.p_crossover) || !prob(self.p_mutation) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if self.p_crossover + self.p_mutation > 1.0 {
            return bad(format!(
                "p_crossover + p_mutation = {} exceeds 1",
                self.p_crossover + self.p_mutation
            ));
        }
        if self.init_min_height == 0 || self.init_min_height > self.init_max_height {
            return bad(format!(
                "initial height range {}..={} is invalid",
                self.init_min_height, self.init_max_height
            ));
        }
        if self.init_max_height > self.variation_max_height {
            return bad("init_max_height exceeds variation_max_height".into());
        }
        Ok(())
    }

    /// Names accepted by [`set`](Self::set), matching the field names.
    pub const KEYS: &'static [&'static str] = &[
        "population_size",
        "max_generations",
        "p_crossover",
        "p_mutation",
        "tournament_size",
        "init_min_height",
        "init_max_height",
        "variation_max_height",
        "seed",
    ];

    /// Sets one field from its textual value. Does not validate the
    /// resulting combination.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), EvolutionError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, EvolutionError> {
            value
                .trim()
                .parse()
                .map_err(|_| EvolutionError::Config(format!("bad value `{value}` for {key}")))
        }
        match key {
            "population_size" => self.population_size = parse(key, value)?,
            "max_generations" => self.max_generations = parse(key, value)?,
            "p_crossover" => self.p_crossover = parse(key, value)?,
            "p_mutation" => self.p_mutation = parse(key, value)?,
            "tournament_size" => self.tournament_size = parse(key, value)?,
            "init_min_height" => self.init_min_height = parse(key, value)?,
            "init_max_height" => self.init_max_height = parse(key, value)?,
            "variation_max_height" => self.variation_max_height = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(EvolutionError::Config(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    fn variation(&self) -> VariationParams {
        VariationParams {
            p_crossover: self.p_crossover,
            p_mutation: self.p_mutation,
            tournament_size: self.tournament_size,
            mutation_subtree_height: self.init_max_height,
            max_height: self.variation_max_height,
        }
    }
}

/// Per-generation summary handed to callbacks.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    /// Individuals that needed assessment this generation (cache hits
    /// included).
    pub evaluations: usize,
    pub min: Vec<f64>,
    pub median: Vec<f64>,
    pub archive_size: usize,
}

impl GenerationStats {
    fn collect(
        generation: usize,
        evaluations: usize,
        pop: &[Individual],
        archive: &ParetoArchive,
    ) -> Self {
        let m = pop.first().map_or(0, |i| i.fitness_values().len());
        let mut min = Vec::with_capacity(m);
        let mut median = Vec::with_capacity(m);
        for obj in 0..m {
            let mut col: Vec<f64> = pop.iter().map(|i| i.fitness_values()[obj]).collect();
            col.sort_by(f64::total_cmp);
            min.push(col[0]);
            let n = col.len();
            median.push(if n % 2 == 1 {
                col[n / 2]
            } else {
                (col[n / 2 - 1] + col[n / 2]) / 2.0
            });
        }
        Self {
            generation,
            evaluations,
            min,
            median,
            archive_size: archive.len(),
        }
    }
}

/// Everything needed to continue a run from a generation boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub generation: usize,
    pub population: Vec<Individual>,
    pub archive: Vec<Individual>,
    pub rng: RngState,
    pub history: Vec<GenerationStats>,
}

/// A generational NSGA-II run.
///
/// Each generation: rank the population, breed `population_size` offspring
/// with [`var_or`], assess the unevaluated ones, keep the best
/// `population_size` of parents plus offspring.
pub struct Evolution {
    config: GPConfig,
    pset: PrimitiveSet,
    rng: MasterRng,
    population: Vec<Individual>,
    archive: ParetoArchive,
    generation: usize,
    history: Vec<GenerationStats>,
}

fn assess_pending(
    assessment: &mut dyn Assessment,
    pop: &mut [Individual],
) -> Result<usize, EvolutionError> {
    let pending = pop.iter().filter(|i| !i.is_evaluated()).count();
    assessment.assess(pop)?;
    if let Some(i) = pop.iter().position(|i| !i.is_evaluated()) {
        return Err(EvolutionError::Unevaluated(i));
    }
    Ok(pending)
}

impl Evolution {
    /// Generates and assesses the initial population (generation 0).
    pub fn initialize(
        config: GPConfig,
        pset: PrimitiveSet,
        assessment: &mut dyn Assessment,
    ) -> Result<Self, EvolutionError> {
        config.validate()?;
        let mut rng = master_rng(config.seed);
        let mut population = (0..config.population_size)
            .map(|_| {
                generate_half_and_half(
                    &pset,
                    config.init_min_height,
                    config.init_max_height,
                    &mut rng,
                )
                .map(Individual::new)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut evo = Self {
            config,
            pset,
            rng,
            population: Vec::new(),
            archive: ParetoArchive::new(),
            generation: 0,
            history: Vec::new(),
        };
        let evaluations = assess_pending(assessment, &mut population)?;
        evo.archive.update(&population);
        evo.history.push(GenerationStats::collect(
            0,
            evaluations,
            &population,
            &evo.archive,
        ));
        evo.population = population;
        Ok(evo)
    }

    /// Rebuilds a run from a snapshot taken with [`Evolution::snapshot`].
    pub fn restore(
        config: GPConfig,
        pset: PrimitiveSet,
        state: EvolutionState,
    ) -> Result<Self, EvolutionError> {
        config.validate()?;
        if state.population.len() != config.population_size {
            return Err(EvolutionError::Config(format!(
                "snapshot population has {} members, config expects {}",
                state.population.len(),
                config.population_size
            )));
        }
        if let Some(i) = state.population.iter().position(|i| !i.is_evaluated()) {
            return Err(EvolutionError::Unevaluated(i));
        }
        Ok(Self {
            config,
            pset,
            rng: state.rng.restore(),
            population: state.population,
            archive: ParetoArchive::from_members(state.archive),
            generation: state.generation,
            history: state.history,
        })
    }

    pub fn snapshot(&self) -> EvolutionState {
        EvolutionState {
            generation: self.generation,
            population: self.population.clone(),
            archive: self.archive.members().to_vec(),
            rng: RngState::capture(&self.rng),
            history: self.history.clone(),
        }
    }

    pub fn config(&self) -> &GPConfig {
        &self.config
    }

    pub fn pset(&self) -> &PrimitiveSet {
        &self.pset
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn archive(&self) -> &ParetoArchive {
        &self.archive
    }

    pub fn history(&self) -> &[GenerationStats] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.generation >= self.config.max_generations
    }

    /// Advances one generation.
    pub fn step(&mut self, assessment: &mut dyn Assessment) -> Result<&GenerationStats, EvolutionError> {
        let ranking = Ranking::compute(&self.population)?;
        let mut offspring = var_or(
            &self.population,
            &ranking,
            self.config.population_size,
            &self.config.variation(),
            &self.pset,
            &mut self.rng,
        )?;
        let evaluations = assess_pending(assessment, &mut offspring)?;
        self.archive.update(&offspring);

        let mut pool = std::mem::take(&mut self.population);
        pool.extend(offspring);
        let survivors = nsga2_select_indices(&pool, self.config.population_size)?;
        let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
        self.population = survivors
            .into_iter()
            .map(|i| slots[i].take().expect("survivor indices are unique"))
            .collect();

        self.generation += 1;
        self.history.push(GenerationStats::collect(
            self.generation,
            evaluations,
            &self.population,
            &self.archive,
        ));
        Ok(self.history.last().unwrap())
    }

    /// Steps until `max_generations`, calling `on_generation` after the
    /// initial assessment (if not yet reported) and after every generation.
    /// Returning `Break` stops the run early at that boundary.
    pub fn run<F>(&mut self, assessment: &mut dyn Assessment, mut on_generation: F) -> Result<(), EvolutionError>
    where
        F: FnMut(&GenerationStats, &Evolution) -> ControlFlow<()>,
    {
        if self.generation == 0 {
            let stats = self.history[0].clone();
            if on_generation(&stats, self).is_break() {
                return Ok(());
            }
        }
        while !self.is_finished() {
            let stats = self.step(assessment)?.clone();
            if on_generation(&stats, self).is_break() {
                break;
            }
        }
        Ok(())
    }
}

/// Result of a completed (or callback-stopped) run.
#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    pub archive: ParetoArchive,
    pub history: Vec<GenerationStats>,
    pub population: Vec<Individual>,
}

/// A run that failed part-way; carries what was found before the failure.
#[derive(Debug, thiserror::Error)]
#[error("evolution aborted after generation {generation}: {error}")]
pub struct EvolveAborted {
    pub generation: usize,
    pub archive: ParetoArchive,
    pub history: Vec<GenerationStats>,
    #[source]
    pub error: EvolutionError,
}

/// Runs a full evolution from scratch.
pub fn evolve<F>(
    config: GPConfig,
    pset: PrimitiveSet,
    assessment: &mut dyn Assessment,
    on_generation: F,
) -> Result<EvolutionOutcome, EvolveAborted>
where
    F: FnMut(&GenerationStats, &Evolution) -> ControlFlow<()>,
{
    let mut evo = Evolution::initialize(config, pset, assessment).map_err(|error| EvolveAborted {
        generation: 0,
        archive: ParetoArchive::new(),
        history: Vec::new(),
        error,
    })?;
    continue_run(&mut evo, assessment, on_generation)
}

/// Continues `evo` to completion.
pub fn continue_run<F>(
    evo: &mut Evolution,
    assessment: &mut dyn Assessment,
    on_generation: F,
) -> Result<EvolutionOutcome, EvolveAborted>
where
    F: FnMut(&GenerationStats, &Evolution) -> ControlFlow<()>,
{
    match evo.run(assessment, on_generation) {
        Ok(()) => Ok(EvolutionOutcome {
            archive: evo.archive.clone(),
            history: evo.history.clone(),
            population: evo.population.clone(),
        }),
        Err(error) => Err(EvolveAborted {
            generation: evo.generation,
            archive: evo.archive.clone(),
            history: evo.history.clone(),
            error,
        }),
    }
}
