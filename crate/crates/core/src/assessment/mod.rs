//! Turning batches of individuals into fitness: measures, constant
//! optimization, caching and a pluggable parallel map.

mod cache;
mod measure;
mod pmap;

use std::collections::HashMap;
use std::sync::Arc;

pub use cache::{CacheError, FitnessCache};
pub use measure::{FitnessFunction, Measure, MeasureSet};
pub use pmap::{ParallelMap, SerialMap, ThreadPoolMap};

use crate::constopt::{optimize_constants, ConstOptProblem, ConstOptSettings};
use crate::evolution::{FitnessVector, Individual};
use crate::expr::{print_prefix, Constants, Expression};
use crate::protocol::ProtocolError;

#[derive(Debug, thiserror::Error)]
pub enum AssessmentError {
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// The assessment side of a run: fills in fitness (and constants) for every
/// unevaluated member of a batch. Evaluated members are left untouched.
pub trait Assessment {
    fn assess(&mut self, batch: &mut [Individual]) -> Result<(), AssessmentError>;

    /// Objective names, if known ahead of the first assessment.
    fn objective_names(&self) -> Option<Vec<String>> {
        None
    }
}

/// Output of one assessment job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobResult {
    pub values: Vec<f64>,
    pub constants: Constants,
}

/// In-process assessment through a [`FitnessFunction`].
///
/// Individuals whose expression contains constants are first passed
/// through constant optimization (when enabled); otherwise their constants
/// are fixed at the default initial value. The cache key is the prefix
/// string of the constant-resolved expression, so individuals still
/// awaiting optimization are never answered from the cache.
pub struct LocalAssessment {
    fitness: Arc<dyn FitnessFunction>,
    cache: FitnessCache,
    pmap: Box<dyn ParallelMap>,
    constopt: Option<ConstOptSettings>,
    jobs_run: usize,
}

impl LocalAssessment {
    pub fn new(fitness: Arc<dyn FitnessFunction>) -> Self {
        Self {
            fitness,
            cache: FitnessCache::in_memory(),
            pmap: Box::new(SerialMap),
            constopt: Some(ConstOptSettings::default()),
            jobs_run: 0,
        }
    }

    pub fn with_cache(mut self, cache: FitnessCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_pmap(mut self, pmap: Box<dyn ParallelMap>) -> Self {
        self.pmap = pmap;
        self
    }

    /// `None` disables constant optimization.
    pub fn with_constopt(mut self, settings: Option<ConstOptSettings>) -> Self {
        self.constopt = settings;
        self
    }

    pub fn cache(&self) -> &FitnessCache {
        &self.cache
    }

    pub fn into_cache(self) -> FitnessCache {
        self.cache
    }

    /// Distinct jobs dispatched to the parallel map so far.
    pub fn jobs_run(&self) -> usize {
        self.jobs_run
    }
}

struct Job {
    expr: Expression,
    constants: Constants,
    optimize: bool,
}

fn run_job(
    fitness: &dyn FitnessFunction,
    objectives: usize,
    settings: Option<&ConstOptSettings>,
    job: &Job,
) -> JobResult {
    let mut constants = job.constants.clone();
    if let (true, Some(settings)) = (job.optimize, settings) {
        let residual_idx = fitness.residual_objectives();
        let names = job.expr.constant_names();
        let problem = ConstOptProblem::for_expression(&job.expr, settings, |values: &[f64]| {
            let trial: Constants = names.iter().cloned().zip(values.iter().copied()).collect();
            match fitness.evaluate(&job.expr, &trial) {
                Ok(v) if v.len() == objectives => residual_idx.iter().map(|&i| v[i]).collect(),
                _ => vec![f64::INFINITY; residual_idx.len()],
            }
        });
        let names = problem.constant_names.clone();
        let best = optimize_constants(problem);
        constants = names.into_iter().zip(best.values).collect();
    }
    let values = match fitness.evaluate(&job.expr, &constants) {
        Ok(v) if v.len() == objectives => v,
        Ok(v) => {
            log::warn!(
                "`{}`: {} objective values, expected {objectives}",
                print_prefix(&job.expr),
                v.len()
            );
            vec![f64::INFINITY; objectives]
        }
        Err(e) => {
            log::warn!("`{}`: measure failed: {e}", print_prefix(&job.expr));
            vec![f64::INFINITY; objectives]
        }
    };
    JobResult { values, constants }
}

impl Assessment for LocalAssessment {
    fn assess(&mut self, batch: &mut [Individual]) -> Result<(), AssessmentError> {
        let objectives = self.fitness.objective_names().len();
        let mut jobs: Vec<Job> = Vec::new();
        let mut job_index: HashMap<String, usize> = HashMap::new();
        let mut waiting: Vec<(usize, usize)> = Vec::new();

        for (i, ind) in batch.iter_mut().enumerate() {
            if ind.is_evaluated() {
                continue;
            }
            let has_constants = ind.expr.has_constants();
            let optimize = has_constants && ind.constants.is_empty() && self.constopt.is_some();
            if has_constants && ind.constants.is_empty() && !optimize {
                ind.constants = ind.expr.default_constants(ConstOptSettings::default().initial_value);
            }
            if !optimize {
                if let Some(f) = self.cache.get(&ind.key()) {
                    ind.fitness = Some(f);
                    continue;
                }
            }
            // Identical pending work within a batch runs once.
            let dedup = format!("{}|{}", optimize, print_prefix(&ind.resolved()));
            let j = *job_index.entry(dedup).or_insert_with(|| {
                jobs.push(Job {
                    expr: ind.expr.clone(),
                    constants: ind.constants.clone(),
                    optimize,
                });
                jobs.len() - 1
            });
            waiting.push((i, j));
        }

        if jobs.is_empty() {
            return Ok(());
        }
        let fitness = self.fitness.as_ref();
        let settings = self.constopt.as_ref();
        let results = self
            .pmap
            .map(jobs.len(), &|j| run_job(fitness, objectives, settings, &jobs[j]));
        self.jobs_run += jobs.len();

        for (i, j) in waiting {
            let ind = &mut batch[i];
            ind.constants = results[j].constants.clone();
            let f = FitnessVector::new(results[j].values.clone());
            self.cache.insert(ind.key(), f.clone());
            ind.fitness = Some(f);
        }
        self.cache.flush()?;
        Ok(())
    }

    fn objective_names(&self) -> Option<Vec<String>> {
        Some(self.fitness.objective_names())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{build_pset, parse_prefix, PrimitiveSet};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn pset() -> PrimitiveSet {
        build_pset(&[("Add", 2), ("Mul", 2), ("Neg", 1)], &["x"], &["k"]).unwrap()
    }

    /// Squared error of the expression against 2x + 1 on a grid, plus size.
    struct Fit {
        calls: AtomicUsize,
    }

    impl FitnessFunction for Fit {
        fn objective_names(&self) -> Vec<String> {
            vec!["sse".into(), "length".into()]
        }

        fn evaluate(&self, expr: &Expression, constants: &Constants) -> Result<Vec<f64>, String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let prog = crate::expr::Program::compile(expr, &["x"], constants)
                .map_err(|e| e.to_string())?;
            let sse: f64 = (0..=10)
                .map(|i| {
                    let x = i as f64 / 10.0;
                    (prog.eval(&[x]) - (2.0 * x + 1.0)).powi(2)
                })
                .sum();
            Ok(vec![sse, expr.len() as f64])
        }

        fn residual_objectives(&self) -> Vec<usize> {
            vec![0]
        }
    }

    fn fit() -> Arc<Fit> {
        Arc::new(Fit {
            calls: AtomicUsize::new(0),
        })
    }

    fn inds(exprs: &[&str]) -> Vec<Individual> {
        let p = pset();
        exprs
            .iter()
            .map(|e| Individual::new(parse_prefix(e, &p).unwrap()))
            .collect()
    }

    #[test]
    fn duplicates_evaluated_once() {
        let f = fit();
        let mut a = LocalAssessment::new(f.clone());
        let mut batch = inds(&["Add x x", "Add x x"]);
        a.assess(&mut batch).unwrap();
        assert_eq!(f.calls.load(Ordering::SeqCst), 1);
        assert_eq!(batch[0].fitness, batch[1].fitness);
    }

    #[test]
    fn empty_batch_and_warm_cache() {
        let f = fit();
        let mut a = LocalAssessment::new(f.clone());
        a.assess(&mut []).unwrap();
        assert_eq!(f.calls.load(Ordering::SeqCst), 0);

        let mut batch = inds(&["x", "Add x x", "Neg x"]);
        a.assess(&mut batch).unwrap();
        let calls = f.calls.load(Ordering::SeqCst);
        let mut again = inds(&["x", "Add x x", "Neg x"]);
        a.assess(&mut again).unwrap();
        assert_eq!(f.calls.load(Ordering::SeqCst), calls);
        assert_eq!(
            batch.iter().map(|i| i.fitness.clone()).collect::<Vec<_>>(),
            again.iter().map(|i| i.fitness.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn constants_are_optimized_then_cached_resolved() {
        let f = fit();
        let mut a = LocalAssessment::new(f.clone());
        let mut batch = inds(&["Add Mul k x k"]);
        a.assess(&mut batch).unwrap();
        // A single shared k cannot fit 2x + 1 exactly; least squares lands
        // between the slope and the intercept.
        let k = batch[0].constants["k"];
        assert!(k > 1.0 && k < 2.0, "{k}");
        assert!(a.cache().contains(&batch[0].key()));
        assert!(batch[0].key().starts_with("Add Mul "));

        let mut fixed = LocalAssessment::new(fit()).with_constopt(None);
        let mut batch = inds(&["Mul k x"]);
        fixed.assess(&mut batch).unwrap();
        assert_eq!(batch[0].constants["k"], 1.0);
        assert_eq!(batch[0].key(), "Mul 1.0 x");
    }

    #[test]
    fn failing_measure_is_worst() {
        struct Broken;
        impl FitnessFunction for Broken {
            fn objective_names(&self) -> Vec<String> {
                vec!["a".into(), "b".into()]
            }
            fn evaluate(&self, _: &Expression, _: &Constants) -> Result<Vec<f64>, String> {
                Err("boom".into())
            }
        }
        let mut a = LocalAssessment::new(Arc::new(Broken));
        let mut batch = inds(&["x"]);
        a.assess(&mut batch).unwrap();
        assert_eq!(batch[0].fitness_values(), &[f64::INFINITY, f64::INFINITY]);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let exprs = [
            "x", "Add x x", "Neg x", "Mul x x", "Add Mul k x k", "Mul k x", "Add k x",
            "Neg Mul x k", "Add x Add x x", "Mul Add x k Neg x",
        ];
        let mut serial = inds(&exprs);
        let mut parallel = inds(&exprs);
        LocalAssessment::new(fit()).assess(&mut serial).unwrap();
        LocalAssessment::new(fit())
            .with_pmap(Box::new(ThreadPoolMap::new(4).unwrap()))
            .assess(&mut parallel)
            .unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn measure_set_combines() {
        let set = MeasureSet::new(vec![
            Measure::new("len", |e: &Expression, _: &Constants| Ok(e.len() as f64)).structural(),
            Measure::new("one", |_: &Expression, _: &Constants| Ok(1.0)),
        ]);
        let e = parse_prefix("Neg x", &pset()).unwrap();
        assert_eq!(set.evaluate(&e, &Constants::new()).unwrap(), vec![2.0, 1.0]);
        assert_eq!(set.residual_objectives(), vec![1]);
        assert_eq!(set.objective_names(), vec!["len", "one"]);
    }
}
