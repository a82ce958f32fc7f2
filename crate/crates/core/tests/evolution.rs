//! End-to-end evolution on a small symbolic regression problem.

use std::ops::ControlFlow;
use std::sync::Arc;

use symreg_core::assessment::{FitnessFunction, ThreadPoolMap};
use symreg_core::evolution::dominates;
use symreg_core::expr::{build_pset, Constants, PrimitiveSet, Program};
use symreg_core::{evolve, EvolutionOutcome, Expression, GPConfig, LocalAssessment};

/// Mean squared error against `x^2 + x` on [-1, 1], and expression length.
struct Quadratic;

impl FitnessFunction for Quadratic {
    fn objective_names(&self) -> Vec<String> {
        vec!["mse".into(), "length".into()]
    }

    fn evaluate(&self, expr: &Expression, constants: &Constants) -> Result<Vec<f64>, String> {
        let program = Program::compile(expr, &["x"], constants).map_err(|e| e.to_string())?;
        let points: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * f64::from(i)).collect();
        let sse: f64 = points
            .iter()
            .map(|&x| (program.eval(&[x]) - (x * x + x)).powi(2))
            .sum();
        Ok(vec![sse / points.len() as f64, expr.len() as f64])
    }
}

fn pset() -> PrimitiveSet {
    build_pset(&[("Add", 2), ("Sub", 2), ("Mul", 2)], &["x"], &[]).unwrap()
}

fn config(seed: u64) -> GPConfig {
    GPConfig {
        population_size: 100,
        max_generations: 15,
        seed,
        ..GPConfig::default()
    }
}

fn run(seed: u64, threads: Option<usize>) -> EvolutionOutcome {
    let mut assessment = LocalAssessment::new(Arc::new(Quadratic));
    if let Some(n) = threads {
        assessment = assessment.with_pmap(Box::new(ThreadPoolMap::new(n).unwrap()));
    }
    evolve(config(seed), pset(), &mut assessment, |_, _| ControlFlow::Continue(())).unwrap()
}

#[test]
fn same_seed_same_run_regardless_of_threads() {
    let serial = run(4, None);
    let parallel = run(4, Some(4));
    assert_eq!(serial.history, parallel.history);
    assert_eq!(serial.archive.members(), parallel.archive.members());
    assert_eq!(serial.population, parallel.population);
    assert_ne!(run(5, None).history, serial.history);
}

#[test]
fn archive_is_a_nondominated_front_that_reaches_the_target() {
    let outcome = run(1, None);
    assert_eq!(outcome.history.len(), 16);
    let members = outcome.archive.members();
    for a in members {
        for b in members {
            let (fa, fb) = (a.fitness.as_ref().unwrap(), b.fitness.as_ref().unwrap());
            assert!(!dominates(fa, fb).unwrap(), "{fa:?} dominates {fb:?}");
        }
    }
    let best = members
        .iter()
        .map(|m| m.fitness_values()[0])
        .fold(f64::INFINITY, f64::min);
    assert!(best < 1e-20, "best mse {best}");
}

#[test]
fn callback_can_stop_early() {
    let mut assessment = LocalAssessment::new(Arc::new(Quadratic));
    let mut seen = Vec::new();
    let outcome = evolve(config(2), pset(), &mut assessment, |stats, _| {
        seen.push(stats.generation);
        if stats.generation == 3 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(seen, vec![0, 1, 2, 3]);
    assert_eq!(outcome.history.len(), 4);
}
