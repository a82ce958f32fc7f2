//! Benchmark fixtures shared by the criterion targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symreg_core::expr::{generate_half_and_half, parse_prefix, Expression};
use symreg_core::lorenz::lorenz_pset;
use symreg_core::{FitnessVector, Individual};

/// Parses a prefix string over the Lorenz primitive set.
pub fn lorenz_expr(text: &str) -> Expression {
    parse_prefix(text, &lorenz_pset()).expect("valid fixture expression")
}

/// `n` random expressions of height 2 to 6.
pub fn random_exprs(n: usize, seed: u64) -> Vec<Expression> {
    let pset = lorenz_pset();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| generate_half_and_half(&pset, 2, 6, &mut rng).expect("generation succeeds"))
        .collect()
}

/// `n` individuals with uniform random fitness in `m` objectives.
pub fn random_population(n: usize, m: usize, seed: u64) -> Vec<Individual> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = lorenz_expr("x");
    (0..n)
        .map(|_| Individual {
            expr: x.clone(),
            constants: Default::default(),
            fitness: Some(FitnessVector::new((0..m).map(|_| rng.random()).collect())),
        })
        .collect()
}
