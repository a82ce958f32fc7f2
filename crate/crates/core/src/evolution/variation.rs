use rand::Rng;

use super::nsga2::Ranking;
use super::Individual;
use crate::expr::{generate_grow, ExprError, Expression, PrimitiveSet};

/// Picks `count` winners of `tournament_size`-way tournaments, candidates
/// drawn uniformly with replacement. The winner is the best by front rank,
/// then crowding distance, then index.
pub fn tournament_select<R: Rng + ?Sized>(
    ranking: &Ranking,
    count: usize,
    tournament_size: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = ranking.rank.len();
    assert!(n > 0, "tournament over an empty population");
    (0..count)
        .map(|_| {
            (0..tournament_size.max(1))
                .map(|_| rng.random_range(0..n))
                .min_by(|&a, &b| ranking.better(a, b))
                .unwrap()
        })
        .collect()
}

/// Swaps uniformly chosen subtrees of `a` and `b`. A child taller than
/// `max_height` is replaced by its own parent.
pub fn cx_one_point<R: Rng + ?Sized>(
    a: &Expression,
    b: &Expression,
    max_height: usize,
    rng: &mut R,
) -> (Expression, Expression) {
    let i = rng.random_range(0..a.len());
    let j = rng.random_range(0..b.len());
    let child_a = a.replace_subtree(i, &b.subtree(j));
    let child_b = b.replace_subtree(j, &a.subtree(i));
    (
        limit(child_a, a, max_height),
        limit(child_b, b, max_height),
    )
}

/// Replaces a uniformly chosen node by a fresh grow tree of height at most
/// `subtree_max_height`, subject to the same static height limit.
pub fn mut_uniform<R: Rng + ?Sized>(
    a: &Expression,
    pset: &PrimitiveSet,
    subtree_max_height: usize,
    max_height: usize,
    rng: &mut R,
) -> Result<Expression, ExprError> {
    let i = rng.random_range(0..a.len());
    let fresh = generate_grow(pset, 0, subtree_max_height, rng)?;
    Ok(limit(a.replace_subtree(i, &fresh), a, max_height))
}

fn limit(child: Expression, parent: &Expression, max_height: usize) -> Expression {
    if child.height() > max_height {
        parent.clone()
    } else {
        child
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Crossover,
    Mutation,
    Reproduction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationParams {
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub tournament_size: usize,
    /// Height bound of subtrees grown by mutation.
    pub mutation_subtree_height: usize,
    /// Static height limit for crossover and mutation offspring.
    pub max_height: usize,
}

/// Breeds `lambda` offspring, each by exactly one of crossover, mutation
/// or reproduction.
///
/// Per slot the draws are, in order: the operator choice `u ~ U(0,1)`, the
/// tournament(s) for the parent(s), then the operator's own draws.
/// Crossover keeps the first child. Varied offspring lose fitness and
/// constants; reproduced ones keep both.
pub fn var_or<R: Rng + ?Sized>(
    pop: &[Individual],
    ranking: &Ranking,
    lambda: usize,
    params: &VariationParams,
    pset: &PrimitiveSet,
    rng: &mut R,
) -> Result<Vec<Individual>, ExprError> {
    Ok(var_or_traced(pop, ranking, lambda, params, pset, rng)?
        .into_iter()
        .map(|(_, ind)| ind)
        .collect())
}

/// [`var_or`] that also reports which operator produced each offspring.
pub fn var_or_traced<R: Rng + ?Sized>(
    pop: &[Individual],
    ranking: &Ranking,
    lambda: usize,
    params: &VariationParams,
    pset: &PrimitiveSet,
    rng: &mut R,
) -> Result<Vec<(Operator, Individual)>, ExprError> {
    let mut offspring = Vec::with_capacity(lambda);
    for _ in 0..lambda {
        let u: f64 = rng.random();
        if u < params.p_crossover {
            let picks = tournament_select(ranking, 2, params.tournament_size, rng);
            let (child, _) = cx_one_point(
                &pop[picks[0]].expr,
                &pop[picks[1]].expr,
                params.max_height,
                rng,
            );
            offspring.push((Operator::Crossover, Individual::new(child)));
        } else if u < params.p_crossover + params.p_mutation {
            let pick = tournament_select(ranking, 1, params.tournament_size, rng)[0];
            let mutant = mut_uniform(
                &pop[pick].expr,
                pset,
                params.mutation_subtree_height,
                params.max_height,
                rng,
            )?;
            offspring.push((Operator::Mutation, Individual::new(mutant)));
        } else {
            let pick = tournament_select(ranking, 1, params.tournament_size, rng)[0];
            offspring.push((Operator::Reproduction, pop[pick].clone()));
        }
    }
    Ok(offspring)
}
