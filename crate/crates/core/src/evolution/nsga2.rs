//! Non-dominated sorting, crowding distance and elitist survivor selection.

use std::cmp::Ordering;

use super::fitness::dominates_unchecked;
use super::{EvolutionError, FitnessVector, Individual};

/// Fast non-dominated sort over raw objective vectors.
///
/// Returns fronts of indices; front 0 is the non-dominated set. Indices
/// within a front are ascending.
pub fn sort_fronts(points: &[&[f64]]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates_unchecked(points[i], points[j]) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates_unchecked(points[j], points[i]) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }

    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

fn fitness_of(pop: &[Individual]) -> Result<Vec<&[f64]>, EvolutionError> {
    let mut out = Vec::with_capacity(pop.len());
    let mut m = None;
    for (i, ind) in pop.iter().enumerate() {
        let f = ind
            .fitness
            .as_ref()
            .ok_or(EvolutionError::Unevaluated(i))?;
        match m {
            None => m = Some(f.len()),
            Some(m) if m != f.len() => {
                return Err(EvolutionError::ObjectiveCount {
                    expected: m,
                    found: f.len(),
                })
            }
            _ => {}
        }
        out.push(f.values());
    }
    Ok(out)
}

pub fn non_dominated_sort(pop: &[Individual]) -> Result<Vec<Vec<usize>>, EvolutionError> {
    Ok(sort_fronts(&fitness_of(pop)?))
}

/// Crowding distance of each member of a front. Boundary points of every
/// objective get `+inf`; objectives with zero or non-finite range add
/// nothing to interior points.
pub fn crowding_distance(front: &[&FitnessVector]) -> Vec<f64> {
    let points: Vec<&[f64]> = front.iter().map(|f| f.values()).collect();
    crowding_of(&points)
}

fn crowding_of(points: &[&[f64]]) -> Vec<f64> {
    let n = points.len();
    let mut distance = vec![0.0; n];
    if n == 0 {
        return distance;
    }
    let m = points[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    #[allow(clippy::needless_range_loop)]
    for obj in 0..m {
        order.sort_by(|&a, &b| points[a][obj].total_cmp(&points[b][obj]).then(a.cmp(&b)));
        let lo = points[order[0]][obj];
        let hi = points[order[n - 1]][obj];
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if !(range > 0.0 && range.is_finite()) {
            continue;
        }
        for w in order.windows(3) {
            let gap = (points[w[2]][obj] - points[w[0]][obj]) / range;
            if gap.is_finite() {
                distance[w[1]] += gap;
            }
        }
    }
    distance
}

/// Front rank and crowding distance for every member of a population.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
}

impl Ranking {
    pub fn compute(pop: &[Individual]) -> Result<Self, EvolutionError> {
        let points = fitness_of(pop)?;
        let fronts = sort_fronts(&points);
        let mut rank = vec![0; pop.len()];
        let mut crowding = vec![0.0; pop.len()];
        for (r, front) in fronts.iter().enumerate() {
            let members: Vec<&[f64]> = front.iter().map(|&i| points[i]).collect();
            for (&i, d) in front.iter().zip(crowding_of(&members)) {
                rank[i] = r;
                crowding[i] = d;
            }
        }
        Ok(Self { rank, crowding })
    }

    /// Orders `a` before `b` when it is the better pick: lower rank, then
    /// larger crowding distance, then lower index.
    pub fn better(&self, a: usize, b: usize) -> Ordering {
        self.rank[a]
            .cmp(&self.rank[b])
            .then_with(|| self.crowding[b].total_cmp(&self.crowding[a]))
            .then(a.cmp(&b))
    }
}

/// Indices of the `k` survivors: whole fronts in rank order, the last
/// front truncated by descending crowding distance (ties to lower index).
pub fn nsga2_select_indices(pop: &[Individual], k: usize) -> Result<Vec<usize>, EvolutionError> {
    if k > pop.len() {
        return Err(EvolutionError::SelectTooMany {
            requested: k,
            available: pop.len(),
        });
    }
    let points = fitness_of(pop)?;
    let mut chosen = Vec::with_capacity(k);
    for front in sort_fronts(&points) {
        let missing = k - chosen.len();
        if missing == 0 {
            break;
        }
        if front.len() <= missing {
            chosen.extend(front);
        } else {
            let members: Vec<&[f64]> = front.iter().map(|&i| points[i]).collect();
            let distance = crowding_of(&members);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| distance[b].total_cmp(&distance[a]).then(a.cmp(&b)));
            chosen.extend(order.into_iter().take(missing).map(|j| front[j]));
        }
    }
    Ok(chosen)
}

pub fn nsga2_select(pop: &[Individual], k: usize) -> Result<Vec<Individual>, EvolutionError> {
    Ok(nsga2_select_indices(pop, k)?
        .into_iter()
        .map(|i| pop[i].clone())
        .collect())
}
