use std::collections::HashSet;

use super::fitness::dominates_unchecked;
use super::Individual;

/// Mutually non-dominated individuals seen so far, unique by canonical
/// (constant-resolved) prefix string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    members: Vec<Individual>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in insertion order.
    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    /// Members ordered lexicographically by fitness, then by prefix string.
    pub fn sorted(&self) -> Vec<Individual> {
        let mut out = self.members.clone();
        out.sort_by(|a, b| {
            let fa = a.fitness.as_ref().expect("archive members are evaluated");
            let fb = b.fitness.as_ref().expect("archive members are evaluated");
            fa.lexicographic(fb).then_with(|| a.key().cmp(&b.key()))
        });
        out
    }

    /// Offers every evaluated individual of `batch`; returns how many were
    /// admitted.
    pub fn update<'a, I>(&mut self, batch: I) -> usize
    where
        I: IntoIterator<Item = &'a Individual>,
    {
        let mut keys: HashSet<String> = self.members.iter().map(Individual::key).collect();
        let mut admitted = 0;
        for candidate in batch {
            let Some(fitness) = candidate.fitness.as_ref() else {
                continue;
            };
            let key = candidate.key();
            if keys.contains(&key) {
                continue;
            }
            let values = fitness.values();
            if self
                .members
                .iter()
                .any(|m| dominates_unchecked(m.fitness_values(), values))
            {
                continue;
            }
            self.members.retain(|m| {
                let drop = dominates_unchecked(values, m.fitness_values());
                if drop {
                    keys.remove(&m.key());
                }
                !drop
            });
            keys.insert(key);
            self.members.push(candidate.clone());
            admitted += 1;
        }
        admitted
    }

    pub(crate) fn from_members(members: Vec<Individual>) -> Self {
        Self { members }
    }
}
