use std::cmp::Ordering;

use crate::expr::{print_prefix, Constants, Expression};

/// Objective values, lower is better. Non-finite components are stored as
/// `+inf` so a broken candidate is never preferred over a working one.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessVector {
    values: Vec<f64>,
}

impl FitnessVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values: values
                .into_iter()
                .map(|v| if v.is_finite() { v } else { f64::INFINITY })
                .collect(),
        }
    }

    /// All objectives at `+inf`.
    pub fn worst(objectives: usize) -> Self {
        Self {
            values: vec![f64::INFINITY; objectives],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Lexicographic comparison; total because values are never NaN.
    pub fn lexicographic(&self, other: &Self) -> Ordering {
        for (a, b) in self.values.iter().zip(&other.values) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.values.len().cmp(&other.values.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("fitness vectors of different length ({left} vs {right})")]
pub struct LengthMismatch {
    pub left: usize,
    pub right: usize,
}

/// Pareto dominance: `a` is no worse in every objective and strictly better
/// in at least one.
pub fn dominates(a: &FitnessVector, b: &FitnessVector) -> Result<bool, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(dominates_unchecked(a.values(), b.values()))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// A candidate expression with its fitness and constant values.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub expr: Expression,
    /// `None` until assessed.
    pub fitness: Option<FitnessVector>,
    /// Constant values found by constant optimization. Empty while the
    /// constants are unoptimized.
    pub constants: Constants,
}

impl Individual {
    pub fn new(expr: Expression) -> Self {
        Self {
            expr,
            fitness: None,
            constants: Constants::new(),
        }
    }

    pub fn is_evaluated(&self) -> bool {
        self.fitness.is_some()
    }

    /// Expression with the known constant values substituted.
    pub fn resolved(&self) -> Expression {
        self.expr.resolve_constants(&self.constants)
    }

    /// Canonical prefix string of the resolved expression.
    pub fn key(&self) -> String {
        print_prefix(&self.resolved())
    }

    pub fn fitness_values(&self) -> &[f64] {
        self.fitness
            .as_ref()
            .map(FitnessVector::values)
            .unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FitnessVector {
        FitnessVector::new(v.to_vec())
    }

    #[test]
    fn examples() {
        assert!(dominates(&fv(&[1.0, 1.0]), &fv(&[2.0, 2.0])).unwrap());
        assert!(!dominates(&fv(&[1.0, 2.0]), &fv(&[2.0, 1.0])).unwrap());
        assert!(!dominates(&fv(&[2.0, 1.0]), &fv(&[1.0, 2.0])).unwrap());
        assert!(!dominates(&fv(&[1.0, 1.0]), &fv(&[1.0, 1.0])).unwrap());
        assert_eq!(
            dominates(&fv(&[1.0]), &fv(&[1.0, 2.0])),
            Err(LengthMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn non_finite_is_worst() {
        let f = fv(&[f64::NAN, f64::NEG_INFINITY, 1.0]);
        assert_eq!(f.values(), &[f64::INFINITY, f64::INFINITY, 1.0]);
        assert!(dominates(&fv(&[1e300, 1e300, 1.0]), &f).unwrap());
    }

    fn vector(m: usize) -> impl Strategy<Value = FitnessVector> {
        proptest::collection::vec(0u8..4, m).prop_map(|v| {
            FitnessVector::new(v.into_iter().map(f64::from).collect())
        })
    }

    proptest! {
        #[test]
        fn irreflexive(a in vector(3)) {
            prop_assert!(!dominates(&a, &a).unwrap());
        }

        #[test]
        fn antisymmetric_and_transitive(a in vector(3), b in vector(3), c in vector(3)) {
            let ab = dominates(&a, &b).unwrap();
            prop_assert!(!(ab && dominates(&b, &a).unwrap()));
            if ab && dominates(&b, &c).unwrap() {
                prop_assert!(dominates(&a, &c).unwrap());
            }
        }
    }
}
