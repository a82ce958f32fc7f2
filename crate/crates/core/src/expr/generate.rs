use rand::Rng;

use super::{ExprError, Expression, Node, PrimitiveSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    /// Every leaf sits at the target height.
    Full,
    /// Below `min_height` only functions; terminals become possible from
    /// there on with probability `terminals / (terminals + functions)`.
    Grow,
}

fn random_terminal<R: Rng + ?Sized>(pset: &PrimitiveSet, rng: &mut R) -> Node {
    let i = rng.random_range(0..pset.terminal_count());
    let args = pset.arguments();
    if i < args.len() {
        Node::Argument(args[i].clone())
    } else {
        Node::Constant(pset.constants()[i - args.len()].clone())
    }
}

fn generate<R: Rng + ?Sized>(
    pset: &PrimitiveSet,
    min_height: usize,
    max_height: usize,
    method: Method,
    rng: &mut R,
) -> Result<Expression, ExprError> {
    if min_height > max_height {
        return Err(ExprError::HeightRange {
            min: min_height,
            max: max_height,
        });
    }
    let functions = pset.functions();
    if functions.is_empty() && min_height > 0 {
        return Err(ExprError::NoFunctions);
    }
    let height = rng.random_range(min_height..=max_height);
    let terminal_ratio =
        pset.terminal_count() as f64 / (pset.terminal_count() + functions.len()) as f64;

    let mut nodes = Vec::new();
    // Depths of the child slots still to be filled, most recent last.
    let mut slots = vec![0usize];
    while let Some(depth) = slots.pop() {
        let terminal = match method {
            Method::Full => depth == height,
            Method::Grow => {
                depth == height || (depth >= min_height && rng.random::<f64>() < terminal_ratio)
            }
        };
        if terminal || functions.is_empty() {
            nodes.push(random_terminal(pset, rng));
        } else {
            let p = &functions[rng.random_range(0..functions.len())];
            nodes.push(Node::Function {
                name: p.name.clone(),
                arity: p.arity,
            });
            slots.extend(std::iter::repeat_n(depth + 1, p.arity));
        }
    }
    Ok(Expression::from_preorder(nodes).expect("generator emits complete trees"))
}

/// Ramped half-and-half: with probability one half a full tree, otherwise a
/// grow tree, with target height uniform in `min_height..=max_height`.
pub fn generate_half_and_half<R: Rng + ?Sized>(
    pset: &PrimitiveSet,
    min_height: usize,
    max_height: usize,
    rng: &mut R,
) -> Result<Expression, ExprError> {
    let method = if rng.random::<bool>() {
        Method::Full
    } else {
        Method::Grow
    };
    generate(pset, min_height, max_height, method, rng)
}

pub fn generate_full<R: Rng + ?Sized>(
    pset: &PrimitiveSet,
    min_height: usize,
    max_height: usize,
    rng: &mut R,
) -> Result<Expression, ExprError> {
    generate(pset, min_height, max_height, Method::Full, rng)
}

pub fn generate_grow<R: Rng + ?Sized>(
    pset: &PrimitiveSet,
    min_height: usize,
    max_height: usize,
    rng: &mut R,
) -> Result<Expression, ExprError> {
    generate(pset, min_height, max_height, Method::Grow, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::build_pset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pset() -> PrimitiveSet {
        build_pset(
            &[
                ("Add", 2),
                ("Sub", 2),
                ("Mul", 2),
                ("Neg", 1),
                ("Exp", 1),
                ("Sin", 1),
            ],
            &["x", "y", "z"],
            &["k"],
        )
        .unwrap()
    }

    #[test]
    fn height_one_is_a_single_function_over_terminals() {
        let p = pset();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let e = generate_half_and_half(&p, 1, 1, &mut rng).unwrap();
            assert_eq!(e.height(), 1);
            assert!(!e.nodes()[0].is_terminal());
            assert!(e.nodes()[1..].iter().all(Node::is_terminal));
        }
    }

    #[test]
    fn full_trees_hit_target_grow_trees_stay_in_range() {
        let p = pset();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let full = generate_full(&p, 2, 2, &mut rng).unwrap();
            assert_eq!(full.height(), 2);
            assert!(full
                .depths()
                .iter()
                .zip(full.nodes())
                .all(|(d, n)| n.is_terminal() == (*d == 2)));
            let grow = generate_grow(&p, 1, 4, &mut rng).unwrap();
            assert!((1..=4).contains(&grow.height()));
        }
    }

    #[test]
    fn errors() {
        let terminals_only = build_pset(&[], &["x"], &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_half_and_half(&terminals_only, 1, 4, &mut rng),
            Err(ExprError::NoFunctions)
        ));
        assert_eq!(generate_grow(&terminals_only, 0, 4, &mut rng).unwrap().len(), 1);
        assert!(matches!(
            generate_half_and_half(&pset(), 3, 2, &mut rng),
            Err(ExprError::HeightRange { .. })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let p = pset();
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..50)
                .map(|_| generate_half_and_half(&p, 1, 4, &mut rng).unwrap())
                .collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..50)
                .map(|_| generate_half_and_half(&p, 1, 4, &mut rng).unwrap())
                .collect()
        };
        assert_eq!(a, b);
    }
}
