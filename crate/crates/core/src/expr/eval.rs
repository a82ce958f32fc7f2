use std::collections::HashMap;

use super::{Constants, ExprError, Expression, Node};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Arg(usize),
    Value(f64),
    Add,
    Sub,
    Mul,
    Neg,
    Exp,
    Sin,
}

/// An expression lowered to a postfix instruction list with arguments
/// resolved to slots and constants resolved to values.
///
/// Supported functions: `Add`, `Sub`, `Mul` (binary), `Neg`, `Exp`, `Sin`
/// (unary). Non-finite intermediates propagate; evaluation never fails once
/// compiled.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    max_stack: usize,
}

impl Program {
    pub fn compile(
        expr: &Expression,
        arguments: &[&str],
        constants: &Constants,
    ) -> Result<Self, ExprError> {
        let mut ops = Vec::with_capacity(expr.len());
        // Reverse preorder leaves the first child on top of the stack when
        // its parent executes.
        for node in expr.nodes().iter().rev() {
            let op = match node {
                Node::Argument(name) => Op::Arg(
                    arguments
                        .iter()
                        .position(|a| *a == name.as_ref())
                        .ok_or_else(|| ExprError::MissingBinding(name.to_string()))?,
                ),
                Node::Constant(name) => Op::Value(
                    *constants
                        .get(name.as_ref())
                        .ok_or_else(|| ExprError::MissingBinding(name.to_string()))?,
                ),
                Node::Literal(v) => Op::Value(*v),
                Node::Function { name, arity } => match (name.as_ref(), *arity) {
                    ("Add", 2) => Op::Add,
                    ("Sub", 2) => Op::Sub,
                    ("Mul", 2) => Op::Mul,
                    ("Neg", 1) => Op::Neg,
                    ("Exp", 1) => Op::Exp,
                    ("Sin", 1) => Op::Sin,
                    _ => {
                        return Err(ExprError::UnsupportedFunction {
                            name: name.to_string(),
                            arity: *arity,
                        })
                    }
                },
            };
            ops.push(op);
        }
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for op in &ops {
            match op {
                Op::Arg(_) | Op::Value(_) => depth += 1,
                Op::Add | Op::Sub | Op::Mul => depth -= 1,
                Op::Neg | Op::Exp | Op::Sin => {}
            }
            max_stack = max_stack.max(depth);
        }
        Ok(Self { ops, max_stack })
    }

    /// Evaluates with `args` indexed like the `arguments` given to
    /// [`Program::compile`].
    pub fn eval(&self, args: &[f64]) -> f64 {
        let mut stack: Vec<f64> = Vec::with_capacity(self.max_stack);
        for op in &self.ops {
            match *op {
                Op::Arg(i) => stack.push(args[i]),
                Op::Value(v) => stack.push(v),
                Op::Add | Op::Sub | Op::Mul => {
                    let lhs = stack.pop().unwrap();
                    let rhs = stack.pop().unwrap();
                    stack.push(match op {
                        Op::Add => lhs + rhs,
                        Op::Sub => lhs - rhs,
                        _ => lhs * rhs,
                    });
                }
                Op::Neg => {
                    let v = stack.last_mut().unwrap();
                    *v = -*v;
                }
                Op::Exp => {
                    let v = stack.last_mut().unwrap();
                    *v = v.exp();
                }
                Op::Sin => {
                    let v = stack.last_mut().unwrap();
                    *v = v.sin();
                }
            }
        }
        stack.pop().unwrap()
    }

    /// Three-argument evaluation without a heap allocation for small trees.
    pub fn eval3(&self, x: f64, y: f64, z: f64) -> f64 {
        if self.max_stack > 16 {
            return self.eval(&[x, y, z]);
        }
        let args = [x, y, z];
        let mut stack = [0.0f64; 16];
        let mut top = 0usize;
        for op in &self.ops {
            match *op {
                Op::Arg(i) => {
                    stack[top] = args[i];
                    top += 1;
                }
                Op::Value(v) => {
                    stack[top] = v;
                    top += 1;
                }
                Op::Add => {
                    top -= 1;
                    stack[top - 1] += stack[top];
                }
                Op::Sub => {
                    top -= 1;
                    stack[top - 1] = stack[top] - stack[top - 1];
                }
                Op::Mul => {
                    top -= 1;
                    stack[top - 1] *= stack[top];
                }
                Op::Neg => stack[top - 1] = -stack[top - 1],
                Op::Exp => stack[top - 1] = stack[top - 1].exp(),
                Op::Sin => stack[top - 1] = stack[top - 1].sin(),
            }
        }
        stack[0]
    }
}

/// Evaluates `expr` with named argument and constant bindings.
pub fn evaluate(
    expr: &Expression,
    bindings: &HashMap<String, f64>,
    constants: &Constants,
) -> Result<f64, ExprError> {
    let names: Vec<&str> = bindings.keys().map(String::as_str).collect();
    let values: Vec<f64> = names.iter().map(|n| bindings[*n]).collect();
    Ok(Program::compile(expr, &names, constants)?.eval(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{build_pset, parse_prefix, PrimitiveSet};

    fn pset() -> PrimitiveSet {
        build_pset(
            &[
                ("Add", 2),
                ("Sub", 2),
                ("Mul", 2),
                ("Neg", 1),
                ("Exp", 1),
                ("Sin", 1),
                ("Cos", 1),
            ],
            &["x", "y", "z"],
            &["k"],
        )
        .unwrap()
    }

    fn bind(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn consts(k: f64) -> Constants {
        [("k".to_string(), k)].into_iter().collect()
    }

    #[test]
    fn control_law_value() {
        let e = parse_prefix("Add Mul k x z", &pset()).unwrap();
        let v = evaluate(&e, &bind(&[("x", 10.0), ("y", 0.0), ("z", 5.0)]), &consts(-27.84)).unwrap();
        // -27.84 * 10 + 5
        assert!((v - (-273.4)).abs() < 1e-12);
    }

    #[test]
    fn constant_leaf_and_overflow() {
        let p = pset();
        let k = parse_prefix("k", &p).unwrap();
        assert_eq!(evaluate(&k, &bind(&[]), &consts(1.0)).unwrap(), 1.0);
        let e = parse_prefix("Exp x", &p).unwrap();
        let v = evaluate(&e, &bind(&[("x", 1000.0)]), &Constants::new()).unwrap();
        assert!(!v.is_finite());
    }

    #[test]
    fn operand_order() {
        let p = pset();
        let e = parse_prefix("Sub x y", &p).unwrap();
        let prog = Program::compile(&e, &["x", "y", "z"], &Constants::new()).unwrap();
        assert_eq!(prog.eval(&[5.0, 3.0, 0.0]), 2.0);
        assert_eq!(prog.eval3(5.0, 3.0, 0.0), 2.0);
        let e = parse_prefix("Neg Sin Mul 2.0 x", &p).unwrap();
        let prog = Program::compile(&e, &["x", "y", "z"], &Constants::new()).unwrap();
        assert_eq!(prog.eval3(0.25, 0.0, 0.0), -(0.5f64.sin()));
    }

    #[test]
    fn missing_binding_and_unknown_function() {
        let p = pset();
        let e = parse_prefix("Add x k", &p).unwrap();
        assert!(matches!(
            evaluate(&e, &bind(&[("x", 1.0)]), &Constants::new()),
            Err(ExprError::MissingBinding(n)) if n == "k"
        ));
        assert!(matches!(
            evaluate(&e, &bind(&[]), &consts(1.0)),
            Err(ExprError::MissingBinding(n)) if n == "x"
        ));
        let e = parse_prefix("Cos x", &p).unwrap();
        assert!(matches!(
            evaluate(&e, &bind(&[("x", 1.0)]), &Constants::new()),
            Err(ExprError::UnsupportedFunction { .. })
        ));
    }

    #[test]
    fn self_difference_is_zero() {
        let p = pset();
        let e = parse_prefix("Sub x x", &p).unwrap();
        let prog = Program::compile(&e, &["x"], &Constants::new()).unwrap();
        for x in [0.0, -3.5, 1e300, f64::MIN_POSITIVE, 123456.789] {
            assert_eq!(prog.eval(&[x]), 0.0);
        }
    }

    #[test]
    fn deep_tree_uses_heap_path() {
        let p = pset();
        // Left-leaning chain: all leaves are pushed before the first Add.
        let text = format!("{}{}", "Add ".repeat(20), vec!["x"; 21].join(" "));
        let e = parse_prefix(&text, &p).unwrap();
        let prog = Program::compile(&e, &["x", "y", "z"], &Constants::new()).unwrap();
        assert!(prog.max_stack > 16);
        assert_eq!(prog.eval3(1.0, 0.0, 0.0), 21.0);
    }
}
