//! Prefix (Polish) notation codec.
//!
//! Grammar: tokens separated by exactly one ASCII space. A token is either
//! an identifier (`[A-Za-z_][A-Za-z0-9_]*`) naming a primitive of the set,
//! or a finite decimal literal. Literals are printed in the shortest form
//! that parses back to the same `f64`.

use super::pset::{is_identifier, SymbolKind};
use super::{ExprError, Expression, Node, PrimitiveSet};

pub fn parse_prefix(text: &str, pset: &PrimitiveSet) -> Result<Expression, ExprError> {
    if text.is_empty() {
        return Err(ExprError::Empty);
    }
    let mut nodes = Vec::new();
    let mut open = 1usize;
    for (pos, token) in text.split(' ').enumerate() {
        if open == 0 {
            return Err(ExprError::TrailingTokens { position: pos });
        }
        let node = parse_token(token, pset)?;
        open = open - 1 + node.arity();
        nodes.push(node);
    }
    if open > 0 {
        return Err(ExprError::Truncated { missing: open });
    }
    Ok(Expression::from_preorder(nodes).expect("arity bookkeeping guarantees a complete tree"))
}

fn parse_token(token: &str, pset: &PrimitiveSet) -> Result<Node, ExprError> {
    if token.is_empty() {
        return Err(ExprError::EmptyToken);
    }
    if is_identifier(token) {
        let sym = pset
            .symbol(token)
            .ok_or_else(|| ExprError::UnknownSymbol(token.to_string()))?;
        return Ok(match pset.kind_of(token) {
            Some(SymbolKind::Function(arity)) => Node::Function { name: sym, arity },
            Some(SymbolKind::Argument) => Node::Argument(sym),
            Some(SymbolKind::Constant) => Node::Constant(sym),
            None => unreachable!(),
        });
    }
    let looks_numeric = token
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.'));
    match token.parse::<f64>() {
        Ok(v) if looks_numeric && v.is_finite() => Ok(Node::Literal(v)),
        _ => Err(ExprError::UnknownSymbol(token.to_string())),
    }
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn print_prefix(expr: &Expression) -> String {
    let mut out = String::with_capacity(expr.len() * 4);
    for (i, node) in expr.nodes().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        match node {
            Node::Function { name, .. } | Node::Argument(name) | Node::Constant(name) => {
                out.push_str(name)
            }
            Node::Literal(v) => out.push_str(&format_f64(*v)),
        }
    }
    out
}
