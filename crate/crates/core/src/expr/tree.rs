use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::{Constants, Symbol};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Function { name: Symbol, arity: usize },
    Argument(Symbol),
    Constant(Symbol),
    /// Numeric leaf; only present once symbolic constants are resolved.
    Literal(f64),
}

impl Node {
    pub fn arity(&self) -> usize {
        match self {
            Node::Function { arity, .. } => *arity,
            _ => 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.arity() == 0
    }
}

/// An immutable expression tree stored as its preorder node sequence.
///
/// The flat layout makes subtree slicing (crossover, mutation) a range
/// operation: the subtree rooted at `i` spans `i..self.subtree_end(i)`.
#[derive(Clone, PartialEq)]
pub struct Expression {
    nodes: Arc<[Node]>,
}

impl Expression {
    /// Builds an expression from a preorder sequence, checking that the
    /// arities describe exactly one complete tree.
    pub fn from_preorder(nodes: Vec<Node>) -> Option<Self> {
        let mut open = 1usize;
        for (i, node) in nodes.iter().enumerate() {
            if open == 0 {
                return None;
            }
            open = open - 1 + node.arity();
            if open == 0 && i + 1 != nodes.len() {
                return None;
            }
        }
        if open != 0 {
            return None;
        }
        Some(Self {
            nodes: nodes.into(),
        })
    }

    pub fn leaf(node: Node) -> Self {
        debug_assert!(node.is_terminal());
        Self {
            nodes: vec![node].into(),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    /// Depth of every node, in preorder.
    pub fn depths(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut pending: Vec<usize> = Vec::new();
        for node in self.nodes.iter() {
            out.push(pending.len());
            if node.arity() > 0 {
                pending.push(node.arity());
            } else {
                while let Some(left) = pending.last_mut() {
                    *left -= 1;
                    if *left > 0 {
                        break;
                    }
                    pending.pop();
                }
            }
        }
        out
    }

    /// One past the last node of the subtree rooted at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        let mut open = 1usize;
        let mut end = start;
        while open > 0 {
            open = open - 1 + self.nodes[end].arity();
            end += 1;
        }
        end
    }

    pub fn subtree(&self, start: usize) -> Expression {
        let end = self.subtree_end(start);
        Self {
            nodes: self.nodes[start..end].to_vec().into(),
        }
    }

    /// Copy of `self` with the subtree at `start` replaced by `with`.
    pub fn replace_subtree(&self, start: usize, with: &Expression) -> Expression {
        let end = self.subtree_end(start);
        let mut nodes = Vec::with_capacity(self.len() - (end - start) + with.len());
        nodes.extend_from_slice(&self.nodes[..start]);
        nodes.extend_from_slice(&with.nodes);
        nodes.extend_from_slice(&self.nodes[end..]);
        Self {
            nodes: nodes.into(),
        }
    }

    /// Sorted, deduplicated names of the symbolic constants in the tree.
    pub fn constant_names(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Constant(c) => Some(c.to_string()),
                _ => None,
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn has_constants(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n, Node::Constant(_)))
    }

    /// Replaces every constant that has a value in `values` by a literal.
    pub fn resolve_constants(&self, values: &Constants) -> Expression {
        if values.is_empty() || !self.has_constants() {
            return self.clone();
        }
        let nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Constant(c) => match values.get(c.as_ref()) {
                    Some(v) => Node::Literal(*v),
                    None => n.clone(),
                },
                other => other.clone(),
            })
            .collect();
        Self {
            nodes: nodes.into(),
        }
    }

    /// Constants map with every constant of the tree set to `value`.
    pub fn default_constants(&self, value: f64) -> Constants {
        self.constant_names()
            .into_iter()
            .map(|n| (n, value))
            .collect::<BTreeMap<_, _>>()
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({})", super::print_prefix(self))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::print_prefix(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(name: &str, arity: usize) -> Node {
        Node::Function {
            name: Arc::from(name),
            arity,
        }
    }

    fn a(name: &str) -> Node {
        Node::Argument(Arc::from(name))
    }

    #[test]
    fn rejects_incomplete_or_overlong() {
        assert!(Expression::from_preorder(vec![f("Add", 2), a("x")]).is_none());
        assert!(Expression::from_preorder(vec![a("x"), a("y")]).is_none());
        assert!(Expression::from_preorder(vec![]).is_none());
    }

    #[test]
    fn height_and_depths() {
        // Add(Neg(Exp(x)), Mul(k, y))
        let e = Expression::from_preorder(vec![
            f("Add", 2),
            f("Neg", 1),
            f("Exp", 1),
            a("x"),
            f("Mul", 2),
            Node::Constant(Arc::from("k")),
            a("y"),
        ])
        .unwrap();
        assert_eq!(e.len(), 7);
        assert_eq!(e.height(), 3);
        assert_eq!(e.depths(), vec![0, 1, 2, 3, 1, 2, 2]);
        assert_eq!(e.subtree_end(1), 4);
        assert_eq!(e.subtree_end(4), 7);
        assert_eq!(e.constant_names(), vec!["k".to_string()]);

        let leaf = Expression::leaf(a("x"));
        assert_eq!(leaf.height(), 0);
        assert_eq!(leaf.len(), 1);
    }

    #[test]
    fn replace_subtree_keeps_rest() {
        let e = Expression::from_preorder(vec![f("Add", 2), a("x"), a("y")]).unwrap();
        let with = Expression::from_preorder(vec![f("Neg", 1), a("z")]).unwrap();
        let out = e.replace_subtree(2, &with);
        assert_eq!(out.len(), 4);
        assert_eq!(out.nodes()[2], f("Neg", 1));
        assert_eq!(e.replace_subtree(0, &with), with);
    }

    #[test]
    fn resolves_constants() {
        let e = Expression::from_preorder(vec![
            f("Mul", 2),
            Node::Constant(Arc::from("k")),
            a("x"),
        ])
        .unwrap();
        let mut c = Constants::new();
        c.insert("k".into(), 2.5);
        let r = e.resolve_constants(&c);
        assert_eq!(r.nodes()[1], Node::Literal(2.5));
        assert!(!r.has_constants());
    }
}
