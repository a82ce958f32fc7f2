use std::collections::HashMap;
use std::sync::Arc;

use super::{ExprError, Symbol};

/// A named symbol with its arity. Arity 0 means terminal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Primitive {
    pub name: Symbol,
    pub arity: usize,
}

/// What a symbol refers to inside a [`PrimitiveSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Function(usize),
    Argument,
    Constant,
}

/// The alphabet trees are built from: function symbols with arities,
/// argument terminals and symbolic-constant terminals.
///
/// Declaration order is preserved; random generation indexes into these
/// lists, so two sets with the same symbols in a different order produce
/// different trees for the same seed.
#[derive(Debug, Clone)]
pub struct PrimitiveSet {
    functions: Vec<Primitive>,
    arguments: Vec<Symbol>,
    constants: Vec<Symbol>,
    lookup: HashMap<Symbol, SymbolKind>,
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl PrimitiveSet {
    pub fn new<F, A, C>(functions: F, arguments: A, constants: C) -> Result<Self, ExprError>
    where
        F: IntoIterator,
        F::Item: Into<(String, usize)>,
        A: IntoIterator,
        A::Item: AsRef<str>,
        C: IntoIterator,
        C::Item: AsRef<str>,
    {
        let mut lookup = HashMap::new();
        let mut claim = |name: &str, kind: SymbolKind| -> Result<Symbol, ExprError> {
            if !is_identifier(name) {
                return Err(ExprError::InvalidName(name.to_string()));
            }
            let sym: Symbol = Arc::from(name);
            if lookup.insert(sym.clone(), kind).is_some() {
                return Err(ExprError::DuplicateName(name.to_string()));
            }
            Ok(sym)
        };

        let mut fns = Vec::new();
        for item in functions {
            let (name, arity) = item.into();
            if arity == 0 {
                return Err(ExprError::ZeroArityFunction(name));
            }
            let name = claim(&name, SymbolKind::Function(arity))?;
            fns.push(Primitive { name, arity });
        }
        let arguments = arguments
            .into_iter()
            .map(|a| claim(a.as_ref(), SymbolKind::Argument))
            .collect::<Result<Vec<_>, _>>()?;
        let constants = constants
            .into_iter()
            .map(|c| claim(c.as_ref(), SymbolKind::Constant))
            .collect::<Result<Vec<_>, _>>()?;

        if arguments.is_empty() && constants.is_empty() {
            return Err(ExprError::NoTerminals);
        }
        Ok(Self {
            functions: fns,
            arguments,
            constants,
            lookup,
        })
    }

    pub fn functions(&self) -> &[Primitive] {
        &self.functions
    }

    pub fn arguments(&self) -> &[Symbol] {
        &self.arguments
    }

    pub fn constants(&self) -> &[Symbol] {
        &self.constants
    }

    pub fn terminal_count(&self) -> usize {
        self.arguments.len() + self.constants.len()
    }

    pub fn kind_of(&self, name: &str) -> Option<SymbolKind> {
        self.lookup.get(name).copied()
    }

    /// Interned symbol for `name`, if it belongs to this set.
    pub fn symbol(&self, name: &str) -> Option<Symbol> {
        self.lookup.get_key_value(name).map(|(k, _)| k.clone())
    }

    /// Every symbol with its arity, functions first, then arguments, then
    /// constants.
    pub fn arities(&self) -> Vec<(Symbol, usize)> {
        self.functions
            .iter()
            .map(|p| (p.name.clone(), p.arity))
            .chain(self.arguments.iter().map(|a| (a.clone(), 0)))
            .chain(self.constants.iter().map(|c| (c.clone(), 0)))
            .collect()
    }
}

/// Convenience constructor mirroring the wire-level description of a set.
pub fn build_pset(
    functions: &[(&str, usize)],
    arguments: &[&str],
    constants: &[&str],
) -> Result<PrimitiveSet, ExprError> {
    PrimitiveSet::new(
        functions.iter().map(|&(n, a)| (n.to_string(), a)),
        arguments,
        constants,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorenz() -> PrimitiveSet {
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
    fn lorenz_set() {
        let pset = lorenz();
        assert_eq!(pset.functions().len(), 6);
        assert_eq!(pset.terminal_count(), 4);
        assert_eq!(pset.kind_of("Add"), Some(SymbolKind::Function(2)));
        assert_eq!(pset.kind_of("k"), Some(SymbolKind::Constant));
        assert_eq!(pset.kind_of("y"), Some(SymbolKind::Argument));
        assert_eq!(pset.kind_of("Cos"), None);
    }

    #[test]
    fn terminals_only() {
        let pset = build_pset(&[], &["x"], &[]).unwrap();
        assert!(pset.functions().is_empty());
        assert_eq!(pset.terminal_count(), 1);
    }

    #[test]
    fn rejects_duplicates_and_bad_arity() {
        assert!(matches!(
            build_pset(&[("Add", 2)], &["x"], &["x"]),
            Err(ExprError::DuplicateName(n)) if n == "x"
        ));
        assert!(matches!(
            build_pset(&[("One", 0)], &["x"], &[]),
            Err(ExprError::ZeroArityFunction(_))
        ));
        assert!(matches!(
            build_pset(&[("Add", 2)], &[], &[]),
            Err(ExprError::NoTerminals)
        ));
        assert!(matches!(
            build_pset(&[], &["2x"], &[]),
            Err(ExprError::InvalidName(_))
        ));
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("_a1"));
        assert!(is_identifier("Add"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("1.0"));
        assert!(!is_identifier("a-b"));
    }
}
