//! Symbolic provenance formulas.

use std::fmt;
use std::sync::Arc;

use super::{AnnotationStructure, Element, SemiringError, Token};

/// A provenance expression over tokens. Only 0/1 identities and the
/// annihilator are folded; nested sums and products are flattened so that
/// printed formulas read as n-ary.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Formula(Arc<FormulaNode>);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FormulaNode {
    Zero,
    One,
    Token(Token),
    Plus(Vec<Formula>),
    Times(Vec<Formula>),
    Monus(Formula, Formula),
    Delta(Formula),
}

impl Formula {
    pub fn zero() -> Formula {
        Formula(Arc::new(FormulaNode::Zero))
    }

    pub fn one() -> Formula {
        Formula(Arc::new(FormulaNode::One))
    }

    pub fn token(name: impl Into<Token>) -> Formula {
        Formula(Arc::new(FormulaNode::Token(name.into())))
    }

    pub fn node(&self) -> &FormulaNode {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self.0, FormulaNode::Zero)
    }

    pub fn is_one(&self) -> bool {
        matches!(*self.0, FormulaNode::One)
    }

    pub fn plus(&self, other: &Formula) -> Formula {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let mut items = Vec::new();
        for f in [self, other] {
            match &*f.0 {
                FormulaNode::Plus(cs) => items.extend(cs.iter().cloned()),
                _ => items.push(f.clone()),
            }
        }
        Formula(Arc::new(FormulaNode::Plus(items)))
    }

    pub fn times(&self, other: &Formula) -> Formula {
        if self.is_zero() || other.is_zero() {
            return Formula::zero();
        }
        if self.is_one() {
            return other.clone();
        }
        if other.is_one() {
            return self.clone();
        }
        let mut items = Vec::new();
        for f in [self, other] {
            match &*f.0 {
                FormulaNode::Times(cs) => items.extend(cs.iter().cloned()),
                _ => items.push(f.clone()),
            }
        }
        Formula(Arc::new(FormulaNode::Times(items)))
    }

    pub fn monus(&self, other: &Formula) -> Formula {
        if self.is_zero() {
            return Formula::zero();
        }
        if other.is_zero() {
            return self.clone();
        }
        Formula(Arc::new(FormulaNode::Monus(self.clone(), other.clone())))
    }

    pub fn delta(&self) -> Formula {
        if self.is_zero() || self.is_one() {
            return self.clone();
        }
        Formula(Arc::new(FormulaNode::Delta(self.clone())))
    }

    /// Image of the formula under the homomorphism into `structure` fixed by
    /// `leaf` on tokens.
    pub fn specialize(
        &self,
        structure: &dyn AnnotationStructure,
        leaf: &dyn Fn(&Token) -> Element,
    ) -> Result<Element, SemiringError> {
        Ok(match &*self.0 {
            FormulaNode::Zero => structure.zero(),
            FormulaNode::One => structure.one(),
            FormulaNode::Token(t) => leaf(t),
            FormulaNode::Plus(cs) => {
                let mut acc = structure.zero();
                for c in cs {
                    acc = structure.plus(&acc, &c.specialize(structure, leaf)?)?;
                }
                acc
            }
            FormulaNode::Times(cs) => {
                let mut acc = structure.one();
                for c in cs {
                    acc = structure.times(&acc, &c.specialize(structure, leaf)?)?;
                }
                acc
            }
            FormulaNode::Monus(a, b) => structure.monus(
                &a.specialize(structure, leaf)?,
                &b.specialize(structure, leaf)?,
            )?,
            FormulaNode::Delta(a) => structure.delta(&a.specialize(structure, leaf)?)?,
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, cs: &[Formula], op: &str) -> fmt::Result {
            f.write_str("(")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str(")")
        }
        match &*self.0 {
            FormulaNode::Zero => f.write_str("0"),
            FormulaNode::One => f.write_str("1"),
            FormulaNode::Token(t) => f.write_str(t),
            FormulaNode::Plus(cs) => join(f, cs, "⊕"),
            FormulaNode::Times(cs) => join(f, cs, "⊗"),
            FormulaNode::Monus(a, b) => write!(f, "({a} ⊖ {b})"),
            FormulaNode::Delta(a) => write!(f, "δ({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_fully_parenthesized() {
        let t = |s: &str| Formula::token(s);
        let paris = t("t3")
            .times(&t("t5"))
            .plus(&t("t5").times(&t("t6")))
            .plus(&t("t3").times(&t("t6")));
        assert_eq!(paris.to_string(), "((t3 ⊗ t5) ⊕ (t5 ⊗ t6) ⊕ (t3 ⊗ t6))");
        assert_eq!(t("a").monus(&t("b")).delta().to_string(), "δ((a ⊖ b))");
    }

    #[test]
    fn identity_folding_only() {
        let a = Formula::token("a");
        assert_eq!(a.plus(&Formula::zero()), a);
        assert_eq!(a.times(&Formula::one()), a);
        assert!(a.times(&Formula::zero()).is_zero());
        assert_eq!(a.plus(&a).to_string(), "(a ⊕ a)");
    }
}
