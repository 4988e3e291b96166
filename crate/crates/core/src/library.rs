//! Candidate time functions for wave-speed models.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "param", rename_all = "snake_case"))]
pub enum TermFn {
    Constant,
    /// `t^p`, `p >= 1`.
    Power(u32),
    Sin(f64),
    Cos(f64),
    /// `exp(r t)`.
    Exp(f64),
}

impl TermFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TermFn::Constant => 1.0,
            TermFn::Power(p) => t.powi(p as i32),
            TermFn::Sin(w) => (w * t).sin(),
            TermFn::Cos(w) => (w * t).cos(),
            TermFn::Exp(r) => (r * t).exp(),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            TermFn::Constant => "1".into(),
            TermFn::Power(1) => "t".into(),
            TermFn::Power(p) => format!("t^{p}"),
            TermFn::Sin(w) => format!("sin({w}t)"),
            TermFn::Cos(w) => format!("cos({w}t)"),
            TermFn::Exp(r) => format!("exp({r}t)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LibraryTerm {
    pub name: String,
    pub f: TermFn,
}

/// Families of terms a library can be built from.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "grid", rename_all = "snake_case"))]
pub enum TermKind {
    Constant,
    /// `{1, t}`.
    Linear,
    /// `{1, t, ..., t^p}`.
    Polynomial(u32),
    /// `sin(w t)` and `cos(w t)` for each `w`.
    Sinusoid(Vec<f64>),
    /// `exp(r t)` for each `r`.
    Exponential(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FunctionLibrary {
    pub terms: Vec<LibraryTerm>,
}

impl FunctionLibrary {
    /// `{1, t}`, the library used for the linear preprocessing fit.
    pub fn linear() -> Self {
        build_library(&[TermKind::Linear]).expect("linear library is valid")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name.clone()).collect()
    }

    pub fn eval_row(&self, t: f64) -> Vec<f64> {
        self.terms.iter().map(|term| term.f.eval(t)).collect()
    }

    /// `sum_j coefs[j] f_j(t)`.
    pub fn combine(&self, coefs: &[f64], t: f64) -> f64 {
        self.terms
            .iter()
            .zip(coefs)
            .map(|(term, c)| if *c == 0.0 { 0.0 } else { c * term.f.eval(t) })
            .sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }
}

/// Builds an ordered, duplicate-free library: constant, powers by degree,
/// sin/cos pairs in grid order, then exponentials.
pub fn build_library(kinds: &[TermKind]) -> Result<FunctionLibrary> {
    if kinds.is_empty() {
        return Err(invalid("kinds", "library needs at least one term family"));
    }
    let mut constant = false;
    let mut degree = 0u32;
    let mut waves: Vec<f64> = Vec::new();
    let mut rates: Vec<f64> = Vec::new();
    for kind in kinds {
        match kind {
            TermKind::Constant => constant = true,
            TermKind::Linear => {
                constant = true;
                degree = degree.max(1);
            }
            TermKind::Polynomial(p) => {
                constant = true;
                degree = degree.max(*p);
            }
            TermKind::Sinusoid(grid) => {
                if grid.is_empty() {
                    return Err(Error::EmptyGrid("sinusoid"));
                }
                waves.extend(grid.iter().copied());
            }
            TermKind::Exponential(grid) => {
                if grid.is_empty() {
                    return Err(Error::EmptyGrid("exponential"));
                }
                rates.extend(grid.iter().copied());
            }
        }
    }
    let mut fns = Vec::new();
    if constant {
        fns.push(TermFn::Constant);
    }
    fns.extend((1..=degree).map(TermFn::Power));
    for w in waves {
        if !w.is_finite() || w == 0.0 {
            return Err(invalid("sinusoid", format!("frequency must be finite and nonzero, got {w}")));
        }
        fns.push(TermFn::Sin(w));
        fns.push(TermFn::Cos(w));
    }
    for r in rates {
        if !r.is_finite() || r == 0.0 {
            return Err(invalid("exponential", format!("rate must be finite and nonzero, got {r}")));
        }
        fns.push(TermFn::Exp(r));
    }
    let mut terms: Vec<LibraryTerm> = Vec::new();
    for f in fns {
        let name = f.name();
        if !terms.iter().any(|t| t.name == name) {
            terms.push(LibraryTerm { name, f });
        }
    }
    Ok(FunctionLibrary { terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn linear_is_one_and_t() {
        assert_eq!(FunctionLibrary::linear().names(), vec!["1", "t"]);
    }

    #[test]
    fn sinusoid_adds_pair() {
        let lib = build_library(&[TermKind::Linear, TermKind::Sinusoid(vec![0.1])]).unwrap();
        assert_eq!(lib.names(), vec!["1", "t", "sin(0.1t)", "cos(0.1t)"]);
        let row = lib.eval_row(2.0);
        assert_eq!(row[0], 1.0);
        assert_eq!(row[1], 2.0);
        assert!((row[2] - 0.2f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn polynomial_adds_square_and_dedups() {
        let lib = build_library(&[TermKind::Polynomial(2), TermKind::Linear]).unwrap();
        assert_eq!(lib.names(), vec!["1", "t", "t^2"]);
        assert_eq!(lib.eval_row(3.0)[2], 9.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(build_library(&[]).is_err());
        assert_eq!(
            build_library(&[TermKind::Sinusoid(vec![])]),
            Err(Error::EmptyGrid("sinusoid"))
        );
        assert_eq!(
            build_library(&[TermKind::Exponential(vec![])]),
            Err(Error::EmptyGrid("exponential"))
        );
    }
}
