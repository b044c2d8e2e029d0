//! Real phase-space symbols `q(t, x, xi)`: parsing, exact differentiation and
//! evaluation.
//!
//! Every other module obtains `a`, `b` and their derivatives from here.
//! Differentiation is symbolic, so high-order derivatives (needed for the
//! `kappa_N` constants) carry no finite-difference noise.

mod diff;
mod eval;
mod expr;
mod parse;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::phase::PhasePoint;

pub use eval::DomainFault;
pub use expr::{Func, Var};
use expr::Expr;

/// Derivative order cap used by [`SymbolExpr::differentiate`].
pub const DEFAULT_ORDER_CAP: u32 = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SymbolError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax { offset: usize, expected: Vec<&'static str>, found: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable '{name}' at byte {offset} has index {index} but the symbol dimension is {dim}")]
    DimensionMismatch { name: String, index: usize, dim: usize, offset: usize },
    #[error("symbol dimension must be positive")]
    ZeroDimension,
    #[error("derivative of order {order} exceeds the cap {cap}")]
    OrderCapExceeded { order: u32, cap: u32 },
    #[error("evaluation failed ({fault:?}) in subexpression {subexpr}")]
    EvaluationDomain { subexpr: String, fault: DomainFault },
    #[error("point has dimension {found}, symbol has dimension {expected}")]
    PointDimension { expected: usize, found: usize },
}

/// Derivative multi-index: `alpha` counts x-derivatives, `beta` xi-derivatives.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
}

impl MultiIndex {
    pub fn new(alpha: Vec<u32>, beta: Vec<u32>) -> Self {
        assert_eq!(alpha.len(), beta.len(), "alpha and beta must have the same length");
        Self { alpha, beta }
    }

    pub fn zero(dim: usize) -> Self {
        Self { alpha: vec![0; dim], beta: vec![0; dim] }
    }

    /// One-dimensional index `(alpha, beta)`.
    pub fn new1(alpha: u32, beta: u32) -> Self {
        Self { alpha: vec![alpha], beta: vec![beta] }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn order(&self) -> u32 {
        self.alpha.iter().chain(&self.beta).sum()
    }

    /// All indices of exactly the given total order, in lexicographic order.
    pub fn all_of_order(dim: usize, order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut slots = vec![0u32; 2 * dim];
        fill(&mut slots, 0, order, &mut out);
        out.sort();
        out
    }

    /// All indices with `lo <= order <= hi`.
    pub fn all_in_range(dim: usize, lo: u32, hi: u32) -> Vec<MultiIndex> {
        (lo..=hi).flat_map(|k| Self::all_of_order(dim, k)).collect()
    }

    /// The variable and the index one order lower that produce `self` by one
    /// differentiation. `None` for the zero index.
    fn parent(&self) -> Option<(MultiIndex, Var)> {
        let mut p = self.clone();
        if let Some(i) = p.beta.iter().rposition(|&b| b > 0) {
            p.beta[i] -= 1;
            return Some((p, Var::Xi(i)));
        }
        if let Some(i) = p.alpha.iter().rposition(|&a| a > 0) {
            p.alpha[i] -= 1;
            return Some((p, Var::X(i)));
        }
        None
    }
}

fn fill(slots: &mut [u32], at: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if at + 1 == slots.len() {
        slots[at] = remaining;
        let n = slots.len() / 2;
        out.push(MultiIndex { alpha: slots[..n].to_vec(), beta: slots[n..].to_vec() });
        return;
    }
    for k in 0..=remaining {
        slots[at] = k;
        fill(slots, at + 1, remaining - k, out);
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.alpha)?;
        f.write_str(",")?;
        write_tuple(f, &self.beta)
    }
}

fn write_tuple(f: &mut fmt::Formatter<'_>, v: &[u32]) -> fmt::Result {
    f.write_str("(")?;
    for (i, k) in v.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        write!(f, "{k}")?;
    }
    f.write_str(")")
}

/// A parsed real symbol over `t, x_1..x_n, xi_1..xi_n`.
///
/// Immutable; evaluation and differentiation are pure, so values may be
/// shared across threads.
#[derive(Debug, Clone)]
pub struct SymbolExpr {
    root: Expr,
    dim: usize,
    tape: eval::Tape,
}

impl PartialEq for SymbolExpr {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.root == other.root
    }
}

impl SymbolExpr {
    fn from_root(root: Expr, dim: usize) -> Self {
        let tape = eval::Tape::compile(&root);
        Self { root, dim, tape }
    }

    /// Parses `text`. For `dim == 1` the names `x` and `xi` alias `x1`, `xi1`.
    pub fn parse(text: &str, dim: usize) -> Result<Self, SymbolError> {
        parse::parse(text, dim).map(|root| Self::from_root(root, dim))
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        Self::from_root(Expr::constant(c), dim)
    }

    pub fn var(v: Var, dim: usize) -> Self {
        Self::from_root(Expr::var(v), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.root.as_const()
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    pub fn depends_on_time(&self) -> bool {
        self.root.uses(&|v| v == Var::T)
    }

    /// True when the symbol does not involve any `xi` variable.
    pub fn is_position_only(&self) -> bool {
        !self.root.uses(&|v| matches!(v, Var::Xi(_)))
    }

    /// Number of nodes counted with repetition.
    pub fn size(&self) -> usize {
        self.root.tree_size()
    }

    /// Number of distinct nodes actually evaluated.
    pub fn dag_size(&self) -> usize {
        self.tape.len()
    }

    pub fn simplify(&self) -> Self {
        Self::from_root(self.root.simplify(), self.dim)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, Expr::add)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, Expr::sub)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.combine(other, Expr::mul)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_root(Expr::mul(Expr::constant(c), self.root.clone()), self.dim)
    }

    fn combine(&self, other: &Self, op: fn(Expr, Expr) -> Expr) -> Self {
        assert_eq!(self.dim, other.dim, "symbol dimensions differ");
        Self::from_root(op(self.root.clone(), other.root.clone()), self.dim)
    }

    /// First derivative with respect to a single variable.
    pub fn partial(&self, v: Var) -> Self {
        Self::from_root(diff::derivative(&self.root, v), self.dim)
    }

    /// `d_t^{t_order} d_x^alpha d_xi^beta` with the default order cap.
    pub fn differentiate(&self, idx: &MultiIndex, t_order: u32) -> Result<Self, SymbolError> {
        self.differentiate_capped(idx, t_order, DEFAULT_ORDER_CAP)
    }

    pub fn differentiate_capped(
        &self,
        idx: &MultiIndex,
        t_order: u32,
        cap: u32,
    ) -> Result<Self, SymbolError> {
        if idx.dim() != self.dim {
            return Err(SymbolError::PointDimension { expected: self.dim, found: idx.dim() });
        }
        let order = idx.order() + t_order;
        if order > cap {
            return Err(SymbolError::OrderCapExceeded { order, cap });
        }
        let mut e = self.root.clone();
        for _ in 0..t_order {
            e = diff::derivative(&e, Var::T);
        }
        for (i, &k) in idx.alpha.iter().enumerate() {
            for _ in 0..k {
                e = diff::derivative(&e, Var::X(i));
            }
        }
        for (i, &k) in idx.beta.iter().enumerate() {
            for _ in 0..k {
                e = diff::derivative(&e, Var::Xi(i));
            }
        }
        Ok(Self::from_root(e, self.dim))
    }

    /// Evaluates at `(t, p)`. A non-finite intermediate is an error.
    pub fn evaluate(&self, t: f64, p: &PhasePoint) -> Result<f64, SymbolError> {
        self.eval_slices(t, &p.x, &p.xi)
    }

    pub fn eval_slices(&self, t: f64, x: &[f64], xi: &[f64]) -> Result<f64, SymbolError> {
        let mut scratch = Vec::new();
        self.eval_with(t, x, xi, &mut scratch)
    }

    /// Evaluation reusing a caller-owned scratch buffer.
    pub fn eval_with(
        &self,
        t: f64,
        x: &[f64],
        xi: &[f64],
        scratch: &mut Vec<f64>,
    ) -> Result<f64, SymbolError> {
        if x.len() != self.dim || xi.len() != self.dim {
            return Err(SymbolError::PointDimension {
                expected: self.dim,
                found: x.len().max(xi.len()),
            });
        }
        self.tape.run(t, x, xi, scratch).map_err(|(slot, fault)| {
            SymbolError::EvaluationDomain {
                subexpr: expr::render(self.tape.source(slot), self.dim),
                fault,
            }
        })
    }

    /// One-dimensional convenience evaluation.
    pub fn eval1(&self, t: f64, x: f64, xi: f64) -> Result<f64, SymbolError> {
        self.eval_slices(t, &[x], &[xi])
    }
}

impl fmt::Display for SymbolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.display(self.dim).fmt(f)
    }
}

/// Memoized derivatives of one symbol, built incrementally so that each
/// index costs one differentiation of its parent.
#[derive(Debug, Clone)]
pub struct DerivativeTable {
    base: SymbolExpr,
    cap: u32,
    cache: BTreeMap<MultiIndex, SymbolExpr>,
}

impl DerivativeTable {
    pub fn new(base: SymbolExpr, cap: u32) -> Self {
        let mut cache = BTreeMap::new();
        cache.insert(MultiIndex::zero(base.dim()), base.clone());
        Self { base, cap, cache }
    }

    pub fn symbol(&self) -> &SymbolExpr {
        &self.base
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn get(&mut self, idx: &MultiIndex) -> Result<&SymbolExpr, SymbolError> {
        if idx.order() > self.cap {
            return Err(SymbolError::OrderCapExceeded { order: idx.order(), cap: self.cap });
        }
        if !self.cache.contains_key(idx) {
            let (parent, var) = idx.parent().expect("zero index is always cached");
            let d = self.get(&parent)?.partial(var);
            self.cache.insert(idx.clone(), d);
        }
        Ok(&self.cache[idx])
    }

    /// Gradient `(d_x q, d_xi q)` as 2n symbols.
    pub fn gradient(&mut self) -> Result<Vec<SymbolExpr>, SymbolError> {
        let n = self.base.dim();
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..2 * n {
            let mut idx = MultiIndex::zero(n);
            if i < n {
                idx.alpha[i] = 1;
            } else {
                idx.beta[i - n] = 1;
            }
            out.push(self.get(&idx)?.clone());
        }
        Ok(out)
    }
}
