use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::expr::{Expr, Func, Node, Var};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(Var),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, i32),
    Call(Func, u32),
}

/// Why a slot failed to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainFault {
    DivisionByZero,
    OutsideFunctionDomain,
    NonFinite,
}

/// Straight-line program for an expression DAG. Shared subtrees are
/// evaluated once.
#[derive(Debug, Clone)]
pub(crate) struct Tape {
    ops: Vec<Op>,
    // subexpression for every slot, kept for error reporting
    sources: Vec<Expr>,
}

impl Tape {
    pub(crate) fn compile(root: &Expr) -> Tape {
        let mut tape = Tape { ops: Vec::new(), sources: Vec::new() };
        let mut seen: BTreeMap<usize, u32> = BTreeMap::new();
        tape.emit(root, &mut seen);
        tape
    }

    fn emit(&mut self, e: &Expr, seen: &mut BTreeMap<usize, u32>) -> u32 {
        let key = alloc::sync::Arc::as_ptr(&e.0) as usize;
        if let Some(&slot) = seen.get(&key) {
            return slot;
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(*c),
            Node::Var(v) => Op::Var(*v),
            Node::Neg(a) => Op::Neg(self.emit(a, seen)),
            Node::Add(a, b) => {
                let (i, j) = (self.emit(a, seen), self.emit(b, seen));
                Op::Add(i, j)
            }
            Node::Sub(a, b) => {
                let (i, j) = (self.emit(a, seen), self.emit(b, seen));
                Op::Sub(i, j)
            }
            Node::Mul(a, b) => {
                let (i, j) = (self.emit(a, seen), self.emit(b, seen));
                Op::Mul(i, j)
            }
            Node::Div(a, b) => {
                let (i, j) = (self.emit(a, seen), self.emit(b, seen));
                Op::Div(i, j)
            }
            Node::Pow(a, n) => Op::Pow(self.emit(a, seen), *n),
            Node::Call(f, a) => Op::Call(*f, self.emit(a, seen)),
        };
        let slot = self.ops.len() as u32;
        self.ops.push(op);
        self.sources.push(e.clone());
        seen.insert(key, slot);
        slot
    }

    pub(crate) fn len(&self) -> usize {
        self.ops.len()
    }

    pub(crate) fn source(&self, slot: usize) -> &Expr {
        &self.sources[slot]
    }

    /// Evaluates into `scratch`, returning the root value or the failing slot.
    pub(crate) fn run(
        &self,
        t: f64,
        x: &[f64],
        xi: &[f64],
        scratch: &mut Vec<f64>,
    ) -> Result<f64, (usize, DomainFault)> {
        scratch.clear();
        scratch.reserve(self.ops.len());
        for (slot, op) in self.ops.iter().enumerate() {
            let r = |i: u32| scratch[i as usize];
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(Var::T) => t,
                Op::Var(Var::X(i)) => x[i],
                Op::Var(Var::Xi(i)) => xi[i],
                Op::Neg(a) => -r(a),
                Op::Add(a, b) => r(a) + r(b),
                Op::Sub(a, b) => r(a) - r(b),
                Op::Mul(a, b) => r(a) * r(b),
                Op::Div(a, b) => {
                    let den = r(b);
                    if den == 0.0 {
                        return Err((slot, DomainFault::DivisionByZero));
                    }
                    r(a) / den
                }
                Op::Pow(a, n) => {
                    let base = r(a);
                    if base == 0.0 && n < 0 {
                        return Err((slot, DomainFault::DivisionByZero));
                    }
                    libm::pow(base, f64::from(n))
                }
                Op::Call(f, a) => match f.apply(r(a)) {
                    Some(v) => v,
                    None if matches!(f, Func::Sqrt | Func::Log) => {
                        return Err((slot, DomainFault::OutsideFunctionDomain))
                    }
                    None => return Err((slot, DomainFault::NonFinite)),
                },
            };
            if !v.is_finite() {
                return Err((slot, DomainFault::NonFinite));
            }
            scratch.push(v);
        }
        Ok(*scratch.last().expect("tape is never empty"))
    }
}
