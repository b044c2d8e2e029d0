use super::expr::{Expr, Func, Node, Var};

/// Exact partial derivative with respect to one variable.
pub(crate) fn derivative(e: &Expr, v: Var) -> Expr {
    match e.node() {
        Node::Const(_) => Expr::constant(0.0),
        Node::Var(w) => Expr::constant(if *w == v { 1.0 } else { 0.0 }),
        Node::Neg(a) => Expr::neg(derivative(a, v)),
        Node::Add(a, b) => Expr::add(derivative(a, v), derivative(b, v)),
        Node::Sub(a, b) => Expr::sub(derivative(a, v), derivative(b, v)),
        Node::Mul(a, b) => Expr::add(
            Expr::mul(derivative(a, v), b.clone()),
            Expr::mul(a.clone(), derivative(b, v)),
        ),
        Node::Div(a, b) => {
            let da = derivative(a, v);
            let db = derivative(b, v);
            if db.as_const() == Some(0.0) {
                return Expr::div(da, b.clone());
            }
            Expr::div(
                Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db)),
                Expr::pow(b.clone(), 2),
            )
        }
        Node::Pow(a, n) => {
            let da = derivative(a, v);
            Expr::mul(
                Expr::mul(Expr::constant(f64::from(*n)), Expr::pow(a.clone(), n - 1)),
                da,
            )
        }
        Node::Call(f, a) => {
            let da = derivative(a, v);
            if da.as_const() == Some(0.0) {
                return Expr::constant(0.0);
            }
            let outer = match f {
                Func::Sin => Expr::call(Func::Cos, a.clone()),
                Func::Cos => Expr::neg(Expr::call(Func::Sin, a.clone())),
                Func::Exp => e.clone(),
                Func::Tanh => Expr::sub(Expr::constant(1.0), Expr::pow(e.clone(), 2)),
                Func::Sqrt => Expr::div(Expr::constant(0.5), e.clone()),
                Func::Log => Expr::div(Expr::constant(1.0), a.clone()),
            };
            Expr::mul(outer, da)
        }
    }
}
