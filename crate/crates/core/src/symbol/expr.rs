use alloc::string::String;
use alloc::sync::Arc;
use core::fmt;

/// A variable of a time-dependent phase-space symbol. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    T,
    X(usize),
    Xi(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
    Log,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            _ => return None,
        })
    }

    /// Applies the function, returning `None` outside its real domain.
    pub(crate) fn apply(self, v: f64) -> Option<f64> {
        let r = match self {
            Func::Sin => libm::sin(v),
            Func::Cos => libm::cos(v),
            Func::Exp => libm::exp(v),
            Func::Tanh => libm::tanh(v),
            Func::Sqrt => {
                if v < 0.0 {
                    return None;
                }
                libm::sqrt(v)
            }
            Func::Log => {
                if v <= 0.0 {
                    return None;
                }
                libm::log(v)
            }
        };
        r.is_finite().then_some(r)
    }
}

#[derive(Debug, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Var(Var),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, i32),
    Call(Func, Expr),
}

/// Shared, immutable expression tree. Equality is structural.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Expr(pub(crate) Arc<Node>);

impl Expr {
    pub(crate) fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn constant(c: f64) -> Expr {
        // -0.0 and 0.0 print and compare alike
        Expr(Arc::new(Node::Const(if c == 0.0 { 0.0 } else { c })))
    }

    pub(crate) fn var(v: Var) -> Expr {
        Expr(Arc::new(Node::Var(v)))
    }

    pub(crate) fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, v: f64) -> bool {
        self.as_const() == Some(v)
    }

    pub(crate) fn neg(a: Expr) -> Expr {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr(Arc::new(Node::Neg(a))),
        }
    }

    pub(crate) fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x + y),
            (Some(x), None) if x == 0.0 => b,
            (None, Some(y)) if y == 0.0 => a,
            _ => {
                if let Node::Neg(nb) = b.node() {
                    return Expr::sub(a, nb.clone());
                }
                Expr(Arc::new(Node::Add(a, b)))
            }
        }
    }

    pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x - y),
            (Some(x), None) if x == 0.0 => Expr::neg(b),
            (None, Some(y)) if y == 0.0 => a,
            _ => {
                if let Node::Neg(nb) = b.node() {
                    return Expr::add(a, nb.clone());
                }
                Expr(Arc::new(Node::Sub(a, b)))
            }
        }
    }

    pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x * y),
            (Some(x), _) if x == 0.0 => Expr::constant(0.0),
            (_, Some(y)) if y == 0.0 => Expr::constant(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            (None, Some(_)) => Expr(Arc::new(Node::Mul(b, a))),
            _ => Expr(Arc::new(Node::Mul(a, b))),
        }
    }

    pub(crate) fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 && (x / y).is_finite() => Expr::constant(x / y),
            (Some(x), _) if x == 0.0 && !b.is_const(0.0) => Expr::constant(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr(Arc::new(Node::Div(a, b))),
        }
    }

    pub(crate) fn pow(a: Expr, n: i32) -> Expr {
        match n {
            0 => Expr::constant(1.0),
            1 => a,
            _ => match a.as_const() {
                Some(c) if libm::pow(c, f64::from(n)).is_finite() => {
                    Expr::constant(libm::pow(c, f64::from(n)))
                }
                _ => {
                    if let Node::Pow(base, m) = a.node() {
                        if let Some(k) = m.checked_mul(n) {
                            return Expr::pow(base.clone(), k);
                        }
                    }
                    Expr(Arc::new(Node::Pow(a, n)))
                }
            },
        }
    }

    pub(crate) fn call(f: Func, a: Expr) -> Expr {
        if let Some(c) = a.as_const() {
            if let Some(v) = f.apply(c) {
                return Expr::constant(v);
            }
        }
        Expr(Arc::new(Node::Call(f, a)))
    }

    /// Rebuilds the tree through the simplifying constructors.
    pub(crate) fn simplify(&self) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Neg(a) => Expr::neg(a.simplify()),
            Node::Add(a, b) => Expr::add(a.simplify(), b.simplify()),
            Node::Sub(a, b) => Expr::sub(a.simplify(), b.simplify()),
            Node::Mul(a, b) => Expr::mul(a.simplify(), b.simplify()),
            Node::Div(a, b) => Expr::div(a.simplify(), b.simplify()),
            Node::Pow(a, n) => Expr::pow(a.simplify(), *n),
            Node::Call(f, a) => Expr::call(*f, a.simplify()),
        }
    }

    pub(crate) fn uses(&self, pred: &dyn Fn(Var) -> bool) -> bool {
        match self.node() {
            Node::Const(_) => false,
            Node::Var(v) => pred(*v),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.uses(pred),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.uses(pred) || b.uses(pred)
            }
        }
    }

    /// Size of the tree counted with repetition.
    pub(crate) fn tree_size(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => 1 + a.tree_size(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                1 + a.tree_size() + b.tree_size()
            }
        }
    }

    pub(crate) fn display(&self, dim: usize) -> Printer<'_> {
        Printer { expr: self, dim }
    }
}

pub(crate) struct Printer<'a> {
    expr: &'a Expr,
    dim: usize,
}

fn write_var(f: &mut fmt::Formatter<'_>, v: Var, dim: usize) -> fmt::Result {
    match (v, dim) {
        (Var::T, _) => f.write_str("t"),
        (Var::X(_), 1) => f.write_str("x"),
        (Var::Xi(_), 1) => f.write_str("xi"),
        (Var::X(i), _) => write!(f, "x{}", i + 1),
        (Var::Xi(i), _) => write!(f, "xi{}", i + 1),
    }
}

impl fmt::Display for Printer<'_> {
    // Fully parenthesized so that the output reparses to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.dim;
        match self.expr.node() {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "(-{})", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Node::Var(v) => write_var(f, *v, d),
            Node::Neg(a) => write!(f, "(-{})", a.display(d)),
            Node::Add(a, b) => write!(f, "({} + {})", a.display(d), b.display(d)),
            Node::Sub(a, b) => write!(f, "({} - {})", a.display(d), b.display(d)),
            Node::Mul(a, b) => write!(f, "({} * {})", a.display(d), b.display(d)),
            Node::Div(a, b) => write!(f, "({} / {})", a.display(d), b.display(d)),
            Node::Pow(a, n) => {
                if *n < 0 {
                    write!(f, "({}^({}))", a.display(d), n)
                } else {
                    write!(f, "({}^{})", a.display(d), n)
                }
            }
            Node::Call(func, a) => write!(f, "{}({})", func.name(), a.display(d)),
        }
    }
}

pub(crate) fn render(expr: &Expr, dim: usize) -> String {
    use alloc::string::ToString;
    expr.display(dim).to_string()
}
