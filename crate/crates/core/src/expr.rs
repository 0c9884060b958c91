//! Expression trees for drifts, intensities and diffusion coefficients.
//!
//! An [`Expr`] is the user-facing tree with name references. Before it is
//! evaluated in a hot loop it is resolved against a [`SymbolTable`] into a
//! [`CompiledExpr`] whose references are plain indices.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Comparison operator inside an indicator `ind(lhs CMP rhs)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cmp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Eq => "==",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Eq => lhs == rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Gt => lhs > rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// The model time `t`.
    Time,
    /// Left-limit value of a state component.
    Comp(String),
    /// A time-fixed attribute (possibly random, drawn once per replicate).
    Attr(String),
    /// Left-limit value of an exogenous piecewise-constant input.
    Input(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// Evaluates to exactly 1.0 when the comparison holds, 0.0 otherwise.
    Indicator(Box<Expr>, Cmp, Box<Expr>),
}

/// Shorthand constructors used by the model builders.
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }
    pub fn comp(name: &str) -> Expr {
        Expr::Comp(name.to_string())
    }
    pub fn attr(name: &str) -> Expr {
        Expr::Attr(name.to_string())
    }
    pub fn input(name: &str) -> Expr {
        Expr::Input(name.to_string())
    }
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }
    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }
    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }
    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }
    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }
    pub fn exp(a: Expr) -> Expr {
        Expr::Exp(Box::new(a))
    }
    pub fn min(a: Expr, b: Expr) -> Expr {
        Expr::Min(Box::new(a), Box::new(b))
    }
    pub fn max(a: Expr, b: Expr) -> Expr {
        Expr::Max(Box::new(a), Box::new(b))
    }
    pub fn ind(a: Expr, cmp: Cmp, b: Expr) -> Expr {
        Expr::Indicator(Box::new(a), cmp, Box::new(b))
    }

    /// Sum of terms, left-associated. Empty input gives `Const(0)`.
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        let mut it = terms.into_iter();
        match it.next() {
            None => Expr::Const(0.0),
            Some(first) => it.fold(first, Expr::add),
        }
    }

    /// Product of factors, left-associated. Empty input gives `Const(1)`.
    pub fn product(factors: impl IntoIterator<Item = Expr>) -> Expr {
        let mut it = factors.into_iter();
        match it.next() {
            None => Expr::Const(1.0),
            Some(first) => it.fold(first, Expr::mul),
        }
    }
}

impl Expr {
    /// Immediate children, in left-to-right order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Time | Expr::Comp(_) | Expr::Attr(_) | Expr::Input(_) => vec![],
            Expr::Neg(a) | Expr::Exp(a) => vec![a],
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b)
            | Expr::Indicator(a, _, b) => vec![a, b],
        }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for child in self.children() {
            child.visit(f);
        }
    }

    pub fn component_refs(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Comp(name) = e {
                out.insert(name.as_str());
            }
        });
        out
    }

    pub fn attribute_refs(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Attr(name) = e {
                out.insert(name.as_str());
            }
        });
        out
    }

    pub fn input_refs(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Input(name) = e {
                out.insert(name.as_str());
            }
        });
        out
    }

    pub fn references_time(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Time));
        found
    }

    /// True when the tree mentions only constants and time.
    pub fn is_deterministic_in_time(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |e| {
            ok &= !matches!(e, Expr::Comp(_) | Expr::Attr(_) | Expr::Input(_));
        });
        ok
    }

    /// Prefix s-expression form, used by the canonical JSON serialization.
    pub fn to_sexpr(&self) -> String {
        let mut s = String::new();
        self.write_sexpr(&mut s);
        s
    }

    fn write_sexpr(&self, out: &mut String) {
        use std::fmt::Write;
        let head = match self {
            Expr::Const(v) => {
                let _ = write!(out, "{v:?}");
                return;
            }
            Expr::Time => {
                out.push('t');
                return;
            }
            Expr::Comp(n) => {
                let _ = write!(out, "(comp {n})");
                return;
            }
            Expr::Attr(n) => {
                let _ = write!(out, "(attr {n})");
                return;
            }
            Expr::Input(n) => {
                let _ = write!(out, "(input {n})");
                return;
            }
            Expr::Add(..) => "+",
            Expr::Sub(..) => "-",
            Expr::Mul(..) => "*",
            Expr::Div(..) => "/",
            Expr::Neg(_) => "neg",
            Expr::Exp(_) => "exp",
            Expr::Min(..) => "min",
            Expr::Max(..) => "max",
            Expr::Indicator(_, cmp, _) => cmp.symbol(),
        };
        out.push('(');
        if matches!(self, Expr::Indicator(..)) {
            out.push_str("ind ");
        }
        out.push_str(head);
        for child in self.children() {
            out.push(' ');
            child.write_sexpr(out);
        }
        out.push(')');
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::print_expr(self))
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("exp overflow: exp({0}) is not finite")]
    ExpOverflow(f64),
    #[error("non-finite intermediate value")]
    NonFinite,
    #[error("unresolved reference `{0}`")]
    Unresolved(String),
}

/// Index assignment for every name an expression may reference.
#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    pub components: HashMap<String, usize>,
    pub attributes: HashMap<String, usize>,
    pub inputs: HashMap<String, usize>,
}

/// Values an expression is evaluated against.
#[derive(Clone, Copy, Debug)]
pub struct Env<'a> {
    pub time: f64,
    pub states: &'a [f64],
    pub attributes: &'a [f64],
    pub inputs: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub enum CompiledExpr {
    Const(f64),
    Time,
    State(usize),
    Attr(usize),
    Input(usize),
    Add(Box<CompiledExpr>, Box<CompiledExpr>),
    Sub(Box<CompiledExpr>, Box<CompiledExpr>),
    Mul(Box<CompiledExpr>, Box<CompiledExpr>),
    Div(Box<CompiledExpr>, Box<CompiledExpr>),
    Neg(Box<CompiledExpr>),
    Exp(Box<CompiledExpr>),
    Min(Box<CompiledExpr>, Box<CompiledExpr>),
    Max(Box<CompiledExpr>, Box<CompiledExpr>),
    Indicator(Box<CompiledExpr>, Cmp, Box<CompiledExpr>),
}

impl Expr {
    pub fn compile(&self, symbols: &SymbolTable) -> Result<CompiledExpr, EvalError> {
        let bin = |a: &Expr, b: &Expr| -> Result<(Box<CompiledExpr>, Box<CompiledExpr>), EvalError> {
            Ok((Box::new(a.compile(symbols)?), Box::new(b.compile(symbols)?)))
        };
        let lookup = |map: &HashMap<String, usize>, name: &str| {
            map.get(name).copied().ok_or_else(|| EvalError::Unresolved(name.to_string()))
        };
        Ok(match self {
            Expr::Const(v) => CompiledExpr::Const(*v),
            Expr::Time => CompiledExpr::Time,
            Expr::Comp(n) => CompiledExpr::State(lookup(&symbols.components, n)?),
            Expr::Attr(n) => CompiledExpr::Attr(lookup(&symbols.attributes, n)?),
            Expr::Input(n) => CompiledExpr::Input(lookup(&symbols.inputs, n)?),
            Expr::Add(a, b) => {
                let (a, b) = bin(a, b)?;
                CompiledExpr::Add(a, b)
            }
            Expr::Sub(a, b) => {
                let (a, b) = bin(a, b)?;
                CompiledExpr::Sub(a, b)
            }
            Expr::Mul(a, b) => {
                let (a, b) = bin(a, b)?;
                CompiledExpr::Mul(a, b)
            }
            Expr::Div(a, b) => {
                let (a, b) = bin(a, b)?;
                CompiledExpr::Div(a, b)
            }
            Expr::Min(a, b) => {
                let (a, b) = bin(a, b)?;
                CompiledExpr::Min(a, b)
            }
            Expr::Max(a, b) => {
                let (a, b) = bin(a, b)?;
                CompiledExpr::Max(a, b)
            }
            Expr::Indicator(a, cmp, b) => {
                let (a, b) = bin(a, b)?;
                CompiledExpr::Indicator(a, *cmp, b)
            }
            Expr::Neg(a) => CompiledExpr::Neg(Box::new(a.compile(symbols)?)),
            Expr::Exp(a) => CompiledExpr::Exp(Box::new(a.compile(symbols)?)),
        })
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

impl CompiledExpr {
    /// Evaluates the tree. Every non-finite outcome is reported as an error.
    pub fn eval(&self, env: &Env<'_>) -> Result<f64, EvalError> {
        match self {
            CompiledExpr::Const(v) => finite(*v),
            CompiledExpr::Time => Ok(env.time),
            CompiledExpr::State(i) => finite(env.states[*i]),
            CompiledExpr::Attr(i) => finite(env.attributes[*i]),
            CompiledExpr::Input(i) => finite(env.inputs[*i]),
            CompiledExpr::Add(a, b) => finite(a.eval(env)? + b.eval(env)?),
            CompiledExpr::Sub(a, b) => finite(a.eval(env)? - b.eval(env)?),
            CompiledExpr::Mul(a, b) => finite(a.eval(env)? * b.eval(env)?),
            CompiledExpr::Div(a, b) => {
                let num = a.eval(env)?;
                let den = b.eval(env)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                finite(num / den)
            }
            CompiledExpr::Neg(a) => Ok(-a.eval(env)?),
            CompiledExpr::Exp(a) => {
                let x = a.eval(env)?;
                let y = x.exp();
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(EvalError::ExpOverflow(x))
                }
            }
            CompiledExpr::Min(a, b) => Ok(a.eval(env)?.min(b.eval(env)?)),
            CompiledExpr::Max(a, b) => Ok(a.eval(env)?.max(b.eval(env)?)),
            CompiledExpr::Indicator(a, cmp, b) => Ok(if cmp.holds(a.eval(env)?, b.eval(env)?) { 1.0 } else { 0.0 }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_eval(e: &Expr, states: &[f64]) -> Result<f64, EvalError> {
        let mut symbols = SymbolTable::default();
        for (i, n) in ["X1", "X2"].iter().enumerate() {
            symbols.components.insert(n.to_string(), i);
        }
        let env = Env { time: 0.5, states, attributes: &[], inputs: &[] };
        e.compile(&symbols)?.eval(&env)
    }

    #[test]
    fn indicator_is_zero_or_one() {
        let e = Expr::ind(Expr::Time, Cmp::Le, Expr::c(1.0));
        assert_eq!(env_eval(&e, &[0.0, 0.0]).unwrap(), 1.0);
        let e = Expr::ind(Expr::comp("X1"), Cmp::Gt, Expr::c(1.0));
        assert_eq!(env_eval(&e, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn division_by_zero_is_tagged() {
        let e = Expr::div(Expr::c(1.0), Expr::comp("X2"));
        assert_eq!(env_eval(&e, &[1.0, 0.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn exp_overflow_is_tagged() {
        let e = Expr::exp(Expr::comp("X1"));
        assert!(matches!(env_eval(&e, &[1000.0, 0.0]), Err(EvalError::ExpOverflow(_))));
    }

    #[test]
    fn product_overflow_is_non_finite() {
        let e = Expr::mul(Expr::comp("X1"), Expr::comp("X2"));
        assert_eq!(env_eval(&e, &[1e300, 1e300]), Err(EvalError::NonFinite));
    }

    #[test]
    fn sexpr_is_prefix() {
        let e = Expr::add(Expr::attr("lambda"), Expr::mul(Expr::attr("rho"), Expr::comp("T")));
        assert_eq!(e.to_sexpr(), "(+ (attr lambda) (* (attr rho) (comp T)))");
        let e = Expr::ind(Expr::Time, Cmp::Le, Expr::c(2.0));
        assert_eq!(e.to_sexpr(), "(ind <= t 2.0)");
    }

    #[test]
    fn unresolved_name_fails_compile() {
        let e = Expr::comp("nope");
        assert_eq!(env_eval(&e, &[0.0, 0.0]), Err(EvalError::Unresolved("nope".into())));
    }
}
