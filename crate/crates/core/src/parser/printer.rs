use std::fmt::Write;

use crate::expr::Expr;
use crate::model::{AttributeValue, InitialValue, SystemSpec};

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        _ => 4,
    }
}

fn write_expr(e: &Expr, min_prec: u8, out: &mut String) {
    let needs_parens = precedence(e) < min_prec;
    if needs_parens {
        out.push('(');
    }
    match e {
        Expr::Const(v) => out.push_str(&num(*v)),
        Expr::Time => out.push('t'),
        Expr::Comp(n) | Expr::Attr(n) | Expr::Input(n) => out.push_str(n),
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            write_expr(a, 1, out);
            out.push_str(if matches!(e, Expr::Add(..)) { " + " } else { " - " });
            write_expr(b, 2, out);
        }
        Expr::Mul(a, b) | Expr::Div(a, b) => {
            write_expr(a, 2, out);
            out.push_str(if matches!(e, Expr::Mul(..)) { " * " } else { " / " });
            write_expr(b, 3, out);
        }
        Expr::Neg(a) => {
            out.push('-');
            // `-<literal>` would read back as a negative constant.
            let min = if matches!(**a, Expr::Const(_)) { 5 } else { 3 };
            write_expr(a, min, out);
        }
        Expr::Exp(a) => {
            out.push_str("exp(");
            write_expr(a, 0, out);
            out.push(')');
        }
        Expr::Min(a, b) | Expr::Max(a, b) => {
            out.push_str(if matches!(e, Expr::Min(..)) { "min(" } else { "max(" });
            write_expr(a, 0, out);
            out.push_str(", ");
            write_expr(b, 0, out);
            out.push(')');
        }
        Expr::Indicator(a, cmp, b) => {
            out.push_str("ind(");
            write_expr(a, 0, out);
            let _ = write!(out, " {} ", cmp.symbol());
            write_expr(b, 0, out);
            out.push(')');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, 0, &mut out);
    out
}

/// Renders a spec in the model file syntax. Parsing the output yields an
/// identical spec.
pub fn print_model(spec: &SystemSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "system {}", spec.name);
    if !spec.attributes.is_empty() || !spec.correlations.is_empty() || !spec.inputs.is_empty() {
        out.push('\n');
    }
    for a in &spec.attributes {
        let _ = match a.value {
            AttributeValue::Fixed(v) => writeln!(out, "attr {} = {}", a.name, num(v)),
            AttributeValue::Gaussian { mean, sd } => {
                writeln!(out, "attr {} = normal({}, {})", a.name, num(mean), num(sd))
            }
        };
    }
    for c in &spec.correlations {
        let _ = writeln!(out, "corr {} {} = {}", c.first, c.second, num(c.rho));
    }
    for i in &spec.inputs {
        let steps: Vec<String> = i.breakpoints.iter().map(|(t, v)| format!("{}:{}", num(*t), num(*v))).collect();
        let _ = writeln!(out, "input {} = steps({})", i.name, steps.join(", "));
    }
    for c in &spec.components {
        let _ = writeln!(out, "\ncomponent {} : {} {{", c.name, c.kind.keyword());
        let _ = writeln!(out, "  drift = {};", print_expr(&c.drift));
        if let Some(s) = &c.sigma {
            let _ = writeln!(out, "  sigma = {};", print_expr(s));
        }
        let _ = match &c.init {
            InitialValue::Fixed(v) => writeln!(out, "  init = {};", num(*v)),
            InitialValue::Attr(a) => writeln!(out, "  init = {a};"),
        };
        out.push_str("}\n");
    }
    out
}
