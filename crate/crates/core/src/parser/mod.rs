//! Text format for model files (`.dym`).
//!
//! ```text
//! system hiv
//! attr rho = 0.01
//! attr Z = normal(0, 1)
//! input IRT = steps(0:0, 50:1)
//! component Q : ode { drift = lambda + rho * T - alpha * Q; init = 500; }
//! ```
//!
//! Parsing only checks syntax and name resolution. Model-class rules (such as a
//! state-dependent diffusion coefficient) are left to [`crate::model::validate`].

mod lexer;
mod printer;

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::expr::{Cmp, Expr};
use crate::model::{
    AttributeCorrelation, AttributeDecl, AttributeValue, ComponentKind, ComponentSpec, InitialValue, InputSchedule,
    SystemSpec,
};
use lexer::{Tok, Token};

pub use printer::{print_expr, print_model};

/// Names that cannot be declared.
const RESERVED: [&str; 7] = ["t", "exp", "min", "max", "ind", "normal", "steps"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        SourceSpan { line: line.max(1), column: column.max(1), length: length.max(1) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParseDiagnostic {
    pub span: SourceSpan,
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
}

impl ParseDiagnostic {
    fn error(span: SourceSpan, code: &'static str, message: String) -> Self {
        ParseDiagnostic { span, severity: Severity::Error, code, message }
    }

    fn warning(span: SourceSpan, code: &'static str, message: String) -> Self {
        ParseDiagnostic { span, severity: Severity::Warning, code, message }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `file:line:col: severity[code] message`
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: {self}", self.span.line, self.span.column)
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}] {}", self.code, self.message)
    }
}

/// Result of a parse: the spec (absent when any error was reported) and all
/// diagnostics, warnings included.
#[derive(Clone, Debug)]
pub struct ParseOutcome {
    pub spec: Option<SystemSpec>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

pub fn parse_model(source: &str) -> Result<SystemSpec, Vec<ParseDiagnostic>> {
    let outcome = parse_model_full(source);
    match outcome.spec {
        Some(spec) => Ok(spec),
        None => Err(outcome.diagnostics.into_iter().filter(ParseDiagnostic::is_error).collect()),
    }
}

pub fn parse_model_full(source: &str) -> ParseOutcome {
    let tokens = match lexer::tokenize(source) {
        Ok(t) => t,
        Err(d) => return ParseOutcome { spec: None, diagnostics: vec![d] },
    };
    let mut parser = Parser { tokens, pos: 0, refs: Vec::new(), decls: Vec::new() };
    let raw = match parser.model() {
        Ok(raw) => raw,
        Err(d) => return ParseOutcome { spec: None, diagnostics: vec![d] },
    };
    parser.resolve(raw)
}

type PResult<T> = Result<T, ParseDiagnostic>;

struct RawComponent {
    spec: ComponentSpec,
    sigma_span: Option<SourceSpan>,
    init_span: SourceSpan,
}

struct RawModel {
    spec: SystemSpec,
    components: Vec<RawComponent>,
    corr_spans: Vec<SourceSpan>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Every identifier used inside an expression, with its location.
    refs: Vec<(String, SourceSpan)>,
    /// Every declaration in source order.
    decls: Vec<(String, SourceSpan)>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of file".into(),
        }
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        let t = self.peek();
        Err(ParseDiagnostic::error(t.span, "SYNTAX", format!("expected {expected}, found {}", Self::describe(&t.tok))))
    }

    fn punct(&mut self, p: &'static str) -> PResult<SourceSpan> {
        if self.peek().tok == Tok::Punct(p) {
            Ok(self.bump().span)
        } else {
            self.unexpected(&format!("`{p}`"))
        }
    }

    fn eat_punct(&mut self, p: &'static str) -> bool {
        if self.peek().tok == Tok::Punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<SourceSpan> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => Ok(self.bump().span),
            _ => self.unexpected(&format!("`{kw}`")),
        }
    }

    fn ident(&mut self) -> PResult<(String, SourceSpan)> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.bump().span))
            }
            _ => self.unexpected("identifier"),
        }
    }

    /// A literal real with an optional leading minus.
    fn real(&mut self) -> PResult<f64> {
        let neg = self.eat_punct("-");
        match self.peek().tok {
            Tok::Number(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => self.unexpected("number"),
        }
    }

    fn model(&mut self) -> PResult<RawModel> {
        self.keyword("system")?;
        let (name, _) = self.ident()?;
        let mut raw = RawModel { spec: SystemSpec::new(&name), components: Vec::new(), corr_spans: Vec::new() };
        loop {
            let tok = self.peek().tok.clone();
            match tok {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "attr" => {
                    self.bump();
                    let (name, span) = self.ident()?;
                    self.punct("=")?;
                    let value = if matches!(&self.peek().tok, Tok::Ident(s) if s == "normal") {
                        self.bump();
                        self.punct("(")?;
                        let mean = self.real()?;
                        self.punct(",")?;
                        let sd_span = self.peek().span;
                        let sd = self.real()?;
                        self.punct(")")?;
                        if sd < 0.0 {
                            return Err(ParseDiagnostic::error(
                                sd_span,
                                "SYNTAX",
                                "standard deviation must be >= 0".into(),
                            ));
                        }
                        AttributeValue::Gaussian { mean, sd }
                    } else {
                        AttributeValue::Fixed(self.real()?)
                    };
                    self.eat_punct(";");
                    self.declare(&name, span);
                    raw.spec.attributes.push(AttributeDecl { name, value });
                }
                Tok::Ident(kw) if kw == "corr" => {
                    let span = self.bump().span;
                    let (first, _) = self.ident()?;
                    let (second, _) = self.ident()?;
                    self.punct("=")?;
                    let rho = self.real()?;
                    self.eat_punct(";");
                    raw.spec.correlations.push(AttributeCorrelation { first, second, rho });
                    raw.corr_spans.push(span);
                }
                Tok::Ident(kw) if kw == "input" => {
                    self.bump();
                    let (name, span) = self.ident()?;
                    self.punct("=")?;
                    self.keyword("steps")?;
                    self.punct("(")?;
                    let mut breakpoints = Vec::new();
                    loop {
                        let at = self.peek().span;
                        let time = self.real()?;
                        self.punct(":")?;
                        let value = self.real()?;
                        if breakpoints.last().is_some_and(|&(prev, _)| prev >= time) {
                            return Err(ParseDiagnostic::error(
                                at,
                                "SYNTAX",
                                "step breakpoints must be strictly increasing".into(),
                            ));
                        }
                        breakpoints.push((time, value));
                        self.eat_punct(",");
                        if self.eat_punct(")") {
                            break;
                        }
                    }
                    self.eat_punct(";");
                    self.declare(&name, span);
                    raw.spec.inputs.push(InputSchedule { name, breakpoints });
                }
                Tok::Ident(kw) if kw == "component" => {
                    let comp = self.component()?;
                    raw.components.push(comp);
                }
                _ => return self.unexpected("`attr`, `corr`, `input` or `component`"),
            }
        }
        Ok(raw)
    }

    fn declare(&mut self, name: &str, span: SourceSpan) {
        self.decls.push((name.to_string(), span));
    }

    fn decl_span(&self, name: &str) -> SourceSpan {
        self.decls.iter().find(|(n, _)| n == name).map(|(_, s)| *s).unwrap_or(SourceSpan::new(1, 1, 1))
    }

    fn component(&mut self) -> PResult<RawComponent> {
        self.keyword("component")?;
        let (name, name_span) = self.ident()?;
        self.punct(":")?;
        let kind = match &self.peek().tok {
            Tok::Ident(s) if s == "diffusion" => ComponentKind::Diffusion,
            Tok::Ident(s) if s == "counting" => ComponentKind::Counting,
            Tok::Ident(s) if s == "ode" => ComponentKind::DeterministicOde,
            _ => return self.unexpected("`diffusion`, `counting` or `ode`"),
        };
        self.bump();
        self.punct("{")?;
        self.keyword("drift")?;
        self.punct("=")?;
        let drift = self.expr()?;
        self.punct(";")?;
        let mut sigma = None;
        let mut sigma_span = None;
        if matches!(&self.peek().tok, Tok::Ident(s) if s == "sigma") {
            sigma_span = Some(self.bump().span);
            self.punct("=")?;
            sigma = Some(self.expr()?);
            self.punct(";")?;
        }
        self.keyword("init")?;
        self.punct("=")?;
        let init_span = self.peek().span;
        let init = match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                InitialValue::Attr(s)
            }
            _ => InitialValue::Fixed(self.real()?),
        };
        self.punct(";")?;
        self.punct("}")?;
        self.declare(&name, name_span);
        Ok(RawComponent { spec: ComponentSpec { name, kind, drift, sigma, init }, sigma_span, init_span })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_punct("+") {
                lhs = Expr::add(lhs, self.term()?);
            } else if self.eat_punct("-") {
                lhs = Expr::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_punct("*") {
                lhs = Expr::mul(lhs, self.unary()?);
            } else if self.eat_punct("/") {
                lhs = Expr::div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("-") {
            // A minus directly on a literal is part of the literal.
            if let Tok::Number(v) = self.peek().tok {
                self.bump();
                return Ok(Expr::Const(-v));
            }
            return Ok(Expr::neg(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        let tok = self.peek().clone();
        match tok.tok {
            Tok::Number(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.punct(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                let is_call = self.peek().tok == Tok::Punct("(");
                match name.as_str() {
                    "t" => Ok(Expr::Time),
                    "exp" if is_call => {
                        self.bump();
                        let a = self.expr()?;
                        self.punct(")")?;
                        Ok(Expr::exp(a))
                    }
                    "min" | "max" if is_call => {
                        self.bump();
                        let a = self.expr()?;
                        self.punct(",")?;
                        let b = self.expr()?;
                        self.punct(")")?;
                        Ok(if name == "min" { Expr::min(a, b) } else { Expr::max(a, b) })
                    }
                    "ind" if is_call => {
                        self.bump();
                        let a = self.expr()?;
                        let cmp = match self.peek().tok {
                            Tok::Punct("<") => Cmp::Lt,
                            Tok::Punct("<=") => Cmp::Le,
                            Tok::Punct("==") => Cmp::Eq,
                            Tok::Punct(">=") => Cmp::Ge,
                            Tok::Punct(">") => Cmp::Gt,
                            _ => return self.unexpected("comparison operator"),
                        };
                        self.bump();
                        let b = self.expr()?;
                        self.punct(")")?;
                        Ok(Expr::ind(a, cmp, b))
                    }
                    _ => {
                        self.refs.push((name.clone(), tok.span));
                        // Resolved to the right reference kind once all declarations are known.
                        Ok(Expr::Comp(name))
                    }
                }
            }
            _ => self.unexpected("expression"),
        }
    }

    fn resolve(self, raw: RawModel) -> ParseOutcome {
        let mut diagnostics = Vec::new();
        let RawModel { mut spec, components, corr_spans } = raw;

        let mut seen = HashSet::new();
        for (name, span) in &self.decls {
            let span = *span;
            if RESERVED.contains(&name.as_str()) {
                diagnostics.push(ParseDiagnostic::error(span, "NAME", format!("`{name}` is a reserved word")));
            }
            if !seen.insert(name.clone()) {
                diagnostics.push(ParseDiagnostic::error(span, "DUP", format!("`{name}` is declared more than once")));
            }
        }
        let attrs: HashSet<&str> = spec.attributes.iter().map(|a| a.name.as_str()).collect();
        let inputs: HashSet<&str> = spec.inputs.iter().map(|i| i.name.as_str()).collect();
        let comps: HashSet<&str> = components.iter().map(|c| c.spec.name.as_str()).collect();

        for (name, span) in &self.refs {
            if !attrs.contains(name.as_str()) && !inputs.contains(name.as_str()) && !comps.contains(name.as_str()) {
                diagnostics.push(ParseDiagnostic::error(*span, "NAME", format!("unknown identifier `{name}`")));
            }
        }
        for (corr, span) in spec.correlations.iter().zip(&corr_spans) {
            for side in [&corr.first, &corr.second] {
                if !attrs.contains(side.as_str()) {
                    diagnostics.push(ParseDiagnostic::error(*span, "NAME", format!("unknown attribute `{side}`")));
                }
            }
        }

        let mut used_attrs: HashSet<String> =
            spec.correlations.iter().flat_map(|c| [c.first.clone(), c.second.clone()]).collect();
        used_attrs.extend(self.refs.iter().map(|(n, _)| n.clone()));

        for raw in &components {
            let c = &raw.spec;
            if let (Some(span), false) = (raw.sigma_span, c.kind == ComponentKind::Diffusion) {
                diagnostics.push(ParseDiagnostic::error(
                    span,
                    "KIND",
                    format!("`sigma` is only allowed on diffusion components, `{}` is {}", c.name, c.kind.keyword()),
                ));
            }
            if let InitialValue::Attr(a) = &c.init {
                used_attrs.insert(a.clone());
                if !attrs.contains(a.as_str()) {
                    diagnostics.push(ParseDiagnostic::error(
                        raw.init_span,
                        "NAME",
                        format!("initial value must be a number or an attribute, `{a}` is neither"),
                    ));
                }
            }
        }

        for attr in &spec.attributes {
            if !used_attrs.contains(&attr.name) {
                diagnostics.push(ParseDiagnostic::warning(
                    self.decl_span(&attr.name),
                    "UNUSED",
                    format!("attribute `{}` is never used", attr.name),
                ));
            }
        }

        if diagnostics.iter().any(ParseDiagnostic::is_error) {
            return ParseOutcome { spec: None, diagnostics };
        }

        let fix = |e: &mut Expr| rebind(e, &attrs, &inputs);
        spec.components = components
            .into_iter()
            .map(|raw| {
                let mut c = raw.spec;
                fix(&mut c.drift);
                if let Some(s) = c.sigma.as_mut() {
                    fix(s);
                }
                c
            })
            .collect();
        ParseOutcome { spec: Some(spec), diagnostics }
    }
}

fn rebind(e: &mut Expr, attrs: &HashSet<&str>, inputs: &HashSet<&str>) {
    match e {
        Expr::Comp(name) => {
            if attrs.contains(name.as_str()) {
                *e = Expr::Attr(std::mem::take(name));
            } else if inputs.contains(name.as_str()) {
                *e = Expr::Input(std::mem::take(name));
            }
        }
        Expr::Const(_) | Expr::Time | Expr::Attr(_) | Expr::Input(_) => {}
        Expr::Neg(a) | Expr::Exp(a) => rebind(a, attrs, inputs),
        Expr::Add(a, b)
        | Expr::Sub(a, b)
        | Expr::Mul(a, b)
        | Expr::Div(a, b)
        | Expr::Min(a, b)
        | Expr::Max(a, b)
        | Expr::Indicator(a, _, b) => {
            rebind(a, attrs, inputs);
            rebind(b, attrs, inputs);
        }
    }
}
