//! A small arithmetic expression language for density fields and utility
//! scaling functions.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr       := comparison
//! comparison := additive (("<" | "<=" | ">" | ">=") additive)*
//! additive   := term (("+" | "-") term)*
//! term       := unary (("*" | "/") unary)*
//! unary      := "-" unary | primary
//! primary    := number | ident | ident "(" args ")" | "(" expr ")"
//! ```
//!
//! Functions: `min`, `max`, `abs`, `sqrt`, `pow` and the lazy conditional
//! `if(cond, then, else)`. Comparisons evaluate to `1.0` or `0.0`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown variable `{name}` at byte {offset}")]
    UnknownVariable { name: String, offset: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("missing binding for variable `{0}`")]
    MissingBinding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
    Sqrt,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        match name {
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "abs" => Some(Func::Abs),
            "sqrt" => Some(Func::Sqrt),
            "pow" => Some(Func::Pow),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Abs | Func::Sqrt => 1,
            Func::Min | Func::Max | Func::Pow => 2,
        }
    }
}

/// Syntax tree node. Variables are stored as indices into the owning
/// [`Expr`]'s declared variable list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    If(Box<Node>, Box<Node>, Box<Node>),
}

/// A parsed expression together with its declared variable set.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    vars: Vec<String>,
    root: Node,
    source: String,
}

impl Expr {
    pub fn parse(text: &str, variables: &[&str]) -> Result<Expr, ExprError> {
        let vars: Vec<String> = variables.iter().map(|v| v.to_string()).collect();
        let mut parser = Parser { src: text, pos: 0, vars: &vars };
        parser.skip_ws();
        if parser.pos >= text.len() {
            return Err(ExprError::Syntax { offset: 0, message: "empty expression".into() });
        }
        let root = parser.comparison()?;
        parser.skip_ws();
        if parser.pos < text.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(Expr { vars, root, source: text.to_string() })
    }

    /// A constant expression over the given variables.
    pub fn constant(value: f64, variables: &[&str]) -> Expr {
        Expr {
            vars: variables.iter().map(|v| v.to_string()).collect(),
            root: Node::Num(value),
            source: format!("{value:?}"),
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// The text the expression was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates with values given positionally, in declared-variable order.
    pub fn eval(&self, values: &[f64]) -> Result<f64, ExprError> {
        debug_assert_eq!(values.len(), self.vars.len());
        eval_node(&self.root, values)
    }

    /// Evaluates with named bindings; every declared variable must be bound.
    pub fn evaluate(&self, bindings: &HashMap<&str, f64>) -> Result<f64, ExprError> {
        let values = self
            .vars
            .iter()
            .map(|v| bindings.get(v.as_str()).copied().ok_or_else(|| ExprError::MissingBinding(v.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        self.eval(&values)
    }

    /// Fully parenthesised rendering that reparses to the same tree.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        write_node(&self.root, &self.vars, &mut out);
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pretty())
    }
}

fn write_node(node: &Node, vars: &[String], out: &mut String) {
    match node {
        Node::Num(v) => out.push_str(&format!("{v:?}")),
        Node::Var(i) => out.push_str(&vars[*i]),
        Node::Neg(inner) => {
            out.push_str("(-");
            write_node(inner, vars, out);
            out.push(')');
        }
        Node::Bin(op, a, b) => {
            out.push('(');
            write_node(a, vars, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_node(b, vars, out);
            out.push(')');
        }
        Node::Call(func, args) => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_node(a, vars, out);
            }
            out.push(')');
        }
        Node::If(c, a, b) => {
            out.push_str("if(");
            write_node(c, vars, out);
            out.push_str(", ");
            write_node(a, vars, out);
            out.push_str(", ");
            write_node(b, vars, out);
            out.push(')');
        }
    }
}

fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn eval_node(node: &Node, values: &[f64]) -> Result<f64, ExprError> {
    Ok(match node {
        Node::Num(v) => *v,
        Node::Var(i) => values[*i],
        Node::Neg(inner) => -eval_node(inner, values)?,
        Node::Bin(op, a, b) => {
            let x = eval_node(a, values)?;
            let y = eval_node(b, values)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(ExprError::Domain(format!("division by zero ({x} / 0)")));
                    }
                    x / y
                }
                BinOp::Lt => truth(x < y),
                BinOp::Le => truth(x <= y),
                BinOp::Gt => truth(x > y),
                BinOp::Ge => truth(x >= y),
            }
        }
        Node::Call(func, args) => {
            let a = eval_node(&args[0], values)?;
            match func {
                Func::Abs => a.abs(),
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(ExprError::Domain(format!("sqrt of negative value {a}")));
                    }
                    a.sqrt()
                }
                Func::Min => a.min(eval_node(&args[1], values)?),
                Func::Max => a.max(eval_node(&args[1], values)?),
                Func::Pow => {
                    let b = eval_node(&args[1], values)?;
                    let r = a.powf(b);
                    if !r.is_finite() {
                        return Err(ExprError::Domain(format!("pow({a}, {b}) is not finite")));
                    }
                    r
                }
            }
        }
        Node::If(c, a, b) => {
            if eval_node(c, values)? != 0.0 {
                eval_node(a, values)?
            } else {
                eval_node(b, values)?
            }
        }
    })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), ExprError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{token}`")))
        }
    }

    fn comparison(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.additive()?;
        loop {
            // two-character operators first
            let op = if self.eat("<=") {
                BinOp::Le
            } else if self.eat(">=") {
                BinOp::Ge
            } else if self.eat("<") {
                BinOp::Lt
            } else if self.eat(">") {
                BinOp::Gt
            } else {
                return Ok(lhs);
            };
            let rhs = self.additive()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn additive(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat("-") {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.comparison()?;
                self.expect(")")?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                self.skip_ws();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    let args = self.args()?;
                    if name == "if" {
                        if args.len() != 3 {
                            return Err(ExprError::Syntax {
                                offset: start,
                                message: format!("if() takes 3 arguments, got {}", args.len()),
                            });
                        }
                        let mut it = args.into_iter();
                        let (c, a, b) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                        return Ok(Node::If(Box::new(c), Box::new(a), Box::new(b)));
                    }
                    let func = Func::lookup(name).ok_or_else(|| ExprError::Syntax {
                        offset: start,
                        message: format!("unknown function `{name}`"),
                    })?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Syntax {
                            offset: start,
                            message: format!("{name}() takes {} argument(s), got {}", func.arity(), args.len()),
                        });
                    }
                    return Ok(Node::Call(func, args));
                }
                match self.vars.iter().position(|v| v == name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => Err(ExprError::UnknownVariable { name: name.to_string(), offset: start }),
                }
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn args(&mut self) -> Result<Vec<Node>, ExprError> {
        let mut args = Vec::new();
        if self.eat(")") {
            return Ok(args);
        }
        loop {
            args.push(self.comparison()?);
            if self.eat(")") {
                return Ok(args);
            }
            self.expect(",")?;
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let mut p = self.pos + 1;
            if p < bytes.len() && (bytes[p] == b'+' || bytes[p] == b'-') {
                p += 1;
            }
            if p < bytes.len() && bytes[p].is_ascii_digit() {
                while p < bytes.len() && bytes[p].is_ascii_digit() {
                    p += 1;
                }
                self.pos = p;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Node::Num)
            .map_err(|_| ExprError::Syntax { offset: start, message: "malformed number".into() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const XY: &[&str] = &["x", "y"];

    fn eval_xy(text: &str, x: f64, y: f64) -> Result<f64, ExprError> {
        Expr::parse(text, XY)?.eval(&[x, y])
    }

    #[test]
    fn literal_is_constant() {
        let e = Expr::parse("1", XY).unwrap();
        assert_eq!(e.root(), &Node::Num(1.0));
    }

    #[test]
    fn product_tree() {
        let e = Expr::parse("8*(x-0.5)", XY).unwrap();
        let expected = Node::Bin(
            BinOp::Mul,
            Box::new(Node::Num(8.0)),
            Box::new(Node::Bin(BinOp::Sub, Box::new(Node::Var(0)), Box::new(Node::Num(0.5)))),
        );
        assert_eq!(e.root(), &expected);
    }

    #[test]
    fn unknown_variable_is_named() {
        match Expr::parse("x + z", XY) {
            Err(ExprError::UnknownVariable { name, offset }) => {
                assert_eq!(name, "z");
                assert_eq!(offset, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        assert!(matches!(Expr::parse("1 +", XY), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!(Expr::parse("(x", XY), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(Expr::parse("x y", XY), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(Expr::parse("", XY), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("foo(1)", XY), Err(ExprError::Syntax { offset: 0, .. })));
        assert!(matches!(Expr::parse("sqrt(1, 2)", XY), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn conditional_density() {
        let text = "if(x>=0.5, 8*(x-0.5), 0)";
        assert_eq!(eval_xy(text, 0.75, 0.0).unwrap(), 2.0);
        assert_eq!(eval_xy(text, 0.25, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn weighted_gauge_at_origin() {
        assert_eq!(eval_xy("sqrt(75*x*x+150*y*y)", 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn precedence() {
        assert_eq!(eval_xy("1 + 2 * 3", 0.0, 0.0).unwrap(), 7.0);
        assert_eq!(eval_xy("-2 * 3 + 1", 0.0, 0.0).unwrap(), -5.0);
        assert_eq!(eval_xy("1 + 1 < 3", 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(eval_xy("10 - 4 - 3", 0.0, 0.0).unwrap(), 3.0);
        assert_eq!(eval_xy("8 / 4 / 2", 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(eval_xy("pow(2, 10) + min(x, y) + max(x, y) + abs(-1)", 1.0, 2.0).unwrap(), 1028.0);
        assert_eq!(eval_xy("1.5e2 + 2E-1", 0.0, 0.0).unwrap(), 150.2);
    }

    #[test]
    fn domain_errors_are_hard_failures() {
        assert!(matches!(eval_xy("1/x", 0.0, 0.0), Err(ExprError::Domain(_))));
        assert!(matches!(eval_xy("sqrt(x)", -1.0, 0.0), Err(ExprError::Domain(_))));
        assert!(matches!(eval_xy("pow(x, 0.5)", -1.0, 0.0), Err(ExprError::Domain(_))));
    }

    #[test]
    fn if_is_lazy() {
        assert_eq!(eval_xy("if(1>0, 1, 1/0)", 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(eval_xy("if(1<0, 1/0, 2)", 0.0, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn named_bindings() {
        let e = Expr::parse("x*y", XY).unwrap();
        let b: HashMap<&str, f64> = [("x", 3.0), ("y", 4.0)].into_iter().collect();
        assert_eq!(e.evaluate(&b).unwrap(), 12.0);
        let partial: HashMap<&str, f64> = [("x", 3.0)].into_iter().collect();
        assert_eq!(e.evaluate(&partial), Err(ExprError::MissingBinding("y".into())));
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Node::Num),
            (0usize..2).prop_map(Node::Var),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|n| Node::Neg(Box::new(n))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Lt),
                        Just(BinOp::Le),
                        Just(BinOp::Gt),
                        Just(BinOp::Ge)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Node::Bin(op, Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Call(Func::Max, vec![a, b])),
                inner.clone().prop_map(|a| Node::Call(Func::Abs, vec![a])),
                (inner.clone(), inner.clone(), inner)
                    .prop_map(|(c, a, b)| Node::If(Box::new(c), Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_reparses(root in arb_node()) {
            let e = Expr { vars: vec!["x".into(), "y".into()], root, source: String::new() };
            let text = e.pretty();
            let back = Expr::parse(&text, XY).unwrap();
            prop_assert_eq!(back.root(), e.root());
        }

        #[test]
        fn evaluation_is_referentially_transparent(root in arb_node(), x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let e = Expr { vars: vec!["x".into(), "y".into()], root, source: String::new() };
            let a = e.eval(&[x, y]);
            let b = e.eval(&[x, y]);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
