//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := primary ("^" unary)?
//! primary := number | "(" expr ")" | "." | ident ["_" letters] | ident "(" args ")"
//!          | "D[" ident ("," coord)* "]" | ("Dx" | "Dy" | "Dz") "(" expr ")"
//! ```

use super::calculus::JetSpace;
use super::node::{Expr, Func, Rational};
use super::symbol::{base_index, Coordinate, FunctionSymbol, MultiIndex, Name};
use super::ExprError;
use num_bigint::BigInt;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// Field name used for the argument slot `.` of operator entries.
pub const SLOT: &str = "_";

/// The symbols an expression may refer to.
#[derive(Clone, Debug)]
pub struct ParseContext {
    space: JetSpace,
    params: BTreeSet<String>,
    functions: BTreeMap<String, Arc<[Coordinate]>>,
    constants: BTreeSet<String>,
    slot: bool,
}

impl ParseContext {
    pub fn new(space: JetSpace) -> Self {
        ParseContext {
            space,
            params: BTreeSet::new(),
            functions: BTreeMap::new(),
            constants: ["pi".to_string()].into_iter().collect(),
            slot: false,
        }
    }

    pub fn space(&self) -> &JetSpace {
        &self.space
    }

    pub fn with_param(mut self, name: &str) -> Self {
        self.params.insert(name.to_string());
        self
    }

    pub fn add_param(&mut self, name: &str) {
        self.params.insert(name.to_string());
    }

    pub fn add_function(&mut self, name: &str, args: Vec<Coordinate>) {
        self.functions.insert(name.to_string(), Arc::from(args));
    }

    pub fn add_constant(&mut self, name: &str) {
        self.constants.insert(name.to_string());
    }

    /// Enables the operator slot `.` and the corresponding `_` field.
    pub fn with_slot(mut self) -> Self {
        self.slot = true;
        self
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.params.contains(name)
            || self.functions.contains_key(name)
            || self.constants.contains(name)
            || self.space.field_index(name).is_some()
    }

    pub fn param_expr(&self, name: &str) -> Expr {
        Expr::param(name, self.space.dim)
    }

    pub fn function_expr(&self, name: &str) -> Option<Expr> {
        self.functions
            .get(name)
            .map(|args| Expr::func_sym(FunctionSymbol::new(&Name::from(name), args.clone())))
    }
}

/// Parses `text` into a canonical expression.
pub fn parse(text: &str, ctx: &ParseContext) -> Result<Expr, ExprError> {
    let mut p = Parser {
        s: text.chars().collect(),
        i: 0,
        ctx,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.i < p.s.len() {
        return Err(p.syntax(format!("unexpected `{}`", p.s[p.i])));
    }
    Ok(e)
}

struct Parser<'a> {
    s: Vec<char>,
    i: usize,
    ctx: &'a ParseContext,
}

impl Parser<'_> {
    fn syntax(&self, msg: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            pos: self.i,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.s.get(self.i).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = vec![self.term()?];
        loop {
            if self.eat('+') {
                acc.push(self.term()?);
            } else if self.eat('-') {
                acc.push(-self.term()?);
            } else {
                return Ok(Expr::sum(acc));
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                acc = acc * self.unary()?;
            } else if self.eat('/') {
                acc = acc / self.unary()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let at = self.i;
        let ex = self.unary()?;
        match ex.as_rational() {
            Some(q) if q.is_integer() => {
                let n: i64 = q
                    .numer()
                    .try_into()
                    .map_err(|_| ExprError::Syntax { pos: at, msg: "exponent too large".into() })?;
                Ok(base.pow(n))
            }
            _ => Err(ExprError::Syntax {
                pos: at,
                msg: "exponent must be an integer constant".into(),
            }),
        }
    }

    fn ident(&mut self) -> Option<(String, usize)> {
        self.skip_ws();
        let start = self.i;
        if !self.s.get(self.i).is_some_and(|c| c.is_ascii_alphabetic()) {
            return None;
        }
        while self.s.get(self.i).is_some_and(|c| c.is_ascii_alphanumeric()) {
            self.i += 1;
        }
        Some((self.s[start..self.i].iter().collect(), start))
    }

    /// Letters after a `_` suffix, converted to base indices.
    fn suffix(&mut self) -> Result<Option<MultiIndex>, ExprError> {
        if self.s.get(self.i) != Some(&'_') {
            return Ok(None);
        }
        self.i += 1;
        let start = self.i;
        let mut idx = Vec::new();
        while let Some(&c) = self.s.get(self.i) {
            if !c.is_ascii_alphabetic() {
                break;
            }
            idx.push(self.base_letter(c)?);
            self.i += 1;
        }
        if self.i == start {
            return Err(self.syntax("expected base-coordinate letters after `_`"));
        }
        Ok(Some(MultiIndex::new(idx)))
    }

    fn base_letter(&self, c: char) -> Result<u8, ExprError> {
        let dim = self.ctx.space.dim;
        match base_index(c) {
            Some(a) if (a as usize) < dim && c.is_ascii_uppercase() => Ok(a),
            Some(a) if c.is_ascii_uppercase() => Err(ExprError::UnknownBaseIndex {
                index: a as usize,
                dim,
            }),
            _ => Err(self.syntax(format!("`{c}` is not a base coordinate"))),
        }
    }

    fn check_order(&self, multi: &MultiIndex) -> Result<(), ExprError> {
        if multi.order() > self.ctx.space.max_order {
            return Err(ExprError::JetOrderOverflow {
                requested: multi.order(),
                max: self.ctx.space.max_order,
            });
        }
        Ok(())
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.i;
        while self.s.get(self.i).is_some_and(|c| c.is_ascii_digit()) {
            self.i += 1;
        }
        let int_part: String = self.s[start..self.i].iter().collect();
        let mut frac_part = String::new();
        if self.s.get(self.i) == Some(&'.') && self.s.get(self.i + 1).is_some_and(|c| c.is_ascii_digit()) {
            self.i += 1;
            let fs = self.i;
            while self.s.get(self.i).is_some_and(|c| c.is_ascii_digit()) {
                self.i += 1;
            }
            frac_part = self.s[fs..self.i].iter().collect();
        }
        let digits = format!("{int_part}{frac_part}");
        let n: BigInt = digits.parse().map_err(|_| ExprError::Syntax {
            pos: start,
            msg: "malformed number".into(),
        })?;
        let d = num_traits::pow(BigInt::from(10), frac_part.len());
        Ok(Expr::num(Rational::new(n, d)))
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(c) if c.is_ascii_digit() => self.number(),
            Some('(') => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some('.') => {
                if !self.ctx.slot {
                    return Err(self.syntax("the slot `.` is only allowed in operator entries"));
                }
                self.i += 1;
                Ok(Expr::field(SLOT))
            }
            Some(c) if c.is_ascii_alphabetic() => self.named(),
            Some(c) => Err(self.syntax(format!("unexpected `{c}`"))),
        }
    }

    fn named(&mut self) -> Result<Expr, ExprError> {
        let (name, pos) = self.ident().expect("caller checked for a letter");
        let next = self.s.get(self.i).copied();

        if name == "D" && next == Some('[') {
            return self.bracket_derivative();
        }
        if next == Some('(') {
            if let Some(a) = match name.as_str() {
                "Dx" => Some(0u8),
                "Dy" => Some(1),
                "Dz" => Some(2),
                _ => None,
            } {
                self.i += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                return self.ctx.space.total_derivative(&inner, a);
            }
            if name == "recip" {
                self.i += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                return Ok(inner.recip());
            }
            if let Some(f) = Func::from_name(&name) {
                self.i += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                return Ok(Expr::apply(f, inner));
            }
        }

        let suffix = self.suffix()?;
        if let Some(alpha) = self.ctx.space.field_index(&name) {
            let multi = suffix.unwrap_or_default();
            self.check_order(&multi)?;
            return Ok(self.ctx.space.jet(alpha, multi));
        }
        if let Some(a) = name.chars().next().and_then(base_index) {
            if name.len() == 1 && (a as usize) < self.ctx.space.dim {
                if suffix.is_some() {
                    return Err(self.syntax("independent coordinates take no derivative suffix"));
                }
                return Ok(Expr::independent(a));
            }
        }
        if self.ctx.params.contains(&name) {
            let base = self.ctx.param_expr(&name);
            return Ok(match suffix {
                None => base,
                Some(m) => m
                    .indices()
                    .iter()
                    .fold(base, |acc, &a| acc.partial(&Coordinate::Independent(a))),
            });
        }
        if let Some(f) = self.ctx.function_expr(&name) {
            if suffix.is_some() {
                return Err(self.syntax("use D[f, x] for partials of functions"));
            }
            if self.peek() == Some('(') {
                self.i += 1;
                let args = self.coord_list(')')?;
                let declared = &self.ctx.functions[&name];
                if args.as_slice() != &declared[..] {
                    return Err(ExprError::Syntax {
                        pos,
                        msg: format!("`{name}` called with arguments that differ from its declaration"),
                    });
                }
            }
            return Ok(f);
        }
        if self.ctx.constants.contains(&name) {
            if suffix.is_some() {
                return Err(self.syntax("constants take no derivative suffix"));
            }
            return Ok(Expr::constant(&name));
        }
        Err(ExprError::UnknownSymbol { name, pos })
    }

    /// Comma-separated coordinates up to the closing delimiter.
    fn coord_list(&mut self, close: char) -> Result<Vec<Coordinate>, ExprError> {
        let mut out = Vec::new();
        if self.eat(close) {
            return Ok(out);
        }
        loop {
            out.push(self.coordinate()?);
            if self.eat(close) {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }

    fn coordinate(&mut self) -> Result<Coordinate, ExprError> {
        let Some((name, pos)) = self.ident() else {
            return Err(self.syntax("expected a coordinate"));
        };
        let suffix = self.suffix()?;
        if let Some(alpha) = self.ctx.space.field_index(&name) {
            let multi = suffix.unwrap_or_default();
            self.check_order(&multi)?;
            return Ok(Coordinate::jet(&self.ctx.space.fields[alpha], multi));
        }
        if name.len() == 1 && suffix.is_none() {
            let c = name.chars().next().unwrap();
            return Ok(Coordinate::Independent(self.base_letter(c)?));
        }
        Err(ExprError::UnknownSymbol { name, pos })
    }

    fn bracket_derivative(&mut self) -> Result<Expr, ExprError> {
        self.i += 1; // '['
        let Some((name, pos)) = self.ident() else {
            return Err(self.syntax("expected a name after `D[`"));
        };
        let wrt = if self.eat(',') { self.coord_list(']')? } else {
            self.expect(']')?;
            Vec::new()
        };
        if let Some(alpha) = self.ctx.space.field_index(&name) {
            let mut idx = Vec::new();
            for c in wrt {
                match c {
                    Coordinate::Independent(a) => idx.push(a),
                    _ => return Err(self.syntax("field derivatives are taken along base coordinates")),
                }
            }
            let multi = MultiIndex::new(idx);
            self.check_order(&multi)?;
            return Ok(self.ctx.space.jet(alpha, multi));
        }
        let base = if self.ctx.params.contains(&name) {
            self.ctx.param_expr(&name)
        } else if let Some(f) = self.ctx.function_expr(&name) {
            f
        } else {
            return Err(ExprError::UnknownSymbol { name, pos });
        };
        Ok(wrt.iter().fold(base, |acc, c| acc.partial(c)))
    }
}
