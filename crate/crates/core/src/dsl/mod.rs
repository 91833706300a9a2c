//! Line-oriented model files.
//!
//! ```text
//! model string_damped
//! dim 1
//! independent X in [0, 1]
//! fields w p
//! param rho = 1.0 range (0, inf)
//! param r = 0.1 range [0, inf)
//! hamiltonian (1/(2*rho))*p^2 + (1/2)*P*w_X^2
//! J [[0, 1], [-1, 0]]
//! R [[0, 0], [0, -Dx(r*Dx(.))]]
//! boundary X=0 : rate w = 0
//! initial w = sin(pi*X)
//! ```
//!
//! Operator entries are either a coefficient or a linear expression in the slot `.`.
//! A bracketed statement may continue over several lines; `#` starts a comment.

mod builtin;

pub use builtin::{
    builtin, determinant, mhd_convective_current, mhd_deformation_gradient, mhd_electric_field,
    mhd_inverse_gradient, mhd_magnetic_flux, mhd_vector_potential, string_damping, BuiltinOptions,
    BUILTIN_NAMES,
};

use crate::expr::{parse, Coordinate, Expr, ExprError, JetSpace, MultiIndex, Name, ParseContext, Symbol, DEFAULT_MAX_ORDER};
use crate::phs::{BoundaryCondition, Face, FunctionSpec, PHSystem, ParamRange, ParamSpec, RateCondition, StructuralReport, Verdict};
use crate::variational::{LinDiffOp, VariationalError};
use std::fmt::Write as _;
use thiserror::Error;

const SLOT: &str = "_";
/// Highest operator order accepted in a matrix entry.
pub const MAX_ENTRY_ORDER: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, column {col}: undeclared symbol `{name}`")]
    Undeclared { line: usize, col: usize, name: String },
    #[error("line {line}: shape mismatch: {msg}")]
    Shape { line: usize, msg: String },
    #[error("line {line}, column {col}: {msg}")]
    Semantic { line: usize, col: usize, msg: String },
    #[error("structural check failed: {0}")]
    Structural(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown built-in model `{0}`")]
    UnknownBuiltin(String),
}

type Result<T> = std::result::Result<T, ModelError>;

/// One logical statement with the source position of every character.
struct Stmt {
    chars: Vec<char>,
    pos: Vec<(usize, usize)>,
    line: usize,
}

impl Stmt {
    fn at(&self, i: usize) -> (usize, usize) {
        match self.pos.get(i) {
            Some(&p) => p,
            None => self.pos.last().map(|&(l, c)| (l, c + 1)).unwrap_or((self.line, 1)),
        }
    }

    fn text(&self, a: usize, b: usize) -> String {
        self.chars[a..b].iter().collect()
    }

    fn syntax(&self, i: usize, msg: impl Into<String>) -> ModelError {
        let (line, col) = self.at(i);
        ModelError::Syntax { line, col, msg: msg.into() }
    }

    fn invalid(&self, i: usize, msg: impl Into<String>) -> ModelError {
        let (line, col) = self.at(i);
        ModelError::Semantic { line, col, msg: msg.into() }
    }

    fn skip_ws(&self, mut i: usize) -> usize {
        while i < self.chars.len() && self.chars[i].is_whitespace() {
            i += 1;
        }
        i
    }

    /// Identifier at `i` (after whitespace) and the index past it.
    fn word(&self, i: usize) -> Option<(String, usize, usize)> {
        let s = self.skip_ws(i);
        let mut e = s;
        while e < self.chars.len() && (self.chars[e].is_alphanumeric() || self.chars[e] == '_') {
            e += 1;
        }
        (e > s).then(|| (self.text(s, e), s, e))
    }

    fn expect_word(&self, i: usize, what: &str) -> Result<(String, usize, usize)> {
        self.word(i).ok_or_else(|| self.syntax(self.skip_ws(i), format!("expected {what}")))
    }

    fn eat(&self, i: usize, c: char) -> Option<usize> {
        let s = self.skip_ws(i);
        (self.chars.get(s) == Some(&c)).then_some(s + 1)
    }

    fn expect(&self, i: usize, c: char) -> Result<usize> {
        self.eat(i, c).ok_or_else(|| self.syntax(self.skip_ws(i), format!("expected `{c}`")))
    }

    fn expect_end(&self, i: usize) -> Result<()> {
        let s = self.skip_ws(i);
        if s < self.chars.len() {
            Err(self.syntax(s, "unexpected trailing text"))
        } else {
            Ok(())
        }
    }

    /// Index of the first `c` at bracket depth zero in `a..b`.
    fn find_top(&self, a: usize, b: usize, c: char) -> Option<usize> {
        let mut depth = 0i32;
        for i in a..b {
            match self.chars[i] {
                x if x == c && depth == 0 => return Some(i),
                '(' | '[' => depth += 1,
                ')' | ']' => depth -= 1,
                _ => {}
            }
        }
        None
    }
}

fn statements(text: &str) -> Result<Vec<Stmt>> {
    let mut out = Vec::new();
    let mut cur: Option<Stmt> = None;
    let mut depth = 0i32;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("");
        if cur.is_none() && body.trim().is_empty() {
            continue;
        }
        let st = cur.get_or_insert_with(|| Stmt {
            chars: Vec::new(),
            pos: Vec::new(),
            line,
        });
        if !st.chars.is_empty() {
            st.chars.push(' ');
            st.pos.push((line, 0));
        }
        for (c, ch) in body.chars().enumerate() {
            match ch {
                '(' | '[' => depth += 1,
                ')' | ']' => depth -= 1,
                _ => {}
            }
            st.chars.push(ch);
            st.pos.push((line, c + 1));
        }
        if depth <= 0 {
            if depth < 0 {
                let st = cur.take().unwrap();
                let i = st.chars.len().saturating_sub(1);
                return Err(st.syntax(i, "unbalanced closing bracket"));
            }
            out.extend(cur.take());
        }
    }
    if let Some(st) = cur {
        return Err(st.syntax(st.chars.len(), "unclosed bracket at end of file"));
    }
    Ok(out)
}

fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// `(lo, hi]`-style interval starting at `i`; returns the range and the index past it.
fn interval(st: &Stmt, i: usize) -> Result<(ParamRange, usize)> {
    let s = st.skip_ws(i);
    let lo_closed = match st.chars.get(s) {
        Some('[') => true,
        Some('(') => false,
        _ => return Err(st.syntax(s, "expected an interval such as (0, inf)")),
    };
    let close = (s + 1..st.chars.len())
        .find(|&k| matches!(st.chars[k], ')' | ']'))
        .ok_or_else(|| st.syntax(s, "unterminated interval"))?;
    let comma = st
        .find_top(s + 1, close, ',')
        .ok_or_else(|| st.syntax(s, "expected `lo, hi`"))?;
    let lo = parse_f64(&st.text(s + 1, comma)).ok_or_else(|| st.syntax(s + 1, "bad interval bound"))?;
    let hi = parse_f64(&st.text(comma + 1, close)).ok_or_else(|| st.syntax(comma + 1, "bad interval bound"))?;
    if lo > hi {
        return Err(st.invalid(s, "empty interval"));
    }
    Ok((
        ParamRange {
            lo,
            hi,
            lo_closed,
            hi_closed: st.chars[close] == ']',
        },
        close + 1,
    ))
}

fn expr_error(st: &Stmt, start: usize, e: ExprError) -> ModelError {
    match e {
        ExprError::Syntax { pos, msg } => st.syntax(start + pos, msg),
        ExprError::UnknownSymbol { name, pos } => {
            let (line, col) = st.at(start + pos);
            ModelError::Undeclared { line, col, name }
        }
        other => st.invalid(st.skip_ws(start), other.to_string()),
    }
}

fn expr_in(st: &Stmt, a: usize, b: usize, ctx: &ParseContext) -> Result<Expr> {
    let text = st.text(a, b);
    if text.trim().is_empty() {
        return Err(st.syntax(a, "expected an expression"));
    }
    parse(&text, ctx).map_err(|e| expr_error(st, a, e))
}

/// A matrix literal `[[e, e], [e, e]]` as ranges of entry text.
fn matrix_cells(st: &Stmt, i: usize) -> Result<Vec<Vec<(usize, usize)>>> {
    let open = st.expect(i, '[')?;
    let mut rows = Vec::new();
    let mut k = open;
    if let Some(end) = st.eat(k, ']') {
        st.expect_end(end)?;
        return Ok(rows);
    }
    loop {
        let row_open = st.expect(k, '[')?;
        let mut depth = 0i32;
        let mut close = None;
        for j in row_open..st.chars.len() {
            match st.chars[j] {
                '(' | '[' => depth += 1,
                ']' if depth == 0 => {
                    close = Some(j);
                    break;
                }
                ')' | ']' => depth -= 1,
                _ => {}
            }
        }
        let close = close.ok_or_else(|| st.syntax(row_open, "unterminated matrix row"))?;
        let mut cells = Vec::new();
        let mut a = row_open;
        while let Some(c) = st.find_top(a, close, ',') {
            cells.push((a, c));
            a = c + 1;
        }
        cells.push((a, close));
        rows.push(cells);
        k = close + 1;
        if let Some(n) = st.eat(k, ',') {
            k = n;
            continue;
        }
        let end = st.expect(k, ']')?;
        st.expect_end(end)?;
        return Ok(rows);
    }
}

fn operator(st: &Stmt, i: usize, ctx: &ParseContext, n_in: usize, n_out: usize, what: &str) -> Result<LinDiffOp> {
    let i = st.eat(i, '=').unwrap_or(i);
    let cells = matrix_cells(st, i)?;
    let dims = |r: usize, c: usize| ModelError::Shape {
        line: st.line,
        msg: format!("{what} is {r}x{c}, expected {n_out}x{n_in}"),
    };
    if cells.len() != n_out {
        return Err(dims(cells.len(), cells.first().map_or(0, Vec::len)));
    }
    if let Some(row) = cells.iter().find(|r| r.len() != n_in) {
        return Err(dims(cells.len(), row.len()));
    }
    let slot_ctx = ctx.clone().with_slot();
    let slot = Expr::field(SLOT);
    let mut entries = Vec::with_capacity(n_out);
    for row in &cells {
        let mut out = Vec::with_capacity(n_in);
        for &(a, b) in row {
            let e = expr_in(st, a, b, &slot_ctx)?;
            let e = if e.depends_on_field(SLOT) { e } else { e * &slot };
            let single = LinDiffOp::from_slot_entries(ctx.space().dim, SLOT, &[vec![e.clone()]]).map_err(|err| match err {
                VariationalError::NotLinear(_) => st.invalid(st.skip_ws(a), "operator entries must be linear in the slot `.`"),
                other => st.invalid(st.skip_ws(a), other.to_string()),
            })?;
            if single.order() > MAX_ENTRY_ORDER {
                return Err(st.invalid(st.skip_ws(a), format!("operator entries are limited to order {MAX_ENTRY_ORDER}")));
            }
            out.push(e);
        }
        entries.push(out);
    }
    LinDiffOp::from_slot_entries(ctx.space().dim, SLOT, &entries).map_err(|e| st.invalid(i, e.to_string()))
}

struct Decls {
    name: Option<String>,
    dim: Option<usize>,
    max_order: Option<usize>,
    domain: Vec<Option<(f64, f64)>>,
    fields: Vec<String>,
    inputs: Vec<String>,
    params: Vec<ParamSpec>,
}

fn integer(st: &Stmt, i: usize) -> Result<usize> {
    let (w, s, e) = st.expect_word(i, "an integer")?;
    st.expect_end(e)?;
    w.parse().map_err(|_| st.syntax(s, "expected an integer"))
}

fn names_list(st: &Stmt, mut i: usize) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    while let Some((w, s, e)) = st.word(i) {
        out.push((w, s));
        i = st.eat(e, ',').unwrap_or(e);
    }
    out
}

fn check_fresh(st: &Stmt, pos: usize, name: &str, taken: &[&str]) -> Result<()> {
    if name == SLOT || name.starts_with('_') {
        return Err(st.syntax(pos, "names may not start with `_`"));
    }
    if taken.contains(&name) || ["pi", "t", "D", "Dx", "Dy", "Dz", "sin", "cos", "exp", "sqrt", "recip"].contains(&name) {
        return Err(st.invalid(pos, format!("`{name}` is already declared or reserved")));
    }
    Ok(())
}

fn declarations(stmts: &[(String, usize, &Stmt)]) -> Result<Decls> {
    let mut d = Decls {
        name: None,
        dim: None,
        max_order: None,
        domain: Vec::new(),
        fields: Vec::new(),
        inputs: Vec::new(),
        params: Vec::new(),
    };
    for (kw, rest, st) in stmts {
        let rest = *rest;
        match kw.as_str() {
            "model" => {
                let (w, _, e) = st.expect_word(rest, "a model name")?;
                st.expect_end(e)?;
                d.name = Some(w);
            }
            "dim" => {
                let n = integer(st, rest)?;
                if !(1..=3).contains(&n) {
                    return Err(st.invalid(st.skip_ws(rest), "dim must be 1, 2 or 3"));
                }
                d.dim = Some(n);
                d.domain.resize(n, None);
            }
            "max_order" => d.max_order = Some(integer(st, rest)?),
            "fields" | "inputs" => {
                for (w, s) in names_list(st, rest) {
                    let taken: Vec<&str> = d.fields.iter().chain(&d.inputs).map(String::as_str).chain(d.params.iter().map(|p| &*p.name)).collect();
                    check_fresh(st, s, &w, &taken)?;
                    if kw == "fields" { d.fields.push(w) } else { d.inputs.push(w) }
                }
            }
            "param" => {
                let (w, s, mut e) = st.expect_word(rest, "a parameter name")?;
                let taken: Vec<&str> = d.fields.iter().chain(&d.inputs).map(String::as_str).chain(d.params.iter().map(|p| &*p.name)).collect();
                check_fresh(st, s, &w, &taken)?;
                let mut value = None;
                if let Some(n) = st.eat(e, '=') {
                    let vs = st.skip_ws(n);
                    let mut ve = vs;
                    while ve < st.chars.len() && !st.chars[ve].is_whitespace() {
                        ve += 1;
                    }
                    let v = parse_f64(&st.text(vs, ve)).filter(|v| v.is_finite()).ok_or_else(|| st.syntax(vs, "expected a numeric value"))?;
                    value = Some(v);
                    e = ve;
                }
                let mut range = ParamRange::REAL;
                if let Some((kw2, s2, e2)) = st.word(e) {
                    if kw2 != "range" {
                        return Err(st.syntax(s2, "expected `range`"));
                    }
                    let (r, end) = interval(st, e2)?;
                    range = r;
                    e = end;
                }
                st.expect_end(e)?;
                if let Some(v) = value {
                    if !range.contains(v) {
                        return Err(st.invalid(s, format!("value {v:?} of `{w}` lies outside {range}")));
                    }
                }
                d.params.push(ParamSpec { name: Name::from(w.as_str()), value, range });
            }
            "independent" => {
                let dim = d.dim.ok_or_else(|| st.invalid(rest, "`dim` must precede `independent`"))?;
                let (w, s, e) = st.expect_word(rest, "X, Y or Z")?;
                let axis = match w.as_str() {
                    "X" => 0,
                    "Y" => 1,
                    "Z" => 2,
                    _ => return Err(st.syntax(s, "independent coordinates are named X, Y, Z")),
                };
                if axis >= dim {
                    return Err(st.invalid(s, format!("`{w}` exceeds dim {dim}")));
                }
                let (kw2, s2, e2) = st.expect_word(e, "`in`")?;
                if kw2 != "in" {
                    return Err(st.syntax(s2, "expected `in`"));
                }
                let (r, end) = interval(st, e2)?;
                st.expect_end(end)?;
                if !(r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi) {
                    return Err(st.invalid(s2, "domain intervals must be finite and non-empty"));
                }
                d.domain[axis] = Some((r.lo, r.hi));
            }
            _ => {}
        }
    }
    Ok(d)
}

/// Operator order beyond the state order that the power balance needs.
fn auto_max_order(k: usize) -> usize {
    DEFAULT_MAX_ORDER.max(3 + k)
}

/// Parses a model file and rejects it if a structural check fails.
pub fn parse_model(text: &str) -> Result<PHSystem> {
    let sys = parse_model_unchecked(text)?;
    let report = sys.verify().map_err(|e| ModelError::Invalid(e.to_string()))?;
    if report.verdict() == Verdict::Fail {
        return Err(ModelError::Structural(structural_failure(&report)));
    }
    Ok(sys)
}

fn structural_failure(r: &StructuralReport) -> String {
    let mut msg = Vec::new();
    if !r.j.pass {
        msg.push(format!("J is not skew-adjoint, residual {}", r.j.residual));
    }
    if r.r.verdict() == Verdict::Fail {
        if !r.r.self_adjoint {
            msg.push(format!("R is not self-adjoint, residual {}", r.r.residual));
        } else {
            msg.push("R is not non-negative".to_string());
        }
    }
    if !r.g.pass {
        msg.push(format!("G adjoint identity fails, residual {}", r.g.residual));
    }
    msg.join("; ")
}

/// Parses a model file without running the structural checks.
pub fn parse_model_unchecked(text: &str) -> Result<PHSystem> {
    let stmts = statements(text)?;
    let mut keyed = Vec::with_capacity(stmts.len());
    for st in &stmts {
        let (kw, s, e) = st.word(0).ok_or_else(|| st.syntax(st.skip_ws(0), "expected a keyword"))?;
        const KEYWORDS: [&str; 15] = [
            "model", "dim", "max_order", "independent", "fields", "inputs", "param", "function",
            "hamiltonian", "J", "R", "G", "boundary", "initial", "domain",
        ];
        if !KEYWORDS.contains(&kw.as_str()) {
            return Err(st.syntax(s, format!("unknown keyword `{kw}`")));
        }
        keyed.push((kw, e, st));
    }
    let d = declarations(&keyed)?;
    let name = d.name.clone().ok_or_else(|| ModelError::Invalid("missing `model` line".into()))?;
    let dim = d.dim.ok_or_else(|| ModelError::Invalid("missing `dim` line".into()))?;
    if d.fields.is_empty() {
        return Err(ModelError::Invalid("missing `fields` line".into()));
    }
    let field_refs: Vec<&str> = d.fields.iter().map(String::as_str).collect();
    // Expressions are read against a generous order first; the final order is checked below.
    let provisional = JetSpace::new(dim, &field_refs).with_max_order(d.max_order.unwrap_or(8));
    let mut ctx = ParseContext::new(provisional.clone());
    for p in &d.params {
        ctx.add_param(&p.name);
    }

    let mut functions = Vec::new();
    for (kw, rest, st) in &keyed {
        if kw != "function" {
            continue;
        }
        let (w, s, e) = st.expect_word(*rest, "a function name")?;
        let taken: Vec<&str> = field_refs.iter().copied().chain(d.inputs.iter().map(String::as_str)).chain(d.params.iter().map(|p| &*p.name)).chain(functions.iter().map(|f: &FunctionSpec| &*f.name)).collect();
        check_fresh(st, s, &w, &taken)?;
        let open = st.expect(e, '(')?;
        let close = st.find_top(open, st.chars.len(), ')').ok_or_else(|| st.syntax(open, "expected `)`"))?;
        st.expect_end(close + 1)?;
        let mut args = Vec::new();
        let mut a = open;
        let arg_ctx = ParseContext::new(provisional.clone());
        loop {
            let c = st.find_top(a, close, ',').unwrap_or(close);
            if st.text(a, c).trim().is_empty() && c == close && args.is_empty() {
                break;
            }
            let e = expr_in(st, a, c, &arg_ctx)?;
            match e.as_symbol() {
                Some(Symbol::Coord(coord)) => args.push(coord.clone()),
                _ => return Err(st.syntax(st.skip_ws(a), "function arguments are jet coordinates")),
            }
            if c == close {
                break;
            }
            a = c + 1;
        }
        ctx.add_function(&w, args.clone());
        functions.push(FunctionSpec { name: Name::from(w.as_str()), args });
    }

    let n = d.fields.len();
    let mut hamiltonian = None;
    let mut ops: [Option<LinDiffOp>; 3] = [None, None, None];
    let mut boundary = Vec::new();
    let mut initial = vec![Expr::zero(); n];
    let mut rate_ctx = ctx.clone();
    rate_ctx.add_constant("t");
    let domain: Vec<(f64, f64)> = d.domain.iter().map(|x| x.unwrap_or((0.0, 1.0))).collect();
    let mut order_checks: Vec<(Expr, usize, &Stmt)> = Vec::new();

    for (kw, rest, st) in &keyed {
        let rest = *rest;
        match kw.as_str() {
            "hamiltonian" => {
                if hamiltonian.is_some() {
                    return Err(st.invalid(0, "duplicate hamiltonian"));
                }
                let h = expr_in(st, rest, st.chars.len(), &ctx)?;
                order_checks.push((h.clone(), rest, st));
                hamiltonian = Some(h);
            }
            "J" | "R" | "G" => {
                let slot = ["J", "R", "G"].iter().position(|k| k == kw).unwrap();
                if ops[slot].is_some() {
                    return Err(st.invalid(0, format!("duplicate {kw}")));
                }
                let n_in = if slot == 2 { d.inputs.len() } else { n };
                ops[slot] = Some(operator(st, rest, &ctx, n_in, n, kw)?);
            }
            "boundary" => {
                let (axis_name, s, e) = st.expect_word(rest, "X, Y or Z")?;
                let axis = ["X", "Y", "Z"].iter().position(|a| *a == axis_name).filter(|&a| a < dim).ok_or_else(|| st.syntax(s, "unknown boundary axis"))?;
                let eq = st.expect(e, '=')?;
                let colon = st.find_top(eq, st.chars.len(), ':').ok_or_else(|| st.syntax(eq, "expected `:`"))?;
                let v = parse_f64(&st.text(eq, colon)).ok_or_else(|| st.syntax(eq, "expected a coordinate value"))?;
                let (lo, hi) = domain[axis];
                let upper = if (v - lo).abs() <= 1e-12 * (1.0 + lo.abs()) {
                    false
                } else if (v - hi).abs() <= 1e-12 * (1.0 + hi.abs()) {
                    true
                } else {
                    return Err(st.invalid(st.skip_ws(eq), format!("{axis_name}={v:?} is not an end of the domain")));
                };
                let (kw2, s2, e2) = st.expect_word(colon + 1, "`rate`")?;
                if kw2 != "rate" {
                    return Err(st.syntax(s2, "expected `rate`"));
                }
                let (fname, s3, e3) = st.expect_word(e2, "a field name")?;
                let field = d.fields.iter().position(|f| *f == fname).ok_or_else(|| {
                    let (line, col) = st.at(s3);
                    ModelError::Undeclared { line, col, name: fname.clone() }
                })?;
                let e4 = st.expect(e3, '=')?;
                let rate = match st.word(e4) {
                    Some((w, _, we)) if w == "free" && st.skip_ws(we) == st.chars.len() => RateCondition::Free,
                    _ => {
                        let g = expr_in(st, e4, st.chars.len(), &rate_ctx)?;
                        if g.depends_on_any_field() {
                            return Err(st.invalid(st.skip_ws(e4), "boundary rates may depend on t and parameters only"));
                        }
                        if g.is_zero() {
                            RateCondition::Fixed
                        } else {
                            RateCondition::Prescribed(g)
                        }
                    }
                };
                let face = Face { axis: axis as u8, upper };
                if boundary.iter().any(|b: &BoundaryCondition| b.face == face && b.field == field) {
                    return Err(st.invalid(s3, "duplicate boundary condition"));
                }
                boundary.push(BoundaryCondition { face, field, rate });
            }
            "initial" => {
                let (fname, s, e) = st.expect_word(rest, "a field name")?;
                let field = d.fields.iter().position(|f| *f == fname).ok_or_else(|| {
                    let (line, col) = st.at(s);
                    ModelError::Undeclared { line, col, name: fname.clone() }
                })?;
                let e2 = st.expect(e, '=')?;
                let v = expr_in(st, e2, st.chars.len(), &ctx)?;
                if v.depends_on_any_field() {
                    return Err(st.invalid(st.skip_ws(e2), "initial data may depend on base coordinates and parameters only"));
                }
                initial[field] = v;
            }
            "domain" => return Err(st.syntax(0, "use `independent X in [a, b]` to declare the domain")),
            _ => {}
        }
    }

    let hamiltonian = hamiltonian.ok_or_else(|| ModelError::Invalid("missing `hamiltonian` line".into()))?;
    let [j, r, g] = ops;
    let j = j.unwrap_or_else(|| LinDiffOp::new(n, n, dim));
    let r = r.unwrap_or_else(|| LinDiffOp::new(n, n, dim));
    let g = g.unwrap_or_else(|| LinDiffOp::new(d.inputs.len(), n, dim));
    let k = j.order().max(r.order()).max(g.order());
    let max_order = d.max_order.unwrap_or_else(|| auto_max_order(k));
    for (e, at, st) in &order_checks {
        if e.jet_order() > max_order {
            return Err(st.invalid(st.skip_ws(*at), format!("jet order {} exceeds max_order {max_order}", e.jet_order())));
        }
    }
    let space = JetSpace::new(dim, &field_refs).with_max_order(max_order);
    let mut sys = PHSystem::new(&name, space, hamiltonian);
    sys.domain = domain;
    sys.inputs = d.inputs.iter().map(|s| Name::from(s.as_str())).collect();
    sys.params = d.params;
    sys.functions = functions;
    sys.j = j;
    sys.r = r;
    sys.g = g;
    sys.boundary = boundary;
    sys.initial = initial;
    sys.density().map_err(|e| ModelError::Invalid(e.to_string()))?;
    Ok(sys)
}

pub(crate) fn number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn derivative_text(k: &MultiIndex) -> String {
    let mut s = String::from(".");
    for &a in k.indices().iter().rev() {
        s = format!("D{}({s})", ["x", "y", "z"][a as usize]);
    }
    s
}

fn entry_text(terms: &[(MultiIndex, Expr)]) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    if let [(k, c)] = terms {
        if k.is_empty() {
            return c.to_string();
        }
    }
    let mut out = String::new();
    for (i, (k, c)) in terms.iter().rev().enumerate() {
        let slot = derivative_text(k);
        let coef = match c.node() {
            crate::expr::Node::Add(_) => format!("({c})"),
            _ => c.to_string(),
        };
        let term = if c.is_one() { slot } else { format!("{coef}*{slot}") };
        if i > 0 {
            if let Some(rest) = term.strip_prefix('-') {
                out.push_str(" - ");
                out.push_str(rest);
                continue;
            }
            out.push_str(" + ");
        }
        out.push_str(&term);
    }
    out
}

fn matrix_text(op: &LinDiffOp) -> String {
    let rows: Vec<String> = (0..op.n_out())
        .map(|b| {
            let cells: Vec<String> = (0..op.n_in()).map(|a| entry_text(&op.entry(a, b))).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(",\n   "))
}

fn coordinate_list(args: &[Coordinate]) -> String {
    args.iter().map(Coordinate::to_string).collect::<Vec<_>>().join(", ")
}

/// Renders a system in the model-file syntax, so that `parse_model(&emit(s))` rebuilds `s`.
pub fn emit(sys: &PHSystem) -> String {
    let mut s = String::new();
    let axis = ["X", "Y", "Z"];
    let _ = writeln!(s, "# Parameter values are illustrative defaults; the model itself leaves them symbolic.");
    let _ = writeln!(s, "model {}", sys.name);
    let _ = writeln!(s, "dim {}", sys.dim());
    let _ = writeln!(s, "max_order {}", sys.space.max_order);
    for (a, (lo, hi)) in sys.domain.iter().enumerate() {
        let _ = writeln!(s, "independent {} in [{}, {}]", axis[a], number(*lo), number(*hi));
    }
    let _ = writeln!(s, "fields {}", sys.space.fields.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" "));
    if !sys.inputs.is_empty() {
        let _ = writeln!(s, "inputs {}", sys.inputs.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" "));
    }
    for p in &sys.params {
        let _ = write!(s, "param {}", p.name);
        if let Some(v) = p.value {
            let _ = write!(s, " = {v:?}");
        }
        if p.range != ParamRange::REAL {
            let _ = write!(s, " range {}", p.range);
        }
        s.push('\n');
    }
    for f in &sys.functions {
        let _ = writeln!(s, "function {}({})", f.name, coordinate_list(&f.args));
    }
    let _ = writeln!(s, "hamiltonian {}", sys.hamiltonian);
    let _ = writeln!(s, "J {}", matrix_text(&sys.j));
    if !sys.r.is_zero() {
        let _ = writeln!(s, "R {}", matrix_text(&sys.r));
    }
    if !sys.inputs.is_empty() {
        let _ = writeln!(s, "G {}", matrix_text(&sys.g));
    }
    for b in &sys.boundary {
        let (lo, hi) = sys.domain[b.face.axis as usize];
        let rate = match &b.rate {
            RateCondition::Fixed => "0".to_string(),
            RateCondition::Free => "free".to_string(),
            RateCondition::Prescribed(g) => g.to_string(),
        };
        let _ = writeln!(
            s,
            "boundary {}={} : rate {} = {}",
            axis[b.face.axis as usize],
            number(if b.face.upper { hi } else { lo }),
            sys.space.fields[b.field],
            rate
        );
    }
    for (f, v) in sys.space.fields.iter().zip(&sys.initial) {
        let _ = writeln!(s, "initial {f} = {v}");
    }
    s
}

/// Parse context for expressions over a model's fields, parameters and functions.
pub fn expression_context(sys: &PHSystem) -> ParseContext {
    let mut c = ParseContext::new(sys.space.clone());
    for p in &sys.params {
        c.add_param(&p.name);
    }
    for f in &sys.functions {
        c.add_function(&f.name, f.args.clone());
    }
    c
}

/// Parses a Casimir candidate; only first-order densities are accepted.
pub fn parse_candidate(sys: &PHSystem, text: &str) -> Result<Expr> {
    let e = parse(text, &expression_context(sys)).map_err(|err| ModelError::Invalid(format!("candidate: {err}")))?;
    if e.jet_order() > 1 {
        return Err(ModelError::Invalid(format!(
            "candidate `{e}` has jet order {}; only first-order densities are supported",
            e.jet_order()
        )));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAMPED: &str = "model string_damped
dim 1
independent X in [0, 1]
fields w p
param rho = 1.0 range (0, inf)
param P   = 1.0 range (0, inf)
param r   = 0.1 range [0, inf)
hamiltonian (1/(2*rho))*p^2 + (1/2)*P*w_X^2
J [[0, 1], [-1, 0]]
R [[0, 0], [0, -Dx(r*Dx(.))]]
boundary X=0 : rate w = 0
boundary X=1 : rate w = 0
";

    #[test]
    fn reads_the_damped_string() {
        let sys = parse_model(DAMPED).unwrap();
        let reference = builtin("string_damped", BuiltinOptions::default()).unwrap();
        assert_eq!(sys.r, reference.r);
        assert_eq!(sys.j, reference.j);
        assert_eq!(sys.hamiltonian, reference.hamiltonian);
        assert_eq!(sys.rhs().unwrap(), reference.rhs().unwrap());
        assert_eq!(sys.space.max_order, 5);
    }

    #[test]
    fn symmetric_j_is_rejected() {
        let text = DAMPED.replace("J [[0, 1], [-1, 0]]", "J [[0, 1], [1, 0]]");
        match parse_model(&text) {
            Err(ModelError::Structural(msg)) => assert!(msg.contains("2*omega1*varpi2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undeclared_parameter_is_located() {
        let text = DAMPED.replace("param rho = 1.0 range (0, inf)\n", "");
        match parse_model_unchecked(&text) {
            Err(ModelError::Undeclared { line, col, name }) => {
                assert_eq!((line, col, name.as_str()), (7, 19, "rho"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shape_and_linearity_errors() {
        let text = DAMPED.replace("J [[0, 1], [-1, 0]]", "J [[0, 1]]");
        assert!(matches!(parse_model_unchecked(&text), Err(ModelError::Shape { line: 9, .. })));
        let text = DAMPED.replace("-Dx(r*Dx(.))", ".^2");
        assert!(matches!(parse_model_unchecked(&text), Err(ModelError::Semantic { line: 10, .. })));
        let text = DAMPED.replace("-Dx(r*Dx(.))", "Dx(Dx(Dx(.)))");
        assert!(matches!(parse_model_unchecked(&text), Err(ModelError::Semantic { line: 10, .. })));
    }

    #[test]
    fn multi_line_matrices_and_comments() {
        let text = DAMPED.replace("J [[0, 1], [-1, 0]]", "J [[0, 1],  # first row\n   [-1, 0]]");
        let sys = parse_model(&text).unwrap();
        assert!(!sys.j.is_zero());
    }

    #[test]
    fn emitted_entries() {
        let sys = builtin("string_damped", BuiltinOptions::default()).unwrap();
        let text = emit(&sys);
        assert!(text.contains("J [[0, 1],\n   [-1, 0]]"), "{text}");
        assert!(text.contains("[0, -r*Dx(Dx(.)) - r_X*Dx(.)]"), "{text}");
        assert!(text.contains("boundary X=0 : rate w = 0"));
        assert!(text.contains("param r = 0.1 range [0, inf)"));
    }
}
