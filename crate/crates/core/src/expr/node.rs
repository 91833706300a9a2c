//! Canonical symbolic expressions.
//!
//! Every `Expr` is kept in a canonical, fully expanded form: sums are flat and
//! sorted, products carry a single rational coefficient and sorted factors with
//! merged integer exponents, positive powers of sums are expanded, and negative
//! powers of sums are normalised so that their leading term has coefficient 1.
//! Structural equality of two `Expr` values is therefore symbolic equality.

use super::symbol::{Coordinate, FunctionSymbol, MultiIndex, Name, Symbol};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

pub type Rational = BigRational;

/// Elementary unary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Num(Rational),
    Sym(Symbol),
    Fn(Func, Expr),
    /// Base is a symbol, a function application, or (for negative exponents) a sum.
    Pow(Expr, i64),
    /// Coefficient and sorted non-numeric factors.
    Mul(Rational, Vec<Expr>),
    /// At least two sorted terms with distinct monomial parts.
    Add(Vec<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr(Arc<Node>);

/// Monomial part of a term: sorted `(base, exponent)` pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Key(Vec<(Expr, i64)>);

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| {
            for ((b1, e1), (b2, e2)) in self.0.iter().zip(&other.0) {
                let c = b1.cmp(b2).then_with(|| e1.cmp(e2));
                if c != Ordering::Equal {
                    return c;
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

impl Expr {
    fn from_node(n: Node) -> Self {
        Expr(Arc::new(n))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn zero() -> Self {
        Expr::num(Rational::zero())
    }

    pub fn one() -> Self {
        Expr::num(Rational::one())
    }

    pub fn num(q: Rational) -> Self {
        Expr::from_node(Node::Num(q))
    }

    pub fn int(n: i64) -> Self {
        Expr::num(rat(n))
    }

    pub fn frac(n: i64, d: i64) -> Self {
        Expr::num(Rational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn sym(s: Symbol) -> Self {
        Expr::from_node(Node::Sym(s))
    }

    pub fn coord(c: Coordinate) -> Self {
        Expr::sym(Symbol::Coord(c))
    }

    /// Dependent coordinate `x^α` of the named field.
    pub fn field(name: &str) -> Self {
        Expr::coord(Coordinate::field(&Name::from(name)))
    }

    /// Derivative coordinate `x^α_𝔎`.
    pub fn jet(name: &str, multi: MultiIndex) -> Self {
        Expr::coord(Coordinate::jet(&Name::from(name), multi))
    }

    pub fn independent(a: u8) -> Self {
        Expr::coord(Coordinate::Independent(a))
    }

    pub fn func_sym(f: FunctionSymbol) -> Self {
        Expr::sym(Symbol::Func(f))
    }

    /// A spatial parameter `name(X^1, …, X^d)`.
    pub fn param(name: &str, dim: usize) -> Self {
        let args: Vec<Coordinate> = (0..dim as u8).map(Coordinate::Independent).collect();
        Expr::func_sym(FunctionSymbol::new(&Name::from(name), Arc::from(args)))
    }

    /// A constant opaque symbol such as `pi`.
    pub fn constant(name: &str) -> Self {
        Expr::func_sym(FunctionSymbol::constant(name))
    }

    pub fn pi() -> Self {
        Expr::constant("pi")
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.node(), Node::Num(q) if q.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self.node(), Node::Num(q) if q.is_one())
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match self.node() {
            Node::Num(q) => Some(q),
            _ => None,
        }
    }

    pub fn as_symbol(&self) -> Option<&Symbol> {
        match self.node() {
            Node::Sym(s) => Some(s),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self.node() {
            Node::Num(_) => 0,
            Node::Sym(_) => 1,
            Node::Fn(..) => 2,
            Node::Pow(..) => 3,
            Node::Mul(..) => 4,
            Node::Add(_) => 5,
        }
    }

    // ---- canonical construction -------------------------------------------------

    fn term_parts(&self) -> (Rational, Vec<(Expr, i64)>) {
        match self.node() {
            Node::Num(q) => (q.clone(), Vec::new()),
            Node::Sym(_) | Node::Fn(..) | Node::Add(_) => (Rational::one(), vec![(self.clone(), 1)]),
            Node::Pow(b, n) => (Rational::one(), vec![(b.clone(), *n)]),
            Node::Mul(c, fs) => (
                c.clone(),
                fs.iter()
                    .map(|f| match f.node() {
                        Node::Pow(b, n) => (b.clone(), *n),
                        _ => (f.clone(), 1),
                    })
                    .collect(),
            ),
        }
    }

    fn terms(&self) -> Vec<(Rational, Vec<(Expr, i64)>)> {
        match self.node() {
            Node::Add(ts) => ts.iter().map(Expr::term_parts).collect(),
            _ => vec![self.term_parts()],
        }
    }

    fn factor(base: &Expr, n: i64) -> Expr {
        if n == 1 {
            base.clone()
        } else {
            Expr::from_node(Node::Pow(base.clone(), n))
        }
    }

    fn from_term(coef: Rational, factors: Vec<(Expr, i64)>) -> Expr {
        if coef.is_zero() {
            return Expr::zero();
        }
        if factors.is_empty() {
            return Expr::num(coef);
        }
        if coef.is_one() && factors.len() == 1 {
            let (b, n) = &factors[0];
            return Expr::factor(b, *n);
        }
        let fs = factors.iter().map(|(b, n)| Expr::factor(b, *n)).collect();
        Expr::from_node(Node::Mul(coef, fs))
    }

    fn from_map(map: BTreeMap<Key, Rational>) -> Expr {
        let mut terms: Vec<Expr> = map
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| Expr::from_term(c, k.0))
            .collect();
        match terms.len() {
            0 => Expr::zero(),
            1 => terms.pop().unwrap(),
            _ => Expr::from_node(Node::Add(terms)),
        }
    }

    /// Canonical sum.
    pub fn sum<I: IntoIterator<Item = Expr>>(items: I) -> Expr {
        let mut map: BTreeMap<Key, Rational> = BTreeMap::new();
        for e in items {
            for (c, k) in e.terms() {
                let slot = map.entry(Key(k)).or_insert_with(Rational::zero);
                *slot += c;
            }
        }
        Expr::from_map(map)
    }

    fn merge_factors(a: &[(Expr, i64)], b: &[(Expr, i64)]) -> Vec<(Expr, i64)> {
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    let n = a[i].1 + b[j].1;
                    if n != 0 {
                        out.push((a[i].0.clone(), n));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        out
    }

    /// Canonical product of two expressions (sums are distributed).
    pub fn mul2(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if a.is_one() {
            return b.clone();
        }
        if b.is_one() {
            return a.clone();
        }
        let ta = a.terms();
        let tb = b.terms();
        let mut map: BTreeMap<Key, Rational> = BTreeMap::new();
        for (ca, ka) in &ta {
            for (cb, kb) in &tb {
                let k = Expr::merge_factors(ka, kb);
                let slot = map.entry(Key(k)).or_insert_with(Rational::zero);
                *slot += ca * cb;
            }
        }
        Expr::from_map(map)
    }

    /// Canonical product.
    pub fn product<I: IntoIterator<Item = Expr>>(items: I) -> Expr {
        items.into_iter().fold(Expr::one(), |acc, e| Expr::mul2(&acc, &e))
    }

    /// Canonical integer power.
    pub fn pow(&self, n: i64) -> Expr {
        if n == 0 {
            return Expr::one();
        }
        if n == 1 {
            return self.clone();
        }
        match self.node() {
            Node::Num(q) => {
                if q.is_zero() {
                    if n > 0 {
                        return Expr::zero();
                    }
                    // 0^-n has no canonical value; kept as an explicit node so that
                    // evaluation reports the division by zero.
                    return Expr::from_node(Node::Pow(self.clone(), n));
                }
                let e = n.unsigned_abs() as usize;
                let p = num_traits::pow(q.clone(), e);
                Expr::num(if n > 0 { p } else { p.recip() })
            }
            Node::Sym(_) | Node::Fn(..) => Expr::from_node(Node::Pow(self.clone(), n)),
            Node::Pow(b, m) => b.pow(m * n),
            Node::Mul(c, fs) => {
                let mut items = vec![Expr::num(c.clone()).pow(n)];
                items.extend(fs.iter().map(|f| f.pow(n)));
                Expr::product(items)
            }
            Node::Add(ts) => {
                if n > 0 {
                    let mut acc = self.clone();
                    for _ in 1..n {
                        acc = Expr::mul2(&acc, self);
                    }
                    acc
                } else {
                    let (lead, _) = ts[0].term_parts();
                    let monic = Expr::mul2(self, &Expr::num(lead.recip()));
                    Expr::mul2(
                        &Expr::num(lead).pow(n),
                        &Expr::from_node(Node::Pow(monic, n)),
                    )
                }
            }
        }
    }

    pub fn recip(&self) -> Expr {
        self.pow(-1)
    }

    /// Canonical unary function application.
    pub fn apply(f: Func, arg: Expr) -> Expr {
        if arg.is_zero() {
            match f {
                Func::Sin | Func::Sqrt => return Expr::zero(),
                Func::Cos | Func::Exp => return Expr::one(),
            }
        }
        if f == Func::Sqrt && arg.is_one() {
            return Expr::one();
        }
        Expr::from_node(Node::Fn(f, arg))
    }

    pub fn sin(&self) -> Expr {
        Expr::apply(Func::Sin, self.clone())
    }
    pub fn cos(&self) -> Expr {
        Expr::apply(Func::Cos, self.clone())
    }
    pub fn exp(&self) -> Expr {
        Expr::apply(Func::Exp, self.clone())
    }
    pub fn sqrt(&self) -> Expr {
        Expr::apply(Func::Sqrt, self.clone())
    }

    pub fn scale(&self, q: &Rational) -> Expr {
        Expr::mul2(self, &Expr::num(q.clone()))
    }

    /// Rebuilds the expression bottom-up through the canonical constructors.
    pub fn canonicalize(&self) -> Expr {
        match self.node() {
            Node::Num(_) | Node::Sym(_) => self.clone(),
            Node::Fn(f, a) => Expr::apply(*f, a.canonicalize()),
            Node::Pow(b, n) => b.canonicalize().pow(*n),
            Node::Mul(c, fs) => {
                let mut items = vec![Expr::num(c.clone())];
                items.extend(fs.iter().map(Expr::canonicalize));
                Expr::product(items)
            }
            Node::Add(ts) => Expr::sum(ts.iter().map(Expr::canonicalize)),
        }
    }

    // ---- structural queries -----------------------------------------------------

    /// Rebuilds the expression with every symbol replaced by `f(symbol)`.
    pub fn map_symbols(&self, f: &mut dyn FnMut(&Symbol) -> Expr) -> Expr {
        match self.node() {
            Node::Num(_) => self.clone(),
            Node::Sym(s) => f(s),
            Node::Fn(g, a) => Expr::apply(*g, a.map_symbols(f)),
            Node::Pow(b, n) => b.map_symbols(f).pow(*n),
            Node::Mul(c, fs) => {
                let mut items = vec![Expr::num(c.clone())];
                for x in fs {
                    items.push(x.map_symbols(f));
                }
                Expr::product(items)
            }
            Node::Add(ts) => {
                let mut items = Vec::with_capacity(ts.len());
                for t in ts {
                    items.push(t.map_symbols(f));
                }
                Expr::sum(items)
            }
        }
    }

    pub fn visit_symbols(&self, f: &mut dyn FnMut(&Symbol)) {
        match self.node() {
            Node::Num(_) => {}
            Node::Sym(s) => f(s),
            Node::Fn(_, a) => a.visit_symbols(f),
            Node::Pow(b, _) => b.visit_symbols(f),
            Node::Mul(_, xs) | Node::Add(xs) => xs.iter().for_each(|x| x.visit_symbols(f)),
        }
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.visit_symbols(&mut |s| {
            out.insert(s.clone());
        });
        out
    }

    pub fn contains_symbol(&self, s: &Symbol) -> bool {
        let mut found = false;
        self.visit_symbols(&mut |x| found |= x == s);
        found
    }

    /// Highest derivative order among the jet coordinates the expression depends on.
    pub fn jet_order(&self) -> usize {
        let mut m = 0;
        self.visit_symbols(&mut |s| m = m.max(s.jet_order()));
        m
    }

    /// True when some jet coordinate of the named field occurs.
    pub fn depends_on_field(&self, name: &str) -> bool {
        let mut found = false;
        self.visit_symbols(&mut |s| match s {
            Symbol::Coord(Coordinate::Field { name: n, .. }) => found |= &**n == name,
            Symbol::Func(fs) => {
                found |= fs
                    .args
                    .iter()
                    .any(|c| matches!(c, Coordinate::Field { name: n, .. } if &**n == name))
            }
            _ => {}
        });
        found
    }

    /// True when any field coordinate (of any order) occurs.
    pub fn depends_on_any_field(&self) -> bool {
        let mut found = false;
        self.visit_symbols(&mut |s| match s {
            Symbol::Coord(Coordinate::Field { .. }) => found = true,
            Symbol::Func(fs) => {
                found |= fs.args.iter().any(|c| matches!(c, Coordinate::Field { .. }))
            }
            _ => {}
        });
        found
    }

    /// Number of nodes; a size measure for reports and benchmarks.
    pub fn size(&self) -> usize {
        match self.node() {
            Node::Num(_) | Node::Sym(_) => 1,
            Node::Fn(_, a) => 1 + a.size(),
            Node::Pow(b, _) => 1 + b.size(),
            Node::Mul(_, xs) | Node::Add(xs) => 1 + xs.iter().map(Expr::size).sum::<usize>(),
        }
    }

    pub fn to_f64(q: &Rational) -> f64 {
        q.to_f64().unwrap_or(f64::NAN)
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        self.rank().cmp(&other.rank()).then_with(|| match (self.node(), other.node()) {
            (Node::Num(a), Node::Num(b)) => a.cmp(b),
            (Node::Sym(a), Node::Sym(b)) => a.cmp(b),
            (Node::Fn(f, a), Node::Fn(g, b)) => f.cmp(g).then_with(|| a.cmp(b)),
            (Node::Pow(a, n), Node::Pow(b, m)) => a.cmp(b).then_with(|| n.cmp(m)),
            (Node::Mul(c, a), Node::Mul(d, b)) => a.cmp(b).then_with(|| c.cmp(d)),
            (Node::Add(a), Node::Add(b)) => a.len().cmp(&b.len()).then_with(|| a.cmp(b)),
            _ => Ordering::Equal,
        })
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl std::ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &rhs)
            }
        }
        impl std::ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, rhs)
            }
        }
        impl std::ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl std::ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, &rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum([a.clone(), b.clone()]));
binop!(Sub, sub, |a, b| Expr::sum([a.clone(), -b]));
binop!(Mul, mul, Expr::mul2);
binop!(Div, div, |a, b| Expr::mul2(a, &b.recip()));

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::mul2(&self, &Expr::int(-1))
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::mul2(self, &Expr::int(-1))
    }
}
