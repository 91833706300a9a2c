//! Formal partial derivatives, total derivatives and substitution.

use super::node::{Expr, Func, Node};
use super::symbol::{Coordinate, FunctionSymbol, MultiIndex, Name, Symbol};
use super::ExprError;
use std::collections::BTreeMap;

/// The jet bundle a model lives on: base dimension, dependent fields and the
/// highest derivative order that total derivatives may produce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JetSpace {
    pub dim: usize,
    pub fields: Vec<Name>,
    pub max_order: usize,
}

pub const DEFAULT_MAX_ORDER: usize = 2;

impl JetSpace {
    pub fn new(dim: usize, fields: &[&str]) -> Self {
        JetSpace {
            dim,
            fields: fields.iter().map(|f| Name::from(*f)).collect(),
            max_order: DEFAULT_MAX_ORDER,
        }
    }

    pub fn with_max_order(mut self, k: usize) -> Self {
        self.max_order = k;
        self
    }

    pub fn field_count(&self) -> usize {
        self.fields.len()
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| &**f == name)
    }

    pub fn field(&self, alpha: usize) -> Expr {
        Expr::coord(Coordinate::field(&self.fields[alpha]))
    }

    pub fn jet(&self, alpha: usize, multi: MultiIndex) -> Expr {
        Expr::coord(Coordinate::jet(&self.fields[alpha], multi))
    }

    /// Names not colliding with the model fields, e.g. `omega1, omega2, …`.
    pub fn fresh_names(&self, stem: &str, n: usize) -> Vec<Name> {
        let mut stem = stem.to_string();
        while self
            .fields
            .iter()
            .any(|f| f.starts_with(stem.as_str()) && f[stem.len()..].chars().all(|c| c.is_ascii_digit()))
        {
            stem.push('x');
        }
        (1..=n).map(|i| Name::from(format!("{stem}{i}"))).collect()
    }

    /// `d_A e` with jet-order bookkeeping.
    pub fn total_derivative(&self, e: &Expr, a: u8) -> Result<Expr, ExprError> {
        if a as usize >= self.dim {
            return Err(ExprError::UnknownBaseIndex {
                index: a as usize,
                dim: self.dim,
            });
        }
        let order = e.jet_order();
        if order + 1 > self.max_order && e.depends_on_any_field() {
            return Err(ExprError::JetOrderOverflow {
                requested: order + 1,
                max: self.max_order,
            });
        }
        Ok(total_derivative_unchecked(e, a))
    }

    /// `d_𝔎 e`, applying base indices left to right.
    pub fn total_derivative_multi(&self, e: &Expr, k: &MultiIndex) -> Result<Expr, ExprError> {
        let mut out = e.clone();
        for &a in k.indices() {
            out = self.total_derivative(&out, a)?;
        }
        Ok(out)
    }
}

/// Generic derivation: Leibniz and chain rules with a caller-supplied rule for leaves.
pub fn derive(e: &Expr, leaf: &mut dyn FnMut(&Symbol) -> Expr) -> Expr {
    let mut cache: BTreeMap<Symbol, Expr> = BTreeMap::new();
    derive_rec(e, leaf, &mut cache)
}

fn derive_rec(
    e: &Expr,
    leaf: &mut dyn FnMut(&Symbol) -> Expr,
    cache: &mut BTreeMap<Symbol, Expr>,
) -> Expr {
    match e.node() {
        Node::Num(_) => Expr::zero(),
        Node::Sym(s) => {
            if let Some(d) = cache.get(s) {
                return d.clone();
            }
            let d = leaf(s);
            cache.insert(s.clone(), d.clone());
            d
        }
        Node::Fn(f, a) => {
            let da = derive_rec(a, leaf, cache);
            if da.is_zero() {
                return da;
            }
            let outer = match f {
                Func::Sin => a.cos(),
                Func::Cos => -a.sin(),
                Func::Exp => e.clone(),
                Func::Sqrt => Expr::frac(1, 2) * e.recip(),
            };
            outer * da
        }
        Node::Pow(b, n) => {
            let db = derive_rec(b, leaf, cache);
            if db.is_zero() {
                return db;
            }
            Expr::int(*n) * b.pow(n - 1) * db
        }
        Node::Mul(c, fs) => {
            let mut terms = Vec::new();
            for i in 0..fs.len() {
                let d = derive_rec(&fs[i], leaf, cache);
                if d.is_zero() {
                    continue;
                }
                let mut items = Vec::with_capacity(fs.len() + 1);
                items.push(Expr::num(c.clone()));
                for (j, f) in fs.iter().enumerate() {
                    if j != i {
                        items.push(f.clone());
                    }
                }
                items.push(d);
                terms.push(Expr::product(items));
            }
            Expr::sum(terms)
        }
        Node::Add(ts) => {
            let mut items = Vec::with_capacity(ts.len());
            for t in ts {
                items.push(derive_rec(t, leaf, cache));
            }
            Expr::sum(items)
        }
    }
}

fn function_partial(f: &FunctionSymbol, c: &Coordinate) -> Expr {
    Expr::sum(
        f.args
            .iter()
            .enumerate()
            .filter(|(_, a)| *a == c)
            .map(|(k, _)| Expr::func_sym(f.with_partial(k))),
    )
}

impl Expr {
    /// Formal partial derivative treating every distinct coordinate as independent.
    pub fn partial(&self, c: &Coordinate) -> Expr {
        derive(self, &mut |s| match s {
            Symbol::Coord(x) => {
                if x == c {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Symbol::Func(f) => function_partial(f, c),
        })
    }

    /// Partial with respect to an arbitrary function symbol treated as a variable.
    pub fn partial_symbol(&self, target: &Symbol) -> Expr {
        derive(self, &mut |s| if s == target { Expr::one() } else { Expr::zero() })
    }
}

fn coordinate_total_derivative(c: &Coordinate, a: u8) -> Expr {
    match c {
        Coordinate::Independent(b) => {
            if *b == a {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Coordinate::Field { name, multi } => Expr::coord(Coordinate::jet(name, multi.with(a))),
    }
}

/// `d_A = ∂_A + x^α_A ∂_α + x^α_{AB} ∂^B_α + …`, without order checks.
pub fn total_derivative_unchecked(e: &Expr, a: u8) -> Expr {
    derive(e, &mut |s| match s {
        Symbol::Coord(c) => coordinate_total_derivative(c, a),
        Symbol::Func(f) => Expr::sum(f.args.iter().enumerate().map(|(k, arg)| {
            let d = coordinate_total_derivative(arg, a);
            if d.is_zero() {
                d
            } else {
                Expr::func_sym(f.with_partial(k)) * d
            }
        })),
    })
}

/// Bindings for [`JetSpace::substitute`].
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    map: BTreeMap<Symbol, Expr>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, s: Symbol, value: Expr) -> Self {
        self.map.insert(s, value);
        self
    }

    pub fn insert(&mut self, s: Symbol, value: Expr) {
        self.map.insert(s, value);
    }

    pub fn bind_field(self, name: &Name, value: Expr) -> Self {
        self.bind(Symbol::field(name), value)
    }

    pub fn get(&self, s: &Symbol) -> Option<&Expr> {
        self.map.get(s)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl JetSpace {
    fn bound_image(&self, s: &Symbol, b: &Bindings) -> Option<Expr> {
        if let Some(v) = b.get(s) {
            return Some(v.clone());
        }
        match s {
            Symbol::Coord(Coordinate::Field { name, multi }) if !multi.is_empty() => b
                .get(&Symbol::field(name))
                .map(|base| total_derivative_multi_unchecked(base, multi)),
            Symbol::Func(f) if !f.partials.is_empty() => {
                b.get(&Symbol::Func(f.root())).map(|base| {
                    f.partials
                        .iter()
                        .fold(base.clone(), |acc, &p| acc.partial(&f.args[p as usize]))
                })
            }
            _ => None,
        }
    }

    /// Substitutes bound symbols; derivative coordinates of a bound field receive the
    /// matching total derivatives of its binding, and partials of a bound function the
    /// matching partials of its binding.
    pub fn substitute(&self, e: &Expr, b: &Bindings) -> Result<Expr, ExprError> {
        // Explicit bindings of derivative coordinates must agree with derived ones.
        for (s, v) in &b.map {
            if let Symbol::Coord(Coordinate::Field { name, multi }) = s {
                if multi.is_empty() {
                    continue;
                }
                if let Some(base) = b.get(&Symbol::field(name)) {
                    let derived = total_derivative_multi_unchecked(base, multi);
                    if &derived != v {
                        return Err(ExprError::InconsistentBinding {
                            symbol: s.to_string(),
                            given: v.to_string(),
                            derived: derived.to_string(),
                        });
                    }
                }
            }
        }
        let mut err = None;
        let out = e.map_symbols(&mut |s| {
            if let Some(v) = self.bound_image(s, b) {
                return v;
            }
            if let Symbol::Func(f) = s {
                // Composition through function arguments is not supported.
                if f
                    .args
                    .iter()
                    .any(|c| self.bound_image(&Symbol::Coord(c.clone()), b).is_some())
                {
                    err = Some(ExprError::UnsupportedSubstitution(s.to_string()));
                }
            }
            Expr::sym(s.clone())
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

fn total_derivative_multi_unchecked(e: &Expr, k: &MultiIndex) -> Expr {
    k.indices()
        .iter()
        .fold(e.clone(), |acc, &a| total_derivative_unchecked(&acc, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet1() -> JetSpace {
        JetSpace::new(1, &["w", "p"])
    }

    fn x_() -> MultiIndex {
        MultiIndex::single(0)
    }

    #[test]
    fn partial_of_kinetic_term() {
        let p = Expr::field("p");
        let rho = Expr::param("rho", 1);
        let h = &p * &p / (Expr::int(2) * &rho);
        let c = Coordinate::field(&"p".into());
        assert_eq!(h.partial(&c), &p / &rho);
    }

    #[test]
    fn partial_of_potential_term() {
        let wx = Expr::jet("w", x_());
        let pp = Expr::param("P", 1);
        let h = Expr::frac(1, 2) * &pp * wx.pow(2);
        assert!(h.partial(&Coordinate::field(&"w".into())).is_zero());
        assert_eq!(h.partial(&Coordinate::jet(&"w".into(), x_())), &pp * &wx);
    }

    #[test]
    fn parameter_partial_on_base_coordinate() {
        let pp = Expr::param("P", 1);
        let d = pp.partial(&Coordinate::Independent(0));
        assert_eq!(d.to_string(), "P_X");
    }

    #[test]
    fn total_derivative_examples() {
        let j = jet1();
        assert_eq!(j.total_derivative(&Expr::field("w"), 0).unwrap(), Expr::jet("w", x_()));
        assert!(j.total_derivative(&Expr::int(7), 0).unwrap().is_zero());
        let pp = Expr::param("P", 1);
        let e = &pp * Expr::jet("w", x_());
        let d = j.total_derivative(&e, 0).unwrap();
        let ppx = pp.partial(&Coordinate::Independent(0));
        let expected = ppx * Expr::jet("w", x_()) + &pp * Expr::jet("w", MultiIndex::new([0, 0]));
        assert_eq!(d, expected);
    }

    #[test]
    fn total_derivative_overflow() {
        let j = jet1();
        let wxx = Expr::jet("w", MultiIndex::new([0, 0]));
        assert!(matches!(
            j.total_derivative(&wxx, 0),
            Err(ExprError::JetOrderOverflow { requested: 3, max: 2 })
        ));
        assert!(j.clone().with_max_order(4).total_derivative(&wxx, 0).is_ok());
        assert!(matches!(j.total_derivative(&wxx, 1), Err(ExprError::UnknownBaseIndex { .. })));
    }

    #[test]
    fn substitute_section_computes_derivatives() {
        let j = jet1();
        let x = Expr::independent(0);
        let phi = (Expr::pi() * &x).sin();
        let b = Bindings::new().bind_field(&"w".into(), phi);
        let out = j.substitute(&Expr::jet("w", x_()), &b).unwrap();
        assert_eq!(out, Expr::pi() * (Expr::pi() * &x).cos());
    }

    #[test]
    fn substitute_values() {
        let j = jet1();
        let p = Expr::field("p");
        let rho = Expr::param("rho", 1);
        let b = Bindings::new().bind_field(&"p".into(), Expr::zero());
        assert!(j.substitute(&(&p * &p / (Expr::int(2) * &rho)), &b).unwrap().is_zero());
        let rs = rho.as_symbol().unwrap().clone();
        let b = Bindings::new().bind(rs, Expr::one());
        assert_eq!(j.substitute(&(&p / &rho), &b).unwrap(), p);
        // the parameter derivative follows the binding
        let rx = rho.partial(&Coordinate::Independent(0));
        assert!(j.substitute(&rx, &b).unwrap().is_zero());
    }

    #[test]
    fn inconsistent_binding_rejected() {
        let j = jet1();
        let b = Bindings::new()
            .bind_field(&"w".into(), Expr::independent(0))
            .bind(Symbol::jet(&"w".into(), x_()), Expr::int(5));
        assert!(matches!(
            j.substitute(&Expr::field("w"), &b),
            Err(ExprError::InconsistentBinding { .. })
        ));
    }
}
