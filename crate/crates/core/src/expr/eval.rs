//! Floating-point evaluation of canonical expressions.

use super::node::{Expr, Func, Node};
use super::symbol::Symbol;
use super::ExprError;
use std::collections::BTreeMap;

/// Numeric assignment for symbols. `pi` is supplied automatically when unbound.
#[derive(Clone, Debug, Default)]
pub struct Point {
    values: BTreeMap<Symbol, f64>,
}

impl Point {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, s: Symbol, v: f64) -> Self {
        self.values.insert(s, v);
        self
    }

    pub fn set(&mut self, s: Symbol, v: f64) {
        self.values.insert(s, v);
    }

    pub fn get(&self, s: &Symbol) -> Option<f64> {
        self.values.get(s).copied().or_else(|| builtin_constant(s))
    }
}

fn builtin_constant(s: &Symbol) -> Option<f64> {
    match s {
        Symbol::Func(f) if f.args.is_empty() && f.partials.is_empty() && &*f.name == "pi" => {
            Some(std::f64::consts::PI)
        }
        _ => None,
    }
}

fn apply_func(f: Func, x: f64) -> f64 {
    match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Exp => x.exp(),
        Func::Sqrt => x.sqrt(),
    }
}

impl Expr {
    /// Evaluates with domain checks; errors name the offending subexpression.
    pub fn eval(&self, point: &Point) -> Result<f64, ExprError> {
        match self.node() {
            Node::Num(q) => Ok(Expr::to_f64(q)),
            Node::Sym(s) => point
                .get(s)
                .ok_or_else(|| ExprError::MissingBinding(s.to_string())),
            Node::Fn(f, a) => {
                let x = a.eval(point)?;
                if *f == Func::Sqrt && x < 0.0 {
                    return Err(ExprError::Domain {
                        reason: "square root of a negative number".into(),
                        subexpression: self.to_string(),
                    });
                }
                Ok(apply_func(*f, x))
            }
            Node::Pow(b, n) => {
                let x = b.eval(point)?;
                if *n < 0 && x == 0.0 {
                    return Err(ExprError::Domain {
                        reason: "division by zero".into(),
                        subexpression: self.to_string(),
                    });
                }
                Ok(x.powi(*n as i32))
            }
            Node::Mul(c, fs) => {
                let mut acc = Expr::to_f64(c);
                for f in fs {
                    acc *= f.eval(point)?;
                }
                Ok(acc)
            }
            Node::Add(ts) => {
                let mut acc = 0.0;
                for t in ts {
                    acc += t.eval(point)?;
                }
                Ok(acc)
            }
        }
    }

    /// Compiles the expression against a fixed slot layout for repeated evaluation.
    pub fn compile(&self, slots: &[Symbol]) -> Result<Compiled, ExprError> {
        Ok(Compiled {
            op: compile_node(self, slots)?,
        })
    }
}

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Slot(usize),
    Fn(Func, Box<Op>),
    Pow(Box<Op>, i32),
    Mul(f64, Vec<Op>),
    Add(Vec<Op>),
}

fn compile_node(e: &Expr, slots: &[Symbol]) -> Result<Op, ExprError> {
    Ok(match e.node() {
        Node::Num(q) => Op::Const(Expr::to_f64(q)),
        Node::Sym(s) => match slots.iter().position(|x| x == s) {
            Some(i) => Op::Slot(i),
            None => Op::Const(
                builtin_constant(s).ok_or_else(|| ExprError::MissingBinding(s.to_string()))?,
            ),
        },
        Node::Fn(f, a) => Op::Fn(*f, Box::new(compile_node(a, slots)?)),
        Node::Pow(b, n) => Op::Pow(Box::new(compile_node(b, slots)?), *n as i32),
        Node::Mul(c, fs) => Op::Mul(
            Expr::to_f64(c),
            fs.iter().map(|f| compile_node(f, slots)).collect::<Result<_, _>>()?,
        ),
        Node::Add(ts) => Op::Add(ts.iter().map(|t| compile_node(t, slots)).collect::<Result<_, _>>()?),
    })
}

/// An expression lowered to slot-indexed form; evaluation performs no domain checks.
#[derive(Clone, Debug)]
pub struct Compiled {
    op: Op,
}

impl Compiled {
    pub fn eval(&self, values: &[f64]) -> f64 {
        eval_op(&self.op, values)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.op, Op::Const(_))
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.op {
            Op::Const(c) => Some(c),
            _ => None,
        }
    }
}

fn eval_op(op: &Op, v: &[f64]) -> f64 {
    match op {
        Op::Const(c) => *c,
        Op::Slot(i) => v[*i],
        Op::Fn(f, a) => apply_func(*f, eval_op(a, v)),
        Op::Pow(b, n) => eval_op(b, v).powi(*n),
        Op::Mul(c, fs) => fs.iter().fold(*c, |acc, f| acc * eval_op(f, v)),
        Op::Add(ts) => ts.iter().map(|t| eval_op(t, v)).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::symbol::MultiIndex;

    #[test]
    fn kinetic_energy_value() {
        let p = Expr::field("p");
        let rho = Expr::param("rho", 1);
        let h = &p * &p / (Expr::int(2) * &rho);
        let pt = Point::new()
            .with(p.as_symbol().unwrap().clone(), 2.0)
            .with(rho.as_symbol().unwrap().clone(), 1.0);
        assert_eq!(h.eval(&pt).unwrap(), 2.0);
    }

    #[test]
    fn potential_energy_value() {
        let wx = Expr::jet("w", MultiIndex::single(0));
        let pp = Expr::param("P", 1);
        let h = Expr::frac(1, 2) * &pp * wx.pow(2);
        let pt = Point::new()
            .with(pp.as_symbol().unwrap().clone(), 1.0)
            .with(wx.as_symbol().unwrap().clone(), std::f64::consts::PI);
        let v = h.eval(&pt).unwrap();
        assert!((v - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-15);
        assert!((v - 4.9348).abs() < 1e-4);
    }

    #[test]
    fn division_by_zero_is_reported() {
        let rho = Expr::param("rho", 1);
        let pt = Point::new().with(rho.as_symbol().unwrap().clone(), 0.0);
        match rho.recip().eval(&pt) {
            Err(ExprError::Domain { subexpression, .. }) => assert_eq!(subexpression, "1/rho"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_binding() {
        assert!(matches!(
            Expr::field("w").eval(&Point::new()),
            Err(ExprError::MissingBinding(_))
        ));
    }

    #[test]
    fn compiled_matches_interpreted() {
        let w = Expr::field("w");
        let e = (Expr::pi() * &w).sin() + w.pow(3) / Expr::int(4) + (w.clone() + Expr::int(2)).recip();
        let slots = vec![w.as_symbol().unwrap().clone()];
        let c = e.compile(&slots).unwrap();
        for x in [0.1, 0.7, -1.3] {
            let pt = Point::new().with(slots[0].clone(), x);
            assert!((c.eval(&[x]) - e.eval(&pt).unwrap()).abs() < 1e-14);
        }
    }
}
