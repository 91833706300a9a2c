//! Rendering in the input grammar, so that `parse(e.to_string())` gives back `e`.

use super::node::{Expr, Node, Rational};
use num_traits::{One, Signed};
use std::fmt;

fn write_base(f: &mut fmt::Formatter<'_>, b: &Expr) -> fmt::Result {
    match b.node() {
        Node::Add(_) | Node::Mul(..) => write!(f, "({b})"),
        Node::Num(q) if !q.is_integer() || q.is_negative() => write!(f, "({b})"),
        _ => write!(f, "{b}"),
    }
}

fn write_factor(f: &mut fmt::Formatter<'_>, base: &Expr, n: i64) -> fmt::Result {
    write_base(f, base)?;
    if n != 1 {
        write!(f, "^{n}")?;
    }
    Ok(())
}

/// Writes a term without its sign.
fn write_unsigned_term(f: &mut fmt::Formatter<'_>, coef: &Rational, factors: &[Expr]) -> fmt::Result {
    let split: Vec<(&Expr, i64)> = factors
        .iter()
        .map(|x| match x.node() {
            Node::Pow(b, n) => (b, *n),
            _ => (x, 1),
        })
        .collect();
    let numer = coef.numer().abs();
    let denom = coef.denom().clone();
    let mut top = Vec::new();
    let mut bottom = Vec::new();
    for (b, n) in split {
        if n > 0 {
            top.push((b, n));
        } else {
            bottom.push((b, -n));
        }
    }

    let mut first = true;
    if !numer.is_one() || top.is_empty() {
        write!(f, "{numer}")?;
        first = false;
    }
    for (b, n) in &top {
        if !first {
            f.write_str("*")?;
        }
        write_factor(f, b, *n)?;
        first = false;
    }

    let count = bottom.len() + usize::from(!denom.is_one());
    if count == 0 {
        return Ok(());
    }
    f.write_str("/")?;
    if count > 1 {
        f.write_str("(")?;
    }
    let mut first = true;
    if !denom.is_one() {
        write!(f, "{denom}")?;
        first = false;
    }
    for (b, n) in &bottom {
        if !first {
            f.write_str("*")?;
        }
        write_factor(f, b, *n)?;
        first = false;
    }
    if count > 1 {
        f.write_str(")")?;
    }
    Ok(())
}

fn term_pieces(t: &Expr) -> (Rational, Vec<Expr>) {
    match t.node() {
        Node::Num(q) => (q.clone(), Vec::new()),
        Node::Mul(c, fs) => (c.clone(), fs.clone()),
        _ => (Rational::one(), vec![t.clone()]),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Num(q) => write!(f, "{q}"),
            Node::Sym(s) => write!(f, "{s}"),
            Node::Fn(g, a) => write!(f, "{}({a})", g.name()),
            Node::Pow(..) | Node::Mul(..) => {
                let (c, fs) = term_pieces(self);
                if c.is_negative() {
                    f.write_str("-")?;
                }
                write_unsigned_term(f, &c, &fs)
            }
            Node::Add(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    let (c, fs) = term_pieces(t);
                    match (i, c.is_negative()) {
                        (0, true) => f.write_str("-")?,
                        (0, false) => {}
                        (_, true) => f.write_str(" - ")?,
                        (_, false) => f.write_str(" + ")?,
                    }
                    write_unsigned_term(f, &c, &fs)?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::symbol::MultiIndex;

    #[test]
    fn renders_kinetic_energy() {
        let p = Expr::field("p");
        let rho = Expr::param("rho", 1);
        assert_eq!((&p * &p / (Expr::int(2) * &rho)).to_string(), "p^2/(2*rho)");
        assert_eq!((&p / &rho).to_string(), "p/rho");
        assert_eq!(rho.recip().to_string(), "1/rho");
    }

    #[test]
    fn renders_signed_sums() {
        let wx = Expr::jet("w", MultiIndex::single(0));
        let pp = Expr::param("P", 1);
        let e = -(Expr::frac(3, 2) * &pp * &wx) + Expr::int(1);
        assert_eq!(e.to_string(), "1 - 3*P*w_X/2");
        assert_eq!(Expr::frac(-1, 2).to_string(), "-1/2");
    }

    #[test]
    fn renders_functions_and_reciprocal_sums() {
        let x = Expr::independent(0);
        let e = (Expr::pi() * &x).sin().pow(2) / (x.clone() + Expr::one());
        assert_eq!(e.to_string(), "sin(pi*X)^2/(1 + X)");
    }
}
