//! Euler–Lagrange and boundary operators, prolongation, and the Lie-derivative
//! split of a density into a domain part and a horizontal divergence.

mod linop;

pub use linop::{unbounded as unbounded_space, AdjointResult, Bilinear, IdentityCheck, LinDiffOp};

use crate::expr::{Coordinate, Expr, ExprError, JetSpace, MultiIndex, Symbol};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VariationalError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("dimension mismatch: expected {expected} components, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("density has jet order {0}, but a first-order density is required")]
    NotFirstOrder(usize),
    #[error("operator entry is not linear in its argument: {0}")]
    NotLinear(String),
}

pub type Result<T> = std::result::Result<T, VariationalError>;

/// A density `ℱ dX` on the jet bundle described by `space`.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub integrand: Expr,
    pub space: JetSpace,
}

/// Components `ω_α` of an element of Λ₁ᵈ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CovectorDensity(pub Vec<Expr>);

/// Components `v^α` of a generalized vertical vector field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerticalField(pub Vec<Expr>);

/// Coefficients of `dX_A`, one per base direction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryDensity(pub Vec<Expr>);

/// `δ∂𝔉`: the coefficient of `dx^α ∧ dX_A`, indexed `[α][A]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryForm(pub Vec<Vec<Expr>>);

/// First prolongation `j¹(v)`: the components and their total derivatives `[α][A]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prolonged {
    pub v: Vec<Expr>,
    pub dv: Vec<Vec<Expr>>,
}

impl BoundaryDensity {
    pub fn zero(dim: usize) -> Self {
        BoundaryDensity(vec![Expr::zero(); dim])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Expr::is_zero)
    }

    pub fn add(&self, other: &BoundaryDensity) -> BoundaryDensity {
        BoundaryDensity(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &BoundaryDensity) -> BoundaryDensity {
        BoundaryDensity(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl CovectorDensity {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Expr::is_zero)
    }
}

impl VerticalField {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Expr::is_zero)
    }
}

/// Every field jet coordinate `e` depends on, including those hidden in function arguments.
pub fn field_coordinates(e: &Expr) -> BTreeSet<Coordinate> {
    let mut out = BTreeSet::new();
    e.visit_symbols(&mut |s| match s {
        Symbol::Coord(c @ Coordinate::Field { .. }) => {
            out.insert(c.clone());
        }
        Symbol::Func(f) => {
            for c in f.args.iter() {
                if matches!(c, Coordinate::Field { .. }) {
                    out.insert(c.clone());
                }
            }
        }
        _ => {}
    });
    out
}

/// `Σ_α a_α b_α`.
pub fn contract(a: &[Expr], b: &[Expr]) -> Expr {
    Expr::sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Horizontal derivative of a boundary density, `d_h(b) = d_A(b^A)`.
pub fn horizontal_derivative(space: &JetSpace, b: &BoundaryDensity) -> Result<Expr> {
    check_len(space.dim, b.0.len())?;
    let mut terms = Vec::with_capacity(b.0.len());
    for (a, c) in b.0.iter().enumerate() {
        terms.push(space.total_derivative(c, a as u8)?);
    }
    Ok(Expr::sum(terms))
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(VariationalError::DimensionMismatch { expected, found })
    }
}

/// `j¹(v)`.
pub fn prolong(space: &JetSpace, v: &VerticalField) -> Result<Prolonged> {
    check_len(space.field_count(), v.0.len())?;
    let mut dv = Vec::with_capacity(v.0.len());
    for c in &v.0 {
        let mut row = Vec::with_capacity(space.dim);
        for a in 0..space.dim {
            row.push(space.total_derivative(c, a as u8)?);
        }
        dv.push(row);
    }
    Ok(Prolonged { v: v.0.clone(), dv })
}

impl Density {
    pub fn new(space: JetSpace, integrand: Expr) -> Result<Self> {
        let order = integrand.jet_order();
        if order > space.max_order {
            return Err(ExprError::JetOrderOverflow {
                requested: order,
                max: space.max_order,
            }
            .into());
        }
        Ok(Density { integrand, space })
    }

    pub fn order(&self) -> usize {
        self.integrand.jet_order()
    }

    fn require_first_order(&self) -> Result<()> {
        match self.order() {
            0 | 1 => Ok(()),
            k => Err(VariationalError::NotFirstOrder(k)),
        }
    }

    /// `δ_α ℱ = Σ_𝔎 (−1)^{|𝔎|} d_𝔎 ∂ℱ/∂x^α_𝔎` over sorted multi-indices. For first-order
    /// densities this is `∂_α ℱ − d_A ∂^A_α ℱ`; higher orders follow the same alternating rule.
    pub fn variational_derivative(&self) -> Result<CovectorDensity> {
        let coords = field_coordinates(&self.integrand);
        let mut out = Vec::with_capacity(self.space.field_count());
        for name in &self.space.fields {
            let mut terms = Vec::new();
            for c in &coords {
                let Coordinate::Field { name: n, multi } = c else { continue };
                if n != name {
                    continue;
                }
                let d = self.integrand.partial(c);
                let d = self.space.total_derivative_multi(&d, multi)?;
                terms.push(if multi.order() % 2 == 1 { -d } else { d });
            }
            out.push(Expr::sum(terms));
        }
        Ok(CovectorDensity(out))
    }

    /// `δ∂𝔉`, component `[α][A] = ∂^A_α ℱ`.
    pub fn boundary_operator(&self) -> Result<BoundaryForm> {
        self.require_first_order()?;
        let rows = self
            .space
            .fields
            .iter()
            .map(|name| {
                (0..self.space.dim as u8)
                    .map(|a| {
                        self.integrand
                            .partial(&Coordinate::jet(name, MultiIndex::single(a)))
                    })
                    .collect()
            })
            .collect();
        Ok(BoundaryForm(rows))
    }

    /// `j^∞(v)(ℱ) = Σ_{α,𝔎} d_𝔎(v^α) ∂ℱ/∂x^α_𝔎`, the direct expansion of the Lie derivative.
    pub fn lie_derivative(&self, v: &VerticalField) -> Result<Expr> {
        check_len(self.space.field_count(), v.0.len())?;
        let mut terms = Vec::new();
        for c in field_coordinates(&self.integrand) {
            let Coordinate::Field { name, multi } = &c else { continue };
            let Some(alpha) = self.space.field_index(name) else { continue };
            let dv = self.space.total_derivative_multi(&v.0[alpha], multi)?;
            terms.push(dv * self.integrand.partial(&c));
        }
        Ok(Expr::sum(terms))
    }

    /// Splits `j¹(v)(ℱ)` into `v^α δ_α ℱ` and the boundary density `v^α ∂^A_α ℱ`.
    pub fn lie_decompose(&self, v: &VerticalField) -> Result<(Expr, BoundaryDensity)> {
        self.require_first_order()?;
        check_len(self.space.field_count(), v.0.len())?;
        let delta = self.variational_derivative()?;
        let domain = contract(&v.0, &delta.0);
        let bform = self.boundary_operator()?;
        let boundary = (0..self.space.dim)
            .map(|a| Expr::sum(v.0.iter().zip(&bform.0).map(|(va, row)| va * &row[a])))
            .collect();
        Ok((domain, BoundaryDensity(boundary)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, ParseContext};

    fn string() -> (ParseContext, Density) {
        let ctx = ParseContext::new(JetSpace::new(1, &["w", "p"]))
            .with_param("rho")
            .with_param("P");
        let h = parse("p^2/(2*rho) + (1/2)*P*w_X^2", &ctx).unwrap();
        (ctx.clone(), Density::new(ctx.space().clone(), h).unwrap())
    }

    #[test]
    fn string_variational_derivative() {
        let (ctx, h) = string();
        let d = h.variational_derivative().unwrap();
        assert_eq!(d.0[0], parse("-Dx(P*w_X)", &ctx).unwrap());
        assert_eq!(d.0[0], parse("-P_X*w_X - P*w_XX", &ctx).unwrap());
        assert_eq!(d.0[1], parse("p/rho", &ctx).unwrap());
    }

    #[test]
    fn string_boundary_operator() {
        let (ctx, h) = string();
        let b = h.boundary_operator().unwrap();
        assert_eq!(b.0[0][0], parse("P*w_X", &ctx).unwrap());
        assert!(b.0[1][0].is_zero());
    }

    #[test]
    fn null_lagrangian() {
        let (ctx, _) = string();
        let f = Density::new(ctx.space().clone(), parse("w_X", &ctx).unwrap()).unwrap();
        assert!(f.variational_derivative().unwrap().is_zero());
    }

    #[test]
    fn string_lie_decomposition() {
        let (ctx, h) = string();
        let v = VerticalField(vec![parse("p/rho", &ctx).unwrap(), parse("Dx(P*w_X)", &ctx).unwrap()]);
        let (domain, boundary) = h.lie_decompose(&v).unwrap();
        assert!(domain.is_zero());
        assert_eq!(boundary.0[0], parse("p/rho*P*w_X", &ctx).unwrap());
        let lhs = h.lie_derivative(&v).unwrap();
        let rhs = domain + horizontal_derivative(ctx.space(), &boundary).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn prolongation_quotient_rule() {
        let (ctx, _) = string();
        let v = VerticalField(vec![parse("p/rho", &ctx).unwrap(), Expr::int(3)]);
        let j = prolong(ctx.space(), &v).unwrap();
        assert_eq!(j.dv[0][0], parse("p_X/rho - p*rho_X/rho^2", &ctx).unwrap());
        assert!(j.dv[1][0].is_zero());
    }
}
