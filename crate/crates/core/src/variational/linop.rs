//! Linear differential operators `𝔇(ω) = 𝔇^{αβ𝔎} d_𝔎(ω_α) ∂_β` and their adjoints.

use super::{check_len, contract, horizontal_derivative, BoundaryDensity, Result, VariationalError, VerticalField};
use crate::expr::{total_derivative_unchecked, Bindings, Coordinate, Expr, JetSpace, MultiIndex, Name, Rational};
use std::collections::BTreeMap;

/// Coefficients keyed by `(input α, output β, 𝔎)`; zero entries are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinDiffOp {
    n_in: usize,
    n_out: usize,
    dim: usize,
    terms: BTreeMap<(usize, usize, MultiIndex), Expr>,
}

/// A bilinear boundary form written in generic fields `omega_i`, `varpi_j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bilinear {
    pub omega: Vec<Name>,
    pub varpi: Vec<Name>,
    pub components: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjointResult {
    pub adjoint: LinDiffOp,
    pub remainder: Bilinear,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentityCheck {
    pub pass: bool,
    pub residual: Expr,
}

/// A jet space that never reports overflow, for internal expansions on generic fields.
pub fn unbounded(dim: usize) -> JetSpace {
    JetSpace::new(dim, &[]).with_max_order(usize::MAX / 2)
}

/// Splits `e` into `Σ coef · x^{j}_𝔎` over the jets of the named fields. Returns `None`
/// when `e` is not linear (and homogeneous) in them.
pub(crate) fn linear_coefficients(e: &Expr, names: &[Name]) -> Option<Vec<(usize, MultiIndex, Expr)>> {
    let mut out = Vec::new();
    for c in super::field_coordinates(e) {
        let Coordinate::Field { name, multi } = &c else { continue };
        let Some(j) = names.iter().position(|n| n == name) else { continue };
        let coef = e.partial(&c);
        if names.iter().any(|n| coef.depends_on_field(n)) {
            return None;
        }
        out.push((j, multi.clone(), coef));
    }
    let rebuilt = Expr::sum(
        out.iter()
            .map(|(j, m, c)| c * Expr::coord(Coordinate::jet(&names[*j], m.clone()))),
    );
    (e - rebuilt).is_zero().then_some(out)
}

impl LinDiffOp {
    pub fn new(n_in: usize, n_out: usize, dim: usize) -> Self {
        LinDiffOp {
            n_in,
            n_out,
            dim,
            terms: BTreeMap::new(),
        }
    }

    /// Order-zero operator from a matrix whose rows are outputs and columns inputs.
    pub fn from_matrix(dim: usize, rows: &[Vec<Expr>]) -> Self {
        let n_out = rows.len();
        let n_in = rows.first().map_or(0, Vec::len);
        let mut op = LinDiffOp::new(n_in, n_out, dim);
        for (beta, row) in rows.iter().enumerate() {
            for (alpha, c) in row.iter().enumerate() {
                op.add_term(alpha, beta, MultiIndex::empty(), c.clone());
            }
        }
        op
    }

    /// Builds an operator from entries written on a slot field (e.g. `-r*__XX - r_X*__X`);
    /// `entries[β][α]` maps input α to output β.
    pub fn from_slot_entries(dim: usize, slot: &str, entries: &[Vec<Expr>]) -> Result<Self> {
        let n_out = entries.len();
        let n_in = entries.first().map_or(0, Vec::len);
        let mut op = LinDiffOp::new(n_in, n_out, dim);
        let names = [Name::from(slot)];
        for (beta, row) in entries.iter().enumerate() {
            check_len(n_in, row.len())?;
            for (alpha, e) in row.iter().enumerate() {
                let parts = linear_coefficients(e, &names)
                    .ok_or_else(|| VariationalError::NotLinear(e.to_string()))?;
                for (_, k, c) in parts {
                    op.add_term(alpha, beta, k, c);
                }
            }
        }
        Ok(op)
    }

    /// Reads an operator off its action on generic input fields: `out[β]` must be linear
    /// in the jets of `inputs`.
    pub fn from_action(dim: usize, inputs: &[Name], out: &[Expr]) -> Result<Self> {
        let mut op = LinDiffOp::new(inputs.len(), out.len(), dim);
        for (beta, e) in out.iter().enumerate() {
            let parts = linear_coefficients(e, inputs)
                .ok_or_else(|| VariationalError::NotLinear(e.to_string()))?;
            for (alpha, k, c) in parts {
                op.add_term(alpha, beta, k, c);
            }
        }
        Ok(op)
    }

    pub fn add_term(&mut self, alpha: usize, beta: usize, k: MultiIndex, coef: Expr) {
        assert!(alpha < self.n_in && beta < self.n_out, "operator index out of range");
        assert!(k.indices().iter().all(|&a| (a as usize) < self.dim), "base index out of range");
        let key = (alpha, beta, k);
        let sum = match self.terms.remove(&key) {
            Some(old) => old + coef,
            None => coef,
        };
        if !sum.is_zero() {
            self.terms.insert(key, sum);
        }
    }

    pub fn with_term(mut self, alpha: usize, beta: usize, k: MultiIndex, coef: Expr) -> Self {
        self.add_term(alpha, beta, k, coef);
        self
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_square(&self) -> bool {
        self.n_in == self.n_out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest `|𝔎|` with a nonzero coefficient.
    pub fn order(&self) -> usize {
        self.terms.keys().map(|(_, _, k)| k.order()).max().unwrap_or(0)
    }

    /// Highest jet order among the coefficient expressions.
    pub fn coefficient_order(&self) -> usize {
        self.terms.values().map(Expr::jet_order).max().unwrap_or(0)
    }

    pub fn coefficient(&self, alpha: usize, beta: usize, k: &MultiIndex) -> Expr {
        self.terms
            .get(&(alpha, beta, k.clone()))
            .cloned()
            .unwrap_or_else(Expr::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, &MultiIndex, &Expr)> {
        self.terms.iter().map(|((a, b, k), c)| (*a, *b, k, c))
    }

    /// Terms of a single `(α, β)` entry.
    pub fn entry(&self, alpha: usize, beta: usize) -> Vec<(MultiIndex, Expr)> {
        self.terms()
            .filter(|(a, b, _, _)| *a == alpha && *b == beta)
            .map(|(_, _, k, c)| (k.clone(), c.clone()))
            .collect()
    }

    pub fn order_zero_matrix(&self) -> Option<Vec<Vec<Expr>>> {
        if self.order() > 0 {
            return None;
        }
        let e = MultiIndex::empty();
        Some(
            (0..self.n_out)
                .map(|b| (0..self.n_in).map(|a| self.coefficient(a, b, &e)).collect())
                .collect(),
        )
    }

    pub fn map_coefficients(&self, f: impl Fn(&Expr) -> Expr) -> Self {
        let mut out = LinDiffOp::new(self.n_in, self.n_out, self.dim);
        for (a, b, k, c) in self.terms() {
            out.add_term(a, b, k.clone(), f(c));
        }
        out
    }

    pub fn scaled(&self, q: &Rational) -> Self {
        self.map_coefficients(|c| c.scale(q))
    }

    pub fn plus(&self, other: &LinDiffOp) -> Self {
        assert_eq!((self.n_in, self.n_out), (other.n_in, other.n_out), "operator shapes differ");
        let mut out = self.clone();
        for (a, b, k, c) in other.terms() {
            out.add_term(a, b, k.clone(), c.clone());
        }
        out
    }

    pub fn minus(&self, other: &LinDiffOp) -> Self {
        self.plus(&other.scaled(&Rational::from_integer((-1).into())))
    }

    /// `𝔇(ω)_β = Σ 𝔇^{αβ𝔎} d_𝔎(ω_α)`.
    pub fn apply(&self, space: &JetSpace, omega: &[Expr]) -> Result<VerticalField> {
        check_len(self.n_in, omega.len())?;
        let mut out = vec![Vec::new(); self.n_out];
        let mut cache: BTreeMap<(usize, MultiIndex), Expr> = BTreeMap::new();
        for (a, b, k, c) in self.terms() {
            let d = match cache.get(&(a, k.clone())) {
                Some(d) => d.clone(),
                None => {
                    let d = space.total_derivative_multi(&omega[a], k)?;
                    cache.insert((a, k.clone()), d.clone());
                    d
                }
            };
            out[b].push(c * d);
        }
        Ok(VerticalField(out.into_iter().map(Expr::sum).collect()))
    }

    /// Integration by parts, moving one derivative at a time off `ω`, leftmost base
    /// index first: `P·d_A(d_𝔎' ω) = d_A(P·d_𝔎' ω) − d_A(P)·d_𝔎' ω`.
    pub fn adjoint(&self, space: &JetSpace) -> Result<AdjointResult> {
        if self.order() > space.max_order {
            return Err(crate::expr::ExprError::JetOrderOverflow {
                requested: self.order(),
                max: space.max_order,
            }
            .into());
        }
        let omega = space.fresh_names("omega", self.n_in);
        let varpi = space.fresh_names("varpi", self.n_out);
        let mut boundary = vec![Vec::new(); self.dim];
        let mut adj_out = vec![Vec::new(); self.n_in];
        for (a, b, k, c) in self.terms() {
            let mut p = c * Expr::coord(Coordinate::field(&varpi[b]));
            let mut rest = k.clone();
            while let Some((first, tail)) = rest.split_first() {
                let w = Expr::coord(Coordinate::jet(&omega[a], tail.clone()));
                boundary[first as usize].push(&p * w);
                p = -total_derivative_unchecked(&p, first);
                rest = tail;
            }
            adj_out[a].push(p);
        }
        let adj_out: Vec<Expr> = adj_out.into_iter().map(Expr::sum).collect();
        let adjoint = LinDiffOp::from_action(self.dim, &varpi, &adj_out)?;
        Ok(AdjointResult {
            adjoint,
            remainder: Bilinear {
                omega,
                varpi,
                components: boundary.into_iter().map(Expr::sum).collect(),
            },
        })
    }

    /// Checks `𝔇(ω)⌋ϖ = 𝔇*(ϖ)⌋ω + d_h(𝔡)` on generic fields for a claimed adjoint pair.
    pub fn check_adjoint(&self, claimed: &AdjointResult) -> Result<IdentityCheck> {
        let rem = &claimed.remainder;
        check_len(self.n_in, rem.omega.len())?;
        check_len(self.n_out, rem.varpi.len())?;
        check_len(self.n_out, claimed.adjoint.n_in)?;
        check_len(self.n_in, claimed.adjoint.n_out)?;
        let space = unbounded(self.dim);
        let omega: Vec<Expr> = rem.omega.iter().map(|n| Expr::coord(Coordinate::field(n))).collect();
        let varpi: Vec<Expr> = rem.varpi.iter().map(|n| Expr::coord(Coordinate::field(n))).collect();
        let lhs = contract(&self.apply(&space, &omega)?.0, &varpi);
        let adj = claimed.adjoint.apply(&space, &varpi)?;
        let dh = horizontal_derivative(&space, &BoundaryDensity(rem.components.clone()))?;
        let residual = lhs - contract(&adj.0, &omega) - dh;
        Ok(IdentityCheck {
            pass: residual.is_zero(),
            residual,
        })
    }

    /// Computes the adjoint and verifies the adjoint identity for it.
    pub fn adjoint_identity_check(&self, space: &JetSpace) -> Result<IdentityCheck> {
        let adj = self.adjoint(space)?;
        self.check_adjoint(&adj)
    }
}

impl Bilinear {
    /// Evaluates the form on concrete arguments.
    pub fn instantiate(&self, omega: &[Expr], varpi: &[Expr]) -> Result<BoundaryDensity> {
        check_len(self.omega.len(), omega.len())?;
        check_len(self.varpi.len(), varpi.len())?;
        let mut b = Bindings::new();
        for (n, v) in self.omega.iter().zip(omega) {
            b = b.bind_field(n, v.clone());
        }
        for (n, v) in self.varpi.iter().zip(varpi) {
            b = b.bind_field(n, v.clone());
        }
        let space = unbounded(self.components.len());
        let mut out = Vec::with_capacity(self.components.len());
        for c in &self.components {
            out.push(space.substitute(c, &b)?);
        }
        Ok(BoundaryDensity(out))
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Expr::is_zero)
    }
}
