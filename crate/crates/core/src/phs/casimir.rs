//! Casimir and conserved-quantity conditions for order-zero `𝒥`, `ℛ`.

use super::{Face, PHSystem, RateCondition, Result, Verdict};
use crate::expr::{Expr, Name};
use crate::variational::{contract, Density};

/// The boundary condition `ẋ^α ∂^A_α 𝒞` on one face, under the declared rate conditions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaceCasimir {
    pub face: Face,
    pub value: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CasimirVerdict {
    /// `Σ_β δ_β𝒞 (𝒥 − ℛ)^{βα}` for each α: the row vector `δ𝒞 · (𝒥 − ℛ)`.
    pub domain_condition_residual: Vec<Expr>,
    pub boundary_condition: Vec<FaceCasimir>,
    /// `𝒢(u)⌋δ𝒞`.
    pub input_pairing: Expr,
    pub verdict: Verdict,
    pub is_casimir: bool,
    pub is_conserved: bool,
    pub note: Option<String>,
}

/// Symbol standing for an undetermined boundary rate, e.g. `wdot`.
pub fn free_rate_symbol(field: &Name) -> Expr {
    Expr::constant(&format!("{field}dot"))
}

impl PHSystem {
    pub fn casimir_check(&self, candidate: &Expr) -> Result<CasimirVerdict> {
        self.check_shapes()?;
        let c = Density::new(self.space.clone(), candidate.clone())?;
        let dc = c.variational_derivative()?.0;
        let bform = c.boundary_operator()?.0;
        let u = self.input_fields();
        let input_pairing = contract(&self.g.apply(&self.space, &u)?.0, &dc);

        let n = self.field_count();
        let (Some(jm), Some(rm)) = (self.j.order_zero_matrix(), self.r.order_zero_matrix()) else {
            return Ok(CasimirVerdict {
                domain_condition_residual: vec![Expr::zero(); n],
                boundary_condition: Vec::new(),
                input_pairing,
                verdict: Verdict::Indeterminate,
                is_casimir: false,
                is_conserved: false,
                note: Some("Casimir conditions are only established for order-zero J and R".into()),
            });
        };

        let residual: Vec<Expr> = (0..n)
            .map(|alpha| Expr::sum((0..n).map(|beta| &dc[beta] * (&jm[beta][alpha] - &rm[beta][alpha]))))
            .collect();

        let mut boundary = Vec::new();
        for face in self.faces() {
            let a = face.axis as usize;
            let terms = (0..n).map(|alpha| {
                let rate = match self.rate_condition(face, alpha) {
                    RateCondition::Fixed => Expr::zero(),
                    RateCondition::Prescribed(g) => g,
                    RateCondition::Free => free_rate_symbol(&self.space.fields[alpha]),
                };
                rate * &bform[alpha][a]
            });
            boundary.push(FaceCasimir {
                face,
                value: Expr::sum(terms),
            });
        }

        let is_casimir = residual.iter().all(Expr::is_zero) && boundary.iter().all(|b| b.value.is_zero());
        let is_conserved = is_casimir && input_pairing.is_zero();
        Ok(CasimirVerdict {
            domain_condition_residual: residual,
            boundary_condition: boundary,
            input_pairing,
            verdict: Verdict::from_bool(is_casimir),
            is_casimir,
            is_conserved,
            note: None,
        })
    }
}

