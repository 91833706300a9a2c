//! Symbolic decomposition of `Ḣ` into dissipation, domain port and boundary port.

use super::checks::DivergenceForm;
use super::{PHSystem, Result};
use crate::expr::Expr;
use crate::variational::{contract, horizontal_derivative, BoundaryDensity, VerticalField};

/// `Ḣ = ∫(−Q + u⌋y) + ∫_∂ (ẋ⌋δ∂ℌ + 𝔧/2 − 𝔅_R + 𝔤)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowerBalanceSymbolic {
    pub rhs: VerticalField,
    pub output: Vec<Expr>,
    /// `Q ≥ 0`; enters `Ḣ` as `−∫Q`.
    pub dissipation: Expr,
    /// `u⌋y`.
    pub domain_port: Expr,
    /// `ẋ⌋δ∂ℌ`.
    pub boundary_port: BoundaryDensity,
    /// Boundary terms produced by the operators: `𝔧/2`, `−𝔅_R`, `𝔤`, and their sum.
    pub extras_j: BoundaryDensity,
    pub extras_r: BoundaryDensity,
    pub extras_g: BoundaryDensity,
    pub operator_boundary_extras: BoundaryDensity,
    /// True when `ℜ` was split with the divergence-form identity rather than used as is.
    pub dissipation_in_divergence_form: bool,
    /// `j¹(ẋ)(ℋ) − (−Q + u⌋y + d_h(boundary))`; zero when the decomposition is exact.
    pub closure_residual: Expr,
}

impl PowerBalanceSymbolic {
    /// Boundary port including the operator contributions.
    pub fn total_boundary(&self) -> BoundaryDensity {
        self.boundary_port.add(&self.operator_boundary_extras)
    }
}

impl PHSystem {
    pub fn power_balance(&self) -> Result<PowerBalanceSymbolic> {
        self.check_shapes()?;
        let dim = self.dim();
        let density = self.density()?;
        let dh = density.variational_derivative()?.0;
        let rhs = self.rhs()?;
        let u = self.input_fields();

        let (_, boundary_port) = density.lie_decompose(&rhs)?;

        let extras_j = if self.j.order() == 0 {
            BoundaryDensity::zero(dim)
        } else {
            let adj = self.j.adjoint(&self.space)?;
            let b = adj.remainder.instantiate(&dh, &dh)?;
            BoundaryDensity(b.0.iter().map(|c| c * Expr::frac(1, 2)).collect())
        };

        let (dissipation, extras_r, in_div) = if self.r.is_zero() {
            (Expr::zero(), BoundaryDensity::zero(dim), false)
        } else if self.r.order() == 0 {
            let rw = self.r.apply(&self.space, &dh)?;
            (contract(&rw.0, &dh), BoundaryDensity::zero(dim), false)
        } else if let Some(form) = DivergenceForm::recognise(&self.r) {
            let (q, br) = form.split(&self.space, &dh)?;
            (q, BoundaryDensity(br.into_iter().map(|b| -b).collect()), true)
        } else {
            // No symmetric split is known; keep `ℜ(δℌ)⌋δℌ` on the domain.
            let rw = self.r.apply(&self.space, &dh)?;
            (contract(&rw.0, &dh), BoundaryDensity::zero(dim), false)
        };

        let gadj = self.g.adjoint(&self.space)?;
        let output = gadj.adjoint.apply(&self.space, &dh)?.0;
        let domain_port = contract(&u, &output);
        let extras_g = gadj.remainder.instantiate(&u, &dh)?;

        let operator_boundary_extras = extras_j.add(&extras_r).add(&extras_g);
        let total = boundary_port.add(&operator_boundary_extras);
        let wide = crate::variational::unbounded_space(dim);
        let hdot = density.lie_derivative(&rhs)?;
        let closure_residual = hdot - (domain_port.clone() - &dissipation) - horizontal_derivative(&wide, &total)?;

        Ok(PowerBalanceSymbolic {
            rhs,
            output,
            dissipation,
            domain_port,
            boundary_port,
            extras_j,
            extras_r,
            extras_g,
            operator_boundary_extras,
            dissipation_in_divergence_form: in_div,
            closure_residual,
        })
    }
}
