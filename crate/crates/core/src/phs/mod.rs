//! Port-Hamiltonian systems `ẋ = (𝔍 − ℜ)(δℌ) + 𝔊(u)`, `y = 𝔊*(δℌ)`.

mod balance;
mod casimir;
mod checks;
mod sample;

pub use balance::PowerBalanceSymbolic;
pub use casimir::{CasimirVerdict, FaceCasimir};
pub use casimir::free_rate_symbol;
pub use checks::{check_self_adjoint_nonneg, check_skew, Certificate, DivergenceForm, SampleSpace, SelfAdjointCheck, SkewCheck, StructuralReport, SAMPLE_COUNT};
pub use sample::{halton, ParamRange};

use crate::expr::{Coordinate, Expr, JetSpace, Name};
use crate::variational::{CovectorDensity, Density, LinDiffOp, VariationalError, VerticalField};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PhsError {
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl From<crate::expr::ExprError> for PhsError {
    fn from(e: crate::expr::ExprError) -> Self {
        PhsError::Variational(e.into())
    }
}

pub type Result<T> = std::result::Result<T, PhsError>;

/// Outcome of a check that may be undecidable for the given operator class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Indeterminate, _) | (_, Verdict::Indeterminate) => Verdict::Indeterminate,
            _ => Verdict::Pass,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Indeterminate => "INDETERMINATE",
        })
    }
}

/// One side of the domain along a base direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Face {
    pub axis: u8,
    pub upper: bool,
}

impl Face {
    /// Outward orientation: `+1` on the upper face, `−1` on the lower one.
    pub fn sign(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }
}

/// What is imposed on `ẋ^α` at a boundary face.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RateCondition {
    Fixed,
    Free,
    /// A function of the time symbol `t`.
    Prescribed(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryCondition {
    pub face: Face,
    pub field: usize,
    pub rate: RateCondition,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: Name,
    pub value: Option<f64>,
    pub range: ParamRange,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionSpec {
    pub name: Name,
    pub args: Vec<Coordinate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PHSystem {
    pub name: String,
    pub space: JetSpace,
    /// Interval per base direction.
    pub domain: Vec<(f64, f64)>,
    pub inputs: Vec<Name>,
    pub params: Vec<ParamSpec>,
    pub functions: Vec<FunctionSpec>,
    pub hamiltonian: Expr,
    pub j: LinDiffOp,
    pub r: LinDiffOp,
    pub g: LinDiffOp,
    pub boundary: Vec<BoundaryCondition>,
    /// Initial profile per field as a function of the base coordinates.
    pub initial: Vec<Expr>,
}

impl PHSystem {
    /// A system with zero operators and the given Hamiltonian density.
    pub fn new(name: &str, space: JetSpace, hamiltonian: Expr) -> Self {
        let n = space.field_count();
        let dim = space.dim;
        PHSystem {
            name: name.to_string(),
            domain: vec![(0.0, 1.0); dim],
            inputs: Vec::new(),
            params: Vec::new(),
            functions: Vec::new(),
            hamiltonian,
            j: LinDiffOp::new(n, n, dim),
            r: LinDiffOp::new(n, n, dim),
            g: LinDiffOp::new(0, n, dim),
            boundary: Vec::new(),
            initial: vec![Expr::zero(); n],
            space,
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn field_count(&self) -> usize {
        self.space.field_count()
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| &*p.name == name)
    }

    pub fn density(&self) -> Result<Density> {
        Ok(Density::new(self.space.clone(), self.hamiltonian.clone())?)
    }

    pub fn variational_derivative(&self) -> Result<CovectorDensity> {
        Ok(self.density()?.variational_derivative()?)
    }

    /// Inputs as symbolic fields, so that `d_A(u^i)` is the jet `u_A`.
    pub fn input_fields(&self) -> Vec<Expr> {
        self.inputs.iter().map(|n| Expr::coord(Coordinate::field(n))).collect()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let n = self.field_count();
        let shape = |op: &LinDiffOp, i: usize, o: usize, what: &str| {
            if op.n_in() != i || op.n_out() != o || op.dim() != self.dim() {
                Err(PhsError::Shape(format!(
                    "{what} maps {} to {} components in dimension {}, expected {i} to {o} in dimension {}",
                    op.n_in(),
                    op.n_out(),
                    op.dim(),
                    self.dim()
                )))
            } else {
                Ok(())
            }
        };
        shape(&self.j, n, n, "J")?;
        shape(&self.r, n, n, "R")?;
        shape(&self.g, self.inputs.len(), n, "G")?;
        if self.domain.len() != self.dim() || self.initial.len() != n {
            return Err(PhsError::Shape("domain or initial data does not match the model".into()));
        }
        Ok(())
    }

    /// `ẋ = (𝔍 − ℜ)(δℌ) + 𝔊(u)`.
    pub fn assemble_rhs(&self, u: &[Expr]) -> Result<VerticalField> {
        self.check_shapes()?;
        let dh = self.variational_derivative()?;
        let jr = self.j.minus(&self.r);
        let mut x = jr.apply(&self.space, &dh.0)?;
        let gu = self.g.apply(&self.space, u)?;
        for (a, b) in x.0.iter_mut().zip(gu.0) {
            *a = &*a + b;
        }
        Ok(x)
    }

    /// Right-hand side with the inputs left symbolic.
    pub fn rhs(&self) -> Result<VerticalField> {
        self.assemble_rhs(&self.input_fields())
    }

    /// `y = 𝔊*(δℌ)`, one density-valued output per input.
    pub fn output(&self) -> Result<Vec<Expr>> {
        self.check_shapes()?;
        let dh = self.variational_derivative()?;
        let adj = self.g.adjoint(&self.space)?;
        Ok(adj.adjoint.apply(&self.space, &dh.0)?.0)
    }

    pub fn conditions_on(&self, face: Face) -> impl Iterator<Item = &BoundaryCondition> {
        self.boundary.iter().filter(move |b| b.face == face)
    }

    pub fn rate_condition(&self, face: Face, field: usize) -> RateCondition {
        self.conditions_on(face)
            .find(|b| b.field == field)
            .map(|b| b.rate.clone())
            .unwrap_or(RateCondition::Free)
    }

    pub fn faces(&self) -> Vec<Face> {
        (0..self.dim() as u8)
            .flat_map(|axis| [Face { axis, upper: false }, Face { axis, upper: true }])
            .collect()
    }

    /// Numeric value of every parameter that has one, for the simulator.
    pub fn param_values(&self) -> Vec<(Name, f64)> {
        self.params
            .iter()
            .filter_map(|p| p.value.map(|v| (p.name.clone(), v)))
            .collect()
    }
}
