//! Skew-adjointness of 𝔍, self-adjointness and non-negativity of ℜ.

use super::sample::{halton, ParamRange};
use super::{PHSystem, PhsError, Result, Verdict};
use crate::expr::{total_derivative_unchecked, Coordinate, Expr, JetSpace, MultiIndex, Name, Point, Symbol};
use crate::variational::{contract, Bilinear, IdentityCheck, LinDiffOp};
use nalgebra::DMatrix;
use std::collections::BTreeMap;

/// Number of quasi-random points used by numeric non-negativity certificates.
pub const SAMPLE_COUNT: u64 = 16;
const PSD_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkewCheck {
    pub pass: bool,
    /// `(𝔇* + 𝔇)(ϖ)⌋ω`, which equals `𝔇(ω)⌋ϖ + 𝔇(ϖ)⌋ω − d_h(𝔡)`.
    pub residual: Expr,
    /// `𝔧`, the remainder of the adjoint identity.
    pub remainder: Bilinear,
}

/// `ℜ(ω) = d_A(ℜ^{αβAB} d_B(ω_β)) ∂_α`, keyed `(α, β, A, B)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DivergenceForm {
    pub n: usize,
    pub dim: usize,
    pub coeffs: BTreeMap<(usize, usize, u8, u8), Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Certificate {
    /// Order-zero symmetric matrix, PSD at every sample.
    Matrix { min_eigenvalue: f64, samples: u64 },
    /// `−ℜ^{αβAB}` as a quadratic form in `d_B(ω_β)`, PSD at every sample.
    Divergence {
        form: DivergenceForm,
        min_eigenvalue: f64,
        samples: u64,
    },
    /// No certificate applies; the reason is reported.
    Unsupported(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfAdjointCheck {
    pub self_adjoint: bool,
    /// `(𝔇* − 𝔇)(ϖ)⌋ω`.
    pub residual: Expr,
    /// `𝔯`.
    pub remainder: Bilinear,
    pub nonnegative: Verdict,
    pub certificate: Certificate,
}

impl SelfAdjointCheck {
    pub fn verdict(&self) -> Verdict {
        Verdict::from_bool(self.self_adjoint).and(self.nonnegative)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuralReport {
    pub j: SkewCheck,
    pub r: SelfAdjointCheck,
    /// The adjoint identity of 𝔊, which defines the output and the boundary term 𝔤.
    pub g: IdentityCheck,
}

impl StructuralReport {
    pub fn verdict(&self) -> Verdict {
        Verdict::from_bool(self.j.pass)
            .and(self.r.verdict())
            .and(Verdict::from_bool(self.g.pass))
    }
}

fn generic(names: &[Name]) -> Vec<Expr> {
    names.iter().map(|n| Expr::coord(Coordinate::field(n))).collect()
}

fn require_square(op: &LinDiffOp) -> Result<()> {
    if op.is_square() {
        Ok(())
    } else {
        Err(PhsError::Shape(format!(
            "operator maps {} to {} components; a square operator is required",
            op.n_in(),
            op.n_out()
        )))
    }
}

/// Passes iff `𝔇* = −𝔇`; then `𝔇(ω)⌋ϖ + 𝔇(ϖ)⌋ω = d_h(𝔧)`.
pub fn check_skew(space: &JetSpace, op: &LinDiffOp) -> Result<SkewCheck> {
    require_square(op)?;
    let adj = op.adjoint(space)?;
    let sum = adj.adjoint.plus(op);
    let wide = crate::variational::unbounded_space(op.dim());
    let residual = contract(
        &sum.apply(&wide, &generic(&adj.remainder.varpi))?.0,
        &generic(&adj.remainder.omega),
    );
    Ok(SkewCheck {
        pass: sum.is_zero(),
        residual,
        remainder: adj.remainder,
    })
}

/// Variable assignment rules for sampled certificates.
#[derive(Clone, Debug, Default)]
pub struct SampleSpace {
    pub ranges: BTreeMap<Name, ParamRange>,
    pub domain: Vec<(f64, f64)>,
}

impl SampleSpace {
    pub fn of(sys: &PHSystem) -> Self {
        SampleSpace {
            ranges: sys.params.iter().map(|p| (p.name.clone(), p.range)).collect(),
            domain: sys.domain.clone(),
        }
    }

    /// Point number `index` (from 1) for the given symbols: declared parameters within
    /// their ranges, base coordinates within the domain, everything else in `[−1, 1]`.
    pub fn point(&self, index: u64, symbols: &[Symbol]) -> Point {
        let mut pt = Point::new();
        for (k, s) in symbols.iter().enumerate() {
            let u = halton(index, k);
            let v = match s {
                Symbol::Func(f) if f.partials.is_empty() && &*f.name == "pi" && f.args.is_empty() => continue,
                Symbol::Func(f) if f.partials.is_empty() && f.is_parameter() => {
                    self.ranges.get(&f.name).copied().unwrap_or(ParamRange::REAL).map(u)
                }
                Symbol::Coord(Coordinate::Independent(a)) => {
                    let (lo, hi) = self.domain.get(*a as usize).copied().unwrap_or((0.0, 1.0));
                    lo + u * (hi - lo)
                }
                _ => 2.0 * u - 1.0,
            };
            pt.set(s.clone(), v);
        }
        pt
    }
}

/// Smallest eigenvalue over the sample points, or an error description.
fn sampled_min_eigenvalue(matrix: &[Vec<Expr>], samples: &SampleSpace) -> std::result::Result<f64, String> {
    let n = matrix.len();
    let mut syms = std::collections::BTreeSet::new();
    for row in matrix {
        for e in row {
            syms.extend(e.symbols());
        }
    }
    let syms: Vec<Symbol> = syms.into_iter().collect();
    let mut min = f64::INFINITY;
    for i in 1..=SAMPLE_COUNT {
        let pt = samples.point(i, &syms);
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (r, row) in matrix.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                m[(r, c)] = e.eval(&pt).map_err(|e| e.to_string())?;
            }
        }
        let sym = (&m + m.transpose()) * 0.5;
        let scale = sym.amax().max(1.0);
        let eig = sym.symmetric_eigenvalues().min() / scale;
        min = min.min(eig);
    }
    Ok(min)
}

impl DivergenceForm {
    /// Recognises `d_A(ℜ^{αβAB} d_B(·))` with `ℜ^{αβAB} = ℜ^{βαBA}`. Mixed second-order
    /// coefficients are split evenly between `AB` and `BA`.
    pub fn recognise(op: &LinDiffOp) -> Option<DivergenceForm> {
        if !op.is_square() || op.order() > 2 {
            return None;
        }
        let n = op.n_in();
        let dim = op.dim();
        let mut coeffs = BTreeMap::new();
        for (beta, alpha, k, c) in op.terms() {
            if let [a, b] = k.indices() {
                let (a, b) = (*a, *b);
                if a == b {
                    coeffs.insert((alpha, beta, a, a), c.clone());
                } else {
                    let half = c * Expr::frac(1, 2);
                    coeffs.insert((alpha, beta, a, b), half.clone());
                    coeffs.insert((alpha, beta, b, a), half);
                }
            }
        }
        let form = DivergenceForm { n, dim, coeffs };
        for alpha in 0..n {
            for beta in 0..n {
                if !op.coefficient(beta, alpha, &MultiIndex::empty()).is_zero() {
                    return None;
                }
                for b in 0..dim as u8 {
                    let expected = Expr::sum(
                        (0..dim as u8).map(|a| total_derivative_unchecked(&form.get(alpha, beta, a, b), a)),
                    );
                    if op.coefficient(beta, alpha, &MultiIndex::single(b)) != expected {
                        return None;
                    }
                }
            }
        }
        for (&(alpha, beta, a, b), c) in &form.coeffs {
            if form.get(beta, alpha, b, a) != *c {
                return None;
            }
        }
        Some(form)
    }

    pub fn get(&self, alpha: usize, beta: usize, a: u8, b: u8) -> Expr {
        self.coeffs
            .get(&(alpha, beta, a, b))
            .cloned()
            .unwrap_or_else(Expr::zero)
    }

    /// `−ℜ^{αβAB}` over the row index `(α, A)` and column index `(β, B)`.
    pub fn quadratic_form(&self) -> Vec<Vec<Expr>> {
        let idx: Vec<(usize, u8)> = (0..self.n)
            .flat_map(|al| (0..self.dim as u8).map(move |a| (al, a)))
            .collect();
        idx.iter()
            .map(|&(al, a)| idx.iter().map(|&(be, b)| -self.get(al, be, a, b)).collect())
            .collect()
    }

    /// `(Q, 𝔅_R)` with `ℜ(ω)⌋ω = −Q + d_h(𝔅_R)`, `Q = −d_A(ω_α)ℜ^{αβAB}d_B(ω_β)` and
    /// `𝔅_R^A = ω_α ℜ^{αβAB} d_B(ω_β)`.
    pub fn split(&self, space: &JetSpace, omega: &[Expr]) -> Result<(Expr, Vec<Expr>)> {
        let mut d = Vec::with_capacity(self.n);
        for w in omega {
            let mut row = Vec::with_capacity(self.dim);
            for a in 0..self.dim as u8 {
                row.push(space.total_derivative(w, a)?);
            }
            d.push(row);
        }
        let mut q = Vec::new();
        let mut b = vec![Vec::new(); self.dim];
        for (&(al, be, a, bb), c) in &self.coeffs {
            q.push(-(&d[al][a as usize] * c * &d[be][bb as usize]));
            b[a as usize].push(&omega[al] * c * &d[be][bb as usize]);
        }
        Ok((Expr::sum(q), b.into_iter().map(Expr::sum).collect()))
    }
}

/// Passes iff `𝔇* = 𝔇`, plus a non-negativity certificate where one applies.
pub fn check_self_adjoint_nonneg(space: &JetSpace, op: &LinDiffOp, samples: &SampleSpace) -> Result<SelfAdjointCheck> {
    require_square(op)?;
    let adj = op.adjoint(space)?;
    let diff = adj.adjoint.minus(op);
    let wide = crate::variational::unbounded_space(op.dim());
    let residual = contract(
        &diff.apply(&wide, &generic(&adj.remainder.varpi))?.0,
        &generic(&adj.remainder.omega),
    );
    let self_adjoint = diff.is_zero();

    let (nonnegative, certificate) = if let Some(m) = op.order_zero_matrix() {
        match sampled_min_eigenvalue(&m, samples) {
            Ok(min) => (
                Verdict::from_bool(min >= -PSD_TOLERANCE),
                Certificate::Matrix {
                    min_eigenvalue: min,
                    samples: SAMPLE_COUNT,
                },
            ),
            Err(e) => (Verdict::Indeterminate, Certificate::Unsupported(e)),
        }
    } else if let Some(form) = DivergenceForm::recognise(op) {
        match sampled_min_eigenvalue(&form.quadratic_form(), samples) {
            Ok(min) => (
                Verdict::from_bool(min >= -PSD_TOLERANCE),
                Certificate::Divergence {
                    form,
                    min_eigenvalue: min,
                    samples: SAMPLE_COUNT,
                },
            ),
            Err(e) => (Verdict::Indeterminate, Certificate::Unsupported(e)),
        }
    } else {
        (
            Verdict::Indeterminate,
            Certificate::Unsupported("operator is neither order zero nor of the form d_A(R d_B(.))".into()),
        )
    };
    Ok(SelfAdjointCheck {
        self_adjoint,
        residual,
        remainder: adj.remainder,
        nonnegative,
        certificate,
    })
}

impl PHSystem {
    pub fn verify(&self) -> Result<StructuralReport> {
        self.check_shapes()?;
        Ok(StructuralReport {
            j: check_skew(&self.space, &self.j)?,
            r: check_self_adjoint_nonneg(&self.space, &self.r, &SampleSpace::of(self))?,
            g: self.g.adjoint_identity_check(&self.space)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, ParseContext};

    fn mat(rows: &[&[i64]]) -> LinDiffOp {
        LinDiffOp::from_matrix(
            1,
            &rows.iter().map(|r| r.iter().map(|&v| Expr::int(v)).collect()).collect::<Vec<_>>(),
        )
    }

    fn space() -> JetSpace {
        JetSpace::new(1, &["w", "p"]).with_max_order(4)
    }

    #[test]
    fn canonical_symplectic_matrix_is_skew() {
        let c = check_skew(&space(), &mat(&[&[0, 1], &[-1, 0]])).unwrap();
        assert!(c.pass);
        assert!(c.remainder.is_zero());
    }

    #[test]
    fn symmetric_matrix_is_not_skew() {
        let c = check_skew(&space(), &mat(&[&[0, 1], &[1, 0]])).unwrap();
        assert!(!c.pass);
        assert_eq!(c.residual.to_string(), "2*omega1*varpi2 + 2*omega2*varpi1");
        assert!(!check_skew(&space(), &mat(&[&[1, 0], &[0, 1]])).unwrap().pass);
    }

    #[test]
    fn indefinite_symmetric_matrix_fails_nonnegativity() {
        let c = check_self_adjoint_nonneg(&space(), &mat(&[&[0, 1], &[1, 0]]), &SampleSpace::default()).unwrap();
        assert!(c.self_adjoint);
        assert_eq!(c.nonnegative, Verdict::Fail);
        match c.certificate {
            Certificate::Matrix { min_eigenvalue, .. } => assert!((min_eigenvalue + 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nonnegative_diagonal_passes() {
        let ctx = ParseContext::new(space()).with_param("c");
        let c = parse("c", &ctx).unwrap();
        let op = LinDiffOp::from_matrix(1, &[vec![Expr::zero(), Expr::zero()], vec![Expr::zero(), c]]);
        let mut samples = SampleSpace::default();
        samples.ranges.insert("c".into(), ParamRange::nonnegative());
        let check = check_self_adjoint_nonneg(&space(), &op, &samples).unwrap();
        assert_eq!(check.verdict(), Verdict::Pass);
    }

    #[test]
    fn damping_operator_has_divergence_certificate() {
        let ctx = ParseContext::new(space()).with_param("r").with_slot();
        let e = parse("-Dx(r*Dx(.))", &ctx).unwrap();
        let z = Expr::zero();
        let op = LinDiffOp::from_slot_entries(1, "_", &[vec![z.clone(), z.clone()], vec![z, e]]).unwrap();
        let mut samples = SampleSpace::default();
        samples.ranges.insert("r".into(), ParamRange::nonnegative());
        let check = check_self_adjoint_nonneg(&space(), &op, &samples).unwrap();
        assert!(check.self_adjoint);
        assert_eq!(check.verdict(), Verdict::Pass);
        let Certificate::Divergence { form, .. } = &check.certificate else { panic!() };
        assert_eq!(form.get(1, 1, 0, 0), -parse("r", &ctx).unwrap());
        // With r allowed to be negative the certificate fails.
        let neg = check_self_adjoint_nonneg(&space(), &op, &SampleSpace::default()).unwrap();
        assert_eq!(neg.nonnegative, Verdict::Fail);
    }

    #[test]
    fn first_order_operator_is_indeterminate() {
        let op = LinDiffOp::new(1, 1, 1).with_term(0, 0, MultiIndex::single(0), Expr::one());
        let c = check_self_adjoint_nonneg(&space(), &op, &SampleSpace::default()).unwrap();
        assert!(!c.self_adjoint);
        assert_eq!(c.nonnegative, Verdict::Indeterminate);
    }
}
