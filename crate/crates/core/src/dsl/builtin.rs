//! The built-in example models.

use super::ModelError;
use crate::expr::{Coordinate, Expr, FunctionSymbol, JetSpace, MultiIndex, Name};
use crate::phs::{BoundaryCondition, Face, FunctionSpec, PHSystem, ParamRange, ParamSpec, RateCondition};
use crate::variational::LinDiffOp;
use std::sync::Arc;

pub const BUILTIN_NAMES: [&str; 4] = ["string", "string_damped", "mhd", "casimir3"];

/// Instantiation options for the built-ins.
#[derive(Clone, Copy, Debug)]
pub struct BuiltinOptions {
    /// Base dimension of the MHD model (2 or 3).
    pub mhd_dim: usize,
}

impl Default for BuiltinOptions {
    fn default() -> Self {
        BuiltinOptions { mhd_dim: 3 }
    }
}

pub fn builtin(name: &str, opts: BuiltinOptions) -> Result<PHSystem, ModelError> {
    match name {
        "string" => Ok(string(false)),
        "string_damped" => Ok(string(true)),
        "casimir3" => Ok(casimir3()),
        "mhd" => mhd(opts.mhd_dim),
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

fn param(name: &str, value: f64, range: ParamRange) -> ParamSpec {
    ParamSpec {
        name: Name::from(name),
        value: Some(value),
        range,
    }
}

fn clamped(field: usize) -> Vec<BoundaryCondition> {
    [false, true]
        .into_iter()
        .map(|upper| BoundaryCondition {
            face: Face { axis: 0, upper },
            field,
            rate: RateCondition::Fixed,
        })
        .collect()
}

fn string_hamiltonian() -> Expr {
    let p = Expr::field("p");
    let wx = Expr::jet("w", MultiIndex::single(0));
    let rho = Expr::param("rho", 1);
    let pp = Expr::param("P", 1);
    &p * &p / (Expr::int(2) * rho) + Expr::frac(1, 2) * pp * &wx * &wx
}

fn canonical_j(n: usize, pairs: &[(usize, usize)]) -> LinDiffOp {
    let mut op = LinDiffOp::new(n, n, 1);
    for &(a, b) in pairs {
        op.add_term(b, a, MultiIndex::empty(), Expr::one());
        op.add_term(a, b, MultiIndex::empty(), Expr::int(-1));
    }
    op
}

/// `−d_X(r d_X(·))` acting on `field` of an `n`-field model.
pub fn string_damping(n: usize, field: usize) -> LinDiffOp {
    let r = Expr::param("r", 1);
    let rx = r.partial(&Coordinate::Independent(0));
    LinDiffOp::new(n, n, 1)
        .with_term(field, field, MultiIndex::new([0, 0]), -r)
        .with_term(field, field, MultiIndex::single(0), -rx)
}

fn string(damped: bool) -> PHSystem {
    let space = JetSpace::new(1, &["w", "p"]).with_max_order(4);
    let mut sys = PHSystem::new(if damped { "string_damped" } else { "string" }, space, string_hamiltonian());
    sys.params = vec![
        param("rho", 1.0, ParamRange::positive()),
        param("P", 1.0, ParamRange::positive()),
    ];
    // J maps (δ_w, δ_p) to (δ_p, −δ_w).
    sys.j = canonical_j(2, &[(0, 1)]);
    if damped {
        sys.params.push(param("r", 0.1, ParamRange::nonnegative()));
        sys.r = string_damping(2, 1);
    }
    sys.boundary = clamped(0);
    sys.initial = vec![(Expr::pi() * Expr::independent(0)).sin(), Expr::zero()];
    sys
}

fn casimir3() -> PHSystem {
    let space = JetSpace::new(1, &["w", "p", "c"]).with_max_order(4);
    let c = Expr::field("c");
    let h = string_hamiltonian() + Expr::frac(1, 2) * &c * &c;
    let mut sys = PHSystem::new("casimir3", space, h);
    sys.params = vec![
        param("rho", 1.0, ParamRange::positive()),
        param("P", 1.0, ParamRange::positive()),
    ];
    sys.j = canonical_j(3, &[(0, 1)]);
    sys.boundary = clamped(0);
    let x = Expr::independent(0);
    sys.initial = vec![(Expr::pi() * &x).sin(), Expr::zero(), Expr::one() + Expr::frac(1, 2) * &x * &x];
    sys
}

fn mhd_names(d: usize) -> (Vec<String>, Vec<String>) {
    ((1..=d).map(|i| format!("q{i}")).collect(), (1..=d).map(|i| format!("p{i}")).collect())
}

fn q_jet(alpha: usize, a: u8) -> Coordinate {
    Coordinate::jet(&Name::from(format!("q{}", alpha + 1)), MultiIndex::single(a))
}

/// Deformation gradient `F^α_A = q^α_A`, indexed `[α][A]`.
pub fn mhd_deformation_gradient(d: usize) -> Vec<Vec<Expr>> {
    (0..d)
        .map(|al| (0..d as u8).map(|a| Expr::coord(q_jet(al, a))).collect())
        .collect()
}

fn minor(m: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| r.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, e)| e.clone()).collect())
        .collect()
}

/// Determinant by Laplace expansion along the first row.
pub fn determinant(m: &[Vec<Expr>]) -> Expr {
    match m.len() {
        0 => Expr::one(),
        1 => m[0][0].clone(),
        _ => Expr::sum((0..m.len()).map(|j| {
            let sign = if j % 2 == 0 { Expr::one() } else { Expr::int(-1) };
            sign * &m[0][j] * determinant(&minor(m, 0, j))
        })),
    }
}

/// `F̂^B_α` with `F^α_A F̂^B_α = δ^B_A`, indexed `[B][α]`: the adjugate over the determinant.
pub fn mhd_inverse_gradient(d: usize) -> Vec<Vec<Expr>> {
    let f = mhd_deformation_gradient(d);
    let inv_det = determinant(&f).recip();
    (0..d)
        .map(|b| {
            (0..d)
                .map(|al| {
                    let sign = if (al + b) % 2 == 0 { Expr::one() } else { Expr::int(-1) };
                    sign * determinant(&minor(&f, al, b)) * &inv_det
                })
                .collect()
        })
        .collect()
}

fn q_args(d: usize) -> Vec<Coordinate> {
    (1..=d).map(|i| Coordinate::field(&Name::from(format!("q{i}")))).collect()
}

fn est_args(d: usize) -> Vec<Coordinate> {
    (0..d).flat_map(|al| (0..d as u8).map(move |a| q_jet(al, a))).collect()
}

/// The potential `A_α(q)`, `alpha` from 0.
pub fn mhd_vector_potential(d: usize, alpha: usize) -> Expr {
    Expr::func_sym(FunctionSymbol::new(&Name::from(format!("A{}", alpha + 1)), Arc::from(q_args(d))))
}

/// `S^α = (μ/ρ) δ^{αβ}(p_β − μ A_β)`.
pub fn mhd_convective_current(d: usize) -> Vec<Expr> {
    let mu = Expr::param("mu", d);
    let rho = Expr::param("rho", d);
    (0..d)
        .map(|al| {
            &mu / &rho * (Expr::field(&format!("p{}", al + 1)) - &mu * mhd_vector_potential(d, al))
        })
        .collect()
}

/// `E_{0α} = ∂_α A_0` for the potential `A_0(q)`; exposed for inspection only.
pub fn mhd_electric_field(d: usize) -> Vec<Expr> {
    let a0 = Expr::func_sym(FunctionSymbol::new(&Name::from("A0"), Arc::from(q_args(d))));
    q_args(d).iter().map(|q| a0.partial(q)).collect()
}

/// `B_{αβ} = ∂_α A_β − ∂_β A_α`; exposed for inspection only.
pub fn mhd_magnetic_flux(d: usize) -> Vec<Vec<Expr>> {
    let q = q_args(d);
    (0..d)
        .map(|al| {
            (0..d)
                .map(|be| mhd_vector_potential(d, be).partial(&q[al]) - mhd_vector_potential(d, al).partial(&q[be]))
                .collect()
        })
        .collect()
}

fn mhd(d: usize) -> Result<PHSystem, ModelError> {
    if !(2..=3).contains(&d) {
        return Err(ModelError::Invalid(format!("the MHD model supports dimension 2 or 3, not {d}")));
    }
    let (qs, ps) = mhd_names(d);
    let fields: Vec<&str> = qs.iter().chain(&ps).map(String::as_str).collect();
    let space = JetSpace::new(d, &fields).with_max_order(3);
    let rho = Expr::param("rho", d);
    let mu = Expr::param("mu", d);
    let est = Expr::func_sym(FunctionSymbol::new(&Name::from("Est"), Arc::from(est_args(d))));
    let kinetic = Expr::sum((0..d).map(|al| {
        let m = Expr::field(&ps[al]) - &mu * mhd_vector_potential(d, al);
        &m * &m
    }));
    let h = kinetic / (Expr::int(2) * &rho) + &rho * est;

    let mut sys = PHSystem::new("mhd", space, h);
    sys.domain = vec![(0.0, 1.0); d];
    sys.inputs = vec![Name::from("A0")];
    sys.params = vec![
        param("rho", 1.0, ParamRange::positive()),
        param("mu", 1.0, ParamRange::REAL),
    ];
    sys.functions = (0..d)
        .map(|al| FunctionSpec {
            name: Name::from(format!("A{}", al + 1)),
            args: q_args(d),
        })
        .chain(std::iter::once(FunctionSpec {
            name: Name::from("Est"),
            args: est_args(d),
        }))
        .collect();
    let mut j = LinDiffOp::new(2 * d, 2 * d, d);
    for al in 0..d {
        j.add_term(d + al, al, MultiIndex::empty(), Expr::one());
        j.add_term(al, d + al, MultiIndex::empty(), Expr::int(-1));
    }
    sys.j = j;
    sys.r = LinDiffOp::new(2 * d, 2 * d, d);
    let fhat = mhd_inverse_gradient(d);
    let mut g = LinDiffOp::new(1, 2 * d, d);
    for (b, row) in fhat.iter().enumerate() {
        for (al, f) in row.iter().enumerate() {
            g.add_term(0, d + al, MultiIndex::single(b as u8), &mu * f);
        }
    }
    sys.g = g;
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn inverse_gradient_inverts() {
        use crate::expr::{Point, Symbol};
        for d in [2, 3] {
            let f = mhd_deformation_gradient(d);
            let fhat = mhd_inverse_gradient(d);
            let mut pt = Point::new();
            for al in 0..d {
                for a in 0..d as u8 {
                    let v = ((7 * al + 3 * a as usize) % 5) as f64 * 0.3 + if al == a as usize { 1.5 } else { 0.0 };
                    pt.set(Symbol::Coord(q_jet(al, a)), v);
                }
            }
            for a in 0..d {
                for (b, row) in fhat.iter().enumerate() {
                    let s = Expr::sum((0..d).map(|al| &f[al][a] * &row[al])).eval(&pt).unwrap();
                    assert!((s - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12, "{s}");
                }
            }
        }
    }

    #[test]
    fn magnetic_flux_is_antisymmetric() {
        let b = mhd_magnetic_flux(3);
        assert!(b[0][0].is_zero());
        assert_eq!(b[0][1], -b[1][0].clone());
        assert_eq!(mhd_electric_field(2).len(), 2);
    }
}
