//! Plain-text reports and CSV writers. Verdict lines start with `PASS`, `FAIL` or
//! `INDETERMINATE` so that they can be grepped.

use crate::discrete::{PowerLedgerRow, State};
use crate::expr::{base_name, Expr, Name};
use crate::phs::{CasimirVerdict, Certificate, Face, PHSystem, PowerBalanceSymbolic, StructuralReport, Verdict};
use crate::variational::{BoundaryDensity, Density};
use std::fmt::Write as _;
use std::io::{self, Write};

pub const LEDGER_HEADER: &str = "t,H,dHdt,dissipation,domain_port,boundary_port,residual";

fn line(out: &mut String, v: Verdict, label: &str, detail: Option<String>) {
    match detail {
        Some(d) => writeln!(out, "{v} {label}: {d}"),
        None => writeln!(out, "{v} {label}"),
    }
    .unwrap();
}

pub fn verify_report(sys: &PHSystem, r: &StructuralReport) -> String {
    let mut out = String::new();
    let j_detail = if r.j.pass {
        (!r.j.remainder.is_zero()).then(|| "boundary remainder present".to_string())
    } else {
        Some(format!("residual {}", r.j.residual))
    };
    line(&mut out, Verdict::from_bool(r.j.pass), "J skew-adjoint", j_detail);
    line(
        &mut out,
        Verdict::from_bool(r.r.self_adjoint),
        "R self-adjoint",
        (!r.r.self_adjoint).then(|| format!("residual {}", r.r.residual)),
    );
    let cert = match &r.r.certificate {
        Certificate::Matrix { min_eigenvalue, samples } => {
            format!("matrix certificate, min eigenvalue {min_eigenvalue:.6e} over {samples} samples")
        }
        Certificate::Divergence { min_eigenvalue, samples, .. } => {
            format!("divergence-form certificate, min eigenvalue {min_eigenvalue:.6e} over {samples} samples")
        }
        Certificate::Unsupported(why) => why.clone(),
    };
    line(&mut out, r.r.nonnegative, "R non-negative", Some(cert));
    line(
        &mut out,
        Verdict::from_bool(r.g.pass),
        "G adjoint identity",
        (!r.g.pass).then(|| format!("residual {}", r.g.residual)),
    );
    line(&mut out, r.verdict(), &format!("model {}", sys.name), None);
    out
}

fn face_name(sys: &PHSystem, face: Face) -> String {
    let (lo, hi) = sys.domain[face.axis as usize];
    let v = if face.upper { hi } else { lo };
    format!("{}={}", base_name(face.axis), crate::dsl::number(v))
}

fn boundary_lines(out: &mut String, sys: &PHSystem, label: &str, b: &BoundaryDensity) {
    for (a, e) in b.0.iter().enumerate() {
        writeln!(out, "{label}[{}] = {e}", base_name(a as u8)).unwrap();
    }
    for face in sys.faces() {
        let e = &b.0[face.axis as usize];
        let sign = if face.upper { "+" } else { "-" };
        writeln!(out, "  at {}: {sign}({e})", face_name(sys, face)).unwrap();
    }
}

/// `δ_αℌ` and `δ^∂ℌ` line by line.
pub fn vardiff_report(sys: &PHSystem) -> crate::phs::Result<String> {
    let mut out = String::new();
    let d = Density::new(sys.space.clone(), sys.hamiltonian.clone())?;
    let delta = d.variational_derivative()?;
    for (f, e) in sys.space.fields.iter().zip(&delta.0) {
        writeln!(out, "delta_{f} = {e}").unwrap();
    }
    let b = d.boundary_operator()?;
    for (f, row) in sys.space.fields.iter().zip(&b.0) {
        for (a, e) in row.iter().enumerate() {
            writeln!(out, "boundary_{f}[{}] = {e}", base_name(a as u8)).unwrap();
        }
    }
    Ok(out)
}

pub fn balance_report(sys: &PHSystem, pb: &PowerBalanceSymbolic) -> String {
    let mut out = String::new();
    for (f, e) in sys.space.fields.iter().zip(&pb.rhs.0) {
        writeln!(out, "rate_{f} = {e}").unwrap();
    }
    for (u, y) in sys.inputs.iter().zip(&pb.output) {
        writeln!(out, "output_{u} = {y}").unwrap();
    }
    writeln!(out, "dissipation = {}", pb.dissipation).unwrap();
    writeln!(out, "domain_port = {}", pb.domain_port).unwrap();
    boundary_lines(&mut out, sys, "boundary_port", &pb.boundary_port);
    if !pb.extras_j.is_zero() {
        boundary_lines(&mut out, sys, "boundary_j", &pb.extras_j);
    }
    if !pb.extras_r.is_zero() {
        boundary_lines(&mut out, sys, "boundary_r", &pb.extras_r);
    }
    if !pb.extras_g.is_zero() {
        boundary_lines(&mut out, sys, "boundary_g", &pb.extras_g);
    }
    boundary_lines(&mut out, sys, "total_boundary", &pb.total_boundary());
    let split = if pb.dissipation_in_divergence_form {
        "R split by parts as Q = -dw.R.dw plus boundary term; G split by its adjoint identity"
    } else {
        "R used as is; G split by its adjoint identity"
    };
    writeln!(out, "split: {split}").unwrap();
    let closes = pb.closure_residual.is_zero();
    line(
        &mut out,
        Verdict::from_bool(closes),
        "power balance closes",
        (!closes).then(|| format!("residual {}", pb.closure_residual)),
    );
    out
}

fn row(v: &[Expr]) -> String {
    let items: Vec<String> = v.iter().map(Expr::to_string).collect();
    format!("({})", items.join(", "))
}

pub fn casimir_report(sys: &PHSystem, candidate: &Expr, v: &CasimirVerdict) -> String {
    let mut out = String::new();
    writeln!(out, "candidate = {candidate}").unwrap();
    writeln!(out, "domain_residual = {}", row(&v.domain_condition_residual)).unwrap();
    for b in &v.boundary_condition {
        writeln!(out, "boundary_condition at {} = {}", face_name(sys, b.face), b.value).unwrap();
    }
    writeln!(out, "input_pairing = {}", v.input_pairing).unwrap();
    if let Some(note) = &v.note {
        writeln!(out, "note: {note}").unwrap();
    }
    let label = match v.verdict {
        Verdict::Pass if v.is_conserved => "Casimir, conserved",
        Verdict::Pass => "Casimir, not conserved under the inputs",
        Verdict::Fail => "not a Casimir",
        Verdict::Indeterminate => "Casimir conditions undetermined",
    };
    line(&mut out, v.verdict, label, None);
    out
}

/// 17 significant digits; the output is identical for identical inputs.
fn num(v: f64) -> String {
    // Adding zero folds -0 into 0.
    format!("{:.16e}", v + 0.0)
}

pub fn write_ledger_csv<W: Write>(mut w: W, rows: &[PowerLedgerRow]) -> io::Result<()> {
    writeln!(w, "{LEDGER_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            num(r.t),
            num(r.h),
            num(r.dhdt),
            num(r.dissipation),
            num(r.domain_port),
            num(r.boundary_port),
            num(r.residual)
        )?;
    }
    Ok(())
}

/// Long format: one line per sampled time and node, `t,X,<fields>`.
pub fn write_trajectory_csv<W: Write>(mut w: W, fields: &[Name], nodes: &[f64], states: &[State]) -> io::Result<()> {
    let header: Vec<&str> = fields.iter().map(|f| f.as_ref()).collect();
    writeln!(w, "t,X,{}", header.join(","))?;
    for s in states {
        for (i, x) in nodes.iter().enumerate() {
            write!(w, "{},{}", num(s.t), num(*x))?;
            for a in 0..fields.len() {
                write!(w, ",{}", num(s.field(a)[i]))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
