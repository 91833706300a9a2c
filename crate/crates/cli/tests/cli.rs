use std::path::Path;
use std::process::{Command, Output};

fn phs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phs")).args(args).output().expect("run phs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn emit_to(dir: &Path, name: &str) -> String {
    let path = dir.join(format!("{name}.phs"));
    assert!(phs(&["builtin", name, "--emit", path.to_str().unwrap()]).status.success());
    path.to_str().unwrap().to_string()
}

#[test]
fn vardiff_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = phs(&["vardiff", &emit_to(dir.path(), "string")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out),
        "delta_w = -P*w_XX - P_X*w_X\ndelta_p = p/rho\nboundary_w[X] = P*w_X\nboundary_p[X] = 0\n"
    );
}

#[test]
fn balance_of_the_string() {
    let out = phs(&["balance", "string"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0));
    assert!(text.contains("dissipation = 0\n"));
    assert!(text.contains("domain_port = 0\n"));
    assert!(text.contains("boundary_port[X] = P*p*w_X/rho\n  at X=0: -(P*p*w_X/rho)\n  at X=1: +(P*p*w_X/rho)\n"));
    assert!(text.lines().last().unwrap().starts_with("PASS"));
}

#[test]
fn casimir_verdicts_set_the_exit_code() {
    let out = phs(&["casimir", "string", "--candidate", "w"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("domain_residual = (0, 1)\n"));
    assert!(text.contains("FAIL not a Casimir"));

    let out = phs(&["casimir", "casimir3", "--candidate", "c"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("PASS Casimir, conserved"));

    let out = phs(&["casimir", "string_damped", "--candidate", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("INDETERMINATE"));

    let out = phs(&["casimir", "string", "--candidate", "w_XX"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("first-order"));
}

#[test]
fn parse_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.phs");
    std::fs::write(&path, "model bad\ndim 1\nindependent X in [0, 1]\nfields w p\nhamiltonian p^2/(2*rho)\n").unwrap();
    let out = phs(&["verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 5"), "{}", stderr(&out));
    assert!(stderr(&out).contains("rho"));
    assert!(out.stdout.is_empty());

    assert_eq!(phs(&["verify"]).status.code(), Some(2));
    assert_eq!(phs(&["builtin", "pendulum"]).status.code(), Some(2));
}

#[test]
fn failed_checks_report_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sym.phs");
    let text = std::fs::read_to_string(emit_to(dir.path(), "string")).unwrap().replace("[-1, 0]", "[1, 0]");
    std::fs::write(&path, text).unwrap();
    let out = phs(&["verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL J skew-adjoint: residual 2*omega1*varpi2"), "{}", stdout(&out));
    // Commands other than verify refuse structurally unsound models.
    let out = phs(&["balance", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("structural check failed"));
}

#[test]
fn every_builtin_verifies() {
    for name in ["string", "string_damped", "mhd", "casimir3"] {
        let out = phs(&["verify", name]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stdout(&out));
    }
    assert_eq!(phs(&["builtin", "mhd", "--dim", "2"]).status.code(), Some(0));
    assert_eq!(phs(&["builtin", "mhd", "--dim", "4"]).status.code(), Some(2));
}

#[test]
fn zero_initial_data_gives_zero_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rest.phs");
    let text = std::fs::read_to_string(emit_to(dir.path(), "string")).unwrap().replace("sin(pi*X)", "0");
    std::fs::write(&path, text).unwrap();
    let run = dir.path().join("run.csv");
    let ledger = dir.path().join("ledger.csv");
    let out = phs(&[
        "simulate", path.to_str().unwrap(), "--nx", "11", "--dt", "0.01", "--tend", "0.05",
        "--out", run.to_str().unwrap(), "--ledger", ledger.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let traj = std::fs::read_to_string(&run).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("t,X,w,p"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6 * 11);
    assert!(rows.iter().all(|r| r.split(',').skip(2).all(|v| v.parse::<f64>().unwrap() == 0.0)));
    let ledger = std::fs::read_to_string(&ledger).unwrap();
    for row in ledger.lines().skip(1) {
        assert!(row.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0), "{row}");
    }
}

fn ledger_rows(model: &str, tend: &str) -> Vec<Vec<f64>> {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run.csv");
    let ledger = dir.path().join("ledger.csv");
    let out = phs(&[
        "simulate", model, "--nx", "31", "--dt", "1e-3", "--tend", tend,
        "--out", run.to_str().unwrap(), "--ledger", ledger.to_str().unwrap(), "--stride", "5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(&ledger).unwrap();
    assert!(text.starts_with("t,H,dHdt,dissipation,domain_port,boundary_port,residual\n"));
    assert!(text.ends_with('\n'));
    text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn ledger_columns() {
    assert!(ledger_rows("string", "0").is_empty());
    let one = ledger_rows("string", "1e-3");
    assert_eq!(one.len(), 1);
    assert!(one[0][6].abs() <= 1e-9);
    let damped = ledger_rows("string_damped", "0.05");
    assert_eq!(damped.len(), 50);
    assert!(damped.iter().all(|r| r[3] >= 0.0 && r[6].abs() <= 1e-9));
}

#[test]
fn multidimensional_simulation_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = phs(&["simulate", "mhd", "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not numerically supported"));
}

#[test]
fn stokes_check_reports_the_defect() {
    let out = phs(&["stokes-check", "--nx", "64", "--samples", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("defect = "));
    assert!(text.contains("PASS discrete Stokes identity"));
    assert_eq!(phs(&["stokes-check", "--nx", "2"]).status.code(), Some(2));
}
