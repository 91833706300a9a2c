//! Method of lines for 1-D models with an exact discrete power balance.
//!
//! The discrete energy `H_d = Σ_i W_i ℋ(X_i, x_i, (Dx)_i)` has the exact gradient
//! `∇H_d = W a + DᵀWσ` with `a = ∂_α ℋ` and `σ = ∂^X_α ℋ` at the nodes. Summation by
//! parts (`WD + DᵀW = B = diag(−1, 0, …, 0, 1)`) rewrites it as `W δˢ + Bσ`, where
//! `δˢ = a − Dσ` mirrors `δ_α ℋ` and `Bσ` mirrors `δ^∂ℌ` at the two end nodes. The
//! dynamics use `δˢ`; the ledger then closes through the same identity that gives the
//! symbolic power balance.

mod grid;

pub use grid::{discrete_stokes_check, Closure, Grid1D, StokesDefect};

use crate::expr::{Bindings, Compiled, Coordinate, Expr, ExprError, MultiIndex, Name, Symbol};
use crate::phs::{DivergenceForm, Face, PHSystem, PhsError, RateCondition};
use nalgebra::DMatrix;
use std::sync::Mutex;
use thiserror::Error;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("grid: {0}")]
    Grid(String),
    #[error("not numerically supported: {0}")]
    Unsupported(String),
    #[error("parameter `{0}` has no numeric value")]
    MissingValue(String),
    #[error("state has {found} entries, expected {expected}")]
    StateShape { expected: usize, found: usize },
    #[error("cannot enforce the rate condition on `{field}` at X={at}: no state at that node controls it")]
    Uncontrollable { field: String, at: f64 },
    #[error("Newton iteration did not converge at t = {t} after {iterations} iterations (update norm {update_norm:.3e}, residual {residual:.3e})")]
    Newton {
        t: f64,
        iterations: usize,
        update_norm: f64,
        residual: f64,
    },
    #[error("non-finite state at t = {t}; run aborted")]
    NonFinite { t: f64, last_row: Option<Box<PowerLedgerRow>> },
    #[error(transparent)]
    Model(#[from] PhsError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Nodal values of every field, field-major: `x[α·N + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub x: Vec<f64>,
    pub nodes: usize,
}

impl State {
    pub fn zeros(fields: usize, nodes: usize) -> Self {
        State {
            t: 0.0,
            x: vec![0.0; fields * nodes],
            nodes,
        }
    }

    pub fn field(&self, alpha: usize) -> &[f64] {
        &self.x[alpha * self.nodes..(alpha + 1) * self.nodes]
    }

    pub fn field_mut(&mut self, alpha: usize) -> &mut [f64] {
        &mut self.x[alpha * self.nodes..(alpha + 1) * self.nodes]
    }

    pub fn fields(&self) -> usize {
        self.x.len() / self.nodes
    }
}

/// One step of the energy ledger, evaluated at the midpoint stage.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLedgerRow {
    /// Time at the end of the step.
    pub t: f64,
    /// `H_d` at the end of the step.
    pub h: f64,
    /// `(H_d(x⁺) − H_d(x)) / dt`.
    pub dhdt: f64,
    /// Quadrature of the non-negative dissipation integrand.
    pub dissipation: f64,
    /// Quadrature of `u⌋y`.
    pub domain_port: f64,
    /// End-node evaluation of the boundary density `ẋ⌋δ^∂ℌ − 𝔅_R + 𝔤`.
    pub boundary_port: f64,
    /// `dhdt − (−dissipation + domain_port + boundary_port)`.
    pub residual: f64,
    /// `Σ W_k δˢ_k (ẋ_k − f_k)` over rows replaced by rate conditions. It vanishes for fixed
    /// ends; at a prescribed-rate end it is the power taken by the end half-cell, and the
    /// residual equals it up to the time-discretisation error.
    pub constraint_power: f64,
}

/// A first-order density integrated with the grid quadrature.
#[derive(Clone, Debug)]
pub struct DiscreteDensity {
    grid: Grid1D,
    n: usize,
    params: Vec<f64>,
    value: Compiled,
    a: Vec<Compiled>,
    sigma: Vec<Compiled>,
}

/// Time-dependent rate at a constrained end.
#[derive(Clone, Debug)]
enum Rate {
    Fixed,
    Prescribed(Compiled),
}

#[derive(Clone, Debug)]
struct Constraint {
    field: usize,
    node: usize,
    /// Row replaced by the constraint.
    slave: usize,
    rate: Rate,
}

/// Coefficient of an operator term, `(input, output, values at the nodes)`.
#[derive(Clone, Debug)]
struct Term {
    input: usize,
    output: usize,
    coef: Compiled,
}

type Lu = nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

#[derive(Clone, Debug, Default)]
struct Hessian {
    // `[α][β]` partials of `a_α` and `σ_α` with respect to `x_β` and `x_β,X`.
    a_x: Vec<Vec<Option<Compiled>>>,
    a_xx: Vec<Vec<Option<Compiled>>>,
    s_x: Vec<Vec<Option<Compiled>>>,
    s_xx: Vec<Vec<Option<Compiled>>>,
}

/// Simulation form of a 1-D port-Hamiltonian system on a grid.
#[derive(Debug)]
pub struct DiscreteSystem {
    grid: Grid1D,
    n: usize,
    n_in: usize,
    field_names: Vec<Name>,
    hamiltonian: DiscreteDensity,
    hessian: Hessian,
    j0: Vec<Term>,
    r0: Vec<Term>,
    /// `(output α, input β, ℜ^{αβXX})`.
    rdiv: Vec<Term>,
    g0: Vec<Term>,
    g1: Vec<Term>,
    constraints: Vec<Constraint>,
    /// Operator coefficients free of the state: the Jacobian is assembled analytically.
    analytic_jacobian: bool,
    /// Quadratic Hamiltonian as well: the Newton matrix is constant for a given `dt`.
    constant_jacobian: bool,
    initial: Vec<Compiled>,
    lu_cache: Mutex<Option<(f64, Lu)>>,
}

fn slots(sys: &PHSystem) -> Vec<Symbol> {
    let mut s = vec![Symbol::Coord(Coordinate::Independent(0))];
    for f in &sys.space.fields {
        s.push(Symbol::field(f));
    }
    for f in &sys.space.fields {
        s.push(Symbol::jet(f, MultiIndex::single(0)));
    }
    s.extend(param_symbols(sys));
    s
}

fn param_symbols(sys: &PHSystem) -> Vec<Symbol> {
    sys.params
        .iter()
        .filter(|p| p.value.is_some())
        .map(|p| Expr::param(&p.name, 1).as_symbol().cloned().expect("parameter is a symbol"))
        .collect()
}

fn param_values(sys: &PHSystem) -> Vec<f64> {
    sys.params.iter().filter_map(|p| p.value).collect()
}

/// Parameters are constants in a simulation, so their partials vanish. Every other function
/// symbol has no numeric definition.
fn numeric(sys: &PHSystem, e: &Expr) -> Result<Expr> {
    let mut err = None;
    let out = e.map_symbols(&mut |s| {
        if let Symbol::Func(f) = s {
            if f.args.is_empty() {
                return Expr::sym(s.clone());
            }
            match sys.param(&f.name) {
                Some(p) if f.is_parameter() => {
                    if !f.partials.is_empty() {
                        return Expr::zero();
                    }
                    if p.value.is_none() {
                        err.get_or_insert(SimError::MissingValue(f.name.to_string()));
                    }
                }
                _ => {
                    err.get_or_insert(SimError::Unsupported(format!("function `{}` has no numeric definition", f.name)));
                }
            }
        }
        Expr::sym(s.clone())
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn compile(sys: &PHSystem, e: &Expr, slots: &[Symbol]) -> Result<Compiled> {
    let e = numeric(sys, e)?;
    if e.jet_order() > 1 {
        return Err(SimError::Unsupported(format!("`{e}` is beyond first order")));
    }
    e.compile(slots).map_err(|err| match err {
        ExprError::MissingBinding(s) => SimError::Unsupported(format!("symbol `{s}` has no numeric value")),
        other => other.into(),
    })
}

fn require_1d(sys: &PHSystem) -> Result<()> {
    if sys.dim() != 1 {
        return Err(SimError::Unsupported(format!(
            "model `{}` has dimension {}; only 1-D models can be simulated",
            sys.name,
            sys.dim()
        )));
    }
    Ok(())
}

/// Node-local slot values `[X, x, x_X, params]`.
struct Locals<'a> {
    grid: &'a Grid1D,
    n: usize,
    x: &'a [f64],
    dx: Vec<f64>,
    params: &'a [f64],
    buf: Vec<f64>,
}

impl<'a> Locals<'a> {
    fn new(grid: &'a Grid1D, n: usize, x: &'a [f64], params: &'a [f64]) -> Self {
        let nodes = grid.len();
        let mut dx = vec![0.0; x.len()];
        for a in 0..n {
            grid.diff_into(&x[a * nodes..(a + 1) * nodes], &mut dx[a * nodes..(a + 1) * nodes]);
        }
        Locals {
            grid,
            n,
            x,
            dx,
            params,
            buf: vec![0.0; 1 + 2 * n + params.len()],
        }
    }

    fn at(&mut self, i: usize) -> &[f64] {
        let nodes = self.grid.len();
        self.buf[0] = self.grid.node(i);
        for a in 0..self.n {
            self.buf[1 + a] = self.x[a * nodes + i];
            self.buf[1 + self.n + a] = self.dx[a * nodes + i];
        }
        self.buf[1 + 2 * self.n..].copy_from_slice(self.params);
        &self.buf
    }

    fn nodal(&mut self, c: &Compiled) -> Vec<f64> {
        if let Some(v) = c.constant_value() {
            return vec![v; self.grid.len()];
        }
        (0..self.grid.len()).map(|i| c.eval(self.at(i))).collect()
    }
}

impl DiscreteDensity {
    pub fn new(sys: &PHSystem, grid: &Grid1D, density: &Expr) -> Result<Self> {
        require_1d(sys)?;
        let slots = slots(sys);
        let mut a = Vec::new();
        let mut sigma = Vec::new();
        for f in &sys.space.fields {
            a.push(compile(sys, &density.partial(&Coordinate::field(f)), &slots)?);
            sigma.push(compile(sys, &density.partial(&Coordinate::jet(f, MultiIndex::single(0))), &slots)?);
        }
        Ok(DiscreteDensity {
            grid: grid.clone(),
            n: sys.field_count(),
            params: param_values(sys),
            value: compile(sys, density, &slots)?,
            a,
            sigma,
        })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        let expected = self.n * self.grid.len();
        if x.len() != expected {
            return Err(SimError::StateShape { expected, found: x.len() });
        }
        Ok(())
    }

    /// `Σ_i W_i 𝒞(X_i, x_i, (Dx)_i)`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mut l = Locals::new(&self.grid, self.n, x, &self.params);
        Ok(self.grid.integrate(&l.nodal(&self.value)))
    }

    /// `(a, σ)` at every node, field-major.
    fn partials(&self, l: &mut Locals) -> (Vec<f64>, Vec<f64>) {
        let mut a = Vec::with_capacity(self.n * self.grid.len());
        let mut s = Vec::with_capacity(self.n * self.grid.len());
        for k in 0..self.n {
            a.extend(l.nodal(&self.a[k]));
            s.extend(l.nodal(&self.sigma[k]));
        }
        (a, s)
    }

    /// The exact gradient `W a + DᵀWσ` of the discrete sum.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let nodes = self.grid.len();
        let mut l = Locals::new(&self.grid, self.n, x, &self.params);
        let (a, s) = self.partials(&mut l);
        let w = self.grid.weights();
        let mut g = vec![0.0; a.len()];
        for k in 0..self.n {
            let ws: Vec<f64> = (0..nodes).map(|i| w[i] * s[k * nodes + i]).collect();
            let dt = self.grid.diff_transpose(&ws);
            for i in 0..nodes {
                g[k * nodes + i] = w[i] * a[k * nodes + i] + dt[i];
            }
        }
        Ok(g)
    }

    /// `δˢ = a − Dσ` and `σ` at every node.
    pub fn strong_derivative(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(x)?;
        let mut l = Locals::new(&self.grid, self.n, x, &self.params);
        Ok(self.strong_from(&mut l))
    }

    fn strong_from(&self, l: &mut Locals) -> (Vec<f64>, Vec<f64>) {
        let nodes = self.grid.len();
        let (mut a, s) = self.partials(l);
        for k in 0..self.n {
            let ds = self.grid.diff(&s[k * nodes..(k + 1) * nodes]);
            for i in 0..nodes {
                a[k * nodes + i] -= ds[i];
            }
        }
        (a, s)
    }
}

/// `H_d` and its exact gradient.
pub fn discretize_hamiltonian(sys: &PHSystem, grid: &Grid1D) -> Result<DiscreteDensity> {
    DiscreteDensity::new(sys, grid, &sys.hamiltonian)
}

/// Values computed at one stage of a step.
struct Stage {
    delta: Vec<f64>,
    sigma: Vec<f64>,
    ddelta: Vec<f64>,
    f: Vec<f64>,
    coefs: Coefs,
    u: Vec<f64>,
}

#[derive(Default)]
struct Coefs {
    j0: Vec<Vec<f64>>,
    r0: Vec<Vec<f64>>,
    rdiv: Vec<Vec<f64>>,
    g0: Vec<Vec<f64>>,
    g1: Vec<Vec<f64>>,
}

/// Input signal: one nodal vector per input, as a function of time.
pub type Input<'a> = &'a dyn Fn(f64) -> Vec<Vec<f64>>;

/// The zero input.
pub fn no_input(_t: f64) -> Vec<Vec<f64>> {
    Vec::new()
}

fn terms(sys: &PHSystem, op: &crate::variational::LinDiffOp, k: &MultiIndex, slots: &[Symbol]) -> Result<Vec<Term>> {
    op.terms()
        .filter(|(_, _, kk, _)| *kk == k)
        .map(|(input, output, _, c)| {
            Ok(Term {
                input,
                output,
                coef: compile(sys, c, slots)?,
            })
        })
        .collect()
}

fn depends_on_state(sys: &PHSystem, e: &Expr) -> bool {
    sys.space.fields.iter().any(|f| e.depends_on_field(f))
}

impl DiscreteSystem {
    pub fn new(sys: &PHSystem, grid: Grid1D) -> Result<Self> {
        require_1d(sys)?;
        sys.check_shapes()?;
        let (lo, hi) = sys.domain[0];
        let (glo, ghi) = grid.interval();
        if (lo - glo).abs() > 1e-12 || (hi - ghi).abs() > 1e-12 {
            return Err(SimError::Grid(format!("grid [{glo}, {ghi}] does not cover the model domain [{lo}, {hi}]")));
        }
        let n = sys.field_count();
        let slots = slots(sys);
        let hamiltonian = discretize_hamiltonian(sys, &grid)?;

        let mut state_dependent = false;
        if sys.j.order() > 0 {
            return Err(SimError::Unsupported("J must be an order-zero matrix".into()));
        }
        let empty = MultiIndex::empty();
        let j0 = terms(sys, &sys.j, &empty, &slots)?;
        let (r0, rdiv) = if sys.r.is_zero() || sys.r.order() == 0 {
            (terms(sys, &sys.r, &empty, &slots)?, Vec::new())
        } else {
            let form = DivergenceForm::recognise(&sys.r)
                .ok_or_else(|| SimError::Unsupported("R must be order zero or of the form d_X(c d_X(.))".into()))?;
            let mut rdiv = Vec::new();
            for (&(alpha, beta, _, _), c) in &form.coeffs {
                state_dependent |= depends_on_state(sys, c);
                rdiv.push(Term {
                    input: beta,
                    output: alpha,
                    coef: compile(sys, c, &slots)?,
                });
            }
            (Vec::new(), rdiv)
        };
        if sys.g.order() > 1 {
            return Err(SimError::Unsupported("G must be at most first order".into()));
        }
        let g0 = terms(sys, &sys.g, &empty, &slots)?;
        let g1 = terms(sys, &sys.g, &MultiIndex::single(0), &slots)?;
        for op in [&sys.j, &sys.r, &sys.g] {
            state_dependent |= op.terms().any(|(_, _, _, c)| depends_on_state(sys, c));
        }

        let mut hessian = Hessian::default();
        let mut quadratic = true;
        let coords = |f: &Name| [Coordinate::field(f), Coordinate::jet(f, MultiIndex::single(0))];
        for fa in &sys.space.fields {
            let [xa, xax] = coords(fa);
            let a = sys.hamiltonian.partial(&xa);
            let s = sys.hamiltonian.partial(&xax);
            let mut rows = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
            for fb in &sys.space.fields {
                let [xb, xbx] = coords(fb);
                for (slot, e) in [a.partial(&xb), a.partial(&xbx), s.partial(&xb), s.partial(&xbx)].into_iter().enumerate() {
                    quadratic &= !depends_on_state(sys, &e);
                    rows[slot].push(if e.is_zero() { None } else { Some(compile(sys, &e, &slots)?) });
                }
            }
            let [r1, r2, r3, r4] = rows;
            hessian.a_x.push(r1);
            hessian.a_xx.push(r2);
            hessian.s_x.push(r3);
            hessian.s_xx.push(r4);
        }

        let mut time_slots = vec![Symbol::Func(crate::expr::FunctionSymbol::constant("t"))];
        time_slots.extend(param_symbols(sys));
        let mut initial = Vec::new();
        let mut x_slots = vec![Symbol::Coord(Coordinate::Independent(0))];
        x_slots.extend(param_symbols(sys));
        for e in &sys.initial {
            initial.push(compile(sys, e, &x_slots)?);
        }

        let mut ds = DiscreteSystem {
            n_in: sys.inputs.len(),
            field_names: sys.space.fields.clone(),
            grid,
            n,
            hamiltonian,
            hessian,
            j0,
            r0,
            rdiv,
            g0,
            g1,
            constraints: Vec::new(),
            analytic_jacobian: !state_dependent,
            constant_jacobian: !state_dependent && quadratic,
            initial,
            lu_cache: Mutex::new(None),
        };

        // Each rate condition replaces the row of the state at the same node that controls
        // that rate most strongly.
        let x0 = ds.initial_state()?;
        let jac = ds.jacobian(&x0.x, 0.0, &no_input)?;
        let nodes = ds.grid.len();
        for face in [Face { axis: 0, upper: false }, Face { axis: 0, upper: true }] {
            let node = if face.upper { nodes - 1 } else { 0 };
            for alpha in 0..n {
                let rate = match sys.rate_condition(face, alpha) {
                    RateCondition::Free => continue,
                    RateCondition::Fixed => Rate::Fixed,
                    RateCondition::Prescribed(g) => Rate::Prescribed(compile(sys, &g, &time_slots)?),
                };
                let row = alpha * nodes + node;
                let taken: Vec<usize> = ds.constraints.iter().map(|c| c.slave).collect();
                let best = (0..n)
                    .map(|k| k * nodes + node)
                    .filter(|c| *c != row && !taken.contains(c))
                    .map(|c| (c, jac[(row, c)].abs()))
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                match best {
                    Some((slave, v)) if v > 1e-12 => ds.constraints.push(Constraint {
                        field: alpha,
                        node,
                        slave,
                        rate,
                    }),
                    _ => {
                        return Err(SimError::Uncontrollable {
                            field: sys.space.fields[alpha].to_string(),
                            at: ds.grid.node(node),
                        })
                    }
                }
            }
        }
        Ok(ds)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn field_names(&self) -> &[Name] {
        &self.field_names
    }

    pub fn hamiltonian(&self) -> &DiscreteDensity {
        &self.hamiltonian
    }

    /// True when Newton uses the analytic Jacobian rather than finite differences.
    pub fn has_analytic_jacobian(&self) -> bool {
        self.analytic_jacobian
    }

    pub fn initial_state(&self) -> Result<State> {
        let nodes = self.grid.len();
        let params = &self.hamiltonian.params;
        let mut st = State::zeros(self.n, nodes);
        let mut buf = vec![0.0; 1 + params.len()];
        buf[1..].copy_from_slice(params);
        for (a, c) in self.initial.iter().enumerate() {
            for i in 0..nodes {
                buf[0] = self.grid.node(i);
                st.x[a * nodes + i] = c.eval(&buf);
            }
        }
        Ok(st)
    }

    fn check_input(&self, u: &[Vec<f64>]) -> Result<Vec<f64>> {
        let nodes = self.grid.len();
        if u.is_empty() {
            return Ok(vec![0.0; self.n_in * nodes]);
        }
        if u.len() != self.n_in || u.iter().any(|v| v.len() != nodes) {
            return Err(SimError::StateShape {
                expected: self.n_in * nodes,
                found: u.iter().map(Vec::len).sum(),
            });
        }
        Ok(u.concat())
    }

    fn coefs(&self, l: &mut Locals) -> Coefs {
        let nodal = |ts: &[Term], l: &mut Locals| ts.iter().map(|t| l.nodal(&t.coef)).collect();
        Coefs {
            j0: nodal(&self.j0, l),
            r0: nodal(&self.r0, l),
            rdiv: nodal(&self.rdiv, l),
            g0: nodal(&self.g0, l),
            g1: nodal(&self.g1, l),
        }
    }

    /// `(J − R)δ` with `R δ = R₀δ + ⋯ − ⋯`, the state part of the right-hand side.
    fn apply_ops(&self, c: &Coefs, delta: &[f64], ddelta: &[f64]) -> Vec<f64> {
        let nodes = self.grid.len();
        let mut f = vec![0.0; self.n * nodes];
        for (t, v) in self.j0.iter().zip(&c.j0) {
            for i in 0..nodes {
                f[t.output * nodes + i] += v[i] * delta[t.input * nodes + i];
            }
        }
        for (t, v) in self.r0.iter().zip(&c.r0) {
            for i in 0..nodes {
                f[t.output * nodes + i] -= v[i] * delta[t.input * nodes + i];
            }
        }
        for (t, v) in self.rdiv.iter().zip(&c.rdiv) {
            let flux: Vec<f64> = (0..nodes).map(|i| v[i] * ddelta[t.input * nodes + i]).collect();
            let d = self.grid.diff(&flux);
            for i in 0..nodes {
                f[t.output * nodes + i] -= d[i];
            }
        }
        f
    }

    fn diff_fields(&self, v: &[f64], count: usize) -> Vec<f64> {
        let nodes = self.grid.len();
        let mut out = vec![0.0; v.len()];
        for a in 0..count {
            self.grid.diff_into(&v[a * nodes..(a + 1) * nodes], &mut out[a * nodes..(a + 1) * nodes]);
        }
        out
    }

    fn stage(&self, x: &[f64], u: Vec<f64>) -> Stage {
        let nodes = self.grid.len();
        let mut l = Locals::new(&self.grid, self.n, x, &self.hamiltonian.params);
        let (delta, sigma) = self.hamiltonian.strong_from(&mut l);
        let coefs = self.coefs(&mut l);
        let ddelta = self.diff_fields(&delta, self.n);
        let mut f = self.apply_ops(&coefs, &delta, &ddelta);
        let du = self.diff_fields(&u, self.n_in);
        for (t, v) in self.g0.iter().zip(&coefs.g0) {
            for i in 0..nodes {
                f[t.output * nodes + i] += v[i] * u[t.input * nodes + i];
            }
        }
        for (t, v) in self.g1.iter().zip(&coefs.g1) {
            for i in 0..nodes {
                f[t.output * nodes + i] += v[i] * du[t.input * nodes + i];
            }
        }
        Stage {
            delta,
            sigma,
            ddelta,
            f,
            coefs,
            u,
        }
    }

    /// `ẋ = (J − R)(δˢH_d) + G(u)` without boundary conditions.
    pub fn rhs(&self, x: &[f64], t: f64, u: Input) -> Result<Vec<f64>> {
        self.hamiltonian.check(x)?;
        Ok(self.stage(x, self.check_input(&u(t))?).f)
    }

    /// Output `y = G₀ᵀδ − D(G₁ᵀδ)` per input, nodal.
    pub fn output(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.hamiltonian.check(x)?;
        let st = self.stage(x, vec![0.0; self.n_in * self.grid.len()]);
        Ok(self.output_of(&st))
    }

    fn output_of(&self, st: &Stage) -> Vec<Vec<f64>> {
        let nodes = self.grid.len();
        let mut y = vec![vec![0.0; nodes]; self.n_in];
        for (t, v) in self.g0.iter().zip(&st.coefs.g0) {
            for i in 0..nodes {
                y[t.input][i] += v[i] * st.delta[t.output * nodes + i];
            }
        }
        let mut flux = vec![vec![0.0; nodes]; self.n_in];
        for (t, v) in self.g1.iter().zip(&st.coefs.g1) {
            for i in 0..nodes {
                flux[t.input][i] += v[i] * st.delta[t.output * nodes + i];
            }
        }
        for (yi, fi) in y.iter_mut().zip(&flux) {
            for (a, b) in yi.iter_mut().zip(self.grid.diff(fi)) {
                *a -= b;
            }
        }
        y
    }

    /// `∂f/∂x`, analytic when the operator coefficients do not depend on the state.
    fn jacobian(&self, x: &[f64], t: f64, u: Input) -> Result<DMatrix<f64>> {
        let size = self.n * self.grid.len();
        if !self.analytic_jacobian {
            let uv = self.check_input(&u(t))?;
            let mut jac = DMatrix::zeros(size, size);
            let mut xp = x.to_vec();
            for c in 0..size {
                let eps = 1e-7 * x[c].abs().max(1.0);
                xp[c] = x[c] + eps;
                let fp = self.stage(&xp, uv.clone()).f;
                xp[c] = x[c] - eps;
                let fm = self.stage(&xp, uv.clone()).f;
                xp[c] = x[c];
                for r in 0..size {
                    jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * eps);
                }
            }
            return Ok(jac);
        }
        let nodes = self.grid.len();
        let d = self.grid.matrix();
        let mut l = Locals::new(&self.grid, self.n, x, &self.hamiltonian.params);
        let coefs = self.coefs(&mut l);
        // ∂δˢ/∂x block by block: diag(a_x) + diag(a_xx) D − D diag(s_x) − D diag(s_xx) D.
        let mut jd = DMatrix::<f64>::zeros(size, size);
        let h = &self.hessian;
        for alpha in 0..self.n {
            for beta in 0..self.n {
                let mut block = DMatrix::<f64>::zeros(nodes, nodes);
                let mut any = false;
                if let Some(c) = &h.a_x[alpha][beta] {
                    let v = l.nodal(c);
                    for i in 0..nodes {
                        block[(i, i)] += v[i];
                    }
                    any = true;
                }
                if let Some(c) = &h.a_xx[alpha][beta] {
                    let v = l.nodal(c);
                    block += DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v)) * &d;
                    any = true;
                }
                if let Some(c) = &h.s_x[alpha][beta] {
                    let v = l.nodal(c);
                    block -= &d * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v));
                    any = true;
                }
                if let Some(c) = &h.s_xx[alpha][beta] {
                    let v = l.nodal(c);
                    block -= &d * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v)) * &d;
                    any = true;
                }
                if any {
                    jd.view_mut((alpha * nodes, beta * nodes), (nodes, nodes)).copy_from(&block);
                }
            }
        }
        let mut jac = DMatrix::zeros(size, size);
        for c in 0..size {
            let col: Vec<f64> = jd.column(c).iter().copied().collect();
            if col.iter().all(|v| *v == 0.0) {
                continue;
            }
            let dcol = self.diff_fields(&col, self.n);
            let fc = self.apply_ops(&coefs, &col, &dcol);
            for r in 0..size {
                jac[(r, c)] = fc[r];
            }
        }
        Ok(jac)
    }

    fn rate_value(&self, c: &Constraint, t: f64) -> f64 {
        match &c.rate {
            Rate::Fixed => 0.0,
            Rate::Prescribed(g) => {
                let mut buf = vec![t];
                buf.extend_from_slice(&self.hamiltonian.params);
                g.eval(&buf)
            }
        }
    }

    fn newton_matrix(&self, jac: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
        let size = jac.nrows();
        let mut m = -jac * (dt / 2.0);
        for k in 0..size {
            m[(k, k)] += 1.0;
        }
        let nodes = self.grid.len();
        for c in &self.constraints {
            let row = c.field * nodes + c.node;
            for k in 0..size {
                m[(c.slave, k)] = 0.5 * jac[(row, k)];
            }
        }
        m
    }

    /// One implicit-midpoint step with the rate conditions imposed on the midpoint stage.
    pub fn step(&self, state: &State, dt: f64, u: Input) -> Result<(State, PowerLedgerRow)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::Grid(format!("time step must be positive, got {dt}")));
        }
        self.hamiltonian.check(&state.x)?;
        let nodes = self.grid.len();
        let x = &state.x;
        let tm = state.t + dt / 2.0;
        let um = self.check_input(&u(tm))?;
        let mid = |z: &[f64]| -> Vec<f64> { x.iter().zip(z).map(|(a, b)| 0.5 * (a + b)).collect() };
        let residual = |z: &[f64]| -> (Vec<f64>, Stage) {
            let st = self.stage(&mid(z), um.clone());
            let mut r: Vec<f64> = (0..z.len()).map(|k| z[k] - x[k] - dt * st.f[k]).collect();
            for c in &self.constraints {
                r[c.slave] = st.f[c.field * nodes + c.node] - self.rate_value(c, tm);
            }
            (r, st)
        };

        let mut z = x.clone();
        let mut iterations = 0;
        let mut update_norm = f64::INFINITY;
        loop {
            let (r, _) = residual(&z);
            let delta = if self.constant_jacobian {
                let mut cache = self.lu_cache.lock().expect("cache lock");
                if cache.as_ref().map(|(h, _)| *h) != Some(dt) {
                    let jac = self.jacobian(x, tm, u)?;
                    *cache = Some((dt, self.newton_matrix(&jac, dt).lu()));
                }
                cache.as_ref().unwrap().1.solve(&nalgebra::DVector::from_vec(r.clone()))
            } else {
                let jac = self.jacobian(&mid(&z), tm, u)?;
                self.newton_matrix(&jac, dt).lu().solve(&nalgebra::DVector::from_vec(r.clone()))
            };
            iterations += 1;
            let Some(delta) = delta else {
                return Err(SimError::Newton {
                    t: state.t,
                    iterations,
                    update_norm,
                    residual: r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                });
            };
            for (zk, dk) in z.iter_mut().zip(delta.iter()) {
                *zk -= dk;
            }
            update_norm = delta.amax();
            let scale = z.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if !update_norm.is_finite() || z.iter().any(|v| !v.is_finite()) {
                return Err(SimError::NonFinite { t: state.t + dt, last_row: None });
            }
            if update_norm <= NEWTON_TOL * scale {
                break;
            }
            if iterations >= NEWTON_MAX_ITER {
                let (r, _) = residual(&z);
                return Err(SimError::Newton {
                    t: state.t,
                    iterations,
                    update_norm,
                    residual: r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                });
            }
        }

        let xm = mid(&z);
        let st = self.stage(&xm, um);
        let v: Vec<f64> = z.iter().zip(x).map(|(a, b)| (a - b) / dt).collect();
        let h0 = self.hamiltonian.value(x)?;
        let h1 = self.hamiltonian.value(&z)?;
        let row = self.ledger(&st, &v, state.t + dt, h0, h1, dt);
        if ![row.h, row.dhdt, row.dissipation, row.boundary_port, row.domain_port].iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite { t: state.t + dt, last_row: None });
        }
        Ok((
            State {
                t: state.t + dt,
                x: z,
                nodes,
            },
            row,
        ))
    }

    fn ledger(&self, st: &Stage, v: &[f64], t: f64, h0: f64, h1: f64, dt: f64) -> PowerLedgerRow {
        let nodes = self.grid.len();
        let g = &self.grid;
        let mut diss = vec![0.0; nodes];
        for (term, c) in self.r0.iter().zip(&st.coefs.r0) {
            for i in 0..nodes {
                diss[i] += st.delta[term.output * nodes + i] * c[i] * st.delta[term.input * nodes + i];
            }
        }
        for (term, c) in self.rdiv.iter().zip(&st.coefs.rdiv) {
            for i in 0..nodes {
                diss[i] -= st.ddelta[term.output * nodes + i] * c[i] * st.ddelta[term.input * nodes + i];
            }
        }
        let dissipation = g.integrate(&diss);

        let y = self.output_of(st);
        let domain_port: f64 = (0..self.n_in).map(|i| g.inner(&st.u[i * nodes..(i + 1) * nodes], &y[i])).sum();

        let mut boundary_port = 0.0;
        for (node, sign) in [(0usize, -1.0), (nodes - 1, 1.0)] {
            let mut b = 0.0;
            for a in 0..self.n {
                b += st.sigma[a * nodes + node] * v[a * nodes + node];
            }
            for (term, c) in self.rdiv.iter().zip(&st.coefs.rdiv) {
                b -= st.delta[term.output * nodes + node] * c[node] * st.ddelta[term.input * nodes + node];
            }
            for (term, c) in self.g1.iter().zip(&st.coefs.g1) {
                b += st.u[term.input * nodes + node] * c[node] * st.delta[term.output * nodes + node];
            }
            boundary_port += sign * b;
        }

        let constraint_power = self
            .constraints
            .iter()
            .map(|c| g.weight(c.node) * st.delta[c.slave] * (v[c.slave] - st.f[c.slave]))
            .sum();
        let dhdt = (h1 - h0) / dt;
        PowerLedgerRow {
            t,
            h: h1,
            dhdt,
            dissipation,
            domain_port,
            boundary_port,
            residual: dhdt - (-dissipation + domain_port + boundary_port),
            constraint_power,
        }
    }

    /// Steps from `initial` to `t_end`; the trajectory keeps every `stride`-th state and the
    /// last one.
    pub fn run(&self, initial: &State, dt: f64, t_end: f64, u: Input, stride: usize) -> Result<Run> {
        let steps = (t_end / dt).round() as usize;
        let stride = stride.max(1);
        let mut trajectory = vec![initial.clone()];
        let mut ledger: Vec<PowerLedgerRow> = Vec::with_capacity(steps);
        let mut state = initial.clone();
        for k in 1..=steps {
            let (next, row) = match self.step(&state, dt, u) {
                Ok(r) => r,
                Err(SimError::NonFinite { t, .. }) => {
                    return Err(SimError::NonFinite {
                        t,
                        last_row: ledger.last().cloned().map(Box::new),
                    })
                }
                Err(e) => return Err(e),
            };
            state = next;
            ledger.push(row);
            if k % stride == 0 || k == steps {
                trajectory.push(state.clone());
            }
        }
        Ok(Run { trajectory, ledger })
    }

    /// The row replaced by each rate condition, as `(field, node, replaced field)`.
    pub fn constrained_rows(&self) -> Vec<(usize, usize, usize)> {
        let nodes = self.grid.len();
        self.constraints.iter().map(|c| (c.field, c.node, c.slave / nodes)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub trajectory: Vec<State>,
    pub ledger: Vec<PowerLedgerRow>,
}

/// One implicit-midpoint step of `sys` on `grid`.
pub fn step_midpoint(sys: &PHSystem, grid: &Grid1D, state: &State, u: Input, dt: f64) -> Result<(State, PowerLedgerRow)> {
    DiscreteSystem::new(sys, grid.clone())?.step(state, dt, u)
}

/// Largest interior deviation between `δ_αℋ` of the profile and `W⁻¹∇H_d` of its samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VardiffDeviation {
    pub max_deviation: f64,
    pub field: usize,
    pub node: usize,
}

/// Compares the symbolic variational derivative, evaluated on the exact jets of `profile`,
/// with the discrete gradient of the sampled profile. Nodes within two cells of either
/// end are skipped, since the boundary rows of `D` are only first-order accurate.
pub fn cross_validate_vardiff(sys: &PHSystem, grid: &Grid1D, profile: &[Expr]) -> Result<VardiffDeviation> {
    require_1d(sys)?;
    if profile.len() != sys.field_count() {
        return Err(SimError::StateShape {
            expected: sys.field_count(),
            found: profile.len(),
        });
    }
    let h = discretize_hamiltonian(sys, grid)?;
    let nodes = grid.len();
    let mut x_slots = vec![Symbol::Coord(Coordinate::Independent(0))];
    x_slots.extend(param_symbols(sys));
    let mut buf = vec![0.0; x_slots.len()];
    buf[1..].copy_from_slice(&h.params);

    let mut x = vec![0.0; sys.field_count() * nodes];
    let mut b = Bindings::new();
    for (a, e) in profile.iter().enumerate() {
        let c = compile(sys, e, &x_slots)?;
        for i in 0..nodes {
            buf[0] = grid.node(i);
            x[a * nodes + i] = c.eval(&buf);
        }
        b = b.bind_field(&sys.space.fields[a], e.clone());
    }
    let grad = h.gradient(&x)?;
    let dh = sys.variational_derivative()?;
    let mut worst = VardiffDeviation {
        max_deviation: 0.0,
        field: 0,
        node: 2,
    };
    for (a, d) in dh.0.iter().enumerate() {
        let exact = compile(sys, &sys.space.substitute(d, &b)?, &x_slots)?;
        for i in 2..nodes.saturating_sub(2) {
            buf[0] = grid.node(i);
            let dev = (exact.eval(&buf) - grad[a * nodes + i] / grid.weight(i)).abs();
            if dev > worst.max_deviation {
                worst = VardiffDeviation {
                    max_deviation: dev,
                    field: a,
                    node: i,
                };
            }
        }
    }
    Ok(worst)
}
