//! Uniform 1-D grids with a summation-by-parts first-derivative operator.

use super::{Result, SimError};
use nalgebra::DMatrix;

/// Boundary rows of the difference operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Closure {
    /// First-order one-sided rows; `⟨a, Db⟩_W + ⟨Da, b⟩_W = a_N b_N − a_1 b_1` holds exactly.
    #[default]
    Sbp,
    /// Second-order one-sided rows. More accurate at the ends, but discrete integration by
    /// parts picks up an `O(h²)` defect, so energy ledgers no longer close exactly.
    OneSided2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid1D {
    n: usize,
    lo: f64,
    hi: f64,
    h: f64,
    closure: Closure,
}

impl Grid1D {
    pub fn new(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 3 {
            return Err(SimError::Grid(format!("need at least 3 nodes, got {n}")));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(SimError::Grid(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Grid1D {
            n,
            lo,
            hi,
            h: (hi - lo) / (n - 1) as f64,
            closure: Closure::Sbp,
        })
    }

    pub fn with_closure(mut self, closure: Closure) -> Self {
        self.closure = closure;
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.h
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            self.h / 2.0
        } else {
            self.h
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.weight(i)).collect()
    }

    /// `⟨a, b⟩_W`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).enumerate().map(|(i, (x, y))| self.weight(i) * x * y).sum()
    }

    /// `Σ_i W_i a_i`.
    pub fn integrate(&self, a: &[f64]) -> f64 {
        a.iter().enumerate().map(|(i, x)| self.weight(i) * x).sum()
    }

    pub fn diff(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.diff_into(u, &mut out);
        out
    }

    pub fn diff_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        let h = self.h;
        for i in 1..n - 1 {
            out[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
        }
        match self.closure {
            Closure::Sbp => {
                out[0] = (u[1] - u[0]) / h;
                out[n - 1] = (u[n - 1] - u[n - 2]) / h;
            }
            Closure::OneSided2 => {
                out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
                out[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
            }
        }
    }

    /// `Dᵀ v`.
    pub fn diff_transpose(&self, v: &[f64]) -> Vec<f64> {
        let m = self.matrix();
        (0..self.n).map(|j| (0..self.n).map(|i| m[(i, j)] * v[i]).sum()).collect()
    }

    /// Dense `D`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.diff_into(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        m
    }

    /// `⟨a, Db⟩_W + ⟨Da, b⟩_W − (a_N b_N − a_1 b_1)`.
    pub fn sbp_defect(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.n;
        self.inner(a, &self.diff(b)) + self.inner(&self.diff(a), b) - (a[n - 1] * b[n - 1] - a[0] * b[0])
    }
}

/// Outcome of the discrete Stokes identity `⟨1, Dω⟩_W = ω_N − ω_1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StokesDefect {
    pub defect: f64,
    /// `1e−13 · ‖ω‖∞ · N`, the floating-point allowance for the strict closure.
    pub bound: f64,
}

impl StokesDefect {
    pub fn within_bound(&self) -> bool {
        self.defect.abs() <= self.bound
    }
}

pub fn discrete_stokes_check(grid: &Grid1D, omega: &[f64]) -> StokesDefect {
    let n = grid.len();
    let defect = grid.integrate(&grid.diff(omega)) - (omega[n - 1] - omega[0]);
    let norm = omega.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    StokesDefect {
        defect,
        bound: 1e-13 * norm * n as f64,
    }
}
