//! Dense revised simplex for `min cᵀx  s.t.  Ax = b, x ≥ 0`.
//!
//! Two phases with one artificial variable per row. Pricing is Dantzig's rule
//! (most negative reduced cost, lowest index on ties); after
//! [`DEGENERATE_PIVOTS_BEFORE_BLAND`] consecutive degenerate pivots the phase
//! switches to Bland's rule for the rest of its run. The ratio test breaks ties
//! by lowest basic variable index, so results are a deterministic function of
//! the input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEGENERATE_PIVOTS_BEFORE_BLAND: usize = 50;
const REFACTOR_EVERY: usize = 64;
const MAX_ITERATIONS: usize = 100_000;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("constraint matrix has {rows} rows but right-hand side has {rhs} entries")]
    RhsMismatch { rows: usize, rhs: usize },
    #[error("row {row} has {len} coefficients, expected {expected}")]
    RowLength { row: usize, len: usize, expected: usize },
    #[error("non-finite coefficient in the problem data")]
    NonFinite,
    #[error("iteration limit reached ({0} pivots)")]
    IterationLimit(usize),
    #[error("basis matrix became singular")]
    SingularBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point; meaningful only when optimal.
    pub x: Vec<f64>,
    pub value: f64,
    /// Phase-two reduced costs `c_j − yᵀA_j` of the structural columns.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

/// Equality-form linear program with nonnegative variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    n: usize,
    c: Vec<f64>,
    /// Column-major copy of `A`; column `j` is `cols[j*m..(j+1)*m]`.
    cols: Vec<f64>,
    b: Vec<f64>,
}

impl LinearProgram {
    /// `rows` holds the constraint matrix row by row.
    pub fn new(c: Vec<f64>, rows: &[Vec<f64>], b: Vec<f64>) -> Result<Self, LpError> {
        let m = rows.len();
        let n = c.len();
        if b.len() != m {
            return Err(LpError::RhsMismatch { rows: m, rhs: b.len() });
        }
        let mut cols = vec![0.0; m * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LpError::RowLength {
                    row: i,
                    len: row.len(),
                    expected: n,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                cols[j * m + i] = v;
            }
        }
        if c.iter().chain(&cols).chain(&b).any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
        Ok(LinearProgram { n, c, cols, b })
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Simplex::new(self).run()
    }
}

/// `min cᵀx s.t. Ax = b, x ≥ 0` with `A` given row by row.
pub fn lp_solve(c: &[f64], rows: &[Vec<f64>], b: &[f64]) -> Result<LpSolution, LpError> {
    LinearProgram::new(c.to_vec(), rows, b.to_vec())?.solve()
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    /// Row signs applied so that the working right-hand side is nonnegative.
    sign: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    x_b: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.b.len();
        let sign: Vec<f64> = lp.b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = lp.b.iter().zip(&sign).map(|(v, s)| v * s).collect();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut is_basic = vec![false; lp.n + m];
        for i in 0..m {
            is_basic[lp.n + i] = true;
        }
        Simplex {
            lp,
            m,
            x_b: rhs.clone(),
            sign,
            rhs,
            basis: (lp.n..lp.n + m).collect(),
            is_basic,
            binv,
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.lp.n
    }

    /// Column `j` of the sign-adjusted working matrix `[A | I]`, written into `out`.
    fn column(&self, j: usize, out: &mut [f64]) {
        let m = self.m;
        if j < self.lp.n {
            let col = &self.lp.cols[j * m..(j + 1) * m];
            for i in 0..m {
                out[i] = col[i] * self.sign[i];
            }
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j - self.lp.n] = 1.0;
        }
    }

    fn dot_column(&self, y: &[f64], j: usize) -> f64 {
        let m = self.m;
        if j < self.lp.n {
            let col = &self.lp.cols[j * m..(j + 1) * m];
            (0..m).map(|i| y[i] * col[i] * self.sign[i]).sum()
        } else {
            y[j - self.lp.n]
        }
    }

    fn cost(&self, j: usize, phase_one: bool) -> f64 {
        match (phase_one, self.is_artificial(j)) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            (false, true) => 0.0,
            (false, false) => self.lp.c[j],
        }
    }

    fn duals(&self, phase_one: bool) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = self.cost(bj, phase_one);
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for k in 0..m {
                    y[k] += cb * row[k];
                }
            }
        }
        y
    }

    fn ftran(&self, a: &[f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            out[i] = row.iter().zip(a).map(|(p, q)| p * q).sum();
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut work = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (k, &bj) in self.basis.iter().enumerate() {
            self.column(bj, &mut col);
            for i in 0..m {
                work[i * m + k] = col[i];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for k in 0..m {
            let p = (k..m)
                .max_by(|&a, &b| work[a * m + k].abs().total_cmp(&work[b * m + k].abs()))
                .unwrap();
            let piv = work[p * m + k];
            if piv.abs() < 1e-13 {
                return Err(LpError::SingularBasis);
            }
            if p != k {
                for c in 0..m {
                    work.swap(p * m + c, k * m + c);
                    inv.swap(p * m + c, k * m + c);
                }
            }
            for c in 0..m {
                work[k * m + c] /= piv;
                inv[k * m + c] /= piv;
            }
            for i in 0..m {
                if i == k {
                    continue;
                }
                let f = work[i * m + k];
                if f != 0.0 {
                    for c in 0..m {
                        work[i * m + c] -= f * work[k * m + c];
                        inv[i * m + c] -= f * inv[k * m + c];
                    }
                }
            }
        }
        self.binv = inv;
        let mut xb = vec![0.0; m];
        self.ftran(&self.rhs, &mut xb);
        for v in xb.iter_mut() {
            if *v < 0.0 && *v > -1e-9 {
                *v = 0.0;
            }
        }
        self.x_b = xb;
        self.since_refactor = 0;
        Ok(())
    }

    fn pivot(&mut self, r: usize, entering: usize, u: &[f64]) {
        let m = self.m;
        let theta = self.x_b[r] / u[r];
        for i in 0..m {
            if i != r {
                self.x_b[i] -= theta * u[i];
            }
        }
        self.x_b[r] = theta;
        let ur = u[r];
        for k in 0..m {
            self.binv[r * m + k] /= ur;
        }
        let (head, tail) = self.binv.split_at_mut(r * m);
        let (pivot_row, rest) = tail.split_at_mut(m);
        for i in 0..m {
            if i == r || u[i] == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut head[i * m..(i + 1) * m]
            } else {
                let off = (i - r - 1) * m;
                &mut rest[off..off + m]
            };
            let f = u[i];
            for k in 0..m {
                row[k] -= f * pivot_row[k];
            }
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[entering] = true;
        self.basis[r] = entering;
        self.iterations += 1;
        self.since_refactor += 1;
    }

    fn run_phase(&mut self, phase_one: bool) -> Result<PhaseOutcome, LpError> {
        let m = self.m;
        let n = self.lp.n;
        let cmax = if phase_one {
            1.0
        } else {
            self.lp.c.iter().fold(0.0f64, |a, v| a.max(v.abs()))
        };
        let dtol = 1e-11 * (1.0 + cmax);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut a = vec![0.0; m];
        let mut u = vec![0.0; m];
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(LpError::IterationLimit(self.iterations));
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.duals(phase_one);
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n {
                if self.is_basic[j] {
                    continue;
                }
                let d = self.cost(j, phase_one) - self.dot_column(&y, j);
                if d < -dtol {
                    if bland {
                        entering = Some((j, d));
                        break;
                    }
                    if entering.map_or(true, |(_, best)| d < best) {
                        entering = Some((j, d));
                    }
                }
            }
            let Some((e, _)) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };
            self.column(e, &mut a);
            self.ftran(&a, &mut u);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                if u[i] > PIVOT_TOL {
                    let ratio = self.x_b[i].max(0.0) / u[i];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 * (1.0 + br)
                                || (ratio <= br + 1e-12 * (1.0 + br) && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, theta)) = leave else {
                return Ok(PhaseOutcome::Unbounded);
            };
            if self.x_b[r] < 0.0 {
                self.x_b[r] = 0.0;
            }
            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= DEGENERATE_PIVOTS_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, e, &u);
        }
    }

    /// Pivots zero-level artificials out of the basis where a structural column
    /// can replace them; rows where none can are redundant and keep theirs.
    fn expel_artificials(&mut self) {
        let m = self.m;
        let n = self.lp.n;
        let mut a = vec![0.0; m];
        let mut u = vec![0.0; m];
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let candidate = (0..n)
                .filter(|&j| !self.is_basic[j])
                .map(|j| (j, self.dot_column(&row, j)))
                .filter(|&(_, v)| v.abs() > PIVOT_TOL)
                .max_by(|p, q| p.1.abs().total_cmp(&q.1.abs()).then(q.0.cmp(&p.0)));
            if let Some((j, _)) = candidate {
                self.column(j, &mut a);
                self.ftran(&a, &mut u);
                self.x_b[r] = 0.0;
                self.pivot(r, j, &u);
            }
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.lp.n];
        for (i, &bj) in self.basis.iter().enumerate() {
            if bj < self.lp.n {
                x[bj] = self.x_b[i].max(0.0);
            }
        }
        x
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        let n = self.lp.n;
        let scale = self.rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        self.run_phase(true)?;
        self.refactor()?;
        let infeasibility: f64 = self
            .basis
            .iter()
            .zip(&self.x_b)
            .filter(|(&j, _)| self.is_artificial(j))
            .map(|(_, v)| v.abs())
            .sum();
        if infeasibility > 1e-9 * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                value: f64::NAN,
                reduced_costs: vec![0.0; n],
                iterations: self.iterations,
            });
        }
        self.expel_artificials();
        self.refactor()?;
        let outcome = self.run_phase(false)?;
        if let PhaseOutcome::Unbounded = outcome {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: self.primal(),
                value: f64::NEG_INFINITY,
                reduced_costs: vec![0.0; n],
                iterations: self.iterations,
            });
        }
        self.refactor()?;
        let y = self.duals(false);
        let reduced_costs: Vec<f64> = (0..n).map(|j| self.lp.c[j] - self.dot_column(&y, j)).collect();
        let x = self.primal();
        let value = x.iter().zip(&self.lp.c).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            x,
            value,
            reduced_costs,
            iterations: self.iterations,
        })
    }
}
