//! Small dense linear programs.
//!
//! Solves `max c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0` with a
//! two-phase tableau simplex. Problems here have at most a few hundred
//! columns, so a dense tableau is the simplest thing that is also fast.
//!
//! Pricing uses the most-negative reduced cost and falls back to Bland's rule
//! after a run of degenerate pivots, which rules out cycling.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("constraint row has {got} coefficients, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite coefficient in linear program")]
    NonFinite,
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    /// Phase-one residual (sum of artificials) above which the problem is
    /// declared infeasible. Scaled by `1 + max |b|`.
    pub feasibility_tol: f64,
    /// Smallest pivot magnitude accepted.
    pub pivot_tol: f64,
    /// Reduced-cost threshold for optimality.
    pub optimality_tol: f64,
    pub max_pivots: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            pivot_tol: 1e-10,
            optimality_tol: 1e-10,
            max_pivots: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// Phase one could not drive the artificials below tolerance.
    Infeasible { residual: f64 },
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

/// A linear program in non-negative variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    n: usize,
    objective: Vec<f64>,
    le: Vec<(Vec<f64>, f64)>,
    eq: Vec<(Vec<f64>, f64)>,
}

impl LinearProgram {
    /// A program over `n` non-negative variables with a zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            objective: vec![0.0; n],
            le: Vec::new(),
            eq: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn maximize(&mut self, c: Vec<f64>) -> Result<&mut Self, LpError> {
        self.check(&c)?;
        self.objective = c;
        Ok(self)
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> Result<&mut Self, LpError> {
        self.check(&row)?;
        if !rhs.is_finite() {
            return Err(LpError::NonFinite);
        }
        self.le.push((row, rhs));
        Ok(self)
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> Result<&mut Self, LpError> {
        self.add_le(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> Result<&mut Self, LpError> {
        self.check(&row)?;
        if !rhs.is_finite() {
            return Err(LpError::NonFinite);
        }
        self.eq.push((row, rhs));
        Ok(self)
    }

    fn check(&self, row: &[f64]) -> Result<(), LpError> {
        if row.len() != self.n {
            return Err(LpError::Dimension {
                expected: self.n,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpOutcome, LpError> {
        self.solve_with(&LpOptions::default())
    }

    pub fn solve_with(&self, opts: &LpOptions) -> Result<LpOutcome, LpError> {
        Tableau::build(self).run(&self.objective, opts)
    }
}

struct Tableau {
    n: usize,
    /// Columns: structural, slack, artificial, then the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    first_art: usize,
    ncols: usize,
    b_scale: f64,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n;
        let m_le = lp.le.len();
        let needs_art: Vec<bool> = lp
            .le
            .iter()
            .map(|(_, b)| *b < 0.0)
            .chain(lp.eq.iter().map(|_| true))
            .collect();
        let n_art = needs_art.iter().filter(|&&a| a).count();
        let first_art = n + m_le;
        let ncols = first_art + n_art;
        let mut rows = Vec::with_capacity(needs_art.len());
        let mut basis = Vec::with_capacity(needs_art.len());
        let mut next_art = first_art;
        let mut b_scale: f64 = 0.0;

        let all = lp
            .le
            .iter()
            .enumerate()
            .map(|(i, (r, b))| (r, *b, Some(i)))
            .chain(lp.eq.iter().map(|(r, b)| (r, *b, None)));
        for (row, b, slack) in all {
            let mut t = vec![0.0; ncols + 1];
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            for (j, &a) in row.iter().enumerate() {
                t[j] = sign * a;
            }
            if let Some(i) = slack {
                t[n + i] = sign;
            }
            t[ncols] = sign * b;
            b_scale = b_scale.max(b.abs());
            match slack {
                Some(i) if sign > 0.0 => basis.push(n + i),
                _ => {
                    t[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
            }
            rows.push(t);
        }
        Self {
            n,
            rows,
            basis,
            first_art,
            ncols,
            b_scale,
        }
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, &p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, &p) in obj.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Reduced-cost row for maximising `c'x` over the current basis.
    fn objective_row(&self, c: &[f64]) -> Vec<f64> {
        let mut obj = vec![0.0; self.ncols + 1];
        for (j, &cj) in c.iter().enumerate() {
            obj[j] = -cj;
        }
        for (i, &bj) in self.basis.iter().enumerate() {
            let f = obj[bj];
            if f != 0.0 {
                for (v, &t) in obj.iter_mut().zip(&self.rows[i]) {
                    *v -= f * t;
                }
            }
        }
        obj
    }

    /// Runs simplex iterations on `obj` using columns `< allowed`. Returns
    /// `false` if the objective is unbounded.
    fn iterate(
        &mut self,
        obj: &mut [f64],
        allowed: usize,
        opts: &LpOptions,
        pivots: &mut usize,
    ) -> Result<bool, LpError> {
        let rhs = self.ncols;
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run > 25;
            let mut enter = None;
            let mut best = -opts.optimality_tol;
            for (j, &v) in obj.iter().enumerate().take(allowed) {
                if v < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = v;
                }
            }
            let Some(c) = enter else {
                return Ok(true);
            };

            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > opts.pivot_tol {
                    let ratio = row[rhs].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best_ratio)) => {
                            let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio);
                            if ratio < best_ratio && !tie
                                || tie && self.basis[i] < self.basis[k]
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best_ratio))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            if ratio <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c, obj);
            *pivots += 1;
            if *pivots > opts.max_pivots {
                return Err(LpError::IterationLimit(opts.max_pivots));
            }
        }
    }

    fn run(mut self, c: &[f64], opts: &LpOptions) -> Result<LpOutcome, LpError> {
        let mut pivots = 0;
        let rhs = self.ncols;

        if self.first_art < self.ncols {
            let mut phase1 = vec![0.0; self.ncols];
            for v in phase1.iter_mut().skip(self.first_art) {
                *v = -1.0;
            }
            let mut obj = self.objective_row(&phase1);
            self.iterate(&mut obj, self.ncols, opts, &mut pivots)?;
            let residual = -obj[rhs];
            if residual > opts.feasibility_tol * (1.0 + self.b_scale) {
                return Ok(LpOutcome::Infeasible { residual });
            }
            // Drive zero-level artificials out of the basis; drop rows that
            // turn out to be redundant.
            let mut i = 0;
            while i < self.rows.len() {
                if self.basis[i] >= self.first_art {
                    let col = (0..self.first_art)
                        .filter(|&j| self.rows[i][j].abs() > 1e-9)
                        .max_by(|&a, &b| self.rows[i][a].abs().total_cmp(&self.rows[i][b].abs()));
                    match col {
                        Some(j) => {
                            let mut dummy = vec![0.0; self.ncols + 1];
                            self.pivot(i, j, &mut dummy);
                        }
                        None => {
                            self.rows.remove(i);
                            self.basis.remove(i);
                            continue;
                        }
                    }
                }
                i += 1;
            }
        }

        let mut full_c = vec![0.0; self.ncols];
        full_c[..self.n].copy_from_slice(c);
        let mut obj = self.objective_row(&full_c);
        if !self.iterate(&mut obj, self.first_art, opts, &mut pivots)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.n];
        for (i, &bj) in self.basis.iter().enumerate() {
            if bj < self.n {
                x[bj] = self.rows[i][rhs].max(0.0);
            }
        }
        let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Ok(LpOutcome::Optimal(LpSolution { x, value }))
    }
}
