//! Dense two-phase simplex: Bland's rule for the entering column, a Harris
//! ratio test preferring large pivots, row equilibration and a small
//! right-hand-side perturbation against degenerate stalling. The exact
//! right-hand side is restored after each phase and any basic value that
//! went negative is repaired with a few dual simplex steps.
//!
//! The problems solved here are small (Chebyshev centres over a handful of
//! teams, and the single-window maximin LP), so a dense tableau is simpler
//! and fast enough. Problems are stated as
//!
//! ```text
//! maximize    c·x
//! subject to  A_le x <= b_le
//!             A_eq x  = b_eq
//!             lo <= x <= hi        (either side may be infinite)
//! ```

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-7;
const RATIO_TIE: f64 = 1e-10;
const HARRIS_TOL: f64 = 1e-9;
const NOISE_RC: f64 = 1e-8;
const PERTURB: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;
const OPT_EPS: f64 = 1e-10;
const FEAS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// A linear program in maximisation form.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    le_rows: Vec<(Vec<f64>, f64)>,
    eq_rows: Vec<(Vec<f64>, f64)>,
    bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// Maximise `objective·x`. Variables default to `x >= 0`.
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram { objective, le_rows: Vec::new(), eq_rows: Vec::new(), bounds: vec![(0.0, f64::INFINITY); n] }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::maximize(objective.into_iter().map(|c| -c).collect())
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn le_rows(&self) -> &[(Vec<f64>, f64)] {
        &self.le_rows
    }

    pub fn eq_rows(&self) -> &[(Vec<f64>, f64)] {
        &self.eq_rows
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Adds `row·x <= rhs`.
    pub fn le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.le_rows.push((row, rhs));
        self
    }

    /// Adds `row·x == rhs`.
    pub fn equal(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_rows.push((row, rhs));
        self
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> &mut Self {
        self.bounds[var] = (lo, hi);
        self
    }

    pub fn free(&mut self, var: usize) -> &mut Self {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY)
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        for (i, (row, rhs)) in self.le_rows.iter().chain(&self.eq_rows).enumerate() {
            if row.len() != n {
                return Err(LpError::Dimension(format!("row {i} has {} coefficients, expected {n}", row.len())));
            }
            if !rhs.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(LpError::Dimension(format!("row {i} has non-finite entries")));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Dimension(format!("invalid bounds on variable {j}: [{lo}, {hi}]")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Dimension("non-finite objective".into()));
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        let le = self.le_rows.iter().map(|(r, b)| dot(r) - b);
        let eq = self.eq_rows.iter().map(|(r, b)| (dot(r) - b).abs());
        let bounds = self.bounds.iter().zip(x).map(|(&(lo, hi), &v)| (lo - v).max(v - hi));
        le.chain(eq).chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// How an original variable maps onto non-negative standard-form columns:
/// `x = offset + sign * col` (or `x = col_pos - col_neg` for free variables).
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shifted { col: usize, offset: f64, sign: f64 },
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowKind {
    Le,
    Ge,
    Eq,
}

/// Reusable tableau storage. One per thread.
#[derive(Debug, Default)]
pub struct SimplexWorkspace {
    tab: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
    rows: usize,
    max_iter: usize,
}

impl SimplexWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_iteration_limit(max_iter: usize) -> Self {
        SimplexWorkspace { max_iter, ..Self::default() }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.tab[r * self.width + c]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.tab[pr * w + pc];
        for v in &mut self.tab[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        self.tab[pr * w + pc] = 1.0;
        let (before, rest) = self.tab.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Runs simplex iterations on the objective stored in row `self.rows`
    /// (reduced costs, minimisation). Columns in `blocked` never enter.
    fn iterate(&mut self, ncols: usize, blocked: &[bool], iters: &mut usize) -> Result<(), LpError> {
        let obj = self.rows;
        let rhs = self.width - 1;
        let mut degenerate_run = 0usize;
        // Columns whose negative reduced cost is roundoff: no pivot row and
        // a reduced cost within NOISE_RC of zero. Cleared after each pivot.
        let mut skipped = vec![false; ncols];
        loop {
            // Bland: lowest-index column with negative reduced cost.
            let entering = (0..ncols).find(|&j| !blocked[j] && !skipped[j] && self.at(obj, j) < -OPT_EPS);
            let Some(pc) = entering else { return Ok(()) };
            // Harris ratio test: bound the step with every basic variable
            // allowed to go HARRIS_TOL negative, then take the largest pivot
            // among rows whose exact ratio fits under that bound. A long run
            // of zero-step pivots switches to Bland's lowest basis index
            // among the exact minimum-ratio rows, which cannot cycle.
            let mut bound = f64::INFINITY;
            let mut min_ratio = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let b = self.at(r, rhs).max(0.0);
                    bound = bound.min((b + HARRIS_TOL) / a);
                    min_ratio = min_ratio.min(b / a);
                }
            }
            if !bound.is_finite() {
                if self.at(obj, pc) > -NOISE_RC {
                    skipped[pc] = true;
                    continue;
                }
                return Err(LpError::Unbounded);
            }
            degenerate_run = if min_ratio <= RATIO_TIE { degenerate_run + 1 } else { 0 };
            let bland = degenerate_run > DEGENERATE_RUN;
            let cutoff = if bland { min_ratio + RATIO_TIE * (1.0 + min_ratio) } else { bound };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS && self.at(r, rhs).max(0.0) / a <= cutoff {
                    let better = match leave {
                        None => true,
                        Some((br, _)) if bland => self.basis[r] < self.basis[br],
                        Some((br, ba)) => a > ba * (1.0 + 1e-9) || (a >= ba * (1.0 - 1e-9) && self.basis[r] < self.basis[br]),
                    };
                    if better {
                        leave = Some((r, a));
                    }
                }
            }
            let Some((pr, _)) = leave else { return Err(LpError::Unbounded) };
            self.pivot(pr, pc);
            skipped.iter_mut().for_each(|s| *s = false);
            *iters += 1;
            if *iters > self.max_iter {
                return Err(LpError::IterationLimit(self.max_iter));
            }
        }
    }

    /// Nudges every basic value up by a small, row-dependent amount. This
    /// is a perturbation of the right-hand side that keeps the basis
    /// feasible and breaks the ties that make degenerate pivots stall.
    fn perturb(&mut self) {
        let rhs = self.width - 1;
        for r in 0..self.rows {
            let spread = 1.0 + ((r * 7919) % 1009) as f64 / 1009.0;
            let v = self.at(r, rhs);
            self.tab[r * self.width + rhs] = v + PERTURB * spread * (1.0 + v.abs());
        }
    }

    /// Recomputes the basic values for the unperturbed right-hand side `b0`
    /// from the columns of the starting basis (which hold the basis inverse).
    fn restore(&mut self, init: &[usize], b0: &[f64]) {
        let rhs = self.width - 1;
        for r in 0..self.rows {
            let v = init.iter().zip(b0).map(|(&c, &b)| self.at(r, c) * b).sum::<f64>();
            self.tab[r * self.width + rhs] = v;
        }
    }

    /// Dual simplex steps until no basic value is below `-FEAS_EPS`. The
    /// current basis must be (nearly) dual feasible.
    fn dual_cleanup(&mut self, ncols: usize, blocked: &[bool], iters: &mut usize) -> Result<(), LpError> {
        let obj = self.rows;
        let rhs = self.width - 1;
        loop {
            let worst = (0..self.rows).min_by(|&a, &b| self.at(a, rhs).total_cmp(&self.at(b, rhs)));
            let Some(pr) = worst.filter(|&r| self.at(r, rhs) < -FEAS_EPS) else { return Ok(()) };
            let mut enter: Option<(usize, f64, f64)> = None;
            for j in (0..ncols).filter(|&j| !blocked[j]) {
                let a = self.at(pr, j);
                if a < -PIVOT_EPS {
                    let ratio = self.at(obj, j).max(0.0) / -a;
                    let better = match enter {
                        None => true,
                        Some((_, br, ba)) => ratio < br - RATIO_TIE * (1.0 + br) || (ratio <= br + RATIO_TIE * (1.0 + br) && -a > ba),
                    };
                    if better {
                        enter = Some((j, ratio, -a));
                    }
                }
            }
            let Some((pc, _, _)) = enter else { return Err(LpError::Infeasible) };
            self.pivot(pr, pc);
            *iters += 1;
            if *iters > self.max_iter {
                return Err(LpError::IterationLimit(self.max_iter));
            }
        }
    }

    /// Perturbed primal simplex, then the exact right-hand side, a dual
    /// repair of any basic value pushed negative and a final primal polish.
    fn optimise(&mut self, ncols: usize, blocked: &[bool], init: &[usize], b0: &[f64], iters: &mut usize) -> Result<(), LpError> {
        self.perturb();
        self.iterate(ncols, blocked, iters)?;
        self.restore(init, b0);
        self.dual_cleanup(ncols, blocked, iters)?;
        self.iterate(ncols, blocked, iters)
    }

    pub fn solve(&mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        lp.check()?;
        if self.max_iter == 0 {
            self.max_iter = 50_000;
        }

        // Map bounded variables onto non-negative columns.
        let mut maps = Vec::with_capacity(lp.num_vars());
        let mut ncols = 0usize;
        let mut extra: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for &(lo, hi) in &lp.bounds {
            let m = if lo.is_finite() {
                if hi.is_finite() {
                    extra.push((vec![(ncols, 1.0)], hi - lo));
                }
                VarMap::Shifted { col: ncols, offset: lo, sign: 1.0 }
            } else if hi.is_finite() {
                VarMap::Shifted { col: ncols, offset: hi, sign: -1.0 }
            } else {
                ncols += 1;
                VarMap::Split { pos: ncols - 1, neg: ncols }
            };
            ncols += 1;
            maps.push(m);
        }
        let nstruct = ncols;

        let translate = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
            let mut out = vec![0.0; nstruct];
            let mut b = rhs;
            for (a, m) in row.iter().zip(&maps) {
                match *m {
                    VarMap::Shifted { col, offset, sign } => {
                        out[col] += a * sign;
                        b -= a * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        out[pos] += a;
                        out[neg] -= a;
                    }
                }
            }
            (out, b)
        };

        let mut rows: Vec<(Vec<f64>, f64, RowKind)> = Vec::new();
        for (r, b) in &lp.le_rows {
            let (row, b) = translate(r, *b);
            rows.push((row, b, RowKind::Le));
        }
        for (cols, b) in &extra {
            let mut row = vec![0.0; nstruct];
            for &(c, v) in cols {
                row[c] = v;
            }
            rows.push((row, *b, RowKind::Le));
        }
        for (r, b) in &lp.eq_rows {
            let (row, b) = translate(r, *b);
            rows.push((row, b, RowKind::Eq));
        }
        for (row, b, kind) in &mut rows {
            if *b < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
                *b = -*b;
                if *kind == RowKind::Le {
                    *kind = RowKind::Ge;
                }
            }
        }

        // Equilibrate so every row's largest coefficient is one.
        for (row, b, _) in &mut rows {
            let big = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if big > 0.0 {
                row.iter_mut().for_each(|v| *v /= big);
                *b /= big;
            }
        }

        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.2 != RowKind::Eq).count();
        let n_art = rows.iter().filter(|r| r.2 != RowKind::Le).count();
        let art_start = nstruct + n_slack;
        let total = art_start + n_art;
        self.width = total + 1;
        self.rows = m;
        self.tab.clear();
        self.tab.resize((m + 1) * self.width, 0.0);
        self.basis.clear();
        self.basis.resize(m, 0);

        let (mut s, mut a) = (nstruct, art_start);
        for (i, (row, b, kind)) in rows.iter().enumerate() {
            let w = self.width;
            self.tab[i * w..i * w + nstruct].copy_from_slice(row);
            self.tab[i * w + total] = *b;
            match kind {
                RowKind::Le => {
                    self.tab[i * w + s] = 1.0;
                    self.basis[i] = s;
                    s += 1;
                }
                RowKind::Ge => {
                    self.tab[i * w + s] = -1.0;
                    s += 1;
                    self.tab[i * w + a] = 1.0;
                    self.basis[i] = a;
                    a += 1;
                }
                RowKind::Eq => {
                    self.tab[i * w + a] = 1.0;
                    self.basis[i] = a;
                    a += 1;
                }
            }
        }

        let init = self.basis.clone();
        let b0: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let mut iters = 0usize;
        let mut blocked = vec![false; total];

        // Phase 1: minimise the sum of artificials.
        if n_art > 0 {
            let w = self.width;
            for i in 0..m {
                if self.basis[i] >= art_start {
                    for j in 0..w {
                        let v = self.tab[i * w + j];
                        self.tab[m * w + j] -= v;
                    }
                }
            }
            for j in art_start..total {
                self.tab[m * w + j] = 0.0;
            }
            self.optimise(total, &blocked, &init, &b0, &mut iters)?;
            let infeas: f64 = (0..m).filter(|&i| self.basis[i] >= art_start).map(|i| self.at(i, total)).sum();
            let scale = 1.0 + rows.iter().map(|r| r.1).fold(0.0, f64::max);
            if infeas > FEAS_EPS * scale {
                return Err(LpError::Infeasible);
            }
            // Drive remaining artificials out of the basis.
            for i in 0..m {
                if self.basis[i] >= art_start {
                    if let Some(j) = (0..art_start).find(|&j| self.at(i, j).abs() > PIVOT_EPS) {
                        self.pivot(i, j);
                    }
                }
            }
            for b in &mut blocked[art_start..] {
                *b = true;
            }
        }

        // Phase 2: minimise -c·x over the structural columns.
        let mut cost = vec![0.0; total];
        for (c, m_) in lp.objective.iter().zip(&maps) {
            match *m_ {
                VarMap::Shifted { col, sign, .. } => cost[col] -= c * sign,
                VarMap::Split { pos, neg } => {
                    cost[pos] -= c;
                    cost[neg] += c;
                }
            }
        }
        let w = self.width;
        let obj = &mut self.tab[m * w..(m + 1) * w];
        obj[..total].copy_from_slice(&cost);
        obj[total..].fill(0.0);
        for i in 0..m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    let v = self.tab[i * w + j];
                    self.tab[m * w + j] -= cb * v;
                }
            }
        }
        self.optimise(total, &blocked, &init, &b0, &mut iters)?;

        let mut std = vec![0.0; total];
        for i in 0..m {
            std[self.basis[i]] = self.at(i, total).max(0.0);
        }
        let x: Vec<f64> = maps
            .iter()
            .map(|m| match *m {
                VarMap::Shifted { col, offset, sign } => offset + sign * std[col],
                VarMap::Split { pos, neg } => std[pos] - std[neg],
            })
            .collect();
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
        Ok(LpSolution { x, objective })
    }
}

/// Solves `lp` with a fresh workspace.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    SimplexWorkspace::new().solve(lp)
}
