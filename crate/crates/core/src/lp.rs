//! Small dense linear-programming solver: two-phase tableau simplex with
//! Bland's anti-cycling rule. Sized for the M-step and decomposition LPs
//! (tens of variables and rows).

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("simplex pivot limit reached")]
    PivotLimit,
}

/// `minimize c·z` subject to `A_le z <= b_le`, `A_eq z = b_eq`,
/// `lower <= z <= upper`. Bounds may be infinite; the default is `[0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub le_rows: Vec<Vec<f64>>,
    pub le_rhs: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub z: Vec<f64>,
    pub value: f64,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            le_rows: Vec::new(),
            le_rhs: Vec::new(),
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn minimize(mut self, c: Vec<f64>) -> Self {
        self.objective = c;
        self
    }

    pub fn le(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
        self
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn bounds(mut self, var: usize, lo: f64, hi: f64) -> Self {
        self.lower[var] = lo;
        self.upper[var] = hi;
        self
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors have wrong length".into()));
        }
        if self.le_rows.len() != self.le_rhs.len() || self.eq_rows.len() != self.eq_rhs.len() {
            return Err(LpError::Malformed("row/rhs count mismatch".into()));
        }
        for row in self.le_rows.iter().chain(&self.eq_rows) {
            if row.len() != n {
                return Err(LpError::Malformed(format!(
                    "row has {} coefficients, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(LpError::Malformed("non-finite coefficient".into()));
            }
        }
        if self.objective.iter().chain(&self.le_rhs).chain(&self.eq_rhs).any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite objective or rhs".into()));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("bad bounds on variable {j}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Largest constraint violation of `z` (rows and bounds).
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        let mut worst = 0.0f64;
        for (row, &b) in self.le_rows.iter().zip(&self.le_rhs) {
            worst = worst.max(dot(row) - b);
        }
        for (row, &b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dot(row) - b).abs());
        }
        for (j, &v) in z.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }
}

// z_j = offset + sum(coef * y_col)
struct VarMap {
    offset: f64,
    terms: Vec<(usize, f64)>,
}

#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    Le,
    Ge,
    Eq,
}

struct Tableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= piv;
        }
        self.b[r] /= piv;
        self.a[r][c] = 1.0;
        let (prow, pb) = (self.a[r].clone(), self.b[r]);
        for i in 0..self.a.len() {
            if i == r {
                continue;
            }
            let f = self.a[i][c];
            if f == 0.0 {
                continue;
            }
            for (v, &p) in self.a[i].iter_mut().zip(&prow) {
                *v -= f * p;
                if v.abs() < 1e-14 {
                    *v = 0.0;
                }
            }
            self.a[i][c] = 0.0;
            self.b[i] -= f * pb;
            if self.b[i].abs() < 1e-14 {
                self.b[i] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs primal simplex with Bland's rule over the columns in `allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<(), LpError> {
        let ncol = cost.len();
        for _ in 0..MAX_PIVOTS {
            let mut is_basic = vec![false; ncol];
            for &bv in &self.basis {
                is_basic[bv] = true;
            }
            let entering = (0..ncol).find(|&j| {
                if !allowed[j] || is_basic[j] {
                    return false;
                }
                let d = cost[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(i, &bv)| cost[bv] * self.a[i][j])
                        .sum::<f64>();
                d < -PIVOT_EPS
            });
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let coef = self.a[i][c];
                if coef > PIVOT_EPS {
                    let ratio = self.b[i].max(0.0) / coef;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-13
                                || (ratio <= best + 1e-13 && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, c);
        }
        Err(LpError::PivotLimit)
    }
}

/// Solves `lp`, returning an optimal basic solution.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();

    // Substitute bounded variables by nonnegative ones.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut extra_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            let col = ncols;
            ncols += 1;
            if hi.is_finite() {
                extra_rows.push((vec![(col, 1.0)], hi - lo));
            }
            maps.push(VarMap { offset: lo, terms: vec![(col, 1.0)] });
        } else if hi.is_finite() {
            let col = ncols;
            ncols += 1;
            maps.push(VarMap { offset: hi, terms: vec![(col, -1.0)] });
        } else {
            let (p, m) = (ncols, ncols + 1);
            ncols += 2;
            maps.push(VarMap { offset: 0.0, terms: vec![(p, 1.0), (m, -1.0)] });
        }
    }
    let nstruct = ncols;

    let substitute = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; nstruct];
        let mut b = rhs;
        for (j, &coef) in row.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            b -= coef * maps[j].offset;
            for &(col, s) in &maps[j].terms {
                out[col] += coef * s;
            }
        }
        (out, b)
    };

    let mut rows: Vec<(Vec<f64>, f64, RowKind)> = Vec::new();
    for (row, &rhs) in lp.le_rows.iter().zip(&lp.le_rhs) {
        let (r, b) = substitute(row, rhs);
        rows.push((r, b, RowKind::Le));
    }
    for (terms, b) in extra_rows {
        let mut r = vec![0.0; nstruct];
        for (c, v) in terms {
            r[c] = v;
        }
        rows.push((r, b, RowKind::Le));
    }
    for (row, &rhs) in lp.eq_rows.iter().zip(&lp.eq_rhs) {
        let (r, b) = substitute(row, rhs);
        rows.push((r, b, RowKind::Eq));
    }
    for (r, b, kind) in rows.iter_mut() {
        if *b < 0.0 {
            r.iter_mut().for_each(|v| *v = -*v);
            *b = -*b;
            *kind = match *kind {
                RowKind::Le => RowKind::Ge,
                RowKind::Ge => RowKind::Le,
                RowKind::Eq => RowKind::Eq,
            };
        }
    }

    // Column layout: structural | slack/surplus | artificial
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.2 != RowKind::Eq).count();
    let n_art = rows.iter().filter(|r| r.2 != RowKind::Le).count();
    let total = nstruct + n_slack + n_art;
    let mut tab = Tableau {
        a: vec![vec![0.0; total]; m],
        b: vec![0.0; m],
        basis: vec![0; m],
    };
    let (mut si, mut ai) = (nstruct, nstruct + n_slack);
    for (i, (r, b, kind)) in rows.iter().enumerate() {
        tab.a[i][..nstruct].copy_from_slice(r);
        tab.b[i] = *b;
        match kind {
            RowKind::Le => {
                tab.a[i][si] = 1.0;
                tab.basis[i] = si;
                si += 1;
            }
            RowKind::Ge => {
                tab.a[i][si] = -1.0;
                si += 1;
                tab.a[i][ai] = 1.0;
                tab.basis[i] = ai;
                ai += 1;
            }
            RowKind::Eq => {
                tab.a[i][ai] = 1.0;
                tab.basis[i] = ai;
                ai += 1;
            }
        }
    }
    let is_art = |c: usize| c >= nstruct + n_slack;

    if n_art > 0 {
        let cost1: Vec<f64> = (0..total).map(|c| if is_art(c) { 1.0 } else { 0.0 }).collect();
        tab.optimize(&cost1, &vec![true; total])?;
        let infeas: f64 = tab
            .basis
            .iter()
            .zip(&tab.b)
            .filter(|(bv, _)| is_art(**bv))
            .map(|(_, &v)| v)
            .sum();
        let scale = 1.0 + rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
        if infeas > FEAS_TOL * scale {
            return Err(LpError::Infeasible);
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.a.len() {
            if is_art(tab.basis[i]) {
                let col = (0..nstruct + n_slack).find(|&c| tab.a[i][c].abs() > 1e-9);
                match col {
                    Some(c) => {
                        tab.pivot(i, c);
                        i += 1;
                    }
                    None => {
                        tab.a.remove(i);
                        tab.b.remove(i);
                        tab.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    let mut cost2 = vec![0.0; total];
    for (j, map) in maps.iter().enumerate() {
        for &(col, s) in &map.terms {
            cost2[col] += lp.objective[j] * s;
        }
    }
    let allowed: Vec<bool> = (0..total).map(|c| !is_art(c)).collect();
    tab.optimize(&cost2, &allowed)?;

    let mut y = vec![0.0; total];
    for (i, &bv) in tab.basis.iter().enumerate() {
        y[bv] = tab.b[i].max(0.0);
    }
    let z: Vec<f64> = maps
        .iter()
        .map(|m| m.offset + m.terms.iter().map(|&(c, s)| s * y[c]).sum::<f64>())
        .collect();
    let value = lp.objective.iter().zip(&z).map(|(c, v)| c * v).sum();
    Ok(LpSolution { z, value })
}
