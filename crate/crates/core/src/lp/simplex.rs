//! Dense two-phase revised simplex with Bland's rule.
//!
//! The problem is first rewritten as `A z = b, z >= 0, b >= 0`: bounded
//! variables are shifted (and reflected when only an upper bound is finite),
//! free variables are split, finite upper bounds become rows, and each row
//! gets a slack or surplus column plus an artificial column where no slack
//! can start in the basis. The basis inverse is kept explicitly and rebuilt
//! from scratch every `REFACTOR_EVERY` pivots.

use super::{LpError, LpProblem, LpSolution, LpStatus, Relation};

/// Pivot cap across both phases.
pub const MAX_ITERATIONS: usize = 1_000_000;

const REFACTOR_EVERY: usize = 50;
const REDUCED_COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const PHASE_ONE_TOL: f64 = 1e-8;

/// `x_j = offset + sum(sign * z_col)`.
#[derive(Debug, Clone)]
struct VarMap {
    offset: f64,
    terms: Vec<(usize, f64)>,
}

struct StandardForm {
    m: usize,
    /// Column-major constraint matrix including slack and artificial columns.
    cols: Vec<Vec<f64>>,
    cost: Vec<f64>,
    b: Vec<f64>,
    first_artificial: usize,
    initial_basis: Vec<usize>,
    vars: Vec<VarMap>,
}

impl StandardForm {
    /// `None` when some variable has an empty bound interval.
    fn build(problem: &LpProblem) -> Option<Self> {
        let n = problem.num_vars();
        let mut vars = Vec::with_capacity(n);
        let mut cost = Vec::new();
        // Extra rows `z_col <= width` from doubly bounded variables.
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();

        for j in 0..n {
            let (lo, hi) = (problem.lower[j], problem.upper[j]);
            if lo > hi {
                return None;
            }
            let col = cost.len();
            let c = problem.objective[j];
            let map = if lo.is_finite() {
                cost.push(c);
                if hi.is_finite() {
                    bound_rows.push((col, hi - lo));
                }
                VarMap { offset: lo, terms: vec![(col, 1.0)] }
            } else if hi.is_finite() {
                cost.push(-c);
                VarMap { offset: hi, terms: vec![(col, -1.0)] }
            } else {
                cost.push(c);
                cost.push(-c);
                VarMap { offset: 0.0, terms: vec![(col, 1.0), (col + 1, -1.0)] }
            };
            vars.push(map);
        }
        let n_struct = cost.len();

        // Rows over the structural columns, before sign normalization.
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
        for ((coefs, &rel), &rhs) in problem.rows.iter().zip(&problem.relations).zip(&problem.rhs) {
            let mut row = vec![0.0; n_struct];
            let mut b = rhs;
            for (a, map) in coefs.iter().zip(&vars) {
                if *a == 0.0 {
                    continue;
                }
                b -= a * map.offset;
                for &(col, sign) in &map.terms {
                    row[col] += a * sign;
                }
            }
            rows.push((row, rel, b));
        }
        for &(col, width) in &bound_rows {
            let mut row = vec![0.0; n_struct];
            row[col] = 1.0;
            rows.push((row, Relation::Le, width));
        }
        // Rows with a zero right-hand side are written as `<=` so that their
        // slack can start in the basis.
        for (row, rel, b) in rows.iter_mut() {
            if *b < 0.0 || (*b == 0.0 && *rel == Relation::Ge) {
                row.iter_mut().for_each(|a| *a = -*a);
                *b = -*b + 0.0;
                *rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }

        let m = rows.len();
        let mut cols: Vec<Vec<f64>> = (0..n_struct)
            .map(|j| rows.iter().map(|(r, _, _)| r[j]).collect())
            .collect();
        let mut initial_basis = vec![usize::MAX; m];
        for (i, (_, rel, _)) in rows.iter().enumerate() {
            let sign = match rel {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => continue,
            };
            let mut col = vec![0.0; m];
            col[i] = sign;
            if *rel == Relation::Le {
                initial_basis[i] = cols.len();
            }
            cols.push(col);
            cost.push(0.0);
        }
        let first_artificial = cols.len();
        for i in 0..m {
            if initial_basis[i] == usize::MAX {
                let mut col = vec![0.0; m];
                col[i] = 1.0;
                initial_basis[i] = cols.len();
                cols.push(col);
                cost.push(0.0);
            }
        }
        let b = rows.into_iter().map(|(_, _, b)| b).collect();
        Some(Self { m, cols, cost, b, first_artificial, initial_basis, vars })
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Tableau<'a> {
    form: &'a StandardForm,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Row-major `m x m` basis inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Tableau<'a> {
    fn new(form: &'a StandardForm) -> Self {
        let m = form.m;
        let mut is_basic = vec![false; form.cols.len()];
        for &j in &form.initial_basis {
            is_basic[j] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Self {
            form,
            basis: form.initial_basis.clone(),
            is_basic,
            binv,
            xb: form.b.clone(),
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let m = self.form.m;
        let mut out = vec![0.0; m];
        for (k, &a) in col.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.binv[i * m + k] * a;
            }
        }
        out
    }

    fn prices(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.form.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let cb = cost[j];
            if cb == 0.0 {
                continue;
            }
            let row = &self.binv[i * m..(i + 1) * m];
            for (yk, &r) in y.iter_mut().zip(row) {
                *yk += cb * r;
            }
        }
        y
    }

    fn pivot(&mut self, row: usize, entering: usize, alpha: &[f64]) -> Result<(), LpError> {
        let m = self.form.m;
        let leaving = self.basis[row];
        let p = alpha[row];
        for k in 0..m {
            self.binv[row * m + k] /= p;
        }
        self.xb[row] /= p;
        for (i, &f) in alpha.iter().enumerate() {
            if i == row || f == 0.0 {
                continue;
            }
            for k in 0..m {
                self.binv[i * m + k] -= f * self.binv[row * m + k];
            }
            self.xb[i] -= f * self.xb[row];
        }
        self.basis[row] = entering;
        self.is_basic[leaving] = false;
        self.is_basic[entering] = true;
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Rebuild the basis inverse by Gauss-Jordan elimination with partial
    /// pivoting, then recompute the basic values.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.form.m;
        let mut a = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for (r, &v) in self.form.cols[j].iter().enumerate() {
                a[r * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))
                .expect("nonempty range");
            if a[p * m + c].abs() < 1e-13 {
                return Err(LpError::Shape("basis matrix became singular".into()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        self.binv = inv;
        self.xb = self.ftran(&self.form.b);
        self.since_refactor = 0;
        Ok(())
    }

    fn run(&mut self, cost: &[f64], allow_artificial: bool) -> Result<PhaseEnd, LpError> {
        let ncols = if allow_artificial { self.form.cols.len() } else { self.form.first_artificial };
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(LpError::IterationLimit(MAX_ITERATIONS));
            }
            let y = self.prices(cost);
            // Bland: lowest-index column with a negative reduced cost.
            let entering = (0..ncols).find(|&j| {
                !self.is_basic[j] && {
                    let col = &self.form.cols[j];
                    let d = cost[j] - y.iter().zip(col).map(|(a, b)| a * b).sum::<f64>();
                    d < -REDUCED_COST_TOL
                }
            });
            let Some(entering) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            let alpha = self.ftran(&self.form.cols[entering]);

            // Ratio test; ties go to the lowest-index basic variable.
            let mut leave: Option<(usize, f64)> = None;
            for (i, &a) in alpha.iter().enumerate() {
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.xb[i].max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * best.abs().max(1.0);
                        if ratio < best && !tie || tie && self.basis[i] < self.basis[r] {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((row, _)) = leave else {
                return Ok(PhaseEnd::Unbounded);
            };
            self.pivot(row, entering, &alpha)?;
        }
    }

    /// Pivot basic artificials (at level zero) out wherever a nonzero
    /// non-artificial entry exists in their row. Rows where none exists are
    /// redundant and keep their artificial.
    fn expel_artificials(&mut self) -> Result<(), LpError> {
        let m = self.form.m;
        for row in 0..m {
            if self.basis[row] < self.form.first_artificial {
                continue;
            }
            let binv_row: Vec<f64> = self.binv[row * m..(row + 1) * m].to_vec();
            let candidate = (0..self.form.first_artificial).find(|&j| {
                !self.is_basic[j]
                    && binv_row.iter().zip(&self.form.cols[j]).map(|(a, b)| a * b).sum::<f64>().abs()
                        > PIVOT_TOL
            });
            if let Some(j) = candidate {
                let alpha = self.ftran(&self.form.cols[j]);
                self.pivot(row, j, &alpha)?;
            }
        }
        Ok(())
    }

    fn column_values(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.form.cols.len()];
        for (i, &j) in self.basis.iter().enumerate() {
            z[j] = self.xb[i].max(0.0);
        }
        z
    }
}

/// Solve `problem` to optimality, or report it infeasible or unbounded.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let n = problem.num_vars();
    let Some(form) = StandardForm::build(problem) else {
        return Ok(status_only(LpStatus::Infeasible, n, 0));
    };

    let mut tableau = Tableau::new(&form);
    if form.first_artificial < form.cols.len() {
        let mut phase_one = vec![0.0; form.cols.len()];
        phase_one[form.first_artificial..].iter_mut().for_each(|c| *c = 1.0);
        tableau.run(&phase_one, true)?;
        tableau.refactor()?;
        let infeasibility: f64 = tableau
            .basis
            .iter()
            .zip(&tableau.xb)
            .filter(|(&j, _)| j >= form.first_artificial)
            .map(|(_, &v)| v.max(0.0))
            .sum();
        let scale = 1.0 + form.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if infeasibility > PHASE_ONE_TOL * scale {
            return Ok(status_only(LpStatus::Infeasible, n, tableau.iterations));
        }
        tableau.expel_artificials()?;
    }

    if let PhaseEnd::Unbounded = tableau.run(&form.cost, false)? {
        return Ok(status_only(LpStatus::Unbounded, n, tableau.iterations));
    }
    tableau.refactor()?;

    let z = tableau.column_values();
    let point: Vec<f64> = form
        .vars
        .iter()
        .map(|map| map.offset + map.terms.iter().map(|&(c, s)| s * z[c]).sum::<f64>())
        .collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        value: problem.objective_value(&point),
        point,
        iterations: tableau.iterations,
    })
}

fn status_only(status: LpStatus, n: usize, iterations: usize) -> LpSolution {
    LpSolution { status, value: f64::NAN, point: vec![f64::NAN; n], iterations }
}
