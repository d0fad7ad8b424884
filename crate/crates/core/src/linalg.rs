//! Dense and sparse linear algebra used by the solvers: CSR operators,
//! equality-constrained quadratic programs, bound-constrained active-set
//! iterations and symmetric (generalized) eigenproblems.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// One sparse linear functional `sum_k val[k] * u[idx[k]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRow {
    pub fn new(idx: Vec<usize>, val: Vec<f64>) -> Self {
        debug_assert_eq!(idx.len(), val.len());
        Self { idx, val }
    }

    pub fn unit(i: usize) -> Self {
        Self::new(vec![i], vec![1.0])
    }

    pub fn dot(&self, u: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * u[i]).sum()
    }

    /// Largest absolute coefficient.
    pub fn scale(&self) -> f64 {
        self.val.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn from_dense(row: &[f64]) -> Self {
        let (idx, val) = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self::new(idx, val)
    }
}

/// Compressed sparse row operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    cols: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseOp {
    pub fn from_rows(cols: usize, rows: Vec<SparseRow>) -> Self {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        ptr.push(0);
        for r in rows {
            idx.extend(r.idx);
            val.extend(r.val);
            ptr.push(idx.len());
        }
        Self {
            cols,
            ptr,
            idx,
            val,
        }
    }

    pub fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.ptr[r], self.ptr[r + 1]);
        (&self.idx[a..b], &self.val[a..b])
    }

    pub fn row_dot(&self, r: usize, u: &[f64]) -> f64 {
        let (c, v) = self.row(r);
        c.iter().zip(v).map(|(&i, w)| w * u[i]).sum()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.rows()).map(|r| self.row_dot(r, u)).collect()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, yr) in y.iter().enumerate() {
            let (c, v) = self.row(r);
            for (&i, w) in c.iter().zip(v) {
                out[i] += w * yr;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows(), self.cols);
        for r in 0..self.rows() {
            let (c, v) = self.row(r);
            for (&i, w) in c.iter().zip(v) {
                m[(r, i)] += w;
            }
        }
        m
    }
}

/// Linear equality constraints `row_r . u = rhs[(r, j)]` for each right-hand
/// side column `j`.
#[derive(Debug, Clone)]
pub struct Constraints {
    pub n: usize,
    pub rows: Vec<SparseRow>,
    pub rhs: DMatrix<f64>,
}

impl Constraints {
    pub fn homogeneous(n: usize, rows: Vec<SparseRow>, nrhs: usize) -> Self {
        let m = rows.len();
        Self {
            n,
            rows,
            rhs: DMatrix::zeros(m, nrhs),
        }
    }

    pub fn nrhs(&self) -> usize {
        self.rhs.ncols()
    }

    /// Appends rows with their right-hand sides (`values` is `k x nrhs`).
    pub fn push_rows(&mut self, rows: Vec<SparseRow>, values: &DMatrix<f64>) {
        debug_assert_eq!(rows.len(), values.nrows());
        let old = self.rows.len();
        let mut rhs = DMatrix::zeros(old + rows.len(), self.nrhs());
        rhs.rows_mut(0, old).copy_from(&self.rhs);
        rhs.rows_mut(old, rows.len()).copy_from(values);
        self.rows.extend(rows);
        self.rhs = rhs;
    }

    /// Largest normalized residual of column `j` of `u`.
    pub fn max_violation(&self, u: &[f64], j: usize) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let s = row.scale().max(f64::MIN_POSITIVE);
                (row.dot(u) - self.rhs[(r, j)]).abs() / s
            })
            .fold(0.0, f64::max)
    }
}

/// Result of an equality-constrained quadratic solve.
#[derive(Debug, Clone)]
pub struct EqpSolution {
    /// One minimizer per right-hand side column (`n x nrhs`).
    pub u: DMatrix<f64>,
    /// Whether each column's constraints were consistent.
    pub feasible: Vec<bool>,
    /// Largest normalized constraint residual per column.
    pub residual: Vec<f64>,
    /// Multipliers of the coupled (non-eliminated) rows, per column.
    pub multipliers: DMatrix<f64>,
    /// Original indices of the coupled rows.
    pub coupled_rows: Vec<usize>,
    /// Variables fixed by single-variable elimination.
    pub fixed: Vec<bool>,
}

/// Tolerance on normalized constraint residuals.
pub const FEAS_TOL: f64 = 1e-9;

/// Minimizes `1/2 u'Au + g_j'u` subject to `rows u = rhs_j` for every
/// column `j`.
///
/// Rows that pin a single variable (after substituting already pinned ones)
/// are eliminated directly; the remaining coupled rows are handled through
/// an augmented-Lagrangian KKT solve with a Schur complement.
pub fn solve_eqp(a: &DMatrix<f64>, g: &DMatrix<f64>, cons: &Constraints) -> Result<EqpSolution> {
    let n = a.nrows();
    let nrhs = g.ncols();
    if cons.nrhs() != nrhs || cons.n != n || g.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cons.n,
        });
    }
    // Normalize rows to unit max-coefficient.
    let rows: Vec<(SparseRow, DVector<f64>)> = cons
        .rows
        .iter()
        .enumerate()
        .filter_map(|(r, row)| {
            let s = row.scale();
            (s > 0.0).then(|| {
                let row = SparseRow::new(row.idx.clone(), row.val.iter().map(|v| v / s).collect());
                let rhs = DVector::from_iterator(nrhs, (0..nrhs).map(|j| cons.rhs[(r, j)] / s));
                (row, rhs)
            })
        })
        .collect();
    let row_orig: Vec<usize> = cons
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.scale() > 0.0)
        .map(|(i, _)| i)
        .collect();

    let mut fixed: Vec<Option<DVector<f64>>> = vec![None; n];
    let mut consumed = vec![false; rows.len()];
    let mut infeasible = vec![0.0f64; nrhs];
    let coef_tol = 1e-13;
    loop {
        let mut changed = false;
        for (r, (row, rhs)) in rows.iter().enumerate() {
            if consumed[r] {
                continue;
            }
            let mut free = Vec::new();
            let mut acc = rhs.clone();
            for (&i, &v) in row.idx.iter().zip(&row.val) {
                if v.abs() <= coef_tol {
                    continue;
                }
                match &fixed[i] {
                    Some(x) => acc -= x * v,
                    None => free.push((i, v)),
                }
            }
            match free.len() {
                0 => {
                    consumed[r] = true;
                    for j in 0..nrhs {
                        infeasible[j] = infeasible[j].max(acc[j].abs());
                    }
                }
                1 => {
                    let (i, v) = free[0];
                    fixed[i] = Some(acc / v);
                    consumed[r] = true;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }

    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        pos[i] = k;
    }
    let nf = free.len();
    let mut u = DMatrix::zeros(n, nrhs);
    for (i, x) in fixed.iter().enumerate() {
        if let Some(x) = x {
            u.row_mut(i).copy_from(&x.transpose());
        }
    }

    let coupled: Vec<usize> = (0..rows.len()).filter(|&r| !consumed[r]).collect();
    let nc = coupled.len();
    let mut multipliers = DMatrix::zeros(nc, nrhs);

    if nf > 0 {
        // Reduced Hessian and gradient with fixed variables substituted.
        let h = DMatrix::from_fn(nf, nf, |r, c| a[(free[r], free[c])]);
        let mut gt = DMatrix::from_fn(nf, nrhs, |r, j| g[(free[r], j)]);
        let fixed_idx: Vec<usize> = (0..n).filter(|&i| fixed[i].is_some()).collect();
        if !fixed_idx.is_empty() {
            for (r, &fi) in free.iter().enumerate() {
                for &xi in &fixed_idx {
                    let aij = a[(fi, xi)];
                    if aij != 0.0 {
                        for j in 0..nrhs {
                            gt[(r, j)] += aij * u[(xi, j)];
                        }
                    }
                }
            }
        }
        let z = if nc == 0 {
            let chol = Cholesky::new(h)
                .ok_or_else(|| Error::Singular("reduced quadratic form is not definite".into()))?;
            -chol.solve(&gt)
        } else {
            let mut c = DMatrix::zeros(nc, nf);
            let mut b = DMatrix::zeros(nc, nrhs);
            for (k, &r) in coupled.iter().enumerate() {
                let (row, rhs) = &rows[r];
                let mut acc = rhs.clone();
                for (&i, &v) in row.idx.iter().zip(&row.val) {
                    match &fixed[i] {
                        Some(x) => acc -= x * v,
                        None => c[(k, pos[i])] += v,
                    }
                }
                b.row_mut(k).copy_from(&acc.transpose());
            }
            let h_scale = (0..nf).map(|i| h[(i, i)].abs()).sum::<f64>() / nf as f64;
            let c_scale = c.norm_squared() / nc as f64;
            let rho = if c_scale > 0.0 { h_scale.max(1e-300) / c_scale } else { 1.0 };
            let m = &h + c.transpose() * &c * rho;
            let chol = Cholesky::new(m)
                .ok_or_else(|| Error::Singular("augmented quadratic form is not definite".into()))?;
            let gp = &gt - c.transpose() * &b * rho;
            let y = chol.solve(&c.transpose());
            let s = &c * &y;
            let w = chol.solve(&gp);
            let t = -(&b) - &c * &w;
            let nu = pinv_solve(&s, &t, 1e-11);
            multipliers = nu.clone();
            -w - y * nu
        };
        for (k, &i) in free.iter().enumerate() {
            for j in 0..nrhs {
                u[(i, j)] = z[(k, j)];
            }
        }
    }

    let mut residual = vec![0.0; nrhs];
    let mut feasible = vec![true; nrhs];
    for j in 0..nrhs {
        let col: Vec<f64> = u.column(j).iter().copied().collect();
        let res = rows
            .iter()
            .map(|(row, rhs)| (row.dot(&col) - rhs[j]).abs())
            .fold(infeasible[j], f64::max);
        let scale = rows
            .iter()
            .map(|(_, rhs)| rhs[j].abs())
            .fold(1.0, f64::max);
        residual[j] = res;
        feasible[j] = res <= 1e-7 * scale && col.iter().all(|v| v.is_finite());
    }
    let fixed_flags = fixed.iter().map(Option::is_some).collect();
    Ok(EqpSolution {
        u,
        feasible,
        residual,
        multipliers,
        coupled_rows: coupled.iter().map(|&r| row_orig[r]).collect(),
        fixed: fixed_flags,
    })
}

/// Least-squares/minimum-norm solve of a small symmetric system.
pub fn pinv_solve(s: &DMatrix<f64>, rhs: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = SVD::new(s.clone(), true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let u = svd.u.as_ref().expect("u");
    let vt = svd.v_t.as_ref().expect("v_t");
    let mut out = DMatrix::zeros(s.ncols(), rhs.ncols());
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv > rel_tol * smax && sv > 0.0 {
            let coef = u.column(k).transpose() * rhs / sv;
            out += vt.row(k).transpose() * coef;
        }
    }
    out
}

/// Orthonormal basis of the null space of `c` (`n x r`).
pub fn nullspace(c: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if c.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // SVD of the square padding of c' gives a full left basis.
    let mut ct = DMatrix::zeros(n, n.max(c.nrows()));
    ct.columns_mut(0, c.nrows()).copy_from(&c.transpose());
    let svd = SVD::new(ct, true, false);
    let u = svd.u.expect("u");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let tol = 1e-10 * smax.max(1e-300);
    let cols: Vec<usize> = (0..n)
        .filter(|&k| k >= svd.singular_values.len() || svd.singular_values[k] <= tol)
        .collect();
    DMatrix::from_fn(n, cols.len(), |r, k| u[(r, cols[k])])
}

/// Eigenvalues (ascending) and eigenvectors of the symmetric pencil
/// `a x = lambda b x` with `b` positive definite. Eigenvectors are
/// `b`-orthonormal.
pub fn gen_sym_eig(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let chol = Cholesky::new(b.clone())
        .ok_or_else(|| Error::Eigen("right-hand matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
    let s = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::Eigen("triangular solve failed".into()))?;
    let s = (&s + s.transpose()) * 0.5;
    let (vals, vecs) = sym_eig(&s)?;
    let x = l
        .transpose()
        .solve_upper_triangular(&vecs)
        .ok_or_else(|| Error::Eigen("back substitution failed".into()))?;
    Ok((vals, x))
}

/// Eigen-decomposition of a symmetric matrix, sorted ascending.
pub fn sym_eig(s: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entries".into()));
    }
    let eig = SymmetricEigen::new(s.clone());
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(s.nrows(), s.ncols(), |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((vals, vecs))
}

/// A quadratic program with node lower bounds:
/// minimize `1/2 u'Au + g'u` subject to `eq` and `u_i >= l_i` for the listed
/// bounds.
#[derive(Debug, Clone)]
pub struct BoundQp<'a> {
    pub a: &'a DMatrix<f64>,
    pub g: &'a DVector<f64>,
    pub eq: &'a Constraints,
    pub lower: &'a [(usize, f64)],
}

/// Outcome of a bound-constrained solve.
#[derive(Debug, Clone)]
pub struct BoundQpSolution {
    pub u: DVector<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest bound violation of the returned point.
    pub bound_violation: f64,
    pub eq_residual: f64,
}

impl BoundQp<'_> {
    fn solve_with(&self, active: &[bool]) -> Result<(DVector<f64>, bool, f64, EqpSolution)> {
        let mut cons = self.eq.clone();
        let mut extra = Vec::new();
        let mut vals = Vec::new();
        for (k, &(i, l)) in self.lower.iter().enumerate() {
            if active[k] {
                extra.push(SparseRow::unit(i));
                vals.push(l);
            }
        }
        let values = DMatrix::from_column_slice(vals.len(), 1, &vals);
        cons.push_rows(extra, &values);
        let g = DMatrix::from_column_slice(self.g.len(), 1, self.g.as_slice());
        let sol = solve_eqp(self.a, &g, &cons)?;
        let u = sol.u.column(0).into_owned();
        Ok((u, sol.feasible[0], sol.residual[0], sol))
    }

    /// Multipliers of the active bounds: gradient plus coupled-row terms.
    fn multipliers(&self, u: &DVector<f64>, sol: &EqpSolution) -> Vec<f64> {
        let grad = self.a * u + self.g;
        let mut grad: Vec<f64> = grad.iter().copied().collect();
        for (k, &r) in sol.coupled_rows.iter().enumerate() {
            if r >= self.eq.rows.len() {
                continue;
            }
            let row = &self.eq.rows[r];
            let s = row.scale();
            let nu = sol.multipliers[(k, 0)];
            for (&i, &v) in row.idx.iter().zip(&row.val) {
                grad[i] += nu * v / s;
            }
        }
        self.lower.iter().map(|&(i, _)| grad[i]).collect()
    }

    fn violation(&self, u: &DVector<f64>) -> f64 {
        self.lower
            .iter()
            .map(|&(i, l)| (l - u[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Primal active-set iteration from a working set whose equality solve
    /// is feasible for every bound.
    pub fn solve_primal(&self, start: Vec<bool>, max_iter: usize) -> Result<BoundQpSolution> {
        let mut active = start;
        let (mut x, ok, _, _) = self.solve_with(&active)?;
        if !ok {
            return Err(Error::Infeasible("starting working set".into()));
        }
        let tol = 1e-10 * (1.0 + x.amax());
        if self.violation(&x) > tol {
            return Err(Error::Infeasible("starting point violates bounds".into()));
        }
        for iter in 0..max_iter {
            let (xh, ok, _, sol) = self.solve_with(&active)?;
            if !ok {
                return Err(Error::Infeasible("working set became inconsistent".into()));
            }
            let step = &xh - &x;
            if step.amax() <= 1e-12 * (1.0 + x.amax()) {
                x = xh;
                let lam = self.multipliers(&x, &sol);
                let worst = (0..lam.len())
                    .filter(|&k| active[k])
                    .min_by(|&a, &b| lam[a].total_cmp(&lam[b]));
                let lam_tol = 1e-9 * (1.0 + lam.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                match worst {
                    Some(k) if lam[k] < -lam_tol => active[k] = false,
                    _ => {
                        return Ok(BoundQpSolution {
                            bound_violation: self.violation(&x),
                            eq_residual: self.eq.max_violation(x.as_slice(), 0),
                            u: x,
                            active,
                            iterations: iter + 1,
                            converged: true,
                        })
                    }
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for (k, &(i, l)) in self.lower.iter().enumerate() {
                if !active[k] && step[i] < 0.0 {
                    let t = (l - x[i]) / step[i];
                    if t < alpha {
                        alpha = t.max(0.0);
                        blocking = Some(k);
                    }
                }
            }
            x += step * alpha;
            if let Some(k) = blocking {
                active[k] = true;
            }
        }
        Ok(BoundQpSolution {
            bound_violation: self.violation(&x),
            eq_residual: self.eq.max_violation(x.as_slice(), 0),
            u: x,
            active,
            iterations: max_iter,
            converged: false,
        })
    }

    /// Primal-dual active-set iteration; needs no feasible start. Stops on a
    /// repeated working set.
    pub fn solve_pdas(&self, start: Vec<bool>, max_iter: usize) -> Result<BoundQpSolution> {
        let mut active = start;
        let mut seen: Vec<Vec<bool>> = Vec::new();
        let mut last = None;
        for iter in 0..max_iter {
            let (u, ok, _, sol) = self.solve_with(&active)?;
            if !ok {
                // Too many active bounds for the equalities: release all.
                if active.iter().any(|&a| a) && !seen.iter().any(|s| s.iter().all(|&a| !a)) {
                    seen.push(active.clone());
                    active = vec![false; active.len()];
                    continue;
                }
                return Err(Error::Infeasible("bound-constrained equalities".into()));
            }
            let lam = self.multipliers(&u, &sol);
            let scale = 1e-10 * (1.0 + u.amax());
            let next: Vec<bool> = self
                .lower
                .iter()
                .enumerate()
                .map(|(k, &(i, l))| {
                    if active[k] {
                        lam[k] > -scale
                    } else {
                        u[i] < l - scale
                    }
                })
                .collect();
            let done = next == active;
            last = Some((u, iter + 1));
            if done {
                let (u, iterations) = last.expect("set");
                return Ok(BoundQpSolution {
                    bound_violation: self.violation(&u),
                    eq_residual: self.eq.max_violation(u.as_slice(), 0),
                    u,
                    active,
                    iterations,
                    converged: true,
                });
            }
            if seen.contains(&next) {
                break;
            }
            seen.push(active);
            active = next;
        }
        let (u, iterations) = last.ok_or(Error::NonConvergence {
            iterations: max_iter,
            context: "primal-dual active set".into(),
        })?;
        Ok(BoundQpSolution {
            bound_violation: self.violation(&u),
            eq_residual: self.eq.max_violation(u.as_slice(), 0),
            u,
            active,
            iterations,
            converged: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eqp_matches_dense_kkt() {
        // min 1/2 u'Au - b'u  s.t. u0 + u1 + u2 = 1, u3 = 0.5
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, 1.0, 0.0, 0.0, 1.0, 3.0, 1.0, 0.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.0, 0.5, 1.0,
            ],
        );
        let g = DMatrix::from_column_slice(4, 1, &[-1.0, 0.0, 1.0, 0.0]);
        let mut cons = Constraints::homogeneous(4, vec![], 1);
        cons.push_rows(
            vec![
                SparseRow::new(vec![0, 1, 2], vec![1.0, 1.0, 1.0]),
                SparseRow::unit(3),
            ],
            &DMatrix::from_column_slice(2, 1, &[1.0, 0.5]),
        );
        let sol = solve_eqp(&a, &g, &cons).unwrap();
        // Independent dense KKT.
        let mut k = DMatrix::zeros(6, 6);
        k.view_mut((0, 0), (4, 4)).copy_from(&a);
        for j in 0..3 {
            k[(4, j)] = 1.0;
            k[(j, 4)] = 1.0;
        }
        k[(5, 3)] = 1.0;
        k[(3, 5)] = 1.0;
        let rhs = DVector::from_column_slice(&[1.0, 0.0, -1.0, 0.0, 1.0, 0.5]);
        let x = k.lu().solve(&rhs).unwrap();
        for i in 0..4 {
            assert!((sol.u[(i, 0)] - x[i]).abs() < 1e-10);
        }
        assert!(sol.feasible[0]);
    }

    #[test]
    fn eqp_detects_inconsistency() {
        let a = DMatrix::identity(2, 2);
        let g = DMatrix::zeros(2, 1);
        let mut cons = Constraints::homogeneous(2, vec![], 1);
        cons.push_rows(
            vec![SparseRow::unit(0), SparseRow::unit(0)],
            &DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
        );
        let sol = solve_eqp(&a, &g, &cons).unwrap();
        assert!(!sol.feasible[0]);
    }

    #[test]
    fn redundant_coupled_rows_are_tolerated() {
        let a = DMatrix::identity(3, 3);
        let g = DMatrix::zeros(3, 1);
        let mut cons = Constraints::homogeneous(3, vec![], 1);
        cons.push_rows(
            vec![
                SparseRow::new(vec![0, 1], vec![1.0, 1.0]),
                SparseRow::new(vec![0, 1], vec![2.0, 2.0]),
            ],
            &DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
        );
        let sol = solve_eqp(&a, &g, &cons).unwrap();
        assert!(sol.feasible[0]);
        assert!((sol.u[(0, 0)] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn nullspace_is_orthonormal_and_annihilated() {
        let c = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0]);
        let z = nullspace(&c, 4);
        assert_eq!(z.ncols(), 2);
        assert!((&c * &z).amax() < 1e-12);
        assert!((z.transpose() * &z - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn generalized_eigen_of_diagonal_pencil() {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 6.0]));
        let b = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0]));
        let (vals, _) = gen_sym_eig(&a, &b).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bound_qp_releases_wrong_bounds() {
        // min 1/2|u - t|^2 with u >= 0, t = (1, -1): solution (1, 0).
        let a = DMatrix::identity(2, 2);
        let g = DVector::from_column_slice(&[-1.0, 1.0]);
        let eq = Constraints::homogeneous(2, vec![], 1);
        let lower = [(0, 0.0), (1, 0.0)];
        let qp = BoundQp {
            a: &a,
            g: &g,
            eq: &eq,
            lower: &lower,
        };
        for sol in [
            qp.solve_primal(vec![true, true], 50).unwrap(),
            qp.solve_pdas(vec![false, false], 50).unwrap(),
        ] {
            assert!(sol.converged);
            assert!((sol.u[0] - 1.0).abs() < 1e-12 && sol.u[1].abs() < 1e-12);
            assert_eq!(sol.active, vec![false, true]);
        }
    }
}
