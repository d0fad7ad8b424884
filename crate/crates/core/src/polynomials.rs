//! Polynomial spaces over centered monomials, seminorm-ladder projections
//! and the deviation of point sets from polynomial zero sets.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{multi_indices, MultiIndex, OrderOps};
use crate::error::{Error, Result};
use crate::grid::{GridCube, GridFunction, Lattice};
use crate::optim::NelderMead;

/// `dim P_k` in `N` variables.
pub fn basis_dim(dim: usize, k: usize) -> usize {
    let mut c = 1usize;
    for i in 1..=k {
        c = c * (dim + i) / i;
    }
    c
}

/// Monomial exponents of order `<= k`, graded by order, lexicographically
/// descending within an order.
pub fn monomials(dim: usize, k: usize) -> Vec<MultiIndex> {
    (0..=k).flat_map(|o| multi_indices(dim, o)).collect()
}

fn monomial_value(alpha: &MultiIndex, x: &[f64]) -> f64 {
    alpha
        .0
        .iter()
        .zip(x)
        .map(|(&a, &xi)| xi.powi(a as i32))
        .product()
}

/// A polynomial of degree `<= degree` in centered coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    dim: usize,
    degree: usize,
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn zero(dim: usize, degree: usize) -> Self {
        Self {
            dim,
            degree,
            coeffs: vec![0.0; basis_dim(dim, degree)],
        }
    }

    pub fn new(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        let d = basis_dim(dim, degree);
        if coeffs.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: coeffs.len(),
            });
        }
        Ok(Self { dim, degree, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn monomials(&self) -> Vec<MultiIndex> {
        monomials(self.dim, self.degree)
    }

    /// Value at a point given relative to the expansion center.
    pub fn eval_at(&self, x: &[f64]) -> f64 {
        self.monomials()
            .iter()
            .zip(&self.coeffs)
            .map(|(a, c)| c * monomial_value(a, x))
            .sum()
    }

    fn keep(&self, pred: impl Fn(usize) -> bool) -> Self {
        let coeffs = self
            .monomials()
            .iter()
            .zip(&self.coeffs)
            .map(|(a, &c)| if pred(a.order()) { c } else { 0.0 })
            .collect();
        Self {
            dim: self.dim,
            degree: self.degree,
            coeffs,
        }
    }

    /// Terms of order `<= k`.
    pub fn degree_part(&self, k: usize) -> Self {
        self.keep(|o| o <= k)
    }

    /// Terms of order `> k`.
    pub fn complement_part(&self, k: usize) -> Self {
        self.keep(|o| o > k)
    }

    /// Terms of order `1..=k`.
    pub fn prime_part(&self, k: usize) -> Self {
        self.keep(|o| o >= 1 && o <= k)
    }

    /// Same polynomial with the degree bound lowered to `k`, dropping higher
    /// terms.
    pub fn truncate(&self, k: usize) -> Self {
        let k = k.min(self.degree);
        Self {
            dim: self.dim,
            degree: k,
            coeffs: self.coeffs[..basis_dim(self.dim, k)].to_vec(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim || self.degree != other.degree {
            return Err(Error::DimensionMismatch {
                expected: self.coeffs.len(),
                got: other.coeffs.len(),
            });
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self {
            coeffs,
            ..self.clone()
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            ..self.clone()
        }
    }
}

/// Values of every monomial at every lattice node (`nodes x basis`),
/// centered at `center`.
pub fn basis_matrix(lattice: &Lattice, center: &[f64], k: usize) -> DMatrix<f64> {
    let mons = monomials(lattice.dim(), k);
    let mut b = DMatrix::zeros(lattice.len(), mons.len());
    let mut x = vec![0.0; lattice.dim()];
    for i in 0..lattice.len() {
        for (a, xa) in x.iter_mut().enumerate() {
            *xa = lattice.coord(i, a) - center[a];
        }
        for (j, m) in mons.iter().enumerate() {
            b[(i, j)] = monomial_value(m, &x);
        }
    }
    b
}

/// Evaluates `P` on every node of `grid`, centered at the grid center.
pub fn eval_poly(poly: &Polynomial, grid: &GridCube) -> Result<GridFunction> {
    if poly.dim != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: poly.dim,
        });
    }
    let b = basis_matrix(&grid.lattice(), grid.center(), poly.degree);
    let c = DVector::from_column_slice(&poly.coeffs);
    GridFunction::new(grid, (b * c).iter().copied().collect())
}

/// Outcome of a projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub projection: Polynomial,
    /// `||grad^i (u - Pi u)||_p` for `i = 0..=r`.
    pub residuals: Vec<f64>,
    pub condition: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Precomputed linear projection onto `P_r` for a fixed lattice and weight
/// ladder (the `p = 2` surrogate). Reusable across many inputs.
#[derive(Debug, Clone)]
pub struct Projector {
    dim: usize,
    degree: usize,
    weights: Vec<f64>,
    basis: DMatrix<f64>,
    normal: DMatrix<f64>,
    map: DMatrix<f64>,
    ops: Vec<OrderOps>,
    condition: f64,
}

impl Projector {
    /// `weights[i]` scales the order-`i` term; `None` means all ones.
    pub fn new(lattice: &Lattice, center: &[f64], r: usize, weights: Option<&[f64]>) -> Result<Self> {
        let weights = match weights {
            Some(w) if w.len() != r + 1 => {
                return Err(Error::DimensionMismatch {
                    expected: r + 1,
                    got: w.len(),
                })
            }
            Some(w) if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) => {
                return Err(Error::InvalidParameter("projection weights must be positive".into()))
            }
            Some(w) => w.to_vec(),
            None => vec![1.0; r + 1],
        };
        let basis = basis_matrix(lattice, center, r);
        let d = basis.ncols();
        let n = lattice.len();
        let ops = (0..=r)
            .map(|i| OrderOps::new(lattice, i, None))
            .collect::<Result<Vec<_>>>()?;
        let mut normal = DMatrix::zeros(d, d);
        let mut bt = DMatrix::zeros(d, n);
        for (i, oo) in ops.iter().enumerate() {
            let s = weights[i] * weights[i] * oo.weight;
            for (_, op, keep) in &oo.ops {
                for &row in keep {
                    let (cols, vals) = op.row(row);
                    let phi: Vec<f64> = (0..d)
                        .map(|j| cols.iter().zip(vals).map(|(&c, v)| v * basis[(c, j)]).sum())
                        .collect();
                    for a in 0..d {
                        for b in 0..d {
                            normal[(a, b)] += s * phi[a] * phi[b];
                        }
                    }
                    for (&c, &v) in cols.iter().zip(vals) {
                        for a in 0..d {
                            bt[(a, c)] += s * v * phi[a];
                        }
                    }
                }
            }
        }
        let eig = normal.clone().symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        let chol = Cholesky::new(normal.clone())
            .filter(|_| condition < 1e14)
            .ok_or_else(|| Error::Singular(format!("projection normal system of degree {r}")))?;
        let map = chol.solve(&bt);
        Ok(Self {
            dim: lattice.dim(),
            degree: r,
            weights,
            basis,
            normal,
            map,
            ops,
            condition,
        })
    }

    pub fn for_grid(grid: &GridCube, r: usize, weights: Option<&[f64]>) -> Result<Self> {
        Self::new(&grid.lattice(), grid.center(), r, weights)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Linear map from node values to coefficients (`basis x nodes`).
    pub fn map(&self) -> &DMatrix<f64> {
        &self.map
    }

    /// Monomial values at the nodes (`nodes x basis`).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// The weighted normal matrix, i.e. the quadratic form of the surrogate
    /// objective on coefficients.
    pub fn normal(&self) -> &DMatrix<f64> {
        &self.normal
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        (&self.map * DVector::from_column_slice(values)).iter().copied().collect()
    }

    pub fn polynomial(&self, coeffs: Vec<f64>) -> Polynomial {
        Polynomial {
            dim: self.dim,
            degree: self.degree,
            coeffs,
        }
    }

    /// Node values of the polynomial with these coefficients.
    pub fn values(&self, coeffs: &[f64]) -> Vec<f64> {
        (&self.basis * DVector::from_column_slice(coeffs)).iter().copied().collect()
    }

    /// Unweighted residual ladder `||grad^i (u - P)||_p`, `i = 0..=r`.
    pub fn residuals(&self, values: &[f64], coeffs: &[f64], p: f64) -> Vec<f64> {
        let pv = self.values(coeffs);
        let diff: Vec<f64> = values.iter().zip(&pv).map(|(a, b)| a - b).collect();
        self.ops.iter().map(|o| o.seminorm(&diff, p)).collect()
    }

    /// `sum_i c_i ||grad^i (u - P)||_p`, the exact ladder objective.
    pub fn objective(&self, values: &[f64], coeffs: &[f64], p: f64) -> f64 {
        self.residuals(values, coeffs, p)
            .iter()
            .zip(&self.weights)
            .map(|(r, c)| r * c)
            .sum()
    }

    /// Projection with exponent `p`: the linear surrogate for `p = 2`,
    /// otherwise a local descent on the exact ladder objective started from
    /// the surrogate solution.
    pub fn project(&self, values: &[f64], p: f64) -> Result<ProjectionResult> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("exponent p = {p} must be >= 1")));
        }
        let c2 = self.coefficients(values);
        let (coeffs, iterations, converged) = if p == 2.0 {
            (c2, 0, true)
        } else {
            let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let nm = NelderMead {
                max_evals: 4000 * self.map.nrows(),
                ftol: 1e-13,
                xtol: 1e-11 * scale,
                step: 0.1 * scale,
            };
            // Tiny coefficient penalty breaks ties toward the smallest norm.
            let eps = 1e-12;
            let mut f = |c: &[f64]| {
                self.objective(values, c, p) + eps * c.iter().map(|x| x * x).sum::<f64>().sqrt()
            };
            let r = nm.minimize_restarted(&mut f, &c2);
            let base = self.objective(values, &c2, p);
            if self.objective(values, &r.x, p) <= base {
                (r.x, r.evals, r.converged)
            } else {
                (c2, r.evals, r.converged)
            }
        };
        let residuals = self.residuals(values, &coeffs, p);
        Ok(ProjectionResult {
            projection: self.polynomial(coeffs),
            residuals,
            condition: self.condition,
            iterations,
            converged,
        })
    }
}

/// Projects `u` onto `P_r` by minimizing the weighted seminorm ladder.
pub fn project(u: &GridFunction, r: usize, p: f64, weights: Option<&[f64]>) -> Result<ProjectionResult> {
    let proj = Projector::for_grid(u.grid(), r, weights)?;
    let out = proj.project(u.values(), p)?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
            context: "projection descent".into(),
        });
    }
    Ok(out)
}

/// Coefficient normalization used by [`poly_deviation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffNorm {
    L2,
    Linf,
}

/// Bounds on `min_{|c| = 1} max_i |P_c(x_i)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    /// Best value found by local search (an upper bound on the minimum).
    pub value: f64,
    /// `sigma_min(V) / sqrt(#points)`, a lower bound on the minimum.
    pub lower_bound: f64,
    pub witness: Vec<f64>,
    pub starts: usize,
}

fn coeff_norm(c: &[f64], norm: CoeffNorm) -> f64 {
    match norm {
        CoeffNorm::L2 => c.iter().map(|x| x * x).sum::<f64>().sqrt(),
        CoeffNorm::Linf => c.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Evaluation matrix of raw (uncentered) monomials at `points`.
pub fn vandermonde(points: &[Vec<f64>], k: usize) -> Result<DMatrix<f64>> {
    let dim = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidParameter("empty point list".into()))?;
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    let mons = monomials(dim, k);
    Ok(DMatrix::from_fn(points.len(), mons.len(), |i, j| {
        monomial_value(&mons[j], &points[i])
    }))
}

/// Minimum over unit-norm coefficient vectors of the largest absolute value
/// at the points, by seeded multistart local search. The points are sorted
/// and deduplicated first, so the result depends only on the point set.
pub fn poly_deviation(points: &[Vec<f64>], k: usize, norm: CoeffNorm) -> Result<Deviation> {
    let mut points = points.to_vec();
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(a.len().cmp(&b.len()))
    });
    points.dedup();
    let v = vandermonde(&points, k)?;
    let d = v.ncols();
    let m = v.nrows();
    let eval = |c: &[f64]| -> f64 {
        let s = coeff_norm(c, norm);
        if s == 0.0 {
            return f64::INFINITY;
        }
        (0..m)
            .map(|i| (0..d).map(|j| v[(i, j)] * c[j]).sum::<f64>().abs())
            .fold(0.0, f64::max)
            / s
    };
    let svd = SVD::new(v.clone(), false, true);
    let vt = svd.v_t.as_ref().expect("v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let smin = if m < d { 0.0 } else { svd.singular_values[order[0]] };
    let lower_bound = smin / (m as f64).sqrt();

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if m >= d {
        starts.push(vt.row(order[0]).iter().copied().collect());
    } else {
        // Rank deficient: a null vector exists.
        let full = SVD::new(
            {
                let mut sq = DMatrix::zeros(d, d);
                sq.rows_mut(0, m).copy_from(&v);
                sq
            },
            false,
            true,
        );
        let vt = full.v_t.expect("v_t");
        let j = (0..d)
            .min_by(|&a, &b| full.singular_values[a].total_cmp(&full.singular_values[b]))
            .expect("nonempty");
        starts.push(vt.row(j).iter().copied().collect());
    }
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        starts.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0d0e);
    for _ in 0..16 {
        starts.push((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let nm = NelderMead {
        max_evals: 2000 * d,
        ftol: 1e-14,
        xtol: 1e-12,
        step: 0.2,
    };
    let mut best = (f64::INFINITY, vec![0.0; d]);
    let mut obj = |c: &[f64]| eval(c);
    for s in &starts {
        let r = nm.minimize_restarted(&mut obj, s);
        let f0 = eval(s);
        let (f, x) = if f0 <= r.f { (f0, s.clone()) } else { (r.f, r.x) };
        if f < best.0 {
            best = (f, x);
        }
    }
    let s = coeff_norm(&best.1, norm);
    let witness = best.1.iter().map(|c| c / s).collect();
    let value = if best.0 < 1e-13 { 0.0 } else { best.0 };
    Ok(Deviation {
        value,
        lower_bound: lower_bound.min(value),
        witness,
        starts: starts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_dims() {
        assert_eq!(basis_dim(2, 1), 3);
        assert_eq!(basis_dim(1, 2), 3);
        assert_eq!(basis_dim(3, 2), 10);
        assert_eq!(monomials(2, 2).len(), 6);
    }

    #[test]
    fn evaluation_examples() {
        let g = GridCube::new(2, 5, &[0.0, 0.0], 1.0).unwrap();
        let one = Polynomial::new(2, 0, vec![1.0]).unwrap();
        assert!(eval_poly(&one, &g).unwrap().values().iter().all(|&v| v == 1.0));
        // graded order: 1, x, y, x^2, xy, y^2
        let xy = Polynomial::new(2, 2, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let vals = eval_poly(&xy, &g).unwrap();
        for i in 0..g.node_count() {
            let c = g.coords(i);
            assert!((vals.values()[i] - c[0] * c[1]).abs() < 1e-15);
        }
        let x = Polynomial::new(1, 1, vec![0.0, 1.0]).unwrap();
        let line = GridCube::new(1, 5, &[0.0], 1.0).unwrap();
        let v = eval_poly(&x, &line).unwrap();
        for i in 0..5 {
            assert_eq!(v.values()[i], line.coords(i)[0]);
        }
    }

    #[test]
    fn degree_parts() {
        let p = Polynomial::new(1, 2, vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.degree_part(1).coeffs(), &[1.0, 1.0, 0.0]);
        assert_eq!(p.complement_part(1).coeffs(), &[0.0, 0.0, 1.0]);
        assert_eq!(p.degree_part(2), p);
        let q = Polynomial::new(1, 1, vec![1.0, 1.0]).unwrap();
        assert_eq!(q.prime_part(1).coeffs(), &[0.0, 1.0]);
    }

    #[test]
    fn mean_of_linear() {
        let g = GridCube::unit(1, 9).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0]).unwrap();
        let r = project(&u, 0, 2.0, None).unwrap();
        assert!((r.projection.coeffs()[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn polynomial_is_fixed() {
        let g = GridCube::unit(2, 7).unwrap();
        let u = GridFunction::from_fn(&g, |x| 1.0 - 2.0 * x[0] + x[0] * x[1]).unwrap();
        let r = project(&u, 2, 2.0, None).unwrap();
        assert!(r.residuals.iter().all(|&v| v < 1e-12), "{:?}", r.residuals);
        let r3 = project(&u, 2, 3.0, None).unwrap();
        assert!(r3.residuals.iter().all(|&v| v < 1e-8), "{:?}", r3.residuals);
    }

    #[test]
    fn quadratic_onto_lines_matches_normal_equations() {
        // Oracle: assemble the 2x2 system directly from the definition
        // E(c) = sum w (u - c0 - c1 x)^2 + sum w (Du - c1)^2 with compact
        // forward differences.
        let n = 9;
        let g = GridCube::unit(1, n).unwrap();
        let h = g.spacing();
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h - 0.5).collect();
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(2)).collect();
        let du: Vec<f64> = (0..n - 1).map(|i| (u[i + 1] - u[i]) / h).collect();
        let mut a = [[0.0; 2]; 2];
        let mut b = [0.0; 2];
        for i in 0..n {
            let phi = [1.0, xs[i]];
            for r in 0..2 {
                b[r] += h * u[i] * phi[r];
                for c in 0..2 {
                    a[r][c] += h * phi[r] * phi[c];
                }
            }
        }
        for d in &du {
            a[1][1] += h;
            b[1] += h * d;
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let c0 = (b[0] * a[1][1] - a[0][1] * b[1]) / det;
        let c1 = (a[0][0] * b[1] - a[1][0] * b[0]) / det;
        let uf = GridFunction::new(&g, u).unwrap();
        let r = project(&uf, 1, 2.0, None).unwrap();
        assert!((r.projection.coeffs()[0] - c0).abs() < 1e-12);
        assert!((r.projection.coeffs()[1] - c1).abs() < 1e-12);
    }

    #[test]
    fn deviation_examples() {
        let diag: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.2, i as f64 * 0.2]).collect();
        assert!(poly_deviation(&diag, 1, CoeffNorm::L2).unwrap().value < 1e-10);
        let pts = vec![vec![0.3], vec![0.9]];
        let d = poly_deviation(&pts, 0, CoeffNorm::L2).unwrap();
        assert!((d.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_deviation_matches_sphere_sweep() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let d = poly_deviation(&pts, 1, CoeffNorm::L2).unwrap();
        // Fibonacci sweep of the unit sphere in coefficient space.
        let count = 10_000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut sweep = f64::INFINITY;
        for i in 0..count {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            let c = [r * t.cos(), r * t.sin(), z];
            let vals = [c[0], c[0] + c[1], c[0] + c[2]];
            sweep = sweep.min(vals.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
        }
        assert!(d.value > 0.0);
        assert!(d.value <= sweep + 1e-12, "{} vs {}", d.value, sweep);
        assert!(sweep - d.value < 0.02, "{} vs {}", d.value, sweep);
        assert!(d.lower_bound <= d.value);
    }
}
