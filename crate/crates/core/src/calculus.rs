//! Finite-difference derivatives, gradient seminorms and Sobolev norms.
//!
//! Two stencil families are used:
//!
//! * **collocated** stencils produce node values: central second-order
//!   stencils in the interior and second-order one-sided stencils in the
//!   boundary layers. Pointwise trace constraints and `partial_derivative`
//!   use these.
//! * **compact** stencils use the minimal `j + 1` consecutive nodes for a
//!   `j`-th derivative (the plain `j`-th difference), located at the stencil
//!   midpoint. Seminorms and energies use these. A collocated first
//!   difference has a sawtooth null mode in the interior, which would let
//!   energy minimizers decouple even and odd sublattices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CompactMask, GridFunction, Lattice};
use crate::linalg::{SparseOp, SparseRow};

/// Per-axis derivative orders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// All multi-indices of exactly `order` in `dim` variables, in descending
/// lexicographic order: `(2,0), (1,1), (0,2)`.
pub fn multi_indices(dim: usize, order: usize) -> Vec<MultiIndex> {
    fn rec(dim: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == dim {
            prefix.push(left);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for first in (0..=left).rev() {
            prefix.push(first);
            rec(dim, left - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, order, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// Finite-difference weights for the `order`-th derivative at `z` from
/// values at `nodes` (Fornberg's recursion).
pub fn fd_weights(z: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Collocated `order`-th derivative on `n` nodes of spacing `h`.
pub fn collocated_1d(n: usize, h: f64, order: usize) -> Result<SparseOp> {
    let half = (order + 1) / 2;
    let one_sided = order + 2;
    if order > 0 && (n < one_sided || n < 2 * half + 1 || order > (n - 1) / 2) {
        return Err(Error::StencilDoesNotFit { order, nodes: n });
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if order == 0 {
            rows.push(SparseRow::new(vec![i], vec![1.0]));
            continue;
        }
        let (start, width) = if i >= half && i + half < n {
            (i - half, 2 * half + 1)
        } else if i < half {
            (0, one_sided)
        } else {
            (n - one_sided, one_sided)
        };
        let offsets: Vec<f64> = (start..start + width)
            .map(|k| (k as f64 - i as f64) * h)
            .collect();
        let w = fd_weights(0.0, &offsets, order);
        rows.push(SparseRow::new((start..start + width).collect(), w));
    }
    Ok(SparseOp::from_rows(n, rows))
}

/// Compact `order`-th difference: row `o` uses nodes `o..=o+order`.
pub fn compact_1d(n: usize, h: f64, order: usize) -> Result<SparseOp> {
    if order >= n {
        return Err(Error::StencilDoesNotFit { order, nodes: n });
    }
    let scale = h.powi(-(order as i32));
    let weights: Vec<f64> = (0..=order)
        .map(|k| {
            let sign = if (order - k) % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(order, k) * scale
        })
        .collect();
    let rows = (0..n - order)
        .map(|o| SparseRow::new((o..=o + order).collect(), weights.clone()))
        .collect();
    Ok(SparseOp::from_rows(n, rows))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Tensor product of per-axis 1D operators on a lattice (axis 0 fastest).
fn tensor_product(lattice: &Lattice, factors: &[SparseOp]) -> SparseOp {
    let out_shape: Vec<usize> = factors.iter().map(|f| f.rows()).collect();
    let out_len: usize = out_shape.iter().product();
    let in_strides: Vec<usize> = (0..lattice.dim())
        .map(|a| lattice.shape()[..a].iter().product())
        .collect();
    let mut rows = Vec::with_capacity(out_len);
    let mut out_multi = vec![0usize; out_shape.len()];
    for _ in 0..out_len {
        let mut idx = vec![0usize];
        let mut val = vec![1.0];
        for (axis, f) in factors.iter().enumerate() {
            let (ci, cv) = f.row(out_multi[axis]);
            let mut nidx = Vec::with_capacity(idx.len() * ci.len());
            let mut nval = Vec::with_capacity(idx.len() * ci.len());
            for (&i0, &v0) in idx.iter().zip(&val) {
                for (&c, &v) in ci.iter().zip(cv) {
                    nidx.push(i0 + c * in_strides[axis]);
                    nval.push(v0 * v);
                }
            }
            idx = nidx;
            val = nval;
        }
        rows.push(SparseRow::new(idx, val));
        for (axis, m) in out_multi.iter_mut().enumerate() {
            *m += 1;
            if *m < out_shape[axis] {
                break;
            }
            *m = 0;
        }
    }
    SparseOp::from_rows(lattice.len(), rows)
}

/// Collocated `D^alpha` on a lattice; one output per node.
pub fn collocated_op(lattice: &Lattice, alpha: &MultiIndex) -> Result<SparseOp> {
    check_dim(lattice, alpha)?;
    let factors = alpha
        .0
        .iter()
        .zip(lattice.shape())
        .map(|(&j, &n)| collocated_1d(n, lattice.spacing(), j))
        .collect::<Result<Vec<_>>>()?;
    Ok(tensor_product(lattice, &factors))
}

/// Compact `D^alpha` on a lattice; one output per stencil position.
pub fn compact_op(lattice: &Lattice, alpha: &MultiIndex) -> Result<SparseOp> {
    check_dim(lattice, alpha)?;
    let factors = alpha
        .0
        .iter()
        .zip(lattice.shape())
        .map(|(&j, &n)| compact_1d(n, lattice.spacing(), j))
        .collect::<Result<Vec<_>>>()?;
    Ok(tensor_product(lattice, &factors))
}

fn check_dim(lattice: &Lattice, alpha: &MultiIndex) -> Result<()> {
    if alpha.dim() != lattice.dim() {
        return Err(Error::DimensionMismatch {
            expected: lattice.dim(),
            got: alpha.dim(),
        });
    }
    Ok(())
}

/// Rows of a compact operator whose whole stencil lies in `region`.
fn rows_in_region(op: &SparseOp, region: Option<&[bool]>) -> Vec<usize> {
    match region {
        None => (0..op.rows()).collect(),
        Some(mask) => (0..op.rows())
            .filter(|&r| op.row(r).0.iter().all(|&c| mask[c]))
            .collect(),
    }
}

/// Compact operators for every `|alpha| = order`, with the rows kept by
/// `region`. Reused by energy assembly and evaluation.
#[derive(Debug, Clone)]
pub struct OrderOps {
    pub order: usize,
    pub ops: Vec<(MultiIndex, SparseOp, Vec<usize>)>,
    pub weight: f64,
}

impl OrderOps {
    pub fn new(lattice: &Lattice, order: usize, region: Option<&[bool]>) -> Result<Self> {
        let ops = multi_indices(lattice.dim(), order)
            .into_iter()
            .map(|alpha| {
                let op = compact_op(lattice, &alpha)?;
                let keep = rows_in_region(&op, region);
                Ok((alpha, op, keep))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            order,
            ops,
            weight: lattice.weight(),
        })
    }

    /// `sum_alpha (sum_rows w |D^alpha u|^p)^(1/p)`.
    pub fn seminorm(&self, values: &[f64], p: f64) -> f64 {
        self.ops
            .iter()
            .map(|(_, op, keep)| {
                let s: f64 = keep
                    .iter()
                    .map(|&r| self.weight * op.row_dot(r, values).abs().powf(p))
                    .sum();
                s.powf(1.0 / p)
            })
            .sum()
    }

    /// `sum_alpha sum_rows w |D^alpha u|^p`, the p-th power surrogate of the
    /// seminorm used as capacity energy.
    pub fn energy(&self, values: &[f64], p: f64) -> f64 {
        self.ops
            .iter()
            .map(|(_, op, keep)| {
                keep.iter()
                    .map(|&r| self.weight * op.row_dot(r, values).abs().powf(p))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Gradient of [`Self::energy`] with respect to the node values.
    pub fn energy_gradient(&self, values: &[f64], p: f64) -> Vec<f64> {
        let mut grad = vec![0.0; values.len()];
        for (_, op, keep) in &self.ops {
            for &r in keep {
                let d = op.row_dot(r, values);
                let g = self.weight * p * d.abs().powf(p - 1.0) * d.signum();
                let (cols, vals) = op.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    grad[c] += g * v;
                }
            }
        }
        grad
    }

    /// Gradient of [`Self::seminorm`]; terms with a vanishing derivative
    /// contribute zero.
    pub fn seminorm_gradient(&self, values: &[f64], p: f64) -> Vec<f64> {
        let mut grad = vec![0.0; values.len()];
        for (_, op, keep) in &self.ops {
            let d: Vec<f64> = keep.iter().map(|&r| op.row_dot(r, values)).collect();
            let s: f64 = d.iter().map(|x| self.weight * x.abs().powf(p)).sum();
            if s <= 0.0 {
                continue;
            }
            let outer = s.powf(1.0 / p - 1.0);
            for (&r, &x) in keep.iter().zip(&d) {
                let g = outer * self.weight * x.abs().powf(p - 1.0) * x.signum();
                let (cols, vals) = op.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    grad[c] += g * v;
                }
            }
        }
        grad
    }

    /// Dense matrix of the quadratic form `sum_alpha w |D^alpha u|^2`.
    pub fn energy_matrix(&self, n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for (_, op, keep) in &self.ops {
            for &r in keep {
                let (cols, vals) = op.row(r);
                for (&ci, &vi) in cols.iter().zip(vals) {
                    for (&cj, &vj) in cols.iter().zip(vals) {
                        a[(ci, cj)] += self.weight * vi * vj;
                    }
                }
            }
        }
        a
    }
}

/// Collocated trace rows `D^alpha u (x) ` for every `x` in `nodes` and
/// every `|alpha| <= max_order`.
pub fn trace_rows(lattice: &Lattice, nodes: &[usize], max_order: usize) -> Result<Vec<SparseRow>> {
    let mut rows = Vec::new();
    for order in 0..=max_order {
        for alpha in multi_indices(lattice.dim(), order) {
            let op = collocated_op(lattice, &alpha)?;
            for &x in nodes {
                let (c, v) = op.row(x);
                rows.push(SparseRow::new(c.to_vec(), v.to_vec()));
            }
        }
    }
    Ok(rows)
}

/// Region over which a seminorm is taken.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Whole,
    Mask(&'a CompactMask),
}

impl Region<'_> {
    fn flags(&self) -> Option<&[bool]> {
        match self {
            Region::Whole => None,
            Region::Mask(m) => Some(m.flags()),
        }
    }

    fn describe(&self) -> String {
        match self {
            Region::Whole => "whole".into(),
            Region::Mask(m) => format!("mask({} nodes)", m.count()),
        }
    }
}

/// A computed `||grad^k u||_{L^p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub order: usize,
    pub exponent: f64,
    pub region: String,
    pub value: f64,
}

/// Collocated partial derivative `D^alpha u` at every node.
pub fn partial_derivative(u: &GridFunction, alpha: &MultiIndex) -> Result<GridFunction> {
    let op = collocated_op(&u.grid().lattice(), alpha)?;
    GridFunction::new(u.grid(), op.apply(u.values()))
}

fn check_region(u: &GridFunction, region: &Region) -> Result<()> {
    if let Region::Mask(m) = region {
        if m.grid() != u.grid() {
            return Err(Error::InvalidParameter(
                "region mask lives on a different grid".into(),
            ));
        }
    }
    Ok(())
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("exponent p = {p} must be >= 1")));
    }
    Ok(())
}

/// `||grad^k u||_{L^p}` with the sum over `|alpha| = k` outside the p-norm.
pub fn gradient_seminorm(
    u: &GridFunction,
    k: usize,
    p: f64,
    region: Region,
) -> Result<SeminormReport> {
    check_exponent(p)?;
    check_region(u, &region)?;
    let ops = OrderOps::new(&u.grid().lattice(), k, region.flags())?;
    Ok(SeminormReport {
        order: k,
        exponent: p,
        region: region.describe(),
        value: ops.seminorm(u.values(), p),
    })
}

/// `sum_{|alpha| = k} ||D^alpha u||_p^p`: the energy whose infimum the
/// capacity routines report.
pub fn gradient_energy(u: &GridFunction, k: usize, p: f64, region: Region) -> Result<f64> {
    check_exponent(p)?;
    check_region(u, &region)?;
    let ops = OrderOps::new(&u.grid().lattice(), k, region.flags())?;
    Ok(ops.energy(u.values(), p))
}

/// `||u||_{W^{m,p}} = sum_{k <= m} ||grad^k u||_{L^p}`.
pub fn sobolev_norm(u: &GridFunction, m: usize, p: f64) -> Result<f64> {
    (0..=m)
        .map(|k| gradient_seminorm(u, k, p, Region::Whole).map(|r| r.value))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridCube;

    fn line(n: usize) -> GridCube {
        GridCube::unit(1, n).unwrap()
    }

    #[test]
    fn fornberg_central_second_derivative() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w, vec![1.0, -2.0, 1.0]);
        let w = fd_weights(0.0, &[0.0, 1.0, 2.0], 1);
        assert!((w[0] + 1.5).abs() < 1e-14 && (w[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn multi_index_enumeration() {
        let v = multi_indices(2, 2);
        let raw: Vec<_> = v.iter().map(|a| a.0.clone()).collect();
        assert_eq!(raw, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert_eq!(multi_indices(1, 0), vec![MultiIndex(vec![0])]);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = line(9);
        let u = GridFunction::from_fn(&g, |_| 3.0).unwrap();
        let d = partial_derivative(&u, &MultiIndex(vec![1])).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn derivative_of_linear_is_one_everywhere() {
        let g = line(9);
        let u = GridFunction::from_fn(&g, |x| x[0]).unwrap();
        let d = partial_derivative(&u, &MultiIndex(vec![1])).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn second_derivative_of_square_is_two() {
        // Hand-applied stencils: (1,-2,1)/h^2 inside, (2,-5,4,-1)/h^2 at the ends.
        let g = line(9);
        let h = g.spacing();
        let u = GridFunction::from_fn(&g, |x| x[0] * x[0]).unwrap();
        let v = u.values();
        let by_hand: Vec<f64> = (0..9)
            .map(|i| match i {
                0 => (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h),
                8 => (2.0 * v[8] - 5.0 * v[7] + 4.0 * v[6] - v[5]) / (h * h),
                _ => (v[i - 1] - 2.0 * v[i] + v[i + 1]) / (h * h),
            })
            .collect();
        let d = partial_derivative(&u, &MultiIndex(vec![2])).unwrap();
        for (a, b) in d.values().iter().zip(&by_hand) {
            assert!((a - 2.0).abs() < 1e-10 && (a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn stencil_must_fit() {
        let g = line(5);
        let u = GridFunction::zeros(&g);
        assert!(matches!(
            partial_derivative(&u, &MultiIndex(vec![3])),
            Err(Error::StencilDoesNotFit { .. })
        ));
    }

    #[test]
    fn order_zero_seminorm_is_lp_norm() {
        let g = line(65);
        let u = GridFunction::from_fn(&g, |_| 2.0).unwrap();
        let r = gradient_seminorm(&u, 0, 2.0, Region::Whole).unwrap();
        let total_weight = g.node_count() as f64 * g.weight();
        assert!((r.value - 2.0 * total_weight.sqrt()).abs() < 1e-12);
        assert!((r.value - 2.0).abs() < 0.02);
    }

    #[test]
    fn slope_of_identity_has_unit_seminorm() {
        let g = line(17);
        let u = GridFunction::from_fn(&g, |x| x[0]).unwrap();
        let r = gradient_seminorm(&u, 1, 2.0, Region::Whole).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planar_function_sums_both_axes() {
        let g = GridCube::unit(2, 33).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0] + x[1]).unwrap();
        let r = gradient_seminorm(&u, 1, 1.0, Region::Whole).unwrap();
        // Each axis derivative is 1 on (n-1) x n stencil positions of weight h^2.
        let h = g.spacing();
        let per_axis = 32.0 * 33.0 * h * h;
        assert!((r.value - 2.0 * per_axis).abs() < 1e-12);
        assert!((r.value - 2.0).abs() < 0.07);
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = line(257);
        assert_eq!(sobolev_norm(&GridFunction::zeros(&g), 2, 2.0).unwrap(), 0.0);
        let one = GridFunction::from_fn(&g, |_| 1.0).unwrap();
        assert!((sobolev_norm(&one, 2, 2.0).unwrap() - 1.0).abs() < 0.01);
        let x = GridFunction::from_fn(&g, |x| x[0]).unwrap();
        let exact = 1.0 / 3.0f64.sqrt() + 1.0;
        assert!((sobolev_norm(&x, 1, 2.0).unwrap() - exact).abs() < 0.01);
    }

    #[test]
    fn rejects_small_exponent() {
        let g = line(5);
        let u = GridFunction::zeros(&g);
        assert!(gradient_seminorm(&u, 1, 0.5, Region::Whole).is_err());
    }

    #[test]
    fn energy_matrix_matches_energy() {
        let g = GridCube::unit(2, 7).unwrap();
        let u = GridFunction::from_fn(&g, |x| (3.0 * x[0]).sin() * x[1] * x[1]).unwrap();
        let ops = OrderOps::new(&g.lattice(), 2, None).unwrap();
        let a = ops.energy_matrix(g.node_count());
        let v = nalgebra::DVector::from_column_slice(u.values());
        let quad = (v.transpose() * &a * &v)[(0, 0)];
        assert!((quad - ops.energy(u.values(), 2.0)).abs() < 1e-9 * quad.max(1.0));
    }

    #[test]
    fn seminorm_gradient_matches_differences() {
        let g = GridCube::unit(2, 5).unwrap();
        let u: Vec<f64> = (0..25).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect();
        let ops = OrderOps::new(&g.lattice(), 1, None).unwrap();
        let p = 3.0;
        let grad = ops.seminorm_gradient(&u, p);
        for i in [0, 6, 12, 24] {
            let mut a = u.clone();
            let mut b = u.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (ops.seminorm(&a, p) - ops.seminorm(&b, p)) / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", grad[i]);
        }
    }
}
