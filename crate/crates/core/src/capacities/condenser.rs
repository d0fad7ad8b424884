use nalgebra::{DMatrix, DVector};

use super::{
    boundary_rows, check_p, homogeneous, rel_err, BoundKind, CapacityResult, Diagnostics, Energy,
};
use crate::calculus::{gradient_energy, trace_rows, Region};
use crate::error::{Error, Result};
use crate::grid::{dilate_mask, CompactMask, GridCube, GridFunction};
use crate::linalg::{nullspace, solve_eqp, BoundQp, Constraints};
use crate::optim::projected_descent;

fn check_mask(q: &GridCube, k: &CompactMask, m: usize) -> Result<()> {
    if k.grid() != q {
        return Err(Error::InvalidParameter("K lives on a different cube".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("order m must be >= 1".into()));
    }
    Ok(())
}

/// `inf ||grad^m phi||_p^p` over `phi` on the doubled cube vanishing to
/// order `m - 1` on its outer layers with `phi >= 1` on `K`.
pub fn condenser_capacity(q: &GridCube, k: &CompactMask, m: usize, p: f64) -> Result<CapacityResult> {
    check_p(p)?;
    check_mask(q, k, m)?;
    let d = q.double()?;
    if k.is_empty() {
        return Ok(CapacityResult::zero(&d, BoundKind::ExactQp, "empty set"));
    }
    let lat = d.lattice();
    let n = lat.len();
    let energy = Energy::new(&lat, m)?;
    let eq = homogeneous(n, boundary_rows(&lat, m)?, 1);
    let knodes = k.embed_in(&d)?.nodes();
    let lower: Vec<(usize, f64)> = knodes.iter().map(|&i| (i, 1.0)).collect();
    let zero = DVector::zeros(n);
    let qp = BoundQp {
        a: &energy.matrix,
        g: &zero,
        eq: &eq,
        lower: &lower,
    };
    let all = vec![true; lower.len()];
    let mut notes = Vec::new();
    let mut sol = qp.solve_pdas(all.clone(), 60)?;
    if !sol.converged || sol.bound_violation > 1e-9 {
        notes.push("primal-dual iteration stalled; primal active set used".into());
        sol = qp.solve_primal(all, 50 * lower.len() + 50)?;
    }
    if !sol.converged {
        return Err(Error::NonConvergence {
            iterations: sol.iterations,
            context: "condenser obstacle problem".into(),
        });
    }
    let mut iterations = sol.iterations;
    let mut u: Vec<f64> = sol.u.iter().copied().collect();
    let mut bound = BoundKind::ExactQp;
    let mut value = energy.ops.energy(&u, 2.0);

    if p != 2.0 {
        let base = solve_eqp(&energy.matrix, &DMatrix::zeros(n, 1), &eq)?;
        let free: Vec<usize> = (0..n).filter(|&i| !base.fixed[i]).collect();
        let kpos: Vec<usize> = free
            .iter()
            .enumerate()
            .filter(|(_, i)| knodes.binary_search(i).is_ok())
            .map(|(j, _)| j)
            .collect();
        let embed = |y: &[f64]| {
            let mut v = vec![0.0; n];
            for (j, &i) in free.iter().enumerate() {
                v[i] = y[j];
            }
            v
        };
        let f = |y: &[f64]| energy.ops.energy(&embed(y), p);
        let g = |y: &[f64]| {
            let gu = energy.ops.energy_gradient(&embed(y), p);
            free.iter().map(|&i| gu[i]).collect()
        };
        let proj = |y: &mut [f64]| {
            for &j in &kpos {
                y[j] = y[j].max(1.0);
            }
        };
        let y0: Vec<f64> = free.iter().map(|&i| u[i]).collect();
        let r = projected_descent(&f, &g, &proj, &y0, 5000, 1e-13);
        iterations += r.iterations;
        u = embed(&r.x);
        value = r.f;
        bound = BoundKind::UpperBound;
        if !r.converged {
            notes.push("descent hit its iteration cap".into());
        }
    }
    let witness = GridFunction::new(&d, u)?;
    let re = gradient_energy(&witness, m, p, Region::Whole)?;
    let violation = knodes
        .iter()
        .map(|&i| (1.0 - witness.values()[i]).max(0.0))
        .fold(eq.max_violation(witness.values(), 0), f64::max);
    Ok(CapacityResult {
        value,
        witness: Some(witness),
        polynomial: None,
        bound,
        feasible: true,
        diagnostics: Diagnostics {
            starts: 1,
            iterations,
            residual: violation,
            reevaluation_error: rel_err(re, value),
            notes,
        },
    })
}

/// Like [`condenser_capacity`] with `phi = 1` and vanishing derivatives of
/// order `1..m` on `K` dilated by `rho` cells of the doubled cube.
pub fn sharp_capacity(
    q: &GridCube,
    k: &CompactMask,
    m: usize,
    p: f64,
    rho: usize,
) -> Result<CapacityResult> {
    check_p(p)?;
    check_mask(q, k, m)?;
    if rho == 0 {
        return Err(Error::InvalidParameter("neighbourhood radius must be >= 1".into()));
    }
    let d = q.double()?;
    if k.is_empty() {
        return Ok(CapacityResult::zero(&d, BoundKind::ExactEigen, "empty set"));
    }
    let lat = d.lattice();
    let n = lat.len();
    let nodes = dilate_mask(&k.embed_in(&d)?, rho).nodes();
    let shape = lat.shape().to_vec();
    if nodes.iter().any(|&i| {
        lat.multi(i)
            .iter()
            .zip(&shape)
            .any(|(&c, &s)| c.min(s - 1 - c) < m)
    }) {
        return Err(Error::Infeasible(
            "dilated set reaches the outer zero layers of the doubled cube".into(),
        ));
    }
    let energy = Energy::new(&lat, m)?;
    let mut cons = homogeneous(n, boundary_rows(&lat, m)?, 1);
    let rows = trace_rows(&lat, &nodes, m - 1)?;
    let rhs = DMatrix::from_fn(rows.len(), 1, |r, _| if r < nodes.len() { 1.0 } else { 0.0 });
    cons.push_rows(rows, &rhs);
    let sol = solve_eqp(&energy.matrix, &DMatrix::zeros(n, 1), &cons)?;
    if !sol.feasible[0] {
        return Err(Error::Infeasible("neighbourhood constraints conflict".into()));
    }
    let mut u: Vec<f64> = sol.u.column(0).iter().copied().collect();
    let mut value = energy.ops.energy(&u, 2.0);
    let mut bound = BoundKind::ExactEigen;
    let mut iterations = 1;
    if p != 2.0 {
        let (v, x, it) = descend_affine(&energy, &cons, &u, p)?;
        value = v;
        u = x;
        iterations += it;
        bound = BoundKind::UpperBound;
    }
    let witness = GridFunction::new(&d, u)?;
    let re = gradient_energy(&witness, m, p, Region::Whole)?;
    Ok(CapacityResult {
        value,
        bound,
        feasible: true,
        polynomial: None,
        diagnostics: Diagnostics {
            starts: 1,
            iterations,
            residual: cons.max_violation(witness.values(), 0),
            reevaluation_error: rel_err(re, value),
            notes: Vec::new(),
        },
        witness: Some(witness),
    })
}

/// Minimizes the `p`-energy over the affine set `u0 + null(cons)`.
fn descend_affine(
    energy: &Energy,
    cons: &Constraints,
    u0: &[f64],
    p: f64,
) -> Result<(f64, Vec<f64>, usize)> {
    let n = u0.len();
    let mut dense = DMatrix::zeros(cons.rows.len(), n);
    for (r, row) in cons.rows.iter().enumerate() {
        for (&i, &v) in row.idx.iter().zip(&row.val) {
            dense[(r, i)] += v;
        }
    }
    let z = nullspace(&dense, n);
    let lift = |y: &[f64]| -> Vec<f64> {
        let zy = &z * DVector::from_column_slice(y);
        u0.iter().zip(zy.iter()).map(|(a, b)| a + b).collect()
    };
    let f = |y: &[f64]| energy.ops.energy(&lift(y), p);
    let g = |y: &[f64]| {
        let gu = DVector::from_vec(energy.ops.energy_gradient(&lift(y), p));
        (z.transpose() * gu).iter().copied().collect()
    };
    let r = projected_descent(&f, &g, &|_| {}, &vec![0.0; z.ncols()], 5000, 1e-13);
    Ok((r.f, lift(&r.x), r.iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_mask, Geometry};

    fn centered(n: usize) -> GridCube {
        GridCube::new(1, n, &[0.0], 1.0).unwrap()
    }

    #[test]
    fn empty_set() {
        let q = centered(9);
        let k = CompactMask::empty(&q);
        assert_eq!(condenser_capacity(&q, &k, 1, 2.0).unwrap().value, 0.0);
        assert_eq!(sharp_capacity(&q, &k, 1, 2.0, 1).unwrap().value, 0.0);
    }

    #[test]
    fn tent_and_plateau() {
        let q = centered(65);
        let point = build_mask(&q, &Geometry::Point { at: vec![0.0] }).unwrap();
        let c = condenser_capacity(&q, &point, 1, 2.0).unwrap();
        assert!((c.value - 2.0).abs() < 0.1, "{}", c.value);
        let whole = build_mask(&q, &Geometry::Box { lo: vec![-0.5], hi: vec![0.5] }).unwrap();
        let c = condenser_capacity(&q, &whole, 1, 2.0).unwrap();
        assert!((c.value - 4.0).abs() < 0.2, "{}", c.value);
        assert!(c.diagnostics.reevaluation_error < 1e-6);
    }

    #[test]
    fn sharp_dominates_and_converges() {
        let q = centered(65);
        let point = build_mask(&q, &Geometry::Point { at: vec![0.0] }).unwrap();
        let c = condenser_capacity(&q, &point, 1, 2.0).unwrap().value;
        let s = sharp_capacity(&q, &point, 1, 2.0, 1).unwrap().value;
        assert!(s >= c - 1e-12);
        // Plateau of width 2h: ramps of length 1 - h.
        let h = q.spacing();
        assert!((s - 2.0 / (1.0 - h)).abs() < 1e-9, "{s}");
    }

    #[test]
    fn second_order_obstacle_is_feasible() {
        let q = GridCube::unit(2, 9).unwrap();
        let seg = build_mask(
            &q,
            &Geometry::Segment { from: vec![0.25, 0.5], to: vec![0.75, 0.5] },
        )
        .unwrap();
        let c = condenser_capacity(&q, &seg, 2, 2.0).unwrap();
        assert!(c.value > 0.0);
        assert!(c.diagnostics.residual < 1e-9);
        let s = sharp_capacity(&q, &seg, 2, 2.0, 1).unwrap();
        assert!(s.value >= c.value * (1.0 - 1e-9));
    }

    #[test]
    fn p_three_upper_bound() {
        let q = centered(17);
        let point = build_mask(&q, &Geometry::Point { at: vec![0.0] }).unwrap();
        let c = condenser_capacity(&q, &point, 1, 3.0).unwrap();
        // Linear tents are optimal for every p in 1D.
        assert!((c.value - 2.0).abs() < 1e-3, "{}", c.value);
    }
}
