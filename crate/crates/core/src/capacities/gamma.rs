use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    boundary_rows, check_class, check_orders, check_p, homogeneous, rel_err, BoundKind,
    CapacityResult, Diagnostics, Energy, FunctionClassSpec,
};
use crate::calculus::{gradient_energy, Region};
use crate::error::{Error, Result};
use crate::grid::{GridCube, GridFunction};
use crate::linalg::{gen_sym_eig, nullspace, solve_eqp, Constraints, SparseOp};
use crate::optim::projected_descent;
use crate::polynomials::{basis_matrix, Polynomial};

/// Polynomial capacity: the least `||grad^m u||_p^p / ||P||_{L^p(Q)}^p` over
/// `P` of degree `<= k` and `u` on the doubled cube vanishing to order
/// `m - 1` on its outer layers with `u - P` admissible on `Q`.
pub fn gamma_capacity(
    q: &GridCube,
    class: &FunctionClassSpec,
    m: usize,
    k: usize,
    p: f64,
) -> Result<CapacityResult> {
    check_p(p)?;
    check_orders(m, k)?;
    check_class(class, q, m)?;
    if class.nonnegative || class.pin.is_some() {
        return Err(Error::UnsupportedClass(
            "polynomial capacity takes plain trace classes only".into(),
        ));
    }
    let d = q.double()?;
    if class.constrained_nodes().0.is_empty() {
        return Ok(CapacityResult::zero(&d, BoundKind::ExactEigen, "empty constraint set"));
    }
    let lat = d.lattice();
    let n = lat.len();
    let energy = Energy::new(&lat, m)?;
    let basis_d = basis_matrix(&lat, d.center(), k);
    let dk = basis_d.ncols();

    let bnd = boundary_rows(&lat, m)?;
    let cls = class.rows_on(&d)?;
    let mut cons = homogeneous(n, bnd, dk);
    let cls_op = SparseOp::from_rows(n, cls.clone());
    let rhs = DMatrix::from_fn(cls.len(), dk, |r, j| {
        let col: Vec<f64> = basis_d.column(j).iter().copied().collect();
        cls_op.row_dot(r, &col)
    });
    cons.push_rows(cls, &rhs);

    let sol = solve_eqp(&energy.matrix, &DMatrix::zeros(n, dk), &cons)?;
    if let Some(j) = sol.feasible.iter().position(|f| !f) {
        return Err(Error::Infeasible(format!(
            "monomial {j} cannot be matched on K inside the doubled cube (residual {:.3e})",
            sol.residual[j]
        )));
    }
    let u = &sol.u;
    let h = u.transpose() * &energy.matrix * u;
    let h = (&h + h.transpose()) * 0.5;
    let basis_q = basis_matrix(&q.lattice(), q.center(), k);
    let gram = basis_q.transpose() * &basis_q * q.weight();
    let (vals, vecs) = gen_sym_eig(&h, &gram)?;

    let mut diagnostics = Diagnostics {
        starts: 1,
        iterations: 1,
        ..Default::default()
    };
    if p == 2.0 {
        let c: DVector<f64> = vecs.column(0).into_owned();
        let value = vals[0].max(0.0);
        let witness = GridFunction::new(&d, (u * &c).iter().copied().collect())?;
        let re = gradient_energy(&witness, m, 2.0, Region::Whole)?;
        diagnostics.reevaluation_error = if value < 1e-12 { re.abs() } else { rel_err(re, value) };
        diagnostics.residual = cons_residual(&cons, &witness, &c);
        return Ok(CapacityResult {
            value,
            witness: Some(witness),
            polynomial: Some(Polynomial::new(q.dim(), k, c.iter().copied().collect())?),
            bound: BoundKind::ExactEigen,
            feasible: true,
            diagnostics,
        });
    }

    // p != 2: convex inner problem for a set of candidate polynomials.
    let dense = DMatrix::from_fn(cons.rows.len(), n, |r, c| {
        let row = &cons.rows[r];
        row.idx.iter().zip(&row.val).filter(|(&i, _)| i == c).map(|(_, v)| *v).sum()
    });
    let z = nullspace(&dense, n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a3a);
    let mut candidates: Vec<DVector<f64>> = (0..dk).map(|j| vecs.column(j).into_owned()).collect();
    for _ in 0..8 {
        candidates.push(DVector::from_fn(dk, |_, _| rng.gen_range(-1.0..1.0)));
    }
    let wq = q.weight();
    let mut best: Option<(f64, Vec<f64>, DVector<f64>)> = None;
    let mut iterations = 0;
    for c in &candidates {
        let pq = &basis_q * c;
        let pnorm: f64 = pq.iter().map(|v| wq * v.abs().powf(p)).sum();
        if pnorm <= 0.0 {
            continue;
        }
        let u0: Vec<f64> = (u * c).iter().copied().collect();
        let lift = |y: &[f64]| -> Vec<f64> {
            let zy = &z * DVector::from_column_slice(y);
            u0.iter().zip(zy.iter()).map(|(a, b)| a + b).collect()
        };
        let f = |y: &[f64]| energy.ops.energy(&lift(y), p);
        let g = |y: &[f64]| {
            let gu = DVector::from_vec(energy.ops.energy_gradient(&lift(y), p));
            (z.transpose() * gu).iter().copied().collect()
        };
        let r = projected_descent(&f, &g, &|_| {}, &vec![0.0; z.ncols()], 2000, 1e-12);
        iterations += r.iterations;
        let ratio = r.f / pnorm;
        if best.as_ref().map_or(true, |b| ratio < b.0) {
            best = Some((ratio, lift(&r.x), c.clone()));
        }
    }
    let (value, uw, c) = best.ok_or_else(|| Error::Infeasible("no usable candidate".into()))?;
    let witness = GridFunction::new(&d, uw)?;
    let re = gradient_energy(&witness, m, p, Region::Whole)?;
    let pq = &basis_q * &c;
    let pnorm: f64 = pq.iter().map(|v| wq * v.abs().powf(p)).sum();
    diagnostics.reevaluation_error = rel_err(re / pnorm, value);
    diagnostics.residual = cons_residual(&cons, &witness, &c);
    diagnostics.starts = candidates.len();
    diagnostics.iterations = iterations;
    Ok(CapacityResult {
        value,
        witness: Some(witness),
        polynomial: Some(Polynomial::new(q.dim(), k, c.iter().copied().collect())?),
        bound: BoundKind::UpperBoundMultistart,
        feasible: true,
        diagnostics,
    })
}

/// Largest normalized residual of the multi-column constraints at the
/// combination `c` of their right-hand sides.
fn cons_residual(cons: &Constraints, u: &GridFunction, c: &DVector<f64>) -> f64 {
    let rhs = &cons.rhs * c;
    cons.rows
        .iter()
        .enumerate()
        .map(|(r, row)| (row.dot(u.values()) - rhs[r]).abs() / row.scale().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}
