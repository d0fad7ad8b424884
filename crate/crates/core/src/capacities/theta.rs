use nalgebra::{DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    check_class, check_orders, check_p, rel_err, BoundKind, CapacityResult, Diagnostics, Energy,
    FunctionClassSpec,
};
use crate::calculus::{gradient_energy, gradient_seminorm, Region};
use crate::error::{Error, Result};
use crate::grid::{GridCube, GridFunction};
use crate::linalg::{nullspace, solve_eqp, BoundQp, Constraints, SparseRow};
use crate::optim::NelderMead;
use crate::polynomials::{basis_dim, eval_poly, monomials, Polynomial, Projector};

/// Settings of the multistart search.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaOptions {
    pub alpha: f64,
    pub starts: usize,
    pub seed: u64,
    /// Projection coefficients of a known good test function (for example a
    /// polynomial-capacity witness), used as an extra start.
    pub hint: Option<Vec<f64>>,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            starts: 32,
            seed: 0x7e7a,
            hint: None,
        }
    }
}

/// Polynomial test-set capacity with default search settings.
pub fn theta_capacity(
    q: &GridCube,
    class: &FunctionClassSpec,
    m: usize,
    k: usize,
    p: f64,
    alpha: f64,
) -> Result<CapacityResult> {
    theta_capacity_with(
        q,
        class,
        m,
        k,
        p,
        &ThetaOptions {
            alpha,
            ..Default::default()
        },
    )
}

const LADDER: std::ops::RangeInclusive<i32> = -4..=14;
const NONNEG_LADDER: [f64; 5] = [0.0, 1e-1, 1e1, 1e3, 1e5];

#[derive(Debug, Clone)]
struct Candidate {
    value: f64,
    u: Vec<f64>,
}

struct Setup<'a> {
    q: &'a GridCube,
    class: &'a FunctionClassSpec,
    m: usize,
    k: usize,
    alpha: f64,
    n: usize,
    w: f64,
    energy: Energy,
    proj: Projector,
    weights: Option<Vec<f64>>,
    cls: Vec<SparseRow>,
    gram: DMatrix<f64>,
    low: Vec<bool>,
}

impl Setup<'_> {
    /// Equality rows `class u = 0`, `R u = V t` for every column of `v`.
    fn constraints(&self, v: &DMatrix<f64>) -> Constraints {
        let r = v.ncols();
        let mut cons = Constraints::homogeneous(self.n, self.cls.clone(), r);
        let map = self.proj.map();
        let rows = (0..map.nrows())
            .map(|i| SparseRow::from_dense(map.row(i).iter().copied().collect::<Vec<_>>().as_slice()))
            .collect();
        cons.push_rows(rows, v);
        cons
    }

    fn shifted(&self, mu: f64) -> DMatrix<f64> {
        let mut a = self.energy.matrix.clone();
        for i in 0..self.n {
            a[(i, i)] += mu * self.w;
        }
        a
    }

    fn masked_gram(&self, keep_low: bool) -> DMatrix<f64> {
        let d = self.gram.nrows();
        DMatrix::from_fn(d, d, |i, j| {
            if self.low[i] == keep_low && self.low[j] == keep_low {
                self.gram[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// Independent re-evaluation of a candidate: class membership, both
    /// test-set inequalities and the ratio, all through the public
    /// polynomial and calculus routines.
    fn post_check(&self, u: &[f64], p: f64) -> Result<Option<(f64, f64)>> {
        let gf = GridFunction::new(self.q, u.to_vec())?;
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let residual = self
            .cls
            .iter()
            .map(|row| row.dot(u).abs() / row.scale().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        if residual > 1e-8 * scale.max(1.0) {
            return Ok(None);
        }
        if self.class.nonnegative && u.iter().any(|&v| v < -1e-10 * scale.max(1e-300)) {
            return Ok(None);
        }
        let proj = Projector::for_grid(self.q, self.m - 1, self.weights.as_deref())?.project(u, p)?;
        let pi = proj.projection;
        if let Some(pin) = &self.class.pin {
            let target = lift_pin(&pin.poly, self.m - 1)?;
            let tol = 1e-8 * (1.0 + target.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            if pi.coeffs().iter().zip(&target).any(|(a, b)| (a - b).abs() > tol) {
                return Ok(None);
            }
        }
        let norm = |poly: &Polynomial| -> Result<f64> {
            let v = eval_poly(poly, self.q)?;
            Ok(gradient_seminorm(&v, 0, p, Region::Whole)?.value)
        };
        let n_low = norm(&pi.degree_part(self.k))?;
        let n_co = norm(&pi.complement_part(self.k))?;
        let n_all = norm(&pi)?;
        let pv = eval_poly(&pi, self.q)?;
        let diff = gf.combine(1.0, &pv, -1.0)?;
        let n_res = gradient_seminorm(&diff, 0, p, Region::Whole)?.value;
        let slack = 1e-7;
        if n_low <= 0.0 || n_low < self.alpha * n_co * (1.0 - slack) || n_res > 0.5 * n_all * (1.0 + slack) {
            return Ok(None);
        }
        let num = gradient_energy(&gf, self.m, p, Region::Whole)?;
        Ok(Some((num / n_low.powf(p), residual)))
    }
}

/// Coefficients of `poly` in the basis of degree `deg`.
fn lift_pin(poly: &Polynomial, deg: usize) -> Result<Vec<f64>> {
    let d = basis_dim(poly.dim(), deg);
    let c = poly.coeffs();
    if c.len() >= d {
        if c[d..].iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pin has terms above degree {deg}"
            )));
        }
        Ok(c[..d].to_vec())
    } else {
        let mut out = c.to_vec();
        out.resize(d, 0.0);
        Ok(out)
    }
}

fn quad(a: &DMatrix<f64>, t: &[f64]) -> f64 {
    let v = DVector::from_column_slice(t);
    v.dot(&(a * &v))
}

fn empty_result(q: &GridCube, note: &str) -> CapacityResult {
    CapacityResult {
        value: 1.0,
        witness: None,
        polynomial: None,
        bound: BoundKind::UpperBoundMultistart,
        feasible: false,
        diagnostics: Diagnostics {
            notes: vec![note.to_string(), format!("grid of {} nodes", q.node_count())],
            ..Default::default()
        },
    }
}

/// Upper bound on the test-set capacity: the least ratio
/// `||grad^m u||^p / ||Pi_{m-1,k} u||^p` over admissible `u` whose
/// projection is dominated by its degree-`k` part and approximates `u`,
/// capped at one.
pub fn theta_capacity_with(
    q: &GridCube,
    class: &FunctionClassSpec,
    m: usize,
    k: usize,
    p: f64,
    opts: &ThetaOptions,
) -> Result<CapacityResult> {
    check_p(p)?;
    check_orders(m, k)?;
    check_class(class, q, m)?;
    if !(opts.alpha > 0.0 && opts.alpha.is_finite()) {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    let lat = q.lattice();
    let n = lat.len();
    let weights = class.pin.as_ref().and_then(|pin| pin.weights.clone());
    let proj = Projector::for_grid(q, m - 1, weights.as_deref())?;
    let w = q.weight();
    let gram = proj.basis().transpose() * proj.basis() * w;
    let low = monomials(q.dim(), m - 1).iter().map(|a| a.order() <= k).collect();
    let setup = Setup {
        q,
        class,
        m,
        k,
        alpha: opts.alpha,
        n,
        w,
        energy: Energy::new(&lat, m)?,
        proj,
        weights,
        cls: class.rows_on(q)?,
        gram,
        low,
    };
    let d = setup.gram.nrows();

    // Parametrize the attainable projection coefficients as c = V t.
    let mut v = match &class.pin {
        Some(pin) => DMatrix::from_column_slice(d, 1, &lift_pin(&pin.poly, m - 1)?),
        None => DMatrix::identity(d, d),
    };
    let zeros = |r: usize| DMatrix::zeros(n, r);
    let probe = solve_eqp(&setup.energy.matrix, &zeros(v.ncols()), &setup.constraints(&v))?;
    if probe.feasible.iter().any(|f| !f) {
        if class.pin.is_some() {
            return Ok(empty_result(q, "pinned class is empty"));
        }
        let mut dense = DMatrix::zeros(setup.cls.len(), n);
        for (r, row) in setup.cls.iter().enumerate() {
            for (&i, &x) in row.idx.iter().zip(&row.val) {
                dense[(r, i)] += x;
            }
        }
        let z = nullspace(&dense, n);
        if z.ncols() == 0 {
            return Ok(empty_result(q, "class forces the zero function"));
        }
        let reach = setup.proj.map() * z;
        let svd = SVD::new(reach, true, false);
        let smax = svd.singular_values.iter().fold(0.0f64, |a, b| a.max(*b));
        let uu = svd.u.expect("u");
        let cols: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&j| svd.singular_values[j] > 1e-10 * smax.max(1e-300) && smax > 0.0)
            .collect();
        if cols.is_empty() {
            return Ok(empty_result(q, "class leaves no nonzero projection"));
        }
        v = DMatrix::from_fn(d, cols.len(), |i, j| uu[(i, cols[j])]);
    }
    let r = v.ncols();
    let gt = v.transpose() * &setup.gram * &v;
    let glow = v.transpose() * setup.masked_gram(true) * &v;
    let gco = v.transpose() * setup.masked_gram(false) * &v;
    let phi_v = setup.proj.basis() * &v;
    let cons = setup.constraints(&v);

    let mus: Vec<f64> = if class.nonnegative {
        NONNEG_LADDER.to_vec()
    } else {
        std::iter::once(0.0)
            .chain(LADDER.map(|e| 10f64.powf(e as f64 / 2.0)))
            .collect()
    };
    let mut forms = Vec::with_capacity(mus.len());
    for &mu in &mus {
        let sol = solve_eqp(&setup.shifted(mu), &zeros(r), &cons)?;
        if sol.feasible.iter().any(|f| !f) {
            continue;
        }
        let u = sol.u;
        let h = u.transpose() * &setup.energy.matrix * &u;
        let diff = &u - &phi_v;
        let res = diff.transpose() * &diff * w;
        forms.push((mu, u, h, res));
    }
    if forms.is_empty() {
        return Ok(empty_result(q, "no penalty level produced a feasible solve"));
    }

    let alpha2 = opts.alpha * opts.alpha;
    // Linear-in-t evaluation for the plain classes.
    let eval_linear = |t: &[f64]| -> (f64, Option<Candidate>) {
        let nrm = quad(&gt, t);
        if !(nrm > 0.0) {
            return (2e6, None);
        }
        let den = quad(&glow, t) / nrm;
        let co = quad(&gco, t) / nrm;
        let viol_a = (alpha2 * co - den).max(0.0);
        let mut best: Option<(f64, usize)> = None;
        let mut viol_b = f64::INFINITY;
        for (j, (_, _, h, res)) in forms.iter().enumerate() {
            let rr = quad(res, t) / nrm;
            viol_b = viol_b.min((rr - 0.25).max(0.0));
            if rr <= 0.25 && den > 1e-14 {
                let val = quad(h, t) / (den * nrm);
                if best.map_or(true, |b| val < b.0) {
                    best = Some((val, j));
                }
            }
        }
        match best {
            Some((val, j)) if viol_a == 0.0 => {
                let u = &forms[j].1 * DVector::from_column_slice(t);
                (val, Some(Candidate { value: val, u: u.iter().copied().collect() }))
            }
            _ => (1e6 + viol_a + viol_b.min(1e5), None),
        }
    };
    let eval_nonneg = |t: &[f64]| -> (f64, Option<Candidate>) {
        let nrm = quad(&gt, t);
        if !(nrm > 0.0) {
            return (2e6, None);
        }
        let den = quad(&glow, t) / nrm;
        let co = quad(&gco, t) / nrm;
        let viol_a = (alpha2 * co - den).max(0.0);
        let tv = DVector::from_column_slice(t);
        let c = &phi_v * &tv;
        let mut best: Option<Candidate> = None;
        let mut viol_b = f64::INFINITY;
        for (mu, ulin, _, _) in &forms {
            let u0 = ulin * &tv;
            let scale = u0.amax().max(1e-300);
            let u = if u0.iter().all(|&x| x >= -1e-12 * scale) {
                u0
            } else {
                let a = setup.shifted(*mu);
                let g = -&c * (*mu * w);
                let mut eq = setup.constraints(&DMatrix::zeros(d, 1));
                let rhs = &v * &tv;
                let nc = setup.cls.len();
                for i in 0..d {
                    eq.rhs[(nc + i, 0)] = rhs[i];
                }
                let lower: Vec<(usize, f64)> = (0..n).map(|i| (i, 0.0)).collect();
                let qp = BoundQp { a: &a, g: &g, eq: &eq, lower: &lower };
                let start: Vec<bool> = u0.iter().map(|&x| x < 0.0).collect();
                match qp.solve_pdas(start, 40) {
                    Ok(s) if s.bound_violation <= 1e-10 * scale && s.eq_residual <= 1e-8 => s.u,
                    _ => continue,
                }
            };
            let diff = &u - &c;
            let rr = diff.dot(&diff) * w / nrm;
            viol_b = viol_b.min((rr - 0.25).max(0.0));
            if rr <= 0.25 && den > 1e-14 && viol_a == 0.0 {
                let val = u.dot(&(&setup.energy.matrix * &u)) / (den * nrm);
                if best.as_ref().map_or(true, |b| val < b.value) {
                    best = Some(Candidate { value: val, u: u.iter().copied().collect() });
                }
            }
        }
        match best {
            Some(cand) => (cand.value, Some(cand)),
            None => (1e6 + viol_a + viol_b.min(1e5), None),
        }
    };
    let eval: &dyn Fn(&[f64]) -> (f64, Option<Candidate>) =
        if class.nonnegative { &eval_nonneg } else { &eval_linear };

    // Starts: canonical directions, the hint, then seeded random directions.
    let budget = if class.nonnegative { opts.starts.min(8) } else { opts.starts }.max(1);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if r == 1 {
        starts.push(vec![1.0]);
        starts.push(vec![-1.0]);
    } else {
        if let Some(h) = &opts.hint {
            if h.len() == d {
                let t = v.transpose() * DVector::from_column_slice(h);
                if t.norm() > 0.0 {
                    starts.push(t.iter().copied().collect());
                }
            }
        }
        for j in 0..r {
            let mut e = vec![0.0; r];
            e[j] = 1.0;
            starts.push(e);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        while starts.len() < budget.max(r + 1) {
            starts.push((0..r).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        }
        starts.truncate(budget.max(r + 1));
    }

    let nm = NelderMead {
        max_evals: if class.nonnegative { 60 * r + 40 } else { 300 * r + 100 },
        ftol: 1e-12,
        xtol: 1e-9,
        step: 0.3,
    };
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut evals = 0;
    for s in &starts {
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s: Vec<f64> = s.iter().map(|x| x / norm).collect();
        let mut best: Option<Candidate> = None;
        let mut obj = |t: &[f64]| {
            let (f, cand) = eval(t);
            if let Some(c) = cand {
                if best.as_ref().map_or(true, |b| c.value < b.value) {
                    best = Some(c);
                }
            }
            f
        };
        if r == 1 {
            obj(&s);
            evals += 1;
        } else {
            evals += nm.minimize(&mut obj, &s).evals;
        }
        if let Some(b) = best {
            candidates.push(b);
        }
    }
    candidates.sort_by(|a, b| a.value.total_cmp(&b.value));

    let mut diagnostics = Diagnostics {
        starts: starts.len(),
        iterations: evals,
        ..Default::default()
    };
    for cand in &candidates {
        let Some((ratio, residual)) = setup.post_check(&cand.u, p)? else {
            continue;
        };
        if p == 2.0 {
            diagnostics.reevaluation_error = rel_err(ratio, cand.value);
        }
        diagnostics.residual = residual;
        let witness = GridFunction::new(q, cand.u.clone())?;
        let pi = Projector::for_grid(q, m - 1, setup.weights.as_deref())?.project(&cand.u, p)?;
        if ratio > 1.0 {
            diagnostics.notes.push(format!("best ratio {ratio:.6e} capped at 1"));
        }
        return Ok(CapacityResult {
            value: ratio.min(1.0),
            witness: Some(witness),
            polynomial: Some(pi.projection),
            bound: BoundKind::UpperBoundMultistart,
            feasible: true,
            diagnostics,
        });
    }
    let mut out = empty_result(q, "no start reached the test set");
    out.diagnostics.starts = starts.len();
    out.diagnostics.iterations = evals;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacities::{gamma_capacity, Pin};
    use crate::grid::{build_mask, CompactMask, Geometry};

    #[test]
    fn constant_pin_gives_zero() {
        let q = GridCube::unit(1, 9).unwrap();
        let pin = Pin {
            poly: Polynomial::new(1, 0, vec![1.0]).unwrap(),
            weights: None,
        };
        for m in 1..=2 {
            let c = FunctionClassSpec::unconstrained(m, &q).with_pin(pin.clone());
            let r = theta_capacity(&q, &c, m, 0, 2.0, 4.0).unwrap();
            assert!(r.value < 1e-12, "m = {m}: {}", r.value);
            assert!(r.feasible);
        }
    }

    #[test]
    fn class_forcing_zero_is_one() {
        let q = GridCube::unit(1, 9).unwrap();
        let all = CompactMask::from_nodes(&q, &(0..9).collect::<Vec<_>>()).unwrap();
        let c = FunctionClassSpec::partial(0, 1, all).unwrap();
        let r = theta_capacity(&q, &c, 1, 0, 2.0, 4.0).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(!r.feasible);
    }

    #[test]
    fn bounded_by_gamma_and_at_most_one() {
        let q = GridCube::new(1, 33, &[0.0], 1.0).unwrap();
        let k = build_mask(&q, &Geometry::Point { at: vec![0.0] }).unwrap();
        let c = FunctionClassSpec::full(1, 1, k).unwrap();
        let t = theta_capacity(&q, &c, 1, 0, 2.0, 4.0).unwrap();
        let g = gamma_capacity(&q, &c, 1, 0, 2.0).unwrap();
        assert!(t.value <= 1.0 && t.value > 0.0);
        assert!(t.value <= 10.0 * g.value, "{} vs {}", t.value, g.value);
        assert!(t.diagnostics.reevaluation_error < 1e-6);
    }

    #[test]
    fn second_order_witness_is_in_the_test_set() {
        let q = GridCube::unit(2, 9).unwrap();
        let k = build_mask(&q, &Geometry::Point { at: vec![0.5, 0.5] }).unwrap();
        let c = FunctionClassSpec::partial(1, 2, k).unwrap();
        let t = theta_capacity(&q, &c, 2, 0, 2.0, 4.0).unwrap();
        assert!(t.feasible);
        assert!(t.value > 0.0 && t.value <= 1.0);
        assert!(t.diagnostics.residual < 1e-8);
    }

    #[test]
    fn nonnegative_variant_runs() {
        let q = GridCube::unit(1, 17).unwrap();
        let k = build_mask(&q, &Geometry::Point { at: vec![0.5] }).unwrap();
        let c = FunctionClassSpec::partial(0, 2, k).unwrap().with_nonnegative(true);
        let t = theta_capacity(&q, &c, 2, 1, 2.0, 4.0).unwrap();
        assert!(t.feasible);
        let u = t.witness.unwrap();
        assert!(u.values().iter().all(|&x| x >= -1e-10));
    }
}
