//! Sharp discrete Poincaré constants and equivalence reports against the
//! capacities.

mod report;

pub use report::{
    equivalence_report, member_record, nonnegative_bound_samples, EquivalenceConfig,
    EquivalenceReport, FittedInterval, MemberRecord,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::OrderOps;
use crate::capacities::{BoundKind, Diagnostics, FunctionClassSpec};
use crate::error::{Error, Result};
use crate::grid::{GridCube, GridFunction};
use crate::linalg::{gen_sym_eig, nullspace, sym_eig, BoundQp, Constraints, SparseOp};
use crate::optim::projected_descent;
use crate::polynomials::{project, Projector};

/// Which inequality the constant belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PoincareMode {
    /// `||u|| <= C (||grad^{k+1} u|| + ||grad^m u||)`.
    TwoTerm,
    /// `||u|| <= c0 (||grad^{k+1} u|| + C ||grad^m u||)` with `c0` fixed.
    Hedberg { c0: f64 },
}

/// A Poincaré constant request on the cube of `class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareQuery {
    pub class: FunctionClassSpec,
    pub m: usize,
    pub k: usize,
    pub p: f64,
    pub p0: f64,
    pub q: f64,
    pub mode: PoincareMode,
    /// Sample count of the sampled estimator.
    pub samples: usize,
    pub seed: u64,
}

impl PoincareQuery {
    pub fn new(class: FunctionClassSpec, k: usize) -> Self {
        let m = class.m;
        Self {
            class,
            m,
            k,
            p: 2.0,
            p0: 2.0,
            q: 2.0,
            mode: PoincareMode::TwoTerm,
            samples: 64,
            seed: 0x90c4,
        }
    }

    pub fn with_mode(mut self, mode: PoincareMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_exponents(mut self, p: f64, p0: f64, q: f64) -> Self {
        self.p = p;
        self.p0 = p0;
        self.q = q;
        self
    }

    pub fn grid(&self) -> &GridCube {
        self.class.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.class.validate()?;
        if self.class.m != self.m {
            return Err(Error::InvalidParameter(format!(
                "class order {} differs from m = {}",
                self.class.m, self.m
            )));
        }
        if self.k + 1 > self.m {
            return Err(Error::InvalidParameter(format!(
                "need k + 1 <= m, got m = {}, k = {}",
                self.m, self.k
            )));
        }
        for (name, v) in [("p", self.p), ("p0", self.p0)] {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be >= 1")));
            }
        }
        let n = self.grid().dim() as f64;
        let mp = self.m as f64 * self.p;
        let sobolev = if n > mp {
            self.q <= n * self.p / (n - mp)
        } else {
            self.q.is_finite()
        };
        let supported = self.q == self.p
            || (self.p == 2.0 && (self.q == 2.0 || self.q == 4.0) && self.grid().dim() <= 2);
        if !(self.q >= 1.0 && sobolev && supported) {
            return Err(Error::InvalidParameter(format!(
                "target exponent q = {} is not supported for p = {}, N = {}",
                self.q,
                self.p,
                self.grid().dim()
            )));
        }
        if let PoincareMode::Hedberg { c0 } = self.mode {
            if !(c0 > 0.0 && c0.is_finite()) {
                return Err(Error::InvalidParameter("c0 must be positive".into()));
            }
        }
        if self.class.pin.is_some() {
            return Err(Error::UnsupportedClass("pinned classes have no Poincaré constant".into()));
        }
        Ok(())
    }

    fn exact(&self) -> bool {
        self.p == 2.0 && self.p0 == 2.0 && self.q == 2.0 && !self.class.nonnegative
    }
}

/// A constant with its extremal function. `value` may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareResult {
    #[serde(with = "crate::extended")]
    pub value: f64,
    pub witness: Option<GridFunction>,
    pub bound: BoundKind,
    /// Factor between the quadratic surrogate and the sum of norms.
    pub distortion: f64,
    pub diagnostics: Diagnostics,
}

impl PoincareResult {
    fn plain(value: f64, bound: BoundKind, note: &str) -> Self {
        Self {
            value,
            witness: None,
            bound,
            distortion: 1.0,
            diagnostics: Diagnostics {
                notes: vec![note.to_string()],
                ..Default::default()
            },
        }
    }
}

/// Relative eigenvalue floor below which a denominator counts as zero.
const NULL_TOL: f64 = 1e-10;

fn class_basis(class: &FunctionClassSpec, n: usize) -> Result<DMatrix<f64>> {
    let rows = class.rows_on(class.grid())?;
    if rows.is_empty() {
        return Ok(DMatrix::identity(n, n));
    }
    Ok(nullspace(&SparseOp::from_rows(n, rows).to_dense(), n))
}

fn restrict(a: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let h = z.transpose() * a * z;
    (&h + h.transpose()) * 0.5
}

fn to_nodes(z: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    (z * y).iter().copied().collect()
}

/// Smallest constant of the two-term or split Poincaré inequality over the
/// class. Exact (quadratic surrogate) for `p = p0 = q = 2`, otherwise a
/// sampled lower bound.
pub fn poincare_constant(query: &PoincareQuery) -> Result<PoincareResult> {
    query.validate()?;
    let grid = query.grid();
    let lat = grid.lattice();
    let n = lat.len();
    let low = OrderOps::new(&lat, query.k + 1, None)?;
    let top = OrderOps::new(&lat, query.m, None)?;
    let single = query.k + 1 == query.m;
    if !query.exact() {
        return sampled(query, &low, &top);
    }
    let z = class_basis(&query.class, n)?;
    if z.ncols() == 0 {
        return Ok(PoincareResult::plain(0.0, BoundKind::ExactEigen, "class is the zero function"));
    }
    let w = grid.weight();
    let e_low = restrict(&low.energy_matrix(n), &z);
    let e_top = restrict(&top.energy_matrix(n), &z);
    let mass = DMatrix::identity(z.ncols(), z.ncols()) * w;
    let scale = e_top.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(w);
    let mut diagnostics = Diagnostics {
        starts: 1,
        iterations: 1,
        ..Default::default()
    };
    match query.mode {
        PoincareMode::TwoTerm => {
            let den = if single { e_top.clone() } else { &e_low + &e_top };
            let (vals, vecs) = gen_sym_eig(&den, &mass)?;
            let lmin = vals[0];
            let witness = GridFunction::new(grid, to_nodes(&z, &vecs.column(0).into_owned()))?;
            if lmin <= NULL_TOL * scale {
                diagnostics.notes.push("admissible function with zero denominator".into());
                return Ok(PoincareResult {
                    value: f64::INFINITY,
                    witness: Some(witness),
                    bound: BoundKind::ExactEigen,
                    distortion: 1.0,
                    diagnostics,
                });
            }
            let value = lmin.sqrt().recip();
            let u = witness.values();
            let re_den = if single { top.energy(u, 2.0) } else { low.energy(u, 2.0) + top.energy(u, 2.0) };
            let re_num: f64 = u.iter().map(|v| w * v * v).sum();
            diagnostics.reevaluation_error = crate::capacities::rel_err((re_num / re_den).sqrt(), value);
            Ok(PoincareResult {
                value,
                witness: Some(witness),
                bound: BoundKind::ExactEigen,
                distortion: if single { 1.0 } else { 2f64.sqrt() },
                diagnostics,
            })
        }
        PoincareMode::Hedberg { c0 } => {
            // Smallest s with mass / c0^2 - E_low - s E_top <= 0 on the class.
            let base = &mass / (c0 * c0) - &e_low;
            let lam = |s: f64| -> Result<(f64, DMatrix<f64>)> {
                let (vals, vecs) = sym_eig(&(&base - &e_top * s))?;
                Ok((vals[vals.len() - 1], vecs))
            };
            let tol = 1e-12 * base.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(w);
            let (l0, v0) = lam(0.0)?;
            if l0 <= tol {
                let last = v0.ncols() - 1;
                let witness = GridFunction::new(grid, to_nodes(&z, &v0.column(last).into_owned()))?;
                diagnostics.notes.push("first term alone suffices".into());
                return Ok(PoincareResult {
                    value: 0.0,
                    witness: Some(witness),
                    bound: BoundKind::ExactEigen,
                    distortion: 2f64.sqrt(),
                    diagnostics,
                });
            }
            let mut hi = 1.0;
            let cap = 1e16;
            while lam(hi)?.0 > tol {
                hi *= 4.0;
                if hi > cap {
                    diagnostics.notes.push("split fails on a function with no top-order energy".into());
                    return Ok(PoincareResult {
                        value: f64::INFINITY,
                        witness: None,
                        bound: BoundKind::ExactEigen,
                        distortion: 2f64.sqrt(),
                        diagnostics,
                    });
                }
            }
            let mut lo = 0.0;
            let mut iterations = 0;
            while hi - lo > 1e-12 * hi && iterations < 200 {
                let mid = 0.5 * (lo + hi);
                if lam(mid)?.0 > tol {
                    lo = mid;
                } else {
                    hi = mid;
                }
                iterations += 1;
            }
            let (_, vecs) = lam(lo)?;
            let last = vecs.ncols() - 1;
            let witness = GridFunction::new(grid, to_nodes(&z, &vecs.column(last).into_owned()))?;
            diagnostics.iterations = iterations;
            Ok(PoincareResult {
                value: hi.sqrt(),
                witness: Some(witness),
                bound: BoundKind::ExactEigen,
                distortion: 2f64.sqrt(),
                diagnostics,
            })
        }
    }
}

/// Seeded test functions on the grid: smooth bumps and random polynomials
/// times a bump.
fn sample_functions(grid: &GridCube, count: usize, degree: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lat = grid.lattice();
    let lo = grid.lower_corner();
    let side = grid.side_length();
    let dim = grid.dim();
    let mons = crate::polynomials::monomials(dim, degree);
    (0..count)
        .map(|s| {
            let c: Vec<f64> = (0..dim).map(|a| lo[a] + side * rng.gen_range(0.0..1.0)).collect();
            let r = side * rng.gen_range(0.15..0.8);
            let coeffs: Vec<f64> = mons.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            (0..lat.len())
                .map(|i| {
                    let x = lat.coords(i);
                    let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (r * r);
                    let bump = (1.0 - d2).max(0.0).powi(3);
                    if s % 2 == 0 {
                        bump
                    } else {
                        let poly: f64 = mons
                            .iter()
                            .zip(&coeffs)
                            .map(|(alpha, co)| {
                                co * alpha
                                    .0
                                    .iter()
                                    .zip(&x)
                                    .zip(grid.center())
                                    .map(|((&e, xi), ci)| ((xi - ci) / side).powi(e as i32))
                                    .product::<f64>()
                            })
                            .sum();
                        poly * bump
                    }
                })
                .collect()
        })
        .collect()
}

/// Nearest nonnegative class member in the Euclidean sense.
fn nonnegative_projection(class: &FunctionClassSpec, u: &[f64]) -> Result<Option<Vec<f64>>> {
    let n = u.len();
    let rows = class.rows_on(class.grid())?;
    let cons = Constraints::homogeneous(n, rows, 1);
    let a = DMatrix::identity(n, n);
    let g = DVector::from_iterator(n, u.iter().map(|v| -v));
    let lower: Vec<(usize, f64)> = (0..n).map(|i| (i, 0.0)).collect();
    let qp = BoundQp {
        a: &a,
        g: &g,
        eq: &cons,
        lower: &lower,
    };
    let start: Vec<bool> = u.iter().map(|v| *v <= 0.0).collect();
    let mut sol = qp.solve_pdas(start, 100)?;
    if !sol.converged {
        sol = qp.solve_primal(vec![false; n], 20 * n)?;
    }
    if !sol.converged || sol.eq_residual > 1e-8 {
        return Ok(None);
    }
    Ok(Some(sol.u.iter().map(|v| v.max(0.0)).collect()))
}

/// Ratio of the target norm to the denominator of the inequality, or the
/// split constant in Hedberg mode. `None` when the denominator vanishes.
fn sample_ratio(query: &PoincareQuery, mass: &OrderOps, low: &OrderOps, top: &OrderOps, u: &[f64]) -> Option<f64> {
    let num = mass.seminorm(u, query.q);
    if num <= 0.0 {
        return None;
    }
    let a = low.seminorm(u, query.p0);
    let b = top.seminorm(u, query.p);
    match query.mode {
        PoincareMode::TwoTerm => {
            let den = if query.k + 1 == query.m && query.p0 == query.p { b } else { a + b };
            (den > 0.0).then(|| num / den)
        }
        PoincareMode::Hedberg { c0 } => {
            let excess = num / c0 - a;
            if excess <= 0.0 {
                Some(0.0)
            } else {
                (b > 0.0).then(|| excess / b)
            }
        }
    }
}

fn sampled(query: &PoincareQuery, low: &OrderOps, top: &OrderOps) -> Result<PoincareResult> {
    let grid = query.grid();
    let lat = grid.lattice();
    let n = lat.len();
    let mass = OrderOps::new(&lat, 0, None)?;
    let raw = sample_functions(grid, query.samples.max(1), query.m + 1, query.seed);
    let mut notes = Vec::new();
    let z = if query.class.nonnegative {
        None
    } else {
        let z = class_basis(&query.class, n)?;
        if z.ncols() == 0 {
            return Ok(PoincareResult::plain(0.0, BoundKind::LowerBound, "class is the zero function"));
        }
        Some(z)
    };
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    for s in &raw {
        let u = match &z {
            Some(z) => to_nodes(z, &(z.transpose() * DVector::from_column_slice(s))),
            None => match nonnegative_projection(&query.class, s)? {
                Some(u) => u,
                None => continue,
            },
        };
        match sample_ratio(query, &mass, low, top, &u) {
            Some(r) => scored.push((r, u)),
            None if mass.seminorm(&u, query.q) > 0.0 => {
                notes.push("sample with zero denominator".into());
                return Ok(PoincareResult {
                    value: f64::INFINITY,
                    witness: Some(GridFunction::new(grid, u)?),
                    bound: BoundKind::LowerBound,
                    distortion: 1.0,
                    diagnostics: Diagnostics {
                        starts: raw.len(),
                        notes,
                        ..Default::default()
                    },
                });
            }
            None => {}
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut iterations = 0;
    if let Some(z) = &z {
        // Local ascent of the log ratio from the best samples.
        let two_term = matches!(query.mode, PoincareMode::TwoTerm);
        let seeds: Vec<Vec<f64>> = scored.iter().take(4).map(|(_, u)| u.clone()).collect();
        for u0 in seeds {
            let y0: Vec<f64> = (z.transpose() * DVector::from_vec(u0)).iter().copied().collect();
            let lift = |y: &[f64]| to_nodes(z, &DVector::from_column_slice(y));
            let f = |y: &[f64]| match sample_ratio(query, &mass, low, top, &lift(y)) {
                Some(r) if r > 0.0 => -r.ln(),
                _ => f64::INFINITY,
            };
            let g = |y: &[f64]| {
                let u = lift(y);
                let num = mass.seminorm(&u, query.q);
                let gn = mass.seminorm_gradient(&u, query.q);
                let a = low.seminorm(&u, query.p0);
                let ga = low.seminorm_gradient(&u, query.p0);
                let b = top.seminorm(&u, query.p);
                let gb = top.seminorm_gradient(&u, query.p);
                let gu: Vec<f64> = if two_term {
                    let (den, gd): (f64, Vec<f64>) = if query.k + 1 == query.m && query.p0 == query.p {
                        (b, gb)
                    } else {
                        (a + b, ga.iter().zip(&gb).map(|(x, y)| x + y).collect())
                    };
                    (0..n).map(|i| -(gn[i] / num - gd[i] / den)).collect()
                } else {
                    let c0 = match query.mode {
                        PoincareMode::Hedberg { c0 } => c0,
                        PoincareMode::TwoTerm => 1.0,
                    };
                    let ex = num / c0 - a;
                    (0..n)
                        .map(|i| -((gn[i] / c0 - ga[i]) / ex - gb[i] / b))
                        .collect()
                };
                (z.transpose() * DVector::from_vec(gu)).iter().copied().collect()
            };
            let r = projected_descent(&f, &g, &|_| {}, &y0, 3000, 1e-12);
            iterations += r.iterations;
            let u = lift(&r.x);
            if let Some(v) = sample_ratio(query, &mass, low, top, &u) {
                scored.push((v, u));
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    } else {
        notes.push("nonnegative class: samples only, no ascent".into());
    }
    let Some((value, u)) = scored.into_iter().next() else {
        return Ok(PoincareResult::plain(0.0, BoundKind::LowerBound, "no admissible sample"));
    };
    Ok(PoincareResult {
        value,
        witness: Some(GridFunction::new(grid, u)?),
        bound: BoundKind::LowerBound,
        distortion: 1.0,
        diagnostics: Diagnostics {
            starts: raw.len(),
            iterations,
            notes,
            ..Default::default()
        },
    })
}

/// Smallest `A` with `sum_{i<=r} ||grad^i (u - Pi u)|| <= A ||grad^{r+1} u||`
/// over all grid functions. Exact (quadratic surrogate) for `p = 2`,
/// sampled lower bound otherwise.
pub fn weak_poincare_constant(grid: &GridCube, r: usize, p: f64) -> Result<PoincareResult> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("exponent p = {p} must be >= 1")));
    }
    let lat = grid.lattice();
    let n = lat.len();
    let top = OrderOps::new(&lat, r + 1, None)?;
    let ladder = (0..=r)
        .map(|i| OrderOps::new(&lat, i, None))
        .collect::<Result<Vec<_>>>()?;
    if p == 2.0 {
        let proj = Projector::for_grid(grid, r, None)?;
        let z = nullspace(proj.map(), n);
        let mut num = DMatrix::zeros(n, n);
        for ops in &ladder {
            num += ops.energy_matrix(n);
        }
        let num = restrict(&num, &z);
        let den = restrict(&top.energy_matrix(n), &z);
        let (vals, vecs) = gen_sym_eig(&num, &den)?;
        let last = vals.len() - 1;
        let witness = GridFunction::new(grid, to_nodes(&z, &vecs.column(last).into_owned()))?;
        return Ok(PoincareResult {
            value: vals[last].max(0.0).sqrt(),
            witness: Some(witness),
            bound: BoundKind::ExactEigen,
            distortion: ((r + 1) as f64).sqrt(),
            diagnostics: Diagnostics {
                starts: 1,
                iterations: 1,
                ..Default::default()
            },
        });
    }
    let raw = sample_functions(grid, 64, r + 2, 0x3e4b ^ r as u64);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in raw {
        let gf = GridFunction::new(grid, s)?;
        let den = top.seminorm(gf.values(), p);
        if den <= 0.0 {
            continue;
        }
        let pi = project(&gf, r, p, None)?;
        let pv = crate::polynomials::eval_poly(&pi.projection, grid)?;
        let v = gf.combine(1.0, &pv, -1.0)?;
        let num: f64 = ladder.iter().map(|o| o.seminorm(v.values(), p)).sum();
        let ratio = num / den;
        if best.as_ref().map_or(true, |b| ratio > b.0) {
            best = Some((ratio, gf.into_values()));
        }
    }
    let (value, u) = best.ok_or_else(|| Error::DegenerateFamily("no sample with positive top seminorm".into()))?;
    Ok(PoincareResult {
        value,
        witness: Some(GridFunction::new(grid, u)?),
        bound: BoundKind::LowerBound,
        distortion: 1.0,
        diagnostics: Diagnostics {
            starts: 64,
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_mask, CompactMask, Geometry};

    fn endpoints(n: usize) -> FunctionClassSpec {
        let q = GridCube::unit(1, n).unwrap();
        let k = CompactMask::from_nodes(&q, &[0, n - 1]).unwrap();
        FunctionClassSpec::partial(0, 1, k).unwrap()
    }

    #[test]
    fn dirichlet_interval() {
        let r = poincare_constant(&PoincareQuery::new(endpoints(257), 0)).unwrap();
        let target = std::f64::consts::FRAC_1_PI;
        assert!((r.value - target).abs() < 0.02 * target, "{}", r.value);
        assert!(r.diagnostics.reevaluation_error < 1e-8);
    }

    #[test]
    fn neumann_interval() {
        let q = GridCube::unit(1, 257).unwrap();
        let r = weak_poincare_constant(&q, 0, 2.0).unwrap();
        let target = std::f64::consts::FRAC_1_PI;
        assert!((r.value - target).abs() < 0.02 * target, "{}", r.value);
    }

    #[test]
    fn zero_class_and_empty_set() {
        let q = GridCube::unit(1, 9).unwrap();
        let all = CompactMask::from_nodes(&q, &(0..9).collect::<Vec<_>>()).unwrap();
        let c = FunctionClassSpec::partial(0, 1, all).unwrap();
        assert_eq!(poincare_constant(&PoincareQuery::new(c, 0)).unwrap().value, 0.0);
        for m in 1..=2 {
            let c = FunctionClassSpec::unconstrained(m, &q);
            let r = poincare_constant(&PoincareQuery::new(c, 0)).unwrap();
            assert!(r.value.is_infinite());
        }
    }

    #[test]
    fn sampled_agrees_with_exact() {
        let q = GridCube::unit(2, 9).unwrap();
        let k = build_mask(&q, &Geometry::Segment { from: vec![0.0, 0.5], to: vec![1.0, 0.5] }).unwrap();
        let c = FunctionClassSpec::partial(0, 1, k).unwrap();
        let query = PoincareQuery::new(c, 0);
        let exact = poincare_constant(&query).unwrap().value;
        let low = OrderOps::new(&q.lattice(), 1, None).unwrap();
        let top = OrderOps::new(&q.lattice(), 1, None).unwrap();
        let sampled = sampled(&query, &low, &top).unwrap();
        assert_eq!(sampled.bound, BoundKind::LowerBound);
        assert!(sampled.value <= exact * (1.0 + 1e-9));
        assert!(sampled.value >= 0.95 * exact, "{} vs {exact}", sampled.value);
    }

    #[test]
    fn more_constraints_lower_the_constant() {
        let q = GridCube::unit(1, 33).unwrap();
        let a = CompactMask::from_nodes(&q, &[0]).unwrap();
        let b = CompactMask::from_nodes(&q, &[0, 16]).unwrap();
        let ca = poincare_constant(&PoincareQuery::new(FunctionClassSpec::partial(0, 1, a).unwrap(), 0)).unwrap();
        let cb = poincare_constant(&PoincareQuery::new(FunctionClassSpec::partial(0, 1, b).unwrap(), 0)).unwrap();
        assert!(cb.value <= ca.value + 1e-12);
    }

    #[test]
    fn hedberg_split_is_monotone_in_c0() {
        let q = GridCube::unit(1, 33).unwrap();
        let k = CompactMask::from_nodes(&q, &[16]).unwrap();
        let c = FunctionClassSpec::partial(1, 2, k).unwrap();
        let at = |c0| {
            poincare_constant(&PoincareQuery::new(c.clone(), 0).with_mode(PoincareMode::Hedberg { c0 }))
                .unwrap()
                .value
        };
        let (a, b) = (at(0.5), at(1.0));
        assert!(a.is_finite() && b.is_finite());
        assert!(b <= a);
    }

    #[test]
    fn weak_constant_ignores_polynomials() {
        let q = GridCube::unit(1, 17).unwrap();
        let r = weak_poincare_constant(&q, 1, 2.0).unwrap();
        assert!(r.value.is_finite() && r.value > 0.0);
        let s = weak_poincare_constant(&q, 1, 3.0).unwrap();
        assert!(s.value > 0.0);
    }

    #[test]
    fn rejects_unsupported_exponents() {
        let mut query = PoincareQuery::new(endpoints(9), 0);
        query.q = 3.0;
        assert!(poincare_constant(&query).is_err());
    }
}
