//! Cube-by-cube redefinition of a function vanishing to partial order on
//! `K` into one vanishing to full order, with its norm-cost ledger.
//!
//! One run at cube side `delta` sweeps `2^N` lattices, the unshifted one and
//! every combination of half-side shifts. In each lattice every cube meeting
//! `K` whose `phi_Q = 1` region still holds uncovered nodes gets
//! `u <- (1 - phi_Q) u + phi_Q w`, where `w` minimizes the order-`m` energy on
//! the support of `phi_Q` over the full-trace class with the same scaled
//! polynomial projection as `u`. A minimum-norm correction on the support,
//! widened by the stencils it reaches, then restores the discrete trace rows
//! broken by the product with `phi_Q`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{trace_rows, OrderOps};
use crate::capacities::{theta_capacity_with, FunctionClassSpec, Pin, ThetaOptions};
use crate::error::{Error, Result};
use crate::grid::{dilate_mask, CompactMask, GridCube, GridFunction, Lattice};
use crate::linalg::{pinv_solve, solve_eqp, BoundQp, Constraints, SparseRow};
use crate::polynomials::{basis_dim, Polynomial, Projector};

/// Default cube sides, as fractions of the ambient side.
pub const DEFAULT_DELTAS: [f64; 3] = [0.25, 0.125, 0.0625];

/// Normalized residual below which a trace row counts as satisfied,
/// relative to the largest value of the input function.
const TRACE_TOL: f64 = 1e-8;

/// One cube of one lattice pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeCube {
    pub pass: usize,
    /// Lattice coordinates of the cube within its pass.
    pub index: Vec<i64>,
    /// Ambient node coordinates of the lower corner (may lie outside).
    pub lo: Vec<i64>,
    /// The closed cube contains a node of `K`.
    pub flagged: bool,
}

/// A box of ambient nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub lo: Vec<usize>,
    pub shape: Vec<usize>,
}

impl Cell {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lattice(&self, ambient: &GridCube) -> Lattice {
        let h = ambient.spacing();
        let corner = ambient.lower_corner();
        let origin = (0..self.lo.len()).map(|a| corner[a] + self.lo[a] as f64 * h).collect();
        Lattice::new(self.shape.clone(), h, origin)
    }

    /// Ambient index of every cell node, in cell order.
    pub fn nodes(&self, ambient: &GridCube) -> Vec<usize> {
        let amb = ambient.lattice();
        let loc = Lattice::new(self.shape.clone(), 1.0, vec![0.0; self.shape.len()]);
        (0..self.len())
            .map(|i| {
                let mi: Vec<usize> = loc.multi(i).iter().zip(&self.lo).map(|(a, b)| a + b).collect();
                amb.index(&mi)
            })
            .collect()
    }

    fn local(&self, multi: &[usize]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for a in 0..self.lo.len() {
            let c = multi[a].checked_sub(self.lo[a])?;
            if c >= self.shape[a] {
                return None;
            }
            idx += c * stride;
            stride *= self.shape[a];
        }
        Some(idx)
    }
}

/// Cube lattices at side `delta` over the ambient grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub delta: f64,
    /// `delta / h`.
    pub cells: usize,
    /// Half-width of the transition band of `phi`, as a fraction of `delta`.
    pub width: f64,
    /// Node offset of every pass.
    pub shifts: Vec<Vec<usize>>,
    pub cubes: Vec<LatticeCube>,
    pub ambient: GridCube,
}

impl LatticeConfig {
    pub fn passes(&self) -> usize {
        self.shifts.len()
    }

    pub fn pass_cubes(&self, pass: usize) -> Vec<&LatticeCube> {
        self.cubes.iter().filter(|c| c.pass == pass).collect()
    }

    pub fn flagged(&self) -> Vec<&LatticeCube> {
        self.cubes.iter().filter(|c| c.flagged).collect()
    }

    /// Ambient nodes within the band half-width of the cube, i.e. the
    /// closure of the support of its partition function.
    pub fn support(&self, cube: &LatticeCube) -> Cell {
        let ext = (self.width * self.cells as f64).floor() as i64;
        let n = self.ambient.nodes_per_side() as i64;
        let mut lo = Vec::new();
        let mut shape = Vec::new();
        for &l in &cube.lo {
            let a = (l - ext).max(0);
            let b = (l + self.cells as i64 + ext).min(n - 1);
            lo.push(a as usize);
            shape.push((b - a + 1) as usize);
        }
        Cell { lo, shape }
    }

    /// Template weight of the cube at an ambient node.
    fn template(&self, cube: &LatticeCube, multi: &[usize]) -> f64 {
        let half = self.cells as f64 / 2.0;
        multi
            .iter()
            .zip(&cube.lo)
            .map(|(&x, &l)| {
                let t = (x as f64 - (l as f64 + half)).abs() / self.cells as f64;
                smootherstep((0.5 + self.width - t) / (2.0 * self.width))
            })
            .product()
    }
}

fn smootherstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// Builds the `2^N` lattices of side `delta` and flags the cubes meeting
/// `K`. Pass 0 tiles the ambient cube exactly.
pub fn build_lattice(ambient: &GridCube, delta: f64, k_set: &CompactMask, width: f64) -> Result<LatticeConfig> {
    if k_set.grid() != ambient {
        return Err(Error::InvalidParameter("K lives on a different grid".into()));
    }
    let h = ambient.spacing();
    let ratio = delta / h;
    let cells = ratio.round();
    if !(delta > 0.0) || (ratio - cells).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "cube side {delta} is not a multiple of the spacing {h}"
        )));
    }
    let cells = cells as usize;
    if cells < 4 {
        return Err(Error::InvalidParameter(format!(
            "cube side {delta} is below four grid cells"
        )));
    }
    if cells % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "half of the cube side {delta} is not on the grid"
        )));
    }
    if !(width > 0.0 && width <= 0.25) {
        return Err(Error::InvalidParameter(format!(
            "band width {width} must lie in (0, 1/4]"
        )));
    }
    if width * (cells as f64) < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "band width {width} covers less than one cell at {cells} cells per cube"
        )));
    }
    let dim = ambient.dim();
    let n = ambient.nodes_per_side() as i64;
    let c = cells as i64;
    let lattice = ambient.lattice();
    let knodes: Vec<Vec<usize>> = k_set.nodes().into_iter().map(|i| lattice.multi(i)).collect();
    let mut shifts = Vec::new();
    let mut cubes = Vec::new();
    for pass in 0..(1usize << dim) {
        let shift: Vec<usize> = (0..dim).map(|a| ((pass >> a) & 1) * cells / 2).collect();
        // Per-axis lattice coordinates of the cubes overlapping [0, n - 1].
        let ranges: Vec<Vec<i64>> = shift
            .iter()
            .map(|&s| {
                let s = s as i64;
                let first = (-s).div_euclid(c);
                (first..)
                    .take_while(|j| s + j * c < n - 1)
                    .filter(|j| s + (j + 1) * c > 0)
                    .collect()
            })
            .collect();
        let mut index = vec![0usize; dim];
        loop {
            let idx: Vec<i64> = (0..dim).map(|a| ranges[a][index[a]]).collect();
            let lo: Vec<i64> = (0..dim).map(|a| shift[a] as i64 + idx[a] * c).collect();
            let flagged = knodes.iter().any(|x| {
                x.iter()
                    .zip(&lo)
                    .all(|(&xi, &l)| xi as i64 >= l && xi as i64 <= l + c)
            });
            cubes.push(LatticeCube {
                pass,
                index: idx,
                lo,
                flagged,
            });
            let mut a = 0;
            while a < dim {
                index[a] += 1;
                if index[a] < ranges[a].len() {
                    break;
                }
                index[a] = 0;
                a += 1;
            }
            if a == dim {
                break;
            }
        }
        shifts.push(shift);
    }
    Ok(LatticeConfig {
        delta,
        cells,
        width,
        shifts,
        cubes,
        ambient: ambient.clone(),
    })
}

/// Partition functions of one pass, normalized pointwise, as
/// `(support cell, values on the cell)` in pass cube order.
fn pass_partition(lattice: &LatticeConfig, pass: usize) -> Vec<(Cell, Vec<f64>)> {
    let amb = lattice.ambient.lattice();
    let mut sum = vec![0.0; amb.len()];
    let raw: Vec<(Cell, Vec<f64>)> = lattice
        .pass_cubes(pass)
        .into_iter()
        .map(|cube| {
            let cell = lattice.support(cube);
            let vals: Vec<f64> = cell
                .nodes(&lattice.ambient)
                .iter()
                .map(|&g| lattice.template(cube, &amb.multi(g)))
                .collect();
            for (&g, v) in cell.nodes(&lattice.ambient).iter().zip(&vals) {
                sum[g] += v;
            }
            (cell, vals)
        })
        .collect();
    raw.into_iter()
        .map(|(cell, vals)| {
            let vals = cell
                .nodes(&lattice.ambient)
                .iter()
                .zip(vals)
                .map(|(&g, v)| if v > 0.0 { v / sum[g] } else { 0.0 })
                .collect();
            (cell, vals)
        })
        .collect()
}

/// The partition functions `phi_Q` of one pass, in pass cube order.
pub fn partition_of_unity(lattice: &LatticeConfig, pass: usize) -> Result<Vec<GridFunction>> {
    if pass >= lattice.passes() {
        return Err(Error::InvalidParameter(format!("no pass {pass}")));
    }
    pass_partition(lattice, pass)
        .into_iter()
        .map(|(cell, vals)| {
            let mut out = vec![0.0; lattice.ambient.node_count()];
            for (g, v) in cell.nodes(&lattice.ambient).into_iter().zip(vals) {
                out[g] = v;
            }
            GridFunction::new(&lattice.ambient, out)
        })
        .collect()
}

/// Options of the per-cube solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    /// Dilation of `K` (ambient cells) in the full-trace class.
    pub rho: usize,
    pub nonnegative: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            rho: 1,
            nonnegative: false,
        }
    }
}

/// Minimizers `v` (partial trace) and `w` (full trace) on a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMinimizers {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// `|grad^m w| / |grad^m v|` on the cell.
    #[serde(with = "crate::extended")]
    pub a_q: f64,
    /// `v` has zero seminorm while `w` does not.
    pub degenerate: bool,
}

/// Trace order of the ambient class: `m - 1`, or 0 for nonnegative runs.
fn partial_order(m: usize, nonnegative: bool) -> usize {
    if nonnegative {
        0
    } else {
        m - 1
    }
}

/// Nodes of `mask` inside `cell`, as local indices.
fn local_nodes(mask: &CompactMask, cell: &Cell) -> Vec<usize> {
    let amb = mask.grid().lattice();
    mask.nodes()
        .into_iter()
        .filter_map(|g| cell.local(&amb.multi(g)))
        .collect()
}

/// Minimizes the order-`m` energy on `cell` with `Pi f = Pi u` (weights
/// `l^-(m-i)`, `l` the longest cell side) over the partial-trace class
/// (`v`) and the full-trace class (`w`).
pub fn cube_minimizers(
    u: &GridFunction,
    cell: &Cell,
    k_set: &CompactMask,
    m: usize,
    p: f64,
    opts: &CellOptions,
) -> Result<CellMinimizers> {
    let ambient = u.grid();
    if k_set.grid() != ambient {
        return Err(Error::InvalidParameter("K lives on a different grid".into()));
    }
    if p != 2.0 {
        return Err(Error::InvalidParameter(format!(
            "cell minimizers are exact only for p = 2, got {p}"
        )));
    }
    if m == 0 || opts.rho == 0 {
        return Err(Error::InvalidParameter("need m >= 1 and rho >= 1".into()));
    }
    let lat = cell.lattice(ambient);
    let n = lat.len();
    let uv: Vec<f64> = cell.nodes(ambient).iter().map(|&g| u.values()[g]).collect();
    let side = (*cell.shape.iter().max().unwrap_or(&1) - 1) as f64 * lat.spacing();
    let weights: Vec<f64> = (0..m).map(|i| side.powi(-((m - i) as i32))).collect();
    let proj = Projector::new(&lat, &lat.center(), m - 1, Some(&weights))?;
    let pin = proj.map() * DVector::from_column_slice(&uv);
    let pin_rows: Vec<SparseRow> = (0..pin.len())
        .map(|r| SparseRow::from_dense(proj.map().row(r).transpose().as_slice()))
        .collect();
    let ops = OrderOps::new(&lat, m, None)?;
    let a = ops.energy_matrix(n);
    let s = partial_order(m, opts.nonnegative);
    let partial = trace_rows(&lat, &local_nodes(k_set, cell), s)?;
    let full = trace_rows(&lat, &local_nodes(&dilate_mask(k_set, opts.rho), cell), m - 1)?;
    let solve = |rows: Vec<SparseRow>, what: &str| -> Result<Vec<f64>> {
        let mut cons = Constraints::homogeneous(n, rows, 1);
        cons.push_rows(pin_rows.clone(), &DMatrix::from_column_slice(pin.len(), 1, pin.as_slice()));
        if opts.nonnegative {
            let g = DVector::zeros(n);
            let lower: Vec<(usize, f64)> = (0..n).map(|i| (i, 0.0)).collect();
            let qp = BoundQp {
                a: &a,
                g: &g,
                eq: &cons,
                lower: &lower,
            };
            let sol = qp
                .solve_pdas(vec![false; n], 200)
                .map_err(|e| Error::Infeasible(format!("{what}: {e}")))?;
            if !sol.converged || sol.bound_violation > 1e-9 || sol.eq_residual > 1e-7 {
                return Err(Error::Infeasible(format!("{what}: nonnegative pinned class")));
            }
            Ok(sol.u.as_slice().to_vec())
        } else {
            let sol = solve_eqp(&a, &DMatrix::zeros(n, 1), &cons)?;
            if !sol.feasible[0] {
                return Err(Error::Infeasible(format!("{what}: pinned class is empty")));
            }
            Ok(sol.u.column(0).iter().copied().collect())
        }
    };
    let v = solve(partial, "partial-trace minimizer")?;
    let w = solve(full, "full-trace minimizer")?;
    let sv = ops.seminorm(&v, p);
    let sw = ops.seminorm(&w, p);
    let zero = 1e-12 * ops.seminorm(&uv, p).max(1.0);
    let (a_q, degenerate) = if sv <= zero && sw <= zero {
        (1.0, false)
    } else if sv <= zero {
        (f64::INFINITY, true)
    } else {
        (sw / sv, false)
    };
    Ok(CellMinimizers { v, w, a_q, degenerate })
}

/// `(1 - phi) u + phi w` on the cell, `u` elsewhere. `phi` and `w` hold
/// cell values.
pub fn redefine_in_cube(u: &GridFunction, cell: &Cell, phi: &[f64], w: &[f64]) -> Result<GridFunction> {
    if phi.len() != cell.len() || w.len() != cell.len() {
        return Err(Error::DimensionMismatch {
            expected: cell.len(),
            got: phi.len().min(w.len()),
        });
    }
    let mut out = u.values().to_vec();
    for (i, g) in cell.nodes(u.grid()).into_iter().enumerate() {
        out[g] = (1.0 - phi[i]) * out[g] + phi[i] * w[i];
    }
    GridFunction::new(u.grid(), out)
}

/// Options of a synthesis run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub rho: usize,
    /// Band half-width of `phi` as a fraction of `delta`.
    pub width: f64,
    /// Ambient class `partial(0)` with `u >= 0`; `w` is nonnegative too.
    pub nonnegative: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            rho: 1,
            width: 0.25,
            nonnegative: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub pass: usize,
    pub index: Vec<i64>,
    #[serde(with = "crate::extended")]
    pub a_q: f64,
    /// `|grad^m (after - before)|`, supported in the cube's support.
    pub cost: f64,
    pub degenerate: bool,
    pub skipped: bool,
    /// Every target node where `phi_Q = 1` was already covered.
    pub idle: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub delta: f64,
    pub passes: usize,
    /// Number of lattices; each node lies in one half-open cube per pass.
    pub multiplicity: usize,
    pub cubes: Vec<CubeRecord>,
    /// Size of the covered set after each redefinition, starting with the
    /// input function.
    pub covered: Vec<usize>,
    /// Nodes of the dilated set carrying full-trace rows.
    pub target: usize,
    /// Every node of the dilated set is covered at the end.
    pub complete: bool,
    /// Some cube was skipped as infeasible.
    pub partial: bool,
    pub total_cost: f64,
    #[serde(with = "crate::extended")]
    pub max_a_q: f64,
    /// `total_cost^p`.
    pub chain_lhs: f64,
    /// `G (1 + max A_Q)^p sum |grad^m u|^p` over the supports of the
    /// redefined cubes.
    #[serde(with = "crate::extended")]
    pub chain_rhs: f64,
    pub chain_holds: bool,
    /// Largest normalized ambient-class residual over all steps.
    pub max_membership_residual: f64,
    pub result: GridFunction,
}

/// Trace rows with the ambient node each one sits at.
struct TraceRows {
    rows: Vec<SparseRow>,
    node: Vec<usize>,
}

impl TraceRows {
    fn new(lattice: &Lattice, nodes: &[usize], order: usize) -> Result<Self> {
        let rows = trace_rows(lattice, nodes, order)?;
        let node = (0..rows.len()).map(|r| nodes[r % nodes.len().max(1)]).collect();
        Ok(Self { rows, node })
    }

    fn residual(&self, r: usize, u: &[f64]) -> f64 {
        let row = &self.rows[r];
        row.dot(u).abs() / row.scale().max(f64::MIN_POSITIVE)
    }
}

/// State shared by the cubes of a run.
struct Sweep<'a> {
    ambient: &'a GridCube,
    m: usize,
    p: f64,
    k_set: &'a CompactMask,
    opts: SynthesisOptions,
    partial: TraceRows,
    full: TraceRows,
    target: Vec<usize>,
    tol: f64,
}

impl Sweep<'_> {
    /// Target nodes whose full-trace rows all hold.
    fn covered(&self, u: &[f64]) -> Vec<bool> {
        let mut ok = vec![false; self.ambient.node_count()];
        for &x in &self.target {
            ok[x] = true;
        }
        for r in 0..self.full.rows.len() {
            if self.full.residual(r, u) > self.tol {
                ok[self.full.node[r]] = false;
            }
        }
        ok
    }

    fn membership(&self, u: &[f64]) -> f64 {
        (0..self.partial.rows.len())
            .map(|r| self.partial.residual(r, u))
            .fold(0.0, f64::max)
    }

    /// Rows to restore: every partial row and the full rows at `keep` nodes.
    fn rows_touching<'s>(&'s self, inside: &[bool], keep: &[bool]) -> Vec<&'s SparseRow> {
        let touches = |row: &SparseRow| row.idx.iter().any(|&c| inside[c]);
        let mut rows: Vec<&SparseRow> = self.partial.rows.iter().filter(|r| touches(r)).collect();
        rows.extend(
            self.full
                .rows
                .iter()
                .zip(&self.full.node)
                .filter(|(r, &x)| keep[x] && touches(r))
                .map(|(r, _)| r),
        );
        rows
    }

    /// Minimum-norm change of `u` restoring the rows touching `support`.
    /// The free nodes are the support plus the stencils of those rows, since
    /// a trace row at the support edge may pin a node just outside it.
    fn repair(&self, u: &mut [f64], support: &[usize], keep: &[bool]) -> Result<()> {
        let mut inside = vec![false; u.len()];
        for &g in support {
            inside[g] = true;
        }
        for _ in 0..3 {
            let before = inside.iter().filter(|&&b| b).count();
            for row in self.rows_touching(&inside.clone(), keep) {
                for &c in &row.idx {
                    inside[c] = true;
                }
            }
            if inside.iter().filter(|&&b| b).count() == before {
                break;
            }
        }
        let free: Vec<usize> = (0..u.len()).filter(|&g| inside[g]).collect();
        let mut pos = vec![usize::MAX; u.len()];
        for (i, &g) in free.iter().enumerate() {
            pos[g] = i;
        }
        let rows = self.rows_touching(&inside, keep);
        if rows.is_empty() {
            return Ok(());
        }
        let nf = free.len();
        let mut c = DMatrix::zeros(rows.len(), nf);
        let mut viol = DMatrix::zeros(rows.len(), 1);
        let mut inside = DMatrix::zeros(rows.len(), 1);
        for (r, row) in rows.iter().enumerate() {
            let s = row.scale().max(f64::MIN_POSITIVE);
            for (&col, &v) in row.idx.iter().zip(&row.val) {
                if pos[col] != usize::MAX {
                    c[(r, pos[col])] = v / s;
                    inside[(r, 0)] += v / s * u[col];
                }
            }
            viol[(r, 0)] = row.dot(u) / s;
        }
        let current = DVector::from_iterator(nf, free.iter().map(|&g| u[g]));
        let next = if self.opts.nonnegative {
            let local: Vec<SparseRow> = (0..rows.len())
                .map(|r| SparseRow::from_dense(c.row(r).transpose().as_slice()))
                .collect();
            let mut cons = Constraints::homogeneous(nf, Vec::new(), 1);
            cons.push_rows(local, &(&inside - &viol));
            let a = DMatrix::identity(nf, nf);
            let g = -current.clone();
            let lower: Vec<(usize, f64)> = (0..nf).map(|i| (i, 0.0)).collect();
            let qp = BoundQp {
                a: &a,
                g: &g,
                eq: &cons,
                lower: &lower,
            };
            qp.solve_pdas(vec![false; nf], 200)?.u
        } else {
            let gram = &c * c.transpose();
            let y = pinv_solve(&gram, &viol, 1e-13);
            &current - c.transpose() * y
        };
        for (i, &g) in free.iter().enumerate() {
            u[g] = next[i];
        }
        Ok(())
    }
}

/// Redefines `u` cube by cube at every `delta`, tracking the covered set,
/// class membership and the cost chain. Distinct sides run in parallel.
pub fn run_synthesis(
    u: &GridFunction,
    k_set: &CompactMask,
    m: usize,
    p: f64,
    deltas: &[f64],
    opts: &SynthesisOptions,
) -> Result<Vec<SynthesisReport>> {
    let ambient = u.grid();
    if k_set.grid() != ambient {
        return Err(Error::InvalidParameter("K lives on a different grid".into()));
    }
    if m == 0 || opts.rho == 0 {
        return Err(Error::InvalidParameter("need m >= 1 and rho >= 1".into()));
    }
    if p != 2.0 {
        return Err(Error::InvalidParameter(format!(
            "synthesis solves are exact only for p = 2, got {p}"
        )));
    }
    let lattice = ambient.lattice();
    let scale = u.values().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let target = dilate_mask(k_set, opts.rho).nodes();
    let sweep = Sweep {
        ambient,
        m,
        p,
        k_set,
        opts: *opts,
        partial: TraceRows::new(&lattice, &k_set.nodes(), partial_order(m, opts.nonnegative))?,
        full: TraceRows::new(&lattice, &target, m - 1)?,
        target,
        tol: TRACE_TOL * scale,
    };
    let start = sweep.membership(u.values());
    if start > sweep.tol {
        return Err(Error::ConstraintViolation(format!(
            "input is not in the partial-trace class (residual {start:.3e})"
        )));
    }
    if opts.nonnegative && u.values().iter().any(|&v| v < -sweep.tol) {
        return Err(Error::ConstraintViolation("input has negative values".into()));
    }
    deltas
        .par_iter()
        .map(|&delta| run_level(&sweep, u, delta))
        .collect()
}

fn run_level(sweep: &Sweep, u0: &GridFunction, delta: f64) -> Result<SynthesisReport> {
    let ambient = sweep.ambient;
    let (m, p) = (sweep.m, sweep.p);
    let lattice = build_lattice(ambient, delta, sweep.k_set, sweep.opts.width)?;
    let top = OrderOps::new(&ambient.lattice(), m, None)?;
    let cell_opts = CellOptions {
        rho: sweep.opts.rho,
        nonnegative: sweep.opts.nonnegative,
    };
    let mut u = u0.values().to_vec();
    let mut good = sweep.covered(&u);
    let count = |g: &[bool]| sweep.target.iter().filter(|&&x| g[x]).count();
    let mut covered = vec![count(&good)];
    let mut cubes = Vec::new();
    let mut chain_sum = 0.0;
    let mut max_res = sweep.membership(&u);
    let mut target = vec![false; u.len()];
    for &x in &sweep.target {
        target[x] = true;
    }
    for pass in 0..lattice.passes() {
        let phis = pass_partition(&lattice, pass);
        for (cube, (cell, phi)) in lattice.pass_cubes(pass).into_iter().zip(phis) {
            if !cube.flagged {
                continue;
            }
            let nodes = cell.nodes(ambient);
            let useful = nodes
                .iter()
                .zip(&phi)
                .any(|(&g, &f)| f >= 1.0 && target[g] && !good[g]);
            if !useful {
                cubes.push(CubeRecord {
                    pass,
                    index: cube.index.clone(),
                    a_q: f64::NAN,
                    cost: 0.0,
                    degenerate: false,
                    skipped: false,
                    idle: true,
                    note: None,
                });
                continue;
            }
            let local_u: Vec<f64> = nodes.iter().map(|&g| u0.values()[g]).collect();
            chain_sum += OrderOps::new(&cell.lattice(ambient), m, None)?
                .seminorm(&local_u, p)
                .powf(p);
            let current = GridFunction::new(ambient, u.clone())?;
            let mins = match cube_minimizers(&current, &cell, sweep.k_set, m, p, &cell_opts) {
                Ok(mins) => mins,
                Err(Error::Infeasible(why)) => {
                    cubes.push(CubeRecord {
                        pass,
                        index: cube.index.clone(),
                        a_q: f64::NAN,
                        cost: 0.0,
                        degenerate: false,
                        skipped: true,
                        idle: false,
                        note: Some(why),
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut next = redefine_in_cube(&current, &cell, &phi, &mins.w)?.into_values();
            let free: Vec<usize> = nodes
                .iter()
                .zip(&phi)
                .filter(|(_, &f)| f > 0.0)
                .map(|(&g, _)| g)
                .collect();
            // Target nodes where phi = 1 become covered by this cube.
            let mut keep = good.clone();
            for (&g, &f) in nodes.iter().zip(&phi) {
                if f >= 1.0 {
                    keep[g] = true;
                }
            }
            sweep.repair(&mut next, &free, &keep)?;
            let now = sweep.covered(&next);
            if let Some(x) = sweep.target.iter().find(|&&x| keep[x] && !now[x]) {
                let what = if good[*x] { "covered set shrank" } else { "full trace fails where phi = 1" };
                let worst = (0..sweep.full.rows.len())
                    .filter(|&r| sweep.full.node[r] == *x)
                    .map(|r| sweep.full.residual(r, &next))
                    .fold(0.0, f64::max);
                return Err(Error::ConstraintViolation(format!(
                    "{what} at node {x}, residual {worst:.3e} (delta {delta}, pass {pass}, cube {:?})",
                    cube.index
                )));
            }
            let res = sweep.membership(&next);
            if res > sweep.tol {
                return Err(Error::ConstraintViolation(format!(
                    "partial-trace residual {res:.3e} after cube {:?} (delta {delta})",
                    cube.index
                )));
            }
            if sweep.opts.nonnegative && next.iter().any(|&v| v < -sweep.tol) {
                return Err(Error::ConstraintViolation("redefinition went negative".into()));
            }
            max_res = max_res.max(res);
            let diff: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
            cubes.push(CubeRecord {
                pass,
                index: cube.index.clone(),
                a_q: mins.a_q,
                cost: top.seminorm(&diff, p),
                degenerate: mins.degenerate,
                skipped: false,
                idle: false,
                note: None,
            });
            u = next;
            good = now;
            covered.push(count(&good));
        }
    }
    let diff: Vec<f64> = u.iter().zip(u0.values()).map(|(a, b)| a - b).collect();
    let total_cost = top.seminorm(&diff, p);
    let max_a_q = cubes
        .iter()
        .filter(|c| !c.skipped && !c.idle)
        .map(|c| c.a_q)
        .fold(0.0, f64::max);
    let multiplicity = lattice.passes();
    let chain_lhs = total_cost.powf(p);
    let chain_rhs = multiplicity as f64 * (1.0 + max_a_q).powf(p) * chain_sum;
    Ok(SynthesisReport {
        delta,
        passes: lattice.passes(),
        multiplicity,
        partial: cubes.iter().any(|c| c.skipped),
        complete: count(&good) == sweep.target.len(),
        target: sweep.target.len(),
        covered,
        total_cost,
        max_a_q,
        chain_lhs,
        chain_holds: chain_lhs <= chain_rhs * (1.0 + 1e-9) + 1e-300,
        chain_rhs,
        max_membership_residual: max_res,
        cubes,
        result: GridFunction::new(ambient, u)?,
    })
}

/// Whether the total cost strictly decreases along the reports.
pub fn cost_decreasing(reports: &[SynthesisReport]) -> bool {
    reports.windows(2).all(|w| w[1].total_cost < w[0].total_cost)
}

/// Connected components of a mask under Chebyshev adjacency.
fn components(mask: &CompactMask) -> Vec<Vec<usize>> {
    let lattice = mask.grid().lattice();
    let dim = lattice.dim();
    let n = mask.grid().nodes_per_side() as i64;
    let mut seen = vec![false; lattice.len()];
    let mut out = Vec::new();
    for start in mask.nodes() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(x) = stack.pop() {
            let mx = lattice.multi(x);
            for code in 0..3usize.pow(dim as u32) {
                let mut c = code;
                let mut nb = Vec::with_capacity(dim);
                for &xi in &mx {
                    nb.push(xi as i64 + (c % 3) as i64 - 1);
                    c /= 3;
                }
                if nb.iter().any(|&v| v < 0 || v >= n) {
                    continue;
                }
                let y = lattice.index(&nb.iter().map(|&v| v as usize).collect::<Vec<_>>());
                if mask.contains(y) && !seen[y] {
                    seen[y] = true;
                    comp.push(y);
                    stack.push(y);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// A test function for the ambient class: a flat-top bump (1 away from a
/// margin of 1/8 of the side) times `prod_c (1 - exp(-(d_c / sigma)^m))`
/// over the connected components `c` of `K`, `d_c` the distance to the
/// nodes of `c`, followed (for `s >= 1`) by the minimum-norm correction onto
/// the trace rows of order `s`. Nonnegative when `s = 0`.
pub fn admissible_function(k_set: &CompactMask, m: usize, s: usize, sigma: f64) -> Result<GridFunction> {
    if m == 0 || s + 1 > m {
        return Err(Error::InvalidParameter(format!("need s < m, got m = {m}, s = {s}")));
    }
    let q = k_set.grid();
    let lo = q.lower_corner();
    let side = q.side_length();
    let comps: Vec<Vec<Vec<f64>>> = components(k_set)
        .into_iter()
        .map(|c| c.into_iter().map(|i| q.coords(i)).collect())
        .collect();
    let u = GridFunction::from_fn(q, |x| {
        let bump: f64 = x
            .iter()
            .zip(&lo)
            .map(|(xi, l)| {
                let t = (xi - l) / side;
                smootherstep(8.0 * t.min(1.0 - t))
            })
            .product();
        let vanish: f64 = comps
            .iter()
            .map(|pts| {
                let d = pts
                    .iter()
                    .map(|y| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
                    .sqrt();
                1.0 - (-(d / sigma).powi(m as i32)).exp()
            })
            .product();
        bump * vanish
    })?;
    if s == 0 || k_set.is_empty() {
        return Ok(u);
    }
    let rows = trace_rows(&q.lattice(), &k_set.nodes(), s)?;
    let mut vals = u.into_values();
    let free: Vec<usize> = {
        let mut f: Vec<usize> = rows.iter().flat_map(|r| r.idx.iter().copied()).collect();
        f.sort_unstable();
        f.dedup();
        f
    };
    let mut pos = vec![usize::MAX; vals.len()];
    for (i, &g) in free.iter().enumerate() {
        pos[g] = i;
    }
    let mut c = DMatrix::zeros(rows.len(), free.len());
    let mut viol = DMatrix::zeros(rows.len(), 1);
    for (r, row) in rows.iter().enumerate() {
        let sc = row.scale().max(f64::MIN_POSITIVE);
        for (&col, &v) in row.idx.iter().zip(&row.val) {
            c[(r, pos[col])] = v / sc;
        }
        viol[(r, 0)] = row.dot(&vals) / sc;
    }
    let y = pinv_solve(&(&c * c.transpose()), &viol, 1e-13);
    let step = c.transpose() * y;
    for (i, &g) in free.iter().enumerate() {
        vals[g] -= step[i];
    }
    GridFunction::new(q, vals)
}

/// One `(K, P)` comparison of pinned full-trace and partial-trace classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionItem {
    pub label: String,
    pub pin: Vec<f64>,
    pub theta_full: f64,
    pub theta_partial: f64,
    pub feasible_full: bool,
    pub feasible_partial: bool,
    /// `theta_full / theta_partial`; 1 when both vanish.
    #[serde(with = "crate::extended")]
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub items: Vec<ConditionItem>,
    /// Smallest `A` bounding every ratio.
    #[serde(with = "crate::extended")]
    pub fitted_a: f64,
    pub cap: f64,
    /// Labels of items whose ratio exceeds the cap.
    pub violations: Vec<String>,
}

/// Options of [`check_synthesis_condition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOptions {
    pub pins: usize,
    pub rho: usize,
    pub alpha: f64,
    pub starts: usize,
    pub seed: u64,
    pub cap: f64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        Self {
            pins: 3,
            rho: 1,
            alpha: 4.0,
            starts: 8,
            seed: 0x3a3,
            cap: 10.0,
        }
    }
}

fn theta_ratio(full: f64, partial: f64) -> f64 {
    let zero = 1e-12;
    match (full <= zero, partial <= zero) {
        (true, true) => 1.0,
        (false, true) => f64::INFINITY,
        _ => full / partial,
    }
}

/// Compares `Theta` over the full-trace and partial-trace classes on `q0`,
/// both pinned to seeded Gaussian polynomials of degree `m - 1`.
pub fn check_synthesis_condition(
    q0: &GridCube,
    family: &[(String, CompactMask)],
    m: usize,
    k: usize,
    p: f64,
    opts: &ConditionOptions,
) -> Result<ConditionReport> {
    if p != 2.0 {
        return Err(Error::InvalidParameter(format!("condition check needs p = 2, got {p}")));
    }
    let d = basis_dim(q0.dim(), m - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pins: Vec<Vec<f64>> = (0..opts.pins)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let jobs: Vec<(&String, &CompactMask, &Vec<f64>)> = family
        .iter()
        .flat_map(|(l, kset)| pins.iter().map(move |pin| (l, kset, pin)))
        .collect();
    let items = jobs
        .par_iter()
        .map(|&(label, kset, coeffs)| {
            if kset.grid() != q0 {
                return Err(Error::InvalidParameter(format!("{label} lives on a different grid")));
            }
            let pin = Pin {
                poly: Polynomial::new(q0.dim(), m - 1, coeffs.clone())?,
                weights: None,
            };
            let theta_opts = ThetaOptions {
                alpha: opts.alpha,
                starts: opts.starts,
                seed: opts.seed,
                hint: None,
            };
            let full = FunctionClassSpec::full(opts.rho, m, kset.clone())?.with_pin(pin.clone());
            let partial = FunctionClassSpec::partial(m - 1, m, kset.clone())?.with_pin(pin);
            let tf = theta_capacity_with(q0, &full, m, k, p, &theta_opts)?;
            let tp = theta_capacity_with(q0, &partial, m, k, p, &theta_opts)?;
            Ok(ConditionItem {
                label: label.clone(),
                pin: coeffs.clone(),
                theta_full: tf.value,
                theta_partial: tp.value,
                feasible_full: tf.feasible,
                feasible_partial: tp.feasible,
                ratio: theta_ratio(tf.value, tp.value),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fitted_a = items.iter().map(|i| i.ratio).fold(0.0, f64::max);
    let violations = items
        .iter()
        .filter(|i| i.ratio > opts.cap)
        .map(|i| i.label.clone())
        .collect();
    Ok(ConditionReport {
        items,
        fitted_a,
        cap: opts.cap,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_mask, Geometry};

    fn point(q: &GridCube, at: &[f64]) -> CompactMask {
        build_mask(q, &Geometry::Point { at: at.to_vec() }).unwrap()
    }

    #[test]
    fn lattice_counts() {
        let q = GridCube::unit(1, 17).unwrap();
        let k = point(&q, &[0.25]);
        let l = build_lattice(&q, 0.5, &k, 0.25).unwrap();
        let first = l.pass_cubes(0);
        assert_eq!(first.len(), 2);
        assert!(first[0].flagged && !first[1].flagged);
        assert_eq!(l.passes(), 2);
        let l = build_lattice(&q, 0.5, &CompactMask::empty(&q), 0.25).unwrap();
        assert!(l.flagged().is_empty());
        let q2 = GridCube::unit(2, 17).unwrap();
        let l = build_lattice(&q2, 0.25, &CompactMask::empty(&q2), 0.25).unwrap();
        assert_eq!(l.pass_cubes(0).len(), 16);
        assert_eq!(l.passes(), 4);
    }

    #[test]
    fn lattice_rejects_bad_sides() {
        let q = GridCube::unit(1, 17).unwrap();
        let e = CompactMask::empty(&q);
        assert!(build_lattice(&q, 0.125, &e, 0.25).is_err());
        assert!(build_lattice(&q, 0.3, &e, 0.25).is_err());
        assert!(build_lattice(&q, 0.5, &e, 0.3).is_err());
        assert!(build_lattice(&q, 0.5, &e, 0.0).is_err());
        assert!(build_lattice(&q, 0.5, &e, 0.1).is_err());
    }

    #[test]
    fn partition_sums_to_one() {
        for (dim, n, delta) in [(1, 17, 0.5), (1, 33, 0.25), (2, 17, 0.25)] {
            let q = GridCube::unit(dim, n).unwrap();
            let l = build_lattice(&q, delta, &CompactMask::empty(&q), 0.25).unwrap();
            for pass in 0..l.passes() {
                let phis = partition_of_unity(&l, pass).unwrap();
                for i in 0..q.node_count() {
                    let s: f64 = phis.iter().map(|f| f.values()[i]).sum();
                    assert!((s - 1.0).abs() < 1e-12, "dim {dim} pass {pass} node {i}: {s}");
                }
                for (cube, phi) in l.pass_cubes(pass).iter().zip(&phis) {
                    let centre: Vec<usize> = cube.lo.iter().map(|&c| (c + l.cells as i64 / 2) as usize).collect();
                    if centre.iter().all(|&c| c < n) {
                        assert!((phi.values()[q.lattice().index(&centre)] - 1.0).abs() < 1e-12);
                    }
                    assert!(phi.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
            }
        }
    }

    #[test]
    fn band_values_are_fractional() {
        let q = GridCube::unit(1, 17).unwrap();
        let l = build_lattice(&q, 0.5, &CompactMask::empty(&q), 0.25).unwrap();
        let phi = &partition_of_unity(&l, 0).unwrap()[0];
        // Band of the first cube around x = 0.5 is (0.375, 0.625).
        for i in 7..=9 {
            let v = phi.values()[i];
            assert!(v > 0.0 && v < 1.0, "node {i}: {v}");
        }
        assert!((phi.values()[8] - 0.5).abs() < 1e-12);
        assert_eq!(phi.values()[6], 1.0);
        assert_eq!(phi.values()[10], 0.0);
    }

    fn cell_1d(lo: usize, len: usize) -> Cell {
        Cell {
            lo: vec![lo],
            shape: vec![len],
        }
    }

    #[test]
    fn minimizers_without_k_coincide() {
        let q = GridCube::unit(1, 33).unwrap();
        let u = GridFunction::from_fn(&q, |x| (3.0 * x[0]).sin()).unwrap();
        let r = cube_minimizers(&u, &cell_1d(4, 13), &CompactMask::empty(&q), 2, 2.0, &CellOptions::default())
            .unwrap();
        assert_eq!(r.a_q, 1.0);
        let z = GridFunction::zeros(&q);
        let k = point(&q, &[0.25]);
        let r = cube_minimizers(&z, &cell_1d(4, 13), &k, 1, 2.0, &CellOptions::default()).unwrap();
        assert_eq!(r.a_q, 1.0);
        assert!(r.v.iter().chain(&r.w).all(|v| v.abs() < 1e-12));
    }

    /// Dense KKT solve of `min |D f|^2` subject to `C f = b`.
    fn kkt(a: &DMatrix<f64>, c: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let (n, r) = (a.nrows(), c.nrows());
        let mut k = DMatrix::zeros(n + r, n + r);
        k.view_mut((0, 0), (n, n)).copy_from(a);
        k.view_mut((0, n), (n, r)).copy_from(&c.transpose());
        k.view_mut((n, 0), (r, n)).copy_from(c);
        let mut rhs = DVector::zeros(n + r);
        rhs.rows_mut(n, r).copy_from(b);
        let sol = k.lu().solve(&rhs).unwrap();
        sol.rows(0, n).into_owned()
    }

    #[test]
    fn minimizers_match_dense_kkt() {
        let q = GridCube::unit(1, 33).unwrap();
        let u = GridFunction::from_fn(&q, |x| 1.0 - (x[0] - 0.5).abs()).unwrap();
        let cell = cell_1d(8, 17);
        let k = point(&q, &[0.5]);
        let r = cube_minimizers(&u, &cell, &k, 1, 2.0, &CellOptions::default()).unwrap();
        assert!(r.a_q.is_finite() && r.a_q >= 1.0 - 1e-12);
        // Oracle: first differences, mean of the cell and point values.
        let n = 17;
        let h = q.spacing();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i)] += 1.0 / h;
            a[(i + 1, i + 1)] += 1.0 / h;
            a[(i, i + 1)] -= 1.0 / h;
            a[(i + 1, i)] -= 1.0 / h;
        }
        let local: Vec<f64> = (0..n).map(|i| u.values()[8 + i]).collect();
        let proj = Projector::new(&cell.lattice(&q), &cell.lattice(&q).center(), 0, Some(&[1.0 / (16.0 * h)])).unwrap();
        let mean = (proj.map() * DVector::from_column_slice(&local))[0];
        for (rows, got) in [(vec![8usize], &r.v), (vec![7, 8, 9], &r.w)] {
            let mut c = DMatrix::zeros(rows.len() + 1, n);
            let mut b = DVector::zeros(rows.len() + 1);
            for (j, &x) in rows.iter().enumerate() {
                c[(j, x)] = 1.0;
            }
            c.row_mut(rows.len()).copy_from(&proj.map().row(0));
            b[rows.len()] = mean;
            let want = kkt(&a, &c, &b);
            for i in 0..n {
                assert!((want[i] - got[i]).abs() < 1e-8, "node {i}: {} vs {}", want[i], got[i]);
            }
        }
    }

    #[test]
    fn identity_redefinition_costs_nothing() {
        let q = GridCube::unit(1, 33).unwrap();
        let u = GridFunction::from_fn(&q, |x| x[0] * x[0]).unwrap();
        let cell = cell_1d(4, 9);
        let w: Vec<f64> = cell.nodes(&q).iter().map(|&g| u.values()[g]).collect();
        let phi = vec![0.5; 9];
        let r = redefine_in_cube(&u, &cell, &phi, &w).unwrap();
        assert_eq!(r, u);
    }

    #[test]
    fn empty_set_and_zero_input_cost_nothing() {
        let q = GridCube::unit(1, 65).unwrap();
        let u = admissible_function(&CompactMask::empty(&q), 1, 0, 1.0).unwrap();
        let reps = run_synthesis(&u, &CompactMask::empty(&q), 1, 2.0, &DEFAULT_DELTAS, &Default::default()).unwrap();
        assert!(reps.iter().all(|r| r.total_cost == 0.0 && r.cubes.is_empty()));
        let k = point(&q, &[0.5]);
        let z = GridFunction::zeros(&q);
        let reps = run_synthesis(&z, &k, 1, 2.0, &DEFAULT_DELTAS, &Default::default()).unwrap();
        assert!(reps.iter().all(|r| r.total_cost < 1e-14 && r.complete));
    }

    #[test]
    fn rejects_inputs_outside_the_class() {
        let q = GridCube::unit(1, 65).unwrap();
        let k = point(&q, &[0.5]);
        let u = GridFunction::from_fn(&q, |x| x[0]).unwrap();
        assert!(matches!(
            run_synthesis(&u, &k, 1, 2.0, &[0.25], &Default::default()),
            Err(Error::ConstraintViolation(_))
        ));
    }

    #[test]
    fn tent_cost_obeys_the_chain() {
        let q = GridCube::unit(1, 1025).unwrap();
        let k = point(&q, &[0.5]);
        let u = admissible_function(&k, 1, 0, 1.0).unwrap();
        let reps = run_synthesis(&u, &k, 1, 2.0, &DEFAULT_DELTAS, &Default::default()).unwrap();
        for r in &reps {
            assert!(r.complete && !r.partial, "delta {}", r.delta);
            assert!(r.covered.windows(2).all(|w| w[0] <= w[1]));
            assert!(r.chain_holds, "delta {}: {} > {}", r.delta, r.chain_lhs, r.chain_rhs);
            assert_eq!(r.multiplicity, 2);
        }
        assert!(cost_decreasing(&reps));
    }

    #[test]
    fn point_cost_decreases_in_the_plane() {
        let q = GridCube::unit(2, 129).unwrap();
        let k = point(&q, &[0.5, 0.5]);
        let u = admissible_function(&k, 1, 0, 1.0).unwrap();
        let reps = run_synthesis(&u, &k, 1, 2.0, &DEFAULT_DELTAS, &Default::default()).unwrap();
        for r in &reps {
            assert!(r.complete, "delta {}", r.delta);
        }
        let costs: Vec<f64> = reps.iter().map(|r| r.total_cost).collect();
        assert!(cost_decreasing(&reps), "{costs:?}");
    }

    #[test]
    fn second_order_class_is_preserved() {
        let q = GridCube::unit(1, 65).unwrap();
        let k = point(&q, &[0.5]);
        let u = admissible_function(&k, 2, 1, 1.0).unwrap();
        let reps = run_synthesis(&u, &k, 2, 2.0, &DEFAULT_DELTAS, &Default::default()).unwrap();
        for r in &reps {
            assert!(r.complete && r.max_membership_residual < 1e-8);
        }
    }

    #[test]
    fn empty_set_condition_ratio_is_one() {
        let q = GridCube::unit(1, 17).unwrap();
        let fam = vec![("empty".to_string(), CompactMask::empty(&q))];
        let rep = check_synthesis_condition(&q, &fam, 1, 0, 2.0, &ConditionOptions::default()).unwrap();
        assert!(rep.items.iter().all(|i| (i.ratio - 1.0).abs() < 1e-6), "{:?}", rep.items);
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(theta_ratio(0.0, 0.0), 1.0);
        assert!(theta_ratio(0.5, 0.0).is_infinite());
        assert_eq!(theta_ratio(0.5, 0.25), 2.0);
    }
}
