//! Polynomial and condenser capacities over discretely encoded function
//! classes.

mod condenser;
mod gamma;
mod theta;

pub use condenser::{condenser_capacity, sharp_capacity};
pub use gamma::gamma_capacity;
pub use theta::{theta_capacity, theta_capacity_with, ThetaOptions};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calculus::{trace_rows, OrderOps};
use crate::error::{Error, Result};
use crate::grid::{dilate_mask, CompactMask, GridCube, GridFunction, Lattice};
use crate::linalg::{Constraints, SparseRow};
use crate::polynomials::Polynomial;

/// Trace constraints defining the admissible set on `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaseClass {
    /// `D^alpha u = 0` at the nodes of `K` for `|alpha| <= s`.
    PartialZeroTrace { s: usize },
    /// `D^alpha u = 0` for `|alpha| <= m - 1` on `K` dilated by `rho` cells.
    FullZeroTrace { rho: usize },
    Unconstrained,
}

/// Fixes the projection `Pi u` to a polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pin {
    pub poly: Polynomial,
    /// Per-order projection weights; `None` means all ones.
    pub weights: Option<Vec<f64>>,
}

/// An admissible set of grid functions on the cube carrying `k_set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionClassSpec {
    pub base: BaseClass,
    pub nonnegative: bool,
    pub pin: Option<Pin>,
    pub m: usize,
    pub k_set: CompactMask,
}

impl FunctionClassSpec {
    pub fn new(base: BaseClass, m: usize, k_set: CompactMask) -> Result<Self> {
        let spec = Self {
            base,
            nonnegative: false,
            pin: None,
            m,
            k_set,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn partial(s: usize, m: usize, k_set: CompactMask) -> Result<Self> {
        Self::new(BaseClass::PartialZeroTrace { s }, m, k_set)
    }

    pub fn full(rho: usize, m: usize, k_set: CompactMask) -> Result<Self> {
        Self::new(BaseClass::FullZeroTrace { rho }, m, k_set)
    }

    pub fn unconstrained(m: usize, grid: &GridCube) -> Self {
        Self {
            base: BaseClass::Unconstrained,
            nonnegative: false,
            pin: None,
            m,
            k_set: CompactMask::empty(grid),
        }
    }

    pub fn with_nonnegative(mut self, flag: bool) -> Self {
        self.nonnegative = flag;
        self
    }

    pub fn with_pin(mut self, pin: Pin) -> Self {
        self.pin = Some(pin);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("order m must be >= 1".into()));
        }
        match self.base {
            BaseClass::PartialZeroTrace { s } if s + 1 > self.m => Err(Error::InvalidParameter(
                format!("trace order s = {s} exceeds m - 1 = {}", self.m - 1),
            )),
            BaseClass::FullZeroTrace { rho } if rho == 0 => Err(Error::InvalidParameter(
                "full trace needs a dilation radius >= 1".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn grid(&self) -> &GridCube {
        self.k_set.grid()
    }

    /// Nodes (on the class grid) carrying constraints and the derivative
    /// order constrained there.
    pub fn constrained_nodes(&self) -> (Vec<usize>, Option<usize>) {
        match self.base {
            BaseClass::PartialZeroTrace { s } => (self.k_set.nodes(), Some(s)),
            BaseClass::FullZeroTrace { rho } => {
                (dilate_mask(&self.k_set, rho).nodes(), Some(self.m - 1))
            }
            BaseClass::Unconstrained => (Vec::new(), None),
        }
    }

    /// Homogeneous constraint rows on `target`, which is either the class
    /// grid itself or its doubling.
    pub fn rows_on(&self, target: &GridCube) -> Result<Vec<SparseRow>> {
        self.validate()?;
        let (nodes, order) = self.constrained_nodes();
        let Some(order) = order else {
            return Ok(Vec::new());
        };
        let nodes = map_nodes(self.grid(), &nodes, target)?;
        trace_rows(&target.lattice(), &nodes, order)
    }
}

/// Maps node indices of `grid` onto `target` (equal grid or its doubling).
pub(crate) fn map_nodes(grid: &GridCube, nodes: &[usize], target: &GridCube) -> Result<Vec<usize>> {
    if target == grid {
        return Ok(nodes.to_vec());
    }
    if target.parent().as_ref() != Some(grid) {
        return Err(Error::InvalidParameter(
            "class grid is neither the target nor its parent".into(),
        ));
    }
    nodes
        .iter()
        .map(|&i| {
            target
                .embed_parent_index(i)
                .ok_or_else(|| Error::InvalidGeometry(format!("node {i} does not embed")))
        })
        .collect()
}

/// How a reported value relates to the discrete infimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    ExactEigen,
    ExactQp,
    UpperBoundMultistart,
    UpperBound,
    LowerBound,
    Sampled,
}

/// Solver bookkeeping attached to every capacity value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub starts: usize,
    pub iterations: usize,
    /// Largest normalized constraint residual of the witness.
    pub residual: f64,
    /// Relative mismatch between the value and its re-evaluation.
    pub reevaluation_error: f64,
    pub notes: Vec<String>,
}

/// A capacity value with its witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub value: f64,
    pub witness: Option<GridFunction>,
    pub polynomial: Option<Polynomial>,
    pub bound: BoundKind,
    /// False when the admissible test set was found empty.
    pub feasible: bool,
    pub diagnostics: Diagnostics,
}

impl CapacityResult {
    pub(crate) fn zero(grid: &GridCube, bound: BoundKind, note: &str) -> Self {
        Self {
            value: 0.0,
            witness: Some(GridFunction::zeros(grid)),
            polynomial: None,
            bound,
            feasible: true,
            diagnostics: Diagnostics {
                notes: vec![note.to_string()],
                ..Default::default()
            },
        }
    }
}

/// Rows forcing `u` and its derivatives of order `< m` to vanish on the
/// outer `m` node layers of a lattice.
pub fn boundary_rows(lattice: &Lattice, m: usize) -> Result<Vec<SparseRow>> {
    let shape = lattice.shape().to_vec();
    let nodes: Vec<usize> = (0..lattice.len())
        .filter(|&i| {
            lattice
                .multi(i)
                .iter()
                .zip(&shape)
                .any(|(&c, &n)| c.min(n - 1 - c) < m)
        })
        .collect();
    trace_rows(lattice, &nodes, m - 1)
}

/// Energy operators and their dense matrix for order `m` on a whole lattice.
pub(crate) struct Energy {
    pub ops: OrderOps,
    pub matrix: DMatrix<f64>,
}

impl Energy {
    pub fn new(lattice: &Lattice, m: usize) -> Result<Self> {
        let ops = OrderOps::new(lattice, m, None)?;
        let matrix = ops.energy_matrix(lattice.len());
        Ok(Self { ops, matrix })
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("exponent p = {p} must be >= 1")));
    }
    Ok(())
}

pub(crate) fn check_orders(m: usize, k: usize) -> Result<()> {
    if m == 0 || k + 1 > m {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= k <= m - 1, got m = {m}, k = {k}"
        )));
    }
    Ok(())
}

pub(crate) fn check_class(class: &FunctionClassSpec, q: &GridCube, m: usize) -> Result<()> {
    class.validate()?;
    if class.grid() != q {
        return Err(Error::InvalidParameter("class lives on a different cube".into()));
    }
    if class.m != m {
        return Err(Error::InvalidParameter(format!(
            "class order {} differs from m = {m}",
            class.m
        )));
    }
    Ok(())
}

/// Relative mismatch `|a - b| / max(|a|, |b|, floor)`.
pub(crate) fn rel_err(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs()).max(1e-12);
    (a - b).abs() / s
}

pub(crate) fn homogeneous(n: usize, rows: Vec<SparseRow>, nrhs: usize) -> Constraints {
    Constraints::homogeneous(n, rows, nrhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::multi_indices;
    use crate::grid::{build_mask, Geometry};

    fn trace_count(dim: usize, s: usize) -> usize {
        (0..=s).map(|o| multi_indices(dim, o).len()).sum()
    }

    #[test]
    fn boundary_layers() {
        let g = GridCube::unit(1, 9).unwrap();
        let rows = boundary_rows(&g.lattice(), 2).unwrap();
        // Values and first derivatives at 4 layer nodes.
        assert_eq!(rows.len(), 8);
    }

    #[test]
    fn class_rows_map_to_doubling() {
        let q = GridCube::unit(2, 5).unwrap();
        let d = q.double().unwrap();
        let k = build_mask(&q, &Geometry::Point { at: vec![0.5, 0.5] }).unwrap();
        let c = FunctionClassSpec::partial(1, 2, k).unwrap();
        let rows = c.rows_on(&d).unwrap();
        assert_eq!(rows.len(), trace_count(2, 1));
        let center = d.lattice().index(&[4, 4]);
        assert_eq!(rows[0].idx, vec![center]);
    }

    #[test]
    fn invalid_classes() {
        let q = GridCube::unit(1, 5).unwrap();
        assert!(FunctionClassSpec::partial(1, 1, CompactMask::empty(&q)).is_err());
        assert!(FunctionClassSpec::full(0, 1, CompactMask::empty(&q)).is_err());
    }
}
