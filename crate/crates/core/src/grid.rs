//! Uniform cube lattices, compact-set masks and grid functions.
//!
//! Nodes are enumerated with axis 0 varying fastest: the node with per-axis
//! indices `(i_0, .., i_{N-1})` has linear index `i_0 + n i_1 + n^2 i_2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing distances against half a cell.
const RASTER_SLACK: f64 = 1e-9;

/// Axis-aligned box lattice with uniform spacing. Cubes, doublings and the
/// sub-boxes used by the synthesis patches are all lattices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    shape: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
}

impl Lattice {
    pub fn new(shape: Vec<usize>, spacing: f64, origin: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), origin.len());
        Self {
            shape,
            spacing,
            origin,
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `h^N` carried by every node.
    pub fn weight(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    /// Geometric center of the box.
    pub fn center(&self) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.shape)
            .map(|(o, &n)| o + 0.5 * (n - 1) as f64 * self.spacing)
            .collect()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, n) in multi.iter().zip(&self.shape) {
            idx += i * stride;
            stride *= n;
        }
        idx
    }

    pub fn multi(&self, mut index: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&n| {
                let i = index % n;
                index /= n;
                i
            })
            .collect()
    }

    pub fn coord(&self, index: usize, axis: usize) -> f64 {
        let stride: usize = self.shape[..axis].iter().product();
        let i = (index / stride) % self.shape[axis];
        self.origin[axis] + i as f64 * self.spacing
    }

    pub fn coords(&self, index: usize) -> Vec<f64> {
        self.multi(index)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + i as f64 * self.spacing)
            .collect()
    }
}

/// A uniform node lattice over a closed cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCube {
    dim: usize,
    nodes_per_side: usize,
    side_length: f64,
    center: Vec<f64>,
    spacing: f64,
    doubling: bool,
}

impl GridCube {
    /// Builds the lattice with `n` nodes per side over the cube of side `side`
    /// centered at `center`.
    pub fn new(dim: usize, n: usize, center: &[f64], side: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDiscretization(format!(
                "dimension {dim} not in 1..=3"
            )));
        }
        if n < 5 || n % 2 == 0 {
            return Err(Error::UnsupportedDiscretization(format!(
                "nodes per side must be odd and >= 5, got {n}"
            )));
        }
        if center.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: center.len(),
            });
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::UnsupportedDiscretization(format!(
                "side length must be positive, got {side}"
            )));
        }
        Ok(Self {
            dim,
            nodes_per_side: n,
            side_length: side,
            center: center.to_vec(),
            spacing: side / (n - 1) as f64,
            doubling: false,
        })
    }

    /// The unit cube `[0,1]^N` with `n` nodes per side.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, &vec![0.5; dim], 1.0)
    }

    /// The concentric cube of twice the side with the same spacing. The
    /// parent's nodes are a subset of the doubling's nodes.
    pub fn double(&self) -> Result<Self> {
        let mut doubled = Self::new(
            self.dim,
            2 * (self.nodes_per_side - 1) + 1,
            &self.center,
            2.0 * self.side_length,
        )?;
        doubled.spacing = self.spacing;
        doubled.doubling = true;
        Ok(doubled)
    }

    /// For a doubling, the cube it was doubled from.
    pub fn parent(&self) -> Option<Self> {
        if !self.doubling {
            return None;
        }
        let mut parent = Self::new(
            self.dim,
            (self.nodes_per_side - 1) / 2 + 1,
            &self.center,
            0.5 * self.side_length,
        )
        .ok()?;
        parent.spacing = self.spacing;
        Some(parent)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_side(&self) -> usize {
        self.nodes_per_side
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn is_doubling(&self) -> bool {
        self.doubling
    }

    pub fn weight(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_side.pow(self.dim as u32)
    }

    /// Minimum corner of the cube.
    pub fn lower_corner(&self) -> Vec<f64> {
        self.center
            .iter()
            .map(|c| c - 0.5 * self.side_length)
            .collect()
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(
            vec![self.nodes_per_side; self.dim],
            self.spacing,
            self.lower_corner(),
        )
    }

    pub fn coords(&self, index: usize) -> Vec<f64> {
        self.lattice().coords(index)
    }

    /// Index in this doubling of the parent node `parent_index`.
    pub fn embed_parent_index(&self, parent_index: usize) -> Option<usize> {
        let parent = self.parent()?;
        let offset = (parent.nodes_per_side - 1) / 2;
        let pl = parent.lattice();
        let multi: Vec<usize> = pl.multi(parent_index).iter().map(|i| i + offset).collect();
        Some(self.lattice().index(&multi))
    }

    /// Indices of the doubling's nodes that belong to the closed parent cube.
    pub fn parent_nodes(&self) -> Option<Vec<usize>> {
        let parent = self.parent()?;
        Some(
            (0..parent.node_count())
                .map(|i| self.embed_parent_index(i).expect("doubling"))
                .collect(),
        )
    }

    /// Per-axis bounds of the reference cube for geometry: the parent for a
    /// doubling, the cube itself otherwise.
    fn reference_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let half = if self.doubling {
            0.25 * self.side_length
        } else {
            0.5 * self.side_length
        };
        (
            self.center.iter().map(|c| c - half).collect(),
            self.center.iter().map(|c| c + half).collect(),
        )
    }

    /// Whether node `index` lies in the closed reference cube.
    pub fn in_reference_cube(&self, index: usize) -> bool {
        let (lo, hi) = self.reference_bounds();
        let tol = RASTER_SLACK * self.spacing;
        self.coords(index)
            .iter()
            .zip(lo.iter().zip(&hi))
            .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }
}

/// Set descriptors rasterized onto a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// Explicit node indices of the target grid.
    Nodes { nodes: Vec<usize> },
    Point { at: Vec<f64> },
    Segment { from: Vec<f64>, to: Vec<f64> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Cantor dust: the product over axes of the middle-thirds Cantor set of
    /// the reference cube, truncated at `depth`.
    Cantor { depth: u32 },
    /// Sierpinski carpet on the (2D) reference cube, truncated at `depth`.
    Carpet { depth: u32 },
    Union { parts: Vec<Geometry> },
}

/// How a mask came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ExplicitNodes,
    Primitive,
    Generator { name: String, depth: u32 },
    Union,
    Dilated { radius: usize },
    Nodeset,
}

/// Boolean node flags marking a compact set `K` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactMask {
    grid: GridCube,
    flags: Vec<bool>,
    provenance: Provenance,
}

impl CompactMask {
    pub fn empty(grid: &GridCube) -> Self {
        Self {
            grid: grid.clone(),
            flags: vec![false; grid.node_count()],
            provenance: Provenance::ExplicitNodes,
        }
    }

    pub fn from_flags(grid: &GridCube, flags: Vec<bool>, provenance: Provenance) -> Result<Self> {
        if flags.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.node_count(),
                got: flags.len(),
            });
        }
        let mask = Self {
            grid: grid.clone(),
            flags,
            provenance,
        };
        if grid.is_doubling() {
            if let Some(i) = mask.nodes().into_iter().find(|&i| !grid.in_reference_cube(i)) {
                return Err(Error::InvalidGeometry(format!(
                    "node {i} lies outside the parent cube of the doubling"
                )));
            }
        }
        Ok(mask)
    }

    pub fn from_nodes(grid: &GridCube, nodes: &[usize]) -> Result<Self> {
        let mut flags = vec![false; grid.node_count()];
        for &i in nodes {
            if i >= flags.len() {
                return Err(Error::InvalidGeometry(format!(
                    "node index {i} out of range ({} nodes)",
                    flags.len()
                )));
            }
            flags[i] = true;
        }
        Self::from_flags(grid, flags, Provenance::ExplicitNodes)
    }

    pub fn grid(&self) -> &GridCube {
        &self.grid
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn contains(&self, index: usize) -> bool {
        self.flags[index]
    }

    /// Sorted indices of the marked nodes.
    pub fn nodes(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|&f| f)
    }

    pub fn is_subset_of(&self, other: &CompactMask) -> bool {
        self.flags
            .iter()
            .zip(&other.flags)
            .all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &CompactMask) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidGeometry("masks live on different grids".into()));
        }
        let flags = self
            .flags
            .iter()
            .zip(&other.flags)
            .map(|(&a, &b)| a || b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            flags,
            provenance: Provenance::Union,
        })
    }

    /// Moves a mask on a cube `Q` onto the doubling `2Q`.
    pub fn embed_in(&self, doubling: &GridCube) -> Result<Self> {
        match doubling.parent() {
            Some(parent) if parent.lattice() == self.grid.lattice() => {}
            _ => {
                return Err(Error::InvalidGeometry(
                    "target grid is not the doubling of the mask's grid".into(),
                ))
            }
        }
        let mut flags = vec![false; doubling.node_count()];
        for i in self.nodes() {
            flags[doubling.embed_parent_index(i).expect("doubling")] = true;
        }
        Ok(Self {
            grid: doubling.clone(),
            flags,
            provenance: self.provenance.clone(),
        })
    }

    /// Moves a mask on a doubling back onto its parent cube.
    pub fn restrict_to_parent(&self) -> Result<Self> {
        let parent = self
            .grid
            .parent()
            .ok_or_else(|| Error::InvalidGeometry("mask grid is not a doubling".into()))?;
        let flags = (0..parent.node_count())
            .map(|i| self.flags[self.grid.embed_parent_index(i).expect("doubling")])
            .collect();
        Ok(Self {
            grid: parent,
            flags,
            provenance: self.provenance.clone(),
        })
    }

    /// JSON form: the sorted node-index list.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!(self.nodes())
    }
}

/// Rasterizes `geometry` onto `grid`: a node is marked when its Chebyshev
/// distance to the set is at most half a cell.
pub fn build_mask(grid: &GridCube, geometry: &Geometry) -> Result<CompactMask> {
    let lattice = grid.lattice();
    let (ref_lo, ref_hi) = grid.reference_bounds();
    check_geometry(grid, geometry, &ref_lo, &ref_hi)?;
    let boxes = geometry_boxes(geometry, &ref_lo, &ref_hi, grid.dim())?;
    let reach = 0.5 * grid.spacing() * (1.0 + RASTER_SLACK);
    let mut flags = vec![false; grid.node_count()];
    for (i, flag) in flags.iter_mut().enumerate() {
        let x = lattice.coords(i);
        *flag = boxes.iter().any(|shape| shape.distance(&x) <= reach);
    }
    let explicit = explicit_nodes(geometry);
    for i in explicit {
        if i >= flags.len() {
            return Err(Error::InvalidGeometry(format!("node index {i} out of range")));
        }
        flags[i] = true;
    }
    if grid.is_doubling() {
        for (i, flag) in flags.iter_mut().enumerate() {
            if *flag && !grid.in_reference_cube(i) {
                *flag = false;
            }
        }
    }
    let provenance = match geometry {
        Geometry::Nodes { .. } => Provenance::ExplicitNodes,
        Geometry::Point { .. } | Geometry::Segment { .. } | Geometry::Box { .. } => {
            Provenance::Primitive
        }
        Geometry::Cantor { depth } => Provenance::Generator {
            name: "cantor".into(),
            depth: *depth,
        },
        Geometry::Carpet { depth } => Provenance::Generator {
            name: "carpet".into(),
            depth: *depth,
        },
        Geometry::Union { .. } => Provenance::Union,
    };
    CompactMask::from_flags(grid, flags, provenance)
}

/// Grows a mask by `radius` cells in the Chebyshev metric of the lattice.
pub fn dilate_mask(mask: &CompactMask, radius: usize) -> CompactMask {
    if radius == 0 {
        return mask.clone();
    }
    let lattice = mask.grid.lattice();
    let mut flags = mask.flags.clone();
    // Chebyshev balls are products of intervals: dilate one axis at a time.
    for axis in 0..lattice.dim() {
        let n = lattice.shape()[axis];
        let stride: usize = lattice.shape()[..axis].iter().product();
        let src = flags.clone();
        for (i, flag) in flags.iter_mut().enumerate() {
            if *flag {
                continue;
            }
            let pos = (i / stride) % n;
            let lo = pos.saturating_sub(radius);
            let hi = (pos + radius).min(n - 1);
            *flag = (lo..=hi).any(|q| src[i - pos * stride + q * stride]);
        }
    }
    CompactMask {
        grid: mask.grid.clone(),
        flags,
        provenance: Provenance::Dilated { radius },
    }
}

fn explicit_nodes(geometry: &Geometry) -> Vec<usize> {
    match geometry {
        Geometry::Nodes { nodes } => nodes.clone(),
        Geometry::Union { parts } => parts.iter().flat_map(explicit_nodes).collect(),
        _ => Vec::new(),
    }
}

fn check_geometry(grid: &GridCube, geometry: &Geometry, lo: &[f64], hi: &[f64]) -> Result<()> {
    let dim = grid.dim();
    let tol = RASTER_SLACK * grid.spacing();
    let check_point = |p: &[f64]| -> Result<()> {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if grid.is_doubling()
            && p
                .iter()
                .zip(lo.iter().zip(hi))
                .any(|(x, (l, h))| *x < l - tol || *x > h + tol)
        {
            return Err(Error::InvalidGeometry(format!(
                "point {p:?} lies outside the closed parent cube"
            )));
        }
        Ok(())
    };
    match geometry {
        Geometry::Nodes { nodes } => {
            for &i in nodes {
                if i >= grid.node_count() {
                    return Err(Error::InvalidGeometry(format!("node index {i} out of range")));
                }
                if grid.is_doubling() && !grid.in_reference_cube(i) {
                    return Err(Error::InvalidGeometry(format!(
                        "node {i} lies outside the closed parent cube"
                    )));
                }
            }
            Ok(())
        }
        Geometry::Point { at } => check_point(at),
        Geometry::Segment { from, to } => {
            check_point(from)?;
            check_point(to)
        }
        Geometry::Box { lo: a, hi: b } => {
            check_point(a)?;
            check_point(b)?;
            if a.iter().zip(b).any(|(x, y)| x > y) {
                return Err(Error::InvalidGeometry("box with lo > hi".into()));
            }
            Ok(())
        }
        Geometry::Cantor { .. } => Ok(()),
        Geometry::Carpet { .. } => {
            if dim != 2 {
                return Err(Error::InvalidGeometry(
                    "the carpet generator needs a 2D grid".into(),
                ));
            }
            Ok(())
        }
        Geometry::Union { parts } => parts
            .iter()
            .try_for_each(|g| check_geometry(grid, g, lo, hi)),
    }
}

/// Closed primitive pieces making up a geometry.
#[derive(Debug, Clone)]
enum Piece {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Segment { from: Vec<f64>, to: Vec<f64> },
}

impl Piece {
    /// Chebyshev distance from `x` to the piece.
    fn distance(&self, x: &[f64]) -> f64 {
        match self {
            Piece::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (l, h))| (l - x).max(x - h).max(0.0))
                .fold(0.0, f64::max),
            Piece::Segment { from, to } => {
                let at = |t: f64| -> f64 {
                    x.iter()
                        .zip(from.iter().zip(to))
                        .map(|(x, (a, b))| (x - (a + t * (b - a))).abs())
                        .fold(0.0, f64::max)
                };
                // The distance along the segment is convex in t.
                let (mut a, mut b) = (0.0_f64, 1.0_f64);
                for _ in 0..100 {
                    let m1 = a + (b - a) / 3.0;
                    let m2 = b - (b - a) / 3.0;
                    if at(m1) <= at(m2) {
                        b = m2;
                    } else {
                        a = m1;
                    }
                }
                at(0.5 * (a + b)).min(at(0.0)).min(at(1.0))
            }
        }
    }
}

fn geometry_boxes(geometry: &Geometry, lo: &[f64], hi: &[f64], dim: usize) -> Result<Vec<Piece>> {
    Ok(match geometry {
        Geometry::Nodes { .. } => Vec::new(),
        Geometry::Point { at } => vec![Piece::Box {
            lo: at.clone(),
            hi: at.clone(),
        }],
        Geometry::Segment { from, to } => vec![Piece::Segment {
            from: from.clone(),
            to: to.clone(),
        }],
        Geometry::Box { lo, hi } => vec![Piece::Box {
            lo: lo.clone(),
            hi: hi.clone(),
        }],
        Geometry::Cantor { depth } => {
            let intervals: Vec<Vec<(f64, f64)>> = (0..dim)
                .map(|a| cantor_intervals(lo[a], hi[a], *depth))
                .collect();
            product_boxes(&intervals)
        }
        Geometry::Carpet { depth } => carpet_squares(lo, hi, *depth)
            .into_iter()
            .map(|(lo, hi)| Piece::Box { lo, hi })
            .collect(),
        Geometry::Union { parts } => {
            let mut all = Vec::new();
            for part in parts {
                all.extend(geometry_boxes(part, lo, hi, dim)?);
            }
            all
        }
    })
}

/// The `2^depth` closed intervals left after removing open middle thirds.
pub fn cantor_intervals(lo: f64, hi: f64, depth: u32) -> Vec<(f64, f64)> {
    let mut intervals = vec![(lo, hi)];
    for _ in 0..depth {
        intervals = intervals
            .into_iter()
            .flat_map(|(a, b)| {
                let third = (b - a) / 3.0;
                [(a, a + third), (b - third, b)]
            })
            .collect();
    }
    intervals
}

fn product_boxes(intervals: &[Vec<(f64, f64)>]) -> Vec<Piece> {
    let mut boxes = vec![(Vec::new(), Vec::new())];
    for axis in intervals {
        boxes = boxes
            .into_iter()
            .flat_map(|(lo, hi): (Vec<f64>, Vec<f64>)| {
                axis.iter().map(move |&(a, b)| {
                    let mut lo = lo.clone();
                    let mut hi = hi.clone();
                    lo.push(a);
                    hi.push(b);
                    (lo, hi)
                })
            })
            .collect();
    }
    boxes
        .into_iter()
        .map(|(lo, hi)| Piece::Box { lo, hi })
        .collect()
}

/// The `8^depth` closed squares of the truncated Sierpinski carpet.
pub fn carpet_squares(lo: &[f64], hi: &[f64], depth: u32) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut squares = vec![(lo.to_vec(), hi.to_vec())];
    for _ in 0..depth {
        squares = squares
            .into_iter()
            .flat_map(|(lo, hi)| {
                let w = [(hi[0] - lo[0]) / 3.0, (hi[1] - lo[1]) / 3.0];
                let mut out = Vec::with_capacity(8);
                for j in 0..3 {
                    for i in 0..3 {
                        if i == 1 && j == 1 {
                            continue;
                        }
                        let a = vec![lo[0] + i as f64 * w[0], lo[1] + j as f64 * w[1]];
                        let b = vec![a[0] + w[0], a[1] + w[1]];
                        out.push((a, b));
                    }
                }
                out
            })
            .collect();
    }
    squares
}

/// Real values on the nodes of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: GridCube,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &GridCube, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &GridCube) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &GridCube, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let lattice = grid.lattice();
        let values = (0..grid.node_count())
            .map(|i| f(&lattice.coords(i)))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridCube {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `a * self + b * other` on a shared grid.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: other.values.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::new(&self.grid, values)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// Values on the parent cube when this function lives on a doubling.
    pub fn restrict_to_parent(&self) -> Result<Self> {
        let parent = self
            .grid
            .parent()
            .ok_or_else(|| Error::InvalidGeometry("function grid is not a doubling".into()))?;
        let values = (0..parent.node_count())
            .map(|i| self.values[self.grid.embed_parent_index(i).expect("doubling")])
            .collect();
        Self::new(&parent, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_nodes() {
        let g = GridCube::new(1, 5, &[0.5], 1.0).unwrap();
        let xs: Vec<f64> = (0..5).map(|i| g.coords(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.spacing(), 0.25);
    }

    #[test]
    fn square_has_corner() {
        let g = GridCube::new(2, 5, &[0.0, 0.0], 2.0).unwrap();
        assert_eq!(g.node_count(), 25);
        assert!((0..25).any(|i| g.coords(i) == vec![-1.0, -1.0]));
    }

    #[test]
    fn cube_weight() {
        let g = GridCube::new(3, 5, &[0.0; 3], 1.0).unwrap();
        assert_eq!(g.node_count(), 125);
        assert_eq!(g.weight(), 0.25f64.powi(3));
    }

    #[test]
    fn rejects_bad_discretizations() {
        assert!(GridCube::new(1, 6, &[0.0], 1.0).is_err());
        assert!(GridCube::new(1, 3, &[0.0], 1.0).is_err());
        assert!(GridCube::new(4, 5, &[0.0; 4], 1.0).is_err());
        assert!(GridCube::new(1, 5, &[0.0], 0.0).is_err());
    }

    #[test]
    fn doubling_keeps_spacing_and_parent_nodes() {
        let q = GridCube::unit(1, 5).unwrap();
        let d = q.double().unwrap();
        assert_eq!(d.nodes_per_side(), 9);
        assert_eq!(d.spacing(), q.spacing());
        assert_eq!(d.lower_corner(), vec![-0.5]);
        assert_eq!(d.coords(8), vec![1.5]);
        for i in 0..q.node_count() {
            let j = d.embed_parent_index(i).unwrap();
            assert_eq!(d.coords(j), q.coords(i));
        }
        let q2 = GridCube::unit(2, 9).unwrap().double().unwrap();
        assert_eq!(q2.nodes_per_side(), 17);
        assert_eq!(q2.side_length(), 2.0);
        let dd = d.double().unwrap();
        assert_eq!(dd.side_length(), 4.0);
    }

    #[test]
    fn center_point_marks_center_node() {
        let g = GridCube::unit(2, 9).unwrap();
        let m = build_mask(&g, &Geometry::Point { at: vec![0.5, 0.5] }).unwrap();
        assert_eq!(m.nodes(), vec![40]);
    }

    #[test]
    fn closed_cube_box_marks_parent_nodes() {
        let q = GridCube::unit(2, 5).unwrap();
        let d = q.double().unwrap();
        let m = build_mask(
            &d,
            &Geometry::Box {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 1.0],
            },
        )
        .unwrap();
        let mut expect = d.parent_nodes().unwrap();
        expect.sort_unstable();
        assert_eq!(m.nodes(), expect);
    }

    #[test]
    fn geometry_outside_parent_rejected_on_doubling() {
        let d = GridCube::unit(1, 5).unwrap().double().unwrap();
        assert!(build_mask(&d, &Geometry::Point { at: vec![1.25] }).is_err());
        let q = GridCube::unit(1, 5).unwrap();
        // On a plain cube it just rasterizes to nothing.
        assert!(build_mask(&q, &Geometry::Point { at: vec![3.0] }).unwrap().is_empty());
    }

    #[test]
    fn cantor_depth_one_against_interval_membership() {
        let g = GridCube::unit(1, 163).unwrap();
        let m = build_mask(&g, &Geometry::Cantor { depth: 1 }).unwrap();
        for i in 0..163 {
            let x = g.coords(i)[0];
            let brute = x <= 1.0 / 3.0 + 1e-12 || x >= 2.0 / 3.0 - 1e-12;
            assert_eq!(m.contains(i), brute, "node {i} at {x}");
        }
    }

    #[test]
    fn dilation_of_center_point() {
        let g = GridCube::unit(2, 9).unwrap();
        let m = build_mask(&g, &Geometry::Point { at: vec![0.5, 0.5] }).unwrap();
        assert_eq!(dilate_mask(&m, 0), m);
        let d = dilate_mask(&m, 1);
        assert_eq!(d.count(), 9);
        assert!(m.is_subset_of(&d));
        assert_eq!(d.nodes(), vec![30, 31, 32, 39, 40, 41, 48, 49, 50]);
    }

    #[test]
    fn empty_mask_is_legal() {
        let g = GridCube::unit(1, 5).unwrap();
        let m = build_mask(&g, &Geometry::Union { parts: vec![] }).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn embed_and_restrict_roundtrip() {
        let q = GridCube::unit(2, 5).unwrap();
        let d = q.double().unwrap();
        let m = CompactMask::from_nodes(&q, &[0, 7, 24]).unwrap();
        let e = m.embed_in(&d).unwrap();
        assert_eq!(e.count(), 3);
        assert_eq!(e.restrict_to_parent().unwrap().nodes(), m.nodes());
    }

    #[test]
    fn grid_function_rejects_non_finite() {
        let g = GridCube::unit(1, 5).unwrap();
        assert!(GridFunction::new(&g, vec![0.0, 1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(GridFunction::new(&g, vec![0.0; 4]).is_err());
    }
}
