//! Discretization of the demand region: the uniform grid, the cells meeting
//! the region, per-cell demand and installation weights, the feasible
//! placement cells of every facility and their cell footprints.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error as ThisError;

use crate::expr::Expr;
use crate::geometry::{clipped_area, interior_intersects_rect, shape_inside_polygon, Point, Polygon, Rect, Shape};
use crate::Error;

/// Grid cell `(k, l)`: `k` indexes columns (x), `l` rows (y). Cells order
/// row-major: by `l`, then `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellIndex {
    pub k: usize,
    pub l: usize,
}

impl CellIndex {
    pub const fn new(k: usize, l: usize) -> CellIndex {
        CellIndex { k, l }
    }

    /// Cell shifted by `(dk, dl)`, if the result has non-negative indices.
    pub fn offset(self, dk: i64, dl: i64) -> Option<CellIndex> {
        let k = self.k as i64 + dk;
        let l = self.l as i64 + dl;
        (k >= 0 && l >= 0).then(|| CellIndex::new(k as usize, l as usize))
    }
}

impl Ord for CellIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.l, self.k).cmp(&(other.l, other.k))
    }
}

impl PartialOrd for CellIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k, self.l)
    }
}

/// One placement cell per facility; facility `i`'s root sits at the centre
/// of `cells[i]`. Compares lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placement(pub Vec<CellIndex>);

impl Placement {
    pub fn cells(&self) -> &[CellIndex] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| format!("{},{}", c.k, c.l)).collect();
        f.write_str(&parts.join(";"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, ThisError)]
pub enum Unsuitable {
    #[error("placement has {got} entries, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("facility {facility}: cell {cell} is not a feasible placement (shape leaves the region)")]
    Infeasible { facility: usize, cell: CellIndex },
    #[error("facilities {i} and {j} overlap: both footprints contain cell {cell}")]
    Overlap { i: usize, j: usize, cell: CellIndex },
}

/// Uniform grid over an axis-aligned bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bbox: Rect,
    nx: usize,
    ny: usize,
}

impl Grid {
    pub fn new(bbox: Rect, nx: usize, ny: usize) -> Result<Grid, Error> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!("grid dimensions must be positive, got {nx}x{ny}")));
        }
        Ok(Grid { bbox, nx, ny })
    }

    pub fn bbox(&self) -> &Rect {
        &self.bbox
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Cell width (the maximum cell width, as cells are uniform).
    pub fn hx(&self) -> f64 {
        self.bbox.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.bbox.height() / self.ny as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: CellIndex) -> bool {
        c.k < self.nx && c.l < self.ny
    }

    pub fn linear(&self, c: CellIndex) -> usize {
        c.l * self.nx + c.k
    }

    pub fn from_linear(&self, idx: usize) -> CellIndex {
        CellIndex::new(idx % self.nx, idx / self.nx)
    }

    fn x_at(&self, k: usize) -> f64 {
        if k == self.nx {
            self.bbox.x_hi
        } else {
            self.bbox.x_lo + k as f64 * self.hx()
        }
    }

    fn y_at(&self, l: usize) -> f64 {
        if l == self.ny {
            self.bbox.y_hi
        } else {
            self.bbox.y_lo + l as f64 * self.hy()
        }
    }

    pub fn cell_rect(&self, c: CellIndex) -> Rect {
        Rect { x_lo: self.x_at(c.k), x_hi: self.x_at(c.k + 1), y_lo: self.y_at(c.l), y_hi: self.y_at(c.l + 1) }
    }

    pub fn cell_center(&self, c: CellIndex) -> Point {
        self.cell_rect(c).center()
    }

    /// Cell containing `p` under the half-open convention
    /// `[x_lo, x_hi) x [y_lo, y_hi)`; points on the grid's upper or right
    /// edge belong to the last row or column.
    pub fn cell_of_point(&self, p: Point) -> Option<CellIndex> {
        let b = &self.bbox;
        if !(p.x >= b.x_lo && p.x <= b.x_hi && p.y >= b.y_lo && p.y <= b.y_hi) {
            return None;
        }
        let mut k = (((p.x - b.x_lo) / self.hx()).floor() as usize).min(self.nx - 1);
        let mut l = (((p.y - b.y_lo) / self.hy()).floor() as usize).min(self.ny - 1);
        // floor of the scaled coordinate can land one cell off near grid lines
        if p.x < self.x_at(k) {
            k -= 1;
        } else if k + 1 < self.nx && p.x >= self.x_at(k + 1) {
            k += 1;
        }
        if p.y < self.y_at(l) {
            l -= 1;
        } else if l + 1 < self.ny && p.y >= self.y_at(l + 1) {
            l += 1;
        }
        Some(CellIndex::new(k, l))
    }

    /// All grid cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (0..self.ny).flat_map(move |l| (0..self.nx).map(move |k| CellIndex::new(k, l)))
    }
}

pub fn cell_center(grid: &Grid, c: CellIndex) -> Point {
    grid.cell_center(c)
}

/// Cells whose open interior meets the region, row-major.
pub fn build_cells(region: &Polygon, grid: &Grid, eps: f64) -> Result<Vec<CellIndex>, Error> {
    let cells: Vec<CellIndex> = grid
        .cells()
        .filter(|&c| {
            let r = grid.cell_rect(c);
            clipped_area(region.vertices(), &r) > eps * (r.width() + r.height())
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(cells)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            if n == 1 {
                dp = 1.0;
            }
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Tensor Gauss-Legendre quadrature of `density(x, y)` over the closed cell.
pub fn cell_weight(grid: &Grid, c: CellIndex, density: &Expr, order: usize) -> Result<f64, Error> {
    let (nodes, weights) = gauss_legendre(order.max(1));
    cell_weight_with(grid, c, density, &nodes, &weights)
}

fn cell_weight_with(grid: &Grid, c: CellIndex, density: &Expr, nodes: &[f64], weights: &[f64]) -> Result<f64, Error> {
    let r = grid.cell_rect(c);
    let (cx, cy) = ((r.x_lo + r.x_hi) / 2.0, (r.y_lo + r.y_hi) / 2.0);
    let (hx, hy) = (r.width() / 2.0, r.height() / 2.0);
    let mut sum = 0.0;
    let mut norm = 0.0;
    for (xi, wi) in nodes.iter().zip(weights) {
        for (yj, wj) in nodes.iter().zip(weights) {
            let v = density
                .eval(&[cx + hx * xi, cy + hy * yj])
                .map_err(|source| Error::Density { k: c.k, l: c.l, source })?;
            sum += wi * wj * v;
            norm += wi * wj;
        }
    }
    // dividing by the computed weight sum makes constant densities exact
    Ok(r.width() * r.height() * (sum / norm))
}

/// Cells of `cells` whose centre is a valid root position for `shape`.
pub fn facility_feasible_cells(
    region: &Polygon,
    grid: &Grid,
    cells: &[CellIndex],
    shape: &Shape,
    eps: f64,
) -> Vec<CellIndex> {
    cells
        .iter()
        .copied()
        .filter(|&c| shape_inside_polygon(&shape.translate(grid.cell_center(c)), region, eps))
        .collect()
}

/// Cells of `cells` whose open interior meets the open shape rooted at the
/// centre of `at`; scans the shape's bounding box grown by one cell.
pub fn facility_footprint(grid: &Grid, cells: &[CellIndex], shape: &Shape, at: CellIndex, eps: f64) -> Vec<CellIndex> {
    let placed = shape.translate(grid.cell_center(at));
    let b = placed.bbox();
    let (hx, hy) = (grid.hx(), grid.hy());
    let g = grid.bbox();
    let k_lo = (((b.x_lo - g.x_lo) / hx).floor() - 1.0).max(0.0) as usize;
    let l_lo = (((b.y_lo - g.y_lo) / hy).floor() - 1.0).max(0.0) as usize;
    let k_hi = ((((b.x_hi - g.x_lo) / hx).ceil() + 1.0).max(0.0) as usize).min(grid.nx() - 1);
    let l_hi = ((((b.y_hi - g.y_lo) / hy).ceil() + 1.0).max(0.0) as usize).min(grid.ny() - 1);
    let mut member = vec![false; grid.len()];
    for c in cells {
        member[grid.linear(*c)] = true;
    }
    let mut out = Vec::new();
    for l in l_lo..=l_hi {
        for k in k_lo..=k_hi {
            let c = CellIndex::new(k, l);
            if member[grid.linear(c)] && interior_intersects_rect(&placed, &grid.cell_rect(c), eps) {
                out.push(c);
            }
        }
    }
    out
}

/// Cell offsets covered by the shape when rooted at a cell centre. Every
/// placement sees the same shape-versus-grid geometry on a uniform grid, so
/// footprints are this stencil translated to the placement cell.
pub fn footprint_stencil(grid: &Grid, shape: &Shape, eps: f64) -> Vec<(i64, i64)> {
    let (hx, hy) = (grid.hx(), grid.hy());
    let placed = shape.translate(Point::ORIGIN);
    let b = placed.bbox();
    let dk_lo = (b.x_lo / hx - 0.5).floor() as i64 - 1;
    let dk_hi = (b.x_hi / hx + 0.5).ceil() as i64 + 1;
    let dl_lo = (b.y_lo / hy - 0.5).floor() as i64 - 1;
    let dl_hi = (b.y_hi / hy + 0.5).ceil() as i64 + 1;
    let mut out = Vec::new();
    for dl in dl_lo..=dl_hi {
        for dk in dk_lo..=dk_hi {
            let r = Rect {
                x_lo: (dk as f64 - 0.5) * hx,
                x_hi: (dk as f64 + 0.5) * hx,
                y_lo: (dl as f64 - 0.5) * hy,
                y_hi: (dl as f64 + 0.5) * hy,
            };
            if interior_intersects_rect(&placed, &r, eps) {
                out.push((dk, dl));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct FacilityCells {
    /// Feasible placement cells, row-major.
    pub feasible: Vec<CellIndex>,
    feasible_mask: Vec<bool>,
    stencil: Vec<(i64, i64)>,
}

impl FacilityCells {
    pub fn stencil(&self) -> &[(i64, i64)] {
        &self.stencil
    }
}

/// Inputs to [`DiscretizedInstance::build`].
pub struct DiscretizationInput<'a> {
    pub region: &'a Polygon,
    pub grid: Grid,
    pub shapes: &'a [Shape],
    pub demand: &'a Expr,
    pub install: &'a Expr,
    pub quadrature_order: usize,
    pub eps: f64,
}

/// The discretized problem data. Per-cell vectors are indexed by position in
/// `cells` (the set of cells meeting the region).
#[derive(Debug, Clone)]
pub struct DiscretizedInstance {
    region: Polygon,
    grid: Grid,
    eps: f64,
    cells: Vec<CellIndex>,
    position: Vec<usize>,
    centers: Vec<Point>,
    w_d: Vec<f64>,
    w_b: Vec<f64>,
    facilities: Vec<FacilityCells>,
}

const ABSENT: usize = usize::MAX;

impl DiscretizedInstance {
    pub fn build(input: DiscretizationInput<'_>) -> Result<DiscretizedInstance, Error> {
        let DiscretizationInput { region, grid, shapes, demand, install, quadrature_order, eps } = input;
        if quadrature_order == 0 {
            return Err(Error::InvalidGrid("quadrature order must be at least 1".into()));
        }
        let cells = build_cells(region, &grid, eps)?;
        let mut position = vec![ABSENT; grid.len()];
        for (i, c) in cells.iter().enumerate() {
            position[grid.linear(*c)] = i;
        }
        let centers: Vec<Point> = cells.iter().map(|c| grid.cell_center(*c)).collect();
        let (nodes, weights) = gauss_legendre(quadrature_order);
        let weigh = |density: &Expr| -> Result<Vec<f64>, Error> {
            let w = cells
                .par_iter()
                .map(|c| cell_weight_with(&grid, *c, density, &nodes, &weights))
                .collect::<Result<Vec<f64>, Error>>()?;
            if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
                return Err(Error::NegativeWeight { k: cells[i].k, l: cells[i].l, value: *v });
            }
            Ok(w)
        };
        let w_d = weigh(demand)?;
        let w_b = weigh(install)?;
        let facilities = shapes
            .iter()
            .map(|shape| {
                let feasible: Vec<CellIndex> = cells
                    .par_iter()
                    .filter(|c| shape_inside_polygon(&shape.translate(grid.cell_center(**c)), region, eps))
                    .copied()
                    .collect();
                let mut feasible_mask = vec![false; grid.len()];
                for c in &feasible {
                    feasible_mask[grid.linear(*c)] = true;
                }
                FacilityCells { feasible, feasible_mask, stencil: footprint_stencil(&grid, shape, eps) }
            })
            .collect();
        Ok(DiscretizedInstance { region: region.clone(), grid, eps, cells, position, centers, w_d, w_b, facilities })
    }

    pub fn region(&self) -> &Polygon {
        &self.region
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Number of facilities.
    pub fn rho(&self) -> usize {
        self.facilities.len()
    }

    pub fn cells(&self) -> &[CellIndex] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Position of a grid cell in [`Self::cells`].
    pub fn position(&self, c: CellIndex) -> Option<usize> {
        if !self.grid.contains(c) {
            return None;
        }
        let p = self.position[self.grid.linear(c)];
        (p != ABSENT).then_some(p)
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn center(&self, c: CellIndex) -> Point {
        self.grid.cell_center(c)
    }

    pub fn demand_weights(&self) -> &[f64] {
        &self.w_d
    }

    pub fn install_weights(&self) -> &[f64] {
        &self.w_b
    }

    pub fn facility(&self, i: usize) -> &FacilityCells {
        &self.facilities[i]
    }

    pub fn feasible(&self, i: usize) -> &[CellIndex] {
        &self.facilities[i].feasible
    }

    pub fn is_feasible(&self, i: usize, c: CellIndex) -> bool {
        self.grid.contains(c) && self.facilities[i].feasible_mask[self.grid.linear(c)]
    }

    /// Footprint of facility `i` rooted at `at`, as positions into `cells`.
    pub fn footprint_positions(&self, i: usize, at: CellIndex) -> impl Iterator<Item = usize> + '_ {
        self.facilities[i]
            .stencil
            .iter()
            .filter_map(move |&(dk, dl)| at.offset(dk, dl))
            .filter_map(move |c| self.position(c))
    }

    pub fn footprint(&self, i: usize, at: CellIndex) -> Vec<CellIndex> {
        let mut v: Vec<CellIndex> = self.footprint_positions(i, at).map(|p| self.cells[p]).collect();
        v.sort();
        v
    }

    /// Feasible placements of facility `i` whose footprint contains `cell`.
    pub fn covering_placements(&self, i: usize, cell: CellIndex) -> Vec<CellIndex> {
        let mut v: Vec<CellIndex> = self.facilities[i]
            .stencil
            .iter()
            .filter_map(|&(dk, dl)| cell.offset(-dk, -dl))
            .filter(|c| self.is_feasible(i, *c))
            .collect();
        v.sort();
        v
    }

    /// Membership in the set of suitable placements, with the violated
    /// condition on failure.
    pub fn check_placement(&self, p: &Placement) -> Result<(), Unsuitable> {
        if p.len() != self.rho() {
            return Err(Unsuitable::WrongLength { expected: self.rho(), got: p.len() });
        }
        for (i, c) in p.cells().iter().enumerate() {
            if !self.is_feasible(i, *c) {
                return Err(Unsuitable::Infeasible { facility: i, cell: *c });
            }
        }
        let mut owner = vec![ABSENT; self.n_cells()];
        for (i, c) in p.cells().iter().enumerate() {
            for pos in self.footprint_positions(i, *c) {
                if owner[pos] != ABSENT {
                    return Err(Unsuitable::Overlap { i: owner[pos], j: i, cell: self.cells[pos] });
                }
                owner[pos] = i;
            }
        }
        Ok(())
    }
}

pub fn placement_is_suitable(di: &DiscretizedInstance, p: &Placement) -> bool {
    di.check_placement(p).is_ok()
}
