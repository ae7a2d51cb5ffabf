//! Lower-level allocation of demand cells and the upper-level objective of
//! a placement.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use crate::costs::PiecewiseLinear;
use crate::expr::Expr;
use crate::geometry::{gauge_value, max_vertex_distance, GeometryError, Norm, Point, Shape};
use crate::grid::{CellIndex, DiscretizedInstance, Placement};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum UtilityKind {
    /// `f(γ(q - q_i))` for a norm `γ`.
    NormToRoot(Norm),
    /// Minkowski gauge of the facility shape. Clamped: `f(γ_P(q - q_i) - 1)`
    /// outside the shape and `f(0)` inside; unclamped: `f(γ_P(q - q_i))`.
    Gauge { clamped: bool },
    /// `f` of the largest distance from `q` to a vertex of the placed shape.
    MaxDistance(Norm),
}

#[derive(Debug, Clone)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    /// Scaling function in the variable `t`.
    pub scale: Expr,
}

impl UtilitySpec {
    pub fn new(kind: UtilityKind, scale: Expr) -> Result<UtilitySpec, Error> {
        if scale.variables() != ["t"] {
            return Err(Error::InvalidParams(format!(
                "utility scale must be an expression in t, declared variables are {:?}",
                scale.variables()
            )));
        }
        Ok(UtilitySpec { kind, scale })
    }

    /// Scale `t` itself.
    pub fn linear(kind: UtilityKind) -> UtilitySpec {
        UtilitySpec { kind, scale: Expr::parse("t", &["t"]).expect("literal expression") }
    }

    /// Samples the scale on `[0, t_max]` and describes the first decrease,
    /// if any.
    pub fn monotonicity_warning(&self, t_max: f64, samples: usize) -> Option<String> {
        let n = samples.max(2);
        let mut prev: Option<(f64, f64)> = None;
        for j in 0..n {
            let t = t_max * j as f64 / (n - 1) as f64;
            let v = self.scale.eval(&[t]).ok()?;
            if let Some((pt, pv)) = prev {
                if v < pv {
                    return Some(format!(
                        "utility scale `{}` decreases on [{pt}, {t}] ({pv} -> {v})",
                        self.scale.source()
                    ));
                }
            }
            prev = Some((t, v));
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct Facility {
    pub shape: Shape,
    pub access_cost: f64,
    pub utility: UtilitySpec,
    pub install_cost: PiecewiseLinear,
    pub congestion_cost: PiecewiseLinear,
}

impl Facility {
    pub fn new(
        shape: Shape,
        access_cost: f64,
        utility: UtilitySpec,
        install_cost: PiecewiseLinear,
        congestion_cost: PiecewiseLinear,
    ) -> Result<Facility, Error> {
        if !(access_cost.is_finite() && access_cost > 0.0) {
            return Err(Error::InvalidParams(format!("access cost must be positive, got {access_cost}")));
        }
        match &utility.kind {
            UtilityKind::Gauge { .. } => {
                gauge_value(&shape, Point::new(1.0, 0.0))?;
            }
            UtilityKind::MaxDistance(_) => {
                if matches!(shape, Shape::Ellipse { .. }) {
                    return Err(GeometryError::UnsupportedShape("maximum vertex distance needs a polygon").into());
                }
            }
            UtilityKind::NormToRoot(_) => {}
        }
        Ok(Facility { shape, access_cost, utility, install_cost, congestion_cost })
    }

    /// Raw geometric quantity fed to the scale function for a customer at
    /// `q` and the facility rooted at `root`.
    pub fn utility_argument(&self, root: Point, q: Point) -> Result<f64, GeometryError> {
        match &self.utility.kind {
            UtilityKind::NormToRoot(n) => Ok(n.length(q - root)),
            UtilityKind::Gauge { clamped } => {
                let g = gauge_value(&self.shape, q - root)?;
                Ok(if *clamped { (g - 1.0).max(0.0) } else { g })
            }
            UtilityKind::MaxDistance(n) => max_vertex_distance(q, &self.shape.translate(root), n),
        }
    }

    /// Continuous utility `u(q, P^{root})`.
    pub fn utility_at(&self, root: Point, q: Point) -> Result<f64, Error> {
        let t = self.utility_argument(root, q)?;
        Ok(self.utility.scale.eval(&[t])?)
    }
}

/// Utility of cell `cell` for facility `i` placed at `at`: `-a_i` on the
/// footprint, otherwise the continuous utility at the cell centre.
pub fn unit_utility(
    di: &DiscretizedInstance,
    facs: &[Facility],
    i: usize,
    at: CellIndex,
    cell: CellIndex,
) -> Result<f64, Error> {
    let fac = &facs[i];
    if di.footprint_positions(i, at).any(|p| di.cells()[p] == cell) {
        return Ok(-fac.access_cost);
    }
    fac.utility_at(di.center(at), di.center(cell))
        .map_err(|e| with_facility(e, i))
}

fn with_facility(e: Error, facility: usize) -> Error {
    match e {
        Error::Expr(source) => Error::Utility { facility, source },
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellStatus {
    /// Inside the footprint of the facility; its demand is lost.
    Covered(usize),
    Assigned(usize),
}

/// Lower-level solution. `status` is indexed like
/// [`DiscretizedInstance::cells`].
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub status: Vec<CellStatus>,
    pub assigned_mass: Vec<f64>,
    pub lost_mass: f64,
    pub install_mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub total: f64,
    pub install: Vec<f64>,
    pub congestion: Vec<f64>,
    pub lost: f64,
    pub allocation: Allocation,
}

/// Default number of cached utility values (8 bytes each).
pub const DEFAULT_CACHE_BUDGET: usize = 1 << 24;

/// Evaluates placements of one instance, memoizing per-placement utility
/// rows. Safe to share between threads.
pub struct Evaluator<'a> {
    di: &'a DiscretizedInstance,
    facs: &'a [Facility],
    lost_cost: &'a PiecewiseLinear,
    rows: Vec<Vec<OnceLock<Arc<[f64]>>>>,
    budget: usize,
    used: AtomicUsize,
}

impl<'a> Evaluator<'a> {
    pub fn new(di: &'a DiscretizedInstance, facs: &'a [Facility], lost_cost: &'a PiecewiseLinear) -> Evaluator<'a> {
        Evaluator::with_cache_budget(di, facs, lost_cost, DEFAULT_CACHE_BUDGET)
    }

    pub fn with_cache_budget(
        di: &'a DiscretizedInstance,
        facs: &'a [Facility],
        lost_cost: &'a PiecewiseLinear,
        budget: usize,
    ) -> Evaluator<'a> {
        assert_eq!(di.rho(), facs.len(), "instance and facility list disagree on the number of facilities");
        let n = di.grid().len();
        let rows = (0..facs.len()).map(|_| (0..n).map(|_| OnceLock::new()).collect()).collect();
        Evaluator { di, facs, lost_cost, rows, budget, used: AtomicUsize::new(0) }
    }

    pub fn instance(&self) -> &'a DiscretizedInstance {
        self.di
    }

    pub fn facilities(&self) -> &'a [Facility] {
        self.facs
    }

    pub fn lost_cost(&self) -> &'a PiecewiseLinear {
        self.lost_cost
    }

    fn compute_row(&self, i: usize, at: CellIndex) -> Result<Vec<f64>, Error> {
        let fac = &self.facs[i];
        let root = self.di.center(at);
        let mut row = self
            .di
            .centers()
            .iter()
            .map(|q| fac.utility_at(root, *q))
            .collect::<Result<Vec<f64>, Error>>()
            .map_err(|e| with_facility(e, i))?;
        for p in self.di.footprint_positions(i, at) {
            row[p] = -fac.access_cost;
        }
        Ok(row)
    }

    /// Utilities of every cell for facility `i` placed at `at`.
    pub fn utility_row(&self, i: usize, at: CellIndex) -> Result<Arc<[f64]>, Error> {
        let slot = &self.rows[i][self.di.grid().linear(at)];
        if let Some(row) = slot.get() {
            return Ok(row.clone());
        }
        let row: Arc<[f64]> = self.compute_row(i, at)?.into();
        let n = row.len();
        if self.used.fetch_add(n, Ordering::Relaxed) + n <= self.budget {
            // a concurrent writer stores an identical row
            let _ = slot.set(row.clone());
        } else {
            self.used.fetch_sub(n, Ordering::Relaxed);
        }
        Ok(row)
    }

    pub fn solve_lower_level(&self, p: &Placement) -> Result<Allocation, Error> {
        self.di.check_placement(p)?;
        self.allocate(p)
    }

    fn allocate(&self, p: &Placement) -> Result<Allocation, Error> {
        let di = self.di;
        let rho = self.facs.len();
        let rows = p
            .cells()
            .iter()
            .enumerate()
            .map(|(i, at)| self.utility_row(i, *at))
            .collect::<Result<Vec<_>, Error>>()?;
        let mut covered = vec![usize::MAX; di.n_cells()];
        for (i, at) in p.cells().iter().enumerate() {
            for pos in di.footprint_positions(i, *at) {
                covered[pos] = i;
            }
        }
        let w_d = di.demand_weights();
        let w_b = di.install_weights();
        let mut status = Vec::with_capacity(di.n_cells());
        let mut assigned_mass = vec![0.0; rho];
        let mut install_mass = vec![0.0; rho];
        let mut lost_mass = 0.0;
        for pos in 0..di.n_cells() {
            let w = w_d[pos];
            if covered[pos] != usize::MAX {
                let i = covered[pos];
                lost_mass += w;
                install_mass[i] += w_b[pos];
                status.push(CellStatus::Covered(i));
                continue;
            }
            let mut best = 0;
            let mut best_cost = f64::INFINITY;
            for (i, row) in rows.iter().enumerate() {
                let c = self.facs[i].access_cost * w + w * row[pos];
                if c < best_cost {
                    best = i;
                    best_cost = c;
                }
            }
            assigned_mass[best] += w;
            status.push(CellStatus::Assigned(best));
        }
        Ok(Allocation { status, assigned_mass, lost_mass, install_mass })
    }

    pub fn objective(&self, p: &Placement) -> Result<Evaluation, Error> {
        let allocation = self.solve_lower_level(p)?;
        Ok(self.score(allocation))
    }

    /// Objective of a placement already known to be suitable.
    pub(crate) fn objective_unchecked(&self, p: &Placement) -> Result<Evaluation, Error> {
        let allocation = self.allocate(p)?;
        Ok(self.score(allocation))
    }

    fn score(&self, allocation: Allocation) -> Evaluation {
        let install: Vec<f64> =
            self.facs.iter().zip(&allocation.install_mass).map(|(f, m)| f.install_cost.eval(*m)).collect();
        let congestion: Vec<f64> =
            self.facs.iter().zip(&allocation.assigned_mass).map(|(f, m)| f.congestion_cost.eval(*m)).collect();
        let lost = self.lost_cost.eval(allocation.lost_mass);
        let total = install.iter().sum::<f64>() + congestion.iter().sum::<f64>() + lost;
        Evaluation { total, install, congestion, lost, allocation }
    }

    /// Lower-level objective `Σ (a_i w^D + w^D u_i)` of an allocation.
    pub fn lower_level_cost(&self, p: &Placement, allocation: &Allocation) -> Result<f64, Error> {
        let w_d = self.di.demand_weights();
        let mut total = 0.0;
        for (pos, s) in allocation.status.iter().enumerate() {
            if let CellStatus::Assigned(i) = *s {
                let u = self.utility_row(i, p.cells()[i])?[pos];
                total += self.facs[i].access_cost * w_d[pos] + w_d[pos] * u;
            }
        }
        Ok(total)
    }
}

pub fn solve_lower_level(di: &DiscretizedInstance, facs: &[Facility], p: &Placement) -> Result<Allocation, Error> {
    let zero = PiecewiseLinear::zero();
    Evaluator::with_cache_budget(di, facs, &zero, 0).solve_lower_level(p)
}

pub fn objective(
    di: &DiscretizedInstance,
    facs: &[Facility],
    lost_cost: &PiecewiseLinear,
    p: &Placement,
) -> Result<Evaluation, Error> {
    Evaluator::with_cache_budget(di, facs, lost_cost, 0).objective(p)
}
