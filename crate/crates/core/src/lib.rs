//! Location of dimensional facilities on a discretized demand region.
//!
//! A planar region is covered by a uniform grid; shaped facilities are
//! placed at cell centres, demand cells are allocated to the facility with
//! the cheapest access-plus-utility cost, and the placement is scored by
//! installation, congestion and lost-demand costs. Placements are searched
//! with a GRASP heuristic ([`grasp`]) or exhaustively ([`exact`]), and the
//! mixed-integer model can be exported in LP format.

pub mod costs;
pub mod evaluate;
pub mod exact;
pub mod expr;
pub mod geometry;
pub mod grasp;
pub mod grid;

use thiserror::Error;

pub use costs::{pl_eval, CostError, PiecewiseLinear};
pub use evaluate::{objective, solve_lower_level, unit_utility, Allocation, CellStatus, Evaluation, Facility, UtilityKind, UtilitySpec};
pub use expr::{Expr, ExprError};
pub use geometry::{GeometryError, Norm, Point, Polygon, Rect, Shape};
pub use grid::{CellIndex, DiscretizationInput, DiscretizedInstance, Grid, Placement, Unsuitable};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("density at cell ({k},{l}): {source}")]
    Density { k: usize, l: usize, source: ExprError },
    #[error("cell ({k},{l}) has weight {value}; weights must be finite and non-negative")]
    NegativeWeight { k: usize, l: usize, value: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no grid cell meets the region")]
    EmptyRegion,
    #[error("facility {facility}: {source}")]
    Utility { facility: usize, source: ExprError },
    #[error("unsuitable placement: {0}")]
    Unsuitable(#[from] Unsuitable),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("wavefront construction failed after {restarts} restarts")]
    ConstructionFailed { restarts: usize },
    #[error("no suitable placement found after {attempts} attempts")]
    NoSuitablePlacement { attempts: usize },
    #[error("search space has {product} placement tuples, above the limit of {limit}")]
    SizeLimit { product: f64, limit: u64 },
    #[error("no suitable placement exists")]
    Infeasible,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("LP parse error at line {line}: {message}")]
    LpParse { line: usize, message: String },
}
