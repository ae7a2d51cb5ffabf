//! Piecewise-linear cost functions for installation, congestion and lost
//! demand.

use thiserror::Error;

use crate::expr::{Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("a piecewise-linear function needs at least 2 breakpoints, got {0}")]
    TooFewBreakpoints(usize),
    #[error("breakpoint abscissae must be finite and strictly increasing (at index {0})")]
    NotIncreasing(usize),
    #[error("cost decreases on [{lo}, {hi}] ({from} -> {to})")]
    Decreasing { lo: f64, hi: f64, from: f64, to: f64 },
    #[error("cost value {value} at omega={omega} is negative or not finite")]
    Negative { omega: f64, value: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Continuous, non-decreasing, non-negative piecewise-linear function given
/// by its breakpoints. Evaluation clamps outside the breakpoint range.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    breakpoints: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<PiecewiseLinear, CostError> {
        if breakpoints.len() < 2 {
            return Err(CostError::TooFewBreakpoints(breakpoints.len()));
        }
        for (i, &(omega, value)) in breakpoints.iter().enumerate() {
            if !omega.is_finite() || (i > 0 && omega <= breakpoints[i - 1].0) {
                return Err(CostError::NotIncreasing(i));
            }
            if !value.is_finite() || value < 0.0 {
                return Err(CostError::Negative { omega, value });
            }
        }
        for w in breakpoints.windows(2) {
            if w[1].1 < w[0].1 {
                return Err(CostError::Decreasing { lo: w[0].0, hi: w[1].0, from: w[0].1, to: w[1].1 });
            }
        }
        Ok(PiecewiseLinear { breakpoints })
    }

    /// The identity on `[0, 1]`.
    pub fn identity() -> PiecewiseLinear {
        PiecewiseLinear { breakpoints: vec![(0.0, 0.0), (1.0, 1.0)] }
    }

    /// Constant function (e.g. a fixed set-up cost).
    pub fn constant(value: f64) -> Result<PiecewiseLinear, CostError> {
        PiecewiseLinear::new(vec![(0.0, value), (1.0, value)])
    }

    pub fn zero() -> PiecewiseLinear {
        PiecewiseLinear { breakpoints: vec![(0.0, 0.0), (1.0, 0.0)] }
    }

    /// Samples a cost expression in `t` at the given abscissae.
    pub fn from_expr(f: &Expr, omegas: &[f64]) -> Result<PiecewiseLinear, CostError> {
        if omegas.len() < 2 {
            return Err(CostError::TooFewBreakpoints(omegas.len()));
        }
        let bps = omegas
            .iter()
            .map(|&w| f.eval(&[w]).map(|v| (w, v)))
            .collect::<Result<Vec<_>, _>>()?;
        PiecewiseLinear::new(bps)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn eval(&self, omega: f64) -> f64 {
        let bps = &self.breakpoints;
        let (first, last) = (bps[0], bps[bps.len() - 1]);
        if omega <= first.0 {
            return first.1;
        }
        if omega >= last.0 {
            return last.1;
        }
        // first index with abscissa > omega; 1..len-1 here
        let hi = bps.partition_point(|&(w, _)| w <= omega);
        let (w0, v0) = bps[hi - 1];
        if w0 == omega {
            return v0;
        }
        let (w1, v1) = bps[hi];
        v0 + (v1 - v0) * (omega - w0) / (w1 - w0)
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect()
    }

    /// True when every segment has (numerically) the same slope.
    pub fn is_affine(&self) -> bool {
        let s = self.slopes();
        s.iter().all(|v| (v - s[0]).abs() <= 1e-12 * (1.0 + s[0].abs()))
    }

    /// True when slopes never decrease.
    pub fn is_convex(&self) -> bool {
        self.slopes().windows(2).all(|w| w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()))
    }
}

pub fn pl_eval(f: &PiecewiseLinear, omega: f64) -> f64 {
    f.eval(omega)
}
