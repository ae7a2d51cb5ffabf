#![allow(dead_code)]

use dimfac::evaluate::{Evaluator, Facility, UtilityKind, UtilitySpec};
use dimfac::{
    DiscretizationInput, DiscretizedInstance, Expr, Grid, Norm, PiecewiseLinear, Placement, Point, Polygon,
    Shape,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub region: Polygon,
    pub nx: usize,
    pub ny: usize,
    pub facs: Vec<Facility>,
    pub lost: PiecewiseLinear,
    pub demand: Expr,
    pub install: Expr,
}

impl Fixture {
    pub fn build(&self) -> DiscretizedInstance {
        let shapes: Vec<Shape> = self.facs.iter().map(|f| f.shape.clone()).collect();
        DiscretizedInstance::build(DiscretizationInput {
            region: &self.region,
            grid: Grid::new(self.region.bbox(), self.nx, self.ny).unwrap(),
            shapes: &shapes,
            demand: &self.demand,
            install: &self.install,
            quadrature_order: 3,
            eps: 1e-9,
        })
        .unwrap()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rect_region(w: f64, h: f64) -> Polygon {
    Polygon::new(vec![Point::new(0.0, 0.0), Point::new(w, 0.0), Point::new(w, h), Point::new(0.0, h)]).unwrap()
}

pub fn unit_square() -> Polygon {
    rect_region(1.0, 1.0)
}

pub fn xy(text: &str) -> Expr {
    Expr::parse(text, &["x", "y"]).unwrap()
}

pub fn square(side: f64) -> Shape {
    rectangle(side, side)
}

pub fn rectangle(w: f64, h: f64) -> Shape {
    let (w, h) = (w / 2.0, h / 2.0);
    Shape::polygon(vec![Point::new(-w, -h), Point::new(w, -h), Point::new(w, h), Point::new(-w, h)]).unwrap()
}

/// Convex polygon inscribed in a circle of the given radius around the root.
pub fn random_convex(rng: &mut ChaCha8Rng, radius: f64) -> Shape {
    loop {
        let n = rng.gen_range(3..=6);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let gaps = angles.windows(2).map(|w| w[1] - w[0]).chain([angles[0] + std::f64::consts::TAU - angles[n - 1]]);
        if gaps.fold(0.0, f64::max) < 0.8 * std::f64::consts::PI {
            let vs = angles.iter().map(|t| Point::new(radius * t.cos(), radius * t.sin())).collect();
            if let Ok(s) = Shape::polygon(vs) {
                return s;
            }
        }
    }
}

/// Non-decreasing piecewise-linear function on `[0, top]`.
pub fn random_pl(rng: &mut ChaCha8Rng, top: f64, max_slope: f64) -> PiecewiseLinear {
    let n = rng.gen_range(2..=4);
    let mut omegas: Vec<f64> = (0..n - 2).map(|_| rng.gen_range(0.05..0.95) * top).collect();
    omegas.push(0.0);
    omegas.push(top);
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    let mut v = rng.gen_range(0.0..0.1);
    let mut bps = vec![(omegas[0], v)];
    for w in omegas.windows(2) {
        v += rng.gen_range(0.0..max_slope) * (w[1] - w[0]);
        bps.push((w[1], v));
    }
    PiecewiseLinear::new(bps).unwrap()
}

pub fn random_utility(rng: &mut ChaCha8Rng, ellipse: bool) -> UtilitySpec {
    let kind = match rng.gen_range(0..if ellipse { 5 } else { 6 }) {
        0 => UtilityKind::NormToRoot(Norm::L1),
        1 => UtilityKind::NormToRoot(Norm::L2),
        2 => UtilityKind::NormToRoot(Norm::LInf),
        3 => UtilityKind::Gauge { clamped: true },
        4 => UtilityKind::Gauge { clamped: false },
        _ => UtilityKind::MaxDistance(Norm::L2),
    };
    let scale = ["t", "t + t * t", "2 * t", "0.2 * t"].choose(rng).unwrap();
    UtilitySpec::new(kind, Expr::parse(scale, &["t"]).unwrap()).unwrap()
}

/// Random facility whose size is comparable to a cell of side `h`.
pub fn random_facility(rng: &mut ChaCha8Rng, h: f64) -> Facility {
    let ellipse = rng.gen_bool(0.15);
    let r = rng.gen_range(0.3..1.2) * h;
    let shape = if ellipse { Shape::ellipse(r, rng.gen_range(0.5..1.0) * r).unwrap() } else { random_convex(rng, r) };
    Facility::new(
        shape,
        rng.gen_range(0.01..0.3),
        random_utility(rng, ellipse),
        random_pl(rng, 0.3, 2.0),
        random_pl(rng, 1.0, 3.0),
    )
    .unwrap()
}

/// Random instance on `[0, w] x [0, h]` with an `nx x ny` grid.
pub fn random_fixture(rng: &mut ChaCha8Rng, nx: usize, ny: usize, rho: usize) -> Fixture {
    let w = rng.gen_range(0.8..1.5);
    let h = rng.gen_range(0.8..1.5);
    let cell = (w / nx as f64).min(h / ny as f64);
    Fixture {
        region: rect_region(w, h),
        nx,
        ny,
        facs: (0..rho).map(|_| random_facility(rng, cell)).collect(),
        lost: random_pl(rng, 1.0, 3.0),
        demand: xy(&format!("1 + {} * x + {} * y", rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0))),
        install: xy(&format!("0.5 + {} * y", rng.gen_range(0.0..1.0))),
    }
}

pub fn random_placement(di: &DiscretizedInstance, rng: &mut ChaCha8Rng, tries: usize) -> Option<Placement> {
    if (0..di.rho()).any(|i| di.feasible(i).is_empty()) {
        return None;
    }
    (0..tries).find_map(|_| {
        let p = Placement((0..di.rho()).map(|i| *di.feasible(i).choose(rng).unwrap()).collect());
        di.check_placement(&p).is_ok().then_some(p)
    })
}

pub fn evaluator<'a>(di: &'a DiscretizedInstance, fx: &'a Fixture) -> Evaluator<'a> {
    Evaluator::new(di, &fx.facs, &fx.lost)
}

pub fn linear_facility(shape: Shape, a: f64, kind: UtilityKind, install: PiecewiseLinear, congestion: PiecewiseLinear) -> Facility {
    Facility::new(shape, a, UtilitySpec::linear(kind), install, congestion).unwrap()
}

