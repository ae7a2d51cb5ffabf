//! GRASP heuristic: wavefront construction of suitable placements, greedy
//! best-improvement local search, and the list-based outer loop.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::costs::PiecewiseLinear;
use crate::evaluate::{Evaluation, Evaluator, Facility};
use crate::geometry::{l1_segment_distance, polygon_contains, PlacedShape, Point, Rect};
use crate::grid::{CellIndex, DiscretizedInstance, Placement};
use crate::Error;

/// Polygon resolution used for ellipses in separation distances.
pub const ELLIPSE_SEGMENTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GraspParams {
    /// Length of the solution list.
    pub psi: usize,
    /// Number of root points permuted per list visit.
    pub varpi: usize,
    /// Homothety step; `1 / lambda` must be an integer.
    pub lambda: f64,
    /// Separation step length.
    pub vartheta: f64,
    pub upsilon1: usize,
    pub upsilon2: usize,
    /// Relocation ball radius; `None` means `2 * max(hx, hy)`.
    pub epsilon_ball: Option<f64>,
    pub delta_k: usize,
    pub delta_l: usize,
    /// Cap on list visits; `None` means `10 * psi`.
    pub max_outer: Option<usize>,
    pub rng_seed: u64,
    /// Relocation restarts before a wavefront run gives up.
    pub max_restarts: usize,
    /// Fresh random root tuples tried per list slot.
    pub construction_attempts: usize,
}

impl Default for GraspParams {
    fn default() -> Self {
        GraspParams {
            psi: 50,
            varpi: 2,
            lambda: 0.05,
            vartheta: 0.05,
            upsilon1: 9,
            upsilon2: 3,
            epsilon_ball: None,
            delta_k: 5,
            delta_l: 5,
            max_outer: None,
            rng_seed: 0,
            max_restarts: 25,
            construction_attempts: 20,
        }
    }
}

impl GraspParams {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.psi < 2 {
            return bad(format!("psi must be at least 2, got {}", self.psi));
        }
        if self.varpi < 2 || self.varpi > self.psi {
            return bad(format!("varpi must lie in [2, psi={}], got {}", self.psi, self.varpi));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        let inv = 1.0 / self.lambda;
        if (inv - inv.round()).abs() > 1e-9 * inv {
            return bad(format!("1/lambda must be an integer, got {inv}"));
        }
        if !(self.vartheta > 0.0 && self.vartheta.is_finite()) {
            return bad(format!("vartheta must be positive, got {}", self.vartheta));
        }
        if self.upsilon1 == 0 || self.upsilon2 == 0 {
            return bad("upsilon1 and upsilon2 must be at least 1".into());
        }
        if let Some(e) = self.epsilon_ball {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("epsilon_ball must be positive, got {e}"));
            }
        }
        if self.delta_k == 0 || self.delta_l == 0 {
            return bad("delta_k and delta_l must be at least 1".into());
        }
        if self.max_outer == Some(0) {
            return bad("max_outer must be at least 1".into());
        }
        if self.max_restarts == 0 || self.construction_attempts == 0 {
            return bad("max_restarts and construction_attempts must be at least 1".into());
        }
        Ok(())
    }

    fn growth_steps(&self) -> usize {
        (1.0 / self.lambda).round() as usize
    }

    fn max_outer(&self) -> usize {
        self.max_outer.unwrap_or(10 * self.psi)
    }

    fn epsilon(&self, di: &DiscretizedInstance) -> f64 {
        self.epsilon_ball.unwrap_or_else(|| 2.0 * di.grid().hx().max(di.grid().hy()))
    }
}

/// The closed union of the feasible placement cells of one facility.
pub struct FeasibleRegion<'a> {
    di: &'a DiscretizedInstance,
    facility: usize,
    rects: Vec<Rect>,
}

impl<'a> FeasibleRegion<'a> {
    pub fn new(di: &'a DiscretizedInstance, facility: usize) -> FeasibleRegion<'a> {
        let rects = di.feasible(facility).iter().map(|c| di.grid().cell_rect(*c)).collect();
        FeasibleRegion { di, facility, rects }
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    /// Membership through the containing half-open cell.
    pub fn contains(&self, q: Point) -> bool {
        self.di.grid().cell_of_point(q).is_some_and(|c| self.di.is_feasible(self.facility, c))
    }

    /// Nearest point in l1, with the cell it was clamped to; ties go to the
    /// first cell in row-major order.
    pub fn project(&self, q: Point) -> (Point, CellIndex) {
        let mut best = (f64::INFINITY, q, CellIndex::new(0, 0));
        for (r, c) in self.rects.iter().zip(self.di.feasible(self.facility)) {
            let p = r.clamp(q);
            let d = (p - q).l1();
            if d < best.0 {
                best = (d, p, *c);
            }
        }
        (best.1, best.2)
    }

    /// `q` itself when inside, else its projection.
    pub fn restrict(&self, q: Point) -> Point {
        if self.contains(q) {
            q
        } else {
            self.project(q).0
        }
    }

    /// Feasible cell whose closed rectangle holds `q`.
    pub fn snap(&self, q: Point) -> CellIndex {
        match self.di.grid().cell_of_point(q) {
            Some(c) if self.di.is_feasible(self.facility, c) => c,
            _ => self.project(q).1,
        }
    }

    /// Uniform point by rejection from the bounding box, falling back to a
    /// uniformly chosen feasible cell centre.
    pub fn random_point(&self, rng: &mut ChaCha8Rng) -> Point {
        let b = self.di.grid().bbox();
        for _ in 0..10_000 {
            let q = Point::new(rng.gen_range(b.x_lo..b.x_hi), rng.gen_range(b.y_lo..b.y_hi));
            if self.contains(q) {
                return q;
            }
        }
        let cells = self.di.feasible(self.facility);
        self.di.center(cells[rng.gen_range(0..cells.len())])
    }
}

fn outline_l1_distance(a: &[Point], b: &[Point]) -> f64 {
    if polygon_contains(b, a[0], 0.0) || polygon_contains(a, b[0], 0.0) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        let (a0, a1) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            let d = l1_segment_distance(a0, a1, b[j], b[(j + 1) % b.len()]);
            if d < best {
                best = d;
                if best == 0.0 {
                    return 0.0;
                }
            }
        }
    }
    best
}

/// Minimum l1 distance between points of two placed shapes; zero when they
/// overlap. Ellipses use an inscribed polygon.
pub fn min_l1_shape_distance(p: &PlacedShape<'_>, q: &PlacedShape<'_>) -> f64 {
    outline_l1_distance(&p.world_outline(ELLIPSE_SEGMENTS), &q.world_outline(ELLIPSE_SEGMENTS))
}

fn bbox_l1_gap(a: &Rect, b: &Rect) -> f64 {
    let gx = (b.x_lo - a.x_hi).max(a.x_lo - b.x_hi).max(0.0);
    let gy = (b.y_lo - a.y_hi).max(a.y_lo - b.y_hi).max(0.0);
    gx + gy
}

fn min_dist(q: Point, others: &[Point]) -> f64 {
    others.iter().map(|o| (q - *o).l2()).fold(f64::INFINITY, f64::min)
}

/// Pattern search for a local maximizer of the smallest Euclidean distance
/// to `others` over the feasible region, starting from `start`.
pub fn local_maximin(region: &FeasibleRegion<'_>, others: &[Point], start: Point, initial_step: f64, halvings: usize) -> Point {
    let mut q = region.restrict(start);
    let mut value = min_dist(q, others);
    let mut step = initial_step;
    for _ in 0..=halvings {
        for _ in 0..10_000 {
            let mut best: Option<(Point, f64)> = None;
            for d in [Point::new(step, 0.0), Point::new(-step, 0.0), Point::new(0.0, step), Point::new(0.0, -step)] {
                let t = region.restrict(q + d);
                let v = min_dist(t, others);
                if v > best.map_or(value, |b| b.1) {
                    best = Some((t, v));
                }
            }
            match best {
                Some((t, v)) => {
                    q = t;
                    value = v;
                }
                None => break,
            }
        }
        step /= 2.0;
    }
    q
}

/// Uniform point of the l1 ball of radius `eps` about `centre`.
fn sample_l1_ball(centre: Point, eps: f64, rng: &mut ChaCha8Rng) -> Point {
    // the map (a, b) -> ((a + b) / 2, (a - b) / 2) sends the square onto the ball
    let a: f64 = rng.gen_range(-1.0..=1.0);
    let b: f64 = rng.gen_range(-1.0..=1.0);
    centre + Point::new((a + b) / 2.0 * eps, (a - b) / 2.0 * eps)
}

/// Relocation of facility `i`'s root away from `others`: a local maximin
/// point, perturbed within the l1 ball of radius epsilon and kept feasible.
pub fn local_maximin_relocate(
    di: &DiscretizedInstance,
    i: usize,
    others: &[Point],
    start: Point,
    params: &GraspParams,
    rng: &mut ChaCha8Rng,
) -> Point {
    let region = FeasibleRegion::new(di, i);
    relocate(&region, others, start, params.epsilon(di), rng)
}

fn relocate(region: &FeasibleRegion<'_>, others: &[Point], start: Point, eps: f64, rng: &mut ChaCha8Rng) -> Point {
    let g = region.di.grid();
    let q_star = local_maximin(region, others, start, 4.0 * g.hx().max(g.hy()), 6);
    for _ in 0..64 {
        let q = sample_l1_ball(q_star, eps, rng);
        if region.contains(q) {
            return q;
        }
    }
    region.project(q_star).0
}

fn random_unit(rng: &mut ChaCha8Rng) -> Point {
    let t = rng.gen_range(0.0..std::f64::consts::TAU);
    Point::new(t.cos(), t.sin())
}

struct Wave<'a> {
    di: &'a DiscretizedInstance,
    outlines: Vec<Vec<Point>>,
    local_bbox: Vec<Rect>,
    regions: Vec<FeasibleRegion<'a>>,
    threshold: f64,
}

impl<'a> Wave<'a> {
    fn new(di: &'a DiscretizedInstance, facs: &[Facility]) -> Wave<'a> {
        let g = di.grid();
        Wave {
            di,
            outlines: facs.iter().map(|f| f.shape.outline(ELLIPSE_SEGMENTS)).collect(),
            local_bbox: facs.iter().map(|f| f.shape.bbox()).collect(),
            regions: (0..facs.len()).map(|i| FeasibleRegion::new(di, i)).collect(),
            threshold: 3.0 * (g.hx() + g.hy()),
        }
    }

    fn separated(&self, roots: &[Point], scale: f64, i: usize, j: usize) -> bool {
        let place = |k: usize| {
            let b = &self.local_bbox[k];
            let r = roots[k];
            Rect { x_lo: r.x + scale * b.x_lo, x_hi: r.x + scale * b.x_hi, y_lo: r.y + scale * b.y_lo, y_hi: r.y + scale * b.y_hi }
        };
        if bbox_l1_gap(&place(i), &place(j)) >= self.threshold {
            return true;
        }
        let world = |k: usize| -> Vec<Point> { self.outlines[k].iter().map(|v| roots[k] + *v * scale).collect() };
        outline_l1_distance(&world(i), &world(j)) >= self.threshold
    }

    fn violations(&self, roots: &[Point], scale: f64) -> Vec<(usize, usize)> {
        let rho = roots.len();
        let mut out = Vec::new();
        for i in 0..rho {
            for j in i + 1..rho {
                if !self.separated(roots, scale, i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Unit push directions for every root, from the violating pairs.
    fn directions(&self, roots: &[Point], violating: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Vec<Option<Point>> {
        let mut sum = vec![Point::ORIGIN; roots.len()];
        for &(i, j) in violating {
            let d = roots[j] - roots[i];
            let n = d.l2();
            let u = if n > 0.0 { d * (1.0 / n) } else { random_unit(rng) };
            // u moves j away from i, -u moves i away from j
            sum[j] = sum[j] + u;
            sum[i] = sum[i] - u;
        }
        sum.into_iter()
            .map(|s| {
                let n = s.l2();
                (n > 1e-12).then(|| s * (1.0 / n))
            })
            .collect()
    }

    fn run(&self, mut roots: Vec<Point>, params: &GraspParams, rng: &mut ChaCha8Rng) -> Result<Placement, Error> {
        let rho = roots.len();
        for (i, r) in roots.iter_mut().enumerate() {
            *r = self.regions[i].restrict(*r);
        }
        let steps = params.growth_steps();
        let eps_ball = params.epsilon(self.di);
        let mut order: Vec<usize> = (0..rho).collect();
        let mut restarts = 0;
        loop {
            // STEP 1
            let mut step = 1usize;
            let outcome = 'grow: loop {
                // STEP 2
                let scale = step as f64 / steps as f64;
                let mut violating = self.violations(&roots, scale);
                if violating.is_empty() {
                    if step == steps {
                        break 'grow None;
                    }
                    step += 1;
                    continue;
                }
                let mut c1 = 0usize;
                loop {
                    // STEP 3
                    let dirs = self.directions(&roots, &violating, rng);
                    let mut c2 = 0usize;
                    loop {
                        // STEP 4
                        for i in 0..rho {
                            if let Some(d) = dirs[i] {
                                let moved = roots[i] + d * params.vartheta;
                                if self.regions[i].contains(moved) {
                                    roots[i] = moved;
                                }
                            }
                        }
                        c1 += 1;
                        violating = self.violations(&roots, scale);
                        if !violating.is_empty() {
                            if c1 >= params.upsilon1 {
                                break 'grow Some(violating);
                            }
                            break;
                        }
                        c2 += 1;
                        if c2 >= params.upsilon2 {
                            continue 'grow;
                        }
                    }
                }
            };
            let violating = match outcome {
                None => {
                    // STEPS 6-7: roots are stored in input order already
                    let cells: Vec<CellIndex> = (0..rho).map(|i| self.regions[i].snap(roots[i])).collect();
                    let p = Placement(cells);
                    match self.di.check_placement(&p) {
                        Ok(()) => return Ok(p),
                        Err(crate::grid::Unsuitable::Overlap { i, j, .. }) => vec![(i.min(j), i.max(j))],
                        Err(e) => return Err(e.into()),
                    }
                }
                Some(v) => v,
            };
            restarts += 1;
            if restarts > params.max_restarts {
                return Err(Error::ConstructionFailed { restarts: params.max_restarts });
            }
            // STEP 5, in the current processing order
            let position: Vec<usize> = {
                let mut pos = vec![0; rho];
                for (k, &i) in order.iter().enumerate() {
                    pos[i] = k;
                }
                pos
            };
            let mut targets: Vec<Option<Point>> = vec![None; rho];
            for (k, &i) in order.iter().enumerate().take(rho.saturating_sub(1)) {
                let t: Vec<Point> = violating
                    .iter()
                    .filter_map(|&(a, b)| {
                        if a == i && position[b] > k {
                            Some(roots[b])
                        } else if b == i && position[a] > k {
                            Some(roots[a])
                        } else {
                            None
                        }
                    })
                    .collect();
                if !t.is_empty() {
                    let start = self.regions[i].random_point(rng);
                    targets[i] = Some(relocate(&self.regions[i], &t, start, eps_ball, rng));
                }
            }
            for (i, t) in targets.into_iter().enumerate() {
                if let Some(q) = t {
                    roots[i] = q;
                }
            }
            order.shuffle(rng);
        }
    }
}

/// Builds a suitable placement from initial root points by growing shrunken
/// copies of the facilities and pushing apart pairs that come too close.
pub fn wavefront_construct(
    di: &DiscretizedInstance,
    facs: &[Facility],
    roots: &[Point],
    params: &GraspParams,
    rng: &mut ChaCha8Rng,
) -> Result<Placement, Error> {
    if roots.len() != facs.len() || facs.len() != di.rho() {
        return Err(Error::InvalidParams(format!("expected {} root points, got {}", di.rho(), roots.len())));
    }
    if (0..di.rho()).any(|i| di.feasible(i).is_empty()) {
        return Err(Error::Infeasible);
    }
    Wave::new(di, facs).run(roots.to_vec(), params, rng)
}

/// Best-improvement local search over moves of one facility within the
/// `(2 delta_k + 1) x (2 delta_l + 1)` window of its cell.
pub fn greedy_improve(ev: &Evaluator<'_>, p: &Placement, params: &GraspParams) -> Result<(Placement, Evaluation), Error> {
    let di = ev.instance();
    let mut current = p.clone();
    let mut eval = ev.objective(&current)?;
    let rho = current.len();
    let (dk, dl) = (params.delta_k as i64, params.delta_l as i64);
    loop {
        let mut candidates: Vec<(usize, i64, i64, CellIndex)> = Vec::new();
        for i in 0..rho {
            let mut owner = vec![usize::MAX; di.n_cells()];
            for (j, at) in current.cells().iter().enumerate() {
                if j != i {
                    for pos in di.footprint_positions(j, *at) {
                        owner[pos] = j;
                    }
                }
            }
            for jk in -dk..=dk {
                for jl in -dl..=dl {
                    if jk == 0 && jl == 0 {
                        continue;
                    }
                    let Some(c) = current.cells()[i].offset(jk, jl) else { continue };
                    if !di.is_feasible(i, c) || di.footprint_positions(i, c).any(|pos| owner[pos] != usize::MAX) {
                        continue;
                    }
                    candidates.push((i, jk, jl, c));
                }
            }
        }
        let scored = candidates
            .par_iter()
            .map(|&(i, _, _, c)| {
                let mut q = current.clone();
                q.0[i] = c;
                ev.objective_unchecked(&q).map(|e| (q, e))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        // candidates are generated in (i, jk, jl) order; keep the first best
        let mut best: Option<(Placement, Evaluation)> = None;
        for (q, e) in scored {
            let bar = best.as_ref().map_or(eval.total, |b| b.1.total);
            if e.total < bar {
                best = Some((q, e));
            }
        }
        match best {
            Some((q, e)) => {
                current = q;
                eval = e;
            }
            None => return Ok((current, eval)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspStats {
    /// Best total after the construction phase.
    pub initial_best: f64,
    /// List visits performed in the improvement phase.
    pub visits: usize,
    /// List replacements.
    pub improvements: usize,
    /// Wavefront runs that hit the restart cap.
    pub failed_constructions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspOutcome {
    pub placement: Placement,
    pub evaluation: Evaluation,
    /// Final solution list, best first.
    pub list: Vec<(Placement, f64)>,
    pub stats: GraspStats,
}

fn sort_list(list: &mut [(Placement, Evaluation)]) {
    list.sort_by(|a, b| a.1.total.total_cmp(&b.1.total).then_with(|| a.0.cmp(&b.0)));
}

/// Permutes exactly `min(varpi, rho)` entries of `points` by a
/// non-identity permutation.
fn permute_some(points: &mut [Point], varpi: usize, rng: &mut ChaCha8Rng) {
    let m = varpi.min(points.len());
    if m < 2 {
        return;
    }
    let chosen = index::sample(rng, points.len(), m).into_vec();
    let mut perm: Vec<usize> = (0..m).collect();
    while perm.iter().enumerate().all(|(a, b)| a == *b) {
        perm.shuffle(rng);
    }
    let original: Vec<Point> = chosen.iter().map(|&k| points[k]).collect();
    for (slot, &k) in chosen.iter().enumerate() {
        points[k] = original[perm[slot]];
    }
}

fn construct(
    ev: &Evaluator<'_>,
    wave: &Wave<'_>,
    roots: Vec<Point>,
    params: &GraspParams,
    rng: &mut ChaCha8Rng,
) -> Result<(Placement, Evaluation), Error> {
    let p = wave.run(roots, params, rng)?;
    greedy_improve(ev, &p, params)
}

/// Runs the GRASP heuristic and returns the best placement found.
pub fn grasp_solve(
    di: &DiscretizedInstance,
    facs: &[Facility],
    lost_cost: &PiecewiseLinear,
    params: &GraspParams,
) -> Result<GraspOutcome, Error> {
    let ev = Evaluator::new(di, facs, lost_cost);
    grasp_solve_with(&ev, params)
}

pub fn grasp_solve_with(ev: &Evaluator<'_>, params: &GraspParams) -> Result<GraspOutcome, Error> {
    params.validate()?;
    let di = ev.instance();
    let facs = ev.facilities();
    if (0..di.rho()).any(|i| di.feasible(i).is_empty()) {
        return Err(Error::Infeasible);
    }
    let wave = Wave::new(di, facs);

    // STEP 1: one independent random stream per list slot
    let slots = (0..params.psi)
        .into_par_iter()
        .map(|j| -> Result<Option<(Placement, Evaluation)>, Error> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
            rng.set_stream(j as u64 + 1);
            for _ in 0..params.construction_attempts {
                let roots: Vec<Point> = wave.regions.iter().map(|r| r.random_point(&mut rng)).collect();
                match construct(ev, &wave, roots, params, &mut rng) {
                    Ok(sol) => return Ok(Some(sol)),
                    Err(Error::ConstructionFailed { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut list: Vec<(Placement, Evaluation)> = slots.into_iter().flatten().collect();
    if list.is_empty() {
        return Err(Error::NoSuitablePlacement { attempts: params.psi * params.construction_attempts });
    }
    sort_list(&mut list);
    let initial_best = list[0].1.total;

    // STEP 2
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut visits = 0;
    let mut improvements = 0;
    let mut failed = 0;
    'passes: loop {
        let mut improved = false;
        for j in 0..list.len() {
            let mut roots: Vec<Point> = list[j].0.cells().iter().map(|c| di.center(*c)).collect();
            permute_some(&mut roots, params.varpi, &mut rng);
            for (i, r) in roots.iter_mut().enumerate() {
                *r = wave.regions[i].restrict(*r);
            }
            match construct(ev, &wave, roots, params, &mut rng) {
                Ok((q, e)) => {
                    let worst = list.len() - 1;
                    if e.total < list[worst].1.total {
                        list[worst] = (q, e);
                        sort_list(&mut list);
                        improved = true;
                        improvements += 1;
                    }
                }
                Err(Error::ConstructionFailed { .. }) => failed += 1,
                Err(e) => return Err(e),
            }
            visits += 1;
            if visits >= params.max_outer() {
                break 'passes;
            }
        }
        if !improved {
            break;
        }
    }
    let (placement, evaluation) = list[0].clone();
    Ok(GraspOutcome {
        placement,
        evaluation,
        list: list.iter().map(|(p, e)| (p.clone(), e.total)).collect(),
        stats: GraspStats { initial_best, visits, improvements, failed_constructions: failed },
    })
}
