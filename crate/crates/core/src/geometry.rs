//! Planar primitives: points, norms, shapes and the containment, overlap and
//! distance tests needed to place shaped facilities on a grid.
//!
//! A [`Shape`] lives in its own local frame with the facility's root point at
//! the local origin. Placing a shape means choosing a world position for that
//! origin and, during construction heuristics, a homothety ratio.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid ellipse: semi-axes must be finite and positive (a={a}, b={b})")]
    InvalidEllipse { a: f64, b: f64 },
    #[error("invalid norm: weights must be finite and positive")]
    InvalidNorm,
    #[error("gauge undefined: the root point is not interior to the shape")]
    DegenerateGauge,
    #[error("operation `{0}` requires a polygon shape")]
    UnsupportedShape(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn l1(self) -> f64 {
        self.x.abs() + self.y.abs()
    }

    pub fn l2(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    L1,
    L2,
    LInf,
    /// `sqrt(wx*dx^2 + wy*dy^2)`
    WeightedL2 { wx: f64, wy: f64 },
}

impl Norm {
    pub fn weighted_l2(wx: f64, wy: f64) -> Result<Norm, GeometryError> {
        if wx.is_finite() && wy.is_finite() && wx > 0.0 && wy > 0.0 {
            Ok(Norm::WeightedL2 { wx, wy })
        } else {
            Err(GeometryError::InvalidNorm)
        }
    }

    pub fn length(&self, v: Point) -> f64 {
        match *self {
            Norm::L1 => v.l1(),
            Norm::L2 => v.l2(),
            Norm::LInf => v.x.abs().max(v.y.abs()),
            Norm::WeightedL2 { wx, wy } => (wx * v.x * v.x + wy * v.y * v.y).sqrt(),
        }
    }
}

pub fn norm_distance(a: Point, b: Point, n: &Norm) -> f64 {
    n.length(a - b)
}

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Option<Rect> {
        let ok = [x_lo, x_hi, y_lo, y_hi].iter().all(|v| v.is_finite()) && x_lo < x_hi && y_lo < y_hi;
        ok.then_some(Rect { x_lo, x_hi, y_lo, y_hi })
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn height(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn center(&self) -> Point {
        Point::new((self.x_lo + self.x_hi) / 2.0, (self.y_lo + self.y_hi) / 2.0)
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(self.x_lo, self.x_hi), p.y.clamp(self.y_lo, self.y_hi))
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_lo && p.x <= self.x_hi && p.y >= self.y_lo && p.y <= self.y_hi
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_lo, self.y_lo),
            Point::new(self.x_hi, self.y_lo),
            Point::new(self.x_hi, self.y_hi),
            Point::new(self.x_lo, self.y_hi),
        ]
    }

    pub fn bounding(points: impl IntoIterator<Item = Point>) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (first.x, first.x, first.y, first.y);
        for p in it {
            x_lo = x_lo.min(p.x);
            x_hi = x_hi.max(p.x);
            y_lo = y_lo.min(p.y);
            y_hi = y_hi.max(p.y);
        }
        Some(Rect { x_lo, x_hi, y_lo, y_hi })
    }
}

/// Simple polygon with counter-clockwise vertex order and positive area.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Validates simplicity and orientation; clockwise input is reversed.
    pub fn new(mut vertices: Vec<Point>) -> Result<Polygon, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidPolygon(format!("needs at least 3 vertices, got {}", vertices.len())));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::InvalidPolygon(format!("vertex {i} is not finite")));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(GeometryError::InvalidPolygon(format!("repeated vertex at index {i}")));
            }
        }
        let area = signed_area(&vertices);
        let scale = Rect::bounding(vertices.iter().copied())
            .map(|r| r.width().max(r.height()))
            .unwrap_or(0.0);
        if !(area.abs() > 1e-14 * scale * scale) {
            return Err(GeometryError::InvalidPolygon("zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        // non-adjacent edges must not touch; adjacent edges must not fold back
        for i in 0..n {
            let (a0, a1) = (vertices[i], vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                let (b0, b1) = (vertices[j], vertices[(j + 1) % n]);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    let (p, q, r) = if j == i + 1 { (a0, a1, b1) } else { (b0, a0, a1) };
                    let u = q - p;
                    let v = r - q;
                    if u.cross(v).abs() <= 1e-14 * u.l2() * v.l2() && u.dot(v) < 0.0 {
                        return Err(GeometryError::InvalidPolygon(format!("edges {i} and {j} overlap")));
                    }
                } else if segments_touch(a0, a1, b0, b1) {
                    return Err(GeometryError::InvalidPolygon(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(Polygon { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bbox(&self) -> Rect {
        Rect::bounding(self.vertices.iter().copied()).expect("polygon has vertices")
    }

    /// Closed containment with boundary tolerance `eps`.
    pub fn contains(&self, q: Point, eps: f64) -> bool {
        polygon_contains(&self.vertices, q, eps)
    }
}

fn signed_area(vs: &[Point]) -> f64 {
    let n = vs.len();
    (0..n).map(|i| vs[i].cross(vs[(i + 1) % n])).sum::<f64>() / 2.0
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// True when closed segments `ab` and `cd` share at least one point.
pub fn segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Euclidean distance from `p` to the closed segment `ab`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 == 0.0 { 0.0 } else { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) };
    (p - (a + ab * t)).l2()
}

/// Closed point-in-polygon test on a vertex ring, boundary inflated by `eps`.
pub fn polygon_contains(vs: &[Point], q: Point, eps: f64) -> bool {
    let n = vs.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (vs[i], vs[(i + 1) % n]);
        if point_segment_distance(q, a, b) <= eps {
            return true;
        }
        if (a.y > q.y) != (b.y > q.y) {
            let x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if q.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Area of the part of polygon `vs` inside the rectangle (Sutherland-Hodgman
/// clipping; correct for non-convex subjects since the clip window is convex).
pub fn clipped_area(vs: &[Point], r: &Rect) -> f64 {
    let mut poly: Vec<Point> = vs.to_vec();
    // (inside test, intersection) for each of the four half-planes
    let planes: [(u8, f64); 4] = [(0, r.x_lo), (1, r.x_hi), (2, r.y_lo), (3, r.y_hi)];
    for (side, c) in planes {
        if poly.is_empty() {
            return 0.0;
        }
        let inside = |p: &Point| match side {
            0 => p.x >= c,
            1 => p.x <= c,
            2 => p.y >= c,
            _ => p.y <= c,
        };
        let cut = |a: Point, b: Point| -> Point {
            if side < 2 {
                let t = (c - a.x) / (b.x - a.x);
                Point::new(c, a.y + t * (b.y - a.y))
            } else {
                let t = (c - a.y) / (b.y - a.y);
                Point::new(a.x + t * (b.x - a.x), c)
            }
        };
        let mut out = Vec::with_capacity(poly.len() + 4);
        let n = poly.len();
        for i in 0..n {
            let cur = poly[i];
            let prev = poly[(i + n - 1) % n];
            match (inside(&prev), inside(&cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cut(prev, cur)),
                (false, true) => {
                    out.push(cut(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
        poly = out;
    }
    if poly.len() < 3 {
        0.0
    } else {
        signed_area(&poly).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Polygon(Polygon),
    /// Axis-aligned ellipse centred on the root: `(x/a)^2 + (y/b)^2 <= 1`.
    Ellipse { a: f64, b: f64 },
}

impl Shape {
    /// A polygonal facility; the local origin (root point) must lie in the
    /// closed polygon.
    pub fn polygon(vertices: Vec<Point>) -> Result<Shape, GeometryError> {
        let poly = Polygon::new(vertices)?;
        let scale = poly.bbox().width().max(poly.bbox().height());
        if !poly.contains(Point::ORIGIN, 1e-12 * scale) {
            return Err(GeometryError::InvalidPolygon("root point (local origin) lies outside the polygon".into()));
        }
        Ok(Shape::Polygon(poly))
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Shape, GeometryError> {
        if a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0 {
            Ok(Shape::Ellipse { a, b })
        } else {
            Err(GeometryError::InvalidEllipse { a, b })
        }
    }

    /// Regular `n`-gon of circumradius `radius` centred on the root, first
    /// vertex at angle `phase` (radians).
    pub fn regular_polygon(n: usize, radius: f64, phase: f64) -> Result<Shape, GeometryError> {
        if n < 3 || !(radius > 0.0) {
            return Err(GeometryError::InvalidPolygon("regular polygon needs n >= 3 and radius > 0".into()));
        }
        let vs = (0..n)
            .map(|k| {
                let t = phase + 2.0 * PI * k as f64 / n as f64;
                Point::new(radius * t.cos(), radius * t.sin())
            })
            .collect();
        Shape::polygon(vs)
    }

    pub fn translate(&self, root_at: Point) -> PlacedShape<'_> {
        PlacedShape { shape: self, root: root_at, scale: 1.0 }
    }

    /// Homothety of centre `root_at` and ratio `scale` applied to the placed shape.
    pub fn homothety(&self, root_at: Point, scale: f64) -> PlacedShape<'_> {
        PlacedShape { shape: self, root: root_at, scale }
    }

    /// Local-frame bounding box.
    pub fn bbox(&self) -> Rect {
        match self {
            Shape::Polygon(p) => p.bbox(),
            Shape::Ellipse { a, b } => Rect { x_lo: -a, x_hi: *a, y_lo: -b, y_hi: *b },
        }
    }

    /// Boundary vertices in the local frame; ellipses are approximated by an
    /// inscribed `segments`-gon.
    pub fn outline(&self, segments: usize) -> Vec<Point> {
        match self {
            Shape::Polygon(p) => p.vertices().to_vec(),
            Shape::Ellipse { a, b } => (0..segments)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / segments as f64;
                    Point::new(a * t.cos(), b * t.sin())
                })
                .collect(),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape::Polygon(p) => p.area(),
            Shape::Ellipse { a, b } => PI * a * b,
        }
    }
}

/// Minkowski gauge of `v` with respect to the shape's local copy:
/// `inf { lambda > 0 : v in lambda * S }`.
///
/// Meaningful for convex shapes. For polygons the value is the maximum over
/// edges of `(n_e . v) / (n_e . p_e)` with outward normals `n_e`, which
/// requires the origin to be strictly inside every edge's half-plane.
pub fn gauge_value(s: &Shape, v: Point) -> Result<f64, GeometryError> {
    match s {
        Shape::Ellipse { a, b } => Ok(((v.x / a).powi(2) + (v.y / b).powi(2)).sqrt()),
        Shape::Polygon(p) => {
            let scale = p.bbox().width().max(p.bbox().height());
            let mut g = 0.0f64;
            for (a, b) in p.edges() {
                let e = b - a;
                let n = Point::new(e.y, -e.x);
                let offset = n.dot(a);
                if !(offset > 1e-12 * scale * e.l2()) {
                    return Err(GeometryError::DegenerateGauge);
                }
                g = g.max(n.dot(v) / offset);
            }
            Ok(g)
        }
    }
}

/// A shape positioned in the world: `world = root + scale * local`.
#[derive(Debug, Clone, Copy)]
pub struct PlacedShape<'a> {
    pub shape: &'a Shape,
    pub root: Point,
    pub scale: f64,
}

impl<'a> PlacedShape<'a> {
    pub fn translate(&self, by: Point) -> PlacedShape<'a> {
        PlacedShape { root: self.root + by, ..*self }
    }

    pub fn to_world(&self, local: Point) -> Point {
        self.root + local * self.scale
    }

    pub fn to_local(&self, world: Point) -> Point {
        (world - self.root) * (1.0 / self.scale)
    }

    pub fn bbox(&self) -> Rect {
        let b = self.shape.bbox();
        Rect {
            x_lo: self.root.x + self.scale * b.x_lo,
            x_hi: self.root.x + self.scale * b.x_hi,
            y_lo: self.root.y + self.scale * b.y_lo,
            y_hi: self.root.y + self.scale * b.y_hi,
        }
    }

    /// World-frame vertices (polygonal approximation for ellipses).
    pub fn world_outline(&self, segments: usize) -> Vec<Point> {
        self.shape.outline(segments).into_iter().map(|v| self.to_world(v)).collect()
    }

    fn semi_axes(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Ellipse { a, b } => Some((a * self.scale, b * self.scale)),
            Shape::Polygon(_) => None,
        }
    }
}

/// Closed containment test with tolerance `eps`.
pub fn contains_point(p: &PlacedShape<'_>, q: Point, eps: f64) -> bool {
    match p.shape {
        Shape::Polygon(poly) => {
            let world: Vec<Point> = poly.vertices().iter().map(|v| p.to_world(*v)).collect();
            polygon_contains(&world, q, eps)
        }
        Shape::Ellipse { .. } => {
            let (a, b) = p.semi_axes().expect("ellipse");
            let d = q - p.root;
            (d.x / a).powi(2) + (d.y / b).powi(2) <= 1.0 + eps
        }
    }
}

/// True iff the placed shape lies inside the closed `region`.
///
/// Polygons: every boundary piece between consecutive contacts with the
/// region boundary must be inside, which for a simple region implies the
/// whole shape is. Ellipses: the centre is inside and no region edge comes
/// closer than the ellipse's own boundary (measured in the ellipse metric).
pub fn shape_inside_polygon(p: &PlacedShape<'_>, region: &Polygon, eps: f64) -> bool {
    match p.shape {
        Shape::Polygon(poly) => {
            let world: Vec<Point> = poly.vertices().iter().map(|v| p.to_world(*v)).collect();
            let n = world.len();
            for i in 0..n {
                let (a, b) = (world[i], world[(i + 1) % n]);
                if !segment_inside_polygon(a, b, region, eps) {
                    return false;
                }
            }
            true
        }
        Shape::Ellipse { .. } => {
            let (a, b) = p.semi_axes().expect("ellipse");
            if !region.contains(p.root, eps) {
                return false;
            }
            let to_unit = |q: Point| Point::new((q.x - p.root.x) / a, (q.y - p.root.y) / b);
            let tol = eps / a.min(b);
            region
                .edges()
                .all(|(u, v)| point_segment_distance(Point::ORIGIN, to_unit(u), to_unit(v)) >= 1.0 - tol)
        }
    }
}

fn segment_inside_polygon(a: Point, b: Point, region: &Polygon, eps: f64) -> bool {
    let d = b - a;
    let len2 = d.dot(d);
    let mut ts = vec![0.0, 1.0];
    for (u, v) in region.edges() {
        // region vertices touching the segment split it
        if point_segment_distance(u, a, b) <= eps && len2 > 0.0 {
            ts.push(((u - a).dot(d) / len2).clamp(0.0, 1.0));
        }
        // proper crossings
        let su = orient(a, b, u);
        let sv = orient(a, b, v);
        if (su > 0.0 && sv < 0.0) || (su < 0.0 && sv > 0.0) {
            let e = v - u;
            let denom = d.cross(e);
            if denom != 0.0 {
                let t = (u - a).cross(e) / denom;
                if (0.0..=1.0).contains(&t) {
                    ts.push(t);
                }
            }
        }
    }
    ts.sort_by(|x, y| x.total_cmp(y));
    ts.dedup();
    if !region.contains(a, eps) || !region.contains(b, eps) {
        return false;
    }
    ts.windows(2).all(|w| {
        let m = a + d * ((w[0] + w[1]) / 2.0);
        region.contains(m, eps)
    })
}

/// True iff the open rectangle and the open shape overlap with positive area.
/// Contacts along edges or at tangency points are not overlaps.
pub fn interior_intersects_rect(p: &PlacedShape<'_>, r: &Rect, eps: f64) -> bool {
    let sb = p.bbox();
    if sb.x_hi <= r.x_lo || sb.x_lo >= r.x_hi || sb.y_hi <= r.y_lo || sb.y_lo >= r.y_hi {
        return false;
    }
    match p.shape {
        Shape::Polygon(poly) => {
            let world: Vec<Point> = poly.vertices().iter().map(|v| p.to_world(*v)).collect();
            clipped_area(&world, r) > eps * (r.width() + r.height())
        }
        Shape::Ellipse { .. } => {
            let (a, b) = p.semi_axes().expect("ellipse");
            let c = r.clamp(p.root);
            let d = c - p.root;
            let dist = ((d.x / a).powi(2) + (d.y / b).powi(2)).sqrt();
            dist < 1.0 - eps / a.min(b)
        }
    }
}

/// Largest norm distance from `q` to a point of the placed polygon, attained
/// at a vertex.
pub fn max_vertex_distance(q: Point, p: &PlacedShape<'_>, n: &Norm) -> Result<f64, GeometryError> {
    match p.shape {
        Shape::Polygon(poly) => {
            Ok(poly.vertices().iter().map(|v| n.length(q - p.to_world(*v))).fold(0.0, f64::max))
        }
        Shape::Ellipse { .. } => Err(GeometryError::UnsupportedShape("max_vertex_distance")),
    }
}

/// l1 distance from `p` to the closed segment `ab`. The objective is convex
/// piecewise linear in the segment parameter, so the minimum is at an
/// endpoint or where one coordinate difference vanishes.
pub fn l1_point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let mut best = (p - a).l1().min((p - b).l1());
    if d.x != 0.0 {
        let t = (p.x - a.x) / d.x;
        if (0.0..=1.0).contains(&t) {
            best = best.min((p - (a + d * t)).l1());
        }
    }
    if d.y != 0.0 {
        let t = (p.y - a.y) / d.y;
        if (0.0..=1.0).contains(&t) {
            best = best.min((p - (a + d * t)).l1());
        }
    }
    best
}

/// Exact l1 distance between two closed segments.
pub fn l1_segment_distance(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    if segments_touch(a0, a1, b0, b1) {
        return 0.0;
    }
    l1_point_segment_distance(a0, b0, b1)
        .min(l1_point_segment_distance(a1, b0, b1))
        .min(l1_point_segment_distance(b0, a0, a1))
        .min(l1_point_segment_distance(b1, a0, a1))
}
