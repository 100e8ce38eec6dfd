//! Exact 2D convex-polygon kernel.
//!
//! Polygons are stored counterclockwise. Moments are evaluated in closed form
//! by fanning each polygon into triangles, so cell areas and transport costs
//! carry only floating point round-off.

mod power;

pub use power::{power_cell, EdgeLabel, LabeledCell, PowerDiagram, PowerSite};

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (against the domain diameter) for deciding that a
/// vertex lies on a clipping line.
pub const GEOM_EPS: f64 = 1e-12;

/// A point or vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    /// Counterclockwise rotation by `theta`.
    #[inline]
    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Closed half-plane `{ y : normal · y <= offset }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Vec2, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Half-plane to the left of the directed line `a -> b`.
    pub fn left_of(a: Vec2, b: Vec2) -> Self {
        let normal = (b - a).perp() * -1.0;
        Self::new(normal, normal.dot(a))
    }

    /// Signed distance, positive outside.
    #[inline]
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        (self.normal.dot(p) - self.offset) / self.normal.norm()
    }

    #[inline]
    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        self.signed_distance(p) <= tol
    }
}

/// A convex polygon with counterclockwise vertices. The empty polygon has no
/// vertices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    /// Validates counterclockwise orientation and convexity.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.is_empty() {
            return Ok(Self::empty());
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "a non-empty polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("polygon has non-finite vertices".into()));
        }
        let poly = Self { vertices };
        if poly.signed_area() <= 0.0 {
            return Err(Error::NonConvex("polygon is not counterclockwise".into()));
        }
        let scale = poly.diameter().max(f64::MIN_POSITIVE);
        let n = poly.vertices.len();
        for i in 0..n {
            let a = poly.vertices[i];
            let b = poly.vertices[(i + 1) % n];
            let c = poly.vertices[(i + 2) % n];
            if (b - a).cross(c - b) < -GEOM_EPS * scale * scale {
                return Err(Error::NonConvex(format!("reflex turn at vertex {}", (i + 1) % n)));
            }
        }
        Ok(poly)
    }

    /// Skips validation; callers guarantee convexity.
    pub(crate) fn from_vertices_unchecked(vertices: Vec<Vec2>) -> Self {
        Self { vertices }
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new() }
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::from_vertices_unchecked(vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ])
    }

    /// Regular polygon with `sides` vertices at angles `2 pi k / sides`.
    pub fn regular(sides: usize, circumradius: f64) -> Self {
        let verts = (0..sides)
            .map(|k| Vec2::from_angle(std::f64::consts::TAU * k as f64 / sides as f64) * circumradius)
            .collect();
        Self::from_vertices_unchecked(verts)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area (positive for counterclockwise input).
    pub fn signed_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let o = self.vertices[0];
        let mut twice = 0.0;
        for w in self.vertices[1..].windows(2) {
            twice += (w[0] - o).cross(w[1] - o);
        }
        0.5 * twice
    }

    pub fn area(&self) -> f64 {
        self.signed_area().max(0.0)
    }

    pub fn diameter(&self) -> f64 {
        let mut d2: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d2 = d2.max((*a - *b).norm2());
            }
        }
        d2.sqrt()
    }

    /// Half-planes whose intersection is the polygon.
    pub fn half_planes(&self) -> Vec<HalfPlane> {
        self.edges().map(|(a, b)| HalfPlane::left_of(a, b)).collect()
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        !self.is_empty() && self.edges().all(|(a, b)| HalfPlane::left_of(a, b).contains(p, tol))
    }

    /// Intersection with a half-plane (Sutherland–Hodgman on one line).
    /// Vertices within `tol` of the line count as inside.
    pub fn clip(&self, hp: &HalfPlane, tol: f64) -> ConvexPolygon {
        if self.is_empty() {
            return Self::empty();
        }
        let inv = 1.0 / hp.normal.norm();
        let dist: Vec<f64> = self
            .vertices
            .iter()
            .map(|&v| (hp.normal.dot(v) - hp.offset) * inv)
            .collect();
        if dist.iter().all(|&d| d <= tol) {
            return self.clone();
        }
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let j = (i + 1) % n;
            let (a, b) = (self.vertices[i], self.vertices[j]);
            let (da, db) = (dist[i], dist[j]);
            let a_in = da <= tol;
            let b_in = db <= tol;
            if a_in {
                out.push(a);
            }
            if a_in != b_in {
                let t = da / (da - db);
                out.push(a + (b - a) * t);
            }
        }
        dedup_ring(&mut out, tol);
        if out.len() < 3 {
            return Self::empty();
        }
        let poly = Self { vertices: out };
        if poly.signed_area() <= 0.0 {
            return Self::empty();
        }
        poly
    }

    /// Minkowski gauge: the smallest `s >= 0` with `p` in `s * polygon`, for
    /// polygons containing the origin in their interior. Values above 1 mean
    /// `p` lies outside.
    pub fn gauge(&self, p: Vec2) -> f64 {
        self.half_planes()
            .iter()
            .map(|hp| hp.normal.dot(p) / hp.offset)
            .fold(0.0, f64::max)
    }
}

/// Removes consecutive near-duplicate vertices (including the wrap-around).
pub(crate) fn dedup_ring(v: &mut Vec<Vec2>, tol: f64) {
    let tol2 = tol * tol;
    v.dedup_by(|b, a| (*a - *b).norm2() <= tol2);
    while v.len() > 1 && (v[0] - v[v.len() - 1]).norm2() <= tol2 {
        v.pop();
    }
}

/// Raw polynomial moments `∫1`, `∫y`, `∫|y|²` of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellMoments {
    pub area: f64,
    pub first: Vec2,
    pub second: f64,
    pub degenerate: bool,
}

impl CellMoments {
    /// `None` for degenerate cells.
    pub fn barycenter(&self) -> Option<Vec2> {
        if self.degenerate || self.area <= 0.0 {
            None
        } else {
            Some(self.first / self.area)
        }
    }

    /// `∫ |y - s|² dy` from the raw moments. Prefer [`transport_integrand`]
    /// for small cells far from the origin.
    pub fn second_about(&self, s: Vec2) -> f64 {
        self.second - 2.0 * self.first.dot(s) + self.area * s.norm2()
    }
}

/// Area below which a cell counts as degenerate, relative to the reference
/// (domain) area.
pub const DEGENERATE_AREA: f64 = 1e-14;

/// Moments about a reference point `r`: returns `(area, ∫(y-r), ∫|y-r|²)`.
pub(crate) fn local_moments(vertices: &[Vec2], r: Vec2) -> (f64, Vec2, f64) {
    let n = vertices.len();
    if n < 3 {
        return (0.0, Vec2::ZERO, 0.0);
    }
    let mut area2 = 0.0;
    let mut first6 = Vec2::ZERO;
    let mut second12 = 0.0;
    for i in 0..n {
        let a = vertices[i] - r;
        let b = vertices[(i + 1) % n] - r;
        let c = a.cross(b);
        area2 += c;
        first6 += (a + b) * c;
        second12 += (a.norm2() + a.dot(b) + b.norm2()) * c;
    }
    (0.5 * area2, first6 / 6.0, second12 / 12.0)
}

/// Exact `∫1`, `∫y`, `∫|y|²` over a convex cell. Cells with area below
/// `DEGENERATE_AREA * reference_area` are reported as zero and degenerate.
pub fn cell_moments_rel(cell: &ConvexPolygon, reference_area: f64) -> CellMoments {
    if cell.is_empty() {
        return CellMoments { degenerate: true, ..Default::default() };
    }
    let r = cell.vertices[0];
    let (area, first_r, second_r) = local_moments(&cell.vertices, r);
    if area <= DEGENERATE_AREA * reference_area {
        return CellMoments { degenerate: true, ..Default::default() };
    }
    CellMoments {
        area,
        first: first_r + r * area,
        second: second_r + 2.0 * r.dot(first_r) + area * r.norm2(),
        degenerate: false,
    }
}

/// [`cell_moments_rel`] against the cell's own area scale of 1.
pub fn cell_moments(cell: &ConvexPolygon) -> CellMoments {
    cell_moments_rel(cell, 1.0)
}

/// Exact `∫_cell |y - site|² dy`, evaluated about the site for accuracy.
pub fn transport_integrand(cell: &ConvexPolygon, site: Vec2) -> f64 {
    local_moments(&cell.vertices, site).2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon::rectangle(-0.5, -0.5, 0.5, 0.5)
    }

    #[test]
    fn square_moments_closed_form() {
        let m = cell_moments(&unit_square());
        assert!((m.area - 1.0).abs() < 1e-15);
        assert!(m.barycenter().unwrap().norm() < 1e-15);
        assert!((m.second - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_centroid() {
        let tri = ConvexPolygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)])
            .unwrap();
        let m = cell_moments(&tri);
        assert!((m.area - 0.5).abs() < 1e-15);
        let c = m.barycenter().unwrap();
        assert!((c.x - 1.0 / 3.0).abs() < 1e-15 && (c.y - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_polygon_is_degenerate() {
        let m = cell_moments(&ConvexPolygon::empty());
        assert!(m.degenerate);
        assert_eq!(m.area, 0.0);
        assert_eq!(transport_integrand(&ConvexPolygon::empty(), Vec2::ZERO), 0.0);
    }

    #[test]
    fn transport_integrand_parallel_axis() {
        let sq = unit_square();
        assert!((transport_integrand(&sq, Vec2::ZERO) - 1.0 / 6.0).abs() < 1e-15);
        assert!((transport_integrand(&sq, Vec2::new(1.0, 0.0)) - 7.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_clockwise_and_reflex() {
        let cw = vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)];
        assert!(matches!(ConvexPolygon::new(cw), Err(Error::NonConvex(_))));
        let dart = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(0.5, 0.5),
            Vec2::new(0.0, 2.0),
        ];
        assert!(matches!(ConvexPolygon::new(dart), Err(Error::NonConvex(_))));
    }

    #[test]
    fn clip_keeps_half() {
        let sq = unit_square();
        let half = sq.clip(&HalfPlane::new(Vec2::new(1.0, 0.0), 0.1), 1e-12);
        assert!((half.area() - 0.6).abs() < 1e-15);
        let none = sq.clip(&HalfPlane::new(Vec2::new(1.0, 0.0), -0.6), 1e-12);
        assert!(none.is_empty());
    }

    #[test]
    fn gauge_of_square() {
        let sq = unit_square();
        assert!((sq.gauge(Vec2::new(0.25, 0.1)) - 0.5).abs() < 1e-15);
        assert!((sq.gauge(Vec2::new(-1.0, 0.0)) - 2.0).abs() < 1e-15);
    }
}
