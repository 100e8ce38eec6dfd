//! Domains, equal-area partitions and piecewise-constant maps.
//!
//! The unit disk is represented by a regular polygon whose circumradius is
//! scaled so that its area is exactly `pi`. Every statement about the disk in
//! this crate refers to that polygon.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom2d::{cell_moments, ConvexPolygon, HalfPlane, Vec2};

/// Default number of sides of the polygonal disk.
pub const DEFAULT_DISK_SIDES: usize = 256;

/// Sector counts of the innermost disk ring that the polar scheme accepts.
pub const DISK_CORE_SECTORS: std::ops::RangeInclusive<usize> = 3..=8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainShape {
    /// `[-1/2, 1/2]²`
    UnitSquare,
    /// Area-corrected regular polygon standing in for the unit disk.
    UnitDisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub shape: DomainShape,
    pub polygon: ConvexPolygon,
    pub total_area: f64,
    /// Number of polygon sides used for the disk; 4 for the square.
    pub sides: usize,
    /// Circumradius of the disk polygon relative to the unit circle.
    pub radius_scale: f64,
}

impl Domain {
    pub fn unit_square() -> Self {
        let polygon = ConvexPolygon::rectangle(-0.5, -0.5, 0.5, 0.5);
        Self { shape: DomainShape::UnitSquare, total_area: 1.0, polygon, sides: 4, radius_scale: 1.0 }
    }

    /// Regular `sides`-gon with area `pi`.
    pub fn unit_disk(sides: usize) -> Result<Self> {
        if sides < 8 {
            return Err(Error::InvalidInput(format!("disk polygon needs at least 8 sides, got {sides}")));
        }
        let m = sides as f64;
        let radius_scale = (TAU / (m * (TAU / m).sin())).sqrt();
        let polygon = ConvexPolygon::regular(sides, radius_scale);
        let total_area = polygon.area();
        Ok(Self { shape: DomainShape::UnitDisk, polygon, total_area, sides, radius_scale })
    }

    pub fn new(shape: DomainShape) -> Self {
        match shape {
            DomainShape::UnitSquare => Self::unit_square(),
            DomainShape::UnitDisk => Self::unit_disk(DEFAULT_DISK_SIDES).expect("default disk is valid"),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.shape {
            DomainShape::UnitSquare => 2f64.sqrt(),
            DomainShape::UnitDisk => 2.0 * self.radius_scale,
        }
    }

    /// Signed distance to the exact (non-polygonized) shape, positive outside.
    pub fn exact_excess(&self, p: Vec2) -> f64 {
        match self.shape {
            DomainShape::UnitSquare => p.x.abs().max(p.y.abs()) - 0.5,
            DomainShape::UnitDisk => p.norm() - 1.0,
        }
    }
}

/// Identifies the partition a [`DiscreteMap`] lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionId(pub u64);

/// How a partition was built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionScheme {
    /// Horizontal strips of rectangles; row `r` has `row_counts[r]` cells and
    /// height `row_counts[r] / N`. A perfect square `N = k²` gives the `k x k` grid.
    Rows { row_counts: Vec<usize> },
    /// Concentric rings, ring `k` (from 1) split into `core_sectors * (2k - 1)`
    /// sectors. Ring boundaries are convex polygons through the next ring's
    /// cut points, so every cell is convex.
    Polar { core_sectors: usize, rings: usize },
}

/// `N` equal-area convex regions covering the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub id: PartitionId,
    pub scheme: PartitionScheme,
    pub regions: Vec<ConvexPolygon>,
    pub barycenters: Vec<Vec2>,
    /// Measured `C_P` with `diameter(region) <= C_P N^(-1/2)`.
    pub diameter_constant: f64,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// The identity map sampled at the barycenters.
    pub fn identity_map(&self) -> DiscreteMap {
        DiscreteMap { values: self.barycenters.clone(), partition: self.id }
    }
}

/// Builds the equal-area partition with `n` regions.
pub fn build_partition(domain: &Domain, n: usize) -> Result<Partition> {
    if n == 0 {
        return Err(Error::InvalidInput("partition needs at least one region".into()));
    }
    let (scheme, regions) = match domain.shape {
        DomainShape::UnitSquare => {
            let rows = row_counts(n);
            let regions = square_rows(&rows);
            (PartitionScheme::Rows { row_counts: rows }, regions)
        }
        DomainShape::UnitDisk => {
            let core = disk_core_sectors(n).ok_or_else(|| Error::PartitionSize {
                n,
                scheme: "polar disk (N = c k², c in 3..=8)".into(),
                admissible: admissible_disk_sizes_near(n),
            })?;
            let rings = ((n / core) as f64).sqrt().round() as usize;
            let regions = polar_disk(&domain.polygon, core, rings)?;
            (PartitionScheme::Polar { core_sectors: core, rings }, regions)
        }
    };
    let target = domain.total_area / n as f64;
    let mut barycenters = Vec::with_capacity(n);
    let mut max_diam: f64 = 0.0;
    for (j, r) in regions.iter().enumerate() {
        let m = cell_moments(r);
        if ((m.area - target) / target).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "partition region {j} has area {} instead of {target}",
                m.area
            )));
        }
        barycenters.push(m.barycenter().expect("non-degenerate region"));
        max_diam = max_diam.max(r.diameter());
    }
    let id = PartitionId(partition_hash(domain, &scheme));
    Ok(Partition { id, scheme, regions, barycenters, diameter_constant: max_diam * (n as f64).sqrt() })
}

fn partition_hash(domain: &Domain, scheme: &PartitionScheme) -> u64 {
    // FNV-1a over a canonical description
    let desc = format!("{:?}|{}|{:?}", domain.shape, domain.sides, scheme);
    desc.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Balanced row counts: `round(sqrt(n))` rows whose counts differ by at most one.
fn row_counts(n: usize) -> Vec<usize> {
    let rows = ((n as f64).sqrt().round() as usize).max(1);
    let base = n / rows;
    let extra = n % rows;
    (0..rows).map(|r| base + ((r + 1) * extra / rows - r * extra / rows)).collect()
}

fn square_rows(rows: &[usize]) -> Vec<ConvexPolygon> {
    let n: usize = rows.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut y0 = -0.5;
    let mut seen = 0usize;
    for &c in rows {
        seen += c;
        let y1 = if seen == n { 0.5 } else { -0.5 + seen as f64 / n as f64 };
        for i in 0..c {
            let x0 = -0.5 + i as f64 / c as f64;
            let x1 = if i + 1 == c { 0.5 } else { -0.5 + (i + 1) as f64 / c as f64 };
            out.push(ConvexPolygon::rectangle(x0, y0, x1, y1));
        }
        y0 = y1;
    }
    out
}

fn disk_core_sectors(n: usize) -> Option<usize> {
    let mut candidates: Vec<usize> = DISK_CORE_SECTORS
        .filter(|c| n.is_multiple_of(*c) && is_square(n / c))
        .collect();
    candidates.sort_by(|a, b| (*a as f64 - PI).abs().total_cmp(&(*b as f64 - PI).abs()));
    candidates.first().copied()
}

fn is_square(m: usize) -> bool {
    let r = (m as f64).sqrt().round() as usize;
    r > 0 && r * r == m
}

/// Whether `n` is accepted by the polar disk scheme.
pub fn is_admissible_disk_size(n: usize) -> bool {
    disk_core_sectors(n).is_some()
}

/// Up to six admissible disk sizes closest to `n`.
pub fn admissible_disk_sizes_near(n: usize) -> Vec<usize> {
    let lo = n.saturating_sub(n / 4 + 16);
    let hi = n + n / 4 + 16;
    let mut v: Vec<usize> = (lo.max(1)..=hi).filter(|&m| is_admissible_disk_size(m)).collect();
    v.sort_by_key(|&m| (m as i64 - n as i64).abs());
    v.truncate(6);
    v.sort_unstable();
    v
}

/// A convex polygon strictly star-shaped about the origin, with the cumulative
/// area swept by a ray as a function of its angle.
struct Star {
    verts: Vec<Vec2>,
    start: f64,
    /// unwrapped vertex angles, `ang[0] = start`, closed by `start + 2 pi`
    ang: Vec<f64>,
    /// swept area from `start` to `ang[i]`
    prefix: Vec<f64>,
}

impl Star {
    fn new(poly: &ConvexPolygon) -> Self {
        let verts = poly.vertices().to_vec();
        let m = verts.len();
        let start = verts[0].y.atan2(verts[0].x);
        let mut ang = Vec::with_capacity(m + 1);
        let mut prefix = Vec::with_capacity(m + 1);
        let mut acc = 0.0;
        for i in 0..m {
            let mut a = verts[i].y.atan2(verts[i].x);
            while a < start {
                a += TAU;
            }
            if i > 0 && a <= ang[i - 1] {
                a += TAU;
            }
            ang.push(a);
            prefix.push(acc);
            acc += 0.5 * verts[i].cross(verts[(i + 1) % m]);
        }
        ang.push(start + TAU);
        prefix.push(acc);
        Self { verts, start, ang, prefix }
    }

    fn total(&self) -> f64 {
        self.prefix[self.prefix.len() - 1]
    }

    /// Boundary point hit by the ray at `phi`, the edge index, and the swept
    /// area from `start`, for `phi` in `[start, start + 2 pi]`.
    fn hit(&self, phi: f64) -> (Vec2, f64) {
        let m = self.verts.len();
        let i = match self.ang[..m].binary_search_by(|a| a.total_cmp(&phi)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let a = self.verts[i];
        let b = self.verts[(i + 1) % m];
        let e = Vec2::from_angle(phi);
        let d = b - a;
        let s = (-e.cross(a) / e.cross(d)).clamp(0.0, 1.0);
        let q = a + d * s;
        (q, self.prefix[i] + 0.5 * a.cross(q))
    }

    /// Swept area from `start` to `phi`, for any `phi >= start`.
    fn swept(&self, phi: f64) -> f64 {
        let turns = ((phi - self.start) / TAU).floor();
        let local = phi - turns * TAU;
        turns * self.total() + self.hit(local.min(self.start + TAU)).1
    }

    fn radius(&self, phi: f64) -> f64 {
        let turns = ((phi - self.start) / TAU).floor();
        self.hit(phi - turns * TAU).0.norm()
    }

    fn min_radius(&self) -> f64 {
        let m = self.verts.len();
        (0..m)
            .map(|i| {
                let a = self.verts[i];
                let b = self.verts[(i + 1) % m];
                a.cross(b).abs() / (b - a).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Angle `phi > from` where the tile between rays `from`, `phi`, outside the
/// chord of radius `rho`, has area `target`.
fn next_cut(star: &Star, from: f64, rho: f64, target: f64) -> f64 {
    let base = star.swept(from);
    let h = |phi: f64| star.swept(phi) - base - 0.5 * rho * rho * (phi - from).sin() - target;
    let (mut lo, mut hi) = (from, from + TAU);
    if h(hi) < 0.0 {
        return hi;
    }
    let mut phi = from + target / (0.5 * star.radius(from).powi(2)).max(1e-300);
    if !(phi > lo && phi < hi) {
        phi = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let v = h(phi);
        if v == 0.0 {
            return phi;
        }
        if v < 0.0 {
            lo = phi;
        } else {
            hi = phi;
        }
        let r = star.radius(phi);
        let dv = 0.5 * (r * r - rho * rho * (phi - from).cos());
        let mut next = phi - v / dv;
        if !(next > lo && next < hi) || dv <= 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (next - phi).abs() <= 1e-15 * (1.0 + phi.abs()) || hi - lo <= 1e-15 {
            return next;
        }
        phi = next;
    }
    phi
}

/// Cut angles of one ring and the closing residual for a given chord radius.
fn sweep(star: &Star, first: f64, sectors: usize, rho: f64, target: f64) -> (Vec<f64>, f64) {
    let mut cuts = Vec::with_capacity(sectors + 1);
    cuts.push(first);
    let mut phi = first;
    for _ in 0..sectors {
        phi = next_cut(star, phi, rho, target);
        cuts.push(phi);
    }
    let residual = phi - (first + TAU);
    (cuts, residual)
}

fn polar_disk(outer: &ConvexPolygon, core: usize, rings: usize) -> Result<Vec<ConvexPolygon>> {
    let n = core * rings * rings;
    let target = outer.area() / n as f64;
    let mut by_ring: Vec<Vec<ConvexPolygon>> = Vec::with_capacity(rings);
    let mut boundary = outer.clone();
    for k in (1..=rings).rev() {
        let sectors = core * (2 * k - 1);
        let star = Star::new(&boundary);
        let first = 0.0;
        let (cuts, rho) = if k == 1 {
            let (cuts, residual) = sweep(&star, first, sectors, 0.0, target);
            if residual.abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("disk core does not close (residual {residual:e})")));
            }
            (cuts, 0.0)
        } else {
            let (mut lo, mut hi) = (0.0, star.min_radius() * (1.0 - 1e-12));
            if sweep(&star, first, sectors, hi, target).1 < 0.0 {
                return Err(Error::InvalidInput(format!("disk ring {k} cannot be closed")));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sweep(&star, first, sectors, mid, target).1 < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-16 {
                    break;
                }
            }
            let rho = 0.5 * (lo + hi);
            let (mut cuts, _) = sweep(&star, first, sectors, rho, target);
            cuts[sectors] = first + TAU;
            (cuts, rho)
        };
        let tol = 1e-12;
        let mut tiles = Vec::with_capacity(sectors);
        for i in 0..sectors {
            let (a, b) = (cuts[i], cuts[i + 1]);
            let (ea, eb) = (Vec2::from_angle(a), Vec2::from_angle(b));
            let mut tile = boundary.clone();
            if sectors > 1 {
                tile = tile.clip(&HalfPlane::new(Vec2::new(ea.y, -ea.x), 0.0), tol);
                tile = tile.clip(&HalfPlane::new(Vec2::new(-eb.y, eb.x), 0.0), tol);
            }
            if rho > 0.0 {
                tile = tile.clip(&HalfPlane::left_of(eb * rho, ea * rho), tol);
            }
            tiles.push(tile);
        }
        by_ring.push(tiles);
        if k > 1 {
            let inner: Vec<Vec2> = cuts[..sectors].iter().map(|&c| Vec2::from_angle(c) * rho).collect();
            boundary = ConvexPolygon::new(inner)?;
        }
    }
    by_ring.reverse();
    Ok(by_ring.into_iter().flatten().collect())
}

/// A piecewise-constant map: one value per partition region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMap {
    pub values: Vec<Vec2>,
    pub partition: PartitionId,
}

impl DiscreteMap {
    pub fn new(values: Vec<Vec2>, partition: PartitionId) -> Result<Self> {
        if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { cell });
        }
        Ok(Self { values, partition })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `‖m‖²` in `L²(X)` with normalized measure: `(1/N) Σ |m_j|²`.
    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v.norm2()).sum::<f64>() / self.values.len() as f64
    }

    /// `‖self - other‖²` in normalized `L²(X)`.
    pub fn dist2(&self, other: &DiscreteMap) -> Result<f64> {
        self.check_same(other)?;
        let n = self.values.len() as f64;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).norm2()).sum::<f64>() / n)
    }

    pub(crate) fn check_same(&self, other: &DiscreteMap) -> Result<()> {
        if self.partition != other.partition || self.values.len() != other.values.len() {
            return Err(Error::PartitionMismatch { expected: self.values.len(), found: other.values.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Value at the region barycenter.
    #[default]
    Barycenter,
    /// Region average by conical 4x4 Gauss product rule (16 points) per fan
    /// triangle: the orthogonal projection onto piecewise constants.
    Mean,
}

const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

fn region_mean<F: Fn(Vec2) -> Vec2>(s: &F, region: &ConvexPolygon, center: Vec2) -> Vec2 {
    let mut acc = Vec2::ZERO;
    let mut area = 0.0;
    for (b, c) in region.edges() {
        let a = center;
        let det = (b - a).cross(c - b);
        for &(u, wu) in &GAUSS4 {
            for &(v, wv) in &GAUSS4 {
                let p = a + ((b - a) + (c - b) * v) * u;
                acc += s(p) * (wu * wv * u * det);
            }
        }
        area += 0.5 * det;
    }
    acc / area
}

/// Samples `s` on the partition.
pub fn sample_map<F: Fn(Vec2) -> Vec2>(s: F, partition: &Partition, mode: SampleMode) -> Result<DiscreteMap> {
    let values = partition
        .regions
        .iter()
        .zip(&partition.barycenters)
        .map(|(r, &c)| match mode {
            SampleMode::Barycenter => s(c),
            SampleMode::Mean => region_mean(&s, r, c),
        })
        .collect();
    DiscreteMap::new(values, partition.id)
}

/// `m # Leb`: one Dirac of mass `1/N` per map value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub points: Vec<Vec2>,
    pub masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Indices of the first pair of atoms closer than `tol`, if any.
    pub fn coincident_pair(&self, tol: f64) -> Option<(usize, usize)> {
        find_coincident(&self.points, tol)
    }
}

pub fn pushforward(m: &DiscreteMap) -> DiscreteMeasure {
    let n = m.values.len();
    DiscreteMeasure { points: m.values.clone(), masses: vec![1.0 / n as f64; n] }
}

/// First pair `(i, j)`, `i < j`, with `|p_i - p_j| <= tol`.
pub fn find_coincident(points: &[Vec2], tol: f64) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(a.cmp(&b)));
    let tol2 = tol * tol;
    let mut best: Option<(usize, usize)> = None;
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            if points[j].x - points[i].x > tol {
                break;
            }
            if (points[j] - points[i]).norm2() <= tol2 {
                let pair = (i.min(j), i.max(j));
                best = Some(best.map_or(pair, |b| b.min(pair)));
            }
        }
    }
    best
}
