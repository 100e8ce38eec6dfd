//! Power (Laguerre) cells by successive half-plane clipping.
//!
//! Each cell starts as the domain's bounding box, is clipped by the power
//! bisectors of nearby sites found through a uniform bin grid, and is finally
//! clipped by the domain. The neighbor search visits grid rings around the
//! site until no unvisited site can still cut the cell, so the result is the
//! exact cell and not an approximation.

use serde::{Deserialize, Serialize};

use super::{ConvexPolygon, HalfPlane, Vec2, GEOM_EPS};
use crate::error::{Error, Result};

/// A site of the power diagram: `cell_j = { y : |y - x_j|² - f_j minimal }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSite {
    pub position: Vec2,
    pub weight: f64,
}

impl PowerSite {
    pub fn new(position: Vec2, weight: f64) -> Self {
        Self { position, weight }
    }
}

/// What lies across a cell edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeLabel {
    Boundary,
    Site(usize),
}

/// A power cell whose edge `i` (from vertex `i` to vertex `i + 1`) carries
/// `labels[i]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledCell {
    pub polygon: ConvexPolygon,
    pub labels: Vec<EdgeLabel>,
}

impl LabeledCell {
    /// Iterates `(neighbor, edge length)` over edges shared with other sites.
    pub fn neighbors(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let v = self.polygon.vertices();
        let n = v.len();
        self.labels.iter().enumerate().filter_map(move |(i, l)| match l {
            EdgeLabel::Site(k) => Some((*k, (v[(i + 1) % n] - v[i]).norm())),
            EdgeLabel::Boundary => None,
        })
    }
}

/// All cells of a power diagram restricted to a convex domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDiagram {
    pub cells: Vec<LabeledCell>,
}

impl PowerDiagram {
    pub fn build(sites: &[PowerSite], domain: &ConvexPolygon) -> Result<Self> {
        check_sites(sites, domain)?;
        let conditioned = condition(sites);
        let sites = conditioned.as_deref().unwrap_or(sites);
        let grid = SiteGrid::new(sites);
        let ctx = BuildContext::new(sites, domain, &grid);
        #[cfg(feature = "parallel")]
        let cells = {
            use rayon::prelude::*;
            (0..sites.len())
                .into_par_iter()
                .map_init(Clipper::default, |clipper, j| ctx.cell(clipper, j))
                .collect()
        };
        #[cfg(not(feature = "parallel"))]
        let cells = {
            let mut clipper = Clipper::default();
            (0..sites.len()).map(|j| ctx.cell(&mut clipper, j)).collect()
        };
        Ok(Self { cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn check_sites(sites: &[PowerSite], domain: &ConvexPolygon) -> Result<()> {
    if sites.is_empty() {
        return Err(Error::InvalidInput("power diagram needs at least one site".into()));
    }
    if domain.is_empty() {
        return Err(Error::NonConvex("domain polygon is empty".into()));
    }
    if let Some(j) = sites.iter().position(|s| !s.position.is_finite() || !s.weight.is_finite()) {
        return Err(Error::InvalidInput(format!("site {j} is not finite")));
    }
    Ok(())
}

/// An equivalent set of sites with nearly constant weights, or `None` when
/// the weights are already flat enough.
///
/// Sites `z_k = a + beta x_k` with weights `g_k = |z_k|² - beta (|x_k|² - f_k)`
/// produce exactly the same cells for any `beta > 0`. Fitting
/// `f ≈ kappa |x|² + 2 p.x + c` and taking `beta = 1 - kappa`, `a = -p`
/// cancels the fitted part of the weights, which keeps the neighbor search
/// radius close to the cell size.
fn condition(sites: &[PowerSite]) -> Option<Vec<PowerSite>> {
    if sites.len() < 8 {
        return None;
    }
    let spread = |s: &[PowerSite]| {
        let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.weight), hi.max(s.weight)));
        hi - lo
    };
    let before = spread(sites);
    if before == 0.0 {
        return None;
    }
    // least squares on the columns |x|², x, y, 1 via normal equations
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    let c0 = sites.iter().fold(Vec2::ZERO, |a, s| a + s.position) / sites.len() as f64;
    for s in sites {
        let x = s.position - c0;
        let row = [x.norm2(), x.x, x.y, 1.0];
        for r in 0..4 {
            for c in 0..4 {
                ata[r][c] += row[r] * row[c];
            }
            atb[r] += row[r] * s.weight;
        }
    }
    let coef = solve4(ata, atb)?;
    // f ≈ kappa |x - c0|² + l.(x - c0) + const  =  kappa |x|² + (l - 2 kappa c0).x + const
    let kappa = coef[0];
    let p = (Vec2::new(coef[1], coef[2]) - c0 * (2.0 * kappa)) * 0.5;
    let beta = (1.0 - kappa).clamp(1e-3, 1e8);
    let a = -p;
    let out: Vec<PowerSite> = sites
        .iter()
        .map(|s| {
            let z = a + s.position * beta;
            PowerSite::new(z, z.norm2() - beta * (s.position.norm2() - s.weight))
        })
        .collect();
    // compare spreads in the same length units
    (spread(&out) < 0.5 * beta * before).then_some(out)
}

/// Gaussian elimination with partial pivoting on a 4x4 system.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..4 {
            let m = a[r][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= m * p;
            }
            b[r] -= m * b[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let mut acc = b[r];
        for c in r + 1..4 {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}

/// The power cell of site `j` clipped to `domain`, by brute force against
/// every other site. Empty cells are valid results.
pub fn power_cell(sites: &[PowerSite], j: usize, domain: &ConvexPolygon) -> Result<ConvexPolygon> {
    check_sites(sites, domain)?;
    if j >= sites.len() {
        return Err(Error::InvalidInput(format!("site index {j} out of range")));
    }
    let tol = GEOM_EPS * domain.diameter();
    let xj = sites[j].position;
    let mut cell = domain.clone();
    for (k, sk) in sites.iter().enumerate() {
        if k == j {
            continue;
        }
        let d = sk.position - xj;
        if d.norm2() == 0.0 {
            return Err(Error::CoincidentPoints { i: j.min(k), j: j.max(k), tol: 0.0 });
        }
        // 2 (x_k - x_j) . y <= |x_k|² - |x_j|² - f_k + f_j
        let hp = HalfPlane::new(
            d * 2.0,
            sk.position.norm2() - xj.norm2() - sk.weight + sites[j].weight,
        );
        cell = cell.clip(&hp, tol);
        if cell.is_empty() {
            break;
        }
    }
    Ok(cell)
}

/// Sites bucketed in a uniform grid over their bounding box.
struct SiteGrid {
    origin: Vec2,
    inv_cell: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl SiteGrid {
    fn new(sites: &[PowerSite]) -> Self {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for s in sites {
            lo.x = lo.x.min(s.position.x);
            lo.y = lo.y.min(s.position.y);
            hi.x = hi.x.max(s.position.x);
            hi.y = hi.y.max(s.position.y);
        }
        let n = sites.len() as f64;
        let (w, h) = (hi.x - lo.x, hi.y - lo.y);
        let mut cell = if w > 0.0 && h > 0.0 { (w * h / n).sqrt() } else { w.max(h) / n.sqrt() };
        if !(cell > 0.0) {
            cell = 1.0;
        }
        // keep the grid size proportional to the site count even for skinny boxes
        let max_bins = (4.0 * n).max(16.0);
        while ((w / cell).floor() + 1.0) * ((h / cell).floor() + 1.0) > max_bins {
            cell *= 1.5;
        }
        let nx = (w / cell) as usize + 1;
        let ny = (h / cell) as usize + 1;
        let inv_cell = 1.0 / cell;
        let bin_of = |p: Vec2| -> usize {
            let ix = (((p.x - lo.x) * inv_cell) as usize).min(nx - 1);
            let iy = (((p.y - lo.y) * inv_cell) as usize).min(ny - 1);
            iy * nx + ix
        };
        let mut counts = vec![0u32; nx * ny + 1];
        for s in sites {
            counts[bin_of(s.position) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0u32; sites.len()];
        for (j, s) in sites.iter().enumerate() {
            let b = bin_of(s.position);
            items[fill[b] as usize] = j as u32;
            fill[b] += 1;
        }
        Self { origin: lo, inv_cell, cell, nx, ny, starts, items }
    }

    fn coords(&self, p: Vec2) -> (usize, usize) {
        let ix = (((p.x - self.origin.x) * self.inv_cell) as usize).min(self.nx - 1);
        let iy = (((p.y - self.origin.y) * self.inv_cell) as usize).min(self.ny - 1);
        (ix, iy)
    }

    fn bin(&self, ix: usize, iy: usize) -> &[u32] {
        let b = iy * self.nx + ix;
        &self.items[self.starts[b] as usize..self.starts[b + 1] as usize]
    }
}

struct BuildContext<'a> {
    sites: &'a [PowerSite],
    domain_planes: Vec<HalfPlane>,
    bbox: (Vec2, Vec2),
    grid: &'a SiteGrid,
    max_weight: f64,
    tol: f64,
}

impl<'a> BuildContext<'a> {
    fn new(sites: &'a [PowerSite], domain: &ConvexPolygon, grid: &'a SiteGrid) -> Self {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in domain.vertices() {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        let domain_planes = domain
            .half_planes()
            .into_iter()
            .map(|hp| {
                let s = 1.0 / hp.normal.norm();
                HalfPlane::new(hp.normal * s, hp.offset * s)
            })
            .collect();
        Self {
            sites,
            domain_planes,
            bbox: (lo, hi),
            grid,
            max_weight: sites.iter().map(|s| s.weight).fold(f64::NEG_INFINITY, f64::max),
            tol: GEOM_EPS * domain.diameter(),
        }
    }

    fn cell(&self, clip: &mut Clipper, j: usize) -> LabeledCell {
        let xj = self.sites[j].position;
        let fj = self.sites[j].weight;
        let (lo, hi) = self.bbox;
        clip.reset(&[lo - xj, Vec2::new(hi.x, lo.y) - xj, hi - xj, Vec2::new(lo.x, hi.y) - xj]);

        let g = self.grid;
        let (bx, by) = g.coords(xj);
        let slack = self.max_weight - fj;
        let mut r = 0usize;
        'rings: loop {
            let x0 = bx.saturating_sub(r);
            let x1 = (bx + r).min(g.nx - 1);
            let y0 = by.saturating_sub(r);
            let y1 = (by + r).min(g.ny - 1);
            for iy in y0..=y1 {
                let full_row = r == 0 || iy + r == by || iy == by + r;
                let left = (bx >= r).then(|| bx - r);
                let right = (bx + r < g.nx).then_some(bx + r);
                let cols: &mut dyn Iterator<Item = usize> = if full_row {
                    &mut (x0..=x1)
                } else {
                    &mut left.into_iter().chain(right)
                };
                for ix in cols {
                    for &k in g.bin(ix, iy) {
                        let k = k as usize;
                        if k != j && !self.clip_site(clip, j, k) {
                            break 'rings;
                        }
                    }
                }
            }
            let covered = x0 == 0 && y0 == 0 && x1 == g.nx - 1 && y1 == g.ny - 1;
            if covered {
                break;
            }
            // distance from x_j to the outside of the searched block
            let mut d_block = f64::INFINITY;
            if x0 > 0 {
                d_block = d_block.min(xj.x - (g.origin.x + x0 as f64 * g.cell));
            }
            if x1 < g.nx - 1 {
                d_block = d_block.min(g.origin.x + (x1 + 1) as f64 * g.cell - xj.x);
            }
            if y0 > 0 {
                d_block = d_block.min(xj.y - (g.origin.y + y0 as f64 * g.cell));
            }
            if y1 < g.ny - 1 {
                d_block = d_block.min(g.origin.y + (y1 + 1) as f64 * g.cell - xj.y);
            }
            // a site at distance d can only cut if (d - R)² - f_max < R² - f_j
            let rad = clip.max_radius();
            let reach = rad + (rad * rad + slack).max(0.0).sqrt();
            if d_block >= reach {
                break;
            }
            r += 1;
        }

        if !clip.is_empty() {
            let rad = clip.max_radius();
            for hp in &self.domain_planes {
                let off = hp.offset - hp.normal.dot(xj);
                if rad <= off - self.tol {
                    continue;
                }
                if !clip.clip(hp.normal, off, EdgeLabel::Boundary, self.tol) {
                    break;
                }
            }
        }
        clip.finish(xj)
    }

    /// Returns false once the cell is empty.
    fn clip_site(&self, clip: &mut Clipper, j: usize, k: usize) -> bool {
        let d = self.sites[k].position - self.sites[j].position;
        // local coordinates u = y - x_j:  2 d . u <= |d|² - f_k + f_j
        let offset = d.norm2() - self.sites[k].weight + self.sites[j].weight;
        clip.clip(d * 2.0, offset, EdgeLabel::Site(k), self.tol)
    }
}

/// Reusable buffers for clipping one labeled polygon.
#[derive(Default)]
struct Clipper {
    verts: Vec<Vec2>,
    labels: Vec<EdgeLabel>,
    tmp_v: Vec<Vec2>,
    tmp_l: Vec<EdgeLabel>,
    dist: Vec<f64>,
}

impl Clipper {
    fn reset(&mut self, verts: &[Vec2]) {
        self.verts.clear();
        self.verts.extend_from_slice(verts);
        self.labels.clear();
        self.labels.resize(verts.len(), EdgeLabel::Boundary);
    }

    fn is_empty(&self) -> bool {
        self.verts.len() < 3
    }

    fn max_radius(&self) -> f64 {
        self.verts.iter().map(|v| v.norm2()).fold(0.0, f64::max).sqrt()
    }

    /// Keeps `{ u : normal . u <= offset }`. Returns false if the result is empty.
    fn clip(&mut self, normal: Vec2, offset: f64, label: EdgeLabel, tol: f64) -> bool {
        let n = self.verts.len();
        if n < 3 {
            return false;
        }
        let inv = 1.0 / normal.norm();
        self.dist.clear();
        let mut any_out = false;
        let mut all_out = true;
        for v in &self.verts {
            let d = (normal.dot(*v) - offset) * inv;
            let out = d > tol;
            any_out |= out;
            all_out &= out;
            self.dist.push(d);
        }
        if !any_out {
            return true;
        }
        if all_out {
            self.verts.clear();
            self.labels.clear();
            return false;
        }
        self.tmp_v.clear();
        self.tmp_l.clear();
        for i in 0..n {
            let j = if i + 1 == n { 0 } else { i + 1 };
            let (da, db) = (self.dist[i], self.dist[j]);
            let a_in = da <= tol;
            let b_in = db <= tol;
            let (a, b) = (self.verts[i], self.verts[j]);
            if a_in {
                self.tmp_v.push(a);
                if b_in {
                    self.tmp_l.push(self.labels[i]);
                } else {
                    self.tmp_l.push(self.labels[i]);
                    let t = da / (da - db);
                    self.tmp_v.push(a + (b - a) * t);
                    self.tmp_l.push(label);
                }
            } else if b_in {
                let t = da / (da - db);
                self.tmp_v.push(a + (b - a) * t);
                self.tmp_l.push(self.labels[i]);
            }
        }
        std::mem::swap(&mut self.verts, &mut self.tmp_v);
        std::mem::swap(&mut self.labels, &mut self.tmp_l);
        self.dedup(tol);
        if self.verts.len() < 3 {
            self.verts.clear();
            self.labels.clear();
            return false;
        }
        true
    }

    /// Drops vertices whose outgoing edge is shorter than `tol`.
    fn dedup(&mut self, tol: f64) {
        let tol2 = tol * tol;
        let mut i = 0;
        while self.verts.len() >= 2 && i < self.verts.len() {
            let j = (i + 1) % self.verts.len();
            if (self.verts[j] - self.verts[i]).norm2() <= tol2 {
                self.verts.remove(i);
                self.labels.remove(i);
            } else {
                i += 1;
            }
        }
    }

    fn finish(&mut self, shift: Vec2) -> LabeledCell {
        if self.verts.len() < 3 {
            return LabeledCell { polygon: ConvexPolygon::empty(), labels: Vec::new() };
        }
        let verts: Vec<Vec2> = self.verts.iter().map(|v| *v + shift).collect();
        let poly = ConvexPolygon::from_vertices_unchecked(verts);
        if poly.signed_area() <= 0.0 {
            return LabeledCell { polygon: ConvexPolygon::empty(), labels: Vec::new() };
        }
        LabeledCell { polygon: poly, labels: self.labels.clone() }
    }
}
