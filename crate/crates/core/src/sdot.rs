//! Semi-discrete optimal transport from `N` equal Diracs to the uniform
//! measure on a convex domain.
//!
//! The Kantorovich dual is maximized over one weight per Dirac with a damped
//! Newton method. The Hessian of the dual is minus the weighted graph
//! Laplacian of the Laguerre diagram, with edge weights
//! `length(shared edge) / (2 |x_j - x_k| |X|)`; each Newton system is solved
//! by Jacobi-preconditioned conjugate gradients.

use serde::{Deserialize, Serialize};

use crate::domain::{find_coincident, DiscreteMap, Domain};
use crate::error::{Error, Result};
use crate::geom2d::{cell_moments_rel, transport_integrand, PowerDiagram, PowerSite, Vec2};

/// Two map values closer than this are treated as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-10;

/// Kantorovich potentials `f_j`, normalized to zero sum.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DualWeights {
    pub f: Vec<f64>,
}

impl DualWeights {
    pub fn zeros(n: usize) -> Self {
        Self { f: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    fn normalize(&mut self) {
        let mean = self.f.iter().sum::<f64>() / self.f.len().max(1) as f64;
        self.f.iter_mut().for_each(|v| *v -= mean);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdotOptions {
    /// Stop once every `|mass_j - 1/N|` is below this; `None` means `1e-7 / N`.
    pub mass_tol: Option<f64>,
    pub max_newton: usize,
    pub max_halvings: usize,
    pub coincidence_tol: f64,
}

impl Default for SdotOptions {
    fn default() -> Self {
        Self { mass_tol: None, max_newton: 50, max_halvings: 30, coincidence_tol: COINCIDENCE_TOL }
    }
}

impl SdotOptions {
    pub fn mass_tol_for(&self, n: usize) -> f64 {
        self.mass_tol.unwrap_or(1e-7 / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    /// `W₂²(mu, Leb)` from the primal sum over cells.
    pub cost: f64,
    /// Dual objective at the returned weights.
    pub dual_value: f64,
    pub weights: DualWeights,
    pub diagram: PowerDiagram,
    /// Normalized cell areas.
    pub cell_masses: Vec<f64>,
    pub cell_barycenters: Vec<Vec2>,
    pub newton_iterations: usize,
    pub max_mass_error: f64,
}

impl TransportResult {
    /// Gradient of `W₂²(m # Leb, Leb)` with respect to each site position:
    /// `(2/N)(x_j - bary_j)`.
    pub fn site_gradient(&self, points: &[Vec2]) -> Vec<Vec2> {
        let n = points.len() as f64;
        points.iter().zip(&self.cell_barycenters).map(|(x, b)| (*x - *b) * (2.0 / n)).collect()
    }
}

struct Evaluation {
    diagram: PowerDiagram,
    masses: Vec<f64>,
}

fn evaluate(points: &[Vec2], f: &[f64], domain: &Domain) -> Result<Evaluation> {
    let sites: Vec<PowerSite> = points.iter().zip(f).map(|(&p, &w)| PowerSite::new(p, w)).collect();
    let diagram = PowerDiagram::build(&sites, &domain.polygon)?;
    let masses = diagram.cells.iter().map(|c| c.polygon.area().max(0.0) / domain.total_area).collect();
    Ok(Evaluation { diagram, masses })
}

fn sup_residual(masses: &[f64]) -> f64 {
    let target = 1.0 / masses.len() as f64;
    masses.iter().map(|m| (target - m).abs()).fold(0.0, f64::max)
}

/// Cold-start weights. Points that are well spread inside the domain start
/// from zero weights. Otherwise the weights are chosen so that the Laguerre
/// cells are the Voronoi cells of the points recentred and rescaled to fill
/// the domain: `w_j = |x_j|² - beta |x_j - c|²` reproduces the Voronoi
/// diagram of `beta (x_j - c)`, so no cell starts out empty or tiny.
fn cold_start(points: &[Vec2], domain: &Domain) -> Vec<f64> {
    let n = points.len() as f64;
    let c = points.iter().fold(Vec2::ZERO, |a, &p| a + p) / n;
    let reach = points.iter().map(|&p| domain.polygon.gauge(p)).fold(0.0, f64::max);
    let spread = points.iter().map(|&p| domain.polygon.gauge(p - c)).fold(0.0, f64::max);
    if reach < 1.0 && spread >= 0.25 || spread == 0.0 {
        return vec![0.0; points.len()];
    }
    let beta = 0.9 / spread;
    points.iter().map(|&p| p.norm2() - beta * (p - c).norm2()).collect()
}

/// Symmetric Laplacian in CSR form with its diagonal.
struct Laplacian {
    starts: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl Laplacian {
    fn assemble(points: &[Vec2], diagram: &PowerDiagram, total_area: f64) -> Self {
        let n = points.len();
        let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(6 * n);
        for (j, cell) in diagram.cells.iter().enumerate() {
            for (k, len) in cell.neighbors() {
                if k != j {
                    edges.push((j.min(k), j.max(k), len));
                }
            }
        }
        edges.sort_by_key(|e| (e.0, e.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len() / 2 + 1);
        let mut i = 0;
        while i < edges.len() {
            let (a, b, _) = edges[i];
            let (mut sum, mut count) = (0.0, 0.0);
            while i < edges.len() && edges[i].0 == a && edges[i].1 == b {
                sum += edges[i].2;
                count += 1.0;
                i += 1;
            }
            let w = (sum / count) / (2.0 * (points[a] - points[b]).norm() * total_area);
            if w > 0.0 && w.is_finite() {
                merged.push((a, b, w));
            }
        }
        let mut degree = vec![0usize; n + 1];
        for &(a, b, _) in &merged {
            degree[a + 1] += 1;
            degree[b + 1] += 1;
        }
        for i in 1..=n {
            degree[i] += degree[i - 1];
        }
        let starts = degree.clone();
        let mut fill = degree;
        let mut cols = vec![0; 2 * merged.len()];
        let mut vals = vec![0.0; 2 * merged.len()];
        let mut diag = vec![0.0; n];
        for &(a, b, w) in &merged {
            cols[fill[a]] = b;
            vals[fill[a]] = w;
            fill[a] += 1;
            cols[fill[b]] = a;
            vals[fill[b]] = w;
            fill[b] += 1;
            diag[a] += w;
            diag[b] += w;
        }
        Self { starts, cols, vals, diag }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[j] * x[j];
            for p in self.starts[j]..self.starts[j + 1] {
                acc -= self.vals[p] * x[self.cols[p]];
            }
            *o = acc;
        }
    }

    /// Solves `L x = b` after projecting `b` onto zero-sum vectors; returns
    /// the zero-mean solution.
    fn solve(&self, b: &[f64], rel_tol: f64) -> Vec<f64> {
        let n = b.len();
        let inv_diag: Vec<f64> = self.diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        let mut x = vec![0.0; n];
        // rounding leaves a component along the constants, which L cannot
        // reach; left in place it stalls CG far above the tolerance
        let mut r = b.to_vec();
        remove_mean(&mut r);
        let b = r.clone();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return x;
        }
        for _ in 0..(4 * n + 100) {
            self.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            remove_mean(&mut r);
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r_norm <= rel_tol * b_norm {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        remove_mean(&mut x);
        x
    }
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Damped Newton iterations from the weights `f`.
fn newton(
    points: &[Vec2],
    domain: &Domain,
    options: &SdotOptions,
    mass_tol: f64,
    mut f: Vec<f64>,
) -> Result<(Vec<f64>, Evaluation, f64, usize)> {
    let target = 1.0 / points.len() as f64;
    let mut eval = evaluate(points, &f, domain)?;
    let mut residual = sup_residual(&eval.masses);
    let min_mass = eval.masses.iter().copied().fold(f64::INFINITY, f64::min);
    if min_mass <= 1e-14 * target {
        return Err(Error::NoConvergence { iterations: 0, residual });
    }
    // cells may never shrink below half of their initial minimum
    let floor = 0.5 * min_mass.min(target);
    let mut iterations = 0;
    while residual > mass_tol {
        if iterations >= options.max_newton {
            return Err(Error::NoConvergence { iterations, residual });
        }
        iterations += 1;
        let lap = Laplacian::assemble(points, &eval.diagram, domain.total_area);
        let rhs: Vec<f64> = eval.masses.iter().map(|m| target - m).collect();
        let step = lap.solve(&rhs, 1e-11);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let trial: Vec<f64> = f.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            let e = evaluate(points, &trial, domain)?;
            let r = sup_residual(&e.masses);
            let min_m = e.masses.iter().copied().fold(f64::INFINITY, f64::min);
            if min_m >= floor && r <= (1.0 - 0.5 * t) * residual {
                accepted = Some((trial, e, r));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, e, r)) = accepted else {
            return Err(Error::NoConvergence { iterations, residual });
        };
        f = trial;
        eval = e;
        residual = r;
    }
    Ok((f, eval, residual, iterations))
}

/// Maximizes the Kantorovich dual between `(1/N) Σ δ_{x_j}` and the uniform
/// measure on the domain.
pub fn solve_dual(
    points: &[Vec2],
    domain: &Domain,
    options: &SdotOptions,
    warm_start: Option<&DualWeights>,
) -> Result<TransportResult> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidInput("transport needs at least one point".into()));
    }
    if let Some(cell) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite { cell });
    }
    if let Some((i, j)) = find_coincident(points, options.coincidence_tol) {
        return Err(Error::CoincidentPoints { i, j, tol: options.coincidence_tol });
    }
    let mass_tol = options.mass_tol_for(n);
    if !(mass_tol > 0.0) {
        return Err(Error::InvalidInput(format!("mass tolerance must be positive, got {mass_tol}")));
    }
    let target = 1.0 / n as f64;

    let warm = warm_start.filter(|w| w.len() == n);
    let (f, eval, residual, iterations) = match warm {
        Some(w) => match newton(points, domain, options, mass_tol, w.f.clone()) {
            Ok(done) => done,
            Err(_) => newton(points, domain, options, mass_tol, cold_start(points, domain))?,
        },
        None => newton(points, domain, options, mass_tol, cold_start(points, domain))?,
    };

    let mut weights = DualWeights { f };
    weights.normalize();
    let mut cost = 0.0;
    let mut barycenters = Vec::with_capacity(n);
    for (cell, &x) in eval.diagram.cells.iter().zip(points) {
        let m = cell_moments_rel(&cell.polygon, domain.total_area);
        barycenters.push(m.barycenter().unwrap_or(x));
        cost += transport_integrand(&cell.polygon, x);
    }
    cost /= domain.total_area;
    let dual_value = cost + weights.f.iter().zip(&eval.masses).map(|(fj, m)| fj * (target - m)).sum::<f64>();
    Ok(TransportResult {
        cost,
        dual_value,
        weights,
        diagram: eval.diagram,
        cell_masses: eval.masses,
        cell_barycenters: barycenters,
        newton_iterations: iterations,
        max_mass_error: residual,
    })
}

/// `d²(m, S) = W₂²(m # Leb, Leb)`.
pub fn dist2_s(m: &DiscreteMap, domain: &Domain) -> Result<f64> {
    Ok(solve_dual(&m.values, domain, &SdotOptions::default(), None)?.cost)
}

/// Coordinate gradient of [`dist2_s`]: component `j` is `(2/N)(x_j - bary_j)`.
pub fn grad_dist2_s(m: &DiscreteMap, domain: &Domain) -> Result<Vec<Vec2>> {
    let res = solve_dual(&m.values, domain, &SdotOptions::default(), None)?;
    Ok(res.site_gradient(&m.values))
}
