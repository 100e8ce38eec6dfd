//! Analytic incompressible flows used as boundary data and oracles.

use std::cell::RefCell;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{sample_map, DiscreteMap, Domain, DomainShape, Partition, SampleMode};
use crate::error::{Error, Result};
use crate::geom2d::Vec2;

/// Default number of RK4 steps over `[0, t_max]`.
pub const DEFAULT_RK4_STEPS: usize = 1024;

/// Largest tolerated exit from the exact domain during integration.
const EXIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticFlow {
    /// Rigid rotation of the unit disk, `v = (-x2, x1)`, `p = |x|²/2`.
    DiskRotation,
    /// `v = (-cos(pi x1) sin(pi x2), sin(pi x1) cos(pi x2))` on `[-1/2, 1/2]²`,
    /// `p = (sin²(pi x1) + sin²(pi x2)) / 2`.
    SquareBeltrami,
}

impl AnalyticFlow {
    pub fn name(&self) -> &'static str {
        match self {
            AnalyticFlow::DiskRotation => "disk_rotation",
            AnalyticFlow::SquareBeltrami => "square_beltrami",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "disk_rotation" => Ok(AnalyticFlow::DiskRotation),
            "square_beltrami" => Ok(AnalyticFlow::SquareBeltrami),
            other => Err(Error::InvalidInput(format!(
                "unknown flow {other:?}; expected \"disk_rotation\" or \"square_beltrami\""
            ))),
        }
    }

    pub fn domain_shape(&self) -> DomainShape {
        match self {
            AnalyticFlow::DiskRotation => DomainShape::UnitDisk,
            AnalyticFlow::SquareBeltrami => DomainShape::UnitSquare,
        }
    }

    pub fn velocity(&self, x: Vec2) -> Vec2 {
        match self {
            AnalyticFlow::DiskRotation => Vec2::new(-x.y, x.x),
            AnalyticFlow::SquareBeltrami => {
                let (a, b) = (PI * x.x, PI * x.y);
                Vec2::new(-a.cos() * b.sin(), a.sin() * b.cos())
            }
        }
    }

    pub fn pressure(&self, x: Vec2) -> f64 {
        match self {
            AnalyticFlow::DiskRotation => 0.5 * x.norm2(),
            AnalyticFlow::SquareBeltrami => 0.5 * ((PI * x.x).sin().powi(2) + (PI * x.y).sin().powi(2)),
        }
    }

    pub fn pressure_gradient(&self, x: Vec2) -> Vec2 {
        match self {
            AnalyticFlow::DiskRotation => x,
            AnalyticFlow::SquareBeltrami => Vec2::new((2.0 * PI * x.x).sin(), (2.0 * PI * x.y).sin()) * (0.5 * PI),
        }
    }

    /// Largest eigenvalue of the pressure Hessian over the domain.
    pub fn pressure_hessian_max_eig(&self) -> f64 {
        match self {
            AnalyticFlow::DiskRotation => 1.0,
            AnalyticFlow::SquareBeltrami => PI * PI,
        }
    }
}

/// The rotation by `theta`.
pub fn rotation_map(theta: f64) -> impl Fn(Vec2) -> Vec2 {
    move |x| x.rotate(theta)
}

/// Whether `t_max² ∇²p < pi² Id` strictly.
pub fn classical_threshold(flow: AnalyticFlow, t_max: f64) -> bool {
    flow.pressure_hessian_max_eig() * t_max * t_max < PI * PI
}

/// The time-`t_max` map of a flow, integrated with classical RK4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMap {
    pub flow: AnalyticFlow,
    pub t_max: f64,
    pub steps: usize,
}

fn rk4_step(flow: AnalyticFlow, x: Vec2, h: f64) -> Vec2 {
    let k1 = flow.velocity(x);
    let k2 = flow.velocity(x + k1 * (0.5 * h));
    let k3 = flow.velocity(x + k2 * (0.5 * h));
    let k4 = flow.velocity(x + k3 * h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn exact_excess(shape: DomainShape, p: Vec2) -> f64 {
    match shape {
        DomainShape::UnitSquare => p.x.abs().max(p.y.abs()) - 0.5,
        DomainShape::UnitDisk => p.norm() - 1.0,
    }
}

impl FlowMap {
    /// Positions at `t_max * k / nodes` for `k = 0..=nodes`.
    pub fn trajectory(&self, x0: Vec2, nodes: usize) -> Result<Vec<Vec2>> {
        if self.steps == 0 || nodes == 0 {
            return Err(Error::InvalidInput("integration needs at least one step".into()));
        }
        let shape = self.flow.domain_shape();
        let allowed = exact_excess(shape, x0).max(0.0) + EXIT_TOL;
        let sub = self.steps.div_ceil(nodes);
        let h = self.t_max / (sub * nodes) as f64;
        let mut out = Vec::with_capacity(nodes + 1);
        let mut x = x0;
        out.push(x);
        for _ in 0..nodes {
            for _ in 0..sub {
                x = rk4_step(self.flow, x, h);
                let excess = exact_excess(shape, x);
                if excess > allowed {
                    return Err(Error::LeftDomain { excess });
                }
            }
            out.push(x);
        }
        Ok(out)
    }

    pub fn apply(&self, x0: Vec2) -> Result<Vec2> {
        Ok(*self.trajectory(x0, 1)?.last().expect("trajectory has two nodes"))
    }
}

pub fn integrate_map(flow: AnalyticFlow, t_max: f64, steps: usize) -> FlowMap {
    FlowMap { flow, t_max, steps }
}

/// Samples the time-`t_max` map on a partition. The rotation uses its closed
/// form; other flows are integrated with RK4.
pub fn boundary_map(flow: AnalyticFlow, t_max: f64, partition: &Partition, mode: SampleMode) -> Result<DiscreteMap> {
    if flow == AnalyticFlow::DiskRotation {
        return sample_map(rotation_map(t_max), partition, mode);
    }
    let map = integrate_map(flow, t_max, DEFAULT_RK4_STEPS);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let sampled = sample_map(
        |x| match map.apply(x) {
            Ok(y) => y,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Vec2::new(f64::NAN, f64::NAN)
            }
        },
        partition,
        mode,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => sampled,
    }
}

/// Classical particle paths from every barycenter, at `nodes + 1` equally
/// spaced times in `[0, t_max]`; `out[i][j]` is particle `j` at node `i`.
pub fn classical_paths(flow: AnalyticFlow, t_max: f64, partition: &Partition, nodes: usize) -> Result<Vec<Vec<Vec2>>> {
    let map = integrate_map(flow, t_max, DEFAULT_RK4_STEPS);
    let per_particle: Vec<Vec<Vec2>> =
        partition.barycenters.iter().map(|&x| map.trajectory(x, nodes)).collect::<Result<_>>()?;
    Ok((0..=nodes).map(|i| per_particle.iter().map(|p| p[i]).collect()).collect())
}

/// The domain a flow lives on.
pub fn flow_domain(flow: AnalyticFlow, disk_sides: usize) -> Result<Domain> {
    match flow.domain_shape() {
        DomainShape::UnitSquare => Ok(Domain::unit_square()),
        DomainShape::UnitDisk => Domain::unit_disk(disk_sides),
    }
}

/// One path of the explicit generalized solution for the disk inversion:
/// `x cos(pi t) + v sin(pi t)`, `t in [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrenierDiskSample {
    pub x: Vec2,
    pub v: Vec2,
}

impl BrenierDiskSample {
    pub fn at(&self, t: f64) -> Vec2 {
        let (s, c) = (PI * t).sin_cos();
        self.x * c + self.v * s
    }

    pub fn velocity(&self, t: f64) -> Vec2 {
        let (s, c) = (PI * t).sin_cos();
        (self.v * c - self.x * s) * PI
    }

    /// Positions at `t = i / intervals`, `i = 0..=intervals`.
    pub fn nodes(&self, intervals: usize) -> Vec<Vec2> {
        (0..=intervals).map(|i| self.at(i as f64 / intervals as f64)).collect()
    }
}

/// `x` uniform on the unit disk, `v` uniform on the circle of radius
/// `sqrt(1 - |x|²)`.
pub fn brenier_disk_sampler(n: usize, seed: u64) -> Vec<BrenierDiskSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = rng.gen::<f64>().sqrt();
            let x = Vec2::from_angle(rng.gen_range(0.0..2.0 * PI)) * r;
            let v = Vec2::from_angle(rng.gen_range(0.0..2.0 * PI)) * (1.0 - r * r).max(0.0).sqrt();
            BrenierDiskSample { x, v }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_partition;

    #[test]
    fn rotation_basics() {
        let p = Vec2::new(0.3, -0.4);
        assert_eq!(rotation_map(0.0)(p), p);
        assert!((rotation_map(PI)(p) + p).norm() < 1e-15);
        assert_eq!(AnalyticFlow::DiskRotation.pressure_hessian_max_eig(), 1.0);
        assert!((AnalyticFlow::DiskRotation.pressure(p) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn beltrami_values() {
        let f = AnalyticFlow::SquareBeltrami;
        assert_eq!(f.velocity(Vec2::ZERO), Vec2::ZERO);
        assert!((f.velocity(Vec2::new(0.25, 0.25)) - Vec2::new(-0.5, 0.5)).norm() < 1e-15);
        assert!((f.pressure_hessian_max_eig() - PI * PI).abs() < 1e-15);
    }

    #[test]
    fn velocities_are_tangent() {
        for k in 0..1000 {
            let a = 2.0 * PI * k as f64 / 1000.0;
            let x = Vec2::from_angle(a);
            assert!(AnalyticFlow::DiskRotation.velocity(x).dot(x).abs() <= 1e-9);
            // walk the square boundary
            let s = 4.0 * k as f64 / 1000.0;
            let (p, n) = match s as usize {
                0 => (Vec2::new(-0.5 + s.fract(), -0.5), Vec2::new(0.0, -1.0)),
                1 => (Vec2::new(0.5, -0.5 + s.fract()), Vec2::new(1.0, 0.0)),
                2 => (Vec2::new(0.5 - s.fract(), 0.5), Vec2::new(0.0, 1.0)),
                _ => (Vec2::new(-0.5, 0.5 - s.fract()), Vec2::new(-1.0, 0.0)),
            };
            assert!(AnalyticFlow::SquareBeltrami.velocity(p).dot(n).abs() <= 1e-9);
        }
    }

    #[test]
    fn pressure_gradient_matches_finite_differences() {
        for f in [AnalyticFlow::DiskRotation, AnalyticFlow::SquareBeltrami] {
            let x = Vec2::new(0.13, -0.27);
            let h = 1e-6;
            let fd = Vec2::new(
                (f.pressure(x + Vec2::new(h, 0.0)) - f.pressure(x - Vec2::new(h, 0.0))) / (2.0 * h),
                (f.pressure(x + Vec2::new(0.0, h)) - f.pressure(x - Vec2::new(0.0, h))) / (2.0 * h),
            );
            assert!((fd - f.pressure_gradient(x)).norm() < 1e-8);
        }
    }

    #[test]
    fn rk4_rotation_is_accurate() {
        let d = Domain::unit_disk(256).unwrap();
        let p = build_partition(&d, 48).unwrap();
        let m = integrate_map(AnalyticFlow::DiskRotation, PI / 2.0, 1024);
        for &b in &p.barycenters {
            assert!((m.apply(b).unwrap() - b.rotate(PI / 2.0)).norm() <= 1e-10);
        }
        let zero = integrate_map(AnalyticFlow::SquareBeltrami, 0.0, 16);
        assert_eq!(zero.apply(Vec2::new(0.1, 0.2)).unwrap(), Vec2::new(0.1, 0.2));
    }

    #[test]
    fn beltrami_preserves_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t_max in [0.9, 1.5] {
            let m = integrate_map(AnalyticFlow::SquareBeltrami, t_max, 1024);
            let h = 1e-5;
            for _ in 0..20 {
                let x = Vec2::new(rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.45));
                let dx = (m.apply(x + Vec2::new(h, 0.0)).unwrap() - m.apply(x - Vec2::new(h, 0.0)).unwrap()) / (2.0 * h);
                let dy = (m.apply(x + Vec2::new(0.0, h)).unwrap() - m.apply(x - Vec2::new(0.0, h)).unwrap()) / (2.0 * h);
                assert!((dx.cross(dy) - 1.0).abs() < 1e-3, "t_max={t_max} det={}", dx.cross(dy));
            }
        }
    }

    #[test]
    fn thresholds() {
        assert!(classical_threshold(AnalyticFlow::DiskRotation, PI / 2.0));
        assert!(!classical_threshold(AnalyticFlow::DiskRotation, PI));
        assert!(classical_threshold(AnalyticFlow::SquareBeltrami, 0.9));
        assert!(!classical_threshold(AnalyticFlow::SquareBeltrami, 1.1));
        assert!(!classical_threshold(AnalyticFlow::SquareBeltrami, 1.5));
    }

    #[test]
    fn brenier_paths() {
        let samples = brenier_disk_sampler(20_000, 4);
        let mut action = 0.0;
        for s in &samples {
            assert!((s.at(1.0) + s.at(0.0)).norm() < 1e-12);
            for k in 0..=16 {
                assert!(s.at(k as f64 / 16.0).norm() <= 1.0 + 1e-12);
            }
            // exact time average of |velocity|²
            action += PI * PI * 0.5 * (s.x.norm2() + s.v.norm2());
        }
        action /= samples.len() as f64;
        assert!((action - PI * PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn flow_names_roundtrip() {
        for f in [AnalyticFlow::DiskRotation, AnalyticFlow::SquareBeltrami] {
            assert_eq!(AnalyticFlow::from_name(f.name()).unwrap(), f);
        }
        assert!(AnalyticFlow::from_name("torus").is_err());
    }

    #[test]
    fn boundary_maps() {
        let d = Domain::unit_square();
        let p = build_partition(&d, 16).unwrap();
        let s = boundary_map(AnalyticFlow::SquareBeltrami, 0.9, &p, SampleMode::Barycenter).unwrap();
        assert_eq!(s.len(), 16);
        let paths = classical_paths(AnalyticFlow::SquareBeltrami, 0.9, &p, 4).unwrap();
        for (a, b) in paths[4].iter().zip(&s.values) {
            assert!((*a - *b).norm() < 1e-9);
        }
    }
}
