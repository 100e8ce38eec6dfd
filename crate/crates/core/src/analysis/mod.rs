//! Reading a chain as a generalized flow, and the analyses run on it.

mod clustering;
mod dimension;
mod pressure;

pub use clustering::{kmeans, KmeansResult};
pub use dimension::{box_dimension, covering_radius_check, farthest_point_sampling, BoxDimension, CoveringCheck, FpsResult};
pub use pressure::{incompressibility_residual, pressure_field, PressureSample, ResidualReport};

use serde::{Deserialize, Serialize};

use crate::energy::Chain;
use crate::error::{Error, Result};
use crate::flows::BrenierDiskSample;
use crate::geom2d::Vec2;

/// A piecewise-linear path through `T + 1` equally spaced nodes on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub nodes: Vec<Vec2>,
}

impl Trajectory {
    pub fn new(nodes: Vec<Vec2>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput("a trajectory needs at least two nodes".into()));
        }
        Ok(Self { nodes })
    }

    pub fn t(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Linear interpolation at `s in [0, 1]`.
    pub fn at(&self, s: f64) -> Vec2 {
        let t = self.t();
        let u = (s.clamp(0.0, 1.0) * t as f64).min(t as f64);
        let i = (u.floor() as usize).min(t - 1);
        self.nodes[i].lerp(self.nodes[i + 1], u - i as f64)
    }

    /// `∫₀¹ ω`.
    pub fn mean(&self) -> Vec2 {
        let t = self.t() as f64;
        self.nodes.windows(2).fold(Vec2::ZERO, |acc, w| acc + (w[0] + w[1]) / (2.0 * t))
    }

    /// Coordinates in which the Euclidean inner product is [`h1_inner`]:
    /// the mean followed by `sqrt(T)` times each increment.
    pub fn h1_features(&self) -> Vec<f64> {
        let scale = (self.t() as f64).sqrt();
        let mean = self.mean();
        let mut out = Vec::with_capacity(2 * self.nodes.len());
        out.extend([mean.x, mean.y]);
        for w in self.nodes.windows(2) {
            let d = (w[1] - w[0]) * scale;
            out.extend([d.x, d.y]);
        }
        out
    }
}

/// `⟨∫a, ∫b⟩ + ∫⟨ȧ, ḃ⟩` evaluated exactly on piecewise-linear paths.
pub fn h1_inner(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.t() != b.t() {
        return Err(Error::InvalidInput(format!("trajectories have {} and {} intervals", a.t(), b.t())));
    }
    let t = a.t() as f64;
    let slopes: f64 = a
        .nodes
        .windows(2)
        .zip(b.nodes.windows(2))
        .map(|(u, v)| (u[1] - u[0]).dot(v[1] - v[0]))
        .sum();
    Ok(a.mean().dot(b.mean()) + t * slopes)
}

/// Equally weighted trajectories sharing one time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedFlow {
    pub trajectories: Vec<Trajectory>,
    pub t: usize,
}

impl GeneralizedFlow {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first = trajectories.first().ok_or_else(|| Error::InvalidInput("a flow needs at least one trajectory".into()))?;
        let t = first.t();
        if let Some(bad) = trajectories.iter().position(|tr| tr.t() != t) {
            return Err(Error::InvalidInput(format!("trajectory {bad} has {} intervals, expected {t}", trajectories[bad].t())));
        }
        Ok(Self { trajectories, t })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// All particle positions at time `s`.
    pub fn snapshot(&self, s: f64) -> Vec<Vec2> {
        self.trajectories.iter().map(|tr| tr.at(s)).collect()
    }

    /// Row-major H¹ feature matrix, one row per trajectory.
    pub fn h1_embedding(&self) -> H1Embedding {
        let dim = 2 * (self.t + 1);
        let data = self.trajectories.iter().flat_map(|tr| tr.h1_features()).collect();
        H1Embedding { dim, data }
    }

    /// Paths of the explicit disk-inversion solution sampled at `t + 1` nodes.
    pub fn from_brenier(samples: &[BrenierDiskSample], t: usize) -> Result<Self> {
        Self::new(samples.iter().map(|s| Trajectory { nodes: s.nodes(t) }).collect())
    }

    /// Indices of trajectories starting inside the closed disk.
    pub fn starting_in_disk(&self, center: Vec2, radius: f64) -> Vec<usize> {
        (0..self.len()).filter(|&j| (self.trajectories[j].nodes[0] - center).norm() <= radius).collect()
    }

    /// Area of the bounding box of every node of the selected trajectories.
    pub fn bundle_bbox_area(&self, indices: &[usize]) -> f64 {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in indices.iter().flat_map(|&j| &self.trajectories[j].nodes) {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if lo.x > hi.x {
            return 0.0;
        }
        (hi.x - lo.x) * (hi.y - lo.y)
    }
}

/// Trajectory `j` visits `m_0^j, ..., m_T^j`.
pub fn extract_flow(chain: &Chain) -> GeneralizedFlow {
    let trajectories = (0..chain.n())
        .map(|j| Trajectory { nodes: chain.maps.iter().map(|m| m.values[j]).collect() })
        .collect();
    GeneralizedFlow { trajectories, t: chain.t() }
}

/// Trajectories as points of a Euclidean space with the H¹ geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct H1Embedding {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl H1Embedding {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Maps `f` over `0..n`, in parallel when enabled; the output order is fixed.
pub(crate) fn map_indices<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
