//! The penalized discrete action of a chain of maps and its gradient.
//!
//! For a chain `m_0, ..., m_T` on a partition with `N` cells,
//!
//! ```text
//! E = T Σ_i ‖m_{i+1} - m_i‖² + λ (‖m_0 - s_*‖² + ‖m_T - s^*‖² + Σ_{0<i<T} d²_S(m_i))
//! ```
//!
//! with `‖m‖² = (1/N) Σ_j |m_j|²`. Gradients are taken with respect to the raw
//! coordinates of every map value, so they carry the `1/N` of the norm.

use serde::{Deserialize, Serialize};

use crate::domain::{DiscreteMap, Domain};
use crate::error::{Error, Result};
use crate::geom2d::Vec2;
use crate::sdot::{solve_dual, DualWeights, SdotOptions, TransportResult};

/// `T + 1` maps on one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub maps: Vec<DiscreteMap>,
}

impl Chain {
    pub fn new(maps: Vec<DiscreteMap>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidInput("a chain needs at least two maps".into()));
        }
        for m in &maps[1..] {
            maps[0].check_same(m)?;
        }
        Ok(Self { maps })
    }

    /// Number of time intervals.
    pub fn t(&self) -> usize {
        self.maps.len() - 1
    }

    /// Number of cells.
    pub fn n(&self) -> usize {
        self.maps[0].len()
    }

    /// Kinetic term `T Σ ‖m_{i+1} - m_i‖²`.
    pub fn kinetic(&self) -> f64 {
        let n = self.n() as f64;
        let sum: f64 = self
            .maps
            .windows(2)
            .map(|w| w[0].values.iter().zip(&w[1].values).map(|(a, b)| (*b - *a).norm2()).sum::<f64>())
            .sum();
        self.t() as f64 * sum / n
    }

    /// Coordinates as `[m_0.x_0, m_0.y_0, m_0.x_1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.maps.iter().flat_map(|m| m.values.iter().flat_map(|v| [v.x, v.y])).collect()
    }

    /// Replaces all coordinates from a vector laid out as in [`Chain::to_flat`].
    pub fn set_flat(&mut self, x: &[f64]) {
        let n = self.n();
        for (i, m) in self.maps.iter_mut().enumerate() {
            for (j, v) in m.values.iter_mut().enumerate() {
                let k = 2 * (i * n + j);
                *v = Vec2::new(x[k], x[k + 1]);
            }
        }
    }
}

/// Flattens per-map gradients in the layout of [`Chain::to_flat`].
pub fn flatten_gradient(grad: &[Vec<Vec2>]) -> Vec<f64> {
    grad.iter().flat_map(|g| g.iter().flat_map(|v| [v.x, v.y])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub t: usize,
    pub lambda: f64,
    pub kinetic: f64,
    pub boundary0: f64,
    pub boundary1: f64,
    /// `d²_S(m_i)` for `i = 1..T-1`.
    pub incompressibility: Vec<f64>,
    pub total: f64,
    /// `(1 + 4T/λ) E`.
    pub e_prime: f64,
}

impl EnergyBreakdown {
    fn assemble(t: usize, lambda: f64, kinetic: f64, b0: f64, b1: f64, inc: Vec<f64>) -> Self {
        let total = kinetic + lambda * (b0 + b1 + inc.iter().sum::<f64>());
        Self {
            t,
            lambda,
            kinetic,
            boundary0: b0,
            boundary1: b1,
            incompressibility: inc,
            total,
            e_prime: e_prime(total, t, lambda),
        }
    }
}

/// `E' = (1 + 4T/λ) E`.
pub fn e_prime(total: f64, t: usize, lambda: f64) -> f64 {
    (1.0 + 4.0 * t as f64 / lambda) * total
}

/// Boundary data and parameters shared by all evaluations of one problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: Domain,
    pub s_star: DiscreteMap,
    pub s_end: DiscreteMap,
    pub lambda: f64,
    pub sdot: SdotOptions,
}

impl Problem {
    pub fn new(domain: Domain, s_star: DiscreteMap, s_end: DiscreteMap, lambda: f64) -> Result<Self> {
        s_star.check_same(&s_end)?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("penalty must be finite and non-negative, got {lambda}")));
        }
        Ok(Self { domain, s_star, s_end, lambda, sdot: SdotOptions::default() })
    }
}

/// Energy, gradient and the transport solutions of the interior maps.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub breakdown: EnergyBreakdown,
    /// One gradient map per chain map.
    pub gradient: Vec<Vec<Vec2>>,
    /// Transport solutions for `m_1, ..., m_{T-1}`.
    pub transport: Vec<TransportResult>,
}

impl Evaluation {
    pub fn weights(&self) -> Vec<DualWeights> {
        self.transport.iter().map(|t| t.weights.clone()).collect()
    }
}

fn solve_interior(
    chain: &Chain,
    problem: &Problem,
    warm: Option<&[DualWeights]>,
) -> Result<Vec<TransportResult>> {
    let t = chain.t();
    let solve = |i: usize| {
        let w = warm.and_then(|w| w.get(i - 1));
        solve_dual(&chain.maps[i].values, &problem.domain, &problem.sdot, w)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (1..t).into_par_iter().map(solve).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (1..t).map(solve).collect()
    }
}

/// Energy and gradient with optional warm starts for the interior transport
/// problems (indexed from `m_1`).
pub fn evaluate(chain: &Chain, problem: &Problem, warm: Option<&[DualWeights]>) -> Result<Evaluation> {
    chain.maps[0].check_same(&problem.s_star)?;
    let t = chain.t();
    let n = chain.n();
    let inv_n = 1.0 / n as f64;
    let lambda = problem.lambda;
    let transport = if lambda > 0.0 { solve_interior(chain, problem, warm)? } else { Vec::new() };

    let last = &chain.maps[t];
    let b0 = chain.maps[0].dist2(&problem.s_star)?;
    let b1 = last.dist2(&problem.s_end)?;
    let inc: Vec<f64> = transport.iter().map(|r| r.cost).collect();
    let inc = if lambda > 0.0 { inc } else { vec![0.0; t.saturating_sub(1)] };
    let breakdown = EnergyBreakdown::assemble(t, lambda, chain.kinetic(), b0, b1, inc);

    let kin = 2.0 * t as f64 * inv_n;
    let mut gradient = Vec::with_capacity(t + 1);
    for i in 0..=t {
        let vals = &chain.maps[i].values;
        let mut g: Vec<Vec2> = (0..n)
            .map(|j| {
                let mut acc = Vec2::ZERO;
                if i > 0 {
                    acc += vals[j] - chain.maps[i - 1].values[j];
                }
                if i < t {
                    acc += vals[j] - chain.maps[i + 1].values[j];
                }
                acc * kin
            })
            .collect();
        let bnd = 2.0 * lambda * inv_n;
        if i == 0 {
            for (gj, (m, s)) in g.iter_mut().zip(vals.iter().zip(&problem.s_star.values)) {
                *gj += (*m - *s) * bnd;
            }
        }
        if i == t {
            for (gj, (m, s)) in g.iter_mut().zip(vals.iter().zip(&problem.s_end.values)) {
                *gj += (*m - *s) * bnd;
            }
        }
        if i > 0 && i < t && lambda > 0.0 {
            for (gj, d) in g.iter_mut().zip(transport[i - 1].site_gradient(vals)) {
                *gj += d * lambda;
            }
        }
        gradient.push(g);
    }
    Ok(Evaluation { breakdown, gradient, transport })
}

/// Energy breakdown of a chain.
pub fn energy(chain: &Chain, lambda: f64, s_star: &DiscreteMap, s_end: &DiscreteMap, domain: &Domain) -> Result<EnergyBreakdown> {
    let problem = Problem::new(domain.clone(), s_star.clone(), s_end.clone(), lambda)?;
    Ok(evaluate(chain, &problem, None)?.breakdown)
}

/// Gradient of [`energy`] with respect to every map value.
pub fn energy_grad(
    chain: &Chain,
    lambda: f64,
    s_star: &DiscreteMap,
    s_end: &DiscreteMap,
    domain: &Domain,
) -> Result<Vec<Vec<Vec2>>> {
    let problem = Problem::new(domain.clone(), s_star.clone(), s_end.clone(), lambda)?;
    Ok(evaluate(chain, &problem, None)?.gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_partition, sample_map, SampleMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> (Domain, crate::domain::Partition) {
        let d = Domain::unit_square();
        let p = build_partition(&d, n).unwrap();
        (d, p)
    }

    #[test]
    fn endpoints_only() {
        let (d, p) = grid(9);
        let s0 = p.identity_map();
        let s1 = sample_map(|x| x * 0.5, &p, SampleMode::Barycenter).unwrap();
        let chain = Chain::new(vec![s0.clone(), s1.clone()]).unwrap();
        let e = energy(&chain, 5.0, &s0, &s1, &d).unwrap();
        assert_eq!(e.boundary0, 0.0);
        assert_eq!(e.boundary1, 0.0);
        assert!(e.incompressibility.is_empty());
        assert!((e.total - s0.dist2(&s1).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn constant_grid_chain() {
        let (d, p) = grid(16);
        let s = p.identity_map();
        let chain = Chain::new(vec![s.clone(); 5]).unwrap();
        let e = energy(&chain, 1.0, &s, &s, &d).unwrap();
        assert_eq!(e.kinetic, 0.0);
        assert!((e.total - 3.0 / (6.0 * 16.0)).abs() < 1e-12);
        assert!((e.e_prime - 17.0 * e.total).abs() < 1e-12);
        let g = energy_grad(&chain, 1.0, &s, &s, &d).unwrap();
        assert!(g.iter().flatten().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn zero_lambda_is_kinetic_only() {
        let (d, p) = grid(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let maps: Vec<DiscreteMap> = (0..4)
            .map(|_| DiscreteMap::new((0..4).map(|_| Vec2::new(rng.gen(), rng.gen())).collect(), p.id).unwrap())
            .collect();
        let s = p.identity_map();
        let chain = Chain::new(maps).unwrap();
        let e = energy(&chain, 0.0, &s, &s, &d).unwrap();
        assert_eq!(e.total, e.kinetic);
    }

    #[test]
    fn affine_chain_has_no_interior_kinetic_gradient() {
        let (d, p) = grid(4);
        let a = p.identity_map();
        let maps: Vec<DiscreteMap> = (0..5)
            .map(|i| sample_map(|x| x + Vec2::new(0.1 * i as f64, -0.05 * i as f64), &p, SampleMode::Barycenter).unwrap())
            .collect();
        let chain = Chain::new(maps).unwrap();
        let g = energy_grad(&chain, 0.0, &a, &a, &d).unwrap();
        for gi in &g[1..4] {
            assert!(gi.iter().all(|v| v.norm() < 1e-14));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (d, p) = grid(9);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut maps = Vec::new();
        for _ in 0..4 {
            let v = (0..9).map(|_| Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
            maps.push(DiscreteMap::new(v, p.id).unwrap());
        }
        let s0 = p.identity_map();
        let s1 = sample_map(|x| -x, &p, SampleMode::Barycenter).unwrap();
        let chain = Chain::new(maps).unwrap();
        let mut problem = Problem::new(d.clone(), s0, s1, 2.0).unwrap();
        problem.sdot.mass_tol = Some(1e-14);
        let base = evaluate(&chain, &problem, None).unwrap();
        let x0 = chain.to_flat();
        let g = flatten_gradient(&base.gradient);
        let h = 1e-6;
        for k in (0..x0.len()).step_by(5) {
            let at = |s: f64| {
                let mut c = chain.clone();
                let mut x = x0.clone();
                x[k] += s;
                c.set_flat(&x);
                evaluate(&c, &problem, Some(&base.weights())).unwrap().breakdown.total
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-4 * g[k].abs().max(1e-2), "k={k} fd={fd} g={}", g[k]);
        }
    }

    #[test]
    fn flat_roundtrip() {
        let (_, p) = grid(4);
        let chain = Chain::new(vec![p.identity_map(); 3]).unwrap();
        let x = chain.to_flat();
        assert_eq!(x.len(), 2 * 4 * 3);
        let mut c2 = chain.clone();
        c2.set_flat(&x);
        assert_eq!(c2, chain);
    }

    #[test]
    fn mismatched_partitions_are_rejected() {
        let (_, p4) = grid(4);
        let (_, p9) = grid(9);
        assert!(matches!(
            Chain::new(vec![p4.identity_map(), p9.identity_map()]),
            Err(Error::PartitionMismatch { .. })
        ));
    }
}
