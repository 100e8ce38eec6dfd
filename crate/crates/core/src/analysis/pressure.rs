//! Pressure-gradient samples and the time-integrated incompressibility residual.

use serde::{Deserialize, Serialize};

use super::{map_indices, GeneralizedFlow};
use crate::domain::Domain;
use crate::energy::Chain;
use crate::error::{Error, Result};
use crate::geom2d::Vec2;
use crate::sdot::{solve_dual, SdotOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureSample {
    pub time_index: usize,
    pub position: Vec2,
    pub grad_p: Vec2,
}

/// `grad_p = -T² (m_{i-1} - 2 m_i + m_{i+1})` at `m_i`, for interior `i`.
pub fn pressure_field(chain: &Chain) -> Result<Vec<PressureSample>> {
    let t = chain.t();
    if t < 2 {
        return Err(Error::InvalidInput("pressure needs at least two time intervals".into()));
    }
    let t2 = (t * t) as f64;
    let mut out = Vec::with_capacity((t - 1) * chain.n());
    for i in 1..t {
        let (prev, cur, next) = (&chain.maps[i - 1].values, &chain.maps[i].values, &chain.maps[i + 1].values);
        for j in 0..chain.n() {
            let sd = prev[j] - cur[j] * 2.0 + next[j];
            out.push(PressureSample { time_index: i, position: cur[j], grad_p: -(sd * t2) });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Quadrature estimate of `∫₀¹ W₂²(e_t # μ, Leb) dt`.
    pub estimate: f64,
    pub per_interval: Vec<f64>,
    pub quadrature_points: usize,
}

impl ResidualReport {
    /// `E' / (4 T²)`.
    pub fn bound(e_prime: f64, t: usize) -> f64 {
        e_prime / (4.0 * (t * t) as f64)
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre(points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w): (Vec<f64>, Vec<f64>) = match points {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = 0.6f64.sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let r = (6.0f64 / 5.0).sqrt() * 2.0 / 7.0;
            let (a, b) = ((3.0 / 7.0 - r).sqrt(), (3.0 / 7.0 + r).sqrt());
            let (wa, wb) = ((18.0 + 30f64.sqrt()) / 36.0, (18.0 - 30f64.sqrt()) / 36.0);
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        other => return Err(Error::InvalidInput(format!("supported quadrature orders are 1 to 4, got {other}"))),
    };
    Ok((x.iter().map(|v| 0.5 * (v + 1.0)).collect(), w.iter().map(|v| 0.5 * v).collect()))
}

pub fn incompressibility_residual(
    flow: &GeneralizedFlow,
    domain: &Domain,
    quadrature_per_interval: usize,
    options: &SdotOptions,
) -> Result<ResidualReport> {
    let (nodes, weights) = gauss_legendre(quadrature_per_interval)?;
    let t = flow.t;
    let q = nodes.len();
    let costs = map_indices(t * q, |k| {
        let s = ((k / q) as f64 + nodes[k % q]) / t as f64;
        solve_dual(&flow.snapshot(s), domain, options, None).map(|r| r.cost)
    });
    let mut per_interval = vec![0.0; t];
    for (k, c) in costs.into_iter().enumerate() {
        per_interval[k / q] += weights[k % q] * c? / t as f64;
    }
    Ok(ResidualReport { estimate: per_interval.iter().sum(), per_interval, quadrature_points: q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{extract_flow, Trajectory};
    use crate::domain::build_partition;
    use crate::flows::brenier_disk_sampler;

    #[test]
    fn affine_chain_has_no_pressure() {
        let p = build_partition(&Domain::unit_square(), 9).unwrap();
        let id = p.identity_map();
        let maps = (0..5)
            .map(|i| {
                let mut m = id.clone();
                m.values.iter_mut().for_each(|v| *v = *v * (1.0 + 0.1 * i as f64) + Vec2::new(0.02 * i as f64, 0.0));
                m
            })
            .collect();
        let samples = pressure_field(&Chain::new(maps).unwrap()).unwrap();
        assert_eq!(samples.len(), 27);
        assert!(samples.iter().all(|s| s.grad_p.norm() < 1e-12));
        assert!(pressure_field(&Chain::new(vec![id.clone(), id]).unwrap()).is_err());
    }

    #[test]
    fn brenier_pressure_is_centripetal() {
        let samples = brenier_disk_sampler(500, 3);
        let t = 16;
        let p = build_partition(&Domain::unit_square(), 500).unwrap();
        let maps = (0..=t)
            .map(|i| {
                let mut m = p.identity_map();
                m.values = samples.iter().map(|s| s.at(i as f64 / t as f64)).collect();
                m
            })
            .collect();
        for s in pressure_field(&Chain::new(maps).unwrap()).unwrap() {
            if s.position.norm() > 0.1 {
                assert!(s.grad_p.dot(s.position) >= 0.0);
            }
        }
    }

    #[test]
    fn constant_grid_residual() {
        let d = Domain::unit_square();
        for n in [16, 64] {
            let p = build_partition(&d, n).unwrap();
            let flow = extract_flow(&Chain::new(vec![p.identity_map(); 5]).unwrap());
            let r = incompressibility_residual(&flow, &d, 3, &SdotOptions::default()).unwrap();
            let want = 1.0 / (6.0 * n as f64);
            assert!((r.estimate - want).abs() <= 1e-9 * want, "{} vs {want}", r.estimate);
            assert_eq!(r.per_interval.len(), 4);
        }
    }

    #[test]
    fn quadrature_integrates_polynomials() {
        for q in 1..=4 {
            let (x, w) = gauss_legendre(q).unwrap();
            for deg in 0..2 * q {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((approx - 1.0 / (deg + 1) as f64).abs() < 1e-14, "q={q} deg={deg}");
            }
        }
        assert!(gauss_legendre(5).is_err());
        let flow = GeneralizedFlow::new(vec![Trajectory { nodes: vec![Vec2::ZERO; 2] }]).unwrap();
        assert!(incompressibility_residual(&flow, &Domain::unit_square(), 0, &SdotOptions::default()).is_err());
    }
}
