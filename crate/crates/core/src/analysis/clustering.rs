//! Lloyd iterations in the H¹ geometry of trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{map_indices, sq_dist, GeneralizedFlow, H1Embedding, Trajectory};
use crate::error::{Error, Result};
use crate::geom2d::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansResult {
    pub assignment: Vec<usize>,
    /// Nodewise means of the clusters.
    pub centroids: Vec<Trajectory>,
    /// `(1/N) Σ_j |γ_j - centroid(j)|²_H¹` after the last assignment.
    pub energy: f64,
    /// Energy after each assignment step.
    pub energy_history: Vec<f64>,
    pub iterations: usize,
    /// `(iteration, cluster)` for every empty cluster that was re-seeded.
    pub reseeded: Vec<(usize, usize)>,
}

/// D² seeding: the first center uniformly, each next one with probability
/// proportional to the squared distance to the chosen ones.
fn seed_centers(emb: &H1Embedding, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = emb.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|j| sq_dist(emb.row(j), emb.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = None;
            for (j, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(j);
                    if r < d {
                        break;
                    }
                    r -= d;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // all remaining points duplicate a center
            (0..n).find(|j| !chosen.contains(j)).expect("k <= n")
        };
        chosen.push(next);
        let row = emb.row(next).to_vec();
        for (j, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(emb.row(j), &row));
        }
    }
    chosen
}

fn assign(emb: &H1Embedding, centers: &[Vec<f64>]) -> Vec<(usize, f64)> {
    map_indices(emb.len(), |j| {
        let row = emb.row(j);
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(row, center);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    })
}

fn nodewise_mean(flow: &GeneralizedFlow, members: &[usize]) -> Trajectory {
    let mut nodes = vec![Vec2::ZERO; flow.t + 1];
    for &j in members {
        for (acc, &v) in nodes.iter_mut().zip(&flow.trajectories[j].nodes) {
            *acc += v;
        }
    }
    let w = 1.0 / members.len() as f64;
    Trajectory { nodes: nodes.into_iter().map(|v| v * w).collect() }
}

pub fn kmeans(flow: &GeneralizedFlow, k: usize, seed: u64, max_iter: usize) -> Result<KmeansResult> {
    let n = flow.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("k must lie in 1..={n}, got {k}")));
    }
    let emb = flow.h1_embedding();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Trajectory> =
        seed_centers(&emb, k, &mut rng).into_iter().map(|j| flow.trajectories[j].clone()).collect();
    let mut assignment: Vec<usize> = Vec::new();
    let mut energy_history = Vec::new();
    let mut reseeded = Vec::new();
    let mut iterations = 0;
    loop {
        let features: Vec<Vec<f64>> = centroids.iter().map(Trajectory::h1_features).collect();
        let nearest = assign(&emb, &features);
        let energy = nearest.iter().map(|&(_, d)| d).sum::<f64>() / n as f64;
        energy_history.push(energy);
        let next: Vec<usize> = nearest.iter().map(|&(c, _)| c).collect();
        if next == assignment || iterations == max_iter {
            assignment = next;
            break;
        }
        assignment = next;
        iterations += 1;

        let mut members = vec![Vec::new(); k];
        for (j, &c) in assignment.iter().enumerate() {
            members[c].push(j);
        }
        let mut dist: Vec<f64> = nearest.iter().map(|&(_, d)| d).collect();
        for c in 0..k {
            if members[c].is_empty() {
                // the point worst served by its current center
                let far = (0..n)
                    .filter(|&j| members[assignment[j]].len() > 1)
                    .fold(None, |best: Option<usize>, j| match best {
                        Some(b) if dist[b] >= dist[j] => Some(b),
                        _ => Some(j),
                    })
                    .expect("some cluster has two members when one is empty");
                if dist[far] == 0.0 {
                    // every point sits on its center; nothing to move
                    continue;
                }
                let old = assignment[far];
                members[old].retain(|&j| j != far);
                members[c].push(far);
                assignment[far] = c;
                dist[far] = 0.0;
                reseeded.push((iterations, c));
            }
        }
        for (centroid, m) in centroids.iter_mut().zip(&members) {
            if !m.is_empty() {
                *centroid = nodewise_mean(flow, m);
            }
        }
    }
    let energy = *energy_history.last().expect("at least one assignment");
    Ok(KmeansResult { assignment, centroids, energy, energy_history, iterations, reseeded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::h1_inner;

    fn constant_flow(points: &[Vec2], t: usize) -> GeneralizedFlow {
        GeneralizedFlow::new(points.iter().map(|&p| Trajectory { nodes: vec![p; t + 1] }).collect()).unwrap()
    }

    fn bundles(seed: u64) -> GeneralizedFlow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut paths = Vec::new();
        for b in 0..2 {
            let base = if b == 0 { Vec2::new(-1.0, 0.0) } else { Vec2::new(1.0, 0.0) };
            for _ in 0..50 {
                let nodes = (0..=4)
                    .map(|i| base + Vec2::new(0.0, 0.1 * i as f64) + Vec2::new(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02)))
                    .collect();
                paths.push(Trajectory { nodes });
            }
        }
        GeneralizedFlow::new(paths).unwrap()
    }

    #[test]
    fn k_equals_n_is_exact() {
        let pts: Vec<Vec2> = (0..7).map(|i| Vec2::new(i as f64 * 0.3, (i * i) as f64 * 0.1)).collect();
        let r = kmeans(&constant_flow(&pts, 3), 7, 1, 100).unwrap();
        assert_eq!(r.energy, 0.0);
        let mut seen = r.assignment.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 7);
    }

    #[test]
    fn one_cluster_is_the_mean() {
        let flow = bundles(3);
        let r = kmeans(&flow, 1, 9, 100).unwrap();
        let all: Vec<usize> = (0..flow.len()).collect();
        assert_eq!(r.centroids[0], nodewise_mean(&flow, &all));
    }

    #[test]
    fn recovers_separated_bundles() {
        let flow = bundles(4);
        for seed in 0..5 {
            let r = kmeans(&flow, 2, seed, 100).unwrap();
            let first = r.assignment[0];
            assert!(r.assignment[..50].iter().all(|&c| c == first));
            assert!(r.assignment[50..].iter().all(|&c| c != first));
        }
    }

    #[test]
    fn energy_never_increases_and_fixed_point_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec2> = (0..300).map(|_| Vec2::new(rng.gen(), rng.gen())).collect();
        let flow = constant_flow(&pts, 2);
        let r = kmeans(&flow, 12, 2, 500).unwrap();
        for w in r.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        for (c, centroid) in r.centroids.iter().enumerate() {
            let members: Vec<usize> = (0..flow.len()).filter(|&j| r.assignment[j] == c).collect();
            let mean = nodewise_mean(&flow, &members);
            let diff = Trajectory { nodes: mean.nodes.iter().zip(&centroid.nodes).map(|(a, b)| *a - *b).collect() };
            assert!(h1_inner(&diff, &diff).unwrap() < 1e-24);
        }
    }

    #[test]
    fn duplicates_and_empty_clusters() {
        let pts = vec![Vec2::ZERO, Vec2::ZERO, Vec2::ZERO, Vec2::new(1.0, 0.0)];
        let r = kmeans(&constant_flow(&pts, 1), 3, 0, 50).unwrap();
        assert_eq!(r.assignment.len(), 4);
        assert_eq!(r.energy, 0.0);
        assert!(kmeans(&constant_flow(&pts, 1), 5, 0, 50).is_err());
    }
}
