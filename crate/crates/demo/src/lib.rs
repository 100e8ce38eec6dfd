//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every operation takes plain numbers and strings and returns a JSON
//! document, so the page needs no generated TypeScript types. The `*_json`
//! functions are the native entry points; the `#[wasm_bindgen]` wrappers only
//! convert their errors into JavaScript exceptions.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sdot_geodesic::analysis::extract_flow;
use sdot_geodesic::domain::{build_partition, Domain, DomainShape, SampleMode, DEFAULT_DISK_SIDES};
use sdot_geodesic::energy::Problem;
use sdot_geodesic::flows::{boundary_map, classical_threshold, flow_domain, AnalyticFlow};
use sdot_geodesic::optimizer::{minimize, SolveConfig};
use sdot_geodesic::sdot::{solve_dual, SdotOptions};
use sdot_geodesic::{Error, Vec2};

/// Largest problem the page may request; keeps a browser tab responsive.
pub const MAX_DEMO_CELLS: usize = 400;
pub const MAX_DEMO_INTERVALS: usize = 16;

fn domain_for(shape: &str) -> Result<Domain, String> {
    match shape {
        "square" | "unit_square" => Ok(Domain::new(DomainShape::UnitSquare)),
        "disk" | "unit_disk" => Domain::unit_disk(DEFAULT_DISK_SIDES).map_err(|e| e.to_string()),
        other => Err(format!("unknown domain {other:?}; use \"square\" or \"disk\"")),
    }
}

fn xy(points: &[Vec2]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x, p.y]).collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn describe(e: Error) -> String {
    match e {
        Error::PartitionSize { n, admissible, .. } => {
            format!("N = {n} does not fit the disk partition; try one of {admissible:?}")
        }
        other => other.to_string(),
    }
}

#[derive(Serialize)]
struct PartitionView {
    outline: Vec<[f64; 2]>,
    regions: Vec<Vec<[f64; 2]>>,
    barycenters: Vec<[f64; 2]>,
}

pub fn partition_json(shape: &str, n: usize) -> Result<String, String> {
    if n == 0 || n > MAX_DEMO_CELLS {
        return Err(format!("N must lie in 1..={MAX_DEMO_CELLS}"));
    }
    let domain = domain_for(shape)?;
    let p = build_partition(&domain, n).map_err(describe)?;
    to_json(&PartitionView {
        outline: xy(domain.polygon.vertices()),
        regions: p.regions.iter().map(|r| xy(r.vertices())).collect(),
        barycenters: xy(&p.barycenters),
    })
}

#[derive(Serialize)]
struct TransportView {
    outline: Vec<[f64; 2]>,
    cells: Vec<Vec<[f64; 2]>>,
    barycenters: Vec<[f64; 2]>,
    weights: Vec<f64>,
    cost: f64,
    newton_iterations: usize,
}

/// Laguerre cells of equal mass for points given as `[x0, y0, x1, y1, ...]`.
pub fn transport_json(shape: &str, coords: &[f64]) -> Result<String, String> {
    if !coords.len().is_multiple_of(2) || coords.is_empty() {
        return Err("expected a non-empty list of x, y pairs".into());
    }
    if coords.len() / 2 > MAX_DEMO_CELLS {
        return Err(format!("at most {MAX_DEMO_CELLS} points"));
    }
    let domain = domain_for(shape)?;
    let points: Vec<Vec2> = coords.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect();
    let r = solve_dual(&points, &domain, &SdotOptions::default(), None).map_err(describe)?;
    to_json(&TransportView {
        outline: xy(domain.polygon.vertices()),
        cells: r.diagram.cells.iter().map(|c| xy(c.polygon.vertices())).collect(),
        barycenters: xy(&r.cell_barycenters),
        weights: r.weights.f.clone(),
        cost: r.cost,
        newton_iterations: r.newton_iterations,
    })
}

#[derive(Serialize)]
struct GeodesicView {
    outline: Vec<[f64; 2]>,
    /// `frames[i][j]` is particle `j` at time `i / T`.
    frames: Vec<Vec<[f64; 2]>>,
    energy: f64,
    e_prime: f64,
    kinetic: f64,
    classical_threshold: bool,
    converged: bool,
}

/// Minimizes the discrete action for a small instance of a test flow.
pub fn geodesic_json(flow: &str, t_max: f64, n: usize, t_final: usize, seed: u64) -> Result<String, String> {
    let flow = AnalyticFlow::from_name(flow).map_err(describe)?;
    if !t_max.is_finite() || t_max <= 0.0 {
        return Err("t_max must be positive".into());
    }
    if n == 0 || n > MAX_DEMO_CELLS || t_final == 0 || t_final > MAX_DEMO_INTERVALS {
        return Err(format!("need 1 <= N <= {MAX_DEMO_CELLS} and 1 <= T <= {MAX_DEMO_INTERVALS}"));
    }
    let domain = flow_domain(flow, DEFAULT_DISK_SIDES).map_err(describe)?;
    let partition = build_partition(&domain, n).map_err(describe)?;
    let s_end = boundary_map(flow, t_max, &partition, SampleMode::Barycenter).map_err(describe)?;
    let config = SolveConfig { n, t_final, t0: t_final.min(2), seed, max_outer_iter: 300, ..SolveConfig::default() };
    let problem = Problem::new(domain.clone(), partition.identity_map(), s_end, config.lambda()).map_err(describe)?;
    let state = minimize(&config, &problem, None).map_err(describe)?;
    let energy = state.final_energy().cloned().ok_or("solver produced no level")?;
    let paths = extract_flow(&state.chain);
    let frames = (0..=paths.t).map(|i| paths.trajectories.iter().map(|tr| [tr.nodes[i].x, tr.nodes[i].y]).collect()).collect();
    to_json(&GeodesicView {
        outline: xy(domain.polygon.vertices()),
        frames,
        energy: energy.total,
        e_prime: energy.e_prime,
        kinetic: energy.kinetic,
        classical_threshold: classical_threshold(flow, t_max),
        converged: state.converged(),
    })
}

#[wasm_bindgen]
pub fn partition(shape: &str, n: usize) -> Result<String, JsError> {
    partition_json(shape, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn transport(shape: &str, coords: &[f64]) -> Result<String, JsError> {
    transport_json(shape, coords).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn geodesic(flow: &str, t_max: f64, n: usize, t_final: usize, seed: u32) -> Result<String, JsError> {
    geodesic_json(flow, t_max, n, t_final, u64::from(seed)).map_err(|e| JsError::new(&e))
}
