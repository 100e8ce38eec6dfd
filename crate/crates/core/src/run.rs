//! End-to-end experiments: configuration, solve, analyses and artifacts.
//!
//! A run directory holds everything needed to re-analyze or re-render a
//! solve without repeating it:
//!
//! | file | content |
//! |------|---------|
//! | `config.json` | the configuration that produced the run |
//! | `metadata.json` | solver constants, λ, partition id, level reports |
//! | `partition.json` | the equal-area partition |
//! | `checkpoint.json` | final chain, dual weights, level and RNG state |
//! | `energy_log.json` | energy breakdown after every accepted iteration |
//! | `trajectories.csv` | `path_id,t,x,y` for every node of every path |
//! | `summary.json` | headline numbers |
//! | `epsilon_curve.csv`, `clusters.json`, `pressure.json` | optional analyses |

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    box_dimension, extract_flow, farthest_point_sampling, incompressibility_residual, kmeans, pressure_field,
    BoxDimension, GeneralizedFlow, KmeansResult, PressureSample, ResidualReport,
};
use crate::domain::{build_partition, Domain, Partition, SampleMode, DEFAULT_DISK_SIDES};
use crate::energy::{EnergyBreakdown, Problem};
use crate::error::{Error, Result};
use crate::flows::{boundary_map, classical_threshold, flow_domain, AnalyticFlow};
use crate::geom2d::Vec2;
use crate::optimizer::{minimize, LbfgsSettings, LevelReport, SolveConfig, SolveState};
use crate::sdot::{SdotOptions, COINCIDENCE_TOL};

pub const CONFIG_FILE: &str = "config.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const PARTITION_FILE: &str = "partition.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const ENERGY_LOG_FILE: &str = "energy_log.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EPSILON_FILE: &str = "epsilon_curve.csv";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const PRESSURE_FILE: &str = "pressure.json";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisFlags {
    /// Number of k-means clusters, if clustering is wanted.
    pub clusters: Option<usize>,
    pub dimension: bool,
    pub pressure: bool,
    pub residual: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeDisk {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderFlags {
    pub frames: bool,
    pub trajectories: Vec<ProbeDisk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub flow: AnalyticFlow,
    pub t_max: f64,
    #[serde(alias = "N")]
    pub n: usize,
    #[serde(alias = "T_final")]
    pub t_final: usize,
    #[serde(default = "default_lambda_exponent")]
    pub lambda_exponent: f64,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub analyses: AnalysisFlags,
    #[serde(default)]
    pub render: RenderFlags,
    /// Intervals of the coarsest level.
    #[serde(default = "default_t0")]
    pub t0: usize,
    #[serde(default = "default_max_outer_iter")]
    pub max_outer_iter: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_disk_sides")]
    pub disk_sides: usize,
    #[serde(default)]
    pub sample_mode: SampleMode,
}

fn default_lambda_exponent() -> f64 {
    3.0
}
fn default_t0() -> usize {
    2
}
fn default_max_outer_iter() -> usize {
    500
}
fn default_grad_tol() -> f64 {
    1e-6
}
fn default_disk_sides() -> usize {
    DEFAULT_DISK_SIDES
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            n: self.n,
            t_final: self.t_final,
            t0: self.t0.min(self.t_final.max(1)),
            lambda_exponent: self.lambda_exponent,
            max_outer_iter: self.max_outer_iter,
            grad_tol: self.grad_tol,
            jitter_scale: None,
            seed: self.seed,
            lbfgs: LbfgsSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::InvalidInput(format!("t_max must be positive and finite, got {}", self.t_max)));
        }
        if let Some(k) = self.analyses.clusters {
            if k == 0 || k > self.n {
                return Err(Error::InvalidInput(format!("clusters must lie in 1..={}, got {k}", self.n)));
            }
        }
        for p in &self.render.trajectories {
            if !(p.radius > 0.0) || !p.center.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput(format!("invalid probe disk {p:?}")));
            }
        }
        self.solve_config().validate()
    }

    pub fn domain(&self) -> Result<Domain> {
        flow_domain(self.flow, self.disk_sides)
    }
}

/// Constants that determine a run beyond its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub crate_version: String,
    pub lambda: f64,
    pub partition_id: u64,
    pub partition_scheme: serde_json::Value,
    pub solver: SolveConfig,
    pub coincidence_tol: f64,
    pub sdot: SdotOptions,
    pub jitter_scale: f64,
    pub kmeans_seeding: String,
    pub fps_start_index: usize,
    pub dimension_fit_fractions: (f64, f64),
    pub residual_quadrature_points: usize,
    pub levels: Vec<LevelReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureComparison {
    /// Mean cosine similarity against `t_max² ∇p` over samples where both
    /// vectors are non-negligible.
    pub mean_cosine: f64,
    /// Cosine similarity of the stacked vector fields.
    pub global_cosine: f64,
    /// `max |estimate - exact| / max |exact|`.
    pub relative_sup_error: f64,
    pub samples_compared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureOutput {
    pub comparison: PressureComparison,
    pub samples: Vec<PressureSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersOutput {
    pub k: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub result: KmeansResult,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_echo: RunConfig,
    pub energy: f64,
    pub energy_breakdown: EnergyBreakdown,
    pub e_prime: f64,
    pub residual: Option<f64>,
    pub residual_bound: f64,
    pub dimension_estimate: Option<BoxDimension>,
    pub classical_threshold: bool,
    pub wall_time_s: f64,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_trajectories(path: &Path, flow: &GeneralizedFlow) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "path_id,t,x,y")?;
    let t = flow.t as f64;
    for (j, tr) in flow.trajectories.iter().enumerate() {
        for (i, p) in tr.nodes.iter().enumerate() {
            writeln!(out, "{j},{:.16e},{:.16e},{:.16e}", i as f64 / t, p.x, p.y)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_epsilon_curve(path: &Path, epsilon: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "i,epsilon,log_i,log_inv_eps")?;
    for (k, e) in epsilon.iter().enumerate() {
        let i = k + 1;
        writeln!(out, "{i},{:.16e},{:.16e},{:.16e}", e, (i as f64).ln(), -e.ln())?;
    }
    out.flush()?;
    Ok(())
}

/// Cosine and sup comparisons of pressure samples against `t_max² ∇p`.
pub fn compare_pressure(samples: &[PressureSample], flow: AnalyticFlow, t_max: f64) -> PressureComparison {
    let exact: Vec<Vec2> = samples.iter().map(|s| flow.pressure_gradient(s.position) * (t_max * t_max)).collect();
    let scale = exact.iter().map(|e| e.norm()).fold(0.0, f64::max);
    let (mut dot, mut ee, mut gg, mut cos_sum, mut count, mut sup) = (0.0, 0.0, 0.0, 0.0, 0usize, 0.0_f64);
    for (s, e) in samples.iter().zip(&exact) {
        dot += s.grad_p.dot(*e);
        ee += e.norm2();
        gg += s.grad_p.norm2();
        sup = sup.max((s.grad_p - *e).norm());
        if e.norm() > 1e-3 * scale && s.grad_p.norm() > 0.0 {
            cos_sum += s.grad_p.dot(*e) / (s.grad_p.norm() * e.norm());
            count += 1;
        }
    }
    PressureComparison {
        mean_cosine: if count > 0 { cos_sum / count as f64 } else { f64::NAN },
        global_cosine: if ee > 0.0 && gg > 0.0 { dot / (ee * gg).sqrt() } else { f64::NAN },
        relative_sup_error: if scale > 0.0 { sup / scale } else { f64::NAN },
        samples_compared: count,
    }
}

/// Builds the domain, partition and problem described by a configuration.
pub fn setup(config: &RunConfig) -> Result<(Partition, Problem)> {
    config.validate()?;
    let domain = config.domain()?;
    let partition = build_partition(&domain, config.n)?;
    let s_star = partition.identity_map();
    let s_end = boundary_map(config.flow, config.t_max, &partition, config.sample_mode)?;
    let lambda = config.solve_config().lambda();
    let problem = Problem::new(domain, s_star, s_end, lambda)?;
    Ok((partition, problem))
}

const FPS_START: usize = 0;
const DIMENSION_FIT: (f64, f64) = (0.2, 0.8);
const RESIDUAL_POINTS: usize = 3;

/// Solves, writes the solve artifacts and runs the configured analyses.
/// Rendering is left to [`crate::render::render_dir`].
pub fn run(config: &RunConfig) -> Result<Summary> {
    let start = Instant::now();
    let (partition, problem) = setup(config)?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    write_json(&dir, CONFIG_FILE, config)?;
    write_json(&dir, PARTITION_FILE, &partition)?;

    let solve = config.solve_config();
    let mut checkpoint = |state: &SolveState| write_json(&dir, CHECKPOINT_FILE, state);
    let state = minimize(&solve, &problem, Some(&mut checkpoint))?;
    write_json(&dir, ENERGY_LOG_FILE, &state.energy_log)?;

    let metadata = RunMetadata {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        lambda: problem.lambda,
        partition_id: partition.id.0,
        partition_scheme: serde_json::to_value(&partition.scheme)?,
        solver: solve,
        coincidence_tol: COINCIDENCE_TOL,
        sdot: problem.sdot,
        jitter_scale: 1e-6 * problem.domain.diameter(),
        kmeans_seeding: "k-means++ (D² sampling) from the run seed".to_string(),
        fps_start_index: FPS_START,
        dimension_fit_fractions: DIMENSION_FIT,
        residual_quadrature_points: RESIDUAL_POINTS,
        levels: state.levels.clone(),
    };
    write_json(&dir, METADATA_FILE, &metadata)?;
    analyze_state(config, &state, &problem.domain, &dir, start)
}

/// Re-runs the analyses of a finished run directory.
pub fn analyze_dir(dir: &Path) -> Result<Summary> {
    let start = Instant::now();
    let config: RunConfig = read_json(dir, CONFIG_FILE)?;
    let state: SolveState = read_json(dir, CHECKPOINT_FILE)?;
    let domain = config.domain()?;
    analyze_state(&config, &state, &domain, dir, start)
}

fn analyze_state(config: &RunConfig, state: &SolveState, domain: &Domain, dir: &Path, start: Instant) -> Result<Summary> {
    let breakdown = state
        .final_energy()
        .cloned()
        .ok_or_else(|| Error::MissingArtifact("checkpoint holds no finished level".into()))?;
    let flow = extract_flow(&state.chain);
    write_trajectories(&dir.join(TRAJECTORIES_FILE), &flow)?;

    let residual = if config.analyses.residual {
        let report: ResidualReport = incompressibility_residual(&flow, domain, RESIDUAL_POINTS, &SdotOptions::default())?;
        Some(report.estimate)
    } else {
        None
    };
    let dimension_estimate = if config.analyses.dimension {
        let fps = farthest_point_sampling(&flow, FPS_START)?;
        write_epsilon_curve(&dir.join(EPSILON_FILE), &fps.epsilon)?;
        Some(box_dimension(&fps.epsilon, DIMENSION_FIT.0, DIMENSION_FIT.1)?)
    } else {
        None
    };
    if let Some(k) = config.analyses.clusters {
        let result = kmeans(&flow, k, config.seed, 100)?;
        write_json(dir, CLUSTERS_FILE, &ClustersOutput { k, seed: config.seed, result })?;
    }
    if config.analyses.pressure && state.chain.t() >= 2 {
        let samples = pressure_field(&state.chain)?;
        let comparison = compare_pressure(&samples, config.flow, config.t_max);
        write_json(dir, PRESSURE_FILE, &PressureOutput { comparison, samples })?;
    }

    let summary = Summary {
        config_echo: config.clone(),
        energy: breakdown.total,
        e_prime: breakdown.e_prime,
        residual,
        residual_bound: ResidualReport::bound(breakdown.e_prime, breakdown.t),
        energy_breakdown: breakdown,
        dimension_estimate,
        classical_threshold: classical_threshold(config.flow, config.t_max),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(dir, SUMMARY_FILE, &summary)?;
    Ok(summary)
}

/// Loads the final chain of a run as a generalized flow.
pub fn load_flow(dir: &Path) -> Result<(RunConfig, GeneralizedFlow)> {
    let config: RunConfig = read_json(dir, CONFIG_FILE)?;
    let state: SolveState = read_json(dir, CHECKPOINT_FILE)?;
    Ok((config, extract_flow(&state.chain)))
}

pub fn load_clusters(dir: &Path) -> Result<Option<ClustersOutput>> {
    if dir.join(CLUSTERS_FILE).exists() {
        read_json(dir, CLUSTERS_FILE).map(Some)
    } else {
        Ok(None)
    }
}

pub fn load_pressure(dir: &Path) -> Result<Option<PressureOutput>> {
    if dir.join(PRESSURE_FILE).exists() {
        read_json(dir, PRESSURE_FILE).map(Some)
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(dir: &Path) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{"flow": "disk_rotation", "t_max": 1.0, "N": 48, "T_final": 4, "seed": 1,
                "output_dir": {:?}, "analyses": {{"clusters": 3, "dimension": true, "pressure": true, "residual": true}}}}"#,
            dir.display().to_string()
        ))
        .unwrap()
    }

    #[test]
    fn config_parsing_and_validation() {
        let tmp = tempfile::tempdir().unwrap();
        let c = base(tmp.path());
        assert_eq!((c.n, c.t_final, c.t0, c.lambda_exponent), (48, 4, 2, 3.0));
        assert!(c.validate().is_ok());
        let mut bad = c.clone();
        bad.t_max = 0.0;
        assert!(bad.validate().unwrap_err().is_input_error());
        bad = c.clone();
        bad.t_final = 6;
        assert!(bad.validate().unwrap_err().is_input_error());
        assert!(RunConfig::from_json(r#"{"flow": "disk_rotation"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"flow": "torus", "t_max": 1, "n": 4, "t_final": 2, "output_dir": "x"}"#).is_err());
    }

    #[test]
    fn small_run_writes_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let c = base(tmp.path());
        let s = run(&c).unwrap();
        assert!(s.classical_threshold);
        assert!(s.residual.unwrap() >= 0.0);
        assert!(s.dimension_estimate.is_some());
        for f in [CONFIG_FILE, METADATA_FILE, PARTITION_FILE, CHECKPOINT_FILE, ENERGY_LOG_FILE, TRAJECTORIES_FILE, SUMMARY_FILE, EPSILON_FILE, CLUSTERS_FILE, PRESSURE_FILE] {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
        let csv = fs::read_to_string(tmp.path().join(TRAJECTORIES_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 1 + 48 * 5);
        assert!(csv.starts_with("path_id,t,x,y\n0,0.0000000000000000e0,"));

        let again = analyze_dir(tmp.path()).unwrap();
        assert_eq!(again.energy_breakdown, s.energy_breakdown);
        assert_eq!(again.dimension_estimate, s.dimension_estimate);
    }

    #[test]
    fn pressure_comparison_of_exact_field() {
        let samples: Vec<PressureSample> = (0..10)
            .map(|k| {
                let x = Vec2::from_angle(k as f64) * 0.5;
                PressureSample { time_index: 1, position: x, grad_p: x * 4.0 }
            })
            .collect();
        let c = compare_pressure(&samples, AnalyticFlow::DiskRotation, 2.0);
        assert!((c.mean_cosine - 1.0).abs() < 1e-12 && c.relative_sup_error < 1e-12);
    }
}
