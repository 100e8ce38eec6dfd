//! L-BFGS minimization of the discrete action with time refinement.
//!
//! A level with `T` intervals is minimized, then every interval is split at
//! its midpoint and the next level starts from the refined chain, until the
//! requested number of intervals is reached.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{find_coincident, DiscreteMap};
use crate::energy::{evaluate, flatten_gradient, Chain, EnergyBreakdown, Evaluation, Problem};
use crate::error::{Error, Result};
use crate::geom2d::Vec2;
use crate::sdot::{DualWeights, COINCIDENCE_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub n: usize,
    /// Number of time intervals of the final level.
    pub t_final: usize,
    /// Number of intervals of the first level; `t_final` must be `t0 * 2^k`.
    pub t0: usize,
    /// `λ = N^(1/lambda_exponent)`.
    pub lambda_exponent: f64,
    pub max_outer_iter: usize,
    /// Sup-norm of the coordinate gradient at which a level stops.
    pub grad_tol: f64,
    /// Jitter half-width; `None` means `1e-6` times the domain diameter.
    pub jitter_scale: Option<f64>,
    pub seed: u64,
    pub lbfgs: LbfgsSettings,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            n: 256,
            t_final: 16,
            t0: 2,
            lambda_exponent: 3.0,
            max_outer_iter: 500,
            grad_tol: 1e-6,
            jitter_scale: None,
            seed: 0,
            lbfgs: LbfgsSettings::default(),
        }
    }
}

impl SolveConfig {
    pub fn lambda(&self) -> f64 {
        (self.n as f64).powf(1.0 / self.lambda_exponent)
    }

    /// Interval counts of all levels, coarsest first.
    pub fn levels(&self) -> Result<Vec<usize>> {
        if self.t0 == 0 || self.t_final < self.t0 {
            return Err(Error::InvalidInput(format!("need 1 <= t0 <= t_final, got t0={} t_final={}", self.t0, self.t_final)));
        }
        let mut t = self.t0;
        let mut out = vec![t];
        while t < self.t_final {
            t *= 2;
            out.push(t);
        }
        if t != self.t_final {
            return Err(Error::InvalidInput(format!(
                "t_final = {} is not t0 = {} times a power of two",
                self.t_final, self.t0
            )));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("N must be positive".into()));
        }
        if !(self.lambda_exponent > 2.0) {
            return Err(Error::InvalidInput(format!(
                "lambda_exponent must exceed the dimension 2, got {}",
                self.lambda_exponent
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidInput("grad_tol must be positive".into()));
        }
        if self.lbfgs.memory == 0 {
            return Err(Error::InvalidInput("L-BFGS memory must be positive".into()));
        }
        self.levels().map(|_| ())
    }
}

/// Constants of the quasi-Newton iteration, recorded with every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsSettings {
    pub memory: usize,
    pub armijo: f64,
    pub max_halvings: usize,
    /// Consecutive iterations with relative energy change below `1e-15` after
    /// which a level is considered stagnant.
    pub stagnation_window: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self { memory: 10, armijo: 1e-4, max_halvings: 40, stagnation_window: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradTol,
    MaxIter,
    LineSearchFailed,
    Stagnated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub level: usize,
    pub iteration: usize,
    pub grad_sup: f64,
    pub step: f64,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub t: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub grad_sup: f64,
    pub energy: EnergyBreakdown,
    /// Whether some interior map had to be re-jittered before this level.
    pub rejittered: bool,
}

/// Everything needed to continue or analyze a solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveState {
    pub chain: Chain,
    /// Warm starts for `m_1, ..., m_{T-1}`.
    pub weights: Vec<DualWeights>,
    pub level: usize,
    pub lambda: f64,
    pub energy_log: Vec<LogEntry>,
    pub levels: Vec<LevelReport>,
    pub rng: ChaCha8Rng,
}

impl SolveState {
    pub fn final_energy(&self) -> Option<&EnergyBreakdown> {
        self.levels.last().map(|l| &l.energy)
    }

    pub fn converged(&self) -> bool {
        self.levels.last().is_some_and(|l| l.stop == StopReason::GradTol)
    }
}

fn jitter_map(m: &mut DiscreteMap, scale: f64, rng: &mut ChaCha8Rng) {
    for v in &mut m.values {
        *v += Vec2::new(rng.gen_range(-scale..=scale), rng.gen_range(-scale..=scale));
    }
}

/// Jitters `m` until no two values are within the coincidence threshold.
/// Returns whether any jitter was applied.
fn separate(m: &mut DiscreteMap, scale: f64, rng: &mut ChaCha8Rng, always: bool) -> bool {
    if !always && find_coincident(&m.values, COINCIDENCE_TOL).is_none() {
        return false;
    }
    let base = m.values.clone();
    loop {
        m.values.clone_from(&base);
        jitter_map(m, scale, rng);
        if find_coincident(&m.values, COINCIDENCE_TOL).is_none() {
            return true;
        }
    }
}

/// Linear interpolation between the boundary maps with `t0` intervals; every
/// interior map is jittered off the diagonal, the endpoints are left exact.
pub fn initialize(
    s_star: &DiscreteMap,
    s_end: &DiscreteMap,
    t0: usize,
    jitter_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Chain> {
    if t0 == 0 {
        return Err(Error::InvalidInput("t0 must be at least 1".into()));
    }
    s_star.check_same(s_end)?;
    let mut maps = Vec::with_capacity(t0 + 1);
    for i in 0..=t0 {
        let s = i as f64 / t0 as f64;
        let values = s_star.values.iter().zip(&s_end.values).map(|(a, b)| *a * (1.0 - s) + *b * s).collect();
        let mut m = DiscreteMap { values, partition: s_star.partition };
        if i > 0 && i < t0 {
            separate(&mut m, jitter_scale, rng, true);
        }
        maps.push(m);
    }
    Chain::new(maps)
}

/// Inserts the midpoint of every interval. New maps are jittered only when
/// they violate the coincidence threshold.
pub fn refine(chain: &Chain, jitter_scale: f64, rng: &mut ChaCha8Rng) -> (Chain, bool) {
    let mut maps = Vec::with_capacity(2 * chain.t() + 1);
    let mut jittered = false;
    for w in chain.maps.windows(2) {
        maps.push(w[0].clone());
        let values = w[0].values.iter().zip(&w[1].values).map(|(a, b)| (*a + *b) * 0.5).collect();
        let mut mid = DiscreteMap { values, partition: w[0].partition };
        jittered |= separate(&mut mid, jitter_scale, rng, false);
        maps.push(mid);
    }
    maps.push(chain.maps[chain.t()].clone());
    (Chain { maps }, jittered)
}

/// Warm starts for the refined chain from those of the coarse one.
fn refine_weights(weights: &[DualWeights], t_coarse: usize) -> Vec<DualWeights> {
    let get = |i: usize| -> Option<&DualWeights> {
        if i == 0 || i >= t_coarse {
            None
        } else {
            weights.get(i - 1)
        }
    };
    let mut out = Vec::with_capacity(2 * t_coarse - 1);
    for k in 1..2 * t_coarse {
        let w = if k % 2 == 0 {
            get(k / 2).cloned()
        } else {
            match (get(k / 2), get(k / 2 + 1)) {
                (Some(a), Some(b)) => Some(DualWeights { f: a.f.iter().zip(&b.f).map(|(x, y)| 0.5 * (x + y)).collect() }),
                (Some(a), None) | (None, Some(a)) => Some(a.clone()),
                (None, None) => None,
            }
        };
        out.push(w.unwrap_or_default());
    }
    out
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Evaluates the chain at flattened coordinates; `None` when a transport
/// problem cannot be solved there, which the line search treats as an
/// infinite energy.
fn try_eval(chain: &Chain, x: &[f64], problem: &Problem, warm: &[DualWeights]) -> Option<(Chain, Evaluation)> {
    let mut c = chain.clone();
    c.set_flat(x);
    let warm = if warm.iter().all(|w| !w.is_empty()) { Some(warm) } else { None };
    evaluate(&c, problem, warm).ok().map(|e| (c, e))
}

struct LevelOutcome {
    chain: Chain,
    eval: Evaluation,
    report: LevelReport,
}

fn minimize_level(
    chain: Chain,
    eval: Evaluation,
    problem: &Problem,
    config: &SolveConfig,
    level: usize,
    log: &mut Vec<LogEntry>,
) -> LevelOutcome {
    let settings = config.lbfgs;
    let n = chain.n() as f64;
    let t = chain.t();
    let mut chain = chain;
    let mut eval = eval;
    let mut x = chain.to_flat();
    let mut g = flatten_gradient(&eval.gradient);
    let mut f = eval.breakdown.total;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    // diagonal curvature of the kinetic and penalty terms, used before any
    // curvature pair is available
    let h0 = 2.0 * (2.0 * t as f64 + problem.lambda) / n;
    let mut evaluations = 1;
    let mut iteration = 0;
    let mut flat_run = 0;
    let mut retried = false;
    let stop;
    log.push(LogEntry { level, iteration: 0, grad_sup: sup_norm(&g), step: 0.0, energy: eval.breakdown.clone() });
    loop {
        if sup_norm(&g) <= config.grad_tol {
            stop = StopReason::GradTol;
            break;
        }
        if iteration >= config.max_outer_iter {
            stop = StopReason::MaxIter;
            break;
        }
        let d = lbfgs_direction(&g, &s_hist, &y_hist, h0);
        let slope = dot(&g, &d);
        let (d, slope) = if slope < 0.0 { (d, slope) } else {
            let d: Vec<f64> = g.iter().map(|v| -v / h0).collect();
            let slope = dot(&g, &d);
            (d, slope)
        };
        let warm = eval.weights();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            evaluations += 1;
            if let Some((c, e)) = try_eval(&chain, &xt, problem, &warm) {
                if e.breakdown.total <= f + settings.armijo * alpha * slope {
                    accepted = Some((xt, c, e));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xt, c, e)) = accepted else {
            if !retried && !s_hist.is_empty() {
                // forget the curvature pairs and try once more along -g
                s_hist.clear();
                y_hist.clear();
                retried = true;
                continue;
            }
            stop = StopReason::LineSearchFailed;
            break;
        };
        retried = false;
        iteration += 1;
        let gt = flatten_gradient(&e.gradient);
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > settings.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let f_new = e.breakdown.total;
        let change = (f - f_new).abs() / f.abs().max(1e-300);
        x = xt;
        g = gt;
        f = f_new;
        chain = c;
        eval = e;
        log.push(LogEntry { level, iteration, grad_sup: sup_norm(&g), step: alpha, energy: eval.breakdown.clone() });
        flat_run = if change < 1e-15 { flat_run + 1 } else { 0 };
        if flat_run >= settings.stagnation_window {
            stop = StopReason::Stagnated;
            break;
        }
    }
    let report = LevelReport {
        level,
        t,
        iterations: iteration,
        evaluations,
        stop,
        grad_sup: sup_norm(&g),
        energy: eval.breakdown.clone(),
        rejittered: false,
    };
    LevelOutcome { chain, eval, report }
}

/// Two-loop recursion; returns the search direction `-H g`.
fn lbfgs_direction(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>], h0: f64) -> Vec<f64> {
    let mut q = g.to_vec();
    let m = s_hist.len();
    let mut alphas = vec![0.0; m];
    let rhos: Vec<f64> = (0..m).map(|i| 1.0 / dot(&y_hist[i], &s_hist[i])).collect();
    for i in (0..m).rev() {
        let a = rhos[i] * dot(&s_hist[i], &q);
        alphas[i] = a;
        q.iter_mut().zip(&y_hist[i]).for_each(|(qv, yv)| *qv -= a * yv);
    }
    let gamma = match m {
        0 => 1.0 / h0,
        _ => dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]),
    };
    q.iter_mut().for_each(|v| *v *= gamma);
    for i in 0..m {
        let b = rhos[i] * dot(&y_hist[i], &q);
        q.iter_mut().zip(&s_hist[i]).for_each(|(qv, sv)| *qv += (alphas[i] - b) * sv);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Evaluates a chain, re-jittering interior maps that hit a coincidence.
fn evaluate_start(
    chain: &mut Chain,
    problem: &Problem,
    warm: &[DualWeights],
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Evaluation, bool)> {
    let mut rejittered = false;
    for attempt in 0..4 {
        let w = if !warm.is_empty() && warm.iter().all(|w| !w.is_empty()) { Some(warm) } else { None };
        match evaluate(chain, problem, w) {
            Ok(e) => return Ok((e, rejittered)),
            Err(Error::CoincidentPoints { .. }) if attempt < 3 => {
                let t = chain.t();
                for m in &mut chain.maps[1..t] {
                    rejittered |= separate(m, jitter, rng, false);
                }
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("the loop returns on its last attempt")
}

/// Callback invoked after each level, e.g. to write a checkpoint.
pub type LevelHook<'a> = dyn FnMut(&SolveState) -> Result<()> + 'a;

/// Runs all refinement levels from the linear initial guess.
pub fn minimize(config: &SolveConfig, problem: &Problem, hook: Option<&mut LevelHook<'_>>) -> Result<SolveState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = config.jitter_scale.unwrap_or(1e-6 * problem.domain.diameter());
    let chain = initialize(&problem.s_star, &problem.s_end, config.t0, jitter, &mut rng)?;
    let state = SolveState {
        chain,
        weights: Vec::new(),
        level: 0,
        lambda: problem.lambda,
        energy_log: Vec::new(),
        levels: Vec::new(),
        rng,
    };
    resume(config, problem, state, hook)
}

/// Continues a solve from a state whose current level has not been run yet
/// (as produced by [`minimize`] or stored in a checkpoint).
pub fn resume(
    config: &SolveConfig,
    problem: &Problem,
    mut state: SolveState,
    mut hook: Option<&mut LevelHook<'_>>,
) -> Result<SolveState> {
    let levels = config.levels()?;
    let jitter = config.jitter_scale.unwrap_or(1e-6 * problem.domain.diameter());
    while state.level < levels.len() {
        let mut chain = state.chain.clone();
        if chain.t() != levels[state.level] {
            return Err(Error::InvalidInput(format!(
                "state has T = {} but level {} expects T = {}",
                chain.t(),
                state.level,
                levels[state.level]
            )));
        }
        let (eval, rejittered) = evaluate_start(&mut chain, problem, &state.weights, jitter, &mut state.rng)?;
        let mut out = minimize_level(chain, eval, problem, config, state.level, &mut state.energy_log);
        out.report.rejittered = rejittered;
        state.levels.push(out.report);
        state.weights = out.eval.weights();
        state.chain = out.chain;
        state.level += 1;
        if state.level < levels.len() {
            let t_coarse = state.chain.t();
            let (refined, jittered) = refine(&state.chain, jitter, &mut state.rng);
            state.chain = refined;
            state.weights = refine_weights(&state.weights, t_coarse);
            if jittered {
                if let Some(last) = state.levels.last_mut() {
                    last.rejittered = true;
                }
            }
        }
        if let Some(h) = hook.as_deref_mut() {
            h(&state)?;
        }
    }
    Ok(state)
}

/// Sup over interior maps and cells of
/// `|T² (m_{i-1} - 2 m_i + m_{i+1}) - T λ (m_i - bary_i)|`, which is
/// the norm of `N T / 2` times each particle's interior gradient vector.
pub fn stationarity_residual(chain: &Chain, eval: &Evaluation, lambda: f64) -> f64 {
    let t = chain.t();
    let tf = t as f64;
    let mut worst: f64 = 0.0;
    for i in 1..t {
        let bary = &eval.transport[i - 1].cell_barycenters;
        let (prev, cur, next) = (&chain.maps[i - 1].values, &chain.maps[i].values, &chain.maps[i + 1].values);
        for (j, b) in bary.iter().enumerate() {
            let sd = prev[j] - cur[j] * 2.0 + next[j];
            let r = sd * (tf * tf) - (cur[j] - *b) * (tf * lambda);
            worst = worst.max(r.norm());
        }
    }
    worst
}
