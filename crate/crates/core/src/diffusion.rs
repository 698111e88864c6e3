//! Time-discretized Brownian and drifted walker propagation with
//! Feynman-Kac weight accumulation, exit detection on nodal surfaces, and
//! population control.
//!
//! Determinism contract: for a fixed `(seed, config)` the result is
//! bit-identical regardless of how many threads advance the walkers. Every
//! walker slot draws from its own counter-based stream (see [`crate::rng`])
//! and all reductions run in slot order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::model::Model;
use crate::rng::{RngFactory, StreamPurpose};
use crate::trial::TrialWaveFunction;

/// Discrete-monitoring boundary correction: the absorbing level is pulled
/// into the domain by `BETA sqrt(dt) |grad psi|`, compensating the
/// first-order bias of checking for exits only at grid times
/// (Broadie-Glasserman-Kou continuity correction).
pub const EXIT_SHIFT_BETA: f64 = 0.5826;

/// Log-weights are clamped here instead of underflowing to -inf.
pub const LOG_WEIGHT_FLOOR: f64 = -745.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMode {
    Plain,
    Drifted,
}

#[derive(Debug, Clone)]
pub struct PropagationConfig {
    pub dt: f64,
    pub total_time: f64,
    /// Feynman-Kac shift; must stay below the groundstate energy.
    pub lambda: f64,
    pub mode: PropagationMode,
    /// Steps between population-control checkpoints.
    pub resample_interval: usize,
    /// Resample when the effective sample size drops below this fraction of
    /// the population.
    pub ess_fraction: f64,
    /// Exit refinement stops when `|psi| <= bisection_tol |grad psi| sqrt(dt)`.
    pub bisection_tol: f64,
    /// Equilibration time; estimators reject ensembles short of it.
    pub burn_in: f64,
    /// Apply the discrete-monitoring boundary correction (plain mode only).
    pub exit_shift_correction: bool,
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt >= 0.0) || !(self.total_time >= 0.0) {
            return Err(CoreError::InvalidConfig("dt and T must be nonnegative".into()));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return Err(CoreError::InvalidConfig("ess_fraction must be in (0, 1]".into()));
        }
        if self.resample_interval == 0 {
            return Err(CoreError::InvalidConfig("resample_interval must be >= 1".into()));
        }
        if self.burn_in > self.total_time {
            return Err(CoreError::InvalidConfig("burn_in exceeds total_time".into()));
        }
        Ok(())
    }
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            total_time: 3.0,
            lambda: 0.0,
            mode: PropagationMode::Plain,
            resample_interval: 25,
            ess_fraction: 0.5,
            bisection_tol: 1e-3,
            burn_in: 1.5,
            exit_shift_correction: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkerStatus {
    Alive,
    Exited,
}

#[derive(Debug, Clone)]
pub struct Walker {
    pub position: Vec<f64>,
    /// Log of the accumulated Feynman-Kac weight.
    pub log_weight: f64,
    pub clock: f64,
    pub status: WalkerStatus,
    pub exit_point: Option<Vec<f64>>,
    pub exit_time: Option<f64>,
    /// Ancestry block label, inherited through resampling; drives the
    /// delete-block jackknife.
    pub block: u32,
    /// Set when the walker was terminated on a non-finite position.
    pub blowup: bool,
}

impl Walker {
    pub fn alive(&self) -> bool {
        self.status == WalkerStatus::Alive
    }
}

#[derive(Debug, Clone)]
pub struct HistoryRecord {
    pub time: f64,
    /// Log of the mean-weight multiplier accumulated since the previous
    /// record; the partial sums reconstruct the survival-weighted
    /// normalization `log Z(t)`.
    pub log_increment: f64,
}

/// The walker population with its normalization history.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub walkers: Vec<Walker>,
    pub history: Vec<HistoryRecord>,
    pub rng_seed: u64,
    pub dt: f64,
    pub mode: PropagationMode,
    pub lambda: f64,
    pub burn_in: f64,
    pub clock: f64,
    pub block_count: u32,
    /// Per history record: per ancestry block, log sum of alive weights.
    per_block_log_sums: Vec<Vec<f64>>,
    log_z_prev: f64,
    pub underflow_clamps: u64,
    pub bisection_failures: u64,
    pub resample_events: u64,
}

impl Ensemble {
    pub fn alive_count(&self) -> usize {
        self.walkers.iter().filter(|w| w.alive()).count()
    }

    /// `log Z(t) = log((1/N) sum_alive exp(log_weight))` at the current time.
    pub fn log_normalization(&self) -> f64 {
        let logs: Vec<f64> =
            self.walkers.iter().filter(|w| w.alive()).map(|w| w.log_weight).collect();
        if logs.is_empty() {
            return f64::NEG_INFINITY;
        }
        log_sum_exp(&logs) - (self.walkers.len() as f64).ln()
    }

    /// Cumulative `log Z(t_k)` at each history record.
    pub fn log_z_series(&self) -> Vec<(f64, f64)> {
        let mut acc = 0.0;
        self.history
            .iter()
            .map(|r| {
                acc += r.log_increment;
                (r.time, acc)
            })
            .collect()
    }

    pub fn per_block_log_sums(&self) -> &[Vec<f64>] {
        &self.per_block_log_sums
    }

    /// Initial walkers per ancestry block (blocks are contiguous slot ranges).
    pub fn block_size(&self) -> f64 {
        self.walkers.len() as f64 / self.block_count as f64
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Drift and weight-rate caps for the drifted mode near nodes, in units of
/// 1/sqrt(dt) (standard short-time limiting of guided dynamics).
const DRIFT_CAP: f64 = 1.0;
const LOCAL_ENERGY_CAP: f64 = 2.0;

/// One Euler-Maruyama step plus exit bookkeeping for a single walker.
/// The hot loops inline the same logic through [`Propagator`].
pub fn advance_walker(
    walker: &Walker,
    model: &Model,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    config: &PropagationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Walker> {
    let mut w = walker.clone();
    if !w.alive() || config.dt == 0.0 {
        return Ok(w);
    }
    let prop = Propagator::new(model, family, theta, config);
    let mut scratch = StepScratch::new(model.dimension());
    let mut psi_prev = family.value(theta, &w.position);
    prop.step(&mut w, &mut psi_prev, rng, &mut scratch);
    Ok(w)
}

/// Shared per-step scratch buffers.
struct StepScratch {
    grad: Vec<f64>,
    proposal: Vec<f64>,
    refine_mid: Vec<f64>,
}

impl StepScratch {
    fn new(dim: usize) -> Self {
        Self { grad: vec![0.0; dim], proposal: vec![0.0; dim], refine_mid: vec![0.0; dim] }
    }
}

struct StepOutcome {
    exited: bool,
    bisection_failed: bool,
}

/// Borrowed context for stepping walkers of one `(model, family, theta)`.
pub struct Propagator<'a> {
    model: &'a Model,
    family: &'a dyn TrialWaveFunction,
    theta: &'a [f64],
    config: &'a PropagationConfig,
    sqrt_dt: f64,
    exit_shift: f64,
}

impl<'a> Propagator<'a> {
    pub fn new(
        model: &'a Model,
        family: &'a dyn TrialWaveFunction,
        theta: &'a [f64],
        config: &'a PropagationConfig,
    ) -> Self {
        let sqrt_dt = config.dt.sqrt();
        let exit_shift =
            if config.exit_shift_correction && matches!(config.mode, PropagationMode::Plain) {
                EXIT_SHIFT_BETA * sqrt_dt
            } else {
                0.0
            };
        Self { model, family, theta, config, sqrt_dt, exit_shift }
    }

    /// Feynman-Kac integrand `g(x) - lambda` for the configured mode.
    fn weight_rate(&self, x: &[f64], psi: f64) -> f64 {
        match self.config.mode {
            PropagationMode::Plain => self.model.potential(x) - self.config.lambda,
            PropagationMode::Drifted => {
                // Local energy with a short-time cap near the nodes.
                let lap = self.family.laplacian(self.theta, x);
                let mut e_loc = self.model.potential(x) - lap / (2.0 * psi);
                let cap = LOCAL_ENERGY_CAP / self.sqrt_dt;
                if !e_loc.is_finite() {
                    e_loc = self.config.lambda + cap;
                }
                (e_loc - self.config.lambda).clamp(-cap, cap)
            }
        }
    }

    /// Advances one walker by one step; `psi_prev` carries the trial value
    /// at the walker's current position and is updated in place.
    fn step(
        &self,
        w: &mut Walker,
        psi_prev: &mut f64,
        rng: &mut ChaCha8Rng,
        scratch: &mut StepScratch,
    ) -> StepOutcome {
        let dt = self.config.dt;
        let d = w.position.len();
        let g_prev = self.weight_rate(&w.position, *psi_prev);

        // Proposal: x' = x + b dt + sqrt(dt) xi.
        for i in 0..d {
            let xi: f64 = rng.sample(StandardNormal);
            scratch.proposal[i] = w.position[i] + self.sqrt_dt * xi;
        }
        if matches!(self.config.mode, PropagationMode::Drifted) {
            // b = grad(psi)/psi, magnitude-limited to DRIFT_CAP/sqrt(dt).
            self.family.gradient(self.theta, &w.position, &mut scratch.grad);
            let inv_psi = 1.0 / *psi_prev;
            let mut norm2 = 0.0;
            for g in scratch.grad.iter_mut() {
                *g *= inv_psi;
                norm2 += *g * *g;
            }
            let norm = norm2.sqrt();
            let cap = DRIFT_CAP / self.sqrt_dt;
            let scale = if norm > cap { cap / norm } else { 1.0 };
            for i in 0..d {
                scratch.proposal[i] += scratch.grad[i] * scale * dt;
            }
        }

        if scratch.proposal.iter().any(|v| !v.is_finite()) {
            // Potential blow-up: terminate with a diagnostic flag.
            w.status = WalkerStatus::Exited;
            w.blowup = true;
            w.exit_point = Some(w.position.clone());
            w.exit_time = Some(w.clock);
            return StepOutcome { exited: true, bisection_failed: false };
        }

        let psi_next = self.family.value(self.theta, &scratch.proposal);
        let sign_ref = psi_prev.signum();

        // Exit tests: a sign change always exits; in corrected plain mode a
        // proposal within the shifted absorbing level exits as well.
        let crossed = sign_ref * psi_next <= 0.0;
        let mut shift_hit = false;
        if !crossed && self.exit_shift > 0.0 {
            self.family.gradient(self.theta, &scratch.proposal, &mut scratch.grad);
            let grad_norm = scratch.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            shift_hit = sign_ref * psi_next < self.exit_shift * grad_norm;
        }

        if crossed || shift_hit {
            let (frac, failed) = self.refine_exit(w, crossed, scratch);
            let part = frac * dt;
            let g_exit = match self.config.mode {
                PropagationMode::Plain => {
                    self.model.potential(&scratch.refine_mid) - self.config.lambda
                }
                // The rate at the previous point is the stable choice on the
                // node itself.
                PropagationMode::Drifted => g_prev,
            };
            w.log_weight =
                clamp_log(w.log_weight - 0.5 * part * (g_prev + g_exit), &mut w.blowup);
            w.clock += part;
            w.status = WalkerStatus::Exited;
            w.exit_point = Some(scratch.refine_mid.clone());
            w.exit_time = Some(w.clock);
            return StepOutcome { exited: true, bisection_failed: failed };
        }

        let g_next = self.weight_rate(&scratch.proposal, psi_next);
        w.log_weight = clamp_log(w.log_weight - 0.5 * dt * (g_prev + g_next), &mut w.blowup);
        w.position.copy_from_slice(&scratch.proposal);
        w.clock += dt;
        *psi_prev = psi_next;
        StepOutcome { exited: false, bisection_failed: false }
    }

    /// Locates the exit point. Sign changes bisect the straight segment to
    /// `|psi| <= bisection_tol |grad psi| sqrt(dt)`, then a few Newton
    /// projections put the point on the node to machine precision.
    /// Shift-triggered exits project the proposal directly. Returns the time
    /// fraction of the step spent before exit and a tolerance-failure flag.
    fn refine_exit(&self, w: &Walker, crossed: bool, scratch: &mut StepScratch) -> (f64, bool) {
        let mut failed = false;
        let mut frac = 1.0;
        if crossed {
            let mut psi_lo = self.family.value(self.theta, &w.position);
            let mut lo = 0.0f64;
            let mut hi = 1.0f64;
            let mut ok = false;
            for iter in 0..60 {
                let mid = 0.5 * (lo + hi);
                for i in 0..scratch.refine_mid.len() {
                    scratch.refine_mid[i] =
                        w.position[i] + mid * (scratch.proposal[i] - w.position[i]);
                }
                let psi_mid = self.family.value(self.theta, &scratch.refine_mid);
                self.family.gradient(self.theta, &scratch.refine_mid, &mut scratch.grad);
                let grad_norm = scratch.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                let tol = self.config.bisection_tol * grad_norm * self.sqrt_dt;
                frac = mid;
                if psi_mid.abs() <= tol && iter >= 1 {
                    ok = true;
                    break;
                }
                if psi_mid * psi_lo > 0.0 {
                    lo = mid;
                    psi_lo = psi_mid;
                } else {
                    hi = mid;
                }
            }
            failed = !ok;
        } else {
            scratch.refine_mid.copy_from_slice(&scratch.proposal);
        }
        // Newton polish onto the node.
        for _ in 0..4 {
            let psi = self.family.value(self.theta, &scratch.refine_mid);
            self.family.gradient(self.theta, &scratch.refine_mid, &mut scratch.grad);
            let grad2: f64 = scratch.grad.iter().map(|g| g * g).sum();
            if grad2 == 0.0 || !grad2.is_finite() || psi.abs() <= 1e-13 * (1.0 + grad2.sqrt()) {
                break;
            }
            let step = psi / grad2;
            for i in 0..scratch.refine_mid.len() {
                scratch.refine_mid[i] -= step * scratch.grad[i];
            }
        }
        (frac, failed)
    }
}

fn clamp_log(lw: f64, blowup: &mut bool) -> f64 {
    if lw < LOG_WEIGHT_FLOOR {
        LOG_WEIGHT_FLOOR
    } else if !lw.is_finite() {
        *blowup = true;
        LOG_WEIGHT_FLOOR
    } else {
        lw
    }
}

/// Refined exit point and absolute exit time.
pub type ExitRecord = (Vec<f64>, f64);

/// Standalone exit check between two walker states: returns the refined exit
/// record when the trial function changes sign across the straight segment
/// (or the end point is numerically on the node), `None` otherwise.
pub fn detect_and_refine_exit(
    prev: &Walker,
    next: &Walker,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    config: &PropagationConfig,
) -> Result<Option<ExitRecord>> {
    if !prev.alive() {
        return Err(CoreError::InvalidConfig("exit detection needs a live source walker".into()));
    }
    let psi_prev = family.value(theta, &prev.position);
    let psi_next = family.value(theta, &next.position);
    let sqrt_dt = config.dt.sqrt();
    let near_tol = config.bisection_tol * family.gradient_norm(theta, &next.position) * sqrt_dt;
    if psi_prev.signum() * psi_next > 0.0 && psi_next.abs() > near_tol {
        return Ok(None);
    }
    let d = prev.position.len();
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut psi_lo = psi_prev;
    let mut mid_point = vec![0.0; d];
    let mut frac = 1.0;
    let mut ok = false;
    for iter in 0..60 {
        let mid = 0.5 * (lo + hi);
        for i in 0..d {
            mid_point[i] = prev.position[i] + mid * (next.position[i] - prev.position[i]);
        }
        let psi_mid = family.value(theta, &mid_point);
        let grad_norm = family.gradient_norm(theta, &mid_point);
        let tol = config.bisection_tol * grad_norm * sqrt_dt;
        frac = mid;
        if psi_mid.abs() <= tol && iter >= 1 {
            ok = true;
            break;
        }
        if psi_mid * psi_lo > 0.0 {
            lo = mid;
            psi_lo = psi_mid;
        } else {
            hi = mid;
        }
    }
    if !ok {
        return Err(CoreError::BisectionStalled { iterations: 60 });
    }
    Ok(Some((mid_point, prev.clock + frac * config.dt)))
}

/// Effective sample size of the alive walkers, `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(walkers: &[Walker]) -> f64 {
    let logs: Vec<f64> = walkers.iter().filter(|w| w.alive()).map(|w| w.log_weight).collect();
    if logs.is_empty() {
        return 0.0;
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for l in &logs {
        let w = (l - m).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / s2
}

/// Systematic resampling over the alive walkers, proportional to their
/// weights. Afterwards every slot is alive again with equal log-weight set
/// to the log of the pre-resampling mean weight (dead slots counting zero),
/// which preserves the running normalization `Z(t)` exactly. Exited
/// walkers' records take no part in the draw; their slots are refilled by
/// copies of alive walkers, which is what keeps the population from dying
/// out on long horizons.
pub fn resample_population(ensemble: &mut Ensemble, rng: &mut ChaCha8Rng) -> Result<()> {
    let n = ensemble.walkers.len();
    let alive_idx: Vec<usize> = (0..n).filter(|&i| ensemble.walkers[i].alive()).collect();
    if alive_idx.is_empty() {
        return Err(CoreError::Extinction);
    }
    let max_lw = alive_idx
        .iter()
        .map(|&i| ensemble.walkers[i].log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = alive_idx
        .iter()
        .map(|&i| (ensemble.walkers[i].log_weight - max_lw).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    // Mean weight over the whole population (dead slots count zero).
    let log_mean = max_lw + (total / n as f64).ln();

    // Systematic draw: one uniform offset, N aligned points.
    let offset: f64 = rng.gen::<f64>();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0usize;
    for k in 0..n {
        let u = (k as f64 + offset) / n as f64 * total;
        while u > cum && j + 1 < weights.len() {
            j += 1;
            cum += weights[j];
        }
        let src = &ensemble.walkers[alive_idx[j]];
        let mut w = src.clone();
        w.log_weight = log_mean;
        out.push(w);
    }
    ensemble.walkers = out;
    ensemble.resample_events += 1;
    Ok(())
}

fn sample_initial_position(
    model: &Model,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    mode: PropagationMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let bounds = model.bounds();
    let d = model.dimension();
    let uniform = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|a| {
                let (lo, hi) = bounds[a];
                lo + (hi - lo) * rng.gen::<f64>()
            })
            .collect()
    };
    // Uniform on the box intersected with the positive nodal domain.
    let mut start = None;
    for _ in 0..100_000 {
        let x = uniform(rng);
        if family.value(theta, &x) > 0.0 {
            start = Some(x);
            break;
        }
    }
    let start = start.ok_or_else(|| {
        CoreError::InvalidConfig("positive nodal domain has negligible box volume".into())
    })?;
    match mode {
        PropagationMode::Plain => Ok(start),
        PropagationMode::Drifted => {
            // Metropolis chain targeting psi^2 restricted to the positive
            // domain, started from the uniform draw.
            let mut x = start;
            let mut psi = family.value(theta, &x);
            let scale: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.125 * (hi - lo)).collect();
            let mut proposal = vec![0.0; d];
            for _ in 0..256 {
                for i in 0..d {
                    let xi: f64 = rng.sample(StandardNormal);
                    proposal[i] = x[i] + scale[i] * xi;
                }
                let psi_new = family.value(theta, &proposal);
                if psi_new > 0.0 {
                    let ratio = (psi_new / psi).powi(2);
                    if ratio >= 1.0 || rng.gen::<f64>() < ratio {
                        x.copy_from_slice(&proposal);
                        psi = psi_new;
                    }
                }
            }
            Ok(x)
        }
    }
}

/// Number of ancestry blocks used by the jackknife bookkeeping.
pub const ANCESTRY_BLOCKS: u32 = 16;

/// Propagates a fresh ensemble of `n_walkers` to `config.total_time` with
/// population control, returning the final population together with the
/// weight history needed to reconstruct the survival-weighted normalization.
pub fn propagate_ensemble(
    model: &Model,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    config: &PropagationConfig,
    n_walkers: usize,
    seed: u64,
) -> Result<Ensemble> {
    config.validate()?;
    if n_walkers < 2 {
        return Err(CoreError::InvalidConfig("need at least 2 walkers".into()));
    }
    let init_factory = RngFactory::new(seed, StreamPurpose::Init);
    let walkers: Vec<Walker> = (0..n_walkers)
        .into_par_iter()
        .map(|slot| {
            let mut rng = init_factory.stream(0, slot as u32);
            let position = sample_initial_position(model, family, theta, config.mode, &mut rng)?;
            Ok(Walker {
                position,
                log_weight: 0.0,
                clock: 0.0,
                status: WalkerStatus::Alive,
                exit_point: None,
                exit_time: None,
                block: (slot as u64 * ANCESTRY_BLOCKS as u64 / n_walkers as u64) as u32,
                blowup: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ensemble = Ensemble {
        walkers,
        history: Vec::new(),
        rng_seed: seed,
        dt: config.dt,
        mode: config.mode,
        lambda: config.lambda,
        burn_in: config.burn_in,
        clock: 0.0,
        block_count: ANCESTRY_BLOCKS,
        per_block_log_sums: Vec::new(),
        log_z_prev: 0.0,
        underflow_clamps: 0,
        bisection_failures: 0,
        resample_events: 0,
    };
    if config.total_time == 0.0 || config.dt == 0.0 {
        return Ok(ensemble);
    }

    let total_steps = (config.total_time / config.dt).round() as usize;
    let prop = Propagator::new(model, family, theta, config);
    let prop_factory = RngFactory::new(seed, StreamPurpose::Propagation);
    let resample_factory = RngFactory::new(seed, StreamPurpose::Resampling);

    let mut steps_done = 0usize;
    let mut epoch: u32 = 0;
    while steps_done < total_steps {
        let steps_this_epoch = config.resample_interval.min(total_steps - steps_done);
        let dim = model.dimension();
        let outcomes: Vec<(Walker, u64)> = ensemble
            .walkers
            .par_iter()
            .enumerate()
            .map(|(slot, w)| {
                let mut w = w.clone();
                if !w.alive() {
                    return (w, 0);
                }
                let mut rng = prop_factory.stream(epoch, slot as u32);
                let mut scratch = StepScratch::new(dim);
                let mut psi = family.value(theta, &w.position);
                let mut failures = 0u64;
                for _ in 0..steps_this_epoch {
                    let outcome = prop.step(&mut w, &mut psi, &mut rng, &mut scratch);
                    if outcome.bisection_failed {
                        failures += 1;
                    }
                    if outcome.exited {
                        break;
                    }
                }
                (w, failures)
            })
            .collect();
        ensemble.bisection_failures += outcomes.iter().map(|(_, f)| f).sum::<u64>();
        ensemble.walkers = outcomes.into_iter().map(|(w, _)| w).collect();
        steps_done += steps_this_epoch;
        epoch += 1;
        ensemble.clock = steps_done as f64 * config.dt;

        // Normalization checkpoint.
        let log_z = ensemble.log_normalization();
        if log_z == f64::NEG_INFINITY {
            return Err(CoreError::Extinction);
        }
        ensemble.history.push(HistoryRecord {
            time: ensemble.clock,
            log_increment: log_z - ensemble.log_z_prev,
        });
        let mut block_sums = vec![f64::NEG_INFINITY; ANCESTRY_BLOCKS as usize];
        for w in ensemble.walkers.iter().filter(|w| w.alive()) {
            let b = w.block as usize;
            block_sums[b] = log_add(block_sums[b], w.log_weight);
        }
        ensemble.per_block_log_sums.push(block_sums);
        ensemble.log_z_prev = log_z;

        // Population control.
        let ess = effective_sample_size(&ensemble.walkers);
        if ess < config.ess_fraction * ensemble.walkers.len() as f64 && steps_done < total_steps {
            let mut rng = resample_factory.stream(epoch, 0);
            resample_population(&mut ensemble, &mut rng)?;
        }
    }
    Ok(ensemble)
}

/// One exit sample of the weighted hitting distribution.
#[derive(Debug, Clone)]
pub struct HittingSample {
    /// Exit point on the nodal surface (last position when censored).
    pub point: Vec<f64>,
    /// Log of the full-path weight including the burn-in prefix (and the
    /// guide correction after drifted burn-in).
    pub log_weight: f64,
    pub exit_time: f64,
    pub censored: bool,
    pub block: u32,
}

impl HittingSample {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Result of the weight-only continuation to the nodes.
#[derive(Debug, Clone)]
pub struct ContinuationOutcome {
    pub samples: Vec<HittingSample>,
    pub censored: Vec<HittingSample>,
    /// Per source walker: log-weight at the start of the continuation under
    /// the plain-density convention (drifted ensembles are reweighted by
    /// 1/psi_I so that the start distribution is the groundstate density).
    pub denominator_log_weights: Vec<f64>,
    pub denominator_blocks: Vec<u32>,
    /// Positions of the source walkers at the start of the continuation
    /// (the final burn-in slice), for denominator functionals.
    pub denominator_positions: Vec<Vec<f64>>,
    /// Largest |psi| over the recorded exit points (node-contact check).
    pub exit_psi_max: f64,
    pub bisection_failures: u64,
}

impl ContinuationOutcome {
    pub fn censored_fraction(&self) -> f64 {
        let total = self.samples.len() + self.censored.len();
        if total == 0 {
            0.0
        } else {
            self.censored.len() as f64 / total as f64
        }
    }
}

/// Propagates every alive walker of `ensemble` without resampling,
/// accumulating plain Feynman-Kac weights, until it exits the nodal domain
/// or `max_time` elapses. Censored walkers are reported separately with
/// their weights for the truncation-bias bound.
pub fn continue_to_exit(
    ensemble: &Ensemble,
    model: &Model,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    config: &PropagationConfig,
    max_time: f64,
    seed: u64,
) -> Result<ContinuationOutcome> {
    config.validate()?;
    // Continuation is plain-Brownian regardless of how the ensemble was
    // equilibrated; a drifted start distribution is importance-corrected.
    let plain_config = PropagationConfig { mode: PropagationMode::Plain, ..config.clone() };
    let prop = Propagator::new(model, family, theta, &plain_config);
    let factory = RngFactory::new(seed, StreamPurpose::Continuation);
    let drifted_start = matches!(ensemble.mode, PropagationMode::Drifted);

    let max_steps = (max_time / config.dt).ceil() as usize;
    let sources: Vec<(usize, &Walker)> =
        ensemble.walkers.iter().enumerate().filter(|(_, w)| w.alive()).collect();

    let results: Vec<(HittingSample, f64, u32, Vec<f64>, u64)> = sources
        .par_iter()
        .map(|(slot, src)| {
            let mut rng = factory.stream(0, *slot as u32);
            let mut scratch = StepScratch::new(model.dimension());
            let mut w = (*src).clone();
            // The clock now measures the continuation phase; weights keep
            // accumulating on top of the burn-in value.
            let start_log_weight = if drifted_start {
                w.log_weight - family.value(theta, &w.position).abs().ln()
            } else {
                w.log_weight
            };
            w.log_weight = start_log_weight;
            w.clock = 0.0;
            let mut psi = family.value(theta, &w.position);
            let mut failures = 0u64;
            let mut exited = false;
            for _ in 0..max_steps {
                let outcome = prop.step(&mut w, &mut psi, &mut rng, &mut scratch);
                if outcome.bisection_failed {
                    failures += 1;
                }
                if outcome.exited {
                    exited = true;
                    break;
                }
                if w.clock >= max_time {
                    break;
                }
            }
            let sample = if exited {
                HittingSample {
                    point: w.exit_point.clone().unwrap_or_else(|| w.position.clone()),
                    log_weight: w.log_weight,
                    exit_time: w.exit_time.unwrap_or(w.clock),
                    censored: false,
                    block: w.block,
                }
            } else {
                HittingSample {
                    point: w.position.clone(),
                    log_weight: w.log_weight,
                    exit_time: w.clock,
                    censored: true,
                    block: w.block,
                }
            };
            (sample, start_log_weight, src.block, src.position.clone(), failures)
        })
        .collect();

    let mut outcome = ContinuationOutcome {
        samples: Vec::new(),
        censored: Vec::new(),
        denominator_log_weights: Vec::with_capacity(results.len()),
        denominator_blocks: Vec::with_capacity(results.len()),
        denominator_positions: Vec::with_capacity(results.len()),
        exit_psi_max: 0.0,
        bisection_failures: 0,
    };
    for (sample, start_lw, block, position, failures) in results {
        outcome.denominator_log_weights.push(start_lw);
        outcome.denominator_blocks.push(block);
        outcome.denominator_positions.push(position);
        outcome.bisection_failures += failures;
        if sample.censored {
            outcome.censored.push(sample);
        } else {
            let psi_abs = family.value(theta, &sample.point).abs();
            outcome.exit_psi_max = outcome.exit_psi_max.max(psi_abs);
            outcome.samples.push(sample);
        }
    }
    Ok(outcome)
}
