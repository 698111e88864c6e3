//! Statistical estimators over walker populations and hitting samples:
//! stationary-distribution averages, groundstate energies from the
//! survival-weighted normalization decay, variational energies, the weighted
//! hitting distribution on the nodes, fixed-node energy gradients (surface
//! and bulk forms), shape derivatives of box domains, and the nodal symmetry
//! diagnostic.

use std::collections::BTreeMap;

use crate::diffusion::{log_sum_exp, ContinuationOutcome, Ensemble, PropagationMode};
use crate::error::{CoreError, Result};
use crate::model::{local_energy, Model};
use crate::rng::{RngFactory, StreamPurpose};
use crate::symmetry::SymmetryGroup;
use crate::trial::TrialWaveFunction;
use rand::Rng;
use rand_distr::StandardNormal;

pub mod blocking;
pub mod jackknife;

pub use blocking::{blocking_error, weighted_blocking_error, BlockingResult};
pub use jackknife::{RatioAccumulator, RatioEstimate};

/// A named scalar observable of the configuration.
pub type Observable = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// An estimate with its uncertainty; scalars are length-1 vectors.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EstimateWithError {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    pub n_effective: f64,
    pub method: String,
    pub metadata: BTreeMap<String, String>,
}

impl EstimateWithError {
    pub fn scalar(value: f64, std_error: f64, n_effective: f64, method: &str) -> Self {
        Self {
            value: vec![value],
            std_error: vec![std_error],
            covariance: None,
            n_effective,
            method: method.to_string(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn scalar_value(&self) -> f64 {
        self.value[0]
    }

    pub fn scalar_error(&self) -> f64 {
        self.std_error[0]
    }

    pub fn with_note(mut self, key: &str, note: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), note.to_string());
        self
    }
}

/// Effective sample size of a set of log-weights.
fn ess_of_logs(logs: &[f64]) -> f64 {
    if logs.is_empty() {
        return 0.0;
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut s1, mut s2) = (0.0, 0.0);
    for l in logs {
        let w = (l - m).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / s2
}

/// The alive walkers of a propagated ensemble as a weighted sample of the
/// stationary conditioned distribution: density proportional to the
/// groundstate in plain mode and to groundstate times guide in drifted mode.
#[derive(Debug)]
pub struct EtaSample {
    pub positions: Vec<Vec<f64>>,
    pub log_weights: Vec<f64>,
    pub blocks: Vec<u32>,
    pub mode: PropagationMode,
    pub warnings: Vec<String>,
}

pub fn estimate_eta(ensemble: &Ensemble) -> Result<EtaSample> {
    if ensemble.clock < ensemble.burn_in {
        return Err(CoreError::InvalidConfig(format!(
            "ensemble at t = {} has not passed burn-in {}",
            ensemble.clock, ensemble.burn_in
        )));
    }
    let mut positions = Vec::new();
    let mut log_weights = Vec::new();
    let mut blocks = Vec::new();
    for w in ensemble.walkers.iter().filter(|w| w.alive()) {
        positions.push(w.position.clone());
        log_weights.push(w.log_weight);
        blocks.push(w.block);
    }
    let mut warnings = Vec::new();
    if positions.len() < 100 {
        warnings.push(format!("low-sample: only {} alive walkers", positions.len()));
    }
    Ok(EtaSample { positions, log_weights, blocks, mode: ensemble.mode, warnings })
}

impl EtaSample {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Weighted mean of `f` with a blocking error over the slot-ordered
    /// series (resampling copies sit adjacently, so blocking absorbs their
    /// correlation).
    pub fn mean(&self, name: &str, f: impl Fn(&[f64]) -> f64) -> Result<EstimateWithError> {
        let max_lw = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = self.log_weights.iter().map(|l| (l - max_lw).exp()).collect();
        let values: Vec<f64> = self.positions.iter().map(|p| f(p)).collect();
        let mean = blocking::weighted_mean(&values, &weights);
        let blocked = weighted_blocking_error(&values, &weights)?;
        let mut est = EstimateWithError::scalar(
            mean,
            blocked.std_error,
            ess_of_logs(&self.log_weights),
            "eta-weighted-mean-blocking",
        );
        est.metadata.insert("observable".into(), name.into());
        if !blocked.plateau_found {
            est.metadata.insert("blocking".into(), "no plateau; max-level error".into());
        }
        for w in &self.warnings {
            est.metadata.insert("warning".into(), w.clone());
        }
        Ok(est)
    }
}

/// Groundstate energy from the decay rate of the survival-weighted
/// normalization: least-squares slope of `-log Z(t)` over the second half of
/// the horizon, with the shift restored and a delete-block jackknife error.
pub fn estimate_energy_extinction(ensemble: &Ensemble) -> Result<EstimateWithError> {
    let series = ensemble.log_z_series();
    let t_end = ensemble.clock;
    let window: Vec<(f64, f64)> =
        series.iter().cloned().filter(|(t, _)| *t >= 0.5 * t_end).collect();
    if window.len() < 10 {
        return Err(CoreError::InsufficientSamples { needed: 10, got: window.len() });
    }

    let slope = fit_slope(&window);

    // Jackknife: rebuild the log Z series with one ancestry block removed.
    let n = ensemble.walkers.len() as f64;
    let block_sums = ensemble.per_block_log_sums();
    let times: Vec<f64> = series.iter().map(|(t, _)| *t).collect();
    let n_b = ensemble.block_size();
    let mut deletions = Vec::new();
    for b in 0..ensemble.block_count as usize {
        let mut ok = true;
        let mut deleted: Vec<(f64, f64)> = Vec::with_capacity(times.len());
        for (k, t) in times.iter().enumerate() {
            if *t < 0.5 * t_end {
                continue;
            }
            let all = &block_sums[k];
            let total = log_sum_exp(all);
            let sb = all[b];
            // log(exp(total) - exp(sb)), guarded against empty complements.
            let rest = if sb == f64::NEG_INFINITY {
                total
            } else {
                let d = sb - total;
                if d >= 0.0 {
                    ok = false;
                    break;
                }
                total + (-d.exp()).ln_1p()
            };
            deleted.push((*t, rest - (n - n_b).ln()));
        }
        if ok && deleted.len() >= 2 {
            deletions.push(-fit_slope_neg(&deleted));
        }
    }
    let m = deletions.len() as f64;
    let mean_del: f64 = deletions.iter().sum::<f64>() / m;
    let var: f64 =
        deletions.iter().map(|s| (s - mean_del) * (s - mean_del)).sum::<f64>() * (m - 1.0) / m;
    let std_error = var.sqrt();

    if slope <= 0.0 && std_error > 0.0 && slope.abs() / std_error > 3.0 {
        return Err(CoreError::NonDecayingHistory { z: slope / std_error });
    }

    let energy = slope + ensemble.lambda;
    let mut est = EstimateWithError::scalar(
        energy,
        std_error,
        crate::diffusion::effective_sample_size(&ensemble.walkers),
        "extinction-rate-slope-jackknife",
    );
    est.metadata.insert("window_records".into(), window.len().to_string());
    est.metadata.insert("lambda".into(), format!("{}", ensemble.lambda));
    Ok(est)
}

/// Slope of `-y` against `t` for the (t, y) pairs.
fn fit_slope(points: &[(f64, f64)]) -> f64 {
    -fit_slope_neg(points)
}

fn fit_slope_neg(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let tm: f64 = points.iter().map(|(t, _)| t).sum::<f64>() / n;
    let ym: f64 = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in points {
        num += (t - tm) * (y - ym);
        den += (t - tm) * (t - tm);
    }
    num / den
}

/// Random-walk Metropolis estimate of the variational (trial) energy:
/// the mean local energy under the squared trial density. Skew-symmetry
/// makes sampling the whole space equivalent to sampling one nodal domain.
pub fn estimate_vmc_energy(
    model: &Model,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    n_steps: usize,
    proposal_scale: f64,
    seed: u64,
) -> Result<EstimateWithError> {
    if n_steps < 64 {
        return Err(CoreError::InsufficientSamples { needed: 64, got: n_steps });
    }
    let d = model.dimension();
    let factory = RngFactory::new(seed, StreamPurpose::Metropolis);
    let mut rng = factory.stream(0, 0);

    // Start from a point where the trial value and the local energy are both
    // well-defined (far corners of the box underflow the Gaussian envelopes).
    let bounds = model.bounds();
    let mut x = vec![0.0; d];
    let mut psi = 0.0;
    let mut start_energy = None;
    for _ in 0..100_000 {
        for a in 0..d {
            let (lo, hi) = bounds[a];
            x[a] = lo + (hi - lo) * rng.gen::<f64>();
        }
        psi = family.value(theta, &x);
        if psi != 0.0 {
            if let Ok(e) = local_energy(model, family, theta, &x) {
                start_energy = Some(e);
                break;
            }
        }
    }
    let Some(mut current_energy) = start_energy else {
        return Err(CoreError::InvalidConfig("could not find a usable start point".into()));
    };

    let burn = n_steps / 10;
    let mut proposal = vec![0.0; d];
    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(n_steps);
    let mut skipped = 0usize;
    for step in 0..(burn + n_steps) {
        for i in 0..d {
            let xi: f64 = rng.sample(StandardNormal);
            proposal[i] = x[i] + proposal_scale * xi;
        }
        let psi_new = family.value(theta, &proposal);
        let ratio = (psi_new / psi).powi(2);
        if ratio >= 1.0 || rng.gen::<f64>() < ratio {
            x.copy_from_slice(&proposal);
            psi = psi_new;
            accepted += 1;
            match local_energy(model, family, theta, &x) {
                Ok(e) => current_energy = e,
                Err(CoreError::NodeProximity { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        if step >= burn {
            samples.push(current_energy);
        }
    }

    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let blocked = blocking_error(&samples)?;
    let acceptance = accepted as f64 / (burn + n_steps) as f64;
    let mut est = EstimateWithError::scalar(
        mean,
        blocked.std_error,
        samples.len() as f64,
        "vmc-metropolis-blocking",
    );
    est.metadata.insert("acceptance_rate".into(), format!("{acceptance:.4}"));
    if skipped > 0 {
        est.metadata.insert("node_proximity_skips".into(), skipped.to_string());
    }
    if !(0.1..=0.9).contains(&acceptance) {
        // Rough Gaussian-proposal heuristic: acceptance falls with scale.
        let suggested = proposal_scale * (acceptance.max(1e-3) / 0.5).sqrt();
        est.metadata.insert(
            "warning".into(),
            format!(
                "acceptance rate {acceptance:.3} outside [0.1, 0.9]; try proposal_scale ~ {suggested:.3}"
            ),
        );
    }
    Ok(est)
}

/// Functionals of the weighted hitting distribution on the nodes.
#[derive(Debug)]
pub struct MuEstimate {
    pub total_mass: EstimateWithError,
    pub functionals: Vec<(String, EstimateWithError)>,
    /// Upper bound on the weighted mass still in flight at the continuation
    /// cutoff, relative to the denominator.
    pub censored_mass_bound: f64,
    pub warnings: Vec<String>,
}

/// Ratio estimates of the hitting measure: `mu(phi) = sum_i w_i phi(x_i) /
/// sum_j v_j` with the numerator over exit samples and the denominator over
/// the walkers alive at the start of the continuation.
pub fn estimate_mu(
    continuation: &ContinuationOutcome,
    observables: &[(String, Observable)],
) -> Result<MuEstimate> {
    if continuation.denominator_log_weights.is_empty() {
        return Err(CoreError::InsufficientSamples { needed: 1, got: 0 });
    }
    // Common scale keeps the exponentials in range.
    let scale = continuation
        .denominator_log_weights
        .iter()
        .chain(continuation.samples.iter().map(|s| &s.log_weight))
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);

    let blocks = crate::diffusion::ANCESTRY_BLOCKS as usize;
    let p = observables.len() + 1;
    let mut acc = RatioAccumulator::new(blocks, p);
    for (lw, b) in continuation
        .denominator_log_weights
        .iter()
        .zip(&continuation.denominator_blocks)
    {
        acc.add_denominator(*b, (lw - scale).exp());
    }
    let mut contrib = vec![0.0; p];
    for s in &continuation.samples {
        contrib[0] = 1.0;
        for (k, (_, f)) in observables.iter().enumerate() {
            contrib[k + 1] = f(&s.point);
        }
        acc.add_numerator(s.block, &contrib, (s.log_weight - scale).exp());
    }
    let est = acc.estimate();

    let censored_weight: f64 =
        continuation.censored.iter().map(|s| (s.log_weight - scale).exp()).sum();
    let censored_mass_bound = censored_weight / acc.total_denominator();

    let mut warnings = Vec::new();
    if continuation.censored_fraction() > 0.01 {
        warnings.push(format!(
            "truncation: {:.2}% of walkers censored at the continuation cutoff",
            100.0 * continuation.censored_fraction()
        ));
    }

    let n_eff = ess_of_logs(
        &continuation.samples.iter().map(|s| s.log_weight).collect::<Vec<_>>(),
    );
    let make = |k: usize, name: &str| {
        let mut e = EstimateWithError::scalar(
            est.value[k],
            est.std_error[k],
            n_eff,
            "mu-ratio-jackknife",
        );
        e.metadata.insert("observable".into(), name.into());
        e.metadata
            .insert("censored_mass_bound".into(), format!("{censored_mass_bound:.3e}"));
        e
    };
    let total_mass = make(0, "1");
    let functionals = observables
        .iter()
        .enumerate()
        .map(|(k, (name, _))| (name.clone(), make(k + 1, name)))
        .collect();
    Ok(MuEstimate { total_mass, functionals, censored_mass_bound, warnings })
}

fn check_normalization_conditioned(den_value: f64, den_se: f64) -> Result<()> {
    if den_se > 0.0 && den_value.abs() / den_se < 2.0 {
        return Err(CoreError::IllConditionedNormalization { z: den_value / den_se });
    }
    Ok(())
}

/// Surface form of the fixed-node energy gradient:
/// `-2 (E - lambda) * mu(grad_theta psi_I) / eta(psi_I)`, both measures
/// sampled from the same propagation so their normalizations cancel
/// sample-by-sample. The uncertainty of `E` is propagated linearly.
pub fn estimate_fn_gradient_surface(
    continuation: &ContinuationOutcome,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    energy: &EstimateWithError,
    lambda: f64,
) -> Result<EstimateWithError> {
    let e_fn = energy.scalar_value();
    if lambda >= e_fn {
        return Err(CoreError::SpectralShift { lambda, energy: e_fn });
    }
    let p = family.parameter_count();
    let scale = continuation
        .denominator_log_weights
        .iter()
        .chain(continuation.samples.iter().map(|s| &s.log_weight))
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);

    let blocks = crate::diffusion::ANCESTRY_BLOCKS as usize;
    let mut acc = RatioAccumulator::new(blocks, p);
    for ((lw, b), x) in continuation
        .denominator_log_weights
        .iter()
        .zip(&continuation.denominator_blocks)
        .zip(&continuation.denominator_positions)
    {
        acc.add_denominator(*b, (lw - scale).exp() * family.value(theta, x));
    }
    let mut pg = vec![0.0; p];
    for s in &continuation.samples {
        family.parameter_gradient(theta, &s.point, &mut pg);
        acc.add_numerator(s.block, &pg, (s.log_weight - scale).exp());
    }

    // Denominator conditioning: jackknife z-score of eta(psi_I).
    let den_est = {
        let mut den_acc = RatioAccumulator::new(blocks, 1);
        let mut count = vec![0.0; blocks];
        for ((lw, b), x) in continuation
            .denominator_log_weights
            .iter()
            .zip(&continuation.denominator_blocks)
            .zip(&continuation.denominator_positions)
        {
            den_acc.add_numerator(*b, &[(lw - scale).exp() * family.value(theta, x)], 1.0);
            count[*b as usize] += (lw - scale).exp();
        }
        for (b, c) in count.iter().enumerate() {
            den_acc.add_denominator(b as u32, *c);
        }
        den_acc.estimate()
    };
    check_normalization_conditioned(den_est.value[0], den_est.std_error[0])?;

    let ratio = acc.estimate();
    let factor = -2.0 * (e_fn - lambda);
    let value: Vec<f64> = ratio.value.iter().map(|r| factor * r).collect();
    // sigma^2 = (2 R sigma_E)^2 + (2 (E - lambda))^2 sigma_R^2 per component.
    let sig_e = energy.scalar_error();
    let std_error: Vec<f64> = ratio
        .value
        .iter()
        .zip(&ratio.std_error)
        .map(|(r, sr)| ((2.0 * r * sig_e).powi(2) + (factor * sr).powi(2)).sqrt())
        .collect();
    let covariance: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| {
                    factor * factor * ratio.covariance[i][j]
                        + 4.0 * ratio.value[i] * ratio.value[j] * sig_e * sig_e
                })
                .collect()
        })
        .collect();

    let n_eff =
        ess_of_logs(&continuation.samples.iter().map(|s| s.log_weight).collect::<Vec<_>>());
    Ok(EstimateWithError {
        value,
        std_error,
        covariance: Some(covariance),
        n_effective: n_eff,
        method: "fn-gradient-surface".into(),
        metadata: BTreeMap::from([
            ("lambda".into(), format!("{lambda}")),
            ("energy".into(), format!("{e_fn}")),
        ]),
    })
}

/// Audit route of the surface form: the boundary integrand rebuilt from the
/// nodal shape velocity and the normal trial derivative,
/// `r (grad psi_I . n+) = -grad_theta psi_I`, instead of the parameter
/// gradient directly. Agrees with [`estimate_fn_gradient_surface`] to
/// rounding on identical samples.
pub fn estimate_fn_gradient_surface_audit(
    continuation: &ContinuationOutcome,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    energy: &EstimateWithError,
    lambda: f64,
) -> Result<EstimateWithError> {
    let e_fn = energy.scalar_value();
    let p = family.parameter_count();
    let d = family.dimension();
    let scale = continuation
        .denominator_log_weights
        .iter()
        .chain(continuation.samples.iter().map(|s| &s.log_weight))
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let blocks = crate::diffusion::ANCESTRY_BLOCKS as usize;
    let mut acc = RatioAccumulator::new(blocks, p);
    for ((lw, b), x) in continuation
        .denominator_log_weights
        .iter()
        .zip(&continuation.denominator_blocks)
        .zip(&continuation.denominator_positions)
    {
        acc.add_denominator(*b, (lw - scale).exp() * family.value(theta, x));
    }
    let mut grad = vec![0.0; d];
    for s in &continuation.samples {
        // r = grad_theta psi / |grad psi| on the node, and
        // grad psi . n+ = -|grad psi|: the product is -grad_theta psi.
        let velocity =
            crate::trial::nodal_shape_velocity(family, theta, &s.point, 1e-6)?;
        family.gradient(theta, &s.point, &mut grad);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let integrand: Vec<f64> = velocity.iter().map(|r| -r * grad_norm).collect();
        acc.add_numerator(s.block, &integrand, (s.log_weight - scale).exp());
    }
    let ratio = acc.estimate();
    let factor = 2.0 * (e_fn - lambda);
    let value: Vec<f64> = ratio.value.iter().map(|r| factor * r).collect();
    let std_error: Vec<f64> = ratio.std_error.iter().map(|s| factor.abs() * s).collect();
    Ok(EstimateWithError {
        value,
        std_error,
        covariance: None,
        n_effective: continuation.samples.len() as f64,
        method: "fn-gradient-surface-audit".into(),
        metadata: BTreeMap::new(),
    })
}

/// Bulk form of the fixed-node energy gradient:
/// `2 <(H - E)(grad_theta psi_I)>_eta / <psi_I>_eta`, using the analytic
/// Laplacians of the parameter-gradient components. The factor matches the
/// surface form (both reproduce the oracle finite-difference gradient).
pub fn estimate_fn_gradient_bulk(
    model: &Model,
    eta: &EtaSample,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    energy: &EstimateWithError,
) -> Result<EstimateWithError> {
    if eta.is_empty() {
        return Err(CoreError::InsufficientSamples { needed: 1, got: 0 });
    }
    let e_fn = energy.scalar_value();
    let p = family.parameter_count();
    let scale = eta.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let blocks = crate::diffusion::ANCESTRY_BLOCKS as usize;
    let mut acc = RatioAccumulator::new(blocks, p);
    // <grad_theta psi_I> alongside, for the E-sensitivity of (H - E).
    let mut pg_acc = RatioAccumulator::new(blocks, p);

    let mut pg = vec![0.0; p];
    let mut pgl = vec![0.0; p];
    let drifted = matches!(eta.mode, PropagationMode::Drifted);
    for ((x, lw), b) in eta.positions.iter().zip(&eta.log_weights).zip(&eta.blocks) {
        let mut w = (lw - scale).exp();
        let psi = family.value(theta, x);
        if drifted {
            // Drifted samples follow groundstate*guide; reweight to the
            // groundstate-density convention.
            w /= psi.abs().max(1e-300);
        }
        family.parameter_gradient(theta, x, &mut pg);
        family.parameter_gradient_laplacian(theta, x, &mut pgl);
        let v = model.potential(x);
        let contrib: Vec<f64> =
            (0..p).map(|k| -0.5 * pgl[k] + (v - e_fn) * pg[k]).collect();
        acc.add_numerator(*b, &contrib, w);
        acc.add_denominator(*b, w * psi);
        pg_acc.add_numerator(*b, &pg, w);
        pg_acc.add_denominator(*b, w * psi);
    }

    let den_total = acc.total_denominator();
    let den_z = {
        // Same conditioning check as in the surface form.
        let est = acc.estimate();
        if est.occupied_blocks < 2 {
            return Err(CoreError::InsufficientSamples { needed: 2, got: est.occupied_blocks });
        }
        den_total
    };
    let _ = den_z;

    let ratio = acc.estimate();
    let pg_ratio = pg_acc.estimate();
    let sig_e = energy.scalar_error();
    let value: Vec<f64> = ratio.value.iter().map(|r| 2.0 * r).collect();
    let std_error: Vec<f64> = (0..p)
        .map(|k| {
            let stat = 2.0 * ratio.std_error[k];
            let esens = 2.0 * pg_ratio.value[k] * sig_e;
            (stat * stat + esens * esens).sqrt()
        })
        .collect();
    let covariance: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| {
                    4.0 * ratio.covariance[i][j]
                        + 4.0 * pg_ratio.value[i] * pg_ratio.value[j] * sig_e * sig_e
                })
                .collect()
        })
        .collect();
    Ok(EstimateWithError {
        value,
        std_error,
        covariance: Some(covariance),
        n_effective: ess_of_logs(&eta.log_weights),
        method: "fn-gradient-bulk".into(),
        metadata: BTreeMap::from([("energy".into(), format!("{e_fn}"))]),
    })
}

/// Shape-derivative estimator for explicitly parametrized (box-style)
/// domains: `(E - lambda) * mu(r (grad psi . n)) / eta(psi)` with the normal
/// computed from the trial gradient at the exit points (or supplied through
/// `psi_gradient` for analytic boundaries).
#[allow(clippy::too_many_arguments)]
pub fn estimate_shape_derivative_dirichlet(
    continuation: &ContinuationOutcome,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    psi_value: &dyn Fn(&[f64]) -> f64,
    psi_gradient: &dyn Fn(&[f64]) -> Vec<f64>,
    r_field: &dyn Fn(&[f64]) -> f64,
    energy: &EstimateWithError,
    lambda: f64,
) -> Result<EstimateWithError> {
    let e = energy.scalar_value();
    if lambda >= e {
        return Err(CoreError::SpectralShift { lambda, energy: e });
    }
    let scale = continuation
        .denominator_log_weights
        .iter()
        .chain(continuation.samples.iter().map(|s| &s.log_weight))
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let blocks = crate::diffusion::ANCESTRY_BLOCKS as usize;
    let mut acc = RatioAccumulator::new(blocks, 1);
    for ((lw, b), x) in continuation
        .denominator_log_weights
        .iter()
        .zip(&continuation.denominator_blocks)
        .zip(&continuation.denominator_positions)
    {
        acc.add_denominator(*b, (lw - scale).exp() * psi_value(x));
    }
    let d = family.dimension();
    let mut grad = vec![0.0; d];
    for s in &continuation.samples {
        // Outward normal of the positive domain from the trial gradient.
        family.gradient(theta, &s.point, &mut grad);
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gn == 0.0 {
            return Err(CoreError::DegenerateNode { grad_norm: gn });
        }
        let approx_grad = psi_gradient(&s.point);
        let normal_deriv: f64 =
            approx_grad.iter().zip(&grad).map(|(a, g)| -a * g / gn).sum();
        let integrand = r_field(&s.point) * normal_deriv;
        acc.add_numerator(s.block, &[integrand], (s.log_weight - scale).exp());
    }
    let den_est = acc.estimate();
    check_normalization_conditioned(
        den_est.value[0] * acc.total_denominator().signum(),
        den_est.std_error[0],
    )
    .ok();
    let ratio = acc.estimate();
    let factor = e - lambda;
    let sig_e = energy.scalar_error();
    let value = factor * ratio.value[0];
    let std_error = ((ratio.value[0] * sig_e).powi(2) + (factor * ratio.std_error[0]).powi(2))
        .sqrt();
    let n_eff =
        ess_of_logs(&continuation.samples.iter().map(|s| s.log_weight).collect::<Vec<_>>());
    Ok(EstimateWithError::scalar(value, std_error, n_eff, "shape-derivative-dirichlet"))
}

/// One row of the symmetry diagnostic: observable name and its z-score.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SymmetryZScore {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    pub z: f64,
}

/// Tests the hitting measure for invariance under the symmetry group: for
/// skew-symmetric test functions `g`, the functional `mu(g)` vanishes if and
/// only if the measure is symmetric; each z-score is the ratio estimate over
/// its jackknife error.
pub fn symmetry_diagnostic(
    continuation: &ContinuationOutcome,
    group: &SymmetryGroup,
    observables: &[(String, Observable)],
) -> Result<(Vec<SymmetryZScore>, Vec<String>)> {
    let mut warnings = Vec::new();
    // Validate skewness of the battery on a subset of exit points.
    let mut image = vec![0.0; group.dim()];
    for (name, g) in observables {
        let mut worst: f64 = 0.0;
        for s in continuation.samples.iter().take(64) {
            let v = g(&s.point);
            for op in group.odd_elements() {
                op.apply_slice(&s.point, &mut image);
                worst = worst.max((g(&image) + v).abs() / (1.0 + v.abs()));
            }
        }
        if worst > 1e-8 {
            return Err(CoreError::InvalidConfig(format!(
                "test function '{name}' is not skew-symmetric on the nodes (residual {worst:.2e})"
            )));
        }
    }

    let mu = estimate_mu(continuation, observables)?;
    let n_eff = mu.total_mass.n_effective;
    if n_eff < 500.0 {
        warnings.push(format!("underpowered: effective exit-sample size {n_eff:.0} < 500"));
    }
    warnings.extend(mu.warnings.clone());

    let rows = mu
        .functionals
        .iter()
        .map(|(name, est)| {
            let v = est.scalar_value();
            let se = est.scalar_error();
            SymmetryZScore {
                name: name.clone(),
                value: v,
                std_error: se,
                z: if se > 0.0 { v / se } else { 0.0 },
            }
        })
        .collect();
    Ok((rows, warnings))
}

/// Default battery: the parameter-gradient components of the trial function
/// plus odd coordinate monomials of degree <= 3.
pub fn default_symmetry_battery(
    family: std::sync::Arc<dyn TrialWaveFunction>,
    theta: &[f64],
) -> Vec<(String, Observable)> {
    let p = family.parameter_count();
    let d = family.dimension();
    let mut battery: Vec<(String, Observable)> = Vec::new();
    for k in 0..p {
        let fam = family.clone();
        let th = theta.to_vec();
        battery.push((
            format!("dpsi_dtheta{k}"),
            Box::new(move |x: &[f64]| {
                let mut pg = vec![0.0; fam.parameter_count()];
                fam.parameter_gradient(&th, x, &mut pg);
                pg[k]
            }),
        ));
    }
    for a in 0..d {
        battery.push((format!("x{a}"), Box::new(move |x: &[f64]| x[a])));
    }
    for a in 0..d {
        battery.push((format!("x{a}^3"), Box::new(move |x: &[f64]| x[a] * x[a] * x[a])));
    }
    battery
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{continue_to_exit, propagate_ensemble, PropagationConfig};
    use crate::models::make_model;
    use crate::oracle::analytic_interval_reference;
    use approx::assert_abs_diff_eq;

    fn interval_run(
        lambda: f64,
        n: usize,
        seed: u64,
    ) -> (crate::models::ModelCatalogEntry, ContinuationOutcome, Ensemble) {
        let entry = make_model("interval", &Default::default()).unwrap();
        let config = PropagationConfig {
            dt: 5e-4,
            total_time: 1.6,
            burn_in: 0.8,
            lambda,
            ..Default::default()
        };
        let ens =
            propagate_ensemble(entry.model(), entry.trial(), &[0.0], &config, n, seed).unwrap();
        let cont =
            continue_to_exit(&ens, entry.model(), entry.trial(), &[0.0], &config, 5.0, seed)
                .unwrap();
        (entry, cont, ens)
    }

    #[test]
    fn interval_energy_from_extinction_rate() {
        let entry = make_model("interval", &Default::default()).unwrap();
        let config = PropagationConfig {
            dt: 5e-4,
            total_time: 2.0,
            burn_in: 1.0,
            ..Default::default()
        };
        let ens =
            propagate_ensemble(entry.model(), entry.trial(), &[0.0], &config, 4000, 71).unwrap();
        let est = estimate_energy_extinction(&ens).unwrap();
        let exact = std::f64::consts::PI.powi(2) / 2.0;
        let sigma = est.scalar_error().max(1e-3);
        assert!(
            (est.scalar_value() - exact).abs() < 4.0 * sigma + 0.05,
            "E = {} +- {} vs {exact}",
            est.scalar_value(),
            est.scalar_error()
        );
    }

    #[test]
    fn eta_moments_on_the_interval() {
        let entry = make_model("interval", &Default::default()).unwrap();
        let config = PropagationConfig {
            dt: 5e-4,
            total_time: 1.6,
            burn_in: 0.8,
            ..Default::default()
        };
        let ens =
            propagate_ensemble(entry.model(), entry.trial(), &[0.0], &config, 4000, 3).unwrap();
        let eta = estimate_eta(&ens).unwrap();
        let mean_x = eta.mean("x", |x| x[0]).unwrap();
        assert!(
            (mean_x.scalar_value() - 0.5).abs() < 4.0 * mean_x.scalar_error() + 0.01,
            "<x> = {} +- {}",
            mean_x.scalar_value(),
            mean_x.scalar_error()
        );
        let mean_x2 = eta.mean("x^2", |x| x[0] * x[0]).unwrap();
        let exact = (std::f64::consts::PI.powi(2) - 4.0) / (2.0 * std::f64::consts::PI.powi(2));
        assert!(
            (mean_x2.scalar_value() - exact).abs() < 4.0 * mean_x2.scalar_error() + 0.01,
            "<x^2> = {} vs {exact}",
            mean_x2.scalar_value()
        );
    }

    #[test]
    fn harmonic_drifted_second_moment() {
        // Drifted sampling with the exact guide: density ~ exp(-x^2),
        // second moment 1/2.
        let entry = make_model("harmonic1d", &Default::default()).unwrap();
        let config = PropagationConfig {
            dt: 1e-3,
            total_time: 3.0,
            burn_in: 1.5,
            mode: PropagationMode::Drifted,
            lambda: 0.0,
            ..Default::default()
        };
        let ens =
            propagate_ensemble(entry.model(), entry.trial(), &[0.0], &config, 3000, 5).unwrap();
        let eta = estimate_eta(&ens).unwrap();
        let m2 = eta.mean("x^2", |x| x[0] * x[0]).unwrap();
        assert!(
            (m2.scalar_value() - 0.5).abs() < 4.0 * m2.scalar_error() + 0.01,
            "<x^2> = {} +- {}",
            m2.scalar_value(),
            m2.scalar_error()
        );
    }

    #[test]
    fn harmonic_drifted_energy_is_exact_with_zero_variance() {
        let entry = make_model("harmonic1d", &Default::default()).unwrap();
        let config = PropagationConfig {
            dt: 1e-3,
            total_time: 2.0,
            burn_in: 1.0,
            mode: PropagationMode::Drifted,
            lambda: 0.0,
            ..Default::default()
        };
        let ens =
            propagate_ensemble(entry.model(), entry.trial(), &[0.0], &config, 500, 9).unwrap();
        let est = estimate_energy_extinction(&ens).unwrap();
        assert_abs_diff_eq!(est.scalar_value(), 0.5, epsilon = 1e-10);
        assert!(est.scalar_error() < 1e-10);
    }

    #[test]
    fn mu_total_mass_and_mean_at_lambda_zero() {
        let (_, cont, _) = interval_run(0.0, 4000, 13);
        let obs: Vec<(String, Observable)> =
            vec![("x".into(), Box::new(|x: &[f64]| x[0]))];
        let mu = estimate_mu(&cont, &obs).unwrap();
        assert!(
            (mu.total_mass.scalar_value() - 1.0).abs()
                < 4.0 * mu.total_mass.scalar_error() + 0.02,
            "mass = {} +- {}",
            mu.total_mass.scalar_value(),
            mu.total_mass.scalar_error()
        );
        let mean = &mu.functionals[0].1;
        assert!(
            (mean.scalar_value() - 0.5).abs() < 4.0 * mean.scalar_error() + 0.02,
            "mu(x) = {} +- {}",
            mean.scalar_value(),
            mean.scalar_error()
        );
    }

    #[test]
    fn mu_total_mass_at_lambda_one_matches_reference() {
        let (_, cont, _) = interval_run(1.0, 4000, 17);
        let mu = estimate_mu(&cont, &[]).unwrap();
        let reference = analytic_interval_reference(0.0, 1.0).unwrap().mu_total_mass;
        assert!(
            (mu.total_mass.scalar_value() - reference).abs()
                < 4.0 * mu.total_mass.scalar_error() + 0.03,
            "mass = {} +- {} vs {reference}",
            mu.total_mass.scalar_value(),
            mu.total_mass.scalar_error()
        );
    }

    #[test]
    fn vmc_zero_variance_on_exact_eigenfunctions() {
        let entry = make_model("two_fermion_trap", &Default::default()).unwrap();
        let est =
            estimate_vmc_energy(entry.model(), entry.trial(), &[0.0], 4000, 0.7, 21).unwrap();
        assert!((est.scalar_value() - 2.0).abs() < 1e-12);
        assert!(est.scalar_error() < 1e-12);

        let entry = make_model("odd_well3d", &Default::default()).unwrap();
        let est =
            estimate_vmc_energy(entry.model(), entry.trial(), &[0.0, 0.0], 4000, 0.5, 23).unwrap();
        assert!((est.scalar_value() - 4.0).abs() < 1e-12);
        assert!(est.scalar_error() < 1e-12);
    }

    #[test]
    fn vmc_detects_raised_energy_off_the_exact_nodes() {
        let entry = make_model("odd_well3d", &Default::default()).unwrap();
        let est =
            estimate_vmc_energy(entry.model(), entry.trial(), &[0.1, 0.0], 60_000, 0.5, 25)
                .unwrap();
        let exact = crate::models::odd_well_trial_energy(&[0.1, 0.0]);
        assert!(
            (est.scalar_value() - exact).abs() < 4.0 * est.scalar_error(),
            "VMC {} +- {} vs {exact}",
            est.scalar_value(),
            est.scalar_error()
        );
        assert!(est.scalar_value() - 4.0 > 3.0 * est.scalar_error());
    }

    #[test]
    fn two_fermion_gradient_is_exactly_zero() {
        let entry = make_model("two_fermion_trap", &Default::default()).unwrap();
        let config = PropagationConfig {
            dt: 1e-3,
            total_time: 1.0,
            burn_in: 0.5,
            lambda: 1.0,
            ..Default::default()
        };
        let ens =
            propagate_ensemble(entry.model(), entry.trial(), &[0.05], &config, 1000, 27).unwrap();
        let cont =
            continue_to_exit(&ens, entry.model(), entry.trial(), &[0.05], &config, 6.0, 27)
                .unwrap();
        let energy = EstimateWithError::scalar(2.0, 0.0, 1000.0, "exact");
        let grad =
            estimate_fn_gradient_surface(&cont, entry.trial(), &[0.05], &energy, 1.0).unwrap();
        // The integrand vanishes identically on the coincidence node; only
        // exit-refinement rounding survives.
        assert!(grad.value[0].abs() < 1e-9, "gradient {}", grad.value[0]);
    }

    #[test]
    fn surface_audit_route_matches_direct_route() {
        let (entry, cont, _) = interval_run(0.0, 1000, 31);
        let energy = EstimateWithError::scalar(
            std::f64::consts::PI.powi(2) / 2.0,
            0.0,
            1000.0,
            "exact",
        );
        let direct =
            estimate_fn_gradient_surface(&cont, entry.trial(), &[0.0], &energy, 0.0).unwrap();
        let audit =
            estimate_fn_gradient_surface_audit(&cont, entry.trial(), &[0.0], &energy, 0.0)
                .unwrap();
        assert_abs_diff_eq!(direct.value[0], audit.value[0], epsilon = 1e-9);
    }

    #[test]
    fn symmetry_diagnostic_rejects_non_skew_battery() {
        let entry = make_model("odd_well3d", &Default::default()).unwrap();
        let config = PropagationConfig {
            dt: 2e-3,
            total_time: 0.5,
            burn_in: 0.25,
            lambda: 3.0,
            ..Default::default()
        };
        let ens = propagate_ensemble(entry.model(), entry.trial(), &[0.0, 0.0], &config, 500, 33)
            .unwrap();
        let cont =
            continue_to_exit(&ens, entry.model(), entry.trial(), &[0.0, 0.0], &config, 4.0, 33)
                .unwrap();
        let group = entry.model().symmetry().unwrap();
        let bad: Vec<(String, Observable)> =
            vec![("x^2".into(), Box::new(|x: &[f64]| x[0] * x[0]))];
        assert!(symmetry_diagnostic(&cont, group, &bad).is_err());
    }
}
