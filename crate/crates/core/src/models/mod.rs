//! Built-in desk-scale models with analytic derivatives and exact references.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::model::{ExactReferences, Model};
use crate::symmetry::SymmetryGroup;
use crate::trial::{quasi_random_box_points, verify_skew_symmetry, TrialWaveFunction};

mod harmonic;
mod interval;
mod n_fermion;
mod odd_well;
mod two_fermion;

pub use harmonic::HarmonicGuide;
pub use interval::{groundstate_energy as interval_groundstate_energy, IntervalFamily};
pub use n_fermion::NFermionFamily;
pub use odd_well::{trial_energy as odd_well_trial_energy, OddWellFamily};
pub use two_fermion::TwoFermionFamily;

/// Recommended run parameters shipped with each catalog entry.
#[derive(Debug, Clone)]
pub struct RunDefaults {
    pub dt: f64,
    pub total_time: f64,
    pub walkers: usize,
    /// Recommended Feynman-Kac shift; must stay below the groundstate energy.
    pub lambda: f64,
    pub proposal_scale: f64,
    pub max_exit_time: f64,
    pub grid_spacing: f64,
}

type ExactEnergyFn = Arc<dyn Fn(&[f64]) -> Option<f64> + Send + Sync>;

/// A fully wired model: Hamiltonian, trial family, defaults and references.
#[derive(Clone)]
pub struct ModelCatalogEntry {
    name: String,
    description: String,
    model: Model,
    trial: Arc<dyn TrialWaveFunction>,
    theta_default: Vec<f64>,
    theta_validity: Vec<(f64, f64)>,
    defaults: RunDefaults,
    exact_energy: Option<ExactEnergyFn>,
    experimental: bool,
}

impl ModelCatalogEntry {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn trial(&self) -> &dyn TrialWaveFunction {
        self.trial.as_ref()
    }

    pub fn trial_arc(&self) -> Arc<dyn TrialWaveFunction> {
        self.trial.clone()
    }

    pub fn theta_default(&self) -> &[f64] {
        &self.theta_default
    }

    /// Documented per-component parameter range within which the nodal
    /// structure stays valid (single relevant nodal surface inside the box).
    pub fn theta_validity(&self) -> &[(f64, f64)] {
        &self.theta_validity
    }

    pub fn defaults(&self) -> &RunDefaults {
        &self.defaults
    }

    pub fn experimental(&self) -> bool {
        self.experimental
    }

    /// Exact groundstate energy of the fixed-node problem at `theta` when
    /// analytically known.
    pub fn exact_energy(&self, theta: &[f64]) -> Option<f64> {
        self.exact_energy.as_ref().and_then(|f| f(theta))
    }
}

impl std::fmt::Debug for ModelCatalogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelCatalogEntry")
            .field("name", &self.name)
            .field("theta_default", &self.theta_default)
            .finish()
    }
}

/// Names of every catalog entry.
pub fn catalog_names() -> Vec<&'static str> {
    vec![
        "interval",
        "harmonic1d",
        "two_fermion_trap",
        "two_fermion_interacting",
        "odd_well3d",
        "n_fermion_trap_1d",
    ]
}

/// Builds a catalog entry by name. Accepted parameters:
/// `interval: {theta}`, `two_fermion_interacting: {g}`,
/// `n_fermion_trap_1d: {n, alpha}`; other entries take none.
pub fn make_model(name: &str, parameters: &BTreeMap<String, f64>) -> Result<ModelCatalogEntry> {
    let entry = match name {
        "interval" => interval_entry(parameters)?,
        "harmonic1d" => harmonic_entry()?,
        "two_fermion_trap" => two_fermion_entry(0.0)?,
        "two_fermion_interacting" => {
            let g = parameters.get("g").copied().unwrap_or(0.5);
            two_fermion_entry(g)?
        }
        "odd_well3d" => odd_well_entry()?,
        "n_fermion_trap_1d" => n_fermion_entry(parameters)?,
        other => return Err(CoreError::UnknownModel(other.to_string())),
    };
    // Construction-time sign-structure check on 256 quasi-random box points.
    if let Some(group) = entry.model.symmetry() {
        let pts = quasi_random_box_points(entry.model.bounds(), 256);
        let res = verify_skew_symmetry(entry.trial(), &entry.theta_default, group, &pts)?;
        if res > 1e-10 {
            return Err(CoreError::InvalidParameter(format!(
                "trial family of '{name}' violates skew-symmetry (residual {res:e})"
            )));
        }
    }
    Ok(entry)
}

fn interval_entry(parameters: &BTreeMap<String, f64>) -> Result<ModelCatalogEntry> {
    let theta0 = parameters.get("theta").copied().unwrap_or(0.0);
    if theta0 <= -0.8 {
        return Err(CoreError::InvalidParameter(format!(
            "interval theta {theta0} collapses the domain"
        )));
    }
    let length = 1.0 + theta0;
    // Box sized so that exactly one positive lobe of the sine profile lies
    // inside for runtime theta near theta0.
    let bounds = vec![(-0.25 * length, 1.75 * length)];
    let model = Model::new(
        "interval",
        1,
        Arc::new(|_: &[f64]| 0.0),
        None,
        bounds,
        ExactReferences {
            groundstate_energy: Some(interval::groundstate_energy(&[theta0])),
            notes: Some("Dirichlet groundstate pi^2/(2 L^2) on (0, L)".into()),
        },
    )?;
    Ok(ModelCatalogEntry {
        name: "interval".into(),
        description: format!(
            "1D interval (0, {length:.3}) with V = 0; movable right endpoint; exercises every \
             estimator against closed-form references"
        ),
        model,
        trial: Arc::new(IntervalFamily),
        theta_default: vec![theta0],
        theta_validity: vec![(theta0 - 0.2 * length, theta0 + 0.2 * length)],
        defaults: RunDefaults {
            dt: 2.5e-4,
            total_time: 3.0,
            walkers: 5000,
            lambda: 0.0,
            proposal_scale: 0.25 * length,
            max_exit_time: 4.0,
            grid_spacing: 0.005,
        },
        exact_energy: Some(Arc::new(|theta| Some(interval::groundstate_energy(theta)))),
        experimental: false,
    })
}

fn harmonic_entry() -> Result<ModelCatalogEntry> {
    let model = Model::new(
        "harmonic1d",
        1,
        Arc::new(|x: &[f64]| 0.5 * x[0] * x[0]),
        None,
        vec![(-6.0, 6.0)],
        ExactReferences {
            groundstate_energy: Some(0.5),
            notes: Some("full-line oscillator; positive guide, drifted-mode testbed".into()),
        },
    )?;
    Ok(ModelCatalogEntry {
        name: "harmonic1d".into(),
        description: "1D harmonic oscillator on the full line; Gaussian guide with width \
                      parameter; drifted-propagation testbed (E0 = 1/2)"
            .into(),
        model,
        trial: Arc::new(HarmonicGuide),
        theta_default: vec![0.0],
        theta_validity: vec![(-0.5, 1.0)],
        defaults: RunDefaults {
            dt: 1e-3,
            total_time: 4.0,
            walkers: 4000,
            lambda: 0.0,
            proposal_scale: 1.0,
            max_exit_time: 4.0,
            grid_spacing: 0.01,
        },
        exact_energy: Some(Arc::new(|theta: &[f64]| {
            if theta[0] == 0.0 {
                Some(0.5)
            } else {
                None
            }
        })),
        experimental: false,
    })
}

fn two_fermion_entry(interaction: f64) -> Result<ModelCatalogEntry> {
    let interacting = interaction != 0.0;
    let potential: crate::model::PotentialFn = if interacting {
        Arc::new(move |x: &[f64]| {
            0.5 * (x[0] * x[0] + x[1] * x[1])
                + interaction * (-(x[0] - x[1]) * (x[0] - x[1])).exp()
        })
    } else {
        Arc::new(|x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]))
    };
    let model = Model::new(
        if interacting { "two_fermion_interacting" } else { "two_fermion_trap" },
        2,
        potential,
        Some(SymmetryGroup::pair_exchange()),
        vec![(-5.0, 5.0), (-5.0, 5.0)],
        ExactReferences {
            groundstate_energy: if interacting { None } else { Some(2.0) },
            notes: if interacting {
                Some("Gaussian pair repulsion; references come from the grid oracle".into())
            } else {
                Some("exact fermionic groundstate at theta = 0, E = 2".into())
            },
        },
    )?;
    Ok(ModelCatalogEntry {
        name: model.name().to_string(),
        description: if interacting {
            format!(
                "two 1D fermions with Gaussian repulsion (g = {interaction}); experimental, \
                 oracle-only references; coincidence node forced by symmetry"
            )
        } else {
            "two 1D fermions in a harmonic trap; coincidence node x1 = x2 is symmetry-forced \
             and theta-immobile (exact-zero gradient control); valid for |theta| <= 0.1"
                .into()
        },
        model,
        trial: Arc::new(TwoFermionFamily),
        theta_default: vec![0.0],
        theta_validity: vec![(-0.1, 0.1)],
        defaults: RunDefaults {
            dt: 1e-3,
            total_time: 3.0,
            walkers: 4000,
            lambda: 1.0,
            proposal_scale: 0.7,
            max_exit_time: 6.0,
            grid_spacing: 0.05,
        },
        exact_energy: if interacting {
            None
        } else {
            Some(Arc::new(|theta: &[f64]| if theta[0] == 0.0 { Some(2.0) } else { None }))
        },
        experimental: interacting,
    })
}

fn odd_well_entry() -> Result<ModelCatalogEntry> {
    let model = Model::new(
        "odd_well3d",
        3,
        Arc::new(|x: &[f64]| 0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1] + 9.0 * x[2] * x[2])),
        Some(SymmetryGroup::point_inversion(3)?),
        vec![(-6.0, 6.0), (-6.0, 6.0), (-6.0, 6.0)],
        ExactReferences {
            groundstate_energy: Some(4.0),
            notes: Some(
                "anisotropic oscillator, frequencies (1,2,3); exact odd groundstate at \
                 theta = (0,0) with E = 4"
                    .into(),
            ),
        },
    )?;
    Ok(ModelCatalogEntry {
        name: "odd_well3d".into(),
        description: "3D anisotropic well with inversion symmetry and a genuinely movable \
                      tilted nodal plane; workhorse for gradient and symmetry diagnostics"
            .into(),
        model,
        trial: Arc::new(OddWellFamily),
        theta_default: vec![0.0, 0.0],
        theta_validity: vec![(-0.5, 0.5), (-0.5, 0.5)],
        defaults: RunDefaults {
            dt: 2e-3,
            total_time: 2.5,
            walkers: 20000,
            lambda: 3.0,
            proposal_scale: 0.5,
            max_exit_time: 8.0,
            grid_spacing: 0.15,
        },
        exact_energy: Some(Arc::new(|theta: &[f64]| {
            if theta.iter().all(|t| *t == 0.0) {
                Some(4.0)
            } else {
                None
            }
        })),
        experimental: false,
    })
}

fn n_fermion_entry(parameters: &BTreeMap<String, f64>) -> Result<ModelCatalogEntry> {
    let n = parameters.get("n").copied().unwrap_or(3.0);
    let alpha = parameters.get("alpha").copied().unwrap_or(0.0);
    if n.fract() != 0.0 || !(2.0..=5.0).contains(&n) {
        return Err(CoreError::InvalidParameter(format!(
            "n_fermion_trap_1d needs integer n in 2..=5, got {n}"
        )));
    }
    let n = n as usize;
    let model = Model::new(
        "n_fermion_trap_1d",
        n,
        Arc::new(|x: &[f64]| 0.5 * x.iter().map(|xi| xi * xi).sum::<f64>()),
        Some(SymmetryGroup::permutations(n)?),
        vec![(-6.0, 6.0); n],
        ExactReferences {
            groundstate_energy: if alpha == 0.0 { Some(n as f64 * n as f64 / 2.0) } else { None },
            notes: Some("Slater determinant of Hermite-Gaussian orbitals, optional pair Jastrow".into()),
        },
    )?;
    let exact: Option<ExactEnergyFn> = if alpha == 0.0 {
        let e = n as f64 * n as f64 / 2.0;
        Some(Arc::new(move |theta: &[f64]| if theta[0] == 0.0 { Some(e) } else { None }))
    } else {
        None
    };
    Ok(ModelCatalogEntry {
        name: "n_fermion_trap_1d".into(),
        description: format!(
            "{n} 1D fermions in a trap (stretch model); theta mixes the next orbital into the \
             highest occupied one; Jastrow alpha = {alpha} frozen at construction"
        ),
        model,
        trial: Arc::new(NFermionFamily::new(n, alpha)),
        theta_default: vec![0.0],
        theta_validity: vec![(-0.3, 0.3)],
        defaults: RunDefaults {
            dt: 1e-3,
            total_time: 2.0,
            walkers: 4000,
            lambda: (n * n) as f64 / 2.0 - 1.0,
            proposal_scale: 0.6,
            max_exit_time: 4.0,
            grid_spacing: 0.05,
        },
        exact_energy: exact,
        experimental: true,
    })
}

#[cfg(test)]
pub(crate) mod testing {
    use crate::trial::{quasi_random_box_points, TrialWaveFunction};

    /// Cross-checks analytic derivatives against central finite differences
    /// at quasi-random points: gradient and parameter gradient to 1e-6
    /// relative (step 1e-5), Laplacians to 1e-4 relative (step 1e-4).
    pub fn check_family_derivatives(
        family: &dyn TrialWaveFunction,
        theta: &[f64],
        bounds: &[(f64, f64)],
        points: usize,
    ) {
        let d = family.dimension();
        let p = family.parameter_count();
        let pts = quasi_random_box_points(bounds, points);
        let rel = |a: f64, b: f64, scale: f64| (a - b).abs() / (scale + a.abs().max(b.abs()));

        for x in &pts {
            let scale = family.value(theta, x).abs().max(1e-6);

            let mut grad = vec![0.0; d];
            family.gradient(theta, x, &mut grad);
            let h = 1e-5;
            for k in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (family.value(theta, &xp) - family.value(theta, &xm)) / (2.0 * h);
                assert!(
                    rel(grad[k], fd, scale) < 1e-6,
                    "gradient[{k}] {} vs fd {} at {x:?}",
                    grad[k],
                    fd
                );
            }

            let mut pg = vec![0.0; p];
            family.parameter_gradient(theta, x, &mut pg);
            for k in 0..p {
                let mut tp = theta.to_vec();
                let mut tm = theta.to_vec();
                tp[k] += h;
                tm[k] -= h;
                let fd = (family.value(&tp, x) - family.value(&tm, x)) / (2.0 * h);
                assert!(
                    rel(pg[k], fd, scale) < 1e-6,
                    "parameter_gradient[{k}] {} vs fd {} at {x:?}",
                    pg[k],
                    fd
                );
            }

            // FD Laplacian of the value and of each parameter-gradient component.
            let hl = 1e-4;
            let lap = family.laplacian(theta, x);
            let mut fd_lap = 0.0;
            for k in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += hl;
                xm[k] -= hl;
                fd_lap += (family.value(theta, &xp) - 2.0 * family.value(theta, x)
                    + family.value(theta, &xm))
                    / (hl * hl);
            }
            assert!(rel(lap, fd_lap, scale) < 1e-4, "laplacian {lap} vs fd {fd_lap} at {x:?}");

            let mut pgl = vec![0.0; p];
            family.parameter_gradient_laplacian(theta, x, &mut pgl);
            for c in 0..p {
                let mut fd_l = 0.0;
                for k in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += hl;
                    xm[k] -= hl;
                    let at = |pt: &[f64]| {
                        let mut buf = vec![0.0; p];
                        family.parameter_gradient(theta, pt, &mut buf);
                        buf[c]
                    };
                    fd_l += (at(&xp) - 2.0 * at(x) + at(&xm)) / (hl * hl);
                }
                assert!(
                    rel(pgl[c], fd_l, scale) < 1e-4,
                    "parameter_gradient_laplacian[{c}] {} vs fd {} at {x:?}",
                    pgl[c],
                    fd_l
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unknown_model_is_a_catalog_error() {
        let err = make_model("no_such_model", &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, CoreError::UnknownModel(_)));
    }

    #[test]
    fn interval_entry_scales_with_theta() {
        let mut params = BTreeMap::new();
        params.insert("theta".to_string(), 0.5);
        let entry = make_model("interval", &params).unwrap();
        assert_abs_diff_eq!(
            entry.exact_energy(&[0.5]).unwrap(),
            std::f64::consts::PI.powi(2) / 4.5,
            epsilon = 1e-12
        );
        // Box covers the (0, 1.5) domain.
        assert!(entry.model().bounds()[0].0 < 0.0 && entry.model().bounds()[0].1 > 1.5);
    }

    #[test]
    fn odd_well_exact_energy_is_four() {
        let entry = make_model("odd_well3d", &BTreeMap::new()).unwrap();
        assert_eq!(entry.exact_energy(&[0.0, 0.0]), Some(4.0));
        assert_eq!(entry.exact_energy(&[0.1, 0.0]), None);
    }

    #[test]
    fn two_fermion_trial_matches_closed_form_at_theta_zero() {
        let entry = make_model("two_fermion_trap", &BTreeMap::new()).unwrap();
        let x = [0.7f64, -0.4];
        let expect = (x[0] - x[1]) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp();
        assert_abs_diff_eq!(entry.trial().value(&[0.0], &x), expect, epsilon = 1e-15);
    }

    #[test]
    fn every_catalog_entry_constructs() {
        for name in catalog_names() {
            let entry = make_model(name, &BTreeMap::new()).unwrap();
            assert_eq!(entry.model().dimension(), entry.trial().dimension());
            assert_eq!(entry.theta_default().len(), entry.trial().parameter_count());
        }
    }
}
