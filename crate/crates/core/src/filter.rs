//! Bernoulli JDTC recursions: prediction, (multi-)sensor update and state
//! extraction, all on Gaussian-mixture state densities.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::{AugmentedBernoulli, ClassId, ClassModePmf, GaussianComponent, GaussianMixture, ModeId, Slot};
use crate::error::{Error, Result};
use crate::gaussian::{self, logsumexp};
use crate::models::{propagate_cov, BirthModel, ClassLibrary, SensorId, SensorModel};
use crate::reduce::{reduce, ReductionPolicy};

/// Predicted density `f_{k|k-1}`; same shape as a posterior.
pub type PredictedDensity = AugmentedBernoulli;

/// Scan of one sensor at one time step.
pub type Scan = Vec<f64>;

/// Extracted augmented state of a detected target.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub state: DVector<f64>,
    pub class: ClassId,
    pub mode: ModeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Mean of the heaviest component.
    Map,
    /// Mixture mean.
    #[default]
    Mmse,
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1]")))
    }
}

/// Bernoulli prediction over the augmented class-mode-state space.
///
/// Class is carried over unchanged, the mode follows the class's Markov
/// chain and each surviving component is pushed through `(F(m), Q(m))` of
/// the destination mode. Every slot's mixture holds the birth components
/// followed by the surviving components of each source mode in library
/// order; components with zero weight are omitted.
pub fn predict(
    prior: &AugmentedBernoulli,
    birth: &BirthModel,
    survival_prob: f64,
    library: &ClassLibrary,
) -> Result<PredictedDensity> {
    check_prob("survival probability", survival_prob)?;
    check_prob("birth probability", birth.probability)?;
    check_prob("existence probability", prior.r)?;
    library.check_support(prior)?;

    let birth_mass = birth.probability * (1.0 - prior.r);
    let survive_mass = survival_prob * prior.r;
    let r = birth_mass + survive_mass;
    if !(r > 0.0) {
        // Neither birth nor survival possible: the conditionals are
        // irrelevant, keep the newborn ones so the density stays valid.
        return Ok(birth.as_density(0.0));
    }

    let mut pmf = ClassModePmf::default();
    let mut spdf = BTreeMap::new();
    for class in &library.classes {
        let c = class.id;
        let class_birth = birth_mass * birth.pmf.class_prob(c);
        let class_survive = survive_mass * prior.pmf.class_prob(c);
        let class_total = class_birth + class_survive;
        if !(class_total > 0.0) {
            pmf.class.insert(c, 0.0);
            pmf.mode.insert(c, birth.pmf.mode[&c].clone());
            for &m in &class.modes {
                let gm = if birth.pmf.mode_prob(c, m) > 0.0 {
                    birth.spdf[&(c, m)].clone()
                } else {
                    GaussianMixture::empty()
                };
                spdf.insert((c, m), gm);
            }
            continue;
        }

        let mut modes = BTreeMap::new();
        for &m in &class.modes {
            let mode = library.mode(m)?;
            let mode_birth = class_birth * birth.pmf.mode_prob(c, m);
            let sources: Vec<(ModeId, f64)> = class
                .modes
                .iter()
                .map(|&from| (from, class_survive * class.transition_prob(from, m) * prior.pmf.mode_prob(c, from)))
                .collect();
            let mode_total = mode_birth + sources.iter().map(|s| s.1).sum::<f64>();
            modes.insert(m, mode_total / class_total);
            if !(mode_total > 0.0) {
                spdf.insert((c, m), GaussianMixture::empty());
                continue;
            }

            let mut comps = Vec::new();
            if mode_birth > 0.0 {
                let scale = mode_birth / mode_total;
                for bc in birth.spdf[&(c, m)].iter() {
                    let w = bc.weight * scale;
                    if w > 0.0 {
                        comps.push(GaussianComponent::new(w, bc.mean.clone(), bc.cov.clone()));
                    }
                }
            }
            for (from, mass) in sources {
                if !(mass > 0.0) {
                    continue;
                }
                let scale = mass / mode_total;
                let src = prior
                    .slot(c, from)
                    .ok_or_else(|| Error::InvalidParameter(format!("prior lacks slot ({c},{from})")))?;
                for pc in src.iter() {
                    let w = pc.weight * scale;
                    if w > 0.0 {
                        let (mean, jac) = mode.propagate(&pc.mean)?;
                        let cov = propagate_cov(jac, &pc.cov, &mode.process_cov);
                        comps.push(GaussianComponent::new(w, mean, cov));
                    }
                }
            }
            let mut gm = GaussianMixture::new(comps);
            gm.normalize();
            spdf.insert((c, m), gm);
        }
        pmf.class.insert(c, class_total / r);
        pmf.mode.insert(c, modes);
    }
    renormalize_pmf(&mut pmf);
    Ok(AugmentedBernoulli { r, pmf, spdf })
}

/// Remove floating-point drift from PMF sums.
fn renormalize_pmf(pmf: &mut ClassModePmf) {
    let total: f64 = pmf.class.values().sum();
    if total > 0.0 {
        pmf.class.values_mut().for_each(|p| *p /= total);
    }
    for modes in pmf.mode.values_mut() {
        let total: f64 = modes.values().sum();
        if total > 0.0 {
            modes.values_mut().for_each(|p| *p /= total);
        }
    }
}

/// Per-component quantities of one EKF step that do not depend on `z`.
struct Linearized {
    log_weight: f64,
    predicted: f64,
    innovation_var: f64,
    gain: DVector<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// One sensor's step `Ψ` on a normalized slot mixture.
///
/// Returns the normalized updated mixture and `ln Λ`. The output holds the
/// missed-detection copies first, then one EKF-updated copy per
/// `(z, component)` pair in measurement-major order. Components of exactly
/// zero weight (`p_D ∈ {0, 1}`) are left out.
fn sensor_step(
    gm: &GaussianMixture,
    scan: &[f64],
    log_kappa: &[f64],
    sensor: &SensorModel,
    detection: f64,
) -> Result<(GaussianMixture, f64)> {
    let log_miss = (1.0 - detection).ln();
    let log_detect = detection.ln();
    let mut log_weights = Vec::with_capacity(gm.len() * (scan.len() + 1));
    let mut out = Vec::with_capacity(gm.len() * (scan.len() + 1));

    if log_miss > f64::NEG_INFINITY {
        for c in gm.iter() {
            log_weights.push(log_miss + c.weight.ln());
            out.push(c.clone());
        }
    }

    if log_detect > f64::NEG_INFINITY && !scan.is_empty() {
        let mut lin = Vec::with_capacity(gm.len());
        for c in gm.iter() {
            let (predicted, jac) = sensor.measure(&c.mean)?;
            let ph = &c.cov * &jac;
            let innovation_var = jac.dot(&ph) + sensor.noise_var;
            let gain = ph / innovation_var;
            let mut cov = &c.cov - &gain * (jac.transpose() * &c.cov);
            gaussian::symmetrize(&mut cov);
            lin.push(Linearized {
                log_weight: c.weight.ln(),
                predicted,
                innovation_var,
                gain,
                mean: c.mean.clone(),
                cov,
            });
        }
        for (&z, &lk) in scan.iter().zip(log_kappa) {
            for l in &lin {
                let log_q = gaussian::log_normal_pdf_1d(z, l.predicted, l.innovation_var);
                log_weights.push(log_detect + log_q - lk + l.log_weight);
                let mean = &l.mean + &l.gain * (z - l.predicted);
                out.push(GaussianComponent::new(0.0, mean, l.cov.clone()));
            }
        }
    }

    let log_lambda = logsumexp(&log_weights);
    if log_lambda == f64::NEG_INFINITY {
        return Ok((gm.clone(), f64::NEG_INFINITY));
    }
    for (c, lw) in out.iter_mut().zip(&log_weights) {
        c.weight = (lw - log_lambda).exp();
    }
    Ok((GaussianMixture::new(out), log_lambda))
}

/// Posterior of one slot after all sensors plus `ln ℓ(m|c)`.
fn update_slot(
    gm: &GaussianMixture,
    class: ClassId,
    sensors: &[(&SensorModel, &[f64], Vec<f64>)],
    reduction: Option<&ReductionPolicy>,
) -> Result<(GaussianMixture, f64)> {
    let mut current = gm.clone();
    let mut log_likelihood = 0.0;
    for (sensor, scan, log_kappa) in sensors {
        let pd = sensor.detection_prob(class);
        let (next, log_lambda) = sensor_step(&current, scan, log_kappa, sensor, pd)?;
        log_likelihood += log_lambda;
        if log_lambda == f64::NEG_INFINITY {
            return Ok((current, f64::NEG_INFINITY));
        }
        current = match reduction {
            Some(policy) => reduce(&next, policy)?,
            None => next,
        };
    }
    Ok((current, log_likelihood))
}

/// Multi-sensor Bernoulli update.
///
/// Sensors present in `measurements` are applied one after another in
/// ascending id order; sensors without an entry contribute no scan. The
/// class-mode likelihood `ℓ(m|c)` is the product of the per-sensor
/// normalizers and all class, mode and existence updates are carried out in
/// the log domain. With `reduction` set, each slot mixture is reduced after
/// every sensor step.
pub fn centralized_update(
    pred: &PredictedDensity,
    measurements: &BTreeMap<SensorId, Scan>,
    sensors: &[SensorModel],
    library: &ClassLibrary,
    reduction: Option<&ReductionPolicy>,
) -> Result<AugmentedBernoulli> {
    library.check_support(pred)?;
    let mut ordered: Vec<&SensorModel> = Vec::with_capacity(measurements.len());
    for &id in measurements.keys() {
        let sensor = sensors.iter().find(|s| s.id == id).ok_or(Error::UnknownSensor(id))?;
        ordered.push(sensor);
    }
    let mut prepared = Vec::with_capacity(ordered.len());
    for sensor in ordered {
        let scan = measurements[&sensor.id].as_slice();
        let mut log_kappa = Vec::with_capacity(scan.len());
        for &z in scan {
            let lk = sensor.clutter.log_intensity(z).ok_or(Error::ZeroClutterIntensity { sensor: sensor.id, z })?;
            log_kappa.push(lk);
        }
        prepared.push((sensor, scan, log_kappa));
    }

    let mut spdf = pred.spdf.clone();
    let mut log_class_lik = BTreeMap::new();
    let mut mode_pmf = BTreeMap::new();
    for class in &library.classes {
        let c = class.id;
        let mut log_mode_lik = Vec::with_capacity(class.modes.len());
        for &m in &class.modes {
            let beta = pred.pmf.mode_prob(c, m);
            if !(beta > 0.0) {
                continue;
            }
            let gm = &pred.spdf[&(c, m)];
            let (post, log_lik) = update_slot(gm, c, &prepared, reduction)?;
            spdf.insert((c, m), post);
            log_mode_lik.push((m, beta.ln() + log_lik));
        }
        let terms: Vec<f64> = log_mode_lik.iter().map(|t| t.1).collect();
        let log_lik = logsumexp(&terms);
        log_class_lik.insert(c, log_lik);
        let modes: BTreeMap<ModeId, f64> = if log_lik == f64::NEG_INFINITY {
            pred.pmf.mode[&c].clone()
        } else {
            let mut modes: BTreeMap<ModeId, f64> = class.modes.iter().map(|&m| (m, 0.0)).collect();
            for (m, t) in log_mode_lik {
                modes.insert(m, (t - log_lik).exp());
            }
            modes
        };
        mode_pmf.insert(c, modes);
    }

    let class_terms: Vec<(ClassId, f64)> = library
        .class_ids()
        .filter(|&c| pred.pmf.class_prob(c) > 0.0)
        .map(|c| (c, pred.pmf.class_prob(c).ln() + log_class_lik[&c]))
        .collect();
    let log_total = logsumexp(&class_terms.iter().map(|t| t.1).collect::<Vec<_>>());

    let (r, class_pmf) = if log_total == f64::NEG_INFINITY {
        let r = if pred.r >= 1.0 { 1.0 } else { 0.0 };
        (r, pred.pmf.class.clone())
    } else {
        let mut class_pmf: BTreeMap<ClassId, f64> = library.class_ids().map(|c| (c, 0.0)).collect();
        for &(c, t) in &class_terms {
            class_pmf.insert(c, (t - log_total).exp());
        }
        let r = if pred.r <= 0.0 {
            0.0
        } else if pred.r >= 1.0 {
            1.0
        } else {
            // r ℓ / (1 - r + r ℓ) as a logistic in the log-odds.
            let log_odds = pred.r.ln() + log_total - (1.0 - pred.r).ln();
            1.0 / (1.0 + (-log_odds).exp())
        };
        (r, class_pmf)
    };

    let mut pmf = ClassModePmf { class: class_pmf, mode: mode_pmf };
    renormalize_pmf(&mut pmf);
    Ok(AugmentedBernoulli { r, pmf, spdf })
}

/// Update with a single sensor's scan.
pub fn single_sensor_update(
    pred: &PredictedDensity,
    scan: &[f64],
    sensor: &SensorModel,
    library: &ClassLibrary,
    reduction: Option<&ReductionPolicy>,
) -> Result<AugmentedBernoulli> {
    let measurements = BTreeMap::from([(sensor.id, scan.to_vec())]);
    centralized_update(pred, &measurements, std::slice::from_ref(sensor), library, reduction)
}

/// The class&mode likelihood `ℓ(x|c,m)` of a set of scans at a state.
///
/// `Π_i [1 − p_D^i(c) + p_D^i(c) Σ_z ℓ^i(z|x)/κ^i(z)]`
pub fn state_likelihood(
    x: &DVector<f64>,
    class: ClassId,
    measurements: &BTreeMap<SensorId, Scan>,
    sensors: &[SensorModel],
) -> Result<f64> {
    let mut total = 1.0;
    for (&id, scan) in measurements {
        let sensor = sensors.iter().find(|s| s.id == id).ok_or(Error::UnknownSensor(id))?;
        let pd = sensor.detection_prob(class);
        let (h, _) = sensor.measure(x)?;
        let mut sum = 0.0;
        for &z in scan {
            let lk = sensor.clutter.log_intensity(z).ok_or(Error::ZeroClutterIntensity { sensor: id, z })?;
            sum += (gaussian::log_normal_pdf_1d(z, h, sensor.noise_var) - lk).exp();
        }
        total *= 1.0 - pd + pd * sum;
    }
    Ok(total)
}

/// Probabilities closer than this count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// First key (in iteration order) of the maximal value, treating values
/// within [`TIE_TOLERANCE`] as equal so rounding noise cannot break ties.
fn argmax<K: Copy>(entries: impl Iterator<Item = (K, f64)>) -> Option<K> {
    let mut best: Option<(K, f64)> = None;
    for (k, v) in entries {
        if best.is_none_or(|(_, b)| v > b + TIE_TOLERANCE) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Augmented state extraction; `None` when `r < threshold`.
///
/// Class and mode are the PMF maximizers (lowest id on ties); the state is
/// taken from the winning slot's mixture.
pub fn extract(d: &AugmentedBernoulli, threshold: f64, criterion: Criterion) -> Option<Estimate> {
    if d.r < threshold {
        return None;
    }
    let class = argmax(d.pmf.class.iter().map(|(&c, &p)| (c, p)))?;
    let mode = argmax(d.pmf.mode.get(&class)?.iter().map(|(&m, &p)| (m, p)))?;
    let gm = d.slot(class, mode)?;
    let state = match criterion {
        Criterion::Mmse => gm.moments().ok()?.1,
        Criterion::Map => gm.heaviest()?.mean.clone(),
    };
    Some(Estimate { state, class, mode })
}

/// Slots that an update would touch, in processing order.
pub fn active_slots(d: &AugmentedBernoulli) -> Vec<Slot> {
    d.spdf.keys().copied().filter(|&(c, m)| d.pmf.mode_prob(c, m) > 0.0).collect()
}
