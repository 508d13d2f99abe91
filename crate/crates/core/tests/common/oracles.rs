//! Independent reference computations: closed-form Kalman recursions,
//! dense-grid Bayes, quadrature of geometric means and the closed-form
//! global GCI of single Gaussians.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::RngExt;

use jdtc::density::{AugmentedBernoulli, ClassId, ClassModePmf, GaussianMixture, ModeId};
use jdtc::filter::{centralized_update, single_sensor_update};
use jdtc::fusion::{consensus, gm_geometric_mean, NetworkGraph};
use jdtc::models::{
    ClassLibrary, ClassSpec, ClutterModel, DetectionProfile, MeasurementFunction, MotionMode, SensorId, SensorModel,
};

use super::{normal, random_pmf, random_spd, rng};

const C1: ClassId = ClassId(1);
const M1: ModeId = ModeId(1);

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// One class with one random-walk mode on a scalar state.
pub fn scalar_library() -> ClassLibrary {
    let mode = MotionMode::linear(M1, scalar(1.0), scalar(0.5)).unwrap();
    ClassLibrary::new(vec![mode], vec![ClassSpec { id: C1, modes: vec![M1], transition: scalar(1.0) }]).unwrap()
}

pub fn scalar_density(r: f64, gm: GaussianMixture) -> AugmentedBernoulli {
    let mut pmf = ClassModePmf::default();
    pmf.class.insert(C1, 1.0);
    pmf.mode.insert(C1, BTreeMap::from([(M1, 1.0)]));
    AugmentedBernoulli { r, pmf, spdf: BTreeMap::from([((C1, M1), gm)]) }
}

fn sensor(id: u32, function: MeasurementFunction, noise_var: f64, pd: f64, clutter: ClutterModel) -> SensorModel {
    SensorModel::new(SensorId(id), function, noise_var, DetectionProfile::uniform(pd), clutter).unwrap()
}

/// Likelihood ratio `ℓ` recovered from the existence update.
fn existence_ratio(prior_r: f64, post_r: f64) -> f64 {
    (post_r / (1.0 - post_r)) / (prior_r / (1.0 - prior_r))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KalmanErrors {
    pub single: f64,
    pub centralized: f64,
    pub order: f64,
}

/// Largest absolute deviation from the closed-form Kalman recursion in
/// posterior mean, variance and normalizer (`ℓ·Πκ`), over a set of cases.
pub fn kalman_oracle() -> KalmanErrors {
    let lib = scalar_library();
    let clutter = ClutterModel::new(1.0, -50.0, 50.0).unwrap();
    let kappa = clutter.intensity(0.0);
    let linear = MeasurementFunction::Linear { row: vec![1.0] };
    let mut errors = KalmanErrors::default();
    let mut rng = rng(2024);

    for _ in 0..50 {
        let (mu, p) = (rng.random_range(-5.0..5.0), rng.random_range(0.2..5.0));
        let r0 = rng.random_range(0.05..0.95);
        let pred = scalar_density(r0, GaussianMixture::single(DVector::from_element(1, mu), scalar(p)));
        let obs: Vec<(f64, f64)> =
            (0..2).map(|_| (rng.random_range(0.1..3.0), mu + rng.random_range(-3.0..3.0))).collect();

        // Closed form, sensor after sensor.
        let (mut m, mut v, mut norm) = (mu, p, 1.0);
        let mut after_first = (0.0, 0.0, 0.0);
        for (i, &(noise, z)) in obs.iter().enumerate() {
            let s = v + noise;
            norm *= pdf(z, m, s);
            let k = v / s;
            m += k * (z - m);
            v *= 1.0 - k;
            if i == 0 {
                after_first = (m, v, norm);
            }
        }

        let sensors: Vec<SensorModel> = obs
            .iter()
            .enumerate()
            .map(|(i, &(noise, _))| sensor(i as u32 + 1, linear.clone(), noise, 1.0, clutter))
            .collect();
        let single = single_sensor_update(&pred, &[obs[0].1], &sensors[0], &lib, None).unwrap();
        let c = &single.spdf[&(C1, M1)].components[0];
        let lik = existence_ratio(r0, single.r) * kappa;
        errors.single = errors
            .single
            .max((c.mean[0] - after_first.0).abs())
            .max((c.cov[(0, 0)] - after_first.1).abs())
            .max((lik - after_first.2).abs());

        let scans: BTreeMap<SensorId, Vec<f64>> =
            obs.iter().enumerate().map(|(i, o)| (SensorId(i as u32 + 1), vec![o.1])).collect();
        let both = centralized_update(&pred, &scans, &sensors, &lib, None).unwrap();
        let c = &both.spdf[&(C1, M1)].components[0];
        let lik = existence_ratio(r0, both.r) * kappa * kappa;
        errors.centralized =
            errors.centralized.max((c.mean[0] - m).abs()).max((c.cov[(0, 0)] - v).abs()).max((lik - norm).abs());

        // Same physical sensors, opposite processing order.
        let swapped: Vec<SensorModel> = obs
            .iter()
            .rev()
            .enumerate()
            .map(|(i, &(noise, _))| sensor(i as u32 + 1, linear.clone(), noise, 1.0, clutter))
            .collect();
        let swapped_scans: BTreeMap<SensorId, Vec<f64>> =
            obs.iter().rev().enumerate().map(|(i, o)| (SensorId(i as u32 + 1), vec![o.1])).collect();
        let other = centralized_update(&pred, &swapped_scans, &swapped, &lib, None).unwrap();
        let d = &other.spdf[&(C1, M1)].components[0];
        errors.order = errors
            .order
            .max((c.mean[0] - d.mean[0]).abs())
            .max((c.cov[(0, 0)] - d.cov[(0, 0)]).abs())
            .max((both.r - other.r).abs());
    }
    errors
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GridErrors {
    pub l1: f64,
    pub existence: f64,
}

/// Quadratic sensor `h(x) = x²` with clutter: GM/EKF update against Bayes'
/// rule on a dense grid, worst case over random scans.
///
/// The prior components keep `h''·P/√R` near 0.05, far more curved than a
/// range sensor thousands of meters away yet inside the regime where a
/// linearization at the component mean is meaningful.
pub fn grid_oracle() -> GridErrors {
    let lib = scalar_library();
    let (pd, noise) = (0.9, 1.0);
    let clutter = ClutterModel::new(2.0, 0.0, 40.0).unwrap();
    let quad = sensor(1, MeasurementFunction::Quadratic { row: vec![1.0] }, noise, pd, clutter);
    let mut errors = GridErrors::default();
    let mut rng = rng(77);

    for _ in 0..30 {
        let prior = GaussianMixture::new(vec![
            jdtc::density::GaussianComponent::new(0.6, DVector::from_element(1, 3.0), scalar(0.025)),
            jdtc::density::GaussianComponent::new(0.4, DVector::from_element(1, 3.8), scalar(0.02)),
        ]);
        let r0 = rng.random_range(0.2..0.8);
        let pred = scalar_density(r0, prior.clone());

        let truth = if rng.random::<f64>() < 0.6 { 3.0 } else { 3.8 } + 0.25 * normal(&mut rng);
        let mut scan = Vec::new();
        if rng.random::<f64>() < pd {
            scan.push(truth * truth + noise.sqrt() * normal(&mut rng));
        }
        scan.extend(clutter.sample(&mut rng));
        scan.retain(|&z| clutter.contains(z));

        let post = single_sensor_update(&pred, &scan, &quad, &lib, None).unwrap();
        let gm = &post.spdf[&(C1, M1)];

        let (lo, hi, n) = (0.5, 6.5, 60_000);
        let h = (hi - lo) / n as f64;
        let grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
        let joint: Vec<f64> = grid
            .iter()
            .map(|&x| {
                let s = prior.eval(&DVector::from_element(1, x)).unwrap();
                let lik: f64 = scan.iter().map(|&z| pdf(z, x * x, noise) / clutter.intensity(z)).sum();
                s * (1.0 - pd + pd * lik)
            })
            .collect();
        let ell: f64 = joint.iter().sum::<f64>() * h;
        let r_grid = r0 * ell / (1.0 - r0 + r0 * ell);
        let l1: f64 = grid
            .iter()
            .zip(&joint)
            .map(|(&x, j)| (j / ell - gm.eval(&DVector::from_element(1, x)).unwrap()).abs() * h)
            .sum();
        errors.l1 = errors.l1.max(l1);
        errors.existence = errors.existence.max((post.r - r_grid).abs());
    }
    errors
}

/// Worst L¹ distance between the normalized GM geometric mean of two
/// scalar Gaussians and the quadrature-normalized exact `s₁^ω s₂^(1−ω)`.
pub fn quadrature_oracle(pairs: usize) -> f64 {
    let mut rng = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let (m1, m2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (p1, p2) = (rng.random_range(0.2..4.0), rng.random_range(0.2..4.0));
        let omega = rng.random_range(0.05..0.95);
        let g = |m: f64, p: f64| GaussianMixture::single(DVector::from_element(1, m), scalar(p));
        let mut fused = gm_geometric_mean(&g(m1, p1), &g(m2, p2), omega).unwrap();
        fused.normalize();

        let h = 1e-3;
        let grid: Vec<f64> = (-40_000..=40_000).map(|i| i as f64 * h).collect();
        let exact: Vec<f64> =
            grid.iter().map(|&x| pdf(x, m1, p1).powf(omega) * pdf(x, m2, p2).powf(1.0 - omega)).collect();
        let z: f64 = exact.iter().sum::<f64>() * h;
        let l1: f64 = grid
            .iter()
            .zip(&exact)
            .map(|(&x, e)| (e / z - fused.eval(&DVector::from_element(1, x)).unwrap()).abs() * h)
            .sum();
        worst = worst.max(l1);
    }
    worst
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConsensusErrors {
    pub existence: f64,
    pub mean: f64,
}

/// Two classes on a 2-dim state: c1 = {m1}, c2 = {m1, m2}; one random
/// Gaussian per slot.
pub fn random_planar_density(rng: &mut rand_chacha::ChaCha8Rng) -> AugmentedBernoulli {
    let gamma = random_pmf(rng, 2);
    let beta = random_pmf(rng, 2);
    let mut pmf =
        ClassModePmf { class: BTreeMap::from([(ClassId(1), gamma[0]), (ClassId(2), gamma[1])]), ..Default::default() };
    pmf.mode.insert(ClassId(1), BTreeMap::from([(M1, 1.0)]));
    pmf.mode.insert(ClassId(2), BTreeMap::from([(M1, beta[0]), (ModeId(2), beta[1])]));
    let mut spdf = BTreeMap::new();
    for slot in [(ClassId(1), M1), (ClassId(2), M1), (ClassId(2), ModeId(2))] {
        let mean = DVector::from_fn(2, |_, _| 2.0 * normal(rng));
        spdf.insert(slot, GaussianMixture::single(mean, random_spd(rng, &[1.5, 1.0])));
    }
    AugmentedBernoulli { r: rng.random_range(0.05..0.95), pmf, spdf }
}

/// Closed-form uniform-weight GCI of single-Gaussian slots:
/// `r̄` and the fused mean of every slot.
pub fn global_gci(densities: &[AugmentedBernoulli]) -> (f64, BTreeMap<(ClassId, ModeId), DVector<f64>>) {
    let w = 1.0 / densities.len() as f64;
    let geo = |f: &dyn Fn(&AugmentedBernoulli) -> f64| densities.iter().map(|d| f(d).powf(w)).product::<f64>();
    let r_tilde = geo(&|d| d.r);
    let zeta = geo(&|d| 1.0 - d.r);
    let mut means = BTreeMap::new();
    let mut total = 0.0;
    for &(c, m) in densities[0].spdf.keys() {
        let dim = 2;
        let mut info = DMatrix::zeros(dim, dim);
        let mut h = DVector::zeros(dim);
        let mut quad = 0.0;
        let mut log_norm = 0.0;
        for d in densities {
            let comp = &d.spdf[&(c, m)].components[0];
            let pinv = comp.cov.clone().cholesky().unwrap().inverse();
            info += &pinv * w;
            h += &pinv * &comp.mean * w;
            quad += w * comp.mean.dot(&(&pinv * &comp.mean));
            log_norm -= 0.5 * w * ((2.0 * PI).powi(dim as i32) * comp.cov.determinant()).ln();
        }
        let cov = info.clone().cholesky().unwrap().inverse();
        let mean = &cov * &h;
        let log_mass =
            log_norm + 0.5 * ((2.0 * PI).powi(dim as i32) * cov.determinant()).ln() + 0.5 * h.dot(&mean) - 0.5 * quad;
        total += geo(&|d| d.pmf.class_prob(c)) * geo(&|d| d.pmf.mode_prob(c, m)) * log_mass.exp();
        means.insert((c, m), mean);
    }
    let num = r_tilde * total;
    (num / (num + zeta), means)
}

/// Metropolis consensus on a connected 5-node graph after `steps` rounds
/// against the closed-form global fusion, worst case over random draws.
pub fn consensus_oracle(steps: usize) -> ConsensusErrors {
    let ids: Vec<SensorId> = (1..=5).map(SensorId).collect();
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)].map(|(a, b)| (ids[a], ids[b]));
    let graph = NetworkGraph::from_edges(ids.clone(), edges).unwrap();
    let mut rng = rng(31);
    let mut errors = ConsensusErrors::default();
    for _ in 0..10 {
        let densities: Vec<AugmentedBernoulli> = (0..5).map(|_| random_planar_density(&mut rng)).collect();
        let (r_bar, means) = global_gci(&densities);
        let states = ids.iter().copied().zip(densities.iter().cloned()).collect();
        let out = consensus(&states, &graph, steps, None).unwrap();
        for d in out.values() {
            errors.existence = errors.existence.max((d.r - r_bar).abs());
            for (slot, mean) in &means {
                let got = &d.spdf[slot].components[0].mean;
                errors.mean = errors.mean.max((got - mean).amax());
            }
        }
    }
    errors
}
