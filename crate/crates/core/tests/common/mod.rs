//! Fixtures, random generators and property checks shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use jdtc::config::ScenarioConfig;
use jdtc::density::{AugmentedBernoulli, ClassId, ClassModePmf, GaussianComponent, GaussianMixture, ModeId};
use jdtc::filter::{centralized_update, predict, single_sensor_update, state_likelihood, Scan};
use jdtc::fusion::{fuse_pair, fuse_weighted, gm_geometric_mean};
use jdtc::models::{ClassLibrary, SensorId, SensorModel};
use jdtc::reduce::{merge_components, reduce, ReductionPolicy};
use jdtc::sim::Scenario;

pub mod oracles;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn reference() -> &'static Scenario {
    static SCENARIO: OnceLock<Scenario> = OnceLock::new();
    SCENARIO.get_or_init(|| Scenario::from_config(&ScenarioConfig::paper_reference()).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `A Aᵀ` plus a diagonal floor, with per-axis scales.
pub fn random_spd(rng: &mut ChaCha8Rng, scales: &[f64]) -> DMatrix<f64> {
    let d = scales.len();
    let a = DMatrix::from_fn(d, d, |i, _| scales[i] * normal(rng) / (d as f64).sqrt());
    let mut p = &a * a.transpose();
    for i in 0..d {
        p[(i, i)] += 0.1 * scales[i] * scales[i];
    }
    (&p + p.transpose()) * 0.5
}

pub fn random_pmf(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Normalized mixture of `j` components spread around `center`.
pub fn random_gm(rng: &mut ChaCha8Rng, center: &[f64], spread: &[f64], j: usize) -> GaussianMixture {
    let weights = random_pmf(rng, j);
    let comps = weights
        .into_iter()
        .map(|w| {
            let mean =
                DVector::from_iterator(center.len(), center.iter().zip(spread).map(|(c, s)| c + s * normal(rng)));
            let scales: Vec<f64> = spread.iter().map(|s| s * (0.2 + rng.random::<f64>())).collect();
            GaussianComponent::new(w, mean, random_spd(rng, &scales))
        })
        .collect();
    GaussianMixture::new(comps)
}

pub const CENTER: [f64; 4] = [4786.0, -8.3, 3584.0, -100.9];
pub const SPREAD: [f64; 4] = [60.0, 5.0, 60.0, 5.0];

/// Random valid density over a library's slots, 1 to `max_j` components per slot.
pub fn random_density(rng: &mut ChaCha8Rng, lib: &ClassLibrary, max_j: usize) -> AugmentedBernoulli {
    let classes: Vec<_> = lib.classes.iter().collect();
    let gamma = random_pmf(rng, classes.len());
    let mut pmf = ClassModePmf::default();
    let mut spdf = BTreeMap::new();
    for (class, g) in classes.into_iter().zip(gamma) {
        pmf.class.insert(class.id, g);
        let beta = random_pmf(rng, class.modes.len());
        pmf.mode.insert(class.id, class.modes.iter().copied().zip(beta).collect());
        for &m in &class.modes {
            let j = rng.random_range(1..=max_j);
            spdf.insert((class.id, m), random_gm(rng, &CENTER, &SPREAD, j));
        }
    }
    AugmentedBernoulli { r: rng.random(), pmf, spdf }
}

/// Scans for a few reference sensors: a noisy detection of `x` with
/// probability one half plus 0–3 clutter points.
pub fn random_scans(rng: &mut ChaCha8Rng, sensors: &[SensorModel], x: &DVector<f64>) -> BTreeMap<SensorId, Scan> {
    sensors
        .iter()
        .map(|s| {
            let mut scan = Vec::new();
            if rng.random::<bool>() {
                let (h, _) = s.measure(x).unwrap();
                scan.push(h + s.noise_var.sqrt() * normal(rng));
            }
            for _ in 0..rng.random_range(0..4) {
                scan.push(rng.random_range(s.clutter.low..s.clutter.high));
            }
            (s.id, scan)
        })
        .collect()
}

fn pick_sensors(rng: &mut ChaCha8Rng, n: usize) -> Vec<SensorModel> {
    let all = &reference().sensors;
    let start = rng.random_range(0..all.len() - n);
    all[start..start + n].to_vec()
}

fn check_normalized(d: &AugmentedBernoulli, what: &str) -> Check {
    d.validate().map_err(|v| format!("{what}: {v}"))?;
    let gsum: f64 = d.pmf.class.values().sum();
    ensure!((gsum - 1.0).abs() <= 1e-9, "{what}: class sum {gsum}");
    for (c, modes) in &d.pmf.mode {
        let bsum: f64 = modes.values().sum();
        ensure!((bsum - 1.0).abs() <= 1e-9, "{what}: mode sum {bsum} for {c}");
    }
    ensure!((d.total_mass() - 1.0).abs() <= 1e-9, "{what}: total mass {}", d.total_mass());
    Ok(())
}

// ---- core density -------------------------------------------------------

pub fn density_is_consistent(seed: u64) -> Check {
    let mut rng = rng(seed);
    let d = random_density(&mut rng, &reference().library, 4);
    check_normalized(&d, "random density")
}

pub fn mixture_integrates_to_weight(seed: u64) -> Check {
    let mut rng = rng(seed);
    let j = rng.random_range(1..5);
    let mut gm = random_gm(&mut rng, &[0.0], &[1.0], j);
    gm.scale(rng.random_range(0.1..3.0));
    let h = 1e-2;
    let mut integral = 0.0;
    for i in -3000..=3000 {
        let v = gm.eval(&DVector::from_element(1, i as f64 * h)).unwrap();
        ensure!(v >= 0.0, "negative density {v}");
        integral += v * h;
    }
    ensure!((integral - gm.total_weight()).abs() <= 1e-6, "∫ = {integral}, weight {}", gm.total_weight());
    Ok(())
}

// ---- filter -------------------------------------------------------------

pub fn predict_invariants(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sc = reference();
    let prior = random_density(&mut rng, &sc.library, 3);
    let ps = rng.random();
    let pred = predict(&prior, &sc.birth, ps, &sc.library).map_err(|e| e.to_string())?;
    check_normalized(&pred, "predicted")?;
    let expected_r = sc.birth.probability * (1.0 - prior.r) + ps * prior.r;
    ensure!((pred.r - expected_r).abs() <= 1e-12, "r {} vs {expected_r}", pred.r);
    // J_B(c,m) + Σ_{m'} J(c,m') when every branch has positive mass.
    if prior.r > 0.0 && prior.r < 1.0 && ps > 0.0 {
        for class in &sc.library.classes {
            let surviving: usize = class.modes.iter().map(|&m| prior.spdf[&(class.id, m)].len()).sum();
            for &m in &class.modes {
                let reachable: usize = class
                    .modes
                    .iter()
                    .filter(|&&from| class.transition_prob(from, m) > 0.0)
                    .map(|&from| prior.spdf[&(class.id, from)].len())
                    .sum();
                let births = sc.birth.spdf[&(class.id, m)].len();
                let got = pred.spdf[&(class.id, m)].len();
                ensure!(got == births + reachable, "slot ({},{m}): {got} components", class.id);
                ensure!(reachable == surviving, "reference transitions are dense");
            }
        }
    }
    Ok(())
}

pub fn update_invariants(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sc = reference();
    let pred = random_density(&mut rng, &sc.library, 3);
    let sensors = pick_sensors(&mut rng, 3);
    let x = DVector::from_column_slice(&CENTER);
    let scans = random_scans(&mut rng, &sensors, &x);

    let first = &sensors[0];
    let single = single_sensor_update(&pred, &scans[&first.id], first, &sc.library, None).map_err(|e| e.to_string())?;
    check_normalized(&single, "single-sensor posterior")?;
    let all = centralized_update(&pred, &scans, &sensors, &sc.library, None).map_err(|e| e.to_string())?;
    check_normalized(&all, "centralized posterior")?;
    let factor: usize = scans.values().map(|z| z.len() + 1).product();
    for (slot, gm) in &pred.spdf {
        let one = single.spdf[slot].len();
        ensure!(one == (scans[&first.id].len() + 1) * gm.len(), "single-sensor count {one} in {slot:?}");
        let many = all.spdf[slot].len();
        ensure!(many == factor * gm.len(), "centralized count {many} in {slot:?}");
    }
    Ok(())
}

pub fn missed_detection_lowers_existence(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sc = reference();
    let mut pred = random_density(&mut rng, &sc.library, 3);
    pred.r = rng.random_range(0.01..0.99);
    let n = rng.random_range(1..5);
    let sensors = pick_sensors(&mut rng, n);
    let scans: BTreeMap<SensorId, Scan> = sensors.iter().map(|s| (s.id, Vec::new())).collect();
    let post = centralized_update(&pred, &scans, &sensors, &sc.library, None).map_err(|e| e.to_string())?;
    ensure!(post.r < pred.r, "r rose from {} to {}", pred.r, post.r);
    Ok(())
}

pub fn likelihood_lower_bound(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sensors = pick_sensors(&mut rng, 4);
    let x = DVector::from_iterator(4, CENTER.iter().zip(SPREAD).map(|(c, s)| c + 10.0 * s * normal(&mut rng)));
    let scans = random_scans(&mut rng, &sensors, &x);
    let class = ClassId(rng.random_range(1..=3));
    let ell = state_likelihood(&x, class, &scans, &sensors).map_err(|e| e.to_string())?;
    let floor: f64 = sensors.iter().map(|s| 1.0 - s.detection_prob(class)).product();
    ensure!(ell >= floor * (1.0 - 1e-12) && floor > 0.0, "ℓ = {ell} below {floor}");
    Ok(())
}

pub fn classes_are_separated(seed: u64) -> Check {
    let mut rng = rng(seed);
    let sc = reference();
    let prior = random_density(&mut rng, &sc.library, 2);
    let other = ClassId(rng.random_range(1..=3));
    let mut perturbed = prior.clone();
    let fresh = random_density(&mut rng, &sc.library, 2);
    perturbed.pmf.mode.insert(other, fresh.pmf.mode[&other].clone());
    for (&(c, m), gm) in &fresh.spdf {
        if c == other {
            perturbed.spdf.insert((c, m), gm.clone());
        }
    }
    let sensors = pick_sensors(&mut rng, 2);
    let scans = random_scans(&mut rng, &sensors, &DVector::from_column_slice(&CENTER));
    let run = |d: &AugmentedBernoulli| -> Result<_, String> {
        let pred = predict(d, &sc.birth, 0.98, &sc.library).map_err(|e| e.to_string())?;
        let post = centralized_update(&pred, &scans, &sensors, &sc.library, None).map_err(|e| e.to_string())?;
        Ok((pred, post))
    };
    let (pa, ua) = run(&prior)?;
    let (pb, ub) = run(&perturbed)?;
    ensure!(pa.pmf.class == pb.pmf.class, "predicted class PMF depends on other classes' modes");
    for (a, b) in [(&pa, &pb), (&ua, &ub)] {
        for class in sc.library.classes.iter().filter(|c| c.id != other) {
            ensure!(a.pmf.mode[&class.id] == b.pmf.mode[&class.id], "mode PMF of {} changed", class.id);
            for &m in &class.modes {
                ensure!(a.spdf[&(class.id, m)] == b.spdf[&(class.id, m)], "s({},{m}) changed", class.id);
            }
        }
    }
    Ok(())
}

// ---- fusion -------------------------------------------------------------

pub fn fusion_output_is_valid(seed: u64) -> Check {
    let mut rng = rng(seed);
    let lib = &reference().library;
    let (a, b) = (random_density(&mut rng, lib, 2), random_density(&mut rng, lib, 2));
    let omega = rng.random_range(0.01..0.99);
    let fused = fuse_pair(&a, &b, omega).map_err(|e| e.to_string())?;
    check_normalized(&fused, "fused")?;
    for (slot, gm) in &fused.spdf {
        let expected = a.spdf[slot].len() * b.spdf[slot].len();
        ensure!(gm.len() == expected, "fused count {} in {slot:?}", gm.len());
    }
    Ok(())
}

pub fn fusion_is_idempotent(seed: u64) -> Check {
    let mut rng = rng(seed);
    let d = random_density(&mut rng, &reference().library, 1);
    let fused = fuse_pair(&d, &d, rng.random_range(0.01..0.99)).map_err(|e| e.to_string())?;
    ensure!((fused.r - d.r).abs() <= 1e-12, "r {} vs {}", fused.r, d.r);
    for (c, p) in &d.pmf.class {
        ensure!((fused.pmf.class[c] - p).abs() <= 1e-12, "γ({c})");
    }
    for (c, modes) in &d.pmf.mode {
        for (m, p) in modes {
            ensure!((fused.pmf.mode[c][m] - p).abs() <= 1e-12, "β({m}|{c})");
        }
    }
    for (slot, gm) in &d.spdf {
        let (x, y) = (&gm.components[0], &fused.spdf[slot].components[0]);
        ensure!((x.weight - y.weight).abs() <= 1e-12, "weight in {slot:?}");
        let mean_err = (&x.mean - &y.mean).amax() / x.mean.amax();
        let cov_err = (&x.cov - &y.cov).amax() / x.cov.amax();
        ensure!(mean_err <= 1e-12 && cov_err <= 1e-12, "moments in {slot:?}: {mean_err:e} {cov_err:e}");
    }
    Ok(())
}

pub fn fusion_is_covariance_intersection(seed: u64) -> Check {
    let mut rng = rng(seed);
    let lib = &reference().library;
    let (a, b) = (random_density(&mut rng, lib, 1), random_density(&mut rng, lib, 1));
    let omega = rng.random_range(0.01..0.99);
    let fused = fuse_pair(&a, &b, omega).map_err(|e| e.to_string())?;
    for (slot, gm) in &fused.spdf {
        let inv = |p: &DMatrix<f64>| p.clone().cholesky().unwrap().inverse();
        let expected =
            inv(&a.spdf[slot].components[0].cov) * omega + inv(&b.spdf[slot].components[0].cov) * (1.0 - omega);
        let got = inv(&gm.components[0].cov);
        let err = (&got - &expected).amax() / expected.amax();
        ensure!(err <= 1e-12, "information mismatch {err:e} in {slot:?}");
    }
    Ok(())
}

pub fn fusion_is_continuous_at_boundary(seed: u64) -> Check {
    let mut rng = rng(seed);
    let lib = &reference().library;
    let a = random_density(&mut rng, lib, 1);
    let b = overlapping(&mut rng, &a);
    let fused = fuse_pair(&a, &b, 1.0 - 1e-6).map_err(|e| e.to_string())?;
    ensure!((fused.r - a.r).abs() <= 1e-4, "r {} vs {}", fused.r, a.r);
    for (c, p) in &a.pmf.class {
        ensure!((fused.pmf.class[c] - p).abs() <= 1e-4, "γ({c})");
    }
    for (slot, gm) in &a.spdf {
        let (x, y) = (&gm.components[0], &fused.spdf[slot].components[0]);
        // Relative to the component's own spread.
        let sd = x.cov.diagonal().map(f64::sqrt);
        let mean_err = (&x.mean - &y.mean).component_div(&sd).amax();
        let cov_err = (&x.cov - &y.cov).amax() / x.cov.amax();
        ensure!(mean_err <= 1e-4 && cov_err <= 1e-4, "slot {slot:?}: {mean_err:e} {cov_err:e}");
    }
    Ok(())
}

/// A density whose slots overlap those of `d`: means within about one
/// standard deviation, covariances within a factor of two, fresh PMFs.
pub fn overlapping(rng: &mut ChaCha8Rng, d: &AugmentedBernoulli) -> AugmentedBernoulli {
    let mut out = random_density(rng, &reference().library, 1);
    for (slot, gm) in &d.spdf {
        let c = &gm.components[0];
        let chol = c.cov.clone().cholesky().unwrap();
        let shift = chol.l() * DVector::from_fn(c.mean.len(), |_, _| normal(rng) / 2.0);
        let scale = 2f64.powf(rng.random_range(-1.0..1.0));
        out.spdf.insert(*slot, GaussianMixture::single(&c.mean + shift, &c.cov * scale));
    }
    out
}

pub fn fusion_order_is_irrelevant(seed: u64) -> Check {
    let mut rng = rng(seed);
    let lib = &reference().library;
    let ds: Vec<_> = (0..3).map(|_| random_density(&mut rng, lib, 1)).collect();
    let ws: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
    let forward =
        fuse_weighted(&[(&ds[0], ws[0]), (&ds[1], ws[1]), (&ds[2], ws[2])], None).map_err(|e| e.to_string())?;
    let backward =
        fuse_weighted(&[(&ds[2], ws[2]), (&ds[1], ws[1]), (&ds[0], ws[0])], None).map_err(|e| e.to_string())?;
    ensure!((forward.r - backward.r).abs() <= 1e-9, "r {} vs {}", forward.r, backward.r);
    for (c, p) in &forward.pmf.class {
        ensure!((backward.pmf.class[c] - p).abs() <= 1e-9, "γ({c})");
    }
    for (slot, gm) in &forward.spdf {
        let (x, y) = (&gm.components[0], &backward.spdf[slot].components[0]);
        ensure!((&x.mean - &y.mean).amax() <= 1e-9 * x.mean.amax(), "mean in {slot:?}");
        ensure!((&x.cov - &y.cov).amax() <= 1e-9 * x.cov.amax(), "cov in {slot:?}");
    }
    Ok(())
}

pub fn geometric_mean_count(seed: u64) -> Check {
    let mut rng = rng(seed);
    let (ja, jb) = (rng.random_range(1..6), rng.random_range(1..6));
    let a = random_gm(&mut rng, &CENTER, &SPREAD, ja);
    let b = random_gm(&mut rng, &CENTER, &SPREAD, jb);
    let out = gm_geometric_mean(&a, &b, rng.random_range(0.01..0.99)).map_err(|e| e.to_string())?;
    ensure!(out.len() == ja * jb, "{} components from {ja}×{jb}", out.len());
    Ok(())
}

// ---- gm-reduce ----------------------------------------------------------

fn random_policy(rng: &mut ChaCha8Rng) -> ReductionPolicy {
    ReductionPolicy {
        prune_threshold: [0.0, 1e-15, 1e-3, 0.05][rng.random_range(0..4)],
        merge_threshold: rng.random_range(0.5..30.0),
        max_components: rng.random_range(1..8),
    }
}

fn clustered_gm(rng: &mut ChaCha8Rng) -> GaussianMixture {
    let j = rng.random_range(1..15);
    let mut gm = random_gm(rng, &CENTER, &SPREAD, j);
    gm.scale(rng.random_range(0.01..10.0));
    gm
}

pub fn reduction_invariants(seed: u64) -> Check {
    let mut rng = rng(seed);
    let gm = clustered_gm(&mut rng);
    let policy = random_policy(&mut rng);
    let out = reduce(&gm, &policy).map_err(|e| e.to_string())?;
    let (w_in, w_out) = (gm.total_weight(), out.total_weight());
    ensure!((w_in - w_out).abs() <= 1e-12 * w_in, "weight {w_in} → {w_out}");
    ensure!(out.len() <= gm.len() && out.len() <= policy.max_components, "count {} → {}", gm.len(), out.len());
    for c in out.iter() {
        let asym = (&c.cov - c.cov.transpose()).amax();
        ensure!(asym == 0.0, "asymmetric covariance");
        ensure!(c.cov.clone().cholesky().is_some(), "covariance not PD");
    }
    let again = reduce(&out, &policy).map_err(|e| e.to_string())?;
    ensure!(again.len() == out.len(), "not idempotent: {} → {}", out.len(), again.len());
    for (x, y) in out.iter().zip(again.iter()) {
        ensure!((x.weight - y.weight).abs() <= 1e-12 * w_in, "weights drift");
        ensure!((&x.mean - &y.mean).amax() <= 1e-9, "means drift");
        ensure!((&x.cov - &y.cov).amax() <= 1e-9 * x.cov.amax(), "covariances drift");
    }
    Ok(())
}

pub fn merge_matches_moments(seed: u64) -> Check {
    let mut rng = rng(seed);
    let gm = random_gm(&mut rng, &CENTER, &SPREAD, 2);
    let merged = merge_components(&gm.components);
    let (w, mean, cov) = gm.moments().map_err(|e| e.to_string())?;
    ensure!((merged.weight - w).abs() <= 1e-12, "weight");
    ensure!((&merged.mean - &mean).amax() <= 1e-12 * mean.amax(), "mean");
    ensure!((&merged.cov - &cov).amax() <= 1e-12 * cov.amax(), "covariance");
    Ok(())
}

pub type Property = fn(u64) -> Check;

/// Every randomized property, by name.
pub const PROPERTIES: &[(&str, Property)] = &[
    ("density normalization", density_is_consistent),
    ("mixture integral", mixture_integrates_to_weight),
    ("prediction normalization and counts", predict_invariants),
    ("update normalization and counts", update_invariants),
    ("missed detection lowers existence", missed_detection_lowers_existence),
    ("likelihood lower bound", likelihood_lower_bound),
    ("class separation", classes_are_separated),
    ("fusion validity and counts", fusion_output_is_valid),
    ("fusion idempotence", fusion_is_idempotent),
    ("covariance intersection form", fusion_is_covariance_intersection),
    ("fusion weight continuity", fusion_is_continuous_at_boundary),
    ("fusion order", fusion_order_is_irrelevant),
    ("geometric mean count", geometric_mean_count),
    ("reduction invariants", reduction_invariants),
    ("merge moments", merge_matches_moments),
];

pub fn modes_of(lib: &ClassLibrary, c: ClassId) -> Vec<ModeId> {
    lib.class(c).unwrap().modes.clone()
}
