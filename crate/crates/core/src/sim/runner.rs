use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{generate_measurements, generate_truth, ospa, TruthRecord};
use crate::config::{ModeKind, ScenarioConfig, Topology};
use crate::density::{AugmentedBernoulli, ClassId, ClassModePmf, GaussianMixture, ModeId};
use crate::error::{Error, Result};
use crate::filter::{centralized_update, extract, predict, single_sensor_update, Estimate, Scan};
use crate::fusion::{consensus, NetworkGraph, NodeId};
use crate::models::{
    BirthModel, ClassLibrary, ClassSpec, ClutterModel, DetectionProfile, MotionKind, MotionMode, SensorId, SensorModel,
};
use crate::reduce::reduce_density;

/// Model objects built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub library: ClassLibrary,
    pub birth: BirthModel,
    pub sensors: Vec<SensorModel>,
    pub graph: NetworkGraph,
}

impl Scenario {
    pub fn from_config(config: &ScenarioConfig) -> Result<Self> {
        config.validate().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let dt = config.scenario.sampling_interval_s;
        let modes = config
            .modes
            .iter()
            .map(|m| {
                let kind = match m.kind {
                    ModeKind::Cv => MotionKind::ConstantVelocity,
                    ModeKind::Ct => MotionKind::CoordinatedTurn { turn_rate: m.turn_rate_rad_s.unwrap_or_default() },
                };
                MotionMode::new(ModeId(m.id), kind, m.sigma_m_s2, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        let classes = config
            .classes
            .iter()
            .map(|c| {
                let n = c.modes.len();
                ClassSpec {
                    id: ClassId(c.id),
                    modes: c.modes.iter().map(|&m| ModeId(m)).collect(),
                    transition: DMatrix::from_fn(n, n, |i, j| c.transition[i][j]),
                }
            })
            .collect();
        let library = ClassLibrary::new(modes, classes)?;

        let b = &config.birth;
        let mut pmf = ClassModePmf::default();
        for (i, c) in config.classes.iter().enumerate() {
            pmf.class.insert(ClassId(c.id), b.class_pmf[i]);
            let modes = c.modes.iter().zip(&b.mode_pmf[i]).map(|(&m, &p)| (ModeId(m), p)).collect();
            pmf.mode.insert(ClassId(c.id), modes);
        }
        let state = GaussianMixture::single(
            DVector::from_column_slice(&b.mean),
            DMatrix::from_diagonal(&DVector::from_column_slice(&b.cov_diag)),
        );
        let birth = BirthModel::with_shared_state(b.probability, pmf, &library, &state)?;

        let s = &config.sensors;
        let clutter = ClutterModel::new(s.clutter_rate, s.clutter_range_m[0], s.clutter_range_m[1])?;
        let detection = DetectionProfile {
            default: s.detection_prob,
            by_class: s
                .detection_prob_by_class
                .iter()
                .map(|(k, &p)| (ClassId(k.parse().expect("validated class key")), p))
                .collect(),
        };
        let sensors = s
            .positions_m
            .iter()
            .enumerate()
            .map(|(i, &pos)| SensorModel::range(sensor_id(i), pos, s.noise_var_m2, detection.clone(), clutter))
            .collect::<Result<Vec<_>>>()?;

        let graph = match config.network.topology {
            Topology::Complete => NetworkGraph::complete((0..sensors.len()).map(sensor_id)),
            Topology::Geometric => {
                let positions: Vec<_> = s.positions_m.iter().enumerate().map(|(i, &p)| (sensor_id(i), p)).collect();
                NetworkGraph::geometric(&positions, config.network.radius_m)
            }
        }
        .with_rule(config.network.weights);

        Ok(Self { config: config.clone(), library, birth, sensors, graph })
    }

    /// Density before the first step: no target, birth conditionals.
    pub fn initial_density(&self) -> AugmentedBernoulli {
        self.birth.as_density(0.0)
    }

    /// Prediction followed by reduction.
    fn predict(&self, prior: &AugmentedBernoulli) -> Result<AugmentedBernoulli> {
        let mut pred = predict(prior, &self.birth, self.config.filter.survival_probability, &self.library)?;
        reduce_density(&mut pred, &self.config.reduction)?;
        Ok(pred)
    }

    fn extract(&self, d: &AugmentedBernoulli) -> Option<Estimate> {
        extract(d, self.config.filter.existence_threshold, self.config.filter.estimator)
    }

    fn frame(&self, truth: &TruthRecord, d: &AugmentedBernoulli, est: Option<&Estimate>) -> MetricsFrame {
        let estimated: Vec<[f64; 2]> = est.map(|e| [e.state[0], e.state[2]]).into_iter().collect();
        let actual: Vec<[f64; 2]> = truth.position().into_iter().collect();
        MetricsFrame {
            k: truth.k,
            ospa: ospa(&estimated, &actual, self.config.ospa.order, self.config.ospa.cutoff_m),
            existence: d.r,
            class_pmf: d.pmf.class.clone(),
            mode_pmf: d.pmf.mode.clone(),
            est_class: est.map(|e| e.class),
            est_mode: est.map(|e| e.mode),
        }
    }

    /// Last step at which the scheduled target exists.
    pub fn decision_step(&self) -> Option<usize> {
        self.config.scenario.schedule.last().map(|s| s.last_step)
    }

    /// Steps over which the scheduled target exists.
    pub fn existence_window(&self) -> Option<(usize, usize)> {
        let sched = &self.config.scenario.schedule;
        Some((sched.first()?.first_step, sched.last()?.last_step))
    }
}

fn sensor_id(index: usize) -> SensorId {
    SensorId(index as u32 + 1)
}

/// Per-step filter output, or its mean over Monte-Carlo trials.
///
/// For averaged frames `est_class` and `est_mode` hold the most frequent
/// decision (absent estimates count as a decision of their own; ties go to
/// the lowest id).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFrame {
    pub k: usize,
    pub ospa: f64,
    pub existence: f64,
    pub class_pmf: BTreeMap<ClassId, f64>,
    pub mode_pmf: BTreeMap<ClassId, BTreeMap<ModeId, f64>>,
    pub est_class: Option<ClassId>,
    pub est_mode: Option<ModeId>,
}

fn modal<T: Ord + Copy>(values: impl Iterator<Item = Option<T>>) -> Option<T> {
    let mut counts: BTreeMap<Option<T>, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut best: Option<(Option<T>, usize)> = None;
    for (v, n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((v, n));
        }
    }
    best.and_then(|(v, _)| v)
}

/// Step-wise mean of equally long frame sequences.
fn average_frames(runs: &[&[MetricsFrame]]) -> Vec<MetricsFrame> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let n = runs.len() as f64;
    (0..first.len())
        .map(|t| {
            let mut acc = first[t].clone();
            for run in &runs[1..] {
                let f = &run[t];
                acc.ospa += f.ospa;
                acc.existence += f.existence;
                for (c, p) in &f.class_pmf {
                    *acc.class_pmf.entry(*c).or_default() += p;
                }
                for (c, modes) in &f.mode_pmf {
                    let entry = acc.mode_pmf.entry(*c).or_default();
                    for (m, p) in modes {
                        *entry.entry(*m).or_default() += p;
                    }
                }
            }
            acc.ospa /= n;
            acc.existence /= n;
            acc.class_pmf.values_mut().for_each(|p| *p /= n);
            acc.mode_pmf.values_mut().flat_map(|m| m.values_mut()).for_each(|p| *p /= n);
            acc.est_class = modal(runs.iter().map(|r| r[t].est_class));
            acc.est_mode = modal(runs.iter().map(|r| r[t].est_mode));
            acc
        })
        .collect()
}

/// Fusion-center filter processing every sensor's scan each step.
#[derive(Debug, Clone)]
pub struct CentralizedTracker<'a> {
    scenario: &'a Scenario,
    density: AugmentedBernoulli,
}

impl<'a> CentralizedTracker<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Self { scenario, density: scenario.initial_density() }
    }

    pub fn density(&self) -> &AugmentedBernoulli {
        &self.density
    }

    pub fn step(&mut self, scans: &BTreeMap<SensorId, Scan>) -> Result<Option<Estimate>> {
        let sc = self.scenario;
        let pred = sc.predict(&self.density)?;
        let mut post = centralized_update(&pred, scans, &sc.sensors, &sc.library, Some(&sc.config.reduction))?;
        reduce_density(&mut post, &sc.config.reduction)?;
        self.density = post;
        Ok(sc.extract(&self.density))
    }
}

/// Network of local filters that exchange densities by GCI consensus.
#[derive(Debug, Clone)]
pub struct DistributedTracker<'a> {
    scenario: &'a Scenario,
    densities: BTreeMap<NodeId, AugmentedBernoulli>,
}

impl<'a> DistributedTracker<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let densities = scenario.graph.nodes().map(|n| (n, scenario.initial_density())).collect();
        Self { scenario, densities }
    }

    pub fn densities(&self) -> &BTreeMap<NodeId, AugmentedBernoulli> {
        &self.densities
    }

    /// Local prediction and update with the node's own scan (none if the
    /// node is missing from `scans`), then the configured number of
    /// consensus rounds.
    pub fn step(&mut self, scans: &BTreeMap<SensorId, Scan>) -> Result<BTreeMap<NodeId, Option<Estimate>>> {
        let sc = self.scenario;
        let mut local = BTreeMap::new();
        for (&node, prior) in &self.densities {
            let sensor = sc.sensors.iter().find(|s| s.id == node).ok_or(Error::UnknownSensor(node))?;
            let pred = sc.predict(prior)?;
            let scan = scans.get(&node).map_or(&[][..], Vec::as_slice);
            let mut post = single_sensor_update(&pred, scan, sensor, &sc.library, Some(&sc.config.reduction))?;
            reduce_density(&mut post, &sc.config.reduction)?;
            local.insert(node, post);
        }
        self.densities = consensus(&local, &sc.graph, sc.config.network.consensus_steps, Some(&sc.config.reduction))?;
        Ok(self.densities.iter().map(|(&n, d)| (n, sc.extract(d))).collect())
    }
}

/// One centralized trial.
pub fn run_centralized(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Result<Vec<MetricsFrame>> {
    let truth = generate_truth(scenario, rng)?;
    let scans = generate_measurements(&truth, &scenario.sensors, rng);
    let mut tracker = CentralizedTracker::new(scenario);
    truth
        .iter()
        .zip(&scans)
        .map(|(record, step_scans)| {
            let est = tracker.step(step_scans)?;
            Ok(scenario.frame(record, tracker.density(), est.as_ref()))
        })
        .collect()
}

/// Per-node metrics of one distributed trial, plus their node average.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedRun {
    pub nodes: BTreeMap<NodeId, Vec<MetricsFrame>>,
    pub average: Vec<MetricsFrame>,
}

/// One distributed trial.
pub fn run_distributed(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Result<DistributedRun> {
    let truth = generate_truth(scenario, rng)?;
    let scans = generate_measurements(&truth, &scenario.sensors, rng);
    let mut tracker = DistributedTracker::new(scenario);
    let mut nodes: BTreeMap<NodeId, Vec<MetricsFrame>> = BTreeMap::new();
    for (record, step_scans) in truth.iter().zip(&scans) {
        let estimates = tracker.step(step_scans)?;
        for (node, est) in estimates {
            let frame = scenario.frame(record, &tracker.densities()[&node], est.as_ref());
            nodes.entry(node).or_default().push(frame);
        }
    }
    let runs: Vec<&[MetricsFrame]> = nodes.values().map(Vec::as_slice).collect();
    let average = average_frames(&runs);
    Ok(DistributedRun { nodes, average })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Centralized,
    Distributed,
}

/// Headline numbers of a Monte-Carlo experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    /// Mean OSPA over the steps at which the target exists.
    pub mean_ospa: f64,
    /// Fraction of runs (trial × node for distributed runs) whose class
    /// estimate at the last existence step is the true class.
    pub class_decision_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub kind: FilterKind,
    pub trials: usize,
    pub base_seed: u64,
    /// Centralized: mean over trials. Distributed: mean over trials of the
    /// node average.
    pub average: Vec<MetricsFrame>,
    /// Distributed only: per-node means over trials.
    pub nodes: BTreeMap<NodeId, Vec<MetricsFrame>>,
    pub summary: Summary,
}

/// RNG of trial `index` in an experiment seeded with `base_seed`.
pub fn trial_rng(base_seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(index as u64))
}

/// Run `trials` independent trials in parallel (seeds `base_seed + i`) and
/// average their metrics step by step in trial order.
pub fn monte_carlo(scenario: &Scenario, kind: FilterKind, trials: usize, base_seed: u64) -> Result<MonteCarloResult> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let runs: Vec<DistributedRun> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(base_seed, i);
            match kind {
                FilterKind::Centralized => run_centralized(scenario, &mut rng)
                    .map(|frames| DistributedRun { nodes: BTreeMap::new(), average: frames }),
                FilterKind::Distributed => run_distributed(scenario, &mut rng),
            }
        })
        .collect::<Result<_>>()?;

    let averages: Vec<&[MetricsFrame]> = runs.iter().map(|r| r.average.as_slice()).collect();
    let average = average_frames(&averages);
    let mut nodes = BTreeMap::new();
    if let Some(first) = runs.first() {
        for &node in first.nodes.keys() {
            let per_trial: Vec<&[MetricsFrame]> = runs.iter().map(|r| r.nodes[&node].as_slice()).collect();
            nodes.insert(node, average_frames(&per_trial));
        }
    }

    let mean_ospa = match scenario.existence_window() {
        Some((a, b)) => {
            let window: Vec<f64> = average.iter().filter(|f| (a..=b).contains(&f.k)).map(|f| f.ospa).collect();
            window.iter().sum::<f64>() / window.len().max(1) as f64
        }
        None => f64::NAN,
    };
    let truth_class = ClassId(scenario.config.scenario.true_class);
    let decisions: Vec<Option<ClassId>> = match scenario.decision_step() {
        Some(k) => runs
            .iter()
            .flat_map(|r| {
                let seqs: Vec<&Vec<MetricsFrame>> = match kind {
                    FilterKind::Centralized => vec![&r.average],
                    FilterKind::Distributed => r.nodes.values().collect(),
                };
                seqs.into_iter().map(move |s| s[k - 1].est_class)
            })
            .collect(),
        None => Vec::new(),
    };
    let class_decision_rate = if decisions.is_empty() {
        f64::NAN
    } else {
        decisions.iter().filter(|&&c| c == Some(truth_class)).count() as f64 / decisions.len() as f64
    };

    Ok(MonteCarloResult {
        kind,
        trials,
        base_seed,
        average,
        nodes,
        summary: Summary { mean_ospa, class_decision_rate },
    })
}
