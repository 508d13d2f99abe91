//! Motion modes, class library, birth density, sensors and clutter.
//!
//! States are laid out as `[ξ, ξ̇, η, η̇]` (position and velocity per axis).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::density::{validate_pmf, AugmentedBernoulli, ClassId, ClassModePmf, GaussianMixture, ModeId, Slot};
use crate::error::{Error, Result};
use crate::gaussian::{check_dim, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensorId(pub u32);

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionKind {
    ConstantVelocity,
    /// Coordinated turn at a known rate in rad/s.
    CoordinatedTurn {
        turn_rate: f64,
    },
    /// Explicit transition and process-noise matrices.
    Linear,
}

/// Transition matrix `F` and process covariance `Q` of a 4-dim kinematic mode.
///
/// `sigma` scales `Q` linearly. The constant-velocity `Q` is the white-noise
/// acceleration block `[[T³/3, T²/2], [T²/2, T]]` per axis and the turn `Q`
/// is `[[3T⁴/4, T³/2], [T³/2, T²]]` per axis.
pub fn mode_matrices(kind: MotionKind, sigma: f64, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("sampling interval {dt} must be positive")));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("noise intensity {sigma} must be positive")));
    }
    let t = dt;
    let (f, block) = match kind {
        MotionKind::ConstantVelocity => {
            let f = DMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0, t, 0.0, 0.0, //
                    0.0, 1.0, 0.0, 0.0, //
                    0.0, 0.0, 1.0, t, //
                    0.0, 0.0, 0.0, 1.0,
                ],
            );
            (f, [t.powi(3) / 3.0, t * t / 2.0, t])
        }
        MotionKind::CoordinatedTurn { turn_rate: w } => {
            if w == 0.0 || !w.is_finite() {
                return Err(Error::InvalidParameter("coordinated turn needs a nonzero turn rate".into()));
            }
            let (s, c) = (w * t).sin_cos();
            let f = DMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0,
                    s / w,
                    0.0,
                    (c - 1.0) / w, //
                    0.0,
                    c,
                    0.0,
                    -s, //
                    0.0,
                    (1.0 - c) / w,
                    1.0,
                    s / w, //
                    0.0,
                    s,
                    0.0,
                    c,
                ],
            );
            (f, [0.75 * t.powi(4), t.powi(3) / 2.0, t * t])
        }
        MotionKind::Linear => return Err(Error::InvalidParameter("linear modes carry explicit matrices".into())),
    };
    let mut q = DMatrix::zeros(4, 4);
    for axis in [0, 2] {
        q[(axis, axis)] = block[0];
        q[(axis, axis + 1)] = block[1];
        q[(axis + 1, axis)] = block[1];
        q[(axis + 1, axis + 1)] = block[2];
    }
    Ok((f, q * sigma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionMode {
    pub id: ModeId,
    pub kind: MotionKind,
    pub sigma: f64,
    pub transition: DMatrix<f64>,
    pub process_cov: DMatrix<f64>,
}

impl MotionMode {
    pub fn new(id: ModeId, kind: MotionKind, sigma: f64, dt: f64) -> Result<Self> {
        let (transition, process_cov) = mode_matrices(kind, sigma, dt)?;
        Ok(Self { id, kind, sigma, transition, process_cov })
    }

    /// A mode of arbitrary dimension given by its matrices.
    pub fn linear(id: ModeId, transition: DMatrix<f64>, process_cov: DMatrix<f64>) -> Result<Self> {
        let n = transition.nrows();
        check_dim(n, transition.ncols())?;
        check_dim(n, process_cov.nrows())?;
        check_dim(n, process_cov.ncols())?;
        Ok(Self { id, kind: MotionKind::Linear, sigma: 1.0, transition, process_cov })
    }

    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }

    /// `(f(x, m), ∂f/∂x)`; the motion is linear so the Jacobian is `F(m)`.
    pub fn propagate(&self, x: &DVector<f64>) -> Result<(DVector<f64>, &DMatrix<f64>)> {
        check_dim(self.dim(), x.len())?;
        Ok((&self.transition * x, &self.transition))
    }
}

pub fn propagate_state(x: &DVector<f64>, mode: &MotionMode) -> Result<(DVector<f64>, DMatrix<f64>)> {
    mode.propagate(x).map(|(mean, jac)| (mean, jac.clone()))
}

/// One class: its admissible modes and their Markov transition matrix
/// (row = previous mode, column = next mode, both in `modes` order).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub id: ClassId,
    pub modes: Vec<ModeId>,
    pub transition: DMatrix<f64>,
}

impl ClassSpec {
    fn index_of(&self, m: ModeId) -> Option<usize> {
        self.modes.iter().position(|&x| x == m)
    }

    /// `π_c(to | from)`.
    pub fn transition_prob(&self, from: ModeId, to: ModeId) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.transition[(i, j)],
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassLibrary {
    pub modes: BTreeMap<ModeId, MotionMode>,
    pub classes: Vec<ClassSpec>,
}

impl ClassLibrary {
    pub fn new(modes: Vec<MotionMode>, mut classes: Vec<ClassSpec>) -> Result<Self> {
        classes.sort_by_key(|c| c.id);
        let lib = Self { modes: modes.into_iter().map(|m| (m.id, m)).collect(), classes };
        lib.check()?;
        Ok(lib)
    }

    fn check(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        if self.classes.is_empty() {
            return invalid("class library has no classes".into());
        }
        let dims: Vec<usize> = self.modes.values().map(MotionMode::dim).collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return invalid("modes disagree on state dimension".into());
        }
        for pair in self.classes.windows(2) {
            if pair[0].id == pair[1].id {
                return invalid(format!("duplicate class {}", pair[0].id));
            }
        }
        for class in &self.classes {
            let n = class.modes.len();
            if n == 0 {
                return invalid(format!("class {} has no modes", class.id));
            }
            if class.transition.nrows() != n || class.transition.ncols() != n {
                return invalid(format!("class {} transition matrix must be {n}x{n}", class.id));
            }
            for m in &class.modes {
                if !self.modes.contains_key(m) {
                    return invalid(format!("class {} references unknown mode {m}", class.id));
                }
            }
            for (i, row) in class.transition.row_iter().enumerate() {
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return invalid(format!("class {} transition row {i} has entries outside [0, 1]", class.id));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return invalid(format!("class {} transition row {i} sums to {sum}", class.id));
                }
            }
        }
        Ok(())
    }

    pub fn class(&self, id: ClassId) -> Result<&ClassSpec> {
        self.classes.iter().find(|c| c.id == id).ok_or(Error::UnknownClass(id))
    }

    pub fn mode(&self, id: ModeId) -> Result<&MotionMode> {
        self.modes.get(&id).ok_or_else(|| Error::InvalidParameter(format!("unknown mode {id}")))
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().map(|c| c.id)
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.classes.iter().flat_map(|c| c.modes.iter().map(move |&m| (c.id, m)))
    }

    pub fn state_dim(&self) -> usize {
        self.modes.values().next().map_or(0, MotionMode::dim)
    }

    /// Check that a density's class and mode supports match this library.
    pub fn check_support(&self, d: &AugmentedBernoulli) -> Result<()> {
        let support_err = |msg: String| Err(Error::InvalidParameter(msg));
        if d.pmf.class.len() != self.classes.len() {
            return support_err("class PMF support differs from the class library".into());
        }
        for class in &self.classes {
            if !d.pmf.class.contains_key(&class.id) {
                return support_err(format!("class PMF lacks class {}", class.id));
            }
            let modes = d.pmf.mode.get(&class.id);
            let same = modes.is_some_and(|modes| {
                modes.len() == class.modes.len() && class.modes.iter().all(|m| modes.contains_key(m))
            });
            if !same {
                return support_err(format!("mode PMF support of class {} differs from its mode set", class.id));
            }
        }
        Ok(())
    }

    /// Uniform class PMF and uniform mode PMF per class.
    pub fn uniform_pmf(&self) -> ClassModePmf {
        let nc = self.classes.len() as f64;
        let mut pmf = ClassModePmf::default();
        for class in &self.classes {
            pmf.class.insert(class.id, 1.0 / nc);
            let nm = class.modes.len() as f64;
            pmf.mode.insert(class.id, class.modes.iter().map(|&m| (m, 1.0 / nm)).collect());
        }
        pmf
    }
}

/// Newborn-target density `{p_B, γ_B, β_B, s_B}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthModel {
    pub probability: f64,
    pub pmf: ClassModePmf,
    pub spdf: BTreeMap<Slot, GaussianMixture>,
}

impl BirthModel {
    pub fn new(probability: f64, pmf: ClassModePmf, spdf: BTreeMap<Slot, GaussianMixture>) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::InvalidParameter(format!("birth probability {probability} outside [0, 1]")));
        }
        validate_pmf(&pmf)?;
        let birth = Self { probability, pmf, spdf };
        birth.as_density(0.0).validate()?;
        Ok(birth)
    }

    /// Class- and mode-independent Gaussian state density.
    pub fn with_shared_state(
        probability: f64,
        pmf: ClassModePmf,
        library: &ClassLibrary,
        state: &GaussianMixture,
    ) -> Result<Self> {
        let spdf = library.slots().map(|slot| (slot, state.clone())).collect();
        Self::new(probability, pmf, spdf)
    }

    /// The birth density viewed as an augmented Bernoulli with existence `r`.
    pub fn as_density(&self, r: f64) -> AugmentedBernoulli {
        AugmentedBernoulli { r, pmf: self.pmf.clone(), spdf: self.spdf.clone() }
    }
}

/// Scalar measurement function `h(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementFunction {
    /// Euclidean range from a sensor at `position` to `(ξ, η)`.
    Range { position: [f64; 2] },
    /// `h(x) = a·x`.
    Linear { row: Vec<f64> },
    /// `h(x) = (a·x)²`.
    Quadratic { row: Vec<f64> },
}

impl MeasurementFunction {
    /// `(h(x), ∂h/∂x)`.
    pub fn evaluate(&self, sensor: SensorId, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        match self {
            Self::Range { position } => {
                if x.len() < 4 {
                    return Err(Error::DimensionMismatch { expected: 4, found: x.len() });
                }
                let dx = x[0] - position[0];
                let dy = x[2] - position[1];
                let z = dx.hypot(dy);
                if z == 0.0 {
                    return Err(Error::SingularGeometry(sensor));
                }
                let mut jac = DVector::zeros(x.len());
                jac[0] = dx / z;
                jac[2] = dy / z;
                Ok((z, jac))
            }
            Self::Linear { row } => {
                check_dim(row.len(), x.len())?;
                let a = DVector::from_column_slice(row);
                Ok((a.dot(x), a))
            }
            Self::Quadratic { row } => {
                check_dim(row.len(), x.len())?;
                let a = DVector::from_column_slice(row);
                let v = a.dot(x);
                Ok((v * v, a * (2.0 * v)))
            }
        }
    }
}

/// Floor of `ln κ(z)` inside the clutter region.
pub const MIN_LOG_INTENSITY: f64 = -700.0;

/// Poisson clutter, uniform over the interval `[low, high]` of the
/// measurement space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterModel {
    pub rate: f64,
    pub low: f64,
    pub high: f64,
}

impl ClutterModel {
    pub fn new(rate: f64, low: f64, high: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("clutter rate {rate} must be nonnegative")));
        }
        if !(high > low) {
            return Err(Error::InvalidParameter(format!("clutter region [{low}, {high}] is empty")));
        }
        Ok(Self { rate, low, high })
    }

    pub fn contains(&self, z: f64) -> bool {
        (self.low..=self.high).contains(&z)
    }

    /// `κ(z) = λ u(z)`.
    pub fn intensity(&self, z: f64) -> f64 {
        if self.contains(z) {
            self.rate / (self.high - self.low)
        } else {
            0.0
        }
    }

    /// `ln κ(z)` for use in likelihood ratios, `None` outside the region.
    ///
    /// A clutter-free model (`rate = 0`) is treated as the limit `λ → 0⁺`:
    /// the logarithm is clamped at [`MIN_LOG_INTENSITY`], which makes every
    /// measurement target-originated to machine precision while keeping the
    /// update finite.
    pub fn log_intensity(&self, z: f64) -> Option<f64> {
        self.contains(z).then(|| self.intensity(z).ln().max(MIN_LOG_INTENSITY))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.rate == 0.0 {
            return Vec::new();
        }
        let count = Poisson::new(self.rate).expect("positive finite rate").sample(rng) as usize;
        (0..count).map(|_| self.low + (self.high - self.low) * rng.random::<f64>()).collect()
    }
}

/// Detection probability per class, with a default for unlisted classes.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionProfile {
    pub default: f64,
    pub by_class: BTreeMap<ClassId, f64>,
}

impl DetectionProfile {
    pub fn uniform(p: f64) -> Self {
        Self { default: p, by_class: BTreeMap::new() }
    }

    pub fn prob(&self, c: ClassId) -> f64 {
        self.by_class.get(&c).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub id: SensorId,
    pub function: MeasurementFunction,
    pub noise_var: f64,
    pub detection: DetectionProfile,
    pub clutter: ClutterModel,
}

impl SensorModel {
    pub fn new(
        id: SensorId,
        function: MeasurementFunction,
        noise_var: f64,
        detection: DetectionProfile,
        clutter: ClutterModel,
    ) -> Result<Self> {
        if !(noise_var > 0.0) {
            return Err(Error::InvalidParameter(format!("sensor {id}: noise variance must be positive")));
        }
        let probs = std::iter::once(detection.default).chain(detection.by_class.values().copied());
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("sensor {id}: detection probability {p} outside [0, 1]")));
            }
        }
        Ok(Self { id, function, noise_var, detection, clutter })
    }

    /// Range sensor at `position` in meters.
    pub fn range(
        id: SensorId,
        position: [f64; 2],
        noise_var: f64,
        detection: DetectionProfile,
        clutter: ClutterModel,
    ) -> Result<Self> {
        Self::new(id, MeasurementFunction::Range { position }, noise_var, detection, clutter)
    }

    pub fn measure(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.function.evaluate(self.id, x)
    }

    pub fn detection_prob(&self, c: ClassId) -> f64 {
        self.detection.prob(c)
    }
}

/// Predicted range and its Jacobian for a range sensor.
pub fn range_measure(sensor: &SensorModel, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    sensor.measure(x)
}

pub fn sample_clutter<R: Rng + ?Sized>(sensor: &SensorModel, rng: &mut R) -> Vec<f64> {
    sensor.clutter.sample(rng)
}

/// Symmetric copy of `F P Fᵀ + Q`.
pub(crate) fn propagate_cov(f: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = f * p * f.transpose() + q;
    symmetrize(&mut out);
    out
}
