//! The augmented Bernoulli density `{r, γ, β, s}` and its parts.
//!
//! A target exists with probability `r`. Given existence, its class follows
//! the class PMF `γ(c)`, its kinematic mode follows the class-conditioned mode
//! PMF `β(m|c)` and its kinematic state follows the class&mode-conditioned
//! density `s(x|c,m)`, stored as a [`GaussianMixture`] per `(c, m)` slot.
//!
//! Slots whose mode probability is zero hold an empty placeholder mixture and
//! are skipped by every recursion.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, check_dim};

/// Tolerance on class/mode PMF normalization.
pub const PMF_TOLERANCE: f64 = 1e-12;
/// Tolerance on normalized mixture weight sums.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;
/// Relative tolerance on covariance symmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// Key of a class&mode-conditioned state density.
pub type Slot = (ClassId, ModeId);

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { weight, mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Self {
        Self { components }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// A single unit-weight Gaussian.
    pub fn single(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self::new(vec![GaussianComponent::new(1.0, mean, cov)])
    }

    pub fn single_weighted(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self::new(vec![GaussianComponent::new(weight, mean, cov)])
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.components.first().map(GaussianComponent::dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GaussianComponent> {
        self.components.iter()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.components {
            c.weight *= factor;
        }
    }

    /// Rescale weights to sum to one; a zero-weight mixture is left as is.
    pub fn normalize(&mut self) {
        let total = self.total_weight();
        if total > 0.0 {
            self.scale(1.0 / total);
        }
    }

    /// Mixture density `Σ α_j N(x; μ_j, P_j)`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.components {
            check_dim(c.dim(), x.len())?;
            total += c.weight * gaussian::normal_pdf(x, &c.mean, &c.cov)?;
        }
        Ok(total)
    }

    /// Moment-matched `(total weight, mean, covariance)`.
    pub fn moments(&self) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let first = self.components.first().ok_or(Error::EmptyMixture)?;
        let n = first.dim();
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("mixture moments need positive total weight".into()));
        }
        let mut mean = DVector::zeros(n);
        for c in &self.components {
            check_dim(n, c.dim())?;
            mean += &c.mean * c.weight;
        }
        mean /= total;
        let mut cov = DMatrix::zeros(n, n);
        for c in &self.components {
            let d = &c.mean - &mean;
            cov += (&c.cov + &d * d.transpose()) * c.weight;
        }
        cov /= total;
        gaussian::symmetrize(&mut cov);
        Ok((total, mean, cov))
    }

    /// The component with the largest weight (lowest index on ties).
    pub fn heaviest(&self) -> Option<&GaussianComponent> {
        let mut best: Option<&GaussianComponent> = None;
        for c in &self.components {
            if best.is_none_or(|b| c.weight > b.weight) {
                best = Some(c);
            }
        }
        best
    }
}

/// `γ(c)` and `β(m|c)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassModePmf {
    pub class: BTreeMap<ClassId, f64>,
    pub mode: BTreeMap<ClassId, BTreeMap<ModeId, f64>>,
}

impl ClassModePmf {
    pub fn class_prob(&self, c: ClassId) -> f64 {
        self.class.get(&c).copied().unwrap_or(0.0)
    }

    pub fn mode_prob(&self, c: ClassId, m: ModeId) -> f64 {
        self.mode.get(&c).and_then(|modes| modes.get(&m)).copied().unwrap_or(0.0)
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.class.keys().copied()
    }
}

/// The augmented Bernoulli density `f = {r, γ, β, s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBernoulli {
    pub r: f64,
    pub pmf: ClassModePmf,
    pub spdf: BTreeMap<Slot, GaussianMixture>,
}

impl AugmentedBernoulli {
    pub fn slot(&self, c: ClassId, m: ModeId) -> Option<&GaussianMixture> {
        self.spdf.get(&(c, m))
    }

    pub fn state_dim(&self) -> Option<usize> {
        self.spdf.values().find_map(GaussianMixture::dim)
    }

    /// `Σ_c γ(c) Σ_m β(m|c) ∫ s(x|c,m) dx`; one for a valid density.
    pub fn total_mass(&self) -> f64 {
        let mut total = 0.0;
        for (&c, modes) in &self.pmf.mode {
            let gamma = self.pmf.class_prob(c);
            for (&m, &beta) in modes {
                if beta > 0.0 {
                    let mass = self.slot(c, m).map_or(0.0, GaussianMixture::total_weight);
                    total += gamma * beta * mass;
                }
            }
        }
        total
    }

    pub fn component_count(&self) -> usize {
        self.spdf.values().map(GaussianMixture::len).sum()
    }

    /// Check every structural invariant, reporting the first violation.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        validate(self)
    }
}

/// First violated invariant of a density, with its location.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl Violation {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self { location: location.into(), message: message.into() }
    }
}

pub fn validate(d: &AugmentedBernoulli) -> std::result::Result<(), Violation> {
    if !(0.0..=1.0).contains(&d.r) {
        return Err(Violation::new("r", format!("existence probability {} outside [0, 1]", d.r)));
    }
    validate_pmf(&d.pmf)?;

    let mut dim = None;
    for (&(c, m), gm) in &d.spdf {
        let loc = format!("s({c},{m})");
        let beta = d.pmf.mode_prob(c, m);
        if beta > 0.0 && gm.is_empty() {
            return Err(Violation::new(loc, "empty mixture for a mode with positive probability"));
        }
        if !d.pmf.mode.get(&c).is_some_and(|modes| modes.contains_key(&m)) {
            return Err(Violation::new(loc, "slot outside the mode PMF support"));
        }
        validate_mixture(gm, &loc, &mut dim)?;
        if beta > 0.0 {
            let total = gm.total_weight();
            if (total - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(Violation::new(loc, format!("weight sum = {total}")));
            }
        }
    }
    for (&c, modes) in &d.pmf.mode {
        for (&m, &beta) in modes {
            if beta > 0.0 && !d.spdf.contains_key(&(c, m)) {
                return Err(Violation::new(format!("s({c},{m})"), "missing state density"));
            }
        }
    }
    Ok(())
}

pub fn validate_pmf(pmf: &ClassModePmf) -> std::result::Result<(), Violation> {
    let mut sum = 0.0;
    for (&c, &p) in &pmf.class {
        if !(0.0..=1.0).contains(&p) {
            return Err(Violation::new(format!("gamma({c})"), format!("probability {p} outside [0, 1]")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PMF_TOLERANCE {
        return Err(Violation::new("gamma", format!("classPmf sum = {sum}")));
    }
    for &c in pmf.class.keys() {
        let modes = pmf.mode.get(&c).ok_or_else(|| Violation::new(format!("beta(.|{c})"), "missing mode PMF"))?;
        let mut sum = 0.0;
        for (&m, &p) in modes {
            if !(0.0..=1.0).contains(&p) {
                return Err(Violation::new(format!("beta({m}|{c})"), format!("probability {p} outside [0, 1]")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PMF_TOLERANCE {
            return Err(Violation::new(format!("beta(.|{c})"), format!("modePmf sum = {sum}")));
        }
    }
    if let Some(c) = pmf.mode.keys().find(|c| !pmf.class.contains_key(c)) {
        return Err(Violation::new(format!("beta(.|{c})"), "mode PMF for a class without class probability"));
    }
    Ok(())
}

fn validate_mixture(gm: &GaussianMixture, loc: &str, dim: &mut Option<usize>) -> std::result::Result<(), Violation> {
    for (j, comp) in gm.iter().enumerate() {
        let loc = format!("{loc}[{j}]");
        let n = comp.dim();
        if *dim.get_or_insert(n) != n || comp.cov.nrows() != n || comp.cov.ncols() != n {
            return Err(Violation::new(loc, "state dimension mismatch"));
        }
        if !(comp.weight >= 0.0) || !comp.weight.is_finite() {
            return Err(Violation::new(loc, format!("negative or non-finite weight {}", comp.weight)));
        }
        if comp.mean.iter().any(|v| !v.is_finite()) {
            return Err(Violation::new(loc, "non-finite mean"));
        }
        if gaussian::relative_asymmetry(&comp.cov) > SYMMETRY_TOLERANCE {
            return Err(Violation::new(loc, "asymmetric covariance"));
        }
        if !(gaussian::min_eigenvalue(&comp.cov) > 0.0) {
            return Err(Violation::new(loc, "non-PD covariance"));
        }
    }
    Ok(())
}
