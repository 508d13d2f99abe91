//! Gaussian-mixture reduction: prune, merge, cap.

use nalgebra::allocator::Allocator;
use nalgebra::{Const, DMatrix, DVector, DefaultAllocator, Dim, Dyn, OMatrix, OVector};
use serde::{Deserialize, Serialize};

use crate::density::{AugmentedBernoulli, GaussianComponent, GaussianMixture};
use crate::error::{Error, Result};
use crate::gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionPolicy {
    /// Components whose normalized weight falls below this are dropped.
    pub prune_threshold: f64,
    /// Squared Mahalanobis radius for merging.
    pub merge_threshold: f64,
    pub max_components: usize,
}

impl Default for ReductionPolicy {
    fn default() -> Self {
        Self { prune_threshold: 1e-15, merge_threshold: 20.0, max_components: 6 }
    }
}

impl ReductionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_threshold >= 0.0) {
            return Err(Error::InvalidParameter("prune threshold must be nonnegative".into()));
        }
        if !(self.merge_threshold > 0.0) {
            return Err(Error::InvalidParameter("merge threshold must be positive".into()));
        }
        if self.max_components == 0 {
            return Err(Error::InvalidParameter("max components must be at least 1".into()));
        }
        Ok(())
    }
}

/// Reduce a mixture, preserving its total weight.
///
/// Pruning uses normalized weights. Merging repeatedly takes the heaviest
/// remaining component as seed and absorbs every component whose mean lies
/// within `merge_threshold` (squared Mahalanobis distance in the seed's
/// metric); passes repeat until one merges nothing, so the result is a fixed
/// point of the procedure. Finally only the `max_components` heaviest are
/// kept and weights are rescaled to the input total.
pub fn reduce(gm: &GaussianMixture, policy: &ReductionPolicy) -> Result<GaussianMixture> {
    let Some(dim) = gm.dim() else {
        return Ok(GaussianMixture::empty());
    };
    match dim {
        1 => reduce_dynamic(gm, policy, Const::<1>),
        2 => reduce_dynamic(gm, policy, Const::<2>),
        4 => reduce_dynamic(gm, policy, Const::<4>),
        n => reduce_dynamic(gm, policy, Dyn(n)),
    }
}

fn reduce_dynamic<D: Dim>(gm: &GaussianMixture, policy: &ReductionPolicy, dim: D) -> Result<GaussianMixture>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    let comps = gm.iter().map(|c| SizedComponent::from_component(c, dim)).collect();
    let reduced = reduce_sized(comps, policy)?;
    Ok(GaussianMixture::new(reduced.into_iter().map(SizedComponent::into_component).collect()))
}

/// [`reduce`] on components held in storage of dimension `D`.
pub(crate) fn reduce_sized<D: Dim>(
    comps: Vec<SizedComponent<D>>,
    policy: &ReductionPolicy,
) -> Result<Vec<SizedComponent<D>>>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    if comps.is_empty() || !(total > 0.0) {
        return Ok(comps);
    }
    if !comps.iter().any(|c| c.weight / total >= policy.prune_threshold) {
        log::warn!("mixture reduction pruned every component; collapsing to moments");
        return Ok(vec![merge_sized(comps)]);
    }
    let mut current: Vec<SizedComponent<D>> =
        comps.into_iter().filter(|c| c.weight / total >= policy.prune_threshold).collect();
    loop {
        let (merged, merges) = merge_pass(current, policy.merge_threshold)?;
        current = merged;
        if merges == 0 {
            break;
        }
    }
    // merge_pass emits components heaviest-seed first; a stable sort keeps
    // that order among equal weights.
    current.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    current.truncate(policy.max_components);
    let kept_total: f64 = current.iter().map(|c| c.weight).sum();
    if kept_total > 0.0 && kept_total != total {
        let factor = total / kept_total;
        current.iter_mut().for_each(|c| c.weight *= factor);
    }
    Ok(current)
}

/// Apply [`reduce`] to every slot of a density.
pub fn reduce_density(d: &mut AugmentedBernoulli, policy: &ReductionPolicy) -> Result<()> {
    for gm in d.spdf.values_mut() {
        if gm.len() > 1 {
            *gm = reduce(gm, policy)?;
        }
    }
    Ok(())
}

/// Component in storage of dimension `D`, fixed-size for small states.
pub(crate) struct SizedComponent<D: Dim>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    pub weight: f64,
    pub mean: OVector<f64, D>,
    pub cov: OMatrix<f64, D, D>,
}

impl<D: Dim> SizedComponent<D>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    pub fn from_component(c: &GaussianComponent, dim: D) -> Self {
        Self { weight: c.weight, mean: gaussian::to_sized_vec(&c.mean, dim), cov: gaussian::to_sized(&c.cov, dim) }
    }

    pub fn into_component(self) -> GaussianComponent {
        GaussianComponent::new(
            self.weight,
            DVector::from_iterator(self.mean.len(), self.mean.iter().copied()),
            gaussian::to_dynamic(&self.cov),
        )
    }
}

fn merge_pass<D: Dim>(mut pool: Vec<SizedComponent<D>>, threshold: f64) -> Result<(Vec<SizedComponent<D>>, usize)>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    let mut out = Vec::with_capacity(pool.len());
    let mut merges = 0;
    while !pool.is_empty() {
        let seed_idx = heaviest_index(pool.iter().map(|c| c.weight));
        let chol = gaussian::cholesky_sized(&pool[seed_idx].cov)?;
        let seed_mean = pool[seed_idx].mean.clone();
        let mut group = Vec::new();
        let mut rest = Vec::with_capacity(pool.len());
        for (i, c) in pool.into_iter().enumerate() {
            let d = &c.mean - &seed_mean;
            if i == seed_idx || d.dot(&chol.solve(&d)) <= threshold {
                group.push(c);
            } else {
                rest.push(c);
            }
        }
        merges += group.len() - 1;
        out.push(merge_sized(group));
        pool = rest;
    }
    Ok((out, merges))
}

fn merge_sized<D: Dim>(mut group: Vec<SizedComponent<D>>) -> SizedComponent<D>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    let weight: f64 = group.iter().map(|c| c.weight).sum();
    if group.len() == 1 || !(weight > 0.0) {
        return group.swap_remove(0);
    }
    let mut mean = group[0].mean.clone() * 0.0;
    for c in &group {
        mean += &c.mean * c.weight;
    }
    mean /= weight;
    let mut cov = group[0].cov.clone() * 0.0;
    for c in &group {
        let d = &c.mean - &mean;
        cov += &c.cov * c.weight;
        cov.ger(c.weight, &d, &d, 1.0);
    }
    cov /= weight;
    let cov = (&cov + cov.transpose()) * 0.5;
    SizedComponent { weight, mean, cov }
}

fn heaviest_index(weights: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, w) in weights.enumerate() {
        if w > best.1 {
            best = (i, w);
        }
    }
    best.0
}

/// Moment-matched merge of a group of components.
pub fn merge_components(group: &[GaussianComponent]) -> GaussianComponent {
    if group.len() == 1 {
        return group[0].clone();
    }
    let n = group[0].dim();
    let weight: f64 = group.iter().map(|c| c.weight).sum();
    if !(weight > 0.0) {
        return group[0].clone();
    }
    let mut mean = DVector::zeros(n);
    for c in group {
        mean += &c.mean * c.weight;
    }
    mean /= weight;
    let mut cov = DMatrix::zeros(n, n);
    for c in group {
        let d = &c.mean - &mean;
        cov += (&c.cov + &d * d.transpose()) * c.weight;
    }
    cov /= weight;
    gaussian::symmetrize(&mut cov);
    GaussianComponent::new(weight, mean, cov)
}
