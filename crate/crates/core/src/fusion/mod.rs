//! Generalized covariance intersection (GCI) of augmented Bernoulli
//! densities and the consensus protocol built on it.

mod network;
pub mod wire;

use std::collections::BTreeMap;

use nalgebra::allocator::Allocator;
use nalgebra::{Const, DefaultAllocator, Dim, Dyn, OMatrix, OVector};

use crate::density::{AugmentedBernoulli, ClassModePmf, GaussianMixture};
use crate::error::{Error, Result};
use crate::gaussian::{self, logsumexp, LN_2PI};
use crate::reduce::{reduce_sized, ReductionPolicy, SizedComponent};

pub use network::{consensus, fuse_weighted, metropolis_weights, uniform_weights, NetworkGraph, NodeId, WeightRule};

/// Normalized fusion weights over a set of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights(BTreeMap<NodeId, f64>);

impl FusionWeights {
    pub fn new(weights: BTreeMap<NodeId, f64>) -> Result<Self> {
        let single = weights.len() == 1;
        if weights.values().any(|&w| !(w > 0.0 && (w < 1.0 || single))) {
            return Err(Error::InvalidParameter("fusion weights must lie in (0, 1)".into()));
        }
        let sum: f64 = weights.values().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("fusion weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let nodes: Vec<NodeId> = nodes.into_iter().collect();
        let w = 1.0 / nodes.len() as f64;
        Self(nodes.into_iter().map(|n| (n, w)).collect())
    }

    pub fn get(&self, node: NodeId) -> Option<f64> {
        self.0.get(&node).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.0.iter().map(|(&n, &w)| (n, w))
    }
}

fn check_weight(omega: f64) -> Result<()> {
    if omega > 0.0 && omega < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("fusion weight {omega} outside (0, 1)")))
    }
}

/// A component in information form, cached for pairwise fusion.
struct InfoComponent<D: Dim>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    log_weight: f64,
    mean: OVector<f64, D>,
    info: OMatrix<f64, D, D>,
    info_mean: OVector<f64, D>,
    log_det: f64,
}

fn info_form<D: Dim>(gm: &GaussianMixture, dim: D) -> Result<Vec<InfoComponent<D>>>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    gm.iter()
        .map(|comp| {
            let chol = gaussian::cholesky_sized(&gaussian::to_sized(&comp.cov, dim))?;
            let inv = chol.inverse();
            let info = (&inv + inv.transpose()) * 0.5;
            let mean = gaussian::to_sized_vec(&comp.mean, dim);
            let info_mean = &info * &mean;
            Ok(InfoComponent {
                log_weight: comp.weight.ln(),
                log_det: gaussian::log_det_sized(&chol),
                mean,
                info,
                info_mean,
            })
        })
        .collect()
}

/// `ln ε(ω, P) = ½ [ln det(2πP/ω) − ω ln det(2πP)]`.
fn log_epsilon(omega: f64, dim: usize, log_det_p: f64) -> f64 {
    let d = dim as f64;
    0.5 * ((d * (LN_2PI - omega.ln()) + log_det_p) - omega * (d * LN_2PI + log_det_p))
}

/// Run `$body` with `$dim` bound to the storage dimension for `$n`:
/// fixed-size for the small state spaces, dynamic otherwise.
macro_rules! with_dim {
    ($n:expr, $dim:ident => $body:expr) => {
        match $n {
            1 => {
                let $dim = Const::<1>;
                $body
            }
            2 => {
                let $dim = Const::<2>;
                $body
            }
            4 => {
                let $dim = Const::<4>;
                $body
            }
            n => {
                let $dim = Dyn(n);
                $body
            }
        }
    };
}

/// Components of the GM approximation of `a^ω b^(1−ω)` with log weights,
/// in `a`-major order.
fn product_terms<D: Dim>(
    a: &GaussianMixture,
    b: &GaussianMixture,
    omega: f64,
    dim: D,
) -> Result<Vec<(f64, SizedComponent<D>)>>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    let rest = 1.0 - omega;
    let ia = info_form(a, dim)?;
    let ib = info_form(b, dim)?;
    let n = dim.value();
    let d = n as f64;
    let (ln_omega, ln_rest) = (omega.ln(), rest.ln());
    let mut out = Vec::with_capacity(ia.len() * ib.len());
    for ca in &ia {
        let eps_a = log_epsilon(omega, n, ca.log_det);
        for cb in &ib {
            let log_alpha = omega * ca.log_weight + rest * cb.log_weight;
            if log_alpha == f64::NEG_INFINITY {
                continue;
            }
            let fused_info = &ca.info * omega + &cb.info * rest;
            let chol = gaussian::cholesky_sized(&fused_info)?;
            let inv = chol.inverse();
            let cov = (&inv + inv.transpose()) * 0.5;
            let mean = &cov * (&ca.info_mean * omega + &cb.info_mean * rest);

            // The overlap factor N(μa − μb; 0, Pa/ω + Pb/(1−ω)) evaluated
            // through A + B = A (A⁻¹ + B⁻¹) B with A⁻¹ + B⁻¹ = fused_info.
            let diff = &ca.mean - &cb.mean;
            let ua = &ca.info * &diff * omega;
            let ub = &cb.info * &diff * rest;
            let quad = ua.dot(&(&cov * ub));
            let log_det_spread = ca.log_det - d * ln_omega + cb.log_det - d * ln_rest + gaussian::log_det_sized(&chol);
            let log_overlap = -0.5 * (d * LN_2PI + log_det_spread + quad);
            let log_w = log_alpha + eps_a + log_epsilon(rest, n, cb.log_det) + log_overlap;
            out.push((log_w, SizedComponent { weight: 0.0, mean, cov }));
        }
    }
    Ok(out)
}

fn check_pair(a: &GaussianMixture, b: &GaussianMixture, omega: f64) -> Result<Option<usize>> {
    check_weight(omega)?;
    match (a.dim(), b.dim()) {
        (Some(da), Some(db)) => {
            gaussian::check_dim(da, db)?;
            Ok(Some(da))
        }
        _ => Ok(None),
    }
}

/// Unnormalized GM approximation of the weighted geometric mean
/// `a(x)^ω b(x)^(1−ω)`, with `|a|·|b|` components in `a`-major order.
pub fn gm_geometric_mean(a: &GaussianMixture, b: &GaussianMixture, omega: f64) -> Result<GaussianMixture> {
    let Some(n) = check_pair(a, b, omega)? else {
        return Ok(GaussianMixture::empty());
    };
    with_dim!(n, dim => {
        let comps = product_terms(a, b, omega, dim)?
            .into_iter()
            .map(|(lw, mut c)| {
                c.weight = lw.exp();
                c.into_component()
            })
            .collect();
        Ok(GaussianMixture::new(comps))
    })
}

/// Normalized geometric mean of two slot mixtures and the log of its
/// normalizer, optionally reduced.
fn slot_geometric_mean(
    a: &GaussianMixture,
    b: &GaussianMixture,
    omega: f64,
    reduction: Option<&ReductionPolicy>,
) -> Result<(f64, GaussianMixture)> {
    let Some(n) = check_pair(a, b, omega)? else {
        return Ok((f64::NEG_INFINITY, GaussianMixture::empty()));
    };
    with_dim!(n, dim => {
        let terms = product_terms(a, b, omega, dim)?;
        let log_ws: Vec<f64> = terms.iter().map(|(lw, _)| *lw).collect();
        let log_mass = logsumexp(&log_ws);
        if log_mass == f64::NEG_INFINITY {
            return Ok((log_mass, GaussianMixture::empty()));
        }
        let mut comps: Vec<SizedComponent<_>> = terms
            .into_iter()
            .map(|(lw, mut c)| {
                c.weight = (lw - log_mass).exp();
                c
            })
            .collect();
        if let Some(policy) = reduction {
            comps = reduce_sized(comps, policy)?;
        }
        Ok((log_mass, GaussianMixture::new(comps.into_iter().map(SizedComponent::into_component).collect())))
    })
}

/// `ω ln a + (1−ω) ln b`, with `0·ln 0` never arising because `ω ∈ (0,1)`.
fn log_geo(a: f64, b: f64, omega: f64) -> f64 {
    omega * a.ln() + (1.0 - omega) * b.ln()
}

/// GCI fusion `f1^ω f2^(1−ω) / ∫·` of two augmented Bernoulli densities.
///
/// When a normalizer vanishes (for instance `r1 = 1`, `r2 = 0`, or the two
/// class PMFs have disjoint supports) the affected constituents are taken
/// from the input with the larger weight.
pub fn fuse_pair(f1: &AugmentedBernoulli, f2: &AugmentedBernoulli, omega: f64) -> Result<AugmentedBernoulli> {
    fuse_pair_reduced(f1, f2, omega, None)
}

/// [`fuse_pair`] with every fused slot mixture reduced.
pub(crate) fn fuse_pair_reduced(
    f1: &AugmentedBernoulli,
    f2: &AugmentedBernoulli,
    omega: f64,
    reduction: Option<&ReductionPolicy>,
) -> Result<AugmentedBernoulli> {
    check_weight(omega)?;
    let dominant = if omega >= 0.5 { f1 } else { f2 };

    let log_r = log_geo(f1.r, f2.r, omega);
    let log_zeta = log_geo(1.0 - f1.r, 1.0 - f2.r, omega);

    let mut spdf = BTreeMap::new();
    let mut log_class_mass = BTreeMap::new();
    let mut log_mode_terms = BTreeMap::new();
    for (&c, modes1) in &f1.pmf.mode {
        let modes2 = f2
            .pmf
            .mode
            .get(&c)
            .ok_or_else(|| Error::InvalidParameter(format!("class {c} missing from second density")))?;
        let mut terms = BTreeMap::new();
        for (&m, &b1) in modes1 {
            let b2 = modes2.get(&m).copied().unwrap_or(0.0);
            let log_beta = log_geo(b1, b2, omega);
            if log_beta == f64::NEG_INFINITY {
                spdf.insert((c, m), GaussianMixture::empty());
                terms.insert(m, f64::NEG_INFINITY);
                continue;
            }
            let s1 = f1.slot(c, m).ok_or(Error::EmptyMixture)?;
            let s2 = f2.slot(c, m).ok_or(Error::EmptyMixture)?;
            let (log_mass, gm) = slot_geometric_mean(s1, s2, omega, reduction)?;
            spdf.insert((c, m), gm);
            terms.insert(m, log_beta + log_mass);
        }
        let log_gamma = log_geo(f1.pmf.class_prob(c), f2.pmf.class_prob(c), omega);
        let mass = logsumexp(&terms.values().copied().collect::<Vec<_>>());
        log_class_mass.insert(c, log_gamma + mass);
        log_mode_terms.insert(c, (mass, terms));
    }
    let log_total = logsumexp(&log_class_mass.values().copied().collect::<Vec<_>>());

    let log_num = log_r + log_total;
    let r = match (log_num == f64::NEG_INFINITY, log_zeta == f64::NEG_INFINITY) {
        (false, false) => 1.0 / (1.0 + (log_zeta - log_num).exp()),
        (false, true) => 1.0,
        (true, false) => 0.0,
        (true, true) => {
            log::warn!("degenerate GCI fusion: existence certain and impossible at once");
            dominant.r
        }
    };

    if log_total == f64::NEG_INFINITY {
        return Ok(AugmentedBernoulli { r, pmf: dominant.pmf.clone(), spdf: dominant.spdf.clone() });
    }

    let mut pmf = ClassModePmf::default();
    for (&c, &lc) in &log_class_mass {
        pmf.class.insert(c, (lc - log_total).exp());
        let (mass, terms) = &log_mode_terms[&c];
        if *mass == f64::NEG_INFINITY {
            pmf.mode.insert(c, dominant.pmf.mode[&c].clone());
            for &m in terms.keys() {
                spdf.insert((c, m), dominant.spdf[&(c, m)].clone());
            }
        } else {
            let modes = terms.iter().map(|(&m, &t)| (m, (t - mass).exp())).collect();
            pmf.mode.insert(c, modes);
        }
    }
    renormalize(&mut pmf);
    // A mode whose fused probability underflowed to zero keeps no mixture.
    for (&(c, m), gm) in spdf.iter_mut() {
        if pmf.mode_prob(c, m) == 0.0 {
            *gm = GaussianMixture::empty();
        }
    }
    Ok(AugmentedBernoulli { r, pmf, spdf })
}

fn renormalize(pmf: &mut ClassModePmf) {
    let total: f64 = pmf.class.values().sum();
    pmf.class.values_mut().for_each(|p| *p /= total);
    for modes in pmf.mode.values_mut() {
        let total: f64 = modes.values().sum();
        if total > 0.0 {
            modes.values_mut().for_each(|p| *p /= total);
        }
    }
}
