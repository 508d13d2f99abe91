use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Scenario;
use crate::density::{ClassId, ModeId};
use crate::error::{Error, Result};
use crate::gaussian;

/// State of the target at a step where it exists.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthState {
    pub state: DVector<f64>,
    pub class: ClassId,
    pub mode: ModeId,
}

/// Ground truth at step `k` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub k: usize,
    pub target: Option<TruthState>,
}

impl TruthRecord {
    pub fn exists(&self) -> bool {
        self.target.is_some()
    }

    /// `(ξ, η)` of the target, if present.
    pub fn position(&self) -> Option<[f64; 2]> {
        self.target.as_ref().map(|t| [t.state[0], t.state[2]])
    }
}

/// Ground-truth sequence for steps `1..=timesteps`.
///
/// The target exists over the union of the schedule segments, starts at the
/// configured initial state and then follows the scheduled mode's
/// transition matrix. With `noisy_truth` the mode's process noise is added;
/// otherwise the trajectory is deterministic and `rng` is not touched.
pub fn generate_truth<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<Vec<TruthRecord>> {
    let cfg = &scenario.config.scenario;
    let class = ClassId(cfg.true_class);
    let spec = scenario.library.class(class)?;
    for seg in &cfg.schedule {
        if !spec.modes.contains(&ModeId(seg.mode)) {
            return Err(Error::InvalidParameter(format!(
                "schedule mode m{} is not admissible for class {class}",
                seg.mode
            )));
        }
    }
    let mode_at =
        |k: usize| cfg.schedule.iter().find(|s| (s.first_step..=s.last_step).contains(&k)).map(|s| ModeId(s.mode));

    let mut out = Vec::with_capacity(cfg.timesteps);
    let mut state: Option<DVector<f64>> = None;
    for k in 1..=cfg.timesteps {
        let Some(mode) = mode_at(k) else {
            state = None;
            out.push(TruthRecord { k, target: None });
            continue;
        };
        let next = match state.take() {
            None => DVector::from_column_slice(&cfg.initial_state),
            Some(prev) => {
                let motion = scenario.library.mode(mode)?;
                let mut x = &motion.transition * prev;
                if cfg.noisy_truth {
                    let chol = gaussian::cholesky(&motion.process_cov)?;
                    let n = DVector::from_fn(x.len(), |_, _| StandardNormal.sample(rng));
                    x += chol.l() * n;
                }
                x
            }
        };
        state = Some(next.clone());
        out.push(TruthRecord { k, target: Some(TruthState { state: next, class, mode }) });
    }
    Ok(out)
}
