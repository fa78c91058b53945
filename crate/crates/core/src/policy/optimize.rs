use super::{PolicyError, PolicyObjective, PolicyTriple, SoftmaxPolicy, TrainConfig};

const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub policy: SoftmaxPolicy,
    /// Objective at the returned policy.
    pub value: f64,
    /// Steps that were accepted.
    pub accepted_steps: usize,
    /// Set when a step found no non-decreasing candidate within the halving budget.
    pub stalled: bool,
}

/// `gd_steps` gradient-ascent steps on the logits with backtracking.
///
/// Each step starts at `gd_lr` and halves until the objective does not
/// decrease; rows are re-centered after every accepted step.
pub fn optimize_policy<O: PolicyObjective + ?Sized>(
    start: &SoftmaxPolicy,
    objective: &O,
    cfg: &TrainConfig,
) -> Result<OptimizeOutcome, PolicyError> {
    cfg.validate()?;
    let mut policy = start.clone();
    if cfg.gd_steps == 0 {
        let value = objective.value(&policy);
        return Ok(OptimizeOutcome {
            policy,
            value,
            accepted_steps: 0,
            stalled: false,
        });
    }
    let (mut value, mut grad) = objective.value_and_gradient(&policy);
    let mut accepted_steps = 0;
    let mut stalled = false;
    for step in 0..cfg.gd_steps {
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(PolicyError::NonFiniteGradient { step });
        }
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        let mut lr = cfg.gd_lr;
        let mut next = None;
        for _ in 0..=MAX_HALVINGS {
            let mut cand = policy.clone();
            cand.logits_mut()
                .iter_mut()
                .zip(&grad)
                .for_each(|(l, g)| *l += lr * g);
            cand.recenter();
            let v = objective.value(&cand);
            if v.is_finite() && v >= value {
                next = Some(cand);
                break;
            }
            lr *= 0.5;
        }
        match next {
            Some(cand) => {
                policy = cand;
                (value, grad) = objective.value_and_gradient(&policy);
                accepted_steps += 1;
            }
            None => {
                stalled = true;
                break;
            }
        }
    }
    Ok(OptimizeOutcome {
        policy,
        value,
        accepted_steps,
        stalled,
    })
}

/// At the start of round `t`, snapshots the current policy into the sampler
/// when `(t − 1) mod H = 0`. Returns whether a refresh happened.
pub fn refresh_sampler(triple: &mut PolicyTriple, t: usize, h: usize) -> Result<bool, PolicyError> {
    if t == 0 {
        return Err(PolicyError::Config("rounds are numbered from 1".into()));
    }
    if h == 0 {
        return Err(PolicyError::Config("refresh interval H must be >= 1".into()));
    }
    if (t - 1).is_multiple_of(h) {
        triple.sampler = triple.current.clone();
        return Ok(true);
    }
    Ok(false)
}
