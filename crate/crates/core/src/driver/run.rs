use rand::Rng;

use super::trace::{potential_bound, RoundRecord, RunTrace};
use super::{comparator_policy, Arm, BaselineMode, DriverConfig, DriverError, PreferenceTable, WidthMode};
use crate::estimator::{
    confidence_radius, confidence_width, empirical_width, fit_logistic, CurvatureTracker, LogisticData,
    NewtonOptions, PreferenceRecord, RadiusBuffer, RewardEstimate,
};
use crate::mathcore::{dot, sigmoid_prime, CovarianceState, Vector};
use crate::policy::{optimize_policy, refresh_sampler, PolicyTriple, PrunedObjective, SoftmaxPolicy};
use crate::rng::{stream_rng, Stream};
use crate::world::World;

pub fn run_depo(world: &World, cfg: &DriverConfig, seed: u64) -> Result<RunTrace, DriverError> {
    run(world, cfg, Arm::Depo, seed)
}

pub fn run_baseline(
    world: &World,
    cfg: &DriverConfig,
    seed: u64,
    mode: BaselineMode,
) -> Result<RunTrace, DriverError> {
    let arm = match mode {
        BaselineMode::Passive => Arm::Passive,
        BaselineMode::UniformBonus => Arm::UniformBonus,
    };
    run(world, cfg, arm, seed)
}

/// Writes `ψ(x, y, y′)` into `buf`.
fn psi_into(world: &World, x: usize, y: usize, y2: usize, buf: &mut [f64]) {
    let d = world.feature_dim();
    buf[..d].copy_from_slice(world.phi_unchecked(x, y).as_slice());
    buf[d..].copy_from_slice(world.phi_unchecked(x, y2).as_slice());
}

struct Probe {
    psi: Vec<f64>,
    gap: f64,
}

fn draw_probes(world: &World, count: usize, seed: u64) -> Vec<Probe> {
    let mut rng = stream_rng(seed, Stream::Probe);
    let dim = world.pair_dim();
    (0..count)
        .map(|_| {
            let x = rng.random_range(0..world.num_prompts());
            let y = rng.random_range(0..world.pool_size());
            let y2 = rng.random_range(0..world.pool_size());
            let mut psi = vec![0.0; dim];
            psi_into(world, x, y, y2, &mut psi);
            Probe {
                psi,
                gap: world.gap_unchecked(x, y, y2),
            }
        })
        .collect()
}

/// Executes the online loop for `cfg.rounds` rounds. Deterministic in
/// `(world, cfg, arm, seed)`; all arms consume the same random streams.
pub fn run(world: &World, cfg: &DriverConfig, arm: Arm, seed: u64) -> Result<RunTrace, DriverError> {
    cfg.validate()?;
    let table = PreferenceTable::new(world)?;
    let (m, k, dim) = (world.num_prompts(), world.pool_size(), world.pair_dim());
    let train = {
        let mut t = cfg.train_config();
        if arm == Arm::Passive {
            t.alpha = 0.0;
        }
        t
    };

    let comparator = comparator_policy(world);
    let reference = SoftmaxPolicy::uniform(m, k);
    let initial_sampler = reference.clone();
    let mut triple = PolicyTriple::from_reference(reference.clone());

    let mut prompt_rng = stream_rng(seed, Stream::Prompt);
    let mut policy_rng = stream_rng(seed, Stream::Policy);
    let mut sampler_rng = stream_rng(seed, Stream::Sampler);
    let mut oracle_rng = stream_rng(seed, Stream::Oracle);
    let probes = draw_probes(world, cfg.probe_pairs, seed);

    let mut state = CovarianceState::new(dim, cfg.lambda).map_err(|e| DriverError::at(0, e))?;
    let mut buffer = RadiusBuffer::new(cfg.buffer_capacity);
    let mut kappa_true = CurvatureTracker::new(world.theta_star().clone());
    // label counts per generated triple (x, y, y′)
    let mut positives = vec![0.0f64; m * k * k];
    let mut negatives = vec![0.0f64; m * k * k];
    let cell = |x: usize, y: usize, y2: usize| (x * k + y) * k + y2;
    let mut theta_hat: Option<Vector<f64>> = None;
    let newton = NewtonOptions::for_scalar::<f64>();
    let s_bound = world.spec().s_bound;

    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut cum_regret = 0.0;
    let mut cum_refreshed = 0.0;
    let mut potential_sum = 0.0;
    let mut coverage_failures = 0;
    let mut first_coverage_failure = None;
    let mut newton_unconverged = 0;
    let mut optimizer_stalls = 0;
    let mut last_estimate = None;
    let mut psi_buf = vec![0.0; dim];

    for t in 1..=cfg.rounds {
        refresh_sampler(&mut triple, t, train.refresh_interval).map_err(|e| DriverError::at(t, e))?;

        let x = world.sample_prompt(&mut prompt_rng);
        let y = triple.current.sample(x, &mut policy_rng);
        let y2 = triple.sampler.sample(x, &mut sampler_rng);

        let regret_inc = table
            .regret_increment(&comparator, &triple.current, &initial_sampler)
            .map_err(|e| DriverError::at(t, e))?;
        cum_regret += regret_inc;
        let regret_refreshed = if cfg.track_refreshed_regret {
            let r = table
                .regret_increment(&comparator, &triple.current, &triple.sampler)
                .map_err(|e| DriverError::at(t, e))?;
            cum_refreshed += r;
            Some(r)
        } else {
            None
        };

        let outcome = world.sample_preference(x, y, y2, &mut oracle_rng).map_err(|e| DriverError::at(t, e))?;
        let psi_policy = world.pair_feature(x, y, y2).map_err(|e| DriverError::at(t, e))?;
        let record = PreferenceRecord::new(t, x, y, y2, outcome.label, psi_policy.clone());
        if outcome.first_won() {
            positives[cell(x, y, y2)] += 1.0;
        } else {
            negatives[cell(x, y, y2)] += 1.0;
        }

        // covariance and radius buffer take the winner-first orientation
        let previous = cfg.radius_uses_previous.then(|| state.clone());
        let quad = state.quad_form(record.psi_wl.psi()).map_err(|e| DriverError::at(t, e))?;
        potential_sum += quad;
        state.sm_update(record.psi_wl.psi()).map_err(|e| DriverError::at(t, e))?;
        buffer.push(record.psi_wl.clone());
        kappa_true.observe(&record.psi_wl).map_err(|e| DriverError::at(t, e))?;
        let curvature = kappa_true.current();
        let beta_conf_true = confidence_width(curvature.kappa, &state, s_bound, cfg.delta).map_err(|e| DriverError::at(t, e))?;

        // regularized logistic MLE on the generated orientation
        let mut data = LogisticData::new(dim);
        for xx in 0..m {
            for a in 0..k {
                for b in 0..k {
                    let c = cell(xx, a, b);
                    if positives[c] + negatives[c] > 0.0 {
                        psi_into(world, xx, a, b, &mut psi_buf);
                        data.push(&Vector::new(psi_buf.clone()).map_err(|e| DriverError::at(t, e))?, positives[c], negatives[c])
                            .map_err(|e| DriverError::at(t, e))?;
                    }
                }
            }
        }
        let fit = fit_logistic(&data, cfg.lambda, theta_hat.as_ref(), newton).map_err(|e| DriverError::at(t, e))?;
        if !fit.converged {
            newton_unconverged += 1;
        }
        let th = fit.theta.clone();

        // coverage of the true gap by the theoretical width, V_t, played pair and probes
        let covered = |psi: &[f64], gap: f64| {
            let err = (gap - dot(th.as_slice(), psi)).abs();
            err <= beta_conf_true * state.quad_form_slice(psi).sqrt()
        };
        let mut coverage_ok = covered(psi_policy.psi().as_slice(), world.gap_unchecked(x, y, y2));
        for p in &probes {
            coverage_ok &= covered(&p.psi, p.gap);
        }
        if !coverage_ok {
            coverage_failures += 1;
            first_coverage_failure.get_or_insert(t);
        }

        let radius_state = previous.as_ref().unwrap_or(&state);
        let ew = empirical_width(&buffer, radius_state, cfg.c_b, cfg.epsilon).map_err(|e| DriverError::at(t, e))?;
        let kappa_plugin = plugin_curvature(world, &th, &positives, &negatives, &mut psi_buf);
        let width = match cfg.width_mode {
            WidthMode::Empirical => ew.width_gamma,
            WidthMode::TheoreticalTrue => beta_conf_true,
            WidthMode::TheoreticalPlugin => {
                confidence_width(kappa_plugin, &state, s_bound, cfg.delta).map_err(|e| DriverError::at(t, e))?
            }
        };
        let bonus_of = |x: usize, a: usize, b: usize, buf: &mut [f64]| -> f64 {
            match arm {
                Arm::Depo => {
                    psi_into(world, x, a, b, buf);
                    width * radius_state.quad_form_slice(buf).sqrt()
                }
                Arm::Passive | Arm::UniformBonus => 0.0,
            }
        };
        let bonus_value = bonus_of(x, y, y2, &mut psi_buf);

        let mut objective = PrunedObjective::new(reference.clone(), train.beta, train.alpha);
        for xx in 0..m {
            for a in 0..k {
                for b in 0..k {
                    let c = cell(xx, a, b);
                    let (pos, neg) = (positives[c], negatives[c]);
                    if pos > 0.0 {
                        objective.add_preference(xx, a, b, pos);
                    }
                    if neg > 0.0 {
                        objective.add_preference(xx, b, a, neg);
                    }
                    if train.alpha != 0.0 && pos + neg > 0.0 {
                        objective.add_sampled(xx, b, bonus_of(xx, a, b, &mut psi_buf), pos + neg);
                    }
                }
            }
        }
        let out = optimize_policy(&triple.current, &objective, &train).map_err(|e| DriverError::at(t, e))?;
        if out.stalled {
            optimizer_stalls += 1;
        }
        triple.current = out.policy;

        let lambda_min = state.min_eigenvalue().map_err(|e| DriverError::at(t, e))?;
        rounds.push(RoundRecord {
            t,
            prompt_id: x,
            y,
            yprime: y2,
            winner: outcome.winner,
            regret_inc,
            cum_regret,
            bonus: bonus_value,
            r_bar: ew.r_bar,
            width_gamma: ew.width_gamma,
            beta_conf_true,
            kappa_true: curvature.kappa,
            b_t: curvature.logit_bound,
            lambda_min,
            quad_form: quad,
            coverage_ok,
            objective: out.value,
            regret_inc_refreshed: regret_refreshed,
        });

        if t == cfg.rounds {
            last_estimate = Some(RewardEstimate {
                theta_hat: th.clone(),
                lambda: cfg.lambda,
                newton_iters: fit.iterations,
                grad_norm: fit.grad_norm,
                kappa_true: curvature.kappa,
                kappa_plugin,
                logit_bound: curvature.logit_bound,
                eta: confidence_radius(&state, s_bound, cfg.delta).map_err(|e| DriverError::at(t, e))?,
                beta_conf: beta_conf_true,
                width_gamma: ew.width_gamma,
                r_bar: ew.r_bar,
            });
        }
        theta_hat = Some(th);
    }

    Ok(RunTrace {
        arm,
        seed,
        config: cfg.clone(),
        pair_dim: dim,
        rounds,
        cumulative_regret: cum_regret,
        cumulative_regret_refreshed: cfg.track_refreshed_regret.then_some(cum_refreshed),
        potential_sum,
        potential_bound: potential_bound(dim, cfg.rounds, cfg.lambda),
        coverage_failures,
        first_coverage_failure,
        newton_unconverged,
        optimizer_stalls,
        norm_warnings: state.norm_warnings(),
        final_policy: triple.current,
        final_estimate: last_estimate,
    })
}

/// `σ′(max_s |⟨θ̂, ψ_s⟩|)` over every observed winner-first feature.
fn plugin_curvature(
    world: &World,
    theta: &Vector<f64>,
    positives: &[f64],
    negatives: &[f64],
    buf: &mut [f64],
) -> f64 {
    let k = world.pool_size();
    let mut bound = 0.0f64;
    for x in 0..world.num_prompts() {
        for a in 0..k {
            for b in 0..k {
                let c = (x * k + a) * k + b;
                if positives[c] > 0.0 {
                    psi_into(world, x, a, b, buf);
                    bound = bound.max(dot(theta.as_slice(), buf).abs());
                }
                if negatives[c] > 0.0 {
                    psi_into(world, x, b, a, buf);
                    bound = bound.max(dot(theta.as_slice(), buf).abs());
                }
            }
        }
    }
    sigmoid_prime(bound)
}
