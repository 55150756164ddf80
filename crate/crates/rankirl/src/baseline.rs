//! Max-margin apprenticeship learning, used as the comparison baseline.
//!
//! Starting from a random policy, each iteration finds the weight vector
//! that maximizes the margin `t` by which the expert's feature
//! expectations beat every policy found so far, then adds the optimal
//! policy under that weight vector. Terminates once the margin drops to
//! `epsilon`: the expert is then nearly inside the convex hull of the
//! generated feature expectations.

use crate::features::{
    empirical_mu, exact_mu, sample_trajectory, truncation_horizon, FeatureMap,
    InitialDistribution, Trajectory,
};
use crate::mdp::{Mdp, Policy};
use crate::opt::{self, BallMinOptions};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How intermediate-policy feature expectations are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuMode {
    /// Solve the occupancy system exactly (the MDP is known).
    Exact,
    /// Estimate from sampled trajectories, mimicking the sampled variant.
    Sampled { n_trajectories: usize },
}

/// One iteration of the loop: the separating weights, the achieved
/// margin, and the policy generated from those weights.
#[derive(Debug, Clone)]
pub struct AlIteration {
    pub w: Vec<f64>,
    pub t: f64,
    pub policy: Policy,
    pub mu: Vec<f64>,
}

/// Full run record of [`abbeel_max_margin`].
#[derive(Debug, Clone)]
pub struct AlTrace {
    pub iterations: Vec<AlIteration>,
    pub final_w: Vec<f64>,
    pub converged: bool,
    pub seed: u64,
}

/// Max-margin separation of `mu_e` from a set of opposing feature
/// expectations: maximize `t` s.t. `w.mu_e >= w.mu_j + t` for all `j`,
/// `||w|| <= 1`. Returns `(w, t)`; `t >= 0` always (`w = 0` gives 0).
pub fn max_margin_separation(mu_e: &[f64], mus: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let d = mu_e.len();
    for mu in mus {
        if mu.len() != d {
            return Err(Error::DimensionMismatch {
                context: "opposing mu",
                expected: d,
                got: mu.len(),
            });
        }
    }
    // Equivalent ball minimization of h(w) = max_j w.(mu_j - mu_e),
    // which is convex and positively homogeneous; t = -min h.
    let diffs: Vec<Vec<f64>> = mus
        .iter()
        .map(|mu| mu.iter().zip(mu_e).map(|(m, e)| m - e).collect())
        .collect();
    let inits: Vec<Vec<f64>> = diffs
        .iter()
        .map(|diff| diff.iter().map(|x| -x).collect())
        .collect();
    let eval = |w: &[f64]| -> (f64, Vec<f64>) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for (j, diff) in diffs.iter().enumerate() {
            let v: f64 = w.iter().zip(diff).map(|(a, b)| a * b).sum();
            if v > best {
                best = v;
                arg = j;
            }
        }
        (best, diffs[arg].clone())
    };
    let opts = BallMinOptions {
        max_starts: 2,
        ..BallMinOptions::default()
    };
    let result = opt::minimize_on_ball(d, &inits, eval, &opts);
    Ok((result.w, -result.value))
}

/// Worst-case violation of the recorded margin constraints
/// `w.mu_e >= w.mu_j + t` and `||w|| <= 1`.
pub fn separation_residual(mu_e: &[f64], mus: &[Vec<f64>], w: &[f64], t: f64) -> f64 {
    let score_e: f64 = w.iter().zip(mu_e).map(|(a, b)| a * b).sum();
    let mut residual = opt::norm(w) - 1.0;
    for mu in mus {
        let score: f64 = w.iter().zip(mu).map(|(a, b)| a * b).sum();
        residual = residual.max(score + t - score_e);
    }
    residual.max(0.0)
}

/// The max-margin apprenticeship-learning loop.
///
/// `pi_0` is a uniformly random deterministic policy drawn from `seed`;
/// all later randomness (only used in sampled mode) continues from the
/// same stream, so runs are fully reproducible. Returns the trace with
/// `converged = false` when `max_iter` iterations did not reach a margin
/// of `epsilon` (the trace itself is still valid).
#[allow(clippy::too_many_arguments)]
pub fn abbeel_max_margin(
    mdp: &Mdp,
    fmap: &FeatureMap,
    d0: &InitialDistribution,
    mu_e: &[f64],
    epsilon: f64,
    max_iter: usize,
    seed: u64,
    mode: MuMode,
) -> Result<AlTrace> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    if mu_e.len() != fmap.dim() {
        return Err(Error::DimensionMismatch {
            context: "expert mu",
            expected: fmap.dim(),
            got: mu_e.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi_0 = Policy::new(
        (0..mdp.n_states())
            .map(|_| rng.gen_range(0..mdp.n_actions()))
            .collect(),
    );
    let policy_mu = |policy: &Policy, rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
        match mode {
            MuMode::Exact => exact_mu(mdp, policy, fmap, d0),
            MuMode::Sampled { n_trajectories } => {
                let horizon = truncation_horizon(mdp.gamma(), 1.0, 1e-6);
                let trajs: Vec<Trajectory> = (0..n_trajectories.max(1))
                    .map(|_| sample_trajectory(mdp, policy, d0, horizon, rng))
                    .collect();
                empirical_mu(&trajs, fmap, mdp.gamma())
            }
        }
    };

    let mut mus = vec![policy_mu(&pi_0, &mut rng)?];
    let mut iterations: Vec<AlIteration> = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let (w, t) = max_margin_separation(mu_e, &mus)?;
        let reward: Vec<f64> = (0..mdp.n_states())
            .map(|s| w.iter().zip(fmap.phi(s)).map(|(a, b)| a * b).sum())
            .collect();
        let (policy, _) = mdp.optimal_policy(&reward, 1e-9)?;
        let mu = policy_mu(&policy, &mut rng)?;
        mus.push(mu.clone());
        let done = t <= epsilon;
        iterations.push(AlIteration { w, t, policy, mu });
        if done {
            converged = true;
            break;
        }
    }
    let final_w = iterations
        .last()
        .map(|it| it.w.clone())
        .unwrap_or_else(|| vec![0.0; fmap.dim()]);
    Ok(AlTrace {
        iterations,
        final_w,
        converged,
        seed,
    })
}
