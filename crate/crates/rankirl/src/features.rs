//! Feature maps and discounted feature expectations.
//!
//! The feature expectations of a policy are the feature-weighted discounted
//! state occupancy: `mu(pi) = Phi^T x` where `x` solves
//! `x = d0 + gamma * P_pi^T x`. The same quantity can be estimated from
//! sampled trajectories by discounted summation from `t = 0`.

use crate::mdp::{Mdp, Policy};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Per-state feature vectors `phi(s)` in `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: Vec<Vec<f64>>,
    dim: usize,
}

impl FeatureMap {
    pub fn new(phi: Vec<Vec<f64>>) -> Result<Self> {
        let dim = phi.first().map_or(0, |row| row.len());
        if dim == 0 {
            return Err(Error::invalid("feature map must be non-empty"));
        }
        for (s, row) in phi.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "feature row",
                    expected: dim,
                    got: row.len(),
                });
            }
            if let Some(&bad) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::invalid(format!(
                    "feature value {bad} for state {s} outside [0, 1]"
                )));
            }
        }
        Ok(FeatureMap { phi, dim })
    }

    /// The identity ("lossless") map: one indicator feature per state.
    pub fn lossless(n_states: usize) -> Self {
        let mut phi = vec![vec![0.0; n_states]; n_states];
        for (s, row) in phi.iter_mut().enumerate() {
            row[s] = 1.0;
        }
        FeatureMap { phi, dim: n_states }
    }

    /// Min-max normalize arbitrary per-state features into `[0, 1]` per
    /// dimension. Returns the map together with the applied
    /// `(min, max)` transform per dimension so it can be logged.
    pub fn normalized(raw: Vec<Vec<f64>>) -> Result<(Self, Vec<(f64, f64)>)> {
        let dim = raw.first().map_or(0, |row| row.len());
        if dim == 0 {
            return Err(Error::invalid("feature map must be non-empty"));
        }
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for row in &raw {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "feature row",
                    expected: dim,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                bounds[j].0 = bounds[j].0.min(v);
                bounds[j].1 = bounds[j].1.max(v);
            }
        }
        let phi = raw
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let (lo, hi) = bounds[j];
                        if hi > lo {
                            (v - lo) / (hi - lo)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Ok((FeatureMap { phi, dim }, bounds))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self, state: usize) -> &[f64] {
        &self.phi[state]
    }
}

/// An ordered list of visited state indices, optionally tagged with
/// per-step metadata (used by the road-network pipeline).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<usize>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("trajectory must be non-empty"));
        }
        Ok(Trajectory { states })
    }
}

/// A feature-expectation vector with its ordinal rank label.
/// Ranks use the internal convention: higher index = better demonstrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mu {
    pub vector: Vec<f64>,
    pub rank: usize,
    pub source_id: String,
}

/// Initial state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution {
    probs: Vec<f64>,
}

impl InitialDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid("initial distribution has negative entries"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "initial distribution sums to {sum}, expected 1"
            )));
        }
        Ok(InitialDistribution { probs })
    }

    pub fn uniform(n_states: usize) -> Self {
        InitialDistribution {
            probs: vec![1.0 / n_states as f64; n_states],
        }
    }

    pub fn point_mass(n_states: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n_states];
        probs[state] = 1.0;
        InitialDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Smallest horizon `T` with `gamma^T * phi_max / (1 - gamma) <= tol`,
/// so that truncating sampled trajectories at `T` keeps the discounted
/// tail below `tol`.
pub fn truncation_horizon(gamma: f64, phi_max: f64, tol: f64) -> usize {
    if gamma == 0.0 {
        return 1;
    }
    let bound = phi_max.max(f64::MIN_POSITIVE) / (1.0 - gamma);
    let mut horizon = 0usize;
    let mut tail = bound;
    while tail > tol && horizon < 1_000_000 {
        tail *= gamma;
        horizon += 1;
    }
    horizon.max(1)
}

/// Exact discounted feature expectations of a deterministic policy:
/// `Phi^T x` with `x = d0 + gamma * P_pi^T x`.
pub fn exact_mu(
    mdp: &Mdp,
    policy: &Policy,
    fmap: &FeatureMap,
    d0: &InitialDistribution,
) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    if fmap.n_states() != n {
        return Err(Error::DimensionMismatch {
            context: "feature map states",
            expected: n,
            got: fmap.n_states(),
        });
    }
    if d0.probs().len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial distribution",
            expected: n,
            got: d0.probs().len(),
        });
    }
    if policy.n_states() != n {
        return Err(Error::DimensionMismatch {
            context: "policy length",
            expected: n,
            got: policy.n_states(),
        });
    }

    // (I - gamma P_pi^T) x = d0
    let mut mat = DMatrix::<f64>::identity(n, n);
    for s in 0..n {
        for &(next, p) in mdp.transition_row(s, policy.action(s)) {
            mat[(next, s)] -= mdp.gamma() * p;
        }
    }
    let rhs = DVector::from_column_slice(d0.probs());
    let occupancy = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NonConvergence("singular occupancy system".to_string()))?;

    let mut mu = vec![0.0; fmap.dim()];
    for s in 0..n {
        let weight = occupancy[s];
        for (j, &f) in fmap.phi(s).iter().enumerate() {
            mu[j] += weight * f;
        }
    }
    Ok(mu)
}

/// Empirical feature expectations: `(1/m) sum_traj sum_t gamma^t phi(s_t)`,
/// each trajectory discounted from its own `t = 0`.
pub fn empirical_mu(trajectories: &[Trajectory], fmap: &FeatureMap, gamma: f64) -> Result<Vec<f64>> {
    if trajectories.is_empty() {
        return Err(Error::invalid("empirical_mu needs at least one trajectory"));
    }
    let mut mu = vec![0.0; fmap.dim()];
    for traj in trajectories {
        let mut discount = 1.0;
        for &s in &traj.states {
            if s >= fmap.n_states() {
                return Err(Error::StateOutOfRange {
                    index: s,
                    n_states: fmap.n_states(),
                });
            }
            for (j, &f) in fmap.phi(s).iter().enumerate() {
                mu[j] += discount * f;
            }
            discount *= gamma;
            if discount == 0.0 {
                break;
            }
        }
    }
    let m = trajectories.len() as f64;
    mu.iter_mut().for_each(|v| *v /= m);
    Ok(mu)
}

/// Inner product `w . mu`: the expected discounted return of the policy
/// behind `mu` under the linear reward `w . phi`.
pub fn value_from_w(w: &[f64], mu: &[f64]) -> Result<f64> {
    if w.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            context: "w . mu inner product",
            expected: mu.len(),
            got: w.len(),
        });
    }
    Ok(w.iter().zip(mu).map(|(a, b)| a * b).sum())
}

/// Sample one trajectory of `horizon` steps from an MDP under a policy.
pub fn sample_trajectory<R: rand::Rng>(
    mdp: &Mdp,
    policy: &Policy,
    d0: &InitialDistribution,
    horizon: usize,
    rng: &mut R,
) -> Trajectory {
    let mut state = sample_index(d0.probs(), rng);
    let mut states = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        states.push(state);
        let row = mdp.transition_row(state, policy.action(state));
        state = sample_sparse(row, rng);
    }
    Trajectory { states }
}

fn sample_index<R: rand::Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn sample_sparse<R: rand::Rng>(row: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(next, p) in row {
        acc += p;
        if u < acc {
            return next;
        }
    }
    row.last().expect("empty transition row").0
}
