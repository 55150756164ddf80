//! Finite MDP representation, exact policy evaluation and optimal-policy
//! computation.
//!
//! Transition rows are stored sparsely as `(next_state, prob)` pairs.
//! Rewards are per-state; the evaluation convention is
//! `V(s) = R(s) + gamma * E[V(s')]`, i.e. reward accrues on the current
//! state including the first step.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Row-sum tolerance for transition distributions.
pub const PROB_TOL: f64 = 1e-12;

/// Above this size, policy evaluation falls back to iterative sweeps
/// instead of a direct linear solve.
pub const DIRECT_SOLVE_LIMIT: usize = 2000;

/// A finite Markov Decision Process with sparse transition rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    /// `transitions[s][a]` lists `(s', P(s'|s,a))` with nonzero probability.
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
    gamma: f64,
    reward: Option<Vec<f64>>,
}

/// A deterministic policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Policy { actions }
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn n_states(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// Per-state values of a fixed policy, in discounted return units.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, state: usize) -> f64 {
        self.values[state]
    }

    /// Expected value under an initial state distribution.
    pub fn expectation(&self, d0: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(d0)
            .map(|(v, p)| v * p)
            .sum()
    }
}

impl Mdp {
    /// Build from sparse transition rows, validating all invariants.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<Vec<Vec<(usize, f64)>>>,
        gamma: f64,
        reward: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mdp = Mdp {
            n_states,
            n_actions,
            transitions,
            gamma,
            reward,
        };
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(violations.join("; ")))
        }
    }

    /// Build from dense rows `dense[s][a][s'] = P(s'|s,a)`.
    pub fn from_dense(
        dense: &[Vec<Vec<f64>>],
        gamma: f64,
        reward: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n_states = dense.len();
        let n_actions = dense.first().map_or(0, |rows| rows.len());
        let mut transitions = Vec::with_capacity(n_states);
        for rows in dense {
            let mut per_action = Vec::with_capacity(n_actions);
            for row in rows {
                let sparse: Vec<(usize, f64)> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p != 0.0)
                    .map(|(j, p)| (j, *p))
                    .collect();
                per_action.push(sparse);
            }
            transitions.push(per_action);
        }
        Mdp::new(n_states, n_actions, transitions, gamma, reward)
    }

    /// Check every invariant, returning one description per violation.
    /// An empty list means the MDP is well formed.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if self.n_states == 0 {
            violations.push("n_states must be positive".to_string());
        }
        if self.n_actions == 0 {
            violations.push("n_actions must be positive".to_string());
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            violations.push(format!("gamma not in [0, 1): gamma = {}", self.gamma));
        }
        if self.transitions.len() != self.n_states {
            violations.push(format!(
                "transition table has {} state rows, expected {}",
                self.transitions.len(),
                self.n_states
            ));
            return violations;
        }
        for (s, per_action) in self.transitions.iter().enumerate() {
            if per_action.len() != self.n_actions {
                violations.push(format!(
                    "state {s} has {} action rows, expected {}",
                    per_action.len(),
                    self.n_actions
                ));
                continue;
            }
            for (a, row) in per_action.iter().enumerate() {
                let mut sum = 0.0;
                for &(next, p) in row {
                    if next >= self.n_states {
                        violations.push(format!(
                            "P(.|s={s},a={a}) references out-of-range state {next}"
                        ));
                    }
                    if p < 0.0 {
                        violations.push(format!(
                            "P({next}|s={s},a={a}) = {p} is negative"
                        ));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    violations.push(format!(
                        "P(.|s={s},a={a}) sums to {sum}, expected 1"
                    ));
                }
            }
        }
        if let Some(reward) = &self.reward {
            if reward.len() != self.n_states {
                violations.push(format!(
                    "reward has length {}, expected {}",
                    reward.len(),
                    self.n_states
                ));
            }
        }
        violations
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward(&self) -> Option<&[f64]> {
        self.reward.as_deref()
    }

    /// Sparse transition row for `(state, action)`.
    pub fn transition_row(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.transitions[state][action]
    }

    /// Dense transition table `[s][a][s']` (for serialization).
    pub fn dense_transitions(&self) -> Vec<Vec<Vec<f64>>> {
        let mut dense = vec![vec![vec![0.0; self.n_states]; self.n_actions]; self.n_states];
        for (s, per_action) in self.transitions.iter().enumerate() {
            for (a, row) in per_action.iter().enumerate() {
                for &(next, p) in row {
                    dense[s][a][next] += p;
                }
            }
        }
        dense
    }

    fn check_reward_len(&self, reward: &[f64]) -> Result<()> {
        if reward.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                context: "reward vector",
                expected: self.n_states,
                got: reward.len(),
            });
        }
        Ok(())
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.n_states() != self.n_states {
            return Err(Error::DimensionMismatch {
                context: "policy length",
                expected: self.n_states,
                got: policy.n_states(),
            });
        }
        if let Some(&bad) = policy.actions.iter().find(|&&a| a >= self.n_actions) {
            return Err(Error::invalid(format!(
                "policy action {bad} out of range (n_actions = {})",
                self.n_actions
            )));
        }
        Ok(())
    }

    /// Exact evaluation of a deterministic policy:
    /// `V(s) = R(s) + gamma * sum_s' P(s'|s,pi(s)) V(s')`.
    ///
    /// Solves the linear system directly for up to
    /// [`DIRECT_SOLVE_LIMIT`] states, otherwise iterates sweeps until the
    /// residual drops below `tol`.
    pub fn policy_evaluation(
        &self,
        policy: &Policy,
        reward: &[f64],
        tol: f64,
    ) -> Result<ValueFunction> {
        self.check_reward_len(reward)?;
        self.check_policy(policy)?;
        if tol <= 0.0 {
            return Err(Error::invalid(format!("tol must be positive, got {tol}")));
        }

        let values = if self.n_states <= DIRECT_SOLVE_LIMIT {
            self.evaluate_direct(policy, reward)?
        } else {
            self.evaluate_iterative(policy, reward, tol)
        };

        let residual = self.evaluation_residual(policy, reward, &values);
        if residual > tol {
            return Err(Error::NonConvergence(format!(
                "policy evaluation residual {residual} exceeds tol {tol}"
            )));
        }
        Ok(ValueFunction { values })
    }

    fn evaluate_direct(&self, policy: &Policy, reward: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_states;
        let mut mat = DMatrix::<f64>::identity(n, n);
        for s in 0..n {
            for &(next, p) in self.transition_row(s, policy.action(s)) {
                mat[(s, next)] -= self.gamma * p;
            }
        }
        let rhs = DVector::from_column_slice(reward);
        let lu = mat.lu();
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::NonConvergence("singular evaluation system".to_string()))?;
        Ok(sol.as_slice().to_vec())
    }

    fn evaluate_iterative(&self, policy: &Policy, reward: &[f64], tol: f64) -> Vec<f64> {
        let mut values = vec![0.0; self.n_states];
        // Contraction factor gamma: residual tol implies sweeps until the
        // Bellman backup moves no component more than tol * (1 - gamma).
        let sweep_tol = tol * (1.0 - self.gamma).max(f64::MIN_POSITIVE);
        loop {
            let mut next = vec![0.0; self.n_states];
            let mut delta: f64 = 0.0;
            for s in 0..self.n_states {
                let mut acc = reward[s];
                for &(sp, p) in self.transition_row(s, policy.action(s)) {
                    acc += self.gamma * p * values[sp];
                }
                delta = delta.max((acc - values[s]).abs());
                next[s] = acc;
            }
            values = next;
            if delta <= sweep_tol {
                return values;
            }
        }
    }

    /// Max-norm residual of `V = R + gamma P_pi V`.
    pub fn evaluation_residual(&self, policy: &Policy, reward: &[f64], values: &[f64]) -> f64 {
        let mut residual: f64 = 0.0;
        for s in 0..self.n_states {
            let mut acc = reward[s];
            for &(sp, p) in self.transition_row(s, policy.action(s)) {
                acc += self.gamma * p * values[sp];
            }
            residual = residual.max((acc - values[s]).abs());
        }
        residual
    }

    /// Value iteration to Bellman residual `<= tol`, returning the greedy
    /// policy of the final value function. Ties break toward the lowest
    /// action index so output is deterministic.
    pub fn optimal_policy(&self, reward: &[f64], tol: f64) -> Result<(Policy, ValueFunction)> {
        self.check_reward_len(reward)?;
        if tol <= 0.0 {
            return Err(Error::invalid(format!("tol must be positive, got {tol}")));
        }
        let mut values = vec![0.0; self.n_states];
        loop {
            let (next, delta) = self.bellman_backup(reward, &values);
            values = next;
            if delta <= tol {
                break;
            }
        }
        let policy = self.greedy_policy(&values);
        Ok((policy, ValueFunction { values }))
    }

    fn bellman_backup(&self, reward: &[f64], values: &[f64]) -> (Vec<f64>, f64) {
        let mut next = vec![0.0; self.n_states];
        let mut delta: f64 = 0.0;
        for s in 0..self.n_states {
            let mut best = f64::NEG_INFINITY;
            for a in 0..self.n_actions {
                let mut acc = 0.0;
                for &(sp, p) in self.transition_row(s, a) {
                    acc += p * values[sp];
                }
                if acc > best {
                    best = acc;
                }
            }
            let backed = reward[s] + self.gamma * best;
            delta = delta.max((backed - values[s]).abs());
            next[s] = backed;
        }
        (next, delta)
    }

    /// Greedy policy with lowest-action-index tie-breaking.
    pub fn greedy_policy(&self, values: &[f64]) -> Policy {
        let mut actions = Vec::with_capacity(self.n_states);
        for s in 0..self.n_states {
            let mut best_action = 0;
            let mut best = f64::NEG_INFINITY;
            for a in 0..self.n_actions {
                let mut acc = 0.0;
                for &(sp, p) in self.transition_row(s, a) {
                    acc += p * values[sp];
                }
                if acc > best {
                    best = acc;
                    best_action = a;
                }
            }
            actions.push(best_action);
        }
        Policy { actions }
    }
}

/// The four-state counterexample MDP together with its true and
/// approximate rewards and the three policies of interest.
#[derive(Debug, Clone)]
pub struct CounterexampleMdp {
    pub mdp: Mdp,
    /// `(0, -delta, +1, 0)` over states `(s0, s1, s2, s3)`.
    pub true_reward: Vec<f64>,
    /// `(0, 0, 1, 0)`: indistinguishable from `true_reward` by expert
    /// behaviour alone.
    pub approx_reward: Vec<f64>,
    /// Enters the `+1` state `s2` from `s0`.
    pub expert_policy: Policy,
    /// Enters the `-delta` state `s1`.
    pub pi1: Policy,
    /// Enters the neutral state `s3`.
    pub pi2: Policy,
}

/// Build the counterexample MDP: 4 states `{s0, s1, s2, s3}`, 3 actions
/// `{a, b, c}`; `s0` branches deterministically to `s1`/`s2`/`s3`, which
/// absorb under every action.
///
/// Reading note: the source material labels the expert action `a` while
/// assigning `+1` to `s2` and `-delta` to `s1`; we implement the internally
/// consistent version where the expert enters the `+1` state `s2` (action
/// `b`) and the approximate reward places its `1` on `s2`. The equality of
/// approximate values is between `pi1` and `pi2`.
pub fn build_counterexample_mdp(delta: f64, gamma: f64) -> Result<CounterexampleMdp> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must be in [0, 1), got {gamma}")));
    }
    // s0 --a--> s1, --b--> s2, --c--> s3; s1..s3 self-absorb.
    let transitions = vec![
        vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![(3, 1.0)]],
        vec![vec![(1, 1.0)]; 3],
        vec![vec![(2, 1.0)]; 3],
        vec![vec![(3, 1.0)]; 3],
    ];
    let true_reward = vec![0.0, -delta, 1.0, 0.0];
    let mdp = Mdp::new(4, 3, transitions, gamma, Some(true_reward.clone()))?;
    Ok(CounterexampleMdp {
        mdp,
        true_reward,
        approx_reward: vec![0.0, 0.0, 1.0, 0.0],
        expert_policy: Policy::new(vec![1, 0, 0, 0]),
        pi1: Policy::new(vec![0, 0, 0, 0]),
        pi2: Policy::new(vec![2, 0, 0, 0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state_mdp() -> Mdp {
        // s0 -a-> s1, s0 -b-> s0; s1 absorbs.
        Mdp::new(
            2,
            2,
            vec![
                vec![vec![(1, 1.0)], vec![(0, 1.0)]],
                vec![vec![(1, 1.0)], vec![(1, 1.0)]],
            ],
            0.9,
            None,
        )
        .unwrap()
    }

    #[test]
    fn validate_accepts_well_formed() {
        assert!(two_state_mdp().validate().is_empty());
    }

    #[test]
    fn validate_reports_bad_row_sum() {
        let mdp = Mdp {
            n_states: 2,
            n_actions: 1,
            transitions: vec![vec![vec![(1, 0.9)]], vec![vec![(1, 1.0)]]],
            gamma: 0.9,
            reward: None,
        };
        let violations = mdp.validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("s=0,a=0"), "{violations:?}");
    }

    #[test]
    fn validate_reports_gamma_one() {
        let mdp = Mdp {
            n_states: 1,
            n_actions: 1,
            transitions: vec![vec![vec![(0, 1.0)]]],
            gamma: 1.0,
            reward: None,
        };
        let violations = mdp.validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("gamma"), "{violations:?}");
    }

    #[test]
    fn zero_reward_evaluates_to_zero() {
        let mdp = two_state_mdp();
        let v = mdp
            .policy_evaluation(&Policy::new(vec![0, 0]), &[0.0, 0.0], 1e-10)
            .unwrap();
        assert_eq!(v.values(), &[0.0, 0.0]);
    }

    #[test]
    fn counterexample_values_match_geometric_series() {
        // Oracle: entering an absorbing state with reward rho at t=1 is
        // worth gamma * rho / (1 - gamma) from s0.
        let cx = build_counterexample_mdp(1.0, 0.9).unwrap();
        let v_expert = cx
            .mdp
            .policy_evaluation(&cx.expert_policy, &cx.true_reward, 1e-10)
            .unwrap();
        assert_abs_diff_eq!(v_expert.value(0), 0.9 / 0.1, epsilon = 1e-9);
        let v_pi1 = cx
            .mdp
            .policy_evaluation(&cx.pi1, &cx.true_reward, 1e-10)
            .unwrap();
        assert_abs_diff_eq!(v_pi1.value(0), -9.0, epsilon = 1e-9);
    }

    #[test]
    fn counterexample_approx_reward_hides_delta() {
        for delta in [0.5, 1.0, 10.0] {
            let cx = build_counterexample_mdp(delta, 0.9).unwrap();
            let v1 = cx
                .mdp
                .policy_evaluation(&cx.pi1, &cx.approx_reward, 1e-10)
                .unwrap();
            let v2 = cx
                .mdp
                .policy_evaluation(&cx.pi2, &cx.approx_reward, 1e-10)
                .unwrap();
            assert_abs_diff_eq!(v1.value(0), v2.value(0), epsilon = 1e-12);
        }
    }

    #[test]
    fn counterexample_true_reward_separates_pi1_pi2() {
        let cx = build_counterexample_mdp(10.0, 0.9).unwrap();
        let v1 = cx
            .mdp
            .policy_evaluation(&cx.pi1, &cx.true_reward, 1e-10)
            .unwrap();
        let v2 = cx
            .mdp
            .policy_evaluation(&cx.pi2, &cx.true_reward, 1e-10)
            .unwrap();
        assert_abs_diff_eq!(v1.value(0), -90.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v2.value(0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn optimal_policy_enters_plus_one_state() {
        // Exhaustive oracle over the three start actions: entering s2 is
        // the unique argmax under both rewards.
        let cx = build_counterexample_mdp(1.0, 0.9).unwrap();
        for reward in [&cx.true_reward, &cx.approx_reward] {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for a in 0..3 {
                let pi = Policy::new(vec![a, 0, 0, 0]);
                let v = cx.mdp.policy_evaluation(&pi, reward, 1e-10).unwrap();
                if v.value(0) > best.0 {
                    best = (v.value(0), a);
                }
            }
            let (pi_star, _) = cx.mdp.optimal_policy(reward, 1e-10).unwrap();
            assert_eq!(pi_star.action(0), best.1);
            assert_eq!(pi_star.action(0), cx.expert_policy.action(0));
        }
    }

    #[test]
    fn single_state_optimal_value_is_closed_form() {
        let mdp = Mdp::new(1, 2, vec![vec![vec![(0, 1.0)], vec![(0, 1.0)]]], 0.5, None).unwrap();
        let (pi, v) = mdp.optimal_policy(&[3.0], 1e-12).unwrap();
        assert_eq!(pi.action(0), 0);
        assert_abs_diff_eq!(v.value(0), 3.0 / 0.5, epsilon = 1e-9);
    }

    #[test]
    fn invalid_counterexample_parameters_rejected() {
        assert!(build_counterexample_mdp(-1.0, 0.9).is_err());
        assert!(build_counterexample_mdp(0.0, 0.9).is_err());
        assert!(build_counterexample_mdp(1.0, 1.0).is_err());
    }

    #[test]
    fn policy_evaluation_rejects_dimension_mismatch() {
        let mdp = two_state_mdp();
        let err = mdp
            .policy_evaluation(&Policy::new(vec![0, 0]), &[0.0], 1e-8)
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    fn random_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> Mdp {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut transitions = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            let mut per_action = Vec::with_capacity(n_actions);
            for _ in 0..n_actions {
                let mut row: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>()).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= sum);
                // Renormalize exactly by dumping the rounding error on the
                // largest entry.
                let err = 1.0 - row.iter().sum::<f64>();
                let imax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                row[imax] += err;
                per_action.push(row.iter().copied().enumerate().collect());
            }
            transitions.push(per_action);
        }
        Mdp::new(n_states, n_actions, transitions, gamma, None).unwrap()
    }

    #[test]
    fn value_iteration_contracts() {
        use rand::{Rng, SeedableRng};
        for seed in 0..5u64 {
            let mdp = random_mdp(seed, 8, 3, 0.9);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let reward: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() - 0.5).collect();
            let mut values = vec![0.0; 8];
            let mut prev_delta = f64::INFINITY;
            for _ in 0..50 {
                let (next, delta) = mdp.bellman_backup(&reward, &values);
                assert!(delta <= mdp.gamma() * prev_delta + 1e-12);
                prev_delta = delta;
                values = next;
            }
        }
    }

    #[test]
    fn optimal_policy_dominates_random_policies() {
        use rand::{Rng, SeedableRng};
        for seed in 0..20u64 {
            let n = 4 + (seed as usize % 7);
            let na = 2 + (seed as usize % 2);
            let mdp = random_mdp(seed, n, na, 0.85);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed * 31 + 7);
            let reward: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let (_, v_star) = mdp.optimal_policy(&reward, 1e-12).unwrap();
            for _ in 0..50 {
                let pi = Policy::new((0..n).map(|_| rng.gen_range(0..na)).collect());
                let v = mdp.policy_evaluation(&pi, &reward, 1e-10).unwrap();
                for s in 0..n {
                    assert!(
                        v_star.value(s) >= v.value(s) - 1e-8,
                        "seed {seed} state {s}: {} < {}",
                        v_star.value(s),
                        v.value(s)
                    );
                }
            }
        }
    }
}
