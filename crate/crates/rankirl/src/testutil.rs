//! Shared helpers for unit tests.

use crate::mdp::Mdp;
use rand::Rng;

/// Random dense MDP with rows renormalized to sum to exactly 1.
pub fn random_mdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> Mdp {
    let mut transitions = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let mut per_action = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let mut row: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
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
