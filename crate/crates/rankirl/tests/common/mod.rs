//! Shared helpers for the acceptance suite: a brute-force oracle for the
//! sum-of-margins program at low dimension, plus random problem
//! generators.

use rand::Rng;
use rankirl::features::Mu;
use rankirl::mdp::Mdp;

/// Brute-force optimum of the sum-of-margins objective for `d <= 2`.
///
/// The program is positively homogeneous in `(w, a, b, slacks)`, so the
/// minimum over the unit ball is `min(0, min over the unit sphere)`.
/// Directions are enumerated on a 0.001-radian grid (`{-1, +1}` in one
/// dimension); for each fixed `w` the remaining problem is a linear
/// program whose optimal thresholds sit on score values, so thresholds
/// are enumerated exactly over the score set.
pub fn oracle_objective(mus: &[Mu], c: f64) -> f64 {
    let d = mus[0].vector.len();
    assert!(d <= 2, "oracle only supports d <= 2");
    let mut best: f64 = 0.0;
    match d {
        1 => {
            for w in [-1.0, 1.0] {
                best = best.min(fixed_w_objective(mus, c, &[w]));
            }
        }
        2 => {
            let steps = (std::f64::consts::TAU / 0.001).ceil() as usize;
            for i in 0..steps {
                let theta = i as f64 * 0.001;
                let w = [theta.cos(), theta.sin()];
                best = best.min(fixed_w_objective(mus, c, &w));
            }
        }
        _ => unreachable!(),
    }
    best
}

/// Exact LP value for a fixed direction: enumerate all monotone
/// threshold tuples `a_1 <= b_1 <= ... <= a_{k-1} <= b_{k-1}` over the
/// score set and charge the implied slacks.
fn fixed_w_objective(mus: &[Mu], c: f64, w: &[f64]) -> f64 {
    let k = mus.iter().map(|m| m.rank).max().unwrap();
    let scores: Vec<(usize, f64)> = mus
        .iter()
        .map(|m| {
            let s: f64 = m.vector.iter().zip(w).map(|(x, y)| x * y).sum();
            (m.rank, s)
        })
        .collect();
    let mut candidates: Vec<f64> = scores.iter().map(|&(_, s)| s).collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let mut thresholds = vec![0.0; 2 * (k - 1)];
    let mut best = f64::INFINITY;
    enumerate_thresholds(&candidates, 0, f64::NEG_INFINITY, &mut thresholds, &mut |t| {
        let mut obj = 0.0;
        for r in 1..k {
            let (a, b) = (t[2 * (r - 1)], t[2 * (r - 1) + 1]);
            obj += a - b;
            for &(rank, s) in &scores {
                if rank == r {
                    obj += c * (s - a).max(0.0);
                }
                if rank == r + 1 {
                    obj += c * (b - s).max(0.0);
                }
            }
        }
        if obj < best {
            best = obj;
        }
    });
    best
}

fn enumerate_thresholds(
    candidates: &[f64],
    index: usize,
    lower: f64,
    thresholds: &mut Vec<f64>,
    visit: &mut impl FnMut(&[f64]),
) {
    if index == thresholds.len() {
        visit(thresholds);
        return;
    }
    for &v in candidates {
        if v >= lower {
            thresholds[index] = v;
            enumerate_thresholds(candidates, index + 1, v, thresholds, visit);
        }
    }
}

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

/// Random ranked instance within the oracle's reach: `d <= 2`,
/// `k <= 3`, at most 6 points, every rank non-empty.
pub fn random_instance<R: Rng>(rng: &mut R) -> Vec<Mu> {
    let d = rng.gen_range(1..=2);
    let k = rng.gen_range(2..=3);
    let n = rng.gen_range(k..=6);
    let mut ranks: Vec<usize> = (1..=k).collect();
    for _ in k..n {
        ranks.push(rng.gen_range(1..=k));
    }
    ranks
        .into_iter()
        .enumerate()
        .map(|(i, rank)| Mu {
            vector: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            rank,
            source_id: format!("m{i}"),
        })
        .collect()
}

pub fn mu(id: &str, rank: usize, vector: &[f64]) -> Mu {
    Mu {
        vector: vector.to_vec(),
        rank,
        source_id: id.to_string(),
    }
}
