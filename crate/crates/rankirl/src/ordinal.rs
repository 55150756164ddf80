//! Sum-of-margins ordinal regression over ranked feature expectations.
//!
//! Solves, over `||w|| <= 1`, thresholds `a_r <= b_r <= a_{r+1}` and
//! nonnegative slacks:
//!
//! ```text
//! minimize  sum_r (a_r - b_r) + C * sum(slacks)
//! s.t.      w.mu_i <= a_r + eps_i        for mu_i in rank r
//!           b_r - sig_i <= w.mu_i        for mu_i in rank r+1
//! ```
//!
//! Internal rank convention: higher rank index = better demonstrator =
//! higher score `w.mu`.
//!
//! Method: for fixed `w` the thresholds and slacks form a chain of convex
//! piecewise-linear one-dimensional problems whose optimum lies on the
//! score grid; an exact dynamic program solves it. The resulting value
//! `h(w)` is convex and positively homogeneous in `w`, so the outer
//! problem is minimized over the unit ball with [`crate::opt`].
//!
//! Tie-breaking inside the DP is lexicographic: objective, then fewest
//! instances with positive slack, then widest total margin. On separable
//! data this pins `a_r` to the top score of rank `r` and `b_r` to the
//! bottom score of rank `r+1` with zero slack; on data with a misranked
//! instance it concentrates the full violation on that instance's slack,
//! which is what the pruning and incremental-repair procedures read.

use crate::features::{FeatureMap, Mu};
use crate::opt::{self, BallMinOptions};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Objective values closer to zero than this are treated as "no profitable
/// ordering direction"; margins below it count as collapsed.
pub const DEGENERATE_TOL: f64 = 1e-9;

/// Feature expectations with contiguous rank labels `1..=k` and the slack
/// trade-off constant `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedDataset {
    mus: Vec<Mu>,
    k: usize,
    c: f64,
}

impl RankedDataset {
    pub fn new(mus: Vec<Mu>, c: f64) -> Result<Self> {
        if mus.is_empty() {
            return Err(Error::invalid("dataset must contain at least one mu"));
        }
        if !(c > 0.0) {
            return Err(Error::invalid(format!("C must be positive, got {c}")));
        }
        let dim = mus[0].vector.len();
        let k = mus.iter().map(|m| m.rank).max().unwrap_or(0);
        let mut counts = vec![0usize; k + 1];
        let mut seen_ids = std::collections::BTreeSet::new();
        for mu in &mus {
            if mu.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "mu vector",
                    expected: dim,
                    got: mu.vector.len(),
                });
            }
            if mu.rank == 0 || mu.rank > k {
                return Err(Error::invalid(format!(
                    "rank {} out of range 1..={k}",
                    mu.rank
                )));
            }
            counts[mu.rank] += 1;
            if !seen_ids.insert(mu.source_id.clone()) {
                return Err(Error::invalid(format!(
                    "duplicate source_id {:?}",
                    mu.source_id
                )));
            }
        }
        if let Some(rank) = (1..=k).find(|&r| counts[r] == 0) {
            return Err(Error::EmptyRank { rank });
        }
        Ok(RankedDataset { mus, k, c })
    }

    pub fn mus(&self) -> &[Mu] {
        &self.mus
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.mus[0].vector.len()
    }

    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    fn rank_size(&self, rank: usize) -> usize {
        self.mus.iter().filter(|m| m.rank == rank).count()
    }

    /// The program is unbounded when `C * |rank_r| < 1` for some rank:
    /// pushing a threshold to infinity then pays less in slack than it
    /// gains in margin.
    fn check_bounded(&self) -> Result<()> {
        for r in 1..=self.k {
            let n = self.rank_size(r) as f64;
            if self.c * n < 1.0 - 1e-12 {
                return Err(Error::invalid(format!(
                    "C = {} too small for rank {r} with {n} members (need C * n >= 1, \
                     otherwise the objective is unbounded)",
                    self.c
                )));
            }
        }
        Ok(())
    }
}

/// Solution of the sum-of-margins program.
///
/// `a` and `b` hold the `k - 1` threshold pairs; `margins[r-1] = b_r - a_r`
/// is the separation between ranks `r` and `r + 1`. Slack maps are keyed
/// by `source_id`; instances in the lowest rank have no `sig` entry and
/// instances in the highest rank no `eps` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSolution {
    pub w: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub eps: BTreeMap<String, f64>,
    pub sig: BTreeMap<String, f64>,
    pub objective: f64,
    pub margins: Vec<f64>,
    pub degenerate: bool,
    pub feasibility_residual: f64,
}

impl RankSolution {
    /// Total slack charged to one demonstrator.
    pub fn total_slack(&self, source_id: &str) -> f64 {
        self.eps.get(source_id).copied().unwrap_or(0.0)
            + self.sig.get(source_id).copied().unwrap_or(0.0)
    }

    pub fn max_total_slack(&self) -> f64 {
        let mut ids: Vec<&String> = self.eps.keys().chain(self.sig.keys()).collect();
        ids.dedup();
        ids.iter()
            .map(|id| self.total_slack(id))
            .fold(0.0, f64::max)
    }

    pub fn total_margin(&self) -> f64 {
        self.margins.iter().sum()
    }
}

/// Lexicographic DP cost: objective, then number of positive slacks, then
/// negated total margin.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LexCost {
    objective: f64,
    slack_count: usize,
    neg_margin: f64,
}

impl LexCost {
    const INF: LexCost = LexCost {
        objective: f64::INFINITY,
        slack_count: usize::MAX,
        neg_margin: f64::INFINITY,
    };

    fn add(self, other: LexCost) -> LexCost {
        LexCost {
            objective: self.objective + other.objective,
            slack_count: self.slack_count.saturating_add(other.slack_count),
            neg_margin: self.neg_margin + other.neg_margin,
        }
    }

    fn better_than(&self, other: &LexCost) -> bool {
        // Cost-equal faces are compared with a tolerance: two tied
        // configurations generally sum to values differing in the last
        // ulp, and exact comparison would let rounding noise decide the
        // tie instead of the slack-count/margin rules below.
        const TIE_EPS: f64 = 1e-9;
        if (self.objective - other.objective).abs() > TIE_EPS {
            return self.objective < other.objective;
        }
        if self.slack_count != other.slack_count {
            return self.slack_count < other.slack_count;
        }
        if (self.neg_margin - other.neg_margin).abs() > TIE_EPS {
            return self.neg_margin < other.neg_margin;
        }
        self.objective < other.objective
    }
}

/// Exact threshold/slack step for fixed scores. `scores_by_rank[r - 1]`
/// holds the scores `w.mu_i` of rank `r`. Returns the interleaved
/// thresholds `(a_1, b_1, a_2, b_2, ...)` and the objective value.
fn inner_solve(scores_by_rank: &[Vec<f64>], c: f64) -> (Vec<f64>, f64) {
    let k = scores_by_rank.len();
    let m = 2 * (k - 1);

    let mut grid: Vec<f64> = scores_by_rank.iter().flatten().copied().collect();
    grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
    grid.dedup();
    let g = grid.len();

    // var_cost(j, v): contribution of threshold variable j at value v.
    // Even j is a_{j/2 + 1}, odd j is b_{(j-1)/2 + 1}.
    let var_cost = |j: usize, v: f64| -> LexCost {
        if j % 2 == 0 {
            let scores = &scores_by_rank[j / 2];
            let mut slack_sum = 0.0;
            let mut count = 0usize;
            for &s in scores {
                if s > v {
                    slack_sum += s - v;
                    count += 1;
                }
            }
            LexCost {
                objective: v + c * slack_sum,
                slack_count: count,
                neg_margin: v,
            }
        } else {
            let scores = &scores_by_rank[(j - 1) / 2 + 1];
            let mut slack_sum = 0.0;
            let mut count = 0usize;
            for &s in scores {
                if s < v {
                    slack_sum += v - s;
                    count += 1;
                }
            }
            LexCost {
                objective: -v + c * slack_sum,
                slack_count: count,
                neg_margin: -v,
            }
        }
    };

    // DP over the monotone chain a_1 <= b_1 <= a_2 <= ... with candidate
    // values restricted to the score grid (the LP optimum always admits a
    // grid point; tie-breaking picks the canonical one).
    let mut cost = vec![LexCost::INF; g];
    let mut choice = vec![vec![0usize; g]; m];
    for (p, &v) in grid.iter().enumerate() {
        cost[p] = var_cost(0, v);
        choice[0][p] = p;
    }
    for j in 1..m {
        // prefix best of previous layer
        let mut prefix = vec![(LexCost::INF, 0usize); g];
        let mut best = (LexCost::INF, 0usize);
        for p in 0..g {
            if cost[p].better_than(&best.0) {
                best = (cost[p], p);
            }
            prefix[p] = best;
        }
        let mut next = vec![LexCost::INF; g];
        for (p, &v) in grid.iter().enumerate() {
            let (prev_cost, prev_p) = prefix[p];
            next[p] = prev_cost.add(var_cost(j, v));
            choice[j][p] = prev_p;
        }
        cost = next;
    }

    let mut end = 0usize;
    for p in 1..g {
        if cost[p].better_than(&cost[end]) {
            end = p;
        }
    }
    let objective = cost[end].objective;
    let mut thresholds = vec![0.0; m];
    let mut p = end;
    for j in (0..m).rev() {
        thresholds[j] = grid[p];
        p = choice[j][p];
    }
    (thresholds, objective)
}

struct Evaluation {
    objective: f64,
    thresholds: Vec<f64>,
    subgradient: Vec<f64>,
}

fn evaluate_at(data: &RankedDataset, w: &[f64]) -> Evaluation {
    let k = data.k;
    let mut scores_by_rank: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut scores = Vec::with_capacity(data.mus.len());
    for mu in &data.mus {
        let s: f64 = w.iter().zip(&mu.vector).map(|(a, b)| a * b).sum();
        scores_by_rank[mu.rank - 1].push(s);
        scores.push(s);
    }
    let (thresholds, objective) = inner_solve(&scores_by_rank, data.c);

    // Subgradient via the joint-convexity envelope: a valid subgradient
    // in w is the w-part of a joint subgradient whose threshold part
    // vanishes. Strictly violating instances contribute with weight C;
    // instances sitting exactly on a threshold (where the inner optimum
    // places it) share the remaining stationarity weight
    // `1 - C * (#strict violators)` evenly. Skipping the at-threshold
    // instances entirely would return the zero vector on separable data
    // and stall the outer descent at its starting direction.
    const TIE_TOL: f64 = 1e-12;
    let mut grad = vec![0.0; w.len()];
    for r in 1..k {
        let a_r = thresholds[2 * (r - 1)];
        let b_r = thresholds[2 * (r - 1) + 1];
        for pass in 0..2 {
            // pass 0: upper constraints of rank r at a_r (+ direction);
            // pass 1: lower constraints of rank r+1 at b_r (- direction).
            let (rank, threshold, sign) = if pass == 0 {
                (r, a_r, 1.0)
            } else {
                (r + 1, b_r, -1.0)
            };
            let mut n_strict = 0usize;
            let mut ties: Vec<usize> = Vec::new();
            for (i, mu) in data.mus.iter().enumerate() {
                if mu.rank != rank {
                    continue;
                }
                let gap = sign * (scores[i] - threshold);
                if gap > TIE_TOL {
                    n_strict += 1;
                } else if gap >= -TIE_TOL {
                    ties.push(i);
                }
            }
            for (i, mu) in data.mus.iter().enumerate() {
                if mu.rank == rank && sign * (scores[i] - threshold) > TIE_TOL {
                    for (gj, &mj) in grad.iter_mut().zip(&mu.vector) {
                        *gj += sign * data.c * mj;
                    }
                }
            }
            let remaining = (1.0 - data.c * n_strict as f64).max(0.0);
            if !ties.is_empty() && remaining > 0.0 {
                let weight = (remaining / ties.len() as f64).min(data.c);
                for &i in &ties {
                    for (gj, &mj) in grad.iter_mut().zip(&data.mus[i].vector) {
                        *gj += sign * weight * mj;
                    }
                }
            }
        }
    }
    Evaluation {
        objective,
        thresholds,
        subgradient: grad,
    }
}

fn rank_centroids(data: &RankedDataset) -> Vec<Vec<f64>> {
    let d = data.dim();
    let mut sums = vec![vec![0.0; d]; data.k];
    let mut counts = vec![0usize; data.k];
    for mu in &data.mus {
        counts[mu.rank - 1] += 1;
        for (s, &v) in sums[mu.rank - 1].iter_mut().zip(&mu.vector) {
            *s += v;
        }
    }
    for (sum, &count) in sums.iter_mut().zip(&counts) {
        sum.iter_mut().for_each(|v| *v /= count as f64);
    }
    sums
}

fn initial_directions(data: &RankedDataset) -> Vec<Vec<f64>> {
    let centroids = rank_centroids(data);
    let d = data.dim();
    let mut inits = Vec::new();
    for r in 0..data.k - 1 {
        let diff: Vec<f64> = (0..d).map(|j| centroids[r + 1][j] - centroids[r][j]).collect();
        inits.push(diff);
    }
    if data.k > 2 {
        let diff: Vec<f64> = (0..d)
            .map(|j| centroids[data.k - 1][j] - centroids[0][j])
            .collect();
        inits.push(diff);
    }
    // Pairwise differences between individual members of distinct ranks
    // (better minus worse), capped: the optimum of a piecewise-linear
    // objective often sits near a direction separating two specific
    // instances rather than the rank centroids.
    const MAX_PAIR_INITS: usize = 48;
    'outer: for (i, hi) in data.mus.iter().enumerate() {
        for lo in &data.mus[i + 1..] {
            if hi.rank == lo.rank {
                continue;
            }
            let (hi, lo) = if hi.rank > lo.rank { (hi, lo) } else { (lo, hi) };
            let diff: Vec<f64> = (0..d).map(|j| hi.vector[j] - lo.vector[j]).collect();
            inits.push(diff);
            if inits.len() >= MAX_PAIR_INITS {
                break 'outer;
            }
        }
    }
    inits
}

fn assemble_solution(data: &RankedDataset, w: Vec<f64>, degenerate: bool) -> RankSolution {
    let eval = evaluate_at(data, &w);
    let k = data.k;
    let mut a = Vec::with_capacity(k - 1);
    let mut b = Vec::with_capacity(k - 1);
    for r in 0..k - 1 {
        a.push(eval.thresholds[2 * r]);
        b.push(eval.thresholds[2 * r + 1]);
    }
    let margins: Vec<f64> = a.iter().zip(&b).map(|(ar, br)| br - ar).collect();

    let mut eps = BTreeMap::new();
    let mut sig = BTreeMap::new();
    for mu in &data.mus {
        let s: f64 = w.iter().zip(&mu.vector).map(|(x, y)| x * y).sum();
        if mu.rank <= k - 1 {
            eps.insert(mu.source_id.clone(), (s - a[mu.rank - 1]).max(0.0));
        }
        if mu.rank >= 2 {
            sig.insert(mu.source_id.clone(), (b[mu.rank - 2] - s).max(0.0));
        }
    }

    let mut solution = RankSolution {
        w,
        a,
        b,
        eps,
        sig,
        objective: eval.objective,
        margins,
        degenerate,
        feasibility_residual: 0.0,
    };
    solution.feasibility_residual = feasibility_residual(data, &solution);
    solution
}

/// Max violation of any program constraint by a candidate solution.
pub fn feasibility_residual(data: &RankedDataset, sol: &RankSolution) -> f64 {
    let k = data.k;
    let mut residual: f64 = 0.0;
    residual = residual.max(opt::norm(&sol.w) - 1.0);
    for r in 0..k - 1 {
        residual = residual.max(sol.a[r] - sol.b[r]);
        if r + 1 < k - 1 {
            residual = residual.max(sol.b[r] - sol.a[r + 1]);
        }
    }
    for mu in &data.mus {
        let s: f64 = sol.w.iter().zip(&mu.vector).map(|(x, y)| x * y).sum();
        if mu.rank <= k - 1 {
            let e = sol.eps.get(&mu.source_id).copied().unwrap_or(0.0);
            residual = residual.max(s - sol.a[mu.rank - 1] - e);
            residual = residual.max(-e);
        }
        if mu.rank >= 2 {
            let sg = sol.sig.get(&mu.source_id).copied().unwrap_or(0.0);
            residual = residual.max(sol.b[mu.rank - 2] - sg - s);
            residual = residual.max(-sg);
        }
    }
    residual.max(0.0)
}

/// Solve the sum-of-margins program.
///
/// The returned point is always feasible (thresholds and slacks come from
/// the exact inner step at the final `w`). When no direction yields a
/// profitable ordering, `w = 0` is returned with the `degenerate` flag set
/// instead of an arbitrary direction. Output is deterministic for fixed
/// input.
pub fn solve_sum_of_margins(data: &RankedDataset, tol: f64) -> Result<RankSolution> {
    if data.k < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 ranks, got {}",
            data.k
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    data.check_bounded()?;

    let dim = data.dim();
    let inits = initial_directions(data);
    let opts = BallMinOptions::default();
    let result = opt::minimize_on_ball(dim, &inits, |w| {
        let eval = evaluate_at(data, w);
        (eval.objective, eval.subgradient)
    }, &opts);

    if result.value < -DEGENERATE_TOL {
        return Ok(assemble_solution(data, result.w, false));
    }

    // The optimum does not beat zero. Some datasets still admit a zero
    // objective with genuinely positive margins (margin gains exactly
    // cancelled by an outlier's slack); prefer such a direction over the
    // uninformative w = 0 so downstream slack diagnostics see the outlier.
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    for init in &inits {
        let mut w = init.clone();
        let n = opt::norm(&w);
        if n > 1e-300 {
            w.iter_mut().for_each(|x| *x /= n);
            candidates.push(w);
        }
    }
    if opt::norm(&result.w) > 1e-300 {
        candidates.push(result.w);
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for w in candidates {
        let eval = evaluate_at(data, &w);
        if eval.objective > DEGENERATE_TOL {
            continue;
        }
        let margin: f64 = (0..data.k - 1)
            .map(|r| eval.thresholds[2 * r + 1] - eval.thresholds[2 * r])
            .sum();
        if best.as_ref().map_or(true, |(m, _)| margin > *m) {
            best = Some((margin, w));
        }
    }
    match best {
        Some((margin, w)) if margin > DEGENERATE_TOL => Ok(assemble_solution(data, w, false)),
        _ => Ok(assemble_solution(data, vec![0.0; dim], true)),
    }
}

/// Linear reward recovery: `R(s) = w . phi(s)`.
pub fn reward_from_w(w: &[f64], fmap: &FeatureMap) -> Result<Vec<f64>> {
    if w.len() != fmap.dim() {
        return Err(Error::DimensionMismatch {
            context: "reward weight vector",
            expected: fmap.dim(),
            got: w.len(),
        });
    }
    Ok((0..fmap.n_states())
        .map(|s| w.iter().zip(fmap.phi(s)).map(|(a, b)| a * b).sum())
        .collect())
}

/// Result of [`prune_misranked`].
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub dataset: RankedDataset,
    /// Removed demonstrators, in removal order.
    pub removed: Vec<String>,
    /// Largest total slack remaining after the last solve.
    pub residual_slack: f64,
    /// True when `max_removals` ran out before all slacks cleared.
    pub budget_exhausted: bool,
}

/// Repeatedly solve and drop the demonstrator with the largest total slack
/// until every slack is at most `slack_tol` or the removal budget runs
/// out. Slack ties break toward the lowest `source_id`. A demonstrator
/// that is the sole member of its rank is skipped in favour of the next
/// highest slack; if no removable demonstrator remains, the rank-emptying
/// removal is refused with an error.
pub fn prune_misranked(
    data: &RankedDataset,
    slack_tol: f64,
    max_removals: usize,
    tol: f64,
) -> Result<(PruneOutcome, RankSolution)> {
    let mut current = data.clone();
    let mut removed = Vec::new();
    loop {
        let solution = solve_sum_of_margins(&current, tol)?;
        let mut slacks: Vec<(String, f64)> = current
            .mus
            .iter()
            .map(|mu| (mu.source_id.clone(), solution.total_slack(&mu.source_id)))
            .collect();
        slacks.sort_by(|x, y| {
            y.1.partial_cmp(&x.1)
                .unwrap()
                .then_with(|| x.0.cmp(&y.0))
        });
        let worst = slacks.first().map(|(_, s)| *s).unwrap_or(0.0);
        if worst <= slack_tol {
            return Ok((
                PruneOutcome {
                    dataset: current,
                    removed,
                    residual_slack: worst,
                    budget_exhausted: false,
                },
                solution,
            ));
        }
        if removed.len() >= max_removals {
            return Ok((
                PruneOutcome {
                    dataset: current,
                    removed,
                    residual_slack: worst,
                    budget_exhausted: true,
                },
                solution,
            ));
        }
        let mut removed_one = false;
        for (id, slack) in &slacks {
            if *slack <= slack_tol {
                break;
            }
            let rank = current
                .mus
                .iter()
                .find(|m| &m.source_id == id)
                .map(|m| m.rank)
                .expect("slack entry for unknown source");
            if current.rank_size(rank) < 2 {
                continue;
            }
            let remaining: Vec<Mu> = current
                .mus
                .iter()
                .filter(|m| &m.source_id != id)
                .cloned()
                .collect();
            current = RankedDataset::new(remaining, current.c)?;
            removed.push(id.clone());
            removed_one = true;
            break;
        }
        if !removed_one {
            let rank = current
                .mus
                .iter()
                .find(|m| m.source_id == slacks[0].0)
                .map(|m| m.rank)
                .unwrap_or(0);
            return Err(Error::EmptyRank { rank });
        }
    }
}

/// Result of [`incremental_build`].
#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub dataset: RankedDataset,
    /// Rejected candidates, in attempt order.
    pub rejected: Vec<String>,
}

/// Grow a clean seed dataset by attempting candidates in order. A
/// candidate is kept only if the re-solved program stays clean: every
/// slack at most `slack_tol` and no previously positive margin collapsing
/// (an exactly duplicated score at a conflicting rank shows up as a
/// collapsed margin rather than slack, so slacks alone cannot reject it).
pub fn incremental_build(
    seed: &RankedDataset,
    candidates: &[Mu],
    slack_tol: f64,
    tol: f64,
) -> Result<BuildOutcome> {
    let seed_solution = solve_sum_of_margins(seed, tol)?;
    if seed_solution.max_total_slack() > slack_tol {
        return Err(Error::UnsolvableSeed(format!(
            "seed has max slack {} > {slack_tol}",
            seed_solution.max_total_slack()
        )));
    }

    let mut current = seed.clone();
    let mut current_solution = seed_solution;
    let mut rejected = Vec::new();
    for cand in candidates {
        let mut mus = current.mus.clone();
        mus.push(cand.clone());
        let tentative = match RankedDataset::new(mus, current.c) {
            Ok(ds) => ds,
            Err(_) => {
                rejected.push(cand.source_id.clone());
                continue;
            }
        };
        let solution = solve_sum_of_margins(&tentative, tol)?;
        let collapse_tol = slack_tol.max(DEGENERATE_TOL);
        let margin_collapsed = current_solution
            .margins
            .iter()
            .zip(&solution.margins)
            .any(|(old, new)| *old > collapse_tol && *new <= collapse_tol);
        if solution.max_total_slack() <= slack_tol && !margin_collapsed && !solution.degenerate {
            current = tentative;
            current_solution = solution;
        } else {
            rejected.push(cand.source_id.clone());
        }
    }
    Ok(BuildOutcome {
        dataset: current,
        rejected,
    })
}
