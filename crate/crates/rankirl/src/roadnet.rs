//! Synthetic road-network pipeline: the taxi application at desk scale.
//!
//! A generated street grid stands in for the real city. Each road
//! segment contributes two MDP states (one per travel direction).
//! Simulated drivers with varying knowledge of planted pickup hotspots
//! cruise the network; they are ranked by the fraction of time spent
//! without a passenger, the city is decomposed into low-dimensional
//! clusters by cutting the most traversed intersections, each cluster is
//! solved independently from the ranked vacant-cruising feature
//! expectations, and the cluster rewards are recombined into a global
//! reward and value map. The planted hotspot quality gives a ground
//! truth to correlate the recovered values against.

use crate::features::{empirical_mu, FeatureMap, Mu, Trajectory};
use crate::mdp::{Mdp, ValueFunction};
use crate::ordinal::{solve_sum_of_margins, RankSolution, RankedDataset};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// One road segment between two intersections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// Directed-segment street graph. State `2 * seg + dir` is segment `seg`
/// traversed a->b (`dir = 0`) or b->a (`dir = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub segments: Vec<Segment>,
    pub n_intersections: usize,
    /// Planted ground-truth pickup quality per segment, in [0, 1].
    pub pickup_quality: Vec<f64>,
    /// Per-intersection traversal counts (zero until logs are counted).
    pub traversal_counts: Vec<u64>,
    /// Incident segment ids per intersection (derived).
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

impl RoadNetwork {
    pub fn from_parts(
        segments: Vec<Segment>,
        n_intersections: usize,
        pickup_quality: Vec<f64>,
    ) -> Result<Self> {
        if pickup_quality.len() != segments.len() {
            return Err(Error::DimensionMismatch {
                context: "pickup quality",
                expected: segments.len(),
                got: pickup_quality.len(),
            });
        }
        let mut adjacency = vec![Vec::new(); n_intersections];
        for (i, seg) in segments.iter().enumerate() {
            if seg.a >= n_intersections || seg.b >= n_intersections || seg.a == seg.b {
                return Err(Error::invalid(format!(
                    "segment {i} endpoints ({}, {}) invalid for {n_intersections} intersections",
                    seg.a, seg.b
                )));
            }
            if !(seg.length > 0.0) {
                return Err(Error::invalid(format!("segment {i} has non-positive length")));
            }
            adjacency[seg.a].push(i);
            adjacency[seg.b].push(i);
        }
        let traversal_counts = vec![0; n_intersections];
        let net = RoadNetwork {
            segments,
            n_intersections,
            pickup_quality,
            traversal_counts,
            adjacency,
        };
        if !net.is_connected() {
            return Err(Error::invalid("road network is not connected"));
        }
        Ok(net)
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn n_states(&self) -> usize {
        2 * self.segments.len()
    }

    pub fn state_id(&self, segment: usize, dir: usize) -> usize {
        2 * segment + dir
    }

    pub fn segment_of(&self, state: usize) -> usize {
        state / 2
    }

    /// Intersection the oriented segment arrives at.
    pub fn head(&self, state: usize) -> usize {
        let seg = &self.segments[state / 2];
        if state % 2 == 0 {
            seg.b
        } else {
            seg.a
        }
    }

    /// Intersection the oriented segment departs from.
    pub fn tail(&self, state: usize) -> usize {
        let seg = &self.segments[state / 2];
        if state % 2 == 0 {
            seg.a
        } else {
            seg.b
        }
    }

    /// Oriented segments reachable after this one: everything departing
    /// from its head intersection (the U-turn back along the same
    /// segment included), sorted by state id.
    pub fn successors(&self, state: usize) -> Vec<usize> {
        let node = self.head(state);
        let mut next: Vec<usize> = self.adjacency[node]
            .iter()
            .flat_map(|&seg| {
                let s = &self.segments[seg];
                let dir = if s.a == node { 0 } else { 1 };
                Some(self.state_id(seg, dir))
            })
            .collect();
        next.sort_unstable();
        next
    }

    fn is_connected(&self) -> bool {
        if self.n_intersections == 0 {
            return false;
        }
        let mut seen = vec![false; self.n_intersections];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(node) = queue.pop_front() {
            for &seg in &self.adjacency[node] {
                let s = &self.segments[seg];
                let other = if s.a == node { s.b } else { s.a };
                if !seen[other] {
                    seen[other] = true;
                    count += 1;
                    queue.push_back(other);
                }
            }
        }
        count == self.n_intersections
    }

    /// The taxi MDP: deterministic turn choices at every intersection.
    /// Action `j` follows the j-th successor (clamped to the out-degree,
    /// so every state accepts the full action range).
    pub fn build_mdp(&self, gamma: f64) -> Result<(Mdp, FeatureMap)> {
        let n = self.n_states();
        let succ: Vec<Vec<usize>> = (0..n).map(|s| self.successors(s)).collect();
        let n_actions = succ.iter().map(|v| v.len()).max().unwrap_or(1).max(1);
        let transitions: Vec<Vec<Vec<(usize, f64)>>> = (0..n)
            .map(|s| {
                (0..n_actions)
                    .map(|a| {
                        let next = succ[s][a.min(succ[s].len() - 1)];
                        vec![(next, 1.0)]
                    })
                    .collect()
            })
            .collect();
        let mdp = Mdp::new(n, n_actions, transitions, gamma, None)?;
        Ok((mdp, FeatureMap::lossless(n)))
    }
}

/// Count how often each intersection is traversed in the logs (one count
/// per step that passes through it).
pub fn count_traversals(net: &RoadNetwork, logs: &[DriverLog]) -> Vec<u64> {
    let mut counts = vec![0u64; net.n_intersections];
    for log in logs {
        for traj in &log.trajectories {
            for pair in traj.states.windows(2) {
                counts[net.head(pair[0])] += 1;
            }
        }
    }
    counts
}

fn union_find_root(parent: &mut Vec<usize>, mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Generate a connected grid-with-diagonals street network with planted
/// pickup hotspots. Deterministic per seed.
pub fn generate_network(n_segments: usize, topology_seed: u64) -> Result<RoadNetwork> {
    if n_segments < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 segments, got {n_segments}"
        )));
    }
    // m x m intersection grid with m^2 - 1 <= n_segments, so a spanning
    // tree fits; candidate edges (orthogonal + one diagonal per cell)
    // number 3m^2 - 4m + 1 >= n_segments.
    let m = ((n_segments + 1) as f64).sqrt().floor() as usize;
    let m = m.max(2);
    let node = |r: usize, c: usize| r * m + c;
    let mut candidates = Vec::new();
    for r in 0..m {
        for c in 0..m {
            if c + 1 < m {
                candidates.push((node(r, c), node(r, c + 1)));
            }
            if r + 1 < m {
                candidates.push((node(r, c), node(r + 1, c)));
            }
            if r + 1 < m && c + 1 < m {
                candidates.push((node(r, c), node(r + 1, c + 1)));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(topology_seed);
    candidates.shuffle(&mut rng);

    let n_nodes = m * m;
    let mut parent: Vec<usize> = (0..n_nodes).collect();
    let mut chosen = Vec::with_capacity(n_segments);
    let mut leftover = Vec::new();
    for (a, b) in candidates {
        let (ra, rb) = (
            union_find_root(&mut parent, a),
            union_find_root(&mut parent, b),
        );
        if ra != rb {
            parent[ra] = rb;
            chosen.push((a, b));
        } else {
            leftover.push((a, b));
        }
    }
    for edge in leftover {
        if chosen.len() >= n_segments {
            break;
        }
        chosen.push(edge);
    }
    debug_assert!(chosen.len() >= n_segments);
    chosen.truncate(n_segments);

    let segments: Vec<Segment> = chosen
        .into_iter()
        .map(|(a, b)| Segment {
            a,
            b,
            length: rng.gen_range(50.0..200.0),
        })
        .collect();

    // Plant hotspots and spread their influence geometrically over the
    // segment adjacency graph.
    let n_hot = (n_segments / 25).max(3);
    let mut hotspot_ids: Vec<usize> = (0..n_segments).collect();
    hotspot_ids.shuffle(&mut rng);
    hotspot_ids.truncate(n_hot);
    let amplitudes: Vec<f64> = hotspot_ids.iter().map(|_| rng.gen_range(0.5..1.0)).collect();

    let mut adjacency = vec![Vec::new(); n_nodes];
    for (i, seg) in segments.iter().enumerate() {
        adjacency[seg.a].push(i);
        adjacency[seg.b].push(i);
    }
    let mut pickup_quality = vec![0.02; n_segments];
    for (&hot, &amp) in hotspot_ids.iter().zip(&amplitudes) {
        // BFS distance in segment hops.
        let mut dist = vec![usize::MAX; n_segments];
        dist[hot] = 0;
        let mut queue = VecDeque::from([hot]);
        while let Some(seg) = queue.pop_front() {
            if dist[seg] >= 6 {
                continue;
            }
            for &end in &[segments[seg].a, segments[seg].b] {
                for &other in &adjacency[end] {
                    if dist[other] == usize::MAX {
                        dist[other] = dist[seg] + 1;
                        queue.push_back(other);
                    }
                }
            }
        }
        for (q, &d) in pickup_quality.iter_mut().zip(&dist) {
            if d != usize::MAX {
                *q += amp * 0.6_f64.powi(d as i32);
            }
        }
    }
    for q in &mut pickup_quality {
        *q = q.min(1.0);
    }

    RoadNetwork::from_parts(segments, n_nodes, pickup_quality)
}

/// One simulated shift: visited oriented-segment states with per-step
/// occupancy and timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedTrajectory {
    pub states: Vec<usize>,
    pub occupied: Vec<bool>,
    pub timestamps: Vec<u64>,
}

/// A driver's full log plus the ranking signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverLog {
    pub driver_id: String,
    pub trajectories: Vec<LoggedTrajectory>,
    /// Fraction of logged steps spent without a passenger.
    pub vacancy_ratio: f64,
}

impl DriverLog {
    /// Recompute the vacancy ratio from the raw log.
    pub fn recompute_vacancy(&self) -> f64 {
        let mut total = 0usize;
        let mut vacant = 0usize;
        for traj in &self.trajectories {
            total += traj.occupied.len();
            vacant += traj.occupied.iter().filter(|&&o| !o).count();
        }
        if total == 0 {
            1.0
        } else {
            vacant as f64 / total as f64
        }
    }
}

/// Three behavioral tiers (low / mid / high pickup knowledge) with a
/// small within-tier spread, worst first. Tiers rather than a continuum:
/// the ranking margins are carried by the drivers at rank boundaries,
/// and those are only informative when the tiers are genuinely distinct.
pub fn default_skill_profile(n_drivers: usize) -> Vec<f64> {
    if n_drivers <= 1 {
        return vec![1.0; n_drivers];
    }
    (0..n_drivers)
        .map(|i| {
            let tier = i * 3 / n_drivers;
            let base = [0.0, 0.3, 1.0][tier];
            let tier_start = (tier * n_drivers).div_ceil(3);
            let jitter = 0.01 * (i - tier_start) as f64;
            (base + jitter).clamp(0.0, 1.0)
        })
        .collect()
}

const SIM_TRAJECTORIES: usize = 8;
const SIM_STEPS: usize = 1000;

/// Simulate one driver per skill entry. A vacant driver picks the next
/// segment with probability proportional to `(quality + 0.01)^(8 *
/// skill)`: skill 0 walks uniformly, higher skill concentrates on
/// high-quality streets while staying ergodic (a hard argmax would trap
/// drivers oscillating at local quality maxima). Pickups occur with
/// probability proportional to the planted segment quality; occupied
/// trips wander uniformly for a random number of steps before the
/// dropoff. Deterministic per seed.
pub fn simulate_drivers(net: &RoadNetwork, skills: &[f64], seed: u64) -> Result<Vec<DriverLog>> {
    if skills.is_empty() {
        return Err(Error::invalid("need at least one driver"));
    }
    for &s in skills {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::invalid(format!("skill {s} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logs = Vec::with_capacity(skills.len());
    for (i, &skill) in skills.iter().enumerate() {
        let mut trajectories = Vec::with_capacity(SIM_TRAJECTORIES);
        for _ in 0..SIM_TRAJECTORIES {
            let mut state = rng.gen_range(0..net.n_states());
            let mut occupied = false;
            let mut trip_left = 0usize;
            let mut states = Vec::with_capacity(SIM_STEPS);
            let mut occ = Vec::with_capacity(SIM_STEPS);
            let mut ts = Vec::with_capacity(SIM_STEPS);
            for t in 0..SIM_STEPS {
                states.push(state);
                occ.push(occupied);
                ts.push(t as u64);
                if occupied {
                    trip_left -= 1;
                    if trip_left == 0 {
                        occupied = false;
                    }
                } else {
                    let p = 0.15 * net.pickup_quality[net.segment_of(state)];
                    if rng.gen_bool(p.clamp(0.0, 1.0)) {
                        occupied = true;
                        trip_left = rng.gen_range(5..20);
                    }
                }
                let next = net.successors(state);
                state = if occupied || skill == 0.0 {
                    next[rng.gen_range(0..next.len())]
                } else {
                    let weights: Vec<f64> = next
                        .iter()
                        .map(|&s| {
                            (net.pickup_quality[net.segment_of(s)] + 0.01).powf(10.0 * skill)
                        })
                        .collect();
                    let total: f64 = weights.iter().sum();
                    let mut draw = rng.gen_range(0.0..total);
                    let mut pick = next[next.len() - 1];
                    for (&s, &w) in next.iter().zip(&weights) {
                        if draw < w {
                            pick = s;
                            break;
                        }
                        draw -= w;
                    }
                    pick
                };
            }
            trajectories.push(LoggedTrajectory {
                states,
                occupied: occ,
                timestamps: ts,
            });
        }
        let mut log = DriverLog {
            driver_id: format!("driver-{i:02}"),
            trajectories,
            vacancy_ratio: 0.0,
        };
        log.vacancy_ratio = log.recompute_vacancy();
        logs.push(log);
    }
    Ok(logs)
}

/// Driver-to-rank assignment (internal convention: higher = better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub assignments: Vec<(String, usize)>,
    /// True when drivers with equal vacancy ratios straddle a rank
    /// boundary, i.e. the split is decided by driver id alone.
    pub rank_ties: bool,
    pub k: usize,
    pub per_rank: usize,
}

/// Rank drivers by ascending vacancy ratio: the `per_rank` lowest become
/// the best rank, and so on; drivers beyond `k * per_rank` are excluded.
/// Ties break by driver id.
pub fn rank_drivers(logs: &[DriverLog], k: usize, per_rank: usize) -> Result<Ranking> {
    if k < 2 || per_rank == 0 {
        return Err(Error::invalid("need k >= 2 ranks and per_rank >= 1"));
    }
    if logs.len() < k * per_rank {
        return Err(Error::invalid(format!(
            "need {} drivers for k={k}, per_rank={per_rank}; got {}",
            k * per_rank,
            logs.len()
        )));
    }
    let mut order: Vec<&DriverLog> = logs.iter().collect();
    order.sort_by(|x, y| {
        x.vacancy_ratio
            .partial_cmp(&y.vacancy_ratio)
            .unwrap()
            .then_with(|| x.driver_id.cmp(&y.driver_id))
    });
    order.truncate(k * per_rank);
    let mut assignments = Vec::with_capacity(k * per_rank);
    let mut rank_ties = false;
    for (i, log) in order.iter().enumerate() {
        let rank = k - i / per_rank;
        if i > 0 && i % per_rank == 0 && order[i - 1].vacancy_ratio == log.vacancy_ratio {
            rank_ties = true;
        }
        assignments.push((log.driver_id.clone(), rank));
    }
    Ok(Ranking {
        assignments,
        rank_ties,
        k,
        per_rank,
    })
}

/// Vacant-cruising feature expectations of one driver: each maximal
/// vacant stretch forms an episode, discounted from its own start, and
/// the episodes are averaged. Occupied driving is the passenger's
/// itinerary, not the driver's choice, so it carries no weight.
pub fn vacant_mu(net: &RoadNetwork, log: &DriverLog, gamma: f64) -> Result<Vec<f64>> {
    let fmap = FeatureMap::lossless(net.n_states());
    let mut episodes = Vec::new();
    for traj in &log.trajectories {
        let mut current: Vec<usize> = Vec::new();
        for (&s, &occ) in traj.states.iter().zip(&traj.occupied) {
            if occ {
                if !current.is_empty() {
                    episodes.push(Trajectory::new(std::mem::take(&mut current))?);
                }
            } else {
                current.push(s);
            }
        }
        if !current.is_empty() {
            episodes.push(Trajectory::new(current)?);
        }
    }
    if episodes.is_empty() {
        return Ok(vec![0.0; net.n_states()]);
    }
    empirical_mu(&episodes, &fmap, gamma)
}

/// Ranked feature expectations of the selected drivers.
pub fn ranked_mus(
    net: &RoadNetwork,
    logs: &[DriverLog],
    ranking: &Ranking,
    gamma: f64,
) -> Result<Vec<Mu>> {
    let mut mus = Vec::with_capacity(ranking.assignments.len());
    for (driver_id, rank) in &ranking.assignments {
        let log = logs
            .iter()
            .find(|l| &l.driver_id == driver_id)
            .ok_or_else(|| Error::invalid(format!("ranked driver {driver_id} not in logs")))?;
        mus.push(Mu {
            vector: vacant_mu(net, log, gamma)?,
            rank: *rank,
            source_id: driver_id.clone(),
        });
    }
    Ok(mus)
}

/// City split into clusters of at most `max_dim` states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Sorted state ids per cluster.
    pub clusters: Vec<Vec<usize>>,
    /// Intersections removed, in cut order.
    pub cut_intersections: Vec<usize>,
    /// States of segments touching a cut intersection (sorted).
    pub cut_states: Vec<usize>,
    pub max_dim: usize,
}

fn components_and_clusters(
    net: &RoadNetwork,
    cut: &[bool],
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    // Connected components over uncut intersections; a segment belongs
    // to a cluster iff both endpoints survive.
    let mut comp = vec![usize::MAX; net.n_intersections];
    let mut node_components: Vec<Vec<usize>> = Vec::new();
    for start in 0..net.n_intersections {
        if cut[start] || comp[start] != usize::MAX {
            continue;
        }
        let id = node_components.len();
        let mut nodes = vec![start];
        comp[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for &seg in &net.adjacency[node] {
                let s = &net.segments[seg];
                let other = if s.a == node { s.b } else { s.a };
                if !cut[other] && comp[other] == usize::MAX {
                    comp[other] = id;
                    nodes.push(other);
                    queue.push_back(other);
                }
            }
        }
        node_components.push(nodes);
    }
    let mut clusters = vec![Vec::new(); node_components.len()];
    for (i, seg) in net.segments.iter().enumerate() {
        if !cut[seg.a] && !cut[seg.b] {
            debug_assert_eq!(comp[seg.a], comp[seg.b]);
            clusters[comp[seg.a]].push(net.state_id(i, 0));
            clusters[comp[seg.a]].push(net.state_id(i, 1));
        }
    }
    clusters.retain(|c| !c.is_empty());
    for cluster in &mut clusters {
        cluster.sort_unstable();
    }
    (node_components, clusters)
}

/// Split the network by greedily cutting the most traversed intersection
/// of any oversized component until every cluster has at most `max_dim`
/// states. Ties break toward the lowest intersection id; deterministic.
pub fn decompose(net: &RoadNetwork, logs: &[DriverLog], max_dim: usize) -> Result<Decomposition> {
    if max_dim < 2 {
        return Err(Error::invalid(format!("max_dim {max_dim} < 2")));
    }
    let counts = count_traversals(net, logs);
    let mut cut = vec![false; net.n_intersections];
    let mut cut_order = Vec::new();
    loop {
        let (_, clusters) = components_and_clusters(net, &cut);
        let oversized: Vec<&Vec<usize>> = clusters.iter().filter(|c| c.len() > max_dim).collect();
        if oversized.is_empty() {
            let mut cut_states: Vec<usize> = net
                .segments
                .iter()
                .enumerate()
                .filter(|(_, s)| cut[s.a] || cut[s.b])
                .flat_map(|(i, _)| [net.state_id(i, 0), net.state_id(i, 1)])
                .collect();
            cut_states.sort_unstable();
            return Ok(Decomposition {
                clusters,
                cut_intersections: cut_order,
                cut_states,
                max_dim,
            });
        }
        // Cut the busiest surviving intersection of the first oversized
        // cluster (lowest id on count ties).
        let cluster = oversized[0];
        let mut best: Option<usize> = None;
        for &state in cluster {
            let seg = &net.segments[net.segment_of(state)];
            for &node in &[seg.a, seg.b] {
                if cut[node] {
                    continue;
                }
                best = match best {
                    None => Some(node),
                    Some(prev) => {
                        if counts[node] > counts[prev]
                            || (counts[node] == counts[prev] && node < prev)
                        {
                            Some(node)
                        } else {
                            Some(prev)
                        }
                    }
                };
            }
        }
        let node = best.expect("oversized cluster has intersections");
        cut[node] = true;
        cut_order.push(node);
    }
}

/// One cluster's solve outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSolution {
    pub states: Vec<usize>,
    pub solution: Option<RankSolution>,
    pub error: Option<String>,
    pub degenerate: bool,
}

/// Per-segment recovered value: the better of the two orientations
/// ("display the one with highest value").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentValue {
    pub segment_id: usize,
    pub orientation: usize,
    pub value: f64,
    /// True when neither orientation was inside any cluster.
    pub flagged: bool,
}

/// Full pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityReport {
    pub ranking: Ranking,
    pub decomposition: Decomposition,
    pub cluster_solutions: Vec<ClusterSolution>,
    pub global_w: Vec<f64>,
    /// States outside every cluster (no reward estimate).
    pub flagged_states: Vec<usize>,
    pub segment_values: Vec<SegmentValue>,
    /// Spearman rank correlation of recovered segment values against the
    /// planted pickup quality.
    pub spearman: f64,
    pub gamma: f64,
    pub c: f64,
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let ranks = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                out[k] = avg;
            }
            i = j + 1;
        }
        out
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean) * (a - mean);
        dy += (b - mean) * (b - mean);
    }
    if dx <= 0.0 || dy <= 0.0 {
        0.0
    } else {
        num / (dx * dy).sqrt()
    }
}

/// Solve each cluster independently on the restricted feature
/// expectations and recombine: cluster weights are written back into the
/// global index, cut states stay at 0 and are flagged, and the value map
/// comes from the full network MDP under the recovered reward.
pub fn solve_city(
    net: &RoadNetwork,
    logs: &[DriverLog],
    ranking: &Ranking,
    decomposition: &Decomposition,
    gamma: f64,
    c: f64,
) -> Result<CityReport> {
    let mus = ranked_mus(net, logs, ranking, gamma)?;
    let cluster_solutions: Vec<ClusterSolution> = decomposition
        .clusters
        .par_iter()
        .map(|states| {
            let restricted: Vec<Mu> = mus
                .iter()
                .map(|mu| Mu {
                    vector: states.iter().map(|&s| mu.vector[s]).collect(),
                    rank: mu.rank,
                    source_id: mu.source_id.clone(),
                })
                .collect();
            let outcome = RankedDataset::new(restricted, c)
                .and_then(|data| solve_sum_of_margins(&data, 1e-8));
            match outcome {
                Ok(solution) => ClusterSolution {
                    states: states.clone(),
                    degenerate: solution.degenerate,
                    solution: Some(solution),
                    error: None,
                },
                Err(e) => ClusterSolution {
                    states: states.clone(),
                    solution: None,
                    error: Some(e.to_string()),
                    degenerate: false,
                },
            }
        })
        .collect();

    let mut global_w = vec![0.0; net.n_states()];
    let mut in_cluster = vec![false; net.n_states()];
    for cs in &cluster_solutions {
        if let Some(sol) = &cs.solution {
            for (&state, &w) in cs.states.iter().zip(&sol.w) {
                global_w[state] = w;
                in_cluster[state] = true;
            }
        }
    }
    let flagged_states: Vec<usize> = (0..net.n_states()).filter(|&s| !in_cluster[s]).collect();

    let (mdp, _) = net.build_mdp(gamma)?;
    let (_, values): (_, ValueFunction) = mdp.optimal_policy(&global_w, 1e-9)?;
    let segment_values: Vec<SegmentValue> = (0..net.n_segments())
        .map(|seg| {
            let v0 = values.value(net.state_id(seg, 0));
            let v1 = values.value(net.state_id(seg, 1));
            let orientation = if v1 > v0 { 1 } else { 0 };
            SegmentValue {
                segment_id: seg,
                orientation,
                value: v0.max(v1),
                flagged: !in_cluster[net.state_id(seg, 0)] && !in_cluster[net.state_id(seg, 1)],
            }
        })
        .collect();

    let recovered: Vec<f64> = segment_values.iter().map(|sv| sv.value).collect();
    let spearman = spearman(&recovered, &net.pickup_quality);

    Ok(CityReport {
        ranking: ranking.clone(),
        decomposition: decomposition.clone(),
        cluster_solutions,
        global_w,
        flagged_states,
        segment_values,
        spearman,
        gamma,
        c,
    })
}

/// End-to-end convenience used by the CLI and the acceptance suite.
pub fn run_city_pipeline(
    n_segments: usize,
    n_drivers: usize,
    k: usize,
    per_rank: usize,
    max_dim: usize,
    seed: u64,
    gamma: f64,
    c: f64,
) -> Result<(RoadNetwork, CityReport)> {
    let mut net = generate_network(n_segments, seed)?;
    let skills = default_skill_profile(n_drivers);
    let logs = simulate_drivers(&net, &skills, seed.wrapping_add(1))?;
    net.traversal_counts = count_traversals(&net, &logs);
    let ranking = rank_drivers(&logs, k, per_rank)?;
    let decomposition = decompose(&net, &logs, max_dim)?;
    let report = solve_city(&net, &logs, &ranking, &decomposition, gamma, c)?;
    Ok((net, report))
}
