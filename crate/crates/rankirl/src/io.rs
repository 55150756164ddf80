//! File codecs: MDP JSON, trajectory files, mu CSV, solution and trace
//! JSON, road-network JSON, value/heatmap CSV, and run manifests.
//!
//! Only JSON and CSV are supported. Floats are written with Rust's
//! shortest round-trip formatting, so every emitted file parses back
//! into an equal in-memory value and reruns are byte-identical.
//!
//! Rank labels invert at this boundary: files use "rank 1 = best"
//! (the expert), while the solver uses "higher = better". The mapping
//! is applied symmetrically on read and write.

use crate::baseline::AlTrace;
use crate::features::{FeatureMap, Mu, Trajectory};
use crate::mdp::Mdp;
use crate::ordinal::RankSolution;
use crate::roadnet::{DriverLog, LoggedTrajectory, RoadNetwork, SegmentValue};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

fn to_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

/// Write any serializable value as pretty JSON (reports, manifests).
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json_pretty(path, value)?;
    text.push('\n');
    write_file(path, &text)
}

/// Read any deserializable value from a JSON file.
pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_file(path)?;
    parse_json(path, &text)
}

// ---------------------------------------------------------------------
// MDP JSON
// ---------------------------------------------------------------------

/// On-disk MDP schema: dense transition probabilities
/// `transitions[state][action][next_state]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub transitions: Vec<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<Vec<f64>>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        MdpFile {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            gamma: mdp.gamma(),
            transitions: mdp.dense_transitions(),
            reward: mdp.reward().map(|r| r.to_vec()),
        }
    }

    pub fn into_mdp(self) -> Result<Mdp> {
        let mdp = Mdp::from_dense(&self.transitions, self.gamma, self.reward)?;
        if mdp.n_states() != self.n_states {
            return Err(Error::invalid(format!(
                "MDP file declares {} states but transitions have {}",
                self.n_states,
                mdp.n_states()
            )));
        }
        if mdp.n_actions() != self.n_actions {
            return Err(Error::invalid(format!(
                "MDP file declares {} actions but transitions have {}",
                self.n_actions,
                mdp.n_actions()
            )));
        }
        Ok(mdp)
    }
}

/// Load and validate an MDP from JSON (probabilities checked on load).
pub fn load_mdp(path: &Path) -> Result<Mdp> {
    let file: MdpFile = load_json(path)?;
    file.into_mdp()
}

pub fn save_mdp(path: &Path, mdp: &Mdp) -> Result<()> {
    save_json(path, &MdpFile::from_mdp(mdp))
}

// ---------------------------------------------------------------------
// Trajectory files
// ---------------------------------------------------------------------

/// Read the plain trajectory format: one trajectory per line,
/// whitespace-separated integer state ids. Blank lines are skipped.
pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut states = Vec::new();
        for token in line.split_whitespace() {
            let state: usize = token.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("expected a state id, got {token:?}"),
            })?;
            states.push(state);
        }
        out.push(Trajectory::new(states).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    if out.is_empty() {
        return Err(Error::invalid(format!(
            "no trajectories in {}",
            path.display()
        )));
    }
    Ok(out)
}

pub fn save_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut text = String::new();
    for traj in trajectories {
        let ids: Vec<String> = traj.states.iter().map(|s| s.to_string()).collect();
        text.push_str(&ids.join(" "));
        text.push('\n');
    }
    write_file(path, &text)
}

const DRIVER_LOG_HEADER: &str = "driver_id,t,state_id,occupied";

/// Read the extended road-network trajectory CSV with columns
/// `driver_id,t,state_id,occupied`. A timestamp that does not increase
/// (within one driver) starts a new trajectory; vacancy ratios are
/// recomputed from the rows.
pub fn load_driver_logs(path: &Path) -> Result<Vec<DriverLog>> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == DRIVER_LOG_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {DRIVER_LOG_HEADER:?}"),
            })
        }
    }
    let mut logs: Vec<DriverLog> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse_err = |what: &str| Error::Parse {
            line: i + 1,
            message: format!("invalid {what} field"),
        };
        let driver_id = fields[0].trim().to_string();
        let t: u64 = fields[1].trim().parse().map_err(|_| parse_err("t"))?;
        let state: usize = fields[2].trim().parse().map_err(|_| parse_err("state_id"))?;
        let occupied = match fields[3].trim() {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err("occupied")),
        };
        if logs.last().map(|l| &l.driver_id) != Some(&driver_id) {
            logs.push(DriverLog {
                driver_id,
                trajectories: Vec::new(),
                vacancy_ratio: 0.0,
            });
        }
        let log = logs.last_mut().unwrap();
        let new_traj = match log.trajectories.last() {
            Some(traj) => traj.timestamps.last().is_some_and(|&last| t <= last),
            None => true,
        };
        if new_traj {
            log.trajectories.push(LoggedTrajectory {
                states: Vec::new(),
                occupied: Vec::new(),
                timestamps: Vec::new(),
            });
        }
        let traj = log.trajectories.last_mut().unwrap();
        traj.states.push(state);
        traj.occupied.push(occupied);
        traj.timestamps.push(t);
    }
    if logs.is_empty() {
        return Err(Error::invalid(format!(
            "no log rows in {}",
            path.display()
        )));
    }
    for log in &mut logs {
        log.vacancy_ratio = log.recompute_vacancy();
    }
    Ok(logs)
}

pub fn save_driver_logs(path: &Path, logs: &[DriverLog]) -> Result<()> {
    let mut text = String::from(DRIVER_LOG_HEADER);
    text.push('\n');
    for log in logs {
        for traj in &log.trajectories {
            for ((state, occ), t) in traj
                .states
                .iter()
                .zip(&traj.occupied)
                .zip(&traj.timestamps)
            {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    log.driver_id,
                    t,
                    state,
                    u8::from(*occ)
                ));
            }
        }
    }
    write_file(path, &text)
}

// ---------------------------------------------------------------------
// Mu CSV
// ---------------------------------------------------------------------

fn parse_f64(token: &str, line: usize, what: &str) -> Result<f64> {
    token.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what}: {token:?}"),
    })
}

/// Read a mu CSV with header `source_id,rank,mu_0,…,mu_{d-1}`. File
/// ranks use "1 = best"; they are inverted to the internal
/// higher-is-better convention using the largest rank found in the file.
pub fn load_mus(path: &Path) -> Result<Vec<Mu>> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    let dim = match lines.next() {
        Some((_, header)) => {
            let fields: Vec<&str> = header.split(',').map(str::trim).collect();
            if fields.len() < 3 || fields[0] != "source_id" || fields[1] != "rank" {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected header source_id,rank,mu_0,...".to_string(),
                });
            }
            for (j, name) in fields[2..].iter().enumerate() {
                if *name != format!("mu_{j}") {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("expected column mu_{j}, got {name:?}"),
                    });
                }
            }
            fields.len() - 2
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty mu file".to_string(),
            })
        }
    };
    let mut rows: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected {} fields, got {}", dim + 2, fields.len()),
            });
        }
        let rank: usize = fields[1].trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("invalid rank: {:?}", fields[1]),
        })?;
        if rank == 0 {
            return Err(Error::Parse {
                line: i + 1,
                message: "rank labels start at 1".to_string(),
            });
        }
        let vector = fields[2..]
            .iter()
            .map(|f| parse_f64(f, i + 1, "mu component"))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((fields[0].trim().to_string(), rank, vector));
    }
    let k = rows.iter().map(|r| r.1).max().ok_or_else(|| Error::Parse {
        line: 2,
        message: "mu file has no data rows".to_string(),
    })?;
    Ok(rows
        .into_iter()
        .map(|(source_id, user_rank, vector)| Mu {
            vector,
            rank: k + 1 - user_rank,
            source_id,
        })
        .collect())
}

/// Write a mu CSV, inverting internal ranks (higher = better) to the
/// file convention (1 = best). `k` is the number of rank levels.
pub fn save_mus(path: &Path, mus: &[Mu], k: usize) -> Result<()> {
    let dim = mus.first().map_or(0, |m| m.vector.len());
    let mut text = String::from("source_id,rank");
    for j in 0..dim {
        text.push_str(&format!(",mu_{j}"));
    }
    text.push('\n');
    for mu in mus {
        if mu.rank == 0 || mu.rank > k {
            return Err(Error::invalid(format!(
                "mu {} has rank {} outside 1..={k}",
                mu.source_id, mu.rank
            )));
        }
        text.push_str(&mu.source_id);
        text.push_str(&format!(",{}", k + 1 - mu.rank));
        for v in &mu.vector {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    write_file(path, &text)
}

// ---------------------------------------------------------------------
// Solution and trace JSON
// ---------------------------------------------------------------------

/// Write a rank solution as JSON with the documented keys
/// (`w,a,b,eps,sig,objective,margins,degenerate,feasibility_residual`).
pub fn save_solution(path: &Path, solution: &RankSolution) -> Result<()> {
    save_json(path, solution)
}

pub fn load_solution(path: &Path) -> Result<RankSolution> {
    load_json(path)
}

/// On-disk schema for an apprenticeship-learning run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub seed: u64,
    pub iterations: Vec<TraceIteration>,
    pub final_w: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIteration {
    pub t: f64,
    pub w: Vec<f64>,
}

impl TraceFile {
    pub fn from_trace(trace: &AlTrace) -> Self {
        TraceFile {
            seed: trace.seed,
            iterations: trace
                .iterations
                .iter()
                .map(|it| TraceIteration {
                    t: it.t,
                    w: it.w.clone(),
                })
                .collect(),
            final_w: trace.final_w.clone(),
            converged: trace.converged,
        }
    }
}

pub fn save_trace(path: &Path, trace: &AlTrace) -> Result<()> {
    save_json(path, &TraceFile::from_trace(trace))
}

pub fn load_trace(path: &Path) -> Result<TraceFile> {
    load_json(path)
}

// ---------------------------------------------------------------------
// Road network JSON and value CSV
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkFile {
    segments: Vec<crate::roadnet::Segment>,
    n_intersections: usize,
    pickup_quality: Vec<f64>,
    traversal_counts: Vec<u64>,
}

pub fn save_network(path: &Path, net: &RoadNetwork) -> Result<()> {
    save_json(
        path,
        &NetworkFile {
            segments: net.segments.clone(),
            n_intersections: net.n_intersections,
            pickup_quality: net.pickup_quality.clone(),
            traversal_counts: net.traversal_counts.clone(),
        },
    )
}

/// Load a road network, revalidating connectivity and rebuilding the
/// derived adjacency lists.
pub fn load_network(path: &Path) -> Result<RoadNetwork> {
    let file: NetworkFile = load_json(path)?;
    let mut net = RoadNetwork::from_parts(file.segments, file.n_intersections, file.pickup_quality)?;
    if file.traversal_counts.len() != net.n_intersections {
        return Err(Error::invalid(format!(
            "network file has {} traversal counts for {} intersections",
            file.traversal_counts.len(),
            net.n_intersections
        )));
    }
    net.traversal_counts = file.traversal_counts;
    Ok(net)
}

const SEGMENT_VALUE_HEADER: &str = "segment_id,orientation,value,flagged";

pub fn save_segment_values(path: &Path, values: &[SegmentValue]) -> Result<()> {
    let mut text = String::from(SEGMENT_VALUE_HEADER);
    text.push('\n');
    for v in values {
        text.push_str(&format!(
            "{},{},{},{}\n",
            v.segment_id,
            v.orientation,
            v.value,
            u8::from(v.flagged)
        ));
    }
    write_file(path, &text)
}

pub fn load_segment_values(path: &Path) -> Result<Vec<SegmentValue>> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == SEGMENT_VALUE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {SEGMENT_VALUE_HEADER:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse_err = |what: &str| Error::Parse {
            line: i + 1,
            message: format!("invalid {what} field"),
        };
        out.push(SegmentValue {
            segment_id: fields[0].trim().parse().map_err(|_| parse_err("segment_id"))?,
            orientation: fields[1]
                .trim()
                .parse()
                .map_err(|_| parse_err("orientation"))?,
            value: parse_f64(fields[2], i + 1, "value")?,
            flagged: match fields[3].trim() {
                "0" => false,
                "1" => true,
                _ => return Err(parse_err("flagged")),
            },
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Feature tables and heatmaps
// ---------------------------------------------------------------------

/// Read a feature table CSV: one row per state, `d` comma-separated
/// components, no header.
pub fn load_features(path: &Path) -> Result<FeatureMap> {
    let text = read_file(path)?;
    let mut phi = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| parse_f64(f, i + 1, "feature component"))
            .collect::<Result<Vec<f64>>>()?;
        phi.push(row);
    }
    FeatureMap::new(phi)
}

pub fn save_features(path: &Path, fmap: &FeatureMap) -> Result<()> {
    let mut text = String::new();
    for state in 0..fmap.n_states() {
        let row: Vec<String> = fmap.phi(state).iter().map(|v| format!("{v}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_file(path, &text)
}

/// Write a per-cell reward grid as a `size x size` CSV (row-major, no
/// header), ready for external plotting.
pub fn save_heatmap(path: &Path, size: usize, values: &[f64]) -> Result<()> {
    if values.len() != size * size {
        return Err(Error::DimensionMismatch {
            context: "heatmap values",
            expected: size * size,
            got: values.len(),
        });
    }
    let mut text = String::new();
    for row in 0..size {
        let cells: Vec<String> = (0..size)
            .map(|col| format!("{}", values[row * size + col]))
            .collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_file(path, &text)
}

pub fn load_heatmap(path: &Path) -> Result<Vec<f64>> {
    let text = read_file(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        for field in line.split(',') {
            values.push(parse_f64(field, i + 1, "heatmap cell")?);
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::empirical_mu;
    use crate::mdp::build_counterexample_mdp;
    use crate::roadnet::{generate_network, simulate_drivers};
    use tempfile::tempdir;

    #[test]
    fn mdp_json_round_trips_and_validates() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mdp.json");
        let ce = build_counterexample_mdp(1.0, 0.9).unwrap();
        save_mdp(&path, &ce.mdp).unwrap();
        let loaded = load_mdp(&path).unwrap();
        assert_eq!(loaded.dense_transitions(), ce.mdp.dense_transitions());
        assert_eq!(loaded.gamma(), ce.mdp.gamma());

        let bad = r#"{"n_states":1,"n_actions":1,"gamma":0.9,"transitions":[[[0.5]]]}"#;
        fs::write(&path, bad).unwrap();
        assert!(load_mdp(&path).is_err());
    }

    #[test]
    fn trajectory_file_round_trips_and_reports_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trajs.txt");
        let trajs = vec![
            Trajectory::new(vec![0, 2, 2]).unwrap(),
            Trajectory::new(vec![1]).unwrap(),
        ];
        save_trajectories(&path, &trajs).unwrap();
        assert_eq!(load_trajectories(&path).unwrap(), trajs);

        fs::write(&path, "0 1 2\n3 x 4\n").unwrap();
        match load_trajectories(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn mu_csv_round_trips_with_rank_inversion() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mus.csv");
        // Internal ranks: 3 = best of k = 3.
        let mus = vec![
            Mu {
                vector: vec![1.0, 0.25],
                rank: 3,
                source_id: "expert".to_string(),
            },
            Mu {
                vector: vec![0.5, 0.125],
                rank: 1,
                source_id: "novice".to_string(),
            },
        ];
        save_mus(&path, &mus, 3).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("source_id,rank,mu_0,mu_1\n"));
        // The expert carries file rank 1.
        assert!(text.contains("expert,1,1,0.25"));
        let loaded = load_mus(&path).unwrap();
        // k is re-derived from the file (max file rank 3), so the
        // inversion is its own inverse.
        assert_eq!(loaded, mus);
    }

    #[test]
    fn empirical_mu_of_loaded_trajectories_matches_spec_example() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.txt");
        fs::write(&path, "0 2 2\n").unwrap();
        let trajs = load_trajectories(&path).unwrap();
        let mu = empirical_mu(&trajs, &FeatureMap::lossless(4), 0.5).unwrap();
        assert_eq!(mu, vec![1.0, 0.0, 0.75, 0.0]);
    }

    #[test]
    fn driver_log_csv_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("logs.csv");
        let net = generate_network(12, 3).unwrap();
        let logs = simulate_drivers(&net, &[0.2, 0.9], 5).unwrap();
        save_driver_logs(&path, &logs).unwrap();
        let loaded = load_driver_logs(&path).unwrap();
        assert_eq!(loaded, logs);
    }

    #[test]
    fn network_json_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = generate_network(25, 11).unwrap();
        save_network(&path, &net).unwrap();
        let loaded = load_network(&path).unwrap();
        assert_eq!(loaded, net);
        assert_eq!(loaded.successors(0), net.successors(0));
    }

    #[test]
    fn segment_value_csv_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("values.csv");
        let values = vec![
            SegmentValue {
                segment_id: 0,
                orientation: 1,
                value: 0.625,
                flagged: false,
            },
            SegmentValue {
                segment_id: 7,
                orientation: 0,
                value: 0.0,
                flagged: true,
            },
        ];
        save_segment_values(&path, &values).unwrap();
        assert_eq!(load_segment_values(&path).unwrap(), values);
    }

    #[test]
    fn heatmap_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("heat.csv");
        let values: Vec<f64> = (0..16).map(|i| i as f64 * 0.125 - 1.0).collect();
        save_heatmap(&path, 4, &values).unwrap();
        assert_eq!(load_heatmap(&path).unwrap(), values);
        assert!(save_heatmap(&path, 5, &values).is_err());
    }

    #[test]
    fn features_csv_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("phi.csv");
        let fmap = FeatureMap::new(vec![vec![0.0, 1.0], vec![0.5, 0.25], vec![1.0, 0.0]]).unwrap();
        save_features(&path, &fmap).unwrap();
        let loaded = load_features(&path).unwrap();
        assert_eq!(loaded.dim(), 2);
        assert_eq!(loaded.phi(1), fmap.phi(1));
    }
}
