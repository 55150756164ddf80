//! Command-line entry point. Every run writes its fully resolved
//! configuration (a reproducibility manifest) alongside its outputs;
//! all randomness flows from explicit `--seed` flags.
//!
//! Exit codes: 0 success, 1 usage/validation error, 2 I/O error,
//! 3 solver non-convergence.

use clap::{Parser, Subcommand, ValueEnum};
use rankirl::features::{empirical_mu, FeatureMap, Mu};
use rankirl::gridworld::{
    run_gridworld_comparison, run_prop1_check, ComparisonConfig, GridSpec, SampleMode,
};
use rankirl::io;
use rankirl::ordinal::{solve_sum_of_margins, RankedDataset};
use rankirl::roadnet::run_city_pipeline;
use rankirl::{Error, Result};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Reward recovery from ranked demonstrations.
#[derive(Parser)]
#[command(name = "rankirl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleModeArg {
    Exact,
    Sampled,
}

impl From<SampleModeArg> for SampleMode {
    fn from(mode: SampleModeArg) -> Self {
        match mode {
            SampleModeArg::Exact => SampleMode::Exact,
            SampleModeArg::Sampled => SampleMode::Sampled,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the counterexample check: two rewards, same ranking, opposite
    /// preferences between the suboptimal policies.
    Prop1 {
        /// Penalty magnitude on the detour state.
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        /// Output directory for report.json and the manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the gridworld comparison: ranked solve vs the max-margin
    /// apprenticeship baseline over several seeds.
    Gridworld {
        #[arg(long, default_value_t = 10)]
        baseline_seeds: usize,
        #[arg(long, value_enum, default_value = "sampled")]
        sample_mode: SampleModeArg,
        /// Trajectories per demonstrator in sampled mode.
        #[arg(long, default_value_t = 5)]
        n_traj: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Baseline convergence threshold on the margin.
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Output directory for report.json, heatmap CSVs, manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the sum-of-margins problem on a mu CSV (rank 1 = best).
    RankSolve {
        /// Input CSV with header source_id,rank,mu_0,...
        #[arg(long)]
        mus: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Output solution JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute empirical feature expectations from a trajectory file.
    Mu {
        /// Trajectory file: one trajectory per line, whitespace-separated
        /// state ids.
        #[arg(long)]
        trajectories: PathBuf,
        /// Feature table CSV (one row per state). Mutually exclusive
        /// with --lossless.
        #[arg(long, conflicts_with = "lossless")]
        features: Option<PathBuf>,
        /// Use identity features with n_states taken from this MDP file.
        #[arg(long, value_name = "MDP_JSON")]
        lossless: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        /// Source id recorded in the output row.
        #[arg(long, default_value = "expert")]
        source_id: String,
        /// Output mu CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the synthetic city pipeline end to end.
    City {
        #[arg(long, default_value_t = 200)]
        segments: usize,
        #[arg(long, default_value_t = 30)]
        drivers: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        per_rank: usize,
        #[arg(long, default_value_t = 130)]
        max_dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Output directory for network.json, report.json, values.csv,
        /// manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an MDP JSON file and report violations.
    ValidateMdp {
        #[arg(long)]
        mdp: PathBuf,
    },
}

/// Note written into every manifest so downstream consumers know how
/// file rank labels map onto the solver's convention.
const RANK_CONVENTION: &str = "file rank 1 = best; inverted to internal ascending ranks on load";

#[derive(Serialize)]
struct Manifest<T: Serialize> {
    command: &'static str,
    rank_convention: &'static str,
    config: T,
    outputs: Vec<String>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &'static str,
    config: T,
    outputs: &[&str],
) -> Result<()> {
    io::save_json(
        &dir.join("manifest.json"),
        &Manifest {
            command,
            rank_convention: RANK_CONVENTION,
            config,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        },
    )
}

fn cmd_prop1(delta: f64, gamma: f64, out: &Path) -> Result<bool> {
    let report = run_prop1_check(delta, gamma)?;
    ensure_dir(out)?;
    io::save_json(&out.join("report.json"), &report)?;
    #[derive(Serialize)]
    struct Config {
        delta: f64,
        gamma: f64,
    }
    write_manifest(out, "prop1", Config { delta, gamma }, &["report.json"])?;
    println!(
        "prop1: delta={delta} gamma={gamma} pass={}{}",
        report.pass,
        if report.gamma_zero_degenerate {
            " (gamma=0 degenerate)"
        } else {
            ""
        }
    );
    Ok(report.pass)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gridworld(
    baseline_seeds: usize,
    sample_mode: SampleMode,
    n_traj: usize,
    seed: u64,
    c: f64,
    epsilon: f64,
    out: &Path,
) -> Result<()> {
    let mut config = ComparisonConfig::new(GridSpec::default(), baseline_seeds, sample_mode);
    config.n_trajectories = n_traj;
    config.seed = seed;
    config.c = c;
    config.epsilon = epsilon;
    let report = run_gridworld_comparison(&config)?;

    ensure_dir(out)?;
    io::save_json(&out.join("report.json"), &report)?;
    let size = config.spec.size;
    // With lossless features the weight vector is the per-cell reward.
    io::save_heatmap(&out.join("heatmap_rankirl.csv"), size, &report.rankirl_w)?;
    let n = size * size;
    let mut baseline_mean = vec![0.0; n];
    for w in &report.baseline_w {
        for (acc, v) in baseline_mean.iter_mut().zip(w) {
            *acc += v / report.baseline_w.len() as f64;
        }
    }
    io::save_heatmap(&out.join("heatmap_baseline.csv"), size, &baseline_mean)?;
    write_manifest(
        out,
        "gridworld",
        &config,
        &["report.json", "heatmap_rankirl.csv", "heatmap_baseline.csv"],
    )?;
    println!(
        "gridworld: rankirl_pref={:.3} baseline_pref_mean={:.3} advantage={:.3}",
        report.even_odd_preference_rankirl,
        report.even_odd_preference_baseline_mean,
        report.advantage
    );
    Ok(())
}

fn cmd_rank_solve(mus_path: &Path, c: f64, tol: f64, out: &Path) -> Result<()> {
    let mus = io::load_mus(mus_path)?;
    let data = RankedDataset::new(mus, c)?;
    let solution = solve_sum_of_margins(&data, tol)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    io::save_solution(out, &solution)?;
    #[derive(Serialize)]
    struct Config {
        mus: String,
        c: f64,
        tol: f64,
    }
    let manifest_path = out.with_extension("manifest.json");
    io::save_json(
        &manifest_path,
        &Manifest {
            command: "rank-solve",
            rank_convention: RANK_CONVENTION,
            config: Config {
                mus: mus_path.display().to_string(),
                c,
                tol,
            },
            outputs: vec![out.display().to_string()],
        },
    )?;
    println!(
        "rank-solve: objective={:.6} degenerate={}",
        solution.objective, solution.degenerate
    );
    Ok(())
}

fn cmd_mu(
    traj_path: &Path,
    features: Option<&Path>,
    lossless: Option<&Path>,
    gamma: f64,
    source_id: &str,
    out: &Path,
) -> Result<()> {
    let trajectories = io::load_trajectories(traj_path)?;
    let fmap = match (features, lossless) {
        (Some(path), None) => io::load_features(path)?,
        (None, Some(mdp_path)) => {
            let mdp = io::load_mdp(mdp_path)?;
            FeatureMap::lossless(mdp.n_states())
        }
        _ => {
            return Err(Error::invalid(
                "provide exactly one of --features or --lossless",
            ))
        }
    };
    let vector = empirical_mu(&trajectories, &fmap, gamma)?;
    let mu = Mu {
        vector,
        rank: 1,
        source_id: source_id.to_string(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    io::save_mus(out, std::slice::from_ref(&mu), 1)?;
    #[derive(Serialize)]
    struct Config {
        trajectories: String,
        features: Option<String>,
        lossless: Option<String>,
        gamma: f64,
        source_id: String,
    }
    io::save_json(
        &out.with_extension("manifest.json"),
        &Manifest {
            command: "mu",
            rank_convention: RANK_CONVENTION,
            config: Config {
                trajectories: traj_path.display().to_string(),
                features: features.map(|p| p.display().to_string()),
                lossless: lossless.map(|p| p.display().to_string()),
                gamma,
                source_id: source_id.to_string(),
            },
            outputs: vec![out.display().to_string()],
        },
    )?;
    println!("mu: d={} over {} trajectories", mu.vector.len(), trajectories.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_city(
    segments: usize,
    drivers: usize,
    k: usize,
    per_rank: usize,
    max_dim: usize,
    seed: u64,
    gamma: f64,
    c: f64,
    out: &Path,
) -> Result<()> {
    let (net, report) = run_city_pipeline(segments, drivers, k, per_rank, max_dim, seed, gamma, c)?;
    ensure_dir(out)?;
    io::save_network(&out.join("network.json"), &net)?;
    io::save_json(&out.join("report.json"), &report)?;
    io::save_segment_values(&out.join("values.csv"), &report.segment_values)?;
    #[derive(Serialize)]
    struct Config {
        segments: usize,
        drivers: usize,
        k: usize,
        per_rank: usize,
        max_dim: usize,
        seed: u64,
        gamma: f64,
        c: f64,
        cluster_sizes: Vec<usize>,
    }
    write_manifest(
        out,
        "city",
        Config {
            segments,
            drivers,
            k,
            per_rank,
            max_dim,
            seed,
            gamma,
            c,
            cluster_sizes: report
                .decomposition
                .clusters
                .iter()
                .map(|cl| cl.len())
                .collect(),
        },
        &["network.json", "report.json", "values.csv"],
    )?;
    println!(
        "city: clusters={} spearman={:.3} flagged={}",
        report.decomposition.clusters.len(),
        report.spearman,
        report.flagged_states.len()
    );
    Ok(())
}

fn cmd_validate_mdp(path: &Path) -> Result<()> {
    let mdp = io::load_mdp(path)?;
    let violations = mdp.validate();
    if violations.is_empty() {
        println!(
            "ok: {} states, {} actions, gamma={}",
            mdp.n_states(),
            mdp.n_actions(),
            mdp.gamma()
        );
        Ok(())
    } else {
        Err(Error::InvalidMdp(violations.join("; ")))
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Prop1 { delta, gamma, out } => cmd_prop1(delta, gamma, &out),
        Command::Gridworld {
            baseline_seeds,
            sample_mode,
            n_traj,
            seed,
            c,
            epsilon,
            out,
        } => cmd_gridworld(
            baseline_seeds,
            sample_mode.into(),
            n_traj,
            seed,
            c,
            epsilon,
            &out,
        )
        .map(|()| true),
        Command::RankSolve { mus, c, tol, out } => cmd_rank_solve(&mus, c, tol, &out).map(|()| true),
        Command::Mu {
            trajectories,
            features,
            lossless,
            gamma,
            source_id,
            out,
        } => cmd_mu(
            &trajectories,
            features.as_deref(),
            lossless.as_deref(),
            gamma,
            &source_id,
            &out,
        )
        .map(|()| true),
        Command::City {
            segments,
            drivers,
            k,
            per_rank,
            max_dim,
            seed,
            gamma,
            c,
            out,
        } => cmd_city(segments, drivers, k, per_rank, max_dim, seed, gamma, c, &out).map(|()| true),
        Command::ValidateMdp { mdp } => cmd_validate_mdp(&mdp).map(|()| true),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Json { .. } => 2,
        Error::NonConvergence(_) | Error::UnsolvableSeed(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // A completed run whose check failed (prop1).
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
