//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::{Cli, Failure, SolverMode};
use cdsc::enumeration::{rank_by_membership, RankMode};
use cdsc::io;
use cdsc::metrics::identity_metrics;
use cdsc::pipeline;
use cdsc::solver::{alpha_bound, fast_cdsc, solve_replicator, AlphaMode, SolverConfig};
use cdsc::synth::{random_sparse_affinity, synth_generate, SynthConfig};

fn require_config(cli: &Cli) -> Result<&PathBuf, Failure> {
    cli.config
        .as_ref()
        .ok_or_else(|| Failure::Validation("--config is required".into()))
}

fn require_out(cli: &Cli) -> Result<&PathBuf, Failure> {
    cli.out
        .as_ref()
        .ok_or_else(|| Failure::Validation("--out is required".into()))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {}", dir.display(), e)))
}

/// Generates a dataset directory: detections.csv, features.bin (+ .hdr),
/// topology.json, truth.csv. Everything is validated and simulated before
/// any file is touched.
pub fn synth(cli: &Cli) -> Result<(), Failure> {
    let config_path = require_config(cli)?;
    let out_dir = require_out(cli)?;
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Failure::Validation(format!("{}: {}", config_path.display(), e)))?;
    let mut cfg: SynthConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Validation(format!("{}: {}", config_path.display(), e)))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = synth_generate(&cfg)?;

    ensure_dir(out_dir)?;
    io::write_detections(&out_dir.join("detections.csv"), &out.dataset.detections)?;
    io::write_features_bin(&out_dir.join("features.bin"), &out.dataset.features)?;
    std::fs::write(out_dir.join("topology.json"), out.model.to_json() + "\n")
        .map_err(|e| Failure::Runtime(format!("topology.json: {}", e)))?;
    io::write_trajectories(&out_dir.join("truth.csv"), &out.truth)?;
    println!(
        "synth: {} detections, {} identities, {} cameras -> {}",
        out.dataset.detections.len(),
        cfg.identities,
        cfg.cameras,
        out_dir.display()
    );
    Ok(())
}

fn load_features(path: &Path) -> Result<Vec<cdsc::affinity::FeatureVector>, Failure> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => Ok(io::read_features_bin(path)?),
        _ => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Validation(format!("{}: {}", path.display(), e)))?;
            Ok(io::features_from_csv(&text, &path.display().to_string())?)
        }
    }
}

/// Runs layers 1-3 plus refinement end to end; writes trajectories.csv and
/// report.json. Solver non-convergence is reported as a warning, not a
/// failure.
pub fn track(cli: &Cli) -> Result<(), Failure> {
    let config_path = require_config(cli)?;
    let out_dir = require_out(cli)?;
    let run_cfg = RunConfig::load(config_path)?;
    let pipeline_cfg = run_cfg.pipeline_config(cli.solver);

    let detections = io::read_detections(&run_cfg.detections)?;
    let features = load_features(&run_cfg.features)?;
    let model_text = std::fs::read_to_string(&run_cfg.transition_model)
        .map_err(|e| Failure::Validation(format!("{}: {}", run_cfg.transition_model.display(), e)))?;
    let model = cdsc::affinity::TransitionModel::from_json(&model_text)?;
    for d in &detections {
        if d.feature_id >= features.len() {
            return Err(Failure::Validation(format!(
                "detection references feature {} but the table has {}",
                d.feature_id,
                features.len()
            )));
        }
    }

    let dataset = pipeline::Dataset {
        detections,
        features,
    };
    let output = pipeline::run(&dataset, &model, &pipeline_cfg)?;

    ensure_dir(out_dir)?;
    io::write_trajectories(&out_dir.join("trajectories.csv"), &output.labeled_boxes())?;
    io::write_json(&out_dir.join("report.json"), &output.report)?;
    println!(
        "track[seed {}]: {} detections -> {} tracks -> {} trajectories ({} warnings)",
        cli.seed.unwrap_or(run_cfg.seed),
        output.report.detections,
        output.report.tracks,
        output.report.trajectories,
        output.report.warnings.len()
    );
    Ok(())
}

/// Scores predictions against truth; prints the table and writes
/// metrics.json next to it when an output directory is given.
pub fn eval(cli: &Cli, pred: &Path, truth: &Path) -> Result<(), Failure> {
    let predicted = io::read_trajectories(pred)?;
    let reference = io::read_trajectories(truth)?;
    let metrics = identity_metrics(&predicted, &reference)?;
    print!("{}", metrics.to_table());
    if let Some(out_dir) = &cli.out {
        ensure_dir(out_dir)?;
        io::write_json(&out_dir.join("metrics.json"), &metrics)?;
        std::fs::write(out_dir.join("metrics.txt"), metrics.to_table())
            .map_err(|e| Failure::Runtime(format!("metrics.txt: {}", e)))?;
    }
    Ok(())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReidMode {
    Membership,
    Distance,
}

/// Ranks gallery nodes against each query via the constrained dominant set
/// containing it; one CSV per query.
pub fn reid(
    cli: &Cli,
    features_path: &Path,
    query: &str,
    mode: ReidMode,
    gamma: Option<f64>,
) -> Result<(), Failure> {
    let out_dir = require_out(cli)?;
    let features = load_features(features_path)?;
    if features.is_empty() {
        return Err(Failure::Validation("gallery is empty".into()));
    }
    let queries: Vec<usize> = query
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Failure::Validation(format!("bad query id '{}': {}", s, e)))
        })
        .collect::<Result<_, _>>()?;
    for &q in &queries {
        if q >= features.len() {
            return Err(Failure::Validation(format!(
                "query id {} out of range for gallery of {}",
                q,
                features.len()
            )));
        }
    }
    let a = cdsc::affinity::kernel_affinity(&features, gamma)?;
    let rank_mode = match mode {
        ReidMode::Membership => RankMode::Membership,
        ReidMode::Distance => RankMode::PairwiseDistance,
    };
    let solver = SolverConfig {
        alpha_mode: solver_mode(cli),
        ..SolverConfig::default()
    };

    ensure_dir(out_dir)?;
    for &q in &queries {
        let ranking = rank_by_membership(&a, &[q], rank_mode, &solver)?;
        let mut text = String::new();
        for (rank, (node, score)) in ranking.iter().enumerate() {
            text.push_str(&format!("{},{},{}\n", rank + 1, node, score));
        }
        let path = out_dir.join(format!("query_{}.csv", q));
        std::fs::write(&path, text)
            .map_err(|e| Failure::Runtime(format!("{}: {}", path.display(), e)))?;
    }
    println!("reid: ranked {} queries over a gallery of {}", queries.len(), features.len());
    Ok(())
}

fn solver_mode(cli: &Cli) -> AlphaMode {
    match cli.solver {
        Some(SolverMode::Fast) => AlphaMode::Fast,
        Some(SolverMode::Exact) | None => AlphaMode::Exact,
    }
}

/// Times the full-graph baseline against the localized solver on random
/// sparse instances and writes per-instance rows plus the ratio series.
pub fn bench(cli: &Cli, sizes: &str, seeds: u64, density: f64, max_iters: usize) -> Result<(), Failure> {
    let out_dir = require_out(cli)?;
    let sizes: Vec<usize> = sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Failure::Validation(format!("bad size '{}': {}", s, e)))
        })
        .collect::<Result<_, _>>()?;
    if sizes.iter().any(|&n| n < 100) {
        return Err(Failure::Validation("benchmark sizes must be at least 100".into()));
    }
    if seeds == 0 {
        return Err(Failure::Validation("--seeds must be positive".into()));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Failure::Validation("--density must lie in [0, 1]".into()));
    }
    if max_iters == 0 {
        return Err(Failure::Validation("--max-iters must be positive".into()));
    }
    let seed_base = cli.seed.unwrap_or(0);

    let mut rows =
        String::from("n,seed,time_cdsc_s,time_fcdsc_s,ratio,obj_cdsc,obj_fcdsc,cdsc_converged,fcdsc_converged\n");
    println!("{:>6} {:>6} {:>12} {:>12} {:>10}", "n", "seed", "cdsc_s", "fcdsc_s", "ratio");
    for &n in &sizes {
        for s in 0..seeds {
            let seed = seed_base + s;
            let a = random_sparse_affinity(n, density, 0xbe9c * (n as u64) + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(0x51ee * (n as u64) + seed);
            let q = vec![rng.gen_range(0..n)];
            // one shared penalty keeps the two solvers on the same program;
            // --solver picks how it is bounded (fast by default: the exact
            // bound needs an eigensolve on the full complement)
            let mode = match cli.solver {
                Some(SolverMode::Exact) => AlphaMode::Exact,
                _ => AlphaMode::Fast,
            };
            let alpha = alpha_bound(&a, &q, mode);
            let cfg = SolverConfig {
                alpha_override: Some(alpha),
                max_iters,
                ..SolverConfig::default()
            };

            let t0 = Instant::now();
            let slow = solve_replicator(&a, &q, &cfg)?;
            let slow_s = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let fast = fast_cdsc(&a, &q, &cfg)?;
            let fast_s = t1.elapsed().as_secs_f64();

            let ratio = slow_s / fast_s.max(1e-9);
            rows.push_str(&format!(
                "{},{},{:.6},{:.6},{:.3},{},{},{},{}\n",
                n, seed, slow_s, fast_s, ratio, slow.objective, fast.objective,
                slow.converged, fast.converged
            ));
            println!(
                "{:>6} {:>6} {:>12.4} {:>12.6} {:>10.1}",
                n, seed, slow_s, fast_s, ratio
            );
        }
    }
    ensure_dir(out_dir)?;
    let path = out_dir.join("speedup.csv");
    std::fs::write(&path, rows).map_err(|e| Failure::Runtime(format!("{}: {}", path.display(), e)))?;
    println!("bench: wrote {}", path.display());
    Ok(())
}
