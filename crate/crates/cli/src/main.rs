//! Command-line driver for the UAV data-collection toolkit.
//!
//! Subcommands: `stats` (normalization statistics), `train` (full learning
//! run with checkpoints and a CSV log), `eval` (metrics and table sweeps
//! from a checkpoint), and `run` (one recorded greedy episode).
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 3 on
//! runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skyharvest_core::checkpoint::{self, Checkpoint};
use skyharvest_core::config::{resolve_output_dir, ConfigError, RunConfig, Runtime};
use skyharvest_core::d3qn::{EpisodeLog, Trainer};
use skyharvest_core::evaluation::{
    apply_setting, evaluate, run_episode, sweep, NoiseSpec, NoiseTarget, Policy, TableId,
};
use skyharvest_core::rngs::{save_pos, stream_rng, StreamId};
use skyharvest_core::statecodec::compute_normalizer;

#[derive(Parser)]
#[command(name = "skyharvest", version, about = "Multi-UAV data-collection simulator and D3QN planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate state-normalization statistics and write them as JSON.
    Stats {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output path for the statistics file.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured sample count.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the policy; writes periodic checkpoints and a training log.
    Train {
        /// Run configuration (JSON). Ignored when resuming.
        #[arg(long, required_unless_present = "resume")]
        config: Option<PathBuf>,
        /// Precomputed normalization statistics (JSON); computed on the
        /// fly when absent.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Continue from a checkpoint (uses its embedded configuration).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint: aggregate metrics or a table sweep.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Fix the node count N.
        #[arg(long)]
        nodes: Option<u32>,
        /// Fix the background-UAV count J.
        #[arg(long)]
        others: Option<u32>,
        /// Fix the per-node payload (whole data units).
        #[arg(long)]
        data: Option<u32>,
        /// Apply a named reward setting (S1, S2, S3); affects the deadline.
        #[arg(long)]
        setting: Option<String>,
        /// Observation-noise amplitude u.
        #[arg(long)]
        noise_u: Option<f64>,
        /// Observation-noise target: position, velocity, both, or none.
        #[arg(long)]
        noise_target: Option<String>,
        /// Episode count (default from the config's evaluation section).
        #[arg(long)]
        episodes: Option<usize>,
        /// Run a table sweep instead: 2|nodes, 3|data, 4|traffic, 6|noise.
        #[arg(long)]
        table: Option<String>,
        /// Evaluate a baseline instead of the checkpoint policy:
        /// greedy (default), waypoints, or straight.
        #[arg(long)]
        policy: Option<String>,
        /// Master seed override for evaluation streams.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path (defaults into the run's output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll one greedy episode and record its trajectory.
    Run {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Master seed for the episode streams.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trajectory CSV path; a `.meta.json` sidecar lands next to it.
        #[arg(long)]
        record: PathBuf,
        /// Episode index within the seed's evaluation streams.
        #[arg(long, default_value_t = 0)]
        episode: u64,
    },
}

enum CliError {
    /// Bad input: config, flags, malformed files. Exit 2.
    Usage(String),
    /// Failures after validation: IO, training errors. Exit 3.
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<checkpoint::CheckpointError> for CliError {
    fn from(e: checkpoint::CheckpointError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stats { config, out, samples } => cmd_stats(&config, &out, samples),
        Command::Train { config, stats, resume } => cmd_train(config, stats, resume),
        Command::Eval {
            checkpoint,
            nodes,
            others,
            data,
            setting,
            noise_u,
            noise_target,
            episodes,
            table,
            policy,
            seed,
            out,
        } => cmd_eval(EvalArgs {
            checkpoint,
            nodes,
            others,
            data,
            setting,
            noise_u,
            noise_target,
            episodes,
            table,
            policy,
            seed,
            out,
        }),
        Command::Run { checkpoint, seed, record, episode } => {
            cmd_run(&checkpoint, seed, &record, episode)
        }
    }
}

fn load_runtime(path: &Path) -> Result<(RunConfig, Runtime), CliError> {
    let cfg = RunConfig::load(path)?;
    let rt = cfg.build()?;
    Ok((cfg, rt))
}

fn cmd_stats(config: &Path, out: &Path, samples: Option<usize>) -> Result<(), CliError> {
    let (_, rt) = load_runtime(config)?;
    let n = samples.unwrap_or(rt.trainer.stats_samples);
    if n < 2 {
        return Err(CliError::Usage("need at least 2 stats samples".into()));
    }
    eprintln!("estimating normalization statistics over {n} snapshots...");
    let mut rng = stream_rng(rt.seed, StreamId::Stats, 0);
    let normalizer = compute_normalizer(&rt.sim, &rt.codec, n, &mut rng);
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    checkpoint::save_normalizer(out, &normalizer)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "wrote {} entries of mean/std to {}",
        normalizer.mean.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(
    config: Option<PathBuf>,
    stats: Option<PathBuf>,
    resume: Option<PathBuf>,
) -> Result<(), CliError> {
    let (run_config, rt, mut trainer) = if let Some(ckpt_path) = &resume {
        let ckpt: Checkpoint = checkpoint::load(ckpt_path)?;
        let run_config = ckpt.header.config.clone();
        let rt = run_config.build()?;
        let trainer = Trainer::resume(
            rt.sim.clone(),
            rt.codec,
            rt.trainer.clone(),
            rt.action_space.clone(),
            ckpt.normalizer.clone(),
            ckpt.params.clone(),
            ckpt.header.episode,
            rt.seed,
        );
        println!(
            "resuming from {} at episode {}",
            ckpt_path.display(),
            ckpt.header.episode
        );
        (run_config, rt, trainer)
    } else {
        let (run_config, rt) = load_runtime(config.as_deref().expect("clap enforces this"))?;
        let normalizer = match &stats {
            Some(path) => {
                let n = checkpoint::load_normalizer(path)?;
                if n.mean.len() != rt.codec.state_dim() {
                    return Err(CliError::Usage(format!(
                        "stats file has {} entries, config expects {}",
                        n.mean.len(),
                        rt.codec.state_dim()
                    )));
                }
                n
            }
            None => {
                eprintln!(
                    "estimating normalization statistics over {} snapshots...",
                    rt.trainer.stats_samples
                );
                let mut rng = stream_rng(rt.seed, StreamId::Stats, 0);
                compute_normalizer(&rt.sim, &rt.codec, rt.trainer.stats_samples, &mut rng)
            }
        };
        let trainer = Trainer::new(
            rt.sim.clone(),
            rt.codec,
            rt.trainer.clone(),
            rt.action_space.clone(),
            normalizer,
            rt.seed,
        );
        (run_config, rt, trainer)
    };

    let out_dir = resolve_output_dir(&run_config);
    std::fs::create_dir_all(&out_dir)?;
    let log_path = out_dir.join("train_log.csv");
    let mut log = if resume.is_some() && log_path.exists() {
        std::fs::OpenOptions::new().append(true).open(&log_path)?
    } else {
        use std::io::Write;
        let mut f = std::fs::File::create(&log_path)?;
        writeln!(f, "{}", EpisodeLog::CSV_HEADER)?;
        f
    };

    let episodes = rt.trainer.episodes;
    println!(
        "training for {episodes} episodes (setting {}), logs in {}",
        skyharvest_core::evaluation::setting_label(&rt.sim),
        out_dir.display()
    );
    let mut window: Vec<(f64, bool)> = Vec::new();
    let mut train_err: Option<String> = None;
    let result = trainer.train(|tr, ep| {
        use std::io::Write;
        if let Err(e) = writeln!(log, "{}", ep.csv_line()) {
            train_err.get_or_insert(e.to_string());
        }
        window.push((ep.cum_reward, ep.success));
        if window.len() > 100 {
            window.remove(0);
        }
        let episode_no = ep.episode + 1;
        if episode_no % 100 == 0 {
            let mean_r = window.iter().map(|w| w.0).sum::<f64>() / window.len() as f64;
            let sr = 100.0 * window.iter().filter(|w| w.1).count() as f64 / window.len() as f64;
            println!(
                "episode {episode_no}/{episodes} eps={:.3} reward(100)={mean_r:.2} SR(100)={sr:.1}% loss={:.4}",
                ep.epsilon, ep.loss_mean
            );
        }
        if episode_no % tr.cfg.checkpoint_every == 0 && episode_no < episodes {
            let path = out_dir.join(format!("ckpt_{episode_no:06}.ckpt"));
            if let Err(e) = write_checkpoint(&path, &run_config, tr) {
                train_err.get_or_insert(e);
            }
        }
    });
    result.map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(e) = train_err {
        return Err(CliError::Runtime(e));
    }

    let final_path = out_dir.join("final.ckpt");
    write_checkpoint(&final_path, &run_config, &trainer).map_err(CliError::Runtime)?;
    println!("final checkpoint: {}", final_path.display());
    Ok(())
}

fn write_checkpoint(path: &Path, run_config: &RunConfig, tr: &Trainer) -> Result<(), String> {
    let streams = vec![
        save_pos(StreamId::Scenario, &tr.scenario_rng),
        save_pos(StreamId::Action, &tr.action_rng),
        save_pos(StreamId::Replay, &tr.replay_rng),
    ];
    checkpoint::save(
        path,
        run_config,
        tr.episode,
        streams,
        &tr.normalizer,
        &tr.online,
    )
    .map_err(|e| e.to_string())
}

struct EvalArgs {
    checkpoint: PathBuf,
    nodes: Option<u32>,
    others: Option<u32>,
    data: Option<u32>,
    setting: Option<String>,
    noise_u: Option<f64>,
    noise_target: Option<String>,
    episodes: Option<usize>,
    table: Option<String>,
    policy: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn parse_noise_target(s: &str) -> Result<NoiseTarget, CliError> {
    match s {
        "position" => Ok(NoiseTarget::Position),
        "velocity" => Ok(NoiseTarget::Velocity),
        "both" => Ok(NoiseTarget::Both),
        "none" => Ok(NoiseTarget::None),
        other => Err(CliError::Usage(format!(
            "unknown noise target {other:?} (expected position, velocity, both, none)"
        ))),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let rt = ckpt.header.config.build()?;
    let mut sim = rt.sim.clone();

    if let Some(n) = args.nodes {
        if n == 0 {
            return Err(CliError::Usage("--nodes must be positive".into()));
        }
        sim.episode.n_nodes_range = (n, n);
    }
    if let Some(j) = args.others {
        sim.episode.n_others_range = (j, j);
    }
    if let Some(d) = args.data {
        if d == 0 {
            return Err(CliError::Usage("--data must be positive".into()));
        }
        sim.episode.data_range = (f64::from(d), f64::from(d));
        sim.episode.data_integer = true;
    }
    if let Some(setting) = &args.setting {
        apply_setting(&mut sim, setting).map_err(CliError::Usage)?;
    }

    let mut noise = rt.noise;
    if let Some(u) = args.noise_u {
        if u < 0.0 {
            return Err(CliError::Usage("--noise-u must be non-negative".into()));
        }
        noise.amplitude = u;
        if args.noise_target.is_none() && noise.apply_to == NoiseTarget::None && u > 0.0 {
            noise.apply_to = NoiseTarget::Both;
        }
    }
    if let Some(t) = &args.noise_target {
        noise.apply_to = parse_noise_target(t)?;
    }

    let episodes = args.episodes.unwrap_or(rt.eval_episodes);
    if episodes == 0 {
        return Err(CliError::Usage("--episodes must be positive".into()));
    }
    let seed = args.seed.unwrap_or(rt.seed);

    let policy = match args.policy.as_deref() {
        None | Some("greedy") => Policy::Greedy {
            params: &ckpt.params,
            normalizer: &ckpt.normalizer,
            codec: rt.codec,
        },
        Some("waypoints") => Policy::Waypoints,
        Some("straight") => Policy::StraightToGoal,
        Some(other) => {
            return Err(CliError::Usage(format!(
                "unknown policy {other:?} (expected greedy, waypoints, straight)"
            )))
        }
    };

    let out_path = args.out.unwrap_or_else(|| {
        resolve_output_dir(&ckpt.header.config).join(match &args.table {
            Some(t) => format!("table_{t}.csv"),
            None => "eval.csv".to_string(),
        })
    });
    if let Some(dir) = out_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }

    if let Some(table_str) = &args.table {
        let table = TableId::parse(table_str).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown table {table_str:?} (expected 2, 3, 4, or 6)"
            ))
        })?;
        let csv = sweep(table, &policy, &sim, &rt.action_space, episodes, seed)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(&out_path, &csv)?;
        print!("{csv}");
        println!("wrote {}", out_path.display());
        return Ok(());
    }

    let metrics = evaluate(&policy, &sim, &rt.action_space, episodes, &noise, seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{metrics}");
    let csv = format!(
        "{}\n{}\n",
        skyharvest_core::evaluation::Metrics::CSV_HEADER,
        metrics.csv_line()
    );
    std::fs::write(&out_path, csv)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn cmd_run(ckpt_path: &Path, seed: u64, record: &Path, episode: u64) -> Result<(), CliError> {
    let ckpt = checkpoint::load(ckpt_path)?;
    let rt = ckpt.header.config.build()?;
    let policy = Policy::Greedy {
        params: &ckpt.params,
        normalizer: &ckpt.normalizer,
        codec: rt.codec,
    };
    let result = run_episode(
        &policy,
        &rt.sim,
        &rt.action_space,
        &NoiseSpec::NONE,
        seed,
        episode,
        true,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let trajectory = result.trajectory.as_ref().expect("recording was requested");

    if let Some(dir) = record.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(record, trajectory.to_csv())?;

    // Sidecar with everything a plotting tool needs to redraw the scene,
    // including the per-node coverage circles.
    let max_radius = rt.sim.world.arena.diagonal();
    let nodes: Vec<serde_json::Value> = trajectory
        .node_positions
        .iter()
        .zip(&trajectory.node_initial_data)
        .map(|(p, d)| {
            serde_json::json!({
                "x": p.x,
                "y": p.y,
                "initial_data": d,
                "coverage_radius": rt.sim.channel.coverage_radius(rt.sim.episode.node_power, max_radius),
            })
        })
        .collect();
    let sidecar = serde_json::json!({
        "start": {"x": trajectory.start.x, "y": trajectory.start.y},
        "destination": {"x": trajectory.destination.x, "y": trajectory.destination.y},
        "arena": rt.sim.world.arena,
        "departure": rt.sim.world.departure,
        "landing": rt.sim.world.landing,
        "no_fly": rt.sim.world.no_fly,
        "sensing_radius": rt.sim.world.sensing_radius,
        "arrival_tolerance": rt.sim.episode.arrival_tolerance,
        "nodes": nodes,
        "success": result.success,
        "collided": result.collided,
        "mission_time": result.mission_time,
        "data_fraction": result.data_fraction,
    });
    let sidecar_path = record.with_extension("meta.json");
    std::fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?.into_bytes())?;

    println!(
        "episode: success={} collided={} steps={} data_fraction={:.4}",
        result.success,
        result.collided,
        trajectory.steps.len(),
        result.data_fraction
    );
    println!("wrote {} and {}", record.display(), sidecar_path.display());
    Ok(())
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
