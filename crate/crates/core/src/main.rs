use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use vnet_morl::checks::{run_suite, SUITES};
use vnet_morl::config::ExperimentConfig;
use vnet_morl::metrics::{self, MetricsRecord, ReturnRow, Summary, METRICS_SCHEMA_VERSION};
use vnet_morl::neural::Checkpoint;
use vnet_morl::objectives::PreferenceVector;
use vnet_morl::pareto;
use vnet_morl::run::{self, Policy};
use vnet_morl::{Error, Result};

#[derive(Parser)]
#[command(name = "vnet-morl", version, about = "Multi-objective RL for joint AV control and RF/THz handover")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write metrics and checkpoints.
    Train(TrainArgs),
    /// Greedy evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Pareto front, CCS and hypervolume of return-point CSVs.
    Pareto(ParetoArgs),
    /// Run the built-in oracle suites.
    Check(CheckArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; keys not given fall back to the selected preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Extra `key.path=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    /// `--episodes` sets the training length only when `training` is true.
    fn load(&self, fallback: Option<&Path>, training: bool) -> Result<ExperimentConfig> {
        let mut overrides = self.set.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let (Some(e), true) = (self.episodes, training) {
            overrides.push(format!("episodes={e}"));
        }
        ExperimentConfig::load(self.config.as_deref().or(fallback), &overrides)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value = "runs/train")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the `config.toml` of the run that wrote the checkpoint.
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Transportation weight: `0.3`, a list `0.1,0.5,0.9` or `sweep:11`.
    #[arg(long)]
    omega: Option<String>,
    #[arg(long, default_value = "runs/eval")]
    out: PathBuf,
}

#[derive(Args)]
struct ParetoArgs {
    /// Return-point CSVs with columns label,r_tran,r_tele.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Hypervolume reference point `r_tran,r_tele`.
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    reference: String,
    #[arg(long, default_value = "runs/pareto")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// One of channel, neural, pareto, envelope or all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Also verify that these checkpoints load.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

#[derive(Serialize)]
struct TimingRow {
    episode: usize,
    wall_ms: f64,
    steps: usize,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = args.cfg.load(None, true)?;
    create_dir(&args.out)?;
    write_text(&args.out.join("config.toml"), &cfg.to_toml()?)?;
    let ckpt_dir = args.out.join("checkpoints");
    if cfg.checkpoint_every > 0 {
        create_dir(&ckpt_dir)?;
    }
    eprintln!(
        "training {} on preset {} for {} episodes (seed {})",
        cfg.algorithm.name(),
        cfg.preset,
        cfg.episodes,
        cfg.seed
    );
    let started = Instant::now();
    let every = cfg.checkpoint_every;
    let outcome = run::train(&cfg, |rec, learner| {
        let done = rec.episode + 1;
        if done % 50 == 0 || done == cfg.episodes {
            eprintln!(
                "episode {done:>5}  r_tran {:8.3}  r_tele {:10.3}  delta {:.3}  xi {:.3}",
                rec.r_tran, rec.r_tele, rec.delta_e, rec.xi_e
            );
        }
        if every > 0 && done % every == 0 {
            run::checkpoint(learner, &cfg, done).save(&ckpt_dir.join(format!("episode_{done:06}.json")))?;
        }
        Ok(())
    })?;
    let elapsed = started.elapsed().as_secs_f64();
    run::checkpoint(&outcome.learner, &cfg, cfg.episodes).save(&args.out.join("checkpoint.json"))?;
    metrics::write_csv(&args.out.join("metrics.csv"), &outcome.records)?;
    let timing: Vec<TimingRow> = outcome
        .records
        .iter()
        .zip(&outcome.episode_ms)
        .map(|(r, &wall_ms)| TimingRow {
            episode: r.episode,
            wall_ms,
            steps: r.steps,
        })
        .collect();
    metrics::write_csv(&args.out.join("timing.csv"), &timing)?;
    let steps_per_s = outcome.env_steps as f64 / elapsed.max(1e-9);
    write_json(
        &args.out.join("run.json"),
        &json!({
            "metrics_schema_version": METRICS_SCHEMA_VERSION,
            "algorithm": cfg.algorithm.name(),
            "preset": cfg.preset,
            "seed": cfg.seed,
            "episodes": cfg.episodes,
            "env_steps": outcome.env_steps,
            "wall_s": elapsed,
            "env_steps_per_s": steps_per_s,
            "summary": metrics::summarize(&outcome.records, None)?,
        }),
    )?;
    eprintln!(
        "done in {elapsed:.1} s ({steps_per_s:.0} env steps/s); outputs in {}",
        args.out.display()
    );
    Ok(())
}

fn parse_omegas(spec: &str) -> Result<Vec<PreferenceVector>> {
    let bad = || Error::Config(format!("cannot parse --omega `{spec}`"));
    if let Some(n) = spec.strip_prefix("sweep:") {
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if n < 2 {
            return Err(Error::Config("an omega sweep needs at least 2 values".into()));
        }
        return Ok(PreferenceVector::sweep(n));
    }
    spec.split(',')
        .map(|w| PreferenceVector::from_tran_weight(w.trim().parse().map_err(|_| bad())?))
        .collect()
}

fn run_config(checkpoint: &Path) -> Option<PathBuf> {
    checkpoint
        .ancestors()
        .skip(1)
        .take(2)
        .map(|dir| dir.join("config.toml"))
        .find(|p| p.is_file())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let fallback = run_config(&args.checkpoint);
    let cfg = args.cfg.load(fallback.as_deref(), false)?;
    let scenario = cfg.scenario();
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let policy = Policy::from_checkpoint(&ckpt, cfg.algorithm, scenario.observation_dim())?;
    let omegas = match &args.omega {
        Some(spec) => parse_omegas(spec)?,
        None => vec![PreferenceVector::from_tran_weight(cfg.eval_omega_tran)?],
    };
    let omegas = if policy.is_envelope() { omegas } else { omegas[..1].to_vec() };
    let episodes = args.cfg.episodes.unwrap_or(cfg.eval_episodes);
    create_dir(&args.out)?;

    let mut all: Vec<MetricsRecord> = Vec::new();
    let mut summaries: Vec<Summary> = Vec::new();
    let mut returns: Vec<ReturnRow> = Vec::new();
    for omega in &omegas {
        let records = run::evaluate(&policy, &scenario, cfg.agent.gamma, omega, episodes, cfg.seed, cfg.execution)?;
        let label_omega = policy.is_envelope().then_some(omega.tran());
        let s = metrics::summarize(&records, label_omega)?;
        eprintln!(
            "omega_tran {}  r_tran {:8.3}  r_tele {:10.3}  delta {:.3}  xi {:.3}",
            label_omega.map_or("-".into(), |w| format!("{w:.2}")),
            s.r_tran,
            s.r_tele,
            s.delta_e,
            s.xi_e
        );
        returns.push(ReturnRow {
            label: match label_omega {
                Some(w) => format!("{}@{w}", cfg.algorithm.name()),
                None => cfg.algorithm.name().into(),
            },
            r_tran: s.r_tran,
            r_tele: s.r_tele,
        });
        summaries.push(s);
        all.extend(records);
    }
    metrics::write_csv(&args.out.join("eval_metrics.csv"), &all)?;
    metrics::write_csv(&args.out.join("returns.csv"), &returns)?;
    write_json(
        &args.out.join("summary.json"),
        &json!({
            "metrics_schema_version": METRICS_SCHEMA_VERSION,
            "algorithm": cfg.algorithm.name(),
            "checkpoint": args.checkpoint,
            "episodes": episodes,
            "seed": cfg.seed,
            "rows": summaries,
        }),
    )?;
    eprintln!("outputs in {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct PointRow<'a> {
    source: &'a str,
    label: &'a str,
    r_tran: f64,
    r_tele: f64,
}

#[derive(Serialize)]
struct Ranked<'a> {
    source: &'a str,
    points: usize,
    hypervolume: f64,
}

fn cmd_pareto(args: ParetoArgs) -> Result<()> {
    let reference: Vec<f64> = args
        .reference
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse --reference `{}`", args.reference)))?;
    if reference.len() != 2 {
        return Err(Error::Config("--reference needs two values".into()));
    }
    let mut sources: Vec<(String, Vec<ReturnRow>)> = Vec::new();
    for path in &args.inputs {
        let rows: Vec<ReturnRow> = metrics::read_csv(path)?;
        if rows.is_empty() {
            return Err(Error::Empty("return-point file"));
        }
        sources.push((path.display().to_string(), rows));
    }
    let pooled: Vec<(&str, &ReturnRow)> = sources
        .iter()
        .flat_map(|(src, rows)| rows.iter().map(move |r| (src.as_str(), r)))
        .collect();
    let points: Vec<[f64; 2]> = pooled.iter().map(|(_, r)| [r.r_tran, r.r_tele]).collect();
    let to_rows = |idx: &[usize]| -> Vec<PointRow<'_>> {
        idx.iter()
            .map(|&i| PointRow {
                source: pooled[i].0,
                label: &pooled[i].1.label,
                r_tran: pooled[i].1.r_tran,
                r_tele: pooled[i].1.r_tele,
            })
            .collect()
    };
    let front = pareto::pareto_front(&points)?;
    let hull = pareto::ccs(&points)?;

    let mut ranking = Vec::new();
    for (src, rows) in &sources {
        let pts: Vec<[f64; 2]> = rows.iter().map(|r| [r.r_tran, r.r_tele]).collect();
        ranking.push(Ranked {
            source: src,
            points: pts.len(),
            hypervolume: pareto::hypervolume(&pts, &reference)?,
        });
    }
    ranking.sort_by(|a, b| b.hypervolume.total_cmp(&a.hypervolume));

    create_dir(&args.out)?;
    metrics::write_csv(&args.out.join("front.csv"), &to_rows(&front))?;
    metrics::write_csv(&args.out.join("ccs.csv"), &to_rows(&hull))?;
    let report = json!({
        "reference": reference,
        "points": points.len(),
        "front_size": front.len(),
        "ccs_size": hull.len(),
        "hypervolume": pareto::hypervolume(&points, &reference)?,
        "ranking": ranking,
    });
    write_json(&args.out.join("report.json"), &report)?;
    for r in &ranking {
        println!("{:>14.6}  {}", r.hypervolume, r.source);
    }
    println!("front {} / ccs {} of {} points", front.len(), hull.len(), points.len());
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<bool> {
    let names: Vec<&str> = if args.suite == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&args.suite.as_str()) {
        vec![args.suite.as_str()]
    } else {
        return Err(Error::Config(format!(
            "unknown suite `{}`; expected one of {} or all",
            args.suite,
            SUITES.join(", ")
        )));
    };
    let mut ok = true;
    for name in names {
        let started = Instant::now();
        let report = run_suite(name).expect("listed suite")?;
        let status = if report.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status}  {:<9} {} checks  {:.2} s",
            report.name,
            report.checks,
            started.elapsed().as_secs_f64()
        );
        for f in &report.failures {
            println!("      {f}");
        }
        ok &= report.passed();
    }
    for path in &args.checkpoint {
        match Checkpoint::load(path) {
            Ok(_) => println!("PASS  checkpoint {}", path.display()),
            Err(e) => {
                println!("FAIL  {e}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Pareto(a) => cmd_pareto(a).map(|_| true),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
