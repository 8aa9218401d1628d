use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cgd::consensus::{register_with_correspondence, embed_correspondence, SamplingMode, ScoreMetric};
use cgd::embedder::load_checkpoint;
use cgd::harness::eval::{REPORT_FILE, TIMINGS_FILE};
use cgd::harness::train::{CHECKPOINT_FILE, CURVE_FILE};
use cgd::harness::{
    evaluate, generate_shape, make_eval_pair, read_cloud, stream_seed, train_with, write_cloud, Config, EvalReport,
    Method, ShapeKind,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "cgd", version, about = "Confidence-guided rigid registration of partial point clouds")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Xyz,
    Ply,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Self::Xyz => "xyz",
            Self::Ply => "ply",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    Confidence,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Cgd,
    Chamfer,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic shapes, or registration pairs with their ground truth.
    Synth {
        /// Shapes per kind.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 512)]
        points: usize,
        /// Restrict to one kind (torus, bent-prism, blob, stair).
        #[arg(long)]
        kind: Option<ShapeKind>,
        /// Emit an evaluation pair per shape instead of the bare shape.
        #[arg(long)]
        pairs: bool,
        #[arg(long, value_enum, default_value = "xyz")]
        format: Format,
    },
    /// Train the embedder; writes the checkpoint and the training curve.
    Train,
    /// Register SOURCE onto TARGET.
    Register {
        source: PathBuf,
        target: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        sampling: Option<Sampling>,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
        /// Also write the source cloud moved by the estimated transform.
        #[arg(long)]
        aligned: bool,
    },
    /// Run every method over the seeded evaluation pairs.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Chamfer consensus, no repulsion, no similarity, and uniform sampling
    /// against the full method.
    Ablate {
        /// Use this network for the full method instead of training one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> AnyResult<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim()).map_err(|m| format!("--set {kv}: {m}"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value) -> AnyResult<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn synth(cfg: &Config, out: &Path, count: usize, points: usize, kind: Option<ShapeKind>, pairs: bool, fmt: Format) -> AnyResult<()> {
    fs::create_dir_all(out)?;
    let kinds: Vec<ShapeKind> = kind.map_or_else(|| cfg.train.kinds.clone(), |k| vec![k]);
    let spec = cfg.augment;
    for &kind in &kinds {
        for i in 0..count {
            let seed = stream_seed(cfg.seed, kind as u64 + 100, i as u64);
            let shape = generate_shape(kind, points, seed)?;
            let stem = format!("{}_{i:03}", kind.name());
            if !pairs {
                write_cloud(&shape, out.join(format!("{stem}.{}", fmt.ext())))?;
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pair = make_eval_pair(&shape, &spec, &mut rng)?;
            write_cloud(&pair.x, out.join(format!("{stem}_src.{}", fmt.ext())))?;
            write_cloud(&pair.y, out.join(format!("{stem}_tgt.{}", fmt.ext())))?;
            write_json(
                &out.join(format!("{stem}_gt.json")),
                &json!({ "transform": pair.t_gt, "shared": pair.shared().len() }),
            )?;
        }
    }
    println!("wrote {} {} to {}", kinds.len() * count, if pairs { "pairs" } else { "shapes" }, out.display());
    Ok(())
}

fn train_into(cfg: &Config, out: &Path, tag: &str) -> AnyResult<cgd::embedder::EmbedderParams> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.txt"), cfg.to_text())?;
    let outcome = train_with(cfg, Some(out), |s| {
        eprintln!(
            "{tag}epoch {:>2}  lr {:.2e}  loss {:.4e} (rep {:.3e}, sim {:.3e}, con {:.3e})  monitor {:.4e}",
            s.epoch, s.lr, s.train.total, s.train.repulsion, s.train.similarity, s.train.contrastive, s.monitor.total
        )
    })?;
    outcome.write(out)?;
    Ok(outcome.params)
}

fn print_report(report: &EvalReport) {
    for m in &report.methods {
        println!(
            "{:<8} mean RMSE(R) {:>8.3}°  median {:>8.3}°  RMSE(t) {:.4}  failures {}",
            m.method.name(),
            m.mean_rmse_r,
            m.median_rmse_r,
            m.mean_rmse_t,
            m.failures
        );
    }
}

fn register_cmd(
    cfg: &Config,
    out: &Path,
    source: &Path,
    target: &Path,
    checkpoint: &Path,
    sampling: Option<Sampling>,
    metric: Option<Metric>,
    aligned: bool,
) -> AnyResult<()> {
    let x = read_cloud(source)?;
    let y = read_cloud(target)?;
    let params = load_checkpoint(checkpoint)?;
    let mut consensus = cfg.consensus;
    if let Some(s) = sampling {
        consensus.sampling = match s {
            Sampling::Confidence => SamplingMode::Confidence,
            Sampling::Uniform => SamplingMode::Uniform,
        };
    }
    if let Some(m) = metric {
        consensus.metric = match m {
            Metric::Cgd => ScoreMetric::Cgd,
            Metric::Chamfer => ScoreMetric::Chamfer,
        };
    }
    let p = embed_correspondence(&x, &y, &params)?;
    let reg = register_with_correspondence(&x, &y, &p, &consensus)?;
    fs::create_dir_all(out)?;
    write_json(
        &out.join("registration.json"),
        &json!({ "transform": reg.transform, "diagnostics": reg.diagnostics }),
    )?;
    if aligned {
        write_cloud(&reg.transform.apply(&x), out.join("aligned.xyz"))?;
    }
    let t = reg.transform;
    let r = t.rotation();
    for i in 0..3 {
        println!("{:>12.8} {:>12.8} {:>12.8} {:>12.8}", r[(i, 0)], r[(i, 1)], r[(i, 2)], t.translation()[i]);
    }
    println!(
        "best of {} candidates, score {:.6e}",
        reg.experiments.candidates.len(),
        reg.diagnostics.best_score
    );
    Ok(())
}

fn eval_cmd(cfg: &Config, out: &Path, checkpoint: &Path) -> AnyResult<()> {
    let params = load_checkpoint(checkpoint)?;
    let (report, timings) = evaluate(cfg, &params)?;
    fs::create_dir_all(out)?;
    report.write(&out.join(REPORT_FILE))?;
    write_json(&out.join(TIMINGS_FILE), &serde_json::to_value(&timings)?)?;
    print_report(&report);
    println!("{:.1} s", timings.total_s);
    Ok(())
}

fn ablate(cfg: &Config, out: &Path, checkpoint: Option<&Path>) -> AnyResult<()> {
    let full = match checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => train_into(cfg, &out.join("full"), "[full] ")?,
    };
    let (full_report, _) = evaluate(cfg, &full)?;
    let row = |label: &str, report: &EvalReport, m: Method| {
        let r = report.method(m).expect("method row");
        json!({ "variant": label, "mean_rmse_r": r.mean_rmse_r, "median_rmse_r": r.median_rmse_r,
                "mean_rmse_t": r.mean_rmse_t, "failures": r.failures })
    };
    let mut rows = vec![
        row("full", &full_report, Method::Cgd),
        row("chamfer_consensus", &full_report, Method::Chamfer),
    ];
    for (label, key) in [("no_repulsion", "lambda_r"), ("no_similarity", "lambda_sim")] {
        let mut variant = cfg.clone();
        variant.set(key, "0")?;
        let params = train_into(&variant, &out.join(label), &format!("[{label}] "))?;
        let (report, _) = evaluate(&variant, &params)?;
        rows.push(row(label, &report, Method::Cgd));
    }
    rows.push(row("ransac", &full_report, Method::Ransac));
    fs::create_dir_all(out)?;
    write_json(&out.join("ablation.json"), &json!({ "seed": cfg.seed, "rows": rows }))?;
    for r in &rows {
        println!("{:<18} mean RMSE(R) {:>8.3}°", r["variant"].as_str().unwrap(), r["mean_rmse_r"].as_f64().unwrap());
    }
    Ok(())
}

fn run(cli: Cli) -> AnyResult<()> {
    let cfg = load_config(&cli.common)?;
    let out = &cli.common.out;
    match cli.cmd {
        Command::Synth {
            count,
            points,
            kind,
            pairs,
            format,
        } => synth(&cfg, out, count, points, kind, pairs, format),
        Command::Train => {
            train_into(&cfg, out, "")?;
            println!("wrote {} and {}", out.join(CHECKPOINT_FILE).display(), out.join(CURVE_FILE).display());
            Ok(())
        }
        Command::Register {
            source,
            target,
            checkpoint,
            sampling,
            metric,
            aligned,
        } => register_cmd(&cfg, out, &source, &target, &checkpoint, sampling, metric, aligned),
        Command::Eval { checkpoint } => eval_cmd(&cfg, out, &checkpoint),
        Command::Ablate { checkpoint } => ablate(&cfg, out, checkpoint.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
