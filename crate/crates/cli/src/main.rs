//! `wavediff`: prepare datasets, train, generate and evaluate wavelet-domain
//! diffusion models of 3D shapes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use wavediff_core::nn::{Checkpoint, TrainConfig, TrainOutcome};
use wavediff_core::pipeline::{
    evaluate_meshes, generate_shapes, load_dataset, load_mesh_dir, pair_fidelity, prepare_dataset,
    run_ablation, train_detail_on, train_generator_on, AblationMode, PipelineConfig,
};
use wavediff_core::volume::TriangleMesh;
use wavediff_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wavediff",
    version,
    about = "Wavelet-domain diffusion for 3D shape generation"
)]
struct Cli {
    /// JSON pipeline configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a directory of OBJ meshes into wavelet coefficient pairs.
    Prepare {
        #[arg(long)]
        meshes: Option<PathBuf>,
        /// Dataset directory (pairs and manifest).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Train the coarse-volume generator.
    TrainGen(TrainArgs),
    /// Train the detail predictor.
    TrainDetail(TrainArgs),
    /// Sample shapes from trained checkpoints.
    Generate {
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Visit every f-th diffusion step (1: full chain).
        #[arg(long = "steps-div")]
        steps_div: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one directory of OBJ meshes against another.
    Evaluate {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
        /// Write the CSV report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the full pipeline with the detail-free ablation.
    Ablate {
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "steps-div")]
        steps_div: Option<usize>,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV loss log.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Stop early once the mean loss of the last 50 iterations drops below this.
    #[arg(long = "stop-below")]
    stop_below: Option<f64>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    generator: Option<PathBuf>,
    #[arg(long)]
    detail: Option<PathBuf>,
    /// Reconstruct with a zero detail volume.
    #[arg(long = "no-detail")]
    no_detail: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Surface samples per shape.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long = "eval-seed")]
    eval_seed: Option<u64>,
    /// Skip the EMD-based metrics.
    #[arg(long = "no-emd")]
    no_emd: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Full,
    NoDetail,
    Both,
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => Ok(fs::create_dir_all(p)?),
        _ => Ok(()),
    }
}

fn apply_train(args: &TrainArgs, cfg: &mut TrainConfig) {
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.log {
        cfg.log_path = Some(v.clone());
    }
    if args.stop_below.is_some() {
        cfg.stop_below = args.stop_below;
    }
}

fn apply_eval(args: &EvalArgs, cfg: &mut PipelineConfig) {
    if let Some(v) = args.points {
        cfg.evaluation.points = v;
    }
    if let Some(v) = args.eval_seed {
        cfg.evaluation.seed = v;
    }
    if args.no_emd {
        cfg.evaluation.emd = false;
    }
}

fn apply_generation(
    count: Option<usize>,
    seed: Option<u64>,
    steps_div: Option<usize>,
    cfg: &mut PipelineConfig,
) {
    if let Some(v) = count {
        cfg.generation.count = v;
    }
    if let Some(v) = seed {
        cfg.generation.seed = v;
    }
    if let Some(v) = steps_div {
        cfg.generation.subsample_factor = v;
    }
}

fn load_models(
    args: &ModelArgs,
    cfg: &mut PipelineConfig,
    need_detail: bool,
) -> Result<(Checkpoint, Option<Checkpoint>)> {
    if let Some(p) = &args.generator {
        cfg.paths.generator_checkpoint = p.clone();
    }
    if let Some(p) = &args.detail {
        cfg.paths.detail_checkpoint = p.clone();
    }
    require(&cfg.paths.generator_checkpoint, "generator checkpoint")?;
    let gen = Checkpoint::load(&cfg.paths.generator_checkpoint)?;
    let detail = if need_detail {
        require(&cfg.paths.detail_checkpoint, "detail checkpoint")?;
        Some(Checkpoint::load(&cfg.paths.detail_checkpoint)?)
    } else {
        None
    };
    Ok((gen, detail))
}

fn report_training(outcome: &TrainOutcome, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    outcome.checkpoint.save(path)?;
    let tail = &outcome.losses[outcome.losses.len().saturating_sub(50)..];
    let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    println!(
        "trained {} iterations; mean loss over the last {} = {mean:.6}; checkpoint {}",
        outcome.losses.len(),
        tail.len(),
        path.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Prepare {
            meshes,
            out,
            resolution,
            levels,
        } => {
            if let Some(v) = meshes {
                cfg.paths.meshes = v;
            }
            if let Some(v) = out {
                cfg.paths.dataset = v;
            }
            if let Some(v) = resolution {
                cfg.tsdf.resolution = v;
            }
            if let Some(v) = levels {
                cfg.wavelet.levels = v;
            }
            require(&cfg.paths.meshes, "mesh directory")?;
            let report = prepare_dataset(&cfg.paths.meshes, &cfg.paths.dataset, &cfg)?;
            for f in &report.manifest.failures {
                warn!("failed: {} ({})", f.source.display(), f.reason);
            }
            println!(
                "{} pairs in {} ({} computed, {} reused, {} failed)",
                report.manifest.entries.len(),
                cfg.paths.dataset.display(),
                report.computed,
                report.reused,
                report.manifest.failures.len()
            );
            if let Some(first) = report.manifest.entries.first() {
                let fid = pair_fidelity(&TriangleMesh::read_obj(&first.source)?, &cfg)?;
                println!(
                    "round trip on {}: mean |dev| {:.3e} ({:.3}% of tau), max |dev| {:.3e} ({:.3}% of tau)",
                    first.source.display(),
                    fid.mean_abs,
                    100.0 * fid.mean_abs / fid.truncation,
                    fid.max_abs,
                    100.0 * fid.max_abs / fid.truncation
                );
            }
        }
        Command::TrainGen(args) => {
            apply_train(&args, &mut cfg.train_generator);
            let dataset = args.dataset.unwrap_or(cfg.paths.dataset.clone());
            let out = args.out.unwrap_or(cfg.paths.generator_checkpoint.clone());
            require(&dataset, "dataset directory")?;
            let pairs = load_dataset(&dataset, &cfg)?;
            info!("training the generator on {} shapes", pairs.len());
            report_training(&train_generator_on(&pairs, &cfg)?, &out)?;
        }
        Command::TrainDetail(args) => {
            apply_train(&args, &mut cfg.train_detail);
            let dataset = args.dataset.unwrap_or(cfg.paths.dataset.clone());
            let out = args.out.unwrap_or(cfg.paths.detail_checkpoint.clone());
            require(&dataset, "dataset directory")?;
            let pairs = load_dataset(&dataset, &cfg)?;
            info!("training the detail predictor on {} pairs", pairs.len());
            report_training(&train_detail_on(&pairs, &cfg)?, &out)?;
        }
        Command::Generate {
            models,
            count,
            seed,
            steps_div,
            out,
        } => {
            apply_generation(count, seed, steps_div, &mut cfg);
            if let Some(v) = out {
                cfg.paths.output = v;
            }
            let (gen, detail) = load_models(&models, &mut cfg, !models.no_detail)?;
            let outcome = generate_shapes(
                &gen,
                detail.as_ref(),
                cfg.generation.count,
                &cfg.paths.output,
                &cfg,
            )?;
            println!(
                "wrote {} meshes to {}",
                outcome.meshes.len(),
                cfg.paths.output.display()
            );
        }
        Command::Evaluate {
            gen,
            reference,
            eval,
            out,
        } => {
            apply_eval(&eval, &mut cfg);
            cfg.validate()?;
            require(&gen, "generated mesh directory")?;
            require(&reference, "reference mesh directory")?;
            let strip = |v: Vec<(PathBuf, _)>| v.into_iter().map(|(_, m)| m).collect::<Vec<_>>();
            let g = strip(load_mesh_dir(&gen)?);
            let r = strip(load_mesh_dir(&reference)?);
            let report = evaluate_meshes(&g, &r, &cfg.evaluation)?;
            emit(&report.to_csv(), out.as_deref())?;
        }
        Command::Ablate {
            mode,
            dataset,
            models,
            count,
            seed,
            steps_div,
            eval,
            out,
        } => {
            apply_generation(count, seed, steps_div, &mut cfg);
            apply_eval(&eval, &mut cfg);
            if let Some(v) = dataset {
                cfg.paths.dataset = v;
            }
            if let Some(v) = out {
                cfg.paths.output = v;
            }
            let modes = match mode {
                ModeArg::Full => vec![AblationMode::Full],
                ModeArg::NoDetail => vec![AblationMode::NoDetail],
                ModeArg::Both => vec![AblationMode::Full, AblationMode::NoDetail],
            };
            let need_detail = modes.contains(&AblationMode::Full);
            let (gen, detail) = load_models(&models, &mut cfg, need_detail)?;
            require(&cfg.paths.dataset, "dataset directory")?;
            let pairs = load_dataset(&cfg.paths.dataset, &cfg)?;
            for m in modes {
                let outcome =
                    run_ablation(m, &pairs, &gen, detail.as_ref(), &cfg.paths.output, &cfg)?;
                let path = cfg.paths.output.join(m.label()).join("report.csv");
                let csv = outcome.report.to_csv();
                fs::write(&path, &csv)?;
                println!("# {m} ({})", path.display());
                print!("{csv}");
            }
        }
    }
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            ensure_parent(p)?;
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
