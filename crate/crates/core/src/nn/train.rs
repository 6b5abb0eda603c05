use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::rng::{standard_normal_vec, stream};
use crate::diffusion::{Affine, NoiseSchedule, ScheduleConfig};
use crate::error::{Error, Result};
use crate::volume::VolumeGrid;
use crate::wavelet::WaveletPair;

use super::adam::{Adam, AdamConfig};
use super::checkpoint::Checkpoint;
use super::net::{ArchConfig, NetKind, Network};
use super::tape::Tape;
use super::tensor::Tensor;

/// Stream of the batch sampler; parameter init uses the plain seed.
const BATCH_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// CSV `iter,loss` log.
    pub log_path: Option<PathBuf>,
    /// Write an intermediate checkpoint every this many iterations (0: off).
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    /// Stop once the mean loss of the last `stop_window` iterations falls
    /// below this.
    pub stop_below: Option<f64>,
    pub stop_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            batch_size: 4,
            learning_rate: 1e-4,
            seed: 0,
            log_path: None,
            checkpoint_every: 0,
            checkpoint_path: None,
            stop_below: None,
            stop_window: 50,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.stop_below.is_some() && self.stop_window == 0 {
            return Err(Error::invalid_config("stop window must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid_config("batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid_config(format!(
                "bad learning rate {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Loss of every iteration, in order.
    pub losses: Vec<f64>,
}

struct Batch {
    input: Tensor,
    steps: Option<Vec<usize>>,
    target: Vec<f64>,
}

/// Mean squared error and its gradient with respect to the prediction.
fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    (loss / n, grad)
}

fn stack(volumes: &[&VolumeGrid]) -> Tensor {
    let n = volumes[0].resolution();
    let data = volumes
        .iter()
        .flat_map(|v| v.values().iter().copied())
        .collect();
    Tensor::new(vec![volumes.len(), 1, n, n, n], data).expect("consistent batch")
}

struct Norms {
    input: Affine,
    target: Affine,
    schedule: Option<ScheduleConfig>,
    resolution: usize,
}

fn run(
    mut net: Network,
    cfg: &TrainConfig,
    norms: Norms,
    mut next_batch: impl FnMut(&mut ChaCha8Rng) -> Result<Batch>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let adam_cfg = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, net.param_count());
    let mut rng = stream(cfg.seed, BATCH_STREAM);
    let mut log = match &cfg.log_path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "iter,loss")?;
            Some(w)
        }
        None => None,
    };
    let snapshot = |net: &Network, adam: &Adam, iters: usize| {
        Checkpoint::from_training(
            net,
            adam,
            norms.input,
            norms.target,
            norms.schedule,
            iters,
            norms.resolution,
        )
    };
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut grads = vec![0.0; net.param_count()];
    for iter in 1..=cfg.iterations {
        let batch = next_batch(&mut rng)?;
        let mut tape = Tape::new();
        let x = tape.input(batch.input, false);
        let out = net.forward_on(&mut tape, x, batch.steps.as_deref())?;
        let (loss, seed) = mse(tape.value(out).data(), &batch.target);
        tape.backward(out, seed)?;
        grads.iter_mut().for_each(|g| *g = 0.0);
        tape.accumulate_param_grads(&mut grads);
        let grad_norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Numerical(format!(
                "loss became {loss} at iteration {iter} (learning rate {}, gradient norm {grad_norm})",
                cfg.learning_rate
            )));
        }
        adam.update(net.params_mut(), &grads);
        losses.push(loss);
        if let Some(w) = log.as_mut() {
            writeln!(w, "{iter},{loss}")?;
        }
        if iter % 100 == 0 {
            log::debug!("iter {iter} loss {loss:.5}");
        }
        if cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 {
            if let Some(p) = &cfg.checkpoint_path {
                snapshot(&net, &adam, iter).save(p)?;
            }
        }
        if let Some(limit) = cfg.stop_below {
            let w = cfg.stop_window;
            if losses.len() >= w
                && losses[losses.len() - w..].iter().sum::<f64>() / (w as f64) < limit
            {
                log::info!("stopping at iteration {iter}: mean loss below {limit}");
                break;
            }
        }
    }
    if let Some(mut w) = log {
        w.flush()?;
    }
    Ok(TrainOutcome {
        checkpoint: snapshot(&net, &adam, losses.len()),
        losses,
    })
}

fn check_uniform<'a>(vols: impl IntoIterator<Item = &'a VolumeGrid>) -> Result<usize> {
    let mut res = None;
    for v in vols {
        match res {
            None => res = Some(v.resolution()),
            Some(r) if r != v.resolution() => {
                return Err(Error::invalid_input(format!(
                    "dataset mixes resolutions {r} and {}",
                    v.resolution()
                )))
            }
            _ => {}
        }
    }
    res.ok_or_else(|| Error::invalid_input("empty training set"))
}

/// Fits the ε-predictor to coarse volumes with the noise-prediction
/// objective. Volumes are normalized by one dataset-wide affine, which the
/// checkpoint records as `input_norm`.
pub fn train_generator(
    dataset: &[VolumeGrid],
    arch: ArchConfig,
    schedule: &ScheduleConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if arch.kind != NetKind::Denoiser {
        return Err(Error::invalid_config(
            "generator training needs a denoiser architecture",
        ));
    }
    let res = check_uniform(dataset)?;
    arch.check_resolution(res)?;
    let sched = NoiseSchedule::from_config(schedule)?;
    let norm = Affine::fit(dataset)?;
    let data: Vec<VolumeGrid> = dataset.iter().map(|v| norm.apply(v)).collect();
    let net = Network::new(arch, cfg.seed)?;
    let voxels = res * res * res;
    let norms = Norms {
        input: norm,
        target: Affine::default(),
        schedule: Some(*schedule),
        resolution: res,
    };
    run(net, cfg, norms, |rng| {
        let mut input = Vec::with_capacity(cfg.batch_size * voxels);
        let mut steps = Vec::with_capacity(cfg.batch_size);
        let mut target = Vec::with_capacity(cfg.batch_size * voxels);
        for _ in 0..cfg.batch_size {
            let c0 = &data[rng.random_range(0..data.len())];
            let t = rng.random_range(1..=sched.steps());
            let eps = standard_normal_vec(rng, voxels);
            let ab = sched.alpha_bar(t);
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            input.extend(c0.values().iter().zip(&eps).map(|(x, e)| a * x + b * e));
            steps.push(t);
            target.extend(eps);
        }
        Ok(Batch {
            input: Tensor::new(vec![cfg.batch_size, 1, res, res, res], input)?,
            steps: Some(steps),
            target,
        })
    })
}

/// Fits the detail regressor `C^J → D^J` with a mean squared error.
/// Inputs and targets get separate dataset-wide affines.
pub fn train_detail(
    pairs: &[WaveletPair],
    arch: ArchConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if arch.kind != NetKind::Detail {
        return Err(Error::invalid_config(
            "detail training needs a detail architecture",
        ));
    }
    let res = check_uniform(pairs.iter().map(|p| &p.coarse))?;
    check_uniform(pairs.iter().map(|p| &p.detail))?;
    arch.check_resolution(res)?;
    let input_norm = Affine::fit(pairs.iter().map(|p| &p.coarse))?;
    let target_norm = Affine::fit(pairs.iter().map(|p| &p.detail))?;
    let inputs: Vec<VolumeGrid> = pairs.iter().map(|p| input_norm.apply(&p.coarse)).collect();
    let targets: Vec<VolumeGrid> = pairs.iter().map(|p| target_norm.apply(&p.detail)).collect();
    let net = Network::new(arch, cfg.seed)?;
    let norms = Norms {
        input: input_norm,
        target: target_norm,
        schedule: None,
        resolution: res,
    };
    run(net, cfg, norms, |rng| {
        let picks: Vec<usize> = (0..cfg.batch_size)
            .map(|_| rng.random_range(0..pairs.len()))
            .collect();
        let input = stack(&picks.iter().map(|&i| &inputs[i]).collect::<Vec<_>>());
        let target = picks
            .iter()
            .flat_map(|&i| targets[i].values().iter().copied())
            .collect();
        Ok(Batch {
            input,
            steps: None,
            target,
        })
    })
}
