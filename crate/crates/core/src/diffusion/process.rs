use rand::Rng;

use crate::error::{Error, Result};
use crate::volume::VolumeGrid;

use super::rng::{self, chain_step_stream, standard_normal_volume};
use super::schedule::NoiseSchedule;

/// ε-predictor: estimates the unit Gaussian noise contained in a corrupted
/// volume at step `t`. Implementations must return a finite volume of the
/// input's resolution.
pub trait Denoiser {
    fn predict_eps(&self, corrupted: &VolumeGrid, t: usize) -> Result<VolumeGrid>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_eps(&self, corrupted: &VolumeGrid, t: usize) -> Result<VolumeGrid> {
        (**self).predict_eps(corrupted, t)
    }
}

fn check_step(sched: &NoiseSchedule, t: usize) -> Result<()> {
    if t == 0 || t > sched.steps() {
        return Err(Error::invalid_input(format!(
            "step {t} outside [1, {}]",
            sched.steps()
        )));
    }
    Ok(())
}

/// `C_t = √ᾱ_t · C_0 + √(1 − ᾱ_t) · ε`.
pub fn forward_corrupt(
    c0: &VolumeGrid,
    t: usize,
    eps: &VolumeGrid,
    sched: &NoiseSchedule,
) -> Result<VolumeGrid> {
    check_step(sched, t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    c0.zip_map(eps, |x, e| a * x + b * e)
}

/// One step of the forward Markov kernel:
/// `C_t = √α_t · C_{t−1} + √β_t · z`.
pub fn forward_step(
    prev: &VolumeGrid,
    t: usize,
    z: &VolumeGrid,
    sched: &NoiseSchedule,
) -> Result<VolumeGrid> {
    check_step(sched, t)?;
    let (a, b) = (sched.alpha(t).sqrt(), sched.beta(t).sqrt());
    prev.zip_map(z, |x, e| a * x + b * e)
}

/// A single draw of the training objective's random variables.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub t: usize,
    pub noise: VolumeGrid,
    pub corrupted: VolumeGrid,
}

/// Draws `t ~ U{1..T}` and `ε ~ N(0, I)` and corrupts `c0`.
pub fn draw_training_example(
    c0: &VolumeGrid,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<TrainingExample> {
    let t = rng.random_range(1..=sched.steps());
    let noise = standard_normal_volume(rng, c0.resolution(), c0.extent());
    let corrupted = forward_corrupt(c0, t, &noise, sched)?;
    Ok(TrainingExample {
        t,
        noise,
        corrupted,
    })
}

/// Mean over voxels of `(ε − ε̂)²`.
pub fn noise_mse(noise: &VolumeGrid, predicted: &VolumeGrid) -> Result<f64> {
    noise.check_same_shape(predicted)?;
    let n = noise.len() as f64;
    Ok(noise
        .values()
        .iter()
        .zip(predicted.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

#[derive(Debug, Clone)]
pub struct LossSample {
    pub t: usize,
    pub loss: f64,
    /// ∂loss/∂ε̂ per voxel, `2 (ε̂ − ε) / n`.
    pub grad_prediction: Vec<f64>,
}

/// One Monte-Carlo sample of the mean-squares noise-prediction objective.
pub fn training_loss(
    denoiser: &impl Denoiser,
    c0: &VolumeGrid,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<LossSample> {
    let ex = draw_training_example(c0, sched, rng)?;
    let pred = denoiser.predict_eps(&ex.corrupted, ex.t)?;
    let loss = noise_mse(&ex.noise, &pred)?;
    let n = pred.len() as f64;
    let grad_prediction = pred
        .values()
        .iter()
        .zip(ex.noise.values())
        .map(|(p, e)| 2.0 * (p - e) / n)
        .collect();
    Ok(LossSample {
        t: ex.t,
        loss,
        grad_prediction,
    })
}

fn checked_prediction(denoiser: &impl Denoiser, x: &VolumeGrid, t: usize) -> Result<VolumeGrid> {
    let eps = denoiser.predict_eps(x, t)?;
    if eps.resolution() != x.resolution() {
        return Err(Error::invalid_input(format!(
            "denoiser changed resolution {} -> {}",
            x.resolution(),
            eps.resolution()
        )));
    }
    Ok(eps)
}

/// Ancestral update with injected noise `z`:
/// `C_{t−1} = (C_t − β_t/√(1−ᾱ_t) · ε̂) / √α_t + σ_t z`. The noise is ignored
/// at `t = 1`.
pub fn ddpm_step_with_noise(
    ct: &VolumeGrid,
    t: usize,
    eps: &VolumeGrid,
    z: Option<&VolumeGrid>,
    sched: &NoiseSchedule,
) -> Result<VolumeGrid> {
    check_step(sched, t)?;
    let inv_sqrt_alpha = 1.0 / sched.alpha(t).sqrt();
    let coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let mean = ct.zip_map(eps, |x, e| inv_sqrt_alpha * (x - coef * e))?;
    match z {
        Some(z) if t > 1 => {
            let sigma = sched.sigma(t);
            mean.zip_map(z, |m, n| m + sigma * n)
        }
        _ => Ok(mean),
    }
}

pub fn ddpm_step(
    ct: &VolumeGrid,
    t: usize,
    denoiser: &impl Denoiser,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<VolumeGrid> {
    let eps = checked_prediction(denoiser, ct, t)?;
    if t > 1 {
        let z = standard_normal_volume(rng, ct.resolution(), ct.extent());
        ddpm_step_with_noise(ct, t, &eps, Some(&z), sched)
    } else {
        ddpm_step_with_noise(ct, t, &eps, None, sched)
    }
}

/// Deterministic (η = 0) jump from step `t` to an earlier step `t_prev`
/// (0 meaning the clean sample).
pub fn ddim_step(
    ct: &VolumeGrid,
    t: usize,
    t_prev: usize,
    eps: &VolumeGrid,
    sched: &NoiseSchedule,
) -> Result<VolumeGrid> {
    check_step(sched, t)?;
    if t_prev >= t {
        return Err(Error::invalid_input(format!(
            "DDIM target step {t_prev} must precede {t}"
        )));
    }
    let ab = sched.alpha_bar(t);
    let ab_prev = sched.alpha_bar(t_prev);
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    let (pa, pb) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    ct.zip_map(eps, |x, e| {
        let x0 = (x - sb * e) / sa;
        pa * x0 + pb * e
    })
}

/// Steps visited by the sampler, in decreasing order and ending at 1.
///
/// Factor 1 visits every step. Larger factors visit
/// `round(T / factor)` evenly spaced steps `1 + k · factor`.
pub fn sampling_steps(total: usize, subsample_factor: usize) -> Result<Vec<usize>> {
    if subsample_factor == 0 || subsample_factor > total {
        return Err(Error::invalid_config(format!(
            "subsample factor {subsample_factor} must lie in [1, {total}]"
        )));
    }
    let count = ((total + subsample_factor / 2) / subsample_factor).max(1);
    Ok((0..count).rev().map(|k| 1 + k * subsample_factor).collect())
}

/// Record of one reverse chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub seed: u64,
    pub chain: u64,
    pub steps_used: Vec<usize>,
    pub final_volume: VolumeGrid,
}

/// Runs one reverse chain from `C_T ~ N(0, I)`.
///
/// With `subsample_factor == 1` this is the full ancestral chain; otherwise
/// the deterministic η = 0 update over [`sampling_steps`]. Randomness comes
/// from the `(seed, chain)` streams described in [`super::rng`], so a chain
/// is bit-reproducible from its seed and index alone.
pub fn sample(
    denoiser: &impl Denoiser,
    sched: &NoiseSchedule,
    resolution: usize,
    extent: f64,
    subsample_factor: usize,
    seed: u64,
    chain: u64,
) -> Result<SampleTrace> {
    let steps = sampling_steps(sched.steps(), subsample_factor)?;
    let mut init_rng = rng::stream(seed, chain_step_stream(chain, 0));
    let mut x = standard_normal_volume(&mut init_rng, resolution, extent);
    for (i, &t) in steps.iter().enumerate() {
        let eps = checked_prediction(denoiser, &x, t)?;
        x = if subsample_factor == 1 {
            if t > 1 {
                let mut step_rng = rng::stream(seed, chain_step_stream(chain, t as u64));
                let z = standard_normal_volume(&mut step_rng, resolution, extent);
                ddpm_step_with_noise(&x, t, &eps, Some(&z), sched)?
            } else {
                ddpm_step_with_noise(&x, t, &eps, None, sched)?
            }
        } else {
            let t_prev = steps.get(i + 1).copied().unwrap_or(0);
            ddim_step(&x, t, t_prev, &eps, sched)?
        };
        if x.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("sampler diverged at step {t}")));
        }
    }
    Ok(SampleTrace {
        seed,
        chain,
        steps_used: steps,
        final_volume: x,
    })
}
