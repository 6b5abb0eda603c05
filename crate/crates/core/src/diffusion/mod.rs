//! Denoising diffusion over coefficient volumes.

mod oracle;
mod process;
pub mod rng;
mod schedule;

pub use oracle::{Affine, GaussianOracle};
pub use process::{
    ddim_step, ddpm_step, ddpm_step_with_noise, draw_training_example, forward_corrupt,
    forward_step, noise_mse, sample, sampling_steps, training_loss, Denoiser, LossSample,
    SampleTrace, TrainingExample,
};
pub use schedule::{NoiseSchedule, ScheduleConfig};
