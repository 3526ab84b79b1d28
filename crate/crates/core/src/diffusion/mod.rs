//! Noise schedules, the time-conditioned noise-prediction network, the
//! denoising objective and single-domain training.

mod checkpoint;
mod model;
mod nn;
mod schedule;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use model::{DenoiserModel, EpsPredictor};
pub use nn::{time_embedding, MlpArch};
pub use schedule::{forward_sample, make_schedule, NoiseSchedule, ScheduleKind, ALPHA_T_CEILING};
pub use train::{
    denoise_loss, draw_noise, loss_and_grad, loss_value, train, NoiseDraws, TrainConfig, TrainLog,
};
