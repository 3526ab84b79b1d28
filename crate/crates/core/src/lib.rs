//! Unpaired domain translation with two independently trained denoising
//! diffusion models.
//!
//! Each domain gets its own noise-prediction network trained only on that
//! domain's samples. Translation runs the deterministic DDIM ODE forward
//! through the source model to a shared Gaussian latent, then backward
//! through the target model. Since both directions are the same ODE,
//! source -> target -> source returns to the start up to discretization
//! error.
//!
//! Module map:
//!
//! - [`synth`]: the 2D toy domains and synthetic document-like patches.
//! - [`diffusion`]: noise schedules, the time-conditioned MLP, the
//!   denoising loss and per-domain training, checkpoints.
//! - [`ddim`]: deterministic DDIM steps, encode/decode, the latent file.
//! - [`translate`]: domain pairs, translation, cycle reports, and the
//!   two-party latent exchange in [`translate::party`].
//! - [`patches`]: sub-window / slide-window tiling and overlap stitching.
//! - [`metrics`]: PSNR, SSIM, cycle L2, manifold proximity.
//! - [`io`]: CSV, PGM/PNG and scatter-plot helpers.

// `!(a < b)` checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ddim;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod metrics;
pub mod patches;
pub mod synth;
pub mod translate;

pub use ddim::{decode, encode, s_ode, IntegrationPlan, LatentBatch};
pub use diffusion::{
    make_schedule, train, DenoiserModel, EpsPredictor, MlpArch, NoiseSchedule, ScheduleKind,
    TrainConfig,
};
pub use error::{Error, Result};
pub use patches::{slide_window, stitch, sub_window, PatchGrid};
pub use synth::{make_dataset, Domain, GrayPatch, PointSet};
pub use translate::{cycle_check, translate, CycleReport, DomainPair};
