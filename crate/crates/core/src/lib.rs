//! Single-image dehazing built on the dark channel prior.
//!
//! The pipeline estimates the atmospheric light, computes a rough
//! transmittance from the normalized dark channel of a down-sampled copy,
//! refines it with the closed-form matting Laplacian, interpolates it back to
//! full size, derives a transmittance per color channel from relative
//! attenuation coefficients and finally inverts the scattering model
//! channel by channel. [`fogsim`] provides the forward model used to check
//! the inverse against ground truth.
//!
//! ```no_run
//! use defog::{dehaze, load_image, save_image, DehazeParams};
//!
//! let hazy = load_image("hazy.png")?;
//! let out = dehaze(&hazy, &DehazeParams::default(), None)?;
//! save_image(&out.image, "clear.png")?;
//! # Ok::<(), defog::DefogError>(())
//! ```

pub mod airlight;
pub mod cli;
pub mod darkchannel;
pub mod error;
pub mod fogsim;
pub mod image;
pub mod matting;
pub mod metrics;
pub mod pipeline;
pub mod restore;
pub mod transmittance;

pub use crate::airlight::{estimate_airlight, Airlight};
pub use crate::darkchannel::{dark_channel, normalized_dark_channel, ChannelAttribution, DarkChannelResult};
pub use crate::error::{DefogError, Result};
pub use crate::fogsim::{synthesize, transmittance_of, FogScene};
pub use crate::image::{
    downsample_area, load_image, save_image, upsample_bicubic, Channel, ChannelIndexMap, Image, ScalarMap,
};
pub use crate::matting::{build_matting_laplacian, refine_transmittance, SolveReport, SolverOptions, SparseSymMatrix};
pub use crate::metrics::{bench_pipeline, mean_abs_error, mean_saturation, BenchReport};
pub use crate::pipeline::{dehaze, Dehazed};
pub use crate::restore::restore;
pub use crate::transmittance::{
    per_channel_transmittance, refine_pipeline, rough_transmittance, BetaRatios, ChannelTransmittances, DehazeParams,
};
