//! End-to-end dehazing: airlight, refined dark-channel transmittance,
//! per-channel transmittance and restoration.

use crate::airlight::{estimate_airlight, Airlight};
use crate::darkchannel::dark_channel;
use crate::error::Result;
use crate::image::{ChannelIndexMap, Image, ScalarMap};
use crate::matting::SolveReport;
use crate::restore::restore;
use crate::transmittance::{per_channel_transmittance, refine_pipeline, ChannelTransmittances, DehazeParams};

/// Everything produced by [`dehaze`], kept for debugging dumps.
#[derive(Debug, Clone)]
pub struct Dehazed {
    pub image: Image,
    pub airlight: Airlight,
    pub t_dark: ScalarMap,
    pub channel: ChannelIndexMap,
    pub transmittances: ChannelTransmittances,
    pub report: SolveReport,
}

/// Runs the full pipeline. When `airlight` is `None` it is estimated from the
/// full-resolution dark channel.
pub fn dehaze(img: &Image, params: &DehazeParams, airlight: Option<Airlight>) -> Result<Dehazed> {
    params.validate()?;
    let airlight = match airlight {
        Some(a) => a,
        None => estimate_airlight(img, &dark_channel(img, params.window_radius))?,
    };
    let refined = refine_pipeline(img, params, &airlight)?;
    let transmittances = per_channel_transmittance(&refined.t_dark, &refined.channel, &params.betas)?;
    let image = restore(img, &transmittances, &airlight, params.t0)?;
    Ok(Dehazed {
        image,
        airlight,
        t_dark: refined.t_dark,
        channel: refined.channel,
        transmittances,
        report: refined.report,
    })
}
