//! Forward haze model with a separate attenuation coefficient per channel:
//! `I_c = J_c * exp(-beta_c * d) + A_c * (1 - exp(-beta_c * d))`.
//!
//! One coefficient per channel is used for the whole image, i.e. the medium is
//! homogeneous along every ray.

use crate::airlight::Airlight;
use crate::error::{check_dims, DefogError, Result};
use crate::image::{Channel, Image, ScalarMap};
use crate::transmittance::{BetaRatios, ChannelTransmittances};

#[derive(Debug, Clone)]
pub struct FogScene {
    /// Haze-free radiance `J`.
    pub radiance: Image,
    /// Scene depth, arbitrary length units, non-negative.
    pub depth: ScalarMap,
    pub airlight: Airlight,
    /// Absolute attenuation coefficients, in inverse depth units.
    pub betas: BetaRatios,
}

impl FogScene {
    pub fn new(radiance: Image, depth: ScalarMap, airlight: Airlight, betas: BetaRatios) -> Result<FogScene> {
        let scene = FogScene {
            radiance,
            depth,
            airlight,
            betas,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.radiance.dims(), self.depth.dims())?;
        if let Some(d) = self.depth.values().iter().find(|&&d| d < 0.0) {
            return Err(DefogError::InvalidParameter(format!("negative depth {d}")));
        }
        BetaRatios::new(self.betas.r, self.betas.g, self.betas.b)?;
        Ok(())
    }
}

/// Per-channel transmittance `exp(-beta_c * d)`.
pub fn transmittance_of(scene: &FogScene) -> Result<ChannelTransmittances> {
    scene.validate()?;
    let (w, h) = scene.depth.dims();
    let map = |c: Channel| {
        let beta = scene.betas.get(c);
        ScalarMap::new(w, h, scene.depth.values().iter().map(|&d| (-beta * d).exp()).collect())
    };
    ChannelTransmittances::new(map(Channel::R)?, map(Channel::G)?, map(Channel::B)?)
}

pub fn synthesize(scene: &FogScene) -> Result<Image> {
    let t = transmittance_of(scene)?;
    let a = scene.airlight.components();
    let planes = Channel::ALL.map(|c| {
        let ac = a[c.index()];
        scene
            .radiance
            .plane(c)
            .iter()
            .zip(t.get(c).values())
            .map(|(&j, &tc)| j * tc + ac * (1.0 - tc))
            .collect()
    });
    let (w, h) = scene.radiance.dims();
    Image::from_planes_clamped(w, h, planes)
}

/// Deterministic test scene: `block`-sized tiles alternating between a
/// near-black neutral tile and a colored tile, values drawn from an integer
/// hash of the tile position and `seed`.
pub fn checker_scene(width: usize, height: usize, block: usize, seed: u64) -> Result<Image> {
    if block == 0 {
        return Err(DefogError::InvalidParameter("block size must be positive".into()));
    }
    Image::from_fn(width, height, |x, y| {
        let (bx, by) = (x / block, y / block);
        let h = mix(seed ^ ((bx as u64) << 32 | by as u64));
        let unit = |k: u32| ((h >> (k * 16)) & 0xffff) as f64 / 65535.0;
        if (bx + by) % 2 == 0 {
            [0.03 * unit(0); 3]
        } else {
            [0.1 + 0.85 * unit(0), 0.1 + 0.85 * unit(1), 0.1 + 0.85 * unit(2)]
        }
    })
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
