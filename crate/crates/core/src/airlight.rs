//! Atmospheric light estimation from the brightest dark-channel pixels.

use std::fmt;

use crate::darkchannel::DarkChannelResult;
use crate::error::{check_dims, DefogError, Result};
use crate::image::Image;

/// Fraction of pixels (by dark-channel value) considered as candidates.
pub const CANDIDATE_FRACTION: f64 = 0.001;

/// Lower bound applied to every estimated component.
pub const COMPONENT_FLOOR: f64 = 0.05;

/// Atmospheric light color, each component in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Airlight {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Airlight {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Airlight> {
        for v in [r, g, b] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(DefogError::InvalidParameter(format!(
                    "airlight component {v} outside (0, 1]"
                )));
            }
        }
        Ok(Airlight { r, g, b })
    }

    pub fn gray(v: f64) -> Result<Airlight> {
        Airlight::new(v, v, v)
    }

    #[inline]
    pub fn components(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

impl fmt::Display for Airlight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.r, self.g, self.b)
    }
}

/// Picks the top `ceil(N * 0.001)` pixels by dark-channel value, then the one
/// with the largest `R + G + B` among them. Ties go to the earlier pixel in
/// raster order.
pub fn estimate_airlight(img: &Image, dark: &DarkChannelResult) -> Result<Airlight> {
    let [r, g, b] = brightest_candidate(img, dark)?;
    Airlight::new(
        r.max(COMPONENT_FLOOR),
        g.max(COMPONENT_FLOOR),
        b.max(COMPONENT_FLOOR),
    )
}

/// The selected pixel color before the component floor is applied.
pub fn brightest_candidate(img: &Image, dark: &DarkChannelResult) -> Result<[f64; 3]> {
    check_dims(img.dims(), dark.values.dims())?;
    let n = img.pixel_count();
    let count = ((n as f64 * CANDIDATE_FRACTION).ceil() as usize).clamp(1, n);

    let values = dark.values.values();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal dark values keep raster order
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));

    let mut best = order[0];
    let mut best_sum = img.pixel_at(best).iter().sum::<f64>();
    for &i in &order[1..count] {
        let s = img.pixel_at(i).iter().sum::<f64>();
        if s > best_sum || (s == best_sum && i < best) {
            best = i;
            best_sum = s;
        }
    }
    Ok(img.pixel_at(best))
}
