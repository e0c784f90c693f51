//! Scene radiance recovery, channel by channel.

use crate::airlight::Airlight;
use crate::error::{check_dims, DefogError, Result};
use crate::image::{Channel, Image};
use crate::transmittance::ChannelTransmittances;

/// Restored radiance before clamping, one plane per channel.
pub fn restore_unclamped(img: &Image, t: &ChannelTransmittances, airlight: &Airlight, t0: f64) -> Result<[Vec<f64>; 3]> {
    check_dims(img.dims(), t.dims())?;
    if !(t0 > 0.0 && t0 < 1.0) {
        return Err(DefogError::InvalidParameter(format!("t0 must lie in (0, 1), got {t0}")));
    }
    let a = airlight.components();
    Ok(Channel::ALL.map(|c| {
        let ac = a[c.index()];
        img.plane(c)
            .iter()
            .zip(t.get(c).values())
            .map(|(&i, &tc)| (i - ac) / tc.max(t0) + ac)
            .collect()
    }))
}

/// `J_c = (I_c - A_c) / max(t_c, t0) + A_c`, clamped to `[0, 1]`.
pub fn restore(img: &Image, t: &ChannelTransmittances, airlight: &Airlight, t0: f64) -> Result<Image> {
    let planes = restore_unclamped(img, t, airlight, t0)?;
    Image::from_planes_clamped(img.width(), img.height(), planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ScalarMap;

    fn image() -> Image {
        Image::from_fn(4, 3, |x, y| [x as f64 / 4.0, y as f64 / 3.0, 0.5]).unwrap()
    }

    #[test]
    fn unit_transmittance_is_identity() {
        let img = image();
        let t = ChannelTransmittances::shared(ScalarMap::filled(4, 3, 1.0).unwrap());
        let a = Airlight::new(0.9, 0.8, 0.7).unwrap();
        assert_eq!(restore(&img, &t, &a, 0.1).unwrap(), img);
    }

    #[test]
    fn airlight_pixels_are_fixed() {
        let a = Airlight::new(0.9, 0.8, 0.7).unwrap();
        let img = Image::filled(4, 3, a.components()).unwrap();
        let t = ChannelTransmittances::shared(ScalarMap::from_fn(4, 3, |x, _| 0.05 + 0.2 * x as f64).unwrap());
        let out = restore(&img, &t, &a, 0.1).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn floor_replaces_small_transmittance() {
        let a = Airlight::gray(1.0).unwrap();
        let img = Image::filled(1, 1, [0.95; 3]).unwrap();
        let t = ChannelTransmittances::shared(ScalarMap::filled(1, 1, 0.01).unwrap());
        let out = restore_unclamped(&img, &t, &a, 0.1).unwrap();
        // (0.95 - 1) / 0.1 + 1
        assert!((out[0][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn output_is_clamped() {
        let a = Airlight::gray(0.5).unwrap();
        let img = Image::filled(1, 1, [0.0, 1.0, 0.5]).unwrap();
        let t = ChannelTransmittances::shared(ScalarMap::filled(1, 1, 0.2).unwrap());
        let out = restore(&img, &t, &a, 0.1).unwrap();
        assert_eq!(out.pixel(0, 0), [0.0, 1.0, 0.5]);
    }

    #[test]
    fn rejects_bad_floor_and_dims() {
        let img = image();
        let a = Airlight::gray(1.0).unwrap();
        let t = ChannelTransmittances::shared(ScalarMap::filled(4, 3, 1.0).unwrap());
        assert!(restore(&img, &t, &a, 0.0).is_err());
        let t = ChannelTransmittances::shared(ScalarMap::filled(3, 3, 1.0).unwrap());
        assert!(restore(&img, &t, &a, 0.1).is_err());
    }
}
