//! Dark channel: the minimum over all color channels and a square window.
//!
//! The filter is computed as a per-pixel channel minimum followed by two
//! separable 1-D passes over `(value, channel)` pairs ordered
//! lexicographically. Since `min` is exact this equals the brute-force
//! window minimum bit for bit, and the lexicographic order gives the
//! R < G < B tie-break for free.

use rayon::prelude::*;

use crate::airlight::Airlight;
use crate::error::{DefogError, Result};
use crate::image::{Channel, ChannelIndexMap, Image, ScalarMap};

/// Which channel is recorded for a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelAttribution {
    /// Channel of the winning `(c, y)` pair over the whole window.
    #[default]
    Window,
    /// Channel attaining the minimum at the center pixel only.
    Center,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarkChannelResult {
    pub values: ScalarMap,
    pub channel: ChannelIndexMap,
}

pub fn dark_channel(img: &Image, window_radius: usize) -> DarkChannelResult {
    dark_channel_with(img, window_radius, ChannelAttribution::Window)
}

pub fn dark_channel_with(img: &Image, window_radius: usize, attribution: ChannelAttribution) -> DarkChannelResult {
    let planes = img.planes();
    let per_pixel = channel_min(img.dims(), |c, i| planes[c][i]);
    window_min(img.dims(), per_pixel, window_radius, attribution)
}

/// Dark channel of `I^c / A^c`. Values can exceed 1 where the image is
/// brighter than the airlight.
pub fn normalized_dark_channel(img: &Image, airlight: &Airlight, window_radius: usize) -> Result<DarkChannelResult> {
    normalized_dark_channel_with(img, airlight, window_radius, ChannelAttribution::Window)
}

pub fn normalized_dark_channel_with(
    img: &Image,
    airlight: &Airlight,
    window_radius: usize,
    attribution: ChannelAttribution,
) -> Result<DarkChannelResult> {
    let a = airlight.components();
    if let Some(bad) = a.iter().find(|&&v| !(v > 0.0)) {
        return Err(DefogError::InvalidParameter(format!(
            "airlight component must be positive, got {bad}"
        )));
    }
    let planes = img.planes();
    let per_pixel = channel_min(img.dims(), |c, i| planes[c][i] / a[c]);
    Ok(window_min(img.dims(), per_pixel, window_radius, attribution))
}

type Entry = (f64, Channel);

#[inline]
fn lesser(a: Entry, b: Entry) -> Entry {
    // strict `<` on value, channel order on ties
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

fn channel_min<F>(dims: (usize, usize), sample: F) -> Vec<Entry>
where
    F: Fn(usize, usize) -> f64,
{
    (0..dims.0 * dims.1)
        .map(|i| {
            let mut best = (sample(0, i), Channel::R);
            for c in [Channel::G, Channel::B] {
                best = lesser(best, (sample(c.index(), i), c));
            }
            best
        })
        .collect()
}

fn window_min(
    (w, h): (usize, usize),
    per_pixel: Vec<Entry>,
    r: usize,
    attribution: ChannelAttribution,
) -> DarkChannelResult {
    let mut horizontal = vec![(0.0, Channel::R); w * h];
    horizontal
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            let src = &per_pixel[y * w..(y + 1) * w];
            for (x, out) in row.iter_mut().enumerate() {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                *out = src[lo..=hi].iter().copied().reduce(lesser).unwrap();
            }
        });

    let mut full = vec![(0.0, Channel::R); w * h];
    full.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for (x, out) in row.iter_mut().enumerate() {
            *out = (lo..=hi)
                .map(|yy| horizontal[yy * w + x])
                .reduce(lesser)
                .unwrap();
        }
    });

    let values = full.iter().map(|e| e.0).collect();
    let labels = match attribution {
        ChannelAttribution::Window => full.iter().map(|e| e.1).collect(),
        ChannelAttribution::Center => per_pixel.iter().map(|e| e.1).collect(),
    };
    DarkChannelResult {
        values: ScalarMap::new(w, h, values).expect("dims already validated"),
        channel: ChannelIndexMap::new(w, h, labels).expect("dims already validated"),
    }
}
