//! Reference implementations shared by the integration tests. These are
//! deliberately naive and share no code with the library's fast paths.

#![allow(dead_code)]

use defog::{Airlight, Channel, Image, ScalarMap};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap()
}

/// Random image quantized to 8-bit levels, which produces exact ties.
pub fn random_quantized_image(rng: &mut impl Rng, w: usize, h: usize, levels: u8) -> Image {
    Image::from_fn(w, h, |_, _| {
        [0, 1, 2].map(|_| f64::from(rng.gen_range(0..levels)) / f64::from(levels - 1))
    })
    .unwrap()
}

pub fn random_map(rng: &mut impl Rng, w: usize, h: usize) -> ScalarMap {
    ScalarMap::from_fn(w, h, |_, _| rng.gen()).unwrap()
}

/// Exhaustive window minimum over `source(c, x, y)`; returns the minimum and
/// the smallest channel index attaining it anywhere in the window.
pub fn brute_dark<F>(w: usize, h: usize, r: usize, source: F) -> (Vec<f64>, Vec<usize>)
where
    F: Fn(usize, usize, usize) -> f64,
{
    let mut values = Vec::new();
    let mut channels = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::INFINITY;
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    for c in 0..3 {
                        best = best.min(source(c, xx, yy));
                    }
                }
            }
            let mut channel = 3;
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    for c in 0..3 {
                        if source(c, xx, yy) == best {
                            channel = channel.min(c);
                        }
                    }
                }
            }
            values.push(best);
            channels.push(channel);
        }
    }
    (values, channels)
}

pub fn brute_dark_of(img: &Image, r: usize) -> (Vec<f64>, Vec<usize>) {
    brute_dark(img.width(), img.height(), r, |c, x, y| img.pixel(x, y)[c])
}

pub fn brute_normalized_dark_of(img: &Image, a: &Airlight, r: usize) -> (Vec<f64>, Vec<usize>) {
    let comps = a.components();
    brute_dark(img.width(), img.height(), r, |c, x, y| img.pixel(x, y)[c] / comps[c])
}

/// Dense matting Laplacian assembled window by window with a general 3x3
/// inverse.
pub fn dense_laplacian(img: &Image, eps: f64) -> DMatrix<f64> {
    let (w, h) = img.dims();
    let n = w * h;
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for cy in 1..h - 1 {
        for cx in 1..w - 1 {
            let idx: Vec<usize> = (cy - 1..=cy + 1)
                .flat_map(|y| (cx - 1..=cx + 1).map(move |x| y * w + x))
                .collect();
            let colors: Vec<Vector3<f64>> = idx
                .iter()
                .map(|&i| {
                    let p = img.pixel_at(i);
                    Vector3::new(p[0], p[1], p[2])
                })
                .collect();
            let mean = colors.iter().fold(Vector3::zeros(), |acc, c| acc + c) / 9.0;
            let mut cov = Matrix3::zeros();
            for c in &colors {
                cov += (c - mean) * (c - mean).transpose();
            }
            cov /= 9.0;
            let inv = (cov + Matrix3::identity() * (eps / 9.0)).try_inverse().unwrap();
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    let affinity = (colors[a] - mean).dot(&(inv * (colors[b] - mean)));
                    let delta = if i == j { 1.0 } else { 0.0 };
                    lap[(i, j)] += delta - (1.0 + affinity) / 9.0;
                }
            }
        }
    }
    lap
}

/// Direct solve of `(L + lambda I) t = lambda t_rough`, clamped to `[0, 1]`.
pub fn dense_refine(lap: &DMatrix<f64>, rough: &ScalarMap, lambda: f64) -> Vec<f64> {
    let n = lap.nrows();
    let a = lap + DMatrix::<f64>::identity(n, n) * lambda;
    let b = DVector::from_iterator(n, rough.values().iter().map(|v| v * lambda));
    let x = a.lu().solve(&b).unwrap();
    x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Keys cubic convolution kernel with a = -0.5.
pub fn keys_kernel(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Non-separable 16-tap bicubic reference with clamp-to-edge addressing.
pub fn reference_bicubic(map: &ScalarMap, tw: usize, th: usize) -> Vec<f64> {
    let (w, h) = map.dims();
    let sx = w as f64 / tw as f64;
    let sy = h as f64 / th as f64;
    let mut out = Vec::with_capacity(tw * th);
    for oy in 0..th {
        for ox in 0..tw {
            let fx = (ox as f64 + 0.5) * sx - 0.5;
            let fy = (oy as f64 + 0.5) * sy - 0.5;
            let (bx, by) = (fx.floor() as i64, fy.floor() as i64);
            let mut v = 0.0;
            for j in by - 1..=by + 2 {
                for i in bx - 1..=bx + 2 {
                    let wgt = keys_kernel(fx - i as f64) * keys_kernel(fy - j as f64);
                    let xi = i.clamp(0, w as i64 - 1) as usize;
                    let yj = j.clamp(0, h as i64 - 1) as usize;
                    v += wgt * map.get(xi, yj);
                }
            }
            out.push(v.clamp(0.0, 1.0));
        }
    }
    out
}

pub fn channel_label(c: Channel) -> usize {
    c.index()
}
