//! Image quality metrics and the wall-clock benchmark comparing the
//! full-resolution refinement against the down-sampled one.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::error::{check_dims, DefogError, Result};
use crate::image::{Channel, Image};
use crate::pipeline::dehaze;
use crate::transmittance::DehazeParams;

/// Mean of `|a - b|` over every pixel and channel.
pub fn mean_abs_error(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let total: f64 = Channel::ALL
        .iter()
        .map(|&c| a.plane(c).iter().zip(b.plane(c)).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum();
    Ok(total / (3 * a.pixel_count()) as f64)
}

pub fn mean_squared_error(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let total: f64 = Channel::ALL
        .iter()
        .map(|&c| a.plane(c).iter().zip(b.plane(c)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum();
    Ok(total / (3 * a.pixel_count()) as f64)
}

/// `10 log10(1 / MSE)`; infinite for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let mse = mean_squared_error(a, b)?;
    Ok(10.0 * (1.0 / mse).log10())
}

/// Mean HSV saturation `(max - min) / max`, with black pixels counted as 0.
pub fn mean_saturation(img: &Image) -> f64 {
    let n = img.pixel_count();
    let total: f64 = (0..n)
        .map(|i| {
            let p = img.pixel_at(i);
            let hi = p[0].max(p[1]).max(p[2]);
            let lo = p[0].min(p[1]).min(p[2]);
            if hi > 0.0 {
                (hi - lo) / hi
            } else {
                0.0
            }
        })
        .sum();
    total / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// Median wall-clock seconds at down-sample factor 1.
    pub full_seconds: f64,
    /// Median wall-clock seconds at the requested factor.
    pub fast_seconds: f64,
    pub speedup: f64,
}

pub const CSV_HEADER: &str = "name,w,h,t_full_s,t_fast_s,speedup";

impl BenchReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.4}",
            self.name, self.width, self.height, self.full_seconds, self.fast_seconds, self.speedup
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<BenchReport> {
        let cols: Vec<&str> = line.trim_end().split(',').collect();
        if cols.len() != 6 {
            return Err(DefogError::InvalidParameter(format!(
                "expected 6 CSV columns, got {}",
                cols.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| DefogError::InvalidParameter(format!("bad number {s:?}")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| DefogError::InvalidParameter(format!("bad integer {s:?}")))
        };
        Ok(BenchReport {
            name: cols[0].to_string(),
            width: int(cols[1])?,
            height: int(cols[2])?,
            full_seconds: num(cols[3])?,
            fast_seconds: num(cols[4])?,
            speedup: num(cols[5])?,
        })
    }
}

pub fn reports_to_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn reports_to_table(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>11} {:>12} {:>12} {:>9}",
        "image", "size", "full (s)", "fast (s)", "speedup"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<20} {:>11} {:>12.3} {:>12.3} {:>9.2}",
            r.name,
            format!("{}x{}", r.width, r.height),
            r.full_seconds,
            r.fast_seconds,
            r.speedup
        );
    }
    out
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2
    }
}

/// Median wall-clock time of a full dehaze at the given factor.
pub fn time_dehaze(img: &Image, params: &DehazeParams, factor: usize, repeats: usize) -> Result<Duration> {
    if repeats < 1 {
        return Err(DefogError::InvalidParameter("repeats must be >= 1".into()));
    }
    let params = DehazeParams {
        downsample_factor: factor,
        ..*params
    };
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = dehaze(img, &params, None)?;
        times.push(start.elapsed());
        std::hint::black_box(out);
    }
    Ok(median(times))
}

/// Times the pipeline at factor 1 and at `params.downsample_factor`.
pub fn bench_pipeline(name: &str, img: &Image, params: &DehazeParams, repeats: usize) -> Result<BenchReport> {
    params.validate()?;
    let full = time_dehaze(img, params, 1, repeats)?.as_secs_f64();
    let fast = time_dehaze(img, params, params.downsample_factor, repeats)?.as_secs_f64();
    // sub-resolution timers can report 0 on trivial inputs
    let full = full.max(1e-9);
    let fast = fast.max(1e-9);
    Ok(BenchReport {
        name: name.to_string(),
        width: img.width(),
        height: img.height(),
        full_seconds: full,
        fast_seconds: fast,
        speedup: full / fast,
    })
}
