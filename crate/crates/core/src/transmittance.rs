//! Transmittance estimation.
//!
//! The rough map `1 - omega * dark` is computed on a down-sampled copy of the
//! input, refined with the matting Laplacian at that size and brought back to
//! full resolution with bicubic interpolation. Transmittance of the remaining
//! channels follows from the attenuation ratios: with `t = exp(-beta * d)`,
//! `t_c = t_d ^ (beta_c / beta_d)`.

use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::airlight::Airlight;
use crate::darkchannel::{normalized_dark_channel, normalized_dark_channel_with, ChannelAttribution, DarkChannelResult};
use crate::error::{check_dims, DefogError, Result};
use crate::image::{downsample_area, upsample_bicubic, Channel, ChannelIndexMap, Image, ScalarMap};
use crate::matting::{build_matting_laplacian, refine_transmittance, SolveReport, SolverOptions};

/// Relative attenuation coefficients per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaRatios {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl BetaRatios {
    /// Red : green : blue = 1 : 1.28 : 1.61.
    pub const DEFAULT: BetaRatios = BetaRatios {
        r: 1.0,
        g: 1.28,
        b: 1.61,
    };

    /// Equal attenuation in every channel (single shared transmittance).
    pub const UNIFORM: BetaRatios = BetaRatios {
        r: 1.0,
        g: 1.0,
        b: 1.0,
    };

    pub fn new(r: f64, g: f64, b: f64) -> Result<BetaRatios> {
        for v in [r, g, b] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DefogError::InvalidParameter(format!(
                    "attenuation coefficient must be positive, got {v}"
                )));
            }
        }
        Ok(BetaRatios { r, g, b })
    }

    #[inline]
    pub fn components(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    #[inline]
    pub fn get(&self, c: Channel) -> f64 {
        self.components()[c.index()]
    }

    /// Exponent taking the dark channel's transmittance to channel `target`.
    #[inline]
    pub fn exponent(&self, target: Channel, dark: Channel) -> f64 {
        self.get(target) / self.get(dark)
    }
}

impl Default for BetaRatios {
    fn default() -> Self {
        BetaRatios::DEFAULT
    }
}

impl fmt::Display for BetaRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.r, self.g, self.b)
    }
}

impl FromStr for BetaRatios {
    type Err = DefogError;

    fn from_str(s: &str) -> Result<BetaRatios> {
        let [r, g, b] = parse_triple(s)?;
        BetaRatios::new(r, g, b)
    }
}

/// Parses `"a,b,c"` into three floats.
pub fn parse_triple(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(DefogError::InvalidParameter(format!("expected three comma-separated values, got {s:?}")));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse()
            .map_err(|_| DefogError::InvalidParameter(format!("not a number: {p:?}")))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTransmittances {
    pub r: ScalarMap,
    pub g: ScalarMap,
    pub b: ScalarMap,
}

impl ChannelTransmittances {
    pub fn new(r: ScalarMap, g: ScalarMap, b: ScalarMap) -> Result<ChannelTransmittances> {
        check_dims(r.dims(), g.dims())?;
        check_dims(r.dims(), b.dims())?;
        Ok(ChannelTransmittances { r, g, b })
    }

    /// The same map for all three channels.
    pub fn shared(t: ScalarMap) -> ChannelTransmittances {
        ChannelTransmittances {
            r: t.clone(),
            g: t.clone(),
            b: t,
        }
    }

    pub fn get(&self, c: Channel) -> &ScalarMap {
        match c {
            Channel::R => &self.r,
            Channel::G => &self.g,
            Channel::B => &self.b,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }
}

/// Every tunable of the dehazing pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DehazeParams {
    /// Fog retention factor, `0 < omega <= 1`.
    pub omega: f64,
    /// Dark-channel window radius; 2 gives a 5x5 window.
    pub window_radius: usize,
    /// Data-term weight of the matting solve.
    pub lambda: f64,
    /// Covariance regularizer of the matting Laplacian.
    pub eps: f64,
    /// Transmittance floor used during restoration.
    pub t0: f64,
    pub betas: BetaRatios,
    pub downsample_factor: usize,
    pub solver: SolverOptions,
    pub attribution: ChannelAttribution,
}

impl Default for DehazeParams {
    fn default() -> Self {
        DehazeParams {
            omega: 0.95,
            window_radius: 2,
            lambda: 1e-4,
            eps: 1e-7,
            t0: 0.1,
            betas: BetaRatios::DEFAULT,
            downsample_factor: 4,
            solver: SolverOptions::default(),
            attribution: ChannelAttribution::Window,
        }
    }
}

impl DehazeParams {
    /// Original single-transmittance algorithm: equal betas, no down-sampling.
    pub fn he_mode(self) -> DehazeParams {
        DehazeParams {
            betas: BetaRatios::UNIFORM,
            downsample_factor: 1,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DefogError::InvalidParameter(msg));
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return bad(format!("omega must lie in (0, 1], got {}", self.omega));
        }
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return bad(format!("t0 must lie in (0, 1), got {}", self.t0));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.downsample_factor < 1 {
            return bad("downsample factor must be >= 1".into());
        }
        if !(self.solver.tolerance > 0.0) {
            return bad(format!("solver tolerance must be positive, got {}", self.solver.tolerance));
        }
        BetaRatios::new(self.betas.r, self.betas.g, self.betas.b)?;
        Ok(())
    }
}

/// `1 - omega * dark`, clamped to `[0, 1]`.
pub fn rough_transmittance(dark_norm: &DarkChannelResult, omega: f64) -> Result<ScalarMap> {
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(DefogError::InvalidParameter(format!("omega must lie in (0, 1], got {omega}")));
    }
    let (w, h) = dark_norm.values.dims();
    let values = dark_norm
        .values
        .values()
        .iter()
        .map(|&v| (1.0 - omega * v).clamp(0.0, 1.0))
        .collect();
    ScalarMap::new(w, h, values)
}

/// Output of [`refine_pipeline`].
#[derive(Debug, Clone)]
pub struct RefinedTransmittance {
    /// Refined transmittance of the dark channel, full resolution.
    pub t_dark: ScalarMap,
    /// Dark channel label per full-resolution pixel.
    pub channel: ChannelIndexMap,
    pub report: SolveReport,
}

/// Down-sample, rough estimate, matting refinement at the reduced size,
/// bicubic up-sample. The channel labels come from the full-resolution
/// normalized dark channel.
pub fn refine_pipeline(img: &Image, params: &DehazeParams, airlight: &Airlight) -> Result<RefinedTransmittance> {
    params.validate()?;
    let small = downsample_area(img, params.downsample_factor)?;
    if small.width() < 3 || small.height() < 3 {
        return Err(DefogError::ImageTooSmall {
            width: small.width(),
            height: small.height(),
        });
    }
    let dark_small = normalized_dark_channel(&small, airlight, params.window_radius)?;
    let rough = rough_transmittance(&dark_small, params.omega)?;
    let laplacian = build_matting_laplacian(&small, params.eps)?;
    let (refined, report) = refine_transmittance(&laplacian, &rough, params.lambda, params.solver)?;
    if !report.converged {
        warn!(
            "matting solve stopped after {} iterations at relative residual {:.3e}",
            report.iterations, report.relative_residual
        );
    }
    let t_dark = upsample_bicubic(&refined, img.width(), img.height())?;

    let channel = normalized_dark_channel_with(img, airlight, params.window_radius, params.attribution)?.channel;
    Ok(RefinedTransmittance {
        t_dark,
        channel,
        report,
    })
}

/// Applies `t_c = t_d ^ (beta_c / beta_d)` per pixel, `d` being the pixel's
/// dark channel. `t_d = 0` stays 0.
pub fn per_channel_transmittance(t_dark: &ScalarMap, channel: &ChannelIndexMap, betas: &BetaRatios) -> Result<ChannelTransmittances> {
    check_dims(t_dark.dims(), channel.dims())?;
    BetaRatios::new(betas.r, betas.g, betas.b)?;
    let (w, h) = t_dark.dims();
    let n = w * h;
    let mut maps = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (i, (&t, &d)) in t_dark.values().iter().zip(channel.labels()).enumerate() {
        let t = t.clamp(0.0, 1.0);
        for c in Channel::ALL {
            maps[c.index()][i] = if c == d || t == 0.0 {
                t
            } else {
                t.powf(betas.exponent(c, d))
            };
        }
    }
    let [r, g, b] = maps;
    ChannelTransmittances::new(ScalarMap::new(w, h, r)?, ScalarMap::new(w, h, g)?, ScalarMap::new(w, h, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dark_of(values: Vec<f64>, w: usize, h: usize) -> DarkChannelResult {
        DarkChannelResult {
            values: ScalarMap::new(w, h, values).unwrap(),
            channel: ChannelIndexMap::filled(w, h, Channel::R).unwrap(),
        }
    }

    #[test]
    fn rough_from_airlight_colored_image() {
        let t = rough_transmittance(&dark_of(vec![1.0; 4], 2, 2), 0.95).unwrap();
        for &v in t.values() {
            assert!((v - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn rough_of_fog_free_pixel() {
        let t = rough_transmittance(&dark_of(vec![0.0; 4], 2, 2), 0.95).unwrap();
        assert!(t.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rough_rejects_bad_omega() {
        assert!(rough_transmittance(&dark_of(vec![0.0; 1], 1, 1), 0.0).is_err());
        assert!(rough_transmittance(&dark_of(vec![0.0; 1], 1, 1), 1.01).is_err());
    }

    #[test]
    fn unit_transmittance_everywhere() {
        let t = ScalarMap::filled(3, 2, 1.0).unwrap();
        let d = ChannelIndexMap::filled(3, 2, Channel::G).unwrap();
        let ct = per_channel_transmittance(&t, &d, &BetaRatios::DEFAULT).unwrap();
        for c in Channel::ALL {
            assert!(ct.get(c).values().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn exponent_law_reference_values() {
        // 0.5^1.28 and 0.5^1.61 from a 40-digit evaluation
        let t = ScalarMap::filled(1, 1, 0.5).unwrap();
        let d = ChannelIndexMap::filled(1, 1, Channel::R).unwrap();
        let ct = per_channel_transmittance(&t, &d, &BetaRatios::DEFAULT).unwrap();
        assert_eq!(ct.r.values()[0], 0.5);
        assert!((ct.g.values()[0] - 0.411_795_508_633_786_56).abs() < 1e-15);
        assert!((ct.b.values()[0] - 0.327_598_350_964_590_8).abs() < 1e-15);
    }

    #[test]
    fn zero_transmittance_stays_zero() {
        let t = ScalarMap::filled(1, 1, 0.0).unwrap();
        let d = ChannelIndexMap::filled(1, 1, Channel::B).unwrap();
        let ct = per_channel_transmittance(&t, &d, &BetaRatios::DEFAULT).unwrap();
        for c in Channel::ALL {
            assert_eq!(ct.get(c).values()[0], 0.0);
        }
    }

    #[test]
    fn blue_dark_channel_raises_other_channels() {
        let t = ScalarMap::filled(1, 1, 0.4).unwrap();
        let d = ChannelIndexMap::filled(1, 1, Channel::B).unwrap();
        let ct = per_channel_transmittance(&t, &d, &BetaRatios::DEFAULT).unwrap();
        assert_eq!(ct.b.values()[0], 0.4);
        assert!((ct.r.values()[0] - 0.4f64.powf(1.0 / 1.61)).abs() < 1e-15);
        assert!(ct.r.values()[0] > ct.g.values()[0]);
        assert!(ct.g.values()[0] > ct.b.values()[0]);
    }

    #[test]
    fn triple_parsing() {
        assert_eq!("1, 1.28,1.61".parse::<BetaRatios>().unwrap(), BetaRatios::DEFAULT);
        assert!("1,2".parse::<BetaRatios>().is_err());
        assert!("1,x,2".parse::<BetaRatios>().is_err());
        assert!("1,0,2".parse::<BetaRatios>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(DehazeParams::default().validate().is_ok());
        let p = DehazeParams {
            t0: 1.0,
            ..DehazeParams::default()
        };
        assert!(p.validate().is_err());
        let p = DehazeParams {
            downsample_factor: 0,
            ..DehazeParams::default()
        };
        assert!(p.validate().is_err());
        let he = DehazeParams::default().he_mode();
        assert_eq!(he.betas, BetaRatios::UNIFORM);
        assert_eq!(he.downsample_factor, 1);
    }

    #[test]
    fn pipeline_on_airlight_colored_image() {
        let a = Airlight::new(0.8, 0.75, 0.7).unwrap();
        let img = Image::filled(24, 20, a.components()).unwrap();
        let out = refine_pipeline(&img, &DehazeParams::default(), &a).unwrap();
        assert_eq!(out.t_dark.dims(), (24, 20));
        for &v in out.t_dark.values() {
            assert!((v - 0.05).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn pipeline_rejects_tiny_reduced_image() {
        let a = Airlight::gray(1.0).unwrap();
        let img = Image::filled(8, 8, [0.5; 3]).unwrap();
        assert!(matches!(
            refine_pipeline(&img, &DehazeParams::default(), &a),
            Err(DefogError::ImageTooSmall { .. })
        ));
    }
}
