//! Temporal channel shifting.
//!
//! The shift moves a fraction of a 5D activation's channels one frame along
//! the temporal axis — forward (each frame receives the previous frame's
//! channels), and for bi-directional configs also backward — leaving the
//! remaining channels untouched. It performs no arithmetic, only data
//! movement; [`shift_bytes_moved`] accounts for exactly how much.
//!
//! [`decomposed_temporal_conv`] demonstrates the identity a kernel-3 temporal
//! convolution decomposes into: three full-channel shifts followed by a
//! scalar multiply-accumulate.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Exact rational in `[0, 1]`, kept as numerator/denominator so channel
/// counts like `floor(C/8)` never suffer float rounding.
#[derive(Clone, Copy, Debug)]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Arg("fraction denominator must be nonzero".into()));
        }
        if num > den {
            return Err(Error::Arg(format!("fraction {num}/{den} exceeds 1")));
        }
        Ok(Fraction { num, den })
    }

    pub const ZERO: Fraction = Fraction { num: 0, den: 1 };

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// `floor(count * self)`, in exact integer arithmetic.
    pub fn of(&self, count: usize) -> usize {
        ((count as u64 * self.num) / self.den) as usize
    }

    /// Halve the fraction (used to split a total shifted proportion across
    /// two directions).
    pub fn halved(&self) -> Fraction {
        Fraction {
            num: self.num,
            den: self.den.saturating_mul(2),
        }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Fraction {
    fn eq(&self, other: &Self) -> bool {
        self.num as u128 * other.den as u128 == other.num as u128 * self.den as u128
    }
}

impl Eq for Fraction {}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Fraction {
    type Err = Error;

    /// Accepts `"a/b"`, integers (`"0"`, `"1"`), and short decimals
    /// (`"0.125"`), all parsed exactly.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse::<u64>().map_err(|e| Error::Arg(format!("fraction '{s}': {e}")))?;
            let den = b.trim().parse::<u64>().map_err(|e| Error::Arg(format!("fraction '{s}': {e}")))?;
            return Fraction::new(num, den);
        }
        if let Some((whole, frac)) = s.split_once('.') {
            if frac.len() > 9 {
                return Err(Error::Arg(format!("fraction '{s}': too many decimal digits")));
            }
            let whole: u64 = if whole.is_empty() {
                0
            } else {
                whole.parse().map_err(|e| Error::Arg(format!("fraction '{s}': {e}")))?
            };
            let digits: u64 = if frac.is_empty() {
                0
            } else {
                frac.parse().map_err(|e| Error::Arg(format!("fraction '{s}': {e}")))?
            };
            let den = 10u64.pow(frac.len() as u32);
            return Fraction::new(whole * den + digits, den);
        }
        let num = s.parse::<u64>().map_err(|e| Error::Arg(format!("fraction '{s}': {e}")))?;
        Fraction::new(num, 1)
    }
}

impl Serialize for Fraction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftDirection {
    Bidirectional,
    Unidirectional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftPadding {
    /// Vacated boundary frames are filled with zeros.
    Zero,
    /// Shifted-out channels wrap around the temporal axis.
    Circulant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftPlacement {
    /// Shift feeds only the residual branch; the identity path keeps the
    /// original activation.
    Residual,
    /// Shift runs before the whole block, identity path included.
    InPlace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    #[serde(default = "default_fraction")]
    pub fraction_per_direction: Fraction,
    #[serde(default = "default_direction")]
    pub direction: ShiftDirection,
    #[serde(default = "default_padding")]
    pub padding: ShiftPadding,
    #[serde(default = "default_placement")]
    pub placement: ShiftPlacement,
}

fn default_fraction() -> Fraction {
    Fraction::new(1, 8).unwrap()
}

fn default_direction() -> ShiftDirection {
    ShiftDirection::Bidirectional
}

fn default_padding() -> ShiftPadding {
    ShiftPadding::Zero
}

fn default_placement() -> ShiftPlacement {
    ShiftPlacement::Residual
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            fraction_per_direction: default_fraction(),
            direction: default_direction(),
            padding: default_padding(),
            placement: default_placement(),
        }
    }
}

impl ShiftConfig {
    /// Total shifted proportion must not exceed 1: a bi-directional config
    /// shifts `2 * fraction_per_direction` of the channels.
    pub fn validate(&self) -> Result<()> {
        let f = &self.fraction_per_direction;
        let total_num = f.num as u128 * self.directions() as u128;
        if total_num > f.den as u128 {
            return Err(Error::Config(format!(
                "total shifted fraction {}x{} exceeds 1",
                self.directions(),
                f
            )));
        }
        Ok(())
    }

    pub fn directions(&self) -> u64 {
        match self.direction {
            ShiftDirection::Bidirectional => 2,
            ShiftDirection::Unidirectional => 1,
        }
    }

    /// Channels shifted per direction for a `channels`-wide activation.
    pub fn shifted_channels(&self, channels: usize) -> usize {
        self.fraction_per_direction.of(channels)
    }
}

/// Shift a fraction of channels one frame along the temporal axis of
/// `[N, C, T, H, W]`.
///
/// Channels `[0, s)` move forward in time (frame `t` receives frame `t-1`);
/// for bi-directional configs channels `[s, 2s)` move backward (frame `t`
/// receives frame `t+1`); everything else is copied through unchanged.
/// `s = floor(C * fraction_per_direction)`.
pub fn temporal_shift(x: &Tensor, cfg: &ShiftConfig) -> Result<Tensor> {
    cfg.validate()?;
    let (n, c, t, h, w) = x.dims5()?;
    let s = cfg.shifted_channels(c);
    if s as u64 * cfg.directions() > c as u64 {
        return Err(Error::Config(format!(
            "{} shifted channels exceed {c} available",
            s as u64 * cfg.directions()
        )));
    }
    if s == 0 {
        return Ok(x.clone());
    }
    let plane = h * w;
    let mut out = x.clone();
    for ni in 0..n {
        shift_rows(
            x.data(),
            out.data_mut(),
            ni,
            c,
            t,
            plane,
            0..s,
            1,
            cfg.padding,
        );
        if cfg.direction == ShiftDirection::Bidirectional {
            shift_rows(
                x.data(),
                out.data_mut(),
                ni,
                c,
                t,
                plane,
                s..2 * s,
                -1,
                cfg.padding,
            );
        }
    }
    Ok(out)
}

/// Rewrites the temporal rows of `channels` so that output frame `t` holds
/// input frame `t - offset`, filling vacated frames per the padding mode.
#[allow(clippy::too_many_arguments)]
fn shift_rows(
    src: &[f32],
    dst: &mut [f32],
    n: usize,
    c: usize,
    t: usize,
    plane: usize,
    channels: std::ops::Range<usize>,
    offset: isize,
    padding: ShiftPadding,
) {
    for ci in channels {
        for ti in 0..t {
            let from = ti as isize - offset;
            let d = ((n * c + ci) * t + ti) * plane;
            if from >= 0 && from < t as isize {
                let s = ((n * c + ci) * t + from as usize) * plane;
                dst[d..d + plane].copy_from_slice(&src[s..s + plane]);
            } else {
                match padding {
                    ShiftPadding::Zero => dst[d..d + plane].fill(0.0),
                    ShiftPadding::Circulant => {
                        let wrapped = from.rem_euclid(t as isize) as usize;
                        let s = ((n * c + ci) * t + wrapped) * plane;
                        dst[d..d + plane].copy_from_slice(&src[s..s + plane]);
                    }
                }
            }
        }
    }
}

/// Full-channel temporal shift: output frame `t` holds input frame
/// `t - offset`. The building block of the shift/multiply-accumulate
/// decomposition.
pub fn shift_frames(x: &Tensor, offset: isize, padding: ShiftPadding) -> Result<Tensor> {
    let (n, c, t, h, w) = x.dims5()?;
    let mut out = Tensor::zeros(x.dims())?;
    for ni in 0..n {
        shift_rows(x.data(), out.data_mut(), ni, c, t, h * w, 0..c, offset, padding);
    }
    Ok(out)
}

/// A kernel-3 temporal convolution with shared scalar taps, computed as
/// three full-channel shifts plus a scalar multiply-accumulate:
/// `y = w1 * shift(+1) + w2 * x + w3 * shift(-1)` (zero padding),
/// i.e. `y[t] = w1*x[t-1] + w2*x[t] + w3*x[t+1]`.
pub fn decomposed_temporal_conv(x: &Tensor, w1: f32, w2: f32, w3: f32) -> Result<Tensor> {
    let past = shift_frames(x, 1, ShiftPadding::Zero)?;
    let future = shift_frames(x, -1, ShiftPadding::Zero)?;
    let data = x
        .data()
        .iter()
        .zip(past.data())
        .zip(future.data())
        .map(|((&cur, &p), &f)| w1 * p + w2 * cur + w3 * f)
        .collect();
    crate::opcount::record(6 * x.len() as u64); // 3 MACs per element
    Tensor::new(x.dims().to_vec(), data)
}

/// Bytes of element copies that land on a different temporal index:
/// `d * s * N * (T-1) * H * W * elem_bytes`, with `d` the direction count
/// and `s = floor(C * fraction_per_direction)`. Boundary fills (zeros or the
/// circulant wrap) are excluded.
pub fn shift_bytes_moved(dims: [usize; 5], cfg: &ShiftConfig, elem_bytes: u64) -> u64 {
    let [n, c, t, h, w] = dims;
    let s = cfg.shifted_channels(c) as u64;
    cfg.directions() * s * n as u64 * (t as u64 - 1) * h as u64 * w as u64 * elem_bytes
}

/// Temporal shift on a time-folded activation `[N*T, C, H, W]` (row `n*T+t`).
/// Observationally identical to folding after [`temporal_shift`]; avoids the
/// unfold/refold copies in model forwards.
pub(crate) fn temporal_shift_folded(
    x: &Tensor,
    clips: usize,
    frames: usize,
    cfg: &ShiftConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let (rows, c, h, w) = x.dims4()?;
    if rows != clips * frames {
        return Err(Error::Dim(format!(
            "{rows} folded rows do not split into {clips} clips x {frames} frames"
        )));
    }
    let s = cfg.shifted_channels(c);
    if s == 0 {
        return Ok(x.clone());
    }
    let plane = h * w;
    let row_len = c * plane;
    let mut out = x.clone();
    let copy_row = |dst: &mut [f32], src: &[f32], n: usize, td: usize, ts: usize, ci: usize| {
        let d = (n * frames + td) * row_len + ci * plane;
        let so = (n * frames + ts) * row_len + ci * plane;
        dst[d..d + plane].copy_from_slice(&src[so..so + plane]);
    };
    let zero_row = |dst: &mut [f32], n: usize, td: usize, ci: usize| {
        let d = (n * frames + td) * row_len + ci * plane;
        dst[d..d + plane].fill(0.0);
    };
    for ni in 0..clips {
        for ci in 0..s {
            // forward: frame t receives frame t-1
            for ti in 1..frames {
                copy_row(out.data_mut(), x.data(), ni, ti, ti - 1, ci);
            }
            match cfg.padding {
                ShiftPadding::Zero => zero_row(out.data_mut(), ni, 0, ci),
                ShiftPadding::Circulant => copy_row(out.data_mut(), x.data(), ni, 0, frames - 1, ci),
            }
        }
        if cfg.direction == ShiftDirection::Bidirectional {
            for ci in s..2 * s {
                for ti in 0..frames - 1 {
                    copy_row(out.data_mut(), x.data(), ni, ti, ti + 1, ci);
                }
                match cfg.padding {
                    ShiftPadding::Zero => zero_row(out.data_mut(), ni, frames - 1, ci),
                    ShiftPadding::Circulant => {
                        copy_row(out.data_mut(), x.data(), ni, frames - 1, 0, ci)
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::seeded_tensor;
    use crate::opcount;
    use crate::tensor::{fold_time, unfold_time};
    use proptest::prelude::*;

    fn cfg(frac: (u64, u64), dir: ShiftDirection, pad: ShiftPadding) -> ShiftConfig {
        ShiftConfig {
            fraction_per_direction: Fraction::new(frac.0, frac.1).unwrap(),
            direction: dir,
            padding: pad,
            placement: ShiftPlacement::Residual,
        }
    }

    #[test]
    fn fraction_parsing_and_display() {
        assert_eq!("1/8".parse::<Fraction>().unwrap(), Fraction::new(1, 8).unwrap());
        assert_eq!("0.125".parse::<Fraction>().unwrap(), Fraction::new(1, 8).unwrap());
        assert_eq!("0".parse::<Fraction>().unwrap(), Fraction::ZERO);
        assert_eq!("1".parse::<Fraction>().unwrap().to_string(), "1");
        assert_eq!(Fraction::new(2, 16).unwrap(), Fraction::new(1, 8).unwrap());
        assert!(Fraction::new(1, 4).unwrap() > Fraction::new(1, 8).unwrap());
        assert!("3/2".parse::<Fraction>().is_err());
        assert!("x".parse::<Fraction>().is_err());
        assert_eq!(Fraction::new(1, 4).unwrap().halved(), Fraction::new(1, 8).unwrap());
    }

    #[test]
    fn fraction_zero_is_identity() {
        let x = seeded_tensor(1, &[1, 4, 3, 2, 2]);
        let c = cfg((0, 8), ShiftDirection::Bidirectional, ShiftPadding::Zero);
        assert_eq!(temporal_shift(&x, &c).unwrap(), x);
    }

    #[test]
    fn bidirectional_zero_pad_example() {
        // C=4, T=2, fraction 1/4: s=1.
        let mut x = Tensor::zeros(&[1, 4, 2, 1, 1]).unwrap();
        for c in 0..4 {
            for t in 0..2 {
                let off = x.offset5(0, c, t, 0, 0);
                x.data_mut()[off] = (10 * c + t) as f32;
            }
        }
        let y = temporal_shift(
            &x,
            &cfg((1, 4), ShiftDirection::Bidirectional, ShiftPadding::Zero),
        )
        .unwrap();
        // channel 0: [0, x(c0,t0)]
        assert_eq!(y.at5(0, 0, 0, 0, 0), 0.0);
        assert_eq!(y.at5(0, 0, 1, 0, 0), x.at5(0, 0, 0, 0, 0));
        // channel 1: [x(c1,t1), 0]
        assert_eq!(y.at5(0, 1, 0, 0, 0), x.at5(0, 1, 1, 0, 0));
        assert_eq!(y.at5(0, 1, 1, 0, 0), 0.0);
        // channels 2, 3 untouched
        for c in 2..4 {
            for t in 0..2 {
                assert_eq!(y.at5(0, c, t, 0, 0), x.at5(0, c, t, 0, 0));
            }
        }
    }

    #[test]
    fn circulant_wraps_boundary() {
        // C=4, T=3, fraction 1/4: channel 0 over t = [x(2), x(0), x(1)].
        let mut x = Tensor::zeros(&[1, 4, 3, 1, 1]).unwrap();
        for c in 0..4 {
            for t in 0..3 {
                let off = x.offset5(0, c, t, 0, 0);
                x.data_mut()[off] = (10 * c + t) as f32;
            }
        }
        let y = temporal_shift(
            &x,
            &cfg((1, 4), ShiftDirection::Unidirectional, ShiftPadding::Circulant),
        )
        .unwrap();
        assert_eq!(y.at5(0, 0, 0, 0, 0), x.at5(0, 0, 2, 0, 0));
        assert_eq!(y.at5(0, 0, 1, 0, 0), x.at5(0, 0, 0, 0, 0));
        assert_eq!(y.at5(0, 0, 2, 0, 0), x.at5(0, 0, 1, 0, 0));
    }

    #[test]
    fn shift_does_no_arithmetic() {
        let x = seeded_tensor(2, &[2, 8, 4, 3, 3]);
        opcount::reset();
        let _ = temporal_shift(&x, &ShiftConfig::default()).unwrap();
        let _ = temporal_shift(
            &x,
            &cfg((1, 2), ShiftDirection::Unidirectional, ShiftPadding::Circulant),
        )
        .unwrap();
        assert_eq!(opcount::current(), 0);
    }

    #[test]
    fn full_shift_there_and_back_zero_pad() {
        let x = seeded_tensor(3, &[1, 3, 5, 2, 2]);
        let fwd = shift_frames(&x, 1, ShiftPadding::Zero).unwrap();
        let back = shift_frames(&fwd, -1, ShiftPadding::Zero).unwrap();
        let (_, c, t, h, w) = x.dims5().unwrap();
        for ci in 0..c {
            for ti in 1..t - 1 {
                for hi in 0..h {
                    for wi in 0..w {
                        assert_eq!(back.at5(0, ci, ti, hi, wi), x.at5(0, ci, ti, hi, wi));
                    }
                }
            }
            // last frame was truncated away and zero-filled
            assert_eq!(back.at5(0, ci, t - 1, 0, 0), 0.0);
        }
    }

    #[test]
    fn circulant_composed_with_inverse_is_identity() {
        let x = seeded_tensor(4, &[2, 3, 6, 2, 2]);
        let fwd = shift_frames(&x, 1, ShiftPadding::Circulant).unwrap();
        let back = shift_frames(&fwd, -1, ShiftPadding::Circulant).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn decomposed_identity_taps() {
        let x = seeded_tensor(5, &[1, 2, 5, 1, 1]);
        let y = decomposed_temporal_conv(&x, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn decomposed_boundary_arithmetic() {
        let x = Tensor::filled(&[1, 1, 4, 1, 1], 1.0).unwrap();
        let y = decomposed_temporal_conv(&x, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(y.data(), &[2.0, 3.0, 3.0, 2.0]);
    }

    /// Direct kernel-3 temporal convolution, written independently of the
    /// shift path: the decomposition's oracle.
    fn temporal_conv3_direct(x: &Tensor, w1: f32, w2: f32, w3: f32) -> Tensor {
        let (n, c, t, h, w) = x.dims5().unwrap();
        let mut out = Tensor::zeros(x.dims()).unwrap();
        for ni in 0..n {
            for ci in 0..c {
                for ti in 0..t {
                    for hi in 0..h {
                        for wi in 0..w {
                            let mut acc = w2 * x.at5(ni, ci, ti, hi, wi);
                            if ti >= 1 {
                                acc += w1 * x.at5(ni, ci, ti - 1, hi, wi);
                            }
                            if ti + 1 < t {
                                acc += w3 * x.at5(ni, ci, ti + 1, hi, wi);
                            }
                            let off = out.offset5(ni, ci, ti, hi, wi);
                            out.data_mut()[off] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn decomposition_matches_direct_conv() {
        let x = seeded_tensor(6, &[1, 2, 5, 1, 1]);
        let (w1, w2, w3) = (0.31, -0.72, 1.13);
        let dec = decomposed_temporal_conv(&x, w1, w2, w3).unwrap();
        let direct = temporal_conv3_direct(&x, w1, w2, w3);
        assert!(dec.max_abs_diff(&direct) <= 1e-6);
    }

    #[test]
    fn bytes_moved_formula_example() {
        let c = cfg((1, 8), ShiftDirection::Bidirectional, ShiftPadding::Zero);
        assert_eq!(shift_bytes_moved([1, 8, 8, 2, 2], &c, 4), 224);
        let z = cfg((0, 1), ShiftDirection::Bidirectional, ShiftPadding::Zero);
        assert_eq!(shift_bytes_moved([1, 8, 8, 2, 2], &z, 4), 0);
    }

    #[test]
    fn folded_shift_matches_canonical() {
        for dir in [ShiftDirection::Bidirectional, ShiftDirection::Unidirectional] {
            for pad in [ShiftPadding::Zero, ShiftPadding::Circulant] {
                let x = seeded_tensor(7, &[2, 8, 5, 3, 2]);
                let c = cfg((1, 8), dir, pad);
                let canonical = fold_time(&temporal_shift(&x, &c).unwrap()).unwrap();
                let folded = temporal_shift_folded(&fold_time(&x).unwrap(), 2, 5, &c).unwrap();
                assert_eq!(canonical, folded);
            }
        }
    }

    #[test]
    fn overfull_bidirectional_config_rejected() {
        let x = seeded_tensor(8, &[1, 4, 3, 1, 1]);
        let c = cfg((3, 4), ShiftDirection::Bidirectional, ShiftPadding::Zero);
        assert!(matches!(temporal_shift(&x, &c), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn unshifted_channels_are_bit_identical(
            channels in 1usize..12,
            frames in 1usize..7,
            num in 0u64..=4,
            bidi in any::<bool>(),
            circulant in any::<bool>(),
            seed in 0u64..1000,
        ) {
            let dir = if bidi { ShiftDirection::Bidirectional } else { ShiftDirection::Unidirectional };
            let den = if bidi { 8 } else { 4 };
            let pad = if circulant { ShiftPadding::Circulant } else { ShiftPadding::Zero };
            let c = cfg((num, den), dir, pad);
            let x = seeded_tensor(seed, &[1, channels, frames, 2, 3]);
            let y = temporal_shift(&x, &c).unwrap();
            let s = c.shifted_channels(channels);
            let moved = s * c.directions() as usize;
            for ci in moved..channels {
                for ti in 0..frames {
                    for hi in 0..2 {
                        for wi in 0..3 {
                            prop_assert_eq!(
                                y.at5(0, ci, ti, hi, wi).to_bits(),
                                x.at5(0, ci, ti, hi, wi).to_bits()
                            );
                        }
                    }
                }
            }
        }

        #[test]
        fn bytes_moved_is_monotone_in_fraction(
            n in 1usize..3, c in 1usize..32, t in 1usize..10, h in 1usize..6, w in 1usize..6,
            a in 0u64..=8, b in 0u64..=8,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let mk = |num| ShiftConfig {
                fraction_per_direction: Fraction::new(num, 16).unwrap(),
                ..ShiftConfig::default()
            };
            prop_assert!(
                shift_bytes_moved([n, c, t, h, w], &mk(lo), 4)
                    <= shift_bytes_moved([n, c, t, h, w], &mk(hi), 4)
            );
        }

        #[test]
        fn unfolded_roundtrip_of_folded_shift(seed in 0u64..500) {
            let x = seeded_tensor(seed, &[1, 8, 4, 2, 2]);
            let c = ShiftConfig::default();
            let via_folded = unfold_time(
                &temporal_shift_folded(&fold_time(&x).unwrap(), 1, 4, &c).unwrap(),
                4,
            ).unwrap();
            prop_assert_eq!(via_folded, temporal_shift(&x, &c).unwrap());
        }
    }
}
