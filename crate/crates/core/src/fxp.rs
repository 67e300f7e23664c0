//! Scalar quantization math: scale/zero-point selection, the affine
//! quantize/dequantize pair, and fixed-point encoding of real rescaling
//! factors as `mantissa * 2^-shift`.
//!
//! Sign convention: a code `q` represents the real value `S * (q + Z)`.
//! For asymmetric grids `Z = floor(alpha / S)`, so `alpha` maps to code 0
//! and the code for real zero is `-Z` (see [`QuantParams::zero_code`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranges narrower than this are treated as degenerate and widened.
pub const DEGENERATE_RANGE: f64 = 1e-12;
/// Half-width used when widening a degenerate range.
pub const DEGENERATE_PAD: f64 = 1e-6;

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 16;

/// Largest shift accepted by [`to_fixed_point`].
pub const MAX_SHIFT: u32 = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantMode {
    Symmetric,
    Asymmetric,
}

/// Per-tensor quantization parameters for one tensor site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
    pub bits: u32,
    pub signed: bool,
    pub alpha: f64,
    pub beta: f64,
}

impl QuantParams {
    /// Smallest representable code.
    pub fn range_lo(&self) -> i32 {
        if self.signed {
            -((1 << (self.bits - 1)) - 1)
        } else {
            0
        }
    }

    /// Largest representable code.
    pub fn range_hi(&self) -> i32 {
        if self.signed {
            (1 << (self.bits - 1)) - 1
        } else {
            ((1i64 << self.bits) - 1) as i32
        }
    }

    /// The integer code that represents real zero, i.e. `-Z`.
    ///
    /// May fall outside `[range_lo, range_hi]` when the clip range excludes 0.
    pub fn zero_code(&self) -> i32 {
        -self.zero_point
    }

    pub fn clamp(&self, q: i64) -> i32 {
        q.clamp(self.range_lo() as i64, self.range_hi() as i64) as i32
    }

    pub fn contains(&self, q: i32) -> bool {
        q >= self.range_lo() && q <= self.range_hi()
    }

    /// Number of codes on the grid.
    pub fn levels(&self) -> usize {
        (self.range_hi() as i64 - self.range_lo() as i64 + 1) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_BITS..=MAX_BITS).contains(&self.bits) {
            return Err(Error::Config(format!("bit-width {} outside [2,16]", self.bits)));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Config(format!("non-positive scale {}", self.scale)));
        }
        if self.signed && self.zero_point != 0 {
            return Err(Error::Config("symmetric grid with non-zero zero-point".into()));
        }
        if !(self.alpha < self.beta) {
            return Err(Error::Config(format!("clip range [{}, {}] is empty", self.alpha, self.beta)));
        }
        Ok(())
    }
}

/// Builds quantization parameters for the clip range `[alpha, beta]`.
///
/// Degenerate ranges (`beta - alpha < 1e-12`) are widened to
/// `alpha ± 1e-6` with a logged warning instead of failing, so that
/// calibration of constant tensors never aborts a search.
pub fn compute_qparams(alpha: f64, beta: f64, bits: u32, mode: QuantMode) -> Result<QuantParams> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::Config(format!("bit-width {bits} outside [2,16]")));
    }
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::Config(format!("non-finite clip range [{alpha}, {beta}]")));
    }
    if alpha > beta {
        return Err(Error::Config(format!("clip range [{alpha}, {beta}] is inverted")));
    }
    let (mut alpha, mut beta) = (alpha, beta);
    if beta - alpha < DEGENERATE_RANGE {
        log::warn!("degenerate clip range [{alpha}, {beta}], widening by ±{DEGENERATE_PAD}");
        let centre = alpha;
        alpha = centre - DEGENERATE_PAD;
        beta = centre + DEGENERATE_PAD;
    }
    let qp = match mode {
        QuantMode::Asymmetric => {
            let scale = (beta - alpha) / ((1u64 << bits) - 1) as f64;
            QuantParams { scale, zero_point: (alpha / scale).floor() as i32, bits, signed: false, alpha, beta }
        }
        QuantMode::Symmetric => {
            let m = alpha.abs().max(beta.abs());
            let scale = m / ((1u64 << (bits - 1)) - 1) as f64;
            QuantParams { scale, zero_point: 0, bits, signed: true, alpha: -m, beta: m }
        }
    };
    Ok(qp)
}

/// `q = clamp(floor(r / S) - Z)`.
pub fn quantize(r: f64, qp: &QuantParams) -> i32 {
    let q = (r / qp.scale).floor() - qp.zero_point as f64;
    // f64 -> i64 casts saturate, NaN maps to 0
    qp.clamp(q as i64)
}

/// Round-to-nearest variant of [`quantize`], used for weights and biases
/// where the stored code should sit within half a step of the real value.
pub fn quantize_nearest(r: f64, qp: &QuantParams) -> i32 {
    let q = round_half_away(r / qp.scale) - qp.zero_point as f64;
    qp.clamp(q as i64)
}

/// `r~ = S * (q + Z)`.
pub fn dequantize(q: i32, qp: &QuantParams) -> f64 {
    qp.scale * (q as f64 + qp.zero_point as f64)
}

pub fn round_half_away(x: f64) -> f64 {
    // f64::round already rounds half away from zero
    x.round()
}

/// Real multiplier `M ~= mantissa * 2^-shift`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointScale {
    pub mantissa: i32,
    pub shift: u32,
}

impl FixedPointScale {
    pub const ZERO: FixedPointScale = FixedPointScale { mantissa: 0, shift: 0 };

    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 * (-(self.shift as f64)).exp2()
    }
}

/// Encodes `m` with the largest shift in `[0, 62]` that keeps the rounded
/// mantissa below `2^31`.
pub fn to_fixed_point(m: f64) -> Result<FixedPointScale> {
    if !m.is_finite() || m < 0.0 {
        return Err(Error::Config(format!("invalid rescaling factor {m}")));
    }
    if m == 0.0 {
        return Ok(FixedPointScale::ZERO);
    }
    const LIMIT: f64 = 2147483648.0; // 2^31
    if round_half_away(m) >= LIMIT {
        return Err(Error::FixedPointOverflow(m));
    }
    // Start from the analytic estimate and walk to the exact boundary.
    let mut shift = (30 - m.log2().floor() as i64).clamp(0, MAX_SHIFT as i64) as u32;
    let fits = |s: u32| round_half_away(m * (s as f64).exp2()) < LIMIT;
    while shift > 0 && !fits(shift) {
        shift -= 1;
    }
    while shift < MAX_SHIFT && fits(shift + 1) {
        shift += 1;
    }
    let mantissa = round_half_away(m * (shift as f64).exp2()) as i32;
    Ok(FixedPointScale { mantissa, shift })
}

/// `round_half_away(x * mantissa / 2^shift)` on a 128-bit product,
/// saturated to the `i64` range.
pub fn scale_wide(x: i64, m: FixedPointScale) -> i64 {
    let p = x as i128 * m.mantissa as i128;
    let r = if m.shift == 0 {
        p
    } else {
        let half = 1i128 << (m.shift - 1);
        if p >= 0 {
            (p + half) >> m.shift
        } else {
            -((-p + half) >> m.shift)
        }
    };
    r.clamp(i64::MIN as i128, i64::MAX as i128) as i64
}

/// Fixed-point multiply with round-half-away-from-zero, saturating to `i32`.
pub fn fxp_mul(x: i32, m: FixedPointScale) -> i32 {
    scale_wide(x as i64, m).clamp(i32::MIN as i64, i32::MAX as i64) as i32
}
