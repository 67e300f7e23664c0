//! Integer-only operators: dense layer, element-wise add and multiply,
//! the `1 - x` complement, and lookup-table activations.
//!
//! Every operator takes integer codes and returns codes on its output grid.
//! Zero offsets stored here (`z_*`) are the codes of real zero on each grid,
//! so a code `q` stands for `S * (q - z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fxp::{
    compute_qparams, dequantize, quantize, quantize_nearest, scale_wide, to_fixed_point, FixedPointScale, QuantMode,
    QuantParams,
};

/// Integer weights of a dense layer plus the precomputed bias term
/// `q_b - z_x * rowsum(q_w)`.
///
/// The classifier head uses this directly and reads the raw accumulator as
/// its logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QDense {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub q_w: Vec<i32>,
    pub q_bias: Vec<i64>,
    pub w_qp: QuantParams,
    pub in_qp: QuantParams,
}

impl QDense {
    /// Quantizes float weights symmetrically at `w_bits` against the input
    /// grid `in_qp`. The bias is stored at scale `S_w * S_x`.
    pub fn from_float(
        weights: &[f64],
        bias: &[f64],
        rows: usize,
        cols: usize,
        w_bits: u32,
        in_qp: QuantParams,
    ) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::Dimension { op: "dense weights", expected: rows * cols, got: weights.len() });
        }
        if bias.len() != rows {
            return Err(Error::Dimension { op: "dense bias", expected: rows, got: bias.len() });
        }
        let (lo, hi) = extrema(weights);
        let w_qp = compute_qparams(lo.min(0.0), hi.max(0.0), w_bits, QuantMode::Symmetric)?;
        let q_w: Vec<i32> = weights.iter().map(|&w| quantize_nearest(w, &w_qp)).collect();
        let bias_scale = w_qp.scale * in_qp.scale;
        let z_x = in_qp.zero_code() as i64;
        let q_bias = (0..rows)
            .map(|i| {
                let q_b = (bias[i] / bias_scale).round();
                if !q_b.is_finite() || q_b.abs() >= 9.0e18 {
                    return Err(Error::Config(format!("bias {} overflows the accumulator", bias[i])));
                }
                let rowsum: i64 = q_w[i * cols..(i + 1) * cols].iter().map(|&w| w as i64).sum();
                Ok(q_b as i64 - z_x * rowsum)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QDense { rows, cols, q_w, q_bias, w_qp, in_qp })
    }

    /// `sum_j q_w[i,j] * q_x[j] + q_bias[i]`, saturating.
    pub fn accumulate(&self, q_x: &[i32]) -> Result<Vec<i64>> {
        if q_x.len() != self.cols {
            return Err(Error::Dimension { op: "qlinear input", expected: self.cols, got: q_x.len() });
        }
        Ok(self
            .q_w
            .chunks_exact(self.cols)
            .zip(&self.q_bias)
            .map(|(row, &b)| row.iter().zip(q_x).fold(b, |acc, (&w, &x)| acc.saturating_add(w as i64 * x as i64)))
            .collect())
    }

    pub fn dequantized_weights(&self) -> Vec<f64> {
        self.q_w.iter().map(|&q| dequantize(q, &self.w_qp)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLinearParams {
    pub dense: QDense,
    /// `S_w * S_x / S_y`.
    pub m: FixedPointScale,
    pub z_y: i32,
    pub out_qp: QuantParams,
}

impl QLinearParams {
    pub fn new(dense: QDense, out_qp: QuantParams) -> Result<Self> {
        let m = to_fixed_point(dense.w_qp.scale * dense.in_qp.scale / out_qp.scale)?;
        Ok(QLinearParams { dense, m, z_y: out_qp.zero_code(), out_qp })
    }
}

pub fn qlinear(q_x: &[i32], p: &QLinearParams) -> Result<Vec<i32>> {
    let acc = p.dense.accumulate(q_x)?;
    Ok(acc.into_iter().map(|a| p.out_qp.clamp(scale_wide(a, p.m).saturating_add(p.z_y as i64))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAddParams {
    /// `S_1 / S_y`.
    pub m_alpha: FixedPointScale,
    /// `S_2 / S_1`.
    pub m_beta: FixedPointScale,
    pub z1: i32,
    pub z2: i32,
    pub z_y: i32,
    pub out_qp: QuantParams,
}

impl QAddParams {
    pub fn new(in1: &QuantParams, in2: &QuantParams, out_qp: QuantParams) -> Result<Self> {
        Ok(QAddParams {
            m_alpha: to_fixed_point(in1.scale / out_qp.scale)?,
            m_beta: to_fixed_point(in2.scale / in1.scale)?,
            z1: in1.zero_code(),
            z2: in2.zero_code(),
            z_y: out_qp.zero_code(),
            out_qp,
        })
    }
}

pub fn qadd(q1: &[i32], q2: &[i32], p: &QAddParams) -> Result<Vec<i32>> {
    if q1.len() != q2.len() {
        return Err(Error::Dimension { op: "qadd", expected: q1.len(), got: q2.len() });
    }
    Ok(q1
        .iter()
        .zip(q2)
        .map(|(&a, &b)| {
            let aligned = scale_wide(b as i64 - p.z2 as i64, p.m_beta);
            let sum = (a as i64 - p.z1 as i64).saturating_add(aligned);
            p.out_qp.clamp(scale_wide(sum, p.m_alpha).saturating_add(p.z_y as i64))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QMulParams {
    /// `S_1 * S_2 / S_y`.
    pub m_gamma: FixedPointScale,
    pub z1: i32,
    pub z2: i32,
    pub z_y: i32,
    pub out_qp: QuantParams,
}

impl QMulParams {
    pub fn new(in1: &QuantParams, in2: &QuantParams, out_qp: QuantParams) -> Result<Self> {
        Ok(QMulParams {
            m_gamma: to_fixed_point(in1.scale * in2.scale / out_qp.scale)?,
            z1: in1.zero_code(),
            z2: in2.zero_code(),
            z_y: out_qp.zero_code(),
            out_qp,
        })
    }
}

pub fn qmul(q1: &[i32], q2: &[i32], p: &QMulParams) -> Result<Vec<i32>> {
    if q1.len() != q2.len() {
        return Err(Error::Dimension { op: "qmul", expected: q1.len(), got: q2.len() });
    }
    let (z1, z2) = (p.z1 as i64, p.z2 as i64);
    Ok(q1
        .iter()
        .zip(q2)
        .map(|(&a, &b)| {
            let (a, b) = (a as i64, b as i64);
            let prod = a * b - a * z2 - b * z1 + z1 * z2;
            p.out_qp.clamp(scale_wide(prod, p.m_gamma).saturating_add(p.z_y as i64))
        })
        .collect())
}

/// `y = 1 - x` on integer codes.
///
/// With `x = S_x (q - z_x)`, the code `k - q` with `k = 1/S_x + 2 z_x`
/// represents `1 - x` on the input grid, which is then rescaled to the
/// output grid. For the `[0, 1]` sigmoid grid `k = 2^b - 1` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QComplementParams {
    pub k: i64,
    /// `S_x / S_y`.
    pub m: FixedPointScale,
    pub z_flip: i32,
    pub z_y: i32,
    pub out_qp: QuantParams,
}

impl QComplementParams {
    pub fn new(in_qp: &QuantParams, out_qp: QuantParams) -> Result<Self> {
        let k = (1.0 / in_qp.scale).round() as i64 + 2 * in_qp.zero_code() as i64;
        Ok(QComplementParams {
            k,
            m: to_fixed_point(in_qp.scale / out_qp.scale)?,
            z_flip: in_qp.zero_code(),
            z_y: out_qp.zero_code(),
            out_qp,
        })
    }
}

pub fn qcomplement(q: &[i32], p: &QComplementParams) -> Vec<i32> {
    q.iter()
        .map(|&x| {
            let flipped = p.k - x as i64 - p.z_flip as i64;
            p.out_qp.clamp(scale_wide(flipped, p.m).saturating_add(p.z_y as i64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationLUT {
    pub kind: ActivationKind,
    pub in_bits: u32,
    pub table: Vec<i32>,
    pub out_qp: QuantParams,
}

/// Tabulates `kind` over every code of the (unsigned) input grid.
pub fn build_lut(kind: ActivationKind, in_qp: &QuantParams, out_qp: QuantParams) -> Result<ActivationLUT> {
    if in_qp.signed {
        return Err(Error::Config("activation inputs must use an unsigned grid".into()));
    }
    let len = 1usize << in_qp.bits;
    let table = (0..len as i32).map(|q| quantize(kind.apply(dequantize(q, in_qp)), &out_qp)).collect();
    Ok(ActivationLUT { kind, in_bits: in_qp.bits, table, out_qp })
}

pub fn lut_apply(q_x: &[i32], lut: &ActivationLUT) -> Vec<i32> {
    let len = lut.table.len() as i64;
    let stride = len / ((1i64 << lut.in_bits) - 1);
    q_x.iter().map(|&q| lut.table[(stride * q as i64).clamp(0, len - 1) as usize]).collect()
}

pub(crate) fn extrema(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}
