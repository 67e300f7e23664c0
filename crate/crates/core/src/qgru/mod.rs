//! Integer-only GRU cell built from the 17 quantized blocks, plus an 8-bit
//! classifier head and the model-size objective.

mod blocks;
mod size;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::{stats_to_qparams, CalibrationStats};
use crate::dataio::SequenceDataset;
use crate::error::{Error, Result};
use crate::fxp::{quantize, QuantParams};
use crate::qops::{
    build_lut, lut_apply, qadd, qcomplement, qlinear, qmul, ActivationKind, ActivationLUT, QAddParams,
    QComplementParams, QDense, QLinearParams, QMulParams,
};
use crate::refnet::GRUWeights;

pub use blocks::{BlockId, Genome, ModelDims, Site, MAX_GENE, MIN_GENE, NUM_BLOCKS};
pub use size::{gru_weight_bits, model_size_bits, size_complement};

/// Bit-width of the `x_t` grid; not part of the genome.
pub const INPUT_BITS: u32 = 8;
/// Weight bit-width of the classifier head; not part of the genome.
pub const CLASSIFIER_BITS: u32 = 8;

pub const QMODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BlockOp {
    Linear(QLinearParams),
    Add(QAddParams),
    Activation(ActivationLUT),
    Mul(QMulParams),
    Complement(QComplementParams),
}

impl BlockOp {
    pub fn out_qp(&self) -> &QuantParams {
        match self {
            BlockOp::Linear(p) => &p.out_qp,
            BlockOp::Add(p) => &p.out_qp,
            BlockOp::Activation(p) => &p.out_qp,
            BlockOp::Mul(p) => &p.out_qp,
            BlockOp::Complement(p) => &p.out_qp,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            BlockOp::Linear(_) => "linear",
            BlockOp::Add(_) => "add",
            BlockOp::Activation(_) => "activation",
            BlockOp::Mul(_) => "mul",
            BlockOp::Complement(_) => "complement",
        }
    }
}

fn expected_kind(b: BlockId) -> &'static str {
    match b {
        b if b.is_linear() => "linear",
        BlockId::AddR | BlockId::AddZ | BlockId::AddN | BlockId::AddH => "add",
        BlockId::SigR | BlockId::SigZ | BlockId::TanhN => "activation",
        BlockId::ComplZ => "complement",
        _ => "mul",
    }
}

/// Everything integer-only inference needs. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedGRUModel {
    pub version: u32,
    pub dims: ModelDims,
    pub genome: Genome,
    pub input_qp: QuantParams,
    /// Grid of `h_t`; identical to the `add_h` output grid.
    pub hidden_qp: QuantParams,
    /// One entry per block, in genome order.
    pub blocks: Vec<BlockOp>,
    /// Logits are read straight from its accumulator.
    pub classifier: QDense,
}

/// Builds the integer model for `genome` from float weights and calibration
/// statistics.
pub fn quantize_model(w: &GRUWeights, stats: &CalibrationStats, genome: &Genome) -> Result<QuantizedGRUModel> {
    w.validate()?;
    let dims = w.dims;
    let qps = stats_to_qparams(stats, genome)?;
    let q = |b: BlockId| *qps.block(b);
    let input_qp = *qps.get(Site::Input);
    let hidden_qp = q(BlockId::AddH);

    let mut blocks = Vec::with_capacity(NUM_BLOCKS);
    for b in BlockId::ALL {
        let op = match b {
            b if b.is_linear() => {
                let (wm, bias) = w.linear(b);
                let in_qp = if b.is_input_linear() { input_qp } else { hidden_qp };
                let dense = QDense::from_float(wm, bias, dims.hidden_size, dims.linear_cols(b), genome.bits(b), in_qp)?;
                BlockOp::Linear(QLinearParams::new(dense, q(b))?)
            }
            BlockId::AddR => BlockOp::Add(QAddParams::new(&q(BlockId::Wir), &q(BlockId::Whr), q(b))?),
            BlockId::AddZ => BlockOp::Add(QAddParams::new(&q(BlockId::Wiz), &q(BlockId::Whz), q(b))?),
            BlockId::AddN => BlockOp::Add(QAddParams::new(&q(BlockId::Win), &q(BlockId::MulR), q(b))?),
            BlockId::SigR => BlockOp::Activation(build_lut(ActivationKind::Sigmoid, &q(BlockId::AddR), q(b))?),
            BlockId::SigZ => BlockOp::Activation(build_lut(ActivationKind::Sigmoid, &q(BlockId::AddZ), q(b))?),
            BlockId::TanhN => BlockOp::Activation(build_lut(ActivationKind::Tanh, &q(BlockId::AddN), q(b))?),
            BlockId::MulR => BlockOp::Mul(QMulParams::new(&q(BlockId::SigR), &q(BlockId::Whn), q(b))?),
            BlockId::ComplZ => BlockOp::Complement(QComplementParams::new(&q(BlockId::SigZ), q(b))?),
            BlockId::MulNew => BlockOp::Mul(QMulParams::new(&q(BlockId::ComplZ), &q(BlockId::TanhN), q(b))?),
            BlockId::MulOld => BlockOp::Mul(QMulParams::new(&q(BlockId::SigZ), &hidden_qp, q(b))?),
            BlockId::AddH => BlockOp::Add(QAddParams::new(&q(BlockId::MulNew), &q(BlockId::MulOld), q(b))?),
            _ => unreachable!(),
        };
        blocks.push(op);
    }
    let classifier =
        QDense::from_float(&w.w_c, &w.b_c, dims.num_classes, dims.hidden_size, CLASSIFIER_BITS, hidden_qp)?;
    Ok(QuantizedGRUModel {
        version: QMODEL_FORMAT_VERSION,
        dims,
        genome: *genome,
        input_qp,
        hidden_qp,
        blocks,
        classifier,
    })
}

impl QuantizedGRUModel {
    fn linear(&self, b: BlockId) -> &QLinearParams {
        match &self.blocks[b.index()] {
            BlockOp::Linear(p) => p,
            _ => unreachable!("validated block layout"),
        }
    }
    fn add(&self, b: BlockId) -> &QAddParams {
        match &self.blocks[b.index()] {
            BlockOp::Add(p) => p,
            _ => unreachable!("validated block layout"),
        }
    }
    fn mul(&self, b: BlockId) -> &QMulParams {
        match &self.blocks[b.index()] {
            BlockOp::Mul(p) => p,
            _ => unreachable!("validated block layout"),
        }
    }
    fn lut(&self, b: BlockId) -> &ActivationLUT {
        match &self.blocks[b.index()] {
            BlockOp::Activation(p) => p,
            _ => unreachable!("validated block layout"),
        }
    }
    fn complement(&self) -> &QComplementParams {
        match &self.blocks[BlockId::ComplZ.index()] {
            BlockOp::Complement(p) => p,
            _ => unreachable!("validated block layout"),
        }
    }

    pub fn block(&self, b: BlockId) -> &BlockOp {
        &self.blocks[b.index()]
    }

    /// Checks block layout, shapes and the single recurrent grid.
    pub fn validate(&self) -> Result<()> {
        if self.version != QMODEL_FORMAT_VERSION {
            return Err(Error::Version(self.version));
        }
        self.dims.validate()?;
        if self.blocks.len() != NUM_BLOCKS {
            return Err(Error::Dimension { op: "model blocks", expected: NUM_BLOCKS, got: self.blocks.len() });
        }
        for (b, op) in BlockId::ALL.iter().zip(&self.blocks) {
            if op.kind() != expected_kind(*b) {
                return Err(Error::Config(format!("block {b} must be {}, found {}", expected_kind(*b), op.kind())));
            }
        }
        let h = self.dims.hidden_size;
        for b in BlockId::LINEAR {
            let d = &self.linear(b).dense;
            let cols = self.dims.linear_cols(b);
            if d.rows != h || d.cols != cols || d.q_w.len() != h * cols || d.q_bias.len() != h {
                return Err(Error::Config(format!("block {b} has inconsistent shape")));
            }
            if !b.is_input_linear() && d.in_qp != self.hidden_qp {
                return Err(Error::Config(format!("block {b} does not read the hidden grid")));
            }
        }
        let c = &self.classifier;
        if c.rows != self.dims.num_classes || c.cols != h || c.q_w.len() != c.rows * c.cols || c.q_bias.len() != c.rows
        {
            return Err(Error::Config("classifier has inconsistent shape".into()));
        }
        if self.block(BlockId::AddH).out_qp() != &self.hidden_qp
            || self.mul(BlockId::MulOld).z2 != self.hidden_qp.zero_code()
            || c.in_qp != self.hidden_qp
        {
            return Err(Error::Config("recurrent datapath uses more than one hidden grid".into()));
        }
        for b in [BlockId::SigR, BlockId::SigZ, BlockId::TanhN] {
            let lut = self.lut(b);
            if lut.table.len() != 1 << lut.in_bits {
                return Err(Error::Config(format!("block {b} table has the wrong length")));
            }
        }
        Ok(())
    }

    /// Codes of `h = 0` on the hidden grid.
    pub fn initial_hidden(&self) -> Vec<i32> {
        vec![quantize(0.0, &self.hidden_qp); self.dims.hidden_size]
    }

    /// Quantizes a real `T x F` sequence onto the 8-bit input grid.
    pub fn quantize_input(&self, seq: &[f64]) -> Vec<i32> {
        seq.iter().map(|&x| quantize(x, &self.input_qp)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: QuantizedGRUModel = serde_json::from_str(&fs::read_to_string(path)?)?;
        m.validate()?;
        Ok(m)
    }

    /// Share of `data` classified correctly by integer-only inference.
    pub fn accuracy(&self, data: &SequenceDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("evaluation dataset".into()));
        }
        let mut correct = 0usize;
        for i in 0..data.len() {
            let (_, label) = qgru_classify(&self.quantize_input(data.sequence(i)), self)?;
            correct += (label == data.label(i)) as usize;
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

/// One integer-only GRU update: returns the codes of `h_t` on the hidden grid.
pub fn qgru_step(q_x: &[i32], q_h: &[i32], model: &QuantizedGRUModel) -> Result<Vec<i32>> {
    use BlockId::*;
    if q_h.len() != model.dims.hidden_size {
        return Err(Error::Dimension { op: "qgru_step hidden", expected: model.dims.hidden_size, got: q_h.len() });
    }
    let a_ir = qlinear(q_x, model.linear(Wir))?;
    let a_iz = qlinear(q_x, model.linear(Wiz))?;
    let a_in = qlinear(q_x, model.linear(Win))?;
    let a_hr = qlinear(q_h, model.linear(Whr))?;
    let a_hz = qlinear(q_h, model.linear(Whz))?;
    let a_hn = qlinear(q_h, model.linear(Whn))?;

    let s_r = qadd(&a_ir, &a_hr, model.add(AddR))?;
    let s_z = qadd(&a_iz, &a_hz, model.add(AddZ))?;
    let r = lut_apply(&s_r, model.lut(SigR));
    let z = lut_apply(&s_z, model.lut(SigZ));
    let m_r = qmul(&r, &a_hn, model.mul(MulR))?;
    let s_n = qadd(&a_in, &m_r, model.add(AddN))?;
    let n = lut_apply(&s_n, model.lut(TanhN));
    let c = qcomplement(&z, model.complement());
    let u = qmul(&c, &n, model.mul(MulNew))?;
    let v = qmul(&z, q_h, model.mul(MulOld))?;
    qadd(&u, &v, model.add(AddH))
}

/// Runs a quantized `T x F` sequence from `h_0 = 0` and returns the
/// classifier accumulators with the arg-max label (ties to the lowest index).
pub fn qgru_classify(seq: &[i32], model: &QuantizedGRUModel) -> Result<(Vec<i64>, usize)> {
    let f = model.dims.input_features;
    if seq.is_empty() {
        return Err(Error::Empty("sequence".into()));
    }
    if !seq.len().is_multiple_of(f) {
        return Err(Error::Dimension { op: "qgru_classify", expected: f, got: seq.len() % f });
    }
    let mut h = model.initial_hidden();
    for x in seq.chunks_exact(f) {
        h = qgru_step(x, &h, model)?;
    }
    let logits = model.classifier.accumulate(&h)?;
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    Ok((logits, best))
}
