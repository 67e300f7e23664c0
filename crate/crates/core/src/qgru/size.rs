use super::{BlockId, Genome, ModelDims, CLASSIFIER_BITS};

const BIAS_BITS: u64 = 32;
const REFERENCE_BITS: u64 = 16;

/// Storage of the 6 GRU dense layers and the classifier: every weight at its
/// layer's bit-width plus 32 bits per bias element. With `baseline` every
/// weight is counted at 16 bits instead.
pub fn model_size_bits(genome: &Genome, dims: &ModelDims, baseline: bool) -> u64 {
    let h = dims.hidden_size as u64;
    let mut total = 0;
    for b in BlockId::LINEAR {
        let bits = if baseline { REFERENCE_BITS } else { genome.bits(b) as u64 };
        total += h * dims.linear_cols(b) as u64 * bits + h * BIAS_BITS;
    }
    let c = dims.num_classes as u64;
    let bits = if baseline { REFERENCE_BITS } else { CLASSIFIER_BITS as u64 };
    total + c * h * bits + c * BIAS_BITS
}

/// `1 - size / baseline_size`; higher means smaller.
pub fn size_complement(genome: &Genome, dims: &ModelDims) -> f64 {
    1.0 - model_size_bits(genome, dims, false) as f64 / model_size_bits(genome, dims, true) as f64
}

/// Weight bits of the 6 GRU dense layers alone (no biases, no classifier).
pub fn gru_weight_bits(genome: &Genome, dims: &ModelDims) -> u64 {
    BlockId::LINEAR.iter().map(|&b| (dims.hidden_size * dims.linear_cols(b)) as u64 * genome.bits(b) as u64).sum()
}
