use crate::calib::{calibrate, CalibrationStats};
use crate::dataio::SequenceDataset;
use crate::error::Result;
use crate::qgru::{quantize_model, Genome, ModelDims};
use crate::refnet::{qat_finetune, GRUWeights, TrainConfig};

use super::Fitness;

/// The quantize-then-evaluate pipeline: build the integer model for a genome
/// (optionally after QAT) and score it on a held-out split.
pub struct QuantEvaluator {
    weights: GRUWeights,
    stats: CalibrationStats,
    validation: SequenceDataset,
    qat: Option<(SequenceDataset, TrainConfig)>,
}

impl QuantEvaluator {
    /// Post-training quantization with fixed calibration statistics.
    pub fn ptq(weights: GRUWeights, stats: CalibrationStats, validation: SequenceDataset) -> Self {
        QuantEvaluator { weights, stats, validation, qat: None }
    }

    /// QAT fine-tuning on `train` before quantization; calibration is redone
    /// on the fine-tuned weights.
    pub fn qat(
        weights: GRUWeights,
        stats: CalibrationStats,
        validation: SequenceDataset,
        train: SequenceDataset,
        cfg: TrainConfig,
    ) -> Self {
        QuantEvaluator { weights, stats, validation, qat: Some((train, cfg)) }
    }
}

impl Fitness for QuantEvaluator {
    fn dims(&self) -> ModelDims {
        self.weights.dims
    }

    fn accuracy(&self, genome: &Genome, seed: u64) -> Result<f64> {
        let model = match &self.qat {
            None => quantize_model(&self.weights, &self.stats, genome)?,
            Some((train, cfg)) => {
                let cfg = TrainConfig { seed, ..cfg.clone() };
                let tuned = qat_finetune(&self.weights, genome, train, &cfg)?.weights;
                let stats = calibrate(&tuned, train, cfg.train_fraction, seed)?;
                quantize_model(&tuned, &stats, genome)?
            }
        };
        model.accuracy(&self.validation)
    }
}
