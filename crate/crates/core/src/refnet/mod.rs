//! Float reference GRU with a linear classifier head, trained by
//! backpropagation through time, plus quantization-aware fine-tuning.

mod gru;
mod qat;
mod train;

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qgru::{BlockId, ModelDims};

pub use gru::{
    backward, cross_entropy, forward_sequence, gru_step_float, predict, Identity, SiteTransform, StepTrace, Trace,
};
pub use qat::{fake_quant, fake_quant_grad, qat_finetune, QatState};
pub use train::{accuracy, train, train_from, Adam, TrainConfig, TrainReport};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Weights of a single-layer GRU and its classifier, matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GRUWeights {
    pub dims: ModelDims,
    pub w_ir: Vec<f64>,
    pub w_iz: Vec<f64>,
    pub w_in: Vec<f64>,
    pub w_hr: Vec<f64>,
    pub w_hz: Vec<f64>,
    pub w_hn: Vec<f64>,
    pub b_ir: Vec<f64>,
    pub b_iz: Vec<f64>,
    pub b_in: Vec<f64>,
    pub b_hr: Vec<f64>,
    pub b_hz: Vec<f64>,
    pub b_hn: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_c: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    #[serde(flatten)]
    weights: GRUWeights,
}

impl GRUWeights {
    pub fn zeros(dims: ModelDims) -> Self {
        let (f, h, c) = (dims.input_features, dims.hidden_size, dims.num_classes);
        GRUWeights {
            dims,
            w_ir: vec![0.0; h * f],
            w_iz: vec![0.0; h * f],
            w_in: vec![0.0; h * f],
            w_hr: vec![0.0; h * h],
            w_hz: vec![0.0; h * h],
            w_hn: vec![0.0; h * h],
            b_ir: vec![0.0; h],
            b_iz: vec![0.0; h],
            b_in: vec![0.0; h],
            b_hr: vec![0.0; h],
            b_hz: vec![0.0; h],
            b_hn: vec![0.0; h],
            w_c: vec![0.0; c * h],
            b_c: vec![0.0; c],
        }
    }

    /// Every parameter drawn uniformly from `±1/sqrt(H)`.
    pub fn init_uniform(dims: ModelDims, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (dims.hidden_size as f64).sqrt();
        let mut w = Self::zeros(dims);
        for p in w.params_mut() {
            p.iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
        }
        w
    }

    pub fn params(&self) -> [&Vec<f64>; 14] {
        [
            &self.w_ir, &self.w_iz, &self.w_in, &self.w_hr, &self.w_hz, &self.w_hn, &self.b_ir, &self.b_iz, &self.b_in,
            &self.b_hr, &self.b_hz, &self.b_hn, &self.w_c, &self.b_c,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Vec<f64>; 14] {
        [
            &mut self.w_ir,
            &mut self.w_iz,
            &mut self.w_in,
            &mut self.w_hr,
            &mut self.w_hz,
            &mut self.w_hn,
            &mut self.b_ir,
            &mut self.b_iz,
            &mut self.b_in,
            &mut self.b_hr,
            &mut self.b_hz,
            &mut self.b_hn,
            &mut self.w_c,
            &mut self.b_c,
        ]
    }

    /// Weight matrix and bias of one of the six GRU dense layers.
    pub fn linear(&self, block: BlockId) -> (&[f64], &[f64]) {
        match block {
            BlockId::Wir => (&self.w_ir, &self.b_ir),
            BlockId::Wiz => (&self.w_iz, &self.b_iz),
            BlockId::Win => (&self.w_in, &self.b_in),
            BlockId::Whr => (&self.w_hr, &self.b_hr),
            BlockId::Whz => (&self.w_hz, &self.b_hz),
            BlockId::Whn => (&self.w_hn, &self.b_hn),
            other => panic!("{other} is not a dense layer"),
        }
    }

    pub fn linear_weights_mut(&mut self, block: BlockId) -> &mut Vec<f64> {
        match block {
            BlockId::Wir => &mut self.w_ir,
            BlockId::Wiz => &mut self.w_iz,
            BlockId::Win => &mut self.w_in,
            BlockId::Whr => &mut self.w_hr,
            BlockId::Whz => &mut self.w_hz,
            BlockId::Whn => &mut self.w_hn,
            other => panic!("{other} is not a dense layer"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let (f, h, c) = (self.dims.input_features, self.dims.hidden_size, self.dims.num_classes);
        let expected = [h * f, h * f, h * f, h * h, h * h, h * h, h, h, h, h, h, h, c * h, c];
        for (p, &n) in self.params().iter().zip(&expected) {
            if p.len() != n {
                return Err(Error::Dimension { op: "model weights", expected: n, got: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("model weights contain non-finite values".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn add_assign(&mut self, other: &GRUWeights) {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile { version: MODEL_FORMAT_VERSION, weights: self.clone() };
        fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Version(file.version));
        }
        file.weights.validate()?;
        Ok(file.weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn init_respects_bound_and_shapes() {
        let dims = ModelDims::new(3, 16, 4).unwrap();
        let w = GRUWeights::init_uniform(dims, &mut ChaCha8Rng::seed_from_u64(42));
        w.validate().unwrap();
        assert!(w.params().iter().all(|p| p.iter().all(|v| v.abs() <= 0.25)));
        assert_eq!(w.num_params(), 3 * 16 * 3 + 3 * 256 + 6 * 16 + 4 * 16 + 4);
    }

    #[test]
    fn model_file_round_trip() {
        let dims = ModelDims::new(2, 3, 2).unwrap();
        let w = GRUWeights::init_uniform(dims, &mut ChaCha8Rng::seed_from_u64(1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        w.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"version\": 1"));
        assert_eq!(GRUWeights::load(&path).unwrap(), w);
    }

    #[test]
    fn load_rejects_wrong_shapes() {
        let dims = ModelDims::new(2, 3, 2).unwrap();
        let mut w = GRUWeights::zeros(dims);
        w.w_hn.pop();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        w.save(&path).unwrap();
        assert!(GRUWeights::load(&path).is_err());
    }
}
