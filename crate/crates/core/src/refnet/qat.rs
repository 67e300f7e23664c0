use crate::calib::{calibrate, site_qparams, CalibrationStats};
use crate::dataio::SequenceDataset;
use crate::error::Result;
use crate::fxp::{compute_qparams, dequantize, quantize, quantize_nearest, QuantMode, QuantParams};
use crate::qgru::{BlockId, Genome, Site, CLASSIFIER_BITS};
use crate::qops::extrema;

use super::gru::SiteTransform;
use super::train::{fit, QuantHooks, TrainConfig, TrainReport};
use super::GRUWeights;

/// Forward of a quantize/dequantize node: `dequantize(quantize(r))`.
pub fn fake_quant(r: &[f64], qp: &QuantParams) -> Vec<f64> {
    r.iter().map(|&v| dequantize(quantize(v, qp), qp)).collect()
}

/// Clipped straight-through backward rule: the upstream gradient passes
/// unchanged where `alpha <= r <= beta` and is zeroed elsewhere.
pub fn fake_quant_grad(r: &[f64], qp: &QuantParams, upstream: &[f64]) -> Vec<f64> {
    r.iter().zip(upstream).map(|(&v, &g)| if v >= qp.alpha && v <= qp.beta { g } else { 0.0 }).collect()
}

fn fake_quant_weights(w: &mut [f64], bits: u32) -> Result<()> {
    let (lo, hi) = extrema(w);
    let qp = compute_qparams(lo.min(0.0), hi.max(0.0), bits, QuantMode::Symmetric)?;
    w.iter_mut().for_each(|v| *v = dequantize(quantize_nearest(*v, &qp), &qp));
    Ok(())
}

struct FakeQuantSites {
    qps: Vec<QuantParams>,
    batch: Vec<(f64, f64)>,
    record: bool,
}

impl SiteTransform for FakeQuantSites {
    fn apply(&mut self, site: Site, values: &mut [f64], pass: &mut [bool]) {
        let i = site.index();
        if self.record {
            let (lo, hi) = extrema(values);
            let b = &mut self.batch[i];
            *b = (b.0.min(lo), b.1.max(hi));
        }
        let qp = &self.qps[i];
        // mirror the integer kernels: lookup tables and the input site floor,
        // fixed-point requantization rounds to nearest
        let code = if matches!(site, Site::Input) || analytic(site) { quantize } else { quantize_nearest };
        for (v, p) in values.iter_mut().zip(pass.iter_mut()) {
            if *v < qp.alpha || *v > qp.beta {
                *p = false;
            }
            *v = dequantize(code(*v, qp), qp);
        }
    }
}

/// Fake-quantization state for QAT: EMA-tracked activation ranges and the
/// genome that fixes every site's bit-width.
pub struct QatState {
    genome: Genome,
    momentum: f64,
    ranges: Vec<(f64, f64)>,
    sites: FakeQuantSites,
}

impl QatState {
    pub fn new(genome: Genome, initial: &CalibrationStats) -> Result<Self> {
        let ranges: Vec<(f64, f64)> =
            Site::all().map(|s| initial.range(s).map(|r| (r.min, r.max))).collect::<Result<_>>()?;
        let mut state = QatState {
            genome,
            momentum: 0.9,
            ranges,
            sites: FakeQuantSites { qps: Vec::new(), batch: Vec::new(), record: true },
        };
        state.rebuild()?;
        Ok(state)
    }

    fn rebuild(&mut self) -> Result<()> {
        self.sites.qps = Site::all()
            .map(|s| {
                let (lo, hi) = self.ranges[s.index()];
                site_qparams(s, lo, hi, &self.genome)
            })
            .collect::<Result<_>>()?;
        self.sites.batch = vec![(f64::INFINITY, f64::NEG_INFINITY); Site::COUNT];
        Ok(())
    }

    pub fn site_range(&self, site: Site) -> (f64, f64) {
        self.ranges[site.index()]
    }
}

impl QuantHooks for QatState {
    fn forward_weights(&self, master: &GRUWeights) -> GRUWeights {
        let mut w = master.clone();
        for b in BlockId::LINEAR {
            // degenerate ranges are widened, never rejected, so this cannot fail
            fake_quant_weights(w.linear_weights_mut(b), self.genome.bits(b)).expect("valid bit-width");
        }
        fake_quant_weights(&mut w.w_c, CLASSIFIER_BITS).expect("valid bit-width");
        w
    }

    fn training_transform(&mut self) -> &mut dyn SiteTransform {
        self.sites.record = true;
        &mut self.sites
    }

    fn end_batch(&mut self) {
        let m = self.momentum;
        for s in Site::all() {
            if matches!(s, Site::Input) || analytic(s) {
                continue;
            }
            let (lo, hi) = self.sites.batch[s.index()];
            if lo > hi {
                continue;
            }
            let r = &mut self.ranges[s.index()];
            *r = (m * r.0 + (1.0 - m) * lo, m * r.1 + (1.0 - m) * hi);
        }
        // ranges stay finite and ordered, so rebuilding cannot fail
        self.rebuild().expect("finite EMA ranges");
    }

    fn eval_transform(&mut self) -> &mut dyn SiteTransform {
        self.sites.record = false;
        &mut self.sites
    }
}

fn analytic(s: Site) -> bool {
    matches!(s, Site::Block(BlockId::SigR | BlockId::SigZ | BlockId::TanhN))
}

/// Fine-tunes `w` with fake quantization on every weight matrix and every
/// block output at the genome's bit-widths. Activation ranges start from a
/// calibration pass over `data` and then follow an EMA (momentum 0.9) of
/// batch extrema.
pub fn qat_finetune(w: &GRUWeights, genome: &Genome, data: &SequenceDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let stats = calibrate(w, data, 1.0, cfg.seed)?;
    let mut state = QatState::new(*genome, &stats)?;
    fit(w.clone(), data, cfg, Some(&mut state))
}
