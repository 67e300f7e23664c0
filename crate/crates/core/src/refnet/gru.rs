use crate::qgru::{BlockId, Site};
use crate::qops::sigmoid;

use super::GRUWeights;

/// Hook invoked on the values produced at every tensor site during the
/// forward pass. Implementations may observe the values, rewrite them in
/// place (fake quantization), and clear `pass` where the backward pass must
/// not propagate gradient.
pub trait SiteTransform {
    fn apply(&mut self, site: Site, values: &mut [f64], pass: &mut [bool]);
}

pub struct Identity;

impl SiteTransform for Identity {
    fn apply(&mut self, _: Site, _: &mut [f64], _: &mut [bool]) {}
}

/// Everything the backward pass needs from one timestep. Vectors hold the
/// post-transform values unless suffixed `_raw`.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    /// Dense outputs in [`BlockId::LINEAR`] order.
    pub lin: [Vec<f64>; 6],
    pub s_r: Vec<f64>,
    pub s_z: Vec<f64>,
    pub s_n: Vec<f64>,
    pub r_raw: Vec<f64>,
    pub z_raw: Vec<f64>,
    pub n_raw: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    pub m_r: Vec<f64>,
    pub c: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub h: Vec<f64>,
    /// Gradient pass-through per block output.
    pub pass: Vec<Vec<bool>>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub steps: Vec<StepTrace>,
    pub logits: Vec<f64>,
}

impl Trace {
    pub fn final_hidden(&self) -> &[f64] {
        &self.steps.last().expect("non-empty trace").h
    }
}

pub(crate) fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (row, o) in w.chunks_exact(cols).zip(out.iter_mut()) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn matvec_t_add(w: &[f64], cols: usize, d: &[f64], out: &mut [f64]) {
    for (row, &di) in w.chunks_exact(cols).zip(d) {
        if di != 0.0 {
            out.iter_mut().zip(row).for_each(|(o, &a)| *o += a * di);
        }
    }
}

fn outer_add(g: &mut [f64], cols: usize, d: &[f64], x: &[f64]) {
    for (row, &di) in g.chunks_exact_mut(cols).zip(d) {
        if di != 0.0 {
            row.iter_mut().zip(x).for_each(|(gij, &xj)| *gij += di * xj);
        }
    }
}

fn dense(w: &[f64], b: &[f64], cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    matvec_add(w, cols, x, &mut out);
    out
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn step(w: &GRUWeights, x: &[f64], h_prev: &[f64], tf: &mut dyn SiteTransform) -> StepTrace {
    let h = w.dims.hidden_size;
    let mut x = x.to_vec();
    let mut ignored = vec![true; x.len()];
    tf.apply(Site::Input, &mut x, &mut ignored);

    let mut pass: Vec<Vec<bool>> = vec![vec![true; h]; BlockId::ALL.len()];
    let mut site = |b: BlockId, mut v: Vec<f64>, tf: &mut dyn SiteTransform| {
        tf.apply(Site::Block(b), &mut v, &mut pass[b.index()]);
        v
    };

    let lin: [Vec<f64>; 6] = BlockId::LINEAR.map(|b| {
        let (wm, bias) = w.linear(b);
        let input = if b.is_input_linear() { &x[..] } else { h_prev };
        let cols = w.dims.linear_cols(b);
        site(b, dense(wm, bias, cols, input), tf)
    });
    let [a_ir, a_iz, a_in, a_hr, a_hz, a_hn] = &lin;

    let s_r = site(BlockId::AddR, zip_map(a_ir, a_hr, |a, b| a + b), tf);
    let s_z = site(BlockId::AddZ, zip_map(a_iz, a_hz, |a, b| a + b), tf);
    let r_raw: Vec<f64> = s_r.iter().map(|&v| sigmoid(v)).collect();
    let z_raw: Vec<f64> = s_z.iter().map(|&v| sigmoid(v)).collect();
    let r = site(BlockId::SigR, r_raw.clone(), tf);
    let z = site(BlockId::SigZ, z_raw.clone(), tf);
    let m_r = site(BlockId::MulR, zip_map(&r, a_hn, |a, b| a * b), tf);
    let s_n = site(BlockId::AddN, zip_map(a_in, &m_r, |a, b| a + b), tf);
    let n_raw: Vec<f64> = s_n.iter().map(|v| v.tanh()).collect();
    let n = site(BlockId::TanhN, n_raw.clone(), tf);
    let c = site(BlockId::ComplZ, z.iter().map(|&v| 1.0 - v).collect(), tf);
    let u = site(BlockId::MulNew, zip_map(&c, &n, |a, b| a * b), tf);
    let v = site(BlockId::MulOld, zip_map(&z, h_prev, |a, b| a * b), tf);
    let h_new = site(BlockId::AddH, zip_map(&u, &v, |a, b| a + b), tf);

    StepTrace {
        x,
        h_prev: h_prev.to_vec(),
        lin,
        s_r,
        s_z,
        s_n,
        r_raw,
        z_raw,
        n_raw,
        r,
        z,
        n,
        m_r,
        c,
        u,
        v,
        h: h_new,
        pass,
    }
}

/// One GRU update `h_t = (1 - z) ⊙ n + z ⊙ h_{t-1}` without any transform.
pub fn gru_step_float(x: &[f64], h: &[f64], w: &GRUWeights) -> Vec<f64> {
    step(w, x, h, &mut Identity).h
}

/// Runs a `T x F` row-major sequence from `h_0 = 0` and applies the
/// classifier to the final hidden state.
pub fn forward_sequence(w: &GRUWeights, seq: &[f64], tf: &mut dyn SiteTransform) -> Trace {
    let f = w.dims.input_features;
    assert!(!seq.is_empty() && seq.len().is_multiple_of(f), "sequence length must be a multiple of F");
    let mut h = vec![0.0; w.dims.hidden_size];
    let mut steps = Vec::with_capacity(seq.len() / f);
    for x in seq.chunks_exact(f) {
        let st = step(w, x, &h, tf);
        h.clone_from(&st.h);
        steps.push(st);
    }
    let logits = dense(&w.w_c, &w.b_c, w.dims.hidden_size, &h);
    Trace { steps, logits }
}

/// Index of the largest logit, ties toward the lowest index.
pub fn predict(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

fn mask(d: &mut [f64], pass: &[bool]) {
    d.iter_mut().zip(pass).for_each(|(g, &p)| {
        if !p {
            *g = 0.0
        }
    });
}

/// Backpropagates `dlogits` through the classifier and every timestep,
/// accumulating into `grad`. `w` must be the weights used for the forward
/// pass that produced `trace`.
pub fn backward(w: &GRUWeights, trace: &Trace, dlogits: &[f64], grad: &mut GRUWeights) {
    let hs = w.dims.hidden_size;
    let h_last = trace.final_hidden();
    outer_add(&mut grad.w_c, hs, dlogits, h_last);
    grad.b_c.iter_mut().zip(dlogits).for_each(|(g, d)| *g += d);
    let mut dh = vec![0.0; hs];
    matvec_t_add(&w.w_c, hs, dlogits, &mut dh);

    for st in trace.steps.iter().rev() {
        let p = |b: BlockId| st.pass[b.index()].as_slice();
        mask(&mut dh, p(BlockId::AddH));
        let mut du = dh.clone();
        let mut dv = dh.clone();
        mask(&mut du, p(BlockId::MulNew));
        mask(&mut dv, p(BlockId::MulOld));

        let mut dc = zip_map(&du, &st.n, |a, b| a * b);
        let mut dn = zip_map(&du, &st.c, |a, b| a * b);
        let mut dz = zip_map(&dv, &st.h_prev, |a, b| a * b);
        let mut dh_prev = zip_map(&dv, &st.z, |a, b| a * b);

        mask(&mut dc, p(BlockId::ComplZ));
        dz.iter_mut().zip(&dc).for_each(|(a, b)| *a -= b);

        mask(&mut dn, p(BlockId::TanhN));
        let mut ds_n = zip_map(&dn, &st.n_raw, |d, n| d * (1.0 - n * n));
        mask(&mut ds_n, p(BlockId::AddN));
        let mut dm_r = ds_n.clone();
        mask(&mut dm_r, p(BlockId::MulR));
        let mut dr = zip_map(&dm_r, &st.lin[5], |a, b| a * b);
        let da_hn = zip_map(&dm_r, &st.r, |a, b| a * b);

        mask(&mut dr, p(BlockId::SigR));
        let mut ds_r = zip_map(&dr, &st.r_raw, |d, r| d * r * (1.0 - r));
        mask(&mut dz, p(BlockId::SigZ));
        let mut ds_z = zip_map(&dz, &st.z_raw, |d, z| d * z * (1.0 - z));
        mask(&mut ds_r, p(BlockId::AddR));
        mask(&mut ds_z, p(BlockId::AddZ));

        let mut dlin = [ds_r.clone(), ds_z.clone(), ds_n, ds_r, ds_z, da_hn];
        for (k, b) in BlockId::LINEAR.iter().enumerate() {
            let d = &mut dlin[k];
            mask(d, p(*b));
            let cols = w.dims.linear_cols(*b);
            let input = if b.is_input_linear() { &st.x } else { &st.h_prev };
            let (wm, _) = w.linear(*b);
            let (gw, gb) = match b {
                BlockId::Wir => (&mut grad.w_ir, &mut grad.b_ir),
                BlockId::Wiz => (&mut grad.w_iz, &mut grad.b_iz),
                BlockId::Win => (&mut grad.w_in, &mut grad.b_in),
                BlockId::Whr => (&mut grad.w_hr, &mut grad.b_hr),
                BlockId::Whz => (&mut grad.w_hz, &mut grad.b_hz),
                _ => (&mut grad.w_hn, &mut grad.b_hn),
            };
            outer_add(gw, cols, d, input);
            gb.iter_mut().zip(d.iter()).for_each(|(g, v)| *g += v);
            if !b.is_input_linear() {
                matvec_t_add(wm, cols, d, &mut dh_prev);
            }
        }
        dh = dh_prev;
    }
}
