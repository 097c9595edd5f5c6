//! Haptic-audio-motor model: a per-step encoder feeding an LSTM whose hidden
//! state drives a prediction at every time step. The LSTM can start from a
//! latent transferred from the image model.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Sequence, Window, TARGET_DIM};
use crate::error::{Error, Result};
use crate::nn::dense::{batch_affine_backward, batch_affine_forward};
use crate::nn::scalar::matmul;
use crate::nn::{Activation, AdamConfig, AdamState, CandidateActivation, Gradients, ParamId, ParamSet, Scalar};
use crate::par::Exec;
use crate::rng::{derive_seed, Rng};
use crate::sim::CHANNELS;
use crate::store::{ArtifactReader, ArtifactWriter};
use crate::vision::VisionModel;

pub const CHECKPOINT_KIND: &str = "ha-checkpoint";

const CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Proposed,
    Baseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Mode::Proposed),
            "baseline" => Ok(Mode::Baseline),
            _ => Err(Error::Invalid(format!("unknown mode `{s}` (expected proposed or baseline)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaArch {
    pub input: usize,
    pub encoder: [usize; 2],
    /// Encoder output width and LSTM hidden size.
    pub latent: usize,
    #[serde(default)]
    pub candidate: CandidateActivation,
}

impl Default for HaArch {
    fn default() -> Self {
        Self {
            input: CHANNELS,
            encoder: [64, 32],
            latent: 20,
            candidate: CandidateActivation::Tanh,
        }
    }
}

type Layer = (ParamId, ParamId);

#[derive(Clone, Debug, PartialEq)]
struct Ids {
    enc: [Layer; 3],
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
    head: Layer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HaModel<T = f32> {
    pub arch: HaArch,
    pub params: ParamSet<T>,
    ids: Ids,
}

/// Identifies the scene a training window starts in.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SceneId(pub String);

impl SceneId {
    pub fn of_window(w: &Window) -> Self {
        Self(format!("seq{}@{}", w.seq, w.start))
    }
}

/// Image latents of the training scenes and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferBundle {
    pub latents: BTreeMap<SceneId, Vec<f32>>,
    pub global_mean_latent: Vec<f32>,
}

impl TransferBundle {
    pub fn new(latents: BTreeMap<SceneId, Vec<f32>>) -> Result<Self> {
        let dim = latents
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::Invalid("transfer bundle needs at least one latent".into()))?;
        if latents.values().any(|l| l.len() != dim) {
            return Err(Error::Shape("transferred latents differ in length".into()));
        }
        let mut mean = vec![0.0f64; dim];
        for l in latents.values() {
            for (m, &v) in mean.iter_mut().zip(l) {
                *m += v as f64;
            }
        }
        let n = latents.len() as f64;
        Ok(Self {
            global_mean_latent: mean.into_iter().map(|m| (m / n) as f32).collect(),
            latents,
        })
    }

    /// Latents of the views at each training window's first frame.
    pub fn from_vision(vision: &VisionModel, train: &[Sequence], windows: &[Window], exec: Exec) -> Result<Self> {
        let mut images = Vec::with_capacity(windows.len());
        for w in windows {
            let img = train[w.seq]
                .keyframe(w.start)
                .ok_or_else(|| Error::MissingLatent(SceneId::of_window(w).0))?;
            images.push(img);
        }
        let latents = vision.latents(&images, exec);
        Self::new(windows.iter().map(SceneId::of_window).zip(latents).collect())
    }

    pub fn dim(&self) -> usize {
        self.global_mean_latent.len()
    }
}

/// Initial LSTM state, used for both `h0` and `c0`.
pub fn make_initial_state(
    mode: Mode,
    hidden: usize,
    transfer: Option<&TransferBundle>,
    scene: Option<&SceneId>,
) -> Result<Vec<f32>> {
    match mode {
        Mode::Baseline => Ok(vec![0.0; hidden]),
        Mode::Proposed => {
            let t = transfer.ok_or_else(|| Error::Invalid("proposed mode needs a transfer bundle".into()))?;
            if t.dim() != hidden {
                return Err(Error::Shape(format!("latent size {} differs from hidden size {hidden}", t.dim())));
            }
            match scene {
                Some(s) => t.latents.get(s).cloned().ok_or_else(|| Error::MissingLatent(s.0.clone())),
                None => Ok(t.global_mean_latent.clone()),
            }
        }
    }
}

/// Forward activations of a time-major batch: row `t * b + i` is step `t`
/// of window `i`.
struct Trace<T> {
    b: usize,
    steps: usize,
    a1: Vec<T>,
    a2: Vec<T>,
    z: Vec<T>,
    gates: Vec<T>,
    c: Vec<T>,
    c_act: Vec<T>,
    h: Vec<T>,
    h0: Vec<T>,
    y: Vec<T>,
}

/// Mean over windows of the per-step summed squared error averaged over the
/// steps. Each slice is `steps × 5`.
pub fn ha_loss<T: Scalar>(preds: &[&[T]], truths: &[&[T]], steps: usize) -> f64 {
    let n = preds.len();
    let total: f64 = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| p.iter().zip(t.iter()).map(|(&a, &b)| (a - b).f64().powi(2)).sum::<f64>())
        .sum();
    total / (n * steps) as f64
}

fn to_time_major<T: Scalar>(windows: &[&[T]], steps: usize, width: usize) -> Vec<T> {
    let b = windows.len();
    let mut out = vec![T::zero(); steps * b * width];
    for (i, w) in windows.iter().enumerate() {
        for t in 0..steps {
            out[(t * b + i) * width..(t * b + i + 1) * width].copy_from_slice(&w[t * width..(t + 1) * width]);
        }
    }
    out
}

impl<T: Scalar> HaModel<T> {
    pub fn new(arch: HaArch, seed: u64) -> Result<Self> {
        if arch.input == 0 || arch.latent == 0 || arch.encoder.contains(&0) {
            return Err(Error::Invalid("layer widths must be positive".into()));
        }
        let mut p = ParamSet::new(seed);
        let (d, [e1, e2], h) = (arch.input, arch.encoder, arch.latent);
        let mut layer = |name: &str, o: usize, i: usize| -> Result<Layer> {
            Ok((
                p.register_uniform(&format!("{name}.w"), &[o, i], i)?,
                p.register_uniform(&format!("{name}.b"), &[o], i)?,
            ))
        };
        let enc = [layer("enc0", e1, d)?, layer("enc1", e2, e1)?, layer("enc2", h, e2)?];
        let wx = p.register_uniform("lstm.wx", &[4 * h, h], h)?;
        let wh = p.register_uniform("lstm.wh", &[4 * h, h], h)?;
        let b = p.register_uniform("lstm.b", &[4 * h], h)?;
        let head = (
            p.register_uniform("head.w", &[TARGET_DIM, h], h)?,
            p.register_uniform("head.b", &[TARGET_DIM], h)?,
        );
        Ok(Self {
            arch,
            params: p,
            ids: Ids { enc, wx, wh, b, head },
        })
    }

    /// Same architecture with `params` swapped in; `params` must share the
    /// layout of `self.params`.
    pub fn with_params(&self, params: ParamSet<T>) -> Self {
        Self {
            arch: self.arch.clone(),
            params,
            ids: self.ids.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> HaModel<U> {
        HaModel {
            arch: self.arch.clone(),
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    /// Per-step encoding of `n` stacked frames.
    pub fn encode(&self, x: &[T], n: usize) -> Vec<T> {
        self.encode_full(x, n).2
    }

    fn encode_full(&self, x: &[T], n: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let p = &self.params;
        let [(w0, b0), (w1, b1), (w2, b2)] = self.ids.enc;
        let [e1, e2] = self.arch.encoder;
        let mut a1 = vec![T::zero(); n * e1];
        batch_affine_forward(x, n, p.data(w0), p.data(b0), Activation::Relu, &mut a1);
        let mut a2 = vec![T::zero(); n * e2];
        batch_affine_forward(&a1, n, p.data(w1), p.data(b1), Activation::Relu, &mut a2);
        let mut z = vec![T::zero(); n * self.arch.latent];
        batch_affine_forward(&a2, n, p.data(w2), p.data(b2), Activation::Sigmoid, &mut z);
        (a1, a2, z)
    }

    fn forward_batch(&self, x: &[T], b: usize, steps: usize, h0: Vec<T>) -> Trace<T> {
        let p = &self.params;
        let h = self.arch.latent;
        let n = steps * b;
        let (a1, a2, z) = self.encode_full(x, n);
        let mut gates = vec![T::zero(); n * 4 * h];
        batch_affine_forward(&z, n, p.data(self.ids.wx), p.data(self.ids.b), Activation::Linear, &mut gates);
        let cand = self.arch.candidate.activation();
        let wh = p.data(self.ids.wh);
        let mut c = vec![T::zero(); n * h];
        let mut c_act = vec![T::zero(); n * h];
        let mut hs = vec![T::zero(); n * h];
        for t in 0..steps {
            let (h_prev, c_prev): (&[T], &[T]) = if t == 0 {
                (&h0, &h0)
            } else {
                (&hs[(t - 1) * b * h..t * b * h], &c[(t - 1) * b * h..t * b * h])
            };
            let g = &mut gates[t * b * 4 * h..(t + 1) * b * 4 * h];
            matmul(h_prev, false, wh, true, g, b, h, 4 * h, true);
            let mut c_new = vec![T::zero(); b * h];
            for i in 0..b {
                let gi = &mut g[i * 4 * h..(i + 1) * 4 * h];
                for (r, v) in gi.iter_mut().enumerate() {
                    *v = if (2 * h..3 * h).contains(&r) {
                        cand.apply(*v)
                    } else {
                        Activation::Sigmoid.apply(*v)
                    };
                }
                for j in 0..h {
                    c_new[i * h + j] = gi[h + j] * c_prev[i * h + j] + gi[j] * gi[2 * h + j];
                }
            }
            let base = t * b * h;
            for k in 0..b * h {
                let (i, j) = (k / h, k % h);
                let ca = cand.apply(c_new[k]);
                c_act[base + k] = ca;
                hs[base + k] = g[i * 4 * h + 3 * h + j] * ca;
            }
            c[base..base + b * h].copy_from_slice(&c_new);
        }
        let mut y = vec![T::zero(); n * TARGET_DIM];
        let (hw, hb) = self.ids.head;
        batch_affine_forward(&hs, n, p.data(hw), p.data(hb), Activation::Sigmoid, &mut y);
        Trace {
            b,
            steps,
            a1,
            a2,
            z,
            gates,
            c,
            c_act,
            h: hs,
            h0,
            y,
        }
    }

    /// Accumulates `scale · d(Σ squared error)/dθ` for a batch.
    fn backward_batch(&self, tr: &Trace<T>, x: &[T], targets: &[T], scale: T, g: &mut Gradients<T>) {
        let p = &self.params;
        let (b, steps, h) = (tr.b, tr.steps, self.arch.latent);
        let n = steps * b;
        let two = T::of(2.0);
        let mut dy: Vec<T> = tr.y.iter().zip(targets).map(|(&y, &t)| scale * two * (y - t)).collect();
        Activation::Sigmoid.backprop_in_place(&tr.y, &mut dy);
        let mut dh_all = vec![T::zero(); n * h];
        {
            let (w, bb) = self.ids.head;
            let (dw, db) = g.pair_mut(w, bb);
            batch_affine_backward(&tr.h, n, p.data(w), &dy, dw, db, Some(&mut dh_all));
        }

        let cand = self.arch.candidate.activation();
        let wh = p.data(self.ids.wh);
        let mut dgpre = vec![T::zero(); n * 4 * h];
        let mut dh_next = vec![T::zero(); b * h];
        let mut dc_next = vec![T::zero(); b * h];
        for t in (0..steps).rev() {
            let c_prev: &[T] = if t == 0 { &tr.h0 } else { &tr.c[(t - 1) * b * h..t * b * h] };
            let base = t * b * h;
            let dg = &mut dgpre[t * b * 4 * h..(t + 1) * b * 4 * h];
            for i in 0..b {
                let gi = &tr.gates[(t * b + i) * 4 * h..(t * b + i + 1) * 4 * h];
                let dgi = &mut dg[i * 4 * h..(i + 1) * 4 * h];
                for j in 0..h {
                    let k = i * h + j;
                    let (ig, fg, gg, og) = (gi[j], gi[h + j], gi[2 * h + j], gi[3 * h + j]);
                    let ca = tr.c_act[base + k];
                    let dh = dh_all[base + k] + dh_next[k];
                    let dct = dc_next[k] + dh * og * cand.derivative_from_output(ca);
                    dgi[j] = dct * gg * ig * (T::one() - ig);
                    dgi[h + j] = dct * c_prev[k] * fg * (T::one() - fg);
                    dgi[2 * h + j] = dct * ig * cand.derivative_from_output(gg);
                    dgi[3 * h + j] = dh * ca * og * (T::one() - og);
                    dc_next[k] = dct * fg;
                }
            }
            matmul(dg, false, wh, false, &mut dh_next, b, 4 * h, h, false);
        }
        let mut h_prev_all = Vec::with_capacity(n * h);
        h_prev_all.extend_from_slice(&tr.h0);
        h_prev_all.extend_from_slice(&tr.h[..(steps - 1) * b * h]);
        matmul(&dgpre, true, &h_prev_all, false, g.get_mut(self.ids.wh), 4 * h, n, h, true);
        let mut dz = vec![T::zero(); n * h];
        {
            let (dw, db) = g.pair_mut(self.ids.wx, self.ids.b);
            batch_affine_backward(&tr.z, n, p.data(self.ids.wx), &dgpre, dw, db, Some(&mut dz));
        }
        Activation::Sigmoid.backprop_in_place(&tr.z, &mut dz);
        let [(w0, b0), (w1, b1), (w2, b2)] = self.ids.enc;
        let mut da2 = vec![T::zero(); n * self.arch.encoder[1]];
        {
            let (dw, db) = g.pair_mut(w2, b2);
            batch_affine_backward(&tr.a2, n, p.data(w2), &dz, dw, db, Some(&mut da2));
        }
        Activation::Relu.backprop_in_place(&tr.a2, &mut da2);
        let mut da1 = vec![T::zero(); n * self.arch.encoder[0]];
        {
            let (dw, db) = g.pair_mut(w1, b1);
            batch_affine_backward(&tr.a1, n, p.data(w1), &da2, dw, db, Some(&mut da1));
        }
        Activation::Relu.backprop_in_place(&tr.a1, &mut da1);
        let (dw, db) = g.pair_mut(w0, b0);
        batch_affine_backward(x, n, p.data(w0), &da1, dw, db, None);
    }

    fn check_inputs(&self, inputs: &[&[T]], h0: &[&[T]], steps: usize) {
        assert_eq!(inputs.len(), h0.len(), "one initial state per window");
        for w in inputs {
            assert!(w.len() >= steps * self.arch.input, "window shorter than {steps} steps");
        }
        for s in h0 {
            assert_eq!(s.len(), self.arch.latent, "initial state size");
        }
    }

    /// Outputs at every step for each window (`steps × 5` each). `inputs[i]`
    /// holds at least `steps` frames; `h0[i]` seeds both LSTM states.
    pub fn forward_windows(&self, inputs: &[&[T]], h0: &[&[T]], steps: usize) -> Vec<Vec<T>> {
        self.check_inputs(inputs, h0, steps);
        let b = inputs.len();
        let x = to_time_major(inputs, steps, self.arch.input);
        let tr = self.forward_batch(&x, b, steps, to_time_major(h0, 1, self.arch.latent));
        (0..b)
            .map(|i| {
                (0..steps)
                    .flat_map(|t| tr.y[(t * b + i) * TARGET_DIM..(t * b + i + 1) * TARGET_DIM].iter().copied())
                    .collect()
            })
            .collect()
    }

    /// Last-step outputs per window, evaluated in parallel chunks.
    pub fn final_outputs(&self, inputs: &[&[T]], h0: &[&[T]], steps: usize, exec: Exec) -> Vec<[T; TARGET_DIM]> {
        self.check_inputs(inputs, h0, steps);
        exec.map_chunks(inputs.len(), CHUNK, |r| {
            let outs = self.forward_windows(&inputs[r.clone()], &h0[r], steps);
            outs.into_iter()
                .map(|o| std::array::from_fn(|k| o[(steps - 1) * TARGET_DIM + k]))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }

    /// Mean loss over the given windows and its gradient.
    pub fn loss_and_grad(
        &self,
        inputs: &[&[T]],
        targets: &[&[T]],
        h0: &[&[T]],
        steps: usize,
        exec: Exec,
    ) -> (f64, Gradients<T>) {
        self.check_inputs(inputs, h0, steps);
        let n = inputs.len();
        let scale = T::of(1.0 / (n * steps) as f64);
        let parts = exec.map_chunks(n, CHUNK, |r| {
            let b = r.len();
            let x = to_time_major(&inputs[r.clone()], steps, self.arch.input);
            let tg = to_time_major(&targets[r.clone()], steps, TARGET_DIM);
            let tr = self.forward_batch(&x, b, steps, to_time_major(&h0[r], 1, self.arch.latent));
            let sse: f64 = tr.y.iter().zip(&tg).map(|(&a, &t)| (a - t).f64().powi(2)).sum();
            let mut g = Gradients::zeros_like(&self.params);
            self.backward_batch(&tr, &x, &tg, scale, &mut g);
            (sse, g)
        });
        let mut loss = 0.0;
        let mut grads: Option<Gradients<T>> = None;
        for (s, g) in parts {
            loss += s;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.add_assign(&g),
            }
        }
        (
            loss / (n * steps) as f64,
            grads.unwrap_or_else(|| Gradients::zeros_like(&self.params)),
        )
    }
}

impl HaModel<f32> {
    pub fn save(&self, dir: &Path, meta: &HaCheckpointMeta) -> Result<()> {
        let mut w = ArtifactWriter::create(dir)?;
        w.put_params("", &self.params)?;
        w.finish(CHECKPOINT_KIND, meta)
    }

    pub fn load(dir: &Path) -> Result<(Self, HaCheckpointMeta)> {
        let r = ArtifactReader::<HaCheckpointMeta>::open(dir, CHECKPOINT_KIND)?;
        let meta = r.manifest.meta.clone();
        let mut model = Self::new(meta.arch.clone(), meta.seed)?;
        r.load_params("", &mut model.params)?;
        Ok((model, meta))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaCheckpointMeta {
    pub arch: HaArch,
    pub mode: Mode,
    pub seed: u64,
    pub epochs: usize,
    /// Mean transferred latent, used as the initial state at inference in
    /// proposed mode.
    pub inference_state: Vec<f32>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaTrainConfig {
    pub epochs: usize,
    pub batch_windows: usize,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for HaTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20000,
            batch_windows: 16,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaEpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

/// Frames and targets of `w`, as slices into the parent sequence.
pub fn window_slices<'a>(seqs: &'a [Sequence], w: &Window) -> (&'a [f32], &'a [f32]) {
    let s = &seqs[w.seq];
    (
        &s.frames[w.start * CHANNELS..w.end() * CHANNELS],
        &s.targets[w.start * TARGET_DIM..w.end() * TARGET_DIM],
    )
}

/// Minibatch Adam over `windows` of `train`. Both modes share the seed, so
/// initialisation and batch order are identical and only the initial LSTM
/// state differs.
pub fn train_ha(
    train: &[Sequence],
    windows: &[Window],
    transfer: Option<&TransferBundle>,
    mode: Mode,
    arch: &HaArch,
    cfg: &HaTrainConfig,
) -> Result<(HaModel, Vec<HaEpochLoss>)> {
    let steps = windows
        .first()
        .map(|w| w.len)
        .ok_or_else(|| Error::Invalid("no training windows".into()))?;
    if windows.iter().any(|w| w.len != steps || w.end() > train[w.seq].len) {
        return Err(Error::Invalid("windows must share one length and lie inside their sequences".into()));
    }
    let init: Vec<Vec<f32>> = windows
        .iter()
        .map(|w| make_initial_state(mode, arch.latent, transfer, Some(&SceneId::of_window(w))))
        .collect::<Result<_>>()?;
    let mut model = HaModel::<f32>::new(arch.clone(), derive_seed(cfg.seed, 0))?;
    let mut adam = AdamState::new(&model.params, cfg.adam.clone());
    let mut rng = Rng::new(derive_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_windows.max(1)) {
            let (xs, ts): (Vec<&[f32]>, Vec<&[f32]>) = batch.iter().map(|&i| window_slices(train, &windows[i])).unzip();
            let h0: Vec<&[f32]> = batch.iter().map(|&i| init[i].as_slice()).collect();
            let (loss, mut grads) = model.loss_and_grad(&xs, &ts, &h0, steps, cfg.exec);
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite loss or gradient in {} mode (loss {loss})", mode.name()),
                });
            }
            grads.clip_norm(cfg.clip_norm);
            model.params.set_grads(&grads)?;
            adam.step(&mut model.params)?;
            total += loss * batch.len() as f64;
        }
        history.push(HaEpochLoss {
            epoch,
            loss: total / windows.len() as f64,
        });
    }
    model.params.clear_grads();
    Ok((model, history))
}

pub fn write_history_csv(path: &Path, history: &[HaEpochLoss]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,loss")?;
    for h in history {
        writeln!(out, "{},{}", h.epoch, h.loss)?;
    }
    out.flush()?;
    Ok(())
}
