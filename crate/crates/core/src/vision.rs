//! Image model: strided-conv encoder, variational bottleneck with a sigmoid
//! latent, deconv decoder and a small prediction head on the latent.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Snapshot, TARGET_DIM};
use crate::error::{Error, Result};
use crate::nn::dense::{affine_backward, affine_forward, sigmoid};
use crate::nn::loss::sum_squared_error;
use crate::nn::vae::{kl_backward, kl_slice};
use crate::nn::{Activation, AdamConfig, AdamState, Conv2d, Deconv2d, Gradients, ParamId, ParamSet, Scalar, Tensor};
use crate::par::Exec;
use crate::rng::{derive_seed, Rng};
use crate::sim::RgbImage;
use crate::store::{ArtifactReader, ArtifactWriter};

pub const ALPHA: f64 = 0.25;
pub const BETA: f64 = 0.5;
pub const CHECKPOINT_KIND: &str = "vision-checkpoint";

/// Samples per parallel work unit; fixed so the reduction order never
/// depends on the thread count.
const CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisionArch {
    /// Square input side; must be a multiple of 16.
    pub image: usize,
    pub channels: [usize; 4],
    pub hidden: usize,
    pub latent: usize,
    pub head_hidden: usize,
    #[serde(default)]
    pub rec_reduction: RecReduction,
}

/// Reduction of the per-sample reconstruction error over pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecReduction {
    #[default]
    Sum,
    Mean,
}

impl Default for VisionArch {
    fn default() -> Self {
        Self {
            image: 96,
            channels: [16, 32, 64, 128],
            hidden: 256,
            latent: 20,
            head_hidden: 64,
            rec_reduction: RecReduction::Sum,
        }
    }
}

impl VisionArch {
    pub fn validate(&self) -> Result<()> {
        if self.image < 16 || self.image % 16 != 0 {
            return Err(Error::Invalid(format!("image side {} is not a positive multiple of 16", self.image)));
        }
        if self.channels.contains(&0) || self.hidden == 0 || self.latent == 0 || self.head_hidden == 0 {
            return Err(Error::Invalid("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        3 * self.image * self.image
    }

    fn rec_factor(&self) -> f64 {
        match self.rec_reduction {
            RecReduction::Sum => 1.0,
            RecReduction::Mean => 1.0 / self.pixels() as f64,
        }
    }

    fn bottleneck(&self) -> usize {
        self.image / 16
    }

    fn flat(&self) -> usize {
        self.channels[3] * self.bottleneck() * self.bottleneck()
    }

    fn convs(&self) -> [Conv2d; 4] {
        let c = self.channels;
        let ins = [3, c[0], c[1], c[2]];
        std::array::from_fn(|i| Conv2d {
            c_in: ins[i],
            c_out: c[i],
        })
    }

    /// Decoder layers in application order: `c3 → c2 → c1 → c0 → 3`.
    fn deconvs(&self) -> [Deconv2d; 4] {
        let c = self.channels;
        let chain = [c[3], c[2], c[1], c[0], 3];
        std::array::from_fn(|i| Deconv2d {
            c_in: chain[i],
            c_out: chain[i + 1],
        })
    }
}

type Layer = (ParamId, ParamId);

#[derive(Clone, Debug, PartialEq)]
struct Ids {
    enc: [Layer; 4],
    enc_fc: Layer,
    mu: Layer,
    logvar: Layer,
    dec_fc1: Layer,
    dec_fc2: Layer,
    dec: [Layer; 4],
    head1: Layer,
    head2: Layer,
}

fn layer<T: Scalar>(p: &mut ParamSet<T>, name: &str, shape: &[usize], outputs: usize, fan_in: usize) -> Result<Layer> {
    Ok((
        p.register_uniform(&format!("{name}.w"), shape, fan_in)?,
        p.register_uniform(&format!("{name}.b"), &[outputs], fan_in)?,
    ))
}

fn register<T: Scalar>(arch: &VisionArch, p: &mut ParamSet<T>) -> Result<Ids> {
    let mut enc = Vec::new();
    for (i, conv) in arch.convs().iter().enumerate() {
        enc.push(layer(p, &format!("enc{i}"), &conv.weight_shape(), conv.c_out, conv.fan_in())?);
    }
    let (h, z, f) = (arch.hidden, arch.latent, arch.flat());
    let enc_fc = layer(p, "enc_fc", &[h, f], h, f)?;
    let mu = layer(p, "mu", &[z, h], z, h)?;
    let logvar = layer(p, "logvar", &[z, h], z, h)?;
    let dec_fc1 = layer(p, "dec_fc1", &[h, z], h, z)?;
    let dec_fc2 = layer(p, "dec_fc2", &[f, h], f, h)?;
    let mut dec = Vec::new();
    for (i, d) in arch.deconvs().iter().enumerate() {
        // deconv weights are [c_in, c_out, 4, 4]
        dec.push(layer(p, &format!("dec{i}"), &d.weight_shape(), d.c_out, d.fan_in())?);
    }
    let hh = arch.head_hidden;
    let head1 = layer(p, "head1", &[hh, z], hh, z)?;
    let head2 = layer(p, "head2", &[TARGET_DIM, hh], TARGET_DIM, hh)?;
    Ok(Ids {
        enc: enc.try_into().expect("four encoder layers"),
        enc_fc,
        mu,
        logvar,
        dec_fc1,
        dec_fc2,
        dec: dec.try_into().expect("four decoder layers"),
        head1,
        head2,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisionModel<T = f32> {
    pub arch: VisionArch,
    pub params: ParamSet<T>,
    ids: Ids,
}

/// Outputs for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct VisionOutput {
    pub reconstruction: Tensor<f32>,
    pub mu: Tensor<f32>,
    pub logvar: Tensor<f32>,
    pub y: [f32; TARGET_DIM],
}

impl VisionOutput {
    pub fn y_pos(&self) -> [f32; 2] {
        [self.y[0], self.y[1]]
    }

    pub fn y_ori(&self) -> [f32; 2] {
        [self.y[2], self.y[3]]
    }

    pub fn y_shape(&self) -> f32 {
        self.y[4]
    }
}

/// Everything kept from a forward pass for the backward pass.
struct Trace<T> {
    enc_cols: Vec<Vec<T>>,
    enc_out: Vec<Vec<T>>,
    h_enc: Vec<T>,
    mu: Vec<T>,
    logvar: Vec<T>,
    eps: Vec<T>,
    z: Vec<T>,
    d1: Vec<T>,
    d2: Vec<T>,
    dec_out: Vec<Vec<T>>,
    hh: Vec<T>,
    y: Vec<T>,
}

impl<T> Trace<T> {
    fn reconstruction(&self) -> &[T] {
        self.dec_out.last().expect("decoder ran")
    }
}

/// Per-sample means of the three loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub kl: f64,
    pub rec: f64,
    pub pred: f64,
}

impl LossComponents {
    pub fn total(&self) -> f64 {
        ALPHA * self.kl + BETA * self.rec + self.pred
    }

    fn add(&mut self, o: &Self) {
        self.kl += o.kl;
        self.rec += o.rec;
        self.pred += o.pred;
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            kl: self.kl * s,
            rec: self.rec * s,
            pred: self.pred * s,
        }
    }
}

/// Composite loss from already reduced components.
pub fn vision_loss(components: &LossComponents) -> f64 {
    components.total()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub kl: f64,
    pub rec: f64,
    pub pred: f64,
}

impl<T: Scalar> VisionModel<T> {
    pub fn new(arch: VisionArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamSet::new(seed);
        let ids = register(&arch, &mut params)?;
        Ok(Self { arch, params, ids })
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

    pub fn cast<U: Scalar>(&self) -> VisionModel<U> {
        VisionModel {
            arch: self.arch.clone(),
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    pub fn head_params(&self) -> [ParamId; 4] {
        [self.ids.head1.0, self.ids.head1.1, self.ids.head2.0, self.ids.head2.1]
    }

    /// Zeroes the prediction head, leaving it inert (constant 0.5 output,
    /// no gradient into the latent).
    pub fn zero_head(&mut self) {
        for id in self.head_params() {
            self.params.get_mut(id).data_mut().fill(T::zero());
        }
    }

    fn encode(&self, image: &[T], keep: bool) -> (Vec<Vec<T>>, Vec<Vec<T>>, Vec<T>, Vec<T>, Vec<T>) {
        let p = &self.params;
        let mut side = self.arch.image;
        let mut x = image.to_vec();
        let mut cols_all = Vec::new();
        let mut outs = Vec::new();
        let mut cols = Vec::new();
        for (conv, &(w, b)) in self.arch.convs().iter().zip(&self.ids.enc) {
            let mut y = conv.forward(&x, side, side, p.data(w), p.data(b), &mut cols);
            Activation::Relu.apply_in_place(&mut y);
            side /= 2;
            if keep {
                cols_all.push(std::mem::take(&mut cols));
                outs.push(y.clone());
            }
            x = y;
        }
        if !keep {
            outs.push(x);
        }
        let flat = outs.last().expect("encoder ran");
        let mut h = vec![T::zero(); self.arch.hidden];
        affine_forward(flat, p.data(self.ids.enc_fc.0), p.data(self.ids.enc_fc.1), Activation::Relu, &mut h);
        let mut mu = vec![T::zero(); self.arch.latent];
        let mut lv = vec![T::zero(); self.arch.latent];
        affine_forward(&h, p.data(self.ids.mu.0), p.data(self.ids.mu.1), Activation::Linear, &mut mu);
        affine_forward(&h, p.data(self.ids.logvar.0), p.data(self.ids.logvar.1), Activation::Linear, &mut lv);
        (cols_all, outs, h, mu, lv)
    }

    fn head(&self, z: &[T]) -> (Vec<T>, Vec<T>) {
        let p = &self.params;
        let mut hh = vec![T::zero(); self.arch.head_hidden];
        affine_forward(z, p.data(self.ids.head1.0), p.data(self.ids.head1.1), Activation::Relu, &mut hh);
        let mut y = vec![T::zero(); TARGET_DIM];
        affine_forward(&hh, p.data(self.ids.head2.0), p.data(self.ids.head2.1), Activation::Sigmoid, &mut y);
        (hh, y)
    }

    fn decode(&self, z: &[T]) -> (Vec<T>, Vec<T>, Vec<Vec<T>>) {
        let p = &self.params;
        let mut d1 = vec![T::zero(); self.arch.hidden];
        affine_forward(z, p.data(self.ids.dec_fc1.0), p.data(self.ids.dec_fc1.1), Activation::Relu, &mut d1);
        let mut d2 = vec![T::zero(); self.arch.flat()];
        affine_forward(&d1, p.data(self.ids.dec_fc2.0), p.data(self.ids.dec_fc2.1), Activation::Relu, &mut d2);
        let mut side = self.arch.bottleneck();
        let mut outs: Vec<Vec<T>> = Vec::with_capacity(4);
        for (i, (d, &(w, b))) in self.arch.deconvs().iter().zip(&self.ids.dec).enumerate() {
            let input = if i == 0 { &d2 } else { &outs[i - 1] };
            let mut y = d.forward(input, side, side, p.data(w), p.data(b));
            let act = if i == 3 { Activation::Sigmoid } else { Activation::Relu };
            act.apply_in_place(&mut y);
            side *= 2;
            outs.push(y);
        }
        (d1, d2, outs)
    }

    fn forward_trace(&self, image: &[T], eps: &[T]) -> Trace<T> {
        let (enc_cols, enc_out, h_enc, mu, logvar) = self.encode(image, true);
        let z: Vec<T> = (0..self.arch.latent)
            .map(|j| sigmoid(mu[j] + (T::of(0.5) * logvar[j]).exp() * eps[j]))
            .collect();
        let (d1, d2, dec_out) = self.decode(&z);
        let (hh, y) = self.head(&z);
        Trace {
            enc_cols,
            enc_out,
            h_enc,
            mu,
            logvar,
            eps: eps.to_vec(),
            z,
            d1,
            d2,
            dec_out,
            hh,
            y,
        }
    }

    fn components(&self, trace: &Trace<T>, image: &[T], target: &[T]) -> LossComponents {
        LossComponents {
            kl: kl_slice(&trace.mu, &trace.logvar).f64(),
            rec: sum_squared_error(trace.reconstruction(), image).f64() * self.arch.rec_factor(),
            pred: sum_squared_error(&trace.y, target).f64(),
        }
    }

    /// Accumulates this sample's share of the batch-mean loss gradient,
    /// where `inv_n` is one over the batch size.
    fn backward(&self, t: &Trace<T>, image: &[T], target: &[T], inv_n: T, g: &mut Gradients<T>) {
        let p = &self.params;
        let two = T::of(2.0);

        // decoder
        let recon = t.reconstruction();
        let rec_scale = T::of(BETA * self.arch.rec_factor()) * inv_n * two;
        let mut dy: Vec<T> = recon.iter().zip(image).map(|(&r, &x)| rec_scale * (r - x)).collect();
        Activation::Sigmoid.backprop_in_place(recon, &mut dy);
        let deconvs = self.arch.deconvs();
        let mut side = self.arch.image / 2;
        for i in (0..4).rev() {
            let (w, b) = self.ids.dec[i];
            let input = if i == 0 { &t.d2 } else { &t.dec_out[i - 1] };
            let (dw, db) = g.pair_mut(w, b);
            let mut dx = deconvs[i]
                .backward(input, side, side, p.data(w), &dy, dw, db, true)
                .expect("input gradient requested");
            Activation::Relu.backprop_in_place(input, &mut dx);
            dy = dx;
            side /= 2;
        }
        let mut dd1 = vec![T::zero(); self.arch.hidden];
        {
            let (w, b) = self.ids.dec_fc2;
            let (dw, db) = g.pair_mut(w, b);
            affine_backward(&t.d1, p.data(w), &dy, dw, db, Some(&mut dd1));
        }
        Activation::Relu.backprop_in_place(&t.d1, &mut dd1);
        let mut dz = vec![T::zero(); self.arch.latent];
        {
            let (w, b) = self.ids.dec_fc1;
            let (dw, db) = g.pair_mut(w, b);
            affine_backward(&t.z, p.data(w), &dd1, dw, db, Some(&mut dz));
        }

        // head
        let pred_scale = inv_n * two;
        let mut dyh: Vec<T> = t.y.iter().zip(target).map(|(&y, &tt)| pred_scale * (y - tt)).collect();
        Activation::Sigmoid.backprop_in_place(&t.y, &mut dyh);
        let mut dhh = vec![T::zero(); self.arch.head_hidden];
        {
            let (w, b) = self.ids.head2;
            let (dw, db) = g.pair_mut(w, b);
            affine_backward(&t.hh, p.data(w), &dyh, dw, db, Some(&mut dhh));
        }
        Activation::Relu.backprop_in_place(&t.hh, &mut dhh);
        let mut dz_head = vec![T::zero(); self.arch.latent];
        {
            let (w, b) = self.ids.head1;
            let (dw, db) = g.pair_mut(w, b);
            affine_backward(&t.z, p.data(w), &dhh, dw, db, Some(&mut dz_head));
        }

        // latent
        let mut dmu = vec![T::zero(); self.arch.latent];
        let mut dlv = vec![T::zero(); self.arch.latent];
        for j in 0..self.arch.latent {
            let dpre = (dz[j] + dz_head[j]) * t.z[j] * (T::one() - t.z[j]);
            dmu[j] = dpre;
            dlv[j] = dpre * t.eps[j] * T::of(0.5) * (T::of(0.5) * t.logvar[j]).exp();
        }
        kl_backward(&t.mu, &t.logvar, T::of(ALPHA) * inv_n, &mut dmu, &mut dlv);
        let mut dh = vec![T::zero(); self.arch.hidden];
        let mut dh2 = vec![T::zero(); self.arch.hidden];
        {
            let (w, b) = self.ids.mu;
            let (dw, db) = g.pair_mut(w, b);
            affine_backward(&t.h_enc, p.data(w), &dmu, dw, db, Some(&mut dh));
        }
        {
            let (w, b) = self.ids.logvar;
            let (dw, db) = g.pair_mut(w, b);
            affine_backward(&t.h_enc, p.data(w), &dlv, dw, db, Some(&mut dh2));
        }
        for (a, b) in dh.iter_mut().zip(&dh2) {
            *a += *b;
        }
        Activation::Relu.backprop_in_place(&t.h_enc, &mut dh);

        // encoder
        let flat = &t.enc_out[3];
        let mut dflat = vec![T::zero(); flat.len()];
        {
            let (w, b) = self.ids.enc_fc;
            let (dw, db) = g.pair_mut(w, b);
            affine_backward(flat, p.data(w), &dh, dw, db, Some(&mut dflat));
        }
        let mut dy = dflat;
        let convs = self.arch.convs();
        for i in (0..4).rev() {
            Activation::Relu.backprop_in_place(&t.enc_out[i], &mut dy);
            let side = self.arch.image >> i;
            let (w, b) = self.ids.enc[i];
            let (dw, db) = g.pair_mut(w, b);
            match convs[i].backward(&t.enc_cols[i], side, side, p.data(w), &dy, dw, db, i > 0) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
    }

    /// Batch-mean loss components and their gradient. `eps[i]` is the noise
    /// for sample `i`.
    pub fn loss_and_grad(
        &self,
        images: &[&[T]],
        targets: &[&[T]],
        eps: &[Vec<T>],
        exec: Exec,
    ) -> (LossComponents, Gradients<T>) {
        let n = images.len();
        let inv_n = T::of(1.0 / n as f64);
        let parts = exec.map_chunks(n, CHUNK, |range| {
            let mut g = Gradients::zeros_like(&self.params);
            let mut c = LossComponents::default();
            for i in range {
                let t = self.forward_trace(images[i], &eps[i]);
                c.add(&self.components(&t, images[i], targets[i]));
                self.backward(&t, images[i], targets[i], inv_n, &mut g);
            }
            (c, g)
        });
        let mut comps = LossComponents::default();
        let mut grads = None::<Gradients<T>>;
        for (c, g) in parts {
            comps.add(&c);
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.add_assign(&g),
            }
        }
        let grads = grads.unwrap_or_else(|| Gradients::zeros_like(&self.params));
        (comps.scaled(1.0 / n.max(1) as f64), grads)
    }

    /// Batch-mean loss components without gradients.
    pub fn evaluate(&self, images: &[&[T]], targets: &[&[T]], eps: &[Vec<T>]) -> LossComponents {
        let mut c = LossComponents::default();
        for i in 0..images.len() {
            let t = self.forward_trace(images[i], &eps[i]);
            c.add(&self.components(&t, images[i], targets[i]));
        }
        c.scaled(1.0 / images.len().max(1) as f64)
    }
}

impl VisionModel<f32> {
    fn check_image(&self, image: &Tensor<f32>) -> Result<()> {
        let s = self.arch.image;
        if image.shape() != [3, s, s] {
            return Err(Error::Shape(format!("expected image [3, {s}, {s}], got {:?}", image.shape())));
        }
        Ok(())
    }

    /// Full forward pass; `eps` is the latent noise (zeros at inference).
    pub fn forward(&self, image: &Tensor<f32>, eps: &Tensor<f32>) -> Result<VisionOutput> {
        self.check_image(image)?;
        if eps.len() != self.arch.latent {
            return Err(Error::Shape(format!("eps has {} entries, latent is {}", eps.len(), self.arch.latent)));
        }
        let t = self.forward_trace(image.data(), eps.data());
        let s = self.arch.image;
        Ok(VisionOutput {
            reconstruction: Tensor::from_vec(&[3, s, s], t.reconstruction().to_vec())?,
            mu: Tensor::from_vec(&[self.arch.latent], t.mu.clone())?,
            logvar: Tensor::from_vec(&[self.arch.latent], t.logvar.clone())?,
            y: t.y.try_into().expect("five outputs"),
        })
    }

    /// Deterministic latent `sigmoid(mu)`.
    pub fn latent(&self, planar: &[f32]) -> Vec<f32> {
        let (_, _, _, mu, _) = self.encode(planar, false);
        mu.into_iter().map(sigmoid).collect()
    }

    pub fn extract_latent(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_image(image)?;
        Tensor::from_vec(&[self.arch.latent], self.latent(image.data()))
    }

    /// Head output at zero noise.
    pub fn predict(&self, planar: &[f32]) -> [f32; TARGET_DIM] {
        let z = self.latent(planar);
        self.head(&z).1.try_into().expect("five outputs")
    }

    pub fn latents(&self, images: &[&RgbImage], exec: Exec) -> Vec<Vec<f32>> {
        exec.map(images, |img| self.latent(&img.to_planar_unit()))
    }

    pub fn predictions(&self, images: &[&RgbImage], exec: Exec) -> Vec<[f32; TARGET_DIM]> {
        exec.map(images, |img| self.predict(&img.to_planar_unit()))
    }

    pub fn save(&self, dir: &Path, meta: &CheckpointMeta) -> Result<()> {
        let mut w = ArtifactWriter::create(dir)?;
        w.put_params("", &self.params)?;
        w.finish(CHECKPOINT_KIND, meta)
    }

    pub fn load(dir: &Path) -> Result<(Self, CheckpointMeta)> {
        let r = ArtifactReader::<CheckpointMeta>::open(dir, CHECKPOINT_KIND)?;
        let meta = r.manifest.meta.clone();
        let mut model = Self::new(meta.arch.clone(), meta.seed)?;
        r.load_params("", &mut model.params)?;
        Ok((model, meta))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub arch: VisionArch,
    pub seed: u64,
    pub epochs: usize,
    /// Caller-defined provenance.
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisionTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Zero the prediction head and keep it frozen.
    #[serde(default)]
    pub freeze_head: bool,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for VisionTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            freeze_head: false,
            exec: Exec::Parallel,
        }
    }
}

/// Minibatch Adam on the composite loss. Returns the model and one
/// [`EpochLoss`] per epoch (means over the epoch's samples, measured with the
/// parameters in effect for each batch).
pub fn train_vision(
    snapshots: &[Snapshot],
    arch: &VisionArch,
    cfg: &VisionTrainConfig,
) -> Result<(VisionModel, Vec<EpochLoss>)> {
    if snapshots.is_empty() {
        return Err(Error::Invalid("no training snapshots".into()));
    }
    let mut model = VisionModel::<f32>::new(arch.clone(), derive_seed(cfg.seed, 0))?;
    if cfg.freeze_head {
        model.zero_head();
    }
    let frozen = model.head_params();
    let images: Vec<Vec<f32>> = snapshots.iter().map(|s| s.image.to_planar_unit()).collect();
    if images.iter().any(|i| i.len() != arch.pixels()) {
        return Err(Error::Shape(format!("snapshots do not match the {}-pixel input", arch.image)));
    }
    let targets: Vec<[f32; TARGET_DIM]> = snapshots.iter().map(|s| s.truth.to_target()).collect();
    let mut adam = AdamState::new(&model.params, cfg.adam.clone());
    let mut rng = Rng::new(derive_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..snapshots.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut sum = LossComponents::default();
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let imgs: Vec<&[f32]> = batch.iter().map(|&i| images[i].as_slice()).collect();
            let tgts: Vec<&[f32]> = batch.iter().map(|&i| targets[i].as_slice()).collect();
            let eps: Vec<Vec<f32>> = batch
                .iter()
                .map(|_| (0..arch.latent).map(|_| rng.normal() as f32).collect())
                .collect();
            let (comps, mut grads) = model.loss_and_grad(&imgs, &tgts, &eps, cfg.exec);
            if !comps.total().is_finite() || !grads.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite loss or gradient (kl {}, rec {}, pred {})", comps.kl, comps.rec, comps.pred),
                });
            }
            if cfg.freeze_head {
                for id in frozen {
                    grads.zero(id);
                }
            }
            model.params.set_grads(&grads)?;
            adam.step(&mut model.params)?;
            sum.add(&comps.scaled(batch.len() as f64));
        }
        let mean = sum.scaled(1.0 / snapshots.len() as f64);
        history.push(EpochLoss {
            epoch,
            total: mean.total(),
            kl: mean.kl,
            rec: mean.rec,
            pred: mean.pred,
        });
    }
    model.params.clear_grads();
    Ok((model, history))
}

pub fn write_history_csv(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,loss,kl,rec,pred")?;
    for h in history {
        writeln!(out, "{},{},{},{},{}", h.epoch, h.total, h.kl, h.rec, h.pred)?;
    }
    out.flush()?;
    Ok(())
}
