//! A tiny convolutional classifier with hand-written backpropagation.
//!
//! Layout: 3×3 conv (8 channels, zero "same" padding) → ReLU → 2×2 max-pool
//! → 3×3 conv (16 channels) → ReLU → global average pool (the latent) →
//! affine head.

mod train;

use ndarray::{Array3, ArrayView3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::attack::GradientModel;
use crate::cluster::{mahalanobis_with_gradient, ClusterDistribution, LatentVector};
use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::tensorio::{ArtifactBundle, NdArray};

pub use train::{
    train_baseline, train_robust, EpochMetrics, RobustTrainConfig, TrainConfig, TrainOutcome,
    MOMENTUM,
};

pub const CONV1_CHANNELS: usize = 8;
pub const CONV2_CHANNELS: usize = 16;
/// Dimension of the latent vector.
pub const LATENT_DIM: usize = CONV2_CHANNELS;
const K: usize = 3;
pub const NETWORK_KIND: &str = "network";

/// All weights of the network in one flat buffer.
///
/// Order: conv1 weights `[8][C_in][3][3]`, conv1 biases, conv2 weights
/// `[16][8][3][3]`, conv2 biases, head weights `[classes][16]`, head biases.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    in_channels: usize,
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Offsets {
    c1w: usize,
    c1b: usize,
    c2w: usize,
    c2b: usize,
    fw: usize,
    fb: usize,
    end: usize,
}

fn offsets(cin: usize, classes: usize) -> Offsets {
    let c1w = 0;
    let c1b = c1w + CONV1_CHANNELS * cin * K * K;
    let c2w = c1b + CONV1_CHANNELS;
    let c2b = c2w + CONV2_CHANNELS * CONV1_CHANNELS * K * K;
    let fw = c2b + CONV2_CHANNELS;
    let fb = fw + classes * LATENT_DIM;
    Offsets {
        c1w,
        c1b,
        c2w,
        c2b,
        fw,
        fb,
        end: fb + classes,
    }
}

impl NetworkParams {
    pub fn zeros(in_channels: usize, height: usize, width: usize, classes: usize) -> Result<Self> {
        if !(in_channels == 1 || in_channels == 3) {
            return invalid(format!("unsupported channel count {in_channels}"));
        }
        if height < 2 || width < 2 {
            return invalid(format!("input {height}x{width} is too small to pool"));
        }
        if classes < 2 {
            return invalid("need at least 2 classes");
        }
        let len = offsets(in_channels, classes).end;
        Ok(Self {
            in_channels,
            height,
            width,
            classes,
            data: vec![0.0; len],
        })
    }

    /// He-normal weights and zero biases.
    pub fn init<R: Rng>(
        in_channels: usize,
        height: usize,
        width: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(in_channels, height, width, classes)?;
        let o = p.offsets();
        let fill = |slice: &mut [f64], fan_in: usize, rng: &mut R| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for v in slice {
                *v = normal.sample(rng);
            }
        };
        fill(&mut p.data[o.c1w..o.c1b], in_channels * K * K, rng);
        fill(&mut p.data[o.c2w..o.c2b], CONV1_CHANNELS * K * K, rng);
        fill(&mut p.data[o.fw..o.fb], 2 * LATENT_DIM, rng);
        Ok(p)
    }

    /// Same architecture, all values zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            data: vec![0.0; self.data.len()],
            ..self.clone()
        }
    }

    fn offsets(&self) -> Offsets {
        offsets(self.in_channels, self.classes)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.in_channels)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Named views of the parameter groups, in storage order.
    pub fn groups(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let o = self.offsets();
        vec![
            (
                "conv1.weight",
                vec![CONV1_CHANNELS, self.in_channels, K, K],
                &self.data[o.c1w..o.c1b],
            ),
            ("conv1.bias", vec![CONV1_CHANNELS], &self.data[o.c1b..o.c2w]),
            (
                "conv2.weight",
                vec![CONV2_CHANNELS, CONV1_CHANNELS, K, K],
                &self.data[o.c2w..o.c2b],
            ),
            ("conv2.bias", vec![CONV2_CHANNELS], &self.data[o.c2b..o.fw]),
            ("fc.weight", vec![self.classes, LATENT_DIM], &self.data[o.fw..o.fb]),
            ("fc.bias", vec![self.classes], &self.data[o.fb..o.end]),
        ]
    }

    pub fn fc_weights_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o.fw..o.fb]
    }

    fn check_input(&self, x: &ArrayView3<f64>) -> Result<()> {
        let shape = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if shape != self.input_shape() {
            return Err(shape_mismatch(
                format!("{:?}", self.input_shape()),
                format!("{shape:?}"),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView3<f64>) -> Result<Forward> {
        self.check_input(&x)?;
        let (h, w, cin) = self.input_shape();
        let o = self.offsets();
        let mut input = vec![0.0; cin * h * w];
        for ((y, xx, c), &v) in x.indexed_iter() {
            input[(c * h + y) * w + xx] = v;
        }
        let mut act1 = conv_same(
            &input,
            cin,
            h,
            w,
            &self.data[o.c1w..o.c1b],
            &self.data[o.c1b..o.c2w],
            CONV1_CHANNELS,
        );
        relu(&mut act1);
        let (ph, pw) = (h / 2, w / 2);
        let mut pooled = vec![0.0; CONV1_CHANNELS * ph * pw];
        let mut argmax = vec![0usize; pooled.len()];
        for c in 0..CONV1_CHANNELS {
            for py in 0..ph {
                for px in 0..pw {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = (c * h + 2 * py + dy) * w + 2 * px + dx;
                            if act1[idx] > best {
                                best = act1[idx];
                                at = idx;
                            }
                        }
                    }
                    let out = (c * ph + py) * pw + px;
                    pooled[out] = best;
                    argmax[out] = at;
                }
            }
        }
        let mut act2 = conv_same(
            &pooled,
            CONV1_CHANNELS,
            ph,
            pw,
            &self.data[o.c2w..o.c2b],
            &self.data[o.c2b..o.fw],
            CONV2_CHANNELS,
        );
        relu(&mut act2);
        let area = (ph * pw) as f64;
        let latent: Vec<f64> = act2
            .chunks(ph * pw)
            .map(|plane| plane.iter().sum::<f64>() / area)
            .collect();
        let fw = &self.data[o.fw..o.fb];
        let fb = &self.data[o.fb..o.end];
        let logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                fb[c]
                    + fw[c * LATENT_DIM..(c + 1) * LATENT_DIM]
                        .iter()
                        .zip(&latent)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        Ok(Forward {
            logits,
            latent: LatentVector::new(latent),
            cache: Cache {
                input,
                act1,
                pooled,
                argmax,
                act2,
            },
        })
    }

    pub fn latent(&self, x: ArrayView3<f64>) -> Result<LatentVector> {
        Ok(self.forward(x)?.latent)
    }

    pub fn predict(&self, x: ArrayView3<f64>) -> Result<usize> {
        Ok(argmax(&self.forward(x)?.logits))
    }

    /// Gradients of one sample's loss `CE + md_weight · MD` with respect to
    /// the parameters, and optionally the input. No weight decay.
    pub fn sample_gradients(
        &self,
        x: ArrayView3<f64>,
        y: usize,
        md: Option<(&ClusterDistribution, f64)>,
        want_input: bool,
    ) -> Result<SampleGradients> {
        if y >= self.classes {
            return invalid(format!("label {y} for {} classes", self.classes));
        }
        let fwd = self.forward(x)?;
        let probs = softmax(&fwd.logits);
        let ce = cross_entropy(&fwd.logits, y);
        let mut dlogits = probs;
        dlogits[y] -= 1.0;
        let mut dlatent = vec![0.0; LATENT_DIM];
        let mut md_value = None;
        if let Some((dist, weight)) = md {
            let (value, grad) = mahalanobis_with_gradient(&fwd.latent, dist)?;
            md_value = Some(value);
            for (d, g) in dlatent.iter_mut().zip(grad) {
                *d += weight * g;
            }
        }
        let (params, input) = self.backward(&fwd, &dlogits, &dlatent, want_input);
        Ok(SampleGradients {
            cross_entropy: ce,
            mahalanobis: md_value,
            correct: argmax(&fwd.logits) == y,
            params,
            input,
        })
    }

    fn backward(
        &self,
        fwd: &Forward,
        dlogits: &[f64],
        dlatent_extra: &[f64],
        want_input: bool,
    ) -> (NetworkParams, Option<Array3<f64>>) {
        let (h, w, cin) = self.input_shape();
        let (ph, pw) = (h / 2, w / 2);
        let o = self.offsets();
        let cache = &fwd.cache;
        let mut grad = self.zeros_like();
        let g = &mut grad.data;

        let fw = &self.data[o.fw..o.fb];
        let mut dlatent = dlatent_extra.to_vec();
        for (c, &dl) in dlogits.iter().enumerate() {
            g[o.fb + c] = dl;
            for k in 0..LATENT_DIM {
                g[o.fw + c * LATENT_DIM + k] = dl * fwd.latent[k];
                dlatent[k] += dl * fw[c * LATENT_DIM + k];
            }
        }

        let area = (ph * pw) as f64;
        let mut dact2 = vec![0.0; cache.act2.len()];
        for c in 0..CONV2_CHANNELS {
            let share = dlatent[c] / area;
            for i in c * ph * pw..(c + 1) * ph * pw {
                if cache.act2[i] > 0.0 {
                    dact2[i] = share;
                }
            }
        }
        let dpooled = conv_same_backward(
            &cache.pooled,
            CONV1_CHANNELS,
            ph,
            pw,
            &self.data[o.c2w..o.c2b],
            &dact2,
            CONV2_CHANNELS,
            &mut g[o.c2w..o.fw],
            true,
        )
        .expect("pooled gradient requested");

        let mut dact1 = vec![0.0; cache.act1.len()];
        for (i, &src) in cache.argmax.iter().enumerate() {
            if cache.act1[src] > 0.0 {
                dact1[src] += dpooled[i];
            }
        }
        let dinput = conv_same_backward(
            &cache.input,
            cin,
            h,
            w,
            &self.data[o.c1w..o.c1b],
            &dact1,
            CONV1_CHANNELS,
            &mut g[o.c1w..o.c2w],
            want_input,
        );
        let input = dinput.map(|d| Array3::from_shape_fn((h, w, cin), |(y, x, c)| d[(c * h + y) * w + x]));
        (grad, input)
    }

    /// Serializes the weights as named arrays.
    pub fn to_bundle(&self) -> Result<ArtifactBundle> {
        let mut b = ArtifactBundle::new();
        b.set_meta("kind", NETWORK_KIND)
            .set_meta("in_channels", self.in_channels as u64)
            .set_meta("height", self.height as u64)
            .set_meta("width", self.width as u64)
            .set_meta("classes", self.classes as u64)
            .set_meta("latent_dim", LATENT_DIM as u64);
        for (name, shape, values) in self.groups() {
            b.insert(name, NdArray::f64(shape, values.to_vec())?);
        }
        Ok(b)
    }

    pub fn from_bundle(b: &ArtifactBundle) -> Result<Self> {
        b.expect_kind(NETWORK_KIND)?;
        let latent = b.meta_usize("latent_dim")?;
        if latent != LATENT_DIM {
            return Err(shape_mismatch(format!("latent_dim {LATENT_DIM}"), latent));
        }
        let mut p = Self::zeros(
            b.meta_usize("in_channels")?,
            b.meta_usize("height")?,
            b.meta_usize("width")?,
            b.meta_usize("classes")?,
        )?;
        let mut data = Vec::with_capacity(p.data.len());
        for (name, shape, _) in p.groups() {
            let (found, values) = b.f64_array(name)?;
            if found != shape.as_slice() {
                return Err(shape_mismatch(format!("{name} {shape:?}"), format!("{found:?}")));
            }
            data.extend_from_slice(values);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite network weight".into()));
        }
        p.data = data;
        Ok(p)
    }
}

/// Output of [`NetworkParams::forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub latent: LatentVector,
    cache: Cache,
}

#[derive(Debug, Clone)]
struct Cache {
    input: Vec<f64>,
    act1: Vec<f64>,
    pooled: Vec<f64>,
    argmax: Vec<usize>,
    act2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SampleGradients {
    pub cross_entropy: f64,
    pub mahalanobis: Option<f64>,
    pub correct: bool,
    pub params: NetworkParams,
    pub input: Option<Array3<f64>>,
}

/// Weighted Mahalanobis penalty on the latents of a batch.
#[derive(Debug, Clone, Copy)]
pub struct MdTerm<'a> {
    /// Cluster of each batch sample.
    pub clusters: &'a [Option<&'a ClusterDistribution>],
    pub alpha: f64,
}

/// Batch loss and parameter gradients.
///
/// `loss = mean CE + weight_decay · ‖θ‖² + α · mean MD`. The penalty is left
/// out entirely when `α = 0`.
pub fn loss_and_grads(
    params: &NetworkParams,
    batch: &[ArrayView3<f64>],
    labels: &[usize],
    weight_decay: f64,
    md_term: Option<MdTerm<'_>>,
) -> Result<(f64, NetworkParams)> {
    let (loss, grad, _) = batch_gradients(params, batch, labels, weight_decay, md_term)?;
    Ok((loss, grad))
}

pub(crate) struct BatchStats {
    pub correct: usize,
    pub ce_sum: f64,
    pub md_sum: Option<f64>,
}

pub(crate) fn batch_gradients(
    params: &NetworkParams,
    batch: &[ArrayView3<f64>],
    labels: &[usize],
    weight_decay: f64,
    md_term: Option<MdTerm<'_>>,
) -> Result<(f64, NetworkParams, BatchStats)> {
    use rayon::prelude::*;
    if batch.is_empty() {
        return invalid("empty batch");
    }
    if batch.len() != labels.len() {
        return Err(shape_mismatch(format!("{} labels", batch.len()), labels.len()));
    }
    let md_term = md_term.filter(|m| m.alpha != 0.0);
    if let Some(m) = &md_term {
        if m.clusters.len() != batch.len() {
            return Err(shape_mismatch(format!("{} cluster entries", batch.len()), m.clusters.len()));
        }
        if let Some(i) = m.clusters.iter().position(|c| c.is_none()) {
            return Err(Error::MissingCluster(i));
        }
    }
    let per_sample: Vec<SampleGradients> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let md = md_term.map(|m| (m.clusters[i].expect("checked above"), m.alpha));
            params.sample_gradients(batch[i].view(), labels[i], md, false)
        })
        .collect::<Result<_>>()?;

    // reduce in index order so the result does not depend on thread count
    let n = batch.len() as f64;
    let mut grad = params.zeros_like();
    let mut stats = BatchStats {
        correct: 0,
        ce_sum: 0.0,
        md_sum: md_term.map(|_| 0.0),
    };
    for s in &per_sample {
        for (g, v) in grad.data.iter_mut().zip(&s.params.data) {
            *g += v;
        }
        stats.ce_sum += s.cross_entropy;
        stats.correct += usize::from(s.correct);
        if let (Some(sum), Some(md)) = (stats.md_sum.as_mut(), s.mahalanobis) {
            *sum += md;
        }
    }
    for (g, &p) in grad.data.iter_mut().zip(&params.data) {
        *g = *g / n + 2.0 * weight_decay * p;
    }
    let mut loss = stats.ce_sum / n + weight_decay * params.squared_norm();
    if let (Some(m), Some(sum)) = (md_term, stats.md_sum) {
        loss += m.alpha * sum / n;
    }
    Ok((loss, grad, stats))
}

/// Gradient of the cross-entropy with respect to the input.
pub fn input_gradient(params: &NetworkParams, x: ArrayView3<f64>, y: usize) -> Result<Array3<f64>> {
    Ok(params
        .sample_gradients(x, y, None, true)?
        .input
        .expect("input gradient requested"))
}

impl GradientModel for NetworkParams {
    fn loss_and_input_gradient(&self, x: ArrayView3<f64>, y: usize) -> Result<(f64, Array3<f64>)> {
        let s = self.sample_gradients(x, y, None, true)?;
        Ok((s.cross_entropy, s.input.expect("input gradient requested")))
    }

    fn loss(&self, x: ArrayView3<f64>, y: usize) -> Result<f64> {
        Ok(cross_entropy(&self.forward(x)?.logits, y))
    }

    fn predict(&self, x: ArrayView3<f64>) -> Result<usize> {
        NetworkParams::predict(self, x)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[y]`, computed stably.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    (lse - logits[y]).max(0.0)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

// Rows of `y` in 0..h whose tap `y + ky - 1` stays inside the image.
fn tap_range(ky: usize, h: usize) -> std::ops::Range<usize> {
    let lo = if ky == 0 { 1 } else { 0 };
    let hi = if ky == 2 { h - 1 } else { h };
    lo..hi
}

fn conv_same(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    cout: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; cout * h * w];
    for co in 0..cout {
        let plane = &mut out[co * h * w..(co + 1) * h * w];
        plane.fill(bias[co]);
        for ci in 0..cin {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..K {
                for kx in 0..K {
                    let wv = weights[((co * cin + ci) * K + ky) * K + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let xs = tap_range(kx, w);
                    for y in tap_range(ky, h) {
                        let sy = y + ky - 1;
                        let dst = &mut plane[y * w + xs.start..y * w + xs.end];
                        let s = &src[sy * w + xs.start + kx - 1..sy * w + xs.end + kx - 1];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients into `grads` (weights then biases)
/// and returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
fn conv_same_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    dout: &[f64],
    cout: usize,
    grads: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let nw = cout * cin * K * K;
    let mut din = want_input.then(|| vec![0.0; cin * h * w]);
    for co in 0..cout {
        let dplane = &dout[co * h * w..(co + 1) * h * w];
        grads[nw + co] += dplane.iter().sum::<f64>();
        for ci in 0..cin {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..K {
                for kx in 0..K {
                    let widx = ((co * cin + ci) * K + ky) * K + kx;
                    let xs = tap_range(kx, w);
                    let mut acc = 0.0;
                    for y in tap_range(ky, h) {
                        let sy = y + ky - 1;
                        let d = &dplane[y * w + xs.start..y * w + xs.end];
                        let s = &src[sy * w + xs.start + kx - 1..sy * w + xs.end + kx - 1];
                        acc += d.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grads[widx] += acc;
                    if let Some(din) = din.as_mut() {
                        let wv = weights[widx];
                        let dst = &mut din[ci * h * w..(ci + 1) * h * w];
                        for y in tap_range(ky, h) {
                            let sy = y + ky - 1;
                            for x in xs.clone() {
                                dst[sy * w + x + kx - 1] += wv * dplane[y * w + x];
                            }
                        }
                    }
                }
            }
        }
    }
    din
}
