//! Prior refinement: the argmax decision rule and a trainable per-pixel model.
//!
//! The trainable refiner maps, at every pixel, the prior channels, the three
//! color channels and a constant bias through a linear layer followed by a
//! per-channel sigmoid. It is trained with stochastic gradient descent on the
//! per-pixel L1 distance between its output and the one-hot ground truth
//! (parts plus background), one image per update.
//!
//! Training starts from [`RefinerModel::prior_identity`], which scores each
//! class by its own prior channel. From all-zero weights every output starts
//! at 0.5, the rare part channels are driven towards 0, and the vanishing
//! sigmoid slope keeps them there.
//!
//! # Model file
//!
//! Little-endian binary:
//!
//! | field            | type          |
//! |------------------|---------------|
//! | magic `PRFN`     | 4 bytes       |
//! | version (1)      | u8            |
//! | classes          | u32           |
//! | features         | u32           |
//! | working width    | u32           |
//! | working height   | u32           |
//! | epochs           | u32           |
//! | seed             | u64           |
//! | learning rate    | f64           |
//! | initial gain     | f64           |
//! | initial loss     | f64           |
//! | final loss       | f64           |
//! | weights          | classes x features f64, row-major by class |

use std::io::{Read, Write};
use std::path::Path;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mask::{LabelMap, PartSegmentation};
use crate::prior::{argmax_channels, PartPrior};

const MAGIC: &[u8; 4] = b"PRFN";
const VERSION: u8 = 1;

/// Color channels plus bias appended to the prior channels.
pub const EXTRA_FEATURES: usize = 4;

pub const DEFAULT_EPOCHS: u32 = 20;
pub const DEFAULT_LEARNING_RATE: f64 = 32.0;
pub const DEFAULT_INIT_GAIN: f64 = 3.0;
pub const DEFAULT_WORKING_SIZE: (u32, u32) = (64, 64);

/// Turns an image and its prior into a refined prior and label map.
pub trait Refiner {
    fn refine(&self, image: &RgbImage, prior: &PartPrior) -> Result<(PartPrior, LabelMap)>;
}

/// Per-pixel argmax of a prior that carries a background channel.
pub fn refine_argmax(prior: &PartPrior) -> Result<LabelMap> {
    if !prior.has_background() {
        return Err(Error::MissingBackground);
    }
    Ok(argmax_channels(prior.channels(), prior.width(), prior.height()))
}

/// The prior-only refiner: returns the prior unchanged with its argmax.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArgmaxRefiner;

impl Refiner for ArgmaxRefiner {
    fn refine(&self, _image: &RgbImage, prior: &PartPrior) -> Result<(PartPrior, LabelMap)> {
        Ok((prior.clone(), refine_argmax(prior)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub epochs: u32,
    pub learning_rate: f64,
    pub init_gain: f64,
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub working_size: (u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinerModel {
    classes: usize,
    features: usize,
    weights: Vec<f64>,
    meta: TrainingMeta,
}

/// A set of pixels with features and targets, row-major per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBatch {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    pub feature_count: usize,
    pub class_count: usize,
}

impl PixelBatch {
    pub fn len(&self) -> usize {
        self.targets.len() / self.class_count
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Features for every pixel of `image` + `prior`; targets are left empty.
    pub fn from_inputs(image: &RgbImage, prior: &PartPrior) -> Result<Self> {
        if image.dimensions() != prior.dims() {
            return Err(Error::ShapeMismatch(format!(
                "image is {:?}, prior is {:?}",
                image.dimensions(),
                prior.dims()
            )));
        }
        let c = prior.channel_count();
        let f = c + EXTRA_FEATURES;
        let n = prior.pixel_count();
        let mut features = Vec::with_capacity(n * f);
        for (i, px) in image.pixels().enumerate() {
            for ch in prior.channels() {
                features.push(f64::from(ch[i]));
            }
            for k in 0..3 {
                features.push(f64::from(px.0[k]) / 255.0);
            }
            features.push(1.0);
        }
        Ok(PixelBatch {
            features,
            targets: Vec::new(),
            feature_count: f,
            class_count: c,
        })
    }

    /// Features plus one-hot targets: part masks, then background where no
    /// part is set.
    pub fn from_sample(sample: &TrainingSample) -> Result<Self> {
        let mut batch = Self::from_inputs(&sample.image, &sample.prior)?;
        let truth = &sample.truth;
        let n = sample.prior.pixel_count();
        let mut targets = Vec::with_capacity(n * batch.class_count);
        for i in 0..n {
            let mut any = false;
            for m in truth.masks() {
                let v = m.values()[i];
                any |= v != 0;
                targets.push(f64::from(v));
            }
            targets.push(if any { 0.0 } else { 1.0 });
        }
        batch.targets = targets;
        Ok(batch)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub image: RgbImage,
    /// Must carry a background channel, with one channel per ground-truth part before it.
    pub prior: PartPrior,
    pub truth: PartSegmentation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    /// Gain of the starting model, see [`RefinerModel::prior_identity`].
    pub init_gain: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            init_gain: DEFAULT_INIT_GAIN,
            seed: 0,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl RefinerModel {
    fn with_weights(classes: usize, weights: Vec<f64>) -> Self {
        RefinerModel {
            classes,
            features: classes + EXTRA_FEATURES,
            weights,
            meta: TrainingMeta {
                epochs: 0,
                learning_rate: 0.0,
                init_gain: 0.0,
                seed: 0,
                initial_loss: f64::NAN,
                final_loss: f64::NAN,
                working_size: DEFAULT_WORKING_SIZE,
            },
        }
    }

    pub fn zeros(classes: usize) -> Self {
        Self::with_weights(classes, vec![0.0; classes * (classes + EXTRA_FEATURES)])
    }

    /// Unit weight from each prior channel to its own output, zero elsewhere.
    pub fn identity(classes: usize) -> Self {
        let mut m = Self::zeros(classes);
        for c in 0..classes {
            m.weights[c * m.features + c] = 1.0;
        }
        m
    }

    /// Logit `gain * (2 p - 1)` for class `c` from its prior channel value
    /// `p`; the argmax of its output equals the argmax of the prior.
    pub fn prior_identity(classes: usize, gain: f64) -> Self {
        let mut m = Self::zeros(classes);
        let f = m.features;
        for c in 0..classes {
            m.weights[c * f + c] = 2.0 * gain;
            m.weights[c * f + f - 1] = -gain;
        }
        m
    }

    pub fn from_weights(classes: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != classes * (classes + EXTRA_FEATURES) || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {classes} classes",
                weights.len()
            )));
        }
        Ok(Self::with_weights(classes, weights))
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_count(&self) -> usize {
        self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn set_working_size(&mut self, size: (u32, u32)) {
        self.meta.working_size = size;
    }

    fn check_batch(&self, batch: &PixelBatch) -> Result<()> {
        if batch.feature_count != self.features || batch.class_count != self.classes {
            return Err(Error::ShapeMismatch(format!(
                "batch has {} features / {} classes, model expects {} / {}",
                batch.feature_count, batch.class_count, self.features, self.classes
            )));
        }
        Ok(())
    }

    #[inline]
    fn score(&self, c: usize, x: &[f64]) -> f64 {
        let w = &self.weights[c * self.features..(c + 1) * self.features];
        sigmoid(w.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    /// Mean over pixels of the L1 distance between outputs and targets.
    pub fn batch_loss(&self, batch: &PixelBatch) -> Result<f64> {
        self.check_batch(batch)?;
        let mut total = 0.0;
        for (x, y) in batch
            .features
            .chunks_exact(self.features)
            .zip(batch.targets.chunks_exact(self.classes))
        {
            for c in 0..self.classes {
                total += (self.score(c, x) - y[c]).abs();
            }
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Gradient of [`batch_loss`](Self::batch_loss) with respect to the
    /// weights. The L1 subgradient at zero residual is taken as 0.
    pub fn batch_gradient(&self, batch: &PixelBatch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let mut grad = vec![0.0; self.weights.len()];
        self.accumulate_gradient(batch, &mut grad);
        let inv = 1.0 / batch.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok(grad)
    }

    fn accumulate_gradient(&self, batch: &PixelBatch, grad: &mut [f64]) {
        let f = self.features;
        for (x, y) in batch.features.chunks_exact(f).zip(batch.targets.chunks_exact(self.classes)) {
            for c in 0..self.classes {
                let o = self.score(c, x);
                let r = o - y[c];
                let sign = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let d = sign * o * (1.0 - o);
                if d != 0.0 {
                    for (g, xi) in grad[c * f..(c + 1) * f].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes).expect("writing to memory");
        std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::read_from(&bytes[..], path)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        let m = &self.meta;
        for v in [
            self.classes as u32,
            self.features as u32,
            m.working_size.0,
            m.working_size.1,
            m.epochs,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&m.seed.to_le_bytes())?;
        for v in [m.learning_rate, m.init_gain, m.initial_loss, m.final_loss] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.weights {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read, path: &Path) -> Result<Self> {
        let bad = |message: &str| Error::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let mut head = [0u8; 5 + 5 * 4 + 8 + 4 * 8];
        r.read_exact(&mut head).map_err(|_| bad("truncated model header"))?;
        if &head[0..4] != MAGIC {
            return Err(bad("not a refiner model"));
        }
        if head[4] != VERSION {
            return Err(bad("unsupported refiner model version"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().expect("8 bytes"));
        let classes = u32_at(5) as usize;
        let features = u32_at(9) as usize;
        if features != classes + EXTRA_FEATURES || classes == 0 {
            return Err(bad("inconsistent model dimensions"));
        }
        let meta = TrainingMeta {
            working_size: (u32_at(13), u32_at(17)),
            epochs: u32_at(21),
            seed: u64::from_le_bytes(head[25..33].try_into().expect("8 bytes")),
            learning_rate: f64_at(33),
            init_gain: f64_at(41),
            initial_loss: f64_at(49),
            final_loss: f64_at(57),
        };
        let mut raw = vec![0u8; classes * features * 8];
        r.read_exact(&mut raw).map_err(|_| bad("truncated model weights"))?;
        let weights = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let mut model = Self::from_weights(classes, weights).map_err(|e| bad(&e.to_string()))?;
        model.meta = meta;
        Ok(model)
    }
}

/// Trains a model by SGD from the prior-identity start. Deterministic for a given sample list and seed.
pub fn train_refiner(samples: &[TrainingSample], config: &TrainingConfig) -> Result<RefinerModel> {
    let first = samples.first().ok_or(Error::EmptySampleSet)?;
    let classes = first.prior.channel_count();
    for (i, s) in samples.iter().enumerate() {
        if !s.prior.has_background() {
            return Err(Error::MissingBackground);
        }
        if s.prior.channel_count() != classes || s.truth.part_count() + 1 != classes {
            return Err(Error::ShapeMismatch(format!(
                "sample {i}: prior has {} channels, truth has {} parts (expected {} channels)",
                s.prior.channel_count(),
                s.truth.part_count(),
                classes
            )));
        }
        if s.truth.dims() != s.prior.dims() || s.image.dimensions() != s.prior.dims() {
            return Err(Error::ShapeMismatch(format!("sample {i}: image, prior and truth sizes differ")));
        }
    }
    let batches = samples
        .iter()
        .map(PixelBatch::from_sample)
        .collect::<Result<Vec<_>>>()?;
    if !config.init_gain.is_finite() || !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "learning rate {} and gain {} must be finite, the rate positive",
            config.learning_rate, config.init_gain
        )));
    }
    let mut model = RefinerModel::prior_identity(classes, config.init_gain);
    model.meta.working_size = first.prior.dims();
    let dataset_loss = |m: &RefinerModel| -> Result<f64> {
        let mut total = 0.0;
        let mut pixels = 0usize;
        for b in &batches {
            total += m.batch_loss(b)? * b.len() as f64;
            pixels += b.len();
        }
        Ok(total / pixels.max(1) as f64)
    };
    let initial_loss = dataset_loss(&model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..batches.len()).collect();
    let mut grad = vec![0.0; model.weights.len()];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let b = &batches[i];
            grad.iter_mut().for_each(|g| *g = 0.0);
            model.accumulate_gradient(b, &mut grad);
            let step = config.learning_rate / b.len().max(1) as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= step * g;
            }
        }
    }
    if model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidConfig("training diverged; lower the learning rate".into()));
    }
    model.meta = TrainingMeta {
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        init_gain: config.init_gain,
        seed: config.seed,
        initial_loss,
        final_loss: dataset_loss(&model)?,
        working_size: model.meta.working_size,
    };
    Ok(model)
}

/// Runs the model at every pixel; the refined prior holds the sigmoid scores.
pub fn apply_refiner(model: &RefinerModel, image: &RgbImage, prior: &PartPrior) -> Result<(PartPrior, LabelMap)> {
    if prior.channel_count() != model.classes {
        return Err(Error::ShapeMismatch(format!(
            "prior has {} channels, model expects {}",
            prior.channel_count(),
            model.classes
        )));
    }
    if !prior.has_background() {
        return Err(Error::MissingBackground);
    }
    let batch = PixelBatch::from_inputs(image, prior)?;
    let n = prior.pixel_count();
    let mut channels = vec![vec![0f32; n]; model.classes];
    for (i, x) in batch.features.chunks_exact(model.features).enumerate() {
        for (c, plane) in channels.iter_mut().enumerate() {
            plane[i] = (model.score(c, x) as f32).clamp(0.0, 1.0);
        }
    }
    let refined = PartPrior::from_channels(
        prior.width(),
        prior.height(),
        prior.channel_names().to_vec(),
        channels,
        true,
    )?;
    let labels = refine_argmax(&refined)?;
    Ok((refined, labels))
}

impl Refiner for RefinerModel {
    fn refine(&self, image: &RgbImage, prior: &PartPrior) -> Result<(PartPrior, LabelMap)> {
        apply_refiner(self, image, prior)
    }
}
