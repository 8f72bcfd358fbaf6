//! Gradient saliency: Vanilla Gradients and Integrated Gradients.
//!
//! Both produce an [`AttributionMap`]: the signed per-channel attribution in
//! `HWC` order plus an `H×W` map of non-negative scores obtained by taking
//! absolute values and reducing over channels.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::checkpoint::Container;
use crate::data::{chw_to_hwc, hwc64_to_nchw, ImageDims, LabeledDataset};
use crate::error::{Error, Result};
use crate::imageio;
use crate::model::ImageModel;
use crate::par;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Vanilla gradients.
    Vg,
    /// Integrated gradients.
    Ig,
    /// Uniform random scores; a control ranking.
    Random,
    /// Known class-determining region; a control ranking.
    Oracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vg => "vg",
            Method::Ig => "ig",
            Method::Random => "random",
            Method::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelReduction {
    MaxAbs,
    SumAbs,
}

/// Which scalar the saliency gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScore {
    /// Pre-softmax logit of the target class.
    Logit,
    /// Softmax probability of the target class.
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Zero,
    DatasetMean,
    Constant,
}

/// Reference image for integrated gradients, `HWC`.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub kind: BaselineKind,
    image: Vec<f64>,
}

impl Baseline {
    pub fn zero(dims: ImageDims) -> Self {
        Baseline {
            kind: BaselineKind::Zero,
            image: vec![0.0; dims.len()],
        }
    }

    pub fn constant(dims: ImageDims, value: f64) -> Self {
        Baseline {
            kind: BaselineKind::Constant,
            image: vec![value; dims.len()],
        }
    }

    /// Per-channel mean colour of `data`, broadcast over the image.
    pub fn dataset_mean(data: &LabeledDataset) -> Self {
        let means = data.channel_means();
        let dims = data.dims();
        Baseline {
            kind: BaselineKind::DatasetMean,
            image: (0..dims.len()).map(|i| means[i % dims.channels]).collect(),
        }
    }

    pub fn from_image(dims: ImageDims, image: Vec<f64>) -> Result<Self> {
        if image.len() != dims.len() {
            return Err(Error::ShapeMismatch {
                op: "baseline",
                left: vec![dims.height, dims.width, dims.channels],
                right: vec![image.len()],
            });
        }
        Ok(Baseline {
            kind: BaselineKind::Constant,
            image,
        })
    }

    pub fn image(&self) -> &[f64] {
        &self.image
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributionOptions {
    pub target: TargetScore,
    pub reduction: ChannelReduction,
}

impl Default for AttributionOptions {
    fn default() -> Self {
        AttributionOptions {
            target: TargetScore::Logit,
            reduction: ChannelReduction::MaxAbs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    /// Non-negative `H×W` scores.
    pub values: Vec<f64>,
    /// Signed attribution before channel reduction, `HWC`.
    pub signed: Vec<f64>,
    pub dims: ImageDims,
    pub target_class: usize,
    pub method: Method,
    pub reduction: ChannelReduction,
}

impl AttributionMap {
    pub fn from_signed(
        signed: Vec<f64>,
        dims: ImageDims,
        target_class: usize,
        method: Method,
        reduction: ChannelReduction,
    ) -> Self {
        let values = reduce_channels(&signed, dims, reduction);
        AttributionMap {
            values,
            signed,
            dims,
            target_class,
            method,
            reduction,
        }
    }

    /// Control map of i.i.d. uniform scores.
    pub fn random(dims: ImageDims, target_class: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..dims.pixels()).map(|_| rng.random::<f64>()).collect();
        AttributionMap {
            signed: values
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, dims.channels))
                .collect(),
            values,
            dims,
            target_class,
            method: Method::Random,
            reduction: ChannelReduction::MaxAbs,
        }
    }

    /// Control map scoring 1 inside `region` and 0 elsewhere.
    pub fn oracle(dims: ImageDims, target_class: usize, region: &[bool]) -> Self {
        let values: Vec<f64> = region.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
        AttributionMap {
            signed: values
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, dims.channels))
                .collect(),
            values,
            dims,
            target_class,
            method: Method::Oracle,
            reduction: ChannelReduction::MaxAbs,
        }
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        imageio::write_pgm(path, &self.values, self.dims.width, self.dims.height)
    }
}

/// `|·|` then max or sum over channels; `HWC` in, `H×W` out.
pub fn reduce_channels(signed: &[f64], dims: ImageDims, reduction: ChannelReduction) -> Vec<f64> {
    signed
        .chunks(dims.channels)
        .map(|px| match reduction {
            ChannelReduction::MaxAbs => px.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            ChannelReduction::SumAbs => px.iter().map(|v| v.abs()).sum(),
        })
        .collect()
}

fn check_class<T: Scalar, M: ImageModel<T> + ?Sized>(model: &M, class: usize) -> Result<()> {
    if class >= model.num_classes() {
        return Err(Error::ClassOutOfRange {
            class,
            classes: model.num_classes(),
        });
    }
    Ok(())
}

/// Target scores and their input gradients for `n` packed `HWC` images.
/// Returns `(scores, gradients)` with gradients in `HWC` order.
pub fn score_and_gradients<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    images: &[f64],
    classes: &[usize],
    target: TargetScore,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dims = model.dims();
    let n = classes.len();
    if images.len() != n * dims.len() {
        return Err(Error::ShapeMismatch {
            op: "score_and_gradients",
            left: vec![n, dims.height, dims.width, dims.channels],
            right: vec![images.len()],
        });
    }
    let mut g = Graph::new();
    let x = g.leaf(hwc64_to_nchw::<T>(images, n, dims), true);
    let logits = model.logits(&mut g, x)?;
    let k = g.value(logits).shape()[1];
    let scores: Vec<f64> = match target {
        TargetScore::Logit => classes
            .iter()
            .enumerate()
            .map(|(i, &c)| g.value(logits).data()[i * k + c].as_f64())
            .collect(),
        TargetScore::Probability => {
            let l = g.value(logits).data();
            classes
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let row: Vec<f64> = l[i * k..(i + 1) * k].iter().map(|v| v.as_f64()).collect();
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
                    (row[c] - max).exp() / z
                })
                .collect()
        }
    };
    let total = match target {
        TargetScore::Logit => g.select_sum(logits, classes)?,
        TargetScore::Probability => g.softmax_select_sum(logits, classes)?,
    };
    let grads = g.backward(total)?;
    let gx = grads.get(x).expect("input requires grad");
    let mut out = Vec::with_capacity(images.len());
    for i in 0..n {
        out.extend(chw_to_hwc(&gx.data()[i * dims.len()..(i + 1) * dims.len()], dims));
    }
    Ok((scores, out))
}

/// Target score `f(x)` for one `HWC` image.
pub fn target_score<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    image: &[f64],
    class: usize,
    target: TargetScore,
) -> Result<f64> {
    check_class(model, class)?;
    let mut g = Graph::new();
    let x = g.constant(hwc64_to_nchw::<T>(image, 1, model.dims()));
    let logits = model.logits(&mut g, x)?;
    let s = match target {
        TargetScore::Logit => g.select_sum(logits, &[class])?,
        TargetScore::Probability => g.softmax_select_sum(logits, &[class])?,
    };
    Ok(g.value(s).item()?.as_f64())
}

fn to_f64_image(image: &[f32]) -> Vec<f64> {
    image.iter().map(|&v| v as f64).collect()
}

/// Gradient of the target score with respect to the input pixels.
pub fn vanilla_gradients<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    image: &[f32],
    class: usize,
    opts: &AttributionOptions,
) -> Result<AttributionMap> {
    check_class(model, class)?;
    let (_, grad) = score_and_gradients(model, &to_f64_image(image), &[class], opts.target)?;
    Ok(AttributionMap::from_signed(
        grad,
        model.dims(),
        class,
        Method::Vg,
        opts.reduction,
    ))
}

const IG_CHUNK: usize = 32;

/// Signed integrated gradients `(x − x̄) ⊙ mean_k ∇f(x̄ + α_k (x − x̄))` with
/// midpoint nodes `α_k = (k − ½)/m`, `k = 1..m`.
pub fn integrated_gradients<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    image: &[f32],
    baseline: &Baseline,
    class: usize,
    steps: usize,
    opts: &AttributionOptions,
) -> Result<AttributionMap> {
    let signed = integrated_gradients_signed(model, &to_f64_image(image), baseline, class, steps, opts.target)?;
    Ok(AttributionMap::from_signed(
        signed,
        model.dims(),
        class,
        Method::Ig,
        opts.reduction,
    ))
}

/// The signed `HWC` integrated-gradients tensor for an `f64` image.
pub fn integrated_gradients_signed<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    image: &[f64],
    baseline: &Baseline,
    class: usize,
    steps: usize,
    target: TargetScore,
) -> Result<Vec<f64>> {
    if steps < 1 {
        return Err(Error::invalid("integrated gradients needs at least one step"));
    }
    check_class(model, class)?;
    let dims = model.dims();
    if image.len() != dims.len() || baseline.image.len() != dims.len() {
        return Err(Error::ShapeMismatch {
            op: "integrated_gradients",
            left: vec![image.len()],
            right: vec![baseline.image.len()],
        });
    }
    let delta: Vec<f64> = image
        .iter()
        .zip(&baseline.image)
        .map(|(x, b)| x - b)
        .collect();
    let mut grad_sum = vec![0.0f64; dims.len()];
    let mut k = 0;
    while k < steps {
        let chunk = IG_CHUNK.min(steps - k);
        let mut batch = Vec::with_capacity(chunk * dims.len());
        for j in 0..chunk {
            let alpha = ((k + j) as f64 + 0.5) / steps as f64;
            batch.extend(
                baseline
                    .image
                    .iter()
                    .zip(&delta)
                    .map(|(b, d)| b + alpha * d),
            );
        }
        let (_, grads) = score_and_gradients(model, &batch, &vec![class; chunk], target)?;
        for g in grads.chunks(dims.len()) {
            for (s, v) in grad_sum.iter_mut().zip(g) {
                *s += v;
            }
        }
        k += chunk;
    }
    let m = steps as f64;
    Ok(grad_sum
        .iter()
        .zip(&delta)
        .map(|(g, d)| d * (g / m))
        .collect())
}

/// Attribution settings for a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionSettings {
    pub method: Method,
    pub ig_steps: usize,
    pub baseline: Baseline,
    pub opts: AttributionOptions,
}

/// One map per image of `data`, explaining the image's label.
pub fn attribute_dataset<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    data: &LabeledDataset,
    settings: &AttributionSettings,
) -> Result<Vec<AttributionMap>> {
    let dims = data.dims();
    match settings.method {
        Method::Vg => {
            const BATCH: usize = 64;
            let mut maps = Vec::with_capacity(data.len());
            for start in (0..data.len()).step_by(BATCH) {
                let end = (start + BATCH).min(data.len());
                let images = to_f64_image(&data.images()[start * dims.len()..end * dims.len()]);
                let classes = &data.labels()[start..end];
                let (_, grads) = score_and_gradients(model, &images, classes, settings.opts.target)?;
                for (g, &c) in grads.chunks(dims.len()).zip(classes) {
                    maps.push(AttributionMap::from_signed(
                        g.to_vec(),
                        dims,
                        c,
                        Method::Vg,
                        settings.opts.reduction,
                    ));
                }
            }
            Ok(maps)
        }
        Method::Ig => par::try_map_range(data.len(), |i| {
            integrated_gradients(
                model,
                data.image(i),
                &settings.baseline,
                data.label(i),
                settings.ig_steps,
                &settings.opts,
            )
        }),
        Method::Random => Ok((0..data.len())
            .map(|i| AttributionMap::random(dims, data.label(i), i as u64))
            .collect()),
        Method::Oracle => (0..data.len())
            .map(|i| {
                data.region(i)
                    .map(|r| AttributionMap::oracle(dims, data.label(i), r))
                    .ok_or_else(|| Error::invalid("oracle attribution needs region masks"))
            })
            .collect(),
    }
}

#[derive(Serialize, Deserialize)]
struct StoredMaps {
    dims: ImageDims,
    method: Method,
    reduction: ChannelReduction,
    classes: Vec<usize>,
}

/// Writes maps to the tensor container (`map.<i>` and `signed.<i>`).
pub fn save_maps(path: &Path, maps: &[AttributionMap]) -> Result<()> {
    let Some(first) = maps.first() else {
        return Err(Error::invalid("no attribution maps to save"));
    };
    let dims = first.dims;
    let mut c = Container::new();
    for (i, m) in maps.iter().enumerate() {
        c.push_tensor(
            &format!("map.{i}"),
            &Tensor::new(vec![dims.height, dims.width], m.values.clone())?,
        )?;
        c.push_tensor(
            &format!("signed.{i}"),
            &Tensor::new(vec![dims.height, dims.width, dims.channels], m.signed.clone())?,
        )?;
    }
    c.metadata = serde_json::to_value(StoredMaps {
        dims,
        method: first.method,
        reduction: first.reduction,
        classes: maps.iter().map(|m| m.target_class).collect(),
    })?;
    c.save(path)
}

pub fn load_maps(path: &Path) -> Result<Vec<AttributionMap>> {
    let c = Container::load(path)?;
    let meta: StoredMaps = serde_json::from_value(c.metadata.clone())?;
    meta.classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            Ok(AttributionMap {
                values: c.tensor::<f64>(&format!("map.{i}"))?.into_data(),
                signed: c.tensor::<f64>(&format!("signed.{i}"))?.into_data(),
                dims: meta.dims,
                target_class: class,
                method: meta.method,
                reduction: meta.reduction,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;

    fn dims() -> ImageDims {
        ImageDims::new(3, 2, 2)
    }

    fn linear(weights: &[f64]) -> LinearModel<f64> {
        // one column per class; class 1 uses `weights`, class 0 their negation
        let d = dims().len();
        let mut w = vec![0.0; d * 2];
        for (i, &v) in weights.iter().enumerate() {
            w[i * 2] = -v;
            w[i * 2 + 1] = v;
        }
        LinearModel::new(
            dims(),
            Tensor::new(vec![d, 2], w).unwrap(),
            Tensor::new(vec![2], vec![0.1, -0.3]).unwrap(),
        )
        .unwrap()
    }

    /// CHW-ordered weights → HWC order used by maps.
    fn weights_hwc(w_chw: &[f64]) -> Vec<f64> {
        chw_to_hwc(w_chw, dims())
    }

    #[test]
    fn vanilla_gradient_of_linear_model_is_weight() {
        let w: Vec<f64> = (0..12).map(|i| (i as f64 - 5.5) * 0.3).collect();
        let model = linear(&w);
        let img = vec![0.5f32; 12];
        let map = vanilla_gradients(&model, &img, 1, &AttributionOptions::default()).unwrap();
        let expect = weights_hwc(&w);
        for (a, b) in map.signed.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let reduced = reduce_channels(&expect, dims(), ChannelReduction::MaxAbs);
        assert_eq!(map.values, reduced);
    }

    #[test]
    fn invalid_class_rejected() {
        let model = linear(&[1.0; 12]);
        let img = vec![0.5f32; 12];
        assert!(matches!(
            vanilla_gradients(&model, &img, 2, &AttributionOptions::default()),
            Err(Error::ClassOutOfRange { class: 2, .. })
        ));
    }

    #[test]
    fn ig_of_linear_model_with_zero_baseline_is_w_times_x() {
        let w: Vec<f64> = (0..12).map(|i| ((i * 5) % 7) as f64 - 3.0).collect();
        let model = linear(&w);
        let img: Vec<f32> = (0..12).map(|i| (i as f32) / 16.0).collect();
        let wh = weights_hwc(&w);
        for steps in [1, 3, 8] {
            let map = integrated_gradients(
                &model,
                &img,
                &Baseline::zero(dims()),
                1,
                steps,
                &AttributionOptions::default(),
            )
            .unwrap();
            for ((a, &x), wv) in map.signed.iter().zip(&img).zip(&wh) {
                assert!((a - wv * x as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ig_at_baseline_is_zero_and_steps_validated() {
        let model = linear(&[0.7; 12]);
        let img = vec![0.25f32; 12];
        let base = Baseline::constant(dims(), 0.25);
        let map = integrated_gradients(&model, &img, &base, 0, 4, &AttributionOptions::default()).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
        assert!(integrated_gradients(&model, &img, &base, 0, 0, &AttributionOptions::default()).is_err());
    }

    #[test]
    fn sum_reduction() {
        let signed = vec![1.0, -2.0, 0.5, 0.5];
        let d = ImageDims::new(1, 2, 2);
        assert_eq!(reduce_channels(&signed, d, ChannelReduction::SumAbs), vec![3.0, 1.0]);
        assert_eq!(reduce_channels(&signed, d, ChannelReduction::MaxAbs), vec![2.0, 0.5]);
    }

    #[test]
    fn probability_gradient_matches_finite_difference() {
        let w: Vec<f64> = (0..12).map(|i| (i as f64 - 6.0) * 0.2).collect();
        let model = linear(&w);
        let img: Vec<f64> = (0..12).map(|i| (i as f64) / 12.0).collect();
        let (_, g) = score_and_gradients(&model, &img, &[1], TargetScore::Probability).unwrap();
        let h = 1e-6;
        for i in 0..12 {
            let mut a = img.clone();
            let mut b = img.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (target_score(&model, &a, 1, TargetScore::Probability).unwrap()
                - target_score(&model, &b, 1, TargetScore::Probability).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }
}
