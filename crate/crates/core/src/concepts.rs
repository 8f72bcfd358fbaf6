//! Concept extraction: class-conditional patches, NMF of their activations
//! into a concept bank, and Sobol importance of each concept.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{hwc_to_nchw, ImageDims, LabeledDataset};
use crate::error::{Error, Result};
use crate::imageio;
use crate::model::{ImageModel, Network};
use crate::par;
use crate::tensor::Scalar;
use crate::train::predict;

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Index of the source image in the dataset.
    pub image_index: usize,
    /// Top-left corner of the crop.
    pub y: usize,
    pub x: usize,
    /// Crop resized to the model input, `HWC`.
    pub pixels: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub class: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub dims: ImageDims,
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Bilinear resize of an `HWC` image with half-pixel centres.
pub fn resize_bilinear(src: &[f32], from: ImageDims, to_h: usize, to_w: usize) -> Vec<f32> {
    let c = from.channels;
    let sy = from.height as f64 / to_h as f64;
    let sx = from.width as f64 / to_w as f64;
    let coord = |d: usize, scale: f64, len: usize| {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(to_h * to_w * c);
    for oy in 0..to_h {
        let (y0, y1, fy) = coord(oy, sy, from.height);
        for ox in 0..to_w {
            let (x0, x1, fx) = coord(ox, sx, from.width);
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * from.width + x) * c + ch] as f64;
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
    }
    out
}

fn crop(src: &[f32], dims: ImageDims, y: usize, x: usize, size: usize) -> Vec<f32> {
    let c = dims.channels;
    let mut out = Vec::with_capacity(size * size * c);
    for row in y..y + size {
        let start = (row * dims.width + x) * c;
        out.extend_from_slice(&src[start..start + size * c]);
    }
    out
}

/// Square crops at `stride` from every image the model predicts as `class`,
/// resized to the model input size.
pub fn extract_patches<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    data: &LabeledDataset,
    class: usize,
    patch_size: usize,
    stride: usize,
) -> Result<PatchSet> {
    let dims = data.dims();
    if class >= model.num_classes() {
        return Err(Error::ClassOutOfRange {
            class,
            classes: model.num_classes(),
        });
    }
    if patch_size == 0 || stride == 0 || patch_size > dims.height.min(dims.width) {
        return Err(Error::invalid(format!(
            "patch size {patch_size} with stride {stride} does not fit {}x{} images",
            dims.height, dims.width
        )));
    }
    let preds = predict(model, data)?;
    let mut counts = vec![0usize; model.num_classes()];
    for &p in &preds {
        counts[p] += 1;
    }
    if counts[class] == 0 {
        return Err(Error::EmptyClass { class, counts });
    }
    let crop_dims = ImageDims::new(patch_size, patch_size, dims.channels);
    let mut coords = Vec::new();
    for (i, _) in preds.iter().enumerate().filter(|(_, &p)| p == class) {
        for y in (0..=dims.height - patch_size).step_by(stride) {
            for x in (0..=dims.width - patch_size).step_by(stride) {
                coords.push((i, y, x));
            }
        }
    }
    let patches = par::map_slice(&coords, |&(i, y, x)| {
        let c = crop(data.image(i), dims, y, x, patch_size);
        Patch {
            image_index: i,
            y,
            x,
            pixels: resize_bilinear(&c, crop_dims, dims.height, dims.width),
        }
    });
    Ok(PatchSet {
        class,
        patch_size,
        stride,
        dims,
        patches,
    })
}

/// Post-ReLU activations of the last residual block, average-pooled over
/// space: one row per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    pub data: Array2<f64>,
}

impl ActivationMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        check_nonnegative(&data)?;
        Ok(ActivationMatrix { data })
    }
}

fn check_nonnegative(a: &Array2<f64>) -> Result<()> {
    for ((row, col), &value) in a.indexed_iter() {
        if !(value >= 0.0) {
            return Err(Error::NegativeEntry { row, col, value });
        }
    }
    Ok(())
}

pub fn activations<T: Scalar>(net: &Network<T>, patches: &PatchSet) -> Result<ActivationMatrix> {
    const BATCH: usize = 64;
    let dims = patches.dims;
    let d = net.config().feature_width();
    let mut data = Array2::zeros((patches.len(), d));
    for start in (0..patches.len()).step_by(BATCH) {
        let end = (start + BATCH).min(patches.len());
        let pixels: Vec<f32> = patches.patches[start..end]
            .iter()
            .flat_map(|p| p.pixels.iter().copied())
            .collect();
        let feats = net.pooled_features(hwc_to_nchw(&pixels, end - start, dims))?;
        for (k, v) in feats.data().iter().enumerate() {
            // ReLU output averaged: non-negative up to rounding.
            data[[start + k / d, k % d]] = v.as_f64().max(0.0);
        }
    }
    ActivationMatrix::new(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmfConfig {
    pub rank: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            rank: 10,
            max_iters: 500,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// `A ≈ U·W` with `U: n×r` coefficients and `W: r×d` concept vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBank {
    pub u: Array2<f64>,
    pub w: Array2<f64>,
    pub rank: usize,
    /// `‖A − UW‖_F`, starting with the initial factors.
    pub errors: Vec<f64>,
    pub stop: NmfStop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NmfStop {
    /// Relative improvement fell below the tolerance.
    Converged,
    MaxIters,
    /// An update would have raised the residual to this value; it was
    /// discarded.
    Rejected(f64),
}

impl ConceptBank {
    pub fn relative_error(&self, a: &Array2<f64>) -> f64 {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        frobenius_residual(a, &self.u, &self.w) / norm
    }
}

fn frobenius_residual(a: &Array2<f64>, u: &Array2<f64>, w: &Array2<f64>) -> f64 {
    let r = a - &u.dot(w);
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

const NMF_EPS: f64 = 1e-12;

/// Multiplicative-update NMF. Stops when the relative decrease of the
/// residual falls below `tol` or after `max_iters` updates. An update that
/// would increase the residual (rounding at convergence) is discarded.
pub fn nmf(a: &Array2<f64>, cfg: &NmfConfig) -> Result<ConceptBank> {
    check_nonnegative(a)?;
    let (n, d) = a.dim();
    let r = cfg.rank;
    if r == 0 || r > n.min(d) {
        return Err(Error::invalid(format!(
            "rank {r} invalid for a {n}x{d} matrix"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = (a.mean().unwrap_or(0.0) / r as f64).sqrt();
    let mut draw = |rows, cols| {
        Array2::from_shape_simple_fn((rows, cols), || (1.0 - rng.random::<f64>()) * scale)
    };
    let mut u = draw(n, r);
    let mut w = draw(r, d);
    let mut errors = vec![frobenius_residual(a, &u, &w)];
    let mut stop = NmfStop::MaxIters;
    for _ in 0..cfg.max_iters {
        let num_u = a.dot(&w.t());
        let den_u = u.dot(&w.dot(&w.t()));
        let nu = &u * &num_u / (den_u + NMF_EPS);
        let num_w = nu.t().dot(a);
        let den_w = nu.t().dot(&nu).dot(&w);
        let nw = &w * &num_w / (den_w + NMF_EPS);
        let err = frobenius_residual(a, &nu, &nw);
        let prev = *errors.last().expect("initial error recorded");
        if err > prev || !err.is_finite() {
            stop = NmfStop::Rejected(err);
            break;
        }
        u = nu;
        w = nw;
        errors.push(err);
        if prev == 0.0 || (prev - err) / prev < cfg.tol {
            stop = NmfStop::Converged;
            break;
        }
    }
    Ok(ConceptBank {
        u,
        w,
        rank: r,
        errors,
        stop,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SobolOrder {
    Total,
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptImportance {
    pub indices: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_samples: usize,
    pub order: SobolOrder,
}

/// Sobol indices of concept coefficients.
///
/// Each patch's coefficients `u` are scaled by masks drawn uniformly from
/// `[0, 1]`; `head_fn` receives `(u ⊙ m)·W`. Two mask matrices `A`, `B` of
/// `n_samples` rows are shared by all patches. Total indices use Jansen's
/// estimator `E[(f(A) − f(A_B^i))²] / 2V`, first-order ones
/// `(V − E[(f(B) − f(A_B^i))²]/2) / V`. Per-patch indices are averaged; the
/// reported error is the mean per-patch standard error.
pub fn sobol_importance<F>(
    head_fn: F,
    u: &Array2<f64>,
    w: &Array2<f64>,
    n_samples: usize,
    seed: u64,
    order: SobolOrder,
) -> Result<ConceptImportance>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_samples < 2 {
        return Err(Error::invalid("Sobol estimation needs at least two samples"));
    }
    let (n, r) = u.dim();
    if w.nrows() != r {
        return Err(Error::ShapeMismatch {
            op: "sobol_importance",
            left: vec![n, r],
            right: w.shape().to_vec(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("Sobol estimation needs at least one patch"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ma = Array2::from_shape_simple_fn((n_samples, r), || rng.random::<f64>());
    let mb = Array2::from_shape_simple_fn((n_samples, r), || rng.random::<f64>());

    let per_patch: Vec<(Vec<f64>, Vec<f64>)> = par::map_range(n, |p| {
        let coeffs = u.row(p);
        let eval = |mask: &[f64]| {
            let scaled: Vec<f64> = mask.iter().zip(coeffs.iter()).map(|(m, c)| m * c).collect();
            let a = ndarray::ArrayView1::from(&scaled[..]).dot(w);
            head_fn(a.as_slice().expect("contiguous"))
        };
        let fa: Vec<f64> = ma.axis_iter(Axis(0)).map(|row| eval(&row.to_vec())).collect();
        let fb: Vec<f64> = mb.axis_iter(Axis(0)).map(|row| eval(&row.to_vec())).collect();
        let all: Vec<f64> = fa.iter().chain(&fb).copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
        let mut idx = vec![0.0; r];
        let mut se = vec![0.0; r];
        if var <= f64::EPSILON * mean.abs().max(1.0).powi(2) {
            return (idx, se);
        }
        for i in 0..r {
            let terms: Vec<f64> = (0..n_samples)
                .map(|j| {
                    let mut row = ma.row(j).to_vec();
                    row[i] = mb[[j, i]];
                    let fab = eval(&row);
                    match order {
                        SobolOrder::Total => 0.5 * (fa[j] - fab).powi(2),
                        SobolOrder::First => 0.5 * (fb[j] - fab).powi(2),
                    }
                })
                .collect();
            let m = terms.iter().sum::<f64>() / n_samples as f64;
            let sd = (terms.iter().map(|t| (t - m).powi(2)).sum::<f64>()
                / (n_samples - 1) as f64)
                .sqrt();
            idx[i] = match order {
                SobolOrder::Total => m / var,
                SobolOrder::First => (var - m) / var,
            };
            se[i] = sd / (n_samples as f64).sqrt() / var;
        }
        (idx, se)
    });
    let mut indices = vec![0.0; r];
    let mut std_errors = vec![0.0; r];
    for (idx, se) in &per_patch {
        for i in 0..r {
            indices[i] += idx[i] / n as f64;
            std_errors[i] += se[i] / n as f64;
        }
    }
    Ok(ConceptImportance {
        indices,
        std_errors,
        n_samples,
        order,
    })
}

/// Class-`y` logit of the network's dense head on pooled features.
pub fn class_head<T: Scalar>(net: &Network<T>, class: usize) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |a: &[f64]| net.head_logits(a)[class]
}

/// Concept ids by descending importance; ties by ascending id.
pub fn rank_concepts(importances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRef {
    pub patch: usize,
    pub image_index: usize,
    pub y: usize,
    pub x: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub concept: usize,
    pub importance: f64,
    pub std_error: f64,
    pub top_patches: Vec<PatchRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptReport {
    pub class: usize,
    pub rank: usize,
    pub n_samples: usize,
    pub order: SobolOrder,
    pub patch_size: usize,
    pub n_patches: usize,
    pub ranking: Vec<usize>,
    pub concepts: Vec<ConceptEntry>,
}

/// Concepts sorted by importance, each with its `k_top` patches of largest
/// coefficient (ties by patch index).
pub fn rank_and_export(
    bank: &ConceptBank,
    importance: &ConceptImportance,
    patches: &PatchSet,
    k_top: usize,
) -> Result<ConceptReport> {
    if importance.indices.len() != bank.rank || bank.u.nrows() != patches.len() {
        return Err(Error::ShapeMismatch {
            op: "rank_and_export",
            left: vec![bank.u.nrows(), bank.rank],
            right: vec![patches.len(), importance.indices.len()],
        });
    }
    let ranking = rank_concepts(&importance.indices);
    let concepts = ranking
        .iter()
        .map(|&c| {
            let col = bank.u.column(c);
            let mut idx: Vec<usize> = (0..patches.len()).collect();
            idx.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
            ConceptEntry {
                concept: c,
                importance: importance.indices[c],
                std_error: importance.std_errors[c],
                top_patches: idx
                    .into_iter()
                    .take(k_top)
                    .map(|p| {
                        let src = &patches.patches[p];
                        PatchRef {
                            patch: p,
                            image_index: src.image_index,
                            y: src.y,
                            x: src.x,
                            coefficient: col[p],
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(ConceptReport {
        class: patches.class,
        rank: bank.rank,
        n_samples: importance.n_samples,
        order: importance.order,
        patch_size: patches.patch_size,
        n_patches: patches.len(),
        ranking,
        concepts,
    })
}

impl ConceptReport {
    /// Writes `concepts.json` and one `concept_<id>.ppm` strip per concept.
    pub fn write(&self, dir: &Path, patches: &PatchSet) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self)?;
        let path = dir.join("concepts.json");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        let dims = patches.dims;
        for entry in &self.concepts {
            let rgb: Vec<Vec<f32>> = entry
                .top_patches
                .iter()
                .map(|p| to_rgb(&patches.patches[p.patch].pixels, dims.channels))
                .collect();
            let refs: Vec<&[f32]> = rgb.iter().map(|v| v.as_slice()).collect();
            let (pixels, width) = imageio::tile_row(&refs, dims.width, dims.height);
            if width > 0 {
                imageio::write_ppm(
                    &dir.join(format!("concept_{}.ppm", entry.concept)),
                    &pixels,
                    width,
                    dims.height,
                )?;
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn to_rgb(pixels: &[f32], channels: usize) -> Vec<f32> {
    match channels {
        3 => pixels.to_vec(),
        _ => pixels
            .chunks(channels)
            .flat_map(|px| std::iter::repeat_n(px[0], 3))
            .collect(),
    }
}
