//! Explanation-quality metrics: Gini sparsity, ROAD most-relevant-first
//! perturbation curves and AOPC.

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionMap;
use crate::data::{ImageDims, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::ImageModel;
use crate::par;
use crate::tensor::Scalar;
use crate::train::{argmax_rows, logits_for};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GiniScore {
    pub value: f64,
    pub d: usize,
}

/// Gini index of `|values|`.
///
/// `G = 1 − 2 Σ_k (φ_(k)/‖φ‖₁)·((d − k + ½)/d)` with `φ` sorted ascending.
/// The sum is evaluated by pairing the k-th smallest with the k-th largest
/// element so that uniform vectors give exactly 0 and one-hot vectors
/// exactly `1 − 1/d`.
pub fn gini(values: &[f64]) -> Result<GiniScore> {
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    let mut a: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let d = a.len();
    let total: f64 = a.iter().sum();
    if total == 0.0 {
        return Err(Error::invalid("gini of an all-zero attribution is undefined"));
    }
    a.sort_by(f64::total_cmp);
    // Σ_k (2k − d − 1) φ_(k), paired from both ends.
    let mut numer = 0.0;
    for k in 1..=d / 2 {
        numer += (d + 1 - 2 * k) as f64 * (a[d - k] - a[k - 1]);
    }
    let scale = d as f64 * total;
    Ok(GiniScore {
        value: 1.0 - (scale - numer) / scale,
        d,
    })
}

pub fn gini_map(map: &AttributionMap) -> Result<GiniScore> {
    gini(&map.values)
}

/// Replaces removed pixels with values derived only from kept pixels.
pub trait Imputer: Sync {
    /// `image` is `HWC`; `removed` is `H×W`. Kept pixels must be returned
    /// unchanged.
    fn impute(&self, image: &[f32], dims: ImageDims, removed: &[bool]) -> Vec<f32>;
}

/// Iterative neighbour averaging.
///
/// A removed pixel with at least one kept 8-neighbour takes the mean of its
/// kept neighbours. Removed pixels whose neighbours are all removed are
/// solved by Jacobi sweeps averaging all 8 neighbours, seeded with the mean of
/// the kept pixels, until the largest update falls below `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeighborImputer {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for NeighborImputer {
    fn default() -> Self {
        NeighborImputer {
            tol: 1e-4,
            max_sweeps: 10_000,
        }
    }
}

fn neighbours(dims: ImageDims, p: usize) -> impl Iterator<Item = usize> {
    let (h, w) = (dims.height as isize, dims.width as isize);
    let (y, x) = ((p / dims.width) as isize, (p % dims.width) as isize);
    (-1isize..=1)
        .flat_map(move |dy| (-1isize..=1).map(move |dx| (dy, dx)))
        .filter(|&(dy, dx)| dy != 0 || dx != 0)
        .map(move |(dy, dx)| (y + dy, x + dx))
        .filter(move |&(ny, nx)| ny >= 0 && nx >= 0 && ny < h && nx < w)
        .map(move |(ny, nx)| (ny * w + nx) as usize)
}

impl Imputer for NeighborImputer {
    fn impute(&self, image: &[f32], dims: ImageDims, removed: &[bool]) -> Vec<f32> {
        let c = dims.channels;
        let mut out: Vec<f64> = image.iter().map(|&v| v as f64).collect();
        let kept = removed.iter().filter(|&&r| !r).count();
        let mut seed = vec![0.0f64; c];
        if kept > 0 {
            for (p, _) in removed.iter().enumerate().filter(|(_, &r)| !r) {
                for ch in 0..c {
                    seed[ch] += out[p * c + ch];
                }
            }
            for s in &mut seed {
                *s /= kept as f64;
            }
        }

        let mut interior = Vec::new();
        for p in (0..removed.len()).filter(|&p| removed[p]) {
            let mut n = 0usize;
            let mut acc = vec![0.0f64; c];
            for q in neighbours(dims, p).filter(|&q| !removed[q]) {
                n += 1;
                for ch in 0..c {
                    acc[ch] += image[q * c + ch] as f64;
                }
            }
            if n > 0 {
                for ch in 0..c {
                    out[p * c + ch] = acc[ch] / n as f64;
                }
            } else {
                interior.push(p);
                out[p * c..(p + 1) * c].copy_from_slice(&seed);
            }
        }

        let lists: Vec<Vec<usize>> = interior.iter().map(|&p| neighbours(dims, p).collect()).collect();
        let mut next = vec![0.0f64; interior.len() * c];
        for _ in 0..self.max_sweeps {
            let mut delta = 0.0f64;
            for (i, (&p, nb)) in interior.iter().zip(&lists).enumerate() {
                for ch in 0..c {
                    let s: f64 = nb.iter().map(|&q| out[q * c + ch]).sum();
                    let v = s / nb.len() as f64;
                    delta = delta.max((v - out[p * c + ch]).abs());
                    next[i * c + ch] = v;
                }
            }
            for (i, &p) in interior.iter().enumerate() {
                out[p * c..(p + 1) * c].copy_from_slice(&next[i * c..(i + 1) * c]);
            }
            if delta < self.tol {
                break;
            }
        }
        out.into_iter()
            .zip(image)
            .zip(removed.iter().flat_map(|&r| std::iter::repeat_n(r, c)))
            .map(|((v, &orig), r)| if r { v as f32 } else { orig })
            .collect()
    }
}

/// Pixel indices by descending score; ties go to the lower index.
pub fn morf_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// `H×W` mask of the `round(fraction·HW)` most relevant pixels.
pub fn removal_mask(values: &[f64], fraction: f64) -> Vec<bool> {
    let k = (fraction * values.len() as f64).round() as usize;
    let mut mask = vec![false; values.len()];
    for &p in morf_order(values).iter().take(k) {
        mask[p] = true;
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveOrdering {
    /// Most relevant first.
    Morf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub fractions: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub ordering: CurveOrdering,
}

impl PerturbationCurve {
    pub fn new(fractions: Vec<f64>, accuracies: Vec<f64>) -> Result<Self> {
        validate_fractions(&fractions)?;
        if accuracies.len() != fractions.len() {
            return Err(Error::ShapeMismatch {
                op: "perturbation_curve",
                left: vec![fractions.len()],
                right: vec![accuracies.len()],
            });
        }
        if let Some(a) = accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::invalid(format!("accuracy {a} outside [0, 1]")));
        }
        Ok(PerturbationCurve {
            fractions,
            accuracies,
            ordering: CurveOrdering::Morf,
        })
    }
}

/// The default grid `0, 0.1, …, 0.9`.
pub fn default_fractions() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

fn validate_fractions(fractions: &[f64]) -> Result<()> {
    match fractions.first() {
        Some(&f) if f == 0.0 => {}
        _ => return Err(Error::invalid("removal fractions must start at 0")),
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::invalid(format!("removal fraction {f} outside [0, 1)")));
    }
    if fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("removal fractions must be strictly increasing"));
    }
    Ok(())
}

fn accuracy_on<T: Scalar, M: ImageModel<T> + ?Sized>(
    model: &M,
    images: &[f32],
    labels: &[usize],
) -> Result<f64> {
    const BATCH: usize = 64;
    let len = model.dims().len();
    let mut hits = 0usize;
    for start in (0..labels.len()).step_by(BATCH) {
        let end = (start + BATCH).min(labels.len());
        let logits = logits_for(model, &images[start * len..end * len], end - start)?;
        hits += argmax_rows(&logits)
            .iter()
            .zip(&labels[start..end])
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy after imputing the top `fraction` of each image's pixels, ranked
/// by its attribution map, for every fraction of the grid.
pub fn road_morf<T: Scalar, M: ImageModel<T> + ?Sized, I: Imputer + ?Sized>(
    model: &M,
    data: &LabeledDataset,
    maps: &[AttributionMap],
    fractions: &[f64],
    imputer: &I,
) -> Result<PerturbationCurve> {
    validate_fractions(fractions)?;
    if data.is_empty() {
        return Err(Error::invalid("ROAD needs a non-empty dataset"));
    }
    if maps.len() != data.len() {
        return Err(Error::ShapeMismatch {
            op: "road_morf",
            left: vec![data.len()],
            right: vec![maps.len()],
        });
    }
    let dims = data.dims();
    if let Some(m) = maps.iter().find(|m| m.values.len() != dims.pixels()) {
        return Err(Error::ShapeMismatch {
            op: "road_morf",
            left: vec![dims.height, dims.width],
            right: vec![m.values.len()],
        });
    }
    let orders: Vec<Vec<usize>> = par::map_slice(maps, |m| morf_order(&m.values));
    let mut accuracies = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let k = (f * dims.pixels() as f64).round() as usize;
        let perturbed: Vec<Vec<f32>> = par::map_range(data.len(), |i| {
            if k == 0 {
                return data.image(i).to_vec();
            }
            let mut removed = vec![false; dims.pixels()];
            for &p in &orders[i][..k] {
                removed[p] = true;
            }
            imputer.impute(data.image(i), dims, &removed)
        });
        let images: Vec<f32> = perturbed.concat();
        accuracies.push(accuracy_on(model, &images, data.labels())?);
    }
    PerturbationCurve::new(fractions.to_vec(), accuracies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AopcScore {
    pub value: f64,
    pub curve: PerturbationCurve,
}

/// Mean accuracy drop `acc₀ − acc_k` over the nonzero fractions.
pub fn aopc(curve: &PerturbationCurve) -> Result<AopcScore> {
    if curve.accuracies.len() < 2 {
        return Err(Error::invalid("AOPC needs at least two curve points"));
    }
    let base = curve.accuracies[0];
    let drops: f64 = curve.accuracies[1..].iter().map(|a| base - a).sum();
    Ok(AopcScore {
        value: drops / (curve.accuracies.len() - 1) as f64,
        curve: curve.clone(),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
