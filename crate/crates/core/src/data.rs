//! Labeled image datasets: a seeded synthetic shapes task, a planted-patch
//! task for faithfulness checks, and the CIFAR-10 binary record format.
//!
//! Pixels are stored `N×H×W×C` in `[0, 1]`, quantized to multiples of 1/255
//! so that every dataset survives a CIFAR-format round trip bit-exactly.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const NUM_SHAPE_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageDims {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageDims {
            height,
            width,
            channels,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dims: ImageDims,
    num_classes: usize,
    images: Vec<f32>,
    labels: Vec<usize>,
    regions: Option<Vec<Vec<bool>>>,
    pub split: Split,
    pub provenance: String,
}

#[inline]
fn quantize(v: f64) -> f32 {
    let q = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    q as f32 / 255.0
}

impl LabeledDataset {
    pub fn new(
        dims: ImageDims,
        num_classes: usize,
        images: Vec<f32>,
        labels: Vec<usize>,
        split: Split,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if images.len() != labels.len() * dims.len() {
            return Err(Error::invalid(format!(
                "{} pixel values for {} images of {:?}",
                images.len(),
                labels.len(),
                dims
            )));
        }
        if let Some(&class) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::ClassOutOfRange {
                class,
                classes: num_classes,
            });
        }
        if let Some(v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(LabeledDataset {
            dims,
            num_classes,
            images,
            labels,
            regions: None,
            split,
            provenance: provenance.into(),
        })
    }

    /// Attach per-image class-determining region masks (`H×W` each).
    pub fn with_regions(mut self, regions: Vec<Vec<bool>>) -> Result<Self> {
        if regions.len() != self.len() || regions.iter().any(|r| r.len() != self.dims.pixels()) {
            return Err(Error::invalid("region masks do not match dataset"));
        }
        self.regions = Some(regions);
        Ok(self)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.dims.len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn region(&self, i: usize) -> Option<&[bool]> {
        self.regions.as_ref().map(|r| r[i].as_slice())
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut images = Vec::with_capacity(indices.len() * self.dims.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        LabeledDataset {
            dims: self.dims,
            num_classes: self.num_classes,
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            regions: self
                .regions
                .as_ref()
                .map(|r| indices.iter().map(|&i| r[i].clone()).collect()),
            split: self.split,
            provenance: self.provenance.clone(),
        }
    }

    /// First `n` images (or all of them).
    pub fn head(&self, n: usize) -> LabeledDataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn concat(parts: Vec<LabeledDataset>) -> Result<LabeledDataset> {
        let mut iter = parts.into_iter();
        let Some(mut out) = iter.next() else {
            return Err(Error::invalid("concat of zero datasets"));
        };
        for p in iter {
            if p.dims != out.dims || p.num_classes != out.num_classes {
                return Err(Error::invalid("concat of incompatible datasets"));
            }
            out.images.extend_from_slice(&p.images);
            out.labels.extend_from_slice(&p.labels);
            out.regions = match (out.regions, p.regions) {
                (Some(mut a), Some(b)) => {
                    a.extend(b);
                    Some(a)
                }
                _ => None,
            };
        }
        Ok(out)
    }

    /// Per-channel mean over all pixels of all images.
    pub fn channel_means(&self) -> Vec<f64> {
        let c = self.dims.channels;
        let mut sums = vec![0.0f64; c];
        for (i, &v) in self.images.iter().enumerate() {
            sums[i % c] += v as f64;
        }
        let count = (self.images.len() / c.max(1)).max(1) as f64;
        sums.into_iter().map(|s| s / count).collect()
    }
}

/// Converts `HWC` images to an `N×C×H×W` tensor.
pub fn hwc_to_nchw<T: Scalar>(images: &[f32], n: usize, dims: ImageDims) -> Tensor<T> {
    let (h, w, c) = (dims.height, dims.width, dims.channels);
    let mut out = vec![T::zero(); n * dims.len()];
    for i in 0..n {
        let src = &images[i * dims.len()..(i + 1) * dims.len()];
        let dst = &mut out[i * dims.len()..(i + 1) * dims.len()];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    dst[(ch * h + y) * w + x] = T::from_f64(src[(y * w + x) * c + ch] as f64);
                }
            }
        }
    }
    Tensor::new(vec![n, c, h, w], out).expect("consistent shape")
}

/// Same conversion for `f64` images.
pub fn hwc64_to_nchw<T: Scalar>(images: &[f64], n: usize, dims: ImageDims) -> Tensor<T> {
    let (h, w, c) = (dims.height, dims.width, dims.channels);
    let mut out = vec![T::zero(); n * dims.len()];
    for i in 0..n {
        let src = &images[i * dims.len()..(i + 1) * dims.len()];
        let dst = &mut out[i * dims.len()..(i + 1) * dims.len()];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    dst[(ch * h + y) * w + x] = T::from_f64(src[(y * w + x) * c + ch]);
                }
            }
        }
    }
    Tensor::new(vec![n, c, h, w], out).expect("consistent shape")
}

/// Converts one `C×H×W` sample back to `HWC`.
pub fn chw_to_hwc<T: Scalar>(chw: &[T], dims: ImageDims) -> Vec<f64> {
    let (h, w, c) = (dims.height, dims.width, dims.channels);
    let mut out = vec![0.0; dims.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(y * w + x) * c + ch] = chw[(ch * h + y) * w + x].as_f64();
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Cross,
    Ring,
}

const SHAPES: [ShapeKind; 5] = [
    ShapeKind::Circle,
    ShapeKind::Square,
    ShapeKind::Triangle,
    ShapeKind::Cross,
    ShapeKind::Ring,
];

/// Class index → (shape, outline?). Even classes are solid, odd are outlines.
pub fn shape_class(class: usize) -> (ShapeKind, bool) {
    (SHAPES[class / 2], class % 2 == 1)
}

/// Signed depth of `(dx, dy)` inside a convex polygon (positive inside).
fn polygon_depth(dx: f64, dy: f64, verts: &[(f64, f64)]) -> f64 {
    let mut depth = f64::INFINITY;
    for i in 0..verts.len() {
        let (ax, ay) = verts[i];
        let (bx, by) = verts[(i + 1) % verts.len()];
        let (ex, ey) = (bx - ax, by - ay);
        let len = (ex * ex + ey * ey).sqrt();
        // positive on the side of the edge facing the centroid
        let d = (ex * (dy - ay) - ey * (dx - ax)) / len;
        depth = depth.min(d);
    }
    depth
}

fn inside_shape(kind: ShapeKind, outline: bool, dx: f64, dy: f64, r: f64, t: f64) -> bool {
    match kind {
        ShapeKind::Circle | ShapeKind::Square => {
            let d = if kind == ShapeKind::Circle {
                (dx * dx + dy * dy).sqrt()
            } else {
                dx.abs().max(dy.abs())
            };
            if outline {
                d <= r && d >= r - t
            } else {
                d <= r
            }
        }
        ShapeKind::Triangle => {
            // y grows downward; apex on top
            let h = r * 0.9;
            let verts = [(0.0, -r), (h, r * 0.55), (-h, r * 0.55)];
            let depth = polygon_depth(dx, dy, &verts);
            if outline {
                depth >= 0.0 && depth <= t
            } else {
                depth >= 0.0
            }
        }
        ShapeKind::Cross => {
            let arm = r * 0.4;
            let hit = |a: f64, l: f64| {
                (dx.abs() <= a && dy.abs() <= l) || (dy.abs() <= a && dx.abs() <= l)
            };
            if outline {
                hit(arm, r) && !hit(arm - t, r - t)
            } else {
                hit(arm, r)
            }
        }
        ShapeKind::Ring => {
            let d = (dx * dx + dy * dy).sqrt();
            let inner = r * 0.55;
            if outline {
                (d <= r && d >= r - t) || (d >= inner && d <= inner + t)
            } else {
                d <= r && d >= inner
            }
        }
    }
}

/// Seeded synthetic 10-class shapes dataset (5 shapes × solid/outline) with
/// random position, scale and colour over a textured background. The pixels
/// belonging to the shape are recorded as each image's class region.
pub fn generate_shapes(seed: u64, n_per_class: usize, size: usize) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    if size < 8 {
        return Err(Error::invalid("shape images need size >= 8"));
    }
    let dims = ImageDims::new(size, size, 3);
    let total = n_per_class * NUM_SHAPE_CLASSES;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(total * dims.len());
    let mut labels = Vec::with_capacity(total);
    let mut regions = Vec::with_capacity(total);
    let s = size as f64;
    let thickness = (s / 16.0).max(1.5);

    for i in 0..total {
        let class = i % NUM_SHAPE_CLASSES;
        let (kind, outline) = shape_class(class);
        let r = rng.random_range(0.2..0.32) * s;
        let cx = rng.random_range(r + 1.0..s - r - 1.0);
        let cy = rng.random_range(r + 1.0..s - r - 1.0);
        let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..1.0));
        let bg_level = rng.random_range(0.05..0.3);
        let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.04..0.04));
        let (fx, fy, phase) = (
            rng.random_range(0.2..0.9),
            rng.random_range(0.2..0.9),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let mut region = vec![false; dims.pixels()];
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let hit = inside_shape(kind, outline, dx, dy, r, thickness);
                region[y * size + x] = hit;
                let texture = 0.05 * ((fx * x as f64 + fy * y as f64) + phase).sin();
                for ch in 0..3 {
                    let noise = rng.random_range(-0.06..0.06);
                    let v = if hit {
                        fg[ch] + noise * 0.5
                    } else {
                        bg_level + tint[ch] + texture + noise
                    };
                    images.push(quantize(v));
                }
            }
        }
        labels.push(class);
        regions.push(region);
    }
    LabeledDataset::new(
        dims,
        NUM_SHAPE_CLASSES,
        images,
        labels,
        Split::Train,
        format!("shapes(seed={seed}, n_per_class={n_per_class}, size={size})"),
    )?
    .with_regions(regions)
}

fn hue_to_rgb(h: f64) -> [f64; 3] {
    let h6 = (h.fract() * 6.0).rem_euclid(6.0);
    let x = 1.0 - (h6 % 2.0 - 1.0).abs();
    match h6 as usize {
        0 => [1.0, x, 0.0],
        1 => [x, 1.0, 0.0],
        2 => [0.0, 1.0, x],
        3 => [0.0, x, 1.0],
        4 => [x, 0.0, 1.0],
        _ => [1.0, 0.0, x],
    }
}

/// Dataset whose class is carried only by a `patch`×`patch` square of a
/// class-specific hue at a random position over grey noise.
pub fn generate_planted(
    seed: u64,
    n_per_class: usize,
    size: usize,
    patch: usize,
    num_classes: usize,
) -> Result<LabeledDataset> {
    if n_per_class == 0 || num_classes < 2 || patch == 0 || patch >= size {
        return Err(Error::invalid("invalid planted dataset parameters"));
    }
    let dims = ImageDims::new(size, size, 3);
    let total = n_per_class * num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(total * dims.len());
    let mut labels = Vec::with_capacity(total);
    let mut regions = Vec::with_capacity(total);
    for i in 0..total {
        let class = i % num_classes;
        let color = hue_to_rgb(class as f64 / num_classes as f64);
        let px = rng.random_range(0..=size - patch);
        let py = rng.random_range(0..=size - patch);
        let mut region = vec![false; dims.pixels()];
        for y in 0..size {
            for x in 0..size {
                let hit = (px..px + patch).contains(&x) && (py..py + patch).contains(&y);
                region[y * size + x] = hit;
                let grey = rng.random_range(0.25..0.75);
                for c in color {
                    images.push(quantize(if hit { c } else { grey }));
                }
            }
        }
        labels.push(class);
        regions.push(region);
    }
    LabeledDataset::new(
        dims,
        num_classes,
        images,
        labels,
        Split::Train,
        format!("planted(seed={seed}, n_per_class={n_per_class}, size={size}, patch={patch})"),
    )?
    .with_regions(regions)
}

/// Parses CIFAR-10 binary records: 1 label byte then 1024 R, 1024 G and 1024 B
/// bytes in row-major order.
pub fn parse_cifar_binary(bytes: &[u8], split: Split, origin: &Path) -> Result<LabeledDataset> {
    let dims = ImageDims::new(CIFAR_SIDE, CIFAR_SIDE, 3);
    if bytes.is_empty() {
        log::warn!("{} is empty; returning an empty dataset", origin.display());
    }
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Dataset {
            path: origin.to_path_buf(),
            reason: format!(
                "size {} is not a multiple of the {CIFAR_RECORD}-byte record",
                bytes.len()
            ),
        });
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let n = bytes.len() / CIFAR_RECORD;
    let mut images = Vec::with_capacity(n * dims.len());
    let mut labels = Vec::with_capacity(n);
    for (r, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = rec[0] as usize;
        if label > 9 {
            return Err(Error::Dataset {
                path: origin.to_path_buf(),
                reason: format!("record {r} has label byte {label} > 9"),
            });
        }
        labels.push(label);
        let px = &rec[1..];
        for p in 0..plane {
            for c in 0..3 {
                images.push(px[c * plane + p] as f32 / 255.0);
            }
        }
    }
    LabeledDataset::new(
        dims,
        10,
        images,
        labels,
        split,
        format!("cifar({})", origin.display()),
    )
}

pub fn load_cifar_binary(path: &Path, split: Split) -> Result<LabeledDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar_binary(&bytes, split, path)
}

/// Encodes a 32×32×3 dataset with at most 10 classes in the CIFAR-10 layout.
pub fn encode_cifar_binary(data: &LabeledDataset) -> Result<Vec<u8>> {
    if data.dims != ImageDims::new(CIFAR_SIDE, CIFAR_SIDE, 3) || data.num_classes > 10 {
        return Err(Error::invalid(format!(
            "CIFAR layout needs 32x32x3 images and <= 10 classes, got {:?} / {}",
            data.dims, data.num_classes
        )));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut out = Vec::with_capacity(data.len() * CIFAR_RECORD);
    for i in 0..data.len() {
        out.push(data.label(i) as u8);
        let img = data.image(i);
        for c in 0..3 {
            for p in 0..plane {
                out.push((img[p * 3 + c] * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn write_cifar_binary(data: &LabeledDataset, path: &Path) -> Result<()> {
    let bytes = encode_cifar_binary(data)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_deterministic() {
        let a = generate_shapes(3, 2, 32).unwrap();
        let b = generate_shapes(3, 2, 32).unwrap();
        assert_eq!(a, b);
        let c = generate_shapes(4, 2, 32).unwrap();
        assert_ne!(a.images(), c.images());
    }

    #[test]
    fn one_per_class_gives_ten_images() {
        let d = generate_shapes(0, 1, 32).unwrap();
        assert_eq!(d.len(), 10);
        let mut labels = d.labels().to_vec();
        labels.sort();
        assert_eq!(labels, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn class_regions_cover_under_half_the_image() {
        let d = generate_shapes(11, 30, 32).unwrap();
        for i in 0..d.len() {
            let region = d.region(i).unwrap();
            let covered = region.iter().filter(|&&b| b).count();
            assert!(covered > 0, "image {i} has an empty region");
            assert!(
                (covered as f64) < 0.5 * region.len() as f64,
                "image {i} (class {}) covers {covered}",
                d.label(i)
            );
        }
    }

    #[test]
    fn hand_built_records_parse() {
        let mut bytes = vec![0u8; 2 * CIFAR_RECORD];
        bytes[0] = 3;
        bytes[1] = 255; // R of pixel (0,0), image 0
        bytes[CIFAR_RECORD] = 7;
        bytes[CIFAR_RECORD + 1 + 2 * 1024 + 5] = 51; // B of pixel (0,5), image 1
        let d = parse_cifar_binary(&bytes, Split::Test, Path::new("fixture")).unwrap();
        assert_eq!(d.labels(), &[3, 7]);
        assert_eq!(d.image(0)[0], 1.0);
        assert_eq!(d.image(0)[1], 0.0);
        assert_eq!(d.image(1)[5 * 3 + 2], 0.2);
        assert_eq!(d.split, Split::Test);
    }

    #[test]
    fn truncated_and_bad_label_rejected() {
        let bytes = vec![0u8; CIFAR_RECORD + 10];
        assert!(parse_cifar_binary(&bytes, Split::Train, Path::new("t")).is_err());
        let mut bytes = vec![0u8; CIFAR_RECORD];
        bytes[0] = 10;
        assert!(matches!(
            parse_cifar_binary(&bytes, Split::Train, Path::new("t")),
            Err(Error::Dataset { .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let d = parse_cifar_binary(&[], Split::Train, Path::new("empty")).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn layout_conversion_round_trip() {
        let d = generate_shapes(1, 1, 16).unwrap();
        let t = hwc_to_nchw::<f64>(d.image(2), 1, d.dims());
        let back = chw_to_hwc(t.data(), d.dims());
        let orig: Vec<f64> = d.image(2).iter().map(|&v| v as f64).collect();
        assert_eq!(back, orig);
    }
}
