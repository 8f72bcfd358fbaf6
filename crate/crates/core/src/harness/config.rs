use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionOptions, BaselineKind, ChannelReduction, Method, TargetScore};
use crate::concepts::SobolOrder;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pruning::SparsitySchedule;
use crate::train::{LrSchedule, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Shapes,
    Planted,
    Cifar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub size: usize,
    /// Side of the class patch for `planted` data.
    pub planted_patch: usize,
    pub num_classes: usize,
    /// CIFAR-10 binary files for `cifar` data.
    pub train_files: Vec<PathBuf>,
    pub test_files: Vec<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            kind: DatasetKind::Shapes,
            train_per_class: 200,
            test_per_class: 40,
            size: 32,
            planted_patch: 4,
            num_classes: 10,
            train_files: Vec::new(),
            test_files: Vec::new(),
        }
    }
}

/// Architecture without a seed; the global seed drives initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub stem_width: usize,
    pub stem_stride: usize,
    pub block_widths: Vec<usize>,
    pub block_strides: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            stem_width: m.stem_width,
            stem_stride: m.stem_stride,
            block_widths: m.block_widths,
            block_strides: m.block_strides,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub schedule: LrSchedule,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            epochs: t.epochs,
            lr: t.lr,
            momentum: t.momentum,
            batch_size: t.batch_size,
            schedule: t.schedule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributionSection {
    pub methods: Vec<Method>,
    pub ig_steps: usize,
    pub baseline: BaselineKind,
    /// Pixel value of the `constant` baseline.
    pub baseline_value: f64,
    pub target: TargetScore,
    pub reduction: ChannelReduction,
    /// Number of maps per method and level exported as PGM.
    pub export_maps: usize,
}

impl Default for AttributionSection {
    fn default() -> Self {
        let o = AttributionOptions::default();
        AttributionSection {
            methods: vec![Method::Vg, Method::Ig],
            ig_steps: 16,
            baseline: BaselineKind::Zero,
            baseline_value: 0.0,
            target: o.target,
            reduction: o.reduction,
            export_maps: 8,
        }
    }
}

impl AttributionSection {
    pub fn options(&self) -> AttributionOptions {
        AttributionOptions {
            target: self.target,
            reduction: self.reduction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub fractions: Vec<f64>,
    /// Test images used for attribution metrics and concepts.
    pub eval_subset: usize,
    /// Also score a uniform random ranking as a ROAD control.
    pub random_control: bool,
    pub imputer_tol: f64,
    pub imputer_max_sweeps: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            fractions: crate::metrics::default_fractions(),
            eval_subset: 200,
            random_control: true,
            imputer_tol: 1e-4,
            imputer_max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConceptsSection {
    pub classes: Vec<usize>,
    pub rank: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub nmf_max_iters: usize,
    pub nmf_tol: f64,
    pub sobol_samples: usize,
    pub order: SobolOrder,
    pub top_patches: usize,
}

impl Default for ConceptsSection {
    fn default() -> Self {
        ConceptsSection {
            classes: vec![0, 5],
            rank: 10,
            patch_size: 16,
            stride: 8,
            nmf_max_iters: 500,
            nmf_tol: 1e-6,
            sobol_samples: 512,
            order: SobolOrder::Total,
            top_patches: 8,
        }
    }
}

/// A whole experiment, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub precision: Precision,
    pub out_dir: PathBuf,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub pruning: SparsitySchedule,
    pub attribution: AttributionSection,
    pub metrics: MetricsSection,
    pub concepts: ConceptsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            precision: Precision::F32,
            out_dir: PathBuf::from("out"),
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            pruning: SparsitySchedule::default(),
            attribution: AttributionSection::default(),
            metrics: MetricsSection::default(),
            concepts: ConceptsSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Compact JSON used as the provenance line of every results file.
    /// `out_dir` is left out: it names where results go, not what they are.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("out_dir");
        }
        v.to_string()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_height: self.dataset.size,
            input_width: self.dataset.size,
            input_channels: 3,
            stem_width: self.model.stem_width,
            stem_stride: self.model.stem_stride,
            block_widths: self.model.block_widths.clone(),
            block_strides: self.model.block_strides.clone(),
            num_classes: self.dataset.num_classes,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.training.epochs,
            lr: self.training.lr,
            momentum: self.training.momentum,
            batch_size: self.training.batch_size,
            schedule: self.training.schedule,
            seed: self.seed.wrapping_add(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = &self.dataset;
        if d.train_per_class == 0 || d.test_per_class == 0 {
            return bad("dataset sizes must be >= 1 per class".into());
        }
        if d.kind == DatasetKind::Cifar && (d.train_files.is_empty() || d.test_files.is_empty()) {
            return bad("cifar datasets need train_files and test_files".into());
        }
        if d.kind == DatasetKind::Cifar && (d.size != 32 || d.num_classes != 10) {
            return bad("cifar datasets are 32x32 with 10 classes".into());
        }
        if d.kind == DatasetKind::Shapes && d.num_classes != 10 {
            return bad("the shapes dataset has 10 classes".into());
        }
        self.model_config().validate()?;
        if self.training.batch_size == 0 || !(self.training.lr > 0.0) {
            return bad("training needs batch_size >= 1 and lr > 0".into());
        }
        self.pruning.validate()?;
        if self.attribution.ig_steps == 0 {
            return bad("ig_steps must be >= 1".into());
        }
        if let Some(m) = self
            .attribution
            .methods
            .iter()
            .find(|m| !matches!(m, Method::Vg | Method::Ig))
        {
            return bad(format!("attribution method {m} is a control, not a saliency method"));
        }
        if self.metrics.eval_subset == 0 {
            return bad("eval_subset must be >= 1".into());
        }
        if self.metrics.fractions.first() != Some(&0.0)
            || self.metrics.fractions.iter().any(|f| !(0.0..1.0).contains(f))
            || self.metrics.fractions.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("fractions must start at 0, increase strictly and stay below 1".into());
        }
        let c = &self.concepts;
        if let Some(&k) = c.classes.iter().find(|&&k| k >= d.num_classes) {
            return bad(format!("concept class {k} out of range"));
        }
        if c.rank == 0 || c.sobol_samples < 2 || c.patch_size == 0 || c.patch_size > d.size || c.stride == 0 {
            return bad("invalid concept settings".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 7\n[pruning]\ntargets = [0.1]\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pruning.targets, vec![0.1]);
        assert_eq!(cfg.concepts.rank, 10);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("sead = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[model]\nwidth = 3\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml("[pruning]\ntargets = [0.5, 0.2]\n").is_err());
        assert!(ExperimentConfig::from_toml("[metrics]\nfractions = [0.1, 0.2]\n").is_err());
        assert!(ExperimentConfig::from_toml("[concepts]\nclasses = [12]\n").is_err());
        assert!(ExperimentConfig::from_toml("[attribution]\nmethods = [\"random\"]\n").is_err());
    }
}
