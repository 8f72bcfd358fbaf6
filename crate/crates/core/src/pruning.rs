//! Global unstructured magnitude pruning with rewind to initialization.
//!
//! One cycle of the lottery-ticket procedure: rank all weights (biases
//! excluded) jointly by magnitude, zero the smallest until the cumulative
//! target sparsity is reached, reset survivors to their init values and
//! fine-tune under the mask.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{Network, ParamKind, ParamStore};
use crate::tensor::{Scalar, Tensor};
use crate::train::{self, TrainConfig, TrainLog};

/// Keep-flags for one weight tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    shape: Vec<usize>,
    keep: Vec<bool>,
}

impl BinaryMask {
    pub fn ones(shape: &[usize]) -> Self {
        BinaryMask {
            shape: shape.to_vec(),
            keep: vec![true; shape.iter().product()],
        }
    }

    pub fn new(shape: Vec<usize>, keep: Vec<bool>) -> Result<Self> {
        if shape.iter().product::<usize>() != keep.len() {
            return Err(Error::BadLength {
                shape,
                len: keep.len(),
            });
        }
        Ok(BinaryMask { shape, keep })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn zeros(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }

    /// Zeroes masked entries of `data` in place.
    pub fn apply<T: Scalar>(&self, data: &mut [T]) {
        for (v, &k) in data.iter_mut().zip(&self.keep) {
            if !k {
                *v = T::zero();
            }
        }
    }
}

/// Per-weight-tensor masks; biases never have an entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PruningMask {
    entries: BTreeMap<String, BinaryMask>,
    pub target_sparsity: f64,
}

impl PruningMask {
    pub fn all_ones<T: Scalar>(params: &ParamStore<T>) -> Self {
        PruningMask {
            entries: params
                .weights()
                .map(|(n, p)| (n.to_string(), BinaryMask::ones(p.value().shape())))
                .collect(),
            target_sparsity: 0.0,
        }
    }

    pub fn from_entries(entries: BTreeMap<String, BinaryMask>, target_sparsity: f64) -> Self {
        PruningMask {
            entries,
            target_sparsity,
        }
    }

    pub fn get(&self, name: &str) -> Option<&BinaryMask> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BinaryMask)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn total(&self) -> usize {
        self.entries.values().map(|m| m.keep.len()).sum()
    }

    pub fn zeros(&self) -> usize {
        self.entries.values().map(|m| m.zeros()).sum()
    }

    /// Mask-zero count over weight count.
    pub fn sparsity(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.zeros() as f64 / total as f64
        }
    }

    /// Entries must cover exactly the weight tensors, with matching shapes.
    pub fn validate_against<T: Scalar>(&self, params: &ParamStore<T>) -> Result<()> {
        for (name, m) in &self.entries {
            match params.get(name) {
                Some(p) if p.kind == ParamKind::Weight => {
                    if p.value().shape() != m.shape() {
                        return Err(Error::ShapeMismatch {
                            op: "mask",
                            left: p.value().shape().to_vec(),
                            right: m.shape().to_vec(),
                        });
                    }
                }
                Some(_) => return Err(Error::invalid(format!("mask entry for bias {name}"))),
                None => return Err(Error::invalid(format!("mask entry for unknown {name}"))),
            }
        }
        if let Some((name, _)) = params
            .weights()
            .find(|(n, _)| !self.entries.contains_key(*n))
        {
            return Err(Error::invalid(format!("weight {name} has no mask entry")));
        }
        Ok(())
    }

    /// True if every weight pruned here is also pruned in `later`.
    pub fn is_subset_of_zeros(&self, later: &PruningMask) -> bool {
        self.entries.iter().all(|(name, m)| match later.get(name) {
            Some(l) => m.keep.iter().zip(&l.keep).all(|(&a, &b)| a || !b),
            None => false,
        })
    }
}

/// Cumulative sparsity targets, one prune and fine-tune cycle per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparsitySchedule {
    pub targets: Vec<f64>,
    pub fine_tune_epochs: usize,
}

impl Default for SparsitySchedule {
    fn default() -> Self {
        SparsitySchedule {
            targets: vec![0.10, 0.20, 0.30, 0.50, 0.70],
            fine_tune_epochs: 8,
        }
    }
}

impl SparsitySchedule {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.targets.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return Err(Error::Config(format!("sparsity target {t} outside [0, 1)")));
        }
        if self.targets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "sparsity targets must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Number of weights to zero for target `p` out of `total`.
pub fn prune_count(p: f64, total: usize) -> usize {
    (p * total as f64).round() as usize
}

/// Global magnitude pruning to total sparsity `p`.
///
/// Weights already pruned in `prior` stay pruned and count toward the target.
/// Among the rest, the smallest magnitudes are removed; ties go to the
/// earlier (parameter name, flat index).
pub fn global_magnitude_prune<T: Scalar>(
    params: &ParamStore<T>,
    p: f64,
    prior: Option<&PruningMask>,
) -> Result<PruningMask> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("sparsity {p} outside [0, 1)")));
    }
    if let Some(prior) = prior {
        prior.validate_against(params)?;
    }
    let mut entries: BTreeMap<String, BinaryMask> = params
        .weights()
        .map(|(name, param)| {
            let mask = prior
                .and_then(|m| m.get(name).cloned())
                .unwrap_or_else(|| BinaryMask::ones(param.value().shape()));
            (name.to_string(), mask)
        })
        .collect();

    let total: usize = entries.values().map(|m| m.keep.len()).sum();
    let already: usize = entries.values().map(|m| m.zeros()).sum();
    let target = prune_count(p, total);
    if target < already {
        return Err(Error::invalid(format!(
            "prior mask already prunes {already} weights, more than the {target} requested"
        )));
    }

    // (|w|, tensor order, flat index) for every surviving weight
    let names: Vec<String> = entries.keys().cloned().collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(total - already);
    for (t, name) in names.iter().enumerate() {
        let values = params.value(name)?.data();
        for (i, (&w, &k)) in values.iter().zip(&entries[name].keep).enumerate() {
            if k {
                candidates.push((w.as_f64().abs(), t, i));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, t, i) in candidates.iter().take(target - already) {
        entries.get_mut(&names[t]).expect("present").keep[i] = false;
    }
    Ok(PruningMask {
        entries,
        target_sparsity: p,
    })
}

/// Resets every parameter to its init value and zeroes pruned weights.
pub fn rewind_to_init<T: Scalar>(params: &ParamStore<T>, mask: &PruningMask) -> Result<ParamStore<T>> {
    mask.validate_against(params)?;
    let mut out = params.init_store();
    for (name, param) in out.iter_mut() {
        if let Some(m) = mask.get(name) {
            m.apply(param.value_mut().data_mut());
        }
    }
    Ok(out)
}

/// Zeroes the pruned weights of `params` in place.
pub fn apply_mask<T: Scalar>(params: &mut ParamStore<T>, mask: &PruningMask) -> Result<()> {
    mask.validate_against(params)?;
    for (name, param) in params.iter_mut() {
        if let Some(m) = mask.get(name) {
            m.apply(param.value_mut().data_mut());
        }
    }
    Ok(())
}

/// One model state of a lottery-ticket run.
#[derive(Debug, Clone)]
pub struct LevelOutcome<T> {
    pub target_sparsity: f64,
    /// Measured mask-zero fraction (0 for the dense baseline).
    pub sparsity: f64,
    pub network: Network<T>,
    pub mask: Option<PruningMask>,
    pub accuracy: f64,
    pub log: Option<TrainLog>,
}

/// Dense baseline followed by one prune → rewind → fine-tune → evaluate
/// cycle per cumulative schedule target, each starting from the previous
/// level's fine-tuned weights.
pub fn run_lth_cycle<T: Scalar>(
    dense: &Network<T>,
    train_data: &LabeledDataset,
    test_data: &LabeledDataset,
    schedule: &SparsitySchedule,
    train_cfg: &TrainConfig,
) -> Result<Vec<LevelOutcome<T>>> {
    schedule.validate()?;
    let mut outcomes = vec![LevelOutcome {
        target_sparsity: 0.0,
        sparsity: 0.0,
        network: dense.clone(),
        mask: None,
        accuracy: train::evaluate_accuracy(dense, test_data)?,
        log: None,
    }];
    let mut current = dense.clone();
    let mut prior: Option<PruningMask> = None;
    let cfg = TrainConfig {
        epochs: schedule.fine_tune_epochs,
        ..train_cfg.clone()
    };
    for &p in &schedule.targets {
        let mask = global_magnitude_prune(&current.params, p, prior.as_ref())?;
        let rewound = rewind_to_init(&current.params, &mask)?;
        let mut net = Network::from_params(current.config().clone(), rewound)?;
        let log = train::train(&mut net, train_data, &cfg, Some(&mask))?;
        let accuracy = train::evaluate_accuracy(&net, test_data)?;
        log::info!(
            "sparsity {:.2}: measured {:.4}, accuracy {:.4}",
            p,
            mask.sparsity(),
            accuracy
        );
        outcomes.push(LevelOutcome {
            target_sparsity: p,
            sparsity: mask.sparsity(),
            network: net.clone(),
            mask: Some(mask.clone()),
            accuracy,
            log: Some(log),
        });
        current = net;
        prior = Some(mask);
    }
    Ok(outcomes)
}

/// Builds a store holding one weight tensor per entry; handy for tests and
/// examples that only exercise pruning.
pub fn weight_store<T: Scalar>(tensors: &[(&str, Vec<f64>)]) -> Result<ParamStore<T>> {
    let mut store = ParamStore::new();
    for (name, values) in tensors {
        store.insert(
            name,
            ParamKind::Weight,
            Tensor::from_f64_slice(&[values.len()], values)?,
        )?;
    }
    Ok(store)
}
