use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DatasetKind, ExperimentConfig, Precision};
use super::output::{fmt_f64, line_plot, read_csv, write_csv, Series};
use crate::attribution::{self, AttributionMap, AttributionSettings, Baseline, BaselineKind, Method};
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::concepts::{self, NmfConfig};
use crate::data::{self, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{self, NeighborImputer};
use crate::model::Network;
use crate::pruning;
use crate::tensor::Scalar;
use crate::train;

/// Whether a stage did work or found its outputs current.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

/// Deterministic output layout under the experiment's `out_dir`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn level_name(sparsity: f64) -> String {
        format!("sparsity_{:02}", (sparsity * 100.0).round() as u32)
    }

    pub fn level_dir(&self, sparsity: f64) -> PathBuf {
        self.root.join(Self::level_name(sparsity))
    }

    pub fn checkpoint(&self, sparsity: f64) -> PathBuf {
        self.level_dir(sparsity).join("checkpoint").join("model.pxb")
    }

    pub fn attribution(&self, sparsity: f64, method: Method) -> PathBuf {
        self.level_dir(sparsity).join("attrib").join(format!("{method}.pxb"))
    }

    pub fn level_metrics(&self, sparsity: f64) -> PathBuf {
        self.level_dir(sparsity).join("metrics").join("metrics.json")
    }

    pub fn concepts(&self, sparsity: f64, class: usize) -> PathBuf {
        self.level_dir(sparsity).join("concepts").join(format!("class_{class}"))
    }

    pub fn csv(&self, name: &str) -> PathBuf {
        self.root.join(format!("{name}.csv"))
    }

    pub fn plot(&self, name: &str) -> PathBuf {
        self.root.join("plots").join(format!("{name}.svg"))
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    fn stamp(&self, stage: &str) -> PathBuf {
        self.root.join("stamps").join(format!("{stage}.sha256"))
    }
}

/// Target sparsities of all levels, dense first.
pub fn levels(cfg: &ExperimentConfig) -> Vec<f64> {
    std::iter::once(0.0).chain(cfg.pruning.targets.iter().copied()).collect()
}

/// Train and test splits described by the config.
pub fn datasets(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let d = &cfg.dataset;
    let (train, test) = match d.kind {
        DatasetKind::Shapes => (
            data::generate_shapes(cfg.seed.wrapping_add(2), d.train_per_class, d.size)?,
            data::generate_shapes(cfg.seed.wrapping_add(3), d.test_per_class, d.size)?,
        ),
        DatasetKind::Planted => (
            data::generate_planted(
                cfg.seed.wrapping_add(2),
                d.train_per_class,
                d.size,
                d.planted_patch,
                d.num_classes,
            )?,
            data::generate_planted(
                cfg.seed.wrapping_add(3),
                d.test_per_class,
                d.size,
                d.planted_patch,
                d.num_classes,
            )?,
        ),
        DatasetKind::Cifar => {
            let load = |files: &[PathBuf], split| -> Result<LabeledDataset> {
                let parts = files
                    .iter()
                    .map(|f| data::load_cifar_binary(f, split))
                    .collect::<Result<Vec<_>>>()?;
                LabeledDataset::concat(parts)
            };
            (load(&d.train_files, Split::Train)?, load(&d.test_files, Split::Test)?)
        }
    };
    Ok((train, test.with_split(Split::Test)))
}

/// The first `eval_subset` test images (classes are interleaved).
pub fn eval_subset(cfg: &ExperimentConfig, test: &LabeledDataset) -> LabeledDataset {
    test.head(cfg.metrics.eval_subset.min(test.len()))
}

fn hash_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("config sections serialize")
}

fn read(path: &Path, stage: &'static str) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        });
    }
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs `body` unless the stage's stamp matches `hash` and all `outputs`
/// exist; records the stamp afterwards.
fn guarded(
    layout: &Layout,
    stage: &str,
    hash: &str,
    outputs: &[PathBuf],
    body: impl FnOnce() -> Result<()>,
) -> Result<StageOutcome> {
    let stamp = layout.stamp(stage);
    let current = std::fs::read_to_string(&stamp).ok();
    if current.as_deref() == Some(hash) && outputs.iter().all(|p| p.exists()) {
        log::info!("{stage}: inputs unchanged (sha256 {}), skipping", &hash[..12]);
        return Ok(StageOutcome::Skipped);
    }
    log::info!("{stage}: running");
    // A stale stamp must not survive a failed run.
    let _ = std::fs::remove_file(&stamp);
    body()?;
    write_file(&stamp, hash.as_bytes())?;
    Ok(StageOutcome::Ran)
}

fn write_config_copy(cfg: &ExperimentConfig) -> Result<()> {
    write_file(&cfg.out_dir.join("config.toml"), cfg.to_toml()?.as_bytes())
}

fn load_network<T: Scalar>(cfg: &ExperimentConfig, path: &Path, stage: &'static str) -> Result<(Network<T>, CheckpointMeta)> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        });
    }
    let ck = Checkpoint::<T>::load(path)?;
    let net = Network::from_params(cfg.model_config(), ck.params)?;
    Ok((net, ck.meta))
}

fn checkpoint_bytes(cfg: &ExperimentConfig, layout: &Layout) -> Result<Vec<Vec<u8>>> {
    levels(cfg)
        .iter()
        .map(|&p| {
            let stage = if p == 0.0 { "train" } else { "prune" };
            read(&layout.checkpoint(p), stage)
        })
        .collect()
}

macro_rules! dispatch {
    ($cfg:expr, $f:ident) => {
        match $cfg.precision {
            Precision::F32 => $f::<f32>($cfg),
            Precision::F64 => $f::<f64>($cfg),
        }
    };
}

/// Trains the dense network and writes its checkpoint.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    dispatch!(cfg, train_stage)
}

fn train_stage<T: Scalar>(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    write_config_copy(cfg)?;
    let layout = Layout::new(&cfg.out_dir);
    let hash = hash_parts(&[
        b"train",
        &json(&cfg.seed),
        &json(&cfg.precision),
        &json(&cfg.dataset),
        &json(&cfg.model),
        &json(&cfg.training),
    ]);
    let out = layout.checkpoint(0.0);
    guarded(&layout, "train", &hash, &[out.clone()], || {
        let (train_data, test_data) = datasets(cfg)?;
        let mut net = Network::<T>::new(cfg.model_config())?;
        let tc = cfg.train_config();
        train::train(&mut net, &train_data, &tc, None)?;
        let accuracy = train::evaluate_accuracy(&net, &test_data)?;
        log::info!("dense accuracy {accuracy:.4}");
        create_parent(&out)?;
        Checkpoint {
            params: net.params,
            mask: None,
            meta: CheckpointMeta {
                model: cfg.model_config(),
                epochs: tc.epochs,
                seed: cfg.seed,
                final_accuracy: accuracy,
                target_sparsity: 0.0,
                measured_sparsity: 0.0,
            },
        }
        .save(&out)
    })
}

/// Iterative prune, rewind and fine-tune; one checkpoint per level.
pub fn cmd_prune(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    dispatch!(cfg, prune_stage)
}

fn prune_stage<T: Scalar>(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    write_config_copy(cfg)?;
    let layout = Layout::new(&cfg.out_dir);
    let dense_path = layout.checkpoint(0.0);
    let dense_bytes = read(&dense_path, "train")?;
    let hash = hash_parts(&[
        b"prune",
        &dense_bytes,
        &json(&cfg.dataset),
        &json(&cfg.training),
        &json(&cfg.pruning),
        &json(&cfg.seed),
    ]);
    let outputs: Vec<PathBuf> = cfg.pruning.targets.iter().map(|&p| layout.checkpoint(p)).collect();
    guarded(&layout, "prune", &hash, &outputs, || {
        let (dense, _) = load_network::<T>(cfg, &dense_path, "train")?;
        let (train_data, test_data) = datasets(cfg)?;
        let outcomes =
            pruning::run_lth_cycle(&dense, &train_data, &test_data, &cfg.pruning, &cfg.train_config())?;
        for o in outcomes.into_iter().skip(1) {
            let path = layout.checkpoint(o.target_sparsity);
            create_parent(&path)?;
            Checkpoint {
                params: o.network.params,
                mask: o.mask,
                meta: CheckpointMeta {
                    model: cfg.model_config(),
                    epochs: cfg.pruning.fine_tune_epochs,
                    seed: cfg.seed,
                    final_accuracy: o.accuracy,
                    target_sparsity: o.target_sparsity,
                    measured_sparsity: o.sparsity,
                },
            }
            .save(&path)?;
        }
        Ok(())
    })
}

fn baseline(cfg: &ExperimentConfig, train_data: &LabeledDataset) -> Baseline {
    let dims = train_data.dims();
    match cfg.attribution.baseline {
        BaselineKind::Zero => Baseline::zero(dims),
        BaselineKind::DatasetMean => Baseline::dataset_mean(train_data),
        BaselineKind::Constant => Baseline::constant(dims, cfg.attribution.baseline_value),
    }
}

/// Saliency maps for the evaluation subset at every level.
pub fn cmd_attribute(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    dispatch!(cfg, attribute_stage)
}

fn attribute_stage<T: Scalar>(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    write_config_copy(cfg)?;
    let layout = Layout::new(&cfg.out_dir);
    let ckpts = checkpoint_bytes(cfg, &layout)?;
    let mut parts: Vec<&[u8]> = vec![b"attribute"];
    parts.extend(ckpts.iter().map(|c| c.as_slice()));
    let settings = json(&cfg.attribution);
    let data_cfg = json(&cfg.dataset);
    let subset = json(&cfg.metrics.eval_subset);
    let seed = json(&cfg.seed);
    parts.extend([settings.as_slice(), &data_cfg, &subset, &seed]);
    let hash = hash_parts(&parts);
    let mut outputs = Vec::new();
    for &p in &levels(cfg) {
        for &m in &cfg.attribution.methods {
            outputs.push(layout.attribution(p, m));
        }
    }
    guarded(&layout, "attribute", &hash, &outputs, || {
        let (train_data, test_data) = datasets(cfg)?;
        let eval = eval_subset(cfg, &test_data);
        let base = baseline(cfg, &train_data);
        for &p in &levels(cfg) {
            let (net, _) = load_network::<T>(cfg, &layout.checkpoint(p), "prune")?;
            for &method in &cfg.attribution.methods {
                let settings = AttributionSettings {
                    method,
                    ig_steps: cfg.attribution.ig_steps,
                    baseline: base.clone(),
                    opts: cfg.attribution.options(),
                };
                let maps = attribution::attribute_dataset(&net, &eval, &settings)?;
                let path = layout.attribution(p, method);
                create_parent(&path)?;
                attribution::save_maps(&path, &maps)?;
                for (i, m) in maps.iter().take(cfg.attribution.export_maps).enumerate() {
                    m.write_pgm(&path.with_file_name(format!("{method}_{i}.pgm")))?;
                }
                log::info!("{}: {} {} maps", Layout::level_name(p), maps.len(), method);
            }
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub gini_mean: f64,
    pub gini_std: f64,
    /// Maps with a defined Gini index (non-zero attribution).
    pub gini_count: usize,
    pub fractions: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub aopc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub sparsity_level: f64,
    pub measured_sparsity: f64,
    pub accuracy: f64,
    pub methods: Vec<MethodMetrics>,
}

fn control_maps(eval: &LabeledDataset, seed: u64) -> Vec<AttributionMap> {
    (0..eval.len())
        .map(|i| AttributionMap::random(eval.dims(), eval.label(i), seed.wrapping_add(i as u64)))
        .collect()
}

/// Gini, ROAD curves and AOPC for every level and method; writes the CSVs.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    dispatch!(cfg, evaluate_stage)
}

fn evaluate_stage<T: Scalar>(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    write_config_copy(cfg)?;
    let layout = Layout::new(&cfg.out_dir);
    let mut owned = checkpoint_bytes(cfg, &layout)?;
    for &p in &levels(cfg) {
        for &m in &cfg.attribution.methods {
            owned.push(read(&layout.attribution(p, m), "attribute")?);
        }
    }
    let mut parts: Vec<&[u8]> = vec![b"evaluate"];
    parts.extend(owned.iter().map(|c| c.as_slice()));
    let metrics_cfg = json(&cfg.metrics);
    let data_cfg = json(&cfg.dataset);
    let full = cfg.to_json();
    parts.extend([metrics_cfg.as_slice(), &data_cfg, full.as_bytes()]);
    let hash = hash_parts(&parts);
    let mut outputs: Vec<PathBuf> = ["accuracy", "gini", "road_curves", "aopc"]
        .iter()
        .map(|n| layout.csv(n))
        .collect();
    outputs.extend(levels(cfg).iter().map(|&p| layout.level_metrics(p)));
    guarded(&layout, "evaluate", &hash, &outputs, || {
        let (_, test_data) = datasets(cfg)?;
        let eval = eval_subset(cfg, &test_data);
        let imputer = NeighborImputer {
            tol: cfg.metrics.imputer_tol,
            max_sweeps: cfg.metrics.imputer_max_sweeps,
        };
        let mut all = Vec::new();
        for &p in &levels(cfg) {
            let (net, meta) = load_network::<T>(cfg, &layout.checkpoint(p), "prune")?;
            let accuracy = train::evaluate_accuracy(&net, &test_data)?;
            let mut methods: Vec<(Method, Vec<AttributionMap>)> = Vec::new();
            for &m in &cfg.attribution.methods {
                methods.push((m, attribution::load_maps(&layout.attribution(p, m))?));
            }
            if cfg.metrics.random_control {
                methods.push((Method::Random, control_maps(&eval, cfg.seed.wrapping_add(4))));
            }
            let mut scored = Vec::new();
            for (method, maps) in methods {
                let ginis: Vec<f64> = maps
                    .iter()
                    .filter_map(|m| metrics::gini_map(m).ok().map(|g| g.value))
                    .collect();
                if ginis.len() < maps.len() {
                    log::warn!(
                        "{} {method}: {} all-zero maps excluded from Gini",
                        Layout::level_name(p),
                        maps.len() - ginis.len()
                    );
                }
                let (gini_mean, gini_std) = metrics::mean_std(&ginis);
                let curve = metrics::road_morf(&net, &eval, &maps, &cfg.metrics.fractions, &imputer)?;
                let aopc = metrics::aopc(&curve)?.value;
                log::info!(
                    "{} {method}: gini {gini_mean:.4} aopc {aopc:.4}",
                    Layout::level_name(p)
                );
                scored.push(MethodMetrics {
                    method,
                    gini_mean,
                    gini_std,
                    gini_count: ginis.len(),
                    fractions: curve.fractions,
                    accuracies: curve.accuracies,
                    aopc,
                });
            }
            let lm = LevelMetrics {
                sparsity_level: p,
                measured_sparsity: meta.measured_sparsity,
                accuracy,
                methods: scored,
            };
            write_file(&layout.level_metrics(p), serde_json::to_string_pretty(&lm)?.as_bytes())?;
            all.push(lm);
        }
        write_metric_csvs(cfg, &layout, &all)
    })
}

fn write_metric_csvs(cfg: &ExperimentConfig, layout: &Layout, all: &[LevelMetrics]) -> Result<()> {
    let prov = cfg.to_json();
    let mut acc = Vec::new();
    let mut gini = Vec::new();
    let mut road = Vec::new();
    let mut aopc = Vec::new();
    for lm in all {
        let level = fmt_f64(lm.sparsity_level);
        acc.push(vec![level.clone(), fmt_f64(lm.measured_sparsity), fmt_f64(lm.accuracy)]);
        for m in &lm.methods {
            let name = m.method.to_string();
            gini.push(vec![
                level.clone(),
                name.clone(),
                fmt_f64(m.gini_mean),
                fmt_f64(m.gini_std),
                m.gini_count.to_string(),
            ]);
            for (f, a) in m.fractions.iter().zip(&m.accuracies) {
                road.push(vec![level.clone(), name.clone(), fmt_f64(*f), fmt_f64(*a)]);
            }
            aopc.push(vec![level.clone(), name, fmt_f64(m.aopc)]);
        }
    }
    write_csv(&layout.csv("accuracy"), &prov, &["sparsity_level", "measured_sparsity", "accuracy"], &acc)?;
    write_csv(
        &layout.csv("gini"),
        &prov,
        &["sparsity_level", "method", "gini_mean", "gini_std", "n"],
        &gini,
    )?;
    write_csv(
        &layout.csv("road_curves"),
        &prov,
        &["sparsity_level", "method", "fraction", "accuracy"],
        &road,
    )?;
    write_csv(&layout.csv("aopc"), &prov, &["sparsity_level", "method", "aopc"], &aopc)
}

/// Concept banks and Sobol rankings for the configured classes and levels.
pub fn cmd_concepts(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    dispatch!(cfg, concepts_stage)
}

fn concepts_stage<T: Scalar>(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    write_config_copy(cfg)?;
    let layout = Layout::new(&cfg.out_dir);
    let ckpts = checkpoint_bytes(cfg, &layout)?;
    let mut parts: Vec<&[u8]> = vec![b"concepts"];
    parts.extend(ckpts.iter().map(|c| c.as_slice()));
    let concepts_cfg = json(&cfg.concepts);
    let data_cfg = json(&cfg.dataset);
    let full = cfg.to_json();
    parts.extend([concepts_cfg.as_slice(), &data_cfg, full.as_bytes()]);
    let hash = hash_parts(&parts);
    let mut outputs = vec![layout.csv("concepts")];
    for &p in &levels(cfg) {
        for &c in &cfg.concepts.classes {
            outputs.push(layout.concepts(p, c));
        }
    }
    guarded(&layout, "concepts", &hash, &outputs, || {
        let (_, test_data) = datasets(cfg)?;
        let eval = eval_subset(cfg, &test_data);
        let cc = &cfg.concepts;
        let mut rows = Vec::new();
        for &p in &levels(cfg) {
            let (net, _) = load_network::<T>(cfg, &layout.checkpoint(p), "prune")?;
            for &class in &cc.classes {
                let dir = layout.concepts(p, class);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let patches = match concepts::extract_patches(&net, &eval, class, cc.patch_size, cc.stride) {
                    Ok(ps) => ps,
                    Err(e @ Error::EmptyClass { .. }) => {
                        log::warn!("{} class {class}: {e}", Layout::level_name(p));
                        let note = serde_json::json!({ "class": class, "skipped": e.to_string() });
                        write_file(&dir.join("concepts.json"), serde_json::to_string_pretty(&note)?.as_bytes())?;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let acts = concepts::activations(&net, &patches)?;
                let (n, d) = acts.data.dim();
                let rank = cc.rank.min(n).min(d);
                if rank < cc.rank {
                    log::warn!("class {class}: rank reduced to {rank} for a {n}x{d} activation matrix");
                }
                let bank = concepts::nmf(
                    &acts.data,
                    &NmfConfig {
                        rank,
                        max_iters: cc.nmf_max_iters,
                        tol: cc.nmf_tol,
                        seed: cfg.seed.wrapping_add(5),
                    },
                )?;
                let importance = concepts::sobol_importance(
                    concepts::class_head(&net, class),
                    &bank.u,
                    &bank.w,
                    cc.sobol_samples,
                    cfg.seed.wrapping_add(6),
                    cc.order,
                )?;
                let report = concepts::rank_and_export(&bank, &importance, &patches, cc.top_patches)?;
                report.write(&dir, &patches)?;
                for (pos, e) in report.concepts.iter().enumerate() {
                    rows.push(vec![
                        fmt_f64(p),
                        class.to_string(),
                        pos.to_string(),
                        e.concept.to_string(),
                        fmt_f64(e.importance),
                        fmt_f64(e.std_error),
                    ]);
                }
            }
        }
        write_csv(
            &layout.csv("concepts"),
            &cfg.to_json(),
            &["sparsity_level", "class", "position", "concept", "importance", "std_error"],
            &rows,
        )
    })
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Format(format!("expected a number, found {s:?}")))
}

fn load_table(layout: &Layout, name: &str, stage: &'static str) -> Result<Vec<Vec<String>>> {
    let path = layout.csv(name);
    if !path.exists() {
        return Err(Error::MissingArtifact { path, stage });
    }
    Ok(read_csv(&path)?.1)
}

/// Series keyed by the `key` column, points from the `x`/`y` columns, in
/// first-appearance order.
fn series_by(rows: &[Vec<String>], key: usize, x: usize, y: usize, filter: impl Fn(&[String]) -> bool) -> Result<Vec<Series>> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows.iter().filter(|r| filter(r)) {
        let point = (parse_f64(&r[x])?, parse_f64(&r[y])?);
        match out.iter_mut().find(|s| s.name == r[key]) {
            Some(s) => s.points.push(point),
            None => out.push(Series {
                name: r[key].clone(),
                points: vec![point],
            }),
        }
    }
    Ok(out)
}

/// SVG plots and `summary.json` from the metric CSVs.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    write_config_copy(cfg)?;
    let layout = Layout::new(&cfg.out_dir);
    let names = ["accuracy", "gini", "road_curves", "aopc", "concepts"];
    let mut owned = Vec::new();
    for n in names {
        let stage = if n == "concepts" { "concepts" } else { "evaluate" };
        owned.push(read(&layout.csv(n), stage)?);
    }
    let mut parts: Vec<&[u8]> = vec![b"report"];
    parts.extend(owned.iter().map(|c| c.as_slice()));
    let hash = hash_parts(&parts);
    let mut outputs = vec![
        layout.summary(),
        layout.plot("accuracy"),
        layout.plot("gini"),
        layout.plot("aopc"),
    ];
    outputs.extend(levels(cfg).iter().map(|&p| layout.plot(&format!("road_{}", Layout::level_name(p)))));
    guarded(&layout, "report", &hash, &outputs, || {
        let acc = load_table(&layout, "accuracy", "evaluate")?;
        let gini = load_table(&layout, "gini", "evaluate")?;
        let road = load_table(&layout, "road_curves", "evaluate")?;
        let aopc = load_table(&layout, "aopc", "evaluate")?;
        let concepts_rows = load_table(&layout, "concepts", "concepts")?;

        let mut acc_series = series_by(&acc, 0, 0, 2, |_| true)?;
        let acc_points = acc_series.iter_mut().flat_map(|s| s.points.drain(..)).collect();
        let plots = [
            (
                "accuracy",
                line_plot(
                    "Test accuracy vs sparsity",
                    "sparsity",
                    "accuracy",
                    &[Series {
                        name: "accuracy".into(),
                        points: acc_points,
                    }],
                ),
            ),
            (
                "gini",
                line_plot("Saliency Gini vs sparsity", "sparsity", "mean Gini", &series_by(&gini, 1, 0, 2, |_| true)?),
            ),
            (
                "aopc",
                line_plot("ROAD AOPC vs sparsity", "sparsity", "AOPC", &series_by(&aopc, 1, 0, 2, |_| true)?),
            ),
        ];
        for (name, svg) in plots {
            write_file(&layout.plot(name), svg.as_bytes())?;
        }
        for &p in &levels(cfg) {
            let level = fmt_f64(p);
            let curves = series_by(&road, 1, 2, 3, |r| r[0] == level)?;
            let title = format!("ROAD MoRF curves, sparsity {level}");
            write_file(
                &layout.plot(&format!("road_{}", Layout::level_name(p))),
                line_plot(&title, "fraction removed", "accuracy", &curves).as_bytes(),
            )?;
        }

        let summary = build_summary(cfg, &acc, &gini, &aopc, &concepts_rows)?;
        write_file(&layout.summary(), serde_json::to_string_pretty(&summary)?.as_bytes())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniSummary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub sparsity_level: f64,
    pub measured_sparsity: f64,
    pub accuracy: f64,
    pub gini: BTreeMap<String, GiniSummary>,
    pub aopc: BTreeMap<String, f64>,
    /// Concept ids in importance order, per class.
    pub concept_ranking: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub levels: Vec<LevelSummary>,
}

fn build_summary(
    cfg: &ExperimentConfig,
    acc: &[Vec<String>],
    gini: &[Vec<String>],
    aopc: &[Vec<String>],
    concepts_rows: &[Vec<String>],
) -> Result<Summary> {
    let mut levels_out = Vec::new();
    for r in acc {
        let level = &r[0];
        let mut ls = LevelSummary {
            sparsity_level: parse_f64(level)?,
            measured_sparsity: parse_f64(&r[1])?,
            accuracy: parse_f64(&r[2])?,
            gini: BTreeMap::new(),
            aopc: BTreeMap::new(),
            concept_ranking: BTreeMap::new(),
        };
        for g in gini.iter().filter(|g| &g[0] == level) {
            ls.gini.insert(
                g[1].clone(),
                GiniSummary {
                    mean: parse_f64(&g[2])?,
                    std: parse_f64(&g[3])?,
                },
            );
        }
        for a in aopc.iter().filter(|a| &a[0] == level) {
            ls.aopc.insert(a[1].clone(), parse_f64(&a[2])?);
        }
        for c in concepts_rows.iter().filter(|c| &c[0] == level) {
            let id = c[3]
                .parse()
                .map_err(|_| Error::Format(format!("bad concept id {:?}", c[3])))?;
            ls.concept_ranking.entry(c[1].clone()).or_default().push(id);
        }
        levels_out.push(ls);
    }
    Ok(Summary {
        config: cfg.clone(),
        levels: levels_out,
    })
}

/// Rows of the emitted result tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsBundle {
    pub accuracy: Vec<(f64, f64, f64)>,
    pub gini: Vec<(f64, String, f64, f64)>,
    pub road: Vec<(f64, String, f64, f64)>,
    pub aopc: Vec<(f64, String, f64)>,
    pub concepts: Vec<(f64, usize, usize, usize, f64, f64)>,
    pub summary: Summary,
}

impl ResultsBundle {
    pub fn load(out_dir: &Path) -> Result<Self> {
        let layout = Layout::new(out_dir);
        let t = |n| load_table(&layout, n, "run-all");
        let num = |s: &String| parse_f64(s);
        let int = |s: &String| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("expected an integer, found {s:?}")))
        };
        let summary_path = layout.summary();
        let summary: Summary = serde_json::from_slice(&read(&summary_path, "report")?)?;
        Ok(ResultsBundle {
            accuracy: t("accuracy")?
                .iter()
                .map(|r| Ok((num(&r[0])?, num(&r[1])?, num(&r[2])?)))
                .collect::<Result<_>>()?,
            gini: t("gini")?
                .iter()
                .map(|r| Ok((num(&r[0])?, r[1].clone(), num(&r[2])?, num(&r[3])?)))
                .collect::<Result<_>>()?,
            road: t("road_curves")?
                .iter()
                .map(|r| Ok((num(&r[0])?, r[1].clone(), num(&r[2])?, num(&r[3])?)))
                .collect::<Result<_>>()?,
            aopc: t("aopc")?
                .iter()
                .map(|r| Ok((num(&r[0])?, r[1].clone(), num(&r[2])?)))
                .collect::<Result<_>>()?,
            concepts: t("concepts")?
                .iter()
                .map(|r| Ok((num(&r[0])?, int(&r[1])?, int(&r[2])?, int(&r[3])?, num(&r[4])?, num(&r[5])?)))
                .collect::<Result<_>>()?,
            summary,
        })
    }
}

/// Every stage in order; returns the loaded results.
pub fn cmd_run_all(cfg: &ExperimentConfig) -> Result<ResultsBundle> {
    cmd_train(cfg)?;
    cmd_prune(cfg)?;
    cmd_attribute(cfg)?;
    cmd_evaluate(cfg)?;
    cmd_concepts(cfg)?;
    cmd_report(cfg)?;
    ResultsBundle::load(&cfg.out_dir)
}
