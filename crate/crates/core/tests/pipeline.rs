use std::path::Path;

use lottery_lens::harness::output::{parse_plot, read_csv};
use lottery_lens::harness::{self, ExperimentConfig, Layout, StageOutcome};
use lottery_lens::Error;

const TINY: &str = r#"
seed = 3

[dataset]
train_per_class = 6
test_per_class = 3
size = 16

[model]
stem_width = 4
stem_stride = 1
block_widths = [4, 8]
block_strides = [1, 2]

[training]
epochs = 2
batch_size = 16

[pruning]
targets = [0.1]
fine_tune_epochs = 1

[attribution]
ig_steps = 4
export_maps = 2

[metrics]
fractions = [0.0, 0.3, 0.6]
eval_subset = 20

[concepts]
classes = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
rank = 3
patch_size = 8
stride = 4
nmf_max_iters = 50
sobol_samples = 32
top_patches = 2
"#;

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(TINY).unwrap();
    cfg.out_dir = dir.to_path_buf();
    cfg
}

fn stages(cfg: &ExperimentConfig) -> Vec<StageOutcome> {
    vec![
        harness::cmd_train(cfg).unwrap(),
        harness::cmd_prune(cfg).unwrap(),
        harness::cmd_attribute(cfg).unwrap(),
        harness::cmd_evaluate(cfg).unwrap(),
        harness::cmd_concepts(cfg).unwrap(),
        harness::cmd_report(cfg).unwrap(),
    ]
}

#[test]
fn tiny_run_produces_consistent_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let bundle = harness::cmd_run_all(&cfg).unwrap();
    let layout = Layout::new(dir.path());

    assert_eq!(bundle.accuracy.len(), 2);
    assert_eq!(bundle.accuracy[0].0, 0.0);
    assert_eq!(bundle.accuracy[1].0, 0.1);
    assert_eq!(bundle.summary.levels.len(), 2);

    // AOPC rows recompute exactly from the stored curves
    for (level, method, value) in &bundle.aopc {
        let acc: Vec<f64> = bundle
            .road
            .iter()
            .filter(|r| r.0 == *level && &r.1 == method)
            .map(|r| r.3)
            .collect();
        assert_eq!(acc.len(), 3);
        let drops: f64 = acc[1..].iter().map(|a| acc[0] - a).sum();
        assert_eq!(drops / 2.0, *value, "{method} at {level}");
    }
    let methods: Vec<&str> = bundle.aopc.iter().filter(|r| r.0 == 0.0).map(|r| r.1.as_str()).collect();
    assert_eq!(methods, ["vg", "ig", "random"]);

    // plotted points are the CSV values
    let svg = std::fs::read_to_string(layout.plot("accuracy")).unwrap();
    let plotted = parse_plot(&svg).unwrap();
    let points: Vec<(f64, f64)> = bundle.accuracy.iter().map(|r| (r.0, r.2)).collect();
    assert_eq!(plotted[0].points, points);
    let svg = std::fs::read_to_string(layout.plot("gini")).unwrap();
    for s in parse_plot(&svg).unwrap() {
        let rows: Vec<(f64, f64)> = bundle.gini.iter().filter(|r| r.1 == s.name).map(|r| (r.0, r.2)).collect();
        assert_eq!(s.points, rows);
    }

    // every results file carries the config
    let (_, rows) = read_csv(&layout.csv("accuracy")).unwrap();
    assert_eq!(rows.len(), 2);
    let text = std::fs::read_to_string(layout.csv("accuracy")).unwrap();
    assert!(text.starts_with("# config: {"));

    // at least one class is predicted, so at least one concept report exists
    assert!(!bundle.concepts.is_empty());
    let ranked: Vec<usize> = bundle.concepts.iter().filter(|r| r.0 == 0.0 && r.1 == bundle.concepts[0].1).map(|r| r.3).collect();
    assert_eq!(ranked.len(), 3);

    // unchanged inputs skip every stage
    assert!(stages(&cfg).iter().all(|s| *s == StageOutcome::Skipped));

    // a changed attribution setting reruns attribution onwards only
    let mut changed = cfg.clone();
    changed.attribution.ig_steps = 5;
    let outcomes = stages(&changed);
    assert_eq!(&outcomes[..2], [StageOutcome::Skipped, StageOutcome::Skipped]);
    assert_eq!(outcomes[2], StageOutcome::Ran);
    assert_eq!(outcomes[3], StageOutcome::Ran);
}

#[test]
fn missing_upstream_artifact_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    match harness::cmd_attribute(&cfg) {
        Err(Error::MissingArtifact { stage, path }) => {
            assert_eq!(stage, "train");
            assert!(path.ends_with("sparsity_00/checkpoint/model.pxb"), "{path:?}");
        }
        other => panic!("expected a missing artifact error, got {other:?}"),
    }
    assert!(matches!(harness::cmd_report(&cfg), Err(Error::MissingArtifact { stage: "evaluate", .. })));
}

#[test]
fn f64_precision_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.precision = lottery_lens::harness::config::Precision::F64;
    cfg.pruning.targets = vec![];
    cfg.concepts.classes = vec![];
    let bundle = harness::cmd_run_all(&cfg).unwrap();
    assert_eq!(bundle.accuracy.len(), 1);
    assert!(bundle.concepts.is_empty());
}
