use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use safl::harness::{
    fit_loglog_slope, load_mnist_idx, read_idx_images, read_json, read_records_csv, report, run_experiment,
    CellSummary, ExperimentConfig, Manifest, Scenario, CSV_HEADER,
};
use safl::fedopt::RoundKind;
use safl::Error;

fn write(path: &Path, bytes: &[u8]) {
    std::fs::write(path, bytes).unwrap();
}

fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut v = 0x0000_0803u32.to_be_bytes().to_vec();
    for x in [count, rows, cols] {
        v.extend_from_slice(&x.to_be_bytes());
    }
    v.extend_from_slice(pixels);
    v
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut v = 0x0000_0801u32.to_be_bytes().to_vec();
    v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    v.extend_from_slice(labels);
    v
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn small_sconvex(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_overrides(
        Scenario::SconvexRate,
        &["sweep.rounds=[64, 128, 256]".into(), "sweep.seeds=[0, 1, 2]".into()],
    )
    .unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn fit_examples() {
    let xs: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
    let inv: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
    assert!((fit_loglog_slope(&xs, &inv).unwrap().slope + 1.0).abs() <= 1e-9);
    let root: Vec<f64> = xs.iter().map(|x| 3.0 / x.sqrt()).collect();
    assert!((fit_loglog_slope(&xs, &root).unwrap().slope + 0.5).abs() <= 1e-9);
    let flat = fit_loglog_slope(&xs, &vec![2.0; 6]).unwrap();
    assert!(flat.slope.abs() <= 1e-12 && flat.r_squared.abs() <= 1e-12);
    assert!(fit_loglog_slope(&xs, &[1.0, 0.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    assert!(fit_loglog_slope(&[1.0, 2.0], &[1.0, 2.0]).is_err());
}

#[test]
fn idx_fixture_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let mut pixels = vec![0u8; 2 * 784];
    pixels[0] = 17;
    pixels[783] = 255;
    pixels[784 + 100] = 128;
    write(&dir.path().join("img"), &idx_images(2, 28, 28, &pixels));
    write(&dir.path().join("lbl"), &idx_labels(&[3, 9]));
    let data = load_mnist_idx(&dir.path().join("img"), &dir.path().join("lbl")).unwrap();
    assert_eq!((data.len(), data.dim()), (2, 784));
    assert_eq!(data.row(0)[0], 17.0 / 255.0);
    assert_eq!(data.row(0)[783], 1.0);
    assert_eq!(data.row(1)[100], 128.0 / 255.0);
    assert_eq!(data.labels(), &[3, 9]);
}

#[test]
fn idx_errors() {
    let dir = tempfile::tempdir().unwrap();
    let truncated = dir.path().join("trunc");
    let full = idx_images(2, 2, 2, &[1; 8]);
    write(&truncated, &full[..19]);
    match read_idx_images(&truncated) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 19),
        other => panic!("{other:?}"),
    }
    let bad_magic = dir.path().join("magic");
    write(&bad_magic, &idx_labels(&[1, 2]));
    assert!(matches!(read_idx_images(&bad_magic), Err(Error::Format { offset: 0, .. })));
    write(&dir.path().join("img"), &full);
    write(&dir.path().join("lbl"), &idx_labels(&[1, 2, 3]));
    assert!(matches!(load_mnist_idx(&dir.path().join("img"), &dir.path().join("lbl")), Err(Error::Data(_))));
    assert!(matches!(read_idx_images(&dir.path().join("absent")), Err(Error::DatasetNotFound(_))));
}

#[test]
fn config_parsing() {
    let text = "scenario = \"fedavg-bias\"\n[algorithm]\nrounds = 300\n[sweep]\nseeds = [4, 5]\n";
    let cfg = ExperimentConfig::from_toml_str(text, &["population.spread=2.0".into()]).unwrap();
    assert_eq!(cfg.algorithm.rounds, 300);
    assert_eq!(cfg.sweep.seeds, vec![4, 5]);
    assert_eq!(cfg.population.spread, 2.0);
    let bad = ExperimentConfig::from_toml_str("scenario = \"pac\"\n[algorithm]\nbogus = 1\n", &[]);
    assert!(matches!(bad, Err(Error::Config(_))));
    assert!(ExperimentConfig::with_overrides(Scenario::Pac, &["nope.key=1".into()]).is_err());
    assert!(ExperimentConfig::with_overrides(Scenario::Pac, &["learnability.omega=[1.5]".into()]).is_err());
    match ExperimentConfig::load(Path::new("missing.cfg"), &[]) {
        Err(e @ Error::ConfigNotFound(_)) => {
            assert_eq!(e.exit_code(), 2);
            assert!(e.to_string().contains("missing.cfg"));
        }
        other => panic!("{other:?}"),
    }
    let a = ExperimentConfig::defaults(Scenario::SconvexRate);
    let mut b = a.clone();
    b.out_dir = PathBuf::from("elsewhere");
    assert_eq!(a.hash(), b.hash());
    b.population.spread = 2.0;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn experiment_outputs_are_consistent_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let cfg = small_sconvex(&out_a);
    run_experiment(&cfg, 1).unwrap();
    let first = snapshot(&out_a);
    run_experiment(&cfg, 2).unwrap();
    assert_eq!(first, snapshot(&out_a), "1 worker vs 2 workers");
    run_experiment(&cfg, 0).unwrap();
    assert_eq!(first, snapshot(&out_a), "rerun");

    let manifest: Manifest = read_json(&out_a.join("manifest.json")).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash());
    assert_eq!(manifest.cells.len(), 3);
    for cell in &manifest.cells {
        let summary: CellSummary = read_json(&out_a.join("cells").join(cell).join("summary.json")).unwrap();
        assert_eq!(summary.config_hash, cfg.hash());
        for run in &summary.runs {
            let path = out_a.join("cells").join(cell).join(format!("seed-{}.csv", run.seed));
            let text = std::fs::read_to_string(&path).unwrap();
            assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
            let rows = read_records_csv(&path).unwrap();
            // independent reduction of the CSV columns
            let last = rows.last().unwrap();
            assert_eq!(last.kind, RoundKind::Final);
            assert_eq!(Some(last.grad_norm_sq), Some(run.summary.final_grad_norm_sq));
            assert_eq!(last.dist_sq, run.summary.final_dist_sq);
            let min = rows.iter().map(|r| r.grad_norm_sq).fold(f64::INFINITY, f64::min);
            assert_eq!(min, run.summary.min_grad_norm_sq);
            let clients = rows.iter().filter(|r| r.kind == RoundKind::Client).count();
            let servers = rows.iter().filter(|r| r.kind == RoundKind::Server).count();
            assert_eq!((clients, servers), (run.summary.client_rounds, run.summary.server_rounds));
            assert_eq!(clients + servers, run.summary.rounds);
        }
    }
    let rep = report(&out_a).unwrap();
    let consistency = rep.checks.iter().find(|c| c.name.contains("summaries match")).unwrap();
    assert!(consistency.pass, "{}", consistency.detail);
}

#[test]
fn missing_mnist_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mnist");
    let mut cfg = ExperimentConfig::defaults(Scenario::MnistLr);
    cfg.out_dir = out.clone();
    cfg.data.train_images = Some(dir.path().join("train-images-idx3-ubyte"));
    cfg.data.train_labels = Some(dir.path().join("train-labels-idx1-ubyte"));
    let err = run_experiment(&cfg, 1).unwrap_err();
    assert!(matches!(err, Error::DatasetNotFound(_)), "{err:?}");
    assert_ne!(err.exit_code(), 0);
    assert!(!out.exists());
}

#[test]
fn mnist_pipeline_on_synthetic_idx() {
    let dir = tempfile::tempdir().unwrap();
    let n = 400usize;
    let side = 4usize;
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let pixels: Vec<u8> = (0..n)
        .flat_map(|i| (0..side * side).map(move |j| if j == i % 10 { 200 } else { ((i * 7 + j * 13) % 50) as u8 }))
        .collect();
    write(&dir.path().join("img"), &idx_images(n as u32, side as u32, side as u32, &pixels));
    write(&dir.path().join("lbl"), &idx_labels(&labels));
    let mut cfg = ExperimentConfig::with_overrides(
        Scenario::MnistLr,
        &["algorithm.rounds=5".into(), "sweep.n_t=[50]".into()],
    )
    .unwrap();
    cfg.out_dir = dir.path().join("out");
    cfg.data.train_images = Some(dir.path().join("img"));
    cfg.data.train_labels = Some(dir.path().join("lbl"));
    let out = run_experiment(&cfg, 1).unwrap();
    assert_eq!(out.manifest.cells.len(), 4);
    for cell in &out.manifest.cells {
        let summary: CellSummary = read_json(&cfg.out_dir.join("cells").join(cell).join("summary.json")).unwrap();
        for run in &summary.runs {
            let acc = run.test_accuracy.unwrap();
            assert!((0.0..=1.0).contains(&acc));
        }
    }
}

#[test]
fn learnability_scenarios_write_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::with_overrides(
        Scenario::Impossibility,
        &["learnability.trials=1000".into(), "learnability.omega=[0.5]".into(), "learnability.samples=[20]".into()],
    )
    .unwrap();
    cfg.out_dir = dir.path().join("imp");
    let out = run_experiment(&cfg, 1).unwrap();
    assert_eq!(out.manifest.config_hash, cfg.hash());
    assert!(cfg.out_dir.join("manifest.json").exists());
    let rep = report(&cfg.out_dir).unwrap();
    assert!(!rep.checks.is_empty());
}

#[test]
fn shipped_configs_match_scenario_defaults() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let mut cfg = ExperimentConfig::load(&path, &[]).unwrap();
        let defaults = ExperimentConfig::defaults(cfg.scenario);
        assert_eq!(path.file_stem().unwrap().to_str().unwrap(), cfg.scenario.as_str());
        cfg.data = defaults.data.clone();
        assert_eq!(cfg, defaults, "{}", path.display());
        seen += 1;
    }
    assert_eq!(seen, 8);
}
