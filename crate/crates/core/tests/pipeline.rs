use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pais::harness::{load_csv, preprocess, run_experiment, write_outputs, DataSource, ExperimentConfig, SyntheticSpec};
use pais::sampler::SamplerFamily;

#[test]
fn loads_a_large_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..49_990 {
        let row: Vec<String> = (0..22).map(|_| format!("{}", rng.random_range(-1.0..1.0))).collect();
        writeln!(f, "{}", row.join(",")).unwrap();
    }
    drop(f);
    let pts = load_csv(&path).unwrap();
    assert_eq!(pts.len(), 49_990);
    assert!(pts.iter().all(|p| p.dim() == 22));
    let (data, stats) = preprocess(&pts, 0.025).unwrap();
    assert_eq!(data.len(), 49_990 - 1249);
    assert_eq!(stats.n, data.len());
}

fn small_config(seed: u64) -> ExperimentConfig {
    let spec = SyntheticSpec {
        n: 400,
        d: 3,
        k_true: 3,
        spread: 0.2,
    };
    let mut cfg = ExperimentConfig::new(DataSource::Synthetic(spec), vec![80]);
    cfg.k = 3;
    cfg.iterations = 4;
    cfg.b_list = vec![0.1, 1.0];
    cfg.repetitions = 3;
    cfg.families = vec![
        SamplerFamily::Full,
        SamplerFamily::Uniform,
        SamplerFamily::Coreset,
        SamplerFamily::Optimal,
    ];
    cfg.seed = seed;
    cfg
}

#[test]
fn same_config_same_records() {
    let a = run_experiment(&small_config(5)).unwrap();
    let b = run_experiment(&small_config(5)).unwrap();
    assert!(a.failures.is_empty());
    assert_eq!(a.records.len(), 4 * 2 * 3);
    assert_eq!(a.records.len(), b.records.len());
    assert!(a.records.iter().zip(&b.records).all(|(x, y)| x.same_outcome(y)));

    let c = run_experiment(&small_config(6)).unwrap();
    assert!(!a.records.iter().zip(&c.records).all(|(x, y)| x.same_outcome(y)));
}

#[test]
fn epsilon_does_not_depend_on_the_run() {
    let out = run_experiment(&small_config(5)).unwrap();
    for r in &out.records {
        let first = out
            .records
            .iter()
            .find(|o| o.family == r.family && o.b == r.b && o.m == r.m)
            .unwrap();
        assert_eq!(r.epsilon.to_bits(), first.epsilon.to_bits());
    }
}

#[test]
fn writes_all_outputs() {
    let cfg = small_config(2);
    let out = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.csv");
    let rows = write_outputs(&path, &cfg, &out).unwrap();
    assert_eq!(rows.len(), 8);
    let summary = std::fs::read_to_string(&path).unwrap();
    assert_eq!(summary.lines().count(), 9);
    assert!(dir.path().join("summary.csv.runs.csv").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.csv.meta.json")).unwrap()).unwrap();
    assert!(meta.get("config").is_some());
}
