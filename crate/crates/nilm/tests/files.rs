use nilm::files::{read_checkpoint, read_dataset, read_report, write_checkpoint, write_dataset, write_report, DatasetSidecar, curves_csv};
use nilm_core::model::{ModelKind, ModelSpec, Network};
use nilm_core::sparse::EvolutionPolicy;
use nilm_core::synthesis::{synthesize, WindowMatrix, WindowParams};
use nilm_core::train::{prepare, train, TrainConfig};
use nilm_core::{Matrix, Mode};

fn small_dataset(n: usize) -> nilm_core::synthesis::SyntheticDataset {
    let ms: [WindowMatrix; 4] = std::array::from_fn(|i| {
        let rows: Vec<Vec<f64>> = (0..3).map(|r| (0..30).map(|t| ((t * (i + 2) + r) % 7) as f64 * 0.1 + i as f64).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|v| v.as_slice()).collect();
        WindowMatrix::from_rows(i as u8, 30, &refs).unwrap()
    });
    let mut ds = synthesize(&ms, n, 4).unwrap();
    ds.split(0.8, 4).unwrap();
    ds
}

fn sidecar(ds: &nilm_core::synthesis::SyntheticDataset) -> DatasetSidecar {
    DatasetSidecar {
        seed: ds.seed,
        repetitions: ds.len(),
        window: WindowParams { window_len: 30, step: 5, active_threshold: 3 },
        max_gap_secs: 30,
        num_valid: [3; 4],
        split: ds.split,
    }
}

#[test]
fn dataset_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(50);
    write_dataset(dir.path(), &ds, &sidecar(&ds)).unwrap();
    let (back, side) = read_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(side, sidecar(&ds));
    let features = std::fs::read_to_string(dir.path().join("features.csv")).unwrap();
    assert_eq!(features.lines().count(), 50);
    assert!(features.lines().all(|l| l.split(',').count() == 30));
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert!(labels.lines().all(|l| l.split(',').count() == 4));
}

#[test]
fn corrupt_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(10);
    write_dataset(dir.path(), &ds, &sidecar(&ds)).unwrap();
    std::fs::write(dir.path().join("labels.csv"), "0,1,0,2\n").unwrap();
    assert!(read_dataset(dir.path()).is_err());
    std::fs::remove_file(dir.path().join("features.csv")).unwrap();
    assert!(read_dataset(dir.path()).unwrap_err().to_string().contains("features.csv"));
}

#[test]
fn checkpoints_and_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(40);
    let (tr, te, _) = prepare(&ds).unwrap();
    for kind in ModelKind::ALL {
        let mut spec = ModelSpec::new(kind, true);
        spec.input_len = 30;
        spec.hidden_sizes = [8, 6];
        spec.epsilon = 1.5;
        if let Some(c) = spec.conv.as_mut() {
            c.kernel_len = 5;
            c.num_filters = 2;
            c.pool_len = 2;
        }
        if let Some(r) = spec.rnn.as_mut() {
            r.chunk_len = 5;
            r.hidden_state_dim = 4;
        }
        let mut net = Network::build(&spec, 1).unwrap();
        let cfg = TrainConfig { epochs: 2, batch_size: 8, evolution: Some(EvolutionPolicy::default()), ..TrainConfig::default() };
        let report = train(&mut net, &tr, &te, &cfg, |_| {}).unwrap();

        let path = dir.path().join("net.json");
        write_checkpoint(&path, &net).unwrap();
        let mut back = read_checkpoint(&path).unwrap();
        let x = Matrix::from_vec(1, 30, (0..30).map(|v| v as f64 * 0.1).collect());
        let a = net.forward(&x, Mode::Eval).unwrap();
        let b = back.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.sparse_connection_counts(), net.sparse_connection_counts());

        let path = dir.path().join("report.json");
        write_report(&path, &report).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);
        let csv = curves_csv(&report);
        assert_eq!(csv.lines().next().unwrap(), "epoch,train_loss,train_acc,test_loss,test_acc");
        assert_eq!(csv.lines().count(), 3);
    }
}
