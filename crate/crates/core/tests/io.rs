use std::fs;

use steiner_core::data::{generate_dataset, label_dataset, DatasetFile, DatasetRecord};
use steiner_core::gat::{init_params, model_forward, Mode, ModelConfig, ModelParams};
use steiner_core::io::{
    load_checkpoint, load_dataset, save_checkpoint, save_dataset, save_history, Checkpoint,
    TrainingMeta,
};
use steiner_core::net::{build_hanan_grid, disjoint_batch};
use steiner_core::rng::DetRng;
use steiner_core::train::EpochRecord;
use steiner_core::Error;

fn checkpoint(seed: u64) -> Checkpoint {
    // Arbitrary bit patterns, not just the tidy values of a fresh init.
    let mut params = ModelParams::init(&ModelConfig::default(), seed);
    let mut rng = DetRng::new(seed);
    for s in params.slices_mut() {
        s.iter_mut().for_each(|v| *v = rng.symmetric(1.0) * 10f64.powi(rng.below(9) as i32 - 4));
    }
    Checkpoint {
        params,
        training: TrainingMeta {
            seed,
            epochs_run: 12,
            best_epoch: 7,
            best_val_loss: 0.1 + 0.2,
        },
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    for seed in 0..5 {
        let ck = checkpoint(seed);
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        let bits = |c: &Checkpoint| -> Vec<u64> {
            c.params.slices().concat().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&back), bits(&ck));
        assert_eq!(back, ck);

        let net = steiner_core::data::random_net(0, 5, seed, 1_000_000).unwrap();
        let batch = disjoint_batch(vec![build_hanan_grid(&net)]).unwrap();
        let (p, _) = model_forward(&ck.params, batch.input(), Mode::Infer).unwrap();
        let (q, _) = model_forward(&back.params, batch.input(), Mode::Infer).unwrap();
        assert_eq!(p, q);
    }
}

#[test]
fn truncated_checkpoint_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&path, &checkpoint(1)).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() / 2]).unwrap();
    match load_checkpoint(&path) {
        Err(Error::Parse { line, .. }) => assert!(line > 1),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn other_versions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&path, &checkpoint(2)).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"version\": 1"));
    fs::write(&path, text.replace("\"version\": 1", "\"version\": 2")).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(Error::UnsupportedVersion { found: 2, expected: 1, .. })
    ));
}

#[test]
fn checkpoint_shapes_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&path, &checkpoint(3)).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    doc["weights"][1]["bias"]["data"] = serde_json::json!([0.0, 1.0]);
    fs::write(&path, doc.to_string()).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Parse { .. })));
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nets.jsonl");
    let file = label_dataset(&generate_dataset(&[3, 4, 5], 20, 9, 1_000_000).unwrap(), 9).unwrap();
    save_dataset(&path, &file).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, file);
    let bytes = fs::read(&path).unwrap();
    save_dataset(&path, &back).unwrap();
    assert_eq!(fs::read(&path).unwrap(), bytes);
    assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 60);
}

#[test]
fn bad_dataset_lines_report_their_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nets.jsonl");
    let file = label_dataset(&generate_dataset(&[4], 3, 1, 100).unwrap(), 9).unwrap();

    let write_with = |third: &DatasetRecord| {
        let mut f = file.clone();
        f.records[2] = third.clone();
        save_dataset(&path, &f).unwrap();
    };
    let line_of = |r: Result<DatasetFile, Error>| match r {
        Err(Error::Parse { line, .. }) => line,
        other => panic!("expected a parse error, got {other:?}"),
    };

    // A pin labeled as a Steiner point.
    let mut bad = file.records[2].clone();
    let grid = build_hanan_grid(&bad.to_net().unwrap());
    bad.labels = Some(vec![grid.pin_indices()[0]]);
    write_with(&bad);
    assert_eq!(line_of(load_dataset(&path)), 3);

    // Out-of-range label.
    bad.labels = Some(vec![10_000]);
    write_with(&bad);
    assert_eq!(line_of(load_dataset(&path)), 3);

    // Degree disagreeing with the pins.
    let mut bad = file.records[2].clone();
    bad.degree = 7;
    write_with(&bad);
    assert_eq!(line_of(load_dataset(&path)), 3);

    // Labels without an optimal wirelength.
    let mut bad = file.records[2].clone();
    bad.wl_opt = None;
    write_with(&bad);
    assert_eq!(line_of(load_dataset(&path)), 3);

    // Unknown keys and broken JSON.
    save_dataset(&path, &file).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("{\"id\":1,", "{\"id\":1,\"color\":2,", 1)).unwrap();
    assert_eq!(line_of(load_dataset(&path)), 2);
    fs::write(&path, format!("{text}{{\"id\": 9, \"degree\"")).unwrap();
    assert_eq!(line_of(load_dataset(&path)), 4);

    // Repeated ids.
    fs::write(&path, format!("{text}{}", text.lines().next().unwrap())).unwrap();
    assert_eq!(line_of(load_dataset(&path)), 4);
}

#[test]
fn failed_write_leaves_old_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    let rows = vec![EpochRecord {
        epoch: 1,
        train_loss: 0.5,
        val_loss: 0.25,
        val_accuracy: 0.125,
    }];
    save_history(&path, &rows).unwrap();
    assert_eq!(
        fs::read_to_string(&path).unwrap(),
        "epoch,train_loss,val_loss,val_accuracy\n1,0.5,0.25,0.125\n"
    );
    let missing = dir.path().join("no-such-dir").join("history.csv");
    assert!(matches!(save_history(&missing, &rows), Err(Error::Io { .. })));
    assert!(path.exists());
}

#[test]
fn fresh_init_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let ck = Checkpoint {
        params: init_params(8),
        training: TrainingMeta {
            seed: 8,
            epochs_run: 0,
            best_epoch: 0,
            best_val_loss: f64::MAX,
        },
    };
    save_checkpoint(&path, &ck).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), ck);
}
