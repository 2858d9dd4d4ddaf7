//! End-to-end runs of the library on a tiny configuration: pretrain,
//! checkpoint, reload, probe and ablate.

use aom_core::data::{generate_split, SensorProfile, Split, SyntheticDatasetConfig};
use aom_core::eval::{
    band_ablation, checkpoint_id, linear_probe, linear_probe_on, patch_ablation, ProbeConfig, ProbeData,
};
use aom_core::net::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, DecoderConfig, EncoderConfig,
};
use aom_core::pretrain::{TrainConfig, Trainer};

fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.model.encoder = EncoderConfig {
        depth: 1,
        embed_dim: 16,
        num_heads: 2,
        ..EncoderConfig::default()
    };
    c.model.decoder = DecoderConfig {
        depth: 1,
        decoder_dim: 8,
        num_heads: 2,
        ..DecoderConfig::default()
    };
    c.model.head_dim = 8;
    c.data = SyntheticDatasetConfig::generated(&SensorProfile::sentinel2(), 4, 8, 3);
    c.patch_size_set = vec![4, 8];
    c.dataset_size = 16;
    c.batch_size = 4;
    c.steps = 3;
    c.seed = 11;
    c
}

fn tiny_probe(c: &TrainConfig) -> ProbeConfig {
    ProbeConfig {
        train_size: 32,
        test_size: 16,
        ..ProbeConfig::with_data(c.data.clone())
    }
}

#[test]
fn checkpoint_round_trip_preserves_features() {
    let config = tiny_config();
    let mut trainer = Trainer::<f32>::new(config.clone()).unwrap();
    trainer.run(config.steps, None).unwrap();
    let ckpt = trainer.checkpoint().unwrap();
    assert_eq!(ckpt.step, 3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.ckpt");
    save_checkpoint(&ckpt, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, ckpt);
    assert_eq!(decode_checkpoint(&encode_checkpoint(&ckpt).unwrap()).unwrap(), ckpt);

    let model = loaded.to_model::<f32>().unwrap();
    assert_eq!(checkpoint_id(&model), checkpoint_id(trainer.model()));
    let stack = &generate_split(&config.data, Split::ProbeTest, 1, 0).unwrap()[0].0;
    for p in [4, 8] {
        assert_eq!(
            model.representation(stack, p).unwrap(),
            trainer.model().representation(stack, p).unwrap()
        );
    }
}

#[test]
fn training_changes_weights_and_is_seeded() {
    let config = tiny_config();
    let run = |c: &TrainConfig| {
        let mut t = Trainer::<f32>::new(c.clone()).unwrap();
        t.run(c.steps, None).unwrap();
        checkpoint_id(t.model())
    };
    let init = checkpoint_id(Trainer::<f32>::new(config.clone()).unwrap().model());
    let a = run(&config);
    assert_ne!(a, init);
    assert_eq!(a, run(&config));
    assert_ne!(a, run(&TrainConfig { seed: 12, ..config }));
}

#[test]
fn full_band_ablation_row_matches_plain_probe() {
    let config = tiny_config();
    let model = Trainer::<f32>::new(config.clone()).unwrap().into_model();
    let probe = tiny_probe(&config);
    let data = ProbeData::generate(&probe, 4).unwrap();
    let all: Vec<usize> = (0..13).collect();
    let report = band_ablation(&model, &data, &[all.clone(), vec![3, 2, 1]], 4, probe.fit_options()).unwrap();
    let plain = linear_probe(&model, &checkpoint_id(&model), &probe, Some(&all), 4, 4).unwrap();
    assert_eq!(report.rows[0].result, plain);
    assert_eq!(report.rows[1].result.band_subset, vec![3, 2, 1]);
    let none = linear_probe_on(&model, &checkpoint_id(&model), &data, None, 4, probe.fit_options()).unwrap();
    assert_eq!(none.accuracy, plain.accuracy);
}

#[test]
fn patch_ablation_covers_every_size() {
    let config = tiny_config();
    let model = Trainer::<f32>::new(config.clone()).unwrap().into_model();
    let probe = tiny_probe(&config);
    let data = ProbeData::generate(&probe, 0).unwrap();
    let report = patch_ablation(&model, &data, &[2, 4, 8], None, probe.fit_options()).unwrap();
    let settings: Vec<&str> = report.rows.iter().map(|r| r.setting.as_str()).collect();
    assert_eq!(settings, ["p2", "p4", "p8"]);
    assert!(report.spread() >= 0.0 && report.spread() <= 1.0);
    assert!(report.to_csv().contains("# spread="));
    assert!(patch_ablation(&model, &data, &[3], None, probe.fit_options()).is_err());
}

#[test]
fn other_sensor_scenes_run_through_a_sentinel_model() {
    let config = tiny_config();
    let model = Trainer::<f32>::new(config.clone()).unwrap().into_model();
    let landsat = SyntheticDatasetConfig::generated(&SensorProfile::landsat8(), 4, 8, 0);
    let stack = &generate_split(&landsat, Split::ProbeTest, 1, 0).unwrap()[0].0;
    let v = model.representation(stack, 4).unwrap();
    assert_eq!(v.len(), 16);
    assert!(v.iter().all(|x| x.is_finite()));
    let rgb = stack.select_bands(&stack.channel_indices()[..3]).unwrap();
    assert_eq!(model.representation(&rgb, 8).unwrap().len(), 16);
}
