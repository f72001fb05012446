#![allow(dead_code)]

use hoitg_core::config::{EncoderConfig, PlainPath};
use hoitg_core::{ModelConfig, Variant};
use hoitg_diffcore::Exec;
use hoitg_harness::TrainConfig;
use hoitg_scenegen::{Dataset, DatasetConfig, CHANNELS};

pub const TINY_RES: usize = 16;

pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        res: TINY_RES,
        in_channels: CHANNELS,
        conv_channels: [4, 4, 8, 8],
        encoder: EncoderConfig { dims: [16, 12, 8], layers: 1, heads: 2, mlp_ratio: 2, variant: Variant::HO2, plain_path: PlainPath::Mlp },
        seed: 5,
    }
}

pub fn tiny_train(epochs: usize, steps: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        steps_per_epoch: steps,
        batch_size: 2,
        learning_rate: 1e-3,
        model: tiny_model(),
        ..TrainConfig::default()
    }
}

pub fn tiny_dataset(num: usize, seed: u64) -> Dataset {
    let mut cfg = DatasetConfig { num, seed, ..DatasetConfig::default() };
    cfg.scene.res = TINY_RES;
    Dataset::generate(&cfg, Exec::default()).unwrap().1
}
