#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use hoitg_core::ModelAssets;
use hoitg_diffcore::gradcheck::GradCheckReport;
use hoitg_diffcore::{DiffError, Graph, Tensor, Var};
use hoitg_scenegen::{World, WorldConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASES: u64 = 50;

pub fn lift<T>(r: hoitg_core::Result<T>) -> hoitg_diffcore::Result<T> {
    r.map_err(|e| match e {
        hoitg_core::ModelError::Diff(d) => d,
        other => DiffError::Contract(other.to_string()),
    })
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Weighted sum with fixed pseudo-random weights so every output element matters.
pub fn probe(g: &mut Graph<f64>, y: Var) -> hoitg_diffcore::Result<Var> {
    let n = g.value(y).len();
    let w: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618).sin()).collect();
    let wv = g.constant_from(g.shape(y).to_vec(), w)?;
    let p = g.mul(y, wv)?;
    g.sum(p)
}

pub fn run_cases<F>(name: &str, mut case: F)
where
    F: FnMut(&mut ChaCha8Rng) -> GradCheckReport,
{
    let mut total = GradCheckReport::default();
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed_270b);
        let r = case(&mut rng);
        assert!(r.passed(), "{name} case {seed}: {r:?}");
        total.merge(&r);
    }
    assert!(total.checked > 0);
}

pub fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| World::new(WorldConfig::default()).unwrap())
}

pub fn assets() -> Arc<ModelAssets> {
    static A: OnceLock<Arc<ModelAssets>> = OnceLock::new();
    Arc::clone(A.get_or_init(|| Arc::new(ModelAssets::from_world(world()).unwrap())))
}
