mod common;

use std::sync::Arc;
use std::time::Instant;

use common::{assets, lift, run_cases, world};
use hoitg_core::config::{EncoderConfig, PlainPath, Placement};
use hoitg_core::{total_loss, HoiModel, LossWeights, ModelAssets, ModelConfig, PredictionVars, TargetVars, Variant};
use hoitg_diffcore::gradcheck::check_gradients;
use hoitg_diffcore::{Graph, SparseMatrix};
use hoitg_scenegen::{sample_scene, SceneConfig, SceneSample, TemplateId, CHANNELS, JOINT_COUNT};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        res: 16,
        in_channels: CHANNELS,
        conv_channels: [2, 3, 3, 4],
        encoder: EncoderConfig { dims: [8, 6, 4], layers: 1, heads: 2, mlp_ratio: 2, variant: Variant::HOAll, plain_path: PlainPath::Mlp },
        seed: 3,
    }
}

fn scene(seed: u64, template: TemplateId, res: usize) -> SceneSample {
    sample_scene(world(), seed, template, &SceneConfig { res, ..SceneConfig::default() }).unwrap()
}

fn default_model() -> HoiModel<f32> {
    HoiModel::new(ModelConfig::default(), assets()).unwrap()
}

// ── configuration ────────────────────────────────────────────────────

#[test]
fn default_configuration_contracts() {
    let cfg = ModelConfig::default();
    let d = cfg.encoder.dims;
    assert!(d[0] > d[1] && d[1] > d[2]);
    assert_eq!(cfg.encoder.variant, Variant::HO2);
    assert_eq!(cfg.encoder.placement(), Placement { human: [true; 3], object: [false, true, false] });
    assert_eq!(cfg.in_channels, CHANNELS);
    let mut bad = cfg.clone();
    bad.encoder.dims = [64, 64, 32];
    assert!(bad.validate().is_err());
    bad.encoder.dims = [64, 128, 32];
    assert!(bad.validate().is_err());
    let mut bad = cfg.clone();
    bad.res = 60;
    assert!(HoiModel::<f32>::new(bad, assets()).is_err());
}

#[test]
fn variants_cover_the_placement_table() {
    let objects: Vec<[bool; 3]> = Variant::ALL.iter().map(|v| v.placement().object).collect();
    assert_eq!(
        objects,
        [[false; 3], [false; 3], [true, false, false], [false, true, false], [false, false, true], [true; 3]]
    );
    assert_eq!(Variant::None.placement().human, [false; 3]);
    assert!(Variant::ALL[1..].iter().all(|v| v.placement().human == [true; 3]));
    for v in Variant::ALL {
        assert_eq!(v.id().parse::<Variant>().unwrap(), v);
        assert_eq!(Variant::from_placement(v.placement()), Some(v));
    }
    assert!("h+o4".parse::<Variant>().is_err());
}

// ── forward contracts ────────────────────────────────────────────────

#[test]
fn feature_grid_and_token_shapes() {
    let model = default_model();
    let s = scene(5, TemplateId::Chair, 64);
    let mut g = Graph::<f32>::new();
    let p = model.params.bind(&mut g, false);
    let input = model.input(&mut g, &s.channels).unwrap();
    let fv = model.forward(&mut g, &p, input, s.template).unwrap();
    assert_eq!(g.shape(fv.features), [128, 8, 8]);
    let part = model.partition();
    assert_eq!((part.joints, part.human, part.object), (JOINT_COUNT, 96, 64));
    assert_eq!(g.shape(fv.tokens), [172, 131]);
    let tail: Vec<f32> = [fv.init_joints, fv.init_human, fv.init_object]
        .iter()
        .flat_map(|&v| g.value(v).to_vec())
        .collect();
    let tokens = g.value(fv.tokens);
    for (r, row) in tokens.chunks(131).enumerate() {
        assert_eq!(&row[128..], &tail[r * 3..r * 3 + 3]);
    }
    assert_eq!(g.shape(fv.human[0]), [96, 3]);
    assert_eq!(g.shape(fv.human[1]), [384, 3]);
    assert_eq!(g.shape(fv.human[2])[0], world().body.template().vertices().len());
    assert_eq!(g.shape(fv.object), [64, 3]);
    assert_eq!(fv.attention.len(), 3);
}

#[test]
fn spatially_constant_features_give_identical_feature_columns() {
    let mut model = default_model();
    let w = model.params.get_mut("init.conv3.w").unwrap();
    w.data_mut().iter_mut().for_each(|v| *v = 0.0);
    let b = model.params.get_mut("init.conv3.b").unwrap();
    b.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = (i as f32 * 0.37).sin());
    let s = scene(6, TemplateId::Box, 64);
    let mut g = Graph::<f32>::new();
    let p = model.params.bind(&mut g, false);
    let input = model.input(&mut g, &s.channels).unwrap();
    let fv = model.forward(&mut g, &p, input, s.template).unwrap();
    let tokens = g.value(fv.tokens);
    let first = &tokens[..128];
    for row in tokens.chunks(131) {
        for (a, b) in row[..128].iter().zip(first) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn zero_input_gives_finite_outputs_and_losses() {
    let model = default_model();
    let s = scene(7, TemplateId::Tube, 64);
    let mut g = Graph::<f32>::new();
    let p = model.params.bind(&mut g, false);
    let input = model.input(&mut g, &vec![0.0; s.channels.len()]).unwrap();
    let fv = model.forward(&mut g, &p, input, s.template).unwrap();
    for v in [fv.joints, fv.human[2], fv.object, fv.body_params, fv.cam_scale] {
        assert!(g.value(v).iter().all(|x| x.is_finite()));
    }
    let gt = TargetVars::new(&mut g, &s).unwrap();
    let a = &model.assets;
    let loss = total_loss(&mut g, &PredictionVars::from(&fv), &gt, &a.edge_a, &a.edge_b, &LossWeights::default()).unwrap();
    let report = loss.report(&g, &LossWeights::default());
    assert!(report.is_finite() && report.total > 0.0);
    assert!(model.input(&mut g, &[0.0; 10]).is_err());
}

#[test]
fn reconstruct_shapes_and_attention_rows() {
    let model = default_model();
    let s = scene(8, TemplateId::Chair, 64);
    let rec = model.reconstruct(&s.channels, s.template, true).unwrap();
    assert_eq!(rec.joints.len(), JOINT_COUNT);
    assert_eq!(rec.human[0].len(), 96);
    assert_eq!(rec.human[1].len(), 384);
    assert_eq!(rec.human[2].len(), s.human_full.len());
    assert_eq!(rec.object.len(), 64);
    assert_eq!(rec.init.human_full.len(), s.human_full.len());
    assert_eq!(rec.object_mesh(&model.assets.object(s.template).template).len(), 64);
    let att = rec.attention.unwrap();
    assert_eq!(att.len(), 3);
    for block in &att {
        assert_eq!(block.len(), model.config.encoder.layers);
        for map in block {
            assert_eq!((map.heads, map.tokens), (4, 172));
            assert_eq!(map.data.len(), 4 * 172 * 172);
            for row in map.data.chunks(172) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
            }
            assert_eq!(map.head_mean().len(), 172 * 172);
        }
    }
    assert!(model.reconstruct(&s.channels, s.template, false).unwrap().attention.is_none());
}

#[test]
fn untrained_refinement_starts_at_the_init_estimate() {
    // Offset heads start at zero, so refined coordinates equal the init coordinates.
    let model = default_model();
    let s = scene(9, TemplateId::Box, 64);
    let rec = model.reconstruct(&s.channels, s.template, false).unwrap();
    assert_eq!(rec.human[0], rec.init.human);
    assert_eq!(rec.joints, rec.init.joints);
    for (a, b) in rec.object.iter().zip(&rec.init.object) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-5);
        }
    }
}

#[test]
fn parameter_layout_is_checked() {
    let model = default_model();
    let mut other = ModelConfig::default();
    other.encoder.variant = Variant::HOAll;
    assert!(HoiModel::with_params(other, assets(), model.params.clone()).is_err());
    let back: HoiModel<f32> = model.cast::<f64>().unwrap().cast().unwrap();
    assert_eq!(back.params.tensors(), model.params.tensors());
}

// ── object pathway equivariance ──────────────────────────────────────

fn permuted_assets(base: &ModelAssets, template: TemplateId, perm: &[usize]) -> ModelAssets {
    // New vertex i is old vertex perm[i].
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let mut assets = base.clone();
    let obj = &mut assets.objects[template.index()];
    obj.template = perm.iter().map(|&p| obj.template[p]).collect();
    let trip: Vec<(usize, usize, f64)> = obj.adjacency.triplets().into_iter().map(|(r, c, v)| (inv[r], inv[c], v)).collect();
    obj.adjacency = Arc::new(SparseMatrix::from_triplets(perm.len(), perm.len(), &trip).unwrap());
    assets
}

#[test]
fn object_tokens_are_permutation_equivariant() {
    let base = assets();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut cfg = ModelConfig::default();
    cfg.encoder.variant = Variant::HOAll;
    let mut model = HoiModel::<f64>::new(cfg.clone(), Arc::clone(&base)).unwrap();
    // Non-zero offset heads so the object pathway actually moves the vertices.
    for name in ["head_o.w", "head_h.w"] {
        let t = model.params.get_mut(name).unwrap();
        t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.05..0.05));
    }
    let s = scene(11, TemplateId::Chair, 64);
    let mut perm: Vec<usize> = (0..64).collect();
    perm.shuffle(&mut rng);
    let moved = HoiModel::with_params(cfg, Arc::new(permuted_assets(&base, s.template, &perm)), model.params.clone()).unwrap();
    let a = model.reconstruct(&s.channels, s.template, false).unwrap();
    let b = moved.reconstruct(&s.channels, s.template, false).unwrap();
    for (i, &p) in perm.iter().enumerate() {
        for k in 0..3 {
            assert!((b.object[i][k] - a.object[p][k]).abs() < 1e-5);
        }
    }
    for (x, y) in a.human[0].iter().zip(&b.human[0]) {
        for k in 0..3 {
            assert!((x[k] - y[k]).abs() < 1e-5);
        }
    }
    let (ra, rb) = (a.pose.matrix(), b.pose.matrix());
    assert!((ra - rb).norm() < 1e-5);
}

// ── gradients ────────────────────────────────────────────────────────

#[test]
fn body_parameter_loss_gradient_wrt_first_conv_filter() {
    let cfg = tiny_config();
    let base = HoiModel::<f64>::new(cfg.clone(), assets()).unwrap();
    let conv0 = base.params.position("init.conv0.w").unwrap();
    let samples: Vec<SceneSample> = (0..5).map(|i| scene(20 + i, TemplateId::from_index(i as usize % 3).unwrap(), 16)).collect();
    let mut case = 0;
    run_cases("human_param loss wrt init.conv0.w", |rng| {
        let s = &samples[case % samples.len()];
        case += 1;
        let mut model = base.clone();
        for t in model.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        let weights = LossWeights::from_array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w0 = model.params.tensors()[conv0].clone();
        check_gradients(
            |g, v| {
                let mut vars = model.params.bind(g, false).vars().to_vec();
                vars[conv0] = v[0];
                let p = lift(model.params.bind_vars(&vars))?;
                let input = lift(model.input(g, &s.channels))?;
                let fv = lift(model.forward(g, &p, input, s.template))?;
                let gt = lift(TargetVars::new(g, s))?;
                let a = &model.assets;
                Ok(lift(total_loss(g, &PredictionVars::from(&fv), &gt, &a.edge_a, &a.edge_b, &weights))?.total)
            },
            &[w0],
            8,
            rng.random(),
        )
        .unwrap()
    });
}

/// Ground truth pushed far from any prediction, with edges stretched, so every L1
/// residual keeps its sign under finite-difference steps.
fn displaced(s: &SceneSample) -> SceneSample {
    let mut d = s.clone();
    let far = |pts: &mut Vec<hoitg_meshkit::Point>| pts.iter_mut().for_each(|p| p.iter_mut().for_each(|x| *x = 3.0 * *x + 10.0));
    far(&mut d.human_coarse);
    far(&mut d.human_mid);
    far(&mut d.human_full);
    far(&mut d.joints);
    far(&mut d.object_vertices);
    d.theta.iter_mut().for_each(|x| *x += 10.0);
    d.beta.iter_mut().for_each(|x| *x += 10.0);
    d.object_pose.translation.iter_mut().for_each(|x| *x += 10.0);
    d
}

#[test]
fn full_objective_gradients_on_a_tiny_model() {
    let cfg = tiny_config();
    let base = HoiModel::<f64>::new(cfg, assets()).unwrap();
    let s = scene(30, TemplateId::Tube, 16);
    let target = displaced(&s);
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = base.clone();
        for t in model.params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        let report = check_gradients(
            |g, v| {
                let p = lift(model.params.bind_vars(v))?;
                let input = lift(model.input(g, &s.channels))?;
                let fv = lift(model.forward(g, &p, input, s.template))?;
                let gt = lift(TargetVars::new(g, &target))?;
                let a = &model.assets;
                Ok(lift(total_loss(g, &PredictionVars::from(&fv), &gt, &a.edge_a, &a.edge_b, &LossWeights::default()))?.total)
            },
            model.params.tensors(),
            2,
            rng.random(),
        )
        .unwrap();
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}

#[test]
fn default_forward_and_backward_under_two_seconds() {
    let model = default_model();
    let s = scene(12, TemplateId::Chair, 64);
    let start = Instant::now();
    let mut g = Graph::<f32>::new();
    let p = model.params.bind(&mut g, true);
    let input = model.input(&mut g, &s.channels).unwrap();
    let fv = model.forward(&mut g, &p, input, s.template).unwrap();
    let gt = TargetVars::new(&mut g, &s).unwrap();
    let a = &model.assets;
    let loss = total_loss(&mut g, &PredictionVars::from(&fv), &gt, &a.edge_a, &a.edge_b, &LossWeights::default()).unwrap();
    g.backward(loss.total).unwrap();
    let elapsed = start.elapsed();
    assert!(p.vars().iter().any(|&v| g.grad(v).is_some_and(|d| d.iter().any(|x| *x != 0.0))));
    assert!(elapsed.as_secs_f64() < 2.0, "{elapsed:?}");
}
