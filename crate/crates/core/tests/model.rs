mod common;

use plantar_grf::autodiff::{GradCheck, Mode, Tape, Tensor};
use plantar_grf::encoding::{
    compute_cop, encode_coordinates, encode_cop, fourier_features, CoPTrajectory, FourierConfig, SensorCoordinates,
};
use plantar_grf::model::{
    region_attention, AttentionParams, AttentionPrior, Batch, Linear, Mlp, Model, ModelConfig, ParameterStore, Variant,
};
use plantar_grf::preprocess::StanceSample;
use plantar_grf::priors::{build_priors, PartitionOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-scale..scale))
}

#[test]
fn fourier_features_match_a_loop_oracle() {
    let cfg = FourierConfig { num_bands: 32 };
    let p = [0.3717, -0.8123];
    let f = fourier_features(p, cfg);
    assert_eq!(f.len(), 128);
    let mut k = 0;
    for axis in 0..2 {
        for band in 0..32 {
            let a = 2f64.powi(band) * std::f64::consts::PI * p[axis];
            assert!((f[k] - a.sin()).abs() < 1e-12);
            assert!((f[k + 1] - a.cos()).abs() < 1e-12);
            k += 2;
        }
    }
}

#[test]
fn cop_of_weighted_pair_is_three_quarters_along() {
    let coords = SensorCoordinates {
        coords: vec![[0.0, 0.0], [4.0, -2.0], [9.0, 9.0]],
    };
    let c = compute_cop(&[1.0, 3.0, 0.0], &coords).unwrap().unwrap();
    assert!((c[0] - 3.0).abs() < 1e-12 && (c[1] + 1.5).abs() < 1e-12);
}

#[test]
fn distinct_cop_points_get_distinct_encodings() {
    let cfg = FourierConfig { num_bands: 4 };
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tape::new();
        let mut lin = |t: &mut Tape, i: usize, o: usize| Linear {
            weight: t.leaf(uniform(&mut rng, &[i, o], 0.5)),
            bias: t.leaf(uniform(&mut rng, &[o], 0.1)),
        };
        let mlp = Mlp {
            fc1: lin(&mut t, 16, 12),
            fc2: lin(&mut t, 12, 8),
        };
        let traj = CoPTrajectory {
            cop: vec![[0.1, -0.4], [-0.6, 0.35]],
            valid: vec![true, true],
        };
        let z = encode_cop(&mut t, &traj, cfg, &mlp).unwrap();
        let d = t.value(z).data().to_vec();
        let diff: f64 = d[..8].iter().zip(&d[8..]).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(diff > 0.0, "seed {seed}");
    }
}

#[test]
fn coordinate_projection_gradient_passes_fd_check() {
    let cfg = FourierConfig { num_bands: 2 };
    let coords = SensorCoordinates::grid(4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = vec![uniform(&mut rng, &[8, 5], 0.7), uniform(&mut rng, &[5], 0.2)];
    let report = GradCheck::default()
        .run(
            |t, v| {
                let proj = Linear { weight: v[0], bias: v[1] };
                let e = encode_coordinates(t, &coords, cfg, &proj).map_err(|e| plantar_grf::autodiff::TensorError::Contract(e.to_string()))?;
                let sq = t.mul(e, e)?;
                let th = t.tanh(sq)?;
                t.sum(th)
            },
            &inputs,
        )
        .unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

struct AttentionCase {
    x: Tensor,
    q: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    labels: Vec<i8>,
}

fn attention_case(seed: u64, n: usize, d: usize) -> AttentionCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AttentionCase {
        x: uniform(&mut rng, &[2, n, d], 1.0),
        q: uniform(&mut rng, &[6, d], 1.0),
        wk: uniform(&mut rng, &[d, d], 0.8),
        bk: uniform(&mut rng, &[d], 0.2),
        wv: uniform(&mut rng, &[d, d], 0.8),
        bv: uniform(&mut rng, &[d], 0.2),
        labels: (0..n).map(|_| rng.gen_range(-1..6)).collect(),
    }
}

fn run_attention(c: &AttentionCase, lambda: f64, bias_value: f64) -> (Tensor, Tensor, AttentionPrior) {
    let mut t = Tape::new();
    let params = AttentionParams {
        query: t.leaf(c.q.clone()),
        key: Linear {
            weight: t.leaf(c.wk.clone()),
            bias: t.leaf(c.bk.clone()),
        },
        value: Linear {
            weight: t.leaf(c.wv.clone()),
            bias: t.leaf(c.bv.clone()),
        },
        lambda: None,
    };
    let prior = AttentionPrior::from_cell_labels(c.labels.clone(), bias_value, lambda);
    let x = t.leaf(c.x.clone());
    let (z, w) = region_attention(&mut t, x, &params, &prior).unwrap();
    (t.value(z).clone(), t.value(w).clone(), prior)
}

#[test]
fn unbiased_attention_matches_naive_oracle() {
    let (n, d) = (10, 5);
    for seed in 0..10 {
        let c = attention_case(seed, n, d);
        let (z, w, prior) = run_attention(&c, 0.0, 1.0);
        for f in 0..2 {
            let xf = &c.x.data()[f * n * d..(f + 1) * n * d];
            let (oz, ow) = common::naive_attention(
                xf,
                c.q.data(),
                c.wk.data(),
                c.bk.data(),
                c.wv.data(),
                c.bv.data(),
                prior.bias.data(),
                0.0,
                n,
                d,
                6,
            );
            for (a, b) in z.data()[f * 6 * d..(f + 1) * 6 * d].iter().zip(&oz) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in w.data()[f * 6 * n..(f + 1) * 6 * n].iter().zip(&ow) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn a_twenty_logit_bias_concentrates_mass_in_region() {
    let n = 64;
    let c = AttentionCase {
        q: Tensor::zeros([6, 4]),
        ..attention_case(3, n, 4)
    };
    let (_, w, _) = run_attention(&c, 1.0, 20.0);
    for f in 0..2 {
        for k in 0..6 {
            let cells: Vec<usize> = (0..n).filter(|&i| c.labels[i] == k as i8).collect();
            if cells.is_empty() {
                continue;
            }
            let mass: f64 = cells.iter().map(|&i| w.at(&[f, k, i])).sum();
            assert!(mass > 0.999, "region {k}: {mass}");
        }
    }
}

#[test]
fn zero_query_without_bias_is_uniform() {
    let c = AttentionCase {
        q: Tensor::zeros([6, 4]),
        ..attention_case(4, 9, 4)
    };
    let (_, w, _) = run_attention(&c, 0.0, 1.0);
    assert!(w.data().iter().all(|v| (v - 1.0 / 9.0).abs() < 1e-15));
}

fn synth_inputs(variant: Variant, seed: u64) -> (Model, ParameterStore, Vec<StanceSample>) {
    let data = common::small_synth(1, 8, seed);
    let art = build_priors(&data.samples, &PartitionOptions::default()).unwrap();
    let cfg = ModelConfig::desk(variant, 16, 8, 8);
    let model = Model::new(cfg.clone(), &art.partition).unwrap();
    let store = ParameterStore::init(&cfg, seed).unwrap();
    (model, store, data.samples)
}

#[test]
fn insole_grid_has_sixty_four_cells() {
    let cfg = ModelConfig::table2(Variant::Dprgnet);
    assert_eq!((cfg.grid_h, cfg.grid_w), (64, 16));
    assert_eq!(cfg.num_cells(), 64);
}

#[test]
fn dprgnet_output_is_sum_of_paths_and_infer_is_repeatable() {
    let (model, store, samples) = synth_inputs(Variant::Dprgnet, 0);
    let refs: Vec<&StanceSample> = samples.iter().take(3).collect();
    let batch = Batch::from_samples(&refs).unwrap();
    let out = model.predict(&store, &batch).unwrap();
    assert_eq!(out.y_hat.shape(), &[3, 8, 6]);
    let (a, b) = (out.y_hat_a.as_ref().unwrap(), out.y_hat_b.as_ref().unwrap());
    for i in 0..out.y_hat.numel() {
        assert!((out.y_hat.data()[i] - a.data()[i] - b.data()[i]).abs() < 1e-12);
    }
    let att = out.attention.as_ref().unwrap();
    assert_eq!(att.shape(), &[3, 8, 6, 8]);
    for row in att.data().chunks(8) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(model.predict(&store, &batch).unwrap(), out);
}

#[test]
fn path_b_only_reuses_the_dprgnet_subgraph() {
    let (model, store, samples) = synth_inputs(Variant::Dprgnet, 1);
    let refs: Vec<&StanceSample> = samples.iter().take(2).collect();
    let batch = Batch::from_samples(&refs).unwrap();
    let full = model.predict(&store, &batch).unwrap();

    let mut cfg_b = model.config.clone();
    cfg_b.variant = Variant::PathBOnly;
    let b_model = Model::with_prior(cfg_b.clone(), model.prior.clone()).unwrap();
    let mut b_store = ParameterStore::init(&cfg_b, 99).unwrap();
    for (k, v) in b_store.params.iter_mut() {
        *v = store.params[k].clone();
    }
    b_store.buffers = store.buffers.clone();
    let only_b = b_model.predict(&b_store, &batch).unwrap();
    assert_eq!(&only_b.y_hat, full.y_hat_b.as_ref().unwrap());
}

fn reverse_time(s: &StanceSample) -> StanceSample {
    let l = s.stance_len();
    let area = s.pressure.numel() / l;
    let mut out = s.clone();
    for t in 0..l {
        let src = l - 1 - t;
        out.pressure.data_mut()[t * area..(t + 1) * area].copy_from_slice(&s.pressure.data()[src * area..(src + 1) * area]);
    }
    out
}

/// Row `t` of sample 0's output under the reversed batch, mapped back to original time.
fn reversed_outputs(model: &Model, store: &ParameterStore, s: &StanceSample) -> (Tensor, Tensor) {
    let fwd = model.predict(store, &Batch::from_samples(&[s]).unwrap()).unwrap().y_hat;
    let rev_sample = reverse_time(s);
    let rev = model.predict(store, &Batch::from_samples(&[&rev_sample]).unwrap()).unwrap().y_hat;
    let l = s.stance_len();
    let back = Tensor::from_fn([1, l, 6], |i| {
        let (t, c) = (i / 6, i % 6);
        rev.at(&[0, l - 1 - t, c])
    });
    (fwd, back)
}

#[test]
fn cnn_is_framewise_and_bilstm_is_order_sensitive() {
    let (cnn, cnn_store, samples) = synth_inputs(Variant::Cnn, 2);
    let (fwd, back) = reversed_outputs(&cnn, &cnn_store, &samples[0]);
    assert!(fwd.max_abs_diff(&back) < 1e-12);

    for seed in 0..20 {
        let (model, store, samples) = synth_inputs(Variant::CnnLstm, seed);
        let (fwd, back) = reversed_outputs(&model, &store, &samples[0]);
        assert!(fwd.max_abs_diff(&back) > 1e-9, "seed {seed}");
    }
}

#[test]
fn training_mode_uses_batch_statistics() {
    let (model, store, samples) = synth_inputs(Variant::Cnn, 5);
    let refs: Vec<&StanceSample> = samples.iter().take(2).collect();
    let batch = Batch::from_samples(&refs).unwrap();
    let mut t = Tape::new();
    let p = store.bind(&mut t, true);
    let v = model.forward(&mut t, &p, &store, &batch, Mode::Train, 0).unwrap();
    let mut updated = store.clone();
    model.update_running_stats(&t, &v, &mut updated).unwrap();
    assert_ne!(updated.buffers, store.buffers);
    assert_eq!(updated.params, store.params);
}
