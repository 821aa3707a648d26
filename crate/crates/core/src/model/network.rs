use plantar_autodiff::{BatchNormMode, Mode, Tape, Tensor, Var};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{region_attention, AttentionParams, AttentionPrior};
use super::config::{ModelConfig, Variant};
use super::layers::{conv_block, BiLstm, Linear, Mlp, BN_MOMENTUM};
use super::params::{Bound, ParameterStore};
use crate::encoding::{cop_trajectory, encode_coordinates, fourier_matrix, FourierConfig, SensorCoordinates};
use crate::error::{contract, Result};
use crate::preprocess::{StanceSample, NUM_CHANNELS};
use crate::priors::PartitionMap;

/// Stacked model inputs: pressure B×L×H×W, CoP B×L×2, targets B×L×6.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub pressure: Tensor,
    pub cop: Tensor,
    pub targets: Tensor,
}

impl Batch {
    pub fn from_samples(samples: &[&StanceSample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| contract("empty batch"))?;
        let ps = first.pressure.shape().to_vec();
        let (l, area) = (ps[0], ps[1] * ps[2]);
        let mut pressure = Vec::with_capacity(samples.len() * l * area);
        let mut cop = Vec::with_capacity(samples.len() * l * 2);
        let mut targets = Vec::with_capacity(samples.len() * l * NUM_CHANNELS);
        for s in samples {
            if s.pressure.shape() != ps.as_slice() || s.targets.shape() != [l, NUM_CHANNELS] {
                return Err(contract("samples in a batch must share shapes"));
            }
            pressure.extend_from_slice(s.pressure.data());
            targets.extend_from_slice(s.targets.data());
            cop.extend(cop_trajectory(&s.pressure)?.cop.into_iter().flatten());
        }
        let b = samples.len();
        Ok(Batch {
            pressure: Tensor::new([b, l, ps[1], ps[2]], pressure)?,
            cop: Tensor::new([b, l, 2], cop)?,
            targets: Tensor::new([b, l, NUM_CHANNELS], targets)?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.pressure.shape()[0]
    }

    pub fn stance_len(&self) -> usize {
        self.pressure.shape()[1]
    }
}

/// Tape handles produced by [`Model::forward`].
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// B×L×6.
    pub y_hat: Var,
    pub y_hat_a: Option<Var>,
    pub y_hat_b: Option<Var>,
    /// B×L×R×N.
    pub attention: Option<Var>,
    /// Training-mode batch-norm nodes, by block (1-based).
    pub batch_norms: Vec<(usize, Var)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub y_hat: Tensor,
    pub y_hat_a: Option<Tensor>,
    pub y_hat_b: Option<Tensor>,
    pub attention: Option<Tensor>,
}

/// 2×2 average pooling of an F×H×W stack.
fn avg_pool2(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (f, h, w) = (s[0], s[1] / 2, s[2] / 2);
    let d = x.data();
    Tensor::from_fn([f, 1, h, w], |i| {
        let (fi, r, c) = (i / (h * w), (i / w) % h, i % w);
        let at = |rr: usize, cc: usize| d[(fi * s[1] + rr) * s[2] + cc];
        0.25 * (at(2 * r, 2 * c) + at(2 * r + 1, 2 * c) + at(2 * r, 2 * c + 1) + at(2 * r + 1, 2 * c + 1))
    })
}

/// A configured variant together with its attention prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub prior: AttentionPrior,
}

impl Model {
    pub fn new(config: ModelConfig, partition: &PartitionMap) -> Result<Self> {
        config.validate()?;
        let prior = AttentionPrior::from_partition(partition, &config)?;
        Ok(Model { config, prior })
    }

    pub fn with_prior(config: ModelConfig, prior: AttentionPrior) -> Result<Self> {
        config.validate()?;
        if prior.num_cells() != config.num_cells() {
            return Err(contract(format!(
                "prior has {} cells, model expects {}",
                prior.num_cells(),
                config.num_cells()
            )));
        }
        Ok(Model { config, prior })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Shared encoder: B·L frames → B·L×N×C grid features.
    pub fn cnn_encode(
        &self,
        t: &mut Tape,
        p: &Bound,
        store: &ParameterStore,
        frames: Var,
        mode: Mode,
        batch_norms: &mut Vec<(usize, Var)>,
    ) -> Result<Var> {
        let mut x = frames;
        for b in 1..=3 {
            let bn = match mode {
                Mode::Train => BatchNormMode::Train,
                Mode::Infer => BatchNormMode::Infer {
                    mean: store.buffer(&format!("encoder.bn{b}.running_mean"))?.data().to_vec(),
                    var: store.buffer(&format!("encoder.bn{b}.running_var"))?.data().to_vec(),
                },
            };
            let (y, n) = conv_block(
                t,
                x,
                p.get(&format!("encoder.conv{b}.weight"))?,
                p.get(&format!("encoder.bn{b}.gamma"))?,
                p.get(&format!("encoder.bn{b}.beta"))?,
                if b == 1 { 1 } else { 2 },
                bn,
            )?;
            if mode == Mode::Train {
                batch_norms.push((b, n));
            }
            x = y;
        }
        let s = t.shape(x).to_vec();
        let flat = t.reshape(x, [s[0], s[1], s[2] * s[3]])?;
        Ok(t.transpose(flat, [0, 2, 1])?)
    }

    /// Concatenates visual, coordinate and CoP features per cell and projects
    /// them to Z_feat (F×N×d).
    pub fn fuse_features(&self, t: &mut Tape, p: &Bound, visual: Var, cop: &Tensor) -> Result<Var> {
        let cfg = &self.config;
        let (f, n) = (t.shape(visual)[0], t.shape(visual)[1]);
        let coords = SensorCoordinates::grid(cfg.cells_h(), cfg.cells_w());
        let pos_cfg = FourierConfig::for_dim(cfg.pos_dim);
        let pos = encode_coordinates(t, &coords, pos_cfg, &Linear::bind(p, "pos.proj")?)?;
        let zeros = t.constant(Tensor::zeros([f, n, cfg.pos_dim]));
        let pos = t.add(zeros, pos)?;

        let points: Vec<[f64; 2]> = cop.data().chunks(2).map(|c| [c[0], c[1]]).collect();
        let cop_cfg = FourierConfig::for_dim(cfg.cop_dim);
        let mlp = Mlp::bind(p, "cop")?;
        let g = t.constant(fourier_matrix(&points, cop_cfg));
        let z_cop = mlp.apply(t, g)?;
        let z_cop = t.reshape(z_cop, [f, 1, cfg.cop_dim])?;
        let ones = t.constant(Tensor::ones([f, n, 1]));
        let z_cop = t.matmul(ones, z_cop)?;

        let cat = t.concat(&[visual, pos, z_cop], 2)?;
        Linear::bind(p, "fusion")?.apply(t, cat)
    }

    /// Full forward pass on a batch. `dropout_seed` seeds every dropout mask.
    pub fn forward(
        &self,
        t: &mut Tape,
        p: &Bound,
        store: &ParameterStore,
        batch: &Batch,
        mode: Mode,
        dropout_seed: u64,
    ) -> Result<ForwardVars> {
        let cfg = &self.config;
        let s = batch.pressure.shape();
        if s[2] != cfg.grid_h || s[3] != cfg.grid_w || s[1] != cfg.stance_len {
            return Err(contract(format!(
                "batch {:?} does not match model grid {}×{} and stance length {}",
                s, cfg.grid_h, cfg.grid_w, cfg.stance_len
            )));
        }
        let (b, l) = (s[0], s[1]);
        let frames = batch.pressure.reshape([b * l, 1, s[2], s[3]])?;
        let frames = if cfg.input_pool == 2 {
            avg_pool2(&frames.reshape([b * l, s[2], s[3]])?)
        } else {
            frames
        };
        let frames = t.constant(frames);
        let mut seeds = ChaCha8Rng::seed_from_u64(dropout_seed);
        let mut next_seed = move || seeds.next_u64();
        let rate = cfg.dropout;

        let mut batch_norms = Vec::new();
        let visual = self.cnn_encode(t, p, store, frames, mode, &mut batch_norms)?;
        let z_feat = self.fuse_features(t, p, visual, &batch.cop)?;
        let (n, d) = (cfg.num_cells(), cfg.fused_dim());

        let mut y_a = None;
        let mut attention = None;
        if cfg.variant.has_path_a() {
            let ap = AttentionParams {
                query: p.get("path_a.query")?,
                key: Linear::bind(p, "path_a.key")?,
                value: Linear::bind(p, "path_a.value")?,
                lambda: if cfg.learnable_lambda { Some(p.get("path_a.lambda")?) } else { None },
            };
            let (z, w) = region_attention(t, z_feat, &ap, &self.prior)?;
            attention = Some(t.reshape(w, [b, l, cfg.num_regions, n])?);
            let seq = t.reshape(z, [b, l, cfg.num_regions * d])?;
            let lstm = BiLstm::bind(p, "path_a.lstm", cfg.lstm_layers)?;
            let h = lstm.apply(t, seq, rate, mode, &mut next_seed)?;
            let h = t.dropout(h, rate, mode, next_seed())?;
            y_a = Some(Linear::bind(p, "path_a.head")?.apply(t, h)?);
        }

        let flat = t.reshape(z_feat, [b * l, n * d])?;
        let bott = Linear::bind(p, "path_b.bottleneck")?.apply(t, flat)?;
        let seq = t.reshape(bott, [b, l, cfg.bottleneck_dim])?;
        let h = if cfg.variant.has_global_lstm() {
            let lstm = BiLstm::bind(p, "path_b.lstm", cfg.lstm_layers)?;
            lstm.apply(t, seq, rate, mode, &mut next_seed)?
        } else {
            seq
        };
        let h = t.dropout(h, rate, mode, next_seed())?;
        let y_b = Linear::bind(p, "path_b.head")?.apply(t, h)?;

        let y_hat = match y_a {
            Some(a) => t.add(a, y_b)?,
            None => y_b,
        };
        Ok(ForwardVars {
            y_hat,
            y_hat_a: y_a,
            y_hat_b: Some(y_b),
            attention,
            batch_norms,
        })
    }

    /// Inference-mode forward with frozen batch-norm statistics and no dropout.
    pub fn predict(&self, store: &ParameterStore, batch: &Batch) -> Result<ForwardOutput> {
        let mut t = Tape::new();
        let p = store.bind(&mut t, false);
        let v = self.forward(&mut t, &p, store, batch, Mode::Infer, 0)?;
        let grab = |x: Option<Var>| x.map(|x| t.value(x).clone());
        Ok(ForwardOutput {
            y_hat: t.value(v.y_hat).clone(),
            y_hat_a: grab(v.y_hat_a),
            y_hat_b: grab(v.y_hat_b),
            attention: grab(v.attention),
        })
    }

    /// Folds the batch statistics of a training pass into the running buffers.
    pub fn update_running_stats(&self, t: &Tape, vars: &ForwardVars, store: &mut ParameterStore) -> Result<()> {
        for &(b, var) in &vars.batch_norms {
            let Some(stats) = t.batch_stats(var) else { continue };
            for (key, fresh) in [("running_mean", &stats.mean), ("running_var", &stats.var)] {
                let name = format!("encoder.bn{b}.{key}");
                let buf = store
                    .buffers
                    .get_mut(&name)
                    .ok_or_else(|| contract(format!("buffer `{name}` missing")))?;
                for (r, &v) in buf.data_mut().iter_mut().zip(fresh) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
                }
            }
        }
        Ok(())
    }
}
