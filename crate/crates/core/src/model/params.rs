use std::collections::BTreeMap;

use plantar_autodiff::{Gradients, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::ModelConfig;
use crate::encoding::FourierConfig;
use crate::error::{Error, Result};
use crate::preprocess::NUM_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in ±bound.
    Uniform(f64),
    Zeros,
    Ones,
    Constant(f64),
    /// Each h×h gate block of an h×4h matrix is an independent random orthogonal matrix.
    OrthogonalGates,
    /// Zero except the forget-gate quarter, which is 1.
    LstmBias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn spec(name: impl Into<String>, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
    }
}

fn fan_in(n: usize) -> Init {
    Init::Uniform(1.0 / (n as f64).sqrt())
}

fn linear_specs(out: &mut Vec<ParamSpec>, prefix: &str, d_in: usize, d_out: usize) {
    out.push(spec(format!("{prefix}.weight"), &[d_in, d_out], fan_in(d_in)));
    out.push(spec(format!("{prefix}.bias"), &[d_out], fan_in(d_in)));
}

fn lstm_specs(out: &mut Vec<ParamSpec>, prefix: &str, d_in: usize, hidden: usize, layers: usize) {
    for l in 0..layers {
        let input = if l == 0 { d_in } else { 2 * hidden };
        for dir in ["fwd", "bwd"] {
            let p = format!("{prefix}.l{l}.{dir}");
            out.push(spec(format!("{p}.w_ih"), &[input, 4 * hidden], fan_in(hidden)));
            out.push(spec(format!("{p}.w_hh"), &[hidden, 4 * hidden], Init::OrthogonalGates));
            out.push(spec(format!("{p}.bias"), &[4 * hidden], Init::LstmBias));
        }
    }
}

/// Every trainable tensor of the configured variant, in initialization order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let ch = cfg.conv_channels();
    let mut c_in = 1;
    for (i, &c) in ch.iter().enumerate() {
        let b = i + 1;
        out.push(spec(format!("encoder.conv{b}.weight"), &[c, c_in, 3, 3], fan_in(c_in * 9)));
        out.push(spec(format!("encoder.bn{b}.gamma"), &[c], Init::Ones));
        out.push(spec(format!("encoder.bn{b}.beta"), &[c], Init::Zeros));
        c_in = c;
    }
    let pos = FourierConfig::for_dim(cfg.pos_dim).output_dim();
    let cop = FourierConfig::for_dim(cfg.cop_dim).output_dim();
    linear_specs(&mut out, "pos.proj", pos, cfg.pos_dim);
    linear_specs(&mut out, "cop.fc1", cop, cfg.cop_dim);
    linear_specs(&mut out, "cop.fc2", cfg.cop_dim, cfg.cop_dim);
    let d = cfg.fused_dim();
    linear_specs(&mut out, "fusion", cfg.cnn_feature_dim + cfg.pos_dim + cfg.cop_dim, d);

    if cfg.variant.has_path_a() {
        let r = cfg.num_regions;
        out.push(spec("path_a.query", &[r, d], fan_in(d)));
        linear_specs(&mut out, "path_a.key", d, d);
        linear_specs(&mut out, "path_a.value", d, d);
        if cfg.learnable_lambda {
            out.push(spec("path_a.lambda", &[1], Init::Constant(cfg.lambda_bias)));
        }
        let h = cfg.regional_lstm_hidden;
        lstm_specs(&mut out, "path_a.lstm", r * d, h, cfg.lstm_layers);
        linear_specs(&mut out, "path_a.head", 2 * h, NUM_CHANNELS);
    }

    linear_specs(&mut out, "path_b.bottleneck", cfg.num_cells() * d, cfg.bottleneck_dim);
    if cfg.variant.has_global_lstm() {
        let h = cfg.global_lstm_hidden;
        lstm_specs(&mut out, "path_b.lstm", cfg.bottleneck_dim, h, cfg.lstm_layers);
        linear_specs(&mut out, "path_b.head", 2 * h, NUM_CHANNELS);
    } else {
        linear_specs(&mut out, "path_b.head", cfg.bottleneck_dim, NUM_CHANNELS);
    }
    out
}

/// Number of trainable scalars, computed from shapes alone.
pub fn parameter_count(cfg: &ModelConfig) -> usize {
    param_specs(cfg).iter().map(|s| s.shape.iter().product::<usize>()).sum()
}

/// Modified Gram-Schmidt on the rows of an n×n matrix.
fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
            for k in 0..n {
                m[i * n + k] -= dot * m[j * n + k];
            }
        }
        let norm = (0..n).map(|k| m[i * n + k].powi(2)).sum::<f64>().sqrt().max(1e-12);
        for k in 0..n {
            m[i * n + k] /= norm;
        }
    }
    m
}

fn initialize(s: &ParamSpec, rng: &mut ChaCha8Rng) -> Tensor {
    let shape = s.shape.clone();
    match s.init {
        Init::Uniform(b) => Tensor::from_fn(shape, |_| rng.gen_range(-b..=b)),
        Init::Zeros => Tensor::zeros(shape),
        Init::Ones => Tensor::ones(shape),
        Init::Constant(v) => Tensor::full(shape, v),
        Init::OrthogonalGates => {
            let h = shape[0];
            let mut t = Tensor::zeros(shape);
            for g in 0..4 {
                let q = orthogonal(h, rng);
                for r in 0..h {
                    for c in 0..h {
                        t.set(&[r, g * h + c], q[r * h + c]);
                    }
                }
            }
            t
        }
        Init::LstmBias => {
            let h = shape[0] / 4;
            Tensor::from_fn(shape, |i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 })
        }
    }
}

/// Named parameters plus non-trainable buffers (batch-norm running statistics).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    pub params: BTreeMap<String, Tensor>,
    pub buffers: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    /// Deterministic initialization from `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::default();
        for s in param_specs(cfg) {
            let t = initialize(&s, &mut rng);
            store.params.insert(s.name, t);
        }
        for (b, &c) in cfg.conv_channels().iter().enumerate() {
            store.buffers.insert(format!("encoder.bn{}.running_mean", b + 1), Tensor::zeros([c]));
            store.buffers.insert(format!("encoder.bn{}.running_var", b + 1), Tensor::ones([c]));
        }
        Ok(store)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("parameter `{name}` missing for this variant")))
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::Config(format!("buffer `{name}` missing")))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Checks the store has exactly the tensors `cfg` needs, with matching shapes.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let specs = param_specs(cfg);
        if specs.len() != self.params.len() {
            return Err(Error::Config(format!(
                "variant {} needs {} parameter tensors, store has {}",
                cfg.variant,
                specs.len(),
                self.params.len()
            )));
        }
        for s in &specs {
            let t = self.get(&s.name)?;
            if t.shape() != s.shape.as_slice() {
                return Err(Error::Config(format!(
                    "parameter `{}` has shape {:?}, config expects {:?}",
                    s.name,
                    t.shape(),
                    s.shape
                )));
            }
        }
        Ok(())
    }

    /// Records every parameter on `tape`, as a gradient leaf when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| {
                let var = if trainable { tape.leaf(v.clone()) } else { tape.constant(v.clone()) };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }
}

/// Tape handles for a bound [`ParameterStore`].
#[derive(Debug, Clone, Default)]
pub struct Bound {
    pub vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter `{name}` missing for this variant")))
    }

    /// Gradient per parameter name; parameters the output did not reach get zeros.
    pub fn collect_grads(&self, grads: &mut Gradients, store: &ParameterStore) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, &v)| {
                let g = grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(store.params[k].shape().to_vec()));
                (k.clone(), g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    #[test]
    fn table2_parameter_ordering() {
        let n = |v| parameter_count(&ModelConfig::table2(v));
        assert!(n(Variant::Cnn) < n(Variant::CnnLstm));
        assert!(n(Variant::CnnLstm) < n(Variant::PathBOnly));
        assert!(n(Variant::PathBOnly) < n(Variant::Dprgnet));
    }

    #[test]
    fn init_is_deterministic_and_consistent() {
        let cfg = ModelConfig::desk(Variant::Dprgnet, 16, 8, 6);
        let a = ParameterStore::init(&cfg, 3).unwrap();
        assert_eq!(a, ParameterStore::init(&cfg, 3).unwrap());
        assert_ne!(a, ParameterStore::init(&cfg, 4).unwrap());
        a.check_against(&cfg).unwrap();
        assert_eq!(a.num_scalars(), parameter_count(&cfg));
        let other = ModelConfig::desk(Variant::Cnn, 16, 8, 6);
        assert!(a.check_against(&other).is_err());
    }

    #[test]
    fn recurrent_blocks_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 7;
        let q = orthogonal(n, &mut rng);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| q[i * n + k] * q[j * n + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }
}
