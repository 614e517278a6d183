//! Named parameter sets, initialization and the checkpoint file format.

use std::fmt;
use std::path::Path;

use fsegan_autodiff::{Graph, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, FSEGAN_DISC_LAYERS};
use crate::error::{Error, Result};
use crate::fsio::{self, Reader};

const MAGIC: &[u8; 4] = b"FSGN";
const VERSION: u32 = 1;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    fn new(name: String, shape: Vec<usize>, init: Init) -> Self {
        Self { name, shape, init }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Decoder geometry shared by both U-Nets: `(input channels, output channels)`
/// per decoder layer, bottleneck first. Layer `j > 0` consumes the previous
/// decoder output concatenated with the mirror encoder activation.
pub fn decoder_channels(enc: &[usize]) -> Vec<(usize, usize)> {
    let d = enc.len();
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(d);
    for j in 0..d {
        let cin = if j == 0 { enc[d - 1] } else { out[j - 1].1 + enc[d - 1 - j] };
        let cout = if j == d - 1 { 1 } else { enc[d - 2 - j] };
        out.push((cin, cout));
    }
    out
}

/// Every learnable tensor of the given network, in binding order.
pub fn param_specs(config: &ModelConfig, role: Role) -> Vec<ParamSpec> {
    let mut v = Vec::new();
    let w = |v: &mut Vec<ParamSpec>, name: String, shape: Vec<usize>| v.push(ParamSpec::new(name, shape, Init::Normal));
    let b = |v: &mut Vec<ParamSpec>, name: String, c: usize| v.push(ParamSpec::new(name, vec![c], Init::Zeros));
    match (config, role) {
        (ModelConfig::Fsegan(c), Role::Generator) => {
            let enc = c.encoder_channels();
            for (i, &cout) in enc.iter().enumerate() {
                let cin = if i == 0 { c.input_channels } else { enc[i - 1] };
                w(&mut v, format!("enc{i}.w"), vec![4, 4, cin, cout]);
                b(&mut v, format!("enc{i}.b"), cout);
            }
            for (j, (cin, cout)) in decoder_channels(&enc).into_iter().enumerate() {
                // transposed kernels are stored as the adjoint conv: kh×kw×Cout×Cin
                w(&mut v, format!("dec{j}.w"), vec![4, 4, cout, cin]);
                b(&mut v, format!("dec{j}.b"), cout);
            }
        }
        (ModelConfig::Fsegan(c), Role::Discriminator) => {
            let ch = c.disc_channels();
            for (i, &cout) in ch.iter().enumerate() {
                let cin = if i == 0 { c.input_channels + 1 } else { ch[i - 1] };
                w(&mut v, format!("d{i}.w"), vec![4, 4, cin, cout]);
                if i == 0 {
                    b(&mut v, format!("d{i}.b"), cout);
                } else {
                    v.push(ParamSpec::new(format!("d{i}.gamma"), vec![cout], Init::Ones));
                    b(&mut v, format!("d{i}.beta"), cout);
                }
            }
            let band = c.patch_bins >> FSEGAN_DISC_LAYERS;
            w(&mut v, "out.w".into(), vec![1, band, ch[FSEGAN_DISC_LAYERS - 1], 1]);
            b(&mut v, "out.b".into(), 1);
        }
        (ModelConfig::Segan(c), Role::Generator) => {
            let k = c.filter_width;
            for (i, &cout) in c.channels.iter().enumerate() {
                let cin = if i == 0 { c.input_channels } else { c.channels[i - 1] };
                w(&mut v, format!("enc{i}.w"), vec![k, cin, cout]);
                b(&mut v, format!("enc{i}.b"), cout);
            }
            for (j, (cin, cout)) in decoder_channels(&c.channels).into_iter().enumerate() {
                w(&mut v, format!("dec{j}.w"), vec![k, cout, cin]);
                b(&mut v, format!("dec{j}.b"), cout);
            }
        }
        (ModelConfig::Segan(c), Role::Discriminator) => {
            let k = c.filter_width;
            for (i, &cout) in c.channels.iter().enumerate() {
                let cin = if i == 0 { c.input_channels + 1 } else { c.channels[i - 1] };
                w(&mut v, format!("d{i}.w"), vec![k, cin, cout]);
                if i == 0 {
                    b(&mut v, format!("d{i}.b"), cout);
                } else {
                    v.push(ParamSpec::new(format!("d{i}.gamma"), vec![cout], Init::Ones));
                    b(&mut v, format!("d{i}.beta"), cout);
                }
            }
            w(&mut v, "out.w".into(), vec![1, *c.channels.last().unwrap(), 1]);
            b(&mut v, "out.b".into(), 1);
        }
    }
    v
}

/// Total scalar count, a pure function of the configuration.
pub fn param_count(config: &ModelConfig, role: Role) -> usize {
    param_specs(config, role).iter().map(ParamSpec::len).sum()
}

/// Learnable tensors of one network plus the configuration they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    role: Role,
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<f32>>,
}

impl ModelParams {
    /// Checks that `tensors` match the specs of `config`/`role` one by one.
    pub fn new(config: ModelConfig, role: Role, tensors: Vec<(String, Tensor<f32>)>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config, role);
        for (i, spec) in specs.iter().enumerate() {
            let Some((name, t)) = tensors.get(i) else {
                return Err(Error::CheckpointMismatch {
                    name: spec.name.clone(),
                    detail: "missing".into(),
                });
            };
            if *name != spec.name {
                return Err(Error::CheckpointMismatch {
                    name: name.clone(),
                    detail: format!("expected tensor {} at position {i}", spec.name),
                });
            }
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::CheckpointMismatch {
                    name: name.clone(),
                    detail: format!("shape {:?}, configuration needs {:?}", t.shape(), spec.shape),
                });
            }
        }
        if let Some((name, _)) = tensors.get(specs.len()) {
            return Err(Error::CheckpointMismatch {
                name: name.clone(),
                detail: "not part of this configuration".into(),
            });
        }
        let (names, tensors) = tensors.into_iter().unzip();
        Ok(Self {
            role,
            config,
            names,
            tensors,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch_tag(&self) -> String {
        arch_tag(&self.config, self.role)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<f32>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(Tensor::len).collect()
    }

    /// Adds every tensor to `g` as a leaf (trainable or constant).
    pub fn bind<T: Scalar>(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| {
                let data = t.data().iter().map(|&v| T::from_f64(v as f64)).collect();
                let t = Tensor::new(t.shape().to_vec(), data).expect("shape already validated");
                if trainable {
                    g.param(t)
                } else {
                    g.constant(t)
                }
            })
            .collect()
    }

    /// Tensors converted to another precision.
    pub fn to_precision<T: Scalar>(&self) -> Vec<Tensor<T>> {
        self.tensors
            .iter()
            .map(|t| {
                Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| T::from_f64(v as f64)).collect())
                    .expect("same shape")
            })
            .collect()
    }
}

pub fn arch_tag(config: &ModelConfig, role: Role) -> String {
    let r = match role {
        Role::Generator => "generator",
        Role::Discriminator => "discriminator",
    };
    format!("{}-{r}", config.kind())
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
        })
    }
}

/// Kernels `N(0, 0.02²)`, biases zero, norm scales one; deterministic in `seed`.
pub fn init_params(config: &ModelConfig, role: Role, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let tensors = param_specs(config, role)
        .into_iter()
        .map(|s| {
            let n = s.len();
            let data: Vec<f32> = match s.init {
                Init::Normal => (0..n).map(|_| normal.sample(&mut rng) as f32).collect(),
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            };
            (s.name, Tensor::new(s.shape, data).expect("spec shape"))
        })
        .collect();
    ModelParams::new(config.clone(), role, tensors)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * params.count());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_str(&mut out, &params.arch_tag());
    put_str(&mut out, &params.config.to_text());
    for (name, t) in params.names.iter().zip(&params.tensors) {
        put_str(&mut out, name);
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn corrupt(e: Error) -> Error {
    match e {
        Error::Format(m) => Error::CorruptCheckpoint(m),
        other => other,
    }
}

fn read_string(r: &mut Reader, what: &str) -> Result<String> {
    let n = r.u32()? as usize;
    String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::CorruptCheckpoint(format!("{what} is not UTF-8")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader::new(bytes, "checkpoint");
    let magic = r.take(4).map_err(corrupt)?;
    if magic != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic (expected FSGN)".into()));
    }
    let version = r.u32().map_err(corrupt)?;
    if version != VERSION {
        return Err(Error::CorruptCheckpoint(format!("unsupported version {version}")));
    }
    let tag = read_string(&mut r, "architecture tag").map_err(corrupt)?;
    let config_text = read_string(&mut r, "config block").map_err(corrupt)?;
    let config = ModelConfig::parse(&config_text)
        .map_err(|e| Error::CorruptCheckpoint(format!("config block: {e}")))?;
    let role = [Role::Generator, Role::Discriminator]
        .into_iter()
        .find(|r| arch_tag(&config, *r) == tag)
        .ok_or_else(|| Error::CorruptCheckpoint(format!("architecture tag {tag:?} does not match config")))?;
    let mut tensors = Vec::new();
    while !r.is_done() {
        let name = read_string(&mut r, "tensor name").map_err(corrupt)?;
        let rank = r.u32().map_err(corrupt)? as usize;
        if rank > 8 {
            return Err(Error::CorruptCheckpoint(format!("tensor {name}: rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<_>>()
            .map_err(corrupt)?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::CorruptCheckpoint(format!("tensor {name}: size overflow")))?;
        let data = r.f32s(n).map_err(corrupt)?;
        let t = Tensor::new(shape, data).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        tensors.push((name, t));
    }
    ModelParams::new(config, role, tensors).map_err(|e| match e {
        // the file ended on a tensor boundary
        Error::CheckpointMismatch { name, detail } if detail == "missing" => {
            Error::CorruptCheckpoint(format!("truncated before tensor {name}"))
        }
        other => other,
    })
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &encode_checkpoint(params))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    decode_checkpoint(&fsio::read(path)?)
}

/// Loads a checkpoint and insists that its tensors fit `config`/`role`;
/// the first tensor that does not is named in the error.
pub fn load_checkpoint_as(path: &Path, config: &ModelConfig, role: Role) -> Result<ModelParams> {
    let loaded = load_checkpoint(path)?;
    let named: Vec<(String, Tensor<f32>)> = loaded.names.into_iter().zip(loaded.tensors).collect();
    ModelParams::new(config.clone(), role, named)
}
