//! Binary dataset and checkpoint containers, and CSV export.
//!
//! All numbers are little-endian. Strings are a `u32` byte length followed
//! by UTF-8. A tensor is `u32 ndim`, `ndim × u64` dims, then the real parts
//! and (when the layout says so) the imaginary parts as `f64`.
//!
//! Dataset file:
//!
//! ```text
//! "OSCNDATA" u32 version
//! str task  f64 dt  u64 n_samples
//! shape input  shape target          (shared by every sample)
//! meta                               (u32 count, then str key, u64 len, f64s)
//! per sample: input re, input im, target re, u64 label (u64::MAX = none), f64 dt, meta
//! ```
//!
//! Checkpoint file:
//!
//! ```text
//! "OSCNCKPT" u32 version
//! str config  u64 epoch
//! rng: 32 seed bytes, u64 stream, u128 word position
//! u32 n_params, per param: str name, u8 trainable, complex tensor
//! u8 has_optimizer [u64 step, n_params × (complex m, complex v)]
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::ParamStore;
use crate::tasks::{Dataset, TaskKind, TaskSample};
use crate::tensor::{numel, ComplexTensor};
use crate::training::{Adam, Trainer};

pub const DATASET_MAGIC: &[u8; 8] = b"OSCNDATA";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OSCNCKPT";
pub const FORMAT_VERSION: u32 = 1;

const NO_LABEL: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a {expected} file (bad magic)")]
    Magic { expected: &'static str },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("{0}")]
    Mismatch(String),
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.0.write_all(b)
    }
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u128(&mut self, v: u128) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64s(&mut self, v: &[f64]) -> io::Result<()> {
        v.iter().try_for_each(|x| self.f64(*x))
    }
    fn str(&mut self, s: &str) -> io::Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }
    fn shape(&mut self, shape: &[usize]) -> io::Result<()> {
        self.u32(shape.len() as u32)?;
        shape.iter().try_for_each(|d| self.u64(*d as u64))
    }
    fn complex(&mut self, t: &ComplexTensor) -> io::Result<()> {
        self.shape(t.shape())?;
        self.f64s(t.re())?;
        self.f64s(t.im())
    }
    fn meta(&mut self, meta: &BTreeMap<String, Vec<f64>>) -> io::Result<()> {
        self.u32(meta.len() as u32)?;
        for (k, v) in meta {
            self.str(k)?;
            self.u64(v.len() as u64)?;
            self.f64s(v)?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

/// Guards allocations driven by lengths read from a possibly corrupt file.
const MAX_ELEMS: u64 = 1 << 32;

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N], ContainerError> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => ContainerError::Corrupt("unexpected end of file".into()),
            _ => ContainerError::Io(e),
        })?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn u128(&mut self) -> Result<u128, ContainerError> {
        Ok(u128::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, ContainerError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn len(&mut self, what: &str) -> Result<usize, ContainerError> {
        let n = self.u64()?;
        if n > MAX_ELEMS {
            return Err(ContainerError::Corrupt(format!("{what} length {n} is implausible")));
        }
        Ok(n as usize)
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ContainerError> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String, ContainerError> {
        let n = self.u32()? as usize;
        let mut b = vec![0u8; n.min(1 << 24)];
        if b.len() != n {
            return Err(ContainerError::Corrupt("string too long".into()));
        }
        self.0
            .read_exact(&mut b)
            .map_err(|_| ContainerError::Corrupt("truncated string".into()))?;
        String::from_utf8(b).map_err(|_| ContainerError::Corrupt("invalid UTF-8".into()))
    }
    fn shape(&mut self) -> Result<Vec<usize>, ContainerError> {
        let nd = self.u32()?;
        if nd > 8 {
            return Err(ContainerError::Corrupt(format!("tensor rank {nd} is implausible")));
        }
        let shape = (0..nd).map(|_| self.len("dimension")).collect::<Result<Vec<_>, _>>()?;
        if shape.iter().try_fold(1u64, |a, &d| a.checked_mul(d as u64)).is_none_or(|n| n > MAX_ELEMS) {
            return Err(ContainerError::Corrupt(format!("tensor shape {shape:?} is implausible")));
        }
        Ok(shape)
    }
    fn complex(&mut self) -> Result<ComplexTensor, ContainerError> {
        let shape = self.shape()?;
        let n = numel(&shape);
        let re = self.f64s(n)?;
        let im = self.f64s(n)?;
        ComplexTensor::from_parts(&shape, re, im).map_err(|e| ContainerError::Corrupt(e.to_string()))
    }
    fn meta(&mut self) -> Result<BTreeMap<String, Vec<f64>>, ContainerError> {
        let n = self.u32()?;
        let mut meta = BTreeMap::new();
        for _ in 0..n {
            let k = self.str()?;
            let len = self.len("metadata")?;
            meta.insert(k, self.f64s(len)?);
        }
        Ok(meta)
    }
    fn header(&mut self, magic: &[u8; 8], expected: &'static str) -> Result<(), ContainerError> {
        let mut m = [0u8; 8];
        if self.0.read_exact(&mut m).is_err() || &m != magic {
            return Err(ContainerError::Magic { expected });
        }
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(ContainerError::Version(v)),
        }
    }
}

pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<(), ContainerError> {
    let (in_shape, tgt_shape) = match (dataset.input_shape(), dataset.target_shape()) {
        (Some(a), Some(b)) => (a.to_vec(), b.to_vec()),
        _ => (vec![], vec![]),
    };
    if let Some(s) = dataset
        .samples
        .iter()
        .position(|s| s.input.shape() != in_shape || s.target.shape() != tgt_shape)
    {
        return Err(ContainerError::Mismatch(format!(
            "sample {s} has a different shape from sample 0"
        )));
    }
    let mut w = Writer(BufWriter::new(out));
    w.bytes(DATASET_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.str(dataset.task.name())?;
    w.f64(dataset.dt)?;
    w.u64(dataset.samples.len() as u64)?;
    w.shape(&in_shape)?;
    w.shape(&tgt_shape)?;
    w.meta(&dataset.meta)?;
    for s in &dataset.samples {
        w.f64s(s.input.re())?;
        w.f64s(s.input.im())?;
        w.f64s(s.target.re())?;
        w.u64(s.label.map_or(NO_LABEL, |l| l as u64))?;
        w.f64(s.dt)?;
        w.meta(&s.meta)?;
    }
    w.0.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset, ContainerError> {
    let mut r = Reader(BufReader::new(input));
    r.header(DATASET_MAGIC, "dataset")?;
    let task: TaskKind = r
        .str()?
        .parse()
        .map_err(|e: crate::tasks::UnknownTask| ContainerError::Corrupt(e.to_string()))?;
    let dt = r.f64()?;
    let n = r.len("sample count")?;
    let in_shape = r.shape()?;
    let tgt_shape = r.shape()?;
    let meta = r.meta()?;
    let (ni, nt) = (numel(&in_shape), numel(&tgt_shape));
    let mut samples = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let re = r.f64s(ni)?;
        let im = r.f64s(ni)?;
        let tre = r.f64s(nt)?;
        let label = match r.u64()? {
            NO_LABEL => None,
            l => Some(l as usize),
        };
        let sdt = r.f64()?;
        let smeta = r.meta()?;
        samples.push(TaskSample {
            input: ComplexTensor::from_parts(&in_shape, re, im).expect("sized by header"),
            target: ComplexTensor::from_real(&tgt_shape, tre).expect("sized by header"),
            label,
            dt: sdt,
            meta: smeta,
        });
    }
    let mut rest = [0u8; 1];
    if r.0.read(&mut rest)? != 0 {
        return Err(ContainerError::Corrupt("trailing bytes after last sample".into()));
    }
    Ok(Dataset { task, dt, samples, meta })
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), ContainerError> {
    write_dataset(dataset, File::create(path)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, ContainerError> {
    read_dataset(File::open(path)?)
}

/// Long format for plotting: `sample,channel,time,input_re,input_im,target`.
/// `channel` indexes the flattened non-time axes.
pub fn write_dataset_csv<W: Write>(dataset: &Dataset, out: W) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "sample,channel,time,input_re,input_im,target")?;
    for (si, s) in dataset.samples.iter().enumerate() {
        let steps = s.steps();
        let channels = s.input.len() / steps.max(1);
        let target_channels = s.target.len() / steps.max(1);
        for c in 0..channels.max(target_channels) {
            for t in 0..steps {
                let (ire, iim) = if c < channels {
                    let i = c * steps + t;
                    (s.input.re()[i].to_string(), s.input.im()[i].to_string())
                } else {
                    (String::new(), String::new())
                };
                let tgt = if c < target_channels {
                    s.target.re()[c * steps + t].to_string()
                } else {
                    String::new()
                };
                writeln!(w, "{si},{c},{t},{ire},{iim},{tgt}")?;
            }
        }
    }
    w.flush()
}

/// Exact position of a ChaCha8 generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub trainable: bool,
    pub value: ComplexTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<ComplexTensor>,
    pub v: Vec<ComplexTensor>,
}

/// Everything needed to resume training bit-identically. `config` is the
/// caller's own description of the run (the CLI stores its TOML); the
/// network is rebuilt from it and then overwritten with `params`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub epoch: u64,
    pub rng: RngState,
    pub params: Vec<NamedTensor>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, config: impl Into<String>) -> Self {
        Self {
            config: config.into(),
            epoch: trainer.epoch as u64,
            rng: RngState::capture(&trainer.rng),
            params: params_of(&trainer.network.store),
            optimizer: Some(OptimizerState {
                step: trainer.optimizer.step,
                m: trainer.optimizer.m.clone(),
                v: trainer.optimizer.v.clone(),
            }),
        }
    }

    /// Copies parameter values into `store`, matching by name and shape.
    pub fn load_params(&self, store: &mut ParamStore) -> Result<(), ContainerError> {
        if store.len() != self.params.len() {
            return Err(ContainerError::Mismatch(format!(
                "checkpoint has {} parameters, network has {}",
                self.params.len(),
                store.len()
            )));
        }
        for (p, saved) in store.iter_mut().zip(&self.params) {
            if p.name != saved.name || p.value.shape() != saved.value.shape() {
                return Err(ContainerError::Mismatch(format!(
                    "parameter {} {:?} does not match checkpoint entry {} {:?}",
                    p.name,
                    p.value.shape(),
                    saved.name,
                    saved.value.shape()
                )));
            }
            p.value = saved.value.clone();
            p.trainable = saved.trainable;
        }
        Ok(())
    }

    /// Restores parameters, optimizer moments, RNG and epoch into a trainer
    /// built from the same configuration.
    pub fn restore_trainer(&self, trainer: &mut Trainer) -> Result<(), ContainerError> {
        self.load_params(&mut trainer.network.store)?;
        if let Some(opt) = &self.optimizer {
            let fits = |v: &[ComplexTensor]| {
                v.len() == trainer.optimizer.m.len()
                    && v.iter().zip(&trainer.optimizer.m).all(|(a, b)| a.shape() == b.shape())
            };
            if !fits(&opt.m) || !fits(&opt.v) {
                return Err(ContainerError::Mismatch("optimizer state does not match network".into()));
            }
            trainer.optimizer = Adam {
                step: opt.step,
                m: opt.m.clone(),
                v: opt.v.clone(),
                ..trainer.optimizer.clone()
            };
        }
        trainer.rng = self.rng.restore();
        trainer.epoch = self.epoch as usize;
        Ok(())
    }
}

pub fn params_of(store: &ParamStore) -> Vec<NamedTensor> {
    store
        .iter()
        .map(|p| NamedTensor {
            name: p.name.clone(),
            trainable: p.trainable,
            value: p.value.clone(),
        })
        .collect()
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, out: W) -> Result<(), ContainerError> {
    let mut w = Writer(BufWriter::new(out));
    w.bytes(CHECKPOINT_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.str(&ckpt.config)?;
    w.u64(ckpt.epoch)?;
    w.bytes(&ckpt.rng.seed)?;
    w.u64(ckpt.rng.stream)?;
    w.u128(ckpt.rng.word_pos)?;
    w.u32(ckpt.params.len() as u32)?;
    for p in &ckpt.params {
        w.str(&p.name)?;
        w.u8(p.trainable as u8)?;
        w.complex(&p.value)?;
    }
    match &ckpt.optimizer {
        None => w.u8(0)?,
        Some(opt) => {
            w.u8(1)?;
            w.u64(opt.step)?;
            for (m, v) in opt.m.iter().zip(&opt.v) {
                w.complex(m)?;
                w.complex(v)?;
            }
        }
    }
    w.0.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Checkpoint, ContainerError> {
    let mut r = Reader(BufReader::new(input));
    r.header(CHECKPOINT_MAGIC, "checkpoint")?;
    let config = r.str()?;
    let epoch = r.u64()?;
    let seed = r.array::<32>()?;
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    let n = r.u32()? as usize;
    let mut params = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let name = r.str()?;
        let trainable = r.u8()? != 0;
        let value = r.complex()?;
        params.push(NamedTensor { name, trainable, value });
    }
    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let mut m = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                m.push(r.complex()?);
                v.push(r.complex()?);
            }
            Some(OptimizerState { step, m, v })
        }
        b => return Err(ContainerError::Corrupt(format!("bad optimizer flag {b}"))),
    };
    let mut rest = [0u8; 1];
    if r.0.read(&mut rest)? != 0 {
        return Err(ContainerError::Corrupt("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint {
        config,
        epoch,
        rng: RngState { seed, stream, word_pos },
        params,
        optimizer,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), ContainerError> {
    write_checkpoint(ckpt, File::create(path)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ContainerError> {
    read_checkpoint(File::open(path)?)
}
