//! Binary checkpoints of a [`TrainState`].
//!
//! Layout (little-endian): magic `QAHM`, `u32` version, the layer-width table,
//! epoch and chain strength, the prior, both networks' flat parameter
//! vectors, an optional embedding, persistent sampler chains, the metrics
//! history, and finally a CRC-32 of every preceding byte.

use std::fs;
use std::path::Path;

use crate::embedding::{Embedding, HardwareGraph};
use crate::error::{QahmError, Result};
use crate::ising::IsingModel;
use crate::nets::{DeepNetwork, Direction, LayerWidths};
use crate::trainer::{EpochMetrics, TrainState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QAHM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| QahmError::Integrity(format!("truncated checkpoint at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    /// A plain count or index with no size check.
    fn index(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n).map_err(|_| QahmError::Integrity(format!("index {n} out of range")))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        // Every counted item occupies at least one byte.
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(QahmError::Integrity(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<&'a str> {
        let n = self.len()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| QahmError::Integrity("invalid utf-8 in checkpoint".into()))
    }
}

/// Serializes `state` to bytes.
pub fn encode(state: &TrainState) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let widths = state.widths();
    w.len(widths.continuous);
    w.len(widths.binary);
    w.len(widths.hidden.len());
    widths.hidden.iter().for_each(|&h| w.len(h));
    w.len(state.epoch);
    w.f64(state.chain_strength);

    let prior = &state.prior;
    w.f64(prior.beta());
    w.f64(prior.gamma());
    w.f64s(prior.fields());
    w.len(prior.coupling_count());
    for ((i, j), v) in prior.couplings() {
        w.len(i);
        w.len(j);
        w.f64(v);
    }

    w.f64s(&state.recognition.parameters());
    w.f64s(&state.generator.parameters());

    match &state.embedding {
        None => w.u8(0),
        Some(e) => {
            w.u8(1);
            w.str(&e.hardware().to_text());
            w.str(&e.to_text());
        }
    }

    w.len(state.sampler_chains.len());
    state.sampler_chains.iter().for_each(|c| w.f64s(c));

    w.len(state.metrics.len());
    for m in &state.metrics {
        w.len(m.epoch);
        w.f64(m.lr);
        w.f64(m.recon_mse);
        w.u8(m.bound.is_some() as u8);
        w.f64(m.bound.unwrap_or(0.0));
        w.f64(m.seconds);
    }

    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

/// Parses bytes written by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<TrainState> {
    if bytes.len() < 12 {
        return Err(QahmError::Integrity("checkpoint too short".into()));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(QahmError::Integrity("bad magic; not a checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(QahmError::Integrity("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(QahmError::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let continuous = r.index()?;
    let binary = r.index()?;
    let depth = r.len()?;
    let hidden = (0..depth).map(|_| r.index()).collect::<Result<Vec<_>>>()?;
    let widths = LayerWidths::new(continuous, binary, hidden).map_err(|e| QahmError::Integrity(e.to_string()))?;
    let epoch = r.index()?;
    let chain_strength = r.f64()?;

    let beta = r.f64()?;
    let gamma = r.f64()?;
    let fields = r.f64s()?;
    let mut prior = IsingModel::new(fields.len(), beta, gamma).map_err(|e| QahmError::Integrity(e.to_string()))?;
    prior.fields_mut().copy_from_slice(&fields);
    for _ in 0..r.len()? {
        let (i, j, v) = (r.index()?, r.index()?, r.f64()?);
        prior
            .set_coupling(i, j, v)
            .map_err(|e| QahmError::Integrity(e.to_string()))?;
    }

    let recognition = read_network(&mut r, Direction::Recognition, &widths)?;
    let generator = read_network(&mut r, Direction::Generator, &widths)?;

    let embedding = match r.u8()? {
        0 => None,
        1 => {
            let hw = HardwareGraph::from_text(r.str()?).map_err(|e| QahmError::Integrity(e.to_string()))?;
            Some(Embedding::from_text(r.str()?, hw).map_err(|e| QahmError::Integrity(e.to_string()))?)
        }
        t => return Err(QahmError::Integrity(format!("bad embedding tag {t}"))),
    };

    let sampler_chains = (0..r.len()?).map(|_| r.f64s()).collect::<Result<Vec<_>>>()?;

    let mut metrics = Vec::new();
    for _ in 0..r.len()? {
        let epoch = r.index()?;
        let lr = r.f64()?;
        let recon_mse = r.f64()?;
        let has_bound = r.u8()? != 0;
        let bound = r.f64()?;
        let seconds = r.f64()?;
        metrics.push(EpochMetrics {
            epoch,
            lr,
            recon_mse,
            bound: has_bound.then_some(bound),
            seconds,
        });
    }
    if r.pos != body.len() {
        return Err(QahmError::Integrity(format!(
            "{} trailing bytes after checkpoint payload",
            body.len() - r.pos
        )));
    }

    let mut state = TrainState::from_parts(recognition, generator, prior, embedding)
        .map_err(|e| QahmError::Integrity(e.to_string()))?;
    state.chain_strength = chain_strength;
    state.epoch = epoch;
    state.metrics = metrics;
    state.sampler_chains = sampler_chains;
    Ok(state)
}

fn read_network(r: &mut Reader<'_>, direction: Direction, widths: &LayerWidths) -> Result<DeepNetwork> {
    let params = r.f64s()?;
    let mut net = DeepNetwork::zeros(direction, widths);
    let expected = net.parameters().len();
    if params.len() != expected {
        return Err(QahmError::Integrity(format!(
            "network holds {} parameters, table implies {expected}",
            params.len()
        )));
    }
    for (k, v) in params.into_iter().enumerate() {
        *net.parameter_mut(k) = v;
    }
    Ok(net)
}

/// Writes a checkpoint atomically (temporary file, then rename).
pub fn checkpoint_save(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| QahmError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(state)).map_err(|e| QahmError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| QahmError::io(path, e))
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| QahmError::io(path, e))?;
    decode(&bytes)
}
