//! Binary checkpoint: `FINEXB1\n`, a length-prefixed JSON header, then one
//! entry per parameter until end of file.
//!
//! Entry layout (all integers u64 little-endian): name length, UTF-8 name,
//! rank, dims, then row-major f32 little-endian values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::vocab::Vocab;
use crate::error::{Error, Result};
use crate::model::{FinExModel, ModelConfig};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"FINEXB1\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadDims {
    pub nli_in: usize,
    pub relevance_in: usize,
    pub span_in: usize,
    pub span_hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub heads: HeadDims,
    pub vocab: Vec<String>,
    pub seed: u64,
    pub epoch: usize,
}

pub fn header_for(model: &FinExModel, seed: u64, epoch: usize) -> CheckpointHeader {
    CheckpointHeader {
        model: model.config.clone(),
        heads: HeadDims {
            nli_in: model.config.fused_dim(),
            relevance_in: model.config.relevance_dim(),
            span_in: model.config.span.d_in,
            span_hidden: model.config.span.d_hidden,
        },
        vocab: model.vocab.tokens().to_vec(),
        seed,
        epoch,
    }
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

pub fn to_bytes(model: &FinExModel, seed: u64, epoch: usize) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&header_for(model, seed, epoch))?;
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + 4 * model.store.total());
    out.extend_from_slice(MAGIC);
    put_u64(&mut out, header.len());
    out.extend_from_slice(&header);
    for e in model.store.entries() {
        put_u64(&mut out, e.name.len());
        out.extend_from_slice(e.name.as_bytes());
        put_u64(&mut out, e.value.rank());
        for &d in e.value.shape() {
            put_u64(&mut out, d);
        }
        for &v in e.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!(
                "truncated: need {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            ))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Rebuilds the model from the header and fills every parameter from the
/// payload. Missing, unknown, duplicated or misshapen entries are errors.
pub fn from_bytes(bytes: &[u8]) -> Result<(FinExModel, CheckpointHeader)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic: not a finex checkpoint".into()));
    }
    let hlen = r.u64("header length")?;
    let header: CheckpointHeader = serde_json::from_slice(r.take(hlen, "header")?)?;
    let vocab = Vocab::from_tokens(header.vocab.clone())?;
    let mut model = FinExModel::new(header.model.clone(), vocab, header.seed)?;
    let mut seen = vec![false; model.store.len()];
    while !r.done() {
        let nlen = r.u64("name length")?;
        let name = std::str::from_utf8(r.take(nlen, "name")?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u64(&format!("{name} rank"))?;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("{name}: implausible rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| r.u64(&format!("{name} dims"))).collect::<Result<_>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(numel.saturating_mul(4), &format!("{name} values"))?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        let id = model
            .store
            .find(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name:?}")))?;
        if model.store.value(id).shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{name}: stored shape {shape:?}, model expects {:?}",
                model.store.value(id).shape()
            )));
        }
        if std::mem::replace(&mut seen[id.index()], true) {
            return Err(Error::Checkpoint(format!("duplicate parameter {name:?}")));
        }
        model.store.set_value(id, Tensor::new(shape, data)?);
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Checkpoint(format!(
            "missing parameter {:?}",
            model.store.entries()[i].name
        )));
    }
    Ok((model, header))
}

pub fn save(model: &FinExModel, seed: u64, epoch: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model, seed, epoch)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(FinExModel, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::LoraConfig;
    use crate::nn::Ctx;
    use crate::tensor::Tape;

    fn model(lora: bool) -> FinExModel {
        let vocab = Vocab::build(["my card was declined"]);
        let mut cfg = ModelConfig::desk(vocab.len());
        cfg.lora = lora.then(LoraConfig::default);
        FinExModel::new(cfg, vocab, 3).unwrap()
    }

    #[test]
    fn load_then_save_is_byte_identical() {
        for lora in [false, true] {
            let bytes = to_bytes(&model(lora), 3, 7).unwrap();
            let (m, h) = from_bytes(&bytes).unwrap();
            assert_eq!(h.epoch, 7);
            assert_eq!(h.model.lora.is_some(), lora);
            assert_eq!(to_bytes(&m, h.seed, h.epoch).unwrap(), bytes);
        }
    }

    #[test]
    fn loaded_model_scores_like_an_f32_copy() {
        let mut m = model(false);
        for id in m.store.ids().collect::<Vec<_>>() {
            for v in m.store.value_mut(id).data_mut() {
                *v = f64::from(*v as f32);
            }
        }
        let (back, _) = from_bytes(&to_bytes(&m, 3, 0).unwrap()).unwrap();
        let inp = m.prepare("my card was declined", None).unwrap();
        let run = |mm: &FinExModel| {
            let mut t = Tape::new();
            let l = mm.relevance_logit(&mut t, &inp, &mut Ctx::eval()).unwrap();
            t.value(l).item()
        };
        assert_eq!(run(&m), run(&back));
    }

    #[test]
    fn header_dims_are_consistent() {
        let h = header_for(&model(false), 0, 0);
        assert_eq!(h.heads.nli_in, 96);
        assert_eq!(h.heads.relevance_in, 80);
        assert_eq!((h.heads.span_in, h.heads.span_hidden), (64, 128));
    }

    #[test]
    fn corrupt_inputs_are_descriptive() {
        let bytes = to_bytes(&model(false), 3, 0).unwrap();
        let err = from_bytes(&bytes[..bytes.len() - 3]).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).unwrap_err().to_string().contains("magic"));

        // Drop the final entry entirely.
        let m = model(false);
        let last = m.store.entries().last().unwrap();
        let tail = 8 + last.name.len() + 8 + 8 * last.value.rank() + 4 * last.value.numel();
        let err = from_bytes(&bytes[..bytes.len() - tail]).unwrap_err().to_string();
        assert!(err.contains("missing parameter") && err.contains(&last.name), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save(&model(false), 3, 1, &p).unwrap();
        let (_, h) = load(&p).unwrap();
        assert_eq!(h.seed, 3);
        assert!(load(dir.path().join("nope")).is_err());
    }
}
