//! Binary checkpoint format.
//!
//! ```text
//! "ALMC"  u16 version
//! u32 vocab_size, layers, embed_units, hidden_units, batch_size, epochs, bptt_len
//! u8 sequence mode
//! f64 dropout, initial_lr, grad_clip, anneal, init_range
//! u64 seed, u64 vocab hash
//! u32 best epoch, u32 history length, f64 x history (validation perplexity per epoch)
//! u32 tensor count, then per tensor: u32 ndim, u32 x ndim dims, f32 x numel
//! ```
//! Everything is little-endian; tensors are row-major in the order given by
//! [`Params::shapes`].

use std::fs;
use std::path::Path;

use super::config::{LmConfig, SequenceMode};
use super::model::Lstm;
use super::params::Params;
use crate::corpus::Vocab;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ALMC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: LmConfig,
    pub vocab_hash: u64,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Validation perplexity after each epoch.
    pub valid_history: Vec<f64>,
    pub model: Lstm<f32>,
}

impl Checkpoint {
    pub fn best_perplexity(&self) -> Option<f64> {
        self.valid_history.get(self.best_epoch.checked_sub(1)?).copied()
    }

    /// Fail unless `vocab` is the vocabulary the model was trained with.
    pub fn ensure_vocab(&self, vocab: &Vocab) -> Result<()> {
        if vocab.hash() != self.vocab_hash || vocab.len() != self.model.vocab_size() {
            return Err(Error::Data(format!(
                "vocabulary mismatch: checkpoint expects hash {:016x} ({} words), got {:016x} ({} words)",
                self.vocab_hash,
                self.model.vocab_size(),
                vocab.hash(),
                vocab.len()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let p = &self.model.params;
        let mut out = Vec::with_capacity(32 + 4 * p.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            p.vocab_size(),
            c.layers,
            c.embed_units,
            c.hidden_units,
            c.batch_size,
            c.epochs,
            c.bptt_len,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(c.mode.code());
        for v in [c.dropout, c.initial_lr, c.grad_clip, c.anneal, c.init_range] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&self.vocab_hash.to_le_bytes());
        out.extend_from_slice(&(self.best_epoch as u32).to_le_bytes());
        out.extend_from_slice(&(self.valid_history.len() as u32).to_le_bytes());
        for v in &self.valid_history {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let shapes = p.shapes();
        out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
        for (shape, data) in shapes.iter().zip(p.slices()) {
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for x in data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Data("not a checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {version}")));
        }
        let vocab_size = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let embed_units = r.u32()? as usize;
        let hidden_units = r.u32()? as usize;
        let batch_size = r.u32()? as usize;
        let epochs = r.u32()? as usize;
        let bptt_len = r.u32()? as usize;
        let mode = SequenceMode::from_code(r.take(1)?[0])
            .ok_or_else(|| Error::Data("bad sequence mode in checkpoint".into()))?;
        let dropout = r.f64()?;
        let initial_lr = r.f64()?;
        let grad_clip = r.f64()?;
        let anneal = r.f64()?;
        let init_range = r.f64()?;
        let seed = r.u64()?;
        let vocab_hash = r.u64()?;
        let best_epoch = r.u32()? as usize;
        let n_hist = r.u32()? as usize;
        let valid_history = (0..n_hist).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let config = LmConfig {
            layers,
            embed_units,
            hidden_units,
            dropout,
            batch_size,
            initial_lr,
            epochs,
            bptt_len,
            grad_clip,
            seed,
            mode,
            anneal,
            init_range,
        };

        let mut params: Params<f32> = Params::zeros(vocab_size, embed_units, hidden_units, layers);
        let expected = params.shapes();
        let n_tensors = r.u32()? as usize;
        if n_tensors != expected.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {n_tensors} tensors, architecture needs {}",
                expected.len()
            )));
        }
        for (k, (shape, dst)) in expected.iter().zip(params.slices_mut()).enumerate() {
            let ndim = r.u32()? as usize;
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if &dims != shape {
                return Err(Error::Data(format!(
                    "tensor {k} has shape {dims:?}, expected {shape:?}"
                )));
            }
            for x in dst.iter_mut() {
                *x = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Data("trailing bytes after checkpoint tensors".into()));
        }
        if !params.all_finite() {
            return Err(Error::Data("checkpoint contains non-finite values".into()));
        }
        Ok(Checkpoint {
            config,
            vocab_hash,
            best_epoch,
            valid_history,
            model: Lstm::new(params),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Data("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
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
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Checkpoint {
            config: LmConfig {
                embed_units: 4,
                hidden_units: 3,
                ..LmConfig::desk_synthetic()
            },
            vocab_hash: 0xdead_beef,
            best_epoch: 2,
            valid_history: vec![9.0, 7.5, 7.6],
            model: Lstm::new(Params::uniform(&mut rng, 6, 4, 3, 2, 0.1)),
        }
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], b"ALMC");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.best_perplexity(), Some(7.5));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn vocab_hash_mismatch_is_rejected() {
        let mut c = sample();
        let v = Vocab::from_words(["a", "b", "c", "d"]).unwrap();
        assert!(c.ensure_vocab(&v).is_err());
        c.vocab_hash = v.hash();
        c.ensure_vocab(&v).unwrap();
    }
}
