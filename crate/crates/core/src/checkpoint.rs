//! Binary checkpoints of discriminator and generator parameters.
//!
//! Layout, all integers and floats little-endian:
//! `magic (8) | version u32 | config hash (8) | N M d K as u64 |
//! context_emb | item_emb | item_bias | X | Y | sha256 of everything before (32)`.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::discriminator::DiscriminatorParams;
use crate::error::{Error, Result};
use crate::generator::GeneratorParams;

const MAGIC: &[u8; 8] = b"SDGARCKP";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 4 * 8;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub disc: DiscriminatorParams,
    pub gen: GeneratorParams,
    pub config_hash: [u8; 8],
}

/// First eight bytes of the sha256 of a rendered configuration.
pub fn config_hash(rendered: &str) -> [u8; 8] {
    let digest = Sha256::digest(rendered.as_bytes());
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

impl Checkpoint {
    pub fn new(disc: DiscriminatorParams, gen: GeneratorParams, config_hash: [u8; 8]) -> Result<Self> {
        if disc.num_contexts() != gen.num_contexts() || disc.num_items() != gen.num_items() {
            return Err(Error::Shape {
                what: "checkpoint generator".into(),
                expected: format!("{}x{}", disc.num_contexts(), disc.num_items()),
                actual: format!("{}x{}", gen.num_contexts(), gen.num_items()),
            });
        }
        Ok(Self {
            disc,
            gen,
            config_hash,
        })
    }

    /// Fails with a shape error unless the checkpoint covers exactly
    /// `num_contexts` contexts and `num_items` items.
    pub fn expect_dims(&self, num_contexts: usize, num_items: usize) -> Result<()> {
        let (n, m) = (self.disc.num_contexts(), self.disc.num_items());
        if (n, m) != (num_contexts, num_items) {
            return Err(Error::Shape {
                what: "checkpoint (contexts x items)".into(),
                expected: format!("{num_contexts}x{num_items}"),
                actual: format!("{n}x{m}"),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = &self.disc;
        let g = &self.gen;
        let floats = d.context_embeddings().len()
            + d.item_embeddings().len()
            + d.item_biases().len()
            + g.x().len()
            + g.y().len();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * floats + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        for v in [d.num_contexts(), d.num_items(), d.dim(), g.states()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let (items, biases) = (d.item_embeddings(), d.item_biases());
        for block in [d.context_embeddings(), &items, &biases, g.x(), g.y()] {
            for x in block {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupted = |msg: &str| Error::Corrupted {
            path: path.to_path_buf(),
            msg: msg.to_owned(),
        };
        if bytes.len() < HEADER_LEN + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(corrupted("not a checkpoint file"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum(path.to_path_buf()));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(corrupted(&format!("unsupported version {version}")));
        }
        let mut config_hash = [0u8; 8];
        config_hash.copy_from_slice(&body[12..20]);
        let dim = |k: usize| {
            let off = 20 + 8 * k;
            u64::from_le_bytes(body[off..off + 8].try_into().expect("8 bytes")) as usize
        };
        let (n, m, d, k) = (dim(0), dim(1), dim(2), dim(3));
        let expected = n
            .checked_mul(d)
            .and_then(|a| m.checked_mul(d).and_then(|b| a.checked_add(b)))
            .and_then(|a| a.checked_add(m))
            .and_then(|a| n.checked_mul(k).and_then(|b| a.checked_add(b)))
            .and_then(|a| m.checked_mul(k).and_then(|b| a.checked_add(b)))
            .and_then(|a| a.checked_mul(8))
            .ok_or_else(|| corrupted("dimension overflow"))?;
        if body.len() - HEADER_LEN != expected {
            return Err(corrupted(&format!(
                "payload holds {} bytes, dimensions need {expected}",
                body.len() - HEADER_LEN
            )));
        }
        let mut floats = body[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |len: usize| -> Vec<f64> { floats.by_ref().take(len).collect() };
        let ctx = take(n * d);
        let items = take(m * d);
        let bias = take(m);
        let x = take(n * k);
        let y = take(m * k);
        let disc = DiscriminatorParams::from_parts(n, m, d, ctx, items, bias)?;
        let gen = GeneratorParams::from_parts(n, m, k, x, y)
            .map_err(|e| corrupted(&format!("generator: {e}")))?;
        Ok(Self {
            disc,
            gen,
            config_hash,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
