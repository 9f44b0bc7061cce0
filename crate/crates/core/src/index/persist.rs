//! `VIX1` index files.
//!
//! ```text
//! magic "VIX1" | version u16 | kind u8 (0 flat, 1 ann)
//! dimension u32 | count u64 | count × (id len u16, id bytes, dimension × f32)
//! ann only:
//!   max_degree u32 | beam_width u32 | seed u64 | entry u32
//!   layer count u16 | count × level u8
//!   per layer: node count u64, per node: degree u16, degree × u32 ordinal
//! ```

use std::fs;
use std::path::Path;

use super::ann::{AnnIndex, AnnParams};
use super::flat::FlatIndex;
use super::{VectorIndex, VectorStore};
use crate::embed::{decode_body, encode_body};
use crate::error::{Error, Result};
use crate::wire::{self, Reader};

pub const INDEX_MAGIC: [u8; 4] = *b"VIX1";
pub const INDEX_VERSION: u16 = 1;

const KIND_FLAT: u8 = 0;
const KIND_ANN: u8 = 1;

pub fn encode_index(ix: &VectorIndex) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&INDEX_MAGIC);
    wire::put_u16(&mut buf, INDEX_VERSION);
    match ix {
        VectorIndex::Flat(flat) => {
            wire::put_u8(&mut buf, KIND_FLAT);
            encode_body(&flat.to_set(), &mut buf)?;
        }
        VectorIndex::Ann(ann) => {
            wire::put_u8(&mut buf, KIND_ANN);
            encode_body(&ann.to_set(), &mut buf)?;
            let p = ann.params;
            wire::put_u32(&mut buf, p.max_degree as u32);
            wire::put_u32(&mut buf, p.beam_width as u32);
            wire::put_u64(&mut buf, p.seed);
            wire::put_u32(&mut buf, ann.entry);
            wire::put_u16(&mut buf, ann.layers.len() as u16);
            buf.extend_from_slice(&ann.levels);
            for layer in &ann.layers {
                wire::put_u64(&mut buf, layer.len() as u64);
                for adj in layer {
                    let degree = u16::try_from(adj.len())
                        .map_err(|_| Error::InvalidParams("node degree exceeds u16".into()))?;
                    wire::put_u16(&mut buf, degree);
                    for &o in adj {
                        wire::put_u32(&mut buf, o);
                    }
                }
            }
        }
    }
    Ok(buf)
}

pub fn decode_index(bytes: &[u8]) -> Result<VectorIndex> {
    let mut r = Reader::new(bytes);
    wire::expect_magic(&mut r, INDEX_MAGIC)?;
    let version = r.u16("version")?;
    if version != INDEX_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let kind = r.u8("kind")?;
    let set = decode_body(&mut r)?;
    let store = VectorStore::from_set(&set)?;
    let ix = match kind {
        KIND_FLAT => VectorIndex::Flat(FlatIndex { store }),
        KIND_ANN => {
            let n = store.len();
            let params = AnnParams {
                max_degree: r.u32("max_degree")? as usize,
                beam_width: r.u32("beam_width")? as usize,
                seed: r.u64("seed")?,
            };
            params
                .validate()
                .map_err(|e| Error::TruncatedFile(format!("bad ann params: {e}")))?;
            let entry = r.u32("entry")?;
            let layer_count = r.u16("layer count")? as usize;
            let levels = r.take(n, "levels")?.to_vec();
            if entry as usize >= n || layer_count == 0 {
                return Err(Error::TruncatedFile(
                    "bad entry point or layer count".into(),
                ));
            }
            if levels.iter().any(|&l| l as usize >= layer_count)
                || levels[entry as usize] as usize != layer_count - 1
            {
                return Err(Error::TruncatedFile(
                    "node levels inconsistent with layers".into(),
                ));
            }
            let mut layers = Vec::with_capacity(layer_count);
            for _ in 0..layer_count {
                let nodes = r.u64("layer node count")?;
                if nodes != n as u64 {
                    return Err(Error::TruncatedFile(format!(
                        "layer lists {nodes} nodes, index has {n}"
                    )));
                }
                let mut layer = Vec::with_capacity(n);
                for _ in 0..n {
                    let degree = r.u16("degree")? as usize;
                    let mut adj = Vec::with_capacity(degree.min(r.remaining() / 4));
                    for _ in 0..degree {
                        let o = r.u32("neighbor")?;
                        if o as usize >= n {
                            return Err(Error::TruncatedFile(format!(
                                "neighbor ordinal {o} out of range"
                            )));
                        }
                        adj.push(o);
                    }
                    layer.push(adj);
                }
                layers.push(layer);
            }
            VectorIndex::Ann(AnnIndex {
                store,
                params,
                levels,
                layers,
                entry,
            })
        }
        other => return Err(Error::TruncatedFile(format!("unknown index kind {other}"))),
    };
    r.finish()?;
    Ok(ix)
}

pub fn save_index<P: AsRef<Path>>(ix: &VectorIndex, path: P) -> Result<()> {
    fs::write(path, encode_index(ix)?)?;
    Ok(())
}

pub fn load_index<P: AsRef<Path>>(path: P) -> Result<VectorIndex> {
    decode_index(&fs::read(path)?)
}
