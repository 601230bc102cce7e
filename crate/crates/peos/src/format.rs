//! Binary index files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PEOS"  u32 version
//! header  metric, dim, n, M, efc, build seed, entry, levels,
//!         permutation plan (optional), routing block (optional)
//! vectors n·dim f32
//! graph   per level, per node: LEB128 degree, then signed LEB128 id deltas
//! meta    u64 byte length, then the packed per-edge records in CSR order
//! u64     FNV-1a of every preceding byte
//! ```
//!
//! Projection and SimHash vectors are not stored; they are regenerated from
//! the routing seed with the generator named by `rng_id`.

use std::fs;
use std::hash::Hasher;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use fnv::FnvHasher;
use peos_core::graph::{IndexParts, RoutingParts};
use peos_core::rng::RNG_ID;
use peos_core::routing::{MetaQuantizers, NormQuantizer, VarianceGrid};
use peos_core::{HnswIndex, HnswParams, Metric, PermutationPlan, RoutingConfig, RoutingMode};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PEOS";
pub const VERSION: u32 = 1;

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn put_quantizer(out: &mut Vec<u8>, q: &NormQuantizer) {
    out.write_f32::<LE>(q.min).unwrap();
    out.write_f32::<LE>(q.max).unwrap();
    out.push(q.bits);
    out.push(q.reserve_zero as u8);
}

fn put_uleb(out: &mut Vec<u8>, x: u64) {
    leb128::write::unsigned(out, x).unwrap();
}

fn put_adjacency(out: &mut Vec<u8>, node: u32, adj: &[u32]) {
    put_uleb(out, adj.len() as u64);
    let mut prev = node as i64;
    for &u in adj {
        leb128::write::signed(out, u as i64 - prev).unwrap();
        prev = u as i64;
    }
}

pub fn encode_index(index: &HnswIndex) -> Vec<u8> {
    let p = index.to_parts();
    let n = p.vectors.len() / p.dim;
    let mut out = Vec::with_capacity(64 + p.vectors.len() * 4 + p.base_ids.len() * 2);
    out.extend_from_slice(MAGIC);
    out.write_u32::<LE>(VERSION).unwrap();

    out.push(p.metric.code());
    out.write_u32::<LE>(p.dim as u32).unwrap();
    out.write_u64::<LE>(n as u64).unwrap();
    out.write_u32::<LE>(p.params.m as u32).unwrap();
    out.write_u32::<LE>(p.params.efc as u32).unwrap();
    out.write_u64::<LE>(p.params.seed).unwrap();
    out.write_u32::<LE>(p.entry).unwrap();
    out.write_u32::<LE>(p.upper.len() as u32 + 1).unwrap();

    match &p.plan {
        None => out.push(0),
        Some(plan) => {
            out.push(1);
            out.write_u32::<LE>(plan.parts() as u32).unwrap();
            for &j in plan.order() {
                out.write_u32::<LE>(j).unwrap();
            }
        }
    }

    match &p.routing {
        None => out.push(RoutingMode::None.code()),
        Some(r) => {
            let c = &r.config;
            out.push(c.mode.code());
            out.write_f64::<LE>(c.eps).unwrap();
            out.write_u32::<LE>(c.parts as u32).unwrap();
            out.write_u32::<LE>(c.m as u32).unwrap();
            out.push(c.compact as u8);
            out.write_u32::<LE>(c.simhash_bits as u32).unwrap();
            out.write_u64::<LE>(r.seed).unwrap();
            out.write_u32::<LE>(RNG_ID).unwrap();
            put_quantizer(&mut out, &r.quant.half_u);
            put_quantizer(&mut out, &r.quant.enorm);
            out.write_f64::<LE>(r.quant.grid.v_max).unwrap();
        }
    }

    for &x in &p.vectors {
        out.write_f32::<LE>(x).unwrap();
    }

    for v in 0..n {
        let (a, b) = (p.base_offsets[v] as usize, p.base_offsets[v + 1] as usize);
        put_adjacency(&mut out, v as u32, &p.base_ids[a..b]);
    }
    for layer in &p.upper {
        for (v, adj) in layer.iter().enumerate() {
            put_adjacency(&mut out, v as u32, adj);
        }
    }

    let records = p.routing.as_ref().map(|r| r.records.as_slice()).unwrap_or(&[]);
    out.write_u64::<LE>(records.len() as u64).unwrap();
    out.extend_from_slice(records);

    let sum = checksum(&out);
    out.write_u64::<LE>(sum).unwrap();
    out
}

fn truncated(_: std::io::Error) -> Error {
    Error::Format("unexpected end of index data".into())
}

fn get_quantizer(r: &mut Cursor<&[u8]>) -> Result<NormQuantizer> {
    let min = r.read_f32::<LE>().map_err(truncated)?;
    let max = r.read_f32::<LE>().map_err(truncated)?;
    let bits = r.read_u8().map_err(truncated)?;
    let reserve = r.read_u8().map_err(truncated)? != 0;
    Ok(NormQuantizer::new(min, max, bits, reserve)?)
}

fn get_uleb(r: &mut Cursor<&[u8]>) -> Result<u64> {
    leb128::read::unsigned(r).map_err(|e| Error::Format(format!("bad varint: {e}")))
}

fn get_adjacency(r: &mut Cursor<&[u8]>, node: u32, n: usize, out: &mut Vec<u32>) -> Result<()> {
    let count = get_uleb(r)?;
    if count > n as u64 {
        return Err(Error::Format(format!("node {node} lists {count} neighbors")));
    }
    let mut prev = node as i64;
    for _ in 0..count {
        let d = leb128::read::signed(r).map_err(|e| Error::Format(format!("bad varint: {e}")))?;
        let id = prev.checked_add(d).filter(|&x| (0..n as i64).contains(&x));
        let id = id.ok_or_else(|| Error::Format(format!("neighbor of node {node} out of range")))?;
        out.push(id as u32);
        prev = id;
    }
    Ok(())
}

pub fn decode_index(bytes: &[u8]) -> Result<HnswIndex> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not an index file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported index version {version}")));
    }
    if bytes.len() < 16 {
        return Err(Error::Format("index file is truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if checksum(body) != stored {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }

    let mut r = Cursor::new(body);
    r.set_position(8);
    let metric_code = r.read_u8().map_err(truncated)?;
    let metric = Metric::from_code(metric_code).ok_or_else(|| Error::Format(format!("unknown metric code {metric_code}")))?;
    let dim = r.read_u32::<LE>().map_err(truncated)? as usize;
    let n = r.read_u64::<LE>().map_err(truncated)?;
    let m = r.read_u32::<LE>().map_err(truncated)? as usize;
    let efc = r.read_u32::<LE>().map_err(truncated)? as usize;
    let seed = r.read_u64::<LE>().map_err(truncated)?;
    let entry = r.read_u32::<LE>().map_err(truncated)?;
    let levels = r.read_u32::<LE>().map_err(truncated)? as usize;
    if dim == 0 || n == 0 || levels == 0 {
        return Err(Error::Format("empty index".into()));
    }
    let remaining = (body.len() as u64).saturating_sub(r.position());
    if n.checked_mul(dim as u64 * 4).map_or(true, |need| need > remaining) || levels > 64 {
        return Err(Error::Format("header sizes exceed the file".into()));
    }
    let n = n as usize;

    let plan = match r.read_u8().map_err(truncated)? {
        0 => None,
        1 => {
            let parts = r.read_u32::<LE>().map_err(truncated)? as usize;
            let mut order = vec![0u32; dim];
            r.read_u32_into::<LE>(&mut order).map_err(truncated)?;
            Some(PermutationPlan::from_order(order, parts)?)
        }
        x => return Err(Error::Format(format!("bad permutation flag {x}"))),
    };

    let mode_code = r.read_u8().map_err(truncated)?;
    let mode = RoutingMode::from_code(mode_code).ok_or_else(|| Error::Format(format!("unknown routing mode {mode_code}")))?;
    let routing_head = if mode == RoutingMode::None {
        None
    } else {
        let eps = r.read_f64::<LE>().map_err(truncated)?;
        let parts = r.read_u32::<LE>().map_err(truncated)? as usize;
        let m = r.read_u32::<LE>().map_err(truncated)? as usize;
        let compact = r.read_u8().map_err(truncated)? != 0;
        let simhash_bits = r.read_u32::<LE>().map_err(truncated)? as usize;
        let rseed = r.read_u64::<LE>().map_err(truncated)?;
        let rng = r.read_u32::<LE>().map_err(truncated)?;
        if rng != RNG_ID {
            return Err(Error::Format(format!("index was written with unknown generator {rng}")));
        }
        let half_u = get_quantizer(&mut r)?;
        let enorm = get_quantizer(&mut r)?;
        let v_max = r.read_f64::<LE>().map_err(truncated)?;
        let config = RoutingConfig { mode, eps, parts, m, compact, simhash_bits };
        Some((config, rseed, MetaQuantizers { half_u, enorm, grid: VarianceGrid { v_max } }))
    };

    let mut vectors = vec![0f32; n * dim];
    r.read_f32_into::<LE>(&mut vectors).map_err(truncated)?;

    let mut base_offsets = Vec::with_capacity(n + 1);
    let mut base_ids = Vec::new();
    base_offsets.push(0u32);
    for v in 0..n {
        get_adjacency(&mut r, v as u32, n, &mut base_ids)?;
        base_offsets.push(base_ids.len() as u32);
    }
    let mut upper = Vec::with_capacity(levels - 1);
    for _ in 1..levels {
        let mut layer = Vec::with_capacity(n);
        for v in 0..n {
            let mut adj = Vec::new();
            get_adjacency(&mut r, v as u32, n, &mut adj)?;
            layer.push(adj);
        }
        upper.push(layer);
    }

    let len = r.read_u64::<LE>().map_err(truncated)?;
    if len > (body.len() as u64).saturating_sub(r.position()) {
        return Err(Error::Format("metadata length exceeds the file".into()));
    }
    let mut records = vec![0u8; len as usize];
    r.read_exact(&mut records).map_err(truncated)?;
    if r.position() != body.len() as u64 {
        return Err(Error::Format("trailing bytes after metadata".into()));
    }
    let routing = match routing_head {
        None if records.is_empty() => None,
        None => return Err(Error::Format("metadata present without a routing block".into())),
        Some((config, seed, quant)) => Some(RoutingParts { config, seed, quant, records }),
    };

    let parts = IndexParts {
        metric,
        dim,
        params: HnswParams { m, efc, seed },
        vectors,
        entry,
        upper,
        base_offsets,
        base_ids,
        plan,
        routing,
    };
    HnswIndex::from_parts(parts).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_index(path: impl AsRef<Path>, index: &HnswIndex) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_index(index)).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<HnswIndex> {
    let path = path.as_ref();
    decode_index(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
