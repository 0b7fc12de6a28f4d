//! Little-endian wire format for models and changed segments.
//!
//! ```text
//! header : "LEAD" | u32 version | u32 B | u64 N | u64 H | u8 family tag
//! leaf   : u32 index | f32 x P | u64 rank_lo | u64 rank_hi
//! router : u8 kind | 16 bytes | u64 key floor   (full models only)
//! ```
//!
//! `H = 2^64` does not fit a `u64` and is written as 0. Anchors never travel;
//! they are folded into the parameters first.

use crate::error::{LeadError, Result};
use crate::ring::HashSpace;

use super::leaf::{Anchor, LeafFamily, LeafModel, LeafParams};
use super::model::RmiModel;
use super::router::Router;

pub const MAGIC: &[u8; 4] = b"LEAD";
pub const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 1;
const ROUTER_LEN: usize = 25;

pub fn leaf_record_len(family: LeafFamily) -> usize {
    4 + 4 * family.param_count() + 16
}

/// Decoded blob header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlobHeader {
    pub version: u32,
    pub branching: u32,
    pub n: u64,
    pub space: HashSpace,
    pub family: LeafFamily,
}

/// One leaf as carried on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafSegment {
    pub index: u32,
    pub params: LeafParams,
    pub rank_lo: u64,
    pub rank_hi: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBlob {
    pub header: BlobHeader,
    pub leaves: Vec<LeafSegment>,
}

/// Result of [`apply_segments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied { leaves: usize },
    Stale,
}

fn write_header(out: &mut Vec<u8>, m: &RmiModel) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&m.version().to_le_bytes());
    out.extend_from_slice(&(m.branching() as u32).to_le_bytes());
    out.extend_from_slice(&m.training_count().to_le_bytes());
    let h = if m.space().bits() == 64 { 0 } else { m.space().size() as u64 };
    out.extend_from_slice(&h.to_le_bytes());
    out.push(m.family().tag());
}

fn write_leaf(out: &mut Vec<u8>, index: usize, leaf: &LeafModel) {
    out.extend_from_slice(&(index as u32).to_le_bytes());
    for p in leaf.exported_params().to_vec() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out.extend_from_slice(&leaf.rank_lo.to_le_bytes());
    out.extend_from_slice(&leaf.rank_hi.to_le_bytes());
}

/// Header plus every leaf whose stamp is newer than `since_version`.
pub fn serialize_changed_segments(model: &RmiModel, since_version: u32) -> Vec<u8> {
    let changed: Vec<usize> = (0..model.branching())
        .filter(|&j| model.leaf(j).stamp > since_version)
        .collect();
    let mut out =
        Vec::with_capacity(HEADER_LEN + changed.len() * leaf_record_len(model.family()));
    write_header(&mut out, model);
    for j in changed {
        write_leaf(&mut out, j, model.leaf(j));
    }
    out
}

/// Header, all leaves in index order, then the router.
pub fn serialize_full(model: &RmiModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        HEADER_LEN + model.branching() * leaf_record_len(model.family()) + ROUTER_LEN,
    );
    write_header(&mut out, model);
    for (j, leaf) in model.leaves().iter().enumerate() {
        write_leaf(&mut out, j, leaf);
    }
    match model.router() {
        Router::Linear { slope, intercept } => {
            out.push(1);
            out.extend_from_slice(&slope.to_le_bytes());
            out.extend_from_slice(&intercept.to_le_bytes());
        }
        Router::Radix { min_key, shift } => {
            out.push(2);
            out.extend_from_slice(&min_key.to_le_bytes());
            out.extend_from_slice(&(*shift as u64).to_le_bytes());
        }
    }
    out.extend_from_slice(&model.key_floor().to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(LeadError::MalformedBlob("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
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
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<BlobHeader> {
    if r.take(4)? != MAGIC {
        return Err(LeadError::MalformedBlob("bad magic".into()));
    }
    let version = r.u32()?;
    let branching = r.u32()?;
    let n = r.u64()?;
    let h = r.u64()?;
    let tag = r.u8()?;
    let family = LeafFamily::from_tag(tag)
        .ok_or_else(|| LeadError::MalformedBlob(format!("unknown family tag {tag:#04x}")))?;
    let space = if h == 0 {
        HashSpace::new(64)?
    } else if h.is_power_of_two() {
        HashSpace::new(h.trailing_zeros())?
    } else {
        return Err(LeadError::MalformedBlob(format!("hash space {h} is not a power of two")));
    };
    Ok(BlobHeader {
        version,
        branching,
        n,
        space,
        family,
    })
}

fn read_leaf(r: &mut Reader<'_>, family: LeafFamily) -> Result<LeafSegment> {
    let index = r.u32()?;
    let mut values = Vec::with_capacity(family.param_count());
    for _ in 0..family.param_count() {
        values.push(r.f32()? as f64);
    }
    let rank_lo = r.u64()?;
    let rank_hi = r.u64()?;
    if rank_lo > rank_hi {
        return Err(LeadError::MalformedBlob(format!("leaf {index}: inverted interval")));
    }
    Ok(LeafSegment {
        index,
        params: LeafParams::from_slice(family, &values),
        rank_lo,
        rank_hi,
    })
}

/// Parse a segment blob. The leaf count is implied by the length.
pub fn decode_segments(bytes: &[u8]) -> Result<SegmentBlob> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = read_header(&mut r)?;
    let rec = leaf_record_len(header.family);
    if r.remaining() % rec != 0 {
        return Err(LeadError::MalformedBlob("trailing bytes".into()));
    }
    let count = r.remaining() / rec;
    let mut leaves = Vec::with_capacity(count);
    for _ in 0..count {
        let seg = read_leaf(&mut r, header.family)?;
        if seg.index >= header.branching {
            return Err(LeadError::MalformedBlob(format!("leaf index {} out of range", seg.index)));
        }
        leaves.push(seg);
    }
    Ok(SegmentBlob { header, leaves })
}

/// Merge a segment blob into `model` by leaf index.
///
/// Blobs whose version does not exceed the model's are ignored and reported
/// as [`ApplyOutcome::Stale`].
pub fn apply_segments(model: &mut RmiModel, bytes: &[u8]) -> Result<ApplyOutcome> {
    let blob = decode_segments(bytes)?;
    let h = blob.header;
    if h.family != model.family()
        || h.branching as usize != model.branching()
        || h.space != model.space()
    {
        return Err(LeadError::IncompatibleModel(format!(
            "blob {} x{} vs model {} x{}",
            h.family,
            h.branching,
            model.family(),
            model.branching()
        )));
    }
    if h.version <= model.version() {
        return Ok(ApplyOutcome::Stale);
    }
    let count = blob.leaves.len();
    for seg in blob.leaves {
        model.leaves[seg.index as usize] = LeafModel {
            params: seg.params,
            anchor: Anchor::default(),
            rank_lo: seg.rank_lo,
            rank_hi: seg.rank_hi,
            stamp: h.version,
        };
        model.raw[seg.index as usize] = (seg.rank_lo, seg.rank_hi);
    }
    model.n = h.n;
    model.version = h.version;
    Ok(ApplyOutcome::Applied { leaves: count })
}

/// Inverse of [`serialize_full`]. Leaf stamps are set to the model version.
pub fn deserialize_full(bytes: &[u8]) -> Result<RmiModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let h = read_header(&mut r)?;
    let b = h.branching as usize;
    if r.remaining() != b * leaf_record_len(h.family) + ROUTER_LEN {
        return Err(LeadError::MalformedBlob("length does not match leaf count".into()));
    }
    let mut leaves = Vec::with_capacity(b);
    for j in 0..b {
        let seg = read_leaf(&mut r, h.family)?;
        if seg.index as usize != j {
            return Err(LeadError::MalformedBlob("leaves out of order".into()));
        }
        leaves.push(LeafModel {
            params: seg.params,
            anchor: Anchor::default(),
            rank_lo: seg.rank_lo,
            rank_hi: seg.rank_hi,
            stamp: h.version,
        });
    }
    let router = match r.u8()? {
        1 => Router::Linear {
            slope: r.f64()?,
            intercept: r.f64()?,
        },
        2 => Router::Radix {
            min_key: r.u64()?,
            shift: r.u64()? as u32,
        },
        k => return Err(LeadError::MalformedBlob(format!("unknown router kind {k}"))),
    };
    let key_floor = r.u64()?;
    Ok(RmiModel::from_parts(router, h.family, leaves, h.n, h.space, h.version)?.with_key_floor(key_floor))
}
