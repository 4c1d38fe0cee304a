//! Byte formats for remote memory: serialized sub-clusters, the group layout
//! with shared overflow regions, and the versioned cluster directory.
//!
//! Everything here is little-endian and bit-exact; these bytes are the wire
//! and storage contract. The registered region starts with the directory,
//! followed by groups of `[head cluster][shared overflow][tail cluster]`.
//! Head and tail each read their cluster plus the whole overflow span as one
//! contiguous extent, so a single READ always observes every appended vector.

use crate::error::{Error, Result};
use crate::hnsw::{HnswGraph, HnswParams};
use crate::partition::SubCluster;

pub const DIRECTORY_MAGIC: [u8; 4] = *b"DHNM";
pub const CLUSTER_MAGIC: [u8; 4] = *b"DSUB";

/// Directory header bytes before the per-cluster entries.
pub const DIRECTORY_HEADER_LEN: u64 = 24;
/// Bytes per directory entry.
pub const DIRECTORY_ENTRY_LEN: u64 = 37;
/// Overflow region header: `low_count: u32, high_count: u32`.
pub const OVERFLOW_HEADER_LEN: u64 = 8;

/// Default per-group overflow capacity for a given vector width, scaled from
/// the reference configurations (0.75 MB for 128-d, 3.92 MB for 960-d data).
pub fn default_overflow_capacity(dim: usize) -> u64 {
    if dim <= 256 {
        750_000
    } else {
        3_920_000
    }
}

/// Bytes of one overflow entry: id plus the vector payload.
pub fn overflow_entry_len(dim: usize) -> u64 {
    8 + 4 * dim as u64
}

/// How many entries a shared overflow region can hold in total (low + high).
pub fn overflow_entry_limit(capacity: u64, dim: usize) -> u64 {
    capacity.saturating_sub(OVERFLOW_HEADER_LEN) / overflow_entry_len(dim)
}

/// Which end of a group a cluster occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Head = 0,
    Tail = 1,
}

impl Slot {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Slot::Head),
            1 => Ok(Slot::Tail),
            other => Err(Error::Corrupt(format!("invalid slot byte {other}"))),
        }
    }
}

/// Placement of one cluster inside the region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectoryEntry {
    pub group_index: u32,
    pub slot: Slot,
    pub cluster_offset: u64,
    /// Stored length of the cluster blob, padded to 4 bytes so the overflow
    /// counters that follow stay aligned for fetch-add.
    pub cluster_len: u64,
    pub overflow_offset: u64,
    pub overflow_capacity: u64,
}

/// The global metadata block at the start of the region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDirectory {
    pub version: u64,
    pub dim: u32,
    pub num_groups: u32,
    pub entries: Vec<DirectoryEntry>,
}

/// How clusters are paired into groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairingPolicy {
    /// Cluster `2i` heads group `i`, cluster `2i + 1` is its tail.
    #[default]
    Sequential,
}

fn align4(v: u64) -> u64 {
    (v + 3) & !3
}

/// Lay out `cluster_sizes.len()` clusters into groups of two around shared
/// overflow regions. Sizes are the exact encoded blob lengths.
pub fn plan_layout(
    dim: u32,
    version: u64,
    cluster_sizes: &[u64],
    overflow_capacity: u64,
    policy: PairingPolicy,
) -> Result<ClusterDirectory> {
    if cluster_sizes.is_empty() {
        return Err(Error::EmptyInput);
    }
    if overflow_capacity < OVERFLOW_HEADER_LEN {
        return Err(Error::InvalidParameter(format!(
            "overflow capacity {overflow_capacity} smaller than its {OVERFLOW_HEADER_LEN}-byte header"
        )));
    }
    let PairingPolicy::Sequential = policy;
    let overflow_capacity = align4(overflow_capacity);

    let n = cluster_sizes.len();
    let num_groups = n.div_ceil(2) as u32;
    let mut entries: Vec<DirectoryEntry> = Vec::with_capacity(n);
    let mut cursor = align4(DIRECTORY_HEADER_LEN + DIRECTORY_ENTRY_LEN * n as u64);

    for group in 0..num_groups {
        let head = group as usize * 2;
        let head_len = align4(cluster_sizes[head]);
        let head_offset = cursor;
        let overflow_offset = head_offset + head_len;
        let tail_offset = overflow_offset + overflow_capacity;
        entries.push(DirectoryEntry {
            group_index: group,
            slot: Slot::Head,
            cluster_offset: head_offset,
            cluster_len: head_len,
            overflow_offset,
            overflow_capacity,
        });
        cursor = tail_offset;
        if let Some(&tail_size) = cluster_sizes.get(head + 1) {
            let tail_len = align4(tail_size);
            entries.push(DirectoryEntry {
                group_index: group,
                slot: Slot::Tail,
                cluster_offset: tail_offset,
                cluster_len: tail_len,
                overflow_offset,
                overflow_capacity,
            });
            cursor = tail_offset + tail_len;
        }
    }

    Ok(ClusterDirectory {
        version,
        dim,
        num_groups,
        entries,
    })
}

impl ClusterDirectory {
    pub fn num_clusters(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, cluster_id: u32) -> Result<&DirectoryEntry> {
        self.entries
            .get(cluster_id as usize)
            .ok_or(Error::UnknownCluster(cluster_id))
    }

    /// Serialized directory size for `n` clusters.
    pub fn byte_len_for(n: usize) -> u64 {
        DIRECTORY_HEADER_LEN + DIRECTORY_ENTRY_LEN * n as u64
    }

    pub fn byte_len(&self) -> u64 {
        Self::byte_len_for(self.entries.len())
    }

    /// One past the last byte of the last group: the region capacity this
    /// layout needs.
    pub fn region_len(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| {
                (e.cluster_offset + e.cluster_len).max(e.overflow_offset + e.overflow_capacity)
            })
            .max()
            .unwrap_or(self.byte_len())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len() as usize);
        out.extend_from_slice(&DIRECTORY_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.num_groups.to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.group_index.to_le_bytes());
            out.push(e.slot as u8);
            out.extend_from_slice(&e.cluster_offset.to_le_bytes());
            out.extend_from_slice(&e.cluster_len.to_le_bytes());
            out.extend_from_slice(&e.overflow_offset.to_le_bytes());
            out.extend_from_slice(&e.overflow_capacity.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take::<4>()?;
        if magic != DIRECTORY_MAGIC {
            return Err(Error::BadMagic {
                expected: DIRECTORY_MAGIC,
                got: magic,
            });
        }
        let version = r.u64()?;
        let dim = r.u32()?;
        let num_clusters = r.u32()? as usize;
        let num_groups = r.u32()?;
        let mut entries =
            Vec::with_capacity(num_clusters.min(bytes.len() / DIRECTORY_ENTRY_LEN as usize + 1));
        for _ in 0..num_clusters {
            entries.push(DirectoryEntry {
                group_index: r.u32()?,
                slot: Slot::from_u8(r.u8()?)?,
                cluster_offset: r.u64()?,
                cluster_len: r.u64()?,
                overflow_offset: r.u64()?,
                overflow_capacity: r.u64()?,
            });
        }
        Ok(Self {
            version,
            dim,
            num_groups,
            entries,
        })
    }

    /// Human-readable rendering for the `layout dump` subcommand.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "directory version {} | dim {} | {} clusters in {} groups | {} bytes",
            self.version,
            self.dim,
            self.entries.len(),
            self.num_groups,
            self.byte_len()
        );
        let _ = writeln!(
            s,
            "{:>8}  {:>6}  {:>5}  {:>12}  {:>12}  {:>12}  {:>12}",
            "cluster", "group", "slot", "offset", "len", "ovfl_off", "ovfl_cap"
        );
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>8}  {:>6}  {:>5}  {:>12}  {:>12}  {:>12}  {:>12}",
                i,
                e.group_index,
                match e.slot {
                    Slot::Head => "head",
                    Slot::Tail => "tail",
                },
                e.cluster_offset,
                e.cluster_len,
                e.overflow_offset,
                e.overflow_capacity
            );
        }
        let _ = write!(s, "region length {} bytes", self.region_len());
        s
    }
}

/// The single contiguous span that serves a cluster and its overflow slot in
/// one READ: `[cluster][overflow]` for heads, `[overflow][cluster]` for tails.
pub fn contiguous_read_extent(dir: &ClusterDirectory, cluster_id: u32) -> Result<(u64, u64)> {
    let e = dir.entry(cluster_id)?;
    Ok(match e.slot {
        Slot::Head => (e.cluster_offset, e.cluster_len + e.overflow_capacity),
        Slot::Tail => (e.overflow_offset, e.overflow_capacity + e.cluster_len),
    })
}

// ---------------------------------------------------------------------------
// Cluster codec
// ---------------------------------------------------------------------------

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(Error::Truncated { offset: self.pos });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(out)
    }

    fn slice(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .ok_or(Error::Truncated { offset: self.pos })?;
        if end > self.bytes.len() {
            return Err(Error::Truncated { offset: self.pos });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take::<4>()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take::<8>()?))
    }
}

/// Serialize a sub-cluster: header, per-node levels, per-layer adjacency,
/// vector ids, vector data, crc32 trailer.
pub fn encode_cluster(sub: &SubCluster<f32>) -> Vec<u8> {
    let g = &sub.graph;
    let n = g.len();
    let mut out = Vec::new();
    out.extend_from_slice(&CLUSTER_MAGIC);
    out.extend_from_slice(&sub.cluster_id.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    out.extend_from_slice(&g.entry_point_index().unwrap_or(0).to_le_bytes());
    out.push(g.max_level() as u8);
    for i in 0..n as u32 {
        out.push(g.node_level(i) as u8);
    }
    for i in 0..n as u32 {
        for layer in 0..=g.node_level(i) {
            let nbrs = g.node_neighbors(i, layer);
            out.extend_from_slice(&(nbrs.len() as u32).to_le_bytes());
            for &nb in nbrs {
                out.extend_from_slice(&nb.to_le_bytes());
            }
        }
    }
    for id in g.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for i in 0..n as u32 {
        for &v in g.node_vector(i) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Header-only blob for a partition that attracted no vectors.
pub fn encode_empty_cluster(cluster_id: u32, dim: u32) -> Vec<u8> {
    encode_cluster(&SubCluster {
        cluster_id,
        graph: HnswGraph::new(dim as usize, HnswParams::default()),
    })
}

/// Decode a serialized cluster. The slice may carry trailing padding (the
/// stored length is 4-byte aligned); the structural length is derived from
/// the header and the crc sits right after it. Any corrupted byte fails the
/// checksum; truncation and impossible counts fail their bounds checks.
pub fn decode_cluster(bytes: &[u8]) -> Result<SubCluster<f32>> {
    let mut r = Reader::new(bytes);
    let magic = r.take::<4>()?;
    if magic != CLUSTER_MAGIC {
        return Err(Error::BadMagic {
            expected: CLUSTER_MAGIC,
            got: magic,
        });
    }
    let cluster_id = r.u32()?;
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let entry_point = r.u32()?;
    let max_level = r.u8()? as usize;

    let levels_raw = r.slice(n)?;
    let levels: Vec<usize> = levels_raw.iter().map(|&b| b as usize).collect();

    let mut neighbors: Vec<Vec<Vec<u32>>> = Vec::with_capacity(n);
    for &level in &levels {
        let mut layers = Vec::with_capacity(level + 1);
        for _ in 0..=level {
            let count = r.u32()? as usize;
            let raw = r.slice(
                count
                    .checked_mul(4)
                    .ok_or(Error::Truncated { offset: r.pos })?,
            )?;
            let list: Vec<u32> = raw
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            layers.push(list);
        }
        neighbors.push(layers);
    }

    let ids_raw = r.slice(n.checked_mul(8).ok_or(Error::Truncated { offset: r.pos })?)?;
    let ids: Vec<u64> = ids_raw
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let data_len = n
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .ok_or(Error::Truncated { offset: r.pos })?;
    let data_raw = r.slice(data_len)?;
    let data: Vec<f32> = data_raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let payload_end = r.pos;
    let stored = r.u32()?;
    let computed = crc32fast::hash(&bytes[..payload_end]);
    if stored != computed {
        return Err(Error::CrcMismatch { stored, computed });
    }

    let graph = HnswGraph::from_parts(
        dim,
        HnswParams::default(),
        ids,
        data,
        levels,
        neighbors,
        if n == 0 { None } else { Some(entry_point) },
        max_level,
    )?;
    Ok(SubCluster { cluster_id, graph })
}

// ---------------------------------------------------------------------------
// Overflow region
// ---------------------------------------------------------------------------

/// A vector appended after the initial build.
#[derive(Debug, Clone, PartialEq)]
pub struct OverflowEntry {
    pub id: u64,
    pub values: Vec<f32>,
}

impl OverflowEntry {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.values.len());
        out.extend_from_slice(&self.id.to_le_bytes());
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// Current occupancy of a shared overflow region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OverflowHeader {
    pub low_count: u32,
    pub high_count: u32,
}

impl OverflowHeader {
    pub fn parse(region: &[u8]) -> Result<Self> {
        if region.len() < OVERFLOW_HEADER_LEN as usize {
            return Err(Error::Truncated { offset: 0 });
        }
        Ok(Self {
            low_count: u32::from_le_bytes(region[0..4].try_into().unwrap()),
            high_count: u32::from_le_bytes(region[4..8].try_into().unwrap()),
        })
    }

    fn store(&self, region: &mut [u8]) {
        region[0..4].copy_from_slice(&self.low_count.to_le_bytes());
        region[4..8].copy_from_slice(&self.high_count.to_le_bytes());
    }
}

/// Byte offset of entry `index` on the given side of a region of `capacity`
/// bytes. Low entries grow forward from the header; high entries grow
/// backward from the region end, keeping each side contiguous with the
/// cluster bytes that precede or follow the region.
pub fn overflow_entry_offset(slot: Slot, index: u32, capacity: u64, dim: usize) -> u64 {
    let entry = overflow_entry_len(dim);
    match slot {
        Slot::Head => OVERFLOW_HEADER_LEN + index as u64 * entry,
        Slot::Tail => capacity - (index as u64 + 1) * entry,
    }
}

/// Append `entry` on `slot`'s side of the region, updating the header in
/// place. Fails with a capacity error when the low and high watermarks would
/// cross (the cluster then needs a rebuild, which is out of scope here).
pub fn append_overflow(
    region: &mut [u8],
    slot: Slot,
    entry: &OverflowEntry,
) -> Result<(OverflowHeader, u64)> {
    let capacity = region.len() as u64;
    let dim = entry.values.len();
    let entry_len = overflow_entry_len(dim);
    let mut header = OverflowHeader::parse(region)?;
    let used =
        OVERFLOW_HEADER_LEN + (header.low_count as u64 + header.high_count as u64 + 1) * entry_len;
    if used > capacity {
        return Err(Error::CapacityExceeded {
            needed: used,
            available: capacity,
        });
    }
    let index = match slot {
        Slot::Head => {
            let i = header.low_count;
            header.low_count += 1;
            i
        }
        Slot::Tail => {
            let i = header.high_count;
            header.high_count += 1;
            i
        }
    };
    let offset = overflow_entry_offset(slot, index, capacity, dim);
    region[offset as usize..offset as usize + entry_len as usize].copy_from_slice(&entry.encode());
    header.store(region);
    Ok((header, offset))
}

/// Read back both sides of an overflow region.
pub fn parse_overflow(
    region: &[u8],
    dim: usize,
) -> Result<(Vec<OverflowEntry>, Vec<OverflowEntry>)> {
    let capacity = region.len() as u64;
    let header = OverflowHeader::parse(region)?;
    let entry_len = overflow_entry_len(dim);
    let used =
        OVERFLOW_HEADER_LEN + (header.low_count as u64 + header.high_count as u64) * entry_len;
    if used > capacity {
        return Err(Error::Corrupt(format!(
            "overflow counts ({}, {}) exceed capacity {capacity}",
            header.low_count, header.high_count
        )));
    }
    let decode_at = |offset: u64| -> OverflowEntry {
        let s = &region[offset as usize..(offset + entry_len) as usize];
        let id = u64::from_le_bytes(s[0..8].try_into().unwrap());
        let values = s[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        OverflowEntry { id, values }
    };
    let low = (0..header.low_count)
        .map(|i| decode_at(overflow_entry_offset(Slot::Head, i, capacity, dim)))
        .collect();
    let high = (0..header.high_count)
        .map(|i| decode_at(overflow_entry_offset(Slot::Tail, i, capacity, dim)))
        .collect();
    Ok((low, high))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hnsw::{HnswParams, SearchParams, VectorRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded_cluster(id: u32, n: usize, dim: usize, seed: u64) -> SubCluster<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<VectorRecord<f32>> = (0..n)
            .map(|i| {
                VectorRecord::new(
                    seed * 10_000 + i as u64,
                    (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
                )
            })
            .collect();
        SubCluster {
            cluster_id: id,
            graph: HnswGraph::build(&records, HnswParams::default().with_seed(seed)).unwrap(),
        }
    }

    #[test]
    fn empty_cluster_round_trips() {
        let blob = encode_empty_cluster(3, 16);
        assert_eq!(blob.len(), 25); // header + crc only
        let decoded = decode_cluster(&blob).unwrap();
        assert_eq!(decoded.cluster_id, 3);
        assert!(decoded.graph.is_empty());
        assert_eq!(decoded.graph.dim(), 16);
        assert_eq!(encode_cluster(&decoded), blob);
    }

    #[test]
    fn round_trip_preserves_search_behaviour() {
        let sub = seeded_cluster(1, 100, 8, 42);
        let decoded = decode_cluster(&encode_cluster(&sub)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let q: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let a = sub.graph.search_knn(&q, SearchParams::new(5, 32)).unwrap();
            let b = decoded
                .graph
                .search_knn(&q, SearchParams::new(5, 32))
                .unwrap();
            assert_eq!(a, b);
        }
        // Re-encode must be byte identical.
        assert_eq!(encode_cluster(&decoded), encode_cluster(&sub));
    }

    #[test]
    fn corruption_is_detected() {
        let sub = seeded_cluster(2, 30, 4, 9);
        let blob = encode_cluster(&sub);
        for pos in [4usize, 9, 20, blob.len() / 2, blob.len() - 2] {
            let mut bad = blob.clone();
            bad[pos] ^= 0x40;
            assert!(
                decode_cluster(&bad).is_err(),
                "flip at {pos} went unnoticed"
            );
        }
    }

    #[test]
    fn truncation_is_detected() {
        let sub = seeded_cluster(2, 10, 4, 10);
        let blob = encode_cluster(&sub);
        assert!(matches!(
            decode_cluster(&blob[..blob.len() - 6]),
            Err(Error::Truncated { .. }) | Err(Error::CrcMismatch { .. })
        ));
    }

    #[test]
    fn trailing_padding_is_ignored() {
        let sub = seeded_cluster(5, 17, 3, 11);
        let mut blob = encode_cluster(&sub);
        let unpadded = blob.len();
        blob.resize(align4(unpadded as u64) as usize + 8, 0);
        let decoded = decode_cluster(&blob).unwrap();
        assert_eq!(encode_cluster(&decoded).len(), unpadded);
    }

    #[test]
    fn four_clusters_two_groups() {
        let sizes = [100, 200, 300, 400];
        let dir = plan_layout(8, 1, &sizes, 1000, PairingPolicy::Sequential).unwrap();
        assert_eq!(dir.num_groups, 2);
        assert_eq!(dir.entries.len(), 4);
        let dir_end = align4(ClusterDirectory::byte_len_for(4));
        assert_eq!(dir.entries[0].cluster_offset, dir_end);
        assert_eq!(dir.entries[0].slot, Slot::Head);
        assert_eq!(dir.entries[1].slot, Slot::Tail);
        // Group 1 starts right after group 0's tail cluster.
        let g0_end = dir.entries[1].cluster_offset + dir.entries[1].cluster_len;
        assert_eq!(dir.entries[2].cluster_offset, g0_end);
        // Group members share one overflow region placed between them.
        assert_eq!(
            dir.entries[0].overflow_offset,
            dir.entries[1].overflow_offset
        );
        assert_eq!(
            dir.entries[0].cluster_offset + dir.entries[0].cluster_len,
            dir.entries[0].overflow_offset
        );
        assert_eq!(
            dir.entries[0].overflow_offset + dir.entries[0].overflow_capacity,
            dir.entries[1].cluster_offset
        );
    }

    #[test]
    fn odd_cluster_count_leaves_tail_empty() {
        let sizes = [64, 64, 64, 64, 64];
        let dir = plan_layout(4, 1, &sizes, 100, PairingPolicy::Sequential).unwrap();
        assert_eq!(dir.num_groups, 3);
        assert_eq!(dir.entries.len(), 5);
        assert_eq!(dir.entries[4].slot, Slot::Head);
        assert_eq!(dir.entries[4].group_index, 2);
    }

    #[test]
    fn reference_overflow_capacities() {
        assert_eq!(default_overflow_capacity(128), 750_000);
        assert_eq!(default_overflow_capacity(960), 3_920_000);
    }

    #[test]
    fn zero_clusters_rejected() {
        assert!(matches!(
            plan_layout(4, 1, &[], 100, PairingPolicy::Sequential),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn extents_cover_cluster_and_overflow() {
        let sizes = [120, 80];
        let dir = plan_layout(4, 1, &sizes, 400, PairingPolicy::Sequential).unwrap();
        let head = dir.entry(0).unwrap();
        let tail = dir.entry(1).unwrap();
        let (ho, hl) = contiguous_read_extent(&dir, 0).unwrap();
        assert_eq!(ho, head.cluster_offset);
        assert_eq!(hl, head.cluster_len + head.overflow_capacity);
        let (to, tl) = contiguous_read_extent(&dir, 1).unwrap();
        assert_eq!(to, tail.overflow_offset);
        assert_eq!(tl, tail.overflow_capacity + tail.cluster_len);
        // The two extents overlap exactly on the shared overflow region.
        let overlap_start = to.max(ho);
        let overlap_end = (ho + hl).min(to + tl);
        assert_eq!(overlap_start, head.overflow_offset);
        assert_eq!(overlap_end, head.overflow_offset + head.overflow_capacity);
        assert!(matches!(
            contiguous_read_extent(&dir, 9),
            Err(Error::UnknownCluster(9))
        ));
    }

    #[test]
    fn directory_round_trips() {
        let dir = plan_layout(32, 7, &[10, 20, 30], 256, PairingPolicy::Sequential).unwrap();
        let bytes = dir.encode();
        assert_eq!(bytes.len() as u64, dir.byte_len());
        let decoded = ClusterDirectory::decode(&bytes).unwrap();
        assert_eq!(decoded, dir);
    }

    #[test]
    fn fresh_overflow_parses_empty() {
        let region = vec![0u8; 200];
        let (low, high) = parse_overflow(&region, 4).unwrap();
        assert!(low.is_empty());
        assert!(high.is_empty());
    }

    #[test]
    fn append_and_parse_both_sides() {
        let dim = 3;
        let mut region = vec![0u8; 256];
        for i in 0..3u64 {
            let e = OverflowEntry {
                id: 100 + i,
                values: vec![i as f32, 0.0, 1.0],
            };
            append_overflow(&mut region, Slot::Head, &e).unwrap();
        }
        for i in 0..2u64 {
            let e = OverflowEntry {
                id: 200 + i,
                values: vec![0.0, i as f32, 2.0],
            };
            append_overflow(&mut region, Slot::Tail, &e).unwrap();
        }
        let (low, high) = parse_overflow(&region, dim).unwrap();
        assert_eq!(
            low.iter().map(|e| e.id).collect::<Vec<_>>(),
            vec![100, 101, 102]
        );
        assert_eq!(
            high.iter().map(|e| e.id).collect::<Vec<_>>(),
            vec![200, 201]
        );
        assert_eq!(low[1].values, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn capacity_boundary_is_exact() {
        let dim = 2;
        let entry_len = overflow_entry_len(dim) as usize;
        let mut region = vec![0u8; OVERFLOW_HEADER_LEN as usize + 2 * entry_len];
        let e = OverflowEntry {
            id: 1,
            values: vec![0.0, 0.0],
        };
        append_overflow(&mut region, Slot::Head, &e).unwrap();
        let e2 = OverflowEntry {
            id: 2,
            values: vec![1.0, 1.0],
        };
        append_overflow(&mut region, Slot::Tail, &e2).unwrap();
        let e3 = OverflowEntry {
            id: 3,
            values: vec![2.0, 2.0],
        };
        assert!(matches!(
            append_overflow(&mut region, Slot::Head, &e3),
            Err(Error::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn layout_dump_is_readable() {
        let dir = plan_layout(16, 3, &[50, 60], 128, PairingPolicy::Sequential).unwrap();
        let text = dir.dump();
        assert!(text.contains("version 3"));
        assert!(text.contains("head"));
        assert!(text.contains("tail"));
    }
}
