//! The fabric between compute and memory: READ / WRITE / FETCH-ADD verbs,
//! doorbell batching, and exact accounting of round trips and bytes.
//!
//! Two interchangeable backends: an in-process one dispatching straight to a
//! [`MemoryNode`], and a TCP one speaking the
//! length-prefixed frame protocol in [`wire`]. Both return identical bytes
//! and cost identical round trips for any request sequence; only the
//! simulated time model differs from wall time.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::memory::MemoryNode;

/// One remote read request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadSpec {
    pub offset: u64,
    pub len: u64,
}

impl ReadSpec {
    pub fn new(offset: u64, len: u64) -> Self {
        Self { offset, len }
    }
}

/// Per-handle fabric counters. `round_trips` is the primary cost unit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FabricStats {
    pub round_trips: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    /// Sub-reads issued inside doorbell batches.
    pub doorbell_ops: u64,
    /// Accumulated model time: per round trip, base_rtt + bytes/bandwidth
    /// plus a small per-op doorbell overhead. Reporting only.
    pub simulated_time_us: f64,
}

impl FabricStats {
    pub fn merge(&mut self, other: &FabricStats) {
        self.round_trips += other.round_trips;
        self.bytes_read += other.bytes_read;
        self.bytes_written += other.bytes_written;
        self.doorbell_ops += other.doorbell_ops;
        self.simulated_time_us += other.simulated_time_us;
    }

    /// Counter movement since `earlier` (which must be a prior snapshot of
    /// the same handle).
    pub fn delta_since(&self, earlier: &FabricStats) -> FabricStats {
        FabricStats {
            round_trips: self.round_trips - earlier.round_trips,
            bytes_read: self.bytes_read - earlier.bytes_read,
            bytes_written: self.bytes_written - earlier.bytes_written,
            doorbell_ops: self.doorbell_ops - earlier.doorbell_ops,
            simulated_time_us: self.simulated_time_us - earlier.simulated_time_us,
        }
    }
}

/// Cost-model knobs. The defaults match a 100 Gb-class NIC; they feed the
/// simulated time only, never correctness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FabricConfig {
    /// Max sub-reads per doorbell round trip.
    pub doorbell_max: usize,
    pub base_rtt_us: f64,
    pub bandwidth_gbps: f64,
}

impl Default for FabricConfig {
    fn default() -> Self {
        Self {
            doorbell_max: 8,
            base_rtt_us: 2.0,
            bandwidth_gbps: 100.0,
        }
    }
}

/// Model overhead per extra sub-read inside one doorbell, standing in for
/// the NIC scalability penalty of oversized batches.
pub const DOORBELL_OP_OVERHEAD_US: f64 = 0.1;

enum BackendImpl {
    Inproc(Arc<MemoryNode>),
    Tcp(TcpStream),
}

impl std::fmt::Debug for BackendImpl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendImpl::Inproc(_) => write!(f, "Inproc"),
            BackendImpl::Tcp(s) => write!(f, "Tcp({:?})", s.peer_addr()),
        }
    }
}

/// A connected fabric handle. One worker per handle; stats are per-handle
/// and mergeable.
#[derive(Debug)]
pub struct Transport {
    backend: Option<BackendImpl>,
    fabric: FabricConfig,
    stats: FabricStats,
}

impl Transport {
    pub fn connect_inproc(node: Arc<MemoryNode>, fabric: FabricConfig) -> Self {
        Self {
            backend: Some(BackendImpl::Inproc(node)),
            fabric,
            stats: FabricStats::default(),
        }
    }

    pub fn connect_tcp(address: &str, fabric: FabricConfig) -> Result<Self> {
        let stream = TcpStream::connect(address)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            backend: Some(BackendImpl::Tcp(stream)),
            fabric,
            stats: FabricStats::default(),
        })
    }

    pub fn fabric(&self) -> &FabricConfig {
        &self.fabric
    }

    pub fn doorbell_max(&self) -> usize {
        self.fabric.doorbell_max.max(1)
    }

    pub fn stats(&self) -> FabricStats {
        self.stats
    }

    /// Drop the backend; subsequent verbs fail without touching stats.
    pub fn disconnect(&mut self) {
        self.backend = None;
    }

    pub fn is_connected(&self) -> bool {
        self.backend.is_some()
    }

    fn backend(&mut self) -> Result<&mut BackendImpl> {
        self.backend.as_mut().ok_or(Error::Disconnected)
    }

    fn charge(&mut self, bytes: u64, doorbell_ops: usize) {
        self.stats.round_trips += 1;
        let mut time =
            self.fabric.base_rtt_us + (bytes as f64 * 8.0) / (self.fabric.bandwidth_gbps * 1000.0);
        if doorbell_ops > 1 {
            time += (doorbell_ops - 1) as f64 * DOORBELL_OP_OVERHEAD_US;
        }
        self.stats.simulated_time_us += time;
    }

    /// One remote read; exactly one round trip.
    pub fn read(&mut self, spec: ReadSpec) -> Result<Vec<u8>> {
        if spec.len == 0 {
            return Err(Error::InvalidParameter("zero-length read spec".into()));
        }
        let data = match self.backend()? {
            BackendImpl::Inproc(node) => node.region()?.read(spec.offset, spec.len)?,
            BackendImpl::Tcp(stream) => {
                let (status, payload) = tcp_request(stream, &wire::encode_read(spec))?;
                wire::check_status(status, spec.offset, spec.len)?;
                payload
            }
        };
        self.stats.bytes_read += data.len() as u64;
        self.charge(data.len() as u64, 0);
        Ok(data)
    }

    /// One remote write; exactly one round trip.
    pub fn write(&mut self, offset: u64, data: &[u8]) -> Result<()> {
        match self.backend()? {
            BackendImpl::Inproc(node) => node.region()?.write(offset, data)?,
            BackendImpl::Tcp(stream) => {
                let (status, _) = tcp_request(stream, &wire::encode_write(offset, data))?;
                wire::check_status(status, offset, data.len() as u64)?;
            }
        }
        self.stats.bytes_written += data.len() as u64;
        self.charge(data.len() as u64, 0);
        Ok(())
    }

    /// Remote atomic fetch-add on a little-endian u32; one round trip.
    pub fn fetch_add(&mut self, offset: u64, delta: u32) -> Result<u32> {
        let prev = match self.backend()? {
            BackendImpl::Inproc(node) => node.region()?.fetch_add(offset, delta)?,
            BackendImpl::Tcp(stream) => {
                let (status, payload) =
                    tcp_request(stream, &wire::encode_fetch_add(offset, delta))?;
                wire::check_status(status, offset, 4)?;
                if payload.len() != 4 {
                    return Err(Error::Protocol(format!(
                        "fetch-add reply of {} bytes",
                        payload.len()
                    )));
                }
                u32::from_le_bytes(payload.try_into().unwrap())
            }
        };
        self.charge(4, 0);
        Ok(prev)
    }

    /// Read many extents in `ceil(len / doorbell_max)` round trips. Results
    /// match `specs` positionally. A failed batch returns no partial results.
    pub fn doorbell_read(&mut self, specs: &[ReadSpec]) -> Result<Vec<Vec<u8>>> {
        if specs.is_empty() {
            return Err(Error::InvalidParameter("empty doorbell batch".into()));
        }
        let max_ops = self.doorbell_max();
        let mut results = Vec::with_capacity(specs.len());
        for chunk in specs.chunks(max_ops) {
            let chunk_results = match self.backend()? {
                BackendImpl::Inproc(node) => node.region()?.doorbell(chunk)?,
                BackendImpl::Tcp(stream) => {
                    let (status, payload) = tcp_request(stream, &wire::encode_doorbell(chunk))?;
                    wire::check_status(status, 0, 0)?;
                    let want: u64 = chunk.iter().map(|s| s.len).sum();
                    if payload.len() as u64 != want {
                        return Err(Error::Protocol(format!(
                            "doorbell reply of {} bytes, expected {want}",
                            payload.len()
                        )));
                    }
                    let mut out = Vec::with_capacity(chunk.len());
                    let mut at = 0usize;
                    for s in chunk {
                        out.push(payload[at..at + s.len as usize].to_vec());
                        at += s.len as usize;
                    }
                    out
                }
            };
            let bytes: u64 = chunk.iter().map(|s| s.len).sum();
            self.stats.bytes_read += bytes;
            self.stats.doorbell_ops += chunk.len() as u64;
            self.charge(bytes, chunk.len());
            results.extend(chunk_results);
        }
        Ok(results)
    }
}

fn tcp_request(stream: &mut TcpStream, frame: &[u8]) -> Result<(u8, Vec<u8>)> {
    stream.write_all(frame)?;
    let body = wire::read_frame(stream)?;
    let (&status, payload) = body
        .split_first()
        .ok_or_else(|| Error::Protocol("empty response frame".into()))?;
    Ok((status, payload.to_vec()))
}

/// The TCP frame protocol, little-endian throughout.
///
/// Requests: `u32 frame_len`, then `u8 opcode` and the opcode payload.
/// Responses mirror the framing with a status byte: `u32 frame_len`,
/// `u8 status`, payload (empty on error).
pub mod wire {
    use super::*;

    pub const OP_READ: u8 = 1;
    pub const OP_WRITE: u8 = 2;
    pub const OP_FAA: u8 = 3;
    pub const OP_DOORBELL: u8 = 4;

    pub const STATUS_OK: u8 = 0;
    pub const STATUS_OUT_OF_BOUNDS: u8 = 1;
    pub const STATUS_MISALIGNED: u8 = 2;
    pub const STATUS_BAD_FRAME: u8 = 3;
    pub const STATUS_NO_REGION: u8 = 4;

    /// Upper bound on accepted frame bodies; a frame never legitimately
    /// exceeds the region size plus a small header.
    pub const MAX_FRAME_LEN: u32 = 1 << 30;

    /// A decoded request frame body.
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub enum Request {
        Read(ReadSpec),
        Write { offset: u64, data: Vec<u8> },
        FetchAdd { offset: u64, delta: u32 },
        Doorbell(Vec<ReadSpec>),
    }

    fn frame(body: Vec<u8>) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn encode_read(spec: ReadSpec) -> Vec<u8> {
        let mut body = vec![OP_READ];
        body.extend_from_slice(&spec.offset.to_le_bytes());
        body.extend_from_slice(&spec.len.to_le_bytes());
        frame(body)
    }

    pub fn encode_write(offset: u64, data: &[u8]) -> Vec<u8> {
        let mut body = vec![OP_WRITE];
        body.extend_from_slice(&offset.to_le_bytes());
        body.extend_from_slice(data);
        frame(body)
    }

    pub fn encode_fetch_add(offset: u64, delta: u32) -> Vec<u8> {
        let mut body = vec![OP_FAA];
        body.extend_from_slice(&offset.to_le_bytes());
        body.extend_from_slice(&delta.to_le_bytes());
        frame(body)
    }

    pub fn encode_doorbell(specs: &[ReadSpec]) -> Vec<u8> {
        let mut body = vec![OP_DOORBELL];
        body.extend_from_slice(&(specs.len() as u32).to_le_bytes());
        for s in specs {
            body.extend_from_slice(&s.offset.to_le_bytes());
            body.extend_from_slice(&s.len.to_le_bytes());
        }
        frame(body)
    }

    pub fn encode_response(status: u8, payload: &[u8]) -> Vec<u8> {
        let mut body = Vec::with_capacity(1 + payload.len());
        body.push(status);
        body.extend_from_slice(payload);
        frame(body)
    }

    /// Decode a request frame body (without the length prefix).
    pub fn decode_request(body: &[u8]) -> Result<Request> {
        let bad = |msg: &str| Err(Error::Protocol(msg.into()));
        let Some((&op, rest)) = body.split_first() else {
            return bad("empty frame");
        };
        match op {
            OP_READ => {
                if rest.len() != 16 {
                    return bad("READ frame must carry offset and len");
                }
                Ok(Request::Read(ReadSpec {
                    offset: u64::from_le_bytes(rest[0..8].try_into().unwrap()),
                    len: u64::from_le_bytes(rest[8..16].try_into().unwrap()),
                }))
            }
            OP_WRITE => {
                if rest.len() < 8 {
                    return bad("WRITE frame shorter than its offset");
                }
                Ok(Request::Write {
                    offset: u64::from_le_bytes(rest[0..8].try_into().unwrap()),
                    data: rest[8..].to_vec(),
                })
            }
            OP_FAA => {
                if rest.len() != 12 {
                    return bad("FAA frame must carry offset and delta");
                }
                Ok(Request::FetchAdd {
                    offset: u64::from_le_bytes(rest[0..8].try_into().unwrap()),
                    delta: u32::from_le_bytes(rest[8..12].try_into().unwrap()),
                })
            }
            OP_DOORBELL => {
                if rest.len() < 4 {
                    return bad("DOORBELL frame shorter than its count");
                }
                let count = u32::from_le_bytes(rest[0..4].try_into().unwrap()) as usize;
                if rest.len() != 4 + count * 16 {
                    return bad("DOORBELL frame length does not match its count");
                }
                let specs = rest[4..]
                    .chunks_exact(16)
                    .map(|c| ReadSpec {
                        offset: u64::from_le_bytes(c[0..8].try_into().unwrap()),
                        len: u64::from_le_bytes(c[8..16].try_into().unwrap()),
                    })
                    .collect();
                Ok(Request::Doorbell(specs))
            }
            other => bad(&format!("unknown opcode {other}")),
        }
    }

    /// Read one length-prefixed frame body from `reader`.
    pub fn read_frame<R: Read>(reader: &mut R) -> Result<Vec<u8>> {
        let mut len = [0u8; 4];
        reader.read_exact(&mut len)?;
        let len = u32::from_le_bytes(len);
        if len > MAX_FRAME_LEN {
            return Err(Error::Protocol(format!("frame of {len} bytes refused")));
        }
        let mut body = vec![0u8; len as usize];
        reader.read_exact(&mut body)?;
        Ok(body)
    }

    pub fn error_to_status(err: &Error) -> u8 {
        match err {
            Error::OutOfBounds { .. } => STATUS_OUT_OF_BOUNDS,
            Error::Misaligned { .. } => STATUS_MISALIGNED,
            Error::NoRegion => STATUS_NO_REGION,
            _ => STATUS_BAD_FRAME,
        }
    }

    /// Map a response status back onto the local error variants. `offset`
    /// and `len` come from the request, since error responses carry no
    /// payload.
    pub fn check_status(status: u8, offset: u64, len: u64) -> Result<()> {
        match status {
            STATUS_OK => Ok(()),
            STATUS_OUT_OF_BOUNDS => Err(Error::OutOfBounds { offset, len }),
            STATUS_MISALIGNED => Err(Error::Misaligned { offset }),
            STATUS_NO_REGION => Err(Error::NoRegion),
            STATUS_BAD_FRAME => Err(Error::Protocol("rejected frame".into())),
            other => Err(Error::Protocol(format!("unknown status {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node_with_region(capacity: u64) -> Arc<MemoryNode> {
        let node = MemoryNode::new();
        node.register(capacity).unwrap();
        node
    }

    #[test]
    fn plain_reads_cost_one_round_trip_each() {
        let node = node_with_region(128);
        let mut t = Transport::connect_inproc(node, FabricConfig::default());
        for _ in 0..3 {
            t.read(ReadSpec::new(0, 16)).unwrap();
        }
        assert_eq!(t.stats().round_trips, 3);
        assert_eq!(t.stats().bytes_read, 48);
    }

    #[test]
    fn read_bytes_accounted() {
        let node = node_with_region(8192);
        let mut t = Transport::connect_inproc(node, FabricConfig::default());
        t.read(ReadSpec::new(0, 4096)).unwrap();
        assert_eq!(t.stats().bytes_read, 4096);
    }

    #[test]
    fn disconnected_read_fails_without_stats() {
        let node = node_with_region(64);
        let mut t = Transport::connect_inproc(node, FabricConfig::default());
        t.read(ReadSpec::new(0, 8)).unwrap();
        let before = t.stats();
        t.disconnect();
        assert!(matches!(
            t.read(ReadSpec::new(0, 8)),
            Err(Error::Disconnected)
        ));
        assert_eq!(t.stats(), before);
    }

    #[test]
    fn doorbell_round_trip_arithmetic() {
        let node = node_with_region(4096);
        let mut t = Transport::connect_inproc(Arc::clone(&node), FabricConfig::default());
        let specs: Vec<ReadSpec> = (0..3).map(|i| ReadSpec::new(i * 8, 8)).collect();
        t.doorbell_read(&specs).unwrap();
        assert_eq!(t.stats().round_trips, 1); // ceil(3/8)
        assert_eq!(t.stats().doorbell_ops, 3);

        let mut t = Transport::connect_inproc(
            Arc::clone(&node),
            FabricConfig {
                doorbell_max: 4,
                ..FabricConfig::default()
            },
        );
        let specs: Vec<ReadSpec> = (0..10).map(|i| ReadSpec::new(i * 8, 8)).collect();
        t.doorbell_read(&specs).unwrap();
        assert_eq!(t.stats().round_trips, 3); // ceil(10/4)

        // Two fragmented extents in one round trip.
        let mut t = Transport::connect_inproc(
            node,
            FabricConfig {
                doorbell_max: 2,
                ..FabricConfig::default()
            },
        );
        t.doorbell_read(&[ReadSpec::new(0, 64), ReadSpec::new(1024, 64)])
            .unwrap();
        assert_eq!(t.stats().round_trips, 1);
    }

    #[test]
    fn doorbell_results_match_specs_positionally() {
        let node = node_with_region(64);
        node.region().unwrap().write(0, &[1; 8]).unwrap();
        node.region().unwrap().write(16, &[2; 4]).unwrap();
        let mut t = Transport::connect_inproc(node, FabricConfig::default());
        let out = t
            .doorbell_read(&[ReadSpec::new(16, 4), ReadSpec::new(0, 8)])
            .unwrap();
        assert_eq!(out[0], vec![2; 4]);
        assert_eq!(out[1], vec![1; 8]);
    }

    #[test]
    fn doorbell_with_unit_batch_costs_like_plain_reads() {
        let node = node_with_region(256);
        let specs: Vec<ReadSpec> = (0..5).map(|i| ReadSpec::new(i * 4, 4)).collect();
        let mut a = Transport::connect_inproc(
            Arc::clone(&node),
            FabricConfig {
                doorbell_max: 1,
                ..FabricConfig::default()
            },
        );
        let da = a.doorbell_read(&specs).unwrap();
        let mut b = Transport::connect_inproc(node, FabricConfig::default());
        let db: Vec<Vec<u8>> = specs.iter().map(|&s| b.read(s).unwrap()).collect();
        assert_eq!(da, db);
        assert_eq!(a.stats().round_trips, b.stats().round_trips);
        assert_eq!(a.stats().bytes_read, b.stats().bytes_read);
        assert_eq!(a.stats().simulated_time_us, b.stats().simulated_time_us);
    }

    #[test]
    fn doorbell_failure_is_atomic() {
        let node = node_with_region(64);
        let mut t = Transport::connect_inproc(node, FabricConfig::default());
        let before = t.stats();
        let result = t.doorbell_read(&[ReadSpec::new(0, 8), ReadSpec::new(60, 8)]);
        assert!(matches!(result, Err(Error::OutOfBounds { .. })));
        assert_eq!(t.stats(), before);
    }

    #[test]
    fn fetch_add_via_transport() {
        let node = node_with_region(16);
        let mut t = Transport::connect_inproc(node, FabricConfig::default());
        assert_eq!(t.fetch_add(4, 2).unwrap(), 0);
        assert_eq!(t.fetch_add(4, 1).unwrap(), 2);
        assert_eq!(t.stats().round_trips, 2);
    }

    #[test]
    fn tcp_connect_to_closed_port_fails() {
        assert!(Transport::connect_tcp("127.0.0.1:1", FabricConfig::default()).is_err());
    }

    #[test]
    fn tcp_backend_matches_inproc() {
        let node = node_with_region(512);
        node.region().unwrap().write(100, b"hello").unwrap();
        let server = crate::memory::spawn_server(Arc::clone(&node), "127.0.0.1:0").unwrap();
        let mut tcp =
            Transport::connect_tcp(&server.addr().to_string(), FabricConfig::default()).unwrap();
        let mut inp = Transport::connect_inproc(Arc::clone(&node), FabricConfig::default());

        assert_eq!(
            tcp.read(ReadSpec::new(100, 5)).unwrap(),
            inp.read(ReadSpec::new(100, 5)).unwrap()
        );
        tcp.write(0, &[9, 9]).unwrap();
        assert_eq!(inp.read(ReadSpec::new(0, 2)).unwrap(), vec![9, 9]);
        assert_eq!(tcp.fetch_add(4, 10).unwrap(), 0);
        assert_eq!(inp.fetch_add(4, 1).unwrap(), 10);
        let specs = [ReadSpec::new(0, 2), ReadSpec::new(100, 5)];
        assert_eq!(
            tcp.doorbell_read(&specs).unwrap(),
            inp.doorbell_read(&specs).unwrap()
        );
        assert_eq!(tcp.stats().round_trips, inp.stats().round_trips);
        assert!(matches!(
            tcp.read(ReadSpec::new(500, 100)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn wire_frames_are_bit_exact() {
        let frame = wire::encode_read(ReadSpec::new(0x1122, 0x10));
        let mut expect = vec![17, 0, 0, 0, wire::OP_READ];
        expect.extend_from_slice(&0x1122u64.to_le_bytes());
        expect.extend_from_slice(&0x10u64.to_le_bytes());
        assert_eq!(frame, expect);

        let frame = wire::encode_fetch_add(8, 3);
        let mut expect = vec![13, 0, 0, 0, wire::OP_FAA];
        expect.extend_from_slice(&8u64.to_le_bytes());
        expect.extend_from_slice(&3u32.to_le_bytes());
        assert_eq!(frame, expect);

        let frame = wire::encode_doorbell(&[ReadSpec::new(1, 2), ReadSpec::new(3, 4)]);
        let mut expect = vec![37, 0, 0, 0, wire::OP_DOORBELL];
        expect.extend_from_slice(&2u32.to_le_bytes());
        for (o, l) in [(1u64, 2u64), (3, 4)] {
            expect.extend_from_slice(&o.to_le_bytes());
            expect.extend_from_slice(&l.to_le_bytes());
        }
        assert_eq!(frame, expect);
    }

    #[test]
    fn wire_request_round_trip() {
        let reqs = [
            wire::Request::Read(ReadSpec::new(5, 10)),
            wire::Request::Write {
                offset: 9,
                data: vec![1, 2, 3],
            },
            wire::Request::FetchAdd {
                offset: 4,
                delta: 7,
            },
            wire::Request::Doorbell(vec![ReadSpec::new(0, 1), ReadSpec::new(2, 3)]),
        ];
        for req in reqs {
            let frame = match &req {
                wire::Request::Read(s) => wire::encode_read(*s),
                wire::Request::Write { offset, data } => wire::encode_write(*offset, data),
                wire::Request::FetchAdd { offset, delta } => {
                    wire::encode_fetch_add(*offset, *delta)
                }
                wire::Request::Doorbell(specs) => wire::encode_doorbell(specs),
            };
            let decoded = wire::decode_request(&frame[4..]).unwrap();
            assert_eq!(decoded, req);
        }
        assert!(wire::decode_request(&[99]).is_err());
        assert!(wire::decode_request(&[]).is_err());
    }
}
