//! The memory-pool side: a passive byte region served by offset.
//!
//! The node registers one contiguous region and answers READ / WRITE /
//! FETCH-ADD / doorbell requests. It never deserializes, searches, or
//! inspects cluster contents — no operation here takes an index-aware type.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;

use crate::error::{Error, Result};
use crate::transport::ReadSpec;

/// A registered byte region. Reads run concurrently; writes and fetch-adds
/// serialize behind the write lock, which makes fetch-add linearizable.
#[derive(Debug)]
pub struct Region {
    token: u64,
    bytes: RwLock<Vec<u8>>,
    capacity: u64,
}

impl Region {
    pub fn token(&self) -> u64 {
        self.token
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    fn check_bounds(&self, offset: u64, len: u64) -> Result<()> {
        let end = offset
            .checked_add(len)
            .ok_or(Error::OutOfBounds { offset, len })?;
        if end > self.capacity {
            return Err(Error::OutOfBounds { offset, len });
        }
        Ok(())
    }

    pub fn read(&self, offset: u64, len: u64) -> Result<Vec<u8>> {
        self.check_bounds(offset, len)?;
        let bytes = self.bytes.read();
        Ok(bytes[offset as usize..(offset + len) as usize].to_vec())
    }

    pub fn write(&self, offset: u64, data: &[u8]) -> Result<()> {
        self.check_bounds(offset, data.len() as u64)?;
        let mut bytes = self.bytes.write();
        bytes[offset as usize..offset as usize + data.len()].copy_from_slice(data);
        Ok(())
    }

    /// Atomic fetch-add on a little-endian u32. Returns the previous value.
    /// Wraps on overflow, so a delta of `u32::MAX` acts as a decrement.
    pub fn fetch_add(&self, offset: u64, delta: u32) -> Result<u32> {
        if !offset.is_multiple_of(4) {
            return Err(Error::Misaligned { offset });
        }
        self.check_bounds(offset, 4)?;
        let mut bytes = self.bytes.write();
        let at = offset as usize;
        let prev = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        bytes[at..at + 4].copy_from_slice(&prev.wrapping_add(delta).to_le_bytes());
        Ok(prev)
    }

    /// Serve a doorbell batch: validate every spec first, then read them all
    /// under one lock so the batch fails or succeeds as a unit.
    pub fn doorbell(&self, specs: &[ReadSpec]) -> Result<Vec<Vec<u8>>> {
        for spec in specs {
            if spec.len == 0 {
                return Err(Error::InvalidParameter("zero-length read spec".into()));
            }
            self.check_bounds(spec.offset, spec.len)?;
        }
        let bytes = self.bytes.read();
        Ok(specs
            .iter()
            .map(|s| bytes[s.offset as usize..(s.offset + s.len) as usize].to_vec())
            .collect())
    }
}

/// A memory node owning one active region.
#[derive(Debug, Default)]
pub struct MemoryNode {
    next_token: AtomicU64,
    region: RwLock<Option<Arc<Region>>>,
}

impl MemoryNode {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Register a zero-initialized region of `capacity` bytes, replacing any
    /// previous registration. Returns the registration token.
    pub fn register(&self, capacity: u64) -> Result<u64> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("capacity must be positive".into()));
        }
        let token = self.next_token.fetch_add(1, Ordering::Relaxed) + 1;
        let region = Arc::new(Region {
            token,
            bytes: RwLock::new(vec![0u8; capacity as usize]),
            capacity,
        });
        *self.region.write() = Some(region);
        Ok(token)
    }

    pub fn region(&self) -> Result<Arc<Region>> {
        self.region.read().clone().ok_or(Error::NoRegion)
    }
}

// ---------------------------------------------------------------------------
// Standalone TCP server
// ---------------------------------------------------------------------------

/// A running memory-node server. Dropping the handle (or calling
/// [`ServerHandle::stop`]) shuts the accept loop down.
#[derive(Debug)]
pub struct ServerHandle {
    addr: std::net::SocketAddr,
    shutdown: Arc<std::sync::atomic::AtomicBool>,
    accept_thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept call.
        let _ = std::net::TcpStream::connect(self.addr);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Bind `address` and serve the node's region over the wire protocol, one
/// thread per connection.
pub fn spawn_server(node: Arc<MemoryNode>, address: &str) -> Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(address)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let flag = Arc::clone(&shutdown);
    let accept_thread = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let node = Arc::clone(&node);
            std::thread::spawn(move || serve_connection(stream, node));
        }
    });
    Ok(ServerHandle {
        addr,
        shutdown,
        accept_thread: Some(accept_thread),
    })
}

fn serve_connection(mut stream: std::net::TcpStream, node: Arc<MemoryNode>) {
    use crate::transport::wire;
    use std::io::Write;

    let _ = stream.set_nodelay(true);
    loop {
        let body = match wire::read_frame(&mut stream) {
            Ok(b) => b,
            Err(_) => return, // peer closed or sent garbage framing
        };
        let reply = match wire::decode_request(&body) {
            Ok(request) => match dispatch(&node, request) {
                Ok(payload) => wire::encode_response(wire::STATUS_OK, &payload),
                Err(err) => wire::encode_response(wire::error_to_status(&err), &[]),
            },
            Err(_) => wire::encode_response(wire::STATUS_BAD_FRAME, &[]),
        };
        if stream.write_all(&reply).is_err() {
            return;
        }
    }
}

fn dispatch(node: &MemoryNode, request: crate::transport::wire::Request) -> Result<Vec<u8>> {
    use crate::transport::wire::Request;
    let region = node.region()?;
    match request {
        Request::Read(spec) => region.read(spec.offset, spec.len),
        Request::Write { offset, data } => {
            region.write(offset, &data)?;
            Ok(Vec::new())
        }
        Request::FetchAdd { offset, delta } => {
            Ok(region.fetch_add(offset, delta)?.to_le_bytes().to_vec())
        }
        Request::Doorbell(specs) => {
            let parts = region.doorbell(&specs)?;
            Ok(parts.concat())
        }
    }
}
