//! Packet ingestion: pcap and JSON-lines readers, service-port filtering and
//! time ordering.

mod filter;
pub mod pcap;
pub mod records;

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use filter::{filter_packets, FilterConfig, FilterCounts, Filtered, DEFAULT_SERVICE_PORTS};
pub use pcap::{read_pcap, write_pcap, PcapReader, PcapStats};
pub use records::{read_records, write_records, RecordReader};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Udp,
    Icmp,
    Other,
}

impl Transport {
    pub fn as_str(self) -> &'static str {
        match self {
            Transport::Tcp => "tcp",
            Transport::Udp => "udp",
            Transport::Icmp => "icmp",
            Transport::Other => "other",
        }
    }

    pub(crate) fn ip_protocol(self) -> u8 {
        match self {
            Transport::Tcp => 6,
            Transport::Udp => 17,
            Transport::Icmp => 1,
            Transport::Other => 255,
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp" => Ok(Transport::Tcp),
            "udp" => Ok(Transport::Udp),
            "icmp" => Ok(Transport::Icmp),
            "other" => Ok(Transport::Other),
            other => Err(format!("unknown transport {other:?}")),
        }
    }
}

/// One captured packet.
///
/// `timestamp` is seconds since the trace epoch with microsecond resolution;
/// `size` is the captured frame length in bytes, framing included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub timestamp: f64,
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub transport: Transport,
    pub size: u32,
}

impl PacketRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(format!("timestamp {} must be finite and >= 0", self.timestamp));
        }
        if self.size == 0 {
            return Err("size must be >= 1".to_string());
        }
        Ok(())
    }

    /// Same packet with every timestamp multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        PacketRecord {
            timestamp: self.timestamp * factor,
            ..*self
        }
    }
}

/// Converts whole microseconds to the canonical seconds representation.
///
/// Every producer of timestamps goes through this so that pcap and JSON
/// round-trips are bit-exact.
pub fn micros_to_secs(micros: u64) -> f64 {
    micros as f64 / 1e6
}

pub fn secs_to_micros(secs: f64) -> u64 {
    (secs * 1e6).round() as u64
}

/// Reorders a nearly sorted stream.
///
/// Records may arrive up to `window` seconds behind the newest timestamp seen
/// so far; anything later than that is an [`Error::OutOfOrder`].
pub struct ReorderBuffer<I> {
    inner: I,
    window: f64,
    heap: std::collections::BinaryHeap<Pending>,
    newest: f64,
    last_emitted: f64,
    seq: u64,
    done: bool,
}

struct Pending {
    rec: PacketRecord,
    seq: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // min-heap on (timestamp, arrival order)
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .rec
            .timestamp
            .total_cmp(&self.rec.timestamp)
            .then(other.seq.cmp(&self.seq))
    }
}

impl<I> ReorderBuffer<I>
where
    I: Iterator<Item = Result<PacketRecord>>,
{
    pub const DEFAULT_WINDOW: f64 = 1.0;

    pub fn new(inner: I, window: f64) -> Self {
        ReorderBuffer {
            inner,
            window,
            heap: Default::default(),
            newest: f64::NEG_INFINITY,
            last_emitted: f64::NEG_INFINITY,
            seq: 0,
            done: false,
        }
    }

    fn pop(&mut self) -> Option<Result<PacketRecord>> {
        let p = self.heap.pop()?;
        self.last_emitted = p.rec.timestamp;
        Some(Ok(p.rec))
    }
}

impl<I> Iterator for ReorderBuffer<I>
where
    I: Iterator<Item = Result<PacketRecord>>,
{
    type Item = Result<PacketRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(top) = self.heap.peek() {
                if self.done || top.rec.timestamp <= self.newest - self.window {
                    return self.pop();
                }
            } else if self.done {
                return None;
            }
            match self.inner.next() {
                None => self.done = true,
                Some(Err(e)) => return Some(Err(e)),
                Some(Ok(rec)) => {
                    if rec.timestamp < self.last_emitted {
                        self.done = true;
                        self.heap.clear();
                        return Some(Err(Error::OutOfOrder {
                            ts: rec.timestamp,
                            emitted: self.last_emitted,
                        }));
                    }
                    self.newest = self.newest.max(rec.timestamp);
                    self.heap.push(Pending { rec, seq: self.seq });
                    self.seq += 1;
                }
            }
        }
    }
}

/// Collects and fully sorts a stream by timestamp (stable).
pub fn sort_all<I>(records: I) -> Result<Vec<PacketRecord>>
where
    I: IntoIterator<Item = Result<PacketRecord>>,
{
    let mut all = records.into_iter().collect::<Result<Vec<_>>>()?;
    all.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(all)
}

/// Time-ordered stream with the default one second reorder window.
pub fn ordered<I>(records: I) -> ReorderBuffer<I::IntoIter>
where
    I: IntoIterator<Item = Result<PacketRecord>>,
{
    ReorderBuffer::new(records.into_iter(), ReorderBuffer::<I::IntoIter>::DEFAULT_WINDOW)
}
