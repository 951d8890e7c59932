//! Gap-based communication segmentation and per-ft aggregation.
//!
//! Packets are grouped per bidirectional conversation; a conversation's
//! current segment closes when the next packet on it arrives `t_comm` or more
//! seconds after the previous one. Segments are then bucketed by
//! `(initiator, responder, seg_size)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::net::Ipv4Addr;
use std::sync::mpsc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::PacketRecord;

pub const DEFAULT_T_COMM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(ip: Ipv4Addr, port: u16) -> Self {
        Endpoint { ip, port }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

/// Direction-free conversation identity; `a <= b` always.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConversationKey {
    a: Endpoint,
    b: Endpoint,
}

impl ConversationKey {
    pub fn new(x: Endpoint, y: Endpoint) -> Self {
        if x <= y {
            ConversationKey { a: x, b: y }
        } else {
            ConversationKey { a: y, b: x }
        }
    }

    pub fn of(rec: &PacketRecord) -> Self {
        Self::new(
            Endpoint::new(rec.src_ip, rec.src_port),
            Endpoint::new(rec.dst_ip, rec.dst_port),
        )
    }

    pub fn endpoints(&self) -> (Endpoint, Endpoint) {
        (self.a, self.b)
    }

    /// The endpoint that is not `e`.
    pub fn peer_of(&self, e: Endpoint) -> Endpoint {
        if e == self.a {
            self.b
        } else {
            self.a
        }
    }

    fn shard(&self, shards: usize) -> usize {
        // FNV-1a over the canonical endpoints
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for e in [self.a, self.b] {
            for byte in e.ip.octets().into_iter().chain(e.port.to_be_bytes()) {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        (h % shards as u64) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunicationSegment {
    pub key: ConversationKey,
    pub start_ts: f64,
    pub end_ts: f64,
    pub seg_size: u64,
    pub initiator: Endpoint,
    pub packet_count: u64,
}

impl CommunicationSegment {
    fn open(rec: &PacketRecord) -> Self {
        CommunicationSegment {
            key: ConversationKey::of(rec),
            start_ts: rec.timestamp,
            end_ts: rec.timestamp,
            seg_size: u64::from(rec.size),
            initiator: Endpoint::new(rec.src_ip, rec.src_port),
            packet_count: 1,
        }
    }

    pub fn responder(&self) -> Endpoint {
        self.key.peer_of(self.initiator)
    }

    pub fn ft_key(&self) -> FtKey {
        let responder = self.responder();
        FtKey {
            src_ip: self.initiator.ip,
            src_port: self.initiator.port,
            dst_ip: responder.ip,
            dst_port: responder.port,
            seg_size: self.seg_size,
        }
    }

    /// One JSON line of the debugging dump.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Dump {
            key: [String; 2],
            start: f64,
            end: f64,
            size: u64,
            initiator: String,
            packets: u64,
        }
        let (a, b) = self.key.endpoints();
        serde_json::to_string(&Dump {
            key: [a.to_string(), b.to_string()],
            start: self.start_ts,
            end: self.end_ts,
            size: self.seg_size,
            initiator: self.initiator.to_string(),
            packets: self.packet_count,
        })
        .expect("segment serialization is infallible")
    }
}

/// Streaming segmenter over a time-ordered packet stream.
pub struct Segmenter {
    t_comm: f64,
    open: HashMap<ConversationKey, CommunicationSegment>,
    last_ts: f64,
}

impl Segmenter {
    pub fn new(t_comm: f64) -> Result<Self> {
        if !(t_comm > 0.0 && t_comm.is_finite()) {
            return Err(Error::Config(format!("t_comm must be > 0, got {t_comm}")));
        }
        Ok(Segmenter {
            t_comm,
            open: HashMap::new(),
            last_ts: f64::NEG_INFINITY,
        })
    }

    /// Feeds one packet; returns the segment it closed, if any.
    pub fn push(&mut self, rec: &PacketRecord) -> Result<Option<CommunicationSegment>> {
        if rec.timestamp < self.last_ts {
            return Err(Error::OutOfOrder {
                ts: rec.timestamp,
                emitted: self.last_ts,
            });
        }
        self.last_ts = rec.timestamp;
        let key = ConversationKey::of(rec);
        match self.open.get_mut(&key) {
            Some(seg) if rec.timestamp - seg.end_ts < self.t_comm => {
                seg.end_ts = rec.timestamp;
                seg.seg_size += u64::from(rec.size);
                seg.packet_count += 1;
                Ok(None)
            }
            Some(seg) => Ok(Some(std::mem::replace(seg, CommunicationSegment::open(rec)))),
            None => {
                self.open.insert(key, CommunicationSegment::open(rec));
                Ok(None)
            }
        }
    }

    /// Closes every open segment, ordered by start time then key.
    pub fn finish(self) -> Vec<CommunicationSegment> {
        let mut rest: Vec<_> = self.open.into_values().collect();
        sort_segments(&mut rest);
        rest
    }
}

fn sort_segments(segs: &mut [CommunicationSegment]) {
    segs.sort_by(|x, y| x.start_ts.total_cmp(&y.start_ts).then(x.key.cmp(&y.key)));
}

/// Splits a time-ordered stream into communication segments, ordered by
/// start time.
pub fn segment_stream<I>(records: I, t_comm: f64) -> Result<Vec<CommunicationSegment>>
where
    I: IntoIterator<Item = PacketRecord>,
{
    let mut segmenter = Segmenter::new(t_comm)?;
    let mut out = Vec::new();
    for rec in records {
        out.extend(segmenter.push(&rec)?);
    }
    out.extend(segmenter.finish());
    sort_segments(&mut out);
    Ok(out)
}

/// `(SrcIP, SrcPort, DstIP, DstPort, SegSize)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FtKey {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub seg_size: u64,
}

impl FtKey {
    pub fn src(&self) -> Endpoint {
        Endpoint::new(self.src_ip, self.src_port)
    }

    pub fn dst(&self) -> Endpoint {
        Endpoint::new(self.dst_ip, self.dst_port)
    }

    pub fn touches_port(&self, port: u16) -> bool {
        self.src_port == port || self.dst_port == port
    }
}

impl fmt::Display for FtKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} [{}B]", self.src(), self.dst(), self.seg_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtStats {
    pub key: FtKey,
    /// Number of segments.
    pub n: u64,
    pub start_times: Vec<f64>,
    /// Start-to-start gaps between consecutive segments; `n - 1` entries.
    pub iat: Vec<f64>,
}

impl FtStats {
    fn from_starts(key: FtKey, mut start_times: Vec<f64>) -> Self {
        start_times.sort_by(f64::total_cmp);
        let iat = start_times.windows(2).map(|w| w[1] - w[0]).collect();
        FtStats {
            key,
            n: start_times.len() as u64,
            start_times,
            iat,
        }
    }

    /// `n * seg_size`.
    pub fn quantity(&self) -> u128 {
        u128::from(self.n) * u128::from(self.key.seg_size)
    }
}

pub type FtMap = BTreeMap<FtKey, FtStats>;

/// Incremental ft bucketing.
#[derive(Debug, Default)]
pub struct FtAggregator {
    starts: HashMap<FtKey, Vec<f64>>,
    segments: u64,
}

impl FtAggregator {
    pub fn add(&mut self, seg: &CommunicationSegment) {
        self.starts.entry(seg.ft_key()).or_default().push(seg.start_ts);
        self.segments += 1;
    }

    pub fn segments(&self) -> u64 {
        self.segments
    }

    /// Disjoint union with another aggregator's buckets (start lists are
    /// concatenated when keys collide).
    pub fn merge(&mut self, other: FtAggregator) {
        self.segments += other.segments;
        for (k, v) in other.starts {
            self.starts.entry(k).or_default().extend(v);
        }
    }

    pub fn finish(self) -> FtMap {
        self.starts
            .into_iter()
            .map(|(k, v)| (k, FtStats::from_starts(k, v)))
            .collect()
    }
}

pub fn aggregate_ft<'a, I>(segments: I) -> FtMap
where
    I: IntoIterator<Item = &'a CommunicationSegment>,
{
    let mut agg = FtAggregator::default();
    for seg in segments {
        agg.add(seg);
    }
    agg.finish()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SegmentationCounts {
    pub packets: u64,
    pub segments: u64,
    pub fts: u64,
}

const SHARD_BATCH: usize = 4096;

/// Segments and aggregates a time-ordered stream, sharding conversations
/// across `shards` worker threads.
///
/// The result does not depend on `shards`: each conversation lives in exactly
/// one shard and ft buckets never span conversations.
pub fn segment_and_aggregate<I>(
    records: I,
    t_comm: f64,
    shards: usize,
    mut on_packet: impl FnMut(u64),
) -> Result<(FtMap, SegmentationCounts)>
where
    I: IntoIterator<Item = Result<PacketRecord>>,
{
    let shards = shards.max(1);
    let mut packets = 0u64;
    let agg = if shards == 1 {
        let mut segmenter = Segmenter::new(t_comm)?;
        let mut agg = FtAggregator::default();
        for rec in records {
            let rec = rec?;
            packets += 1;
            on_packet(packets);
            if let Some(seg) = segmenter.push(&rec)? {
                agg.add(&seg);
            }
        }
        for seg in segmenter.finish() {
            agg.add(&seg);
        }
        agg
    } else {
        Segmenter::new(t_comm)?;
        std::thread::scope(|scope| -> Result<FtAggregator> {
            let mut senders = Vec::with_capacity(shards);
            let mut workers = Vec::with_capacity(shards);
            for _ in 0..shards {
                let (tx, rx) = mpsc::sync_channel::<Vec<PacketRecord>>(16);
                senders.push(tx);
                workers.push(scope.spawn(move || -> Result<FtAggregator> {
                    let mut segmenter = Segmenter::new(t_comm)?;
                    let mut agg = FtAggregator::default();
                    for batch in rx {
                        for rec in &batch {
                            if let Some(seg) = segmenter.push(rec)? {
                                agg.add(&seg);
                            }
                        }
                    }
                    for seg in segmenter.finish() {
                        agg.add(&seg);
                    }
                    Ok(agg)
                }));
            }

            let mut batches: Vec<Vec<PacketRecord>> = vec![Vec::with_capacity(SHARD_BATCH); shards];
            let feed = || -> Result<()> {
                let mut last_ts = f64::NEG_INFINITY;
                for rec in records {
                    let rec = rec?;
                    if rec.timestamp < last_ts {
                        return Err(Error::OutOfOrder {
                            ts: rec.timestamp,
                            emitted: last_ts,
                        });
                    }
                    last_ts = rec.timestamp;
                    packets += 1;
                    on_packet(packets);
                    let s = ConversationKey::of(&rec).shard(shards);
                    batches[s].push(rec);
                    if batches[s].len() >= SHARD_BATCH {
                        let full = std::mem::replace(&mut batches[s], Vec::with_capacity(SHARD_BATCH));
                        // a closed channel means the worker failed; its error surfaces on join
                        let _ = senders[s].send(full);
                    }
                }
                Ok(())
            };
            let fed = feed();
            for (s, batch) in batches.into_iter().enumerate() {
                if !batch.is_empty() {
                    let _ = senders[s].send(batch);
                }
            }
            drop(senders);

            let mut total = FtAggregator::default();
            for w in workers {
                total.merge(w.join().expect("segmentation worker panicked")?);
            }
            fed?;
            Ok(total)
        })?
    };
    let segments = agg.segments();
    let map = agg.finish();
    let counts = SegmentationCounts {
        packets,
        segments,
        fts: map.len() as u64,
    };
    Ok((map, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Transport;

    fn ip(last: u8) -> Ipv4Addr {
        Ipv4Addr::new(10, 0, 0, last)
    }

    fn pkt(ts: f64, src: (u8, u16), dst: (u8, u16), size: u32) -> PacketRecord {
        PacketRecord {
            timestamp: ts,
            src_ip: ip(src.0),
            src_port: src.1,
            dst_ip: ip(dst.0),
            dst_port: dst.1,
            transport: Transport::Tcp,
            size,
        }
    }

    #[test]
    fn gap_splits_into_two_segments() {
        let recs: Vec<_> = [0.0, 0.2, 0.5, 2.0, 2.1]
            .iter()
            .map(|&t| pkt(t, (1, 20000), (2, 51382), 60))
            .collect();
        let segs = segment_stream(recs, 1.0).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!((segs[0].start_ts, segs[0].end_ts, segs[0].packet_count), (0.0, 0.5, 3));
        assert_eq!((segs[1].start_ts, segs[1].end_ts, segs[1].packet_count), (2.0, 2.1, 2));
        assert_eq!(segs[0].seg_size, 180);
    }

    #[test]
    fn gap_equal_to_t_comm_splits() {
        let recs = vec![pkt(0.0, (1, 1), (2, 2), 60), pkt(1.0, (1, 1), (2, 2), 60)];
        assert_eq!(segment_stream(recs, 1.0).unwrap().len(), 2);
    }

    #[test]
    fn single_packet() {
        let segs = segment_stream(vec![pkt(3.0, (1, 1), (2, 2), 99)], 1.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].seg_size, 99);
    }

    #[test]
    fn ack_joins_and_initiator_sets_direction() {
        let recs = vec![
            pkt(0.0, (31, 20000), (1, 51382), 280),
            pkt(0.01, (1, 51382), (31, 20000), 60),
        ];
        let segs = segment_stream(recs, 1.0).unwrap();
        assert_eq!(segs.len(), 1);
        let key = segs[0].ft_key();
        assert_eq!((key.src_ip, key.src_port, key.seg_size), (ip(31), 20000, 340));
        assert_eq!((key.dst_ip, key.dst_port), (ip(1), 51382));
    }

    #[test]
    fn aggregate_counts_and_iat() {
        let recs = vec![pkt(0.0, (1, 1), (2, 2), 100), pkt(10.0, (1, 1), (2, 2), 100)];
        let map = aggregate_ft(&segment_stream(recs, 1.0).unwrap());
        assert_eq!(map.len(), 1);
        let stats = map.values().next().unwrap();
        assert_eq!(stats.n, 2);
        assert_eq!(stats.iat, vec![10.0]);
    }

    #[test]
    fn distinct_sizes_are_distinct_fts() {
        let recs = vec![pkt(0.0, (31, 20000), (1, 51382), 340), pkt(10.0, (31, 20000), (1, 51382), 225)];
        let map = aggregate_ft(&segment_stream(recs, 1.0).unwrap());
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn rejects_non_positive_t_comm() {
        assert!(Segmenter::new(0.0).is_err());
        assert!(Segmenter::new(-1.0).is_err());
    }

    #[test]
    fn sharded_matches_sequential() {
        let mut recs = Vec::new();
        for i in 0..2000u32 {
            let t = f64::from(i) * 0.37;
            let dev = (i % 7) as u8 + 2;
            recs.push(pkt(t, (dev, 20000), (1, 50000 + u16::from(dev)), 200 + (i % 3) * 10));
        }
        let (one, c1) = segment_and_aggregate(recs.iter().copied().map(Ok), 1.0, 1, |_| {}).unwrap();
        for shards in [2, 3, 8] {
            let (many, cn) =
                segment_and_aggregate(recs.iter().copied().map(Ok), 1.0, shards, |_| {}).unwrap();
            assert_eq!(one, many);
            assert_eq!(c1, cn);
        }
    }

    #[test]
    fn sharded_reports_out_of_order() {
        let recs = vec![pkt(5.0, (1, 1), (2, 2), 60), pkt(1.0, (1, 1), (2, 2), 60)];
        assert!(segment_and_aggregate(recs.into_iter().map(Ok), 1.0, 4, |_| {}).is_err());
    }

    #[test]
    fn segment_dump_line() {
        let segs = segment_stream(vec![pkt(1.0, (2, 20000), (1, 5), 60)], 1.0).unwrap();
        assert_eq!(
            segs[0].to_json_line(),
            r#"{"key":["10.0.0.1:5","10.0.0.2:20000"],"start":1.0,"end":1.0,"size":60,"initiator":"10.0.0.2:20000","packets":1}"#
        );
    }
}
