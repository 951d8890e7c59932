//! Classic libpcap file reading and writing (IPv4 only).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use super::{micros_to_secs, secs_to_micros, PacketRecord, Transport};
use crate::error::{Error, Result};

const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const MAGIC_NANOS: u32 = 0xa1b2_3c4d;

const LINKTYPE_ETHERNET: u32 = 1;
const LINKTYPE_RAW: u32 = 101;
const LINKTYPE_IPV4: u32 = 228;

const ETHERTYPE_IPV4: u16 = 0x0800;

/// Ethernet + IPv4 + TCP without options.
pub const MIN_SYNTHETIC_FRAME: u32 = 14 + 20 + 20;

const WRITE_SNAPLEN: u32 = 262_144;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct PcapStats {
    pub frames: u64,
    pub emitted: u64,
    pub skipped_non_ip: u64,
    pub skipped_malformed: u64,
    pub truncated_tail: bool,
}

/// Iterator over the IPv4 packets of a classic pcap stream.
pub struct PcapReader<R> {
    input: R,
    big_endian: bool,
    nanos: bool,
    linktype: u32,
    stats: PcapStats,
    done: bool,
}

pub fn read_pcap(path: impl AsRef<Path>) -> Result<PcapReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    PcapReader::new(BufReader::with_capacity(256 * 1024, file))
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut header = [0u8; 24];
        input
            .read_exact(&mut header)
            .map_err(|_| Error::PcapFormat("file shorter than the 24-byte global header".into()))?;
        let le = u32::from_le_bytes(header[0..4].try_into().unwrap());
        let be = u32::from_be_bytes(header[0..4].try_into().unwrap());
        let (big_endian, nanos) = match (le, be) {
            (MAGIC_MICROS, _) => (false, false),
            (MAGIC_NANOS, _) => (false, true),
            (_, MAGIC_MICROS) => (true, false),
            (_, MAGIC_NANOS) => (true, true),
            _ => {
                return Err(Error::PcapFormat(format!(
                    "bad magic number {:02x?}",
                    &header[0..4]
                )))
            }
        };
        let field = |b: &[u8]| {
            let arr: [u8; 4] = b.try_into().unwrap();
            if big_endian {
                u32::from_be_bytes(arr)
            } else {
                u32::from_le_bytes(arr)
            }
        };
        let linktype = field(&header[20..24]) & 0x0fff_ffff;
        if !matches!(linktype, LINKTYPE_ETHERNET | LINKTYPE_RAW | LINKTYPE_IPV4) {
            return Err(Error::PcapFormat(format!("unsupported link type {linktype}")));
        }
        Ok(PcapReader {
            input,
            big_endian,
            nanos,
            linktype,
            stats: PcapStats::default(),
            done: false,
        })
    }

    pub fn stats(&self) -> PcapStats {
        self.stats
    }

    fn u32_at(&self, b: &[u8]) -> u32 {
        let arr: [u8; 4] = b.try_into().unwrap();
        if self.big_endian {
            u32::from_be_bytes(arr)
        } else {
            u32::from_le_bytes(arr)
        }
    }

    /// Reads exactly `buf.len()` bytes; `Ok(false)` on a clean or partial EOF.
    fn fill(&mut self, buf: &mut [u8]) -> io::Result<(bool, usize)> {
        let mut got = 0;
        while got < buf.len() {
            match self.input.read(&mut buf[got..]) {
                Ok(0) => return Ok((false, got)),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        Ok((true, got))
    }

    fn truncated(&mut self) {
        log::warn!(
            "pcap ends with a truncated record after {} frames",
            self.stats.frames
        );
        self.stats.truncated_tail = true;
        self.done = true;
    }

    fn decode(&self, ts: f64, frame: &[u8], caplen: u32) -> Decoded {
        let ip = match self.linktype {
            LINKTYPE_ETHERNET => {
                if frame.len() < 14 {
                    return Decoded::Malformed;
                }
                if u16::from_be_bytes([frame[12], frame[13]]) != ETHERTYPE_IPV4 {
                    return Decoded::NonIp;
                }
                &frame[14..]
            }
            _ => frame,
        };
        if ip.is_empty() || ip[0] >> 4 != 4 {
            return Decoded::NonIp;
        }
        let ihl = usize::from(ip[0] & 0x0f) * 4;
        if ihl < 20 || ip.len() < ihl {
            return Decoded::Malformed;
        }
        let frag_offset = u16::from_be_bytes([ip[6], ip[7]]) & 0x1fff;
        let transport = match ip[9] {
            6 => Transport::Tcp,
            17 => Transport::Udp,
            1 => Transport::Icmp,
            _ => Transport::Other,
        };
        let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
        let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
        let l4 = &ip[ihl..];
        let (src_port, dst_port) = match transport {
            Transport::Tcp | Transport::Udp if frag_offset == 0 => {
                if l4.len() < 4 {
                    return Decoded::Malformed;
                }
                (
                    u16::from_be_bytes([l4[0], l4[1]]),
                    u16::from_be_bytes([l4[2], l4[3]]),
                )
            }
            _ => (0, 0),
        };
        Decoded::Packet(PacketRecord {
            timestamp: ts,
            src_ip,
            src_port,
            dst_ip,
            dst_port,
            transport,
            size: caplen,
        })
    }
}

enum Decoded {
    Packet(PacketRecord),
    NonIp,
    Malformed,
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PacketRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut frame = Vec::new();
        while !self.done {
            let mut rh = [0u8; 16];
            match self.fill(&mut rh) {
                Ok((true, _)) => {}
                Ok((false, 0)) => {
                    self.done = true;
                    return None;
                }
                Ok((false, _)) => {
                    self.truncated();
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
            let sec = u64::from(self.u32_at(&rh[0..4]));
            let frac = u64::from(self.u32_at(&rh[4..8]));
            let caplen = self.u32_at(&rh[8..12]);
            let micros = if self.nanos { frac / 1000 } else { frac };
            let ts = micros_to_secs(sec * 1_000_000 + micros);

            frame.resize(caplen as usize, 0);
            match self.fill(&mut frame) {
                Ok((true, _)) => {}
                Ok((false, _)) => {
                    self.truncated();
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
            self.stats.frames += 1;
            match self.decode(ts, &frame, caplen) {
                Decoded::Packet(rec) if caplen > 0 => {
                    self.stats.emitted += 1;
                    return Some(Ok(rec));
                }
                Decoded::NonIp => self.stats.skipped_non_ip += 1,
                Decoded::Packet(_) | Decoded::Malformed => self.stats.skipped_malformed += 1,
            }
        }
        None
    }
}

/// Writes records as an Ethernet pcap with synthetic headers.
///
/// Each frame's captured length equals the record size, so reading the file
/// back yields the same records. ICMP and OTHER records carry no ports on
/// the wire.
pub fn write_pcap<'a, I>(records: I, path: impl AsRef<Path>) -> Result<u64>
where
    I: IntoIterator<Item = &'a PacketRecord>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let n = write_pcap_to(records, &mut out)?;
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

pub fn write_pcap_to<'a, I, W>(records: I, out: &mut W) -> Result<u64>
where
    I: IntoIterator<Item = &'a PacketRecord>,
    W: Write,
{
    let mut header = Vec::with_capacity(24);
    header.extend_from_slice(&MAGIC_MICROS.to_le_bytes());
    header.extend_from_slice(&2u16.to_le_bytes());
    header.extend_from_slice(&4u16.to_le_bytes());
    header.extend_from_slice(&0i32.to_le_bytes());
    header.extend_from_slice(&0u32.to_le_bytes());
    header.extend_from_slice(&WRITE_SNAPLEN.to_le_bytes());
    header.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    out.write_all(&header)?;

    let mut frame = Vec::new();
    let mut count = 0;
    for rec in records {
        encode_frame(rec, &mut frame)?;
        let micros = secs_to_micros(rec.timestamp);
        let mut rh = [0u8; 16];
        rh[0..4].copy_from_slice(&((micros / 1_000_000) as u32).to_le_bytes());
        rh[4..8].copy_from_slice(&((micros % 1_000_000) as u32).to_le_bytes());
        rh[8..12].copy_from_slice(&rec.size.to_le_bytes());
        rh[12..16].copy_from_slice(&rec.size.to_le_bytes());
        out.write_all(&rh)?;
        out.write_all(&frame)?;
        count += 1;
    }
    Ok(count)
}

fn encode_frame(rec: &PacketRecord, frame: &mut Vec<u8>) -> Result<()> {
    if rec.size < MIN_SYNTHETIC_FRAME {
        return Err(Error::RecordTooSmall {
            size: rec.size,
            min: MIN_SYNTHETIC_FRAME,
        });
    }
    if rec.size > WRITE_SNAPLEN {
        return Err(Error::Config(format!(
            "record of {} bytes exceeds the snapshot length {WRITE_SNAPLEN}",
            rec.size
        )));
    }
    frame.clear();
    frame.resize(rec.size as usize, 0);
    // ethernet: locally administered MACs derived from the IPs
    frame[0..2].copy_from_slice(&[0x02, 0x00]);
    frame[2..6].copy_from_slice(&rec.dst_ip.octets());
    frame[6..8].copy_from_slice(&[0x02, 0x00]);
    frame[8..12].copy_from_slice(&rec.src_ip.octets());
    frame[12..14].copy_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    let ip = &mut frame[14..];
    let total_len = u16::try_from(rec.size - 14).unwrap_or(u16::MAX);
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&total_len.to_be_bytes());
    ip[6] = 0x40; // don't fragment
    ip[8] = 64;
    ip[9] = rec.transport.ip_protocol();
    ip[12..16].copy_from_slice(&rec.src_ip.octets());
    ip[16..20].copy_from_slice(&rec.dst_ip.octets());
    let checksum = ipv4_checksum(&ip[..20]);
    ip[10..12].copy_from_slice(&checksum.to_be_bytes());

    let l4 = &mut ip[20..];
    match rec.transport {
        Transport::Tcp => {
            l4[0..2].copy_from_slice(&rec.src_port.to_be_bytes());
            l4[2..4].copy_from_slice(&rec.dst_port.to_be_bytes());
            l4[12] = 5 << 4;
            l4[13] = 0x18; // PSH|ACK
            l4[14..16].copy_from_slice(&0xffffu16.to_be_bytes());
        }
        Transport::Udp => {
            l4[0..2].copy_from_slice(&rec.src_port.to_be_bytes());
            l4[2..4].copy_from_slice(&rec.dst_port.to_be_bytes());
            let udp_len = u16::try_from(rec.size - 34).unwrap_or(u16::MAX);
            l4[4..6].copy_from_slice(&udp_len.to_be_bytes());
        }
        Transport::Icmp => l4[0] = 8,
        Transport::Other => {}
    }
    Ok(())
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
